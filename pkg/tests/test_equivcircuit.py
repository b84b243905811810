from __future__ import annotations

import dataclasses
import math
import warnings

import numpy as np
import pytest

from conftest import eom_parameters, squeezer_parameters
from eomnet.couplings import ACBias, DCBias, EMCouplingSpec, MechanicalMode, TransducerSpec
from eomnet.equivcircuit import (
    OpenLoad,
    assemble,
    dense_solve,
    impedance_csv,
    peak_frequency,
    solve_loops,
    susceptibility,
)
from eomnet.errors import MultipleRootsWarning, SidebandGuardViolation, SidebandOutOfRange
from eomnet.netlist import Element, Netlist
from helpers import random_netlist, serial_netlist

TWO_PI = 2 * math.pi


def _serial_z(net, w):
    """Closed-form impedance of the serial helper circuit."""
    L = net.element("Ltank").value
    r = net.element("Rloss").value + net.element("Ttx").value
    return -1j * w * L + r


def _red_detuned_squeezer(r_loss=0.0):
    spec, _ = squeezer_parameters()
    em = spec.em
    omega_lc = TWO_PI * 1e9
    L = 100 * 50 / omega_lc
    circuit0 = assemble(spec, serial_netlist(L, r_loss, 50.0))
    w_q = circuit0.elements.omega_mQ
    em = dataclasses.replace(em, bias=ACBias(em.bias.charge, omega_lc - w_q))
    spec = dataclasses.replace(spec, em=em)
    return spec, serial_netlist(L, r_loss, 50.0)


def _random_spec(rng, net, ac: bool):
    """Transducer with O(1) loaded back-action on an arbitrary netlist."""
    c_bar = 10 ** rng.uniform(-10, -8)
    m = 1e-12
    q0 = 1e-12
    G = 10 ** rng.uniform(4, 6)
    dc_dx = -G * c_bar**2 / q0
    if ac:
        bias = ACBias(q0, 10 ** rng.uniform(8.5, 9.5))
    else:
        bias = DCBias(q0)
    mech = MechanicalMode(m, 10 ** rng.uniform(6, 7), 10 ** rng.uniform(1, 4), 1.0)
    return TransducerSpec(mech, EMCouplingSpec(c_bar, dc_dx, 0.0, bias))


# -- susceptibility ---------------------------------------------------------


def test_upper_susceptibility_on_resonance_is_minus_i_q():
    spec, net = _red_detuned_squeezer()
    circuit = assemble(spec, net)
    omega = TWO_PI * 1e9 - spec.em.carrier
    q_up = circuit.susceptibility(0, [omega])[0]
    assert q_up == pytest.approx(-100j, rel=1e-9)


def test_susceptibility_open_and_short_limits():
    x = 1.0 / (-1j * 1e6 * 1e-9)
    assert susceptibility(np.inf + 0j, x) == 0
    assert susceptibility(0.0, x) == pytest.approx(-1.0)


def test_open_load_leaves_fixed_charge_mechanics(squeezer):
    spec, _ = squeezer
    circuit = assemble(spec, None, electrical_load=OpenLoad())
    el = circuit.elements
    w = np.linspace(0.5, 1.5, 7) * el.omega_mQ
    expected = -1j * w * el.L_m + el.R_m + (1 / el.C_m + 2 / spec.em.c_bar) / (-1j * w)
    assert np.allclose(circuit.loaded_impedance(w), expected, rtol=1e-12, atol=1e-12 * np.abs(expected).max())
    assert peak_frequency(circuit).omega_m == pytest.approx(el.omega_mQ, rel=1e-12)


# -- loaded impedance ---------------------------------------------------------


def test_loaded_impedance_two_term_parallel_form():
    spec, net = _red_detuned_squeezer(r_loss=3.0)
    circuit = assemble(spec, net)
    el = circuit.elements
    rng = np.random.default_rng(5)
    w = rng.uniform(0.5, 1.5, 20) * el.omega_mQ
    wd, c = spec.em.carrier, spec.em.c_bar
    z_up = (wd + w) / w * _serial_z(net, wd + w)
    z_dn = -(wd - w) / w * np.conj(_serial_z(net, wd - w))
    delta = 1 / (-1j * w * c + 1 / z_up) + 1 / (-1j * w * c + 1 / z_dn)
    expected = circuit.mechanical_impedance(w) + delta
    assert np.allclose(circuit.loaded_impedance(w), expected, rtol=1e-12, atol=0)


@pytest.mark.parametrize("maker", [squeezer_parameters, eom_parameters])
def test_loaded_impedance_conjugation_symmetry(maker):
    spec, net = maker()
    circuit = assemble(spec, net)
    w = np.random.default_rng(2).uniform(0.3, 2.0, 15) * circuit.elements.omega_mQ
    pos = circuit.loaded_impedance(w)
    neg = circuit.loaded_impedance(-w)
    assert np.allclose(neg, np.conj(pos), rtol=1e-12)


def test_loaded_impedance_conjugation_symmetry_dc_random():
    rng = np.random.default_rng(11)
    for _ in range(10):
        net = random_netlist(rng)
        circuit = assemble(_random_spec(rng, net, ac=False), net)
        w = rng.uniform(1e5, 1e8, 5)
        assert np.allclose(circuit.loaded_impedance(-w), np.conj(circuit.loaded_impedance(w)), rtol=1e-12)


def test_lower_sideband_resistance_is_negative():
    rng = np.random.default_rng(3)
    for _ in range(20):
        net = random_netlist(rng)
        circuit = assemble(_random_spec(rng, net, ac=True), net)
        w = rng.uniform(1e-4, 0.1, 5) * circuit.spec.em.carrier
        lower = circuit.samples(w)[1]
        assert lower.branch.sign == -1
        assert np.all(lower.z_side.real <= 1e-12 * np.abs(lower.z_side))


def test_capacitor_keeps_its_form_in_both_sidebands():
    L, c_x = 1e-8, 2e-12
    with_cap = Netlist(
        (Element("L", "L1", "1", "2", L), Element("C", "Cx", "2", "3", c_x), Element("T", "T1", "3", "0", 50.0)),
        ("1", "0"), "0",
    )
    without = Netlist((Element("L", "L1", "1", "2", L), Element("T", "T1", "2", "0", 50.0)), ("1", "0"), "0")
    spec, _ = squeezer_parameters()
    a = assemble(spec, with_cap)
    b = assemble(spec, without)
    w = np.linspace(0.01, 0.09, 9) * spec.em.carrier
    for sa, sb in zip(a.samples(w), b.samples(w)):
        assert np.allclose(sa.z_side - sb.z_side, 1 / (-1j * w * c_x), rtol=1e-9)


# -- loop currents ---------------------------------------------------------------


@pytest.mark.parametrize("ac", [True, False])
def test_composition_matches_dense_solve(ac):
    rng = np.random.default_rng(17 if ac else 19)
    for _ in range(15):
        net = random_netlist(rng)
        circuit = assemble(_random_spec(rng, net, ac), net)
        w = rng.uniform(0.2, 2.0, 4) * circuit.elements.omega_mQ
        if ac:
            w = np.minimum(w, 0.09 * circuit.spec.em.carrier)
        samples = circuit.samples(w)
        B = len(samples)
        mech = rng.normal(size=(4, 3)) + 1j * rng.normal(size=(4, 3))
        side = rng.normal(size=(4, B, 3)) + 1j * rng.normal(size=(4, B, 3))
        sol = solve_loops(circuit, samples, w, mech, side)
        i_m, i_s = dense_solve(circuit, samples, w, mech, side)
        assert np.allclose(sol.mech_current, i_m, rtol=1e-10, atol=0)
        assert np.allclose(sol.branch_currents, i_s, rtol=1e-10, atol=1e-10 * np.abs(i_s).max())
        assert np.all(sol.residual < 1e-10)


def test_mechanical_source_only_drives_back_action():
    spec, net = squeezer_parameters()
    circuit = assemble(spec, net)
    w = np.array([0.97, 1.0, 1.02]) * circuit.elements.omega_mQ
    samples = circuit.samples(w)
    mech = np.ones((3, 1), complex)
    side = np.zeros((3, 2, 1), complex)
    sol = solve_loops(circuit, samples, w, mech, side)
    i_m, i_s = dense_solve(circuit, samples, w, mech, side)
    assert np.allclose(sol.branch_currents, i_s, rtol=1e-12)
    for k, smp in enumerate(samples):
        assert np.allclose(sol.branch_currents[:, k, 0], smp.susceptibility * sol.mech_current[:, 0], rtol=1e-12)


def test_serial_sideband_currents_closed_form():
    spec, net = _red_detuned_squeezer(r_loss=2.0)
    circuit = assemble(spec, net)
    el = circuit.elements
    rng = np.random.default_rng(23)
    w = rng.uniform(0.9, 1.1, 20) * el.omega_mQ
    wd, c = spec.em.carrier, spec.em.c_bar
    x = 1 / (-1j * w * c)
    z_up = (wd + w) / w * _serial_z(net, wd + w)
    z_dn = -(wd - w) / w * np.conj(_serial_z(net, wd - w))
    q_up, q_dn = -x / (z_up + x), -x / (z_dn + x)
    v_up = rng.normal(size=20) + 1j * rng.normal(size=20)
    v_dn = rng.normal(size=20) + 1j * rng.normal(size=20)
    v_m = rng.normal(size=20) + 1j * rng.normal(size=20)
    z_eff = (-1j * w * el.L_m + el.R_m + 1 / (-1j * w * el.C_m_prime)
             + (1 + q_up) * x + (1 + q_dn) * x)
    i_m = (2 * v_m + q_up * v_up + q_dn * v_dn) / z_eff
    i_up = v_up / (z_up + x) + q_up * i_m
    i_dn = v_dn / (z_dn + x) + q_dn * i_m
    sol = solve_loops(circuit, circuit.samples(w), w, (2 * v_m)[:, None],
                      np.stack([v_up, v_dn], axis=1)[:, :, None])
    assert np.allclose(sol.mech_current[:, 0], i_m, rtol=1e-10)
    assert np.allclose(sol.branch_currents[:, 0, 0], i_up, rtol=1e-10)
    assert np.allclose(sol.branch_currents[:, 1, 0], i_dn, rtol=1e-10)
    # lab-frame currents: upper scaled by (w_d + W)/W, lower by -(w_d - W)/W
    assert np.allclose(sol.lab_currents[:, 0, 0], (wd + w) / w * i_up, rtol=1e-12)
    assert np.allclose(sol.lab_currents[:, 1, 0], -(wd - w) / w * i_dn, rtol=1e-12)


def test_mechanical_current_tail_below_40db():
    spec, net = squeezer_parameters()
    circuit = assemble(spec, net)
    pk = peak_frequency(circuit)
    w = np.array([pk.omega_m, pk.omega_m + 100 * pk.gamma_meff])
    sol = solve_loops(circuit, circuit.samples(w), w, np.ones((2, 1)), np.zeros((2, 2, 1)))
    ratio = abs(sol.mech_current[1, 0]) / abs(sol.mech_current[0, 0])
    assert 20 * math.log10(ratio) < -40


# -- resonance -------------------------------------------------------------------


def test_peak_is_zero_of_reactance(squeezer):
    spec, net = squeezer
    circuit = assemble(spec, net)
    pk = peak_frequency(circuit)
    z = circuit.loaded_impedance([pk.omega_m])[0]
    assert abs(z.imag) < 1e-9 * abs(circuit.elements.omega_mQ * circuit.elements.L_m)
    assert pk.R_meff == pytest.approx(z.real)
    assert pk.gamma_meff == pytest.approx(pk.R_meff / circuit.elements.L_m)


def test_linewidth_three_term_closed_form(eom):
    spec, net = eom
    circuit = assemble(spec, net)
    pk = peak_frequency(circuit)
    el, om = circuit.elements, spec.om
    q_lc = 1000.0
    omega_lc = TWO_PI * 1e9
    Om = pk.omega_m
    suppression = 1 / (1 + (4 * q_lc * Om / omega_lc) ** 2)
    r = el.R_m + om.q_cav / (Om * el.C_opt) + q_lc / (Om * spec.em.c_bar) * (1 - suppression)
    assert pk.gamma_meff == pytest.approx(r / el.L_m, rel=5e-3)


def test_normal_mode_splitting_warns():
    spec, net = eom_parameters(c_em=5e5, c_om=1.0)
    circuit = assemble(spec, net)
    with pytest.warns(MultipleRootsWarning):
        pk = peak_frequency(circuit)
    assert len(pk.roots) > 1


def test_single_root_does_not_warn(squeezer):
    circuit = assemble(*squeezer)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        peak_frequency(circuit)


# -- frequency guards -------------------------------------------------------------


def test_guard_and_carrier_limits(squeezer):
    spec, net = squeezer
    circuit = assemble(spec, net)
    wd = spec.em.carrier
    with pytest.raises(SidebandGuardViolation):
        circuit.samples([0.2 * wd])
    free = assemble(spec, net, override_guard=True)
    assert free.samples([0.2 * wd])
    with pytest.raises(SidebandOutOfRange):
        free.samples([wd])
    with pytest.raises(ValueError):
        circuit.samples([0.0])


def test_impedance_csv_is_deterministic():
    text = impedance_csv([1.0, 2.0], [1 + 2j, 3 - 4j])
    assert text == impedance_csv([1.0, 2.0], [1 + 2j, 3 - 4j])
    lines = text.splitlines()
    assert lines[0].startswith("#")
    assert lines[2] == "1.000000000000e+00,1.000000000000e+00,2.000000000000e+00"
