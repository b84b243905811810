from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.constants import hbar, k as K_B

from conftest import eom_parameters, squeezer_parameters
from eomnet.equivcircuit import assemble, peak_frequency
from eomnet.errors import UnpairedChannels, ZeroTransfer
from eomnet.noise import (
    bose_einstein,
    homodyne_spectrum,
    johnson_voltage_psd,
    occupations,
    readout_pair,
    transfer_and_noise,
)
from eomnet.scattering import PortChannel, ScatteringMatrix, bosonic_smatrix, smatrix
from helpers import added_noise_closed_form

TWO_PI = 2 * math.pi


def _identity_matrix(n_pairs=2, temperature=0.0):
    chans = []
    for k in range(n_pairs):
        for sign in (+1, -1):
            chans.append(PortChannel(f"p{k}", "electrical", 1e9, sign, 50.0, temperature, k, 0))
    w = np.linspace(1e6, 5e6, 5)
    eye = np.broadcast_to(np.eye(len(chans), dtype=complex), (len(w), len(chans), len(chans))).copy()
    return bosonic_smatrix(ScatteringMatrix(w, tuple(chans), eye))


# -- occupations --------------------------------------------------------------


def test_bose_einstein_values():
    assert bose_einstein(1e9, 0.0) == 0.0
    w = K_B * 1.0 / hbar
    assert bose_einstein(w, 1.0) == pytest.approx(1 / (math.e - 1), rel=1e-12)
    assert bose_einstein(TWO_PI * 1e6, 4.0) == pytest.approx(8.3e4, rel=5e-3)


def test_bose_einstein_rejects_bad_input():
    with pytest.raises(ValueError):
        bose_einstein(0.0, 1.0)
    with pytest.raises(ValueError):
        bose_einstein(1.0, -1.0)


@given(st.floats(1e3, 1e12), st.floats(1e-3, 1e3))
def test_bose_einstein_positive_and_classical_bound(w, t):
    n = bose_einstein(w, t)
    assert n >= 0
    assert n <= K_B * t / (hbar * w) + 1e-12


def test_johnson_psd_classical_limit():
    psd = johnson_voltage_psd(50.0, 1e3, 300.0)
    assert psd == pytest.approx(50.0 * K_B * 300.0 / 2, rel=1e-6)


def test_occupations_use_lab_frequency(squeezer):
    spec, net = squeezer
    elements = tuple(dataclasses.replace(e, temperature=1.0) if e.name == "Ttx" else e for e in net.elements)
    hot = dataclasses.replace(net, elements=elements)
    sm = smatrix(assemble(spec, hot), [TWO_PI * 1e6])
    n = occupations(sm)[0]
    wd = spec.em.carrier
    assert n[sm.index("Ttx+")] == pytest.approx(bose_einstein(wd + TWO_PI * 1e6, 1.0))
    assert n[sm.index("Ttx-")] == pytest.approx(bose_einstein(wd - TWO_PI * 1e6, 1.0))
    assert n[sm.index("mech")] == pytest.approx(bose_einstein(TWO_PI * 1e6, 4.0))


# -- homodyne -----------------------------------------------------------------


@given(st.floats(-10, 10))
def test_identity_vacuum_is_shot_noise(theta):
    sm = _identity_matrix()
    assert np.allclose(homodyne_spectrum(sm, "p0", theta), 1.0, atol=1e-14)


def test_homodyne_pi_periodic_and_nonnegative(squeezer):
    sm = smatrix(assemble(*squeezer), np.linspace(0.95, 1.05, 51) * TWO_PI * 1e6)
    for theta in np.linspace(0, math.pi, 7):
        a = homodyne_spectrum(sm, "Ttx", theta)
        b = homodyne_spectrum(sm, "Ttx", theta + math.pi)
        assert np.allclose(a, b, rtol=1e-12)
        assert np.all(a >= 0)


def test_homodyne_needs_correlations_for_squeezing(squeezer):
    spec, net = squeezer
    em = dataclasses.replace(spec.em, dc_dx=0.0)
    circuit = assemble(dataclasses.replace(spec, em=em), net, allow_decoupled=True)
    sm = smatrix(circuit, np.linspace(0.9, 1.1, 21) * TWO_PI * 1e6)
    for theta in np.linspace(0, math.pi, 9):
        assert np.all(homodyne_spectrum(sm, "Ttx", theta) >= 1 - 1e-12)


def _brute_force_spectrum(S_up, S_dn, theta, n, creation):
    """Second moments of X = A + A^dag from explicit ladder-operator algebra."""
    C = len(n)
    # basis: index 2k -> a_k, 2k+1 -> a_k^dag
    corr = np.zeros((2 * C, 2 * C))
    for k in range(C):
        corr[2 * k + 1, 2 * k] = n[k]  # <a^dag a>
        corr[2 * k, 2 * k + 1] = n[k] + 1  # <a a^dag>
    def ladder(coeffs):
        vec = np.zeros(2 * C, complex)
        for k, c in enumerate(coeffs):
            vec[2 * k + (1 if creation[k] else 0)] += c
        return vec
    def adjoint(vec):
        out = np.zeros_like(vec)
        out[0::2], out[1::2] = np.conj(vec[1::2]), np.conj(vec[0::2])
        return out
    A = ladder(np.exp(-1j * theta) / 2 * S_up + np.exp(1j * theta) / 2 * S_dn)
    Ad = adjoint(A)
    total = 0j
    for i in range(2 * C):
        for j in range(2 * C):
            total += A[i] * Ad[j] * corr[i, j] + Ad[i] * A[j] * corr[i, j]
    return total.real / 0.5


def test_covariance_propagation_matches_brute_force():
    rng = np.random.default_rng(12)
    C = 5
    chans = (
        PortChannel("m", "mechanical", 0.0, +1, 1.0, 0.3),
        PortChannel("a", "electrical", 1e9, +1, 50.0, 0.5, 0, 0),
        PortChannel("a", "electrical", 1e9, -1, 50.0, 0.5, 1, 0),
        PortChannel("b", "electrical", 1e9, +1, 50.0, 0.1, 0, 1),
        PortChannel("b", "electrical", 1e9, -1, 50.0, 0.1, 1, 1),
    )
    S = rng.normal(size=(1, C, C)) + 1j * rng.normal(size=(1, C, C))
    sm = ScatteringMatrix(np.array([1e6]), chans, S, S)
    n = rng.uniform(0, 3, size=(1, C))
    creation = [c.is_creation for c in chans]
    for theta in rng.uniform(0, math.pi, 4):
        fast = homodyne_spectrum(sm, "a", theta, occupation=n)[0]
        slow = _brute_force_spectrum(S[0, 1], S[0, 2], theta, n[0], creation)
        assert fast == pytest.approx(slow, rel=1e-12)


def test_unpaired_readout():
    chans = (PortChannel("x", "electrical", 0.0, +1, 50.0, 0.0, 0, 0),)
    sm = ScatteringMatrix(np.array([1.0]), chans, np.ones((1, 1, 1), complex), np.ones((1, 1, 1), complex))
    with pytest.raises(UnpairedChannels):
        readout_pair(sm, "x")


# -- transfer and added noise -----------------------------------------------------


def test_transfer_and_noise_weights():
    chans = (
        PortChannel("a", "electrical", 1e9, +1, 50.0, 0.0, 0, 0),
        PortChannel("a", "electrical", 1e9, -1, 50.0, 0.0, 1, 0),
        PortChannel("b", "electrical", 1e9, +1, 50.0, 0.0, 0, 1),
    )
    S = np.array([[[0.0, 0, 0], [0, 0, 0], [0.6, 0.3, 0.2]]], complex)
    sm = ScatteringMatrix(np.array([1e6]), chans, S, S)
    n = np.array([[0.0, 2.0, 5.0]])
    eta, N = transfer_and_noise(sm, "a+", "b+", occupation=n)
    assert eta[0] == pytest.approx(0.36)
    assert N[0] == pytest.approx((0.09 * 3 + 0.04 * 5) / 0.36)


def test_zero_transfer_is_reported():
    sm = _identity_matrix()
    with pytest.raises(ZeroTransfer):
        transfer_and_noise(sm, "p0+", "p1+")


def test_zero_temperature_leaves_lower_sideband_vacuum():
    spec, net = eom_parameters(t_mech=0.0, t_elec=0.0, kappa=TWO_PI * 1e5)
    circuit = assemble(spec, net)
    pk = peak_frequency(circuit)
    _, N = transfer_and_noise(smatrix(circuit, [pk.omega_m]), "Ttx+", "opt.ext+")
    expected = added_noise_closed_form(spec, net, circuit, pk.omega_m, zero_temperature=True)
    assert N[0] == pytest.approx(expected, rel=0.02)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 2.0), st.floats(0.0, 0.5))
def test_added_noise_nonnegative(t_mech, t_elec):
    spec, net = eom_parameters(t_mech=t_mech, t_elec=t_elec)
    circuit = assemble(spec, net)
    w = np.linspace(0.999, 1.001, 5) * peak_frequency(circuit).omega_m
    _, N = transfer_and_noise(smatrix(circuit, w), "Ttx+", "opt.ext+")
    assert np.all(N >= 0)


def test_mechanical_noise_term_falls_with_cooperativity():
    values = []
    for c_em in (10.0, 30.0, 100.0, 300.0):
        spec, net = eom_parameters(c_em=c_em, c_om=c_em, t_elec=0.0, t_mech=1.0)
        circuit = assemble(spec, net)
        pk = peak_frequency(circuit)
        _, N = transfer_and_noise(smatrix(circuit, [pk.omega_m]), "Ttx+", "opt.ext+")
        values.append(N[0])
    assert all(a >= b for a, b in zip(values, values[1:]))
