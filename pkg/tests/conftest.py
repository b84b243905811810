from __future__ import annotations

import math

import pytest

from eomnet.couplings import (
    ACBias,
    DCBias,
    EMCouplingSpec,
    MechanicalMode,
    OMCouplingSpec,
    TransducerSpec,
    mechanical_frequencies,
)
from helpers import serial_netlist

TWO_PI = 2 * math.pi


def squeezer_parameters():
    """Squeezing example: serial RLC at 1 GHz, 1 MHz mechanics, red-detuned drive."""
    z_tx, q_lc, f_lc = 50.0, 100.0, 1e9
    omega_lc = TWO_PI * f_lc
    inductance = q_lc * z_tx / omega_lc
    c_bar = 1.0 / (omega_lc**2 * inductance)
    mass = 1e-12
    G = 3.2e11 * math.sqrt(mass)
    q0 = 1e-12
    dc_dx = -G * c_bar**2 / q0
    mech = MechanicalMode(mass, TWO_PI * 1e6, TWO_PI * 0.1, 4.0)
    em = EMCouplingSpec(c_bar, dc_dx, 0.0, ACBias(q0, omega_lc - TWO_PI * 5e6))
    net = serial_netlist(inductance, 0.0, z_tx, 0.0, 0.0)
    return TransducerSpec(mech, em), net


@pytest.fixture
def squeezer():
    return squeezer_parameters()


def eom_parameters(
    *,
    c_em: float = 100.0,
    c_om: float = 100.0,
    q_lc: float = 1000.0,
    eta_el: float = 0.8,
    eta_opt: float = 0.9,
    kappa: float = TWO_PI * 1e6,
    f_m: float = 10e6,
    gamma_m0: float = TWO_PI * 10.0,
    t_mech: float = 0.1,
    t_elec: float = 0.05,
    detuning_sign: int = -1,
):
    """Electro-optomechanical transducer in the doubly resolved, high-Q regime.

    Both drives sit one fixed-charge mechanical frequency from their cavity
    (red detuned for ``detuning_sign = -1``). Coupling strengths are chosen
    to hit the requested cooperativities.
    """
    z_tx = 50.0
    r_lc = z_tx * (1 - eta_el) / eta_el
    omega_lc = TWO_PI * 1e9
    inductance = q_lc * (r_lc + z_tx) / omega_lc
    c_bar = 1.0 / (omega_lc**2 * inductance)
    mass = 1e-15
    omega_m = TWO_PI * f_m
    G = math.sqrt(gamma_m0 * mass * c_em * omega_m * c_bar / q_lc) / c_bar
    q0 = 1e-12
    dc_dx = -G * c_bar**2 / q0
    mech = MechanicalMode(mass, omega_m, gamma_m0, t_mech)
    em0 = EMCouplingSpec(c_bar, dc_dx, 0.0, ACBias(q0, omega_lc / 2))
    _, omega_mq = mechanical_frequencies(mech, em0)
    em = EMCouplingSpec(c_bar, dc_dx, 0.0, ACBias(q0, omega_lc + detuning_sign * omega_mq))
    omega_cav = TWO_PI * 200e12
    g_rate = math.sqrt(c_om * gamma_m0 * kappa / 4)
    om = OMCouplingSpec(
        omega_cav, kappa * (1 - eta_opt), kappa * eta_opt, omega_cav + detuning_sign * omega_mq,
        g_rate * math.sqrt(4 * mass * omega_mq),
    )
    net = serial_netlist(inductance, r_lc, z_tx, t_elec, t_elec)
    return TransducerSpec(mech, em, om), net


@pytest.fixture
def eom():
    return eom_parameters()


def desk_dc_parameters(*, coupling: float = 0.3, gamma_m0: float = 0.02):
    """Unit-scale DC-biased serial RLC (resonance 2 rad/s) and a 1 rad/s mechanical mode."""
    c_bar, q0 = 0.25, 1.0
    mech = MechanicalMode(1.0, 1.0, gamma_m0, 0.0)
    em = EMCouplingSpec(c_bar, -coupling * c_bar**2 / q0, 0.0, DCBias(q0))
    return TransducerSpec(mech, em), serial_netlist(1.0, 0.5, 1.5)


def desk_ac_parameters(
    *,
    omega_d: float = 1100.0,
    c_em: float = 20.0,
    gamma_m0: float = 0.01,
    detuning_sign: int = -1,
    optics: bool = False,
    c_om: float = 10.0,
):
    """Unit-scale AC-biased transducer with carriers about a thousand times the mechanics.

    The tank (loaded linewidth 1 rad/s) sits one fixed-charge mechanical
    frequency from the drive; with ``optics`` a cavity is driven at
    ``2 omega_d`` with the same detuning, so every carrier is an integer
    multiple of ``omega_d / N``.
    """
    c_bar, q0, mass = 1e-6, 1.0, 1.0
    r_loss, z_tx = 0.2, 0.8
    mech = MechanicalMode(mass, 1.0, gamma_m0, 0.0)

    def coupling(G):
        return EMCouplingSpec(c_bar, -G * c_bar**2 / q0, 0.0, ACBias(q0, omega_d))

    omega_lc, omega_mq = omega_d + 1.0, 1.0
    for _ in range(4):
        inductance = 1 / (omega_lc**2 * c_bar)
        q_lc = omega_lc * inductance / (r_loss + z_tx)
        G = math.sqrt(gamma_m0 * mass * c_em * c_bar / q_lc) / c_bar
        _, omega_mq = mechanical_frequencies(mech, coupling(G))
        omega_lc = omega_d - detuning_sign * omega_mq
    om = None
    if optics:
        kappa = 1.0
        omega_l = 2 * omega_d
        g_rate = math.sqrt(c_om * gamma_m0 * kappa / 4)
        om = OMCouplingSpec(
            omega_l - detuning_sign * omega_mq, 0.2 * kappa, 0.8 * kappa, omega_l,
            g_rate * math.sqrt(4 * mass * omega_mq),
        )
    return TransducerSpec(mech, coupling(G), om), serial_netlist(inductance, r_loss, z_tx)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdict lines at the end of the run."""
    module = __import__("sys").modules.get("test_acceptance")
    lines = getattr(module, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
