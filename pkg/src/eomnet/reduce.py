"""Adiabatic elimination of the electrical and optical loops.

When the mechanical linewidth is narrow compared with the bandwidth of the
loads, every sideband loop is frozen at one frequency (the fixed-charge
mechanical frequency by default). What remains is a single mechanical loop
with a shifted capacitance, one resistor per sideband (positive for upper,
negative for lower sidebands) and a Thevenin source per subsystem.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.constants import hbar

from .couplings import om_rates
from .equivcircuit import BranchSample, EquivalentCircuit, peak_frequency
from .errors import AdiabaticityViolated, AdiabaticityWarning
from .scattering import ScatteringMatrix, bosonic_smatrix, channels, unit_excitations

ADIABATIC_MARGIN = 0.1


def lorentzian(omega, omega_cav: float, kappa: float):
    """Cavity response ``(k/2) / (-i (w - w_cav) + k/2)``."""
    return (kappa / 2) / (-1j * (np.asarray(omega) - omega_cav) + kappa / 2)


def effective_noise_coefficients(eta_opt: float, strength: float, phase: float) -> tuple[complex, complex]:
    """Coefficients of the external and internal optical inputs in the effective noise operator."""
    rot = strength * np.exp(1j * phase)
    return 1 - 2 * eta_opt * rot, -2 * math.sqrt(eta_opt * (1 - eta_opt)) * rot


def em_resistance_formula(circuit: EquivalentCircuit, omega_ref: float) -> tuple[float, float]:
    """``(w_d / w_ref) Re[(-i w C + 1/Z(w))^-1]`` at ``w = w_d +- w_ref``.

    Drops corrections of order ``w_ref / w_d`` relative to the definition
    through the susceptibilities used by :func:`reduce`; kept as a
    cross-check and for reports.
    """
    em = circuit.spec.em
    br = next(b for b in circuit.branches if b.subsystem == "electrical")
    out = []
    for sign in (+1, -1):
        w = em.carrier + sign * omega_ref
        z = br.load.response(np.array([w])).z[0]
        out.append(em.carrier / omega_ref * (1.0 / (-1j * w * em.c_bar + 1.0 / z)).real)
    return out[0], out[1]


@dataclass(frozen=True)
class ReducedCircuit:
    """Single-loop mechanical model; per-branch arrays follow ``circuit.branches``.

    Attributes:
        resistances: stored non-negative; upper sidebands add, lower subtract.
        susceptibilities: frozen loop susceptibilities, used for the sources
            ``2 V_sub = sum_s Q_s V_s`` of each eliminated subsystem.
        lorentz: (L+, L-, theta+, theta-) of the optical cavity, or None.
        stokes_lorentz: Lorentzian-regime optical rates (gamma+, gamma-), or None.
    """

    circuit: EquivalentCircuit
    omega_eval: float
    C_tilde: float
    omega_m: float
    R_meff: float
    gamma_meff: float
    resistances: np.ndarray
    rates: np.ndarray
    susceptibilities: np.ndarray
    factors: np.ndarray
    lorentz: tuple[float, float, float, float] | None
    stokes_lorentz: tuple[float, float] | None
    load_linewidth: float

    def resistance(self, subsystem: str, sign: int) -> float:
        for k, br in enumerate(self.circuit.branches):
            if br.subsystem == subsystem and br.sign == sign:
                return float(self.resistances[k])
        return 0.0

    def impedance(self, omega) -> np.ndarray:
        """``-i W L_m + R_m,eff + 1 / (-i W C~_m)``."""
        s = -1j * np.asarray(omega, dtype=float)
        return s * self.circuit.elements.L_m + self.R_meff + 1.0 / (s * self.C_tilde)

    def thevenin(self, branch_sources: np.ndarray) -> dict[str, np.ndarray]:
        """Doubled Thevenin voltage per subsystem from the sideband sources (N, B, K)."""
        out: dict[str, np.ndarray] = {}
        for k, br in enumerate(self.circuit.branches):
            term = self.susceptibilities[k] * branch_sources[:, k, :]
            out[br.subsystem] = out.get(br.subsystem, 0) + term
        return out


def _linewidth_scale(circuit: EquivalentCircuit, samples: list[BranchSample], omega: float) -> float:
    """Frequency scale over which the eliminated loads vary.

    Optical loops use the cavity linewidth. Electrical loops use
    ``2 |Q / Q'|`` at the evaluation frequency, which equals the loaded
    linewidth for a resonant tank and is large for far-detuned sidebands.
    """
    scales = []
    if circuit.spec.om is not None:
        scales.append(circuit.spec.om.kappa)
    h = 1e-6 * omega
    plus = circuit.samples([omega + h])
    minus = circuit.samples([omega - h])
    for k, smp in enumerate(samples):
        if smp.branch.subsystem != "electrical" or smp.branch.load.is_open:
            continue
        q = smp.susceptibility[0]
        dq = (plus[k].susceptibility[0] - minus[k].susceptibility[0]) / (2 * h)
        if dq != 0:
            scales.append(2 * abs(q / dq))
    return min(scales) if scales else math.inf


def reduce(circuit: EquivalentCircuit, *, at: str = "omega_mQ", check: bool = True) -> ReducedCircuit:
    """Eliminate every sideband loop at ``w_mQ`` (default) or at the full resonance.

    Raises:
        AdiabaticityViolated: if the effective mechanical linewidth exceeds
            the narrowest eliminated linewidth.
    Warns:
        AdiabaticityWarning: if it exceeds a tenth of it.
    """
    el = circuit.elements
    if at == "omega_mQ":
        w0 = el.omega_mQ
    elif at == "omega_m":
        w0 = peak_frequency(circuit).omega_m
    else:
        raise ValueError("'at' must be 'omega_mQ' or 'omega_m'")
    samples = circuit.samples([w0])
    q = np.array([s.susceptibility[0] for s in samples])
    x = np.array([s.x_couple[0] for s in samples])
    sign = np.array([b.sign for b in circuit.branches], dtype=float)
    c_s = np.array([b.c_couple for b in circuit.branches])
    inv_c = 1.0 / el.C_m_prime + np.sum((1.0 + q.real) / c_s)
    # exact definition; em_resistance_formula is its large-carrier approximation
    resist = sign * (q * x).real
    r_eff = el.R_m + float(np.sum(sign * resist))
    C_tilde = 1.0 / inv_c
    omega_m = 1.0 / math.sqrt(el.L_m * C_tilde)
    lorentz = stokes = None
    om = circuit.spec.om
    if om is not None:
        lp = complex(lorentzian(om.omega_l + w0, om.omega_cav, om.kappa))
        lm = complex(lorentzian(om.omega_l - w0, om.omega_cav, om.kappa))
        lorentz = (abs(lp), abs(lm), float(np.angle(lp)), float(np.angle(lm)))
        _, c_om = om_rates(om, circuit.spec.mech, w0)
        g0 = circuit.spec.mech.gamma_m0
        stokes = (g0 * c_om * abs(lp) ** 2, g0 * c_om * abs(lm) ** 2)
    factors = np.array([s.factor[0] for s in samples])
    gamma = r_eff / el.L_m
    scale = _linewidth_scale(circuit, samples, w0)
    rc = ReducedCircuit(
        circuit, w0, C_tilde, omega_m, r_eff, gamma, resist, resist / el.L_m, q, factors,
        lorentz, stokes, scale,
    )
    if check:
        check_adiabatic(rc)
    return rc


def check_adiabatic(rc: ReducedCircuit) -> None:
    if rc.gamma_meff > rc.load_linewidth:
        raise AdiabaticityViolated(
            f"effective mechanical linewidth {rc.gamma_meff:.4g} rad/s exceeds the eliminated "
            f"linewidth {rc.load_linewidth:.4g} rad/s"
        )
    if rc.gamma_meff > ADIABATIC_MARGIN * rc.load_linewidth:
        warnings.warn(
            AdiabaticityWarning(
                f"effective mechanical linewidth {rc.gamma_meff:.4g} rad/s is not small against "
                f"{rc.load_linewidth:.4g} rad/s; reduced model is approximate"
            ),
            stacklevel=3,
        )


def reduced_smatrix(rc: ReducedCircuit, omega) -> ScatteringMatrix:
    """Scattering matrix of the reduced circuit, same channels as the full one.

    The mechanical current follows from the single reduced loop. Each
    eliminated loop keeps its direct (mechanics-free) response exact at
    ``W`` and couples to the mechanics through its frozen susceptibility.
    The external optical rows use the cavity Lorentzian form directly in
    the bosonic basis.
    """
    circuit = rc.circuit
    samples = circuit.samples(omega)
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    chans = channels(circuit)
    mech, side = unit_excitations(circuit, samples, chans)
    drive = mech + sum(rc.thevenin(side).values())
    i_m = drive / rc.impedance(w)[:, None]
    w0 = rc.omega_eval
    n, C = len(w), len(chans)
    S = np.zeros((n, C, C), complex)
    col_of = {(ch.branch_index, ch.port_index): c for c, ch in enumerate(chans)}
    for r, ch in enumerate(chans):
        S[:, r, r] = 1.0
        if ch.subsystem == "mechanical":
            S[:, r, :] -= circuit.elements.R_m * i_m
            continue
        k = ch.branch_index
        smp = samples[k]
        direct = smp.factor[:, None] * smp.admittance[:, None] * side[:, k, :]
        coupled = rc.factors[k] * (w0 / w)[:, None] * rc.susceptibilities[k] * i_m
        current = smp.b[:, ch.port_index, None] * (direct + coupled)
        for j in range(smp.a.shape[1]):
            current[:, col_of[(k, j)]] += 2.0 * smp.a[:, ch.port_index, j]
        S[:, r, :] += ch.impedance * current
    sm = bosonic_smatrix(ScatteringMatrix(w, chans, S))
    if rc.lorentz is not None:
        _optical_rows(rc, sm, i_m)
    return sm


def _optical_rows(rc: ReducedCircuit, sm: ScatteringMatrix, i_m: np.ndarray) -> None:
    om = rc.circuit.spec.om
    eta = om.eta_opt
    w0 = rc.omega_eval
    lp, lm, tp, tm = rc.lorentz
    lab = sm.lab_frequencies()
    z = np.array([c.impedance for c in sm.channels])
    # mechanical current per unit bosonic input amplitude
    i_b = i_m * np.sqrt(hbar * lab * z[None, :] / 2)
    labels = sm.labels
    for sign, strength, phase in ((+1, lp, tp), (-1, lm, tm)):
        tag = "+" if sign > 0 else "-"
        if f"opt.ext{tag}" not in labels:
            continue
        row = labels.index(f"opt.ext{tag}")
        r_om = rc.resistance("optical", sign)
        # lower sideband rows hold conjugated amplitudes
        ph = phase if sign > 0 else -phase
        mech = 1j * np.exp(1j * ph) * math.sqrt(eta) * math.sqrt(2 * r_om / (hbar * w0))
        c_ext, c_int = effective_noise_coefficients(eta, strength, ph)
        sm.bosonic[:, row, :] = mech * (w0 / sm.omega)[:, None] * i_b
        sm.bosonic[:, row, row] += c_ext
        if f"opt.int{tag}" in labels:
            sm.bosonic[:, row, labels.index(f"opt.int{tag}")] += c_int
