"""Coupling parameters and equivalent-branch element values.

Physical steady-state inputs (mass, bias charge, capacitance derivatives,
optical drive) are mapped onto the lumped elements of the mechanical loop
and of the optical loop. The electrical circuit itself stays a netlist; its
effective single-mode parameters are extracted numerically where a closed
form would need a specific topology.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import DecoupledMechanics, NegativeStiffness
from .netlist import Netlist, network_response, network_response_sweep


@dataclass(frozen=True)
class MechanicalMode:
    """Bare mechanical mode: mass (kg), frequency and damping (rad/s), bath (K)."""

    mass: float
    omega_m0: float
    gamma_m0: float
    temperature: float = 0.0

    def __post_init__(self):
        if not (self.mass > 0 and self.omega_m0 > 0 and self.gamma_m0 > 0):
            raise ValueError("mass, omega_m0 and gamma_m0 must be strictly positive")
        if self.temperature < 0:
            raise ValueError("mechanical temperature must be non-negative")


@dataclass(frozen=True)
class DCBias:
    charge: float


@dataclass(frozen=True)
class ACBias:
    """Sinusoidal bias. ``charge`` is half of the physical charge amplitude."""

    charge: float
    omega_d: float

    def __post_init__(self):
        if not self.omega_d > 0:
            raise ValueError("AC bias needs omega_d > 0")


@dataclass(frozen=True)
class EMCouplingSpec:
    c_bar: float
    dc_dx: float
    d2c_dx2: float
    bias: DCBias | ACBias

    def __post_init__(self):
        if not self.c_bar > 0:
            raise ValueError("coupling capacitance must be strictly positive")

    @property
    def is_ac(self) -> bool:
        return isinstance(self.bias, ACBias)

    @property
    def carrier(self) -> float:
        """Electrical carrier frequency; zero for DC bias."""
        return self.bias.omega_d if self.is_ac else 0.0

    @property
    def mean_square_charge(self) -> float:
        q = self.bias.charge
        return 2 * q * q if self.is_ac else q * q

    @property
    def shift_factor(self) -> int:
        """Multiplicity of the geometric capacitance in the mechanical loop."""
        return 2 if self.is_ac else 1


@dataclass(frozen=True)
class OMCouplingSpec:
    """Driven optical cavity mode.

    ``static_shift`` is the optical spring term added to the squared
    mechanical frequency, in s^-2 (already divided by the mass).
    """

    omega_cav: float
    kappa_int: float
    kappa_ext: float
    omega_l: float
    g_om_strength: float
    static_shift: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if self.kappa_int < 0 or self.kappa_ext < 0 or not self.kappa > 0:
            raise ValueError("optical decay rates must be non-negative with positive sum")
        if not (self.omega_cav > self.kappa and self.omega_l > 0):
            raise ValueError("cavity frequency must exceed its linewidth; omega_l > 0")

    @property
    def kappa(self) -> float:
        return self.kappa_int + self.kappa_ext

    @property
    def eta_opt(self) -> float:
        return self.kappa_ext / self.kappa

    @property
    def q_cav(self) -> float:
        return self.omega_cav / self.kappa


@dataclass(frozen=True)
class TransducerSpec:
    mech: MechanicalMode
    em: EMCouplingSpec
    om: OMCouplingSpec | None = None


@dataclass(frozen=True)
class EquivalentBranches:
    """Lumped elements of the mechanical and optical loops.

    Optical fields are NaN when no optical coupling is present. When
    ``decoupled`` is set the coupling vanishes and the mechanical elements
    are NaN; the loop is then simply absent from the circuit.
    """

    G: float
    L_m: float
    R_m: float
    C_m: float
    C_m_prime: float
    omega_mV: float
    omega_mQ: float
    L_opt: float = math.nan
    C_opt: float = math.nan
    R_opt: float = math.nan
    R_int: float = math.nan
    Z_ext: float = math.nan
    decoupled: bool = False

    @property
    def has_optics(self) -> bool:
        return not math.isnan(self.C_opt)


def derive_G(em: EMCouplingSpec) -> float:
    """Drive-enhanced coupling ``G = -(Q0 / C^2) dC/dx`` in V/m."""
    return -em.bias.charge / em.c_bar**2 * em.dc_dx


def mechanical_frequencies(
    mech: MechanicalMode, em: EMCouplingSpec, om: OMCouplingSpec | None = None
) -> tuple[float, float]:
    """Fixed-voltage and fixed-charge mechanical frequencies (rad/s).

    Raises:
        NegativeStiffness: if the bias-softened spring constant is not positive.
    """
    G = derive_G(em)
    w2 = mech.omega_m0**2 - em.mean_square_charge / (2 * mech.mass * em.c_bar**2) * em.d2c_dx2
    if om is not None:
        w2 += om.static_shift
    if not w2 > 0:
        raise NegativeStiffness(f"fixed-voltage stiffness is not positive (omega_mV^2 = {w2:.6g})")
    wq2 = w2 + em.shift_factor * em.c_bar * G * G / mech.mass
    return math.sqrt(w2), math.sqrt(wq2)


def synthesize_branches(
    mech: MechanicalMode,
    em: EMCouplingSpec,
    om: OMCouplingSpec | None = None,
    *,
    allow_decoupled: bool = False,
) -> EquivalentBranches:
    """Element values of the mechanical loop and, if present, the optical loop.

    Raises:
        DecoupledMechanics: if ``G == 0`` (the mechanical elements diverge)
            unless ``allow_decoupled`` is set and no optical coupling is given,
            or if the optical coupling strength is zero.
    """
    G = derive_G(em)
    omega_mV, omega_mQ = mechanical_frequencies(mech, em, om)
    if G == 0:
        if not allow_decoupled or om is not None:
            raise DecoupledMechanics("G = 0: the mechanical branch is decoupled from the circuit")
        nan = math.nan
        return EquivalentBranches(0.0, nan, nan, nan, nan, omega_mV, omega_mQ, decoupled=True)
    scale = (em.c_bar * G) ** 2
    L_m = mech.mass / scale
    R_m = mech.gamma_m0 * L_m
    C_m = scale / (omega_mV**2 * mech.mass)
    if om is None:
        return EquivalentBranches(G, L_m, R_m, C_m, C_m, omega_mV, omega_mQ)
    if om.g_om_strength == 0:
        raise DecoupledMechanics("optical coupling strength is zero; omit the optical section")
    g2 = om.g_om_strength**2
    L_opt = g2 / (scale * om.omega_cav**3)
    C_opt = om.omega_cav * scale / g2
    C_m_prime = 1.0 / (1.0 / C_m - 2.0 / C_opt)
    return EquivalentBranches(
        G, L_m, R_m, C_m, C_m_prime, omega_mV, omega_mQ,
        L_opt=L_opt, C_opt=C_opt, R_opt=om.kappa * L_opt,
        R_int=om.kappa_int * L_opt, Z_ext=om.kappa_ext * L_opt,
    )


def om_rates(om: OMCouplingSpec, mech: MechanicalMode, omega_ref: float) -> tuple[float, float]:
    """Single-photon-enhanced coupling rate ``g_OM`` and cooperativity ``C_OM``."""
    if not omega_ref > 0:
        raise ValueError("reference mechanical frequency must be positive")
    g = om.g_om_strength / math.sqrt(4 * mech.mass * omega_ref)
    return g, 4 * g * g / (mech.gamma_m0 * om.kappa)


@dataclass(frozen=True)
class ElectricalMode:
    """Single-mode view of the electrical circuit loaded by the coupling capacitor.

    ``L_eff`` is half the slope of the loop reactance at resonance, which
    equals the inductance for a serial tank. ``gamma`` is the loaded linewidth.
    """

    omega: float
    L_eff: float
    R_total: float

    @property
    def q_loaded(self) -> float:
        return self.omega * self.L_eff / self.R_total

    @property
    def gamma(self) -> float:
        return self.R_total / self.L_eff


def _loop_reactance(net: Netlist, c_bar: float, omega) -> np.ndarray:
    z = network_response_sweep(net, omega).z_thev
    w = np.asarray(omega, dtype=float)
    return z.imag + 1.0 / (w * c_bar)


def electrical_mode(net: Netlist, c_bar: float, near: float, span: float = 3.0) -> ElectricalMode | None:
    """Series resonance of the netlist closed by ``c_bar`` nearest to ``near``.

    The resonance is a zero of ``Im[Z(w) + 1/(-i w C)]`` where the reactance
    falls through zero (the loop turns from capacitive to inductive).
    Returns ``None`` when no such zero lies within ``[near/span, near*span]``.
    """
    grid = np.geomspace(near / span, near * span, 4001)
    x = _loop_reactance(net, c_bar, grid)
    idx = np.nonzero((x[:-1] > 0) & (x[1:] <= 0))[0]
    if idx.size == 0:
        return None
    k = idx[np.argmin(np.abs(np.log(grid[idx] / near)))]
    f = lambda w: float(_loop_reactance(net, c_bar, [w])[0])  # noqa: E731
    w0 = brentq(f, grid[k], grid[k + 1], xtol=1e-14 * grid[k], rtol=1e-15)
    h = 1e-6 * w0
    slope = -(f(w0 + h) - f(w0 - h)) / (2 * h)
    r_total = network_response(net, w0).z_thev.real
    return ElectricalMode(w0, 0.5 * slope, r_total)


def em_rates(
    net: Netlist, spec: TransducerSpec, branches: EquivalentBranches, omega_ref: float
) -> tuple[float, float, ElectricalMode] | None:
    """EM coupling rate ``g_EM`` and cooperativity ``C_EM`` for the resonant mode.

    The electrical resonance is searched next to the upper sideband
    ``carrier + omega_ref``. Returns ``None`` when the circuit has no
    series resonance there.
    """
    mode = electrical_mode(net, spec.em.c_bar, spec.em.carrier + omega_ref)
    if mode is None or branches.decoupled:
        return None
    m = spec.mech.mass
    g = abs(branches.G) / math.sqrt(4 * m * mode.L_eff * omega_ref * mode.omega)
    coop = mode.q_loaded / (branches.R_m * omega_ref * spec.em.c_bar)
    return g, coop, mode


def port_efficiencies(net: Netlist, omega: float) -> dict[str, float]:
    """Fraction of the power drawn at the coupling terminals dissipated in each port."""
    resp = network_response(net, omega)
    z = np.array([p.impedance for p in net.ports])
    eta = np.abs(resp.injection_response) ** 2 * z / resp.z_thev.real
    return dict(zip(resp.port_ids, eta.tolist()))
