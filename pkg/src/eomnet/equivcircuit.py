"""Equivalent circuit: mechanical loop coupled to sideband loops.

Every driven subsystem contributes loops that share a coupling capacitor
with the mechanical loop. An AC-driven subsystem contributes an upper (+)
and a lower (-) sideband loop around its carrier; a DC-biased electrical
circuit contributes a single baseband loop at the lab frequency itself.

For a loop ``s`` with carrier ``w_c`` and sign ``sigma`` the lab frequency is
``w_s = w_c + sigma * W`` and the lab-to-loop scale factor is
``f_s = sigma * w_s / W``. The loop impedance is ``f_s Z(w_s)`` (conjugated
for the lower sideband) and the lab-frame current leaving the coupling
terminal is ``f_s I_s`` (again conjugated for the lower sideband).

Kirchhoff's laws read, with ``X_s = 1 / (-i W C_s)``::

    2 V_m = Z_m' I_m + sum_s X_s (I_m + I_s)
    V_s   = (Z_s + X_s) I_s + X_s I_m

and are solved by composition: ``I_m = (2 V_m + sum_s Q_s V_s) / Z_m,eff``,
``I_s = Y_s V_s + Q_s I_m`` with susceptibility ``Q_s = -X_s / (Z_s + X_s)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy.optimize import brentq

from .couplings import EquivalentBranches, TransducerSpec, synthesize_branches
from .errors import (
    MultipleRootsWarning,
    NoRoot,
    SidebandGuardViolation,
    SidebandOutOfRange,
)
from .netlist import Element, Netlist, network_response_sweep

GUARD_RATIO = 0.1
KVL_TOLERANCE = 1e-10


# ---------------------------------------------------------------------------
# loads seen through the coupling capacitors


@dataclass(frozen=True)
class LoadResponse:
    z: np.ndarray  # (N,)
    h: np.ndarray  # (N, P)
    a: np.ndarray  # (N, P, P)
    b: np.ndarray  # (N, P)


class Load(Protocol):
    port_ids: tuple[str, ...]
    port_impedances: np.ndarray
    port_temperatures: np.ndarray
    is_open: bool

    def response(self, omega: np.ndarray) -> LoadResponse: ...


@dataclass(frozen=True)
class NetlistLoad:
    """A netlist seen from its coupling terminals; ports may be relabelled."""

    net: Netlist
    labels: tuple[str, ...] | None = None
    is_open: bool = field(default=False, init=False)

    @property
    def port_ids(self) -> tuple[str, ...]:
        return self.labels if self.labels is not None else self.net.port_ids

    @property
    def port_impedances(self) -> np.ndarray:
        return np.array([p.impedance for p in self.net.ports], dtype=float)

    @property
    def port_temperatures(self) -> np.ndarray:
        return np.array([p.temperature for p in self.net.ports], dtype=float)

    def response(self, omega: np.ndarray) -> LoadResponse:
        sw = network_response_sweep(self.net, omega)
        return LoadResponse(sw.z_thev, sw.source_transfer, sw.oc_port_currents, sw.injection_response)


@dataclass(frozen=True)
class OpenLoad:
    """Infinite impedance without ports: the loop carries no current."""

    port_ids: tuple[str, ...] = ()
    is_open: bool = field(default=True, init=False)

    @property
    def port_impedances(self) -> np.ndarray:
        return np.zeros(0)

    @property
    def port_temperatures(self) -> np.ndarray:
        return np.zeros(0)

    def response(self, omega: np.ndarray) -> LoadResponse:
        n = len(omega)
        return LoadResponse(np.full(n, np.inf + 0j), np.zeros((n, 0), complex),
                            np.zeros((n, 0, 0), complex), np.zeros((n, 0), complex))


def optical_netlist(branches: EquivalentBranches, kappa_int: float) -> Netlist:
    """Serial optical loop: ``L_opt``, intrinsic loss port, external port (both 0 K)."""
    r_int = branches.R_int if kappa_int > 0 else 0.0
    elements = (
        Element("L", "Lopt", "1", "2", branches.L_opt),
        Element("R", "Rint", "2", "3", r_int, 0.0),
        Element("T", "Text", "3", "0", branches.Z_ext, 0.0),
    )
    return Netlist(elements, ("1", "0"), "0")


# ---------------------------------------------------------------------------
# circuit assembly


@dataclass(frozen=True)
class SidebandBranch:
    subsystem: str  # "electrical" or "optical"
    sign: int  # +1 upper (or baseband), -1 lower
    carrier: float
    c_couple: float
    load: Load

    @property
    def label(self) -> str:
        if self.carrier == 0:
            return f"{self.subsystem}:0"
        return f"{self.subsystem}:{'+' if self.sign > 0 else '-'}"


@dataclass(frozen=True)
class BranchSample:
    """One sideband loop evaluated on a grid of modulation frequencies."""

    branch: SidebandBranch
    lab: np.ndarray
    factor: np.ndarray
    z_side: np.ndarray
    x_couple: np.ndarray
    susceptibility: np.ndarray
    admittance: np.ndarray
    h: np.ndarray
    a: np.ndarray
    b: np.ndarray


@dataclass(frozen=True)
class EquivalentCircuit:
    spec: TransducerSpec
    elements: EquivalentBranches
    branches: tuple[SidebandBranch, ...]
    override_guard: bool = False

    @property
    def has_mechanics(self) -> bool:
        return not self.elements.decoupled

    @property
    def guard_limit(self) -> float:
        carriers = [b.carrier for b in self.branches if b.carrier > 0]
        return GUARD_RATIO * min(carriers) if carriers else math.inf

    def check_frequencies(self, omega, *, allow_negative: bool = False) -> np.ndarray:
        """Validate modulation frequencies against carriers and the sideband guard."""
        w = np.atleast_1d(np.asarray(omega, dtype=float))
        if np.any(~np.isfinite(w)) or np.any(w == 0) or (not allow_negative and np.any(w < 0)):
            raise ValueError("modulation frequencies must be finite and strictly positive")
        aw = np.abs(w)
        for br in self.branches:
            if br.carrier > 0 and np.any(aw >= br.carrier):
                raise SidebandOutOfRange(
                    f"modulation frequency {aw.max():.6g} rad/s reaches the {br.subsystem} "
                    f"carrier {br.carrier:.6g} rad/s"
                )
        if not self.override_guard and np.any(aw > self.guard_limit):
            raise SidebandGuardViolation(
                f"modulation frequency {aw.max():.6g} rad/s exceeds {GUARD_RATIO} x the smallest "
                f"carrier ({self.guard_limit:.6g} rad/s); pass the override flag to proceed"
            )
        return w

    def guard_exceeded(self, omega) -> bool:
        return bool(np.any(np.abs(np.asarray(omega)) > self.guard_limit))

    def samples(self, omega, *, allow_negative: bool = False) -> list[BranchSample]:
        w = self.check_frequencies(omega, allow_negative=allow_negative)
        return [_sample_branch(br, w) for br in self.branches]

    def mechanical_impedance(self, omega) -> np.ndarray:
        """Bare mechanical loop ``-i W L_m + R_m + 1 / (-i W C_m')``."""
        el = self.elements
        s = -1j * np.asarray(omega, dtype=float)
        return s * el.L_m + el.R_m + 1.0 / (s * el.C_m_prime)

    def loaded_impedance(self, omega, *, samples: list[BranchSample] | None = None) -> np.ndarray:
        """``Z_m,eff(W) = Z_m'(W) + sum_s (1 + Q_s) X_s``.

        Negative ``W`` evaluates the analytic continuation, which obeys
        ``Z_m,eff(-W) = conj(Z_m,eff(W))``.
        """
        if samples is None:
            samples = self.samples(omega, allow_negative=True)
        w = np.atleast_1d(np.asarray(omega, dtype=float))
        z = self.mechanical_impedance(w)
        for smp in samples:
            z = z + (1.0 + smp.susceptibility) * smp.x_couple
        return z

    def susceptibility(self, index: int, omega) -> np.ndarray:
        return _sample_branch(self.branches[index], self.check_frequencies(omega)).susceptibility


def _sample_branch(br: SidebandBranch, w: np.ndarray) -> BranchSample:
    lab = br.carrier + br.sign * w
    flip = lab < 0  # only a baseband loop at negative W
    resp = br.load.response(np.abs(lab))
    z, h, a, b = resp.z, resp.h, resp.a, resp.b
    conj = flip if br.sign > 0 else ~flip
    z = np.where(conj, np.conj(z), z)
    h = np.where(conj[:, None], np.conj(h), h)
    a = np.where(conj[:, None, None], np.conj(a), a)
    b = np.where(conj[:, None], np.conj(b), b)
    factor = br.sign * lab / w
    x = 1.0 / (-1j * w * br.c_couple)
    if br.load.is_open:
        z_side = np.full(w.shape, np.inf + 0j)
        q = np.zeros(w.shape, complex)
        y = np.zeros(w.shape, complex)
    else:
        z_side = factor * z
        y = 1.0 / (z_side + x)
        q = -x * y
    return BranchSample(br, lab, factor, z_side, x, q, y, h, a, b)


def susceptibility(z_side, x_couple):
    """``Q = -X / (Z + X)``, with the open-branch limit ``Q -> 0``."""
    z_side = np.asarray(z_side, dtype=complex)
    with np.errstate(invalid="ignore"):
        q = -x_couple / (z_side + x_couple)
    return np.where(np.isinf(z_side), 0.0, q)


def assemble(
    spec: TransducerSpec,
    net: Netlist | None,
    *,
    allow_decoupled: bool = False,
    override_guard: bool = False,
    electrical_load: Load | None = None,
) -> EquivalentCircuit:
    """Build the equivalent circuit from a transducer spec and the electrical netlist.

    ``electrical_load`` replaces the netlist load (e.g. :class:`OpenLoad`).
    """
    elements = synthesize_branches(spec.mech, spec.em, spec.om, allow_decoupled=allow_decoupled)
    load = electrical_load if electrical_load is not None else NetlistLoad(net)
    em = spec.em
    branches: list[SidebandBranch] = []
    if em.is_ac:
        for sign in (+1, -1):
            branches.append(SidebandBranch("electrical", sign, em.carrier, em.c_bar, load))
    else:
        branches.append(SidebandBranch("electrical", +1, 0.0, em.c_bar, load))
    if spec.om is not None:
        om = spec.om
        opt_net = optical_netlist(elements, om.kappa_int)
        labels = tuple({"Rint": "opt.int", "Text": "opt.ext"}[p] for p in opt_net.port_ids)
        opt_load = NetlistLoad(opt_net, labels)
        for sign in (+1, -1):
            branches.append(SidebandBranch("optical", sign, om.omega_l, elements.C_opt, opt_load))
    return EquivalentCircuit(spec, elements, tuple(branches), override_guard)


# ---------------------------------------------------------------------------
# loop currents


@dataclass(frozen=True)
class LoopSolution:
    """Loop currents for a set of excitations (last axis) on an W grid.

    ``lab_currents`` are the currents leaving each loop's coupling terminal
    in the lab frame (conjugated for lower sidebands).
    """

    omega: np.ndarray
    mech_current: np.ndarray  # (N, K)
    branch_currents: np.ndarray  # (N, B, K)
    lab_currents: np.ndarray  # (N, B, K)
    residual: np.ndarray  # (N,)


def solve_loops(
    circuit: EquivalentCircuit,
    samples: list[BranchSample],
    omega: np.ndarray,
    mech_source2: np.ndarray,
    branch_sources: np.ndarray,
    *,
    check: bool = True,
) -> LoopSolution:
    """Loop currents by impedance composition, checked against a dense KVL solve.

    Args:
        mech_source2: ``2 V_m``, shape (N, K).
        branch_sources: ``V_s``, shape (N, B, K).

    Raises:
        RuntimeError: if the composed currents violate Kirchhoff's laws by
            more than ``1e-10`` relative.
    """
    w = np.atleast_1d(omega)
    q = np.stack([s.susceptibility for s in samples], axis=1)  # (N, B)
    y = np.stack([s.admittance for s in samples], axis=1)
    if circuit.has_mechanics:
        z_eff = circuit.loaded_impedance(w, samples=samples)
        i_m = (mech_source2 + np.einsum("nb,nbk->nk", q, branch_sources)) / z_eff[:, None]
    else:
        i_m = np.zeros_like(mech_source2, dtype=complex)
    i_s = y[:, :, None] * branch_sources + q[:, :, None] * i_m[:, None, :]
    factor = np.stack([s.factor for s in samples], axis=1)
    residual = (
        kvl_residual(circuit, samples, w, mech_source2, branch_sources, i_m, i_s)
        if check
        else np.zeros(len(w))
    )
    if check and np.any(residual > KVL_TOLERANCE):
        raise RuntimeError(f"loop currents violate KVL (residual {residual.max():.3g})")
    return LoopSolution(w, i_m, i_s, factor[:, :, None] * i_s, residual)


def kvl_matrix(circuit: EquivalentCircuit, samples: list[BranchSample], omega) -> np.ndarray:
    """Dense Kirchhoff matrix over unknowns ``(I_m, I_1, ..., I_B)``.

    Open loops are represented by a unit diagonal (their current is zero).
    """
    w = np.atleast_1d(omega)
    nb = len(samples)
    K = np.zeros((len(w), nb + 1, nb + 1), complex)
    if circuit.has_mechanics:
        K[:, 0, 0] = circuit.mechanical_impedance(w)
    else:
        K[:, 0, 0] = 1.0
    for k, smp in enumerate(samples, start=1):
        if smp.branch.load.is_open:
            K[:, k, k] = 1.0
            continue
        K[:, k, k] = smp.z_side + smp.x_couple
        if circuit.has_mechanics:
            K[:, 0, 0] += smp.x_couple
            K[:, 0, k] = smp.x_couple
            K[:, k, 0] = smp.x_couple
    return K


def kvl_residual(circuit, samples, omega, mech_source2, branch_sources, i_m, i_s) -> np.ndarray:
    K = kvl_matrix(circuit, samples, omega)
    x = np.concatenate([i_m[:, None, :], i_s], axis=1)
    rhs = np.concatenate([mech_source2[:, None, :], branch_sources], axis=1)
    for k, smp in enumerate(samples, start=1):
        if smp.branch.load.is_open:
            rhs[:, k, :] = 0.0
    lhs = K @ x
    scale = np.abs(K) @ np.abs(x) + np.abs(rhs)
    err = np.abs(lhs - rhs) / np.where(scale > 0, scale, 1.0)
    return err.reshape(len(err), -1).max(axis=1)


def dense_solve(circuit, samples, omega, mech_source2, branch_sources) -> tuple[np.ndarray, np.ndarray]:
    """One-shot solve of the assembled Kirchhoff system (independent route)."""
    K = kvl_matrix(circuit, samples, omega)
    rhs = np.concatenate([mech_source2[:, None, :], branch_sources], axis=1).astype(complex)
    for k, smp in enumerate(samples, start=1):
        if smp.branch.load.is_open:
            rhs[:, k, :] = 0.0
    x = np.linalg.solve(K, rhs)
    return x[:, 0, :], x[:, 1:, :]


# ---------------------------------------------------------------------------
# mechanical resonance


@dataclass(frozen=True)
class PeakResult:
    omega_m: float
    R_meff: float
    gamma_meff: float
    roots: tuple[float, ...]


def peak_frequency(
    circuit: EquivalentCircuit, delta: float = 0.2, points: int = 2001
) -> PeakResult:
    """Root of ``Im Z_m,eff`` near the fixed-charge mechanical frequency.

    The bracket ``[w_mQ (1 - delta), w_mQ (1 + delta)]`` is scanned for sign
    changes, each refined by Brent's method to ``1e-12 w_mQ``. Sign changes
    caused by poles of the loaded impedance are discarded.

    Raises:
        NoRoot: no zero crossing in the bracket.
    Warns:
        MultipleRootsWarning: several crossings (normal-mode splitting); the
            one closest to ``w_mQ`` is selected.
    """
    if not circuit.has_mechanics:
        raise NoRoot("no mechanical loop: coupling is switched off")
    w_q = circuit.elements.omega_mQ
    lo, hi = w_q * (1 - delta), w_q * (1 + delta)
    if not circuit.override_guard:
        hi = min(hi, circuit.guard_limit)
    grid = np.linspace(lo, hi, points)
    if w_q < hi and not np.any(grid == w_q):
        grid = np.sort(np.append(grid, w_q))
    im = circuit.loaded_impedance(grid).imag
    exact = grid[im == 0]
    idx = np.nonzero(np.sign(im[:-1]) * np.sign(im[1:]) < 0)[0]

    def f(x: float) -> float:
        return float(circuit.loaded_impedance(np.array([x])).imag[0])

    scale = np.max(np.abs(im))
    roots = list(exact)
    for k in idx:
        r = brentq(f, grid[k], grid[k + 1], xtol=1e-12 * w_q, rtol=1e-15)
        if abs(f(r)) <= 1e-6 * scale:
            roots.append(r)
    if not roots:
        raise NoRoot(f"Im Z_m,eff has no zero in [{lo:.6g}, {hi:.6g}] rad/s")
    roots.sort()
    best = min(roots, key=lambda r: abs(r - w_q))
    if len(roots) > 1:
        warnings.warn(
            MultipleRootsWarning(f"{len(roots)} resonances in bracket {roots}; using {best:.9g}"),
            stacklevel=2,
        )
    r_eff = float(circuit.loaded_impedance(np.array([best])).real[0])
    return PeakResult(best, r_eff, r_eff / circuit.elements.L_m, tuple(roots))


def impedance_csv(omega, z) -> str:
    """Deterministic CSV text of ``Z_m,eff`` with a commented header."""
    lines = ["# loaded mechanical impedance", "omega_rad_s,re_ohm,im_ohm"]
    for w, v in zip(np.asarray(omega), np.asarray(z)):
        lines.append(f"{w:.12e},{v.real:.12e},{v.imag:.12e}")
    return "\n".join(lines) + "\n"
