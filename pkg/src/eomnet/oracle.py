"""Time-domain reference integrator for the linearized transducer.

The coupled equations are integrated directly in the lab frame, with no
sideband decomposition and no slow-mechanics averaging: an AC bias enters
as a coupling modulated by ``2 cos(w_d t)`` and the optical drive as
``2 cos(w_l t)``. The result is compared with the frequency-domain
scattering matrices.

The model is a real descriptor system ``E y' = A(t) y + b(t)`` with state

    node voltages | inductor currents | coupling charge | x, p | X, P

where ``X, P`` are the optical quadratures multiplied by ``sqrt(hbar)`` to
keep the matrices well scaled. Rows of ``E`` that vanish are algebraic and
are enforced exactly at every step; the other rows use the trapezoidal
rule. For time-invariant lossless systems this is the implicit midpoint
rule and conserves the quadratic energy exactly.

A probe drives one channel with ``Re[A exp(-i w t)]``. All frequencies
involved are integer multiples of the modulation frequency, so the system
is periodic and the steady state is reached by composing the per-step
affine maps over one period. The complex response amplitude is read out
by demodulating one steady-state period. The trapezoidal error expands in
even powers of the step, so repeated Richardson (Romberg) extrapolation
over halved steps removes the leading terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.constants import hbar

from .couplings import TransducerSpec, derive_G
from .errors import DecoupledMechanics, NotConverged, UnstableSystem
from .netlist import Netlist, _merge_wires

STEP_FRACTION = 0.04  # default dt as a fraction of 2 pi / w_max
MAX_STEP_FRACTION = 0.05
MIN_STEPS = 256  # per probe period; sharp mechanical resonances amplify phase errors
CONVERGENCE_TOL = 1e-9
DECAY_TIMES = 50.0
CHUNK = 8192


@dataclass(frozen=True)
class Channel:
    """One probe input or output: a port, the mechanics or an optical port."""

    label: str
    kind: str  # "electrical", "mechanical", "optical" or "displacement"
    carrier: float
    sign: int
    impedance: float = math.nan
    name: str = ""

    def lab_frequency(self, omega: float) -> float:
        return self.carrier + self.sign * omega


@dataclass(frozen=True)
class OracleSystem:
    """Matrices of ``E y' = (A0 + g_e A_em + g_e^2 A_em2 + g_o A_om) y + b``.

    ``g_e`` is 1 for DC bias and ``2 cos(w_d t)`` for AC bias; ``g_o`` is
    ``2 cos(w_l t)``. ``inputs`` maps a source name to the column that a
    unit incident amplitude adds to ``b``; ``outputs`` maps it to the row
    that reads the outgoing amplitude (before subtracting the incident one).
    """

    spec: TransducerSpec
    net: Netlist
    state_labels: tuple[str, ...]
    E: np.ndarray
    A0: np.ndarray
    A_em: np.ndarray
    A_em2: np.ndarray
    A_om: np.ndarray
    inputs: dict[str, np.ndarray]
    outputs: dict[str, np.ndarray]
    port_impedance: dict[str, float]
    energy_form: np.ndarray
    energy_om: np.ndarray
    curvature: float
    mechanical_damping: float

    @property
    def dim(self) -> int:
        return len(self.state_labels)

    @property
    def algebraic(self) -> np.ndarray:
        return ~np.any(self.E != 0, axis=1)

    @property
    def omega_em(self) -> float:
        return self.spec.em.carrier

    @property
    def omega_om(self) -> float:
        return self.spec.om.omega_l if self.spec.om is not None else 0.0

    def modulation(self, t) -> tuple[np.ndarray, np.ndarray]:
        t = np.asarray(t, dtype=float)
        g_e = 2 * np.cos(self.omega_em * t) if self.spec.em.is_ac else np.ones_like(t)
        g_o = 2 * np.cos(self.omega_om * t) if self.spec.om is not None else np.zeros_like(t)
        return g_e, g_o

    def matrix(self, t) -> np.ndarray:
        """``A(t)``, stacked along a leading axis for array ``t``."""
        g_e, g_o = self.modulation(t)
        g_e, g_o = g_e[..., None, None], g_o[..., None, None]
        return self.A0 + g_e * self.A_em + g_e**2 * self.A_em2 + g_o * self.A_om

    def energy(self, y, t: float = 0.0) -> np.ndarray:
        """Stored energy (J) of the state(s) ``y`` at time ``t``."""
        g_e, g_o = self.modulation(t)
        ix = self.state_labels.index("x")
        H = self.energy_form + g_o * self.energy_om
        H[ix, ix] -= g_e**2 * self.curvature
        y = np.asarray(y, dtype=float)
        # coupling capacitor voltage Q / C + G g_e x
        v_row = np.zeros(self.dim)
        v_row[ix - 1] = 1.0 / self.spec.em.c_bar
        v_row[ix] = derive_G(self.spec.em) * g_e
        cap = 0.5 * self.spec.em.c_bar * (y @ v_row) ** 2
        return 0.5 * np.einsum("...i,ij,...j->...", y, H, y) + cap


def build_system(
    spec: TransducerSpec, net: Netlist, *, mechanical_damping: float | None = None
) -> OracleSystem:
    """Assemble the descriptor system for ``spec`` coupled to ``net``.

    ``mechanical_damping`` overrides the intrinsic damping rate (zero is
    allowed, e.g. for energy-conservation checks).
    """
    em, mech, om = spec.em, spec.mech, spec.om
    rep = _merge_wires(net)
    ground = rep[net.ground]
    nodes: dict[str, int] = {}
    for node in net.nodes:
        r = rep[node]
        if r != ground and r not in nodes:
            nodes[r] = len(nodes)
    inductors = [el for el in net.elements if el.kind == "L"]
    ports = net.ports
    n_v, n_l = len(nodes), len(inductors)
    labels = [f"v[{r}]" for r in nodes] + [f"i[{el.name}]" for el in inductors] + ["Q", "x", "p"]
    if om is not None:
        labels += ["X", "P"]
    n = len(labels)
    iq, ix, ip = n_v + n_l, n_v + n_l + 1, n_v + n_l + 2
    kc = n_v + n_l  # coupling-constraint row replaces the charge's own row

    def inc(a: str, b: str) -> np.ndarray:
        vec = np.zeros(n)
        if rep[a] != ground:
            vec[nodes[rep[a]]] += 1.0
        if rep[b] != ground:
            vec[nodes[rep[b]]] -= 1.0
        return vec

    E = np.zeros((n, n))
    A0 = np.zeros((n, n))
    A_em = np.zeros((n, n))
    A_em2 = np.zeros((n, n))
    A_om = np.zeros((n, n))
    H = np.zeros((n, n))
    H_om = np.zeros((n, n))
    inputs: dict[str, np.ndarray] = {}
    outputs: dict[str, np.ndarray] = {}
    impedance: dict[str, float] = {}

    # Kirchhoff current law: C v' + a_c Q' = -G v - A_L i_L + J
    for el in net.elements:
        if el.is_wire or el.kind == "L":
            continue
        u = inc(el.node_a, el.node_b)[:n_v]
        stamp = np.outer(u, u)
        if el.kind == "C":
            E[:n_v, :n_v] += el.value * stamp
            H[:n_v, :n_v] += el.value * stamp
        else:
            A0[:n_v, :n_v] -= stamp / el.value
    for port in ports:
        u = inc(port.node_a, port.node_b)
        # Thevenin source 2 u_in in series with Z, as a Norton injection
        inputs[port.id] = 2.0 * u / port.impedance
        outputs[port.id] = u
        impedance[port.id] = port.impedance
    for k, el in enumerate(inductors):
        u = inc(el.node_a, el.node_b)
        A0[:n_v, n_v + k] -= u[:n_v]
        E[n_v + k, n_v + k] = el.value
        A0[n_v + k, :] += u
        H[n_v + k, n_v + k] = el.value
    a_c = inc(*net.couple_terminals)
    E[:n_v, iq] += a_c[:n_v]

    # coupling capacitor: 0 = v_p - v_n - Q / C - G g_e x
    G = derive_G(em)
    A0[kc, :] += a_c
    A0[kc, iq] -= 1.0 / em.c_bar
    A_em[kc, ix] -= G

    # mechanics
    gamma = mech.gamma_m0 if mechanical_damping is None else mechanical_damping
    stiff = mech.mass * (mech.omega_m0**2 + (om.static_shift if om is not None else 0.0))
    curvature = em.bias.charge**2 * em.d2c_dx2 / (2 * em.c_bar**2)
    E[ix, ix] = 1.0
    A0[ix, ip] = 1.0 / mech.mass
    E[ip, ip] = 1.0
    A0[ip, ix] = -stiff
    A0[ip, ip] = -gamma
    A_em[ip, iq] = -G
    A_em2[ip, ix] = -em.c_bar * G * G + curvature
    H[ip, ip] = 1.0 / mech.mass
    H[ix, ix] = stiff
    force = np.zeros(n)
    force[ip] = 2.0 * G * em.c_bar
    inputs["mech"] = force
    out = np.zeros(n)
    if G != 0:
        out[ip] = -gamma / (em.c_bar * G)
    outputs["mech"] = out
    impedance["mech"] = gamma * mech.mass / (em.c_bar * G) ** 2 if G != 0 else math.inf

    if om is not None:
        iX, iP = n - 2, n - 1
        w_c, g_om = om.omega_cav, om.g_om_strength
        E[iX, iX] = 1.0
        A0[iX, iP] = w_c
        E[iP, iP] = 1.0
        A0[iP, iX] = -w_c
        A0[iP, iP] = -om.kappa
        A_om[iP, ix] = -g_om
        A_om[ip, iX] = -g_om
        H[iX, iX] = H[iP, iP] = w_c
        H_om[ix, iX] = H_om[iX, ix] = g_om
        for name, rate in (("opt.ext", om.kappa_ext), ("opt.int", om.kappa_int)):
            if rate == 0:
                continue
            col = np.zeros(n)
            col[iP] = math.sqrt(2 * rate)
            inputs[name] = col
            row = np.zeros(n)
            # outgoing = incoming - sqrt(2 kappa) P; the incident part is added per probe
            row[iP] = -math.sqrt(2 * rate)
            outputs[name] = row
    displacement = np.zeros(n)
    displacement[ix] = 1.0
    outputs["displacement"] = displacement
    return OracleSystem(
        spec, net, tuple(labels), E, A0, A_em, A_em2, A_om, inputs, outputs, impedance,
        H, H_om, curvature, gamma,
    )


# ---------------------------------------------------------------------------
# channels


def resolve_channel(system: OracleSystem, label: str) -> Channel:
    """Interpret a scattering-matrix label (``Ttx+``, ``mech``, ``opt.ext-``, ...)."""
    em_ac = system.spec.em.is_ac
    if label in ("mech", "displacement"):
        kind = "mechanical" if label == "mech" else "displacement"
        return Channel(label, kind, 0.0, +1, system.port_impedance.get("mech", math.nan), label)
    base, sign = label, +1
    if label.endswith(("+", "-")):
        base, sign = label[:-1], (+1 if label[-1] == "+" else -1)
    if base.startswith("opt."):
        if base not in system.inputs or label == base:
            raise KeyError(f"unknown optical channel {label!r}")
        return Channel(label, "optical", system.omega_om, sign, math.nan, base)
    if base not in system.port_impedance:
        raise KeyError(f"unknown channel {label!r}")
    if em_ac == (label == base):
        raise KeyError(f"channel {label!r} needs {'a' if em_ac else 'no'} sideband suffix")
    return Channel(label, "electrical", system.omega_em, sign, system.port_impedance[base], base)


def bosonic_scale(system: OracleSystem, ch: Channel, omega: float) -> float:
    """Classical amplitude per unit bosonic amplitude on ``ch`` at modulation ``omega``."""
    w = ch.lab_frequency(omega)
    if ch.kind == "optical":
        return math.sqrt(hbar * w / system.spec.om.omega_cav)
    if ch.kind == "displacement":
        raise ValueError("displacement has no bosonic normalization")
    return math.sqrt(hbar * w * ch.impedance / 2)


def max_frequency(system: OracleSystem, omega_probe: float = 0.0) -> float:
    """Largest angular frequency the time step has to resolve."""
    g_mean = 2.0 if system.spec.em.is_ac else 1.0
    A = system.A0 + system.A_em2 * g_mean
    lam = scipy.linalg.eigvals(A, system.E)
    lam = lam[np.isfinite(lam)]
    natural = float(np.abs(lam).max()) if lam.size else 0.0
    return natural + max(system.omega_em, system.omega_om) + abs(omega_probe)


# ---------------------------------------------------------------------------
# stepping


# Gauss-Legendre collocation tableaus (nodes, coefficients, weights). One
# stage is the implicit midpoint rule; every member is symmetric and
# symplectic, so quadratic invariants are conserved and the global error
# expands in even powers of the step starting at 2 * stages.
_S3 = math.sqrt(3.0)
_S15 = math.sqrt(15.0)
GAUSS_TABLEAUS = {
    1: (np.array([0.5]), np.array([[0.5]]), np.array([1.0])),
    2: (
        np.array([0.5 - _S3 / 6, 0.5 + _S3 / 6]),
        np.array([[0.25, 0.25 - _S3 / 6], [0.25 + _S3 / 6, 0.25]]),
        np.array([0.5, 0.5]),
    ),
    3: (
        np.array([0.5 - _S15 / 10, 0.5, 0.5 + _S15 / 10]),
        np.array([
            [5 / 36, 2 / 9 - _S15 / 15, 5 / 36 - _S15 / 30],
            [5 / 36 + _S15 / 24, 2 / 9, 5 / 36 - _S15 / 24],
            [5 / 36 + _S15 / 30, 2 / 9 + _S15 / 15, 5 / 36],
        ]),
        np.array([5 / 18, 4 / 9, 5 / 18]),
    ),
}


@dataclass(frozen=True)
class _Reduction:
    """Singular value split ``E = U1 diag(sigma) V1^T``.

    The state is ``y = V1 z + V2 w``: ``z`` evolves by an ODE and ``w`` is
    fixed by the constraint rows ``U2^T (A y + b) = 0``.
    """

    U1: np.ndarray
    U2: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    inv_sigma: np.ndarray

    @property
    def size(self) -> int:
        return self.V1.shape[1]


def _reduction(system: OracleSystem) -> _Reduction:
    U, sigma, Vt = np.linalg.svd(system.E)
    r = int(np.sum(sigma > sigma.max() * 1e-12)) if sigma.size else 0
    return _Reduction(U[:, :r], U[:, r:], Vt[:r].T, Vt[r:].T, 1.0 / sigma[:r])


def _ode(system: OracleSystem, red: _Reduction, t: np.ndarray, col: np.ndarray):
    """``z' = F z + B u`` and the constraint solution ``w = K z + k u``."""
    A = system.matrix(t)
    n_t = len(t)
    AV1, AV2 = A @ red.V1, A @ red.V2
    if red.U2.shape[1]:
        C = red.U2.T @ AV2
        rhs = np.concatenate(
            [red.U2.T @ AV1, np.broadcast_to((red.U2.T @ col)[:, None], (n_t, red.U2.shape[1], 1))], axis=2
        )
        try:
            sol = -np.linalg.solve(C, rhs)
        except np.linalg.LinAlgError:
            raise ValueError("constraints do not determine the algebraic variables (not index 1)") from None
        K, k = sol[:, :, :-1], sol[:, :, -1]
    else:
        K = np.zeros((n_t, 0, red.size))
        k = np.zeros((n_t, 0))
    scale = red.inv_sigma[:, None] * red.U1.T
    F = scale @ (AV1 + AV2 @ K)
    B = (scale @ ((AV2 @ k[..., None])[..., 0] + col[None, :])[..., None])[..., 0]
    return F, B, K, k


def _step_maps(system, red, t0: np.ndarray, h: float, col, amp, w_in, stages: int):
    """Affine maps ``z1 = P z0 + q`` of one collocation step from each time in ``t0``."""
    c, coef, weights = GAUSS_TABLEAUS[stages]
    nd = red.size
    ts = t0[:, None] + c[None, :] * h
    F, B, _, _ = _ode(system, red, ts.ravel(), col)
    F = F.reshape(len(t0), stages, nd, nd)
    u = (amp * np.exp(-1j * w_in * ts)).real
    src = B.reshape(len(t0), stages, nd) * u[:, :, None]
    # stage slopes: K_i = F_i (z0 + h sum_j a_ij K_j) + B_i u_i
    S = np.zeros((len(t0), stages * nd, stages * nd))
    for i in range(stages):
        for j in range(stages):
            block = -h * coef[i, j] * F[:, i]
            if i == j:
                block = block + np.eye(nd)
            S[:, i * nd:(i + 1) * nd, j * nd:(j + 1) * nd] = block
    rhs = np.concatenate([F.reshape(len(t0), stages * nd, nd), src.reshape(len(t0), stages * nd, 1)], axis=2)
    sol = np.linalg.solve(S, rhs).reshape(len(t0), stages, nd, nd + 1)
    step = h * np.einsum("i,nijk->njk", weights, sol)
    return np.eye(nd) + step[:, :, :nd], step[:, :, nd]


def _compose_matrices(M: np.ndarray) -> np.ndarray:
    """Product ``M[-1] @ ... @ M[0]`` by pairwise reduction."""
    while len(M) > 1:
        if len(M) % 2:
            M = np.concatenate([M, np.eye(M.shape[1], dtype=M.dtype)[None]])
        M = M[1::2] @ M[0::2]
    return M[0]


def _demodulating_map(system, red, n_steps, h, col, amp, w_in, out_row, direct, w_out, stages):
    """Period map on ``(z, acc, 1)`` where ``acc`` sums the demodulated output samples.

    Each step maps ``(z_n, acc, 1)`` to
    ``(P_n z_n + q_n, acc + e_n (c_n z_n + d_n u_n), 1)`` with
    ``e_n = exp(i w_out t_n)``, so one composed matrix yields both the
    period map and the demodulation functional of the initial state.
    """
    nd = red.size
    total = np.eye(nd + 2, dtype=complex)
    c_z, c_w = out_row @ red.V1, out_row @ red.V2
    for start in range(0, n_steps, CHUNK):
        t0 = np.arange(start, min(start + CHUNK, n_steps)) * h
        P, q = _step_maps(system, red, t0, h, col, amp, w_in, stages)
        _, _, K, k = _ode(system, red, t0, col)
        u0 = (amp * np.exp(-1j * w_in * t0)).real
        row = c_z[None, :] + np.einsum("a,nad->nd", c_w, K)
        feed = direct + k @ c_w
        e = np.exp(1j * w_out * t0)
        M = np.zeros((len(t0), nd + 2, nd + 2), complex)
        M[:, :nd, :nd] = P
        M[:, :nd, nd + 1] = q
        M[:, nd, :nd] = e[:, None] * row
        M[:, nd, nd] = 1.0
        M[:, nd, nd + 1] = e * feed * u0
        M[:, nd + 1, nd + 1] = 1.0
        total = _compose_matrices(M) @ total
    return total


def free_evolution(
    system: OracleSystem, y0, dt: float, n_steps: int, *, t0: float = 0.0, stages: int = 1
) -> np.ndarray:
    """Undriven trajectory, shape ``(n_steps + 1, dim)``.

    Only the differential part of ``y0`` is used; algebraic variables are
    reconstructed from the constraints at every sample.
    """
    red = _reduction(system)
    zero = np.zeros(system.dim)
    z = np.empty((n_steps + 1, red.size))
    z[0] = red.V1.T @ np.asarray(y0, dtype=float)
    for start in range(0, n_steps, CHUNK):
        idx = np.arange(start, min(start + CHUNK, n_steps))
        P, _ = _step_maps(system, red, t0 + idx * dt, dt, zero, 0.0, 0.0, stages)
        for k, j in enumerate(idx):
            z[j + 1] = P[k] @ z[j]
    times = t0 + np.arange(n_steps + 1) * dt
    _, _, K, _ = _ode(system, red, times, zero)
    w = np.einsum("nad,nd->na", K, z)
    return z @ red.V1.T + w @ red.V2.T


# ---------------------------------------------------------------------------
# probes


@dataclass(frozen=True)
class ProbeResult:
    """Extrapolated transfer plus the raw estimates at ``n_steps * 2**k`` steps per period."""

    value: complex
    estimates: tuple[complex, ...]
    n_steps: int
    periods: int
    spectral_radius: float


def _steady_state(Phi: np.ndarray, c: np.ndarray, period: float, duration: float | None):
    rho = float(np.abs(np.linalg.eigvals(Phi)).max())
    if rho > 1 + 1e-12:
        raise UnstableSystem(f"period map has spectral radius {rho:.12g} > 1; the response grows")
    if rho >= 1 - 1e-14:
        raise NotConverged("no decaying dynamics: the transient never dies out")
    tau = -period / math.log(rho)
    if duration is None:
        duration = DECAY_TIMES * tau
    periods = max(1, math.ceil(duration / period))
    n = len(c)
    M = np.eye(n + 1)
    M[:n, :n], M[:n, n] = Phi, c
    z = np.linalg.matrix_power(M, periods)[:n, n]
    residual = np.linalg.norm(Phi @ z + c - z)
    size = max(np.linalg.norm(z), np.finfo(float).tiny)
    if not residual <= CONVERGENCE_TOL * size:
        raise NotConverged(
            f"transient not decayed after {periods} periods (relative residual "
            f"{residual / size:.3g}, decay time {tau:.4g} s)"
        )
    return z, periods, rho


def _single_run(system, red, drive, response, omega, amp, n_steps, period, duration, stages):
    h = period / n_steps
    w_in, w_out = drive.lab_frequency(omega), response.lab_frequency(omega)
    col = system.inputs[drive.name]
    out_row = system.outputs[response.name]
    # outgoing = port voltage - incident for ports, incident - loss term otherwise
    direct = 0.0
    if response.name == drive.name:
        direct = -1.0 if response.kind == "electrical" else 1.0
    nd = red.size
    M = _demodulating_map(system, red, n_steps, h, col, amp, w_in, out_row, direct, w_out, stages)
    z, periods, rho = _steady_state(M[:nd, :nd].real, M[:nd, nd + 1].real, period, duration)
    acc = M[nd, :nd] @ z + M[nd, nd + 1]
    return 2.0 * acc / n_steps, periods, rho


def romberg(estimates, order: int = 2) -> complex:
    """Extrapolate estimates at steps ``h, h/2, h/4, ...`` whose error runs ``h^order, h^(order+2), ...``."""
    row = [complex(e) for e in estimates]
    power = order
    while len(row) > 1:
        f = 2.0**power
        row = [(f * b - a) / (f - 1) for a, b in zip(row, row[1:])]
        power += 2
    return row[0]


def probe_transfer(
    system: OracleSystem,
    drive: str,
    response: str,
    omega: float,
    *,
    amplitude: complex = 1.0,
    duration: float | None = None,
    dt: float | None = None,
    basis: str = "classical",
    stages: int = 2,
    levels: int = 2,
) -> ProbeResult:
    """Steady-state transfer from ``drive`` to ``response`` at modulation ``omega``.

    Channels use the scattering-matrix labels; ``response`` may also be
    ``"displacement"`` (metres per unit incident amplitude). Lower-sideband
    channels report conjugated amplitudes, as in the frequency domain.
    ``stages`` selects the Gauss-Legendre rule (1 is the implicit midpoint
    rule); ``levels`` runs with ``N, 2N, ..., 2**(levels-1) N`` steps per
    period are combined by :func:`romberg`.

    Raises:
        ValueError: if ``dt`` is too coarse or does not divide the period,
            or if a carrier is not an integer multiple of ``omega``.
        UnstableSystem: if the periodic system has a growing solution.
        NotConverged: if ``duration`` leaves an undecayed transient.
    """
    if not omega > 0:
        raise ValueError("probe frequency must be positive")
    if basis not in ("classical", "bosonic"):
        raise ValueError("basis must be 'classical' or 'bosonic'")
    d_ch, r_ch = resolve_channel(system, drive), resolve_channel(system, response)
    if d_ch.kind == "displacement":
        raise ValueError("displacement is a response only")
    if derive_G(system.spec.em) == 0 and "mechanical" in (d_ch.kind, r_ch.kind):
        raise DecoupledMechanics("G = 0: the mechanical port is undefined")
    for ch in (d_ch, r_ch):
        if ch.kind in ("electrical", "optical") and not ch.lab_frequency(omega) > 0:
            raise ValueError(f"channel {ch.label} has non-positive lab frequency")
    for carrier in (system.omega_em, system.omega_om):
        ratio = carrier / omega
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError(
                f"carrier {carrier:.12g} rad/s is not an integer multiple of the probe frequency"
            )
    period = 2 * math.pi / omega
    w_max = max_frequency(system, omega)
    limit = MAX_STEP_FRACTION * 2 * math.pi / w_max
    if dt is None:
        n_steps = max(MIN_STEPS, math.ceil(period / (STEP_FRACTION * 2 * math.pi / w_max)))
    else:
        if not 0 < dt < limit:
            raise ValueError(f"dt must lie below {limit:.4g} s (0.05 of the fastest period)")
        n_steps = round(period / dt)
        if abs(n_steps * dt - period) > 1e-9 * period:
            raise ValueError("dt must divide the probe period")
    if levels < 1 or stages not in GAUSS_TABLEAUS:
        raise ValueError(f"need levels >= 1 and stages in {sorted(GAUSS_TABLEAUS)}")
    red = _reduction(system)
    amp = complex(amplitude)
    raw = []
    for k in range(levels):
        b, periods_k, rho_k = _single_run(
            system, red, d_ch, r_ch, omega, amp, n_steps * 2**k, period, duration, stages
        )
        if k == 0:
            periods, rho = periods_k, rho_k
        raw.append(b)

    def convert(b: complex) -> complex:
        a = amp
        if r_ch.sign < 0:
            b = np.conj(b)
        if d_ch.sign < 0:
            a = np.conj(a)
        s = b / a
        if basis == "bosonic":
            s *= bosonic_scale(system, d_ch, omega) / bosonic_scale(system, r_ch, omega)
        return complex(s)

    estimates = tuple(convert(b) for b in raw)
    return ProbeResult(romberg(estimates, 2 * stages), estimates, n_steps, periods, rho)
