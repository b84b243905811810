"""Scattering matrices over ports and sidebands.

Channel order is fixed: the mechanical noise port first, then every
electrical port as an (upper, lower) pair (a single baseband channel under
DC bias), then the optical ports ``opt.ext`` and ``opt.int`` as pairs.
Lower-sideband channels carry conjugated amplitudes, i.e. creation
operators in the bosonic basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .equivcircuit import EquivalentCircuit, LoopSolution, solve_loops
from .errors import NonPositiveLabFrequency


@dataclass(frozen=True)
class PortChannel:
    port_id: str
    subsystem: str  # "mechanical", "electrical" or "optical"
    carrier: float
    sign: int  # +1 upper or baseband, -1 lower (conjugated)
    impedance: float
    temperature: float
    branch_index: int = -1
    port_index: int = -1

    @property
    def label(self) -> str:
        if self.subsystem == "mechanical":
            return "mech"
        if self.carrier == 0:
            return self.port_id
        return f"{self.port_id}{'+' if self.sign > 0 else '-'}"

    @property
    def is_creation(self) -> bool:
        return self.sign < 0

    def lab_frequency(self, omega):
        return self.carrier + self.sign * np.asarray(omega, dtype=float)


def channels(circuit: EquivalentCircuit) -> tuple[PortChannel, ...]:
    out: list[PortChannel] = []
    el = circuit.elements
    if circuit.has_mechanics:
        out.append(PortChannel("mech", "mechanical", 0.0, +1, el.R_m, circuit.spec.mech.temperature))
    for subsystem in ("electrical", "optical"):
        idx = [k for k, b in enumerate(circuit.branches) if b.subsystem == subsystem]
        if not idx:
            continue
        load = circuit.branches[idx[0]].load
        order = list(range(len(load.port_ids)))
        if subsystem == "optical":
            order.sort(key=lambda j: load.port_ids[j] != "opt.ext")
        for j in order:
            for k in idx:
                br = circuit.branches[k]
                out.append(
                    PortChannel(load.port_ids[j], subsystem, br.carrier, br.sign,
                                float(load.port_impedances[j]), float(load.port_temperatures[j]), k, j)
                )
    return tuple(out)


@dataclass(frozen=True)
class ScatteringMatrix:
    """``S[n, a, b]``: output channel ``a`` per unit input on channel ``b`` at ``omega[n]``."""

    omega: np.ndarray
    channels: tuple[PortChannel, ...]
    classical: np.ndarray
    bosonic: np.ndarray | None = None

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(c.label for c in self.channels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown channel {label!r}; have {self.labels}") from None

    def lab_frequencies(self) -> np.ndarray:
        """(N, C) lab frequency of every channel."""
        return np.stack([c.lab_frequency(self.omega) if c.subsystem != "mechanical" else self.omega
                         for c in self.channels], axis=1)


def unit_excitations(circuit: EquivalentCircuit, samples, chans) -> tuple[np.ndarray, np.ndarray]:
    """Sources ``2 V_m`` (N, C) and ``V_s`` (N, B, C) for a unit input per channel."""
    n = len(samples[0].lab) if samples else 0
    C = len(chans)
    mech = np.zeros((n, C), complex)
    side = np.zeros((n, len(samples), C), complex)
    for c, ch in enumerate(chans):
        if ch.subsystem == "mechanical":
            mech[:, c] = 2.0
        else:
            side[:, ch.branch_index, c] = 2.0 * samples[ch.branch_index].h[:, ch.port_index]
    return mech, side


def classical_smatrix(
    circuit: EquivalentCircuit, omega, *, allow_negative: bool = False
) -> ScatteringMatrix:
    """Voltage-basis scattering matrix on a grid of modulation frequencies.

    Column ``b`` is the response to a unit incoming amplitude on channel
    ``b``; rows follow ``V_out = V_in + Z I_port`` with the port current
    obtained by superposition of the open-circuit port currents and the
    coupling-branch lab current.
    """
    samples = circuit.samples(omega, allow_negative=allow_negative)
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    chans = channels(circuit)
    mech, side = unit_excitations(circuit, samples, chans)
    sol = solve_loops(circuit, samples, w, mech, side)
    S = _output_rows(circuit, samples, chans, sol)
    return ScatteringMatrix(w, chans, S)


def _output_rows(circuit, samples, chans, sol: LoopSolution) -> np.ndarray:
    n, C = len(sol.omega), len(chans)
    S = np.zeros((n, C, C), complex)
    col_of = {(ch.branch_index, ch.port_index): c for c, ch in enumerate(chans)}
    for r, ch in enumerate(chans):
        S[:, r, r] = 1.0
        if ch.subsystem == "mechanical":
            S[:, r, :] -= circuit.elements.R_m * sol.mech_current
            continue
        smp = samples[ch.branch_index]
        j = ch.port_index
        port_current = smp.b[:, j, None] * sol.lab_currents[:, ch.branch_index, :]
        for k in range(smp.a.shape[1]):
            c = col_of[(ch.branch_index, k)]
            port_current[:, c] += 2.0 * smp.a[:, j, k]
        S[:, r, :] += ch.impedance * port_current
    return S


def bosonic_smatrix(sm: ScatteringMatrix) -> ScatteringMatrix:
    """Rescale to annihilation/creation operators: ``S_b = S_c sqrt(w_b Z_b / (w_a Z_a))``.

    Raises:
        NonPositiveLabFrequency: if any channel has a lab frequency <= 0.
    """
    lab = sm.lab_frequencies()
    if np.any(lab <= 0):
        raise NonPositiveLabFrequency("bosonic rescaling needs positive lab frequencies on all channels")
    z = np.array([c.impedance for c in sm.channels])
    weight = np.sqrt(lab * z[None, :])
    Sb = sm.classical * weight[:, None, :] / weight[:, :, None]
    return ScatteringMatrix(sm.omega, sm.channels, sm.classical, Sb)


def smatrix(circuit: EquivalentCircuit, omega) -> ScatteringMatrix:
    """Classical and bosonic matrices together."""
    return bosonic_smatrix(classical_smatrix(circuit, omega))


def symplectic_residual(sm: ScatteringMatrix) -> np.ndarray:
    """``max_a |sum_k |S_b[a,k]|^2 s_k - s_a|`` per frequency, with ``s = -1`` on lower sidebands."""
    if sm.bosonic is None:
        raise ValueError("bosonic matrix missing")
    s = np.array([-1.0 if c.is_creation else 1.0 for c in sm.channels])
    norms = (np.abs(sm.bosonic) ** 2) @ s
    return np.max(np.abs(norms - s[None, :]), axis=1)


def smatrix_csv(sm: ScatteringMatrix, which: str = "bosonic") -> str:
    """One row per frequency, Re/Im interleaved, row-major over (out, in)."""
    data = sm.bosonic if which == "bosonic" else sm.classical
    labels = sm.labels
    cols = ["omega_rad_s"]
    for a in labels:
        for b in labels:
            cols += [f"re_S[{a};{b}]", f"im_S[{a};{b}]"]
    lines = [f"# {which} scattering matrix; channels: {' '.join(labels)}", ",".join(cols)]
    for n, w in enumerate(sm.omega):
        flat = data[n].reshape(-1)
        vals = np.empty(2 * flat.size)
        vals[0::2], vals[1::2] = flat.real, flat.imag
        lines.append(",".join([f"{w:.12e}"] + [f"{v:.12e}" for v in vals]))
    return "\n".join(lines) + "\n"
