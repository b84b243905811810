"""Thermal occupations, homodyne spectra, transfer efficiency and added noise."""

from __future__ import annotations

import numpy as np
from scipy.constants import hbar, k as K_B

from .errors import UnpairedChannels, ZeroTransfer


def bose_einstein(omega, temperature):
    """Thermal occupation ``1 / (exp(hbar w / k T) - 1)``; exactly zero at ``T = 0``."""
    w = np.asarray(omega, dtype=float)
    t = np.asarray(temperature, dtype=float)
    if np.any(w <= 0):
        raise ValueError("occupation needs positive frequencies")
    if np.any(t < 0):
        raise ValueError("temperature must be non-negative")
    w, t = np.broadcast_arrays(w, t)
    out = np.zeros(w.shape)
    hot = t > 0
    with np.errstate(over="ignore", divide="ignore"):  # deep quantum limit: 1/inf -> 0
        out[hot] = 1.0 / np.expm1(hbar * w[hot] / (K_B * t[hot]))
    return out if out.ndim else float(out)


def johnson_voltage_psd(resistance, omega, temperature):
    """Symmetrized spectral density of the incoming wave ``V_in`` on a port.

    ``(hbar w R / 2)(n + 1/2)``, which tends to ``R k T / 2`` classically.
    """
    n = bose_einstein(omega, temperature)
    return hbar * np.asarray(omega) * np.asarray(resistance) / 2 * (n + 0.5)


def occupations(sm) -> np.ndarray:
    """(N, C) thermal occupation of every input channel at its lab frequency."""
    lab = sm.lab_frequencies()
    temps = np.array([c.temperature for c in sm.channels])
    return bose_einstein(lab, np.broadcast_to(temps, lab.shape))


def readout_pair(sm, port: str) -> tuple[int, int]:
    """Indices of the (upper, lower) sideband channels of ``port``.

    Raises:
        UnpairedChannels: if the port lacks one of the two sidebands.
    """
    up = [k for k, c in enumerate(sm.channels) if c.port_id == port and c.sign > 0 and c.carrier > 0]
    dn = [k for k, c in enumerate(sm.channels) if c.port_id == port and c.sign < 0]
    if len(up) != 1 or len(dn) != 1:
        raise UnpairedChannels(f"port {port!r} has no (upper, lower) sideband pair")
    return up[0], dn[0]


def homodyne_spectrum(sm, port: str, theta: float, occupation: np.ndarray | None = None) -> np.ndarray:
    """Spectrum of ``X_theta = [e^{-i theta} b(w_c + W) + e^{i theta} b^dag(w_c - W)] / 2 + h.c.``

    Normalized by the vacuum value of the same estimator, so an identity
    scattering matrix with vacuum inputs gives exactly 1.
    """
    if sm.bosonic is None:
        raise ValueError("bosonic matrix missing")
    up, dn = readout_pair(sm, port)
    n = occupations(sm) if occupation is None else occupation
    v_up, v_dn = np.exp(-1j * theta) / 2, np.exp(1j * theta) / 2
    w = v_up * sm.bosonic[:, up, :] + v_dn * sm.bosonic[:, dn, :]
    vacuum = abs(v_up) ** 2 + abs(v_dn) ** 2
    return np.sum(np.abs(w) ** 2 * (2 * n + 1), axis=1) / vacuum


def transfer_and_noise(sm, signal_in: str, signal_out: str, occupation: np.ndarray | None = None):
    """Transfer efficiency ``eta`` and input-referred added noise ``N``.

    ``N`` counts the normally ordered output flux from every input except
    the signal channel, divided by ``eta``; conjugated (lower-sideband)
    inputs contribute ``n + 1`` quanta, the others ``n``.

    Raises:
        ZeroTransfer: where ``eta < 1e-30``.
    """
    if sm.bosonic is None:
        raise ValueError("bosonic matrix missing")
    i, o = sm.index(signal_in), sm.index(signal_out)
    n = occupations(sm) if occupation is None else occupation
    weight = n + np.array([1.0 if c.is_creation else 0.0 for c in sm.channels])[None, :]
    row = np.abs(sm.bosonic[:, o, :]) ** 2
    eta = row[:, i].copy()
    if np.any(eta < 1e-30):
        raise ZeroTransfer(f"transfer {signal_in} -> {signal_out} vanishes; added noise undefined")
    row[:, i] = 0.0
    return eta, np.sum(row * weight, axis=1) / eta
