"""Shared generators for randomized tests."""

from __future__ import annotations

import math

import numpy as np

from eomnet.netlist import Element, Netlist, parse_netlist
from eomnet.noise import bose_einstein

_KINDS = "RLCT"
_SCALE = {"R": 50.0, "T": 50.0, "L": 1e-6, "C": 1e-9}


def random_netlist(rng: np.random.Generator, max_nodes: int = 5) -> Netlist:
    """A connected RLC(T) netlist: a ring over all nodes plus random chords.

    Every node sits on the ring so no node is dangling, and the first ring
    element is always a resistor so the network has at least one port.
    """
    n = int(rng.integers(2, max_nodes + 1))
    nodes = [str(k) for k in range(n)]
    lines = []
    count = 0

    def add(a: str, b: str, kind: str | None = None) -> None:
        nonlocal count
        kind = kind or _KINDS[int(rng.integers(0, 4))]
        value = _SCALE[kind] * 10 ** rng.uniform(-1, 1)
        text = f"{kind}{count} {a} {b} {value!r}"
        if kind in "RT":
            text += f" temp={rng.uniform(0, 5)!r}"
        lines.append(text)
        count += 1

    for k in range(n):
        add(nodes[k], nodes[(k + 1) % n], "R" if k == 0 else None)
    for _ in range(int(rng.integers(0, 2 * n))):
        a, b = rng.choice(n, size=2, replace=False)
        add(nodes[a], nodes[b])
    a, b = rng.choice(n, size=2, replace=False)
    lines.append(f".couple {nodes[a]} {nodes[b]}")
    return parse_netlist("\n".join(lines))


def serial_netlist(inductance: float, r_loss: float, z_tx: float, t_loss=0.0, t_tx=0.0) -> Netlist:
    """The serial L + R_loss + line circuit, coupling terminals across the chain."""
    elements = (
        Element("L", "Ltank", "1", "2", inductance),
        Element("R", "Rloss", "2", "3", r_loss, t_loss),
        Element("T", "Ttx", "3", "0", z_tx, t_tx),
    )
    return Netlist(elements, ("1", "0"), "0")


def added_noise_closed_form(spec, net, circuit, omega_m, *, zero_temperature=False):
    """Mechanical, upper-sideband LC and suppressed lower-sideband terms."""
    L = net.element("Ltank").value
    r_lc = net.element("Rloss").value
    z_tx = net.element("Ttx").value
    t_lc = net.element("Rloss").temperature
    t_tx = net.element("Ttx").temperature
    eta_el = z_tx / (r_lc + z_tx)
    omega_lc = 1 / math.sqrt(L * spec.em.c_bar)
    q_lc = omega_lc * L / (r_lc + z_tx)

    def n(w, t):
        return 0.0 if zero_temperature else bose_einstein(w, t)

    mech = (1 / eta_el) * (circuit.elements.R_m * omega_m * spec.em.c_bar / q_lc) * n(omega_m, spec.mech.temperature)
    upper = (1 / eta_el - 1) * n(omega_lc, t_lc)
    image = omega_lc - 2 * omega_m
    suppression = 1 / (1 + (4 * omega_m * L / (r_lc + z_tx)) ** 2)
    lower = suppression * ((1 / eta_el - 1) * (n(image, t_lc) + 1) + n(image, t_tx) + 1)
    return mech + upper + lower
