"""SPICE-like netlists and their linear response at the coupling terminals.

A netlist describes the physical electrical circuit that the coupling
capacitor is attached to, without the coupling capacitor itself. Every
resistor and every transmission-line element is a port with its own noise
temperature; a resistor of zero ohms is an ideal wire.

Sign conventions (time dependence ``exp(-i w t)``):

* inductor impedance ``-i w L``, capacitor impedance ``1 / (-i w C)``;
* a port element ``X a b`` is a source ``e = 2 V_in`` in series with its
  impedance ``Z``, so that ``V_a - V_b = e + Z I_ab`` with ``I_ab`` the current
  flowing through the element from ``a`` to ``b``;
* the coupling branch draws current ``I_c`` out of the first coupling
  terminal and returns it into the second one, so that the terminal voltage
  is ``V_oc - Z_thev I_c``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DanglingNode,
    MissingCoupleDirective,
    NetlistSyntaxError,
    NonPositiveValue,
    SelfLoop,
    SingularNetwork,
)

SI_SUFFIXES = {"p": 1e-12, "n": 1e-9, "u": 1e-6, "m": 1e-3, "k": 1e3, "M": 1e6, "G": 1e9}
_VALUE_RE = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)([pnumkMG]?)$")
_NODE_RE = re.compile(r"^[A-Za-z0-9_]+$")
_NAME_RE = re.compile(r"^[RLCT][A-Za-z0-9_]*$")

RCOND_LIMIT = 1e-14
GROUND = "0"


def parse_value(token: str) -> float:
    """Parse a number with optional SI suffix, e.g. ``7.96e-7`` or ``50k``.

    Raises:
        ValueError: if the token is not a number.
    """
    match = _VALUE_RE.match(token)
    if match is None:
        raise ValueError(f"not a number: {token!r}")
    mantissa, suffix = match.groups()
    return float(mantissa) * SI_SUFFIXES.get(suffix, 1.0)


@dataclass(frozen=True)
class Element:
    """One two-terminal element. ``name`` includes the kind letter."""

    kind: str
    name: str
    node_a: str
    node_b: str
    value: float
    temperature: float = 0.0

    @property
    def is_port(self) -> bool:
        return self.kind == "T" or (self.kind == "R" and self.value > 0)

    @property
    def is_wire(self) -> bool:
        return self.kind == "R" and self.value == 0


@dataclass(frozen=True)
class Port:
    """A dissipative element viewed as a semi-infinite line (Nyquist mapping)."""

    id: str
    impedance: float
    temperature: float
    origin: str  # "transmission-line" or "resistor-mapped"
    node_a: str
    node_b: str


@dataclass(frozen=True)
class Netlist:
    elements: tuple[Element, ...]
    couple_terminals: tuple[str, str]
    ground: str = GROUND

    @property
    def ports(self) -> tuple[Port, ...]:
        out = []
        for el in self.elements:
            if el.is_port:
                origin = "transmission-line" if el.kind == "T" else "resistor-mapped"
                out.append(Port(el.name, el.value, el.temperature, origin, el.node_a, el.node_b))
        return tuple(out)

    @property
    def port_ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.ports)

    @property
    def nodes(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for el in self.elements:
            seen.setdefault(el.node_a)
            seen.setdefault(el.node_b)
        for node in self.couple_terminals:
            seen.setdefault(node)
        return tuple(seen)

    def element(self, name: str) -> Element:
        for el in self.elements:
            if el.name == name:
                return el
        raise KeyError(name)


def _syntax(msg: str, line: int, col: int) -> NetlistSyntaxError:
    return NetlistSyntaxError(msg, line, col)


def _tokens(line: str) -> list[tuple[str, int]]:
    return [(m.group(0), m.start() + 1) for m in re.finditer(r"\S+", line)]


def parse_netlist(text: str) -> Netlist:
    """Parse netlist text into a validated :class:`Netlist`.

    Grammar, one statement per line, ``#`` starts a comment::

        R<name> <node> <node> <ohms> [temp=<K>]
        L<name> <node> <node> <henry>
        C<name> <node> <node> <farad>
        T<name> <node> <node> <ohms> [temp=<K>]
        .couple <node> <node>
    """
    elements: list[Element] = []
    couple: tuple[str, str] | None = None
    names: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        toks = _tokens(line)
        if not toks:
            continue
        head, col = toks[0]
        if head.startswith("."):
            if head.lower() != ".couple":
                raise _syntax(f"unknown directive {head!r}", lineno, col)
            if len(toks) != 3:
                raise _syntax(".couple takes exactly two nodes", lineno, col)
            if couple is not None:
                raise _syntax("only one .couple directive is allowed", lineno, col)
            for tok, tcol in toks[1:]:
                if not _NODE_RE.match(tok):
                    raise _syntax(f"bad node id {tok!r}", lineno, tcol)
            if toks[1][0] == toks[2][0]:
                raise SelfLoop(f"line {lineno}: coupling terminals must be distinct")
            couple = (toks[1][0], toks[2][0])
            continue
        if not _NAME_RE.match(head):
            raise _syntax(f"unknown element {head!r}", lineno, col)
        kind = head[0]
        if len(toks) < 4:
            raise _syntax("element needs two nodes and a value", lineno, col)
        (na, ca), (nb, cb), (val_tok, cv) = toks[1:4]
        for tok, tcol in ((na, ca), (nb, cb)):
            if not _NODE_RE.match(tok):
                raise _syntax(f"bad node id {tok!r}", lineno, tcol)
        try:
            value = parse_value(val_tok)
        except ValueError:
            raise _syntax(f"bad value {val_tok!r}", lineno, cv) from None
        temperature = 0.0
        for tok, tcol in toks[4:]:
            if not tok.startswith("temp=") or kind not in "RT":
                raise _syntax(f"unexpected token {tok!r}", lineno, tcol)
            if temperature != 0.0 or tok == "temp=":
                raise _syntax(f"bad temperature {tok!r}", lineno, tcol)
            try:
                temperature = parse_value(tok[5:])
            except ValueError:
                raise _syntax(f"bad temperature {tok!r}", lineno, tcol + 5) from None
            if temperature < 0:
                raise NonPositiveValue(f"line {lineno}: negative temperature for {head}")
        if head in names:
            raise _syntax(f"duplicate element name {head!r}", lineno, col)
        names.add(head)
        if na == nb:
            raise SelfLoop(f"line {lineno}: {head} connects node {na!r} to itself")
        if kind == "R":
            if value < 0:
                raise NonPositiveValue(f"line {lineno}: {head} has negative resistance")
        elif value <= 0:
            raise NonPositiveValue(f"line {lineno}: {head} must be strictly positive")
        elements.append(Element(kind, head, na, nb, value, temperature))
    if couple is None:
        raise MissingCoupleDirective("netlist has no .couple directive")
    net = _assemble(elements, couple)
    _check_dangling(net)
    return net


def _assemble(elements: list[Element], couple: tuple[str, str]) -> Netlist:
    nodes = {n for el in elements for n in (el.node_a, el.node_b)} | set(couple)
    ground = GROUND if GROUND in nodes else couple[1]
    return Netlist(tuple(elements), couple, ground)


def _check_dangling(net: Netlist) -> None:
    count: dict[str, int] = {}
    for el in net.elements:
        for node in (el.node_a, el.node_b):
            count[node] = count.get(node, 0) + 1
    for node in net.couple_terminals:
        if count.get(node, 0) == 0:
            raise DanglingNode(f"coupling terminal {node!r} touches no element")
    for node, n in count.items():
        if n < 2 and node not in net.couple_terminals and node != net.ground:
            raise DanglingNode(f"node {node!r} touches a single element terminal")


def format_netlist(net: Netlist) -> str:
    """Render a netlist as text that :func:`parse_netlist` reads back exactly."""
    lines = []
    for el in net.elements:
        text = f"{el.name} {el.node_a} {el.node_b} {el.value!r}"
        if el.kind in "RT":
            text += f" temp={el.temperature!r}"
        lines.append(text)
    lines.append(f".couple {net.couple_terminals[0]} {net.couple_terminals[1]}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# nodal analysis


@dataclass(frozen=True)
class NetworkResponse:
    """Linear response of a netlist at one lab-frame frequency.

    Attributes:
        omega: angular frequency in rad/s.
        z_thev: impedance across the coupling terminals, sources off.
        source_transfer: ``H_j``; open-circuit coupling voltage per unit
            ``2 V_in`` of port ``j``.
        injection_response: ``B_i``; current through port ``i`` (from its
            first to its second node) per unit current drawn by the coupling
            branch, sources off.
        oc_port_currents: ``A_ij``; current through port ``i`` per unit
            ``2 V_in`` of port ``j`` with the coupling terminals open.
        port_ids: port order used by the arrays.
    """

    omega: float
    z_thev: complex
    source_transfer: np.ndarray
    injection_response: np.ndarray
    oc_port_currents: np.ndarray
    port_ids: tuple[str, ...]


@dataclass(frozen=True)
class ResponseSweep:
    """Same quantities as :class:`NetworkResponse` with a leading frequency axis."""

    omega: np.ndarray
    z_thev: np.ndarray
    source_transfer: np.ndarray
    injection_response: np.ndarray
    oc_port_currents: np.ndarray
    port_ids: tuple[str, ...]
    port_impedances: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def at(self, k: int) -> NetworkResponse:
        return NetworkResponse(
            float(self.omega[k]),
            complex(self.z_thev[k]),
            self.source_transfer[k],
            self.injection_response[k],
            self.oc_port_currents[k],
            self.port_ids,
        )


@dataclass(frozen=True)
class _NodalModel:
    n: int
    conductance: np.ndarray
    capacitance: np.ndarray
    inv_inductance: np.ndarray
    rhs: np.ndarray  # (n, 1 + P) constant excitation columns
    couple_inc: np.ndarray  # (n,) incidence of the coupling terminals
    port_inc: np.ndarray  # (P, n) incidence of each port
    port_z: np.ndarray  # (P,)


def _merge_wires(net: Netlist) -> dict[str, str]:
    parent = {node: node for node in net.nodes}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for el in net.elements:
        if el.is_wire:
            ra, rb = find(el.node_a), find(el.node_b)
            if ra != rb:
                parent[ra] = rb
    return {node: find(node) for node in net.nodes}


def _nodal_model(net: Netlist) -> _NodalModel:
    rep = _merge_wires(net)
    ground = rep[net.ground]
    index: dict[str, int] = {}
    for node in net.nodes:
        r = rep[node]
        if r != ground and r not in index:
            index[r] = len(index)
    n = len(index)

    def inc(a: str, b: str) -> np.ndarray:
        vec = np.zeros(n)
        ra, rb = rep[a], rep[b]
        if ra != ground:
            vec[index[ra]] += 1.0
        if rb != ground:
            vec[index[rb]] -= 1.0
        return vec

    G = np.zeros((n, n))
    Cm = np.zeros((n, n))
    iL = np.zeros((n, n))
    ports = net.ports
    port_inc = np.array([inc(p.node_a, p.node_b) for p in ports]).reshape(len(ports), n)
    port_z = np.array([p.impedance for p in ports], dtype=float)
    for el in net.elements:
        if el.is_wire:
            continue
        u = inc(el.node_a, el.node_b)
        stamp = np.outer(u, u)
        if el.kind in "RT":
            G += stamp / el.value
        elif el.kind == "C":
            Cm += stamp * el.value
        else:
            iL += stamp / el.value
    couple_inc = inc(*net.couple_terminals)
    rhs = np.zeros((n, 1 + len(ports)))
    rhs[:, 0] = couple_inc
    for j in range(len(ports)):
        rhs[:, 1 + j] = port_inc[j] / port_z[j]
    return _NodalModel(n, G, Cm, iL, rhs, couple_inc, port_inc, port_z)


def network_response_sweep(net: Netlist, omegas) -> ResponseSweep:
    """Evaluate the network response on a grid of positive frequencies.

    Each frequency costs one factorization of the nodal matrix with
    ``1 + P`` right-hand sides: a unit current injected at the coupling
    terminals and one unit source per port. Everything else follows by
    superposition.

    Raises:
        SingularNetwork: if the equilibrated nodal matrix has reciprocal
            condition number below ``1e-14`` at any frequency.
    """
    w = np.atleast_1d(np.asarray(omegas, dtype=float))
    if np.any(~(w > 0)):
        raise ValueError("network response needs strictly positive frequencies")
    model = _nodal_model(net)
    n, P = model.n, len(model.port_z)
    s = -1j * w[:, None, None]
    Y = model.conductance + s * model.capacitance + model.inv_inductance / s
    diag = np.abs(np.diagonal(Y, axis1=1, axis2=2))
    scale = np.where(diag > 0, 1.0 / np.sqrt(np.where(diag > 0, diag, 1.0)), 1.0)
    Ys = scale[:, :, None] * Y * scale[:, None, :]
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(Ys)
    bad = ~(np.isfinite(cond) & (1.0 / cond >= RCOND_LIMIT))
    if np.any(bad):
        k = int(np.argmax(bad))
        raise SingularNetwork(
            f"nodal matrix singular at omega={w[k]:.6g} rad/s (rcond={1.0 / cond[k]:.3g})"
        )
    rhs = scale[:, :, None] * model.rhs[None, :, :]
    V = scale[:, :, None] * np.linalg.solve(Ys, rhs)
    vc = np.einsum("n,wnk->wk", model.couple_inc, V)
    vp = np.einsum("pn,wnk->wpk", model.port_inc, V)
    z_thev = vc[:, 0]
    H = vc[:, 1:]
    B = -vp[:, :, 0] / model.port_z[None, :]
    A = (vp[:, :, 1:] - np.eye(P)[None]) / model.port_z[None, :, None]
    del n
    return ResponseSweep(w, z_thev, H, B, A, net.port_ids, model.port_z.copy())


def network_response(net: Netlist, omega: float) -> NetworkResponse:
    """Thevenin impedance, source transfers and port responses at ``omega``."""
    if not omega > 0:
        raise ValueError("network response needs a strictly positive frequency")
    return network_response_sweep(net, [omega]).at(0)
