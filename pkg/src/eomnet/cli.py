"""Command-line front end.

Usage::

    eomnet {validate,smatrix,squeeze,report,reduce} --config run.ini [--out DIR]

The config is a flat INI file in SI base units. Angular frequencies may be
given as ``omega_<name>`` (rad/s) or ``f_<name>`` (Hz), never both.
Outputs are written atomically; identical configs give byte-identical data
files.

Exit codes: 0 success, 1 config error, 2 physics error, 3 IO error.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
import tempfile
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .couplings import (
    ACBias,
    DCBias,
    EMCouplingSpec,
    MechanicalMode,
    OMCouplingSpec,
    TransducerSpec,
    derive_G,
    em_rates,
    om_rates,
    port_efficiencies,
    synthesize_branches,
)
from .equivcircuit import EquivalentCircuit, assemble, peak_frequency
from .errors import ConfigError, PhysicsError
from .netlist import Netlist, parse_netlist
from .noise import homodyne_spectrum, transfer_and_noise
from .reduce import reduce, reduced_smatrix
from .scattering import ScatteringMatrix, smatrix, smatrix_csv

EXIT_OK, EXIT_CONFIG, EXIT_PHYSICS, EXIT_IO = 0, 1, 2, 3

# allowed keys per section; frequency keys are listed by their bare name
_FREQUENCY_KEYS = {
    "mechanical": ("m0",),
    "em": ("d",),
    "om": ("cav", "l"),
    "sweep": ("min", "max"),
}
_PLAIN_KEYS = {
    "netlist": ("path",),
    "mechanical": ("m", "gamma_m0", "t_m"),
    "em": ("cc", "dcdx", "d2cdx2", "bias", "qc0"),
    "om": ("kappa_int", "kappa_ext", "g_om", "theta", "static_shift"),
    "sweep": ("points", "spacing"),
    "homodyne": ("theta", "port"),
    "report": ("signal_in", "signal_out", "omega_ref"),
    "reduce": ("at",),
}


# ---------------------------------------------------------------------------
# config


@dataclass(frozen=True)
class SweepConfig:
    omega_min: float
    omega_max: float
    points: int
    spacing: str = "linear"

    def __post_init__(self):
        if not (math.isfinite(self.omega_min) and self.omega_min > 0):
            raise ConfigError("[sweep] lower frequency must be finite and > 0")
        if not (math.isfinite(self.omega_max) and self.omega_max > self.omega_min):
            raise ConfigError("[sweep] upper frequency must exceed the lower one")
        if self.points < 2:
            raise ConfigError("[sweep] points must be at least 2")
        if self.spacing not in ("linear", "log"):
            raise ConfigError(f"[sweep] spacing must be 'linear' or 'log', got {self.spacing!r}")

    def grid(self) -> np.ndarray:
        if self.spacing == "log":
            return np.geomspace(self.omega_min, self.omega_max, self.points)
        return np.linspace(self.omega_min, self.omega_max, self.points)


@dataclass(frozen=True)
class RunConfig:
    netlist_path: Path
    net: Netlist
    spec: TransducerSpec
    sweep: SweepConfig | None
    thetas: tuple[float, ...]
    readout: str
    signal_in: str
    signal_out: str
    omega_ref: str = "omega_mQ"
    reduce_at: str = "omega_mQ"


class _Section:
    """Typed access to one INI section."""

    def __init__(self, parser: configparser.ConfigParser, name: str):
        self.name = name
        self.items = dict(parser.items(name)) if parser.has_section(name) else {}

    def __contains__(self, key: str) -> bool:
        return key in self.items

    def text(self, key: str, default: str | None = None) -> str:
        if key in self.items:
            return self.items[key].strip()
        if default is None:
            raise ConfigError(f"[{self.name}] missing key {key!r}")
        return default

    def number(self, key: str, default: float | None = None) -> float:
        if key not in self.items:
            if default is None:
                raise ConfigError(f"[{self.name}] missing key {key!r}")
            return default
        return _parse_number(self.items[key], f"[{self.name}] {key}")

    def frequency(self, key: str, required: bool = True) -> float | None:
        """``omega_<key>`` in rad/s or ``f_<key>`` in Hz."""
        omega, hertz = f"omega_{key}", f"f_{key}"
        if omega in self.items and hertz in self.items:
            raise ConfigError(f"[{self.name}] give either {omega} or {hertz}, not both")
        if omega in self.items:
            return self.number(omega)
        if hertz in self.items:
            return 2 * math.pi * self.number(hertz)
        if required:
            raise ConfigError(f"[{self.name}] missing key {omega!r} (or {hertz!r})")
        return None


def _parse_number(text: str, where: str) -> float:
    """Float literal, optionally suffixed by ``pi`` (``0.18pi``)."""
    token = text.strip().replace(" ", "")
    scale = 1.0
    if token.endswith("pi"):
        token, scale = token[:-2].rstrip("*") or "1", math.pi
    try:
        value = float(token) * scale
    except ValueError:
        raise ConfigError(f"{where}: cannot read number {text!r}") from None
    if not math.isfinite(value):
        raise ConfigError(f"{where}: value must be finite")
    return value


def _check_keys(parser: configparser.ConfigParser) -> None:
    for name in parser.sections():
        if name not in _PLAIN_KEYS:
            raise ConfigError(f"unknown section [{name}]")
        allowed = set(_PLAIN_KEYS[name])
        for bare in _FREQUENCY_KEYS.get(name, ()):
            allowed |= {f"omega_{bare}", f"f_{bare}"}
        for key in parser.options(name):
            if key not in allowed:
                raise ConfigError(f"[{name}] unknown key {key!r}")


def _require(parser: configparser.ConfigParser, *names: str) -> None:
    missing = [n for n in names if not parser.has_section(n)]
    if missing:
        raise ConfigError("missing config section " + ", ".join(f"[{n}]" for n in missing))


def _transducer(parser: configparser.ConfigParser) -> TransducerSpec:
    mech_s = _Section(parser, "mechanical")
    mech = MechanicalMode(
        mech_s.number("m"), mech_s.frequency("m0"), mech_s.number("gamma_m0"), mech_s.number("t_m", 0.0)
    )
    em_s = _Section(parser, "em")
    bias_kind = em_s.text("bias").lower()
    charge = em_s.number("qc0")
    if bias_kind == "ac":
        bias = ACBias(charge, em_s.frequency("d"))
    elif bias_kind == "dc":
        if em_s.frequency("d", required=False) is not None:
            raise ConfigError("[em] a drive frequency was given for a DC bias")
        bias = DCBias(charge)
    else:
        raise ConfigError(f"[em] bias must be 'dc' or 'ac', got {bias_kind!r}")
    em = EMCouplingSpec(em_s.number("cc"), em_s.number("dcdx"), em_s.number("d2cdx2", 0.0), bias)
    om = None
    if parser.has_section("om"):
        om_s = _Section(parser, "om")
        om = OMCouplingSpec(
            om_s.frequency("cav"), om_s.number("kappa_int"), om_s.number("kappa_ext"),
            om_s.frequency("l"), om_s.number("g_om"), om_s.number("static_shift", 0.0),
            om_s.number("theta", 0.0),
        )
    return TransducerSpec(mech, em, om)


def _default_port(net: Netlist) -> str:
    lines = [p.id for p in net.ports if p.origin == "transmission-line"]
    if lines:
        return lines[0]
    if not net.ports:
        raise ConfigError("the netlist has no port")
    return net.ports[0].id


def load_config(path: str | os.PathLike) -> RunConfig:
    """Read the INI file and the netlist it points to.

    Raises:
        ConfigError: malformed or incomplete config, invalid netlist text.
        OSError: unreadable config or netlist file.
    """
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    text = path.read_text()
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    _check_keys(parser)
    _require(parser, "netlist", "mechanical", "em")

    netlist_path = Path(_Section(parser, "netlist").text("path"))
    if not netlist_path.is_absolute():
        netlist_path = path.parent / netlist_path
    netlist_text = netlist_path.read_text()
    try:
        net = parse_netlist(netlist_text)
    except ConfigError as exc:
        raise ConfigError(f"{netlist_path}: {exc}") from None

    try:
        spec = _transducer(parser)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    sweep = None
    if parser.has_section("sweep"):
        s = _Section(parser, "sweep")
        points = s.number("points")
        if points != int(points):
            raise ConfigError("[sweep] points must be an integer")
        sweep = SweepConfig(s.frequency("min"), s.frequency("max"), int(points), s.text("spacing", "linear"))

    h = _Section(parser, "homodyne")
    thetas: tuple[float, ...] = ()
    if "theta" in h:
        parts = [p for p in h.text("theta").split(",") if p.strip()]
        thetas = tuple(_parse_number(p, "[homodyne] theta") for p in parts)
    readout = h.text("port", _default_port(net))

    r = _Section(parser, "report")
    port = _default_port(net)
    default_in = f"{port}+" if spec.em.is_ac else port
    default_out = "opt.ext+" if spec.om is not None else "mech"
    omega_ref = r.text("omega_ref", "omega_mQ")
    reduce_at = _Section(parser, "reduce").text("at", "omega_mQ")
    for where, value in (("[report] omega_ref", omega_ref), ("[reduce] at", reduce_at)):
        if value not in ("omega_mQ", "omega_m"):
            raise ConfigError(f"{where} must be 'omega_mQ' or 'omega_m', got {value!r}")
    return RunConfig(
        netlist_path, net, spec, sweep, thetas, readout,
        r.text("signal_in", default_in), r.text("signal_out", default_out), omega_ref, reduce_at,
    )


# ---------------------------------------------------------------------------
# helpers


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def write_atomic(path: Path, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        os.chmod(tmp, 0o666 & ~_umask())
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _with_context(exc: PhysicsError, context: str) -> PhysicsError:
    try:
        out = type(exc)(f"{context}: {exc}")
    except TypeError:
        out = PhysicsError(f"{context}: {exc}")
    return out


def _assemble(cfg: RunConfig, override_guard: bool) -> EquivalentCircuit:
    return assemble(cfg.spec, cfg.net, override_guard=override_guard)


def _require_sweep(cfg: RunConfig) -> SweepConfig:
    if cfg.sweep is None:
        raise ConfigError("missing config section [sweep]")
    return cfg.sweep


def sweep_smatrix(circuit: EquivalentCircuit, grid: np.ndarray, threads: int = 1) -> ScatteringMatrix:
    """Scattering matrices over ``grid``, computed in chunks on a thread pool.

    Chunks are reassembled in grid order whatever order they finish in.
    """
    circuit.check_frequencies(grid)
    n_chunks = max(1, min(len(grid), 4 * threads))
    chunks = np.array_split(grid, n_chunks)

    def work(chunk: np.ndarray) -> ScatteringMatrix:
        try:
            return smatrix(circuit, chunk)
        except PhysicsError as exc:
            raise _with_context(exc, f"Omega in [{chunk[0]:.6g}, {chunk[-1]:.6g}] rad/s") from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    return ScatteringMatrix(
        np.concatenate([p.omega for p in parts]),
        parts[0].channels,
        np.concatenate([p.classical for p in parts]),
        np.concatenate([p.bosonic for p in parts]),
    )


def _fmt(value: float) -> str:
    return f"{value:.12e}" if isinstance(value, float) else str(value)


def _key_values(rows: list[tuple[str, object, str]]) -> str:
    lines = []
    for key, value, unit in rows:
        line = f"{key} = {_fmt(value)}"
        lines.append(f"{line}  # {unit}" if unit else line)
    return "\n".join(lines) + "\n"


def _omega_ref(cfg: RunConfig, circuit: EquivalentCircuit) -> float:
    if cfg.omega_ref == "omega_m":
        return peak_frequency(circuit).omega_m
    return circuit.elements.omega_mQ


# ---------------------------------------------------------------------------
# commands


def cmd_validate(cfg: RunConfig) -> str:
    """Derived element values and rates, without solving the circuit."""
    spec = cfg.spec
    if derive_G(spec.em) == 0:
        warnings.warn("mechanical branch decoupled (G = 0)", stacklevel=2)
        el = synthesize_branches(spec.mech, spec.em, None, allow_decoupled=True)
    else:
        el = synthesize_branches(spec.mech, spec.em, spec.om)
    w_ref = el.omega_mQ
    rates = None if el.decoupled else em_rates(cfg.net, spec, el, w_ref)
    c_em = rates[1] if rates else math.nan
    c_om = om_rates(spec.om, spec.mech, w_ref)[1] if spec.om is not None else math.nan
    eta_el = port_efficiencies(cfg.net, spec.em.carrier + w_ref).get(cfg.readout, math.nan)
    eta_opt = spec.om.eta_opt if spec.om is not None else math.nan
    rows = [
        ("G", el.G, "V/m"),
        ("L_m", el.L_m, "H"),
        ("R_m", el.R_m, "ohm"),
        ("C_m", el.C_m, "F"),
        ("omega_mV", el.omega_mV, "rad/s"),
        ("omega_mQ", el.omega_mQ, "rad/s"),
        ("f_mV", el.omega_mV / (2 * math.pi), "Hz"),
        ("f_mQ", el.omega_mQ / (2 * math.pi), "Hz"),
        ("C_EM", c_em, ""),
        ("C_OM", c_om, ""),
        ("eta_el", eta_el, f"port {cfg.readout}"),
        ("eta_opt", eta_opt, ""),
    ]
    return _key_values(rows)


def cmd_smatrix(cfg: RunConfig, *, threads: int = 1, override_guard: bool = False) -> str:
    circuit = _assemble(cfg, override_guard)
    return smatrix_csv(sweep_smatrix(circuit, _require_sweep(cfg).grid(), threads))


def squeeze_spectra(cfg: RunConfig, *, threads: int = 1, override_guard: bool = False):
    """Grid and homodyne spectra, one row per configured angle."""
    if not cfg.thetas:
        raise ConfigError("[homodyne] theta list is required for squeeze")
    circuit = _assemble(cfg, override_guard)
    grid = _require_sweep(cfg).grid()
    sm = sweep_smatrix(circuit, grid, threads)
    try:
        spectra = np.array([homodyne_spectrum(sm, cfg.readout, th) for th in cfg.thetas])
    except PhysicsError as exc:
        raise _with_context(exc, f"readout {cfg.readout}") from exc
    return grid, spectra


def squeeze_csv(cfg: RunConfig, grid: np.ndarray, spectra: np.ndarray) -> str:
    cols = ["omega_rad_s"] + [f"S[theta={th:.12e}]" for th in cfg.thetas]
    lines = [f"# homodyne spectrum of port {cfg.readout}; shot noise = 1; theta in rad", ",".join(cols)]
    for n, w in enumerate(grid):
        lines.append(",".join([f"{w:.12e}"] + [f"{v:.12e}" for v in spectra[:, n]]))
    return "\n".join(lines) + "\n"


def cmd_squeeze(cfg: RunConfig, *, threads: int = 1, override_guard: bool = False) -> str:
    grid, spectra = squeeze_spectra(cfg, threads=threads, override_guard=override_guard)
    return squeeze_csv(cfg, grid, spectra)


def cmd_report(cfg: RunConfig, *, override_guard: bool = False) -> str:
    """Peak efficiency, added noise and effective damping as key = value lines."""
    circuit = _assemble(cfg, override_guard)
    spec, el = cfg.spec, circuit.elements
    w_ref = _omega_ref(cfg, circuit)
    peak = peak_frequency(circuit)
    sm = smatrix(circuit, [peak.omega_m])
    try:
        eta, noise = transfer_and_noise(sm, cfg.signal_in, cfg.signal_out)
    except KeyError as exc:
        raise ConfigError(f"[report] {exc.args[0]}") from None
    except PhysicsError as exc:
        raise _with_context(exc, f"{cfg.signal_in} -> {cfg.signal_out} at Omega = {peak.omega_m:.9g} rad/s") from exc
    rates = em_rates(cfg.net, spec, el, w_ref)
    g_em, c_em = (rates[0], rates[1]) if rates else (math.nan, math.nan)
    g_om, c_om = om_rates(spec.om, spec.mech, w_ref) if spec.om is not None else (math.nan, math.nan)
    rows = [
        ("omega_ref_choice", cfg.omega_ref, ""),
        ("omega_ref", w_ref, "rad/s"),
        ("G", el.G, "V/m"),
        ("L_m", el.L_m, "H"),
        ("R_m", el.R_m, "ohm"),
        ("omega_mV", el.omega_mV, "rad/s"),
        ("omega_mQ", el.omega_mQ, "rad/s"),
        ("omega_m", peak.omega_m, "rad/s"),
        ("R_meff", peak.R_meff, "ohm"),
        ("gamma_m0", spec.mech.gamma_m0, "rad/s"),
        ("gamma_meff", peak.gamma_meff, "rad/s"),
        ("g_EM", g_em, "rad/s"),
        ("C_EM", c_em, ""),
        ("g_OM", g_om, "rad/s"),
        ("C_OM", c_om, ""),
        ("signal_in", cfg.signal_in, ""),
        ("signal_out", cfg.signal_out, ""),
        ("eta", float(eta[0]), "at omega_m"),
        ("N", float(noise[0]), "quanta, input referred, at omega_m"),
    ]
    return _key_values(rows)


def cmd_reduce(cfg: RunConfig, *, threads: int = 1, override_guard: bool = False) -> tuple[str, str | None]:
    """Single-loop model summary and, with a sweep, reduced-vs-full S elements."""
    circuit = _assemble(cfg, override_guard)
    rc = reduce(circuit, at=cfg.reduce_at)
    rows: list[tuple[str, object, str]] = [
        ("omega_eval", rc.omega_eval, "rad/s"),
        ("C_tilde", rc.C_tilde, "F"),
        ("omega_m", rc.omega_m, "rad/s"),
        ("R_m", circuit.elements.R_m, "ohm"),
        ("R_meff", rc.R_meff, "ohm"),
        ("gamma_meff", rc.gamma_meff, "rad/s"),
    ]
    for k, br in enumerate(circuit.branches):
        tag = f"{br.subsystem}{'+' if br.sign > 0 else '-'}"
        rows.append((f"R[{tag}]", float(rc.resistances[k]), "ohm"))
        rows.append((f"gamma[{tag}]", float(rc.rates[k]), "rad/s"))
    summary = _key_values(rows)
    if cfg.sweep is None:
        return summary, None
    grid = cfg.sweep.grid()
    full = sweep_smatrix(circuit, grid, threads)
    red = reduced_smatrix(rc, grid)
    labels = full.labels
    cols = ["omega_rad_s"]
    for a in labels:
        for b in labels:
            cols += [f"re_red[{a};{b}]", f"im_red[{a};{b}]", f"re_full[{a};{b}]", f"im_full[{a};{b}]"]
    lines = [f"# reduced vs full bosonic scattering matrix; channels: {' '.join(labels)}", ",".join(cols)]
    for n, w in enumerate(grid):
        vals = np.stack([red.bosonic[n].real, red.bosonic[n].imag, full.bosonic[n].real, full.bosonic[n].imag], -1)
        lines.append(",".join([f"{w:.12e}"] + [f"{v:.12e}" for v in vals.reshape(-1)]))
    return summary, "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="INI run configuration")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
    common.add_argument("--override-sideband-guard", action="store_true",
                        help="allow modulation frequencies above 0.1 x the smallest carrier")
    common.add_argument("--plot", action="store_true", help="also render PNG figures (needs matplotlib)")
    parser = argparse.ArgumentParser(prog="eomnet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("validate", "print derived element values without solving"),
        ("smatrix", "bosonic scattering matrix over the sweep"),
        ("squeeze", "homodyne spectra over the sweep"),
        ("report", "peak efficiency, added noise and damping"),
        ("reduce", "single-loop mechanical model"),
    ):
        sub.add_parser(name, parents=[common], help=text)
    return parser


def _run(args: argparse.Namespace) -> None:
    if args.threads < 1:
        raise ConfigError("--threads must be at least 1")
    cfg = load_config(args.config)
    out: Path = args.out
    guard = args.override_sideband_guard
    if args.command == "validate":
        sys.stdout.write(cmd_validate(cfg))
    elif args.command == "smatrix":
        circuit = _assemble(cfg, guard)
        sm = sweep_smatrix(circuit, _require_sweep(cfg).grid(), args.threads)
        write_atomic(out / "smatrix.csv", smatrix_csv(sm))
        if args.plot:
            _plotting().smatrix_figure(sm, out / "smatrix.png")
    elif args.command == "squeeze":
        grid, spectra = squeeze_spectra(cfg, threads=args.threads, override_guard=guard)
        write_atomic(out / "squeeze.csv", squeeze_csv(cfg, grid, spectra))
        if args.plot:
            _plotting().squeezing_figure(grid, spectra, cfg.thetas, out / "squeeze.png")
    elif args.command == "report":
        write_atomic(out / "report.txt", cmd_report(cfg, override_guard=guard))
    elif args.command == "reduce":
        summary, table = cmd_reduce(cfg, threads=args.threads, override_guard=guard)
        write_atomic(out / "reduce.txt", summary)
        if table is not None:
            write_atomic(out / "reduce.csv", table)


def _plotting():
    try:
        from . import plotting
        plotting.require_backend()
    except ImportError as exc:
        raise ConfigError(f"--plot needs matplotlib (install the 'plot' extra): {exc}") from None
    return plotting


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        _run(args)
    except ConfigError as exc:
        print(f"eomnet: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PhysicsError as exc:
        print(f"eomnet: physics error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except OSError as exc:
        print(f"eomnet: IO error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
