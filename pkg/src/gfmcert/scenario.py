"""Scenario files: TOML tables with unit-suffixed numbers.

A scenario carries the network (either an explicit line list or a larger
network that is Kron-reduced onto the converter buses), one droop converter
per node on its own MVA base, and optional grid, simulation and output
settings.  Parsing collects every problem before raising.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import tomli
import tomli_w

from .devices import ConverterSpec, rebase_gains
from .errors import GfmCertError, ParseError, ValidationError
from .netmodel import NetworkLevel, NetworkSpec, kron_reduce

_UNITS = {
    "pu": ("pu", 1.0),
    "s": ("time", 1.0),
    "ms": ("time", 1e-3),
    "hz": ("freq", 2 * np.pi),
    "rad/s": ("freq", 1.0),
    "mva": ("power", 1.0),
    "rad": ("angle", 1.0),
    "deg": ("angle", np.pi / 180),
}
_NUM = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z/]*)\s*$")


def parse_quantity(value, kind: str = "pu", where: str = "value") -> float:
    """Number or '<number> <unit>' string converted to base units.

    Bare numbers are taken in the base unit of ``kind`` (pu, s, rad/s, MVA, rad).
    """
    if isinstance(value, bool):
        raise ValueError(f"{where}: expected a number, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ValueError(f"{where}: expected a number, got {type(value).__name__}")
    m = _NUM.match(value)
    if not m:
        raise ValueError(f"{where}: cannot read {value!r} as a quantity")
    num, unit = float(m.group(1)), m.group(2).lower()
    if not unit:
        return num
    if unit not in _UNITS:
        raise ValueError(f"{where}: unknown unit {m.group(2)!r}")
    dim, factor = _UNITS[unit]
    if dim != kind:
        raise ValueError(f"{where}: unit {m.group(2)!r} does not fit a {kind} quantity")
    return num * factor


@dataclass(frozen=True)
class LineSpec:
    i: int                  # 1-based bus numbers
    j: int
    b: float                # susceptance, pu
    r: float = 0.0          # resistance, pu (informational)


@dataclass(frozen=True)
class GridSettings:
    points: int = 400
    omega_min: float = 1e-3
    omega_max: float = 1e5


@dataclass(frozen=True)
class SimulationSettings:
    channel: str = "dp_d1"
    magnitude: float = 0.05
    start: float = 0.0
    t_end: float = 5.0
    dt: Optional[float] = None


@dataclass(frozen=True)
class OutputSettings:
    directory: str = "gfmcert-out"
    format: Optional[str] = None    # None: each command picks its own


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    network: NetworkSpec            # reduced onto converter buses
    converters: tuple               # on the global base
    level: NetworkLevel = NetworkLevel.DYNAMIC
    grid: GridSettings = GridSettings()
    simulation: SimulationSettings = SimulationSettings()
    output: OutputSettings = OutputSettings()
    description: str = ""
    lines: tuple = ()
    boundary: tuple = ()            # converter buses when Kron reduction applies
    s_base: float = 100.0
    local_converters: tuple = ()    # as written, on their own bases

    def to_dict(self) -> dict:
        return scenario_to_dict(self)

    def __eq__(self, other):
        return isinstance(other, Scenario) and self.to_dict() == other.to_dict()

    def ratio_range(self):
        """(min, max) of r/x over lines with known resistance."""
        vals = [ln.r * ln.b for ln in self.lines if ln.r > 0]
        return (min(vals), max(vals)) if vals else None


_NETWORK_KEYS = {"rho", "omega0", "s_base", "vmax", "vmin", "v0", "delta0", "level", "lines", "boundary"}
_LINE_KEYS = {"from", "to", "b", "x", "r"}
_CONV_KEYS = {"name", "node", "d_p", "d_q", "tau_p", "tau_q", "s_base"}
_TOP_KEYS = {"name", "description", "network", "converters", "grid", "simulation", "output"}


class _Collector:
    def __init__(self):
        self.problems = []

    def get(self, table, key, kind, where, default=None, required=False):
        if key not in table:
            if required:
                self.problems.append(f"{where}.{key}: missing")
            return default
        try:
            return parse_quantity(table[key], kind, f"{where}.{key}")
        except ValueError as exc:
            self.problems.append(str(exc))
            return default

    def unknown(self, table, allowed, where):
        for k in table:
            if k not in allowed:
                self.problems.append(f"{where}.{k}: unknown key")


def _vector(col, table, key, kind, where, n, default):
    if key not in table:
        return None if default is None else np.full(n, default)
    raw = table[key]
    if not isinstance(raw, list):
        col.problems.append(f"{where}.{key}: expected a list")
        return None
    out = []
    for k, item in enumerate(raw):
        try:
            out.append(parse_quantity(item, kind, f"{where}.{key}[{k}]"))
        except ValueError as exc:
            col.problems.append(str(exc))
            out.append(np.nan)
    return np.array(out)


def scenario_from_dict(data: dict, source: str = "<scenario>") -> Scenario:
    col = _Collector()
    if not isinstance(data, dict):
        raise ParseError(f"{source}: top level must be a table")
    col.unknown(data, _TOP_KEYS, "scenario")
    name = str(data.get("name", Path(source).stem))
    description = str(data.get("description", ""))
    net_t = data.get("network")
    if not isinstance(net_t, dict):
        raise ValidationError([f"{source}: [network] table is missing"])
    col.unknown(net_t, _NETWORK_KEYS, "network")
    rho = col.get(net_t, "rho", "pu", "network", required=True)
    omega0 = col.get(net_t, "omega0", "freq", "network", default=100 * np.pi)
    s_base = col.get(net_t, "s_base", "power", "network", default=100.0)
    vmax = col.get(net_t, "vmax", "pu", "network", default=1.1)
    vmin = col.get(net_t, "vmin", "pu", "network", default=0.9)
    try:
        level = NetworkLevel.parse(net_t.get("level", "dynamic"))
    except ValueError as exc:
        col.problems.append(f"network.level: {exc}")
        level = NetworkLevel.DYNAMIC

    lines = []
    raw_lines = net_t.get("lines", [])
    if not isinstance(raw_lines, list) or not raw_lines:
        col.problems.append("network.lines: at least one line is required")
        raw_lines = []
    for k, ln in enumerate(raw_lines):
        where = f"network.lines[{k}]"
        if not isinstance(ln, dict):
            col.problems.append(f"{where}: expected a table")
            continue
        col.unknown(ln, _LINE_KEYS, where)
        i, j = ln.get("from"), ln.get("to")
        if not (isinstance(i, int) and isinstance(j, int)) or i < 1 or j < 1:
            col.problems.append(f"{where}: 'from' and 'to' must be positive bus numbers")
            continue
        if i == j:
            col.problems.append(f"{where}: line connects bus {i} to itself")
            continue
        if ("b" in ln) == ("x" in ln):
            col.problems.append(f"{where}: give exactly one of 'b' or 'x'")
            continue
        if "b" in ln:
            b = col.get(ln, "b", "pu", where)
        else:
            x = col.get(ln, "x", "pu", where)
            b = None if x is None or x <= 0 else 1.0 / x
            if x is not None and x <= 0:
                col.problems.append(f"{where}.x: must be positive")
        r = col.get(ln, "r", "pu", where, default=0.0)
        if b is not None:
            if b < 0:
                col.problems.append(f"{where}.b: must be nonnegative")
            lines.append(LineSpec(i, j, b, r or 0.0))

    n_bus = max([max(ln.i, ln.j) for ln in lines], default=0)
    boundary = net_t.get("boundary")
    if boundary is not None:
        if (not isinstance(boundary, list) or not boundary
                or not all(isinstance(x, int) and 1 <= x <= n_bus for x in boundary)):
            col.problems.append(f"network.boundary: expected bus numbers between 1 and {n_bus}")
            boundary = None
        elif len(set(boundary)) != len(boundary):
            col.problems.append("network.boundary: duplicate bus numbers")
            boundary = None
    n = len(boundary) if boundary else n_bus

    v0 = _vector(col, net_t, "v0", "pu", "network", n, 1.0)
    delta0 = _vector(col, net_t, "delta0", "angle", "network", n, 0.0)

    convs_t = data.get("converters", [])
    if not isinstance(convs_t, list):
        col.problems.append("converters: expected an array of tables")
        convs_t = []
    local = [None] * n
    seen = set()
    for k, ct in enumerate(convs_t):
        where = f"converters[{k}]"
        if not isinstance(ct, dict):
            col.problems.append(f"{where}: expected a table")
            continue
        col.unknown(ct, _CONV_KEYS, where)
        node = ct.get("node", k + 1)
        if not isinstance(node, int) or not 1 <= node <= n:
            col.problems.append(f"{where}.node: must be between 1 and {n}")
            continue
        if node in seen:
            col.problems.append(f"{where}.node: node {node} already has a converter")
            continue
        seen.add(node)
        vals = dict(
            d_p=col.get(ct, "d_p", "pu", where, required=True),
            d_q=col.get(ct, "d_q", "pu", where, required=True),
            tau_p=col.get(ct, "tau_p", "time", where, default=0.0),
            tau_q=col.get(ct, "tau_q", "time", where, default=0.0),
            s_local=col.get(ct, "s_base", "power", where, default=s_base),
        )
        if any(v is None for v in vals.values()):
            continue
        try:
            local[node - 1] = ConverterSpec(s_global=s_base or 100.0, name=str(ct.get("name", f"GFM{node}")),
                                            **vals)
        except ValidationError as exc:
            col.problems.extend(f"{where}: {p}" for p in exc.problems)
    if len(convs_t) != n:
        col.problems.append(f"converters: {len(convs_t)} given for {n} network nodes")

    grid_t = data.get("grid", {})
    col.unknown(grid_t, {"points", "omega_min", "omega_max"}, "grid")
    points = grid_t.get("points", 400)
    if not isinstance(points, int) or points < 2:
        col.problems.append("grid.points: must be an integer >= 2")
        points = 400
    grid = GridSettings(points, col.get(grid_t, "omega_min", "freq", "grid", default=1e-3),
                        col.get(grid_t, "omega_max", "freq", "grid", default=1e5))
    if grid.omega_min is not None and grid.omega_max is not None and not 0 < grid.omega_min < grid.omega_max:
        col.problems.append("grid: need 0 < omega_min < omega_max")

    sim_t = data.get("simulation", {})
    col.unknown(sim_t, {"channel", "magnitude", "start", "t_end", "dt"}, "simulation")
    sim = SimulationSettings(
        str(sim_t.get("channel", "dp_d1")),
        col.get(sim_t, "magnitude", "pu", "simulation", default=0.05),
        col.get(sim_t, "start", "time", "simulation", default=0.0),
        col.get(sim_t, "t_end", "time", "simulation", default=5.0),
        col.get(sim_t, "dt", "time", "simulation", default=None),
    )
    if not re.fullmatch(r"(dp_d|dq_d|domega_d|dv_d)\d+", sim.channel):
        col.problems.append(f"simulation.channel: unknown channel {sim.channel!r}")
    elif int(re.sub(r"\D", "", sim.channel)) > n:
        col.problems.append(f"simulation.channel: node out of range in {sim.channel!r}")

    out_t = data.get("output", {})
    col.unknown(out_t, {"directory", "format"}, "output")
    fmt = out_t.get("format")
    output = OutputSettings(str(out_t.get("directory", "gfmcert-out")), None if fmt is None else str(fmt))
    if output.format not in (None, "csv", "json", "svg"):
        col.problems.append("output.format: must be csv, json or svg")

    network = None
    if not col.problems:
        full = np.zeros((n_bus, n_bus))
        for ln in lines:
            full[ln.i - 1, ln.j - 1] += ln.b
            full[ln.j - 1, ln.i - 1] += ln.b
        try:
            bred = kron_reduce(full, [x - 1 for x in boundary]) if boundary else full
            network = NetworkSpec(b=bred, rho=rho, omega0=omega0, v0=v0, delta0=delta0, vmax=vmax, vmin=vmin)
        except (ValidationError) as exc:
            col.problems.extend(f"network: {p}" for p in exc.problems)
        except GfmCertError as exc:
            col.problems.append(f"network: {exc}")
        if network is not None and not _connected(network.b):
            col.problems.append("network: reduced graph is not connected")
    if col.problems:
        raise ValidationError(col.problems)
    return Scenario(name, network, tuple(rebase_gains(c) for c in local), level, grid, sim, output,
                    description, tuple(lines), tuple(boundary or ()), s_base, tuple(local))


def _connected(b) -> bool:
    n = b.shape[0]
    seen, stack = {0}, [0]
    while stack:
        i = stack.pop()
        for j in np.nonzero(b[i] > 0)[0]:
            if j not in seen:
                seen.add(int(j))
                stack.append(int(j))
    return len(seen) == n


def parse_scenario(path) -> Scenario:
    """Read a scenario file or a bundled scenario name."""
    p = resolve_scenario_path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror or exc}") from exc
    return parse_scenario_text(text, str(p))


def parse_scenario_text(text: str, source: str = "<scenario>") -> Scenario:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ParseError(f"{source}: {exc}") from exc
    return scenario_from_dict(data, source)


def bundled_scenarios():
    root = resources.files("gfmcert") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def resolve_scenario_path(path) -> Path:
    p = Path(path)
    if p.exists():
        return p
    name = str(path)
    if name in bundled_scenarios():
        return Path(str(resources.files("gfmcert") / "scenarios" / f"{name}.toml"))
    if not p.suffix:
        raise ParseError(f"{path}: no such file and no bundled scenario of that name")
    return p


def _num(x):
    return float(x)


def scenario_to_dict(s: Scenario) -> dict:
    net = s.network
    out = {"name": s.name}
    if s.description:
        out["description"] = s.description
    nt = {
        "rho": _num(net.rho),
        "omega0": _num(net.omega0),
        "s_base": _num(s.s_base),
        "vmax": _num(net.vmax),
        "vmin": _num(net.vmin),
        "v0": [_num(x) for x in net.v0],
        "delta0": [_num(x) for x in net.delta0],
        "level": s.level.value,
        "lines": [{"from": ln.i, "to": ln.j, "b": _num(ln.b), **({"r": _num(ln.r)} if ln.r else {})}
                  for ln in s.lines],
    }
    if s.boundary:
        nt["boundary"] = list(s.boundary)
    out["network"] = nt
    out["converters"] = [
        {"name": c.name, "node": k + 1, "d_p": _num(c.d_p), "d_q": _num(c.d_q),
         "tau_p": _num(c.tau_p), "tau_q": _num(c.tau_q), "s_base": _num(c.s_local)}
        for k, c in enumerate(s.local_converters)
    ]
    out["grid"] = {"points": s.grid.points, "omega_min": _num(s.grid.omega_min), "omega_max": _num(s.grid.omega_max)}
    sim = {"channel": s.simulation.channel, "magnitude": _num(s.simulation.magnitude),
           "start": _num(s.simulation.start), "t_end": _num(s.simulation.t_end)}
    if s.simulation.dt is not None:
        sim["dt"] = _num(s.simulation.dt)
    out["simulation"] = sim
    out["output"] = {"directory": s.output.directory}
    if s.output.format is not None:
        out["output"]["format"] = s.output.format
    return out


def serialize_scenario(s: Scenario) -> str:
    return tomli_w.dumps(scenario_to_dict(s))


def with_uniform_voltage(s: Scenario, value: Optional[float] = None) -> Scenario:
    """Copy with all steady-state voltages set equal (mean by default)."""
    v = float(np.mean(s.network.v0)) if value is None else float(value)
    return replace(s, network=s.network.replace(v0=np.full(s.network.n, v)))
