"""Closed-loop assembly, stability verdicts, step simulation and DC structure."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .devices import ConverterSpec, build_D, rebase_gains
from .errors import GfmCertError
from .lti import (OMEGA0, GangOfFour, StabilityVerdict, StateSpaceModel, dc_gain,
                  interconnect_gang_of_four, residue_at_origin, stability_verdict)
from .netmodel import NetworkLevel, NetworkSpec, build_N0, n_closed_form


@dataclass(frozen=True, eq=False)
class ClosedLoopSystem:
    plant: StateSpaceModel
    network: StateSpaceModel
    gang: GangOfFour
    assembled: StateSpaceModel
    level: NetworkLevel
    net: NetworkSpec
    convs: tuple

    @property
    def n(self) -> int:
        return self.net.n

    def channel(self, label: str) -> int:
        return self.assembled.inputs.index(label)

    def output(self, label: str) -> int:
        return self.assembled.outputs.index(label)


def _labels(n):
    ins = ([f"{k}{i + 1}" for i in range(n) for k in ("dp_d", "dq_d")]
           + [f"{k}{i + 1}" for i in range(n) for k in ("domega_d", "dv_d")])
    outs = ([f"{k}{i + 1}" for i in range(n) for k in ("domega", "dv")]
            + [f"{k}{i + 1}" for i in range(n) for k in ("dp_e", "dq_e")])
    return tuple(ins), tuple(outs)


def assemble(net: NetworkSpec, level, convs: Sequence[ConverterSpec]) -> ClosedLoopSystem:
    """Negative feedback of the droop devices with the network.

    Frequencies inside the loop are in rad/s; voltages and powers in pu.
    """
    if len(convs) != net.n:
        raise ValueError(f"{len(convs)} converters for {net.n} network nodes")
    level = NetworkLevel.parse(level)
    convs = tuple(c if c.rebased else rebase_gains(c) for c in convs)
    plant = build_D(convs, omega0=net.omega0)
    network = build_N0(net, level)
    gang = interconnect_gang_of_four(plant, network)
    ins, outs = _labels(net.n)
    assembled = gang.full.with_labels(ins, outs)
    return ClosedLoopSystem(plant, network, gang, assembled, level, net, convs)


def closed_loop_verdict(cl: ClosedLoopSystem, zero_tol: float = 1e-9 * OMEGA0,
                        margin_tol: float = 1e-7 * OMEGA0) -> StabilityVerdict:
    return stability_verdict(cl.assembled, zero_tol, margin_tol)


# ---------------------------------------------------------------- simulation


@dataclass(frozen=True)
class Disturbance:
    channel: str = "dp_d1"
    magnitude: float = 0.05
    start: float = 0.0


@dataclass(frozen=True, eq=False)
class SimResult:
    time: np.ndarray
    signals: dict
    metadata: dict = field(default_factory=dict)

    def diverged(self, factor: float = 10.0, window: float = 1.0) -> bool:
        return divergence_detected(self, factor, window)


def default_dt(level) -> float:
    return 1e-3 if NetworkLevel.parse(level).is_static else 5e-5


def simulate_step(cl: ClosedLoopSystem, disturbance: Disturbance = Disturbance(),
                  t_end: float = 5.0, dt: float = None, blowup: float = 1e100) -> SimResult:
    """Exact zero-order-hold integration of a step on one disturbance channel.

    Integration stops early when the state norm exceeds ``blowup``; the
    remaining samples are NaN.
    """
    dt = default_dt(cl.level) if dt is None else dt
    if dt <= 0 or t_end <= 0:
        raise ValueError("dt and t_end must be positive")
    if not cl.level.is_static and dt > 1e-4:
        warnings.warn("StepTooLarge: dt above 1e-4 s under-resolves the line modes", stacklevel=2)
    sys = cl.assembled
    k = cl.channel(disturbance.channel)
    nx = sys.n_states
    steps = int(round(t_end / dt))
    time = np.arange(steps + 1) * dt
    # augmented exponential gives both discrete maps at once
    m = np.zeros((nx + 1, nx + 1))
    m[:nx, :nx] = sys.a
    m[:nx, nx] = sys.b[:, k]
    e = linalg.expm(m * dt)
    ad, bd = e[:nx, :nx], e[:nx, nx]
    u = np.where(time >= disturbance.start - 1e-12 * dt, disturbance.magnitude, 0.0)
    x = np.zeros(nx)
    ys = np.full((steps + 1, sys.n_outputs), np.nan)
    stopped = None
    for t in range(steps + 1):
        ys[t] = sys.c @ x + sys.d[:, k] * u[t]
        if t < steps:
            x = ad @ x + bd * u[t]
            if not np.isfinite(x).all() or np.linalg.norm(x) > blowup:
                stopped = float(time[t + 1])
                break
    signals = {}
    scale = np.ones(sys.n_outputs)
    for j, name in enumerate(sys.outputs):
        if name.startswith("domega"):
            scale[j] = 1.0 / cl.net.omega0
    for j, name in enumerate(sys.outputs):
        signals[name] = ys[:, j] * scale[j]
    meta = {"channel": disturbance.channel, "magnitude_pu": disturbance.magnitude,
            "start_s": disturbance.start, "t_end_s": t_end, "dt_s": dt,
            "method": "zero-order hold, matrix exponential", "level": cl.level.value,
            "stopped_at_s": stopped}
    return SimResult(time, signals, meta)


def divergence_detected(res: SimResult, factor: float = 10.0, window: float = 1.0) -> bool:
    """True if any trajectory exceeds ``factor`` times its early peak.

    The early peak is taken over ``window`` seconds after the step.
    """
    t0 = res.metadata.get("start_s", 0.0)
    early = (res.time >= t0) & (res.time <= t0 + window)
    if res.metadata.get("stopped_at_s") is not None:
        return True
    for y in res.signals.values():
        ref = np.nanmax(np.abs(y[early]))
        peak = np.nanmax(np.abs(y))
        if ref > 0 and peak > factor * ref:
            return True
    return False


# ---------------------------------------------------------------- DC structure


@dataclass(frozen=True, eq=False)
class FvtReport:
    stable: bool
    frequency_block: np.ndarray         # DC map (dp_d, dq_d) -> domega, rad/s per pu
    voltage_block_norm: float
    n1_row_sum: float
    n2_norm: float
    n3_min_sv: float
    aggregate_error: float
    passed: bool
    notes: tuple = ()
    cross_block_norm: float = np.inf

    def to_dict(self):
        fb = self.frequency_block
        return {
            "stable": self.stable,
            "frequency_block": None if fb is None else fb.tolist(),
            "voltage_block_norm": self.voltage_block_norm,
            "n1_max_row_sum": self.n1_row_sum,
            "n2_norm": self.n2_norm,
            "n3_min_singular_value": self.n3_min_sv,
            "aggregate_droop_error": self.aggregate_error,
            "cross_block_norm": self.cross_block_norm,
            "passed": self.passed,
            "notes": list(self.notes),
        }


def permutation(n: int) -> np.ndarray:
    """Rows (p1, q1, ..., pn, qn) -> (p1..pn, q1..qn)."""
    p = np.zeros((2 * n, 2 * n))
    for k in range(n):
        p[k, 2 * k] = 1.0
        p[k + n, 2 * k + 1] = 1.0
    return p


def network_blocks_at_dc(net: NetworkSpec, level) -> tuple:
    level = NetworkLevel.parse(level)
    if level is NetworkLevel.LEVEL2:
        net = net.replace(v0=np.full(net.n, net.v0.mean()))
    p = permutation(net.n)
    npm = p @ n_closed_form(net, level, 0.0) @ p.T
    n = net.n
    return npm[:n, :n], npm[:n, n:], npm[n:, :n], npm[n:, n:]


def fvt_check(cl: ClosedLoopSystem, net: NetworkSpec = None, tol: float = 1e-8) -> FvtReport:
    """DC limit of the loop with voltage-derivative outputs, plus network structure at s = 0."""
    net = cl.net if net is None else net
    n = net.n
    notes = []
    n1, n2, n2b, n3 = network_blocks_at_dc(net, cl.level)
    n1_rows = float(np.abs(n1.sum(axis=1)).max())
    n2_norm = float(max(np.abs(n2).max(initial=0.0), np.abs(n2b).max(initial=0.0)))
    n3_sv = float(np.linalg.svd(n3, compute_uv=False).min())
    stable = closed_loop_verdict(cl).stable
    ul = cl.gang.upper_left
    omega_rows = [2 * i for i in range(n)]
    volt_rows = [2 * i + 1 for i in range(n)]
    p_cols = [2 * i for i in range(n)]
    fblock = None
    vnorm = np.inf
    agg = np.inf
    cross = np.inf
    if not stable:
        notes.append("closed loop not stable: final value theorem inapplicable")
    try:
        dc = dc_gain(ul.sub(omega_rows, list(range(2 * n))))
        fblock = dc[:, p_cols]
        cross = float(np.abs(dc[:, volt_rows]).max())
        # s * H_v(s) at s -> 0 equals the origin residue of the voltage rows
        res = residue_at_origin(ul.sub(volt_rows, list(range(2 * n))))
        vnorm = float(np.linalg.norm(res / net.v0[:, None], 2))
        expect = net.omega0 / sum(1.0 / c.d_p for c in cl.convs)
        agg = float(np.abs(fblock - expect).max() / net.omega0)
    except (GfmCertError, np.linalg.LinAlgError) as exc:
        notes.append(f"{type(exc).__name__}: {exc}")
    laplacian = n1_rows < 1e-12 * max(1.0, np.abs(n1).max())
    regular = n3_sv > 1e-12 * max(1.0, np.abs(n3).max())
    if not regular:
        notes.append("voltage block of the network is singular at s = 0")
    passed = bool(stable and vnorm < tol and n2_norm == 0.0 and laplacian
                  and (regular or cl.level is NetworkLevel.LEVEL2))
    return FvtReport(bool(stable), fblock, vnorm, n1_rows, n2_norm, n3_sv, agg, passed, tuple(notes), cross)
