"""Command-line entry point.

Exit status: 0 when the check passes, 2 when it runs but the system fails
it, 1 on any error (bad input, usage, numerical failure).
"""
from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import report
from .certificates import (CouplingStrengths, certify, check_active, check_reactive, sample_region,
                           table1_coeffs)
from .closedloop import Disturbance, assemble, closed_loop_verdict, fvt_check, simulate_step
from .errors import GfmCertError, ValidationError
from .netmodel import NetworkLevel
from .passivity import certificate_trace
from .scenario import Scenario, bundled_scenarios, parse_scenario, with_uniform_voltage

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
FORMATS = {
    "certify": ("json", "csv"),
    "passivity": ("json", "csv"),
    "analyze": ("csv", "json"),
    "simulate": ("csv", "json", "svg"),
    "region": ("csv", "json", "svg"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p, grid=False, tol=False):
    p.add_argument("scenario", help="scenario file or bundled name")
    p.add_argument("--level", choices=[lvl.value for lvl in NetworkLevel])
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--format", choices=("csv", "json", "svg"))
    if grid:
        p.add_argument("--grid-points", type=int, metavar="N")
        p.add_argument("--omega-min", type=float)
        p.add_argument("--omega-max", type=float)
    if tol:
        p.add_argument("--tol", type=float, metavar="X")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gfmcert", description="Small-signal stability certificates for droop-controlled converters.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    _common(sub.add_parser("certify", help="evaluate the decentralized tuning conditions"))
    _common(sub.add_parser("passivity", help="run the passivity proof steps"), grid=True, tol=True)
    _common(sub.add_parser("analyze", help="closed-loop poles and stability verdict"), tol=True)
    s = sub.add_parser("simulate", help="step response of the linear closed loop")
    _common(s)
    s.add_argument("--channel")
    s.add_argument("--magnitude", type=float)
    s.add_argument("--t-end", type=float)
    s.add_argument("--dt", type=float)
    r = sub.add_parser("region", help="feasible (alpha, tau) region of one condition set")
    r.add_argument("scenario", nargs="?", help="optional scenario whose converters are marked")
    r.add_argument("--rho", type=float)
    r.add_argument("--vmax", type=float)
    r.add_argument("--kind", choices=("active", "reactive"), default="active")
    r.add_argument("--resolution", type=int, default=101)
    r.add_argument("--alpha-max", type=float)
    r.add_argument("--tau-max", type=float, default=50.0, help="normalized time constant tau*omega0")
    r.add_argument("--out", metavar="DIR")
    r.add_argument("--format", choices=("csv", "json", "svg"))
    sub.add_parser("list", help="list bundled scenarios")
    return p


class _Run:
    """Shared state of one invocation: scenario, output directory, notes."""

    def __init__(self, args, out=sys.stdout):
        self.args = args
        self.stream = out
        self.notes = []
        self.scenario: Scenario = None
        if getattr(args, "scenario", None):
            self.scenario = parse_scenario(args.scenario)
        default_dir = self.scenario.output.directory if self.scenario else "gfmcert-out"
        self.dir = Path(args.out or default_dir)
        allowed = FORMATS[args.command]
        fmt = args.format or (self.scenario.output.format if self.scenario else None) or allowed[0]
        if fmt not in allowed:
            raise UsageError(f"{args.command} cannot write {fmt} (choose from {', '.join(allowed)})")
        self.format = fmt
        self.files = []

    @property
    def level(self) -> NetworkLevel:
        lvl = getattr(self.args, "level", None)
        return NetworkLevel.parse(lvl) if lvl else self.scenario.level

    def system(self):
        """Network and converters for the chosen level."""
        s = self.scenario
        if self.level is NetworkLevel.LEVEL2 and np.ptp(s.network.v0) > 0:
            v = float(np.mean(s.network.v0))
            self.notes.append(f"level2 needs equal voltages: v0 set to their mean {report.fmt(v)} pu")
            s = with_uniform_voltage(s, v)
        return s.network, s.converters

    def write(self, name, text):
        self.files.append(str(report.write_text(self.dir / name, text)))

    def say(self, line=""):
        print(line, file=self.stream)


def _cmd_certify(run: _Run) -> int:
    s = run.scenario
    rep = certify(s.network, s.converters)
    level = run.level
    if level is NetworkLevel.LEVEL2:
        ok = rep.level2_pass
    elif level is NetworkLevel.LEVEL1:
        ok = rep.level1_pass
    else:
        ok = rep.dynamic_pass
    names = [r.name for r in rep.converters[0].active + rep.converters[0].reactive]
    run.say(f"scenario {s.name}  rho={report.fmt(s.network.rho)}  vmax={report.fmt(s.network.vmax)}")
    run.say("converter  " + "  ".join(f"{n:>10}" for n in names) + "  level1")
    for c in rep.converters:
        cells = [f"{('ok ' if r.passed else 'NO ') + format(r.margin, '.3g'):>10}" for r in c.active + c.reactive]
        run.say(f"{c.name:<10} " + "  ".join(cells) + f"  {'ok' if c.level1_pass else 'NO'}")
    payload = rep.to_dict()
    payload.update(scenario=s.name, level=level.value, passed=ok)
    if run.format == "json":
        run.write("certificate.json", report.to_json(payload))
    else:
        rows = [[c.name, r.name, r.passed, r.margin, r.rhs] for c in rep.converters for r in c.active + c.reactive]
        run.write("certificate.csv", report.to_csv(["converter", "condition", "passed", "margin", "rhs"], rows))
    run.say(f"certificate ({level.value}): {'PASS' if ok else 'FAIL'}")
    return EXIT_PASS if ok else EXIT_FAIL


def _cmd_passivity(run: _Run) -> int:
    s = run.scenario
    a = run.args
    net, convs = run.system()
    opts = dict(n_log=a.grid_points or s.grid.points,
                omega_min=a.omega_min if a.omega_min is not None else s.grid.omega_min,
                omega_max=a.omega_max if a.omega_max is not None else s.grid.omega_max)
    if not 0 < opts["omega_min"] < opts["omega_max"] or opts["n_log"] < 2:
        raise UsageError("need 0 < omega-min < omega-max and at least 2 grid points")
    trace = certificate_trace(net, convs, tol=a.tol if a.tol is not None else 0.0,
                              level=run.level, grid_options=opts)
    for st in trace.steps:
        extra = "" if st.margin is None else f"  margin={st.margin:.3g}"
        where = "" if st.worst_omega is None else f"  at omega={st.worst_omega:.4g}"
        err = st.details.get("error", "") if isinstance(st.details, dict) else ""
        run.say(f"{st.name:<30} {'pass' if st.passed else 'FAIL'}{extra}{where}" + (f"  ({err})" if err else ""))
    if run.format == "json":
        payload = trace.to_dict()
        payload.update(scenario=s.name, level=run.level.value, notes=run.notes)
        run.write("passivity.json", report.to_json(payload))
    else:
        rows = [[st.name, "pass" if st.passed else "fail",
                 np.nan if st.worst_omega is None else st.worst_omega,
                 np.nan if st.margin is None else st.margin] for st in trace.steps]
        run.write("passivity.csv", report.to_csv(["step", "status", "worst_omega", "margin"], rows))
    return EXIT_PASS if trace.passed else EXIT_FAIL


def _cmd_analyze(run: _Run) -> int:
    net, convs = run.system()
    cl = assemble(net, run.level, convs)
    kw = {} if run.args.tol is None else {"margin_tol": run.args.tol}
    verdict = closed_loop_verdict(cl, **kw)
    modes = sorted(verdict.modes, key=lambda m: (-m.eigenvalue.real, m.eigenvalue.imag))
    rows = [[m.eigenvalue.real, m.eigenvalue.imag, m.controllable, m.observable, m.structural] for m in modes]
    run.write("poles.csv", report.to_csv(["real", "imag", "controllable", "observable", "structural"], rows))
    payload = verdict.to_dict()
    payload.update(scenario=run.scenario.name, level=run.level.value, n_states=cl.assembled.n_states,
                   notes=run.notes)
    if verdict.stable:
        fv = fvt_check(cl)
        payload["final_value"] = fv.to_dict()
    run.write("verdict.json", report.to_json(payload))
    run.say(f"{run.scenario.name} [{run.level.value}]: {'stable' if verdict.stable else 'unstable'}"
            f"  margin={verdict.margin:.4g} rad/s  states={cl.assembled.n_states}"
            f"  structural={len(verdict.structural)}")
    return EXIT_PASS if verdict.stable else EXIT_FAIL


def _cmd_simulate(run: _Run) -> int:
    s = run.scenario
    a = run.args
    net, convs = run.system()
    cl = assemble(net, run.level, convs)
    dist = Disturbance(a.channel or s.simulation.channel,
                       a.magnitude if a.magnitude is not None else s.simulation.magnitude,
                       s.simulation.start)
    if dist.channel not in cl.assembled.inputs:
        raise UsageError(f"unknown channel {dist.channel!r}; choose from {', '.join(cl.assembled.inputs)}")
    t_end = a.t_end if a.t_end is not None else s.simulation.t_end
    dt = a.dt if a.dt is not None else s.simulation.dt
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = simulate_step(cl, dist, t_end=t_end, dt=dt)
    for w in caught:
        run.notes.append(str(w.message))
    diverged = res.diverged()
    names = list(res.signals)
    rows = np.column_stack([res.time] + [res.signals[k] for k in names])
    meta = dict(res.metadata, scenario=s.name, diverged=diverged, notes=run.notes,
                units={"time": "s", "domega": "pu", "dv": "pu", "dp_e": "pu", "dq_e": "pu"})
    if run.format == "json":
        run.write("simulation.json", report.to_json({"time": res.time, "signals": res.signals, "metadata": meta}))
    else:
        run.write("simulation.csv", report.to_csv(["time"] + names, rows))
        run.write("simulation.meta.json", report.to_json(meta))
    if run.format == "svg":
        freq = {k: v for k, v in res.signals.items() if k.startswith("domega")}
        run.write("simulation.svg", report.line_chart(res.time, freq, f"{s.name}: step on {dist.channel}",
                                                       "time (s)", "frequency deviation (pu)"))
    run.say(f"{s.name} [{run.level.value}]: {'diverged' if diverged else 'bounded'} over {report.fmt(t_end)} s")
    return EXIT_FAIL if diverged else EXIT_PASS


def _cmd_region(run: _Run) -> int:
    a = run.args
    s = run.scenario
    if a.rho is None and s is None:
        raise UsageError("region needs --rho or a scenario")
    rho = a.rho if a.rho is not None else s.network.rho
    vmax = a.vmax if a.vmax is not None else (s.network.vmax if s else 1.1)
    if a.resolution < 2 or a.tau_max <= 0:
        raise UsageError("need --resolution >= 2 and --tau-max > 0")
    coeffs = table1_coeffs(rho, vmax)
    stars = []
    if s is not None:
        from .certificates import coupling_strengths
        for i, conv in enumerate(s.converters):
            cs = coupling_strengths(s.network, conv, i)
            if a.kind == "active":
                inside = all(r.passed for r in check_active(CouplingStrengths(cs.alpha_p, 0, cs.tau_p_tilde, 0), coeffs))
                stars.append((conv.name, cs.alpha_p, cs.tau_p_tilde, inside))
            else:
                inside = all(r.passed for r in check_reactive(CouplingStrengths(0, cs.alpha_q, 0, cs.tau_q_tilde), coeffs))
                stars.append((conv.name, cs.alpha_q, cs.tau_q_tilde, inside))
    amax = a.alpha_max
    if amax is None:
        top = max([st[1] for st in stars], default=0.0)
        amax = 1.5 * max(top, coeffs.c4 if a.kind == "active" and np.isfinite(coeffs.c4) else 0.0,
                         coeffs.c5 if a.kind == "reactive" else 0.0, 1e-3)
    tmax = max(a.tau_max, 1.1 * max([st[2] for st in stars], default=0.0))
    grid = sample_region(rho, vmax, (0.0, amax), (0.0, tmax), a.resolution, a.kind)
    label = "alpha_p" if a.kind == "active" else "alpha_q"
    if run.format == "csv":
        rows = [[t, al, bool(grid.feasible[r, k])] for r, t in enumerate(grid.taus) for k, al in enumerate(grid.alphas)]
        run.write(f"region_{a.kind}.csv", report.to_csv(["tau_tilde", label, "feasible"], rows))
    elif run.format == "json":
        run.write(f"region_{a.kind}.json", report.to_json({
            "kind": a.kind, "rho": rho, "vmax": vmax, "alphas": grid.alphas, "taus": grid.taus,
            "feasible": grid.feasible.astype(int),
            "stars": [{"name": n, "alpha": x, "tau_tilde": y, "inside": ok} for n, x, y, ok in stars]}))
    else:
        # heatmap axes: alpha horizontal, tau vertical
        run.write(f"region_{a.kind}.svg", report.heatmap(grid.alphas, grid.taus, grid.feasible,
                                                         f"{a.kind} conditions, rho = {report.fmt(rho)}",
                                                         label, "tau * omega0",
                                                         [(n, x, y, ok) for n, x, y, ok in stars]))
    frac = float(grid.feasible.mean())
    run.say(f"{a.kind} region at rho={report.fmt(rho)}: {100 * frac:.1f}% of the sampled grid feasible")
    for n, x, y, ok in stars:
        run.say(f"  {n}: {label}={x:.4g} tau_tilde={y:.4g} {'inside' if ok else 'OUTSIDE'}")
    return EXIT_PASS if all(st[3] for st in stars) else EXIT_FAIL


COMMANDS = {
    "certify": _cmd_certify,
    "passivity": _cmd_passivity,
    "analyze": _cmd_analyze,
    "simulate": _cmd_simulate,
    "region": _cmd_region,
}


def run_command(argv, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        if args.command == "list":
            for name in bundled_scenarios():
                print(name, file=stdout)
            return EXIT_PASS
        run = _Run(args, stdout)
        code = COMMANDS[args.command](run)
        for note in run.notes:
            print(f"note: {note}", file=stdout)
        for f in run.files:
            print(f"wrote {f}", file=stdout)
        return code
    except UsageError as exc:
        print(f"usage error: {exc}", file=stderr)
    except ValidationError as exc:
        print("invalid scenario:", file=stderr)
        for prob in exc.problems:
            print(f"  - {prob}", file=stderr)
    except (GfmCertError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=stderr)
    return EXIT_ERROR


def main(argv=None) -> None:
    raise SystemExit(run_command(sys.argv[1:] if argv is None else argv))
