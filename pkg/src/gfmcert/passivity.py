"""Loop-shifted passivity analysis of the converter/network feedback pair.

The network side is shifted by a block-diagonal multiplier Gamma(s) so that it
becomes passive; the converter side absorbs the inverse shift and must then be
strictly passive.  Everything is checked numerically on frequency grids and
cross-checked against closed-form expressions.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .devices import ConverterSpec, rebase_gains
from .errors import GfmCertError, IllPosed, NotSimplePole, RhoZero
from .lti import (OMEGA0, FrequencyGrid, StateSpaceModel, append, eval_freq, feedback, first_order_lag,
                  freq_response, from_tf, gershgorin_dominant, interconnect_gang_of_four, minreal,
                  parallel, poles, residue_at_origin)
from .netmodel import NetworkLevel, NetworkSpec, build_N_transformed


@dataclass(frozen=True, eq=False)
class GammaSpec:
    """Per-node multiplier parameters; arrays are indexed by node."""
    gamma1_p: np.ndarray
    gamma1_q: np.ndarray
    gamma2_p: np.ndarray
    gamma2_q: np.ndarray
    gamma3_p: np.ndarray
    gamma3_q: np.ndarray
    gamma3_q_tilde: np.ndarray
    inexact: tuple          # True where the cancellation choice violated the lower bound
    rho: float
    omega0: float

    @property
    def n(self):
        return len(self.gamma1_p)

    def to_dict(self):
        keys = ("gamma1_p", "gamma1_q", "gamma2_p", "gamma2_q", "gamma3_p", "gamma3_q", "gamma3_q_tilde")
        out = {k: [float(x) for x in getattr(self, k)] for k in keys}
        out["inexact"] = list(self.inexact)
        return out


def _rebased(convs):
    return [c if c.rebased else rebase_gains(c) for c in convs]


def gamma_lower_bound(net: NetworkSpec) -> np.ndarray:
    return 0.8 * net.degree / (1 + net.rho ** 2)


def gamma_params(net: NetworkSpec, convs: Sequence[ConverterSpec]) -> GammaSpec:
    if net.rho == 0:
        raise RhoZero("the multiplier needs rho > 0")
    if len(convs) != net.n:
        raise ValueError("one converter per network node is required")
    convs = _rebased(convs)
    deg = net.degree
    v2 = net.vmax ** 2
    g1 = 2 * v2 * deg / net.omega0 ** 2
    g2 = -3 * v2 * deg
    g3p = -g2 / (1 + net.rho ** 2)
    lower = gamma_lower_bound(net)
    choice = np.array([net.v0[i] / c.d_q for i, c in enumerate(convs)])
    inexact = tuple(bool(x) for x in choice < lower)
    tilde = np.where(choice >= lower, choice, lower)
    return GammaSpec(g1, g1.copy(), g2, g2.copy(), g3p, g3p + tilde, tilde, inexact,
                     float(net.rho), float(net.omega0))


def _gamma_channel(g1, g2, g3, rho, w0) -> StateSpaceModel:
    """r0/s + (B s + C)/((s + rho w0)^2 + w0^2), one origin state and one resonant pair.

    r0 = g3 + g2/(1+rho^2) is the origin residue; it vanishes for the active
    channel, leaving that state unobservable.
    """
    a_res = g2 / (1 + rho ** 2)
    r0 = g3 + a_res
    bb = g1 * w0 ** 2 - a_res
    cc = -2 * rho * w0 * a_res
    a = np.array([[0.0, 0.0, 0.0],
                  [0.0, -rho * w0, w0],
                  [0.0, -w0, -rho * w0]])
    b = np.array([[1.0], [1.0], [0.0]])
    c = np.array([[r0, bb, (bb * rho * w0 - cc) / w0]])
    return StateSpaceModel(a, b, c, [[0.0]])


def gamma_model(g: GammaSpec) -> StateSpaceModel:
    blocks = []
    for i in range(g.n):
        blocks.append(_gamma_channel(g.gamma1_p[i], g.gamma2_p[i], g.gamma3_p[i], g.rho, g.omega0))
        blocks.append(_gamma_channel(g.gamma1_q[i], g.gamma2_q[i], g.gamma3_q[i], g.rho, g.omega0))
    return append(*blocks)


def build_gamma(net: NetworkSpec, convs: Sequence[ConverterSpec]):
    g = gamma_params(net, convs)
    return g, gamma_model(g)


def build_D_transformed(net: NetworkSpec, convs: Sequence[ConverterSpec]) -> StateSpaceModel:
    """Per node diag(d_p w0/(tau_p s+1), d_q s/((tau_q s+1) v0)).

    The voltage channel is improper for tau_q = 0 and raises IllPosed.
    """
    convs = _rebased(convs)
    blocks = []
    for i, c in enumerate(convs):
        if c.tau_q == 0:
            raise IllPosed(f"node {i + 1}: voltage-derivative channel is improper for tau_q = 0")
        k = c.d_q / net.v0[i]
        blocks.append(first_order_lag(c.d_p * net.omega0, c.tau_p))
        blocks.append(from_tf([k, 0.0], [c.tau_q, 1.0]))
    return append(*blocks)


def loop_shift(D: StateSpaceModel, N: StateSpaceModel, Gamma: StateSpaceModel):
    """D' = D (I - Gamma D)^-1 and N' = N + Gamma."""
    if D.n_inputs != Gamma.n_outputs or Gamma.n_inputs != D.n_outputs:
        raise ValueError("loop_shift: dimension mismatch")
    return feedback(D, Gamma, sign=+1.0), parallel(N, Gamma)


def loop_shift_identity_error(D, N, Dp, Np, omegas) -> float:
    """max ||(I+D'N')^-1 D' - (I+DN)^-1 D|| over the given frequencies."""
    a = interconnect_gang_of_four(Dp, Np).upper_left
    b = interconnect_gang_of_four(D, N).upper_left
    ra, rb = freq_response(a, omegas), freq_response(b, omegas)
    return float(max(np.linalg.norm(x - y, 2) for x, y in zip(ra, rb)))


def h_rho(omega, rho: float, omega0: float = OMEGA0):
    omega = np.asarray(omega, dtype=float)
    w02 = omega0 ** 2
    return 4 * rho * omega0 ** 3 / ((w02 + rho ** 2 * w02 - omega ** 2) ** 2 + 4 * rho ** 2 * w02 * omega ** 2)


def closed_form_S_Nprime(net: NetworkSpec, g: GammaSpec, omega: float) -> np.ndarray:
    """Hermitian part (times two) of the shifted network at j omega."""
    n, v, w0 = net.n, net.v0, net.omega0
    x = omega / w0
    h = float(h_rho(omega, net.rho, w0))
    out = np.zeros((2 * n, 2 * n), dtype=complex)
    diag_pat = np.array([[-1, -1j * x], [1j * x, -1]])
    off_pat = np.array([[1, 1j * x], [-1j * x, 1]])
    for i in range(n):
        blk = np.diag([omega ** 2 * g.gamma1_p[i] - g.gamma2_p[i],
                       omega ** 2 * g.gamma1_q[i] - g.gamma2_q[i]]).astype(complex)
        for j in range(n):
            if j == i or net.b[i, j] == 0:
                continue
            blk += v[i] ** 2 * net.b[i, j] * diag_pat
            out[2 * i:2 * i + 2, 2 * j:2 * j + 2] = h * v[i] * v[j] * net.b[i, j] * off_pat
        out[2 * i:2 * i + 2, 2 * i:2 * i + 2] = h * blk
    return out


def residue_closed_form(net: NetworkSpec, g: GammaSpec) -> np.ndarray:
    """Residue of the shifted network at the origin."""
    n, v, r2 = net.n, net.v0, 1 + net.rho ** 2
    out = np.zeros((2 * n, 2 * n))
    for i in range(n):
        out[2 * i, 2 * i] = g.gamma2_p[i] / r2 + g.gamma3_p[i]
        out[2 * i + 1, 2 * i + 1] = g.gamma2_q[i] / r2 + g.gamma3_q[i]
        for j in range(n):
            bij = net.b[i, j]
            if j == i or bij == 0:
                continue
            out[2 * i, 2 * i] += bij * v[i] * v[j] / r2
            out[2 * i + 1, 2 * i + 1] += bij * (2 * v[i] ** 2 - v[i] * v[j]) / r2
            out[2 * i:2 * i + 2, 2 * j:2 * j + 2] = -bij * v[i] * v[j] / r2 * np.eye(2)
    return out


@dataclass(frozen=True)
class HurwitzCoefficients:
    a0: float
    a1: float
    a2: float
    a3: float
    b0: float
    b1: float
    b2: float
    checks: tuple           # (a0>0, a1>0, a2>0, a3>=0, a2 a1 > a0 a3)

    @property
    def hurwitz(self) -> bool:
        return all(self.checks)

    def to_dict(self):
        return {"a": [self.a0, self.a1, self.a2, self.a3], "b": [self.b0, self.b1, self.b2],
                "checks": {"a0": self.checks[0], "a1": self.checks[1], "a2": self.checks[2],
                           "a3": self.checks[3], "a2a1_gt_a0a3": self.checks[4]},
                "hurwitz": self.hurwitz}


def dprime_p_coeffs(conv: ConverterSpec, g: GammaSpec, net: NetworkSpec, i: int) -> HurwitzCoefficients:
    """Denominator/numerator of the shifted active-power channel at node i.

    For tau_p = 0 the cubic degenerates to a quadratic; the Hurwitz test then
    reads a0, a1, a2 > 0.
    """
    conv = conv if conv.rebased else rebase_gains(conv)
    w0, rho, tau = net.omega0, net.rho, conv.tau_p
    d = conv.d_p * w0
    r2 = 1 + rho * rho
    g1, g3 = g.gamma1_p[i], g.gamma3_p[i]
    a0 = w0 ** 2 * r2 - 2 * rho * w0 * d * g3
    a1 = 2 * rho * w0 + tau * w0 ** 2 * r2 - d * w0 ** 2 * g1 - d * g3
    a2 = 2 * w0 * tau * rho + 1
    a3 = tau
    checks = (a0 > 0, a1 > 0, a2 > 0, a3 >= 0, a2 * a1 > a0 * a3)
    return HurwitzCoefficients(float(a0), float(a1), float(a2), float(a3),
                               float(w0 ** 2 * r2), float(2 * rho * w0), 1.0,
                               tuple(bool(c) for c in checks))


# ---------------------------------------------------------------- grids


def default_grid(models: Sequence[StateSpaceModel] = (), omega0: float = OMEGA0,
                 n_log: int = 400, omega_min: float = 1e-3, omega_max: float = 1e5,
                 n_refine: int = 50) -> FrequencyGrid:
    """Log grid plus linear refinement around omega0 and lightly damped poles."""
    parts = [np.logspace(np.log10(omega_min), np.log10(omega_max), n_log),
             np.linspace(0.9 * omega0, 1.1 * omega0, n_refine)]
    for m in models:
        for p in poles(m):
            if p.imag > 0 and abs(p.real) < 0.1 * abs(p.imag):
                half = max(5 * abs(p.real), 0.01 * p.imag)
                parts.append(np.linspace(p.imag - half, p.imag + half, n_refine))
    w = np.concatenate(parts)
    w = w[(w >= omega_min) & (w <= omega_max)]
    return FrequencyGrid.merge(w)


# ---------------------------------------------------------------- passivity


@dataclass(frozen=True)
class ResidueRecord:
    pole: complex
    passed: bool
    min_eig: float


@dataclass(frozen=True)
class PassivityVerdict:
    pole_check: bool
    grid_psd: bool
    worst_omega: float
    worst_eig: float
    residues: tuple
    strict: bool
    excluded: tuple = ()

    @property
    def residue_psd(self) -> bool:
        return all(r.passed for r in self.residues)

    @property
    def overall(self) -> bool:
        return self.pole_check and self.grid_psd and self.residue_psd

    def to_dict(self):
        return {
            "strict": self.strict,
            "overall": self.overall,
            "pole_check": self.pole_check,
            "grid_psd": self.grid_psd,
            "worst_omega": self.worst_omega,
            "worst_min_eig": self.worst_eig,
            "residues": [{"pole": [r.pole.real, r.pole.imag], "passed": r.passed, "min_eig": r.min_eig}
                         for r in self.residues],
            "excluded_omegas": list(self.excluded),
        }


def _residue_at(model: StateSpaceModel, lam: complex, tol: float) -> np.ndarray:
    if abs(lam) < tol:
        return residue_at_origin(model, tol)
    ev, vec = np.linalg.eig(model.a)
    sel = np.abs(ev - lam) < tol
    vsel = vec[:, sel]
    if np.linalg.matrix_rank(vsel) < sel.sum():
        raise NotSimplePole(f"pole {lam} is defective")
    winv = np.linalg.inv(vec)[sel]
    return model.c @ vsel @ winv @ model.b


def passivity_check(model: StateSpaceModel, grid: FrequencyGrid, tol: float = 1e-10,
                    strict: bool = False, zero_tol: float = 1e-9 * OMEGA0,
                    exclusion: float = 1e-6 * OMEGA0) -> PassivityVerdict:
    """Grid test of H(jw) + H(jw)^* plus pole and residue conditions."""
    if model.n_inputs != model.n_outputs:
        raise ValueError("passivity needs a square model")
    p = poles(model)
    imag = [z for z in p if abs(z.real) <= zero_tol]
    if strict:
        pole_ok = bool(np.all(p.real < -zero_tol))
    else:
        pole_ok = bool(np.all(p.real <= zero_tol))
    residues = []
    if not strict:
        seen = []
        for z in imag:
            z = complex(0.0, z.imag)
            if z.imag < -zero_tol or any(abs(z - s) < zero_tol for s in seen):
                continue
            seen.append(z)
            r = _residue_at(model, z, zero_tol)
            herm = 0.5 * (r + r.conj().T)
            me = float(np.linalg.eigvalsh(herm).min())
            skew = np.linalg.norm(r - r.conj().T) <= 1e-8 * max(np.linalg.norm(r), 1.0)
            residues.append(ResidueRecord(z, bool(me >= -tol and skew), me))
    omegas = np.asarray(grid.omegas)
    keep = np.ones(omegas.size, dtype=bool)
    for z in imag:
        keep &= np.abs(omegas - abs(z.imag)) > exclusion
    excluded = tuple(float(w) for w in omegas[~keep])
    resp = freq_response(model, omegas[keep], tol=0.0) if keep.any() else np.zeros((0,) + model.shape)
    worst_eig, worst_w = np.inf, np.nan
    for w, hjw in zip(omegas[keep], resp):
        me = float(np.linalg.eigvalsh(hjw + hjw.conj().T).min())
        if me < worst_eig:
            worst_eig, worst_w = me, float(w)
    grid_ok = bool(worst_eig > tol) if strict else bool(worst_eig >= -tol)
    return PassivityVerdict(pole_ok, grid_ok, worst_w, float(worst_eig), tuple(residues), strict, excluded)


# ---------------------------------------------------------------- proof trace


@dataclass(frozen=True)
class TraceStep:
    name: str
    passed: bool
    worst_omega: Optional[float] = None
    margin: Optional[float] = None
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {"step": self.name, "status": "pass" if self.passed else "fail",
                "worst_omega": self.worst_omega, "margin": self.margin, "details": self.details}


@dataclass(frozen=True)
class CertificateTrace:
    steps: tuple

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.steps)

    def step(self, name) -> TraceStep:
        for s in self.steps:
            if s.name == name:
                return s
        raise KeyError(name)

    def to_dict(self):
        return {"passed": self.passed, "steps": [s.to_dict() for s in self.steps]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_jsonable)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


def _fail(name, exc):
    return TraceStep(name, False, details={"error": f"{type(exc).__name__}: {exc}"})


def certificate_trace(net: NetworkSpec, convs: Sequence[ConverterSpec],
                      grid: Optional[FrequencyGrid] = None, tol: float = 0.0,
                      level=NetworkLevel.DYNAMIC, grid_options: Optional[dict] = None) -> CertificateTrace:
    """Run the four proof steps and record each outcome; never raises on failure.

    ``tol`` is the margin the device side must clear on the grid.  Strict
    passivity margins decay like 1/omega, so a positive tolerance can reject
    certified tunings at the top of a wide grid.  ``grid_options`` are passed
    to ``default_grid`` when no explicit grid is given.
    """
    from .certificates import certify
    from .closedloop import assemble, fvt_check

    convs = _rebased(convs)
    level = NetworkLevel.parse(level)
    steps = []
    report = certify(net, convs)
    steps.append(TraceStep("conditions", report.dynamic_pass,
                           details={"dynamic": report.dynamic_pass, "level1": report.level1_pass}))

    # I: coordinates
    try:
        D = build_D_transformed(net, convs)
        N = build_N_transformed(net, level)
        steps.append(TraceStep("I_coordinates", True, details={"d_states": D.n_states, "n_states": N.n_states}))
    except GfmCertError as exc:
        steps.append(_fail("I_coordinates", exc))
        return CertificateTrace(tuple(steps))

    # II: multiplier and shift
    try:
        g, gam = build_gamma(net, convs)
        Dp, Np = loop_shift(D, N, gam)
        spot = np.logspace(-1, 4, 20)
        err = loop_shift_identity_error(D, N, Dp, Np, spot)
        steps.append(TraceStep("II_loop_shift", err < 1e-8, margin=err,
                               details={"gamma": g.to_dict(), "identity_error": err}))
    except GfmCertError as exc:
        steps.append(_fail("II_loop_shift", exc))
        return CertificateTrace(tuple(steps))

    if grid is None:
        grid = default_grid([Np], omega0=net.omega0, **(grid_options or {}))

    # III: passivity of both sides and the gain condition
    pn = passivity_check(Np, grid, tol=1e-9, strict=False)
    omegas = [w for w in grid.omegas if w not in pn.excluded]
    cf_dev = 0.0
    dominant = True
    for w in omegas:
        num = eval_freq(Np, w, tol=0.0)
        cf = closed_form_S_Nprime(net, g, w)
        cf_dev = max(cf_dev, float(np.abs(num + num.conj().T - cf).max()))
        dominant = dominant and gershgorin_dominant(cf, tol=1e-9)
    res_num = residue_at_origin(Np)
    res_cf = residue_closed_form(net, g)
    res_dev = float(np.abs(res_num - res_cf).max())
    steps.append(TraceStep("III_network_passive", pn.overall and cf_dev < 1e-8 and res_dev < 1e-8,
                           pn.worst_omega, pn.worst_eig,
                           details={"verdict": pn.to_dict(), "closed_form_deviation": cf_dev,
                                    "closed_form_dominant": dominant, "residue_deviation": res_dev,
                                    "residue_dominant": gershgorin_dominant(res_cf, tol=1e-9)}))
    dmin = minreal(Dp, tol=1e-9)
    pd = passivity_check(dmin, grid, tol=tol, strict=True)
    coeffs = [dprime_p_coeffs(c, g, net, i).to_dict() for i, c in enumerate(convs)]
    steps.append(TraceStep("III_device_strictly_passive", pd.overall, pd.worst_omega, pd.worst_eig,
                           details={"verdict": pd.to_dict(), "states_before": Dp.n_states,
                                    "states_after": dmin.n_states, "active_coefficients": coeffs,
                                    "cancellation_inexact": list(g.inexact)}))
    top = float(grid.omegas[-1])
    prod = float(np.linalg.norm(eval_freq(Np, top, tol=0.0), 2) * np.linalg.norm(eval_freq(dmin, top, tol=0.0), 2))
    steps.append(TraceStep("III_gain_at_top", prod < 1, top, 1 - prod, details={"product": prod}))

    # IV: final value structure of the original loop
    try:
        fv = fvt_check(assemble(net, level, convs), net)
        steps.append(TraceStep("IV_final_value", fv.passed, margin=fv.voltage_block_norm, details=fv.to_dict()))
    except GfmCertError as exc:
        steps.append(_fail("IV_final_value", exc))
    return CertificateTrace(tuple(steps))
