"""Small-signal network models in rectangular (dq) and polar coordinates."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import Level2Mismatch, SingularInterior, ValidationError
from .lti import StateSpaceModel, blkdiag, gain, integrator, series

K = np.array([[0.0, -1.0], [1.0, 0.0]])


class NetworkLevel(str, enum.Enum):
    FULL = "full"
    DYNAMIC = "dynamic"
    LEVEL1 = "level1"
    LEVEL2 = "level2"

    @classmethod
    def parse(cls, value) -> "NetworkLevel":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "").replace("-", "").replace(" ", "")
        for lvl in cls:
            if lvl.value == key:
                return lvl
        raise ValueError(f"unknown network level {value!r}")

    @property
    def is_static(self) -> bool:
        return self in (NetworkLevel.LEVEL1, NetworkLevel.LEVEL2)


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    b: np.ndarray
    rho: float
    omega0: float = 100.0 * np.pi
    v0: np.ndarray = None
    delta0: np.ndarray = None
    vmax: float = 1.1
    vmin: float = 0.9

    def __post_init__(self):
        b = np.array(self.b, dtype=float)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise ValidationError(["susceptance matrix must be square"])
        n = b.shape[0]
        v0 = np.ones(n) if self.v0 is None else np.array(self.v0, dtype=float).ravel()
        d0 = np.zeros(n) if self.delta0 is None else np.array(self.delta0, dtype=float).ravel()
        problems = []
        if not np.allclose(b, b.T, rtol=0, atol=1e-12):
            problems.append("susceptance matrix must be symmetric")
        if np.any(b < 0):
            problems.append("susceptances must be nonnegative")
        if np.any(np.diag(b) != 0):
            problems.append("susceptance diagonal must be zero")
        if self.rho < 0:
            problems.append("rho must be nonnegative")
        if self.omega0 <= 0:
            problems.append("omega0 must be positive")
        if v0.size != n:
            problems.append(f"v0 has {v0.size} entries, expected {n}")
        if d0.size != n:
            problems.append(f"delta0 has {d0.size} entries, expected {n}")
        if self.vmin > self.vmax:
            problems.append("vmin exceeds vmax")
        if v0.size == n and (np.any(v0 < self.vmin - 1e-12) or np.any(v0 > self.vmax + 1e-12)):
            problems.append("v0 outside [vmin, vmax]")
        if problems:
            raise ValidationError(problems)
        b = 0.5 * (b + b.T)
        for name, arr in (("b", b), ("v0", v0), ("delta0", d0)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "omega0", float(self.omega0))

    @property
    def n(self) -> int:
        return self.b.shape[0]

    @property
    def lines(self):
        """(i, j, b_ij) for i < j with b_ij > 0."""
        n = self.n
        return [(i, j, float(self.b[i, j])) for i in range(n) for j in range(i + 1, n) if self.b[i, j] > 0]

    @property
    def degree(self) -> np.ndarray:
        """Sum of incident susceptances per node."""
        return self.b.sum(axis=1)

    def replace(self, **kw) -> "NetworkSpec":
        base = dict(b=self.b, rho=self.rho, omega0=self.omega0, v0=self.v0, delta0=self.delta0,
                    vmax=self.vmax, vmin=self.vmin)
        base.update(kw)
        return NetworkSpec(**base)


def build_laplacian(spec: NetworkSpec) -> np.ndarray:
    b = np.asarray(spec.b, dtype=float)
    return np.diag(b.sum(axis=1)) - b


def _f_rho_core(rho, omega0):
    # (sigma I + K)^-1, sigma = rho + s/omega0
    return StateSpaceModel(-omega0 * (rho * np.eye(2) + K), omega0 * np.eye(2), np.eye(2), np.zeros((2, 2)))


def line_dynamics_f_rho(rho: float, omega0: float) -> StateSpaceModel:
    """[[sigma, 1], [-1, sigma]] / (1 + sigma^2) with sigma = rho + s/omega0."""
    if omega0 <= 0:
        raise ValueError("omega0 must be positive")
    return _f_rho_core(rho, omega0)


def _m_full(rho, omega0):
    # M = (I + sigma K)^-1 = (sigma I - K)^-1 (-K)
    return StateSpaceModel(-omega0 * (rho * np.eye(2) - K), -omega0 * K, np.eye(2), np.zeros((2, 2)))


def _sigma_rational(p0, p1, rho, omega0):
    """(p0 + sigma p1) / (1 + sigma^2), two states per input column."""
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    m = p0.shape[1]
    a2 = -omega0 * (rho * np.eye(2) + K)
    b2 = np.array([[omega0], [0.0]])
    a = blkdiag(*[a2] * m)
    b = blkdiag(*[b2] * m)
    c = np.zeros((p0.shape[0], 2 * m))
    for k in range(m):
        c[:, 2 * k] = p1[:, k]
        c[:, 2 * k + 1] = -p0[:, k]
    return StateSpaceModel(a, b, c, np.zeros((p0.shape[0], m)))


def _m_dynamic(rho, omega0):
    if rho == 0:
        return _m_full(0.0, omega0)
    p0 = np.array([[1.0, -rho], [rho, 1.0]])
    p1 = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return _sigma_rational(p0, p1, rho, omega0)


def _per_line(spec: NetworkSpec, core: StateSpaceModel, weights) -> StateSpaceModel:
    """Sum over lines of b_ij (w w^T) kron core with w = weights(i, j)."""
    n = spec.n
    blocks_a, blocks_b, blocks_c = [], [], []
    for i, j, bij in spec.lines:
        w = np.zeros(n)
        wi, wj = weights(i, j)
        w[i], w[j] = wi, -wj
        win = np.kron(w[None, :], np.eye(2))
        blocks_a.append(core.a)
        blocks_b.append(core.b @ win)
        blocks_c.append(bij * win.T @ core.c)
    if not blocks_a:
        return gain(np.zeros((2 * n, 2 * n)))
    a = blkdiag(*blocks_a)
    b = np.vstack(blocks_b)
    c = np.hstack(blocks_c)
    return StateSpaceModel(a, b, c, np.zeros((2 * n, 2 * n)))


def build_Y(spec: NetworkSpec) -> StateSpaceModel:
    """B kron f_rho(s); one state pair per line."""
    return _per_line(spec, _f_rho_core(spec.rho, spec.omega0), lambda i, j: (1.0, 1.0))


def _static_correction(spec: NetworkSpec, pattern) -> np.ndarray:
    v = spec.v0
    n = spec.n
    out = np.zeros((2 * n, 2 * n))
    for i in range(n):
        w = sum(spec.b[i, j] * (v[i] ** 2 - v[i] * v[j]) for j in range(n) if j != i)
        out[2 * i:2 * i + 2, 2 * i:2 * i + 2] = w / (1 + spec.rho ** 2) * pattern
    return out


def _level1_matrix(spec: NetworkSpec, v=None) -> np.ndarray:
    v = spec.v0 if v is None else v
    n, rho = spec.n, spec.rho
    out = np.zeros((2 * n, 2 * n))
    for i in range(n):
        for j in range(n):
            if i == j or spec.b[i, j] == 0:
                continue
            bij = spec.b[i, j] / (1 + rho ** 2)
            out[2 * i, 2 * i] += bij * v[i] * v[j]
            out[2 * i + 1, 2 * i + 1] += bij * (2 * v[i] ** 2 - v[i] * v[j])
            out[2 * i:2 * i + 2, 2 * j:2 * j + 2] = -bij * v[i] * v[j] * np.eye(2)
    return out


def build_N(spec: NetworkSpec, level=NetworkLevel.DYNAMIC) -> StateSpaceModel:
    """Map (d_delta, d_|v|_n) per node to (d_p, d_q) per node."""
    level = NetworkLevel.parse(level)
    v = spec.v0
    if level is NetworkLevel.LEVEL1:
        return gain(_level1_matrix(spec))
    if level is NetworkLevel.LEVEL2:
        if np.ptp(v) > 1e-9:
            raise Level2Mismatch("Level2 network requires uniform steady-state voltages")
        return gain(_level1_matrix(spec, np.full(spec.n, v.mean())))
    if level is NetworkLevel.FULL:
        core = _m_full(spec.rho, spec.omega0)
        pattern = np.array([[-1.0, spec.rho], [spec.rho, 1.0]])
    else:
        core = _m_dynamic(spec.rho, spec.omega0)
        pattern = np.diag([-1.0, 1.0])
    dyn = _per_line(spec, core, lambda i, j: (v[i], v[j]))
    return StateSpaceModel(dyn.a, dyn.b, dyn.c, dyn.d + _static_correction(spec, pattern))


def _m_matrix(kind: str, rho: float, s: complex, omega0: float) -> np.ndarray:
    x = s / omega0
    sig = rho + x
    if kind == "M":
        return np.array([[1, sig], [-sig, 1]]) / (1 + sig ** 2)
    if kind == "M1":
        return np.array([[1, x], [-x, 1]]) / (1 + x ** 2)
    if kind == "M2":
        return np.array([[1, x], [-x, 1]]) / (1 + sig ** 2)
    raise ValueError(kind)


def n_closed_form(spec: NetworkSpec, level, s: complex) -> np.ndarray:
    """Evaluate the closed-form blocks of N at a complex point s."""
    level = NetworkLevel.parse(level)
    n, rho, v = spec.n, spec.rho, spec.v0
    if level is NetworkLevel.LEVEL2:
        if np.ptp(v) > 1e-9:
            raise Level2Mismatch("Level2 network requires uniform steady-state voltages")
        v = np.full(n, v.mean())
    if level.is_static:
        return _level1_matrix(spec, v).astype(complex)
    kind = "M" if level is NetworkLevel.FULL else "M2"
    m = _m_matrix(kind, rho, s, spec.omega0)
    pattern = (np.array([[-1.0, rho], [rho, 1.0]]) if level is NetworkLevel.FULL
               else np.diag([-1.0, 1.0]))
    out = np.zeros((2 * n, 2 * n), dtype=complex)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            bij = spec.b[i, j]
            out[2 * i:2 * i + 2, 2 * i:2 * i + 2] += bij * v[i] ** 2 * m
            out[2 * i:2 * i + 2, 2 * i:2 * i + 2] += bij * (v[i] ** 2 - v[i] * v[j]) / (1 + rho ** 2) * pattern
            out[2 * i:2 * i + 2, 2 * j:2 * j + 2] = -bij * v[i] * v[j] * m
    return out


def approximation_error_ratio(rho: float, omega: float, omega0: float) -> float:
    """||M - M2||_F / ||M - M1||_F at s = j omega; 1 where both distances vanish."""
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    if rho == 0:
        return 1.0
    s = 1j * omega
    if abs(1 - (omega / omega0) ** 2) < 1e-15:
        # M1 has its pole here, so the ratio tends to zero
        return 0.0
    m = _m_matrix("M", rho, s, omega0)
    num = np.linalg.norm(m - _m_matrix("M2", rho, s, omega0), "fro")
    den = np.linalg.norm(m - _m_matrix("M1", rho, s, omega0), "fro")
    if num < 1e-14 and den < 1e-14:
        return 1.0
    return float(num / den)


def approximation_error_ratio_closed_form(rho: float, omega: float, omega0: float) -> float:
    x2 = (omega / omega0) ** 2
    num = 1 + x2 ** 2 - 2 * x2
    den = 1 + x2 ** 2 + 6 * x2 + rho ** 2 * (1 + x2)
    return float(np.sqrt(num / den))


def _angle_voltage_scaling(spec: NetworkSpec, voltage_gain) -> StateSpaceModel:
    """Per node diag(1/s, voltage_gain_i) as a 2n x 2n system."""
    n = spec.n
    blocks = []
    for i in range(n):
        g = voltage_gain(i)
        if g is None:
            blocks.append(integrator(2))
        else:
            blocks.append(StateSpaceModel([[0.0]], [[1.0, 0.0]], [[1.0], [0.0]], [[0.0, 0.0], [0.0, g]]))
    from .lti import append
    return append(*blocks)


def build_N0(spec: NetworkSpec, level=NetworkLevel.DYNAMIC) -> StateSpaceModel:
    """N(s) diag(1/s, 1/|v|_0,i): inputs (d_omega, d_|v|) per node."""
    pre = _angle_voltage_scaling(spec, lambda i: 1.0 / spec.v0[i])
    if NetworkLevel.parse(level) is NetworkLevel.LEVEL2:
        vbar = spec.v0.mean()
        pre = _angle_voltage_scaling(spec, lambda i: 1.0 / vbar)
    return series(pre, build_N(spec, level))


def build_N_transformed(spec: NetworkSpec, level=NetworkLevel.DYNAMIC) -> StateSpaceModel:
    """N(s) diag(1/s, 1/s): every channel integrated."""
    return series(_angle_voltage_scaling(spec, lambda i: None), build_N(spec, level))


def kron_reduce(b_full, boundary: Sequence[int]) -> np.ndarray:
    """Eliminate interior nodes; returns pairwise susceptances among boundary nodes."""
    b_full = np.asarray(b_full, dtype=float)
    m = b_full.shape[0]
    boundary = list(boundary)
    interior = [k for k in range(m) if k not in boundary]
    if not interior:
        return b_full[np.ix_(boundary, boundary)].copy()
    lap = np.diag(b_full.sum(axis=1)) - b_full
    lbb = lap[np.ix_(boundary, boundary)]
    lbi = lap[np.ix_(boundary, interior)]
    lii = lap[np.ix_(interior, interior)]
    if np.linalg.matrix_rank(lii) < len(interior):
        raise SingularInterior("interior sub-Laplacian is singular")
    red = lbb - lbi @ np.linalg.solve(lii, lbi.T)
    out = -red
    np.fill_diagonal(out, 0.0)
    out[np.abs(out) < 1e-15] = 0.0
    return 0.5 * (out + out.T)


def linearize_dq_oracle(spec: NetworkSpec, omega: float) -> np.ndarray:
    """Polar-coordinate network response assembled from dq quantities.

    Builds Y(j omega) = B kron f_rho directly, the steady-state currents from
    the rectangular voltages, and the linearized power and voltage maps.
    """
    n, rho, w0 = spec.n, spec.rho, spec.omega0
    vm, d0 = spec.v0, spec.delta0
    vd0, vq0 = vm * np.cos(d0), vm * np.sin(d0)
    lap = build_laplacian(spec)
    sig = rho + 1j * omega / w0
    f = np.array([[sig, 1], [-1, sig]]) / (1 + sig ** 2)
    f0 = np.array([[rho, 1], [-1, rho]]) / (1 + rho ** 2)
    y = np.kron(lap, f)
    v0_rect = np.column_stack([vd0, vq0]).ravel()
    i0 = (np.kron(lap, f0) @ v0_rect).reshape(n, 2)
    id0, iq0 = i0[:, 0], i0[:, 1]
    # input (d_delta, d_|v|_n) -> rectangular voltage deviations
    t = np.zeros((2 * n, 2 * n))
    for k in range(n):
        c, s_ = np.cos(d0[k]), np.sin(d0[k])
        # d|v| = v0 * d|v|_n
        t[2 * k, 2 * k] = -vm[k] * s_
        t[2 * k, 2 * k + 1] = c * vm[k]
        t[2 * k + 1, 2 * k] = vm[k] * c
        t[2 * k + 1, 2 * k + 1] = s_ * vm[k]
    dv = t.astype(complex)
    di = y @ dv
    out = np.zeros((2 * n, 2 * n), dtype=complex)
    for k in range(n):
        rd, rq = dv[2 * k], dv[2 * k + 1]
        jd, jq = di[2 * k], di[2 * k + 1]
        out[2 * k] = vd0[k] * jd + id0[k] * rd + vq0[k] * jq + iq0[k] * rq
        out[2 * k + 1] = -vd0[k] * jq - iq0[k] * rd + vq0[k] * jd + id0[k] * rq
    return out
