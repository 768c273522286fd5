"""State-space LTI models, interconnections and complex-matrix analysis.

Every transfer matrix in the package is carried as a real state-space
quadruple.  Interconnections return new immutable models; nothing is mutated.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg, signal

from .errors import DegenerateOperatingPoint, IllPosed, NotSimplePole, PoleOnGrid

OMEGA0 = 100.0 * np.pi
PBH_TOL = 1e-8


def blkdiag(*mats) -> np.ndarray:
    """Block-diagonal matrix that respects empty (0 x k) blocks."""
    mats = [np.atleast_2d(np.asarray(m)) if np.asarray(m).ndim < 2 else np.asarray(m) for m in mats]
    rows = sum(m.shape[0] for m in mats)
    cols = sum(m.shape[1] for m in mats)
    dtype = np.result_type(*mats) if mats else float
    out = np.zeros((rows, cols), dtype=dtype)
    r = c = 0
    for m in mats:
        out[r:r + m.shape[0], c:c + m.shape[1]] = m
        r += m.shape[0]
        c += m.shape[1]
    return out


def _as_matrix(x, rows=None, cols=None):
    m = np.atleast_2d(np.asarray(x, dtype=float))
    if m.size == 0:
        m = np.zeros((rows or 0, cols or 0))
    return m


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    inputs: Optional[tuple] = None
    outputs: Optional[tuple] = None

    def __post_init__(self):
        d = _as_matrix(self.d)
        p, m = d.shape
        a = np.asarray(self.a, dtype=float)
        nx = a.shape[0] if a.size else 0
        a = a.reshape(nx, nx)
        b = np.asarray(self.b, dtype=float).reshape(nx, m)
        c = np.asarray(self.c, dtype=float).reshape(p, nx)
        for name, arr in (("a", a), ("b", b), ("c", c), ("d", d)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.inputs is not None:
            object.__setattr__(self, "inputs", tuple(self.inputs))
            if len(self.inputs) != m:
                raise ValueError("input label count does not match d")
        if self.outputs is not None:
            object.__setattr__(self, "outputs", tuple(self.outputs))
            if len(self.outputs) != p:
                raise ValueError("output label count does not match d")

    @property
    def n_states(self) -> int:
        return self.a.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.d.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.d.shape[0]

    @property
    def shape(self):
        return self.d.shape

    def __repr__(self):
        return (f"StateSpaceModel(states={self.n_states}, outputs={self.n_outputs}, "
                f"inputs={self.n_inputs})")

    def with_labels(self, inputs=None, outputs=None) -> "StateSpaceModel":
        return StateSpaceModel(self.a, self.b, self.c, self.d, inputs, outputs)

    def sub(self, rows, cols) -> "StateSpaceModel":
        """Select an output/input sub-map (same state matrix)."""
        rows = np.arange(self.n_outputs)[rows]
        cols = np.arange(self.n_inputs)[cols]
        return StateSpaceModel(self.a, self.b[:, cols], self.c[rows, :],
                               self.d[np.ix_(rows, cols)])

    def __neg__(self):
        return StateSpaceModel(self.a, self.b, -self.c, -self.d)

    def __add__(self, other):
        return parallel(self, other)

    def __sub__(self, other):
        return parallel(self, -other)

    def __matmul__(self, other):
        # self @ other means "apply other first, then self"
        return series(other, self)


@dataclass(frozen=True)
class FrequencyGrid:
    omegas: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.omegas, dtype=float).ravel()
        if not np.all(np.isfinite(w)):
            raise ValueError("frequency grid must be finite")
        if np.any(w < 0):
            raise ValueError("frequency grid must be nonnegative")
        if w.size > 1 and np.any(np.diff(w) <= 0):
            raise ValueError("frequency grid must be strictly increasing")
        w.setflags(write=False)
        object.__setattr__(self, "omegas", w)

    def __len__(self):
        return self.omegas.size

    def __iter__(self):
        return iter(self.omegas)

    @classmethod
    def logspace(cls, wmin, wmax, n):
        return cls(np.logspace(np.log10(wmin), np.log10(wmax), int(n)))

    @classmethod
    def merge(cls, *arrays):
        w = np.unique(np.concatenate([np.ravel(a) for a in arrays]))
        return cls(w[w >= 0])


# ---------------------------------------------------------------- constructors

def gain(k) -> StateSpaceModel:
    k = _as_matrix(k)
    return StateSpaceModel(np.zeros((0, 0)), np.zeros((0, k.shape[1])),
                           np.zeros((k.shape[0], 0)), k)


def integrator(n: int = 1, k: float = 1.0) -> StateSpaceModel:
    return StateSpaceModel(np.zeros((n, n)), k * np.eye(n), np.eye(n), np.zeros((n, n)))


def first_order_lag(k: float, tau: float) -> StateSpaceModel:
    """k / (tau s + 1); tau == 0 gives a static gain."""
    if tau == 0:
        return gain([[k]])
    return StateSpaceModel([[-1.0 / tau]], [[1.0 / tau]], [[k]], [[0.0]])


def zeros(p: int, m: int) -> StateSpaceModel:
    return gain(np.zeros((p, m)))


def from_tf(num, den) -> StateSpaceModel:
    """SISO realization of num(s)/den(s), coefficients highest power first."""
    num = np.trim_zeros(np.asarray(num, float), "f")
    den = np.trim_zeros(np.asarray(den, float), "f")
    if den.size == 0:
        raise ValueError("denominator is identically zero")
    if num.size == 0:
        return gain([[0.0]])
    if num.size > den.size:
        raise DegenerateOperatingPoint("transfer function is improper")
    if den.size == 1:
        return gain([[num[0] / den[0]]])
    a, b, c, d = signal.tf2ss(num, den)
    # diagonal similarity scaling tames the companion form
    _, (sc, _) = linalg.matrix_balance(a, separate=True, permute=False)
    a = a * sc[None, :] / sc[:, None]
    b = b / sc[:, None]
    c = c * sc[None, :]
    return StateSpaceModel(a, b, c, d)


# ---------------------------------------------------------------- frequency response

def _check_grid_poles(model, omegas, tol):
    if model.n_states == 0:
        return
    ev = np.linalg.eigvals(model.a)
    for w in np.atleast_1d(omegas):
        if np.any(np.abs(ev - 1j * w) <= tol):
            raise PoleOnGrid(f"j*{w:g} rad/s is a pole of the model")


def eval_freq(model: StateSpaceModel, omega: float, tol: float = 1e-9 * OMEGA0) -> np.ndarray:
    """Return c (j omega I - a)^-1 b + d."""
    return eval_s(model, 1j * omega, tol)


def eval_s(model: StateSpaceModel, s: complex, tol: float = 1e-9 * OMEGA0) -> np.ndarray:
    d = model.d.astype(complex)
    if model.n_states == 0:
        return d
    ev = np.linalg.eigvals(model.a)
    if np.any(np.abs(ev - s) <= tol):
        raise PoleOnGrid(f"s={s} coincides with a pole of the model")
    x = np.linalg.solve(s * np.eye(model.n_states) - model.a, model.b)
    return model.c @ x + d


def freq_response(model: StateSpaceModel, omegas, tol: float = 1e-9 * OMEGA0) -> np.ndarray:
    """Stacked responses, shape (len(omegas), n_outputs, n_inputs)."""
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    out = np.empty((omegas.size, model.n_outputs, model.n_inputs), dtype=complex)
    if model.n_states == 0:
        out[:] = model.d
        return out
    _check_grid_poles(model, omegas, tol)
    # Hessenberg form keeps each solve cheap and accurate
    h, q = linalg.hessenberg(model.a, calc_q=True)
    bq = q.T @ model.b
    cq = model.c @ q
    eye = np.eye(model.n_states)
    for k, w in enumerate(omegas):
        out[k] = cq @ linalg.solve(1j * w * eye - h, bq) + model.d
    return out


# ---------------------------------------------------------------- interconnection

def series(first: StateSpaceModel, second: StateSpaceModel) -> StateSpaceModel:
    """y = second(first(u))."""
    if first.n_outputs != second.n_inputs:
        raise ValueError("series: dimension mismatch")
    n1, n2 = first.n_states, second.n_states
    a = np.block([[first.a, np.zeros((n1, n2))],
                  [second.b @ first.c, second.a]])
    b = np.vstack([first.b, second.b @ first.d])
    c = np.hstack([second.d @ first.c, second.c])
    return StateSpaceModel(a, b, c, second.d @ first.d, first.inputs, second.outputs)


def parallel(g1: StateSpaceModel, g2: StateSpaceModel) -> StateSpaceModel:
    """y = g1(u) + g2(u)."""
    if g1.shape != g2.shape:
        raise ValueError("parallel: dimension mismatch")
    a = blkdiag(g1.a, g2.a)
    b = np.vstack([g1.b, g2.b])
    c = np.hstack([g1.c, g2.c])
    return StateSpaceModel(a, b, c, g1.d + g2.d, g1.inputs, g1.outputs)


def append(*models: StateSpaceModel) -> StateSpaceModel:
    """Block-diagonal stacking of independent systems."""
    return StateSpaceModel(blkdiag(*[m.a for m in models]), blkdiag(*[m.b for m in models]),
                           blkdiag(*[m.c for m in models]), blkdiag(*[m.d for m in models]))


def scale(model: StateSpaceModel, left=None, right=None) -> StateSpaceModel:
    """left @ model @ right for constant matrices."""
    b, d, c = model.b, model.d, model.c
    if right is not None:
        right = _as_matrix(right)
        b, d = b @ right, d @ right
    if left is not None:
        left = _as_matrix(left)
        c, d = left @ c, left @ d
    return StateSpaceModel(model.a, b, c, d)


@dataclass(frozen=True, eq=False)
class GangOfFour:
    """The four closed-loop maps of the negative-feedback pair (h1, h2).

    ``full`` maps (w1, w2) to (y1, y2) with e1 = w1 - y2, e2 = w2 + y1,
    y1 = h1 e1, y2 = h2 e2.
    """
    full: StateSpaceModel
    n1: int
    n2: int

    def _block(self, r, c):
        rows = slice(0, self.n1) if r == 0 else slice(self.n1, self.n1 + self.n2)
        cols = slice(0, self.n2) if c == 0 else slice(self.n2, self.n2 + self.n1)
        return self.full.sub(rows, cols)

    @property
    def upper_left(self):
        """(I + H1 H2)^-1 H1."""
        return self._block(0, 0)

    @property
    def upper_right(self):
        """-(I + H1 H2)^-1 H1 H2."""
        return self._block(0, 1)

    @property
    def lower_left(self):
        """H2 (I + H1 H2)^-1 H1."""
        return self._block(1, 0)

    @property
    def lower_right(self):
        """H2 (I + H1 H2)^-1."""
        return self._block(1, 1)

    def __iter__(self):
        return iter((self.upper_left, self.upper_right, self.lower_left, self.lower_right))


def interconnect_gang_of_four(h1: StateSpaceModel, h2: StateSpaceModel) -> GangOfFour:
    if h1.n_inputs != h2.n_outputs or h2.n_inputs != h1.n_outputs:
        raise ValueError("gang of four: dimension mismatch")
    p1, m1 = h1.shape
    p2, m2 = h2.shape
    f = np.block([[np.eye(p1), h1.d], [-h2.d, np.eye(p2)]])
    cond = np.linalg.cond(f)
    if not np.isfinite(cond) or cond > 1e12:
        raise IllPosed("I + D1 D2 is singular")
    finv = np.linalg.inv(f)
    cblk = blkdiag(h1.c, h2.c)
    dblk = blkdiag(h1.d, h2.d)
    cy = finv @ cblk
    dy = finv @ dblk
    # e = w + S y with S = [[0, -I], [I, 0]] (w ordered as (w1, w2))
    s = np.block([[np.zeros((m1, p1)), -np.eye(m1, p2)],
                  [np.eye(m2, p1), np.zeros((m2, p2))]])
    ce = s @ cy
    de = np.eye(m1 + m2) + s @ dy
    ablk = blkdiag(h1.a, h2.a)
    bblk = blkdiag(h1.b, h2.b)
    a = ablk + bblk @ ce
    b = bblk @ de
    # inputs (w1, w2) are the (m1, m2) channels, outputs (y1, y2)
    full = StateSpaceModel(a, b, cy, dy)
    return GangOfFour(full, p1, p2)


def feedback(g: StateSpaceModel, h: StateSpaceModel, sign: float = -1.0) -> StateSpaceModel:
    """y = g(u + sign * h y)."""
    hh = h if sign < 0 else -h
    return interconnect_gang_of_four(g, hh).upper_left


# ---------------------------------------------------------------- poles and modes

def poles(model: StateSpaceModel) -> np.ndarray:
    if model.n_states == 0:
        return np.zeros(0, dtype=complex)
    ev = np.linalg.eigvals(model.a).astype(complex)
    order = np.lexsort((-ev.imag, -ev.real))
    return ev[order]


def _min_sv(m):
    return np.linalg.svd(m, compute_uv=False)[-1] if m.size else 0.0


def pbh_controllable(a, b, lam, tol=PBH_TOL) -> bool:
    n = a.shape[0]
    m = np.hstack([a - lam * np.eye(n), b]).astype(complex)
    scale_ = max(np.linalg.norm(np.hstack([a, b]), 2), 1.0)
    return np.linalg.svd(m, compute_uv=False)[n - 1] > tol * scale_


def pbh_observable(a, c, lam, tol=PBH_TOL) -> bool:
    return pbh_controllable(a.T, c.T, lam, tol)


@dataclass(frozen=True)
class ModeClassification:
    eigenvalue: complex
    controllable: bool
    observable: bool
    structural: bool

    @property
    def minimal(self) -> bool:
        return self.controllable and self.observable


@dataclass(frozen=True)
class StabilityVerdict:
    stable: bool
    margin: float
    inconclusive: bool
    modes: tuple
    structural: tuple = ()
    hidden_unstable: tuple = ()
    margin_tol: float = 0.0
    zero_tol: float = 0.0

    @property
    def poles(self):
        return np.array([m.eigenvalue for m in self.modes])

    @property
    def minimal_poles(self):
        return np.array([m.eigenvalue for m in self.modes if m.minimal])

    def to_dict(self):
        return {
            "stable": bool(self.stable),
            "margin": float(self.margin),
            "inconclusive": bool(self.inconclusive),
            "n_modes": len(self.modes),
            "structural": [complex(m.eigenvalue) for m in self.structural],
            "hidden_unstable": [complex(m.eigenvalue) for m in self.hidden_unstable],
            "margin_tol": self.margin_tol,
            "zero_tol": self.zero_tol,
        }


def classify_modes(model: StateSpaceModel, zero_tol: float = 1e-9 * OMEGA0,
                   pbh_tol: float = PBH_TOL):
    out = []
    for lam in poles(model):
        ctrb = pbh_controllable(model.a, model.b, lam, pbh_tol)
        obsv = pbh_observable(model.a, model.c, lam, pbh_tol)
        structural = abs(lam) < zero_tol and not (ctrb and obsv)
        out.append(ModeClassification(complex(lam), ctrb, obsv, structural))
    return out


def stability_verdict(model: StateSpaceModel, zero_tol: float = 1e-9 * OMEGA0,
                      margin_tol: float = 1e-7 * OMEGA0, pbh_tol: float = PBH_TOL) -> StabilityVerdict:
    if zero_tol <= 0 or margin_tol <= 0:
        raise ValueError("tolerances must be positive")
    modes = classify_modes(model, zero_tol, pbh_tol)
    minimal = [m for m in modes if m.minimal]
    structural = tuple(m for m in modes if m.structural)
    hidden = tuple(m for m in modes
                   if not m.minimal and not m.structural and m.eigenvalue.real >= -margin_tol)
    worst = max((m.eigenvalue.real for m in minimal), default=-np.inf)
    stable = worst < -margin_tol
    inconclusive = any(abs(m.eigenvalue.real) <= margin_tol for m in minimal)
    return StabilityVerdict(stable, float(-worst), inconclusive, tuple(modes),
                            structural, hidden, margin_tol, zero_tol)


# ---------------------------------------------------------------- reductions

def _orth(m, tol):
    if m.shape[1] == 0:
        return np.zeros((m.shape[0], 0))
    u, s, _ = np.linalg.svd(m, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((m.shape[0], 0))
    r = int(np.sum(s > tol * max(s[0], 1.0)))
    return u[:, :r]


def _reachable_basis(a, b, tol):
    n = a.shape[0]
    q = _orth(b, tol)
    while q.shape[1] < n:
        q_new = _orth(np.hstack([q, a @ q]), tol)
        if q_new.shape[1] == q.shape[1]:
            break
        q = q_new
    return q


def minreal(model: StateSpaceModel, tol: float = 1e-9) -> StateSpaceModel:
    """Remove uncontrollable then unobservable states by orthogonal projection."""
    if model.n_states == 0:
        return model
    a, b, c = model.a, model.b, model.c
    anorm = max(np.linalg.norm(a, 2), 1.0)
    q = _reachable_basis(a / anorm, b / max(np.linalg.norm(b, 2), 1e-300), tol)
    a, b, c = q.T @ a @ q, q.T @ b, c @ q
    if a.shape[0]:
        q = _reachable_basis(a.T / anorm, c.T / max(np.linalg.norm(c, 2), 1e-300), tol)
        a, b, c = q.T @ a @ q, q.T @ b, c @ q
    return StateSpaceModel(a, b, c, model.d, model.inputs, model.outputs)


@dataclass(frozen=True, eq=False)
class OriginSplit:
    """Model decomposed as origin part (a0, b0, c0) plus remainder."""
    a0: np.ndarray
    b0: np.ndarray
    c0: np.ndarray
    rest: StateSpaceModel


def split_origin(model: StateSpaceModel, tol: float = 1e-9 * OMEGA0) -> OriginSplit:
    """Block-diagonalize the state map into |lambda| < tol and the rest."""
    n = model.n_states
    if n == 0:
        return OriginSplit(np.zeros((0, 0)), np.zeros((0, model.n_inputs)),
                           np.zeros((model.n_outputs, 0)), model)
    t, z, k = linalg.schur(model.a, output="real", sort=lambda x, y: abs(complex(x, y)) < tol)
    a11, a12, a22 = t[:k, :k], t[:k, k:], t[k:, k:]
    # x = solve(a11 x - x a22 = -a12) removes the coupling
    x = linalg.solve_sylvester(a11, -a22, -a12) if k and k < n else np.zeros((k, n - k))
    tmat = np.eye(n)
    tmat[:k, k:] = x
    tinv = np.eye(n)
    tinv[:k, k:] = -x
    bz = z.T @ model.b
    cz = model.c @ z
    b_new = tinv @ bz
    c_new = cz @ tmat
    rest = StateSpaceModel(a22, b_new[k:], c_new[:, k:], model.d)
    return OriginSplit(a11, b_new[:k], c_new[:, :k], rest)


def _io_scale(model):
    # relative to the whole model, so a vanishing origin part reads as zero
    return max(np.linalg.norm(model.c) * np.linalg.norm(model.b), 1e-300)


def residue_at_origin(model: StateSpaceModel, tol: float = 1e-9 * OMEGA0,
                      rel_tol: float = 1e-7) -> np.ndarray:
    """lim_{s->0} s H(s) for a model whose origin poles are simple."""
    sp = split_origin(model, tol)
    if sp.a0.shape[0] == 0:
        return np.zeros(model.shape)
    r = sp.c0 @ sp.b0
    scale_ = _io_scale(model)
    ak = sp.a0.copy()
    for _ in range(sp.a0.shape[0]):
        if np.linalg.norm(sp.c0 @ ak @ sp.b0) > rel_tol * scale_:
            raise NotSimplePole("origin pole of order > 1 in the minimal part")
        ak = ak @ sp.a0
    return r


def dc_gain(model: StateSpaceModel, tol: float = 1e-9 * OMEGA0, rel_tol: float = 1e-7) -> np.ndarray:
    """H(0), discarding non-minimal origin modes; raises if a true origin pole is present."""
    sp = split_origin(model, tol)
    if sp.a0.shape[0]:
        scale_ = _io_scale(model)
        ak = np.eye(sp.a0.shape[0])
        for _ in range(sp.a0.shape[0]):
            if np.linalg.norm(sp.c0 @ ak @ sp.b0) > rel_tol * scale_:
                raise PoleOnGrid("model has a pole at the origin")
            ak = ak @ sp.a0
    rest = sp.rest
    if rest.n_states == 0:
        return rest.d.copy()
    return rest.d - rest.c @ np.linalg.solve(rest.a, rest.b)


# ---------------------------------------------------------------- matrix analysis

def hermitian_part(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m)
    return 0.5 * (m + m.conj().T)


def is_hermitian_psd(m, tol: float = 1e-10) -> bool:
    m = np.asarray(m, dtype=complex)
    if m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    nrm = np.linalg.norm(m, 2) if m.size else 0.0
    if np.linalg.norm(m - m.conj().T, 2) > tol * nrm:
        return False
    return bool(np.linalg.eigvalsh(hermitian_part(m)).min() >= -tol)


def gershgorin_dominant(m, tol: float = 1e-12) -> bool:
    """Hermitian, real nonnegative diagonal and row diagonal dominance."""
    m = np.asarray(m, dtype=complex)
    scale_ = max(np.abs(m).max(), 1.0) if m.size else 1.0
    if np.abs(m - m.conj().T).max(initial=0.0) > tol * scale_:
        return False
    diag = np.diag(m)
    if np.any(np.abs(diag.imag) > tol * scale_) or np.any(diag.real < -tol * scale_):
        return False
    off = np.abs(m).sum(axis=1) - np.abs(diag)
    return bool(np.all(diag.real - off >= -tol * scale_))


def numerical_range_boundary(a, n_angles: int = 720) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if n_angles < 8:
        raise ValueError("n_angles must be at least 8")
    pts = np.empty(n_angles, dtype=complex)
    for k, th in enumerate(np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)):
        h = 0.5 * (np.exp(-1j * th) * a + np.exp(1j * th) * a.conj().T)
        _, v = np.linalg.eigh(h)
        x = v[:, -1]
        pts[k] = x.conj() @ a @ x
    return pts


@dataclass(frozen=True)
class PhaseInterval:
    phi_max: Optional[float]
    phi_min: Optional[float]
    sectorial: bool
    semi_sectorial: bool = False

    @property
    def width(self):
        return None if not self.sectorial else self.phi_max - self.phi_min


def _support(a, thetas):
    """max over W(a) of Re(e^{-j theta} z) for each theta."""
    vals = np.empty(thetas.size)
    for k, th in enumerate(thetas):
        h = 0.5 * (np.exp(-1j * th) * a + np.exp(1j * th) * a.conj().T)
        vals[k] = np.linalg.eigvalsh(h)[-1]
    return vals


def matrix_phases(a, n_angles: int = 720, tol: float = 1e-10) -> PhaseInterval:
    """Phases of a sectorial matrix; sectorial=False when 0 is inside W(a)."""
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    nrm = max(np.linalg.norm(a, 2), 1e-300)
    if a.shape == (1, 1):
        z = a[0, 0]
        if abs(z) <= tol * max(abs(z), 1.0):
            return PhaseInterval(None, None, False, True)
        ph = float(np.angle(z))
        return PhaseInterval(ph, ph, True)
    thetas = np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)
    sup = _support(a, thetas)
    k = int(np.argmin(sup))
    band = tol * nrm
    if sup[k] > band:
        return PhaseInterval(None, None, False)
    if sup[k] > -band:
        return PhaseInterval(None, None, False, True)
    # W(a) lies in the open half-plane facing direction theta_k + pi
    center = thetas[k] + np.pi
    pts = numerical_range_boundary(a, n_angles)
    rel = np.angle(pts * np.exp(-1j * center))
    c = float(np.angle(np.exp(1j * center)))
    return PhaseInterval(c + float(rel.max()), c + float(rel.min()), True)


@dataclass(frozen=True)
class GainPhaseRecord:
    omega: float
    kind: str           # "phase", "gain" or "inapplicable"
    passed: bool
    margin: float


@dataclass(frozen=True)
class GainPhaseReport:
    records: tuple
    passed: bool
    worst_phase_margin: float
    worst_gain_margin: float


def mixed_gain_phase_check(h1: StateSpaceModel, h2: StateSpaceModel, grid: FrequencyGrid,
                           omega_c: float = np.inf, n_angles: int = 720) -> GainPhaseReport:
    """Phase test below omega_c, small-gain test at and above it.

    With omega_c = inf the gain test is applied at the top grid point only.
    """
    omegas = np.asarray(grid.omegas)
    p2 = poles(h2)
    recs = []
    wp, wg = np.inf, np.inf
    top = omegas[-1] if omegas.size else np.inf
    for w in omegas:
        if np.any(np.abs(p2 - 1j * w) <= 1e-6 * max(w, 1.0)) or \
                np.any(np.abs(poles(h1) - 1j * w) <= 1e-6 * max(w, 1.0)):
            continue
        g1, g2 = eval_freq(h1, w), eval_freq(h2, w)
        if w < omega_c:
            ph1, ph2 = matrix_phases(g1, n_angles), matrix_phases(g2, n_angles)
            if not (ph1.sectorial and ph2.sectorial):
                recs.append(GainPhaseRecord(float(w), "inapplicable", False, np.nan))
            else:
                m = min(np.pi - (ph1.phi_max + ph2.phi_max), (ph1.phi_min + ph2.phi_min) + np.pi)
                wp = min(wp, m)
                recs.append(GainPhaseRecord(float(w), "phase", m > 0, float(m)))
        if w >= omega_c or (np.isinf(omega_c) and w == top):
            prod = np.linalg.norm(g1, 2) * np.linalg.norm(g2, 2)
            m = 1.0 - prod
            wg = min(wg, m)
            recs.append(GainPhaseRecord(float(w), "gain", m > 0, float(m)))
    passed = bool(recs) and all(r.passed for r in recs)
    return GainPhaseReport(tuple(recs), passed, float(wp), float(wg))
