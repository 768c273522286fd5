"""Decentralized droop-tuning conditions and their feasible regions."""
from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from .devices import ConverterSpec
from .netmodel import NetworkSpec


@dataclass(frozen=True)
class RhoCoefficients:
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    c6: float
    c7: float
    c8: float
    c9: float
    rho: float
    vmax: float
    degenerate: bool = False

    def as_dict(self):
        return asdict(self)


def table1_coeffs(rho: float, vmax: float = 1.1) -> RhoCoefficients:
    """Condition coefficients as functions of rho and the voltage bound.

    At rho = 0 the record is marked degenerate: c2 and c7 are infinite and
    c3, c4 vanish, so the dynamic certificate admits only zero coupling.
    """
    if rho < 0 or vmax <= 0:
        raise ValueError("need rho >= 0 and vmax > 0")
    r2 = rho * rho
    v2 = vmax * vmax
    c1 = (1 + r2) / (5 + 2 * r2)
    c3 = 2 * rho * (1 + r2)
    c5 = 5 * (1 + r2) / 4
    c6 = (1 + r2) / (2 * r2 * v2 + 5 * v2)
    c8 = -2 * rho * v2 * v2
    c9 = v2 * (2 * r2 - 5)
    if rho == 0:
        return RhoCoefficients(c1, np.inf, 0.0, 0.0, c5, c6, np.inf, c8, c9, 0.0, vmax, True)
    c2 = (1 + r2) ** 2 / (6 * rho)
    # (2r^2 - 5) + sqrt((5 - 2r^2)^2 + 16 r^2) suffers cancellation for small rho
    root = np.sqrt((5 - 2 * r2) ** 2 + 16 * r2)
    c4 = (16 * r2 / (root + (5 - 2 * r2))) / (4 * rho)
    c7 = (r2 + 1) ** 2 / (6 * rho * v2)
    return RhoCoefficients(c1, c2, c3, c4, c5, c6, c7, c8, c9, float(rho), float(vmax))


@dataclass(frozen=True)
class CouplingStrengths:
    alpha_p: float
    alpha_q: float
    tau_p_tilde: float
    tau_q_tilde: float


def coupling_strengths(net: NetworkSpec, conv: ConverterSpec, i: int) -> CouplingStrengths:
    """Coupling of converter i to its neighbours, gains on the global base."""
    deg = float(net.degree[i])
    return CouplingStrengths(
        alpha_p=conv.d_p * net.vmax ** 2 * deg,
        alpha_q=conv.d_q / net.v0[i] * deg,
        tau_p_tilde=conv.tau_p * net.omega0,
        tau_q_tilde=conv.tau_q * net.omega0,
    )


@dataclass(frozen=True)
class ConditionResult:
    name: str
    passed: bool
    margin: float
    rhs: float
    near_boundary: bool


def _result(name, lhs, rhs, degenerate=False):
    margin = rhs - lhs
    near = bool(np.isfinite(margin) and abs(margin) < 1e-9 * max(1.0, abs(rhs) if np.isfinite(rhs) else 1.0))
    passed = margin > 0 or (degenerate and lhs == 0)
    return ConditionResult(name, bool(passed), float(margin), float(rhs), near)


def _times(coef, tau):
    return 0.0 if tau == 0 else coef * tau


def active_rhs(tau: float, c: RhoCoefficients):
    """Upper bounds on alpha_p from the four active-power conditions."""
    rho = c.rho
    r2 = rho * rho
    rhs_a = c.c1 * (2 * rho + tau * (1 + r2))
    rhs_b = c.c2
    rhs_c = c.c3 * (tau * (tau * (1 + r2) + 2 * rho) + 1) / (4 * tau * rho * (1 + r2) + 2 * r2 + 5)
    rhs_d = c.c4
    return rhs_a, rhs_b, rhs_c, rhs_d


def check_active(cs: CouplingStrengths, c: RhoCoefficients, rho: float = None):
    rhs = active_rhs(cs.tau_p_tilde, c)
    return tuple(_result(f"27{k}", cs.alpha_p, r, c.degenerate) for k, r in zip("abcd", rhs))


def reactive_quadratic(alpha: float, tau: float, c: RhoCoefficients) -> float:
    return alpha * alpha * c.c8 + alpha * tau * c.c9 + 2 * tau * tau * c.rho


def reactive_alpha_max(tau: float, c: RhoCoefficients) -> float:
    """Largest alpha_q satisfying all four reactive conditions (supremum)."""
    bounds = [c.c5, c.c6 * 2 * c.rho * tau, _times(c.c7, tau)]
    if c.c8 < 0:
        # positive root of c8 a^2 + c9 tau a + 2 rho tau^2 = 0
        disc = (c.c9 * tau) ** 2 - 4 * c.c8 * 2 * c.rho * tau * tau
        bounds.append((-c.c9 * tau - np.sqrt(disc)) / (2 * c.c8))
    else:
        bounds.append(0.0 if tau == 0 else np.inf)
    return float(max(min(bounds), 0.0))


def check_reactive(cs: CouplingStrengths, c: RhoCoefficients, rho: float = None):
    a, t = cs.alpha_q, cs.tau_q_tilde
    deg = c.degenerate
    out = [
        _result("28a", a, c.c5, deg),
        _result("28b", a, c.c6 * 2 * c.rho * t, deg),
        _result("28c", a, _times(c.c7, t), deg),
    ]
    q = reactive_quadratic(a, t, c)
    out.append(ConditionResult("28d", bool(q > 0 or (deg and a == 0)), float(q), 0.0,
                               bool(abs(q) < 1e-9)))
    return tuple(out)


def check_corollary(cs: CouplingStrengths, rho: float, conv: ConverterSpec):
    return (bool(cs.alpha_q < 5 * (1 + rho * rho) / 4), bool(conv.tau_p > 0))


@dataclass(frozen=True)
class ConverterCertificate:
    index: int
    name: str
    strengths: CouplingStrengths
    active: tuple
    reactive: tuple
    corollary: tuple

    @property
    def dynamic_pass(self):
        return all(r.passed for r in self.active + self.reactive)

    @property
    def level1_pass(self):
        return all(self.corollary)


@dataclass(frozen=True)
class CertificateReport:
    coefficients: RhoCoefficients
    converters: tuple

    @property
    def dynamic_pass(self):
        return all(c.dynamic_pass for c in self.converters)

    @property
    def level1_pass(self):
        return all(c.level1_pass for c in self.converters)

    @property
    def level2_pass(self):
        return True

    def to_dict(self):
        def cond(r):
            return {"passed": r.passed, "margin": r.margin, "rhs": r.rhs, "near_boundary": r.near_boundary}
        return {
            "coefficients": self.coefficients.as_dict(),
            "converters": [
                {
                    "index": c.index,
                    "name": c.name,
                    "alpha_p": c.strengths.alpha_p,
                    "alpha_q": c.strengths.alpha_q,
                    "tau_p_tilde": c.strengths.tau_p_tilde,
                    "tau_q_tilde": c.strengths.tau_q_tilde,
                    "conditions": {r.name: cond(r) for r in c.active + c.reactive},
                    "corollary": {"alpha_q_below_c5": c.corollary[0], "tau_p_positive": c.corollary[1]},
                    "dynamic_pass": c.dynamic_pass,
                    "level1_pass": c.level1_pass,
                }
                for c in self.converters
            ],
            "overall": {"dynamic": self.dynamic_pass, "level1": self.level1_pass, "level2": self.level2_pass},
        }


def certify(net: NetworkSpec, convs: Sequence[ConverterSpec]) -> CertificateReport:
    if len(convs) != net.n:
        raise ValueError("one converter per network node is required")
    coeffs = table1_coeffs(net.rho, net.vmax)
    out = []
    for i, conv in enumerate(convs):
        cs = coupling_strengths(net, conv, i)
        out.append(ConverterCertificate(i, conv.name or f"GFM{i + 1}", cs,
                                        check_active(cs, coeffs), check_reactive(cs, coeffs),
                                        check_corollary(cs, net.rho, conv)))
    return CertificateReport(coeffs, tuple(out))


@dataclass(frozen=True)
class RegionGrid:
    kind: str
    alphas: np.ndarray
    taus: np.ndarray
    feasible: np.ndarray    # shape (len(taus), len(alphas))
    rho: float
    vmax: float


def sample_region(rho: float, vmax: float, alpha_range, tau_range, resolution: int,
                  kind: str = "active") -> RegionGrid:
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    if kind not in ("active", "reactive"):
        raise ValueError("kind must be 'active' or 'reactive'")
    c = table1_coeffs(rho, vmax)
    alphas = np.linspace(alpha_range[0], alpha_range[1], resolution)
    taus = np.linspace(tau_range[0], tau_range[1], resolution)
    feas = np.zeros((taus.size, alphas.size), dtype=bool)
    for r, t in enumerate(taus):
        for k, a in enumerate(alphas):
            cs = CouplingStrengths(a, a, t, t)
            res = check_active(cs, c) if kind == "active" else check_reactive(cs, c)
            feas[r, k] = all(x.passed for x in res) or a == 0
    return RegionGrid(kind, alphas, taus, feas, float(rho), float(vmax))


def active_alpha_max(tau: float, c: RhoCoefficients) -> float:
    return float(max(min(active_rhs(tau, c)), 0.0))
