"""Converter models: filtered droop control and the detailed inner-loop VSC."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import DegenerateOperatingPoint, ValidationError
from .lti import (FrequencyGrid, StateSpaceModel, append, blkdiag, first_order_lag, freq_response,
                  from_tf, gain, parallel, scale)


@dataclass(frozen=True)
class ConverterSpec:
    """Droop gains are per unit of the base ``s_local`` until rebased."""
    d_p: float
    d_q: float
    tau_p: float = 0.0
    tau_q: float = 0.0
    s_local: float = 100.0
    s_global: float = 100.0
    name: str = ""

    def __post_init__(self):
        problems = []
        if not self.d_p > 0:
            problems.append(f"{self.name or 'converter'}: d_p must be positive")
        if not self.d_q > 0:
            problems.append(f"{self.name or 'converter'}: d_q must be positive")
        if self.tau_p < 0 or self.tau_q < 0:
            problems.append(f"{self.name or 'converter'}: time constants must be nonnegative")
        if not (self.s_local > 0 and self.s_global > 0):
            problems.append(f"{self.name or 'converter'}: MVA bases must be positive")
        if problems:
            raise ValidationError(problems)

    @property
    def rebased(self) -> bool:
        return self.s_local == self.s_global


def rebase_gains(spec: ConverterSpec) -> ConverterSpec:
    """Express droop gains on the global base."""
    ratio = spec.s_global / spec.s_local
    return replace(spec, d_p=spec.d_p * ratio, d_q=spec.d_q * ratio, s_local=spec.s_global)


def droop_model(spec: ConverterSpec, omega0: float = 1.0) -> StateSpaceModel:
    """diag(d_p/(tau_p s+1), d_q/(tau_q s+1)).

    ``omega0`` scales the active channel so its output is in rad/s when the
    gain is given in pu frequency per pu power.
    """
    return append(first_order_lag(spec.d_p * omega0, spec.tau_p),
                  first_order_lag(spec.d_q, spec.tau_q))


def build_D(specs: Sequence[ConverterSpec], omega0: float = 1.0) -> StateSpaceModel:
    if len(specs) < 1:
        raise ValueError("at least one converter is required")
    return append(*[droop_model(s, omega0) for s in specs])


@dataclass(frozen=True)
class DetailedVscSpec:
    droop: ConverterSpec
    l_f: float
    c_f: float
    kp_cc: float
    ki_cc: float
    kp_vc: float
    ki_vc: float
    v_d0: float = 1.0
    i_d0: float = 0.0
    i_q0: float = 0.0
    r_f: float = 0.0
    omega0: float = 100.0 * np.pi

    def __post_init__(self):
        problems = []
        if not self.l_f > 0:
            problems.append("l_f must be positive")
        if self.c_f < 0:
            problems.append("c_f must be nonnegative")
        if min(self.kp_cc, self.ki_cc, self.kp_vc, self.ki_vc) < 0:
            problems.append("PI gains must be nonnegative")
        if not self.v_d0 > 0:
            problems.append("v_d0 must be positive")
        if problems:
            raise ValidationError(problems)

    def scaled_pi(self, factor: float) -> "DetailedVscSpec":
        return replace(self, kp_cc=self.kp_cc * factor, ki_cc=self.ki_cc * factor,
                       kp_vc=self.kp_vc * factor, ki_vc=self.ki_vc * factor)


def _vsc_polys(spec: DetailedVscSpec):
    """Numerator/denominator pairs of D21 and the two D22 terms.

    With G = Ng/Dg, PI_vc = Nv/s, every fraction is multiplied through
    by s*Dg, which removes the integrator factors without cancellation.
    """
    w0 = spec.omega0
    dr = spec.droop
    lw = spec.l_f / w0
    ng = np.array([spec.kp_cc, spec.ki_cc])
    dg = np.array([lw, spec.kp_cc, spec.ki_cc])
    nv = np.array([spec.kp_vc, spec.ki_vc])
    vd, idd, iq, cf = spec.v_d0, spec.i_d0, spec.i_q0, spec.c_f
    ngnv = vd * np.polymul(ng, nv)
    cap = np.polymul([cf / w0, 0.0, 0.0], dg)
    qa = np.polyadd(np.polyadd([-lw * (idd + iq - vd * cf), 0.0, 0.0, 0.0], ngnv), cap)
    qb = np.polyadd(np.polyadd([lw * idd, 0.0, 0.0, 0.0], ngnv), cap)
    for q in (qa, qb):
        if np.allclose(q, 0.0):
            raise DegenerateOperatingPoint("closed-form denominator vanishes identically")
    d21 = ([lw, 0.0, 0.0, 0.0], qa)
    lag = [dr.tau_q, 1.0] if dr.tau_q else [1.0]
    d22a = (dr.d_q * ngnv, np.polymul(lag, qa))
    d22b = (-(iq + vd * cf) * lw ** 2 * np.array([1.0, 0, 0, 0, 0, 0]), np.polymul(dg, qb))
    return d21, d22a, d22b


def full_vsc_model(spec: DetailedVscSpec) -> StateSpaceModel:
    """2x2 converter map including current and voltage loops.

    D12 is identically zero; D21 and D22 follow the closed form,
    whose two D22 fractions carry different denominators.
    """
    if spec.r_f:
        warnings.warn("filter resistance r_f is not part of the detailed model and is ignored",
                      stacklevel=2)
    dr = spec.droop
    d21, d22a, d22b = _vsc_polys(spec)
    e11 = first_order_lag(dr.d_p, dr.tau_p)
    e21 = from_tf(*d21)
    e22 = parallel(from_tf(*d22a), from_tf(*d22b))
    # row 1 = e11 u1; row 2 = e21 u1 + e22 u2
    row1 = append(e11, gain([[0.0]]))
    row2 = append(e21, e22)
    row2 = scale(row2, left=[[1.0, 1.0]])
    row1 = scale(row1, left=[[1.0, 0.0]])
    a = blkdiag(row1.a, row2.a)
    b = np.vstack([row1.b, row2.b])
    c = blkdiag(row1.c, row2.c)
    d = np.vstack([row1.d, row2.d])
    return StateSpaceModel(a, b, c, d)


def reduction_consistency(detailed: DetailedVscSpec, grid: FrequencyGrid) -> float:
    """max over the grid of ||full - droop||_F / ||droop||_F."""
    omegas = np.asarray(grid.omegas)
    droop = droop_model(detailed.droop)
    full = freq_response(full_vsc_model(detailed), omegas)
    ref = freq_response(droop, omegas)
    dev = [np.linalg.norm(f - r) / np.linalg.norm(r) for f, r in zip(full, ref)]
    return float(max(dev)) if dev else 0.0
