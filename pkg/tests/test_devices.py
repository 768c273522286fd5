import numpy as np
import pytest

from gfmcert.errors import DegenerateOperatingPoint, ValidationError
from gfmcert.devices import (ConverterSpec, DetailedVscSpec, build_D, droop_model, full_vsc_model,
                             rebase_gains, reduction_consistency)
from gfmcert.lti import FrequencyGrid, eval_freq

W0 = 100 * np.pi


def closed_form_vsc(spec: DetailedVscSpec, w):
    """Direct complex evaluation of the closed-form converter map."""
    s = 1j * w
    dr = spec.droop
    pi_cc = spec.kp_cc + spec.ki_cc / s
    pi_vc = spec.kp_vc + spec.ki_vc / s
    g = pi_cc / (s * spec.l_f / spec.omega0 + pi_cc)
    vd, idd, iq, cf = spec.v_d0, spec.i_d0, spec.i_q0, spec.c_f
    den_a = (g - 1) * (idd + iq - vd * cf) + vd * g * pi_vc + cf * s / spec.omega0
    den_b = (1 - g) * idd + vd * g * pi_vc + cf * s / spec.omega0
    d11 = dr.d_p / (dr.tau_p * s + 1)
    d21 = (1 - g) / den_a
    d22 = vd * g * pi_vc * dr.d_q / (dr.tau_q * s + 1) / den_a - (1 - g) ** 2 * (iq + vd * cf) / den_b
    return np.array([[d11, 0.0], [d21, d22]])


def detailed(**kw):
    base = dict(droop=ConverterSpec(0.003, 0.01, 0.1, 0.1), l_f=0.1, c_f=0.1, kp_cc=1.0, ki_cc=10.0,
                kp_vc=2.0, ki_vc=20.0, v_d0=1.0, i_d0=0.7, i_q0=-0.1)
    base.update(kw)
    return DetailedVscSpec(**base)


def test_converter_validation_lists_everything():
    with pytest.raises(ValidationError) as exc:
        ConverterSpec(-1.0, 0.0, tau_p=-1.0, s_local=0.0)
    assert len(exc.value.problems) == 4


def test_rebase_scales_by_base_ratio():
    c = rebase_gains(ConverterSpec(0.006, 0.02, 0.1, 0.1, s_local=200.0, s_global=100.0))
    assert c.d_p == pytest.approx(0.003) and c.d_q == pytest.approx(0.01)
    assert c.rebased and rebase_gains(c) == c


def test_droop_model_entries():
    c = ConverterSpec(0.003, 0.01, 0.1, 0.05)
    m = droop_model(c, omega0=W0)
    h = eval_freq(m, 12.0)
    assert h[0, 0] == pytest.approx(0.003 * W0 / (1.2j + 1))
    assert h[1, 1] == pytest.approx(0.01 / (0.6j + 1))
    assert h[0, 1] == 0 and h[1, 0] == 0


def test_static_droop_has_no_states():
    assert droop_model(ConverterSpec(0.25, 0.25)).n_states == 0
    assert build_D([ConverterSpec(0.1, 0.1, 0.1, 0.1)] * 3).shape == (6, 6)


@pytest.mark.parametrize("w", [0.5, 10.0, 314.0, 5000.0])
def test_full_vsc_matches_closed_form(w):
    spec = detailed()
    assert np.allclose(eval_freq(full_vsc_model(spec), w), closed_form_vsc(spec, w), rtol=1e-8, atol=1e-12)


def test_full_vsc_without_capacitor():
    spec = detailed(c_f=0.0)
    assert np.allclose(eval_freq(full_vsc_model(spec), 7.0), closed_form_vsc(spec, 7.0), rtol=1e-8)


def test_filter_resistance_warns():
    with pytest.warns(UserWarning):
        full_vsc_model(detailed(r_f=0.01))


def test_vanishing_denominator_raises():
    spec = detailed(kp_cc=0.0, ki_cc=0.0, kp_vc=0.0, ki_vc=0.0, c_f=0.0, i_d0=0.0, i_q0=0.0)
    with pytest.raises(DegenerateOperatingPoint):
        full_vsc_model(spec)


def test_fast_inner_loops_recover_droop():
    spec = detailed(i_d0=0.0, i_q0=0.0).scaled_pi(1e6)
    grid = FrequencyGrid(np.linspace(0.01, 10.0, 50))
    assert reduction_consistency(spec, grid) < 1e-3
    assert reduction_consistency(detailed(i_d0=0.0, i_q0=0.0), grid) > reduction_consistency(spec, grid)
