import numpy as np
import pytest

from _systems import random_certified_system
from gfmcert.certificates import certify
from gfmcert.devices import ConverterSpec
from gfmcert.errors import IllPosed, RhoZero
from gfmcert.lti import (FrequencyGrid, StateSpaceModel, eval_freq, first_order_lag, from_tf,
                         integrator, minreal, poles)
from gfmcert.netmodel import NetworkSpec, build_N_transformed
from gfmcert.passivity import (build_D_transformed, build_gamma, certificate_trace,
                               closed_form_S_Nprime, default_grid, dprime_p_coeffs, gamma_params,
                               h_rho, loop_shift, loop_shift_identity_error, passivity_check,
                               residue_closed_form)


def gamma_direct(g1, g2, g3, rho, w0, s):
    return ((g1 * w0 ** 2 * s ** 2 + g2 * w0 ** 2) / ((s + rho * w0) ** 2 + w0 ** 2) + g3) / s


@pytest.fixture(scope="module")
def shifted(scenarios):
    s = scenarios["three_bus_cond_dyn"]
    net, convs = s.network, s.converters
    D = build_D_transformed(net, convs)
    N = build_N_transformed(net)
    g, gam = build_gamma(net, convs)
    Dp, Np = loop_shift(D, N, gam)
    return net, convs, D, N, g, gam, Dp, Np


def test_gamma_values_three_bus(shifted):
    g = shifted[4]
    assert g.gamma1_p[0] == pytest.approx(2 * 1.21 * 5 / (100 * np.pi) ** 2)
    assert g.gamma2_p[0] == pytest.approx(-18.15)
    assert g.gamma3_p[0] == pytest.approx(18.15 / 1.0025)
    assert list(g.gamma3_q_tilde) == pytest.approx([100.0, 90.0, 110.0])
    assert not any(g.inexact)


def test_gamma_realization_matches_formula(shifted):
    net, g, gam = shifted[0], shifted[4], shifted[5]
    for w in (0.3, 50.0, 314.0, 3000.0):
        h = eval_freq(gam, w)
        for i in range(net.n):
            for k, ch in enumerate(("p", "q")):
                ref = gamma_direct(getattr(g, f"gamma1_{ch}")[i], getattr(g, f"gamma2_{ch}")[i],
                                   getattr(g, f"gamma3_{ch}")[i], net.rho, net.omega0, 1j * w)
                assert h[2 * i + k, 2 * i + k] == pytest.approx(ref, rel=1e-10)


def test_loop_shift_keeps_closed_loop(shifted):
    net, convs, D, N, g, gam, Dp, Np = shifted
    err = loop_shift_identity_error(D, N, Dp, Np, np.logspace(-1, 4, 20))
    assert err < 1e-8


def test_closed_form_hermitian_part(shifted):
    net, g, Np = shifted[0], shifted[4], shifted[7]
    for w in (0.01, 10.0, 300.0, 1e4):
        num = eval_freq(Np, w, tol=0.0)
        assert np.abs(num + num.conj().T - closed_form_S_Nprime(net, g, w)).max() < 1e-8


def test_h_rho_positive():
    w = np.linspace(0, 1000, 50)
    assert np.all(h_rho(w, 0.05) > 0)


def test_residue_closed_form_is_psd(shifted):
    net, g = shifted[0], shifted[4]
    r = residue_closed_form(net, g)
    assert np.allclose(r, r.T)
    assert np.linalg.eigvalsh(r).min() >= -1e-10


def test_minimal_device_side_has_fifteen_states(shifted):
    Dp = shifted[6]
    assert Dp.n_states == 24 and minreal(Dp, tol=1e-9).n_states == 15


def test_hurwitz_coefficients_match_poles(shifted):
    net, convs, g, Dp = shifted[0], shifted[1], shifted[4], shifted[6]
    hc = dprime_p_coeffs(convs[2], g, net, 2)
    roots = np.roots([hc.a3, hc.a2, hc.a1, hc.a0])
    ch = minreal(Dp.sub([4], [4]), tol=1e-9)
    assert np.allclose(np.sort_complex(roots), np.sort_complex(poles(ch)), rtol=1e-6)
    assert hc.hurwitz


def test_hurwitz_checks_track_active_conditions(rng):
    """a1 > 0 <-> 27a, a0 > 0 <-> 27b, a2 a1 > a0 a3 <-> 27c."""
    for _ in range(200):
        rho = rng.uniform(0.02, 0.3)
        deg = rng.uniform(1, 20)
        net = NetworkSpec(b=[[0, deg], [deg, 0]], rho=rho)
        c = ConverterSpec(rng.uniform(1e-4, 0.05), 0.01, rng.uniform(0.0, 0.3), 0.1)
        g = gamma_params(net, [c, c])
        hc = dprime_p_coeffs(c, g, net, 0)
        res = {r.name: r for r in certify(net, [c, c]).converters[0].active}
        for check, name in ((hc.checks[1], "27a"), (hc.checks[0], "27b"), (hc.checks[4], "27c")):
            if abs(res[name].margin) > 1e-9:
                assert check == res[name].passed, name


def test_gamma_needs_positive_rho():
    net = NetworkSpec(b=[[0, 1], [1, 0]], rho=0.0)
    with pytest.raises(RhoZero):
        gamma_params(net, [ConverterSpec(0.01, 0.01, 0.1, 0.1)] * 2)


def test_static_voltage_droop_is_ill_posed():
    net = NetworkSpec(b=[[0, 1], [1, 0]], rho=0.1)
    with pytest.raises(IllPosed):
        build_D_transformed(net, [ConverterSpec(0.01, 0.01, 0.1, 0.0)] * 2)


def test_default_grid_refines_near_omega0():
    g = default_grid(omega0=100 * np.pi)
    near = g.omegas[(g.omegas > 0.9 * 100 * np.pi) & (g.omegas < 1.1 * 100 * np.pi)]
    assert near.size >= 50 and g.omegas[0] == pytest.approx(1e-3) and g.omegas[-1] == pytest.approx(1e5)


GRID = FrequencyGrid.logspace(1e-3, 1e4, 300)


def test_passivity_of_simple_functions():
    assert passivity_check(first_order_lag(1.0, 1.0), GRID, strict=True).overall
    v = passivity_check(integrator(1, 2.0), GRID)
    assert v.overall and v.residues[0].min_eig == pytest.approx(2.0)
    assert not passivity_check(integrator(1, -1.0), GRID).overall
    nonmin = from_tf([1.0, -1.0], [1.0, 1.0])     # (s-1)/(s+1)
    assert not passivity_check(nonmin, GRID).grid_psd
    assert not passivity_check(integrator(), GRID, strict=True).pole_check


def test_lossless_resonance_residue():
    # s / (s^2 + 4): positive real, poles at +-2j with residue 1/2
    m = StateSpaceModel([[0.0, 1.0], [-4.0, 0.0]], [[0.0], [1.0]], [[0.0, 1.0]], [[0.0]])
    v = passivity_check(m, FrequencyGrid(np.linspace(0.1, 10, 200)), zero_tol=1e-9)
    assert v.overall and v.residues[0].min_eig == pytest.approx(0.5)
    assert not passivity_check(-m, FrequencyGrid(np.linspace(0.1, 10, 200)), zero_tol=1e-9).residue_psd


def test_trace_cond_dyn(dyn):
    tr = certificate_trace(dyn.network, dyn.converters)
    assert tr.passed
    assert [s.name for s in tr.steps] == ["conditions", "I_coordinates", "II_loop_shift", "III_network_passive",
                                          "III_device_strictly_passive", "III_gain_at_top", "IV_final_value"]
    assert tr.step("III_device_strictly_passive").margin > 1e-10
    assert '"status": "pass"' in tr.to_json()


def test_trace_failing_cases(scenarios):
    no = certificate_trace(scenarios["three_bus_no_cond"].network, scenarios["three_bus_no_cond"].converters)
    assert not no.passed and not no.step("I_coordinates").passed
    l1 = certificate_trace(scenarios["three_bus_cond_l1"].network, scenarios["three_bus_cond_l1"].converters)
    assert not l1.step("III_device_strictly_passive").passed
    assert l1.step("III_network_passive").passed


def test_certified_implies_trace_passes(rng):
    for _ in range(6):
        net, convs = random_certified_system(rng)
        assert certify(net, convs).dynamic_pass
        tr = certificate_trace(net, convs, grid_options={"n_log": 150})
        assert tr.passed, [s.name for s in tr.steps if not s.passed]
