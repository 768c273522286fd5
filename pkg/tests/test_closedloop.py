import warnings

import numpy as np
import pytest

from gfmcert.closedloop import (Disturbance, assemble, closed_loop_verdict, default_dt,
                                divergence_detected, fvt_check, network_blocks_at_dc, permutation,
                                simulate_step)
from gfmcert.lti import eval_freq
from gfmcert.scenario import with_uniform_voltage

# rightmost minimal pole real part, negated (rad/s), from the assembled models
FROZEN_MARGINS = {
    ("three_bus_cond_dyn", "dynamic"): 4.991298542752654,
    ("three_bus_no_cond", "dynamic"): -83.39963004416947,
    ("three_bus_cond_l1", "dynamic"): -21.368408902519043,
    ("three_bus_cond_l1", "level1"): 5.000194570405236,
    ("three_bus_no_cond", "level2"): 5.0,
}


def system(scenarios, name, level):
    s = scenarios[name]
    if level == "level2":
        s = with_uniform_voltage(s)
    return assemble(s.network, level, s.converters)


@pytest.mark.parametrize("case", sorted(FROZEN_MARGINS))
def test_verdict_margins(scenarios, case):
    v = closed_loop_verdict(system(scenarios, *case))
    assert v.margin == pytest.approx(FROZEN_MARGINS[case], rel=1e-6)
    assert v.stable is (FROZEN_MARGINS[case] > 0)
    assert len(v.structural) == 1


def test_level_ordering(scenarios):
    for name in ("three_bus_no_cond", "three_bus_cond_l1", "three_bus_cond_dyn"):
        if not closed_loop_verdict(system(scenarios, name, "level1")).stable:
            assert not closed_loop_verdict(system(scenarios, name, "dynamic")).stable


def test_structural_mode_is_common_angle(scenarios):
    cl = system(scenarios, "three_bus_cond_dyn", "dynamic")
    mode = closed_loop_verdict(cl).structural[0]
    assert abs(mode.eigenvalue) < 1e-9 * cl.net.omega0
    assert not mode.observable


def test_assembled_matches_gang_upper_left(scenarios, rng):
    cl = system(scenarios, "three_bus_cond_dyn", "dynamic")
    n = cl.n
    for w in rng.uniform(0.1, 2000, 20):
        full = eval_freq(cl.assembled, w)
        assert np.allclose(full[:2 * n, :2 * n], eval_freq(cl.gang.upper_left, w), atol=1e-9)


def test_labels(scenarios):
    cl = system(scenarios, "three_bus_cond_dyn", "dynamic")
    assert cl.assembled.inputs[:2] == ("dp_d1", "dq_d1")
    assert cl.assembled.outputs[-1] == "dq_e3"
    with pytest.raises(ValueError):
        assemble(cl.net, "dynamic", cl.convs[:2])


def test_zero_disturbance_gives_zero(scenarios):
    cl = system(scenarios, "three_bus_cond_dyn", "level1")
    res = simulate_step(cl, Disturbance("dp_d1", 0.0), t_end=0.5)
    assert all(np.all(v == 0) for v in res.signals.values())


def test_step_dt_warning(scenarios):
    cl = system(scenarios, "three_bus_cond_dyn", "dynamic")
    with pytest.warns(UserWarning, match="StepTooLarge"):
        simulate_step(cl, t_end=0.05, dt=1e-3)
    with pytest.raises(ValueError):
        simulate_step(cl, t_end=-1.0)
    assert default_dt("dynamic") == 5e-5 and default_dt("level1") == 1e-3


def test_stable_simulation_settles_to_aggregate_droop(scenarios):
    cl = system(scenarios, "three_bus_cond_dyn", "dynamic")
    res = simulate_step(cl, Disturbance("dp_d1", 0.05), t_end=5.0)
    assert not res.diverged()
    expect = 0.05 / sum(1 / c.d_p for c in cl.convs)       # pu frequency
    for i in range(1, 4):
        assert res.signals[f"domega{i}"][-1] == pytest.approx(expect, abs=1e-6)
    y = np.column_stack(list(res.signals.values()))
    norm = np.linalg.norm(y - y[-1], axis=1)
    tail = norm[-2000:]
    assert np.isfinite(np.sum(norm ** 2)) and tail[-1] <= tail[0] + 1e-12


def test_unstable_simulation_diverges(scenarios):
    cl = system(scenarios, "three_bus_no_cond", "dynamic")
    res = simulate_step(cl, Disturbance("dp_d1", 0.05), t_end=5.0)
    assert divergence_detected(res)
    d3 = np.abs(res.signals["domega3"])
    early = np.nanmax(d3[res.time <= 1.0])
    assert np.nanmax(d3) > 10 * early


def test_permutation_orders_channels():
    p = permutation(2)
    assert np.array_equal(p @ np.array([1, 2, 3, 4]), np.array([1, 3, 2, 4]))


def test_fvt_cond_dyn(scenarios):
    cl = system(scenarios, "three_bus_cond_dyn", "dynamic")
    rep = fvt_check(cl)
    assert rep.passed and rep.voltage_block_norm < 1e-8 and rep.n2_norm == 0.0
    assert rep.n1_row_sum < 1e-12 and rep.n3_min_sv > 0
    # every node settles to one frequency; lossy lines shift it slightly off w0 / sum(1/d_p)
    f = rep.frequency_block
    assert np.allclose(f, f[0], rtol=1e-9)
    assert np.allclose(f, cl.net.omega0 / sum(1 / c.d_p for c in cl.convs), rtol=1e-4)


def test_fvt_flags_unstable(scenarios):
    rep = fvt_check(system(scenarios, "three_bus_no_cond", "dynamic"))
    assert not rep.stable and not rep.passed and rep.notes


def test_fvt_full_level_has_coupling(scenarios):
    rep = fvt_check(system(scenarios, "three_bus_cond_dyn", "full"))
    assert rep.n2_norm > 0 and not rep.passed


def test_level2_voltage_block_is_laplacian(scenarios):
    s = with_uniform_voltage(scenarios["three_bus_cond_dyn"])
    n1, n2, n2b, n3 = network_blocks_at_dc(s.network, "level2")
    assert np.allclose(n3.sum(axis=1), 0.0)
    rep = fvt_check(assemble(s.network, "level2", s.converters))
    assert rep.passed and any("singular" in note for note in rep.notes)


def test_n3_regular_for_connected_networks(rng):
    from _systems import random_network
    for _ in range(10):
        net = random_network(rng)
        *_, n3 = network_blocks_at_dc(net, "dynamic")
        assert np.linalg.svd(n3, compute_uv=False).min() > 0
