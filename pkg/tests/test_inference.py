import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tebounds.bounds import ShiftMap
from tebounds.estimator import MakarovBounds
from tebounds.inference import (
    BootstrapConfig,
    bootstrap_weights,
    confidence_bands,
    empirical_quantile,
    equality_test,
    hdd_lower,
    hdd_upper,
    ks_test,
    simulate_processes,
    sup_direction,
)
from tebounds.simulation import DgpSpec, draw_sample

from oracles import hdd_brute, random_instance


@given(st.integers(0, 2**32 - 1))
def test_hdd_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    y_grid, delta_grid, proc, mask = random_instance(rng)
    shift = ShiftMap.build(y_grid, delta_grid)
    for side, fn in (("lower", hdd_lower), ("upper", hdd_upper)):
        assert abs(fn(proc, mask, shift) - hdd_brute(proc, y_grid, delta_grid, mask, side)) <= 1e-12


def test_hdd_batch_equals_single():
    rng = np.random.default_rng(1)
    y_grid, delta_grid, _, mask = random_instance(rng)
    shift = ShiftMap.build(y_grid, delta_grid)
    batch = rng.normal(size=(7, 4, y_grid.size))
    out = hdd_lower(batch, mask, shift)
    assert out.shape == (7,)
    for b in range(7):
        assert out[b] == hdd_lower(batch[b], mask, shift)


def test_zero_process():
    rng = np.random.default_rng(2)
    y_grid, delta_grid, proc, mask = random_instance(rng)
    shift = ShiftMap.build(y_grid, delta_grid)
    zero = np.zeros_like(proc)
    assert hdd_lower(zero, mask, shift) == 0.0
    assert hdd_upper(zero, mask, shift) == 0.0


def test_singleton_sets_mirror():
    rng = np.random.default_rng(3)
    y_grid = np.linspace(-2, 2, 9)
    delta_grid = np.linspace(-1, 1, 5)
    h = rng.normal(size=(2, 9))
    proc = np.stack([h[0], h[0], h[1], h[1]])
    mask = np.zeros((5, 9), dtype=bool)
    star = rng.integers(0, 9, 5)
    mask[np.arange(5), star] = True
    shift = ShiftMap.build(y_grid, delta_grid)
    vals = [h[0][j] - np.interp(y_grid[j] - t, y_grid, h[1], left=0, right=0)
            for j, t in zip(star, delta_grid)]
    assert hdd_lower(proc, mask, shift) == pytest.approx(max(abs(v) for v in vals), abs=1e-14)
    assert hdd_upper(proc, mask, shift) == pytest.approx(max(abs(v) for v in vals), abs=1e-14)


@given(st.integers(0, 2**32 - 1), st.sampled_from([0.5, 2.0, 10.0]))
def test_positive_homogeneity(seed, t):
    rng = np.random.default_rng(seed)
    y_grid, delta_grid, proc, mask = random_instance(rng)
    shift = ShiftMap.build(y_grid, delta_grid)
    for fn in (hdd_lower, hdd_upper):
        assert abs(fn(t * proc, mask, shift) - t * fn(proc, mask, shift)) <= 1e-12 * max(1, t)


def test_empty_set_rejected():
    shift = ShiftMap.build(np.linspace(0, 1, 3), np.array([0.0, 1.0]))
    mask = np.array([[True, False, False], [False, False, False]])
    with pytest.raises(ValueError):
        hdd_lower(np.zeros((4, 3)), mask, shift)


def test_type7_quantile():
    draws = np.arange(1.0, 501.0)
    assert empirical_quantile(draws, 0.95) == pytest.approx(475.05, abs=1e-9)
    assert empirical_quantile(draws, 0.5) == pytest.approx(250.5)


def test_bootstrap_config_validation():
    with pytest.raises(ValueError):
        BootstrapConfig(m=50)
    with pytest.raises(ValueError):
        BootstrapConfig(alpha=1.5)
    with pytest.raises(ValueError):
        BootstrapConfig(weight_law="rademacher")


def _tables(seed=0, n=40, m_y=6):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, m_y))
    b = rng.normal(size=(n, m_y))
    return (a - a.mean(0), a - a.mean(0), b - b.mean(0), b - b.mean(0))


def test_zero_influence_gives_zero_processes():
    z = np.zeros((30, 5))
    out = simulate_processes((z, z, z, z), BootstrapConfig(m=100), 3.0)
    assert out.shape == (100, 4, 5) and not out.any()


def test_processes_deterministic_and_batch_invariant():
    tables = _tables()
    cfg = BootstrapConfig(m=120, seed=42)
    full = simulate_processes(tables, cfg, 2.0)
    again = simulate_processes(tables, cfg, 2.0)
    part = np.concatenate([simulate_processes(tables, cfg, 2.0, start=s, stop=s + 40)
                           for s in (0, 40, 80)])
    assert np.array_equal(full, again)
    np.testing.assert_allclose(full, part, rtol=0, atol=1e-12)
    other = simulate_processes(tables, cfg, 2.0, stream=1)
    assert not np.allclose(full, other)


def test_weights_are_pure():
    w1 = bootstrap_weights(7, 3, 10)
    w2 = bootstrap_weights(7, 3, 10)
    assert np.array_equal(w1, w2)
    assert not np.array_equal(w1, bootstrap_weights(7, 4, 10))


def test_process_mean_clt():
    tables = _tables(1, n=25, m_y=4)
    m = 10_000
    out = simulate_processes(tables, BootstrapConfig(m=m, seed=3), 1.0)
    mean, sd = out.mean(axis=0), out.std(axis=0)
    assert np.all(np.abs(mean) < 4 * sd / np.sqrt(m))


@pytest.fixture(scope="module")
def fitted():
    table = draw_sample(DgpSpec(n=300), 5)
    est = MakarovBounds(bandwidth="mc_rule", m_y=121, m_delta=61).fit_table(table)
    return est, est.processes(200, 9)


def test_bands_monotone_in_alpha(fitted):
    est, procs = fitted
    wide = confidence_bands(est.bounds_, procs, BootstrapConfig(m=200, alpha=0.05), est.r_n_)
    narrow = confidence_bands(est.bounds_, procs, BootstrapConfig(m=200, alpha=0.2), est.r_n_)
    assert wide.c_L >= narrow.c_L and wide.c_U >= narrow.c_U
    assert np.all(wide.idset_ci[0] <= narrow.idset_ci[0])
    assert np.all(wide.idset_ci[1] >= narrow.idset_ci[1])


def test_clipped_band_contains_raw(fitted):
    est, procs = fitted
    band = confidence_bands(est.bounds_, procs, BootstrapConfig(m=200), est.r_n_)
    assert band.c_L >= 0 and band.c_U >= 0
    for clipped, raw in ((band.lower_band, band.raw_lower_band), (band.upper_band, band.raw_upper_band)):
        assert np.all((clipped >= 0) & (clipped <= 1))
        np.testing.assert_array_equal(clipped, np.clip(raw, 0, 1))
    np.testing.assert_allclose(band.raw_lower_band[1] - band.lower, band.c_L / band.r_n)


def test_zero_draws_collapse_bands(fitted):
    est, procs = fitted
    band = confidence_bands(est.bounds_, np.zeros_like(procs), BootstrapConfig(m=200), est.r_n_)
    np.testing.assert_array_equal(band.lower_band[0], est.bounds_.lower)
    np.testing.assert_array_equal(band.upper_band[1], est.bounds_.upper)


def test_ks_null_equal_estimate(fitted):
    est, procs = fitted
    res = ks_test(est.bounds_, est.bounds_.lower, "lower", procs, BootstrapConfig(m=200), est.r_n_)
    assert res.statistic == 0.0 and not res.reject and res.p_value == 1.0
    with pytest.raises(ValueError):
        ks_test(est.bounds_, est.bounds_.lower, "middle", procs, BootstrapConfig(m=200), est.r_n_)
    with pytest.raises(ValueError):
        ks_test(est.bounds_, est.bounds_.lower[:-1], "lower", procs, BootstrapConfig(m=200), est.r_n_)


def test_equality_constant_difference(fitted):
    est, procs = fitted
    bc = est.bounds_
    grid = bc.delta_grid
    length, c = grid[-1] - grid[0], 0.3
    bc_a = dataclasses.replace(bc, lower=np.full(grid.size, 0.5))
    bc_b = dataclasses.replace(bc, lower=np.full(grid.size, 0.5 - c))
    cfg = BootstrapConfig(m=200)
    one = equality_test(bc_a, bc_b, 1.0, procs, procs, cfg, 1.0)
    two = equality_test(bc_a, bc_b, 2.0, procs, procs, cfg, 1.0)
    assert one.statistic == pytest.approx(c * length, rel=1e-12)
    assert two.statistic == pytest.approx(c * length ** 0.5, rel=1e-12)
    # identical processes cancel
    assert np.all(one.bootstrap_draws == 0.0)
    with pytest.raises(ValueError):
        equality_test(bc_a, bc_b, 0.5, procs, procs, cfg, 1.0)


def test_sup_direction_bounds_hdd(fitted):
    est, procs = fitted
    bc = est.bounds_
    rho = sup_direction(procs, bc.argsup_mask, bc.shift)
    assert rho.shape == (200, bc.delta_grid.size)
    assert np.all(rho.max(axis=1) <= hdd_lower(procs, bc.argsup_mask, bc.shift) + 1e-12)
