import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from tebounds.bounds import (
    ENDOGENOUS_REGIMES,
    MarginalBounds,
    ShiftMap,
    assemble_marginal_bounds,
    makarov_bounds,
    makarov_distribution_at,
)
from tebounds.cdf import CdfCurve, estimate_cdf_endogenous, kernel_ratio
from tebounds.data import EvalGrids, ObservationTable
from tebounds.kernels import KernelSpec

from oracles import makarov_scan, normal_makarov


def _curve(grid, values):
    return CdfCurve(grid, np.asarray(values, dtype=float))


def _normal_bounds(m_y=2001, lo=-8.0, hi=8.0, deltas=None):
    grid = np.linspace(lo, hi, m_y)
    f = _curve(grid, norm.cdf(grid))
    mb = assemble_marginal_bounds("point_id", {"F1": f, "F0": f})
    deltas = np.linspace(-4, 4, 161) if deltas is None else np.asarray(deltas, float)
    return mb, EvalGrids(grid, deltas, np.zeros(1))


def test_normal_lower_and_upper():
    mb, grids = _normal_bounds()
    bc = makarov_bounds(mb, grids, 0.0)
    expected = np.array([normal_makarov(t) for t in grids.delta_grid])
    assert np.max(np.abs(bc.lower - expected[:, 0])) < 2e-3
    assert np.max(np.abs(bc.upper - expected[:, 1])) < 2e-3
    lo2, _ = makarov_distribution_at(mb, grids, 2.0)
    _, up_m2 = makarov_distribution_at(mb, grids, -2.0)
    assert lo2 == pytest.approx(2 * norm.cdf(1) - 1, abs=1e-3)
    assert up_m2 == pytest.approx(2 * norm.cdf(-1), abs=1e-3)


def test_identical_marginals_at_zero():
    mb, grids = _normal_bounds(201, deltas=[0.0, 1.0])
    assert makarov_distribution_at(mb, grids, 0.0)[0] == 0.0


def test_tails():
    mb, grids = _normal_bounds(401)
    lo, up = makarov_distribution_at(mb, grids, -30.0)
    assert lo == 0.0 and up <= 1 - norm.cdf(8.0) + 1e-12
    lo, up = makarov_distribution_at(mb, grids, 30.0)
    assert up == 1.0 and lo >= norm.cdf(8.0) - 1e-12


def test_shift_map_matches_interp():
    rng = np.random.default_rng(0)
    grid = np.sort(rng.uniform(-3, 3, 12))
    deltas = rng.uniform(-4, 4, 7)
    vals = np.sort(rng.uniform(size=12))
    out = ShiftMap.build(grid, deltas).apply(vals)
    for k, t in enumerate(deltas):
        np.testing.assert_allclose(out[k], np.interp(grid - t, grid, vals, left=0, right=1))


@st.composite
def marginal_bounds(draw):
    m_y = draw(st.integers(3, 12))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    grid = np.sort(rng.uniform(-3, 3, m_y))
    while np.any(np.diff(grid) <= 1e-6):
        grid = np.sort(rng.uniform(-3, 3, m_y))
    raw = np.sort(rng.uniform(size=(4, m_y)), axis=1)
    lb1, ub1 = np.minimum(raw[0], raw[1]), np.maximum(raw[0], raw[1])
    lb0, ub0 = np.minimum(raw[2], raw[3]), np.maximum(raw[2], raw[3])
    deltas = np.sort(rng.uniform(-6, 6, draw(st.integers(2, 8))))
    return grid, (lb1, ub1, lb0, ub0), deltas


@given(marginal_bounds())
def test_matches_scan_oracle(case):
    grid, (lb1, ub1, lb0, ub0), deltas = case
    deltas = np.unique(deltas)
    if deltas.size < 2:
        return
    mb = MarginalBounds(*(_curve(grid, v) for v in (lb1, ub1, lb0, ub0)))
    bc = makarov_bounds(mb, EvalGrids(grid, deltas, np.zeros(1)), 0.0)
    for k, t in enumerate(deltas):
        lo, up = makarov_scan(grid, lb1, ub1, lb0, ub0, t)
        assert bc.lower[k] == pytest.approx(lo, abs=1e-12)
        assert bc.upper[k] == pytest.approx(up, abs=1e-12)


def _endogenous_inputs(f11, f00, p):
    grid = np.array([0.0, 1.0])
    c11 = _curve(grid, [f11, 1.0])
    c00 = _curve(grid, [f00, 1.0])
    cy = _curve(grid, [p * f11 + (1 - p) * f00, 1.0])
    return {"F11": c11, "F00": c00, "FY": cy}


def _at0(mb):
    return [float(c.values[0]) for c in mb.curves]


def test_regime_arithmetic():
    curves = _endogenous_inputs(0.4, 0.6, 0.5)
    np.testing.assert_allclose(_at0(assemble_marginal_bounds("manski", curves, 0.5)),
                               [0.2, 0.7, 0.3, 0.8])
    np.testing.assert_allclose(_at0(assemble_marginal_bounds("fsd1", curves, 0.5)),
                               [0.4, 0.7, 0.3, 0.6])
    np.testing.assert_allclose(_at0(assemble_marginal_bounds("fsd_both", curves, 0.5)),
                               [0.4, 0.5, 0.5, 0.6])


def test_missing_inputs():
    curves = _endogenous_inputs(0.4, 0.6, 0.5)
    del curves["FY"]
    with pytest.raises(ValueError, match="missing"):
        assemble_marginal_bounds("fsd2", curves, 0.5)
    with pytest.raises(ValueError):
        assemble_marginal_bounds("manski", curves, 1.0)
    with pytest.raises(ValueError):
        assemble_marginal_bounds("bogus", curves, 0.5)


def test_crossing_is_clipped_and_counted():
    curves = _endogenous_inputs(0.8, 0.2, 0.5)
    mb = assemble_marginal_bounds("fsd_both", curves, 0.5)
    assert mb.crossings == 2
    assert np.all(mb.lb1.values <= mb.ub1.values)
    assert len(mb.outer) == 2


def _sample(seed, n=300):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, n)
    d = (rng.uniform(size=n) < 0.3 + 0.4 * (x > 0)).astype(int)
    y = rng.normal(size=n) + 0.7 * d + x
    return ObservationTable(y, d, x)


def test_product_rule_influence_is_exact():
    table = _sample(4)
    grid = np.linspace(-4, 5, 31)
    grids = EvalGrids(grid, np.linspace(-3, 3, 5), np.zeros(1))
    est = estimate_cdf_endogenous(table, grids, KernelSpec(), 0.5)
    mb = assemble_marginal_bounds(
        "manski", {"F11": est.F11, "F00": est.F00}, est.diag.local_propensity,
        influence={"F11": est.psi11, "F00": est.psi00, "p": est.psi_p},
    )
    k = KernelSpec().weights(table.x, [0.0], 0.5)
    d = table.d.astype(float)
    _, direct_lb1 = kernel_ratio(table.y, grid, k, a=d)
    _, direct_ub1 = kernel_ratio(table.y, grid, k, a=d, b=1 - d)
    _, direct_lb0 = kernel_ratio(table.y, grid, k, a=1 - d)
    np.testing.assert_allclose(mb.influence[0], direct_lb1, atol=1e-15)
    np.testing.assert_allclose(mb.influence[1], direct_ub1, atol=1e-15)
    np.testing.assert_allclose(mb.influence[2], direct_lb0, atol=1e-15)


def _nested(a, b, tol=1e-12):
    return np.all(b.lower <= a.lower + tol) and np.all(a.upper <= b.upper + tol)


@given(st.integers(0, 2**32 - 1), st.floats(-0.5, 0.5))
def test_regime_nesting(seed, x0):
    table = _sample(seed)
    grid = np.linspace(table.y.min() - 0.5, table.y.max() + 0.5, 61)
    grids = EvalGrids(grid, np.linspace(-6, 6, 41), np.array([x0]))
    est = estimate_cdf_endogenous(table, grids, KernelSpec(), 0.6)
    curves = {"F11": est.F11, "F00": est.F00, "FY": est.FY}
    bc = {r: makarov_bounds(assemble_marginal_bounds(r, curves, est.diag.local_propensity), grids, 0.0)
          for r in ENDOGENOUS_REGIMES}
    assert _nested(bc["fsd_both"], bc["fsd1"])
    assert _nested(bc["fsd_both"], bc["fsd2"])
    assert _nested(bc["fsd1"], bc["manski"])
    assert _nested(bc["fsd2"], bc["manski"])
    for b in bc.values():
        assert np.all(np.diff(b.lower) >= -1e-12) and np.all(np.diff(b.upper) >= -1e-12)
        assert np.all(b.lower <= b.upper + 1e-12) or b is bc["fsd_both"]


def test_argmax_sets_contain_maximiser():
    mb, grids = _normal_bounds(201, deltas=np.linspace(-2, 2, 9))
    bc = makarov_bounds(mb, grids, 0.01)
    best = bc.surface_lower.argmax(axis=1)
    assert np.all(bc.argsup_mask[np.arange(9), best])
    assert all(s.size >= 1 for s in bc.arginf_sets)
    with pytest.raises(ValueError):
        makarov_bounds(mb, grids, -1.0)
