"""Marginal bounds under each identification regime and Makarov bound curves."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .cdf import CdfCurve
from .data import EvalGrids

REGIMES = ("point_id", "manski", "fsd1", "fsd2", "fsd_both", "subset")
ENDOGENOUS_REGIMES = ("manski", "fsd1", "fsd2", "fsd_both")


@dataclass(frozen=True)
class MarginalBounds:
    """``(LB_1, UB_1, LB_0, UB_0)`` on a shared outcome grid.

    ``influence`` optionally carries the four matching ``(n, M_y)``
    influence tables in the same order.
    """

    lb1: CdfCurve
    ub1: CdfCurve
    lb0: CdfCurve
    ub0: CdfCurve
    regime: str = "point_id"
    influence: tuple | None = None
    crossings: int = 0
    outer: tuple = ()

    @property
    def grid(self) -> np.ndarray:
        return self.lb1.grid

    @property
    def curves(self) -> tuple:
        return self.lb1, self.ub1, self.lb0, self.ub0


def _uncross(lb: np.ndarray, ub: np.ndarray):
    bad = lb > ub
    return np.where(bad, ub, lb), int(bad.sum())


def assemble_marginal_bounds(
    regime: str,
    curves: Mapping[str, CdfCurve],
    local_propensity: float | None = None,
    influence: Mapping[str, np.ndarray] | None = None,
) -> MarginalBounds:
    """Build the four marginal bound curves for ``regime``.

    Parameters
    ----------
    regime : str
        One of :data:`REGIMES`.
    curves : mapping
        ``point_id``/``subset`` need ``F1``, ``F0``. Endogenous regimes need
        ``F11``, ``F00`` and, for ``fsd2``/``fsd_both``, the pooled ``FY``.
    local_propensity : float
        Estimate of ``Pr(D=1 | X=x0)``; required by endogenous regimes.
    influence : mapping, optional
        Influence tables keyed like ``curves`` plus ``p`` for the local
        propensity. Tables of products are formed by the product rule,
        which is exact for these kernel ratios.
    """
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}; choose from {REGIMES}")

    def need(*keys):
        missing = [k for k in keys if k not in curves]
        if missing:
            raise ValueError(f"regime {regime!r} is missing input curve(s) {missing}")
        if influence is not None:
            absent = [k for k in keys if k not in influence]
            if absent:
                raise ValueError(f"regime {regime!r} is missing influence table(s) {absent}")

    if regime in ("point_id", "subset"):
        need("F1", "F0")
        f1, f0 = curves["F1"], curves["F0"]
        infl = None
        if influence is not None:
            infl = (influence["F1"], influence["F1"], influence["F0"], influence["F0"])
        return MarginalBounds(f1, f1, f0, f0, regime, infl)

    need("F11", "F00", *(("FY",) if regime in ("fsd2", "fsd_both") else ()))
    if local_propensity is None or not 0.0 < local_propensity < 1.0:
        raise ValueError("local propensity must lie in (0, 1)")
    p = float(local_propensity)
    grid = curves["F11"].grid
    f11, f00 = curves["F11"].values, curves["F00"].values
    fy = curves["FY"].values if "FY" in curves else None

    # Manski pieces
    m_lb1, m_ub1 = p * f11, p * f11 + 1 - p
    m_lb0, m_ub0 = (1 - p) * f00, (1 - p) * f00 + p
    if regime == "manski":
        vals = (m_lb1, m_ub1, m_lb0, m_ub0)
    elif regime == "fsd1":
        vals = (f11, m_ub1, m_lb0, f00)
    elif regime == "fsd2":
        vals = (m_lb1, fy, fy, m_ub0)
    else:
        vals = (f11, fy, fy, f00)

    infl = None
    if influence is not None:
        p11, p00, pp = influence["F11"], influence["F00"], influence["p"]
        if pp.ndim == 1:
            pp = pp[:, None]
        i_m_lb1 = p * p11 + f11[None, :] * pp
        i_m_ub1 = i_m_lb1 - pp
        i_m_lb0 = (1 - p) * p00 - f00[None, :] * pp
        i_m_ub0 = i_m_lb0 + pp
        py = influence.get("FY")
        infl = {
            "manski": (i_m_lb1, i_m_ub1, i_m_lb0, i_m_ub0),
            "fsd1": (p11, i_m_ub1, i_m_lb0, p00),
            "fsd2": (i_m_lb1, py, py, i_m_ub0),
            "fsd_both": (p11, py, py, p00),
        }[regime]

    lb1, c1 = _uncross(vals[0], vals[1])
    lb0, c0 = _uncross(vals[2], vals[3])
    outer = ()
    if regime == "fsd_both" and c1 + c0:
        # clipping loosened a curve; keep the interval inside both single-assumption ones
        outer = tuple(
            assemble_marginal_bounds(r, curves, p) for r in ("fsd1", "fsd2")
        )
    return MarginalBounds(
        CdfCurve(grid, lb1),
        CdfCurve(grid, vals[1]),
        CdfCurve(grid, lb0),
        CdfCurve(grid, vals[3]),
        regime,
        infl,
        c1 + c0,
        outer,
    )


@dataclass(frozen=True)
class ShiftMap:
    """Linear-interpolation stencil for evaluating grid functions at ``y - delta``.

    ``lo``/``w`` give ``f(y - delta) = (1 - w) f[lo] + w f[lo + 1]`` inside
    the grid; ``left``/``right`` mark points beyond either end.
    """

    lo: np.ndarray
    w: np.ndarray
    left: np.ndarray
    right: np.ndarray

    @classmethod
    def build(cls, y_grid, deltas) -> "ShiftMap":
        y_grid = np.asarray(y_grid, dtype=float)
        t = y_grid[None, :] - np.atleast_1d(np.asarray(deltas, dtype=float))[:, None]
        lo = np.clip(np.searchsorted(y_grid, t, side="right") - 1, 0, y_grid.size - 2)
        w = (t - y_grid[lo]) / (y_grid[lo + 1] - y_grid[lo])
        left, right = t < y_grid[0], t > y_grid[-1]
        w = np.where(left | right, 0.0, w)
        return cls(lo, w, left, right)

    def apply(self, values, left_value: float = 0.0, right_value: float = 1.0) -> np.ndarray:
        """Evaluate ``values`` (last axis = grid) at every ``(delta, y)`` cell."""
        v = np.asarray(values, dtype=float)
        out = (1 - self.w) * v[..., self.lo] + self.w * v[..., self.lo + 1]
        out = np.where(self.left, left_value, out)
        return np.where(self.right, right_value, out)


@dataclass(frozen=True)
class BoundsCurve:
    """Makarov bounds over ``delta_grid`` plus objective surfaces and argmax sets.

    ``surface_lower[k, j]`` is ``LB_1(y_j) - UB_0(y_j - delta_k)`` and
    ``surface_upper[k, j]`` is ``UB_1(y_j) - LB_0(y_j - delta_k)``.
    ``argsup_mask``/``arginf_mask`` flag the ``a_n``-maximisers of the lower
    surface and ``a_n``-minimisers of the upper surface for each delta.
    """

    delta_grid: np.ndarray
    y_grid: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    surface_lower: np.ndarray
    surface_upper: np.ndarray
    argsup_mask: np.ndarray
    arginf_mask: np.ndarray
    a_n: float
    shift: ShiftMap

    @property
    def argsup_sets(self) -> list:
        return [np.flatnonzero(row) for row in self.argsup_mask]

    @property
    def arginf_sets(self) -> list:
        return [np.flatnonzero(row) for row in self.arginf_mask]


def objective_surfaces(mb: MarginalBounds, deltas, shift: ShiftMap | None = None):
    grid = mb.grid
    shift = shift or ShiftMap.build(grid, deltas)
    pi_l = mb.lb1.values[None, :] - shift.apply(mb.ub0.values)
    pi_u = mb.ub1.values[None, :] - shift.apply(mb.lb0.values)
    return pi_l, pi_u, shift


def makarov_bounds(mb: MarginalBounds, grids: EvalGrids, a_n: float) -> BoundsCurve:
    """Lower/upper Makarov bounds on the delta grid with ``a_n``-argmax sets."""
    if not np.array_equal(mb.grid, grids.y_grid):
        raise ValueError("marginal bounds and evaluation grids use different outcome grids")
    if not a_n >= 0:
        raise ValueError("a_n must be nonnegative")
    pi_l, pi_u, shift = objective_surfaces(mb, grids.delta_grid)
    sup_l = pi_l.max(axis=1)
    inf_u = pi_u.min(axis=1)
    lower = np.maximum(sup_l, 0.0)
    upper = np.minimum(inf_u, 0.0) + 1.0
    for other in mb.outer:
        o_l, o_u, _ = objective_surfaces(other, grids.delta_grid, shift)
        lower = np.maximum(lower, o_l.max(axis=1))
        upper = np.minimum(upper, o_u.min(axis=1) + 1.0)
    argsup = pi_l >= (sup_l - a_n)[:, None]
    arginf = pi_u <= (inf_u + a_n)[:, None]
    for arr in (lower, upper, pi_l, pi_u, argsup, arginf):
        arr.setflags(write=False)
    return BoundsCurve(
        grids.delta_grid, grids.y_grid, lower, upper, pi_l, pi_u, argsup, arginf, float(a_n), shift
    )


def makarov_distribution_at(mb: MarginalBounds, grids: EvalGrids, delta) -> tuple:
    """Makarov interval ``(lower, upper)`` at a single treatment effect ``delta``."""
    lower, upper = 0.0, 1.0
    for part in (mb, *mb.outer):
        pi_l, pi_u, _ = objective_surfaces(part, [float(delta)])
        lower = max(lower, float(pi_l.max()))
        upper = min(upper, float(pi_u.min()) + 1.0)
    return lower, upper
