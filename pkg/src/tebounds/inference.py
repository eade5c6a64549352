"""Multiplier bootstrap with estimated directional derivatives.

Bootstrap processes are arrays of shape ``(m, 4, M_y)``: for each
iteration, the four components ``r_n * sum_i B_i psi_i`` of
``(LB_1, UB_1, LB_0, UB_0)``. Iteration ``b`` always uses weights drawn
from ``(seed, stream, b)``, so results do not depend on batching.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .bounds import BoundsCurve, ShiftMap

_CHUNK_CELLS = 2_000_000


@dataclass(frozen=True)
class BootstrapConfig:
    m: int = 500
    alpha: float = 0.05
    seed: int = 0
    weight_law: str = "normal"

    def __post_init__(self):
        if int(self.m) < 100:
            raise ValueError("bootstrap needs m >= 100 iterations")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.weight_law != "normal":
            raise ValueError("only standard normal multiplier weights are supported")


@dataclass(frozen=True)
class SimulatedProcess:
    iteration: int
    curves: np.ndarray  # (4, M_y)


def _seed_words(seed: int) -> int:
    return int(seed) & 0xFFFF_FFFF_FFFF_FFFF


def bootstrap_weights(seed: int, iteration: int, n: int, stream: int = 0) -> np.ndarray:
    """Standard normal multipliers for one iteration, a pure function of its inputs."""
    rng = np.random.default_rng([_seed_words(seed), int(stream), int(iteration)])
    return rng.standard_normal(n)


def _unique_tables(influence):
    if len(influence) != 4:
        raise ValueError("expected four influence tables")
    tables, index = [], []
    for t in influence:
        for j, u in enumerate(tables):
            if u is t:
                index.append(j)
                break
        else:
            tables.append(np.asarray(t, dtype=float))
            index.append(len(tables) - 1)
    shape = tables[0].shape
    if any(t.shape != shape for t in tables):
        raise ValueError("influence tables must share n and the grid")
    return tables, index


def simulate_processes(influence, cfg: BootstrapConfig, r_n: float, stream: int = 0,
                       start: int = 0, stop: int | None = None) -> np.ndarray:
    """Simulated processes for iterations ``start..stop-1`` as ``(k, 4, M_y)``."""
    tables, index = _unique_tables(influence)
    n, m_y = tables[0].shape
    stop = cfg.m if stop is None else stop
    # rows with zero influence everywhere do not move any curve
    active = np.zeros(n, dtype=bool)
    for t in tables:
        active |= np.any(t != 0.0, axis=1)
    stacked = np.concatenate([t[active] for t in tables], axis=1)
    w = np.stack([bootstrap_weights(cfg.seed, b, n, stream)[active] for b in range(start, stop)])
    sims = (w @ stacked).reshape(stop - start, len(tables), m_y) * r_n
    return sims[:, index, :]


def iter_processes(influence, cfg: BootstrapConfig, r_n: float, stream: int = 0) -> Iterator[SimulatedProcess]:
    for b in range(cfg.m):
        yield SimulatedProcess(b, simulate_processes(influence, cfg, r_n, stream, b, b + 1)[0])


class _Stencil:
    """Flattened ``(delta, y)`` cells of an argmax mask with their shift weights."""

    def __init__(self, mask: np.ndarray, shift: ShiftMap):
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim != 2 or not np.all(mask.any(axis=1)):
            raise ValueError("every argmax set must be nonempty")
        dk, yj = np.nonzero(mask)
        self.n_delta = mask.shape[0]
        self._set(dk, yj, shift.lo[dk, yj], shift.w[dk, yj],
                  ~(shift.left[dk, yj] | shift.right[dk, yj]))

    def _set(self, dk, yj, lo, w, inside):
        self.dk, self.yj, self.lo, self.w, self.inside = dk, yj, lo, w, inside
        self.starts = np.flatnonzero(np.r_[True, dk[1:] != dk[:-1]])

    def compact(self, zero_y: np.ndarray, zero_s: np.ndarray) -> "_Stencil":
        """Drop cells whose pair value is identically zero, keeping one per delta.

        ``zero_y``/``zero_s`` flag grid columns where the respective process
        component vanishes in every draw. Max and min over each set are unchanged.
        """
        shifted_zero = ~self.inside | (
            (zero_s[self.lo] | (self.w == 1.0)) & (zero_s[self.lo + 1] | (self.w == 0.0))
        )
        zero = zero_y[self.yj] & shifted_zero
        keep = ~zero
        idx = np.flatnonzero(zero)
        _, first = np.unique(self.dk[idx], return_index=True)
        keep[idx[first]] = True
        out = object.__new__(_Stencil)
        out.n_delta = self.n_delta
        out._set(self.dk[keep], self.yj[keep], self.lo[keep], self.w[keep], self.inside[keep])
        return out

    def pair_values(self, proc: np.ndarray, at_y: int, at_shift: int) -> np.ndarray:
        """``h_{at_y}(y) - h_{at_shift}(y - delta)`` at every cell, shape ``(k, P)``."""
        hs = proc[:, at_shift, :]
        shifted = (1 - self.w) * hs[:, self.lo] + self.w * hs[:, self.lo + 1]
        shifted = np.where(self.inside, shifted, 0.0)
        return proc[:, at_y, self.yj] - shifted

    def chunks(self, k: int):
        size = max(1, _CHUNK_CELLS // max(1, self.dk.size))
        for s in range(0, k, size):
            yield slice(s, min(k, s + size))


def _as_batch(process):
    proc = np.asarray(process, dtype=float)
    single = proc.ndim == 2
    return (proc[None] if single else proc), single


def _pair_stencils(proc, mask, shift):
    """Compacted stencils for the (1, 4) and (2, 3) component pairs."""
    base = _Stencil(mask, shift)
    zero = np.all(proc == 0.0, axis=0)  # (4, M_y)
    st14 = base.compact(zero[0], zero[3])
    same = np.array_equal(proc[:, 0], proc[:, 1]) and np.array_equal(proc[:, 2], proc[:, 3])
    st23 = None if same else base.compact(zero[1], zero[2])
    return st14, st23


def _pair_extrema(proc, mask, shift, reduce23):
    """Overall max and min of the (1, 4) pair and per-delta ``reduce23`` of the (2, 3) pair."""
    st14, st23 = _pair_stencils(proc, mask, shift)
    k = proc.shape[0]
    g_max, g_min = np.empty(k), np.empty(k)
    per_delta = np.empty((k, st14.n_delta))
    for sl in st14.chunks(k):
        g14 = st14.pair_values(proc[sl], 0, 3)
        g_max[sl], g_min[sl] = g14.max(axis=1), g14.min(axis=1)
        if st23 is None:
            per_delta[sl] = reduce23.reduceat(g14, st14.starts, axis=1)
    if st23 is not None:
        for sl in st23.chunks(k):
            per_delta[sl] = reduce23.reduceat(st23.pair_values(proc[sl], 1, 2), st23.starts, axis=1)
    return g_max, g_min, per_delta


def hdd_lower(process, argsup_mask, shift: ShiftMap):
    """Estimated directional derivative of the lower-bound KS functional.

    ``max{ sup_d sup_{y in L(d)} (h1(y) - h4(y-d)),
           sup_d inf_{y in L(d)} -(h2(y) - h3(y-d)) }``
    with ``L(d)`` the rows of ``argsup_mask``. Accepts one process
    ``(4, M_y)`` or a batch ``(k, 4, M_y)``.
    """
    proc, single = _as_batch(process)
    g_max, _, sup23 = _pair_extrema(proc, argsup_mask, shift, np.maximum)
    out = np.maximum(g_max, (-sup23).max(axis=1))
    return float(out[0]) if single else out


def hdd_upper(process, arginf_mask, shift: ShiftMap):
    """Estimated directional derivative of the upper-bound KS functional.

    ``max{ sup_d sup_{y in U(d)} -(h1(y) - h4(y-d)),
           sup_d inf_{y in U(d)} (h2(y) - h3(y-d)) }``
    with ``U(d)`` the rows of ``arginf_mask``.
    """
    proc, single = _as_batch(process)
    _, g_min, inf23 = _pair_extrema(proc, arginf_mask, shift, np.minimum)
    out = np.maximum(-g_min, inf23.max(axis=1))
    return float(out[0]) if single else out


def sup_direction(process, argsup_mask, shift: ShiftMap) -> np.ndarray:
    """Per-delta ``sup_{y in L(d)} (h1(y) - h4(y-d))``, shape ``(k, M_delta)``."""
    proc, _ = _as_batch(process)
    base = _Stencil(argsup_mask, shift)
    zero = np.all(proc == 0.0, axis=0)
    st = base.compact(zero[0], zero[3])
    out = np.empty((proc.shape[0], st.n_delta))
    for sl in st.chunks(proc.shape[0]):
        out[sl] = np.maximum.reduceat(st.pair_values(proc[sl], 0, 3), st.starts, axis=1)
    return out


def empirical_quantile(draws, prob: float) -> float:
    """Type-7 quantile: ``x_(floor g) + frac(g) (x_(ceil g) - x_(floor g))``, ``g = (m-1) prob + 1``."""
    return float(np.quantile(np.asarray(draws, dtype=float), prob, method="linear"))


def _p_value(statistic: float, draws: np.ndarray) -> float:
    return (1.0 + float(np.sum(draws >= statistic))) / (draws.size + 1.0)


@dataclass(frozen=True)
class BandResult:
    """Uniform bands for the lower and upper bound curves.

    ``lower_band``/``upper_band`` are ``(2, M_delta)`` arrays holding the
    clipped band edges; the ``raw_`` variants are unclipped. ``idset_ci``
    is the confidence set for the identified interval.
    """

    alpha: float
    c_L: float
    c_U: float
    r_n: float
    delta_grid: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    lower_band: np.ndarray
    upper_band: np.ndarray
    raw_lower_band: np.ndarray
    raw_upper_band: np.ndarray
    idset_ci: np.ndarray
    draws_L: np.ndarray = field(repr=False)
    draws_U: np.ndarray = field(repr=False)


def hdd_draws(bc: BoundsCurve, processes):
    """Bootstrap draws of both directional-derivative statistics."""
    return (hdd_lower(processes, bc.argsup_mask, bc.shift),
            hdd_upper(processes, bc.arginf_mask, bc.shift))


def confidence_bands(bc: BoundsCurve, processes, cfg: BootstrapConfig, r_n: float) -> BandResult:
    """Uniform ``1 - alpha`` bands; half-widths are the bootstrap quantiles divided by ``r_n``."""
    processes = np.asarray(processes)
    m = processes.shape[0]
    if m * cfg.alpha / 2 < 1:
        raise ValueError("too few bootstrap iterations for the requested quantile")
    draws_l, draws_u = hdd_draws(bc, processes)
    prob = 1 - cfg.alpha / 2
    c_l, c_u = empirical_quantile(draws_l, prob), empirical_quantile(draws_u, prob)
    raw_l = np.vstack([bc.lower - c_l / r_n, bc.lower + c_l / r_n])
    raw_u = np.vstack([bc.upper - c_u / r_n, bc.upper + c_u / r_n])
    idset = np.vstack([bc.lower - c_l / r_n, bc.upper + c_u / r_n])
    return BandResult(
        cfg.alpha, c_l, c_u, float(r_n), bc.delta_grid, bc.lower, bc.upper,
        np.clip(raw_l, 0.0, 1.0), np.clip(raw_u, 0.0, 1.0), raw_l, raw_u, idset,
        draws_l, draws_u,
    )


@dataclass(frozen=True)
class TestResult:
    statistic: float
    critical_value: float
    bootstrap_draws: np.ndarray = field(repr=False)
    reject: bool
    p_value: float
    alpha: float

    __test__ = False  # not a pytest class


def ks_test(bc: BoundsCurve, null_curve, side: str, processes, cfg: BootstrapConfig,
            r_n: float) -> TestResult:
    """KS test of ``H0: bound(.) = null_curve(.)`` over the delta grid."""
    null_curve = np.asarray(null_curve, dtype=float)
    if null_curve.shape != bc.lower.shape:
        raise ValueError("null curve must have one value per delta grid point")
    if side == "lower":
        est = bc.lower
        draws = hdd_lower(processes, bc.argsup_mask, bc.shift)
    elif side == "upper":
        est = bc.upper
        draws = hdd_upper(processes, bc.arginf_mask, bc.shift)
    else:
        raise ValueError("side must be 'lower' or 'upper'")
    stat = float(r_n * np.max(np.abs(est - null_curve)))
    crit = empirical_quantile(draws, 1 - cfg.alpha)
    return TestResult(stat, crit, draws, bool(stat > crit), _p_value(stat, draws), cfg.alpha)


def _lp_norm(values: np.ndarray, grid: np.ndarray, p: float) -> np.ndarray:
    return np.trapezoid(np.abs(values) ** p, grid, axis=-1) ** (1.0 / p)


def equality_test(bc_a: BoundsCurve, bc_b: BoundsCurve, p: float, processes_a, processes_b,
                  cfg: BootstrapConfig, r_n: float) -> TestResult:
    """``L^p`` test that two conditioning points share the same lower bound curve."""
    if p < 1:
        raise ValueError("norm order p must be >= 1")
    if not np.array_equal(bc_a.delta_grid, bc_b.delta_grid):
        raise ValueError("both bound curves must share the delta grid")
    grid = bc_a.delta_grid
    stat = float(r_n * _lp_norm(bc_a.lower - bc_b.lower, grid, p))
    rho_a = sup_direction(processes_a, bc_a.argsup_mask, bc_a.shift)
    rho_b = sup_direction(processes_b, bc_b.argsup_mask, bc_b.shift)
    draws = _lp_norm(rho_a - rho_b, grid, p)
    crit = empirical_quantile(draws, 1 - cfg.alpha)
    return TestResult(stat, crit, draws, bool(stat > crit), _p_value(stat, draws), cfg.alpha)
