"""Kernel-smoothed conditional CDFs at a fixed covariate value.

Every estimator here is a kernel-weighted ratio

    F(y) = sum_i w_i (a_i 1{Y_i <= y} + b_i) / sum_i w_i,

whose per-observation influence is ``w_i (a_i 1{Y_i <= y} + b_i - F(y)) / sum_i w_i``.
Influence tables are ``(n, M_y)`` arrays whose columns sum to zero.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .data import DataError, EvalGrids, ObservationTable
from .kernels import KernelSpec

DEFAULT_TRIM = 0.01

InfluenceTable = np.ndarray


class EstimationError(ValueError):
    """Raised when a conditional CDF cannot be estimated at the requested point."""


@dataclass(frozen=True)
class CdfCurve:
    """Nondecreasing function on ``grid`` with values in ``[0, 1]``.

    Outside the grid the curve is 0 on the left and 1 on the right; between
    nodes it is linearly interpolated.
    """

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float).copy()
        if values.shape != grid.shape:
            raise ValueError("curve values must match the grid")
        if values.size and (values.min() < -1e-9 or values.max() > 1 + 1e-9):
            raise ValueError("CDF values must lie in [0, 1]")
        if np.any(np.diff(values) < -1e-9):
            raise ValueError("CDF values must be nondecreasing")
        np.clip(values, 0.0, 1.0, out=values)
        values = np.maximum.accumulate(values)
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def __call__(self, points) -> np.ndarray:
        return np.interp(points, self.grid, self.values, left=0.0, right=1.0)


@dataclass(frozen=True)
class LocalDiagnostics:
    local_propensity: float
    effective_n1: float
    effective_n0: float
    warnings: tuple = ()


def _indicator(y: np.ndarray, grid: np.ndarray) -> np.ndarray:
    # ties count as <=
    return (y[:, None] <= grid[None, :]).astype(float)


def kernel_ratio(y, grid, w, a=None, b=None):
    """Kernel ratio estimate and its influence table.

    Returns ``(values, psi)`` with ``values`` of length ``M_y`` and ``psi``
    of shape ``(n, M_y)``.
    """
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    total = w.sum()
    if not total > 0:
        raise EstimationError("empty local arm: zero kernel mass")
    a = np.ones_like(w) if a is None else np.asarray(a, dtype=float)
    b = np.zeros_like(w) if b is None else np.asarray(b, dtype=float)
    g = a[:, None] * _indicator(y, grid) + b[:, None]
    values = (w @ g) / total
    psi = (g - values[None, :]) * (w / total)[:, None]
    return values, psi


def _local_weights(table: ObservationTable, x0, kernel: KernelSpec, h: float, columns=None):
    x = table.x if columns is None else table.x[:, list(columns)]
    if kernel.dim != x.shape[1]:
        kernel = KernelSpec(kernel.family, x.shape[1])
    return kernel.weights(x, x0, h)


def local_diagnostics(table, k_weights, trim=DEFAULT_TRIM) -> LocalDiagnostics:
    d = table.d.astype(float)
    n1 = float(np.sum(d * k_weights))
    n0 = float(np.sum((1 - d) * k_weights))
    if n1 <= 0 or n0 <= 0:
        raise EstimationError("empty local arm: zero kernel mass in a treatment arm")
    p = n1 / (n1 + n0)
    notes = []
    if not trim <= p <= 1 - trim:
        msg = f"local propensity {p:.4f} outside [{trim}, {1 - trim}]"
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
        notes.append(msg)
    return LocalDiagnostics(p, n1, n0, tuple(notes))


class UnconfoundedEstimate(NamedTuple):
    F1: CdfCurve
    F0: CdfCurve
    psi1: InfluenceTable
    psi0: InfluenceTable
    diag: LocalDiagnostics


class EndogenousEstimate(NamedTuple):
    F11: CdfCurve
    F00: CdfCurve
    FY: CdfCurve
    psi11: InfluenceTable
    psi00: InfluenceTable
    psiY: InfluenceTable
    diag: LocalDiagnostics
    psi_p: InfluenceTable


def estimate_cdf_unconfounded(
    table: ObservationTable, grids: EvalGrids, kernel: KernelSpec, h: float, trim=DEFAULT_TRIM
) -> UnconfoundedEstimate:
    """Arm-specific kernel CDFs ``F_{1|X}(.|x0)``, ``F_{0|X}(.|x0)``."""
    k = _local_weights(table, grids.x0, kernel, h)
    diag = local_diagnostics(table, k, trim)
    d = table.d.astype(float)
    f1, psi1 = kernel_ratio(table.y, grids.y_grid, d * k)
    f0, psi0 = kernel_ratio(table.y, grids.y_grid, (1 - d) * k)
    return UnconfoundedEstimate(
        CdfCurve(grids.y_grid, f1), CdfCurve(grids.y_grid, f0), psi1, psi0, diag
    )


def estimate_cdf_endogenous(
    table: ObservationTable, grids: EvalGrids, kernel: KernelSpec, h: float, trim=DEFAULT_TRIM
) -> EndogenousEstimate:
    """Observed-arm CDFs ``F_{1|1X}``, ``F_{0|0X}`` and the pooled ``F_{Y|X}``.

    Also returns the influence table of the local propensity ``p(x0)``
    (constant along the grid), needed for bounds that mix arms.
    """
    k = _local_weights(table, grids.x0, kernel, h)
    diag = local_diagnostics(table, k, trim)
    d = table.d.astype(float)
    f11, psi11 = kernel_ratio(table.y, grids.y_grid, d * k)
    f00, psi00 = kernel_ratio(table.y, grids.y_grid, (1 - d) * k)
    fy, psiy = kernel_ratio(table.y, grids.y_grid, k)
    psi_p = ((d - diag.local_propensity) * k / k.sum())[:, None]
    return EndogenousEstimate(
        CdfCurve(grids.y_grid, f11),
        CdfCurve(grids.y_grid, f00),
        CdfCurve(grids.y_grid, fy),
        psi11,
        psi00,
        psiy,
        diag,
        np.repeat(psi_p, grids.y_grid.size, axis=1),
    )


# --- parametric propensity -------------------------------------------------


class SeparationError(EstimationError):
    """Logit likelihood has no finite maximiser."""


@dataclass(frozen=True)
class PropensityModel:
    """Logit propensity ``p(x) = expit(theta_0 + x @ theta_1)``."""

    theta_hat: np.ndarray
    fitted: bool = True
    n_iter: int = 0

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        return expit(self.theta_hat[0] + x @ self.theta_hat[1:])

    @classmethod
    def constant(cls, p: float, d_x: int) -> "PropensityModel":
        theta = np.zeros(d_x + 1)
        theta[0] = np.log(p / (1 - p))
        return cls(theta, True, 0)


def fit_propensity(table: ObservationTable, tol: float = 1e-8, max_iter: int = 100) -> PropensityModel:
    """Maximum-likelihood logit by damped Newton iteration."""
    d = table.d.astype(float)
    if d.min() == d.max():
        raise EstimationError("both treatment arms must be nonempty")
    z = np.column_stack([np.ones(table.n), table.x])
    theta = np.zeros(z.shape[1])

    def loglik(t):
        eta = z @ t
        return float(np.sum(d * eta - np.logaddexp(0.0, eta)))

    ll = loglik(theta)
    for it in range(1, max_iter + 1):
        p = expit(z @ theta)
        grad = z.T @ (d - p)
        if np.max(np.abs(grad)) < tol:
            return PropensityModel(theta, True, it - 1)
        hess = (z * (p * (1 - p))[:, None]).T @ z
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            raise SeparationError("perfect separation: singular information matrix") from None
        t = 1.0
        while t > 1e-10:
            cand = theta + t * step
            ll_new = loglik(cand)
            if ll_new >= ll - 1e-12:
                break
            t *= 0.5
        theta, ll = cand, ll_new
        if ll > -1e-6 or np.max(np.abs(z @ theta)) > 35:
            raise SeparationError("perfect separation: divergent logit index")
    p = expit(z @ theta)
    if np.max(np.abs(z.T @ (d - p))) < tol:
        return PropensityModel(theta, True, max_iter)
    raise SeparationError("logit did not converge (likely separation)")


class SubsetEstimate(NamedTuple):
    F1: CdfCurve
    F0: CdfCurve
    psi11: InfluenceTable
    psi10: InfluenceTable
    raw_F1: np.ndarray
    raw_F0: np.ndarray
    flagged_rows: np.ndarray


def estimate_cdf_subset(
    table: ObservationTable,
    sub_grids: EvalGrids,
    sub_index,
    model: PropensityModel,
    kernel: KernelSpec,
    h1: float,
    trim=DEFAULT_TRIM,
) -> SubsetEstimate:
    """Inverse-propensity weighted kernel CDFs on the covariate subset ``X_1``.

    Curves are clipped to ``[0, 1]`` and rearranged by running maximum;
    the unclipped values are returned as ``raw_F1``/``raw_F0``.
    """
    sub_index = list(sub_index)
    if not sub_index:
        raise DataError("sub_index must name at least one covariate column")
    k = _local_weights(table, sub_grids.x0, kernel, h1, columns=sub_index)
    if not k.sum() > 0:
        raise EstimationError("zero kernel mass at x1")
    p = model.predict(table.x)
    active = k > 0
    if np.any((p[active] <= 0) | (p[active] >= 1)):
        raise EstimationError("fitted propensity outside (0, 1) at a weighted row")
    flagged = np.flatnonzero(active & ((p < trim) | (p > 1 - trim)))
    if flagged.size:
        warnings.warn(
            f"{flagged.size} weighted row(s) with propensity outside [{trim}, {1 - trim}]",
            RuntimeWarning,
            stacklevel=2,
        )
    d = table.d.astype(float)
    raw1, psi11 = kernel_ratio(table.y, sub_grids.y_grid, k, a=d / p)
    raw0, psi10 = kernel_ratio(table.y, sub_grids.y_grid, k, a=(1 - d) / (1 - p))
    f1 = np.maximum.accumulate(np.clip(raw1, 0.0, 1.0))
    f0 = np.maximum.accumulate(np.clip(raw0, 0.0, 1.0))
    return SubsetEstimate(
        CdfCurve(sub_grids.y_grid, f1),
        CdfCurve(sub_grids.y_grid, f0),
        psi11,
        psi10,
        raw1,
        raw0,
        flagged,
    )
