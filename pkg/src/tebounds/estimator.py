"""Scikit-learn style front end for conditional treatment-effect bounds."""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import kernels as K
from .bounds import REGIMES, assemble_marginal_bounds, makarov_bounds, makarov_distribution_at
from .cdf import (
    DEFAULT_TRIM,
    estimate_cdf_endogenous,
    estimate_cdf_subset,
    estimate_cdf_unconfounded,
    fit_propensity,
)
from .data import EvalGrids, ObservationTable, make_grids, resolve_x0
from .inference import (
    BootstrapConfig,
    confidence_bands,
    equality_test,
    ks_test,
    simulate_processes,
)


class MakarovBounds(BaseEstimator):
    """Bounds on ``F_{Delta|X}(delta | x0)`` with multiplier-bootstrap inference.

    Parameters
    ----------
    x0 : float, str or sequence
        Conditioning point. ``"q:0.2"`` selects the 0.2 sample quantile of
        each covariate. For ``regime="subset"`` it refers to the columns in
        ``sub_index`` only.
    regime : {"point_id", "manski", "fsd1", "fsd2", "fsd_both", "subset"}
        Identification regime for the marginal CDFs.
    kernel : str
        Univariate kernel family for the product kernel.
    bandwidth : {"auto", "mc_rule", "app_rule"} or float
        ``"auto"`` uses ``mc_rule`` with one smoothing covariate and
        ``app_rule`` otherwise.
    tuning_rate, tuning_c : str, float
        Tuning sequence ``a_n`` for the estimated argmax sets.
    m_y, m_delta, pad : int, int, float
        Grid sizes and padding; see :func:`tebounds.data.make_grids`.
    delta_range : (float, float), optional
        Overrides the default treatment-effect range.
    sub_index : sequence of int, optional
        Covariate columns smoothed over in the ``subset`` regime.
    trim : float
        Propensity threshold below which diagnostics warn.

    Attributes
    ----------
    grids_, marginal_bounds_, bounds_ : fitted estimation objects
    h_, a_n_, r_n_ : bandwidth, tuning value and convergence rate
    diagnostics_ : dict
    """

    def __init__(self, x0=0.0, regime="point_id", kernel="epanechnikov", bandwidth="auto",
                 tuning_rate="loglog", tuning_c=0.2, m_y=401, m_delta=201, pad=0.1,
                 delta_range=None, sub_index=None, trim=DEFAULT_TRIM):
        self.x0 = x0
        self.regime = regime
        self.kernel = kernel
        self.bandwidth = bandwidth
        self.tuning_rate = tuning_rate
        self.tuning_c = tuning_c
        self.m_y = m_y
        self.m_delta = m_delta
        self.pad = pad
        self.delta_range = delta_range
        self.sub_index = sub_index
        self.trim = trim

    def fit(self, X, y, d):
        X, y = check_X_y(X, y, ensure_min_samples=2, y_numeric=True)
        d = check_array(d, ensure_2d=False, dtype=float)
        return self.fit_table(ObservationTable(y=y, d=d, x=X))

    def fit_table(self, table: ObservationTable):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}; choose from {REGIMES}")
        subset = self.regime == "subset"
        if subset:
            if not self.sub_index:
                raise ValueError("regime 'subset' needs sub_index")
            cols = list(self.sub_index)
            smooth_x = table.x[:, cols]
            sub_table = ObservationTable(table.y, table.d, smooth_x)
            x0 = resolve_x0(sub_table, self.x0)
            base = make_grids(sub_table, x0, self.m_y, self.m_delta, self.pad, self.delta_range)
        else:
            smooth_x = table.x
            x0 = resolve_x0(table, self.x0)
            base = make_grids(table, x0, self.m_y, self.m_delta, self.pad, self.delta_range)
        grids = EvalGrids(base.y_grid, base.delta_grid, x0)

        d_smooth = smooth_x.shape[1]
        rule = self.bandwidth
        if rule == "auto":
            rule = "mc_rule" if d_smooth == 1 else "app_rule"
        h = K.bandwidth(K.BandwidthRule.parse(rule), smooth_x)
        kspec = K.KernelSpec(self.kernel, d_smooth)
        a_n = K.tuning_a_n(K.TuningSequence(self.tuning_rate, self.tuning_c), table.n, h, d_smooth)
        r_n = math.sqrt(table.n * h ** d_smooth)

        diagnostics = {"regime": self.regime, "n": table.n, "x0": x0.tolist()}
        if self.regime == "point_id":
            est = estimate_cdf_unconfounded(table, grids, kspec, h, self.trim)
            mb = assemble_marginal_bounds(
                "point_id", {"F1": est.F1, "F0": est.F0},
                influence={"F1": est.psi1, "F0": est.psi0},
            )
            diag = est.diag
        elif subset:
            model = fit_propensity(table)
            est = estimate_cdf_subset(table, grids, cols, model, kspec, h, self.trim)
            mb = assemble_marginal_bounds(
                "subset", {"F1": est.F1, "F0": est.F0},
                influence={"F1": est.psi11, "F0": est.psi10},
            )
            diag = None
            diagnostics["propensity_theta"] = model.theta_hat.tolist()
            diagnostics["flagged_rows"] = int(est.flagged_rows.size)
        else:
            est = estimate_cdf_endogenous(table, grids, kspec, h, self.trim)
            mb = assemble_marginal_bounds(
                self.regime,
                {"F11": est.F11, "F00": est.F00, "FY": est.FY},
                est.diag.local_propensity,
                influence={"F11": est.psi11, "F00": est.psi00, "FY": est.psiY, "p": est.psi_p},
            )
            diag = est.diag
        if diag is not None:
            diagnostics.update(
                local_propensity=diag.local_propensity,
                effective_n1=diag.effective_n1,
                effective_n0=diag.effective_n0,
                warnings=list(diag.warnings),
            )
        diagnostics.update(h=h, a_n=a_n, r_n=r_n, crossings=mb.crossings)

        self.table_ = table
        self.grids_ = grids
        self.h_, self.a_n_, self.r_n_ = h, a_n, r_n
        self.marginal_bounds_ = mb
        self.bounds_ = makarov_bounds(mb, grids, a_n)
        self.diagnostics_ = diagnostics
        return self

    def predict(self, delta) -> np.ndarray:
        """Makarov interval at each ``delta``; returns ``(k, 2)`` of ``[lower, upper]``."""
        check_is_fitted(self, "bounds_")
        delta = check_array(np.atleast_1d(delta), ensure_2d=False, dtype=float)
        return np.array(
            [makarov_distribution_at(self.marginal_bounds_, self.grids_, t) for t in delta]
        )

    def processes(self, n_boot=500, seed=0, stream=0) -> np.ndarray:
        """Simulated bootstrap processes ``(n_boot, 4, M_y)`` scaled by ``r_n``."""
        check_is_fitted(self, "bounds_")
        cfg = BootstrapConfig(m=n_boot, seed=seed)
        return simulate_processes(self.marginal_bounds_.influence, cfg, self.r_n_, stream)

    def confidence_bands(self, alpha=0.05, n_boot=500, seed=0, processes=None):
        cfg = BootstrapConfig(m=n_boot, alpha=alpha, seed=seed)
        if processes is None:
            processes = self.processes(n_boot, seed)
        return confidence_bands(self.bounds_, processes, cfg, self.r_n_)

    def ks_test(self, null_curve, side="lower", alpha=0.05, n_boot=500, seed=0, processes=None):
        """KS test of a hypothesised bound curve given on ``grids_.delta_grid``."""
        cfg = BootstrapConfig(m=n_boot, alpha=alpha, seed=seed)
        if processes is None:
            processes = self.processes(n_boot, seed)
        return ks_test(self.bounds_, null_curve, side, processes, cfg, self.r_n_)


def compare_lower_bounds(est_a: MakarovBounds, est_b: MakarovBounds, p=2.0, alpha=0.05,
                         n_boot=500, seed=0):
    """Test equal lower bounds at two conditioning points (independent multipliers)."""
    check_is_fitted(est_a, "bounds_")
    check_is_fitted(est_b, "bounds_")
    if not math.isclose(est_a.r_n_, est_b.r_n_):
        raise ValueError("both fits must share the sample and bandwidth")
    cfg = BootstrapConfig(m=n_boot, alpha=alpha, seed=seed)
    return equality_test(
        est_a.bounds_, est_b.bounds_, p,
        est_a.processes(n_boot, seed, stream=1),
        est_b.processes(n_boot, seed, stream=2),
        cfg, est_a.r_n_,
    )
