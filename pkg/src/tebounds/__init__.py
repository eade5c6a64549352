"""Bounds and uniform inference for conditional distributions of treatment effects."""

from .bounds import (
    REGIMES,
    BoundsCurve,
    MarginalBounds,
    assemble_marginal_bounds,
    makarov_bounds,
    makarov_distribution_at,
)
from .cdf import (
    CdfCurve,
    PropensityModel,
    estimate_cdf_endogenous,
    estimate_cdf_subset,
    estimate_cdf_unconfounded,
    fit_propensity,
)
from .data import EvalGrids, ObservationTable, load_csv, make_grids
from .estimator import MakarovBounds, compare_lower_bounds
from .inference import (
    BandResult,
    BootstrapConfig,
    TestResult,
    confidence_bands,
    equality_test,
    hdd_lower,
    hdd_upper,
    ks_test,
    simulate_processes,
)
from .kernels import BandwidthRule, KernelSpec, TuningSequence, bandwidth, tuning_a_n

__all__ = [
    "REGIMES",
    "BandResult",
    "BandwidthRule",
    "BootstrapConfig",
    "BoundsCurve",
    "CdfCurve",
    "EvalGrids",
    "KernelSpec",
    "MakarovBounds",
    "MarginalBounds",
    "ObservationTable",
    "PropensityModel",
    "TestResult",
    "TuningSequence",
    "assemble_marginal_bounds",
    "bandwidth",
    "compare_lower_bounds",
    "confidence_bands",
    "equality_test",
    "estimate_cdf_endogenous",
    "estimate_cdf_subset",
    "estimate_cdf_unconfounded",
    "fit_propensity",
    "hdd_lower",
    "hdd_upper",
    "ks_test",
    "load_csv",
    "make_grids",
    "makarov_bounds",
    "makarov_distribution_at",
    "simulate_processes",
    "tuning_a_n",
]

__version__ = "0.1.0"
