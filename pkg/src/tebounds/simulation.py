"""Monte Carlo design with heteroskedastic normal potential outcomes.

``Y_d = mu_d + X beta_d + (phi_d + X gamma_d) U_d``, ``D = 1{X alpha >= V}``,
``X = 2 Xtilde - 1`` with ``Xtilde ~ U[0, 1]``. At ``x = 0`` with
``mu_1 = mu_0 = 0`` both potential outcomes are standard normal, so the
lower Makarov bound is ``(2 Phi(delta/2) - 1) 1{delta >= 0}``.
"""

from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import norm

from .data import ObservationTable
from .estimator import MakarovBounds
from .inference import BootstrapConfig, confidence_bands, ks_test
from .bounds import makarov_bounds
from .kernels import TuningSequence, tuning_a_n

logger = logging.getLogger(__name__)

WORKERS_ENV = "TEBOUNDS_WORKERS"


@dataclass(frozen=True)
class DgpSpec:
    mu1: float = 0.0
    mu0: float = 0.0
    beta1: float = 1.0
    beta0: float = 0.9
    phi1: float = 1.0
    phi0: float = 1.0
    gamma1: float = 1.0
    gamma0: float = 0.9
    alpha: float = 1.0
    n: int = 500

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        # scale functions checked on the open interior of [-1, 1]
        xs = np.linspace(-1, 1, 201)[1:-1]
        for phi, gamma in ((self.phi1, self.gamma1), (self.phi0, self.gamma0)):
            if np.any(phi + xs * gamma <= 0):
                raise ValueError("scale function phi + x*gamma must be positive on (-1, 1)")

    def boundary_scale_warnings(self) -> list:
        notes = []
        for arm, phi, gamma in ((1, self.phi1, self.gamma1), (0, self.phi0, self.gamma0)):
            for x in (-1.0, 1.0):
                if phi + x * gamma <= 0:
                    notes.append(f"arm {arm}: scale {phi + x * gamma:g} at x={x:g}")
        return notes


def replication_seed(base_seed: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(base_seed) & 0xFFFF_FFFF_FFFF_FFFF, int(rep)])


def draw_sample(spec: DgpSpec, seed) -> ObservationTable:
    rng = np.random.default_rng(seed)
    x = 2.0 * rng.uniform(size=spec.n) - 1.0
    u1 = rng.standard_normal(spec.n)
    u0 = rng.standard_normal(spec.n)
    v = rng.standard_normal(spec.n)
    y1 = spec.mu1 + x * spec.beta1 + (spec.phi1 + x * spec.gamma1) * u1
    y0 = spec.mu0 + x * spec.beta0 + (spec.phi0 + x * spec.gamma0) * u0
    d = (x * spec.alpha >= v).astype(int)
    return ObservationTable(y=np.where(d == 1, y1, y0), d=d, x=x)


def null_lower_curve(delta_grid) -> np.ndarray:
    delta = np.asarray(delta_grid, dtype=float)
    return np.where(delta >= 0, 2.0 * norm.cdf(delta / 2.0) - 1.0, 0.0)


def makarov_interval_normal(delta, shift: float = 0.0):
    """Makarov interval for ``N(shift, 1) - N(0, 1)`` at ``delta``."""
    z = 2.0 * norm.cdf((np.asarray(delta, dtype=float) - shift) / 2.0)
    return np.maximum(z - 1.0, 0.0), np.minimum(z, 1.0)


def n_workers(workers: int | None = None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    return max(1, int(workers))


def _parallel_map(func, items, workers):
    if workers == 1 or len(items) <= 1:
        return [func(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


@dataclass
class McReport:
    """Rejection probabilities keyed by ``(rate, c, mu)``."""

    reps: int
    n: int
    m_boot: int
    alpha: float
    base_seed: int
    c_values: list
    rates: list
    mu_scenarios: list
    rejection: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)

    def probability(self, rate, c, mu) -> float:
        return self.rejection[(rate, float(c), float(mu))]

    def to_rows(self):
        header = ["c"] + [f"{rate}:mu={mu:g}" for rate in self.rates for mu in self.mu_scenarios]
        rows = [header]
        for c in self.c_values:
            rows.append([f"{c:g}"] + [
                f"{self.probability(rate, c, mu):.3f}" for rate in self.rates for mu in self.mu_scenarios
            ])
        return rows

    def to_json_dict(self) -> dict:
        return {
            "reps": self.reps, "n": self.n, "m_boot": self.m_boot, "alpha": self.alpha,
            "base_seed": self.base_seed, "c_values": self.c_values, "rates": self.rates,
            "mu_scenarios": self.mu_scenarios, "grid": self.grid,
            "replication_seeds": "SeedSequence([base_seed, rep]) for rep in range(reps)",
            "cells": [
                {"rate": r, "c": c, "mu": mu, "rejection": p}
                for (r, c, mu), p in sorted(self.rejection.items())
            ],
        }


@dataclass(frozen=True)
class _RepJob:
    rep: int
    base_seed: int
    spec: dict
    mu_scenarios: tuple
    cells: tuple  # (rate, c)
    m_boot: int
    alpha: float
    m_y: int
    m_delta: int
    pad: float


def _run_replication(job: _RepJob) -> dict:
    ss = replication_seed(job.base_seed, job.rep)
    sample_seed, boot_seed = ss.spawn(2)
    boot = int(boot_seed.generate_state(1, np.uint64)[0])
    out = {}
    for mu in job.mu_scenarios:
        spec = DgpSpec(**{**job.spec, "mu1": float(mu), "mu0": 0.0})
        table = draw_sample(spec, sample_seed)
        est = MakarovBounds(x0=0.0, bandwidth="mc_rule", m_y=job.m_y, m_delta=job.m_delta,
                            pad=job.pad)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            est.fit_table(table)
        cfg = BootstrapConfig(m=job.m_boot, alpha=job.alpha, seed=boot)
        procs = est.processes(job.m_boot, boot)
        null = null_lower_curve(est.grids_.delta_grid)
        for rate, c in job.cells:
            a_n = tuning_a_n(TuningSequence(rate, c), table.n, est.h_, 1)
            bc = makarov_bounds(est.marginal_bounds_, est.grids_, a_n)
            res = ks_test(bc, null, "lower", procs, cfg, est.r_n_)
            out[(rate, float(c), float(mu))] = res.reject
    return out


def run_table1(reps=500, n=500, m_boot=500, c_values=(0.1, 0.2, 0.3, 0.4, 0.5),
               rates=("loglog", "sqrtlog", "power16"), mu_scenarios=(0.0, -1.0, 1.0),
               base_seed=20240101, alpha=0.05, m_y=401, m_delta=201, pad=0.1,
               workers=None, dgp: DgpSpec | None = None) -> McReport:
    """Rejection probabilities of the KS test of the lower bound at ``x = 0``.

    Replication ``r`` draws its sample from ``SeedSequence([base_seed, r])``;
    all scenarios and tuning cells of a replication share the draws.
    """
    if reps < 50:
        raise ValueError("reps must be at least 50")
    dgp = dgp or DgpSpec(n=n)
    spec = {k: v for k, v in asdict(dgp).items() if k not in ("mu1", "mu0")}
    spec["n"] = n
    cells = tuple((r, float(c)) for r in rates for c in c_values)
    jobs = [
        _RepJob(r, base_seed, spec, tuple(float(m) for m in mu_scenarios), cells, m_boot, alpha,
                m_y, m_delta, pad)
        for r in range(reps)
    ]
    results = _parallel_map(_run_replication, jobs, n_workers(workers))
    rejection = {}
    for key in results[0]:
        rejection[key] = float(np.mean([res[key] for res in results]))
    return McReport(reps, n, m_boot, alpha, int(base_seed), [float(c) for c in c_values],
                    list(rates), [float(m) for m in mu_scenarios], rejection,
                    {"m_y": m_y, "m_delta": m_delta, "pad": pad})


@dataclass(frozen=True)
class _CoverageJob:
    rep: int
    base_seed: int
    n: int
    m_boot: int
    alpha: float
    deltas: tuple
    rate: str
    c: float


def _coverage_replication(job: _CoverageJob) -> list:
    ss = replication_seed(job.base_seed, job.rep)
    sample_seed, boot_seed = ss.spawn(2)
    boot = int(boot_seed.generate_state(1, np.uint64)[0])
    table = draw_sample(DgpSpec(n=job.n), sample_seed)
    est = MakarovBounds(x0=0.0, bandwidth="mc_rule", tuning_rate=job.rate, tuning_c=job.c,
                        delta_range=(-10.0, 10.0), m_delta=201)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        est.fit_table(table)
    cfg = BootstrapConfig(m=job.m_boot, alpha=job.alpha, seed=boot)
    band = confidence_bands(est.bounds_, est.processes(job.m_boot, boot), cfg, est.r_n_)
    grid = est.grids_.delta_grid
    covered = []
    for t in job.deltas:
        k = int(np.argmin(np.abs(grid - t)))
        lo, hi = makarov_interval_normal(grid[k])
        covered.append(bool(band.idset_ci[0, k] <= lo and band.idset_ci[1, k] >= hi))
    return covered


def run_coverage(reps=200, n=500, m_boot=500, alpha=0.05, deltas=(0.0, 1.0, 2.0),
                 base_seed=7, rate="loglog", c=0.2, workers=None) -> np.ndarray:
    """Per-replication coverage of the true identified interval at ``x = 0``, ``mu = 0``.

    Returns a boolean array ``(reps, len(deltas))``.
    """
    jobs = [_CoverageJob(r, base_seed, n, m_boot, alpha, tuple(deltas), rate, c)
            for r in range(reps)]
    return np.array(_parallel_map(_coverage_replication, jobs, n_workers(workers)))
