"""Kernels, bandwidth rules and the tuning sequence for the argmax sets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

_UNIVARIATE = {
    "epanechnikov": lambda u: 0.75 * (1.0 - u * u),
    "biweight": lambda u: (15.0 / 16.0) * (1.0 - u * u) ** 2,
    "triweight": lambda u: (35.0 / 32.0) * (1.0 - u * u) ** 3,
}

KERNEL_FAMILIES = tuple(_UNIVARIATE)


def _univariate(family: str, u):
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) <= 1.0
    return np.where(inside, _UNIVARIATE[family](np.where(inside, u, 0.0)), 0.0)


@dataclass(frozen=True)
class KernelSpec:
    """Product kernel built from a compactly supported univariate kernel."""

    family: str = "epanechnikov"
    dim: int = 1

    def __post_init__(self):
        if self.family not in _UNIVARIATE:
            raise ValueError(
                f"unknown kernel family {self.family!r}; choose from {KERNEL_FAMILIES}"
            )
        if int(self.dim) < 1:
            raise ValueError("kernel dimension must be >= 1")
        _check_moments(self.family)

    def univariate(self, u):
        return _univariate(self.family, u)

    def weights(self, x, x0, h: float) -> np.ndarray:
        """Kernel weights ``K((X_i - x0) / h)`` for each row of ``x``."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        if x.shape[1] != self.dim or x0.size != self.dim:
            raise ValueError(
                f"dimension mismatch: kernel dim {self.dim}, x has {x.shape[1]}, x0 has {x0.size}"
            )
        return np.prod(self.univariate((x - x0) / h), axis=1)


_MOMENTS_CHECKED: set[str] = set()


def _check_moments(family: str, tol: float = 1e-6):
    if family in _MOMENTS_CHECKED:
        return
    k = lambda u: float(_univariate(family, u))  # noqa: E731
    mass = integrate.quad(k, -1.0, 1.0)[0]
    first = integrate.quad(lambda u: u * k(u), -1.0, 1.0)[0]
    second = integrate.quad(lambda u: u * u * k(u), -1.0, 1.0)[0]
    if abs(mass - 1.0) > tol or abs(first) > tol or not second < np.inf:
        raise ValueError(f"kernel {family!r} fails the moment conditions")
    _MOMENTS_CHECKED.add(family)


def kernel_weight(spec: KernelSpec, u) -> float:
    """Product kernel ``prod_j k(u_j)`` at a single point."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.size != spec.dim:
        raise ValueError(f"dimension mismatch: kernel dim {spec.dim}, u has {u.size}")
    return float(np.prod(spec.univariate(u)))


@dataclass(frozen=True)
class BandwidthRule:
    """``mc_rule``: 1.06 sd(X) n^(-1/6); ``app_rule``: 1.06 n^(-1/(5+d_x)); ``manual``."""

    rule: str = "mc_rule"
    h: float | None = None

    def __post_init__(self):
        if self.rule not in {"mc_rule", "app_rule", "manual"}:
            raise ValueError(f"unknown bandwidth rule {self.rule!r}")
        if self.rule == "manual" and not (self.h is not None and self.h > 0):
            raise ValueError("manual bandwidth must be positive")

    @classmethod
    def parse(cls, value) -> "BandwidthRule":
        if isinstance(value, BandwidthRule):
            return value
        if isinstance(value, (int, float)):
            return cls("manual", float(value))
        return cls(str(value))


def bandwidth(rule: BandwidthRule, x) -> float:
    """Bandwidth for covariate matrix ``x`` (or an ObservationTable)."""
    x = getattr(x, "x", x)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    n, d_x = x.shape
    if n < 2:
        raise ValueError("bandwidth needs n >= 2")
    if rule.rule == "manual":
        return float(rule.h)
    if rule.rule == "mc_rule":
        if d_x > 1:
            raise ValueError("mc_rule is defined for a single covariate")
        h = 1.06 * float(np.std(x[:, 0], ddof=1)) * n ** (-1.0 / 6.0)
    else:
        h = 1.06 * n ** (-1.0 / (5.0 + d_x))
    if not h > 0:
        raise ValueError("bandwidth rule produced a non-positive h")
    return h


_RATES = {
    "loglog": lambda s: math.log(math.log(s)),
    "sqrtlog": lambda s: math.sqrt(math.log(s)),
    "power16": lambda s: s ** (1.0 / 6.0),
}

TUNING_RATES = tuple(_RATES)


@dataclass(frozen=True)
class TuningSequence:
    """``a_n = c * rate(n h^d) / sqrt(n h^d)``."""

    rate: str = "loglog"
    c: float = 0.2

    def __post_init__(self):
        if self.rate not in _RATES:
            raise ValueError(f"unknown tuning rate {self.rate!r}; choose from {TUNING_RATES}")
        if not self.c > 0:
            raise ValueError("tuning scale c must be positive")


def tuning_a_n(seq: TuningSequence, n: int, h: float, d_x: int = 1) -> float:
    s = n * h ** d_x
    if seq.rate == "loglog" and s <= math.e:
        raise ValueError("loglog rate needs n*h^d_x > e")
    if s <= 1.0:
        raise ValueError("tuning rate needs n*h^d_x > 1")
    return seq.c * _RATES[seq.rate](s) / math.sqrt(s)
