"""Synthetic dataset generators for the bias and interval benchmarks.

Each named generator binds one covariate law and one conditional response
law. Bias-family datasets expose the true conditional mean; interval-family
datasets are conditionally Gaussian and expose true response quantiles too.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import norm

from .data import Dataset

__all__ = ["DataGenSpec", "generate", "generator_names", "true_mean",
           "true_sd", "true_quantile", "has_known_mean", "has_known_quantiles"]


@dataclass(frozen=True)
class DataGenSpec:
    """A named sampling law, a row count, and a seed."""

    name: str
    n: int
    seed: int = 0

    def __post_init__(self):
        if self.name not in _GENERATORS:
            raise ValueError(
                f"unknown dataset {self.name!r}; known: {sorted(_GENERATORS)}"
            )
        if self.n < 2:
            raise ValueError("n must be at least 2")


@dataclass(frozen=True)
class _Law:
    p: int
    sample_x: Callable[[np.random.Generator, int], np.ndarray]
    sample_y: Callable[[np.random.Generator, np.ndarray], np.ndarray]
    mean: Callable[[np.ndarray], np.ndarray] | None
    sd: Callable[[np.ndarray], np.ndarray] | None


def _friedman(x: np.ndarray) -> np.ndarray:
    return (10 * np.sin(np.pi * x[:, 0] * x[:, 1]) + 20 * (x[:, 2] - 0.5) ** 2
            + 10 * x[:, 3] + 5 * x[:, 4])


def _unit_cube(lo: float, hi: float, p: int):
    return lambda rng, n: rng.uniform(lo, hi, (n, p))


def _gaussian_family(p: int, lo: float, hi: float, mean_fn, sd: float) -> _Law:
    return _Law(
        p=p,
        sample_x=_unit_cube(lo, hi, p),
        sample_y=lambda rng, x: rng.normal(mean_fn(x), sd),
        mean=mean_fn,
        sd=lambda x: np.full(x.shape[0], sd),
    )


def _exponential_law(noise_sd: float) -> _Law:
    # y = exp(x1 * eps): lognormal given x1, mean exp(x1^2 * noise_sd^2 / 2)
    return _Law(
        p=10,
        sample_x=_unit_cube(0.0, 1.0, 10),
        sample_y=lambda rng, x: np.exp(x[:, 0] * rng.normal(0.0, noise_sd, x.shape[0])),
        mean=lambda x: np.exp(x[:, 0] ** 2 * noise_sd**2 / 2),
        sd=None,
    )


# Clustered: five disjoint axis-aligned boxes along the diagonal of [0,1]^10,
# equal mixture probabilities, response law N(mean_c, var_c) by cluster.
_CLUSTER_MEANS = np.array([0.0, 40.0, 80.0, 120.0, 160.0])
_CLUSTER_SDS = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
_CLUSTER_CENTERS = 0.1 + 0.2 * np.arange(5)
_CLUSTER_HALFWIDTH = 0.08


def _cluster_of(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint((x[:, 0] - 0.1) / 0.2), 0, 4).astype(np.int64)


def _clustered_x(rng: np.random.Generator, n: int) -> np.ndarray:
    c = rng.integers(0, 5, n)
    offsets = rng.uniform(-_CLUSTER_HALFWIDTH, _CLUSTER_HALFWIDTH, (n, 10))
    return _CLUSTER_CENTERS[c][:, None] + offsets


def _blocks_x(p: int, edges, probs):
    """First covariate from a block mixture, remaining p-1 uniform on [-1,1]."""
    edges = np.asarray(edges, np.float64)
    cut = np.cumsum(np.asarray(probs, np.float64))

    def sample(rng: np.random.Generator, n: int) -> np.ndarray:
        x = rng.uniform(-1.0, 1.0, (n, p))
        block = np.searchsorted(cut, rng.random(n), side="right")
        x[:, 0] = rng.uniform(edges[block], edges[block + 1])
        return x

    return sample


def _step_pi_mean(x):
    return 20.0 * (x[:, 0] > 0)


_GENERATORS: dict[str, _Law] = {
    # bias family: X ~ Unif[0,1]^10
    "BaselineSyn": _gaussian_family(10, 0, 1, lambda x: np.zeros(x.shape[0]), 1.0),
    "LinearBias": _gaussian_family(10, 0, 1, lambda x: x[:, 0].copy(), 1.0),
    "StepBias": _gaussian_family(10, 0, 1, lambda x: 10.0 * (x[:, 0] > 0.5), 1.0),
    "ExponentialBias": _exponential_law(1.0),
    "FriedmanBias": _gaussian_family(10, 0, 1, _friedman, 1.0),
    # high-noise variants of the bias family
    "NoisedBaseline": _gaussian_family(10, 0, 1, lambda x: np.zeros(x.shape[0]), 10.0),
    "NoisedLinear": _gaussian_family(10, 0, 1, lambda x: x[:, 0].copy(), 10.0),
    "NoisedStep": _gaussian_family(10, 0, 1, lambda x: 10.0 * (x[:, 0] > 0.5), 10.0),
    "NoisedExponential": _exponential_law(2.0),
    "NoisedFriedman": _gaussian_family(10, 0, 1, _friedman, 10.0),
    # interval family
    "LinearPI": _gaussian_family(50, -1, 1, lambda x: x[:, 0].copy(), 2.0),
    "ClusteredPI": _Law(
        p=10,
        sample_x=_clustered_x,
        sample_y=lambda rng, x: rng.normal(_CLUSTER_MEANS[_cluster_of(x)],
                                           _CLUSTER_SDS[_cluster_of(x)]),
        mean=lambda x: _CLUSTER_MEANS[_cluster_of(x)],
        sd=lambda x: _CLUSTER_SDS[_cluster_of(x)],
    ),
    "StepPI": _Law(
        p=10,
        sample_x=_blocks_x(10, [-1.0, 0.0, 1.0], [0.05, 0.95]),
        sample_y=lambda rng, x: rng.normal(_step_pi_mean(x), 2.0),
        mean=_step_pi_mean,
        sd=lambda x: np.full(x.shape[0], 2.0),
    ),
    "FriedmanPI": _gaussian_family(10, -1, 1, _friedman, 1.0),
    "ParabolaPI": _Law(
        p=40,
        sample_x=_blocks_x(40, [-1.0, -1 / 3, 1 / 3, 1.0], [0.05, 0.9, 0.05]),
        sample_y=lambda rng, x: rng.normal(0.0, x[:, 0] ** 2),
        mean=lambda x: np.zeros(x.shape[0]),
        sd=lambda x: x[:, 0] ** 2,
    ),
    "TwoDPI": _Law(
        p=50,
        sample_x=_unit_cube(-1.0, 1.0, 50),
        sample_y=lambda rng, x: rng.normal(5.0 * x[:, 0], 2.0 * (x[:, 1] + 2.0)),
        mean=lambda x: 5.0 * x[:, 0],
        sd=lambda x: 2.0 * (x[:, 1] + 2.0),
    ),
}

INTERVAL_DATASETS = ("LinearPI", "ClusteredPI", "StepPI", "FriedmanPI",
                     "ParabolaPI", "TwoDPI")


def generator_names() -> tuple[str, ...]:
    return tuple(sorted(_GENERATORS))


def generate(spec: DataGenSpec) -> Dataset:
    """Draw a dataset from the named law, deterministically per seed."""
    law = _GENERATORS[spec.name]
    rng = np.random.default_rng(int(spec.seed))
    x = law.sample_x(rng, spec.n)
    y = law.sample_y(rng, x)
    return Dataset(x=x, y=y)


def sample_covariates(name: str, n: int, seed: int) -> np.ndarray:
    """Covariate draw only (for fixed evaluation grids)."""
    law = _GENERATORS[name]
    return law.sample_x(np.random.default_rng(int(seed)), n)


def sample_response(name: str, x: np.ndarray, seed: int) -> np.ndarray:
    """Fresh responses at given covariates (for held-out coverage checks)."""
    law = _GENERATORS[name]
    return law.sample_y(np.random.default_rng(int(seed)), x)


def has_known_mean(name: str) -> bool:
    return _GENERATORS[name].mean is not None


def has_known_quantiles(name: str) -> bool:
    return _GENERATORS[name].sd is not None


def true_mean(name: str, x: np.ndarray) -> np.ndarray:
    law = _GENERATORS[name]
    if law.mean is None:
        raise ValueError(f"{name} has no closed-form conditional mean")
    return law.mean(np.atleast_2d(x))


def true_sd(name: str, x: np.ndarray) -> np.ndarray:
    law = _GENERATORS[name]
    if law.sd is None:
        raise ValueError(f"{name} has no closed-form conditional sd")
    return law.sd(np.atleast_2d(x))


def true_quantile(name: str, x: np.ndarray, alpha: float) -> np.ndarray:
    """Conditional response quantile for the conditionally Gaussian laws."""
    x = np.atleast_2d(x)
    return true_mean(name, x) + true_sd(name, x) * norm.ppf(alpha)
