"""Predictive statistics from an approximate posterior.

Monte Carlo averages over posterior weight draws bridge the Bayesian
layer to calibration, conformal methods, and metrics: class probability
means, predictive entropies, regression moments split into aleatoric and
epistemic parts, and sampled credible intervals.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .conformal import Intervals, _make_intervals
from .mlp import MlpConfig, mlp_forward
from .numerics import entropy, kth_smallest, softmax
from .posterior import EnsembleState, MapState, PosteriorState, posterior_sample
from .rng import Rng

DEFAULT_MC_SAMPLES = 30


@dataclass(frozen=True)
class PredictiveConfig:
    """Monte Carlo budget; ``n_samples=None`` picks a per-state default
    (1 for a point estimate, the member count for an ensemble, 30
    otherwise)."""

    n_samples: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_samples is not None and self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")


@dataclass(frozen=True)
class RegressionMoments:
    mean: np.ndarray
    variance: np.ndarray  # aleatoric + epistemic, exactly
    aleatoric: np.ndarray
    epistemic: np.ndarray


def resolve_samples(state: PosteriorState, pcfg: PredictiveConfig) -> int:
    if pcfg.n_samples is not None:
        return pcfg.n_samples
    if isinstance(state, MapState):
        return 1
    if isinstance(state, EnsembleState):
        return len(state.members)
    return DEFAULT_MC_SAMPLES


def _draws(state, cfg: MlpConfig, inputs, pcfg: PredictiveConfig):
    inputs = np.asarray(inputs, dtype=np.float64)
    rng = Rng(pcfg.seed)
    n_samples = resolve_samples(state, pcfg)
    thetas = posterior_sample(state, rng, n_samples)
    outputs = [mlp_forward(cfg, theta, inputs) for theta in thetas]
    return outputs, rng


def predictive_mean_classification(
    state: PosteriorState, cfg: MlpConfig, inputs, pcfg: PredictiveConfig
) -> np.ndarray:
    """Posterior-averaged class probabilities, one row per input."""
    outputs, _ = _draws(state, cfg, inputs, pcfg)
    probs = np.mean([softmax(z, axis=1) for z in outputs], axis=0)
    return probs


def predictive_entropy(
    state: PosteriorState, cfg: MlpConfig, inputs, pcfg: PredictiveConfig
) -> np.ndarray:
    """Entropy (nats) of the posterior predictive distribution per input."""
    return entropy(
        predictive_mean_classification(state, cfg, inputs, pcfg), axis=-1
    )


def predictive_moments_regression(
    state: PosteriorState, cfg: MlpConfig, inputs, pcfg: PredictiveConfig
) -> RegressionMoments:
    """Predictive mean and variance, with the variance split into the
    average predicted noise (aleatoric) and the spread of predicted
    means over draws (epistemic, population convention)."""
    outputs, _ = _draws(state, cfg, inputs, pcfg)
    mus = np.stack([out[:, 0] for out in outputs])
    noise = np.stack([np.exp(out[:, 1]) for out in outputs])
    mean = mus.mean(axis=0)
    aleatoric = noise.mean(axis=0)
    epistemic = np.mean((mus - mean) ** 2, axis=0)
    return RegressionMoments(
        mean=mean,
        variance=aleatoric + epistemic,
        aleatoric=aleatoric,
        epistemic=epistemic,
    )


def credible_interval_regression(
    state: PosteriorState,
    cfg: MlpConfig,
    inputs,
    alpha: float,
    pcfg: PredictiveConfig,
) -> Intervals:
    """Equal-tailed credible intervals from sampled observations.

    For each weight draw one observation per input is sampled from the
    predicted Gaussian, and the interval is the empirical alpha/2 and
    1 - alpha/2 quantile pair (k = ceil(q * S) order statistics) of the
    pooled draws.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    outputs, rng = _draws(state, cfg, inputs, pcfg)
    s = len(outputs)
    if s < 2.0 / alpha:
        warnings.warn(
            f"only {s} posterior draws for alpha={alpha}; tail quantiles "
            "are unreliable (need at least 2/alpha)",
            stacklevel=2,
        )
    n = np.asarray(inputs).shape[0]
    draws = np.empty((s, n))
    for j, out in enumerate(outputs):
        eps = rng.normals(n)
        draws[j] = out[:, 0] + np.sqrt(np.exp(out[:, 1])) * eps
    k_lo = max(math.ceil(0.5 * alpha * s), 1)
    k_hi = max(math.ceil((1.0 - 0.5 * alpha) * s), 1)
    lower = np.empty(n)
    upper = np.empty(n)
    for i in range(n):
        lower[i] = kth_smallest(draws[:, i], k_lo)
        upper[i] = kth_smallest(draws[:, i], k_hi)
    return _make_intervals(lower, upper)
