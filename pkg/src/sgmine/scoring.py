"""Pattern scoring: information content against the belief model, divided by
a description-length proxy for assimilation cost.

A location pattern's information content is the negative log density of the
observed subgroup mean under the model's subgroup-mean marginal. A spread
pattern's uses a three-moment affine chi-squared fit to the distribution of
the mean squared projection.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.linalg
from scipy.special import gammaln

from .data import Extension, Intention
from .model import BackgroundModel, ModelError, mean_marginal

__all__ = [
    "PatternKind",
    "DlParams",
    "ScoreBreakdown",
    "Chi2ComboParams",
    "description_length",
    "ic_location",
    "si_location",
    "chi2_combo_params",
    "ic_spread",
    "si_spread",
    "gaussian_ic",
]

logger = logging.getLogger(__name__)

PatternKind = Literal["location", "spread"]


@dataclass(frozen=True)
class DlParams:
    """Description-length weights: per-condition cost and constant offset."""

    gamma: float = 0.1
    eta: float = 1.0

    def __post_init__(self) -> None:
        if not (self.gamma > 0.0 and self.eta > 0.0):
            raise ValueError("description-length parameters must be positive")


@dataclass(frozen=True)
class ScoreBreakdown:
    """Information content, description length, and their ratio."""

    ic: float
    dl: float
    si: float

    @classmethod
    def from_ic_dl(cls, ic: float, dl: float) -> "ScoreBreakdown":
        return cls(ic, dl, ic / dl)


@dataclass(frozen=True)
class Chi2ComboParams:
    """Affine chi-squared fit alpha * chi2_m + beta matching three moments."""

    alpha: float
    beta: float
    m: float


def description_length(
    intention: Intention, kind: PatternKind, params: DlParams = DlParams()
) -> float:
    """gamma per condition plus eta; spread patterns pay one extra unit for
    the direction they communicate."""
    if kind not in ("location", "spread"):
        raise ValueError(f"unknown pattern kind {kind!r}")
    extra = 1.0 if kind == "spread" else 0.0
    return params.gamma * len(intention) + params.eta + extra


def gaussian_ic(observed: np.ndarray, mu: np.ndarray, cov: np.ndarray) -> float:
    """Negative log density of a multivariate normal at the observed point."""
    observed = np.atleast_1d(np.asarray(observed, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    d = mu.shape[0]
    try:
        chol = scipy.linalg.cho_factor(cov, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise ModelError(f"marginal covariance numerically singular: {exc}") from exc
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol[0]))))
    resid = observed - mu
    maha = float(resid @ scipy.linalg.cho_solve(chol, resid, check_finite=False))
    return 0.5 * (d * math.log(2.0 * math.pi) + logdet) + 0.5 * maha


def ic_location(model: BackgroundModel, ext: Extension, observed_mean: np.ndarray) -> float:
    """Surprise of the observed subgroup mean under the current belief."""
    mu, cov = mean_marginal(model, ext)
    return gaussian_ic(observed_mean, mu, cov)


def si_location(
    model: BackgroundModel,
    ext: Extension,
    observed_mean: np.ndarray,
    intention: Intention,
    params: DlParams = DlParams(),
) -> ScoreBreakdown:
    ic = ic_location(model, ext, observed_mean)
    return ScoreBreakdown.from_ic_dl(ic, description_length(intention, "location", params))


def _combo_from_power_sums(s1: float, s2: float, s3: float) -> Chi2ComboParams:
    alpha = s3 / s2
    beta = s1 - s2**2 / s3
    m = s2**3 / s3**2
    return Chi2ComboParams(alpha, beta, m)


def chi2_combo_params(coefficients: np.ndarray) -> Chi2ComboParams:
    """Fit alpha * chi2_m + beta to sum_i a_i chi2_1 by matching the first
    three moments. Requires strictly positive coefficients."""
    a = np.asarray(coefficients, dtype=float)
    if a.size == 0:
        raise ValueError("need at least one coefficient")
    if np.any(a <= 0.0):
        raise ValueError("coefficients must be strictly positive")
    return _combo_from_power_sums(float(a.sum()), float((a**2).sum()), float((a**3).sum()))


def _spread_ic_from_combo(combo: Chi2ComboParams, observed_var: float) -> float:
    """Negative log of the fitted density at the observed variance.

    Below the support edge beta the fit assigns probability zero; that is
    reported as +inf rather than clamped, and callers treat it as invalid.
    """
    if observed_var <= combo.beta:
        logger.debug(
            "observed variance %.6g at or below support edge %.6g", observed_var, combo.beta
        )
        return math.inf
    z = (observed_var - combo.beta) / combo.alpha
    half_m = 0.5 * combo.m
    return (
        math.log(combo.alpha)
        + half_m * math.log(2.0)
        + float(gammaln(half_m))
        - (half_m - 1.0) * math.log(z)
        + 0.5 * z
    )


def _spread_power_sums(
    model: BackgroundModel, ext: Extension, w: np.ndarray
) -> tuple[float, float, float]:
    counts = model.block_counts(ext)
    size = len(ext)
    s = np.einsum("bij,i,j->b", model._sigmas, w, w) / size
    return (
        float(counts @ s),
        float(counts @ s**2),
        float(counts @ s**3),
    )


def ic_spread(
    model: BackgroundModel, ext: Extension, w: np.ndarray, observed_var: float
) -> float:
    """Surprise of the observed directional variance under the current belief.

    The model statistic is a positive combination of independent chi-squared
    variables (one per row, weight w' sigma_i w / |I|), approximated by the
    three-moment affine fit. The matching location pattern should already be
    assimilated so the per-row means anchor at the subgroup mean.
    """
    if len(ext) == 0:
        raise ModelError("spread surprise of an empty extension")
    w = np.asarray(w, dtype=float)
    combo = _combo_from_power_sums(*_spread_power_sums(model, ext, w))
    return _spread_ic_from_combo(combo, float(observed_var))


def si_spread(
    model: BackgroundModel,
    ext: Extension,
    w: np.ndarray,
    observed_var: float,
    intention: Intention,
    params: DlParams = DlParams(),
) -> ScoreBreakdown:
    ic = ic_spread(model, ext, w, observed_var)
    return ScoreBreakdown.from_ic_dl(ic, description_length(intention, "spread", params))
