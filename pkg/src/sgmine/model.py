"""Block-structured Gaussian belief state and minimum-divergence constraint updates.

The background model is a product of per-row multivariate Gaussians over the
target matrix. Rows that have appeared in exactly the same set of assimilated
subgroups share parameters, stored once per block. Assimilating a pattern means
finding the closest distribution (in KL divergence) that satisfies the pattern's
statistic exactly; for a mean statistic this shifts block means, for a spread
statistic it is a rank-one precision update with a scalar multiplier found by
root-finding.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg

from .data import (
    DataError,
    Dataset,
    Extension,
    Intention,
    subgroup_mean,
    subgroup_spread,
)

__all__ = [
    "ModelError",
    "NotPositiveDefiniteError",
    "ConstraintOrderError",
    "RootBracketError",
    "GaussianBlock",
    "LocationPattern",
    "SpreadPattern",
    "Pattern",
    "BackgroundModel",
    "AssimilationResult",
    "init_background",
    "refine_blocks",
    "mean_marginal",
    "expected_spread",
    "apply_location_constraint",
    "apply_spread_constraint",
    "assimilate",
    "model_to_dict",
    "model_from_dict",
    "pattern_to_dict",
    "pattern_from_dict",
]

logger = logging.getLogger(__name__)


class ModelError(ValueError):
    """Invalid model state or operation."""


class NotPositiveDefiniteError(ModelError):
    """A covariance or precision matrix is not symmetric positive definite."""


class ConstraintOrderError(ModelError):
    """A spread constraint was applied before its location constraint."""


class RootBracketError(ModelError):
    """The spread multiplier root could not be bracketed within its domain."""


def _spd_inverse(matrix: np.ndarray, what: str) -> np.ndarray:
    try:
        chol = scipy.linalg.cho_factor(matrix, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"{what} is not positive definite: {exc}") from exc
    inv = scipy.linalg.cho_solve(chol, np.eye(matrix.shape[0]), check_finite=False)
    return (inv + inv.T) / 2.0


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GaussianBlock:
    """Shared Gaussian parameters for a set of rows.

    Both parameterizations are stored and kept consistent analytically:
    (precision, shift) in natural form, (mu, sigma) in moment form. Updates
    construct new blocks; arrays are read-only and structurally shared.
    """

    members: np.ndarray
    precision: np.ndarray
    shift: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.members, dtype=np.int64)
        if m.size == 0:
            raise ModelError("a block must own at least one row")
        if np.any(np.diff(m) <= 0):
            raise ModelError("block members must be strictly increasing")
        m.setflags(write=False)
        object.__setattr__(self, "members", m)
        for name in ("precision", "shift", "mu", "sigma"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def size(self) -> int:
        return int(self.members.size)

    @classmethod
    def from_moments(cls, members: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> "GaussianBlock":
        mu = np.asarray(mu, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        precision = _spd_inverse(sigma, "covariance")
        return cls(np.asarray(members, np.int64), precision, precision @ mu, mu, sigma)

    @classmethod
    def from_information(
        cls, members: np.ndarray, precision: np.ndarray, shift: np.ndarray
    ) -> "GaussianBlock":
        precision = np.asarray(precision, dtype=float)
        shift = np.asarray(shift, dtype=float)
        sigma = _spd_inverse(precision, "precision")
        return cls(np.asarray(members, np.int64), precision, shift, sigma @ shift, sigma)

    def with_members(self, members: np.ndarray) -> "GaussianBlock":
        """Same parameters for a different row set (arrays shared)."""
        return GaussianBlock(members, self.precision, self.shift, self.mu, self.sigma)


@dataclass(frozen=True, eq=False)
class LocationPattern:
    """A subgroup together with its empirical target mean."""

    intention: Intention
    extension: Extension
    mean: np.ndarray

    def __post_init__(self) -> None:
        if len(self.extension) == 0:
            raise ModelError("location pattern needs a non-empty extension")
        object.__setattr__(self, "mean", _frozen(self.mean))

    @property
    def kind(self) -> str:
        return "location"

    def key(self) -> tuple:
        return ("location", self.intention.canonical(), self.extension.key())

    @classmethod
    def from_dataset(
        cls, dataset: Dataset, intention: Intention, extension: Extension
    ) -> "LocationPattern":
        return cls(intention, extension, subgroup_mean(dataset, extension))


@dataclass(frozen=True, eq=False)
class SpreadPattern:
    """A subgroup with its empirical variance along a unit direction."""

    intention: Intention
    extension: Extension
    direction: np.ndarray
    variance: float

    def __post_init__(self) -> None:
        if len(self.extension) < 2:
            raise ModelError("spread pattern needs at least two rows")
        w = np.asarray(self.direction, dtype=float)
        if abs(float(w @ w) - 1.0) > 1e-12:
            raise ModelError("spread direction must be a unit vector")
        if not self.variance >= 0.0:
            raise ModelError("spread variance must be non-negative")
        object.__setattr__(self, "direction", _frozen(w))
        object.__setattr__(self, "variance", float(self.variance))

    @property
    def kind(self) -> str:
        return "spread"

    def key(self) -> tuple:
        return (
            "spread",
            self.intention.canonical(),
            self.extension.key(),
            self.direction.tobytes(),
        )

    @classmethod
    def from_dataset(
        cls, dataset: Dataset, intention: Intention, extension: Extension, direction: np.ndarray
    ) -> "SpreadPattern":
        return cls(intention, extension, direction, subgroup_spread(dataset, extension, direction))


Pattern = Union[LocationPattern, SpreadPattern]


@dataclass(frozen=True, eq=False)
class BackgroundModel:
    """Immutable belief state: a block partition of rows plus assimilation history."""

    blocks: tuple[GaussianBlock, ...]
    d_y: int
    n: int
    history: tuple[Pattern, ...] = ()

    def __post_init__(self) -> None:
        owned = np.concatenate([b.members for b in self.blocks]) if self.blocks else np.array([], np.int64)
        if owned.size != self.n or np.any(np.sort(owned) != np.arange(self.n)):
            raise ModelError("blocks must partition the row range exactly")
        for b in self.blocks:
            if b.mu.shape != (self.d_y,) or b.sigma.shape != (self.d_y, self.d_y):
                raise ModelError("block parameter shape mismatch")

    @cached_property
    def _row_block(self) -> np.ndarray:
        idx = np.empty(self.n, dtype=np.int64)
        for j, b in enumerate(self.blocks):
            idx[b.members] = j
        idx.setflags(write=False)
        return idx

    @cached_property
    def _mus(self) -> np.ndarray:
        return _frozen(np.stack([b.mu for b in self.blocks]))

    @cached_property
    def _sigmas(self) -> np.ndarray:
        return _frozen(np.stack([b.sigma for b in self.blocks]))

    def block_counts(self, ext: Extension) -> np.ndarray:
        """How many of the extension's rows each block owns."""
        return np.bincount(self._row_block[ext.indices], minlength=len(self.blocks))

    def history_keys(self) -> set:
        return {p.key() for p in self.history}

    def find_location(self, ext: Extension) -> Optional[LocationPattern]:
        want = ext.key()
        for p in self.history:
            if isinstance(p, LocationPattern) and p.extension.key() == want:
                return p
        return None


@dataclass(frozen=True)
class AssimilationResult:
    """Outcome of a convergence loop over pattern constraints."""

    model: BackgroundModel
    rounds: int
    converged: bool


def init_background(mu: np.ndarray, sigma: np.ndarray, n: int) -> BackgroundModel:
    """Single-block prior: every row is believed N(mu, sigma)."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if n < 1:
        raise ModelError("need at least one row")
    block = GaussianBlock.from_moments(np.arange(n, dtype=np.int64), mu, sigma)
    return BackgroundModel((block,), mu.shape[0], n)


def background_from_dataset(dataset: Dataset) -> BackgroundModel:
    """Prior from the full data's empirical mean and covariance."""
    mu, sigma = dataset.empirical_prior()
    return init_background(mu, sigma, dataset.n)


def refine_blocks(model: BackgroundModel, ext: Extension) -> BackgroundModel:
    """Split blocks so each is fully inside or fully outside the extension."""
    mask = np.zeros(model.n, dtype=bool)
    mask[ext.indices] = True
    new_blocks: list[GaussianBlock] = []
    changed = False
    for b in model.blocks:
        inside = mask[b.members]
        k = int(inside.sum())
        if k == 0 or k == b.size:
            new_blocks.append(b)
            continue
        changed = True
        new_blocks.append(b.with_members(b.members[inside]))
        new_blocks.append(b.with_members(b.members[~inside]))
    if not changed:
        return model
    return replace(model, blocks=tuple(new_blocks))


def mean_marginal(model: BackgroundModel, ext: Extension) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and covariance of the subgroup-average statistic.

    The average of |I| independent rows has mean (1/|I|) sum mu_i and
    covariance (1/|I|^2) sum sigma_i.
    """
    size = len(ext)
    if size == 0:
        raise ModelError("mean marginal of an empty extension")
    counts = model.block_counts(ext)
    mu = counts @ model._mus / size
    cov = np.tensordot(counts, model._sigmas, axes=1) / size**2
    return mu, cov


def expected_spread(
    model: BackgroundModel, ext: Extension, w: np.ndarray, anchor: np.ndarray
) -> float:
    """Model expectation of the mean squared projection about a fixed anchor."""
    size = len(ext)
    if size == 0:
        raise ModelError("expected spread of an empty extension")
    w = np.asarray(w, dtype=float)
    counts = model.block_counts(ext)
    s = np.einsum("bij,i,j->b", model._sigmas, w, w)
    proj = (model._mus - np.asarray(anchor, dtype=float)) @ w
    return float(counts @ (s + proj**2) / size)


def _with_pattern(history: tuple[Pattern, ...], pattern: Pattern) -> tuple[Pattern, ...]:
    key = pattern.key()
    if any(p.key() == key for p in history):
        return history
    return history + (pattern,)


def apply_location_constraint(model: BackgroundModel, pattern: LocationPattern) -> BackgroundModel:
    """Move the belief to the KL-closest state whose subgroup-mean expectation
    equals the pattern's empirical mean. Covariances are untouched.

    Solves (sum_{i in I} sigma_i) lambda = |I| (target - current mean), then
    mu_i += sigma_i lambda for rows in the extension; in natural form the shift
    vector of each inside block gains lambda.
    """
    ext = pattern.extension
    refined = refine_blocks(model, ext)
    history = _with_pattern(refined.history, pattern)
    counts = refined.block_counts(ext)
    size = len(ext)
    inside = counts > 0
    # Post-refinement every block is all-in or all-out.
    mu_bar = counts @ refined._mus / size
    resid = pattern.mean - mu_bar
    if np.max(np.abs(resid)) <= 1e-13 * (1.0 + np.max(np.abs(pattern.mean))):
        return replace(refined, history=history)
    scatter = np.tensordot(counts, refined._sigmas, axes=1)
    lam = np.linalg.solve(scatter, size * resid)
    new_blocks = []
    for j, b in enumerate(refined.blocks):
        if not inside[j]:
            new_blocks.append(b)
            continue
        new_blocks.append(
            GaussianBlock(
                b.members,
                b.precision,
                b.shift + lam,
                b.mu + b.sigma @ lam,
                b.sigma,
            )
        )
    return BackgroundModel(tuple(new_blocks), refined.d_y, refined.n, history)


def _apply_locations_jointly(
    model: BackgroundModel, locations: Sequence[LocationPattern]
) -> BackgroundModel:
    """One exact mean step enforcing every location constraint at once.

    With covariances held fixed the constraints are jointly affine in the
    block means, so the KL-closest feasible means come from a single SPD
    solve over the stacked multipliers. Cycling the constraints one at a
    time reaches the same point only in the limit, and slowly when the
    extensions overlap heavily.
    """
    refined = model
    for p in locations:
        refined = refine_blocks(refined, p.extension)
    history = refined.history
    for p in locations:
        history = _with_pattern(history, p)
    nblocks = len(refined.blocks)
    d = refined.d_y
    L = len(locations)
    sizes = np.array([b.size for b in refined.blocks], dtype=float)
    covered = np.zeros((L, nblocks), dtype=bool)
    resid = np.empty((L, d))
    scale = 1.0
    for l, p in enumerate(locations):
        counts = refined.block_counts(p.extension)
        covered[l] = counts > 0
        k = len(p.extension)
        resid[l] = k * (np.asarray(p.mean, dtype=float) - counts @ refined._mus / k)
        scale = max(scale, float(np.max(np.abs(p.mean))))
    if np.max(np.abs(resid)) <= 1e-13 * scale:
        return replace(refined, history=history)
    weights = np.einsum("lb,mb,b->lmb", covered, covered, sizes)
    system = np.einsum("lmb,bij->limj", weights, refined._sigmas).reshape(L * d, L * d)
    rhs = resid.reshape(L * d)
    # Extensions that are unions of others make the stacked system singular
    # while the empirical targets stay consistent, so the minimum-norm
    # multipliers reach the same feasible means. A plain solve would pass
    # garbage through near-singular systems silently.
    lam = np.linalg.lstsq(system, rhs, rcond=1e-10)[0].reshape(L, d)
    block_lam = covered.T @ lam
    new_blocks = []
    for j, b in enumerate(refined.blocks):
        step = block_lam[j]
        if not np.any(step):
            new_blocks.append(b)
            continue
        new_blocks.append(
            GaussianBlock(
                b.members,
                b.precision,
                b.shift + step,
                b.mu + b.sigma @ step,
                b.sigma,
            )
        )
    return BackgroundModel(tuple(new_blocks), refined.d_y, refined.n, history)


def _newton_refine(
    model: BackgroundModel,
    locations: Sequence[LocationPattern],
    spreads: Sequence[SpreadPattern],
) -> Optional[BackgroundModel]:
    """Joint Newton solve for every constraint multiplier at once.

    Cycling the constraint groups contracts slowly when spread and location
    extensions overlap: each spread update tilts block means, the next mean
    step pulls them back, and the pair trades geometrically shrinking
    corrections. Here the stacked mean multipliers and spread multipliers
    are treated as one root-finding problem on the moment residuals, with
    the exact Jacobian assembled per block, so the fixed point is reached
    quadratically instead. Returns None when the iteration cannot reach the
    single-constraint skip thresholds; the caller then keeps cycling.

    The model must already carry every pattern in its history (anchors are
    resolved from it) and be refined along all their extensions.
    """
    d = model.d_y
    L = len(locations)
    K = len(spreads)
    if K == 0 or L == 0:
        return None
    nblocks = len(model.blocks)
    sizes = np.array([b.size for b in model.blocks], dtype=float)
    cov_loc = np.zeros((L, nblocks), dtype=bool)
    targets_loc = np.empty((L, d))
    nloc = np.empty(L)
    scale = 1.0
    for l, p in enumerate(locations):
        cov_loc[l] = model.block_counts(p.extension) > 0
        targets_loc[l] = p.mean
        nloc[l] = float(len(p.extension))
        scale = max(scale, float(np.max(np.abs(p.mean))))
    cov_spr = np.zeros((K, nblocks), dtype=bool)
    W = np.empty((K, d))
    anchors = np.empty((K, d))
    targets_spr = np.empty(K)
    for k, p in enumerate(spreads):
        cov_spr[k] = model.block_counts(p.extension) > 0
        W[k] = p.direction
        anchor = model.find_location(p.extension)
        if anchor is None:
            return None
        anchors[k] = anchor.mean
        targets_spr[k] = len(p.extension) * p.variance
    if np.any(targets_spr <= 0.0):
        return None

    touched = np.any(cov_loc, axis=0) | np.any(cov_spr, axis=0)
    idx = np.flatnonzero(touched)
    cl = cov_loc[:, idx].astype(float)
    cs = cov_spr[:, idx].astype(float)
    n_t = sizes[idx]
    prec = np.stack([model.blocks[j].precision for j in idx])
    shift = np.stack([model.blocks[j].shift for j in idx])
    sig = model._sigmas[idx].copy()
    mu = model._mus[idx].copy()
    wa = np.einsum("ki,ki->k", W, anchors)
    # Residuals are summed over rows; these weights express them per row and
    # per unit of the constrained statistic, which is the scale on which the
    # caller's parameter-delta test operates.
    w_loc = 1.0 / (nloc * (1.0 + np.max(np.abs(targets_loc), axis=1)))
    w_spr = 1.0 / targets_spr

    def residuals(sig_t: np.ndarray, mu_t: np.ndarray) -> tuple:
        r_loc = np.einsum("lb,b,bi->li", cl, n_t, mu_t) - nloc[:, None] * targets_loc
        c = np.einsum("ki,bki->bk", W, anchors[None, :, :] - mu_t[:, None, :])
        s_diag = np.einsum("bij,ki,kj->bk", sig_t, W, W)
        r_spr = np.einsum("kb,b,bk->k", cs, n_t, s_diag + c * c) - targets_spr
        return r_loc, r_spr, c

    def merit(r_loc: np.ndarray, r_spr: np.ndarray) -> float:
        return float(np.sum((r_loc * w_loc[:, None]) ** 2) + np.sum((r_spr * w_spr) ** 2))

    def build() -> BackgroundModel:
        new_blocks = list(model.blocks)
        for pos, j in enumerate(idx):
            b = model.blocks[j]
            new_blocks[j] = GaussianBlock(
                b.members,
                (prec[pos] + prec[pos].T) / 2.0,
                shift[pos],
                mu[pos],
                sig[pos],
            )
        return replace(model, blocks=tuple(new_blocks))

    r_loc, r_spr, c = residuals(sig, mu)
    phi = merit(r_loc, r_spr)
    # Normalized residuals of 1e-12 leave the confirmation round a parameter
    # motion orders below its tolerance; 1e-22 on the squared merit is the
    # same bar for a line search that has hit the rounding floor.
    for _ in range(40):
        if (
            np.max(np.abs(r_loc * w_loc[:, None])) <= 1e-12
            and np.max(np.abs(r_spr * w_spr)) <= 1e-12
        ):
            return build()
        sw = np.einsum("bij,kj->bki", sig, W)
        s_kl = np.einsum("bki,li->bkl", sw, W)
        j_nn = np.einsum("lb,mb,b,bij->limj", cl, cl, n_t, sig).reshape(L * d, L * d)
        j_nl = np.einsum("lb,kb,b,bki,bk->lik", cl, cs, n_t, sw, c).reshape(L * d, K)
        j_ln = np.einsum("kb,mb,b,bk,bki->kmi", cs, cl, n_t, -2.0 * c, sw).reshape(K, L * d)
        pair = -(s_kl**2) - 2.0 * c[:, :, None] * s_kl * c[:, None, :]
        j_ll = np.einsum("kb,lb,b,bkl->kl", cs, cs, n_t, pair)
        jac = np.block([[j_nn, j_nl], [j_ln, j_ll]])
        rhs = -np.concatenate([r_loc.reshape(-1), r_spr])
        # Redundant constraints make the Jacobian singular along directions
        # the residual cannot leave; the truncated minimum-norm step ignores
        # them instead of amplifying rounding noise.
        step = np.linalg.lstsq(jac, rhs, rcond=1e-10)[0]
        dnu = step[: L * d].reshape(L, d)
        dlam = step[L * d :]
        dprec = np.einsum("kb,k,ki,kj->bij", cs, dlam, W, W)
        dshift = np.einsum("lb,li->bi", cl, dnu) + np.einsum(
            "kb,k,k,ki->bi", cs, dlam, wa, W
        )
        alpha = 1.0
        for _ in range(30):
            prec_t = prec + alpha * dprec
            try:
                np.linalg.cholesky(prec_t)
            except np.linalg.LinAlgError:
                alpha *= 0.5
                continue
            shift_t = shift + alpha * dshift
            sig_t = np.linalg.inv(prec_t)
            sig_t = (sig_t + np.transpose(sig_t, (0, 2, 1))) / 2.0
            mu_t = np.einsum("bij,bj->bi", sig_t, shift_t)
            # A factorization that squeaked past the definiteness check can
            # still blow up the inverse; treat that like a failed step.
            if not np.all(np.isfinite(mu_t)) or np.max(np.abs(mu_t)) > 1e9:
                alpha *= 0.5
                continue
            r_loc_t, r_spr_t, c_t = residuals(sig_t, mu_t)
            phi_t = merit(r_loc_t, r_spr_t)
            if phi_t <= (1.0 - 1e-4 * alpha) * phi:
                prec, shift, sig, mu = prec_t, shift_t, sig_t, mu_t
                r_loc, r_spr, c, phi = r_loc_t, r_spr_t, c_t, phi_t
                break
            alpha *= 0.5
        else:
            return build() if phi <= 1e-22 else None
    return build() if phi <= 1e-22 else None


def _spread_multiplier(
    sizes: np.ndarray, s: np.ndarray, q: np.ndarray, target: float
) -> float:
    """Root of the spread feasibility equation in the multiplier lambda.

    h(lam) = sum_b n_b [ s_b/(1+lam s_b) + q_b/(1+lam s_b)^2 ] - target is
    strictly decreasing on (lam_min, inf) with lam_min = -1/max(s), running
    from +inf down to -target, so the root is unique. Bracket geometrically,
    bisect to 1e-12, then polish with two Newton steps.

    Directional variances that have collapsed to the rounding floor come in
    as zero or slightly negative; they are clamped so the equation stays
    monotone, and the multiplier is capped where the collapse factor stops
    being representable. A capped constraint is left slightly unmet rather
    than driving the arithmetic past the floating-point range.
    """
    s = np.maximum(s, 0.0)
    s_max = float(np.max(s))
    if s_max == 0.0:
        # Every covered block is already collapsed along the direction, so
        # the expectation no longer responds to the multiplier.
        return 0.0
    lam_cap = 1e12 / s_max

    def h(lam: float) -> float:
        t = 1.0 + lam * s
        return float(sizes @ (s / t + q / t**2) - target)

    def dh(lam: float) -> float:
        t = 1.0 + lam * s
        return float(sizes @ (-(s / t) ** 2 - 2.0 * q * s / t**3))

    lam_min = -1.0 / s_max
    h0 = h(0.0)
    if h0 > 0.0:
        lo, hi = 0.0, max(1.0, -lam_min)
        for _ in range(200):
            if h(hi) < 0.0 or hi >= lam_cap:
                break
            hi *= 2.0
        if h(hi) >= 0.0:
            # The target sits below what a representable collapse reaches.
            return min(hi, lam_cap)
    else:
        hi = 0.0
        delta = 0.5 * -lam_min
        for _ in range(200):
            if h(lam_min + delta) > 0.0:
                break
            delta *= 0.5
        else:
            raise RootBracketError(
                f"no sign change near the domain edge {lam_min}; target = {target}"
            )
        lo = lam_min + delta
    for _ in range(200):
        if hi - lo <= 1e-12:
            break
        mid = 0.5 * (lo + hi)
        if h(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    # Monotone decreasing across the final bracket by construction.
    assert h(lo) >= 0.0 >= h(hi), "root bracket lost its sign change"
    lam = 0.5 * (lo + hi)
    for _ in range(2):
        slope = dh(lam)
        if slope == 0.0:
            break
        step = lam - h(lam) / slope
        if step > lam_min:
            lam = step
    return lam


def apply_spread_constraint(model: BackgroundModel, pattern: SpreadPattern) -> BackgroundModel:
    """Move the belief to the KL-closest state whose expected directional spread
    (about the subgroup's recorded empirical mean) equals the pattern's variance.

    Rank-one update per inside block: precision += lam w w', shift += lam (w'a) w,
    with the moment form updated by the matching Sherman-Morrison expressions.
    The anchor a is the mean recorded by the matching location pattern, which
    must already be in the history.
    """
    ext = pattern.extension
    w = pattern.direction
    refined = refine_blocks(model, ext)
    anchor_pattern = refined.find_location(ext)
    if anchor_pattern is None:
        raise ConstraintOrderError(
            "spread constraint applied before the location constraint for the same subgroup"
        )
    anchor = anchor_pattern.mean
    history = _with_pattern(refined.history, pattern)
    counts = refined.block_counts(ext)
    size = len(ext)
    inside = np.flatnonzero(counts)
    sizes = counts[inside].astype(float)
    sigmas = refined._sigmas[inside]
    mus = refined._mus[inside]
    s = np.einsum("bij,i,j->b", sigmas, w, w)
    d = (anchor - mus) @ w
    q = d**2
    target = size * pattern.variance
    current = float(sizes @ (s + q))
    if pattern.variance > 0 and abs(current - target) <= 1e-10 * target:
        return replace(refined, history=history)
    lam = _spread_multiplier(sizes, s, q, target)

    new_blocks = list(refined.blocks)
    ww = np.outer(w, w)
    for pos, j in enumerate(inside):
        b = refined.blocks[j]
        t = 1.0 + lam * s[pos]
        precision_new = b.precision + lam * ww
        precision_new = (precision_new + precision_new.T) / 2.0
        shift_new = b.shift + lam * float(w @ anchor) * w
        if lam > 0.0 and s[pos] <= 0.0:
            # The block's variance along w already sits at the rounding
            # floor, where the stored moment form can carry a junk negative;
            # Sherman-Morrison on it would explode, so rebuild the moments
            # from the natural form instead.
            sigma_new = _spd_inverse(precision_new, "updated precision")
            mu_new = sigma_new @ shift_new
        else:
            if t <= 0.0:
                raise RootBracketError("multiplier left the positive-definite domain")
            sw = b.sigma @ w
            sigma_new = b.sigma - (lam / t) * np.outer(sw, sw)
            sigma_new = (sigma_new + sigma_new.T) / 2.0
            mu_new = b.mu + (lam * d[pos] / t) * sw
        new_blocks[j] = GaussianBlock(
            b.members,
            precision_new,
            shift_new,
            mu_new,
            sigma_new,
        )
    return BackgroundModel(tuple(new_blocks), refined.d_y, refined.n, history)


def _param_delta(before: BackgroundModel, after: BackgroundModel) -> float:
    if len(before.blocks) != len(after.blocks):
        return math.inf
    delta = 0.0
    for a, b in zip(before.blocks, after.blocks):
        if a.size != b.size or a.members[0] != b.members[0]:
            return math.inf
        delta = max(delta, float(np.max(np.abs(a.mu - b.mu))))
        delta = max(delta, float(np.max(np.abs(a.sigma - b.sigma))))
    return delta


def _check_order(patterns: Sequence[Pattern]) -> None:
    seen: set[bytes] = set()
    for p in patterns:
        if isinstance(p, LocationPattern):
            seen.add(p.extension.key())
        elif p.extension.key() not in seen:
            raise ConstraintOrderError(
                "spread pattern listed before a location pattern for the same subgroup"
            )


def assimilate(
    model: BackgroundModel,
    patterns: Sequence[Pattern],
    tol: float = 1e-9,
    max_rounds: int = 100,
) -> AssimilationResult:
    """Enforce the new patterns jointly with everything already in the history.

    Coordinate descent over constraint groups: each round takes one exact
    joint mean step for all location constraints, then re-applies every
    spread constraint in order, until a full round moves no block parameter
    by more than tol. ``rounds`` counts the rounds that changed something,
    so two patterns with disjoint extensions report 1. When cycling is still
    moving after a few rounds the loop hands the whole multiplier stack to a
    joint Newton solve and uses the next round to confirm the fixed point.
    """
    sequence: list[Pattern] = list(model.history)
    known = {p.key() for p in sequence}
    for p in patterns:
        if p.key() not in known:
            sequence.append(p)
            known.add(p.key())
    if not sequence:
        return AssimilationResult(model, 0, True)
    _check_order(sequence)
    locations = [p for p in sequence if isinstance(p, LocationPattern)]
    spreads = [p for p in sequence if not isinstance(p, LocationPattern)]
    current = model
    rounds = 0
    for _ in range(max_rounds):
        nxt = current
        if locations:
            nxt = _apply_locations_jointly(nxt, locations)
        for p in spreads:
            nxt = apply_spread_constraint(nxt, p)
        delta = _param_delta(current, nxt)
        current = nxt
        if delta <= tol:
            current = replace(current, history=tuple(sequence))
            return AssimilationResult(current, rounds, True)
        rounds += 1
        if spreads and rounds >= 2 and (rounds - 2) % 3 == 0:
            refined = _newton_refine(current, locations, spreads)
            if refined is not None:
                current = refined
    warnings.warn(
        f"assimilation did not converge in {max_rounds} rounds (last delta {delta:.3e})",
        RuntimeWarning,
        stacklevel=2,
    )
    return AssimilationResult(replace(current, history=tuple(sequence)), rounds, False)


# ---------------------------------------------------------------------------
# Serialization (floats survive JSON round-trips exactly via repr semantics)


def _condition_to_dict(c, dataset: Dataset) -> dict:
    return {"attribute": dataset.schema[c.attribute].name, "op": c.op.value, "value": c.value}


def _condition_from_dict(d: dict, dataset: Dataset):
    from .data import Condition, Op

    return Condition(dataset.index_of(d["attribute"]), Op(d["op"]), d["value"])


def _intention_to_list(intention: Intention, dataset: Dataset) -> list:
    return [_condition_to_dict(c, dataset) for c in intention.conditions]


def _intention_from_list(items: list, dataset: Dataset) -> Intention:
    return Intention(tuple(_condition_from_dict(d, dataset) for d in items))


def pattern_to_dict(pattern: Pattern, dataset: Dataset) -> dict:
    base = {
        "kind": pattern.kind,
        "conditions": _intention_to_list(pattern.intention, dataset),
        "indices": [int(i) for i in pattern.extension.indices],
    }
    if isinstance(pattern, LocationPattern):
        base["mean"] = [float(v) for v in pattern.mean]
    else:
        base["direction"] = [float(v) for v in pattern.direction]
        base["variance"] = float(pattern.variance)
    return base


def pattern_from_dict(d: dict, dataset: Dataset) -> Pattern:
    intention = _intention_from_list(d["conditions"], dataset)
    ext = Extension(np.asarray(d["indices"], dtype=np.int64))
    if d["kind"] == "location":
        return LocationPattern(intention, ext, np.asarray(d["mean"], dtype=float))
    if d["kind"] == "spread":
        return SpreadPattern(intention, ext, np.asarray(d["direction"], dtype=float), d["variance"])
    raise ModelError(f"unknown pattern kind {d.get('kind')!r}")


def _matrix(rows) -> np.ndarray:
    return np.asarray(rows, dtype=float)


def model_to_dict(model: BackgroundModel, dataset: Dataset) -> dict:
    """Both parameterizations go into the payload: loading re-uses the stored
    arrays instead of re-inverting, so save/load round trips are bit-exact."""
    return {
        "d_y": model.d_y,
        "n": model.n,
        "blocks": [
            {
                "members": [int(i) for i in b.members],
                "mu": [float(v) for v in b.mu],
                "sigma": [[float(v) for v in row] for row in b.sigma],
                "precision": [[float(v) for v in row] for row in b.precision],
                "shift": [float(v) for v in b.shift],
            }
            for b in model.blocks
        ],
        "history": [pattern_to_dict(p, dataset) for p in model.history],
    }


def model_from_dict(d: dict, dataset: Dataset) -> BackgroundModel:
    blocks = []
    for bd in d["blocks"]:
        members = np.asarray(bd["members"], dtype=np.int64)
        mu = np.asarray(bd["mu"], dtype=float)
        sigma = _matrix(bd["sigma"])
        eigs = np.linalg.eigvalsh(sigma)
        if eigs.min() <= 0.0:
            raise NotPositiveDefiniteError(
                f"stored block covariance is not positive definite (min eigenvalue {eigs.min():.3e})"
            )
        if "precision" in bd:
            precision = _matrix(bd["precision"])
            shift = np.asarray(bd["shift"], dtype=float)
            gap = float(np.max(np.abs(precision @ sigma - np.eye(len(sigma)))))
            if gap > 1e-6:
                raise ModelError(
                    f"stored parameterizations disagree (|precision @ sigma - I| = {gap:.3e})"
                )
            blocks.append(GaussianBlock(members, precision, shift, mu, sigma))
        else:
            blocks.append(GaussianBlock.from_moments(members, mu, sigma))
    history = tuple(pattern_from_dict(pd, dataset) for pd in d.get("history", []))
    return BackgroundModel(tuple(blocks), int(d["d_y"]), int(d["n"]), history)
