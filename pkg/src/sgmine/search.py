"""Beam search over conjunctive subgroup descriptions, ranked by interestingness.

Candidates are single conditions: quantile-split inequalities on numeric
descriptors and per-category equalities otherwise. Level-wise expansion keeps
the best beam_width intentions per depth while logging the globally best
patterns seen anywhere, deduplicated by extension.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import (
    Condition,
    Dataset,
    Extension,
    Intention,
    Kind,
    Op,
    condition_mask,
    evaluate_intention,
    subgroup_mean,
)
from .model import BackgroundModel, LocationPattern
from .scoring import DlParams, ScoreBreakdown, si_location

__all__ = [
    "SearchParams",
    "RankedPattern",
    "candidate_conditions",
    "evaluate_candidate",
    "beam_search",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchParams:
    """Beam search knobs. Defaults favor breadth over depth."""

    beam_width: int = 40
    max_depth: int = 4
    num_split_points: int = 4
    top_log: int = 150
    time_limit: float = 300.0
    min_coverage: int = 2

    def __post_init__(self) -> None:
        if min(self.beam_width, self.max_depth, self.num_split_points, self.top_log) < 1:
            raise ValueError("beam parameters must be positive")
        if self.min_coverage < 2:
            raise ValueError("min_coverage must be at least 2")
        if self.time_limit <= 0.0:
            raise ValueError("time limit must be positive")


@dataclass(frozen=True)
class RankedPattern:
    """A scored location pattern at the depth it was found."""

    pattern: LocationPattern
    score: ScoreBreakdown
    depth: int

    def order_key(self) -> tuple:
        # Descending si, then cheaper descriptions, then a stable lexicographic
        # tie-break so equal scores never depend on traversal order.
        return (-self.score.si, len(self.pattern.intention), self.pattern.intention.canonical())


def _nearest_rank_splits(values: np.ndarray, k: int) -> list[float]:
    """k nearest-rank quantile values at i/(k+1), duplicates collapsed."""
    clean = np.sort(values[~np.isnan(values)])
    if clean.size == 0:
        return []
    out: list[float] = []
    for i in range(1, k + 1):
        rank = math.ceil(i * clean.size / (k + 1))
        v = float(clean[max(rank, 1) - 1])
        if not out or v != out[-1]:
            out.append(v)
    return out


def candidate_conditions(dataset: Dataset, params: SearchParams = SearchParams()) -> list[Condition]:
    """All single conditions worth trying, in deterministic schema order.

    Conditions whose extension is the whole dataset or empty are dropped;
    a constant column therefore contributes nothing.
    """
    out: list[Condition] = []
    for idx in dataset.descriptor_indices:
        attr = dataset.schema[idx]
        col = dataset.columns[idx]
        if attr.kind is Kind.NUMERIC:
            for v in _nearest_rank_splits(col, params.num_split_points):
                out.extend((Condition(idx, Op.LE, v), Condition(idx, Op.GE, v)))
        else:
            observed = sorted({v for v in col if v is not None})
            out.extend(Condition(idx, Op.EQ, v) for v in observed)
    useful = []
    for cond in out:
        mask = condition_mask(dataset, cond)
        covered = int(mask.sum())
        if 0 < covered < dataset.n:
            useful.append(cond)
    return useful


def evaluate_candidate(
    dataset: Dataset,
    model: BackgroundModel,
    intention: Intention,
    params: SearchParams = SearchParams(),
    dl_params: DlParams = DlParams(),
) -> Optional[RankedPattern]:
    """Score one intention, or None when it covers fewer than min_coverage rows."""
    ext = evaluate_intention(dataset, intention)
    if len(ext) < params.min_coverage:
        return None
    return _score_extension(dataset, model, intention, ext, dl_params)


def _score_extension(
    dataset: Dataset,
    model: BackgroundModel,
    intention: Intention,
    ext: Extension,
    dl_params: DlParams,
) -> RankedPattern:
    mean = subgroup_mean(dataset, ext)
    pattern = LocationPattern(intention, ext, mean)
    score = si_location(model, ext, mean, intention, dl_params)
    return RankedPattern(pattern, score, len(intention))


def _can_extend(intention: Intention, cond: Condition) -> bool:
    """Refinement policy: never touch an equality-bound attribute again, keep at
    most one bound per direction, and never create an empty interval."""
    for c in intention.conditions:
        if c.attribute != cond.attribute:
            continue
        if c.op is Op.EQ or cond.op is Op.EQ:
            return False
        if c.op is cond.op:
            return False
        lo = cond.value if cond.op is Op.GE else c.value
        hi = cond.value if cond.op is Op.LE else c.value
        if lo > hi:
            return False
    return True


def _better(a: RankedPattern, b: RankedPattern) -> RankedPattern:
    return a if a.order_key() <= b.order_key() else b


def beam_search(
    dataset: Dataset,
    model: BackgroundModel,
    params: SearchParams = SearchParams(),
    dl_params: DlParams = DlParams(),
) -> list[RankedPattern]:
    """Level-wise beam search; returns the global top patterns across depths.

    Deterministic for fixed inputs. Anytime: the time budget is checked between
    candidate evaluations and the best results so far are returned on expiry.
    """
    deadline = time.monotonic() + params.time_limit
    conds = candidate_conditions(dataset, params)
    masks = [condition_mask(dataset, c) for c in conds]
    best: dict[bytes, RankedPattern] = {}
    # Beam entries carry their row mask so child extensions are one AND away.
    beam: list[tuple[Intention, np.ndarray]] = [(Intention(), np.ones(dataset.n, dtype=bool))]
    out_of_time = False

    for _depth in range(params.max_depth):
        level: dict[bytes, RankedPattern] = {}
        level_masks: dict[bytes, np.ndarray] = {}
        for parent, parent_mask in beam:
            for cond, cond_mask in zip(conds, masks):
                if time.monotonic() > deadline:
                    out_of_time = True
                    break
                if not _can_extend(parent, cond):
                    continue
                child_mask = parent_mask & cond_mask
                indices = np.flatnonzero(child_mask)
                if indices.size < params.min_coverage:
                    continue
                ext = Extension(indices)
                ranked = _score_extension(dataset, model, parent.extend(cond), ext, dl_params)
                key = ext.key()
                if key in level:
                    ranked = _better(level[key], ranked)
                level[key] = ranked
                level_masks[key] = child_mask
                if key in best:
                    ranked = _better(best[key], ranked)
                best[key] = ranked
            if out_of_time:
                break
        if out_of_time or not level:
            break
        keep = sorted(level.values(), key=RankedPattern.order_key)[: params.beam_width]
        beam = [
            (rp.pattern.intention, level_masks[rp.pattern.extension.key()]) for rp in keep
        ]

    if not best:
        logger.warning("no candidate reached min_coverage %d", params.min_coverage)
    return sorted(best.values(), key=RankedPattern.order_key)[: params.top_log]
