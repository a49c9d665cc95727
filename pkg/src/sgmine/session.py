"""Interactive mining sessions: mine, inspect, assimilate, persist, replay.

A session owns an immutable dataset, the evolving belief model, a cache of the
last mined candidates (addressed by content-hash ids), and wall-clock timings
for every model update.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional, Sequence, Union

import numpy as np
from scipy.stats import norm

from .data import (
    Dataset,
    Extension,
    Intention,
    flip_noise,
    generate_synthetic,
    load_csv,
    subgroup_spread,
)
from .model import (
    BackgroundModel,
    LocationPattern,
    Pattern,
    SpreadPattern,
    assimilate,
    expected_spread,
    init_background,
    mean_marginal,
    model_from_dict,
    model_to_dict,
    pattern_from_dict,
    pattern_to_dict,
)
from .scoring import (
    DlParams,
    ScoreBreakdown,
    description_length,
    gaussian_ic,
    si_spread,
)
from .search import RankedPattern, SearchParams, beam_search
from .spreadopt import optimize_direction, optimize_direction_2sparse

__all__ = [
    "SessionError",
    "StaleIdError",
    "OrderingError",
    "DatasetRef",
    "CandidateRecord",
    "TimingRecord",
    "PatternDetail",
    "Session",
    "pattern_id",
    "mine_next",
    "assimilate_choice",
    "pattern_detail",
    "save_session",
    "load_session",
    "replay_model",
]

SCHEMA_VERSION = 1

MiningKind = Literal["location", "spread"]


class SessionError(ValueError):
    """Invalid session operation or state."""


class StaleIdError(SessionError):
    """The pattern id is not in the current candidate cache or history."""


class OrderingError(SessionError):
    """Spread mining requested before a location pattern was assimilated."""


@dataclass(frozen=True)
class DatasetRef:
    """Recipe for reconstructing a dataset: synthetic seed or CSV + schema."""

    kind: str
    seed: int = 0
    flip_probability: float = 0.0
    flip_seed: int = 0
    path: Optional[str] = None
    schema_config: Optional[dict] = None

    def resolve(self) -> Dataset:
        if self.kind == "synthetic":
            data = generate_synthetic(self.seed)
            if self.flip_probability > 0.0:
                data = flip_noise(data, self.flip_probability, self.flip_seed)
            return data
        if self.kind == "csv":
            if not self.path or self.schema_config is None:
                raise SessionError("csv dataset reference needs a path and a schema config")
            return load_csv(self.path, self.schema_config)
        raise SessionError(f"unknown dataset reference kind {self.kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "synthetic":
            return {
                "kind": "synthetic",
                "seed": self.seed,
                "flip_probability": self.flip_probability,
                "flip_seed": self.flip_seed,
            }
        return {"kind": "csv", "path": self.path, "schema_config": self.schema_config}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetRef":
        if d.get("kind") == "synthetic":
            return cls(
                "synthetic",
                seed=int(d.get("seed", 0)),
                flip_probability=float(d.get("flip_probability", 0.0)),
                flip_seed=int(d.get("flip_seed", 0)),
            )
        if d.get("kind") == "csv":
            return cls("csv", path=d["path"], schema_config=d.get("schema_config", {}))
        raise SessionError(f"unknown dataset reference kind {d.get('kind')!r}")


@dataclass(frozen=True)
class CandidateRecord:
    """A mined pattern with its id, score, and search depth."""

    id: str
    kind: MiningKind
    pattern: Pattern
    score: ScoreBreakdown
    depth: int


@dataclass(frozen=True)
class TimingRecord:
    """Wall-clock cost of one model update."""

    iteration: int
    kind: MiningKind
    seconds: float
    rounds: int


@dataclass(frozen=True)
class AttributeDetail:
    name: str
    expected_mean: float
    ci_low: float
    ci_high: float
    observed_mean: float
    si: float


@dataclass(frozen=True)
class PatternDetail:
    """Everything a reviewer needs to judge one candidate."""

    id: str
    kind: MiningKind
    description: str
    coverage: int
    score: ScoreBreakdown
    attributes: tuple[AttributeDetail, ...]
    direction: Optional[tuple[float, ...]] = None
    expected_variance: Optional[float] = None
    observed_variance: Optional[float] = None
    cdf_grid: Optional[tuple[float, ...]] = None
    cdf_model: Optional[tuple[float, ...]] = None
    cdf_subgroup: Optional[tuple[float, ...]] = None


def pattern_id(pattern: Pattern, dataset: Dataset) -> str:
    """Stable content hash of (intention, kind, direction)."""
    payload: dict = {
        "kind": pattern.kind,
        "conditions": [
            {"attribute": dataset.schema[c.attribute].name, "op": c.op.value, "value": c.value}
            for c in sorted(pattern.intention.conditions, key=lambda c: c.sort_key())
        ],
    }
    if isinstance(pattern, SpreadPattern):
        payload["direction"] = [repr(float(v)) for v in pattern.direction]
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class Session:
    """Mutable orchestration state around the immutable dataset and model."""

    dataset: Dataset
    dataset_ref: DatasetRef
    model: BackgroundModel
    prior_mean: np.ndarray
    prior_cov: np.ndarray
    gamma: float = 0.1
    eta: float = 1.0
    seed: int = 0
    iteration: int = 0
    candidate_cache: dict = field(default_factory=dict)
    known: dict = field(default_factory=dict)
    assimilated: list = field(default_factory=list)
    timings: list = field(default_factory=list)
    spread_anchor: Optional[LocationPattern] = None

    @property
    def dl_params(self) -> DlParams:
        return DlParams(self.gamma, self.eta)

    @classmethod
    def create(
        cls,
        dataset_ref: DatasetRef,
        gamma: float = 0.1,
        eta: float = 1.0,
        seed: int = 0,
        prior: Optional[tuple[np.ndarray, np.ndarray]] = None,
    ) -> "Session":
        dataset = dataset_ref.resolve()
        mu, cov = prior if prior is not None else dataset.empirical_prior()
        model = init_background(mu, cov, dataset.n)
        return cls(dataset, dataset_ref, model, np.asarray(mu, float), np.asarray(cov, float),
                   gamma=gamma, eta=eta, seed=seed)

    def reset(self) -> None:
        """Back to the prior: forgets every assimilation and cached candidate."""
        self.model = init_background(self.prior_mean, self.prior_cov, self.dataset.n)
        self.iteration = 0
        self.candidate_cache.clear()
        self.known.clear()
        self.assimilated.clear()
        self.timings.clear()
        self.spread_anchor = None


def mine_next(
    session: Session,
    kind: MiningKind = "location",
    params: SearchParams = SearchParams(),
    two_sparse: bool = False,
) -> list[CandidateRecord]:
    """Rank fresh candidates under the current model and cache them by id.

    Pure in the model: calling twice without assimilating returns the same
    ranking. Spread mining requires a location pattern assimilated this
    iteration; the direction search runs for that same subgroup.
    """
    if kind == "location":
        ranked = beam_search(session.dataset, session.model, params, session.dl_params)
        records = [
            CandidateRecord(
                pattern_id(rp.pattern, session.dataset), "location", rp.pattern, rp.score, rp.depth
            )
            for rp in ranked
        ]
    elif kind == "spread":
        anchor = session.spread_anchor
        if anchor is None:
            raise OrderingError("assimilate a location pattern before mining its spread")
        optimizer = optimize_direction_2sparse if two_sparse else optimize_direction
        result = optimizer(
            session.model,
            session.dataset,
            anchor.extension,
            anchor.intention,
            seed=session.seed,
            dl_params=session.dl_params,
        )
        variance = subgroup_spread(session.dataset, anchor.extension, result.w)
        pattern = SpreadPattern(anchor.intention, anchor.extension, result.w, variance)
        score = si_spread(
            session.model, anchor.extension, result.w, variance, anchor.intention, session.dl_params
        )
        records = [
            CandidateRecord(
                pattern_id(pattern, session.dataset),
                "spread",
                pattern,
                score,
                len(anchor.intention),
            )
        ]
    else:
        raise SessionError(f"unknown mining kind {kind!r}")
    session.candidate_cache = {rec.id: rec for rec in records}
    session.known.update(session.candidate_cache)
    return records


def assimilate_choice(session: Session, chosen_id: str) -> TimingRecord:
    """Fold the chosen cached candidate into the belief model.

    Location choices advance the iteration counter and become the anchor for
    spread mining; spread choices consume the anchor. The candidate cache is
    invalidated either way.
    """
    record = session.candidate_cache.get(chosen_id)
    if record is None:
        raise StaleIdError(f"pattern id {chosen_id!r} is not in the current candidate cache")
    if any(p.key() == record.pattern.key() for p in session.model.history):
        raise StaleIdError(f"pattern {chosen_id!r} was already assimilated")
    start = time.perf_counter()
    result = assimilate(session.model, [record.pattern])
    elapsed = time.perf_counter() - start
    session.model = result.model
    if record.kind == "location":
        session.iteration += 1
        session.spread_anchor = record.pattern
    else:
        session.spread_anchor = None
    session.assimilated.append(record.id)
    timing = TimingRecord(session.iteration, record.kind, elapsed, result.rounds)
    session.timings.append(timing)
    session.candidate_cache = {}
    return timing


CDF_GRID_POINTS = 201
CI_Z = 1.959963984540054  # two-sided 95% normal quantile


def pattern_detail(session: Session, chosen_id: str) -> PatternDetail:
    """Expected-versus-observed views for one known pattern id, under the
    current model. Attributes are ranked by their one-dimensional surprise."""
    record = session.known.get(chosen_id)
    if record is None:
        raise StaleIdError(f"pattern id {chosen_id!r} is unknown to this session")
    pattern = record.pattern
    ext = pattern.extension
    mu, cov = mean_marginal(session.model, ext)
    observed = session.dataset.targets[ext.indices].mean(axis=0)
    dl = description_length(pattern.intention, record.kind, session.dl_params)
    attrs = []
    for j, name in enumerate(session.dataset.target_names):
        sd = math.sqrt(cov[j, j])
        ic_j = gaussian_ic(observed[j], mu[j], np.array([[cov[j, j]]]))
        attrs.append(
            AttributeDetail(
                name=name,
                expected_mean=float(mu[j]),
                ci_low=float(mu[j] - CI_Z * sd),
                ci_high=float(mu[j] + CI_Z * sd),
                observed_mean=float(observed[j]),
                si=ic_j / dl,
            )
        )
    attrs.sort(key=lambda a: -a.si)
    detail = dict(
        id=record.id,
        kind=record.kind,
        description=pattern.intention.describe(session.dataset),
        coverage=len(ext),
        score=record.score,
        attributes=tuple(attrs),
    )
    if isinstance(pattern, SpreadPattern):
        w = pattern.direction
        anchor = observed
        exp_var = expected_spread(session.model, ext, w, anchor)
        center = float(anchor @ w)
        sd = math.sqrt(max(exp_var, pattern.variance))
        grid = np.linspace(center - 4.0 * sd, center + 4.0 * sd, CDF_GRID_POINTS)
        counts = session.model.block_counts(ext)
        inside = np.flatnonzero(counts)
        means = session.model._mus[inside] @ w
        sds = np.sqrt(np.einsum("bij,i,j->b", session.model._sigmas[inside], w, w))
        weights = counts[inside] / len(ext)
        cdf_model = (weights[None, :] * norm.cdf((grid[:, None] - means) / sds)).sum(axis=1)
        proj = np.sort(session.dataset.targets[ext.indices] @ w)
        cdf_sub = np.searchsorted(proj, grid, side="right") / len(ext)
        detail.update(
            direction=tuple(float(v) for v in w),
            expected_variance=float(exp_var),
            observed_variance=float(pattern.variance),
            cdf_grid=tuple(float(v) for v in grid),
            cdf_model=tuple(float(v) for v in cdf_model),
            cdf_subgroup=tuple(float(v) for v in cdf_sub),
        )
    return PatternDetail(**detail)


# ---------------------------------------------------------------------------
# Persistence


def _record_to_dict(record: CandidateRecord, dataset: Dataset) -> dict:
    return {
        "id": record.id,
        "kind": record.kind,
        "pattern": pattern_to_dict(record.pattern, dataset),
        "score": {"ic": record.score.ic, "dl": record.score.dl, "si": record.score.si},
        "depth": record.depth,
    }


def _record_from_dict(d: dict, dataset: Dataset) -> CandidateRecord:
    score = d["score"]
    return CandidateRecord(
        d["id"],
        d["kind"],
        pattern_from_dict(d["pattern"], dataset),
        ScoreBreakdown(score["ic"], score["dl"], score["si"]),
        int(d["depth"]),
    )


def session_to_dict(session: Session) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "dataset": session.dataset_ref.to_dict(),
        "gamma": session.gamma,
        "eta": session.eta,
        "seed": session.seed,
        "prior": {
            "mean": [float(v) for v in session.prior_mean],
            "covariance": [[float(v) for v in row] for row in session.prior_cov],
        },
        "iteration": session.iteration,
        "assimilated": list(session.assimilated),
        "spread_anchor": (
            None
            if session.spread_anchor is None
            else pattern_id(session.spread_anchor, session.dataset)
        ),
        "model": model_to_dict(session.model, session.dataset),
        "known": [_record_to_dict(r, session.dataset) for r in session.known.values()],
        "candidates": [_record_to_dict(r, session.dataset) for r in session.candidate_cache.values()],
        "timings": [
            {"iteration": t.iteration, "kind": t.kind, "seconds": t.seconds, "rounds": t.rounds}
            for t in session.timings
        ],
    }


def session_from_dict(d: dict) -> Session:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise SessionError(f"unsupported session schema version {d.get('schema_version')!r}")
    ref = DatasetRef.from_dict(d["dataset"])
    dataset = ref.resolve()
    model = model_from_dict(d["model"], dataset)
    session = Session(
        dataset=dataset,
        dataset_ref=ref,
        model=model,
        prior_mean=np.asarray(d["prior"]["mean"], dtype=float),
        prior_cov=np.asarray(d["prior"]["covariance"], dtype=float),
        gamma=float(d["gamma"]),
        eta=float(d["eta"]),
        seed=int(d["seed"]),
        iteration=int(d["iteration"]),
    )
    session.known = {r["id"]: _record_from_dict(r, dataset) for r in d.get("known", [])}
    session.candidate_cache = {
        r["id"]: _record_from_dict(r, dataset) for r in d.get("candidates", [])
    }
    session.assimilated = list(d.get("assimilated", []))
    session.timings = [
        TimingRecord(int(t["iteration"]), t["kind"], float(t["seconds"]), int(t["rounds"]))
        for t in d.get("timings", [])
    ]
    anchor_id = d.get("spread_anchor")
    if anchor_id is not None:
        rec = session.known.get(anchor_id)
        if rec is None or rec.kind != "location":
            raise SessionError("spread anchor id does not resolve to a known location pattern")
        session.spread_anchor = rec.pattern

    # Consistency: history must match the assimilated ids, in order.
    want = [session.known[i].pattern.key() for i in session.assimilated if i in session.known]
    got = [p.key() for p in model.history]
    if want != got or len(session.assimilated) != len(model.history):
        raise SessionError("stored history does not match the assimilated pattern ids")
    locations = sum(1 for i in session.assimilated if session.known[i].kind == "location")
    if locations != session.iteration:
        raise SessionError("stored iteration counter does not match the history")
    return session


def save_session(session: Session, path: Union[str, Path]) -> None:
    """Serialize to JSON; deterministic, so save-load-save is byte-identical."""
    blob = json.dumps(session_to_dict(session), sort_keys=True, indent=1)
    Path(path).write_text(blob + "\n", encoding="utf-8")


def load_session(path: Union[str, Path]) -> Session:
    with open(path, encoding="utf-8") as fh:
        return session_from_dict(json.load(fh))


def replay_model(session: Session) -> BackgroundModel:
    """Rebuild the model by re-assimilating the history from the stored prior."""
    model = init_background(session.prior_mean, session.prior_cov, session.dataset.n)
    for pattern in session.model.history:
        model = assimilate(model, [pattern]).model
    return model
