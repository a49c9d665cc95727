"""Acceptance suite: one test per numbered acceptance criterion.

Each test pins a user-visible guarantee of the library at a stated
tolerance, end to end rather than unit by unit. The terminal summary
hook in conftest prints one PASS/FAIL line per criterion. Everything
here is headless: no test imports or requires the web client.
"""

from __future__ import annotations

import os
import statistics
import time
from pathlib import Path

import numpy as np
import numpy.testing as npt
import pytest
from scipy import stats

from conftest import make_dataset, random_dataset, random_extension
from reference_optim import kl_minimize
from sgmine import (
    Condition,
    Dataset,
    DatasetRef,
    Extension,
    Intention,
    LocationPattern,
    Op,
    SearchParams,
    Session,
    SpreadPattern,
    apply_location_constraint,
    apply_spread_constraint,
    assimilate,
    assimilate_choice,
    background_from_dataset,
    beam_search,
    chi2_combo_params,
    evaluate_intention,
    expected_spread,
    load_csv,
    load_session,
    mean_marginal,
    mine_next,
    optimize_direction,
    refine_blocks,
    save_session,
    si_location,
    subgroup_mean,
    subgroup_spread,
)
from sgmine.search import _nearest_rank_splits
from sgmine.session import replay_model
from sgmine.spreadopt import SpreadObjective


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _flag_extension(ds: Dataset, name: str) -> frozenset:
    i = [a.name for a in ds.schema].index(name)
    return frozenset(np.nonzero(ds.columns[i] == "1")[0].tolist())


# ------------------------------------------------------------ criterion 1


def test_criterion_01_constraint_satisfaction():
    """Every location update hits its mean to 1e-9 (sup norm) and every
    spread update its variance to 1e-8 relative, over 200 randomized
    instances with n <= 50 and up to 4 target dimensions, in under 10 s."""
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    for i in range(200):
        ds = random_dataset(rng)
        model = background_from_dataset(ds)
        if rng.random() < 0.4:
            # pre-split blocks so updates hit the general multi-block path
            other = LocationPattern.from_dataset(ds, Intention(), random_extension(rng, ds.n))
            model = apply_location_constraint(model, other)
        ext = random_extension(rng, ds.n)
        pat = LocationPattern.from_dataset(ds, Intention(), ext)
        model = apply_location_constraint(model, pat)
        mu, _ = mean_marginal(model, ext)
        assert float(np.max(np.abs(mu - pat.mean))) < 1e-9
        if i % 2 == 0:
            w = _unit(rng.normal(size=ds.d_y))
            spat = SpreadPattern.from_dataset(ds, Intention(), ext, w)
            model = apply_spread_constraint(model, spat)
            got = expected_spread(model, ext, w, pat.mean)
            assert abs(got - spat.variance) / spat.variance < 1e-8
    assert time.perf_counter() - t0 < 10.0


# ------------------------------------------------------------ criterion 2


def test_criterion_02_updates_are_kl_projections():
    """Analytic updates match a generic numeric KL minimizer over all block
    parameters: 20 small instances, 1e-5 for location and 1e-4 for spread."""
    rng = np.random.default_rng(202)
    for i in range(20):
        n = int(rng.integers(8, 21))
        d = int(rng.integers(1, 4))
        ds = random_dataset(rng, n=n, d=d)
        ext = random_extension(rng, n)
        if i % 2 == 0:
            model = background_from_dataset(ds)
            if rng.random() < 0.5:
                model = refine_blocks(model, random_extension(rng, n))
            model = refine_blocks(model, ext)
            pat = LocationPattern.from_dataset(ds, Intention(), ext)
            analytic = apply_location_constraint(model, pat)
            ref_mus, ref_sigmas = kl_minimize(model, ext, "mean", pat.mean)
            tol = 1e-5
        else:
            base = background_from_dataset(ds)
            model = apply_location_constraint(
                base, LocationPattern.from_dataset(ds, Intention(), ext)
            )
            w = _unit(rng.normal(size=d))
            pat = SpreadPattern.from_dataset(ds, Intention(), ext, w)
            analytic = apply_spread_constraint(model, pat)
            ref_mus, ref_sigmas = kl_minimize(
                model, ext, "spread", pat.variance, w=w, anchor=subgroup_mean(ds, ext)
            )
            tol = 1e-4
        for b, block in enumerate(analytic.blocks):
            npt.assert_allclose(block.mu, ref_mus[b], atol=tol)
            npt.assert_allclose(block.sigma, ref_sigmas[b], atol=tol)


# ------------------------------------------------------------ criterion 3


def _profile_ks(variances: np.ndarray, rng: np.random.Generator, rows: int = 40) -> float:
    """KS distance between the affine chi-squared fit and a Monte-Carlo of the
    projected-variance statistic for a subgroup of ``rows`` rows split
    near-evenly into blocks with the given directional variances. Within a
    block the sum of iid chi2_1 draws is sampled exactly as one chi2_{n_b}."""
    k = len(variances)
    sizes = np.full(k, rows // k)
    sizes[: rows % k] += 1
    coeffs = np.concatenate([np.full(n_b, v) for n_b, v in zip(sizes, variances)]) / rows
    combo = chi2_combo_params(coeffs)
    draws = sum(
        v / rows * rng.chisquare(int(n_b), size=1_000_000)
        for n_b, v in zip(sizes, variances)
    )
    draws.sort()
    grid = stats.chi2.cdf((draws - combo.beta) / combo.alpha, df=combo.m)
    ranks = np.arange(1, draws.size + 1) / draws.size
    return float(max(np.abs(grid - ranks).max(), np.abs(grid - ranks + 1 / draws.size).max()))


def test_criterion_03_chi2_combination_fit():
    """Three-cumulant fit of a positive chi-squared combination: moment
    identities exact to 1e-12, and KS distance below 0.01 against 10^6-sample
    Monte-Carlo for variance profiles [1,2], [1,2,3], and 50 random ones."""
    rng = np.random.default_rng(303)
    for _ in range(200):
        a = rng.uniform(0.05, 5.0, size=int(rng.integers(2, 12)))
        combo = chi2_combo_params(a)
        npt.assert_allclose(combo.alpha * combo.m + combo.beta, a.sum(), rtol=1e-12)
        npt.assert_allclose(combo.alpha**2 * combo.m, (a**2).sum(), rtol=1e-12)
        npt.assert_allclose(combo.alpha**3 * combo.m, (a**3).sum(), rtol=1e-12)

    profiles = [np.array([1.0, 2.0]), np.array([1.0, 2.0, 3.0])]
    profiles += [
        rng.uniform(0.2, 5.0, size=int(rng.integers(2, 7))) for _ in range(50)
    ]
    worst = max(_profile_ks(v, rng) for v in profiles)
    assert worst < 0.01


# ------------------------------------------------------------ criterion 4


def test_criterion_04_synthetic_cluster_retrieval():
    """Over 20 generator seeds, the three embedded clusters are the top-3
    depth-1 patterns in at least 19 runs, and assimilating each drops its
    re-scored interestingness below every not-yet-assimilated cluster's."""
    t0 = time.perf_counter()
    params = SearchParams(max_depth=1)
    top3_hits = 0
    drop_ok = True
    for seed in range(20):
        s = Session.create(DatasetRef("synthetic", seed=seed))
        ds = s.dataset
        truth = {_flag_extension(ds, name) for name in ("a3", "a4", "a5")}
        cands = mine_next(s, params=params)
        top3 = {frozenset(c.pattern.extension.indices.tolist()) for c in cands[:3]}
        if top3 != truth:
            continue
        top3_hits += 1
        pending = {
            frozenset(c.pattern.extension.indices.tolist()): c.pattern for c in cands[:3]
        }
        for _ in range(3):
            fresh = {
                frozenset(c.pattern.extension.indices.tolist()): c
                for c in mine_next(s, params=params)
            }
            best_key = max(
                pending, key=lambda k: fresh[k].score.si if k in fresh else -np.inf
            )
            assimilate_choice(s, fresh[best_key].id)
            chosen = pending.pop(best_key)
            re_si = si_location(
                s.model, chosen.extension, chosen.mean, chosen.intention, s.dl_params
            ).si
            others = [
                si_location(s.model, p.extension, p.mean, p.intention, s.dl_params).si
                for p in pending.values()
            ]
            if others and not all(re_si < o for o in others):
                drop_ok = False
    assert top3_hits >= 19
    assert drop_ok
    assert time.perf_counter() - t0 < 60.0


# ------------------------------------------------------------ criterion 5


def test_criterion_05_identical_extensions_rank_by_description_length():
    """Two intentions selecting the same rows differ in score only through
    description length: the SI ratio equals the inverted DL ratio, and the
    2-condition redescription of a cluster scores strictly below the
    1-condition one."""
    ds = DatasetRef("synthetic", seed=0).resolve()
    names = [a.name for a in ds.schema]
    short = Intention((Condition(names.index("a3"), Op.EQ, "1"),))
    redesc = Intention(
        (
            Condition(names.index("a3"), Op.EQ, "1"),
            Condition(names.index("a4"), Op.EQ, "0"),
        )
    )
    ext_short = evaluate_intention(ds, short)
    ext_redesc = evaluate_intention(ds, redesc)
    npt.assert_array_equal(ext_short.indices, ext_redesc.indices)

    model = background_from_dataset(ds)
    mean = subgroup_mean(ds, ext_short)
    s1 = si_location(model, ext_short, mean, short)
    s2 = si_location(model, ext_redesc, mean, redesc)
    assert s1.ic == s2.ic
    assert s1.si == s1.ic / s1.dl and s2.si == s2.ic / s2.dl
    assert s1.si / s2.si == pytest.approx(s2.dl / s1.dl, rel=1e-14)
    assert s2.si < s1.si


# ------------------------------------------------------------ criterion 6


def _recovers_clusters(seed: int, p: float, params: SearchParams) -> bool:
    """Three accept-the-top iterations recover the clusters when each winner
    carries exactly one positive cluster-flag condition and the three flags
    are distinct."""
    s = Session.create(
        DatasetRef("synthetic", seed=seed, flip_probability=p, flip_seed=seed + 1)
    )
    names = [a.name for a in s.dataset.schema]
    found: set[str] = set()
    for _ in range(3):
        top = mine_next(s, params=params)[0]
        anchors = {
            names[c.attribute]
            for c in top.pattern.intention.conditions
            if names[c.attribute] in ("a3", "a4", "a5") and c.op is Op.EQ and c.value == "1"
        }
        if len(anchors) != 1 or anchors & found:
            return False
        found |= anchors
        assimilate_choice(s, top.id)
    return len(found) == 3


def test_criterion_06_noise_robustness():
    """Cluster recovery under descriptor noise: at flip probability 0.10 at
    least 18 of 20 seeds recover all three clusters; the recovery rate never
    increases along the flip grid; and 0.20 still beats 0.30 strictly."""
    grid = [0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30]
    params = SearchParams()
    rates = [
        sum(_recovers_clusters(seed, p, params) for seed in range(20)) for p in grid
    ]
    assert rates[grid.index(0.10)] >= 18
    assert all(a >= b for a, b in zip(rates, rates[1:]))
    assert rates[grid.index(0.20)] > rates[grid.index(0.30)]


# ------------------------------------------------------------ criterion 7


def test_criterion_07_direction_recovery_and_gradient():
    """The spread direction optimizer agrees with an exhaustive half-degree
    scan (|cosine| > 0.99 per embedded cluster) and its gradient matches
    central finite differences to 1e-5 relative on 100 random instances."""
    ds = DatasetRef("synthetic", seed=0).resolve()
    for name in ("a3", "a4", "a5"):
        ext = Extension(np.array(sorted(_flag_extension(ds, name))))
        model = apply_location_constraint(
            background_from_dataset(ds),
            LocationPattern.from_dataset(ds, Intention(), ext),
        )
        found = optimize_direction(model, ds, ext).w
        obj = SpreadObjective(model, ds, ext, Intention())
        angles = np.deg2rad(np.arange(0.0, 180.0, 0.5))
        values = [obj.value(np.array([np.cos(t), np.sin(t)])) for t in angles]
        best = angles[int(np.argmax(values))]
        scan_w = np.array([np.cos(best), np.sin(best)])
        assert abs(float(found @ scan_w)) > 0.99

    rng = np.random.default_rng(707)
    checked = 0
    while checked < 100:
        inst = random_dataset(rng, n=int(rng.integers(8, 30)), d=int(rng.integers(2, 5)))
        model = background_from_dataset(inst)
        if rng.random() < 0.5:
            model = refine_blocks(model, random_extension(rng, inst.n))
        ext = random_extension(rng, inst.n)
        obj = SpreadObjective(model, inst, ext, Intention())
        w = _unit(rng.normal(size=inst.d_y))
        if not np.isfinite(obj.value(w)):
            continue
        ana = obj.gradient(w)
        num = np.empty_like(w)
        h = 1e-6
        for j in range(len(w)):
            e = np.zeros_like(w)
            e[j] = h
            num[j] = (obj.value(w + e) - obj.value(w - e)) / (2 * h)
        npt.assert_allclose(ana, num, rtol=1e-5, atol=1e-7 * max(1.0, float(np.abs(ana).max())))
        checked += 1


# ------------------------------------------------------------ criterion 8


def test_criterion_08_crime_top_pattern():
    """On the prepared violent-crime table the top depth-1 pattern covers
    about a fifth of the communities (20.5% +/- 2 points), lifts the subgroup
    mean to ~0.53 against an overall ~0.24, and conditions on PctIlleg with a
    threshold within one quintile step of 0.39. Skipped when the table is not
    installed."""
    data_dir = os.environ.get("SGMINE_DATA_DIR", "")
    path = Path(data_dir) / "communities_crime.csv" if data_dir else None
    if path is None or not path.is_file():
        pytest.skip("prepared crime table not found under $SGMINE_DATA_DIR")
    meta = {"state", "county", "community", "communityname", "fold"}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    cfg = {
        "targets": ["ViolentCrimesPerPop"],
        "auxiliary": [c for c in header if c in meta],
    }
    ds = load_csv(path, cfg)
    model = background_from_dataset(ds)
    top = beam_search(ds, model, SearchParams(max_depth=1))[0]

    coverage = len(top.pattern.extension) / ds.n
    assert abs(coverage - 0.205) <= 0.02
    sub = float(subgroup_mean(ds, top.pattern.extension)[0])
    overall = float(np.nanmean(ds.targets[:, 0]))
    assert abs(sub - 0.53) <= 0.02
    assert abs(overall - 0.24) <= 0.02

    cond = top.pattern.intention.conditions[0]
    assert ds.schema[cond.attribute].name == "PctIlleg"
    col = ds.columns[cond.attribute]
    splits = _nearest_rank_splits(col, SearchParams().num_split_points)
    step = max(b - a for a, b in zip(splits, splits[1:]))
    assert abs(float(cond.value) - 0.39) <= step


# ------------------------------------------------------------ criterion 9


def _scaling_benchmark_dataset(seed: int, n: int = 620, attrs: int = 12) -> Dataset:
    """Data at the synthetic experiment's scale (620 rows, 2 targets) with a
    descriptor space rich enough that 20 accepted location patterns all stay
    informative; the cluster generator's 6 attributes saturate after ~13."""
    rng = np.random.default_rng(seed)
    targets = rng.standard_normal((n, 2))
    binary = {f"a{j}": rng.integers(0, 2, size=n) for j in range(attrs)}
    return make_dataset(targets, binary)


def test_criterion_09_update_cost_scaling():
    """Per-update wall time over 20 sequential location assimilations grows
    (Spearman rho > 0.8 vs iteration) while single-constraint spread updates
    on the final model stay below the 20th location update's time. Each
    accepted pattern is re-mined under the current model, the interactive
    protocol, so every update does real work; times are medians of 5
    identical calls. Absolute seconds are machine-specific non-targets."""
    ds = _scaling_benchmark_dataset(seed=0)
    model = background_from_dataset(ds)
    params = SearchParams(max_depth=3)
    seen: set = set()
    times = []
    accepted = []
    for _ in range(20):
        ranked = beam_search(ds, model, params)
        pick = next(rp for rp in ranked if rp.pattern.key() not in seen)
        seen.add(pick.pattern.key())
        reps = []
        for _ in range(5):
            t0 = time.perf_counter()
            result = assimilate(model, [pick.pattern])
            reps.append(time.perf_counter() - t0)
        times.append(statistics.median(reps))
        accepted.append(pick.pattern)
        model = result.model
    rho, _ = stats.spearmanr(np.arange(1, 21), times)
    assert rho > 0.8

    loc20 = times[-1]
    for pat in accepted[:5]:
        w = optimize_direction(model, ds, pat.extension, pat.intention).w
        spat = SpreadPattern(
            pat.intention, pat.extension, w, subgroup_spread(ds, pat.extension, w)
        )
        reps = []
        for _ in range(5):
            t0 = time.perf_counter()
            apply_spread_constraint(model, spat)
            reps.append(time.perf_counter() - t0)
        assert statistics.median(reps) < loc20


# ------------------------------------------------------------ criterion 10


def test_criterion_10_session_replay_determinism(tmp_path):
    """A saved session reloads and replays to the same model within 1e-10 on
    every block parameter; the whole suite runs with no web client built
    (the service module imports without any bundled static assets)."""
    s = Session.create(DatasetRef("synthetic", seed=3))
    for _ in range(2):
        top = mine_next(s, params=SearchParams(max_depth=2))[0]
        assimilate_choice(s, top.id)
        spread = mine_next(s, kind="spread")[0]
        assimilate_choice(s, spread.id)

    path = tmp_path / "session.json"
    save_session(s, path)
    loaded = load_session(path)
    replayed = replay_model(loaded)
    assert len(replayed.blocks) == len(s.model.blocks)
    for a, b in zip(s.model.blocks, replayed.blocks):
        npt.assert_array_equal(a.members, b.members)
        npt.assert_allclose(a.mu, b.mu, rtol=0.0, atol=1e-10)
        npt.assert_allclose(a.sigma, b.sigma, rtol=0.0, atol=1e-10)
        npt.assert_allclose(a.precision, b.precision, rtol=0.0, atol=1e-10)
        npt.assert_allclose(a.shift, b.shift, rtol=0.0, atol=1e-10)

    import sgmine.service  # noqa: F401  headless import must always work
