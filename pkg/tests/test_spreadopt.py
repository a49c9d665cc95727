"""Direction search on the unit sphere for spread patterns."""

from __future__ import annotations

import numpy as np
import numpy.testing as npt
import pytest

from sgmine import (
    Condition,
    Extension,
    Intention,
    LocationPattern,
    Op,
    SpreadPattern,
    apply_location_constraint,
    apply_spread_constraint,
    background_from_dataset,
    evaluate_intention,
    init_background,
    optimize_direction,
    optimize_direction_2sparse,
    scan_directions,
    si_spread,
    subgroup_mean,
)
from sgmine.spreadopt import DirectionSearchError, SpreadObjective, spread_si_gradient

from conftest import make_dataset, random_dataset, random_extension, random_refined_model


def fd_gradient(obj, w, h=1e-6):
    g = np.empty_like(w)
    for j in range(len(w)):
        e = np.zeros_like(w)
        e[j] = h
        g[j] = (obj.value(w + e) - obj.value(w - e)) / (2 * h)
    return g


# ------------------------------------------------------------------ gradient


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(41)
    for _ in range(25):
        ds = random_dataset(rng, n=int(rng.integers(8, 30)), d=int(rng.integers(2, 5)))
        model = random_refined_model(ds, rng, updates=int(rng.integers(0, 3)))
        ext = random_extension(rng, ds.n)
        if len(ext) < 2:
            continue
        obj = SpreadObjective(model, ds, ext, Intention())
        w = rng.normal(size=ds.d_y)
        w /= np.linalg.norm(w)
        if not np.isfinite(obj.value(w)):
            continue
        ana = obj.gradient(w)
        num = fd_gradient(obj, w)
        npt.assert_allclose(ana, num, rtol=1e-5, atol=1e-7 * max(1.0, np.abs(ana).max()))


def test_gradient_valid_off_sphere():
    # The objective is defined for any vector so central differences never
    # leave its domain; check a non-unit point explicitly.
    rng = np.random.default_rng(42)
    ds = random_dataset(rng, n=15, d=3)
    model = background_from_dataset(ds)
    ext = random_extension(rng, 15, 8)
    obj = SpreadObjective(model, ds, ext, Intention())
    w = rng.normal(size=3) * 1.7
    assert np.isfinite(obj.value(w))
    npt.assert_allclose(obj.gradient(w), fd_gradient(obj, w), rtol=1e-5)


def test_spread_si_gradient_wrapper(synth0):
    model = background_from_dataset(synth0)
    ext = Extension(np.arange(0, 60))
    w = np.array([1.0, 0.0])
    g = spread_si_gradient(model, synth0, ext, w)
    obj = SpreadObjective(model, synth0, ext, Intention())
    npt.assert_allclose(g, obj.gradient(w), rtol=1e-14)


# ------------------------------------------------------------- optimization


def cluster_extension(ds, name):
    return evaluate_intention(ds, Intention((Condition(ds.index_of(name), Op.EQ, "1"),)))


def test_optimum_matches_grid_scan(synth0):
    model = background_from_dataset(synth0)
    for name in ("a3", "a4", "a5"):
        ext = cluster_extension(synth0, name)
        loc = LocationPattern.from_dataset(synth0, Intention(), ext)
        updated = apply_location_constraint(model, loc)
        result = optimize_direction(updated, synth0, ext, seed=0)
        grid_w, grid_si = scan_directions(updated, synth0, ext)
        assert abs(float(result.w @ grid_w)) > 0.99
        assert result.si >= grid_si - 1e-6
        assert result.converged


def test_known_axis_anisotropy():
    # Subgroup variance 4 along the first axis, 1/4 along the second, against
    # an isotropic unit belief: inflation is the more surprising side.
    rng = np.random.default_rng(43)
    n = 400
    pts = rng.normal(size=(n, 2)) * np.array([2.0, 0.5])
    ds = make_dataset(pts)
    model = init_background(np.zeros(2), np.eye(2), n=n)
    ext = Extension(np.arange(n))
    model = apply_location_constraint(
        model, LocationPattern(Intention(), ext, pts.mean(axis=0))
    )
    result = optimize_direction(model, ds, ext, seed=0)
    assert abs(result.w[0]) > 0.99


def test_canonical_sign_first_nonzero_positive():
    rng = np.random.default_rng(44)
    ds = random_dataset(rng, n=30, d=3)
    model = background_from_dataset(ds)
    ext = random_extension(rng, 30, 12)
    result = optimize_direction(model, ds, ext, seed=3)
    nz = result.w[result.w != 0.0]
    assert nz[0] > 0.0


def test_objective_is_even():
    rng = np.random.default_rng(45)
    ds = random_dataset(rng, n=20, d=3)
    model = background_from_dataset(ds)
    ext = random_extension(rng, 20, 9)
    obj = SpreadObjective(model, ds, ext, Intention())
    w = rng.normal(size=3)
    w /= np.linalg.norm(w)
    npt.assert_allclose(obj.value(w), obj.value(-w), rtol=1e-14)


def test_optimize_deterministic(synth0):
    model = background_from_dataset(synth0)
    ext = cluster_extension(synth0, "a4")
    a = optimize_direction(model, synth0, ext, seed=7)
    b = optimize_direction(model, synth0, ext, seed=7)
    npt.assert_array_equal(a.w, b.w)
    assert a.si == b.si


def test_result_si_matches_rescore(synth0):
    model = background_from_dataset(synth0)
    ext = cluster_extension(synth0, "a5")
    intent = Intention((Condition(synth0.index_of("a5"), Op.EQ, "1"),))
    result = optimize_direction(model, synth0, ext, intent, seed=0)
    from sgmine import subgroup_spread

    vhat = subgroup_spread(synth0, ext, result.w)
    again = si_spread(model, ext, result.w, vhat, intent)
    assert result.si == pytest.approx(again.si, rel=1e-12)


def test_restart_count_reported(synth0):
    model = background_from_dataset(synth0)
    ext = cluster_extension(synth0, "a3")
    result = optimize_direction(model, synth0, ext, restarts=4, seed=0)
    # 4 seeded + 2 axes + 1 top eigenvector
    assert result.restarts_used == 7


# ------------------------------------------------------------------ 2-sparse


def test_two_sparse_equals_full_in_2d(synth0):
    model = background_from_dataset(synth0)
    ext = cluster_extension(synth0, "a3")
    full = optimize_direction(model, synth0, ext, seed=0)
    two = optimize_direction_2sparse(model, synth0, ext, seed=0)
    assert two.si == pytest.approx(full.si, rel=1e-9)
    assert abs(float(two.w @ full.w)) > 1 - 1e-9


def test_two_sparse_zeroes_other_coordinates():
    rng = np.random.default_rng(46)
    ds = random_dataset(rng, n=40, d=4)
    model = background_from_dataset(ds)
    ext = random_extension(rng, 40, 18)
    result = optimize_direction_2sparse(model, ds, ext, seed=0)
    assert np.count_nonzero(result.w) <= 2
    npt.assert_allclose(np.linalg.norm(result.w), 1.0, rtol=1e-12)
    full = optimize_direction(model, ds, ext, seed=0)
    assert result.si <= full.si + 1e-9


# -------------------------------------------------------------------- errors


def test_all_starts_invalid_raises():
    # Identical subgroup rows give zero projected variance in every direction;
    # with mixed block variances the fitted support starts above zero, so no
    # direction is scoreable.
    ds = make_dataset(np.zeros((6, 2)))
    model = init_background(np.zeros(2), np.eye(2), n=6)
    sub = Extension(np.arange(3))
    model = apply_location_constraint(
        model, LocationPattern(Intention(), sub, np.zeros(2))
    )
    # Inflate both axes for the first block so the two blocks disagree along
    # every direction, keeping the support edge strictly positive.
    model = apply_spread_constraint(
        model, SpreadPattern(Intention(), sub, np.array([1.0, 0.0]), variance=4.0)
    )
    model = apply_spread_constraint(
        model, SpreadPattern(Intention(), sub, np.array([0.0, 1.0]), variance=2.0)
    )
    with pytest.raises(DirectionSearchError):
        optimize_direction(model, ds, Extension(np.arange(6)), seed=0)


def test_small_extension_rejected():
    ds = make_dataset(np.zeros((4, 2)))
    model = init_background(np.zeros(2), np.eye(2), n=4)
    with pytest.raises(Exception):
        optimize_direction(model, ds, Extension(np.array([1])), seed=0)
