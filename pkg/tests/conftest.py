"""Shared builders for randomized test instances.

Every helper takes an explicit Generator so tests stay reproducible; no
module-level RNG state.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
import pytest

from sgmine import (
    AttributeSchema,
    Dataset,
    Extension,
    Intention,
    Kind,
    LocationPattern,
    Role,
    apply_location_constraint,
    background_from_dataset,
    generate_synthetic,
)


def make_dataset(targets: np.ndarray, binary: Optional[dict] = None) -> Dataset:
    """Wrap a float matrix as target attributes, plus optional binary
    descriptor columns given as {name: 0/1 array}."""
    targets = np.asarray(targets, dtype=float)
    n, d = targets.shape
    schema = [AttributeSchema(f"t{j + 1}", Kind.NUMERIC, Role.TARGET) for j in range(d)]
    columns: list = [None] * d
    for name, flags in (binary or {}).items():
        schema.append(AttributeSchema(name, Kind.BINARY, Role.DESCRIPTOR))
        columns.append(np.array([str(int(v)) for v in flags], dtype=object))
    return Dataset(tuple(schema), tuple(columns), targets, tuple(range(d)))


def random_spd(rng: np.random.Generator, d: int) -> np.ndarray:
    a = rng.normal(size=(d, d))
    return a @ a.T + (0.5 + rng.random()) * np.eye(d)


def random_dataset(
    rng: np.random.Generator, n: Optional[int] = None, d: Optional[int] = None
) -> Dataset:
    n = int(rng.integers(6, 51)) if n is None else n
    d = int(rng.integers(1, 5)) if d is None else d
    mean = rng.normal(scale=2.0, size=d)
    cov = random_spd(rng, d)
    return make_dataset(rng.multivariate_normal(mean, cov, size=n))


def random_extension(rng: np.random.Generator, n: int, k: Optional[int] = None) -> Extension:
    k = int(rng.integers(2, n)) if k is None else k
    return Extension(np.sort(rng.choice(n, size=k, replace=False)))


def random_refined_model(dataset: Dataset, rng: np.random.Generator, updates: int = 1):
    """Background model made multi-block by a few random location updates, so
    tests exercise the general case rather than the single-block shortcut."""
    model = background_from_dataset(dataset)
    for _ in range(updates):
        ext = random_extension(rng, dataset.n)
        model = apply_location_constraint(
            model, LocationPattern.from_dataset(dataset, Intention(), ext)
        )
    return model


@pytest.fixture(scope="session")
def synth0() -> Dataset:
    return generate_synthetic(seed=0)


# ----------------------------------------------------- acceptance summary

_CRITERION_RE = None


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One line per acceptance criterion, derived from the test outcomes."""
    import re

    pattern = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")
    rank = {"PASS": 0, "SKIPPED": 1, "FAIL": 2}
    rows: dict = {}
    for key, outcome in (
        ("passed", "PASS"),
        ("skipped", "SKIPPED"),
        ("failed", "FAIL"),
        ("error", "FAIL"),
    ):
        for rep in terminalreporter.stats.get(key, []):
            m = pattern.search(getattr(rep, "nodeid", ""))
            if m is None:
                continue
            num, slug = m.groups()
            if num not in rows or rank[outcome] > rank[rows[num][0]]:
                rows[num] = (outcome, slug.replace("_", " "))
    if rows:
        terminalreporter.section("acceptance criteria")
        for num in sorted(rows):
            outcome, label = rows[num]
            terminalreporter.write_line(f"criterion {num} ({label}): {outcome}")
