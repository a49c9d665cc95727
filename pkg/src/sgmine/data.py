"""Tabular data handling: schema, CSV ingestion, subgroup descriptions, synthetic data.

A dataset separates descriptive attributes (numeric, categorical, or binary) from
real-valued target attributes. Subgroups are described by conjunctions of conditions
on descriptors and evaluated to sorted row-index extensions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

__all__ = [
    "MISSING_TOKENS",
    "SchemaError",
    "DataError",
    "Kind",
    "Role",
    "Op",
    "AttributeSchema",
    "Dataset",
    "Condition",
    "Intention",
    "Extension",
    "evaluate_intention",
    "condition_mask",
    "subgroup_mean",
    "subgroup_spread",
    "load_csv",
    "write_csv",
    "generate_synthetic",
    "flip_noise",
]

# Tokens treated as missing cells on CSV ingestion.
MISSING_TOKENS = frozenset({"", "?", "NA", "NaN", "nan", "null"})


class SchemaError(ValueError):
    """A schema configuration or column declaration does not validate."""


class DataError(ValueError):
    """Malformed or inconsistent data values."""


class Kind(str, Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"
    BINARY = "binary"


class Role(str, Enum):
    DESCRIPTOR = "descriptor"
    TARGET = "target"
    AUXILIARY = "auxiliary"


class Op(str, Enum):
    LE = "<="
    GE = ">="
    EQ = "=="


@dataclass(frozen=True)
class AttributeSchema:
    """One column: a name, a value kind, and a role in mining."""

    name: str
    kind: Kind
    role: Role

    def __post_init__(self) -> None:
        if self.role is Role.TARGET and self.kind is not Kind.NUMERIC:
            raise SchemaError(f"target column {self.name!r} must be numeric")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable column-typed table with a numeric target matrix.

    ``columns[i]`` holds the values of schema entry ``i`` for non-target columns
    (float64 with NaN for missing numerics, object arrays of str/None otherwise)
    and is None at target positions; targets live in the dense float matrix.
    """

    schema: tuple[AttributeSchema, ...]
    columns: tuple[Optional[np.ndarray], ...]
    targets: np.ndarray
    target_indices: tuple[int, ...]

    def __post_init__(self) -> None:
        names = [a.name for a in self.schema]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate column names")
        if len(self.columns) != len(self.schema):
            raise SchemaError("columns misaligned with schema")
        if not self.target_indices:
            raise SchemaError("at least one target column required")
        t = np.asarray(self.targets, dtype=float)
        if t.ndim != 2 or t.shape[1] != len(self.target_indices):
            raise SchemaError("target matrix shape mismatch")
        if not np.all(np.isfinite(t)):
            raise DataError("missing or non-finite value in a target column")
        for i, (spec_i, col) in enumerate(zip(self.schema, self.columns)):
            if spec_i.role is Role.TARGET:
                if col is not None:
                    raise SchemaError("target columns are stored in the target matrix only")
            else:
                if col is None or len(col) != t.shape[0]:
                    raise SchemaError(f"column {spec_i.name!r} has wrong length")
                _frozen(col)
        object.__setattr__(self, "targets", _frozen(t))

    @property
    def n(self) -> int:
        return self.targets.shape[0]

    @property
    def d_y(self) -> int:
        return self.targets.shape[1]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.schema)

    @property
    def target_names(self) -> tuple[str, ...]:
        return tuple(self.schema[i].name for i in self.target_indices)

    @property
    def descriptor_indices(self) -> tuple[int, ...]:
        return tuple(i for i, a in enumerate(self.schema) if a.role is Role.DESCRIPTOR)

    @property
    def auxiliary_indices(self) -> tuple[int, ...]:
        return tuple(i for i, a in enumerate(self.schema) if a.role is Role.AUXILIARY)

    def index_of(self, name: str) -> int:
        for i, a in enumerate(self.schema):
            if a.name == name:
                return i
        raise SchemaError(f"unknown column name {name!r}")

    def empirical_prior(self) -> tuple[np.ndarray, np.ndarray]:
        """Full-data target mean and population covariance."""
        mu = self.targets.mean(axis=0)
        centered = self.targets - mu
        cov = centered.T @ centered / self.n
        return mu, cov


@dataclass(frozen=True)
class Condition:
    """A single predicate on one descriptor column (by schema index)."""

    attribute: int
    op: Op
    value: Union[float, str]

    def __post_init__(self) -> None:
        if self.op is Op.EQ:
            if not isinstance(self.value, str):
                raise SchemaError("equality conditions take a category label")
        else:
            if not isinstance(self.value, (int, float)) or isinstance(self.value, bool):
                raise SchemaError("inequality conditions take a numeric threshold")
            object.__setattr__(self, "value", float(self.value))

    def describe(self, dataset: Dataset) -> str:
        name = dataset.schema[self.attribute].name
        if self.op is Op.EQ:
            return f"{name} == {self.value!r}"
        return f"{name} {self.op.value} {self.value!r}"

    def sort_key(self) -> tuple:
        order = {Op.LE: 0, Op.GE: 1, Op.EQ: 2}
        return (self.attribute, order[self.op], repr(self.value))


@dataclass(frozen=True)
class Intention:
    """A conjunction of conditions; the empty conjunction covers everything.

    Per attribute at most one <= bound, at most one >= bound (their interval must
    be non-empty), and an == condition excludes any other condition.
    """

    conditions: tuple[Condition, ...] = ()

    def __post_init__(self) -> None:
        lo: dict[int, float] = {}
        hi: dict[int, float] = {}
        eq: set[int] = set()
        seen: set[tuple] = set()
        for c in self.conditions:
            key = c.sort_key()
            if key in seen:
                raise SchemaError("duplicate condition in conjunction")
            seen.add(key)
            if c.op is Op.EQ:
                eq.add(c.attribute)
            elif c.op is Op.LE:
                if c.attribute in hi:
                    raise SchemaError("two upper bounds on one attribute")
                hi[c.attribute] = float(c.value)
            else:
                if c.attribute in lo:
                    raise SchemaError("two lower bounds on one attribute")
                lo[c.attribute] = float(c.value)
        for a in eq:
            if a in lo or a in hi:
                raise SchemaError("equality mixed with inequality on one attribute")
        for a, low in lo.items():
            if a in hi and low > hi[a]:
                raise SchemaError(f"empty interval on attribute {a}: [{low}, {hi[a]}]")

    def __len__(self) -> int:
        return len(self.conditions)

    def extend(self, condition: Condition) -> "Intention":
        return Intention(self.conditions + (condition,))

    def canonical(self) -> tuple:
        """Order-independent encoding, usable as a dict key and tie-break."""
        return tuple(sorted(c.sort_key() for c in self.conditions))

    def describe(self, dataset: Dataset) -> str:
        if not self.conditions:
            return "(all rows)"
        return " AND ".join(c.describe(dataset) for c in self.conditions)


@dataclass(frozen=True, eq=False)
class Extension:
    """Sorted, duplicate-free row indices of the rows an intention covers."""

    indices: np.ndarray

    def __post_init__(self) -> None:
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1:
            raise DataError("extension indices must be one-dimensional")
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0):
            raise DataError("extension indices must be strictly increasing and non-negative")
        object.__setattr__(self, "indices", _frozen(idx))

    def __len__(self) -> int:
        return int(self.indices.size)

    def key(self) -> bytes:
        return self.indices.tobytes()


def condition_mask(dataset: Dataset, condition: Condition) -> np.ndarray:
    """Boolean row mask for one condition. Missing values never match."""
    attr = dataset.schema[condition.attribute]
    if attr.role is Role.TARGET:
        raise SchemaError("conditions apply to descriptor columns, not targets")
    col = dataset.columns[condition.attribute]
    if condition.op is Op.EQ:
        if attr.kind is Kind.NUMERIC:
            raise SchemaError("equality condition on a numeric column")
        return np.array([v == condition.value for v in col], dtype=bool)
    if attr.kind is not Kind.NUMERIC:
        raise SchemaError("inequality condition on a non-numeric column")
    with np.errstate(invalid="ignore"):
        if condition.op is Op.LE:
            return col <= condition.value
        return col >= condition.value


def evaluate_intention(dataset: Dataset, intention: Intention) -> Extension:
    """Rows satisfying every condition (all rows for the empty conjunction)."""
    mask = np.ones(dataset.n, dtype=bool)
    for c in intention.conditions:
        mask &= condition_mask(dataset, c)
    return Extension(np.flatnonzero(mask))


def subgroup_mean(dataset: Dataset, ext: Extension) -> np.ndarray:
    """Empirical target mean over the extension's rows."""
    if len(ext) == 0:
        raise DataError("mean of an empty extension")
    return dataset.targets[ext.indices].mean(axis=0)


def subgroup_spread(dataset: Dataset, ext: Extension, w: np.ndarray) -> float:
    """Mean squared projection of the subgroup's rows about their own mean.

    ``w`` must be a unit vector; uses the 1/|I| divisor (population convention).
    """
    if len(ext) < 2:
        raise DataError("spread needs at least two rows")
    w = np.asarray(w, dtype=float)
    if abs(float(w @ w) - 1.0) > 1e-12:
        raise DataError("direction must be a unit vector")
    rows = dataset.targets[ext.indices]
    proj = (rows - rows.mean(axis=0)) @ w
    return float(proj @ proj / len(ext))


# ---------------------------------------------------------------------------
# CSV ingestion


def _infer_kind(tokens: Iterable[str]) -> Kind:
    values = {t for t in tokens if t not in MISSING_TOKENS}
    if values and values <= {"0", "1"}:
        return Kind.BINARY
    for v in values:
        try:
            float(v)
        except ValueError:
            return Kind.CATEGORICAL
    return Kind.NUMERIC


def _build_column(name: str, kind: Kind, tokens: Sequence[str]) -> np.ndarray:
    if kind is Kind.NUMERIC:
        out = np.empty(len(tokens), dtype=float)
        for i, t in enumerate(tokens):
            if t in MISSING_TOKENS:
                out[i] = np.nan
            else:
                try:
                    out[i] = float(t)
                except ValueError:
                    raise DataError(
                        f"non-numeric value {t!r} in numeric column {name!r} (row {i + 2})"
                    ) from None
        return out
    if kind is Kind.BINARY:
        bad = {t for t in tokens if t not in MISSING_TOKENS and t not in ("0", "1")}
        if bad:
            raise DataError(f"binary column {name!r} holds values beyond 0/1: {sorted(bad)}")
    out = np.empty(len(tokens), dtype=object)
    for i, t in enumerate(tokens):
        out[i] = None if t in MISSING_TOKENS else t
    return out


def load_csv(path: Union[str, Path], schema_config: Mapping) -> Dataset:
    """Load a header-ful CSV under a schema configuration.

    The configuration maps roles to column names::

        {"targets": [...], "descriptors": [...], "auxiliary": [...],
         "kinds": {"col": "numeric" | "categorical" | "binary"}}

    ``targets`` is required and non-empty. When ``descriptors`` is given, any
    unlisted non-target column becomes auxiliary; otherwise every non-target,
    non-auxiliary column is a descriptor. Kinds are inferred unless overridden.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"empty file: {path}")
    header, body = rows[0], rows[1:]
    if not body:
        raise DataError(f"no data rows in {path}")
    width = len(header)
    for r, row in enumerate(body):
        if len(row) != width:
            raise DataError(f"row {r + 2} has {len(row)} cells, expected {width}")

    targets = list(schema_config.get("targets", ()))
    if not targets:
        raise SchemaError("schema configuration must name at least one target")
    declared_desc = schema_config.get("descriptors")
    auxiliary = set(schema_config.get("auxiliary", ()))
    kinds_cfg = dict(schema_config.get("kinds", {}))
    known = set(header)
    for section, names in (
        ("targets", targets),
        ("descriptors", declared_desc or ()),
        ("auxiliary", auxiliary),
        ("kinds", kinds_cfg),
    ):
        for name in names:
            if name not in known:
                raise SchemaError(f"unknown column name {name!r} in {section}")

    target_set = set(targets)
    roles: dict[str, Role] = {}
    for name in header:
        if name in target_set:
            roles[name] = Role.TARGET
        elif name in auxiliary:
            roles[name] = Role.AUXILIARY
        elif declared_desc is not None:
            roles[name] = Role.DESCRIPTOR if name in set(declared_desc) else Role.AUXILIARY
        else:
            roles[name] = Role.DESCRIPTOR

    col_tokens = {name: [row[j] for row in body] for j, name in enumerate(header)}
    schema: list[AttributeSchema] = []
    columns: list[Optional[np.ndarray]] = []
    target_cols: dict[str, np.ndarray] = {}
    for name in header:
        role = roles[name]
        if role is Role.TARGET:
            kind = Kind.NUMERIC
        elif name in kinds_cfg:
            kind = Kind(kinds_cfg[name])
        else:
            kind = _infer_kind(col_tokens[name])
        schema.append(AttributeSchema(name, kind, role))
        built = _build_column(name, kind, col_tokens[name])
        if role is Role.TARGET:
            if np.any(np.isnan(built)):
                raise DataError(f"missing value in target column {name!r}")
            target_cols[name] = built
            columns.append(None)
        else:
            columns.append(built)

    # Target matrix columns follow the order given in the configuration.
    name_to_index = {a.name: i for i, a in enumerate(schema)}
    target_indices = tuple(name_to_index[name] for name in targets)
    matrix = np.column_stack([target_cols[name] for name in targets])
    return Dataset(tuple(schema), tuple(columns), matrix, target_indices)


def write_csv(dataset: Dataset, path: Union[str, Path]) -> None:
    """Write the dataset back out with full float precision."""
    target_pos = {idx: k for k, idx in enumerate(dataset.target_indices)}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(dataset.names)
        for r in range(dataset.n):
            row = []
            for i, attr in enumerate(dataset.schema):
                if attr.role is Role.TARGET:
                    row.append(repr(float(dataset.targets[r, target_pos[i]])))
                else:
                    v = dataset.columns[i][r]
                    if v is None:
                        row.append("")
                    elif attr.kind is Kind.NUMERIC:
                        row.append("" if math.isnan(v) else repr(float(v)))
                    else:
                        row.append(v)
            writer.writerow(row)


# ---------------------------------------------------------------------------
# Synthetic benchmark data

SYNTHETIC_BACKGROUND = 500
SYNTHETIC_CLUSTER_SIZE = 40
SYNTHETIC_CLUSTER_ANGLES_DEG = (90.0, 210.0, 330.0)
SYNTHETIC_CLUSTER_DISTANCE = 2.0
# Cluster sd along the tangential (major) and radial (minor) eigenvector.
SYNTHETIC_CLUSTER_SDS = (0.4, 0.1)


def synthetic_cluster_frames() -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """(center, tangential unit, radial unit) for each embedded cluster."""
    frames = []
    for angle in SYNTHETIC_CLUSTER_ANGLES_DEG:
        theta = math.radians(angle)
        radial = np.array([math.cos(theta), math.sin(theta)])
        tangent = np.array([-math.sin(theta), math.cos(theta)])
        frames.append((SYNTHETIC_CLUSTER_DISTANCE * radial, tangent, radial))
    return frames


def generate_synthetic(seed: int) -> Dataset:
    """Two standard-normal target attributes with three anisotropic clusters.

    500 background rows ~ N(0, I), then three clusters of 40 rows each at
    distance 2 from the origin; each cluster is elongated tangentially
    (sd 0.4 along the tangent, 0.1 along the radius). Binary descriptors
    a3..a5 flag cluster membership exactly; a6 and a7 are fair coin flips.
    Deterministic for a given seed.
    """
    rng = np.random.default_rng(seed)
    parts = [rng.standard_normal((SYNTHETIC_BACKGROUND, 2))]
    for center, tangent, radial in synthetic_cluster_frames():
        z = rng.standard_normal((SYNTHETIC_CLUSTER_SIZE, 2))
        parts.append(
            center
            + z[:, :1] * SYNTHETIC_CLUSTER_SDS[0] * tangent
            + z[:, 1:] * SYNTHETIC_CLUSTER_SDS[1] * radial
        )
    targets = np.vstack(parts)
    n = targets.shape[0]

    schema = [
        AttributeSchema("t1", Kind.NUMERIC, Role.TARGET),
        AttributeSchema("t2", Kind.NUMERIC, Role.TARGET),
    ]
    columns: list[Optional[np.ndarray]] = [None, None]
    for k in range(3):
        flags = np.array(["0"] * n, dtype=object)
        start = SYNTHETIC_BACKGROUND + k * SYNTHETIC_CLUSTER_SIZE
        flags[start : start + SYNTHETIC_CLUSTER_SIZE] = "1"
        schema.append(AttributeSchema(f"a{k + 3}", Kind.BINARY, Role.DESCRIPTOR))
        columns.append(flags)
    for name in ("a6", "a7"):
        coin = rng.integers(0, 2, size=n)
        schema.append(AttributeSchema(name, Kind.BINARY, Role.DESCRIPTOR))
        columns.append(np.array([str(int(v)) for v in coin], dtype=object))

    return Dataset(tuple(schema), tuple(columns), targets, (0, 1))


def flip_noise(dataset: Dataset, p: float, seed: int) -> Dataset:
    """Flip each binary descriptor cell independently with probability p."""
    if not 0.0 <= p <= 1.0:
        raise DataError(f"flip probability must lie in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    columns = list(dataset.columns)
    for i, attr in enumerate(dataset.schema):
        if attr.role is Role.DESCRIPTOR and attr.kind is Kind.BINARY:
            col = np.array(columns[i], dtype=object)
            flips = rng.random(dataset.n) < p
            for r in np.flatnonzero(flips):
                if col[r] is not None:
                    col[r] = "1" if col[r] == "0" else "0"
            columns[i] = col
    return Dataset(dataset.schema, tuple(columns), dataset.targets.copy(), dataset.target_indices)
