"""Feature schemas, partially observed features, and logged bandit datasets.

File formats
------------
* Feature / dataset CSV: header row, one column per attribute (``x0..x{d-1}``
  by default), empty cell or literal ``NA`` marks a missing value. Logged
  datasets add ``action`` and ``reward`` columns.
* Ground-truth companion (synthetic data only): ``<stem>_truth.csv`` with the
  complete features, one ``mu_<a>`` column per action (expected reward), one
  ``pi0_<a>`` column per action (true logging probabilities) and any extra
  per-row context columns (e.g. digit labels, realized counterfactuals).
* Schema JSON: attribute kinds plus normalization statistics.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, ShapeError

MISSING_TOKEN = "NA"


@dataclass(frozen=True)
class Continuous:
    """Real-valued attribute; mean/std are the standardization constants."""

    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if not self.std > 0:
            raise ConfigError(f"continuous attribute std must be > 0, got {self.std}")


@dataclass(frozen=True)
class Categorical:
    """Finite attribute with classes 0..cardinality-1."""

    cardinality: int

    def __post_init__(self):
        if self.cardinality < 2:
            raise ConfigError(f"categorical cardinality must be >= 2, got {self.cardinality}")


Attribute = Continuous | Categorical


@dataclass(frozen=True)
class FeatureSchema:
    attributes: tuple[Attribute, ...]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        attrs = tuple(self.attributes)
        object.__setattr__(self, "attributes", attrs)
        names = tuple(self.names) if self.names else tuple(f"x{i}" for i in range(len(attrs)))
        if len(names) != len(attrs):
            raise ConfigError("schema names do not match attribute count")
        object.__setattr__(self, "names", names)

    def __len__(self) -> int:
        return len(self.attributes)

    @property
    def continuous_indices(self) -> list[int]:
        return [i for i, a in enumerate(self.attributes) if isinstance(a, Continuous)]

    @property
    def categorical_indices(self) -> list[int]:
        return [i for i, a in enumerate(self.attributes) if isinstance(a, Categorical)]

    def to_dict(self) -> dict:
        out = []
        for attr in self.attributes:
            if isinstance(attr, Continuous):
                out.append({"kind": "continuous", "mean": attr.mean, "std": attr.std})
            else:
                out.append({"kind": "categorical", "cardinality": attr.cardinality})
        return {"attributes": out, "names": list(self.names)}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        attrs: list[Attribute] = []
        for item in d["attributes"]:
            if item["kind"] == "continuous":
                attrs.append(Continuous(float(item["mean"]), float(item["std"])))
            elif item["kind"] == "categorical":
                attrs.append(Categorical(int(item["cardinality"])))
            else:
                raise ConfigError(f"unknown attribute kind {item['kind']!r}")
        return cls(tuple(attrs), tuple(d.get("names", ())))


@dataclass
class PartialFeature:
    """Attribute values plus missingness mask (True = missing).

    Masked entries carry no information; they are stored as 0.0. Categorical
    values are class indices stored as floats.
    """

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).copy()
        self.mask = np.asarray(self.mask, dtype=bool).copy()
        if self.values.shape != self.mask.shape or self.values.ndim != 1:
            raise ShapeError(
                f"values {self.values.shape} and mask {self.mask.shape} must be equal 1-D"
            )
        self.values[self.mask] = 0.0

    @classmethod
    def complete(cls, values) -> "PartialFeature":
        values = np.asarray(values, dtype=np.float64)
        return cls(values, np.zeros(values.shape, dtype=bool))

    @property
    def n_missing(self) -> int:
        return int(self.mask.sum())

    def validate(self, schema: FeatureSchema) -> None:
        if len(self.values) != len(schema):
            raise ShapeError(
                f"feature has {len(self.values)} attributes, schema has {len(schema)}"
            )
        for j in schema.categorical_indices:
            if self.mask[j]:
                continue
            v = self.values[j]
            card = schema.attributes[j].cardinality
            if v != int(v) or not 0 <= int(v) < card:
                raise DataError(f"categorical attribute {j} value {v} not in 0..{card - 1}")


@dataclass
class GroundTruth:
    """Synthetic-only extras kept next to a logged dataset."""

    features: np.ndarray  # (n, d) complete features
    reward_means: np.ndarray  # (n, n_actions) expected reward per action
    propensities: np.ndarray  # (n, n_actions) true logging probabilities
    extras: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class LoggedDataset:
    """Triples (x-tilde, a, r) with schema, action count and optional truth."""

    schema: FeatureSchema
    features: np.ndarray  # (n, d) observed values; masked cells are 0
    mask: np.ndarray  # (n, d) bool, True = missing
    actions: np.ndarray  # (n,) int
    rewards: np.ndarray  # (n,) float
    n_actions: int
    truth: GroundTruth | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        n, d = self.features.shape
        if self.mask.shape != (n, d):
            raise ShapeError("mask shape does not match features")
        if self.actions.shape != (n,) or self.rewards.shape != (n,):
            raise ShapeError("actions/rewards length does not match features")
        if d != len(self.schema):
            raise ShapeError("feature width does not match schema")
        if n and (self.actions.min() < 0 or self.actions.max() >= self.n_actions):
            raise DataError("action index outside 0..n_actions-1")
        if not np.all(np.isfinite(self.rewards)):
            raise DataError("rewards must be finite")
        self.features = self.features.copy()
        self.features[self.mask] = 0.0

    def __len__(self) -> int:
        return self.features.shape[0]

    def row(self, i: int) -> PartialFeature:
        return PartialFeature(self.features[i], self.mask[i])

    def rows(self) -> list[PartialFeature]:
        return [self.row(i) for i in range(len(self))]


# ---------------------------------------------------------------------------
# Atomic file helpers
# ---------------------------------------------------------------------------


def atomic_write_text(path: str, text: str) -> None:
    """Write via temp file + rename so partially written files never appear."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path: str):
    with open(path) as fh:
        return json.load(fh)


def _fmt(value: float) -> str:
    return repr(float(value))


def _cell(value: float, attr: Attribute, missing: bool) -> str:
    if missing:
        return MISSING_TOKEN
    if isinstance(attr, Categorical):
        return str(int(value))
    return _fmt(value)


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------


def dataset_to_csv(data: LoggedDataset, path: str) -> None:
    """Write the logged triples; truth (if any) goes to ``<stem>_truth.csv``."""
    buf = []
    header = list(data.schema.names) + ["action", "reward"]
    buf.append(",".join(header))
    for i in range(len(data)):
        cells = [
            _cell(data.features[i, j], data.schema.attributes[j], data.mask[i, j])
            for j in range(len(data.schema))
        ]
        cells.append(str(int(data.actions[i])))
        cells.append(_fmt(data.rewards[i]))
        buf.append(",".join(cells))
    atomic_write_text(path, "\n".join(buf) + "\n")
    if data.truth is not None:
        truth_to_csv(data, _truth_path(path))


def _truth_path(path: str) -> str:
    stem, ext = os.path.splitext(path)
    return f"{stem}_truth{ext or '.csv'}"


def truth_to_csv(data: LoggedDataset, path: str) -> None:
    t = data.truth
    header = list(data.schema.names)
    header += [f"mu_{a}" for a in range(data.n_actions)]
    header += [f"pi0_{a}" for a in range(data.n_actions)]
    extra_keys = sorted(t.extras)
    header += extra_keys
    buf = [",".join(header)]
    for i in range(len(data)):
        cells = [
            _cell(t.features[i, j], data.schema.attributes[j], False)
            for j in range(len(data.schema))
        ]
        cells += [_fmt(v) for v in t.reward_means[i]]
        cells += [_fmt(v) for v in t.propensities[i]]
        cells += [_fmt(t.extras[k][i]) for k in extra_keys]
        buf.append(",".join(cells))
    atomic_write_text(path, "\n".join(buf) + "\n")


def dataset_from_csv(path: str, schema: FeatureSchema, n_actions: int) -> LoggedDataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    d = len(schema)
    expected = list(schema.names) + ["action", "reward"]
    if header != expected:
        raise DataError(f"unexpected CSV header {header!r} in {path}")
    n = len(rows)
    feats = np.zeros((n, d))
    mask = np.zeros((n, d), dtype=bool)
    actions = np.zeros(n, dtype=np.int64)
    rewards = np.zeros(n)
    for i, row in enumerate(rows):
        if len(row) != d + 2:
            raise DataError(f"row {i} in {path} has {len(row)} cells, expected {d + 2}")
        for j in range(d):
            cell = row[j].strip()
            if cell == "" or cell == MISSING_TOKEN:
                mask[i, j] = True
            else:
                feats[i, j] = float(cell)
        actions[i] = int(row[d])
        rewards[i] = float(row[d + 1])
    data = LoggedDataset(schema, feats, mask, actions, rewards, n_actions)
    truth_path = _truth_path(path)
    if os.path.exists(truth_path):
        data.truth = truth_from_csv(truth_path, schema, n_actions)
    return data


def truth_from_csv(path: str, schema: FeatureSchema, n_actions: int) -> GroundTruth:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    d = len(schema)
    base = list(schema.names)
    base += [f"mu_{a}" for a in range(n_actions)]
    base += [f"pi0_{a}" for a in range(n_actions)]
    if header[: len(base)] != base:
        raise DataError(f"unexpected truth header in {path}")
    extra_keys = header[len(base) :]
    n = len(rows)
    feats = np.zeros((n, d))
    mus = np.zeros((n, n_actions))
    pis = np.zeros((n, n_actions))
    extras = {k: np.zeros(n) for k in extra_keys}
    for i, row in enumerate(rows):
        feats[i] = [float(c) for c in row[:d]]
        mus[i] = [float(c) for c in row[d : d + n_actions]]
        pis[i] = [float(c) for c in row[d + n_actions : d + 2 * n_actions]]
        for k, cell in zip(extra_keys, row[len(base) :]):
            extras[k][i] = float(cell)
    return GroundTruth(feats, mus, pis, extras)


def features_from_csv(path: str, schema: FeatureSchema) -> tuple[np.ndarray, np.ndarray]:
    """Read a plain feature CSV (no action/reward); returns (values, mask)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    d = len(schema)
    if header[:d] != list(schema.names):
        raise DataError(f"unexpected feature header in {path}")
    n = len(rows)
    feats = np.zeros((n, d))
    mask = np.zeros((n, d), dtype=bool)
    for i, row in enumerate(rows):
        for j in range(d):
            cell = row[j].strip()
            if cell == "" or cell == MISSING_TOKEN:
                mask[i, j] = True
            else:
                feats[i, j] = float(cell)
    return feats, mask
