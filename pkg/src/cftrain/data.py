"""Datasets, synthetic generators, CSV ingestion and domain-bound inference."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError


class Mutability(str, enum.Enum):
    FREE = "free"
    IMMUTABLE = "immutable"
    INCREASE_ONLY = "increase_only"
    DECREASE_ONLY = "decrease_only"


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    mutability: Mutability = Mutability.FREE
    domain: tuple[float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "mutability", Mutability(self.mutability))
        if self.domain is not None:
            lb, ub = (float(v) for v in self.domain)
            if lb > ub:
                raise InputError(f"feature {self.name!r}: lower bound {lb} exceeds upper bound {ub}")
            object.__setattr__(self, "domain", (lb, ub))


def default_specs(dim: int) -> list[FeatureSpec]:
    return [FeatureSpec(f"x{d + 1}") for d in range(dim)]


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    specs: list[FeatureSpec] = field(default_factory=list)
    n_classes: int | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y).astype(np.intp)
        if self.X.ndim != 2 or self.X.shape[0] < 1:
            raise InputError(f"X must be a non-empty 2-D array, got shape {self.X.shape}")
        if self.y.shape != (self.X.shape[0],):
            raise InputError(f"{self.X.shape[0]} rows but {self.y.shape} labels")
        if self.n_classes is None:
            self.n_classes = int(self.y.max()) + 1
        if np.any(self.y < 0) or np.any(self.y >= self.n_classes):
            raise InputError(f"labels must lie in [0, {self.n_classes})")
        if not self.specs:
            self.specs = default_specs(self.dim)
        self.specs = list(self.specs)
        if len(self.specs) != self.dim:
            raise InputError(f"{len(self.specs)} feature specs for {self.dim} features")
        for d, spec in enumerate(self.specs):
            if spec.domain is not None:
                col = self.X[:, d]
                if col.min() < spec.domain[0] or col.max() > spec.domain[1]:
                    raise InputError(f"feature {spec.name!r} has values outside its domain {spec.domain}")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def feature_names(self) -> list[str]:
        return [s.name for s in self.specs]

    def subset(self, index) -> "Dataset":
        return Dataset(self.X[index], self.y[index], self.specs, self.n_classes)

    def class_members(self, k: int) -> np.ndarray:
        return self.X[self.y == k]

    def with_specs(self, specs: Sequence[FeatureSpec]) -> "Dataset":
        return Dataset(self.X, self.y, list(specs), self.n_classes)

    def with_mutability(self, mutability: Mapping[str | int, Mutability | str]) -> "Dataset":
        return self.with_specs(apply_mutability(self.specs, mutability))


def apply_mutability(specs: Sequence[FeatureSpec], mutability: Mapping[str | int, Mutability | str]) -> list[FeatureSpec]:
    names = [s.name for s in specs]
    out = list(specs)
    for key, mut in mutability.items():
        if isinstance(key, (int, np.integer)):
            d = int(key)
            if not 0 <= d < len(out):
                raise InputError(f"feature index {d} out of range")
        elif key in names:
            d = names.index(key)
        else:
            raise InputError(f"unknown feature {key!r}; known: {names}")
        out[d] = replace(out[d], mutability=Mutability(mut))
    return out


def domain_arrays(specs: Sequence[FeatureSpec]) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper bounds per feature, infinite where no domain is set."""
    lb = np.array([s.domain[0] if s.domain else -np.inf for s in specs])
    ub = np.array([s.domain[1] if s.domain else np.inf for s in specs])
    return lb, ub


class SyntheticKind(str, enum.Enum):
    LINEARLY_SEPARABLE = "ls"
    OVERLAPPING = "ol"
    CIRCLES = "circles"
    MOONS = "moons"


# Default noise level per generator: Gaussian std for the two blob kinds,
# radial std for circles, coordinate std for moons.
DEFAULT_NOISE = {
    SyntheticKind.LINEARLY_SEPARABLE: 0.5,
    SyntheticKind.OVERLAPPING: 2.0,
    SyntheticKind.CIRCLES: 0.05,
    SyntheticKind.MOONS: 0.1,
}
BLOB_CENTER = 2.0
CIRCLE_RADII = (0.5, 1.0)

_ALIASES = {
    "linearly_separable": SyntheticKind.LINEARLY_SEPARABLE,
    "overlapping": SyntheticKind.OVERLAPPING,
    "over": SyntheticKind.OVERLAPPING,
    "circ": SyntheticKind.CIRCLES,
    "circle": SyntheticKind.CIRCLES,
    "moon": SyntheticKind.MOONS,
}


def synthetic_kind(kind: str | SyntheticKind) -> SyntheticKind:
    if isinstance(kind, SyntheticKind):
        return kind
    key = str(kind).lower()
    if key in _ALIASES:
        return _ALIASES[key]
    try:
        return SyntheticKind(key)
    except ValueError:
        raise InputError(f"unknown synthetic dataset {kind!r}") from None


def gen_synthetic(kind: str | SyntheticKind, n: int, noise: float | None = None, seed: int = 0) -> Dataset:
    """Balanced two-class, two-feature toy data; deterministic per seed."""
    kind = synthetic_kind(kind)
    if n < 4 or n % 2:
        raise InputError(f"need an even number of samples >= 4, got {n}")
    noise = DEFAULT_NOISE[kind] if noise is None else float(noise)
    if noise < 0:
        raise InputError("noise must be non-negative")
    rng = np.random.default_rng(seed)
    half = n // 2
    y = np.repeat([0, 1], half)

    if kind in (SyntheticKind.LINEARLY_SEPARABLE, SyntheticKind.OVERLAPPING):
        centers = np.where(y[:, None] == 0, -BLOB_CENTER, BLOB_CENTER) * np.ones((n, 2))
        X = centers + noise * rng.standard_normal((n, 2))
    elif kind is SyntheticKind.CIRCLES:
        angle = rng.uniform(0.0, 2 * np.pi, n)
        radius = np.where(y == 0, CIRCLE_RADII[0], CIRCLE_RADII[1]) + noise * rng.standard_normal(n)
        X = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
    else:
        t = rng.uniform(0.0, np.pi, n)
        upper = np.column_stack([np.cos(t), np.sin(t)])
        lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
        X = np.where(y[:, None] == 0, upper, lower) + noise * rng.standard_normal((n, 2))

    order = rng.permutation(n)
    return Dataset(X[order], y[order], default_specs(2), 2)


def gen_gaussian_mixture(n: int, means: Sequence[float], sigma: float | Sequence[float], seed: int = 0) -> Dataset:
    """Two Gaussians centred at ``-means`` and ``+means`` with diagonal covariance.

    ``sigma`` is a common standard deviation or one per feature.
    """
    if n < 4 or n % 2:
        raise InputError(f"need an even number of samples >= 4, got {n}")
    mu = np.asarray(means, dtype=np.float64)
    if mu.ndim != 1 or mu.size == 0:
        raise InputError("means must be a non-empty vector")
    try:
        sd = np.broadcast_to(np.asarray(sigma, dtype=np.float64), mu.shape)
    except ValueError:
        raise InputError(f"need one standard deviation or {mu.size}, got {np.shape(sigma)}") from None
    if np.any(sd < 0):
        raise InputError("standard deviations must be non-negative")
    rng = np.random.default_rng(seed)
    y = np.repeat([0, 1], n // 2)
    sign = np.where(y == 0, -1.0, 1.0)[:, None]
    X = sign * mu + sd * rng.standard_normal((n, mu.size))
    order = rng.permutation(n)
    return Dataset(X[order], y[order], default_specs(mu.size), 2)


STD_FLOOR = 1e-12


def standardize(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Z-score columns; constant columns become all zeros."""
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    safe = np.where(sd < STD_FLOOR, 1.0, sd)
    Z = (X - mu) / safe
    Z[:, sd < STD_FLOOR] = 0.0
    return Z, mu, sd


def load_csv(
    path: str | Path,
    label_column: str,
    overrides: Mapping[str | int, Mutability | str] | None = None,
    standardize_features: bool = True,
) -> Dataset:
    """Read a headed, comma-separated file of numeric features and one label column.

    Labels are mapped to ``0..K-1`` in order of first appearance.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise InputError(f"{path}: file is empty")
    header = [h.strip() for h in rows[0]]
    if label_column not in header:
        raise InputError(f"{path}: label column {label_column!r} not found in header {header}")
    if len(rows) < 2:
        raise InputError(f"{path}: no data rows")
    label_idx = header.index(label_column)
    feature_idx = [i for i in range(len(header)) if i != label_idx]
    if not feature_idx:
        raise InputError(f"{path}: no feature columns")

    X = np.empty((len(rows) - 1, len(feature_idx)))
    labels: list[str] = []
    for r, row in enumerate(rows[1:]):
        line = r + 2
        if len(row) != len(header):
            raise InputError(f"{path}: row {line} has {len(row)} cells, header has {len(header)}")
        for j, i in enumerate(feature_idx):
            cell = row[i].strip()
            try:
                X[r, j] = float(cell)
            except ValueError:
                raise InputError(f"{path}: row {line}, column {header[i]!r}: non-numeric value {cell!r}") from None
            if not math.isfinite(X[r, j]):
                raise InputError(f"{path}: row {line}, column {header[i]!r}: non-finite value {cell!r}")
        labels.append(row[label_idx].strip())

    classes: dict[str, int] = {}
    for lab in labels:
        classes.setdefault(lab, len(classes))
    if len(classes) < 2:
        raise InputError(f"{path}: label column {label_column!r} has fewer than two classes")
    y = np.array([classes[lab] for lab in labels])

    if standardize_features:
        X, _, _ = standardize(X)
    specs = [FeatureSpec(header[i]) for i in feature_idx]
    if overrides:
        specs = apply_mutability(specs, overrides)
    return Dataset(X, y, specs, len(classes))


def save_csv(ds: Dataset, path: str | Path, label_column: str = "label") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*ds.feature_names, label_column])
        for row, label in zip(ds.X, ds.y):
            w.writerow([repr(float(v)) for v in row] + [int(label)])


def infer_domain_bounds(X, n_sigma: float = 3.0) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature bounds wide enough for ``mean +- n_sigma * std`` and the sample range."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise InputError("need at least two samples to infer domain bounds")
    mu = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    lb = np.minimum(mu - n_sigma * sd, X.min(axis=0))
    ub = np.maximum(mu + n_sigma * sd, X.max(axis=0))
    return lb, ub


def with_inferred_domain(ds: Dataset, n_sigma: float = 3.0) -> Dataset:
    lb, ub = infer_domain_bounds(ds.X, n_sigma)
    specs = [replace(s, domain=(float(lo), float(hi))) for s, lo, hi in zip(ds.specs, lb, ub)]
    return ds.with_specs(specs)


def train_test_split(ds: Dataset, test_fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Stratified split. The test size is ``round(n * test_fraction)``, shared
    across classes by largest remainder so every class keeps its proportion
    to within one sample."""
    if not 0.0 < test_fraction < 1.0:
        raise InputError(f"test fraction must lie in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    n_test = int(round(ds.n * test_fraction))
    classes = np.unique(ds.y)
    counts = np.array([np.sum(ds.y == k) for k in classes])
    exact = counts * test_fraction
    alloc = np.floor(exact).astype(int)
    for i in np.argsort(-(exact - alloc), kind="stable")[: n_test - alloc.sum()]:
        alloc[i] += 1

    test_idx = []
    for k, take in zip(classes, alloc):
        members = np.flatnonzero(ds.y == k)
        test_idx.append(rng.permutation(members)[:take])
    test_idx = np.sort(np.concatenate(test_idx))
    mask = np.zeros(ds.n, dtype=bool)
    mask[test_idx] = True
    train_idx = np.flatnonzero(~mask)
    if train_idx.size == 0 or test_idx.size == 0:
        raise InputError(f"split of {ds.n} samples at fraction {test_fraction} leaves an empty side")
    train_idx = rng.permutation(train_idx)
    test_idx = rng.permutation(test_idx)
    return ds.subset(train_idx), ds.subset(test_idx)
