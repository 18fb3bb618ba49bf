"""Synthetic classification data, CSV ingestion and labeled/unlabeled/test splits.

Datasets and splits are immutable values: revealing labels returns a new
split, so runs can share them freely.  Labels are stored for every sample;
strategies that must not see pool labels are kept honest by API surface (they
only ever receive features), not by erasing the labels.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .util import rng_from

LABEL_COLUMN = "__label__"

IMBALANCE_KINDS = ("none", "linear", "exponential")
INIT_POLICIES = ("random", "twisted-main", "twisted-rare")


class CsvFormatError(ValueError):
    """A CSV file could not be parsed into a dataset."""


@dataclass(frozen=True, eq=False)
class Sample:
    id: int
    features: np.ndarray
    label: int


class Dataset:
    """A fixed collection of samples with a common feature dimension."""

    def __init__(self, samples):
        samples = list(samples)
        if not samples:
            raise ValueError("dataset must contain at least one sample")
        dim = samples[0].features.shape[0]
        seen = set()
        for s in samples:
            if s.features.ndim != 1 or s.features.shape[0] != dim:
                raise ValueError(f"sample {s.id}: inconsistent feature dimension")
            if s.id in seen:
                raise ValueError(f"duplicate sample id {s.id}")
            seen.add(s.id)
        self.samples: dict[int, Sample] = {s.id: s for s in samples}
        self.ids: tuple[int, ...] = tuple(sorted(seen))
        self.dim = dim
        self.num_classes = max(s.label for s in samples) + 1
        if any(s.label < 0 for s in samples):
            raise ValueError("labels must be non-negative class indices")

    def __len__(self) -> int:
        return len(self.samples)

    def subset(self, ids) -> "Dataset":
        return Dataset([self.samples[i] for i in sorted(ids)])

    def features_of(self, ids) -> np.ndarray:
        return np.stack([self.samples[i].features for i in ids])

    def labels_of(self, ids) -> np.ndarray:
        return np.array([self.samples[i].label for i in ids], dtype=np.int64)

    def class_counts(self) -> np.ndarray:
        counts = np.zeros(self.num_classes, dtype=np.int64)
        for s in self.samples.values():
            counts[s.label] += 1
        return counts


@dataclass(frozen=True)
class ImbalanceSpec:
    """Per-class subsampling rule.

    kind "linear" uses explicit ratios (count proportional to ratio, with the
    largest ratio mapped to the largest class count); "exponential" decays
    counts by factor**(-c / (C-1)).
    """

    kind: str = "none"
    ratios: tuple[float, ...] | None = None
    factor: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in IMBALANCE_KINDS:
            raise ValueError(f"unknown imbalance kind {self.kind!r}")
        if self.kind == "linear":
            if not self.ratios or any(r <= 0 for r in self.ratios):
                raise ValueError("linear imbalance needs positive ratios")
        if self.kind == "exponential":
            if self.factor is None or self.factor <= 1:
                raise ValueError("exponential imbalance needs factor > 1")

    def target_counts(self, num_classes: int, n_max: int) -> np.ndarray:
        if self.kind == "none":
            raise ValueError("no target counts for kind 'none'")
        if self.kind == "linear":
            if len(self.ratios) != num_classes:
                raise ValueError(
                    f"need {num_classes} ratios, got {len(self.ratios)}"
                )
            top = max(self.ratios)
            counts = [int(math.floor(n_max * r / top + 0.5)) for r in self.ratios]
        else:
            counts = [
                int(math.floor(n_max * self.factor ** (-c / (num_classes - 1)) + 0.5))
                for c in range(num_classes)
            ]
        if any(c < 1 for c in counts):
            raise ValueError("derived class counts must all be >= 1")
        return np.array(counts, dtype=np.int64)


def _class_means(num_classes: int, dim: int, class_sep: float,
                 rng: np.random.Generator) -> np.ndarray:
    """Class centers with pairwise distances set by class_sep.

    For C <= dim the centers form a regular simplex (all pairwise distances
    exactly class_sep) under a seeded random rotation; otherwise random unit
    directions scaled to class_sep / sqrt(2), which gives approximately that
    spacing in high dimension.
    """
    if num_classes <= dim:
        base = np.zeros((num_classes, dim))
        base[:, :num_classes] = np.eye(num_classes) - 1.0 / num_classes
        base *= class_sep / math.sqrt(2.0)
        raw = rng.standard_normal((dim, dim))
        q, r = np.linalg.qr(raw)
        q = q * np.sign(np.diag(r))
        return base @ q.T
    dirs = rng.standard_normal((num_classes, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return dirs * (class_sep / math.sqrt(2.0))


def gen_gaussian_mixture(num_classes: int, dim: int, per_class_count: int,
                         class_sep: float, seed: int) -> Dataset:
    """Isotropic Gaussian blobs, one per class, unit variance.

    Deterministic for a given seed: class means are placed first, then noise
    is drawn in id order.
    """
    if num_classes < 2 or dim < 2 or per_class_count < 2:
        raise ValueError("need num_classes >= 2, dim >= 2, per_class_count >= 2")
    if class_sep <= 0:
        raise ValueError("class_sep must be positive")
    rng = rng_from(seed)
    means = _class_means(num_classes, dim, class_sep, rng)
    noise = rng.standard_normal((num_classes * per_class_count, dim))
    samples = []
    for c in range(num_classes):
        for j in range(per_class_count):
            sid = c * per_class_count + j
            samples.append(Sample(sid, means[c] + noise[sid], c))
    return Dataset(samples)


def apply_imbalance(dataset: Dataset, spec: ImbalanceSpec, seed: int) -> Dataset:
    """Subsample each class down to the spec-derived count."""
    if spec.kind == "none":
        return dataset
    counts = dataset.class_counts()
    targets = spec.target_counts(dataset.num_classes, int(counts.max()))
    rng = rng_from(seed)
    kept: list[int] = []
    for c in range(dataset.num_classes):
        class_ids = np.array([i for i in dataset.ids
                              if dataset.samples[i].label == c])
        if targets[c] > len(class_ids):
            raise ValueError(
                f"class {c}: target count {targets[c]} exceeds available "
                f"{len(class_ids)}"
            )
        kept.extend(rng.choice(class_ids, size=targets[c], replace=False).tolist())
    return dataset.subset(kept)


def save_csv(dataset: Dataset, path) -> None:
    """Write features (f0..fD-1 header) plus a __label__ column, id order."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{k}" for k in range(dataset.dim)] + [LABEL_COLUMN])
        for i in dataset.ids:
            s = dataset.samples[i]
            writer.writerow([f"{v!r}" for v in s.features.tolist()] + [s.label])


def load_csv(path, label_column: str = LABEL_COLUMN) -> Dataset:
    """Load a rectangular numeric CSV with a header and a categorical label column.

    Labels are mapped to 0..C-1 in order of first appearance.  Errors report
    the 1-based file row (the header is row 1).
    """
    try:
        fh = open(path, "r", newline="", encoding="utf-8")
    except OSError as exc:
        raise CsvFormatError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        if label_column not in header:
            raise CsvFormatError(f"{path}: no column named {label_column!r}")
        label_idx = header.index(label_column)
        feature_idx = [k for k in range(len(header)) if k != label_idx]
        label_map: dict[str, int] = {}
        samples = []
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise CsvFormatError(
                    f"{path}: row {row_no} has {len(row)} fields, expected "
                    f"{len(header)}"
                )
            try:
                feats = np.array([float(row[k]) for k in feature_idx])
            except ValueError as exc:
                raise CsvFormatError(
                    f"{path}: row {row_no}: non-numeric feature ({exc})"
                ) from None
            key = row[label_idx]
            if key not in label_map:
                label_map[key] = len(label_map)
            samples.append(Sample(len(samples), feats, label_map[key]))
        if not samples:
            raise CsvFormatError(f"{path}: no data rows")
    return Dataset(samples)


@dataclass(frozen=True)
class DatasetSplit:
    """Labeled / unlabeled / test partition over a dataset's samples."""

    labeled_ids: frozenset
    unlabeled_ids: frozenset
    test_ids: frozenset
    samples: dict

    def labeled(self) -> list[Sample]:
        return [self.samples[i] for i in sorted(self.labeled_ids)]

    def unlabeled(self) -> list[Sample]:
        return [self.samples[i] for i in sorted(self.unlabeled_ids)]

    def test(self) -> list[Sample]:
        return [self.samples[i] for i in sorted(self.test_ids)]


def _stratified_test_ids(dataset: Dataset, test_fraction: float,
                         rng: np.random.Generator) -> list[int]:
    """Largest-remainder apportionment of round(f*n) test slots across classes."""
    total = int(math.floor(test_fraction * len(dataset) + 0.5))
    counts = dataset.class_counts()
    raw = counts * test_fraction
    base = np.floor(raw).astype(np.int64)
    base = np.minimum(base, counts)
    leftover = total - int(base.sum())
    if leftover > 0:
        order = np.argsort(-(raw - np.floor(raw)), kind="stable")
        for c in order:
            if leftover == 0:
                break
            if base[c] < counts[c]:
                base[c] += 1
                leftover -= 1
    test_ids: list[int] = []
    for c in range(dataset.num_classes):
        class_ids = np.array([i for i in dataset.ids
                              if dataset.samples[i].label == c])
        if base[c] > 0:
            test_ids.extend(rng.choice(class_ids, size=base[c],
                                       replace=False).tolist())
    return test_ids


def init_split(dataset: Dataset, initial_labeled: int, test_fraction: float,
               seed: int, policy: str = "random", rare_count: int = 50,
               main_count: int = 950) -> DatasetSplit:
    """Draw the test set (stratified) and the initial labeled set.

    policy "random" samples the initial labeled set uniformly from the train
    pool; the "twisted" policies skew it, drawing rare_count samples from one
    half of the classes (sorted by pool size) and main_count from the other.
    """
    if policy not in INIT_POLICIES:
        raise ValueError(f"unknown init policy {policy!r}")
    if initial_labeled < 1:
        raise ValueError("initial_labeled must be >= 1")
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError("test_fraction must be in [0, 1)")
    rng = rng_from(seed)
    test_ids = _stratified_test_ids(dataset, test_fraction, rng)
    if initial_labeled + len(test_ids) > len(dataset):
        raise ValueError(
            f"initial_labeled {initial_labeled} + test {len(test_ids)} exceeds "
            f"dataset size {len(dataset)}"
        )
    pool = np.array(sorted(set(dataset.ids) - set(test_ids)))

    if policy == "random":
        labeled = rng.choice(pool, size=initial_labeled, replace=False).tolist()
    else:
        if rare_count + main_count != initial_labeled:
            raise ValueError(
                "twisted policies need rare_count + main_count == initial_labeled"
            )
        pool_labels = dataset.labels_of(pool)
        counts = np.bincount(pool_labels, minlength=dataset.num_classes)
        order = np.argsort(counts, kind="stable")
        rare_classes = set(order[: dataset.num_classes // 2].tolist())
        rare_pool = pool[np.isin(pool_labels, sorted(rare_classes))]
        main_pool = pool[~np.isin(pool_labels, sorted(rare_classes))]
        if policy == "twisted-main":
            take_rare, take_main = rare_count, main_count
        else:
            take_rare, take_main = main_count, rare_count
        if take_rare > len(rare_pool) or take_main > len(main_pool):
            raise ValueError("twisted policy draws exceed class-group pools")
        labeled = rng.choice(rare_pool, size=take_rare, replace=False).tolist()
        labeled += rng.choice(main_pool, size=take_main, replace=False).tolist()

    labeled_set = frozenset(int(i) for i in labeled)
    return DatasetSplit(
        labeled_ids=labeled_set,
        unlabeled_ids=frozenset(int(i) for i in pool) - labeled_set,
        test_ids=frozenset(int(i) for i in test_ids),
        samples=dict(dataset.samples),
    )


def reveal_labels(split: DatasetSplit, ids) -> DatasetSplit:
    """Move ids from the unlabeled pool to the labeled set."""
    ids = set(int(i) for i in ids)
    stray = ids - split.unlabeled_ids
    if stray:
        raise ValueError(f"ids not in the unlabeled pool: {sorted(stray)[:5]}")
    return DatasetSplit(
        labeled_ids=split.labeled_ids | ids,
        unlabeled_ids=split.unlabeled_ids - ids,
        test_ids=split.test_ids,
        samples=split.samples,
    )
