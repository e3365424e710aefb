"""Synthetic long-tailed Gaussian-blob data and epoch samplers."""
import csv
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

GROUP_NAMES = ("rare", "common", "frequent")
BACKGROUND_LABEL = -1


@dataclass(frozen=True)
class SyntheticSpec:
    """Exponentially decaying class sizes, one Gaussian blob per class.

    Class ``k`` gets ``round(max_count * imbalance_ratio ** (-k / (num_classes - 1)))``
    samples (halves round up). Class means sit on a sphere of radius
    ``class_separation / sqrt(2)``, so near-orthogonal means end up about
    ``class_separation`` apart. ``num_background`` adds an extra background
    blob labelled ``-1`` for the objectness variant.
    """

    num_classes: int = 20
    feature_dim: int = 16
    imbalance_ratio: float = 100.0
    max_count: int = 300
    class_separation: float = 4.0
    noise_std: float = 1.0
    seed: int = 0
    num_background: int = 0

    def validate(self):
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        if not self.imbalance_ratio > 1:
            raise ValueError("imbalance_ratio must be > 1")
        if self.max_count < 1:
            raise ValueError("max_count must be >= 1")
        if self.noise_std < 0 or self.class_separation < 0:
            raise ValueError("noise_std and class_separation must be non-negative")
        if self.num_background < 0:
            raise ValueError("num_background must be non-negative")
        if class_profile(self).min() < 1:
            raise ValueError("max_count / imbalance_ratio too small: some class would be empty")
        return self


def class_profile(spec):
    k = np.arange(spec.num_classes)
    raw = spec.max_count * spec.imbalance_ratio ** (-k / (spec.num_classes - 1))
    return np.floor(raw + 0.5).astype(np.int64)


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    spec: Optional[SyntheticSpec] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise ValueError("features must be (N, d) with one label per row")
        if self.labels.size and (self.labels.min() < BACKGROUND_LABEL or self.labels.max() >= self.num_classes):
            raise ValueError("labels out of range")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def feature_dim(self):
        return self.features.shape[1]

    @property
    def class_counts_static(self):
        fg = self.labels[self.labels >= 0]
        return np.bincount(fg, minlength=self.num_classes)

    @property
    def has_background(self):
        return bool(np.any(self.labels == BACKGROUND_LABEL))

    def subset(self, idx):
        return Dataset(self.features[idx], self.labels[idx], self.num_classes, self.spec)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label"] + [f"f{k}" for k in range(self.feature_dim)])
            for label, row in zip(self.labels.tolist(), self.features.tolist()):
                w.writerow([label] + [repr(v) for v in row])

    @classmethod
    def from_csv(cls, path, num_classes=None):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header or header[0] != "label":
                raise ValueError(f"{path}: header must start with 'label'")
            rows = [r for r in reader if r]
        dim = len(header) - 1
        labels = np.array([int(r[0]) for r in rows], dtype=np.int64)
        feats = np.array([[float(v) for v in r[1:]] for r in rows], dtype=np.float64).reshape(len(rows), dim)
        if num_classes is None:
            num_classes = int(labels.max()) + 1 if labels.size else 0
        return cls(feats, labels, num_classes)


def _streams(seed):
    means_ss, train_ss, test_ss = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(means_ss), np.random.default_rng(train_ss), np.random.default_rng(test_ss)


def _class_means(spec, rng):
    # row num_classes is the background blob
    dirs = rng.normal(size=(spec.num_classes + 1, spec.feature_dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return dirs * (spec.class_separation / math.sqrt(2.0))


def _sample(spec, means, counts, n_background, rng):
    labels = np.repeat(np.arange(spec.num_classes), counts)
    if n_background:
        labels = np.concatenate([labels, np.full(n_background, BACKGROUND_LABEL)])
    centres = means[np.where(labels == BACKGROUND_LABEL, spec.num_classes, labels)]
    feats = centres + spec.noise_std * rng.normal(size=centres.shape)
    return Dataset(feats, labels, spec.num_classes, spec)


def generate(spec):
    """Draw the long-tailed training set described by ``spec`` (deterministic in ``spec.seed``)."""
    spec.validate()
    means_rng, train_rng, _ = _streams(spec.seed)
    return _sample(spec, _class_means(spec, means_rng), class_profile(spec), spec.num_background, train_rng)


def generate_balanced(spec, per_class=100):
    """Held-out set with the same class means and ``per_class`` samples of every class."""
    spec.validate()
    means_rng, _, test_rng = _streams(spec.seed)
    counts = np.full(spec.num_classes, per_class)
    n_bg = per_class if spec.num_background else 0
    return _sample(spec, _class_means(spec, means_rng), counts, n_bg, test_rng)


@dataclass(frozen=True)
class SamplerKind:
    """``random`` (one permutation per epoch) or ``repeat_factor`` with threshold ``t``."""

    kind: str = "random"
    threshold: float = 0.001

    def __post_init__(self):
        if self.kind not in ("random", "repeat_factor"):
            raise ValueError(f"unknown sampler {self.kind!r}")
        if not 0 < self.threshold < 1:
            raise ValueError("repeat-factor threshold must be in (0, 1)")

    @classmethod
    def parse(cls, text):
        """Accept ``random``, ``rfs`` or ``rfs:<threshold>``."""
        name, _, t = str(text).strip().partition(":")
        name = {"rfs": "repeat_factor", "repeat_factor": "repeat_factor", "random": "random"}.get(name)
        if name is None:
            raise ValueError(f"unknown sampler {text!r}")
        return cls(name, float(t)) if t else cls(name)

    def __str__(self):
        return "random" if self.kind == "random" else f"rfs:{self.threshold!r}"


RANDOM = SamplerKind("random")


def repeat_factors(labels, num_classes, threshold=0.001):
    """Per-class ``max(1, sqrt(t / f_c))`` with ``f_c`` the fraction of samples in class ``c``.

    Classes without samples get factor 1.
    """
    labels = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(labels[labels >= 0], minlength=num_classes).astype(np.float64)
    freq = counts / max(labels.shape[0], 1)
    r = np.ones(num_classes)
    seen = freq > 0
    r[seen] = np.maximum(1.0, np.sqrt(threshold / freq[seen]))
    return r


def epoch_indices(ds, kind=RANDOM, seed=0, epoch=0):
    """Sample indices for one epoch, reproducible from ``(seed, epoch)`` alone.

    The repeat-factor sampler keeps ``floor(r)`` copies of each sample and one
    more with probability ``r - floor(r)``, then shuffles. Background samples
    are never repeated.
    """
    n = len(ds)
    if n == 0:
        raise ValueError("cannot sample from an empty dataset")
    rng = np.random.default_rng([int(seed), int(epoch)])
    if kind.kind == "random":
        return rng.permutation(n)
    r_class = repeat_factors(ds.labels, ds.num_classes, kind.threshold)
    r = np.where(ds.labels >= 0, r_class[np.maximum(ds.labels, 0)], 1.0)
    whole = np.floor(r)
    reps = whole.astype(np.int64) + (rng.random(n) < (r - whole))
    idx = np.repeat(np.arange(n), reps)
    rng.shuffle(idx)
    return idx


def group_thresholds(counts):
    """Default rare/common and common/frequent cut points: count tertiles."""
    counts = np.asarray(counts, dtype=np.float64)
    return float(np.quantile(counts, 1 / 3)), float(np.quantile(counts, 2 / 3))


def frequency_groups(counts, thresholds=None):
    """Group id per class: 0 rare (<= t1), 1 common (<= t2), 2 frequent."""
    counts = np.asarray(counts, dtype=np.float64)
    t1, t2 = thresholds if thresholds is not None else group_thresholds(counts)
    if t1 > t2:
        raise ValueError("group thresholds must be non-decreasing")
    return np.where(counts <= t1, 0, np.where(counts <= t2, 1, 2))


def with_seed(spec, seed):
    return replace(spec, seed=seed)
