"""Cross-entropy and Seesaw losses with analytic logit gradients.

All functions take either one logit vector with an integer label, or a
``(batch, num_classes)`` logit matrix with an integer label array. In the
batched form ``LossResult.loss`` holds one loss per sample and
``grad_logits`` one gradient row per sample (no batch averaging).

Seesaw re-weights the negative terms of the softmax denominator by
``S[j] = M[j] * C[j]``. We evaluate it as a softmax over ``z + log S`` (with
``log S[label] = 0``), which keeps everything finite for extreme factors and
makes the ``S == 1`` case take exactly the cross-entropy code path.
"""
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .numerics import as_float_array, log_softmax, logsumexp, softmax

COUNT_SOURCES = ("online", "pre_recorded", "from_dataset")


class LabelError(ValueError):
    pass


@dataclass(frozen=True)
class SeesawConfig:
    """Seesaw hyper-parameters and component switches.

    ``normalized`` turns on the cosine (normalised linear) classifier head and
    ``tau`` is its temperature; the head owns ``tau`` once constructed.
    """

    p: float = 0.8
    q: float = 2.0
    tau: float = 20.0
    use_mitigation: bool = True
    use_compensation: bool = True
    normalized: bool = False
    objectness: bool = False
    count_source: str = "online"

    def __post_init__(self):
        if self.p < 0 or self.q < 0:
            raise ValueError(f"p and q must be >= 0, got p={self.p}, q={self.q}")
        if not self.tau > 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.count_source not in COUNT_SOURCES:
            raise ValueError(f"count_source must be one of {COUNT_SOURCES}, got {self.count_source!r}")

    @classmethod
    def imagenet_lt(cls, **overrides):
        """Long-tailed image classification preset (weaker compensation, q=1)."""
        return replace(cls(q=1.0), **overrides)

    @classmethod
    def disabled(cls, **overrides):
        """Both factors off: S == 1 and the loss is plain cross-entropy."""
        return replace(cls(use_mitigation=False, use_compensation=False), **overrides)


@dataclass
class LossResult:
    loss: Union[float, np.ndarray]
    grad_logits: np.ndarray


@dataclass
class SeesawFactors:
    """Per-class multipliers for one sample; entries at the positive label are 1."""

    S: np.ndarray
    M: np.ndarray
    C: np.ndarray


@dataclass(frozen=True)
class ClassCounts:
    """Cumulative per-class instance counts, never below ``init_value``."""

    counts: np.ndarray
    init_value: float = 1.0

    def __post_init__(self):
        arr = np.array(self.counts, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("counts must be a non-empty 1-d array")
        if not self.init_value > 0:
            raise ValueError("init_value must be positive")
        if np.any(~np.isfinite(arr)) or np.any(arr < self.init_value):
            raise ValueError("every count must be finite and >= init_value")
        arr.setflags(write=False)
        object.__setattr__(self, "counts", arr)

    @classmethod
    def uniform(cls, num_classes, init_value=1.0):
        return cls(np.full(int(num_classes), float(init_value)), init_value)

    @property
    def num_classes(self):
        return self.counts.shape[0]

    def update(self, labels):
        return counts_update(self, labels)

    def to_text(self):
        return "".join(f"{k},{c!r}\n" for k, c in enumerate(self.counts.tolist()))

    @classmethod
    def from_text(cls, text, init_value=1.0):
        rows = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            try:
                k, c = line.split(",")
                rows[int(k)] = float(c)
            except ValueError:
                raise ValueError(f"bad class-count line {lineno}: {line!r}") from None
        if sorted(rows) != list(range(len(rows))):
            raise ValueError("class indices must be 0..C-1 with no gaps")
        return cls(np.array([rows[k] for k in range(len(rows))]), init_value)

    def save(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path, init_value=1.0):
        with open(path) as fh:
            return cls.from_text(fh.read(), init_value)


def _check_labels(labels, num_classes):
    labels = np.asarray(labels)
    if labels.size and not np.issubdtype(labels.dtype, np.integer):
        if not np.all(np.equal(np.mod(labels, 1), 0)):
            raise LabelError("labels must be integers")
        labels = labels.astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise LabelError(f"label out of range [0, {num_classes})")
    return labels.astype(np.int64)


def _prepare(z, label):
    z = as_float_array(z, (1, 2), "logits")
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite")
    single = z.ndim == 1
    z2 = z[None, :] if single else z
    labels = _check_labels(np.atleast_1d(label), z2.shape[1])
    if labels.shape != (z2.shape[0],):
        raise LabelError(f"expected {z2.shape[0]} labels, got {labels.shape}")
    return z2, labels, single


def _adjusted_ce(z2, labels, log_s=None):
    adj = z2 if log_s is None else z2 + log_s
    rows = np.arange(z2.shape[0])
    loss = logsumexp(adj) - adj[rows, labels]
    grad = softmax(adj)
    grad[rows, labels] -= 1.0
    return np.maximum(loss, 0.0), grad


def _result(loss, grad, single):
    if single:
        return LossResult(float(loss[0]), grad[0])
    return LossResult(loss, grad)


def ce_loss(z, label):
    """Softmax cross-entropy: ``grad = softmax(z) - onehot(label)``."""
    z2, labels, single = _prepare(z, label)
    return _result(*_adjusted_ce(z2, labels), single)


def mitigation_factor(counts, i, j, p):
    """``(N_j / N_i) ** p`` when class ``i`` has been seen more often than ``j``, else 1."""
    n = counts.counts if isinstance(counts, ClassCounts) else np.asarray(counts, dtype=np.float64)
    if n[i] <= n[j]:
        return 1.0
    return float((n[j] / n[i]) ** p)


def compensation_factor(sigma, i, j, q):
    """``(sigma_j / sigma_i) ** q`` when ``j`` out-scores the true class ``i``, else 1."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma[j] <= sigma[i]:
        return 1.0
    return float((sigma[j] / sigma[i]) ** q)


def seesaw_log_factors(z, labels, counts, cfg):
    """Return ``(log M, log C)`` as ``(batch, num_classes)`` arrays.

    Both are zero in the positive-label column. The compensation term uses
    the plain softmax of ``z``; neither term is differentiated through.
    """
    z2 = as_float_array(z, 2, "logits")
    labels = np.asarray(labels, dtype=np.int64)
    rows = np.arange(z2.shape[0])
    log_m = np.zeros_like(z2)
    log_c = np.zeros_like(z2)
    if cfg.use_mitigation:
        n = counts.counts if isinstance(counts, ClassCounts) else np.asarray(counts, dtype=np.float64)
        if n.shape[0] != z2.shape[1]:
            raise ValueError(f"counts cover {n.shape[0]} classes, logits have {z2.shape[1]}")
        log_n = np.log(n)
        log_m = cfg.p * np.minimum(log_n[None, :] - log_n[labels][:, None], 0.0)
        log_m[rows, labels] = 0.0
    if cfg.use_compensation:
        log_sigma = log_softmax(z2)
        log_c = cfg.q * np.maximum(log_sigma - log_sigma[rows, labels][:, None], 0.0)
        log_c[rows, labels] = 0.0
    return log_m, log_c


def seesaw_factors(z, label, counts, cfg):
    """Mitigation, compensation and combined factors for a single sample."""
    z2, labels, single = _prepare(z, label)
    if not single:
        raise ValueError("seesaw_factors takes a single logit vector")
    log_m, log_c = seesaw_log_factors(z2, labels, counts, cfg)
    M, C = np.exp(log_m[0]), np.exp(log_c[0])
    return SeesawFactors(S=M * C, M=M, C=C)


def seesaw_loss(z, label, counts, cfg=None):
    """Seesaw loss and its gradient w.r.t. the logits, with ``S`` held constant.

    For a negative class ``j`` the gradient is ``S[j] * exp(z_j - z_i) * sigma_hat_i``;
    for the positive class ``i`` it is ``sigma_hat_i - 1``.
    """
    cfg = cfg or SeesawConfig()
    z2, labels, single = _prepare(z, label)
    if not (cfg.use_mitigation or cfg.use_compensation):
        return _result(*_adjusted_ce(z2, labels), single)
    log_m, log_c = seesaw_log_factors(z2, labels, counts, cfg)
    return _result(*_adjusted_ce(z2, labels, log_m + log_c), single)


def loss_with_factors(z, label, S):
    """Seesaw loss for externally supplied factors ``S`` (``S[label]`` is ignored)."""
    z2, labels, single = _prepare(z, label)
    S = np.atleast_2d(as_float_array(S, (1, 2), "S"))
    if S.shape != z2.shape:
        raise ValueError(f"S shape {S.shape} does not match logits {z2.shape}")
    if np.any(S <= 0):
        raise ValueError("factors must be positive")
    log_s = np.log(S)
    log_s[np.arange(z2.shape[0]), labels] = 0.0
    return _result(*_adjusted_ce(z2, labels, log_s), single)


def negative_grad_sensitivity(z, label, S, j):
    """Partial derivative of the class-``j`` negative gradient w.r.t. ``S[j]``.

    Equals ``e^{z_j} (sum_{k != i, j} S_k e^{z_k} + e^{z_i}) / D**2`` with
    ``D = sum_{k != i} S_k e^{z_k} + e^{z_i}``, which is strictly positive.
    """
    z = as_float_array(z, 1, "logits")
    S = np.array(S, dtype=np.float64)
    if j == label:
        raise ValueError("j must be a negative class")
    S[label] = 1.0
    w = S * np.exp(z - np.max(z))
    e_j = np.exp(z[j] - np.max(z))
    denom = np.sum(w)
    return float(e_j * (denom - w[j]) / denom**2)


def counts_update(counts, labels):
    """Add one to ``counts[k]`` for every occurrence of ``k`` in ``labels``."""
    labels = _check_labels(np.asarray(labels).ravel(), counts.num_classes)
    added = np.bincount(labels, minlength=counts.num_classes)
    return ClassCounts(counts.counts + added, counts.init_value)


def counts_from_dataset(labels, num_classes=None, init_value=1.0):
    """Static label frequencies offset by ``init_value``."""
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if labels.size else 1
    return counts_update(ClassCounts.uniform(num_classes, init_value), labels)
