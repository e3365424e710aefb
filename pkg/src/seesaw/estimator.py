"""scikit-learn compatible wrapper around the trainer."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, validate_data

from .data import Dataset, SamplerKind
from .losses import ClassCounts, SeesawConfig
from .numerics import softmax
from .trainer import Decoupled, TrainConfig, fit_head


class SeesawClassifier(ClassifierMixin, BaseEstimator):
    """Linear (optionally cosine-normalised) classifier trained with Seesaw or CE loss.

    Parameters mirror ``SeesawConfig`` and ``TrainConfig``. ``class_counts``
    supplies pre-recorded counts when ``count_source='pre_recorded'``.
    ``pipeline='decoupled'`` pretrains with cross-entropy and then re-fits the
    classifier with ``finetune_sampler``.

    Attributes
    ----------
    classes_ : ndarray of shape (n_classes,)
    head_ : LinearHead
    counts_ : ClassCounts or None
        Cumulative class counts at the end of training (Seesaw only).
    telemetry_ : TelemetryLog
    loss_curve_ : list of float
    """

    def __init__(self, loss="seesaw", p=0.8, q=2.0, tau=20.0, use_mitigation=True, use_compensation=True,
                 normalized=False, count_source="online", class_counts=None, epochs=30, batch_size=16,
                 lr=0.05, momentum=0.9, weight_decay=0.0, sampler="random", pipeline="end_to_end",
                 finetune_sampler="rfs", finetune_epochs=None, random_state=0):
        self.loss = loss
        self.p = p
        self.q = q
        self.tau = tau
        self.use_mitigation = use_mitigation
        self.use_compensation = use_compensation
        self.normalized = normalized
        self.count_source = count_source
        self.class_counts = class_counts
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.sampler = sampler
        self.pipeline = pipeline
        self.finetune_sampler = finetune_sampler
        self.finetune_epochs = finetune_epochs
        self.random_state = random_state

    def _train_config(self):
        if self.pipeline not in ("end_to_end", "decoupled"):
            raise ValueError(f"pipeline must be 'end_to_end' or 'decoupled', got {self.pipeline!r}")
        seesaw = SeesawConfig(p=self.p, q=self.q, tau=self.tau, use_mitigation=self.use_mitigation,
                              use_compensation=self.use_compensation, normalized=self.normalized,
                              count_source=self.count_source)
        pipeline = None
        if self.pipeline == "decoupled":
            pipeline = Decoupled(finetune_sampler=_sampler(self.finetune_sampler),
                                 finetune_epochs=self.finetune_epochs)
        seed = self.random_state if self.random_state is not None else 0
        if not isinstance(seed, (int, np.integer)):
            raise ValueError("random_state must be an int or None")
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr, momentum=self.momentum,
                           weight_decay=self.weight_decay, sampler=_sampler(self.sampler), loss=self.loss,
                           seesaw=seesaw, pipeline=pipeline, seed=int(seed)).validate()

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=np.float64)
        check_classification_targets(y)
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        if self.classes_.shape[0] < 2:
            raise ValueError(f"need samples of at least two classes; got {self.classes_.shape[0]} class")
        cfg = self._train_config()
        counts = self.class_counts
        if counts is not None and not isinstance(counts, ClassCounts):
            counts = ClassCounts(np.asarray(counts, dtype=np.float64))
        ds = Dataset(X, y_enc, self.classes_.shape[0])
        result, curve = fit_head(ds, cfg, initial_counts=counts)
        self.head_ = result.head
        self.counts_ = result.counts
        self.telemetry_ = result.telemetry
        self.loss_curve_ = curve
        return self

    def _logits(self, X):
        check_is_fitted(self, "head_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return self.head_.forward(X)

    def decision_function(self, X):
        """Logits; for two classes the margin of ``classes_[1]`` over ``classes_[0]``."""
        z = self._logits(X)
        return z[:, 1] - z[:, 0] if z.shape[1] == 2 else z

    def predict_proba(self, X):
        return softmax(self._logits(X))

    def predict(self, X):
        z = self._logits(X)
        return self.classes_[np.argmax(z, axis=1)]


def _sampler(value):
    return value if isinstance(value, SamplerKind) else SamplerKind.parse(value)
