"""Momentum-SGD training of a linear head under CE or Seesaw loss."""
import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .data import (GROUP_NAMES, RANDOM, Dataset, SamplerKind, epoch_indices, frequency_groups,
                   generate_balanced)
from .heads import BACKGROUND, FOREGROUND, LinearHead, foreground_probability, objectness_head
from .losses import ClassCounts, SeesawConfig, ce_loss, counts_from_dataset, seesaw_loss
from .numerics import softmax
from .telemetry import TelemetryLog

DIVERGENCE_LIMIT = 1e6
LOSSES = ("ce", "seesaw")


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch, batch, loss):
        super().__init__(f"loss diverged ({loss!r}) at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


@dataclass(frozen=True)
class Decoupled:
    """Two-phase pipeline: pretrain, then re-initialise the classifier and finetune it.

    ``finetune_epochs=None`` means half the pretraining epochs.
    """

    pretrain_loss: str = "ce"
    finetune_sampler: SamplerKind = SamplerKind("repeat_factor")
    finetune_epochs: Optional[int] = None


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    lr: float = 0.05
    momentum: float = 0.9
    sampler: SamplerKind = RANDOM
    loss: str = "seesaw"
    seesaw: SeesawConfig = SeesawConfig()
    pipeline: Optional[Decoupled] = None
    seed: int = 0
    weight_decay: float = 0.0
    lr_steps: tuple = ()
    init_std: float = 0.01
    eval_per_class: int = 100
    group_thresholds: Optional[tuple] = None

    def validate(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not self.lr >= 0:
            raise ValueError("lr must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.pipeline is not None:
            if self.pipeline.pretrain_loss not in LOSSES:
                raise ValueError(f"pretrain_loss must be one of {LOSSES}")
            if self.pipeline.finetune_epochs is not None and self.pipeline.finetune_epochs < 0:
                raise ValueError("finetune_epochs must be >= 0")
        return self

    @property
    def finetune_epochs(self):
        if self.pipeline is None:
            return 0
        if self.pipeline.finetune_epochs is None:
            return self.epochs // 2
        return self.pipeline.finetune_epochs


@dataclass
class Metrics:
    overall_acc: float
    per_class_acc: np.ndarray
    group_acc: dict
    loss_curve: list
    support: np.ndarray
    background_acc: Optional[float] = None


@dataclass
class StepInfo:
    """Handed to the training callback before each parameter update."""

    phase: int
    epoch: int
    batch: int
    indices: np.ndarray
    head: LinearHead
    counts: Optional[ClassCounts]
    loss: float


@dataclass
class TrainResult:
    head: LinearHead
    metrics: Metrics
    telemetry: TelemetryLog
    counts: Optional[ClassCounts]
    obj_head: Optional[LinearHead] = None
    pretrain_head: Optional[LinearHead] = None
    pretrain_loss_curve: list = field(default_factory=list)


class _Momentum:
    def __init__(self, params, lr, momentum, weight_decay):
        self.params = params
        self.lr, self.momentum, self.weight_decay = lr, momentum, weight_decay
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, grads):
        for p, v, g in zip(self.params, self.velocity, grads):
            if self.weight_decay:
                g = g + self.weight_decay * p
            v *= self.momentum
            v += g
            p -= self.lr * v


def _initial_counts(ds, n_out, source, initial_counts, class_labels):
    if source == "online":
        return ClassCounts.uniform(n_out)
    if source == "from_dataset":
        return counts_from_dataset(class_labels, n_out)
    if initial_counts is None:
        raise ValueError("count_source='pre_recorded' needs initial_counts")
    if initial_counts.num_classes != n_out:
        raise ValueError(f"pre-recorded counts cover {initial_counts.num_classes} classes, expected {n_out}")
    return initial_counts


def _run_phase(ds, cfg, loss_name, sampler, epochs, phase, rng, initial_counts, callback):
    """One pipeline phase from freshly initialised heads."""
    sc = cfg.seesaw
    use_obj = sc.objectness and ds.has_background
    # without an objectness branch background is one more classifier output
    n_out = ds.num_classes if (use_obj or not ds.has_background) else ds.num_classes + 1
    class_labels = np.where(ds.labels < 0, ds.num_classes, ds.labels)
    fg_mask_all = ds.labels >= 0

    head = LinearHead.init(n_out, ds.feature_dim, rng=rng, std=cfg.init_std,
                           tau=sc.tau, normalized=sc.normalized)
    params = [head.W, head.b]
    obj = None
    if use_obj:
        obj = objectness_head(ds.feature_dim, tau=sc.tau, rng=rng, std=cfg.init_std)
        params += [obj.W, obj.b]
    opt = _Momentum(params, cfg.lr, cfg.momentum, cfg.weight_decay)

    counts = None
    if loss_name == "seesaw":
        counts = _initial_counts(ds, n_out, sc.count_source, initial_counts,
                                 class_labels[fg_mask_all] if use_obj else class_labels)
    online = loss_name == "seesaw" and sc.count_source == "online"
    telemetry = TelemetryLog.zeros(n_out)
    loss_curve = []
    phase_seed = cfg.seed if phase == 0 else cfg.seed + 7919 * phase

    for epoch in range(epochs):
        if epoch in cfg.lr_steps:
            opt.lr *= 0.1
        order = epoch_indices(ds, sampler, phase_seed, epoch)
        total, seen = 0.0, 0
        for batch, start in enumerate(range(0, order.shape[0], cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            x, y = ds.features[idx], class_labels[idx]
            bsz = idx.shape[0]
            cls_rows = fg_mask_all[idx] if use_obj else np.ones(bsz, dtype=bool)
            xc, yc = x[cls_rows], y[cls_rows]

            step_loss = 0.0
            grads = []
            if yc.shape[0]:
                z = head.forward(xc)
                res = ce_loss(z, yc) if loss_name == "ce" else seesaw_loss(z, yc, counts, sc)
                step_loss += float(np.sum(res.loss))
                telemetry.record(yc, res.grad_logits)
                gW, gb, _ = head.backward(xc, res.grad_logits / bsz, need_input_grad=False)
            else:
                gW, gb = np.zeros_like(head.W), np.zeros_like(head.b)
            grads += [gW, gb]
            if obj is not None:
                obj_y = np.where(fg_mask_all[idx], FOREGROUND, BACKGROUND)
                ores = ce_loss(obj.forward(x), obj_y)
                step_loss += float(np.sum(ores.loss))
                oW, ob, _ = obj.backward(x, ores.grad_logits / bsz, need_input_grad=False)
                grads += [oW, ob]

            mean_loss = step_loss / bsz
            if not math.isfinite(mean_loss) or mean_loss > DIVERGENCE_LIMIT:
                raise TrainingDiverged(epoch, batch, mean_loss)
            if callback is not None:
                callback(StepInfo(phase, epoch, batch, idx, head, counts, mean_loss))
            opt.step(grads)
            if online and yc.shape[0]:
                counts = counts.update(yc)
            total += step_loss
            seen += bsz
        loss_curve.append(total / max(seen, 1))
    return head, obj, telemetry, counts, loss_curve


def fit_head(ds, cfg, initial_counts=None, callback=None):
    """Train heads on ``ds`` without evaluating; see ``train`` for the full run."""
    cfg.validate()
    if len(ds) == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    if cfg.pipeline is None:
        head, obj, tel, counts, curve = _run_phase(ds, cfg, cfg.loss, cfg.sampler, cfg.epochs, 0, rng,
                                                   initial_counts, callback)
        return TrainResult(head, None, tel, counts, obj), curve
    pre_head, _, _, _, pre_curve = _run_phase(ds, cfg, cfg.pipeline.pretrain_loss, RANDOM, cfg.epochs, 0,
                                              rng, initial_counts, callback)
    head, obj, tel, counts, curve = _run_phase(ds, cfg, cfg.loss, cfg.pipeline.finetune_sampler,
                                               cfg.finetune_epochs, 1, rng, initial_counts, callback)
    return TrainResult(head, None, tel, counts, obj, pre_head, pre_curve), curve


def train(ds, cfg, eval_ds=None, initial_counts=None, callback=None):
    """Train on ``ds`` and evaluate on a balanced held-out set.

    When ``eval_ds`` is omitted it is regenerated from ``ds.spec`` with
    ``cfg.eval_per_class`` samples per class; datasets without a spec are
    evaluated on themselves. Frequency groups come from the training counts.
    """
    result, curve = fit_head(ds, cfg, initial_counts, callback)
    if eval_ds is None:
        eval_ds = generate_balanced(ds.spec, cfg.eval_per_class) if ds.spec is not None else ds
    groups = frequency_groups(ds.class_counts_static, cfg.group_thresholds)
    result.metrics = evaluate(result.head, eval_ds, groups, obj_head=result.obj_head, loss_curve=curve)
    return result


def predict_labels(head, x, num_classes, obj_head=None):
    """Argmax classification; ``-1`` marks background in the foreground/background variant."""
    z = head.forward(x)
    if obj_head is not None:
        fg = foreground_probability(obj_head, x)
        scores = softmax(z) * fg[:, None]
        pred = np.argmax(scores, axis=1)
        return np.where(fg < 0.5, -1, pred)
    pred = np.argmax(z, axis=1)
    if head.num_classes > num_classes:
        pred = np.where(pred >= num_classes, -1, pred)
    return pred


def evaluate(head, ds, groups=None, obj_head=None, loss_curve=None):
    """Per-class, per-group and overall accuracy of argmax predictions on ``ds``."""
    if ds.feature_dim != head.feature_dim:
        raise ValueError(f"dataset has {ds.feature_dim} features, head expects {head.feature_dim}")
    pred = predict_labels(head, ds.features, ds.num_classes, obj_head)
    fg = ds.labels >= 0
    support = np.bincount(ds.labels[fg], minlength=ds.num_classes)
    correct = np.bincount(ds.labels[fg], weights=(pred[fg] == ds.labels[fg]).astype(np.float64),
                          minlength=ds.num_classes)
    per_class = np.divide(correct, support, out=np.zeros(ds.num_classes), where=support > 0)
    overall = float(correct.sum() / support.sum()) if support.sum() else math.nan
    if groups is None:
        groups = frequency_groups(support)
    group_acc = {}
    for g, name in enumerate(GROUP_NAMES):
        members = (groups == g) & (support > 0)
        group_acc[name] = float(correct[members].sum() / support[members].sum()) if members.any() else math.nan
    bg = ~fg
    background_acc = float(np.mean(pred[bg] == -1)) if bg.any() else None
    return Metrics(overall, per_class, group_acc, list(loss_curve or []), support, background_acc)


METRIC_GROUP_COLUMNS = tuple(f"{g}_acc" for g in GROUP_NAMES)


def write_metrics_csv(metrics, path):
    """One row per epoch (loss only) then a ``summary`` row with the accuracies."""
    c = metrics.per_class_acc.shape[0]
    header = (["row", "epoch", "mean_loss", "overall_acc", *METRIC_GROUP_COLUMNS, "background_acc"]
              + [f"acc_{k}" for k in range(c)] + [f"n_{k}" for k in range(c)])
    blank = [""] * (len(header) - 3)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for epoch, loss in enumerate(metrics.loss_curve):
            w.writerow(["epoch", epoch, repr(float(loss))] + blank)
        bg = "" if metrics.background_acc is None else repr(metrics.background_acc)
        w.writerow(["summary", "", "", repr(metrics.overall_acc)]
                   + [repr(metrics.group_acc[g]) for g in GROUP_NAMES] + [bg]
                   + [repr(float(a)) for a in metrics.per_class_acc]
                   + [str(int(n)) for n in metrics.support])


def read_metrics_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    curve = [float(r["mean_loss"]) for r in rows if r["row"] == "epoch"]
    summary = [r for r in rows if r["row"] == "summary"]
    if len(summary) != 1:
        raise ValueError(f"{path}: expected exactly one summary row")
    s = summary[0]
    c = sum(1 for k in s if k.startswith("acc_"))
    return Metrics(
        overall_acc=float(s["overall_acc"]),
        per_class_acc=np.array([float(s[f"acc_{k}"]) for k in range(c)]),
        group_acc={g: float(s[f"{g}_acc"]) for g in GROUP_NAMES},
        loss_curve=curve,
        support=np.array([int(s[f"n_{k}"]) for k in range(c)]),
        background_acc=float(s["background_acc"]) if s["background_acc"] else None,
    )


SWEEP_PARAMS = ("p", "q", "tau")


@dataclass
class SweepRow:
    param: str
    value: float
    seed: int
    metrics: Metrics


def sweep(make_dataset, base, param, values, seeds=(0,)):
    """Train and evaluate once per ``(value, seed)``.

    ``make_dataset(seed)`` supplies the training set for each seed, so every
    value sees the same data. A plain ``Dataset`` is also accepted.
    """
    if param not in SWEEP_PARAMS:
        raise ValueError(f"can only sweep {SWEEP_PARAMS}, got {param!r}")
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    if isinstance(make_dataset, Dataset):
        fixed = make_dataset
        make_dataset = lambda seed: fixed  # noqa: E731
    rows = []
    for seed in seeds:
        ds = make_dataset(seed)
        for v in values:
            cfg = replace(base, seed=seed, seesaw=replace(base.seesaw, **{param: float(v)}))
            rows.append(SweepRow(param, float(v), seed, train(ds, cfg).metrics))
    return rows


def summarize_sweep(rows):
    """Seed-averaged ``{value: {overall_acc, rare_acc, ...}}`` in sweep order."""
    out = {}
    for v in dict.fromkeys(r.value for r in rows):
        ms = [r.metrics for r in rows if r.value == v]
        out[v] = {"overall_acc": float(np.mean([m.overall_acc for m in ms]))}
        for g in GROUP_NAMES:
            out[v][f"{g}_acc"] = float(np.mean([m.group_acc[g] for m in ms]))
    return out


def write_sweep_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["param", "value", "seed", "overall_acc", *METRIC_GROUP_COLUMNS])
        for r in rows:
            w.writerow([r.param, repr(r.value), r.seed, repr(r.metrics.overall_acc)]
                       + [repr(r.metrics.group_acc[g]) for g in GROUP_NAMES])
        if rows:
            for v, agg in summarize_sweep(rows).items():
                w.writerow([rows[0].param, repr(v), "mean", repr(agg["overall_acc"])]
                           + [repr(agg[c]) for c in METRIC_GROUP_COLUMNS])
