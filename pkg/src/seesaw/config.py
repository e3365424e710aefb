"""Flat ``key = value`` experiment configuration.

Lines starting with ``#`` are comments. Every key may also be given on the
command line (``--key value``); command-line values win over the file, and
``SEESAW_SEED`` supplies the seed when neither sets it.
"""
import os
from dataclasses import dataclass, replace
from typing import Optional

from .data import SamplerKind, SyntheticSpec
from .losses import SeesawConfig
from .trainer import Decoupled, TrainConfig


class ConfigError(ValueError):
    pass


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _pair(text):
    a, b = (float(v) for v in str(text).split(","))
    return (a, b)


def _int_tuple(text):
    text = str(text).strip()
    return tuple(int(v) for v in text.split(",")) if text else ()


# key -> (parser, help)
KEYS = {
    "seed": (int, "seed for data generation and training"),
    "num_classes": (int, "number of classes"),
    "feature_dim": (int, "feature dimension"),
    "imbalance_ratio": (float, "largest / smallest class size"),
    "max_count": (int, "size of the largest class"),
    "class_separation": (float, "approximate spacing of class means"),
    "noise_std": (float, "per-feature noise"),
    "num_background": (int, "background samples (objectness variant)"),
    "dataset": (str, "train on this CSV instead of generating data"),
    "epochs": (int, "training epochs"),
    "batch_size": (int, "mini-batch size"),
    "lr": (float, "learning rate"),
    "momentum": (float, "SGD momentum"),
    "weight_decay": (float, "L2 weight decay"),
    "lr_steps": (_int_tuple, "comma-separated epochs at which lr is divided by 10"),
    "sampler": (SamplerKind.parse, "random | rfs | rfs:<threshold>"),
    "loss": (str, "ce | seesaw"),
    "preset": (str, "default | imagenet_lt (q=1)"),
    "p": (float, "mitigation exponent"),
    "q": (float, "compensation exponent"),
    "tau": (float, "temperature of the normalised head"),
    "use_mitigation": (_bool, "enable the mitigation factor"),
    "use_compensation": (_bool, "enable the compensation factor"),
    "normalized": (_bool, "cosine-normalised linear head"),
    "objectness": (_bool, "separate foreground/background head"),
    "count_source": (str, "online | pre_recorded | from_dataset"),
    "counts_file": (str, "class counts for count_source=pre_recorded"),
    "pipeline": (str, "end_to_end | decoupled"),
    "pretrain_loss": (str, "loss of the decoupled pretraining phase"),
    "finetune_sampler": (SamplerKind.parse, "sampler of the decoupled finetuning phase"),
    "finetune_epochs": (int, "finetuning epochs (default epochs // 2)"),
    "eval_per_class": (int, "held-out samples per class"),
    "group_thresholds": (_pair, "rare/common and common/frequent count cut points, 't1,t2'"),
    "out_dir": (str, "directory for output files"),
}


def parse_config_text(text, source="<config>"):
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        raw[key] = value.strip()
    return raw


def read_config_file(path):
    try:
        with open(path) as fh:
            return parse_config_text(fh.read(), path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    spec: SyntheticSpec
    train: TrainConfig
    dataset: Optional[str] = None
    counts_file: Optional[str] = None
    out_dir: str = "."


def build_config(raw, env=None):
    """Parse and validate raw string values into an ``ExperimentConfig``."""
    env = os.environ if env is None else env
    raw = dict(raw)
    if "seed" not in raw and env.get("SEESAW_SEED"):
        raw["seed"] = env["SEESAW_SEED"]
    vals = {}
    for key, text in raw.items():
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}")
        try:
            vals[key] = KEYS[key][0](text)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {text!r} ({exc})") from None
    pick = lambda names: {k: vals[k] for k in names if k in vals}  # noqa: E731
    try:
        spec = SyntheticSpec(**pick(("seed", "num_classes", "feature_dim", "imbalance_ratio", "max_count",
                                     "class_separation", "noise_std", "num_background"))).validate()
        preset = vals.get("preset", "default")
        if preset not in ("default", "imagenet_lt"):
            raise ConfigError(f"unknown preset {preset!r}")
        base = SeesawConfig.imagenet_lt() if preset == "imagenet_lt" else SeesawConfig()
        seesaw = replace(base, **pick(("p", "q", "tau", "use_mitigation", "use_compensation", "normalized",
                                       "objectness", "count_source")))
        pipeline_name = vals.get("pipeline", "end_to_end")
        if pipeline_name == "end_to_end":
            pipeline = None
        elif pipeline_name == "decoupled":
            pipeline = Decoupled(**pick(("pretrain_loss", "finetune_sampler", "finetune_epochs")))
        else:
            raise ConfigError(f"unknown pipeline {pipeline_name!r}")
        train = TrainConfig(seesaw=seesaw, pipeline=pipeline,
                            **pick(("seed", "epochs", "batch_size", "lr", "momentum", "weight_decay", "lr_steps",
                                    "sampler", "loss", "eval_per_class", "group_thresholds"))).validate()
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if seesaw.count_source == "pre_recorded" and train.loss == "seesaw" and "counts_file" not in vals:
        raise ConfigError("count_source = pre_recorded needs counts_file")
    for key in ("dataset", "counts_file"):
        if key in vals and not os.path.isfile(vals[key]):
            raise ConfigError(f"{key} not found: {vals[key]}")
    return ExperimentConfig(spec, train, vals.get("dataset"), vals.get("counts_file"), vals.get("out_dir", "."))
