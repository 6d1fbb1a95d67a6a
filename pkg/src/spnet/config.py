"""Experiment configuration: YAML schema, validation, defaults.

One config file drives a whole run (dataset / model / loss / train /
attacks / analysis / sweep sections plus a mandatory seed). Validation is
fail-fast: unknown keys, missing files, and inconsistent loss parameters
are all rejected before any training starts. Defaults follow the standard
protocol used throughout: Adam at lr 0.001, 50 epochs, batch size 128,
and the usual attack budgets (fgsm 0.007; bim/pgd 8/255; upgd 4/255;
step 1/255; 40 iterations).
"""

import os
from dataclasses import dataclass, field
from typing import List, Optional

import yaml

from .attacks import AttackConfig
from .errors import ConfigError
from .losses import LossSpec

DEFAULT_EPSILONS = {
    "fgsm": 0.007,
    "bim": 8.0 / 255.0,
    "pgd": 8.0 / 255.0,
    "upgd": 4.0 / 255.0,
}
DEFAULT_STEP_SIZE = 1.0 / 255.0
DEFAULT_STEPS = 40

_DATASET_KEYS = {
    "kind", "n_per_class", "margin", "noise", "drop_fraction",
    "test_fraction", "max_shift", "images", "labels", "test_images",
    "test_labels", "per_class", "path", "test_path", "num_classes",
}
_MODEL_KEYS = {"hidden", "activation"}
_LOSS_KEYS = {"kind", "alpha", "gamma", "eta", "variant", "full_vector"}
_TRAIN_KEYS = {"optimizer", "learning_rate", "epochs", "batch_size", "record_trace"}
_ATTACK_ITEM_KEYS = {"kind", "epsilon", "step_size", "steps", "random_start", "momentum"}
_ATTACKS_KEYS = {"items", "loss", "eval_samples"}
_SWEEP_KEYS = {"kind", "epsilons", "step_size", "steps", "random_start", "momentum", "eval_samples"}
_ANALYSIS_KEYS = {
    "boundary", "resolution", "region", "confidence_threshold",
    "landscape", "landscape_span", "landscape_resolution", "landscape_seeds",
}
_TOP_KEYS = {"seed", "dataset", "model", "loss", "train", "attacks", "sweep", "analysis"}


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


@dataclass
class DatasetConfig:
    kind: str
    n_per_class: int = 100
    margin: float = 1.8
    noise: float = 0.0
    drop_fraction: float = 0.0
    test_fraction: float = 0.2
    max_shift: int = 4
    images: Optional[str] = None
    labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None
    per_class: Optional[int] = None
    path: Optional[str] = None
    test_path: Optional[str] = None
    num_classes: Optional[int] = None


@dataclass
class ModelConfig:
    hidden: List[int] = field(default_factory=lambda: [16])
    activation: str = "tanh"


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 0.001
    epochs: int = 50
    batch_size: int = 128
    record_trace: bool = False


@dataclass
class SweepConfig:
    kind: str
    epsilons: List[float]
    step_size: float = DEFAULT_STEP_SIZE
    steps: int = DEFAULT_STEPS
    random_start: bool = True
    momentum: float = 0.0
    eval_samples: Optional[int] = None


@dataclass
class AnalysisConfig:
    boundary: bool = False
    resolution: int = 200
    region: Optional[List[float]] = None
    confidence_threshold: float = 0.9
    landscape: bool = False
    landscape_span: float = 1.0
    landscape_resolution: int = 11
    landscape_seeds: List[int] = field(default_factory=lambda: [1, 2])


@dataclass
class ExperimentConfig:
    seed: int
    dataset: DatasetConfig
    loss: LossSpec
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    attacks: List[AttackConfig] = field(default_factory=list)
    attack_loss: Optional[LossSpec] = None
    attack_eval_samples: Optional[int] = None
    sweep: Optional[SweepConfig] = None
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)


def _build_loss(section: dict, where: str) -> LossSpec:
    _check_keys(section, _LOSS_KEYS, where)
    if "kind" not in section:
        raise ConfigError(f"{where} requires a 'kind'")
    try:
        return LossSpec(
            kind=section["kind"],
            alpha=float(section.get("alpha", 0.25)),
            gamma=float(section.get("gamma", 2.0)),
            eta=float(section.get("eta", 0.0)),
            variant=section.get("variant"),
            full_vector=bool(section.get("full_vector", False)),
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _build_attack(item: dict, index: int) -> AttackConfig:
    where = f"attacks.items[{index}]"
    _check_keys(item, _ATTACK_ITEM_KEYS, where)
    kind = item.get("kind")
    if kind not in DEFAULT_EPSILONS:
        raise ConfigError(f"{where}: unknown attack kind {kind!r}")
    try:
        return AttackConfig(
            kind=kind,
            epsilon=float(item.get("epsilon", DEFAULT_EPSILONS[kind])),
            step_size=float(item.get("step_size", DEFAULT_STEP_SIZE)),
            steps=int(item.get("steps", DEFAULT_STEPS)),
            random_start=bool(item.get("random_start", kind in ("pgd", "upgd"))),
            momentum=float(item.get("momentum", 0.9 if kind == "upgd" else 0.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_config(path, seed_override: Optional[int] = None) -> ExperimentConfig:
    """Parse and validate a YAML experiment config."""
    try:
        with open(path) as f:
            raw = yaml.safe_load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    return build_config(raw, seed_override)


def build_config(raw: dict, seed_override: Optional[int] = None) -> ExperimentConfig:
    _check_keys(raw, _TOP_KEYS, "config")

    seed = seed_override if seed_override is not None else raw.get("seed")
    if seed is None:
        raise ConfigError("a seed is mandatory (config 'seed' or --seed)")
    seed = int(seed)

    if "dataset" not in raw:
        raise ConfigError("config requires a 'dataset' section")
    ds_raw = dict(raw["dataset"])
    _check_keys(ds_raw, _DATASET_KEYS, "dataset")
    kind = ds_raw.get("kind")
    known = ("segments", "two_moons", "two_circles", "glyphs", "idx", "csv")
    if kind not in known:
        raise ConfigError(f"dataset.kind must be one of {known}, got {kind!r}")
    dataset = DatasetConfig(**ds_raw)
    if kind == "idx":
        if not dataset.images or not dataset.labels:
            raise ConfigError("dataset.kind=idx requires 'images' and 'labels' paths")
    if kind == "csv" and not dataset.path:
        raise ConfigError("dataset.kind=csv requires 'path'")
    for attr in ("images", "labels", "test_images", "test_labels", "path", "test_path"):
        p = getattr(dataset, attr)
        if p is not None and not os.path.exists(p):
            raise ConfigError(f"dataset.{attr}: file not found: {p}")
    if not 0.0 < dataset.test_fraction < 1.0:
        raise ConfigError("dataset.test_fraction must be in (0, 1)")

    model_raw = dict(raw.get("model", {}))
    _check_keys(model_raw, _MODEL_KEYS, "model")
    model = ModelConfig(
        hidden=[int(h) for h in model_raw.get("hidden", [16])],
        activation=model_raw.get("activation", "tanh"),
    )
    if model.activation not in ("identity", "relu", "tanh"):
        raise ConfigError(f"model.activation {model.activation!r} unknown")
    if any(h < 1 for h in model.hidden):
        raise ConfigError("model.hidden widths must be >= 1")

    if "loss" not in raw:
        raise ConfigError("config requires a 'loss' section")
    loss = _build_loss(dict(raw["loss"]), "loss")

    train_raw = dict(raw.get("train", {}))
    _check_keys(train_raw, _TRAIN_KEYS, "train")
    train = TrainConfig(
        optimizer=train_raw.get("optimizer", "adam"),
        learning_rate=float(train_raw.get("learning_rate", 0.001)),
        epochs=int(train_raw.get("epochs", 50)),
        batch_size=int(train_raw.get("batch_size", 128)),
        record_trace=bool(train_raw.get("record_trace", False)),
    )
    if train.optimizer not in ("sgd", "adam"):
        raise ConfigError(f"train.optimizer {train.optimizer!r} unknown")
    if train.epochs < 0 or train.batch_size < 1 or train.learning_rate < 0:
        raise ConfigError("train parameters out of range")

    attacks: List[AttackConfig] = []
    attack_loss = None
    attack_eval_samples = None
    if "attacks" in raw:
        atk_raw = dict(raw["attacks"])
        _check_keys(atk_raw, _ATTACKS_KEYS, "attacks")
        for i, item in enumerate(atk_raw.get("items", [])):
            attacks.append(_build_attack(dict(item), i))
        if atk_raw.get("loss") is not None:
            attack_loss = _build_loss(dict(atk_raw["loss"]), "attacks.loss")
        if atk_raw.get("eval_samples") is not None:
            attack_eval_samples = int(atk_raw["eval_samples"])
            if attack_eval_samples < 1:
                raise ConfigError("attacks.eval_samples must be >= 1")

    sweep = None
    if "sweep" in raw:
        sw_raw = dict(raw["sweep"])
        _check_keys(sw_raw, _SWEEP_KEYS, "sweep")
        if sw_raw.get("kind") not in DEFAULT_EPSILONS:
            raise ConfigError(f"sweep.kind {sw_raw.get('kind')!r} unknown")
        eps = [float(e) for e in sw_raw.get("epsilons", [])]
        if not eps or any(b < a for a, b in zip(eps, eps[1:])):
            raise ConfigError("sweep.epsilons must be a non-empty ascending list")
        sweep = SweepConfig(
            kind=sw_raw["kind"],
            epsilons=eps,
            step_size=float(sw_raw.get("step_size", DEFAULT_STEP_SIZE)),
            steps=int(sw_raw.get("steps", DEFAULT_STEPS)),
            random_start=bool(sw_raw.get("random_start", True)),
            momentum=float(sw_raw.get("momentum", 0.0)),
            eval_samples=(
                int(sw_raw["eval_samples"]) if sw_raw.get("eval_samples") is not None else None
            ),
        )

    ana_raw = dict(raw.get("analysis", {}))
    _check_keys(ana_raw, _ANALYSIS_KEYS, "analysis")
    analysis = AnalysisConfig(
        boundary=bool(ana_raw.get("boundary", False)),
        resolution=int(ana_raw.get("resolution", 200)),
        region=(
            [float(v) for v in ana_raw["region"]] if ana_raw.get("region") is not None else None
        ),
        confidence_threshold=float(ana_raw.get("confidence_threshold", 0.9)),
        landscape=bool(ana_raw.get("landscape", False)),
        landscape_span=float(ana_raw.get("landscape_span", 1.0)),
        landscape_resolution=int(ana_raw.get("landscape_resolution", 11)),
        landscape_seeds=[int(s) for s in ana_raw.get("landscape_seeds", [1, 2])],
    )
    if analysis.region is not None and len(analysis.region) != 4:
        raise ConfigError("analysis.region must be [xmin, xmax, ymin, ymax]")
    if analysis.resolution < 2 or analysis.landscape_resolution < 3:
        raise ConfigError("analysis resolutions too small")
    if len(analysis.landscape_seeds) != 2:
        raise ConfigError("analysis.landscape_seeds must have exactly two entries")
    if analysis.landscape_resolution % 2 == 0:
        raise ConfigError("analysis.landscape_resolution must be odd (center cell)")

    return ExperimentConfig(
        seed=seed,
        dataset=dataset,
        loss=loss,
        model=model,
        train=train,
        attacks=attacks,
        attack_loss=attack_loss,
        attack_eval_samples=attack_eval_samples,
        sweep=sweep,
        analysis=analysis,
    )


def echo_config(cfg: ExperimentConfig) -> dict:
    """Normalized dict form of a config; re-loading it reproduces the run."""
    out = {
        "seed": cfg.seed,
        "dataset": {
            k: v for k, v in vars(cfg.dataset).items() if v is not None
        },
        "model": {"hidden": list(cfg.model.hidden), "activation": cfg.model.activation},
        "loss": _loss_dict(cfg.loss),
        "train": dict(vars(cfg.train)),
    }
    if cfg.attacks or cfg.attack_loss or cfg.attack_eval_samples:
        sec = {}
        if cfg.attacks:
            sec["items"] = [
                {
                    "kind": a.kind,
                    "epsilon": a.epsilon,
                    "step_size": a.step_size,
                    "steps": a.steps,
                    "random_start": a.random_start,
                    "momentum": a.momentum,
                }
                for a in cfg.attacks
            ]
        if cfg.attack_loss:
            sec["loss"] = _loss_dict(cfg.attack_loss)
        if cfg.attack_eval_samples:
            sec["eval_samples"] = cfg.attack_eval_samples
        out["attacks"] = sec
    if cfg.sweep:
        out["sweep"] = dict(vars(cfg.sweep))
        if out["sweep"]["eval_samples"] is None:
            del out["sweep"]["eval_samples"]
    out["analysis"] = {k: v for k, v in vars(cfg.analysis).items() if v is not None}
    return out


def _loss_dict(spec: LossSpec) -> dict:
    d = {"kind": spec.kind, "alpha": spec.alpha, "gamma": spec.gamma, "eta": spec.eta}
    if spec.variant is not None:
        d["variant"] = spec.variant
    if spec.full_vector:
        d["full_vector"] = spec.full_vector
    return d


def write_echo(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(echo_config(cfg), f, sort_keys=True)
