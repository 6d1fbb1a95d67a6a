"""White-box L-infinity adversarial attacks and robust-accuracy evaluation.

All four attacks share one projected sign-gradient engine:

  fgsm  single step of size epsilon
  bim   `steps` steps of size step_size, clipped into the epsilon ball
  pgd   bim plus a uniform random start inside the ball
  upgd  pgd with L1-normalized gradient momentum accumulation

Every iterate is projected into the L-inf ball around the clean input and
clamped to the valid feature range, so outputs satisfy the containment
invariant exactly. sign(0) is 0: a zero gradient moves nothing. Random
starts are seeded per (sample id, global seed), so a sample's start does
not depend on how the batch was assembled. Attacks never mutate the model
or the clean inputs.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ShapeError
from .losses import LossSpec
from .nn import Network, input_gradient

KINDS = ("fgsm", "bim", "pgd", "upgd")


@dataclass(frozen=True)
class AttackConfig:
    """Attack kind plus its budget: radius, step size, iterations."""

    kind: str
    epsilon: float
    step_size: float = 0.0
    steps: int = 1
    random_start: bool = False
    momentum: float = 0.0
    clip: tuple = (0.0, 1.0)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.kind != "fgsm" and self.step_size <= 0:
            raise ValueError(f"{self.kind} requires step_size > 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not 0.0 <= self.momentum <= 1.0:
            raise ValueError("momentum must be in [0, 1]")
        if self.clip[0] >= self.clip[1]:
            raise ValueError("clip bounds must be increasing")


@dataclass
class AttackResult:
    """Adversarial batch plus per-sample bookkeeping."""

    adversarial_features: np.ndarray
    sample_ids: np.ndarray
    labels: np.ndarray
    clean_pred: np.ndarray
    adv_pred: np.ndarray
    clean_correct: np.ndarray
    adv_correct: np.ndarray
    robust_accuracy: float
    max_perturbation_seen: float

    def linf_perturbations(self, clean: np.ndarray) -> np.ndarray:
        return np.abs(self.adversarial_features - clean).max(axis=1)


def _random_start(shape, epsilon, seed, sample_ids):
    delta = np.empty(shape)
    for row, sid in enumerate(sample_ids):
        rng = np.random.default_rng(np.random.SeedSequence((int(seed), int(sid))))
        delta[row] = rng.uniform(-epsilon, epsilon, size=shape[1])
    return delta


def run_attack(net: Network, spec: LossSpec, features: np.ndarray, labels: np.ndarray,
               cfg: AttackConfig, seed: int = 0,
               sample_ids: Optional[np.ndarray] = None) -> AttackResult:
    """Run any configured attack on a batch and score robust accuracy."""
    x0 = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if x0.ndim != 2:
        raise ShapeError("features must be 2-D (n, d)")
    if labels.shape != (x0.shape[0],):
        raise ShapeError("labels must match the feature rows")
    if sample_ids is None:
        sample_ids = np.arange(x0.shape[0])

    lo, hi = cfg.clip
    eps = cfg.epsilon
    if cfg.kind == "fgsm":
        steps, alpha, random_start, mu = 1, eps, False, 0.0
    elif cfg.kind == "bim":
        steps, alpha, random_start, mu = cfg.steps, cfg.step_size, False, 0.0
    elif cfg.kind == "pgd":
        steps, alpha, random_start, mu = cfg.steps, cfg.step_size, cfg.random_start, 0.0
    else:  # upgd
        steps, alpha, random_start, mu = cfg.steps, cfg.step_size, cfg.random_start, cfg.momentum

    x = x0.copy()
    if random_start:
        x = np.clip(x + _random_start(x.shape, eps, seed, sample_ids), lo, hi)

    g_acc = np.zeros_like(x) if cfg.kind == "upgd" else None
    for _ in range(steps):
        grad = input_gradient(net, spec, x, labels)
        if cfg.kind == "upgd":
            norm = np.abs(grad).sum(axis=1, keepdims=True)
            scaled = np.divide(grad, norm, out=np.zeros_like(grad), where=norm > 0)
            g_acc = mu * g_acc + scaled
            direction = np.sign(g_acc)
        else:
            direction = np.sign(grad)
        x = x + alpha * direction
        x = np.clip(x, x0 - eps, x0 + eps)
        x = np.clip(x, lo, hi)

    clean_pred = net.predict(x0)
    adv_pred = net.predict(x)
    clean_correct = clean_pred == labels
    adv_correct = adv_pred == labels
    return AttackResult(
        adversarial_features=x,
        sample_ids=np.asarray(sample_ids),
        labels=labels,
        clean_pred=clean_pred,
        adv_pred=adv_pred,
        clean_correct=clean_correct,
        adv_correct=adv_correct,
        robust_accuracy=float(adv_correct.mean()),
        max_perturbation_seen=float(np.abs(x - x0).max()),
    )


def fgsm(net, spec, features, labels, cfg: AttackConfig, seed: int = 0, sample_ids=None):
    if cfg.kind != "fgsm":
        raise ValueError("config kind must be 'fgsm'")
    return run_attack(net, spec, features, labels, cfg, seed, sample_ids)


def bim(net, spec, features, labels, cfg: AttackConfig, seed: int = 0, sample_ids=None):
    if cfg.kind != "bim":
        raise ValueError("config kind must be 'bim'")
    return run_attack(net, spec, features, labels, cfg, seed, sample_ids)


def pgd(net, spec, features, labels, cfg: AttackConfig, seed: int = 0, sample_ids=None):
    if cfg.kind != "pgd":
        raise ValueError("config kind must be 'pgd'")
    return run_attack(net, spec, features, labels, cfg, seed, sample_ids)


def upgd(net, spec, features, labels, cfg: AttackConfig, seed: int = 0, sample_ids=None):
    if cfg.kind != "upgd":
        raise ValueError("config kind must be 'upgd'")
    return run_attack(net, spec, features, labels, cfg, seed, sample_ids)


def robust_accuracy_sweep(net, spec, features, labels, cfg: AttackConfig,
                          eps_list: Sequence[float], seed: int = 0):
    """Robust accuracy over an ascending list of perturbation radii.

    Returns a list of (epsilon, robust_accuracy) pairs, one full attack
    per radius with the rest of the config held fixed. Accuracy is
    typically non-increasing in epsilon but that is reported, not forced.
    """
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        raise ValueError("eps_list must not be empty")
    if any(b < a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be sorted ascending")
    curve = []
    for eps in eps_list:
        cfg_eps = AttackConfig(
            kind=cfg.kind,
            epsilon=eps,
            step_size=cfg.step_size,
            steps=cfg.steps,
            random_start=cfg.random_start,
            momentum=cfg.momentum,
            clip=cfg.clip,
        )
        result = run_attack(net, spec, features, labels, cfg_eps, seed)
        curve.append((eps, result.robust_accuracy))
    return curve


def write_attack_csv(path, result: AttackResult, clean_features: np.ndarray) -> None:
    """Per-sample attack outcome CSV."""
    linf = result.linf_perturbations(np.asarray(clean_features, dtype=np.float64))
    lines = ["sample_id,clean_pred,adv_pred,label,linf_perturbation"]
    for sid, cp, ap, lab, d in zip(
        result.sample_ids, result.clean_pred, result.adv_pred, result.labels, linf
    ):
        lines.append(f"{sid},{cp},{ap},{lab},{d:.17g}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def write_sweep_csv(path, curve) -> None:
    lines = ["epsilon,robust_accuracy"]
    for eps, acc in curve:
        lines.append(f"{eps:.17g},{acc:.17g}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
