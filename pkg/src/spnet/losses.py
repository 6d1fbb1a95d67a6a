"""Classification loss family: values, exact logit gradients, stationary points.

Every loss here maps a softmax probability vector and a true label to a
scalar value plus an exact gradient with respect to the logits. The cross
entropy and focal losses have strictly negative true-class logit gradients
on all of (0, 1), so training keeps inflating the logits forever; the
stationary-point (sp_*) variants add a quadratic probability regularizer
that creates an interior zero of that gradient, which is what
:func:`find_stationary_point` locates.

Two sp_ce regularizer variants coexist on purpose and a caller must pick
one explicitly:

  single_term      -log(p) + eta * p^2
  with_complement  -log(p) + eta * (p^2 + (1-p)^2)

Both admit closed-form stationary points (see
:func:`closed_form_stationary`) once eta > 0.5.

All regularizers act on the true-class probability p by default. The
``full_vector`` flag switches to the whole probability vector, which has
no closed forms and is exposed for experimentation only.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import backend
from .errors import ShapeError

CLAMP_FLOOR = 1e-300

KINDS = ("ce", "focal", "sp_ce", "sp_focal", "grad_starvation")
SP_KINDS = ("sp_ce", "sp_focal", "grad_starvation")
VARIANTS = ("single_term", "with_complement")

_KIND_CODES = {name: i for i, name in enumerate(KINDS)}
_VARIANT_CODES = {"single_term": 0, "with_complement": 1}


@dataclass(frozen=True)
class LossSpec:
    """Which loss to use and its hyperparameters.

    alpha/gamma matter for the focal family, eta for the sp family.
    ``variant`` is required for (and only allowed with) kind='sp_ce'.
    """

    kind: str
    alpha: float = 0.25
    gamma: float = 2.0
    eta: float = 0.0
    variant: Optional[str] = None
    full_vector: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {KINDS}")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if self.kind in SP_KINDS and self.eta == 0:
            raise ValueError(f"{self.kind} requires eta > 0")
        if self.kind == "sp_ce":
            if self.variant not in VARIANTS:
                raise ValueError(
                    "sp_ce requires an explicit variant: 'single_term' or 'with_complement'"
                )
        elif self.variant is not None:
            raise ValueError(f"variant is only meaningful for sp_ce, not {self.kind!r}")
        if self.full_vector and self.kind not in ("sp_ce", "sp_focal"):
            raise ValueError("full_vector only applies to sp_ce / sp_focal")

    def is_sp_family(self) -> bool:
        return self.kind in SP_KINDS


@dataclass(frozen=True)
class StationaryPointResult:
    """Location of the true-class-gradient zero, if one exists in (0, 1)."""

    exists: bool
    xi_star: Optional[float] = None
    z_gap: Optional[float] = None
    bracket: Optional[tuple] = None


def softmax(logits: np.ndarray) -> np.ndarray:
    """Exponential normalization of logits, stabilized by max subtraction.

    Accepts a single logit vector (K,) or a batch (n, K); normalizes along
    the last axis. Invariant under adding a constant to every logit.
    """
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _check_probs(probs: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1:
        raise ShapeError("probability vector must be 1-D")
    return probs


def _clamped(p: float) -> float:
    return max(p, CLAMP_FLOOR)


def _grad_from_t(t: float, probs: np.ndarray, y: int) -> np.ndarray:
    # For losses depending on logits only through p = probs[y]:
    # dL/dz = t * (onehot(y) - probs) with t = p * dL/dp.
    grad = -t * probs
    grad[y] += t
    return grad


def _focal_t(p, u, log_p, alpha, gamma):
    """t = p * d/dp of the focal term, safe at the p -> 1 boundary."""
    if gamma == 0.0:
        return np.full_like(np.asarray(p, dtype=np.float64), -alpha)
    p = np.asarray(p, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    log_p = np.asarray(log_p, dtype=np.float64)
    t = np.zeros_like(p)
    live = u >= CLAMP_FLOOR
    t[live] = alpha * u[live] ** (gamma - 1.0) * (gamma * p[live] * log_p[live] - u[live])
    return t


def ce(probs: np.ndarray, y: int):
    """Cross entropy -log(p_y). Returns (value, gradient w.r.t. logits)."""
    probs = _check_probs(probs)
    p = _clamped(probs[y])
    return -np.log(p), _grad_from_t(-1.0, probs, y)


def focal(probs: np.ndarray, y: int, alpha: float = 0.25, gamma: float = 2.0):
    """Focal loss -alpha*(1-p_y)^gamma*log(p_y) with exact logit gradient."""
    probs = _check_probs(probs)
    p = _clamped(probs[y])
    u = 1.0 - p
    log_p = np.log(p)
    if gamma == 0.0:
        value = -alpha * log_p
        t = -alpha
    elif u < CLAMP_FLOOR:
        value = 0.0
        t = 0.0
    else:
        value = -alpha * u**gamma * log_p
        t = float(alpha * u ** (gamma - 1.0) * (gamma * p * log_p - u))
    return value, _grad_from_t(t, probs, y)


def sp_ce(probs: np.ndarray, y: int, eta: float, variant: str):
    """Cross entropy plus a quadratic true-class-probability regularizer."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown sp_ce variant {variant!r}")
    probs = _check_probs(probs)
    p = _clamped(probs[y])
    u = 1.0 - p
    if variant == "single_term":
        value = -np.log(p) + eta * p * p
        t = -1.0 + 2.0 * eta * p * p
    else:
        value = -np.log(p) + eta * (p * p + u * u)
        t = -1.0 + 2.0 * eta * p * (p - u)
    return value, _grad_from_t(t, probs, y)


def sp_focal(probs: np.ndarray, y: int, alpha: float = 0.25, gamma: float = 2.0,
             eta: float = 0.03):
    """Focal loss plus eta * p_y^2."""
    probs = _check_probs(probs)
    value, grad = focal(probs, y, alpha, gamma)
    p = _clamped(probs[y])
    value = value + eta * p * p
    grad = grad + _grad_from_t(2.0 * eta * p * p, probs, y)
    return value, grad


def grad_starvation(probs: np.ndarray, y: int, eta: float):
    """Binary logistic loss with an (eta/2)*||xi||^2 regularizer.

    Written in margin form: softplus(-m) + (eta/2)*(p^2 + (1-p)^2) where
    m = log(p/(1-p)) is the signed logit gap. Up to the eta scale this is
    the same loss as sp_ce(with_complement): eta here = 2 * eta there.
    """
    probs = _check_probs(probs)
    if probs.shape[0] != 2:
        raise ShapeError("grad_starvation is defined for binary classification only")
    p = _clamped(probs[y])
    u = 1.0 - p
    m = np.log(p) - np.log(_clamped(u))
    value = np.logaddexp(0.0, -m) + 0.5 * eta * (p * p + u * u)
    t = -1.0 + eta * p * (p - u)
    return value, _grad_from_t(t, probs, y)


def evaluate(probs: np.ndarray, y: int, spec: LossSpec):
    """Dispatch a per-sample (value, dL/dlogits) evaluation by spec."""
    if spec.full_vector:
        # Single source of truth for the experimental flag: the batch kernel.
        probs = _check_probs(probs)
        z = np.log(np.maximum(probs, CLAMP_FLOOR))[None, :]
        values, dlogits, _ = loss_on_logits(z, np.array([y], dtype=np.int64), spec)
        return float(values[0]), dlogits[0]
    if spec.kind == "ce":
        return ce(probs, y)
    if spec.kind == "focal":
        return focal(probs, y, spec.alpha, spec.gamma)
    if spec.kind == "sp_ce":
        return sp_ce(probs, y, spec.eta, spec.variant)
    if spec.kind == "sp_focal":
        return sp_focal(probs, y, spec.alpha, spec.gamma, spec.eta)
    return grad_starvation(probs, y, spec.eta)


def loss_on_logits(logits: np.ndarray, labels: np.ndarray, spec: LossSpec):
    """Batched loss straight from logits, via the active kernel backend.

    Args:
        logits: (n, K) float64.
        labels: (n,) integer labels in [0, K).

    Returns:
        (values, dlogits, clamp_count); clamp_count is how many rows had
        their true-class probability clamped at the 1e-300 floor.
    """
    logits = np.ascontiguousarray(logits, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if logits.ndim != 2:
        raise ShapeError("logits must be a 2-D batch")
    if labels.ndim != 1 or labels.shape[0] != logits.shape[0]:
        raise ShapeError("labels must be 1-D and match the batch size")
    k = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError("labels out of range")
    if spec.kind == "grad_starvation" and k != 2:
        raise ShapeError("grad_starvation is defined for binary classification only")
    return backend.loss_forward(
        logits,
        labels,
        _KIND_CODES[spec.kind],
        spec.alpha,
        spec.gamma,
        spec.eta,
        _VARIANT_CODES.get(spec.variant, 0),
        spec.full_vector,
    )


def true_class_logit_gradient(spec: LossSpec, xi):
    """dL/dz_y as a function of the true-class probability xi (binary case).

    Uses the closed form dL/dz_y = t(xi) * (1 - xi) with t = xi * dL/dxi.
    Vectorized over xi. For full_vector specs the K=2 regularizer gradient
    2*c*eta*xi*(xi - q), q = xi^2 + (1-xi)^2, is added.
    """
    p = np.asarray(xi, dtype=np.float64)
    u = 1.0 - p
    log_p = np.log(np.maximum(p, CLAMP_FLOOR))

    if spec.kind == "ce":
        t = np.full_like(p, -1.0)
    elif spec.kind == "focal":
        t = _focal_t(p, u, log_p, spec.alpha, spec.gamma)
    elif spec.kind == "sp_ce":
        if spec.full_vector:
            t = np.full_like(p, -1.0)
        elif spec.variant == "single_term":
            t = -1.0 + 2.0 * spec.eta * p * p
        else:
            t = -1.0 + 2.0 * spec.eta * p * (p - u)
    elif spec.kind == "sp_focal":
        t = _focal_t(p, u, log_p, spec.alpha, spec.gamma)
        if not spec.full_vector:
            t = t + 2.0 * spec.eta * p * p
    else:  # grad_starvation
        t = -1.0 + spec.eta * p * (p - u)

    g = t * u
    if spec.full_vector:
        q = p * p + u * u
        c = 2.0 if (spec.kind == "sp_ce" and spec.variant == "with_complement") else 1.0
        g = g + 2.0 * c * spec.eta * p * (p - q)
    return g


def closed_form_stationary(spec: LossSpec) -> Optional[float]:
    """Analytic xi* where available; None otherwise.

    sp_ce single_term:     1/sqrt(2*eta)                       (eta > 0.5)
    sp_ce with_complement: (eta + sqrt(eta*(4+eta))) / (4*eta) (eta > 0.5)
    grad_starvation:       with_complement form at eta/2       (eta > 1)
    """
    if spec.full_vector:
        return None
    if spec.kind == "sp_ce" and spec.variant == "single_term":
        if spec.eta <= 0.5:
            return None
        return 1.0 / np.sqrt(2.0 * spec.eta)
    eta = None
    if spec.kind == "sp_ce" and spec.variant == "with_complement":
        eta = spec.eta
    elif spec.kind == "grad_starvation":
        eta = spec.eta / 2.0
    if eta is None or eta <= 0.5:
        return None
    return (eta + np.sqrt(eta * (4.0 + eta))) / (4.0 * eta)


def find_stationary_point(spec: LossSpec, grid_points: int = 4096) -> StationaryPointResult:
    """Locate a zero of the true-class logit gradient in xi over (0, 1).

    Scans (1e-6, 1-1e-6) for a sign change and bisects it down to float
    resolution. Losses with strictly negative gradient everywhere (ce,
    focal, sp_ce single_term at eta <= 0.5, ...) return exists=False.
    """
    lo, hi = 1e-6, 1.0 - 1e-6
    grid = np.linspace(lo, hi, grid_points)
    g = true_class_logit_gradient(spec, grid)

    zero_idx = np.flatnonzero(g == 0.0)
    if zero_idx.size:
        xi = float(grid[zero_idx[0]])
        return StationaryPointResult(True, xi, float(np.log(xi / (1 - xi))), (lo, hi))

    signs = np.sign(g)
    flips = np.flatnonzero(signs[:-1] * signs[1:] < 0)
    if flips.size == 0:
        return StationaryPointResult(False, None, None, (lo, hi))

    a, b = float(grid[flips[0]]), float(grid[flips[0] + 1])
    bracket = (a, b)
    ga = float(true_class_logit_gradient(spec, a))
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid == a or mid == b:
            break
        gm = float(true_class_logit_gradient(spec, mid))
        if gm == 0.0:
            a = b = mid
            break
        if (ga < 0) == (gm < 0):
            a, ga = mid, gm
        else:
            b = mid
    xi = 0.5 * (a + b)
    return StationaryPointResult(True, float(xi), float(np.log(xi / (1 - xi))), bracket)


def tabulate_curve(spec: LossSpec, z_gaps) -> list:
    """Loss/gradient curve rows over the symmetric binary parameterization.

    For each logit gap z_gap, evaluates the loss at z = [z_gap/2, -z_gap/2]
    with true class 0 and returns rows (z_gap, xi, value, dvalue_dz) where
    dvalue_dz is the true-class logit gradient. Suitable for CSV export.
    """
    rows = []
    for z_gap in np.asarray(z_gaps, dtype=np.float64):
        logits = np.array([[z_gap / 2.0, -z_gap / 2.0]])
        values, dlogits, _ = loss_on_logits(logits, np.array([0], dtype=np.int64), spec)
        xi = float(softmax(logits[0])[0])
        rows.append((float(z_gap), xi, float(values[0]), float(dlogits[0, 0])))
    return rows
