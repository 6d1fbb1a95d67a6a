"""Pure-numpy implementation of the fused loss kernel.

This is the fallback backend: same contract as the compiled extension
``spnet._kernels``, selected at import time by :mod:`spnet.backend`.

The kernel fuses, for a batch of logit rows:
  softmax -> per-sample loss value -> exact gradient w.r.t. the logits.

Loss kinds (integer codes shared with the compiled backend):
  0  ce                -log(p)
  1  focal             -a*(1-p)^g*log(p)
  2  sp_ce             ce + eta*p^2               (variant 0, single term)
                       ce + eta*(p^2 + (1-p)^2)   (variant 1, with complement)
  3  sp_focal          focal + eta*p^2
  4  grad_starvation   softplus(-margin) + (eta/2)*(p^2 + (1-p)^2), K=2 only

where p is the softmax probability of the true class, clamped below at
CLAMP_FLOOR before any log. Every kind above depends on the logits only
through p, so the gradient has the closed form

  dL/dz = T * (onehot(y) - xi),   T = p * dL/dp.

With the full_vector flag the quadratic regularizer runs over the whole
probability vector instead of p alone (sp_ce / sp_focal only); the extra
gradient term is 2*c*eta*xi_j*(xi_j - sum(xi^2)).
"""

import numpy as np

CLAMP_FLOOR = 1e-300

KIND_CE = 0
KIND_FOCAL = 1
KIND_SP_CE = 2
KIND_SP_FOCAL = 3
KIND_GRAD_STARVATION = 4

VARIANT_SINGLE = 0
VARIANT_COMPLEMENT = 1


def _softplus(x):
    # log(1 + exp(x)) without overflow for large |x|
    out = np.empty_like(x)
    pos = x > 0
    out[pos] = x[pos] + np.log1p(np.exp(-x[pos]))
    out[~pos] = np.log1p(np.exp(x[~pos]))
    return out


def _focal_terms(p, u, log_p, alpha, gamma):
    """Focal classification term: value and T = p * d(value)/dp.

    u = 1 - p. Rows with u below the clamp floor are treated as fully
    converged (value and T both zero) to avoid overflow in u^(gamma-1).
    """
    if gamma == 0.0:
        return -alpha * log_p, np.full_like(p, -alpha)
    live = u >= CLAMP_FLOOR
    value = np.zeros_like(p)
    t = np.zeros_like(p)
    ul = u[live]
    pl = p[live]
    lpl = log_p[live]
    value[live] = -alpha * ul**gamma * lpl
    t[live] = alpha * ul ** (gamma - 1.0) * (gamma * pl * lpl - ul)
    return value, t


def loss_forward(logits, labels, kind, alpha, gamma, eta, variant, full_vector):
    """Fused softmax + loss + gradient for a batch of logit rows.

    Args:
        logits: (n, K) float64, C-contiguous.
        labels: (n,) int64 in [0, K).
        kind, variant: integer codes above.
        alpha, gamma, eta: loss hyperparameters (unused ones ignored).
        full_vector: regularize the full probability vector (sp losses).

    Returns:
        (values, dlogits, clamps): per-sample loss values (n,), gradient
        w.r.t. logits (n, K), and the count of rows whose true-class
        probability was clamped at CLAMP_FLOOR.
    """
    n, k = logits.shape
    rows = np.arange(n)

    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    xi = e / e.sum(axis=1, keepdims=True)

    p_raw = xi[rows, labels]
    clamps = int(np.count_nonzero(p_raw < CLAMP_FLOOR))
    p = np.maximum(p_raw, CLAMP_FLOOR)
    u = 1.0 - p
    log_p = np.log(p)

    if kind == KIND_CE:
        values = -log_p
        t = np.full(n, -1.0)
    elif kind == KIND_FOCAL:
        values, t = _focal_terms(p, u, log_p, alpha, gamma)
    elif kind == KIND_SP_CE:
        if full_vector:
            values = -log_p
            t = np.full(n, -1.0)
        elif variant == VARIANT_SINGLE:
            values = -log_p + eta * p * p
            t = -1.0 + 2.0 * eta * p * p
        else:
            values = -log_p + eta * (p * p + u * u)
            t = -1.0 + 2.0 * eta * p * (p - u)
    elif kind == KIND_SP_FOCAL:
        values, t = _focal_terms(p, u, log_p, alpha, gamma)
        if not full_vector:
            values = values + eta * p * p
            t = t + 2.0 * eta * p * p
    elif kind == KIND_GRAD_STARVATION:
        margin = logits[rows, labels] - logits[rows, 1 - labels]
        values = _softplus(-margin) + 0.5 * eta * (p * p + u * u)
        t = -1.0 + eta * p * (p - u)
    else:
        raise ValueError(f"unknown loss kind code {kind}")

    dlogits = -t[:, None] * xi
    dlogits[rows, labels] += t

    if full_vector and kind in (KIND_SP_CE, KIND_SP_FOCAL):
        q = np.sum(xi * xi, axis=1)
        if kind == KIND_SP_CE and variant == VARIANT_COMPLEMENT:
            c = 2.0
            values = values + eta * (2.0 * q + k - 2.0)
        else:
            c = 1.0
            values = values + eta * q
        dlogits += 2.0 * c * eta * xi * (xi - q[:, None])

    return values, dlogits, clamps
