import numpy as np
import pytest

from spnet import backend
from spnet.losses import loss_on_logits


@pytest.fixture(params=backend.available())
def kernel_backend(request):
    """Run a test once per available kernel backend."""
    previous = backend.active()
    backend.use(request.param)
    yield request.param
    backend.use(previous)


def batch_mean_loss(net, spec, batch, labels) -> float:
    logits, _ = net.forward(batch)
    values, _, _ = loss_on_logits(logits, labels, spec)
    return float(values.mean())


def analytic_param_gradients(net, spec, batch, labels):
    """Backprop gradients of the batch-mean loss, one array per parameter."""
    logits, cache = net.forward(batch)
    _, dlogits, _ = loss_on_logits(logits, labels, spec)
    grads = net.backward(cache, dlogits / batch.shape[0])
    out = []
    for dw, db in zip(grads.weights, grads.biases):
        out.append(dw)
        out.append(db)
    return out


def fd_param_gradients(net, spec, batch, labels, h=1e-5):
    """Central finite differences of the batch-mean loss over all parameters."""
    grads = []
    for p in net.parameters():
        g = np.zeros_like(p)
        flat, gf = p.ravel(), g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = batch_mean_loss(net, spec, batch, labels)
            flat[i] = orig - h
            lm = batch_mean_loss(net, spec, batch, labels)
            flat[i] = orig
            gf[i] = (lp - lm) / (2.0 * h)
        grads.append(g)
    return grads


def fd_input_gradient(net, spec, batch, labels, h=1e-5):
    """Central finite differences of the summed loss w.r.t. the input batch."""
    batch = batch.copy()
    g = np.zeros_like(batch)

    def total():
        logits, _ = net.forward(batch)
        values, _, _ = loss_on_logits(logits, labels, spec)
        return float(values.sum())

    flat, gf = batch.ravel(), g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        lp = total()
        flat[i] = orig - h
        lm = total()
        flat[i] = orig
        gf[i] = (lp - lm) / (2.0 * h)
    return g


def max_relative_error(analytic, numeric, grad_floor=1e-6):
    """Largest relative mismatch where either gradient is meaningfully nonzero.

    Entries where both gradients are below grad_floor are compared
    absolutely instead (they must agree to 1e-8).
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    mag = np.maximum(np.abs(analytic), np.abs(numeric))
    live = mag > grad_floor
    assert np.all(np.abs(analytic[~live] - numeric[~live]) < 1e-8)
    if not live.any():
        return 0.0
    return float((np.abs(analytic - numeric)[live] / mag[live]).max())


def gradcheck_error(analytic, numeric):
    """|a - f| / max(|a|, |f|, 1): relative for large, absolute for small."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return float((np.abs(analytic - numeric) / denom).max())
