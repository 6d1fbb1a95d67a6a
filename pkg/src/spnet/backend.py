"""Kernel backend selection.

The fused softmax/loss/gradient kernel exists twice: a compiled Cython
extension (spnet._kernels) and a pure-numpy fallback (spnet._kernels_py)
with identical contracts. The compiled one is preferred when importable;
set SPNET_BACKEND=python to force the fallback, or SPNET_BACKEND=compiled
to fail loudly if the extension is missing.

Results of the two backends agree to floating-point tolerance but are not
bitwise identical (libm vs numpy vectorized transcendentals), so
reproducibility guarantees hold per backend.
"""

import os

from . import _kernels_py

_FORCED = os.environ.get("SPNET_BACKEND", "").strip().lower()

if _FORCED == "python":
    _impl = _kernels_py
elif _FORCED == "compiled":
    from . import _kernels as _impl
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py


def active() -> str:
    """Name of the backend in use: 'compiled' or 'python'."""
    return "python" if _impl is _kernels_py else "compiled"


def use(name: str) -> None:
    """Switch backend at runtime ('compiled' or 'python'). Test hook."""
    global _impl
    if name == "python":
        _impl = _kernels_py
    elif name == "compiled":
        from . import _kernels

        _impl = _kernels
    else:
        raise ValueError(f"unknown backend {name!r}")


def available() -> list[str]:
    names = ["python"]
    try:
        from . import _kernels  # noqa: F401

        names.insert(0, "compiled")
    except ImportError:
        pass
    return names


def loss_forward(logits, labels, kind, alpha, gamma, eta, variant, full_vector):
    return _impl.loss_forward(
        logits, labels, kind, alpha, gamma, eta, variant, full_vector
    )
