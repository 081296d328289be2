"""Kernel selection: compiled extension when available, pure Python otherwise.

MQLE_KERNELS=pure forces the fallback; MQLE_KERNELS=native raises if the
extension is missing. The active choice is exposed as BACKEND.
"""

import os

from . import pure as _pure

_mode = os.environ.get("MQLE_KERNELS", "auto")
if _mode not in ("auto", "native", "pure"):
    raise RuntimeError(f"MQLE_KERNELS must be auto|native|pure, got {_mode!r}")

_impl = None
if _mode in ("auto", "native"):
    try:
        from . import _native as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _mode == "native":
            raise
        _impl = None
if _impl is None:
    _impl = _pure

BACKEND = "pure" if _impl is _pure else "native"
gibbs_sweep = _impl.gibbs_sweep
sgd_epoch = _impl.sgd_epoch
