"""Trajectory kernel selection.

The compiled kernel is used when it imports; ``TICKSIM_PURE_PYTHON=1``
forces the pure-Python one.
"""
from __future__ import annotations

import os

from . import _sampler_py
from .errors import ValidationError

try:
    from . import _sampler_ext
except ImportError:  # extension not built
    _sampler_ext = None

KERNELS = {"python": _sampler_py}
if _sampler_ext is not None:
    KERNELS["cython"] = _sampler_ext


def default_name() -> str:
    if os.environ.get("TICKSIM_PURE_PYTHON", "") not in ("", "0") or _sampler_ext is None:
        return "python"
    return "cython"


def get(name: str | None = None):
    name = default_name() if name is None else name
    try:
        return KERNELS[name]
    except KeyError:
        raise ValidationError(f"unknown or unavailable backend {name!r}; have {sorted(KERNELS)}") from None
