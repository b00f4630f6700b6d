"""Trade-search backend selection.

The compiled extension is used when it was built; otherwise the pure-Python
module takes over. ``AGORA_KERNEL=python`` forces the fallback.
"""

from __future__ import annotations

import logging
import os

import numpy as np

from . import _kernel_py

log = logging.getLogger(__name__)


def _load_compiled():
    if os.environ.get("AGORA_KERNEL", "").lower() == "python":
        return None
    try:
        from . import _kernel  # type: ignore[attr-defined]
    except ImportError:
        log.debug("compiled trade kernel unavailable, using pure Python")
        return None
    return _kernel


_compiled = _load_compiled()
BACKEND = "cython" if _compiled is not None else "python"


class PackedMarket:
    """Contiguous float64 views of a market, in the layout both kernels take."""

    __slots__ = ("h", "cost", "expertise", "efficiency", "fixed", "cap", "w")

    def __init__(self, holdings, cost, expertise, efficiency, fixed, cap, w):
        self.h = np.ascontiguousarray(holdings, dtype=np.float64)
        self.cost = np.ascontiguousarray(cost, dtype=np.float64)
        self.expertise = np.ascontiguousarray(expertise, dtype=np.float64)
        self.efficiency = np.ascontiguousarray(efficiency, dtype=np.float64)
        self.fixed = np.ascontiguousarray(fixed, dtype=np.float64)
        self.cap = np.ascontiguousarray(cap, dtype=np.float64)
        self.w = np.ascontiguousarray(w, dtype=np.float64)

    def as_lists(self):
        return (self.h.tolist(), self.cost.tolist(), self.expertise.tolist(), self.efficiency.tolist(),
                self.fixed.tolist(), self.cap.tolist(), self.w.tolist())


def best_trade(packed: PackedMarket, tau_trade, tau_benefit, delta_min, effective, backend=None):
    """Dispatch to the requested (or default) backend; see ``_kernel_py.best_trade``."""
    use = backend or BACKEND
    if use == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernel not built")
        return _compiled.best_trade(packed.h, packed.cost, packed.expertise, packed.efficiency, packed.fixed,
                                    packed.cap, packed.w, tau_trade, tau_benefit, delta_min, effective)
    return _kernel_py.best_trade(*packed.as_lists(), tau_trade, tau_benefit, delta_min, effective)


def strategic_savings(packed: PackedMarket, tau_trade, tau_benefit, delta_min, effective, k, backend=None):
    use = backend or BACKEND
    if use == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernel not built")
        return _compiled.strategic_savings(packed.h, packed.cost, packed.expertise, packed.efficiency, packed.fixed,
                                           packed.cap, packed.w, tau_trade, tau_benefit, delta_min,
                                           effective, k)
    return _kernel_py.strategic_savings(*packed.as_lists(), tau_trade, tau_benefit, delta_min, effective, k)


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _compiled is not None else [])
