"""Backend selection for the fused training loop.

The environment variable LCHOICE_BACKEND picks the implementation:
"numba" (jit kernels), "numpy" (pure-numpy fallback), or "auto" (default:
numba when importable, numpy otherwise).  Both produce the same parameter
trajectory up to float rounding because they share one PRNG stream contract.
"""

from __future__ import annotations

import os

import numpy as np

from . import program as pr
from .fused_numpy import FitResult, fit_numpy
from .ops import TrainConfig

ENV_VAR = "LCHOICE_BACKEND"


def numba_available() -> bool:
    try:
        from .fused_numba import NUMBA_AVAILABLE
        return NUMBA_AVAILABLE
    except ImportError:  # pragma: no cover
        return False


def active_backend(override: str | None = None) -> str:
    """Resolve the backend name: explicit override, else env var, else auto."""
    choice = override or os.environ.get(ENV_VAR, "auto").lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(f"unknown backend {choice!r}; expected auto, numba or numpy")
    if choice == "auto":
        return "numba" if numba_available() else "numpy"
    if choice == "numba" and not numba_available():
        raise RuntimeError("LCHOICE_BACKEND=numba but numba is not importable")
    return choice


def _as_kernel_arrays(data: np.ndarray, avail: np.ndarray,
                      choice: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    data = np.ascontiguousarray(data, dtype=np.float64)
    avail = np.ascontiguousarray(avail, dtype=np.float64)
    choice = np.ascontiguousarray(choice, dtype=np.int64)
    return data, avail, choice


def fit_program(prog: pr.ModelProgram, data: np.ndarray, avail: np.ndarray,
                choice: np.ndarray, config: TrainConfig,
                train_beta: bool = True, train_net: bool = True,
                train_mu: bool = True, backend: str | None = None) -> FitResult:
    """Train the program's flagged parameter blocks in place."""
    data, avail, choice = _as_kernel_arrays(data, avail, choice)
    n = data.shape[0]
    if avail.shape[0] != n or choice.shape[0] != n:
        raise ValueError("data, avail and choice row counts differ")
    if not (avail.sum(axis=1) > 0).all():
        raise ValueError("row with no available alternative")
    rows = np.arange(n)
    if not (avail[rows, choice] > 0).all():
        raise ValueError("chosen alternative marked unavailable")
    name = active_backend(backend)
    if name == "numba":
        from .fused_numba import fit_numba
        return fit_numba(prog, data, avail, choice, config, train_beta, train_net, train_mu)
    return fit_numpy(prog, data, avail, choice, config, train_beta, train_net, train_mu)
