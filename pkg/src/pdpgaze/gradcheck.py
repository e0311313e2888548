"""Central finite-difference checks for the autodiff engine."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def numeric_grad(f: Callable[[], Tensor], t: Tensor, h: float = 1e-5, indices=None) -> np.ndarray:
    """d f() / d t by central differences; only ``indices`` (flat) are probed when given."""
    flat = t.data.reshape(-1)
    out = np.zeros_like(flat)
    for i in range(flat.size) if indices is None else indices:
        old = flat[i]
        flat[i] = old + h
        fp = f().item()
        flat[i] = old - h
        fm = f().item()
        flat[i] = old
        out[i] = (fp - fm) / (2 * h)
    return out.reshape(t.shape)


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def check_gradients(f: Callable[[], Tensor], tensors: Sequence[Tensor], h: float = 1e-5,
                    max_probes: int | None = None, rng: np.random.Generator | None = None) -> float:
    """Largest relative error between analytic and numeric gradients over ``tensors``.

    With ``max_probes`` only that many randomly chosen entries per tensor are
    perturbed and compared.
    """
    for t in tensors:
        t.grad = None
    f().backward()
    worst = 0.0
    rng = rng or np.random.default_rng(0)
    for t in tensors:
        analytic = np.zeros(t.shape) if t.grad is None else t.grad.copy()
        idx = None
        if max_probes is not None and t.size > max_probes:
            idx = rng.choice(t.size, size=max_probes, replace=False)
        numeric = numeric_grad(f, t, h, idx)
        if idx is not None:
            analytic = analytic.reshape(-1)[idx]
            numeric = numeric.reshape(-1)[idx]
        worst = max(worst, relative_error(analytic, numeric))
    return worst
