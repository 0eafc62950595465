"""Central finite differences, used as an independent oracle for backward rules."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward


def numerical_grad(f: Callable[[], Tensor], t: Tensor, eps: float = 1e-5) -> np.ndarray:
    """d f() / d t by central differences; perturbs ``t.data`` element by element."""
    grad = np.zeros_like(t.data, dtype=np.float64)
    flat = t.data.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f().item()
        flat[i] = orig - eps
        lo = f().item()
        flat[i] = orig
        g[i] = (hi - lo) / (2 * eps)
    return grad


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """||a - b|| / max(||a||, ||b||), 0 when both vanish."""
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if denom == 0 else float(np.linalg.norm(a - b) / denom)


def check_gradients(f: Callable[[], Tensor], inputs: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Largest relative error between backward() and finite differences over ``inputs``."""
    for t in inputs:
        t.grad = None
    backward(f())
    worst = 0.0
    for t in inputs:
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        worst = max(worst, rel_error(analytic, numerical_grad(f, t, eps)))
    return worst


def numerical_jacobian(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Dense Jacobian of a vector map by central differences (rows: outputs)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    cols = []
    for i in range(n):
        d = np.zeros(n)
        d[i] = eps
        hi = f((x.reshape(-1) + d).reshape(x.shape)).reshape(-1)
        lo = f((x.reshape(-1) - d).reshape(x.shape)).reshape(-1)
        cols.append((hi - lo) / (2 * eps))
    return np.stack(cols, axis=1)
