"""Finite-difference oracle shared by the gradient tests."""

import numpy as np

from segcross.tensor import Tensor, backward


def numeric_grad(f, x: Tensor, h: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(x.data)
    it = np.nditer(x.data, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x.data[i]
        x.data[i] = orig + h
        up = f().item()
        x.data[i] = orig - h
        down = f().item()
        x.data[i] = orig
        grad[i] = (up - down) / (2 * h)
    return grad


def rel_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def check_grads(f, params, h: float = 1e-5) -> dict[str, float]:
    """Relative error between analytic and central-difference gradients per input."""
    for p in params.values():
        p.grad = None
    backward(f(), params=list(params.values()))
    analytic = {k: p.grad.copy() for k, p in params.items()}
    return {k: rel_error(analytic[k], numeric_grad(f, p, h)) for k, p in params.items()}
