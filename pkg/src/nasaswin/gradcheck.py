"""Central finite-difference checks against the autodiff gradients."""
from __future__ import annotations

import contextlib
from typing import Callable, Dict, List, Sequence

import numpy as np

from . import functional as F
from . import tensor as _tensor
from .tensor import Tensor, backward

STEP = 1e-3
TOLERANCE = 1e-4


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """max|a - n| / max(max|a|, max|n|, floor)."""
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def numerical_gradient(fn: Callable[[], Tensor], tensor: Tensor, step: float = STEP) -> np.ndarray:
    """Elementwise central differences of scalar ``fn()`` w.r.t. ``tensor``."""
    base = tensor.data
    grad = np.zeros_like(base)
    flat = grad.reshape(-1)
    for i in range(base.size):
        bumped = base.copy().reshape(-1)
        bumped[i] += step
        tensor.data = bumped.reshape(base.shape)
        up = fn().item()
        bumped[i] -= 2 * step
        tensor.data = bumped.reshape(base.shape)
        down = fn().item()
        flat[i] = (up - down) / (2 * step)
    tensor.data = base
    return grad


def check_gradients(fn: Callable[[], Tensor], inputs: Sequence[Tensor], step: float = STEP) -> Dict[int, float]:
    """Relative error per input, comparing backward() with elementwise differences."""
    loss = fn()
    backward(loss, inputs=inputs)
    analytic = [t.grad.copy() for t in inputs]
    return {i: relative_error(a, numerical_gradient(fn, t, step)) for i, (t, a) in enumerate(zip(inputs, analytic))}


@contextlib.contextmanager
def record_kinks():
    """Collect the sign pattern of every abs() evaluated inside the block."""
    prev = _tensor.kink_log
    log: List[np.ndarray] = []
    _tensor.kink_log = log
    try:
        yield log
    finally:
        _tensor.kink_log = prev


@contextlib.contextmanager
def replay_kinks(patterns: List[np.ndarray]):
    """Evaluate abs() on the linear pieces recorded in ``patterns``."""
    prev = _tensor.kink_replay
    _tensor.kink_replay = iter(patterns)
    try:
        yield
    finally:
        _tensor.kink_replay = prev


def directional_check(
    fn: Callable[[], Tensor],
    named: Dict[str, Tensor],
    rng: np.random.Generator,
    step: float = STEP,
) -> Dict[str, float]:
    """One random unit direction per named tensor; compare <grad, v> to the difference quotient.

    Used for whole models, where elementwise differences would need two
    forward passes per scalar parameter. The perturbed evaluations reuse the
    abs() sign pattern of the unperturbed point, so the quotient
    differentiates the same linear piece that backward() does even when a
    feature difference crosses zero inside the stencil.
    """
    with record_kinks() as pattern:
        loss = fn()
    backward(loss, inputs=list(named.values()))
    grads = {k: t.grad.copy() for k, t in named.items()}
    errors = {}
    for name, t in named.items():
        v = rng.standard_normal(t.shape)
        v /= np.linalg.norm(v)
        base = t.data
        try:
            t.data = base + step * v
            with replay_kinks(pattern):
                up = fn().item()
            t.data = base - step * v
            with replay_kinks(pattern):
                down = fn().item()
        finally:
            t.data = base
        numeric = (up - down) / (2 * step)
        analytic = float((grads[name] * v).sum())
        errors[name] = relative_error(np.array(analytic), np.array(numeric))
    return errors


def randomize_parameters(module, rng: np.random.Generator) -> None:
    """Overwrite every parameter with a variance-preserving uniform draw.

    Entries are U(-1, 1); weight matrices and conv kernels are scaled by
    sqrt(3 / fan_in) so activations keep unit scale through depth. Checking
    gradients here keeps every layer norm well conditioned, which a
    freshly initialised model (tiny weights, near-zero variances) is not.
    """
    for _, p in module.named_parameters():
        u = rng.uniform(-1.0, 1.0, p.shape)
        if p.ndim == 2:
            u = u * np.sqrt(3.0 / p.shape[0])
        elif p.ndim == 4:
            u = u * np.sqrt(3.0 / np.prod(p.shape[1:]))
        p.data = u


def model_gradient_errors(model, seed: int, batch: int = 2) -> Dict[str, float]:
    """Directional check of the cross-entropy of ``model`` at random parameters."""
    rng = np.random.default_rng(seed)
    h, w = model.cfg.input_hw
    x = rng.uniform(-1.0, 1.0, (batch, 6, h, w))
    labels = [i % 2 for i in range(batch)]
    randomize_parameters(model, rng)
    return directional_check(lambda: F.cross_entropy(model(x), labels), dict(model.named_parameters()), rng)
