"""Numerical substrate: checked array ops, Adam, dropout, gradient checks.

All arithmetic is float64 numpy.  Reproducibility comes from numpy's
PCG64 generator (`np.random.default_rng(seed)`); every stochastic
component takes an explicit generator so runs are replayable end to end.

Numerical safety: sigmoid inputs are clamped to [-30, 30] before
exponentiation and Bernoulli probabilities are clamped to
[1e-7, 1 - 1e-7] before logs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SIGMOID_CLAMP = 30.0
PROB_EPS = 1e-7


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class NumericsError(FloatingPointError):
    """Raised on non-finite values where finiteness is required."""


def as_tensor(x):
    return np.asarray(x, dtype=np.float64)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes incompatible: {a.shape} @ {b.shape}")
    return a @ b


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"add shapes differ: {a.shape} vs {b.shape}")
    return a + b


def hadamard(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard shapes differ: {a.shape} vs {b.shape}")
    return a * b


def concat(parts, axis=-1):
    return np.concatenate([as_tensor(p) for p in parts], axis=axis)


def sigmoid(x):
    """Logistic function with inputs clamped to +-30; output in (0, 1)."""
    z = np.clip(as_tensor(x), -SIGMOID_CLAMP, SIGMOID_CLAMP)
    return 1.0 / (1.0 + np.exp(-z))


def tanh(x):
    return np.tanh(as_tensor(x))


def relu(x):
    return np.maximum(as_tensor(x), 0.0)


def clamp_prob(p):
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def bce(probs, labels):
    """Binary cross entropy, summed (not averaged) over all entries."""
    p = clamp_prob(as_tensor(probs))
    y = as_tensor(labels)
    return float(-np.sum(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def bce_grad_wrt_logits(probs, labels):
    """d(bce)/d(pre-sigmoid logits); zero where the prob clamp is active."""
    p = as_tensor(probs)
    inside = (p > PROB_EPS) & (p < 1.0 - PROB_EPS)
    return np.where(inside, p - as_tensor(labels), 0.0)


def dropout(x, rate, mode, rng):
    """Inverted dropout.

    Train mode zeroes entries with probability `rate` and scales the
    survivors by 1/(1-rate); eval mode is the identity.  Rate 0 is the
    identity in both modes and consumes no randomness.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    x = as_tensor(x)
    if mode == "eval" or rate == 0.0:
        return x
    mask = rng.random(x.shape) >= rate
    return x * mask / (1.0 - rate)


def dropout_mask(shape, rate, rng):
    """Pre-scaled dropout mask (0 or 1/(1-rate)); multiply to apply."""
    if rate == 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


# --- Adam ---------------------------------------------------------------

@dataclass
class AdamState:
    """Per-parameter first/second moments plus hyperparameters."""

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state):
    """One bias-corrected Adam update, in place.

    `params` and `grads` are dicts of name -> float64 array with
    matching shapes.  Rejects non-finite gradients (naming the
    parameter) and verifies the updated parameters are finite.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericsError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads[name]
        if p.shape != g.shape:
            raise ShapeError(
                f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}"
            )
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
        if not np.all(np.isfinite(p)):
            raise NumericsError(f"non-finite parameter {name!r} after Adam step")
    return params


# --- Finite-difference gradient verification ----------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    per_tensor: dict
    worst: tuple | None  # (tensor name, flat index, analytic, numeric)

    def passed(self, tol=1e-4):
        return self.max_rel_error < tol


def finite_diff_check(loss_fn, params, eps=1e-5, tol=1e-4, samples_per_tensor=16,
                      rng=None, auto_floor=False):
    """Compare analytic gradients against central finite differences.

    `loss_fn()` must return (loss, grads-dict) deterministically (run
    dropout in eval mode).  For each parameter tensor a random sample of
    coordinates is perturbed by +-eps; the relative error is
    |analytic - numeric| / max(floor, |analytic| + |numeric|)
    with floor = 1e-8.

    Central differences in float64 resolve a gradient only down to about
    |loss| * 2^-52 / eps: below that, the difference quotient is rounding
    noise and no step size recovers the signal (larger steps trade it for
    truncation error).  With `auto_floor` the small-gradient floor is
    lifted to 16 * |loss| * eps_machine / (2 * eps * tol), so sub-floor
    coordinates are still compared, but at the oracle's own absolute
    resolution rather than at a relative tolerance it cannot certify.
    """
    rng = rng or np.random.default_rng(0)
    base_loss, grads = loss_fn()
    floor = 1e-8
    if auto_floor:
        noise = 8.0 * abs(base_loss) * np.finfo(np.float64).eps / (2.0 * eps)
        floor = max(floor, 2.0 * noise / tol)
    per_tensor = {}
    worst = None
    max_rel = 0.0
    n_checked = 0
    for name, p in params.items():
        g = grads[name]
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        n = flat_p.size
        idxs = np.arange(n) if n <= samples_per_tensor else rng.choice(
            n, size=samples_per_tensor, replace=False
        )
        tensor_max = 0.0
        for i in idxs:
            orig = flat_p[i]
            flat_p[i] = orig + eps
            up, _ = loss_fn()
            flat_p[i] = orig - eps
            dn, _ = loss_fn()
            flat_p[i] = orig
            numeric = (up - dn) / (2.0 * eps)
            analytic = flat_g[i]
            rel = abs(analytic - numeric) / max(floor, abs(analytic) + abs(numeric))
            n_checked += 1
            if rel > tensor_max:
                tensor_max = rel
            if rel > max_rel:
                max_rel = rel
                worst = (name, int(i), float(analytic), float(numeric))
        per_tensor[name] = tensor_max
    return GradCheckReport(
        max_rel_error=max_rel, n_checked=n_checked, per_tensor=per_tensor, worst=worst
    )
