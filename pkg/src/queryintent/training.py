"""Shared minibatch training machinery for the neural models.

Queries are bucketed by length so every batch is a dense (B, T) id
matrix and the difference features never see padding states.  The whole
loop draws from a single seeded generator, so a seed fixes the
trajectory bit for bit.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .numerics import AdamState, NumericsError, adam_step


class DivergenceError(RuntimeError):
    """Raised when training hits a non-finite loss or gradient."""


def bucket_batches(lengths, batch_size, rng):
    """Shuffled batches of indices, each batch holding equal-length items."""
    order = rng.permutation(len(lengths))
    buckets = {}
    for i in order:
        buckets.setdefault(int(lengths[i]), []).append(int(i))
    batches = []
    for length in sorted(buckets):
        idxs = buckets[length]
        for start in range(0, len(idxs), batch_size):
            batches.append(idxs[start : start + batch_size])
    perm = rng.permutation(len(batches))
    return [batches[i] for i in perm]


@dataclass
class TrainResult:
    loss_trace: list = field(default_factory=list)  # per-epoch mean loss/example
    val_trace: list = field(default_factory=list)   # per-epoch validation AP@nnz
    best_epoch: int = -1
    best_val: float = float("-inf")


def run_training(params, batch_loss_fn, lengths, epochs, batch_size, lr, rng,
                 val_fn=None, log=None):
    """Generic epoch loop: Adam over shuffled length-bucketed batches.

    `batch_loss_fn(indices)` returns (summed loss, grads dict, n_examples);
    `val_fn()` scores the current parameters (higher is better) and the
    best-scoring epoch's parameters are restored at the end.  Without a
    `val_fn` the final parameters are kept.
    """
    state = AdamState(lr=lr)
    result = TrainResult()
    best_snapshot = None
    n_batches_done = 0
    for epoch in range(epochs):
        total_loss = 0.0
        total_examples = 0
        for batch in bucket_batches(lengths, batch_size, rng):
            loss, grads, n = batch_loss_fn(batch)
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch {n_batches_done}"
                )
            try:
                adam_step(params, grads, state)
            except NumericsError as exc:
                raise DivergenceError(
                    f"epoch {epoch}, batch {n_batches_done}: {exc}"
                ) from exc
            total_loss += loss
            total_examples += n
            n_batches_done += 1
        epoch_loss = total_loss / max(total_examples, 1)
        result.loss_trace.append(epoch_loss)
        if val_fn is not None:
            score = val_fn()
            result.val_trace.append(score)
            if score > result.best_val:
                result.best_val = score
                result.best_epoch = epoch
                best_snapshot = {k: v.copy() for k, v in params.items()}
        if log is not None:
            shown = f" val={result.val_trace[-1]:.4f}" if val_fn else ""
            log(f"epoch {epoch + 1}/{epochs} loss={epoch_loss:.4f}{shown}")
    if best_snapshot is not None:
        for k in params:
            params[k][...] = best_snapshot[k]
    return result


def snapshot_params(params):
    return copy.deepcopy(params)
