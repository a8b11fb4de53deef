"""Contextual term weighting: per-position importance of query terms.

For each position t the feature vector is the term's word vector
concatenated with the forward and backward hidden-state differences

    f_t = [r_t, hf_t - hf_{t-1}, hb_t - hb_{t+1}]

(the zero boundary states supply t=1 and t=|q|), so the feature
captures how much the term moved each running summary.  A small MLP
with a sigmoid output turns the feature into a weight in (0, 1);
training minimizes binary cross entropy against retention labels
(1 when the term also appears in the reformulated query), summed over
queries and positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import EncoderForward, EncoderParams, encode, init_encoder
from .numerics import (bce, bce_grad_wrt_logits, dropout_mask, relu, sigmoid)
from .text import Vocabulary, term_set, tokenize
from .training import run_training
from . import metrics


@dataclass
class CtwHeadParams:
    """Two-layer MLP: features -> ReLU hidden -> single sigmoid node."""

    w1: np.ndarray  # (d + 2l, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    b2: np.ndarray  # (1,)
    dropout: float = 0.25  # on the feature vector, train mode only

    def tensors(self):
        return {"head.w1": self.w1, "head.b1": self.b1,
                "head.w2": self.w2, "head.b2": self.b2}


@dataclass
class CtwModel:
    config: object  # RunConfig
    vocab: Vocabulary
    encoder: EncoderParams
    head: CtwHeadParams
    loss_trace: list = None
    val_trace: list = None
    best_epoch: int = -1

    def tensors(self):
        out = self.encoder.tensors()
        out.update(self.head.tensors())
        return out


def init_ctw(config, vocab, rng):
    enc = init_encoder(len(vocab), config.dim, config.hidden, config.layers,
                       config.dropout, rng)
    n_features = config.dim + 2 * config.hidden
    bound = np.sqrt(6.0 / (n_features + config.ctw_hidden))
    head = CtwHeadParams(
        w1=rng.uniform(-bound, bound, size=(n_features, config.ctw_hidden)),
        b1=np.zeros(config.ctw_hidden),
        w2=rng.uniform(-0.5, 0.5, size=config.ctw_hidden),
        b2=np.zeros(1),
        dropout=config.dropout,
    )
    return CtwModel(config=config, vocab=vocab, encoder=enc, head=head)


def features(enc, embedding, t):
    """Feature vector for 1-based position `t` of an encoded query."""
    n = len(enc)
    if not 1 <= t <= n:
        raise IndexError(f"position {t} out of range 1..{n}")
    i = t - 1
    r = embedding[enc.ids[i]]
    df = enc.hf[i] - (enc.hf[i - 1] if i > 0 else np.zeros_like(enc.hf[i]))
    db = enc.hb[i] - (enc.hb[i + 1] if i + 1 < n else np.zeros_like(enc.hb[i]))
    return np.concatenate([r, df, db])


def _batch_features(x, hf, hb):
    """(B, T, d + 2l) features from embedded inputs and top-layer states."""
    df = hf.copy()
    df[:, 1:] -= hf[:, :-1]
    db = hb.copy()
    db[:, :-1] -= hb[:, 1:]
    return np.concatenate([x, df, db], axis=2)


def _head_forward(head, feats):
    """feats (N, F) -> (hidden pre-activations, hidden, probabilities)."""
    u = feats @ head.w1 + head.b1
    h = relu(u)
    logits = h @ head.w2 + head.b2[0]
    return u, h, sigmoid(logits)


def ctw_loss(model, ids, labels, mode="eval", rng=None):
    """Summed BCE loss and gradients for a batch of equal-length queries.

    `ids` is (B, T) term ids, `labels` (B, T) binary retention labels.
    Returns (loss, grads keyed like model.tensors(), probs (B, T)).
    """
    ids = np.asarray(ids)
    labels = np.asarray(labels, dtype=np.float64)
    if ids.ndim == 1:
        ids, labels = ids[None, :], labels[None, :]
    if labels.shape != ids.shape:
        raise ValueError(f"labels shape {labels.shape} != ids shape {ids.shape}")
    B, T = ids.shape
    fwd = EncoderForward(model.encoder, ids, mode=mode, rng=rng)
    feats = _batch_features(fwd.x, fwd.hf, fwd.hb)
    n_features = feats.shape[2]
    if mode == "train" and model.head.dropout > 0.0:
        mask = dropout_mask(feats.shape, model.head.dropout, rng)
        feats = feats * mask
    else:
        mask = None
    flat = feats.reshape(B * T, n_features)
    u, h, probs = _head_forward(model.head, flat)
    y = labels.reshape(B * T)
    loss = bce(probs, y)

    d_logits = bce_grad_wrt_logits(probs, y)          # (N,)
    g_w2 = h.T @ d_logits
    g_b2 = np.array([d_logits.sum()])
    dh = d_logits[:, None] * model.head.w2[None, :]
    du = dh * (u > 0)
    g_w1 = flat.T @ du
    g_b1 = du.sum(axis=0)
    d_feats = (du @ model.head.w1.T).reshape(B, T, n_features)
    if mask is not None:
        d_feats = d_feats * mask

    d = model.encoder.dim
    l = model.encoder.hidden_size
    d_x = d_feats[:, :, :d]
    d_df = d_feats[:, :, d : d + l]
    d_db = d_feats[:, :, d + l :]
    d_hf = d_df.copy()
    d_hf[:, :-1] -= d_df[:, 1:]
    d_hb = d_db.copy()
    d_hb[:, 1:] -= d_db[:, :-1]

    grads = fwd.backward(d_hf, d_hb, d_x_extra=d_x)
    grads["head.w1"] = g_w1
    grads["head.b1"] = g_b1
    grads["head.w2"] = g_w2
    grads["head.b2"] = g_b2
    return loss, grads, probs.reshape(B, T)


def predict_weights(model, query):
    """Per-position weights in (0, 1) for a Query or id sequence."""
    ids = np.asarray(query.terms if hasattr(query, "terms") else query)
    enc = EncoderForward(model.encoder, ids[None, :], mode="eval")
    feats = _batch_features(enc.x, enc.hf, enc.hb)
    _, _, probs = _head_forward(model.head, feats.reshape(len(ids), -1))
    return probs


def term_ranking(model, raw_query):
    """Distinct terms of the query ranked by weight (desc, stable)."""
    q = tokenize(raw_query, "frozen", model.vocab)
    weights = predict_weights(model, q)
    return rank_query_terms(q.term_strings(model.vocab), weights)


def rank_query_terms(term_strings, weights):
    """De-duplicate positional weights into a ranked term list.

    A term appearing at several positions keeps its maximum weight; ties
    break by first occurrence order.
    """
    best = {}
    order = {}
    for pos, (term, w) in enumerate(zip(term_strings, weights)):
        if term not in best or w > best[term]:
            best[term] = float(w)
        order.setdefault(term, pos)
    return sorted(best, key=lambda t: (-best[t], order[t]))


def build_examples(pairs, vocab, mode):
    """Tokenized (ids, labels, q_terms, truth_set) rows for (q, R(q)) pairs.

    The retention label of position t is 1 iff the term also occurs in
    the reformulated query (every duplicate position is labeled).
    """
    rows = []
    for p in pairs:
        q = tokenize(p.q, mode, vocab)
        rq_terms = term_set(p.rq)
        if mode == "build":
            tokenize(p.rq, mode, vocab)  # count reformulation terms too
        strings = q.term_strings(vocab)
        labels = tuple(1.0 if t in rq_terms else 0.0 for t in strings)
        rows.append((q.terms, labels, strings, rq_terms))
    return rows


def validation_ap(model, examples):
    """AP@nnz of weight-ranked terms against retained-term ground truth."""
    instances = []
    for ids, _, strings, rq_terms in examples:
        weights = predict_weights(model, ids)
        truth = set(strings) & rq_terms
        instances.append((rank_query_terms(strings, weights), truth))
    try:
        return metrics.precision_summary(instances).ap_at_nnz
    except ValueError:
        return 0.0


def train_ctw(train_pairs, val_pairs, config, seed=None, vocab=None, log=None):
    """Train a CTW model; returns the best-validation-epoch snapshot.

    The vocabulary is built from the training pairs unless supplied.
    """
    config.validate()
    if seed is None:
        seed = config.seed
    if not train_pairs:
        raise ValueError("empty training set")
    if vocab is None:
        vocab = Vocabulary()
        train_rows = build_examples(train_pairs, vocab, "build")
    else:
        train_rows = build_examples(train_pairs, vocab, "frozen")
    val_rows = build_examples(val_pairs, vocab, "frozen")

    rng = np.random.default_rng(seed)
    model = init_ctw(config, vocab, rng)
    params = model.tensors()
    lengths = [len(r[0]) for r in train_rows]

    def batch_loss(indices):
        ids = np.array([train_rows[i][0] for i in indices])
        labels = np.array([train_rows[i][1] for i in indices])
        loss, grads, _ = ctw_loss(model, ids, labels, mode="train", rng=rng)
        return loss, grads, len(indices)

    result = run_training(
        params, batch_loss, lengths, config.epochs, config.batch_size,
        config.lr, rng, val_fn=(lambda: validation_ap(model, val_rows)) if val_rows
        else None, log=log,
    )
    model.loss_trace = result.loss_trace
    model.val_trace = result.val_trace
    model.best_epoch = result.best_epoch
    return model
