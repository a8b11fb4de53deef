"""Contextual query refinement: multilabel term prediction over the
vocabulary from the whole-query intent representation.

The intent vector is [hf_|q|, hb_1] (forward last state, backward first
state).  An MLP with |V| sigmoid output nodes scores every vocabulary
term; training minimizes binary cross entropy with a positive label for
each term present in the reformulated query.  The unknown-term id is
never a positive label and is excluded from top-k predictions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import EncoderForward, init_encoder
from .numerics import bce, bce_grad_wrt_logits, dropout_mask, relu, sigmoid
from .text import UNK_ID, Vocabulary, term_set, tokenize
from .training import run_training
from . import metrics


@dataclass
class CqrHeadParams:
    """Two-layer MLP: intent vector -> ReLU hidden -> |V| sigmoid nodes."""

    w1: np.ndarray  # (2l, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden, |V|)
    b2: np.ndarray  # (|V|,)
    dropout: float = 0.25

    def tensors(self):
        return {"head.w1": self.w1, "head.b1": self.b1,
                "head.w2": self.w2, "head.b2": self.b2}


@dataclass
class CqrModel:
    config: object
    vocab: Vocabulary
    encoder: object  # EncoderParams
    head: CqrHeadParams
    loss_trace: list = None
    val_trace: list = None
    best_epoch: int = -1

    def tensors(self):
        out = self.encoder.tensors()
        out.update(self.head.tensors())
        return out


def init_cqr(config, vocab, rng):
    enc = init_encoder(len(vocab), config.dim, config.hidden, config.layers,
                       config.dropout, rng)
    n_in = 2 * config.hidden
    n_hidden = config.resolve_cqr_hidden(len(vocab))
    b1 = np.sqrt(6.0 / (n_in + n_hidden))
    b2 = np.sqrt(6.0 / (n_hidden + len(vocab)))
    head = CqrHeadParams(
        w1=rng.uniform(-b1, b1, size=(n_in, n_hidden)),
        b1=np.zeros(n_hidden),
        w2=rng.uniform(-b2, b2, size=(n_hidden, len(vocab))),
        b2=np.zeros(len(vocab)),
        dropout=config.dropout,
    )
    return CqrModel(config=config, vocab=vocab, encoder=enc, head=head)


def _intent_batch(fwd):
    """(B, 2l) intent vectors from a cached encoder forward pass."""
    return np.concatenate([fwd.hf[:, -1], fwd.hb[:, 0]], axis=1)


def cqr_loss(model, ids, label_sets, mode="eval", rng=None):
    """Summed multilabel BCE and gradients for equal-length queries.

    `label_sets` is a sequence of positive-term-id collections, one per
    query; the unknown id is dropped from the positives.  Returns
    (loss, grads, scores (B, |V|)).
    """
    ids = np.asarray(ids)
    if ids.ndim == 1:
        ids = ids[None, :]
        label_sets = [label_sets]
    B, T = ids.shape
    n_vocab = len(model.vocab)
    y = np.zeros((B, n_vocab))
    for b, positives in enumerate(label_sets):
        for tid in positives:
            if tid != UNK_ID:
                y[b, tid] = 1.0

    fwd = EncoderForward(model.encoder, ids, mode=mode, rng=rng)
    hq = _intent_batch(fwd)
    if mode == "train" and model.head.dropout > 0.0:
        mask = dropout_mask(hq.shape, model.head.dropout, rng)
        hq_in = hq * mask
    else:
        mask = None
        hq_in = hq
    u = hq_in @ model.head.w1 + model.head.b1
    h = relu(u)
    logits = h @ model.head.w2 + model.head.b2
    scores = sigmoid(logits)
    loss = bce(scores, y)

    d_logits = bce_grad_wrt_logits(scores, y)       # (B, |V|)
    g_w2 = h.T @ d_logits
    g_b2 = d_logits.sum(axis=0)
    dh = d_logits @ model.head.w2.T
    du = dh * (u > 0)
    g_w1 = hq_in.T @ du
    g_b1 = du.sum(axis=0)
    d_hq = du @ model.head.w1.T
    if mask is not None:
        d_hq = d_hq * mask

    l = model.encoder.hidden_size
    d_hf = np.zeros_like(fwd.hf)
    d_hb = np.zeros_like(fwd.hb)
    d_hf[:, -1] = d_hq[:, :l]
    d_hb[:, 0] = d_hq[:, l:]
    grads = fwd.backward(d_hf, d_hb)
    grads["head.w1"] = g_w1
    grads["head.b1"] = g_b1
    grads["head.w2"] = g_w2
    grads["head.b2"] = g_b2
    return loss, grads, scores


def predict_scores(model, query):
    """Score every vocabulary term for a Query or id sequence."""
    ids = np.asarray(query.terms if hasattr(query, "terms") else query)
    fwd = EncoderForward(model.encoder, ids[None, :], mode="eval")
    hq = _intent_batch(fwd)
    h = relu(hq @ model.head.w1 + model.head.b1)
    return sigmoid(h @ model.head.w2 + model.head.b2)[0]


def top_k_terms(scores, vocab, k, exclude_stopwords=False):
    """Top-k (term, score) by score, ties broken by ascending term id.

    The unknown term is never returned; `exclude_stopwords` additionally
    drops stop words (a display-time option, not used in metrics paths,
    which do their own filtering).
    """
    n = scores.shape[0]
    if k > n - 1:
        raise ValueError(f"k={k} exceeds vocabulary size minus UNK ({n - 1})")
    order = np.lexsort((np.arange(n), -scores))
    out = []
    for tid in order:
        if tid == UNK_ID:
            continue
        term = vocab.term(int(tid))
        if exclude_stopwords and vocab.is_stopword(term):
            continue
        out.append((term, float(scores[tid])))
        if len(out) == k:
            break
    return out


def predict_refinements(model, query, k, exclude_stopwords=False):
    """Top-k refinement terms with scores for a Query or id sequence."""
    scores = predict_scores(model, query)
    return top_k_terms(scores, model.vocab, k, exclude_stopwords)


def term_ranking(model, raw_query, k=20):
    q = tokenize(raw_query, "frozen", model.vocab)
    return [t for t, _ in predict_refinements(model, q, k)]


def build_examples(pairs, vocab, mode):
    """Tokenized (q ids, positive ids, truth strings) rows per pair."""
    rows = []
    for p in pairs:
        q = tokenize(p.q, mode, vocab)
        rq = tokenize(p.rq, mode, vocab)
        positives = frozenset(t for t in rq.terms if t != UNK_ID)
        rows.append((q.terms, positives, term_set(p.rq)))
    return rows


def validation_ap(model, examples, k=30):
    """AP@nnz of top-k predictions against reformulated-query terms."""
    k = min(k, len(model.vocab) - 1)
    instances = []
    for ids, _, truth in examples:
        ranked = [t for t, _ in predict_refinements(model, ids, k)]
        instances.append((ranked, truth))
    try:
        return metrics.precision_summary(instances).ap_at_nnz
    except ValueError:
        return 0.0


def train_cqr(train_pairs, val_pairs, config, seed=None, vocab=None, log=None):
    """Train a CQR model; returns the best-validation-epoch snapshot."""
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
    model = init_cqr(config, vocab, rng)
    params = model.tensors()
    lengths = [len(r[0]) for r in train_rows]

    def batch_loss(indices):
        ids = np.array([train_rows[i][0] for i in indices])
        labels = [train_rows[i][1] for i in indices]
        loss, grads, _ = cqr_loss(model, ids, labels, mode="train", rng=rng)
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
