"""Word embeddings and the bidirectional GRU intent encoder.

The encoder runs an independent multi-layer GRU in each direction over
the query's word vectors.  The forward state at position t summarizes
terms 1..t, the backward state summarizes terms t..|q|; the boundary
states (before position 1, after position |q|) are exactly zero, which
the term-weighting features rely on.

Cell convention, fixed and tested here:

    z = sigmoid(x W_z + h U_z + b_z)
    r = sigmoid(x W_r + h U_r + b_r)
    c = tanh(x W_h + (r * h) U_h + b_h)
    h' = (1 - z) * h + z * c

Gradients are hand-derived; `test_encoder.py` verifies them against
central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import ShapeError, dropout_mask, sigmoid, tanh


@dataclass
class GruLayerParams:
    """One GRU layer: update/reset/candidate input, recurrent and bias."""

    wz: np.ndarray
    uz: np.ndarray
    bz: np.ndarray
    wr: np.ndarray
    ur: np.ndarray
    br: np.ndarray
    wh: np.ndarray
    uh: np.ndarray
    bh: np.ndarray

    @property
    def input_size(self):
        return self.wz.shape[0]

    @property
    def hidden_size(self):
        return self.wz.shape[1]

    def tensors(self, prefix):
        return {
            f"{prefix}.wz": self.wz, f"{prefix}.uz": self.uz, f"{prefix}.bz": self.bz,
            f"{prefix}.wr": self.wr, f"{prefix}.ur": self.ur, f"{prefix}.br": self.br,
            f"{prefix}.wh": self.wh, f"{prefix}.uh": self.uh, f"{prefix}.bh": self.bh,
        }


@dataclass
class EncoderParams:
    """Embedding table plus forward and backward GRU stacks."""

    embedding: np.ndarray  # (|V|, d)
    fwd: list  # GruLayerParams, depth >= 1
    bwd: list
    dropout: float = 0.0  # between stacked layers, train mode only

    @property
    def dim(self):
        return self.embedding.shape[1]

    @property
    def hidden_size(self):
        return self.fwd[0].hidden_size

    def tensors(self):
        out = {"embedding": self.embedding}
        for k, layer in enumerate(self.fwd):
            out.update(layer.tensors(f"fwd{k}"))
        for k, layer in enumerate(self.bwd):
            out.update(layer.tensors(f"bwd{k}"))
        return out


@dataclass
class EncodedQuery:
    """Top-layer hidden states of a single encoded query.

    `hf[t]` and `hb[t]` are the forward/backward states at position
    t+1 (0-based arrays); the zero boundary states are implicit.
    """

    ids: np.ndarray  # (|q|,) term ids
    hf: np.ndarray  # (|q|, l)
    hb: np.ndarray  # (|q|, l)

    def __len__(self):
        return self.hf.shape[0]


def _glorot(rng, shape):
    bound = np.sqrt(6.0 / sum(shape))
    return rng.uniform(-bound, bound, size=shape)


def _init_layer(rng, d_in, l):
    return GruLayerParams(
        wz=_glorot(rng, (d_in, l)), uz=_glorot(rng, (l, l)), bz=np.zeros(l),
        wr=_glorot(rng, (d_in, l)), ur=_glorot(rng, (l, l)), br=np.zeros(l),
        wh=_glorot(rng, (d_in, l)), uh=_glorot(rng, (l, l)), bh=np.zeros(l),
    )


def init_encoder(vocab_size, dim, hidden, layers, dropout, rng):
    """Fresh encoder parameters; embeddings uniform in [-0.05, 0.05]."""
    emb = rng.uniform(-0.05, 0.05, size=(vocab_size, dim))
    fwd = [_init_layer(rng, dim if k == 0 else hidden, hidden) for k in range(layers)]
    bwd = [_init_layer(rng, dim if k == 0 else hidden, hidden) for k in range(layers)]
    return EncoderParams(embedding=emb, fwd=fwd, bwd=bwd, dropout=dropout)


def load_embedding_file(path, vocab, dim):
    """Overlay pre-trained word vectors: `term f1 .. fd` per line.

    Unknown terms are skipped; returns the number of rows loaded.
    """
    table = np.zeros((len(vocab), dim))
    seen = np.zeros(len(vocab), dtype=bool)
    loaded = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            term, values = parts[0], parts[1:]
            if len(values) != dim:
                raise ValueError(f"{path}:{lineno}: expected {dim} floats")
            if term in vocab:
                tid = vocab.id(term)
                table[tid] = [float(v) for v in values]
                seen[tid] = True
                loaded += 1
    return table, seen, loaded


def gru_cell(h_prev, x, params):
    """Single GRU step for one vector; the reference cell used in tests."""
    h_prev = np.asarray(h_prev, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.input_size,) or h_prev.shape != (params.hidden_size,):
        raise ShapeError(
            f"gru_cell expects x {(params.input_size,)} and h {(params.hidden_size,)}, "
            f"got {x.shape} and {h_prev.shape}"
        )
    z = sigmoid(x @ params.wz + h_prev @ params.uz + params.bz)
    r = sigmoid(x @ params.wr + h_prev @ params.ur + params.br)
    c = tanh(x @ params.wh + (r * h_prev) @ params.uh + params.bh)
    return (1.0 - z) * h_prev + z * c


def _run_layer(inputs, p, times):
    """Run one GRU layer over `inputs` (B, T, d_in) visiting `times` in order."""
    B, T, _ = inputs.shape
    l = p.hidden_size
    H = np.zeros((B, T, l))
    Z = np.zeros((B, T, l))
    R = np.zeros((B, T, l))
    C = np.zeros((B, T, l))
    h = np.zeros((B, l))
    for t in times:
        x = inputs[:, t]
        z = sigmoid(x @ p.wz + h @ p.uz + p.bz)
        r = sigmoid(x @ p.wr + h @ p.ur + p.br)
        c = tanh(x @ p.wh + (r * h) @ p.uh + p.bh)
        h = (1.0 - z) * h + z * c
        Z[:, t], R[:, t], C[:, t], H[:, t] = z, r, c, h
    return H, Z, R, C


def _run_layer_backward(inputs, p, times, H, Z, R, C, d_out):
    """Backprop one GRU layer; returns (d_inputs, grads dict by field name)."""
    B, T, _ = inputs.shape
    l = p.hidden_size
    g = {name: np.zeros_like(arr) for name, arr in vars(p).items()}
    d_in = np.zeros_like(inputs)
    carry = np.zeros((B, l))
    for i in reversed(range(len(times))):
        t = times[i]
        h_prev = H[:, times[i - 1]] if i > 0 else np.zeros((B, l))
        x, z, r, c = inputs[:, t], Z[:, t], R[:, t], C[:, t]
        dh = d_out[:, t] + carry
        dz = dh * (c - h_prev)
        dc = dh * z
        dhp = dh * (1.0 - z)
        dac = dc * (1.0 - c * c)
        g["wh"] += x.T @ dac
        g["uh"] += (r * h_prev).T @ dac
        g["bh"] += dac.sum(axis=0)
        dx = dac @ p.wh.T
        drh = dac @ p.uh.T
        dr = drh * h_prev
        dhp += drh * r
        dar = dr * r * (1.0 - r)
        g["wr"] += x.T @ dar
        g["ur"] += h_prev.T @ dar
        g["br"] += dar.sum(axis=0)
        dx += dar @ p.wr.T
        dhp += dar @ p.ur.T
        daz = dz * z * (1.0 - z)
        g["wz"] += x.T @ daz
        g["uz"] += h_prev.T @ daz
        g["bz"] += daz.sum(axis=0)
        dx += daz @ p.wz.T
        dhp += daz @ p.uz.T
        d_in[:, t] = dx
        carry = dhp
    return d_in, g


class EncoderForward:
    """Cached forward pass of the encoder over a batch of equal-length
    queries, retaining everything the backward pass needs."""

    def __init__(self, params, ids, mode="eval", rng=None):
        ids = np.asarray(ids)
        if ids.ndim == 1:
            ids = ids[None, :]
        if ids.size == 0:
            raise ValueError("cannot encode an empty query batch")
        B, T = ids.shape
        self.params = params
        self.ids = ids
        self.mode = mode
        self.x = params.embedding[ids]  # (B, T, d)
        self.layers = {"f": [], "b": []}
        self.masks = {"f": [], "b": []}
        train = mode == "train" and params.dropout > 0.0
        for key, stack, times in (
            ("f", params.fwd, list(range(T))),
            ("b", params.bwd, list(range(T - 1, -1, -1))),
        ):
            seq = self.x
            for k, layer in enumerate(stack):
                if k > 0:
                    mask = (
                        dropout_mask(seq.shape, params.dropout, rng)
                        if train
                        else np.ones(seq.shape)
                    )
                    self.masks[key].append(mask)
                    seq = seq * mask
                H, Z, R, C = _run_layer(seq, layer, times)
                self.layers[key].append({"in": seq, "H": H, "Z": Z, "R": R, "C": C,
                                         "times": times})
                seq = H
        self.hf = self.layers["f"][-1]["H"]  # (B, T, l)
        self.hb = self.layers["b"][-1]["H"]

    def backward(self, d_hf, d_hb, d_x_extra=None):
        """Backprop gradients of the top-layer states (and optionally an
        extra gradient on the embedded inputs) down to all parameters.

        Returns a dict keyed like EncoderParams.tensors().
        """
        grads = {name: np.zeros_like(t) for name, t in self.params.tensors().items()}
        d_x_total = np.zeros_like(self.x)
        if d_x_extra is not None:
            d_x_total += d_x_extra
        for key, stack, d_top in (("f", self.params.fwd, d_hf),
                                  ("b", self.params.bwd, d_hb)):
            prefix = "fwd" if key == "f" else "bwd"
            d_seq = d_top
            for k in range(len(stack) - 1, -1, -1):
                cache = self.layers[key][k]
                d_in, layer_grads = _run_layer_backward(
                    cache["in"], stack[k], cache["times"],
                    cache["H"], cache["Z"], cache["R"], cache["C"], d_seq,
                )
                for field_name, arr in layer_grads.items():
                    grads[f"{prefix}{k}.{field_name}"] += arr
                if k > 0:
                    d_seq = d_in * self.masks[key][k - 1]
                else:
                    d_x_total += d_in
        np.add.at(grads["embedding"], self.ids, d_x_total)
        return grads


def encode(query_ids, params, mode="eval", rng=None):
    """Encode one query (sequence of term ids) into per-position states."""
    ids = np.asarray(query_ids)
    if ids.ndim != 1 or ids.size == 0:
        raise ValueError("query must be a non-empty 1-D sequence of term ids")
    fwd = EncoderForward(params, ids[None, :], mode=mode, rng=rng)
    return EncodedQuery(ids=ids, hf=fwd.hf[0], hb=fwd.hb[0])


def intent_representation(enc):
    """Whole-query intent vector: [forward last state, backward first state]."""
    if len(enc) == 0:
        raise ValueError("encoded query is empty")
    return np.concatenate([enc.hf[-1], enc.hb[0]])
