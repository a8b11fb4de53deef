"""Non-contextual baselines for term weighting and query refinement.

FTW estimates one global weight per term: the fraction of training
pairs containing the term in which it was retained in the
reformulation.  FQR scores a candidate refinement term by summing, over
the distinct terms of the query, the conditional frequency with which
the candidate appeared in reformulations of queries containing that
term.  Both are pure counting; `test_baselines.py` pins them to an
independent brute-force oracle exactly.

TF-IDF treats the training queries as the document collection; the
smoothed variant used is tf * (ln((N + 1) / (df + 1)) + 1).

VPCG & VG propagates vectors over the query-product click graph,
derives n-gram (uni- and bi-gram) vectors from the query vectors, and
fits one scalar weight per n-gram by SGD so that a weighted sum of
n-gram vectors approximates each query vector.  The unigram weights
double as global term weights.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .text import split_terms, term_set

FTW_UNSEEN_WEIGHT = 0.5


@dataclass
class FtwModel:
    occurred: dict = field(default_factory=Counter)  # term -> pairs containing it
    retained: dict = field(default_factory=Counter)  # term -> pairs retaining it

    def weight(self, term):
        occ = self.occurred.get(term, 0)
        if occ == 0:
            return FTW_UNSEEN_WEIGHT
        return self.retained.get(term, 0) / occ

    def to_dict(self):
        return {"occurred": dict(self.occurred), "retained": dict(self.retained)}

    @classmethod
    def from_dict(cls, d):
        return cls(occurred=Counter(d["occurred"]), retained=Counter(d["retained"]))


def ftw_fit(pairs):
    """Count, per term, the pairs it occurs in and is retained in."""
    model = FtwModel()
    for p in pairs:
        q_terms = term_set(p.q)
        rq_terms = term_set(p.rq)
        for t in q_terms:
            model.occurred[t] += 1
            if t in rq_terms:
                model.retained[t] += 1
    return model


def ftw_weight(model, term):
    return model.weight(term)


@dataclass
class FqrModel:
    # cooccur[qt][ri]: pairs with qt in the query and ri in the reformulation
    cooccur: dict = field(default_factory=dict)
    occurred: dict = field(default_factory=Counter)

    def to_dict(self):
        return {
            "cooccur": {qt: dict(row) for qt, row in self.cooccur.items()},
            "occurred": dict(self.occurred),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            cooccur={qt: Counter(row) for qt, row in d["cooccur"].items()},
            occurred=Counter(d["occurred"]),
        )


def fqr_fit(pairs):
    model = FqrModel()
    for p in pairs:
        q_terms = term_set(p.q)
        rq_terms = term_set(p.rq)
        for qt in q_terms:
            model.occurred[qt] += 1
            row = model.cooccur.setdefault(qt, Counter())
            for ri in rq_terms:
                row[ri] += 1
    return model


def fqr_scores(model, raw_query):
    """Candidate-term scores: sum of conditional retention frequencies
    over the distinct query terms (repeated terms count once)."""
    scores = Counter()
    for qt in term_set(raw_query):
        occ = model.occurred.get(qt, 0)
        if occ == 0:
            continue
        for ri, count in model.cooccur[qt].items():
            scores[ri] += count / occ
    return dict(scores)


def fqr_ranking(model, raw_query, k=None):
    """Terms ranked by FQR score, ties broken lexicographically."""
    scores = fqr_scores(model, raw_query)
    ranked = sorted(scores, key=lambda t: (-scores[t], t))
    return ranked if k is None else ranked[:k]


@dataclass
class TfidfModel:
    n_docs: int = 0
    df: dict = field(default_factory=Counter)

    def idf(self, term):
        return np.log((self.n_docs + 1) / (self.df.get(term, 0) + 1)) + 1.0

    def to_dict(self):
        return {"n_docs": self.n_docs, "df": dict(self.df)}

    @classmethod
    def from_dict(cls, d):
        return cls(n_docs=d["n_docs"], df=Counter(d["df"]))


def tfidf_fit(pairs):
    """Document frequencies over the training queries (the q side)."""
    model = TfidfModel()
    for p in pairs:
        model.n_docs += 1
        for t in term_set(p.q):
            model.df[t] += 1
    return model


def tfidf_weight(model, term, raw_query):
    tf = split_terms(raw_query).count(term)
    return tf * float(model.idf(term))


# --- VPCG & VG -----------------------------------------------------------

@dataclass
class VpcgModel:
    dim: int
    query_vectors: dict = field(default_factory=dict)    # query string -> vector
    product_vectors: dict = field(default_factory=dict)  # product id -> vector
    ngram_vectors: dict = field(default_factory=dict)    # n-gram -> vector
    ngram_weights: dict = field(default_factory=dict)    # n-gram -> scalar
    dropped: list = field(default_factory=list)          # isolated nodes

    def to_dict(self):
        return {
            "dim": self.dim,
            "query_vectors": {k: v.tolist() for k, v in self.query_vectors.items()},
            "product_vectors": {k: v.tolist() for k, v in self.product_vectors.items()},
            "ngram_vectors": {k: v.tolist() for k, v in self.ngram_vectors.items()},
            "ngram_weights": dict(self.ngram_weights),
            "dropped": list(self.dropped),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            dim=d["dim"],
            query_vectors={k: np.array(v) for k, v in d["query_vectors"].items()},
            product_vectors={k: np.array(v) for k, v in d["product_vectors"].items()},
            ngram_vectors={k: np.array(v) for k, v in d["ngram_vectors"].items()},
            ngram_weights=dict(d["ngram_weights"]),
            dropped=list(d["dropped"]),
        )


def query_ngrams(raw_query):
    """Unigrams and adjacent bigrams of a query string."""
    terms = split_terms(raw_query)
    return terms + [f"{a} {b}" for a, b in zip(terms, terms[1:])]


def _normalize(v):
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


def vpcg_fit(edges, dim=50, iters=50, seed=0, sgd_lr=0.001, sgd_epochs=30,
             val_fn=None, warn=None):
    """Fit query/product/n-gram vectors and per-n-gram weights.

    `edges` is an iterable of (query string, product id, click count).
    Propagation alternates click-weighted sums with L2 normalization,
    for up to `iters` sweeps or until `val_fn(model)` stops improving.
    Zero-count edges are dropped; nodes left without edges are recorded
    on the model and reported through `warn`.
    """
    by_query = {}
    by_product = {}
    seen_nodes = set()
    for q, pid, count in edges:
        seen_nodes.update([("q", q), ("p", pid)])
        if count <= 0:
            continue
        by_query.setdefault(q, Counter())[pid] += count
        by_product.setdefault(pid, Counter())[q] += count
    dropped = sorted(
        name for kind, name in seen_nodes
        if (kind == "q" and name not in by_query)
        or (kind == "p" and name not in by_product)
    )
    model = VpcgModel(dim=dim, dropped=dropped)
    if not by_query:
        raise ValueError("click graph has no positive-count edges")

    rng = np.random.default_rng(seed)
    queries = sorted(by_query)
    products = sorted(by_product)
    qv = {q: _normalize(rng.standard_normal(dim)) for q in queries}
    pv = {}

    best_score = float("-inf")
    best_state = None
    for _ in range(iters):
        pv = {
            p: _normalize(
                sum(c * qv[q] for q, c in sorted(by_product[p].items()))
            )
            for p in products
        }
        qv = {
            q: _normalize(
                sum(c * pv[p] for p, c in sorted(by_query[q].items()))
            )
            for q in queries
        }
        if val_fn is not None:
            model.query_vectors, model.product_vectors = qv, pv
            score = val_fn(model)
            if score <= best_score:
                qv, pv = best_state
                break
            best_score = score
            best_state = ({k: v.copy() for k, v in qv.items()},
                          {k: v.copy() for k, v in pv.items()})
    model.query_vectors = qv
    model.product_vectors = pv

    # n-gram vectors: click-weighted average of the containing queries
    query_clicks = {q: sum(by_query[q].values()) for q in queries}
    gram_sum = {}
    for q in queries:
        weight = query_clicks[q]
        for g in set(query_ngrams(q)):
            gram_sum.setdefault(g, np.zeros(dim))
            gram_sum[g] += weight * qv[q]
    model.ngram_vectors = {g: _normalize(v) for g, v in sorted(gram_sum.items())}

    # per-n-gram scalar weights by SGD on || v_q - sum w_g v_g ||^2
    weights = {g: 0.0 for g in model.ngram_vectors}
    index = list(range(len(queries)))
    for _ in range(sgd_epochs):
        rng.shuffle(index)
        for i in index:
            q = queries[i]
            grams = [g for g in query_ngrams(q) if g in model.ngram_vectors]
            if not grams:
                continue
            approx = sum(weights[g] * model.ngram_vectors[g] for g in grams)
            residual = qv[q] - approx
            for g in grams:
                weights[g] += 2.0 * sgd_lr * float(model.ngram_vectors[g] @ residual)
    model.ngram_weights = weights
    if warn and dropped:
        warn(f"dropped {len(dropped)} isolated click-graph nodes")
    return model


def vpcg_query_vector(model, raw_query):
    """Propagated vector when the query was in the graph, else the
    weighted n-gram composition (OOV n-grams contribute nothing)."""
    if raw_query in model.query_vectors:
        return model.query_vectors[raw_query]
    vec = np.zeros(model.dim)
    for g in query_ngrams(raw_query):
        if g in model.ngram_vectors:
            vec += model.ngram_weights[g] * model.ngram_vectors[g]
    return vec


def vpcg_score(model, raw_query, product_id):
    pv = model.product_vectors.get(product_id)
    if pv is None:
        return 0.0
    return float(vpcg_query_vector(model, raw_query) @ pv)


def vpcg_term_weight(model, term):
    """Global term weight: the unigram's regression weight (0 if unseen)."""
    return float(model.ngram_weights.get(term, 0.0))


def vpcg_rank(model, raw_query, k):
    """Products ranked by dot product with the query vector."""
    qvec = vpcg_query_vector(model, raw_query)
    scored = [(pid, float(qvec @ vec)) for pid, vec in model.product_vectors.items()]
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[:k]
