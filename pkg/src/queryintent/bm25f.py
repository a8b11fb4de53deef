"""Multi-field BM25F index over a product catalog, with per-term boosts.

Scoring follows the field-weighted tf formulation:

    wtf(t, doc) = sum_f  weight_f * tf_f / (1 - b_f + b_f * len_f / avglen_f)
    score(t, doc) = idf(t) * wtf / (k1 + wtf)
    idf(t) = ln((N - df + 0.5) / (df + 0.5) + 1)

A query scores a document as the sum of its per-position term scores,
each optionally scaled by a term weight; uniform positive weights leave
the ranking identical to the unboosted one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .text import split_terms

INDEX_FORMAT_VERSION = 1

DEFAULT_FIELD_WEIGHTS = {"title": 2.0, "description": 1.0}
DEFAULT_FIELD_B = {"title": 0.75, "description": 0.75}
DEFAULT_K1 = 1.2


class CatalogError(ValueError):
    """Raised on malformed catalogs (duplicate ids, empty documents)."""


@dataclass(frozen=True)
class CatalogDocument:
    product: str
    fields: dict  # field name -> list of terms

    @classmethod
    def from_text(cls, product, title="", description=""):
        return cls(product=product, fields={
            "title": split_terms(title),
            "description": split_terms(description),
        })


def read_catalog(path):
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                docs.append(CatalogDocument.from_text(
                    d["product"], d.get("title", ""), d.get("description", "")))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CatalogError(f"{path}:{lineno}: {exc}") from exc
    return docs


def write_catalog(rows, path):
    """rows: iterable of {"product","title","description"} dicts."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


@dataclass
class Bm25fIndex:
    k1: float
    field_weights: dict
    field_b: dict
    n_docs: int = 0
    df: dict = field(default_factory=dict)        # term -> docs containing it
    postings: dict = field(default_factory=dict)  # term -> field -> {pid: tf}
    doc_len: dict = field(default_factory=dict)   # field -> {pid: length}
    avg_len: dict = field(default_factory=dict)   # field -> mean length

    def idf(self, term):
        d = self.df.get(term, 0)
        return float(np.log((self.n_docs - d + 0.5) / (d + 0.5) + 1.0))

    def to_dict(self):
        return {
            "format_version": INDEX_FORMAT_VERSION,
            "k1": self.k1,
            "field_weights": self.field_weights,
            "field_b": self.field_b,
            "n_docs": self.n_docs,
            "df": self.df,
            "postings": self.postings,
            "doc_len": self.doc_len,
            "avg_len": self.avg_len,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format_version") != INDEX_FORMAT_VERSION:
            raise ValueError(
                f"index format_version {d.get('format_version')!r} unsupported"
            )
        return cls(k1=d["k1"], field_weights=d["field_weights"],
                   field_b=d["field_b"], n_docs=d["n_docs"], df=d["df"],
                   postings=d["postings"], doc_len=d["doc_len"],
                   avg_len=d["avg_len"])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def index_build(docs, k1=DEFAULT_K1, field_weights=None, field_b=None):
    """Build the inverted index; rejects duplicate product ids."""
    docs = list(docs)
    if not docs:
        raise CatalogError("empty catalog")
    field_weights = dict(field_weights or DEFAULT_FIELD_WEIGHTS)
    field_b = dict(field_b or DEFAULT_FIELD_B)
    index = Bm25fIndex(k1=k1, field_weights=field_weights, field_b=field_b)
    seen = set()
    for doc in docs:
        if doc.product in seen:
            raise CatalogError(f"duplicate product id {doc.product!r}")
        seen.add(doc.product)
        if not any(doc.fields.values()):
            raise CatalogError(f"product {doc.product!r} has no text in any field")
        doc_terms = set()
        for fname, terms in doc.fields.items():
            if fname not in field_weights:
                raise CatalogError(f"unknown field {fname!r}")
            index.doc_len.setdefault(fname, {})[doc.product] = len(terms)
            for t in terms:
                doc_terms.add(t)
                by_field = index.postings.setdefault(t, {})
                tf = by_field.setdefault(fname, {})
                tf[doc.product] = tf.get(doc.product, 0) + 1
        for t in doc_terms:
            index.df[t] = index.df.get(t, 0) + 1
    index.n_docs = len(docs)
    for fname, lens in index.doc_len.items():
        total = sum(lens.values())
        if total > 0:
            index.avg_len[fname] = total / len(docs)
    return index


def bm25f_term_score(term, product_id, index):
    """BM25F score contribution of one term for one document."""
    by_field = index.postings.get(term)
    if not by_field:
        return 0.0
    wtf = 0.0
    for fname, tfs in by_field.items():
        tf = tfs.get(product_id, 0)
        if tf == 0:
            continue
        b = index.field_b[fname]
        length = index.doc_len[fname].get(product_id, 0)
        norm = 1.0 - b + b * length / index.avg_len[fname]
        wtf += index.field_weights[fname] * tf / norm
    if wtf == 0.0:
        return 0.0
    return index.idf(term) * wtf / (index.k1 + wtf)


def rank(raw_query, index, weights=None, k=100):
    """Top-k products by (optionally boosted) BM25F score.

    `weights` gives one multiplier per query position; omitted weights
    mean 1.  Every position contributes, so a duplicated term counts
    once per occurrence.  Ties break by ascending product id.
    """
    terms = split_terms(raw_query)
    if not terms:
        raise ValueError(f"query {raw_query!r} has no terms")
    if weights is not None and len(weights) != len(terms):
        raise ValueError(
            f"need one weight per query position: {len(weights)} weights "
            f"for {len(terms)} terms"
        )
    scores = {}
    for pos, term in enumerate(terms):
        w = 1.0 if weights is None else float(weights[pos])
        by_field = index.postings.get(term)
        if not by_field:
            continue
        candidates = set()
        for tfs in by_field.values():
            candidates.update(tfs)
        for pid in candidates:
            scores[pid] = scores.get(pid, 0.0) + w * bm25f_term_score(
                term, pid, index)
    ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    return ranked[:k]
