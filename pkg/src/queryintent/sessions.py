"""Session logs, reformulation-pair mining and dataset splits.

A session log is a stream of query events.  Pair extraction walks each
session and keeps (q, R(q)) pairs that pass all six filter rules:

  1. R(q) follows q in the same session with at most `max_intermediate`
     other queries in between;
  2. R(q) has an add-to-cart event;
  3. q is rare (fewer than `rare_max_count` occurrences over the stats
     window and click-through rate below `rare_max_ctr`);
  4. the term sets of q and R(q) have Jaccard similarity of at least
     `min_jaccard`;
  5. every term of q occurs more than `min_term_freq` times over the
     whole event stream (filters out misspellings);
  6. the term set of q is not a proper subset of R(q)'s and q has at
     least `min_query_len` terms (filters general-to-specific moves).
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .text import TokenizeError, Vocabulary, jaccard, split_terms, term_set, tokenize

ENGAGEMENTS = ("none", "click", "atc", "order")


class SessionFormatError(ValueError):
    """Raised on schema violations in session/pair files."""


@dataclass(frozen=True)
class SessionEvent:
    session: str
    ts: int
    query: str
    engagement: str = "none"
    product: str | None = None

    def validate(self):
        if self.engagement not in ENGAGEMENTS:
            raise SessionFormatError(f"bad engagement {self.engagement!r}")
        if (self.product is not None) != (self.engagement != "none"):
            raise SessionFormatError(
                "product id must be present exactly when engagement != none"
            )


@dataclass(frozen=True)
class ReformulationPair:
    q: str
    rq: str
    product: str | None = None


@dataclass
class QueryStats:
    """Per-normalized-query occurrence count and click-through rate.

    Keys are the tokenized term sequence joined by single spaces.
    Queries absent from the table are treated as never-seen (count 0,
    CTR 0), i.e. rare.
    """

    counts: dict = field(default_factory=dict)
    ctrs: dict = field(default_factory=dict)

    def set(self, normalized_query, count, ctr):
        if count < 0:
            raise ValueError("occurrence count must be non-negative")
        if not 0.0 <= ctr <= 1.0:
            raise ValueError("CTR must lie in [0, 1]")
        self.counts[normalized_query] = int(count)
        self.ctrs[normalized_query] = float(ctr)

    def count(self, normalized_query):
        return self.counts.get(normalized_query, 0)

    def ctr(self, normalized_query):
        return self.ctrs.get(normalized_query, 0.0)

    def to_dict(self):
        return {
            "queries": [
                {"query": q, "count": self.counts[q], "ctr": self.ctrs[q]}
                for q in sorted(self.counts)
            ]
        }

    @classmethod
    def from_dict(cls, d):
        stats = cls()
        for row in d["queries"]:
            stats.set(row["query"], row["count"], row["ctr"])
        return stats


@dataclass(frozen=True)
class FilterConfig:
    max_intermediate: int = 2
    min_jaccard: float = 0.2
    rare_max_count: int = 300
    rare_max_ctr: float = 0.05
    min_term_freq: int = 100
    min_query_len: int = 3

    _KEYS = (
        "max_intermediate",
        "min_jaccard",
        "rare_max_count",
        "rare_max_ctr",
        "min_term_freq",
        "min_query_len",
    )

    @classmethod
    def load(cls, path):
        """Parse a plain `key = value` config file."""
        values = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise SessionFormatError(f"{path}:{lineno}: expected key = value")
                key, _, value = line.partition("=")
                key = key.strip()
                if key not in cls._KEYS:
                    raise SessionFormatError(f"{path}:{lineno}: unknown key {key!r}")
                caster = float if key in ("min_jaccard", "rare_max_ctr") else int
                values[key] = caster(value.strip())
        return cls(**values)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for key in self._KEYS:
                fh.write(f"{key} = {getattr(self, key)}\n")


def normalized(raw):
    """Canonical stats key: tokenized terms joined by single spaces."""
    return " ".join(split_terms(raw))


@dataclass
class ExtractResult:
    pairs: list
    vocabulary: Vocabulary
    skipped_events: int = 0
    rejected: Counter = field(default_factory=Counter)


def _iter_grouped_sessions(events):
    """Group events by session id, stably timestamp-ordered within each."""
    by_session = {}
    for ev in events:
        by_session.setdefault(ev.session, []).append(ev)
    for sid in sorted(by_session):
        yield sid, sorted(by_session[sid], key=lambda ev: ev.ts)


def pair_passes_filters(a_raw, b_raw, b_engagement, n_intermediate, stats, term_freq, cfg):
    """Re-checkable predicate: does (a, b) satisfy all six filter rules?

    `term_freq` maps term string -> occurrence count over the event
    stream.  Returns (ok, reason) where reason names the first failed
    rule.
    """
    if n_intermediate > cfg.max_intermediate:
        return False, "intermediate"
    if b_engagement != "atc":
        return False, "no_atc"
    a_key = normalized(a_raw)
    if stats.count(a_key) >= cfg.rare_max_count or stats.ctr(a_key) >= cfg.rare_max_ctr:
        return False, "not_rare"
    a_terms = term_set(a_raw)
    b_terms = term_set(b_raw)
    if not a_terms or not b_terms:
        return False, "empty"
    if jaccard(a_terms, b_terms) < cfg.min_jaccard:
        return False, "jaccard"
    if any(term_freq.get(t, 0) <= cfg.min_term_freq for t in a_terms):
        return False, "term_freq"
    if a_terms < b_terms:
        return False, "proper_subset"
    if len(split_terms(a_raw)) < cfg.min_query_len:
        return False, "too_short"
    return True, None


def extract_pairs(events, stats, cfg):
    """Mine (q, R(q)) pairs from a session stream.

    Two passes: the first counts term frequencies over every query event
    and builds the vocabulary; the second applies the six filter rules
    to every in-window (a, b) combination of each session.  Sessions are
    processed in sorted session-id order, so the output is canonical
    regardless of input event order.  Malformed events are counted and
    skipped.
    """
    good, skipped = [], 0
    for ev in events:
        try:
            ev.validate()
            if not term_set(ev.query):
                raise SessionFormatError("empty query")
            good.append(ev)
        except (SessionFormatError, AttributeError, TypeError):
            skipped += 1

    vocab = Vocabulary()
    term_freq = Counter()
    for ev in good:
        for t in split_terms(ev.query):
            term_freq[t] += 1
            vocab.add(t)

    result = ExtractResult(pairs=[], vocabulary=vocab, skipped_events=skipped)
    for _, evs in _iter_grouped_sessions(good):
        for i, a in enumerate(evs):
            for j in range(i + 1, min(i + 2 + cfg.max_intermediate, len(evs))):
                b = evs[j]
                ok, reason = pair_passes_filters(
                    a.query, b.query, b.engagement, j - i - 1, stats, term_freq, cfg
                )
                if ok:
                    result.pairs.append(
                        ReformulationPair(q=a.query, rq=b.query, product=b.product)
                    )
                else:
                    result.rejected[reason] += 1
    return result


def split_dataset(pairs, seed, fractions=(0.8, 0.15, 0.05)):
    """Deterministic disjoint (train, test, validation) split."""
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must be three values summing to 1")
    n = len(pairs)
    if n < 3:
        raise ValueError(f"need at least 3 pairs to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_test = int(round(fractions[1] * n))
    n_train = min(n_train, n - 2)
    n_test = min(n_test, n - n_train - 1)
    train = [pairs[i] for i in order[:n_train]]
    test = [pairs[i] for i in order[n_train : n_train + n_test]]
    val = [pairs[i] for i in order[n_train + n_test :]]
    return train, test, val


# --- JSON-lines formats -------------------------------------------------

def read_events(path):
    """Read a session log: one JSON event per line."""
    events = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                events.append(
                    SessionEvent(
                        session=d["session"],
                        ts=int(d["ts"]),
                        query=d["query"],
                        engagement=d.get("engagement", "none"),
                        product=d.get("product"),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise SessionFormatError(f"{path}:{lineno}: {exc}") from exc
    return events


def write_events(events, path):
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            d = {"session": ev.session, "ts": ev.ts, "query": ev.query,
                 "engagement": ev.engagement}
            if ev.product is not None:
                d["product"] = ev.product
            fh.write(json.dumps(d) + "\n")


def read_pairs(path):
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                pairs.append(
                    ReformulationPair(q=d["q"], rq=d["rq"], product=d.get("product"))
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise SessionFormatError(f"{path}:{lineno}: {exc}") from exc
    return pairs


def write_pairs(pairs, path):
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            d = {"q": p.q, "rq": p.rq}
            if p.product is not None:
                d["product"] = p.product
            fh.write(json.dumps(d) + "\n")


def read_stats(path):
    with open(path, encoding="utf-8") as fh:
        return QueryStats.from_dict(json.load(fh))


def write_stats(stats, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(stats.to_dict(), fh, indent=1)
        fh.write("\n")


def build_training_queries(pairs, vocab=None):
    """Tokenize pair queries, building the vocabulary in a first pass.

    Returns (tokenized list of (Query, Query, product), vocabulary).
    When `vocab` is given it is frozen and unseen terms map to UNK.
    """
    mode = "frozen" if vocab is not None else "build"
    if vocab is None:
        vocab = Vocabulary()
    out = []
    for p in pairs:
        try:
            q = tokenize(p.q, mode, vocab)
            rq = tokenize(p.rq, mode, vocab)
        except TokenizeError:
            continue
        out.append((q, rq, p.product))
    return out, vocab
