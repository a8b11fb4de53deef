"""Tokenization, vocabulary and term-set utilities.

Queries are short product-search strings.  Tokenization is deliberately
simple: lowercase, split on whitespace, strip punctuation from token
edges but keep internal hyphens and digits, so "3-piece" survives as a
single term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

UNK_ID = 0
UNK_TERM = "<unk>"

# Small English function-word list.  Used when excluding stop words from
# precision metrics and (optionally) from displayed refinement terms.
DEFAULT_STOPWORDS = frozenset(
    ["for", "with", "on", "the", "a", "an", "of", "in", "to", "and"]
)

_EDGE_PUNCT = "!\"#$%&'()*+,./:;<=>?@[\\]^_`{|}~-"


class TokenizeError(ValueError):
    """Raised when a string produces no terms."""


class VocabularyError(KeyError):
    """Raised on invalid term/id lookups."""


def split_terms(raw):
    """Term strings of `raw`: lowercased, edge punctuation stripped."""
    terms = []
    for tok in raw.lower().split():
        tok = tok.strip(_EDGE_PUNCT)
        if tok:
            terms.append(tok)
    return terms


@dataclass
class Vocabulary:
    """Dense bidirectional term <-> id map with corpus frequencies.

    Id 0 is reserved for the unknown term; frozen-mode tokenization maps
    out-of-vocabulary terms to it.
    """

    _terms: list = field(default_factory=lambda: [UNK_TERM])
    _ids: dict = field(default_factory=lambda: {UNK_TERM: UNK_ID})
    frequencies: list = field(default_factory=lambda: [0])
    stopwords: set = field(default_factory=lambda: set(DEFAULT_STOPWORDS))

    def __len__(self):
        return len(self._terms)

    def __contains__(self, term):
        return term in self._ids

    def id(self, term):
        try:
            return self._ids[term]
        except KeyError:
            raise VocabularyError(f"unknown term {term!r}")

    def term(self, term_id):
        if not 0 <= term_id < len(self._terms):
            raise VocabularyError(f"term id {term_id} out of range 0..{len(self) - 1}")
        return self._terms[term_id]

    def id_or_unk(self, term):
        return self._ids.get(term, UNK_ID)

    def add(self, term, count=1):
        """Intern `term`, bumping its corpus frequency by `count`."""
        tid = self._ids.get(term)
        if tid is None:
            tid = len(self._terms)
            self._ids[term] = tid
            self._terms.append(term)
            self.frequencies.append(0)
        self.frequencies[tid] += count
        return tid

    def frequency(self, term):
        tid = self._ids.get(term)
        return 0 if tid is None else self.frequencies[tid]

    def is_stopword(self, term):
        return term in self.stopwords

    def terms(self):
        return list(self._terms)

    def to_dict(self):
        return {
            "terms": list(self._terms),
            "frequencies": list(self.frequencies),
            "stopwords": sorted(self.stopwords),
        }

    @classmethod
    def from_dict(cls, d):
        terms = list(d["terms"])
        if not terms or terms[0] != UNK_TERM:
            raise ValueError("vocabulary must reserve id 0 for the unknown term")
        vocab = cls(
            _terms=terms,
            _ids={t: i for i, t in enumerate(terms)},
            frequencies=list(d["frequencies"]),
            stopwords=set(d["stopwords"]),
        )
        if len(vocab.frequencies) != len(terms):
            raise ValueError("frequency list length does not match term list")
        return vocab


@dataclass(frozen=True)
class Query:
    """A tokenized query: ordered term ids plus the original string."""

    terms: tuple
    raw: str

    def __len__(self):
        return len(self.terms)

    def term_strings(self, vocab):
        return [vocab.term(t) for t in self.terms]

    def term_set(self):
        return set(self.terms)


def tokenize(raw, mode, vocab):
    """Tokenize `raw` into a Query against `vocab`.

    mode "build" interns new terms and counts frequencies; mode "frozen"
    maps unseen terms to the unknown id.  Rejects strings that tokenize
    to nothing.
    """
    if mode not in ("build", "frozen"):
        raise ValueError(f"unknown vocab mode {mode!r}")
    terms = split_terms(raw)
    if not terms:
        raise TokenizeError(f"query {raw!r} is empty after tokenization")
    if mode == "build":
        ids = tuple(vocab.add(t) for t in terms)
    else:
        ids = tuple(vocab.id_or_unk(t) for t in terms)
    return Query(terms=ids, raw=raw)


def term_set(raw):
    """Set of term strings of a raw query (tokenization rules as above)."""
    return set(split_terms(raw))


def jaccard(a, b):
    """Jaccard similarity |a & b| / |a | b| between two term sets."""
    if not a and not b:
        raise ValueError("jaccard undefined for two empty sets")
    inter = len(a & b)
    union = len(a | b)
    return inter / union


def load_stopwords(path):
    """Read a stop-word file: one term per line, '#' comments allowed."""
    words = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip().lower()
            if line and not line.startswith("#"):
                words.add(line)
    return words
