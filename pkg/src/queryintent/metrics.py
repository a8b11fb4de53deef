"""Evaluation metrics: reciprocal rank, MRR ratio, P@k / AP@nnz, t-test.

Precision metrics ignore stop words: they are removed from both the
predicted ranking and the ground-truth set before measuring, and an
instance whose filtered ground truth is empty is skipped (the skip is
counted on the report).  `nnz` is the per-instance count of non-stop
ground-truth terms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .text import DEFAULT_STOPWORDS


def reciprocal_rank(ranked_ids, relevant_id):
    """1/rank of `relevant_id` in the list; 0.0 when absent."""
    for pos, pid in enumerate(ranked_ids, start=1):
        if pid == relevant_id:
            return 1.0 / pos
    return 0.0


def mrr(rr_values):
    rr_values = list(rr_values)
    if not rr_values:
        raise ValueError("MRR of an empty row set")
    return float(np.mean(rr_values))


def mrr_ratio(boosted_rr, baseline_rr):
    """mean(boosted reciprocal ranks) / mean(baseline reciprocal ranks)."""
    if len(boosted_rr) != len(baseline_rr):
        raise ValueError("RR columns must cover identical query sets")
    denom = mrr(baseline_rr)
    if denom == 0.0:
        raise ZeroDivisionError("baseline MRR is zero")
    return mrr(boosted_rr) / denom


def precision_at_k(ranked_terms, truth_terms, k, stopwords=DEFAULT_STOPWORDS):
    """|top-k of ranking (minus stop words) & truth (minus stop words)| / k.

    Returns None when the filtered ground truth is empty (instance is
    skipped by the aggregators).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    truth = {t for t in truth_terms if t not in stopwords}
    if not truth:
        return None
    kept = [t for t in ranked_terms if t not in stopwords]
    return len(set(kept[:k]) & truth) / k


def precision_at_nnz(ranked_terms, truth_terms, stopwords=DEFAULT_STOPWORDS):
    """P@k with k equal to the count of non-stop ground-truth terms."""
    truth = {t for t in truth_terms if t not in stopwords}
    if not truth:
        return None
    return precision_at_k(ranked_terms, truth, len(truth), stopwords)


@dataclass
class PrecisionSummary:
    ap_at_nnz: float
    ap_at_k: dict  # k -> average precision
    n_instances: int
    n_skipped: int


def precision_summary(instances, ks=(1, 2, 3), stopwords=DEFAULT_STOPWORDS):
    """Aggregate AP@nnz and AP@k over (ranked_terms, truth_terms) pairs."""
    per_nnz = []
    per_k = {k: [] for k in ks}
    skipped = 0
    for ranked, truth in instances:
        p = precision_at_nnz(ranked, truth, stopwords)
        if p is None:
            skipped += 1
            continue
        per_nnz.append(p)
        for k in ks:
            per_k[k].append(precision_at_k(ranked, truth, k, stopwords))
    if not per_nnz:
        raise ValueError("every instance was skipped (empty ground truths)")
    return PrecisionSummary(
        ap_at_nnz=float(np.mean(per_nnz)),
        ap_at_k={k: float(np.mean(v)) for k, v in per_k.items()},
        n_instances=len(per_nnz),
        n_skipped=skipped,
    )


def paired_t_test(x, y):
    """Two-sided paired t-test; returns (t, dof, p).

    Zero-variance differences give p = 1.0 when the mean difference is
    also zero (the "identical columns" convention) and are rejected
    otherwise.  The p-value comes from the Student-t CDF via the
    regularized incomplete beta function.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"paired samples must be equal-length vectors, "
                         f"got {x.shape} and {y.shape}")
    n = x.size
    if n < 2:
        raise ValueError("need at least 2 pairs")
    d = x - y
    mean = d.mean()
    sd = d.std(ddof=1)
    dof = n - 1
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, dof, 1.0
        raise ValueError("zero-variance nonzero differences: t undefined")
    t = mean / (sd / np.sqrt(n))
    # two-sided p: P(|T| > |t|) = I_{dof/(dof+t^2)}(dof/2, 1/2)
    p = float(special.betainc(dof / 2.0, 0.5, dof / (dof + t * t)))
    return float(t), dof, p


def normalize_for_display(weights):
    """Scale weights so the maximum is exactly 1."""
    w = np.asarray(weights, dtype=np.float64)
    top = w.max() if w.size else 0.0
    if top <= 0.0:
        raise ValueError("need at least one positive weight to normalize")
    return w / top


# --- Report container ----------------------------------------------------

REPORT_FORMAT_VERSION = 1


@dataclass
class EvalReport:
    """Per-query metric rows plus aggregates, for one evaluation task."""

    task: str
    rows: list = field(default_factory=list)  # dicts, one per query
    aggregates: dict = field(default_factory=dict)
    t_tests: list = field(default_factory=list)
    skipped: int = 0
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "task": self.task,
            "config": self.config,
            "aggregates": self.aggregates,
            "t_tests": self.t_tests,
            "skipped": self.skipped,
            "rows": self.rows,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        if d.get("format_version") != REPORT_FORMAT_VERSION:
            raise ValueError(
                f"report format_version {d.get('format_version')!r} unsupported"
            )
        return cls(task=d["task"], rows=d["rows"], aggregates=d["aggregates"],
                   t_tests=d.get("t_tests", []), skipped=d.get("skipped", 0),
                   config=d.get("config", {}))

    def render_table(self):
        """Human-readable aligned table of the aggregates."""
        lines = [f"task: {self.task}"]
        width = max((len(k) for k in self.aggregates), default=0)
        for key in sorted(self.aggregates):
            value = self.aggregates[key]
            shown = f"{value:.4f}" if isinstance(value, float) else str(value)
            lines.append(f"  {key.ljust(width)}  {shown}")
        for rec in self.t_tests:
            lines.append(
                f"  t-test {rec['name']}: t={rec['t']:.4f} dof={rec['dof']}"
                f" p={rec['p']:.6f}"
            )
        if self.skipped:
            lines.append(f"  skipped instances: {self.skipped}")
        return "\n".join(lines)
