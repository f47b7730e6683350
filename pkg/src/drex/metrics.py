"""Evaluation metrics: micro relation F1, all-gold MRR, trigger token
F1 / exact match, the leave-one-out saliency ratio, and multi-seed
aggregation.

The no-relation marker is excluded from both predicted and gold sets before
any F1 counting.  MRR follows the all-ground-truth variant: every gold
relation of an entity pair contributes its reciprocal rank, so pairs holding
several relations can contribute more than 1.
"""

from __future__ import annotations

import string
from collections import Counter
from dataclasses import dataclass, fields

import numpy as np
import torch

from .corpus import PairExample, build_input, dialogue_span_to_input, mask_span
from .errors import EvaluationError
from .heads import relation_loss
from .models import RelationModel
from .schema import RelationSchema


@dataclass(frozen=True)
class RankedPrediction:
    """Complete relation ranking plus thresholded prediction set for one pair."""

    entity_pair_id: str
    relation_ranking: tuple[str, ...]
    predicted_set: frozenset[str]
    gold_set: frozenset[str]


def ranked_prediction(
    pair_id: str,
    probs,
    gold_relations,
    schema: RelationSchema,
    threshold: float = 0.5,
) -> RankedPrediction:
    """Build a RankedPrediction from per-relation probabilities.

    The ranking is the full descending sort of schema labels (stable in label
    order on ties); a relation is predicted when its probability reaches the
    threshold.  The no-relation marker is dropped from the gold set here.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (schema.size,):
        raise EvaluationError(f"expected {schema.size} probabilities, got shape {probs.shape}")
    order = np.argsort(-probs, kind="stable")
    ranking = tuple(schema.labels[i] for i in order)
    predicted = frozenset(schema.labels[i] for i in range(schema.size) if probs[i] >= threshold)
    gold = frozenset(r for r in gold_relations if r != schema.no_relation)
    return RankedPrediction(pair_id, ranking, predicted, gold)


def relation_f1(predictions: list[RankedPrediction]) -> tuple[float, float, float]:
    """Micro-averaged precision/recall/F1 over all per-pair relation decisions."""
    if not predictions:
        raise EvaluationError("cannot compute F1 over an empty prediction list")
    tp = fp = fn = 0
    for pred in predictions:
        tp += len(pred.predicted_set & pred.gold_set)
        fp += len(pred.predicted_set - pred.gold_set)
        fn += len(pred.gold_set - pred.predicted_set)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def mrr(predictions: list[RankedPrediction], normalize_per_pair: bool = False) -> float:
    """Mean over entity pairs of the summed reciprocal ranks of all gold relations.

    Pairs without any gold relation are skipped.  With
    `normalize_per_pair=True` each pair's sum is divided by its gold-set size
    (analysis aid only; the default is the plain double sum).
    """
    if not predictions:
        raise EvaluationError("cannot compute MRR over an empty prediction list")
    total = 0.0
    pairs = 0
    for pred in predictions:
        if not pred.gold_set:
            continue
        pairs += 1
        pair_sum = 0.0
        for gold in pred.gold_set:
            try:
                rank = pred.relation_ranking.index(gold) + 1
            except ValueError:
                raise EvaluationError(
                    f"gold relation {gold!r} missing from ranking of pair {pred.entity_pair_id!r}"
                ) from None
            pair_sum += 1.0 / rank
        total += pair_sum / len(pred.gold_set) if normalize_per_pair else pair_sum
    if pairs == 0:
        raise EvaluationError("no pair has a gold relation; MRR undefined")
    return total / pairs


_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def _normalize_tokens(text: str) -> list[str]:
    return [t for t in text.lower().translate(_PUNCT_TABLE).split() if t]


def trigger_token_f1(predicted: str | None, gold: str | None) -> tuple[float, float]:
    """Whitespace-token overlap F1 and exact match after lowercasing and
    punctuation stripping.  Both absent counts as perfect; one absent as zero."""
    if predicted is None and gold is None:
        return 1.0, 1.0
    if predicted is None or gold is None:
        return 0.0, 0.0
    pred_toks = _normalize_tokens(predicted)
    gold_toks = _normalize_tokens(gold)
    if not pred_toks and not gold_toks:
        return 1.0, 1.0
    em = 1.0 if pred_toks == gold_toks else 0.0
    overlap = sum((Counter(pred_toks) & Counter(gold_toks)).values())
    if overlap == 0:
        return 0.0, em
    precision = overlap / len(pred_toks)
    recall = overlap / len(gold_toks)
    return 2 * precision * recall / (precision + recall), em


def loo_metric(
    rater: RelationModel,
    explainer,
    dataset: list[PairExample],
    threshold: float = 0.5,
) -> float:
    """F1 of the rater on explanation-masked data over its F1 on clean data.

    `explainer(pair, rater_input)` returns a dialogue-relative token span (or
    None) to mask out of the rater's input.  Lower means the explanations are
    more essential to the rater's decisions.
    """
    rater.eval()
    clean: list[RankedPrediction] = []
    masked: list[RankedPrediction] = []
    max_len = rater.encoder.config.max_length
    with torch.no_grad():
        for pair in dataset:
            inp = build_input(None, pair.subject, pair.object, pair.dialogue, rater.tokenizer, max_len)
            probs = rater.probs(inp).double().numpy()
            clean.append(ranked_prediction(pair.pair_id, probs, pair.relations, rater.schema, threshold))
            span = explainer(pair, inp)
            if span is not None:
                inp = mask_span(inp, dialogue_span_to_input(span, inp), rater.tokenizer)
                probs = rater.probs(inp).double().numpy()
            masked.append(ranked_prediction(pair.pair_id, probs, pair.relations, rater.schema, threshold))
    _, _, f1_clean = relation_f1(clean)
    if f1_clean == 0.0:
        raise EvaluationError("rater F1 on clean data is zero; LOO ratio undefined")
    _, _, f1_masked = relation_f1(masked)
    return f1_masked / f1_clean


def null_explainer(pair, rater_input):
    """Never predicts a span; masking leaves the dataset untouched."""
    return None


def random_span_explainer(rng: np.random.Generator, min_len: int = 1, max_len: int = 4):
    """Uniform random dialogue spans of 1-4 tokens, the random baseline."""

    def explain(pair, rater_input):
        n = rater_input.dialogue_len
        if n == 0:
            return None
        length = int(rng.integers(min_len, max_len + 1))
        length = min(length, n)
        start = int(rng.integers(0, n - length + 1))
        return (start, start + length - 1)

    return explain


def loss_of_probs(probs, y) -> float:
    """Convenience wrapper exposing the relation loss on plain arrays."""
    return float(relation_loss(torch.as_tensor(probs, dtype=torch.float64), torch.as_tensor(y, dtype=torch.float64)))


@dataclass
class MetricReport:
    f1: float | None = None
    precision: float | None = None
    recall: float | None = None
    mrr: float | None = None
    token_f1: float | None = None
    exact_match: float | None = None
    loo: float | None = None

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self) if getattr(self, f.name) is not None}


@dataclass
class AggregateReport:
    """Mean and sample standard deviation of repeated runs."""

    mean: MetricReport
    std: MetricReport | None
    n: int
    per_seed: list[MetricReport]

    def to_json(self) -> dict:
        out = {"n": self.n, "mean": self.mean.as_dict(), "per_seed": [r.as_dict() for r in self.per_seed]}
        if self.std is not None:
            out["std"] = self.std.as_dict()
        return out


def aggregate_runs(reports: list[MetricReport]) -> AggregateReport:
    """Elementwise mean and (for two or more runs) sample standard deviation."""
    if not reports:
        raise EvaluationError("no reports to aggregate")
    keys = set(reports[0].as_dict())
    for rep in reports[1:]:
        if set(rep.as_dict()) != keys:
            raise EvaluationError("reports carry mismatched metric sets")
    mean = MetricReport(**{k: float(np.mean([rep.as_dict()[k] for rep in reports])) for k in keys})
    std = None
    if len(reports) >= 2:
        std = MetricReport(
            **{k: float(np.std([rep.as_dict()[k] for rep in reports], ddof=1)) for k in keys}
        )
    return AggregateReport(mean=mean, std=std, n=len(reports), per_seed=list(reports))
