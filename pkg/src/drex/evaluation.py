"""Turn models into predictions and predictions into metric reports."""

from __future__ import annotations

import torch

from .corpus import PairExample, build_input, dialogue_span_from_input
from .metrics import (
    MetricReport,
    RankedPrediction,
    loo_metric,
    mrr,
    ranked_prediction,
    relation_f1,
    trigger_token_f1,
)
from .models import RelationModel, SpanModel
from .schema import relation_to_natural_language
from .system import DrexPrediction, DrexSystem, drex_infer


def relation_probs(model: RelationModel, pairs: list[PairExample], batch_size: int = 32) -> torch.Tensor:
    """Per-relation probabilities for every pair, batched, no gradient."""
    model.eval()
    max_len = model.encoder.config.max_length
    inputs = [
        build_input(None, p.subject, p.object, p.dialogue, model.tokenizer, max_len) for p in pairs
    ]
    chunks = []
    with torch.no_grad():
        for lo in range(0, len(inputs), batch_size):
            chunks.append(model.batch_probs(inputs[lo : lo + batch_size]))
    return torch.cat(chunks, dim=0)


def evaluate_relation_model(
    model: RelationModel,
    pairs: list[PairExample],
    threshold: float = 0.5,
    batch_size: int = 32,
) -> tuple[MetricReport, list[RankedPrediction]]:
    probs = relation_probs(model, pairs, batch_size).double().numpy()
    preds = [
        ranked_prediction(p.pair_id, probs[i], p.relations, model.schema, threshold)
        for i, p in enumerate(pairs)
    ]
    precision, recall, f1 = relation_f1(preds)
    report = MetricReport(f1=f1, precision=precision, recall=recall, mrr=mrr(preds))
    return report, preds


def evaluate_system(
    system: DrexSystem,
    pairs: list[PairExample],
    threshold: float | None = None,
) -> tuple[MetricReport, list[DrexPrediction]]:
    """Full rank/explain/re-rank inference over a dataset."""
    threshold = system.config.prediction_threshold if threshold is None else threshold
    predictions = [drex_infer(system, p) for p in pairs]
    ranked = [
        ranked_prediction(pred.pair_id, pred.final_probs, pair.relations, system.schema, threshold)
        for pred, pair in zip(predictions, pairs)
    ]
    precision, recall, f1 = relation_f1(ranked)
    report = MetricReport(f1=f1, precision=precision, recall=recall, mrr=mrr(ranked))
    return report, predictions


def span_supervision_examples(pairs: list[PairExample], schema) -> list[tuple[PairExample, str, str]]:
    """One (pair, relation, trigger text) item per labeled trigger."""
    items = []
    for pair in pairs:
        for relation in pair.relations:
            trigger = pair.triggers.get(relation)
            if trigger and relation != schema.no_relation:
                items.append((pair, relation, trigger))
    return items


def evaluate_span_model(
    model: SpanModel,
    pairs: list[PairExample],
    max_span_len: int = 20,
) -> MetricReport:
    """Token F1 / exact match of greedy spans against labeled triggers,
    conditioning the model on each trigger's own relation."""
    model.eval()
    items = span_supervision_examples(pairs, model.schema)
    max_len = model.encoder.config.max_length
    f1s, ems = [], []
    with torch.no_grad():
        for pair, relation, trigger in items:
            phrase = relation_to_natural_language(relation, model.schema)
            inp = build_input(phrase, pair.subject, pair.object, pair.dialogue, model.tokenizer, max_len)
            expl = model.explain(inp, max_span_len, mode="greedy")
            f1, em = trigger_token_f1(expl.text, trigger)
            f1s.append(f1)
            ems.append(em)
    if not f1s:
        return MetricReport(token_f1=0.0, exact_match=0.0)
    return MetricReport(token_f1=sum(f1s) / len(f1s), exact_match=sum(ems) / len(ems))


def gold_conditioned_explainer(model: SpanModel, max_span_len: int = 20):
    """LOO explainer: condition the span model on the pair's first gold relation."""
    max_len = model.encoder.config.max_length

    def explain(pair: PairExample, rater_input):
        gold = [r for r in pair.relations if r != model.schema.no_relation]
        if not gold:
            return None
        phrase = relation_to_natural_language(gold[0], model.schema)
        inp = build_input(phrase, pair.subject, pair.object, pair.dialogue, model.tokenizer, max_len)
        with torch.no_grad():
            expl = model.explain(inp, max_span_len, mode="greedy")
        if expl.span is None:
            return None
        return dialogue_span_from_input(expl.span, inp)

    return explain


def system_explainer(system: DrexSystem):
    """LOO explainer: condition on the ranker's top relation, as deployed."""

    def explain(pair: PairExample, rater_input):
        with torch.no_grad():
            probs = system.ranker.probs(system.ranker_input(pair))
            relation = system.top_k_relations(probs)[0]
            inp = system.explainer_input(pair, relation)
            expl = system.explainer.explain(inp, system.config.max_span_len, mode="greedy")
        if expl.span is None:
            return None
        return dialogue_span_from_input(expl.span, inp)

    return explain


def explanation_overlap_rate(
    model: SpanModel,
    pairs: list[PairExample],
    max_span_len: int = 20,
) -> float:
    """Share of labeled triggers whose greedy explanation overlaps them (token level)."""
    model.eval()
    items = span_supervision_examples(pairs, model.schema)
    if not items:
        return 0.0
    hits = 0
    max_len = model.encoder.config.max_length
    with torch.no_grad():
        for pair, relation, trigger in items:
            phrase = relation_to_natural_language(relation, model.schema)
            inp = build_input(phrase, pair.subject, pair.object, pair.dialogue, model.tokenizer, max_len)
            expl = model.explain(inp, max_span_len, mode="greedy")
            if expl.text is None:
                continue
            pred_tokens = set(expl.text.lower().split())
            gold_tokens = set(trigger.lower().split())
            if pred_tokens & gold_tokens:
                hits += 1
    return hits / len(items)


__all__ = [
    "evaluate_relation_model",
    "evaluate_span_model",
    "evaluate_system",
    "explanation_overlap_rate",
    "gold_conditioned_explainer",
    "loo_metric",
    "relation_probs",
    "span_supervision_examples",
    "system_explainer",
]
