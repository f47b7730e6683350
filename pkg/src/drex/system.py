"""The rank / explain / re-rank system.

Three models cooperate: a frozen ranker scores all relations from
(s, o, d); a trainable explanation policy extracts a span for each of the
ranker's top-k relations; a trainable re-ranker rescores relations given
each extracted span.  The policy trains with two rewards (the re-ranker's
loss improvement over the ranker, and the loss increase caused by masking
the span out of the dialogue) plus direct span supervision when a labeled
trigger exists.  Inference averages the ranker's probabilities with the k
re-ranker predictions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch

from .corpus import (
    ModelInput,
    PairExample,
    align_trigger,
    build_input,
    dialogue_span_from_input,
    dialogue_span_to_input,
    mask_span,
)
from .errors import ConfigError
from .heads import Explanation, decode_explanation, relation_loss, span_distributions, span_loss
from .models import RelationModel, SpanModel, clone_model, load_model, save_model
from .schema import relation_to_natural_language


@dataclass
class DrexConfig:
    top_k: int = 5
    learning_rate: float = 3e-5
    batch_size: int = 30
    max_epochs_baseline: int = 20
    max_epochs_drex: int = 30
    alpha: float = 0.5
    loo_reference: str = "ranker"  # which model computes the leave-one-out losses
    max_span_len: int = 20
    prediction_threshold: float = 0.5
    weight_decay: float = 0.01
    reward_clip: float | None = None  # optional stability clamp, e.g. 5.0
    use_rerank_reward: bool = True
    use_loo_reward: bool = True

    def __post_init__(self):
        if self.top_k < 1:
            raise ConfigError("top_k must be at least 1")
        if not (0.0 <= self.alpha <= 1.0):
            raise ConfigError("alpha must lie in [0, 1]")
        if self.loo_reference not in ("ranker", "reranker"):
            raise ConfigError("loo_reference must be 'ranker' or 'reranker'")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "DrexConfig":
        return cls(**obj)


@dataclass
class RewardBundle:
    """Per-extracted-explanation rewards, treated as constants by the policy loss."""

    rerank_reward: float
    loo_reward: float
    relation: str | None = None

    @property
    def total(self) -> float:
        return self.rerank_reward + self.loo_reward


def rerank_reward(loss_ranker: float, loss_reranker: float) -> float:
    """How much the explanation lowered the re-ranker's loss below the ranker's."""
    return loss_ranker - loss_reranker


def policy_gradient_loss(log_p_start, log_p_end, rewards: RewardBundle):
    """Score-function loss for the chosen span; gradient flows only through
    the log-probabilities, never the rewards."""
    return -(log_p_start + log_p_end) * rewards.total


def _clip(value: float, limit: float | None) -> float:
    if limit is None:
        return value
    return max(-limit, min(limit, value))


class DrexSystem:
    """Frozen ranker + trainable explainer and re-ranker."""

    def __init__(
        self,
        ranker: RelationModel,
        explainer: SpanModel,
        reranker: RelationModel,
        config: DrexConfig,
    ):
        if config.top_k > ranker.schema.size:
            raise ConfigError("top_k cannot exceed the number of relation types")
        self.ranker = ranker
        self.explainer = explainer
        self.reranker = reranker
        self.config = config
        self.schema = ranker.schema
        self.ranker.requires_grad_(False)
        self.ranker.eval()

    @classmethod
    def initialize(cls, ranker: RelationModel, explainer: SpanModel, config: DrexConfig) -> "DrexSystem":
        """Start training from baselines: the re-ranker is a copy of the ranker."""
        return cls(ranker=ranker, explainer=explainer, reranker=clone_model(ranker), config=config)

    def trainable_parameters(self):
        yield from self.explainer.parameters()
        yield from self.reranker.parameters()

    def train_mode(self) -> None:
        self.explainer.train()
        self.reranker.train()
        self.ranker.eval()

    def eval_mode(self) -> None:
        self.explainer.eval()
        self.reranker.eval()
        self.ranker.eval()

    # -- input assembly ----------------------------------------------------

    def ranker_input(self, pair: PairExample) -> ModelInput:
        return build_input(
            None, pair.subject, pair.object, pair.dialogue,
            self.ranker.tokenizer, self.ranker.encoder.config.max_length,
        )

    def explainer_input(self, pair: PairExample, relation: str) -> ModelInput:
        phrase = relation_to_natural_language(relation, self.schema)
        return build_input(
            phrase, pair.subject, pair.object, pair.dialogue,
            self.explainer.tokenizer, self.explainer.encoder.config.max_length,
        )

    def reranker_input(self, pair: PairExample, explanation_text: str | None) -> ModelInput:
        return build_input(
            explanation_text or None, pair.subject, pair.object, pair.dialogue,
            self.reranker.tokenizer, self.reranker.encoder.config.max_length,
        )

    def gold_vector(self, pair: PairExample, dtype=torch.float32) -> torch.Tensor:
        return torch.tensor(self.schema.label_vector(pair.relations), dtype=dtype)

    def top_k_relations(self, probs: torch.Tensor) -> list[str]:
        idx = torch.topk(probs, k=self.config.top_k).indices.tolist()
        return [self.schema.labels[i] for i in idx]

    # -- rewards -----------------------------------------------------------

    def loo_reward(
        self,
        pair: PairExample,
        span: tuple[int, int] | None,
        clean_loss: float | None = None,
    ) -> float:
        """Loss increase of the reference model when the span is masked out.

        `span` is in dialogue-relative token coordinates; None means nothing
        is masked and the reward is exactly zero.
        """
        return self.loo_rewards(pair, [span], clean_loss)[0]

    def loo_rewards(
        self,
        pair: PairExample,
        spans: list[tuple[int, int] | None],
        clean_loss: float | None = None,
    ) -> list[float]:
        """Leave-one-out rewards for several spans of one pair, batched."""
        reference = self.ranker if self.config.loo_reference == "ranker" else self.reranker
        ref_input = build_input(
            None, pair.subject, pair.object, pair.dialogue,
            reference.tokenizer, reference.encoder.config.max_length,
        )
        y = self.gold_vector(pair)
        with torch.no_grad():
            if clean_loss is None:
                clean_loss = float(relation_loss(reference.probs(ref_input), y))
            masked_inputs = []
            masked_rows = []
            for i, span in enumerate(spans):
                if span is None:
                    continue
                masked_rows.append(i)
                masked_inputs.append(
                    mask_span(ref_input, dialogue_span_to_input(span, ref_input), reference.tokenizer)
                )
            rewards = [0.0] * len(spans)
            if masked_inputs:
                losses = relation_loss(
                    reference.batch_probs(masked_inputs), y.expand(len(masked_inputs), -1)
                )
                for row, loss in zip(masked_rows, losses):
                    rewards[row] = float(loss) - clean_loss
        return rewards


@dataclass
class RelationStepEntry:
    relation: str
    rewards: RewardBundle
    pg_loss: float
    rr_loss: float
    span: tuple[int, int] | None


@dataclass
class ExampleReport:
    pair_id: str
    ranker_loss: float
    relation_entries: list[RelationStepEntry] = field(default_factory=list)
    supervised_span_losses: list[float] = field(default_factory=list)
    skipped_unaligned: int = 0


@dataclass
class StepReport:
    examples: list[ExampleReport] = field(default_factory=list)

    @property
    def mean_rr_loss(self) -> float:
        vals = [e.rr_loss for ex in self.examples for e in ex.relation_entries]
        return float(np.mean(vals)) if vals else 0.0

    @property
    def mean_pg_loss(self) -> float:
        vals = [e.pg_loss for ex in self.examples for e in ex.relation_entries]
        return float(np.mean(vals)) if vals else 0.0


def drex_example_losses(
    system: DrexSystem,
    pair: PairExample,
    generator: torch.Generator | None = None,
) -> tuple[torch.Tensor, ExampleReport]:
    """All differentiable losses contributed by one example.

    Runs the ranker without gradient, samples one explanation per top-k
    relation, and accumulates: the re-ranker's supervised loss per
    explanation, the policy loss per explanation, and the supervised span
    loss per labeled (relation, trigger) pair.  The k explainer, re-ranker,
    and masked-reference passes each run as one padded batch.
    """
    cfg = system.config
    y = system.gold_vector(pair)
    r_input = system.ranker_input(pair)
    with torch.no_grad():
        probs_r = system.ranker.probs(r_input)
        ranker_loss = float(relation_loss(probs_r, y))
    report = ExampleReport(pair_id=pair.pair_id, ranker_loss=ranker_loss)
    total = torch.zeros((), dtype=torch.float32)

    top = system.top_k_relations(probs_r)
    ex_inputs = [system.explainer_input(pair, relation) for relation in top]
    ex_states, _ = system.explainer.encode_batch(ex_inputs)
    explanations = []
    for row, ex_input in enumerate(ex_inputs):
        dist = span_distributions(ex_states[row, : len(ex_input)], system.explainer.extractor)
        expl = decode_explanation(dist, ex_input.prefix_len, cfg.max_span_len, "sample", generator)
        explanations.append(expl)

    rr_inputs = [
        system.reranker_input(pair, ex_input.span_text(*expl.span))
        for ex_input, expl in zip(ex_inputs, explanations)
    ]
    rr_losses = relation_loss(system.reranker.batch_probs(rr_inputs), y.expand(len(top), -1))

    loo_rewards = [0.0] * len(top)
    if cfg.use_loo_reward:
        spans = [dialogue_span_from_input(e.span, inp) for e, inp in zip(explanations, ex_inputs)]
        loo_rewards = system.loo_rewards(pair, spans, clean_loss=ranker_loss if cfg.loo_reference == "ranker" else None)

    for relation, ex_input, expl, rr_loss, r_loo in zip(top, ex_inputs, explanations, rr_losses, loo_rewards):
        r_rr = rerank_reward(ranker_loss, float(rr_loss.detach())) if cfg.use_rerank_reward else 0.0
        rewards = RewardBundle(
            rerank_reward=_clip(r_rr, cfg.reward_clip),
            loo_reward=_clip(r_loo, cfg.reward_clip),
            relation=relation,
        )
        pg = policy_gradient_loss(expl.log_prob_start, expl.log_prob_end, rewards)
        total = total + rr_loss + pg
        report.relation_entries.append(
            RelationStepEntry(
                relation=relation,
                rewards=rewards,
                pg_loss=float(pg.detach()),
                rr_loss=float(rr_loss.detach()),
                span=expl.span,
            )
        )

    for relation, trigger in sorted(pair.triggers.items()):
        ex_input = system.explainer_input(pair, relation)
        gold = align_trigger(trigger, ex_input, system.explainer.tokenizer)
        if gold is None:
            report.skipped_unaligned += 1
            continue
        dist = system.explainer.distributions(ex_input)
        l_ex = span_loss(dist, gold, ex_input.dialogue_len)
        total = total + l_ex
        report.supervised_span_losses.append(float(l_ex.detach()))

    return total, report


def drex_train_step(
    system: DrexSystem,
    batch: list[PairExample],
    optimizer: torch.optim.Optimizer,
    generator: torch.Generator | None = None,
) -> StepReport:
    """One optimizer step over a batch; updates explainer and re-ranker only."""
    system.train_mode()
    optimizer.zero_grad()
    report = StepReport()
    total = torch.zeros((), dtype=torch.float32)
    for pair in batch:
        loss, ex_report = drex_example_losses(system, pair, generator)
        total = total + loss
        report.examples.append(ex_report)
    (total / len(batch)).backward()
    optimizer.step()
    return report


@dataclass
class ExplanationRecord:
    """One extracted explanation, anchored to the dialogue so any model can
    re-use it regardless of its own prefix length."""

    relation: str
    span: tuple[int, int] | None  # dialogue-relative token span, inclusive
    char_span: tuple[int, int] | None  # offsets into the rendered dialogue text
    text: str | None

    def to_json(self) -> dict:
        return {
            "relation": self.relation,
            "span": list(self.span) if self.span else None,
            "char_span": list(self.char_span) if self.char_span else None,
            "text": self.text,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ExplanationRecord":
        return cls(
            relation=obj["relation"],
            span=tuple(obj["span"]) if obj.get("span") else None,
            char_span=tuple(obj["char_span"]) if obj.get("char_span") else None,
            text=obj.get("text"),
        )


@dataclass
class DrexPrediction:
    pair_id: str
    subject: str
    object: str
    final_probs: np.ndarray
    top_relations: list[str]
    explanations: list[ExplanationRecord]
    gold: tuple[str, ...]


def ensemble_probs(ranker_probs: np.ndarray, reranker_probs: list[np.ndarray]) -> np.ndarray:
    """Mean of the ranker's and the k re-ranker probability vectors.

    Computed as ranker + average deviation, with an exactly rounded deviation
    sum, so the result is order-invariant and bit-identical to the ranker
    whenever every re-ranker output matches it.
    """
    k = len(reranker_probs)
    out = np.asarray(ranker_probs, dtype=np.float64).copy()
    if k == 0:
        return out
    devs = [np.asarray(p, dtype=np.float64) - out for p in reranker_probs]
    for j in range(out.shape[0]):
        out[j] += math.fsum(d[j] for d in devs) / (k + 1)
    return out


def drex_infer(system: DrexSystem, pair: PairExample) -> DrexPrediction:
    """Greedy inference: rank, explain each top-k relation, re-rank, average."""
    system.eval_mode()
    with torch.no_grad():
        r_input = system.ranker_input(pair)
        probs_r = system.ranker.probs(r_input)
        top = system.top_k_relations(probs_r)
        ex_inputs = [system.explainer_input(pair, relation) for relation in top]
        ex_states, _ = system.explainer.encode_batch(ex_inputs)
        explanations: list[ExplanationRecord] = []
        rr_inputs = []
        for row, (relation, ex_input) in enumerate(zip(top, ex_inputs)):
            dist = span_distributions(ex_states[row, : len(ex_input)], system.explainer.extractor)
            expl = decode_explanation(dist, ex_input.prefix_len, system.config.max_span_len, "greedy")
            if expl.span is not None:
                expl.text = ex_input.span_text(*expl.span)
            explanations.append(_explanation_record(relation, expl, ex_input))
            rr_inputs.append(system.reranker_input(pair, expl.text))
        rr_probs = system.reranker.batch_probs(rr_inputs).double().numpy()
        rr_vectors = [rr_probs[i] for i in range(len(top))]
        final = ensemble_probs(probs_r.double().numpy(), rr_vectors)
    return DrexPrediction(
        pair_id=pair.pair_id,
        subject=pair.subject,
        object=pair.object,
        final_probs=final,
        top_relations=top,
        explanations=explanations,
        gold=pair.gold_labels(system.schema),
    )


def _explanation_record(relation: str, expl: Explanation, ex_input: ModelInput) -> ExplanationRecord:
    if expl.span is None:
        return ExplanationRecord(relation=relation, span=None, char_span=None, text=None)
    ds, de = dialogue_span_from_input(expl.span, ex_input)
    cs = ex_input.dialogue_char_spans[ds][0]
    ce = ex_input.dialogue_char_spans[de][1]
    return ExplanationRecord(relation=relation, span=(ds, de), char_span=(cs, ce), text=expl.text)


# -- system checkpointing and prediction dumps ------------------------------


def save_system(system: DrexSystem, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_model(system.ranker, directory / "ranker")
    save_model(system.explainer, directory / "explainer")
    save_model(system.reranker, directory / "reranker")
    (directory / "drex_config.json").write_text(json.dumps(system.config.to_json(), indent=2))


def load_system(directory: str | Path) -> DrexSystem:
    directory = Path(directory)
    config = DrexConfig.from_json(json.loads((directory / "drex_config.json").read_text()))
    return DrexSystem(
        ranker=load_model(directory / "ranker"),
        explainer=load_model(directory / "explainer"),
        reranker=load_model(directory / "reranker"),
        config=config,
    )


def prediction_record(pred: DrexPrediction) -> dict:
    """One dump record per (dialogue, subject, object)."""
    return {
        "pair_id": pred.pair_id,
        "subject": pred.subject,
        "object": pred.object,
        "final_probs": [float(p) for p in pred.final_probs],
        "top_relations": pred.top_relations,
        "explanations": [e.to_json() for e in pred.explanations],
        "gold": list(pred.gold),
    }


def write_predictions(predictions: list[DrexPrediction], path: str | Path) -> None:
    """Newline-delimited JSON, one record per entity pair."""
    with Path(path).open("w") as fh:
        for pred in predictions:
            fh.write(json.dumps(prediction_record(pred)) + "\n")


def read_predictions(path: str | Path) -> list[dict]:
    records = []
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    for rec in records:
        rec["explanations"] = [ExplanationRecord.from_json(e) for e in rec.get("explanations", [])]
    return records
