"""Training loops for the baselines and the rank/explain/re-rank system.

All loops use decoupled-weight-decay Adam, run their full epoch budget, and
keep the parameters of the epoch with the best validation score (relation F1
for classifiers and the full system, token F1 for the span baseline).
"""

from __future__ import annotations

import copy
import logging
import random
from dataclasses import dataclass, field

import numpy as np
import torch

from .corpus import PairExample, align_trigger, build_input
from .errors import ConfigError
from .evaluation import (
    evaluate_relation_model,
    evaluate_span_model,
    evaluate_system,
    span_supervision_examples,
)
from .heads import joint_loss, relation_loss, span_distributions, span_loss
from .models import JointModel, RelationModel, SpanModel
from .schema import relation_to_natural_language
from .system import DrexConfig, DrexSystem, StepReport, drex_train_step
from .tokenization import WordTokenizer

logger = logging.getLogger(__name__)


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def make_optimizer(parameters, config: DrexConfig) -> torch.optim.Optimizer:
    return torch.optim.AdamW(parameters, lr=config.learning_rate, weight_decay=config.weight_decay)


def _batches(n: int, batch_size: int, rng: random.Random) -> list[list[int]]:
    order = list(range(n))
    rng.shuffle(order)
    return [order[lo : lo + batch_size] for lo in range(0, n, batch_size)]


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_metric: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_metric: float = float("-inf")


def _corpus_texts(pairs: list[PairExample], schema) -> list[str]:
    """Texts the tiny-encoder vocabulary is built from: dialogues, entities,
    and every relation phrase (so explanation prefixes never hit UNK)."""
    texts = [p.dialogue.render() for p in pairs]
    texts += [p.subject for p in pairs] + [p.object for p in pairs]
    texts += [relation_to_natural_language(r, schema) for r in schema.labels]
    return texts


def build_word_tokenizer(pairs: list[PairExample], schema) -> WordTokenizer:
    return WordTokenizer.train(_corpus_texts(pairs, schema))


def train_relation_model(
    model: RelationModel,
    train_pairs: list[PairExample],
    dev_pairs: list[PairExample],
    config: DrexConfig,
    epochs: int | None = None,
    seed: int = 0,
) -> TrainHistory:
    epochs = config.max_epochs_baseline if epochs is None else epochs
    rng = random.Random(seed)
    optimizer = make_optimizer(model.parameters(), config)
    max_len = model.encoder.config.max_length
    inputs = [build_input(None, p.subject, p.object, p.dialogue, model.tokenizer, max_len) for p in train_pairs]
    targets = torch.tensor([model.schema.label_vector(p.relations) for p in train_pairs])

    history = TrainHistory()
    best_state = copy.deepcopy(model.state_dict())
    for epoch in range(epochs):
        model.train()
        losses = []
        for batch in _batches(len(inputs), config.batch_size, rng):
            optimizer.zero_grad()
            loss = model.batch_loss([inputs[i] for i in batch], targets[batch])
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        report, _ = evaluate_relation_model(model, dev_pairs, config.prediction_threshold)
        record = EpochRecord(epoch, float(np.mean(losses)), report.f1)
        history.records.append(record)
        logger.info("relation epoch %d: loss %.4f dev F1 %.4f", epoch, record.train_loss, record.dev_metric)
        if record.dev_metric > history.best_metric:
            history.best_metric = record.dev_metric
            history.best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())
    model.load_state_dict(best_state)
    model.eval()
    return history


def _span_batch_loss(model: SpanModel, items, indices) -> torch.Tensor:
    inputs = [items[i][0] for i in indices]
    states, _ = model.encode_batch(inputs)
    losses = []
    for row, i in enumerate(indices):
        inp, gold = items[i]
        dist = span_distributions(states[row, : len(inp)], model.extractor)
        losses.append(span_loss(dist, gold, inp.dialogue_len))
    return torch.stack(losses).mean()


def train_span_model(
    model: SpanModel,
    train_pairs: list[PairExample],
    dev_pairs: list[PairExample],
    config: DrexConfig,
    epochs: int | None = None,
    seed: int = 0,
) -> TrainHistory:
    """Supervised span training over labeled (relation, trigger) items.

    Unalignable triggers are dropped here, mirroring the loader report.
    """
    epochs = config.max_epochs_baseline if epochs is None else epochs
    rng = random.Random(seed)
    optimizer = make_optimizer(model.parameters(), config)
    max_len = model.encoder.config.max_length

    items = []
    for pair, relation, trigger in span_supervision_examples(train_pairs, model.schema):
        phrase = relation_to_natural_language(relation, model.schema)
        inp = build_input(phrase, pair.subject, pair.object, pair.dialogue, model.tokenizer, max_len)
        gold = align_trigger(trigger, inp, model.tokenizer)
        if gold is not None:
            items.append((inp, gold))
    if not items:
        raise ConfigError("no alignable trigger supervision in the training data")

    history = TrainHistory()
    best_state = copy.deepcopy(model.state_dict())
    for epoch in range(epochs):
        model.train()
        losses = []
        for batch in _batches(len(items), config.batch_size, rng):
            optimizer.zero_grad()
            loss = _span_batch_loss(model, items, batch)
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        report = evaluate_span_model(model, dev_pairs, config.max_span_len)
        record = EpochRecord(epoch, float(np.mean(losses)), report.token_f1)
        history.records.append(record)
        logger.info("span epoch %d: loss %.4f dev token F1 %.4f", epoch, record.train_loss, record.dev_metric)
        if record.dev_metric > history.best_metric:
            history.best_metric = record.dev_metric
            history.best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())
    model.load_state_dict(best_state)
    model.eval()
    return history


def train_joint_model(
    model: JointModel,
    train_pairs: list[PairExample],
    dev_pairs: list[PairExample],
    config: DrexConfig,
    epochs: int | None = None,
    seed: int = 0,
) -> TrainHistory:
    """Joint classification + span training on the standard (s, o, d) input.

    Items without a labeled trigger contribute zero span loss.  When a pair
    has several labeled triggers, the first (in data order) supervises the
    single span head.
    """
    epochs = config.max_epochs_baseline if epochs is None else epochs
    rng = random.Random(seed)
    optimizer = make_optimizer(model.parameters(), config)
    max_len = model.encoder.config.max_length

    prepared = []
    for pair in train_pairs:
        inp = build_input(None, pair.subject, pair.object, pair.dialogue, model.tokenizer, max_len)
        gold_span = None
        for relation in pair.relations:
            trigger = pair.triggers.get(relation)
            if trigger and relation != model.schema.no_relation:
                gold_span = align_trigger(trigger, inp, model.tokenizer)
                if gold_span is not None:
                    break
        target = torch.tensor(model.schema.label_vector(pair.relations))
        prepared.append((inp, target, gold_span))

    history = TrainHistory()
    best_state = copy.deepcopy(model.state_dict())
    for epoch in range(epochs):
        model.train()
        losses = []
        for batch in _batches(len(prepared), config.batch_size, rng):
            optimizer.zero_grad()
            inputs = [prepared[i][0] for i in batch]
            targets = torch.stack([prepared[i][1] for i in batch])
            states, _ = model.encode_batch(inputs)
            probs = torch.sigmoid(model.classifier.logits(states[:, 0, :]))
            item_losses = []
            for row, i in enumerate(batch):
                inp, _, gold_span = prepared[i]
                l_re = relation_loss(probs[row], targets[row])
                if gold_span is None:
                    l_ex = torch.zeros(())
                else:
                    dist = span_distributions(states[row, : len(inp)], model.extractor)
                    l_ex = span_loss(dist, gold_span, inp.dialogue_len)
                item_losses.append(joint_loss(l_re, l_ex, config.alpha))
            loss = torch.stack(item_losses).mean()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        report, _ = _evaluate_joint(model, dev_pairs, config)
        record = EpochRecord(epoch, float(np.mean(losses)), report.f1)
        history.records.append(record)
        logger.info("joint epoch %d: loss %.4f dev F1 %.4f", epoch, record.train_loss, record.dev_metric)
        if record.dev_metric > history.best_metric:
            history.best_metric = record.dev_metric
            history.best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())
    model.load_state_dict(best_state)
    model.eval()
    return history


def _evaluate_joint(model: JointModel, pairs: list[PairExample], config: DrexConfig):
    """Relation metrics of the joint model's classification head."""
    from .metrics import MetricReport, mrr, ranked_prediction, relation_f1

    model.eval()
    max_len = model.encoder.config.max_length
    preds = []
    with torch.no_grad():
        for pair in pairs:
            inp = build_input(None, pair.subject, pair.object, pair.dialogue, model.tokenizer, max_len)
            scores, _ = model.predict(inp, config.max_span_len)
            preds.append(
                ranked_prediction(
                    pair.pair_id, scores.probs.double().numpy(), pair.relations,
                    model.schema, config.prediction_threshold,
                )
            )
    precision, recall, f1 = relation_f1(preds)
    return MetricReport(f1=f1, precision=precision, recall=recall, mrr=mrr(preds)), preds


def train_drex(
    system: DrexSystem,
    train_pairs: list[PairExample],
    dev_pairs: list[PairExample],
    epochs: int | None = None,
    seed: int = 0,
) -> tuple[TrainHistory, list[StepReport]]:
    """Policy + re-ranker training; the ranker never changes."""
    config = system.config
    epochs = config.max_epochs_drex if epochs is None else epochs
    rng = random.Random(seed)
    generator = torch.Generator().manual_seed(seed)
    optimizer = make_optimizer(system.trainable_parameters(), config)

    history = TrainHistory()
    reports: list[StepReport] = []
    best_state = (
        copy.deepcopy(system.explainer.state_dict()),
        copy.deepcopy(system.reranker.state_dict()),
    )
    for epoch in range(epochs):
        epoch_losses = []
        for batch in _batches(len(train_pairs), config.batch_size, rng):
            report = drex_train_step(system, [train_pairs[i] for i in batch], optimizer, generator)
            reports.append(report)
            epoch_losses.append(report.mean_rr_loss)
        dev_report, _ = evaluate_system(system, dev_pairs)
        record = EpochRecord(epoch, float(np.mean(epoch_losses)), dev_report.f1)
        history.records.append(record)
        logger.info("drex epoch %d: RR loss %.4f dev F1 %.4f", epoch, record.train_loss, record.dev_metric)
        if record.dev_metric > history.best_metric:
            history.best_metric = record.dev_metric
            history.best_epoch = epoch
            best_state = (
                copy.deepcopy(system.explainer.state_dict()),
                copy.deepcopy(system.reranker.state_dict()),
            )
    system.explainer.load_state_dict(best_state[0])
    system.reranker.load_state_dict(best_state[1])
    system.eval_mode()
    return history, reports
