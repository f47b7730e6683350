"""Prediction heads, losses, and span decoding.

Relation classification is multi-label: one sigmoid per relation type over
the first-token vector, trained with per-relation binary cross-entropy
averaged over the K types.  Span extraction scores every token against
learned start/end vectors, softmax-normalized over the whole input; the
span loss is the per-token binary cross-entropy of those softmax outputs
against one-hot start/end targets, averaged over the dialogue length.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .corpus import TriggerSpan
from .errors import BoundsError, ConfigError, ShapeError

# Probabilities are clamped here before every log to keep losses finite.
PROB_EPS = 1e-12


class RelationClassifier(nn.Module):
    """Per-relation scoring matrix (K x H), no bias."""

    def __init__(self, hidden_size: int, num_relations: int):
        super().__init__()
        self.num_relations = num_relations
        self.weight = nn.Parameter(torch.empty(num_relations, hidden_size))
        nn.init.normal_(self.weight, std=0.02)

    def logits(self, pooled: torch.Tensor) -> torch.Tensor:
        if pooled.shape[-1] != self.weight.shape[1]:
            raise ShapeError(
                f"pooled vector of size {pooled.shape[-1]} does not match hidden size {self.weight.shape[1]}"
            )
        return pooled @ self.weight.T


@dataclass
class RelationScores:
    """Independent per-relation probabilities (no sum-to-one constraint)."""

    probs: torch.Tensor


class SpanExtractor(nn.Module):
    """Learned start and end scoring vectors."""

    def __init__(self, hidden_size: int):
        super().__init__()
        self.start_vector = nn.Parameter(torch.empty(hidden_size))
        self.end_vector = nn.Parameter(torch.empty(hidden_size))
        nn.init.normal_(self.start_vector, std=0.02)
        nn.init.normal_(self.end_vector, std=0.02)


@dataclass
class SpanDistribution:
    """Start/end probability vectors over every input token."""

    start_probs: torch.Tensor
    end_probs: torch.Tensor

    def __len__(self) -> int:
        return self.start_probs.shape[0]


@dataclass
class Explanation:
    """A decoded span, or None when the model abstains.

    Indices are positions in the input token sequence.  The log-probabilities
    are those of the chosen start/end tokens and keep their autograd graph.
    """

    span: tuple[int, int] | None
    log_prob_start: torch.Tensor
    log_prob_end: torch.Tensor
    text: str | None = None


def classify(pooled: torch.Tensor, classifier: RelationClassifier) -> RelationScores:
    """Sigmoid of the per-relation dot products with the pooled vector."""
    return RelationScores(probs=torch.sigmoid(classifier.logits(pooled)))


def _probs_of(scores) -> torch.Tensor:
    return scores.probs if isinstance(scores, RelationScores) else scores


def relation_loss(scores, y) -> torch.Tensor:
    """Mean per-relation binary cross-entropy against a multi-hot target."""
    probs = _probs_of(scores)
    if not torch.is_tensor(y):
        y = torch.tensor(y, dtype=probs.dtype, device=probs.device)
    if y.shape != probs.shape:
        raise ShapeError(f"target of shape {tuple(y.shape)} does not match scores {tuple(probs.shape)}")
    y = y.to(probs.dtype)
    term = y * torch.log(probs.clamp(min=PROB_EPS)) + (1.0 - y) * torch.log((1.0 - probs).clamp(min=PROB_EPS))
    return -term.mean(dim=-1)


def span_distributions(token_states: torch.Tensor, extractor: SpanExtractor) -> SpanDistribution:
    """Softmax over all tokens of the start/end scores (max-subtracted)."""
    if token_states.ndim != 2:
        raise ShapeError(f"token_states must be (length x H), got shape {tuple(token_states.shape)}")
    if token_states.shape[0] == 0:
        raise ShapeError("token_states must be nonempty")
    start_logits = token_states @ extractor.start_vector.to(token_states.dtype)
    end_logits = token_states @ extractor.end_vector.to(token_states.dtype)
    return SpanDistribution(
        start_probs=torch.softmax(start_logits, dim=0),
        end_probs=torch.softmax(end_logits, dim=0),
    )


def span_loss(dist: SpanDistribution, gold: TriggerSpan, dialogue_token_count: int) -> torch.Tensor:
    """Per-token binary cross-entropy of the start/end distributions.

    Targets are one-hot at the gold start/end.  Both position sums run over
    the dialogue tokens only and are averaged over the dialogue length.
    """
    length = len(dist)
    region_start = length - dialogue_token_count
    if not (region_start <= gold.start_token and gold.end_token < length):
        raise BoundsError(
            f"gold span ({gold.start_token}, {gold.end_token}) outside dialogue region [{region_start}, {length})"
        )
    p_start = dist.start_probs[region_start:]
    p_end = dist.end_probs[region_start:]
    y_start = torch.zeros_like(p_start)
    y_end = torch.zeros_like(p_end)
    y_start[gold.start_token - region_start] = 1.0
    y_end[gold.end_token - region_start] = 1.0

    def bce(p, y):
        return y * torch.log(p.clamp(min=PROB_EPS)) + (1.0 - y) * torch.log((1.0 - p).clamp(min=PROB_EPS))

    total = bce(p_start, y_start) + bce(p_end, y_end)
    return -total.sum() / dialogue_token_count


def decode_explanation(
    dist: SpanDistribution,
    prefix_len: int,
    max_span_len: int = 20,
    mode: str = "greedy",
    generator: torch.Generator | None = None,
) -> Explanation:
    """Pick a start/end pair from the distributions.

    Greedy: take the global argmax start and end; if either lands inside the
    prefix (first `prefix_len` tokens) there is no predicted explanation.
    When the end precedes the start, the start is kept and the end re-chosen
    as the argmax over [start, start + max_span_len) within the input.

    Sample: draw start and end from the distributions restricted to the
    dialogue region (the action space is the set of dialogue spans), end
    restricted further to [start, start + max_span_len).
    """
    length = len(dist)
    if prefix_len >= length:
        raise BoundsError(f"prefix_len {prefix_len} leaves no dialogue tokens in a length-{length} input")
    if mode == "greedy":
        i = int(torch.argmax(dist.start_probs))
        j = int(torch.argmax(dist.end_probs))
        if i < prefix_len or j < prefix_len:
            return Explanation(
                span=None,
                log_prob_start=torch.log(dist.start_probs[i].clamp(min=PROB_EPS)),
                log_prob_end=torch.log(dist.end_probs[j].clamp(min=PROB_EPS)),
            )
        window_end = min(i + max_span_len, length)
        j = i + int(torch.argmax(dist.end_probs[i:window_end]))
    elif mode == "sample":
        region = dist.start_probs[prefix_len:].detach()
        i = prefix_len + int(torch.multinomial(region, 1, generator=generator))
        window_end = min(i + max_span_len, length)
        end_region = dist.end_probs[i:window_end].detach()
        if float(end_region.sum()) <= 0.0:
            # total float underflow in the window; fall back to the mode
            j = i + int(torch.argmax(end_region))
        else:
            j = i + int(torch.multinomial(end_region, 1, generator=generator))
    else:
        raise ConfigError(f"unknown decode mode: {mode!r}")
    return Explanation(
        span=(i, j),
        log_prob_start=torch.log(dist.start_probs[i].clamp(min=PROB_EPS)),
        log_prob_end=torch.log(dist.end_probs[j].clamp(min=PROB_EPS)),
    )


def joint_loss(l_re, l_ex, alpha: float):
    """Weighted sum of the relation and span losses.

    Batch items without a labeled trigger contribute zero span loss; callers
    pass `l_ex=0` for them.
    """
    if not (0.0 <= alpha <= 1.0):
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha * l_re + (1.0 - alpha) * l_ex
