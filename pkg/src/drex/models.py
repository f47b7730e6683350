"""Task models assembled from an encoder plus prediction heads.

A model bundles its encoder, head parameters, tokenizer, and relation schema
so checkpoints round-trip as one directory.  The joint model carries both
heads on one encoder and, by construction, emits exactly one span per input
no matter how many relations hold.
"""

from __future__ import annotations

import json
from pathlib import Path

import torch
from torch import nn

from .corpus import ModelInput
from .encoder import (
    EncoderOutput,
    TextEncoder,
    asdict_config,
    build_encoder,
    load_encoder_spec,
    save_encoder_spec,
)
from .errors import ConfigError
from .heads import (
    Explanation,
    RelationClassifier,
    RelationScores,
    SpanDistribution,
    SpanExtractor,
    classify,
    decode_explanation,
    relation_loss,
    span_distributions,
)
from .schema import RelationSchema
from .tokenization import Tokenizer


class TaskModel(nn.Module):
    kind = ""

    def __init__(self, encoder: TextEncoder, tokenizer: Tokenizer, schema: RelationSchema):
        super().__init__()
        self.encoder = encoder
        self.tokenizer = tokenizer
        self.schema = schema

    @property
    def pad_id(self) -> int:
        return self.tokenizer.token_id(self.tokenizer.special_tokens.pad)

    def encode(self, input: ModelInput) -> EncoderOutput:
        return self.encoder.encode(input)

    def encode_batch(self, inputs: list[ModelInput]) -> tuple[torch.Tensor, torch.Tensor]:
        return self.encoder.encode_batch(inputs, self.pad_id)


class RelationModel(TaskModel):
    """Multi-label relation scorer over (s, o, d) or (ex, s, o, d) inputs."""

    kind = "relation"

    def __init__(self, encoder, tokenizer, schema):
        super().__init__(encoder, tokenizer, schema)
        self.classifier = RelationClassifier(encoder.hidden_size, schema.size)

    def scores(self, input: ModelInput) -> RelationScores:
        return classify(self.encode(input).pooled_first, self.classifier)

    def probs(self, input: ModelInput) -> torch.Tensor:
        return self.scores(input).probs

    def batch_probs(self, inputs: list[ModelInput]) -> torch.Tensor:
        states, _ = self.encode_batch(inputs)
        return torch.sigmoid(self.classifier.logits(states[:, 0, :]))

    def batch_loss(self, inputs: list[ModelInput], targets: torch.Tensor) -> torch.Tensor:
        probs = self.batch_probs(inputs)
        losses = relation_loss(probs, targets.to(probs.dtype))
        return losses.mean()


class SpanModel(TaskModel):
    """Explanation extractor over (r, s, o, d) inputs."""

    kind = "span"

    def __init__(self, encoder, tokenizer, schema):
        super().__init__(encoder, tokenizer, schema)
        self.extractor = SpanExtractor(encoder.hidden_size)

    def distributions(self, input: ModelInput) -> SpanDistribution:
        return span_distributions(self.encode(input).token_states, self.extractor)

    def explain(
        self,
        input: ModelInput,
        max_span_len: int = 20,
        mode: str = "greedy",
        generator: torch.Generator | None = None,
    ) -> Explanation:
        dist = self.distributions(input)
        expl = decode_explanation(dist, input.prefix_len, max_span_len, mode, generator)
        if expl.span is not None:
            expl.text = input.span_text(*expl.span)
        return expl


class JointModel(TaskModel):
    """Shared encoder with both heads; one relation vector and one span per input."""

    kind = "joint"

    def __init__(self, encoder, tokenizer, schema):
        super().__init__(encoder, tokenizer, schema)
        self.classifier = RelationClassifier(encoder.hidden_size, schema.size)
        self.extractor = SpanExtractor(encoder.hidden_size)

    def predict(
        self, input: ModelInput, max_span_len: int = 20
    ) -> tuple[RelationScores, Explanation]:
        out = self.encode(input)
        scores = classify(out.pooled_first, self.classifier)
        dist = span_distributions(out.token_states, self.extractor)
        expl = decode_explanation(dist, input.prefix_len, max_span_len, mode="greedy")
        if expl.span is not None:
            expl.text = input.span_text(*expl.span)
        return scores, expl


_MODEL_KINDS = {m.kind: m for m in (RelationModel, SpanModel, JointModel)}


def save_model(model: TaskModel, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "kind": model.kind,
        "schema": model.schema.to_json(),
        "encoder": asdict_config(model.encoder.config),
    }
    (directory / "model.json").write_text(json.dumps(meta, indent=2))
    save_encoder_spec(model.encoder, model.tokenizer, directory)
    torch.save(model.state_dict(), directory / "weights.pt")


def load_model(directory: str | Path) -> TaskModel:
    directory = Path(directory)
    meta_path = directory / "model.json"
    if not meta_path.exists():
        raise ConfigError(f"no model checkpoint at {directory}")
    meta = json.loads(meta_path.read_text())
    encoder, tokenizer = load_encoder_spec(directory)
    schema = RelationSchema.from_json(meta["schema"])
    model = _MODEL_KINDS[meta["kind"]](encoder, tokenizer, schema)
    model.load_state_dict(torch.load(directory / "weights.pt", map_location="cpu", weights_only=True))
    model.eval()
    return model


def clone_model(model: TaskModel) -> TaskModel:
    """Fresh instance of the same architecture with copied weights."""
    encoder = build_encoder(model.encoder.config)
    copy = _MODEL_KINDS[model.kind](encoder, model.tokenizer, model.schema)
    copy.load_state_dict({k: v.clone() for k, v in model.state_dict().items()})
    return copy
