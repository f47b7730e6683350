"""Bidirectional text encoders behind a uniform interface.

Two providers: a small randomly initialized transformer whose vocabulary
comes from a word tokenizer trained on the corpus, and a wrapper over
pretrained masked-language-model checkpoints.  Both return per-token hidden
states plus the first-token vector used as the sequence representation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import torch
from torch import nn

from .corpus import ModelInput
from .errors import ConfigError, LengthError
from .tokenization import PretrainedTokenizer, SpecialTokens, Tokenizer, WordTokenizer


@dataclass(frozen=True)
class EncoderConfig:
    hidden_size: int
    max_length: int = 512
    checkpoint: str | None = None
    special_tokens: SpecialTokens = SpecialTokens()
    num_layers: int = 2
    num_heads: int = 2
    ffn_size: int = 128
    dropout: float = 0.0
    vocab_size: int | None = None

    def __post_init__(self):
        if self.hidden_size <= 0:
            raise ConfigError("hidden_size must be positive")
        if self.max_length <= 0:
            raise ConfigError("max_length must be positive")


@dataclass
class EncoderOutput:
    """Per-token states (length x H) and the first-token vector."""

    token_states: torch.Tensor
    pooled_first: torch.Tensor


class TextEncoder(nn.Module):
    """Common surface of all encoder providers."""

    config: EncoderConfig

    @property
    def hidden_size(self) -> int:
        return self.config.hidden_size

    def forward(self, ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def encode(self, input: ModelInput) -> EncoderOutput:
        """Encode one input; keeps the autograd graph so losses can backprop."""
        if len(input) > self.config.max_length:
            raise LengthError(
                f"input of {len(input)} tokens exceeds max_length {self.config.max_length}"
            )
        device = next(self.parameters()).device
        ids = torch.tensor([input.token_ids], dtype=torch.long, device=device)
        mask = torch.ones_like(ids, dtype=torch.bool)
        states = self.forward(ids, mask)[0]
        return EncoderOutput(token_states=states, pooled_first=states[0])

    def encode_batch(self, inputs: list[ModelInput], pad_id: int) -> tuple[torch.Tensor, torch.Tensor]:
        """Padded batch forward; returns (states [B, L, H], mask [B, L])."""
        if any(len(i) > self.config.max_length for i in inputs):
            raise LengthError(f"an input exceeds max_length {self.config.max_length}")
        device = next(self.parameters()).device
        max_len = max(len(i) for i in inputs)
        ids = torch.full((len(inputs), max_len), pad_id, dtype=torch.long, device=device)
        mask = torch.zeros((len(inputs), max_len), dtype=torch.bool, device=device)
        for row, inp in enumerate(inputs):
            ids[row, : len(inp)] = torch.tensor(inp.token_ids, dtype=torch.long, device=device)
            mask[row, : len(inp)] = True
        return self.forward(ids, mask), mask


class TinyEncoder(TextEncoder):
    """Small transformer encoder with learned positional embeddings.

    Default shape (2 layers, 2 heads, H=64) is the smallest configuration
    that reliably overfits the synthetic corpus on a CPU.
    """

    def __init__(self, config: EncoderConfig):
        super().__init__()
        if config.vocab_size is None:
            raise ConfigError("TinyEncoder requires vocab_size in its config")
        self.config = config
        self.token_embedding = nn.Embedding(config.vocab_size, config.hidden_size)
        self.position_embedding = nn.Embedding(config.max_length, config.hidden_size)
        # small embedding scale; unit-scale init makes the model memorize
        nn.init.normal_(self.token_embedding.weight, std=0.02)
        nn.init.normal_(self.position_embedding.weight, std=0.02)
        layer = nn.TransformerEncoderLayer(
            d_model=config.hidden_size,
            nhead=config.num_heads,
            dim_feedforward=config.ffn_size,
            dropout=config.dropout,
            activation="gelu",
            batch_first=True,
        )
        # one kernel path for train and eval keeps outputs bit-reproducible
        self.layers = nn.TransformerEncoder(layer, num_layers=config.num_layers, enable_nested_tensor=False)
        self.norm = nn.LayerNorm(config.hidden_size)

    def forward(self, ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        positions = torch.arange(ids.shape[1], device=ids.device).unsqueeze(0)
        x = self.token_embedding(ids) + self.position_embedding(positions)
        x = self.layers(x, src_key_padding_mask=~attention_mask)
        return self.norm(x)


class PretrainedEncoder(TextEncoder):
    """Wrapper over a pretrained transformer checkpoint (BERT/RoBERTa family)."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        if config.checkpoint is None:
            raise ConfigError("PretrainedEncoder requires a checkpoint name")
        from transformers import AutoModel  # heavy import kept local

        self.model = AutoModel.from_pretrained(config.checkpoint)
        hidden = self.model.config.hidden_size
        if config.hidden_size != hidden:
            config = EncoderConfig(**{**asdict_config(config), "hidden_size": hidden})
        self.config = config

    def forward(self, ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        out = self.model(input_ids=ids, attention_mask=attention_mask.long(), return_dict=True)
        return out.last_hidden_state


def asdict_config(config: EncoderConfig) -> dict:
    d = asdict(config)
    d["special_tokens"] = asdict(config.special_tokens)
    return d


def config_from_dict(obj: dict) -> EncoderConfig:
    obj = dict(obj)
    obj["special_tokens"] = SpecialTokens(**obj["special_tokens"])
    return EncoderConfig(**obj)


def build_encoder(config: EncoderConfig) -> TextEncoder:
    if config.checkpoint is None:
        return TinyEncoder(config)
    return PretrainedEncoder(config)


def build_tokenizer_for(config: EncoderConfig, corpus_texts=None) -> Tokenizer:
    """Tokenizer matching the encoder provider.

    For the tiny encoder this trains a word vocabulary on `corpus_texts`;
    for a checkpoint it loads the checkpoint's own tokenizer.
    """
    if config.checkpoint is None:
        if corpus_texts is None:
            raise ConfigError("a corpus is required to build the tiny-encoder vocabulary")
        return WordTokenizer.train(corpus_texts, config.special_tokens)
    return PretrainedTokenizer(config.checkpoint)


def save_encoder_spec(encoder: TextEncoder, tokenizer: Tokenizer, directory: str | Path) -> None:
    """Write the encoder config and tokenizer spec (no weights)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "encoder.json").write_text(json.dumps(asdict_config(encoder.config), indent=2))
    if isinstance(tokenizer, WordTokenizer):
        tokenizer.save(directory / "tokenizer.json")
    else:
        (directory / "tokenizer.json").write_text(
            json.dumps({"type": "pretrained", "checkpoint": encoder.config.checkpoint})
        )


def load_encoder_spec(directory: str | Path) -> tuple[TextEncoder, Tokenizer]:
    """Rebuild the encoder architecture and tokenizer; weights untouched."""
    directory = Path(directory)
    config = config_from_dict(json.loads((directory / "encoder.json").read_text()))
    tok_spec = json.loads((directory / "tokenizer.json").read_text())
    if tok_spec.get("type") == "pretrained":
        tokenizer: Tokenizer = PretrainedTokenizer(tok_spec["checkpoint"])
    else:
        tokenizer = WordTokenizer.from_json(tok_spec)
    return build_encoder(config), tokenizer


def save_encoder(encoder: TextEncoder, tokenizer: Tokenizer, directory: str | Path) -> None:
    """Checkpoint layout: weights + tokenizer spec + encoder config as JSON."""
    directory = Path(directory)
    save_encoder_spec(encoder, tokenizer, directory)
    torch.save(encoder.state_dict(), directory / "weights.pt")


def load_encoder(directory: str | Path) -> tuple[TextEncoder, Tokenizer]:
    directory = Path(directory)
    encoder, tokenizer = load_encoder_spec(directory)
    encoder.load_state_dict(torch.load(directory / "weights.pt", map_location="cpu", weights_only=True))
    encoder.eval()
    return encoder, tokenizer
