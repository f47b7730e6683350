"""Tokenizers used to build model inputs.

Two implementations share one interface: a whitespace+punctuation word
tokenizer with a vocabulary built from a text corpus (for the tiny encoder),
and an adapter over a pretrained fast tokenizer (for checkpoint encoders).
Both report character offsets so text spans can be mapped to token spans and
back without a lossy detokenization step.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol

from .errors import ConfigError

_WORD_RE = re.compile(r"\w+|[^\w\s]")


@dataclass(frozen=True)
class SpecialTokens:
    """Special token strings; the encoder config carries these so downstream
    code never branches on the tokenizer family."""

    sequence_start: str = "[CLS]"
    separator: str = "[SEP]"
    mask: str = "[MASK]"
    pad: str = "[PAD]"
    unknown: str = "[UNK]"

    def __post_init__(self):
        toks = (self.sequence_start, self.separator, self.mask, self.pad, self.unknown)
        if len(set(toks)) != len(toks):
            raise ConfigError("special tokens must be distinct")


class Tokenizer(Protocol):
    special_tokens: SpecialTokens

    @property
    def vocab_size(self) -> int: ...

    def encode(self, text: str) -> list[int]: ...

    def encode_with_offsets(self, text: str) -> tuple[list[int], list[tuple[int, int]]]: ...

    def token_id(self, token: str) -> int: ...


def word_spans(text: str) -> list[tuple[int, int]]:
    """Character spans of words and single punctuation marks, in order."""
    return [m.span() for m in _WORD_RE.finditer(text)]


class WordTokenizer:
    """Whitespace+punctuation tokenizer with a closed vocabulary.

    Words outside the vocabulary map to the unknown token.  The vocabulary is
    built from a training corpus with `WordTokenizer.train`.
    """

    def __init__(self, vocab: dict[str, int], special_tokens: SpecialTokens = SpecialTokens()):
        self.special_tokens = special_tokens
        self.vocab = dict(vocab)
        for tok in (
            special_tokens.pad,
            special_tokens.unknown,
            special_tokens.sequence_start,
            special_tokens.separator,
            special_tokens.mask,
        ):
            if tok not in self.vocab:
                self.vocab[tok] = len(self.vocab)
        self._unk = self.vocab[special_tokens.unknown]
        self.id_to_token = {i: t for t, i in self.vocab.items()}

    @classmethod
    def train(cls, texts: Iterable[str], special_tokens: SpecialTokens = SpecialTokens()) -> "WordTokenizer":
        vocab: dict[str, int] = {
            special_tokens.pad: 0,
            special_tokens.unknown: 1,
            special_tokens.sequence_start: 2,
            special_tokens.separator: 3,
            special_tokens.mask: 4,
        }
        for text in texts:
            for start, end in word_spans(text):
                word = text[start:end]
                if word not in vocab:
                    vocab[word] = len(vocab)
        return cls(vocab, special_tokens)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def token_id(self, token: str) -> int:
        return self.vocab.get(token, self._unk)

    def encode(self, text: str) -> list[int]:
        return self.encode_with_offsets(text)[0]

    def encode_with_offsets(self, text: str) -> tuple[list[int], list[tuple[int, int]]]:
        spans = word_spans(text)
        ids = [self.vocab.get(text[s:e], self._unk) for s, e in spans]
        return ids, spans

    def to_json(self) -> dict:
        return {
            "type": "word",
            "vocab": self.vocab,
            "special_tokens": {
                "sequence_start": self.special_tokens.sequence_start,
                "separator": self.special_tokens.separator,
                "mask": self.special_tokens.mask,
                "pad": self.special_tokens.pad,
                "unknown": self.special_tokens.unknown,
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> "WordTokenizer":
        st = SpecialTokens(**obj["special_tokens"])
        return cls(obj["vocab"], st)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: str | Path) -> "WordTokenizer":
        return cls.from_json(json.loads(Path(path).read_text()))


class PretrainedTokenizer:
    """Adapter over a Hugging Face fast tokenizer.

    Exposes the same surface as WordTokenizer; special token strings come
    from the checkpoint (e.g. <s>/</s>/<mask> for RoBERTa-family models).
    """

    def __init__(self, checkpoint: str):
        from transformers import AutoTokenizer  # heavy import kept local

        self.checkpoint = checkpoint
        self._tok = AutoTokenizer.from_pretrained(checkpoint, use_fast=True)
        self.special_tokens = SpecialTokens(
            sequence_start=self._tok.cls_token,
            separator=self._tok.sep_token,
            mask=self._tok.mask_token,
            pad=self._tok.pad_token,
            unknown=self._tok.unk_token or "[UNK]",
        )

    @property
    def vocab_size(self) -> int:
        return len(self._tok)

    def token_id(self, token: str) -> int:
        return self._tok.convert_tokens_to_ids(token)

    def encode(self, text: str) -> list[int]:
        return self._tok.encode(text, add_special_tokens=False)

    def encode_with_offsets(self, text: str) -> tuple[list[int], list[tuple[int, int]]]:
        out = self._tok(text, add_special_tokens=False, return_offsets_mapping=True)
        return list(out["input_ids"]), [tuple(span) for span in out["offset_mapping"]]
