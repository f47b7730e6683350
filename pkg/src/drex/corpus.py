"""Data model and preprocessing for dialogue relation extraction.

Covers loading DialogRE-format JSON, rendering dialogues to text, building
the model input sequence `[CLS]{prefix[SEP]}subject[SEP]object[SEP]dialogue`,
aligning trigger text to token spans, and masking spans out of an input.
All functions here are pure over immutable inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import BoundsError, InputError, ParseError, SchemaError
from .schema import RelationSchema, DIALOGRE_SCHEMA
from .tokenization import Tokenizer


@dataclass(frozen=True)
class Dialogue:
    """A multi-party dialogue: ordered (speaker, utterance) turns."""

    turns: tuple[tuple[str, str], ...]
    id: str = ""

    def __post_init__(self):
        if not self.turns:
            raise ParseError(f"dialogue {self.id!r} has no turns")
        for speaker, _ in self.turns:
            if not speaker:
                raise ParseError(f"dialogue {self.id!r} has a turn with an empty speaker id")

    def render(self) -> str:
        """Flatten to text: one "speaker: utterance" line per turn."""
        return "\n".join(f"{speaker}: {utterance}" for speaker, utterance in self.turns)


@dataclass(frozen=True)
class RelationalTriple:
    """One entity pair with its gold relation set and per-relation triggers.

    `relations` holds every listed label for the pair, including the
    no-relation marker when that is how the pair is annotated.  `triggers`
    maps a relation label to its (single) nonempty trigger text.
    """

    subject: str
    object: str
    relations: tuple[str, ...]
    triggers: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.relations:
            raise ParseError(f"pair ({self.subject!r}, {self.object!r}) lists no relations")

    @property
    def triple_count(self) -> int:
        return len(self.relations)

    @property
    def trigger_count(self) -> int:
        return len(self.triggers)


@dataclass(frozen=True)
class DialogueExample:
    dialogue: Dialogue
    triples: tuple[RelationalTriple, ...]


@dataclass(frozen=True)
class DatasetSplit:
    examples: tuple[DialogueExample, ...]
    split_name: str

    @property
    def triple_count(self) -> int:
        return sum(t.triple_count for ex in self.examples for t in ex.triples)

    @property
    def trigger_count(self) -> int:
        return sum(t.trigger_count for ex in self.examples for t in ex.triples)


@dataclass(frozen=True)
class TriggerSpan:
    """Inclusive token span inside the dialogue region of a ModelInput."""

    start_token: int
    end_token: int
    source_text: str = ""

    def __post_init__(self):
        if self.start_token > self.end_token:
            raise BoundsError(f"span start {self.start_token} > end {self.end_token}")


@dataclass(frozen=True)
class ModelInput:
    """Token sequence `[CLS]{prefix[SEP]}s[SEP]o[SEP]d` with region bookkeeping.

    `prefix_len` counts every token before the dialogue region; the dialogue
    occupies positions [prefix_len, prefix_len + dialogue_len).  Character
    spans index into `dialogue_text` so token spans can be rendered back to
    text exactly.
    """

    token_ids: tuple[int, ...]
    prefix_len: int
    dialogue_len: int
    dialogue_text: str
    dialogue_char_spans: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.prefix_len + self.dialogue_len != len(self.token_ids):
            raise InputError("prefix_len + dialogue_len must equal the total token count")
        if len(self.dialogue_char_spans) != self.dialogue_len:
            raise InputError("one character span is required per dialogue token")

    def __len__(self) -> int:
        return len(self.token_ids)

    @property
    def dialogue_region(self) -> tuple[int, int]:
        """Half-open [start, end) token range of the dialogue."""
        return self.prefix_len, self.prefix_len + self.dialogue_len

    def span_text(self, start_token: int, end_token: int) -> str:
        """Dialogue text covered by an inclusive token span (input coordinates)."""
        lo, hi = self.dialogue_region
        if not (lo <= start_token <= end_token < hi):
            raise BoundsError(f"span ({start_token}, {end_token}) outside dialogue region [{lo}, {hi})")
        cs = self.dialogue_char_spans[start_token - lo][0]
        ce = self.dialogue_char_spans[end_token - lo][1]
        return self.dialogue_text[cs:ce]


def load_dialogre(path: str | Path, split_name: str, schema: RelationSchema = DIALOGRE_SCHEMA) -> DatasetSplit:
    """Load a DialogRE-format JSON file.

    The file is a list of entries; each entry is a 2-element array of
    [turn_strings, relation_objects].  A relation object carries x, y, r
    (list of labels) and t (list of trigger strings, possibly empty).  Empty
    trigger strings are treated as absent.  Labels outside the schema (and
    not the no-relation marker) raise SchemaError.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise ParseError(f"{path}: top level must be a list of entries")

    examples = []
    for idx, entry in enumerate(raw):
        try:
            turn_strings, relation_objects = entry
        except (TypeError, ValueError):
            raise ParseError(f"{path}: entry {idx} is not a [turns, relations] pair") from None
        turns = []
        for turn in turn_strings:
            speaker, sep, utterance = str(turn).partition(":")
            if not sep or not speaker.strip():
                # keep the line; attribute it to an unnamed speaker
                speaker, utterance = "Speaker", str(turn)
            turns.append((speaker.strip(), utterance.lstrip(" ")))
        triples = []
        for rel in relation_objects:
            labels = list(rel.get("r", []))
            if not labels:
                raise ParseError(f"{path}: entry {idx} has a relation object with no labels")
            for label in labels:
                if not schema.is_known(label):
                    raise SchemaError(f"{path}: entry {idx}: unknown relation label {label!r}")
            trigger_texts = list(rel.get("t", []))
            triggers = {}
            for label, trig in zip(labels, trigger_texts):
                if trig:
                    triggers[label] = trig
            triples.append(
                RelationalTriple(
                    subject=str(rel["x"]),
                    object=str(rel["y"]),
                    relations=tuple(labels),
                    triggers=triggers,
                )
            )
        dialogue = Dialogue(turns=tuple(turns), id=f"{split_name}-{idx}")
        examples.append(DialogueExample(dialogue=dialogue, triples=tuple(triples)))
    return DatasetSplit(examples=tuple(examples), split_name=split_name)


def build_input(
    relation_or_explanation: str | None,
    subject: str,
    object: str,
    dialogue: Dialogue,
    tokenizer: Tokenizer,
    max_length: int | None = None,
) -> ModelInput:
    """Assemble `[CLS]{r/ex[SEP]}s[SEP]o[SEP]d` as token ids.

    An empty prefix string is treated as absent.  When `max_length` is given
    and the sequence is too long, dialogue tokens are dropped from the end;
    the prefix is never truncated.
    """
    if not subject or not object:
        raise InputError("subject and object must be nonempty")
    st = tokenizer.special_tokens
    cls_id = tokenizer.token_id(st.sequence_start)
    sep_id = tokenizer.token_id(st.separator)

    ids: list[int] = [cls_id]
    if relation_or_explanation:
        ids.extend(tokenizer.encode(relation_or_explanation))
        ids.append(sep_id)
    ids.extend(tokenizer.encode(subject))
    ids.append(sep_id)
    ids.extend(tokenizer.encode(object))
    ids.append(sep_id)
    prefix_len = len(ids)

    text = dialogue.render()
    d_ids, d_spans = tokenizer.encode_with_offsets(text)
    if max_length is not None:
        budget = max_length - prefix_len
        if budget < 0:
            raise InputError(f"prefix ({prefix_len} tokens) exceeds max_length {max_length}")
        d_ids, d_spans = d_ids[:budget], d_spans[:budget]
    ids.extend(d_ids)

    return ModelInput(
        token_ids=tuple(ids),
        prefix_len=prefix_len,
        dialogue_len=len(d_ids),
        dialogue_text=text,
        dialogue_char_spans=tuple(d_spans),
    )


def align_trigger(trigger_text: str, input: ModelInput, tokenizer: Tokenizer) -> TriggerSpan | None:
    """Token span of the first occurrence of `trigger_text` in the dialogue.

    Occurrences are located by exact, case-sensitive substring match on the
    dialogue text and mapped to tokens via character offsets.  An occurrence
    only counts when it cleanly covers whole tokens that survived truncation;
    otherwise the next occurrence is tried.  Returns None when no occurrence
    survives.
    """
    if not trigger_text:
        return None
    text = input.dialogue_text
    spans = input.dialogue_char_spans
    search_from = 0
    while True:
        cs = text.find(trigger_text, search_from)
        if cs < 0:
            return None
        ce = cs + len(trigger_text)
        covered = [i for i, (s, e) in enumerate(spans) if s < ce and e > cs]
        if covered:
            first, last = covered[0], covered[-1]
            # reject matches that start or end mid-token
            if spans[first][0] >= cs and spans[last][1] <= ce:
                lo = input.prefix_len
                return TriggerSpan(start_token=lo + first, end_token=lo + last, source_text=trigger_text)
        search_from = cs + 1


def mask_span(input: ModelInput, span: TriggerSpan | None, tokenizer: Tokenizer) -> ModelInput:
    """Replace every token in the (inclusive) span with the mask token.

    With `span=None` the input is returned unchanged.  The span must lie
    inside the dialogue region; lengths and all other positions are kept.
    """
    if span is None:
        return input
    lo, hi = input.dialogue_region
    if not (lo <= span.start_token and span.end_token < hi):
        raise BoundsError(
            f"span ({span.start_token}, {span.end_token}) outside dialogue region [{lo}, {hi})"
        )
    mask_id = tokenizer.token_id(tokenizer.special_tokens.mask)
    ids = list(input.token_ids)
    for pos in range(span.start_token, span.end_token + 1):
        ids[pos] = mask_id
    return replace(input, token_ids=tuple(ids))


def dialogue_span_from_input(span: tuple[int, int], input: ModelInput) -> tuple[int, int]:
    """Input-coordinate (start, end) -> dialogue-relative coordinates."""
    return span[0] - input.prefix_len, span[1] - input.prefix_len


def dialogue_span_to_input(span: tuple[int, int], input: ModelInput) -> TriggerSpan | None:
    """Dialogue-relative (start, end) -> a span in this input's coordinates.

    Returns None when the span fell entirely beyond this input's (possibly
    truncated) dialogue; the end is clipped to the last surviving token.
    """
    start, end = span
    if start >= input.dialogue_len:
        return None
    end = min(end, input.dialogue_len - 1)
    return TriggerSpan(start_token=input.prefix_len + start, end_token=input.prefix_len + end)


@dataclass(frozen=True)
class PairExample:
    """Flattened per-entity-pair view used by training and evaluation."""

    dialogue: Dialogue
    subject: str
    object: str
    relations: tuple[str, ...]
    triggers: dict[str, str]
    pair_id: str

    def gold_labels(self, schema: RelationSchema) -> tuple[str, ...]:
        return tuple(r for r in self.relations if r != schema.no_relation)


def pair_examples(split: DatasetSplit) -> list[PairExample]:
    out = []
    for ex in split.examples:
        for i, triple in enumerate(ex.triples):
            out.append(
                PairExample(
                    dialogue=ex.dialogue,
                    subject=triple.subject,
                    object=triple.object,
                    relations=triple.relations,
                    triggers=triple.triggers,
                    pair_id=f"{ex.dialogue.id}#{i}",
                )
            )
    return out


@dataclass(frozen=True)
class LoadReport:
    """Machine-readable summary of a loaded split."""

    split_name: str
    dialogues: int
    relational_triples: int
    triggers: int
    aligned_triggers: int | None = None
    dropped_triggers: int | None = None

    def to_json(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def load_report(
    split: DatasetSplit,
    tokenizer: Tokenizer | None = None,
    max_length: int | None = None,
) -> LoadReport:
    """Split statistics; with a tokenizer, also counts trigger alignability.

    A trigger counts as aligned when its text maps onto whole dialogue tokens
    of the input built for its pair (no relation prefix).  Unalignable
    triggers are dropped from supervision and reported here.
    """
    aligned = dropped = None
    if tokenizer is not None:
        aligned = dropped = 0
        for pair in pair_examples(split):
            if not pair.triggers:
                continue
            inp = build_input(None, pair.subject, pair.object, pair.dialogue, tokenizer, max_length)
            for trig in pair.triggers.values():
                if align_trigger(trig, inp, tokenizer) is None:
                    dropped += 1
                else:
                    aligned += 1
    return LoadReport(
        split_name=split.split_name,
        dialogues=len(split.examples),
        relational_triples=split.triple_count,
        triggers=split.trigger_count,
        aligned_triggers=aligned,
        dropped_triggers=dropped,
    )
