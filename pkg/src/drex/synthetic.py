"""Planted-trigger synthetic corpus for desk-scale experiments.

Each gold relation is signaled by a unique two-word phrase planted exactly
once inside one turn of the dialogue; the phrase's words appear nowhere
else, and the relation label spells out the same words, so every part of the
pipeline (classification, span supervision, rewards, leave-one-out masking)
has a verifiable ground truth.  Output files use the DialogRE JSON layout so
the standard loader applies unchanged.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, asdict
from pathlib import Path

from .schema import RelationSchema, UNANSWERABLE

# Two unique signal words per relation; the label spells them out.
_SIGNAL_WORDS = (
    ("amber", "lantern"),
    ("birch", "canoe"),
    ("cedar", "anchor"),
    ("dusk", "parade"),
    ("ember", "violin"),
    ("fable", "orchard"),
    ("glacier", "ribbon"),
    ("harbor", "mosaic"),
)

SYNTHETIC_LABELS = tuple(f"per:{a}_{b}" for a, b in _SIGNAL_WORDS)
SYNTHETIC_SCHEMA = RelationSchema(labels=SYNTHETIC_LABELS, no_relation=UNANSWERABLE)

_NOISE_WORDS = (
    "well", "you", "know", "that", "was", "today", "really", "about", "the",
    "and", "then", "maybe", "sure", "right", "okay", "listen", "honestly",
    "because", "later", "again", "anyway", "still", "pretty", "much", "time",
    "things", "went", "over", "there", "here", "just", "kind", "of", "busy",
)


def trigger_phrase(label: str) -> str:
    """The planted phrase for a synthetic relation label."""
    idx = SYNTHETIC_LABELS.index(label)
    return " ".join(_SIGNAL_WORDS[idx])


@dataclass
class SyntheticConfig:
    n_train: int = 480
    n_dev: int = 60
    n_test: int = 60
    seed: int = 13
    min_turns: int = 6
    max_turns: int = 12
    min_words: int = 2
    max_words: int = 5
    speakers: int = 4
    two_relation_rate: float = 0.3
    unanswerable_rate: float = 0.1
    trigger_label_rate_train: float = 0.4


def _noise_utterance(rng: random.Random, cfg: SyntheticConfig) -> list[str]:
    n = rng.randint(cfg.min_words, cfg.max_words)
    return [rng.choice(_NOISE_WORDS) for _ in range(n)]


def _generate_dialogue(rng: random.Random, cfg: SyntheticConfig, relations: list[str]) -> tuple[list[str], dict[str, str]]:
    """Turn strings plus the planted trigger text per relation."""
    n_turns = rng.randint(cfg.min_turns, cfg.max_turns)
    utterances = [_noise_utterance(rng, cfg) for _ in range(n_turns)]
    planted: dict[str, str] = {}
    turn_choices = rng.sample(range(n_turns), k=len(relations))
    for relation, turn_idx in zip(relations, turn_choices):
        phrase = trigger_phrase(relation)
        words = utterances[turn_idx]
        pos = rng.randint(0, len(words))
        utterances[turn_idx] = words[:pos] + phrase.split() + words[pos:]
        planted[relation] = phrase
    n_speakers = rng.randint(2, cfg.speakers)
    ids = rng.sample(range(1, cfg.speakers + 1), k=n_speakers)
    speakers = [f"Speaker {ids[t % n_speakers]}" for t in range(n_turns)]
    turns = [f"{spk}: {' '.join(words)}" for spk, words in zip(speakers, utterances)]
    return turns, planted


def _entity_pair(rng: random.Random, turns: list[str]) -> tuple[str, str]:
    present = sorted({t.split(":")[0] for t in turns})
    pair = rng.sample(present, k=2)
    return pair[0], pair[1]


def generate_split(cfg: SyntheticConfig, n_dialogues: int, rng: random.Random, label_rate: float) -> list:
    entries = []
    for i in range(n_dialogues):
        if rng.random() < cfg.unanswerable_rate:
            turns, _ = _generate_dialogue(rng, cfg, [])
            subject, obj = _entity_pair(rng, turns)
            rel_obj = {
                "x": subject, "y": obj, "x_type": "PER", "y_type": "PER",
                "r": [UNANSWERABLE], "rid": [len(SYNTHETIC_LABELS) + 1], "t": [""],
            }
            entries.append([turns, [rel_obj]])
            continue
        # guarantee schema coverage by cycling the first relation
        first = SYNTHETIC_LABELS[i % len(SYNTHETIC_LABELS)]
        relations = [first]
        if rng.random() < cfg.two_relation_rate:
            second = rng.choice([r for r in SYNTHETIC_LABELS if r != first])
            relations.append(second)
        turns, planted = _generate_dialogue(rng, cfg, relations)
        subject, obj = _entity_pair(rng, turns)
        triggers = [planted[r] if rng.random() < label_rate else "" for r in relations]
        rel_obj = {
            "x": subject, "y": obj, "x_type": "PER", "y_type": "PER",
            "r": relations, "rid": [SYNTHETIC_LABELS.index(r) + 1 for r in relations],
            "t": triggers,
        }
        entries.append([turns, [rel_obj]])
    return entries


def generate_corpus(cfg: SyntheticConfig, out_dir: str | Path) -> dict:
    """Write train/dev/test JSON plus the schema; returns a summary dict.

    Train triggers are labeled at `trigger_label_rate_train` (partial
    supervision); dev and test keep full labels so span metrics have gold.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = random.Random(cfg.seed)
    splits = {
        "train": generate_split(cfg, cfg.n_train, rng, cfg.trigger_label_rate_train),
        "dev": generate_split(cfg, cfg.n_dev, rng, 1.0),
        "test": generate_split(cfg, cfg.n_test, rng, 1.0),
    }
    for name, entries in splits.items():
        (out_dir / f"{name}.json").write_text(json.dumps(entries, indent=1))
    SYNTHETIC_SCHEMA.save(out_dir / "schema.json")
    summary = {
        "config": asdict(cfg),
        "dialogues": {name: len(entries) for name, entries in splits.items()},
        "labels": list(SYNTHETIC_LABELS),
    }
    (out_dir / "generation.json").write_text(json.dumps(summary, indent=2))
    return summary
