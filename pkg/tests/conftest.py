import json

import pytest
import torch

from drex.corpus import Dialogue, PairExample, load_dialogre, pair_examples
from drex.encoder import EncoderConfig, TinyEncoder
from drex.models import JointModel, RelationModel, SpanModel
from drex.schema import RelationSchema
from drex.tokenization import WordTokenizer

torch.set_num_threads(1)

SMALL_SCHEMA = RelationSchema(labels=("per:friends", "per:roommate", "per:boss"))

SAMPLE_TURNS = (
    ("Speaker 1", "hey did you meet my best friend yesterday"),
    ("Speaker 2", "sure we share the flat now you know"),
    ("Speaker 1", "right you two share the flat since june"),
)


@pytest.fixture
def dialogue():
    return Dialogue(turns=SAMPLE_TURNS, id="d0")


@pytest.fixture
def tokenizer(dialogue):
    texts = [dialogue.render(), "Speaker 1", "Speaker 2", "person friends", "person roommate", "person boss"]
    return WordTokenizer.train(texts)


@pytest.fixture
def pair(dialogue):
    return PairExample(
        dialogue=dialogue,
        subject="Speaker 1",
        object="Speaker 2",
        relations=("per:friends", "per:roommate"),
        triggers={"per:friends": "best friend", "per:roommate": "share the flat"},
        pair_id="d0#0",
    )


def make_relation_model(tokenizer, schema=SMALL_SCHEMA, hidden=32, seed=0, max_length=128):
    torch.manual_seed(seed)
    config = EncoderConfig(hidden_size=hidden, max_length=max_length, vocab_size=tokenizer.vocab_size)
    return RelationModel(TinyEncoder(config), tokenizer, schema)


def make_span_model(tokenizer, schema=SMALL_SCHEMA, hidden=32, seed=1, max_length=128):
    torch.manual_seed(seed)
    config = EncoderConfig(hidden_size=hidden, max_length=max_length, vocab_size=tokenizer.vocab_size)
    return SpanModel(TinyEncoder(config), tokenizer, schema)


def make_joint_model(tokenizer, schema=SMALL_SCHEMA, hidden=32, seed=2, max_length=128):
    torch.manual_seed(seed)
    config = EncoderConfig(hidden_size=hidden, max_length=max_length, vocab_size=tokenizer.vocab_size)
    return JointModel(TinyEncoder(config), tokenizer, schema)


def write_dialogre_file(path, entries):
    path.write_text(json.dumps(entries))
    return path


@pytest.fixture
def dialogre_file(tmp_path):
    entries = [
        [
            [f"{s}: {u}" for s, u in SAMPLE_TURNS],
            [
                {
                    "x": "Speaker 1",
                    "y": "Speaker 2",
                    "x_type": "PER",
                    "y_type": "PER",
                    "r": ["per:friends", "per:roommate"],
                    "rid": [9, 12],
                    "t": ["best friend", ""],
                },
                {
                    "x": "Speaker 2",
                    "y": "Speaker 1",
                    "x_type": "PER",
                    "y_type": "PER",
                    "r": ["unanswerable"],
                    "rid": [37],
                    "t": [""],
                },
            ],
        ]
    ]
    return write_dialogre_file(tmp_path / "mini.json", entries)


@pytest.fixture
def mini_split(dialogre_file):
    return load_dialogre(dialogre_file, "train", schema=RelationSchema(labels=("per:friends", "per:roommate")))


def pairs_of(split):
    return pair_examples(split)
