import pytest

from drex.errors import SchemaError
from drex.schema import (
    DIALOGRE_LABELS,
    DIALOGRE_SCHEMA,
    RelationSchema,
    UNANSWERABLE,
    relation_to_natural_language,
)


def test_dialogre_schema_has_36_types():
    assert len(DIALOGRE_LABELS) == 36
    assert DIALOGRE_SCHEMA.size == 36
    assert UNANSWERABLE not in DIALOGRE_LABELS


def test_positive_impression_phrase():
    assert relation_to_natural_language("per:positive_impression") == "person positive impression"


def test_friends_phrase():
    assert relation_to_natural_language("per:friends") == "person friends"


def test_all_labels_phrase_cleanly():
    for label in DIALOGRE_LABELS:
        phrase = relation_to_natural_language(label)
        assert phrase
        assert "_" not in phrase
        assert ":" not in phrase


def test_unknown_label_rejected():
    with pytest.raises(SchemaError):
        relation_to_natural_language("per:not_a_relation")


def test_no_relation_marker_is_not_phrasable():
    with pytest.raises(SchemaError):
        relation_to_natural_language(UNANSWERABLE)


def test_label_vector_multi_hot():
    schema = RelationSchema(labels=("a:x", "a:y", "a:z"))
    assert schema.label_vector(("a:x", "a:z")) == [1.0, 0.0, 1.0]
    assert schema.label_vector((schema.no_relation,)) == [0.0, 0.0, 0.0]


def test_label_vector_rejects_unknown():
    schema = RelationSchema(labels=("a:x",))
    with pytest.raises(SchemaError):
        schema.label_vector(("a:q",))


def test_schema_round_trip(tmp_path):
    schema = RelationSchema(labels=("a:x", "a:y"), no_relation="none")
    schema.save(tmp_path / "schema.json")
    loaded = RelationSchema.load(tmp_path / "schema.json")
    assert loaded == schema
