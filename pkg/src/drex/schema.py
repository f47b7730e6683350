"""Relation schemas and natural-language phrasing of relation labels.

A schema is the fixed set of substantive relation types a classifier scores,
plus the marker label used for entity pairs that hold no relation.  The
marker is accepted by data loaders but is not a class of the classifier and
is excluded from F1/MRR counting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import SchemaError

# DialogRE v2 label inventory, in rid order (rid = index + 1).
DIALOGRE_LABELS: tuple[str, ...] = (
    "per:positive_impression",
    "per:negative_impression",
    "per:acquaintance",
    "per:alumni",
    "per:boss",
    "per:subordinate",
    "per:client",
    "per:dates",
    "per:friends",
    "per:girl/boyfriend",
    "per:neighbor",
    "per:roommate",
    "per:children",
    "per:other_family",
    "per:parents",
    "per:siblings",
    "per:spouse",
    "per:place_of_residence",
    "per:place_of_birth",
    "per:visited_place",
    "per:origin",
    "per:employee_or_member_of",
    "per:schools_attended",
    "per:works",
    "per:age",
    "per:date_of_birth",
    "per:major",
    "per:place_of_work",
    "per:title",
    "per:alternate_names",
    "per:pet",
    "gpe:residents_of_place",
    "gpe:births_in_place",
    "gpe:visitors_of_place",
    "org:employees_or_members",
    "org:students",
)

UNANSWERABLE = "unanswerable"

# Namespace prefixes expanded when phrasing a label in natural language.
_NAMESPACE_WORDS = {"per": "person", "gpe": "gpe", "org": "org"}


@dataclass(frozen=True)
class RelationSchema:
    """The closed set of relation types plus the no-relation marker."""

    labels: tuple[str, ...]
    no_relation: str = UNANSWERABLE
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.labels:
            raise SchemaError("schema must define at least one relation label")
        if len(set(self.labels)) != len(self.labels):
            raise SchemaError("schema labels must be unique")
        if self.no_relation in self.labels:
            raise SchemaError("no-relation marker must not be a schema label")
        object.__setattr__(self, "_index", {r: i for i, r in enumerate(self.labels)})

    @property
    def size(self) -> int:
        return len(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self._index

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise SchemaError(f"unknown relation label: {label!r}") from None

    def is_known(self, label: str) -> bool:
        """True for schema labels and the no-relation marker."""
        return label in self._index or label == self.no_relation

    def label_vector(self, relations) -> list[float]:
        """Multi-hot target over schema labels; the no-relation marker maps to all zeros."""
        y = [0.0] * self.size
        for r in relations:
            if r == self.no_relation:
                continue
            y[self.index(r)] = 1.0
        return y

    def to_json(self) -> dict:
        return {"labels": list(self.labels), "no_relation": self.no_relation}

    @classmethod
    def from_json(cls, obj: dict) -> "RelationSchema":
        return cls(labels=tuple(obj["labels"]), no_relation=obj.get("no_relation", UNANSWERABLE))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "RelationSchema":
        return cls.from_json(json.loads(Path(path).read_text()))


DIALOGRE_SCHEMA = RelationSchema(labels=DIALOGRE_LABELS)


def relation_to_natural_language(label: str, schema: RelationSchema = DIALOGRE_SCHEMA) -> str:
    """Phrase a relation label in plain words, e.g. per:positive_impression ->
    "person positive impression".

    The namespace prefix is expanded ("per:" -> "person "), underscores become
    spaces.  Deterministic for a fixed schema; unknown labels raise SchemaError.
    """
    if label not in schema:
        raise SchemaError(f"unknown relation label: {label!r}")
    namespace, _, rest = label.partition(":")
    if rest:
        head = _NAMESPACE_WORDS.get(namespace, namespace)
        phrase = f"{head} {rest}"
    else:
        phrase = label
    return phrase.replace("_", " ")
