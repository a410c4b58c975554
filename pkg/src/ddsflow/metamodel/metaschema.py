"""Built-in meta-model: one JSON Schema per description kind.

These schemas are the layer that every published description body is an
instance of. They are fixed at build time; callers get copies.
"""

from __future__ import annotations

import copy
from enum import Enum
from types import MappingProxyType

from jsonschema import Draft202012Validator

from ..errors import Violation


class Kind(str, Enum):
    ITEM_DESC = "ITEM_DESC"
    ACTIVITY_DESC = "ACTIVITY_DESC"
    OUTCOME_SCHEMA = "OUTCOME_SCHEMA"
    CONNECTOR_DESC = "CONNECTOR_DESC"


GRAPH_KINDS = frozenset({Kind.ITEM_DESC, Kind.ACTIVITY_DESC})

_DEFS = {
    "ident": {"type": "string", "minLength": 1},
    "ref": {
        "type": "object",
        "additionalProperties": False,
        "required": ["name", "version"],
        "properties": {
            "name": {"$ref": "#/$defs/ident"},
            "version": {"type": "integer", "minimum": 1},
        },
    },
    "gate": {"enum": ["NONE", "AND", "XOR"]},
    "node": {
        "type": "object",
        "additionalProperties": False,
        "required": ["id", "kind", "role", "split", "join"],
        "properties": {
            "id": {"type": "string"},
            "kind": {"enum": ["ELEMENTARY", "COMPOSITE"]},
            "role": {"type": "string"},
            "split": {"$ref": "#/$defs/gate"},
            "join": {"$ref": "#/$defs/gate"},
            "outcome_schema": {"$ref": "#/$defs/ref"},
            "subgraph": {"$ref": "#/$defs/graph"},
        },
    },
    "edge": {
        "type": "object",
        "additionalProperties": False,
        "required": ["from", "to", "is_default"],
        "properties": {
            "from": {"type": "string"},
            "to": {"type": "string"},
            "is_default": {"type": "boolean"},
            "guard": {"type": "string"},
        },
    },
    "graph": {
        "type": "object",
        "additionalProperties": False,
        "required": ["start", "end", "nodes", "edges"],
        "properties": {
            "start": {"$ref": "#/$defs/ident"},
            "end": {"$ref": "#/$defs/ident"},
            "nodes": {"type": "array", "items": {"$ref": "#/$defs/node"}},
            "edges": {"type": "array", "items": {"$ref": "#/$defs/edge"}},
        },
    },
    "path": {"type": "string", "pattern": r"^\$[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*$"},
}


def _schema(root: dict) -> dict:
    return {"$schema": "https://json-schema.org/draft/2020-12/schema", "$defs": _DEFS, **root}


_META_SCHEMAS = {
    Kind.ITEM_DESC: _schema({"$ref": "#/$defs/graph"}),
    Kind.ACTIVITY_DESC: _schema({"$ref": "#/$defs/graph"}),
    Kind.OUTCOME_SCHEMA: _schema({
        "type": "object",
        "additionalProperties": False,
        "required": ["required"],
        "properties": {
            "required": {
                "type": "array",
                "items": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["path", "type"],
                    "properties": {
                        "path": {"$ref": "#/$defs/path"},
                        "type": {"enum": ["STRING", "NUMBER", "BOOLEAN", "NODE"]},
                    },
                },
            }
        },
    }),
    Kind.CONNECTOR_DESC: _schema({
        "type": "object",
        "additionalProperties": False,
        "required": ["comm_mode", "data_format", "behaviour", "transform", "routes", "inbound_endpoint"],
        "properties": {
            "comm_mode": {"enum": ["INPROC", "FILE"]},
            "data_format": {"enum": ["CANONICAL", "FLAT_RECORD"]},
            "behaviour": {"$ref": "#/$defs/graph"},
            "transform": {
                "type": "array",
                "items": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["target", "expr"],
                    "properties": {"target": {"$ref": "#/$defs/path"}, "expr": {"type": "string"}},
                },
            },
            "routes": {
                "type": "array",
                "items": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["guard", "target"],
                    "properties": {"guard": {"type": "string"}, "target": {"$ref": "#/$defs/ident"}},
                },
            },
            "inbound_endpoint": {"$ref": "#/$defs/ident"},
        },
    }),
}

_VALIDATORS = {kind: Draft202012Validator(schema) for kind, schema in _META_SCHEMAS.items()}

# The layer above the meta-model. Documentation only: it names the language
# the meta-schemas are written in and is not consulted at runtime.
META_META_MODEL = MappingProxyType({
    "layer": "meta-meta-model",
    "language": "JSON Schema draft 2020-12",
    "describes": tuple(k.value for k in Kind),
    "mutable": False,
})


def meta_schema(kind: Kind | str) -> dict:
    return copy.deepcopy(_META_SCHEMAS[Kind(kind)])


def check_body(kind: Kind | str, body: object) -> list[Violation]:
    """Meta-schema conformance of a raw (dict) body."""
    validator = _VALIDATORS[Kind(kind)]
    out = []
    for err in sorted(validator.iter_errors(body), key=lambda e: list(e.absolute_path)):
        where = "/".join(str(p) for p in err.absolute_path) or "<body>"
        out.append(Violation("META_SCHEMA", where, err.message))
    return out
