"""Documents, outcome schemas, expressions and transformation rules."""

from .doc import DataFormat, Node, element, format_flat_record, lookup, parse_doc, serialize_doc
from .expr import (
    ErrorValue,
    Expr,
    PathRef,
    eval_expr,
    evaluate,
    is_error,
    parse_expr,
    print_expr,
)
from .schema import FieldType, OutcomeSchema, validate_outcome
from .transform import TransformResult, TransformRule, apply_transform

__all__ = [
    "DataFormat", "Node", "element", "format_flat_record", "lookup", "parse_doc", "serialize_doc",
    "ErrorValue", "Expr", "PathRef", "eval_expr", "evaluate", "is_error", "parse_expr", "print_expr",
    "FieldType", "OutcomeSchema", "validate_outcome",
    "TransformResult", "TransformRule", "apply_transform",
]
