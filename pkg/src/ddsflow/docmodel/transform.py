"""Stateless data mapping: each rule reads the source document only."""

from __future__ import annotations

from dataclasses import dataclass, field

from .doc import Node
from .expr import ErrorValue, Expr, PathRef, eval_expr, parse_expr, print_expr
from .schema import parse_path


@dataclass(frozen=True)
class TransformRule:
    target: PathRef
    expr: Expr

    @classmethod
    def of(cls, target: str, expr: str) -> "TransformRule":
        return cls(parse_path(target), parse_expr(expr))

    def to_dict(self) -> dict:
        return {"target": str(self.target), "expr": print_expr(self.expr)}

    @classmethod
    def from_dict(cls, data: dict) -> "TransformRule":
        return cls.of(data["target"], data["expr"])


@dataclass(frozen=True)
class TransformError:
    index: int
    error: ErrorValue


@dataclass
class TransformResult:
    doc: Node
    errors: list[TransformError] = field(default_factory=list)


class _Builder:
    def __init__(self, name: str):
        self.name = name
        self.attrs: dict = {}
        self.children: list[_Builder] = []

    def child(self, name: str) -> "_Builder":
        for c in self.children:
            if c.name == name:
                return c
        c = _Builder(name)
        self.children.append(c)
        return c

    def build(self) -> Node:
        return Node(self.name, self.attrs, tuple(c.build() for c in self.children))


def apply_transform(rules: list[TransformRule], doc: Node, root: str = "out") -> TransformResult:
    """Evaluate every rule against ``doc`` and write results under ``$<root>``.

    Rules whose value is ERROR, or whose target is not an attribute under
    ``root``, are reported and skipped. Later rules overwrite earlier ones
    on the same target.
    """
    out = _Builder(root)
    errors: list[TransformError] = []
    for index, rule in enumerate(rules):
        segs = rule.target.segments
        if segs[0] != root or len(segs) < 2:
            errors.append(TransformError(index, ErrorValue(f"target {rule.target} is not an attribute of ${root}")))
            continue
        value = eval_expr(rule.expr, doc)
        if isinstance(value, ErrorValue):
            errors.append(TransformError(index, value))
            continue
        node = out
        for seg in segs[1:-1]:
            node = node.child(seg)
        node.attrs[segs[-1]] = value
    return TransformResult(out.build(), errors)
