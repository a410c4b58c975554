"""Guard / routing / transformation expression language.

Grammar (parentheses are accepted as a grouping term in addition to the
core rules, so every AST has a printable form)::

    expr := or ; or := and ("or" and)* ; and := not ("and" not)*
    not  := "not" not | cmp
    cmp  := term (("=="|"!="|"<"|"<="|">"|">=") term)?
    term := path | literal | func | "(" expr ")"
    func := ident "(" [expr ("," expr)*] ")"
    path := "$" ident ("." ident)*
    literal := number | dquoted-string | "true" | "false"

Evaluation is total. Ill-typed operations produce an :class:`ErrorValue`
which propagates through every operator; nothing raises at eval time.

Coercion table (comparisons)::

    number  vs number          numeric
    string  vs string          ==/!= equality, ordering by code point
    number  vs decimal string  string coerced to number, numeric
    number  vs other string    ERROR
    boolean vs boolean         ==/!= only; ordering is ERROR
    any other mix              ERROR
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Union

from ..errors import ParseError
from .doc import Node, lookup

NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?")
IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
KEYWORDS = frozenset({"and", "or", "not", "true", "false"})
COMPARATORS = ("==", "!=", "<=", ">=", "<", ">")
FUNCTIONS = frozenset({"exists", "concat", "num", "str"})


@dataclass(frozen=True)
class ErrorValue:
    reason: str = ""

    def __bool__(self) -> bool:  # guards: ERROR is never "true"
        return False

    def __repr__(self) -> str:
        return f"ERROR({self.reason})"


Value = Union[str, int, float, bool, ErrorValue]


def is_error(value: object) -> bool:
    return isinstance(value, ErrorValue)


# --- AST ---------------------------------------------------------------------

@dataclass(frozen=True)
class Literal:
    value: str | int | float | bool


@dataclass(frozen=True)
class PathRef:
    segments: tuple[str, ...]

    @property
    def root(self) -> str:
        return self.segments[0]

    def __str__(self) -> str:
        return "$" + ".".join(self.segments)


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["Expr", ...] = ()


@dataclass(frozen=True)
class Compare:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class And:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Or:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Not:
    operand: "Expr"


Expr = Union[Literal, PathRef, Call, Compare, And, Or, Not]


# --- tokenizer ---------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<path>\$[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*)
  | (?P<op>==|!=|<=|>=|<|>|\(|\)|,)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _locate(text: str, pos: int) -> tuple[int, int]:
    line = text.count("\n", 0, pos) + 1
    return line, pos - (text.rfind("\n", 0, pos) + 1) + 1


def _tokenize(text: str) -> list[_Tok]:
    out: list[_Tok] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", *_locate(text, pos))
        if m.lastgroup != "ws":
            out.append(_Tok(m.lastgroup or "", m.group(), pos))
        pos = m.end()
    out.append(_Tok("eof", "", len(text)))
    return out


def _number(text: str) -> int | float | None:
    if NUMBER_RE.fullmatch(text) is None:
        return None
    if "." in text or "e" in text or "E" in text:
        value = float(text)
        return value if math.isfinite(value) else None
    return int(text)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def _fail(self, msg: str, tok: _Tok) -> ParseError:
        return ParseError(msg, *_locate(self.text, tok.pos))

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str, text: str) -> None:
        tok = self.take()
        if tok.kind != kind or tok.text != text:
            raise self._fail(f"expected {text!r}, got {tok.text or 'end of input'!r}", tok)

    def at(self, kind: str, text: str) -> bool:
        tok = self.peek()
        return tok.kind == kind and tok.text == text

    def parse(self) -> Expr:
        node = self.or_()
        if self.peek().kind != "eof":
            raise self._fail(f"unexpected {self.peek().text!r}", self.peek())
        return node

    def or_(self) -> Expr:
        node = self.and_()
        while self.at("ident", "or"):
            self.take()
            node = Or(node, self.and_())
        return node

    def and_(self) -> Expr:
        node = self.not_()
        while self.at("ident", "and"):
            self.take()
            node = And(node, self.not_())
        return node

    def not_(self) -> Expr:
        if self.at("ident", "not"):
            self.take()
            return Not(self.not_())
        return self.cmp()

    def cmp(self) -> Expr:
        left = self.term()
        tok = self.peek()
        if tok.kind == "op" and tok.text in COMPARATORS:
            self.take()
            return Compare(tok.text, left, self.term())
        return left

    def term(self) -> Expr:
        tok = self.take()
        if tok.kind == "number":
            value = _number(tok.text)
            if value is None:
                raise self._fail(f"number out of range {tok.text!r}", tok)
            return Literal(value)
        if tok.kind == "string":
            try:
                return Literal(json.loads(tok.text))
            except json.JSONDecodeError:
                raise self._fail(f"bad string literal {tok.text!r}", tok) from None
        if tok.kind == "path":
            return PathRef(tuple(tok.text[1:].split(".")))
        if tok.kind == "op" and tok.text == "(":
            inner = self.or_()
            self.expect("op", ")")
            return inner
        if tok.kind == "ident":
            if tok.text in ("true", "false"):
                return Literal(tok.text == "true")
            if tok.text in KEYWORDS:
                raise self._fail(f"unexpected keyword {tok.text!r}", tok)
            self.expect("op", "(")
            args: list[Expr] = []
            if not self.at("op", ")"):
                args.append(self.or_())
                while self.at("op", ","):
                    self.take()
                    args.append(self.or_())
            self.expect("op", ")")
            return Call(tok.text, tuple(args))
        raise self._fail(f"unexpected {tok.text or 'end of input'!r}", tok)


def parse_expr(text: str) -> Expr:
    return _Parser(text).parse()


# --- printer -----------------------------------------------------------------

_PREC = {Or: 1, And: 2, Not: 3, Compare: 4}
_ATOM = 5


def format_number(value: int | float) -> str:
    if isinstance(value, int):
        return str(value)
    if value.is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def _prec(node: Expr) -> int:
    return _PREC.get(type(node), _ATOM)


def _wrap(node: Expr, minimum: int) -> str:
    text = print_expr(node)
    return f"({text})" if _prec(node) < minimum else text


def print_expr(node: Expr) -> str:
    """Render an AST so that ``parse_expr(print_expr(e)) == e``."""
    if isinstance(node, Literal):
        v = node.value
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return json.dumps(v, ensure_ascii=False)
        return repr(v) if isinstance(v, float) else str(v)
    if isinstance(node, PathRef):
        return str(node)
    if isinstance(node, Call):
        return f"{node.name}({', '.join(print_expr(a) for a in node.args)})"
    if isinstance(node, Compare):
        return f"{_wrap(node.left, _ATOM)} {node.op} {_wrap(node.right, _ATOM)}"
    if isinstance(node, Not):
        return f"not {_wrap(node.operand, _PREC[Not])}"
    if isinstance(node, And):
        return f"{_wrap(node.left, 2)} and {_wrap(node.right, 3)}"
    if isinstance(node, Or):
        return f"{_wrap(node.left, 1)} or {_wrap(node.right, 2)}"
    raise TypeError(f"not an expression node: {node!r}")


# --- evaluator ---------------------------------------------------------------

def _is_number(v: object) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def coerce_number(v: object) -> int | float | ErrorValue:
    if _is_number(v):
        return v  # type: ignore[return-value]
    if isinstance(v, str):
        n = _number(v)
        if n is not None:
            return n
        return ErrorValue(f"not a decimal: {v!r}")
    return ErrorValue(f"not a number: {v!r}")


def to_text(v: Value) -> str | ErrorValue:
    if isinstance(v, ErrorValue):
        return v
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return v
    return format_number(v)


def _path_value(doc: Node | None, path: PathRef) -> Value:
    if doc is None:
        return ErrorValue(f"no document for {path}")
    res = lookup(doc, path.segments)
    if not res.found:
        return ErrorValue(f"missing {path}")
    v = res.value
    if isinstance(v, Node):
        return v.text if v.text is not None else ErrorValue(f"{path} is an element")
    return v  # type: ignore[return-value]


_ORDERING = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def _compare(op: str, a: Value, b: Value) -> Value:
    if isinstance(a, ErrorValue):
        return a
    if isinstance(b, ErrorValue):
        return b
    if isinstance(a, bool) or isinstance(b, bool):
        if isinstance(a, bool) and isinstance(b, bool) and op in ("==", "!="):
            return _ORDERING[op](a, b)
        return ErrorValue(f"cannot compare {a!r} {op} {b!r}")
    if _is_number(a) != _is_number(b):
        a, b = coerce_number(a), coerce_number(b)
        if isinstance(a, ErrorValue):
            return a
        if isinstance(b, ErrorValue):
            return b
    return _ORDERING[op](a, b)


def _boolean(v: Value, what: str) -> bool | ErrorValue:
    if isinstance(v, ErrorValue):
        return v
    if not isinstance(v, bool):
        return ErrorValue(f"{what} needs booleans, got {v!r}")
    return v


def _call(node: Call, doc: Node | None) -> Value:
    if node.name == "exists":
        if len(node.args) != 1 or not isinstance(node.args[0], PathRef):
            return ErrorValue("exists() takes a single path")
        return doc is not None and lookup(doc, node.args[0].segments).found
    args = [eval_expr(a, doc) for a in node.args]
    for a in args:
        if isinstance(a, ErrorValue):
            return a
    if node.name == "concat":
        parts = []
        for a in args:
            if isinstance(a, bool):
                return ErrorValue("concat() of a boolean")
            parts.append(to_text(a))
        return "".join(parts)  # type: ignore[arg-type]
    if node.name in ("num", "str"):
        if len(args) != 1:
            return ErrorValue(f"{node.name}() takes one argument")
        if node.name == "str":
            return to_text(args[0])
        if isinstance(args[0], bool):
            return ErrorValue("num() of a boolean")
        return coerce_number(args[0])
    return ErrorValue(f"unknown function {node.name}()")


def eval_expr(node: Expr, doc: Node | None = None) -> Value:
    if isinstance(node, Literal):
        return node.value
    if isinstance(node, PathRef):
        return _path_value(doc, node)
    if isinstance(node, Compare):
        return _compare(node.op, eval_expr(node.left, doc), eval_expr(node.right, doc))
    if isinstance(node, Not):
        v = _boolean(eval_expr(node.operand, doc), "not")
        return v if isinstance(v, ErrorValue) else not v
    if isinstance(node, (And, Or)):
        word = "and" if isinstance(node, And) else "or"
        left = _boolean(eval_expr(node.left, doc), word)
        right = _boolean(eval_expr(node.right, doc), word)
        if isinstance(left, ErrorValue):
            return left
        if isinstance(right, ErrorValue):
            return right
        return (left and right) if isinstance(node, And) else (left or right)
    if isinstance(node, Call):
        return _call(node, doc)
    return ErrorValue(f"not an expression: {node!r}")


def evaluate(text: str, doc: Node | None = None) -> Value:
    """Parse and evaluate in one go (parse failures still raise PARSE_ERROR)."""
    return eval_expr(parse_expr(text), doc)


def referenced_paths(node: Expr) -> set[tuple[str, ...]]:
    if isinstance(node, PathRef):
        return {node.segments}
    if isinstance(node, Literal):
        return set()
    if isinstance(node, Call):
        return set().union(*(referenced_paths(a) for a in node.args)) if node.args else set()
    if isinstance(node, Not):
        return referenced_paths(node.operand)
    return referenced_paths(node.left) | referenced_paths(node.right)  # type: ignore[union-attr]
