"""Stand-alone reference interpreter for the guard expression language.

Written independently of ``ddsflow.docmodel.expr``: it evaluates straight
from the token stream with a Pratt-style loop and uses plain dicts for
documents, so a shared bug between the two is unlikely.

Documents here are nested dicts: {"name": ..., "attrs": {...}, "children": [...], "text": ...}.
Results: python str/int/float/bool, or the string sentinel "ERROR".
"""

import json
import math
import re

ERROR = "<<ERROR>>"

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<str>"(?:[^"\\]|\\.)*")
  | (?P<path>\$[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*)
  | (?P<op>==|!=|<=|>=|<|>|\(|\)|,)
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
""", re.X)

_NUMERIC = re.compile(r"-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?\Z")


def tokens(text):
    pos, out = 0, []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise SyntaxError(f"bad char at {pos}")
        pos = m.end()
        if m.lastgroup != "ws":
            out.append((m.lastgroup, m.group()))
    return out


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _to_num(s):
    if not _NUMERIC.match(s):
        return ERROR
    v = float(s) if any(c in s for c in ".eE") else int(s)
    if isinstance(v, float) and not math.isfinite(v):
        return ERROR
    return v


def _fmt(n):
    if isinstance(n, int):
        return str(n)
    if n == int(n) and abs(n) < 1e16:
        return str(int(n))
    return repr(n)


def _resolve(doc, segs):
    if doc is None or segs[0] != doc["name"]:
        return False, None
    node = doc
    for i, s in enumerate(segs[1:]):
        last = i == len(segs) - 2
        if last and s in node["attrs"]:
            return True, node["attrs"][s]
        kids = [c for c in node["children"] if c["name"] == s]
        if not kids:
            return False, None
        node = kids[0]
    return True, node


def _path_value(doc, segs):
    found, v = _resolve(doc, segs)
    if not found:
        return ERROR
    if isinstance(v, dict):
        return v.get("text") if v.get("text") is not None else ERROR
    return v


def _compare(op, a, b):
    if a == ERROR or b == ERROR:
        return ERROR
    if isinstance(a, bool) or isinstance(b, bool):
        if not (isinstance(a, bool) and isinstance(b, bool)):
            return ERROR
        if op == "==":
            return a == b
        if op == "!=":
            return a != b
        return ERROR
    if _is_num(a) and isinstance(b, str):
        b = _to_num(b)
    elif isinstance(a, str) and _is_num(b):
        a = _to_num(a)
    if a == ERROR or b == ERROR:
        return ERROR
    table = {
        "==": lambda x, y: x == y, "!=": lambda x, y: x != y,
        "<": lambda x, y: x < y, "<=": lambda x, y: x <= y,
        ">": lambda x, y: x > y, ">=": lambda x, y: x >= y,
    }
    return table[op](a, b)


class _P:
    def __init__(self, text, doc):
        self.t = tokens(text)
        self.i = 0
        self.doc = doc

    def peek(self):
        return self.t[self.i] if self.i < len(self.t) else (None, None)

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expr(self):
        left = self.conj()
        while self.peek() == ("word", "or"):
            self.take()
            right = self.conj()
            left = self._bool2(left, right, lambda x, y: x or y)
        return left

    def conj(self):
        left = self.neg()
        while self.peek() == ("word", "and"):
            self.take()
            right = self.neg()
            left = self._bool2(left, right, lambda x, y: x and y)
        return left

    @staticmethod
    def _bool2(a, b, f):
        if a == ERROR or b == ERROR:
            return ERROR
        if not isinstance(a, bool) or not isinstance(b, bool):
            return ERROR
        return f(a, b)

    def neg(self):
        if self.peek() == ("word", "not"):
            self.take()
            v = self.neg()
            if v == ERROR or not isinstance(v, bool):
                return ERROR
            return not v
        left = self.term()
        kind, val = self.peek()
        if kind == "op" and val in ("==", "!=", "<", "<=", ">", ">="):
            self.take()
            right = self.term()
            return _compare(val, left, right)
        return left

    def term(self):
        kind, val = self.take()
        if kind == "num":
            return _to_num(val)
        if kind == "str":
            return json.loads(val)
        if kind == "path":
            return _path_value(self.doc, val[1:].split("."))
        if (kind, val) == ("op", "("):
            v = self.expr()
            assert self.take() == ("op", ")")
            return v
        if kind == "word" and val in ("true", "false"):
            return val == "true"
        if kind == "word":
            assert self.take() == ("op", "(")
            raw_args = []
            if self.peek() != ("op", ")"):
                while True:
                    start = self.i
                    v = self.expr()
                    raw_args.append((v, self.t[start:self.i]))
                    if self.peek() == ("op", ","):
                        self.take()
                        continue
                    break
            assert self.take() == ("op", ")")
            return self.call(val, raw_args)
        raise SyntaxError(f"unexpected {val!r}")

    def call(self, name, raw_args):
        args = [v for v, _ in raw_args]
        if name == "exists":
            if len(raw_args) != 1:
                return ERROR
            toks = raw_args[0][1]
            if len(toks) != 1 or toks[0][0] != "path":
                return ERROR
            return _resolve(self.doc, toks[0][1][1:].split("."))[0]
        if any(a == ERROR for a in args):
            return ERROR
        if name == "concat":
            parts = []
            for a in args:
                if isinstance(a, bool):
                    return ERROR
                parts.append(a if isinstance(a, str) else _fmt(a))
            return "".join(parts)
        if name == "num":
            if len(args) != 1 or isinstance(args[0], bool):
                return ERROR
            a = args[0]
            return a if _is_num(a) else _to_num(a)
        if name == "str":
            if len(args) != 1:
                return ERROR
            a = args[0]
            if isinstance(a, bool):
                return "true" if a else "false"
            return a if isinstance(a, str) else _fmt(a)
        return ERROR


def evaluate(text, doc=None):
    p = _P(text, doc)
    v = p.expr()
    if p.i != len(p.t):
        raise SyntaxError("trailing tokens")
    return v
