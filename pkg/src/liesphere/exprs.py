"""Expression language for scalar fields on the parameter domain.

Grammar (documented in the README)::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := '-' factor | base ('^' base)?
    base   := number | 'u' | 'v' | fn '(' expr ')' | '(' expr ')' | '-' base
    fn     := sin | cos | exp | ln

Binary +, -, *, / are left associative; '^' binds tighter than unary minus
(so ``-u^2`` is ``-(u^2)``) and does not chain.  Parsing is total: any
grammar-valid string produces an AST, and ``parse(print(ast)) == ast``.
Evaluation happens in jet arithmetic, so every expression yields exact
derivatives through order two.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import jets as J
from .errors import ParseError

# ---------- AST ----------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "TauExpr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "TauExpr"
    right: "TauExpr"


@dataclass(frozen=True)
class Call:
    fn: str  # sin | cos | exp | ln
    arg: "TauExpr"


TauExpr = Union[Num, Var, Neg, BinOp, Call]

VARIABLES = ("u", "v")
FUNCTIONS = ("sin", "cos", "exp", "ln")

# ---------- tokenizer ----------

_WS_RE = re.compile(r"\s*")
_NUM_RE = re.compile(r"(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")


def _tokenize(src: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(src)
    while pos < n:
        pos = _WS_RE.match(src, pos).end()
        if pos >= n:
            break
        mnum = _NUM_RE.match(src, pos)
        if mnum:
            tokens.append(("num", mnum.group(0), pos))
            pos = mnum.end()
            continue
        mid = _IDENT_RE.match(src, pos)
        if mid:
            tokens.append(("ident", mid.group(0), pos))
            pos = mid.end()
            continue
        ch = src[pos]
        if ch in "+-*/^()":
            tokens.append(("op", ch, pos))
            pos += 1
            continue
        raise ParseError(f"unexpected character {ch!r}", pos, expected=("token",))
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, text, pos = self.peek()
        if kind != "op" or text != op:
            raise ParseError(f"expected {op!r}", pos, expected=(op,))
        return self.advance()

    def parse(self) -> TauExpr:
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {text!r}", pos, expected=("end of input",))
        return node

    def expr(self) -> TauExpr:
        node = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                node = BinOp(text, node, self.term())
            else:
                return node

    def term(self) -> TauExpr:
        node = self.factor()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                node = BinOp(text, node, self.factor())
            else:
                return node

    def factor(self) -> TauExpr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(self.factor())
        node = self.base()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            node = BinOp("^", node, self.base())
        return node

    def base(self) -> TauExpr:
        kind, text, pos = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "ident":
            if text in VARIABLES:
                return Var(text)
            if text in FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Call(text, arg)
            raise ParseError(
                f"unknown identifier {text!r}", pos, expected=VARIABLES + FUNCTIONS
            )
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "op" and text == "-":
            return Neg(self.base())
        raise ParseError(
            f"unexpected {text or 'end of input'!r}",
            pos,
            expected=("number", "u", "v", "function", "(", "-"),
        )


def parse_tau(src: str) -> TauExpr:
    """Parse an expression in u, v into its AST."""
    if not src or not src.strip():
        raise ParseError("empty expression", 0, expected=("expression",))
    return _Parser(src).parse()


# ---------- printer ----------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _is_base(node: TauExpr) -> bool:
    return isinstance(node, (Num, Var, Call))


def to_source(node: TauExpr) -> str:
    """Render an AST back to text; the result reparses to an equal AST."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.fn}({to_source(node.arg)})"
    if isinstance(node, Neg):
        inner = to_source(node.arg)
        # '-' takes a whole factor: only powers and atoms survive unbracketed.
        if isinstance(node.arg, BinOp) and node.arg.op != "^":
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, BinOp):
        if node.op == "^":
            lhs = to_source(node.left)
            rhs = to_source(node.right)
            if not _is_base(node.left):
                lhs = f"({lhs})"
            if not (_is_base(node.right) or isinstance(node.right, Neg)):
                rhs = f"({rhs})"
            if isinstance(node.right, Neg) and not _is_base(node.right.arg):
                rhs = f"({rhs})"
            return f"{lhs}^{rhs}"
        lhs = to_source(node.left)
        rhs = to_source(node.right)
        p = _PREC[node.op]
        if _prec_of(node.left) < p:
            lhs = f"({lhs})"
        # left associativity: right child needs parens at equal precedence
        if _prec_of(node.right) < p or (
            _prec_of(node.right) == p and node.op in ("-", "/", "+", "*")
        ):
            rhs = f"({rhs})"
        return f"{lhs} {node.op} {rhs}"
    raise TypeError(f"not an expression node: {node!r}")


def _prec_of(node: TauExpr) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _PREC["neg"]
    return 5


# ---------- evaluation ----------


def eval_jet(node: TauExpr, env: dict[str, J.Jet2]) -> J.Jet2:
    """Evaluate an AST in jet arithmetic; env maps variable names to jets."""
    sample = next(iter(env.values()))
    return _eval(node, env, sample)


def _eval(node: TauExpr, env: dict[str, J.Jet2], sample: J.Jet2) -> J.Jet2:
    if isinstance(node, Num):
        return J.Jet2.constant(np.full_like(sample.value, node.value), sample.m)
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise ParseError(f"unbound variable {node.name!r}", 0) from None
    if isinstance(node, Neg):
        return -_eval(node.arg, env, sample)
    if isinstance(node, Call):
        return J.apply(node.fn, _eval(node.arg, env, sample))
    if isinstance(node, BinOp):
        lhs = _eval(node.left, env, sample)
        if node.op == "^":
            c = _const_value(node.right)
            if c is not None:
                return lhs**c
            return J.powj(lhs, _eval(node.right, env, sample))
        rhs = _eval(node.right, env, sample)
        if node.op == "+":
            return lhs + rhs
        if node.op == "-":
            return lhs - rhs
        if node.op == "*":
            return lhs * rhs
        if node.op == "/":
            return lhs / rhs
    raise TypeError(f"not an expression node: {node!r}")


def _const_value(node: TauExpr) -> float | None:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Neg):
        inner = _const_value(node.arg)
        return None if inner is None else -inner
    return None


def eval_at(node: TauExpr, points: np.ndarray) -> J.Jet2:
    """Evaluate at parameter points of shape ``(..., 2)`` as 2-jets."""
    pts = np.asarray(points, dtype=float)
    u, v = J.seed(pts)
    return eval_jet(node, {"u": u, "v": v})
