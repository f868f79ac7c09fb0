"""Tiny scalar expression language in the variables x and y.

Coefficient fields are declared in config files as strings like
``"1 + 0.5*sin(pi*x)*y"``.  The grammar is fixed:

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := unary ('^' factor)?
    unary  := '-' unary | atom
    atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'

``^`` is right associative; all other binary operators are left
associative.  Note that the left operand of ``^`` is a ``unary``, so
``-x^2`` parses as ``(-x)^2``.  Known functions: sin, cos, exp, sqrt,
abs (one argument), min, max (two arguments).  ``pi`` is a constant.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from .errors import EvalDomainError, ParseError

__all__ = [
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "parse_expr",
    "eval_expr",
    "format_expr",
    "FUNCTIONS",
]

# function name -> arity
FUNCTIONS = {"sin": 1, "cos": 1, "exp": 1, "sqrt": 1, "abs": 1, "min": 2, "max": 2}

_VARIABLES = ("x", "y")


@dataclass(frozen=True)
class Num:
    value: float
    offset: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Var:
    name: str
    offset: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Neg:
    operand: "Expr"
    offset: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"
    offset: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple
    offset: int = field(default=-1, compare=False)


Expr = Num | Var | Neg | BinOp | Call

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(source):
    """Return a list of (kind, text, offset) triples plus an EOF marker."""
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            # skip leading whitespace before reporting
            stripped = pos + len(source[pos:]) - len(source[pos:].lstrip())
            if stripped >= n:
                break
            raise ParseError(f"unexpected character {source[stripped]!r}", stripped)
        if m.lastgroup == "num":
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.lastgroup == "ident":
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("eof", "", n))
    return tokens


class _Parser:
    def __init__(self, source):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, text, offset = self.peek()
        if kind != "op" or text != op:
            raise ParseError(f"expected {op!r}", offset)
        return self.advance()

    def parse(self):
        e = self.expr()
        kind, text, offset = self.peek()
        if kind != "eof":
            raise ParseError(f"unexpected trailing input {text!r}", offset)
        return e

    def expr(self):
        e = self.term()
        while True:
            kind, text, offset = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                e = BinOp(text, e, self.term(), offset)
            else:
                return e

    def term(self):
        e = self.factor()
        while True:
            kind, text, offset = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                e = BinOp(text, e, self.factor(), offset)
            else:
                return e

    def factor(self):
        e = self.unary()
        kind, text, offset = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            # right associative: the exponent is itself a factor
            return BinOp("^", e, self.factor(), offset)
        return e

    def unary(self):
        kind, text, offset = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(self.unary(), offset)
        return self.atom()

    def atom(self):
        kind, text, offset = self.advance()
        if kind == "num":
            return Num(float(text), offset)
        if kind == "ident":
            nk, nt, _ = self.peek()
            if nk == "op" and nt == "(":
                return self.call(text, offset)
            if text in _VARIABLES:
                return Var(text, offset)
            if text == "pi":
                return Num(math.pi, offset)
            raise ParseError(f"unknown identifier {text!r}", offset)
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        raise ParseError(
            "expected a number, identifier or parenthesized expression", offset
        )

    def call(self, name, offset):
        if name not in FUNCTIONS:
            raise ParseError(f"unknown function {name!r}", offset)
        self.expect_op("(")
        args = [self.expr()]
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text == ",":
                self.advance()
                args.append(self.expr())
            else:
                break
        self.expect_op(")")
        if len(args) != FUNCTIONS[name]:
            raise ParseError(
                f"{name} takes {FUNCTIONS[name]} argument(s), got {len(args)}", offset
            )
        return Call(name, tuple(args), offset)


def parse_expr(source: str) -> Expr:
    """Parse ``source`` into an expression tree.

    Raises ParseError (with byte offset) on syntax errors, unknown
    identifiers and arity mismatches.
    """
    return _Parser(source).parse()


def eval_expr(e: Expr, x: float, y: float) -> float:
    """Evaluate the tree at the point (x, y) in double precision.

    Division by zero, sqrt of a negative number, a negative base raised
    to a non-integer power, and exp overflow raise EvalDomainError
    carrying the source offset of the offending node.
    """
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return float(x) if e.name == "x" else float(y)
    if isinstance(e, Neg):
        return -eval_expr(e.operand, x, y)
    if isinstance(e, BinOp):
        a = eval_expr(e.left, x, y)
        b = eval_expr(e.right, x, y)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if b == 0.0:
                raise EvalDomainError("division by zero", e.offset)
            return a / b
        # '^'
        try:
            return math.pow(a, b)
        except (ValueError, OverflowError) as exc:
            raise EvalDomainError(f"pow domain error: {exc}", e.offset) from None
    if isinstance(e, Call):
        vals = [eval_expr(a, x, y) for a in e.args]
        try:
            if e.func == "sin":
                return math.sin(vals[0])
            if e.func == "cos":
                return math.cos(vals[0])
            if e.func == "exp":
                return math.exp(vals[0])
            if e.func == "sqrt":
                return math.sqrt(vals[0])
            if e.func == "abs":
                return abs(vals[0])
            if e.func == "min":
                return min(vals[0], vals[1])
            if e.func == "max":
                return max(vals[0], vals[1])
        except (ValueError, OverflowError) as exc:
            raise EvalDomainError(f"{e.func} domain error: {exc}", e.offset) from None
        raise EvalDomainError(f"unknown function {e.func!r}", e.offset)
    raise TypeError(f"not an expression node: {e!r}")


def format_expr(e: Expr) -> str:
    """Render a tree back to source text.

    The output uses the minimal parenthesization that reparses to a
    structurally equal tree under the fixed grammar.
    """
    if isinstance(e, Num):
        if e.value == math.pi:
            return "pi"
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        # the operand must be printable as a unary
        inner = format_expr(e.operand)
        if isinstance(e.operand, BinOp):
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Call):
        return f"{e.func}({', '.join(format_expr(a) for a in e.args)})"
    if isinstance(e, BinOp):
        left = format_expr(e.left)
        right = format_expr(e.right)
        if e.op == "^":
            # left slot is a unary, right slot is a factor
            if isinstance(e.left, BinOp):
                left = f"({left})"
            if isinstance(e.right, BinOp) and e.right.op != "^":
                right = f"({right})"
        elif e.op in "*/":
            if isinstance(e.left, BinOp) and e.left.op in "+-":
                left = f"({left})"
            if isinstance(e.right, BinOp) and e.right.op in "+-*/":
                right = f"({right})"
        else:  # '+' or '-'
            if isinstance(e.right, BinOp) and e.right.op in "+-":
                right = f"({right})"
        return f"{left} {e.op} {right}"
    raise TypeError(f"not an expression node: {e!r}")
