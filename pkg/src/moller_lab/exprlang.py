"""Arithmetic expression language for metric/potential coefficients.

Grammar (standard precedence, ^ binds tightest and is right-associative):

    expr   := term  (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ['^' unary]
    atom   := NUMBER | 't' | 'x' | 'pi' | FUNC '(' expr ')' | '(' expr ')'

with FUNC one of sin, cos, tan, exp, log, sqrt, tanh.  Every AST node
carries the byte offset of the token that produced it, so evaluation and
parse errors point back into the source string.  Expressions evaluate on
numpy arrays and differentiate symbolically (d/dt, d/dx), which is what
keeps all derived coefficient fields exact downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "tanh")
VARIABLES = ("t", "x")


class ExprError(Exception):
    """Base class; carries the byte offset of the offending token."""

    def __init__(self, message, pos):
        super().__init__(f"{message} (at offset {pos})")
        self.pos = pos


class ExprSyntaxError(ExprError):
    pass


class ExprNameError(ExprError):
    pass


class ExprDomainError(ExprError):
    pass


@dataclass(frozen=True)
class Num:
    value: float
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Var:
    name: str
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Unary:
    op: str  # only '-'
    operand: object
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Bin:
    op: str  # + - * / ^
    left: object
    right: object
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Call:
    func: str
    arg: object
    pos: int = field(default=0, compare=False)


# ---------------------------------------------------------------------------
# tokenizer / parser


@dataclass
class _Token:
    kind: str  # num ident op end
    text: str
    pos: int


def _tokenize(src):
    toks = []
    i, n = 0, len(src)
    while i < n:
        c = src[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and src[i + 1].isdigit()):
            j = i
            while j < n and (src[j].isdigit() or src[j] == "."):
                j += 1
            if j < n and src[j] in "eE":
                k = j + 1
                if k < n and src[k] in "+-":
                    k += 1
                if k < n and src[k].isdigit():
                    j = k
                    while j < n and src[j].isdigit():
                        j += 1
            text = src[i:j]
            try:
                float(text)
            except ValueError:
                raise ExprSyntaxError(f"bad number literal '{text}'", i)
            toks.append(_Token("num", text, i))
            i = j
        elif c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            toks.append(_Token("ident", src[i:j], i))
            i = j
        elif c in "+-*/^()":
            toks.append(_Token("op", c, i))
            i += 1
        else:
            raise ExprSyntaxError(f"unexpected character {c!r}", i)
    toks.append(_Token("end", "", n))
    return toks


class _Parser:
    def __init__(self, src):
        self.src = src
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        tok = self.take()
        if tok.kind != "op" or tok.text != op:
            raise ExprSyntaxError(f"expected '{op}', found {tok.text!r}", tok.pos)
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ExprSyntaxError(f"trailing input {tok.text!r}", tok.pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            tok = self.take()
            node = Bin(tok.text, node, self.term(), tok.pos)
        return node

    def term(self):
        node = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            tok = self.take()
            node = Bin(tok.text, node, self.unary(), tok.pos)
        return node

    def unary(self):
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.take()
            return Unary("-", self.unary(), tok.pos)
        return self.power()

    def power(self):
        node = self.atom()
        tok = self.peek()
        if tok.kind == "op" and tok.text == "^":
            self.take()
            # right-associative; exponent may carry its own unary minus
            node = Bin("^", node, self.unary(), tok.pos)
        return node

    def atom(self):
        tok = self.take()
        if tok.kind == "num":
            return Num(float(tok.text), tok.pos)
        if tok.kind == "ident":
            if tok.text in FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Call(tok.text, arg, tok.pos)
            if tok.text == "pi":
                return Num(math.pi, tok.pos)
            if tok.text in VARIABLES:
                return Var(tok.text, tok.pos)
            raise ExprNameError(f"unknown identifier '{tok.text}'", tok.pos)
        if tok.kind == "op" and tok.text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ExprSyntaxError(f"unexpected token {tok.text!r}", tok.pos)


def parse_expr(src):
    return _Parser(src).parse()


# ---------------------------------------------------------------------------
# printing (canonical, reparses to the same AST)

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "u-": 3, "^": 4}


def _print(node, parent_prec, right_side):
    if isinstance(node, Num):
        if node.value == math.pi:
            return "pi"
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({_print(node.arg, 0, False)})"
    if isinstance(node, Unary):
        s = "-" + _print(node.operand, _PREC["u-"], True)
        return f"({s})" if parent_prec > _PREC["u-"] else s
    if isinstance(node, Bin):
        p = _PREC[node.op]
        # - and / are left-associative, ^ right-associative
        ls = _print(node.left, p if node.op != "^" else p + 1, False)
        rs = _print(node.right, p + 1 if node.op != "^" else p, True)
        s = f"{ls} {node.op} {rs}" if node.op in "+-" else f"{ls}{node.op}{rs}"
        if parent_prec > p or (parent_prec == p and right_side):
            return f"({s})"
        return s
    raise TypeError(f"not an expression node: {node!r}")


def print_expr(node):
    return _print(node, 0, False)


# ---------------------------------------------------------------------------
# evaluation

def evaluate(node, t, x):
    """Evaluate on numbers/arrays; t and x broadcast together."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return t if node.name == "t" else x
    if isinstance(node, Unary):
        return -evaluate(node.operand, t, x)
    if isinstance(node, Call):
        arg = evaluate(node.arg, t, x)
        if node.func == "log":
            if np.any(np.asarray(arg) <= 0):
                raise ExprDomainError("log of non-positive value", node.pos)
            return np.log(arg)
        if node.func == "sqrt":
            if np.any(np.asarray(arg) < 0):
                raise ExprDomainError("sqrt of negative value", node.pos)
            return np.sqrt(arg)
        return getattr(np, node.func)(arg)
    if isinstance(node, Bin):
        a = evaluate(node.left, t, x)
        b = evaluate(node.right, t, x)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            if np.any(np.asarray(b) == 0):
                raise ExprDomainError("division by zero", node.pos)
            return a / b
        if node.op == "^":
            if isinstance(node.right, Num) and float(node.right.value).is_integer():
                return a ** int(node.right.value)
            if np.any(np.asarray(a) < 0):
                raise ExprDomainError("negative base with non-integer exponent", node.pos)
            return a ** b
    raise TypeError(f"not an expression node: {node!r}")


# ---------------------------------------------------------------------------
# symbolic differentiation, with light constant folding to keep trees small

def _num(v):
    return Num(float(v))


def _is_num(node, v=None):
    return isinstance(node, Num) and (v is None or node.value == v)


def _add(a, b):
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    if _is_num(a) and _is_num(b):
        return _num(a.value + b.value)
    return Bin("+", a, b)


def _sub(a, b):
    if _is_num(b, 0.0):
        return a
    if _is_num(a) and _is_num(b):
        return _num(a.value - b.value)
    if _is_num(a, 0.0):
        return Unary("-", b)
    return Bin("-", a, b)


def _mul(a, b):
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return _num(0.0)
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    if _is_num(a) and _is_num(b):
        return _num(a.value * b.value)
    return Bin("*", a, b)


def _div(a, b):
    if _is_num(a, 0.0):
        return _num(0.0)
    if _is_num(b, 1.0):
        return a
    return Bin("/", a, b)


def diff(node, var):
    """d(node)/d(var) as a new AST; var is 't' or 'x'."""
    if var not in VARIABLES:
        raise ValueError(f"can only differentiate in {VARIABLES}, got {var!r}")
    if isinstance(node, Num):
        return _num(0.0)
    if isinstance(node, Var):
        return _num(1.0 if node.name == var else 0.0)
    if isinstance(node, Unary):
        return _sub(_num(0.0), diff(node.operand, var))
    if isinstance(node, Bin):
        a, b = node.left, node.right
        da, db = diff(a, var), diff(b, var)
        if node.op == "+":
            return _add(da, db)
        if node.op == "-":
            return _sub(da, db)
        if node.op == "*":
            return _add(_mul(da, b), _mul(a, db))
        if node.op == "/":
            return _div(_sub(_mul(da, b), _mul(a, db)), Bin("^", b, _num(2.0)))
        if node.op == "^":
            if _is_num(b):
                # c * a^(c-1) * a'
                return _mul(_mul(b, Bin("^", a, _num(b.value - 1.0))), da)
            # a^b * (b' log a + b a'/a)
            return _mul(node, _add(_mul(db, Call("log", a)),
                                   _mul(b, _div(da, a))))
    if isinstance(node, Call):
        u, du = node.arg, diff(node.arg, var)
        if node.func == "sin":
            return _mul(Call("cos", u), du)
        if node.func == "cos":
            return _sub(_num(0.0), _mul(Call("sin", u), du))
        if node.func == "tan":
            return _div(du, Bin("^", Call("cos", u), _num(2.0)))
        if node.func == "exp":
            return _mul(node, du)
        if node.func == "log":
            return _div(du, u)
        if node.func == "sqrt":
            return _div(du, _mul(_num(2.0), node))
        if node.func == "tanh":
            return _mul(_sub(_num(1.0), Bin("^", node, _num(2.0))), du)
    raise TypeError(f"not an expression node: {node!r}")
