"""Arithmetic expression language for coefficient functions.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | VAR | FUNC '(' expr (',' expr)* ')' | '(' expr ')'

``+ - * /`` associate to the left, ``^`` to the right, and ``-2^2`` is
``-(2^2)``.  Variables are ``t``, ``x1..xn``, ``y1..yn`` and ``z1..zd``.
Positions in error messages are 1-based character columns.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

__all__ = [
    "DSLError",
    "LexError",
    "ParseError",
    "NonFiniteError",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "Expr",
    "EvalEnv",
    "FUNCTIONS",
    "parse",
    "to_text",
    "fold_constants",
    "evaluate",
    "evaluate_batch",
    "evaluate_arrays",
]


class DSLError(ValueError):
    """Base class for expression errors.  ``pos`` is a 1-based column or None."""

    def __init__(self, message: str, pos: int | None = None):
        self.pos = pos
        if pos is not None:
            message = f"{message} at position {pos}"
        super().__init__(message)


class LexError(DSLError):
    pass


class ParseError(DSLError):
    """Syntax errors, unknown identifiers, out-of-range indices, arity mismatches."""

    def __init__(self, message: str, pos: int | None = None, kind: str = "syntax"):
        self.kind = kind
        super().__init__(message, pos)


class NonFiniteError(ArithmeticError):
    def __init__(self, subexpr: str, index: int | None = None):
        self.subexpr = subexpr
        self.index = index
        where = "" if index is None else f" (env {index})"
        super().__init__(f"non-finite value produced by '{subexpr}'{where}")


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str  # 't', 'x', 'y' or 'z'
    index: int = 0  # 1-based; 0 for t


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


Node = Union[Num, Var, Neg, BinOp, Call]

FUNCTIONS = {
    "abs": (1, np.abs),
    "exp": (1, np.exp),
    "log": (1, np.log),
    "sqrt": (1, np.sqrt),
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "tanh": (1, np.tanh),
    "min": (2, np.minimum),
    "max": (2, np.maximum),
}

_BINARY = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": np.divide,
    "^": np.power,
}


@dataclass(frozen=True)
class Expr:
    """A parsed expression together with the dimensions it was checked against."""

    root: Node
    dims: tuple[int, int]
    text: str = field(default="", compare=False)

    @property
    def variables(self) -> frozenset[str]:
        """Variable kinds read anywhere in the tree ('t', 'x', 'y', 'z')."""
        out: set[str] = set()
        stack = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, Var):
                out.add(node.name)
            elif isinstance(node, Neg):
                stack.append(node.operand)
            elif isinstance(node, BinOp):
                stack.extend((node.left, node.right))
            elif isinstance(node, Call):
                stack.extend(node.args)
        return frozenset(out)

    def __str__(self) -> str:
        return to_text(self.root)


# ---------------------------------------------------------------------------
# Lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # 'num', 'ident', 'op', 'end'
    text: str
    pos: int  # 1-based


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    i = 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if m is None:
            raise LexError(f"unexpected character {text[i]!r}", i + 1)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), i + 1))
        i = m.end()
    tokens.append(_Token("end", "", len(text) + 1))
    return tokens


# ---------------------------------------------------------------------------
# Parser

_VAR_RE = re.compile(r"^([xyz])([0-9]+)$")


class _Parser:
    def __init__(self, text: str, dims: tuple[int, int]):
        self.tokens = _tokenize(text)
        self.i = 0
        self.n, self.d = dims

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> _Token:
        if self.tok.text != text or self.tok.kind != "op":
            raise ParseError(f"expected {text!r}, found {self._describe()}", self.tok.pos)
        return self.advance()

    def _describe(self) -> str:
        return "end of input" if self.tok.kind == "end" else repr(self.tok.text)

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "end":
            raise ParseError(f"unexpected {self._describe()}", self.tok.pos)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Node:
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "ident":
            self.advance()
            return self._identifier(tok)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        raise ParseError(f"unexpected {self._describe()}", tok.pos)

    def _identifier(self, tok: _Token) -> Node:
        name = tok.text
        is_call = self.tok.kind == "op" and self.tok.text == "("
        if name in FUNCTIONS:
            if not is_call:
                raise ParseError(f"function {name!r} used without arguments", tok.pos)
            self.advance()
            args = [self.expr()]
            while self.tok.kind == "op" and self.tok.text == ",":
                self.advance()
                args.append(self.expr())
            self.expect(")")
            arity = FUNCTIONS[name][0]
            if len(args) != arity:
                raise ParseError(
                    f"{name} takes {arity} argument(s), got {len(args)}", tok.pos, kind="arity"
                )
            return Call(name, tuple(args))
        if is_call:
            raise ParseError(f"unknown function {name!r}", tok.pos, kind="identifier")
        if name == "t":
            return Var("t", 0)
        m = _VAR_RE.match(name)
        if m is None:
            raise ParseError(f"unknown identifier {name!r}", tok.pos, kind="identifier")
        kind, idx = m.group(1), int(m.group(2))
        bound = self.d if kind == "z" else self.n
        if not 1 <= idx <= bound:
            raise ParseError(
                f"index of {name!r} out of range 1..{bound}", tok.pos, kind="range"
            )
        return Var(kind, idx)


def parse(text: str, dims: tuple[int, int]) -> Expr:
    """Parse ``text`` for a problem with state dimension n and noise dimension d."""
    n, d = dims
    if n < 1 or d < 1:
        raise ValueError(f"dimensions must be positive, got {dims}")
    root = _Parser(text, (n, d)).parse()
    return Expr(root, (n, d), text)


# ---------------------------------------------------------------------------
# Printing

_LEVEL = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_UNARY_LEVEL = 3
_ATOM_LEVEL = 5


def _level(node: Node) -> int:
    if isinstance(node, BinOp):
        return _LEVEL[node.op]
    if isinstance(node, Neg):
        return _UNARY_LEVEL
    return _ATOM_LEVEL


def _wrap(node: Node, min_level: int) -> str:
    s = to_text(node)
    return s if _level(node) >= min_level else f"({s})"


def to_text(node: Node) -> str:
    """Render with the fewest parentheses that re-parse to the same tree."""
    if isinstance(node, Expr):
        node = node.root
    if isinstance(node, Num):
        v = node.value
        if math.isnan(v):
            return "(0/0)"
        if math.isinf(v):
            return "(1/0)" if v > 0 else "(-1/0)"
        return f"({v!r})" if v < 0 else repr(v)
    if isinstance(node, Var):
        return "t" if node.name == "t" else f"{node.name}{node.index}"
    if isinstance(node, Neg):
        return "-" + _wrap(node.operand, _UNARY_LEVEL)
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_text(a) for a in node.args)})"
    if isinstance(node, BinOp):
        lvl = _LEVEL[node.op]
        if node.op == "^":
            return f"{_wrap(node.left, _ATOM_LEVEL)}^{_wrap(node.right, _UNARY_LEVEL)}"
        # right operand of a left-associative op needs parens at equal level
        return f"{_wrap(node.left, lvl)} {node.op} {_wrap(node.right, lvl + 1)}"
    raise TypeError(f"not an expression node: {node!r}")


# ---------------------------------------------------------------------------
# Evaluation


@dataclass(frozen=True)
class EvalEnv:
    t: float = 0.0
    x: tuple = ()
    y: tuple = ()
    z: tuple = ()


def _eval(node: Node, env: dict, size: int) -> np.ndarray:
    if isinstance(node, Num):
        return np.full(size, node.value)
    if isinstance(node, Var):
        arr = env.get(node.name)
        if arr is None:
            raise ValueError(f"variable {to_text(node)} is not available in this context")
        return arr if node.name == "t" else arr[:, node.index - 1]
    if isinstance(node, Neg):
        return np.negative(_eval(node.operand, env, size))
    if isinstance(node, BinOp):
        return _BINARY[node.op](_eval(node.left, env, size), _eval(node.right, env, size))
    if isinstance(node, Call):
        fn = FUNCTIONS[node.func][1]
        return fn(*(_eval(a, env, size) for a in node.args))
    raise TypeError(f"not an expression node: {node!r}")


def _children(node: Node) -> tuple:
    if isinstance(node, Neg):
        return (node.operand,)
    if isinstance(node, BinOp):
        return (node.left, node.right)
    if isinstance(node, Call):
        return node.args
    return ()


def _locate_nonfinite(node: Node, env: dict, size: int, k: int) -> Node:
    """Deepest node whose value at slot k is non-finite while its children's are finite."""
    for child in _children(node):
        if not np.isfinite(_eval(child, env, size)[k]):
            return _locate_nonfinite(child, env, size, k)
    return node


def _as_env(expr: Expr, t, x, y, z) -> tuple[dict, int]:
    n, d = expr.dims
    env: dict = {}
    size = None
    for name, arr, width in (("x", x, n), ("y", y, n), ("z", z, d)):
        if arr is None:
            continue
        arr = np.asarray(arr, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != width:
            raise ValueError(f"{name} must have shape (M, {width}), got {arr.shape}")
        env[name] = arr
        size = arr.shape[0]
    if t is not None:
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            t = np.full(size if size is not None else 1, float(t))
        env["t"] = t
        size = t.shape[0] if size is None else size
    if size is None:
        size = 1
    return env, size


def evaluate_arrays(expr: Expr, t=None, x=None, y=None, z=None, check: bool = True) -> np.ndarray:
    """Vectorized evaluation over M environments given as stacked arrays.

    ``t`` is a scalar or shape (M,); ``x``, ``y`` are (M, n) and ``z`` is (M, d).
    With ``check`` a non-finite entry raises :class:`NonFiniteError` naming the
    innermost offending subexpression and the index of the first bad slot.
    """
    env, size = _as_env(expr, t, x, y, z)
    with np.errstate(all="ignore"):
        out = _eval(expr.root, env, size)
        if check:
            bad = ~np.isfinite(out)
            if bad.any():
                k = int(np.argmax(bad))
                node = _locate_nonfinite(expr.root, env, size, k)
                raise NonFiniteError(to_text(node), k)
    return out


def evaluate_batch(expr: Expr, envs: Sequence[EvalEnv], check: bool = True) -> np.ndarray:
    if len(envs) == 0:
        return np.empty(0)
    n, d = expr.dims
    # all-or-nothing per variable kind; missing kinds stay unavailable
    t = np.array([e.t for e in envs], dtype=float)
    cols = {}
    for name, width in (("x", n), ("y", n), ("z", d)):
        rows = [getattr(e, name) for e in envs]
        if all(len(r) == 0 for r in rows):
            cols[name] = None
            continue
        if any(len(r) != width for r in rows):
            raise ValueError(f"every env must supply {name} of length {width}")
        cols[name] = np.array(rows, dtype=float).reshape(len(envs), width)
    return evaluate_arrays(expr, t, cols["x"], cols["y"], cols["z"], check=check)


def evaluate(expr: Expr, env: EvalEnv, check: bool = True) -> float:
    """Evaluate at a single point.

    Routed through the batch kernel so results agree bit-for-bit with
    :func:`evaluate_batch`.
    """
    try:
        return float(evaluate_batch(expr, [env], check=check)[0])
    except NonFiniteError as err:
        raise NonFiniteError(err.subexpr) from None


# ---------------------------------------------------------------------------
# Constant folding


def _fold(node: Node) -> Node:
    if isinstance(node, (Num, Var)):
        return node
    if isinstance(node, Neg):
        new = Neg(_fold(node.operand))
    elif isinstance(node, BinOp):
        new = BinOp(node.op, _fold(node.left), _fold(node.right))
    else:
        new = Call(node.func, tuple(_fold(a) for a in node.args))
    if all(isinstance(c, Num) for c in _children(new)):
        with np.errstate(all="ignore"):
            value = float(_eval(new, {}, 1)[0])
        # keep non-finite subtrees so evaluation can still name them
        if math.isfinite(value):
            return Num(value)
    return new


def fold_constants(expr: Expr) -> Expr:
    """Replace variable-free subtrees by their value."""
    return Expr(_fold(expr.root), expr.dims, expr.text)
