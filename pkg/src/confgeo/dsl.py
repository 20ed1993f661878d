"""Metric expression language.

Grammar (standard precedence, ``^`` binds tightest and is right associative)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('-' | '+') unary | power
    power   := primary ('^' unary)?
    primary := NUMBER | 'pi' | VARIABLE | FUNC '(' expr ')' | '(' expr ')'

Variables are ``x1``, ``x2``, ``x3`` (one-variable expressions such as
reparametrizations and curve components use ``t``).  Functions: sin, cos,
tan, exp, log, sqrt, arctan, arccos.  A non-integer exponent means
``exp(p*log(base))`` and needs ``base > 0``.

Metric and config files are UTF-8 text with one ``key = value`` pair per
line; ``#`` starts a comment.  Metric keys are ``g11 g12 g13 g22 g23 g33``
(``gji`` accepted for ``gij``; missing off-diagonal entries default to 0),
``signature`` (``+++`` or ``-++``) and ``name``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Union

import numpy as np

from . import jets
from .errors import (
    ArityError,
    DomainError,
    ExpressionSyntaxError,
    MetricFileError,
    MissingParam,
    OrderTooHigh,
    UnknownBuiltin,
    UnknownIdentifier,
)

MAX_ORDER = 6
COORDS = ("x1", "x2", "x3")
FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "arctan", "arccos")
COMPONENT_KEYS = ("g11", "g12", "g13", "g22", "g23", "g33")
COMPONENT_INDEX = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


# AST ----------------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based coordinate index


@dataclass(frozen=True)
class Neg:
    arg: "Expression"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expression"


Expression = Union[Const, Var, Neg, BinOp, Call]


def _fmt_number(v):
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def serialize(expr, names=COORDS):
    """Fully parenthesized source text; ``parse_expression`` maps it back to ``expr``."""
    if isinstance(expr, Const):
        text = _fmt_number(expr.value)
        return f"({text})" if expr.value < 0 or text.startswith("-") else text
    if isinstance(expr, Var):
        return names[expr.index - 1]
    if isinstance(expr, Neg):
        inner = serialize(expr.arg, names)
        # keep "-(3)" distinct from the literal -3
        return f"(-({inner}))" if isinstance(expr.arg, Const) else f"(-{inner})"
    if isinstance(expr, BinOp):
        return f"({serialize(expr.left, names)} {expr.op} {serialize(expr.right, names)})"
    if isinstance(expr, Call):
        return f"{expr.func}({serialize(expr.arg, names)})"
    raise TypeError(f"not an expression: {expr!r}")


def to_sexpr(expr, names=COORDS):
    """Prefix form, e.g. ``(+ (^ x1 2) (* x2 x3))``."""
    if isinstance(expr, Const):
        return _fmt_number(expr.value)
    if isinstance(expr, Var):
        return names[expr.index - 1]
    if isinstance(expr, Neg):
        return f"(- {to_sexpr(expr.arg, names)})"
    if isinstance(expr, BinOp):
        return f"({expr.op} {to_sexpr(expr.left, names)} {to_sexpr(expr.right, names)})"
    return f"({expr.func} {to_sexpr(expr.arg, names)})"


# parser -------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<id>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(src):
    tokens = []
    pos = 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            bad = len(src) - len(src[pos:].lstrip())
            raise ExpressionSyntaxError(f"unexpected character {src[bad]!r}", bad, src)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src, variables):
        self.src = src
        self.tokens = _tokenize(src)
        self.i = 0
        self.variables = {name: k + 1 for k, name in enumerate(variables)}

    def peek(self, ahead=0):
        return self.tokens[min(self.i + ahead, len(self.tokens) - 1)]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.peek()
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            raise ExpressionSyntaxError(f"expected {value!r}, found {found}", pos, self.src)
        self.take()

    def parse(self):
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExpressionSyntaxError(f"expected operator or end of input, found {text!r}", pos, self.src)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            nxt, after = self.peek(), self.peek(1)
            if nxt[0] == "num" and after[1] != "^":
                self.take()
                return Const(-float(nxt[1]))
            return Neg(self.unary())
        if kind == "op" and text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.primary()
        if self.peek() == ("op", "^", self.peek()[2]):
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def primary(self):
        kind, text, pos = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "id":
            if text in FUNCTIONS:
                if self.peek()[1] != "(":
                    k2, t2, p2 = self.peek()
                    found = "end of input" if k2 == "end" else repr(t2)
                    raise ExpressionSyntaxError(f"expected '(' after {text}, found {found}", p2, self.src)
                self.take()
                if self.peek()[1] == ")":
                    raise ArityError(text, 0)
                arg = self.expr()
                nargs = 1
                while self.peek()[1] == ",":
                    self.take()
                    self.expr()
                    nargs += 1
                if nargs != 1:
                    raise ArityError(text, nargs)
                self.expect(")")
                return Call(text, arg)
            if text in self.variables:
                return Var(self.variables[text])
            if text == "pi":
                return Const(math.pi)
            raise UnknownIdentifier(text, pos)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise ExpressionSyntaxError(f"expected a number, variable, function or '(', found {found}", pos, self.src)


def parse_expression(src, variables=COORDS):
    """Parse infix text into an :data:`Expression` tree."""
    if isinstance(src, (Const, Var, Neg, BinOp, Call)):
        return src
    if isinstance(src, (int, float)):
        return Const(float(src))
    return _Parser(str(src), variables).parse()


def variables_used(expr):
    if isinstance(expr, Var):
        return {expr.index}
    if isinstance(expr, Const):
        return set()
    if isinstance(expr, (Neg, Call)):
        return variables_used(expr.arg)
    return variables_used(expr.left) | variables_used(expr.right)


# evaluation ---------------------------------------------------------------

_FUNC_IMPL = {
    "sin": jets.sin,
    "cos": jets.cos,
    "tan": jets.tan,
    "exp": jets.exp,
    "log": jets.log,
    "sqrt": jets.sqrt,
    "arctan": jets.arctan,
    "arccos": jets.arccos,
}


def _pow(base, expo_node, expo):
    if isinstance(expo_node, Const) and float(expo_node.value).is_integer():
        n = int(expo_node.value)
        if isinstance(base, jets.Jet):
            return base ** n
        b = np.asarray(base, dtype=float)
        if n < 0 and np.any(b == 0):
            raise DomainError("zero raised to a negative power")
        return b ** n if b.ndim else float(b) ** n
    if np.any(np.asarray(jets.value_of(base)) <= 0):
        raise DomainError("non-integer power of a non-positive base")
    if isinstance(expo_node, Const):
        return jets.power(base, expo_node.value)
    return jets.exp(expo * jets.log(base))


def evaluate(expr, coords):
    """Evaluate ``expr`` with coordinate values ``coords`` (floats, arrays or Jets)."""
    try:
        return _eval(expr, coords)
    except ZeroDivisionError as exc:
        raise DomainError(str(exc)) from None


def _eval(node, coords):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return coords[node.index - 1]
    if isinstance(node, Neg):
        return -_eval(node.arg, coords)
    if isinstance(node, Call):
        arg = _eval(node.arg, coords)
        try:
            return _FUNC_IMPL[node.func](arg)
        except DomainError as exc:
            if exc.subexpression is None:
                raise DomainError(exc.message, serialize(node)) from None
            raise
    left = _eval(node.left, coords)
    right = _eval(node.right, coords)
    op = node.op
    try:
        if op == "+":
            return left + right
        if op == "-":
            return left - right
        if op == "*":
            return left * right
        if op == "/":
            if not isinstance(right, jets.Jet) and np.any(np.asarray(right) == 0):
                raise DomainError("division by zero")
            return left / right
        return _pow(left, node.right, right)
    except DomainError as exc:
        if exc.subexpression is None:
            raise DomainError(exc.message, serialize(node)) from None
        raise


def eval_jet(expr, point, order):
    """All partial derivatives of ``expr`` at ``point`` up to ``order``.

    Returns a :class:`~confgeo.jets.Jet` over ``Algebra([(3, order)])``;
    ``jet.partial(0, 1)`` is the mixed derivative in x1, x2.
    """
    order = int(order)
    if order < 0:
        raise ValueError("order must be non-negative")
    if order > MAX_ORDER:
        raise OrderTooHigh(f"derivative order {order} exceeds the cap {MAX_ORDER}")
    expr = parse_expression(expr)
    point = np.asarray(point, dtype=float)
    if point.shape[-1] != 3:
        raise ValueError("point must be a 3-vector")
    alg = jets.algebra(((3, order),))
    coords = [jets.Jet.variable(alg, i, point[..., i]) for i in range(3)]
    out = evaluate(expr, coords)
    if not isinstance(out, jets.Jet):
        out = jets.Jet.constant(alg, np.broadcast_to(out, point.shape[:-1]))
    return out


def eval_univariate(expr, t, order):
    """Derivatives ``[f(t), f'(t), ..., f^(order)(t)]`` of a one-variable expression."""
    expr = parse_expression(expr, variables=("t",))
    t = np.asarray(t, dtype=float)
    if order == 0:
        return np.broadcast_to(np.asarray(evaluate(expr, [t]), float), t.shape)[..., None].copy()
    alg = jets.algebra(((1, order),))
    out = evaluate(expr, [jets.Jet.variable(alg, 0, t)])
    if not isinstance(out, jets.Jet):
        out = jets.Jet.constant(alg, np.broadcast_to(out, t.shape))
    return out.c * alg.factorials


# metrics ------------------------------------------------------------------

_SIGNATURES = {
    "+++": "+++",
    "(+,+,+)": "+++",
    "riemannian": "+++",
    "-++": "-++",
    "(-,+,+)": "-++",
    "lorentzian": "-++",
}


@dataclass(frozen=True)
class MetricSpec:
    """Symmetric 3x3 metric given by six coordinate expressions.

    ``components`` is ordered g11, g12, g13, g22, g23, g33.
    """

    components: tuple
    signature: str = "+++"
    name: str = "metric"

    def __post_init__(self):
        comps = tuple(parse_expression(c) for c in self.components)
        if len(comps) != 6:
            raise MetricFileError("a metric needs exactly six components")
        object.__setattr__(self, "components", comps)
        sig = _SIGNATURES.get(str(self.signature).replace(" ", "").lower())
        if sig is None:
            raise MetricFileError(f"unknown signature {self.signature!r}")
        object.__setattr__(self, "signature", sig)

    @cached_property
    def is_constant(self):
        return not any(variables_used(c) for c in self.components)

    @property
    def riemannian(self):
        return self.signature == "+++"

    def component(self, i, j):
        i, j = min(i, j), max(i, j)
        return self.components[COMPONENT_INDEX.index((i, j))]

    @cached_property
    def _unique(self):
        keys = [serialize(c) for c in self.components]
        uniq = {}
        for k, c in zip(keys, self.components):
            uniq.setdefault(k, c)
        return keys, uniq

    def taylor(self, point, order):
        """Jet of shape (..., 3, 3) holding g_ij and its partials up to ``order``."""
        keys, uniq = self._unique
        values = {k: eval_jet(c, point, order) for k, c in uniq.items()}
        comp = [values[k] for k in keys]
        rows = [[comp[COMPONENT_INDEX.index((min(i, j), max(i, j)))] for j in range(3)] for i in range(3)]
        return _matrix(rows)

    def evaluate(self, point):
        """Numeric g_ij at ``point`` (shape (..., 3, 3))."""
        point = np.asarray(point, dtype=float)
        keys, uniq = self._unique
        coords = [point[..., 0], point[..., 1], point[..., 2]]
        values = {k: np.broadcast_to(np.asarray(evaluate(c, coords), float), point.shape[:-1]) for k, c in uniq.items()}
        g = np.empty(point.shape[:-1] + (3, 3))
        for (i, j), k in zip(COMPONENT_INDEX, keys):
            g[..., i, j] = values[k]
            g[..., j, i] = values[k]
        return g

    def to_text(self):
        lines = [f"name = {self.name}", f"signature = {self.signature}"]
        lines += [f"{key} = {serialize(c)}" for key, c in zip(COMPONENT_KEYS, self.components)]
        return "\n".join(lines) + "\n"

    def to_dict(self):
        d = {"name": self.name, "signature": self.signature}
        d.update({key: serialize(c) for key, c in zip(COMPONENT_KEYS, self.components)})
        return d


def _matrix(rows):
    # rows: 3x3 nested list of jets with identical shapes -> jet (..., 3, 3)
    alg = rows[0][0].alg
    c = np.stack([np.stack([x.c for x in r], axis=-2) for r in rows], axis=-3)
    return jets.Jet(alg, c)


def diagonal_metric(f1, f2, f3, name="diagonal", signature="+++"):
    return MetricSpec((f1, "0", "0", f2, "0", f3), signature, name)


def builtin_metric(name, params=None):
    """Construct one of the named metrics.

    ``euclidean``; ``diagonal`` (params f1, f2, f3); ``conformally_flat``
    (param phi, metric exp(2 phi) delta); ``sphere_stereographic`` (param
    radius r, metric 4 r^4 / (r^2 + |x|^2)^2 delta).
    """
    params = dict(params or {})

    def need(key):
        if key not in params:
            raise MissingParam(f"builtin {name!r} needs parameter {key!r}")
        return params[key]

    if name == "euclidean":
        return diagonal_metric("1", "1", "1", name="euclidean")
    if name == "diagonal":
        f1, f2, f3 = need("f1"), need("f2"), need("f3")
        label = f"diagonal({_src(f1)}, {_src(f2)}, {_src(f3)})"
        return diagonal_metric(f1, f2, f3, name=label)
    if name == "conformally_flat":
        phi = parse_expression(need("phi"))
        factor = Call("exp", BinOp("*", Const(2.0), phi))
        return diagonal_metric(factor, factor, factor, name=f"conformally_flat({_src(phi)})")
    if name == "sphere_stereographic":
        r = float(need("radius"))
        if r <= 0:
            raise MissingParam("radius must be positive")
        r2 = _fmt_number(r * r)
        r4 = _fmt_number(4 * r ** 4)
        factor = parse_expression(f"{r4}/({r2} + x1^2 + x2^2 + x3^2)^2")
        return diagonal_metric(factor, factor, factor, name=f"sphere_stereographic({_fmt_number(r)})")
    raise UnknownBuiltin(f"unknown builtin metric {name!r}")


def _src(e):
    return e if isinstance(e, str) else serialize(e)


# key = value files ----------------------------------------------------------

def parse_keyvalue(text):
    """Parse ``key = value`` lines into an ordered dict (values stay strings)."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise MetricFileError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise MetricFileError(f"line {lineno}: empty key")
        if key in out:
            raise MetricFileError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def metric_from_mapping(d, strict=True):
    comps = {}
    for key in COMPONENT_KEYS:
        alt = f"g{key[2]}{key[1]}"
        if key in d and alt in d and key != alt:
            raise MetricFileError(f"both {key} and {alt} given")
        if key in d:
            comps[key] = d[key]
        elif alt in d:
            comps[key] = d[alt]
    for key in ("g11", "g22", "g33"):
        if key not in comps:
            raise MetricFileError(f"missing diagonal component {key}")
    if strict:
        allowed = set(COMPONENT_KEYS) | {"g21", "g31", "g32", "signature", "name"}
        unknown = sorted(set(d) - allowed)
        if unknown:
            raise MetricFileError(f"unknown keys {unknown}")
    return MetricSpec(
        tuple(comps.get(k, "0") for k in COMPONENT_KEYS),
        d.get("signature", "+++"),
        d.get("name", "metric"),
    )


def load_metric(path):
    text = Path(path).read_text(encoding="utf-8")
    return metric_from_mapping(parse_keyvalue(text))


def save_metric(spec, path):
    Path(path).write_text(spec.to_text(), encoding="utf-8")
