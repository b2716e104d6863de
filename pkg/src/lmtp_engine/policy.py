"""Intervention functions ``d_t(a_t, h_t, eps_t)`` and their declarative grammar.

A policy is a list of rules, one per time selector, written one per line::

    [<selector>] <kind>: <body>

Selectors are ``t=3``, ``t=0..5``, ``t>=6`` (also ``<=``, ``<``, ``>``); a line
without a selector is the default rule. The first matching selector wins.

Rule kinds::

    identity:                           natural value, unchanged
    static: <value>                     e.g. ``static: 0`` (optionally "at all t")
    dynamic: if <cond> then <v> [elif <cond> then <v>] else <v>
    stochastic: [law <law>;] if <cond> then <v|eps|law> else <v|eps|law>
    mtp: [law <law>;] if <cond> then <expr> else <expr>
    shift: add <delta> [when <cond>] [within <lo> <hi>]
    shift: multiply by <delta> [when <cond>] [within <lo> <hi>]
    threshold: <bound> cap-above|cap-below
    ipsi-rr: delta <delta> fallback <value>
    delay: trigger <level> fallback <level>

Conditions and expressions use Python operator syntax and may reference
``a`` (natural value of treatment), ``eps`` (the randomizer, drawn from the
rule's ``law``), ``t``, history columns by base name (current value), lags
such as ``L[-1]`` or ``A[-1]``, and ``window_any(L, 5)`` / ``window_all(L, 5)``
over ``L_{t-5}..L_t``. Laws are ``uniform()``, ``bernoulli(p)`` and
``normal(mean, sd)``. Expressions are interpreted from a whitelisted syntax
tree; nothing is executed.

Examples, one per common intervention type::

    static: 0                                       # nobody vapes
    dynamic: if night_shift == 1 then 1 else 0      # only night-shift workers vape
    stochastic: if night_shift == 1 then bernoulli(0.5) else 0
    mtp: if a == 1 then bernoulli(0.5) else a       # random half of vapers stop
    static: 10                                      # AQI fixed at 10
    dynamic: if urban == 1 then 40 else 20
    stochastic: if urban == 1 then normal(40, 5) else normal(20, 5)
    shift: multiply by 0.9 when a > 20
    t<=5 static: 1                                  # corticosteroids days 0..5
    t>=6 static: 0
    dynamic: if window_any(hypoxia, 5) then 1 else 0
    stochastic: if window_any(hypoxia, 5) then bernoulli(0.5) else 0
    delay: trigger 1 fallback 0
"""

from __future__ import annotations

import ast
import math
import re
import zlib
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import NoRandomizerError, PolicyError
from .panel import HistoryView

CATEGORIES = ("static", "dynamic", "stochastic", "mtp")
_RANK = {c: i for i, c in enumerate(CATEGORIES)}

# names that would make d depend on the observed data distribution
_DATA_STATISTICS = {
    "mean", "median", "quantile", "percentile", "sd", "std", "var", "variance",
    "min", "max", "observed", "data", "sample", "empirical", "propensity", "pi",
}
_INDEPENDENCE = ("the intervention must not depend on the distribution of the data "
                 "(technical requirement 1)")


# ---------------------------------------------------------------------------
# Randomizer laws and counter-based draws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Law:
    """Distribution of a randomizer, sampled by inverse CDF of a uniform."""

    name: str
    params: tuple[float, ...] = ()

    def __post_init__(self):
        if self.name == "uniform":
            if self.params:
                raise PolicyError("uniform() takes no parameters")
        elif self.name == "bernoulli":
            if len(self.params) != 1 or not 0.0 <= self.params[0] <= 1.0:
                raise PolicyError("bernoulli(p) needs 0 <= p <= 1")
        elif self.name == "normal":
            if len(self.params) != 2 or not self.params[1] > 0:
                raise PolicyError("normal(mean, sd) needs sd > 0")
        else:
            raise PolicyError(f"unknown law {self.name!r}")

    @property
    def discrete(self) -> bool:
        return self.name == "bernoulli"

    def ppf(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.name == "uniform":
            return u
        if self.name == "bernoulli":
            return (u < self.params[0]).astype(float)
        mean, sd = self.params
        return mean + sd * ndtri(u)

    def u_breakpoint(self, c: float) -> float:
        """Uniform-scale point where ``eps < c`` changes truth value."""
        if self.name == "uniform":
            return float(min(max(c, 0.0), 1.0))
        if self.name == "bernoulli":
            return float(self.params[0])
        mean, sd = self.params
        return float(ndtr((c - mean) / sd))

    def __str__(self):
        return f"{self.name}({', '.join(_num(p) for p in self.params)})"


_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _splitmix(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = x + _GOLDEN
        x = (x ^ (x >> np.uint64(30))) * _M1
        x = (x ^ (x >> np.uint64(27))) * _M2
        return x ^ (x >> np.uint64(31))


def unit_keys(unit_ids: Sequence[Any]) -> np.ndarray:
    """Stable integer keys for unit ids (ints as-is, other ids by CRC32)."""
    keys = []
    for u in unit_ids:
        if isinstance(u, (int, np.integer)):
            keys.append(int(u))
        else:
            keys.append(zlib.crc32(str(u).encode()))
    return np.array(keys, dtype=np.int64)


def uniform_draws(seed: int, keys: np.ndarray, t: int, stream: int = 0) -> np.ndarray:
    """Counter-based uniforms in (0, 1), a pure function of (seed, unit, t, stream)."""
    keys = np.asarray(keys, dtype=np.int64).astype(np.uint64)
    base = _splitmix(np.array([seed], dtype=np.int64).astype(np.uint64))
    x = _splitmix(base ^ keys)
    x = _splitmix(x ^ np.uint64(t & 0xFFFFFFFF))
    if stream:
        x = _splitmix(x ^ np.uint64(stream))
    return ((x >> np.uint64(11)).astype(float) + 0.5) / 2.0 ** 53


@dataclass(frozen=True)
class RandomizerDraw:
    """One draw of ``eps_t`` for a unit; ``uniform`` is the underlying counter draw."""

    unit: Any
    t: int
    uniform: float
    value: float


# ---------------------------------------------------------------------------
# History access
# ---------------------------------------------------------------------------

class HistoryFrame:
    """Vectorised view of ``H_t`` for many units (or one), keyed by column name."""

    def __init__(self, t: int, columns: Mapping[str, np.ndarray], exposure_name: str = "A",
                 size: int | None = None):
        self.t = t
        self.columns = columns
        self.exposure_name = exposure_name
        if size is None:
            size = len(next(iter(columns.values()))) if columns else 1
        self.size = size

    @classmethod
    def from_view(cls, view: HistoryView, exposure_name: str = "A") -> HistoryFrame:
        cols = {name: np.array([value], dtype=float) for name, value in view.items}
        return cls(view.t, cols, exposure_name, size=1)

    def _known(self, base: str) -> bool:
        if base in self.columns or base == self.exposure_name:
            return True
        pattern = re.compile(re.escape(base) + r"_\d+$")
        return any(pattern.match(c) for c in self.columns)

    def value(self, base: str, lag: int = 0) -> np.ndarray:
        if lag < 0:
            raise PolicyError("lags must refer to the past (use L[-1])")
        if lag == 0 and base in self.columns:
            return np.asarray(self.columns[base], dtype=float)
        if base == self.exposure_name and lag == 0:
            raise PolicyError(f"use 'a' for the natural value of {base} at the current time")
        s = self.t - lag
        name = f"{base}_{s}"
        if name in self.columns:
            return np.asarray(self.columns[name], dtype=float)
        if not self._known(base):
            raise PolicyError(f"unknown history column {base!r}")
        return np.full(self.size, np.nan)

    def exposures_before(self) -> list[np.ndarray]:
        return [self.value(self.exposure_name, lag) for lag in range(1, self.t + 1)]


@dataclass
class _Ctx:
    t: int
    a: np.ndarray
    hist: HistoryFrame
    u: np.ndarray | None
    law: Law | None

    def eps(self) -> np.ndarray:
        if self.u is None:
            raise NoRandomizerError("this rule needs a randomizer draw")
        if self.law is None:
            raise PolicyError("'eps' used without a declared law")
        return self.law.ppf(self.u)


# ---------------------------------------------------------------------------
# Expression trees
# ---------------------------------------------------------------------------

class Expr:
    symbols: frozenset = frozenset()

    def eval(self, ctx: _Ctx) -> np.ndarray:
        raise NotImplementedError

    def children(self) -> tuple[Expr, ...]:
        return ()

    def walk(self):
        yield self
        for child in self.children():
            yield from child.walk()


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def eval(self, ctx):
        return np.full(np.shape(ctx.a), self.value, dtype=float)

    def __str__(self):
        return _num(self.value)


@dataclass(frozen=True)
class Natural(Expr):
    symbols = frozenset({"a"})

    def eval(self, ctx):
        return np.asarray(ctx.a, dtype=float)

    def __str__(self):
        return "a"


@dataclass(frozen=True)
class Eps(Expr):
    symbols = frozenset({"eps"})

    def eval(self, ctx):
        return ctx.eps()

    def __str__(self):
        return "eps"


@dataclass(frozen=True)
class Time(Expr):
    symbols = frozenset({"t"})

    def eval(self, ctx):
        return np.full(np.shape(ctx.a), float(ctx.t))

    def __str__(self):
        return "t"


@dataclass(frozen=True)
class Hist(Expr):
    name: str
    lag: int = 0
    symbols = frozenset({"h"})

    def eval(self, ctx):
        return ctx.hist.value(self.name, self.lag)

    def __str__(self):
        return self.name if self.lag == 0 else f"{self.name}[-{self.lag}]"


@dataclass(frozen=True)
class Window(Expr):
    fn: str
    name: str
    width: int
    symbols = frozenset({"h"})

    def eval(self, ctx):
        vals = [ctx.hist.value(self.name, lag) for lag in range(0, self.width + 1)
                if ctx.t - lag >= 0]
        stack = np.vstack(vals) != 0
        out = stack.any(axis=0) if self.fn == "window_any" else stack.all(axis=0)
        return out.astype(float)

    def __str__(self):
        return f"{self.fn}({self.name}, {self.width})"


@dataclass(frozen=True)
class Draw(Expr):
    law: Law
    symbols = frozenset({"eps"})

    def eval(self, ctx):
        if ctx.u is None:
            raise NoRandomizerError("this rule needs a randomizer draw")
        return self.law.ppf(ctx.u)

    def __str__(self):
        return str(self.law)


_BINOPS = {ast.Add: ("+", np.add), ast.Sub: ("-", np.subtract), ast.Mult: ("*", np.multiply)}
_CMPOPS = {ast.Lt: ("<", np.less), ast.LtE: ("<=", np.less_equal), ast.Gt: (">", np.greater),
           ast.GtE: (">=", np.greater_equal), ast.Eq: ("==", np.equal),
           ast.NotEq: ("!=", np.not_equal)}


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    @property
    def symbols(self):
        return self.left.symbols | self.right.symbols

    def children(self):
        return (self.left, self.right)

    def eval(self, ctx):
        fn = {"+": np.add, "-": np.subtract, "*": np.multiply}[self.op]
        return fn(self.left.eval(ctx), self.right.eval(ctx))

    def __str__(self):
        return f"{self.left} {self.op} {self.right}"


@dataclass(frozen=True)
class Compare(Expr):
    operands: tuple[Expr, ...]
    ops: tuple[str, ...]

    @property
    def symbols(self):
        return frozenset().union(*(o.symbols for o in self.operands))

    def children(self):
        return self.operands

    def eval(self, ctx):
        fns = {s: f for s, f in _CMPOPS.values()}
        vals = [o.eval(ctx) for o in self.operands]
        out = np.ones(np.shape(ctx.a), dtype=bool)
        for op, lhs, rhs in zip(self.ops, vals, vals[1:]):
            out &= fns[op](lhs, rhs)
        return out.astype(float)

    def __str__(self):
        parts = [str(self.operands[0])]
        for op, rhs in zip(self.ops, self.operands[1:]):
            parts += [op, str(rhs)]
        return " ".join(parts)


@dataclass(frozen=True)
class BoolOp(Expr):
    op: str
    values: tuple[Expr, ...]

    @property
    def symbols(self):
        return frozenset().union(*(v.symbols for v in self.values))

    def children(self):
        return self.values

    def eval(self, ctx):
        vals = [v.eval(ctx) != 0 for v in self.values]
        red = np.logical_and.reduce if self.op == "and" else np.logical_or.reduce
        return red(vals).astype(float)

    def __str__(self):
        return f" {self.op} ".join(f"({v})" for v in self.values)


@dataclass(frozen=True)
class Not(Expr):
    operand: Expr

    @property
    def symbols(self):
        return self.operand.symbols

    def children(self):
        return (self.operand,)

    def eval(self, ctx):
        return (self.operand.eval(ctx) == 0).astype(float)

    def __str__(self):
        return f"not ({self.operand})"


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def _constant(node: ast.AST) -> float:
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        return float(node.value)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _constant(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    raise PolicyError(f"expected a numeric constant, got {ast.unparse(node)!r}")


def _law_from_call(node: ast.Call) -> Law:
    if node.keywords:
        raise PolicyError("law parameters are positional")
    return Law(node.func.id, tuple(_constant(a) for a in node.args))


def _convert(node: ast.AST) -> Expr:
    if isinstance(node, ast.Expression):
        return _convert(node.body)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool):
            return Const(float(node.value))
        return Const(_constant(node))
    if isinstance(node, ast.UnaryOp):
        if isinstance(node.op, ast.Not):
            return Not(_convert(node.operand))
        if isinstance(node.op, ast.USub):
            inner = _convert(node.operand)
            if isinstance(inner, Const):
                return Const(-inner.value)
            return BinOp("*", Const(-1.0), inner)
        if isinstance(node.op, ast.UAdd):
            return _convert(node.operand)
    if isinstance(node, ast.Name):
        name = node.id
        if name in _DATA_STATISTICS:
            raise PolicyError(f"{name!r} refers to a dataset statistic; {_INDEPENDENCE}")
        if name == "a":
            return Natural()
        if name == "eps":
            return Eps()
        if name == "t":
            return Time()
        return Hist(name)
    if isinstance(node, ast.Subscript):
        if not isinstance(node.value, ast.Name):
            raise PolicyError("only history columns can be lagged")
        lag = _constant(node.slice)
        if lag >= 0 or not float(lag).is_integer():
            raise PolicyError("lags are negative integers, e.g. L[-1]")
        return Hist(node.value.id, int(-lag))
    if isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise PolicyError(f"operator not allowed: {ast.unparse(node)!r}")
        return BinOp(_BINOPS[type(node.op)][0], _convert(node.left), _convert(node.right))
    if isinstance(node, ast.Compare):
        ops = []
        for op in node.ops:
            if type(op) not in _CMPOPS:
                raise PolicyError(f"comparison not allowed: {ast.unparse(node)!r}")
            ops.append(_CMPOPS[type(op)][0])
        operands = (_convert(node.left), *(_convert(c) for c in node.comparators))
        return Compare(operands, tuple(ops))
    if isinstance(node, ast.BoolOp):
        op = "and" if isinstance(node.op, ast.And) else "or"
        return BoolOp(op, tuple(_convert(v) for v in node.values))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        fn = node.func.id
        if fn in _DATA_STATISTICS:
            raise PolicyError(f"{fn}() refers to a dataset statistic; {_INDEPENDENCE}")
        if fn in ("uniform", "bernoulli", "normal"):
            return Draw(_law_from_call(node))
        if fn in ("window_any", "window_all"):
            if len(node.args) != 2 or not isinstance(node.args[0], ast.Name):
                raise PolicyError(f"{fn}(column, width) takes a column name and a width")
            width = _constant(node.args[1])
            if width < 0 or not width.is_integer():
                raise PolicyError("window width must be a non-negative integer")
            return Window(fn, node.args[0].id, int(width))
        raise PolicyError(f"unknown function {fn!r}")
    raise PolicyError(f"syntax not allowed in a policy: {ast.unparse(node)!r}")


def parse_expr(text: str) -> Expr:
    """Parse a condition or value expression into a whitelisted tree."""
    text = text.strip()
    if not text:
        raise PolicyError("empty expression")
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise PolicyError(f"cannot parse {text!r}: {exc.msg}") from None
    return _convert(tree)


def _category_of(symbols: frozenset) -> str:
    if "a" in symbols:
        return "mtp"
    if "eps" in symbols:
        return "stochastic"
    if "h" in symbols:
        return "dynamic"
    return "static"


def _eps_breakpoints(exprs: Sequence[Expr], law: Law | None) -> list[float] | None:
    """Uniform-scale cut points on which the rule's output is piecewise constant in u.

    ``None`` means the output varies continuously with the randomizer.
    """
    points: list[float] = []
    for root in exprs:
        for node in root.walk():
            if isinstance(node, Draw):
                if not node.law.discrete:
                    return None
                points.append(node.law.params[0])
            if isinstance(node, Compare):
                ops = node.operands
                for op, lhs, rhs in zip(node.ops, ops, ops[1:]):
                    if isinstance(lhs, Eps) or isinstance(rhs, Eps):
                        other = rhs if isinstance(lhs, Eps) else lhs
                        if not isinstance(other, Const) or law is None:
                            return None
                        points.append(law.u_breakpoint(other.value))
    return points


def _value_exprs(expr: Expr) -> list[Expr]:
    """Sub-expressions whose value can flow into the output (not only into a test)."""
    if isinstance(expr, (Compare, BoolOp, Not)):
        return []
    if isinstance(expr, BinOp):
        return [expr, *_value_exprs(expr.left), *_value_exprs(expr.right)]
    return [expr]


# ---------------------------------------------------------------------------
# Rules
# ---------------------------------------------------------------------------

class Rule:
    """One intervention function for a time point."""

    kind: str = "rule"
    law: Law | None = None

    @property
    def category(self) -> str:
        raise NotImplementedError

    def evaluate(self, ctx: _Ctx) -> np.ndarray:
        raise NotImplementedError

    def breakpoints(self) -> list[float] | None:
        return []

    @property
    def randomized(self) -> bool:
        return self.breakpoints() != []

    def parameters(self) -> tuple[float, ...]:
        return ()


@dataclass(frozen=True)
class Constant(Rule):
    value: float
    kind = "static"

    @property
    def category(self):
        return "static"

    def evaluate(self, ctx):
        return np.full(np.shape(ctx.a), self.value, dtype=float)

    def parameters(self):
        return (self.value,)

    def __str__(self):
        return f"static: {_num(self.value)}"


@dataclass(frozen=True)
class BranchRule(Rule):
    """``if cond then value elif ... else value``; covers covariate and randomised rules."""

    branches: tuple[tuple[Expr, Expr], ...]
    otherwise: Expr
    law: Law | None = None
    declared: str = "mtp"

    kind = "branch"

    def _exprs(self) -> list[Expr]:
        out = [self.otherwise]
        for cond, value in self.branches:
            out += [cond, value]
        return out

    @property
    def category(self):
        symbols = frozenset().union(*(e.symbols for e in self._exprs()))
        return _category_of(symbols)

    def evaluate(self, ctx):
        ctx.law = self.law
        out = self.otherwise.eval(ctx)
        for cond, value in reversed(self.branches):
            out = np.where(cond.eval(ctx) != 0, value.eval(ctx), out)
        return out

    def breakpoints(self):
        for e in [self.otherwise, *(v for _, v in self.branches)]:
            for part in _value_exprs(e):
                if isinstance(part, Eps) and (self.law is None or not self.law.discrete):
                    return None
        return _eps_breakpoints(self._exprs(), self.law)

    def parameters(self):
        return tuple(n.value for e in self._exprs() for n in e.walk() if isinstance(n, Const))

    def __str__(self):
        head = f"{self.category}: " + (f"law {self.law}; " if self.law else "")
        if not self.branches:
            return head + str(self.otherwise)
        parts = []
        for i, (cond, value) in enumerate(self.branches):
            parts.append(f"{'if' if i == 0 else 'elif'} {cond} then {value}")
        return head + " ".join(parts) + f" else {self.otherwise}"


@dataclass(frozen=True)
class Shift(Rule):
    """Additive or multiplicative shift of the natural value, optionally guarded."""

    op: str
    delta: float
    guard: Expr | None = None
    within: tuple[float, float] | None = None

    kind = "shift"

    def __post_init__(self):
        if self.op not in ("add", "multiply"):
            raise PolicyError(f"unknown shift {self.op!r}")
        if not math.isfinite(self.delta):
            raise PolicyError("shift amount must be finite")
        if self.guard is not None and "eps" in self.guard.symbols:
            raise PolicyError("shift guards may reference only a and the history")
        if self.within is not None and not self.within[0] <= self.within[1]:
            raise PolicyError("within bounds must satisfy lo <= hi")

    @property
    def category(self):
        return "mtp"

    @property
    def is_identity(self) -> bool:
        return (self.op == "add" and self.delta == 0) or (self.op == "multiply"
                                                           and self.delta == 1)

    def evaluate(self, ctx):
        a = np.asarray(ctx.a, dtype=float)
        shifted = a + self.delta if self.op == "add" else a * self.delta
        apply = np.ones(a.shape, dtype=bool)
        if self.guard is not None:
            apply &= self.guard.eval(ctx) != 0
        if self.within is not None:
            lo, hi = self.within
            apply &= (shifted >= lo) & (shifted <= hi)
        return np.where(apply, shifted, a)

    def parameters(self):
        return (self.delta, *(self.within or ()))

    def __str__(self):
        if self.is_identity and self.guard is None and self.within is None:
            return "identity"
        body = f"add {_num(self.delta)}" if self.op == "add" else f"multiply by {_num(self.delta)}"
        if self.guard is not None:
            body += f" when {self.guard}"
        if self.within is not None:
            body += f" within {_num(self.within[0])} {_num(self.within[1])}"
        return f"shift: {body}"


@dataclass(frozen=True)
class Threshold(Rule):
    bound: float
    direction: str = "cap-above"
    kind = "threshold"

    def __post_init__(self):
        if self.direction not in ("cap-above", "cap-below"):
            raise PolicyError("threshold direction is cap-above or cap-below")

    @property
    def category(self):
        return "mtp"

    def evaluate(self, ctx):
        a = np.asarray(ctx.a, dtype=float)
        if self.direction == "cap-above":
            return np.where(a < self.bound, a, self.bound)
        return np.where(a > self.bound, a, self.bound)

    def parameters(self):
        return (self.bound,)

    def __str__(self):
        return f"threshold: {_num(self.bound)} {self.direction}"


@dataclass(frozen=True)
class RiskRatioIPSI(Rule):
    """Keep the natural value when ``eps < delta`` (eps ~ uniform), else the fallback."""

    delta: float
    fallback: float = 0.0
    kind = "ipsi-rr"
    law = Law("uniform")

    def __post_init__(self):
        if not 0.0 < self.delta <= 1.0:
            raise PolicyError(f"ipsi-rr delta must lie in (0, 1], got {self.delta!r}")

    @property
    def category(self):
        return "mtp"

    def evaluate(self, ctx):
        if ctx.u is None:
            raise NoRandomizerError("ipsi-rr needs a randomizer draw")
        return np.where(ctx.u < self.delta, np.asarray(ctx.a, dtype=float), self.fallback)

    def breakpoints(self):
        return [self.delta]

    def parameters(self):
        return (self.delta, self.fallback)

    def __str__(self):
        return f"ipsi-rr: delta {_num(self.delta)} fallback {_num(self.fallback)}"


@dataclass(frozen=True)
class DelayDiscrete(Rule):
    """Replace the first occurrence of ``trigger`` in the history by ``fallback``."""

    trigger: float
    fallback: float
    kind = "delay"

    @property
    def category(self):
        return "mtp"

    def evaluate(self, ctx):
        a = np.asarray(ctx.a, dtype=float)
        prior = np.zeros(a.shape, dtype=bool)
        for past in ctx.hist.exposures_before():
            prior |= past == self.trigger
        return np.where((a == self.trigger) & ~prior, self.fallback, a)

    def parameters(self):
        return (self.trigger, self.fallback)

    def __str__(self):
        return f"delay: trigger {_num(self.trigger)} fallback {_num(self.fallback)}"


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeSelector:
    lo: int = 0
    hi: float = math.inf

    def matches(self, t: int) -> bool:
        return self.lo <= t <= self.hi

    def __str__(self):
        if self.lo == self.hi:
            return f"t={self.lo}"
        if self.hi == math.inf:
            return f"t>={self.lo}"
        if self.lo == 0:
            return f"t<={int(self.hi)}"
        return f"t={self.lo}..{int(self.hi)}"


@dataclass(frozen=True)
class Policy:
    """An intervention: per-time rules plus a default rule and a randomizer seed."""

    rules: tuple[tuple[TimeSelector, Rule], ...] = ()
    default: Rule | None = None
    seed: int = 0
    exposure_kind: str | None = None
    name: str = ""

    def rule_at(self, t: int) -> Rule:
        for sel, rule in self.rules:
            if sel.matches(t):
                return rule
        if self.default is None:
            raise PolicyError(f"policy has no rule for time {t}")
        return self.default

    def all_rules(self) -> list[Rule]:
        out = [rule for _, rule in self.rules]
        if self.default is not None:
            out.append(self.default)
        return out

    @property
    def category(self) -> str:
        return max((r.category for r in self.all_rules()), key=_RANK.__getitem__,
                   default="static")

    @property
    def uses_natural_value(self) -> bool:
        return any(r.category == "mtp" for r in self.all_rules())

    @property
    def is_identity(self) -> bool:
        return all(isinstance(r, Shift) and r.is_identity and r.guard is None
                   and r.within is None for r in self.all_rules())

    def draws(self, t: int, keys: np.ndarray) -> np.ndarray:
        return uniform_draws(self.seed, keys, t)

    def apply(self, t: int, a: np.ndarray, hist: HistoryFrame, u: np.ndarray | None = None,
              keys: np.ndarray | None = None) -> np.ndarray:
        """Vectorised ``d_t``; draws ``u`` from ``keys`` when the rule is randomised."""
        rule = self.rule_at(t)
        a = np.asarray(a, dtype=float)
        if u is None and rule.randomized:
            if keys is None:
                raise NoRandomizerError("randomised rule evaluated without unit keys or draws")
            u = self.draws(t, keys)
        return rule.evaluate(_Ctx(t, a, hist, u, rule.law))

    def components(self, t: int, a: np.ndarray, hist: HistoryFrame,
                   keys: np.ndarray | None = None) -> list[tuple[np.ndarray, float]]:
        """Exact distribution of ``d_t`` over the randomizer as (values, probability) pairs.

        Rules whose output varies continuously with the randomizer fall back to a
        single component holding each unit's own draw.
        """
        rule = self.rule_at(t)
        a = np.asarray(a, dtype=float)
        cuts = rule.breakpoints()
        if cuts is None:
            return [(self.apply(t, a, hist, keys=keys), 1.0)]
        grid = sorted({0.0, 1.0, *(min(max(c, 0.0), 1.0) for c in cuts)})
        out = []
        for lo, hi in zip(grid, grid[1:]):
            if hi <= lo:
                continue
            u = np.full(a.shape, 0.5 * (lo + hi))
            out.append((rule.evaluate(_Ctx(t, a, hist, u, rule.law)), hi - lo))
        return out

    def __str__(self):
        lines = [f"{sel} {rule}" for sel, rule in self.rules]
        if self.default is not None:
            lines.append(str(self.default))
        return "\n".join(lines)


_SELECTOR = re.compile(r"^\s*t\s*(=|>=|<=|>|<)\s*(\d+)(?:\s*\.\.\s*(\d+))?\s+")
_KINDS = ("identity", "static", "dynamic", "stochastic", "mtp", "shift", "threshold",
          "ipsi-rr", "delay")


def _parse_selector(op: str, x: str, y: str | None) -> TimeSelector:
    lo, hi = int(x), None
    if y is not None:
        if op != "=":
            raise PolicyError("ranges are written t=lo..hi")
        hi = int(y)
        if hi < lo:
            raise PolicyError("empty time range")
        return TimeSelector(lo, hi)
    return {"=": TimeSelector(lo, lo), ">=": TimeSelector(lo, math.inf),
            ">": TimeSelector(lo + 1, math.inf), "<=": TimeSelector(0, lo),
            "<": TimeSelector(0, lo - 1)}[op]


def _parse_number(text: str, what: str) -> float:
    try:
        return _constant(ast.parse(text.strip(), mode="eval").body)
    except (SyntaxError, PolicyError):
        pass
    # surface the more specific complaint (e.g. a dataset statistic) if there is one
    parse_expr(text)
    raise PolicyError(f"{what} must be a number, got {text.strip()!r}")


def _parse_law(text: str) -> Law:
    text = text.strip()
    if text == "uniform":
        return Law("uniform")
    expr = parse_expr(text)
    if not isinstance(expr, Draw):
        raise PolicyError(f"expected a law such as uniform() or bernoulli(0.5), got {text!r}")
    return expr.law


def _parse_branches(body: str, kind: str) -> BranchRule:
    law = None
    m = re.match(r"^\s*law\s+([^;]+);(.*)$", body, flags=re.S)
    if m:
        law = _parse_law(m.group(1))
        body = m.group(2)
    tokens = re.split(r"\b(if|then|elif|else)\b", body)
    tokens = [tok.strip() for tok in tokens]
    if tokens and tokens[0] == "":
        tokens = tokens[1:]
    branches = []
    otherwise = None
    if tokens and tokens[0] not in ("if", "then", "elif", "else"):
        if len(tokens) != 1:
            raise PolicyError(f"cannot parse rule body {body.strip()!r}")
        otherwise = parse_expr(tokens[0])
    else:
        i = 0
        while i < len(tokens):
            key = tokens[i]
            if key in ("if", "elif"):
                if key == "if" and branches:
                    raise PolicyError("use 'elif' for additional branches")
                if i + 3 >= len(tokens) or tokens[i + 2] != "then":
                    raise PolicyError(f"expected '{key} <cond> then <value>'")
                branches.append((parse_expr(tokens[i + 1]), parse_expr(tokens[i + 3])))
                i += 4
            elif key == "else":
                if i + 1 >= len(tokens) or i + 2 != len(tokens):
                    raise PolicyError("'else <value>' must end the rule")
                otherwise = parse_expr(tokens[i + 1])
                i += 2
            else:
                raise PolicyError(f"unexpected {key!r} in rule")
        if otherwise is None:
            raise PolicyError("conditional rules need an 'else' value")
    if law is None:
        for e in [otherwise, *(x for br in branches for x in br)]:
            if any(isinstance(n, Eps) for n in e.walk()):
                law = Law("uniform")
    rule = BranchRule(tuple(branches), otherwise, law, kind)
    if _RANK[rule.category] > _RANK[kind]:
        raise PolicyError(f"rule declared {kind} but is {rule.category} "
                          f"(it reads {'the natural value a' if rule.category == 'mtp' else 'eps'})")
    return rule


def _parse_rule(kind: str, body: str) -> Rule:
    body = body.strip()
    if kind == "identity":
        if body:
            raise PolicyError("identity takes no arguments")
        return Shift("add", 0.0)
    if kind == "static":
        body = re.sub(r"\s+at\s+all\s+t\s*$", "", body)
        return Constant(_parse_number(body, "static value"))
    if kind in ("dynamic", "stochastic", "mtp"):
        return _parse_branches(body, kind)
    if kind == "shift":
        m = re.match(r"^(add|subtract|multiply\s+by)\s+(\S+)(.*)$", body)
        if not m:
            raise PolicyError(f"shift expects 'add <d>' or 'multiply by <d>', got {body!r}")
        verb, amount, rest = m.group(1), _parse_number(m.group(2), "shift amount"), m.group(3)
        op = "multiply" if verb.startswith("multiply") else "add"
        if verb == "subtract":
            amount = -amount
        within = None
        mw = re.search(r"\bwithin\s+(\S+)\s+(\S+)\s*$", rest)
        if mw:
            within = (_parse_number(mw.group(1), "within lo"),
                      _parse_number(mw.group(2), "within hi"))
            rest = rest[:mw.start()]
        guard = None
        rest = rest.strip()
        if rest:
            if not rest.startswith("when"):
                raise PolicyError(f"unexpected text in shift: {rest!r}")
            guard = parse_expr(rest[4:])
        return Shift(op, amount, guard, within)
    if kind == "threshold":
        parts = body.split()
        if len(parts) != 2:
            raise PolicyError("threshold expects '<bound> cap-above|cap-below'")
        return Threshold(_parse_number(parts[0], "threshold bound"), parts[1])
    if kind == "ipsi-rr":
        m = re.match(r"^delta\s+(\S+)\s+fallback\s+(\S+)$", body)
        if not m:
            raise PolicyError("ipsi-rr expects 'delta <d> fallback <value>'")
        return RiskRatioIPSI(_parse_number(m.group(1), "delta"),
                             _parse_number(m.group(2), "fallback"))
    if kind == "delay":
        m = re.match(r"^trigger\s+(\S+)\s+fallback\s+(\S+)$", body)
        if not m:
            raise PolicyError("delay expects 'trigger <level> fallback <level>'")
        return DelayDiscrete(_parse_number(m.group(1), "trigger"),
                             _parse_number(m.group(2), "fallback"))
    raise PolicyError(f"unknown rule {kind!r}; expected one of {', '.join(_KINDS)}")


def parse_policy_spec(spec: str, seed: int = 0, exposure_kind: str | None = None,
                      name: str = "") -> Policy:
    """Parse the declarative policy text into a :class:`Policy`."""
    rules: list[tuple[TimeSelector, Rule]] = []
    default = None
    lines = [ln.split("#", 1)[0].strip() for ln in spec.strip().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise PolicyError("empty policy specification")
    for line in lines:
        selector = None
        m = _SELECTOR.match(line)
        if m:
            selector = _parse_selector(*m.groups())
            line = line[m.end():]
        kind, sep, body = line.partition(":")
        kind = kind.strip()
        if not sep and kind != "identity":
            raise PolicyError(f"expected '<rule>: <arguments>', got {line!r}")
        rule = _parse_rule(kind, body)
        if selector is None:
            if default is not None:
                raise PolicyError("more than one default rule")
            default = rule
        else:
            rules.append((selector, rule))
    return Policy(tuple(rules), default, seed=seed, exposure_kind=exposure_kind, name=name)


def identity_policy(seed: int = 0) -> Policy:
    return Policy(default=Shift("add", 0.0), seed=seed, name="identity")


def static_policy(value: float) -> Policy:
    return Policy(default=Constant(float(value)), name=f"static {value}")


# ---------------------------------------------------------------------------
# Evaluation API
# ---------------------------------------------------------------------------

def evaluate_policy(policy: Policy, t: int, a: float, h: HistoryView,
                    eps: RandomizerDraw | None = None, exposure_name: str = "A") -> float:
    """``d_t(a, h, eps)`` for a single unit."""
    rule = policy.rule_at(t)
    if rule.randomized and eps is None:
        raise NoRandomizerError(f"rule '{rule}' needs a randomizer draw")
    u = None if eps is None else np.array([eps.uniform])
    hist = HistoryFrame.from_view(h, exposure_name)
    out = rule.evaluate(_Ctx(t, np.array([float(a)]), hist, u, rule.law))
    return float(out[0])


def draw_randomizer(policy: Policy, seed: int, unit, t: int) -> RandomizerDraw:
    """Deterministic draw of ``eps_t`` for ``unit`` under ``seed``."""
    rule = policy.rule_at(t)
    if not rule.randomized:
        raise NoRandomizerError(f"rule '{rule}' at time {t} has no randomizer")
    u = float(uniform_draws(seed, unit_keys([unit]), t)[0])
    law = rule.law or Law("uniform")
    return RandomizerDraw(unit=unit, t=t, uniform=u, value=float(law.ppf(np.array([u]))[0]))


# ---------------------------------------------------------------------------
# Technical-requirement validation
# ---------------------------------------------------------------------------

_CONSEQUENCE = ("estimators lose root-n consistency: confidence intervals, p-values, and "
                "standard errors will be incorrect")


@dataclass(frozen=True)
class PolicyValidation:
    passed: bool
    violations: tuple[tuple[str, str], ...] = ()
    consequence: str = ""
    notes: tuple[str, ...] = field(default_factory=tuple)

    def message(self) -> str:
        if self.passed:
            return "PASS"
        lines = [f"FAIL: rule '{rule}': {reason}" for rule, reason in self.violations]
        lines.append(f"consequence: {self.consequence}")
        return "\n".join(lines)


def _guard_ok(guard: Expr | None) -> bool:
    if guard is None:
        return True
    for node in guard.walk():
        if isinstance(node, (Eps, Draw)):
            return False
    return True


def validate_policy_requirements(policy: Policy, exposure_kind: str) -> PolicyValidation:
    """Check independence from the data law and piecewise smooth invertibility."""
    violations = []
    for rule in policy.all_rules():
        params = rule.parameters()
        if any(not isinstance(p, float) or not math.isfinite(p) for p in params):
            violations.append((str(rule), "parameters must be finite constants; "
                               + _INDEPENDENCE))
            continue
        if exposure_kind != "continuous":
            continue
        if not isinstance(rule, Shift):
            violations.append((str(rule), "not piecewise smooth invertible as a function of "
                               "the natural value; with a continuous exposure only additive "
                               "or multiplicative shifts are admissible"))
        elif rule.op == "multiply" and rule.delta == 0:
            violations.append((str(rule), "multiplying by 0 is not piecewise smooth invertible"))
        elif not _guard_ok(rule.guard):
            violations.append((str(rule), "shift guards may use only a and the history"))
    if violations:
        return PolicyValidation(False, tuple(violations), _CONSEQUENCE)
    notes = ()
    if exposure_kind != "continuous":
        notes = ("discrete exposure: the invertibility requirement does not apply",)
    return PolicyValidation(True, (), "", notes)
