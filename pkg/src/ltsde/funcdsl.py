"""Closed-form piecewise functions and the small text language that describes them.

Grammar (whitespace-insensitive)::

    piecewise := piece (";" piece)* [";"]
    piece     := "piece" cond ":" expr
    cond      := "all" | "x" ">=" num | "x" "<" num | num "<=" "x" "<" num
    expr      := term (("+" | "-") term)*
    term      := num
               | [num "*"] "x"
               | [num "*"] "exp" "(" expr ")"          inner expr must be affine
               | num "/" "(" "1" "+" square ")"
    square    := "(" [num "*"] "x" ")" "^" "2"  |  "x" "^" "2"
    num       := ["+" | "-"] NUMBER ["/" NUMBER]       e.g. 2, -0.5, 1e-3, 1/3

A piece's expression must reduce to one of four forms: a constant ``c``,
a line ``a + b*x``, an exponential ``c*exp(a + b*x)`` or the rational
bump ``c/(1+(s*x)^2)``.  Pieces are half-open ``[lower, upper)`` and must
partition the real line, so evaluation is right-continuous at breakpoints.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

INF = math.inf
JUMP_RTOL = 1e-12


class DSLSyntaxError(ValueError):
    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


class DSLDomainError(ValueError):
    """Pieces do not partition the real line."""


def _exp(v: float) -> float:
    with np.errstate(over="ignore"):
        return float(np.exp(v))


# ---------------------------------------------------------------------------
# forms


class _FloatFields:
    def __post_init__(self):
        for name, value in vars(self).items():
            object.__setattr__(self, name, float(value))


@dataclass(frozen=True)
class Constant(_FloatFields):
    c: float

    def params(self):
        return (self.c, 0.0, 0.0, 0.0, 0.0, 0.0)

    def derivative(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def negate(self):
        return Constant(-self.c)

    def infimum(self, lo, hi):
        return self.c

    def grows_superlinearly(self, lo, hi):
        return False

    def variation(self, lo, hi):
        return 0.0

    def render(self):
        return repr(self.c)


@dataclass(frozen=True)
class Linear(_FloatFields):
    """``a + b*x``"""

    a: float
    b: float

    def params(self):
        return (self.a, self.b, 0.0, 0.0, 0.0, 0.0)

    def derivative(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.b)

    def negate(self):
        return Linear(-self.a, -self.b)

    def infimum(self, lo, hi):
        if self.b == 0.0:
            return self.a
        end = lo if self.b > 0 else hi
        if math.isinf(end):
            return -INF
        return self.a + self.b * end

    def grows_superlinearly(self, lo, hi):
        return False

    def variation(self, lo, hi):
        if self.b == 0.0:
            return 0.0
        return abs(self.b) * (hi - lo)

    def render(self):
        return f"{self.a!r} + {self.b!r}*x"


@dataclass(frozen=True)
class Exponential(_FloatFields):
    """``c*exp(a + b*x)``"""

    c: float
    a: float
    b: float

    def params(self):
        return (0.0, 0.0, self.c, self.a, self.b, 0.0)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        return self.b * self.c * np.exp(self.a + self.b * x)

    def negate(self):
        return Exponential(-self.c, self.a, self.b)

    def _exponent_range(self, lo, hi):
        if self.b == 0.0:
            return self.a, self.a
        ends = [self.a + self.b * lo if not math.isinf(lo) else -math.copysign(INF, self.b),
                self.a + self.b * hi if not math.isinf(hi) else math.copysign(INF, self.b)]
        return min(ends), max(ends)

    def infimum(self, lo, hi):
        if self.c == 0.0:
            return 0.0
        gmin, gmax = self._exponent_range(lo, hi)
        return self.c * _exp(gmin if self.c > 0 else gmax)

    def grows_superlinearly(self, lo, hi):
        if self.c == 0.0 or self.b == 0.0:
            return False
        return (math.isinf(hi) and self.b > 0) or (math.isinf(lo) and self.b < 0)

    def variation(self, lo, hi):
        gmin, gmax = self._exponent_range(lo, hi)
        return abs(self.c) * (_exp(gmax) - _exp(gmin))

    def render(self):
        return f"{self.c!r}*exp({self.a!r} + {self.b!r}*x)"


@dataclass(frozen=True)
class Rational1(_FloatFields):
    """``c/(1+(s*x)^2)``"""

    c: float
    s: float

    def params(self):
        return (0.0, 0.0, self.c, 0.0, 0.0, self.s)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        q = 1.0 + (self.s * x) ** 2
        return -2.0 * self.c * self.s**2 * x / q**2

    def negate(self):
        return Rational1(-self.c, self.s)

    def _square_range(self, lo, hi):
        s2 = self.s * self.s
        if s2 == 0.0:
            return 0.0, 0.0
        qmin = 0.0 if lo <= 0.0 <= hi else s2 * min(lo * lo, hi * hi)
        qmax = s2 * max(lo * lo, hi * hi)
        return qmin, qmax

    def infimum(self, lo, hi):
        qmin, qmax = self._square_range(lo, hi)
        return self.c / (1.0 + (qmax if self.c > 0 else qmin))

    def grows_superlinearly(self, lo, hi):
        return False

    def variation(self, lo, hi):
        # monotone on each side of 0
        def val(x):
            return 0.0 if math.isinf(x) and self.s != 0.0 else self.c / (1.0 + (self.s * x) ** 2)
        if lo < 0.0 < hi:
            return abs(self.c - val(lo)) + abs(self.c - val(hi))
        return abs(val(hi) - val(lo))

    def render(self):
        return f"{self.c!r}/(1+({self.s!r}*x)^2)"


Form = Union[Constant, Linear, Exponential, Rational1]
FORM_TYPES = {"constant": Constant, "linear": Linear, "exponential": Exponential,
              "rational1": Rational1}
_FORM_NAMES = {v: k for k, v in FORM_TYPES.items()}


def _eval_params(p, x):
    # p0 + p1*x + p2*exp(p3 + p4*x) / (1 + (p5*x)^2) covers every form exactly;
    # the unused terms contribute exact zeros
    with np.errstate(over="ignore", invalid="ignore"):
        return p[..., 0] + p[..., 1] * x + p[..., 2] * np.exp(p[..., 3] + p[..., 4] * x) / (
            1.0 + (p[..., 5] * x) ** 2)


# ---------------------------------------------------------------------------
# piecewise container


@dataclass(frozen=True)
class Segment:
    lower: float
    upper: float
    form: Form

    def __post_init__(self):
        object.__setattr__(self, "lower", float(self.lower))
        object.__setattr__(self, "upper", float(self.upper))
        if not self.lower < self.upper:
            raise DSLDomainError(f"segment needs lower < upper, got [{self.lower}, {self.upper})")
        if not all(math.isfinite(v) for v in self.form.params()):
            raise DSLDomainError(f"non-finite parameters in {self.form}")

    def condition(self) -> str:
        lo, hi = self.lower, self.upper
        if math.isinf(lo) and math.isinf(hi):
            return "all"
        if math.isinf(lo):
            return f"x<{hi!r}"
        if math.isinf(hi):
            return f"x>={lo!r}"
        return f"{lo!r}<=x<{hi!r}"


@dataclass(frozen=True)
class Discontinuity:
    x: float
    left: float
    right: float


class PiecewiseFunction:
    """Right-continuous function given segment by segment in closed form."""

    def __init__(self, segments: Sequence[Segment]):
        segs = tuple(sorted(segments, key=lambda s: s.lower))
        if not segs:
            raise DSLDomainError("a piecewise function needs at least one piece")
        if not math.isinf(segs[0].lower) or segs[0].lower > 0:
            raise DSLDomainError(f"pieces leave a gap below {segs[0].lower}")
        if not (math.isinf(segs[-1].upper) and segs[-1].upper > 0):
            raise DSLDomainError(f"pieces leave a gap above {segs[-1].upper}")
        for s0, s1 in zip(segs, segs[1:]):
            if s0.upper < s1.lower:
                raise DSLDomainError(f"gap between {s0.upper} and {s1.lower}")
            if s0.upper > s1.lower:
                raise DSLDomainError(f"pieces overlap on [{s1.lower}, {s0.upper})")
        self.segments = segs
        self._breaks = np.array([s.lower for s in segs[1:]], dtype=float)
        self._params = np.array([s.form.params() for s in segs], dtype=float)

    # construction helpers
    @classmethod
    def constant(cls, c: float) -> "PiecewiseFunction":
        return cls([Segment(-INF, INF, Constant(float(c)))])

    @classmethod
    def from_forms(cls, breakpoints: Sequence[float], forms: Sequence[Form]) -> "PiecewiseFunction":
        """Forms on ``(-inf, b0), [b0, b1), ..., [b_last, inf)``."""
        edges = [-INF, *map(float, breakpoints), INF]
        if len(forms) != len(edges) - 1:
            raise DSLDomainError("need exactly one more form than breakpoints")
        return cls([Segment(lo, hi, f) for lo, hi, f in zip(edges, edges[1:], forms)])

    @property
    def breakpoints(self) -> np.ndarray:
        return self._breaks.copy()

    @property
    def forms(self) -> tuple:
        return tuple(s.form for s in self.segments)

    def segment_index(self, x, left: bool = False):
        return np.searchsorted(self._breaks, x, side="left" if left else "right")

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        return _eval_params(self._params[self.segment_index(x)], x)[()]

    __call__ = eval

    def eval_left(self, x):
        """Left limit at ``x``."""
        x = np.asarray(x, dtype=float)
        return _eval_params(self._params[self.segment_index(x, left=True)], x)[()]

    def derivative(self, x):
        """Pointwise derivative of the segment containing ``x``."""
        x = np.asarray(x, dtype=float)
        idx = np.atleast_1d(self.segment_index(x))
        xs = np.atleast_1d(x)
        out = np.empty_like(xs)
        for j in np.unique(idx):
            m = idx == j
            out[m] = self.segments[j].form.derivative(xs[m])
        return out.reshape(x.shape)[()]

    def discontinuities(self) -> list:
        """Breakpoints where the left limit differs from the value."""
        out = []
        for s0, s1 in zip(self.segments, self.segments[1:]):
            b = s1.lower
            left = float(_eval_params(np.array(s0.form.params()), b))
            right = float(_eval_params(np.array(s1.form.params()), b))
            if not math.isclose(left, right, rel_tol=JUMP_RTOL, abs_tol=0.0):
                out.append(Discontinuity(b, left, right))
        return out

    def is_continuous(self) -> bool:
        return not self.discontinuities()

    def infimum(self) -> float:
        """Exact infimum over the real line (closed form per segment)."""
        return min(s.form.infimum(s.lower, s.upper) for s in self.segments)

    def supremum(self) -> float:
        return -min(s.form.negate().infimum(s.lower, s.upper) for s in self.segments)

    def at_most_linear_growth(self) -> bool:
        return not any(s.form.grows_superlinearly(s.lower, s.upper) for s in self.segments)

    def total_variation(self) -> float:
        tv = sum(s.form.variation(s.lower, s.upper) for s in self.segments)
        tv += sum(abs(d.right - d.left) for d in self.discontinuities())
        return tv

    def render(self) -> str:
        return "; ".join(f"piece {s.condition()}: {s.form.render()}" for s in self.segments)

    def to_dict(self) -> dict:
        return {"segments": [
            {"lower": _json_num(s.lower), "upper": _json_num(s.upper),
             "form": _FORM_NAMES[type(s.form)], "params": dict(vars(s.form))}
            for s in self.segments]}

    @classmethod
    def from_dict(cls, data: dict) -> "PiecewiseFunction":
        segs = []
        for d in data["segments"]:
            form = FORM_TYPES[d["form"]](**d["params"])
            segs.append(Segment(float(d["lower"]), float(d["upper"]), form))
        return cls(segs)

    def __eq__(self, other):
        return isinstance(other, PiecewiseFunction) and self.segments == other.segments

    def __hash__(self):
        return hash(self.segments)

    def __repr__(self):
        return f"PiecewiseFunction({self.render()!r})"


def _json_num(v: float):
    if math.isinf(v):
        return "-inf" if v < 0 else "inf"
    return v


def bounded_below_check(f: PiecewiseFunction, eps: float) -> bool:
    """True iff ``f >= eps`` everywhere, judged by the exact infimum."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    return f.infimum() >= eps


def eval(f: PiecewiseFunction, x):  # noqa: A001
    return f.eval(x)


def eval_left(f: PiecewiseFunction, x):
    return f.eval_left(x)


# ---------------------------------------------------------------------------
# parser

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_]+)
  | (?P<op>>=|<=|[<:;*+\-/()^])
""", re.VERBOSE)


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list:
    toks, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise DSLSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), pos))
        pos = m.end()
    toks.append(_Tok("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    # token helpers
    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, tok: _Tok = None):
        tok = tok or self.tok
        return DSLSyntaxError(msg, tok.pos, self.text)

    def accept(self, text: str) -> bool:
        if self.tok.text == text and self.tok.kind in ("op", "name", "num"):
            self.i += 1
            return True
        return False

    def expect(self, text: str):
        if not self.accept(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")

    # grammar
    def piecewise(self) -> PiecewiseFunction:
        segments = [self.piece()]
        while self.accept(";"):
            if self.tok.kind == "end":
                break
            segments.append(self.piece())
        if self.tok.kind != "end":
            raise self.error(f"unexpected {self.tok.text!r}")
        return PiecewiseFunction(segments)

    def piece(self) -> Segment:
        start = self.tok
        self.expect("piece")
        lo, hi = self.cond()
        self.expect(":")
        form = self.expr()
        try:
            return Segment(lo, hi, form)
        except DSLDomainError as exc:
            raise DSLDomainError(f"{exc} (piece at position {start.pos})") from None

    def cond(self):
        if self.accept("all"):
            return -INF, INF
        if self.tok.text == "x":
            self.i += 1
            if self.accept(">="):
                return self.num(), INF
            self.expect("<")
            return -INF, self.num()
        lo = self.num()
        self.expect("<=")
        self.expect("x")
        self.expect("<")
        return lo, self.num()

    def at_num(self) -> bool:
        t = self.tok
        return t.kind == "num" or (t.text in "+-" and t.kind == "op" and self.peek().kind == "num")

    def num(self) -> float:
        sign = 1.0
        if self.tok.text in ("+", "-") and self.tok.kind == "op":
            sign = -1.0 if self.tok.text == "-" else 1.0
            self.i += 1
        if self.tok.kind != "num":
            raise self.error("expected a number")
        value = float(self.tok.text)
        self.i += 1
        if self.tok.text == "/" and self.peek().kind == "num":
            self.i += 1
            den = float(self.tok.text)
            if den == 0.0:
                raise self.error("division by zero")
            self.i += 1
            value /= den
        return sign * value

    def expr(self):
        """Returns a form; collects terms then classifies them."""
        start = self.tok
        const, slope, special = 0.0, 0.0, []
        has_x = False
        sign = 1.0
        if self.tok.text in ("+", "-") and self.tok.kind == "op" and self.peek().kind != "num":
            sign = -1.0 if self.tok.text == "-" else 1.0
            self.i += 1
        while True:
            kind, value = self.term()
            if kind == "const":
                const += sign * value
            elif kind == "x":
                slope += sign * value
                has_x = True
            else:
                special.append(value.negate() if sign < 0 else value)
            if self.tok.text in ("+", "-") and self.tok.kind == "op":
                sign = -1.0 if self.tok.text == "-" else 1.0
                self.i += 1
                # "+ -2*x" style: the sign belongs to the number that follows
            else:
                break
        if special:
            if len(special) > 1 or const != 0.0 or slope != 0.0:
                raise self.error("an expression must be a single constant, line, "
                                 "exponential or rational form", start)
            return special[0]
        # an explicit x term keeps the line form, even with zero slope
        return Linear(const, slope) if has_x else Constant(const)

    def term(self):
        # "x" or "exp(...)" without a coefficient
        if self.tok.text == "x":
            self.i += 1
            return "x", 1.0
        if self.tok.text == "exp":
            return "special", self.exp_tail(1.0)
        if not self.at_num():
            raise self.error("expected a term")
        coef = self.num()
        if self.accept("*"):
            if self.accept("x"):
                return "x", coef
            if self.tok.text == "exp":
                return "special", self.exp_tail(coef)
            raise self.error("expected 'x' or 'exp' after '*'")
        if self.tok.text == "/" and self.peek().text == "(":
            self.i += 1
            return "special", self.rational_tail(coef)
        return "const", coef

    def exp_tail(self, coef: float) -> Exponential:
        self.expect("exp")
        open_tok = self.tok
        self.expect("(")
        inner = self.expr()
        self.expect(")")
        if isinstance(inner, Constant):
            return Exponential(coef, inner.c, 0.0)
        if isinstance(inner, Linear):
            return Exponential(coef, inner.a, inner.b)
        raise self.error("exp() argument must be affine in x", open_tok)

    def rational_tail(self, coef: float) -> Rational1:
        self.expect("(")
        one = self.tok
        if self.num() != 1.0:
            raise self.error("rational form must read c/(1+(s*x)^2)", one)
        self.expect("+")
        if self.accept("("):
            s = 1.0
            if self.at_num():
                s = self.num()
                self.expect("*")
            self.expect("x")
            self.expect(")")
        else:
            s = 1.0
            self.expect("x")
        self.expect("^")
        two = self.tok
        if self.num() != 2.0:
            raise self.error("only the exponent 2 is supported", two)
        self.expect(")")
        return Rational1(coef, s)


def parse(text: str) -> PiecewiseFunction:
    """Parse a piecewise expression, e.g. ``"piece x>=0: exp(-x); piece x<0: exp(x)"``."""
    return _Parser(text).piecewise()


def render(f: PiecewiseFunction) -> str:
    return f.render()


def as_function(obj) -> PiecewiseFunction:
    if isinstance(obj, PiecewiseFunction):
        return obj
    if isinstance(obj, str):
        return parse(obj)
    if isinstance(obj, (int, float)):
        return PiecewiseFunction.constant(float(obj))
    raise TypeError(f"cannot interpret {obj!r} as a piecewise function")
