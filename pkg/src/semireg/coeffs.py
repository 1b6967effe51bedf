"""Polynomial coefficients for square-root diffusions on the unit cube.

A coefficient system pairs a drift field ``b = (b_1, ..., b_d)`` (polynomials
in ``d`` variables) with squared-diffusion profiles ``a_1, ..., a_d``
(univariate polynomials).  Everything here is exact polynomial arithmetic so
that derivative-based constants downstream carry no differentiation error.

Expression grammar accepted by :func:`parse_poly`::

    expr    := term (("+" | "-") term)*
    term    := unary ("*" unary)*
    unary   := ("+" | "-") unary | power
    power   := atom ("^" INTEGER)?
    atom    := NUMBER | VARIABLE | "(" expr ")"
    VARIABLE:= "x" DIGITS          (1-based; plain "x" when arity is 1)
    NUMBER  := DIGITS ("." DIGITS?)? (("e" | "E") ("+" | "-")? DIGITS)?
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

# A monomial is a sorted tuple of (variable index, exponent) pairs, exponent > 0.
Monomial = tuple


class PolySyntaxError(ValueError):
    """Raised for malformed expressions; ``position`` is a 0-based offset."""

    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


def _mono_key(mono: Monomial):
    # Lexicographic order on dense exponent vectors, computed sparsely:
    # a smaller variable index with positive exponent sorts later.
    return tuple((-j, e) for j, e in mono)


def _mono_mul(m1: Monomial, m2: Monomial) -> Monomial:
    if not m1:
        return m2
    if not m2:
        return m1
    acc = dict(m1)
    for j, e in m2:
        acc[j] = acc.get(j, 0) + e
    return tuple(sorted(acc.items()))


class PolyExpr:
    """Immutable sparse multivariate polynomial with real coefficients.

    Terms are stored sparsely; :attr:`terms` exposes them as a mapping from
    dense exponent vectors (length ``arity``) to coefficients, in canonical
    lexicographic order.
    """

    __slots__ = ("_items", "arity", "_hash")

    def __init__(self, terms: Mapping | Iterable = (), arity: int = 1, *, _sparse: bool = False):
        if arity < 1:
            raise ValueError("arity must be a positive integer")
        self.arity = int(arity)
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict = {}
        for mono, coef in items:
            if _sparse:
                key = mono
            else:
                exps = tuple(int(e) for e in mono)
                if len(exps) != self.arity:
                    raise ValueError(
                        f"exponent vector {exps} has length {len(exps)}, expected {self.arity}")
                if any(e < 0 for e in exps):
                    raise ValueError(f"negative exponent in {exps}")
                key = tuple((j, e) for j, e in enumerate(exps) if e)
            acc[key] = acc.get(key, 0.0) + float(coef)
        for mono in acc:
            for j, _ in mono:
                if not 0 <= j < self.arity:
                    raise ValueError(f"variable index {j + 1} out of range for arity {self.arity}")
        self._items = tuple(sorted(((m, c) for m, c in acc.items() if c != 0.0),
                                   key=lambda mc: _mono_key(mc[0])))
        self._hash = None

    # -- constructors -----------------------------------------------------
    @classmethod
    def from_sparse(cls, items, arity: int) -> "PolyExpr":
        return cls(items, arity, _sparse=True)

    @classmethod
    def constant(cls, value: float, arity: int = 1) -> "PolyExpr":
        return cls.from_sparse([((), value)], arity)

    @classmethod
    def variable(cls, index: int, arity: int) -> "PolyExpr":
        """The coordinate polynomial ``x_index`` (1-based)."""
        if not 1 <= index <= arity:
            raise ValueError(f"variable x{index} out of range for arity {arity}")
        return cls.from_sparse([(((index - 1, 1),), 1.0)], arity)

    # -- inspection -------------------------------------------------------
    @property
    def sparse_terms(self) -> tuple:
        return self._items

    @property
    def terms(self) -> dict:
        out = {}
        for mono, coef in self._items:
            dense = [0] * self.arity
            for j, e in mono:
                dense[j] = e
            out[tuple(dense)] = coef
        return out

    @property
    def degree(self) -> int:
        return max((sum(e for _, e in m) for m, _ in self._items), default=0)

    @property
    def variables(self) -> tuple:
        """Sorted 0-based indices of variables that actually occur."""
        return tuple(sorted({j for m, _ in self._items for j, _ in m}))

    def is_zero(self) -> bool:
        return not self._items

    def is_constant(self) -> bool:
        return all(not m for m, _ in self._items)

    def is_affine(self) -> bool:
        return self.degree <= 1

    def constant_term(self) -> float:
        for m, c in self._items:
            if not m:
                return c
        return 0.0

    # -- arithmetic -------------------------------------------------------
    def _coerce(self, other) -> "PolyExpr":
        if isinstance(other, PolyExpr):
            if other.arity != self.arity:
                raise ValueError("arity mismatch")
            return other
        return PolyExpr.constant(float(other), self.arity)

    def __add__(self, other):
        other = self._coerce(other)
        return PolyExpr.from_sparse(self._items + other._items, self.arity)

    __radd__ = __add__

    def __neg__(self):
        return PolyExpr.from_sparse([(m, -c) for m, c in self._items], self.arity)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        prods = [(_mono_mul(m1, m2), c1 * c2)
                 for m1, c1 in self._items for m2, c2 in other._items]
        return PolyExpr.from_sparse(prods, self.arity)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if not isinstance(n, (int, np.integer)) or n < 0:
            raise ValueError("exponent must be a nonnegative integer")
        out = PolyExpr.constant(1.0, self.arity)
        base = self
        n = int(n)
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def __eq__(self, other):
        if not isinstance(other, PolyExpr):
            return NotImplemented
        return self.arity == other.arity and self._items == other._items

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.arity, self._items))
        return self._hash

    def __repr__(self):
        return f"PolyExpr({format_poly(self)!r}, arity={self.arity})"

    def __str__(self):
        return format_poly(self)

    # -- calculus / evaluation -------------------------------------------
    def partial(self, axis: int) -> "PolyExpr":
        return partial(self, axis)

    def derivative(self, alpha: Sequence[int]) -> "PolyExpr":
        """``∂^alpha`` for a multiindex ``alpha`` of length ``arity``."""
        if len(alpha) != self.arity:
            raise ValueError("multiindex length must equal arity")
        p = self
        for axis, k in enumerate(alpha, start=1):
            for _ in range(int(k)):
                p = partial(p, axis)
                if p.is_zero():
                    return p
        return p

    def restrict(self, axis: int, value: float) -> "PolyExpr":
        """Substitute ``x_axis = value``; arity is kept (the variable drops out)."""
        j0 = axis - 1
        items = []
        for mono, coef in self._items:
            factor = 1.0
            rest = []
            for j, e in mono:
                if j == j0:
                    factor = value ** e
                else:
                    rest.append((j, e))
            items.append((tuple(rest), coef * factor))
        return PolyExpr.from_sparse(items, self.arity)

    def __call__(self, x):
        """Evaluate at points ``x`` of shape ``(..., arity)`` (or scalars when arity 1)."""
        x = np.asarray(x, dtype=float)
        if self.arity == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        if x.shape[-1] != self.arity:
            raise ValueError(f"expected last axis of length {self.arity}, got {x.shape}")
        out = np.zeros(x.shape[:-1])
        powers: dict = {}
        for mono, coef in self._items:
            term = np.full(x.shape[:-1], coef)
            for j, e in mono:
                key = (j, e)
                if key not in powers:
                    powers[key] = x[..., j] ** e
                term = term * powers[key]
            out = out + term
        return out if out.ndim else float(out)


def partial(p: PolyExpr, axis: int) -> PolyExpr:
    """Exact partial derivative of ``p`` along 1-based ``axis``."""
    if not 1 <= axis <= p.arity:
        raise ValueError(f"axis {axis} out of range for arity {p.arity}")
    j0 = axis - 1
    items = []
    for mono, coef in p.sparse_terms:
        for k, (j, e) in enumerate(mono):
            if j == j0:
                rest = mono[:k] + (((j, e - 1),) if e > 1 else ()) + mono[k + 1:]
                items.append((rest, coef * e))
                break
    return PolyExpr.from_sparse(items, p.arity)


def _fmt_coef(c: float) -> str:
    if c.is_integer() and abs(c) < 1e15:
        return str(int(c))
    return repr(c)


def format_poly(p: PolyExpr) -> str:
    """Canonical text form; ``parse_poly(format_poly(p), p.arity) == p``."""
    if p.is_zero():
        return "0"
    var = (lambda j: "x") if p.arity == 1 else (lambda j: f"x{j + 1}")
    pieces = []
    for mono, coef in p.sparse_terms:
        factors = [var(j) + (f"^{e}" if e > 1 else "") for j, e in mono]
        mag = abs(coef)
        if factors and mag == 1.0:
            body = "*".join(factors)
        else:
            body = "*".join([_fmt_coef(mag)] + factors)
        sign = "-" if coef < 0 else "+"
        if not pieces:
            pieces.append(("-" if coef < 0 else "") + body)
        else:
            pieces.append(f" {sign} {body}")
    return "".join(pieces)


# -- parser -----------------------------------------------------------------
_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<var>x\d*)|(?P<op>[-+*^()]))")


def _tokenize(text: str):
    pos = 0
    toks = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise PolySyntaxError(f"unexpected character {text[bad]!r}", bad, text)
        kind = m.lastgroup
        start = m.start(kind)
        toks.append((kind, m.group(kind), start))
        pos = m.end()
    toks.append(("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str, arity: int):
        self.text = text
        self.arity = arity
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        raise PolySyntaxError(msg, tok[2], self.text)

    def parse(self) -> PolyExpr:
        if self.peek()[0] == "end":
            self.error("empty expression")
        p = self.expr()
        if self.peek()[0] != "end":
            self.error(f"unexpected token {self.peek()[1]!r}")
        return p

    def expr(self):
        p = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            q = self.term()
            p = p + q if op == "+" else p - q
        return p

    def term(self):
        p = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] == "*":
            self.take()
            p = p * self.unary()
        return p

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in ("+", "-"):
            self.take()
            p = self.unary()
            return -p if tok[1] == "-" else p
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            tok = self.peek()
            if tok[0] == "op" and tok[1] == "-":
                self.error("negative exponent", tok)
            if tok[0] != "num":
                self.error("exponent must be a nonnegative integer literal", tok)
            self.take()
            if not re.fullmatch(r"\d+", tok[1]):
                self.error("exponent must be a nonnegative integer literal", tok)
            return base ** int(tok[1])
        return base

    def atom(self):
        tok = self.take()
        kind, val, pos = tok
        if kind == "num":
            return PolyExpr.constant(float(val), self.arity)
        if kind == "var":
            if val == "x":
                if self.arity != 1:
                    self.error("bare 'x' only allowed for arity 1; use x1..xd", tok)
                idx = 1
            else:
                idx = int(val[1:])
            if not 1 <= idx <= self.arity:
                self.error(f"variable {val} out of range for arity {self.arity}", tok)
            return PolyExpr.variable(idx, self.arity)
        if kind == "op" and val == "(":
            p = self.expr()
            close = self.peek()
            if not (close[0] == "op" and close[1] == ")"):
                self.error("expected ')'", close)
            self.take()
            return p
        self.i -= 1
        self.error("expected a number, variable, or '('" if kind != "end"
                   else "unexpected end of expression")


def parse_poly(text: str, arity: int) -> PolyExpr:
    """Parse ``text`` into a :class:`PolyExpr` of the given arity."""
    if arity < 1:
        raise ValueError("arity must be a positive integer")
    return _Parser(text, arity).parse()


# -- coefficient systems -------------------------------------------------------
@dataclass(frozen=True)
class CoefficientSystem:
    """Drift ``b_i`` (arity ``dim``) and squared diffusions ``a_i`` (arity 1)."""

    dim: int
    drift: tuple
    sqdiff: tuple
    name: str = "custom"
    params: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "drift", tuple(self.drift))
        object.__setattr__(self, "sqdiff", tuple(self.sqdiff))
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if len(self.drift) != self.dim or len(self.sqdiff) != self.dim:
            raise ValueError("need exactly dim drift and dim sqdiff polynomials")
        for b in self.drift:
            if b.arity != self.dim:
                raise ValueError("drift polynomials must have arity dim")
        for a in self.sqdiff:
            if a.arity != 1:
                raise ValueError("squared-diffusion polynomials must be univariate")

    @classmethod
    def from_strings(cls, drift: Sequence[str], sqdiff: Sequence[str], name="custom"):
        d = len(drift)
        return cls(d, [parse_poly(s, d) for s in drift], [parse_poly(s, 1) for s in sqdiff],
                   name=name)

    def has_drift(self) -> bool:
        return any(not b.is_zero() for b in self.drift)

    def has_diffusion(self) -> bool:
        return any(not a.is_zero() for a in self.sqdiff)

    def drift_only(self) -> "CoefficientSystem":
        zero = PolyExpr((), 1)
        return CoefficientSystem(self.dim, self.drift, [zero] * self.dim,
                                 name=self.name + "/drift", params=self.params)

    def diffusion_only(self) -> "CoefficientSystem":
        zero = PolyExpr((), self.dim)
        return CoefficientSystem(self.dim, [zero] * self.dim, self.sqdiff,
                                 name=self.name + "/diffusion", params=self.params)

    def drift_values(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack([b(x) for b in self.drift], axis=-1)


@dataclass(frozen=True)
class Violation:
    invariant: str
    coordinate: int
    witness: tuple
    value: float


@dataclass
class ValidationReport:
    admissible: bool
    violations: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def __bool__(self):
        return self.admissible


INTERIOR_GRID = 10_000
FACE_GRID = 1_000
MAX_SAMPLED_FACES = 64


def _exact_value_at(p: PolyExpr, point: Sequence[float]) -> Fraction:
    total = Fraction(0)
    for mono, coef in p.sparse_terms:
        term = Fraction(coef)
        for j, e in mono:
            term *= Fraction(point[j]) ** e
        total += term
    return total


def _face_points(d: int, axis: int, n_target: int) -> np.ndarray:
    """Tensor grid (or Halton sample) on a face; includes all face corners when small."""
    free = d - 1
    if free == 0:
        return np.zeros((1, 0))
    per_axis = max(2, int(math.floor(n_target ** (1.0 / free) + 1e-9)))
    if per_axis ** free <= n_target and per_axis >= 2 and free <= 3:
        g = np.linspace(0.0, 1.0, per_axis)
        mesh = np.stack(np.meshgrid(*([g] * free), indexing="ij"), axis=-1)
        return mesh.reshape(-1, free)
    from scipy.stats import qmc
    pts = qmc.Halton(free, scramble=True, seed=1_000 + axis).random(n_target)
    return pts


def validate(sys: CoefficientSystem) -> ValidationReport:
    """Check the admissibility conditions on ``sys``.

    Endpoint zeros of ``a_i`` are checked exactly, interior positivity on a
    10^4-point grid, and the inward-pointing drift condition exactly on affine
    faces or on a 10^3-point face grid otherwise.  A squared diffusion that is
    identically zero is accepted (pure-drift setting) and noted.
    """
    rep = ValidationReport(admissible=True)
    interior = np.linspace(0.0, 1.0, INTERIOR_GRID + 2)[1:-1]
    for i, a in enumerate(sys.sqdiff, start=1):
        if a.is_zero():
            rep.notes.append(f"a_{i} is identically zero (pure-drift coordinate)")
            continue
        at0 = _exact_value_at(a, (0.0,))
        at1 = _exact_value_at(a, (1.0,))
        if at0 != 0:
            rep.violations.append(Violation("sqdiff-zero-at-0", i, (0.0,), float(at0)))
        if at1 != 0:
            rep.violations.append(Violation("sqdiff-zero-at-1", i, (1.0,), float(at1)))
        vals = a(interior)
        k = int(np.argmin(vals))
        if vals[k] <= 0.0:
            rep.violations.append(
                Violation("sqdiff-interior-positive", i, (float(interior[k]),), float(vals[k])))
    rep.notes.append(f"interior positivity sampled on {INTERIOR_GRID} points per coordinate")

    d = sys.dim
    faces = [(i, s) for i in range(1, d + 1) for s in (0, 1)]
    nonaffine = []
    for i, s in faces:
        face = sys.drift[i - 1].restrict(i, float(s))
        sign = 1.0 if s == 0 else -1.0
        g = face * sign
        if g.is_affine():
            # exact minimum over the face: pick each free variable at its worst end
            vertex = [0.0] * d
            vertex[i - 1] = float(s)
            for mono, coef in g.sparse_terms:
                if mono and coef < 0:
                    vertex[mono[0][0]] = 1.0
            val = _exact_value_at(g, vertex)
            if val < 0:
                rep.violations.append(
                    Violation("drift-inward", i, tuple(vertex), float(val)))
        else:
            nonaffine.append((i, s, g))
    if d > 6 and len(nonaffine) > MAX_SAMPLED_FACES:
        rng = np.random.default_rng(20_240_601)
        pick = sorted(rng.choice(len(nonaffine), MAX_SAMPLED_FACES, replace=False))
        rep.notes.append(f"{len(nonaffine)} non-affine faces; sampled {MAX_SAMPLED_FACES}")
        nonaffine = [nonaffine[k] for k in pick]
    for i, s, g in nonaffine:
        free = _face_points(d, i, FACE_GRID)
        pts = np.insert(free, i - 1, float(s), axis=1)
        vals = g(pts)
        k = int(np.argmin(vals))
        if vals[k] < 0.0:
            rep.violations.append(
                Violation("drift-inward", i, tuple(float(v) for v in pts[k]), float(vals[k])))
    rep.admissible = not rep.violations
    return rep


# -- builtin families ------------------------------------------------------------
BUILTINS = ("wright-fisher", "logistic-drift", "migration", "mutation", "zero-drift",
            "zero-diffusion")


def _wf() -> PolyExpr:
    return PolyExpr.from_sparse([(((0, 1),), 1.0), (((0, 2),), -1.0)], 1)


def _relaxation(d: int, kappa: float, targets) -> list:
    """b_i = kappa * (target_i - x_i), where target_i is an affine form given sparsely."""
    out = []
    for i in range(d):
        items = [((j,), kappa * c) for j, c in targets(i)]
        items = [(((j, 1),) if j >= 0 else (), c) for (j,), c in items]
        items.append((((i, 1),), -kappa))
        out.append(PolyExpr.from_sparse(items, d))
    return out


def builtin(name: str, params: Mapping | None = None, dim: int = 1) -> CoefficientSystem:
    """Closed-form coefficient families.

    ``wright-fisher``: ``b = 0``, ``a_i = x(1-x)``.
    ``logistic-drift(c)``: ``b_i = c x_i (1-x_i)``, Wright-Fisher noise.
    ``migration(kappa)``: ``b_i = kappa (mean(x) - x_i)``, Wright-Fisher noise.
    ``mutation(kappa, mbar)``: ``b_i = kappa (mbar - x_i)``, Wright-Fisher noise.
    ``zero-drift(sigma2)``: ``b = 0``, ``a_i = sigma2 x(1-x)``.
    ``zero-diffusion(kappa, mbar)``: ``b_i = kappa (mbar - x_i)``, ``a = 0``.
    """
    params = dict(params or {})
    if dim < 1:
        raise ValueError("dim must be positive")
    d = dim
    zero_d = PolyExpr((), d)
    wf = _wf()

    def get(key, default):
        return float(params.pop(key, default))

    if name == "wright-fisher":
        drift, sq, used = [zero_d] * d, [wf] * d, ()
    elif name == "logistic-drift":
        c = get("c", 1.0)
        drift = [PolyExpr.from_sparse([(((i, 1),), c), (((i, 2),), -c)], d) for i in range(d)]
        sq, used = [wf] * d, (("c", c),)
    elif name == "migration":
        kappa = get("kappa", 1.0)
        if kappa < 0:
            raise ValueError("migration rate kappa must be nonnegative")
        drift = _relaxation(d, kappa, lambda i: [(j, 1.0 / d) for j in range(d)])
        sq, used = [wf] * d, (("kappa", kappa),)
    elif name in ("mutation", "zero-diffusion"):
        kappa = get("kappa", 1.0)
        mbar = get("mbar", 0.5 if name == "mutation" else 0.0)
        if kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if not 0.0 <= mbar <= 1.0:
            raise ValueError(f"mbar={mbar} outside [0, 1]")
        drift = _relaxation(d, kappa, lambda i: [(-1, mbar)])
        sq = [wf] * d if name == "mutation" else [PolyExpr((), 1)] * d
        used = (("kappa", kappa), ("mbar", mbar))
    elif name == "zero-drift":
        s2 = get("sigma2", 1.0)
        if s2 <= 0:
            raise ValueError("sigma2 must be positive")
        drift, sq, used = [zero_d] * d, [wf * s2] * d, (("sigma2", s2),)
    else:
        raise ValueError(f"unknown builtin family {name!r}; expected one of {BUILTINS}")
    if params:
        raise ValueError(f"unexpected parameters for {name}: {sorted(params)}")
    return CoefficientSystem(d, drift, sq, name=name, params=used)


# -- test functions --------------------------------------------------------------------
class TestFunction:
    """A function on ``[0, 1]^d`` with exact partial derivatives."""

    __test__ = False  # keep pytest from collecting this as a test class
    arity: int

    def __call__(self, x):
        raise NotImplementedError

    def derivative(self, alpha: Sequence[int]) -> "TestFunction":
        raise NotImplementedError

    def sup_exact(self):
        """Exact sup norm when available in closed form, else ``None``."""
        return None

    def describe(self) -> str:
        raise NotImplementedError


class PolyFunction(TestFunction):
    def __init__(self, poly: PolyExpr):
        self.poly = poly
        self.arity = poly.arity

    def __call__(self, x):
        return self.poly(x)

    def derivative(self, alpha):
        return PolyFunction(self.poly.derivative(alpha))

    def sup_exact(self):
        if self.poly.is_constant():
            return abs(self.poly.constant_term())
        return None

    def describe(self):
        return format_poly(self.poly)

    def __repr__(self):
        return f"PolyFunction({self.describe()!r})"


class CosineProduct(TestFunction):
    """``scale * prod_i cos(k_i pi x_i + q_i pi / 2)`` for integers ``k_i >= 0``.

    With integer frequencies every factor reaches ``±1`` (or is a constant),
    so sup norms of all partials are available in closed form.
    """

    def __init__(self, freqs: Sequence[int], scale: float = 1.0, phases: Sequence[int] | None = None):
        self.freqs = tuple(int(k) for k in freqs)
        if any(k < 0 for k in self.freqs):
            raise ValueError("frequencies must be nonnegative integers")
        self.phases = tuple(int(q) % 4 for q in (phases or [0] * len(self.freqs)))
        self.scale = float(scale)
        self.arity = len(self.freqs)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.arity == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        out = np.full(x.shape[:-1], self.scale)
        for j, (k, q) in enumerate(zip(self.freqs, self.phases)):
            out = out * np.cos(k * math.pi * x[..., j] + q * math.pi / 2)
        return out if out.ndim else float(out)

    def derivative(self, alpha):
        if len(alpha) != self.arity:
            raise ValueError("multiindex length must equal arity")
        scale = self.scale
        phases = list(self.phases)
        for j, n in enumerate(alpha):
            if n:
                scale *= (self.freqs[j] * math.pi) ** n
                phases[j] += n
        return CosineProduct(self.freqs, scale, phases)

    def sup_exact(self):
        s = abs(self.scale)
        for k, q in zip(self.freqs, self.phases):
            if k == 0:
                s *= abs(round(math.cos(q * math.pi / 2)))
        return s

    def describe(self):
        return f"cos-product(k={list(self.freqs)}, q={list(self.phases)}, scale={self.scale!r})"

    def __repr__(self):
        return self.describe()


def as_test_function(f, dim: int | None = None) -> TestFunction:
    """Coerce a string, :class:`PolyExpr`, or :class:`TestFunction`."""
    if isinstance(f, TestFunction):
        return f
    if isinstance(f, PolyExpr):
        return PolyFunction(f)
    if isinstance(f, str):
        if dim is None:
            raise ValueError("dim is required to parse a string test function")
        return PolyFunction(parse_poly(f, dim))
    raise TypeError(f"cannot interpret {f!r} as a test function")


def mean_function(dim: int) -> PolyFunction:
    """``x -> (x_1 + ... + x_d) / d``."""
    return PolyFunction(PolyExpr.from_sparse([(((j, 1),), 1.0 / dim) for j in range(dim)], dim))


def named_function(tag: str, dim: int, **params) -> TestFunction:
    """Named analytic families: ``cos-product`` (every axis ``cos(k pi x_i)``), ``sin-product``."""
    k = int(params.get("k", 1))
    scale = float(params.get("scale", 1.0))
    if tag == "cos-product":
        return CosineProduct([k] * dim, scale)
    if tag == "sin-product":
        return CosineProduct([k] * dim, scale, [3] * dim)
    if tag == "mean":
        return mean_function(dim)
    raise ValueError(f"unknown named test function {tag!r}")


def multiindices(d: int, max_order: int, min_order: int = 0):
    """All ``alpha`` in ``N_0^d`` with ``min_order <= |alpha| <= max_order`` (graded lex order)."""
    out = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            out.append(tuple(prefix + [remaining]))
            return
        for k in range(remaining, -1, -1):
            rec(prefix + [k], remaining - k, slots - 1)

    for order in range(min_order, max_order + 1):
        rec([], order, d)
    return out
