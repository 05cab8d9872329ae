"""Symbolic kernel expressions.

Expressions are immutable trees built from base kernels, sigmoid masks,
sums, products, changepoints and changewindows.  Sums and products are
flattened and their children kept in a canonical order on construction, so
two expressions that differ only in the order of commutative operands
compare equal and print identically.

Text syntax::

    expr  := term ('+' term)*
    term  := atom ('*' atom)*
    atom  := NAME '(' params ')'
           | 'CP(' expr ',' expr ';' location ',' steepness ')'
           | 'CW(' expr ',' expr ';' start ',' end ',' steepness ')'
           | '(' expr ')'

``NAME`` is one of ``WN C SE PER COS LIN`` (base kernels) or
``SIG SIGBAR WIN WINBAR`` (sigmoid masks, which appear when a changepoint
is distributed into sum-of-products form).
"""

from __future__ import annotations

import enum
import itertools
import math
import re
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union


class Kind(enum.IntEnum):
    """Base kernel kinds, valued in canonical print order."""

    WN = 0
    C = 1
    SE = 2
    PER = 3
    COS = 4
    LIN = 5


class MaskKind(enum.IntEnum):
    """Sigmoid masks produced by expanding CP and CW nodes."""

    SIG = 0  # sigma(x) sigma(x'): active before the location
    SIGBAR = 1  # (1 - sigma(x)) (1 - sigma(x')): active after the location
    WIN = 2  # m(x) m(x'): active inside the window
    WINBAR = 3  # (1 - m(x)) (1 - m(x')): active outside the window


PARAM_NAMES = {
    Kind.WN: ("variance",),
    Kind.C: ("variance",),
    Kind.SE: ("variance", "lengthscale"),
    Kind.PER: ("variance", "lengthscale", "period"),
    Kind.COS: ("variance", "period"),
    Kind.LIN: ("variance", "offset"),
}

# kept apart from PARAM_NAMES: IntEnum members of both enums hash alike
MASK_PARAM_NAMES = {
    MaskKind.SIG: ("location", "steepness"),
    MaskKind.SIGBAR: ("location", "steepness"),
    MaskKind.WIN: ("start", "end", "steepness"),
    MaskKind.WINBAR: ("start", "end", "steepness"),
}

# parameters that may take any real value; everything else must be > 0
UNCONSTRAINED = frozenset({"offset", "location", "start", "end"})

STATIONARY = frozenset({Kind.WN, Kind.C, Kind.SE, Kind.PER, Kind.COS})


class KernelSyntaxError(ValueError):
    """Raised when a kernel string cannot be parsed."""

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


def _check_params(name: str, names: Sequence[str], values: tuple[float, ...]) -> None:
    if len(values) != len(names):
        raise ValueError(
            f"{name} requires {len(names)} parameter{'s' if len(names) > 1 else ''}, "
            f"got {len(values)}"
        )
    for pname, v in zip(names, values):
        # NaN marks a parameter the optimizer must initialise
        if math.isnan(v):
            continue
        if math.isinf(v):
            raise ValueError(f"{name} {pname} must be finite")
        if pname not in UNCONSTRAINED and v <= 0:
            raise ValueError(f"{name} {pname} must be positive, got {v!r}")


def fmt_float(v: float) -> str:
    """Shortest repr that round-trips, without a trailing ``.0``."""
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def _key_params(params: tuple[float, ...]) -> tuple[float, ...]:
    return tuple(math.inf if math.isnan(p) else p for p in params)


# ---------------------------------------------------------------------------
# expression nodes


@dataclass(frozen=True)
class Base:
    kind: Kind
    params: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        _check_params(self.kind.name, PARAM_NAMES[self.kind], self.params)

    def __str__(self):
        return f"{self.kind.name}({','.join(fmt_float(p) for p in self.params)})"

    @property
    def variance(self) -> float:
        return self.params[0]


@dataclass(frozen=True)
class Mask:
    kind: MaskKind
    params: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "kind", MaskKind(self.kind))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        _check_params(self.kind.name, MASK_PARAM_NAMES[self.kind], self.params)
        if self.kind in (MaskKind.WIN, MaskKind.WINBAR):
            _check_window(self.params[0], self.params[1])

    def __str__(self):
        return f"{self.kind.name}({','.join(fmt_float(p) for p in self.params)})"


def _check_window(start: float, end: float) -> None:
    if not (math.isnan(start) or math.isnan(end)) and not start < end:
        raise ValueError(f"window start {start!r} must be below end {end!r}")


class _Composite:
    """Shared canonicalisation for Sum and Product."""

    children: tuple

    def __post_init__(self):
        flat = []
        for c in self.children:
            if type(c) is type(self):
                flat.extend(c.children)
            else:
                flat.append(c)
        if len(flat) < 2:
            raise ValueError(f"{type(self).__name__} needs at least two operands")
        object.__setattr__(self, "children", tuple(sorted(flat, key=sort_key)))


@dataclass(frozen=True)
class Sum(_Composite):
    children: tuple

    def __post_init__(self):
        _Composite.__post_init__(self)

    def __str__(self):
        return " + ".join(str(c) for c in self.children)


@dataclass(frozen=True)
class Product(_Composite):
    children: tuple

    def __post_init__(self):
        _Composite.__post_init__(self)

    def __str__(self):
        return " * ".join(f"({c})" if isinstance(c, Sum) else str(c) for c in self.children)


@dataclass(frozen=True)
class ChangePoint:
    left: "KernelExpr"
    right: "KernelExpr"
    location: float
    steepness: float

    def __post_init__(self):
        object.__setattr__(self, "location", float(self.location))
        object.__setattr__(self, "steepness", float(self.steepness))
        _check_params("CP", ("location", "steepness"), self.params)

    @property
    def params(self) -> tuple[float, float]:
        return (self.location, self.steepness)

    def __str__(self):
        return f"CP({self.left}, {self.right}; {fmt_float(self.location)}, {fmt_float(self.steepness)})"


@dataclass(frozen=True)
class ChangeWindow:
    left: "KernelExpr"
    right: "KernelExpr"
    start: float
    end: float
    steepness: float

    def __post_init__(self):
        for name in ("start", "end", "steepness"):
            object.__setattr__(self, name, float(getattr(self, name)))
        _check_params("CW", ("start", "end", "steepness"), self.params)
        _check_window(self.start, self.end)

    @property
    def params(self) -> tuple[float, float, float]:
        return (self.start, self.end, self.steepness)

    def __str__(self):
        p = ", ".join(fmt_float(v) for v in self.params)
        return f"CW({self.left}, {self.right}; {p})"


KernelExpr = Union[Base, Mask, Sum, Product, ChangePoint, ChangeWindow]
Leaf = Union[Base, Mask]

_COMPOSITE_RANK = {Product: 2, Sum: 3, ChangePoint: 4, ChangeWindow: 5}


def sort_key(node: KernelExpr) -> tuple:
    """Canonical ordering: base kinds, then masks, then composites."""
    if isinstance(node, Base):
        return (0, int(node.kind), _key_params(node.params))
    if isinstance(node, Mask):
        return (1, int(node.kind), _key_params(node.params))
    return (_COMPOSITE_RANK[type(node)], 0, str(node))


# ---------------------------------------------------------------------------
# printing, parsing, structure


def print_kernel(expr: KernelExpr) -> str:
    """Deterministic text form; re-parses to an equal expression."""
    return str(expr)


def structure(expr: KernelExpr) -> str:
    """Canonical print with all parameters stripped, e.g. ``CP(SE, WN)``."""
    if isinstance(expr, (Base, Mask)):
        return expr.kind.name
    if isinstance(expr, Sum):
        return " + ".join(sorted(structure(c) for c in expr.children))
    if isinstance(expr, Product):
        parts = sorted(
            f"({structure(c)})" if isinstance(c, Sum) else structure(c) for c in expr.children
        )
        return " * ".join(parts)
    name = "CP" if isinstance(expr, ChangePoint) else "CW"
    return f"{name}({structure(expr.left)}, {structure(expr.right)})"


_TOKEN = re.compile(
    r"\s*(?:(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?nan|[-+]?inf)"
    r"|(?P<name>[A-Za-z_]+)|(?P<op>[()+*,;]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise KernelSyntaxError(f"unexpected character {text[pos]!r}", pos)
        start = m.start(m.lastgroup)
        tokens.append((m.lastgroup, m.group(m.lastgroup), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind: str, value: str | None = None):
        tok = self.tokens[self.i]
        if tok[0] != kind or (value is not None and tok[1] != value):
            want = value if value is not None else kind
            got = tok[1] or "end of input"
            raise KernelSyntaxError(f"expected {want!r}, found {got!r}", tok[2])
        self.i += 1
        return tok

    def parse(self) -> KernelExpr:
        expr = self.expr()
        self.take("end")
        return expr

    def expr(self):
        terms = [self.term()]
        while self.peek()[:2] == ("op", "+"):
            self.i += 1
            terms.append(self.term())
        return terms[0] if len(terms) == 1 else Sum(tuple(terms))

    def term(self):
        atoms = [self.atom()]
        while self.peek()[:2] == ("op", "*"):
            self.i += 1
            atoms.append(self.atom())
        return atoms[0] if len(atoms) == 1 else Product(tuple(atoms))

    def number(self) -> float:
        tok = self.peek()
        if tok[0] != "num":
            raise KernelSyntaxError(f"expected a number, found {tok[1] or 'end of input'!r}", tok[2])
        self.i += 1
        value = float(tok[1])
        if not math.isfinite(value):
            raise KernelSyntaxError("parameters must be finite", tok[2])
        return value

    def numbers(self, closing: str = ")") -> tuple[float, ...]:
        values = [self.number()]
        while self.peek()[:2] == ("op", ","):
            self.i += 1
            values.append(self.number())
        self.take("op", closing)
        return tuple(values)

    def atom(self):
        tok = self.peek()
        if tok[:2] == ("op", "("):
            self.i += 1
            inner = self.expr()
            self.take("op", ")")
            return inner
        if tok[0] != "name":
            raise KernelSyntaxError(f"expected a kernel, found {tok[1] or 'end of input'!r}", tok[2])
        self.i += 1
        name = tok[1].upper()
        if self.peek()[:2] != ("op", "(") and name in Kind.__members__:
            # a bare base-kernel name stands for a leaf with unfitted parameters
            return fresh(Kind[name])
        self.take("op", "(")
        try:
            if name in ("CP", "CW"):
                left = self.expr()
                self.take("op", ",")
                right = self.expr()
                self.take("op", ";")
                params = self.numbers()
                if name == "CP":
                    if len(params) != 2:
                        raise ValueError(f"CP requires 2 parameters, got {len(params)}")
                    return ChangePoint(left, right, *params)
                if len(params) != 3:
                    raise ValueError(f"CW requires 3 parameters, got {len(params)}")
                return ChangeWindow(left, right, *params)
            if name in Kind.__members__:
                return Base(Kind[name], self.numbers())
            if name in MaskKind.__members__:
                return Mask(MaskKind[name], self.numbers())
        except ValueError as exc:
            if isinstance(exc, KernelSyntaxError):
                raise
            raise KernelSyntaxError(str(exc), tok[2]) from None
        raise KernelSyntaxError(f"unknown kernel {tok[1]!r}", tok[2])


def parse_kernel(text: str) -> KernelExpr:
    """Parse the text syntax described in the module docstring.

    Raises
    ------
    KernelSyntaxError
        On malformed input, unknown names, wrong arity or invalid values.
    """
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# traversal helpers


def children(expr: KernelExpr) -> tuple:
    if isinstance(expr, (Sum, Product)):
        return expr.children
    if isinstance(expr, (ChangePoint, ChangeWindow)):
        return (expr.left, expr.right)
    return ()


def own_params(expr: KernelExpr) -> tuple[float, ...]:
    if isinstance(expr, (Sum, Product)):
        return ()
    return expr.params


def own_param_names(expr: KernelExpr) -> tuple[str, ...]:
    if isinstance(expr, Base):
        return PARAM_NAMES[expr.kind]
    if isinstance(expr, Mask):
        return MASK_PARAM_NAMES[expr.kind]
    if isinstance(expr, ChangePoint):
        return ("location", "steepness")
    if isinstance(expr, ChangeWindow):
        return ("start", "end", "steepness")
    return ()


def iter_nodes(expr: KernelExpr) -> Iterator[KernelExpr]:
    """Pre-order traversal (children before own parameters are read)."""
    yield expr
    for c in children(expr):
        yield from iter_nodes(c)


def param_nodes(expr: KernelExpr) -> Iterator[KernelExpr]:
    """Nodes carrying parameters, in parameter-vector order.

    Children come first, then the node's own parameters (post-order).
    """
    for c in children(expr):
        yield from param_nodes(c)
    if own_params(expr):
        yield expr


def count_params(expr: KernelExpr) -> int:
    return sum(len(own_params(n)) for n in iter_nodes(expr))


def get_params(expr: KernelExpr) -> list[float]:
    return [p for n in param_nodes(expr) for p in own_params(n)]


def set_params(expr: KernelExpr, values: Sequence[float]) -> KernelExpr:
    """Return a copy of ``expr`` with parameters replaced in get_params order."""
    values = list(values)
    if len(values) != count_params(expr):
        raise ValueError(f"expected {count_params(expr)} parameter values, got {len(values)}")
    return _set(expr, iter(values))


def _set(expr, it):
    if isinstance(expr, Base):
        return Base(expr.kind, tuple(next(it) for _ in expr.params))
    if isinstance(expr, Mask):
        return Mask(expr.kind, tuple(next(it) for _ in expr.params))
    if isinstance(expr, Sum):
        return Sum(tuple(_set(c, it) for c in expr.children))
    if isinstance(expr, Product):
        return Product(tuple(_set(c, it) for c in expr.children))
    left, right = _set(expr.left, it), _set(expr.right, it)
    if isinstance(expr, ChangePoint):
        return ChangePoint(left, right, next(it), next(it))
    return ChangeWindow(left, right, next(it), next(it), next(it))


def has_fresh(expr: KernelExpr) -> bool:
    return any(math.isnan(p) for p in get_params(expr))


def fresh(kind: Kind | MaskKind) -> Leaf:
    """A leaf whose parameters are left for the optimizer to initialise."""
    if isinstance(kind, MaskKind):
        return Mask(kind, (math.nan,) * len(MASK_PARAM_NAMES[kind]))
    return Base(kind, (math.nan,) * len(PARAM_NAMES[kind]))


def kinds_used(expr: KernelExpr) -> set:
    return {n.kind for n in iter_nodes(expr) if isinstance(n, (Base, Mask))}


def add(*operands: KernelExpr) -> KernelExpr:
    return operands[0] if len(operands) == 1 else Sum(tuple(operands))


def mul(*operands: KernelExpr) -> KernelExpr:
    return operands[0] if len(operands) == 1 else Product(tuple(operands))


# ---------------------------------------------------------------------------
# sum-of-products normal form


@dataclass(frozen=True)
class ProductTerm:
    """One additive term: core kernels x linear factors x sigmoid masks.

    ``core`` holds at most one of WN, C or SE followed by any PER/COS
    factors; it is empty only when the term is a pure product of LINs.
    """

    core: tuple[Base, ...] = ()
    lin_factors: tuple[Base, ...] = ()
    masks: tuple[Mask, ...] = ()

    def factors(self) -> tuple[Leaf, ...]:
        return self.core + self.lin_factors + self.masks

    def to_expr(self) -> KernelExpr:
        return mul(*self.factors())

    def kinds(self) -> list:
        return [f.kind for f in self.core]

    @property
    def is_noise(self) -> bool:
        return bool(self.core) and self.core[0].kind is Kind.WN

    def __str__(self):
        return str(self.to_expr())


@dataclass(frozen=True)
class NormalForm:
    terms: tuple[ProductTerm, ...] = field(default_factory=tuple)

    def to_expr(self) -> KernelExpr:
        return add(*(t.to_expr() for t in self.terms))

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __str__(self):
        return " + ".join(str(t) for t in self.terms)


def _expand(expr: KernelExpr) -> list[list[Leaf]]:
    if isinstance(expr, (Base, Mask)):
        return [[expr]]
    if isinstance(expr, Sum):
        return [f for c in expr.children for f in _expand(c)]
    if isinstance(expr, Product):
        out = [[]]
        for c in expr.children:
            out = [a + b for a, b in itertools.product(out, _expand(c))]
        return out
    if isinstance(expr, ChangePoint):
        on, off = Mask(MaskKind.SIG, expr.params), Mask(MaskKind.SIGBAR, expr.params)
    else:
        on, off = Mask(MaskKind.WIN, expr.params), Mask(MaskKind.WINBAR, expr.params)
    return [f + [on] for f in _expand(expr.left)] + [f + [off] for f in _expand(expr.right)]


def _rescale(b: Base, factor: float) -> Base:
    return Base(b.kind, (b.params[0] * factor,) + b.params[1:])


def simplify_product(factors: Sequence[Leaf]) -> ProductTerm:
    """Collapse a product of leaves into a ProductTerm.

    SE*SE -> SE (precisions add, variances multiply); WN absorbs every
    stationary factor through its diagonal value; C folds its variance into
    another kernel factor.  The result is equal pointwise to the product.
    """
    if not factors:
        raise ValueError("empty product")
    by_kind: dict = {k: [] for k in Kind}
    masks = []
    for f in factors:
        if isinstance(f, Mask):
            masks.append(f)
        else:
            by_kind[f.kind].append(f)
    lins = sorted(by_kind[Kind.LIN], key=sort_key)
    masks = tuple(sorted(masks, key=sort_key))

    if by_kind[Kind.WN]:
        variance = 1.0
        for k in STATIONARY:
            for b in by_kind[k]:
                variance *= b.variance
        return ProductTerm((Base(Kind.WN, (variance,)),), tuple(lins), masks)

    scale = math.prod(b.variance for b in by_kind[Kind.C])
    core = []
    ses = by_kind[Kind.SE]
    if ses:
        variance = math.prod(b.variance for b in ses)
        precision = sum(b.params[1] ** -2 for b in ses)
        core.append(Base(Kind.SE, (variance, precision ** -0.5)))
    core += sorted(by_kind[Kind.PER], key=sort_key)
    core += sorted(by_kind[Kind.COS], key=sort_key)
    if core:
        core[0] = _rescale(core[0], scale)
    elif lins:
        lins[0] = _rescale(lins[0], scale)
    else:
        core = [Base(Kind.C, (scale,))]
    return ProductTerm(tuple(core), tuple(lins), masks)


def to_normal_form(expr: KernelExpr) -> NormalForm:
    """Distribute products over sums, expand CP/CW into masks, simplify."""
    terms = [simplify_product(f) for f in _expand(expr)]
    return NormalForm(tuple(sorted(terms, key=lambda t: sort_key(t.to_expr()))))


def distribute(expr: KernelExpr) -> KernelExpr:
    """The normal form re-assembled as a kernel expression."""
    return to_normal_form(expr).to_expr()
