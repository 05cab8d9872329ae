"""English descriptions of additive kernel components.

Each product term of a kernel's normal form is rendered as a noun phrase::

    determiner + premodifiers + noun + postmodifiers

The noun comes from the highest-ranked factor in the term (periodic kernels
first, then the noise/smooth/constant core, then linear factors, then
sigmoid masks); every other factor contributes a modifier.  Parameter
values and properties of the fitted component refine the wording when a
dataset is supplied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels as kl
from .gp import Dataset, Posterior
from .kernels import Base, KernelExpr, Kind, Mask, MaskKind, ProductTerm
from .numerics import Inputs, cholesky_with_jitter, evaluate

NOUNS = {
    Kind.WN: "uncorrelated noise",
    Kind.C: "constant",
    Kind.SE: "smooth function",
    Kind.PER: "periodic function",
    Kind.COS: "sinusoidal function",
    Kind.LIN: "linear function",
}
POLYNOMIAL = "polynomial"

POSTMODIFIERS = {
    Kind.SE: "whose shape changes smoothly",
    Kind.PER: "modulated by a periodic function",
    Kind.COS: "modulated by a sinusoidal function",
    "lin": "with linearly varying amplitude",
    "poly": "with polynomially varying amplitude",
}

# nouns that take no article
MASS_NOUNS = frozenset({NOUNS[Kind.WN]})

# words whose spelling and initial sound disagree
_AN_EXCEPTIONS = frozenset({"hour", "honest", "honour", "heir"})
_A_EXCEPTIONS = ("uni", "use", "usu", "one", "eu")

NOT_IMPROVING = "does not improve cross-validated error"


def article(word: str) -> str:
    """'a' or 'an' for the word that follows."""
    w = word.lower()
    if w in _AN_EXCEPTIONS:
        return "an"
    if w.startswith(_A_EXCEPTIONS):
        return "a"
    return "an" if w[:1] in "aeiou" else "a"


def format_number(v: float) -> str:
    """Compact rendering: one decimal at or above 100, else three significant digits."""
    if not math.isfinite(v):
        return str(v)
    if abs(v) >= 100:
        text = f"{v:.1f}"
        return text[:-2] if text.endswith(".0") else text
    return f"{v:.3g}"


def format_quantity(v: float, unit: str) -> str:
    text = format_number(v)
    if not unit:
        return text
    if text != "1" and not unit.endswith("s"):
        unit += "s"
    return f"{text} {unit}"


@dataclass(frozen=True)
class ComponentDescription:
    """Text and statistics for one additive component.

    ``cv_mae`` and ``cv_mae_reduction`` are filled in by
    :func:`describe_components`; stand-alone descriptions leave them NaN.
    """

    term_index: int
    summary: str
    full_text: str
    head_noun_kind: str
    term: ProductTerm
    is_noise: bool = False
    cv_mae: float = math.nan
    cv_mae_reduction: float = math.nan
    explained_variance: float = math.nan
    improves_cv: bool = True


# ---------------------------------------------------------------------------
# noun phrases


def choose_head_noun(term: ProductTerm) -> str:
    """Kind name of the factor that heads the phrase.

    One of the base kind names, ``"LIN_PRODUCT"`` for two or more linear
    factors without a core, or ``"SIGMOID_PRODUCT"`` for a term made only of
    masks.
    """
    for f in term.core:
        if f.kind in (Kind.PER, Kind.COS):
            return f.kind.name
    if term.core:
        return term.core[0].kind.name
    if len(term.lin_factors) == 1:
        return "LIN"
    if term.lin_factors:
        return "LIN_PRODUCT"
    if term.masks:
        return "SIGMOID_PRODUCT"
    raise ValueError("empty product term")


@dataclass
class _Context:
    """What is known beyond the term itself."""

    x_unit: str = ""
    x_range: float | None = None
    x_min: float | None = None
    x_max: float | None = None
    y_std: float = 1.0
    slope: float | None = None  # sign of the fitted component's trend

    @property
    def has_data(self) -> bool:
        return self.x_range is not None


def _mask_phrase(m: Mask) -> str:
    p = m.params
    if m.kind is MaskKind.SIG:
        return f"which applies until {format_number(p[0])}"
    if m.kind is MaskKind.SIGBAR:
        return f"which applies from {format_number(p[0])}"
    if m.kind is MaskKind.WIN:
        return f"which applies between {format_number(p[0])} and {format_number(p[1])}"
    return f"which applies until {format_number(p[0])} and from {format_number(p[1])}"


def _masks_phrase(masks: Sequence[Mask]) -> str:
    kinds = sorted(m.kind.name for m in masks)
    if kinds == ["SIG", "SIGBAR"]:
        until = next(m.params[0] for m in masks if m.kind is MaskKind.SIG)
        start = next(m.params[0] for m in masks if m.kind is MaskKind.SIGBAR)
        if start < until:
            return f"which applies between {format_number(start)} and {format_number(until)}"
    return " and ".join(_mask_phrase(m) for m in masks)


def _amplitude_word(lins: Sequence[Base], ctx: _Context) -> str:
    """'increasing'/'decreasing' when |x - offset| is monotone over the data."""
    if len(lins) != 1 or not ctx.has_data:
        return "varying"
    offset = lins[0].params[1]
    if offset <= ctx.x_min:
        return "increasing"
    if offset >= ctx.x_max:
        return "decreasing"
    return "varying"


def _lengthscale_word(lengthscale: float, ctx: _Context) -> str:
    if lengthscale < ctx.x_range / 50.0:
        return "rapidly varying"
    if lengthscale > ctx.x_range / 2.0:
        return "very smoothly varying"
    return "smoothly varying"


def _with_phrases(parts: Sequence[str]) -> str:
    """Join 'with ...' phrases as 'with A and B'."""
    if not parts:
        return ""
    rest = [p[len("with "):] if p.startswith("with ") else p for p in parts[1:]]
    return " and ".join([parts[0]] + rest)


def _phrase(term: ProductTerm, ctx: _Context) -> str:
    head = choose_head_noun(term)
    core = list(term.core)
    lins = list(term.lin_factors)
    pre: list[str] = []
    withs: list[str] = []
    post: list[str] = []

    if head in ("PER", "COS"):
        idx = next(i for i, f in enumerate(core) if f.kind.name == head)
        head_factor = core.pop(idx)
        noun = NOUNS[head_factor.kind]
        if any(f.kind is Kind.SE for f in core):
            pre.append("approximately")
        if ctx.has_data:
            period = head_factor.params[-1]
            text = f"with a period of {format_quantity(period, ctx.x_unit)}"
            if ctx.x_unit.rstrip("s").lower() == "year" and abs(period - 1.0) <= 0.02:
                text = f"with a period of 1 {ctx.x_unit.rstrip('s')} (yearly)"
            withs.append(text)
        for f in core:
            if f.kind in (Kind.PER, Kind.COS):
                post.append(POSTMODIFIERS[f.kind])
    elif head in ("WN", "SE", "C"):
        head_factor = core[0]
        noun = NOUNS[head_factor.kind]
        if head == "SE" and ctx.has_data:
            lengthscale = head_factor.params[1]
            pre.append(_lengthscale_word(lengthscale, ctx))
            withs.append(f"with a lengthscale of {format_quantity(lengthscale, ctx.x_unit)}")
    elif head == "LIN":
        lins = []
        noun = NOUNS[Kind.LIN]
        if ctx.slope is not None and ctx.slope != 0:
            noun = "linearly increasing function" if ctx.slope > 0 else \
                "linearly decreasing function"
    elif head == "LIN_PRODUCT":
        lins = []
        noun = POLYNOMIAL
    else:
        noun = "function"

    if len(lins) == 1:
        withs.append(f"with linearly {_amplitude_word(lins, ctx)} amplitude")
    elif len(lins) > 1:
        withs.append(POSTMODIFIERS["poly"])

    words = " ".join(pre + [noun])
    if noun not in MASS_NOUNS:
        words = f"{article(words.split()[0])} {words}"
    tail = [w for w in [_with_phrases(withs)] + post if w]
    if term.masks:
        tail.append(_masks_phrase(term.masks))
    return " ".join([words] + tail)


def _context(data: Dataset | None, slope=None) -> _Context:
    if data is None:
        return _Context(slope=slope)
    return _Context(x_unit=data.x_unit, x_range=data.x_range or 1.0,
                    x_min=float(data.xs.min()), x_max=float(data.xs.max()),
                    y_std=data.y_std, slope=slope)


def noun_phrase(term: ProductTerm, data: Dataset | None = None, slope: float | None = None) -> str:
    """Lower-case noun phrase for one product term.

    Without ``data`` the phrase reflects structure and locations only;
    with it, periods and lengthscales are quoted in the data's x units.
    ``slope`` (the sign of the fitted component's trend) refines a linear
    head noun into 'linearly increasing/decreasing function'.
    """
    return _phrase(term, _context(data, slope))


def _details(term: ProductTerm, ctx: _Context, y_unit: str) -> list[str]:
    """Extra sentences for the component's paragraph."""
    out = []
    head = choose_head_noun(term)
    factors = {f.kind: f for f in term.core}
    if head in ("PER", "COS") and Kind.SE in factors:
        se = factors[Kind.SE]
        text = "The periodic pattern is not exact: this is a periodic function whose " \
               "shape changes smoothly"
        if ctx.has_data:
            text += f", with a typical lengthscale of {format_quantity(se.params[1], ctx.x_unit)}"
        out.append(text + ".")
    if head == "PER" and ctx.has_data:
        ell = factors[Kind.PER].params[1]
        shape = "close to sinusoidal" if ell > 2.0 else (
            "strongly non-sinusoidal" if ell < 0.5 else "moderately non-sinusoidal")
        out.append(f"Within each period the shape of the function is {shape}.")
    if term.core and term.core[0].kind in kl.STATIONARY and ctx.has_data:
        scale = math.sqrt(math.prod(f.params[0] for f in term.core)) * ctx.y_std
        if term.lin_factors:
            what = "scale"
        else:
            what = "standard deviation" if head == "WN" else "amplitude"
        unit = f" {y_unit}" if y_unit else ""
        out.append(f"Its typical {what} is {format_number(scale)}{unit}.")
    if term.masks:
        out.append("The component is switched on or off smoothly at the locations given above.")
    return out


def describe_term(term: ProductTerm, data: Dataset | None = None, index: int = 0,
                  slope: float | None = None) -> ComponentDescription:
    """Summary sentence and paragraph for one product term."""
    ctx = _context(data, slope)
    phrase = _phrase(term, ctx)
    summary = phrase[0].upper() + phrase[1:] + "."
    y_unit = data.y_unit if data is not None else ""
    full = " ".join(["This component is " + phrase + "."] + _details(term, ctx, y_unit))
    return ComponentDescription(index, summary, full, choose_head_noun(term), term,
                                is_noise=term.is_noise)


def describe_kernel(expr: KernelExpr | str, data: Dataset | None = None) -> list[str]:
    """Noun phrase for every additive component of ``expr``'s normal form."""
    if isinstance(expr, str):
        expr = kl.parse_kernel(expr)
    return [noun_phrase(t, data) for t in kl.to_normal_form(expr)]


# ---------------------------------------------------------------------------
# ordering by cross-validated error


@dataclass
class ComponentOrdering:
    """Greedy ordering of components by cross-validated absolute error.

    ``mae[i]`` is the error after adding ``order[:i+1]``; ``baseline_mae``
    is the error of predicting the training mean.  ``improves[i]`` is False
    for components appended after no remaining component helped.
    """

    order: list[int]
    mae: list[float]
    baseline_mae: float
    improves: list[bool]
    explained_variance: list[float] = field(default_factory=list)

    @property
    def reductions(self) -> list[float]:
        prev = [self.baseline_mae] + self.mae[:-1]
        return [p - m for p, m in zip(prev, self.mae)]


def cv_folds(n: int, k: int = 10) -> list[np.ndarray]:
    """Contiguous blocks of indices (fewer than ``k`` when n < k)."""
    return [f for f in np.array_split(np.arange(n), min(k, n)) if len(f)]


def _fold_predictions(terms: Sequence[ProductTerm], kernel: KernelExpr, data: Dataset,
                      folds) -> tuple[np.ndarray, np.ndarray]:
    """Per-term held-out predictions and the per-point training-mean baseline."""
    xs, ys = data.xs, data.ys
    n = len(xs)
    preds = np.zeros((len(terms), n))
    base = np.zeros(n)
    exprs = [t.to_expr() for t in terms]
    for test in folds:
        train = np.setdiff1d(np.arange(n), test)
        offset = float(ys[train].mean())
        base[test] = offset
        K = evaluate(kernel, Inputs(xs[train]))
        L, _, _ = cholesky_with_jitter(K)
        z = (ys[train] - offset) / data.y_std
        alpha = np.linalg.solve(L.T, np.linalg.solve(L, z))
        cross = Inputs(xs[test], xs[train])
        for i, e in enumerate(exprs):
            preds[i, test] = evaluate(e, cross) @ alpha * data.y_std
    return preds, base


def order_components(terms: Sequence[ProductTerm], kernel: KernelExpr, data: Dataset,
                     folds: int = 10) -> ComponentOrdering:
    """Order terms by greedy reduction of cross-validated mean absolute error.

    Each fold conditions the full kernel on the remaining blocks and
    predicts the held-out block with the chosen subset of components.
    """
    if not terms:
        raise ValueError("no components to order")
    if len(data.xs) < 2:
        raise ValueError("need at least two points for cross-validation")
    preds, base = _fold_predictions(terms, kernel, data, cv_folds(len(data.xs), folds))
    y = data.ys

    def mae(subset):
        return float(np.mean(np.abs(y - base - preds[list(subset)].sum(axis=0))))

    def sse(subset):
        r = y - base - preds[list(subset)].sum(axis=0)
        return float(r @ r)

    chosen: list[int] = []
    errors: list[float] = []
    improves: list[bool] = []
    explained: list[float] = []
    current = baseline = mae([])
    remaining = list(range(len(terms)))
    while remaining:
        scores = [(mae(chosen + [i]), i) for i in remaining]
        best_mae, best = min(scores)
        if best_mae > current:
            break
        before = sse(chosen)
        chosen.append(best)
        remaining.remove(best)
        errors.append(best_mae)
        improves.append(True)
        explained.append(1.0 - sse(chosen) / before if before > 0 else 0.0)
        current = best_mae
    for i in remaining:
        before = sse(chosen)
        chosen.append(i)
        errors.append(mae(chosen))
        improves.append(False)
        explained.append(1.0 - sse(chosen) / before if before > 0 else 0.0)
    return ComponentOrdering(chosen, errors, baseline, improves, explained)


def _trend_sign(mean: np.ndarray, xs: np.ndarray) -> float:
    if len(xs) < 2 or np.ptp(xs) == 0:
        return 0.0
    slope = np.polyfit(xs, mean, 1)[0]
    scale = np.ptp(mean) if np.ptp(mean) > 0 else 1.0
    return float(np.sign(slope)) if abs(slope) * np.ptp(xs) > 1e-9 * scale else 0.0


def describe_components(kernel: KernelExpr, data: Dataset,
                        folds: int = 10) -> list[ComponentDescription]:
    """Descriptions of every normal-form term, in cross-validated order."""
    terms = list(kl.to_normal_form(kernel))
    ordering = order_components(terms, kernel, data, folds)
    post = Posterior(kernel, data)
    reductions = ordering.reductions
    out = []
    for rank, i in enumerate(ordering.order):
        term = terms[i]
        slope = None
        if choose_head_noun(term) == "LIN":
            mean, _ = post.conditional(term.to_expr(), data.xs)
            slope = _trend_sign(mean, data.xs)
        d = describe_term(term, data, index=i, slope=slope)
        full = d.full_text
        if not ordering.improves[rank]:
            full += f" This component {NOT_IMPROVING}."
        out.append(ComponentDescription(
            i, d.summary, full, d.head_noun_kind, term, d.is_noise,
            cv_mae=ordering.mae[rank], cv_mae_reduction=reductions[rank],
            explained_variance=ordering.explained_variance[rank],
            improves_cv=ordering.improves[rank]))
    return out
