"""Greedy kernel structure search scored by BIC."""

from __future__ import annotations

import enum
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from . import kernels as kl
from .gp import Dataset, OptimizationError, ScoredModel, fit_kernel
from .kernels import Base, ChangePoint, ChangeWindow, KernelExpr, Kind, Product, Sum

log = logging.getLogger(__name__)


class Language(str, enum.Enum):
    """Restrictions of the kernel grammar that recover classical model families."""

    FULL = "FULL"
    SE_ONLY = "SE_ONLY"
    LINEAR = "LINEAR"
    MKL = "MKL"
    TCI = "TCI"
    SPECTRAL = "SPECTRAL"
    CHANGEPOINT = "CHANGEPOINT"

    @classmethod
    def parse(cls, name: "str | Language") -> "Language":
        if isinstance(name, Language):
            return name
        key = str(name).strip().upper().replace("-", "_")
        key = {"SE": "SE_ONLY"}.get(key, key)
        try:
            return cls[key]
        except KeyError:
            valid = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown language {name!r}; expected one of {valid}") from None


FULL_KINDS = (Kind.WN, Kind.C, Kind.SE, Kind.PER, Kind.LIN)


@dataclass(frozen=True)
class LanguageRules:
    """Base kinds and operators a preset may use.

    ``fixed`` names a single model that is fitted without search.
    ``top_level`` lists the only expressions that may be added to the
    incumbent (forward selection); when empty, the grammar operators apply
    at every subexpression.
    """

    kinds: tuple[Kind, ...]
    fixed: KernelExpr | None = None
    top_level: tuple[KernelExpr, ...] = ()
    operators: frozenset = frozenset()


# operator names; the last four are individually switchable
OPERATORS = (
    "add", "multiply", "replace", "changepoint", "changewindow",
    "multiply_sum_constant", "replace_with_base", "drop_summand", "drop_factor",
)
OPTIONAL_OPERATORS = OPERATORS[-4:]


def restrict_language(preset: "str | Language") -> LanguageRules:
    """Kinds and operators for a language preset."""
    preset = Language.parse(preset)
    f = kl.fresh
    if preset is Language.FULL:
        return LanguageRules(FULL_KINDS, operators=frozenset(OPERATORS))
    if preset is Language.SE_ONLY:
        return LanguageRules((Kind.WN, Kind.SE), fixed=kl.add(f(Kind.SE), f(Kind.WN)))
    if preset is Language.LINEAR:
        return LanguageRules((Kind.WN, Kind.C, Kind.LIN),
                             fixed=kl.add(f(Kind.C), f(Kind.LIN), f(Kind.WN)))
    if preset is Language.MKL:
        return LanguageRules((Kind.WN, Kind.SE), top_level=(f(Kind.SE),))
    if preset is Language.TCI:
        return LanguageRules((Kind.WN, Kind.SE, Kind.PER), top_level=(f(Kind.SE), f(Kind.PER)))
    if preset is Language.SPECTRAL:
        return LanguageRules((Kind.WN, Kind.SE, Kind.COS),
                             top_level=(kl.mul(f(Kind.SE), f(Kind.COS)),))
    return LanguageRules((Kind.WN, Kind.SE),
                         operators=frozenset({"add", "changepoint", "changewindow"}))


@dataclass(frozen=True)
class SearchConfig:
    """Settings for :func:`greedy_search`.

    Parameters
    ----------
    max_depth : int
        Number of expansion rounds.
    restarts : int
        Random restarts per candidate, in addition to the inherited start.
    rng_seed : int
        Root seed; every candidate fit derives its own stream from it.
    language : Language or str
        Grammar restriction.
    interpretable : bool
        Distribute products over sums in every candidate, so that BIC
        charges separately for each additive component.
    disabled_operators : frozenset of str
        Names from ``OPTIONAL_OPERATORS`` to switch off.
    jobs : int
        Worker processes for candidate fitting.
    """

    max_depth: int = 10
    restarts: int = 10
    rng_seed: int = 0
    language: Language = Language.FULL
    interpretable: bool = False
    disabled_operators: frozenset = frozenset()
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "language", Language.parse(self.language))
        object.__setattr__(self, "disabled_operators", frozenset(self.disabled_operators))
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")
        unknown = self.disabled_operators - set(OPTIONAL_OPERATORS)
        if unknown:
            raise ValueError(f"only {OPTIONAL_OPERATORS} can be disabled, got {sorted(unknown)}")


@dataclass(frozen=True)
class DepthRecord:
    depth: int
    candidates: tuple[ScoredModel, ...]
    failed: tuple[str, ...]
    selected: ScoredModel
    improved: bool
    seconds: float


@dataclass
class SearchTrace:
    """Everything scored during a search, one record per depth."""

    records: list[DepthRecord] = field(default_factory=list)

    def __iter__(self) -> Iterator[DepthRecord]:
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    @property
    def incumbents(self) -> list[ScoredModel]:
        """Incumbent after each depth (depth 0 is the starting model)."""
        out, current = [], None
        for rec in self.records:
            if current is None or rec.improved:
                current = rec.selected
            out.append(current)
        return out


# ---------------------------------------------------------------------------
# expansion


def _positions(expr: KernelExpr, path=()) -> Iterator[tuple[tuple[int, ...], KernelExpr]]:
    yield path, expr
    for i, c in enumerate(kl.children(expr)):
        yield from _positions(c, path + (i,))


def _replace_at(expr: KernelExpr, path: Sequence[int], new: KernelExpr) -> KernelExpr:
    if not path:
        return new
    i, rest = path[0], path[1:]
    if isinstance(expr, (Sum, Product)):
        kids = list(expr.children)
        kids[i] = _replace_at(kids[i], rest, new)
        return type(expr)(tuple(kids))
    if isinstance(expr, ChangePoint):
        left, right = expr.left, expr.right
        if i == 0:
            left = _replace_at(left, rest, new)
        else:
            right = _replace_at(right, rest, new)
        return ChangePoint(left, right, *expr.params)
    if isinstance(expr, ChangeWindow):
        left, right = expr.left, expr.right
        if i == 0:
            left = _replace_at(left, rest, new)
        else:
            right = _replace_at(right, rest, new)
        return ChangeWindow(left, right, *expr.params)
    raise ValueError("path descends into a leaf")


def _rewrites(S: KernelExpr, kinds, ops) -> Iterator[KernelExpr]:
    """Every single-operator rewrite of the subexpression ``S``."""
    nan = math.nan
    C = kl.fresh(Kind.C)
    for k in kinds:
        B = kl.fresh(k)
        if "add" in ops:
            yield kl.add(S, B)
        # every kernel carries its own variance, so scaling by C adds nothing
        if "multiply" in ops and k is not Kind.C:
            yield kl.mul(S, B)
        if "multiply_sum_constant" in ops and k is not Kind.C:
            yield kl.mul(S, kl.add(B, C))
        if "replace_with_base" in ops and kl.structure(S) != kl.structure(B):
            yield B
    if "replace" in ops and isinstance(S, Base):
        for k in kinds:
            if k is not S.kind:
                yield kl.fresh(k)
    if "changepoint" in ops:
        yield ChangePoint(S, S, nan, nan)
    if "changewindow" in ops:
        yield ChangeWindow(S, S, nan, nan, nan)
        if Kind.C in kinds:
            yield ChangeWindow(S, C, nan, nan, nan)
            yield ChangeWindow(C, S, nan, nan, nan)
    if isinstance(S, Sum) and "drop_summand" in ops:
        for i in range(len(S.children)):
            yield kl.add(*(c for j, c in enumerate(S.children) if j != i))
    if isinstance(S, Product) and "drop_factor" in ops:
        for i in range(len(S.children)):
            yield kl.mul(*(c for j, c in enumerate(S.children) if j != i))


def expand(current: KernelExpr, config: SearchConfig | None = None,
           operators: Sequence[str] | None = None) -> list[KernelExpr]:
    """All candidates one operator application away from ``current``.

    New base kernels carry NaN parameters (to be initialised by the
    optimiser); unchanged subexpressions keep their fitted values.
    Candidates are deduplicated by parameter-free structure and returned in
    order of that structure string.

    Parameters
    ----------
    current : KernelExpr
    config : SearchConfig, optional
        Supplies the language and disabled operators (default FULL).
    operators : sequence of str, optional
        Further restrict to these operator names.
    """
    config = config or SearchConfig()
    rules = restrict_language(config.language)
    if rules.fixed is not None:
        return []
    if rules.top_level:
        raw = [kl.add(current, extra) for extra in rules.top_level]
    else:
        ops = set(rules.operators) - set(config.disabled_operators)
        if operators is not None:
            ops &= set(operators)
        raw = []
        for path, S in _positions(current):
            for new in _rewrites(S, rules.kinds, ops):
                raw.append(_replace_at(current, path, new))
    if config.interpretable:
        raw = [kl.distribute(c) for c in raw]
    own = kl.structure(current)
    seen: dict[str, KernelExpr] = {}
    for cand in raw:
        key = kl.structure(cand)
        if key != own and key not in seen:
            seen[key] = cand
    return [seen[k] for k in sorted(seen)]


# ---------------------------------------------------------------------------
# search


def _selection_key(m: ScoredModel):
    return (m.bic, m.param_count, str(m.kernel))


def candidate_seed(rng_seed: int, depth: int, index: int) -> int:
    """Seed for one candidate fit, independent of evaluation order."""
    return int(np.random.SeedSequence([rng_seed, depth, index]).generate_state(1)[0])


def _fit_task(args):
    kernel, data, restarts, seed = args
    try:
        return fit_kernel(kernel, data, restarts=restarts, rng_seed=seed)
    except OptimizationError as exc:
        return exc


def _fit_all(kernels, data, config, depth, pool):
    tasks = [(k, data, config.restarts, candidate_seed(config.rng_seed, depth, i))
             for i, k in enumerate(kernels)]
    results = pool.map(_fit_task, tasks) if pool is not None else map(_fit_task, tasks)
    scored, failed = [], []
    for kernel, res in zip(kernels, results):
        if isinstance(res, ScoredModel):
            scored.append(res)
            log.info("depth=%d candidate=%s bic=%.4f", depth, kl.structure(kernel), res.bic)
        else:
            failed.append(kl.structure(kernel))
            log.warning("depth=%d candidate=%s failed: %s", depth, kl.structure(kernel), res)
    return scored, failed


def greedy_search(data: Dataset, config: SearchConfig | None = None,
                  extra_candidates: Sequence[KernelExpr] = (),
                  progress: Callable[[DepthRecord], None] | None = None,
                  ) -> tuple[ScoredModel, SearchTrace]:
    """Greedy BIC search starting from white noise.

    Parameters
    ----------
    data : Dataset
    config : SearchConfig, optional
    extra_candidates : sequence of KernelExpr
        Additional (possibly fitted) kernels scored alongside the depth-1
        candidates, e.g. the selections of more restricted languages.
    progress : callable, optional
        Called with each finished :class:`DepthRecord`.

    Returns
    -------
    best : ScoredModel
        Lowest-BIC incumbent.
    trace : SearchTrace
    """
    config = config or SearchConfig()
    rules = restrict_language(config.language)
    trace = SearchTrace()
    pool = ProcessPoolExecutor(config.jobs) if config.jobs > 1 else None
    try:
        start = time.perf_counter()
        first = rules.fixed if rules.fixed is not None else kl.fresh(Kind.WN)
        scored, failed = _fit_all([first], data, config, 0, pool)
        if not scored:
            raise OptimizationError(f"could not fit the starting model {first}")
        incumbent = scored[0]
        rec = DepthRecord(0, tuple(scored), tuple(failed), incumbent, True,
                          time.perf_counter() - start)
        trace.records.append(rec)
        if progress:
            progress(rec)
        if rules.fixed is not None and not extra_candidates:
            return incumbent, trace

        for depth in range(1, config.max_depth + 1):
            start = time.perf_counter()
            cands = expand(incumbent.kernel, config)
            if depth == 1 and extra_candidates:
                # injected kernels keep their fitted values as the inherited start
                injected = {kl.structure(c) for c in extra_candidates}
                cands = [c for c in cands if kl.structure(c) not in injected]
                cands += list({kl.structure(c): c for c in extra_candidates}.values())
            if not cands:
                break
            scored, failed = _fit_all(cands, data, config, depth, pool)
            if not scored:
                break
            best = min(scored, key=_selection_key)
            improved = _selection_key(best) < _selection_key(incumbent)
            rec = DepthRecord(depth, tuple(scored), tuple(failed), best, improved,
                              time.perf_counter() - start)
            trace.records.append(rec)
            if progress:
                progress(rec)
            log.info("depth=%d selected=%s bic=%.4f improved=%s",
                     depth, best.kernel, best.bic, improved)
            if not improved:
                break
            incumbent = best
        return incumbent, trace
    finally:
        if pool is not None:
            pool.shutdown()

