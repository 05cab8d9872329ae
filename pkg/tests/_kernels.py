"""Random kernel expressions for property tests."""

import numpy as np

from autostat import kernels as kl
from autostat.kernels import Base, ChangePoint, ChangeWindow, Kind


def random_base(rng, kinds=tuple(Kind)):
    kind = Kind(rng.choice([int(k) for k in kinds]))
    var = rng.uniform(0.5, 2.0)
    if kind in (Kind.WN, Kind.C):
        return Base(kind, (var,))
    if kind is Kind.SE:
        return Base(kind, (var, rng.uniform(0.5, 3.0)))
    if kind is Kind.PER:
        return Base(kind, (var, rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0)))
    if kind is Kind.COS:
        return Base(kind, (var, rng.uniform(0.5, 3.0)))
    return Base(kind, (var, rng.uniform(-1.0, 1.0)))


def random_expr(rng, depth=4, kinds=tuple(Kind)):
    """Random tree of at most ``depth`` operator levels."""
    if depth == 0 or rng.random() < 0.3:
        return random_base(rng, kinds)
    op = rng.choice(["sum", "product", "cp", "cw"], p=[0.35, 0.35, 0.15, 0.15])
    if op in ("sum", "product"):
        kids = [random_expr(rng, depth - 1, kinds) for _ in range(rng.integers(2, 4))]
        return kl.add(*kids) if op == "sum" else kl.mul(*kids)
    left, right = random_expr(rng, depth - 1, kinds), random_expr(rng, depth - 1, kinds)
    steep = rng.uniform(0.2, 1.0)
    if op == "cp":
        return ChangePoint(left, right, rng.uniform(-1.0, 1.0), steep)
    start = rng.uniform(-1.0, 0.5)
    return ChangeWindow(left, right, start, start + rng.uniform(0.2, 1.0), steep)
