"""Numeric evaluation of kernel expressions and their parameter gradients.

Gradients are taken with respect to the unconstrained parameter vector
returned by :func:`pack_params`: positive parameters (variances,
lengthscales, periods, steepnesses) are log-transformed, locations and
linear offsets are left as is, and a window's end is represented by the log
of its width so the window can never invert during optimisation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .kernels import (
    Base,
    ChangePoint,
    ChangeWindow,
    Kind,
    Mask,
    MaskKind,
    Product,
    Sum,
    KernelExpr,
    param_nodes,
    own_param_names,
    own_params,
    set_params,
)

JITTER_START = 1e-9
JITTER_MAX = 1e-3


class CholeskyError(np.linalg.LinAlgError):
    """Gram matrix stayed indefinite after the largest jitter."""


@dataclass
class GramMatrix:
    entries: np.ndarray  # jitter included on the diagonal
    jitter: float
    cholesky: np.ndarray


@dataclass
class KernelGradients:
    names: list[str]
    matrices: list[np.ndarray]

    def __len__(self):
        return len(self.matrices)


# ---------------------------------------------------------------------------
# scalar building blocks


def sigmoid(x, location: float, steepness: float):
    """0.5 * (1 + tanh((location - x) / steepness)); 1 before, 0 after."""
    return 0.5 * (1.0 + np.tanh((location - np.asarray(x, dtype=float)) / steepness))


def window(x, start: float, end: float, steepness: float):
    """Product-of-sigmoids mask, close to 1 on (start, end) and 0 outside."""
    return (1.0 - sigmoid(x, start, steepness)) * sigmoid(x, end, steepness)


def _i0e_minus_one(z: float) -> float:
    """exp(-z) * I0(z) - 1 without cancellation for small z."""
    if z < 3.75:
        q = 0.25 * z * z
        term, total, k = 1.0, 0.0, 1
        while True:
            term *= q / (k * k)
            total += term
            if term < 1e-17 * total or k > 60:
                break
            k += 1
        # I0 - 1 = total
        return math.expm1(-z) * (1.0 + total) + total
    return float(special.i0e(z)) - 1.0


def _i0e_derivative(z: float) -> float:
    return float(special.i1e(z) - special.i0e(z))


def eval_base(kind: Kind, params, x: float, xp: float) -> float:
    """Value of a single base kernel at one pair of inputs."""
    b = Base(kind, tuple(params))
    return float(covariance(b, np.array([x]), np.array([xp]))[0, 0])


def eval_kernel(expr: KernelExpr, x: float, xp: float) -> float:
    return float(covariance(expr, np.array([x]), np.array([xp]))[0, 0])


# ---------------------------------------------------------------------------
# parameter vectors


def pack_params(expr: KernelExpr) -> np.ndarray:
    """Unconstrained parameter vector, in :func:`kernels.get_params` order."""
    out = []
    for node in param_nodes(expr):
        names, values = own_param_names(node), own_params(node)
        for name, v in zip(names, values):
            if name in ("offset", "location", "start"):
                out.append(v)
            elif name == "end":
                out.append(math.log(v - values[0]) if not math.isnan(v) else v)
            else:
                out.append(math.log(v) if not math.isnan(v) else v)
    return np.array(out, dtype=float)


def unpack_params(expr: KernelExpr, theta) -> KernelExpr:
    """Inverse of :func:`pack_params` applied onto the structure of ``expr``."""
    return set_params(expr, natural_params(expr, theta))


def natural_params(expr: KernelExpr, theta) -> list[float]:
    theta = np.asarray(theta, dtype=float)
    out, i = [], 0
    for node in param_nodes(expr):
        names = own_param_names(node)
        block = theta[i:i + len(names)]
        for j, name in enumerate(names):
            if name in ("offset", "location", "start"):
                out.append(float(block[j]))
            elif name == "end":
                out.append(float(block[0] + math.exp(block[j])))
            else:
                out.append(math.exp(block[j]))
        i += len(names)
    if i != len(theta):
        raise ValueError(f"expected {i} parameters, got {len(theta)}")
    return out


def param_labels(expr: KernelExpr) -> list[str]:
    labels = []
    for node in param_nodes(expr):
        tag = node.kind.name if isinstance(node, (Base, Mask)) else type(node).__name__
        for name in own_param_names(node):
            if name == "end":
                name = "log_width"
            elif name not in ("offset", "location", "start"):
                name = f"log_{name}"
            labels.append(f"{tag}.{name}")
    return labels


# ---------------------------------------------------------------------------
# matrix evaluation


class Inputs:
    """Pairwise input quantities shared by every node of an expression.

    With ``x2`` omitted the white-noise delta is the identity (one
    independent noise draw per observation); for cross-covariances it is
    exact equality of input values.
    """

    def __init__(self, x1, x2=None):
        self.x1 = np.asarray(x1, dtype=float).ravel()
        self.train = x2 is None
        self.x2 = self.x1 if x2 is None else np.asarray(x2, dtype=float).ravel()
        self.diff = self.x1[:, None] - self.x2[None, :]
        self.sqdist = self.diff * self.diff
        if self.train:
            self.delta = np.eye(len(self.x1))
        else:
            self.delta = (self.diff == 0).astype(float)
        self.ones = np.ones_like(self.diff)
        # phase origin for periodic kernels; keeps w * x small
        self.center = float(self.x1.mean()) if len(self.x1) else 0.0


def _sig_parts(x, loc, log_s):
    s = math.exp(log_s)
    t = (loc - x) / s
    th = np.tanh(t)
    val = 0.5 * (1.0 + th)
    dval = 0.5 * (1.0 - th * th)
    return val, dval / s, -dval * t  # value, d/dloc, d/dlog_s


def _mask_vectors(kind, theta, x, grad):
    """Per-point mask values and derivatives w.r.t. the mask's theta block."""
    if kind in (MaskKind.SIG, MaskKind.SIGBAR):
        val, dl, ds = _sig_parts(x, theta[0], theta[1])
        grads = [dl, ds]
        if kind is MaskKind.SIGBAR:
            val, grads = 1.0 - val, [-dl, -ds]
        return val, grads
    start, width, log_s = theta[0], math.exp(theta[1]), theta[2]
    a, da_l, da_s = _sig_parts(x, start, log_s)
    b, db_l, db_s = _sig_parts(x, start + width, log_s)
    val = (1.0 - a) * b
    grads = [
        -da_l * b + (1.0 - a) * db_l,
        (1.0 - a) * db_l * width,
        -da_s * b + (1.0 - a) * db_s,
    ]
    if kind is MaskKind.WINBAR:
        val, grads = 1.0 - val, [-g for g in grads]
    return val, grads


def _outer_mask(kind, theta, inp, grad):
    v1, g1 = _mask_vectors(kind, theta, inp.x1, grad)
    if inp.train:
        v2, g2 = v1, g1
    else:
        v2, g2 = _mask_vectors(kind, theta, inp.x2, grad)
    M = np.outer(v1, v2)
    if not grad:
        return M, []
    return M, [np.outer(a, v2) + np.outer(v1, b) for a, b in zip(g1, g2)]


def _cos_sin(inp, w, want_sin):
    """cos and sin of w * (x1 - x2) via angle addition, O(n) trig calls."""
    a1, a2 = w * (inp.x1 - inp.center), w * (inp.x2 - inp.center)
    c1, s1 = np.cos(a1), np.sin(a1)
    if inp.train:
        c2, s2 = c1, s1
    else:
        c2, s2 = np.cos(a2), np.sin(a2)
    c = np.multiply.outer(c1, c2)
    c += np.multiply.outer(s1, s2)
    if not want_sin:
        return c, None
    sn = np.multiply.outer(s1, c2)
    sn -= np.multiply.outer(c1, s2)
    return c, sn


def _base(kind, theta, inp, grad):
    var = math.exp(theta[0])
    if kind is Kind.WN:
        K = var * inp.delta
        return K, [K] if grad else []
    if kind is Kind.C:
        K = var * inp.ones
        return K, [K] if grad else []
    if kind is Kind.LIN:
        off = theta[1]
        a, b = inp.x1 - off, inp.x2 - off
        K = var * np.outer(a, b)
        if not grad:
            return K, []
        return K, [K, -var * (a[:, None] + b[None, :])]
    if kind is Kind.SE:
        inv_l2 = math.exp(-2.0 * theta[1])
        K = var * np.exp(-0.5 * inp.sqdist * inv_l2)
        if not grad:
            return K, []
        return K, [K, K * inp.sqdist * inv_l2]
    if kind is Kind.COS:
        w = 2.0 * math.pi / math.exp(theta[1])
        c, sn = _cos_sin(inp, w, grad)
        K = var * c
        if not grad:
            return K, []
        return K, [K, var * sn * (w * inp.diff)]
    if kind is Kind.PER:
        z = math.exp(-2.0 * theta[1])
        w = 2.0 * math.pi / math.exp(theta[2])
        c, sn = _cos_sin(inp, w, grad)
        A = _i0e_minus_one(z)
        # cm1 = cos - 1, clipped to <= 0 against rounding in the angle sum
        cm1 = c
        cm1 -= 1.0
        np.minimum(cm1, 0.0, out=cm1)
        E = np.expm1(z * cm1)
        K = E - A
        K *= var / -A
        if not grad:
            return K, []
        ex = E + 1.0
        # d/dlog(lengthscale) = -2z dK/dz, dK/dz = var/A^2 (E A' - (c-1) e^{z(c-1)} A)
        g_len = cm1 * ex
        g_len *= -A
        g_len += _i0e_derivative(z) * E
        g_len *= -2.0 * z * var / (A * A)
        # d/dlog(period) = dK/dc * sin * w * diff
        g_per = ex * sn
        g_per *= inp.diff
        g_per *= (var * z / -A) * w
        return K, [K, g_len, g_per]
    raise TypeError(f"unknown kind {kind!r}")


def _evaluate(node, inp, theta, pos, grad):
    if isinstance(node, Base):
        n = len(node.params)
        K, g = _base(node.kind, theta[pos:pos + n], inp, grad)
        return K, g, pos + n
    if isinstance(node, Mask):
        n = len(node.params)
        K, g = _outer_mask(node.kind, theta[pos:pos + n], inp, grad)
        return K, g, pos + n
    if isinstance(node, Sum):
        K, grads = None, []
        for c in node.children:
            Kc, gc, pos = _evaluate(c, inp, theta, pos, grad)
            K = Kc if K is None else K + Kc
            grads += gc
        return K, grads, pos
    if isinstance(node, Product):
        parts = []
        for c in node.children:
            Kc, gc, pos = _evaluate(c, inp, theta, pos, grad)
            parts.append((Kc, gc))
        mats = [p[0] for p in parts]
        K = mats[0]
        for M in mats[1:]:
            K = K * M
        if not grad:
            return K, [], pos
        # products of all factors except the i-th, without division
        m = len(mats)
        prefix = [None] * m
        suffix = [None] * m
        acc = None
        for i in range(m):
            prefix[i] = acc
            acc = mats[i] if acc is None else acc * mats[i]
        acc = None
        for i in reversed(range(m)):
            suffix[i] = acc
            acc = mats[i] if acc is None else acc * mats[i]
        grads = []
        for i, (_, gc) in enumerate(parts):
            others = prefix[i] if suffix[i] is None else (
                suffix[i] if prefix[i] is None else prefix[i] * suffix[i])
            grads += [g * others for g in gc]
        return K, grads, pos
    # changepoint / changewindow
    K1, g1, pos = _evaluate(node.left, inp, theta, pos, grad)
    K2, g2, pos = _evaluate(node.right, inp, theta, pos, grad)
    n = len(node.params)
    block = theta[pos:pos + n]
    on, off = (MaskKind.SIG, MaskKind.SIGBAR) if isinstance(node, ChangePoint) else (
        MaskKind.WIN, MaskKind.WINBAR)
    A, dA = _outer_mask(on, block, inp, grad)
    B, dB = _outer_mask(off, block, inp, grad)
    K = A * K1 + B * K2
    if not grad:
        return K, [], pos + n
    grads = [A * g for g in g1] + [B * g for g in g2]
    grads += [da * K1 + db * K2 for da, db in zip(dA, dB)]
    return K, grads, pos + n


def evaluate(expr: KernelExpr, inp: Inputs, theta=None, grad: bool = False):
    """Covariance matrix (and gradients) on precomputed inputs.

    ``theta`` overrides the stored parameters without rebuilding the
    expression, keeping the parameter order fixed during optimisation.
    """
    if theta is None:
        theta = pack_params(expr)
    theta = np.asarray(theta, dtype=float)
    K, grads, pos = _evaluate(expr, inp, theta, 0, grad)
    if pos != len(theta):
        raise ValueError(f"expected {pos} parameters, got {len(theta)}")
    return (K, grads) if grad else K


def _forward(node, inp, theta, pos):
    """Evaluate ``node`` and record what the reverse pass needs."""
    if isinstance(node, (Base, Mask)):
        n = len(node.params)
        block = theta[pos:pos + n]
        if isinstance(node, Base):
            K, dK = _base(node.kind, block, inp, True)
        else:
            K, dK = _outer_mask(node.kind, block, inp, True)
        return K, ("leaf", dK), pos + n
    if isinstance(node, Sum):
        K, tapes = None, []
        for c in node.children:
            Kc, tc, pos = _forward(c, inp, theta, pos)
            K = Kc if K is None else K + Kc
            tapes.append(tc)
        return K, ("sum", tapes), pos
    if isinstance(node, Product):
        mats, tapes = [], []
        for c in node.children:
            Kc, tc, pos = _forward(c, inp, theta, pos)
            mats.append(Kc)
            tapes.append(tc)
        K = mats[0]
        for M in mats[1:]:
            K = K * M
        return K, ("product", mats, tapes), pos
    K1, t1, pos = _forward(node.left, inp, theta, pos)
    K2, t2, pos = _forward(node.right, inp, theta, pos)
    n = len(node.params)
    block = theta[pos:pos + n]
    on, off = (MaskKind.SIG, MaskKind.SIGBAR) if isinstance(node, ChangePoint) else (
        MaskKind.WIN, MaskKind.WINBAR)
    A, dA = _outer_mask(on, block, inp, True)
    B, dB = _outer_mask(off, block, inp, True)
    return A * K1 + B * K2, ("switch", K1, K2, A, B, dA, dB, t1, t2), pos + n


def _backward(tape, W, out):
    """Append <W, dK/dtheta_i> for every parameter under ``tape``, in order."""
    tag = tape[0]
    if tag == "leaf":
        out.extend(np.vdot(W, dK) for dK in tape[1])
    elif tag == "sum":
        for t in tape[1]:
            _backward(t, W, out)
    elif tag == "product":
        mats, tapes = tape[1], tape[2]
        m = len(mats)
        # W times the product of all factors except the i-th, without division
        suffix = [None] * m
        acc = None
        for i in reversed(range(m)):
            suffix[i] = acc
            acc = mats[i] if acc is None else acc * mats[i]
        prefix = W
        for i in range(m):
            _backward(tapes[i], prefix if suffix[i] is None else prefix * suffix[i], out)
            prefix = prefix * mats[i]
    else:
        _, K1, K2, A, B, dA, dB, t1, t2 = tape
        _backward(t1, W * A, out)
        _backward(t2, W * B, out)
        WK1, WK2 = W * K1, W * K2
        out.extend(np.vdot(WK1, a) + np.vdot(WK2, b) for a, b in zip(dA, dB))


def evaluate_adjoint(expr: KernelExpr, inp: Inputs, theta):
    """Covariance matrix and a closure for weighted gradient traces.

    Returns ``(K, contract)`` where ``contract(W)`` gives the vector of
    ``sum(W * dK/dtheta_i)`` over all parameters.  Only the forward values
    are kept, so no per-parameter matrix is ever multiplied through the
    expression tree.
    """
    theta = np.asarray(theta, dtype=float)
    K, tape, pos = _forward(expr, inp, theta, 0)
    if pos != len(theta):
        raise ValueError(f"expected {pos} parameters, got {len(theta)}")

    def contract(W):
        out: list[float] = []
        _backward(tape, W, out)
        return np.array(out, dtype=float)

    return K, contract


def covariance(expr: KernelExpr, x1, x2=None) -> np.ndarray:
    return evaluate(expr, Inputs(x1, x2))


def cholesky_with_jitter(K: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
    """Add escalating diagonal jitter until K factorises.

    Returns the lower Cholesky factor, the jitter used, and K + jitter*I.
    """
    d = np.diag(K)
    scale = float(np.mean(d))
    if not np.isfinite(scale):
        raise CholeskyError("non-finite Gram matrix")
    if scale <= 0:
        scale = 1.0
    jitter = JITTER_START * scale
    n = K.shape[0]
    idx = np.arange(n)
    while True:
        Kj = K.copy()
        Kj[idx, idx] += jitter
        try:
            return np.linalg.cholesky(Kj), jitter, Kj
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > JITTER_MAX * scale * (1 + 1e-9):
                raise CholeskyError(
                    f"Gram matrix not positive definite with jitter {JITTER_MAX * scale:g}"
                ) from None


def gram_matrix(expr: KernelExpr, xs) -> GramMatrix:
    K = covariance(expr, xs)
    L, jitter, Kj = cholesky_with_jitter(K)
    return GramMatrix(Kj, jitter, L)


def kernel_gradients(expr: KernelExpr, xs) -> KernelGradients:
    _, grads = evaluate(expr, Inputs(xs), grad=True)
    return KernelGradients(param_labels(expr), grads)
