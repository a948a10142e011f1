"""Reverse-mode automatic differentiation over dense numpy arrays.

A :class:`Tensor` wraps a float64 or complex128 ndarray.  Primitives never
mutate their inputs; each one returns a fresh node carrying its parents and
a vector-Jacobian closure, so the set of live nodes *is* the tape and is a
DAG by construction.  :func:`backward` replays it once in reverse
topological order.

Gradients of a real objective with respect to a complex tensor ``z`` are
stored as ``df/dRe(z) + 1j * df/dIm(z)``.  Under that convention a linear
complex map pulls a cotangent back through the conjugate of its
coefficients, which is what the FFT and spectral-multiplication adjoints
below implement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

from .errors import NonFiniteError, ShapeError

_SQRT1_2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Tensor:
    """Array node of the differentiation tape.

    ``data`` is treated as immutable by every primitive.  The optimizer is
    the only code allowed to swap the array of a parameter leaf between
    tapes.
    """

    __slots__ = ("data", "parents", "vjp", "is_param", "name")

    def __init__(self, data, parents=(), vjp=None, is_param=False, name=None):
        arr = np.asarray(data)
        arr = np.asarray(
            arr, dtype=np.complex128 if np.iscomplexobj(arr) else np.float64
        )
        if arr.ndim and not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.parents = tuple(parents)
        self.vjp = vjp
        self.is_param = is_param
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        kind = "param" if self.is_param else ("leaf" if not self.parents else "node")
        return f"Tensor({kind}, shape={self.data.shape}, dtype={self.data.dtype})"

    # arithmetic sugar used throughout the layer code
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return smul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)


def wrap(x) -> Tensor:
    """Constant leaf from an array, or pass a Tensor through."""
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name=None) -> Tensor:
    """Leaf marked as a trainable parameter."""
    return Tensor(data, is_param=True, name=name)


def _check_finite(arr, op):
    # a single summation catches NaN/Inf in one cheap pass
    if not np.isfinite(arr.sum()):
        raise NonFiniteError(f"{op} produced non-finite values")


def _node(data, parents, vjp, op) -> Tensor:
    _check_finite(data, op)
    return Tensor(data, parents=parents, vjp=vjp)


def _unbroadcast(g, shape):
    """Sum a cotangent down to the shape of a broadcast operand."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise primitives


def add(a, b) -> Tensor:
    a, b = wrap(a), wrap(b)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _node(out, (a, b), vjp, "add")


def sub(a, b) -> Tensor:
    a, b = wrap(a), wrap(b)
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), -_unbroadcast(g, b.data.shape)

    return _node(out, (a, b), vjp, "sub")


def neg(a) -> Tensor:
    a = wrap(a)
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def smul(a, s: float) -> Tensor:
    """Multiply by a python scalar."""
    a = wrap(a)
    s = float(s)
    return _node(a.data * s, (a,), lambda g: (g * s,), "scalar-mul")


def mul(a, b) -> Tensor:
    """Elementwise product; covers both real and complex operands."""
    a, b = wrap(a), wrap(b)
    if np.iscomplexobj(a.data) != np.iscomplexobj(b.data):
        raise ShapeError("mul requires operands of the same (real/complex) kind")
    out = a.data * b.data

    def vjp(g):
        ga = _unbroadcast(g * np.conj(b.data), a.data.shape)
        gb = _unbroadcast(g * np.conj(a.data), b.data.shape)
        return ga, gb

    return _node(out, (a, b), vjp, "mul")


def div(a, b) -> Tensor:
    a, b = wrap(a), wrap(b)
    out = a.data / b.data

    def vjp(g):
        ga = _unbroadcast(g / b.data, a.data.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)
        return ga, gb

    return _node(out, (a, b), vjp, "div")


def sqrt(a) -> Tensor:
    a = wrap(a)
    root = np.sqrt(a.data)
    return _node(root, (a,), lambda g: (g / (2.0 * root),), "sqrt")


def gelu(a) -> Tensor:
    """Exact GELU x * Phi(x) via the error function."""
    a = wrap(a)
    cdf = 0.5 * (1.0 + erf(a.data * _SQRT1_2))
    out = a.data * cdf

    def vjp(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * a.data * a.data)
        return (g * (cdf + a.data * pdf),)

    return _node(out, (a,), vjp, "gelu")


# ---------------------------------------------------------------------------
# shape and channel primitives (all linear, adjoint = transpose)


def reshape(a, shape) -> Tensor:
    a = wrap(a)
    old = a.data.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def concat(parts: Sequence, axis: int) -> Tensor:
    parts = [wrap(p) for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _node(out, tuple(parts), vjp, "concat")


def narrow(a, axis: int, start: int, size: int) -> Tensor:
    """Contiguous slice of one axis."""
    a = wrap(a)
    axis = axis % a.data.ndim
    if start < 0 or start + size > a.data.shape[axis]:
        raise ShapeError(
            f"narrow [{start}:{start + size}) out of bounds for axis {axis} "
            f"of shape {a.data.shape}"
        )
    sel = tuple(
        slice(start, start + size) if d == axis else slice(None)
        for d in range(a.data.ndim)
    )

    def vjp(g):
        full = np.zeros(a.data.shape, dtype=g.dtype)
        full[sel] = g
        return (full,)

    return _node(a.data[sel], (a,), vjp, "slice")


def pad_zeros(a, axis: int, total: int, start: int) -> Tensor:
    """Embed along one axis into a zero array of extent ``total``."""
    a = wrap(a)
    axis = axis % a.data.ndim
    size = a.data.shape[axis]
    if start < 0 or start + size > total:
        raise ShapeError(f"pad target [{start}:{start + size}) exceeds extent {total}")
    shape = list(a.data.shape)
    shape[axis] = total
    out = np.zeros(shape, dtype=a.data.dtype)
    sel = tuple(
        slice(start, start + size) if d == axis else slice(None)
        for d in range(a.data.ndim)
    )
    out[sel] = a.data

    def vjp(g):
        return (np.ascontiguousarray(g[sel]),)

    return _node(out, (a,), vjp, "pad-zeros")


def channel_linear(x, w) -> Tensor:
    """Pointwise channel map: x[b, c, ...] -> sum_c w[o, c] x[b, c, ...]."""
    x, w = wrap(x), wrap(w)
    if w.data.ndim != 2 or x.data.ndim < 2 or w.data.shape[1] != x.data.shape[1]:
        raise ShapeError(
            f"channel_linear: weight {w.data.shape} does not act on input "
            f"{x.data.shape} along axis 1"
        )
    out = np.einsum("oc,bc...->bo...", w.data, x.data)

    def vjp(g):
        gx = np.einsum("oc,bo...->bc...", np.conj(w.data), g)
        flat_g = g.reshape(g.shape[0], g.shape[1], -1)
        flat_x = x.data.reshape(x.data.shape[0], x.data.shape[1], -1)
        gw = np.einsum("bop,bcp->oc", flat_g, np.conj(flat_x))
        return gx, gw

    return _node(out, (x, w), vjp, "channel-linear")


def mode_mix(x, w) -> Tensor:
    """Per-mode channel map: x[b, i, k...] -> sum_i w[o, i, k...] x[b, i, k...]."""
    x, w = wrap(x), wrap(w)
    if w.data.shape[1] != x.data.shape[1] or w.data.shape[2:] != x.data.shape[2:]:
        raise ShapeError(
            f"mode_mix: weight {w.data.shape} does not act on input {x.data.shape}"
        )
    out = np.einsum("oi...,bi...->bo...", w.data, x.data)

    def vjp(g):
        gx = np.einsum("oi...,bo...->bi...", np.conj(w.data), g)
        gw = np.einsum("bo...,bi...->oi...", g, np.conj(x.data))
        return gx, gw

    return _node(out, (x, w), vjp, "mode-mix")


# ---------------------------------------------------------------------------
# Fourier transforms over trailing axes

# Forward transform is unnormalized; the inverse divides by the number of
# transformed points, so irfft_nd(rfft_nd(v), v.shape) == v.


def rfft_nd(x, naxes: int) -> Tensor:
    """Real-to-complex DFT over the ``naxes`` trailing axes, half spectrum last."""
    x = wrap(x)
    if np.iscomplexobj(x.data):
        raise ShapeError("rfft_nd expects a real tensor")
    axes = tuple(range(-naxes, 0))
    extents = x.data.shape[-naxes:]
    if any(n < 2 for n in extents):
        raise ShapeError(f"rfft_nd needs extents >= 2, got {extents}")
    out = np.fft.rfftn(x.data, axes=axes)
    n_points = math.prod(extents)

    def vjp(g):
        # stored coefficients are independent outputs: zero-fill the
        # unstored half (no Hermitian mirroring) and run a full inverse
        full = np.zeros(g.shape[:-1] + (extents[-1],), dtype=np.complex128)
        full[..., : g.shape[-1]] = g
        gx = n_points * np.fft.ifftn(full, axes=axes)
        return (np.real(gx),)

    return _node(out, (x,), vjp, "rfft-nd")


def irfft_nd(c, extents: Sequence[int]) -> Tensor:
    """Inverse of :func:`rfft_nd` onto the given trailing extents.

    For coefficients that are not Hermitian-symmetric this computes the real
    part of the mirror-extended inverse transform, which numpy's ``irfftn``
    implements exactly.
    """
    c = wrap(c)
    extents = tuple(int(n) for n in extents)
    naxes = len(extents)
    axes = tuple(range(-naxes, 0))
    want = extents[:-1] + (extents[-1] // 2 + 1,)
    if c.data.shape[-naxes:] != want:
        raise ShapeError(
            f"irfft_nd: spectrum trailing shape {c.data.shape[-naxes:]} does not "
            f"match extents {extents} (expected {want})"
        )
    out = np.fft.irfftn(c.data, s=extents, axes=axes)
    n_points = math.prod(extents)
    n_last = extents[-1]

    def vjp(g):
        h = np.fft.rfftn(g, axes=axes)
        # trailing frequencies with a distinct mirror contribute twice
        weights = np.ones(h.shape[-1])
        weights[1 : (n_last + 1) // 2] = 2.0
        return (h * weights / n_points,)

    return _node(out, (c,), vjp, "irfft-nd")


# ---------------------------------------------------------------------------
# grid resampling (multilinear interpolation, separable per axis)


@lru_cache(maxsize=None)
def resample_matrix(n_in: int, n_out: int, boundary: str) -> np.ndarray:
    """Dense [n_out, n_in] interpolation matrix for one axis.

    ``clamped`` aligns both endpoints (vertex grids on a box); ``periodic``
    treats samples as living at j/n on a circle and wraps.
    """
    if n_in < 2 or n_out < 1:
        raise ShapeError(f"resample_matrix: bad extents {n_in} -> {n_out}")
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    if boundary == "clamped":
        pos = rows * (n_in - 1) / (n_out - 1) if n_out > 1 else np.zeros(1)
        lo = np.minimum(np.floor(pos).astype(int), n_in - 2)
        frac = pos - lo
        m[rows, lo] += 1.0 - frac
        m[rows, lo + 1] += frac
    elif boundary == "periodic":
        pos = rows * n_in / n_out
        lo = np.floor(pos).astype(int) % n_in
        frac = pos - np.floor(pos)
        m[rows, lo] += 1.0 - frac
        m[rows, (lo + 1) % n_in] += frac
    else:
        raise ShapeError(f"unknown boundary mode {boundary!r}")
    m.setflags(write=False)
    return m


def _apply_matrix(arr, m, axis):
    axis = axis % arr.ndim
    moved = np.tensordot(m, arr, axes=([1], [axis]))
    return np.ascontiguousarray(np.moveaxis(moved, 0, axis))


def resample_linear(x, out_extents: Sequence[int], boundary) -> Tensor:
    """Multilinear resampling of the trailing grid axes.

    ``boundary`` is one mode for all axes or a per-axis sequence.
    """
    x = wrap(x)
    if np.iscomplexobj(x.data):
        raise ShapeError("resample_linear expects a real tensor")
    out_extents = tuple(int(n) for n in out_extents)
    naxes = len(out_extents)
    modes = (boundary,) * naxes if isinstance(boundary, str) else tuple(boundary)
    if len(modes) != naxes:
        raise ShapeError("one boundary mode per resampled axis required")
    in_extents = x.data.shape[-naxes:]
    plan = []
    data = x.data
    for d in range(naxes):
        if in_extents[d] == out_extents[d]:
            plan.append(None)
            continue
        m = resample_matrix(in_extents[d], out_extents[d], modes[d])
        plan.append(m)
        data = _apply_matrix(data, m, -naxes + d)

    def vjp(g):
        for d in reversed(range(naxes)):
            if plan[d] is not None:
                g = _apply_matrix(g, plan[d].T, -naxes + d)
        return (g,)

    return _node(data, (x,), vjp, "linear-interp-resample")


# ---------------------------------------------------------------------------
# reductions


def sum_axes(a, axes, keepdims: bool = False) -> Tensor:
    a = wrap(a)
    axes = tuple(ax % a.data.ndim for ax in axes)
    out = a.data.sum(axis=axes, keepdims=keepdims)
    shape = a.data.shape

    def vjp(g):
        if not keepdims:
            for ax in sorted(axes):
                g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, shape).copy(),)

    return _node(out, (a,), vjp, "sum-axes")


def sum_all(a) -> Tensor:
    a = wrap(a)
    shape = a.data.shape

    def vjp(g):
        return (np.broadcast_to(g, shape).copy(),)

    return _node(a.data.sum(), (a,), vjp, "sum")


def mean_all(a) -> Tensor:
    a = wrap(a)
    return smul(sum_all(a), 1.0 / a.data.size)


# ---------------------------------------------------------------------------
# tape replay


def _toposort(root: Tensor):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(output: Tensor, seed=None) -> dict:
    """Accumulate d<seed, output>/d(leaf) for every leaf reachable from output.

    With ``seed=None`` the output must be scalar and is seeded with 1.
    Returns a dict keyed by leaf Tensor identity.
    """
    if seed is None:
        if output.data.shape != ():
            raise ShapeError("backward without a seed requires a scalar output")
        seed = np.array(1.0)
    seed = np.asarray(seed, dtype=output.data.dtype)
    if seed.shape != output.data.shape:
        raise ShapeError(
            f"seed shape {seed.shape} does not match output {output.data.shape}"
        )
    order = _toposort(output)
    grads: dict[int, np.ndarray] = {id(output): seed}
    nodes = {id(output): output}
    leaf_grads: dict[Tensor, np.ndarray] = {}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.vjp is None:
            leaf_grads[node] = leaf_grads.get(node, 0) + g
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            key = id(parent)
            nodes[key] = parent
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return leaf_grads


def gradients(output: Tensor, wrt: Sequence[Tensor], seed=None):
    """Gradient arrays for the requested leaves (zeros when unreached)."""
    table = backward(output, seed)
    return [table.get(t, np.zeros_like(t.data)) for t in wrt]


# ---------------------------------------------------------------------------
# primitive registry and finite-difference verification

PRIMITIVES: dict[str, Callable] = {
    "add": add,
    "sub": sub,
    "scalar-mul": smul,
    "elementwise-mul": mul,
    "complex-mul": mul,
    "channel-linear": channel_linear,
    "mode-mix": mode_mix,
    "gelu": gelu,
    "concat-channels": lambda *parts: concat(parts, axis=1),
    "slice": narrow,
    "pad-zeros": pad_zeros,
    "rfft-nd": rfft_nd,
    "irfft-nd": irfft_nd,
    "linear-interp-resample": resample_linear,
    "sum": sum_all,
    "mean": mean_all,
}


def forward_primitive(kind: str, *inputs, **params) -> Tensor:
    """Dispatch one named primitive; records the tape node as a side effect."""
    try:
        fn = PRIMITIVES[kind]
    except KeyError:
        raise ShapeError(f"unknown primitive {kind!r}") from None
    return fn(*inputs, **params)


@dataclass
class GradCheckResult:
    """Outcome of a central finite-difference comparison."""

    passed: bool
    tolerance: float
    max_rel_err: float
    worst_param: str = ""
    worst_coord: int = -1
    worst_analytic: float = 0.0
    worst_numeric: float = 0.0
    per_param: dict = field(default_factory=dict)

    def __str__(self):
        status = "ok" if self.passed else "FAILED"
        return (
            f"grad check {status}: max rel err {self.max_rel_err:.3e} "
            f"(tol {self.tolerance:.1e}) at {self.worst_param}[{self.worst_coord}] "
            f"analytic={self.worst_analytic:.6e} numeric={self.worst_numeric:.6e}"
        )


def grad_check(
    f: Callable[[dict], Tensor],
    params: dict,
    step: float = 1e-6,
    tolerance: float = 1e-4,
    n_coords: int = 10,
    rng=None,
) -> GradCheckResult:
    """Compare tape gradients of ``f`` against central differences.

    ``f`` maps a dict of Tensors to a real scalar Tensor and must be
    deterministic.  Complex parameters are perturbed one real coordinate at
    a time (real and imaginary parts separately).  Coordinates whose
    gradient sits below the finite-difference noise floor of the given step
    cannot be compared meaningfully, so the subsample prefers coordinates
    carrying signal; a whole-tensor directional probe covers the rest.
    Failures are reported in the result, not raised.
    """
    if step <= 0:
        raise ShapeError("grad_check requires step > 0")
    rng = rng or np.random.default_rng(0)
    arrays = {k: np.asarray(v) for k, v in params.items()}
    leaves = {k: parameter(v, name=k) for k, v in arrays.items()}
    out = f(leaves)
    if out.data.shape != () or np.iscomplexobj(out.data):
        raise ShapeError("grad_check objective must be a real scalar")
    table = backward(out)
    analytic = {
        k: table.get(leaf, np.zeros_like(leaf.data)) for k, leaf in leaves.items()
    }

    def value_at(updated: dict) -> float:
        fresh = {k: Tensor(v) for k, v in updated.items()}
        return float(f(fresh).data)

    def probe(name, arr, direction, g_dir):
        plus, minus = arr.copy(), arr.copy()
        plus.view(np.float64).ravel()[...] += step * direction
        minus.view(np.float64).ravel()[...] -= step * direction
        fd = (
            value_at({**arrays, name: plus}) - value_at({**arrays, name: minus})
        ) / (2.0 * step)
        return fd, abs(fd - g_dir) / max(abs(g_dir), 1e-8)

    result = GradCheckResult(passed=True, tolerance=tolerance, max_rel_err=0.0)

    def note(rel, name, idx, g, fd):
        if rel > result.max_rel_err:
            result.max_rel_err = rel
            result.worst_param = name
            result.worst_coord = idx
            result.worst_analytic = float(g)
            result.worst_numeric = float(fd)

    for name, arr in arrays.items():
        flat_grad = analytic[name].view(np.float64).ravel()
        n_flat = flat_grad.size
        mags = np.abs(flat_grad)
        gmax = mags.max()
        eligible = (
            np.nonzero(mags >= 0.3 * gmax)[0] if gmax > 0 else np.arange(n_flat)
        )
        coords = (
            eligible
            if eligible.size <= n_coords
            else rng.choice(eligible, size=n_coords, replace=False)
        )
        worst = 0.0
        for idx in coords:
            unit = np.zeros(n_flat)
            unit[idx] = 1.0
            fd, rel = probe(name, arr, unit, flat_grad[idx])
            worst = max(worst, rel)
            note(rel, name, int(idx), flat_grad[idx], fd)
        # random-direction probe covers the coordinates left unsampled
        direction = rng.standard_normal(n_flat)
        direction /= np.linalg.norm(direction)
        fd, rel = probe(name, arr, direction, float(flat_grad @ direction))
        worst = max(worst, rel)
        note(rel, name, -1, flat_grad @ direction, fd)
        result.per_param[name] = worst
    result.passed = result.max_rel_err <= tolerance
    return result
