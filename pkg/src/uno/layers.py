"""Operator building blocks: lifting/projection, integral layers, skips.

Values move through the network as tensors shaped [batch, channels, *grid];
the public :class:`GridFunction` carries one sample [channels, *grid]
together with its domain box and boundary behavior.  For 3-d problems the
trailing grid axis is time and is always resampled with clamped ends, while
the spatial axes follow the function's own boundary mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .spectral import ModeSpec, SpectralWeights, resample_values, spectral_conv
from .tensor import Tensor

MIN_EXTENT = 4


def scaled_extent(n: int, factor: float) -> int:
    """Grid extent after scaling by ``factor`` (round half up, floor 4)."""
    return max(MIN_EXTENT, int(math.floor(n * factor + 0.5)))


@dataclass
class GridFunction:
    """A discretized vector-valued function on a box.

    ``values`` is [channels, n1, ..., nd]; ``domain`` holds the box side
    lengths (origin at 0, time last for 3-d).
    """

    values: np.ndarray
    domain: tuple
    boundary: str = "periodic"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.domain = tuple(float(a) for a in self.domain)
        if self.values.ndim != len(self.domain) + 1:
            raise ShapeError(
                f"values {self.values.shape} do not match a "
                f"{len(self.domain)}-d domain"
            )
        if self.values.shape[0] < 1:
            raise ShapeError("at least one channel required")
        if any(n < MIN_EXTENT for n in self.values.shape[1:]):
            raise ShapeError(f"grid extents must be >= {MIN_EXTENT}")
        if any(a <= 0 for a in self.domain):
            raise ShapeError("domain box extents must be positive")
        if self.boundary not in ("periodic", "clamped"):
            raise ShapeError(f"unknown boundary {self.boundary!r}")

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def extents(self) -> tuple:
        return self.values.shape[1:]


@dataclass
class PointwiseMap:
    """Stack of channel-linear stages with GELU between them.

    One stage is a plain affine channel map; two stages make the small
    pointwise networks used for lifting and projection.
    """

    stages: tuple  # ((weight Tensor [c_out, c_in], bias Tensor [c_out]), ...)

    @property
    def c_in(self) -> int:
        return self.stages[0][0].data.shape[1]

    @property
    def c_out(self) -> int:
        return self.stages[-1][0].data.shape[0]


def init_pointwise(
    c_in: int, c_out: int, rng: np.random.Generator, hidden: int | None = None
) -> PointwiseMap:
    """Fan-in uniform weights, zero biases; two-stage when ``hidden`` given."""
    widths = [c_in, c_out] if hidden is None else [c_in, hidden, c_out]
    stages = []
    for a, b in zip(widths[:-1], widths[1:]):
        bound = 1.0 / math.sqrt(a)
        w = rng.uniform(-bound, bound, size=(b, a))
        stages.append((T.parameter(w), T.parameter(np.zeros(b))))
    return PointwiseMap(tuple(stages))


def _bias_shape(bias: Tensor, ndim: int) -> Tensor:
    return T.reshape(bias, (1, bias.data.shape[0]) + (1,) * (ndim - 2))


def apply_pointwise(x: Tensor, pm: PointwiseMap) -> Tensor:
    """Apply the map independently at every grid point of [b, c, ...]."""
    if x.data.shape[1] != pm.c_in:
        raise ShapeError(
            f"pointwise map expects {pm.c_in} channels, got {x.data.shape[1]}"
        )
    for i, (w, b) in enumerate(pm.stages):
        x = T.add(T.channel_linear(x, w), _bias_shape(b, x.data.ndim))
        if i + 1 < len(pm.stages):
            x = T.gelu(x)
    return x


@dataclass
class IntegralLayer:
    """One nonlinear integral operator: spectral kernel + pointwise residual.

    Output extents default to round(factor * input extents); the model may
    override them to replay extents recorded by the encoder.
    """

    kernel: SpectralWeights
    residual: Tensor  # [c_out, c_in]
    bias: Tensor  # [c_out]
    spatial_factor: float = 1.0
    temporal_factor: float = 1.0
    activation: bool = True
    boundary: str = "periodic"

    def __post_init__(self):
        if self.residual.data.shape != (self.kernel.c_out, self.kernel.c_in):
            raise ShapeError(
                f"residual {self.residual.data.shape} disagrees with kernel "
                f"({self.kernel.c_out}, {self.kernel.c_in})"
            )
        if self.spatial_factor <= 0 or self.temporal_factor <= 0:
            raise ShapeError("scaling factors must be positive")

    @property
    def c_in(self) -> int:
        return self.kernel.c_in

    @property
    def c_out(self) -> int:
        return self.kernel.c_out

    def output_extents(self, in_extents: Sequence[int]) -> tuple:
        ndim = self.kernel.modes.ndim
        if len(in_extents) != ndim:
            raise ShapeError(
                f"{ndim}-d layer applied to grid with {len(in_extents)} axes"
            )
        spatial = tuple(
            scaled_extent(n, self.spatial_factor) for n in in_extents[: min(ndim, 2)]
        )
        if ndim == 3:  # time axis last
            return spatial + (scaled_extent(in_extents[2], self.temporal_factor),)
        return spatial

    def axis_boundaries(self) -> tuple:
        ndim = self.kernel.modes.ndim
        if ndim == 3:
            return (self.boundary, self.boundary, "clamped")
        return (self.boundary,) * ndim


def apply_integral_layer(
    x: Tensor, layer: IntegralLayer, out_extents: Sequence[int] | None = None
) -> Tensor:
    """sigma( spectral_conv(x) + W x(s(.)) + b ) on the scaled grid."""
    ndim = layer.kernel.modes.ndim
    in_extents = x.data.shape[-ndim:]
    if out_extents is None:
        out_extents = layer.output_extents(in_extents)
    out_extents = tuple(int(n) for n in out_extents)
    conv = spectral_conv(x, layer.kernel, out_extents)
    res = resample_values(x, out_extents, layer.axis_boundaries())
    res = T.channel_linear(res, layer.residual)
    out = T.add(T.add(conv, res), _bias_shape(layer.bias, conv.data.ndim))
    return T.gelu(out) if layer.activation else out


# ---------------------------------------------------------------------------
# GridFunction-level wrappers (single sample)


def _batched(gf: GridFunction) -> Tensor:
    return T.wrap(gf.values[None])


def lift(a: GridFunction, p: PointwiseMap) -> GridFunction:
    """Raise the co-dimension pointwise: same grid, c_out channels."""
    out = apply_pointwise(_batched(a), p)
    return GridFunction(out.data[0], a.domain, a.boundary)


def project(v: GridFunction, q: PointwiseMap) -> GridFunction:
    """Reduce the co-dimension pointwise onto the target channels."""
    out = apply_pointwise(_batched(v), q)
    return GridFunction(out.data[0], v.domain, v.boundary)


def integral_layer_apply(v: GridFunction, layer: IntegralLayer) -> GridFunction:
    if v.channels != layer.c_in:
        raise ShapeError(f"layer expects {layer.c_in} channels, got {v.channels}")
    out = apply_integral_layer(_batched(v), layer)
    domain = tuple(a * layer.spatial_factor for a in v.domain[:2])
    if layer.kernel.modes.ndim == 3:
        domain = domain + (v.domain[2] * layer.temporal_factor,)
    return GridFunction(out.data[0], domain, v.boundary)


def concat_skip(enc: GridFunction, dec: GridFunction) -> GridFunction:
    """Channel-wise concatenation of two functions on one shared domain."""
    if enc.extents != dec.extents:
        raise ShapeError(f"skip grids differ: {enc.extents} vs {dec.extents}")
    if not np.allclose(enc.domain, dec.domain):
        raise ShapeError(f"skip domains differ: {enc.domain} vs {dec.domain}")
    values = np.concatenate([enc.values, dec.values], axis=0)
    return GridFunction(values, dec.domain, dec.boundary)


def positional_embedding(extents: Sequence[int], kind: str) -> np.ndarray:
    """Coordinate channels [c, *extents] concatenated to inputs before lifting.

    ``torus`` embeds the two spatial axes on the Clifford torus, half-scaled
    circle pairs (sin, cos) per axis; ``box`` emits the raw coordinates of a
    vertex grid.  Three-axis grids additionally append normalized time.
    """
    extents = tuple(int(n) for n in extents)
    if kind not in ("torus", "box"):
        raise ShapeError(f"unknown domain kind {kind!r}")
    spatial = extents[:2]
    channels = []
    for axis, n in enumerate(spatial):
        if kind == "torus":
            theta = 2.0 * math.pi * np.arange(n) / n
            per_axis = [0.5 * np.sin(theta), 0.5 * np.cos(theta)]
        else:
            per_axis = [np.arange(n) / (n - 1)]
        for values in per_axis:
            shape = [1] * len(spatial)
            shape[axis] = n
            channels.append(np.broadcast_to(values.reshape(shape), spatial))
    emb = np.stack([np.ascontiguousarray(c) for c in channels])
    if len(extents) == 3:
        nt = extents[2]
        emb = np.broadcast_to(emb[..., None], emb.shape + (nt,))
        t_channel = np.broadcast_to(np.arange(nt) / nt, extents)
        emb = np.concatenate([emb, t_channel[None]], axis=0)
    return np.ascontiguousarray(emb)


def embedding_channels(kind: str, ndim: int) -> int:
    base = 4 if kind == "torus" else 2
    return base + (1 if ndim == 3 else 0)
