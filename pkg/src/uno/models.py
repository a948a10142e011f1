"""Model assembly: U-NO variants and the FNO baseline.

An architecture is fully described by a :class:`ModelConfig`; building one
draws parameters from a counter-based stream so a (config, seed) pair is
reproducible bit for bit.  The encoder records its input extents and the
decoder replays them, which keeps skip grids aligned at any input
resolution, including extents that rounding alone would not restore.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .layers import (
    GridFunction,
    IntegralLayer,
    PointwiseMap,
    apply_integral_layer,
    apply_pointwise,
    embedding_channels,
    init_pointwise,
    positional_embedding,
    scaled_extent,
)
from .spectral import ModeSpec, SpectralWeights, init_spectral_weights
from .tensor import Tensor

VARIANTS = ("uno", "uno-dagger", "fno", "fno-skip")
MIN_FRAMES = 4

# encoder contraction factors; decoders use the reciprocals in reverse order
_SPATIAL_FACTORS = {"uno": (0.75, 2.0 / 3.0, 0.5), "uno-dagger": (0.5, 0.5, 0.5)}
_CHANNEL_FACTORS = {"uno": (1.5, 2.0, 2.0), "uno-dagger": (2.0, 2.0, 2.0)}


@dataclass(frozen=True)
class LayerSpec:
    """Channel counts, scaling factors, and retained modes of one layer."""

    c_in: int
    c_out: int
    spatial_factor: float = 1.0
    temporal_factor: float = 1.0
    modes: tuple = (2, 2)

    def __post_init__(self):
        if self.c_in < 1 or self.c_out < 1:
            raise ShapeError("channel counts must be >= 1")
        if self.spatial_factor <= 0 or self.temporal_factor <= 0:
            raise ShapeError("scaling factors must be positive")


@dataclass
class ModelConfig:
    """The whole architecture as data."""

    variant: str
    ndim: int  # 2 for spatial, 3 for spatio-temporal
    d0: int
    in_channels: int
    out_channels: int
    domain_kind: str  # "torus" | "box"
    layers: list = field(default_factory=list)
    skip_pairs: dict = field(default_factory=dict)  # encoder idx -> decoder idx
    ref_resolution: int = 64
    t_in: int = 0  # input frames (3-d only)
    t_target: int = 0  # output frames (3-d only)
    embed: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ShapeError(f"unknown variant {self.variant!r}")
        if self.ndim not in (2, 3):
            raise ShapeError("dimensionality must be 2 or 3")
        if self.domain_kind not in ("torus", "box"):
            raise ShapeError(f"unknown domain kind {self.domain_kind!r}")
        self.validate()

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def boundary(self) -> str:
        return "periodic" if self.domain_kind == "torus" else "clamped"

    def lifted_channels(self) -> int:
        extra = embedding_channels(self.domain_kind, self.ndim) if self.embed else 0
        return self.in_channels + extra

    def validate(self):
        if not self.layers:
            return
        spatial_product = 1.0
        width = self.d0
        decoder_of = {d: e for e, d in self.skip_pairs.items()}
        for i, spec in enumerate(self.layers):
            expected = width
            if i in decoder_of:
                expected += self.layers[decoder_of[i]].c_out
            if spec.c_in != expected:
                raise ShapeError(
                    f"layer {i} expects c_in={spec.c_in} but the chain "
                    f"(with skips) provides {expected}"
                )
            width = spec.c_out
            spatial_product *= spec.spatial_factor
        if abs(spatial_product - 1.0) > 1e-9:
            raise ShapeError(
                f"spatial factors must compose to 1, got {spatial_product}"
            )

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "ndim": self.ndim,
            "d0": self.d0,
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "domain_kind": self.domain_kind,
            "ref_resolution": self.ref_resolution,
            "t_in": self.t_in,
            "t_target": self.t_target,
            "embed": self.embed,
            "skip_pairs": {str(k): v for k, v in self.skip_pairs.items()},
            "layers": [
                {
                    "c_in": s.c_in,
                    "c_out": s.c_out,
                    "spatial_factor": s.spatial_factor,
                    "temporal_factor": s.temporal_factor,
                    "modes": list(s.modes),
                }
                for s in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            variant=d["variant"],
            ndim=int(d["ndim"]),
            d0=int(d["d0"]),
            in_channels=int(d["in_channels"]),
            out_channels=int(d["out_channels"]),
            domain_kind=d["domain_kind"],
            ref_resolution=int(d["ref_resolution"]),
            t_in=int(d["t_in"]),
            t_target=int(d["t_target"]),
            embed=bool(d["embed"]),
            skip_pairs={int(k): int(v) for k, v in d["skip_pairs"].items()},
            layers=[
                LayerSpec(
                    c_in=int(s["c_in"]),
                    c_out=int(s["c_out"]),
                    spatial_factor=float(s["spatial_factor"]),
                    temporal_factor=float(s["temporal_factor"]),
                    modes=tuple(int(m) for m in s["modes"]),
                )
                for s in d["layers"]
            ],
        )


# ---------------------------------------------------------------------------
# architecture planning


def _pair_plan(variant: str, depth: int):
    """Encoder/decoder factor lists for a given stack depth.

    At most three contraction/expansion pairs (the published layout); any
    extra depth becomes bottleneck layers that preserve domain and width.
    """
    if depth < 1:
        raise ShapeError("depth must be >= 1")
    if variant in ("fno", "fno-skip"):
        n_pairs = min(3, (depth - 1) // 2) if variant == "fno-skip" else 0
        return n_pairs, (1.0,) * n_pairs, (1.0,) * n_pairs
    n_pairs = min(3, (depth - 1) // 2)
    return (
        n_pairs,
        _SPATIAL_FACTORS[variant][:n_pairs],
        _CHANNEL_FACTORS[variant][:n_pairs],
    )


def _grid_schedule(spatial_factors, n_middle: int, s: int):
    """Per-layer (n_in, n_out) extents along one spatial axis from input s."""
    sizes = [s]
    for f in spatial_factors:
        sizes.append(scaled_extent(sizes[-1], f))
    schedule = list(zip(sizes[:-1], sizes[1:]))
    schedule += [(sizes[-1], sizes[-1])] * n_middle
    for n_in, n_out in reversed(schedule[: len(spatial_factors)]):
        schedule.append((n_out, n_in))
    return schedule


def _default_mode_count(n_in: int, n_out: int) -> int:
    # one-third Nyquist, floored at 2, valid on the smaller grid
    k = min(round(n_in / 3), round(n_out / 3))
    return max(2, min(int(k), min(n_in, n_out) // 2))


def _plan_modes(base_modes, n_in, n_out, naxes, t_pair=None):
    if base_modes is None:
        k = _default_mode_count(n_in, n_out)
        counts = [k] * min(naxes, 2)
    else:
        base = (base_modes,) * naxes if isinstance(base_modes, int) else base_modes
        limit = min(n_in, n_out) // 2
        counts = [max(1, min(int(b), limit)) for b in base[: min(naxes, 2)]]
    if naxes == 3:
        t_in, t_out = t_pair
        if base_modes is None:
            kt = _default_mode_count(t_in, t_out)
        else:
            base = (base_modes,) * naxes if isinstance(base_modes, int) else base_modes
            kt = max(1, min(int(base[2]), min(t_in, t_out) // 2))
        counts.append(kt)
    return tuple(counts)


def make_config_2d(
    d0: int = 32,
    variant: str = "uno",
    depth: int = 7,
    in_channels: int = 1,
    out_channels: int = 1,
    domain_kind: str = "box",
    ref_resolution: int = 64,
    base_modes=None,
) -> ModelConfig:
    """Plan a 2-d architecture; factors follow the chosen variant."""
    if d0 < 4:
        raise ShapeError("lifting width d0 must be >= 4")
    n_pairs, sf, cf = _pair_plan(variant, depth)
    n_middle = depth - 2 * n_pairs
    grid = _grid_schedule(sf, n_middle, ref_resolution)

    widths = [d0]
    for f in cf:
        widths.append(int(round(widths[-1] * f)))
    enc_out = widths[1:]
    use_skips = variant != "fno"
    skip_pairs = {i: depth - 1 - i for i in range(n_pairs)} if use_skips else {}

    layers = []
    for i in range(depth):
        n_in, n_out = grid[i]
        if i < n_pairs:
            c_in, c_out = widths[i], widths[i + 1]
            factor = sf[i]
        elif i < n_pairs + n_middle:
            c_in = c_out = widths[n_pairs]
            factor = 1.0
        else:
            mirror = depth - 1 - i
            c_in = widths[mirror + 1] + (enc_out[mirror] if use_skips else 0)
            c_out = widths[mirror]
            factor = 1.0 / sf[mirror]
        modes = _plan_modes(base_modes, n_in, n_out, 2)
        layers.append(
            LayerSpec(c_in=c_in, c_out=c_out, spatial_factor=factor, modes=modes)
        )
    return ModelConfig(
        variant=variant,
        ndim=2,
        d0=d0,
        in_channels=in_channels,
        out_channels=out_channels,
        domain_kind=domain_kind,
        layers=layers,
        skip_pairs=skip_pairs,
        ref_resolution=ref_resolution,
    )


def make_config_3d(
    d0: int = 8,
    t_in: int = 10,
    t_total: int = 50,
    variant: str = "uno",
    depth: int = 7,
    in_channels: int = 1,
    out_channels: int = 1,
    domain_kind: str = "torus",
    ref_resolution: int = 64,
    base_modes=None,
) -> ModelConfig:
    """Plan a spatio-temporal architecture mapping t_in input frames to
    t_total - t_in output frames.

    Spatial factors follow the 2-d layout of the same variant; temporal
    expansion is split geometrically over the decoder layers so their
    product equals (t_total - t_in) / t_in.
    """
    t_target = t_total - t_in
    if t_in < MIN_FRAMES or t_target < MIN_FRAMES:
        raise ShapeError(
            f"need at least {MIN_FRAMES} input and output frames, got "
            f"{t_in} -> {t_target}"
        )
    n_pairs, sf, cf = _pair_plan(variant, depth)
    n_middle = depth - 2 * n_pairs
    grid = _grid_schedule(sf, n_middle, ref_resolution)

    # fixed-domain stacks see the input already extended to the output frames
    fixed_domain = variant in ("fno", "fno-skip")
    if fixed_domain or n_pairs == 0:
        t_factor = 1.0
        t_sizes = [t_target if fixed_domain else t_in] * (depth + 1)
        t_sizes[-1] = t_target
    else:
        t_factor = (t_target / t_in) ** (1.0 / n_pairs)
        t_sizes = [t_in] * (n_pairs + n_middle + 1)
        for i in range(n_pairs):
            t_sizes.append(
                t_target
                if i == n_pairs - 1
                else scaled_extent(t_sizes[-1], t_factor)
            )

    widths = [d0]
    for f in cf:
        widths.append(int(round(widths[-1] * f)))
    enc_out = widths[1:]
    use_skips = variant != "fno"
    skip_pairs = {i: depth - 1 - i for i in range(n_pairs)} if use_skips else {}

    layers = []
    for i in range(depth):
        n_in, n_out = grid[i]
        ti, to = t_sizes[i], t_sizes[i + 1]
        if i < n_pairs:
            c_in, c_out = widths[i], widths[i + 1]
            factor, tf = sf[i], 1.0
        elif i < n_pairs + n_middle:
            c_in = c_out = widths[n_pairs]
            factor, tf = 1.0, 1.0
        else:
            mirror = depth - 1 - i
            c_in = widths[mirror + 1] + (enc_out[mirror] if use_skips else 0)
            c_out = widths[mirror]
            factor, tf = 1.0 / sf[mirror], t_factor
        modes = _plan_modes(base_modes, n_in, n_out, 3, t_pair=(ti, to))
        layers.append(
            LayerSpec(
                c_in=c_in,
                c_out=c_out,
                spatial_factor=factor,
                temporal_factor=tf,
                modes=modes,
            )
        )
    return ModelConfig(
        variant=variant,
        ndim=3,
        d0=d0,
        in_channels=in_channels,
        out_channels=out_channels,
        domain_kind=domain_kind,
        layers=layers,
        skip_pairs=skip_pairs,
        ref_resolution=ref_resolution,
        t_in=t_in,
        t_target=t_target,
    )


# ---------------------------------------------------------------------------
# model instantiation


class Model:
    """Parameterized operator: lifting, integral layers, projection.

    All state lives in ``registry`` as (name, Tensor, trainable) triples in
    a fixed order; checkpoints serialize exactly that order.
    """

    def __init__(self, config: ModelConfig, lift_map, project_map, layers,
                 input_shift, input_scale):
        self.config = config
        self.lift_map = lift_map
        self.project_map = project_map
        self.layers = layers
        self.input_shift = input_shift
        self.input_scale = input_scale
        self.registry = []
        for i, (w, b) in enumerate(lift_map.stages):
            self.registry += [(f"lift.w{i}", w, True), (f"lift.b{i}", b, True)]
        for i, layer in enumerate(layers):
            self.registry += [
                (f"layer{i}.kernel", layer.kernel.weights, True),
                (f"layer{i}.residual", layer.residual, True),
                (f"layer{i}.bias", layer.bias, True),
            ]
        for i, (w, b) in enumerate(project_map.stages):
            self.registry += [(f"project.w{i}", w, True), (f"project.b{i}", b, True)]
        self.registry += [
            ("input_shift", input_shift, False),
            ("input_scale", input_scale, False),
        ]

    def parameters(self):
        return [(name, t) for name, t, trainable in self.registry if trainable]

    def set_input_normalization(self, shift, scale):
        self.input_shift.data = np.asarray(shift, dtype=np.float64)
        self.input_scale.data = np.asarray(scale, dtype=np.float64)


def build_model(config: ModelConfig, seed: int = 0) -> Model:
    rng = np.random.Generator(np.random.Philox(seed))
    lifted = config.lifted_channels()
    lift_map = init_pointwise(
        lifted, config.d0, rng, hidden=4 * max(lifted, config.d0)
    )
    layers = []
    boundary = config.boundary
    for spec in config.layers:
        modes = ModeSpec(spec.modes)
        kernel = SpectralWeights(
            T.parameter(init_spectral_weights(spec.c_out, spec.c_in, modes, rng)),
            modes,
        )
        bound = 1.0 / math.sqrt(spec.c_in)
        residual = T.parameter(
            rng.uniform(-bound, bound, size=(spec.c_out, spec.c_in))
        )
        bias = T.parameter(np.zeros(spec.c_out))
        layers.append(
            IntegralLayer(
                kernel=kernel,
                residual=residual,
                bias=bias,
                spatial_factor=spec.spatial_factor,
                temporal_factor=spec.temporal_factor,
                activation=True,
                boundary=boundary,
            )
        )
    if layers:
        layers[-1].activation = False  # projection sees an unclipped field
    last_width = config.layers[-1].c_out if config.layers else config.d0
    project_map = init_pointwise(
        last_width,
        config.out_channels,
        rng,
        hidden=4 * max(last_width, config.out_channels),
    )
    input_shift = Tensor(np.zeros(config.in_channels))
    input_scale = Tensor(np.ones(config.in_channels))
    return Model(config, lift_map, project_map, layers, input_shift, input_scale)


def build_uno_2d(
    d0: int = 32, variant: str = "uno", seed: int = 0, **kwargs
) -> Model:
    """Seven-layer 2-d operator (or FNO baseline via ``variant``)."""
    return build_model(make_config_2d(d0=d0, variant=variant, **kwargs), seed)


def build_uno_3d(
    d0: int = 8, t_in: int = 10, t_total: int = 50, seed: int = 0, **kwargs
) -> Model:
    """Seven-layer spatio-temporal operator with decoder time expansion."""
    return build_model(
        make_config_3d(d0=d0, t_in=t_in, t_total=t_total, **kwargs), seed
    )


def rebind(model: Model, tensors: dict) -> Model:
    """Structural copy of ``model`` with registry tensors swapped by name.

    Missing names keep the original tensor.  Used to route externally owned
    leaves (e.g. finite-difference probes) through the same forward code.
    """
    lookup = {name: tensors.get(name, t) for name, t, _ in model.registry}
    lift_map = PointwiseMap(
        tuple(
            (lookup[f"lift.w{i}"], lookup[f"lift.b{i}"])
            for i in range(len(model.lift_map.stages))
        )
    )
    project_map = PointwiseMap(
        tuple(
            (lookup[f"project.w{i}"], lookup[f"project.b{i}"])
            for i in range(len(model.project_map.stages))
        )
    )
    layers = [
        IntegralLayer(
            kernel=SpectralWeights(lookup[f"layer{i}.kernel"], layer.kernel.modes),
            residual=lookup[f"layer{i}.residual"],
            bias=lookup[f"layer{i}.bias"],
            spatial_factor=layer.spatial_factor,
            temporal_factor=layer.temporal_factor,
            activation=layer.activation,
            boundary=layer.boundary,
        )
        for i, layer in enumerate(model.layers)
    ]
    return Model(
        model.config,
        lift_map,
        project_map,
        layers,
        lookup["input_shift"],
        lookup["input_scale"],
    )


# ---------------------------------------------------------------------------
# extent bookkeeping and forward evaluation


def trace_extents(config: ModelConfig, input_extents: Sequence[int]):
    """Per-layer (in_extents, out_extents) for a given input grid.

    Encoder input extents are recorded and replayed by the paired decoder
    layers; for 3-d stacks the final time extent is pinned to the target
    frame count so per-layer rounding cannot drift.
    """
    input_extents = tuple(int(n) for n in input_extents)
    decoder_of = {d: e for e, d in config.skip_pairs.items()}
    if config.ndim == 3:
        # frame counts track the input window, so finer temporal sampling of
        # the window yields a proportionally finer output trajectory
        expected_in = (
            config.t_target
            if config.variant in ("fno", "fno-skip")
            else config.t_in
        )
        t_final = max(
            MIN_FRAMES, int(round(config.t_target * input_extents[2] / expected_in))
        )
    recorded = {}
    trace = []
    cur = input_extents
    for i, spec in enumerate(config.layers):
        spatial_in = cur[:2] if config.ndim == 3 else cur
        if i in decoder_of:
            out_spatial = recorded[decoder_of[i]]
        else:
            out_spatial = tuple(
                scaled_extent(n, spec.spatial_factor) for n in spatial_in
            )
        if config.ndim == 3:
            t_out = scaled_extent(cur[2], spec.temporal_factor)
            if i == config.depth - 1:
                t_out = t_final
            out = out_spatial + (t_out,)
        else:
            out = out_spatial
        recorded[i] = spatial_in
        trace.append((cur, out))
        cur = out
    return trace


def forward_values(model: Model, x) -> Tensor:
    """Evaluate the operator on a batch [b, in_channels, *grid]."""
    config = model.config
    x = T.wrap(x)
    grid_ndim = x.data.ndim - 2
    if grid_ndim != config.ndim:
        raise ShapeError(
            f"{config.ndim}-d model applied to {grid_ndim}-d grid input"
        )
    if x.data.shape[1] != config.in_channels:
        raise ShapeError(
            f"model expects {config.in_channels} input channels, got "
            f"{x.data.shape[1]}"
        )
    if config.ndim == 3 and config.variant in ("fno", "fno-skip"):
        # a fixed-domain stack needs the input extended to the output frames
        extents = x.data.shape[2:]
        if extents[-1] != config.t_target:
            x = T.resample_linear(
                x, extents[:2] + (config.t_target,),
                (config.boundary, config.boundary, "clamped"),
            )
    extents = x.data.shape[2:]
    batch = x.data.shape[0]

    shift = T.reshape(model.input_shift, (1, config.in_channels) + (1,) * grid_ndim)
    scale = T.reshape(model.input_scale, (1, config.in_channels) + (1,) * grid_ndim)
    h = T.div(T.sub(x, shift), scale)
    if config.embed:
        emb = positional_embedding(extents, config.domain_kind)
        emb_b = np.broadcast_to(emb[None], (batch,) + emb.shape).copy()
        h = T.concat([h, T.wrap(emb_b)], axis=1)
    h = apply_pointwise(h, model.lift_map)

    trace = trace_extents(config, extents)
    decoder_of = {d: e for e, d in config.skip_pairs.items()}
    stored = {}
    for i, layer in enumerate(model.layers):
        if i in decoder_of:
            skip = stored.pop(decoder_of[i])
            if skip.data.shape[2:] != h.data.shape[2:]:
                # time-expanded decoder: map the skip onto the current grid
                skip = T.resample_linear(
                    skip, h.data.shape[2:], layer.axis_boundaries()
                )
            h = T.concat([skip, h], axis=1)  # encoder channels first
        h = apply_integral_layer(h, layer, out_extents=trace[i][1])
        if i in config.skip_pairs:
            stored[i] = h
    return apply_pointwise(h, model.project_map)


def forward(model: Model, a: GridFunction) -> GridFunction:
    """Single-sample evaluation preserving the stored domain box."""
    out = forward_values(model, a.values[None])
    domain = a.domain[:2] if model.config.ndim == 3 else a.domain
    if model.config.ndim == 3:
        domain = domain + (float(model.config.t_target),)
    return GridFunction(out.data[0], domain, a.boundary)


# ---------------------------------------------------------------------------
# analytic accounting


def param_count(model: Model):
    """Total learned scalars plus a per-component table."""
    rows = []
    for i, layer in enumerate(model.layers):
        block = math.prod(layer.kernel.modes.block_shape())
        spectral = 2 * layer.c_out * layer.c_in * block
        pointwise = layer.c_out * layer.c_in + layer.c_out
        rows.append(
            {
                "component": f"layer{i}",
                "spectral": spectral,
                "pointwise": pointwise,
                "total": spectral + pointwise,
            }
        )
    for name, pm in (("lift", model.lift_map), ("project", model.project_map)):
        n = sum(w.data.size + b.data.size for w, b in pm.stages)
        rows.append({"component": name, "spectral": 0, "pointwise": n, "total": n})
    total = sum(r["total"] for r in rows)
    return total, rows


def _half_points(extents) -> int:
    return math.prod(extents[:-1]) * (extents[-1] // 2 + 1)


def activation_memory_report(
    model: Model, input_extents: Sequence[int], bytes_per_scalar: int = 8
):
    """Analytic retained-activation bytes for one training instance.

    Counts every array the backward pass holds on to: layer outputs, the
    pointwise-residual path, and the spectral intermediates (complex arrays
    count twice per point).
    """
    config = model.config
    input_extents = tuple(int(n) for n in input_extents)
    trace = trace_extents(config, input_extents)
    rows = []
    grid_in = math.prod(input_extents)
    lifted = config.lifted_channels()
    scalars = lifted * grid_in  # embedded input
    for w, _ in model.lift_map.stages:
        scalars += 2 * w.data.shape[0] * grid_in  # affine output + gelu
    rows.append({"component": "lift", "scalars": scalars})
    for i, layer in enumerate(model.layers):
        n_in, n_out = trace[i]
        block = math.prod(layer.kernel.modes.block_shape())
        c_in, c_out = layer.c_in, layer.c_out
        scalars = 2 * c_in * _half_points(n_in)  # forward spectrum
        scalars += 2 * c_in * block + 2 * c_out * block  # corner blocks
        scalars += 2 * c_out * _half_points(n_out)  # embedded spectrum
        scalars += c_out * math.prod(n_out)  # inverse transform
        scalars += (c_in + c_out) * math.prod(n_out)  # resampled + mixed residual
        scalars += 2 * c_out * math.prod(n_out)  # pre-activation and output
        rows.append({"component": f"layer{i}", "scalars": scalars})
    grid_out = math.prod(trace[-1][1]) if model.layers else grid_in
    scalars = 0
    for w, _ in model.project_map.stages:
        scalars += 2 * w.data.shape[0] * grid_out
    rows.append({"component": "project", "scalars": scalars})
    for row in rows:
        row["bytes"] = row["scalars"] * bytes_per_scalar
    total = sum(r["bytes"] for r in rows)
    return total, rows


# ---------------------------------------------------------------------------
# checkpoint serialization

CHECKPOINT_MAGIC = b"UNOCKPT1"
CHECKPOINT_VERSION = 1


def _checksum(payload: bytes) -> int:
    import hashlib

    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:8], "little")


def save_checkpoint(model: Model, path):
    """Write magic, version, config JSON, registry tensors, checksum."""
    import struct

    config_blob = json.dumps(model.config.to_dict(), sort_keys=True).encode()
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    parts.append(struct.pack("<Q", len(config_blob)))
    parts.append(config_blob)
    for _, tensor, _ in model.registry:
        arr = tensor.data
        kind = b"c" if np.iscomplexobj(arr) else b"r"
        parts.append(kind)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.astype("<c16" if kind == b"c" else "<f8").tobytes())
    payload = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(struct.pack("<Q", _checksum(payload)))


def load_checkpoint(path) -> Model:
    import struct

    from .errors import DataError

    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(CHECKPOINT_MAGIC) + 12 or blob[:8] != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not a model checkpoint")
    payload, stored = blob[:-8], struct.unpack("<Q", blob[-8:])[0]
    if _checksum(payload) != stored:
        raise DataError(f"{path}: checksum mismatch, file corrupt")
    off = 8
    (version,) = struct.unpack_from("<I", payload, off)
    off += 4
    if version != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    (config_len,) = struct.unpack_from("<Q", payload, off)
    off += 8
    config = ModelConfig.from_dict(json.loads(payload[off : off + config_len]))
    off += config_len
    model = build_model(config, seed=0)
    for name, tensor, _ in model.registry:
        kind = payload[off : off + 1]
        off += 1
        (ndim,) = struct.unpack_from("<I", payload, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}Q", payload, off)
        off += 8 * ndim
        if shape != tensor.data.shape:
            raise DataError(
                f"{path}: tensor {name} has shape {shape}, expected "
                f"{tensor.data.shape}"
            )
        dtype = "<c16" if kind == b"c" else "<f8"
        nbytes = math.prod(shape) * (16 if kind == b"c" else 8)
        arr = np.frombuffer(payload[off : off + nbytes], dtype=dtype).reshape(shape)
        off += nbytes
        tensor.data = np.ascontiguousarray(arr, dtype=dtype[1:])
    if off != len(payload):
        raise DataError(f"{path}: {len(payload) - off} trailing bytes")
    return model
