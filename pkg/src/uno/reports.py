"""Report tables: parameters, activation memory, inference timing.

Every report is a list of flat dicts; the same rows print as an aligned
text table and write as CSV.
"""

from __future__ import annotations

import time

import numpy as np

from .models import (
    Model,
    activation_memory_report,
    build_model,
    forward_values,
    make_config_2d,
    make_config_3d,
    param_count,
    trace_extents,
)

MEMORY_RESOLUTIONS = (64, 128, 256, 512, 1024)


def format_table(rows, columns=None) -> str:
    if not rows:
        return "(empty)\n"
    columns = columns or list(rows[0].keys())
    rendered = [
        {c: _cell(row.get(c, "")) for c in columns} for row in rows
    ]
    widths = {
        c: max(len(c), max(len(r[c]) for r in rendered)) for c in columns
    }
    lines = ["  ".join(c.ljust(widths[c]) for c in columns)]
    lines.append("  ".join("-" * widths[c] for c in columns))
    for r in rendered:
        lines.append("  ".join(r[c].rjust(widths[c]) for c in columns))
    return "\n".join(lines) + "\n"


def _cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def write_csv(rows, path, columns=None):
    if not rows:
        columns = columns or []
    columns = columns or list(rows[0].keys())
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_cell(row.get(c, "")) for c in columns) + "\n")


def parameter_report(model: Model):
    total, rows = param_count(model)
    rows = rows + [{"component": "total", "spectral": "", "pointwise": "",
                    "total": total}]
    return rows


def _build_variant(variant, d0, depth, ndim, base_modes, ref_resolution, t_in=10,
                   t_total=50):
    if ndim == 3:
        return build_model(
            make_config_3d(
                d0=d0, t_in=t_in, t_total=t_total, variant=variant, depth=depth,
                ref_resolution=ref_resolution, base_modes=base_modes,
            )
        )
    return build_model(
        make_config_2d(
            d0=d0, variant=variant, depth=depth, ref_resolution=ref_resolution,
            base_modes=base_modes,
        )
    )


def memory_by_resolution(
    variants=("fno", "uno", "uno-dagger"),
    resolutions=MEMORY_RESOLUTIONS,
    d0: int = 32,
    depth: int = 7,
    base_modes=None,
    bytes_per_scalar: int = 8,
):
    """Activation bytes per training instance across grid resolutions."""
    rows = []
    for s in resolutions:
        row = {"resolution": f"{s}x{s}"}
        for variant in variants:
            model = _build_variant(variant, d0, depth, 2, base_modes, s)
            total, _ = activation_memory_report(model, (s, s), bytes_per_scalar)
            row[variant + "_mb"] = total / 2 ** 20
        rows.append(row)
    return rows


def memory_by_depth(
    variants=("fno", "uno-dagger"),
    depths=range(4, 12),
    resolution: int = 64,
    d0: int = 32,
    base_modes=None,
    bytes_per_scalar: int = 8,
):
    """Activation bytes as layers stack up; U-shaped growth is sublinear."""
    rows = []
    for depth in depths:
        row = {"depth": depth}
        for variant in variants:
            model = _build_variant(variant, d0, depth, 2, base_modes, resolution)
            total, _ = activation_memory_report(
                model, (resolution, resolution), bytes_per_scalar
            )
            row[variant + "_mb"] = total / 2 ** 20
        rows.append(row)
    return rows


def timing_report(model: Model, input_extents, repeats: int = 20, warmup: int = 2):
    """Wall-clock per single-sample inference, averaged over ``repeats``."""
    rng = np.random.default_rng(0)
    x = rng.standard_normal((1, model.config.in_channels) + tuple(input_extents))
    for _ in range(warmup):
        forward_values(model, x)
    started = time.perf_counter()
    for _ in range(repeats):
        forward_values(model, x)
    per_call = (time.perf_counter() - started) / repeats
    return [
        {
            "variant": model.config.variant,
            "input": "x".join(str(n) for n in input_extents),
            "repeats": repeats,
            "ms_per_sample": 1e3 * per_call,
        }
    ]


def extent_trace_report(model: Model, input_extents):
    rows = []
    for i, (n_in, n_out) in enumerate(trace_extents(model.config, input_extents)):
        spec = model.config.layers[i]
        rows.append(
            {
                "layer": i,
                "c_in": spec.c_in,
                "c_out": spec.c_out,
                "in_grid": "x".join(str(n) for n in n_in),
                "out_grid": "x".join(str(n) for n in n_out),
                "modes": "x".join(str(k) for k in spec.modes),
            }
        )
    return rows
