"""Finite-difference verification of every primitive and layer type.

Each case wires a handful of parameters into a real scalar objective and
compares tape gradients against central differences.  Complex-valued
primitives route their output through the inverse FFT so the objective
stays real without any extra machinery.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .layers import IntegralLayer, PointwiseMap, apply_integral_layer, apply_pointwise
from .models import build_model, make_config_2d, rebind
from .spectral import ModeSpec, SpectralWeights, embed_modes, extract_modes
from .tensor import GradCheckResult, grad_check
from .training import batch_loss


def _real_probe(z):
    """Real scalar from a complex tensor shaped like a half-spectrum."""
    n = z.data.shape[-2]
    field = T.irfft_nd(z, (n, 2 * (z.data.shape[-1] - 1)))
    return T.sum_all(T.mul(field, field))


def _sq_sum(x):
    return T.sum_all(T.mul(x, x))


def primitive_cases(rng):
    """name -> (objective over a dict of Tensors, parameter arrays)."""
    real_a = rng.standard_normal((2, 3, 4, 4))
    real_b = rng.standard_normal((2, 3, 4, 4))
    spec_a = rng.standard_normal((2, 3, 4, 3)) + 1j * rng.standard_normal((2, 3, 4, 3))
    spec_b = rng.standard_normal((2, 3, 4, 3)) + 1j * rng.standard_normal((2, 3, 4, 3))
    wmat = rng.standard_normal((5, 3))
    cmat = rng.standard_normal((5, 3, 4, 3)) + 1j * rng.standard_normal((5, 3, 4, 3))

    cases = {
        "add": (lambda p: _sq_sum(T.add(p["a"], p["b"])), {"a": real_a, "b": real_b}),
        "sub": (lambda p: _sq_sum(T.sub(p["a"], p["b"])), {"a": real_a, "b": real_b}),
        "scalar-mul": (lambda p: _sq_sum(T.smul(p["a"], 1.7)), {"a": real_a}),
        "elementwise-mul": (
            lambda p: T.sum_all(T.mul(p["a"], p["b"])),
            {"a": real_a, "b": real_b},
        ),
        "complex-mul": (
            lambda p: _real_probe(T.mul(p["a"], p["b"])),
            {"a": spec_a, "b": spec_b},
        ),
        "channel-linear": (
            lambda p: _sq_sum(T.channel_linear(p["x"], p["w"])),
            {"x": real_a, "w": wmat},
        ),
        "mode-mix": (
            lambda p: _real_probe(T.mode_mix(p["x"], p["w"])),
            {"x": spec_a, "w": cmat},
        ),
        "gelu": (lambda p: T.sum_all(T.gelu(p["a"])), {"a": real_a}),
        "concat-channels": (
            lambda p: _sq_sum(T.concat([p["a"], p["b"]], axis=1)),
            {"a": real_a, "b": real_b},
        ),
        "slice": (lambda p: _sq_sum(T.narrow(p["a"], 2, 1, 2)), {"a": real_a}),
        "pad-zeros": (lambda p: _sq_sum(T.pad_zeros(p["a"], 3, 7, 2)), {"a": real_a}),
        "rfft-nd": (lambda p: _real_probe(T.rfft_nd(p["a"], 2)), {"a": real_a}),
        "irfft-nd": (lambda p: _sq_sum(T.irfft_nd(p["a"], (4, 4))), {"a": spec_a}),
        "linear-interp-resample-clamped": (
            lambda p: _sq_sum(T.resample_linear(p["a"], (7, 3), "clamped")),
            {"a": real_a},
        ),
        "linear-interp-resample-periodic": (
            lambda p: _sq_sum(T.resample_linear(p["a"], (8, 2), "periodic")),
            {"a": real_a},
        ),
        "sum": (lambda p: T.sum_all(p["a"]), {"a": real_a}),
        "mean": (lambda p: T.mean_all(T.mul(p["a"], p["a"])), {"a": real_a}),
        "mode-corners": (
            lambda p: _real_probe(
                embed_modes(
                    extract_modes(p["a"], ModeSpec((2, 2))), ModeSpec((2, 2)), (6, 6)
                )
            ),
            {"a": spec_a},
        ),
    }
    return cases


def _integral_layer_case(rng, factor, boundary):
    modes = ModeSpec((2, 2))
    block = modes.block_shape()
    kernel = 0.3 * (rng.standard_normal((3, 2) + block)
                    + 1j * rng.standard_normal((3, 2) + block))
    params = {
        "kernel": kernel,
        "residual": rng.standard_normal((3, 2)),
        "bias": rng.standard_normal(3),
    }
    x = rng.standard_normal((2, 2, 8, 8))

    def objective(p):
        layer = IntegralLayer(
            kernel=SpectralWeights(p["kernel"], modes),
            residual=p["residual"],
            bias=p["bias"],
            spatial_factor=factor,
            boundary=boundary,
        )
        out = apply_integral_layer(T.wrap(x), layer)
        return _sq_sum(out)

    return objective, params


def _pointwise_case(rng):
    params = {
        "w0": rng.standard_normal((6, 3)),
        "b0": rng.standard_normal(6),
        "w1": rng.standard_normal((2, 6)),
        "b1": rng.standard_normal(2),
    }
    x = rng.standard_normal((2, 3, 5, 5))

    def objective(p):
        pm = PointwiseMap(((p["w0"], p["b0"]), (p["w1"], p["b1"])))
        return _sq_sum(apply_pointwise(T.wrap(x), pm))

    return objective, params


def _skip_path_case(rng):
    params = {"w": rng.standard_normal((2, 6)), "b": rng.standard_normal(2)}
    enc = rng.standard_normal((2, 3, 6, 6))
    dec = rng.standard_normal((2, 3, 6, 6))

    def objective(p):
        joined = T.concat([T.wrap(enc), T.wrap(dec)], axis=1)
        out = T.add(T.channel_linear(joined, p["w"]),
                    T.reshape(p["b"], (1, 2, 1, 1)))
        return _sq_sum(out)

    return objective, params


def _model_loss_case(rng, problem):
    if problem == "ns2d":
        config = make_config_2d(
            d0=4, variant="uno-dagger", in_channels=3, out_channels=1,
            domain_kind="torus", ref_resolution=8,
        )
        x = rng.standard_normal((2, 3, 8, 8))
        y = rng.standard_normal((2, 3, 8, 8))
    else:
        config = make_config_2d(
            d0=4, variant="uno", in_channels=1, out_channels=1,
            domain_kind="box", ref_resolution=8,
        )
        x = rng.standard_normal((2, 1, 8, 8))
        y = rng.standard_normal((2, 1, 8, 8))
    model = build_model(config, seed=7)
    # lift kernels to O(0.1) so gradients clear the finite-difference
    # noise floor; adjoint correctness does not depend on the scale
    params = {}
    for name, t in model.parameters():
        arr = t.data
        if name.endswith("kernel"):
            arr = arr * (0.05 / np.std(arr))
        params[name] = arr

    def objective(p):
        return batch_loss(rebind(model, p), x, y, problem)

    return objective, params


def layer_cases(rng):
    cases = {
        "lift-project": _pointwise_case(rng),
        "integral-layer-contract-3/4": _integral_layer_case(rng, 0.75, "clamped"),
        "integral-layer-contract-1/2": _integral_layer_case(rng, 0.5, "periodic"),
        "integral-layer-expand-2": _integral_layer_case(rng, 2.0, "periodic"),
        "concat-skip-path": _skip_path_case(rng),
        "darcy-model-loss": _model_loss_case(rng, "darcy"),
        "rollout-loss": _model_loss_case(rng, "ns2d"),
    }
    return cases


# deep compositions attenuate gradients; a wider step keeps the
# finite-difference signal above roundoff for them
_DEEP_CASES = {"darcy-model-loss", "rollout-loss"}
_DEEP_STEP = 2e-5


def gradient_suite(
    tolerance: float = 1e-4,
    step: float = 1e-6,
    n_coords: int = 10,
    seed: int = 0,
) -> list:
    """[(case name, GradCheckResult)] over all primitives and layer types."""
    rng = np.random.default_rng(seed)
    results = []
    for name, (objective, params) in {
        **primitive_cases(rng),
        **layer_cases(rng),
    }.items():
        check = grad_check(
            objective,
            params,
            step=_DEEP_STEP if name in _DEEP_CASES else step,
            tolerance=tolerance,
            n_coords=n_coords,
            rng=np.random.default_rng(seed + 1),
        )
        results.append((name, check))
    return results


def suite_passed(results) -> bool:
    return all(r.passed for _, r in results)


__all__ = [
    "GradCheckResult",
    "gradient_suite",
    "layer_cases",
    "primitive_cases",
    "suite_passed",
]
