"""Spectral convolution: FFT, mode truncation, and grid resampling.

A spectral kernel keeps a complex matrix per retained Fourier mode and acts
on the half-spectrum of a real field.  Retained modes live in the signed
"corners" of the spectrum: every non-trailing transformed axis keeps the
``k`` lowest non-negative and ``k`` highest (negative) frequencies, the
trailing real-FFT axis keeps frequencies ``0..k-1``.  Output extents may
differ from input extents, in which case the band-limited result is
resampled exactly by re-embedding the retained coefficients into the new
spectrum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .tensor import Tensor


@dataclass(frozen=True)
class ModeSpec:
    """Retained Fourier mode counts per transformed dimension."""

    counts: tuple

    def __post_init__(self):
        counts = tuple(int(k) for k in self.counts)
        object.__setattr__(self, "counts", counts)
        if not counts or any(k < 1 for k in counts):
            raise ShapeError(f"mode counts must be positive, got {counts}")

    @property
    def ndim(self):
        return len(self.counts)

    def block_shape(self) -> tuple:
        """Shape of the signed-mode coefficient block."""
        return tuple(2 * k for k in self.counts[:-1]) + (self.counts[-1],)

    def validate_grid(self, extents: Sequence[int]):
        if len(extents) != self.ndim:
            raise ShapeError(f"{self.ndim}-d modes applied to grid {tuple(extents)}")
        for k, n in zip(self.counts, extents):
            if k > n // 2:
                raise ShapeError(
                    f"{k} modes exceed the Nyquist limit {n // 2} of extent {n}"
                )


def clip_modes(counts: Sequence[int], *grids: Sequence[int]) -> ModeSpec:
    """ModeSpec with each count clipped to the Nyquist limit of every grid."""
    clipped = []
    for d, k in enumerate(counts):
        limit = min(g[d] // 2 for g in grids)
        clipped.append(max(1, min(int(k), limit)))
    return ModeSpec(tuple(clipped))


@dataclass
class SpectralWeights:
    """Complex per-mode channel matrices of shape [c_out, c_in, *block]."""

    weights: Tensor
    modes: ModeSpec

    def __post_init__(self):
        shape = self.weights.data.shape
        if shape[2:] != self.modes.block_shape():
            raise ShapeError(
                f"weight block {shape[2:]} does not match modes "
                f"{self.modes.block_shape()}"
            )

    @property
    def c_out(self):
        return self.weights.data.shape[0]

    @property
    def c_in(self):
        return self.weights.data.shape[1]


def init_spectral_weights(
    c_out: int, c_in: int, modes: ModeSpec, rng: np.random.Generator
) -> np.ndarray:
    """Complex normal init with std 1/(c_in * block size)."""
    block = modes.block_shape()
    std = 1.0 / (c_in * math.prod(block))
    scale = std / math.sqrt(2.0)
    shape = (c_out, c_in) + block
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


# ---------------------------------------------------------------------------
# corner extraction / embedding on half-spectra


def extract_modes(coeffs: Tensor, modes: ModeSpec) -> Tensor:
    """Signed-mode block [..., 2*k1, (2*k2,) kd] from a half-spectrum."""
    counts = modes.counts
    naxes = modes.ndim

    def gather(t: Tensor, d: int) -> Tensor:
        axis = -naxes + d
        k = counts[d]
        if d == naxes - 1:
            return T.narrow(t, axis, 0, k)
        n = t.data.shape[axis]
        low = gather(T.narrow(t, axis, 0, k), d + 1)
        high = gather(T.narrow(t, axis, n - k, k), d + 1)
        return T.concat([low, high], axis=axis)

    return gather(coeffs, 0)


def embed_modes(block: Tensor, modes: ModeSpec, out_extents: Sequence[int]) -> Tensor:
    """Place a signed-mode block into the zero half-spectrum of ``out_extents``."""
    out_extents = tuple(int(n) for n in out_extents)
    modes.validate_grid(out_extents)
    counts = modes.counts
    naxes = modes.ndim
    half_last = out_extents[-1] // 2 + 1

    def scatter(t: Tensor, d: int) -> Tensor:
        axis = -naxes + d
        k = counts[d]
        if d == naxes - 1:
            return T.pad_zeros(t, axis, half_last, 0)
        n = out_extents[d]
        low = scatter(T.narrow(t, axis, 0, k), d + 1)
        high = scatter(T.narrow(t, axis, k, k), d + 1)
        return T.add(
            T.pad_zeros(low, axis, n, 0),
            T.pad_zeros(high, axis, n, n - k),
        )

    return scatter(block, 0)


def spectral_conv(
    values: Tensor,
    weights: SpectralWeights,
    out_extents: Sequence[int],
) -> Tensor:
    """Kernel integral in the Fourier domain.

    ``values`` is [batch, c_in, *in_extents]; each retained mode is mixed
    across channels by its own complex matrix, all other modes vanish, and
    the inverse transform lands on ``out_extents``.  Amplitudes follow the
    function being represented, not the grid, so changing extents performs
    exact spectral resampling of the band-limited result.
    """
    modes = weights.modes
    naxes = modes.ndim
    out_extents = tuple(int(n) for n in out_extents)
    in_extents = values.data.shape[-naxes:]
    modes.validate_grid(in_extents)
    modes.validate_grid(out_extents)
    if values.data.shape[1] != weights.c_in:
        raise ShapeError(
            f"spectral_conv: {values.data.shape[1]} channels vs weights "
            f"expecting {weights.c_in}"
        )
    coeffs = T.rfft_nd(values, naxes)
    block = extract_modes(coeffs, modes)
    mixed = T.mode_mix(block, weights.weights)
    spectrum = embed_modes(mixed, modes, out_extents)
    # unnormalized-forward coefficients scale with the grid size
    ratio = math.prod(out_extents) / math.prod(in_extents)
    if ratio != 1.0:
        spectrum = T.smul(spectrum, ratio)
    return T.irfft_nd(spectrum, out_extents)


def resample_values(values: Tensor, out_extents: Sequence[int], boundary) -> Tensor:
    """Multilinear resampling of trailing grid axes (periodic or clamped)."""
    return T.resample_linear(values, out_extents, boundary)
