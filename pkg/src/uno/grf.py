"""Gaussian random fields with covariance scale * (-Laplacian + tau^2)^-alpha.

Fields are synthesized in an eigenbasis of the Laplacian truncated to the
grid: normalized cosines for zero-Neumann boundary conditions on the unit
square (vertex grid including the boundary), complex exponentials for the
unit torus (cell grid, no duplicated seam).  Sampling a field costs two
dense basis products or one inverse FFT.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ShapeError

BASES = ("neumann-cosine", "periodic-fourier")


@dataclass(frozen=True)
class GrfSpec:
    """Covariance parameters and synthesis basis for one field family."""

    tau2: float
    alpha: float
    scale: float = 1.0
    basis: str = "neumann-cosine"
    extent: int = 64

    def __post_init__(self):
        if self.alpha <= 1.0:
            raise ShapeError("alpha must exceed 1 for a trace-class covariance")
        if self.scale <= 0:
            raise ShapeError("scale must be positive")
        if self.basis not in BASES:
            raise ShapeError(f"unknown basis {self.basis!r}")
        if self.extent < 4:
            raise ShapeError("grid extent must be >= 4")


def darcy_grf_spec(extent: int) -> GrfSpec:
    """Coefficient-field measure: N(0, (-Lap + 9 I)^-2), Neumann."""
    return GrfSpec(tau2=9.0, alpha=2.0, scale=1.0, basis="neumann-cosine",
                   extent=extent)


def ns_grf_spec(extent: int) -> GrfSpec:
    """Initial-vorticity measure: N(0, 7^1.5 (-Lap + 49 I)^-2.5), periodic."""
    return GrfSpec(tau2=49.0, alpha=2.5, scale=7.0 ** 1.5,
                   basis="periodic-fourier", extent=extent)


@lru_cache(maxsize=None)
def _cosine_basis(n: int) -> np.ndarray:
    """[n, n] matrix B[i, k] = norm_k cos(pi k x_i) on the vertex grid."""
    x = np.arange(n) / (n - 1)
    k = np.arange(n)
    basis = np.cos(math.pi * np.outer(x, k))
    basis[:, 1:] *= math.sqrt(2.0)  # L2-orthonormal cosines
    basis.setflags(write=False)
    return basis


def _cosine_amplitudes(spec: GrfSpec) -> np.ndarray:
    k = np.arange(spec.extent)
    lam = math.pi ** 2 * (k[:, None] ** 2 + k[None, :] ** 2)
    return np.sqrt(spec.scale * (lam + spec.tau2) ** (-spec.alpha))


def _fourier_amplitudes(spec: GrfSpec) -> np.ndarray:
    n = spec.extent
    k = np.fft.fftfreq(n, d=1.0 / n)
    lam = 4.0 * math.pi ** 2 * (k[:, None] ** 2 + k[None, :] ** 2)
    amp = np.sqrt(spec.scale * (lam + spec.tau2) ** (-spec.alpha))
    amp[0, 0] = 0.0  # zero-mean field: the Poisson problem needs it
    return amp


def grf_sample(spec: GrfSpec, rng) -> np.ndarray:
    """One field realization [extent, extent]; pass a Generator or a seed."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.Generator(np.random.Philox(int(rng)))
    n = spec.extent
    if spec.basis == "neumann-cosine":
        coeff = rng.standard_normal((n, n)) * _cosine_amplitudes(spec)
        basis = _cosine_basis(n)
        return basis @ coeff @ basis.T
    noise = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    noise /= math.sqrt(2.0)
    mirrored = np.conj(noise[::-1, ::-1])
    mirrored = np.roll(mirrored, (1, 1), axis=(0, 1))  # index -k mod n
    hermitian = (noise + mirrored) / math.sqrt(2.0)
    coeff = hermitian * _fourier_amplitudes(spec)
    return np.real(np.fft.ifft2(coeff)) * (n * n)


def covariance_kernel(spec: GrfSpec, p1, p2) -> float:
    """Analytic covariance between two grid points, truncated to grid modes."""
    if spec.basis == "neumann-cosine":
        basis = _cosine_basis(spec.extent)
        var = _cosine_amplitudes(spec) ** 2
        row1 = np.einsum("kl,k,l->", var,
                         basis[p1[0]] * basis[p2[0]], basis[p1[1]] * basis[p2[1]])
        return float(row1)
    n = spec.extent
    var = _fourier_amplitudes(spec) ** 2
    k = np.fft.fftfreq(n, d=1.0 / n)
    dx = (p1[0] - p2[0]) / n
    dy = (p1[1] - p2[1]) / n
    phase = np.exp(2j * math.pi * (np.add.outer(k * dx, k * dy)))
    return float(np.real(np.sum(var * phase)))
