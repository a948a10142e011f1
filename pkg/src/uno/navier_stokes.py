"""Pseudo-spectral solver for 2-d Navier-Stokes in vorticity form.

On the unit torus, with streamfunction psi solving -Lap psi = w, velocity
u = (-psi_y, psi_x).  The nonlinear and forcing terms advance with Heun's
predictor-corrector, the viscous term with the Crank-Nicolson factor
(1 - nu dt lam / 2) / (1 + nu dt lam / 2) per mode; the nonlinear product
is dealiased by the 2/3 rule.  State lives in the half-spectrum of the
vorticity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import NumericalError, ShapeError
from .grf import grf_sample, ns_grf_spec

BLOWUP_LIMIT = 1e6


@dataclass
class NsTrajectory:
    """Vorticity frames [n_frames, s, s] recorded every ``record_every``."""

    w: np.ndarray
    nu: float
    dt: float
    record_every: float = 1.0
    seed: int | None = None

    @property
    def n_frames(self) -> int:
        return self.w.shape[0]

    @property
    def extent(self) -> int:
        return self.w.shape[1]


@lru_cache(maxsize=None)
def _wavenumbers(n: int):
    k_full = np.fft.fftfreq(n, d=1.0 / n)
    k_half = np.fft.rfftfreq(n, d=1.0 / n)
    kx = 2.0 * math.pi * k_full[:, None]
    ky = 2.0 * math.pi * k_half[None, :]
    lap = kx ** 2 + ky ** 2
    inv_lap = np.zeros_like(lap)
    inv_lap[lap > 0] = 1.0 / lap[lap > 0]
    cutoff = n // 3  # 2/3-rule dealiasing of the quadratic term
    keep = (np.abs(k_full[:, None]) <= cutoff) & (np.abs(k_half[None, :]) <= cutoff)
    for arr in (kx, ky, lap, inv_lap, keep):
        arr.setflags(write=False)
    return kx, ky, lap, inv_lap, keep


def default_forcing(n: int) -> np.ndarray:
    """0.1 (sin + cos)(2 pi (x1 + x2)) on the n x n torus grid."""
    x = np.arange(n) / n
    phase = 2.0 * math.pi * np.add.outer(x, x)
    return 0.1 * (np.sin(phase) + np.cos(phase))


def reynolds_estimate(nu: float) -> float:
    """Re = sqrt(0.1) / (nu (2 pi)^(3/2)) for the default forcing."""
    return math.sqrt(0.1) / (nu * (2.0 * math.pi) ** 1.5)


def _nonlinear(w_hat: np.ndarray, n: int) -> np.ndarray:
    """Dealiased spectrum of -u . grad w."""
    kx, ky, lap, inv_lap, keep = _wavenumbers(n)
    psi_hat = w_hat * inv_lap
    u1 = np.fft.irfft2(-1j * ky * psi_hat, s=(n, n))
    u2 = np.fft.irfft2(1j * kx * psi_hat, s=(n, n))
    wx = np.fft.irfft2(1j * kx * w_hat, s=(n, n))
    wy = np.fft.irfft2(1j * ky * w_hat, s=(n, n))
    advect = np.fft.rfft2(u1 * wx + u2 * wy)
    return -advect * keep


def ns_step(w: np.ndarray, nu: float, g: np.ndarray | None, dt: float) -> np.ndarray:
    """Advance one physical-space vorticity field by ``dt``."""
    if dt <= 0:
        raise ShapeError("dt must be positive")
    n = w.shape[-1]
    w_hat = np.fft.rfft2(np.asarray(w, dtype=np.float64))
    g_hat = None if g is None else np.fft.rfft2(np.asarray(g, dtype=np.float64))
    w_hat = ns_step_spectral(w_hat, nu, g_hat, dt, n)
    out = np.fft.irfft2(w_hat, s=(n, n))
    if not np.isfinite(out.sum()) or np.abs(out).max() > BLOWUP_LIMIT:
        raise NumericalError("vorticity blew up during time stepping")
    return out


def ns_step_spectral(
    w_hat: np.ndarray, nu: float, g_hat: np.ndarray | None, dt: float, n: int
) -> np.ndarray:
    _, _, lap, _, _ = _wavenumbers(n)
    numer = 1.0 - 0.5 * nu * dt * lap
    denom = 1.0 + 0.5 * nu * dt * lap
    n1 = _nonlinear(w_hat, n)
    rhs1 = n1 if g_hat is None else n1 + g_hat
    w_star = (numer * w_hat + dt * rhs1) / denom
    n2 = _nonlinear(w_star, n)
    rhs = 0.5 * (n1 + n2) if g_hat is None else 0.5 * (n1 + n2) + g_hat
    out = (numer * w_hat + dt * rhs) / denom
    out[0, 0] = 0.0  # the mean mode is inert under zero-mean forcing
    return out


def enstrophy(w: np.ndarray) -> float:
    """0.5 mean(w^2), the quantity viscosity dissipates without forcing."""
    return 0.5 * float(np.mean(np.square(w)))


def ns_simulate(
    nu: float,
    t_final: float,
    extent: int = 64,
    seed: int = 0,
    dt: float = 1e-4,
    record_every: float = 1.0,
    w0: np.ndarray | None = None,
    forcing="default",
) -> NsTrajectory:
    """Trajectory from a random (or given) initial vorticity.

    Frames are recorded every ``record_every`` time units, the initial state
    included, so t_final = T yields T + 1 frames at unit spacing.
    """
    steps_per_record = record_every / dt
    if abs(steps_per_record - round(steps_per_record)) > 1e-9:
        raise ShapeError("record interval must be an integer number of steps")
    steps_per_record = int(round(steps_per_record))
    n_records = t_final / record_every
    if abs(n_records - round(n_records)) > 1e-9:
        raise ShapeError("t_final must be a multiple of the record interval")
    n_records = int(round(n_records))

    if w0 is None:
        w0 = grf_sample(ns_grf_spec(extent), np.random.Generator(np.random.Philox(seed)))
    w0 = np.asarray(w0, dtype=np.float64)
    n = w0.shape[-1]
    if isinstance(forcing, str) and forcing == "default":
        forcing = default_forcing(n)
    g_hat = None if forcing is None else np.fft.rfft2(forcing)

    frames = np.empty((n_records + 1, n, n))
    frames[0] = w0
    w_hat = np.fft.rfft2(w0)
    for rec in range(1, n_records + 1):
        for _ in range(steps_per_record):
            w_hat = ns_step_spectral(w_hat, nu, g_hat, dt, n)
        frame = np.fft.irfft2(w_hat, s=(n, n))
        if not np.isfinite(frame.sum()) or np.abs(frame).max() > BLOWUP_LIMIT:
            raise NumericalError(
                f"vorticity blew up before t={rec * record_every} "
                f"(nu={nu}, dt={dt}, extent={n})"
            )
        frames[rec] = frame
    return NsTrajectory(
        w=frames, nu=nu, dt=dt, record_every=record_every, seed=seed
    )
