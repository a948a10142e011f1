"""Dataset generation, downsampling, and binary serialization.

A dataset file carries N records of a fixed tuple of float64 tensors
(Darcy: coefficient and solution fields; Navier-Stokes: one frame stack).
The layout is magic, version, counts, a descriptor table (rank, extents,
absolute payload offset per tensor), then the row-major little-endian
payloads.  Provenance metadata lives in a JSON sidecar next to the file and
is sufficient to regenerate the data bit for bit.
"""

from __future__ import annotations

import json
import logging
import struct
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .darcy import darcy_coefficient, darcy_solve
from .errors import DataError, NumericalError
from .grf import darcy_grf_spec, grf_sample
from .navier_stokes import ns_simulate, reynolds_estimate

log = logging.getLogger("uno")

DATASET_MAGIC = b"UNODS1"
DATASET_VERSION = 1
FORMAT_VERSION_TAG = "uno-0.1.0"


# ---------------------------------------------------------------------------
# downsampling


def downsample(arr: np.ndarray, target: int, scheme: str) -> np.ndarray:
    """Strided subsampling of the two trailing axes.

    ``vertex`` grids keep both boundary nodes, so the stride is
    (s - 1) / (t - 1); ``periodic`` grids use stride s / t.
    """
    arr = np.asarray(arr)
    source = arr.shape[-1]
    if arr.shape[-2] != source:
        raise DataError(f"expected square trailing axes, got {arr.shape}")
    if target == source:
        return arr
    if target > source:
        raise DataError(f"cannot downsample {source} -> {target}")
    if scheme == "vertex":
        num, den = source - 1, target - 1
    elif scheme == "periodic":
        num, den = source, target
    else:
        raise DataError(f"unknown downsampling scheme {scheme!r}")
    if den <= 0 or num % den:
        raise DataError(
            f"{scheme} downsampling {source} -> {target} needs an integer "
            f"stride, got {num}/{den}"
        )
    stride = num // den
    return arr[..., ::stride, ::stride]


def downsample_scheme(kind: str) -> str:
    return {"darcy": "vertex", "ns": "periodic"}[kind]


# ---------------------------------------------------------------------------
# binary dataset files


def dataset_write(samples, path, metadata: dict | None = None):
    """Write records of float64 tensors plus a JSON metadata sidecar."""
    samples = [tuple(np.asarray(t, dtype=np.float64) for t in rec) for rec in samples]
    per_record = len(samples[0]) if samples else 0
    for rec in samples:
        if len(rec) != per_record:
            raise DataError("all records must hold the same number of tensors")
    header = [DATASET_MAGIC, struct.pack("<IQI", DATASET_VERSION, len(samples),
                                         per_record)]
    table_size = sum(
        4 + 8 * t.ndim + 8 for rec in samples for t in rec
    )
    offset = len(DATASET_MAGIC) + 16 + table_size
    table, payload = [], []
    for rec in samples:
        for t in rec:
            table.append(struct.pack("<I", t.ndim))
            table.append(struct.pack(f"<{t.ndim}Q", *t.shape))
            table.append(struct.pack("<Q", offset))
            blob = t.astype("<f8").tobytes()
            payload.append(blob)
            offset += len(blob)
    with open(path, "wb") as fh:
        for part in header + table + payload:
            fh.write(part)
    if metadata is not None:
        with open(str(path) + ".meta.json", "w") as fh:
            json.dump(metadata, fh, indent=2, sort_keys=True)
            fh.write("\n")


def dataset_read(path):
    """Return (samples, metadata); validates magic, version, and lengths."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(DATASET_MAGIC) + 16:
        raise DataError(f"{path}: truncated header")
    if blob[: len(DATASET_MAGIC)] != DATASET_MAGIC:
        raise DataError(f"{path}: not a dataset file")
    off = len(DATASET_MAGIC)
    version, count, per_record = struct.unpack_from("<IQI", blob, off)
    off += 16
    if version != DATASET_VERSION:
        raise DataError(f"{path}: unsupported dataset version {version}")
    descriptors = []
    for _ in range(count * per_record):
        if off + 4 > len(blob):
            raise DataError(f"{path}: truncated descriptor table")
        (rank,) = struct.unpack_from("<I", blob, off)
        off += 4
        if off + 8 * rank + 8 > len(blob):
            raise DataError(f"{path}: truncated descriptor table")
        shape = struct.unpack_from(f"<{rank}Q", blob, off)
        off += 8 * rank
        (payload_off,) = struct.unpack_from("<Q", blob, off)
        off += 8
        descriptors.append((shape, payload_off))
    samples = []
    expected_end = off
    for r in range(count):
        rec = []
        for c in range(per_record):
            shape, payload_off = descriptors[r * per_record + c]
            nbytes = int(np.prod(shape, dtype=np.int64)) * 8
            if payload_off + nbytes > len(blob):
                raise DataError(f"{path}: truncated payload for record {r}")
            arr = np.frombuffer(
                blob, dtype="<f8", count=nbytes // 8, offset=payload_off
            ).reshape(shape)
            rec.append(arr.astype(np.float64))
            expected_end = max(expected_end, payload_off + nbytes)
        samples.append(tuple(rec))
    if expected_end != len(blob):
        raise DataError(f"{path}: {len(blob) - expected_end} unexpected trailing bytes")
    metadata = {}
    try:
        with open(str(path) + ".meta.json") as fh:
            metadata = json.load(fh)
    except FileNotFoundError:
        log.info("no metadata sidecar next to %s", path)
    return samples, metadata


# ---------------------------------------------------------------------------
# generation (embarrassingly parallel; stream i seeds with base seed + i)


def _darcy_one(args):
    index, seed, extent = args
    rng = np.random.Generator(np.random.Philox(seed + index))
    field = grf_sample(darcy_grf_spec(extent), rng)
    a = darcy_coefficient(field)
    u = darcy_solve(a, 1.0)
    return index, (a, u)


def _ns_one(args):
    index, seed, extent, nu, t_final, dt = args
    try:
        traj = ns_simulate(nu, t_final, extent=extent, seed=seed + index, dt=dt)
    except NumericalError as exc:
        warnings.warn(f"sample {index} skipped: {exc}")
        return index, None
    return index, (traj.w,)


def _run_jobs(worker, jobs, workers: int):
    if workers <= 1:
        results = [worker(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(worker, jobs))
    results.sort(key=lambda r: r[0])
    return [rec for _, rec in results if rec is not None]


def generate_darcy(
    n_samples: int,
    extent: int = 85,
    seed: int = 0,
    target_extent: int | None = None,
    workers: int = 1,
):
    """(samples, metadata) of coefficient/solution pairs."""
    jobs = [(i, seed, extent) for i in range(n_samples)]
    samples = _run_jobs(_darcy_one, jobs, workers)
    if target_extent is not None:
        samples = [
            tuple(downsample(t, target_extent, "vertex") for t in rec)
            for rec in samples
        ]
    metadata = {
        "kind": "darcy",
        "grid": extent,
        "target_grid": target_extent or extent,
        "count": len(samples),
        "seed": seed,
        "forcing": 1.0,
        "tensors": ["a", "u"],
        "code_version": FORMAT_VERSION_TAG,
    }
    return samples, metadata


def generate_ns(
    n_samples: int,
    nu: float = 1e-3,
    t_final: float = 50.0,
    extent: int = 64,
    seed: int = 0,
    dt: float = 1e-4,
    target_extent: int | None = None,
    workers: int = 1,
):
    """(samples, metadata) of vorticity trajectories, frames at unit times."""
    jobs = [(i, seed, extent, nu, t_final, dt) for i in range(n_samples)]
    samples = _run_jobs(_ns_one, jobs, workers)
    if len(samples) < n_samples:
        log.warning("%d of %d trajectories blew up and were skipped",
                    n_samples - len(samples), n_samples)
    if target_extent is not None:
        samples = [
            tuple(downsample(t, target_extent, "periodic") for t in rec)
            for rec in samples
        ]
    metadata = {
        "kind": "ns",
        "grid": extent,
        "target_grid": target_extent or extent,
        "count": len(samples),
        "seed": seed,
        "nu": nu,
        "dt": dt,
        "t_final": t_final,
        "record_every": 1.0,
        "reynolds_estimate": reynolds_estimate(nu),
        "tensors": ["w"],
        "code_version": FORMAT_VERSION_TAG,
    }
    return samples, metadata


def regenerate(metadata: dict, workers: int = 1):
    """Rebuild a dataset from its own sidecar metadata (provenance closure)."""
    kind = metadata.get("kind")
    if kind == "darcy":
        samples, _ = generate_darcy(
            metadata["count"],
            extent=metadata["grid"],
            seed=metadata["seed"],
            target_extent=metadata.get("target_grid"),
            workers=workers,
        )
        return samples
    if kind == "ns":
        samples, _ = generate_ns(
            metadata["count"],
            nu=metadata["nu"],
            t_final=metadata["t_final"],
            extent=metadata["grid"],
            seed=metadata["seed"],
            dt=metadata["dt"],
            target_extent=metadata.get("target_grid"),
            workers=workers,
        )
        return samples
    raise DataError(f"metadata problem kind must be darcy or ns, got {kind!r}")
