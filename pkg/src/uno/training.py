"""Loss, Adam, schedules, rollout, and the train/evaluate loops.

Training minimizes the batch-mean relative L2 error with bias-corrected
Adam; the learning rate halves every 100 epochs.  For the autoregressive
problem the loss is summed over rollout steps and backpropagated through
the whole rollout.  The best-validation weights are kept and restored at
the end, mirroring how the reported models are selected.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .datasets import downsample, downsample_scheme
from .errors import NumericalError, ShapeError
from .models import Model, forward_values
from .tensor import Tensor

log = logging.getLogger("uno")

PROBLEMS = ("darcy", "ns2d", "ns3d")
_PROBLEM_ALIASES = {
    "darcy": "darcy",
    "ns2d": "ns2d",
    "ns-2d-autoregressive": "ns2d",
    "ns3d": "ns3d",
    "ns-3d": "ns3d",
}


def canonical_problem(name: str) -> str:
    try:
        return _PROBLEM_ALIASES[name]
    except KeyError:
        raise ShapeError(f"unknown problem kind {name!r}") from None


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 20
    lr: float = 1e-3
    lr_decay: float = 0.5
    lr_step: int = 100
    seed: int = 0
    problem: str = "darcy"
    splits: tuple | None = None  # (n_train, n_val, n_test); None -> defaults
    t_in: int = 10
    t_total: int = 50
    normalize_inputs: bool = True

    def __post_init__(self):
        self.problem = canonical_problem(self.problem)
        if self.epochs < 1:
            raise ShapeError("epochs must be >= 1")


@dataclass
class Metrics:
    """Per-epoch series plus the final test error."""

    epochs: list = field(default_factory=list)
    best_epoch: int = -1
    test_rel_err: float = float("nan")

    def record(self, epoch, lr, train_loss, val_rel_err, seconds):
        self.epochs.append(
            {
                "epoch": epoch,
                "lr": lr,
                "train_loss": train_loss,
                "val_rel_err": val_rel_err,
                "seconds": seconds,
            }
        )

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("epoch,lr,train_loss,val_rel_err\n")
            for row in self.epochs:
                fh.write(
                    f"{row['epoch']},{row['lr']:.10g},"
                    f"{row['train_loss']:.10g},{row['val_rel_err']:.10g}\n"
                )


def lr_at(epoch: int, config: TrainConfig) -> float:
    """Initial rate scaled by decay^floor(epoch / step)."""
    if epoch < 0:
        raise ShapeError("epoch must be >= 0")
    return config.lr * config.lr_decay ** (epoch // config.lr_step)


def relative_l2(pred: np.ndarray, truth: np.ndarray) -> float:
    """Percentage relative L2 error, averaged over the leading batch axis."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeError(f"shape mismatch {pred.shape} vs {truth.shape}")
    p = pred.reshape(pred.shape[0], -1)
    t = truth.reshape(truth.shape[0], -1)
    norms = np.linalg.norm(t, axis=1)
    if np.any(norms == 0):
        raise ShapeError("relative error undefined for a zero-norm truth")
    return float(100.0 * np.mean(np.linalg.norm(p - t, axis=1) / norms))


def _taped_rel_l2(pred: Tensor, truth: np.ndarray) -> Tensor:
    """Differentiable batch-mean relative error (as a fraction)."""
    diff = T.sub(pred, T.wrap(truth))
    axes = tuple(range(1, pred.data.ndim))
    num = T.sqrt(T.sum_axes(T.mul(diff, diff), axes))
    den = np.linalg.norm(truth.reshape(truth.shape[0], -1), axis=1)
    if np.any(den == 0):
        raise ShapeError("relative error undefined for a zero-norm truth")
    return T.mean_all(T.div(num, T.wrap(den)))


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    """First/second moments stored as float views of each parameter."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params) -> "AdamState":
        state = cls()
        for name, p in params:
            width = p.data.view(np.float64).shape
            state.m[name] = np.zeros(width)
            state.v[name] = np.zeros(width)
        return state


def adam_step(params, grads, state: AdamState, lr: float):
    """One bias-corrected Adam update; complex tensors step as real pairs."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, p in params:
        g = grads.get(p)
        g = np.zeros_like(p.data) if g is None else g
        if not np.isfinite(g.sum()):
            raise NumericalError(f"non-finite gradient for {name}")
        gf = g.view(np.float64) if np.iscomplexobj(g) else g
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * gf
        v *= state.beta2
        v += (1.0 - state.beta2) * gf * gf
        update = lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        fresh = p.data.copy()
        fresh_f = fresh.view(np.float64) if np.iscomplexobj(fresh) else fresh
        fresh_f -= update
        p.data = fresh


# ---------------------------------------------------------------------------
# problem plumbing


def problem_arrays(samples, problem: str, t_in: int = 10, t_total: int = 50):
    """Stack dataset records into (inputs, targets) for one problem kind."""
    problem = canonical_problem(problem)
    if problem == "darcy":
        a = np.stack([rec[0] for rec in samples])[:, None]
        u = np.stack([rec[1] for rec in samples])[:, None]
        return a, u
    frames = np.stack([rec[0] for rec in samples])  # [n, frames, s, s]
    if frames.shape[1] < t_total:
        raise ShapeError(
            f"trajectories hold {frames.shape[1]} frames, need {t_total}"
        )
    if problem == "ns2d":
        return frames[:, :t_in], frames[:, t_in:t_total]
    x = np.moveaxis(frames[:, :t_in], 1, -1)[:, None]  # [n, 1, s, s, t_in]
    y = np.moveaxis(frames[:, t_in:t_total], 1, -1)[:, None]
    return x, y


def default_splits(n: int, problem: str) -> tuple:
    """Darcy keeps 250 + 250 aside when the pool is large; else 80/10/10."""
    if problem == "darcy" and n >= 1000:
        return (n - 500, 250, 250)
    n_val = max(1, n // 10)
    n_test = max(1, n // 10)
    return (n - n_val - n_test, n_val, n_test)


def split_indices(n: int, splits: tuple):
    n_train, n_val, n_test = splits
    if min(splits) < 0 or n_train + n_val + n_test != n:
        raise ShapeError(f"splits {splits} do not partition {n} samples")
    idx = np.arange(n)
    return idx[:n_train], idx[n_train : n_train + n_val], idx[n_train + n_val :]


def _rollout_loss(model: Model, xb: np.ndarray, yb: np.ndarray) -> Tensor:
    """Sum of per-step relative errors, gradients flow through the rollout."""
    t_in = xb.shape[1]
    window = T.wrap(xb)
    total = None
    for step in range(yb.shape[1]):
        pred = forward_values(model, window)
        term = _taped_rel_l2(pred, yb[:, step : step + 1])
        total = term if total is None else T.add(total, term)
        window = T.concat([T.narrow(window, 1, 1, t_in - 1), pred], axis=1)
    return total


def batch_loss(model: Model, xb: np.ndarray, yb: np.ndarray, problem: str) -> Tensor:
    if problem == "ns2d":
        return _rollout_loss(model, xb, yb)
    return _taped_rel_l2(forward_values(model, xb), yb)


def autoregressive_rollout(
    model: Model, frames: np.ndarray, horizon: int
) -> np.ndarray:
    """Predict ``horizon`` frames from the trailing window of ``frames``.

    ``frames`` is [t_in, s, s] for one sample or [b, t_in, s, s] for a
    batch; earlier predictions are fed back as the window slides.
    """
    if horizon < 1:
        raise ShapeError("rollout horizon must be >= 1")
    single = frames.ndim == 3
    window = np.asarray(frames, dtype=np.float64)[None] if single else np.asarray(frames)
    window = window.copy()
    preds = []
    for _ in range(horizon):
        nxt = forward_values(model, window).data  # [b, 1, s, s]
        preds.append(nxt[:, 0])
        window = np.concatenate([window[:, 1:], nxt], axis=1)
    out = np.stack(preds, axis=1)
    return out[0] if single else out


def predict(model: Model, x: np.ndarray, problem: str, horizon: int) -> np.ndarray:
    if problem == "ns2d":
        return autoregressive_rollout(model, x, horizon)
    return forward_values(model, x).data


def evaluate_arrays(
    model: Model, x: np.ndarray, y: np.ndarray, problem: str, batch_size: int = 20
) -> float:
    errs, weights = [], []
    for lo in range(0, x.shape[0], batch_size):
        xb, yb = x[lo : lo + batch_size], y[lo : lo + batch_size]
        pred = predict(model, xb, problem, yb.shape[1])
        if pred.shape != yb.shape and problem == "ns3d":
            # temporally super-resolved output: compare at the truth's frames
            mat = T.resample_matrix(pred.shape[-1], yb.shape[-1], "clamped")
            pred = np.tensordot(pred, mat.T, axes=([pred.ndim - 1], [0]))
        errs.append(relative_l2(pred, yb))
        weights.append(xb.shape[0])
    return float(np.average(errs, weights=weights))


# ---------------------------------------------------------------------------
# training loop


def train(model: Model, samples, config: TrainConfig) -> Metrics:
    """Mini-batch Adam on the relative-L2 loss; restores best-val weights."""
    problem = config.problem
    x, y = problem_arrays(samples, problem, config.t_in, config.t_total)
    splits = config.splits or default_splits(x.shape[0], problem)
    idx_train, idx_val, idx_test = split_indices(x.shape[0], splits)

    if config.normalize_inputs:
        axes = (0,) + tuple(range(2, x.ndim))
        shift = x[idx_train].mean(axis=axes)
        scale = np.maximum(x[idx_train].std(axis=axes), 1e-8)
        model.set_input_normalization(shift, scale)

    params = model.parameters()
    state = AdamState.for_params(params)
    rng = np.random.Generator(np.random.Philox(config.seed))
    metrics = Metrics()
    best_val = math.inf
    best_weights = None

    for epoch in range(config.epochs):
        started = time.perf_counter()
        lr = lr_at(epoch, config)
        order = rng.permutation(idx_train)
        losses, weights = [], []
        for lo in range(0, order.size, config.batch_size):
            rows = order[lo : lo + config.batch_size]
            loss = batch_loss(model, x[rows], y[rows], problem)
            value = float(loss.data)
            if not math.isfinite(value):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, batch {lo // config.batch_size}"
                )
            grads = T.backward(loss)
            adam_step(params, grads, state, lr)
            losses.append(value)
            weights.append(rows.size)
        train_loss = float(np.average(losses, weights=weights))
        val_err = evaluate_arrays(
            model, x[idx_val], y[idx_val], problem, config.batch_size
        )
        metrics.record(epoch, lr, train_loss, val_err, time.perf_counter() - started)
        if val_err < best_val:
            best_val = val_err
            metrics.best_epoch = epoch
            best_weights = [t.data.copy() for _, t, _ in model.registry]
        log.info(
            "epoch %d lr %.2e train %.4f val %.2f%%", epoch, lr, train_loss, val_err
        )

    if best_weights is not None:
        for (_, tensor, _), arr in zip(model.registry, best_weights):
            tensor.data = arr
    if idx_test.size:
        metrics.test_rel_err = evaluate_arrays(
            model, x[idx_test], y[idx_test], problem, config.batch_size
        )
    return metrics


def evaluate(
    model: Model,
    samples,
    problem: str,
    t_in: int = 10,
    t_total: int = 50,
    resolution: int | None = None,
    fps: float | None = None,
    batch_size: int = 20,
) -> float:
    """Mean relative error (%), optionally at a different grid resolution
    or a finer temporal sampling of the 3-d input window."""
    problem = canonical_problem(problem)
    x, y = problem_arrays(samples, problem, t_in, t_total)
    if resolution is not None:
        scheme = downsample_scheme("darcy" if problem == "darcy" else "ns")
        if problem == "ns3d":  # spatial axes precede time
            x = np.moveaxis(downsample(np.moveaxis(x, -1, 2), resolution, scheme), 2, -1)
            y = np.moveaxis(downsample(np.moveaxis(y, -1, 2), resolution, scheme), 2, -1)
        else:
            x = downsample(x, resolution, scheme)
            y = downsample(y, resolution, scheme)
    if fps is not None and fps != 1.0:
        if problem != "ns3d":
            raise ShapeError("temporal super-resolution applies to 3-d models")
        frames = int(round(t_in * fps))
        mat = T.resample_matrix(x.shape[-1], frames, "clamped")
        x = np.tensordot(x, mat.T, axes=([x.ndim - 1], [0]))
    return evaluate_arrays(model, x, y, problem, batch_size)
