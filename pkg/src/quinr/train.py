"""Coordinate datasets and the encoding (overfitting) loop."""
from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Adam, NumericalError, Tape, mse_loss
from .model import ConfigError, ModelConfig, QuinrModel, SirenConfig, SirenModel, build_model
from .signal_io import SignalError, SignalTensor

DEFAULT_STEPS = 10_000
DEFAULT_LR = 1e-3
DEFAULT_BATCH = 1024


@dataclass
class NormMeta:
    """What the decoder needs to undo normalization and rebuild the grid."""

    value_min: np.ndarray
    value_peak: np.ndarray
    height: int
    width: int
    value_domain: str = "u8_image"

    @property
    def channels(self) -> int:
        return len(self.value_min)

    def span(self) -> np.ndarray:
        span = self.value_peak - self.value_min
        return np.where(span > 0, span, 1.0)


@dataclass
class CoordinateDataset:
    coords: np.ndarray
    values: np.ndarray
    norm_meta: NormMeta

    def __len__(self) -> int:
        return self.coords.shape[0]


@dataclass
class TrainOptions:
    steps: int = DEFAULT_STEPS
    lr: float = DEFAULT_LR
    batch_size: int = DEFAULT_BATCH
    seed: int = 0
    log_every: int = 0
    # Full-grid evaluation interval for best-checkpoint tracking in minibatch mode.
    eval_every: int = 100

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (np.isfinite(self.lr) and self.lr > 0):
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be >= 1, got {self.eval_every}")


@dataclass
class TrainReport:
    loss_curve: list[tuple[int, float]] = field(default_factory=list)
    best_curve: list[tuple[int, float]] = field(default_factory=list)
    final_mse: float = float("nan")
    final_psnr: float = float("nan")
    best_step: int = 0
    steps: int = 0
    seconds: float = 0.0
    seed: int = 0
    lr: float = DEFAULT_LR
    batch_size: int = DEFAULT_BATCH


def grid_coords(height: int, width: int) -> np.ndarray:
    """Row-major (x, y) coordinates in [-1, 1]; a length-1 axis maps to 0."""
    xs = 2.0 * np.arange(width) / (width - 1) - 1.0 if width > 1 else np.zeros(1)
    ys = 2.0 * np.arange(height) / (height - 1) - 1.0 if height > 1 else np.zeros(1)
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def build_dataset(signal: SignalTensor) -> CoordinateDataset:
    if signal.channels not in (1, 3):
        raise SignalError(f"signals must have 1 or 3 channels, got {signal.channels}")
    values = signal.data.reshape(-1, signal.channels)
    lo, hi = values.min(axis=0), values.max(axis=0)
    meta = NormMeta(lo, hi, signal.height, signal.width, signal.value_domain)
    return CoordinateDataset(
        grid_coords(signal.height, signal.width), (values - lo) / meta.span(), meta
    )


def denormalize(values: np.ndarray, meta: NormMeta) -> SignalTensor:
    data = values * meta.span() + meta.value_min
    return SignalTensor(data.reshape(meta.height, meta.width, meta.channels), meta.value_domain)


def psnr_from_mse(mse: float, peak: float = 1.0) -> float:
    return float("inf") if mse == 0 else float(10.0 * np.log10(peak**2 / mse))


def evaluate(model, dataset: CoordinateDataset) -> tuple[float, float]:
    """Full-grid MSE and PSNR (peak 1) in the normalized domain."""
    pred = model.forward(dataset.coords)
    mse, _ = mse_loss(pred, dataset.values)
    return mse, psnr_from_mse(mse)


def _check_compatible(config, dataset: CoordinateDataset) -> None:
    if config.n_in != dataset.coords.shape[1]:
        raise ConfigError(f"model takes {config.n_in} inputs, dataset has {dataset.coords.shape[1]}")
    if config.n_out != dataset.values.shape[1]:
        raise ConfigError(
            f"model has {config.n_out} outputs, signal has {dataset.values.shape[1]} channels"
        )


def encode(
    signal: SignalTensor,
    config: ModelConfig | SirenConfig,
    opts: TrainOptions | None = None,
    log=None,
) -> tuple[QuinrModel | SirenModel, TrainReport]:
    """Overfit a model to ``signal``; returns the best full-grid checkpoint.

    Only post-update parameters are checkpoint candidates, so ``steps=1``
    always returns the parameters after exactly one Adam step. ``log`` is a
    text stream for progress lines (stderr when ``opts.log_every`` is set).
    """
    opts = opts or TrainOptions()
    dataset = build_dataset(signal)
    _check_compatible(config, dataset)
    model = build_model(config)
    if log is None and opts.log_every:
        log = sys.stderr
    n = len(dataset)
    full_batch = opts.batch_size >= n
    rng = np.random.default_rng(opts.seed)
    opt = Adam(opts.lr)
    report = TrainReport(seed=opts.seed, lr=opts.lr, batch_size=opts.batch_size, steps=opts.steps)
    best_loss, best_values = np.inf, None
    order, cursor = np.arange(n), n
    t0 = time.perf_counter()

    def consider(step: int, loss: float) -> None:
        nonlocal best_loss, best_values
        if loss < best_loss:
            best_loss, best_values = loss, model.params.values.copy()
            report.best_step = step
        report.best_curve.append((step, best_loss))

    for step in range(1, opts.steps + 1):
        if full_batch:
            idx = order
        else:
            if cursor + opts.batch_size > n:
                order, cursor = rng.permutation(n), 0
            idx = order[cursor:cursor + opts.batch_size]
            cursor += opts.batch_size
        tape = Tape()
        pred = model.forward(dataset.coords[idx], tape)
        loss, grad = mse_loss(pred, dataset.values[idx])
        if not np.isfinite(loss):
            raise NumericalError(f"non-finite loss at step {step}")
        # In full-batch mode this loss is the full-grid loss of the previous step's update.
        if full_batch and step > 1:
            consider(step - 1, loss)
        tape.backward(grad)
        try:
            opt.step(model.params)
        except NumericalError as exc:
            raise NumericalError(f"step {step}: {exc}") from exc
        if step % (opts.log_every or 1) == 0:
            report.loss_curve.append((step, loss))
            if opts.log_every and log is not None:
                print(f"step={step} loss={loss:.6g} psnr={psnr_from_mse(loss):.3f}", file=log)
        if not full_batch and (step % opts.eval_every == 0) and step != opts.steps:
            consider(step, evaluate(model, dataset)[0])
    final_loss = evaluate(model, dataset)[0]
    if not np.isfinite(final_loss):
        raise NumericalError(f"non-finite loss at step {opts.steps}")
    consider(opts.steps, final_loss)

    model.params.values[:] = best_values
    report.final_mse, report.final_psnr = evaluate(model, dataset)
    report.seconds = time.perf_counter() - t0
    return model, report
