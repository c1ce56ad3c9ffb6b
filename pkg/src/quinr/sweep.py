"""Rate-distortion sweeps: one trained model per grid point, PSNR vs bpp rows."""
from __future__ import annotations

import csv
import io
import itertools
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from . import codec
from .model import ModelConfig, SirenConfig, param_count
from .signal_io import PSNR_SENTINEL, SignalTensor, psnr, psnr_peak
from .train import TrainOptions, build_dataset, encode

CSV_FIELDS = (
    "kind", "n_qubits", "folds", "M", "L", "B", "dtype", "params", "bytes", "bpp",
    "psnr_db", "steps", "seconds", "pareto", "header_bytes", "param_bpp", "note",
)


@dataclass
class RdPoint:
    kind: str
    config: ModelConfig | SirenConfig
    dtype: str
    params: int
    n_bytes: int = 0
    bpp: float = float("nan")
    psnr_db: float = float("nan")
    steps: int = 0
    seconds: float = 0.0
    header_bytes: int = 0
    param_bpp: float = float("nan")
    pareto: bool = False
    note: str = ""

    @property
    def ok(self) -> bool:
        return not self.note

    def row(self) -> dict:
        cfg = self.config
        if self.kind == "quinr":
            shape = dict(n_qubits=cfg.n_qubits, folds=cfg.folds, M=cfg.embed_size, L=cfg.layers, B=cfg.blocks)
        else:
            # SIREN: M is the hidden width, L the number of sine layers.
            shape = dict(n_qubits="", folds="", M=cfg.hidden_width, L=cfg.hidden_layers, B="")
        return {
            "kind": self.kind,
            **shape,
            "dtype": self.dtype,
            "params": self.params,
            "bytes": self.n_bytes if self.ok else "",
            "bpp": f"{self.bpp:.6f}" if self.ok else "",
            "psnr_db": f"{min(self.psnr_db, PSNR_SENTINEL):.4f}" if self.ok else "",
            "steps": self.steps,
            "seconds": f"{self.seconds:.3f}",
            "pareto": int(self.pareto),
            "header_bytes": self.header_bytes if self.ok else "",
            "param_bpp": f"{self.param_bpp:.6f}" if self.ok else "",
            "note": self.note,
        }


def mark_pareto(points: list[RdPoint]) -> None:
    """A point is on the frontier iff no other point has <= bpp and strictly higher PSNR."""
    good = [p for p in points if p.ok]
    for p in points:
        p.pareto = p.ok and not any(
            q is not p and q.bpp <= p.bpp and q.psnr_db > p.psnr_db for q in good
        )


def _run_point(signal: SignalTensor, config, opts: TrainOptions, dtypes, record_time: bool):
    t0 = time.perf_counter()
    try:
        model, _ = encode(signal, config, opts)
    except Exception as exc:  # noqa: BLE001 - one bad grid point must not stop the sweep
        return [
            RdPoint(config.kind, config, d, param_count(config), steps=opts.steps,
                    note=f"{type(exc).__name__}: {exc}".replace("\n", " "))
            for d in dtypes
        ]
    seconds = time.perf_counter() - t0 if record_time else 0.0
    meta = build_dataset(signal).norm_meta
    n_params = param_count(config)
    out = []
    for dtype in dtypes:
        try:
            blob = codec.serialize(model, meta, dtype)
            decoded = codec.decode(blob)
        except Exception as exc:  # noqa: BLE001
            out.append(RdPoint(config.kind, config, dtype, n_params, steps=opts.steps,
                               seconds=seconds, note=f"{type(exc).__name__}: {exc}"))
            continue
        header = codec.header_size(config.kind, config.n_out)
        out.append(RdPoint(
            kind=config.kind,
            config=config,
            dtype=dtype,
            params=n_params,
            n_bytes=len(blob),
            bpp=codec.bpp(len(blob), signal.pixels),
            psnr_db=psnr(signal, decoded),
            steps=opts.steps,
            seconds=seconds,
            header_bytes=header,
            param_bpp=codec.bpp(len(blob) - header, signal.pixels),
        ))
    return out


def rd_sweep(
    signal: SignalTensor,
    grid: list[ModelConfig | SirenConfig],
    opts: TrainOptions,
    dtypes=("fp32", "fp16"),
    jobs: int = 1,
    record_time: bool = True,
) -> list[RdPoint]:
    """Train every grid point and measure rate and distortion per dtype.

    Rows come back sorted by bpp (failed rows last, in grid order) with the
    Pareto flag set. With ``record_time=False`` the seconds column is zero so
    the CSV is byte-stable across runs.
    """
    if not grid:
        raise ValueError("rate-distortion sweep needs at least one configuration")
    dtypes = tuple(dtypes)
    args = [(signal, cfg, opts, dtypes, record_time) for cfg in grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_point, *zip(*args)))
    else:
        results = [_run_point(*a) for a in args]
    points = [p for chunk in results for p in chunk]
    mark_pareto(points)
    ordered = sorted((p for p in points if p.ok), key=lambda p: p.bpp)
    return ordered + [p for p in points if not p.ok]


def to_csv(points: list[RdPoint]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for p in points:
        writer.writerow(p.row())
    return buf.getvalue()


def write_csv(points: list[RdPoint], path, signal: SignalTensor | None = None) -> None:
    """Write the CSV plus a ``<path>.meta.json`` sidecar with the PSNR convention."""
    Path(path).write_text(to_csv(points))
    if signal is not None:
        meta = {
            "value_domain": signal.value_domain,
            "psnr_peak": psnr_peak(signal),
            "height": signal.height,
            "width": signal.width,
            "channels": signal.channels,
            "psnr_sentinel": PSNR_SENTINEL,
        }
        Path(f"{path}.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def expand_grid(base: dict, axes: dict[str, list]) -> list[dict]:
    """Cartesian product of ``axes`` overlaid on ``base``, in deterministic key order."""
    keys = sorted(axes)
    return [{**base, **dict(zip(keys, combo))} for combo in itertools.product(*(axes[k] for k in keys))]


def default_grid(seed: int = 0) -> list[ModelConfig | SirenConfig]:
    """Small desk-scale grid varying the embedding size M (via folds) plus SIREN widths."""
    quinr = [ModelConfig(n_qubits=4, folds=f, layers=2, blocks=2, init_seed=seed, shuffle_seed=seed)
             for f in (1, 2, 3)]
    siren = [SirenConfig(hidden_width=w, hidden_layers=2, init_seed=seed) for w in (6, 10)]
    return quinr + siren


def with_channels(configs, n_out: int):
    return [replace(c, n_out=n_out) for c in configs]
