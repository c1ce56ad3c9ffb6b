"""Command-line interface: ``quinr {encode,decode,eval,sweep,gradcheck}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import codec, gradcheck
from .autodiff import ACTIVATIONS, SINE_CONVENTIONS, NumericalError
from .model import ConfigError, ModelConfig, SirenConfig
from .signal_io import SignalError, load_signal, psnr, save_signal
from .sweep import default_grid, expand_grid, rd_sweep, with_channels, write_csv
from .train import DEFAULT_BATCH, DEFAULT_LR, DEFAULT_STEPS, TrainOptions, build_dataset, encode

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--model", choices=("quinr", "siren"), default="quinr")
    g.add_argument("--qubits", type=int, default=4, help="number of qubits N_q")
    g.add_argument("--folds", type=int, default=3, help="folded-embedding rounds F")
    g.add_argument("--embed", type=int, default=None, help="embedding size M (must equal qubits*folds)")
    g.add_argument("--layers", type=int, default=2, help="entangling layers per block L")
    g.add_argument("--blocks", type=int, default=2, help="re-uploading blocks B")
    g.add_argument("--omega0", type=float, default=30.0, help="sine frequency scale")
    g.add_argument("--activation", choices=ACTIVATIONS, default="qrelu")
    g.add_argument("--sine-form", choices=SINE_CONVENTIONS, default="literal",
                   help="sine embedding form: literal sin(w0*Wx+b) or siren sin(w0*(Wx+b))")
    g.add_argument("--no-head-affine", action="store_true", help="drop the per-channel affine output head")
    g.add_argument("--shuffle-seed", type=int, default=0)
    g.add_argument("--init-seed", type=int, default=0)
    g.add_argument("--hidden-width", type=int, default=10, help="SIREN hidden width")
    g.add_argument("--hidden-layers", type=int, default=2, help="SIREN sine layers")


def _add_train_flags(p: argparse.ArgumentParser, defaults: bool = True) -> None:
    g = p.add_argument_group("training")
    g.add_argument("--steps", type=int, default=DEFAULT_STEPS if defaults else None,
                   help=f"optimizer steps (default {DEFAULT_STEPS})")
    g.add_argument("--lr", type=float, default=DEFAULT_LR if defaults else None,
                   help=f"Adam learning rate (default {DEFAULT_LR})")
    g.add_argument("--batch", type=int, default=DEFAULT_BATCH if defaults else None,
                   help=f"coordinates per step; >= pixel count means full batch (default {DEFAULT_BATCH})")
    g.add_argument("--seed", type=int, default=0 if defaults else None, help="minibatch shuffling seed")
    g.add_argument("--log-every", type=int, default=0, help="progress line interval on stderr (0 = off)")


def _add_range_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument("--range-dims", type=int, nargs=2, metavar=("H", "W"),
                   help="height and width of .f32 range images")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="quinr", description="Quantum implicit neural representation codec.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("encode", help="train a model on a signal and write a .qinr file")
    p.add_argument("input")
    p.add_argument("output")
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("--dtype", choices=tuple(codec.DTYPES), default="fp32")
    _add_range_flag(p)

    p = sub.add_parser("decode", help="reconstruct a signal from a .qinr file")
    p.add_argument("input")
    p.add_argument("output", help=".png for images, .f32 for range images")

    p = sub.add_parser("eval", help="PSNR of a test signal against a reference")
    p.add_argument("reference")
    p.add_argument("test")
    _add_range_flag(p)

    p = sub.add_parser("sweep", help="rate-distortion sweep to CSV")
    p.add_argument("input")
    p.add_argument("csv")
    p.add_argument("--grid", help="key=value grid file; comma-separated values are swept")
    _add_train_flags(p, defaults=False)
    p.add_argument("--dtypes", default=None, help="comma-separated, e.g. fp32,fp16")
    p.add_argument("--jobs", type=int, default=1, help="worker processes, one grid point each")
    p.add_argument("--no-timing", action="store_true", help="write 0 seconds so the CSV is byte-stable")
    _add_range_flag(p)

    p = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    return parser


def config_from_args(args, n_out: int) -> ModelConfig | SirenConfig:
    if args.model == "siren":
        return SirenConfig(n_out=n_out, hidden_width=args.hidden_width, hidden_layers=args.hidden_layers,
                           omega0=args.omega0, init_seed=args.init_seed)
    return ModelConfig(
        n_out=n_out, n_qubits=args.qubits, folds=args.folds, embed_size=args.embed,
        layers=args.layers, blocks=args.blocks, omega0=args.omega0,
        shuffle_seed=args.shuffle_seed, init_seed=args.init_seed, activation=args.activation,
        sine_convention=args.sine_form, head_affine=not args.no_head_affine,
    )


def _range_dims(args):
    return tuple(args.range_dims) if args.range_dims else None


def cmd_encode(args) -> int:
    # Validate the model flags before touching the input.
    config_from_args(args, 1)
    opts = TrainOptions(args.steps, args.lr, args.batch, args.seed, args.log_every)
    signal = load_signal(args.input, _range_dims(args))
    config = config_from_args(args, signal.channels)
    model, report = encode(signal, config, opts)
    blob = codec.serialize(model, build_dataset(signal).norm_meta, args.dtype)
    Path(args.output).write_bytes(blob)
    quality = psnr(signal, codec.decode(blob))
    print(f"bpp={codec.bpp(len(blob), signal.pixels):.6f} psnr={quality:.4f}")
    return EXIT_OK


def cmd_decode(args) -> int:
    try:
        data = Path(args.input).read_bytes()
        signal = codec.decode(data)
    except codec.CodecError as exc:
        raise codec.CodecError(f"{args.input}: {exc}") from exc
    if Path(args.output).suffix.lower() == ".f32" and signal.channels != 1:
        raise UsageError("range image output needs a single-channel model")
    save_signal(signal, args.output)
    return EXIT_OK


def cmd_eval(args) -> int:
    dims = _range_dims(args)
    print(f"psnr={psnr(load_signal(args.reference, dims), load_signal(args.test, dims)):.4f}")
    return EXIT_OK


_MODEL_KEYS = {
    "qubits": ("n_qubits", int), "folds": ("folds", int), "layers": ("layers", int),
    "blocks": ("blocks", int), "embed": ("embed_size", int), "omega0": ("omega0", float),
    "activation": ("activation", str), "sine_form": ("sine_convention", str),
    "head_affine": ("head_affine", lambda v: v.lower() in ("1", "true", "yes", "on")),
    "shuffle_seed": ("shuffle_seed", int), "init_seed": ("init_seed", int),
    "hidden_width": ("hidden_width", int), "hidden_layers": ("hidden_layers", int),
}
_SIREN_FIELDS = {"omega0", "init_seed", "hidden_width", "hidden_layers"}
_TRAIN_KEYS = {"steps": int, "lr": float, "batch": int, "seed": int}


def read_grid_file(path) -> dict[str, list[str]]:
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _MODEL_KEYS and key not in _TRAIN_KEYS and key not in ("model", "dtypes"):
            raise UsageError(f"{path}:{n}: unknown grid key {key!r}")
        out[key] = [v.strip() for v in value.split(",") if v.strip()]
    return out


def grid_from_spec(spec: dict[str, list[str]], n_out: int):
    models = spec.get("model", ["quinr"])
    axes = {}
    for key, values in spec.items():
        if key in _MODEL_KEYS:
            field, conv = _MODEL_KEYS[key]
            try:
                axes[field] = [conv(v) for v in values]
            except ValueError as exc:
                raise UsageError(f"bad value for {key}: {exc}") from exc
    grid = []
    for kind in models:
        if kind == "quinr":
            fields = {f: v for f, v in axes.items() if f not in ("hidden_width", "hidden_layers")}
            grid += [ModelConfig(n_out=n_out, **c) for c in expand_grid({}, fields)]
        elif kind == "siren":
            fields = {f: v for f, v in axes.items() if f in _SIREN_FIELDS}
            grid += [SirenConfig(n_out=n_out, **c) for c in expand_grid({}, fields)]
        else:
            raise UsageError(f"unknown model kind {kind!r} in grid")
    return grid


def cmd_sweep(args) -> int:
    spec = read_grid_file(args.grid) if args.grid else {}
    train = {}
    for key, conv in _TRAIN_KEYS.items():
        if key in spec:
            if len(spec[key]) != 1:
                raise UsageError(f"training key {key!r} takes a single value")
            train[key] = conv(spec[key][0])
        flag = getattr(args, key)
        if flag is not None:
            train[key] = flag
    opts = TrainOptions(
        steps=train.get("steps", DEFAULT_STEPS), lr=train.get("lr", DEFAULT_LR),
        batch_size=train.get("batch", DEFAULT_BATCH), seed=train.get("seed", 0),
        log_every=args.log_every,
    )
    dtypes = args.dtypes.split(",") if args.dtypes else spec.get("dtypes", ["fp32", "fp16"])
    for d in dtypes:
        if d not in codec.DTYPES:
            raise UsageError(f"unknown dtype {d!r}")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    signal = load_signal(args.input, _range_dims(args))
    if args.grid:
        grid = grid_from_spec(spec, signal.channels)
    else:
        grid = with_channels(default_grid(opts.seed), signal.channels)
    points = rd_sweep(signal, grid, opts, dtypes, jobs=args.jobs, record_time=not args.no_timing)
    write_csv(points, args.csv, signal)
    failed = sum(not p.ok for p in points)
    print(f"rows={len(points)} failed={failed} csv={args.csv}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = gradcheck.run_all(args.seed)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


COMMANDS = {
    "encode": cmd_encode,
    "decode": cmd_decode,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"quinr {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SignalError, codec.CodecError, OSError) as exc:
        print(f"quinr {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"quinr {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
