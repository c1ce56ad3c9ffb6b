"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` (lines are printed even
without ``-s``) or directly with ``python tests/test_acceptance.py``.
"""
import math
import sys
import time

import numpy as np
import pytest

from quinr import codec, gradcheck, qsim
from quinr.model import (
    ModelConfig,
    QuinrModel,
    SirenConfig,
    build_entangling_layer,
    build_folded_embedding,
    build_model,
    param_count,
)
from quinr.signal_io import SignalTensor, psnr
from quinr.sweep import rd_sweep, to_csv
from quinr.train import TrainOptions, build_dataset, encode

from conftest import SMOKE_CONFIG, SMOKE_OPTS, gradient_image

SIREN_SMOKE = SirenConfig(hidden_width=10, hidden_layers=2, init_seed=0)


_terminal = None


@pytest.fixture(autouse=True)
def _grab_terminal(pytestconfig):
    global _terminal
    _terminal = pytestconfig.pluginmanager.getplugin("terminalreporter")


def report(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} [{name}] {detail}"
    if _terminal is not None:
        _terminal.write_line("")
        _terminal.write_line(line)
    else:
        print(line)
    assert ok, f"{name}: {detail}"


def test_simulator_correctness():
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    worst_amp, worst_norm = 0.0, 0.0
    for _ in range(200):
        n = int(rng.integers(1, 5))
        gates = int(rng.integers(1, 31))
        prog = gradcheck.random_circuit(rng, n, gates, int(rng.integers(1, gates + 1)))
        angles = rng.uniform(-2 * np.pi, 2 * np.pi, prog.n_angles)
        state = qsim.run_circuit(prog, angles).amps
        ref = qsim.dense_matrix_oracle(prog, angles)[:, 0]
        worst_amp = max(worst_amp, float(np.max(np.abs(state - ref))))
        worst_norm = max(worst_norm, abs(float(np.vdot(state, state).real) - 1.0))
    secs = time.perf_counter() - t0
    ok = worst_amp < 1e-12 and worst_norm < 1e-12 and secs < 10
    report("simulator", ok, f"200 circuits, max amp err {worst_amp:.1e}, max norm err {worst_norm:.1e}, {secs:.2f}s")


def test_gradient_exactness():
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    model = gradcheck.random_quinr(rng, n_qubits=3, folds=2, layers=1, blocks=2)
    results = []
    for i in range(20):
        x = rng.uniform(-1, 1, (1, 2))
        y = rng.uniform(0, 1, (1, 1))
        results.append(gradcheck.model_loss_check(model, x, y, f"pair {i}"))
    secs = time.perf_counter() - t0
    bad = [r.name for r in results if not r.passed]
    ok = not bad and secs < 30
    report("gradient", ok, f"Nq=3 F=2 L=1 B=2, {len(model.params)} params x 20 pairs, "
                           f"max rel err {max(r.max_rel_err for r in results):.1e}, "
                           f"failing {bad or 'none'}, {secs:.2f}s")


def test_structural_counts():
    embed = build_folded_embedding(4, 3)
    n_embed = len({op.param for op in embed})
    n_ent = len({op.param for op in build_entangling_layer(4)})
    rng = np.random.default_rng(0)
    mismatches = 0
    for _ in range(50):
        cfg = ModelConfig(
            n_in=int(rng.integers(1, 4)), n_out=int(rng.integers(1, 4)), n_qubits=int(rng.integers(2, 6)),
            folds=int(rng.integers(1, 5)), layers=int(rng.integers(1, 4)), blocks=int(rng.integers(1, 4)),
            head_affine=bool(rng.integers(2)),
        )
        mismatches += param_count(cfg) != len(QuinrModel(cfg).params.values)
    ok = n_embed == 12 and len(embed) == 12 and n_ent == 28 and mismatches == 0
    report("structure", ok, f"embedding angles {n_embed}, entangling angles {n_ent}, "
                            f"param_count mismatches {mismatches}/50")


def _random_codec_model(rng):
    if rng.integers(2):
        cfg = SirenConfig(n_out=int(rng.choice([1, 3])), hidden_width=int(rng.integers(1, 12)),
                          hidden_layers=int(rng.integers(0, 4)), init_seed=int(rng.integers(2**63)))
    else:
        cfg = ModelConfig(n_out=int(rng.choice([1, 3])), n_qubits=int(rng.integers(2, 5)),
                          folds=int(rng.integers(1, 4)), layers=int(rng.integers(1, 3)),
                          blocks=int(rng.integers(1, 3)), shuffle_seed=int(rng.integers(2**63)),
                          init_seed=int(rng.integers(2**63)), head_affine=bool(rng.integers(2)))
    model = build_model(cfg)
    model.params.values[:] = rng.normal(size=len(model.params)).astype(np.float32)
    return model


def test_codec():
    rng = np.random.default_rng(0)
    failures = []
    for i in range(50):
        model = _random_codec_model(rng)
        n_out = model.config.n_out
        signal = SignalTensor(rng.uniform(0, 1, (3, 5, n_out)))
        meta = build_dataset(signal).norm_meta
        blob = codec.serialize(model, meta, "fp32")
        enc = codec.deserialize(blob)
        if codec.serialize(enc.model(), enc.norm_meta, "fp32") != blob:
            failures.append(f"round trip {i}")
        if enc.params.astype("<f4").tobytes() != model.params.values.astype("<f4").tobytes():
            failures.append(f"payload {i}")
        if codec.decode(blob).data.tobytes() != codec.decode(blob).data.tobytes():
            failures.append(f"decode determinism {i}")
    n = param_count(model.config)
    cases = {
        codec.BadMagicError: b"QINX" + blob[4:],
        codec.UnsupportedVersionError: blob[:4] + b"\x07" + blob[5:],
        codec.TruncatedStreamError: blob[:-1],
        codec.ParamCountMismatchError: blob[:len(blob) - 4 * n - 4] + (n + 1).to_bytes(4, "little") + blob[-4 * n:],
    }
    for err, data in cases.items():
        try:
            codec.deserialize(data)
            failures.append(f"{err.__name__} not raised")
        except err:
            pass
        except codec.CodecError as exc:
            failures.append(f"expected {err.__name__}, got {type(exc).__name__}")
    report("codec", not failures, "50 models round-trip bit-identical, decode deterministic, 4 typed errors"
           if not failures else "; ".join(failures[:5]))


def test_overfit_smoke(smoke_run):
    t0 = time.perf_counter()
    _, q_report = smoke_run
    _, s_report = encode(gradient_image(16), SIREN_SMOKE, SMOKE_OPTS)
    secs = q_report.seconds + (time.perf_counter() - t0)
    ok = q_report.final_psnr >= 30 and s_report.final_psnr >= 30 and secs < 300
    report("overfit", ok, f"quINR ({param_count(SMOKE_CONFIG)} params) {q_report.final_psnr:.2f} dB, "
                          f"SIREN ({param_count(SIREN_SMOKE)} params) {s_report.final_psnr:.2f} dB, "
                          f"{SMOKE_OPTS.steps} steps, {secs:.1f}s")


def test_rd_curves_not_reproducible_at_desk_scale():
    # Full-scale curves need the Kodak and LiDAR sweeps; here we only check that
    # the harness produces the CSV such a study would consume.
    grid = [ModelConfig(n_qubits=2, folds=f, layers=1, blocks=1) for f in (1, 2)]
    points = rd_sweep(gradient_image(4), grid, TrainOptions(steps=5, lr=1e-2), record_time=False)
    text = to_csv(points)
    ok = len(points) == 4 and all(p.ok for p in points) and text.count("\n") == 5
    report("rd-curves", ok, "NOT REPRODUCED at desk scale (needs full Kodak/LiDAR sweeps and a "
                            f"JPEG2000 baseline); rd_sweep harness emitted {len(points)} CSV rows")


def _naive_psnr(a, b):
    total, n = 0.0, 0
    for x, y in zip(a.ravel().tolist(), b.ravel().tolist()):
        total += (x - y) ** 2
        n += 1
    return 10.0 * math.log10(1.0 / (total / n))


def test_psnr_oracle():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(20):
        shape = (int(rng.integers(1, 17)), int(rng.integers(1, 17)), int(rng.choice([1, 3])))
        a = rng.integers(0, 256, shape) / 255.0
        b = rng.integers(0, 256, shape) / 255.0
        if np.array_equal(a, b):
            continue
        worst = max(worst, abs(psnr(SignalTensor(a), SignalTensor(b)) - _naive_psnr(a, b)))
    report("psnr", worst < 1e-9, f"20 random pairs, max deviation {worst:.1e} dB")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
