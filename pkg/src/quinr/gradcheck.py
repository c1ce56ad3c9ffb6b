"""Central finite-difference checks for every differentiable piece of the stack."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import qsim
from .autodiff import ParamStore, Tape, activation, linear_sine, mse_loss
from .model import ModelConfig, QuinrModel, SirenConfig, SirenModel

FD_STEP = 1e-5
REL_TOL = 1e-4
ABS_FLOOR = 1e-8


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    max_abs_err: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: max rel err {self.max_rel_err:.2e}, "
                f"max abs err {self.max_abs_err:.2e}")


def central_difference(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return g


def compare(name: str, analytic, numeric, rel_tol: float = REL_TOL, abs_floor: float = ABS_FLOOR) -> CheckResult:
    """Pass iff every coordinate has ``|a - f| <= max(rel_tol * |f|, abs_floor)``."""
    a, f = np.asarray(analytic, dtype=float).ravel(), np.asarray(numeric, dtype=float).ravel()
    err = np.abs(a - f)
    rel = err / np.maximum(np.abs(f), abs_floor)
    ok = bool(np.all(err <= np.maximum(rel_tol * np.abs(f), abs_floor)))
    return CheckResult(name, float(rel.max(initial=0.0)), float(err.max(initial=0.0)), ok)


def random_circuit(rng: np.random.Generator, n_qubits: int, n_gates: int, n_angles: int | None = None) -> qsim.CircuitProgram:
    """Random RX/RZ/CRZ circuit; each gate reads a random angle index (shared indices allowed)."""
    n_angles = n_gates if n_angles is None else n_angles
    ops = []
    for _ in range(n_gates):
        kinds = ("RX", "RZ", "CRZ") if n_qubits > 1 else ("RX", "RZ")
        kind = kinds[rng.integers(len(kinds))]
        target = int(rng.integers(n_qubits))
        control = None
        if kind == "CRZ":
            control = int(rng.choice([q for q in range(n_qubits) if q != target]))
        ops.append(qsim.GateOp(kind, target, control=control, param=int(rng.integers(n_angles))))
    return qsim.CircuitProgram(n_qubits, ops, n_angles)


def check_circuit(rng, n_qubits: int = 4, n_angles: int = 20, method: str = "adjoint") -> CheckResult:
    prog = random_circuit(rng, n_qubits, 2 * n_angles, n_angles)
    angles = rng.uniform(0, 2 * np.pi, n_angles)
    upstream = rng.normal(size=1 << n_qubits)

    def loss(a):
        return float(upstream @ qsim.probabilities(qsim.run_circuit(prog, a)))

    analytic = qsim.circuit_gradient(prog, angles, upstream, method=method)
    return compare(f"circuit gradient ({method}, {n_qubits} qubits, {n_angles} angles)",
                   analytic, central_difference(loss, angles))


def check_linear_sine(rng, convention: str = "literal", m: int = 8, n_in: int = 2) -> list[CheckResult]:
    store = ParamStore([("W", (m, n_in)), ("b", (m,))], rng.normal(size=m * n_in + m) * 0.1)
    x = rng.uniform(-1, 1, (5, n_in))
    up = rng.normal(size=(5, m))
    tape = Tape()
    linear_sine(x, store, "W", "b", 30.0, convention, tape)
    gx = tape.backward(up)

    def loss_params(v):
        s = ParamStore(store.layout(), v)
        return float(np.sum(up * linear_sine(x, s, "W", "b", 30.0, convention)))

    def loss_x(xx):
        return float(np.sum(up * linear_sine(xx, store, "W", "b", 30.0, convention)))

    return [
        compare(f"linear_sine params ({convention})", store.grads, central_difference(loss_params, store.values)),
        compare(f"linear_sine input ({convention})", gx, central_difference(loss_x, x)),
    ]


def check_mse(rng) -> CheckResult:
    pred, target = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
    _, g = mse_loss(pred, target)
    return compare("mse_loss", g, central_difference(lambda p: mse_loss(p, target)[0], pred))


def check_activation(rng, kind: str) -> CheckResult:
    # Keep samples away from the kink at 0, where the derivative is one-sided.
    x = rng.choice([-1.0, 1.0], size=9) * rng.uniform(0.1, 2.0, size=9)
    up = rng.normal(size=9)
    tape = Tape()
    activation(x, kind, tape)
    g = tape.backward(up)
    return compare(f"activation {kind}", g, central_difference(lambda v: float(up @ activation(v, kind)), x))


def model_loss_check(model, x: np.ndarray, y: np.ndarray, name: str) -> CheckResult:
    model.params.zero_grad()
    tape = Tape()
    _, g = mse_loss(model.forward(x, tape), y)
    tape.backward(g)
    analytic = model.params.grads.copy()
    model.params.zero_grad()
    base = model.params.values.copy()

    def loss(v):
        model.params.values[:] = v
        return mse_loss(model.forward(x), y)[0]

    numeric = central_difference(loss, base)
    model.params.values[:] = base
    return compare(name, analytic, numeric)


def random_quinr(rng, n_qubits=3, folds=2, layers=1, blocks=2, n_out=1, **kw) -> QuinrModel:
    cfg = ModelConfig(n_qubits=n_qubits, folds=folds, layers=layers, blocks=blocks, n_out=n_out,
                      init_seed=int(rng.integers(2**32)), shuffle_seed=int(rng.integers(2**32)), **kw)
    model = QuinrModel(cfg)
    # Move off the init so W, b and the head are generic.
    model.params.values += rng.normal(scale=0.05, size=len(model.params))
    return model


def check_quinr(rng, n_samples: int = 20, **kw) -> CheckResult:
    model = random_quinr(rng, **kw)
    x = rng.uniform(-1, 1, (n_samples, model.config.n_in))
    y = rng.uniform(0, 1, (n_samples, model.config.n_out))
    c = model.config
    return model_loss_check(model, x, y, f"quINR end-to-end (Nq={c.n_qubits}, F={c.folds}, "
                                         f"L={c.layers}, B={c.blocks}, {c.activation}, {c.sine_convention}, "
                                         f"head_affine={c.head_affine})")


def check_siren(rng, n_samples: int = 10) -> CheckResult:
    model = SirenModel(SirenConfig(hidden_width=6, hidden_layers=2, init_seed=int(rng.integers(2**32))))
    x = rng.uniform(-1, 1, (n_samples, 2))
    y = rng.uniform(0, 1, (n_samples, 1))
    return model_loss_check(model, x, y, "SIREN end-to-end")


def run_all(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = [check_circuit(rng), check_circuit(rng, method="parameter-shift")]
    results += check_linear_sine(rng, "literal") + check_linear_sine(rng, "siren")
    results.append(check_mse(rng))
    results += [check_activation(rng, k) for k in ("qrelu", "relu", "leaky_relu", "identity")]
    results.append(check_quinr(rng))
    results.append(check_quinr(rng, n_out=2, activation="identity", sine_convention="siren"))
    results.append(check_quinr(rng, head_affine=False))
    results.append(check_siren(rng))
    return results
