"""Statevector simulator for the RX / RZ / CRZ gate set.

Conventions
-----------
* Qubit 0 is the most significant bit of a basis-state index, so on two
  qubits index 1 is ``|01>`` (qubit 1 set).
* ``RX(t) = [[cos t/2, -i sin t/2], [-i sin t/2, cos t/2]]``
* ``RZ(t) = diag(exp(-i t/2), exp(+i t/2))``
* ``CRZ(t) = diag(1, 1, exp(-i t/2), exp(+i t/2))`` in (control, target) order.

Every gate is ``exp(-i t/2 G)`` for a generator ``G`` that is either a Pauli X
on one qubit or diagonal with entries in {-1, 0, +1}; the adjoint gradient below
relies on that form.

Amplitude arrays may carry leading batch dimensions; angles then broadcast
against them with shape ``batch`` (one angle per sample).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

MAX_QUBITS = 20
ORACLE_MAX_QUBITS = 6
GATE_KINDS = ("RX", "RZ", "CRZ")


class CapacityError(ValueError):
    """Qubit count outside what the simulator (or oracle) accepts."""


class CircuitError(ValueError):
    """Malformed gate, circuit, or angle vector."""


@dataclass
class Statevector:
    n_qubits: int
    amps: np.ndarray

    def __post_init__(self):
        if self.amps.shape[-1] != 1 << self.n_qubits:
            raise CircuitError(
                f"statevector of {self.n_qubits} qubits needs {1 << self.n_qubits} "
                f"amplitudes, got {self.amps.shape[-1]}"
            )

    def norm(self) -> np.ndarray:
        return np.sum(np.abs(self.amps) ** 2, axis=-1)


@dataclass(frozen=True)
class GateOp:
    """One gate. ``param`` indexes the angle vector; ``None`` means use ``angle``."""

    kind: str
    target: int
    control: int | None = None
    param: int | None = None
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise CircuitError(f"unknown gate kind {self.kind!r}")
        if (self.kind == "CRZ") != (self.control is not None):
            raise CircuitError("control qubit is required for CRZ and only for CRZ")
        if self.control is not None and self.control == self.target:
            raise CircuitError("CRZ control and target must differ")
        if self.target < 0 or (self.control is not None and self.control < 0):
            raise CircuitError("qubit indices must be non-negative")
        if self.param is not None and self.param < 0:
            raise CircuitError("angle index must be non-negative")

    def qubits(self) -> tuple[int, ...]:
        return (self.target,) if self.control is None else (self.control, self.target)


@dataclass
class CircuitProgram:
    n_qubits: int
    ops: list[GateOp] = field(default_factory=list)
    n_angles: int = 0

    def __post_init__(self):
        _check_capacity(self.n_qubits, MAX_QUBITS)
        self.ops = list(self.ops)
        for op in self.ops:
            _check_op(op, self.n_qubits)
            if op.param is not None and op.param >= self.n_angles:
                raise CircuitError(
                    f"gate {op} reads angle {op.param} but the program has {self.n_angles} angles"
                )


def _check_capacity(n_qubits: int, limit: int) -> None:
    if not 1 <= n_qubits <= limit:
        raise CapacityError(f"n_qubits must be in [1, {limit}], got {n_qubits}")


def _check_op(op: GateOp, n_qubits: int) -> None:
    for q in op.qubits():
        if q >= n_qubits:
            raise CircuitError(f"qubit {q} out of range for a {n_qubits}-qubit register")


# Per-gate index tables. For RX the table is the bit-flip permutation; for the
# diagonal gates it is the generator's diagonal.
@lru_cache(maxsize=None)
def _flip_perm(n_qubits: int, target: int) -> np.ndarray:
    mask = 1 << (n_qubits - 1 - target)
    return np.arange(1 << n_qubits) ^ mask


@lru_cache(maxsize=None)
def _diag_generator(n_qubits: int, target: int, control: int | None) -> np.ndarray:
    idx = np.arange(1 << n_qubits)
    z = 1.0 - 2.0 * ((idx >> (n_qubits - 1 - target)) & 1)
    if control is not None:
        z = z * ((idx >> (n_qubits - 1 - control)) & 1)
    return z


def _apply(amps: np.ndarray, op: GateOp, n_qubits: int, theta) -> np.ndarray:
    half = 0.5 * np.asarray(theta, dtype=float)[..., None]
    c, s = np.cos(half), np.sin(half)
    if op.kind == "RX":
        flipped = amps[..., _flip_perm(n_qubits, op.target)]
        return c * amps - 1j * s * flipped
    z = _diag_generator(n_qubits, op.target, op.control)
    # exp(-i t z / 2) for z in {-1, 0, +1}
    if op.control is None:
        return amps * (c - 1j * s * z)
    active = np.abs(z)
    return amps * ((1.0 + (c - 1.0) * active) - 1j * s * z)


def _apply_generator(amps: np.ndarray, op: GateOp, n_qubits: int) -> np.ndarray:
    if op.kind == "RX":
        return amps[..., _flip_perm(n_qubits, op.target)]
    return amps * _diag_generator(n_qubits, op.target, op.control)


def new_statevector(n_qubits: int, batch: int | None = None) -> Statevector:
    """``|0...0>``, optionally replicated ``batch`` times."""
    _check_capacity(n_qubits, MAX_QUBITS)
    shape = (1 << n_qubits,) if batch is None else (batch, 1 << n_qubits)
    amps = np.zeros(shape, dtype=np.complex128)
    amps[..., 0] = 1.0
    return Statevector(n_qubits, amps)


def apply_gate(state: Statevector, op: GateOp, angle) -> Statevector:
    _check_op(op, state.n_qubits)
    return Statevector(state.n_qubits, _apply(state.amps, op, state.n_qubits, angle))


def probabilities(state: Statevector) -> np.ndarray:
    return np.abs(state.amps) ** 2


def _angle_matrix(prog: CircuitProgram, angles) -> np.ndarray:
    angles = np.asarray(angles, dtype=float)
    if angles.ndim == 0 or angles.shape[-1] != prog.n_angles:
        raise CircuitError(
            f"expected {prog.n_angles} angles, got shape {angles.shape}"
        )
    return angles


def _op_angle(op: GateOp, angles: np.ndarray):
    return angles[..., op.param] if op.param is not None else op.angle


def _segments(prog: CircuitProgram, angles: np.ndarray, shared) -> list[tuple[int, int, bool]]:
    """Split ops into maximal runs that are batch-shared (fusable) or per-sample."""
    if shared is None or angles.ndim != 2:
        return [(0, len(prog.ops), False)]
    shared = np.asarray(shared, dtype=bool)
    if shared.shape != (prog.n_angles,):
        raise CircuitError(f"shared mask needs {prog.n_angles} entries, got {shared.shape}")
    flags = [op.param is None or bool(shared[op.param]) for op in prog.ops]
    segs, start = [], 0
    for i in range(1, len(flags) + 1):
        if i == len(flags) or flags[i] != flags[start]:
            segs.append((start, i, flags[start]))
            start = i
    return segs


def _segment_matrix(prog: CircuitProgram, start: int, stop: int, angles: np.ndarray) -> np.ndarray:
    """``U^T`` of ops[start:stop], so that row-stored states evolve as ``amps @ U^T``."""
    rows = np.eye(1 << prog.n_qubits, dtype=np.complex128)
    for op in prog.ops[start:stop]:
        rows = _apply(rows, op, prog.n_qubits, _op_angle(op, angles))
    return rows


def run_circuit(prog: CircuitProgram, angles, shared=None) -> Statevector:
    """Run ``prog`` from ``|0...0>``. ``angles`` is ``(n_angles,)`` or ``(batch, n_angles)``.

    ``shared`` optionally flags angle indices whose column is identical for every
    sample of a batch. Runs of such gates are fused into one dense matrix, which
    is much cheaper for large batches. The result does not depend on it beyond
    rounding.
    """
    angles = _angle_matrix(prog, angles)
    batch = angles.shape[0] if angles.ndim == 2 else None
    amps = new_statevector(prog.n_qubits, batch).amps
    for start, stop, fused in _segments(prog, angles, shared):
        if fused:
            amps = amps @ _segment_matrix(prog, start, stop, angles[0])
            continue
        for op in prog.ops[start:stop]:
            amps = _apply(amps, op, prog.n_qubits, _op_angle(op, angles))
    return Statevector(prog.n_qubits, amps)


def circuit_gradient(
    prog: CircuitProgram,
    angles,
    upstream,
    *,
    method: str = "adjoint",
    state: Statevector | None = None,
    shared=None,
) -> np.ndarray:
    """Gradient of ``sum_k upstream[k] * p_k`` with respect to the angle vector.

    ``upstream`` has the shape of the probability vector (batched like
    ``angles``). The result has the shape of ``angles``. ``state`` may pass
    in the already computed final state to skip the forward run (adjoint only).

    With a ``shared`` mask (see :func:`run_circuit`) the per-sample split of a
    shared angle's gradient is not computed: its batch total is reported in
    row 0 and the other rows are zero, so summing over the batch stays exact.
    """
    angles = _angle_matrix(prog, angles)
    upstream = np.asarray(upstream, dtype=float)
    dim = 1 << prog.n_qubits
    if upstream.shape != angles.shape[:-1] + (dim,):
        raise CircuitError(
            f"upstream shape {upstream.shape} does not match probabilities "
            f"shape {angles.shape[:-1] + (dim,)}"
        )
    if method == "adjoint":
        return _adjoint_gradient(prog, angles, upstream, state, shared)
    if method == "parameter-shift":
        return _shift_gradient(prog, angles, upstream)
    raise ValueError(f"unknown gradient method {method!r}")


def _generator_trace(rho: np.ndarray, op: GateOp, n_qubits: int) -> complex:
    if op.kind == "RX":
        perm = _flip_perm(n_qubits, op.target)
        return complex(np.sum(rho[perm, np.arange(perm.size)]))
    return complex(np.sum(_diag_generator(n_qubits, op.target, op.control) * np.diagonal(rho)))


def _adjoint_gradient(prog, angles, upstream, state, shared):
    # Reverse sweep carrying phi (forward state) and lam = O phi pulled back
    # through the remaining gates. Both are undone gate by gate via U(-t) = U^dagger.
    # d/dt <phi|O|phi> = 2 Re <lam| (-i/2) G |phi> = Im <lam|G|phi>
    n = prog.n_qubits
    phi = run_circuit(prog, angles, shared).amps if state is None else state.amps
    lam = upstream * phi
    grad = np.zeros_like(angles)
    for start, stop, fused in reversed(_segments(prog, angles, shared)):
        ops = prog.ops[start:stop]
        if fused:
            # Batch-reduced form: rho = sum_n phi_n lam_n^dagger evolves as U^dagger rho U.
            theta0 = angles[0]
            rho = phi.T @ np.conj(lam)
            for op in reversed(ops):
                theta = _op_angle(op, theta0)
                if op.param is not None:
                    grad[0, op.param] += _generator_trace(rho, op, n).imag
                rho = _apply(_apply(rho.T, op, n, -theta).T, op, n, theta)
            undo = np.conj(_segment_matrix(prog, start, stop, theta0)).T
            phi, lam = phi @ undo, lam @ undo
            continue
        for op in reversed(ops):
            theta = _op_angle(op, angles)
            if op.param is not None:
                overlap = np.sum(np.conj(lam) * _apply_generator(phi, op, n), axis=-1)
                grad[..., op.param] += overlap.imag
            phi = _apply(phi, op, n, -theta)
            lam = _apply(lam, op, n, -theta)
    return grad


# CRZ has generator eigenvalues {0, +-1}, so it needs the four-term rule.
_TWO_TERM = ((np.pi / 2, 0.5), (-np.pi / 2, -0.5))
_C_PLUS = (np.sqrt(2) + 1) / (4 * np.sqrt(2))
_C_MINUS = (np.sqrt(2) - 1) / (4 * np.sqrt(2))
_FOUR_TERM = (
    (np.pi / 2, _C_PLUS),
    (-np.pi / 2, -_C_PLUS),
    (3 * np.pi / 2, -_C_MINUS),
    (-3 * np.pi / 2, _C_MINUS),
)


def _shift_gradient(prog, angles, upstream):
    n = prog.n_qubits
    batch = angles.shape[0] if angles.ndim == 2 else None
    grad = np.zeros_like(angles)
    for j, shifted in enumerate(prog.ops):
        if shifted.param is None:
            continue
        rule = _FOUR_TERM if shifted.kind == "CRZ" else _TWO_TERM
        for delta, coeff in rule:
            amps = new_statevector(n, batch).amps
            for i, op in enumerate(prog.ops):
                theta = _op_angle(op, angles)
                amps = _apply(amps, op, n, theta + delta if i == j else theta)
            grad[..., shifted.param] += coeff * np.sum(upstream * np.abs(amps) ** 2, axis=-1)
    return grad


def gate_matrix(op: GateOp, n_qubits: int, angle: float) -> np.ndarray:
    """Full ``2^n x 2^n`` unitary of one gate, built from Kronecker products."""
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    rx = np.array([[c, -1j * s], [-1j * s, c]])
    rz = np.diag([np.exp(-0.5j * angle), np.exp(0.5j * angle)])
    eye = np.eye(2, dtype=complex)

    def kron_all(factors):
        out = np.ones((1, 1), dtype=complex)
        for f in factors:
            out = np.kron(out, f)
        return out

    if op.kind in ("RX", "RZ"):
        g = rx if op.kind == "RX" else rz
        return kron_all([g if q == op.target else eye for q in range(n_qubits)])
    p0 = np.diag([1.0, 0.0]).astype(complex)
    p1 = np.diag([0.0, 1.0]).astype(complex)
    off = kron_all([p0 if q == op.control else eye for q in range(n_qubits)])
    on = kron_all(
        [p1 if q == op.control else rz if q == op.target else eye for q in range(n_qubits)]
    )
    return off + on


def dense_matrix_oracle(prog: CircuitProgram, angles) -> np.ndarray:
    """Whole-circuit unitary by explicit matrix products. Test oracle only."""
    _check_capacity(prog.n_qubits, ORACLE_MAX_QUBITS)
    angles = _angle_matrix(prog, angles)
    if angles.ndim != 1:
        raise CircuitError("the dense oracle takes a single angle vector")
    u = np.eye(1 << prog.n_qubits, dtype=complex)
    for op in prog.ops:
        u = gate_matrix(op, prog.n_qubits, float(_op_angle(op, angles))) @ u
    return u
