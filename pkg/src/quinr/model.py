"""quINR hybrid network and the SIREN (COIN-style) baseline.

quINR pipeline for a batch of coordinates ``x``:

1. ``h = sin(omega0 * W x + b)``, an embedding of width ``M = n_qubits * folds``.
2. For each block: folded-angle embedding of ``h`` (permuted per block), then
   ``layers`` entangling layers with trainable angles.
3. Measure all ``2**n_qubits`` probabilities and keep the last ``n_out``.
4. Optional per-channel affine head, then the output activation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import qsim
from .autodiff import (
    ACTIVATIONS,
    SINE_CONVENTIONS,
    ParamStore,
    Tape,
    activation,
    affine_head,
    linear,
    linear_sine,
)

U16_MAX = 0xFFFF
U64_MAX = 0xFFFF_FFFF_FFFF_FFFF
# Keeps the simulator cost per coordinate sane; well inside qsim.MAX_QUBITS.
MODEL_MAX_QUBITS = 12


class ConfigError(ValueError):
    pass


def _check_u16(name: str, value: int, minimum: int) -> None:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if not minimum <= value <= U16_MAX:
        raise ConfigError(f"{name} must be in [{minimum}, {U16_MAX}], got {value}")


def _check_seed(name: str, value: int) -> None:
    if not isinstance(value, (int, np.integer)) or not 0 <= value <= U64_MAX:
        raise ConfigError(f"{name} must be an unsigned 64-bit integer, got {value!r}")


@dataclass(frozen=True)
class ModelConfig:
    n_in: int = 2
    n_out: int = 1
    n_qubits: int = 4
    folds: int = 3
    embed_size: int | None = None
    layers: int = 2
    blocks: int = 2
    omega0: float = 30.0
    shuffle_seed: int = 0
    init_seed: int = 0
    activation: str = "qrelu"
    sine_convention: str = "literal"
    head_affine: bool = True

    kind = "quinr"

    def __post_init__(self):
        if self.embed_size is None:
            object.__setattr__(self, "embed_size", self.n_qubits * self.folds)
        _check_u16("n_in", self.n_in, 1)
        _check_u16("n_out", self.n_out, 1)
        _check_u16("folds", self.folds, 1)
        _check_u16("layers", self.layers, 1)
        _check_u16("blocks", self.blocks, 1)
        _check_u16("embed_size", self.embed_size, 1)
        if not isinstance(self.n_qubits, (int, np.integer)) or not 2 <= self.n_qubits <= MODEL_MAX_QUBITS:
            raise ConfigError(
                f"n_qubits must be in [2, {MODEL_MAX_QUBITS}] (entangling layers need two qubits), "
                f"got {self.n_qubits!r}"
            )
        if self.embed_size != self.n_qubits * self.folds:
            raise ConfigError(
                f"embedding size M={self.embed_size} must equal n_qubits*folds "
                f"= {self.n_qubits}*{self.folds} = {self.n_qubits * self.folds}"
            )
        if self.n_out > 1 << self.n_qubits:
            raise ConfigError(
                f"n_out={self.n_out} exceeds the {1 << self.n_qubits} measurable states"
            )
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if self.sine_convention not in SINE_CONVENTIONS:
            raise ConfigError(
                f"sine_convention must be one of {SINE_CONVENTIONS}, got {self.sine_convention!r}"
            )
        if not np.isfinite(self.omega0):
            raise ConfigError("omega0 must be finite")
        _check_seed("shuffle_seed", self.shuffle_seed)
        _check_seed("init_seed", self.init_seed)


@dataclass(frozen=True)
class SirenConfig:
    """Sine MLP: ``hidden_layers`` sine layers of ``hidden_width``, then a linear layer."""

    n_in: int = 2
    n_out: int = 1
    hidden_width: int = 10
    hidden_layers: int = 2
    omega0: float = 30.0
    init_seed: int = 0

    kind = "siren"

    def __post_init__(self):
        _check_u16("n_in", self.n_in, 1)
        _check_u16("n_out", self.n_out, 1)
        _check_u16("hidden_width", self.hidden_width, 1)
        _check_u16("hidden_layers", self.hidden_layers, 0)
        if not np.isfinite(self.omega0):
            raise ConfigError("omega0 must be finite")
        _check_seed("init_seed", self.init_seed)


def entangling_size(n_qubits: int) -> int:
    return 4 * n_qubits + n_qubits * (n_qubits - 1)


def build_folded_embedding(n_qubits: int, folds: int, offset: int = 0) -> list[qsim.GateOp]:
    """Rounds of one rotation per qubit, alternating RX (even rounds) and RZ (odd)."""
    if n_qubits < 1 or folds < 1:
        raise ConfigError("folded embedding needs n_qubits >= 1 and folds >= 1")
    ops = []
    for r in range(folds):
        kind = "RX" if r % 2 == 0 else "RZ"
        for q in range(n_qubits):
            ops.append(qsim.GateOp(kind, q, param=offset + r * n_qubits + q))
    return ops


def build_entangling_layer(n_qubits: int, offset: int = 0) -> list[qsim.GateOp]:
    """RZ,RX per qubit; CRZ on every ordered (control, target) pair; RZ,RX per qubit."""
    if n_qubits < 2:
        raise ConfigError("an entangling layer needs at least 2 qubits")
    ops = []
    k = offset

    def rot(kind, q, control=None):
        nonlocal k
        ops.append(qsim.GateOp(kind, q, control=control, param=k))
        k += 1

    for q in range(n_qubits):
        rot("RZ", q)
        rot("RX", q)
    for c in range(n_qubits):
        for t in range(n_qubits):
            if t != c:
                rot("CRZ", t, control=c)
    for q in range(n_qubits):
        rot("RZ", q)
        rot("RX", q)
    return ops


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & U64_MAX
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & U64_MAX
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & U64_MAX
    return x ^ (x >> 31)


def block_permutation(size: int, seed: int, block: int) -> np.ndarray:
    """Fisher-Yates shuffle driven by a counter-based hash of (seed, block, step).

    Block 0 is always the identity.
    """
    perm = np.arange(size)
    if block == 0:
        return perm
    key = _splitmix64(seed ^ _splitmix64(block))
    for i in range(size - 1, 0, -1):
        j = _splitmix64(key ^ _splitmix64(i)) % (i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def param_count(config: ModelConfig | SirenConfig) -> int:
    if isinstance(config, SirenConfig):
        return sum(int(np.prod(s)) for _, s in _siren_layout(config))
    quantum = config.blocks * config.layers * entangling_size(config.n_qubits)
    classical = config.embed_size * config.n_in + config.embed_size
    return classical + quantum + (2 * config.n_out if config.head_affine else 0)


def _quinr_layout(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    layout = [
        ("W", (config.embed_size, config.n_in)),
        ("b", (config.embed_size,)),
        ("quantum_angles", (config.blocks * config.layers * entangling_size(config.n_qubits),)),
    ]
    if config.head_affine:
        layout += [("out_scale", (config.n_out,)), ("out_bias", (config.n_out,))]
    return layout


def _siren_layout(config: SirenConfig) -> list[tuple[str, tuple[int, ...]]]:
    widths = [config.n_in] + [config.hidden_width] * config.hidden_layers + [config.n_out]
    layout = []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        layout += [(f"W{i}", (fan_out, fan_in)), (f"b{i}", (fan_out,))]
    return layout


@dataclass
class QuinrModel:
    config: ModelConfig
    params: ParamStore | None = None
    circuit: qsim.CircuitProgram = field(init=False)
    block_permutations: list[np.ndarray] = field(init=False)

    def __post_init__(self):
        cfg = self.config
        m, e = cfg.embed_size, entangling_size(cfg.n_qubits)
        ops, self._embed_idx, self._trainable_idx = [], [], []
        offset = 0
        for _ in range(cfg.blocks):
            ops += build_folded_embedding(cfg.n_qubits, cfg.folds, offset)
            self._embed_idx.append(np.arange(offset, offset + m))
            offset += m
            for _ in range(cfg.layers):
                ops += build_entangling_layer(cfg.n_qubits, offset)
                self._trainable_idx.append(np.arange(offset, offset + e))
                offset += e
        self.circuit = qsim.CircuitProgram(cfg.n_qubits, ops, offset)
        self._trainable_idx = np.concatenate(self._trainable_idx)
        self._shared = np.zeros(offset, dtype=bool)
        self._shared[self._trainable_idx] = True
        self.block_permutations = [
            block_permutation(m, cfg.shuffle_seed, b) for b in range(cfg.blocks)
        ]
        if self.params is None:
            self.params = init_params(cfg)
        elif len(self.params) != param_count(cfg):
            raise ConfigError(
                f"parameter store has {len(self.params)} values, config needs {param_count(cfg)}"
            )

    @property
    def n_out(self) -> int:
        return self.config.n_out

    def circuit_angles(self, h: np.ndarray) -> np.ndarray:
        """Full per-sample angle matrix from embeddings ``h`` of shape (N, M)."""
        angles = np.empty((h.shape[0], self.circuit.n_angles))
        for idx, perm in zip(self._embed_idx, self.block_permutations):
            angles[:, idx] = h[:, perm]
        angles[:, self._trainable_idx] = self.params["quantum_angles"]
        return angles

    def readout(self, probs: np.ndarray, tape: Tape | None = None) -> np.ndarray:
        """Last ``n_out`` probabilities through the head and activation."""
        dim = probs.shape[-1]
        y = probs[:, dim - self.n_out:]
        if tape is not None:
            def select_backward(gy):
                g = np.zeros((gy.shape[0], dim))
                g[:, dim - self.n_out:] = gy
                return g

            tape.push(select_backward)
        if self.config.head_affine:
            y = affine_head(y, self.params, "out_scale", "out_bias", tape)
        return activation(y, self.config.activation, tape)

    def forward(self, x, tape: Tape | None = None) -> np.ndarray:
        """Predictions of shape (N, n_out) for coordinates of shape (N, n_in).

        A single coordinate vector is accepted and gives shape (n_out,).
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        cfg = self.config
        h = linear_sine(x, self.params, "W", "b", cfg.omega0, cfg.sine_convention, tape)
        angles = self.circuit_angles(h)
        state = qsim.run_circuit(self.circuit, angles, self._shared)
        probs = qsim.probabilities(state)
        if tape is not None:
            tape.push(lambda gp: self._circuit_backward(angles, state, gp))
        y = self.readout(probs, tape)
        return y[0] if single else y

    def _circuit_backward(self, angles, state, gprobs):
        g = qsim.circuit_gradient(self.circuit, angles, gprobs, state=state, shared=self._shared)
        self.params.grad("quantum_angles")[...] += g[:, self._trainable_idx].sum(axis=0)
        gh = np.zeros((angles.shape[0], self.config.embed_size))
        for idx, perm in zip(self._embed_idx, self.block_permutations):
            gh[:, perm] += g[:, idx]
        return gh


@dataclass
class SirenModel:
    config: SirenConfig
    params: ParamStore | None = None

    def __post_init__(self):
        if self.params is None:
            self.params = init_params(self.config)
        elif len(self.params) != param_count(self.config):
            raise ConfigError(
                f"parameter store has {len(self.params)} values, config needs {param_count(self.config)}"
            )

    @property
    def n_out(self) -> int:
        return self.config.n_out

    def forward(self, x, tape: Tape | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        y = np.atleast_2d(x)
        last = self.config.hidden_layers
        for i in range(last):
            y = linear_sine(y, self.params, f"W{i}", f"b{i}", self.config.omega0, "siren", tape)
        y = linear(y, self.params, f"W{last}", f"b{last}", tape)
        return y[0] if single else y


def siren_forward(model: SirenModel, x) -> np.ndarray:
    return model.forward(x)


def init_params(config: ModelConfig | SirenConfig) -> ParamStore:
    rng = np.random.default_rng(config.init_seed)
    if isinstance(config, SirenConfig):
        store = ParamStore(_siren_layout(config))
        for i in range(config.hidden_layers + 1):
            fan_out, fan_in = store.shapes[f"W{i}"]
            bound = 1.0 / fan_in if i == 0 else np.sqrt(6.0 / fan_in) / config.omega0
            store[f"W{i}"] = rng.uniform(-bound, bound, (fan_out, fan_in))
            store[f"b{i}"] = rng.uniform(-1.0, 1.0, fan_out) / np.sqrt(fan_in)
        return store
    store = ParamStore(_quinr_layout(config))
    # omega0 * W starts in [-1/n_in, 1/n_in]: a low-frequency embedding the
    # circuit can fit before training pushes frequencies up.
    bound = 1.0 / (config.n_in * abs(config.omega0)) if config.omega0 else 1.0 / config.n_in
    store["W"] = rng.uniform(-bound, bound, store.shapes["W"])
    store["b"] = 0.0
    store["quantum_angles"] = rng.uniform(0.0, 2 * np.pi, store.shapes["quantum_angles"])
    if config.head_affine:
        store["out_scale"] = (1 << config.n_qubits) / config.n_out
        store["out_bias"] = 0.0
    return store


def build_model(config: ModelConfig | SirenConfig, values=None) -> QuinrModel | SirenModel:
    if isinstance(config, SirenConfig):
        layout, cls = _siren_layout(config), SirenModel
    else:
        layout, cls = _quinr_layout(config), QuinrModel
    params = None if values is None else ParamStore(layout, values)
    return cls(config, params)
