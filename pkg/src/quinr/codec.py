"""The ``.qinr`` bitstream: header, model config, normalization metadata, parameters.

All fields little-endian::

    magic      4s   b"QINR"
    version    u8   1
    kind       u8   0 = quinr, 1 = siren
    dtype      u8   0 = fp32, 1 = fp16
    reserved   u8   0
    config     u16 * K    (K and field order depend on kind, see _U16_FIELDS)
    seeds      u64 * S    (quinr: shuffle_seed, init_seed; siren: init_seed)
    omega0     f32
    norm_meta  f32 * 2C   (value_min, value_peak) per channel, C = n_out
    n_params   u32
    payload    n_params values of dtype, in ParamStore order

The u16 block ends with the source height, width and value domain, so the
decoder can rebuild the coordinate grid without side information.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import ACTIVATIONS, SINE_CONVENTIONS
from .model import ModelConfig, SirenConfig, build_model, param_count
from .signal_io import VALUE_DOMAINS, SignalTensor
from .train import NormMeta, denormalize, grid_coords

MAGIC = b"QINR"
VERSION = 1
HEADER = struct.Struct("<4sBBBB")
KINDS = ("quinr", "siren")
DTYPES = {"fp32": np.dtype("<f4"), "fp16": np.dtype("<f2")}
DTYPE_CODES = ("fp32", "fp16")

_U16_FIELDS = {
    "quinr": (
        "n_in", "n_out", "n_qubits", "folds", "embed_size", "layers", "blocks",
        "activation", "sine_convention", "head_affine", "height", "width", "value_domain",
    ),
    "siren": ("n_in", "n_out", "hidden_width", "hidden_layers", "height", "width", "value_domain"),
}
_SEED_FIELDS = {"quinr": ("shuffle_seed", "init_seed"), "siren": ("init_seed",)}


class CodecError(ValueError):
    pass


class BadMagicError(CodecError):
    pass


class UnsupportedVersionError(CodecError):
    pass


class TruncatedStreamError(CodecError):
    pass


class ParamCountMismatchError(CodecError):
    pass


@dataclass
class EncodedModel:
    config: ModelConfig | SirenConfig
    norm_meta: NormMeta
    params: np.ndarray
    dtype: str = "fp32"

    @property
    def kind(self) -> str:
        return self.config.kind

    def model(self):
        return build_model(self.config, self.params)


def _u16_values(config, meta: NormMeta) -> list[int]:
    extra = {
        "height": meta.height,
        "width": meta.width,
        "value_domain": VALUE_DOMAINS.index(meta.value_domain),
    }
    if isinstance(config, ModelConfig):
        extra["activation"] = ACTIVATIONS.index(config.activation)
        extra["sine_convention"] = SINE_CONVENTIONS.index(config.sine_convention)
        extra["head_affine"] = int(config.head_affine)
    return [int(extra[f]) if f in extra else int(getattr(config, f)) for f in _U16_FIELDS[config.kind]]


def header_size(kind: str, channels: int) -> int:
    """Bytes before the parameter payload."""
    return (
        HEADER.size + 2 * len(_U16_FIELDS[kind]) + 8 * len(_SEED_FIELDS[kind]) + 4 + 8 * channels + 4
    )


def quantize(values: np.ndarray, dtype: str) -> np.ndarray:
    if dtype not in DTYPES:
        raise CodecError(f"unsupported dtype {dtype!r}; choose from {tuple(DTYPES)}")
    with np.errstate(over="ignore"):
        q = np.asarray(values, dtype=float).astype(DTYPES[dtype])
    if not np.all(np.isfinite(q)):
        raise CodecError(f"parameters overflow {dtype}")
    return q


def serialize(model, norm_meta: NormMeta, dtype: str = "fp32") -> bytes:
    config = model.config
    if norm_meta.channels != config.n_out:
        raise CodecError(
            f"norm_meta has {norm_meta.channels} channels, model has {config.n_out} outputs"
        )
    for name, value in (("height", norm_meta.height), ("width", norm_meta.width)):
        if not 1 <= value <= 0xFFFF:
            raise CodecError(f"{name}={value} does not fit the u16 header field")
    payload = quantize(model.params.values, dtype)
    kind = config.kind
    parts = [
        HEADER.pack(MAGIC, VERSION, KINDS.index(kind), DTYPE_CODES.index(dtype), 0),
        struct.pack(f"<{len(_U16_FIELDS[kind])}H", *_u16_values(config, norm_meta)),
        struct.pack(f"<{len(_SEED_FIELDS[kind])}Q", *(getattr(config, f) for f in _SEED_FIELDS[kind])),
        struct.pack("<f", config.omega0),
        np.stack([norm_meta.value_min, norm_meta.value_peak], axis=1).astype("<f4").tobytes(),
        struct.pack("<I", payload.size),
        payload.tobytes(),
    ]
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedStreamError(
                f"truncated stream reading {what}: need {self.pos + n} bytes, have {len(self.data)}"
            )
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def deserialize(data: bytes) -> EncodedModel:
    r = _Reader(bytes(data))
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, kind_code, dtype_code, _reserved = r.unpack("<BBBB", "header")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported format version {version}; only {VERSION} is known")
    if kind_code >= len(KINDS):
        raise CodecError(f"unknown model kind code {kind_code}")
    if dtype_code >= len(DTYPE_CODES):
        raise CodecError(f"unknown dtype code {dtype_code}")
    kind, dtype = KINDS[kind_code], DTYPE_CODES[dtype_code]

    names = _U16_FIELDS[kind]
    fields = dict(zip(names, r.unpack(f"<{len(names)}H", "config block")))
    seeds = dict(zip(_SEED_FIELDS[kind], r.unpack(f"<{len(_SEED_FIELDS[kind])}Q", "seeds")))
    (omega0,) = r.unpack("<f", "omega0")
    height, width = fields.pop("height"), fields.pop("width")
    domain_code = fields.pop("value_domain")
    try:
        value_domain = VALUE_DOMAINS[domain_code]
        if kind == "quinr":
            fields["activation"] = ACTIVATIONS[fields["activation"]]
            fields["sine_convention"] = SINE_CONVENTIONS[fields["sine_convention"]]
            fields["head_affine"] = bool(fields["head_affine"])
            config = ModelConfig(omega0=float(omega0), **fields, **seeds)
        else:
            config = SirenConfig(omega0=float(omega0), **fields, **seeds)
    except (IndexError, ValueError) as exc:
        raise CodecError(f"invalid model configuration in stream: {exc}") from exc

    meta_raw = np.frombuffer(r.take(8 * config.n_out, "norm_meta"), dtype="<f4").astype(float)
    meta = NormMeta(meta_raw[0::2].copy(), meta_raw[1::2].copy(), height, width, value_domain)
    (n_params,) = r.unpack("<I", "parameter count")
    expected = param_count(config)
    if n_params != expected:
        raise ParamCountMismatchError(
            f"stream declares {n_params} parameters, configuration implies {expected}"
        )
    itemsize = DTYPES[dtype].itemsize
    remaining = len(r.data) - r.pos
    if remaining < n_params * itemsize:
        raise TruncatedStreamError(
            f"truncated payload: expected {n_params * itemsize} bytes, got {remaining}"
        )
    if remaining > n_params * itemsize:
        raise CodecError(f"{remaining - n_params * itemsize} trailing bytes after payload")
    payload = np.frombuffer(r.take(n_params * itemsize, "payload"), dtype=DTYPES[dtype])
    return EncodedModel(config, meta, payload.astype(float), dtype)


def reconstruct(model, meta: NormMeta) -> SignalTensor:
    """Full-grid forward pass, denormalized and reshaped to the source layout."""
    pred = model.forward(grid_coords(meta.height, meta.width))
    return denormalize(pred, meta)


def decode(data: bytes) -> SignalTensor:
    encoded = deserialize(data)
    return reconstruct(encoded.model(), encoded.norm_meta)


def bpp(encoded_byte_len: int, pixels: int) -> float:
    if pixels < 1:
        raise ValueError("bits per pixel needs at least one pixel")
    return 8.0 * encoded_byte_len / pixels
