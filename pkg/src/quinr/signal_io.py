"""Signal containers, loaders/writers and PSNR."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

VALUE_DOMAINS = ("u8_image", "float_range")
PSNR_SENTINEL = 99.0


class SignalError(ValueError):
    """Malformed or unsupported input signal."""


@dataclass
class SignalTensor:
    """``data`` has shape (H, W, C), float64, row-major and channel-interleaved."""

    data: np.ndarray
    value_domain: str = "u8_image"

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.size == 0:
            raise SignalError(f"signal must be a non-empty H x W x C array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise SignalError("signal contains non-finite values")
        if self.value_domain not in VALUE_DOMAINS:
            raise SignalError(f"value_domain must be one of {VALUE_DOMAINS}")
        self.data = data

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def pixels(self) -> int:
        return self.height * self.width


def load_image(path) -> SignalTensor:
    """8-bit grayscale or RGB PNG, scaled to [0, 1]."""
    try:
        with Image.open(path) as img:
            img.load()
            if img.format != "PNG":
                raise SignalError(f"{path}: expected a PNG, got {img.format}")
            if img.mode not in ("L", "RGB"):
                raise SignalError(
                    f"{path}: unsupported PNG mode {img.mode!r} (need 8-bit L or RGB)"
                )
            arr = np.asarray(img, dtype=np.uint8)
    except SignalError:
        raise
    except (OSError, ValueError) as exc:
        raise SignalError(f"{path}: cannot decode image: {exc}") from exc
    return SignalTensor(arr.astype(float) / 255.0, "u8_image")


def to_uint8(signal: SignalTensor) -> np.ndarray:
    return np.clip(np.rint(signal.data * 255.0), 0, 255).astype(np.uint8)


def save_image(signal: SignalTensor, path) -> None:
    arr = to_uint8(signal)
    if arr.shape[2] == 1:
        img = Image.fromarray(arr[:, :, 0], mode="L")
    elif arr.shape[2] == 3:
        img = Image.fromarray(arr, mode="RGB")
    else:
        raise SignalError(f"cannot write a {arr.shape[2]}-channel PNG")
    img.save(path, format="PNG")


def load_range_image(path, height: int, width: int) -> SignalTensor:
    """Raw little-endian float32 range image, row-major, one channel."""
    raw = Path(path).read_bytes()
    expected = 4 * height * width
    if height < 1 or width < 1:
        raise SignalError(f"range image dims must be positive, got {height}x{width}")
    if len(raw) != expected:
        raise SignalError(
            f"{path}: range image {height}x{width} needs {expected} bytes, file has {len(raw)}"
        )
    data = np.frombuffer(raw, dtype="<f4").reshape(height, width, 1)
    return SignalTensor(data.astype(float), "float_range")


def save_range_image(signal: SignalTensor, path) -> None:
    if signal.channels != 1:
        raise SignalError("range images have exactly one channel")
    Path(path).write_bytes(signal.data[:, :, 0].astype("<f4").tobytes())


def load_signal(path, range_dims: tuple[int, int] | None = None) -> SignalTensor:
    """Dispatch on suffix: ``.f32`` needs ``range_dims``; anything else is read as PNG."""
    if Path(path).suffix.lower() == ".f32":
        if range_dims is None:
            raise SignalError(f"{path}: range images need explicit height and width")
        return load_range_image(path, *range_dims)
    return load_image(path)


def save_signal(signal: SignalTensor, path) -> None:
    if Path(path).suffix.lower() == ".f32":
        save_range_image(signal, path)
    else:
        save_image(signal, path)


def psnr_peak(reference: SignalTensor) -> float:
    """1.0 for 8-bit images; the reference's dynamic range for range images."""
    if reference.value_domain == "u8_image":
        return 1.0
    span = float(reference.data.max() - reference.data.min())
    return span if span > 0 else 1.0


def psnr(a: SignalTensor, b: SignalTensor) -> float:
    """PSNR in dB with ``a`` as reference. Identical inputs give ``PSNR_SENTINEL``."""
    if a.data.shape != b.data.shape:
        raise SignalError(f"dimension mismatch: {a.data.shape} vs {b.data.shape}")
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return PSNR_SENTINEL
    return min(PSNR_SENTINEL, 10.0 * np.log10(psnr_peak(a) ** 2 / mse))
