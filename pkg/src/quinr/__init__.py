"""Hybrid quantum-classical implicit neural representations for signal compression."""
from .codec import decode, deserialize, serialize
from .model import ModelConfig, QuinrModel, SirenConfig, SirenModel, build_model, param_count
from .signal_io import SignalTensor, load_image, load_range_image, psnr
from .train import TrainOptions, build_dataset, encode, evaluate

__all__ = [
    "ModelConfig", "QuinrModel", "SirenConfig", "SirenModel", "SignalTensor", "TrainOptions",
    "build_dataset", "build_model", "decode", "deserialize", "encode", "evaluate",
    "load_image", "load_range_image", "param_count", "psnr", "serialize",
]
