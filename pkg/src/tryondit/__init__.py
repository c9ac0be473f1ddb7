"""Desk-scale virtual try-on: a rectified-flow diffusion transformer over
width-concatenated garment/person images, with paste-back inpainting,
selective attention-only fine-tuning, and integrated image-text captions.
"""

__version__ = "0.1.0"

from .autoencoder import Codec, CodecConfig
from .core import (
    PackedTokens,
    apply_mask,
    build_pair_mask,
    concat_width,
    crop_right_half,
    depth_to_space,
    pack,
    space_to_depth,
    unpack,
)
from .dataset import SynthConfig, TryOnSample, generate_synthetic, load_dataset, split
from .dit import DiTModel, ModelConfig, TrainableSelection, select_trainable
from .inference import InferenceConfig, denoise_loop, postprocess, prepare_inputs, try_on
from .metrics import MetricReport, extract_features, fid, kid, masked_error, ssim
from .text import Caption, TextEncoder, build_integrated_caption, drop_caption, tokenize
from .training import TrainConfig, Trainer, rf_interpolate, rf_target, train

__all__ = [
    "Codec",
    "CodecConfig",
    "PackedTokens",
    "apply_mask",
    "build_pair_mask",
    "concat_width",
    "crop_right_half",
    "depth_to_space",
    "pack",
    "space_to_depth",
    "unpack",
    "SynthConfig",
    "TryOnSample",
    "generate_synthetic",
    "load_dataset",
    "split",
    "DiTModel",
    "ModelConfig",
    "TrainableSelection",
    "select_trainable",
    "InferenceConfig",
    "denoise_loop",
    "postprocess",
    "prepare_inputs",
    "try_on",
    "MetricReport",
    "extract_features",
    "fid",
    "kid",
    "masked_error",
    "ssim",
    "Caption",
    "TextEncoder",
    "build_integrated_caption",
    "drop_caption",
    "tokenize",
    "TrainConfig",
    "Trainer",
    "rf_interpolate",
    "rf_target",
    "train",
]
