import numpy as np
import pytest

from tryondit.autoencoder import Codec, CodecConfig
from tryondit.dataset import SynthConfig, render_sample
from tryondit.dit import DiTModel, ModelConfig
from tryondit.inference import token_dims_for_codec
from tryondit.text import TextEncoder


class TinyWorld:
    """Small invertible-codec setup shared by pipeline-level tests."""

    def __init__(self, seed=0, factor=4, size=(32, 32), d_model=16, n_samples=8):
        self.codec = Codec(CodecConfig(mode="invertible", factor=factor))
        din, dout = token_dims_for_codec(self.codec.cfg)
        self.model_cfg = ModelConfig(
            d_model=d_model,
            n_heads=2,
            n_mmdit=1,
            n_singledit=2,
            d_text=16,
            token_dim_in=din,
            token_dim_out=dout,
            rope_dims=(4, 4),
            seed=seed,
        )
        self.model = DiTModel(self.model_cfg)
        self.text_encoder = TextEncoder(vocab_size=256, max_tokens=16, d_text=16, seed=seed)
        synth = SynthConfig(n_samples=n_samples, seed=seed, size=size)
        self.samples = [render_sample(synth, i) for i in range(n_samples)]


@pytest.fixture()
def tiny_world():
    return TinyWorld()


@pytest.fixture()
def make_world():
    return TinyWorld
