"""The try-on pipeline: input preparation, Euler denoising, postprocess.

``prepare_inputs`` is the single source of truth for preprocessing — the
training loop consumes the exact same function, so there is no train/test
skew. The denoising loop integrates the learned velocity field from t=1
(pure noise) to t=0 with uniform Euler steps; because the flow paths are
straight lines, an exact velocity field makes Euler exact regardless of
step count, which the tests exploit with an injected oracle.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autoencoder import Codec, CodecConfig
from .core import (
    PackedTokens,
    apply_mask,
    build_pair_mask,
    check_image,
    check_mask,
    concat_width,
    crop_right_half,
    pack,
    space_to_depth,
    unpack,
)
from .dit import DiTModel, grid_coords
from .text import (
    EMPTY_CAPTION,
    ORDINARY_CAPTION,
    Caption,
    TextEncoder,
    TextEncoding,
    build_integrated_caption,
)

CAPTION_MODES = ("integrated", "ordinary", "none")


@dataclass(frozen=True)
class InferenceConfig:
    num_steps: int = 28
    guidance: float = 30.0
    seed: int = 0
    paste_back: bool = True
    caption_mode: str = "integrated"

    def __post_init__(self):
        if self.num_steps < 1:
            raise ValueError(f"num_steps must be >= 1; got {self.num_steps}")
        if self.guidance < 0:
            raise ValueError(f"guidance must be >= 0; got {self.guidance}")
        if self.caption_mode not in CAPTION_MODES:
            raise ValueError(f"caption_mode must be one of {CAPTION_MODES}")


@dataclass(frozen=True)
class PreparedInputs:
    """Token-space inputs for one sample."""

    noise: PackedTokens      # z_T at inference; the eps draw during training
    p_masked: PackedTokens   # packed latent of the masked garment/person pair
    p_om: PackedTokens       # packed space-to-depth mask tokens
    text: TextEncoding
    coords: np.ndarray       # (n_tokens, 2) rotary grid coordinates
    clean: PackedTokens | None = None  # packed latent of the unmasked pair

    @property
    def token_dim_in(self) -> int:
        return self.noise.token_dim + self.p_masked.token_dim + self.p_om.token_dim


def token_dims_for_codec(codec_cfg: CodecConfig) -> tuple[int, int]:
    """(token_dim_in, token_dim_out) the transformer must be built with."""
    c = codec_cfg.c_lat
    return 8 * c + 4 * codec_cfg.factor**2, 4 * c


def resolve_caption(sample_garment: str, sample_person: str, mode: str) -> Caption:
    if mode == "integrated":
        return build_integrated_caption(sample_garment, sample_person)
    if mode == "ordinary":
        return Caption(ORDINARY_CAPTION, is_integrated=False)
    if mode == "none":
        return EMPTY_CAPTION
    raise ValueError(f"caption_mode must be one of {CAPTION_MODES}")


def prepare_inputs(
    garment: np.ndarray,
    person: np.ndarray,
    mask: np.ndarray,
    caption: Caption,
    codec: Codec,
    text_encoder: TextEncoder,
    rng: np.random.Generator,
    include_clean: bool = False,
    dtype=np.float32,
) -> PreparedInputs:
    """Run the exact preprocessing chain:

    concat_width -> build_pair_mask -> apply_mask -> encode -> pack for the
    context stream; space_to_depth(mask, f) -> pack for the mask stream;
    one seeded standard-normal draw in token space; text encoding.
    """
    check_image(garment, "garment")
    check_image(person, "person")
    check_mask(mask, "mask")
    pair = concat_width(garment, person)
    m_op = build_pair_mask(mask)
    masked = apply_mask(pair, m_op)
    p_masked = pack(codec.encode(masked).astype(dtype))
    x_om = space_to_depth(m_op, codec.cfg.factor).astype(dtype)
    p_om = pack(x_om)
    noise_vals = rng.standard_normal(p_masked.values.shape, dtype=dtype)
    noise = PackedTokens(values=noise_vals, grid_shape=p_masked.grid_shape)
    lh, lw = p_masked.grid_shape
    coords = grid_coords(lh // 2, lw // 2)
    text = text_encoder.encode_caption(caption)
    clean = pack(codec.encode(pair).astype(dtype)) if include_clean else None
    return PreparedInputs(
        noise=noise, p_masked=p_masked, p_om=p_om, text=text, coords=coords, clean=clean
    )


VelocityFn = Callable[[np.ndarray, float], np.ndarray]
"""(z_tokens (n, 4c), t) -> velocity tokens (n, 4c)."""


def model_velocity_fn(
    model: DiTModel, inputs: PreparedInputs, guidance: float
) -> VelocityFn:
    """Bind the transformer to one sample's conditioning streams."""
    ctx = np.concatenate([inputs.p_masked.values, inputs.p_om.values], axis=1)
    text = inputs.text

    def fn(z: np.ndarray, t: float) -> np.ndarray:
        tokens = np.concatenate([z, ctx], axis=1)[None]
        out = model.forward(
            tokens,
            inputs.coords,
            text.sequence[None],
            np.array([text.length]),
            text.pooled[None],
            np.array([t]),
            np.array([guidance]),
        )
        return out.data[0]

    return fn


def denoise_loop(
    velocity_fn: VelocityFn, inputs: PreparedInputs, cfg: InferenceConfig
) -> PackedTokens:
    """Integrate from t=1 to t=0 over cfg.num_steps uniform Euler steps.

    The conditioning streams are fixed; only the noisy state advances.
    Raises RuntimeError with the step index if the state stops being finite.
    """
    z = inputs.noise.values.copy()
    n = cfg.num_steps
    for i in range(n):
        t_cur = 1.0 - i / n
        t_next = 1.0 - (i + 1) / n
        v = velocity_fn(z, t_cur)
        if not np.isfinite(v).all():
            raise RuntimeError(f"non-finite velocity at denoise step {i} (t={t_cur:.4f})")
        z = z + (t_next - t_cur) * v
    return PackedTokens(values=z, grid_shape=inputs.noise.grid_shape)


def postprocess(
    z0: PackedTokens,
    original_person: np.ndarray,
    mask: np.ndarray,
    codec: Codec,
    paste_back: bool = True,
) -> np.ndarray:
    """unpack -> decode -> crop right half -> optional paste-back compositing."""
    check_image(original_person, "person")
    check_mask(mask, "mask")
    pair = codec.decode(unpack(z0))
    generated = crop_right_half(pair)
    if generated.shape != original_person.shape:
        raise ValueError(
            f"decoded person {generated.shape} does not match original {original_person.shape}"
        )
    if not paste_back:
        return generated
    return mask * generated + (1.0 - mask) * original_person


def try_on(
    garment: np.ndarray,
    person: np.ndarray,
    mask: np.ndarray,
    caption: Caption,
    model: DiTModel,
    codec: Codec,
    text_encoder: TextEncoder,
    cfg: InferenceConfig,
    return_panel: bool = False,
):
    """Full pipeline for one sample; deterministic given (inputs, weights, cfg).

    With return_panel=True also returns the decoded two-panel canvas for
    side-by-side inspection.
    """
    din, dout = token_dims_for_codec(codec.cfg)
    if din != model.cfg.token_dim_in or dout != model.cfg.token_dim_out:
        raise ValueError(
            "checkpoint/codec shape mismatch: codec implies token dims "
            f"(in={din}, out={dout}) but model is configured with "
            f"(in={model.cfg.token_dim_in}, out={model.cfg.token_dim_out})"
        )
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x1F]))
    inputs = prepare_inputs(garment, person, mask, caption, codec, text_encoder, rng)
    z0 = denoise_loop(model_velocity_fn(model, inputs, cfg.guidance), inputs, cfg)
    result = postprocess(z0, person, mask, codec, paste_back=cfg.paste_back)
    if not return_panel:
        return result
    panel = codec.decode(unpack(z0))
    return result, panel
