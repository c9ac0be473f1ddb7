"""Toy diffusion transformer: dual-stream blocks with joint attention,
then single-stream blocks with parallel attention/MLP branches.

Layout of one forward pass:

    input projection -> n_mmdit dual-stream blocks -> stream concat
    -> n_singledit single-stream blocks -> modulated layer-norm -> head

Conditioning is a single vector per sample: timestep embedding +
guidance embedding + projected pooled text. Every block reads it through
a per-block modulation linear producing shift/scale/gate terms.

Image tokens carry 2-D rotary positions on the token grid of the full
concatenated canvas, so garment-side and person-side tokens share one
coordinate frame; text tokens sit at position (0, 0), where the rotation
is the identity.

Parameter names (the checkpoint/selection contract):

    proj_in.{weight,bias}                 token_dim_in -> d_model
    txt_in.{weight,bias}                  d_text -> d_model
    time_mlp.{0,1}.{weight,bias}          sinusoid features -> d_model
    guid_mlp.{0,1}.{weight,bias}          sinusoid features -> d_model
    pooled_proj.{weight,bias}             d_text -> d_model
    mmdit.<i>.attn.{img,txt}.{q,k,v,o}.{weight,bias}
    mmdit.<i>.mod.{img,txt}.{weight,bias}      d_model -> 6*d_model
    mmdit.<i>.mlp.{img,txt}.{0,1}.{weight,bias}
    single.<i>.attn.{q,k,v,o}.{weight,bias}
    single.<i>.mod.{weight,bias}               d_model -> 3*d_model
    single.<i>.mlp.{0,1}.{weight,bias}
    final.mod.{weight,bias}                    d_model -> 2*d_model
    head.{weight,bias}                         d_model -> token_dim_out

Modulation output chunk order is [shift, scale, gate] per branch
(attention branch first in dual-stream blocks).
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Var

_ATTN_RE = {
    "all_attention": re.compile(r"^(mmdit|single)\.\d+\.attn\."),
    "mmdit_attention": re.compile(r"^mmdit\.\d+\.attn\."),
    "singledit_attention": re.compile(r"^single\.\d+\.attn\."),
}
TRAINABLE_MODES = ("all_attention", "mmdit_attention", "singledit_attention", "full")


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 64
    n_heads: int = 4
    n_mmdit: int = 2
    n_singledit: int = 4
    d_text: int = 64
    token_dim_in: int = 384
    token_dim_out: int = 64
    rope_dims: tuple[int, int] = (8, 8)
    mlp_ratio: int = 4
    init_std: float = 0.02
    head_init_std: float = 0.15
    gate_bias_init: float = 1.0
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if sum(self.rope_dims) != self.head_dim:
            raise ValueError(
                f"rope_dims {self.rope_dims} must sum to head dim {self.head_dim}"
            )
        if any(d % 2 for d in self.rope_dims):
            raise ValueError(f"rope_dims entries must be even; got {self.rope_dims}")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32


@dataclass(frozen=True)
class TrainableSelection:
    mode: str
    parameter_paths: tuple[str, ...]

    def __contains__(self, name: str) -> bool:
        return name in set(self.parameter_paths)


# -- initialization -----------------------------------------------------------


def _trunc_normal(rng, shape, std, dtype):
    return np.clip(rng.standard_normal(shape) * std, -2 * std, 2 * std).astype(dtype)


def init_params(cfg: ModelConfig) -> dict[str, Var]:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xD17]))
    d, dt = cfg.d_model, cfg.np_dtype
    params: dict[str, Var] = {}

    def linear(name, d_in, d_out, gate_rows: tuple[int, int] | None = None, std=None):
        w = _trunc_normal(rng, (d_in, d_out), std or cfg.init_std, dt)
        b = np.zeros(d_out, dtype=dt)
        if gate_rows is not None:
            # gates start at gate_bias_init so attention branches carry
            # gradient even when the modulation layers themselves are frozen
            for start in range(gate_rows[0], d_out, gate_rows[1]):
                b[start : start + d] = cfg.gate_bias_init
        params[f"{name}.weight"] = Var(w)
        params[f"{name}.bias"] = Var(b)

    linear("proj_in", cfg.token_dim_in, d)
    linear("txt_in", cfg.d_text, d)
    linear("time_mlp.0", d, d)
    linear("time_mlp.1", d, d)
    linear("guid_mlp.0", d, d)
    linear("guid_mlp.1", d, d)
    linear("pooled_proj", cfg.d_text, d)
    for i in range(cfg.n_mmdit):
        for s in ("img", "txt"):
            for proj in ("q", "k", "v", "o"):
                linear(f"mmdit.{i}.attn.{s}.{proj}", d, d)
            linear(f"mmdit.{i}.mod.{s}", d, 6 * d, gate_rows=(2 * d, 3 * d))
            linear(f"mmdit.{i}.mlp.{s}.0", d, cfg.mlp_ratio * d)
            linear(f"mmdit.{i}.mlp.{s}.1", cfg.mlp_ratio * d, d)
    for i in range(cfg.n_singledit):
        for proj in ("q", "k", "v", "o"):
            linear(f"single.{i}.attn.{proj}", d, d)
        linear(f"single.{i}.mod", d, 3 * d, gate_rows=(2 * d, 3 * d))
        linear(f"single.{i}.mlp.0", d, cfg.mlp_ratio * d)
        linear(f"single.{i}.mlp.1", cfg.mlp_ratio * d, d)
    linear("final.mod", d, 2 * d)
    # the head must start wide enough that layer-normed features can span
    # the velocity scale even when the head itself is frozen
    linear("head", d, cfg.token_dim_out, std=cfg.head_init_std)
    return params


def zero_residual_gates(params: dict[str, Var], cfg: ModelConfig) -> None:
    """Zero every block's gate rows in place; blocks become identity maps."""
    d = cfg.d_model
    for name, p in params.items():
        if ".mod" not in name:
            continue
        n_chunks = p.data.shape[-1] // d
        if n_chunks < 3:
            continue  # final.mod has no gate
        for start in range(2 * d, n_chunks * d, 3 * d):
            if p.data.ndim == 2:
                p.data[:, start : start + d] = 0
            else:
                p.data[start : start + d] = 0


# -- conditioning --------------------------------------------------------------


def sinusoid_features(x: np.ndarray, dim: int, scale: float) -> np.ndarray:
    """Fixed log-spaced sin/cos features of a scalar batch, (B,) -> (B, dim)."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half, dtype=np.float64) / half)
    args = np.asarray(x, dtype=np.float64)[:, None] * scale * freqs[None, :]
    return np.concatenate([np.cos(args), np.sin(args)], axis=1)


def _linear(params, name: str, x: Var) -> Var:
    return ag.matmul(x, params[f"{name}.weight"]) + params[f"{name}.bias"]


def _two_layer(params, name: str, feats: Var) -> Var:
    return _linear(params, f"{name}.1", ag.silu(_linear(params, f"{name}.0", feats)))


def timestep_embedding(params, cfg: ModelConfig, t: np.ndarray) -> Var:
    """Embed diffusion times t in [0, 1], one vector per batch item."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if (t < 0).any() or (t > 1).any():
        raise ValueError(f"timestep must lie in [0, 1]; got range [{t.min()}, {t.max()}]")
    feats = Var(sinusoid_features(t, cfg.d_model, scale=1000.0).astype(cfg.np_dtype))
    return _two_layer(params, "time_mlp", feats)


def guidance_embedding(params, cfg: ModelConfig, g: np.ndarray) -> Var:
    """Embed the guidance scale (a conditioning input, not CFG)."""
    g = np.atleast_1d(np.asarray(g, dtype=np.float64))
    if (g < 0).any():
        raise ValueError(f"guidance must be >= 0; got min {g.min()}")
    feats = Var(sinusoid_features(g, cfg.d_model, scale=100.0).astype(cfg.np_dtype))
    return _two_layer(params, "guid_mlp", feats)


def conditioning_vector(params, cfg: ModelConfig, t, g, pooled: Var) -> Var:
    """Sum of timestep, guidance, and projected pooled-text embeddings."""
    return (
        timestep_embedding(params, cfg, t)
        + guidance_embedding(params, cfg, g)
        + _linear(params, "pooled_proj", pooled)
    )


# -- rotary positions -----------------------------------------------------------


def rope_tables(coords: np.ndarray, cfg: ModelConfig, dtype) -> tuple[np.ndarray, np.ndarray]:
    """cos/sin tables for 2-D rotary, (T, 2) int coords -> (T, head_dim).

    The head dim splits into rope_dims = (row_dims, col_dims); within each
    axis, consecutive feature pairs rotate by pos * base^(-2i/axis_dim).
    """
    coords = np.asarray(coords, dtype=np.float64)
    parts_cos, parts_sin = [], []
    for axis, d_axis in enumerate(cfg.rope_dims):
        half = d_axis // 2
        freqs = (1.0 / 10000.0) ** (np.arange(half, dtype=np.float64) / half)
        angles = coords[:, axis : axis + 1] * freqs[None, :]  # (T, half)
        cos = np.repeat(np.cos(angles), 2, axis=1)
        sin = np.repeat(np.sin(angles), 2, axis=1)
        parts_cos.append(cos)
        parts_sin.append(sin)
    return (
        np.concatenate(parts_cos, axis=1).astype(dtype),
        np.concatenate(parts_sin, axis=1).astype(dtype),
    )


def apply_rope(x: Var, cos: np.ndarray, sin: np.ndarray) -> Var:
    """Rotate (B, h, T, head_dim) features by per-token cos/sin tables."""
    return x * cos + ag.rotate_pairs(x) * sin


def grid_coords(grid_h: int, grid_w: int) -> np.ndarray:
    """Row-major (row, col) coordinates for a token grid."""
    rows, cols = np.mgrid[0:grid_h, 0:grid_w]
    return np.stack([rows.reshape(-1), cols.reshape(-1)], axis=1)


# -- attention ------------------------------------------------------------------


def _to_heads(x: Var, n_heads: int) -> Var:
    B, T, d = x.shape
    return ag.transpose(ag.reshape(x, (B, T, n_heads, d // n_heads)), (0, 2, 1, 3))


def _from_heads(x: Var) -> Var:
    B, h, T, dh = x.shape
    return ag.reshape(ag.transpose(x, (0, 2, 1, 3)), (B, T, h * dh))


def _attention(q: Var, k: Var, v: Var, key_bias: np.ndarray | None) -> Var:
    scale = 1.0 / np.sqrt(q.shape[-1])
    scores = ag.matmul(q, ag.transpose(k, (0, 1, 3, 2))) * scale
    if key_bias is not None:
        scores = scores + key_bias
    return ag.matmul(ag.softmax(scores), v)


def _modulation(params, name: str, cond: Var, n_chunks: int, d: int) -> list[Var]:
    """Per-block modulation: silu(cond) -> linear -> chunks of (B, 1, d)."""
    out = _linear(params, name, ag.silu(cond))
    B = out.shape[0]
    out = ag.reshape(out, (B, 1, n_chunks * d))
    return [out[:, :, i * d : (i + 1) * d] for i in range(n_chunks)]


def _txt_key_bias(txt_len: np.ndarray, n_txt: int, n_img: int, dtype) -> np.ndarray | None:
    """Additive attention bias masking padding text keys for all queries."""
    B = txt_len.shape[0]
    if n_txt == 0:
        return None
    bias = np.zeros((B, 1, 1, n_txt + n_img), dtype=dtype)
    pad = np.arange(n_txt)[None, :] >= txt_len[:, None]
    bias[:, 0, 0, :n_txt] = np.where(pad, -1e9, 0.0).astype(dtype)
    return bias


def mmdit_block(
    params,
    cfg: ModelConfig,
    i: int,
    img: Var,
    txt: Var,
    cond: Var,
    rope_img: tuple[np.ndarray, np.ndarray],
    rope_txt: tuple[np.ndarray, np.ndarray],
    key_bias: np.ndarray | None,
) -> tuple[Var, Var]:
    """Dual-stream block: joint attention over [txt; img], per-stream params."""
    d = cfg.d_model
    p = f"mmdit.{i}"
    mi = _modulation(params, f"{p}.mod.img", cond, 6, d)
    mt = _modulation(params, f"{p}.mod.txt", cond, 6, d)

    img_n = ag.layernorm(img) * (1.0 + mi[1]) + mi[0]
    txt_n = ag.layernorm(txt) * (1.0 + mt[1]) + mt[0]

    def qkv(stream, x):
        q = _to_heads(_linear(params, f"{p}.attn.{stream}.q", x), cfg.n_heads)
        k = _to_heads(_linear(params, f"{p}.attn.{stream}.k", x), cfg.n_heads)
        v = _to_heads(_linear(params, f"{p}.attn.{stream}.v", x), cfg.n_heads)
        return q, k, v

    qi, ki, vi = qkv("img", img_n)
    qt, kt, vt = qkv("txt", txt_n)
    qi, ki = apply_rope(qi, *rope_img), apply_rope(ki, *rope_img)
    qt, kt = apply_rope(qt, *rope_txt), apply_rope(kt, *rope_txt)

    n_txt = txt.shape[1]
    q = ag.concat([qt, qi], axis=2)
    k = ag.concat([kt, ki], axis=2)
    v = ag.concat([vt, vi], axis=2)
    joint = _from_heads(_attention(q, k, v, key_bias))
    a_txt, a_img = joint[:, :n_txt, :], joint[:, n_txt:, :]

    img = img + mi[2] * _linear(params, f"{p}.attn.img.o", a_img)
    txt = txt + mt[2] * _linear(params, f"{p}.attn.txt.o", a_txt)

    def mlp(stream, x, mods):
        x_n = ag.layernorm(x) * (1.0 + mods[4]) + mods[3]
        h = ag.gelu(_linear(params, f"{p}.mlp.{stream}.0", x_n))
        return mods[5] * _linear(params, f"{p}.mlp.{stream}.1", h)

    img = img + mlp("img", img, mi)
    txt = txt + mlp("txt", txt, mt)
    return img, txt


def singledit_block(
    params,
    cfg: ModelConfig,
    i: int,
    x: Var,
    cond: Var,
    rope: tuple[np.ndarray, np.ndarray],
    key_bias: np.ndarray | None,
) -> Var:
    """Single-stream block: attention and MLP in parallel from one norm,
    summed into the residual through one gate."""
    d = cfg.d_model
    p = f"single.{i}"
    shift, scale, gate = _modulation(params, f"{p}.mod", cond, 3, d)
    x_n = ag.layernorm(x) * (1.0 + scale) + shift

    q = apply_rope(_to_heads(_linear(params, f"{p}.attn.q", x_n), cfg.n_heads), *rope)
    k = apply_rope(_to_heads(_linear(params, f"{p}.attn.k", x_n), cfg.n_heads), *rope)
    v = _to_heads(_linear(params, f"{p}.attn.v", x_n), cfg.n_heads)
    attn = _linear(params, f"{p}.attn.o", _from_heads(_attention(q, k, v, key_bias)))

    h = ag.gelu(_linear(params, f"{p}.mlp.0", x_n))
    mlp = _linear(params, f"{p}.mlp.1", h)
    return x + gate * (attn + mlp)


# -- full model ------------------------------------------------------------------


class DiTModel:
    """Parameter container plus the forward pass."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        self.params = init_params(cfg)

    def forward(
        self,
        tokens: np.ndarray | Var,
        coords: np.ndarray,
        text_seq: np.ndarray,
        text_len: np.ndarray,
        pooled: np.ndarray,
        t: np.ndarray,
        g: np.ndarray,
    ) -> Var:
        """Predict velocity tokens.

        tokens:   (B, n, token_dim_in) channel-concatenated input tokens
        coords:   (n, 2) integer (row, col) grid coordinates
        text_seq: (B, S, d_text); rows past text_len[b] must be zero
        text_len: (B,) number of real text tokens per item
        pooled:   (B, d_text)
        t, g:     (B,) scalars per item
        returns   (B, n, token_dim_out) as a graph node
        """
        cfg = self.cfg
        dt = cfg.np_dtype
        tokens = tokens if isinstance(tokens, Var) else Var(np.asarray(tokens, dtype=dt))
        B, n, d_in = tokens.shape
        if d_in != cfg.token_dim_in:
            raise ValueError(f"token dim {d_in} != configured token_dim_in {cfg.token_dim_in}")
        coords = np.asarray(coords)
        if coords.shape != (n, 2):
            raise ValueError(f"need one (row, col) coordinate per token: {coords.shape} vs n={n}")
        text_seq = np.asarray(text_seq, dtype=dt)
        text_len = np.asarray(text_len, dtype=np.int64)
        pooled = np.asarray(pooled, dtype=dt)
        S = text_seq.shape[1]

        cond = conditioning_vector(self.params, cfg, t, g, Var(pooled))
        img = _linear(self.params, "proj_in", tokens)
        txt = _linear(self.params, "txt_in", Var(text_seq))

        rope_img = rope_tables(coords, cfg, dt)
        rope_txt = rope_tables(np.zeros((S, 2), dtype=np.int64), cfg, dt)
        rope_all = (
            np.concatenate([rope_txt[0], rope_img[0]], axis=0),
            np.concatenate([rope_txt[1], rope_img[1]], axis=0),
        )
        key_bias = _txt_key_bias(text_len, S, n, dt)

        for i in range(cfg.n_mmdit):
            img, txt = mmdit_block(
                self.params, cfg, i, img, txt, cond, rope_img, rope_txt, key_bias
            )
        x = ag.concat([txt, img], axis=1)
        for i in range(cfg.n_singledit):
            x = singledit_block(self.params, cfg, i, x, cond, rope_all, key_bias)
        img_out = x[:, S:, :]

        fmod = _linear(self.params, "final.mod", ag.silu(cond))
        fmod = ag.reshape(fmod, (B, 1, 2 * cfg.d_model))
        shift, scale = fmod[:, :, : cfg.d_model], fmod[:, :, cfg.d_model :]
        img_out = ag.layernorm(img_out) * (1.0 + scale) + shift
        return _linear(self.params, "head", img_out)

    def select_trainable(self, mode: str) -> TrainableSelection:
        return select_trainable(self.params, mode)

    def param_count(self, selection: TrainableSelection | None = None) -> int:
        names = selection.parameter_paths if selection else self.params.keys()
        return sum(self.params[n].data.size for n in names)


def select_trainable(params: dict[str, Var], mode: str) -> TrainableSelection:
    """Name the parameters that receive gradients under `mode`."""
    if mode == "full":
        return TrainableSelection(mode, tuple(sorted(params)))
    if mode not in _ATTN_RE:
        raise ValueError(f"unknown trainable mode {mode!r}; choose from {TRAINABLE_MODES}")
    rx = _ATTN_RE[mode]
    return TrainableSelection(mode, tuple(sorted(n for n in params if rx.match(n))))


def attention_param_count(cfg: ModelConfig, mode: str) -> int:
    """Analytic parameter count for the attention selections."""
    per_linear = cfg.d_model * cfg.d_model + cfg.d_model
    counts = {
        "mmdit_attention": cfg.n_mmdit * 8 * per_linear,
        "singledit_attention": cfg.n_singledit * 4 * per_linear,
    }
    counts["all_attention"] = counts["mmdit_attention"] + counts["singledit_attention"]
    if mode not in counts:
        raise ValueError(f"no analytic count for mode {mode!r}")
    return counts[mode]
