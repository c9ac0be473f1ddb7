"""Latent codec: exact invertible mode and a small learned conv mode.

The invertible codec is pure space-to-depth, so encode/decode are
bit-exact mutual inverses; it backs every test that needs exactness.
The learned codec is a plain conv autoencoder fit with MSE only, used
where realism matters more than exactness. Both expose the same
interface and shape contract: (3, H, W) pixels <-> (c_lat, H/f, W/f)
latents.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Var
from .core import check_image, depth_to_space, space_to_depth
from .optim import AdamWState, adamw_step

_WIDTHS = (32, 64, 128)  # encoder channel progression, one entry per 2x downsample


@dataclass(frozen=True)
class CodecConfig:
    mode: str = "invertible"  # "invertible" | "learned"
    factor: int = 8
    latent_channels: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("invertible", "learned"):
            raise ValueError(f"unknown codec mode {self.mode!r}")
        if self.mode == "learned" and 2 ** int(math.log2(self.factor)) != self.factor:
            raise ValueError("learned codec requires a power-of-two factor")

    @property
    def c_lat(self) -> int:
        if self.mode == "invertible":
            # exactness requires no information loss
            return 3 * self.factor**2
        return 16 if self.latent_channels is None else self.latent_channels


def _init_conv(rng, cout: int, cin: int, k: int, dtype) -> tuple[np.ndarray, np.ndarray]:
    scale = 1.0 / math.sqrt(cin * k * k)
    w = rng.uniform(-scale, scale, size=(cout, cin, k, k)).astype(dtype)
    b = np.zeros(cout, dtype=dtype)
    return w, b


def _d2s_batched(x: Var, r: int) -> Var:
    """Differentiable depth-to-space on (B, C, H, W), same layout as core."""
    B, cr, h, w = x.shape
    c = cr // (r * r)
    x = ag.reshape(x, (B, c, r, r, h, w))
    x = ag.transpose(x, (0, 1, 4, 2, 5, 3))
    return ag.reshape(x, (B, c, h * r, w * r))


class Codec:
    """Pixel <-> latent codec; learned parameters live in `params`."""

    def __init__(self, cfg: CodecConfig, dtype=np.float32):
        self.cfg = cfg
        self.dtype = dtype
        self.latent_scale = 1.0
        self.params: dict[str, Var] = {}
        if cfg.mode == "learned":
            self._build_params()

    # -- construction ----------------------------------------------------
    def _build_params(self):
        cfg = self.cfg
        n_down = int(math.log2(cfg.factor))
        widths = list(_WIDTHS[:n_down])
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xC0DEC]))
        layers = []
        cin = 3
        for i, w in enumerate(widths):
            layers.append((f"enc.{i}", w, cin, 2))
            cin = w
        layers.append((f"enc.{n_down}", cfg.c_lat, cin, 1))
        layers.append(("dec.0", widths[-1], cfg.c_lat, 1))
        for i in range(n_down - 1, 0, -1):
            layers.append((f"dec.{n_down - i}", 4 * widths[i - 1], widths[i], 1))
        layers.append((f"dec.{n_down}", 12, widths[0], 1))
        for name, cout, cin_, _ in layers:
            w, b = _init_conv(rng, cout, cin_, 3, self.dtype)
            self.params[f"{name}.weight"] = Var(w)
            self.params[f"{name}.bias"] = Var(b)
        self._n_down = n_down
        self._widths = widths

    def set_requires_grad(self, flag: bool):
        for p in self.params.values():
            p.requires_grad = flag

    @property
    def encoder_receptive_field(self) -> int:
        """Receptive field of one latent site, in pixels (learned mode)."""
        if self.cfg.mode == "invertible":
            return self.cfg.factor
        rf, jump = 1, 1
        for _ in range(self._n_down):
            rf += 2 * jump
            jump *= 2
        rf += 2 * jump  # final stride-1 conv
        return rf

    @property
    def seam_margin_latent_cols(self) -> int:
        """Latent columns next to the width seam that may differ from
        encoding the halves separately (zero in invertible mode)."""
        if self.cfg.mode == "invertible":
            return 0
        return math.ceil((self.encoder_receptive_field // 2) / self.cfg.factor)

    # -- forward ----------------------------------------------------------
    def _encode_var(self, x: Var) -> Var:
        n_down = self._n_down
        for i in range(n_down):
            x = ag.conv2d(x, self.params[f"enc.{i}.weight"], self.params[f"enc.{i}.bias"],
                          stride=2, padding=1)
            x = ag.gelu(x)
        return ag.conv2d(x, self.params[f"enc.{n_down}.weight"],
                         self.params[f"enc.{n_down}.bias"], stride=1, padding=1)

    def _decode_var(self, z: Var) -> Var:
        n_down = self._n_down
        x = ag.gelu(ag.conv2d(z, self.params["dec.0.weight"], self.params["dec.0.bias"],
                              stride=1, padding=1))
        for j in range(1, n_down):
            x = ag.conv2d(x, self.params[f"dec.{j}.weight"], self.params[f"dec.{j}.bias"],
                          stride=1, padding=1)
            x = ag.gelu(_d2s_batched(x, 2))
        x = ag.conv2d(x, self.params[f"dec.{n_down}.weight"], self.params[f"dec.{n_down}.bias"],
                      stride=1, padding=1)
        return _d2s_batched(x, 2)

    def encode(self, image: np.ndarray) -> np.ndarray:
        """(3, H, W) in [-1, 1] -> (c_lat, H/f, W/f)."""
        image = check_image(image)
        f = self.cfg.factor
        _, h, w = image.shape
        if h % f or w % f:
            raise ValueError(f"spatial dims ({h}, {w}) not divisible by factor {f}")
        if self.cfg.mode == "invertible":
            return space_to_depth(image, f)
        z = self._encode_var(Var(image[None].astype(self.dtype))).data[0]
        if self.latent_scale != 1.0:
            z = z * np.asarray(self.latent_scale, dtype=z.dtype)
        return z

    def decode(self, latent: np.ndarray) -> np.ndarray:
        """(c_lat, h, w) -> (3, h*f, w*f) in [-1, 1] (learned mode clamps)."""
        latent = np.asarray(latent)
        if latent.ndim != 3 or latent.shape[0] != self.cfg.c_lat:
            raise ValueError(
                f"latent channels {latent.shape} do not match codec c_lat={self.cfg.c_lat}"
            )
        if self.cfg.mode == "invertible":
            return depth_to_space(latent, self.cfg.factor)
        z = latent
        if self.latent_scale != 1.0:
            z = z / np.asarray(self.latent_scale, dtype=latent.dtype)
        out = self._decode_var(Var(z[None].astype(self.dtype))).data[0]
        return np.clip(out, -1.0, 1.0)

    # -- training ----------------------------------------------------------
    def train_codec(
        self,
        images: list[np.ndarray],
        steps: int,
        lr: float = 2e-3,
        batch_size: int = 8,
        seed: int = 0,
        holdout_fraction: float = 0.125,
        eval_every: int = 50,
    ) -> dict:
        """Fit the learned codec by MSE reconstruction; freezes nothing else.

        Returns a history dict with per-step train loss and periodic
        held-out MSE. After training, `latent_scale` is set so latents
        have roughly unit standard deviation on the training images.
        """
        if self.cfg.mode != "learned":
            raise ValueError("train_codec requires a learned-mode codec")
        if not images:
            raise ValueError("empty training set")
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF17]))
        n_hold = max(1, int(len(images) * holdout_fraction)) if len(images) > 1 else 0
        order = rng.permutation(len(images))
        hold = [images[i] for i in order[:n_hold]]
        train = [images[i] for i in order[n_hold:]] or hold

        self.set_requires_grad(True)
        state = AdamWState(sorted(self.params), self.params)
        history = {"train_loss": [], "holdout_mse": []}
        history["holdout_mse"].append((0, self._reconstruction_mse(hold or train)))
        for step in range(steps):
            idx = rng.integers(0, len(train), size=min(batch_size, len(train)))
            batch = np.stack([train[i] for i in idx]).astype(self.dtype)
            x = Var(batch)
            recon = self._decode_var(self._encode_var(x))
            loss = ag.mean((recon - x) ** 2.0)
            for p in self.params.values():
                p.grad = None
            loss.backward()
            grads = {n: p.grad for n, p in self.params.items()}
            adamw_step(self.params, grads, state, lr=lr, weight_decay=0.0)
            history["train_loss"].append(float(loss.data))
            if (step + 1) % eval_every == 0:
                history["holdout_mse"].append((step + 1, self._reconstruction_mse(hold or train)))
        self.set_requires_grad(False)
        if steps > 0:
            self._calibrate_latent_scale(train)
        return history

    def _reconstruction_mse(self, images: list[np.ndarray]) -> float:
        total, count = 0.0, 0
        for img in images:
            recon = self.decode(self.encode(img))
            total += float(((recon - img) ** 2).sum())
            count += img.size
        return total / count

    def _calibrate_latent_scale(self, images: list[np.ndarray]) -> None:
        """Set latent_scale = 1/std(raw latents) over up to 64 images."""
        self.latent_scale = 1.0
        sq_sum, count = 0.0, 0
        for img in images[:64]:
            z = self.encode(img)
            sq_sum += float((z.astype(np.float64) ** 2).sum())
            count += z.size
        std = math.sqrt(sq_sum / count)
        if std > 0:
            self.latent_scale = float(np.float32(1.0 / std))

    # -- serialization -----------------------------------------------------
    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {f"codec.{n}": p.data for n, p in sorted(self.params.items())}
        out["codec.latent_scale"] = np.asarray([self.latent_scale], dtype=np.float32)
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for n in self.params:
            self.params[n].data = arrays[f"codec.{n}"].copy()
        self.latent_scale = float(arrays["codec.latent_scale"][0])
