"""Rectified-flow training with selective parameter updates.

The flow connects clean token grids x0 to Gaussian noise along straight
lines z_t = (1-t) x0 + t eps, and the network regresses the constant
path velocity eps - x0 under uniform weighting. Only the parameters
named by the trainable selection receive gradients or optimizer state;
everything else — including the codec and the text embedding table — is
bit-frozen. Preprocessing goes through ``inference.prepare_inputs``, the
same function the sampler uses, so the two phases cannot drift apart.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autoencoder import Codec
from .autograd import Var
from .checkpoint import Checkpoint, load_checkpoint, make_checkpoint, optimizer_arrays, save_checkpoint
from .dataset import TryOnSample
from .dit import TRAINABLE_MODES, DiTModel, TrainableSelection
from .inference import CAPTION_MODES, prepare_inputs, resolve_caption
from .optim import AdamWState, adamw_step
from .text import EMPTY_CAPTION, TextEncoder, drop_caption


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch_size: int = 8
    lr: float = 1e-3
    trainable_mode: str = "singledit_attention"
    caption_dropout_p: float = 0.1
    guidance_train: float = 3.5
    seed: int = 0
    weighting: str = "uniform"
    t_sampling: str = "uniform"
    caption_mode: str = "integrated"
    loss_on_masked_only: bool = False
    weight_decay: float = 0.01
    log_every: int = 1
    checkpoint_every: int = 500

    def __post_init__(self):
        if not 0.0 <= self.caption_dropout_p <= 1.0:
            raise ValueError(f"caption_dropout_p must be in [0,1]; got {self.caption_dropout_p}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive; got {self.lr}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0; got {self.steps}")
        if self.weighting != "uniform":
            raise ValueError(f"only uniform weighting is implemented; got {self.weighting!r}")
        if self.t_sampling != "uniform":
            raise ValueError(f"only uniform t sampling is implemented; got {self.t_sampling!r}")
        if self.trainable_mode not in TRAINABLE_MODES:
            raise ValueError(f"trainable_mode must be one of {TRAINABLE_MODES}")
        if self.caption_mode not in CAPTION_MODES:
            raise ValueError(f"caption_mode must be one of {CAPTION_MODES}")


# -- rectified-flow algebra ------------------------------------------------------


def _broadcast_t(t, ndim: int):
    t = np.asarray(t, dtype=np.float64)
    if (t < 0).any() or (t > 1).any():
        raise ValueError(f"t must lie in [0,1]; got range [{t.min()}, {t.max()}]")
    while t.ndim < ndim:
        t = t[..., None]
    return t


def rf_interpolate(x0: np.ndarray, eps: np.ndarray, t) -> np.ndarray:
    """Linear path state z_t = (1 - t) x0 + t eps."""
    x0, eps = np.asarray(x0), np.asarray(eps)
    if x0.shape != eps.shape:
        raise ValueError(f"x0 {x0.shape} and eps {eps.shape} must match")
    t = _broadcast_t(t, x0.ndim)
    return ((1.0 - t) * x0 + t * eps).astype(x0.dtype)


def rf_target(x0: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """The straight path's velocity, eps - x0 (constant in t)."""
    x0, eps = np.asarray(x0), np.asarray(eps)
    if x0.shape != eps.shape:
        raise ValueError(f"x0 {x0.shape} and eps {eps.shape} must match")
    return eps - x0


def sample_t(rng: np.random.Generator, n: int) -> np.ndarray:
    """t ~ U(0,1), one draw per batch item."""
    return rng.random(n)


# -- optimizer contract ------------------------------------------------------------


def optimizer_step(
    params: dict[str, Var],
    selection: TrainableSelection,
    grads: dict[str, np.ndarray],
    state: AdamWState,
    lr: float,
    weight_decay: float = 0.01,
) -> None:
    """AdamW over exactly the selected parameters.

    A gradient for a non-selected parameter is a contract violation and
    raises instead of being silently applied.
    """
    allowed = set(selection.parameter_paths)
    extra = sorted(set(grads) - allowed)
    if extra:
        raise ValueError(f"gradient present for frozen parameter(s): {extra[:4]}")
    adamw_step(params, grads, state, lr=lr, weight_decay=weight_decay)


# -- trainer -------------------------------------------------------------------------


class Trainer:
    """Owns the model parameters, optimizer state, and rng streams."""

    def __init__(
        self,
        model: DiTModel,
        codec: Codec,
        text_encoder: TextEncoder,
        samples: list[TryOnSample],
        cfg: TrainConfig,
    ):
        if not samples:
            raise ValueError("training requires a non-empty dataset")
        self.model = model
        self.codec = codec
        self.text_encoder = text_encoder
        self.samples = samples
        self.cfg = cfg
        self.selection = model.select_trainable(cfg.trainable_mode)
        for name, p in model.params.items():
            p.requires_grad = name in set(self.selection.parameter_paths)
        codec.set_requires_grad(False)
        self.opt_state = AdamWState(list(self.selection.parameter_paths), model.params)
        self.rngs = {
            name: np.random.default_rng(np.random.SeedSequence([cfg.seed, tag]))
            for name, tag in (("batch", 1), ("t", 2), ("eps", 3), ("dropout", 4))
        }
        self.step = 0
        self.loss_rows: list[tuple[int, float]] = []
        self._cache: dict[str, dict] = {}

    # the preprocessing entry point is literally the inference one
    prepare_inputs = staticmethod(prepare_inputs)

    def _cached(self, sample: TryOnSample):
        """Deterministic per-sample token streams, computed once.

        Everything except the noise draw, the t draw, and the caption
        dropout decision is a pure function of the sample, so it is run
        through prepare_inputs a single time and reused every step.
        """
        entry = self._cache.get(sample.sample_id)
        if entry is None:
            caption = resolve_caption(
                sample.garment_caption, sample.person_caption, self.cfg.caption_mode
            )
            p = self.prepare_inputs(
                sample.garment_image,
                sample.person_image,
                sample.mask,
                caption,
                self.codec,
                self.text_encoder,
                rng=np.random.default_rng(0),  # noise discarded; drawn per step
                include_clean=True,
                dtype=self.model.cfg.np_dtype,
            )
            entry = {
                "x0": p.clean.values,
                "ctx": np.concatenate([p.p_masked.values, p.p_om.values], axis=1),
                "om": p.p_om.values,
                "caption": caption,
                "text": p.text,
                "text_empty": self.text_encoder.encode_caption(EMPTY_CAPTION),
                "coords": p.coords,
            }
            self._cache[sample.sample_id] = entry
        return entry

    def _prepare_batch(self, batch: list[TryOnSample]):
        cfg = self.cfg
        entries = []
        texts = []
        for s in batch:
            entry = self._cached(s)
            entries.append(entry)
            text = entry["text"]
            if cfg.caption_mode != "none":
                kept = drop_caption(entry["caption"], cfg.caption_dropout_p, self.rngs["dropout"])
                if kept.text == "":
                    text = entry["text_empty"]
            texts.append(text)
        x0 = np.stack([e["x0"] for e in entries])
        eps = self.rngs["eps"].standard_normal(x0.shape, dtype=x0.dtype)
        ctx = np.stack([e["ctx"] for e in entries])
        om = np.stack([e["om"] for e in entries])
        text_seq = np.stack([t.sequence for t in texts])
        text_len = np.array([t.length for t in texts])
        pooled = np.stack([t.pooled for t in texts])
        coords = entries[0]["coords"]
        return x0, eps, ctx, om, text_seq, text_len, pooled, coords

    def training_step(self, batch: list[TryOnSample]) -> float:
        """One rectified-flow step over `batch`; returns the scalar loss."""
        if not batch:
            raise ValueError("empty batch")
        cfg = self.cfg
        x0, eps, ctx, om, text_seq, text_len, pooled, coords = self._prepare_batch(batch)
        t = sample_t(self.rngs["t"], len(batch))
        z_t = rf_interpolate(x0, eps, t)
        target = rf_target(x0, eps)
        tokens = np.concatenate([z_t, ctx], axis=2)
        g = np.full(len(batch), cfg.guidance_train)

        for name in self.selection.parameter_paths:
            self.model.params[name].grad = None
        v_hat = self.model.forward(tokens, coords, text_seq, text_len, pooled, t, g)
        err = (v_hat - Var(target)) ** 2.0
        if cfg.loss_on_masked_only:
            w = (om > 0.5).any(axis=2, keepdims=True).astype(target.dtype)
            denom = float(w.sum()) * target.shape[2]
            if denom == 0:
                raise ValueError("loss_on_masked_only with an all-empty mask batch")
            loss = ag.sum_(err * w) / denom
        else:
            loss = ag.mean(err)
        loss.backward()
        grads = {
            n: self.model.params[n].grad
            for n in self.selection.parameter_paths
            if self.model.params[n].grad is not None
        }
        optimizer_step(
            self.model.params, self.selection, grads, self.opt_state,
            lr=cfg.lr, weight_decay=cfg.weight_decay,
        )
        self.step += 1
        return float(loss.data)

    def _next_batch(self) -> list[TryOnSample]:
        n = len(self.samples)
        take = min(self.cfg.batch_size, n)
        idx = self.rngs["batch"].permutation(n)[:take]
        return [self.samples[i] for i in idx]

    # -- checkpointing ------------------------------------------------------

    def to_checkpoint(self) -> Checkpoint:
        return make_checkpoint(
            self.model,
            self.codec,
            self.text_encoder,
            step=self.step,
            train_config=asdict(self.cfg),
            rng_states={k: r.bit_generator.state for k, r in self.rngs.items()},
            opt_m=self.opt_state.m,
            opt_v=self.opt_state.v,
            opt_step=self.opt_state.step,
        )

    def restore(self, ckpt: Checkpoint) -> None:
        for name in self.model.params:
            self.model.params[name].data = ckpt.arrays[f"model.{name}"].copy()
        if self.codec.params:
            self.codec.load_state_arrays(ckpt.arrays)
        self.text_encoder.embedding = ckpt.arrays["text.embedding"].copy()
        m, v, opt_step = optimizer_arrays(ckpt)
        self.opt_state.m = m
        self.opt_state.v = v
        self.opt_state.step = opt_step
        for name, state in ckpt.manifest["rng_states"].items():
            self.rngs[name].bit_generator.state = state
        self.step = ckpt.manifest["step"]

    def write_artifacts(self, out_dir: Path, final: bool) -> None:
        out_dir.mkdir(parents=True, exist_ok=True)
        name = "checkpoint.bin" if final else f"checkpoint_step_{self.step:06d}.bin"
        save_checkpoint(out_dir / name, self.to_checkpoint())
        with open(out_dir / "loss.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "loss", "lr", "mode"])
            for step, loss in self.loss_rows:
                writer.writerow([step, repr(loss), repr(self.cfg.lr), self.cfg.trainable_mode])

    def run(self, out_dir: str | Path | None = None, log=None) -> Checkpoint:
        out = Path(out_dir) if out_dir is not None else None
        while self.step < self.cfg.steps:
            loss = self.training_step(self._next_batch())
            if self.step % self.cfg.log_every == 0 or self.step == self.cfg.steps:
                self.loss_rows.append((self.step, loss))
            if log and (self.step % max(self.cfg.steps // 10, 1) == 0):
                log(f"step {self.step}/{self.cfg.steps} loss {loss:.5f}")
            if (
                out is not None
                and self.cfg.checkpoint_every > 0
                and self.step % self.cfg.checkpoint_every == 0
                and self.step < self.cfg.steps
            ):
                self.write_artifacts(out, final=False)
        if out is not None:
            self.write_artifacts(out, final=True)
        return self.to_checkpoint()


def train(
    samples: list[TryOnSample],
    model: DiTModel,
    codec: Codec,
    text_encoder: TextEncoder,
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
    resume_from: str | Path | Checkpoint | None = None,
    log=None,
) -> Checkpoint:
    """Train for cfg.steps, optionally resuming; returns the final checkpoint."""
    trainer = Trainer(model, codec, text_encoder, samples, cfg)
    if resume_from is not None:
        ckpt = resume_from if isinstance(resume_from, Checkpoint) else load_checkpoint(resume_from)
        trainer.restore(ckpt)
    return trainer.run(out_dir=out_dir, log=log)
