"""Run configuration: one JSON document covering every pipeline stage.

Sections mirror the module configs (data, codec, model, text, train,
infer, eval). Unknown keys are rejected rather than ignored, and the
fully-defaulted effective config is echoed into each run directory so a
run can be reproduced from its artifacts alone. Output paths are passed
as CLI flags, never stored in the config, which keeps the echoed bytes
identical across reruns into different directories.
"""
from __future__ import annotations

import copy
import json
from pathlib import Path

DEFAULTS: dict = {
    "data": {
        "n_samples": 256,
        "size": [64, 48],
        "seed": 0,
        "palette": ["red", "yellow", "green", "cyan", "blue", "magenta"],
        "patterns": ["solid", "stripes", "checks", "dots"],
        "pose_jitter": 4,
        "train_fraction": 0.875,
        "split_seed": 0,
    },
    "codec": {
        "mode": "learned",
        "factor": 4,
        "latent_channels": 8,
        "seed": 0,
        "train_steps": 500,
        "train_lr": 3e-3,
        "train_batch_size": 8,
        "train_seed": 1,
    },
    "model": {
        "d_model": 64,
        "n_heads": 4,
        "n_mmdit": 2,
        "n_singledit": 4,
        "d_text": 64,
        "rope_dims": [8, 8],
        "mlp_ratio": 4,
        "init_std": 0.02,
        "gate_bias_init": 1.0,
        "head_init_std": 0.15,
        "seed": 0,
    },
    "text": {
        "vocab_size": 512,
        "max_tokens": 32,
        "seed": 0,
    },
    "train": {
        "steps": 2000,
        "batch_size": 8,
        "lr": 1e-3,
        "trainable_mode": "singledit_attention",
        "caption_dropout_p": 0.1,
        "guidance_train": 3.5,
        "seed": 0,
        "weighting": "uniform",
        "t_sampling": "uniform",
        "caption_mode": "integrated",
        "loss_on_masked_only": False,
        "weight_decay": 0.01,
        "log_every": 1,
        "checkpoint_every": 500,
    },
    "infer": {
        "num_steps": 28,
        "guidance": 30.0,
        "seed": 0,
        "paste_back": True,
        "caption_mode": "integrated",
    },
    "eval": {
        "extractor_seed": 0,
        "n_samples": 16,
    },
}

# Full-scale hyperparameters for users with the hardware; the toy
# defaults above are what the test suite exercises.
PRESETS: dict[str, dict] = {
    "full-scale": {
        "data": {"size": [512, 384]},
        "train": {"steps": 36_000, "batch_size": 4, "lr": 1e-5},
    },
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"section {where} must be an object")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def load_run_config(
    path: str | Path | None = None,
    preset: str | None = None,
    overrides: dict | None = None,
) -> dict:
    """Defaults <- preset <- config file <- CLI overrides, validated."""
    cfg = copy.deepcopy(DEFAULTS)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; available: {sorted(PRESETS)}")
        cfg = _merge(cfg, PRESETS[preset])
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config root must be a JSON object")
        cfg = _merge(cfg, raw)
    if overrides:
        cfg = _merge(cfg, _drop_none(overrides))
    return cfg


def _drop_none(tree: dict) -> dict:
    out = {}
    for key, value in tree.items():
        if isinstance(value, dict):
            pruned = _drop_none(value)
            if pruned:
                out[key] = pruned
        elif value is not None:
            out[key] = value
    return out


def echo_config(cfg: dict, out_dir: str | Path) -> Path:
    """Write the effective config; canonical bytes for rerun comparison."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    target = out / "effective_config.json"
    target.write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return target
