"""Single-file checkpoint container.

Layout: 8-byte magic, a little-endian uint64 manifest length, a canonical
JSON manifest (sorted keys, compact separators), then the raw parameter
payloads — C-order, explicitly little-endian — at the byte offsets
recorded in the manifest's array index. Because the manifest is canonical
and arrays are laid out sorted by name, loading a checkpoint and saving
it again reproduces the file byte for byte.

Stored array groups: ``model.*`` (transformer parameters), ``codec.*``
(latent codec parameters and scale), ``text.*`` (frozen text embedding
table), ``opt.m.*`` / ``opt.v.*`` (optimizer moments). The manifest
carries the config snapshot, step counters, and rng stream states.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .autoencoder import Codec, CodecConfig
from .autograd import Var
from .dit import DiTModel, ModelConfig
from .text import TextEncoder

MAGIC = b"TRYONDIT"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    manifest: dict
    arrays: dict[str, np.ndarray]

    @property
    def step(self) -> int:
        return self.manifest["step"]


@dataclass
class Runtime:
    """A checkpoint rehydrated into usable objects."""

    model: DiTModel
    codec: Codec
    text_encoder: TextEncoder


def _le(arr: np.ndarray) -> np.ndarray:
    dt = arr.dtype.newbyteorder("<")
    return np.ascontiguousarray(arr.astype(dt, copy=False))


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    names = sorted(ckpt.arrays)
    index = []
    offset = 0
    payloads = []
    for name in names:
        arr = _le(ckpt.arrays[name])
        raw = arr.tobytes()
        index.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": arr.dtype.str,
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        payloads.append(raw)
        offset += len(raw)
    manifest = dict(ckpt.manifest)
    manifest["format_version"] = FORMAT_VERSION
    manifest["arrays"] = index
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.asarray([len(blob)], dtype="<u8").tobytes())
        fh.write(blob)
        for raw in payloads:
            fh.write(raw)


def load_checkpoint(path: str | Path) -> Checkpoint:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic)")
    n = int(np.frombuffer(data[8:16], dtype="<u8")[0])
    manifest = json.loads(data[16 : 16 + n].decode("utf-8"))
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version")
    base = 16 + n
    arrays = {}
    for entry in manifest["arrays"]:
        start = base + entry["offset"]
        raw = data[start : start + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"]))
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
    manifest = {k: v for k, v in manifest.items() if k != "arrays"}
    return Checkpoint(manifest=manifest, arrays=arrays)


# -- config snapshots ----------------------------------------------------------


def model_config_to_dict(cfg: ModelConfig) -> dict:
    d = asdict(cfg)
    d["rope_dims"] = list(cfg.rope_dims)
    return d


def model_config_from_dict(d: dict) -> ModelConfig:
    d = dict(d)
    d["rope_dims"] = tuple(d["rope_dims"])
    return ModelConfig(**d)


def codec_config_to_dict(cfg: CodecConfig) -> dict:
    return asdict(cfg)


def codec_config_from_dict(d: dict) -> CodecConfig:
    return CodecConfig(**d)


# -- assembly -------------------------------------------------------------------


def make_checkpoint(
    model: DiTModel,
    codec: Codec,
    text_encoder: TextEncoder,
    step: int,
    train_config: dict | None = None,
    rng_states: dict | None = None,
    opt_m: dict[str, np.ndarray] | None = None,
    opt_v: dict[str, np.ndarray] | None = None,
    opt_step: int = 0,
) -> Checkpoint:
    arrays: dict[str, np.ndarray] = {}
    for name, p in model.params.items():
        arrays[f"model.{name}"] = p.data
    arrays.update(codec.state_arrays())
    arrays["text.embedding"] = text_encoder.embedding
    for group, d in (("opt.m", opt_m), ("opt.v", opt_v)):
        for name, arr in (d or {}).items():
            arrays[f"{group}.{name}"] = arr
    manifest = {
        "step": step,
        "opt_step": opt_step,
        "configs": {
            "model": model_config_to_dict(model.cfg),
            "codec": codec_config_to_dict(codec.cfg),
            "text": {
                "vocab_size": text_encoder.vocab_size,
                "max_tokens": text_encoder.max_tokens,
                "d_text": text_encoder.d_text,
                "seed": text_encoder.seed,
            },
            "train": train_config or {},
        },
        "rng_states": rng_states or {},
    }
    return Checkpoint(manifest=manifest, arrays=arrays)


def build_runtime(ckpt: Checkpoint) -> Runtime:
    cfgs = ckpt.manifest["configs"]
    model = DiTModel(model_config_from_dict(cfgs["model"]))
    for name in model.params:
        model.params[name] = Var(ckpt.arrays[f"model.{name}"].copy())
    codec = Codec(codec_config_from_dict(cfgs["codec"]))
    if codec.cfg.mode == "learned":
        codec.load_state_arrays(ckpt.arrays)
    tc = cfgs["text"]
    text_encoder = TextEncoder(tc["vocab_size"], tc["max_tokens"], tc["d_text"], tc["seed"])
    text_encoder.embedding = ckpt.arrays["text.embedding"].copy()
    return Runtime(model=model, codec=codec, text_encoder=text_encoder)


def optimizer_arrays(ckpt: Checkpoint) -> tuple[dict, dict, int]:
    """Extract (m, v, step) moment dicts keyed by bare parameter name."""
    m = {k[len("opt.m."):]: v.copy() for k, v in ckpt.arrays.items() if k.startswith("opt.m.")}
    v = {k[len("opt.v."):]: a.copy() for k, a in ckpt.arrays.items() if k.startswith("opt.v.")}
    return m, v, ckpt.manifest.get("opt_step", 0)
