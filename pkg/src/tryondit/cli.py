"""Command-line surface: gen-data, train, infer, eval, ablate.

Exit codes are a stable contract: 0 success, 1 runtime failure,
2 argument/validation failure. Every command echoes its effective,
fully-defaulted config into its run directory; reruns from that config
and the same seeds are byte-identical on one platform. Run directories
are append-only — an occupied output directory gets a fresh timestamped
subdirectory rather than being overwritten.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import pngio
from .autoencoder import Codec, CodecConfig
from .checkpoint import build_runtime, load_checkpoint
from .config import ConfigError, echo_config, load_run_config
from .dit import DiTModel, ModelConfig, attention_param_count
from .inference import InferenceConfig, resolve_caption, token_dims_for_codec, try_on
from .metrics import ExtractorConfig, evaluate_pairs
from .text import TextEncoder
from .training import TrainConfig, train

ABLATE_AXES = ("mode", "text", "guidance")
GUIDANCE_AXIS_VALUES = (2.0, 3.5, 30.0)
RUN_ROOT_ENV = "TRYONDIT_RUN_ROOT"


def _fail(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _out_path(raw: str) -> Path:
    """Relative output paths resolve under $TRYONDIT_RUN_ROOT when set."""
    import os

    path = Path(raw)
    root = os.environ.get(RUN_ROOT_ENV)
    if root and not path.is_absolute():
        return Path(root) / path
    return path


def resolve_run_dir(out: Path) -> Path:
    """Append-only run directories: never overwrite earlier artifacts."""
    if not out.exists() or not any(out.iterdir()):
        out.mkdir(parents=True, exist_ok=True)
        return out
    stamp = time.strftime("%Y%m%d-%H%M%S")
    candidate = out / f"run-{stamp}"
    counter = 1
    while candidate.exists():
        counter += 1
        candidate = out / f"run-{stamp}-{counter}"
    candidate.mkdir(parents=True)
    return candidate


def _parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(p) for p in text.lower().split("x"))
    except Exception as exc:
        raise ValueError(f"size must look like 64x48; got {text!r}") from exc
    return h, w


# -- world building ------------------------------------------------------------


def build_codec(cfg: dict, train_images: list[np.ndarray], log=print) -> tuple[Codec, dict]:
    c = cfg["codec"]
    codec_cfg = CodecConfig(
        mode=c["mode"], factor=c["factor"],
        latent_channels=c["latent_channels"], seed=c["seed"],
    )
    codec = Codec(codec_cfg)
    info = {"mode": c["mode"], "factor": c["factor"], "c_lat": codec_cfg.c_lat}
    if codec_cfg.mode == "learned":
        history = codec.train_codec(
            train_images,
            steps=c["train_steps"],
            lr=c["train_lr"],
            batch_size=c["train_batch_size"],
            seed=c["train_seed"],
        )
        info["holdout_mse_first"] = history["holdout_mse"][0][1]
        info["holdout_mse_final"] = history["holdout_mse"][-1][1]
        info["latent_scale"] = codec.latent_scale
        log(
            f"codec: held-out mse {info['holdout_mse_first']:.5f} -> "
            f"{info['holdout_mse_final']:.5f}, latent scale {codec.latent_scale:.3f}"
        )
    return codec, info


def build_model(cfg: dict, codec: Codec) -> DiTModel:
    m = cfg["model"]
    din, dout = token_dims_for_codec(codec.cfg)
    return DiTModel(
        ModelConfig(
            d_model=m["d_model"], n_heads=m["n_heads"], n_mmdit=m["n_mmdit"],
            n_singledit=m["n_singledit"], d_text=m["d_text"],
            token_dim_in=din, token_dim_out=dout,
            rope_dims=tuple(m["rope_dims"]), mlp_ratio=m["mlp_ratio"],
            init_std=m["init_std"], head_init_std=m["head_init_std"],
            gate_bias_init=m["gate_bias_init"],
            seed=m["seed"],
        )
    )


def build_text_encoder(cfg: dict) -> TextEncoder:
    t = cfg["text"]
    return TextEncoder(
        vocab_size=t["vocab_size"], max_tokens=t["max_tokens"],
        d_text=cfg["model"]["d_text"], seed=t["seed"],
    )


def train_config_from(cfg: dict, **overrides) -> TrainConfig:
    merged = dict(cfg["train"])
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig(**merged)


def _pair_images(samples) -> list[np.ndarray]:
    return [np.concatenate([s.garment_image, s.person_image], axis=2) for s in samples]


# -- gen-data -------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    cfg = load_run_config(args.config, overrides={
        "data": {
            "n_samples": args.n,
            "seed": args.seed,
            "size": list(_parse_size(args.size)) if args.size else None,
        }
    })
    d = cfg["data"]
    synth = ds.SynthConfig(
        n_samples=d["n_samples"], size=tuple(d["size"]), seed=d["seed"],
        palette=tuple(d["palette"]), patterns=tuple(d["patterns"]),
        pose_jitter=d["pose_jitter"],
    )

    def run() -> int:
        out = _out_path(args.out)
        manifest = ds.generate_synthetic(synth, out)
        echo_config(cfg, out)
        print(
            f"wrote {len(manifest['sample_ids'])} samples to {out} "
            f"(size {d['size'][0]}x{d['size'][1]}, seed {d['seed']}, "
            f"palette {len(d['palette'])}, patterns {len(d['patterns'])})"
        )
        return 0

    return run


def cmd_train(args) -> int:
    cfg = load_run_config(args.config, preset=args.preset, overrides={
        "train": {
            "trainable_mode": args.mode,
            "steps": args.steps,
            "lr": args.lr,
            "seed": args.seed,
        }
    })
    TrainConfig(**cfg["train"])  # validate before running

    def run() -> int:
        out = resolve_run_dir(_out_path(args.out))
        samples = ds.load_dataset(args.data)
        if not samples:
            raise RuntimeError(f"no usable samples under {args.data}")
        train_split, _ = ds.split(samples, cfg["data"]["train_fraction"], cfg["data"]["split_seed"])
        if args.codec_from:
            runtime = build_runtime(load_checkpoint(args.codec_from))
            codec, codec_info = runtime.codec, {"mode": "loaded", "from": str(args.codec_from)}
        else:
            codec, codec_info = build_codec(cfg, _pair_images(train_split))
        model = build_model(cfg, codec)
        text_encoder = build_text_encoder(cfg)
        tcfg = train_config_from(cfg)
        selection = model.select_trainable(tcfg.trainable_mode)
        n_train = model.param_count(selection)
        print(f"trainable mode {tcfg.trainable_mode}: {n_train} of {model.param_count()} parameters")
        if tcfg.trainable_mode != "full":
            analytic = attention_param_count(model.cfg, tcfg.trainable_mode)
            if n_train != analytic:
                raise RuntimeError(f"selection count {n_train} != analytic {analytic}")
        ckpt = train(train_split, model, codec, text_encoder, tcfg, out_dir=out, log=print)
        rows = (out / "loss.csv").read_text().strip().splitlines()[1:]
        losses = [float(r.split(",")[1]) for r in rows]
        k = min(50, max(len(losses) // 2, 1))
        summary = {
            "steps": ckpt.manifest["step"],
            "trainable_mode": tcfg.trainable_mode,
            "trainable_params": n_train,
            "total_params": model.param_count(),
            "codec": codec_info,
            "loss_first_window": float(np.mean(losses[:k])) if losses else None,
            "loss_final_window": float(np.mean(losses[-k:])) if losses else None,
        }
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        echo_config(cfg, out)
        if losses:
            print(
                f"loss: first-{k} mean {summary['loss_first_window']:.5f}, "
                f"final-{k} mean {summary['loss_final_window']:.5f}"
            )
        print(f"run dir: {out}")
        return 0

    return run


def cmd_infer(args) -> int:
    cfg = load_run_config(args.config, overrides={
        "infer": {
            "num_steps": args.steps,
            "guidance": args.guidance,
            "seed": args.seed,
            "caption_mode": args.caption_mode,
            "paste_back": False if args.no_paste_back else None,
        }
    })
    icfg = InferenceConfig(**cfg["infer"])

    def run() -> int:
        runtime = build_runtime(load_checkpoint(args.ckpt))
        garment = pngio.load_image(args.garment)
        person = pngio.load_image(args.person)
        mask = pngio.load_mask(args.mask)
        lines = Path(args.caption).read_text(encoding="utf-8").splitlines()
        garment_desc = lines[0].strip() if lines else "a top"
        person_desc = lines[1].strip() if len(lines) > 1 else "a person"
        caption = resolve_caption(garment_desc, person_desc, icfg.caption_mode)
        result, panel = try_on(
            garment, person, mask, caption,
            runtime.model, runtime.codec, runtime.text_encoder, icfg,
            return_panel=True,
        )
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        pngio.save_image(out, result)
        if args.panel:
            panel_path = Path(args.panel)
            panel_path.parent.mkdir(parents=True, exist_ok=True)
            pngio.save_image(panel_path, np.clip(panel, -1.0, 1.0))
        out.with_suffix(".config.json").write_text(
            json.dumps(cfg, indent=2, sort_keys=True) + "\n"
        )
        print(f"wrote {out}")
        return 0

    return run


def cmd_eval(args) -> int:
    cfg = load_run_config(args.config)

    def run() -> int:
        out = resolve_run_dir(_out_path(args.out))
        pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
        pred_stems = {p.stem for p in pred_dir.glob("*.png")}
        gt_stems = {p.stem for p in gt_dir.glob("*.png")}
        stems = sorted(pred_stems & gt_stems)
        for stem in sorted(pred_stems ^ gt_stems):
            print(f"warning: unpaired stem {stem!r}; skipped", file=sys.stderr)
        if not stems:
            raise RuntimeError("no paired prediction/ground-truth files")
        preds = [pngio.load_image(pred_dir / f"{s}.png") for s in stems]
        gts = [pngio.load_image(gt_dir / f"{s}.png") for s in stems]
        masks = None
        if args.mask_dir:
            masks = [pngio.load_mask(Path(args.mask_dir) / f"{s}.png") for s in stems]
        report, rows = evaluate_pairs(
            preds, gts, masks, ExtractorConfig(seed=cfg["eval"]["extractor_seed"])
        )
        (out / "report.json").write_text(report.to_json())
        with open(out / "per_sample.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["stem"] + list(rows[0].keys()))
            writer.writeheader()
            for stem, row in zip(stems, rows):
                writer.writerow({"stem": stem, **row})
        echo_config(cfg, out)
        print(report.to_json(), end="")
        print(f"run dir: {out}")
        return 0

    return run


# -- ablate ------------------------------------------------------------------------


def _ablation_cells(axis: str, cfg: dict) -> list[tuple[str, dict]]:
    if axis == "mode":
        return [
            (f"mode-{m}", {"train": {"trainable_mode": m}})
            for m in ("all_attention", "mmdit_attention", "singledit_attention")
        ]
    if axis == "text":
        cells = []
        for train_mode in ("ordinary", "integrated"):
            for infer_mode in ("ordinary", "integrated"):
                cells.append(
                    (
                        f"train-{train_mode}_infer-{infer_mode}",
                        {
                            "train": {"caption_mode": train_mode},
                            "infer": {"caption_mode": infer_mode},
                        },
                    )
                )
        return cells
    if axis == "guidance":
        return [
            (f"guidance-{g:g}", {"train": {"guidance_train": g}})
            for g in GUIDANCE_AXIS_VALUES
        ]
    raise ValueError(f"unknown ablation axis {axis!r}; choose from {ABLATE_AXES}")


def _evaluate_cell(cfg, runtime_model, codec, text_encoder, test_samples):
    icfg = InferenceConfig(**cfg["infer"])
    n_eval = min(cfg["eval"]["n_samples"], len(test_samples))
    preds, gts, masks = [], [], []
    for s in test_samples[:n_eval]:
        caption = resolve_caption(s.garment_caption, s.person_caption, icfg.caption_mode)
        result = try_on(
            s.garment_image, s.person_image, s.mask, caption,
            runtime_model, codec, text_encoder, icfg,
        )
        preds.append(result)
        gts.append(s.person_image)
        masks.append(s.mask)
    report, _ = evaluate_pairs(
        preds, gts, masks, ExtractorConfig(seed=cfg["eval"]["extractor_seed"])
    )
    return report


def cmd_ablate(args) -> int:
    base_cfg = load_run_config(args.config, preset=args.preset)
    cells = _ablation_cells(args.axis, base_cfg)

    def run() -> int:
        from .config import _merge  # cell overrides reuse schema validation

        out = resolve_run_dir(_out_path(args.out))
        samples = ds.load_dataset(args.data)
        if not samples:
            raise RuntimeError(f"no usable samples under {args.data}")
        train_split, test_split = ds.split(
            samples, base_cfg["data"]["train_fraction"], base_cfg["data"]["split_seed"]
        )
        base_codec, codec_info = build_codec(base_cfg, _pair_images(train_split))
        codec_state = base_codec.state_arrays()
        table = []
        failures = []
        for name, override in cells:
            cell_cfg = _merge(base_cfg, override)
            cell_dir = out / name
            cell_dir.mkdir(parents=True, exist_ok=True)
            try:
                codec = Codec(base_codec.cfg)
                if codec.cfg.mode == "learned":
                    codec.load_state_arrays(codec_state)
                    codec.latent_scale = base_codec.latent_scale
                model = build_model(cell_cfg, codec)
                text_encoder = build_text_encoder(cell_cfg)
                tcfg = train_config_from(cell_cfg)
                print(f"[{name}] training ({tcfg.trainable_mode}, g={tcfg.guidance_train}, "
                      f"captions={tcfg.caption_mode})")
                train(train_split, model, codec, text_encoder, tcfg, out_dir=cell_dir)
                report = _evaluate_cell(cell_cfg, model, codec, text_encoder, test_split)
                (cell_dir / "report.json").write_text(report.to_json())
                echo_config(cell_cfg, cell_dir)
                sel = model.select_trainable(tcfg.trainable_mode)
                table.append(
                    {
                        "cell": name,
                        "ssim": round(report.ssim, 4),
                        "fid": round(report.fid, 4),
                        "kid": round(report.kid, 5),
                        "masked_mse": round(report.masked_mse, 5),
                        "proxy_perceptual": round(report.proxy_perceptual, 4),
                        "trainable_params": model.param_count(sel),
                    }
                )
            except Exception as exc:  # keep earlier cells' artifacts
                failures.append((name, exc))
                print(f"[{name}] failed: {exc}", file=sys.stderr)
        if table:
            with open(out / "comparison.csv", "w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=list(table[0].keys()))
                writer.writeheader()
                writer.writerows(table)
            widths = {k: max(len(k), *(len(str(r[k])) for r in table)) for k in table[0]}
            header = "  ".join(k.ljust(widths[k]) for k in table[0])
            print(header)
            print("-" * len(header))
            for row in table:
                print("  ".join(str(row[k]).ljust(widths[k]) for k in row))
        echo_config(base_cfg, out)
        print(f"run dir: {out}")
        if failures:
            raise RuntimeError(f"{len(failures)} ablation cell(s) failed: "
                               f"{', '.join(n for n, _ in failures)}")
        return 0

    return run


# -- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tryondit",
        description="Width-concatenated garment/person try-on with a rectified-flow DiT",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic try-on dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--size", default=None, help="HxW, e.g. 64x48")
    p.add_argument("--config", default=None)
    p.set_defaults(prepare=cmd_gen_data)

    p = sub.add_parser("train", help="train the try-on transformer")
    p.add_argument("--config", default=None)
    p.add_argument("--preset", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", default=None, help="trainable selection arm")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--codec-from", default=None, help="reuse the codec from a checkpoint")
    p.set_defaults(prepare=cmd_train)

    p = sub.add_parser("infer", help="run try-on for one garment/person pair")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--garment", required=True)
    p.add_argument("--person", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--caption", required=True,
                   help="text file: line 1 garment description, line 2 person description")
    p.add_argument("--out", required=True)
    p.add_argument("--panel", default=None, help="also write the two-panel canvas PNG")
    p.add_argument("--guidance", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--caption-mode", default=None, choices=("integrated", "ordinary", "none"))
    p.add_argument("--no-paste-back", action="store_true")
    p.add_argument("--config", default=None)
    p.set_defaults(prepare=cmd_infer)

    p = sub.add_parser("eval", help="evaluate predictions against ground truth")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--mask-dir", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(prepare=cmd_eval)

    p = sub.add_parser("ablate", help="sweep one ablation axis and compare")
    p.add_argument("--config", default=None)
    p.add_argument("--preset", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--axis", required=True, choices=ABLATE_AXES)
    p.add_argument("--out", required=True)
    p.set_defaults(prepare=cmd_ablate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = args.prepare(args)
    except (ConfigError, ValueError) as exc:
        _fail(str(exc))
        return 2
    try:
        return run()
    except Exception as exc:
        _fail(str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
