#!/usr/bin/env python3
"""Drive the ablation harness over its three axes at walkthrough scale.

Each axis reproduces one comparison family: trainable-module arms, the
ordinary-vs-integrated caption grid, and the training guidance scale
{2, 3.5, 30} (inference fixed at 30). Runs are deliberately short here;
real sweeps go through `tryondit ablate` with a bigger config.
"""
import json
import tempfile
from pathlib import Path

from tryondit.cli import main

cfg = {
    "data": {"n_samples": 12, "size": [32, 32], "train_fraction": 0.75},
    "codec": {"mode": "invertible", "factor": 4, "train_steps": 0},
    "model": {"d_model": 16, "n_heads": 2, "n_mmdit": 1, "n_singledit": 1,
              "d_text": 16, "rope_dims": [4, 4]},
    "text": {"max_tokens": 16},
    "train": {"steps": 4, "batch_size": 4, "checkpoint_every": 0},
    "infer": {"num_steps": 2},
    "eval": {"n_samples": 3},
}

root = Path(tempfile.mkdtemp(prefix="tryondit-ablate-"))
cfg_path = root / "cfg.json"
cfg_path.write_text(json.dumps(cfg))
data = root / "data"
assert main(["gen-data", "--out", str(data), "--n", "12", "--seed", "1",
             "--size", "32x32"]) == 0

for axis in ("mode", "text", "guidance"):
    out = root / f"ablate-{axis}"
    print(f"\n=== axis: {axis} ===")
    rc = main(["ablate", "--config", str(cfg_path), "--data", str(data),
               "--axis", axis, "--out", str(out)])
    assert rc == 0
    print("cells:", sorted(p.name for p in out.iterdir() if p.is_dir()))

print(f"\nartifacts under {root}")
