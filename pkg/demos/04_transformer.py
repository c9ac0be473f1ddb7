#!/usr/bin/env python3
"""Anatomy of the toy diffusion transformer.

Demonstrates the identity-when-gated-off property, the trainable-subset
arms with their analytic parameter counts, and the 2-D rotary frame that
spans both halves of the concatenated canvas.
"""
import numpy as np

from tryondit.dit import (
    DiTModel,
    ModelConfig,
    attention_param_count,
    grid_coords,
    init_params,
    zero_residual_gates,
)

cfg = ModelConfig(token_dim_in=128, token_dim_out=32, seed=0)
model = DiTModel(cfg)
print(f"model: d={cfg.d_model}, heads={cfg.n_heads}, "
      f"{cfg.n_mmdit} dual-stream + {cfg.n_singledit} single-stream blocks, "
      f"{model.param_count()} parameters")

for mode in ("full", "all_attention", "mmdit_attention", "singledit_attention"):
    sel = model.select_trainable(mode)
    line = f"  {mode:22s} {model.param_count(sel):7d} params"
    if mode != "full":
        line += f"  (analytic: {attention_param_count(cfg, mode)})"
    print(line)

# rotary coordinates cover the full two-panel canvas in one frame, so
# attention can relate garment tokens to person tokens by relative offset
coords = grid_coords(4, 12)
print("\nfirst row of token coords (garment cols 0-5, person cols 6-11):")
print(coords[:12].T)

# with every residual gate zeroed the network collapses to its projections
rng = np.random.default_rng(0)
tokens = rng.standard_normal((1, 48, cfg.token_dim_in)).astype(np.float32)
text = np.zeros((1, 8, cfg.d_text), dtype=np.float32)
out_before = model.forward(tokens, coords, text, np.array([0]),
                           np.zeros((1, cfg.d_text)), np.array([0.5]), np.array([30.0]))
zero_residual_gates(model.params, cfg)
out_after = model.forward(tokens, coords, text, np.array([0]),
                          np.zeros((1, cfg.d_text)), np.array([0.5]), np.array([30.0]))
print(f"\noutput std with live gates {out_before.data.std():.4f} "
      f"vs gated-off {out_after.data.std():.4f} (blocks now contribute nothing)")
