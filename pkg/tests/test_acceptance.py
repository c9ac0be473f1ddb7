"""Acceptance gate: every criterion prints one PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s`. Criterion 5 performs a
real 2000-step training run (the dominant cost, ~10-15 min CPU);
criterion 6 reuses its artifacts.
"""
import json
from pathlib import Path

import numpy as np
import pytest

from tryondit import autograd as ag
from tryondit.autoencoder import Codec, CodecConfig
from tryondit.autograd import Var
from tryondit.cli import main
from tryondit.core import (
    concat_width,
    crop_right_half,
    depth_to_space,
    pack,
    space_to_depth,
    unpack,
)
from tryondit.dataset import (
    SynthConfig,
    dominant_palette_color,
    render_sample,
    split,
)
from tryondit.dit import (
    DiTModel,
    ModelConfig,
    attention_param_count,
    grid_coords,
    select_trainable,
)
from tryondit.inference import (
    InferenceConfig,
    denoise_loop,
    postprocess,
    prepare_inputs,
    resolve_caption,
    token_dims_for_codec,
    try_on,
)
from tryondit.metrics import (
    PSNR_MAX,
    FeatureMatrix,
    _gaussian_window,
    fid,
    kid,
    masked_error,
    ssim,
    ssim_window_size,
)
from tryondit import pngio
from tryondit.text import Caption, TextEncoder, drop_caption
from tryondit.training import TrainConfig, Trainer, rf_interpolate, rf_target, sample_t


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"\n[ACCEPTANCE {criterion:02d}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {criterion}: {detail}"


# -- 1. structural exactness -------------------------------------------------------


def test_criterion_1_structural_exactness():
    rng = np.random.default_rng(1)
    for _ in range(100):
        latent = rng.standard_normal((5, 6, 8))
        assert np.array_equal(unpack(pack(latent)), latent)
    for r in (2, 4, 8):
        for _ in range(100):
            x = rng.standard_normal((3, 2 * r, 3 * r))
            assert np.array_equal(depth_to_space(space_to_depth(x, r), r), x)
    codec = Codec(CodecConfig(mode="invertible", factor=8))
    for _ in range(100):
        img = rng.uniform(-1, 1, size=(3, 32, 48))
        assert np.array_equal(codec.decode(codec.encode(img)), img)
    for _ in range(100):
        a = rng.uniform(-1, 1, size=(3, 16, 16))
        b = rng.uniform(-1, 1, size=(3, 16, 16))
        assert np.array_equal(crop_right_half(concat_width(a, b)), b)

    # shape chain at f=8, p=2: 3xHx2W -> 16 x H/8 x 2W/8 -> 64-dim tokens,
    # mask 1xHx2W -> 64 x H/8 x 2W/8 -> 256-dim tokens
    h, w2 = 64, 96
    codec16 = Codec(CodecConfig(mode="learned", factor=8, latent_channels=16, seed=0))
    pair = rng.uniform(-1, 1, size=(3, h, w2)).astype(np.float32)
    latent = codec16.encode(pair)
    tokens = pack(latent)
    mask_grid = space_to_depth(np.zeros((1, h, w2)), 8)
    mask_tokens = pack(mask_grid)
    chain_ok = (
        latent.shape == (16, h // 8, w2 // 8)
        and tokens.token_dim == 64
        and tokens.token_count == (h // 16) * (w2 // 16)
        and mask_grid.shape == (64, h // 8, w2 // 8)
        and mask_tokens.token_dim == 256
    )
    report(1, chain_ok, "bit-exact roundtrips x100 and the f=8/p=2 shape chain")


# -- 2. rectified-flow algebra -------------------------------------------------------


def test_criterion_2_rf_algebra(tmp_path):
    rng = np.random.default_rng(2)
    x0 = rng.standard_normal((24, 32)).astype(np.float32)
    eps = rng.standard_normal((24, 32)).astype(np.float32)
    endpoints_ok = np.array_equal(rf_interpolate(x0, eps, 0.0), x0) and np.array_equal(
        rf_interpolate(x0, eps, 1.0), eps
    )
    one_step_ok = True
    for t in (1.0, 0.9, 0.5, 0.2, 0.04):
        z = rf_interpolate(x0, eps, t)
        back = z + (0.0 - t) * ((z - x0) / t)
        one_step_ok &= bool(np.abs(back - x0).max() <= 1e-6)

    # full pipeline with invertible codec and the exact-velocity oracle:
    # zero masked-region error after the 8-bit file boundary
    sample = render_sample(SynthConfig(n_samples=1, seed=3, size=(32, 32)), 0)
    pngio.save_image(tmp_path / "person.png", sample.person_image)
    person = pngio.load_image(tmp_path / "person.png")
    codec = Codec(CodecConfig(mode="invertible", factor=4))
    text_enc = TextEncoder(vocab_size=256, max_tokens=16, d_text=16, seed=0)
    cap = resolve_caption(sample.garment_caption, sample.person_caption, "integrated")
    inputs = prepare_inputs(
        sample.garment_image, person, sample.mask, cap, codec, text_enc,
        np.random.default_rng(0), include_clean=True,
    )
    x0_tokens = inputs.clean.values

    z0 = denoise_loop(
        lambda z, t: (z - x0_tokens) / t, inputs, InferenceConfig(num_steps=9)
    )
    out = postprocess(z0, person, sample.mask, codec, paste_back=True)
    pngio.save_image(tmp_path / "out.png", out)
    reloaded = pngio.load_image(tmp_path / "out.png")
    mse, psnr = masked_error(reloaded, person, sample.mask)
    pipeline_ok = mse == 0.0 and psnr == PSNR_MAX
    report(
        2,
        endpoints_ok and one_step_ok and pipeline_ok,
        f"endpoints exact, 1-step Euler <=1e-6, oracle pipeline masked error {mse}",
    )


# -- 3. gradient correctness -----------------------------------------------------------


def test_criterion_3_gradient_correctness():
    cfg = ModelConfig(
        d_model=8, n_heads=2, n_mmdit=1, n_singledit=1, d_text=8,
        token_dim_in=12, token_dim_out=4, rope_dims=(2, 2), seed=5, dtype="float64",
    )
    model = DiTModel(cfg)
    rng = np.random.default_rng(7)
    tokens = rng.standard_normal((2, 6, 12))
    coords = grid_coords(2, 3)
    text_seq = rng.standard_normal((2, 5, 8))
    text_len = np.array([3, 5])
    text_seq[0, 3:] = 0.0
    pooled = rng.standard_normal((2, 8))
    t = rng.uniform(0, 1, 2)
    g = np.full(2, 3.5)
    target = rng.standard_normal((2, 6, 4))

    def loss_value():
        out = model.forward(tokens, coords, text_seq, text_len, pooled, t, g)
        return ag.mean((out - Var(target)) ** 2.0)

    for p in model.params.values():
        p.requires_grad = True
        p.grad = None
    loss_value().backward()

    names = sorted(model.params)
    h = 1e-5
    worst = 0.0
    for _ in range(50):
        name = names[rng.integers(len(names))]
        p = model.params[name]
        idx = tuple(rng.integers(s) for s in p.shape)
        orig = p.data[idx]
        p.data[idx] = orig + h
        hi = float(loss_value().data)
        p.data[idx] = orig - h
        lo = float(loss_value().data)
        p.data[idx] = orig
        fd = (hi - lo) / (2 * h)
        ad = p.grad[idx]
        worst = max(worst, abs(ad - fd) / max(abs(ad), abs(fd), 1e-6))
    report(3, worst < 1e-4, f"max relative gradient error {worst:.2e} over 50 parameters")


# -- 4. freeze-set soundness ------------------------------------------------------------


def test_criterion_4_freeze_set(make_world):
    ok_all = True
    details = []
    for mode in ("all_attention", "mmdit_attention", "singledit_attention"):
        world = make_world(seed=4)
        trainer = Trainer(
            world.model, world.codec, world.text_encoder, world.samples,
            TrainConfig(steps=10, batch_size=2, seed=3, trainable_mode=mode,
                        checkpoint_every=0),
        )
        selected = set(trainer.selection.parameter_paths)
        frozen_before = {
            n: p.data.copy() for n, p in world.model.params.items() if n not in selected
        }
        for _ in range(10):
            trainer.training_step(trainer._next_batch())
        frozen_ok = all(
            np.array_equal(world.model.params[n].data, arr)
            for n, arr in frozen_before.items()
        )
        count_ok = world.model.param_count(trainer.selection) == attention_param_count(
            world.model_cfg, mode
        )
        ok_all &= frozen_ok and count_ok
        details.append(f"{mode}: frozen={frozen_ok} count={count_ok}")

    params = make_world(seed=4).model.params
    mm = set(select_trainable(params, "mmdit_attention").parameter_paths)
    sd = set(select_trainable(params, "singledit_attention").parameter_paths)
    al = set(select_trainable(params, "all_attention").parameter_paths)
    partition_ok = (mm | sd == al) and not (mm & sd)
    report(4, ok_all and partition_ok, "; ".join(details) + f"; partition={partition_ok}")


# -- 5 & 6. the toy training run ----------------------------------------------------------


@pytest.fixture(scope="module")
def toy_run():
    """Criterion-5 configuration: 64x48 images, 256 train pairs, 2000 steps,
    singledit_attention. Shared with criterion 6."""
    synth = SynthConfig(n_samples=288, seed=0)
    samples = [render_sample(synth, i) for i in range(288)]
    train_split, test_split = split(samples, 256 / 288, seed=0)
    codec = Codec(CodecConfig(mode="learned", factor=4, latent_channels=8, seed=0))
    pair_images = [
        np.concatenate([s.garment_image, s.person_image], axis=2)
        for s in train_split[:128]
    ]
    codec.train_codec(pair_images, steps=300, lr=4e-3, seed=1)
    din, dout = token_dims_for_codec(codec.cfg)
    model = DiTModel(ModelConfig(token_dim_in=din, token_dim_out=dout, seed=0))
    text_encoder = TextEncoder(vocab_size=512, max_tokens=32, d_text=64, seed=0)
    trainer = Trainer(
        model, codec, text_encoder, train_split,
        TrainConfig(steps=2000, batch_size=8, lr=1e-3, seed=0,
                    trainable_mode="singledit_attention", checkpoint_every=0),
    )
    losses = [trainer.training_step(trainer._next_batch()) for _ in range(2000)]
    return {
        "losses": np.asarray(losses),
        "model": model,
        "codec": codec,
        "text_encoder": text_encoder,
        "test_split": test_split,
        "din_dout": (din, dout),
    }


def test_criterion_5_training_convergence(toy_run):
    losses = toy_run["losses"]
    first = float(losses[:50].mean())
    last = float(losses[-50:].mean())
    finite = bool(np.isfinite(losses).all())
    ok = finite and last <= 0.5 * first
    report(
        5, ok,
        f"singledit_attention 2000 steps: first-50 {first:.4f}, final-50 {last:.4f}, "
        f"ratio {last / first:.3f}, finite={finite}",
    )


def hue_match_rate(model, codec, text_encoder, test_split, num_steps=28, n=32):
    icfg = InferenceConfig(num_steps=num_steps, guidance=30.0, seed=0)
    hits = 0
    for s in test_split[:n]:
        cap = resolve_caption(s.garment_caption, s.person_caption, "integrated")
        result = try_on(
            s.garment_image, s.person_image, s.mask, cap,
            model, codec, text_encoder, icfg,
        )
        got = dominant_palette_color(result, s.mask[0].astype(bool))
        hits += got == s.garment_caption.split()[2]
    return hits / n


def test_criterion_6_pattern_transfer(toy_run):
    palette_size = 6
    chance_bound = 2.0 / palette_size + 0.10
    trained = hue_match_rate(
        toy_run["model"], toy_run["codec"], toy_run["text_encoder"],
        toy_run["test_split"],
    )
    din, dout = toy_run["din_dout"]
    untrained_model = DiTModel(ModelConfig(token_dim_in=din, token_dim_out=dout, seed=0))
    untrained = hue_match_rate(
        untrained_model, toy_run["codec"], toy_run["text_encoder"],
        toy_run["test_split"],
    )
    ok = trained >= 0.70 and untrained <= chance_bound
    report(
        6, ok,
        f"dominant-hue transfer on 32 held-out: trained {trained:.2%} (need >=70%), "
        f"untrained {untrained:.2%} (chance bound {chance_bound:.2%})",
    )


# -- 7. statistics ---------------------------------------------------------------------------


def test_criterion_7_dropout_and_t_statistics():
    rng = np.random.default_rng(77)
    cap = Caption("a striped red top")
    drops = sum(drop_caption(cap, 0.1, rng).text == "" for _ in range(10_000))
    rate = drops / 10_000
    dropout_ok = 0.08 <= rate <= 0.12

    t = sample_t(np.random.default_rng(78), 10_000)
    bins = 20
    observed, _ = np.histogram(t, bins=bins, range=(0.0, 1.0))
    expected = 10_000 / bins
    chi2 = float(((observed - expected) ** 2 / expected).sum())
    crit = 36.1909  # chi-square 0.99 quantile, 19 dof
    t_ok = chi2 < crit
    report(
        7, dropout_ok and t_ok,
        f"dropout rate {rate:.4f} in [0.08, 0.12]; t chi2 {chi2:.2f} < {crit} (1% level)",
    )


# -- 8. metrics self-consistency ----------------------------------------------------------------


def test_criterion_8_metrics_self_consistency():
    rng = np.random.default_rng(8)
    x = rng.uniform(-1, 1, size=(3, 8, 8))
    y = rng.uniform(-1, 1, size=(3, 8, 8))
    ssim_self_ok = abs(ssim(x, x) - 1.0) <= 1e-12

    win = ssim_window_size(8, 8)
    kernel = _gaussian_window(win, 1.5)
    c1, c2 = 0.01**2, 0.03**2
    vals = []
    xs = (x + 1) / 2
    ys = (y + 1) / 2
    for c in range(3):
        for i in range(8 - win + 1):
            for j in range(8 - win + 1):
                px = xs[c, i : i + win, j : j + win]
                py = ys[c, i : i + win, j : j + win]
                mx, my = (px * kernel).sum(), (py * kernel).sum()
                vx = (px * px * kernel).sum() - mx * mx
                vy = (py * py * kernel).sum() - my * my
                vxy = (px * py * kernel).sum() - mx * my
                vals.append(
                    ((2 * mx * my + c1) * (2 * vxy + c2))
                    / ((mx**2 + my**2 + c1) * (vx + vy + c2))
                )
    ssim_oracle_ok = abs(ssim(x, y) - float(np.mean(vals))) <= 1e-10

    feats = FeatureMatrix(rng.standard_normal((256, 8)), "acc")
    fid_self_ok = fid(feats, feats) <= 1e-6
    ga = FeatureMatrix(np.random.default_rng(81).standard_normal((10_000, 1)), "acc")
    gb = FeatureMatrix(np.random.default_rng(82).standard_normal((10_000, 1)) + 1.0, "acc")
    fid_gauss = fid(ga, gb)
    fid_gauss_ok = abs(fid_gauss - 1.0) <= 0.05

    xa = rng.standard_normal((16, 5))
    xb = rng.standard_normal((16, 5)) + 0.3
    d = 5
    kfn = lambda u, v: (float(u @ v) / d + 1.0) ** 3
    saa = sum(kfn(xa[i], xa[j]) for i in range(16) for j in range(16) if i != j)
    sbb = sum(kfn(xb[i], xb[j]) for i in range(16) for j in range(16) if i != j)
    sab = sum(kfn(xa[i], xb[j]) for i in range(16) for j in range(16))
    brute = saa / (16 * 15) + sbb / (16 * 15) - 2 * sab / 256
    kid_brute_ok = (
        abs(kid(FeatureMatrix(xa, "acc"), FeatureMatrix(xb, "acc")) - brute) <= 1e-10
    )

    null_rng = np.random.default_rng(83)
    null_vals = np.asarray([
        kid(
            FeatureMatrix(null_rng.standard_normal((200, 4)), "acc"),
            FeatureMatrix(null_rng.standard_normal((200, 4)), "acc"),
        )
        for _ in range(100)
    ])
    se = null_vals.std(ddof=1) / 10.0
    kid_null_ok = abs(null_vals.mean()) <= 2 * se
    ok = ssim_self_ok and ssim_oracle_ok and fid_self_ok and fid_gauss_ok and kid_brute_ok and kid_null_ok
    report(
        8, ok,
        f"ssim self=1 ({ssim_self_ok}), window oracle 1e-10 ({ssim_oracle_ok}), "
        f"fid self<=1e-6 ({fid_self_ok}), gaussian fid {fid_gauss:.3f} (+-0.05), "
        f"kid brute 1e-10 ({kid_brute_ok}), kid null within 2 SE ({kid_null_ok})",
    )


# -- 9. ablation harness ----------------------------------------------------------------------


ABLATE_CFG = {
    "data": {"n_samples": 10, "size": [32, 32], "train_fraction": 0.8},
    "codec": {"mode": "invertible", "factor": 4, "train_steps": 0},
    "model": {"d_model": 16, "n_heads": 2, "n_mmdit": 1, "n_singledit": 1,
              "d_text": 16, "rope_dims": [4, 4]},
    "text": {"max_tokens": 16},
    "train": {"steps": 2, "batch_size": 2, "checkpoint_every": 0},
    "infer": {"num_steps": 1},
    "eval": {"n_samples": 2},
}


def test_criterion_9_ablation_axes(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(ABLATE_CFG))
    data = tmp_path / "data"
    assert main(["gen-data", "--out", str(data), "--n", "10", "--seed", "2",
                 "--size", "32x32"]) == 0
    expected = {
        "mode": {"mode-all_attention", "mode-mmdit_attention", "mode-singledit_attention"},
        "text": {"train-ordinary_infer-ordinary", "train-ordinary_infer-integrated",
                 "train-integrated_infer-ordinary", "train-integrated_infer-integrated"},
        "guidance": {"guidance-2", "guidance-3.5", "guidance-30"},
    }
    ok = True
    details = []
    for axis, cells in expected.items():
        out = tmp_path / f"ablate-{axis}"
        rc = main(["ablate", "--config", str(cfg_path), "--data", str(data),
                   "--axis", axis, "--out", str(out)])
        rows = (out / "comparison.csv").read_text().strip().splitlines()
        found = {p.name for p in out.iterdir() if p.is_dir()}
        axis_ok = rc == 0 and found == cells and len(rows) == len(cells) + 1
        if axis == "guidance":
            g_vals = {
                json.loads((out / c / "effective_config.json").read_text())["train"]["guidance_train"]
                for c in cells
            }
            axis_ok &= g_vals == {2, 3.5, 30}
        ok &= axis_ok
        details.append(f"{axis}: {len(cells)} cells ({axis_ok})")
    report(9, ok, "; ".join(details) + "; comparison tables emitted")


# -- 10. determinism -----------------------------------------------------------------------------


def _tree_bytes(root: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def test_criterion_10_determinism(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(ABLATE_CFG))

    data_a, data_b = tmp_path / "dataA", tmp_path / "dataB"
    for d in (data_a, data_b):
        assert main(["gen-data", "--out", str(d), "--n", "6", "--seed", "4",
                     "--size", "32x32"]) == 0
    gen_ok = _tree_bytes(data_a) == _tree_bytes(data_b)

    run_a = tmp_path / "runA"
    assert main(["train", "--config", str(cfg_path), "--data", str(data_a),
                 "--out", str(run_a)]) == 0
    # rerun FROM THE ECHOED CONFIG into a fresh directory
    run_b = tmp_path / "runB"
    assert main(["train", "--config", str(run_a / "effective_config.json"),
                 "--data", str(data_a), "--out", str(run_b)]) == 0
    train_ok = _tree_bytes(run_a) == _tree_bytes(run_b)

    infer_args = [
        "infer", "--ckpt", str(run_a / "checkpoint.bin"),
        "--garment", str(data_a / "cloth" / "00000.png"),
        "--person", str(data_a / "image" / "00000.png"),
        "--mask", str(data_a / "agnostic-mask" / "00000.png"),
        "--caption", str(data_a / "caption" / "00000.txt"),
        "--steps", "2", "--seed", "5",
    ]
    assert main(infer_args + ["--out", str(tmp_path / "i1.png")]) == 0
    assert main(infer_args + ["--out", str(tmp_path / "i2.png")]) == 0
    infer_ok = (tmp_path / "i1.png").read_bytes() == (tmp_path / "i2.png").read_bytes()

    eval_a, eval_b = tmp_path / "evalA", tmp_path / "evalB"
    for out in (eval_a, eval_b):
        assert main(["eval", "--pred-dir", str(data_a / "image"),
                     "--gt-dir", str(data_a / "image"),
                     "--mask-dir", str(data_a / "agnostic-mask"),
                     "--out", str(out)]) == 0
    eval_ok = _tree_bytes(eval_a) == _tree_bytes(eval_b)

    ok = gen_ok and train_ok and infer_ok and eval_ok
    report(
        10, ok,
        f"byte-identical reruns: gen-data={gen_ok} train(from echoed config)={train_ok} "
        f"infer={infer_ok} eval={eval_ok}",
    )
