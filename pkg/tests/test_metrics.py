import numpy as np
import pytest

from tryondit.metrics import (
    PSNR_MAX,
    ExtractorConfig,
    FeatureMatrix,
    _gaussian_window,
    evaluate_pairs,
    extract_features,
    fid,
    kid,
    masked_error,
    proxy_perceptual,
    ssim,
    ssim_window_size,
)


def rand_image(rng, h=16, w=16):
    return rng.uniform(-1, 1, size=(3, h, w))


# -- ssim ------------------------------------------------------------------------


def test_ssim_self_similarity():
    rng = np.random.default_rng(0)
    for _ in range(5):
        x = rand_image(rng)
        assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)


def test_ssim_inverted_image_is_low():
    # fixed mid-contrast test image: smooth gradient plus texture
    yy, xx = np.mgrid[0:24, 0:24]
    base = 0.5 * np.sin(yy / 3.0) * np.cos(xx / 4.0)
    img = np.stack([base, base * 0.8, base * 0.6]) * 0.8
    assert ssim(img, -img) < 0.5


def test_ssim_symmetry():
    rng = np.random.default_rng(1)
    a, b = rand_image(rng), rand_image(rng)
    assert abs(ssim(a, b) - ssim(b, a)) <= 1e-12


def test_ssim_range():
    rng = np.random.default_rng(2)
    for _ in range(5):
        v = ssim(rand_image(rng), rand_image(rng))
        assert -1.0 <= v <= 1.0


def test_ssim_rejects_shape_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        ssim(np.zeros((3, 16, 16)), np.zeros((3, 16, 18)))


def brute_force_ssim(a, b):
    """Independent per-window recomputation with explicit loops."""
    x = (np.asarray(a, dtype=np.float64) + 1) / 2
    y = (np.asarray(b, dtype=np.float64) + 1) / 2
    _, h, w = x.shape
    win = ssim_window_size(h, w)
    kernel = _gaussian_window(win, 1.5)
    c1, c2 = 0.01**2, 0.03**2
    vals = []
    for c in range(3):
        for i in range(h - win + 1):
            for j in range(w - win + 1):
                px = x[c, i : i + win, j : j + win]
                py = y[c, i : i + win, j : j + win]
                mx = (px * kernel).sum()
                my = (py * kernel).sum()
                vx = (px * px * kernel).sum() - mx * mx
                vy = (py * py * kernel).sum() - my * my
                vxy = (px * py * kernel).sum() - mx * my
                vals.append(
                    ((2 * mx * my + c1) * (2 * vxy + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2))
                )
    return float(np.mean(vals))


def test_ssim_matches_bruteforce_small_image():
    rng = np.random.default_rng(3)
    a, b = rand_image(rng, 8, 8), rand_image(rng, 8, 8)
    assert ssim_window_size(8, 8) == 7
    assert abs(ssim(a, b) - brute_force_ssim(a, b)) <= 1e-10


def test_ssim_matches_bruteforce_standard_window():
    rng = np.random.default_rng(4)
    a, b = rand_image(rng, 14, 14), rand_image(rng, 14, 14)
    assert ssim_window_size(14, 14) == 11
    assert abs(ssim(a, b) - brute_force_ssim(a, b)) <= 1e-10


# -- feature extraction ----------------------------------------------------------


def test_extract_features_deterministic():
    rng = np.random.default_rng(5)
    imgs = [rand_image(rng) for _ in range(4)]
    a = extract_features(imgs, ExtractorConfig(seed=1))
    b = extract_features(imgs, ExtractorConfig(seed=1))
    np.testing.assert_array_equal(a.values, b.values)
    assert a.extractor_id == b.extractor_id


def test_extract_features_constant_images_constant_rows():
    imgs = [np.full((3, 16, 16), v) for v in (-0.5, 0.0, 0.5)]
    feats = extract_features(imgs).values
    assert not np.array_equal(feats[0], feats[1])
    again = extract_features([imgs[0], imgs[0]]).values
    np.testing.assert_array_equal(again[0], again[1])


def test_extract_features_rejects_mixed_shapes():
    with pytest.raises(ValueError, match="share one shape"):
        extract_features([np.zeros((3, 16, 16)), np.zeros((3, 8, 8))])


def test_extract_features_separates_color_classes():
    rng = np.random.default_rng(6)
    reds = [np.clip(np.stack([np.ones((16, 16)) * 0.8, *rng.uniform(-0.1, 0.1, (2, 16, 16))]), -1, 1) for _ in range(8)]
    blues = [np.clip(np.stack([*rng.uniform(-0.1, 0.1, (2, 16, 16)), np.ones((16, 16)) * 0.8]), -1, 1) for _ in range(8)]
    fr = extract_features(reds).values
    fb = extract_features(blues).values
    within = np.linalg.norm(fr - fr.mean(0), axis=1).mean()
    between = np.linalg.norm(fr.mean(0) - fb.mean(0))
    assert between > within


# -- fid ---------------------------------------------------------------------------


def feature_matrix(values, eid="test"):
    return FeatureMatrix(values=np.asarray(values, dtype=np.float64), extractor_id=eid)


def test_fid_self_distance_near_zero():
    rng = np.random.default_rng(7)
    a = feature_matrix(rng.standard_normal((256, 8)))
    assert fid(a, a) <= 1e-6


def test_fid_symmetric():
    rng = np.random.default_rng(8)
    a = feature_matrix(rng.standard_normal((128, 4)))
    b = feature_matrix(rng.standard_normal((128, 4)) + 0.5)
    assert abs(fid(a, b) - fid(b, a)) <= 1e-8


def test_fid_matches_gaussian_closed_form():
    rng = np.random.default_rng(9)
    a = feature_matrix(rng.standard_normal((10_000, 1)))
    b = feature_matrix(rng.standard_normal((10_000, 1)) + 1.0)
    assert fid(a, b) == pytest.approx(1.0, abs=0.05)


def test_fid_rejects_extractor_mismatch():
    a = feature_matrix(np.zeros((4, 2)), "x")
    b = feature_matrix(np.zeros((4, 2)), "y")
    with pytest.raises(ValueError, match="different extractors"):
        fid(a, b)


def test_fid_warns_when_underdetermined():
    rng = np.random.default_rng(10)
    a = feature_matrix(rng.standard_normal((4, 8)))
    b = feature_matrix(rng.standard_normal((4, 8)))
    with pytest.warns(UserWarning, match="rank-deficient"):
        assert fid(a, b) >= 0.0


# -- kid ---------------------------------------------------------------------------


def brute_force_kid(xa, xb):
    m, n = len(xa), len(xb)
    d = xa.shape[1]
    k = lambda x, y: (float(x @ y) / d + 1.0) ** 3
    saa = sum(k(xa[i], xa[j]) for i in range(m) for j in range(m) if i != j)
    sbb = sum(k(xb[i], xb[j]) for i in range(n) for j in range(n) if i != j)
    sab = sum(k(xa[i], xb[j]) for i in range(m) for j in range(n))
    return saa / (m * (m - 1)) + sbb / (n * (n - 1)) - 2 * sab / (m * n)


def test_kid_matches_bruteforce_n16():
    rng = np.random.default_rng(11)
    xa = rng.standard_normal((16, 5))
    xb = rng.standard_normal((16, 5)) + 0.3
    got = kid(feature_matrix(xa), feature_matrix(xb))
    assert abs(got - brute_force_kid(xa, xb)) <= 1e-10


def test_kid_null_is_small():
    rng = np.random.default_rng(12)
    xa = rng.standard_normal((5000, 8))
    xb = rng.standard_normal((5000, 8))
    assert abs(kid(feature_matrix(xa), feature_matrix(xb))) < 0.01


def test_kid_self_near_zero():
    rng = np.random.default_rng(13)
    x = rng.standard_normal((64, 8))
    v = kid(feature_matrix(x), feature_matrix(x))
    assert v <= 0.0 + 1e-9


def test_kid_unbiased_under_null():
    rng = np.random.default_rng(14)
    vals = []
    for _ in range(100):
        xa = rng.standard_normal((200, 4))
        xb = rng.standard_normal((200, 4))
        vals.append(kid(feature_matrix(xa), feature_matrix(xb)))
    vals = np.asarray(vals)
    se = vals.std(ddof=1) / np.sqrt(len(vals))
    assert abs(vals.mean()) <= 2 * se


def test_kid_rejects_tiny_sets():
    with pytest.raises(ValueError, match="at least 2"):
        kid(feature_matrix(np.zeros((1, 2))), feature_matrix(np.zeros((4, 2))))


# -- masked error ---------------------------------------------------------------------


def test_masked_error_identity():
    rng = np.random.default_rng(15)
    x = rand_image(rng)
    mask = np.zeros((1, 16, 16))
    mask[0, 4:8, 4:8] = 1
    mse, psnr = masked_error(x, x, mask)
    assert mse == 0.0 and psnr == PSNR_MAX


def test_masked_error_constant_offset():
    gt = np.zeros((3, 8, 8))
    pred = np.full((3, 8, 8), 0.1)
    mask = np.zeros((1, 8, 8))
    mask[0, :4] = 1
    mse, psnr = masked_error(pred, gt, mask)
    assert mse == pytest.approx(0.01, abs=1e-15)
    assert psnr == pytest.approx(10 * np.log10(4 / 0.01), abs=1e-9)


def test_masked_error_matches_pixel_loop():
    rng = np.random.default_rng(16)
    pred, gt = rand_image(rng, 8, 8), rand_image(rng, 8, 8)
    mask = (rng.random((1, 8, 8)) < 0.4).astype(float)
    mask[0, 0, 0] = 1
    mse, _ = masked_error(pred, gt, mask)
    acc, cnt = 0.0, 0
    for c in range(3):
        for i in range(8):
            for j in range(8):
                if mask[0, i, j]:
                    acc += (pred[c, i, j] - gt[c, i, j]) ** 2
                    cnt += 1
    assert abs(mse - acc / cnt) <= 1e-12


def test_masked_error_rejects_empty_mask():
    with pytest.raises(ValueError, match="no pixels"):
        masked_error(np.zeros((3, 8, 8)), np.zeros((3, 8, 8)), np.zeros((1, 8, 8)))


# -- aggregate report -------------------------------------------------------------------


def test_evaluate_pairs_report(tiny_world):
    preds = [s.person_image for s in tiny_world.samples[:4]]
    gts = [s.person_image for s in tiny_world.samples[:4]]
    masks = [s.mask for s in tiny_world.samples[:4]]
    report, rows = evaluate_pairs(preds, gts, masks)
    assert report.n == 4 and len(rows) == 4
    assert report.ssim == pytest.approx(1.0, abs=1e-12)
    assert report.fid <= 1e-6
    assert report.masked_mse == 0.0
    assert report.proxy_perceptual == 0.0
    assert report.extractor_id.startswith("randconv-")
    assert "ssim" in rows[0] and "masked_mse" in rows[0]


def test_proxy_perceptual_requires_pairing():
    a = feature_matrix(np.zeros((3, 4)))
    b = feature_matrix(np.zeros((5, 4)))
    with pytest.raises(ValueError, match="equal counts"):
        proxy_perceptual(a, b)
