"""Evaluation metrics: SSIM, Fréchet/kernel feature distances, masked error.

Distribution distances run over a FIXED randomly-initialized conv
extractor (never trained), so scores are comparable across runs of this
package — every report carries the extractor_id to enforce that — but
deliberately NOT comparable to published numbers computed with
Inception features. The perceptual proxy is a mean paired feature-space
L2 under the same extractor and is labeled as a proxy for the same
reason.
"""
from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from . import autograd as ag
from .autograd import Var
from .core import check_image, check_mask

PSNR_MAX = 300.0  # sentinel for zero-error PSNR

_SSIM_K1 = 0.01
_SSIM_K2 = 0.03
_SSIM_WIN = 11
_SSIM_SIGMA = 1.5


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray  # (n_samples, d_feat)
    extractor_id: str

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class MetricReport:
    ssim: float
    fid: float
    kid: float
    masked_mse: float
    masked_psnr: float
    proxy_perceptual: float
    n: int
    extractor_id: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


# -- SSIM -----------------------------------------------------------------------


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim_window_size(h: int, w: int) -> int:
    """11, shrunk to the largest odd size that fits small images."""
    m = min(h, w, _SSIM_WIN)
    return m if m % 2 else m - 1


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity over valid window positions.

    Gaussian 11x11 window (sigma 1.5), K1=0.01, K2=0.03, dynamic range 1
    after mapping [-1, 1] model values to [0, 1]; channel-averaged.
    """
    a = check_image(a, "a")
    b = check_image(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    x = ((np.asarray(a, dtype=np.float64) + 1.0) / 2.0)
    y = ((np.asarray(b, dtype=np.float64) + 1.0) / 2.0)
    _, h, w = x.shape
    win = ssim_window_size(h, w)
    kernel = _gaussian_window(win, _SSIM_SIGMA)
    c1 = _SSIM_K1**2
    c2 = _SSIM_K2**2

    def filt(img: np.ndarray) -> np.ndarray:
        v = np.lib.stride_tricks.sliding_window_view(img, (win, win), axis=(1, 2))
        return np.tensordot(v, kernel, axes=([3, 4], [0, 1]))

    mu_x = filt(x)
    mu_y = filt(y)
    sxx = filt(x * x) - mu_x * mu_x
    syy = filt(y * y) - mu_y * mu_y
    sxy = filt(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (sxx + syy + c2)
    return float((num / den).mean())


# -- feature extractor --------------------------------------------------------------


_EXTRACTOR_LAYERS = ((3, 16), (16, 32), (32, 64))


@dataclass(frozen=True)
class ExtractorConfig:
    seed: int = 0
    d_feat: int = 64

    @property
    def extractor_id(self) -> str:
        arch = "|".join(f"conv3x3s2:{a}->{b}" for a, b in _EXTRACTOR_LAYERS)
        digest = hashlib.sha256(f"{arch}|gmp|{self.d_feat}".encode()).hexdigest()[:8]
        return f"randconv-seed{self.seed}-{digest}"


class FeatureExtractor:
    """Fixed seeded random conv net; forward-only, never trained."""

    def __init__(self, cfg: ExtractorConfig = ExtractorConfig()):
        self.cfg = cfg
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xFEA7]))
        self.weights = []
        for cin, cout in _EXTRACTOR_LAYERS:
            scale = 1.0 / np.sqrt(cin * 9)
            w = rng.standard_normal((cout, cin, 3, 3)) * scale
            b = rng.standard_normal(cout) * 0.1
            self.weights.append((w, b))
        if _EXTRACTOR_LAYERS[-1][1] != cfg.d_feat:
            raise ValueError("d_feat must match the final conv width (64)")

    def __call__(self, images: np.ndarray) -> np.ndarray:
        x = Var(np.asarray(images, dtype=np.float64))
        for w, b in self.weights:
            x = ag.conv2d(x, Var(w), Var(b), stride=2, padding=1)
            x = ag.tanh(x)
        feats = x.data.mean(axis=(2, 3))
        return feats


def extract_features(
    images: list[np.ndarray] | np.ndarray, cfg: ExtractorConfig = ExtractorConfig()
) -> FeatureMatrix:
    """Map images (each (3, H, W), shared shape) to a (n, d_feat) matrix."""
    arrs = [check_image(im) for im in images]
    shapes = {a.shape for a in arrs}
    if len(shapes) > 1:
        raise ValueError(f"images must share one shape; got {sorted(shapes)}")
    extractor = FeatureExtractor(cfg)
    values = extractor(np.stack(arrs))
    return FeatureMatrix(values=values, extractor_id=cfg.extractor_id)


# -- distribution distances -----------------------------------------------------------


def _check_compatible(a: FeatureMatrix, b: FeatureMatrix) -> None:
    if a.extractor_id != b.extractor_id:
        raise ValueError(
            f"feature matrices from different extractors: "
            f"{a.extractor_id!r} vs {b.extractor_id!r}"
        )


def _sqrtm_psd(m: np.ndarray) -> np.ndarray:
    sym = (m + m.T) / 2.0
    vals, vecs = np.linalg.eigh(sym)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(a: FeatureMatrix, b: FeatureMatrix) -> float:
    """Fréchet distance between Gaussian moment fits of two feature sets.

    ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2}); the matrix
    square root comes from an eigendecomposition of the symmetrized
    product with negative eigenvalues clipped at zero.
    """
    _check_compatible(a, b)
    for fm, name in ((a, "A"), (b, "B")):
        if fm.n < fm.d:
            warnings.warn(
                f"feature set {name} has n={fm.n} < d_feat={fm.d}; "
                "covariance estimate is rank-deficient"
            )
    xa = np.asarray(a.values, dtype=np.float64)
    xb = np.asarray(b.values, dtype=np.float64)
    mu_a, mu_b = xa.mean(axis=0), xb.mean(axis=0)
    ca = np.atleast_2d(np.cov(xa, rowvar=False))
    cb = np.atleast_2d(np.cov(xb, rowvar=False))
    rb = _sqrtm_psd(cb)
    inner = rb @ ca @ rb
    vals = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    tr_sqrt = np.sqrt(np.clip(vals, 0.0, None)).sum()
    diff = mu_a - mu_b
    return float(diff @ diff + np.trace(ca) + np.trace(cb) - 2.0 * tr_sqrt)


def _poly_kernel(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d = x.shape[1]
    return (x @ y.T / d + 1.0) ** 3


def kid(a: FeatureMatrix, b: FeatureMatrix) -> float:
    """Unbiased squared MMD with the polynomial kernel (x.y/d + 1)^3.

    Within-set sums exclude the diagonal; the estimator can be slightly
    negative under the null.
    """
    _check_compatible(a, b)
    xa = np.asarray(a.values, dtype=np.float64)
    xb = np.asarray(b.values, dtype=np.float64)
    m, n = xa.shape[0], xb.shape[0]
    if m < 2 or n < 2:
        raise ValueError(f"kid needs at least 2 samples per side; got {m}, {n}")
    kaa = _poly_kernel(xa, xa)
    kbb = _poly_kernel(xb, xb)
    kab = _poly_kernel(xa, xb)
    term_a = (kaa.sum() - np.trace(kaa)) / (m * (m - 1))
    term_b = (kbb.sum() - np.trace(kbb)) / (n * (n - 1))
    return float(term_a + term_b - 2.0 * kab.mean())


def masked_error(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray) -> tuple[float, float]:
    """(MSE, PSNR) over masked pixels only, in the [-1, 1] model range.

    PSNR uses the range's peak of 2.0; an exact match reports the
    PSNR_MAX sentinel instead of infinity.
    """
    pred = check_image(pred, "pred")
    gt = check_image(gt, "gt")
    mask = check_mask(mask)
    if pred.shape != gt.shape or mask.shape[1:] != pred.shape[1:]:
        raise ValueError(
            f"shape mismatch: pred {pred.shape}, gt {gt.shape}, mask {mask.shape}"
        )
    sel = np.broadcast_to(mask.astype(bool), pred.shape)
    if not sel.any():
        raise ValueError("mask selects no pixels")
    err = (np.asarray(pred, dtype=np.float64) - gt)[sel]
    mse = float((err**2).mean())
    if mse == 0.0:
        return 0.0, PSNR_MAX
    return mse, min(float(10.0 * np.log10(4.0 / mse)), PSNR_MAX)


def proxy_perceptual(a: FeatureMatrix, b: FeatureMatrix) -> float:
    """Mean paired feature-space L2 distance. A stand-in for a learned
    perceptual metric; NOT comparable to published perceptual scores."""
    _check_compatible(a, b)
    if a.n != b.n:
        raise ValueError(f"paired metric needs equal counts; got {a.n} vs {b.n}")
    return float(np.linalg.norm(a.values - b.values, axis=1).mean())


def evaluate_pairs(
    preds: list[np.ndarray],
    gts: list[np.ndarray],
    masks: list[np.ndarray] | None = None,
    extractor: ExtractorConfig = ExtractorConfig(),
) -> tuple[MetricReport, list[dict]]:
    """Full paired evaluation; returns the report and per-sample rows."""
    if len(preds) != len(gts) or not preds:
        raise ValueError(f"need matching non-empty lists; got {len(preds)} vs {len(gts)}")
    fa = extract_features(preds, extractor)
    fb = extract_features(gts, extractor)
    rows = []
    ssims = []
    mses, psnrs = [], []
    for i, (p, g) in enumerate(zip(preds, gts)):
        row = {"index": i, "ssim": ssim(p, g)}
        ssims.append(row["ssim"])
        if masks is not None:
            mse, psnr = masked_error(p, g, masks[i])
            row["masked_mse"] = mse
            row["masked_psnr"] = psnr
            mses.append(mse)
            psnrs.append(psnr)
        rows.append(row)
    report = MetricReport(
        ssim=float(np.mean(ssims)),
        fid=fid(fa, fb),
        kid=kid(fa, fb),
        masked_mse=float(np.mean(mses)) if mses else float("nan"),
        masked_psnr=float(np.mean(psnrs)) if psnrs else float("nan"),
        proxy_perceptual=proxy_perceptual(fa, fb),
        n=len(preds),
        extractor_id=extractor.extractor_id,
    )
    return report, rows
