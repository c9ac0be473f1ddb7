#!/usr/bin/env python3
"""The evaluation stack: SSIM, Fréchet/kernel distances, masked error.

Feature distances use a fixed random extractor, so they are comparable
across runs of this package but not to published numbers; the report's
extractor_id pins that provenance.
"""
import numpy as np

from tryondit.dataset import SynthConfig, render_sample
from tryondit.metrics import (
    ExtractorConfig,
    evaluate_pairs,
    extract_features,
    fid,
    kid,
    masked_error,
    ssim,
)

samples = [render_sample(SynthConfig(n_samples=24, seed=11, size=(32, 32)), i)
           for i in range(24)]
persons = [s.person_image for s in samples]
garments = [s.garment_image for s in samples]

print("ssim(x, x) =", ssim(persons[0], persons[0]))
print("ssim(person, garment) =", round(ssim(persons[0], garments[0]), 4))

fp = extract_features(persons)
fg = extract_features(garments)
print(f"\nextractor {fp.extractor_id}")
print("fid(persons, persons) =", f"{fid(fp, fp):.2e}")
print("fid(persons, garments) =", round(fid(fp, fg), 3))
print("kid(persons, garments) =", round(kid(fp, fg), 4))

noisy = persons[0] + np.random.default_rng(0).normal(0, 0.05, persons[0].shape)
mse, psnr = masked_error(np.clip(noisy, -1, 1), persons[0], samples[0].mask)
print(f"\nmasked error under 0.05 noise: mse {mse:.5f}, psnr {psnr:.1f} dB")

report, rows = evaluate_pairs(
    persons[:8], persons[:8], [s.mask for s in samples[:8]], ExtractorConfig(seed=0)
)
print("\nself-evaluation report:")
print(report.to_json())
