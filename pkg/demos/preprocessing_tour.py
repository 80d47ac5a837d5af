"""Push one synthetic slice through preprocessing and each augmentation.

Writes PNGs to demos_out/preprocessing/ so the effect of CLAHE, NL-means,
rotation and brightness-contrast can be inspected side by side.
Run: python demos/preprocessing_tour.py
"""
from pathlib import Path

import numpy as np

from dualstream.imageproc import brightness_contrast, clahe, nl_means_denoise, write_png
from dualstream.imageproc.transforms import rotate
from dualstream.synthetic import make_quadrant_blobs


def main(out=Path("demos_out/preprocessing")):
    images, _ = make_quadrant_blobs(1, 64, seed=3)
    rng = np.random.default_rng(0)
    noisy = np.clip(images[2].astype(float) + rng.normal(0, 12, images[2].shape), 0, 255).astype(np.uint8)
    steps = {
        "0_noisy": noisy,
        "1_clahe": clahe(noisy, 2.0, (8, 8)),
    }
    steps["2_nlmeans"] = nl_means_denoise(steps["1_clahe"], 10.0, 7, 21)
    steps["3_rotate_8deg"] = rotate(steps["2_nlmeans"], 8.0)
    steps["4_brightness_contrast"] = brightness_contrast(steps["2_nlmeans"], 1.2, 15.0)
    for name, img in steps.items():
        write_png(out / f"{name}.png", img)
        print(f"{name:<24} mean={img.mean():6.1f} std={img.std():5.1f}")
    print(f"noise variance before/after NL-means: {noisy.var():.0f} / {steps['2_nlmeans'].var():.0f}")
    print(f"wrote {len(steps)} images to {out}")


if __name__ == "__main__":
    main()
