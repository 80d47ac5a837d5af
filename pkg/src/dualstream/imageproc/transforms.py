"""Deterministic image transforms on 2-D arrays.

Integer-stage images are ``uint8`` arrays of shape (H, W).  Every op here is
pure; randomness enters only through explicit draws (see ``augment``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RESIZE_CONVENTION = "align_corners"  # output corners sample input corners exactly


def _check_image(img: np.ndarray, what: str) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if img.ndim != 2:
        raise ValueError(f"{what}: expected a grayscale (H, W) image, got shape {img.shape}")
    if img.shape[0] == 0 or img.shape[1] == 0:
        raise ValueError(f"{what}: zero-sized image")
    return img


def _to_uint8(values: np.ndarray) -> np.ndarray:
    # round half to even, then saturate
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


def _sample_bilinear(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Bilinear samples of ``img`` at in-range float coordinates."""
    h, w = img.shape
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = ys - y0
    fx = xs - x0
    f = img.astype(np.float64)
    top = f[y0, x0] * (1 - fx) + f[y0, x1] * fx
    bottom = f[y1, x0] * (1 - fx) + f[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def _axis_coords(n_in: int, n_out: int, align_corners: bool) -> np.ndarray:
    if align_corners:
        if n_out == 1:
            return np.array([(n_in - 1) / 2.0])
        return np.arange(n_out) * ((n_in - 1) / (n_out - 1))
    coords = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    return np.clip(coords, 0, n_in - 1)


def upsample_bilinear(values: np.ndarray, out_h: int, out_w: int, align_corners: bool = False) -> np.ndarray:
    """Float bilinear resampling; half-pixel centres unless ``align_corners``."""
    values = np.asarray(values, dtype=np.float64)
    ys = _axis_coords(values.shape[0], out_h, align_corners)
    xs = _axis_coords(values.shape[1], out_w, align_corners)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return _sample_bilinear(values, yy, xx)


def resize_bilinear(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resize with corner-aligned sampling.

    Output pixel (i, j) samples input coordinate
    ``(i * (H-1)/(out_h-1), j * (W-1)/(out_w-1))``; a single output row or
    column samples the input centre.  Results are rounded half-to-even, so
    the 2x2 image [[0, 0], [255, 255]] shrinks to 128.
    """
    img = _check_image(img, "resize_bilinear")
    if out_w <= 0 or out_h <= 0:
        raise ValueError("output dimensions must be positive")
    return _to_uint8(upsample_bilinear(img, out_h, out_w, align_corners=True))


# -- CLAHE -------------------------------------------------------------------


def clipped_equalization_lut(tile: np.ndarray, clip_limit: float) -> np.ndarray:
    """256-entry mapping for one tile.

    The histogram is clipped at ``clip_limit * pixels / 256`` (at least 1),
    the clipped excess is spread evenly over all bins, and the mapping is
    ``255 * cdf / pixels``.
    """
    hist = np.bincount(tile.reshape(-1), minlength=256).astype(np.float64)
    total = tile.size
    if clip_limit > 0:
        limit = max(clip_limit * total / 256.0, 1.0)
        excess = np.maximum(hist - limit, 0).sum()
        hist = np.minimum(hist, limit) + excess / 256.0
    cdf = np.cumsum(hist)
    return np.clip(np.rint(255.0 * cdf / total), 0, 255)


def clahe(img: np.ndarray, clip_limit: float = 2.0, tiles: tuple[int, int] = (8, 8)) -> np.ndarray:
    """Contrast-limited adaptive histogram equalisation.

    The image is split into ``tiles`` (rows, cols) regions (reflect-padded
    up to a multiple of the grid).  Each pixel's value is the bilinear blend
    of the mappings of the four nearest tile centres; pixels beyond the
    outermost centres use the nearest tiles only.
    """
    img = _check_image(img, "clahe")
    if img.dtype != np.uint8:
        raise ValueError("clahe expects a uint8 image")
    ty, tx = tiles
    if ty < 1 or tx < 1:
        raise ValueError("tiles must be at least 1x1")
    h, w = img.shape
    th, tw = -(-h // ty), -(-w // tx)
    padded = np.pad(img, ((0, th * ty - h), (0, tw * tx - w)), mode="reflect" if h > 1 and w > 1 else "edge")

    luts = np.empty((ty, tx, 256))
    for i in range(ty):
        for j in range(tx):
            luts[i, j] = clipped_equalization_lut(padded[i * th:(i + 1) * th, j * tw:(j + 1) * tw], clip_limit)

    # position of every pixel in tile-centre coordinates
    gy = np.clip((np.arange(h) + 0.5) / th - 0.5, 0, ty - 1)
    gx = np.clip((np.arange(w) + 0.5) / tw - 0.5, 0, tx - 1)
    y0 = np.floor(gy).astype(int)
    x0 = np.floor(gx).astype(int)
    y1 = np.minimum(y0 + 1, ty - 1)
    x1 = np.minimum(x0 + 1, tx - 1)
    wy = (gy - y0)[:, None]
    wx = (gx - x0)[None, :]
    v = img.astype(np.intp)
    Y0, X0 = y0[:, None], x0[None, :]
    Y1, X1 = y1[:, None], x1[None, :]
    out = (
        (1 - wy) * (1 - wx) * luts[Y0, X0, v]
        + (1 - wy) * wx * luts[Y0, X1, v]
        + wy * (1 - wx) * luts[Y1, X0, v]
        + wy * wx * luts[Y1, X1, v]
    )
    return _to_uint8(out)


# -- non-local means -----------------------------------------------------------


def _box_mean(a: np.ndarray, k: int) -> np.ndarray:
    """Mean over k x k windows of a (H + k - 1, W + k - 1) array -> (H, W)."""
    c = np.cumsum(np.cumsum(np.pad(a, ((1, 0), (1, 0))), axis=0), axis=1)
    s = c[k:, k:] - c[:-k, k:] - c[k:, :-k] + c[:-k, :-k]
    return s / (k * k)


def nl_means_denoise(img: np.ndarray, h: float = 10.0, template: int = 7, search: int = 21) -> np.ndarray:
    """Non-local means with patch distance weights ``exp(-d^2 / h^2)``.

    ``d^2`` is the mean squared difference between the ``template`` x
    ``template`` patches around the two pixels (no noise-variance offset,
    i.e. sigma = 0).  Candidates range over the ``search`` x ``search``
    window; borders are mirror-padded.
    """
    img = _check_image(img, "nl_means_denoise")
    if h <= 0:
        raise ValueError("h must be positive")
    if template % 2 == 0 or search % 2 == 0 or template < 1:
        raise ValueError("template and search windows must be odd")
    if template > search:
        raise ValueError("template window must not exceed the search window")
    H, W = img.shape
    tr, sr = template // 2, search // 2
    pad = tr + sr
    f = img.astype(np.float64)
    mode = "reflect" if min(H, W) > pad else "symmetric"
    p = np.pad(f, pad, mode=mode)
    centre = p[sr:sr + H + 2 * tr, sr:sr + W + 2 * tr]
    num = np.zeros((H, W))
    den = np.zeros((H, W))
    inv_h2 = 1.0 / (h * h)
    for dy in range(-sr, sr + 1):
        for dx in range(-sr, sr + 1):
            shifted = p[sr + dy:sr + dy + H + 2 * tr, sr + dx:sr + dx + W + 2 * tr]
            d2 = _box_mean((centre - shifted) ** 2, template)
            wgt = np.exp(-d2 * inv_h2)
            num += wgt * shifted[tr:tr + H, tr:tr + W]
            den += wgt
    return _to_uint8(num / den)


# -- normalisation -------------------------------------------------------------


@dataclass
class NormalizationStats:
    """Per-channel mean and std of pixel/255 over a training split."""

    mean: tuple[float, ...]
    std: tuple[float, ...]

    def __post_init__(self):
        if any(s <= 0 for s in self.std):
            raise ValueError("normalization std must be positive")

    def to_dict(self) -> dict:
        return {"mean": list(self.mean), "std": list(self.std)}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(tuple(d["mean"]), tuple(d["std"]))


def compute_normalization_stats(images) -> NormalizationStats:
    """Population mean/std of pixel/255 over all given (training) images."""
    total, count = 0.0, 0
    for im in images:
        total += float(np.asarray(im, dtype=np.float64).sum()) / 255.0
        count += np.asarray(im).size
    if count == 0:
        raise ValueError("no pixels to compute statistics from")
    mean = total / count
    sq = 0.0
    for im in images:
        sq += float(((np.asarray(im, dtype=np.float64) / 255.0 - mean) ** 2).sum())
    std = (sq / count) ** 0.5
    return NormalizationStats((mean,), (std if std > 0 else 1.0,))


def normalize(img: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    """``(pixel/255 - mean) / std`` as float32; returns (H, W) for one channel."""
    img = np.asarray(img)
    x = img.astype(np.float32) / np.float32(255.0)
    mean = np.asarray(stats.mean, dtype=np.float32)
    std = np.asarray(stats.std, dtype=np.float32)
    if img.ndim == 2:
        return (x - mean[0]) / std[0]
    return (x - mean) / std


# -- geometric / photometric augmentation ops ----------------------------------


def hflip(img: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(img)[:, ::-1])


def rotate(img: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate counter-clockwise about the image centre.

    Each output pixel is inverse-mapped into the source; if the source point
    falls outside ``[0, W-1] x [0, H-1]`` the pixel is black (0), otherwise
    it is bilinearly interpolated.
    """
    img = _check_image(img, "rotate")
    if degrees == 0:
        return img.copy()
    h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    t = np.deg2rad(degrees)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    # inverse of a counter-clockwise rotation in image (y-down) coordinates
    sx = cx + np.cos(t) * dx - np.sin(t) * dy
    sy = cy + np.sin(t) * dx + np.cos(t) * dy
    eps = 1e-9
    inside = (sx >= -eps) & (sx <= w - 1 + eps) & (sy >= -eps) & (sy <= h - 1 + eps)
    vals = _sample_bilinear(img, np.clip(sy, 0, h - 1), np.clip(sx, 0, w - 1))
    return _to_uint8(np.where(inside, vals, 0.0))


def brightness_contrast(img: np.ndarray, alpha: float = 1.2, beta: float = 15.0) -> np.ndarray:
    """``clip(alpha * x + beta, 0, 255)`` rounded to the nearest integer."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return _to_uint8(alpha * np.asarray(img, dtype=np.float64) + beta)


# -- the full preprocessing chain -----------------------------------------------


@dataclass
class PreprocessConfig:
    size: int = 224
    clip_limit: float = 2.0
    tiles: tuple[int, int] = (8, 8)
    h: float = 10.0
    template: int = 7
    search: int = 21

    def to_dict(self) -> dict:
        return {"size": self.size, "clip_limit": self.clip_limit, "tiles": list(self.tiles),
                "h": self.h, "template": self.template, "search": self.search}


def preprocess(img: np.ndarray, config: PreprocessConfig | None = None) -> np.ndarray:
    """Resize to a square, then CLAHE, then non-local-means denoising."""
    c = config or PreprocessConfig()
    out = resize_bilinear(img, c.size, c.size)
    out = clahe(out, c.clip_limit, tuple(c.tiles))
    return nl_means_denoise(out, c.h, c.template, c.search)
