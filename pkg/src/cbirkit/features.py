"""In-engine image features: Gabor filter statistics, histograms, basic HOG.

Images are carried as ImageBuffer (row-major values in [0, 1]). Decoding
from PNG/JPEG is a thin Pillow adapter; everything after it is pure numpy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import DataError, SpecError

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class ImageBuffer:
    width: int
    height: int
    channels: int
    pixels: np.ndarray  # row-major, length width*height*channels

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise DataError(f"empty image ({self.width}x{self.height})")
        if self.channels not in (1, 3):
            raise DataError(f"channels must be 1 or 3, got {self.channels}")
        px = np.asarray(self.pixels, dtype=np.float64).ravel()
        if px.size != self.width * self.height * self.channels:
            raise DataError(
                f"pixel count {px.size} != {self.width}x{self.height}x{self.channels}"
            )
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise DataError("pixel values must lie in [0, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_array(cls, arr) -> "ImageBuffer":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 2:
            return cls(arr.shape[1], arr.shape[0], 1, arr)
        if arr.ndim == 3 and arr.shape[2] in (1, 3):
            return cls(arr.shape[1], arr.shape[0], arr.shape[2], arr)
        raise DataError(f"cannot build image from array of shape {arr.shape}")

    def planes(self) -> np.ndarray:
        """Pixels as an (height, width, channels) array."""
        return self.pixels.reshape(self.height, self.width, self.channels)

    def grayscale(self) -> np.ndarray:
        """Luma-weighted (height, width) plane."""
        planes = self.planes()
        if self.channels == 1:
            return planes[:, :, 0]
        return planes @ _LUMA


def load_image(path) -> ImageBuffer:
    """Decode an image file into an ImageBuffer (Pillow adapter)."""
    from PIL import Image

    with Image.open(path) as im:
        if im.mode in ("1", "L", "I", "I;16", "F"):
            arr = np.asarray(im.convert("F"), dtype=np.float64)
            peak = 1.0 if im.mode in ("1", "F") else (65535.0 if "16" in im.mode or im.mode == "I" else 255.0)
            arr = np.clip(arr / peak, 0.0, 1.0)
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return ImageBuffer.from_array(arr)


def _geometric_sigmas(scales: int) -> tuple:
    return tuple(np.geomspace(2.0, 8.0, scales)) if scales > 1 else (2.0,)


@dataclass(frozen=True)
class GaborSpec:
    """Filter-bank shape: per-scale sigma/center-frequency, orientation count."""

    scales: int = 5
    orientations: int = 5
    sigma: tuple = ()
    u0: tuple = ()
    kernel_radius: int = 15

    def __post_init__(self):
        if self.scales < 1 or self.orientations < 1:
            raise SpecError("scales and orientations must be >= 1")
        if self.kernel_radius < 1:
            raise SpecError("kernel_radius must be >= 1")
        sigma = self.sigma or _geometric_sigmas(self.scales)
        u0 = self.u0 or tuple(1.0 / (2.0 * s) for s in sigma)
        if len(sigma) != self.scales or len(u0) != self.scales:
            raise SpecError("sigma and u0 must provide one value per scale")
        if any(s <= 0 for s in sigma):
            raise SpecError("sigma values must be positive")
        object.__setattr__(self, "sigma", tuple(float(s) for s in sigma))
        object.__setattr__(self, "u0", tuple(float(u) for u in u0))


def gabor_kernel(spec: GaborSpec, m: int, n: int) -> np.ndarray:
    """Sample filter (m, n) on the square grid [-r, r]^2 (1-based indices).

    The kernel is a Gaussian envelope times a cosine carrier steered to
    orientation pi*(n-1)/orientations with per-scale sigma and frequency.
    """
    if not 1 <= m <= spec.scales:
        raise SpecError(f"scale index {m} out of range 1..{spec.scales}")
    if not 1 <= n <= spec.orientations:
        raise SpecError(f"orientation index {n} out of range 1..{spec.orientations}")
    sigma = spec.sigma[m - 1]
    u0 = spec.u0[m - 1]
    theta = np.pi * (n - 1) / spec.orientations
    grid = np.arange(-spec.kernel_radius, spec.kernel_radius + 1, dtype=np.float64)
    yy, xx = np.meshgrid(grid, grid, indexing="ij")
    envelope = np.exp(-(xx**2 + yy**2) / (2.0 * sigma**2)) / (2.0 * np.pi * sigma**2)
    carrier = np.cos(2.0 * np.pi * u0 * (xx * np.cos(theta) + yy * np.sin(theta)))
    return envelope * carrier


def gabor_features(img: ImageBuffer, spec: GaborSpec = GaborSpec(), remove_dc: bool = True) -> np.ndarray:
    """Mean and standard deviation of absolute filter responses.

    Order is scale-major, orientation-minor, mean before std: 2*S*O values.
    By default each kernel's mean is subtracted first so flat regions respond
    zero; statistics are taken over the fully-overlapping interior (the whole
    response when the image is smaller than the kernel), which keeps features
    unchanged under a constant intensity offset.
    """
    gray = img.grayscale()
    r = spec.kernel_radius
    out = np.empty(2 * spec.scales * spec.orientations)
    pos = 0
    for m in range(1, spec.scales + 1):
        for n in range(1, spec.orientations + 1):
            kernel = gabor_kernel(spec, m, n)
            if remove_dc:
                kernel = kernel - kernel.mean()
            resp = fftconvolve(gray, kernel, mode="same")
            if resp.shape[0] > 2 * r and resp.shape[1] > 2 * r:
                resp = resp[r:-r, r:-r]
            mag = np.abs(resp)
            out[pos] = mag.mean()
            out[pos + 1] = mag.std()
            pos += 2
    return out


def color_histogram(img: ImageBuffer, bins_per_channel: int) -> np.ndarray:
    """Joint (3-channel) or marginal (1-channel) histogram, normalized to 1."""
    bins = bins_per_channel
    if bins < 1:
        raise SpecError("bins_per_channel must be >= 1")
    planes = img.planes().reshape(-1, img.channels)
    idx = np.minimum((planes * bins).astype(np.int64), bins - 1)
    if img.channels == 1:
        counts = np.bincount(idx[:, 0], minlength=bins).astype(np.float64)
    else:
        joint = (idx[:, 0] * bins + idx[:, 1]) * bins + idx[:, 2]
        counts = np.bincount(joint, minlength=bins**3).astype(np.float64)
    return counts / counts.sum()


def hog_features(img: ImageBuffer, cell: int = 8, bins: int = 9) -> np.ndarray:
    """Histogram-of-gradients descriptor over square cells.

    Gradients come from [-1, 0, 1] filters with edge replication, angles are
    unsigned over [0, pi) with linear interpolation between bin centers at
    i*pi/bins (circular), and 2x2-cell blocks are l2-normalized (eps 1e-5).
    """
    if cell < 1 or bins < 1:
        raise SpecError("cell and bins must be >= 1")
    gray = img.grayscale()
    h, w = gray.shape
    if h < cell or w < cell:
        raise DataError(f"image {w}x{h} smaller than one {cell}x{cell} cell")
    padded = np.pad(gray, 1, mode="edge")
    gx = padded[1:-1, 2:] - padded[1:-1, :-2]
    gy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), np.pi)

    pos = ang / np.pi * bins
    lower = np.floor(pos).astype(np.int64) % bins
    frac = pos - np.floor(pos)
    upper = (lower + 1) % bins

    ny, nx = h // cell, w // cell
    hist = np.zeros((ny, nx, bins))
    ys = np.arange(ny * cell) // cell
    xs = np.arange(nx * cell) // cell
    for name_idx, weight in ((lower, mag * (1.0 - frac)), (upper, mag * frac)):
        flat = (
            ys[:, None] * (nx * bins)
            + xs[None, :] * bins
            + name_idx[: ny * cell, : nx * cell]
        )
        np.add.at(hist.reshape(-1), flat.ravel(), weight[: ny * cell, : nx * cell].ravel())

    eps = 1e-5
    blocks = []
    for by in range(ny - 1):
        for bx in range(nx - 1):
            v = hist[by : by + 2, bx : bx + 2].ravel()
            blocks.append(v / np.sqrt(np.dot(v, v) + eps**2))
    if not blocks:
        return np.zeros(0)
    return np.concatenate(blocks)
