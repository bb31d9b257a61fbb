"""NIR frame quality: LoG sharpness, best-frame selection, preprocessing.

Images are 2-D float64 numpy arrays with intensities in [0, 1]. The sharpness
measure is the power (mean squared response) of filtering the image with a
Laplacian-of-Gaussian kernel, computed over the valid (non-padded) region only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from scipy.signal import convolve2d

from .errors import EmptyInputError, InvalidInputError, InvalidParameterError

DEFAULT_SIGMA = 1.4
TARGET_SIZE = (224, 224)

# Seeded augmentation magnitude ranges; the transform set itself is fixed.
ILLUMINATION_RANGE = (0.7, 1.3)
BLUR_SIGMA_RANGE = (0.5, 1.5)
NOISE_STD = 0.02
ROTATION_DEG = 15.0

AUGMENT_STEPS = ("illumination", "mirror", "blur", "rotate", "noise")


def validate_image(img: np.ndarray) -> np.ndarray:
    """Check the grayscale-image contract: 2-D, finite, intensities in [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise InvalidInputError(f"expected a 2-D image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise InvalidInputError("image contains non-finite intensities")
    if img.min() < 0.0 or img.max() > 1.0:
        raise InvalidInputError("image intensities must lie in [0, 1]")
    return img


def load_gray_image(path: str | Path) -> np.ndarray:
    """Read an 8-bit grayscale PNG/PGM and map intensities to [0, 1]."""
    raw = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if raw is None:
        raise InvalidInputError(f"could not decode image: {path}")
    return raw.astype(np.float64) / 255.0


@dataclass(frozen=True)
class LogKernel:
    """Sampled Laplacian-of-Gaussian filter.

    ``taps`` holds the raw analytic samples
    -(1/(pi*sigma^4)) * (1 - r^2/(2 sigma^2)) * exp(-r^2/(2 sigma^2))
    at integer offsets in [-radius, radius]^2. ``zero_sum_taps`` is the
    mean-subtracted version actually convolved by :func:`sharpness`, so a
    constant image yields zero response despite truncation of the tails.
    """

    sigma: float
    radius: int
    taps: np.ndarray = field(repr=False)

    @property
    def width(self) -> int:
        return 2 * self.radius + 1

    @property
    def zero_sum_taps(self) -> np.ndarray:
        return self.taps - self.taps.mean()


def make_log_kernel(sigma: float, radius: int | None = None) -> LogKernel:
    """Sample the LoG at integer offsets.

    With no explicit radius, uses ceil(4*sigma), which covers all but a
    negligible tail of the kernel mass.
    """
    if not (sigma > 0) or not math.isfinite(sigma):
        raise InvalidParameterError(f"sigma must be positive, got {sigma}")
    if radius is None:
        radius = math.ceil(4 * sigma)
    if radius < 1:
        raise InvalidParameterError(f"radius must be >= 1, got {radius}")
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    ii, jj = np.meshgrid(offsets, offsets, indexing="ij")
    r2 = ii**2 + jj**2
    taps = -(1.0 / (math.pi * sigma**4)) * (1.0 - r2 / (2.0 * sigma**2)) * np.exp(
        -r2 / (2.0 * sigma**2)
    )
    taps.setflags(write=False)
    return LogKernel(sigma=float(sigma), radius=int(radius), taps=taps)


def sharpness(img: np.ndarray, kernel: LogKernel) -> float:
    """Filter-response power: mean squared LoG response over valid positions.

    Valid-region convolution only; no boundary padding is invented.
    """
    img = validate_image(img)
    if img.shape[0] <= kernel.width or img.shape[1] <= kernel.width:
        raise InvalidInputError(
            f"image {img.shape} must be strictly larger than the "
            f"{kernel.width}x{kernel.width} kernel in both axes"
        )
    # The kernel is symmetric under sign flips, so convolution == correlation.
    response = convolve2d(img, kernel.zero_sum_taps, mode="valid")
    return float(np.mean(response**2))


def select_best_frame(
    frames: "list[np.ndarray] | tuple[np.ndarray, ...]", kernel: LogKernel
) -> tuple[int, float]:
    """Index and score of the sharpest frame; ties go to the lowest index."""
    if len(frames) == 0:
        raise EmptyInputError("no frames to select from")
    scores = [sharpness(frame, kernel) for frame in frames]
    best = int(np.argmax(scores))  # argmax returns the first maximum
    return best, scores[best]


def preprocess(img: np.ndarray, target: tuple[int, int] = TARGET_SIZE) -> np.ndarray:
    """Bilinear resize to ``target`` (height, width); output stays in [0, 1]."""
    img = validate_image(img)
    if img.shape[0] < 2 or img.shape[1] < 2:
        raise InvalidInputError(f"source too small to resize: {img.shape}")
    th, tw = target
    if th < 1 or tw < 1:
        raise InvalidParameterError(f"bad target size: {target}")
    out = cv2.resize(img, (tw, th), interpolation=cv2.INTER_LINEAR)
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class AugmentRecipe:
    """Which of the five augmentation steps to apply."""

    illumination: bool = True
    mirror: bool = True
    blur: bool = True
    rotate: bool = True
    noise: bool = True

    @classmethod
    def only(cls, *steps: str) -> "AugmentRecipe":
        unknown = set(steps) - set(AUGMENT_STEPS)
        if unknown:
            raise InvalidParameterError(f"unknown augmentation steps: {sorted(unknown)}")
        return cls(**{name: name in steps for name in AUGMENT_STEPS})


def augment(img: np.ndarray, seed: int, recipe: AugmentRecipe = AugmentRecipe()) -> np.ndarray:
    """Apply the seeded augmentation chain; same (img, seed, recipe) -> same output.

    Step order is fixed: illumination scale, horizontal mirror, Gaussian blur,
    +/-15 degree rotation, additive noise. The seed drives only the sampled
    magnitudes (scale factor, blur sigma, rotation sign, noise); whether a step
    runs is decided by the recipe alone.
    """
    out = validate_image(img).copy()
    rng = np.random.default_rng(seed)
    # Draw all magnitudes up front so the consumed entropy does not depend on
    # the recipe's subset, only on the seed.
    scale = rng.uniform(*ILLUMINATION_RANGE)
    blur_sigma = rng.uniform(*BLUR_SIGMA_RANGE)
    rotate_sign = 1.0 if rng.random() < 0.5 else -1.0
    noise = rng.normal(0.0, NOISE_STD, size=out.shape)

    if recipe.illumination:
        out = out * scale
    if recipe.mirror:
        out = np.fliplr(out)
    if recipe.blur:
        out = cv2.GaussianBlur(out, (0, 0), sigmaX=blur_sigma)
    if recipe.rotate:
        out = rotate_image(out, rotate_sign * ROTATION_DEG)
    if recipe.noise:
        out = out + noise
    return np.clip(out, 0.0, 1.0)


def rotate_image(img: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate about the image center with bilinear interpolation, zero fill."""
    h, w = img.shape
    matrix = cv2.getRotationMatrix2D(((w - 1) / 2.0, (h - 1) / 2.0), degrees, 1.0)
    return cv2.warpAffine(
        img, matrix, (w, h), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT, borderValue=0.0
    )
