"""Grayscale image I/O, ROI cropping, bilinear sampling and resolution pyramids.

Images are plain ``float64`` arrays of shape ``(height, width)`` with values
in ``[0, 1]``.  Pixel coordinates follow the ``(y, z)`` convention used
throughout the package: ``y`` is the column (horizontal, growing rightward)
and ``z`` is the row (vertical, growing downward).
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

# ITU-R BT.601 luma weights
RGB_WEIGHTS = (0.299, 0.587, 0.114)


def as_gray(arr) -> np.ndarray:
    """Validate ``arr`` as a grayscale image and return it as float64."""
    img = np.asarray(arr, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2D image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite intensities")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("image intensities must lie in [0, 1]")
    return img


# --------------------------------------------------------------------------
# file I/O

def _read_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if data[:2] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    tokens = []
    pos = 2
    while len(tokens) < 3:
        # whitespace and comments between header tokens
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PGM header")
        tokens.append(int(data[start:pos]))
    pos += 1  # single whitespace byte before the raster
    width, height, maxval = tokens
    if maxval not in (255, 65535):
        raise ValueError(f"{path}: unsupported PGM maximum value {maxval}")
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype("u1")
    count = width * height
    raster = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    return raster.reshape(height, width).astype(np.float64) / maxval


def load_gray(path) -> np.ndarray:
    """Load an 8/16-bit grayscale or RGB image as intensities in ``[0, 1]``.

    PGM (P5) files are parsed directly so the interchange format is bit
    exact; everything else goes through Pillow.  RGB input is reduced with
    the BT.601 luma weights.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"P5":
        return _read_pgm(path)

    from PIL import Image

    try:
        im = Image.open(path)
        im.load()
    except Exception as exc:  # Pillow raises a zoo of exception types
        raise ValueError(f"{path}: unreadable image ({exc})") from exc

    mode = im.mode
    if mode == "P":
        im = im.convert("RGBA" if "transparency" in im.info else "RGB")
        mode = im.mode
    if mode in ("L", "LA"):
        arr = np.asarray(im.getchannel(0), dtype=np.float64) / 255.0
    elif mode in ("RGB", "RGBA"):
        rgb = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
        arr = rgb @ np.asarray(RGB_WEIGHTS)
    elif mode.startswith("I;16") or mode == "I":
        raw = np.asarray(im, dtype=np.float64)
        if raw.min() < 0 or raw.max() > 65535:
            raise ValueError(f"{path}: unsupported bit depth (mode {mode})")
        arr = raw / 65535.0
    else:
        raise ValueError(f"{path}: unsupported image mode {mode!r}")
    return np.clip(arr, 0.0, 1.0)


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def save_pgm(path, img, bits: int = 8) -> None:
    """Write ``img`` (values in ``[0, 1]``) as a binary PGM with 8 or 16 bits."""
    img = as_gray(img)
    if bits == 8:
        maxval, dtype = 255, np.dtype("u1")
    elif bits == 16:
        maxval, dtype = 65535, np.dtype(">u2")
    else:
        raise ValueError("bits must be 8 or 16")
    raster = np.rint(img * maxval).astype(dtype)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode("ascii")
    _atomic_write(Path(path), header + raster.tobytes())


# --------------------------------------------------------------------------
# region of interest

@dataclass(frozen=True)
class RegionOfInterest:
    """Rectangle given by its center pixel and inclusive half sizes.

    The cropped image is ``2*half_height + 1`` rows by ``2*half_width + 1``
    columns, centered on ``(center_y, center_z)``.
    """

    center_y: int
    center_z: int
    half_width: int
    half_height: int

    @property
    def width(self) -> int:
        return 2 * self.half_width + 1

    @property
    def height(self) -> int:
        return 2 * self.half_height + 1

    @property
    def y0(self) -> int:
        return self.center_y - self.half_width

    @property
    def z0(self) -> int:
        return self.center_z - self.half_height

    def fits(self, shape) -> bool:
        h, w = shape
        return (self.half_width >= 0 and self.half_height >= 0
                and self.y0 >= 0 and self.z0 >= 0
                and self.y0 + self.width <= w and self.z0 + self.height <= h)

    def compose(self, inner: "RegionOfInterest") -> "RegionOfInterest":
        """ROI in source coordinates of ``inner`` taken from the crop of ``self``."""
        return RegionOfInterest(self.y0 + inner.center_y, self.z0 + inner.center_z,
                                inner.half_width, inner.half_height)

    @classmethod
    def whole(cls, shape) -> "RegionOfInterest":
        """ROI covering an odd-sized image exactly."""
        h, w = shape
        if h % 2 == 0 or w % 2 == 0:
            raise ValueError("whole-image ROI needs odd dimensions")
        return cls(w // 2, h // 2, w // 2, h // 2)


def crop(img, roi: RegionOfInterest) -> np.ndarray:
    img = np.asarray(img)
    if not roi.fits(img.shape[:2]):
        raise ValueError(f"{roi} does not fit inside image of shape {img.shape[:2]}")
    return img[roi.z0:roi.z0 + roi.height, roi.y0:roi.y0 + roi.width].copy()


# --------------------------------------------------------------------------
# sampling

def sample_bilinear(img, y, z):
    """Bilinear interpolation at column ``y`` and row ``z`` (scalars or arrays).

    Coordinates outside ``[0, dim - 1]`` are clamped to the border.
    """
    img = np.asarray(img)
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(z))):
        raise ValueError("non-finite sample coordinates")
    h, w = img.shape[:2]
    y = np.clip(y, 0.0, w - 1.0)
    z = np.clip(z, 0.0, h - 1.0)
    y0 = np.minimum(np.floor(y).astype(np.intp), max(w - 2, 0))
    z0 = np.minimum(np.floor(z).astype(np.intp), max(h - 2, 0))
    y1 = np.minimum(y0 + 1, w - 1)
    z1 = np.minimum(z0 + 1, h - 1)
    fy = y - y0
    fz = z - z0
    if img.ndim == 3:
        fy = fy[..., None]
        fz = fz[..., None]
    out = ((1.0 - fz) * ((1.0 - fy) * img[z0, y0] + fy * img[z0, y1])
           + fz * ((1.0 - fy) * img[z1, y0] + fy * img[z1, y1]))
    if out.ndim == 0:
        return float(out)
    return out


def resize(img, shape) -> np.ndarray:
    """Bilinear resample to ``shape`` with pixel-center alignment (no pre-filter)."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    nh, nw = shape
    zs = (np.arange(nh) + 0.5) * (h / nh) - 0.5
    ys = (np.arange(nw) + 0.5) * (w / nw) - 0.5
    zz, yy = np.meshgrid(zs, ys, indexing="ij")
    return sample_bilinear(img, yy, zz)


# --------------------------------------------------------------------------
# pyramids

@dataclass
class Pyramid:
    """Resolution pyramid, level 0 finest."""

    levels: list
    ratio: float
    coarsest_width: int
    shapes: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.levels)

    def __getitem__(self, k):
        return self.levels[k]


def pyramid_shapes(shape, ratio: float, coarsest_width: int) -> list[tuple[int, int]]:
    """Level shapes ``round(dim * ratio**k)`` while the width stays >= ``coarsest_width``."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    if coarsest_width < 4:
        raise ValueError("coarsest_width must be at least 4")
    h, w = shape
    shapes = [(h, w)]
    k = 1
    while True:
        nw = int(round(w * ratio ** k))
        if nw < coarsest_width or nw >= shapes[-1][1]:
            break
        nh = max(int(round(h * ratio ** k)), 1)
        shapes.append((nh, nw))
        k += 1
    return shapes


def antialias_sigma(ratio: float) -> float:
    return 0.8 * math.sqrt(1.0 / ratio ** 2 - 1.0)


def downsample(img, shape, ratio: float) -> np.ndarray:
    """Gaussian low-pass then bilinear resample to ``shape``."""
    blurred = ndimage.gaussian_filter(np.asarray(img, dtype=np.float64),
                                      antialias_sigma(ratio), mode="nearest")
    return resize(blurred, shape)


def build_pyramid(img, ratio: float, coarsest_width: int) -> Pyramid:
    img = np.asarray(img, dtype=np.float64)
    shapes = pyramid_shapes(img.shape, ratio, coarsest_width)
    levels = [img]
    for shp in shapes[1:]:
        prev = levels[-1]
        step = shp[1] / prev.shape[1]
        levels.append(downsample(prev, shp, step))
    return Pyramid(levels=levels, ratio=ratio, coarsest_width=coarsest_width,
                   shapes=shapes)
