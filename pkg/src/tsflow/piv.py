"""Multi-pass particle image velocimetry by interrogation-area correlation.

Correlation planes are indexed by the displacement ``d`` of the second
window relative to the first: ``C(d) = sum_x A'(x) B'(x + d)`` with ``A'``
and ``B'`` the mean-subtracted windows, so a pattern that moved by ``d``
peaks at ``d``.  ``dcc`` evaluates the sum directly (the reference),
``dft_correlate`` by FFT, which wraps around the window (circular).
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .imgio import sample_bilinear

MIN_VARIANCE = 1e-10
MIN_PEAK_RATIO = 1.2
BATCH_ELEMENTS = 1 << 22

PRESETS = {
    "2p64": (64, 32),
    "2p8": (8, 4),
    "4p32": (32, 16, 8, 4),
    "4p16": (16, 8, 4, 2),
}


@dataclass(frozen=True)
class PassSchedule:
    """Interrogation-area side lengths per pass (px) and window overlap."""

    sizes: tuple[int, ...]
    overlap: float = 0.5

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if not sizes:
            raise ValueError("schedule needs at least one pass")
        if any(s < 2 for s in sizes):
            raise ValueError("interrogation areas must be at least 2 px")
        if any(b >= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError(f"sizes must be strictly decreasing: {sizes}")
        if not 0 <= self.overlap < 1:
            raise ValueError("overlap must lie in [0, 1)")
        for s in sizes:
            step = s * (1 - self.overlap)
            if step < 1 or abs(step - round(step)) > 1e-9:
                raise ValueError(f"overlap {self.overlap} gives a non-integer step for {s} px")

    @classmethod
    def preset(cls, name: str, overlap: float = 0.5) -> "PassSchedule":
        try:
            return cls(PRESETS[name], overlap)
        except KeyError:
            raise ValueError(f"unknown PIV preset {name!r}; choose from {sorted(PRESETS)}") from None

    def step(self, size: int) -> int:
        return int(round(size * (1 - self.overlap)))


def grid_counts(shape, size: int, step: int):
    """Number of windows ``(n_z, n_y)`` along each axis."""
    h, w = shape
    if h < size or w < size:
        raise ValueError(f"image {shape} smaller than the {size}px interrogation area")
    return (h - size) // step + 1, (w - size) // step + 1


def grid_centers(shape, size: int, step: int):
    nz, ny = grid_counts(shape, size, step)
    c = (size - 1) / 2.0
    return np.arange(ny) * step + c, np.arange(nz) * step + c


@dataclass
class CorrelationPlane:
    """Correlation values with the zero displacement at index ``origin``."""

    values: np.ndarray
    origin: tuple[int, int]
    circular: bool

    @property
    def peak_index(self):
        return np.unravel_index(int(np.argmax(self.values)), self.values.shape)

    @property
    def peak_value(self) -> float:
        return float(self.values.max())

    @property
    def peak(self):
        """Integer peak displacement ``(dy, dz)``."""
        iz, iy = self.peak_index
        return iy - self.origin[1], iz - self.origin[0]

    @property
    def has_peak(self) -> bool:
        return self.peak_value > 0


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"interrogation areas must be square and equal: {a.shape} vs {b.shape}")
    return a - a.mean(), b - b.mean()


def dcc(a, b, circular: bool = False) -> CorrelationPlane:
    """Direct cross-correlation over all integer lags.

    Linear support gives a ``(2m-1) x (2m-1)`` plane; ``circular=True``
    wraps the second window and gives the ``m x m`` plane that the DFT
    computes, with zero displacement at ``(m//2, m//2)``.
    """
    a, b = _check_pair(a, b)
    m = a.shape[0]
    if circular:
        out = np.empty((m, m))
        c = m // 2
        for jz in range(m):
            for jy in range(m):
                out[jz, jy] = np.sum(a * np.roll(b, (-(jz - c), -(jy - c)), axis=(0, 1)))
        return CorrelationPlane(out, (c, c), True)
    out = np.zeros((2 * m - 1, 2 * m - 1))
    for dz in range(-(m - 1), m):
        za, zb = max(0, -dz), min(m, m - dz)
        for dy in range(-(m - 1), m):
            ya, yb = max(0, -dy), min(m, m - dy)
            out[dz + m - 1, dy + m - 1] = np.sum(a[za:zb, ya:yb] * b[za + dz:zb + dz, ya + dy:yb + dy])
    return CorrelationPlane(out, (m - 1, m - 1), False)


def _dft_planes(a, b):
    """Circular correlation of window stacks ``(..., m, m)`` (already mean-free)."""
    fa = np.fft.rfft2(a)
    fb = np.fft.rfft2(b)
    c = np.fft.irfft2(np.conj(fa) * fb, s=a.shape[-2:])
    return np.fft.fftshift(c, axes=(-2, -1))


def dft_correlate(a, b) -> CorrelationPlane:
    """Frequency-domain circular cross-correlation (``m x m``, shifted)."""
    a, b = _check_pair(a, b)
    m = a.shape[0]
    return CorrelationPlane(_dft_planes(a, b), (m // 2, m // 2), True)


def _fit3(cm, c0, cp):
    """Three-point Gaussian offsets, parabolic where a value is not positive."""
    gauss = (cm > 0) & (c0 > 0) & (cp > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lm, l0, lp = (np.log(np.where(gauss, x, 1.0)) for x in (cm, c0, cp))
        dg = (lm - lp) / (2 * lm - 4 * l0 + 2 * lp)
        dp = (cm - cp) / (2 * (cm - 2 * c0 + cp))
    d = np.where(gauss, dg, dp)
    return np.where(np.isfinite(d), d, 0.0)


def subpixel_peak(plane: CorrelationPlane):
    """Sub-pixel peak displacement ``(dy, dz)``; NaN for a border or missing peak."""
    v = plane.values
    iz, iy = plane.peak_index
    if not plane.has_peak or iz in (0, v.shape[0] - 1) or iy in (0, v.shape[1] - 1):
        return float("nan"), float("nan")
    dy = float(_fit3(v[iz, iy - 1], v[iz, iy], v[iz, iy + 1]))
    dz = float(_fit3(v[iz - 1, iy], v[iz, iy], v[iz + 1, iy]))
    return iy - plane.origin[1] + dy, iz - plane.origin[0] + dz


# --------------------------------------------------------------------------
# results and validation

@dataclass
class PlaneDiagnostics:
    """Per-window quantities used to accept or reject a vector."""

    var_a: np.ndarray
    var_b: np.ndarray
    peak: np.ndarray
    second: np.ndarray
    border: np.ndarray
    residual: np.ndarray  # |sub-pixel peak displacement| per axis, max of the two

    @property
    def peak_ratio(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.second > 0, self.peak / np.where(self.second > 0, self.second, 1.0),
                            np.where(np.isnan(self.second), np.nan, np.inf))


@dataclass
class PivResult:
    grid_y: np.ndarray
    grid_z: np.ndarray
    u: np.ndarray
    v: np.ndarray
    nan_mask: np.ndarray
    ia_size: int = 0

    def __post_init__(self):
        bad = self.nan_mask | ~np.isfinite(self.u) | ~np.isfinite(self.v)
        self.nan_mask = bad
        self.u = np.where(bad, np.nan, self.u)
        self.v = np.where(bad, np.nan, self.v)

    @property
    def n_points(self) -> int:
        return int(self.u.size)

    @property
    def nan_fraction(self) -> float:
        return float(self.nan_mask.mean()) if self.u.size else 1.0

    @property
    def shape(self):
        return self.u.shape


def validate_vectors(result: PivResult, diag: PlaneDiagnostics,
                     min_variance: float = MIN_VARIANCE,
                     min_ratio: float = MIN_PEAK_RATIO) -> PivResult:
    """Mark vectors NaN for flat windows, ambiguous or border peaks and oversize residuals."""
    m = result.ia_size
    with np.errstate(invalid="ignore"):
        ratio = diag.peak_ratio
        bad = ((diag.var_a < min_variance) | (diag.var_b < min_variance)
               | ~(diag.peak > 0) | ~(ratio >= min_ratio) | diag.border
               | ~(diag.residual <= m / 2.0))
    return replace(result, nan_mask=result.nan_mask | bad)


# --------------------------------------------------------------------------
# multi-pass evaluation

def _windows(img, z0, y0, m):
    """Stack of ``m x m`` windows with top-left corners ``(z0, y0)``."""
    r = np.arange(m)
    return img[(z0[:, None, None] + r[None, :, None]), (y0[:, None, None] + r[None, None, :])]


def _second_peak(planes, iz, iy):
    n, m, _ = planes.shape
    masked = planes.copy()
    idx = np.arange(n)
    for dz in (-1, 0, 1):
        for dy in (-1, 0, 1):
            zz = iz + dz
            yy = iy + dy
            ok = (zz >= 0) & (zz < m) & (yy >= 0) & (yy < m)
            masked[idx[ok], zz[ok], yy[ok]] = -np.inf
    second = masked.reshape(n, -1).max(axis=1)
    return np.where(np.isfinite(second), second, np.nan)


def _correlate_batch(a, b):
    """Peak displacements and diagnostics for aligned window stacks."""
    n, m, _ = a.shape
    var_a = a.reshape(n, -1).var(axis=1)
    var_b = b.reshape(n, -1).var(axis=1)
    a = a - a.mean(axis=(1, 2), keepdims=True)
    b = b - b.mean(axis=(1, 2), keepdims=True)
    planes = _dft_planes(a, b)
    flat = planes.reshape(n, -1)
    k = np.argmax(flat, axis=1)
    iz, iy = np.divmod(k, m)
    idx = np.arange(n)
    peak = flat[idx, k]
    border = (iz == 0) | (iz == m - 1) | (iy == 0) | (iy == m - 1)
    zc = np.clip(iz, 1, m - 2) if m > 2 else iz
    yc = np.clip(iy, 1, m - 2) if m > 2 else iy
    if m > 2:
        dy = _fit3(planes[idx, iz, yc - 1], planes[idx, iz, iy], planes[idx, iz, yc + 1])
        dz = _fit3(planes[idx, zc - 1, iy], planes[idx, iz, iy], planes[idx, zc + 1, iy])
    else:
        dy = dz = np.zeros(n)
    c = m // 2
    ry = iy - c + dy
    rz = iz - c + dz
    diag = PlaneDiagnostics(var_a, var_b, peak, _second_peak(planes, iz, iy), border,
                            np.maximum(np.abs(ry), np.abs(rz)))
    return ry, rz, diag


def _fill_nearest(u, v, bad):
    if bad.all():
        return np.zeros_like(u), np.zeros_like(v)
    if not bad.any():
        return u, v
    idx = ndimage.distance_transform_edt(bad, return_distances=False, return_indices=True)
    return u[tuple(idx)], v[tuple(idx)]


def _place(start, offset, size, extent):
    """Window starts in both frames for an integer offset, split symmetrically.

    The first window moves back by ``offset // 2`` and the second forward by
    the rest, so swapping the frames correlates the same pair.  Pairs that
    leave the image are slid inward together, keeping the offset; offsets
    larger than the image allows are clipped.
    """
    offset = np.clip(offset, -(extent - size), extent - size)
    a = start - offset // 2
    b = a + offset
    lo = np.minimum(a, b)
    hi = np.maximum(a, b) + size
    slide = np.where(lo < 0, -lo, np.where(hi > extent, extent - hi, 0))
    return a + slide, b + slide, offset


def _single_pass(a_img, b_img, size, step, pred_u, pred_v):
    h, w = a_img.shape
    nz, ny = grid_counts((h, w), size, step)
    z0 = (np.arange(nz) * step)[:, None].repeat(ny, axis=1).ravel()
    y0 = (np.arange(ny) * step)[None, :].repeat(nz, axis=0).ravel()
    ay, by, oy = _place(y0, np.rint(pred_u.ravel()).astype(np.int64), size, w)
    az, bz, oz = _place(z0, np.rint(pred_v.ravel()).astype(np.int64), size, h)

    n = nz * ny
    u = np.empty(n)
    v = np.empty(n)
    parts = []
    batch = max(1, BATCH_ELEMENTS // (size * size))
    for s in range(0, n, batch):
        sl = slice(s, min(s + batch, n))
        wa = _windows(a_img, az[sl], ay[sl], size)
        wb = _windows(b_img, bz[sl], by[sl], size)
        ry, rz, d = _correlate_batch(wa, wb)
        u[sl] = oy[sl] + ry
        v[sl] = oz[sl] + rz
        parts.append(d)
    diag = PlaneDiagnostics(*(np.concatenate([getattr(p, f) for p in parts]).reshape(nz, ny)
                              for f in ("var_a", "var_b", "peak", "second", "border", "residual")))
    gy, gz = grid_centers((h, w), size, step)
    res = PivResult(gy, gz, u.reshape(nz, ny), v.reshape(nz, ny), np.zeros((nz, ny), bool), size)
    return validate_vectors(res, diag), diag


def _predict(prev: PivResult, gy, gz):
    """Previous-pass displacement interpolated (bilinear) at new window centers."""
    u, v = _fill_nearest(prev.u, prev.v, prev.nan_mask)
    sy = prev.grid_y[1] - prev.grid_y[0] if prev.grid_y.size > 1 else 1.0
    sz = prev.grid_z[1] - prev.grid_z[0] if prev.grid_z.size > 1 else 1.0
    yy = (gy[None, :] - prev.grid_y[0]) / sy
    zz = (gz[:, None] - prev.grid_z[0]) / sz
    yy, zz = np.broadcast_arrays(yy, zz)
    return sample_bilinear(u, yy, zz), sample_bilinear(v, yy, zz)


def multipass(a, b, sched: PassSchedule, history: list | None = None) -> PivResult:
    """Run every pass of ``sched``; each later pass offsets its second windows
    by the rounded interpolated result of the previous pass.

    If ``history`` is a list, the validated result of every pass is appended.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"frames differ in shape: {a.shape} vs {b.shape}")
    res = None
    for size in sched.sizes:
        step = sched.step(size)
        gy, gz = grid_centers(a.shape, size, step)
        if res is None:
            pu = np.zeros((gz.size, gy.size))
            pv = np.zeros_like(pu)
        else:
            pu, pv = _predict(res, gy, gz)
        res, _ = _single_pass(a, b, size, step, pu, pv)
        if history is not None:
            history.append(res)
    return res


def point_count(shape, sched: PassSchedule) -> int:
    size = sched.sizes[-1]
    nz, ny = grid_counts(shape, size, sched.step(size))
    return nz * ny


# --------------------------------------------------------------------------
# export

def _fmt(x: float) -> str:
    return "nan" if not math.isfinite(x) else repr(float(x))


def write_piv_csv(path, res: PivResult) -> None:
    """CSV ``y,z,u,v,nan`` with window-center coordinates, z outer."""
    lines = ["y,z,u,v,nan"]
    for i, z in enumerate(res.grid_z):
        for j, y in enumerate(res.grid_y):
            lines.append(f"{_fmt(y)},{_fmt(z)},{_fmt(res.u[i, j])},{_fmt(res.v[i, j])},"
                         f"{int(res.nan_mask[i, j])}")
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_text("\n".join(lines) + "\n")
    os.replace(tmp, path)


def read_piv_csv(path) -> PivResult:
    data = np.genfromtxt(path, delimiter=",", names=True)
    data = np.atleast_1d(data)
    gy = np.unique(data["y"])
    gz = np.unique(data["z"])
    iy = np.searchsorted(gy, data["y"])
    iz = np.searchsorted(gz, data["z"])
    u = np.full((gz.size, gy.size), np.nan)
    v = np.full_like(u, np.nan)
    mask = np.ones(u.shape, bool)
    u[iz, iy] = data["u"]
    v[iz, iy] = data["v"]
    mask[iz, iy] = data["nan"].astype(bool)
    size = int(round(2 * gy[0] + 1)) if gy.size else 0
    return PivResult(gy, gz, u, v, mask, size)


__all__ = ["PassSchedule", "PRESETS", "CorrelationPlane", "PivResult", "PlaneDiagnostics",
           "dcc", "dft_correlate", "subpixel_peak", "validate_vectors", "multipass",
           "grid_counts", "grid_centers", "point_count", "write_piv_csv", "read_piv_csv"]
