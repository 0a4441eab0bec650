"""Synthetic speckle scenes with exact ground-truth displacement.

Speckle is a random set of soft-edged discs rendered analytically, so the
second frame can be evaluated at arbitrary (warped) positions instead of
being interpolated from the first.  Twist fields follow the specimen
geometry: the surface moves along the circumference by ``s(h)`` mm, which
is projected into image pixels flat, on the cylinder, or through the
chamber optics.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import erfc

from .flow import FlowField
from .imgio import sample_bilinear
from .optics import CameraModel, ChamberModel, surface_to_pixel, trace_pixel
from .tsmech import SpecimenGeometry

EDGE_SIGMA = 0.7
KINDS = ("rigid_shift", "linear_twist", "bilinear_twist", "custom")
PROJECTIONS = ("flat", "cylindrical", "refraction")


@dataclass(frozen=True)
class SpeckleSpec:
    width: int = 512
    height: int = 512
    seed: int = 0
    dot_density: float = 0.035
    dot_radius: tuple[float, float] = (1.5, 3.0)
    background: float = 0.9
    foreground: float = 0.1
    edge_sigma: float = EDGE_SIGMA
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image must have at least one pixel")
        if self.dot_density < 0:
            raise ValueError("dot density must be non-negative")
        lo, hi = self.dot_radius
        if not 0 < lo <= hi:
            raise ValueError("dot radius range must satisfy 0 < min <= max")
        if self.edge_sigma <= 0 or self.noise_sigma < 0:
            raise ValueError("edge_sigma must be positive and noise_sigma non-negative")

    @property
    def shape(self):
        return (self.height, self.width)

    @property
    def margin(self) -> float:
        return self.dot_radius[1] + 5.0 * self.edge_sigma

    def expected_coverage(self) -> float:
        """Mean dark-ink coverage for Poisson-like dot placement."""
        lo, hi = self.dot_radius
        mean_r2 = (hi ** 3 - lo ** 3) / (3.0 * (hi - lo)) if hi > lo else lo * lo
        return 1.0 - math.exp(-self.dot_density * math.pi * (mean_r2 + self.edge_sigma ** 2))

    def expected_mean(self) -> float:
        c = self.expected_coverage()
        return self.background + (self.foreground - self.background) * c


@dataclass(frozen=True)
class Dots:
    y: np.ndarray
    z: np.ndarray
    r: np.ndarray


def _streams(seed: int):
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(3)]


def draw_dots(spec: SpeckleSpec, pad: float = 0.0) -> Dots:
    """Dot centers over the image plus ``pad + margin`` px on every side."""
    rng = _streams(spec.seed)[0]
    m = spec.margin + pad
    y0, y1 = -m, spec.width - 1 + m
    z0, z1 = -m, spec.height - 1 + m
    n = int(round(spec.dot_density * (y1 - y0) * (z1 - z0)))
    y = rng.uniform(y0, y1, n)
    z = rng.uniform(z0, z1, n)
    r = rng.uniform(spec.dot_radius[0], spec.dot_radius[1], n)
    return Dots(y, z, r)


def _render(spec: SpeckleSpec, dots: Dots, ys, zs, disp_y=None, disp_z=None, slack: float = 1.0):
    """Intensity at sample positions ``(ys, zs)`` laid out on the image grid.

    ``disp_y/disp_z`` (grid arrays) approximate how far a dot moves between
    its own position and the output pixels that see it; they only serve to
    locate the pixel box each dot can reach.
    """
    h, w = spec.shape
    trans = np.ones((h, w))
    cut = spec.margin + slack
    k = 1.0 / (spec.edge_sigma * math.sqrt(2.0))
    for cy, cz, r in zip(dots.y, dots.z, dots.r):
        oy = oz = 0.0
        if disp_y is not None:
            iy = min(max(int(round(cy)), 0), w - 1)
            iz = min(max(int(round(cz)), 0), h - 1)
            oy, oz = disp_y[iz, iy], disp_z[iz, iy]
            if not (math.isfinite(oy) and math.isfinite(oz)):
                oy = oz = 0.0
        a0 = max(int(math.floor(cy + oy - cut)), 0)
        a1 = min(int(math.ceil(cy + oy + cut)), w - 1)
        b0 = max(int(math.floor(cz + oz - cut)), 0)
        b1 = min(int(math.ceil(cz + oz + cut)), h - 1)
        if a0 > a1 or b0 > b1:
            continue
        py = ys[b0:b1 + 1, a0:a1 + 1]
        pz = zs[b0:b1 + 1, a0:a1 + 1]
        d = np.hypot(py - cy, pz - cz)
        f = 0.5 * erfc((d - r) * k)
        trans[b0:b1 + 1, a0:a1 + 1] *= 1.0 - f
    return spec.background + (spec.foreground - spec.background) * (1.0 - trans)


def _add_noise(img, sigma, rng):
    if sigma <= 0:
        return img
    return np.clip(img + rng.normal(0.0, sigma, img.shape), 0.0, 1.0)


def gen_speckle(spec: SpeckleSpec) -> np.ndarray:
    """Seeded speckle image in ``[0, 1]`` (dark dots on a light background)."""
    zz, yy = np.mgrid[0:spec.height, 0:spec.width].astype(np.float64)
    img = _render(spec, draw_dots(spec), yy, zz)
    return _add_noise(img, spec.noise_sigma, _streams(spec.seed)[1])


# --------------------------------------------------------------------------
# displacement fields

@dataclass(frozen=True)
class FieldSpec:
    """Prescribed displacement.

    ``rigid_shift`` moves every pixel by ``(u, v)`` px.  The twist kinds
    rotate the top of the specimen by ``phi_top`` rad; the surface moves
    along the circumference by ``s(h) = phi_top * r * g(h)`` with
    ``g = h/H`` (linear) or ``g = max(h - (H - h'), 0) / h'`` (bilinear).
    Heights run upward from the bottom image row and ``pitch`` (mm/px)
    defaults to ``H / (rows - 1)``.  ``custom`` takes ``table``: either a
    callable ``(y, z) -> (u, v)`` or a pair of grid arrays.
    """

    kind: str = "rigid_shift"
    u: float = 0.0
    v: float = 0.0
    phi_top: float = 0.0
    h_prime: float | None = None
    geometry: SpecimenGeometry = SpecimenGeometry()
    projection: str = "flat"
    pitch: float | None = None
    axis_column: float | None = None
    chamber: ChamberModel | None = None
    camera: CameraModel | None = None
    table: Callable | tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}; expected one of {KINDS}")
        if self.projection not in PROJECTIONS:
            raise ValueError(f"unknown projection {self.projection!r}; expected one of {PROJECTIONS}")
        if self.kind == "bilinear_twist":
            if self.h_prime is None or not 0 < self.h_prime <= self.geometry.H:
                raise ValueError("bilinear twist needs 0 < h_prime <= H")
        if self.kind == "custom" and self.table is None:
            raise ValueError("custom field needs a table")

    @classmethod
    def twist_for_top_px(cls, top_px: float, shape, h_prime: float | None = None,
                         geometry: SpecimenGeometry = SpecimenGeometry(), **kw) -> "FieldSpec":
        """Twist whose flat-projected top displacement is ``top_px`` px."""
        pitch = kw.pop("pitch", None) or geometry.H / (shape[0] - 1)
        kind = "linear_twist" if h_prime is None else "bilinear_twist"
        return cls(kind=kind, phi_top=top_px * pitch / geometry.r, h_prime=h_prime,
                   geometry=geometry, pitch=pitch, **kw)

    def pitch_for(self, shape) -> float:
        return self.pitch if self.pitch is not None else self.geometry.H / (shape[0] - 1)

    def axis_for(self, shape) -> float:
        return self.axis_column if self.axis_column is not None else (shape[1] - 1) / 2.0

    def default_camera(self, shape) -> CameraModel:
        if self.camera is not None:
            return self.camera
        pp = (self.axis_for(shape), (shape[0] - 1) / 2.0)
        return CameraModel.from_surface_pitch(700.0, self.pitch_for(shape), self.geometry.r,
                                              principal_point=pp, height=self.geometry.H / 2.0)


def surface_displacement(fs: FieldSpec, h):
    """Circumferential surface displacement (mm) at height ``h`` (mm)."""
    g = fs.geometry
    h = np.clip(np.asarray(h, dtype=np.float64), 0.0, g.H)
    if fs.kind == "linear_twist":
        frac = h / g.H
    elif fs.kind == "bilinear_twist":
        z_star = g.H - fs.h_prime
        frac = np.maximum(h - z_star, 0.0) / fs.h_prime
    else:
        raise ValueError(f"{fs.kind} is not a twist field")
    return fs.phi_top * g.r * frac


def eval_field(fs: FieldSpec, y, z, shape):
    """Ground-truth ``(u, v)`` (px) at image pixel(s) ``(y, z)`` of an image of ``shape``."""
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    y, z = np.broadcast_arrays(y, z)
    if fs.kind == "rigid_shift":
        return np.full(y.shape, float(fs.u)), np.full(y.shape, float(fs.v))
    if fs.kind == "custom":
        if callable(fs.table):
            u, v = fs.table(y, z)
            return np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64)
        tu, tv = fs.table
        return sample_bilinear(np.asarray(tu, float), y, z), sample_bilinear(np.asarray(tv, float), y, z)

    pitch = fs.pitch_for(shape)
    if fs.projection == "refraction":
        return _refracted_twist(fs, y, z, shape)
    s = surface_displacement(fs, (shape[0] - 1 - z) * pitch)
    if fs.projection == "flat":
        return s / pitch, np.zeros_like(s)
    R = fs.geometry.r
    Y = (y - fs.axis_for(shape)) * pitch
    with np.errstate(invalid="ignore"):
        theta = np.arcsin(Y / R)
        u = (R * np.sin(theta + s / R) - Y) / pitch
    u = np.where(np.abs(Y) < R, u, np.nan)
    return u, np.where(np.isfinite(u), 0.0, np.nan)


def _refracted_twist(fs: FieldSpec, y, z, shape):
    chamber = fs.chamber or ChamberModel(specimen_radius=fs.geometry.r)
    cam = fs.default_camera(shape)
    s0, h0 = trace_pixel(cam, chamber, y, z)
    ds = surface_displacement(fs, h0)
    py, pz = surface_to_pixel(cam, chamber, s0 + ds, h0, y + ds / fs.pitch_for(shape), z)
    return py - y, pz - z


# --------------------------------------------------------------------------
# frame pairs

def _inverse_positions(u, v, n_iter: int = 20):
    """Solve ``x1 + w(x1) = x2`` for every grid pixel ``x2`` by fixed-point iteration."""
    h, w = u.shape
    zz, yy = np.mgrid[0:h, 0:w].astype(np.float64)
    uf = np.where(np.isfinite(u), u, 0.0)
    vf = np.where(np.isfinite(v), v, 0.0)
    y1, z1 = yy - uf, zz - vf
    for _ in range(n_iter):
        y1 = yy - sample_bilinear(uf, y1, z1)
        z1 = zz - sample_bilinear(vf, y1, z1)
    return y1, z1


def render_pair(spec: SpeckleSpec, fs: FieldSpec):
    """Frames ``(I1, I2)`` with ``I2(x + w(x)) = I1(x)`` and the truth ``w`` on ``I1``'s grid.

    Truth entries whose target ``x + w(x)`` leaves the image are invalid.
    """
    h, w = spec.shape
    zz, yy = np.mgrid[0:h, 0:w].astype(np.float64)
    u, v = eval_field(fs, yy, zz, spec.shape)
    finite = np.isfinite(u) & np.isfinite(v)
    peak = float(np.nanmax(np.hypot(u, v))) if finite.any() else 0.0
    if peak > 10.0:
        warnings.warn(f"displacement up to {peak:.1f} px exceeds the small-strain range (10 px)",
                      stacklevel=2)

    dots = draw_dots(spec, pad=math.ceil(peak))
    noise = _streams(spec.seed)[1:]
    i1 = _add_noise(_render(spec, dots, yy, zz), spec.noise_sigma, noise[0])

    if fs.kind == "rigid_shift":
        y1, z1 = yy - fs.u, zz - fs.v
        gy, gz = np.full((h, w), float(fs.u)), np.full((h, w), float(fs.v))
    else:
        y1, z1 = _inverse_positions(u, v)
        gy, gz = yy - y1, zz - z1
    slack = 1.0 + float(np.nanmax(np.abs(np.diff(gy, axis=1)), initial=0) +
                        np.nanmax(np.abs(np.diff(gz, axis=0)), initial=0)) * (spec.margin + 1)
    i2 = _add_noise(_render(spec, dots, y1, z1, gy, gz, slack=slack), spec.noise_sigma, noise[1])
    inside = (yy + u >= 0) & (yy + u <= w - 1) & (zz + v >= 0) & (zz + v <= h - 1)
    truth = FlowField(u, v, finite & inside)
    return i1, i2, truth


__all__ = ["SpeckleSpec", "FieldSpec", "gen_speckle", "draw_dots", "eval_field",
           "surface_displacement", "render_pair"]
