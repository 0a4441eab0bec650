"""Vector ray tracing through the two transparent chamber cylinders.

World frame: the chamber axis is the vertical ``Z`` axis, the camera sits on
the ``+X`` axis looking toward the origin, ``+Y`` maps to image-right and
``+Z`` is up (image rows grow downward).  Lengths are in mm.

A camera pixel is traced from the pinhole through four cylindrical
interfaces (outer tube outside/inside, inner tube outside/inside) onto the
specimen surface, where it is expressed as circumferential arc length
``s = R * theta`` and height ``h``.  Repeating the trace with refraction
switched off gives the straight-line projection; the difference between
the two is the correction map.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

AIR = 1.00027
POLYCARBONATE = 1.58


@dataclass(frozen=True)
class Medium:
    eta: float

    def __post_init__(self):
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValueError(f"refractive index must be positive and finite, got {self.eta}")


@dataclass(frozen=True)
class Tube:
    inner_radius: float
    outer_radius: float
    eta: float = POLYCARBONATE


@dataclass(frozen=True)
class ChamberModel:
    """Specimen inside two concentric tubes.

    ``interior_eta`` fills the space between the specimen and the inner
    tube, ``gap_eta`` the space between the tubes.  The default radii are
    illustrative only; measure them on the actual cell.
    """

    specimen_radius: float = 35.0
    inner: Tube = Tube(55.0, 60.0)
    outer: Tube = Tube(95.0, 100.0)
    interior_eta: float = AIR
    gap_eta: float = AIR
    exterior_eta: float = AIR

    def __post_init__(self):
        radii = [self.specimen_radius, self.inner.inner_radius, self.inner.outer_radius,
                 self.outer.inner_radius, self.outer.outer_radius]
        if radii[0] <= 0 or any(b <= a for a, b in zip(radii, radii[1:])):
            raise ValueError(f"radii must be positive and strictly increasing: {radii}")
        for eta in (self.inner.eta, self.outer.eta, self.interior_eta, self.gap_eta, self.exterior_eta):
            Medium(eta)

    def interfaces(self):
        """``(radius, eta_before, eta_after)`` in the order an inbound ray meets them."""
        return [
            (self.outer.outer_radius, self.exterior_eta, self.outer.eta),
            (self.outer.inner_radius, self.outer.eta, self.gap_eta),
            (self.inner.outer_radius, self.gap_eta, self.inner.eta),
            (self.inner.inner_radius, self.inner.eta, self.interior_eta),
        ]

    def without_refraction(self) -> "ChamberModel":
        eta = self.exterior_eta
        return replace(self, inner=replace(self.inner, eta=eta), outer=replace(self.outer, eta=eta),
                       interior_eta=eta, gap_eta=eta)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole on the optical axis at ``distance`` from the chamber axis.

    ``pixel_angle`` is the tangent of the angle subtended by one pixel;
    ``principal_point`` is ``(y, z)`` in image pixels; ``height`` is the
    pinhole ``Z`` in mm.
    """

    distance: float
    pixel_angle: float
    principal_point: tuple[float, float] = (0.0, 0.0)
    height: float = 0.0

    def __post_init__(self):
        if not self.pixel_angle > 0:
            raise ValueError("pixel_angle must be positive")

    @classmethod
    def from_surface_pitch(cls, distance: float, pitch: float, specimen_radius: float,
                           principal_point=(0.0, 0.0), height: float = 0.0) -> "CameraModel":
        """Camera whose pixels measure ``pitch`` mm at the specimen's front line."""
        if distance <= specimen_radius:
            raise ValueError("camera must sit outside the specimen")
        return cls(distance, pitch / (distance - specimen_radius), tuple(principal_point), height)

    @property
    def nominal_pitch(self) -> float:
        return self.pixel_angle * self.distance

    def rays(self, py, pz):
        py = np.asarray(py, dtype=np.float64)
        pz = np.asarray(pz, dtype=np.float64)
        d = np.stack(np.broadcast_arrays(-np.ones_like(py),
                                         (py - self.principal_point[0]) * self.pixel_angle,
                                         -(pz - self.principal_point[1]) * self.pixel_angle), axis=-1)
        d = d / np.linalg.norm(d, axis=-1, keepdims=True)
        origin = np.broadcast_to(np.array([self.distance, 0.0, self.height]), d.shape).copy()
        return origin, d


@dataclass
class CorrectionMaps:
    """Per-pixel corrections (mm) from straight-line to refracted surface positions.

    ``dy`` is along the circumference, ``dz`` along the height.  ``s`` and
    ``h`` are the refracted surface coordinates and ``jac`` the 2x2
    pixel-to-surface Jacobian ``[[ds/dy, ds/dz], [dh/dy, dh/dz]]`` stacked in
    the last two axes.
    """

    dy: np.ndarray
    dz: np.ndarray
    s: np.ndarray
    h: np.ndarray
    jac: np.ndarray


# --------------------------------------------------------------------------
# primitives

def refract(i, n, eta1, eta2):
    """Transmitted direction through an interface from ``eta1`` into ``eta2``.

    ``i`` and ``n`` are unit vectors (last axis of length 3).  ``n`` is
    flipped where needed so that it points back into the first medium.
    Returns ``(t, tir)``: ``t`` is NaN wherever ``tir`` (total internal
    reflection) is True.
    """
    i = np.asarray(i, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    cos_i = -np.sum(i * n, axis=-1, keepdims=True)
    n = np.where(cos_i < 0, -n, n)
    ratio = np.asarray(eta1, dtype=np.float64) / np.asarray(eta2, dtype=np.float64)
    ratio = ratio[..., None] if ratio.ndim else ratio
    nxi = np.cross(n, i)
    rad = 1.0 - ratio ** 2 * np.sum(nxi * nxi, axis=-1, keepdims=True)
    tir = rad[..., 0] < 0
    t = ratio * np.cross(n, -nxi) - n * np.sqrt(np.maximum(rad, 0.0))
    same = np.asarray(eta1) == np.asarray(eta2)
    t = np.where(same[..., None] if np.ndim(same) else same, i, t)
    t = np.where(tir[..., None], np.nan, t)
    return t, tir


def intersect_cylinder(origin, direction, radius: float):
    """Nearest forward hit with the infinite vertical cylinder ``X^2 + Y^2 = radius^2``.

    Returns ``(point, normal, hit)`` with the outward radial normal; misses
    hold NaN.
    """
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    a = d[..., 0] ** 2 + d[..., 1] ** 2
    b = 2.0 * (o[..., 0] * d[..., 0] + o[..., 1] * d[..., 1])
    c = o[..., 0] ** 2 + o[..., 1] ** 2 - radius ** 2
    disc = b * b - 4.0 * a * c
    with np.errstate(invalid="ignore", divide="ignore"):
        root = np.sqrt(np.where(disc >= 0, disc, np.nan))
        t1 = (-b - root) / (2.0 * a)
        t2 = (-b + root) / (2.0 * a)
    eps = 1e-9 * max(radius, 1.0)
    t = np.where(t1 > eps, t1, np.where(t2 > eps, t2, np.nan))
    hit = np.isfinite(t)
    point = o + t[..., None] * d
    normal = np.stack([point[..., 0] / radius, point[..., 1] / radius, np.zeros_like(t)], axis=-1)
    return point, normal, hit


# --------------------------------------------------------------------------
# tracing

def trace_rays(origin, direction, chamber: ChamberModel):
    """Trace rays through the chamber onto the specimen; returns ``(s, h)`` in mm."""
    o, d = origin, direction
    for radius, eta1, eta2 in chamber.interfaces():
        o, n, _ = intersect_cylinder(o, d, radius)
        d, _ = refract(d, n, eta1, eta2)
    p, _, _ = intersect_cylinder(o, d, chamber.specimen_radius)
    s = chamber.specimen_radius * np.arctan2(p[..., 1], p[..., 0])
    return s, p[..., 2]


def trace_pixel(cam: CameraModel, chamber: ChamberModel, py, pz):
    """Surface coordinates ``(s, h)`` (mm) seen by image pixel(s) ``(py, pz)``.

    NaN where the ray misses the specimen or is totally reflected.
    """
    o, d = cam.rays(py, pz)
    return trace_rays(o, d, chamber)


def project_straight(cam: CameraModel, radius: float, py, pz):
    """Closed-form pinhole projection onto the specimen cylinder (no tubes)."""
    o, d = cam.rays(py, pz)
    p, _, _ = intersect_cylinder(o, d, radius)
    return radius * np.arctan2(p[..., 1], p[..., 0]), p[..., 2]


def pixel_grid(shape, origin=(0, 0)):
    h, w = shape
    zz, yy = np.mgrid[0:h, 0:w].astype(np.float64)
    return yy + origin[0], zz + origin[1]


def build_correction_maps(cam: CameraModel, chamber: ChamberModel, shape, origin=(0, 0),
                          step: float = 0.5) -> CorrectionMaps:
    """Correction maps for an image region of ``shape`` whose top-left pixel is ``origin``.

    ``origin`` is ``(y, z)`` in the full-image pixel frame of ``cam``.
    """
    py, pz = pixel_grid(shape, origin)
    s, h = trace_pixel(cam, chamber, py, pz)
    s0, h0 = trace_pixel(cam, chamber.without_refraction(), py, pz)
    sy1, hy1 = trace_pixel(cam, chamber, py + step, pz)
    sy0, hy0 = trace_pixel(cam, chamber, py - step, pz)
    sz1, hz1 = trace_pixel(cam, chamber, py, pz + step)
    sz0, hz0 = trace_pixel(cam, chamber, py, pz - step)
    jac = np.empty(s.shape + (2, 2))
    jac[..., 0, 0] = (sy1 - sy0) / (2 * step)
    jac[..., 0, 1] = (sz1 - sz0) / (2 * step)
    jac[..., 1, 0] = (hy1 - hy0) / (2 * step)
    jac[..., 1, 1] = (hz1 - hz0) / (2 * step)
    return CorrectionMaps(dy=s - s0, dz=h - h0, s=s, h=h, jac=jac)


def apply_correction(flow, maps: CorrectionMaps):
    """Convert a pixel flow to metric surface displacement ``(ds, dh)`` in mm.

    Uses the local pixel-to-surface Jacobian stored in ``maps``; ``dh`` is
    positive upward.
    """
    u = np.asarray(flow.u, dtype=np.float64)
    v = np.asarray(flow.v, dtype=np.float64)
    if u.shape != maps.s.shape:
        raise ValueError(f"flow {u.shape} and maps {maps.s.shape} differ in shape")
    j = maps.jac
    ds = j[..., 0, 0] * u + j[..., 0, 1] * v
    dh = j[..., 1, 0] * u + j[..., 1, 1] * v
    return ds, dh


def surface_to_pixel(cam: CameraModel, chamber: ChamberModel, s, h, guess_y, guess_z,
                     n_iter: int = 12, step: float = 0.5):
    """Invert ``trace_pixel`` by Newton iterations from the pixel guess.

    Returns pixel coordinates ``(py, pz)``; NaN where the iteration leaves
    the specimen silhouette.
    """
    py = np.array(guess_y, dtype=np.float64)
    pz = np.array(guess_z, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    for _ in range(n_iter):
        cs, ch = trace_pixel(cam, chamber, py, pz)
        ry = cs - s
        rz = ch - h
        a = (trace_pixel(cam, chamber, py + step, pz)[0] - trace_pixel(cam, chamber, py - step, pz)[0]) / (2 * step)
        b = (trace_pixel(cam, chamber, py, pz + step)[0] - trace_pixel(cam, chamber, py, pz - step)[0]) / (2 * step)
        c = (trace_pixel(cam, chamber, py + step, pz)[1] - trace_pixel(cam, chamber, py - step, pz)[1]) / (2 * step)
        d = (trace_pixel(cam, chamber, py, pz + step)[1] - trace_pixel(cam, chamber, py, pz - step)[1]) / (2 * step)
        det = a * d - b * c
        with np.errstate(invalid="ignore", divide="ignore"):
            py = py - (d * ry - b * rz) / det
            pz = pz - (-c * ry + a * rz) / det
    return py, pz
