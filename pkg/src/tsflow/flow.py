"""Dense displacement estimation between two frames.

Two stages:

1. ``discrete_match`` minimises the truncated-L1 SIFT-flow energy over
   integer displacements, coarse to fine.  The coarsest level searches a
   full window around every pixel; each finer level searches a smaller
   window around the up-scaled coarser solution.
2. ``refine_subpixel`` polishes that integer field on image brightness with
   a robust (Charbonnier) variational model solved by warping, lagged
   diffusivity fixed-point iterations and red-black SOR.

``sift_flow`` chains both.
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import _kernels
from .densefeat import SiftParams, dense_sift
from .imgio import Pyramid, build_pyramid, resize, sample_bilinear

log = logging.getLogger(__name__)

CHARBONNIER_EPS = 1e-6
MAX_STEP = 1.0


@dataclass
class FlowField:
    """Per-pixel displacement ``(u, v)`` in px; ``u`` rightward, ``v`` downward.

    Invalid entries hold NaN in both components.
    """

    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray | None = None
    status: str = "ok"

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise ValueError("u and v must be 2D arrays of equal shape")
        if self.valid is None:
            self.valid = np.isfinite(self.u) & np.isfinite(self.v)
        else:
            self.valid = np.asarray(self.valid, dtype=bool) & np.isfinite(self.u) & np.isfinite(self.v)
        self.u = np.where(self.valid, self.u, np.nan)
        self.v = np.where(self.valid, self.v, np.nan)

    @property
    def shape(self):
        return self.u.shape

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @classmethod
    def zeros(cls, shape) -> "FlowField":
        return cls(np.zeros(shape), np.zeros(shape))

    @classmethod
    def uniform(cls, shape, u: float, v: float) -> "FlowField":
        return cls(np.full(shape, float(u)), np.full(shape, float(v)))

    def filled(self, value: float = 0.0):
        """``(u, v)`` with invalid entries replaced by ``value``."""
        return (np.where(self.valid, self.u, value), np.where(self.valid, self.v, value))


@dataclass(frozen=True)
class EnergyParams:
    """Weights of the truncated-L1 matching energy.

    ``d1`` truncates the descriptor distance, ``d2`` the smoothness penalty,
    ``eta`` weighs the displacement magnitude and ``alpha`` the neighbour
    difference.
    """

    d1: float
    d2: float = 40.0
    eta: float = 0.01
    alpha: float = 2.0

    def __post_init__(self):
        for name in ("d1", "d2", "eta", "alpha"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise ValueError(f"{name} must be positive and finite, got {val}")

    @classmethod
    def for_features(cls, s1, d1_factor: float = 40.0, **kw) -> "EnergyParams":
        """Defaults with ``d1`` scaled by the mean L1 descriptor magnitude of ``s1``."""
        scale = float(np.abs(np.asarray(s1, dtype=np.float64)).sum(axis=-1).mean())
        return cls(d1=d1_factor * max(scale, 1e-6), **kw)


@dataclass(frozen=True)
class SolverParams:
    """Coarse-to-fine variational refinement settings."""

    reg_weight: float = 1.0
    ratio: float = 0.5
    coarsest_width: int = 40
    n_outer: int = 3
    n_inner: int = 1
    n_sor: int = 20
    omega: float = 1.8

    @classmethod
    def default(cls) -> "SolverParams":
        return cls(1.0, 0.5, 40, 3, 1, 20)

    @classmethod
    def optimal(cls) -> "SolverParams":
        return cls(0.02, 0.75, 20, 10, 3, 40)


@dataclass(frozen=True)
class MatchParams:
    """Discrete coarse-to-fine matching settings.

    ``window`` is the search radius at the coarsest level, ``fine_window``
    the radius around the propagated vector at finer levels.
    """

    ratio: float = 0.5
    coarsest_width: int = 64
    window: int = 4
    fine_window: int = 2
    n_iter: int = 4
    sift: SiftParams = field(default_factory=SiftParams)


# --------------------------------------------------------------------------
# energy

def _integer_components(w):
    if isinstance(w, FlowField):
        u, v = w.u, w.v
    else:
        u, v = w
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise ValueError("flow must be finite everywhere for energy evaluation")
    if np.any(u != np.round(u)) or np.any(v != np.round(v)):
        raise ValueError("energy evaluation needs an integer-valued flow")
    return u.astype(np.int64), v.astype(np.int64)


def sift_flow_energy(s1, s2, w, p: EnergyParams) -> float:
    """Truncated-L1 matching energy of the integer flow ``w``.

    Sum of the truncated descriptor distance (``d1`` when the target falls
    outside the image), ``eta * (|u| + |v|)``, and per 4-neighbour edge
    ``min(alpha |du|, d2) + min(alpha |dv|, d2)``.
    """
    s1 = np.asarray(s1)
    s2 = np.asarray(s2)
    if s1.shape != s2.shape or s1.ndim != 3:
        raise ValueError(f"feature images differ in shape: {s1.shape} vs {s2.shape}")
    u, v = _integer_components(w)
    h, wd, _ = s1.shape
    if u.shape != (h, wd):
        raise ValueError("flow and feature images differ in shape")

    zz, yy = np.mgrid[0:h, 0:wd]
    ty = yy + u
    tz = zz + v
    inside = (ty >= 0) & (ty < wd) & (tz >= 0) & (tz < h)
    data = 0.0
    for r0 in range(0, h, 32):
        sl = slice(r0, min(r0 + 32, h))
        a = s1[sl].astype(np.float64)
        b = s2[np.clip(tz[sl], 0, h - 1), np.clip(ty[sl], 0, wd - 1)].astype(np.float64)
        dist = np.minimum(np.abs(a - b).sum(axis=-1), p.d1)
        data += float(np.where(inside[sl], dist, p.d1).sum())
    small = p.eta * float((np.abs(u) + np.abs(v)).sum())
    smooth = 0.0
    for comp in (u, v):
        smooth += float(np.minimum(p.alpha * np.abs(np.diff(comp, axis=1)), p.d2).sum())
        smooth += float(np.minimum(p.alpha * np.abs(np.diff(comp, axis=0)), p.d2).sum())
    return data + small + smooth


# --------------------------------------------------------------------------
# discrete matching

def _propagate(u, v, shape):
    """Nearest-neighbour up-scaling of an integer flow, vectors scaled and rounded."""
    h, w = u.shape
    nh, nw = shape
    zi = np.clip(np.round((np.arange(nh) + 0.5) * (h / nh) - 0.5).astype(int), 0, h - 1)
    yi = np.clip(np.round((np.arange(nw) + 0.5) * (w / nw) - 0.5).astype(int), 0, w - 1)
    cu = np.round(u[np.ix_(zi, yi)] * (nw / w)).astype(np.int64)
    cv = np.round(v[np.ix_(zi, yi)] * (nh / h)).astype(np.int64)
    return cu, cv


STRIP_LABELS = 1024


def _strip_exact(U, cu, cv, r, alpha, d2):
    """Exact minimiser for grids whose short side admits few joint labellings.

    Each column of the (transposed if needed) grid becomes one super-label
    and the columns form a chain solved by dynamic programming.  Returns
    the label grid, or None when the strip is too wide.
    """
    h, w, L = U.shape
    flip = h > w
    if flip:
        U, cu, cv = U.transpose(1, 0, 2), cu.T, cv.T
        h, w = w, h
    if L ** h > STRIP_LABELS:
        return None
    n = 2 * r + 1
    labs = np.array(np.unravel_index(np.arange(L ** h), (L,) * h)).T  # (S, h)
    du, dv = labs % n - r, labs // n - r

    def disp(y):
        return cu[:, y][None, :] + du, cv[:, y][None, :] + dv

    def unary(y):
        uu, vv = disp(y)
        c = U[np.arange(h)[None, :], y, labs].sum(axis=1)
        if h > 1:
            c += (np.minimum(alpha * np.abs(np.diff(uu, axis=1)), d2).sum(axis=1)
                  + np.minimum(alpha * np.abs(np.diff(vv, axis=1)), d2).sum(axis=1))
        return c

    acc = unary(0)
    back = []
    for y in range(1, w):
        ua, va = disp(y - 1)
        ub, vb = disp(y)
        pair = (np.minimum(alpha * np.abs(ua[:, None, :] - ub[None, :, :]), d2)
                + np.minimum(alpha * np.abs(va[:, None, :] - vb[None, :, :]), d2)).sum(axis=2)
        tot = acc[:, None] + pair
        arg = np.argmin(tot, axis=0)
        back.append(arg)
        acc = tot[arg, np.arange(tot.shape[1])] + unary(y)
    best = [int(np.argmin(acc))]
    for arg in reversed(back):
        best.append(int(arg[best[-1]]))
    best.reverse()
    lab = labs[best].T.astype(np.int64)  # (h, w)
    return np.ascontiguousarray(lab.T) if flip else lab


def _level_params(s1, p):
    return p if p is not None else EnergyParams.for_features(s1)


def discrete_match(p1, p2, p: EnergyParams | None = None, window: int = 4,
                   fine_window: int | None = None, n_iter: int = 4,
                   trace: list | None = None) -> FlowField:
    """Coarse-to-fine integer SIFT-flow matching.

    ``p1`` and ``p2`` are pyramids (or lists, finest first) of feature
    images.  When ``p`` is None the defaults of ``EnergyParams.for_features``
    are derived per level.  Levels whose short side allows at most
    ``STRIP_LABELS`` joint labellings are solved exactly; larger ones by
    monotone row/column relaxation started both from the propagated field
    and from the per-pixel best match, keeping the lower energy.  A level
    never returns a field with higher energy than the zero flow.  If
    ``trace`` is a list, one dict per level with the energies before and
    after relaxation is appended to it.
    """
    l1 = list(p1.levels if isinstance(p1, Pyramid) else p1)
    l2 = list(p2.levels if isinstance(p2, Pyramid) else p2)
    if not l1 or len(l1) != len(l2):
        raise ValueError("pyramids must be non-empty and of equal depth")
    if window < 1:
        raise ValueError("search window radius must be >= 1")
    fine_window = window if fine_window is None else fine_window
    if fine_window < 1:
        raise ValueError("search window radius must be >= 1")

    u = v = None
    for k in range(len(l1) - 1, -1, -1):
        s1 = np.ascontiguousarray(l1[k], dtype=np.float32)
        s2 = np.ascontiguousarray(l2[k], dtype=np.float32)
        if s1.shape != s2.shape:
            raise ValueError(f"level {k}: feature shapes differ {s1.shape} vs {s2.shape}")
        ep = _level_params(s1, p)
        h, w = s1.shape[:2]
        zero = np.zeros((h, w), dtype=np.int64)
        e_zero = _kernels.flow_energy(s1, s2, zero, zero, ep.d1, ep.d2, ep.eta, ep.alpha)
        if u is None:
            cu, cv, r, e_start = zero, zero.copy(), window, e_zero
        else:
            cu, cv = _propagate(u, v, (h, w))
            r = fine_window
            e_start = _kernels.flow_energy(s1, s2, cu, cv, ep.d1, ep.d2, ep.eta, ep.alpha)
        n = 2 * r + 1
        U = _kernels.unary_costs(s1, s2, cu, cv, r, ep.d1, ep.eta)
        exact = _strip_exact(U, cu, cv, r, ep.alpha, ep.d2)
        if exact is not None:
            starts, iters = [exact], 0
        else:
            # relax from the propagated field and from the per-pixel best match
            starts = [np.full((h, w), (n * n) // 2, dtype=np.int64),
                      np.argmin(U, axis=2).astype(np.int64)]
            iters = 0
            for lab in starts:
                iters += _kernels.relax(U, cu, cv, lab, r, ep.alpha, ep.d2, n_iter)
        best = None
        for lab in starts:
            cand_u = cu + lab % n - r
            cand_v = cv + lab // n - r
            e = _kernels.flow_energy(s1, s2, cand_u, cand_v, ep.d1, ep.d2, ep.eta, ep.alpha)
            if best is None or e < best[0]:
                best = (e, cand_u, cand_v)
        e_end, u, v = best
        if e_zero < e_end:
            u, v, e_end = zero, zero.copy(), e_zero
        if trace is not None:
            trace.append({"level": k, "shape": (h, w), "energy_start": e_start,
                          "energy_end": e_end, "energy_zero": e_zero, "iterations": iters})
        log.debug("discrete level %d %s radius %d: %d sweeps", k, (h, w), r, iters)
    return FlowField(u.astype(np.float64), v.astype(np.float64))


def feature_pyramid(img, ratio: float, coarsest_width: int,
                    sift: SiftParams = SiftParams()) -> Pyramid:
    """Dense SIFT computed on every level of an image pyramid."""
    ip = build_pyramid(img, ratio, max(coarsest_width, sift.footprint))
    feats = [dense_sift(level, sift) for level in ip.levels]
    return Pyramid(levels=feats, ratio=ratio, coarsest_width=ip.coarsest_width, shapes=ip.shapes)


# --------------------------------------------------------------------------
# warping and the variational refinement

def warp(img, w: FlowField):
    """Sample ``img`` at ``x + w(x)``.

    Returns ``(warped, valid)``; entries whose flow is invalid or whose
    target leaves the image are flagged False (and hold the clamped sample).
    """
    img = np.asarray(img, dtype=np.float64)
    if img.shape != w.shape:
        raise ValueError(f"image {img.shape} and flow {w.shape} differ in shape")
    u, v = w.filled(0.0)
    zz, yy = np.mgrid[0:img.shape[0], 0:img.shape[1]].astype(np.float64)
    ty = yy + u
    tz = zz + v
    h, wd = img.shape
    valid = w.valid & (ty >= 0) & (ty <= wd - 1) & (tz >= 0) & (tz <= h - 1)
    return sample_bilinear(img, ty, tz), valid


def _spline_coeffs(img):
    return ndimage.spline_filter(np.asarray(img, dtype=np.float64), order=3, mode="nearest")


def _warp_arrays(coeffs, u, v, img=None):
    """Cubic-spline samples of the image behind ``coeffs`` at ``x + w``.

    With ``img`` given, targets on the pixel lattice read it directly so an
    integer flow warps exactly.
    """
    h, w = coeffs.shape
    zz, yy = np.mgrid[0:h, 0:w].astype(np.float64)
    ty = yy + u
    tz = zz + v
    inside = (ty >= 0) & (ty <= w - 1) & (tz >= 0) & (tz <= h - 1)
    vals = ndimage.map_coordinates(coeffs, [tz, ty], order=3, mode="nearest", prefilter=False)
    if img is not None:
        on_grid = inside & (ty == np.floor(ty)) & (tz == np.floor(tz))
        vals[on_grid] = img[tz[on_grid].astype(np.intp), ty[on_grid].astype(np.intp)]
    return vals, inside


def _grad_centered(img):
    p = np.pad(img, 1, mode="edge")
    return 0.5 * (p[1:-1, 2:] - p[1:-1, :-2]), 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])


def _smooth_terms(u, v):
    """Forward-difference squared gradient magnitude of the flow (zero at far borders)."""
    gx_u = np.zeros_like(u)
    gy_u = np.zeros_like(u)
    gx_v = np.zeros_like(v)
    gy_v = np.zeros_like(v)
    gx_u[:, :-1] = np.diff(u, axis=1)
    gy_u[:-1, :] = np.diff(u, axis=0)
    gx_v[:, :-1] = np.diff(v, axis=1)
    gy_v[:-1, :] = np.diff(v, axis=0)
    return gx_u ** 2 + gy_u ** 2 + gx_v ** 2 + gy_v ** 2


def variational_objective(i1, i2, u, v, reg_weight: float, coeffs=None) -> float:
    """Robust brightness residual plus weighted robust flow smoothness.

    ``i2`` is warped with cubic splines; pass precomputed ``coeffs`` of
    ``i2`` to skip the prefilter.
    """
    coeffs = _spline_coeffs(i2) if coeffs is None else coeffs
    warped, inside = _warp_arrays(coeffs, u, v, np.asarray(i2, dtype=np.float64))
    res = np.where(inside, warped - i1, 0.0)
    data = np.sqrt(res ** 2 + CHARBONNIER_EPS).sum()
    smooth = np.sqrt(_smooth_terms(u, v) + CHARBONNIER_EPS).sum()
    return float(data + reg_weight * smooth)


def data_residual(i1, i2, w: FlowField) -> float:
    """Mean absolute brightness residual ``|I2(x + w) - I1(x)|`` over valid pixels."""
    warped, valid = warp(i2, w)
    if not valid.any():
        return float("nan")
    return float(np.abs(warped - np.asarray(i1, dtype=np.float64))[valid].mean())


class RefinementDiverged(RuntimeError):
    pass


def _refine_level(i1, i2, u, v, sp: SolverParams, history: list | None):
    alpha = sp.reg_weight
    coeffs = _spline_coeffs(i2)
    g1x, g1y = _grad_centered(i1)
    energy = variational_objective(i1, i2, u, v, alpha, coeffs)
    if history is not None:
        history.append(energy)
    for _ in range(sp.n_outer):
        warped, inside = _warp_arrays(coeffs, u, v, i2)
        warped = np.where(inside, warped, i1)
        g2x, g2y = _grad_centered(warped)
        ix = np.where(inside, 0.5 * (g1x + g2x), 0.0)
        iy = np.where(inside, 0.5 * (g1y + g2y), 0.0)
        it = warped - i1
        du = np.zeros_like(u)
        dv = np.zeros_like(v)
        for _ in range(sp.n_inner):
            res = it + ix * du + iy * dv
            psi_d = 0.5 / np.sqrt(res ** 2 + CHARBONNIER_EPS)
            phi = 0.5 / np.sqrt(_smooth_terms(u + du, v + dv) + CHARBONNIER_EPS)
            wx = alpha * phi
            wy = alpha * phi.copy()
            wx[:, -1] = 0.0
            wy[-1, :] = 0.0
            _kernels.sor_solve(du, dv, u, v, ix, iy, it, psi_d, wx, wy, sp.n_sor, sp.omega)
            if not (np.all(np.isfinite(du)) and np.all(np.isfinite(dv))):
                raise RefinementDiverged("non-finite flow increment")
        # a linearisation is only trusted within a pixel; then backtrack so the
        # objective never increases
        np.clip(du, -MAX_STEP, MAX_STEP, out=du)
        np.clip(dv, -MAX_STEP, MAX_STEP, out=dv)
        step = 1.0
        accepted = False
        for _ in range(6):
            cand_u = u + step * du
            cand_v = v + step * dv
            e = variational_objective(i1, i2, cand_u, cand_v, alpha, coeffs)
            if e <= energy:
                u, v, energy = cand_u, cand_v, e
                accepted = True
                break
            step *= 0.5
        if history is not None:
            history.append(energy)
        if not accepted:
            break
    return u, v


def refine_subpixel(i1, i2, init: FlowField | None = None,
                    sp: SolverParams = SolverParams.optimal(),
                    history: list | None = None, start_level: int | None = None) -> FlowField:
    """Continuous coarse-to-fine refinement of ``init`` on image brightness.

    The initial field is resampled onto pyramid level ``start_level``
    (vectors scaled with the grid) and refined level by level down to the
    full resolution.  By default a zero start enters at the coarsest level
    and a given ``init`` at the finest, which is its own scale.  On a
    non-finite increment the last finite iterate is returned with
    ``status == "diverged"``.  If ``history`` is a list, one list of
    per-outer-iteration objective values is appended per level.
    """
    i1 = np.asarray(i1, dtype=np.float64)
    i2 = np.asarray(i2, dtype=np.float64)
    if i1.shape != i2.shape:
        raise ValueError("frames differ in shape")
    if start_level is None:
        start_level = -1 if init is None else 0
    if init is None:
        init = FlowField.zeros(i1.shape)
    if init.shape != i1.shape:
        raise ValueError("initial flow does not match the frames")
    u0, v0 = init.filled(0.0)

    pyr1 = build_pyramid(i1, sp.ratio, sp.coarsest_width)
    pyr2 = build_pyramid(i2, sp.ratio, sp.coarsest_width)
    h0, w0 = i1.shape
    u = v = None
    status = "ok"
    top = len(pyr1) - 1 if start_level < 0 else min(start_level, len(pyr1) - 1)
    for k in range(top, -1, -1):
        a, b = pyr1[k], pyr2[k]
        h, w = a.shape
        if u is None:
            u = resize(u0, (h, w)) * (w / w0)
            v = resize(v0, (h, w)) * (h / h0)
        else:
            ph, pw = u.shape
            u = resize(u, (h, w)) * (w / pw)
            v = resize(v, (h, w)) * (h / ph)
        level_hist = [] if history is not None else None
        try:
            u, v = _refine_level(a, b, u, v, sp, level_hist)
        except RefinementDiverged as exc:
            log.warning("refinement diverged at level %d (%s); returning last finite iterate", k, exc)
            status = "diverged"
            if (h, w) != (h0, w0):
                u = resize(u, (h0, w0)) * (w0 / w)
                v = resize(v, (h0, w0)) * (h0 / h)
            break
        finally:
            if history is not None:
                history.append(level_hist)
    return FlowField(u, v, init.valid.copy(), status=status)


def sift_flow(i1, i2, solver: SolverParams | None = SolverParams.optimal(),
              match: MatchParams = MatchParams(), energy: EnergyParams | None = None) -> FlowField:
    """Integer SIFT-flow matching followed (unless ``solver`` is None) by refinement."""
    f1 = feature_pyramid(i1, match.ratio, match.coarsest_width, match.sift)
    f2 = feature_pyramid(i2, match.ratio, match.coarsest_width, match.sift)
    w = discrete_match(f1, f2, energy, match.window, match.fine_window, match.n_iter)
    if solver is None:
        return w
    return refine_subpixel(i1, i2, w, solver)


# --------------------------------------------------------------------------
# export

def _atomic_text(path: Path, text: str) -> None:
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _fmt(x: float) -> str:
    return "nan" if not math.isfinite(x) else repr(float(x))


def write_flow_csv(path, w: FlowField) -> None:
    """CSV ``y,z,u,v,valid`` in row-major order (z outer, y inner)."""
    lines = ["y,z,u,v,valid"]
    for z in range(w.height):
        for y in range(w.width):
            ok = bool(w.valid[z, y])
            lines.append(f"{y},{z},{_fmt(w.u[z, y])},{_fmt(w.v[z, y])},{int(ok)}")
    _atomic_text(Path(path), "\n".join(lines) + "\n")


def read_flow_csv(path) -> FlowField:
    data = np.genfromtxt(path, delimiter=",", names=True)
    ys = data["y"].astype(int)
    zs = data["z"].astype(int)
    h, w = zs.max() + 1, ys.max() + 1
    u = np.full((h, w), np.nan)
    v = np.full((h, w), np.nan)
    valid = np.zeros((h, w), dtype=bool)
    u[zs, ys] = data["u"]
    v[zs, ys] = data["v"]
    valid[zs, ys] = data["valid"].astype(bool)
    return FlowField(u, v, valid)


def write_heatmap(path, values) -> tuple[float, float]:
    """8-bit PGM of ``values`` mapping ``[min, max]`` linearly onto ``[0, 255]``.

    NaN pixels are written as 0.  The bounds go to ``<path>.txt``.
    """
    path = Path(path)
    values = np.asarray(values, dtype=np.float64)
    finite = np.isfinite(values)
    lo = float(values[finite].min()) if finite.any() else 0.0
    hi = float(values[finite].max()) if finite.any() else 0.0
    span = hi - lo
    scaled = np.zeros(values.shape) if span <= 0 else (values - lo) / span
    raster = np.rint(np.where(finite, scaled, 0.0) * 255.0).astype(np.uint8)
    header = f"P5\n{values.shape[1]} {values.shape[0]}\n255\n".encode("ascii")
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_bytes(header + raster.tobytes())
    os.replace(tmp, path)
    _atomic_text(path.with_name(path.name + ".txt"), f"min {_fmt(lo)}\nmax {_fmt(hi)}\n")
    return lo, hi


__all__ = [
    "FlowField", "EnergyParams", "SolverParams", "MatchParams", "sift_flow_energy",
    "discrete_match", "feature_pyramid", "warp", "refine_subpixel", "sift_flow",
    "variational_objective", "data_residual", "write_flow_csv", "read_flow_csv",
    "write_heatmap",
]
