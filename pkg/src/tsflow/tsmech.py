"""Torsional-shear mechanics, displacement profiles and active-height fitting.

Units: lengths in mm, torque in N*m, angles in rad, stress in kPa, shear
modulus in MPa.  ``I`` is the polar second moment of the circular cross
section, ``pi * r**4 / 2``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

KAPPA_MANUAL = 0.67
KAPPA_VERY_SMALL_STRAIN = 0.8
KAPPA_MEDIUM_STRAIN = 0.65


def reduced_radius(r: float, kappa: float = KAPPA_MANUAL) -> float:
    if not r > 0:
        raise ValueError("radius must be positive")
    if not 0 < kappa <= 1:
        raise ValueError("kappa must lie in (0, 1]")
    return kappa * r


def polar_moment(r: float) -> float:
    return math.pi * r ** 4 / 2.0


@dataclass(frozen=True)
class SpecimenGeometry:
    r: float = 35.0
    H: float = 140.0
    kappa: float = KAPPA_MANUAL

    def __post_init__(self):
        if not (self.r > 0 and self.H > 0):
            raise ValueError("radius and height must be positive")
        reduced_radius(self.r, self.kappa)

    @property
    def rho(self) -> float:
        return reduced_radius(self.r, self.kappa)

    @property
    def I_polar(self) -> float:
        return polar_moment(self.r)


def shear_strain(phi, rho: float, H_eff: float):
    """``rho * phi / H_eff`` (dimensionless)."""
    if not H_eff > 0:
        raise ValueError("effective height must be positive")
    return rho * np.asarray(phi, dtype=np.float64) / H_eff if np.ndim(phi) else rho * phi / H_eff


def shear_stress(T, rho: float, I_polar: float):
    """``rho * T / I`` in kPa for torque in N*m and lengths in mm."""
    if not I_polar > 0:
        raise ValueError("second moment must be positive")
    # N*m -> N*mm is *1e3; N/mm^2 -> kPa is *1e3
    factor = rho * 1e6 / I_polar
    return factor * np.asarray(T, dtype=np.float64) if np.ndim(T) else factor * T


def shear_modulus(tau, gamma) -> float:
    """Secant modulus (MPa) at the strain extremum: ``tau(gamma_max) / gamma_max``.

    ``tau`` is in kPa.  Scalars are divided directly; for series the sample
    with the largest ``|gamma|`` is used.
    """
    tau = np.asarray(tau, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    if gamma.ndim == 0:
        g, t = float(gamma), float(tau)
    else:
        if gamma.size == 0:
            raise ValueError("empty series")
        k = int(np.nanargmax(np.abs(gamma)))
        g, t = float(gamma[k]), float(tau[k])
    if g == 0.0:
        raise ZeroDivisionError("shear strain at the extremum is zero")
    return t / g / 1000.0


@dataclass(frozen=True)
class TorqueSignal:
    T0: float
    f: float
    n_cycles: int = 3

    def __post_init__(self):
        if self.T0 < 0 or not self.f > 0:
            raise ValueError("need T0 >= 0 and f > 0")

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * self.f


def torque_at(t, sig: TorqueSignal):
    return sig.T0 * np.sin(sig.omega * np.asarray(t, dtype=np.float64)) if np.ndim(t) \
        else sig.T0 * math.sin(sig.omega * t)


@dataclass
class TsTimeSeries:
    t: np.ndarray
    T: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.T = np.asarray(self.T, dtype=np.float64)
        self.phi = np.asarray(self.phi, dtype=np.float64)
        if not (self.t.shape == self.T.shape == self.phi.shape) or self.t.ndim != 1:
            raise ValueError("t, T and phi must be 1D arrays of equal length")
        if self.t.size == 0:
            raise ValueError("empty series")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("time stamps must be strictly increasing")

    @classmethod
    def elastic(cls, sig: TorqueSignal, geom: SpecimenGeometry, G: float,
                samples_per_cycle: int = 200) -> "TsTimeSeries":
        """Synthetic lossless response with modulus ``G`` (MPa) at the reduced radius."""
        n = samples_per_cycle * sig.n_cycles
        t = np.arange(n) / (samples_per_cycle * sig.f)
        T = torque_at(t, sig)
        tau = shear_stress(T, geom.rho, geom.I_polar)
        phi = tau / (G * 1000.0) * geom.H / geom.rho
        return cls(t, T, phi)


def read_series_csv(path) -> TsTimeSeries:
    """Read ``t,T,phi`` (s, N*m, rad)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no samples")
    try:
        return TsTimeSeries([float(r["t"]) for r in rows], [float(r["T"]) for r in rows],
                            [float(r["phi"]) for r in rows])
    except KeyError as exc:
        raise ValueError(f"{path}: missing column {exc}") from exc


# --------------------------------------------------------------------------
# hysteresis

def loop_area(x, y) -> float:
    """Shoelace area of the closed polygon through the samples."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))


@dataclass
class HysteresisLoop:
    gamma: np.ndarray
    tau: np.ndarray
    label: str = "original"
    H_eff: float = float("nan")

    @property
    def area(self) -> float:
        return loop_area(self.gamma, self.tau)

    @property
    def closure_gap(self) -> float:
        return float(math.hypot(self.gamma[-1] - self.gamma[0], self.tau[-1] - self.tau[0]))

    @property
    def modulus(self) -> float:
        return shear_modulus(self.tau, self.gamma)


def build_hysteresis(series: TsTimeSeries, geom: SpecimenGeometry, H_eff: float | None = None,
                     label: str | None = None) -> HysteresisLoop:
    """Stress-strain loop; ``H_eff`` defaults to the full height (original loop)."""
    H_eff = geom.H if H_eff is None else H_eff
    if label is None:
        label = "original" if H_eff == geom.H else "modified"
    gamma = shear_strain(series.phi, geom.rho, H_eff)
    tau = shear_stress(series.T, geom.rho, geom.I_polar)
    return HysteresisLoop(np.asarray(gamma), np.asarray(tau), label, H_eff)


# --------------------------------------------------------------------------
# profiles

@dataclass
class DisplacementProfile:
    """Mean horizontal displacement ``d`` versus height ``z`` above the bottom (ascending)."""

    z: np.ndarray
    d: np.ndarray
    band_width: int = 0

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.float64)
        self.d = np.asarray(self.d, dtype=np.float64)
        if self.z.shape != self.d.shape or self.z.ndim != 1:
            raise ValueError("z and d must be 1D arrays of equal length")

    def scaled(self, z_scale: float = 1.0, d_scale: float = 1.0) -> "DisplacementProfile":
        return DisplacementProfile(self.z * z_scale, self.d * d_scale, self.band_width)


def extract_profile(field, band_width: int = 200, n_bins: int | None = None,
                    center: float | None = None, y=None, z=None,
                    bottom: float | None = None) -> DisplacementProfile:
    """Band-averaged horizontal displacement along the specimen axis.

    ``field`` holds horizontal displacement with rows ordered top to bottom.
    ``y``/``z`` give the pixel coordinates of its columns/rows (default:
    indices) so sparse grids such as PIV results work too.  The band covers
    ``band_width`` pixels of ``y`` centered on ``center`` (default: middle
    column).  Heights are ``bottom - z`` with ``bottom`` defaulting to the
    last row.  NaNs are ignored; rows with no finite value are dropped.
    """
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 2:
        raise ValueError("field must be 2D")
    nz, ny = field.shape
    dense = y is None
    y = np.arange(ny, dtype=np.float64) if y is None else np.asarray(y, dtype=np.float64)
    z = np.arange(nz, dtype=np.float64) if z is None else np.asarray(z, dtype=np.float64)
    if y.shape != (ny,) or z.shape != (nz,):
        raise ValueError("coordinate vectors do not match the field")
    if band_width < 1:
        raise ValueError("band width must be at least one pixel")
    if center is None:
        center = float((ny - 1) // 2) if dense else 0.5 * (y.min() + y.max())
    lo = center - band_width // 2
    hi = lo + band_width
    cols = (y >= lo) & (y < hi)
    if dense and (lo < 0 or hi > ny):
        raise ValueError(f"band [{lo}, {hi}) does not fit in {ny} columns")
    if not cols.any():
        raise ValueError("empty band")
    band = field[:, cols]
    bottom = float(z.max()) if bottom is None else float(bottom)

    rows = np.arange(nz)
    groups = np.array_split(rows, n_bins) if n_bins else rows[:, None]
    zs, ds = [], []
    for g in groups:
        if g.size == 0:
            continue
        vals = band[g]
        finite = np.isfinite(vals)
        if not finite.any():
            continue
        zs.append(bottom - z[g].mean())
        ds.append(vals[finite].mean())
    if not zs:
        raise ValueError("empty band: no finite displacement")
    order = np.argsort(zs, kind="stable")
    return DisplacementProfile(np.asarray(zs)[order], np.asarray(ds)[order], band_width)


def calibrate_profile(profile: DisplacementProfile, top_value: float,
                      bottom_value: float = 0.0) -> DisplacementProfile:
    """Affine rescaling so the profile ends equal two reference displacements.

    Interpretation of correlating the measurement with the fixed bottom cap
    and the independently measured top cap.
    """
    d0, d1 = profile.d[0], profile.d[-1]
    if d1 == d0:
        raise ValueError("profile ends coincide; cannot calibrate")
    a = (top_value - bottom_value) / (d1 - d0)
    return DisplacementProfile(profile.z.copy(), bottom_value + a * (profile.d - d0), profile.band_width)


def _valid(profile: DisplacementProfile):
    ok = np.isfinite(profile.z) & np.isfinite(profile.d)
    return profile.z[ok], profile.d[ok]


def profile_std(profile: DisplacementProfile) -> float:
    """Sample standard deviation (``n - 1`` denominator) of the displacements."""
    _, d = _valid(profile)
    if d.size < 2:
        raise ValueError("need at least two valid points")
    return float(np.std(d, ddof=1))


def profile_rmse(a: DisplacementProfile, b: DisplacementProfile) -> float:
    """RMS difference of ``a`` and ``b`` resampled (linearly) onto ``a``'s heights.

    Heights of ``a`` outside the range of ``b`` are skipped.
    """
    za, da = _valid(a)
    zb, db = _valid(b)
    if za.size < 2 or zb.size < 2:
        raise ValueError("need at least two valid points in each profile")
    order = np.argsort(zb)
    zb, db = zb[order], db[order]
    inside = (za >= zb[0]) & (za <= zb[-1])
    if not inside.any():
        raise ValueError("profiles do not overlap in height")
    diff = da[inside] - np.interp(za[inside], zb, db)
    return float(np.sqrt(np.mean(diff ** 2)))


# --------------------------------------------------------------------------
# active height

@dataclass
class ActiveHeightFit:
    h_prime: float
    z_break: float
    slope_lower: float
    slope_upper: float
    rms: float
    rms_linear: float
    H: float
    degenerate: bool = False
    method: str = "bilinear least squares, top-anchored"
    residuals: np.ndarray = field(default=None, repr=False)

    @property
    def ratio(self) -> float:
        return self.h_prime / self.H


def _bilinear_fit(z, d, zt, dt, zb):
    """Least-squares slopes for break heights ``zb`` (vector); returns (sse, s_up, s_low)."""
    A = np.maximum(z[None, :], zb[:, None]) - zt
    B = np.minimum(z[None, :] - zb[:, None], 0.0)
    y = (d - dt)[None, :]
    saa = (A * A).sum(1)
    sbb = (B * B).sum(1)
    sab = (A * B).sum(1)
    say = (A * y).sum(1)
    sby = (B * y).sum(1)
    det = saa * sbb - sab * sab
    scale = saa * sbb
    good = det > 1e-12 * np.where(scale > 0, scale, 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        s_up = np.where(good, (sbb * say - sab * sby) / det, say / np.where(saa > 0, saa, 1.0))
        s_low = np.where(good, (saa * sby - sab * say) / det, 0.0)
    res = y - s_up[:, None] * A - s_low[:, None] * B
    return (res * res).sum(1), s_up, s_low


def fit_active_height(profile: DisplacementProfile, H: float, chunk: int = 256) -> ActiveHeightFit:
    """Bi-linear fit of a displacement profile; ``h' = H - z_break``.

    The upper segment passes through the topmost measured displacement, the
    lower segment joins it continuously at the break with a free slope.  The
    break is searched over the profile heights; among fits whose squared
    residual is within a relative ``1e-9`` of the best, the lowest break
    (largest ``h'``) wins.  A flat profile gives ``degenerate=True`` and
    ``h_prime = nan``.
    """
    z, d = _valid(profile)
    if z.size < 8:
        raise ValueError("need at least 8 profile points")
    order = np.argsort(z, kind="stable")
    z, d = z[order], d[order]
    zt, dt = z[-1], d[-1]
    span = np.ptp(d)
    if span <= 1e-12 * max(1.0, np.abs(d).max()):
        return ActiveHeightFit(float("nan"), float("nan"), 0.0, 0.0, 0.0, 0.0, H, degenerate=True)

    cands = z[:-1]
    sse = np.empty(cands.size)
    up = np.empty(cands.size)
    low = np.empty(cands.size)
    for c0 in range(0, cands.size, chunk):
        sl = slice(c0, c0 + chunk)
        sse[sl], up[sl], low[sl] = _bilinear_fit(z, d, zt, dt, cands[sl])
    best = sse.min()
    tol = 1e-9 * max(best, 1e-12 * float(np.sum((d - dt) ** 2)))
    k = int(np.flatnonzero(sse <= best + tol)[0])
    zb = float(cands[k])
    n = z.size
    return ActiveHeightFit(
        h_prime=float(min(max(H - zb, 0.0), H)),
        z_break=zb,
        slope_lower=float(low[k]),
        slope_upper=float(up[k]),
        rms=float(math.sqrt(sse[k] / n)),
        rms_linear=float(math.sqrt(sse[0] / n)),
        H=H,
        residuals=sse,
    )


def modulus_ratio(H: float, h_prime: float) -> float:
    """``G_modified / G_original`` implied by the active height."""
    return h_prime / H
