"""Command-line pipeline: synth, crop, maps, flow, piv, profile, fit, hysteresis, compare.

Every verb reads one plain-text configuration (``section.key = value`` per
line, ``#`` comments) plus ``--set section.key=value`` overrides and writes
CSV/PGM artifacts under ``--out``.  Later verbs pick up the artifacts of
earlier ones from the same directory.

Exit codes: 0 success, 1 bad configuration, 2 inconsistent inputs,
3 missing upstream artifact.
"""
from __future__ import annotations

import argparse
import glob
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import flow as flowmod
from . import optics, piv, synth, tsmech
from .imgio import RegionOfInterest, crop, load_gray, save_pgm

log = logging.getLogger("tsflow")

VERBS = ("synth", "crop", "maps", "flow", "piv", "profile", "fit", "hysteresis", "compare")


class CliError(Exception):
    code = 1


class ConfigError(CliError):
    code = 1


class InputError(CliError):
    code = 2


class MissingArtifact(CliError):
    code = 3


# --------------------------------------------------------------------------
# configuration

DEFAULTS = {
    "synth.preset": "rigid",
    "synth.seed": "0",
    "synth.noise": "0",
    "synth.density": "0.035",
    "synth.projection": "flat",
    "flow.params": "optimal",
    "flow.refine": "true",
    "match.window": "4",
    "match.fine_window": "2",
    "match.n_iter": "4",
    "match.ratio": "0.5",
    "match.coarsest_width": "64",
    "piv.preset": "2p64",
    "piv.overlap": "0.5",
    "profile.band_width": "200",
    "profile.source": "all",
    "profile.correct": "false",
    "specimen.r": "35",
    "specimen.H": "140",
    "specimen.kappa": "0.67",
    "camera.distance": "700",
    "camera.pitch": "0.07",
    "chamber.specimen_radius": "35",
    "chamber.inner_radii": "55,60",
    "chamber.outer_radii": "95,100",
    "chamber.tube_eta": str(optics.POLYCARBONATE),
    "chamber.medium_eta": str(optics.AIR),
}

SYNTH_PRESETS = {
    "rigid": {"kind": "rigid_shift", "u": 3.0, "v": 2.0, "width": 512, "height": 512},
    "subpixel": {"kind": "rigid_shift", "u": 0.3, "v": -0.7, "width": 512, "height": 512},
    "linear": {"kind": "linear_twist", "top_px": 4.0, "width": 801, "height": 1861},
    "bilinear": {"kind": "bilinear_twist", "top_px": 5.0, "h_ratio": 0.6, "width": 801, "height": 1861},
    "paperA-like": {"kind": "bilinear_twist", "top_px": 4.0, "h_ratio": 0.55, "width": 801, "height": 1861},
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    cfg = {}
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or "." not in key or not key.replace(".", "").replace("_", "").isalnum():
            raise ConfigError(f"{source}:{no}: expected 'section.key = value', got {raw!r}")
        cfg[key] = value.strip()
    return cfg


class Config:
    def __init__(self, values: dict, base: Path):
        self.values = {**DEFAULTS, **values}
        self.base = base

    def has(self, key):
        return key in self.values and self.values[key] != ""

    def str(self, key, default=None):
        if not self.has(key):
            if default is None:
                raise ConfigError(f"missing configuration key {key}")
            return default
        return self.values[key]

    def float(self, key, default=None):
        val = self.str(key, None if default is None else repr(default))
        try:
            out = float(val)
        except ValueError:
            raise ConfigError(f"{key}: not a number: {val!r}") from None
        if not math.isfinite(out):
            raise ConfigError(f"{key}: must be finite")
        return out

    def int(self, key, default=None):
        val = self.float(key, default)
        if val != int(val):
            raise ConfigError(f"{key}: expected an integer, got {val}")
        return int(val)

    def bool(self, key, default=None):
        val = self.str(key, None if default is None else str(default)).lower()
        if val in ("1", "true", "yes", "on"):
            return True
        if val in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected true/false, got {val!r}")

    def floats(self, key):
        try:
            return [float(x) for x in self.str(key).split(",")]
        except ValueError:
            raise ConfigError(f"{key}: expected comma-separated numbers") from None

    def path(self, key):
        p = Path(self.str(key))
        return p if p.is_absolute() else self.base / p


def load_config(path, overrides) -> Config:
    values = {}
    base = Path.cwd()
    if path:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"configuration file {path} not found")
        values = parse_config_text(path.read_text(), str(path))
        base = path.resolve().parent
    for item in overrides or []:
        values.update(parse_config_text(item, "--set"))
    return Config(values, base)


# --------------------------------------------------------------------------
# parameter builders

def _guard(fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def geometry(cfg: Config) -> tsmech.SpecimenGeometry:
    return _guard(tsmech.SpecimenGeometry, cfg.float("specimen.r"), cfg.float("specimen.H"),
                  cfg.float("specimen.kappa"))


def chamber(cfg: Config) -> optics.ChamberModel:
    inner = cfg.floats("chamber.inner_radii")
    outer = cfg.floats("chamber.outer_radii")
    if len(inner) != 2 or len(outer) != 2:
        raise ConfigError("tube radii need two values: inner,outer")
    te = cfg.float("chamber.tube_eta")
    me = cfg.float("chamber.medium_eta")
    return _guard(optics.ChamberModel, cfg.float("chamber.specimen_radius"),
                  optics.Tube(inner[0], inner[1], te), optics.Tube(outer[0], outer[1], te), me, me, me)


def camera(cfg: Config, shape) -> optics.CameraModel:
    pp = (cfg.float("camera.principal_y", (shape[1] - 1) / 2.0),
          cfg.float("camera.principal_z", (shape[0] - 1) / 2.0))
    return _guard(optics.CameraModel.from_surface_pitch, cfg.float("camera.distance"),
                  cfg.float("camera.pitch"), cfg.float("chamber.specimen_radius"), pp,
                  cfg.float("camera.height", cfg.float("specimen.H") / 2.0))


def solver_params(cfg: Config) -> flowmod.SolverParams:
    name = cfg.str("flow.params")
    if name not in ("optimal", "default"):
        raise ConfigError("flow.params must be 'optimal' or 'default'")
    base = flowmod.SolverParams.optimal() if name == "optimal" else flowmod.SolverParams.default()
    kw = {}
    for key in ("reg_weight", "ratio", "omega"):
        if cfg.has(f"flow.{key}"):
            kw[key] = cfg.float(f"flow.{key}")
    for key in ("coarsest_width", "n_outer", "n_inner", "n_sor"):
        if cfg.has(f"flow.{key}"):
            kw[key] = cfg.int(f"flow.{key}")
    sp = flowmod.SolverParams(**{**base.__dict__, **kw})
    if not (0 < sp.ratio < 1 and sp.reg_weight > 0 and sp.coarsest_width >= 4 and 0 < sp.omega < 2):
        raise ConfigError(f"solver parameters out of range: {sp}")
    return sp


def match_params(cfg: Config) -> flowmod.MatchParams:
    mp = flowmod.MatchParams(ratio=cfg.float("match.ratio"), coarsest_width=cfg.int("match.coarsest_width"),
                             window=cfg.int("match.window"), fine_window=cfg.int("match.fine_window"),
                             n_iter=cfg.int("match.n_iter"))
    if not (0 < mp.ratio < 1 and mp.window >= 1 and mp.fine_window >= 1 and mp.n_iter >= 1):
        raise ConfigError(f"matching parameters out of range: {mp}")
    return mp


def energy_params(cfg: Config):
    if not cfg.has("energy.d1"):
        return None
    return _guard(flowmod.EnergyParams, cfg.float("energy.d1"), cfg.float("energy.d2", 40.0),
                  cfg.float("energy.eta", 0.01), cfg.float("energy.alpha", 2.0))


def schedule(cfg: Config) -> piv.PassSchedule:
    name = cfg.str("piv.preset")
    if name in piv.PRESETS:
        return _guard(piv.PassSchedule.preset, name, cfg.float("piv.overlap"))
    try:
        sizes = [int(s) for s in name.split(",")]
    except ValueError:
        raise ConfigError(f"piv.preset: unknown preset {name!r}") from None
    return _guard(piv.PassSchedule, tuple(sizes), cfg.float("piv.overlap"))


def preset_label(cfg: Config) -> str:
    name = cfg.str("piv.preset")
    return name if name in piv.PRESETS else "p" + name.replace(",", "-")


# --------------------------------------------------------------------------
# artifacts

def _frames(cfg: Config, out: Path):
    if cfg.has("input.frames"):
        pattern = cfg.str("input.frames")
        items = [p.strip() for p in pattern.split(",")] if "," in pattern else [pattern]
        paths = []
        for item in items:
            p = item if os.path.isabs(item) else str(cfg.base / item)
            hits = sorted(glob.glob(p))
            if not hits:
                raise MissingArtifact(f"no frames match {item!r}")
            paths.extend(hits)
    else:
        paths = sorted(out.glob("crop_*.pgm")) or sorted(out.glob("frame_*.pgm"))
        if not paths:
            raise MissingArtifact(f"no frames in {out}; run 'synth' or 'crop' first or set input.frames")
    return [Path(p) for p in paths]


def _load(path: Path):
    try:
        return load_gray(path)
    except FileNotFoundError:
        raise MissingArtifact(f"{path} not found") from None
    except (ValueError, OSError) as exc:
        raise InputError(f"{path}: {exc}") from None


def _load_frames(cfg, out, minimum=1):
    paths = _frames(cfg, out)
    if len(paths) < minimum:
        raise InputError(f"need at least {minimum} frames, found {len(paths)}")
    imgs = [_load(p) for p in paths]
    shapes = {im.shape for im in imgs}
    if len(shapes) != 1:
        raise InputError(f"frame sizes differ: {sorted(shapes)}")
    return paths, imgs


def _frame_shape(cfg, out):
    paths = _frames(cfg, out)
    return _load(paths[0]).shape


def _atomic_text(path: Path, text: str):
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _fmt(x) -> str:
    x = float(x)
    return "nan" if not math.isfinite(x) else repr(x)


def _write_table(path: Path, header, rows):
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(v if isinstance(v, str) else _fmt(v) for v in r))
    _atomic_text(path, "\n".join(lines) + "\n")


def _require(path: Path) -> Path:
    if not path.is_file():
        raise MissingArtifact(f"{path} not found; run the upstream command first")
    return path


def _pitch(cfg: Config, shape) -> float:
    if cfg.has("profile.pitch"):
        return cfg.float("profile.pitch")
    return cfg.float("specimen.H") / (shape[0] - 1)


def _map_pool(threads, fn, items):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# verbs

def cmd_synth(cfg: Config, out: Path, threads: int):
    """Render a speckle frame pair and its ground-truth flow."""
    name = cfg.str("synth.preset")
    if name not in SYNTH_PRESETS:
        raise ConfigError(f"synth.preset: unknown preset {name!r}; choose from {sorted(SYNTH_PRESETS)}")
    pre = SYNTH_PRESETS[name]
    width = cfg.int("synth.width", pre["width"])
    height = cfg.int("synth.height", pre["height"])
    spec = _guard(synth.SpeckleSpec, width, height, cfg.int("synth.seed"),
                  cfg.float("synth.density"), noise_sigma=cfg.float("synth.noise"))
    geom = geometry(cfg)
    kind = pre["kind"]
    if kind == "rigid_shift":
        fs = synth.FieldSpec(u=cfg.float("synth.u", pre["u"]), v=cfg.float("synth.v", pre["v"]))
    else:
        h_ratio = cfg.float("synth.h_ratio", pre.get("h_ratio", 1.0)) if kind == "bilinear_twist" else None
        proj = cfg.str("synth.projection")
        extra = {}
        if proj == "refraction":
            extra = {"chamber": chamber(cfg), "camera": camera(cfg, spec.shape)}
        fs = _guard(synth.FieldSpec.twist_for_top_px, cfg.float("synth.top_px", pre["top_px"]), spec.shape,
                    None if h_ratio is None else h_ratio * geom.H, geom, projection=proj, **extra)
    i1, i2, truth = synth.render_pair(spec, fs)
    save_pgm(out / "frame_000.pgm", i1, bits=16)
    save_pgm(out / "frame_001.pgm", i2, bits=16)
    flowmod.write_flow_csv(out / "truth.csv", truth)
    log.info("synth %s: %dx%d frames written to %s", name, width, height, out)


def cmd_crop(cfg: Config, out: Path, threads: int):
    """Cut the region of interest out of every input frame."""
    paths, imgs = _load_frames(cfg, out)
    try:
        roi = RegionOfInterest(cfg.int("roi.center_y"), cfg.int("roi.center_z"),
                               cfg.int("roi.half_width"), cfg.int("roi.half_height"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not roi.fits(imgs[0].shape):
        raise InputError(f"region {roi} does not fit frames of shape {imgs[0].shape}")
    for k, im in enumerate(imgs):
        save_pgm(out / f"crop_{k:03d}.pgm", crop(im, roi), bits=16)
    _atomic_text(out / "roi.txt", f"y0 {roi.y0}\nz0 {roi.z0}\nwidth {roi.width}\nheight {roi.height}\n")


def _roi_origin(out: Path, cfg: Config):
    if cfg.has("roi.center_y"):
        roi = RegionOfInterest(cfg.int("roi.center_y"), cfg.int("roi.center_z"),
                               cfg.int("roi.half_width"), cfg.int("roi.half_height"))
        return roi.y0, roi.z0
    return 0, 0


def _maps(cfg: Config, out: Path, shape):
    origin = _roi_origin(out, cfg)
    full = (cfg.int("camera.image_height", shape[0]), cfg.int("camera.image_width", shape[1]))
    cam = camera(cfg, full)
    return optics.build_correction_maps(cam, chamber(cfg), shape, origin)


def cmd_maps(cfg: Config, out: Path, threads: int):
    """Refraction correction maps for the frame region."""
    shape = _frame_shape(cfg, out)
    maps = _maps(cfg, out, shape)
    zz, yy = np.mgrid[0:shape[0], 0:shape[1]]
    rows = zip(yy.ravel(), zz.ravel(), maps.dy.ravel(), maps.dz.ravel())
    lines = ["y,z,dy,dz"] + [f"{y},{z},{_fmt(a)},{_fmt(b)}" for y, z, a, b in rows]
    _atomic_text(out / "maps.csv", "\n".join(lines) + "\n")
    flowmod.write_heatmap(out / "maps_dy.pgm", maps.dy)
    flowmod.write_heatmap(out / "maps_dz.pgm", maps.dz)


def cmd_flow(cfg: Config, out: Path, threads: int):
    """Dense flow for every consecutive frame pair."""
    paths, imgs = _load_frames(cfg, out, minimum=2)
    sp = solver_params(cfg) if cfg.bool("flow.refine") else None
    mp = match_params(cfg)
    ep = energy_params(cfg)

    def run(k):
        w = flowmod.sift_flow(imgs[k], imgs[k + 1], sp, mp, ep)
        flowmod.write_flow_csv(out / f"flow_{k:03d}.csv", w)
        flowmod.write_heatmap(out / f"flow_{k:03d}_u.pgm", w.u)
        flowmod.write_heatmap(out / f"flow_{k:03d}_v.pgm", w.v)
        return w.status

    statuses = _map_pool(threads, run, list(range(len(imgs) - 1)))
    for k, st in enumerate(statuses):
        if st != "ok":
            log.warning("pair %d: refinement %s", k, st)


def cmd_piv(cfg: Config, out: Path, threads: int):
    """Multi-pass PIV for every consecutive frame pair."""
    paths, imgs = _load_frames(cfg, out, minimum=2)
    sched = schedule(cfg)
    label = preset_label(cfg)
    if min(imgs[0].shape) < sched.sizes[0]:
        raise InputError(f"frames {imgs[0].shape} smaller than the {sched.sizes[0]}px interrogation area")

    def run(k):
        res = piv.multipass(imgs[k], imgs[k + 1], sched)
        piv.write_piv_csv(out / f"piv_{label}_{k:03d}.csv", res)
        return res.nan_fraction

    for k, frac in enumerate(_map_pool(threads, run, list(range(len(imgs) - 1)))):
        log.info("piv %s pair %d: %.1f%% NaN", label, k, 100 * frac)


def _profile_sources(cfg: Config, out: Path):
    """``(label, csv path)`` of every measured field for pair 000."""
    src = cfg.str("profile.source")
    pair = cfg.int("profile.pair", 0)
    found = []
    if src in ("all", "flow"):
        p = out / f"flow_{pair:03d}.csv"
        if p.is_file() or src == "flow":
            found.append(("flow", _require(p)))
    if src in ("all", "piv") or src.startswith("piv_"):
        pattern = f"piv_*_{pair:03d}.csv" if not src.startswith("piv_") else f"{src}_{pair:03d}.csv"
        hits = sorted(out.glob(pattern))
        if not hits and src != "all":
            raise MissingArtifact(f"no {pattern} in {out}")
        found += [(p.name[:-len(f"_{pair:03d}.csv")], p) for p in hits]
    if src in ("all", "truth") and (out / "truth.csv").is_file():
        found.append(("truth", out / "truth.csv"))
    if src not in ("all", "flow", "piv", "truth") and not src.startswith("piv_"):
        raise ConfigError(f"profile.source: unknown source {src!r}")
    if not any(lbl != "truth" for lbl, _ in found):
        raise MissingArtifact(f"no measured field in {out}; run 'flow' or 'piv' first")
    return found


def _jacobian_scale(cfg, out, shape, y, z):
    """ds/dy at the given pixel coordinates (mm per px), from the correction maps."""
    maps = _maps(cfg, out, shape)
    if y is None:
        return maps.jac[..., 0, 0]
    iy = np.clip(np.rint(y).astype(int), 0, shape[1] - 1)
    iz = np.clip(np.rint(z).astype(int), 0, shape[0] - 1)
    return maps.jac[..., 0, 0][np.ix_(iz, iy)]


def cmd_profile(cfg: Config, out: Path, threads: int):
    """Band-averaged displacement profiles of the measured fields."""
    shape = _frame_shape(cfg, out)
    band = cfg.int("profile.band_width")
    n_bins = cfg.int("profile.n_bins", 0) or None
    pitch = _pitch(cfg, shape)
    correct = cfg.bool("profile.correct")
    for label, path in _profile_sources(cfg, out):
        if label.startswith("piv"):
            res = piv.read_piv_csv(path)
            u, y, z = res.u, res.grid_y, res.grid_z
        else:
            w = flowmod.read_flow_csv(path)
            if w.shape != shape:
                raise InputError(f"{path}: field {w.shape} does not match frames {shape}")
            u, y, z = w.u, None, None
        field_mm = u * _jacobian_scale(cfg, out, shape, y, z) if correct else u * pitch
        center = float(cfg.float("profile.center", (shape[1] - 1) // 2))
        try:
            prof = tsmech.extract_profile(u, band, n_bins, center=center, y=y, z=z, bottom=shape[0] - 1)
            prof_mm = tsmech.extract_profile(field_mm, band, n_bins, center=center, y=y, z=z,
                                             bottom=shape[0] - 1)
        except ValueError as exc:
            if "no finite" in str(exc):
                _write_table(out / f"profile_{label}.csv", ["height_px", "height_mm", "d_px", "d_mm"], [])
                log.warning("%s: no valid vectors in the band (100%% NaN)", label)
                continue
            raise InputError(f"{path}: {exc}") from None
        rows = zip(prof.z, prof.z * pitch, prof.d, prof_mm.d)
        _write_table(out / f"profile_{label}.csv", ["height_px", "height_mm", "d_px", "d_mm"], rows)


def _read_profile(path: Path) -> tsmech.DisplacementProfile:
    _require(path)
    data = np.genfromtxt(path, delimiter=",", names=True)
    data = np.atleast_1d(data)
    if data.size == 0 or data.dtype.names is None:
        return tsmech.DisplacementProfile(np.empty(0), np.empty(0))
    return tsmech.DisplacementProfile(data["height_mm"], data["d_px"])


def cmd_fit(cfg: Config, out: Path, threads: int):
    """Bi-linear active-height fit of every profile."""
    H = cfg.float("specimen.H")
    labels = [p.name[len("profile_"):-4] for p in sorted(out.glob("profile_*.csv"))]
    if cfg.has("fit.source"):
        labels = [cfg.str("fit.source")]
    if not labels:
        raise MissingArtifact(f"no profile_*.csv in {out}; run 'profile' first")
    for label in labels:
        prof = _read_profile(out / f"profile_{label}.csv")
        if prof.z.size < 8:
            rows = [("status", "insufficient points"), ("n_points", _fmt(prof.z.size))]
        else:
            f = tsmech.fit_active_height(prof, H)
            rows = [("method", f.method), ("status", "degenerate" if f.degenerate else "ok"),
                    ("H_mm", _fmt(H)), ("h_prime_mm", _fmt(f.h_prime)), ("ratio", _fmt(f.ratio)),
                    ("z_break_mm", _fmt(f.z_break)), ("slope_lower", _fmt(f.slope_lower)),
                    ("slope_upper", _fmt(f.slope_upper)), ("rms", _fmt(f.rms)),
                    ("rms_linear", _fmt(f.rms_linear)), ("n_points", _fmt(prof.z.size))]
        _write_table(out / f"fit_{label}.csv", ["key", "value"], rows)


def _read_fit(path: Path) -> dict:
    _require(path)
    out = {}
    for line in path.read_text().splitlines()[1:]:
        k, _, v = line.partition(",")
        out[k] = v
    return out


def cmd_hysteresis(cfg: Config, out: Path, threads: int):
    """Original and active-height stress-strain loops of a torque/twist series."""
    if not cfg.has("series.path"):
        raise MissingArtifact("series.path is not set (CSV with columns t,T,phi)")
    path = cfg.path("series.path")
    _require(path)
    try:
        series = tsmech.read_series_csv(path)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    geom = geometry(cfg)
    if cfg.has("fit.h_prime"):
        h_prime = cfg.float("fit.h_prime")
    else:
        fit = _read_fit(out / f"fit_{cfg.str('fit.source', 'flow')}.csv")
        h_prime = float(fit.get("h_prime_mm", "nan"))
    if not 0 < h_prime <= geom.H:
        raise InputError(f"active height {h_prime} outside (0, H]")
    orig = tsmech.build_hysteresis(series, geom)
    mod = tsmech.build_hysteresis(series, geom, h_prime, "modified")
    for loop in (orig, mod):
        _write_table(out / f"loop_{loop.label}.csv", ["t", "gamma", "tau_kPa"],
                     zip(series.t, loop.gamma, loop.tau))
    rows = [(loop.label, loop.H_eff, loop.modulus, loop.area, loop.closure_gap) for loop in (orig, mod)]
    _write_table(out / "hysteresis.csv", ["label", "H_eff_mm", "G_MPa", "area_kPa", "closure_gap"], rows)


def cmd_compare(cfg: Config, out: Path, threads: int):
    """Profile statistics of every method against the flow profile."""
    profiles = {p.name[len("profile_"):-4]: p for p in sorted(out.glob("profile_*.csv"))}
    if "flow" not in profiles:
        raise MissingArtifact(f"profile_flow.csv missing in {out}; run 'flow' and 'profile' first")
    ref = _read_profile(profiles["flow"])
    pair = cfg.int("profile.pair", 0)
    rows = []
    for label, path in profiles.items():
        prof = _read_profile(path)
        if label == "flow":
            w = flowmod.read_flow_csv(out / f"flow_{pair:03d}.csv")
            n, nan = w.u.size, 1.0 - w.valid.mean()
        elif label == "truth":
            w = flowmod.read_flow_csv(out / "truth.csv")
            n, nan = w.u.size, 1.0 - w.valid.mean()
        else:
            res = piv.read_piv_csv(_require(out / f"{label}_{pair:03d}.csv"))
            n, nan = res.n_points, res.nan_fraction
        ok = prof.z.size >= 2
        std = tsmech.profile_std(prof) if ok else float("nan")
        rmse = tsmech.profile_rmse(prof, ref) if ok else float("nan")
        rows.append((label, str(n), f"{100 * nan:.2f}", std, rmse))
    _write_table(out / "report.csv", ["method", "n_points", "nan_pct", "profile_std_px", "rmse_vs_flow_px"],
                 rows)
    lines = [f"{'method':<12}{'points':>10}{'NaN %':>9}{'std [px]':>12}{'RMSE vs flow':>14}"]
    for label, n, nan, std, rmse in rows:
        nan_txt = "100% NaN" if float(nan) == 100.0 else nan
        lines.append(f"{label:<12}{n:>10}{nan_txt:>9}{_fmt(round(std, 6)):>12}{_fmt(round(rmse, 6)):>14}")
    _atomic_text(out / "report.txt", "\n".join(lines) + "\n")


COMMANDS = {
    "synth": cmd_synth, "crop": cmd_crop, "maps": cmd_maps, "flow": cmd_flow, "piv": cmd_piv,
    "profile": cmd_profile, "fit": cmd_fit, "hysteresis": cmd_hysteresis, "compare": cmd_compare,
}


def _common_options(parser, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=d(None), help="plain-text 'section.key = value' file")
    parser.add_argument("--set", action="append", default=d([]), metavar="SECTION.KEY=VALUE",
                        help="override one configuration key (repeatable)")
    parser.add_argument("--out", default=d("."), help="artifact directory (default: current)")
    parser.add_argument("--threads", type=int, default=d(1),
                        help="worker threads; results do not depend on it")
    parser.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    """Common options are accepted before or after the verb."""
    parser = argparse.ArgumentParser(prog="tsflow", description=__doc__.split("\n\n")[0])
    _common_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        sp = sub.add_parser(verb, help=COMMANDS[verb].__doc__)
        _common_options(sp, suppress=True)
    return parser


def _set_threads(n: int):
    if n < 1:
        raise ConfigError("--threads must be at least 1")
    import numba

    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        _set_threads(args.threads)
        cfg = load_config(args.config, args.set)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.verb](cfg, out, args.threads)
    except CliError as exc:
        print(f"tsflow {args.verb}: {exc}", file=sys.stderr)
        return exc.code
    return 0


if __name__ == "__main__":
    sys.exit(main())
