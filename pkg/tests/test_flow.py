import numpy as np
import pytest
from hypothesis import given, strategies as st

from tsflow import flow
from tsflow.flow import (EnergyParams, FlowField, SolverParams, data_residual, discrete_match,
                         feature_pyramid, read_flow_csv, refine_subpixel, sift_flow_energy,
                         variational_objective, warp, write_flow_csv, write_heatmap)
from tsflow.imgio import load_gray
from tsflow.synth import FieldSpec, SpeckleSpec, render_pair

from oracles import exhaustive_minimum, random_energy_params

P = EnergyParams(d1=2.0, d2=3.0, eta=0.01, alpha=1.0)
INTERIOR = (slice(16, -16), slice(16, -16))


def _features(rng, h, w, dim=8):
    return rng.random((h, w, dim)).astype(np.float32)


# --------------------------------------------------------------------------
# parameters and containers

def test_solver_presets():
    d, o = SolverParams.default(), SolverParams.optimal()
    assert (d.reg_weight, d.ratio, d.coarsest_width, d.n_outer, d.n_inner, d.n_sor) == (1, 0.5, 40, 3, 1, 20)
    assert (o.reg_weight, o.ratio, o.coarsest_width, o.n_outer, o.n_inner, o.n_sor) == (0.02, 0.75, 20, 10, 3, 40)


def test_energy_params_validation_and_scaling(rng):
    with pytest.raises(ValueError):
        EnergyParams(d1=0.0)
    s = _features(rng, 4, 5)
    p = EnergyParams.for_features(s)
    assert p.d1 == pytest.approx(40 * np.abs(s.astype(float)).sum(-1).mean())
    assert (p.d2, p.eta, p.alpha) == (40.0, 0.01, 2.0)


def test_flowfield_invalid_entries_are_nan():
    f = FlowField(np.ones((2, 2)), np.ones((2, 2)), np.array([[True, False], [True, True]]))
    assert np.isnan(f.u[0, 1]) and np.isnan(f.v[0, 1])
    u, v = f.filled(0.0)
    assert u[0, 1] == 0.0


# --------------------------------------------------------------------------
# energy

def test_energy_zero_for_identical_features(rng):
    s = _features(rng, 5, 6)
    assert sift_flow_energy(s, s, FlowField.zeros((5, 6)), P) == 0.0


def test_energy_of_matching_shift(rng):
    h, w = 4, 6
    s1 = _features(rng, h, w)
    s2 = np.zeros_like(s1)
    s2[:, 1:] = s1[:, :-1]
    e = sift_flow_energy(s1, s2, FlowField.uniform((h, w), 1, 0), P)
    # only the last column leaves the frame and pays d1
    assert e == pytest.approx(h * P.d1 + P.eta * h * w, abs=1e-9)


def test_energy_single_pixel(rng):
    s1, s2 = _features(rng, 1, 1), _features(rng, 1, 1)
    dist = float(np.abs(s1.astype(float) - s2.astype(float)).sum())
    p = EnergyParams(d1=100.0, eta=0.5)
    assert sift_flow_energy(s1, s2, (np.zeros((1, 1)), np.zeros((1, 1))), p) == pytest.approx(dist)
    assert sift_flow_energy(s1, s2, (np.ones((1, 1)), -np.ones((1, 1))), p) == pytest.approx(100.0 + 1.0)


def test_energy_smoothness_term():
    s = np.zeros((1, 2, 1), dtype=np.float32)
    p = EnergyParams(d1=1.0, d2=5.0, eta=1e-9, alpha=2.0)
    e = sift_flow_energy(s, s, (np.array([[0.0, 0.0]]), np.array([[0.0, 1.0]])), p)
    # one vertical offset of 1 that keeps its target inside, one edge of |dv| = 1
    assert e == pytest.approx(p.d1 + 2.0 + p.eta, abs=1e-9)


def test_energy_errors(rng):
    s = _features(rng, 3, 3)
    with pytest.raises(ValueError):
        sift_flow_energy(s, s, FlowField.uniform((3, 3), 0.5, 0), P)
    with pytest.raises(ValueError):
        sift_flow_energy(s, _features(rng, 3, 4), FlowField.zeros((3, 3)), P)


def test_compiled_energy_matches_reference(rng):
    from tsflow import _kernels
    s1, s2 = _features(rng, 7, 9), _features(rng, 7, 9)
    u = rng.integers(-2, 3, (7, 9))
    v = rng.integers(-2, 3, (7, 9))
    ref = sift_flow_energy(s1, s2, (u.astype(float), v.astype(float)), P)
    fast = _kernels.flow_energy(s1, s2, u, v, P.d1, P.d2, P.eta, P.alpha)
    assert fast == pytest.approx(ref, rel=1e-12)


# --------------------------------------------------------------------------
# discrete matching

def test_identical_frames_give_zero_flow(rng):
    s = _features(rng, 12, 14)
    f = discrete_match([s], [s], P, window=2)
    assert np.all(f.u == 0) and np.all(f.v == 0)


def test_argument_checks(rng):
    s = _features(rng, 4, 4)
    with pytest.raises(ValueError):
        discrete_match([], [], P)
    with pytest.raises(ValueError):
        discrete_match([s], [s], P, window=0)


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 6), st.integers(1, 9))
def test_never_worse_than_zero_flow(seed, h, w):
    rng = np.random.default_rng(seed)
    s1, s2 = _features(rng, h, w), _features(rng, h, w)
    p = random_energy_params(rng)
    f = discrete_match([s1], [s2], p, window=1)
    zero = np.zeros((h, w))
    assert sift_flow_energy(s1, s2, f, p) <= sift_flow_energy(s1, s2, (zero, zero), p) + 1e-9


def test_exhaustive_bound_small_sample():
    rng = np.random.default_rng(2024)
    for k in range(20):
        h, w = [(2, 3), (3, 2), (2, 2), (1, 3)][k % 4]
        s1, s2 = _features(rng, h, w), _features(rng, h, w)
        p = random_energy_params(rng)
        e = sift_flow_energy(s1, s2, discrete_match([s1], [s2], p, window=1), p)
        assert e <= 1.05 * exhaustive_minimum(s1, s2, p) + 1e-9


def test_relaxation_is_monotone_on_wide_grids():
    rng = np.random.default_rng(7)
    s1, s2 = _features(rng, 12, 15), _features(rng, 12, 15)
    trace = []
    discrete_match([s1], [s2], P, window=2, trace=trace)
    (t,) = trace
    assert t["energy_end"] <= t["energy_start"] + 1e-9
    assert t["energy_end"] <= t["energy_zero"] + 1e-9
    assert t["iterations"] >= 1


@pytest.fixture(scope="module")
def rigid_256():
    i1, i2, truth = render_pair(SpeckleSpec(256, 256, seed=21), FieldSpec(u=3, v=2))
    f1 = feature_pyramid(i1, 0.5, 64)
    f2 = feature_pyramid(i2, 0.5, 64)
    return i1, i2, f1, f2


def test_rigid_shift_recovered_exactly(rigid_256):
    _, _, f1, f2 = rigid_256
    trace = []
    w = discrete_match(f1, f2, trace=trace)
    assert np.all(w.u[INTERIOR] == 3) and np.all(w.v[INTERIOR] == 2)
    assert len(trace) == len(f1)
    for t in trace:
        assert t["energy_end"] <= t["energy_start"] + 1e-9


def test_discrete_match_is_deterministic(rigid_256):
    _, _, f1, f2 = rigid_256
    a = discrete_match(f1, f2)
    b = discrete_match(f1, f2)
    assert a.u.tobytes() == b.u.tobytes() and a.v.tobytes() == b.v.tobytes()


def test_refinement_keeps_exact_integer_shift(rigid_256):
    i1, i2, f1, f2 = rigid_256
    w = refine_subpixel(i1, i2, discrete_match(f1, f2))
    assert np.mean(np.abs(w.u[INTERIOR] - 3)) <= 0.05
    assert np.mean(np.abs(w.v[INTERIOR] - 2)) <= 0.05


# --------------------------------------------------------------------------
# warping

def test_warp_identity_and_integer_shift(rng):
    img = rng.random((10, 12))
    out, valid = warp(img, FlowField.zeros(img.shape))
    np.testing.assert_array_equal(out, img)
    assert valid.all()
    out, valid = warp(img, FlowField.uniform(img.shape, 1, 0))
    np.testing.assert_array_equal(out[:, :-1], img[:, 1:])
    assert not valid[:, -1].any()


def test_warp_round_trip():
    from scipy import ndimage
    img = ndimage.gaussian_filter(np.random.default_rng(3).random((80, 80)), 2.0)
    zz, yy = np.mgrid[0:80, 0:80].astype(float)
    w = FlowField(0.6 * np.sin(yy / 15), 0.4 * np.cos(zz / 20))
    once, _ = warp(img, w)
    back, valid = warp(once, FlowField(-w.u, -w.v))
    m = (slice(4, -4), slice(4, -4))
    assert np.mean(np.abs(back - img)[m]) < 0.01


def test_warp_shape_mismatch():
    with pytest.raises(ValueError):
        warp(np.zeros((4, 4)), FlowField.zeros((4, 5)))


# --------------------------------------------------------------------------
# refinement

def test_refinement_of_identical_frames_stays_zero():
    img = render_pair(SpeckleSpec(64, 64, seed=1), FieldSpec())[0]
    w = refine_subpixel(img, img, FlowField.zeros(img.shape))
    assert np.all(w.u == 0) and np.all(w.v == 0)


@pytest.fixture(scope="module")
def subpixel_pair():
    return render_pair(SpeckleSpec(192, 192, seed=5), FieldSpec(u=0.3, v=-0.7))


def test_subpixel_shift_recovered(subpixel_pair):
    i1, i2, _ = subpixel_pair
    w = refine_subpixel(i1, i2)
    assert abs(np.mean(w.u[INTERIOR]) - 0.3) <= 0.1
    assert np.mean(np.abs(w.u[INTERIOR] - 0.3)) <= 0.1
    assert np.mean(np.abs(w.v[INTERIOR] + 0.7)) <= 0.1


def test_objective_never_increases(subpixel_pair):
    i1, i2, _ = subpixel_pair
    hist = []
    refine_subpixel(i1, i2, sp=SolverParams.default(), history=hist)
    assert len(hist) == len(flow.build_pyramid(i1, 0.5, 40))
    for level in hist:
        assert all(b <= a + 1e-9 for a, b in zip(level, level[1:]))


def test_variational_objective_minimal_at_truth(subpixel_pair):
    i1, i2, _ = subpixel_pair
    u = np.full(i1.shape, 0.3)
    v = np.full(i1.shape, -0.7)
    at_truth = variational_objective(i1, i2, u, v, 0.02)
    assert at_truth < variational_objective(i1, i2, u + 0.2, v, 0.02)
    assert at_truth < variational_objective(i1, i2, u, v - 0.2, 0.02)


def test_optimal_parameters_fit_twist_better():
    shape = (256, 128)
    fs = FieldSpec.twist_for_top_px(3.0, shape, h_prime=84.0)
    i1, i2, _ = render_pair(SpeckleSpec(128, 256, seed=8), fs)
    res = {}
    for name in ("default", "optimal"):
        w = refine_subpixel(i1, i2, sp=getattr(SolverParams, name)())
        res[name] = data_residual(i1, i2, w)
    assert res["optimal"] <= res["default"]


def test_divergence_returns_last_finite_iterate(monkeypatch, subpixel_pair):
    i1, i2, _ = subpixel_pair

    def boom(du, dv, *args):
        du[0, 0] = np.nan

    monkeypatch.setattr(flow._kernels, "sor_solve", boom)
    w = refine_subpixel(i1, i2)
    assert w.status == "diverged"
    assert np.all(np.isfinite(w.u)) and np.all(np.isfinite(w.v))
    assert w.shape == i1.shape


# --------------------------------------------------------------------------
# export

def test_flow_csv_round_trip(tmp_path):
    u = np.array([[0.5, -1.25], [2.0, np.nan]])
    f = FlowField(u, -u)
    write_flow_csv(tmp_path / "f.csv", f)
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "y,z,u,v,valid"
    assert lines[1] == "0,0,0.5,-0.5,1"
    assert lines[-1] == "1,1,nan,nan,0"
    back = read_flow_csv(tmp_path / "f.csv")
    np.testing.assert_array_equal(back.u, f.u)
    np.testing.assert_array_equal(back.valid, f.valid)


def test_heatmap_mapping(tmp_path):
    lo, hi = write_heatmap(tmp_path / "h.pgm", np.array([[1.0, 2.0], [3.0, np.nan]]))
    assert (lo, hi) == (1.0, 3.0)
    img = load_gray(tmp_path / "h.pgm")
    np.testing.assert_allclose(img[0], [0.0, 128 / 255])
    assert img[1, 0] == 1.0
    assert (tmp_path / "h.pgm.txt").read_text().split() == ["min", "1.0", "max", "3.0"]
