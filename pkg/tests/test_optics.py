import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tsflow.flow import FlowField
from tsflow.optics import (CameraModel, ChamberModel, Tube, apply_correction,
                           build_correction_maps, intersect_cylinder, project_straight, refract,
                           surface_to_pixel, trace_pixel)


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _sin_between(a, b):
    return np.linalg.norm(np.cross(a, b), axis=-1)


CHAMBER = ChamberModel()
SHAPE = (61, 41)


def _camera(distance=700.0, shape=SHAPE, pitch=0.07):
    return CameraModel.from_surface_pitch(distance, pitch, 35.0,
                                          principal_point=((shape[1] - 1) / 2, (shape[0] - 1) / 2),
                                          height=70.0)


# --------------------------------------------------------------------------
# refraction

def test_refract_equal_indices_is_identity():
    i = _unit([-1.0, 0.3, 0.2])
    t, tir = refract(i, np.array([1.0, 0.0, 0.0]), 1.3, 1.3)
    np.testing.assert_array_equal(t, i)
    assert not tir


def test_refract_normal_incidence():
    n = np.array([1.0, 0.0, 0.0])
    t, _ = refract(-n, n, 1.0, 1.58)
    np.testing.assert_allclose(t, -n, atol=1e-15)


def test_refract_thirty_degrees():
    th = math.radians(30)
    i = np.array([-math.cos(th), math.sin(th), 0.0])
    t, _ = refract(i, np.array([1.0, 0.0, 0.0]), 1.0, 1.5)
    theta_t = math.degrees(math.asin(abs(t[1])))
    assert theta_t == pytest.approx(math.degrees(math.asin(0.5 / 1.5)), abs=1e-10)
    assert theta_t == pytest.approx(19.4712, abs=1e-4)


def test_total_internal_reflection_flagged():
    th = math.radians(60)
    i = np.array([-math.cos(th), math.sin(th), 0.0])
    t, tir = refract(i, np.array([1.0, 0.0, 0.0]), 1.58, 1.0)
    assert tir
    assert np.all(np.isnan(t))


def test_refract_flips_normal_to_incident_side():
    i = _unit([-1.0, 0.5, 0.0])
    a, _ = refract(i, np.array([1.0, 0.0, 0.0]), 1.0, 1.4)
    b, _ = refract(i, np.array([-1.0, 0.0, 0.0]), 1.0, 1.4)
    np.testing.assert_allclose(a, b, atol=1e-15)


def _random_interfaces(rng, n):
    normal = _unit(rng.normal(size=(n, 3)))
    i = _unit(rng.normal(size=(n, 3)))
    i = np.where((np.sum(i * normal, axis=-1) > 0)[:, None], -i, i)
    e1 = rng.uniform(1.0, 2.0, n)
    e2 = rng.uniform(1.0, 2.0, n)
    return i, normal, e1, e2


@given(st.integers(0, 2 ** 32 - 1))
def test_snell_and_unit_length(seed):
    rng = np.random.default_rng(seed)
    i, n, e1, e2 = _random_interfaces(rng, 500)
    t, tir = refract(i, n, e1, e2)
    ok = ~tir
    s_i = _sin_between(i[ok], n[ok])
    s_t = _sin_between(t[ok], n[ok])
    assert np.max(np.abs(e1[ok] * s_i - e2[ok] * s_t)) < 1e-12
    assert np.max(np.abs(np.linalg.norm(t[ok], axis=-1) - 1.0)) < 1e-12
    # forward and coplanar
    assert np.all(np.sum(t[ok] * -n[ok], axis=-1) > 0)
    trip = np.abs(np.sum(np.cross(i[ok], n[ok]) * t[ok], axis=-1))
    assert np.max(trip) < 1e-12


@given(st.integers(0, 2 ** 32 - 1))
def test_refraction_reversible(seed):
    rng = np.random.default_rng(seed)
    i, n, e1, e2 = _random_interfaces(rng, 500)
    t, tir = refract(i, n, e1, e2)
    ok = ~tir
    back, tir2 = refract(-t[ok], n[ok], e2[ok], e1[ok])
    assert not tir2.any()
    assert np.max(np.abs(-back - i[ok])) < 1e-10


# --------------------------------------------------------------------------
# cylinders

def test_intersect_on_axis():
    p, n, hit = intersect_cylinder(np.array([500.0, 0, 0]), np.array([-1.0, 0, 0]), 100.0)
    assert hit
    np.testing.assert_allclose(p, [100.0, 0, 0])
    np.testing.assert_allclose(n, [1.0, 0, 0])


def test_intersect_tangent_and_away():
    p, _, hit = intersect_cylinder(np.array([500.0, 100.0, 0]), np.array([-1.0, 0, 0]), 100.0)
    assert hit
    np.testing.assert_allclose(p, [0.0, 100.0, 0.0], atol=1e-9)
    _, _, hit = intersect_cylinder(np.array([500.0, 0, 0]), np.array([1.0, 0, 0]), 100.0)
    assert not hit


def test_chamber_radius_order_enforced():
    with pytest.raises(ValueError):
        ChamberModel(specimen_radius=60.0)
    with pytest.raises(ValueError):
        ChamberModel(inner=Tube(60.0, 55.0))


# --------------------------------------------------------------------------
# pixel tracing

def test_equal_indices_match_straight_projection():
    cam = _camera()
    flat = CHAMBER.without_refraction()
    zz, yy = np.mgrid[0:SHAPE[0], 0:SHAPE[1]].astype(float)
    s, h = trace_pixel(cam, flat, yy, zz)
    s0, h0 = project_straight(cam, CHAMBER.specimen_radius, yy, zz)
    np.testing.assert_allclose(s, s0, atol=1e-9)
    np.testing.assert_allclose(h, h0, atol=1e-9)


def test_principal_point_maps_to_zero_arc():
    cam = _camera()
    for ch in (CHAMBER, CHAMBER.without_refraction()):
        s, _ = trace_pixel(cam, ch, cam.principal_point[0], 7.0)
        assert abs(s) < 1e-12


def test_mirror_symmetry():
    cam = _camera()
    cy = cam.principal_point[0]
    zz = np.arange(0.0, 61.0, 5.0)
    for dy in (1.0, 7.5, 20.0):
        s1, h1 = trace_pixel(cam, CHAMBER, cy + dy, zz)
        s2, h2 = trace_pixel(cam, CHAMBER, cy - dy, zz)
        np.testing.assert_allclose(s1, -s2, atol=1e-9)
        np.testing.assert_allclose(h1, h2, atol=1e-9)


def test_maps_zero_for_equal_indices():
    cam = _camera()
    maps = build_correction_maps(cam, CHAMBER.without_refraction(), SHAPE)
    assert np.all(maps.dy == 0.0)
    assert np.all(maps.dz == 0.0)


def test_maps_symmetry_about_centerline():
    cam = _camera()
    maps = build_correction_maps(cam, CHAMBER, SHAPE)
    np.testing.assert_allclose(maps.dy, -maps.dy[:, ::-1], atol=1e-9)
    np.testing.assert_allclose(maps.dz, maps.dz[:, ::-1], atol=1e-9)
    assert np.abs(maps.dy).max() > 0


def test_maps_sensitivity_to_camera_distance():
    shape = (101, 801)
    base = np.nanmax(np.abs(build_correction_maps(_camera(700.0, shape), CHAMBER, shape).dy))
    for d in (670.0, 730.0):
        other = np.nanmax(np.abs(build_correction_maps(_camera(d, shape), CHAMBER, shape).dy))
        assert abs(other - base) / base < 0.05


def test_surface_to_pixel_inverts_trace():
    cam = _camera()
    py = np.array([3.0, 20.0, 33.3])
    pz = np.array([5.0, 30.0, 58.0])
    s, h = trace_pixel(cam, CHAMBER, py, pz)
    gy, gz = surface_to_pixel(cam, CHAMBER, s, h, py + 0.7, pz - 0.4)
    np.testing.assert_allclose(gy, py, atol=1e-8)
    np.testing.assert_allclose(gz, pz, atol=1e-8)


# --------------------------------------------------------------------------
# metric conversion

def test_zero_flow_zero_displacement():
    maps = build_correction_maps(_camera(), CHAMBER, SHAPE)
    ds, dh = apply_correction(FlowField.zeros(SHAPE), maps)
    assert np.all(ds == 0) and np.all(dh == 0)


def test_one_pixel_at_center_is_nominal_pitch():
    shape = (41, 801)
    maps = build_correction_maps(_camera(shape=shape), CHAMBER.without_refraction(), shape)
    ds, _ = apply_correction(FlowField.uniform(shape, 1.0, 0.0), maps)
    assert ds[20, 400] == pytest.approx(0.07, rel=1e-3)


def test_foreshortening_near_silhouette():
    shape = (41, 801)
    maps = build_correction_maps(_camera(shape=shape), CHAMBER, shape)
    ds, _ = apply_correction(FlowField.uniform(shape, 1.0, 0.0), maps)
    assert ds[20, 750] > ds[20, 400]
    assert ds[20, 50] > ds[20, 400]


def test_refraction_jacobian_at_center():
    # tubes magnify slightly: a pixel covers less than the nominal pitch
    shape = (41, 801)
    maps = build_correction_maps(_camera(shape=shape), CHAMBER, shape)
    j = maps.jac[20, 400, 0, 0]
    assert 0.05 < j < 0.07
