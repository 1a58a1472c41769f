import numpy as np
import pytest

from polwater.geometry import (AngleMapCache, CameraIntrinsics, angle_maps, azimuth_angle,
                               azimuth_angle_map, cosine_rule_reflection_angle,
                               planar_azimuth_angle, reflection_angle, reflection_angle_map,
                               write_angle_png)
from tests.oracles import RayCastCamera


def random_cameras(rng, n):
    for _ in range(n):
        w, h = int(rng.choice([640, 1280])), int(rng.choice([360, 720]))
        f = rng.uniform(300, 1500)
        uc = (w - 1) / 2 + rng.uniform(-20, 20)
        vc = (h - 1) / 2 + rng.uniform(-20, 20)
        cam = RayCastCamera(f, uc, vc, np.radians(rng.uniform(-5, 15)),
                            np.radians(rng.uniform(-15, 15)))
        yield w, h, cam


def test_principal_row_horizon_45_degrees():
    intr = CameraIntrinsics(720.0, 640.0, 360.0)
    horizon = (0.0, 1.0, -360.0)
    assert reflection_angle(intr, horizon, 640.0, 360.0 + 720.0) == pytest.approx(np.pi / 4)


def test_one_row_below_horizon_is_grazing():
    intr = CameraIntrinsics(720.0, 640.0, 360.0)
    theta = reflection_angle(intr, (0.0, 1.0, -360.0), 640.0, 361.0)
    assert np.degrees(theta) == pytest.approx(90.0, abs=0.1)


def test_against_ray_oracle_random():
    rng = np.random.default_rng(7)
    for w, h, cam in random_cameras(rng, 300):
        u = rng.uniform(0, w - 1, 40)
        v = rng.uniform(0, h - 1, 40)
        keep = cam.hits_ground(u, v)
        intr = CameraIntrinsics(cam.f, cam.u_c, cam.v_c)
        line = cam.horizon()
        theta = reflection_angle(intr, line, u[keep], v[keep])
        psi = azimuth_angle(intr, line, u[keep], v[keep])
        assert np.all(np.abs(theta - cam.incidence_angle(u[keep], v[keep])) < 1e-6)
        assert np.all(np.abs(psi - cam.azimuth(u[keep], v[keep])) < 1e-6)


def test_maps_mask_and_ranges():
    cam = RayCastCamera(500.0, 319.5, 179.5, np.radians(4), np.radians(8))
    intr = CameraIntrinsics(cam.f, cam.u_c, cam.v_c)
    maps = angle_maps(intr, cam.horizon(), 640, 360)
    v, u = np.mgrid[0:360, 0:640]
    assert np.array_equal(maps.below_horizon, cam.hits_ground(u, v))
    t = maps.theta[maps.below_horizon]
    p = maps.psi[maps.below_horizon]
    assert np.all((t > 0) & (t <= np.pi / 2))
    assert np.all(np.abs(p) < np.pi / 2)
    assert np.isnan(maps.theta[~maps.below_horizon]).all()
    theta, mask = reflection_angle_map(intr, cam.horizon(), 640, 360)
    assert np.array_equal(mask, maps.below_horizon)
    assert np.allclose(azimuth_angle_map(intr, cam.horizon(), 640, 360)[mask], p)


@pytest.mark.parametrize("omega_deg", [-12.0, 0.0, 9.0])
def test_theta_decreases_moving_away_from_horizon(omega_deg):
    intr = CameraIntrinsics(600.0, 320.0, 180.0)
    om = np.radians(omega_deg)
    # horizon through (320, 150) with slope tan(omega)
    a, b = -np.sin(om), np.cos(om)
    line = (a, b, -(a * 320 + b * 150))
    for u0 in (50.0, 320.0, 600.0):
        v0 = 150 - a * (u0 - 320) / b
        steps = np.arange(1, 300, 3.0)
        u = u0 + steps * a
        v = v0 + steps * b
        theta = reflection_angle(intr, line, u, v)
        assert np.all(np.diff(theta) < 0)


def test_rotation_invariance():
    # rotating the image (about the principal point) together with the horizon
    intr = CameraIntrinsics(700.0, 320.0, 180.0)
    line = (0.0, 1.0, -140.0)
    rng = np.random.default_rng(1)
    u = rng.uniform(0, 640, 200)
    v = rng.uniform(200, 360, 200)
    base = reflection_angle(intr, line, u, v)
    for om in np.radians([-15.0, 7.0, 15.0]):
        c, s = np.cos(om), np.sin(om)
        ur = intr.u_c + c * (u - intr.u_c) - s * (v - intr.v_c)
        vr = intr.v_c + s * (u - intr.u_c) + c * (v - intr.v_c)
        # line normal rotates with the image
        a, b = -s * 1.0, c * 1.0
        cr = -(a * (intr.u_c + c * (0 - intr.u_c) - s * (140 - intr.v_c))
               + b * (intr.v_c + s * (0 - intr.u_c) + c * (140 - intr.v_c)))
        rotated = reflection_angle(intr, (a, b, cr), ur, vr)
        assert np.allclose(rotated, base, atol=1e-6)


def test_azimuth_zero_on_center_column_and_even():
    intr = CameraIntrinsics(720.0, 640.0, 360.0)
    line = (0.0, 1.0, -300.0)
    v = np.linspace(310, 719, 20)
    assert np.allclose(azimuth_angle(intr, line, np.full_like(v, 640.0), v), 0.0)
    du = np.linspace(1, 600, 20)
    left = azimuth_angle(intr, line, 640.0 - du, v)
    right = azimuth_angle(intr, line, 640.0 + du, v)
    assert np.allclose(left, -right) and np.all(right > 0)


def test_literal_forms_agree_when_horizon_through_center():
    rng = np.random.default_rng(2)
    for om in np.radians([-10.0, 0.0, 13.0]):
        intr = CameraIntrinsics(800.0, 640.0, 360.0)
        a, b = -np.sin(om), np.cos(om)
        line = (a, b, -(a * 640 + b * 360))
        u = rng.uniform(0, 1279, 100)
        v = rng.uniform(400, 719, 100)
        keep = a * u + b * v + line[2] > 0
        u, v = u[keep], v[keep]
        assert np.allclose(cosine_rule_reflection_angle(intr, line, u, v),
                           reflection_angle(intr, line, u, v), atol=1e-9)
        assert np.allclose(planar_azimuth_angle(intr, line, u, v),
                           azimuth_angle(intr, line, u, v), atol=1e-9)


def test_literal_cosine_rule_deviates_with_pitch():
    cam = RayCastCamera(600.0, 320.0, 180.0, np.radians(12), 0.0)
    intr = CameraIntrinsics(cam.f, cam.u_c, cam.v_c)
    u, v = np.array([20.0]), np.array([350.0])
    exact = cam.incidence_angle(u, v)
    assert abs(reflection_angle(intr, cam.horizon(), u, v) - exact)[0] < 1e-9
    assert abs(cosine_rule_reflection_angle(intr, cam.horizon(), u, v) - exact)[0] > 1e-3


def test_cache_hits_and_determinism():
    cache = AngleMapCache()
    intr = CameraIntrinsics(300.0, 160.0, 90.0)
    m1 = cache.get(intr, (0.0, 0.5, -40.0), 320, 180)
    m2 = cache.get(intr, (0.0, 0.5, -40.0001), 320, 180)
    assert m1 is m2 and cache.hits == 1
    fresh = AngleMapCache().get(intr, (0.0, 0.5, -40.0001), 320, 180)
    assert np.array_equal(fresh.theta, m1.theta, equal_nan=True)
    m3 = cache.get(intr, (0.0, 0.5, -45.0), 320, 180)
    assert m3 is not m1 and cache.misses == 2


def test_intrinsics_validation(tmp_path):
    with pytest.raises(ValueError):
        CameraIntrinsics(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        CameraIntrinsics(10.0, -5.0, 1.0).check_inside(10, 10)
    theta, _ = reflection_angle_map(CameraIntrinsics(100.0, 20.0, 10.0), (0, 1, -10), 40, 20)
    write_angle_png(theta, tmp_path / "t.png", 0, np.pi / 2)
    assert (tmp_path / "t.png").exists()
