import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gripmap import fixtures
from gripmap.frame import (DegenerateGeometry, PrincipalFrame, compute_frame,
                           cylindrical_batch, from_cylindrical,
                           to_cylindrical)
from gripmap.mesh import TriangleMesh


def test_cylinder_axis_is_z(annulus_frame):
    assert abs(abs(annulus_frame.e_h[2]) - 1.0) < 1e-6
    assert np.allclose(annulus_frame.center[:2], 0.0, atol=1e-9)


def test_orthonormal_right_handed(annulus_frame):
    f = annulus_frame
    for a, b in ((f.e_u, f.e_v), (f.e_u, f.e_h), (f.e_v, f.e_h)):
        assert abs(a @ b) <= 1e-9
    assert np.allclose(np.cross(f.e_u, f.e_v), f.e_h, atol=1e-9)


def test_height_range(annulus_frame):
    h_min, h_max = annulus_frame.height_range
    assert h_max - h_min == pytest.approx(0.100, abs=1e-9)


def test_rotated_cylinder_axis():
    mesh = fixtures.annulus()
    R = fixtures.rotation_matrix([1.0, 1.0, 0.0], 0.9)
    rotated = fixtures.transformed(mesh, rotation=R)
    f0 = compute_frame(mesh)
    f1 = compute_frame(rotated)
    assert abs(abs(f1.e_h @ (R @ f0.e_h)) - 1.0) < 1e-6


def test_rigid_transform_equivariance_distinct_eigenvalues():
    mesh = fixtures.box(0.10, 0.06, 0.03)
    R = fixtures.rotation_matrix([0.2, 0.5, 1.0], 1.1)
    t = np.array([0.3, -0.2, 0.05])
    f0 = compute_frame(mesh)
    f1 = compute_frame(fixtures.transformed(mesh, rotation=R, translation=t))
    assert np.allclose(f1.center, R @ f0.center + t, atol=1e-9)
    for a0, a1 in ((f0.e_u, f1.e_u), (f0.e_v, f1.e_v), (f0.e_h, f1.e_h)):
        assert abs(abs(a1 @ (R @ a0)) - 1.0) < 1e-6


def test_cup_opens_upward():
    f = compute_frame(fixtures.cup())
    assert f.e_h[2] > 0.999


def test_goblet_opens_upward():
    f = compute_frame(fixtures.goblet())
    assert f.e_h[2] > 0.999


def test_sphere_low_confidence_not_degenerate():
    f = compute_frame(fixtures.icosphere())
    assert f.low_confidence
    l0, l1, l2 = f.eigenvalues
    assert l0 / l2 == pytest.approx(1.0, rel=0.02)


def test_elongated_objects_are_confident(annulus_frame):
    assert not annulus_frame.low_confidence


def test_coplanar_vertices_degenerate():
    xs, ys = np.meshgrid(np.linspace(0, 1, 4), np.linspace(0, 1, 4))
    verts = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(16)])
    tris = []
    for i in range(3):
        for j in range(3):
            a = 4 * i + j
            tris += [(a, a + 1, a + 5), (a, a + 5, a + 4)]
    mesh = TriangleMesh(verts, np.asarray(tris))
    with pytest.raises(DegenerateGeometry):
        compute_frame(mesh)


def test_area_weighted_option(annulus_mesh):
    f0 = compute_frame(annulus_mesh)
    f1 = compute_frame(annulus_mesh, area_weighted=True)
    assert abs(abs(f0.e_h @ f1.e_h) - 1.0) < 1e-6


# ----------------------------------------------------------------------
# Cylindrical coordinates
# ----------------------------------------------------------------------
def test_center_maps_to_origin(annulus_frame):
    h, phi, r = to_cylindrical(annulus_frame, annulus_frame.center)
    assert (h, phi, r) == (0.0, 0.0, 0.0)


def test_point_on_u_axis(annulus_frame):
    p = annulus_frame.center + 0.05 * annulus_frame.e_u
    h, phi, r = to_cylindrical(annulus_frame, p)
    assert h == pytest.approx(0.0, abs=1e-12)
    assert phi == pytest.approx(0.0, abs=1e-12)
    assert r == pytest.approx(0.05, abs=1e-12)


def test_point_on_v_axis(annulus_frame):
    p = annulus_frame.center + 0.03 * annulus_frame.e_v
    h, phi, r = to_cylindrical(annulus_frame, p)
    assert phi == pytest.approx(np.pi / 2, abs=1e-12)
    assert r == pytest.approx(0.03, abs=1e-12)


_SMALL_FRAME = compute_frame(fixtures.annulus(segments=24, levels=6))


@settings(max_examples=100, deadline=None)
@given(st.floats(-0.2, 0.2), st.floats(0.0, 2 * np.pi - 1e-9),
       st.floats(1e-6, 0.3))
def test_cylindrical_round_trip(h, phi, r):
    frame = _SMALL_FRAME
    p = from_cylindrical(frame, h, phi, r)
    h2, phi2, r2 = to_cylindrical(frame, p)
    assert h2 == pytest.approx(h, abs=1e-9)
    assert r2 == pytest.approx(r, abs=1e-9)
    dphi = (phi2 - phi) % (2 * np.pi)
    assert min(dphi, 2 * np.pi - dphi) < 1e-7


def test_phi_range(annulus_frame):
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(200, 3)) * 0.1
    cyl = cylindrical_batch(annulus_frame, pts)
    assert ((cyl[:, 1] >= 0.0) & (cyl[:, 1] < 2 * np.pi)).all()


def test_batch_matches_scalar(annulus_frame):
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(20, 3)) * 0.05
    batch = cylindrical_batch(annulus_frame, pts)
    for p, row in zip(pts, batch):
        assert np.allclose(to_cylindrical(annulus_frame, p), row, atol=1e-12)


def test_frame_serialization_round_trip(annulus_frame):
    d = annulus_frame.to_dict()
    back = PrincipalFrame.from_dict(d)
    assert np.array_equal(back.center, annulus_frame.center)
    assert np.array_equal(back.e_h, annulus_frame.e_h)
    assert back.height_range == annulus_frame.height_range
