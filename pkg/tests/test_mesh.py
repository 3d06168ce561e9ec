import numpy as np
import pytest

from gripmap import fixtures
from gripmap.mesh import (BBOX_INFLATION, ColorRamp, EmptyMesh, HEAT_RAMP,
                          MissingChannel, OutOfDomain, ParseError,
                          TriangleMesh, brute_force_raycast,
                          export_colored_ply, load_mesh, write_ply)

CUBE_OBJ = """\
v -0.5 -0.5 -0.5
v 0.5 -0.5 -0.5
v 0.5 0.5 -0.5
v -0.5 0.5 -0.5
v -0.5 -0.5 0.5
v 0.5 -0.5 0.5
v 0.5 0.5 0.5
v -0.5 0.5 0.5
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
"""


@pytest.fixture
def cube_path(tmp_path):
    path = tmp_path / "cube.obj"
    path.write_text(CUBE_OBJ)
    return str(path)


def test_load_unit_cube(cube_path):
    mesh = load_mesh(cube_path)
    assert len(mesh.vertices) == 8
    assert len(mesh.triangles) == 12


def test_weld_duplicated_vertices(tmp_path):
    # same cube with every vertex written once per face corner
    mesh = load_mesh_from(tmp_path, CUBE_OBJ)
    lines = ["v {} {} {}".format(*mesh.vertices[i]) for t in mesh.triangles
             for i in t]
    faces = ["f {} {} {}".format(3 * k + 1, 3 * k + 2, 3 * k + 3)
             for k in range(len(mesh.triangles))]
    exploded = "\n".join(lines + faces)
    path = tmp_path / "exploded.obj"
    path.write_text(exploded)
    welded = load_mesh(str(path))
    assert len(welded.vertices) == 8
    assert len(welded.triangles) == 12


def load_mesh_from(tmp_path, text, name="m.obj"):
    path = tmp_path / name
    path.write_text(text)
    return load_mesh(str(path))


def test_degenerate_triangle_dropped(tmp_path):
    mesh = load_mesh_from(tmp_path, CUBE_OBJ + "f 1 1 2\n")
    assert len(mesh.triangles) == 12


def test_zero_area_triangle_dropped(tmp_path):
    # three collinear vertices appended
    extra = "v 2 0 0\nv 3 0 0\nv 4 0 0\nf 9 10 11\n"
    mesh = load_mesh_from(tmp_path, CUBE_OBJ + extra)
    assert len(mesh.triangles) == 12


def test_malformed_obj(tmp_path):
    with pytest.raises(ParseError):
        load_mesh_from(tmp_path, "v 1 2\nf 1 2 3\n")


def test_empty_mesh(tmp_path):
    with pytest.raises(EmptyMesh):
        load_mesh_from(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")


def test_scale_factor(cube_path):
    mesh = load_mesh(cube_path, scale=2.0)
    lo, hi = mesh.bounds
    assert np.allclose(lo, [-1, -1, -1])
    assert np.allclose(hi, [1, 1, 1])


# ----------------------------------------------------------------------
# Raycasting
# ----------------------------------------------------------------------
def test_raycast_cube_face(cube_path):
    mesh = load_mesh(cube_path)
    hit = mesh.raycast(np.array([0.0, 0.0, 2.0]), np.array([0.0, 0.0, -1.0]))
    assert hit is not None
    assert hit.point[2] == pytest.approx(0.5, abs=1e-12)
    assert hit.distance == pytest.approx(1.5, abs=1e-12)
    assert np.allclose(hit.normal, [0, 0, 1], atol=1e-12)
    assert abs(np.linalg.norm(hit.normal) - 1.0) < 1e-6


def test_raycast_miss(cube_path):
    mesh = load_mesh(cube_path)
    assert mesh.raycast(np.array([0.0, 0.0, 2.0]),
                        np.array([0.0, 0.0, 1.0])) is None


def test_raycast_max_dist(cube_path):
    mesh = load_mesh(cube_path)
    assert mesh.raycast(np.array([0.0, 0.0, 2.0]),
                        np.array([0.0, 0.0, -1.0]), max_dist=1.0) is None


def test_raycast_requires_unit_direction(cube_path):
    mesh = load_mesh(cube_path)
    with pytest.raises(ValueError):
        mesh.raycast(np.zeros(3), np.array([0.0, 0.0, 2.0]))


def test_raycast_annulus_radial(annulus_mesh):
    # radial inward ray must first hit the outer wall at radius ~0.040
    origin = np.array([0.09, 0.0, 0.05])
    hit = annulus_mesh.raycast(origin, np.array([-1.0, 0.0, 0.0]))
    assert hit is not None
    assert hit.distance == pytest.approx(0.09 - 0.04, abs=1e-4)


def test_normal_faces_ray_origin(annulus_mesh):
    origin = np.array([0.09, 0.0, 0.05])
    hit = annulus_mesh.raycast(origin, np.array([-1.0, 0.0, 0.0]))
    assert np.dot(hit.normal, np.array([-1.0, 0.0, 0.0])) < 0


def _random_rays(mesh, n, seed):
    rng = np.random.default_rng(seed)
    lo, hi = mesh.bounds
    span = hi - lo
    origins = rng.uniform(lo - 0.5 * span, hi + 0.5 * span, (n, 3))
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return origins, dirs


@pytest.mark.parametrize("builder", [
    fixtures.annulus,
    lambda: fixtures.cup(wall_bottom=0.002),
    lambda: fixtures.cup(wall_bottom=0.002, rim_tube_r=0.003),
    fixtures.goblet,
])
def test_bvh_matches_brute_force(builder):
    mesh = builder()
    origins, dirs = _random_rays(mesh, 1000, seed=42)
    for o, d in zip(origins, dirs):
        hit = mesh.raycast(o, d)
        bi, bt = brute_force_raycast(mesh, o, d)
        if hit is None:
            assert bi == -1
        else:
            assert hit.triangle_index == bi
            assert hit.distance == pytest.approx(bt, abs=1e-9)


# ----------------------------------------------------------------------
# locate_point
# ----------------------------------------------------------------------
def test_locate_vertex(cube_path):
    mesh = load_mesh(cube_path)
    loc = mesh.locate_point(mesh.vertices[3])
    assert 3 in mesh.triangles[loc.triangle_index]
    corner = list(mesh.triangles[loc.triangle_index]).index(3)
    assert loc.weights[corner] >= 1.0 - 1e-9
    assert loc.distance == pytest.approx(0.0, abs=1e-12)


def test_locate_every_vertex_weight(annulus_mesh):
    rng = np.random.default_rng(1)
    for vi in rng.choice(len(annulus_mesh.vertices), 50, replace=False):
        loc = annulus_mesh.locate_point(annulus_mesh.vertices[vi])
        tri = list(annulus_mesh.triangles[loc.triangle_index])
        assert vi in tri
        assert loc.weights[tri.index(vi)] >= 1.0 - 1e-9


def test_locate_centroid(cube_path):
    mesh = load_mesh(cube_path)
    centroid = mesh.vertices[mesh.triangles[0]].mean(axis=0)
    loc = mesh.locate_point(centroid)
    assert loc.triangle_index == 0
    assert np.allclose(loc.weights, [1 / 3] * 3, atol=1e-9)
    assert sum(loc.weights) == pytest.approx(1.0, abs=1e-9)


def test_locate_offset_along_normal(cube_path):
    mesh = load_mesh(cube_path)
    centroid = mesh.vertices[mesh.triangles[0]].mean(axis=0)
    loc0 = mesh.locate_point(centroid)
    normal = mesh.triangle_normal(0)
    loc1 = mesh.locate_point(centroid + 0.001 * normal)
    assert loc1.triangle_index == loc0.triangle_index
    assert loc1.distance == pytest.approx(0.001, abs=1e-9)
    assert np.allclose(loc1.weights, loc0.weights, atol=1e-9)


def test_locate_out_of_domain(cube_path):
    mesh = load_mesh(cube_path)
    inflated = 0.5 + BBOX_INFLATION + 0.01
    with pytest.raises(OutOfDomain):
        mesh.locate_point(np.array([0.0, 0.0, inflated + 0.5]))


# ----------------------------------------------------------------------
# Export
# ----------------------------------------------------------------------
def test_export_constant_channel(tmp_path, cube_path):
    mesh = load_mesh(cube_path)
    mesh.channels["field"] = np.full(len(mesh.vertices), 3.5)
    out = str(tmp_path / "c.ply")
    export_colored_ply(mesh, "field", out)
    back = load_mesh(out)
    rgb = back.channels["color"]
    assert (rgb == rgb[0]).all()
    assert (rgb[0] == HEAT_RAMP.sample(np.array(0.5))).all()


def test_export_monotone_ramp(tmp_path):
    mesh = fixtures.solid_cylinder()
    mesh.channels["height"] = mesh.vertices[:, 2].copy()
    out = str(tmp_path / "cyl.ply")
    export_colored_ply(mesh, "height", out)
    back = load_mesh(out)
    z = back.vertices[:, 2]
    rgb = back.channels["color"].astype(int)
    order = np.argsort(z)
    assert (np.diff(rgb[order, 0]) >= 0).all()   # red grows with height
    assert (np.diff(rgb[order, 2]) <= 0).all()   # blue fades with height


def test_export_round_trip_exact(tmp_path, cube_path):
    mesh = load_mesh(cube_path)
    mesh.channels["field"] = np.linspace(0.0, 1.0, len(mesh.vertices))
    out = str(tmp_path / "rt.ply")
    export_colored_ply(mesh, "field", out)
    back = load_mesh(out)
    assert len(back.vertices) == len(mesh.vertices)
    assert len(back.triangles) == len(mesh.triangles)
    assert np.array_equal(back.vertices, mesh.vertices)
    expected = HEAT_RAMP.map_values(mesh.channels["field"])
    assert np.array_equal(back.channels["color"], expected)
    assert np.array_equal(back.channels["quality"], mesh.channels["field"])


def test_export_missing_channel(tmp_path, cube_path):
    mesh = load_mesh(cube_path)
    with pytest.raises(MissingChannel):
        export_colored_ply(mesh, "nope", str(tmp_path / "x.ply"))


def test_weld_idempotent_via_reload(tmp_path, annulus_mesh):
    out = str(tmp_path / "a.ply")
    write_ply(annulus_mesh, out)
    m1 = load_mesh(out)
    out2 = str(tmp_path / "b.ply")
    write_ply(m1, out2)
    m2 = load_mesh(out2)
    assert len(m1.vertices) == len(m2.vertices)
    assert len(m1.triangles) == len(m2.triangles)


def test_ascii_ply(tmp_path):
    text = """ply
format ascii 1.0
element vertex 4
property float x
property float y
property float z
element face 4
property list uchar int vertex_indices
end_header
0 0 0
1 0 0
0 1 0
0 0 1
3 0 1 2
3 0 1 3
3 1 2 3
3 0 2 3
"""
    path = tmp_path / "tet.ply"
    path.write_text(text)
    mesh = load_mesh(str(path))
    assert len(mesh.vertices) == 4
    assert len(mesh.triangles) == 4


def test_custom_ramp_two_stops():
    ramp = ColorRamp(stops=((0, 0, 255), (255, 0, 0)))
    rgb = ramp.map_values(np.array([0.0, 0.5, 1.0]))
    assert (rgb[0] == [0, 0, 255]).all()
    assert (rgb[2] == [255, 0, 0]).all()
