"""Deterministic synthetic test objects: annulus, cups, goblet, primitives.

Real reconstructed meshes are not available at desk scale, so every shape
here is a parametric function of its arguments (no RNG) and doubles as a
golden fixture. Units are meters; all objects stand on z = 0 with the
opening (if any) facing +z.

Rolled-rim cups end the wall at the rim tube center height and let the
torus form the lip, so lateral rays at rim heights measure the tube chord
rather than a mixed wall/tube distance.
"""

from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh


# ----------------------------------------------------------------------
# Mesh assembly helpers
# ----------------------------------------------------------------------
class _Builder:
    def __init__(self):
        self.verts: list[tuple[float, float, float]] = []
        self.tris: list[tuple[int, int, int]] = []

    def ring(self, radius: float, z: float, segments: int) -> list[int]:
        base = len(self.verts)
        for k in range(segments):
            a = 2.0 * np.pi * k / segments
            self.verts.append((radius * np.cos(a), radius * np.sin(a), z))
        return list(range(base, base + segments))

    def point(self, x: float, y: float, z: float) -> int:
        self.verts.append((x, y, z))
        return len(self.verts) - 1

    def band(self, lower: list[int], upper: list[int], outward: bool) -> None:
        """Quad strip between two rings; `outward` picks the winding."""
        n = len(lower)
        for k in range(n):
            a, b = lower[k], lower[(k + 1) % n]
            c, d = upper[k], upper[(k + 1) % n]
            if outward:
                self.tris += [(a, b, d), (a, d, c)]
            else:
                self.tris += [(a, d, b), (a, c, d)]

    def fan(self, ring: list[int], apex: int, up: bool) -> None:
        n = len(ring)
        for k in range(n):
            a, b = ring[k], ring[(k + 1) % n]
            self.tris.append((a, b, apex) if up else (a, apex, b))

    def build(self) -> TriangleMesh:
        return TriangleMesh(np.asarray(self.verts, dtype=np.float64),
                            np.asarray(self.tris, dtype=np.int64))


def _wall(builder: _Builder, radius_fn, z_lo: float, z_hi: float,
          segments: int, levels: int, outward: bool) -> tuple[list[int], list[int]]:
    """Stacked bands from z_lo to z_hi; returns (bottom ring, top ring)."""
    zs = np.linspace(z_lo, z_hi, levels)
    rings = [builder.ring(radius_fn(z), z, segments) for z in zs]
    for lower, upper in zip(rings, rings[1:]):
        builder.band(lower, upper, outward)
    return rings[0], rings[-1]


def _torus(builder: _Builder, center_r: float, tube_r: float, z: float,
           segments: int, minor_segments: int = 16) -> None:
    base = len(builder.verts)
    for i in range(segments):
        theta = 2.0 * np.pi * i / segments
        for j in range(minor_segments):
            psi = 2.0 * np.pi * j / minor_segments
            r = center_r + tube_r * np.cos(psi)
            builder.verts.append((r * np.cos(theta), r * np.sin(theta),
                                  z + tube_r * np.sin(psi)))
    for i in range(segments):
        for j in range(minor_segments):
            a = base + i * minor_segments + j
            b = base + i * minor_segments + (j + 1) % minor_segments
            c = base + ((i + 1) % segments) * minor_segments + j
            d = base + ((i + 1) % segments) * minor_segments \
                + (j + 1) % minor_segments
            builder.tris += [(a, c, b), (b, c, d)]


# ----------------------------------------------------------------------
# Objects
# ----------------------------------------------------------------------
def annulus(outer_r: float = 0.040, inner_r: float = 0.038,
            height: float = 0.100, segments: int = 80,
            levels: int = 16) -> TriangleMesh:
    """Open tube of constant wall thickness with flat ring end caps."""
    b = _Builder()
    ob, ot = _wall(b, lambda z: outer_r, 0.0, height, segments, levels, True)
    ib, it = _wall(b, lambda z: inner_r, 0.0, height, segments, levels, False)
    b.band(ib, ob, outward=False)   # bottom ring cap, faces -z
    b.band(it, ot, outward=True)    # top ring cap, faces +z
    return b.build()


def cup(outer_r: float = 0.035, height: float = 0.100,
        wall_bottom: float = 0.002, wall_top: float | None = None,
        base_thickness: float = 0.003, rim_tube_r: float | None = None,
        segments: int = 64, levels: int = 24) -> TriangleMesh:
    """Cup standing on z = 0, opening up.

    `wall_top` enables a linear wall taper along the height; `rim_tube_r`
    adds a rolled-rim torus whose tube center sits at height - rim_tube_r,
    with the cylindrical wall ending there.
    """
    if wall_top is None:
        wall_top = wall_bottom

    def wall_at(z: float) -> float:
        return wall_bottom + (wall_top - wall_bottom) * z / height

    wall_top_z = height if rim_tube_r is None else height - rim_tube_r
    b = _Builder()
    ob, ot = _wall(b, lambda z: outer_r, 0.0, wall_top_z, segments, levels,
                   True)
    ib, it = _wall(b, lambda z: outer_r - wall_at(z), base_thickness,
                   wall_top_z, segments, levels, False)
    apex_lo = b.point(0.0, 0.0, 0.0)
    b.fan(ob, apex_lo, up=False)                  # outer bottom, faces -z
    apex_hi = b.point(0.0, 0.0, base_thickness)
    b.fan(ib, apex_hi, up=True)                   # cavity floor, faces +z
    if rim_tube_r is None:
        b.band(it, ot, outward=True)              # flat rim ring
    else:
        _torus(b, outer_r - wall_at(wall_top_z) / 2.0, rim_tube_r,
               wall_top_z, segments)
    return b.build()


def goblet(bowl_outer_r: float = 0.035, bowl_wall: float = 0.0015,
           bowl_height: float = 0.060, stem_r: float = 0.006,
           stem_height: float = 0.055, base_r: float = 0.028,
           base_height: float = 0.008, floor_thickness: float = 0.004,
           segments: int = 64, levels: int = 12) -> TriangleMesh:
    """Goblet: solid foot disk, solid stem, thin-walled bowl on top."""
    b = _Builder()
    # foot
    fb, ft = _wall(b, lambda z: base_r, 0.0, base_height, segments, 3, True)
    apex = b.point(0.0, 0.0, 0.0)
    b.fan(fb, apex, up=False)
    apex = b.point(0.0, 0.0, base_height)
    b.fan(ft, apex, up=True)
    # stem (solid cylinder; lateral rays measure its full chord)
    z0, z1 = base_height, base_height + stem_height
    sb, st = _wall(b, lambda z: stem_r, z0, z1, segments, levels, True)
    apex = b.point(0.0, 0.0, z0)
    b.fan(sb, apex, up=False)
    apex = b.point(0.0, 0.0, z1)
    b.fan(st, apex, up=True)
    # bowl
    z2 = z1 + bowl_height
    ob, ot = _wall(b, lambda z: bowl_outer_r, z1, z2, segments, levels, True)
    ib, it = _wall(b, lambda z: bowl_outer_r - bowl_wall,
                   z1 + floor_thickness, z2, segments, levels, False)
    apex = b.point(0.0, 0.0, z1)
    b.fan(ob, apex, up=False)                     # bowl underside
    apex = b.point(0.0, 0.0, z1 + floor_thickness)
    b.fan(ib, apex, up=True)                      # bowl floor
    b.band(it, ot, outward=True)                  # rim ring
    return b.build()


def solid_cylinder(radius: float = 0.020, height: float = 0.080,
                   segments: int = 64, levels: int = 10) -> TriangleMesh:
    b = _Builder()
    rb, rt = _wall(b, lambda z: radius, 0.0, height, segments, levels, True)
    apex = b.point(0.0, 0.0, 0.0)
    b.fan(rb, apex, up=False)
    apex = b.point(0.0, 0.0, height)
    b.fan(rt, apex, up=True)
    return b.build()


def box(sx: float = 0.10, sy: float = 0.06, sz: float = 0.03) -> TriangleMesh:
    hx, hy, hz = sx / 2, sy / 2, sz / 2
    v = np.array([[sgnx * hx, sgny * hy, sgnz * hz]
                  for sgnx in (-1, 1) for sgny in (-1, 1) for sgnz in (-1, 1)])
    f = np.array([
        [0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5],
        [0, 4, 5], [0, 5, 1], [2, 3, 7], [2, 7, 6],
        [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3]])
    return TriangleMesh(v, f)


def icosphere(radius: float = 0.030, subdivisions: int = 3) -> TriangleMesh:
    """Near-uniform sphere triangulation (subdivided icosahedron)."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]], dtype=np.float64)
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [tuple(v / np.linalg.norm(v)) for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = (np.asarray(verts[i]) + np.asarray(verts[j])) / 2.0
                m = m / np.linalg.norm(m)
                verts.append(tuple(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, bidx, c in faces:
            ab = midpoint(a, bidx)
            bc = midpoint(bidx, c)
            ca = midpoint(c, a)
            new_faces += [(a, ab, ca), (bidx, bc, ab), (c, ca, bc),
                          (ab, bc, ca)]
        faces = new_faces
    return TriangleMesh(np.asarray(verts) * radius,
                        np.asarray(faces, dtype=np.int64))


# ----------------------------------------------------------------------
# Transforms
# ----------------------------------------------------------------------
def rotation_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    C = 1.0 - c
    return np.array([
        [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
        [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
        [z * x * C - y * s, z * y * C + x * s, c + z * z * C]])


def transformed(mesh: TriangleMesh, rotation: np.ndarray | None = None,
                translation: np.ndarray | None = None) -> TriangleMesh:
    v = mesh.vertices
    if rotation is not None:
        v = v @ np.asarray(rotation, dtype=np.float64).T
    if translation is not None:
        v = v + np.asarray(translation, dtype=np.float64)
    return TriangleMesh(v, mesh.triangles.copy(),
                        {k: c.copy() for k, c in mesh.channels.items()})


# ----------------------------------------------------------------------
# Grasp authoring on fixture surfaces
# ----------------------------------------------------------------------
def surface_point(mesh: TriangleMesh, frame, h: float,
                  phi: float) -> np.ndarray:
    """Point on the lateral surface at cylindrical (h, phi): cast inward."""
    from .frame import from_cylindrical

    d = mesh.vertices - frame.center
    in_plane = d - np.outer(d @ frame.e_h, frame.e_h)
    r_start = 1.5 * float(np.linalg.norm(in_plane, axis=1).max())
    origin = from_cylindrical(frame, h, phi, r_start)
    inward = -(np.cos(phi) * frame.e_u + np.sin(phi) * frame.e_v)
    hit = mesh.raycast(origin, inward)
    if hit is None:
        raise ValueError(f"no surface at h={h}, phi={phi}")
    return hit.point


def contact_ring(mesh: TriangleMesh, frame, heights,
                 phi_offset: float = 0.0) -> np.ndarray:
    """Five contacts spaced 72 degrees apart at the given heights.

    `heights` is broadcast to five values, so mixed-zone grasps can put
    some fingers higher than others.
    """
    heights = np.broadcast_to(np.asarray(heights, dtype=np.float64), (5,))
    phis = phi_offset + 2.0 * np.pi * np.arange(5) / 5.0
    return np.array([surface_point(mesh, frame, h, p)
                     for h, p in zip(heights, phis)])


def make_candidate(cid: str, contacts: np.ndarray, utility: float,
                   functional_score: float = 0.9) -> dict:
    """Candidate record with placeholder hand pose and joint payload."""
    center = contacts.mean(axis=0)
    return {
        "id": cid,
        "t": (center + np.array([0.0, 0.0, 0.15])).tolist(),
        "r6d": [1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        "theta": [0.0] * 24,
        "contacts": contacts.tolist(),
        "utility": float(utility),
        "functional_score": float(functional_score),
    }


def selection_candidates(mesh: TriangleMesh, frame, weak_h: float,
                         strong_h: float, mid_h: float) -> list[dict]:
    """Five-candidate set for selection experiments.

    One weak-zone grasp carries the highest classical utility, one
    strong-zone grasp trails it by under 3%, and three mid grasps fill the
    field (one of them below the usual functional threshold).
    """
    return [
        make_candidate("g_weak", contact_ring(mesh, frame, weak_h),
                       utility=0.95, functional_score=0.9),
        make_candidate("g_strong", contact_ring(mesh, frame, strong_h,
                                                phi_offset=0.2),
                       utility=0.93, functional_score=0.9),
        make_candidate("g_mid_a", contact_ring(mesh, frame, mid_h,
                                               phi_offset=0.4),
                       utility=0.90, functional_score=0.8),
        make_candidate("g_mid_b", contact_ring(mesh, frame, mid_h,
                                               phi_offset=0.6),
                       utility=0.88, functional_score=0.7),
        make_candidate("g_reject", contact_ring(mesh, frame, mid_h,
                                                phi_offset=0.8),
                       utility=0.85, functional_score=0.2),
    ]


# Frozen object catalog: fixture geometry plus material/scenario constants
# used by the bundled experiments. c_base calibration targets are the
# admissible zone loads the shipped models were tuned against; masses,
# friction, and contact heights were chosen so the three controller
# conditions separate cleanly at desk scale. `zones` are grid-layer bands
# at the default 32-layer resolution; heights are along the object axis
# about the frame center.
OBJECT_CATALOG = {
    "paper_cup": {
        "material": "paper",
        "mass": 0.008,
        "mu": 0.4,
        "calibrated_c_base": 2474.62,
        "zone_targets": [("wall", 8, 22, 4.8), ("rim", 30, 31, 41.2)],
        "cup": {"outer_r": 0.035, "height": 0.100, "wall_bottom": 0.002,
                "base_thickness": 0.003, "rim_tube_r": 0.008},
        "selection_heights": {"weak_h": -0.015, "strong_h": 0.040,
                              "mid_h": 0.0},
        "grip_heights": [0.040] * 5,
        "grip_params": {"k_wall": 5.0e4},
    },
    "plastic_cup": {
        "material": "plastic",
        "mass": 0.0191,
        "mu": 0.25,
        "calibrated_c_base": 236.52,
        "zone_targets": [("wall", 8, 22, 0.3), ("rim", 30, 31, 3.7)],
        "cup": {"outer_r": 0.033, "height": 0.095, "wall_bottom": 0.0012,
                "base_thickness": 0.002, "rim_tube_r": 0.0075},
        "selection_heights": {"weak_h": -0.010, "strong_h": 0.036,
                              "mid_h": 0.0},
        # upper-wall band where the rim bonus tapers off: moderate-force
        # contacts with a mild spread across fingers
        "grip_heights": [0.024, 0.024, 0.024, 0.026, 0.026],
        "grip_params": {},
    },
    "glass_goblet": {
        "material": "glass",
        "mass": 0.155,
        "mu": 0.4,
        "calibrated_c_base": 46384.0,
        "zone_targets": [("bowl", 20, 30, 69.0), ("stem", 4, 13, 565.0)],
        "goblet": {},
        "selection_heights": {"weak_h": 0.030, "strong_h": -0.030,
                              "mid_h": 0.040},
        "grip_heights": [-0.030] * 5,
        "grip_params": {"k_wall": 2.0e5, "substeps": 16},
    },
}


def object_mesh(object_id: str) -> TriangleMesh:
    entry = OBJECT_CATALOG[object_id]
    if "cup" in entry:
        return cup(**entry["cup"])
    return goblet(**entry["goblet"])
