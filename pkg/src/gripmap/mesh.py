"""Triangle mesh container, OBJ/PLY IO, raycasting, and surface lookup.

Meshes are loaded with duplicate vertices welded (1e-7 m tolerance) and
degenerate triangles dropped. All queries (raycast, closest point) are
read-only over immutable arrays and safe to run concurrently; the BVH is
built lazily, once per mesh.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ._bvh import FlatBVH, build_bvh, closest_point_kernel, raycast_kernel

WELD_TOLERANCE = 1e-7      # m; vertices closer than this are merged
DEGENERATE_AREA = 1e-16    # m^2; triangles at or below are dropped
RAY_EPSILON = 1e-9         # m; minimum hit distance (self-intersection guard)
BBOX_INFLATION = 0.10      # fraction; locate_point domain margin


class MeshError(Exception):
    pass


class ParseError(MeshError):
    """Malformed OBJ/PLY input."""


class EmptyMesh(MeshError):
    """Too little geometry survived load-time cleanup."""


class MissingChannel(MeshError):
    """Named vertex attribute channel does not exist."""


class OutOfDomain(MeshError):
    """Query point outside the inflated mesh bounding box."""


@dataclass(frozen=True)
class RayHit:
    point: np.ndarray       # (3,) position on the surface, m
    normal: np.ndarray      # (3,) unit normal, flipped to face the ray origin
    triangle_index: int
    distance: float         # m, > RAY_EPSILON


@dataclass(frozen=True)
class BarycentricLocation:
    triangle_index: int
    weights: tuple[float, float, float]
    distance: float         # m from the query point to the surface


class TriangleMesh:
    """Indexed triangle surface with named per-vertex attribute channels.

    Channels are either scalar float arrays of shape (n_vertices,) or RGB
    uint8 arrays of shape (n_vertices, 3).
    """

    def __init__(self, vertices: np.ndarray, triangles: np.ndarray,
                 channels: dict[str, np.ndarray] | None = None):
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise ParseError("vertices must be an (n, 3) array")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise ParseError("triangles must be an (m, 3) array")
        if len(vertices) < 4 or len(triangles) < 4:
            raise EmptyMesh(
                f"mesh needs >= 4 vertices and >= 4 triangles, "
                f"got {len(vertices)} / {len(triangles)}")
        if triangles.min() < 0 or triangles.max() >= len(vertices):
            raise ParseError("triangle index out of range")
        self.vertices = vertices
        self.triangles = triangles
        self.channels: dict[str, np.ndarray] = dict(channels or {})
        self.vertices.setflags(write=False)
        self.triangles.setflags(write=False)
        self._bvh: FlatBVH | None = None
        self._vertex_normals: np.ndarray | None = None

    # ------------------------------------------------------------------
    # Derived geometry
    # ------------------------------------------------------------------
    @property
    def bvh(self) -> FlatBVH:
        if self._bvh is None:
            self._bvh = build_bvh(self.vertices, self.triangles)
            # one throwaway query so the JIT cost lands in construction
            b = self._bvh
            raycast_kernel(b.node_lo, b.node_hi, b.node_left, b.node_right,
                           b.leaf_start, b.leaf_count, b.tri_order,
                           self.vertices, self.triangles,
                           np.zeros(3), np.array([0.0, 0.0, 1.0]),
                           RAY_EPSILON, np.inf)
        return self._bvh

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def triangle_normal(self, index: int) -> np.ndarray:
        a, b, c = self.vertices[self.triangles[index]]
        n = np.cross(b - a, c - a)
        norm = np.linalg.norm(n)
        return n / norm if norm > 0 else n

    @property
    def vertex_normals(self) -> np.ndarray:
        """Area-weighted vertex normals from triangle winding."""
        if self._vertex_normals is None:
            tv = self.vertices[self.triangles]
            face_n = np.cross(tv[:, 1] - tv[:, 0], tv[:, 2] - tv[:, 0])
            acc = np.zeros_like(self.vertices)
            for k in range(3):
                np.add.at(acc, self.triangles[:, k], face_n)
            norms = np.linalg.norm(acc, axis=1, keepdims=True)
            norms[norms == 0.0] = 1.0
            self._vertex_normals = acc / norms
            self._vertex_normals.setflags(write=False)
        return self._vertex_normals

    # ------------------------------------------------------------------
    # Queries
    # ------------------------------------------------------------------
    def raycast(self, origin: np.ndarray, direction: np.ndarray,
                max_dist: float = np.inf) -> RayHit | None:
        """Nearest intersection with distance in (RAY_EPSILON, max_dist].

        The returned normal is the triangle normal flipped, if needed, to
        face the ray origin. A miss returns None.
        """
        origin = np.asarray(origin, dtype=np.float64)
        direction = np.asarray(direction, dtype=np.float64)
        norm = np.linalg.norm(direction)
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"direction must be unit length, |d| = {norm}")
        b = self.bvh
        ti, t, _, _ = raycast_kernel(
            b.node_lo, b.node_hi, b.node_left, b.node_right,
            b.leaf_start, b.leaf_count, b.tri_order,
            self.vertices, self.triangles, origin, direction,
            RAY_EPSILON, max_dist)
        if ti < 0:
            return None
        point = origin + t * direction
        normal = self.triangle_normal(int(ti))
        if np.dot(normal, direction) > 0.0:
            normal = -normal
        return RayHit(point=point, normal=normal,
                      triangle_index=int(ti), distance=float(t))

    def locate_point(self, p: np.ndarray) -> BarycentricLocation:
        """Closest surface point: containing triangle + barycentric weights.

        Raises OutOfDomain when p is beyond the bounding box inflated by
        BBOX_INFLATION per axis.
        """
        p = np.asarray(p, dtype=np.float64)
        lo, hi = self.bounds
        margin = BBOX_INFLATION * np.maximum(hi - lo, 1e-9)
        if np.any(p < lo - margin) or np.any(p > hi + margin):
            raise OutOfDomain(f"point {p.tolist()} outside inflated bounds")
        ti, d2, w1, w2, w3 = closest_point_kernel(
            self.vertices, self.triangles, p)
        return BarycentricLocation(
            triangle_index=int(ti),
            weights=(float(w1), float(w2), float(w3)),
            distance=float(np.sqrt(max(d2, 0.0))))

    def point_at(self, loc: BarycentricLocation) -> np.ndarray:
        a, b, c = self.vertices[self.triangles[loc.triangle_index]]
        w1, w2, w3 = loc.weights
        return w1 * a + w2 * b + w3 * c


# ----------------------------------------------------------------------
# Brute-force raycast (independent oracle for the BVH path)
# ----------------------------------------------------------------------
def brute_force_raycast(mesh: TriangleMesh, origin: np.ndarray,
                        direction: np.ndarray,
                        max_dist: float = np.inf) -> tuple[int, float]:
    """All-triangles Moller-Trumbore in numpy; no acceleration structure.

    Same arithmetic and tie-break (lowest triangle index on equal t) as the
    BVH kernel. Returns (triangle_index, t) with index -1 on miss.
    """
    origin = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    a = mesh.vertices[mesh.triangles[:, 0]]
    b = mesh.vertices[mesh.triangles[:, 1]]
    c = mesh.vertices[mesh.triangles[:, 2]]
    e1 = b - a
    e2 = c - a
    px = d[1] * e2[:, 2] - d[2] * e2[:, 1]
    py = d[2] * e2[:, 0] - d[0] * e2[:, 2]
    pz = d[0] * e2[:, 1] - d[1] * e2[:, 0]
    det = e1[:, 0] * px + e1[:, 1] * py + e1[:, 2] * pz
    ok = np.abs(det) >= 1e-12
    safe = np.where(ok, det, 1.0)
    inv = 1.0 / safe
    tv = origin - a
    u = (tv[:, 0] * px + tv[:, 1] * py + tv[:, 2] * pz) * inv
    qx = tv[:, 1] * e1[:, 2] - tv[:, 2] * e1[:, 1]
    qy = tv[:, 2] * e1[:, 0] - tv[:, 0] * e1[:, 2]
    qz = tv[:, 0] * e1[:, 1] - tv[:, 1] * e1[:, 0]
    v = (d[0] * qx + d[1] * qy + d[2] * qz) * inv
    t = (e2[:, 0] * qx + e2[:, 1] * qy + e2[:, 2] * qz) * inv
    eps = 1e-12
    ok &= (u >= -eps) & (u <= 1.0 + eps) & (v >= -eps) & (u + v <= 1.0 + eps)
    ok &= (t > RAY_EPSILON) & (t <= max_dist)
    if not ok.any():
        return -1, np.inf
    idx = np.flatnonzero(ok)
    ts = t[idx]
    best = idx[np.lexsort((idx, ts))[0]]
    return int(best), float(t[best])


# ----------------------------------------------------------------------
# Loading
# ----------------------------------------------------------------------
def load_mesh(path: str, scale: float | None = None) -> TriangleMesh:
    """Load an OBJ or PLY file into an indexed, welded, cleaned mesh.

    Duplicate vertices are merged (WELD_TOLERANCE), zero-area triangles are
    dropped, and vertices are multiplied by `scale` when given (rescaling
    to reference dimensions).
    """
    text_head = open(path, "rb").read(16)
    if text_head.startswith(b"ply"):
        verts, tris, channels = _read_ply(path)
    else:
        verts, tris = _read_obj(path)
        channels = {}
    if scale is not None:
        verts = verts * float(scale)
    verts, tris, remap = _weld(verts, tris)
    channels = {name: ch[remap] for name, ch in channels.items()}
    tris = _drop_degenerate(verts, tris)
    if len(verts) < 4 or len(tris) < 4:
        raise EmptyMesh(
            f"{path}: only {len(verts)} vertices / {len(tris)} triangles "
            "after cleanup")
    return TriangleMesh(verts, tris, channels)


def _weld(verts: np.ndarray, tris: np.ndarray):
    """Merge vertices within WELD_TOLERANCE via coordinate quantization."""
    keys = np.round(verts / WELD_TOLERANCE).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True,
                                  return_inverse=True)
    order = np.argsort(first)            # keep original vertex order
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    new_verts = verts[first[order]]
    new_tris = rank[inverse][tris]
    return new_verts, new_tris, first[order]


def _drop_degenerate(verts: np.ndarray, tris: np.ndarray) -> np.ndarray:
    same = (tris[:, 0] == tris[:, 1]) | (tris[:, 1] == tris[:, 2]) \
        | (tris[:, 0] == tris[:, 2])
    tv = verts[tris]
    cross = np.cross(tv[:, 1] - tv[:, 0], tv[:, 2] - tv[:, 0])
    area2 = np.linalg.norm(cross, axis=1)
    return tris[~same & (0.5 * area2 > DEGENERATE_AREA)]


def _read_obj(path: str) -> tuple[np.ndarray, np.ndarray]:
    verts: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise ParseError(f"{path}:{lineno}: bad vertex record")
                try:
                    verts.append((float(parts[1]), float(parts[2]),
                                  float(parts[3])))
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: {exc}") from exc
            elif parts[0] == "f":
                idx = []
                for token in parts[1:]:
                    ref = token.split("/")[0]
                    try:
                        i = int(ref)
                    except ValueError as exc:
                        raise ParseError(f"{path}:{lineno}: {exc}") from exc
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                if len(idx) < 3:
                    raise ParseError(f"{path}:{lineno}: face with < 3 verts")
                for k in range(1, len(idx) - 1):   # fan-triangulate
                    faces.append((idx[0], idx[k], idx[k + 1]))
    if not verts or not faces:
        raise EmptyMesh(f"{path}: no geometry found")
    return np.asarray(verts, dtype=np.float64), np.asarray(faces,
                                                           dtype=np.int64)


_PLY_TYPES = {
    "char": ("b", 1), "int8": ("b", 1),
    "uchar": ("B", 1), "uint8": ("B", 1),
    "short": ("h", 2), "int16": ("h", 2),
    "ushort": ("H", 2), "uint16": ("H", 2),
    "int": ("i", 4), "int32": ("i", 4),
    "uint": ("I", 4), "uint32": ("I", 4),
    "float": ("f", 4), "float32": ("f", 4),
    "double": ("d", 8), "float64": ("d", 8),
}


def _read_ply(path: str):
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"end_header")
    if end < 0:
        raise ParseError(f"{path}: missing end_header")
    nl = data.find(b"\n", end)
    header = data[:nl].decode("ascii", errors="replace").splitlines()
    body = data[nl + 1:]

    fmt = None
    elements: list[tuple[str, int, list]] = []
    for line in header:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise ParseError(f"{path}: property before element")
            if parts[1] == "list":
                elements[-1][2].append(("list", parts[2], parts[3], parts[4]))
            else:
                elements[-1][2].append(("scalar", parts[1], parts[2]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise ParseError(f"{path}: unsupported PLY format {fmt!r}")

    verts = tris = None
    channels: dict[str, np.ndarray] = {}
    if fmt == "ascii":
        tokens = body.split()
        pos = 0
        for name, count, props in elements:
            rows = []
            for _ in range(count):
                row = []
                for prop in props:
                    if prop[0] == "list":
                        n = int(tokens[pos]); pos += 1
                        row.append([float(tokens[pos + j]) for j in range(n)])
                        pos += n
                    else:
                        row.append(float(tokens[pos])); pos += 1
                rows.append(row)
            verts, tris, channels = _collect_ply_element(
                name, props, rows, verts, tris, channels)
    else:
        pos = 0
        for name, count, props in elements:
            rows = []
            for _ in range(count):
                row = []
                for prop in props:
                    if prop[0] == "list":
                        cfmt, csize = _PLY_TYPES[prop[1]]
                        ifmt, isize = _PLY_TYPES[prop[2]]
                        n = struct.unpack_from("<" + cfmt, body, pos)[0]
                        pos += csize
                        vals = struct.unpack_from("<" + str(n) + ifmt, body,
                                                  pos)
                        pos += isize * n
                        row.append(list(vals))
                    else:
                        sfmt, ssize = _PLY_TYPES[prop[1]]
                        row.append(struct.unpack_from("<" + sfmt, body,
                                                      pos)[0])
                        pos += ssize
                rows.append(row)
            verts, tris, channels = _collect_ply_element(
                name, props, rows, verts, tris, channels)

    if verts is None or tris is None:
        raise ParseError(f"{path}: PLY without vertex/face elements")
    if len(verts) == 0 or len(tris) == 0:
        raise EmptyMesh(f"{path}: no geometry found")
    return verts, np.asarray(tris, dtype=np.int64), channels


def _collect_ply_element(name, props, rows, verts, tris, channels):
    if name == "vertex":
        names = [p[2] for p in props if p[0] == "scalar"]
        cols = {n: i for i, n in enumerate(names)}
        if not {"x", "y", "z"} <= set(names):
            raise ParseError("PLY vertex element lacks x/y/z")
        arr = np.asarray(rows, dtype=np.float64)
        verts = arr[:, [cols["x"], cols["y"], cols["z"]]]
        if {"red", "green", "blue"} <= set(names):
            rgb = arr[:, [cols["red"], cols["green"], cols["blue"]]]
            channels = dict(channels)
            channels["color"] = rgb.astype(np.uint8)
        if "quality" in names:
            channels = dict(channels)
            channels["quality"] = arr[:, cols["quality"]].copy()
    elif name == "face":
        out = []
        for row in rows:
            idx = [int(v) for v in row[0]]
            for k in range(1, len(idx) - 1):
                out.append((idx[0], idx[k], idx[k + 1]))
        tris = out
    return verts, tris, channels


# ----------------------------------------------------------------------
# Color ramps and export
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class ColorRamp:
    """Piecewise-linear RGB ramp over [0, 1]; first stop = min, last = max."""
    stops: tuple[tuple[int, int, int], ...] = (
        (0, 0, 255), (0, 255, 255), (0, 255, 0),
        (255, 255, 0), (255, 0, 0))

    def sample(self, t: np.ndarray) -> np.ndarray:
        t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
        stops = np.asarray(self.stops, dtype=np.float64)
        pos = np.linspace(0.0, 1.0, len(stops))
        out = np.empty(t.shape + (3,), dtype=np.float64)
        for c in range(3):
            out[..., c] = np.interp(t, pos, stops[:, c])
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)

    def map_values(self, values: np.ndarray) -> np.ndarray:
        """Scalar field -> RGB; a constant field maps to the mid color."""
        values = np.asarray(values, dtype=np.float64)
        lo, hi = float(values.min()), float(values.max())
        if hi - lo <= 0.0:
            t = np.full(values.shape, 0.5)
        else:
            t = (values - lo) / (hi - lo)
        return self.sample(t)


HEAT_RAMP = ColorRamp()


def export_colored_ply(mesh: TriangleMesh, scalar_channel: str, path: str,
                       ramp: ColorRamp = HEAT_RAMP,
                       write_quality: bool = True) -> None:
    """Write binary little-endian PLY with RGB from a scalar channel.

    Minimum maps to the first ramp stop (blue), maximum to the last (red).
    The scalar itself is carried in an optional `quality` property.
    """
    if scalar_channel not in mesh.channels:
        raise MissingChannel(f"no vertex channel named {scalar_channel!r}")
    values = np.asarray(mesh.channels[scalar_channel], dtype=np.float64)
    if values.shape != (len(mesh.vertices),):
        raise MissingChannel(
            f"channel {scalar_channel!r} is not one scalar per vertex")
    rgb = ramp.map_values(values)
    write_ply(mesh, path, rgb=rgb, quality=values if write_quality else None)


def write_ply(mesh: TriangleMesh, path: str, rgb: np.ndarray | None = None,
              quality: np.ndarray | None = None) -> None:
    """Binary little-endian PLY writer (double coords, uchar RGB)."""
    n, m = len(mesh.vertices), len(mesh.triangles)
    header = ["ply", "format binary_little_endian 1.0",
              f"element vertex {n}",
              "property double x", "property double y", "property double z"]
    if rgb is not None:
        header += ["property uchar red", "property uchar green",
                   "property uchar blue"]
    if quality is not None:
        header += ["property double quality"]
    header += [f"element face {m}",
               "property list uchar int vertex_indices", "end_header"]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        for i in range(n):
            fh.write(struct.pack("<3d", *mesh.vertices[i]))
            if rgb is not None:
                fh.write(struct.pack("<3B", *rgb[i]))
            if quality is not None:
                fh.write(struct.pack("<d", quality[i]))
        tri = np.asarray(mesh.triangles, dtype=np.int32)
        for i in range(m):
            fh.write(struct.pack("<B3i", 3, *tri[i]))
