"""Principal coordinate frame of an object from vertex PCA.

The frame (c, e_u, e_v, e_h) puts e_h along the dominant elongation axis
(largest covariance eigenvalue), with e_u/e_v spanning the cross-section.
Sign and in-plane conventions are deliberate tie-breaks so that repeated
runs and golden tests are deterministic:

* e_h points toward the larger opening (mean cross-section radius in the
  top 10% of height vs the bottom 10%), so cups come out opening-up.
* e_u is the in-plane direction closest to world +x (falls back to +y when
  the cross-section plane is orthogonal to x), e_v = e_h x e_u.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import TriangleMesh

# Relative eigenvalue gap below which the elongation axis is ambiguous
# (sphere-like shapes). Diagnostic only; the frame is still produced.
LOW_CONFIDENCE_GAP = 0.03


class DegenerateGeometry(Exception):
    """Vertex covariance is rank-deficient (coplanar/collinear points)."""


@dataclass(frozen=True)
class PrincipalFrame:
    center: np.ndarray        # (3,) vertex centroid, m
    e_u: np.ndarray           # (3,) unit, cross-section
    e_v: np.ndarray           # (3,) unit, cross-section
    e_h: np.ndarray           # (3,) unit, elongation axis
    height_range: tuple[float, float]   # (h_min, h_max) along e_h about center
    eigenvalues: tuple[float, float, float]  # descending

    @property
    def low_confidence(self) -> bool:
        l0, l1, _ = self.eigenvalues
        return (l0 - l1) / l0 < LOW_CONFIDENCE_GAP if l0 > 0 else True

    @property
    def height(self) -> float:
        return self.height_range[1] - self.height_range[0]

    def to_dict(self) -> dict:
        return {
            "center": self.center.tolist(),
            "e_u": self.e_u.tolist(),
            "e_v": self.e_v.tolist(),
            "e_h": self.e_h.tolist(),
            "height_range": list(self.height_range),
            "eigenvalues": list(self.eigenvalues),
        }

    @staticmethod
    def from_dict(d: dict) -> "PrincipalFrame":
        return PrincipalFrame(
            center=np.asarray(d["center"], dtype=np.float64),
            e_u=np.asarray(d["e_u"], dtype=np.float64),
            e_v=np.asarray(d["e_v"], dtype=np.float64),
            e_h=np.asarray(d["e_h"], dtype=np.float64),
            height_range=(float(d["height_range"][0]),
                          float(d["height_range"][1])),
            eigenvalues=tuple(float(x) for x in d["eigenvalues"]),
        )


def compute_frame(mesh: TriangleMesh,
                  area_weighted: bool = False) -> PrincipalFrame:
    """PCA frame of the mesh vertices.

    `area_weighted` weights each vertex by a third of its incident triangle
    area instead of treating vertices uniformly.
    """
    verts = mesh.vertices
    if area_weighted:
        tv = verts[mesh.triangles]
        areas = 0.5 * np.linalg.norm(
            np.cross(tv[:, 1] - tv[:, 0], tv[:, 2] - tv[:, 0]), axis=1)
        w = np.zeros(len(verts))
        for k in range(3):
            np.add.at(w, mesh.triangles[:, k], areas / 3.0)
        w = w / w.sum()
    else:
        w = np.full(len(verts), 1.0 / len(verts))

    center = w @ verts
    centered = verts - center
    cov = (centered * w[:, None]).T @ centered
    eigval, eigvec = np.linalg.eigh(cov)       # ascending
    order = np.argsort(eigval)[::-1]
    eigval = eigval[order]
    eigvec = eigvec[:, order]

    if eigval[0] <= 0.0 or eigval[2] / eigval[0] < 1e-9:
        raise DegenerateGeometry(
            f"rank-deficient vertex covariance, eigenvalues {eigval.tolist()}")

    e_h = eigvec[:, 0]
    h = centered @ e_h
    area_w = _vertex_areas(mesh)
    if _opening_radius(centered, e_h, h, area_w, top=True) < \
            _opening_radius(centered, e_h, h, area_w, top=False):
        e_h = -e_h
        h = -h

    # In-plane axis closest to world +x; +y fallback near degeneracy.
    candidates = eigvec[:, 1], eigvec[:, 2]
    dots = [abs(float(c[0])) for c in candidates]
    e_u = candidates[int(np.argmax(dots))]
    ref = np.array([1.0, 0.0, 0.0]) if max(dots) > 1e-6 \
        else np.array([0.0, 1.0, 0.0])
    if float(e_u @ ref) < 0.0:
        e_u = -e_u
    e_v = np.cross(e_h, e_u)
    e_v = e_v / np.linalg.norm(e_v)
    e_u = np.cross(e_v, e_h)                   # exact right-handed triad

    return PrincipalFrame(
        center=center, e_u=e_u, e_v=e_v, e_h=e_h,
        height_range=(float(h.min()), float(h.max())),
        eigenvalues=(float(eigval[0]), float(eigval[1]), float(eigval[2])))


def _vertex_areas(mesh: TriangleMesh) -> np.ndarray:
    tv = mesh.vertices[mesh.triangles]
    areas = 0.5 * np.linalg.norm(
        np.cross(tv[:, 1] - tv[:, 0], tv[:, 2] - tv[:, 0]), axis=1)
    w = np.zeros(len(mesh.vertices))
    for k in range(3):
        np.add.at(w, mesh.triangles[:, k], areas / 3.0)
    return w


def _opening_radius(centered: np.ndarray, axis: np.ndarray, h: np.ndarray,
                    area_w: np.ndarray, top: bool) -> float:
    """Area-weighted mean in-plane radius over one 10% end band.

    Area weighting keeps a sparse triangle fan (e.g. a cup bottom closed
    toward a single apex) from being outvoted by the dense wall rings: the
    closed end averages small radii, the open end large ones.
    """
    h_lo, h_hi = h.min(), h.max()
    band = 0.10 * (h_hi - h_lo)
    sel = h >= h_hi - band if top else h <= h_lo + band
    if not sel.any() or area_w[sel].sum() <= 0.0:
        return 0.0
    in_plane = centered[sel] - np.outer(h[sel], axis)
    radii = np.linalg.norm(in_plane, axis=1)
    return float((radii * area_w[sel]).sum() / area_w[sel].sum())


def to_cylindrical(frame: PrincipalFrame,
                   p: np.ndarray) -> tuple[float, float, float]:
    """(h, phi, r) of a point in the frame; phi in [0, 2*pi)."""
    d = np.asarray(p, dtype=np.float64) - frame.center
    h = float(d @ frame.e_h)
    x = float(d @ frame.e_u)
    y = float(d @ frame.e_v)
    phi = float(np.arctan2(y, x)) % (2.0 * np.pi)
    return h, phi, float(np.hypot(x, y))


def from_cylindrical(frame: PrincipalFrame, h: float, phi: float,
                     r: float) -> np.ndarray:
    return (frame.center + h * frame.e_h
            + r * (np.cos(phi) * frame.e_u + np.sin(phi) * frame.e_v))


def cylindrical_batch(frame: PrincipalFrame,
                      points: np.ndarray) -> np.ndarray:
    """Vectorized to_cylindrical: (n, 3) points -> (n, 3) of (h, phi, r)."""
    d = np.asarray(points, dtype=np.float64) - frame.center
    h = d @ frame.e_h
    x = d @ frame.e_u
    y = d @ frame.e_v
    phi = np.arctan2(y, x) % (2.0 * np.pi)
    return np.column_stack([h, phi, np.hypot(x, y)])
