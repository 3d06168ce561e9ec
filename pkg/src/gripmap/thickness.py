"""Local wall-thickness estimation over a cylindrical grid.

Each lateral cell (layer l, angular bin a) is probed with a two-stage
raycast: an inward ray from outside the object finds the outer surface and
its normal; a second ray from just inside that point, along the negated
in-plane projection of the normal, finds the inner wall (or the far side
of a solid section). The sample is the distance between the two hits.

Probing uses jittered directions with deterministic per-cell seeding, so
identical mesh + config + seed reproduce the grid bit for bit. Cells whose
outer-surface normal is near the object axis (base/cap geometry) are
masked instead of probed along an unstable direction; the bottom face is
probed separately along the axis and reported as `base_tau`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .frame import PrincipalFrame, from_cylindrical
from .mesh import TriangleMesh

SECOND_RAY_OFFSET = 1e-5       # m; escape distance for the inner-wall ray
PROBE_RADIUS_FACTOR = 1.5      # ray-1 start radius = factor * max mesh radius
BASE_CONE_DEG = 30.0           # normals within this angle of +/-axis => base
MIN_INPLANE_NORM = 0.1         # hard floor for a usable in-plane direction
EDGE_MISS_RATE = 0.30          # pre-completion miss rate that triggers refine


class AllCellsInvalid(Exception):
    """No lateral cell produced a thickness sample (mesh/frame mismatch)."""


@dataclass(frozen=True)
class ThicknessGrid:
    layers: int
    bins: int
    tau: np.ndarray                 # (L, A) thickness, m
    valid: np.ndarray               # (L, A) bool; all True after completion
    layer_heights: np.ndarray       # (L,) cell-center heights along e_h
    refined_layers: tuple[int, ...] = ()
    layer_miss_rate: np.ndarray | None = None   # (L,) pre-completion misses
    base_tau: float | None = None   # bottom-face thickness, m
    seed: int = 0

    @property
    def layer_step(self) -> float:
        return float(self.layer_heights[1] - self.layer_heights[0]) \
            if self.layers > 1 else 0.0

    def to_dict(self) -> dict:
        return {
            "layers": self.layers,
            "bins": self.bins,
            "tau": self.tau.ravel().tolist(),
            "valid": self.valid.ravel().astype(int).tolist(),
            "layer_heights": self.layer_heights.tolist(),
            "refined_layers": list(self.refined_layers),
            "layer_miss_rate": None if self.layer_miss_rate is None
            else self.layer_miss_rate.tolist(),
            "base_tau": self.base_tau,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "ThicknessGrid":
        L, A = d["layers"], d["bins"]
        return ThicknessGrid(
            layers=L, bins=A,
            tau=np.asarray(d["tau"], dtype=np.float64).reshape(L, A),
            valid=np.asarray(d["valid"], dtype=bool).reshape(L, A),
            layer_heights=np.asarray(d["layer_heights"], dtype=np.float64),
            refined_layers=tuple(d.get("refined_layers", ())),
            layer_miss_rate=None if d.get("layer_miss_rate") is None
            else np.asarray(d["layer_miss_rate"], dtype=np.float64),
            base_tau=d.get("base_tau"),
            seed=d.get("seed", 0),
        )


# ----------------------------------------------------------------------
# Probing
# ----------------------------------------------------------------------
def _max_radius(mesh: TriangleMesh, frame: PrincipalFrame) -> float:
    d = mesh.vertices - frame.center
    in_plane = d - np.outer(d @ frame.e_h, frame.e_h)
    return float(np.linalg.norm(in_plane, axis=1).max())


def _probe_direction_sample(mesh: TriangleMesh, frame: PrincipalFrame,
                            h: float, phi: float,
                            probe_radius: float) -> float | None:
    """One two-stage sample at (h, phi); None on miss or base-region hit."""
    origin = from_cylindrical(frame, h, phi, probe_radius)
    inward = -(np.cos(phi) * frame.e_u + np.sin(phi) * frame.e_v)
    hit1 = mesh.raycast(origin, inward, max_dist=2.5 * probe_radius)
    if hit1 is None:
        return None
    n1 = hit1.normal
    axial = float(n1 @ frame.e_h)
    in_plane = n1 - axial * frame.e_h
    norm = float(np.linalg.norm(in_plane))
    min_norm = max(MIN_INPLANE_NORM, np.sin(np.deg2rad(BASE_CONE_DEG)))
    if norm < min_norm:
        return None                   # cap/base geometry, direction unstable
    direction = -in_plane / norm      # through the wall
    start = hit1.point + SECOND_RAY_OFFSET * direction
    hit2 = mesh.raycast(start, direction, max_dist=2.5 * probe_radius)
    if hit2 is None:
        return None
    return float(np.linalg.norm(hit2.point - hit1.point))


def probe_cell(mesh: TriangleMesh, frame: PrincipalFrame,
               layer_height: float, phi_center: float,
               cell_height: float, cell_angle: float,
               probes: int, rng: np.random.Generator,
               probe_radius: float) -> float | None:
    """Median thickness over jittered probes within one cell, or None."""
    samples = []
    for _ in range(probes):
        h = layer_height + cell_height * (rng.random() - 0.5)
        phi = phi_center + cell_angle * (rng.random() - 0.5)
        tau = _probe_direction_sample(mesh, frame, h, phi, probe_radius)
        if tau is not None:
            samples.append(tau)
    if not samples:
        return None
    return float(np.median(samples))


def _cell_rng(seed: int, layer: int, binidx: int,
              salt: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, salt, layer, binidx])


def probe_base_thickness(mesh: TriangleMesh, frame: PrincipalFrame,
                         probes: int, seed: int) -> float | None:
    """Bottom-face thickness: axial two-stage rays near the axis."""
    rng = np.random.default_rng([seed, 7777])
    r_max = _max_radius(mesh, frame)
    h_min, h_max = frame.height_range
    start_h = h_min - 0.5 * (h_max - h_min) - 0.01
    samples = []
    for k in range(max(probes, 3)):
        r = 0.35 * r_max * rng.random()
        phi = 2.0 * np.pi * rng.random()
        origin = from_cylindrical(frame, start_h, phi, r)
        hit1 = mesh.raycast(origin, frame.e_h, max_dist=np.inf)
        if hit1 is None:
            continue
        start = hit1.point + SECOND_RAY_OFFSET * frame.e_h
        hit2 = mesh.raycast(start, frame.e_h, max_dist=np.inf)
        if hit2 is None:
            continue
        samples.append(float(np.linalg.norm(hit2.point - hit1.point)))
    if not samples:
        return None
    return float(np.median(samples))


# ----------------------------------------------------------------------
# Grid construction
# ----------------------------------------------------------------------
def build_thickness_grid(mesh: TriangleMesh, frame: PrincipalFrame,
                         layers: int = 32, bins: int = 64, probes: int = 3,
                         seed: int = 0) -> ThicknessGrid:
    """Probe every lateral cell, then complete and smooth the field."""
    if layers < 8:
        raise ValueError("need at least 8 layers")
    if bins < 16:
        raise ValueError("need at least 16 angular bins")

    h_min, h_max = frame.height_range
    dh = (h_max - h_min) / layers
    dphi = 2.0 * np.pi / bins
    layer_heights = h_min + dh * (np.arange(layers) + 0.5)
    probe_radius = PROBE_RADIUS_FACTOR * _max_radius(mesh, frame)

    tau = np.zeros((layers, bins))
    valid = np.zeros((layers, bins), dtype=bool)
    for l in range(layers):
        for a in range(bins):
            value = probe_cell(
                mesh, frame, float(layer_heights[l]), dphi * (a + 0.5),
                dh, dphi, probes, _cell_rng(seed, l, a), probe_radius)
            if value is not None:
                tau[l, a] = value
                valid[l, a] = True

    if not valid.any():
        raise AllCellsInvalid("no lateral cell produced a thickness sample")

    miss_rate = 1.0 - valid.mean(axis=1)
    tau = complete_grid(tau, valid)
    tau = smooth_grid(tau)
    base_tau = probe_base_thickness(mesh, frame, probes, seed)
    return ThicknessGrid(
        layers=layers, bins=bins, tau=tau,
        valid=np.ones((layers, bins), dtype=bool),
        layer_heights=layer_heights, layer_miss_rate=miss_rate,
        base_tau=base_tau, seed=seed)


def complete_grid(tau: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Fill masked cells: nearest valid along the ring, then across layers.

    Angular search alternates +1, -1, +2, -2, ... with wraparound, so the
    tie-break (prefer the positive direction) is deterministic. Layers with
    no valid cell at all copy the nearest valid layer (downward preferred
    on ties).
    """
    L, A = tau.shape
    out = tau.copy()
    filled = valid.copy()
    for l in range(L):
        row_valid = np.flatnonzero(valid[l])
        if len(row_valid) == 0:
            continue
        for a in np.flatnonzero(~valid[l]):
            for step in range(1, A // 2 + 1):
                fwd = (a + step) % A
                back = (a - step) % A
                if valid[l, fwd]:
                    out[l, a] = tau[l, fwd]
                    break
                if valid[l, back]:
                    out[l, a] = tau[l, back]
                    break
            filled[l, a] = True
    for l in range(L):
        if filled[l].any():
            continue
        for step in range(1, L):
            lo, hi = l - step, l + step
            if lo >= 0 and filled[lo].all():
                out[l] = out[lo]
                break
            if hi < L and filled[hi].all():
                out[l] = out[hi]
                break
        filled[l] = True
    return out


def smooth_grid(tau: np.ndarray) -> np.ndarray:
    """Separable (1, 2, 1)/4 kernel: periodic in angle, clamped in height."""
    out = 0.25 * (np.roll(tau, 1, axis=1) + 2.0 * tau
                  + np.roll(tau, -1, axis=1))
    padded = np.vstack([out[:1], out, out[-1:]])
    return 0.25 * (padded[:-2] + 2.0 * padded[1:-1] + padded[2:])


# ----------------------------------------------------------------------
# Edge refinement
# ----------------------------------------------------------------------
def refine_edges(grid: ThicknessGrid, mesh: TriangleMesh,
                 frame: PrincipalFrame, probes: int = 3, n_edge: int = 2,
                 seed: int | None = None) -> ThicknessGrid:
    """Re-probe boundary layers at doubled resolution, keep per-bin maxima.

    Refined layers: the top/bottom `n_edge` layers plus any layer whose
    pre-completion miss rate exceeded EDGE_MISS_RATE. Each is re-probed at
    2x angular resolution with 2x probes, on the layer center and two
    sublayers offset by a quarter layer height. Replacing a bin with the
    maximum over its refined samples lets reinforced rims raise the field,
    never lower it below a genuinely measured chord.
    """
    if seed is None:
        seed = grid.seed
    L, A = grid.layers, grid.bins
    targets = set(range(n_edge)) | set(range(L - n_edge, L))
    if grid.layer_miss_rate is not None:
        targets |= set(np.flatnonzero(
            grid.layer_miss_rate > EDGE_MISS_RATE).tolist())
    targets = sorted(t for t in targets if 0 <= t < L)

    dh = grid.layer_step
    dphi = 2.0 * np.pi / A
    probe_radius = PROBE_RADIUS_FACTOR * _max_radius(mesh, frame)
    tau = grid.tau.copy()
    for l in targets:
        h0 = float(grid.layer_heights[l])
        for a in range(A):
            best = -np.inf
            for sub in range(2):                      # doubled angular bins
                phi = dphi * (a + 0.25 + 0.5 * sub)
                for ks, h in enumerate((h0 - dh / 4, h0, h0 + dh / 4)):
                    value = probe_cell(
                        mesh, frame, h, phi, dh / 2, dphi / 2, 2 * probes,
                        _cell_rng(seed, l, a, salt=1000 + 10 * ks + sub),
                        probe_radius)
                    if value is not None and value > best:
                        best = value
            if np.isfinite(best):
                tau[l, a] = best
    return replace(grid, tau=tau,
                   refined_layers=tuple(sorted(set(grid.refined_layers)
                                               | set(targets))))
