"""Admissible lateral contact-force map from a wall-thickness grid.

The per-cell admissible force is

    F(l, a) = min((F_base(l, a) + sum_s b_s(l)) * k_m, F_clamp)

with F_base = c_base * tau (linear in thickness by default, optional
power-law exponent), Gaussian vertical bonuses b_s spread from reinforced
layers (local maxima of the layer-mean base force), material scaling k_m,
and a hard ceiling F_clamp. The grid is projected onto mesh vertices by
bilinear interpolation in cylindrical coordinates; bottom-face vertices
get the separately probed base force.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .frame import PrincipalFrame, cylindrical_batch
from .mesh import HEAT_RAMP, ColorRamp, TriangleMesh
from .thickness import BASE_CONE_DEG, ThicknessGrid

BONUS_BETA = 0.25          # bonus amplitude as a fraction of the peak mean
BONUS_SIGMA = 1.5          # bonus spread, in layers
PEAK_PROMINENCE = 0.20     # fraction of grid-wide mean base force
BASE_HEIGHT_FRACTION = 0.25  # vertical-normal vertices below this are base

FORCE_CHANNEL = "admissible_force"
COLOR_CHANNEL = "admissible_force_color"


class InfeasibleCalibration(Exception):
    """A calibration zone with no measurable thickness got a nonzero target."""


@dataclass(frozen=True)
class MaterialModel:
    material_id: str           # paper | plastic | glass
    k_m: float                 # dimensionless material coefficient
    c_base: float              # N/m, base-force slope
    f_clamp: float = 1000.0    # N, hard ceiling
    exponent: float = 1.0      # optional power law on thickness

    def __post_init__(self):
        if self.k_m <= 0.0 or self.f_clamp <= 0.0 or self.c_base < 0.0:
            raise ValueError("material coefficients must be positive")

    def to_dict(self) -> dict:
        return {"material_id": self.material_id, "k_m": self.k_m,
                "c_base": self.c_base, "f_clamp": self.f_clamp,
                "exponent": self.exponent}

    @staticmethod
    def from_dict(d: dict) -> "MaterialModel":
        return MaterialModel(
            material_id=d["material_id"], k_m=float(d["k_m"]),
            c_base=float(d["c_base"]), f_clamp=float(d["f_clamp"]),
            exponent=float(d.get("exponent", 1.0)))


# Engineering placeholders; calibrate_material refines c_base per object.
DEFAULT_MATERIALS = {
    "paper": MaterialModel("paper", k_m=1.0, c_base=2400.0),
    "plastic": MaterialModel("plastic", k_m=0.2, c_base=2400.0),
    "glass": MaterialModel("glass", k_m=12.0, c_base=2400.0),
}


def base_force(tau, material: MaterialModel):
    """Admissible force before bonuses and material scaling; N.

    Strictly increasing in thickness: c_base * tau ** exponent.
    """
    tau = np.asarray(tau, dtype=np.float64)
    if np.any(tau < 0.0):
        raise ValueError("thickness must be non-negative")
    if material.exponent == 1.0:
        out = material.c_base * tau
    else:
        out = material.c_base * np.power(tau, material.exponent)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ReinforcedLayer:
    layer: int
    amplitude: float       # N, bonus peak = BETA * layer-mean base force

    def bonus(self, layer_index, sigma: float = BONUS_SIGMA):
        l = np.asarray(layer_index, dtype=np.float64)
        return self.amplitude * np.exp(
            -((l - self.layer) ** 2) / (2.0 * sigma * sigma))


def detect_reinforced_layers(grid: ThicknessGrid, material: MaterialModel,
                             prominence: float = PEAK_PROMINENCE,
                             beta: float = BONUS_BETA
                             ) -> list[ReinforcedLayer]:
    """Local maxima of the layer-mean base force with sufficient prominence.

    Prominence of a peak is its height above the higher of the two lowest
    points separating it from taller terrain (or the series edge). The
    threshold is `prominence` times the grid-wide mean, so detection is
    invariant to rescaling c_base. End layers can qualify: a reinforced rim
    is the common case.
    """
    means = base_force(grid.tau, material).mean(axis=1)
    threshold = prominence * float(means.mean())
    out = []
    for s in _prominent_peaks(means, threshold):
        out.append(ReinforcedLayer(layer=s,
                                   amplitude=beta * float(means[s])))
    return out


def _prominent_peaks(values: np.ndarray, threshold: float) -> list[int]:
    n = len(values)
    peaks = []
    for i in range(n):
        left = values[i - 1] if i > 0 else -np.inf
        right = values[i + 1] if i < n - 1 else -np.inf
        if values[i] < left or values[i] < right:
            continue
        if values[i] == left:          # plateau: count only the left edge
            continue
        prom = values[i] - max(_base_level(values, i, -1),
                               _base_level(values, i, +1))
        if prom >= threshold and prom > 0.0:
            peaks.append(i)
    return peaks


def _base_level(values: np.ndarray, peak: int, step: int) -> float:
    """Lowest value between the peak and the next strictly higher value.

    Walking off the series edge without meeting higher terrain makes that
    side unconstraining (-inf), so end layers can be full-prominence peaks.
    """
    lowest = np.inf
    i = peak + step
    while 0 <= i < len(values):
        if values[i] > values[peak]:
            break
        lowest = min(lowest, values[i])
        i += step
    return -np.inf if not np.isfinite(lowest) else float(lowest)


# ----------------------------------------------------------------------
# Force map
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class ForceMap:
    grid: np.ndarray                       # (L, A) admissible force, N
    layer_heights: np.ndarray              # (L,)
    reinforced: tuple[ReinforcedLayer, ...]
    base_force_n: float | None             # bottom face, N
    frame: PrincipalFrame
    material: MaterialModel
    per_vertex: np.ndarray | None = None   # (n_vertices,) after projection
    object_id: str | None = None

    @property
    def layers(self) -> int:
        return self.grid.shape[0]

    @property
    def bins(self) -> int:
        return self.grid.shape[1]

    @property
    def f_max(self) -> float:
        """Reference maximum: projected per-vertex max when available."""
        if self.per_vertex is not None and len(self.per_vertex):
            return float(self.per_vertex.max())
        return float(self.grid.max())

    def layer_of_height(self, h: float) -> int:
        step = float(self.layer_heights[1] - self.layer_heights[0])
        idx = int(round((h - float(self.layer_heights[0])) / step))
        return int(np.clip(idx, 0, self.layers - 1))

    def to_dict(self) -> dict:
        return {
            "object_id": self.object_id,
            "material": self.material.to_dict(),
            "frame": self.frame.to_dict(),
            "layers": self.layers,
            "bins": self.bins,
            "layer_heights": self.layer_heights.tolist(),
            "grid": self.grid.ravel().tolist(),
            "reinforced_layers": [
                {"layer": r.layer, "amplitude": r.amplitude}
                for r in self.reinforced],
            "base_force": self.base_force_n,
            "per_vertex": None if self.per_vertex is None
            else self.per_vertex.tolist(),
        }

    @staticmethod
    def from_dict(d: dict) -> "ForceMap":
        L, A = d["layers"], d["bins"]
        return ForceMap(
            grid=np.asarray(d["grid"], dtype=np.float64).reshape(L, A),
            layer_heights=np.asarray(d["layer_heights"], dtype=np.float64),
            reinforced=tuple(
                ReinforcedLayer(r["layer"], r["amplitude"])
                for r in d.get("reinforced_layers", [])),
            base_force_n=d.get("base_force"),
            frame=PrincipalFrame.from_dict(d["frame"]),
            material=MaterialModel.from_dict(d["material"]),
            per_vertex=None if d.get("per_vertex") is None
            else np.asarray(d["per_vertex"], dtype=np.float64),
            object_id=d.get("object_id"),
        )


def build_force_map(grid: ThicknessGrid,
                    reinforced: list[ReinforcedLayer],
                    material: MaterialModel,
                    object_id: str | None = None,
                    frame: PrincipalFrame | None = None,
                    sigma: float = BONUS_SIGMA) -> ForceMap:
    """Apply bonuses, material scaling, and the clamp cellwise."""
    if frame is None:
        raise ValueError("build_force_map needs the probing frame")
    fb = base_force(grid.tau, material)
    bonus = np.zeros(grid.layers)
    for r in reinforced:
        bonus += r.bonus(np.arange(grid.layers), sigma)
    values = (fb + bonus[:, None]) * material.k_m
    values = np.clip(values, 0.0, material.f_clamp)
    if grid.base_tau is None:
        base_n = None
    else:
        base_n = float(min(base_force(grid.base_tau, material)
                           * material.k_m, material.f_clamp))
    return ForceMap(grid=values, layer_heights=grid.layer_heights.copy(),
                    reinforced=tuple(reinforced), base_force_n=base_n,
                    frame=frame, material=material, object_id=object_id)


def project_to_vertices(force_map: ForceMap, mesh: TriangleMesh,
                        frame: PrincipalFrame | None = None,
                        ramp: ColorRamp = HEAT_RAMP) -> ForceMap:
    """Bilinear cylindrical interpolation of the grid onto mesh vertices.

    Angular interpolation wraps; vertical interpolation clamps at the end
    layers (no extrapolation). Vertices whose normal lies within
    BASE_CONE_DEG of the axis *and* which sit in the bottom
    BASE_HEIGHT_FRACTION of the height are bottom-face vertices and get
    the probed base force (vertical-normal vertices near the top are rim
    caps and stay on the lateral interpolation). Stores the scalar channel
    and a companion color channel on the mesh.
    """
    if frame is None:
        frame = force_map.frame
    L, A = force_map.layers, force_map.bins
    cyl = cylindrical_batch(frame, mesh.vertices)
    h, phi = cyl[:, 0], cyl[:, 1]
    h_min = float(force_map.layer_heights[0])
    dh = float(force_map.layer_heights[1] - force_map.layer_heights[0])
    dphi = 2.0 * np.pi / A

    lf = np.clip((h - h_min) / dh, 0.0, L - 1.0)
    l0 = np.floor(lf).astype(np.int64)
    l1 = np.minimum(l0 + 1, L - 1)
    wl = lf - l0

    af = (phi / dphi - 0.5) % A
    a0 = np.floor(af).astype(np.int64) % A
    a1 = (a0 + 1) % A
    wa = af - np.floor(af)

    g = force_map.grid
    values = ((1 - wl) * ((1 - wa) * g[l0, a0] + wa * g[l0, a1])
              + wl * ((1 - wa) * g[l1, a0] + wa * g[l1, a1]))

    if force_map.base_force_n is not None:
        normals = mesh.vertex_normals
        axial = np.abs(normals @ frame.e_h)
        h_lo, h_hi = frame.height_range
        base_sel = (axial > np.cos(np.deg2rad(BASE_CONE_DEG))) & \
            (h < h_lo + BASE_HEIGHT_FRACTION * (h_hi - h_lo))
        values = np.where(base_sel, force_map.base_force_n, values)

    values = np.clip(values, 0.0, force_map.material.f_clamp)
    mesh.channels[FORCE_CHANNEL] = values
    mesh.channels[COLOR_CHANNEL] = ramp.map_values(values)
    return replace(force_map, per_vertex=values)


# ----------------------------------------------------------------------
# Calibration
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class ZoneSpec:
    """A named band of grid layers, e.g. the wall or the rim of a cup."""
    name: str
    layer_lo: int
    layer_hi: int              # inclusive

    def mask(self, layers: int) -> np.ndarray:
        sel = np.zeros(layers, dtype=bool)
        sel[self.layer_lo:self.layer_hi + 1] = True
        return sel


def calibrate_material(zone_targets: list[tuple[ZoneSpec, float]],
                       grid: ThicknessGrid, material: MaterialModel,
                       sigma: float = BONUS_SIGMA,
                       beta: float = BONUS_BETA,
                       prominence: float = PEAK_PROMINENCE
                       ) -> tuple[MaterialModel, dict[str, float]]:
    """Least-squares fit of c_base so zone means match their targets.

    k_m is held at 1 for the calibration object; reinforced-layer
    detection depends only on thickness ratios, so the pre-clamp zone
    means are exactly linear in c_base and the fit is closed-form.
    Returns the fitted model and per-zone relative residuals.
    """
    if not zone_targets:
        raise ValueError("need at least one calibration target")
    probe = replace(material, k_m=1.0, c_base=1.0)
    reinforced = detect_reinforced_layers(grid, probe, prominence=prominence,
                                          beta=beta)
    fb = base_force(grid.tau, probe)
    bonus = np.zeros(grid.layers)
    for r in reinforced:
        bonus += r.bonus(np.arange(grid.layers), sigma)
    per_layer = fb.mean(axis=1) + bonus

    slopes, targets, names = [], [], []
    for zone, target in zone_targets:
        slope = float(per_layer[zone.mask(grid.layers)].mean())
        if slope <= 1e-12 and target > 0.0:
            raise InfeasibleCalibration(
                f"zone {zone.name!r} has no thickness but target {target} N")
        slopes.append(slope)
        targets.append(float(target))
        names.append(zone.name)
    slopes_arr = np.asarray(slopes)
    targets_arr = np.asarray(targets)
    c_base = float(slopes_arr @ targets_arr / (slopes_arr @ slopes_arr))

    fitted = replace(material, c_base=c_base, k_m=1.0)
    residuals = {
        name: float((c_base * slope - target) / target) if target else 0.0
        for name, slope, target in zip(names, slopes, targets)}
    return fitted, residuals
