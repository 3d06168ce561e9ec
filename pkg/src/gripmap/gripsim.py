"""Force-map-aware impedance grip simulation.

Each finger is simulated as one degree of freedom along its contact
normal: a virtual mass driven by the impedance law toward a target force,
pressing against the object wall rendered as a unilateral penalty spring
f = k_wall * max(penetration, 0).

    m * dv = f_des - k_n * u - d * v - f

Stiffness follows the adaptive law k_n = gamma_n * F_tar / delta_n_max;
damping is co-tuned d = 2 * zeta_n * sqrt(m * k_active) where k_active
includes the wall spring while the finger is in contact, so the transient
stays critically damped at zeta_n = 1 instead of ringing against the
penalty wall. Integration is semi-implicit Euler with the damping term
taken implicitly (unconditionally stable in d).

Controller conditions:
  under  K = 0.3 * K_base, force map ignored
  over   K = 2.0 * K_base, force map ignored
  fixed  K = 1.0 * K_base, force map ignored (utility-baseline grips)
  ours   per-finger F_tar_k = min(lambda * c_grip * F*_k, 0.7 * F*_k),
         gains from the adaptive law

K_base is calibrated once per scenario from the reference grasp as
gamma_n * c_grip * min_k(F*_k) / delta_n_max, which makes the "ours"
stiffness equal K_base * (F*_k / F_ref) * lambda with F_ref the weakest
admissible contact force of that grasp.

Retention is a point-contact Coulomb check mu * sum_k f_k >= m * g each
step; a shortfall lasting longer than the slip grace period counts as
slip. Success requires both retention and zero force-bound violations
(f_k > F*_k at any step flags the finger).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .forcemap import ForceMap
from .mesh import TriangleMesh
from .ranking import GraspCandidate

GRAVITY = 9.81              # m/s^2
SLIP_GRACE = 0.1            # s; transient contact chatter is not slip
SETTLE_WINDOW = 0.5         # s; steady state = mean over the final window
TARGET_SAFETY = 0.7         # F_tar never exceeds this fraction of F*

MODES = ("under", "over", "fixed", "ours")
MODE_GAIN = {"under": 0.3, "over": 2.0, "fixed": 1.0}


class NoContact(Exception):
    def __init__(self, finger: int):
        super().__init__(f"finger {finger} lost contact")
        self.finger = finger


class NumericalDivergence(Exception):
    """Deflection exceeded 10x the tolerated maximum; unstable parameters."""


@dataclass(frozen=True)
class ImpedanceParams:
    m_n: float = 0.05           # kg, virtual finger mass
    zeta_n: float = 1.0         # damping ratio
    gamma_n: float = 1.0        # stiffness gain
    delta_n_max: float = 0.002  # m, max tolerated deflection
    k_base: float | None = None # N/m; calibrated per scenario when None
    dt: float = 1.0 / 240.0     # s, physics step
    k_wall: float = 5000.0      # N/m, contact penalty stiffness
    c_grip: float = 0.7         # grip-target fraction of F* at lambda = 1
    control_hz: float = 60.0    # gain/target update rate
    substeps: int = 8           # integrator subdivisions per physics step

    def __post_init__(self):
        for name in ("m_n", "zeta_n", "gamma_n", "delta_n_max", "dt",
                     "k_wall", "c_grip", "control_hz", "substeps"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.dt > 1.0 / 60.0:
            raise ValueError("dt must be <= 1/60 s")

    def to_dict(self) -> dict:
        return {"m_n": self.m_n, "zeta_n": self.zeta_n,
                "gamma_n": self.gamma_n, "delta_n_max": self.delta_n_max,
                "k_base": self.k_base, "dt": self.dt, "k_wall": self.k_wall,
                "c_grip": self.c_grip, "control_hz": self.control_hz}

    @staticmethod
    def from_dict(d: dict) -> "ImpedanceParams":
        return ImpedanceParams(**{k: d[k] for k in d
                                  if k in ImpedanceParams.__dataclass_fields__})


def adaptive_stiffness(f_tar: float,
                       params: ImpedanceParams) -> tuple[float, float]:
    """(k_n, d_n) from the target force: stiffness so the target is reached
    at the tolerated deflection, damping for a consistent transient."""
    if f_tar < 0.0:
        raise ValueError("target force must be >= 0")
    k_n = params.gamma_n * f_tar / params.delta_n_max
    d_n = 2.0 * params.zeta_n * np.sqrt(params.m_n * k_n)
    return float(k_n), float(d_n)


def calibrate_k_base(per_contact_f: np.ndarray,
                     params: ImpedanceParams) -> float:
    """K_base from a reference grasp: the weakest contact sets the scale."""
    f_ref = float(np.asarray(per_contact_f).min())
    return params.gamma_n * params.c_grip * f_ref / params.delta_n_max


# ----------------------------------------------------------------------
# Contact state estimation
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class ContactObservation:
    point: np.ndarray       # (3,) contact position
    normal: np.ndarray      # (3,) contact normal (unit)
    impulse: np.ndarray     # (3,) N*s over the last step


@dataclass(frozen=True)
class FingerContactState:
    finger: int
    points: np.ndarray      # (j, 3)
    normals: np.ndarray     # (j, 3)
    f_max: np.ndarray       # (j,) admissible force, nearest-vertex lookup
    f_est: np.ndarray       # (j,) impulse-derived normal force
    critical: int           # j*: highest load ratio f_est / f_max

    @property
    def f_star(self) -> float:
        return float(self.f_max[self.critical])

    @property
    def n(self) -> np.ndarray:
        nrm = self.normals[self.critical]
        return nrm / np.linalg.norm(nrm)

    @property
    def f(self) -> float:
        return float(self.f_est[self.critical])


def nearest_vertex_force(force_map: ForceMap, mesh: TriangleMesh,
                         p: np.ndarray) -> float:
    if force_map.per_vertex is None:
        raise ValueError("force map has no per-vertex projection")
    d2 = np.sum((mesh.vertices - np.asarray(p, dtype=np.float64)) ** 2,
                axis=1)
    return float(force_map.per_vertex[int(np.argmin(d2))])


def estimate_contacts(observations: list[list[ContactObservation]],
                      force_map: ForceMap, mesh: TriangleMesh,
                      dt: float) -> list[FingerContactState]:
    """Per-finger contact state from engine observations.

    For every contact: admissible force by nearest-vertex lookup and
    normal force from the impulse normal component over dt. The critical
    contact maximizes the load ratio. Raises NoContact for a finger with
    an empty observation list.
    """
    states = []
    for k, obs in enumerate(observations):
        if not obs:
            raise NoContact(k)
        points = np.array([o.point for o in obs], dtype=np.float64)
        normals = np.array([o.normal for o in obs], dtype=np.float64)
        f_max = np.array([nearest_vertex_force(force_map, mesh, o.point)
                          for o in obs])
        f_est = np.array([
            max(0.0, float(o.impulse @ o.normal)) / dt for o in obs])
        ratios = f_est / np.maximum(f_max, 1e-12)
        states.append(FingerContactState(
            finger=k, points=points, normals=normals,
            f_max=f_max, f_est=f_est, critical=int(np.argmax(ratios))))
    return states


# ----------------------------------------------------------------------
# Integrator
# ----------------------------------------------------------------------
@dataclass
class FingerSimState:
    u: np.ndarray           # (n,) inward deflection, m
    v: np.ndarray           # (n,) velocity, m/s
    k_n: np.ndarray         # (n,) controller stiffness, N/m

    @staticmethod
    def resting(k_n: np.ndarray) -> "FingerSimState":
        n = len(k_n)
        return FingerSimState(u=np.zeros(n), v=np.zeros(n),
                              k_n=np.asarray(k_n, dtype=np.float64))


def contact_force(state: FingerSimState,
                  params: ImpedanceParams) -> np.ndarray:
    return params.k_wall * np.maximum(state.u, 0.0)


def step_impedance(state: FingerSimState, params: ImpedanceParams,
                   f_des: np.ndarray, dt: float) -> FingerSimState:
    """One semi-implicit Euler step of every finger's normal deflection.

    The step is subdivided into params.substeps internal updates so the
    stiff wall phase stays well resolved at the default dt. Damping is
    evaluated per substep from the active stiffness (controller spring
    plus wall spring while penetrating) and integrated implicitly.
    """
    u = state.u
    v = state.v
    k_n = state.k_n
    f_des = np.asarray(f_des, dtype=np.float64)
    h = dt / params.substeps
    for _ in range(params.substeps):
        k_active = k_n + np.where(u > 0.0, params.k_wall, 0.0)
        d = 2.0 * params.zeta_n * np.sqrt(params.m_n * k_active)
        f_wall = params.k_wall * np.maximum(u, 0.0)
        accel = (f_des - k_n * u - f_wall) / params.m_n
        v = (v + h * accel) / (1.0 + h * d / params.m_n)
        u = u + h * v
    if np.any(np.abs(u) > 10.0 * params.delta_n_max):
        worst = int(np.argmax(np.abs(u)))
        raise NumericalDivergence(
            f"finger {worst} deflection {u[worst]:.4g} m exceeds "
            f"10 * delta_n_max = {10 * params.delta_n_max:.4g} m")
    return FingerSimState(u=u, v=v, k_n=k_n.copy())


def equilibrium_force(f_des: float, k_n: float,
                      params: ImpedanceParams) -> float:
    """Analytic steady contact force of the per-finger system."""
    return f_des * params.k_wall / (params.k_wall + k_n)


# ----------------------------------------------------------------------
# Grip execution
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class GripReport:
    mode: str
    lam: float
    f_star: np.ndarray          # (5,) admissible force at each contact
    f_tar: np.ndarray           # (5,) per-finger target force
    f_steady: np.ndarray        # (5,) steady-state contact force
    f_max: float                # max steady finger force
    margin: float               # min F* / f_max
    violations: int             # fingers with f_k > F*_k at any step
    violated_fingers: tuple[int, ...]
    slipped: bool
    slip_time: float | None     # s, first sustained retention shortfall
    success: bool               # retention held and zero violations
    k_base: float
    duration: float
    dt: float
    object_mass: float
    mu: float
    times: np.ndarray           # (steps,)
    trace_f: np.ndarray         # (steps, 5) contact forces
    trace_u: np.ndarray         # (steps, 5) deflections

    def to_dict(self, include_traces: bool = False) -> dict:
        d = {
            "mode": self.mode,
            "lambda": self.lam,
            "f_star": self.f_star.tolist(),
            "f_tar": self.f_tar.tolist(),
            "f_steady": self.f_steady.tolist(),
            "f_max": self.f_max,
            "margin": self.margin,
            "violations": self.violations,
            "violated_fingers": list(self.violated_fingers),
            "slipped": self.slipped,
            "slip_time": self.slip_time,
            "success": self.success,
            "k_base": self.k_base,
            "duration": self.duration,
            "dt": self.dt,
            "object_mass": self.object_mass,
            "mu": self.mu,
        }
        if include_traces:
            d["times"] = self.times.tolist()
            d["trace_f"] = self.trace_f.tolist()
        return d


def grasp_contact_forces(force_map: ForceMap, mesh: TriangleMesh,
                         grasp: GraspCandidate) -> np.ndarray:
    """Admissible force at each grasp contact via nearest-vertex lookup."""
    return np.array([nearest_vertex_force(force_map, mesh, p)
                     for p in grasp.contacts])


def run_grip(force_map: ForceMap, mesh: TriangleMesh,
             grasp: GraspCandidate, mode: str, lam: float,
             object_mass: float, mu: float,
             params: ImpedanceParams | None = None,
             duration: float = 3.0) -> GripReport:
    """Simulate one grip condition over the hold window."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if params is None:
        params = ImpedanceParams()
    f_star = grasp_contact_forces(force_map, mesh, grasp)
    k_base = params.k_base if params.k_base is not None \
        else calibrate_k_base(f_star, params)

    if mode == "ours":
        f_tar = np.minimum(lam * params.c_grip * f_star,
                           TARGET_SAFETY * f_star)
        gains = np.array([adaptive_stiffness(t, params) for t in f_tar])
        k_n = gains[:, 0]
    else:
        k_n = np.full(5, MODE_GAIN[mode] * k_base)
        # constant-stiffness conditions press to the same commanded
        # overtravel delta_n_max / gamma_n regardless of the force map
        f_tar = k_n * params.delta_n_max / params.gamma_n

    dt = params.dt
    steps = int(round(duration / dt))
    control_every = max(1, int(round(1.0 / (params.control_hz * dt))))
    state = FingerSimState.resting(k_n)
    f_des = f_tar.copy()

    times = np.empty(steps)
    trace_f = np.empty((steps, 5))
    trace_u = np.empty((steps, 5))
    violated = np.zeros(5, dtype=bool)
    weight = object_mass * GRAVITY
    shortfall_start: float | None = None
    slip_time: float | None = None

    for i in range(steps):
        if i % control_every == 0:
            f_des = f_tar.copy()        # static targets; placeholder hook
        state = step_impedance(state, params, f_des, dt)
        t = (i + 1) * dt
        f = contact_force(state, params)
        times[i] = t
        trace_f[i] = f
        trace_u[i] = state.u
        violated |= f > f_star
        if mu * f.sum() >= weight:
            shortfall_start = None
        else:
            if shortfall_start is None:
                shortfall_start = t
            elif t - shortfall_start > SLIP_GRACE and slip_time is None:
                slip_time = shortfall_start

    settle = max(1, int(round(SETTLE_WINDOW / dt)))
    f_steady = trace_f[-settle:].mean(axis=0)
    f_max = float(f_steady.max())
    margin = float(f_star.min() / f_max) if f_max > 0.0 else np.inf
    slipped = slip_time is not None
    return GripReport(
        mode=mode, lam=lam, f_star=f_star, f_tar=f_tar, f_steady=f_steady,
        f_max=f_max, margin=margin,
        violations=int(violated.sum()),
        violated_fingers=tuple(np.flatnonzero(violated).tolist()),
        slipped=slipped, slip_time=slip_time,
        success=not slipped and not violated.any(),
        k_base=float(k_base), duration=duration, dt=dt,
        object_mass=object_mass, mu=mu,
        times=times, trace_f=trace_f, trace_u=trace_u)


def lambda_sweep(force_map: ForceMap, mesh: TriangleMesh,
                 grasp: GraspCandidate, object_mass: float, mu: float,
                 params: ImpedanceParams | None = None,
                 lambdas: tuple[float, ...] = (0.3, 0.7, 1.0),
                 duration: float = 3.0) -> dict[float, GripReport]:
    """One proposed-controller grip per interaction mode value."""
    return {lam: run_grip(force_map, mesh, grasp, "ours", lam, object_mass,
                          mu, params, duration)
            for lam in lambdas}
