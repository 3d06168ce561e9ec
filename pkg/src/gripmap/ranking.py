"""Force-map-aware re-ranking of externally supplied grasp candidates.

Candidates arrive as JSON (hand pose, joint payload, five fingertip
contacts in the object frame, a classical utility score, and a functional
task-suitability probability). Ranking: drop candidates under the
functional threshold, drop candidates with any contact below
lambda * F_max (interaction-mode filter), score survivors by

    S_F = min_k F_k - alpha * Var_k(F_k)      (population variance)

and pick the argmax with a deterministic tie-break (higher min force,
then lexicographic id). Per-contact forces come from barycentric
interpolation of the per-vertex admissible-force field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .forcemap import ForceMap
from .frame import to_cylindrical
from .mesh import TriangleMesh

N_CONTACTS = 5


class SchemaError(Exception):
    """Candidate file is not readable as a candidate list."""


class NoSurvivors(Exception):
    """The interaction-mode filter discarded every candidate: no grasp is
    mechanically safe for the requested lambda."""


@dataclass(frozen=True)
class GraspCandidate:
    id: str
    t: np.ndarray               # (3,) hand base position, object frame
    r6d: np.ndarray             # (6,) continuous rotation representation
    theta: np.ndarray           # (24,) joint angles, opaque payload
    contacts: np.ndarray        # (5, 3) fingertip contacts, object frame
    utility: float              # classical multi-criteria score
    functional_score: float     # task-suitability probability in [0, 1]

    def to_dict(self) -> dict:
        return {"id": self.id, "t": self.t.tolist(),
                "r6d": self.r6d.tolist(), "theta": self.theta.tolist(),
                "contacts": self.contacts.tolist(),
                "utility": self.utility,
                "functional_score": self.functional_score}


def validate_candidate(entry: dict, index: int) -> GraspCandidate:
    """Build a candidate from one JSON entry; raise SchemaError on defects."""
    def fail(reason: str):
        ident = entry.get("id", f"#{index}") if isinstance(entry, dict) \
            else f"#{index}"
        raise SchemaError(f"entry {index} ({ident}): {reason}")

    if not isinstance(entry, dict):
        fail("not an object")
    for key in ("id", "t", "r6d", "theta", "contacts", "utility",
                "functional_score"):
        if key not in entry:
            fail(f"missing field {key!r}")
    try:
        t = np.asarray(entry["t"], dtype=np.float64)
        r6d = np.asarray(entry["r6d"], dtype=np.float64)
        theta = np.asarray(entry["theta"], dtype=np.float64)
        contacts = np.asarray(entry["contacts"], dtype=np.float64)
    except (TypeError, ValueError):
        fail("non-numeric array field")
    if t.shape != (3,):
        fail(f"t must have 3 components, got shape {t.shape}")
    if r6d.shape != (6,):
        fail(f"r6d must have 6 components, got shape {r6d.shape}")
    if theta.shape != (24,):
        fail(f"theta must have 24 components, got shape {theta.shape}")
    if contacts.shape != (N_CONTACTS, 3):
        fail(f"need exactly {N_CONTACTS} 3-d contacts, got {contacts.shape}")
    score = float(entry["functional_score"])
    if not 0.0 <= score <= 1.0:
        fail(f"functional_score {score} outside [0, 1]")
    # r6d must be recoverable into a rotation: the two columns may not be
    # (anti)parallel.
    a, b = r6d[:3], r6d[3:]
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < 1e-9 or nb < 1e-9 \
            or np.linalg.norm(np.cross(a / na, b / nb)) < 1e-6:
        fail("r6d columns are parallel or zero")
    return GraspCandidate(
        id=str(entry["id"]), t=t, r6d=r6d, theta=theta, contacts=contacts,
        utility=float(entry["utility"]), functional_score=score)


def load_candidates(path: str) -> tuple[list[GraspCandidate], list[str]]:
    """Read a candidate file; malformed entries are rejected, not fatal.

    Returns (accepted, diagnostics); diagnostics hold one line per
    rejected entry. A file that is not a JSON list raises SchemaError.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    if isinstance(data, dict) and "candidates" in data:
        data = data["candidates"]
    if not isinstance(data, list):
        raise SchemaError(f"{path}: expected a JSON list of candidates")
    accepted: list[GraspCandidate] = []
    rejected: list[str] = []
    for i, entry in enumerate(data):
        try:
            accepted.append(validate_candidate(entry, i))
        except SchemaError as exc:
            rejected.append(str(exc))
    return accepted, rejected


def save_candidates(path: str, candidates: list[GraspCandidate]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([c.to_dict() for c in candidates], fh, indent=2,
                  sort_keys=True)
        fh.write("\n")


# ----------------------------------------------------------------------
# Filtering and scoring
# ----------------------------------------------------------------------
def functional_filter(candidates: list[GraspCandidate],
                      tau_f: float) -> list[GraspCandidate]:
    """Keep candidates whose task-suitability score reaches the threshold."""
    if not 0.0 <= tau_f <= 1.0:
        raise ValueError(f"tau_f must lie in [0, 1], got {tau_f}")
    return [c for c in candidates if c.functional_score >= tau_f]


def contact_admissible_force(force_map: ForceMap, mesh: TriangleMesh,
                             p: np.ndarray) -> float:
    """Barycentric interpolation of per-vertex forces at a contact point."""
    if force_map.per_vertex is None:
        raise ValueError("force map has no per-vertex projection")
    loc = mesh.locate_point(p)
    v = mesh.triangles[loc.triangle_index]
    w1, w2, w3 = loc.weights
    f = force_map.per_vertex
    return float(w1 * f[v[0]] + w2 * f[v[1]] + w3 * f[v[2]])


@dataclass(frozen=True)
class RankedGrasp:
    candidate: GraspCandidate
    per_contact_f: np.ndarray | None    # (5,) N; None when filtered early
    s_f: float | None                   # score, N
    filtered_out: str | None = None     # None | functional | mode_violation

    @property
    def min_f(self) -> float:
        return float(self.per_contact_f.min())


def score_candidate(per_contact_f: np.ndarray, alpha: float) -> float:
    """min_k F_k - alpha * population variance over the five contacts."""
    f = np.asarray(per_contact_f, dtype=np.float64)
    return float(f.min() - alpha * f.var())


def score_and_select(candidates: list[GraspCandidate], force_map: ForceMap,
                     mesh: TriangleMesh, alpha: float, lam: float,
                     f_max: float | None = None
                     ) -> tuple[GraspCandidate, list[RankedGrasp]]:
    """Mode-filter, score, and pick the best grasp.

    `f_max` defaults to the strongest per-contact admissible force among
    the given candidates: the mode filter then discards grasps whose
    weakest contact falls below lambda times what the best reachable
    region offers. (Normalizing by the global per-vertex map maximum
    instead would let ungraspable features, e.g. the solid base measured
    laterally, set the scale and discard every real grasp at moderate
    lambda.) The ranked list contains survivors ordered best-first,
    followed by mode-filtered candidates (with their forces, for the
    report). Raises NoSurvivors when the filter discards everything.
    """
    if alpha < 0.0:
        raise ValueError("alpha must be >= 0")
    all_forces = [np.array([contact_admissible_force(force_map, mesh, p)
                            for p in cand.contacts])
                  for cand in candidates]
    if f_max is None:
        f_max = max((float(f.max()) for f in all_forces), default=0.0)
    threshold = lam * f_max
    survivors: list[RankedGrasp] = []
    excluded: list[RankedGrasp] = []
    for cand, forces in zip(candidates, all_forces):
        if forces.min() < threshold:
            excluded.append(RankedGrasp(cand, forces, None,
                                        filtered_out="mode_violation"))
        else:
            survivors.append(RankedGrasp(cand, forces,
                                         score_candidate(forces, alpha)))
    if not survivors:
        raise NoSurvivors(
            f"no candidate admits lambda * F_max = {threshold:.3g} N at "
            "every contact")
    survivors.sort(key=lambda r: (-r.s_f, -r.min_f, r.candidate.id))
    return survivors[0].candidate, survivors + excluded


def select_by_utility(candidates: list[GraspCandidate]) -> GraspCandidate:
    """Baseline: highest classical utility, no force-map information."""
    return max(candidates, key=lambda c: (c.utility, c.id))


def report_top_m(ranked: list[RankedGrasp], m: int, force_map: ForceMap,
                 baseline: GraspCandidate | None = None) -> dict:
    """Side-by-side report of the top-M survivors vs the utility baseline.

    Zone label = grid layer of the weakest contact. When the baseline and
    the force-map selection coincide (e.g. a constant map makes every
    candidate equivalent), the report flags it.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    survivors = [r for r in ranked if r.filtered_out is None]
    selected = survivors[0].candidate.id if survivors else None
    rows = []
    for r in survivors[:m]:
        worst = int(np.argmin(r.per_contact_f))
        h, _, _ = to_cylindrical(force_map.frame,
                                 r.candidate.contacts[worst])
        layer = force_map.layer_of_height(h)
        rows.append({
            "id": r.candidate.id,
            "zone_layer": layer,
            "zone_height": float(h),
            "f_min": r.min_f,
            "per_contact": r.per_contact_f.tolist(),
            "s_f": r.s_f,
            "utility": r.candidate.utility,
            "selected": r.candidate.id == selected,
            "baseline": baseline is not None
            and r.candidate.id == baseline.id,
        })
    excluded = [{"id": r.candidate.id, "reason": r.filtered_out,
                 "per_contact": None if r.per_contact_f is None
                 else r.per_contact_f.tolist()}
                for r in ranked if r.filtered_out is not None]
    return {
        "selected": selected,
        "baseline": None if baseline is None else baseline.id,
        "same_selection": baseline is not None and selected == baseline.id,
        "rows": rows,
        "excluded": excluded,
    }
