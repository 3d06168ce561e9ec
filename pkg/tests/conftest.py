"""Shared fixtures: fixture meshes and fully built force maps.

Map construction (probe + refine + calibrate + project) costs a few
seconds per object, so built objects are session-scoped and shared.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from gripmap import fixtures
from gripmap.forcemap import (DEFAULT_MATERIALS, ForceMap, MaterialModel,
                              ZoneSpec, build_force_map, calibrate_material,
                              detect_reinforced_layers, project_to_vertices)
from gripmap.frame import PrincipalFrame, compute_frame
from gripmap.mesh import TriangleMesh
from gripmap.thickness import ThicknessGrid, build_thickness_grid, refine_edges


@dataclass
class BuiltObject:
    object_id: str
    mesh: TriangleMesh
    frame: PrincipalFrame
    grid: ThicknessGrid
    material: MaterialModel
    force_map: ForceMap
    residuals: dict[str, float]
    zones: dict[str, ZoneSpec]


def build_object(object_id: str, layers: int = 32, bins: int = 64,
                 probes: int = 3, seed: int = 0) -> BuiltObject:
    entry = fixtures.OBJECT_CATALOG[object_id]
    mesh = fixtures.object_mesh(object_id)
    frame = compute_frame(mesh)
    grid = build_thickness_grid(mesh, frame, layers=layers, bins=bins,
                                probes=probes, seed=seed)
    grid = refine_edges(grid, mesh, frame, probes=probes)
    zones = {name: ZoneSpec(name, lo, hi)
             for name, lo, hi, _ in entry["zone_targets"]}
    targets = [(zones[name], t) for name, lo, hi, t in entry["zone_targets"]]
    material, residuals = calibrate_material(
        targets, grid, DEFAULT_MATERIALS[entry["material"]])
    reinforced = detect_reinforced_layers(grid, material)
    force_map = build_force_map(grid, reinforced, material,
                                object_id=object_id, frame=frame)
    force_map = project_to_vertices(force_map, mesh)
    return BuiltObject(object_id=object_id, mesh=mesh, frame=frame,
                       grid=grid, material=material, force_map=force_map,
                       residuals=residuals, zones=zones)


@pytest.fixture(scope="session")
def annulus_mesh() -> TriangleMesh:
    return fixtures.annulus()


@pytest.fixture(scope="session")
def annulus_frame(annulus_mesh) -> PrincipalFrame:
    return compute_frame(annulus_mesh)


@pytest.fixture(scope="session")
def annulus_grid(annulus_mesh, annulus_frame) -> ThicknessGrid:
    return build_thickness_grid(annulus_mesh, annulus_frame,
                                layers=32, bins=64, probes=3, seed=0)


@pytest.fixture(scope="session")
def paper_cup() -> BuiltObject:
    return build_object("paper_cup")


@pytest.fixture(scope="session")
def plastic_cup() -> BuiltObject:
    return build_object("plastic_cup")


@pytest.fixture(scope="session")
def goblet() -> BuiltObject:
    return build_object("glass_goblet")


def grip_grasp(built: BuiltObject):
    """The frozen grip-scenario grasp for a built object."""
    from gripmap.ranking import validate_candidate

    entry = fixtures.OBJECT_CATALOG[built.object_id]
    contacts = fixtures.contact_ring(built.mesh, built.frame,
                                     entry["grip_heights"])
    return validate_candidate(
        fixtures.make_candidate("g_grip", contacts, utility=0.9), 0)


def selection_set(built: BuiltObject):
    from gripmap.ranking import validate_candidate

    entry = fixtures.OBJECT_CATALOG[built.object_id]
    dicts = fixtures.selection_candidates(built.mesh, built.frame,
                                          **entry["selection_heights"])
    return [validate_candidate(d, i) for i, d in enumerate(dicts)]
