"""Command-line interface: parse | forcemap | rank | grip | pipeline.

Each stage is runnable standalone on the previous stage's file artifacts,
and `pipeline` chains the same stage functions, so composed and one-shot
runs produce identical bytes.

Exit codes: 0 success, 2 validation error, 3 no mechanically safe grasp
for the requested interaction mode, 4 grip failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .commands import CommandError, Lexicon, parse_command
from .config import ConfigError, PipelineConfig, build_manifest, dump_json
from .forcemap import (ForceMap, MaterialModel, build_force_map,
                       detect_reinforced_layers, project_to_vertices,
                       COLOR_CHANNEL, FORCE_CHANNEL)
from .frame import DegenerateGeometry, compute_frame
from .gripsim import ImpedanceParams, run_grip
from .mesh import MeshError, TriangleMesh, export_colored_ply, load_mesh
from .ranking import (GraspCandidate, NoSurvivors, SchemaError,
                      functional_filter, load_candidates, report_top_m,
                      score_and_select, select_by_utility,
                      validate_candidate)
from .thickness import (AllCellsInvalid, build_thickness_grid, refine_edges)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NO_SAFE_GRASP = 3
EXIT_GRIP_FAILURE = 4


class StageError(Exception):
    def __init__(self, stage: str, cause: Exception, exit_code: int):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.exit_code = exit_code


# ----------------------------------------------------------------------
# Stage functions (shared by subcommands and the pipeline)
# ----------------------------------------------------------------------
def stage_parse(text: str, lexicon_path: str | None):
    try:
        lexicon = Lexicon.load(lexicon_path)
        return parse_command(text, lexicon)
    except (CommandError, OSError, ValueError, KeyError) as exc:
        raise StageError("parse", exc, EXIT_VALIDATION) from exc


def stage_forcemap(config: PipelineConfig, object_id: str,
                   out_dir: str) -> tuple[TriangleMesh, ForceMap, dict]:
    try:
        mesh = load_mesh(config.mesh, scale=config.scale)
        frame = compute_frame(mesh)
        grid = build_thickness_grid(
            mesh, frame, layers=config.grid.layers, bins=config.grid.bins,
            probes=config.grid.probes, seed=config.seed)
        grid = refine_edges(grid, mesh, frame, probes=config.grid.probes,
                            n_edge=config.grid.n_edge)
        material = config.material_for(object_id)
        reinforced = detect_reinforced_layers(
            grid, material, prominence=config.force.prominence,
            beta=config.force.beta)
        force_map = build_force_map(grid, reinforced, material,
                                    object_id=object_id, frame=frame,
                                    sigma=config.force.sigma_b)
        force_map = project_to_vertices(force_map, mesh)
    except (MeshError, DegenerateGeometry, AllCellsInvalid, ConfigError,
            OSError, ValueError) as exc:
        raise StageError("forcemap", exc, EXIT_VALIDATION) from exc
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "forcemap": os.path.join(out_dir, "forcemap.json"),
        "thickness": os.path.join(out_dir, "thickness.json"),
        "colored_ply": os.path.join(out_dir, "forcemap.ply"),
    }
    dump_json(force_map.to_dict(), paths["forcemap"])
    dump_json(grid.to_dict(), paths["thickness"])
    export_colored_ply(mesh, FORCE_CHANNEL, paths["colored_ply"])
    return mesh, force_map, paths


def load_forcemap(path: str) -> ForceMap:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return ForceMap.from_dict(json.load(fh))
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise StageError("forcemap", exc, EXIT_VALIDATION) from exc


def stage_rank(mesh: TriangleMesh, force_map: ForceMap,
               candidates_path: str, config: PipelineConfig, lam: float,
               out_dir: str):
    try:
        candidates, rejected = load_candidates(candidates_path)
        for line in rejected:
            print(f"rank: rejected {line}", file=sys.stderr)
        kept = functional_filter(candidates, config.ranking.tau_f)
        if not kept:
            raise NoSurvivors("no candidate passes the functional filter")
        baseline = select_by_utility(kept)
        selected, ranked = score_and_select(
            kept, force_map, mesh, alpha=config.ranking.alpha, lam=lam)
        report = report_top_m(ranked, config.ranking.top_m, force_map,
                              baseline=baseline)
    except SchemaError as exc:
        raise StageError("rank", exc, EXIT_VALIDATION) from exc
    except NoSurvivors as exc:
        raise StageError("rank", exc, EXIT_NO_SAFE_GRASP) from exc
    except (MeshError, OSError, ValueError) as exc:
        raise StageError("rank", exc, EXIT_VALIDATION) from exc
    report["lambda"] = lam
    report["alpha"] = config.ranking.alpha
    report["tau_f"] = config.ranking.tau_f
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "ranking": os.path.join(out_dir, "ranking_report.json"),
        "selected_grasp": os.path.join(out_dir, "selected_grasp.json"),
    }
    dump_json(report, paths["ranking"])
    dump_json(selected.to_dict(), paths["selected_grasp"])
    return selected, report, paths


def stage_grip(mesh: TriangleMesh, force_map: ForceMap,
               grasp: GraspCandidate, config: PipelineConfig,
               object_id: str, mode: str, lam: float, out_dir: str,
               write_trace: bool = False):
    try:
        physics = config.physics_for(object_id)
        params = config.grip_params_for(object_id)
        report = run_grip(force_map, mesh, grasp, mode, lam, physics.mass,
                          physics.mu, params, duration=config.grip_duration)
    except (ConfigError, ValueError) as exc:
        raise StageError("grip", exc, EXIT_VALIDATION) from exc
    os.makedirs(out_dir, exist_ok=True)
    paths = {"grip": os.path.join(out_dir, "grip_report.json")}
    dump_json(report.to_dict(), paths["grip"])
    if write_trace:
        paths["trace"] = os.path.join(out_dir, "grip_trace.csv")
        header = "t," + ",".join(f"f{k}" for k in range(5))
        data = np.column_stack([report.times, report.trace_f])
        np.savetxt(paths["trace"], data, delimiter=",", header=header,
                   comments="")
    return report, paths


def load_grasp(path: str) -> GraspCandidate:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        if isinstance(data, list):
            data = data[0]
        return validate_candidate(data, 0)
    except (OSError, json.JSONDecodeError, IndexError, SchemaError) as exc:
        raise StageError("grip", exc, EXIT_VALIDATION) from exc


def run_pipeline(config: PipelineConfig, text: str) -> int:
    command = stage_parse(text, config.lexicon)
    out = config.out
    mesh, force_map, paths = stage_forcemap(config, command.object_id, out)
    selected, report, rank_paths = stage_rank(
        mesh, force_map, config.candidates, config, command.lam, out)
    paths.update(rank_paths)
    grip_report, grip_paths = stage_grip(
        mesh, force_map, selected, config, command.object_id, "ours",
        command.lam, out)
    paths.update(grip_paths)
    manifest = build_manifest(config, command.to_dict(), paths)
    dump_json(manifest, os.path.join(out, "manifest.json"))
    print(json.dumps({
        "command": command.to_dict(),
        "selected": selected.id,
        "grip_success": grip_report.success,
        "margin": grip_report.margin,
        "out": out,
    }, indent=2, sort_keys=True))
    return EXIT_OK if grip_report.success else EXIT_GRIP_FAILURE


# ----------------------------------------------------------------------
# Argument parsing
# ----------------------------------------------------------------------
def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gripmap",
        description="Admissible contact-force maps for thin-walled objects")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("parse", help="parse an operator command")
    p.add_argument("--text", required=True)
    p.add_argument("--lexicon", default=None)

    p = sub.add_parser("forcemap", help="build the admissible-force map")
    p.add_argument("--mesh", required=True)
    p.add_argument("--object", required=True,
                   help="object id for material lookup, e.g. paper_cup")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="out")

    p = sub.add_parser("rank", help="re-rank grasp candidates")
    p.add_argument("--mesh", required=True)
    p.add_argument("--forcemap", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--tau-f", type=float, default=None)
    p.add_argument("--top", type=int, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=0.7)
    p.add_argument("--out", default="out")

    p = sub.add_parser("grip", help="simulate grip execution")
    p.add_argument("--mesh", required=True)
    p.add_argument("--forcemap", required=True)
    p.add_argument("--grasp", required=True)
    p.add_argument("--object", required=True)
    p.add_argument("--mode", default="ours",
                   choices=("under", "over", "fixed", "ours"))
    p.add_argument("--lambda", dest="lam", type=float, default=0.7)
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--trace", action="store_true",
                   help="also write the per-step force trace CSV")
    p.add_argument("--out", default="out")

    p = sub.add_parser("pipeline", help="run all stages end to end")
    p.add_argument("--config", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    return ap


def _load_config(args, **overrides) -> PipelineConfig:
    try:
        config = PipelineConfig.load(args.config) if args.config \
            else PipelineConfig()
    except ConfigError as exc:
        raise StageError("config", exc, EXIT_VALIDATION) from exc
    updates = {k: v for k, v in overrides.items() if v is not None}
    if updates:
        data = config.to_dict()
        for key, value in updates.items():
            if isinstance(value, dict):
                data[key] = {**data.get(key, {}), **value}
            else:
                data[key] = value
        config = PipelineConfig.from_dict(data)
    return config


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.cmd == "parse":
            command = stage_parse(args.text, args.lexicon)
            print(json.dumps(command.to_dict(), indent=2, sort_keys=True))
            return EXIT_OK

        if args.cmd == "forcemap":
            config = _load_config(args, mesh=args.mesh, seed=args.seed)
            _, _, paths = stage_forcemap(config, args.object, args.out)
            print(json.dumps(paths, indent=2, sort_keys=True))
            return EXIT_OK

        if args.cmd == "rank":
            ranking = {}
            if args.alpha is not None:
                ranking["alpha"] = args.alpha
            if args.tau_f is not None:
                ranking["tau_f"] = args.tau_f
            if args.top is not None:
                ranking["top_m"] = args.top
            config = _load_config(args, mesh=args.mesh,
                                  candidates=args.candidates,
                                  ranking=ranking or None)
            mesh = _load_stage_mesh(config)
            force_map = load_forcemap(args.forcemap)
            _check_map_matches(force_map, mesh)
            _, report, paths = stage_rank(mesh, force_map, args.candidates,
                                          config, args.lam, args.out)
            print(json.dumps({"selected": report["selected"],
                              **paths}, indent=2, sort_keys=True))
            return EXIT_OK

        if args.cmd == "grip":
            config = _load_config(args, mesh=args.mesh,
                                  grip_duration=args.duration)
            mesh = _load_stage_mesh(config)
            force_map = load_forcemap(args.forcemap)
            _check_map_matches(force_map, mesh)
            grasp = load_grasp(args.grasp)
            report, paths = stage_grip(mesh, force_map, grasp, config,
                                       args.object, args.mode, args.lam,
                                       args.out, write_trace=args.trace)
            print(json.dumps({"success": report.success,
                              "margin": report.margin,
                              "violations": report.violations,
                              **paths}, indent=2, sort_keys=True))
            return EXIT_OK if report.success else EXIT_GRIP_FAILURE

        if args.cmd == "pipeline":
            config = _load_config(args, seed=args.seed, out=args.out)
            return run_pipeline(config, args.text)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    raise AssertionError("unreachable")


def _load_stage_mesh(config: PipelineConfig) -> TriangleMesh:
    try:
        return load_mesh(config.mesh, scale=config.scale)
    except (MeshError, OSError) as exc:
        raise StageError("mesh", exc, EXIT_VALIDATION) from exc


def _check_map_matches(force_map: ForceMap, mesh: TriangleMesh) -> None:
    if force_map.per_vertex is not None \
            and len(force_map.per_vertex) != len(mesh.vertices):
        raise StageError(
            "forcemap",
            ValueError(
                f"force map has {len(force_map.per_vertex)} per-vertex "
                f"values but the mesh has {len(mesh.vertices)} vertices"),
            EXIT_VALIDATION)


if __name__ == "__main__":
    sys.exit(main())
