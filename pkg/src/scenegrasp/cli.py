"""Command-line interface.

Exit codes: 0 success, 1 any sample/stage failure, 2 usage or config error.
Logs are JSON lines on stderr; result files are written where --out points.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import fixtures
from .contact import aggregate, render_csv, render_table
from .floor import refine_scene
from .geometry import apply_transform, load_label_table, load_mesh, write_mesh
from .pipeline import (
    PipelineConfig,
    PipelineError,
    load_dataset_manifest,
    process_sample,
    run_pipeline,
)
from .synth import Trajectory, align_walk, augment_pelvis, place_object
from .util import log_event, read_json, sample_seed, write_json_atomic, write_text_atomic
from .voxel import downward_fill, dump_grid_json, load_grid, save_grid, voxelize


class UsageError(ValueError):
    """Bad invocation or configuration; maps to exit code 2."""


def _config_from_args(args) -> PipelineConfig:
    try:
        cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
        if args.seed is not None:
            d = cfg.to_json_dict()
            d["seed"] = args.seed
            cfg = PipelineConfig.from_json_dict(d)
        if getattr(args, "jobs", None):
            d = cfg.to_json_dict()
            d["jobs"] = args.jobs
            cfg = PipelineConfig.from_json_dict(d)
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad config: {exc}") from exc
    return cfg


def _load_labeled_scene(scene_path, labels_path):
    table = load_label_table(labels_path)
    scene = load_mesh(scene_path, label_table=table)
    return scene, table


def cmd_refine_floor(args) -> int:
    cfg = _config_from_args(args)
    scene, table = _load_labeled_scene(args.scene, args.labels)
    refined, before, after = refine_scene(scene, table["floor"], cfg.refine)
    write_mesh(refined, args.out_mesh, label_names={v: k for k, v in table.items()})
    if args.stats:
        write_json_atomic(
            args.stats, {"before": before.to_json_dict(), "after": after.to_json_dict()}
        )
    log_event(
        "refine-floor",
        before_mean_abs=before.mean_abs_dev,
        after_mean_abs=after.mean_abs_dev,
    )
    return 0


def cmd_voxelize(args) -> int:
    cfg = _config_from_args(args)
    scene, table = _load_labeled_scene(args.scene, args.labels)
    solid = scene.without_label(table["floor"]) if args.exclude_floor else scene
    region = scene.aabb().padded(cfg.pen.voxel_size)
    grid = voxelize(solid, region, cfg.pen.voxel_size)
    if args.fill:
        grid = downward_fill(grid)
    save_grid(grid, args.out_grid)
    if args.json_dump:
        dump_grid_json(grid, args.json_dump)
    log_event("voxelize", dims=list(grid.dims), occupied=grid.num_occupied, filled=grid.filled)
    return 0


def cmd_align_walk(args) -> int:
    cfg = _config_from_args(args)
    scene, table = _load_labeled_scene(args.scene, args.labels)
    traj = Trajectory.load(args.trajectory)
    if args.grid:
        grid = load_grid(args.grid)
    else:
        solid = scene.without_label(table["floor"])
        grid = downward_fill(voxelize(solid, scene.aabb().padded(cfg.pen.voxel_size), cfg.pen.voxel_size))
    tf = align_walk(traj, scene, args.receptacle_label, cfg.align, grid)
    walked = traj.pelvis @ tf.rotation.T + tf.translation
    write_json_atomic(
        args.out_json,
        {
            "rotation": [[float(x) for x in row] for row in tf.rotation],
            "translation": [float(x) for x in tf.translation],
            "end_position": [float(x) for x in walked[-1]],
        },
    )
    log_event("align-walk", end_position=[float(x) for x in walked[-1]])
    return 0


def cmd_place_object(args) -> int:
    cfg = _config_from_args(args)
    scene, _ = _load_labeled_scene(args.scene, args.labels)
    obj = load_mesh(args.object)
    end = np.array([float(v) for v in args.end_position.split(",")])
    result = place_object(scene, args.receptacle_label, end, obj, cfg.place)
    write_json_atomic(args.out_json, result.to_json_dict())
    if args.out_mesh:
        write_mesh(apply_transform(obj, result.pose), args.out_mesh)
    log_event("place-object", support_point=[float(x) for x in result.support_point])
    return 0


def cmd_augment_pelvis(args) -> int:
    cfg = _config_from_args(args)
    scene, table = _load_labeled_scene(args.scene, args.labels)
    placed = load_mesh(args.placed_object)
    receptacle = scene.submesh(scene.faces_with_label(args.receptacle_label))
    if args.grid:
        grid = load_grid(args.grid)
    else:
        solid = scene.without_label(table["floor"])
        grid = downward_fill(voxelize(solid, scene.aabb().padded(cfg.pen.voxel_size), cfg.pen.voxel_size))
    pelvis = np.array([float(v) for v in args.original_pelvis.split(",")])
    result = augment_pelvis(grid, placed, receptacle, pelvis, cfg.augment, cfg.seed)
    write_json_atomic(
        args.out_json,
        {
            "candidates": [c.to_json_dict() for c in result.candidates],
            "counts": result.counts,
            "seed": result.seed,
        },
    )
    log_event("augment-pelvis", **result.counts)
    return 0


def cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    samples, base = load_dataset_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    failures = 0
    from .contact import MetricsReport

    reports: list[MetricsReport] = []
    lines = []
    for sample in samples:
        try:
            result = process_sample(sample, base, cfg, out)
            for fr in result["frames"]:
                lines.append(fr)
            failures += len(result["failed_frames"])
            write_json_atomic(out / f"{sample.sample_id}.json", result)
        except Exception as exc:
            failures += 1
            log_event("eval.sample_failed", sample_id=sample.sample_id, error=str(exc))
    for fr in lines:
        reports.append(
            MetricsReport(
                sample_id=fr["sample_id"],
                scene_pen=fr["scene_pen"],
                floor_pen=fr["floor_pen"],
                object_pen_sdf=fr["object_pen_sdf"],
                object_pen_negative=fr["object_pen_negative"],
                object_contact=(fr["object_precision"], fr["object_recall"], fr["object_f1"]),
                floor_contact=(fr["floor_precision"], fr["floor_recall"], fr["floor_f1"]),
            )
        )
    if reports:
        from .util import canonical_json

        write_text_atomic(
            out / "frames.jsonl",
            "".join(canonical_json(r.to_json_dict()) for r in reports),
        )
        row = aggregate(reports, args.label)
        write_text_atomic(out / "aggregate.csv", render_csv([row]))
        write_text_atomic(out / "aggregate.txt", render_table([row]))
        sys.stdout.write(render_table([row]))
    return 1 if failures else 0


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    summary = run_pipeline(args.manifest, cfg, args.out, jobs=args.jobs, method_label=args.label)
    log_event("run.summary", **{k: v for k, v in summary.items() if k != "config"})
    return 1 if summary["failed"] else 0


def cmd_gen_fixtures(args) -> int:
    params = {}
    if args.kind == "graded-penetration":
        if args.scene_target is not None:
            params["scene_target"] = args.scene_target
        if args.floor_target is not None:
            params["floor_target"] = args.floor_target
    if args.kind == "dataset" and args.samples:
        params["samples"] = args.samples
    gt = fixtures.gen_fixture(args.kind, args.seed if args.seed is not None else 0, args.out, **params)
    log_event("gen-fixtures", fixture_kind=args.kind, out=str(args.out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scenegrasp", description=__doc__)
    p.add_argument("--config", help="pipeline config JSON", default=None)
    p.add_argument("--seed", type=int, default=None)
    # the same flags are accepted after the subcommand; SUPPRESS keeps the
    # subparser from clobbering values parsed by the main parser
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True, parser_class=lambda **kw: argparse.ArgumentParser(parents=[common], **kw))

    s = sub.add_parser("refine-floor", help="align a scene floor to z=0")
    s.add_argument("--scene", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--out", dest="out_mesh", required=True)
    s.add_argument("--stats", default=None)
    s.set_defaults(fn=cmd_refine_floor)

    s = sub.add_parser("voxelize", help="occupancy grid of a scene")
    s.add_argument("--scene", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--out", dest="out_grid", required=True)
    s.add_argument("--fill", action="store_true", help="apply the downward fill rule")
    s.add_argument("--no-exclude-floor", dest="exclude_floor", action="store_false")
    s.add_argument("--json-dump", default=None, help="also write a JSON debug dump")
    s.set_defaults(fn=cmd_voxelize, exclude_floor=True)

    s = sub.add_parser("align-walk", help="fit a walking trajectory into a scene")
    s.add_argument("--scene", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--trajectory", required=True)
    s.add_argument("--receptacle-label", type=int, required=True)
    s.add_argument("--grid", default=None, help="precomputed filled voxel grid")
    s.add_argument("--out", dest="out_json", required=True)
    s.set_defaults(fn=cmd_align_walk)

    s = sub.add_parser("place-object", help="rest an object on a receptacle")
    s.add_argument("--scene", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--object", required=True)
    s.add_argument("--receptacle-label", type=int, required=True)
    s.add_argument("--end-position", required=True, help="x,y,z of the final pelvis")
    s.add_argument("--out", dest="out_json", required=True)
    s.add_argument("--out-mesh", default=None, help="write the placed object mesh")
    s.set_defaults(fn=cmd_place_object)

    s = sub.add_parser("augment-pelvis", help="sample alternative grasp-target pelvis positions")
    s.add_argument("--scene", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--placed-object", required=True)
    s.add_argument("--receptacle-label", type=int, required=True)
    s.add_argument("--original-pelvis", required=True, help="x,y,z")
    s.add_argument("--grid", default=None)
    s.add_argument("--out", dest="out_json", required=True)
    s.set_defaults(fn=cmd_augment_pelvis)

    s = sub.add_parser("eval", help="evaluate a dataset manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--label", default="toolkit")
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("run", help="full pipeline over a dataset manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=None)
    s.add_argument("--label", default="pipeline")
    s.set_defaults(fn=cmd_run)

    s = sub.add_parser("gen-fixtures", help="generate synthetic test fixtures")
    s.add_argument("--kind", required=True, choices=fixtures.KINDS)
    s.add_argument("--out", required=True)
    s.add_argument("--samples", type=int, default=None, help="dataset kind: sample count")
    s.add_argument("--scene-target", type=float, default=None)
    s.add_argument("--floor-target", type=float, default=None)
    s.set_defaults(fn=cmd_gen_fixtures)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (UsageError, PipelineError, FileNotFoundError) as exc:
        # invalid invocation, config, dataset manifest, or named input file
        log_event("error", error=str(exc), kind=type(exc).__name__)
        return 2
    except Exception as exc:
        log_event("error", error=str(exc), kind=type(exc).__name__)
        return 1


if __name__ == "__main__":
    sys.exit(main())
