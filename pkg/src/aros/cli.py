"""Command-line workflows: train, index, detect, place, map, plan, eval, fixture."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import IndexConfig, load_config
from .descriptor import load_descriptor, save_descriptor, train
from .detector import detect
from .errors import ArosError
from .fixtures import FixtureKind, FixtureSpec, make_fixture
from .geometry.meshio import load_mesh, save_mesh
from .maps import AffordanceMap, MapEntry, build_map, plan_milestones
from .metrics import evaluate_batch, run_optimizer, score_body
from .placement import OptimizerConfig, place
from .scene import build_scene_index, load_scene_index, raw_sdf_grid, save_scene_index


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def _parse_point(text: str) -> np.ndarray:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected x,y,z")
    return np.array(parts)


def _read_points_csv(path):
    """Rows of x,y,z[,nx,ny,nz]; a header row is skipped if non-numeric."""
    out = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        try:
            vals = [float(v) for v in parts]
        except ValueError:
            continue  # header
        point = np.array(vals[:3])
        normal = np.array(vals[3:6]) if len(vals) >= 6 else None
        out.append((point, normal))
    return out


def _write_map_csv(amap: AffordanceMap, path):
    lines = [f"# label={amap.descriptor_label} spacing={_fmt(amap.grid_spacing)}",
             "x,y,z,accepted,kappa,best_phi"]
    for e in amap.entries:
        lines.append(",".join([_fmt(e.point[0]), _fmt(e.point[1]), _fmt(e.point[2]),
                               str(int(e.accepted)), _fmt(e.kappa), _fmt(e.best_phi)]))
    Path(path).write_text("\n".join(lines) + "\n")


def _read_map_csv(path) -> AffordanceMap:
    label = "map"
    spacing = 0.25
    entries = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line.startswith("#"):
            for token in line[1:].split():
                if token.startswith("label="):
                    label = token[6:]
                elif token.startswith("spacing="):
                    spacing = float(token[8:])
            continue
        parts = line.split(",")
        try:
            vals = [float(v) for v in parts]
        except ValueError:
            continue
        entries.append(MapEntry(np.array(vals[:3]), bool(int(vals[3])),
                                vals[4], vals[5]))
    return AffordanceMap(label, tuple(entries), spacing)


def _write_map_ply(amap: AffordanceMap, path):
    """Point cloud with accepted entries green, rejected red."""
    header = ["ply", "format ascii 1.0",
              f"element vertex {len(amap.entries)}",
              "property double x", "property double y", "property double z",
              "property uchar red", "property uchar green", "property uchar blue",
              "end_header"]
    rows = []
    for e in amap.entries:
        color = "0 200 0" if e.accepted else "200 0 0"
        rows.append(f"{float(e.point[0])!r} {float(e.point[1])!r} "
                    f"{float(e.point[2])!r} {color}")
    Path(path).write_text("\n".join(header + rows) + "\n")


def cmd_fixture(args):
    dims = {}
    if args.dims:
        for pair in args.dims.split(","):
            key, _, value = pair.partition("=")
            dims[key.strip()] = float(value)
    spec = FixtureSpec(kind=args.kind, dimensions=dims, seed=args.seed,
                       pose=args.pose)
    scene, body, p_train = make_fixture(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_mesh(scene, out / "scene.ply")
    save_mesh(body, out / "body.ply")
    (out / "p_train.json").write_text(json.dumps({
        "p_train": [float(v) for v in p_train], "kind": args.kind,
        "pose": spec.pose}))
    print(f"fixture {args.kind}: scene {scene.n_faces} faces, "
          f"body {body.n_faces} faces -> {out}")


def cmd_train(args):
    train_cfg, _, _ = load_config(args.config)
    train_cfg = replace(train_cfg, label=args.label)
    if args.max_kappa is not None:
        train_cfg = replace(train_cfg, max_kappa=args.max_kappa)
    if args.d_max is not None:
        train_cfg = replace(train_cfg, d_max=args.d_max)
    body = load_mesh(args.body)
    scene = load_mesh(args.scene)
    descriptor = train(body, scene, args.at, train_cfg, seed=args.seed)
    save_descriptor(descriptor, args.out)
    th = descriptor.thresholds
    print(f"trained {descriptor.label!r}: {descriptor.num_pv} provenance + "
          f"{descriptor.num_cv} clearance vectors; max_kappa={th.max_kappa:.3g} "
          f"max_long={th.max_long:.3g} -> {args.out}")


def cmd_index(args):
    _, index_cfg, _ = load_config(args.config)
    if args.sdf_dims:
        index_cfg = replace(index_cfg, sdf_dims=(args.sdf_dims,) * 3)
    if args.filler_radii:
        radii = tuple(float(r) for r in args.filler_radii.split(","))
        index_cfg = replace(index_cfg, filler_radii=radii)
    if args.no_fillers:
        index_cfg = replace(index_cfg, use_fillers=False)
    scene = load_mesh(args.scene)
    index = build_scene_index(scene, index_cfg, seed=args.seed)
    save_scene_index(index, args.out)
    print(f"indexed: {len(index.fillers)} fillers, augmented "
          f"{index.augmented.n_faces} faces, SDF {index.sdf.dims} -> {args.out}")


def cmd_detect(args):
    descriptor = load_descriptor(args.descriptor)
    index = load_scene_index(args.index)
    points = _read_points_csv(args.points)
    lines = ["x,y,z,accepted,best_phi,kappa,missings,collisions"]
    for point, normal in points:
        r = detect(descriptor, index, point, normal, raw=args.raw_scene_rays)
        lines.append(",".join([
            _fmt(point[0]), _fmt(point[1]), _fmt(point[2]), str(int(r.accepted)),
            _fmt(r.best_phi), _fmt(r.kappa), str(r.missing_count),
            str(r.collision_count)]))
    Path(args.out).write_text("\n".join(lines) + "\n")
    n_acc = sum(1 for line in lines[1:] if line.split(",")[3] == "1")
    print(f"detect: {n_acc}/{len(points)} accepted -> {args.out}")


def cmd_place(args):
    descriptor = load_descriptor(args.descriptor)
    index = load_scene_index(args.index)
    _, _, placement_cfg = load_config(args.config)
    result = detect(descriptor, index, args.at)
    if not result.accepted:
        print(f"rejected: kappa={result.kappa:.4g} missings={result.missing_count} "
              f"collisions={result.collision_count}", file=sys.stderr)
        return 1
    body = place(descriptor, result, args.at)
    opt = OptimizerConfig(kind=args.optimizer,
                          max_iters=placement_cfg.max_iters,
                          step_size=placement_cfg.step_size,
                          collision_weight=placement_cfg.collision_weight,
                          contact_weight=placement_cfg.contact_weight,
                          convergence_eps=placement_cfg.convergence_eps)
    body = run_optimizer(body, index, descriptor, opt)
    save_mesh(body.mesh, args.out)
    m = score_body(body, index)
    print(f"placed with {args.optimizer}: contact={m.contact} "
          f"non_collision={m.non_collision:.4f} "
          f"collision_depth={m.collision_depth * 100:.4f}cm -> {args.out}")
    return 0


def cmd_map(args):
    descriptor = load_descriptor(args.descriptor)
    index = load_scene_index(args.index)
    amap = build_map(descriptor, index, args.spacing, seed=args.seed,
                     threads=args.threads)
    _write_map_csv(amap, args.out)
    if args.ply:
        _write_map_ply(amap, args.ply)
    n_acc = sum(1 for e in amap.entries if e.accepted)
    print(f"map {descriptor.label!r}: {n_acc}/{len(amap.entries)} accepted "
          f"-> {args.out}")


def cmd_plan(args):
    walk = _read_map_csv(args.walk_map)
    goals = [_read_map_csv(p) for p in args.goal_maps.split(",")]
    waypoints = plan_milestones(walk, goals, args.start)
    lines = ["x,y,z,label"]
    for point, label in waypoints:
        lines.append(",".join([_fmt(point[0]), _fmt(point[1]), _fmt(point[2]), label]))
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"plan: {len(waypoints)} waypoints -> {args.out}")


def cmd_eval(args):
    desc_dir = Path(args.descriptors)
    paths = sorted(desc_dir.glob("*.arosad")) if desc_dir.is_dir() else [desc_dir]
    descriptors = [load_descriptor(p) for p in paths]
    index = load_scene_index(args.index)
    points = _read_points_csv(args.points)
    _, _, placement_cfg = load_config(args.config)
    opt = OptimizerConfig(kind=args.optimizer,
                          max_iters=placement_cfg.max_iters,
                          step_size=placement_cfg.step_size,
                          collision_weight=placement_cfg.collision_weight,
                          contact_weight=placement_cfg.contact_weight,
                          convergence_eps=placement_cfg.convergence_eps)
    score_sdf = raw_sdf_grid(index) if args.raw_sdf else None
    rows = evaluate_batch(descriptors, index, points, opt, score_sdf=score_sdf)
    lines = ["descriptor,accept_rate,non_collision,contact,collision_depth"]
    for r in rows:
        cd_cm = r.collision_depth * 100.0
        lines.append(",".join([r.descriptor, _fmt(r.accept_rate),
                               _fmt(r.non_collision), _fmt(r.contact),
                               _fmt(cd_cm)]))
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"eval: {len(descriptors)} descriptors x {len(points)} points "
          f"-> {args.out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aros",
        description="One-shot affordance detection: train interaction "
                    "descriptors, index scenes, detect and place bodies.")
    parser.add_argument("--seed", type=int, default=0, help="global RNG seed")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for sweeps")
    parser.add_argument("--config", default=None, help="TOML config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fixture", help="generate a synthetic scene + body")
    p.add_argument("--kind", required=True,
                   choices=[k.value for k in FixtureKind])
    p.add_argument("--out", required=True)
    p.add_argument("--dims", default="", help="comma list key=value (meters)")
    p.add_argument("--pose", default=None)
    p.set_defaults(func=cmd_fixture)

    p = sub.add_parser("train", help="train a descriptor from one example")
    p.add_argument("--body", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--at", type=_parse_point, required=True,
                   help="reference point x,y,z on the scene")
    p.add_argument("--label", default="interaction")
    p.add_argument("--out", required=True)
    p.add_argument("--max-kappa", type=float, default=None, dest="max_kappa")
    p.add_argument("--d-max", type=float, default=None, dest="d_max")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("index", help="prepare a scene for detection")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sdf-dims", type=int, default=None, dest="sdf_dims")
    p.add_argument("--filler-radii", default=None, dest="filler_radii")
    p.add_argument("--no-fillers", action="store_true", dest="no_fillers")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("detect", help="score test points against a descriptor")
    p.add_argument("--descriptor", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--points", required=True, help="CSV x,y,z[,nx,ny,nz]")
    p.add_argument("--out", required=True)
    p.add_argument("--raw-scene-rays", action="store_true", dest="raw_scene_rays")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("place", help="place and optimize the body at a point")
    p.add_argument("--descriptor", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--at", type=_parse_point, required=True)
    p.add_argument("--optimizer", default="none",
                   choices=["none", "downward", "icp", "sdfgap"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_place)

    p = sub.add_parser("map", help="affordance map over the scene surface")
    p.add_argument("--descriptor", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--spacing", type=float, default=0.25)
    p.add_argument("--out", required=True)
    p.add_argument("--ply", default=None, help="also write a colored point cloud")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("plan", help="chain milestones across affordance maps")
    p.add_argument("--walk-map", required=True, dest="walk_map")
    p.add_argument("--goal-maps", required=True, dest="goal_maps",
                   help="comma-separated map CSVs, visited in order")
    p.add_argument("--start", type=_parse_point, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("eval", help="batch plausibility evaluation")
    p.add_argument("--descriptors", required=True,
                   help="directory of .arosad files (or one file)")
    p.add_argument("--index", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--optimizer", default="sdfgap",
                   choices=["none", "downward", "icp", "sdfgap"])
    p.add_argument("--out", required=True)
    p.add_argument("--raw-sdf", action="store_true", dest="raw_sdf")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args) or 0
    except ArosError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
