"""Command-line entry point: ``reefscale <subcommand> [flags]``.

Exit status is 0 on success, 1 on data errors and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from reefscale import io, metrics, synth
from reefscale.association import assign_images_to_tiles, classify_tiles
from reefscale.errors import ReefscaleError
from reefscale.geometry import Bounds, project_footprint
from reefscale.pipeline import (
    PipelineConfig,
    emit_prediction_map,
    load_inputs,
    run_pipeline,
    write_outputs,
    write_prediction_map,
)
from reefscale.split import split_report, temporal_split
from reefscale.tiling import OrthophotoMeta, build_tile_grid, extract_tile, is_black_tile

logger = logging.getLogger("reefscale")

SUBCOMMANDS = ("footprints", "tile", "associate", "aggregate", "split", "eval", "map", "simulate", "run")


def _ratios(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.replace(":", ",").split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ratios {text!r}; expected e.g. 0.6,0.2,0.2") from None
    return values


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON pipeline config; flags below override it")
    p.add_argument("--out", help="output directory (or file for eval)")
    p.add_argument("--seed", type=int)
    p.add_argument("--method", choices=("hard", "weighted", "distilled"))
    p.add_argument("--tile-side", type=float, dest="tile_side_m")
    p.add_argument("--coverage-threshold", type=float)
    p.add_argument("--no-coverage-filter", action="store_true", help="keep tiles regardless of footprint coverage")
    p.add_argument("--coverage-neighbors", action="store_true", help="count footprints of images assigned to other tiles")
    p.add_argument("--black-threshold", type=float)
    p.add_argument("--threshold", type=float, help="binarization threshold (AUC positive threshold for eval)")
    p.add_argument("--ratios", type=_ratios, help="train,val,test split ratios")
    p.add_argument("--min-count", type=int)
    p.add_argument("--fov-h", type=float)
    p.add_argument("--fov-v", type=float)
    p.add_argument("--ortho", dest="orthophoto")
    p.add_argument("--images", dest="images_csv")
    p.add_argument("--predictions", dest="predictions_csv")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reefscale", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="{" + ",".join(SUBCOMMANDS) + "}")

    p = sub.add_parser("footprints", help="project image footprints to GeoJSON")
    _common(p)
    p = sub.add_parser("tile", help="tile the orthophoto and flag black tiles")
    _common(p)
    p = sub.add_parser("associate", help="assign images to tiles and classify tiles")
    _common(p)
    p = sub.add_parser("aggregate", help="write the tile label manifest")
    _common(p)
    p = sub.add_parser("run", help="full pipeline: manifest, summary and footprints")
    _common(p)
    p = sub.add_parser("split", help="temporal multilabel train/val/test split")
    _common(p)
    p.add_argument("--samples", required=True, help="CSV sample_id,group_key,labels")
    p = sub.add_parser("eval", help="compare tile labels with predictions")
    _common(p)
    p.add_argument("--labels", required=True, help="reference labels (CSV or manifest .jsonl)")
    p.add_argument("--preds", required=True, help="predicted scores (CSV or manifest .jsonl)")
    p = sub.add_parser("map", help="write per-class prediction rasters")
    _common(p)
    p.add_argument("--scores", required=True, help="per-tile scores (CSV or manifest .jsonl)")
    p.add_argument("--class", dest="classes", action="append", help="class to map (repeatable; default all)")
    p = sub.add_parser("simulate", help="write a synthetic survey fixture")
    _common(p)
    p.add_argument("--n-regions", type=int, default=10)
    p.add_argument("--classes", default="Sand,Rock,Acropore_tabular")
    p.add_argument("--attitude-noise", type=float, default=0.0, help="deg")
    p.add_argument("--position-noise", type=float, default=0.0, help="m")
    p.add_argument("--teacher-noise", type=float, default=0.0)
    p.add_argument("--size", type=float, default=30.0, help="scene side length, m")
    p.add_argument("--gsd", type=float, default=0.05)
    return parser


_OVERRIDES = (
    "seed",
    "method",
    "tile_side_m",
    "coverage_threshold",
    "black_threshold",
    "min_count",
    "fov_h",
    "fov_v",
    "orthophoto",
    "images_csv",
    "predictions_csv",
)


def make_config(args) -> PipelineConfig:
    if args.config:
        cfg = PipelineConfig.load(args.config).to_dict()
    else:
        cfg = {}
    for name in _OVERRIDES:
        value = getattr(args, name, None)
        if value is not None:
            cfg[name] = value
    if args.threshold is not None and args.command != "eval":
        cfg["binarize_threshold"] = args.threshold
    if args.ratios is not None:
        cfg["split_ratios"] = args.ratios
    if args.no_coverage_filter:
        cfg["coverage_filter"] = False
    if args.coverage_neighbors:
        cfg["coverage_neighbors"] = True
    if args.out is not None and args.command != "eval":
        cfg["out_dir"] = args.out
    return PipelineConfig.from_dict(cfg)


def cmd_footprints(args, cfg: PipelineConfig) -> None:
    cfg.require("images_csv")
    records = io.read_images(cfg.images_csv)
    fps = [project_footprint(r.camera_position, r.depth, r.attitude, cfg.camera, r.image_id) for r in records]
    path = Path(cfg.out_dir) / "footprints.geojson"
    io.atomic_write_text(path, io.dump_json(io.footprints_geojson(fps)))
    print(path)


def cmd_tile(args, cfg: PipelineConfig) -> None:
    cfg.require("orthophoto")
    ortho, meta = io.load_orthophoto(cfg.orthophoto, cfg.world_file or None, cfg.crs_file or None)
    grid = build_tile_grid(meta, cfg.tile_side_m)
    props = {t.tile_id: {"black": is_black_tile(extract_tile(ortho, t), cfg.black_threshold)} for t in grid.tiles}
    path = Path(cfg.out_dir) / "tiles.geojson"
    io.atomic_write_text(path, io.dump_json(io.tiles_geojson(grid.tiles, props, meta.crs_id)))
    print(f"{path}: {len(grid.tiles)} tiles, {grid.partial_edge} partial edge tiles dropped")


def cmd_associate(args, cfg: PipelineConfig) -> None:
    ortho, meta, records = load_inputs(cfg)
    grid = build_tile_grid(meta, cfg.tile_side_m)
    black = {t.tile_id: is_black_tile(extract_tile(ortho, t), cfg.black_threshold) for t in grid.tiles}
    fps = {r.image_id: project_footprint(r.camera_position, r.depth, r.attitude, cfg.camera, r.image_id) for r in records}
    assoc = assign_images_to_tiles(records, grid.tiles)
    status = classify_tiles(
        grid.tiles, assoc, fps, cfg.coverage_threshold, black, cfg.coverage_grid_n, cfg.coverage_filter,
        cfg.coverage_neighbors,
    )
    doc = {
        "tiles": {t.tile_id: {"status": status[t.tile_id], "images": assoc.images_for(t.tile_id)} for t in grid.tiles},
        "unassigned": assoc.unassigned,
    }
    path = Path(cfg.out_dir) / "association.json"
    io.atomic_write_text(path, io.dump_json(doc))
    print(path)


def cmd_aggregate(args, cfg: PipelineConfig) -> None:
    result = run_pipeline(cfg)
    path = Path(cfg.out_dir) / "manifest.jsonl"
    io.atomic_write_text(path, io.manifest_text(result.manifest))
    print(f"{path}: {len(result.manifest)} tiles")


def cmd_run(args, cfg: PipelineConfig) -> None:
    ortho, meta, records = load_inputs(cfg)
    result = run_pipeline(cfg, ortho, meta, records)
    paths = write_outputs(result, cfg.out_dir, meta.crs_id)
    s = result.summary
    print(
        f"{paths['manifest.jsonl']}: kept {s['kept']} of {s['tiles_total']} tiles "
        f"(black {s['dropped_black']}, no images {s['dropped_no_images']}, "
        f"low coverage {s['dropped_low_coverage']}, partial edge {s['dropped_partial_edge']})"
    )


def cmd_split(args, cfg: PipelineConfig) -> None:
    samples = io.read_samples_csv(args.samples)
    assignment = temporal_split(samples, cfg.split_ratios, cfg.seed)
    report = split_report(assignment, samples)
    out = Path(cfg.out_dir)
    io.atomic_write_text(
        out / "split.csv",
        io.csv_text(["sample_id", "subset"], ([s.sample_id, assignment[s.sample_id]] for s in samples)),
    )
    io.atomic_write_text(
        out / "split_report.csv",
        io.csv_text(
            ["class", "train_freq", "val_freq", "test_freq", "total"],
            ([c, f"{tr:.6f}", f"{va:.6f}", f"{te:.6f}", n] for c, (tr, va, te, n) in report.items()),
        ),
    )
    print(out / "split.csv")


def cmd_eval(args, cfg: PipelineConfig) -> None:
    reference = io.read_tile_values(args.labels)
    predicted = io.read_tile_values(args.preds)
    pairs = metrics.pair_scores(reference, predicted)
    threshold = args.threshold if args.threshold is not None else metrics.DEFAULT_POSITIVE_THRESHOLD
    text = metrics.format_report(metrics.metric_report(pairs, threshold))
    if args.out:
        io.atomic_write_text(args.out, text)
    sys.stdout.write(text)


def cmd_map(args, cfg: PipelineConfig) -> None:
    cfg.require("orthophoto")
    _, meta = io.load_orthophoto(cfg.orthophoto, cfg.world_file or None, cfg.crs_file or None)
    grid = build_tile_grid(meta, cfg.tile_side_m)
    scores = io.read_tile_values(args.scores)
    classes = args.classes or sorted({c for row in scores.values() for c in row})
    rasters = {cls: emit_prediction_map(scores, grid, cls) for cls in classes}
    for cls, raster in rasters.items():
        path = Path(cfg.out_dir) / f"{cls}.png"
        write_prediction_map(path, raster, grid)
        print(path)


def cmd_simulate(args, cfg: PipelineConfig) -> None:
    out = Path(cfg.out_dir)
    class_list = tuple(c for c in args.classes.split(",") if c)
    e0, n0 = synth.DEFAULT_EXTENT.min_e, synth.DEFAULT_EXTENT.min_n
    extent = Bounds(e0, n0, e0 + args.size, n0 + args.size)
    noise = synth.SurveyNoise(args.attitude_noise, args.position_noise, args.teacher_noise)
    fx = synth.build_fixture(
        seed=cfg.seed, extent=extent, n_regions=args.n_regions, class_list=class_list,
        gsd=args.gsd, cam=cfg.camera, noise=noise,
    )
    meta = OrthophotoMeta(fx.ortho.shape[1], fx.ortho.shape[0], fx.gsd, (extent.min_e, extent.max_n), "EPSG:32740")
    grid = build_tile_grid(meta, cfg.tile_side_m)
    truth = synth.oracle_tile_labels(fx.scene, grid.tiles)
    io.save_orthophoto(out / "ortho.png", fx.ortho, meta)
    io.atomic_write_text(out / "images.csv", io.images_csv_text(fx.records))
    io.atomic_write_text(out / "predictions.csv", io.predictions_csv_text(fx.records))
    io.atomic_write_text(out / "ground_truth.csv", io.labels_csv_text(truth))
    io.atomic_write_text(out / "scene.json", io.dump_json(fx.scene.to_dict()))
    run_cfg = {
        "orthophoto": "ortho.png",
        "images_csv": "images.csv",
        "predictions_csv": "predictions.csv",
        "out_dir": "run",
        "tile_side_m": cfg.tile_side_m,
        "fov_h": cfg.fov_h,
        "fov_v": cfg.fov_v,
        "min_count": 0,
        "seed": cfg.seed,
    }
    io.atomic_write_text(out / "config.json", json.dumps(run_cfg, indent=1, sort_keys=True) + "\n")
    print(f"{out}: {len(fx.records)} images, {len(fx.scene.regions)} regions, {len(grid.tiles)} tiles")


COMMANDS = {
    "footprints": cmd_footprints,
    "tile": cmd_tile,
    "associate": cmd_associate,
    "aggregate": cmd_aggregate,
    "run": cmd_run,
    "split": cmd_split,
    "eval": cmd_eval,
    "map": cmd_map,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(args)
    except (ValueError, TypeError) as exc:
        parser.error(str(exc))
    except OSError as exc:
        print(f"reefscale {args.command}: {exc}", file=sys.stderr)
        return 1
    try:
        COMMANDS[args.command](args, cfg)
    except (ReefscaleError, ValueError, KeyError, OSError) as exc:
        print(f"reefscale {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
