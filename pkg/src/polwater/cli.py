"""Command-line entry point: synth, train, detect, eval, curves, run, import-field."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, PipelineConfig
from .dataset import CameraConstants, DatasetManifest, ManifestError, import_field_dataset, \
    write_synthetic_dataset
from .features import FEATURE_SETS
from .fixtures import SpecError, specs_from_document
from .gmm import GmmError
from .optics import emit_model_curves
from .pipeline import (PipelineError, check_masks, detect_manifest, evaluate_detections, load_models,
                       save_models, train_models, _map)
from .stereo import PlaneFitError
from .synth import render

log = logging.getLogger("polwater")

USAGE_ERRORS = (ConfigError, SpecError, ManifestError)
RUN_ERRORS = (PipelineError, GmmError, PlaneFitError, OSError, ValueError)


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if getattr(args, "config", None) else PipelineConfig()
    over = {}
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    if getattr(args, "feature_set", None) is not None:
        over["feature_set"] = args.feature_set
    return dataclasses.replace(cfg, **over) if over else cfg


def cmd_synth(args) -> dict:
    try:
        doc = json.loads(Path(args.spec).read_text())
    except json.JSONDecodeError as exc:
        raise SpecError("<root>", f"invalid JSON: {exc}") from None
    if args.seed is not None:
        doc["seed"] = args.seed
    specs, splits = specs_from_document(doc)
    frames = _map(render, specs, args.threads)
    manifest = write_synthetic_dataset(frames, splits, args.out)
    return {"frames": len(frames), "manifest": str(Path(args.out) / "manifest.json"),
            "train": len(manifest.split("train")), "test": len(manifest.split("test"))}


def cmd_train(args) -> dict:
    cfg = _config(args)
    manifest = DatasetManifest.load(args.manifest)
    check_masks(manifest, "train")
    out = Path(args.models)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json())
    (out / "run.log").write_text("")
    water, not_water, meta = train_models(manifest, cfg, args.threads, run_log=out / "run.log")
    save_models(water, not_water, out)
    return {"models": str(out), "descriptor": water.descriptor, "frames": meta["frames"],
            "skipped": meta["skipped"]}


def cmd_detect(args) -> dict:
    cfg = _config(args)
    manifest = DatasetManifest.load(args.manifest)
    water, not_water = load_models(args.models)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    split = None if args.split == "all" else args.split
    (out / "run.log").write_text("")
    summary = detect_manifest(manifest, water, not_water, cfg, out, split, args.threads,
                              run_log=out / "run.log")
    return {"processed": len(summary["processed"]), "skipped": summary["skipped"], "out": str(out)}


def cmd_eval(args) -> dict:
    cfg = _config(args)
    manifest = DatasetManifest.load(args.manifest)
    split = None if args.split == "all" else args.split
    summary = evaluate_detections(manifest, args.detections, cfg, args.out or args.detections, split)
    return {"pooled": summary["pooled"], "per_frame_mean": summary["per_frame_mean"]}


def cmd_curves(args) -> dict:
    paths = emit_model_curves(args.out)
    return {"files": [str(p) for p in paths]}


def cmd_run(args) -> dict:
    """Train on the train split, detect on the test split and evaluate."""
    out = Path(args.out)
    ns = argparse.Namespace(**vars(args))
    ns.models = str(out / "models")
    train = cmd_train(ns)
    ns.out = str(out / "detections")
    ns.split = "test"
    detect = cmd_detect(ns)
    ns.detections = ns.out
    ns.out = str(out / "metrics")
    evaluation = cmd_eval(ns)
    return {"train": train, "detect": detect, "eval": evaluation}


def cmd_import_field(args) -> dict:
    pp = tuple(args.principal_point) if args.principal_point else None
    cam = CameraConstants(args.focal_length, args.baseline, args.camera_height, pp)
    manifest = import_field_dataset(args.src, args.out, test_every=args.test_every, camera=cam)
    return {"frames": len(manifest.frames), "train": len(manifest.split("train")),
            "test": len(manifest.split("test")), "manifest": str(args.out)}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polwater", description="Water hazard detection with polarized stereo.")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, manifest=True, config=True):
        if manifest:
            sp.add_argument("--manifest", required=True, help="dataset manifest (JSON)")
        if config:
            sp.add_argument("--config", help="pipeline config (JSON); defaults when omitted")
            sp.add_argument("--feature-set", choices=sorted(FEATURE_SETS))
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int, default=1)

    sp = sub.add_parser("synth", help="render a synthetic dataset")
    sp.add_argument("--spec", required=True, help="synthetic scene spec (JSON)")
    sp.add_argument("--out", required=True)
    common(sp, manifest=False, config=False)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="fit water and not-water models")
    common(sp)
    sp.add_argument("--models", required=True, help="output directory for model files")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("detect", help="write water masks and likelihood-ratio maps")
    common(sp)
    sp.add_argument("--models", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--split", default="test", choices=["train", "test", "none", "all"])
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("eval", help="metrics and range curve against truth masks")
    common(sp)
    sp.add_argument("--detections", required=True)
    sp.add_argument("--out", help="defaults to the detections directory")
    sp.add_argument("--split", default="test", choices=["train", "test", "none", "all"])
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("curves", help="sky polarization and water reflection curves as CSV")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_curves)

    sp = sub.add_parser("run", help="train, detect and eval in one go")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("import-field", help="manifest for a folder of side-by-side frames and masks")
    sp.add_argument("--src", required=True)
    sp.add_argument("--out", required=True, help="manifest path to write")
    sp.add_argument("--test-every", type=int, help="every k-th masked frame is test, the rest train")
    sp.add_argument("--focal-length", type=float, default=720.0)
    sp.add_argument("--baseline", type=float, default=0.12)
    sp.add_argument("--camera-height", type=float, default=1.77)
    sp.add_argument("--principal-point", type=float, nargs=2)
    sp.set_defaults(func=cmd_import_field)
    return p


def _error(kind: str, exc: Exception, code: int) -> int:
    doc = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    if getattr(exc, "path", None):
        doc["field"] = exc.path
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) < 1:
        return _error("usage", ValueError("--threads must be >= 1"), 2)
    try:
        result = args.func(args)
    except USAGE_ERRORS as exc:
        return _error("invalid_input", exc, 2)
    except RUN_ERRORS as exc:
        return _error("failed", exc, 1)
    print(json.dumps(result, indent=1, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
