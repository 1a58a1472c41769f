"""Per-frame processing, model training, detection and evaluation over a manifest."""
from __future__ import annotations

import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import PipelineConfig
from .dataset import DRY, WATER, DatasetManifest, FrameEntry, ManifestError, read_bool_png, \
    write_bool_png, write_png
from .evaluation import (ConfusionCounts, RangeCurve, confusion, frame_range_counts, summary_dict,
                         write_metrics_csv, write_range_csv, write_summary_json)
from .features import FeatureMap, extract_features
from .geometry import AngleMapCache, CameraIntrinsics, angle_maps
from .gmm import GmmModel, classify, train_gmm
from .stereo import (GroundPlane, HorizonLine, PlaneFitError, PolarizedStereoFrame, compute_disparity,
                     distance_map, fit_ground_plane, horizon_line, triangle_roi, warp_right_to_left)

log = logging.getLogger("polwater")


class PipelineError(RuntimeError):
    pass


@dataclass
class FrameResult:
    plane: GroundPlane
    horizon: HorizonLine
    features: FeatureMap
    distance: np.ndarray
    timing: dict = field(default_factory=dict)

    @property
    def valid(self) -> np.ndarray:
        return self.features.valid

    def record(self) -> dict:
        p = self.plane
        return {"plane": [p.a, p.b, p.c], "inlier_fraction": p.inlier_fraction,
                "inlier_count": p.inlier_count,
                "horizon": {"a": self.horizon.a, "b": self.horizon.b, "c": self.horizon.c,
                            "omega": self.horizon.omega}}


def process_frame(frame: PolarizedStereoFrame, config: PipelineConfig,
                  cache: AngleMapCache | None = None) -> FrameResult:
    """Disparity, ground plane, horizon, warp, angle maps and features for one pair."""
    t0 = time.perf_counter()
    w, h = frame.width, frame.height
    disp = compute_disparity(frame, config.stereo)
    t1 = time.perf_counter()
    row = config.roi.horizon_row if config.roi.horizon_row is not None else frame.center[1]
    roi = triangle_roi(w, h, row, config.roi.apex_offset, config.roi.base_margin)
    plane = fit_ground_plane(disp, roi, scale=config.cauchy_scale,
                             inlier_threshold=config.plane_inlier_threshold,
                             adaptive_scale=config.adaptive_scale)
    horizon = horizon_line(plane, w, h)
    warped = warp_right_to_left(frame, plane, mode=config.warp_mode)
    intr = CameraIntrinsics(frame.focal_length, *frame.center)
    angles = cache.get(intr, horizon, w, h) if cache is not None else angle_maps(intr, horizon, w, h)
    feats = extract_features(warped, angles)
    dist = distance_map(plane, frame.focal_length, frame.baseline, w, h)
    t2 = time.perf_counter()
    return FrameResult(plane, horizon, feats, dist,
                       {"stereo_s": round(t1 - t0, 4), "rest_s": round(t2 - t1, 4)})


def training_samples(result: FrameResult, labels: np.ndarray, config: PipelineConfig, rng):
    """All truth-water pixels plus as many randomly drawn dry pixels."""
    fs = config.features
    xw = result.features.matrix(fs, labels == WATER)
    xd = result.features.matrix(fs, labels == DRY)
    if xd.shape[0] > xw.shape[0]:
        xd = xd[np.sort(rng.choice(xd.shape[0], xw.shape[0], replace=False))]
    return xw, xd


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _cap(x, n, rng):
    if x.shape[0] <= n:
        return x
    return x[np.sort(rng.choice(x.shape[0], n, replace=False))]


def train_models(manifest: DatasetManifest, config: PipelineConfig, threads: int = 1,
                 run_log=None) -> tuple[GmmModel, GmmModel, dict]:
    entries = [e for e in manifest.split("train") if e.mask is not None]
    if not entries:
        raise PipelineError("manifest has no masked training frames")
    cache = AngleMapCache()

    def work(item):
        idx, entry = item
        frame = manifest.load_frame(entry)
        labels = manifest.load_mask(entry, (frame.height, frame.width))
        try:
            res = process_frame(frame, config, cache)
        except PlaneFitError as exc:
            return entry.id, None, None, str(exc)
        rng = np.random.default_rng([config.seed, idx])
        xw, xd = training_samples(res, labels, config, rng)
        _log(run_log, {"stage": "train", "frame": entry.id, **res.record(), **res.timing,
                       "water_samples": int(xw.shape[0]), "dry_samples": int(xd.shape[0])})
        return entry.id, xw, xd, None

    out = _map(work, list(enumerate(entries)), threads)
    skipped = {fid: why for fid, _, _, why in out if why is not None}
    for fid, why in skipped.items():
        log.warning("training frame %s skipped: %s", fid, why)
    used = [o for o in out if o[3] is None]
    if not used:
        raise PipelineError("ground-plane fit failed on every training frame")
    xw = np.concatenate([o[1] for o in used])
    xd = np.concatenate([o[2] for o in used])
    rng = np.random.default_rng([config.seed, 1 << 20])
    xw = _cap(xw, config.max_samples_per_class, rng)
    xd = _cap(xd, config.max_samples_per_class, rng)

    fs = config.features
    meta = {"config_digest": config.digest(), "frames": len(used), "skipped": skipped,
            "package_version": __version__}
    models = []
    for cls_name, x, offset in (("water", xw, 0), ("not_water", xd, 1)):
        m = train_gmm(x, config.gmm_clusters, seed=config.seed + offset, descriptor=fs.descriptor,
                      max_iter=config.gmm_max_iter, tol=config.gmm_tol, covariance=config.covariance)
        m.meta.update(meta, label=cls_name)
        models.append(m)
    return models[0], models[1], meta


def model_paths(models_dir) -> tuple[Path, Path]:
    d = Path(models_dir)
    return d / "water.json", d / "not_water.json"


def save_models(water: GmmModel, not_water: GmmModel, models_dir) -> None:
    Path(models_dir).mkdir(parents=True, exist_ok=True)
    pw, pn = model_paths(models_dir)
    water.save(pw)
    not_water.save(pn)


def load_models(models_dir) -> tuple[GmmModel, GmmModel]:
    pw, pn = model_paths(models_dir)
    for p in (pw, pn):
        if not p.exists():
            raise PipelineError(f"missing model file {p}")
    return GmmModel.load(pw), GmmModel.load(pn)


def detect_frame(frame: PolarizedStereoFrame, water: GmmModel, not_water: GmmModel,
                 config: PipelineConfig, cache=None):
    res = process_frame(frame, config, cache)
    ratio, mask = classify(res.features, water, not_water, config.threshold, config.features)
    return res, ratio, mask


def detect_manifest(manifest: DatasetManifest, water: GmmModel, not_water: GmmModel,
                    config: PipelineConfig, out_dir, split: str | None = "test", threads: int = 1,
                    run_log=None) -> dict:
    if water.descriptor != config.features.descriptor:
        raise PipelineError(f"models use features {water.descriptor!r}, config asks for "
                            f"{config.features.descriptor!r}")
    out = Path(out_dir)
    entries = manifest.frames if split is None else manifest.split(split)
    cache = AngleMapCache()

    def work(entry: FrameEntry):
        frame = manifest.load_frame(entry)
        try:
            res, ratio, mask = detect_frame(frame, water, not_water, config, cache)
        except PlaneFitError as exc:
            log.warning("frame %s skipped: %s", entry.id, exc)
            _log(run_log, {"stage": "detect", "frame": entry.id, "skipped": str(exc)})
            return entry.id, str(exc)
        write_bool_png(out / "masks" / f"{entry.id}.png", mask)
        write_bool_png(out / "valid" / f"{entry.id}.png", res.valid)
        write_png(out / "ratio" / f"{entry.id}.png", ratio.to_uint8())
        rec = {"frame": entry.id, **res.record(), "mask_fraction": float(mask[res.valid].mean())
               if res.valid.any() else 0.0}
        (out / "records").mkdir(parents=True, exist_ok=True)
        (out / "records" / f"{entry.id}.json").write_text(json.dumps(rec, indent=1, sort_keys=True) + "\n")
        _log(run_log, {"stage": "detect", **rec, **res.timing})
        return entry.id, None

    results = _map(work, entries, threads)
    summary = {"processed": [fid for fid, why in results if why is None],
               "skipped": {fid: why for fid, why in results if why is not None},
               "descriptor": water.descriptor, "config_digest": config.digest()}
    out.mkdir(parents=True, exist_ok=True)
    (out / "detect_summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return summary


def evaluate_detections(manifest: DatasetManifest, det_dir, config: PipelineConfig, out_dir=None,
                        split: str | None = "test") -> dict:
    det = Path(det_dir)
    out = Path(out_dir) if out_dir is not None else det
    entries = [e for e in (manifest.frames if split is None else manifest.split(split)) if e.mask]
    skipped = {}
    summary_path = det / "detect_summary.json"
    if summary_path.exists():
        skipped = json.loads(summary_path.read_text()).get("skipped", {})
    missing = [e.id for e in entries if e.id not in skipped and not (det / "masks" / f"{e.id}.png").exists()]
    if missing:
        raise PipelineError(f"missing detections for frames: {', '.join(missing)}")

    cam = manifest.camera
    per_frame: list[tuple[str, ConfusionCounts]] = []
    edges = config.range_edges()
    curve = RangeCurve(tuple(float(e) for e in edges), (0,) * (len(edges) - 1), (0,) * (len(edges) - 1))
    for e in entries:
        if e.id in skipped:
            continue
        pred = read_bool_png(det / "masks" / f"{e.id}.png")
        valid = read_bool_png(det / "valid" / f"{e.id}.png")
        truth = manifest.load_mask(e, pred.shape)
        per_frame.append((e.id, confusion(pred, truth, valid)))
        rec = json.loads((det / "records" / f"{e.id}.json").read_text())
        plane = GroundPlane(*rec["plane"])
        h, w = pred.shape
        dist = distance_map(plane, cam.focal_length, cam.baseline, w, h)
        curve = curve + frame_range_counts(pred, truth, valid, dist, edges)
    pooled = sum((c for _, c in per_frame), ConfusionCounts())
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out / "metrics.csv", per_frame, pooled)
    write_range_csv(out / "range_curve.csv", curve)
    summary = summary_dict(per_frame, pooled, curve, {"skipped": sorted(skipped)})
    write_summary_json(out / "summary.json", summary)
    return summary


_LOG_LOCK = threading.Lock()


def _log(run_log, record):
    if run_log is None:
        return
    with _LOG_LOCK, open(run_log, "a") as fh:
        fh.write(json.dumps(record, sort_keys=True, default=float) + "\n")


def check_masks(manifest: DatasetManifest, split="train") -> None:
    """Fail early, naming the frame, when a mask does not match its image."""
    for e in manifest.split(split):
        if e.mask is None:
            continue
        frame = manifest.load_frame(e)
        manifest.load_mask(e, (frame.height, frame.width))
