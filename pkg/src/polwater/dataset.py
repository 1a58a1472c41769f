"""On-disk dataset layout: side-by-side PNG frames, label masks and a JSON manifest."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .stereo import PolarizedStereoFrame

MANIFEST_FORMAT = "polwater-manifest"
MANIFEST_VERSION = 1
SPLITS = ("train", "test", "none")

# truth mask labels
WATER, DRY, IGNORE = 255, 0, 128


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class CameraConstants:
    focal_length: float = 720.0
    baseline: float = 0.12
    height: float = 1.77
    principal_point: tuple[float, float] | None = None

    def __post_init__(self):
        if self.focal_length <= 0 or self.baseline <= 0 or self.height <= 0:
            raise ManifestError("camera constants must be positive")
        if self.principal_point is not None:
            object.__setattr__(self, "principal_point", tuple(float(x) for x in self.principal_point))


@dataclass(frozen=True)
class FrameEntry:
    id: str
    image: str | None = None          # side-by-side
    left: str | None = None           # or a standalone pair
    right: str | None = None
    mask: str | None = None
    split: str = "none"
    truth: dict | None = None         # optional synthetic ground truth (plane, ...)

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ManifestError(f"frame {self.id}: split must be one of {SPLITS}")
        if (self.image is None) == (self.left is None or self.right is None):
            raise ManifestError(f"frame {self.id}: give either 'image' or both 'left' and 'right'")


@dataclass
class DatasetManifest:
    frames: list[FrameEntry]
    camera: CameraConstants = field(default_factory=CameraConstants)
    polarizers: dict = field(default_factory=lambda: {"left": "horizontal", "right": "vertical"})
    root: Path = field(default=Path("."), compare=False)

    def __post_init__(self):
        ids = [f.id for f in self.frames]
        if len(set(ids)) != len(ids):
            raise ManifestError("duplicate frame ids")

    def split(self, name: str) -> list[FrameEntry]:
        return [f for f in self.frames if f.split == name]

    def to_dict(self) -> dict:
        frames = []
        for f in self.frames:
            d = {k: v for k, v in asdict(f).items() if v is not None}
            frames.append(d)
        cam = asdict(self.camera)
        if cam["principal_point"] is not None:
            cam["principal_point"] = list(cam["principal_point"])
        return {"format": MANIFEST_FORMAT, "version": MANIFEST_VERSION, "camera": cam,
                "polarizers": dict(self.polarizers), "frames": frames}

    @classmethod
    def from_dict(cls, doc: dict, root=".") -> "DatasetManifest":
        if doc.get("format") != MANIFEST_FORMAT:
            raise ManifestError("not a polwater manifest")
        if doc.get("version") != MANIFEST_VERSION:
            raise ManifestError(f"unsupported manifest version {doc.get('version')}")
        try:
            cam = CameraConstants(**doc.get("camera", {}))
            frames = [FrameEntry(**f) for f in doc["frames"]]
        except TypeError as exc:
            raise ManifestError(str(exc)) from None
        return cls(frames, cam, dict(doc.get("polarizers", {"left": "horizontal", "right": "vertical"})),
                   Path(root))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ManifestError(f"cannot read manifest {path}: {exc}") from None
        return cls.from_dict(doc, root=path.parent)

    def resolve(self, rel: str) -> Path:
        return self.root / rel

    def load_frame(self, entry: FrameEntry) -> PolarizedStereoFrame:
        meta = dict(focal_length=self.camera.focal_length, baseline=self.camera.baseline,
                    camera_height=self.camera.height, principal_point=self.camera.principal_point)
        if entry.image is not None:
            img = _read_rgb(self.resolve(entry.image))
            return PolarizedStereoFrame.from_side_by_side(img, **meta)
        return PolarizedStereoFrame(_read_rgb(self.resolve(entry.left)),
                                    _read_rgb(self.resolve(entry.right)), **meta)

    def load_mask(self, entry: FrameEntry, shape=None) -> np.ndarray | None:
        """Labels as uint8 WATER / DRY / IGNORE, or None when the frame has no mask."""
        if entry.mask is None:
            return None
        raw = np.asarray(Image.open(self.resolve(entry.mask)).convert("L"))
        if shape is not None and raw.shape != tuple(shape):
            raise ManifestError(f"frame {entry.id}: mask {raw.shape} does not match image {tuple(shape)}")
        out = np.full(raw.shape, IGNORE, dtype=np.uint8)
        out[raw < 64] = DRY
        out[raw >= 192] = WATER
        return out

    def validate(self, check_files=True) -> None:
        for entry in self.frames:
            if not check_files:
                continue
            paths = [entry.image] if entry.image else [entry.left, entry.right]
            for p in paths + ([entry.mask] if entry.mask else []):
                if not self.resolve(p).exists():
                    raise ManifestError(f"frame {entry.id}: missing file {p}")
            if entry.mask:
                with Image.open(self.resolve(paths[0])) as im:
                    w, h = im.size
                w = w // 2 if entry.image else w
                with Image.open(self.resolve(entry.mask)) as m:
                    if m.size != (w, h):
                        raise ManifestError(f"frame {entry.id}: mask size {m.size} does not match image {(w, h)}")


def _read_rgb(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"))
    except OSError as exc:
        raise ManifestError(f"cannot read image {path}: {exc}") from None


def write_png(path, array, mode=None) -> None:
    """Write atomically so a crashed run never leaves half a file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    img = Image.fromarray(array) if mode is None else Image.fromarray(array).convert(mode)
    img.save(tmp, format="PNG")
    tmp.replace(path)


def write_bool_png(path, mask) -> None:
    write_png(path, (np.asarray(mask, bool) * 255).astype(np.uint8), mode="1")


def read_bool_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) > 127


def write_synthetic_dataset(frames, splits, out_dir, ids=None) -> DatasetManifest:
    """Store rendered frames (``synth.SyntheticFrame``) in the manifest layout."""
    out = Path(out_dir)
    if len(splits) != len(frames):
        raise ValueError("one split label per frame")
    ids = ids or [f"{i:04d}" for i in range(len(frames))]
    entries = []
    cam = None
    for fid, sf, split in zip(ids, frames, splits):
        fr = sf.frame
        c = CameraConstants(fr.focal_length, fr.baseline, fr.camera_height, fr.center)
        if cam is None:
            cam = c
        elif c != cam:
            raise ValueError("all frames must share camera constants")
        write_png(out / "frames" / f"{fid}.png", fr.side_by_side())
        write_png(out / "masks" / f"{fid}.png", sf.mask)
        truth = {"plane": [float(x) for x in sf.plane.coefficients]}
        entries.append(FrameEntry(fid, image=f"frames/{fid}.png", mask=f"masks/{fid}.png",
                                  split=split, truth=truth))
    manifest = DatasetManifest(entries, cam or CameraConstants(), root=out)
    manifest.save(out / "manifest.json")
    return manifest


def import_field_dataset(src_dir, out_path, test_every=None, image_glob="*.png",
                         mask_suffix="_mask", camera: CameraConstants | None = None) -> DatasetManifest:
    """Build a manifest for a folder of side-by-side frames with optional masks.

    Masks are matched by file stem plus ``mask_suffix`` (e.g. ``0001.png`` and
    ``0001_mask.png``) anywhere under ``src_dir``. Masked frames go to the
    test split; with ``test_every=k`` only every k-th masked frame is test and
    the rest train. Unmasked frames get split "none".
    """
    src = Path(src_dir)
    out_path = Path(out_path)
    images = sorted(p for p in src.rglob(image_glob) if not p.stem.endswith(mask_suffix))
    masks = {p.stem[: -len(mask_suffix)]: p for p in src.rglob(f"*{mask_suffix}.png")}
    entries = []
    n_masked = 0
    for p in images:
        m = masks.get(p.stem)
        split = "none"
        if m is not None:
            split = "test"
            if test_every and n_masked % test_every != 0:
                split = "train"
            n_masked += 1
        entries.append(FrameEntry(p.stem, image=_relative(p, out_path.parent),
                                  mask=_relative(m, out_path.parent) if m else None, split=split))
    if not entries:
        raise ManifestError(f"no frames found under {src}")
    manifest = DatasetManifest(entries, camera or CameraConstants(), root=out_path.parent)
    manifest.save(out_path)
    return manifest


def _relative(path, base) -> str:
    path, base = Path(path).resolve(), Path(base).resolve()
    return str(path.relative_to(base)) if path.is_relative_to(base) else str(path)


def with_split(manifest: DatasetManifest, assignments: dict) -> DatasetManifest:
    frames = [replace(f, split=assignments.get(f.id, f.split)) for f in manifest.frames]
    return DatasetManifest(frames, manifest.camera, manifest.polarizers, manifest.root)
