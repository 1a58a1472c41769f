"""Seeded synthetic datasets and the JSON spec files that describe them."""
from __future__ import annotations

import dataclasses
from dataclasses import replace

import numpy as np

from .synth import CameraSpec, GroundTexture, Puddle, SceneSpec, random_scene

KINDS = ("reference", "azimuth", "approach", "frames")


class SpecError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def reference_fixture(seed=0, n_train=54, n_test=65, n_negative=5, base: SceneSpec | None = None):
    """Independent random road scenes; training frames always contain puddles."""
    base = base or SceneSpec()
    rng = np.random.default_rng(seed)
    specs, splits = [], []
    for i in range(n_train + n_test):
        test = i >= n_train
        n_p = 0 if test and i - n_train < n_negative else int(rng.integers(1, 5))
        specs.append(random_scene(rng, base, n_p))
        splits.append("test" if test else "train")
    return specs, splits


def azimuth_fixture(seed=0, n_train=54, n_test=65, n_negative=5, base: SceneSpec | None = None):
    """Low sun on the right of the road: sky polarization depends strongly on azimuth."""
    base = base or SceneSpec()
    specs, splits = reference_fixture(seed, n_train, n_test, n_negative, base)
    specs = [replace(s, theta_sun_deg=85.0, sun_azimuth_deg=90.0) for s in specs]
    return specs, splits


APPROACH_PUDDLES = (
    Puddle(x=0.6, z=63.0, semi_x=1.6, semi_z=2.4, angle_deg=10.0),
    Puddle(x=-1.8, z=52.0, semi_x=1.2, semi_z=2.0, angle_deg=-20.0, mu_absorption=(0.5, 0.55, 0.7)),
    Puddle(x=2.2, z=45.0, semi_x=1.4, semi_z=1.8, angle_deg=35.0, mu_absorption=(0.65, 0.6, 0.6)),
)


def approach_sequence(seed=0, n=60, advance=1.0, puddles=APPROACH_PUDDLES,
                      base: SceneSpec | None = None):
    """Camera specs for driving straight at fixed puddles."""
    base = base or SceneSpec()
    spec = replace(base, puddles=tuple(puddles), seed=seed)
    specs = [replace(spec, camera=replace(spec.camera, z=spec.camera.z + i * advance), seed=seed + i)
             for i in range(n)]
    return specs, ["test"] * n


def _build(cls, doc, path, nested=None):
    if not isinstance(doc, dict):
        raise SpecError(path, "must be an object")
    nested = nested or {}
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in doc.items():
        if key not in names:
            raise SpecError(f"{path}.{key}", "unknown field")
        if key in nested:
            value = nested[key](value, f"{path}.{key}")
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise SpecError(path, str(exc)) from None


def _puddles(value, path):
    if not isinstance(value, list):
        raise SpecError(path, "must be a list")
    return tuple(_build(Puddle, p, f"{path}[{i}]") for i, p in enumerate(value))


def _scene(doc, path, base: SceneSpec | None = None):
    nested = {"camera": lambda v, p: _build(CameraSpec, v, p),
              "ground": lambda v, p: _build(GroundTexture, v, p),
              "puddles": _puddles}
    if base is None:
        return _build(SceneSpec, doc, path, nested)
    if not isinstance(doc, dict):
        raise SpecError(path, "must be an object")
    # overrides on top of base, merged one level deep for camera/ground
    merged = {}
    for key, value in doc.items():
        if key in ("camera", "ground") and isinstance(value, dict):
            cur = dataclasses.asdict(getattr(base, key))
            cur.update(value)
            value = cur
        merged[key] = value
    over = _build(SceneSpec, {k: v for k, v in merged.items()}, path, nested)
    fields = {k: getattr(over, k) for k in merged}
    return replace(base, **fields)


def specs_from_document(doc: dict):
    """Expand a synth spec document into (scene specs, split labels)."""
    if not isinstance(doc, dict):
        raise SpecError("<root>", "spec must be an object")
    kind = doc.get("kind", "frames")
    if kind not in KINDS:
        raise SpecError("kind", f"must be one of {KINDS}")
    allowed = {"kind", "seed", "base", "n_train", "n_test", "n_negative", "n", "advance", "puddles", "frames"}
    for key in doc:
        if key not in allowed:
            raise SpecError(key, "unknown field")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise SpecError("seed", "must be a non-negative integer")
    base = _scene(doc.get("base", {}), "base")

    def count(key, default, lo=0):
        v = doc.get(key, default)
        if not isinstance(v, int) or v < lo:
            raise SpecError(key, f"must be an integer >= {lo}")
        return v

    if kind in ("reference", "azimuth"):
        fn = reference_fixture if kind == "reference" else azimuth_fixture
        n_test = count("n_test", 65)
        neg = count("n_negative", 5)
        if neg > n_test:
            raise SpecError("n_negative", "cannot exceed n_test")
        return fn(seed, count("n_train", 54), n_test, neg, base)
    if kind == "approach":
        advance = doc.get("advance", 1.0)
        if not isinstance(advance, (int, float)) or advance < 0:
            raise SpecError("advance", "must be a number >= 0")
        puddles = _puddles(doc["puddles"], "puddles") if "puddles" in doc else APPROACH_PUDDLES
        return approach_sequence(seed, count("n", 60, 1), float(advance), puddles, base)

    frames = doc.get("frames")
    if not isinstance(frames, list) or not frames:
        raise SpecError("frames", "must be a non-empty list")
    specs, splits = [], []
    for i, fdoc in enumerate(frames):
        if not isinstance(fdoc, dict):
            raise SpecError(f"frames[{i}]", "must be an object")
        fdoc = dict(fdoc)
        split = fdoc.pop("split", "test")
        if split not in ("train", "test", "none"):
            raise SpecError(f"frames[{i}].split", "must be train, test or none")
        spec = _scene(fdoc, f"frames[{i}]", base)
        if "seed" not in fdoc:
            spec = replace(spec, seed=seed + i)
        specs.append(spec)
        splits.append(split)
    return specs, splits
