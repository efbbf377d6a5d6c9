"""RGB-D ingestion, dataset splits, patch grids and the on-disk patch cache."""

import json
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .bicubic import LR_SIZE, degrade_bicubic, upsample_bicubic
from .errors import DataError, ShapeError

log = logging.getLogger(__name__)

SCALES = (4, 8, 16)
NYU_TRAIN, NYU_TOTAL = 1000, 1449
MIDDLEBURY_TEST = 6
MANIFEST = "manifest.txt"
META = "dataset.json"


@dataclass
class RGBDSample:
    rgb: np.ndarray  # (H, W, 3) in [0, 1]
    depth_hr: np.ndarray  # (H, W) in [0, 1]
    native_scale: float
    sample_id: str
    valid_mask: np.ndarray  # (H, W) bool

    @property
    def shape(self):
        return self.depth_hr.shape


@dataclass
class PatchPair:
    hr_depth: np.ndarray
    rgb: np.ndarray
    lr_depth: np.ndarray
    lr_up: np.ndarray
    mask: np.ndarray
    scale: int
    origin: tuple
    sample_id: str = ""


@dataclass(frozen=True)
class SampleRef:
    sample_id: str
    rgb_path: Path
    depth_path: Path


@dataclass
class DatasetSplit:
    name: str
    train: list
    test: list
    hole_value: float = 0.0
    native_scale: float = None

    def __post_init__(self):
        overlap = {r.sample_id for r in self.train} & {r.sample_id for r in self.test}
        if overlap:
            raise DataError(f"train/test overlap in {self.name}: {sorted(overlap)[:5]}")

    def load(self, part="test"):
        refs = self.train if part == "train" else self.test
        return [
            load_rgbd_pair(r.rgb_path, r.depth_path, self.hole_value,
                           native_scale=self.native_scale, sample_id=r.sample_id)
            for r in refs
        ]


def patch_size(scale):
    if scale not in SCALES:
        raise ShapeError(f"scale must be one of {SCALES}, got {scale}")
    return LR_SIZE * scale


def _read_png(path):
    try:
        img = Image.open(path)
        img.load()
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    return img


def _depth_array(img, path):
    if img.mode in ("L", "P"):
        return np.asarray(img.convert("L"), dtype=np.float64), 255.0
    if img.mode in ("I;16", "I;16B", "I;16L", "I"):
        arr = np.asarray(img, dtype=np.float64)
        if arr.max(initial=0) > 65535 or arr.min(initial=0) < 0:
            raise DataError(f"{path}: depth values outside 16-bit range")
        return arr, 65535.0
    raise DataError(f"{path}: unsupported depth mode {img.mode!r} (need 8/16-bit grayscale)")


def load_rgbd_pair(rgb_path, depth_path, hole_value=0.0, native_scale=None, sample_id=None):
    """Load an RGB/depth PNG pair normalised to [0, 1].

    ``native_scale`` defaults to the encoding maximum (255 or 65535). Pass a
    value to express metrics in other units, e.g. centimetres for NYU.
    """
    rgb_img = _read_png(rgb_path)
    if rgb_img.mode not in ("RGB", "RGBA"):
        raise DataError(f"{rgb_path}: expected 3-channel RGB, got mode {rgb_img.mode!r}")
    if rgb_img.mode == "RGBA":
        rgb_img = rgb_img.convert("RGB")
    rgb = np.asarray(rgb_img, dtype=np.float64) / 255.0

    raw, enc_max = _depth_array(_read_png(depth_path), depth_path)
    if raw.shape != rgb.shape[:2]:
        raise ShapeError(
            f"dimension mismatch: rgb {rgb.shape[:2]} vs depth {raw.shape} ({depth_path})"
        )
    if sample_id is None:
        sample_id = Path(depth_path).name.rsplit("_depth", 1)[0]
    return RGBDSample(
        rgb=rgb,
        depth_hr=raw / enc_max,
        native_scale=float(native_scale if native_scale is not None else enc_max),
        sample_id=sample_id,
        valid_mask=raw != hole_value,
    )


def center_crop(sample, multiple=16):
    """Crop H and W down to multiples of ``multiple`` around the image centre."""
    h, w = sample.shape
    nh, nw = h - h % multiple, w - w % multiple
    if nh == 0 or nw == 0:
        raise ShapeError(f"{sample.sample_id}: {h}x{w} smaller than {multiple}")
    if (nh, nw) == (h, w):
        return sample
    top, left = (h - nh) // 2, (w - nw) // 2
    sl = np.s_[top:top + nh, left:left + nw]
    return RGBDSample(sample.rgb[sl], sample.depth_hr[sl], sample.native_scale,
                      sample.sample_id, sample.valid_mask[sl])


def grid_origins(length, size):
    """Patch start offsets along one axis: stride size/2, last patch flush with the edge."""
    stride = size // 2
    n = math.ceil((length - size) / stride) + 1
    starts = [i * stride for i in range(n - 1)] + [length - size]
    return sorted(set(starts))


def make_patch(sample, scale, row, col):
    s = patch_size(scale)
    sl = np.s_[row:row + s, col:col + s]
    hr = sample.depth_hr[sl]
    lr = degrade_bicubic(hr)
    return PatchPair(
        hr_depth=hr.copy(),
        rgb=sample.rgb[sl].copy(),
        lr_depth=lr,
        lr_up=upsample_bicubic(lr, s),
        mask=sample.valid_mask[sl].copy(),
        scale=scale,
        origin=(row, col),
        sample_id=sample.sample_id,
    )


def crop_patch_grid(sample, scale):
    """Cover ``sample`` with overlapping s x s patches (s = 16 * scale), row-major."""
    s = patch_size(scale)
    h, w = sample.shape
    if h < s or w < s:
        raise DataError(f"sample {sample.sample_id!r} is {h}x{w}, smaller than patch size {s}")
    return [make_patch(sample, scale, r, c)
            for r in grid_origins(h, s) for c in grid_origins(w, s)]


# --- dataset layout -----------------------------------------------------------


def _scan(root):
    """Map sample_id -> SampleRef for every ``<id>_rgb.png``/``<id>_depth.png`` pair under root."""
    refs = {}
    for depth in sorted(Path(root).rglob("*_depth.png")):
        sid = depth.name[: -len("_depth.png")]
        rgb = depth.with_name(f"{sid}_rgb.png")
        if rgb.exists():
            if sid in refs:
                raise DataError(f"duplicate sample id {sid!r} under {root}")
            refs[sid] = SampleRef(sid, rgb, depth)
    return refs


def read_manifest(path):
    """Return (train_ids, test_ids); ids after a ``# test`` line are test samples."""
    train, test, target = [], [], None
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            tag = line.lstrip("#").strip().lower()
            if tag in ("train", "test"):
                target = test if tag == "test" else train
            continue
        (target if target is not None else train).append(line)
    return train, test


def split_dataset(name, root):
    """Build the train/test split for ``nyu_v2`` or ``middlebury`` under ``root``.

    Precedence: ``manifest.txt`` > ``train/`` + ``test/`` subdirectories >
    automatic split (NYU: first 1000 of 1449 by filename, proportional for
    subsets; Middlebury: last 6 are test).
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} does not exist")
    meta = json.loads((root / META).read_text()) if (root / META).exists() else {}
    hole = float(meta.get("hole_value", 0.0))
    native = meta.get("native_scale")

    refs = _scan(root)
    if not refs:
        raise DataError(f"no <id>_rgb.png/<id>_depth.png pairs found under {root}")

    if (root / MANIFEST).exists():
        train_ids, test_ids = read_manifest(root / MANIFEST)
        missing = [i for i in train_ids + test_ids if i not in refs]
        if missing:
            raise DataError(f"manifest lists unknown samples under {root}: {missing[:5]}")
        train = [refs[i] for i in train_ids]
        test = [refs[i] for i in test_ids]
    elif (root / "train").is_dir() and (root / "test").is_dir():
        train = sorted(_scan(root / "train").values(), key=lambda r: r.sample_id)
        test = sorted(_scan(root / "test").values(), key=lambda r: r.sample_id)
    else:
        ordered = [refs[k] for k in sorted(refs)]
        n = len(ordered)
        if name == "nyu_v2":
            n_train = NYU_TRAIN if n == NYU_TOTAL else round(n * NYU_TRAIN / NYU_TOTAL)
        elif name == "middlebury":
            n_train = max(n - MIDDLEBURY_TEST, 0)
        else:
            raise DataError(f"unknown dataset {name!r}; expected nyu_v2 or middlebury")
        train, test = ordered[:n_train], ordered[n_train:]

    if not train and not test:
        raise DataError(f"empty split for {name} under {root}")
    return DatasetSplit(name, train, test, hole_value=hole, native_scale=native)


# --- patch cache --------------------------------------------------------------

INDEX = "index.json"


def write_patch_cache(samples, scale, out_dir):
    """Write every sample's patch grid to ``out_dir``; returns the patch count."""
    out = Path(out_dir)
    (out / "patches").mkdir(parents=True, exist_ok=True)
    index = []
    for sample in samples:
        sample = center_crop(sample)
        patches = crop_patch_grid(sample, scale)
        fname = f"patches/{sample.sample_id}.npz"
        np.savez_compressed(
            out / fname,
            hr=np.stack([p.hr_depth for p in patches]).astype(np.float32),
            rgb=np.stack([p.rgb for p in patches]).astype(np.float32),
            lr=np.stack([p.lr_depth for p in patches]).astype(np.float32),
            lr_up=np.stack([p.lr_up for p in patches]).astype(np.float32),
            mask=np.stack([p.mask for p in patches]),
        )
        for k, p in enumerate(patches):
            index.append({"sample_id": sample.sample_id, "origin": list(p.origin),
                          "scale": scale, "file": fname, "item": k})
    tmp = out / (INDEX + ".tmp")
    tmp.write_text(json.dumps({"scale": scale, "patches": index}, indent=1))
    os.replace(tmp, out / INDEX)
    log.info("wrote %d patches to %s", len(index), out)
    return len(index)


def read_patch_cache(cache_dir):
    """Load all cached patches as a list of PatchPair, in index order."""
    cache = Path(cache_dir)
    if not (cache / INDEX).exists():
        raise DataError(f"no patch index in {cache}; run prepare-data first")
    index = json.loads((cache / INDEX).read_text())
    arrays, out = {}, []
    for rec in index["patches"]:
        if rec["file"] not in arrays:
            with np.load(cache / rec["file"]) as z:
                arrays[rec["file"]] = {k: z[k] for k in z.files}
        a, k = arrays[rec["file"]], rec["item"]
        out.append(PatchPair(a["hr"][k], a["rgb"][k], a["lr"][k], a["lr_up"][k], a["mask"][k],
                             rec["scale"], tuple(rec["origin"]), rec["sample_id"]))
    return out


def cache_size(cache_dir):
    path = Path(cache_dir) / INDEX
    if not path.exists():
        return None
    return len(json.loads(path.read_text())["patches"])
