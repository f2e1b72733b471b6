"""Frame/mask/manifest I/O, color-channel derivation, patient-wise splitting."""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    DimensionMismatch,
    EmptyManifest,
    InvalidParam,
    NotFound,
    UnsupportedFormat,
)

MIN_FRAME_SIDE = 16

DISEASES = (
    "normal",
    "bleeding",
    "crohn",
    "lymphangiectasia",
    "xanthoma",
    "lymphoid_hyperplasia",
)

# ITU-R BT.601 luma weights
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass
class Frame:
    """8-bit RGB raster; `pixels` is (H, W, 3) uint8."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim != 3 or p.shape[2] != 3 or p.dtype != np.uint8:
            raise InvalidParam("frame pixels must be (H, W, 3) uint8")
        if p.shape[0] < MIN_FRAME_SIDE or p.shape[1] < MIN_FRAME_SIDE:
            raise InvalidParam(
                f"frame must be at least {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE}, "
                f"got {p.shape[1]}x{p.shape[0]}"
            )
        self.pixels = p

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass
class Mask:
    """Per-pixel binary ground truth; `values` is (H, W) uint8 in {0, 1}."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise InvalidParam("mask values must be 2-D")
        self.values = (v != 0).astype(np.uint8)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass
class ChannelStack:
    """Five per-pixel rasters (uint8), all sharing the frame's dimensions."""

    gray: np.ndarray
    hue: np.ndarray
    red: np.ndarray
    green: np.ndarray
    blue: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return {
            "gray": self.gray,
            "hue": self.hue,
            "red": self.red,
            "green": self.green,
            "blue": self.blue,
        }


@dataclass
class ManifestRecord:
    patient_id: str
    disease: str
    frame_path: str
    mask_path: str | None = None


@dataclass
class DatasetManifest:
    records: list[ManifestRecord] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            if rec.disease not in DISEASES:
                raise InvalidParam(f"unknown disease {rec.disease!r}")
            if rec.frame_path in seen:
                raise InvalidParam(f"duplicate frame path {rec.frame_path!r}")
            seen.add(rec.frame_path)
            if rec.disease != "normal" and not rec.mask_path:
                raise InvalidParam(
                    f"record {rec.frame_path!r} has disease {rec.disease!r} "
                    "but no mask path"
                )


@dataclass
class SplitPlan:
    train: list[int]
    test: list[int]
    seed: int


def load_frame(path) -> Frame:
    """Load an 8-bit raster image as an RGB frame.

    Grayscale inputs are replicated across channels. Images with more than
    8 bits per channel are rejected rather than silently requantized.
    """
    path = Path(path)
    if not path.exists():
        raise NotFound(str(path))
    try:
        img = Image.open(path)
        img.load()
    except UnidentifiedImageError as exc:
        raise UnsupportedFormat(f"{path}: not a decodable image") from exc
    if img.mode in ("I", "I;16", "I;16B", "I;16L", "F"):
        raise UnsupportedFormat(f"{path}: more than 8 bits per channel")
    if img.mode != "RGB":
        img = img.convert("RGB")
    return Frame(np.asarray(img, dtype=np.uint8))


def load_mask(path, shape=None) -> Mask:
    """Load a single-channel mask PNG; any nonzero pixel counts as abnormal."""
    path = Path(path)
    if not path.exists():
        raise NotFound(str(path))
    try:
        img = Image.open(path)
        img.load()
    except UnidentifiedImageError as exc:
        raise UnsupportedFormat(f"{path}: not a decodable image") from exc
    if img.mode not in ("L", "1"):
        img = img.convert("L")
    mask = Mask(np.asarray(img))
    if shape is not None and mask.values.shape != tuple(shape):
        raise DimensionMismatch(
            f"{path}: mask is {mask.values.shape}, expected {tuple(shape)}"
        )
    return mask


def save_mask(mask: Mask, path) -> None:
    Image.fromarray(mask.values * 255).save(path)


def save_frame(frame: Frame, path) -> None:
    Image.fromarray(frame.pixels).save(path)


def derive_channels(frame: Frame) -> ChannelStack:
    """Split a frame into gray/hue/red/green/blue rasters, each in [0, 255].

    Gray uses BT.601 luma weights. Hue is the HSV hue rescaled so that
    [0, 360) degrees maps onto [0, 255]; achromatic pixels get hue 0.
    """
    rgb = frame.pixels.astype(np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]

    gray = np.rint(_LUMA[0] * r + _LUMA[1] * g + _LUMA[2] * b).astype(np.uint8)

    maxc = np.maximum(np.maximum(r, g), b)
    minc = np.minimum(np.minimum(r, g), b)
    delta = maxc - minc
    safe = np.where(delta == 0, 1.0, delta)
    h = np.zeros_like(r)
    is_r = (maxc == r) & (delta > 0)
    is_g = (maxc == g) & (delta > 0) & ~is_r
    is_b = (delta > 0) & ~is_r & ~is_g
    h[is_r] = np.mod((g - b)[is_r] / safe[is_r], 6.0)
    h[is_g] = (b - r)[is_g] / safe[is_g] + 2.0
    h[is_b] = (r - g)[is_b] / safe[is_b] + 4.0
    hue = np.rint(h * 60.0 / 360.0 * 255.0).astype(np.uint8)

    return ChannelStack(
        gray=gray,
        hue=hue,
        red=frame.pixels[..., 0].copy(),
        green=frame.pixels[..., 1].copy(),
        blue=frame.pixels[..., 2].copy(),
    )


def load_manifest(path) -> DatasetManifest:
    """Read a dataset manifest CSV with header patient_id,disease,frame_path,mask_path."""
    path = Path(path)
    if not path.exists():
        raise NotFound(str(path))
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"patient_id", "disease", "frame_path", "mask_path"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise InvalidParam(
                f"{path}: manifest header must contain {sorted(required)}"
            )
        for row in reader:
            records.append(
                ManifestRecord(
                    patient_id=row["patient_id"],
                    disease=row["disease"],
                    frame_path=row["frame_path"],
                    mask_path=row["mask_path"] or None,
                )
            )
    return DatasetManifest(records)


def save_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["patient_id", "disease", "frame_path", "mask_path"])
        for rec in manifest.records:
            writer.writerow(
                [rec.patient_id, rec.disease, rec.frame_path, rec.mask_path or ""]
            )


def split_by_patient(
    manifest: DatasetManifest, min_train_frames: int = 6, seed: int = 0
) -> SplitPlan:
    """Pick training patients per disease class; everything else is test.

    For each disease class, one patient with at least `min_train_frames`
    frames is chosen uniformly at random. When no single patient reaches
    the threshold, patients are accumulated greedily by descending frame
    count until the class's training frames reach the threshold or the
    class runs out of patients. A chosen patient contributes all of their
    records to the training side, so no patient ever straddles the split.
    """
    if not manifest.records:
        raise EmptyManifest("manifest has no records")
    if min_train_frames < 1:
        raise InvalidParam("min_train_frames must be >= 1")

    by_disease: dict[str, dict[str, list[int]]] = {}
    for idx, rec in enumerate(manifest.records):
        by_disease.setdefault(rec.disease, {}).setdefault(rec.patient_id, []).append(idx)

    rng = random.Random(seed)
    train_patients: set[str] = set()
    for disease in DISEASES:
        if disease not in by_disease:
            continue
        patients = by_disease[disease]
        have = sum(len(patients[p]) for p in train_patients if p in patients)
        if have >= min_train_frames:
            continue
        candidates = sorted(p for p in patients if p not in train_patients)
        qualifying = [p for p in candidates if len(patients[p]) >= min_train_frames]
        if qualifying:
            train_patients.add(rng.choice(qualifying))
        else:
            for p in sorted(candidates, key=lambda p: (-len(patients[p]), p)):
                train_patients.add(p)
                have += len(patients[p])
                if have >= min_train_frames:
                    break

    train = [i for i, rec in enumerate(manifest.records) if rec.patient_id in train_patients]
    test = [i for i, rec in enumerate(manifest.records) if rec.patient_id not in train_patients]
    return SplitPlan(train=train, test=test, seed=seed)
