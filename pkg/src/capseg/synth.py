"""Synthetic desk-scale dataset: textured pink-brown mucosa backgrounds
with elliptical lesions drawn from five color/texture archetypes, one per
disease class. Used by the acceptance suite and the bench command in place
of the private clinical frames.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .core import (
    DISEASES,
    DatasetManifest,
    Frame,
    ManifestRecord,
    Mask,
    save_frame,
    save_manifest,
    save_mask,
)
from .errors import InvalidParam

# color is the lesion base RGB; tex_amp/tex_scale shape the luminance
# texture so the archetypes differ in LBP statistics as well as color
_ARCHETYPES = {
    "bleeding": dict(color=(150, 28, 34), tex_amp=5.0, tex_scale=2.5),
    "crohn": dict(color=(188, 94, 44), tex_amp=22.0, tex_scale=6.0),
    "lymphangiectasia": dict(color=(236, 224, 186), tex_amp=4.0, tex_scale=3.0),
    "xanthoma": dict(color=(214, 188, 96), tex_amp=16.0, tex_scale=1.2),
    "lymphoid_hyperplasia": dict(color=(216, 146, 160), tex_amp=20.0, tex_scale=5.0),
}

_BACKGROUND = np.array([182.0, 122.0, 108.0])


def _smooth_noise(rng, shape, sigma):
    field = gaussian_filter(rng.standard_normal(shape), sigma=sigma)
    sd = field.std()
    return field / sd if sd > 0 else field


def natural_frame(rng: np.random.Generator, height: int = 512, width=None) -> Frame:
    """Random frame with natural-image statistics (smooth fields plus fine
    speckle); used for property tests and timing runs."""
    width = width or height
    base = rng.uniform(70.0, 190.0, size=3)
    img = np.empty((height, width, 3))
    for ch in range(3):
        smooth = _smooth_noise(rng, (height, width), sigma=min(height, width) / 10)
        speckle = _smooth_noise(rng, (height, width), sigma=1.0)
        img[..., ch] = base[ch] + 40.0 * smooth + 8.0 * speckle
    return Frame(np.clip(np.rint(img), 0, 255).astype(np.uint8))


def _mucosa_background(rng, size, base_jitter):
    img = np.empty((size, size, 3))
    shade = 1.0 - 0.15 * _radial2(size)  # mild vignette toward corners
    field = _smooth_noise(rng, (size, size), sigma=size / 8)
    speckle = _smooth_noise(rng, (size, size), sigma=1.2)
    for ch in range(3):
        img[..., ch] = (_BACKGROUND[ch] + base_jitter[ch] + 15.0 * field + 4.0 * speckle) * shade
    return img


def _radial2(size):
    c = (size - 1) / 2.0
    y, x = np.mgrid[0:size, 0:size]
    r2 = ((x - c) ** 2 + (y - c) ** 2) / (2 * c**2)
    return r2


def synth_frame(rng: np.random.Generator, disease: str, size: int = 512,
                base_jitter=None) -> tuple[Frame, Mask]:
    """One lesioned frame and its ground-truth mask."""
    if disease not in _ARCHETYPES:
        raise InvalidParam(f"no archetype for disease {disease!r}")
    arch = _ARCHETYPES[disease]
    if base_jitter is None:
        base_jitter = rng.uniform(-10.0, 10.0, size=3)
    img = _mucosa_background(rng, size, base_jitter)
    mask = np.zeros((size, size), dtype=bool)

    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    for _ in range(int(rng.integers(1, 3))):
        a = rng.uniform(0.14, 0.24) * size
        b = rng.uniform(0.11, 0.20) * size
        cx = rng.uniform(0.28, 0.72) * size
        cy = rng.uniform(0.28, 0.72) * size
        theta = rng.uniform(0.0, np.pi)
        xr = (x - cx) * np.cos(theta) + (y - cy) * np.sin(theta)
        yr = -(x - cx) * np.sin(theta) + (y - cy) * np.cos(theta)
        e = (xr / a) ** 2 + (yr / b) ** 2
        inside = e <= 1.0
        # feather only the inner 3% so the color edge stays within the mask
        w = np.clip((1.0 - e) / 0.03, 0.0, 1.0)

        texture = arch["tex_amp"] * _smooth_noise(rng, (size, size), arch["tex_scale"])
        for ch in range(3):
            lesion = arch["color"][ch] + texture + rng.normal(0.0, 2.0)
            img[..., ch] = (1.0 - w) * img[..., ch] + w * lesion
        mask |= inside

    frame = Frame(np.clip(np.rint(img), 0, 255).astype(np.uint8))
    return frame, Mask(mask.astype(np.uint8))


def synth_dataset(
    out_dir, patients: int = 10, frames: int = 60, size: int = 512, seed: int = 0
) -> Path:
    """Write frames/, masks/ and manifest.csv under out_dir; returns the
    manifest path. Patients cycle through the five disease archetypes, so
    every disease has at least two patients when patients >= 10."""
    if patients < 5:
        raise InvalidParam("need at least 5 patients, one per disease")
    if frames < patients:
        raise InvalidParam("need at least one frame per patient")
    out_dir = Path(out_dir)
    (out_dir / "frames").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)

    lesion_diseases = [d for d in DISEASES if d != "normal"]
    per_patient = frames // patients
    extra = frames % patients
    records = []
    for p in range(patients):
        disease = lesion_diseases[p % len(lesion_diseases)]
        patient_id = f"p{p:02d}"
        jitter_rng = np.random.default_rng(np.random.SeedSequence([seed, p]))
        base_jitter = jitter_rng.uniform(-10.0, 10.0, size=3)
        n_frames = per_patient + (1 if p < extra else 0)
        for f in range(n_frames):
            rng = np.random.default_rng(np.random.SeedSequence([seed, p, f]))
            frame, mask = synth_frame(rng, disease, size=size, base_jitter=base_jitter)
            stem = f"{patient_id}_f{f:02d}"
            save_frame(frame, out_dir / "frames" / f"{stem}.png")
            save_mask(mask, out_dir / "masks" / f"{stem}.png")
            records.append(
                ManifestRecord(
                    patient_id=patient_id,
                    disease=disease,
                    frame_path=f"frames/{stem}.png",
                    mask_path=f"masks/{stem}.png",
                )
            )

    manifest_path = out_dir / "manifest.csv"
    save_manifest(DatasetManifest(records), manifest_path)
    return manifest_path
