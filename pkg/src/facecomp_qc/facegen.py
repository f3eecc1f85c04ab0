"""Procedural generation of artefact-free face-like source images.

Desk-scale runs need a license-safe corpus of lossless source images with
known landmarks. This generator draws stylized but texture-rich faces:
smooth shading plus multi-octave value noise, hair strands, and facial
features built from analytic shapes. The texture matters more than the
likeness: lossy codecs must have high-frequency content to destroy, or
quality labels would barely vary with the quality parameter.

Landmark coordinates are exact by construction, including under the small
random in-plane rotation applied to each face.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .codecs import ImageBuffer, encode_lossless
from .geometry import LandmarkSet, SimilarityTransform, write_landmarks_csv


def _value_noise(rng: np.random.Generator, size: int, cells: int, amplitude: float) -> np.ndarray:
    """Bilinearly upsampled random grid: one octave of smooth value noise."""
    grid = rng.standard_normal((cells + 1, cells + 1))
    xs = np.linspace(0, cells, size)
    x0 = np.clip(xs.astype(int), 0, cells - 1)
    fx = xs - x0
    rows = grid[:, x0] * (1 - fx) + grid[:, x0 + 1] * fx
    cols = rows[x0, :] * (1 - fx)[:, None] + rows[x0 + 1, :] * fx[:, None]
    return amplitude * cols


def _textured_field(rng: np.random.Generator, size: int) -> np.ndarray:
    """1/f-ish luminance texture in gray levels, zero-mean."""
    field = np.zeros((size, size))
    for cells, amp in ((4, 18.0), (16, 12.0), (64, 9.0), (size // 4, 7.0)):
        field += _value_noise(rng, size, cells, amp)
    field += rng.standard_normal((size, size)) * 3.0
    return field


def _ellipse_mask(size: int, cx: float, cy: float, rx: float, ry: float,
                  softness: float = 1.5) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size]
    d = np.sqrt(((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2)
    return np.clip((1.0 - d) * (rx / softness / 4.0), 0.0, 1.0)


def generate_face(rng: np.random.Generator, size: int = 640) -> tuple[ImageBuffer, LandmarkSet]:
    """One synthetic face image with exact five-point landmarks."""
    cx = size / 2 + rng.uniform(-size * 0.03, size * 0.03)
    cy = size / 2 + rng.uniform(-size * 0.02, size * 0.02)
    ied = rng.uniform(0.38, 0.48) * size
    eye_y = cy - 0.10 * ied
    angle = rng.uniform(-8.0, 8.0)
    # landmark geometry near the canonical alignment proportions (nose 0.47 IED
    # below the eyes, mouth 0.76 IED below, corners 0.62 IED apart), jittered
    nose_drop = rng.uniform(0.45, 0.49) * ied
    mouth_drop = rng.uniform(0.73, 0.78) * ied
    mouth_half = rng.uniform(0.29, 0.33) * ied

    # background: smooth gradient + texture; detail is deliberately
    # luma-dominant (gentle tints only), as in natural photographs, so
    # chroma-subsampled codecs are not floored by synthetic chroma noise
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    base = np.zeros((size, size, 3))
    g_dir = rng.uniform(-1, 1, size=2)
    grad = (xs * g_dir[0] + ys * g_dir[1]) / size
    bg_gray = rng.uniform(60, 170)
    bg = bg_gray + rng.uniform(-8, 8, size=3)
    bg_slope = rng.uniform(-40, 40) + rng.uniform(-6, 6, size=3)
    for c in range(3):
        base[:, :, c] = bg[c] + bg_slope[c] * grad

    tex = _textured_field(rng, size)
    chroma = _value_noise(rng, size, 8, 2.5)
    base[:, :, 0] += tex + chroma
    base[:, :, 1] += tex - 0.3 * chroma
    base[:, :, 2] += tex - chroma

    # head: skin-tone ellipse with soft edge and shading
    head_rx = ied * 0.95
    head_ry = ied * 1.25
    head = _ellipse_mask(size, cx, cy, head_rx, head_ry, softness=6.0)
    skin_gray = rng.uniform(150, 205)
    skin = skin_gray + np.array([rng.uniform(6, 14), rng.uniform(-2, 2),
                                 rng.uniform(-14, -6)])
    shade = _value_noise(rng, size, 6, 10.0) - 0.08 * np.abs(xs - cx)
    # fixed texture energy: keeps fidelity-vs-quality curves comparable across sources
    skin_tex = _textured_field(rng, size) * 0.6
    for c in range(3):
        layer = skin[c] + shade + skin_tex
        base[:, :, c] = base[:, :, c] * (1 - head) + layer * head

    # hair: dark cap above the eyes with stripe texture
    hair = _ellipse_mask(size, cx, cy - head_ry * 0.55, head_rx * 1.1, head_ry * 0.62, 5.0)
    hair *= (ys < eye_y - 0.28 * ied)
    strands = np.sin(xs * rng.uniform(0.35, 0.8) + _value_noise(rng, size, 12, 4.0)) * 14
    hair_color = np.array([rng.uniform(25, 90)] * 3) + rng.uniform(-12, 12, size=3)
    for c in range(3):
        base[:, :, c] = base[:, :, c] * (1 - hair) + (hair_color[c] + strands + tex * 0.5) * hair

    def put_ellipse(cx_, cy_, rx_, ry_, color, soft=1.5):
        m = _ellipse_mask(size, cx_, cy_, rx_, ry_, soft)
        for c in range(3):
            base[:, :, c] = base[:, :, c] * (1 - m) + color[c] * m

    # eyes: sclera, iris, pupil, brow
    ex_l, ex_r = cx - ied / 2, cx + ied / 2
    for ex in (ex_l, ex_r):
        put_ellipse(ex, eye_y, ied * 0.115, ied * 0.065, (235, 232, 228), 2.5)
        iris_gray = rng.uniform(50, 120)
        iris = iris_gray + rng.uniform(-8, 8, size=3)
        put_ellipse(ex, eye_y, ied * 0.05, ied * 0.05, iris, 1.2)
        put_ellipse(ex, eye_y, ied * 0.02, ied * 0.02, (15, 12, 12), 0.8)
        put_ellipse(ex, eye_y - ied * 0.14, ied * 0.16, ied * 0.035,
                    (max(0, hair_color[0] - 10),) * 3, 1.5)

    # nose: ridge shading and tip
    nose_y = eye_y + nose_drop
    put_ellipse(cx, nose_y - ied * 0.18, ied * 0.055, ied * 0.26,
                skin * 1.12, 4.0)
    put_ellipse(cx, nose_y, ied * 0.1, ied * 0.055, skin * 0.82, 2.5)
    for sgn in (-1, 1):
        put_ellipse(cx + sgn * ied * 0.055, nose_y + ied * 0.02,
                    ied * 0.022, ied * 0.018, skin * 0.45, 1.0)

    # mouth: two-tone lips
    mouth_y = eye_y + mouth_drop
    lip_gray = rng.uniform(90, 150)
    lip = (lip_gray + rng.uniform(8, 16), lip_gray - rng.uniform(2, 8),
           lip_gray - rng.uniform(2, 8))
    put_ellipse(cx, mouth_y - ied * 0.015, mouth_half * 1.05, ied * 0.035, lip, 2.0)
    put_ellipse(cx, mouth_y + ied * 0.03, mouth_half * 0.9, ied * 0.04,
                tuple(v * 0.85 for v in lip), 2.0)

    img = ImageBuffer.from_array(base)

    pts = np.array([
        [ex_l, eye_y],
        [ex_r, eye_y],
        [cx, nose_y],
        [cx - mouth_half, mouth_y],
        [cx + mouth_half, mouth_y],
    ])
    if angle != 0.0:
        pivot = ((size - 1) / 2.0, (size - 1) / 2.0)
        rot = SimilarityTransform.about(1.0, math.radians(angle), pivot, pivot)
        from .geometry import warp_similarity
        img = warp_similarity(img, rot, size, size)
        pts = rot.apply(pts)
    lm = LandmarkSet.from_array(pts)
    return img, lm


def generate_corpus(n: int, out_dir, seed: int, size: int = 640) -> Path:
    """Write `n` face images plus a landmarks CSV; returns the CSV path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        img, lm = generate_face(rng, size=size)
        name = f"face{i:04d}.png"
        (out_dir / name).write_bytes(encode_lossless(img))
        rows.append((name, lm))
    csv_path = out_dir / "landmarks.csv"
    write_landmarks_csv(csv_path, rows)
    return csv_path
