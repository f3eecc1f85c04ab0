"""Full-reference fidelity metrics and their conversion to training labels.

PSNR is computed over all three RGB channels; SSIM is computed on BT.601
luma with the standard 11x11 Gaussian window (sigma 1.5, K1=0.01,
K2=0.03, L=255) and mean aggregation over valid window positions. Both
choices are deliberate defaults, documented here because upstream
descriptions leave them open.

Labels: compressed samples get min-max normalised PSNR (bounds taken
empirically from the labeling run and persisted) or the raw SSIM value,
which already lives in [0, 1] after clamping; uncompressed samples get
the label 1 in both schemes.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import correlate2d

from .codecs import ImageBuffer, decode
from .errors import (
    DegenerateRange,
    DimensionMismatch,
    EmptyManifest,
    ImageTooSmall,
    MissingReference,
)

log = logging.getLogger(__name__)

PSNR = "psnr"
SSIM = "ssim"
LABEL_KINDS = (PSNR, SSIM)

# BT.601 luma weights
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class SsimParams:
    window_size: int = 11
    window_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 255.0

    def __post_init__(self):
        if self.window_size < 3 or self.window_size % 2 == 0:
            raise ImageTooSmall("window_size must be odd and >= 3")
        if self.k1 <= 0 or self.k2 <= 0:
            raise DegenerateRange("k1 and k2 must be positive")


DEFAULT_SSIM = SsimParams()


@dataclass
class LabelingConfig:
    kind: str
    psnr_min: float = 0.0
    psnr_max: float = 0.0
    psnr_cap: float = 100.0
    ssim: SsimParams = field(default_factory=SsimParams)


@dataclass(frozen=True)
class LabeledSample:
    sample_id: str
    label: float
    kind: str


def _check_shapes(ref: ImageBuffer, test: ImageBuffer) -> None:
    if ref.pixels.shape != test.pixels.shape:
        raise DimensionMismatch(
            f"shape mismatch: {ref.pixels.shape} vs {test.pixels.shape}")


def mse(ref: ImageBuffer, test: ImageBuffer) -> float:
    """Mean squared difference over all samples, in float64."""
    _check_shapes(ref, test)
    diff = ref.pixels.astype(np.float64) - test.pixels.astype(np.float64)
    return float(np.mean(diff * diff))


def psnr(ref: ImageBuffer, test: ImageBuffer, cap: float = 100.0) -> float:
    """10*log10(255^2 / MSE) in dB; returns `cap` for identical images."""
    err = mse(ref, test)
    if err == 0.0:
        return cap
    return 10.0 * math.log10(255.0 ** 2 / err)


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    """Normalised 2D Gaussian kernel used for SSIM local statistics."""
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g1 = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    g2 = np.outer(g1, g1)
    return g2 / g2.sum()


def luma(img: ImageBuffer) -> np.ndarray:
    return img.pixels.astype(np.float64) @ _LUMA


def ssim(ref: ImageBuffer, test: ImageBuffer, params: SsimParams = DEFAULT_SSIM) -> float:
    """Mean SSIM index over all valid window positions, clamped to [0, 1]."""
    _check_shapes(ref, test)
    n = params.window_size
    if ref.height < n or ref.width < n:
        raise ImageTooSmall(f"image {ref.width}x{ref.height} smaller than {n}x{n} window")
    x = luma(ref)
    y = luma(test)
    w = gaussian_window(n, params.window_sigma)
    c1 = (params.k1 * params.dynamic_range) ** 2
    c2 = (params.k2 * params.dynamic_range) ** 2

    mu_x = correlate2d(x, w, mode="valid")
    mu_y = correlate2d(y, w, mode="valid")
    xx = correlate2d(x * x, w, mode="valid") - mu_x * mu_x
    yy = correlate2d(y * y, w, mode="valid") - mu_y * mu_y
    xy = correlate2d(x * y, w, mode="valid") - mu_x * mu_y

    num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    value = float(np.mean(num / den))
    if value < 0.0:
        log.info("ssim clamped negative value %.6f to 0", value)
        return 0.0
    return min(value, 1.0)


def label_from_psnr(value: float, cfg: LabelingConfig) -> float:
    """Min-max normalise one PSNR value with the run's stored bounds."""
    if cfg.psnr_max <= cfg.psnr_min:
        raise DegenerateRange("psnr_min must be < psnr_max")
    t = (value - cfg.psnr_min) / (cfg.psnr_max - cfg.psnr_min)
    return min(1.0, max(0.0, t))


def build_labels(manifest, kind: str) -> tuple[list[LabeledSample], LabelingConfig]:
    """Compute one [0, 1] label per manifest record.

    PSNR labels are min-max normalised over the compressed samples of this
    manifest; the empirical bounds land in the returned LabelingConfig and
    must be persisted for reproducibility. SSIM labels are used directly.
    Uncompressed samples are labeled 1 in both schemes.
    """
    if kind not in LABEL_KINDS:
        raise DegenerateRange(f"unknown label kind {kind!r}")
    records = [r for r in manifest.records if not r.error]
    if not records:
        raise EmptyManifest("no usable records to label")

    cfg = LabelingConfig(kind=kind)
    values: dict[str, float] = {}
    for rec in records:
        if not rec.compressed:
            continue
        if not rec.reference_path:
            raise MissingReference(f"{rec.sample_id} has no reference image")
        try:
            ref = decode(Path(manifest.resolve(rec.reference_path)).read_bytes())
            out = decode(Path(manifest.resolve(rec.path)).read_bytes())
        except OSError as exc:
            raise MissingReference(f"{rec.sample_id}: {exc}") from exc
        if kind == PSNR:
            values[rec.sample_id] = psnr(ref, out, cap=cfg.psnr_cap)
        else:
            values[rec.sample_id] = ssim(ref, out, cfg.ssim)

    labeled: list[LabeledSample] = []
    if kind == PSNR:
        if values:
            lo, hi = min(values.values()), max(values.values())
            if lo == hi:
                raise DegenerateRange("all compressed samples share one PSNR value")
            cfg.psnr_min, cfg.psnr_max = lo, hi
        for rec in records:
            label = 1.0 if not rec.compressed else label_from_psnr(values[rec.sample_id], cfg)
            labeled.append(LabeledSample(rec.sample_id, label, kind))
    else:
        for rec in records:
            label = 1.0 if not rec.compressed else values[rec.sample_id]
            labeled.append(LabeledSample(rec.sample_id, label, kind))
    return labeled, cfg


def write_labeled_manifest(path, manifest, labeled: list[LabeledSample]) -> None:
    """Manifest CSV extended with `label` and `label_kind` columns.

    Image paths are rebased so they stay resolvable relative to the labeled
    manifest's own directory, which usually differs from the source
    manifest's.
    """
    from .synth import CSV_COLUMNS  # local import to avoid a module cycle

    path = Path(path)
    out_dir = path.parent

    def rebase(rel: str) -> str:
        if not rel:
            return ""
        return os.path.relpath(manifest.resolve(rel), start=out_dir)

    by_id = {s.sample_id: s for s in labeled}
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS + ["label", "label_kind"])
        for rec in manifest.records:
            sample = by_id.get(rec.sample_id)
            if sample is None:
                continue
            comp = rec.recipe.compression
            writer.writerow([
                rec.sample_id, rec.source_id, rebase(rec.path),
                rebase(rec.reference_path),
                "true" if rec.compressed else "false",
                comp.codec if comp else "",
                comp.encoder_id if comp else "",
                comp.quality if comp else "",
                rec.recipe.target_ied, rec.recipe.rotation_angle_deg,
                "true" if rec.recipe.flipped else "false",
                rec.error, repr(sample.label), sample.kind,
            ])


def read_labeled_manifest(path) -> tuple[list[dict], str]:
    """Rows of a labeled manifest plus the label kind used."""
    rows = []
    kinds = set()
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            row["label"] = float(row["label"])
            rows.append(row)
            kinds.add(row["label_kind"])
    if not rows:
        raise EmptyManifest(f"{path} holds no labeled samples")
    if len(kinds) != 1:
        raise DegenerateRange(f"mixed label kinds in {path}: {sorted(kinds)}")
    return rows, kinds.pop()


def write_labels_meta(path, cfg: LabelingConfig) -> None:
    lines = [f"kind = {cfg.kind}"]
    if cfg.kind == PSNR:
        lines += [f"psnr_min = {cfg.psnr_min!r}",
                  f"psnr_max = {cfg.psnr_max!r}",
                  f"psnr_cap = {cfg.psnr_cap!r}"]
    lines += [f"ssim_window_size = {cfg.ssim.window_size}",
              f"ssim_window_sigma = {cfg.ssim.window_sigma!r}",
              f"ssim_k1 = {cfg.ssim.k1!r}",
              f"ssim_k2 = {cfg.ssim.k2!r}",
              f"ssim_dynamic_range = {cfg.ssim.dynamic_range!r}"]
    Path(path).write_text("\n".join(lines) + "\n")


def read_labels_meta(path) -> LabelingConfig:
    kv = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        kv[key.strip()] = value.strip()
    ssim_params = SsimParams(
        window_size=int(kv.get("ssim_window_size", 11)),
        window_sigma=float(kv.get("ssim_window_sigma", 1.5)),
        k1=float(kv.get("ssim_k1", 0.01)),
        k2=float(kv.get("ssim_k2", 0.03)),
        dynamic_range=float(kv.get("ssim_dynamic_range", 255.0)),
    )
    return LabelingConfig(
        kind=kv["kind"],
        psnr_min=float(kv.get("psnr_min", 0.0)),
        psnr_max=float(kv.get("psnr_max", 0.0)),
        psnr_cap=float(kv.get("psnr_cap", 100.0)),
        ssim=ssim_params,
    )
