"""Dataset synthesis: augmentation plans, degradation recipes, manifests.

A plan draws, per source image, a target inter-eye distance and an
optional rotation, then enumerates compression recipes over a quality
grid. Training plans default to the three-list grid

* JPEG, encoder B: every even quality in [20, 100]
* JPEG 2000, encoder A: every even quality in [20, 100]
* JPEG 2000, encoder B: every odd quality in [31, 99]

(117 compressed recipes) plus two uncompressed recipes (original and
horizontal flip). Test plans draw the IED from {60, 90, 120, 140} and a
random quality from {20, ..., 70} per compressed sample, compressing the
original and the flipped variant once per codec with encoder A, which
yields the 2:2:2 uncompressed/JPEG/JPEG 2000 ratio per source.

Rotation exists to diversify compression artefacts, so only compressed
recipes carry an angle; uncompressed samples are scaled, optionally
flipped and cropped. Every sample's label reference is the geometrically
identical but uncompressed image, so fidelity metrics isolate
compression damage from resampling damage. Execution is deterministic:
all random draws happen at planning time from per-source hashes of the
master seed, and the manifest is ordered by (source, recipe index)
regardless of worker count.
"""

from __future__ import annotations

import csv
import hashlib
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import codecs, geometry
from .codecs import CompressionSpec, EncoderBindings, DEFAULT_BINDINGS, ImageBuffer
from .errors import EmptySourceList
from .geometry import AlignmentTemplate, CANONICAL_TEMPLATE, LandmarkSet, SimilarityTransform

PLAN_TRAINING = "training"
PLAN_TEST_UPRIGHT = "test-upright"
PLAN_TEST_ROTATED = "test-rotated"
PLAN_KINDS = (PLAN_TRAINING, PLAN_TEST_UPRIGHT, PLAN_TEST_ROTATED)

TRAINING_IED_SET = (60, 70, 80, 90, 100, 110, 120, 130, 140, 200)
TEST_IED_SET = (60, 90, 120, 140)
TEST_QUALITY_SET = (20, 30, 40, 50, 60, 70)
TRAINING_MAX_ABS_ANGLE = 8
TEST_MAX_ABS_ANGLE = 15


@dataclass(frozen=True)
class GridEntry:
    codec: str
    encoder_id: str
    qualities: tuple[int, ...]


@dataclass(frozen=True)
class GridSpec:
    entries: tuple[GridEntry, ...]

    @property
    def total(self) -> int:
        return sum(len(e.qualities) for e in self.entries)


DEFAULT_TRAINING_GRID = GridSpec(entries=(
    GridEntry(codecs.JPEG, "B", tuple(range(20, 101, 2))),
    GridEntry(codecs.JPEG2000, "A", tuple(range(20, 101, 2))),
    GridEntry(codecs.JPEG2000, "B", tuple(range(31, 100, 2))),
))


@dataclass(frozen=True)
class DegradationRecipe:
    """Everything that happens to one aligned source to make one sample."""

    target_ied: int
    rotation_angle_deg: int = 0
    compression: CompressionSpec | None = None
    flipped: bool = False
    final_size: int = 248
    final_ied: int = 124


@dataclass
class SampleRecord:
    sample_id: str
    source_id: str
    recipe: DegradationRecipe
    path: str = ""
    reference_path: str = ""
    error: str = ""

    @property
    def compressed(self) -> bool:
        return self.recipe.compression is not None


@dataclass
class DatasetManifest:
    records: list[SampleRecord]
    master_seed: int
    plan_kind: str
    bindings: EncoderBindings = field(default_factory=EncoderBindings)
    root: Path | None = None

    def resolve(self, rel_path: str) -> Path:
        p = Path(rel_path)
        if p.is_absolute() or self.root is None:
            return p
        return self.root / p


@dataclass(frozen=True)
class SourceImage:
    source_id: str
    path: str
    landmarks: LandmarkSet


CSV_COLUMNS = ["sample_id", "source_id", "path", "reference_path", "compressed",
               "codec", "encoder", "quality", "ied", "angle_deg", "flipped", "error"]


def seed_hash(*parts) -> int:
    """Stable 64-bit seed from arbitrary string-convertible parts."""
    key = "\x1f".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


def plan_training(sources: list[str], seed: int,
                  grid: GridSpec = DEFAULT_TRAINING_GRID) -> list[list[DegradationRecipe]]:
    """Per source: two uncompressed recipes plus one recipe per grid quality.

    The target IED is drawn uniformly from {60, 70, ..., 140, 200} and, with
    probability 0.5, a rotation angle uniform over the integers [-8, 8].
    All recipes of one source share that geometry; only the second
    uncompressed recipe is flipped.
    """
    if not sources:
        raise EmptySourceList("training plan needs at least one source")
    plans = []
    for source_id in sources:
        rng = np.random.default_rng(seed_hash(seed, source_id, "plan"))
        ied = int(rng.choice(TRAINING_IED_SET))
        angle = 0
        if rng.random() < 0.5:
            angle = int(rng.integers(-TRAINING_MAX_ABS_ANGLE, TRAINING_MAX_ABS_ANGLE + 1))
        # rotation diversifies compression artefacts; uncompressed samples skip it
        recipes = [
            DegradationRecipe(target_ied=ied),
            DegradationRecipe(target_ied=ied, flipped=True),
        ]
        for entry in grid.entries:
            for q in entry.qualities:
                spec = CompressionSpec(entry.codec, entry.encoder_id, int(q))
                recipes.append(DegradationRecipe(target_ied=ied, rotation_angle_deg=angle,
                                                 compression=spec))
        plans.append(recipes)
    return plans


def plan_test(sources: list[str], protocol: str, seed: int,
              quality_set: tuple[int, ...] = TEST_QUALITY_SET) -> list[list[DegradationRecipe]]:
    """Per source: original + flip, each uncompressed, JPEG'd and JPEG 2000'd.

    Rotated protocol adds, with probability 0.5, an angle uniform over the
    integers [-15, 15]; Upright forces angle 0. Compression uses encoder A
    with one quality drawn per compressed sample from `quality_set`.
    """
    if protocol not in (PLAN_TEST_UPRIGHT, PLAN_TEST_ROTATED):
        raise EmptySourceList(f"unknown test protocol {protocol!r}")
    if not sources:
        raise EmptySourceList("test plan needs at least one source")
    plans = []
    for source_id in sources:
        rng = np.random.default_rng(seed_hash(seed, source_id, "plan"))
        ied = int(rng.choice(TEST_IED_SET))
        angle = 0
        if protocol == PLAN_TEST_ROTATED and rng.random() < 0.5:
            angle = int(rng.integers(-TEST_MAX_ABS_ANGLE, TEST_MAX_ABS_ANGLE + 1))
        draw = lambda: int(rng.choice(quality_set))  # noqa: E731 - local shorthand
        recipes = [
            DegradationRecipe(target_ied=ied),
            DegradationRecipe(target_ied=ied, flipped=True),
            DegradationRecipe(target_ied=ied, rotation_angle_deg=angle,
                              compression=CompressionSpec(codecs.JPEG, "A", draw())),
            DegradationRecipe(target_ied=ied, rotation_angle_deg=angle, flipped=True,
                              compression=CompressionSpec(codecs.JPEG, "A", draw())),
            DegradationRecipe(target_ied=ied, rotation_angle_deg=angle,
                              compression=CompressionSpec(codecs.JPEG2000, "A", draw())),
            DegradationRecipe(target_ied=ied, rotation_angle_deg=angle, flipped=True,
                              compression=CompressionSpec(codecs.JPEG2000, "A", draw())),
        ]
        plans.append(recipes)
    return plans


def _base_geometry(aligned: ImageBuffer, lm: LandmarkSet, target_ied: int,
                   angle_deg: int, template_ied: float) -> tuple[ImageBuffer, np.ndarray]:
    """Scale to the target IED and rotate, unflipped; one resampling pass."""
    s = target_ied / template_ied
    out_w = max(1, round(aligned.width * s))
    out_h = max(1, round(aligned.height * s))
    t_pre = SimilarityTransform.about(
        s, math.radians(angle_deg),
        pivot_in=((aligned.width - 1) / 2.0, (aligned.height - 1) / 2.0),
        pivot_out=((out_w - 1) / 2.0, (out_h - 1) / 2.0))
    pre = geometry.warp_similarity(aligned, t_pre, out_w, out_h)
    lm_pre = t_pre.apply(lm.as_array())
    return pre, lm_pre


def _post_transform(lm_pre: np.ndarray, recipe: DegradationRecipe,
                    canvas_w: int, canvas_h: int) -> SimilarityTransform:
    """Back-rotation, rescale to the final IED and the inner-face crop, fused."""
    pivot = ((canvas_w - 1) / 2.0, (canvas_h - 1) / 2.0)
    t_back = SimilarityTransform.about(1.0, math.radians(-recipe.rotation_angle_deg),
                                       pivot, pivot)
    s2 = recipe.final_ied / recipe.target_ied
    t_scale = SimilarityTransform(s2, 0.0, 0.0, 0.0)
    lm_fin = t_scale.apply(t_back.apply(lm_pre))
    eye_mid = (lm_fin[0] + lm_fin[1]) / 2.0
    face_center = eye_mid + np.array([0.0, 0.25 * recipe.final_ied])
    half = (recipe.final_size - 1) / 2.0
    t_crop = SimilarityTransform(1.0, 0.0, half - face_center[0], half - face_center[1])
    return t_back.then(t_scale).then(t_crop)


def _mirror_points(points: np.ndarray, width: int) -> np.ndarray:
    out = points.copy()
    out[:, 0] = (width - 1) - out[:, 0]
    return out


def _stages(aligned: ImageBuffer, lm: LandmarkSet, recipe: DegradationRecipe,
            template_ied: float) -> tuple[ImageBuffer, SimilarityTransform, ImageBuffer]:
    """Pre-codec image, post-codec transform and the labeling reference.

    Flipped recipes are realized as the exact mirror of the unflipped
    pipeline run at the negated rotation angle, which is the same content
    (mirroring conjugates rotations) but keeps flip-then-process and
    process-then-flip bit-identical for codec-free pipelines.
    """
    base_angle = -recipe.rotation_angle_deg if recipe.flipped else recipe.rotation_angle_deg
    pre_u, lm_pre_u = _base_geometry(aligned, lm, recipe.target_ied, base_angle,
                                     template_ied)
    base_recipe = replace(recipe, flipped=False, rotation_angle_deg=base_angle)
    t_post_u = _post_transform(lm_pre_u, base_recipe, pre_u.width, pre_u.height)
    ref_u = geometry.warp_similarity(pre_u, t_post_u, recipe.final_size, recipe.final_size)
    if not recipe.flipped:
        return pre_u, t_post_u, ref_u
    pre_f = geometry.flip_horizontal(pre_u)
    t_post_f = _post_transform(_mirror_points(lm_pre_u, pre_u.width), recipe,
                               pre_f.width, pre_f.height)
    return pre_f, t_post_f, geometry.flip_horizontal(ref_u)


def apply_recipe(aligned: ImageBuffer, aligned_lm: LandmarkSet, recipe: DegradationRecipe,
                 bindings: EncoderBindings = DEFAULT_BINDINGS,
                 template_ied: float = CANONICAL_TEMPLATE.target_ied,
                 ) -> tuple[ImageBuffer, ImageBuffer]:
    """Run one recipe; returns (final, reference), both final_size squares.

    `reference` is the identical pipeline with the encode/decode step
    skipped: the labeling reference. Adjacent pure-geometry steps are fused
    into single resampling passes, which keeps interpolation loss down; the
    codec step always sees the flipped/scaled/rotated image and the back
    rotation always happens after decoding, as the protocol requires.
    """
    pre, t_post, reference = _stages(aligned, aligned_lm, recipe, template_ied)
    if recipe.compression is None:
        return reference, reference
    encoded = codecs.encode(pre, recipe.compression, bindings)
    degraded = codecs.decode(encoded.data)
    final = geometry.warp_similarity(degraded, t_post, recipe.final_size, recipe.final_size)
    return final, reference


def _sanitize(name: str) -> str:
    stem = Path(name).stem
    return re.sub(r"[^A-Za-z0-9_.-]", "_", stem)[:64] or "src"


def sample_id_for(source_id: str, recipe_index: int) -> str:
    h8 = hashlib.sha256(source_id.encode()).hexdigest()[:8]
    return f"{_sanitize(source_id)}-{h8}-r{recipe_index:03d}"


def _geometry_key(recipe: DegradationRecipe):
    return (recipe.flipped, recipe.target_ied, recipe.rotation_angle_deg)


def _process_source(args) -> list[SampleRecord]:
    """Synthesize every recipe of one source. Runs in worker processes."""
    (source, recipes, out_dir, bindings, template) = args
    out_dir = Path(out_dir)
    records = [SampleRecord(sample_id_for(source.source_id, i), source.source_id, r)
               for i, r in enumerate(recipes)]
    try:
        img = codecs.decode(Path(source.path).read_bytes())
        aligned = geometry.align_face(img, source.landmarks, template)
    except Exception as exc:
        msg = f"{type(exc).__name__}: {exc}"
        for rec in records:
            rec.error = msg
        return records

    lm = template.target_points
    groups: dict[tuple, list[int]] = {}
    for i, rec in enumerate(records):
        groups.setdefault(_geometry_key(rec.recipe), []).append(i)

    # one scale+rotate pass and one reference per distinct unflipped geometry;
    # flipped groups reuse the negated-angle base through an exact mirror
    base_cache: dict[tuple, tuple] = {}

    def base_for(recipe: DegradationRecipe):
        base_angle = (-recipe.rotation_angle_deg if recipe.flipped
                      else recipe.rotation_angle_deg)
        key = (recipe.target_ied, base_angle)
        if key not in base_cache:
            pre_u, lm_pre_u = _base_geometry(aligned, lm, recipe.target_ied,
                                             base_angle, template.target_ied)
            base_recipe = replace(recipe, flipped=False, rotation_angle_deg=base_angle)
            t_post_u = _post_transform(lm_pre_u, base_recipe, pre_u.width, pre_u.height)
            ref_u = geometry.warp_similarity(pre_u, t_post_u,
                                             recipe.final_size, recipe.final_size)
            base_cache[key] = (pre_u, lm_pre_u, t_post_u, ref_u)
        return base_cache[key]

    for key, indices in groups.items():
        first = records[indices[0]].recipe
        try:
            pre_u, lm_pre_u, t_post_u, ref_u = base_for(first)
            if first.flipped:
                pre = geometry.flip_horizontal(pre_u)
                t_post = _post_transform(_mirror_points(lm_pre_u, pre_u.width), first,
                                         pre.width, pre.height)
                reference = geometry.flip_horizontal(ref_u)
            else:
                pre, t_post, reference = pre_u, t_post_u, ref_u
        except Exception as exc:  # pragma: no cover - geometry failures are systemic
            for i in indices:
                records[i].error = f"{type(exc).__name__}: {exc}"
            continue

        ref_rel = None
        uncompressed_idx = [i for i in indices if records[i].recipe.compression is None]
        if uncompressed_idx:
            i = uncompressed_idx[0]
            ref_rel = f"images/{records[i].sample_id}.png"
        else:
            flip_tag = "f" if first.flipped else "o"
            ref_rel = (f"references/{_sanitize(source.source_id)}"
                       f"-{hashlib.sha256(source.source_id.encode()).hexdigest()[:8]}"
                       f"-ied{first.target_ied}-a{first.rotation_angle_deg}-{flip_tag}.png")
        ref_abs = out_dir / ref_rel
        ref_abs.parent.mkdir(parents=True, exist_ok=True)
        ref_abs.write_bytes(codecs.encode_lossless(reference))

        for i in indices:
            rec = records[i]
            rel = f"images/{rec.sample_id}.png"
            try:
                if rec.recipe.compression is None:
                    final = reference
                    rec.reference_path = ""
                else:
                    encoded = codecs.encode(pre, rec.recipe.compression, bindings)
                    degraded = codecs.decode(encoded.data)
                    final = geometry.warp_similarity(degraded, t_post,
                                                     rec.recipe.final_size,
                                                     rec.recipe.final_size)
                    rec.reference_path = ref_rel
                target = out_dir / rel
                target.parent.mkdir(parents=True, exist_ok=True)
                if rec.recipe.compression is None and rel == ref_rel:
                    pass  # already written as the group reference
                else:
                    target.write_bytes(codecs.encode_lossless(final))
                rec.path = rel
            except Exception as exc:
                rec.error = f"{type(exc).__name__}: {exc}"
    return records


def run_synthesis(sources: list[SourceImage], plan_kind: str, out_dir, seed: int,
                  grid: GridSpec = DEFAULT_TRAINING_GRID,
                  quality_set: tuple[int, ...] = TEST_QUALITY_SET,
                  workers: int = 1,
                  bindings: EncoderBindings = DEFAULT_BINDINGS,
                  final_size: int = 248, final_ied: int = 124,
                  template: AlignmentTemplate = CANONICAL_TEMPLATE) -> DatasetManifest:
    """Plan and execute a full synthesis run; returns the persisted manifest.

    Per-sample failures are recorded in the manifest's error column and do
    not abort the run. Output is independent of `workers`.
    """
    if not sources:
        raise EmptySourceList("run_synthesis needs at least one source")
    if plan_kind == PLAN_TRAINING:
        plans = plan_training([s.source_id for s in sources], seed, grid)
    elif plan_kind in (PLAN_TEST_UPRIGHT, PLAN_TEST_ROTATED):
        plans = plan_test([s.source_id for s in sources], plan_kind, seed, quality_set)
    else:
        raise EmptySourceList(f"unknown plan kind {plan_kind!r}")
    if final_size != 248 or final_ied != 124:
        plans = [[replace(r, final_size=final_size, final_ied=final_ied) for r in recipes]
                 for recipes in plans]

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(src, recipes, str(out_dir), bindings, template)
            for src, recipes in zip(sources, plans)]

    if workers <= 1:
        results = [_process_source(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_process_source, jobs))

    records = [rec for chunk in results for rec in chunk]
    records.sort(key=lambda r: (r.source_id, r.sample_id))
    manifest = DatasetManifest(records=records, master_seed=seed, plan_kind=plan_kind,
                               bindings=bindings, root=out_dir)
    write_manifest(manifest, out_dir / "manifest.csv")
    return manifest


def write_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in manifest.records:
            comp = rec.recipe.compression
            writer.writerow([
                rec.sample_id, rec.source_id, rec.path, rec.reference_path,
                "true" if rec.compressed else "false",
                comp.codec if comp else "",
                comp.encoder_id if comp else "",
                comp.quality if comp else "",
                rec.recipe.target_ied, rec.recipe.rotation_angle_deg,
                "true" if rec.recipe.flipped else "false",
                rec.error,
            ])
    meta = [
        f"plan.kind = {manifest.plan_kind}",
        f"plan.seed = {manifest.master_seed}",
        f"plan.final_size = {manifest.records[0].recipe.final_size if manifest.records else 248}",
        f"plan.final_ied = {manifest.records[0].recipe.final_ied if manifest.records else 124}",
        f"codec.jpeg.backend = {manifest.bindings.jpeg}",
        f"codec.jp2.backendA = {manifest.bindings.jp2_a}",
        f"codec.jp2.backendB = {manifest.bindings.jp2_b}",
    ]
    path.with_suffix(".meta").write_text("\n".join(meta) + "\n")


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    meta_path = path.with_suffix(".meta")
    meta = {}
    if meta_path.exists():
        for line in meta_path.read_text().splitlines():
            key, _, value = line.partition("=")
            if key.strip():
                meta[key.strip()] = value.strip()
    final_size = int(meta.get("plan.final_size", 248))
    final_ied = int(meta.get("plan.final_ied", 124))
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            comp = None
            if row["compressed"] == "true":
                comp = CompressionSpec(row["codec"], row["encoder"], int(row["quality"]))
            recipe = DegradationRecipe(
                target_ied=int(row["ied"]),
                rotation_angle_deg=int(row["angle_deg"]),
                compression=comp,
                flipped=row["flipped"] == "true",
                final_size=final_size, final_ied=final_ied,
            )
            records.append(SampleRecord(
                sample_id=row["sample_id"], source_id=row["source_id"], recipe=recipe,
                path=row["path"], reference_path=row["reference_path"],
                error=row["error"]))
    bindings = EncoderBindings(
        jpeg=meta.get("codec.jpeg.backend", DEFAULT_BINDINGS.jpeg),
        jp2_a=meta.get("codec.jp2.backendA", DEFAULT_BINDINGS.jp2_a),
        jp2_b=meta.get("codec.jp2.backendB", DEFAULT_BINDINGS.jp2_b))
    return DatasetManifest(records=records,
                           master_seed=int(meta.get("plan.seed", 0)),
                           plan_kind=meta.get("plan.kind", PLAN_TRAINING),
                           bindings=bindings, root=path.parent)
