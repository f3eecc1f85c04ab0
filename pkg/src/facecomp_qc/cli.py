"""Command-line front-end wiring the full pipeline.

Commands: synth, label, train, grid-search, predict, calibrate, eval-det,
eval-edc, ratio. Every command resolves its configuration (CLI flags over
config file over defaults), writes the resolved key-value sidecar
``run_config.txt`` into the output directory before any other output, and
is deterministic given (input files, resolved config, seed); timestamps
only ever land in ``run.log``.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import codecs, config as cfgmod, evaluation, geometry, metrics, synth
from .errors import FaceCompError


def _log(out_dir: Path, message: str) -> None:
    stamp = time.strftime("%Y-%m-%d %H:%M:%S")
    with open(out_dir / "run.log", "a") as fh:
        fh.write(f"[{stamp}] {message}\n")


class Resolver:
    """Key-value resolution: CLI flag > config file > default."""

    def __init__(self, file_cfg: dict[str, str]):
        self.file_cfg = file_cfg
        self.resolved: dict[str, str] = {}

    def get(self, key: str, flag_value, default) -> str:
        if flag_value is not None:
            value = str(flag_value)
        elif key in self.file_cfg:
            value = self.file_cfg[key]
        else:
            value = str(default)
        self.resolved[key] = value
        return value

    def get_int(self, key, flag_value, default) -> int:
        return int(self.get(key, flag_value, default))

    def get_float(self, key, flag_value, default) -> float:
        return float(self.get(key, flag_value, default))

    def get_bool(self, key, flag_value, default) -> bool:
        return self.get(key, flag_value, default).strip().lower() in ("true", "1", "yes")


def _make_resolver(args) -> Resolver:
    path = args.config or cfgmod.default_config_path()
    file_cfg = cfgmod.read_config(path) if path else {}
    return Resolver(file_cfg)


def _prepare_out(args, resolver: Resolver) -> Path:
    if not args.out:
        raise FaceCompError("--out directory is required")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfgmod.write_config(out_dir / "run_config.txt", resolver.resolved)
    return out_dir


def _finish_config(out_dir: Path, resolver: Resolver) -> None:
    # rewrite with every key that resolution touched
    cfgmod.write_config(out_dir / "run_config.txt", resolver.resolved)


def _load_sources(landmarks_csv: str) -> list[synth.SourceImage]:
    csv_path = Path(landmarks_csv)
    if not csv_path.exists():
        raise FaceCompError(f"landmark file not found: {csv_path}")
    base = csv_path.parent
    sources = []
    for image_path, lm in geometry.read_landmarks_csv(csv_path):
        p = Path(image_path)
        full = p if p.is_absolute() else base / p
        if not full.exists():
            raise FaceCompError(f"source image not found: {full}")
        sources.append(synth.SourceImage(source_id=image_path, path=str(full), landmarks=lm))
    return sources


def _grid_from(resolver: Resolver, args) -> synth.GridSpec:
    defaults = {e.encoder_id if e.codec == codecs.JPEG2000 else "jpeg":
                e.qualities for e in synth.DEFAULT_TRAINING_GRID.entries}
    jpeg_b = cfgmod.parse_quality_list(resolver.get(
        "plan.grid.jpeg_b", getattr(args, "grid_jpeg_b", None),
        cfgmod.format_quality_list(defaults["jpeg"])))
    jp2_a = cfgmod.parse_quality_list(resolver.get(
        "plan.grid.jp2_a", getattr(args, "grid_jp2_a", None),
        cfgmod.format_quality_list(defaults["A"])))
    jp2_b = cfgmod.parse_quality_list(resolver.get(
        "plan.grid.jp2_b", getattr(args, "grid_jp2_b", None),
        cfgmod.format_quality_list(defaults["B"])))
    entries = []
    if jpeg_b:
        entries.append(synth.GridEntry(codecs.JPEG, "B", jpeg_b))
    if jp2_a:
        entries.append(synth.GridEntry(codecs.JPEG2000, "A", jp2_a))
    if jp2_b:
        entries.append(synth.GridEntry(codecs.JPEG2000, "B", jp2_b))
    if not entries:
        raise FaceCompError("training grid is empty")
    return synth.GridSpec(entries=tuple(entries))


def _bindings_from(resolver: Resolver) -> codecs.EncoderBindings:
    return codecs.EncoderBindings(
        jpeg=resolver.get("codec.jpeg.backend", None, codecs.DEFAULT_BINDINGS.jpeg),
        jp2_a=resolver.get("codec.jp2.backendA", None, codecs.DEFAULT_BINDINGS.jp2_a),
        jp2_b=resolver.get("codec.jp2.backendB", None, codecs.DEFAULT_BINDINGS.jp2_b))


def cmd_synth(args) -> int:
    resolver = _make_resolver(args)
    plan_kind = resolver.get("plan.kind", args.plan, synth.PLAN_TRAINING)
    if plan_kind not in synth.PLAN_KINDS:
        raise FaceCompError(f"unknown plan kind {plan_kind!r}")
    seed = resolver.get_int("plan.seed", args.seed, 0)
    workers = resolver.get_int("run.workers", args.workers, 1)
    final_size = resolver.get_int("plan.final_size", None, 248)
    final_ied = resolver.get_int("plan.final_ied", None, 124)
    quality_set = cfgmod.parse_quality_list(resolver.get(
        "plan.test_qualities", None,
        cfgmod.format_quality_list(synth.TEST_QUALITY_SET)))
    grid = _grid_from(resolver, args)
    bindings = _bindings_from(resolver)
    sources = _load_sources(args.sources)
    resolver.resolved["input.sources"] = args.sources

    out_dir = _prepare_out(args, resolver)
    _log(out_dir, f"synth start: {len(sources)} sources, plan {plan_kind}")
    manifest = synth.run_synthesis(sources, plan_kind, out_dir, seed, grid=grid,
                                   quality_set=quality_set, workers=workers,
                                   bindings=bindings, final_size=final_size,
                                   final_ied=final_ied)
    failures = sum(1 for r in manifest.records if r.error)
    _finish_config(out_dir, resolver)
    _log(out_dir, f"synth done: {len(manifest.records)} records, {failures} failed")
    print(f"wrote {len(manifest.records)} records to {out_dir / 'manifest.csv'}"
          + (f" ({failures} failed)" if failures else ""))
    return 0 if failures == 0 else 3


def cmd_label(args) -> int:
    resolver = _make_resolver(args)
    kind = resolver.get("labels.kind", args.labels, metrics.PSNR)
    if kind not in metrics.LABEL_KINDS:
        raise FaceCompError(f"unknown label kind {kind!r}")
    manifest = synth.read_manifest(args.manifest)
    resolver.resolved["input.manifest"] = args.manifest
    out_dir = _prepare_out(args, resolver)
    _log(out_dir, f"label start: kind={kind}")
    labeled, cfg = metrics.build_labels(manifest, kind)
    metrics.write_labeled_manifest(out_dir / "labeled_manifest.csv", manifest, labeled)
    metrics.write_labels_meta(out_dir / "labels.meta", cfg)
    _finish_config(out_dir, resolver)
    _log(out_dir, f"label done: {len(labeled)} samples")
    print(f"wrote {len(labeled)} labels to {out_dir / 'labeled_manifest.csv'}")
    return 0


def _samples_from_labeled(path) -> tuple[list, str]:
    from .regressor import TrainSample

    rows, kind = metrics.read_labeled_manifest(path)
    base = Path(path).parent
    samples = []
    for row in rows:
        if row["error"]:
            continue
        p = Path(row["path"])
        samples.append(TrainSample(path=str(p if p.is_absolute() else base / p),
                                   label=row["label"], source_id=row["source_id"]))
    return samples, kind


def _hyperparams_from(resolver: Resolver, args):
    from .regressor import Hyperparams

    return Hyperparams(
        epochs=resolver.get_int("train.epochs", getattr(args, "epochs", None), 10),
        batch_size=resolver.get_int("train.batch_size", getattr(args, "batch_size", None), 256),
        learning_rate=resolver.get_float(
            "train.learning_rate", getattr(args, "learning_rate", None), 0.001),
        input_resolution=resolver.get_int(
            "train.input_resolution", getattr(args, "resolution", None), 256),
        trainable_scope=resolver.get(
            "train.trainable", getattr(args, "trainable", None), "all"),
        train_fraction=resolver.get_float(
            "train.train_fraction", getattr(args, "train_fraction", None), 1.0),
    )


def cmd_train(args) -> int:
    from . import regressor

    resolver = _make_resolver(args)
    hp = _hyperparams_from(resolver, args)
    seed = resolver.get_int("train.seed", args.seed, 0)
    train_on_all = resolver.get_bool("train.train_on_all",
                                     True if args.train_on_all else None, False)
    arch = resolver.get("train.architecture", args.architecture, regressor.COMPACT_V1)
    samples, kind = _samples_from_labeled(args.manifest)
    resolver.resolved["input.manifest"] = args.manifest
    out_dir = _prepare_out(args, resolver)
    _log(out_dir, f"train start: {len(samples)} samples, kind={kind}")
    artifact = regressor.train(samples, hp, seed, label_kind=kind,
                               architecture_id=arch, train_on_all=train_on_all)
    regressor.save_artifact(artifact, out_dir)
    _finish_config(out_dir, resolver)
    _log(out_dir, f"train done: mse {artifact.info['train_mse_initial']:.5f} -> "
                  f"{artifact.info['train_mse_final']:.5f}")
    print(f"model saved to {out_dir} "
          f"(train mse {artifact.info['train_mse_initial']:.5f} -> "
          f"{artifact.info['train_mse_final']:.5f})")
    return 0


def cmd_grid_search(args) -> int:
    from . import regressor

    resolver = _make_resolver(args)
    seed = resolver.get_int("train.seed", args.seed, 0)
    base = _hyperparams_from(resolver, args)
    grid_spec = resolver.get("grid.spec", args.grid, "")
    candidates = [base]
    if grid_spec:
        candidates = []
        axes = []
        for part in grid_spec.split(";"):
            name, _, values = part.partition("=")
            axes.append((name.strip(), [v.strip() for v in values.split(",")]))
        import itertools
        for combo in itertools.product(*(vals for _, vals in axes)):
            hp = base
            for (name, _), value in zip(axes, combo):
                caster = float if name in ("learning_rate", "train_fraction") else (
                    str if name == "trainable_scope" else int)
                hp = replace(hp, **{name: caster(value)})
            candidates.append(hp)
    if not candidates:
        raise FaceCompError("empty hyperparameter grid")
    samples, kind = _samples_from_labeled(args.manifest)
    resolver.resolved["input.manifest"] = args.manifest
    out_dir = _prepare_out(args, resolver)
    _log(out_dir, f"grid-search start: {len(candidates)} candidates")
    best = regressor.grid_search(candidates, samples, seed, label_kind=kind)
    lines = [f"epochs = {best.epochs}", f"batch_size = {best.batch_size}",
             f"learning_rate = {best.learning_rate!r}",
             f"input_resolution = {best.input_resolution}",
             f"trainable = {best.trainable_scope}",
             f"train_fraction = {best.train_fraction!r}"]
    (out_dir / "best_hyperparams.txt").write_text("\n".join(lines) + "\n")
    _finish_config(out_dir, resolver)
    _log(out_dir, "grid-search done")
    print(f"best hyperparameters written to {out_dir / 'best_hyperparams.txt'}")
    return 0


def cmd_predict(args) -> int:
    from . import regressor

    resolver = _make_resolver(args)
    batch = resolver.get_int("predict.batch_size", None, 64)
    artifact = regressor.load_artifact(args.model)
    manifest = synth.read_manifest(args.manifest)
    resolver.resolved["input.manifest"] = args.manifest
    resolver.resolved["input.model"] = args.model
    out_dir = _prepare_out(args, resolver)
    _log(out_dir, f"predict start: {len(manifest.records)} records")
    usable = [r for r in manifest.records if not r.error and r.path]
    paths = [str(manifest.resolve(r.path)) for r in usable]
    scores = regressor.predict_raw_batch(artifact, paths, batch_size=batch)
    with open(out_dir / "scores.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "raw_score", "quality"])
        for rec, raw in zip(usable, scores):
            quality = (regressor.map_quality(raw, artifact.sigmoid)
                       if artifact.sigmoid is not None else "")
            writer.writerow([rec.sample_id, repr(raw), quality])
    _finish_config(out_dir, resolver)
    _log(out_dir, f"predict done: {len(usable)} scores")
    print(f"wrote {len(usable)} scores to {out_dir / 'scores.csv'}")
    return 0


def _read_scores(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise FaceCompError(f"{path} holds no scores")
    for row in rows:
        row["raw_score"] = float(row["raw_score"])
        row["quality"] = int(row["quality"]) if row.get("quality") else None
    return rows


def cmd_calibrate(args) -> int:
    from . import regressor

    resolver = _make_resolver(args)
    artifact = regressor.load_artifact(args.model)
    rows = _read_scores(args.scores)
    resolver.resolved["input.model"] = args.model
    resolver.resolved["input.scores"] = args.scores
    sigmoid = regressor.calibrate_sigmoid([r["raw_score"] for r in rows])
    artifact = regressor.with_sigmoid(artifact, sigmoid)
    regressor.save_artifact(artifact, args.model)
    if args.out:
        out_dir = _prepare_out(args, resolver)
        (out_dir / "calibration.txt").write_text(
            f"midpoint = {sigmoid.midpoint!r}\nwidth = {sigmoid.width!r}\n")
        _finish_config(out_dir, resolver)
    print(f"sigmoid midpoint {sigmoid.midpoint:.6g}, width {sigmoid.width:.6g} "
          f"stored in {args.model}")
    return 0


def _det_slices(score_rows, manifest) -> dict[str, tuple[list, list, list, list]]:
    """slice -> (uncompressed raws, compressed raws, all raws, quality params)."""
    recs = {r.sample_id: r for r in manifest.records}
    slices = {}
    for name, codec_filter in (("jpeg", codecs.JPEG), ("jp2", codecs.JPEG2000),
                               ("all", None)):
        unc, comp, raws, params = [], [], [], []
        for row in score_rows:
            rec = recs.get(row["sample_id"])
            if rec is None or rec.error:
                continue
            spec = rec.recipe.compression
            if spec is None:
                unc.append(row["raw_score"])
                raws.append(row["raw_score"])
                params.append(100)
            elif codec_filter is None or spec.codec == codec_filter:
                comp.append(row["raw_score"])
                raws.append(row["raw_score"])
                params.append(spec.quality)
        slices[name] = (unc, comp, raws, params)
    return slices


def cmd_eval_det(args) -> int:
    resolver = _make_resolver(args)
    plot = resolver.get_bool("eval.plot", True if args.plot else None, False)
    rows = _read_scores(args.scores)
    manifest = synth.read_manifest(args.manifest)
    resolver.resolved["input.scores"] = args.scores
    resolver.resolved["input.manifest"] = args.manifest
    out_dir = _prepare_out(args, resolver)
    _log(out_dir, "eval-det start")

    report_rows = []
    svg_series = []
    for name, (unc, comp, raws, params) in _det_slices(rows, manifest).items():
        if not unc or not comp:
            raise FaceCompError(f"slice {name!r} lacks uncompressed or compressed scores")
        eer_value, threshold = evaluation.eer(unc, comp)
        f1 = evaluation.f1_at(threshold, unc, comp)
        rho = evaluation.spearman(raws, params)
        curve = evaluation.det_curve(unc, comp)
        evaluation.write_det_csv(out_dir / f"det_{name}.csv", curve)
        report_rows.append([name, len(unc), len(comp), repr(eer_value),
                            repr(threshold), repr(f1), repr(rho)])
        svg_series.append((name, [p.fpr for p in curve], [p.fnr for p in curve]))
    with open(out_dir / "report.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slice", "n_uncompressed", "n_compressed", "eer",
                         "eer_threshold", "f1", "spearman"])
        writer.writerows(report_rows)
    if plot:
        from .svgplot import line_plot
        line_plot(out_dir / "det.svg", svg_series, "false positive rate",
                  "false negative rate", "DET: compression detection")
    _finish_config(out_dir, resolver)
    _log(out_dir, "eval-det done")
    for row in report_rows:
        print(f"{row[0]}: eer={float(row[3]):.4f} f1={float(row[5]):.4f} "
              f"spearman={float(row[6]):.4f}")
    return 0


def cmd_eval_edc(args) -> int:
    resolver = _make_resolver(args)
    start_fnmr = resolver.get_float("eval.start_fnmr", args.start_fnmr, 0.10)
    stop = resolver.get_float("eval.discard_stop", None, 0.30)
    step = resolver.get_float("eval.discard_step", None, 0.01)
    plot = resolver.get_bool("eval.plot", True if args.plot else None, False)
    rows = _read_scores(args.scores)
    comparisons_path = Path(args.comparisons)
    if not comparisons_path.exists():
        raise FaceCompError(f"comparison file not found: {comparisons_path}")
    comparisons = [c for c in evaluation.read_comparisons_csv(comparisons_path) if c.mated]
    if not comparisons:
        raise FaceCompError("no mated comparisons in input")
    resolver.resolved["input.scores"] = args.scores
    resolver.resolved["input.comparisons"] = args.comparisons
    out_dir = _prepare_out(args, resolver)
    _log(out_dir, "eval-edc start")

    qualities = {}
    for row in rows:
        if row["quality"] is None:
            raise FaceCompError("scores file lacks quality values; run calibrate first")
        qualities[row["sample_id"]] = row["quality"]
    missing = 0
    for comp in comparisons:
        for sid in (comp.probe_id, comp.reference_id):
            if sid not in qualities:
                qualities[sid] = 0  # failed extraction: discarded first
                missing += 1
    failure_rate = missing / (2 * len(comparisons))

    threshold = evaluation.fnmr_threshold([c.similarity for c in comparisons], start_fnmr)
    grid = evaluation.default_discard_grid(stop, step)
    curve = evaluation.edc_curve(qualities, comparisons, threshold, grid)
    evaluation.write_edc_csv(out_dir / "edc.csv", curve)
    (out_dir / "edc_meta.txt").write_text(
        f"start_fnmr = {start_fnmr!r}\nthreshold = {threshold!r}\n"
        f"realized_start_fnmr = {curve[0].fnmr!r}\n"
        f"quality_failure_rate = {failure_rate!r}\n")
    if plot:
        from .svgplot import line_plot
        line_plot(out_dir / "edc.svg",
                  [("fnmr", [p.discard_fraction for p in curve],
                    [p.fnmr for p in curve])],
                  "discard fraction", "FNMR", "Error versus discard")
    _finish_config(out_dir, resolver)
    _log(out_dir, "eval-edc done")
    print(f"edc: threshold={threshold:.6g} start fnmr={curve[0].fnmr:.4f} "
          f"({len(curve)} grid points)")
    return 0


def cmd_ratio(args) -> int:
    resolver = _make_resolver(args)
    rows = []
    for image in args.images:
        data = Path(image).read_bytes()
        img = codecs.decode(data)
        ratio, score = codecs.compression_ratio(len(data), img.width, img.height)
        rows.append([image, len(data), img.width, img.height, repr(ratio), score])
    if args.out:
        out_dir = _prepare_out(args, resolver)
        with open(out_dir / "ratio.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["path", "byte_count", "width", "height", "ratio", "score"])
            writer.writerows(rows)
        _finish_config(out_dir, resolver)
    for row in rows:
        print(f"{row[0]}: ratio={float(row[4]):.6f} score={row[5]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facecomp-qc",
        description="Synthesize, train and evaluate a compression-artefact "
                    "quality component for face images.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="flat key-value config file "
                                        f"(default: ${cfgmod.ENV_CONFIG})")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("synth", help="plan and execute dataset synthesis")
    common(p)
    p.add_argument("--plan", choices=synth.PLAN_KINDS, default=None)
    p.add_argument("--sources", required=True, help="landmarks CSV (paths + 5 points)")
    p.add_argument("--grid-jpeg-b", help="JPEG/B quality grid, e.g. 20..100/2 or none")
    p.add_argument("--grid-jp2-a", help="JPEG2000/A quality grid")
    p.add_argument("--grid-jp2-b", help="JPEG2000/B quality grid")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("label", help="compute PSNR or SSIM training labels")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--labels", choices=metrics.LABEL_KINDS, default=None)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train", help="train the regression network")
    common(p)
    p.add_argument("--manifest", required=True, help="labeled manifest CSV")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--resolution", type=int, default=None)
    p.add_argument("--trainable", choices=("all", "head"), default=None)
    p.add_argument("--train-fraction", type=float, default=None)
    p.add_argument("--train-on-all", action="store_true",
                   help="skip the internal 80/20 source split")
    p.add_argument("--architecture", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid-search", help="exhaustive hyperparameter search")
    common(p)
    p.add_argument("--manifest", required=True, help="labeled manifest CSV")
    p.add_argument("--grid", default=None,
                   help="e.g. 'learning_rate=0.001,0.01;epochs=5,10'")
    p.set_defaults(func=cmd_grid_search)

    p = sub.add_parser("predict", help="score a manifest with a trained model")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("calibrate", help="fit the raw-score sigmoid of a model")
    common(p, out_required=False)
    p.add_argument("--model", required=True)
    p.add_argument("--scores", required=True, help="scores CSV from predict")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("eval-det", help="EER / F1 / Spearman per codec slice")
    common(p)
    p.add_argument("--scores", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--plot", action="store_true", help="emit det.svg")
    p.set_defaults(func=cmd_eval_det)

    p = sub.add_parser("eval-edc", help="error-versus-discard curve")
    common(p)
    p.add_argument("--scores", required=True, help="scores CSV with quality column")
    p.add_argument("--comparisons", required=True,
                   help="CSV probe_id,reference_id,similarity,mated")
    p.add_argument("--start-fnmr", type=float, default=None)
    p.add_argument("--plot", action="store_true", help="emit edc.svg")
    p.set_defaults(func=cmd_eval_edc)

    p = sub.add_parser("ratio", help="ISO-style file-size compression ratio")
    common(p, out_required=False)
    p.add_argument("images", nargs="+")
    p.set_defaults(func=cmd_ratio)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FaceCompError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
