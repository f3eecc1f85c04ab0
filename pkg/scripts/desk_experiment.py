#!/usr/bin/env python3
"""Desk-scale end-to-end experiment.

Generates a synthetic face corpus, synthesizes compressed training data
with a reduced quality grid (one encoder per codec), trains the compact
regressor on PSNR labels, and evaluates on a source-disjoint test split:

* Spearman correlation between raw network output and the compression
  quality parameter (uncompressed counted as quality 100),
* EER for separating uncompressed from heavily compressed (quality <= 40),
* a DET report per codec slice and an EDC curve over synthetic mated
  comparisons whose similarities degrade with pair quality.

Everything runs from scratch in roughly 15-25 minutes on one CPU core;
pass --sources/--epochs to scale up or down.
"""

import argparse
import time
from pathlib import Path

import numpy as np

from facecomp_qc import codecs, evaluation, facegen, geometry, metrics, regressor, synth
from facecomp_qc.regressor import TrainSample


def log(msg: str) -> None:
    print(f"[{time.strftime('%H:%M:%S')}] {msg}", flush=True)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--sources", type=int, default=200)
    parser.add_argument("--seed", type=int, default=2024)
    parser.add_argument("--epochs", type=int, default=None,
                        help="default: regressor desk settings")
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--resolution", type=int, default=256)
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    log(f"generating {args.sources} sources")
    csv_path = facegen.generate_corpus(args.sources, out / "corpus", seed=args.seed)
    pairs = geometry.read_landmarks_csv(csv_path)
    sources = [synth.SourceImage(p, str(out / "corpus" / p), lm) for p, lm in pairs]

    grid = synth.GridSpec(entries=(
        synth.GridEntry(codecs.JPEG, "B", tuple(range(20, 101, 10))),
        synth.GridEntry(codecs.JPEG2000, "B", tuple(range(20, 101, 10))),
    ))
    log("synthesizing degraded dataset")
    manifest = synth.run_synthesis(sources, synth.PLAN_TRAINING, out / "data",
                                   seed=args.seed, grid=grid, workers=args.workers)
    failures = sum(1 for r in manifest.records if r.error)
    log(f"{len(manifest.records)} records ({failures} failed)")

    log("building PSNR labels")
    labeled, cfg = metrics.build_labels(manifest, metrics.PSNR)
    metrics.write_labeled_manifest(out / "data" / "labeled_manifest.csv", manifest, labeled)
    metrics.write_labels_meta(out / "data" / "labels.meta", cfg)
    label_by_id = {s.sample_id: s.label for s in labeled}

    src_ids = sorted({r.source_id for r in manifest.records})
    rng = np.random.default_rng(args.seed)
    rng.shuffle(src_ids)
    train_src = set(src_ids[: int(round(0.8 * len(src_ids)))])
    train_samples, test_records = [], []
    for rec in manifest.records:
        if rec.error:
            continue
        if rec.source_id in train_src:
            train_samples.append(TrainSample(str(manifest.resolve(rec.path)),
                                             label_by_id[rec.sample_id], rec.source_id))
        else:
            test_records.append(rec)
    log(f"train {len(train_samples)} samples / test {len(test_records)} "
        f"({len(src_ids) - len(train_src)} held-out sources)")

    hp = regressor.desk_hyperparams(n_train=len(train_samples),
                                    batch_size=args.batch_size,
                                    input_resolution=args.resolution,
                                    epochs=args.epochs)
    log(f"training compact-v1: {hp}")
    artifact = regressor.train(train_samples, hp, seed=args.seed)
    regressor.save_artifact(artifact, out / "model")
    log(f"train mse {artifact.info['train_mse_initial']:.4f} -> "
        f"{artifact.info['train_mse_final']:.4f}")

    log("scoring held-out split")
    raws = regressor.predict_raw_batch(
        artifact, [str(manifest.resolve(r.path)) for r in test_records])
    sigmoid = regressor.calibrate_sigmoid(raws)
    artifact = regressor.with_sigmoid(artifact, sigmoid)
    regressor.save_artifact(artifact, out / "model")

    qparam = [100 if not r.compressed else r.recipe.compression.quality
              for r in test_records]
    rho = evaluation.spearman(raws, qparam)
    unc = [s for s, r in zip(raws, test_records) if not r.compressed]
    heavy = [s for s, r in zip(raws, test_records)
             if r.compressed and r.recipe.compression.quality <= 40]
    eer_value, threshold = evaluation.eer(unc, heavy)
    f1 = evaluation.f1_at(threshold, unc, heavy)
    log(f"spearman(raw, quality) = {rho:.4f}")
    log(f"uncompressed vs q<=40: eer = {eer_value:.4f}, f1@eer = {f1:.4f}")

    # synthetic mated comparisons: similarity erodes with the pair's min quality
    qualities = {r.sample_id: regressor.map_quality(s, sigmoid)
                 for r, s in zip(test_records, raws)}
    ids = [r.sample_id for r in test_records]
    comp_rng = np.random.default_rng(args.seed + 1)
    comparisons = []
    for i in range(0, len(ids) - 1, 2):
        pair_q = min(qualities[ids[i]], qualities[ids[i + 1]])
        sim = 0.5 + 0.5 * (pair_q / 100.0) + comp_rng.normal(0, 0.05)
        comparisons.append(evaluation.ComparisonRecord(ids[i], ids[i + 1],
                                                       float(sim), True))
    threshold = evaluation.fnmr_threshold([c.similarity for c in comparisons], 0.10)
    curve = evaluation.edc_curve(qualities, comparisons, threshold,
                                 evaluation.default_discard_grid())
    evaluation.write_edc_csv(out / "edc.csv", curve)
    log(f"edc: fnmr {curve[0].fnmr:.3f} at d=0 -> {curve[-1].fnmr:.3f} at d=0.30")
    log(f"done; artifacts in {out}")


if __name__ == "__main__":
    main()
