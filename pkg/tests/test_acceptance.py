"""Acceptance suite: one test per release criterion, tolerances pinned.

Each test prints a single PASS line when its criterion holds; the
end-to-end experiment (criterion 6) dominates the runtime and stays
within a 30-minute single-core budget.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest
import torch

import reference_impls as ref
from facecomp_qc import codecs, evaluation, facegen, geometry, metrics, regressor, synth
from facecomp_qc.codecs import ImageBuffer
from facecomp_qc.geometry import SimilarityTransform, fit_similarity
from facecomp_qc.regressor import ARCHITECTURES, COMPACT_V1, TrainSample


def report(criterion: str, detail: str = "") -> None:
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {criterion}: PASS{suffix}")


def test_c1_metric_oracles():
    """psnr/ssim/mse match naive references within 1e-9 relative; < 1 min."""
    t0 = time.time()
    gen = np.random.default_rng(1001)
    worst = 0.0
    n_images = 1000
    for i in range(n_images):
        h = int(gen.integers(16, 45))
        w = int(gen.integers(16, 45))
        if i % 50 == 0:
            h = w = 64  # exercise the stated upper size too
        a = ImageBuffer(gen.integers(0, 256, (h, w, 3), dtype=np.uint8))
        b = ImageBuffer(gen.integers(0, 256, (h, w, 3), dtype=np.uint8))

        want_mse = ref.mse_ref(a.pixels, b.pixels)
        got_mse = metrics.mse(a, b)
        assert abs(got_mse - want_mse) <= 1e-9 * max(want_mse, 1e-12)
        worst = max(worst, abs(got_mse - want_mse) / max(want_mse, 1e-12))

        want_psnr = ref.psnr_ref(a.pixels, b.pixels)
        got_psnr = metrics.psnr(a, b)
        assert abs(got_psnr - want_psnr) <= 1e-9 * abs(want_psnr)

        want_ssim = ref.ssim_ref(a.pixels, b.pixels)
        got_ssim = metrics.ssim(a, b)
        assert abs(got_ssim - want_ssim) <= 1e-9 * max(abs(want_ssim), 1e-6)

    img = ImageBuffer(gen.integers(0, 256, (32, 32, 3), dtype=np.uint8))
    assert metrics.psnr(img, img, cap=100.0) == 100.0

    c1 = (0.01 * 255) ** 2
    closed_form = c1 / (255.0 ** 2 + c1)
    black = ImageBuffer(np.zeros((16, 16, 3), dtype=np.uint8))
    white = ImageBuffer(np.full((16, 16, 3), 255, dtype=np.uint8))
    assert abs(metrics.ssim(black, white) - closed_form) <= 1e-9 * closed_form

    elapsed = time.time() - t0
    assert elapsed < 60.0
    report("C1 metric oracles", f"{n_images} images, {elapsed:.1f}s, worst rel {worst:.2e}")


def test_c2_evaluation_oracles():
    """eer/det/f1/spearman equal brute-force oracles on 200 random trials; < 1 min."""
    t0 = time.time()
    gen = np.random.default_rng(2002)
    for trial in range(200):
        hi = 500 if trial % 10 == 0 else 120
        n_u = int(gen.integers(1, hi))
        n_c = int(gen.integers(1, hi))
        decimals = int(gen.integers(1, 4))  # coarse grids produce ties
        unc = list(np.round(gen.normal(0.6, 0.25, n_u), decimals))
        comp = list(np.round(gen.normal(0.35, 0.3, n_c), decimals))

        got_points = [(p.threshold, p.fpr, p.fnr)
                      for p in evaluation.det_curve(unc, comp)]
        want_points = ref.det_points_ref(unc, comp)
        assert len(got_points) == len(want_points)
        for (gt, gf, gn), (wt, wf, wn) in zip(got_points, want_points):
            assert gt == wt
            assert abs(gf - wf) <= 1e-12 and abs(gn - wn) <= 1e-12

        got_eer, got_thr = evaluation.eer(unc, comp)
        want_eer, want_thr = ref.eer_ref(unc, comp)
        assert got_thr == want_thr and abs(got_eer - want_eer) <= 1e-12
        assert abs(evaluation.f1_at(got_thr, unc, comp)
                   - ref.f1_ref(want_thr, unc, comp)) <= 1e-12

        n = int(gen.integers(2, 80))
        x = list(gen.integers(0, 8, n).astype(float))
        y = list(np.round(gen.normal(0, 1, n), 2))
        if len(set(x)) >= 2 and len(set(y)) >= 2:
            assert abs(evaluation.spearman(x, y) - ref.spearman_ref(x, y)) <= 1e-12

    elapsed = time.time() - t0
    assert elapsed < 60.0
    report("C2 evaluation oracles", f"200 trials, {elapsed:.1f}s")


def test_c3_similarity_recovery():
    """1000 random similarity transforms recovered to 1e-6, never a reflection; < 10 s."""
    t0 = time.time()
    gen = np.random.default_rng(3003)
    for _ in range(1000):
        scale = float(gen.uniform(0.2, 5.0))
        theta = float(gen.uniform(-math.pi, math.pi))
        tx, ty = gen.uniform(-100, 100, 2)
        n_pts = int(gen.integers(2, 8))
        src = gen.uniform(-60, 60, (n_pts, 2))
        while np.allclose(src, src[0]):
            src = gen.uniform(-60, 60, (n_pts, 2))
        truth = SimilarityTransform(scale, theta, float(tx), float(ty))
        got = fit_similarity(src, truth.apply(src))
        assert abs(got.scale - scale) <= 1e-6 * max(1.0, scale)
        assert abs(math.remainder(got.rotation - theta, math.tau)) <= 1e-6
        assert abs(got.tx - tx) <= 1e-5 and abs(got.ty - ty) <= 1e-5
        assert np.linalg.det(got.matrix()[:, :2]) > 0
    elapsed = time.time() - t0
    assert elapsed < 10.0
    report("C3 similarity recovery", f"1000 trials, {elapsed:.1f}s")


def test_c4_plan_shapes_and_worker_determinism(small_corpus, tmp_path):
    """117+2 recipes per source; 800/800/800 test counts; worker-independent bytes."""
    plans = synth.plan_training([f"s{i}" for i in range(25)], seed=6)
    for recipes in plans:
        assert sum(1 for r in recipes if r.compression is not None) == 117
        assert sum(1 for r in recipes if r.compression is None) == 2

    test_plans = synth.plan_test([f"s{i}" for i in range(400)],
                                 synth.PLAN_TEST_ROTATED, seed=6)
    flat = [r for recipes in test_plans for r in recipes]
    n_unc = sum(1 for r in flat if r.compression is None)
    n_jpeg = sum(1 for r in flat if r.compression and r.compression.codec == codecs.JPEG)
    n_jp2 = sum(1 for r in flat if r.compression and r.compression.codec == codecs.JPEG2000)
    assert (n_unc, n_jpeg, n_jp2) == (800, 800, 800)

    base = Path(small_corpus).parent
    sources = [synth.SourceImage(p, str(base / p), lm)
               for p, lm in geometry.read_landmarks_csv(small_corpus)][:3]
    grid = synth.GridSpec(entries=(
        synth.GridEntry(codecs.JPEG, "B", (20, 60)),
        synth.GridEntry(codecs.JPEG2000, "B", (31, 99)),
    ))
    synth.run_synthesis(sources, synth.PLAN_TRAINING, tmp_path / "w1", seed=9,
                        grid=grid, workers=1)
    synth.run_synthesis(sources, synth.PLAN_TRAINING, tmp_path / "w2", seed=9,
                        grid=grid, workers=3)
    assert (tmp_path / "w1" / "manifest.csv").read_bytes() \
        == (tmp_path / "w2" / "manifest.csv").read_bytes()
    report("C4 plan shapes + determinism", "117+2, 800/800/800, workers 1==3")


def test_c5_label_rules(small_corpus, tmp_path):
    """Uncompressed label exactly 1; min-max endpoints at 0/1; order preserved."""
    base = Path(small_corpus).parent
    sources = [synth.SourceImage(p, str(base / p), lm)
               for p, lm in geometry.read_landmarks_csv(small_corpus)][:4]
    grid = synth.GridSpec(entries=(
        synth.GridEntry(codecs.JPEG, "B", (20, 50, 80)),
        synth.GridEntry(codecs.JPEG2000, "B", (31, 61, 91)),
    ))
    manifest = synth.run_synthesis(sources, synth.PLAN_TRAINING, tmp_path / "lab",
                                   seed=4, grid=grid)
    labeled, cfg = metrics.build_labels(manifest, metrics.PSNR)
    by_id = {s.sample_id: s.label for s in labeled}
    recs = {r.sample_id: r for r in manifest.records}

    psnrs = {}
    for rec in manifest.records:
        if not rec.compressed or rec.error:
            continue
        ref_img = codecs.decode(manifest.resolve(rec.reference_path).read_bytes())
        out_img = codecs.decode(manifest.resolve(rec.path).read_bytes())
        psnrs[rec.sample_id] = metrics.psnr(ref_img, out_img)

    for sid, label in by_id.items():
        assert 0.0 <= label <= 1.0
        if not recs[sid].compressed:
            assert label == 1.0

    lo_id = min(psnrs, key=psnrs.get)
    hi_id = max(psnrs, key=psnrs.get)
    assert by_id[lo_id] == 0.0
    assert by_id[hi_id] == 1.0
    assert cfg.psnr_min == psnrs[lo_id] and cfg.psnr_max == psnrs[hi_id]

    ordered = sorted(psnrs, key=psnrs.get)
    labels_in_psnr_order = [by_id[s] for s in ordered]
    assert all(a <= b for a, b in zip(labels_in_psnr_order, labels_in_psnr_order[1:]))
    report("C5 label rules", f"{len(psnrs)} compressed samples")


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    """Shared end-to-end run: corpus -> synthesis -> labels -> training -> scores."""
    t0 = time.time()
    out = tmp_path_factory.mktemp("desk")
    n_sources = 200
    csv_path = facegen.generate_corpus(n_sources, out / "corpus", seed=100, size=640)
    pairs = geometry.read_landmarks_csv(csv_path)
    sources = [synth.SourceImage(p, str(out / "corpus" / p), lm) for p, lm in pairs]
    grid = synth.GridSpec(entries=(
        synth.GridEntry(codecs.JPEG, "B", tuple(range(20, 101, 10))),
        synth.GridEntry(codecs.JPEG2000, "B", tuple(range(20, 101, 10))),
    ))
    manifest = synth.run_synthesis(sources, synth.PLAN_TRAINING, out / "data",
                                   seed=5, grid=grid)
    labeled, _ = metrics.build_labels(manifest, metrics.PSNR)
    label_by_id = {s.sample_id: s.label for s in labeled}

    src_ids = sorted({r.source_id for r in manifest.records})
    gen = np.random.default_rng(42)
    gen.shuffle(src_ids)
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

    hp = regressor.desk_hyperparams(n_train=len(train_samples), batch_size=32)
    artifact = regressor.train(train_samples, hp, seed=7)
    raws = regressor.predict_raw_batch(
        artifact, [str(manifest.resolve(r.path)) for r in test_records])
    return {
        "elapsed": time.time() - t0,
        "test_records": test_records,
        "raws": raws,
        "artifact": artifact,
        "n_train_sources": len(train_src),
        "n_test_sources": len(src_ids) - len(train_src),
    }


def test_c6_desk_scale_end_to_end(desk_run):
    """>=200 sources, reduced grid, source-disjoint split: rho >= 0.7, EER <= 0.15."""
    raws = desk_run["raws"]
    test_records = desk_run["test_records"]
    qparam = [100 if not r.compressed else r.recipe.compression.quality
              for r in test_records]
    rho = evaluation.spearman(raws, qparam)
    unc = [s for s, r in zip(raws, test_records) if not r.compressed]
    heavy = [s for s, r in zip(raws, test_records)
             if r.compressed and r.recipe.compression.quality <= 40]
    eer_value, _ = evaluation.eer(unc, heavy)
    elapsed_min = desk_run["elapsed"] / 60.0
    assert rho >= 0.7
    assert eer_value <= 0.15
    assert desk_run["elapsed"] < 30 * 60
    report("C6 desk-scale end-to-end",
           f"spearman {rho:.3f}, eer {eer_value:.3f}, "
           f"{desk_run['n_test_sources']} held-out sources, {elapsed_min:.1f} min")


def test_c7_edc_correctness():
    """Start FNMR within 1/N; reaches 0 at the failure fraction; toy case exact."""
    gen = np.random.default_rng(7007)
    n = 400
    sims = list(gen.uniform(0.4, 1.0, n))
    threshold = evaluation.fnmr_threshold(sims, 0.10)
    failing = {i for i, s in enumerate(sims) if s < threshold}
    qualities, comparisons = {}, []
    for i, s in enumerate(sims):
        comparisons.append(evaluation.ComparisonRecord(f"p{i}", f"r{i}", s, True))
        qualities[f"p{i}"] = int(gen.integers(0, 5)) if i in failing \
            else int(gen.integers(40, 101))
        qualities[f"r{i}"] = 100
    grid = evaluation.default_discard_grid()
    curve = evaluation.edc_curve(qualities, comparisons, threshold, grid)
    assert abs(curve[0].fnmr - 0.10) <= 1.0 / n
    failure_fraction = len(failing) / n
    for p in curve:
        if p.discard_fraction >= failure_fraction + 1.0 / n:
            assert p.fnmr == 0.0

    toy = [
        evaluation.ComparisonRecord("a", "b", 0.1, True),
        evaluation.ComparisonRecord("c", "d", 0.9, True),
        evaluation.ComparisonRecord("e", "f", 0.1, True),
        evaluation.ComparisonRecord("g", "h", 0.9, True),
    ]
    toy_q = {"a": 10, "b": 99, "c": 20, "d": 99, "e": 30, "f": 99, "g": 40, "h": 99}
    points = evaluation.edc_curve(toy_q, toy, 0.5, [0.0, 0.25, 0.5])
    assert points[0].fnmr == 0.5
    assert points[1].fnmr == pytest.approx(1 / 3, abs=1e-15)
    assert points[2].fnmr == 0.5
    report("C7 EDC correctness", f"start fnmr {curve[0].fnmr:.4f}")


def test_c8_gradient_check():
    """Analytic gradients match central differences within 1e-3 relative."""
    torch.manual_seed(0)
    model = ARCHITECTURES[COMPACT_V1]().double()
    x = torch.randn(4, 3, 32, 32, dtype=torch.float64)
    y = torch.rand(4, 1, dtype=torch.float64)
    loss = torch.nn.functional.mse_loss(model(x), y)
    loss.backward()
    gen = np.random.default_rng(88)
    h = 1e-5
    checked = 0
    worst = 0.0
    for _, p in model.named_parameters():
        flat = p.detach().reshape(-1)
        grad = p.grad.reshape(-1)
        for idx in gen.choice(flat.numel(), size=min(8, flat.numel()), replace=False):
            with torch.no_grad():
                orig = flat[idx].item()
                flat[idx] = orig + h
                up = torch.nn.functional.mse_loss(model(x), y).item()
                flat[idx] = orig - h
                down = torch.nn.functional.mse_loss(model(x), y).item()
                flat[idx] = orig
            fd = (up - down) / (2 * h)
            an = grad[idx].item()
            err = abs(fd - an)
            tol = 1e-3 * max(abs(fd), abs(an)) + 1e-10
            assert err <= tol, f"gradient mismatch: analytic {an}, fd {fd}"
            if max(abs(fd), abs(an)) > 0:
                worst = max(worst, err / max(abs(fd), abs(an)))
            checked += 1
    report("C8 gradient check", f"{checked} coordinates, worst rel {worst:.2e}")


def test_c9_artifact_round_trip_and_monotone_mapping(tmp_path, desk_run):
    """Save/load reproduces predict_raw bit-exactly; quality map monotone on 10001 raws."""
    artifact = desk_run["artifact"]
    gen = np.random.default_rng(99)
    img = ImageBuffer(gen.integers(0, 256, (248, 248, 3), dtype=np.uint8))
    before = regressor.predict_raw(artifact, img)
    regressor.save_artifact(artifact, tmp_path / "model")
    loaded = regressor.load_artifact(tmp_path / "model")
    after = regressor.predict_raw(loaded, img)
    assert before == after

    sigmoid = regressor.calibrate_sigmoid(desk_run["raws"])
    sweep = np.linspace(-5.0, 5.0, 10001)
    qualities = [regressor.map_quality(float(v), sigmoid) for v in sweep]
    assert all(a <= b for a, b in zip(qualities, qualities[1:]))
    assert min(qualities) >= 0 and max(qualities) <= 100
    report("C9 artifact round trip + monotone map",
           f"bit-exact, sweep range [{qualities[0]}, {qualities[-1]}]")
