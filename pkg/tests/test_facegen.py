import numpy as np

from facecomp_qc import codecs, facegen, geometry


def test_generate_face_shape_and_landmarks():
    gen = np.random.default_rng(0)
    img, lm = facegen.generate_face(gen, size=512)
    assert img.pixels.shape == (512, 512, 3)
    pts = lm.as_array()
    assert np.all(pts >= 0) and np.all(pts < 512)
    assert lm.left_eye[0] < lm.right_eye[0]


def test_generation_is_seeded():
    a, lm_a = facegen.generate_face(np.random.default_rng(42), size=256)
    b, lm_b = facegen.generate_face(np.random.default_rng(42), size=256)
    assert a == b and lm_a == lm_b
    c, _ = facegen.generate_face(np.random.default_rng(43), size=256)
    assert a != c


def test_faces_align_within_tolerance():
    tpl = geometry.CANONICAL_TEMPLATE
    for seed in range(8):
        _, lm = facegen.generate_face(np.random.default_rng(seed), size=640)
        t = geometry.fit_similarity(lm.as_array(), tpl.target_points.as_array())
        mapped = t.apply(lm.as_array())
        ied = float(np.linalg.norm(mapped[1] - mapped[0]))
        assert abs(ied - tpl.target_ied) / tpl.target_ied < 0.02


def test_corpus_generation(tmp_path):
    csv_path = facegen.generate_corpus(3, tmp_path, seed=7, size=256)
    rows = geometry.read_landmarks_csv(csv_path)
    assert len(rows) == 3
    for name, lm in rows:
        img = codecs.decode((tmp_path / name).read_bytes())
        assert img.pixels.shape == (256, 256, 3)


def test_faces_carry_compressible_detail():
    """JPEG at low quality must lose measurably more than at high quality."""
    from facecomp_qc import metrics
    from facecomp_qc.codecs import CompressionSpec

    img, _ = facegen.generate_face(np.random.default_rng(5), size=256)
    q20 = codecs.decode(codecs.encode(img, CompressionSpec(codecs.JPEG, "B", 20)).data)
    q90 = codecs.decode(codecs.encode(img, CompressionSpec(codecs.JPEG, "B", 90)).data)
    assert metrics.psnr(img, q90) - metrics.psnr(img, q20) > 5.0
