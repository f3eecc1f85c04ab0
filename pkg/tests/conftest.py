import numpy as np
import pytest
from hypothesis import settings

from facecomp_qc import facegen, geometry
from facecomp_qc.codecs import ImageBuffer

settings.register_profile("suite", max_examples=50, deadline=None)
settings.load_profile("suite")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_image(rng, h, w) -> ImageBuffer:
    return ImageBuffer(rng.integers(0, 256, (h, w, 3), dtype=np.uint8))


@pytest.fixture(scope="session")
def aligned_face():
    """One canonical aligned face (520x520) plus the template landmarks."""
    gen = np.random.default_rng(2024)
    img, lm = facegen.generate_face(gen, size=640)
    aligned = geometry.align_face(img, lm)
    return aligned, geometry.CANONICAL_TEMPLATE.target_points


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Six generated sources with landmarks CSV, shared across tests."""
    root = tmp_path_factory.mktemp("corpus")
    csv_path = facegen.generate_corpus(6, root, seed=99, size=512)
    return csv_path
