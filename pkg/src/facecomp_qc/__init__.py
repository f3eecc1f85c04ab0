"""Compression-artefact quality assessment for face images.

Pipeline: synthesize labeled data from artefact-free sources (`synth`,
`facegen`), label with full-reference metrics (`metrics`), train a compact
regression network and map its scores to integer [0, 100] quality
(`regressor`), and evaluate detection, strength estimation and
face-recognition utility (`evaluation`). `cli` wires everything into a
batch front-end.
"""

from .codecs import ImageBuffer, CompressionSpec, EncodedImage, compression_ratio
from .geometry import LandmarkSet, SimilarityTransform, AlignmentTemplate
from .synth import DegradationRecipe, SampleRecord, DatasetManifest
from .metrics import LabeledSample, LabelingConfig, SsimParams

__all__ = [
    "ImageBuffer", "CompressionSpec", "EncodedImage", "compression_ratio",
    "LandmarkSet", "SimilarityTransform", "AlignmentTemplate",
    "DegradationRecipe", "SampleRecord", "DatasetManifest",
    "LabeledSample", "LabelingConfig", "SsimParams",
]

__version__ = "0.1.0"
