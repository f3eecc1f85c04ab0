"""Image decoding/encoding and the file-size compression-ratio baseline.

All pixel data moves through :class:`ImageBuffer`, an 8-bit RGB raster.
Lossy encoders (JPEG, JPEG 2000) sit behind a uniform ``quality`` in
[1, 100]; the two JPEG 2000 encoder ids map to two distinct OpenJPEG
rate-control modes, since the semantics of a JPEG 2000 "quality" knob
differ between tools:

* encoder ``A``: rate-targeted, quality q -> target compression factor
  (100/q)^2, so q=100 asks for 1:1 (effectively unconstrained) and q=20
  for 25:1. The square makes the knob bite on natural images, which
  irreversible JPEG 2000 already compresses ~4:1 at full precision.
* encoder ``B``: fidelity-targeted, quality q -> target PSNR of 20 + 0.3*q dB

For JPEG, encoder ``B`` (the default) uses 4:2:0 chroma subsampling and
encoder ``A`` uses 4:4:4. Bindings are configurable and are recorded in
dataset manifests so every sample's provenance is explicit.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError, features

from .errors import (
    EncoderUnavailable,
    InvalidDimensions,
    InvalidQuality,
    MalformedStream,
    UnsupportedFormat,
)

JPEG = "jpeg"
JPEG2000 = "jp2"
CODECS = (JPEG, JPEG2000)
ENCODER_IDS = ("A", "B")

_PIL_FORMATS = {"PNG": "png", "JPEG": JPEG, "JPEG2000": JPEG2000}


@dataclass(frozen=True)
class ImageBuffer:
    """8-bit RGB raster, row-major uint8 array of shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if not isinstance(p, np.ndarray) or p.dtype != np.uint8:
            raise InvalidDimensions("pixels must be a uint8 ndarray")
        if p.ndim != 3 or p.shape[2] != 3 or p.shape[0] < 1 or p.shape[1] < 1:
            raise InvalidDimensions(f"expected (H, W, 3) pixels, got {p.shape}")
        if not p.flags["C_CONTIGUOUS"]:
            object.__setattr__(self, "pixels", np.ascontiguousarray(p))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    channels: int = field(default=3, init=False, repr=False)
    bit_depth: int = field(default=8, init=False, repr=False)

    @classmethod
    def from_array(cls, arr) -> "ImageBuffer":
        """Build from any array-like; values are clipped to [0, 255] and rounded."""
        a = np.asarray(arr)
        if a.ndim == 2:
            a = np.stack([a] * 3, axis=-1)
        if a.dtype != np.uint8:
            a = np.clip(np.rint(a.astype(np.float64)), 0, 255).astype(np.uint8)
        return cls(np.ascontiguousarray(a))

    def __eq__(self, other):
        return isinstance(other, ImageBuffer) and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True)
class CompressionSpec:
    """One lossy encode request: codec, encoder backend id, quality in [1, 100]."""

    codec: str
    encoder_id: str
    quality: int

    def __post_init__(self):
        if self.codec not in CODECS:
            raise UnsupportedFormat(f"unknown codec {self.codec!r}")
        if self.encoder_id not in ENCODER_IDS:
            raise EncoderUnavailable(f"unknown encoder id {self.encoder_id!r}")
        if not isinstance(self.quality, (int, np.integer)) or not 1 <= int(self.quality) <= 100:
            raise InvalidQuality(f"quality must be an int in [1, 100], got {self.quality!r}")


@dataclass(frozen=True)
class EncodedImage:
    data: bytes
    spec: CompressionSpec

    @property
    def byte_count(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class EncoderBindings:
    """Names of the concrete encoder configurations behind each encoder id."""

    jpeg: str = "pillow-libjpeg"
    jp2_a: str = "openjpeg-rates"
    jp2_b: str = "openjpeg-db"

    def describe(self, spec: CompressionSpec) -> str:
        if spec.codec == JPEG:
            profile = "444" if spec.encoder_id == "A" else "420"
            return f"{self.jpeg}-{profile}"
        return self.jp2_a if spec.encoder_id == "A" else self.jp2_b


DEFAULT_BINDINGS = EncoderBindings()


def decode(data: bytes) -> ImageBuffer:
    """Decode a PNG, JPEG or JPEG 2000 stream to 8-bit RGB.

    Grayscale inputs are replicated to three channels; alpha is dropped.
    """
    try:
        img = Image.open(io.BytesIO(data))
        fmt = img.format
        img.load()
    except (UnidentifiedImageError, OSError, ValueError, SyntaxError) as exc:
        raise MalformedStream(f"undecodable stream: {exc}") from exc
    if fmt not in _PIL_FORMATS:
        raise UnsupportedFormat(f"unsupported container format {fmt!r}")
    if img.mode != "RGB":
        img = img.convert("RGB")
    return ImageBuffer(np.asarray(img, dtype=np.uint8))


def encode(img: ImageBuffer, spec: CompressionSpec,
           bindings: EncoderBindings = DEFAULT_BINDINGS) -> EncodedImage:
    """Lossy-encode `img` according to `spec`. Deterministic per backend version."""
    if not 1 <= spec.quality <= 100:
        raise InvalidQuality(f"quality {spec.quality} outside [1, 100]")
    pil = Image.fromarray(img.pixels)
    buf = io.BytesIO()
    if spec.codec == JPEG:
        subsampling = 0 if spec.encoder_id == "A" else 2  # A: 4:4:4, B: 4:2:0
        pil.save(buf, format="JPEG", quality=int(spec.quality), subsampling=subsampling)
    else:
        if not features.check("jpg_2000"):
            raise EncoderUnavailable("Pillow built without OpenJPEG support")
        if spec.encoder_id == "A":
            # rate-targeted: compression factor (100/q)^2, q=100 ~ unconstrained
            pil.save(buf, format="JPEG2000", irreversible=True,
                     quality_mode="rates", quality_layers=[(100.0 / spec.quality) ** 2])
        else:
            # fidelity-targeted: PSNR goal grows linearly with q
            pil.save(buf, format="JPEG2000", irreversible=True,
                     quality_mode="dB", quality_layers=[20.0 + 0.3 * spec.quality])
    return EncodedImage(buf.getvalue(), spec)


def encode_lossless(img: ImageBuffer) -> bytes:
    """PNG-encode; decode(encode_lossless(img)) is bit-exact."""
    buf = io.BytesIO()
    Image.fromarray(img.pixels).save(buf, format="PNG")
    return buf.getvalue()


def compression_ratio(byte_count: int, width: int, height: int,
                      channels: int = 3, bit_depth: int = 8) -> tuple[float, int]:
    """File-size ratio against the raw size, plus its [1, 100] baseline score.

    ratio = byte_count / (width * height * channels * bit_depth / 8). The
    score is the linear clamped mapping round(100 * min(1, ratio)), floored
    at 1; the exact 1-100 transform is not standardized, so it is isolated
    here.
    """
    for name, v in (("byte_count", byte_count), ("width", width), ("height", height),
                    ("channels", channels), ("bit_depth", bit_depth)):
        if v <= 0:
            raise InvalidDimensions(f"{name} must be positive, got {v}")
    raw_bytes = width * height * channels * bit_depth / 8.0
    ratio = byte_count / raw_bytes
    score = int(round(100.0 * min(1.0, ratio)))
    return ratio, max(1, min(100, score))
