"""Landmark-driven similarity alignment, warps and crops.

Conventions used throughout:

* Coordinates are (x, y) float pixels with pixel-center convention:
  pixel (0, 0) spans [-0.5, 0.5)^2, so integer coordinates hit pixel
  centers exactly.
* "Left"/"right" are image-space: the left eye is the one with the
  smaller x coordinate.
* Transforms are distortion-free similarities (rotation, uniform scale,
  translation); the linear part always has positive determinant, so no
  reflection or shear can enter the pipeline.
* Resampling is bilinear; samples outside the source take the replicated
  edge value.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .codecs import ImageBuffer
from .errors import DegenerateConfiguration

Point = tuple[float, float]


@dataclass(frozen=True)
class LandmarkSet:
    """Five facial points: eye centers, nose tip, mouth corners."""

    left_eye: Point
    right_eye: Point
    nose: Point
    mouth_left: Point
    mouth_right: Point

    def __post_init__(self):
        pts = self.as_array()
        if not np.all(np.isfinite(pts)):
            raise DegenerateConfiguration("landmark coordinates must be finite")
        if not self.left_eye[0] < self.right_eye[0]:
            raise DegenerateConfiguration("left eye must have smaller x than right eye")
        if math.dist(self.left_eye, self.right_eye) <= 0:
            raise DegenerateConfiguration("inter-eye distance must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.left_eye, self.right_eye, self.nose,
                         self.mouth_left, self.mouth_right], dtype=np.float64)

    @classmethod
    def from_array(cls, pts) -> "LandmarkSet":
        p = np.asarray(pts, dtype=np.float64)
        as_point = lambda row: (float(row[0]), float(row[1]))  # noqa: E731
        return cls(as_point(p[0]), as_point(p[1]), as_point(p[2]),
                   as_point(p[3]), as_point(p[4]))

    def flipped(self, width: int) -> "LandmarkSet":
        """Mirror around the vertical axis of a `width`-pixel canvas.

        Left/right labels swap so the image-space convention is preserved.
        """
        def m(p: Point) -> Point:
            return (width - 1 - p[0], p[1])

        return LandmarkSet(left_eye=m(self.right_eye), right_eye=m(self.left_eye),
                           nose=m(self.nose), mouth_left=m(self.mouth_right),
                           mouth_right=m(self.mouth_left))


@dataclass(frozen=True)
class SimilarityTransform:
    """x' = s*R(theta)*x + t, as a 2x3 matrix [[s cos, -s sin, tx], [s sin, s cos, ty]]."""

    scale: float
    rotation: float
    tx: float
    ty: float

    def __post_init__(self):
        if not self.scale > 0:
            raise DegenerateConfiguration(f"scale must be positive, got {self.scale}")

    def matrix(self) -> np.ndarray:
        c = self.scale * math.cos(self.rotation)
        s = self.scale * math.sin(self.rotation)
        return np.array([[c, -s, self.tx], [s, c, self.ty]], dtype=np.float64)

    def apply(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        m = self.matrix()
        return p @ m[:, :2].T + m[:, 2]

    def inverse(self) -> "SimilarityTransform":
        inv_s = 1.0 / self.scale
        c, s = math.cos(-self.rotation), math.sin(-self.rotation)
        tx = -inv_s * (c * self.tx - s * self.ty)
        ty = -inv_s * (s * self.tx + c * self.ty)
        return SimilarityTransform(inv_s, -self.rotation, tx, ty)

    def then(self, outer: "SimilarityTransform") -> "SimilarityTransform":
        """Composition outer(self(x))."""
        c, s = math.cos(outer.rotation), math.sin(outer.rotation)
        tx = outer.scale * (c * self.tx - s * self.ty) + outer.tx
        ty = outer.scale * (s * self.tx + c * self.ty) + outer.ty
        rot = self.rotation + outer.rotation
        rot = math.atan2(math.sin(rot), math.cos(rot))
        return SimilarityTransform(self.scale * outer.scale, rot, tx, ty)

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def about(cls, scale: float, rotation: float, pivot_in: Point,
              pivot_out: Point) -> "SimilarityTransform":
        """Scale/rotate about `pivot_in`, then move the pivot to `pivot_out`."""
        c = scale * math.cos(rotation)
        s = scale * math.sin(rotation)
        tx = pivot_out[0] - (c * pivot_in[0] - s * pivot_in[1])
        ty = pivot_out[1] - (s * pivot_in[0] + c * pivot_in[1])
        return cls(scale, rotation, tx, ty)


def inter_eye_distance(lm: LandmarkSet) -> float:
    """Euclidean distance between the eye centers, in pixels."""
    return math.dist(lm.left_eye, lm.right_eye)


@dataclass(frozen=True)
class AlignmentTemplate:
    canvas_width: int
    canvas_height: int
    target_points: LandmarkSet
    target_ied: float

    def __post_init__(self):
        if abs(inter_eye_distance(self.target_points) - self.target_ied) > 0.5:
            raise DegenerateConfiguration("template eye points do not match target_ied")


# 520x520 canvas, eyes on a horizontal line at 40% height, IED 260 and the
# face horizontally centered. Only the IED is externally constrained; the
# remaining coordinates are this library's canonical choice.
CANONICAL_TEMPLATE = AlignmentTemplate(
    canvas_width=520,
    canvas_height=520,
    target_points=LandmarkSet(
        left_eye=(130.0, 208.0),
        right_eye=(390.0, 208.0),
        nose=(260.0, 330.0),
        mouth_left=(180.0, 405.0),
        mouth_right=(340.0, 405.0),
    ),
    target_ied=260.0,
)


def fit_similarity(src, dst) -> SimilarityTransform:
    """Least-squares similarity mapping `src` points onto `dst` points.

    Closed-form orthogonal-Procrustes-with-scale solution; the rotation is
    constrained to positive determinant, so the result is never a
    reflection. Exact (zero residual) whenever `dst` actually is a
    similarity image of `src`.
    """
    s_pts = np.asarray(src, dtype=np.float64)
    d_pts = np.asarray(dst, dtype=np.float64)
    if s_pts.shape != d_pts.shape or s_pts.ndim != 2 or s_pts.shape[1] != 2:
        raise DegenerateConfiguration("src/dst must be equal-length (n, 2) point lists")
    if s_pts.shape[0] < 2:
        raise DegenerateConfiguration("need at least two points")

    mu_s = s_pts.mean(axis=0)
    mu_d = d_pts.mean(axis=0)
    cs = s_pts - mu_s
    cd = d_pts - mu_d
    var_s = (cs ** 2).sum() / len(s_pts)
    if var_s == 0.0:
        raise DegenerateConfiguration("all source points coincide")

    cov = cd.T @ cs / len(s_pts)
    u, d, vt = np.linalg.svd(cov)
    sign = np.ones(2)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        sign[1] = -1.0
    r = u @ np.diag(sign) @ vt
    scale = float((d * sign).sum() / var_s)
    if scale <= 0:
        raise DegenerateConfiguration("degenerate point configuration (non-positive scale)")
    theta = math.atan2(r[1, 0], r[0, 0])
    t = mu_d - scale * (r @ mu_s)
    return SimilarityTransform(scale, theta, float(t[0]), float(t[1]))


def warp_similarity(img: ImageBuffer, transform: SimilarityTransform,
                    out_w: int, out_h: int) -> ImageBuffer:
    """Resample `img` so output pixel (x, y) reads img at transform^-1(x, y).

    Bilinear interpolation; out-of-bounds samples replicate the nearest
    edge pixel.
    """
    if out_w < 1 or out_h < 1:
        raise DegenerateConfiguration("output dimensions must be >= 1")
    inv = transform.inverse().matrix()
    xs = np.arange(out_w, dtype=np.float64)
    ys = np.arange(out_h, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    sx = inv[0, 0] * gx + inv[0, 1] * gy + inv[0, 2]
    sy = inv[1, 0] * gx + inv[1, 1] * gy + inv[1, 2]
    return ImageBuffer(_bilinear(img.pixels, sx, sy))


def _bilinear(pixels: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    h, w = pixels.shape[:2]
    x0 = np.floor(sx)
    y0 = np.floor(sy)
    fx = (sx - x0)[..., None]
    fy = (sy - y0)[..., None]
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    x1 = np.clip(x0 + 1, 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x0 = np.clip(x0, 0, w - 1)
    y0 = np.clip(y0, 0, h - 1)
    p = pixels.astype(np.float64)
    top = p[y0, x0] * (1.0 - fx) + p[y0, x1] * fx
    bot = p[y1, x0] * (1.0 - fx) + p[y1, x1] * fx
    out = top * (1.0 - fy) + bot * fy
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def align_face(img: ImageBuffer, lm: LandmarkSet,
               template: AlignmentTemplate = CANONICAL_TEMPLATE) -> ImageBuffer:
    """Warp `img` so its landmarks land on the template's target positions."""
    t = fit_similarity(lm.as_array(), template.target_points.as_array())
    return warp_similarity(img, t, template.canvas_width, template.canvas_height)


def rotate_about_center(img: ImageBuffer, angle_deg: float) -> ImageBuffer:
    """Rotate by `angle_deg` about the canvas center, keeping the canvas size."""
    if angle_deg == 0:
        return ImageBuffer(img.pixels.copy())
    pivot = ((img.width - 1) / 2.0, (img.height - 1) / 2.0)
    t = SimilarityTransform.about(1.0, math.radians(angle_deg), pivot, pivot)
    return warp_similarity(img, t, img.width, img.height)


def center_crop(img: ImageBuffer, size: int, center: Point) -> ImageBuffer:
    """`size` x `size` crop centered at `center`, edge-replicated outside."""
    if size < 1:
        raise DegenerateConfiguration("crop size must be >= 1")
    half = (size - 1) / 2.0
    t = SimilarityTransform(1.0, 0.0, half - center[0], half - center[1])
    return warp_similarity(img, t, size, size)


def flip_horizontal(img: ImageBuffer) -> ImageBuffer:
    return ImageBuffer(np.ascontiguousarray(img.pixels[:, ::-1, :]))


def read_landmarks_csv(path) -> list[tuple[str, LandmarkSet]]:
    """Read `image_path,lex,ley,rex,rey,nx,ny,lmx,lmy,rmx,rmy` rows."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"image_path", "lex", "ley", "rex", "rey", "nx", "ny",
                    "lmx", "lmy", "rmx", "rmy"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            missing = required - set(reader.fieldnames or [])
            raise DegenerateConfiguration(f"landmark CSV missing columns: {sorted(missing)}")
        for row in reader:
            lm = LandmarkSet(
                left_eye=(float(row["lex"]), float(row["ley"])),
                right_eye=(float(row["rex"]), float(row["rey"])),
                nose=(float(row["nx"]), float(row["ny"])),
                mouth_left=(float(row["lmx"]), float(row["lmy"])),
                mouth_right=(float(row["rmx"]), float(row["rmy"])),
            )
            out.append((row["image_path"], lm))
    return out


def write_landmarks_csv(path, rows: list[tuple[str, LandmarkSet]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_path", "lex", "ley", "rex", "rey", "nx", "ny",
                         "lmx", "lmy", "rmx", "rmy"])
        for image_path, lm in rows:
            coords = [lm.left_eye, lm.right_eye, lm.nose, lm.mouth_left, lm.mouth_right]
            writer.writerow([image_path] + [repr(float(v)) for p in coords for v in p])
