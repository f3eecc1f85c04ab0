"""Compression-damage regression network: training, inference, calibration.

The desk-scale architecture ``compact-v1`` is four stages of stride-2 3x3
convolution + SiLU (widths 16/32/64/128), global average pooling and a
single linear output neuron. Architectures are registered by id so a
larger backbone can be dropped in without touching the surrounding
machinery.

Raw scores have higher-is-better semantics (training labels put
uncompressed at 1). `calibrate_sigmoid` fits a robust location/scale
(median, IQR/2) to a score sample; `map_quality` then squashes raw scores
through the corresponding logistic curve onto integer [0, 100].

Checkpoints are a directory holding ``model.meta`` (text key-value:
format version, architecture id, label kind, normalization constants,
optional sigmoid, tensor name/shape list in order) plus ``weights.bin``
(the tensors as little-endian float32, concatenated in declared order),
so a round trip reproduces inference bit-exactly.
"""

from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch import nn

from .codecs import ImageBuffer
from .errors import (
    DegenerateDistribution,
    EmptyGrid,
    EmptyManifest,
    IncompatibleArtifactVersion,
    LabelOutOfRange,
    ShapeMismatch,
)

FORMAT_VERSION = 1
COMPACT_V1 = "compact-v1"


def _build_compact_v1() -> nn.Module:
    return nn.Sequential(
        nn.Conv2d(3, 16, 3, stride=2, padding=1), nn.SiLU(),
        nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.SiLU(),
        nn.Conv2d(32, 64, 3, stride=2, padding=1), nn.SiLU(),
        nn.Conv2d(64, 128, 3, stride=2, padding=1), nn.SiLU(),
        nn.AdaptiveAvgPool2d(1), nn.Flatten(),
        nn.Linear(128, 1),
    )


ARCHITECTURES = {COMPACT_V1: _build_compact_v1}


@dataclass(frozen=True)
class Hyperparams:
    epochs: int = 10
    batch_size: int = 256
    learning_rate: float = 0.001
    input_resolution: int = 256
    trainable_scope: str = "all"  # "all" or "head"
    train_fraction: float = 1.0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise EmptyGrid("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise EmptyGrid("learning_rate must be positive")
        if self.input_resolution < 32:
            raise ShapeMismatch("input_resolution must be >= 32")
        if self.trainable_scope not in ("all", "head"):
            raise EmptyGrid(f"unknown trainable scope {self.trainable_scope!r}")
        if not 0 < self.train_fraction <= 1:
            raise EmptyGrid("train_fraction must be in (0, 1]")


def desk_hyperparams(n_train: int, batch_size: int = 32, input_resolution: int = 128,
                     epochs: int | None = None) -> Hyperparams:
    """Full-scale training settings adapted to desk-scale corpora.

    The reference configuration (Adam, MSE, lr 1e-3, batch 256, 10 epochs,
    256px) assumes millions of samples; at a few thousand samples 10 epochs
    is a few hundred optimizer steps, far too few to train from scratch.
    These defaults keep the optimizer/loss/trainable-scope and restore a
    workable step budget: batch <= 64, learning rate 3e-3 (small-batch
    from-scratch setting), epochs chosen to give roughly 3000 steps, and
    128px inputs, which on CPU learn faster per wall-clock second and keep
    the full run inside a desktop time budget.
    """
    if epochs is None:
        steps_per_epoch = max(1, n_train // batch_size)
        epochs = min(60, max(10, round(3000 / steps_per_epoch)))
    return Hyperparams(epochs=epochs, batch_size=batch_size, learning_rate=3e-3,
                       input_resolution=input_resolution, trainable_scope="all")


@dataclass(frozen=True)
class SigmoidParams:
    midpoint: float
    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise DegenerateDistribution("sigmoid width must be positive")


@dataclass
class ModelArtifact:
    architecture_id: str
    input_resolution: int
    label_kind: str
    train_seed: int
    model: nn.Module
    norm_mean: np.ndarray
    norm_std: np.ndarray
    sigmoid: SigmoidParams | None = None
    format_version: int = FORMAT_VERSION
    info: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TrainSample:
    """One labeled training input: image path, [0, 1] label, subject/source id."""
    path: str
    label: float
    source_id: str


def samples_from_manifest(manifest, labels) -> list[TrainSample]:
    """Join manifest records with labels into training samples."""
    by_id = {s.sample_id: s.label for s in labels}
    out = []
    for rec in manifest.records:
        if rec.error or rec.sample_id not in by_id:
            continue
        out.append(TrainSample(str(manifest.resolve(rec.path)), by_id[rec.sample_id],
                               rec.source_id))
    return out


def _load_resized(path: str, resolution: int) -> np.ndarray:
    img = Image.open(path)
    img.load()
    if img.mode != "RGB":
        img = img.convert("RGB")
    if img.size != (resolution, resolution):
        img = img.resize((resolution, resolution), Image.BILINEAR)
    arr = np.asarray(img, dtype=np.uint8)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeMismatch(f"{path}: expected 3-channel image, got {arr.shape}")
    return arr


def prepare_input(img: ImageBuffer, artifact: ModelArtifact) -> torch.Tensor:
    """ImageBuffer -> normalized float32 CHW tensor at the model resolution."""
    res = artifact.input_resolution
    pil = Image.fromarray(img.pixels)
    if pil.size != (res, res):
        pil = pil.resize((res, res), Image.BILINEAR)
    arr = np.asarray(pil, dtype=np.float32) / 255.0
    arr = (arr - artifact.norm_mean.astype(np.float32)) / artifact.norm_std.astype(np.float32)
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))


def split_by_source(samples: list[TrainSample], seed: int,
                    train_share: float = 0.8) -> tuple[list[TrainSample], list[TrainSample]]:
    """Subject-disjoint split: no source id appears on both sides."""
    sources = sorted({s.source_id for s in samples})
    rng = np.random.default_rng(np.random.SeedSequence([seed, len(sources)]))
    rng.shuffle(sources)
    n_train = max(1, int(round(train_share * len(sources))))
    train_ids = set(sources[:n_train])
    train = [s for s in samples if s.source_id in train_ids]
    val = [s for s in samples if s.source_id not in train_ids]
    return train, val


def _stack_dataset(samples: list[TrainSample], resolution: int) -> tuple[np.ndarray, np.ndarray]:
    images = np.empty((len(samples), resolution, resolution, 3), dtype=np.uint8)
    labels = np.empty(len(samples), dtype=np.float32)
    for i, s in enumerate(samples):
        if not 0.0 <= s.label <= 1.0:
            raise LabelOutOfRange(f"{s.path}: label {s.label} outside [0, 1]")
        images[i] = _load_resized(s.path, resolution)
        labels[i] = s.label
    return images, labels


def _normalization(images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sub = images[: min(len(images), 512)].astype(np.float64) / 255.0
    mean = sub.mean(axis=(0, 1, 2))
    std = np.maximum(sub.std(axis=(0, 1, 2)), 1e-3)
    return mean, std


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = np.arange(n)
    rng.shuffle(order)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _to_batch(images: np.ndarray, idx: np.ndarray, mean, std) -> torch.Tensor:
    arr = images[idx].astype(np.float32) / 255.0
    arr = (arr - mean.astype(np.float32)) / std.astype(np.float32)
    return torch.from_numpy(arr.transpose(0, 3, 1, 2))


def train(samples: list[TrainSample], hp: Hyperparams, seed: int,
          label_kind: str = "psnr", architecture_id: str = COMPACT_V1,
          train_on_all: bool = True) -> ModelArtifact:
    """Train a single regression network on mixed compressed/uncompressed data.

    MSE loss, Adam with default moment decay rates and step size
    `hp.learning_rate`; shuffling is seeded per epoch. With
    `train_on_all=False` an internal subject-disjoint 80/20 split is applied
    first and only the 80% side is used (the validation source ids are
    recorded in the artifact info).
    """
    if not samples:
        raise EmptyManifest("no training samples")
    if architecture_id not in ARCHITECTURES:
        raise IncompatibleArtifactVersion(f"unknown architecture {architecture_id!r}")

    val_sources: list[str] = []
    if not train_on_all:
        samples, val = split_by_source(samples, seed)
        val_sources = sorted({s.source_id for s in val})
    if hp.train_fraction < 1.0:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 17]))
        keep = max(1, int(round(hp.train_fraction * len(samples))))
        idx = rng.permutation(len(samples))[:keep]
        samples = [samples[i] for i in sorted(idx)]

    images, labels = _stack_dataset(samples, hp.input_resolution)
    mean, std = _normalization(images)

    torch.manual_seed(seed)
    model = ARCHITECTURES[architecture_id]()
    if hp.trainable_scope == "head":
        for name, p in model.named_parameters():
            p.requires_grad = name.startswith(str(len(model) - 1))
    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=hp.learning_rate)
    loss_fn = nn.MSELoss()
    target = torch.from_numpy(labels).unsqueeze(1)

    def eval_mse() -> float:
        model.eval()
        total, count = 0.0, 0
        with torch.no_grad():
            for start in range(0, len(samples), hp.batch_size):
                idx = np.arange(start, min(start + hp.batch_size, len(samples)))
                out = model(_to_batch(images, idx, mean, std))
                total += float(((out - target[idx]) ** 2).sum())
                count += len(idx)
        model.train()
        return total / count

    history = [eval_mse()]
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([seed, 23]))
    model.train()
    for _ in range(hp.epochs):
        epoch_loss, seen = 0.0, 0
        for idx in _batches(len(samples), hp.batch_size, shuffle_rng):
            opt.zero_grad()
            out = model(_to_batch(images, idx, mean, std))
            loss = loss_fn(out, target[idx])
            loss.backward()
            opt.step()
            epoch_loss += loss.item() * len(idx)
            seen += len(idx)
        history.append(epoch_loss / seen)
    model.eval()

    info = {"train_mse_initial": history[0], "train_mse_final": eval_mse(),
            "epoch_losses": history[1:], "n_train": len(samples)}
    if val_sources:
        info["validation_sources"] = val_sources
    return ModelArtifact(architecture_id=architecture_id,
                         input_resolution=hp.input_resolution,
                         label_kind=label_kind, train_seed=seed, model=model,
                         norm_mean=mean, norm_std=std, info=info)


def grid_search(candidates: list[Hyperparams], samples: list[TrainSample], seed: int,
                label_kind: str = "psnr") -> Hyperparams:
    """Exhaustively train every candidate and pick the lowest validation MSE.

    The split is 80/20 by source id (subject-disjoint). Ties on validation
    MSE go to the candidate that trained faster.
    """
    if not candidates:
        raise EmptyGrid("no hyperparameter candidates")
    train_set, val_set = split_by_source(samples, seed)
    if not val_set:
        raise EmptyManifest("validation split is empty; need >= 2 sources")
    best = None
    for hp in candidates:
        t0 = time.perf_counter()
        artifact = train(train_set, hp, seed, label_kind=label_kind)
        elapsed = time.perf_counter() - t0
        errs = []
        for s in val_set:
            img = ImageBuffer(_load_resized(s.path, hp.input_resolution))
            errs.append((predict_raw(artifact, img) - s.label) ** 2)
        val_mse = float(np.mean(errs))
        key = (val_mse, elapsed)
        if best is None or key < best[0]:
            best = (key, hp)
    return best[1]


def predict_raw(artifact: ModelArtifact, img: ImageBuffer) -> float:
    """Deterministic raw score; higher means less compression damage."""
    x = prepare_input(img, artifact).unsqueeze(0)
    artifact.model.eval()
    with torch.no_grad():
        return float(artifact.model(x)[0, 0])


def predict_raw_batch(artifact: ModelArtifact, paths: list[str],
                      batch_size: int = 64) -> list[float]:
    """Raw scores for stored images, batched for throughput."""
    artifact.model.eval()
    out: list[float] = []
    res = artifact.input_resolution
    mean = artifact.norm_mean.astype(np.float32)
    std = artifact.norm_std.astype(np.float32)
    with torch.no_grad():
        for start in range(0, len(paths), batch_size):
            chunk = paths[start:start + batch_size]
            arr = np.stack([_load_resized(p, res) for p in chunk]).astype(np.float32) / 255.0
            arr = (arr - mean) / std
            scores = artifact.model(torch.from_numpy(arr.transpose(0, 3, 1, 2)))
            out.extend(float(v) for v in scores[:, 0])
    return out


def calibrate_sigmoid(raw_scores) -> SigmoidParams:
    """Robust logistic calibration: midpoint = median, width = IQR / 2."""
    scores = np.asarray(list(raw_scores), dtype=np.float64)
    if scores.size < 10:
        raise DegenerateDistribution("need at least 10 scores to calibrate")
    if np.all(scores == scores[0]):
        raise DegenerateDistribution("all scores identical")
    midpoint = float(np.median(scores))
    q1, q3 = np.percentile(scores, [25.0, 75.0])
    width = max(1e-6, float(q3 - q1) / 2.0)
    return SigmoidParams(midpoint=midpoint, width=width)


def map_quality(raw: float, p: SigmoidParams) -> int:
    """Monotone logistic map of a raw score to integer [0, 100]."""
    z = (raw - p.midpoint) / p.width
    if z >= 0:
        value = 100.0 / (1.0 + math.exp(-z))
    else:  # exp overflow guard for very negative z
        e = math.exp(z)
        value = 100.0 * e / (1.0 + e)
    return max(0, min(100, int(math.floor(value + 0.5))))


# --- checkpoint serialization ---

def save_artifact(artifact: ModelArtifact, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    state = artifact.model.state_dict()
    lines = [
        f"format_version = {artifact.format_version}",
        f"architecture_id = {artifact.architecture_id}",
        f"input_resolution = {artifact.input_resolution}",
        f"label_kind = {artifact.label_kind}",
        f"train_seed = {artifact.train_seed}",
        "norm_mean = " + ",".join(repr(float(v)) for v in artifact.norm_mean),
        "norm_std = " + ",".join(repr(float(v)) for v in artifact.norm_std),
    ]
    if artifact.sigmoid is not None:
        lines.append(f"sigmoid_midpoint = {artifact.sigmoid.midpoint!r}")
        lines.append(f"sigmoid_width = {artifact.sigmoid.width!r}")
    blob = io.BytesIO()
    for i, (name, tensor) in enumerate(state.items()):
        shape = "x".join(str(d) for d in tensor.shape) or "scalar"
        lines.append(f"tensor.{i} = {name}:{shape}")
        blob.write(tensor.detach().cpu().numpy().astype("<f4").tobytes())
    (out_dir / "model.meta").write_text("\n".join(lines) + "\n")
    (out_dir / "weights.bin").write_bytes(blob.getvalue())
    return out_dir


def load_artifact(model_dir) -> ModelArtifact:
    model_dir = Path(model_dir)
    meta_path = model_dir / "model.meta"
    weights_path = model_dir / "weights.bin"
    if not meta_path.exists() or not weights_path.exists():
        raise IncompatibleArtifactVersion(f"{model_dir} is not a model checkpoint")
    kv: dict[str, str] = {}
    tensors: list[tuple[str, tuple[int, ...]]] = []
    for line in meta_path.read_text().splitlines():
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key.startswith("tensor."):
            name, _, shape = value.partition(":")
            dims = () if shape == "scalar" else tuple(int(d) for d in shape.split("x"))
            tensors.append((name, dims))
        elif key:
            kv[key] = value

    if int(kv.get("format_version", -1)) != FORMAT_VERSION:
        raise IncompatibleArtifactVersion(
            f"unknown format version {kv.get('format_version')!r}")
    arch = kv["architecture_id"]
    if arch not in ARCHITECTURES:
        raise IncompatibleArtifactVersion(f"unknown architecture {arch!r}")

    expected = sum(int(np.prod(shape)) if shape else 1 for _, shape in tensors)
    raw = weights_path.read_bytes()
    if len(raw) != expected * 4:
        raise IncompatibleArtifactVersion(
            f"weights.bin holds {len(raw)} bytes, expected {expected * 4}")
    flat = np.frombuffer(raw, dtype="<f4")

    model = ARCHITECTURES[arch]()
    state = {}
    offset = 0
    for name, shape in tensors:
        count = int(np.prod(shape)) if shape else 1
        arr = flat[offset:offset + count].reshape(shape).copy()
        state[name] = torch.from_numpy(arr)
        offset += count
    try:
        model.load_state_dict(state)
    except RuntimeError as exc:
        raise IncompatibleArtifactVersion(f"weights do not fit architecture: {exc}") from exc
    model.eval()

    sigmoid = None
    if "sigmoid_midpoint" in kv:
        sigmoid = SigmoidParams(float(kv["sigmoid_midpoint"]), float(kv["sigmoid_width"]))
    return ModelArtifact(
        architecture_id=arch,
        input_resolution=int(kv["input_resolution"]),
        label_kind=kv.get("label_kind", "psnr"),
        train_seed=int(kv.get("train_seed", 0)),
        model=model,
        norm_mean=np.array([float(v) for v in kv["norm_mean"].split(",")]),
        norm_std=np.array([float(v) for v in kv["norm_std"].split(",")]),
        sigmoid=sigmoid,
    )


def with_sigmoid(artifact: ModelArtifact, sigmoid: SigmoidParams) -> ModelArtifact:
    return replace(artifact, sigmoid=sigmoid)
