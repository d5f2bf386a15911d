"""Dataset ingestion, augmentation, k-fold splits, synthetic data.

On-disk layout: ``images/*.png`` and ``masks/*.png`` with matching file
stems.  Masks are 8-bit with 0 background / 255 foreground and are
thresholded at >127 on read.  Images are resized bilinearly to the
spec's target size, masks with nearest-neighbor, and body/boundary
labels are regenerated from the resized (or augmented) final mask so the
union/disjoint decomposition always holds.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from scipy.ndimage import gaussian_filter

from .errors import ParameterError
from .labels import LabelSet, read_mask, split_labels
from .losses import BatchTargets

__all__ = [
    "DatasetSpec",
    "Sample",
    "LoadReport",
    "SegDataset",
    "load_dataset",
    "GeometryParams",
    "sample_geometry",
    "apply_geometry",
    "augment",
    "kfold_split",
    "synth_generate",
    "collate",
]

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")
SCALE_RANGE = (0.75, 1.5)


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    image_dir: str
    mask_dir: str
    target_size: tuple[int, int] = (256, 256)  # (H, W)
    spacing: tuple[float, float] | None = None  # (mm/px row, mm/px col)
    fold_count: int = 5
    seed: int = 0
    alpha: float = 1.0

    def __post_init__(self):
        h, w = self.target_size
        if h % 16 != 0 or w % 16 != 0:
            raise ParameterError(
                f"target_size must be divisible by 16, got {self.target_size}"
            )
        if self.fold_count < 2:
            raise ParameterError("fold_count must be >= 2")


@dataclass
class Sample:
    id: str
    image: np.ndarray  # (3, H, W) float32 in [0, 1]
    labels: LabelSet


@dataclass
class LoadReport:
    n_loaded: int = 0
    missing_masks: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def _resize_image(arr: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bilinear resize of a (C, H, W) float array to (H, W) = size."""
    h, w = size
    if arr.shape[-2:] == (h, w):
        return arr
    out = np.empty((arr.shape[0], h, w), dtype=np.float32)
    for c in range(arr.shape[0]):
        im = Image.fromarray(arr[c].astype(np.float32), mode="F")
        out[c] = np.asarray(im.resize((w, h), Image.BILINEAR), dtype=np.float32)
    return out


def _resize_mask(mask: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    h, w = size
    if mask.shape == (h, w):
        return mask
    im = Image.fromarray(mask.astype(np.uint8), mode="L")
    return np.asarray(im.resize((w, h), Image.NEAREST), dtype=np.uint8)


def _normalize(image: np.ndarray) -> np.ndarray:
    lo, hi = float(image.min()), float(image.max())
    if hi <= lo:
        return np.zeros_like(image)
    return (image - lo) / (hi - lo)


def _read_image(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    except OSError as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc
    return arr.transpose(2, 0, 1)  # CHW


class SegDataset:
    """Lazy image/mask loader with per-sample caching."""

    def __init__(self, spec: DatasetSpec, cache: bool = True):
        self.spec = spec
        self.report = LoadReport()
        self._cache: dict[str, Sample] | None = {} if cache else None

        image_dir = Path(spec.image_dir)
        mask_dir = Path(spec.mask_dir)
        pairs: dict[str, tuple[Path, Path]] = {}
        if image_dir.is_dir():
            for img_path in sorted(image_dir.iterdir()):
                if img_path.suffix.lower() not in IMAGE_EXTENSIONS:
                    continue
                stem = img_path.stem
                mask_path = None
                for ext in IMAGE_EXTENSIONS:
                    candidate = mask_dir / (stem + ext)
                    if candidate.exists():
                        mask_path = candidate
                        break
                if mask_path is None:
                    self.report.missing_masks.append(stem)
                    continue
                pairs[stem] = (img_path, mask_path)
        else:
            self.report.warnings.append(f"image dir {image_dir} does not exist")
        self.ids: list[str] = sorted(pairs)
        self._paths = pairs
        self.report.n_loaded = len(self.ids)
        if not self.ids:
            self.report.warnings.append("no image/mask pairs found")
            log.warning("dataset %s: no image/mask pairs found", spec.name)
        if self.report.missing_masks:
            log.warning(
                "dataset %s: %d images skipped (no matching mask)",
                spec.name,
                len(self.report.missing_masks),
            )

    def __len__(self) -> int:
        return len(self.ids)

    def load(self, sample_id: str) -> Sample:
        if self._cache is not None and sample_id in self._cache:
            return self._cache[sample_id]
        img_path, mask_path = self._paths[sample_id]
        image = _normalize(_resize_image(_read_image(img_path), self.spec.target_size))
        mask = _resize_mask(read_mask(mask_path), self.spec.target_size)
        sample = Sample(
            id=sample_id,
            image=image.astype(np.float32),
            labels=split_labels(mask, alpha=self.spec.alpha),
        )
        if self._cache is not None:
            self._cache[sample_id] = sample
        return sample

    def __getitem__(self, index: int) -> Sample:
        return self.load(self.ids[index])


def load_dataset(spec: DatasetSpec, cache: bool = True) -> SegDataset:
    return SegDataset(spec, cache=cache)


# ---------------------------------------------------------------------------
# Online augmentation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeometryParams:
    scale: float
    top: int
    left: int
    flip: bool


def sample_geometry(
    rng: np.random.Generator,
    in_size: tuple[int, int],
    target_size: tuple[int, int],
    scale_range: tuple[float, float] = SCALE_RANGE,
) -> GeometryParams:
    scale = float(rng.uniform(*scale_range))
    sh = max(1, round(in_size[0] * scale))
    sw = max(1, round(in_size[1] * scale))
    th, tw = target_size
    top = int(rng.integers(0, max(sh, th) - th + 1))
    left = int(rng.integers(0, max(sw, tw) - tw + 1))
    return GeometryParams(scale=scale, top=top, left=left, flip=bool(rng.random() < 0.5))


def apply_geometry(
    image: np.ndarray,
    mask: np.ndarray,
    params: GeometryParams,
    target_size: tuple[int, int],
) -> tuple[np.ndarray, np.ndarray]:
    """Scale, zero-pad/crop to target size, optional horizontal flip.

    The image and mask go through identical geometry; the mask stays
    binary (nearest-neighbor resize).
    """
    sh = max(1, round(image.shape[-2] * params.scale))
    sw = max(1, round(image.shape[-1] * params.scale))
    image = _resize_image(image, (sh, sw))
    mask = _resize_mask(mask, (sh, sw))

    th, tw = target_size
    if sh < th or sw < tw:
        ph, pw = max(th - sh, 0), max(tw - sw, 0)
        image = np.pad(image, ((0, 0), (0, ph), (0, pw)))
        mask = np.pad(mask, ((0, ph), (0, pw)))
    image = image[:, params.top : params.top + th, params.left : params.left + tw]
    mask = mask[params.top : params.top + th, params.left : params.left + tw]
    if params.flip:
        image = image[:, :, ::-1]
        mask = mask[:, ::-1]
    return np.ascontiguousarray(image), np.ascontiguousarray(mask)


def augment(
    sample: Sample,
    rng: np.random.Generator,
    scale_range: tuple[float, float] = SCALE_RANGE,
) -> Sample:
    """Random scale/crop/flip; body and boundary labels are regenerated."""
    target = sample.labels.shape
    params = sample_geometry(rng, sample.image.shape[-2:], target, scale_range)
    image, mask = apply_geometry(sample.image, sample.labels.final, params, target)
    return Sample(
        id=sample.id,
        image=image,
        labels=split_labels(mask, alpha=sample.labels.alpha),
    )


def augment_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    """Per-sample generator so worker scheduling cannot change results."""
    return np.random.default_rng(np.random.SeedSequence([seed, epoch, index]))


# ---------------------------------------------------------------------------
# Cross-validation folds
# ---------------------------------------------------------------------------


def kfold_split(
    ids: list[str], k: int, fold: int, seed: int
) -> tuple[list[str], list[str]]:
    """Seeded shuffle then contiguous partition into k folds."""
    if not 0 <= fold < k:
        raise ParameterError(f"fold must be in [0, {k}), got {fold}")
    if len(ids) < k:
        raise ParameterError(f"need at least {k} ids for {k} folds, got {len(ids)}")
    perm = np.random.default_rng(seed).permutation(len(ids))
    chunks = np.array_split(perm, k)
    val_idx = set(chunks[fold].tolist())
    train = [ids[i] for i in perm if i not in val_idx]
    val = [ids[i] for i in chunks[fold]]
    return train, val


# ---------------------------------------------------------------------------
# Synthetic ultrasound-like data
# ---------------------------------------------------------------------------


def _ellipse_mask(
    size: tuple[int, int],
    center: tuple[float, float],
    axes: tuple[float, float],
    angle: float,
) -> np.ndarray:
    h, w = size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - center[0], xx - center[1]
    c, s = np.cos(angle), np.sin(angle)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return (u / axes[1]) ** 2 + (v / axes[0]) ** 2 <= 1.0


def synth_generate(
    n: int, size: tuple[int, int], seed: int, out_dir: str | Path
) -> list[Path]:
    """Write n speckle images with 1-2 bright soft-edged ellipses + masks.

    Output is deterministic per seed (byte-identical across runs).
    Returns the written image paths.
    """
    h, w = size
    if h % 16 != 0 or w % 16 != 0:
        raise ParameterError(f"size must be divisible by 16, got {size}")
    out = Path(out_dir)
    img_dir = out / "images"
    mask_dir = out / "masks"
    img_dir.mkdir(parents=True, exist_ok=True)
    mask_dir.mkdir(parents=True, exist_ok=True)

    written = []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        speckle = rng.rayleigh(scale=1.0, size=(h, w))
        image = 0.16 * gaussian_filter(speckle, sigma=0.8)

        mask = np.zeros((h, w), dtype=bool)
        bump = np.zeros((h, w), dtype=np.float64)
        for _ in range(int(rng.integers(1, 3))):
            ay = rng.uniform(0.08, 0.2) * h
            ax = rng.uniform(0.08, 0.2) * w
            cy = rng.uniform(ay + 2, h - ay - 2)
            cx = rng.uniform(ax + 2, w - ax - 2)
            angle = rng.uniform(0, np.pi)
            ell = _ellipse_mask((h, w), (cy, cx), (ay, ax), angle)
            mask |= ell
            bump += rng.uniform(0.55, 0.75) * ell
        soft = gaussian_filter(bump, sigma=2.0)
        lesion_speckle = rng.rayleigh(scale=1.0, size=(h, w))
        image = np.clip(image + soft * (0.55 + 0.45 * lesion_speckle), 0.0, 1.0)

        name = f"img_{i:04d}.png"
        Image.fromarray(np.round(image * 255).astype(np.uint8), mode="L").save(
            img_dir / name
        )
        Image.fromarray(mask.astype(np.uint8) * 255, mode="L").save(mask_dir / name)
        written.append(img_dir / name)
    return written


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------


def collate(samples: list[Sample]) -> tuple[torch.Tensor, BatchTargets]:
    """Stack samples into an image batch and batched target masks."""
    images = torch.from_numpy(np.stack([s.image for s in samples]))
    final = torch.from_numpy(
        np.stack([s.labels.final for s in samples])[:, None].astype(np.float32)
    )
    body = torch.from_numpy(
        np.stack([s.labels.body for s in samples])[:, None].astype(np.float32)
    )
    bound = torch.from_numpy(
        np.stack([s.labels.bound for s in samples])[:, None].astype(np.float32)
    )
    return images, BatchTargets(final=final, body=body, bound=bound)
