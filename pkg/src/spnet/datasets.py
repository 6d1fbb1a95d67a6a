"""Dataset generation and ingestion.

Toy 2-D generators (parallel segments, two moons, two concentric circles
with class imbalance), a deterministic 28x28 ten-class glyph generator for
image-scale experiments without external files, IDX image/label file
ingestion, stratified subsampling, and CSV import/export.

All generators are pure functions of their spec (seed included), so the
same spec reproduces the same arrays bit for bit.
"""

import gzip
import struct
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import DataFormatError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Feature matrix with integer labels and the value range of features."""

    features: np.ndarray  # (n, d) float64
    labels: np.ndarray    # (n,) int64
    num_classes: int
    feature_range: tuple  # (lo, hi), brackets every feature value

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError("features must be a non-empty 2-D array")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels must be 1-D and match the feature rows")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError("labels must lie in [0, num_classes)")
        lo, hi = self.feature_range
        if self.features.min() < lo or self.features.max() > hi:
            raise ValueError("feature_range does not bracket the features")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def class_indices(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)


@dataclass(frozen=True)
class ToySpec:
    """Parameters of one toy generator run.

    margin: vertical class gap for segments; for two moons, negative
    values make the classes overlap by |margin| along the separation axis.
    drop_fraction: fraction of the designated (outer-circle) class removed,
    for imbalance experiments.
    """

    kind: str
    n_per_class: int = 100
    margin: float = 1.8
    noise: float = 0.0
    drop_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("segments", "two_moons", "two_circles"):
            raise ValueError(f"unknown toy kind {self.kind!r}")
        if self.n_per_class < 1:
            raise ValueError("n_per_class must be >= 1")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if not 0.0 <= self.drop_fraction < 1.0:
            raise ValueError("drop_fraction must be in [0, 1)")


def _bounds(features: np.ndarray) -> tuple:
    return (float(features.min()), float(features.max()))


def gen_segments(spec: ToySpec) -> Dataset:
    """Two parallel horizontal segments separated vertically by spec.margin.

    Segments span x in [-2, 2] at y = +-margin/2; x is uniform, Gaussian
    noise (sigma = spec.noise) perturbs y only, so the realized vertical
    gap stays within 2*noise of the nominal margin.
    """
    if spec.margin <= 0:
        raise ValueError("segments require margin > 0")
    rng = np.random.default_rng(spec.seed)
    n = spec.n_per_class
    xs = rng.uniform(-2.0, 2.0, size=2 * n)
    ys = np.concatenate([
        np.full(n, -spec.margin / 2.0),
        np.full(n, +spec.margin / 2.0),
    ])
    if spec.noise > 0:
        ys = ys + rng.normal(0.0, spec.noise, size=2 * n)
    features = np.column_stack([xs, ys])
    labels = np.concatenate([np.zeros(n, dtype=np.int64), np.ones(n, dtype=np.int64)])
    return Dataset(features, labels, 2, _bounds(features))


def gen_two_moons(spec: ToySpec) -> Dataset:
    """Interleaved half circles; spec.margin < 0 overlaps them vertically.

    Class 0 is the upper half of the unit circle at the origin; class 1 is
    the lower half of a unit circle centered at (1, -margin), so its
    highest points poke |margin| above class 0's baseline when margin < 0.
    Angles are evenly spaced, so noise=0 points lie exactly on the arcs.
    """
    n = spec.n_per_class
    t = np.linspace(0.0, np.pi, n)
    x0 = np.column_stack([np.cos(t), np.sin(t)])
    x1 = np.column_stack([1.0 - np.cos(t), -spec.margin - np.sin(t)])
    features = np.vstack([x0, x1])
    if spec.noise > 0:
        rng = np.random.default_rng(spec.seed)
        features = features + rng.normal(0.0, spec.noise, size=features.shape)
    labels = np.concatenate([np.zeros(n, dtype=np.int64), np.ones(n, dtype=np.int64)])
    return Dataset(features, labels, 2, _bounds(features))


def gen_two_circles(spec: ToySpec) -> Dataset:
    """Concentric circles, radii 1.0 (class 0) and 1.5 (class 1).

    Angles are uniform random; spec.drop_fraction removes that share of
    the outer class, producing the imbalanced variants.
    """
    rng = np.random.default_rng(spec.seed)
    n_inner = spec.n_per_class
    n_outer = int(round((1.0 - spec.drop_fraction) * spec.n_per_class))
    if n_outer < 1:
        raise ValueError("drop_fraction leaves no points in the outer class")
    t_inner = rng.uniform(0.0, 2.0 * np.pi, size=n_inner)
    t_outer = rng.uniform(0.0, 2.0 * np.pi, size=n_outer)
    x0 = np.column_stack([np.cos(t_inner), np.sin(t_inner)])
    x1 = 1.5 * np.column_stack([np.cos(t_outer), np.sin(t_outer)])
    features = np.vstack([x0, x1])
    if spec.noise > 0:
        features = features + rng.normal(0.0, spec.noise, size=features.shape)
    labels = np.concatenate(
        [np.zeros(n_inner, dtype=np.int64), np.ones(n_outer, dtype=np.int64)]
    )
    return Dataset(features, labels, 2, _bounds(features))


def generate_toy(spec: ToySpec) -> Dataset:
    if spec.kind == "segments":
        return gen_segments(spec)
    if spec.kind == "two_moons":
        return gen_two_moons(spec)
    return gen_two_circles(spec)


# ---------------------------------------------------------------------------
# Procedural 28x28 glyph images (an offline stand-in for digit datasets)
# ---------------------------------------------------------------------------

_GLYPH_ROWS = [
    ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
]

_GLYPH_MASKS = np.array(
    [[[int(c) for c in row] for row in glyph] for glyph in _GLYPH_ROWS],
    dtype=np.float64,
)  # (10, 7, 5)


def gen_glyphs(n_per_class: int, seed: int = 0, noise: float = 0.15,
               max_shift: int = 4) -> Dataset:
    """Ten-class 28x28 digit-like glyphs with jitter and pixel noise.

    Each sample places a 3x-upscaled 7x5 glyph bitmap on a 28x28 canvas at
    a random integer offset, scales its intensity, and adds Gaussian pixel
    noise, clipped to [0, 1]. Entirely self-contained and deterministic,
    so image-scale experiments run without any dataset files.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    scale = 3
    gh, gw = 7 * scale, 5 * scale
    row0, col0 = (28 - gh) // 2, (28 - gw) // 2
    shift_y = min(max_shift, row0)          # keep the glyph on the canvas
    shift_x = min(max_shift, col0)
    n = 10 * n_per_class
    images = np.zeros((n, 28, 28))
    labels = np.repeat(np.arange(10, dtype=np.int64), n_per_class)
    big = np.kron(_GLYPH_MASKS, np.ones((scale, scale)))  # (10, 21, 15)
    for i in range(n):
        dy = rng.integers(-shift_y, shift_y + 1)
        dx = rng.integers(-shift_x, shift_x + 1)
        intensity = rng.uniform(0.6, 1.0)
        r, c = row0 + dy, col0 + dx
        images[i, r:r + gh, c:c + gw] = big[labels[i]] * intensity
    if noise > 0:
        images += rng.normal(0.0, noise, size=images.shape)
    images = np.clip(images, 0.0, 1.0)
    order = rng.permutation(n)
    return Dataset(images[order].reshape(n, 784), labels[order], 10, (0.0, 1.0))


# ---------------------------------------------------------------------------
# IDX files
# ---------------------------------------------------------------------------


def _read_file(path) -> bytes:
    with open(path, "rb") as f:
        head = f.read(2)
        f.seek(0)
        if head == b"\x1f\x8b":
            return gzip.decompress(f.read())
        return f.read()


def load_idx(images_path, labels_path, num_classes: Optional[int] = None) -> Dataset:
    """Load IDX image/label files (raw or gzip) into a Dataset.

    Pixels are scaled to [0, 1] and flattened row-major. Image and label
    counts must agree.
    """
    img_buf = _read_file(images_path)
    lab_buf = _read_file(labels_path)
    if len(img_buf) < 16 or len(lab_buf) < 8:
        raise DataFormatError("IDX file too short for its header")
    magic, n_img, rows, cols = struct.unpack(">IIII", img_buf[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise DataFormatError(f"bad image magic 0x{magic:08x}")
    lab_magic, n_lab = struct.unpack(">II", lab_buf[:8])
    if lab_magic != IDX_LABEL_MAGIC:
        raise DataFormatError(f"bad label magic 0x{lab_magic:08x}")
    if n_img != n_lab:
        raise DataFormatError(f"image count {n_img} != label count {n_lab}")
    expected = n_img * rows * cols
    if len(img_buf) - 16 != expected:
        raise DataFormatError("image payload size does not match header")
    if len(lab_buf) - 8 != n_lab:
        raise DataFormatError("label payload size does not match header")
    pixels = np.frombuffer(img_buf, dtype=np.uint8, offset=16).reshape(n_img, rows * cols)
    labels = np.frombuffer(lab_buf, dtype=np.uint8, offset=8).astype(np.int64)
    features = pixels.astype(np.float64) / 255.0
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    return Dataset(features, labels, num_classes, (0.0, 1.0))


def save_idx(ds: Dataset, images_path, labels_path, image_shape=None) -> None:
    """Serialize a [0,1]-valued dataset back to IDX (gzip if path ends .gz)."""
    if image_shape is None:
        side = int(round(np.sqrt(ds.dim)))
        if side * side != ds.dim:
            raise ValueError("cannot infer a square image shape; pass image_shape")
        image_shape = (side, side)
    rows, cols = image_shape
    pixels = np.rint(ds.features * 255.0).astype(np.uint8)
    img_buf = struct.pack(">IIII", IDX_IMAGE_MAGIC, ds.n, rows, cols) + pixels.tobytes()
    lab_buf = struct.pack(">II", IDX_LABEL_MAGIC, ds.n) + ds.labels.astype(np.uint8).tobytes()
    for path, buf in ((images_path, img_buf), (labels_path, lab_buf)):
        data = gzip.compress(buf) if str(path).endswith(".gz") else buf
        with open(path, "wb") as f:
            f.write(data)


# ---------------------------------------------------------------------------
# Subsetting
# ---------------------------------------------------------------------------


def subsample(ds: Dataset, per_class: Union[int, Sequence[int]], seed: int = 0) -> Dataset:
    """Deterministic stratified subset with per_class samples of each class.

    per_class may be one count for every class or a sequence of counts.
    Requesting more than a class holds is an error; requesting everything
    returns the dataset unchanged (same row order).
    """
    if isinstance(per_class, int):
        counts = [per_class] * ds.num_classes
    else:
        counts = list(per_class)
        if len(counts) != ds.num_classes:
            raise ValueError("per_class length must equal num_classes")
    rng = np.random.default_rng(seed)
    keep = []
    for label, want in enumerate(counts):
        idx = ds.class_indices(label)
        if want > idx.size:
            raise ValueError(
                f"requested {want} samples of class {label}, only {idx.size} available"
            )
        keep.append(rng.choice(idx, size=want, replace=False))
    keep = np.sort(np.concatenate(keep))
    return Dataset(ds.features[keep], ds.labels[keep], ds.num_classes, ds.feature_range)


def split(ds: Dataset, test_fraction: float = 0.2, seed: int = 0):
    """Seeded stratified train/test split; returns (train, test)."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for label in range(ds.num_classes):
        idx = rng.permutation(ds.class_indices(label))
        n_test = int(round(test_fraction * idx.size))
        n_test = min(max(n_test, 1), idx.size - 1) if idx.size > 1 else 0
        test_idx.append(idx[:n_test])
        train_idx.append(idx[n_test:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    mk = lambda sel: Dataset(
        ds.features[sel], ds.labels[sel], ds.num_classes, ds.feature_range
    )
    return mk(train_idx), mk(test_idx)


# ---------------------------------------------------------------------------
# CSV import/export
# ---------------------------------------------------------------------------


def to_csv(ds: Dataset, path) -> None:
    """Write features and labels as CSV with header x0,...,x{d-1},label."""
    header = ",".join([f"x{i}" for i in range(ds.dim)] + ["label"])
    lines = [header]
    for row, label in zip(ds.features, ds.labels):
        lines.append(",".join(f"{v:.17g}" for v in row) + f",{label}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def from_csv(path, num_classes: Optional[int] = None) -> Dataset:
    """Read a dataset written by :func:`to_csv`."""
    with open(path) as f:
        header = f.readline().strip().split(",")
        if not header or header[-1] != "label":
            raise DataFormatError("expected a header line ending in 'label'")
        d = len(header) - 1
        feats, labs = [], []
        for line_no, line in enumerate(f, start=2):
            parts = line.strip().split(",")
            if len(parts) != d + 1:
                raise DataFormatError(f"line {line_no}: expected {d + 1} columns")
            feats.append([float(v) for v in parts[:d]])
            labs.append(int(parts[d]))
    features = np.asarray(feats, dtype=np.float64)
    labels = np.asarray(labs, dtype=np.int64)
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    return Dataset(features, labels, num_classes, _bounds(features))
