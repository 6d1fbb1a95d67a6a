"""Decision-boundary geometry, loss-landscape grids, and weight diagnostics.

Works on 2-D-input models for the boundary tooling (confidence grids,
per-class margins, the balance ratio between the smallest and largest
class margin) and on any model for loss landscapes (two seeded random
directions, normalized per parameter tensor so each direction's norm
matches that tensor's norm) and last-layer weight traces.

Grid evaluations are read-only on the model and order-independent.
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .datasets import Dataset
from .errors import ShapeError
from .losses import LossSpec, loss_on_logits, softmax
from .nn import Network


@dataclass
class ConfidenceGrid:
    """Predicted class and top-class probability over a 2-D region.

    Arrays are indexed [iy, ix]; cell (ix, iy) sits at (xs[ix], ys[iy]).
    Boundary cells are those whose predicted class differs from at least
    one 4-neighbor.
    """

    xs: np.ndarray
    ys: np.ndarray
    pred: np.ndarray
    max_prob: np.ndarray
    boundary: np.ndarray

    def boundary_points(self) -> np.ndarray:
        iy, ix = np.nonzero(self.boundary)
        return np.column_stack([self.xs[ix], self.ys[iy]])


@dataclass
class BoundaryReport:
    """Margin geometry of a trained 2-D classifier against its data."""

    margins: List[float]          # per-class min distance to the boundary
    margin_balance: float         # min(margins) / max(margins), in (0, 1]
    confidence_band_width: float  # fraction of cells with max_prob < threshold
    confidence_threshold: float
    boundary_cells: int


@dataclass
class LandscapeGrid:
    """Loss surface on a plane spanned by two seeded random directions."""

    a_values: np.ndarray
    b_values: np.ndarray
    loss: np.ndarray  # loss[i, j] at (a_values[i], b_values[j])
    seeds: tuple
    center_loss: float


@dataclass
class WeightTrace:
    """Per-epoch snapshots of the last layer's weight matrix."""

    snapshots: List[np.ndarray]

    def max_abs(self) -> float:
        return float(np.abs(self.snapshots[-1]).max())

    def tail_drift(self, window: Optional[int] = None) -> float:
        """Largest per-weight deviation from the final snapshot.

        Measured over the trailing `window` snapshots (default: final 10%,
        at least one). Small drift means the weights have stopped moving.
        """
        if len(self.snapshots) < 2:
            return 0.0
        if window is None:
            window = max(1, len(self.snapshots) // 10)
        window = min(window, len(self.snapshots) - 1)
        final = self.snapshots[-1]
        tail = self.snapshots[-1 - window:-1]
        return float(max(np.abs(s - final).max() for s in tail))


def confidence_grid(net: Network, region, resolution: int) -> ConfidenceGrid:
    """Evaluate softmax predictions over an (xmin, xmax, ymin, ymax) region."""
    if net.input_dim != 2:
        raise ShapeError("confidence grids require a 2-D input model")
    xmin, xmax, ymin, ymax = region
    xs = np.linspace(xmin, xmax, resolution)
    ys = np.linspace(ymin, ymax, resolution)
    gx, gy = np.meshgrid(xs, ys)
    points = np.column_stack([gx.ravel(), gy.ravel()])
    logits, _ = net.forward(points)
    probs = softmax(logits)
    pred = np.argmax(logits, axis=1).reshape(resolution, resolution)
    max_prob = probs.max(axis=1).reshape(resolution, resolution)

    boundary = np.zeros_like(pred, dtype=bool)
    boundary[:-1, :] |= pred[:-1, :] != pred[1:, :]
    boundary[1:, :] |= pred[1:, :] != pred[:-1, :]
    boundary[:, :-1] |= pred[:, :-1] != pred[:, 1:]
    boundary[:, 1:] |= pred[:, 1:] != pred[:, :-1]
    return ConfidenceGrid(xs, ys, pred, max_prob, boundary)


def margin_report(net: Network, ds: Dataset, region, resolution: int,
                  confidence_threshold: float = 0.9) -> BoundaryReport:
    """Per-class sample-to-boundary margins and the low-confidence band.

    The margin of a class is the smallest Euclidean distance from any of
    its samples to a boundary cell center; margin_balance is the ratio of
    the smallest to the largest class margin, 1.0 meaning the boundary
    runs evenly between the classes.
    """
    grid = confidence_grid(net, region, resolution)
    centers = grid.boundary_points()
    if centers.shape[0] == 0:
        raise ValueError("no boundary in region")
    margins = []
    for label in range(ds.num_classes):
        pts = ds.features[ds.labels == label]
        if pts.shape[0] == 0:
            raise ValueError(f"class {label} has no samples")
        d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        margins.append(float(np.sqrt(d2.min())))
    band = float((grid.max_prob < confidence_threshold).mean())
    return BoundaryReport(
        margins=margins,
        margin_balance=float(min(margins) / max(margins)),
        confidence_band_width=band,
        confidence_threshold=confidence_threshold,
        boundary_cells=int(centers.shape[0]),
    )


def last_layer_inputs(net: Network, batch: np.ndarray) -> np.ndarray:
    """Feature vectors entering the final layer for each row of batch."""
    _, cache = net.forward(batch)
    if len(net.layers) == 1:
        return cache.batch
    return cache.post[-2]


def midpoint_deviation(net: Network, u0: np.ndarray, u1: np.ndarray) -> float:
    """Normalized logit gap at the midpoint of two last-layer feature vectors.

    For a binary head z_k = w_k . u + b_k this is
    |(w_0 - w_1) . u_mid + (b_0 - b_1)| / ||w_0 - w_1||: zero exactly when
    the decision boundary passes through the midpoint. Invariant under
    translating both features with a compensating bias shift.
    """
    head = net.layers[-1]
    if head.out_dim != 2:
        raise ShapeError("midpoint deviation requires a binary head")
    u0 = np.asarray(u0, dtype=np.float64).ravel()
    u1 = np.asarray(u1, dtype=np.float64).ravel()
    if u0.shape != u1.shape or u0.shape[0] != head.in_dim:
        raise ShapeError("feature vectors must match the head's input width")
    dw = head.weights[0] - head.weights[1]
    norm = float(np.linalg.norm(dw))
    if norm == 0.0:
        raise ValueError("degenerate head: identical class weight vectors")
    mid = 0.5 * (u0 + u1)
    gap = float(dw @ mid + head.bias[0] - head.bias[1])
    return abs(gap) / norm


def _directions(net: Network, seed: int) -> List[np.ndarray]:
    """One random direction per parameter tensor, norm-matched to it."""
    rng = np.random.default_rng(seed)
    dirs = []
    for p in net.parameters():
        d = rng.standard_normal(p.shape)
        d_norm = np.linalg.norm(d)
        p_norm = np.linalg.norm(p)
        dirs.append(d * (p_norm / d_norm) if d_norm > 0 and p_norm > 0 else np.zeros_like(p))
    return dirs


def landscape(net: Network, spec: LossSpec, ds: Dataset, span: float = 1.0,
              resolution: int = 11, seeds: tuple = (1, 2)) -> LandscapeGrid:
    """Mean training loss over the plane theta + a*d1 + b*d2.

    d1/d2 are seeded Gaussian directions rescaled per parameter tensor to
    that tensor's norm, which keeps the axes comparable across layers.
    The center cell (a=b=0) evaluates the unperturbed parameters, so it
    equals the model's training loss exactly.
    """
    d1 = _directions(net, seeds[0])
    d2 = _directions(net, seeds[1])
    base = [p.copy() for p in net.parameters()]
    a_values = np.linspace(-span, span, resolution)
    b_values = np.linspace(-span, span, resolution)
    probe = net.copy()
    probe_params = probe.parameters()
    loss = np.empty((resolution, resolution))
    labels = ds.labels
    for i, a in enumerate(a_values):
        for j, b in enumerate(b_values):
            for p, p0, e1, e2 in zip(probe_params, base, d1, d2):
                np.copyto(p, p0 + a * e1 + b * e2)
            logits, _ = probe.forward(ds.features)
            values, _, _ = loss_on_logits(logits, labels, spec)
            loss[i, j] = values.mean()
    center = loss[resolution // 2, resolution // 2]
    return LandscapeGrid(a_values, b_values, loss, tuple(seeds), float(center))


def is_strict_local_min_center(grid: LandscapeGrid) -> bool:
    """True when all 8 neighbors of the center cell exceed the center loss."""
    i = grid.loss.shape[0] // 2
    j = grid.loss.shape[1] // 2
    center = grid.loss[i, j]
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            if grid.loss[i + di, j + dj] <= center:
                return False
    return True


# ---------------------------------------------------------------------------
# CSV emission (long format, one row per cell)
# ---------------------------------------------------------------------------


def write_confidence_csv(path, grid: ConfidenceGrid) -> None:
    lines = ["x,y,pred,max_prob,boundary"]
    for iy, y in enumerate(grid.ys):
        for ix, x in enumerate(grid.xs):
            lines.append(
                f"{x:.17g},{y:.17g},{grid.pred[iy, ix]},"
                f"{grid.max_prob[iy, ix]:.17g},{int(grid.boundary[iy, ix])}"
            )
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def write_landscape_csv(path, grid: LandscapeGrid) -> None:
    lines = ["a,b,loss"]
    for i, a in enumerate(grid.a_values):
        for j, b in enumerate(grid.b_values):
            lines.append(f"{a:.17g},{b:.17g},{grid.loss[i, j]:.17g}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def write_trace_csv(path, trace: WeightTrace) -> None:
    lines = ["epoch,row,col,value"]
    for epoch, snap in enumerate(trace.snapshots):
        for r in range(snap.shape[0]):
            for c in range(snap.shape[1]):
                lines.append(f"{epoch},{r},{c},{snap[r, c]:.17g}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def write_report(path, report: BoundaryReport) -> None:
    lines = []
    for i, m in enumerate(report.margins):
        lines.append(f"margin_class_{i}={m:.17g}")
    lines.append(f"margin_balance={report.margin_balance:.17g}")
    lines.append(f"confidence_band_width={report.confidence_band_width:.17g}")
    lines.append(f"confidence_threshold={report.confidence_threshold:.17g}")
    lines.append(f"boundary_cells={report.boundary_cells}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
