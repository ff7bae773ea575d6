"""Discrete hulls from trace polylines: rasterization, flood fill,
outer/right boundary extraction, separation predicates.

The trace is rasterized at resolution h (default 4x the trace point
spacing); the complement of the curve is labeled with 4-connectivity, so
a diagonally drawn curve cannot leak.  The hull is the curve plus every
bounded pocket of its complement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage import measure

from .errors import ResolutionFailure

_MAX_CELLS = 5000
_FOUR = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


@dataclass(frozen=True)
class DiscreteHull:
    trace: np.ndarray  # complex polyline
    h: float
    x0: float  # real coordinate of column 0 cell centers
    occupied: np.ndarray  # curve cells, shape (ny, nx)
    labels: np.ndarray  # complement component labels, 0 on the curve
    outer_label: int
    filled: np.ndarray  # curve plus bounded pockets

    def cell(self, z: complex):
        col = int(np.floor((z.real - self.x0) / self.h + 0.5))
        row = int(np.floor(z.imag / self.h + 0.5))
        return row, col

    def label_at(self, z) -> int:
        """Component label at z; -1 when z falls on the curve itself,
        outer_label for the point at infinity."""
        if z is None or np.isinf(np.asarray(z)).any():
            return self.outer_label
        z = complex(z)
        row, col = self.cell(z)
        ny, nx = self.occupied.shape
        if not (0 <= row < ny and 0 <= col < nx):
            return self.outer_label
        if self.occupied[row, col]:
            return -1
        return int(self.labels[row, col])


@dataclass(frozen=True)
class BoundaryCurve:
    points: np.ndarray  # complex polyline, oriented left-to-right
    h: float


def build_hull(points, h: float | None = None, pad: float | None = None) -> DiscreteHull:
    """Rasterize a trace polyline and fill its bounded pockets."""
    pts = np.asarray(points, dtype=complex)
    if len(pts) < 2:
        raise ValueError("need at least two trace points")
    spacing = np.median(np.abs(np.diff(pts)))
    if h is None:
        h = 4.0 * max(spacing, 1e-12)
    diam = max(np.ptp(pts.real), np.max(pts.imag), h)
    if pad is None:
        pad = diam
    x0 = pts.real.min() - pad
    x1 = pts.real.max() + pad
    y1 = pts.imag.max() + pad
    nx = int(np.ceil((x1 - x0) / h)) + 1
    ny = int(np.ceil(y1 / h)) + 1
    if nx > _MAX_CELLS or ny > _MAX_CELLS:
        raise ResolutionFailure(
            f"grid {ny}x{nx} exceeds limit; increase h above {h:.3g}"
        )
    occupied = np.zeros((ny, nx), dtype=bool)
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(int(np.ceil(abs(b - a) / (h / 2.0))), 1)
        seg = a + (b - a) * np.linspace(0.0, 1.0, n + 1)
        cols = np.floor((seg.real - x0) / h + 0.5).astype(int)
        rows = np.floor(seg.imag / h + 0.5).astype(int)
        keep = (rows >= 0) & (rows < ny) & (cols >= 0) & (cols < nx)
        occupied[rows[keep], cols[keep]] = True
    labels, _ = ndimage.label(~occupied, structure=_FOUR)
    corner = labels[ny - 1, 0]
    if corner == 0 or labels[ny - 1, nx - 1] != corner:
        raise ResolutionFailure("frame is not in a single unbounded component")
    filled = occupied | ((labels != corner) & (labels > 0))
    return DiscreteHull(pts, h, x0, occupied, labels, int(corner), filled)


def separates(hull: DiscreteHull, p, q) -> bool:
    """True iff p and q lie in different components of the complement of
    the trace at resolution h; points on the curve count as separated
    from everything off it."""
    lp, lq = hull.label_at(p), hull.label_at(q)
    return lp != lq


def _component_boundary(hull: DiscreteHull, comp_label: int) -> BoundaryCurve:
    mask = hull.labels == comp_label
    grown = ndimage.binary_dilation(hull.filled, structure=np.ones((3, 3)))
    contours = measure.find_contours(mask.astype(float), 0.5)
    if not contours:
        raise ResolutionFailure("no contour found for component")
    best = None
    for contour in contours:
        rows = np.clip(np.round(contour[:, 0]).astype(int), 0, mask.shape[0] - 1)
        cols = np.clip(np.round(contour[:, 1]).astype(int), 0, mask.shape[1] - 1)
        near = grown[rows, cols]
        if not near.any():
            continue
        # keep the longest run of contour points adjacent to the hull;
        # the contour is closed, so rotate it to start off-hull first
        if near.all():
            idx = np.arange(len(contour))
        else:
            start = int(np.argmin(near))
            near_r = np.roll(near, -start)
            runs = []
            i = 0
            while i < len(near_r):
                if near_r[i]:
                    j = i
                    while j < len(near_r) and near_r[j]:
                        j += 1
                    runs.append((j - i, i, j))
                    i = j
                else:
                    i += 1
            if not runs:
                continue
            _, i0, j0 = max(runs)
            idx = (np.arange(i0, j0) + start) % len(contour)
        arc = contour[idx]
        if best is None or len(arc) > len(best):
            best = arc
    if best is None:
        raise ResolutionFailure("component does not touch the hull")
    z = (hull.x0 + best[:, 1] * hull.h) + 1j * (best[:, 0] * hull.h)
    z.imag[z.imag < 0] = 0.0
    if z[0].real > z[-1].real:
        z = z[::-1]
    return BoundaryCurve(z, hull.h)


def outer_boundary(hull: DiscreteHull) -> BoundaryCurve:
    """Boundary arc between the hull and the unbounded component."""
    return _component_boundary(hull, hull.outer_label)


def right_boundary(hull: DiscreteHull, a: float) -> BoundaryCurve:
    """Boundary arc between the hull and the component whose boundary
    contains [a, +inf)."""
    lab = hull.label_at(complex(a, hull.h / 2.0))
    if lab <= 0:
        raise ResolutionFailure("reference point falls on the hull")
    return _component_boundary(hull, lab)
