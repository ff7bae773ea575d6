"""Moebius maps, the strip/half-plane exponential map, and hull transport.

Hull images are renormalized by re-extracting a Loewner chain of the
transported hull curve (the vertical-slit zipper), which avoids any
general-purpose conformal mapping machinery.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import HullTooLarge, PoleAt
from .loewner import SlitMapChain, TracePoint, chain_from_curve, hull_capacity

_POLE_TOL = 1e-14

INFINITY = complex(np.inf, 0.0)


def _is_inf(z) -> bool:
    return np.isinf(np.asarray(z)).any()


@dataclass(frozen=True)
class MoebiusMap:
    """z -> (a z + b) / (c z + d) with real coefficients; optionally
    conjugating (complex conjugation applied first)."""

    a: float
    b: float
    c: float
    d: float
    conjugating: bool = False

    def __post_init__(self):
        if self.a * self.d - self.b * self.c == 0:
            raise ValueError("degenerate coefficient matrix")

    @property
    def matrix(self):
        return np.array([[self.a, self.b], [self.c, self.d]])

    @property
    def pole(self):
        if self.c == 0:
            return INFINITY
        return complex(-self.d / self.c)

    def __call__(self, z):
        return self.apply(z)

    def apply(self, z):
        scalar = np.isscalar(z)
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if self.conjugating:
            z = np.conj(z)
        out = np.empty_like(z)
        inf_in = np.isinf(z.real) | np.isinf(z.imag)
        if inf_in.any():
            out[inf_in] = INFINITY if self.c == 0 else self.a / self.c
        fin = ~inf_in
        den = self.c * z[fin] + self.d
        if np.any(np.abs(den) < _POLE_TOL * max(abs(self.c), abs(self.d), 1.0)):
            raise PoleAt("input within tolerance of the pole")
        out[fin] = (self.a * z[fin] + self.b) / den
        return complex(out[0]) if scalar else out

    def derivative(self, z):
        if self.conjugating:
            raise ValueError("conjugating maps are not holomorphic")
        den = self.c * np.asarray(z, dtype=complex) + self.d
        return (self.a * self.d - self.b * self.c) / (den * den)

    def compose(self, inner: "MoebiusMap") -> "MoebiusMap":
        """self after inner: apply(self, apply(inner, z))."""
        m2, m1 = self.matrix, inner.matrix
        m = m2 @ m1  # real coefficients commute with conjugation
        return MoebiusMap(
            m[0, 0], m[0, 1], m[1, 0], m[1, 1],
            conjugating=self.conjugating ^ inner.conjugating,
        )

    def inverse(self) -> "MoebiusMap":
        return MoebiusMap(self.d, -self.b, -self.c, self.a, self.conjugating)


def _to_zero_one_inf(p1, p2, p3):
    """Matrix for the map sending (p1, p2, p3) to (0, 1, inf)."""
    if _is_inf(p1):
        return np.array([[0.0, p2 - p3], [1.0, -p3]])
    if _is_inf(p2):
        return np.array([[1.0, -p1], [1.0, -p3]])
    if _is_inf(p3):
        return np.array([[1.0, -p1], [0.0, p2 - p1]])
    return np.array(
        [[p2 - p3, -p1 * (p2 - p3)], [p2 - p1, -p3 * (p2 - p1)]]
    )


def moebius_from_boundary_points(src, dst, conjugating=False) -> MoebiusMap:
    """Map sending three boundary points (reals or inf) to three targets."""
    t_src = _to_zero_one_inf(*[float(p) if not _is_inf(p) else np.inf for p in src])
    t_dst = _to_zero_one_inf(*[float(p) if not _is_inf(p) else np.inf for p in dst])
    m = np.linalg.inv(t_dst) @ t_src
    return MoebiusMap(m[0, 0], m[0, 1], m[1, 0], m[1, 1], conjugating=conjugating)


class Direction(Enum):
    EXP_MINUS_ONE = "exp_minus_one"  # strip -> half-plane, z -> e^z - 1
    LOG_FORM = "log_form"  # half-plane -> strip, w -> log(1 + w)


@dataclass(frozen=True)
class StripHalfPlaneMap:
    """e^z - 1 sends (S_pi; 0, +inf, -inf) to (H; 0, inf, -1); the log
    form is its inverse with the branch landing in the closed strip."""

    direction: Direction = Direction.EXP_MINUS_ONE
    pre: MoebiusMap | None = None
    post: MoebiusMap | None = None

    def __call__(self, z):
        return self.apply(z)

    def apply(self, z):
        scalar = np.isscalar(z)
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if self.pre is not None:
            z = self.pre.apply(z)
        if self.direction is Direction.EXP_MINUS_ONE:
            out = np.where(
                np.isinf(z.real) & (z.real > 0),
                INFINITY,
                np.where(np.isinf(z.real), -1.0 + 0.0j, np.exp(z) - 1.0),
            )
        else:
            w = 1.0 + z
            if np.any(np.abs(w) < _POLE_TOL):
                raise PoleAt("log form singular at -1")
            out = np.log(np.abs(w)) + 1j * np.angle(w)
        if self.post is not None:
            out = self.post.apply(out)
        return complex(out[0]) if scalar else out

    def derivative(self, z):
        z = np.asarray(z, dtype=complex)
        if self.pre is not None or self.post is not None:
            raise NotImplementedError("derivative only for the bare map")
        if self.direction is Direction.EXP_MINUS_ONE:
            return np.exp(z)
        return 1.0 / (1.0 + z)


def transport_trace(points, mapping):
    """Pointwise image of a trace; time labels are retained unchanged."""
    return [TracePoint(p.t, complex(mapping.apply(p.z))) for p in points]


def hull_curve(chain: SlitMapChain, per_step: int = 8) -> np.ndarray:
    """Polyline of the hull grown by the chain, in original coordinates.

    During step k the slit [c_k, c_k + 2i sqrt(tau_k)] grows in step-k
    coordinates; it is pulled back through the earlier steps.  Points are
    square-root spaced toward the tip where the map degenerates.
    """
    pieces = [np.array([complex(chain.centers[0])])]
    frac = np.sqrt(np.linspace(0.0, 1.0, per_step + 1)[1:])
    for k in range(len(chain)):
        seg = chain.centers[k] + 2j * np.sqrt(chain.durations[k]) * frac
        pieces.append(chain.inverse(seg, upto=k))
    return np.concatenate(pieces)


def capacity_rescale_check(
    hull: SlitMapChain, mapping: MoebiusMap, x0: float, per_step: int = 64
) -> float:
    """hcap(W(H)) / (W'(x0)^2 hcap(H)) with the image hull re-normalized
    by recovering its Loewner chain from the transported hull curve."""
    curve = hull_curve(hull, per_step=per_step)
    pole = mapping.pole
    if not _is_inf(pole):
        dist = np.min(np.abs(curve - pole))
        diam = max(np.ptp(curve.real), np.ptp(curve.imag))
        if diam > 0.1 * dist:
            raise HullTooLarge(
                f"hull diameter {diam:.3g} exceeds 0.1 x distance to pole {dist:.3g}"
            )
    image = mapping.apply(curve)
    image = np.where(np.abs(image.imag) < 1e-15, image.real + 0.0j, image)
    rezipped = chain_from_curve(image)
    deriv = abs(mapping.derivative(x0))
    return hull_capacity(rezipped) / (deriv**2 * hull_capacity(hull))
