"""Chordal and strip Loewner evolutions built from elementary slit maps.

The chordal evolution dphi/dt = 2/(phi - xi) with piecewise-constant driving
has the closed-form step g(z) = c + sqrt((z - c)^2 + 4*tau).  The strip
evolution dpsi/dt = coth((psi - xi)/2) has no closed form per step and is
integrated with a fixed sub-stepped classical Runge-Kutta scheme.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import SlitSwallowed

# Nudge applied to values that land on the principal branch cut.
_CUT_NUDGE = 1e-12

# Runge-Kutta sub-steps per elementary strip map.
_STRIP_SUBSTEPS = 4

DEFAULT_DT = 1e-4


class Geometry(Enum):
    HALF_PLANE = "halfplane"
    STRIP = "strip"


@dataclass(frozen=True)
class ElementarySlitMap:
    """One constant-driving Loewner step."""

    center: float
    duration: float
    geometry: Geometry = Geometry.HALF_PLANE

    def __post_init__(self):
        if not np.isfinite(self.center):
            raise ValueError("center must be finite")
        if self.duration <= 0:
            raise ValueError("duration must be positive")


@dataclass(frozen=True)
class TracePoint:
    t: float
    z: complex


@dataclass(frozen=True)
class DrivingFunction:
    """Driving values on a uniform time grid; values[k] = xi(k*dt)."""

    dt: float
    values: np.ndarray
    kappa: float = 0.0
    geometry: Geometry = Geometry.HALF_PLANE

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("driving values must be finite")

    @property
    def lifetime(self) -> float:
        return (len(self.values) - 1) * self.dt

    def value_at(self, t: float) -> float:
        idx = int(round(t / self.dt))
        return float(self.values[idx])


def _branch_sqrt(u, re_w):
    """sqrt(u) with the branch that tracks sign(Re w) and maps the cut up.

    Values of u within _CUT_NUDGE of the negative real axis are nudged
    upward before evaluation, so both sides of a slit resolve consistently.
    """
    u = np.asarray(u, dtype=complex)
    re_w = np.asarray(re_w, dtype=float)
    neg = u.real < 0.0
    if neg.any():
        scale = _CUT_NUDGE * np.maximum(np.abs(u.real), 1.0)
        on_cut = neg & (np.abs(u.imag) < scale) & (re_w != 0.0)
        if on_cut.any():
            u = np.where(on_cut, u.real + 1j * scale * np.sign(re_w), u)
    s = np.sqrt(u)
    flip = (u.imag < 0.0) | ((u.imag == 0.0) & (u.real >= 0.0) & (re_w < 0.0))
    if flip.any():
        s = np.where(flip, -s, s)
    return s


def chordal_slit_forward(m: ElementarySlitMap, z):
    """Image of z under g(z) = c + sqrt((z - c)^2 + 4*tau).

    Real inputs outside the swallowed segment map to reals exactly.
    """
    scalar = np.isscalar(z)
    z = np.asarray(z, dtype=complex)
    w = z - m.center
    half_width = 2.0 * np.sqrt(m.duration)
    inside = (w.imag == 0.0) & (np.abs(w.real) < half_width) & (w.real != 0.0)
    if np.any(inside):
        raise SlitSwallowed(
            "real input strictly inside the swallowed segment of the slit map"
        )
    s = _branch_sqrt(w * w + 4.0 * m.duration, w.real)
    real_in = w.imag == 0.0
    s = np.where(real_in, s.real + 0.0j, s)
    out = m.center + s
    return complex(out) if scalar else out


def chordal_slit_inverse(m: ElementarySlitMap, w):
    """Inverse step: c + sqrt((w - c)^2 - 4*tau), branch into the closed H."""
    scalar = np.isscalar(w)
    w = np.asarray(w, dtype=complex)
    v = w - m.center
    s = _branch_sqrt(v * v - 4.0 * m.duration, v.real)
    out = m.center + s
    return complex(out) if scalar else out


def _coth2(z):
    """coth(z/2), with the exact tanh reduction on the upper strip edge."""
    return 1.0 / np.tanh(z / 2.0)


def _strip_rhs(z, center, sign):
    return sign * _coth2(z - center)


def strip_slit_forward(m: ElementarySlitMap, z):
    """One strip Loewner step with constant driving, RK4 sub-stepped.

    Points on R_pi stay on R_pi exactly: their real parts follow the
    (real) tanh flow and the imaginary part is pinned to pi.
    """
    return _strip_step(m.center, m.duration, z, sign=+1.0)


def strip_slit_inverse(m: ElementarySlitMap, w):
    """Backward integration of the same step (regular points only)."""
    return _strip_step(m.center, m.duration, w, sign=-1.0)


def _strip_step(center, duration, z, sign):
    scalar = np.isscalar(z)
    z = np.atleast_1d(np.asarray(z, dtype=complex)).copy()
    on_top = np.abs(z.imag - np.pi) < 1e-14
    h = duration / _STRIP_SUBSTEPS
    cur = z.copy()
    # pin R_pi points onto the real tanh flow
    x = cur.real[on_top]
    for _ in range(_STRIP_SUBSTEPS):
        k1 = _strip_rhs(cur, center, sign)
        k2 = _strip_rhs(cur + 0.5 * h * k1, center, sign)
        k3 = _strip_rhs(cur + 0.5 * h * k2, center, sign)
        k4 = _strip_rhs(cur + h * k3, center, sign)
        cur = cur + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if x.size:
            r1 = sign * np.tanh((x - center) / 2.0)
            r2 = sign * np.tanh((x + 0.5 * h * r1 - center) / 2.0)
            r3 = sign * np.tanh((x + 0.5 * h * r2 - center) / 2.0)
            r4 = sign * np.tanh((x + h * r3 - center) / 2.0)
            x = x + (h / 6.0) * (r1 + 2.0 * r2 + 2.0 * r3 + r4)
    if x.size:
        cur[on_top] = x + 1j * np.pi
    return complex(cur[0]) if scalar else cur


@dataclass(frozen=True)
class SlitMapChain:
    """Ordered composition of elementary slit maps.

    centers/durations are stored as arrays; step k is an
    ElementarySlitMap(centers[k], durations[k], geometry).
    """

    centers: np.ndarray
    durations: np.ndarray
    geometry: Geometry = Geometry.HALF_PLANE

    def __post_init__(self):
        object.__setattr__(self, "centers", np.asarray(self.centers, dtype=float))
        object.__setattr__(self, "durations", np.asarray(self.durations, dtype=float))
        if len(self.centers) != len(self.durations):
            raise ValueError("centers and durations must have equal length")

    def __len__(self):
        return len(self.centers)

    @property
    def total_capacity(self) -> float:
        if self.geometry is Geometry.HALF_PLANE:
            return float(2.0 * np.sum(self.durations))
        return float(np.sum(self.durations))

    @property
    def steps(self):
        return [
            ElementarySlitMap(c, d, self.geometry)
            for c, d in zip(self.centers, self.durations)
        ]

    def subchain(self, n_steps: int) -> "SlitMapChain":
        return SlitMapChain(
            self.centers[:n_steps], self.durations[:n_steps], self.geometry
        )

    def concat(self, other: "SlitMapChain") -> "SlitMapChain":
        if other.geometry is not self.geometry:
            raise ValueError("geometry mismatch")
        return SlitMapChain(
            np.concatenate([self.centers, other.centers]),
            np.concatenate([self.durations, other.durations]),
            self.geometry,
        )

    def forward(self, z, upto: int | None = None):
        """Apply steps 0..upto-1 in order (whole chain by default)."""
        scalar = np.isscalar(z)
        cur = np.atleast_1d(np.asarray(z, dtype=complex))
        n = len(self) if upto is None else upto
        if self.geometry is Geometry.HALF_PLANE:
            for k in range(n):
                c, tau = self.centers[k], self.durations[k]
                w = cur - c
                s = _branch_sqrt(w * w + 4.0 * tau, w.real)
                s = np.where(w.imag == 0.0, s.real + 0.0j, s)
                cur = c + s
        else:
            for k in range(n):
                cur = _strip_step(self.centers[k], self.durations[k], cur, +1.0)
        return complex(cur[0]) if scalar else cur

    def forward_with_derivative(self, z, upto: int | None = None):
        """Forward image and d(image)/dz by the exact chain rule."""
        scalar = np.isscalar(z)
        cur = np.atleast_1d(np.asarray(z, dtype=complex))
        der = np.ones_like(cur)
        n = len(self) if upto is None else upto
        if self.geometry is Geometry.HALF_PLANE:
            for k in range(n):
                c, tau = self.centers[k], self.durations[k]
                w = cur - c
                s = _branch_sqrt(w * w + 4.0 * tau, w.real)
                s = np.where(w.imag == 0.0, s.real + 0.0j, s)
                der = der * (w / s)
                cur = c + s
        else:
            h_sub = self.durations / _STRIP_SUBSTEPS
            for k in range(n):
                c = self.centers[k]
                h = h_sub[k]
                for _ in range(_STRIP_SUBSTEPS):
                    # joint RK4 for (psi, dpsi/dz)
                    def rhs(state_z, state_d):
                        sh = np.sinh((state_z - c) / 2.0)
                        return _coth2(state_z - c), -0.5 * state_d / (sh * sh)

                    k1z, k1d = rhs(cur, der)
                    k2z, k2d = rhs(cur + 0.5 * h * k1z, der + 0.5 * h * k1d)
                    k3z, k3d = rhs(cur + 0.5 * h * k2z, der + 0.5 * h * k2d)
                    k4z, k4d = rhs(cur + h * k3z, der + h * k3d)
                    cur = cur + (h / 6.0) * (k1z + 2 * k2z + 2 * k3z + k4z)
                    der = der + (h / 6.0) * (k1d + 2 * k2d + 2 * k3d + k4d)
        if scalar:
            return complex(cur[0]), complex(der[0])
        return cur, der

    def inverse(self, w, downto: int = 0, upto: int | None = None):
        """Apply inverse steps upto-1..downto, newest first."""
        scalar = np.isscalar(w)
        cur = np.atleast_1d(np.asarray(w, dtype=complex))
        n = len(self) if upto is None else upto
        if self.geometry is Geometry.HALF_PLANE:
            for k in range(n - 1, downto - 1, -1):
                c, tau = self.centers[k], self.durations[k]
                v = cur - c
                s = _branch_sqrt(v * v - 4.0 * tau, v.real)
                cur = c + s
        else:
            for k in range(n - 1, downto - 1, -1):
                cur = _strip_step(self.centers[k], self.durations[k], cur, -1.0)
        return complex(cur[0]) if scalar else cur


def evolve(df: DrivingFunction) -> SlitMapChain:
    """Discretize the Loewner flow of df into one slit map per grid step.

    Step k uses the driving value at the start of the step.
    """
    n = len(df.values) - 1
    centers = df.values[:n]
    durations = np.full(n, df.dt)
    return SlitMapChain(centers, durations, df.geometry)


def trace_tip(chain: SlitMapChain, df: DrivingFunction, t: float) -> TracePoint:
    """beta(t): inverse chain applied to xi(t), newest step first."""
    idx = int(round(t / df.dt))
    xi_t = df.values[idx]
    if idx == 0:
        return TracePoint(0.0, complex(xi_t))
    if chain.geometry is Geometry.HALF_PLANE:
        z = chain.inverse(complex(xi_t), upto=idx)
    else:
        # the newest step is singular at its own driver; use the small-time
        # chordal tip c + 2i*sqrt(tau) (coth2(u) = 2/u + O(u) near u = 0)
        c, tau = chain.centers[idx - 1], chain.durations[idx - 1]
        z0 = c + 2j * np.sqrt(tau)
        z = chain.inverse(z0, upto=idx - 1)
    return TracePoint(idx * df.dt, complex(z))


def trace_tips(chain: SlitMapChain, df: DrivingFunction, indices) -> np.ndarray:
    """Trace tips at several grid indices in one backward sweep.

    Walks the inverse chain once from the newest step down, pulling every
    requested tip through the steps below its own index.
    """
    idx = np.asarray(indices, dtype=int)
    pts = df.values[idx].astype(complex)
    if chain.geometry is not Geometry.HALF_PLANE:
        pos = idx > 0
        c = chain.centers[idx[pos] - 1]
        tau = chain.durations[idx[pos] - 1]
        pts[pos] = c + 2j * np.sqrt(tau)
        idx = np.where(idx > 0, idx - 1, idx)
    order = np.argsort(idx)
    pts = pts[order]
    sorted_idx = idx[order]
    chordal = chain.geometry is Geometry.HALF_PLANE
    kmax = int(sorted_idx.max()) - 1 if len(sorted_idx) else -1
    for k in range(kmax, -1, -1):
        # only tips with index above k still need inverse step k
        lo = int(np.searchsorted(sorted_idx, k, side="right"))
        live = slice(lo, len(pts))
        if chordal:
            c, tau = chain.centers[k], chain.durations[k]
            v = pts[live] - c
            pts[live] = c + _branch_sqrt(v * v - 4.0 * tau, v.real)
        else:
            pts[live] = _strip_step(chain.centers[k], chain.durations[k], pts[live], -1.0)
    out = np.empty_like(pts)
    out[order] = pts
    return out


def trace_points(chain: SlitMapChain, df: DrivingFunction, stride: int = 1):
    """Trace polyline [beta(0), beta(stride*dt), ...] up to the lifetime."""
    n = len(chain)
    pts = [TracePoint(0.0, complex(df.values[0]))]
    for idx in range(stride, n + 1, stride):
        pts.append(trace_tip(chain, df, idx * df.dt))
    return pts


def swallow_time(df: DrivingFunction, x: float, tol: float | None = None) -> float:
    """First grid time with |phi(t, x) - xi(t)| below the collision tolerance.

    Returns the lifetime of df if x is never swallowed.  The tolerance
    defaults to 10*sqrt(dt), the Bessel fluctuation scale over one step.
    """
    if x == df.values[0]:
        raise ValueError("x must differ from xi(0)")
    if tol is None:
        tol = 10.0 * np.sqrt(df.dt)
    chordal = df.geometry is Geometry.HALF_PLANE
    p = float(x)
    n = len(df.values) - 1
    for k in range(n):
        c = df.values[k]
        gap = p - c
        if abs(gap) < tol:
            return k * df.dt
        if chordal:
            # exact constant-driving update
            p = c + np.sign(gap) * np.sqrt(gap * gap + 4.0 * df.dt)
        else:
            p = float(_strip_step(c, df.dt, p + 0.0j, +1.0).real)
    if abs(p - df.values[n]) < tol:
        return n * df.dt
    return df.lifetime


def hull_capacity(chain: SlitMapChain) -> float:
    """Total capacity of the chain (hcap in the half-plane, scap in the strip)."""
    return chain.total_capacity


def chain_from_curve(points, return_drivers: bool = False, return_kept: bool = False):
    """Recover a chordal Loewner chain absorbing the given simple curve.

    points: complex array starting on R and entering H; point k+1 is
    absorbed by a vertical-slit map centered at the image of that point
    under the chain built so far.  Returns the chain (and optionally the
    per-step driving values).
    """
    pts = np.asarray(points, dtype=complex).copy()
    n = len(pts)
    centers = np.empty(n - 1)
    durations = np.empty(n - 1)
    for k in range(1, n):
        w = pts[k]
        a, b = w.real, max(w.imag, 0.0)
        centers[k - 1] = a
        tau = b * b / 4.0
        durations[k - 1] = tau
        if k < n - 1 and tau > 0.0:
            rest = pts[k + 1 :] - a
            s = _branch_sqrt(rest * rest + 4.0 * tau, rest.real)
            s = np.where(rest.imag == 0.0, s.real + 0.0j, s)
            pts[k + 1 :] = a + s
    keep = durations > 0.0
    chain = SlitMapChain(centers[keep], durations[keep], Geometry.HALF_PLANE)
    out = (chain,)
    if return_drivers:
        out = out + (centers[keep],)
    if return_kept:
        out = out + (keep,)
    return out[0] if len(out) == 1 else out
