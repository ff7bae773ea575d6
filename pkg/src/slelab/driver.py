"""Driving-function simulation for chordal and strip SLE(kappa; rho).

The driver follows  d(xi) = sqrt(kappa) dB + drift(xi, p) dt  coupled with
the force-point flow, integrated by Euler-Maruyama on the Loewner grid.
Steps where a force point comes within 10*sqrt(dt) of the driver are
re-integrated with 16 sub-steps to bound the drift-explosion error.

A vectorized batch core advances many independent samples at once; each
sample index owns its own counter-based random stream, so results do not
depend on batch size or execution order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DegenerateForceViolation
from .loewner import DEFAULT_DT, DrivingFunction, Geometry

_REFINE = 16


class Location(Enum):
    REAL = "real"
    PLUS_SIDE = "plus_side"
    MINUS_SIDE = "minus_side"
    PLUS_INFINITY = "plus_infinity"
    MINUS_INFINITY = "minus_infinity"
    STRIP_UPPER = "strip_upper"  # x + pi*i on the upper strip edge


@dataclass(frozen=True)
class ForceSpec:
    location: Location
    rho: float
    x: float = 0.0  # anchor, ignored for the infinities

    @property
    def degenerate(self) -> bool:
        return self.location in (Location.PLUS_SIDE, Location.MINUS_SIDE)


@dataclass(frozen=True)
class SleConfig:
    kappa: float
    geometry: Geometry = Geometry.HALF_PLANE
    start: float = 0.0
    forces: tuple = ()
    dt: float = DEFAULT_DT
    horizon: float = 1.0
    seed: int = 0
    strict: bool = True

    def __post_init__(self):
        object.__setattr__(self, "forces", tuple(self.forces))
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        n_plus = sum(f.location is Location.PLUS_SIDE for f in self.forces)
        n_minus = sum(f.location is Location.MINUS_SIDE for f in self.forces)
        if n_plus > 1 or n_minus > 1:
            raise ValueError("at most one force on each side of the start point")
        bound = self.kappa / 2.0 - 2.0 if self.strict else -2.0
        for f in self.forces:
            if f.degenerate:
                ok = f.rho >= bound if self.strict else f.rho > bound
                if not ok:
                    raise DegenerateForceViolation(
                        f"degenerate force rho={f.rho} below bound {bound}"
                    )
            elif f.location is Location.REAL and f.x == self.start:
                raise ValueError("generic force must not sit at the start point")
            if (
                f.location is Location.STRIP_UPPER
                and self.geometry is not Geometry.STRIP
            ):
                raise ValueError("upper-edge forces require strip geometry")


class Termination(Enum):
    HORIZON = "horizon"
    FORCE_COLLISION = "force_collision"


@dataclass(frozen=True)
class SlePath:
    driving: DrivingFunction
    force_tracks: np.ndarray  # (n_forces, n_steps+1); p-bar for upper-edge
    lifetime: float
    terminated_by: Termination
    colliding_force: int | None = None
    epsilon: float | None = None


@dataclass
class SleBatch:
    """State of a batch simulation; arrays indexed by sample."""

    cfg: SleConfig
    n_samples: int
    xi: np.ndarray  # final driver values
    forces: np.ndarray  # (n_forces, n_samples) final real positions
    lifetime_idx: np.ndarray  # grid index where each sample stopped
    tracked: np.ndarray  # (n_track, n_samples) final tracked-point values
    tracked_upper: np.ndarray  # (n_track_upper, n_samples)
    swallow_idx: np.ndarray  # (n_track, n_samples), -1 if never swallowed
    colliding_force: np.ndarray  # (n_samples,), -1 if none
    xi_rec: np.ndarray | None = None  # (n_samples, n_rec) strided records
    forces_rec: np.ndarray | None = None  # (n_forces, n_samples, n_rec)
    tracked_rec: np.ndarray | None = None
    rec_stride: int = 0

    @property
    def n_steps(self) -> int:
        return int(round(self.cfg.horizon / self.cfg.dt))

    @property
    def lifetime(self) -> np.ndarray:
        return self.lifetime_idx * self.cfg.dt


def _rng_for_sample(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    key = (np.uint64(seed) << np.uint64(1)) ^ np.uint64(stream)
    return np.random.Generator(np.random.Philox(key=[key, np.uint64(index)]))


def _coth2(x):
    return 1.0 / np.tanh(x / 2.0)


def _tanh2(x):
    return np.tanh(x / 2.0)


def _drift(cfg, xi, p):
    """Drift of the driver given force positions p (n_forces, n)."""
    out = np.zeros_like(xi)
    chordal = cfg.geometry is Geometry.HALF_PLANE
    for k, f in enumerate(cfg.forces):
        if f.location is Location.PLUS_INFINITY:
            if not chordal:
                out -= f.rho / 2.0
        elif f.location is Location.MINUS_INFINITY:
            if not chordal:
                out += f.rho / 2.0
        elif f.location is Location.STRIP_UPPER:
            out -= (f.rho / 2.0) * _tanh2(p[k] - xi)
        else:
            if chordal:
                out += f.rho / (xi - p[k])
            else:
                out += (f.rho / 2.0) * _coth2(xi - p[k])
    return out


def _force_velocity(cfg, xi, p):
    """dp/dt for every force (rows for infinities stay zero)."""
    out = np.zeros_like(p)
    chordal = cfg.geometry is Geometry.HALF_PLANE
    for k, f in enumerate(cfg.forces):
        if f.location in (Location.PLUS_INFINITY, Location.MINUS_INFINITY):
            continue
        if f.location is Location.STRIP_UPPER:
            out[k] = _tanh2(p[k] - xi)
        elif chordal:
            out[k] = 2.0 / (p[k] - xi)
        else:
            out[k] = _coth2(p[k] - xi)
    return out


def _initial_forces(cfg, epsilon):
    p0 = np.zeros(len(cfg.forces))
    for k, f in enumerate(cfg.forces):
        if f.location is Location.PLUS_SIDE:
            p0[k] = cfg.start + epsilon
        elif f.location is Location.MINUS_SIDE:
            p0[k] = cfg.start - epsilon
        elif f.location is Location.PLUS_INFINITY:
            p0[k] = np.inf
        elif f.location is Location.MINUS_INFINITY:
            p0[k] = -np.inf
        else:
            p0[k] = f.x
    return p0


def simulate_batch(
    cfg: SleConfig,
    n_samples: int,
    epsilon: float = 0.0,
    track_points=(),
    track_upper=(),
    record_stride: int = 0,
    first_sample: int = 0,
) -> SleBatch:
    """Advance n_samples independent drivers over the full horizon.

    track_points: real points carried by the Loewner flow of each sample;
    a tracked point freezes once it collides with the driver and its
    swallow index is recorded.  track_upper: real parts of points on the
    upper strip edge, carried by the (regular) tanh flow.
    """
    has_degenerate = any(f.degenerate for f in cfg.forces)
    if has_degenerate and epsilon <= 0.0:
        raise ValueError("degenerate forces require a positive epsilon offset")
    dt = cfg.dt
    n_steps = int(round(cfg.horizon / dt))
    sq = np.sqrt(cfg.kappa)
    tol = 10.0 * np.sqrt(dt)
    tol_fine = 10.0 * np.sqrt(dt / _REFINE)
    chordal = cfg.geometry is Geometry.HALF_PLANE

    n_forces = len(cfg.forces)
    # forces on the boundary line are singular (drive the dt refinement);
    # only generic ones terminate the path on collision -- degenerate side
    # forces live below the tolerance by construction and are reflected
    # instead to keep their side of the driver.
    singular = np.array(
        [
            f.location in (Location.REAL, Location.PLUS_SIDE, Location.MINUS_SIDE)
            for f in cfg.forces
        ],
        dtype=bool,
    )
    terminating = np.array(
        [f.location is Location.REAL for f in cfg.forces], dtype=bool
    )
    degenerate = np.array([f.degenerate for f in cfg.forces], dtype=bool)

    xi = np.full(n_samples, float(cfg.start))
    p = np.tile(_initial_forces(cfg, epsilon)[:, None], (1, n_samples))
    trk = np.tile(np.asarray(track_points, dtype=float)[:, None], (1, n_samples))
    trk_up = np.tile(np.asarray(track_upper, dtype=float)[:, None], (1, n_samples))
    swallow = -np.ones(trk.shape, dtype=np.int64)
    alive = np.ones(n_samples, dtype=bool)
    lifetime_idx = np.full(n_samples, n_steps, dtype=np.int64)
    collider = np.full(n_samples, -1, dtype=np.int64)

    # one counter-based stream per sample; refinement draws use stream 1
    gens = [_rng_for_sample(cfg.seed, first_sample + i) for i in range(n_samples)]
    block = min(n_steps, 4096)
    dW = np.empty((n_samples, block))
    block_start = -1
    refine_rngs: dict[int, np.random.Generator] = {}

    n_rec = n_steps // record_stride + 1 if record_stride else 0
    xi_rec = np.empty((n_samples, n_rec)) if record_stride else None
    forces_rec = np.empty((n_forces, n_samples, n_rec)) if record_stride else None
    tracked_rec = (
        np.empty((trk.shape[0], n_samples, n_rec)) if record_stride else None
    )

    def record(slot):
        xi_rec[:, slot] = xi
        forces_rec[:, :, slot] = p
        tracked_rec[:, :, slot] = trk

    if record_stride:
        record(0)

    for step in range(n_steps):
        if not alive.any():
            break
        if step // block != block_start:
            block_start = step // block
            width = min(block, n_steps - block_start * block)
            for i in range(n_samples):
                dW[i, :width] = gens[i].standard_normal(width)
            dW[:, :width] *= sq * np.sqrt(dt)
        col = step % block
        act = np.flatnonzero(alive)
        xi_a = xi[act]
        p_a = p[:, act]

        gaps = (
            np.abs(p_a[singular] - xi_a)
            if singular.any()
            else np.empty((0, len(act)))
        )
        near = gaps.min(axis=0) < tol if gaps.size else np.zeros(len(act), bool)

        # plain Euler-Maruyama step for well-separated samples
        plain = act[~near]
        if plain.size:
            xi_p = xi[plain]
            p_p = p[:, plain]
            xi[plain] = xi_p + _drift(cfg, xi_p, p_p) * dt + dW[plain, col]
            p[:, plain] = p_p + _force_velocity(cfg, xi_p, p_p) * dt
            if terminating.any():
                # a driver jumping past a generic force counts as a collision
                g_old = p_p[terminating] - xi_p
                g_new = p[terminating][:, plain] - xi[plain]
                bad = (np.sign(g_new) != np.sign(g_old)) | (
                    np.abs(g_new) < tol_fine
                )
                crossed = bad.any(axis=0)
                if crossed.any():
                    died = plain[crossed]
                    alive[died] = False
                    lifetime_idx[died] = step + 1
                    collider[died] = np.flatnonzero(terminating)[
                        bad.argmax(axis=0)[crossed]
                    ]
            if degenerate.any():
                rows = np.flatnonzero(degenerate)
                g_old = p_p[rows] - xi_p
                g_new = p[rows][:, plain] - xi[plain]
                p[np.ix_(rows, plain)] = xi[plain] + np.sign(g_old) * np.abs(g_new)

        # refined sub-steps for near-collision samples
        close = act[near]
        if close.size:
            h = dt / _REFINE
            sub = np.empty((close.size, _REFINE))
            for j, i in enumerate(close):
                key = int(i)
                rng = refine_rngs.get(key)
                if rng is None:
                    rng = _rng_for_sample(cfg.seed, first_sample + key, stream=1)
                    refine_rngs[key] = rng
                sub[j] = rng.standard_normal(_REFINE)
            sub *= sq * np.sqrt(h)
            xi_c = xi[close].copy()
            p_c = p[:, close].copy()
            dead = np.zeros(close.size, dtype=bool)
            hit = np.full(close.size, -1, dtype=np.int64)
            for s in range(_REFINE):
                live = ~dead
                if not live.any():
                    break
                xi_l = xi_c[live]
                p_l = p_c[:, live]
                xi_c[live] = xi_l + _drift(cfg, xi_l, p_l) * h + sub[live, s]
                p_c[:, live] = p_l + _force_velocity(cfg, xi_l, p_l) * h
                if terminating.any():
                    g_old = p_l[terminating] - xi_l
                    g_new = p_c[terminating][:, live] - xi_c[live]
                    bad = (np.abs(g_new) < tol_fine) | (
                        np.sign(g_new) != np.sign(g_old)
                    )
                    coll = bad.any(axis=0)
                    if coll.any():
                        which = np.flatnonzero(terminating)[bad.argmax(axis=0)]
                        idx = np.flatnonzero(live)
                        dead[idx[coll]] = True
                        hit[idx[coll]] = which[coll]
                if degenerate.any():
                    rows = np.flatnonzero(degenerate)
                    g_old = p_l[rows]
                    g_old = g_old - xi_l
                    g_new = p_c[rows][:, live] - xi_c[live]
                    p_c[np.ix_(rows, np.flatnonzero(live))] = xi_c[live] + np.sign(
                        g_old
                    ) * np.abs(g_new)
            xi[close] = xi_c
            p[:, close] = p_c
            died = close[dead]
            if died.size:
                alive[died] = False
                lifetime_idx[died] = step + 1
                collider[died] = hit[dead]

        # carry tracked points along the flow of still-active samples
        if trk.size:
            act2 = np.flatnonzero(alive)
            if act2.size:
                t_a = trk[:, act2]
                gap = t_a - xi[act2]
                open_pt = swallow[:, act2] < 0
                vel = 2.0 / gap if chordal else _coth2(gap)
                t_new = np.where(open_pt, t_a + vel * dt, t_a)
                new_gap = t_new - xi[act2]
                hit_now = open_pt & (
                    (np.abs(new_gap) < tol) | (np.sign(new_gap) != np.sign(gap))
                )
                trk[:, act2] = np.where(hit_now, t_a, t_new)
                rows = swallow[:, act2]
                rows[hit_now] = step + 1
                swallow[:, act2] = rows
        if trk_up.size:
            act2 = np.flatnonzero(alive)
            if act2.size:
                trk_up[:, act2] += _tanh2(trk_up[:, act2] - xi[act2]) * dt

        if record_stride and (step + 1) % record_stride == 0:
            record((step + 1) // record_stride)

    return SleBatch(
        cfg=cfg,
        n_samples=n_samples,
        xi=xi,
        forces=p,
        lifetime_idx=lifetime_idx,
        tracked=trk,
        tracked_upper=trk_up,
        swallow_idx=swallow,
        colliding_force=collider,
        xi_rec=xi_rec,
        forces_rec=forces_rec,
        tracked_rec=tracked_rec,
        rec_stride=record_stride,
    )


def _single_path(cfg: SleConfig, epsilon: float = 0.0) -> SlePath:
    batch = simulate_batch(cfg, 1, epsilon=epsilon, record_stride=1)
    n_keep = int(batch.lifetime_idx[0])
    values = batch.xi_rec[0, : n_keep + 1]
    tracks = batch.forces_rec[:, 0, : n_keep + 1]
    k = int(batch.colliding_force[0])
    terminated = Termination.HORIZON if k < 0 else Termination.FORCE_COLLISION
    return SlePath(
        driving=DrivingFunction(cfg.dt, values, cfg.kappa, cfg.geometry),
        force_tracks=tracks,
        lifetime=n_keep * cfg.dt,
        terminated_by=terminated,
        colliding_force=None if k < 0 else k,
        epsilon=epsilon if epsilon > 0 else None,
    )


def simulate_chordal(cfg: SleConfig) -> SlePath:
    if cfg.geometry is not Geometry.HALF_PLANE:
        raise ValueError("simulate_chordal requires half-plane geometry")
    if any(f.degenerate for f in cfg.forces):
        raise ValueError("degenerate starts go through simulate_degenerate_start")
    return _single_path(cfg)


def simulate_strip(cfg: SleConfig) -> SlePath:
    if cfg.geometry is not Geometry.STRIP:
        raise ValueError("simulate_strip requires strip geometry")
    if any(f.degenerate for f in cfg.forces):
        raise ValueError("degenerate starts go through simulate_degenerate_start")
    return _single_path(cfg)


def simulate_degenerate_start(cfg: SleConfig, epsilon: float) -> SlePath:
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return _single_path(cfg, epsilon=epsilon)
