"""Monte-Carlo experiments over the simulation stack.

Each experiment pairs a simulated statistic with its closed-form or
cross-pipeline reference: first-exit frequencies of the upper-edge
boundary flow against the scale-function ratio, terminal points of strip
traces against the explicit endpoint density, terminal-event frequencies
against the case table, hull-boundary landing points of a kappa >= 8
chordal hull against the dual 16/kappa trace, and crossing statistics of
the kappa = 4 trace against its reversal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .driver import (
    ForceSpec,
    Location,
    SleConfig,
    _rng_for_sample,
    _tanh2,
    simulate_batch,
)
from .loewner import DrivingFunction, Geometry, evolve, trace_tips
from .scalefn import CaseLabel, Region, build_scale_function, classify_case
from .stats import ks_one_sample, ks_two_sample, mc_mean_se

# ---------------------------------------------------------------------------
# Boundary flow first-exit (hitting probability)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HittingReport:
    kappa: float
    sigma: float
    x0: float
    predicted: float
    observed: float
    standard_error: float
    n_paths: int

    @property
    def deviation_se(self) -> float:
        return abs(self.observed - self.predicted) / self.standard_error


def boundary_flow_exit(
    kappa: float,
    sigma: float,
    x0: float,
    n_paths: int,
    seed: int,
    *,
    barrier: float = 30.0,
    dt: float = 2e-3,
    max_time: float = 2000.0,
) -> tuple[float, float]:
    """First-exit frequency of dX = tanh(X/2)dt - sigma dt - sqrt(kappa)dB.

    Returns (fraction of paths exiting at +barrier, standard error).
    Paths still inside at max_time are classified by their sign.
    """
    rng = _rng_for_sample(seed, 0)
    x = np.full(n_paths, float(x0))
    alive = np.ones(n_paths, dtype=bool)
    hit_plus = np.zeros(n_paths, dtype=bool)
    sq = np.sqrt(kappa * dt)
    n_steps = int(round(max_time / dt))
    for _ in range(n_steps):
        idx = np.flatnonzero(alive)
        if not idx.size:
            break
        xi = x[idx]
        xi = xi + (_tanh2(xi) - sigma) * dt + sq * rng.standard_normal(idx.size)
        x[idx] = xi
        done = np.abs(xi) >= barrier
        if done.any():
            hits = idx[done]
            hit_plus[hits] = xi[done] > 0
            alive[hits] = False
    if alive.any():
        hit_plus[alive] = x[alive] > 0
    return mc_mean_se(hit_plus.astype(float))


def hitting_experiment(
    kappa: float,
    sigma: float,
    x0: float,
    n_paths: int,
    seed: int,
    *,
    barrier: float = 30.0,
    dt: float = 2e-3,
) -> HittingReport:
    sf = build_scale_function(kappa, sigma)
    predicted = sf(x0) / sf.A
    observed, se = boundary_flow_exit(
        kappa, sigma, x0, n_paths, seed, barrier=barrier, dt=dt
    )
    return HittingReport(kappa, sigma, x0, predicted, observed, se, n_paths)


# ---------------------------------------------------------------------------
# Terminal point of a strip trace via the upper-edge flow
# ---------------------------------------------------------------------------


def _edge_flow_sign(xi_rec: np.ndarray, dt_rec: float, x0: np.ndarray) -> np.ndarray:
    """Sign of the upper-edge flow relative to the driver at the horizon.

    xi_rec: (n_samples, n_rec) recorded drivers; x0: per-sample starting
    point on the upper edge.  The flow obeys dY = tanh((Y - xi)/2) dt.
    """
    y = np.asarray(x0, dtype=float).copy()
    for k in range(xi_rec.shape[1] - 1):
        y = y + _tanh2(y - xi_rec[:, k]) * dt_rec
    return np.sign(y - xi_rec[:, -1])


def edge_crossing_points(
    xi_rec: np.ndarray,
    dt_rec: float,
    *,
    window: float = 60.0,
    n_bisect: int = 26,
) -> np.ndarray:
    """Terminal point estimate per sample from the recorded driver path.

    Bisects the initial position of the upper-edge flow: starting points
    left of the terminal point drift to -infinity relative to the driver,
    points right of it to +infinity.  Samples whose crossing lies outside
    [-window, window] are returned as -inf/+inf.
    """
    n = xi_rec.shape[0]
    lo = np.full(n, -window)
    hi = np.full(n, window)
    s_lo = _edge_flow_sign(xi_rec, dt_rec, lo)
    s_hi = _edge_flow_sign(xi_rec, dt_rec, hi)
    minus = s_lo > 0  # even the left window edge escapes right
    plus = s_hi < 0  # even the right window edge escapes left
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        s = _edge_flow_sign(xi_rec, dt_rec, mid)
        left = s < 0
        lo = np.where(left, mid, lo)
        hi = np.where(left, hi, mid)
    out = 0.5 * (lo + hi)
    out[minus] = -np.inf
    out[plus] = np.inf
    return out


def sample_terminal_points(
    kappa: float,
    sigma: float,
    n_samples: int,
    seed: int,
    *,
    horizon: float = 30.0,
    dt: float = 1e-3,
    record_stride: int = 10,
    window: float = 60.0,
) -> np.ndarray:
    """Terminal points of strip SLE(kappa) with driver drift sigma."""
    forces = (
        ForceSpec(Location.PLUS_INFINITY, -sigma),
        ForceSpec(Location.MINUS_INFINITY, sigma),
    )
    cfg = SleConfig(
        kappa,
        geometry=Geometry.STRIP,
        forces=forces,
        dt=dt,
        horizon=horizon,
        seed=seed,
    )
    batch = simulate_batch(cfg, n_samples, record_stride=record_stride)
    return edge_crossing_points(batch.xi_rec, dt * record_stride, window=window)


def density_j_experiment(
    kappa: float,
    sigma: float,
    n_samples: int,
    seed: int,
    *,
    reference_sigma: float | None = None,
    horizon: float = 30.0,
    dt: float = 1e-3,
):
    """KS test of simulated terminal points against the endpoint density.

    reference_sigma lets a deliberately wrong reference be tested as a
    negative control.  Returns (KsResult, samples, reference ScaleFunction).
    """
    samples = sample_terminal_points(
        kappa, sigma, n_samples, seed, horizon=horizon, dt=dt
    )
    samples = samples[np.isfinite(samples)]
    sf = build_scale_function(
        kappa, sigma if reference_sigma is None else reference_sigma
    )
    return ks_one_sample(samples, sf.cdf), samples, sf


# ---------------------------------------------------------------------------
# Terminal-event classification for the three-force strip process
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CaseReport:
    label: CaseLabel
    frequencies: dict
    n_samples: int

    @property
    def predicted_frequency(self) -> float:
        return sum(self.frequencies.get(r, 0.0) for r in self.label.predicted)

    @property
    def min_predicted_frequency(self) -> float:
        return min(self.frequencies.get(r, 0.0) for r in self.label.predicted)


#: representative (rho_plus, rho_minus) for each case label at kappa = 4,
#: chosen well inside their intervals so the finite-horizon classifier
#: resolves the terminal event cleanly
CASE_PARAMETERS = {
    (1, 1): (3.0, 3.0),
    (1, 2): (3.0, -1.0),
    (2, 1): (-1.0, 3.0),
    (1, 3): (3.0, -4.0),
    (3, 1): (-4.0, 3.0),
    (2, 2): (-1.0, -1.0),
    (2, 3): (-1.0, -3.0),
    (3, 2): (-3.0, -1.0),
    (3, 3): (-3.0, -3.0),
}


def case_experiment(
    kappa: float,
    rho_plus: float,
    rho_minus: float,
    n_samples: int,
    seed: int,
    *,
    horizon: float = 60.0,
    dt: float = 1e-3,
    record_stride: int = 10,
    window: float = 60.0,
    at_p_tol: float = 0.05,
    inf_threshold: float = 20.0,
) -> CaseReport:
    """Empirical terminal-event frequencies for the three-force process.

    The process carries rho_plus at +infinity, rho_minus at -infinity and
    kappa - 6 - rho_plus - rho_minus at the upper-edge point pi*i.  The
    terminal point estimate is bucketed relative to the upper force point
    at 0: within at_p_tol counts as landing at p, beyond +-inf_threshold
    as escaping to the corresponding infinity.  at_p_tol must dominate the
    finite-horizon estimator noise at p (about 0.01 at horizon 60), and
    inf_threshold separates the linearly escaping crossing of a transient
    trace from the exponential tail of a finite terminal point.
    """
    rho_p = kappa - 6.0 - rho_plus - rho_minus
    forces = (
        ForceSpec(Location.PLUS_INFINITY, rho_plus),
        ForceSpec(Location.MINUS_INFINITY, rho_minus),
        ForceSpec(Location.STRIP_UPPER, rho_p, 0.0),
    )
    cfg = SleConfig(
        kappa,
        geometry=Geometry.STRIP,
        forces=forces,
        dt=dt,
        horizon=horizon,
        seed=seed,
    )
    batch = simulate_batch(cfg, n_samples, record_stride=record_stride)
    points = edge_crossing_points(
        batch.xi_rec, dt * record_stride, window=window
    )
    freq = {}

    def add(region, mask):
        freq[region] = float(np.mean(mask))

    add(Region.MINUS_INFINITY, points <= -inf_threshold)
    add(Region.PLUS_INFINITY, points >= inf_threshold)
    finite = np.abs(points) < inf_threshold
    add(Region.AT_P, finite & (np.abs(points) <= at_p_tol))
    add(Region.LEFT_OF_P, finite & (points < -at_p_tol))
    add(Region.RIGHT_OF_P, finite & (points > at_p_tol))
    return CaseReport(
        label=classify_case(kappa, rho_plus, rho_minus),
        frequencies=freq,
        n_samples=n_samples,
    )


# ---------------------------------------------------------------------------
# Swallowing flow on the real line (shared by the duality pipelines)
# ---------------------------------------------------------------------------


def swallow_steps(
    xi: np.ndarray,
    dt: float,
    points: np.ndarray,
    stop_steps: np.ndarray | None = None,
    block: int = 512,
) -> np.ndarray:
    """Step index at which each real point is swallowed, per sample.

    xi: (n_samples, n_steps+1) driver paths; points: shared candidate
    positions.  The flow uses the exact per-step update of the elementary
    slit map; a point is swallowed when its gap to the driver falls below
    10*sqrt(dt).  Points not swallowed by min(stop_steps, n_steps) get the
    final step index + 1.  Rows are dropped from the sweep once their stop
    step passes or every point is swallowed, so per-sample stopping makes
    the scan cheap even on heavy-tailed stopping times.
    """
    n_samples, n_rec = xi.shape
    n_steps = n_rec - 1
    stop = (
        np.full(n_samples, n_steps, dtype=np.int64)
        if stop_steps is None
        else np.minimum(np.asarray(stop_steps, dtype=np.int64), n_steps)
    )
    tol = 10.0 * np.sqrt(dt)
    n_pts = len(points)
    step_idx = np.full((n_samples, n_pts), n_steps + 1, dtype=np.int64)
    rows = np.flatnonzero(stop > 0)
    p = np.tile(np.asarray(points, dtype=float)[None, :], (len(rows), 1))
    alive = np.ones(p.shape, dtype=bool)
    loc = np.full(p.shape, n_steps + 1, dtype=np.int64)
    k = 0
    while rows.size and k < n_steps:
        hi = min(k + block, n_steps)
        xi_r = xi[rows]
        stop_r = stop[rows, None]
        for kk in range(k, hi):
            act = alive & (stop_r > kk)
            c = xi_r[:, kk][:, None]
            gap = p - c
            p = np.where(
                act, c + np.sign(gap) * np.sqrt(gap * gap + 4.0 * dt), p
            )
            dead = act & (np.abs(p - xi_r[:, kk + 1][:, None]) < tol)
            loc[dead] = kk + 1
            alive &= ~dead
        k = hi
        done = (stop[rows] <= k) | ~alive.any(axis=1)
        if done.any():
            step_idx[rows[done]] = loc[done]
            keep = ~done
            rows, p, alive, loc = rows[keep], p[keep], alive[keep], loc[keep]
    if rows.size:
        step_idx[rows] = loc
    return step_idx


@dataclass(frozen=True)
class LandingSamples:
    """Opposite-side landing points with censoring bookkeeping.

    y is NaN for unfinished samples.  Because the swallowed base interval
    only grows, an unfinished sample whose flow has already swallowed the
    cutoff point is certain to land beyond the cutoff (censored_beyond),
    so conditioning on |y| <= cutoff stays unbiased as long as the
    ambiguous count (unfinished, cutoff not yet reached) is negligible.
    """

    y: np.ndarray
    finished: np.ndarray
    censored_beyond: np.ndarray
    inner_hit: np.ndarray  # landing closer to 0 than the innermost candidate
    cutoff: float

    def conditional(self) -> np.ndarray:
        keep = self.finished & (np.abs(self.y) <= self.cutoff) & ~self.inner_hit
        return self.y[keep]

    @property
    def n_ambiguous(self) -> int:
        return int(np.sum(~self.finished & ~self.censored_beyond))


def _landings(grid, steps, stop_steps, n_steps, censored_beyond, cutoff):
    """Locate landing points from per-candidate swallowing steps.

    The landing sits between the last candidate swallowed by the stop step
    and the first one not; when the outer neighbour's swallowing step is
    censored by the stop, the midpoint stands in for interpolation.
    """
    n = len(stop_steps)
    y = np.full(n, np.nan)
    finished = np.asarray(stop_steps) <= n_steps
    inner = np.zeros(n, dtype=bool)
    for i in range(n):
        if not finished[i]:
            continue
        s = steps[i]
        # swallowing step increases away from 0 along the candidate ray
        j = int(np.searchsorted(s, stop_steps[i], side="right"))
        if j == 0:
            y[i] = grid[0]
            inner[i] = True
        elif j >= len(grid):
            y[i] = grid[-1]
        else:
            s0, s1 = s[j - 1], s[j]
            if s1 > n_steps:
                w = 0.5
            else:
                w = 0.0 if s0 == s1 else (stop_steps[i] - s0) / (s1 - s0)
            y[i] = grid[j - 1] + w * (grid[j] - grid[j - 1])
    return LandingSamples(y, finished, censored_beyond, inner, cutoff)


def hull_landing_points(
    x: float,
    n_samples: int,
    seed: int,
    *,
    kappa: float = 8.0,
    dt: float = 2e-4,
    horizon: float = 40.0,
    cutoff: float = 2.0,
    reach: float = 10.0,
    n_candidates: int = 401,
) -> LandingSamples:
    """Opposite-side landing point of the hull boundary at the swallowing
    time of x, for a chordal SLE(kappa >= 8) hull grown from 0.

    The hull's base interval endpoint on the far side of 0 from x is
    located by evolving a shared grid of candidate points under the
    Loewner flow and bracketing the candidate whose swallowing time
    matches that of x.  The swallowing time of x is heavy-tailed, so
    samples exceeding the horizon are reported unfinished; the cutoff
    point's swallowing status classifies them (see LandingSamples).
    """
    cfg = SleConfig(kappa, dt=dt, horizon=horizon, seed=seed)
    batch = simulate_batch(cfg, n_samples, record_stride=1)
    n_steps = batch.xi_rec.shape[1] - 1
    sgn = 1.0 if x > 0 else -1.0
    probes = swallow_steps(batch.xi_rec, dt, np.array([x, -sgn * cutoff]))
    t_x = probes[:, 0]
    censored = (t_x > n_steps) & (probes[:, 1] <= n_steps)
    grid = -sgn * np.geomspace(1e-3, reach, n_candidates)
    steps = swallow_steps(
        batch.xi_rec, dt, grid, stop_steps=np.where(t_x > n_steps, 0, t_x)
    )
    return _landings(grid, steps, t_x, n_steps, censored, cutoff)


def dual_trace_landing_points(
    x: float,
    n_samples: int,
    seed: int,
    *,
    kappa: float = 8.0,
    dt: float = 2e-4,
    horizon: float = 40.0,
    cutoff: float = 2.0,
    epsilon: float = 1e-4,
    reach: float = 10.0,
    n_candidates: int = 401,
    rho_at_zero: float | None = None,
    rho_sides: tuple | None = None,
) -> LandingSamples:
    """Landing point of the dual trace from x, by the same flow estimator.

    Simulates the chordal SLE(16/kappa; -8/kappa, -8/kappa, 8/kappa - 2)
    driver started from (x; 0, x^a, x^b) with a = sign(x), b = -sign(x);
    the trace is a crosscut from x back to the real line on the far side
    of 0, and its landing point is where the flow swallows points at the
    trace's lifetime (the collision with the force at 0).  rho_at_zero
    overrides the force at 0 and rho_sides the pair of strengths at
    (x^a, x^b) (negative controls); rho_at_zero must stay below
    8/kappa - 2 or the gap never closes.  A simple trace swallows no real
    point before it closes, so unfinished samples are always ambiguous
    here; they are slow closers whose landing lies far out, which the
    cutoff conditioning of the comparison is chosen to exclude.
    """
    kp = 16.0 / kappa
    sgn = 1.0 if x > 0 else -1.0
    side_a = Location.PLUS_SIDE if sgn > 0 else Location.MINUS_SIDE
    side_b = Location.MINUS_SIDE if sgn > 0 else Location.PLUS_SIDE
    rho0 = -kp / 2.0 if rho_at_zero is None else rho_at_zero
    rho_a, rho_b = (-kp / 2.0, kp / 2.0 - 2.0) if rho_sides is None else rho_sides
    forces = (
        ForceSpec(Location.REAL, rho0, 0.0),
        ForceSpec(side_a, rho_a),
        ForceSpec(side_b, rho_b),
    )
    cfg = SleConfig(
        kp, start=x, forces=forces, dt=dt, horizon=horizon, seed=seed,
        strict=False,
    )
    batch = simulate_batch(cfg, n_samples, epsilon=epsilon, record_stride=1)
    n_steps = batch.xi_rec.shape[1] - 1
    closed = batch.lifetime_idx < n_steps
    stop = np.where(closed, batch.lifetime_idx, n_steps + 1)
    probe = swallow_steps(
        batch.xi_rec,
        dt,
        np.array([-sgn * cutoff]),
        stop_steps=np.where(closed, 0, n_steps),
    )
    censored = ~closed & (probe[:, 0] <= n_steps)
    grid = -sgn * np.geomspace(1e-3, reach, n_candidates)
    steps = swallow_steps(
        batch.xi_rec, dt, grid, stop_steps=np.where(closed, stop, 0)
    )
    return _landings(grid, steps, stop, n_steps, censored, cutoff)


@dataclass(frozen=True)
class DualityReport:
    ks: object
    hull_samples: np.ndarray
    trace_samples: np.ndarray
    opposite_sign_fraction: float
    n_ambiguous: int
    cutoff: float


def duality_endpoint_experiment(
    x: float,
    n_samples: int,
    seed: int,
    *,
    kappa: float = 8.0,
    dt_hull: float = 2e-4,
    dt_trace: float = 2e-4,
    cutoff: float = 2.0,
    control: bool = False,
) -> DualityReport:
    """Two-sample comparison of the hull-boundary and dual-trace landings.

    The landing distance from 0 is heavy-tailed, so the laws are compared
    conditionally on |y| <= cutoff; the monotone hull reach certifies that
    unfinished samples land beyond the cutoff except for the reported
    ambiguous count.  With control=True the dual trace runs with the
    near-side force flipped in sign, which must be detectably different.
    """
    kp = 16.0 / kappa
    a = hull_landing_points(
        x, n_samples, seed, kappa=kappa, dt=dt_hull, cutoff=cutoff
    )
    b = dual_trace_landing_points(
        x,
        n_samples,
        seed + 1,
        kappa=kappa,
        dt=dt_trace,
        cutoff=cutoff,
        rho_sides=(kp / 2.0, kp / 2.0 - 2.0) if control else None,
    )
    ya = a.conditional()
    yb = b.conditional()
    fin = np.concatenate([a.y[a.finished], b.y[b.finished]])
    inner = np.concatenate([a.inner_hit[a.finished], b.inner_hit[b.finished]])
    opposite = float(np.mean((np.sign(fin) == -np.sign(x)) & ~inner))
    return DualityReport(
        ks=ks_two_sample(ya, yb),
        hull_samples=ya,
        trace_samples=yb,
        opposite_sign_fraction=opposite,
        n_ambiguous=a.n_ambiguous + b.n_ambiguous,
        cutoff=cutoff,
    )


# ---------------------------------------------------------------------------
# Crossing statistic for the kappa = 4 reversibility check
# ---------------------------------------------------------------------------


def _circle_exit(
    df: DrivingFunction,
    *,
    radius: float,
    coarse: int,
    fine: int,
    guard: float,
    last: bool,
) -> float:
    """Real part of the first (or last) outward crossing of |z| = radius."""
    chain = evolve(df)
    n = len(df.values) - 1
    idx = np.arange(coarse, n + 1, coarse)
    tips = trace_tips(chain, df, idx)
    tips = np.concatenate([[df.values[0] + 0j], tips])
    idx = np.concatenate([[0], idx])
    r = np.abs(tips)
    near = (np.minimum(r[:-1], r[1:]) < guard) | (
        (r[:-1] < radius) != (r[1:] < radius)
    )
    spans = np.flatnonzero(near)
    if not spans.size:
        return np.nan
    fine_idx = np.unique(
        np.concatenate(
            [np.arange(idx[s], idx[s + 1] + 1, fine) for s in spans]
        )
    )
    fine_idx = fine_idx[fine_idx > 0]
    ft = trace_tips(chain, df, fine_idx)
    ft = np.concatenate([[df.values[0] + 0j], ft])
    fr = np.abs(ft)
    up = np.flatnonzero((fr[:-1] < radius) & (fr[1:] >= radius))
    if not up.size:
        return np.nan
    k = up[-1] if last else up[0]
    a, b = ft[k], ft[k + 1]
    w = (radius - fr[k]) / (fr[k + 1] - fr[k])
    return float((a + w * (b - a)).real)


def crossing_statistics(
    rho_plus: float,
    rho_minus: float,
    n_samples: int,
    seed: int,
    *,
    last: bool,
    kappa: float = 4.0,
    radius: float = 1.0,
    dt: float = 1e-3,
    horizon: float = 30.0,
    epsilon: float = 0.01,
    coarse: int = 100,
    fine: int = 5,
    guard: float = 1.6,
) -> np.ndarray:
    """Real parts of unit-circle exit points of SLE(4; rho+, rho-) traces.

    The trace starts at (0; 0^+, 0^-).  With last=False the statistic is
    the first outward crossing; with last=True the final one, which is the
    first crossing of the reversed trace since inversion z -> 1/conj(z)
    fixes the circle pointwise.

    epsilon displaces the degenerate force points off the seed; it must be
    on the order of the Bessel step scale sqrt(dt), or the first few
    integration substeps impart O(1) kicks to the driver and the discrete
    first- and last-crossing laws drift apart.
    """
    forces = (
        ForceSpec(Location.PLUS_SIDE, rho_plus),
        ForceSpec(Location.MINUS_SIDE, rho_minus),
    )
    cfg = SleConfig(
        kappa, forces=forces, dt=dt, horizon=horizon, seed=seed
    )
    batch = simulate_batch(cfg, n_samples, epsilon=epsilon, record_stride=1)
    out = np.empty(n_samples)
    for i in range(n_samples):
        life = int(batch.lifetime_idx[i])
        df = DrivingFunction(dt, batch.xi_rec[i][: life + 1], kappa)
        out[i] = _circle_exit(
            df, radius=radius, coarse=coarse, fine=fine, guard=guard,
            last=last,
        )
    return out


def reversibility_experiment(
    rho_plus: float,
    rho_minus: float,
    n_samples: int,
    seed: int,
    *,
    control: bool = False,
    dt: float = 1e-3,
    horizon: float = 30.0,
):
    """KS comparison of first-exit and reversed-side exit crossing laws.

    The trace from (0; 0^+, 0^-) with nonnegative forces is reversible up
    to the circle-preserving inversion, so the first outward crossing of
    the unit circle and the final one (the reversal's first crossing) must
    share a law.  control=True runs the reversed side with zero forces
    instead (mismatched law).  Returns (KsResult, first-side samples,
    reversed-side samples).
    """
    a = crossing_statistics(
        rho_plus, rho_minus, n_samples, seed, last=False, dt=dt,
        horizon=horizon,
    )
    rp, rm = (0.0, 0.0) if control else (rho_plus, rho_minus)
    b = crossing_statistics(
        rp, rm, n_samples, seed + 1, last=True, dt=dt, horizon=horizon
    )
    a = a[np.isfinite(a)]
    b = b[np.isfinite(b)]
    return ks_two_sample(a, b), a, b


# ---------------------------------------------------------------------------
# Self-convergence of the trace under time-step refinement
# ---------------------------------------------------------------------------


def self_convergence_errors(
    seeds,
    *,
    dts=(4e-4, 2e-4, 1e-4),
    ref_dt: float = 2.5e-5,
    horizon: float = 1.0,
    kappa: float = 3.0,
) -> np.ndarray:
    """Mean trace-tip error at the horizon for each dt, common noise.

    A single Brownian path per seed is sampled on the reference grid and
    restricted to each coarser grid, so the errors measure pure
    discretization effects.
    """
    n_ref = int(round(horizon / ref_dt))
    errors = np.zeros(len(dts))
    for seed in seeds:
        rng = _rng_for_sample(seed, 0)
        steps = rng.standard_normal(n_ref) * np.sqrt(kappa * ref_dt)
        path = np.concatenate([[0.0], np.cumsum(steps)])
        df_ref = DrivingFunction(ref_dt, path, kappa)
        tip_ref = trace_tips(evolve(df_ref), df_ref, np.array([n_ref]))[0]
        for j, dt in enumerate(dts):
            stride = int(round(dt / ref_dt))
            df = DrivingFunction(dt, path[::stride], kappa)
            n = len(df.values) - 1
            tip = trace_tips(evolve(df), df, np.array([n]))[0]
            errors[j] += abs(tip - tip_ref)
    return errors / len(seeds)
