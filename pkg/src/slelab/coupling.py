"""Two-parameter coupling quantities for a pair of independent chordal chains.

Given two disjoint hulls grown by independent driving functions, this module
computes, on a rectangular (t1, t2) grid:

  * the ensemble maps phi_{j,t_k}(t_j, .) that remove the image of hull j in
    the coordinate where hull k has been mapped away, together with their
    spatial derivatives (A, B, E, C tables);
  * the interaction integral F and the two-parameter positive functional
    M(t1, t2), normalized so that M(t, 0) = M(0, t) = 1, which is a local
    martingale in each time argument when the drivers are the coupled
    SLE(kappa1)/SLE(kappa2 = 16/kappa1) pair;
  * the degenerate variant of M for a force point starting on the right
    side of the first seed.

All products are assembled in log-space because the exponents can push the
individual factors across many orders of magnitude.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainViolation
from .loewner import (
    DrivingFunction,
    SlitMapChain,
    _branch_sqrt,
    chain_from_curve,
    evolve,
    trace_tips,
)

logger = logging.getLogger(__name__)

#: nodes where some |E_{j,m}| falls below this are excluded from statistics
FACTOR_UNDERFLOW = 1e-13

#: hull closures must be farther apart than this multiple of the trace
#: sampling scale for a grid node to count as inside the domain
DOMAIN_GAP_FACTOR = 5.0


def lambda_exponent(kappa):
    """Central-charge style exponent (8-3k)(6-k)/(2k); invariant under k -> 16/k.

    Preserves exact arithmetic for Fraction inputs.
    """
    return (8 - 3 * kappa) * (6 - kappa) / (2 * kappa)


@dataclass(frozen=True)
class MartingaleParams:
    """Exponents of the two-parameter martingale for kappa1 * kappa2 = 16.

    rho1 holds the common force strengths seen by the first driver; the
    second driver sees rho2 = -(kappa2/4) * rho1.
    """

    kappa1: float
    rho1: tuple = ()

    def __post_init__(self):
        if self.kappa1 <= 0:
            raise ValueError("kappa1 must be positive")
        object.__setattr__(self, "rho1", tuple(float(r) for r in self.rho1))

    @property
    def kappa2(self) -> float:
        return 16.0 / self.kappa1

    @property
    def rho2(self) -> tuple:
        return tuple(-(self.kappa2 / 4.0) * r for r in self.rho1)

    @property
    def n_forces(self) -> int:
        return len(self.rho1)

    @property
    def alpha1(self) -> float:
        return (6.0 - self.kappa1) / (2.0 * self.kappa1)

    @property
    def alpha2(self) -> float:
        return (6.0 - self.kappa2) / (2.0 * self.kappa2)

    @property
    def lam(self) -> float:
        return lambda_exponent(self.kappa1)

    @property
    def rho_star1(self) -> np.ndarray:
        return np.asarray(self.rho1) / self.kappa1

    @property
    def rho_star2(self) -> np.ndarray:
        return np.asarray(self.rho2) / self.kappa2

    @property
    def gamma(self) -> np.ndarray:
        rs = self.rho_star1
        return (self.kappa1 / 4.0) * rs * (rs - 1.0) + rs

    @property
    def delta(self) -> np.ndarray:
        rs = self.rho_star1
        return (self.kappa1 / 2.0) * np.outer(rs, rs)


def _forward_snapshots(chain: SlitMapChain, z, marks):
    """Images and dz-derivatives of chain.forward at several prefix lengths.

    marks must be a sorted array of step counts; returns arrays of shape
    (len(marks), len(z)).
    """
    cur = np.atleast_1d(np.asarray(z, dtype=complex)).copy()
    der = np.ones_like(cur)
    marks = np.asarray(marks, dtype=int)
    vals = np.empty((len(marks),) + cur.shape, dtype=complex)
    ders = np.empty_like(vals)
    mi = 0
    n_max = int(marks[-1]) if len(marks) else 0
    for k in range(n_max + 1):
        while mi < len(marks) and marks[mi] == k:
            vals[mi] = cur
            ders[mi] = der
            mi += 1
        if k == n_max:
            break
        c, tau = chain.centers[k], chain.durations[k]
        w = cur - c
        s = _branch_sqrt(w * w + 4.0 * tau, w.real)
        s = np.where(w.imag == 0.0, s.real + 0.0j, s)
        der = der * (w / s)
        cur = c + s
    return vals, ders


def ensemble_map(trace_j, chain_k: SlitMapChain, upto_k: int | None = None):
    """Normalized map of hull j seen in the coordinate where hull k is removed.

    trace_j is the sampled trace polyline of hull j (first point on R); the
    polyline is transported through the first upto_k steps of chain_k and
    re-absorbed into a fresh chordal chain.  Returns (chain, counts) where
    counts[i] is the number of chain steps realizing the first i+1 polyline
    points, so chain.forward(z, upto=counts[i]) is the ensemble map of the
    hull grown up to polyline point i.
    """
    pts = np.asarray(trace_j, dtype=complex)
    img = chain_k.forward(pts, upto=upto_k)
    if not np.all(np.isfinite(img)) or np.any(img.imag < -1e-9):
        raise DomainViolation("hull closures intersect at resolution")
    img = np.where(np.abs(img.imag) < 1e-14, img.real + 0.0j, img)
    chain, kept = chain_from_curve(img, return_kept=True)
    counts = np.concatenate([[0], np.cumsum(kept)])
    return chain, counts


def _min_gap(pts1, pts2) -> float:
    a = np.asarray(pts1, dtype=complex)[:, None]
    b = np.asarray(pts2, dtype=complex)[None, :]
    return float(np.min(np.abs(a - b)))


@dataclass
class EnsembleState:
    """Grid tables of the two-parameter coupling quantities.

    grid1/grid2 are step indices into the two driving functions; all tables
    are indexed (i, j) over the grid and A/B values are real (stored float).
    """

    grid1: np.ndarray
    grid2: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    xi1: np.ndarray  # driver 1 values at grid1
    xi2: np.ndarray
    q: np.ndarray  # (N, n1): force images under phi_1(t1, .)
    dq: np.ndarray  # (N, n1): d/dp of phi_1(t1, .) at the force (nan if degenerate)
    A10: np.ndarray
    A11: np.ndarray
    A20: np.ndarray
    A21: np.ndarray
    B0: np.ndarray  # (N, n1, n2): forces under the composed map
    B_outer1: np.ndarray  # (N, n1, n2): derivative of phi_{2,t1}(t2, .) at q
    logF: np.ndarray
    A12: np.ndarray | None = None  # spatial second derivative at xi1 (optional)
    degenerate: bool = False

    @property
    def E(self) -> np.ndarray:
        return np.abs(self.A10 - self.A20)

    def B1(self, m: int) -> np.ndarray:
        """Derivative of the composed map at force m, by the chain rule."""
        return self.B_outer1[m] * self.dq[m][:, None]


def build_ensemble(
    df1: DrivingFunction,
    df2: DrivingFunction,
    grid1,
    grid2,
    forces=(),
    *,
    tip_stride: int = 1,
    q1_track=None,
    second_derivative_step: float | None = None,
    check_domain: bool = True,
    transport: str = "exact",
    chains=None,
    tips=None,
) -> EnsembleState:
    """Evaluate all coupling tables on the grid1 x grid2 index grid.

    grid indices must be multiples of tip_stride and include 0.  For a
    degenerate first force, q1_track supplies its flow positions at the
    grid1 indices (the map derivative at it is then undefined and stored
    as nan).

    transport="rezip" routes the interior transports through the
    re-absorbed polyline chains instead of the full step chains; the extra
    error is first order in the polyline spacing (same order as the
    re-absorption itself) and the cost no longer grows with the number of
    driver steps.  Boundary rows and columns always use the exact chains.

    chains and tips allow reusing the slit-map chains and the trace tips
    (one array per driver, at consecutive multiples of tip_stride starting
    at index tip_stride) across ensembles built from the same pair.
    """
    grid1 = np.asarray(grid1, dtype=int)
    grid2 = np.asarray(grid2, dtype=int)
    if grid1[0] != 0 or grid2[0] != 0:
        raise ValueError("grids must start at index 0")
    if np.any(grid1 % tip_stride) or np.any(grid2 % tip_stride):
        raise ValueError("grid indices must be multiples of tip_stride")
    forces = tuple(float(p) for p in forces)
    n1, n2 = len(grid1), len(grid2)
    nf = len(forces)
    degenerate = q1_track is not None

    chain1, chain2 = (evolve(df1), evolve(df2)) if chains is None else chains
    xi1 = df1.values[grid1].astype(float)
    xi2 = df2.values[grid2].astype(float)

    def polyline(chain, df, last_idx, pre):
        if pre is not None:
            pts = pre[: last_idx // tip_stride]
        else:
            idx = np.arange(tip_stride, last_idx + 1, tip_stride)
            pts = trace_tips(chain, df, idx) if len(idx) else np.empty(0, complex)
        return np.concatenate([[complex(df.values[0])], pts])

    pre1, pre2 = (None, None) if tips is None else tips
    tr1 = polyline(chain1, df1, int(grid1[-1]), pre1)
    tr2 = polyline(chain2, df2, int(grid2[-1]), pre2)
    if check_domain and len(tr1) > 1 and len(tr2) > 1:
        scale = max(
            float(np.median(np.abs(np.diff(tr1)))) if len(tr1) > 1 else 0.0,
            float(np.median(np.abs(np.diff(tr2)))) if len(tr2) > 1 else 0.0,
        )
        if _min_gap(tr1, tr2) <= DOMAIN_GAP_FACTOR * scale:
            raise DomainViolation("hull closures closer than the sampling scale")

    # exact boundary data from the chains themselves
    fd = second_derivative_step
    probes1 = [xi1[0]] + list(forces)  # evaluated under chain2 (row i=0)
    v0, d0 = _forward_snapshots(chain2, np.asarray(probes1), grid2)
    probes2 = [xi2[0]] + list(forces)  # evaluated under chain1 (column j=0)
    w0, e0 = _forward_snapshots(chain1, np.asarray(probes2), grid1)

    A10 = np.empty((n1, n2))
    A11 = np.empty((n1, n2))
    A20 = np.empty((n1, n2))
    A21 = np.empty((n1, n2))
    A12 = np.empty((n1, n2)) if fd else None
    B0 = np.empty((nf, n1, n2))
    Bo1 = np.empty((nf, n1, n2))

    # row i = 0: phi_{2,0}(t2, .) is chain2 itself
    A10[0, :] = v0[:, 0].real
    A11[0, :] = d0[:, 0].real
    A20[0, :] = xi2
    A21[0, :] = 1.0
    for m in range(nf):
        B0[m, 0, :] = v0[:, 1 + m].real
        Bo1[m, 0, :] = d0[:, 1 + m].real
    # column j = 0: phi_{1,0}(t1, .) is chain1 itself
    A10[:, 0] = xi1
    A11[:, 0] = 1.0
    A20[:, 0] = w0[:, 0].real
    A21[:, 0] = e0[:, 0].real
    q = np.empty((nf, n1))
    dq = np.empty((nf, n1))
    for m in range(nf):
        q[m] = w0[:, 1 + m].real
        dq[m] = e0[:, 1 + m].real
        B0[m, :, 0] = q[m]
        Bo1[m, :, 0] = 1.0
    if degenerate:
        q[0] = np.asarray(q1_track, dtype=float)
        dq[0] = np.nan
        B0[0, :, 0] = q[0]
    if fd:
        A12[0, :] = _spatial_second_derivative(chain2, xi1[0], grid2, fd)
        A12[:, 0] = 0.0

    if transport == "rezip":
        z1, kept1 = chain_from_curve(tr1, return_kept=True)
        z2, kept2 = chain_from_curve(tr2, return_kept=True)
        zc1 = np.concatenate([[0], np.cumsum(kept1)])
        zc2 = np.concatenate([[0], np.cumsum(kept2)])
    elif transport != "exact":
        raise ValueError("transport must be 'exact' or 'rezip'")

    # interior rows: transport hull 2 through phi_1(t1_i, .) and re-absorb
    for i in range(1, n1):
        gi = int(grid1[i])
        if transport == "rezip":
            chainB, counts = ensemble_map(tr2, z1, upto_k=int(zc1[gi // tip_stride]))
        else:
            chainB, counts = ensemble_map(tr2, chain1, upto_k=gi)
        marks = counts[grid2 // tip_stride]
        pts = [xi1[i]] + list(q[:, i])
        if fd:
            pts += [xi1[i] - fd, xi1[i] + fd]
        vals, ders = _forward_snapshots(chainB, np.asarray(pts, complex), marks)
        A10[i, :] = vals[:, 0].real
        A11[i, :] = ders[:, 0].real
        for m in range(nf):
            B0[m, i, :] = vals[:, 1 + m].real
            Bo1[m, i, :] = ders[:, 1 + m].real
        if fd:
            A12[i, :] = (ders[:, nf + 2].real - ders[:, nf + 1].real) / (2.0 * fd)
    # interior columns: transport hull 1 through phi_2(t2_j, .)
    for j in range(1, n2):
        gj = int(grid2[j])
        if transport == "rezip":
            chainA, counts = ensemble_map(tr1, z2, upto_k=int(zc2[gj // tip_stride]))
        else:
            chainA, counts = ensemble_map(tr1, chain2, upto_k=gj)
        marks = counts[grid1 // tip_stride]
        vals, ders = _forward_snapshots(chainA, np.asarray([xi2[j]], complex), marks)
        A20[:, j] = vals[:, 0].real
        A21[:, j] = ders[:, 0].real

    t1 = grid1 * df1.dt
    t2 = grid2 * df2.dt
    E = np.abs(A10 - A20)
    G = 2.0 * A11 * A21 / (E * E)
    cell = 0.25 * (G[:-1, :-1] + G[1:, :-1] + G[:-1, 1:] + G[1:, 1:])
    cell = cell * np.outer(np.diff(t1), np.diff(t2))
    logF = np.zeros((n1, n2))
    if n1 > 1 and n2 > 1:
        logF[1:, 1:] = np.cumsum(np.cumsum(cell, axis=0), axis=1)

    return EnsembleState(
        grid1=grid1, grid2=grid2, t1=t1, t2=t2, xi1=xi1, xi2=xi2,
        q=q, dq=dq, A10=A10, A11=A11, A20=A20, A21=A21,
        B0=B0, B_outer1=Bo1, logF=logF, A12=A12, degenerate=degenerate,
    )


def _spatial_second_derivative(chain, x, marks, h):
    _, ders = _forward_snapshots(chain, np.asarray([x - h, x + h], complex), marks)
    return (ders[:, 1].real - ders[:, 0].real) / (2.0 * h)


def compute_F(state: EnsembleState) -> np.ndarray:
    """Interaction factor F on the grid (trapezoidal double integral)."""
    return np.exp(state.logF)


def _log_tilde_core(state: EnsembleState, params: MartingaleParams):
    """log of the un-normalized functional, excluding the first force when
    the state is degenerate; returns (log table, validity mask)."""
    lt = (
        params.alpha1 * np.log(state.A11)
        + params.alpha2 * np.log(state.A21)
        - 0.5 * np.log(state.E)
        - params.lam * state.logF
    )
    valid = np.isfinite(lt)
    rs1, rs2 = params.rho_star1, params.rho_star2
    gam, dlt = params.gamma, params.delta
    for m in range(params.n_forces):
        skip_first = state.degenerate and m == 0
        e1 = np.abs(state.A10 - state.B0[m])
        e2 = np.abs(state.A20 - state.B0[m])
        small = e2 < FACTOR_UNDERFLOW
        if not skip_first:
            small = small | (e1 < FACTOR_UNDERFLOW)
        if np.any(small):
            logger.warning(
                "factor underflow: |E_{j,%d}| < %.0e at %d grid nodes; excluded",
                m + 1, FACTOR_UNDERFLOW, int(np.sum(small)),
            )
            valid &= ~small
        with np.errstate(divide="ignore", invalid="ignore"):
            if not skip_first:
                lt = lt + gam[m] * np.log(state.B1(m)) + rs1[m] * np.log(e1)
            lt = lt + rs2[m] * np.log(e2)
        for m2 in range(m + 1, params.n_forces):
            c = np.abs(state.B0[m] - state.B0[m2])
            lt = lt + dlt[m, m2] * np.log(c)
    valid &= np.isfinite(lt)
    return lt, valid


def _normalize(lt: np.ndarray) -> np.ndarray:
    out = lt + lt[0, 0] - lt[:, :1] - lt[:1, :]
    # the normalization vanishes identically on the axes; enforce it exactly
    out[0, :] = 0.0
    out[:, 0] = 0.0
    return out


def compute_M(state: EnsembleState, params: MartingaleParams) -> np.ndarray:
    """M(t1, t2) on the grid, normalized so M(t, 0) = M(0, t) = 1.

    Nodes where some gap factor underflows are returned as nan (and logged).
    """
    if state.degenerate:
        raise ValueError("use compute_M_degenerate for a degenerate first force")
    lt, valid = _log_tilde_core(state, params)
    M = np.exp(_normalize(lt))
    M[~valid] = np.nan
    return M


def compute_M_degenerate(state: EnsembleState, params: MartingaleParams) -> np.ndarray:
    """Degenerate variant of M for the first force point starting at x1^+.

    The first-force factors of the generic functional are replaced by the
    continuous difference-quotient factor U and the derivative of the
    ensemble map at the flowed force position.
    """
    if not state.degenerate:
        raise ValueError("state was not built with a degenerate force track")
    lt, valid = _log_tilde_core(state, params)
    logN = _normalize(lt)

    gap = np.abs(state.xi1 - state.q[0])  # (n1,)
    num = np.abs(state.A10 - state.B0[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        logU = np.log(num) - np.log(gap)[:, None]
    logU[0, :] = np.log(state.A11[0, :])  # limit t1 -> 0: the map derivative
    logD = np.log(state.B_outer1[0])

    rs11 = params.rho_star1[0]
    gam1 = params.gamma[0]
    logM = (
        logN
        + rs11 * (logU - logU[:1, :])
        + gam1 * (logD - logD[:1, :])
    )
    M = np.exp(logM)
    valid &= np.isfinite(logM)
    M[~valid] = np.nan
    return M


def martingale_direction_stats(state: EnsembleState, params: MartingaleParams,
                               col: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-increment drift residuals of log(tilde M) along t1 at fixed t2.

    Requires the state to carry A12 (built with second_derivative_step).
    Returns (residuals, predicted stochastic coefficients) for the column
    `col` of the grid; the residual of increment i is
        dlog(tilde M) - MS * dxi1 + (kappa1/2) * MS^2 * dt,
    which has mean zero when the drift terms cancel.
    """
    if state.A12 is None:
        raise ValueError("state built without second_derivative_step")
    lt, _ = _log_tilde_core(state, params)
    k1 = params.kappa1
    e10 = state.A10 - state.A20
    ms = (6.0 - k1) / (2.0 * k1) * state.A12[:, col] / state.A11[:, col]
    ms = ms - 0.5 * state.A11[:, col] / e10[:, col]
    for m in range(params.n_forces):
        e1m = state.A10[:, col] - state.B0[m][:, col]
        ms = ms + params.rho_star1[m] * state.A11[:, col] / e1m
    dxi = np.diff(state.xi1)
    dt = np.diff(state.t1)
    dlt = np.diff(lt[:, col])
    resid = dlt - ms[:-1] * dxi + 0.5 * k1 * ms[:-1] ** 2 * dt
    return resid, ms[:-1]


# ---------------------------------------------------------------------------
# Monte-Carlo verification of the martingale property
# ---------------------------------------------------------------------------

from .driver import ForceSpec, Location, SleConfig, simulate_batch  # noqa: E402


@dataclass(frozen=True)
class CouplingRun:
    """Configuration of a coupled-pair Monte-Carlo experiment.

    The two drivers are simulated independently: driver 1 is an
    SLE(kappa1; -kappa1/2, rho1) started from (x1; x2, forces) and driver 2
    the matching SLE(kappa2; -kappa2/2, rho2) from (x2; x1, forces).  With
    degenerate=True the first force starts at x1^+ for driver 1 and is
    merged into the x1 force for driver 2.  Each hull is stopped when its
    trace first leaves the disk of the given radius around its seed.
    """

    params: MartingaleParams
    x1: float = 0.0
    x2: float = 3.0
    forces: tuple = ()
    degenerate: bool = False
    radius1: float = 0.6
    radius2: float = 0.6
    dt: float = 2.5e-5
    horizon: float = 0.25
    tip_stride: int = 24
    grid_nodes: int = 6
    epsilon: float = 1e-3

    @property
    def coarse_stride(self) -> int:
        # 4x the step count doubles the polyline spacing
        return 4 * self.tip_stride

    def sle_configs(self, seed: int) -> tuple[SleConfig, SleConfig]:
        p = self.params
        f1 = [ForceSpec(Location.REAL, -p.kappa1 / 2.0, self.x2)]
        rho2_first = 0.0
        for m, pos in enumerate(self.forces):
            if self.degenerate and m == 0:
                f1.append(ForceSpec(Location.PLUS_SIDE, p.rho1[m]))
                rho2_first = p.rho2[m]
            else:
                f1.append(ForceSpec(Location.REAL, p.rho1[m], pos))
        f2 = [ForceSpec(Location.REAL, -p.kappa2 / 2.0 + rho2_first, self.x1)]
        for m, pos in enumerate(self.forces):
            if not (self.degenerate and m == 0):
                f2.append(ForceSpec(Location.REAL, p.rho2[m], pos))
        cfg1 = SleConfig(p.kappa1, start=self.x1, forces=tuple(f1), dt=self.dt,
                         horizon=self.horizon, seed=2 * seed, strict=False)
        cfg2 = SleConfig(p.kappa2, start=self.x2, forces=tuple(f2), dt=self.dt,
                         horizon=self.horizon, seed=2 * seed + 1, strict=False)
        return cfg1, cfg2


@dataclass
class MartingaleMcResult:
    values: np.ndarray  # M at the stopped corner, one entry per usable pair
    rows: np.ndarray | None  # M(min(g, tau1), tau2) along row_grid
    row_grid: np.ndarray | None
    n_excluded: int

    @property
    def mean(self) -> float:
        return float(np.nanmean(self.values))

    @property
    def standard_error(self) -> float:
        n = int(np.sum(np.isfinite(self.values)))
        return float(np.nanstd(self.values) / np.sqrt(n))


def _first_exit_index(tips, indices, center, radius):
    out = np.abs(tips - center) > radius
    if out.any():
        return int(indices[int(np.argmax(out))])
    return int(indices[-1])


def _snap_grid(stop, nodes, stride):
    g = np.round(np.linspace(0.0, stop, nodes) / stride).astype(int) * stride
    return np.unique(g)


def martingale_mc(
    run: CouplingRun,
    n_pairs: int,
    seed: int,
    *,
    extrapolate: bool = True,
    row_grid=None,
    first_pair: int = 0,
) -> MartingaleMcResult:
    """Sample M at the disk-exit stopping times over independent seed pairs.

    With extrapolate=True each pair is evaluated at the fine and the 4x
    coarser polyline stride and linearly extrapolated to zero spacing,
    removing the leading re-absorption bias.  row_grid (step indices)
    additionally records M(min(g, tau1), tau2) per pair for increment
    regressions.  Pairs whose hulls come too close are excluded.
    """
    p = run.params
    cfg1, cfg2 = run.sle_configs(seed)
    eps = run.epsilon if run.degenerate else 0.0
    b1 = simulate_batch(cfg1, n_pairs, epsilon=eps, record_stride=1,
                        first_sample=first_pair)
    b2 = simulate_batch(cfg2, n_pairs, record_stride=1, first_sample=first_pair)
    base = run.coarse_stride
    strides = (run.tip_stride, run.coarse_stride) if extrapolate else (run.tip_stride,)

    values, rows = [], []
    n_excluded = 0
    for i in range(n_pairs):
        L1 = int(b1.lifetime_idx[i])
        L2 = int(b2.lifetime_idx[i])
        df1 = DrivingFunction(run.dt, b1.xi_rec[i][: L1 + 1], p.kappa1)
        df2 = DrivingFunction(run.dt, b2.xi_rec[i][: L2 + 1], p.kappa2)
        c1, c2 = evolve(df1), evolve(df2)
        fidx1 = np.arange(run.tip_stride, L1 + 1, run.tip_stride)
        fidx2 = np.arange(run.tip_stride, L2 + 1, run.tip_stride)
        ratio = base // run.tip_stride
        if len(fidx1) < ratio or len(fidx2) < ratio:
            n_excluded += 1
            continue
        tips1 = trace_tips(c1, df1, fidx1)
        tips2 = trace_tips(c2, df2, fidx2)
        sel = slice(ratio - 1, None, ratio)
        s1 = _first_exit_index(tips1[sel], fidx1[sel], run.x1, run.radius1)
        s2 = _first_exit_index(tips2[sel], fidx2[sel], run.x2, run.radius2)
        q_grid = None
        try:
            per_stride = []
            for stride in strides:
                g1 = _snap_grid(s1, run.grid_nodes, stride)
                if row_grid is not None:
                    extra = np.clip(np.asarray(row_grid, int), 0, s1)
                    g1 = np.unique(np.concatenate([g1, extra // stride * stride]))
                g2 = _snap_grid(s2, run.grid_nodes, stride)
                if run.degenerate:
                    q_grid = b1.forces_rec[1][i][g1]
                r = stride // run.tip_stride
                st = build_ensemble(
                    df1, df2, g1, g2, forces=self_forces(run),
                    tip_stride=stride, q1_track=q_grid, transport="rezip",
                    chains=(c1, c2),
                    tips=(tips1[r - 1::r], tips2[r - 1::r]),
                )
                M = (compute_M_degenerate(st, p) if run.degenerate
                     else compute_M(st, p))
                per_stride.append((g1, M))
        except DomainViolation:
            n_excluded += 1
            continue
        g1f, Mf = per_stride[0]
        corner = Mf[-1, -1]
        row = None
        if row_grid is not None:
            pos = np.searchsorted(g1f, np.clip(np.asarray(row_grid, int), 0, s1)
                                  // strides[0] * strides[0])
            row = Mf[pos, -1]
        if extrapolate:
            Mc = per_stride[1][1]
            corner = 2.0 * corner - Mc[-1, -1]
            if row is not None:
                g1c = per_stride[1][0]
                posc = np.searchsorted(g1c, np.clip(np.asarray(row_grid, int), 0, s1)
                                       // strides[1] * strides[1])
                row = 2.0 * row - Mc[posc, -1]
        values.append(corner)
        if row is not None:
            rows.append(row)
    return MartingaleMcResult(
        values=np.asarray(values),
        rows=np.asarray(rows) if rows else None,
        row_grid=np.asarray(row_grid, int) if row_grid is not None else None,
        n_excluded=n_excluded,
    )


def self_forces(run: CouplingRun) -> tuple:
    """Force positions as seen by the ensemble tables (degenerate -> x1)."""
    out = list(run.forces)
    if run.degenerate and out:
        out[0] = run.x1
    return tuple(out)


def drift_regression(
    run: CouplingRun,
    n_pairs: int,
    seed: int,
    *,
    n_increments: int = 10,
    t2_steps: int | None = None,
    fd_step: float = 1e-3,
) -> np.ndarray:
    """Drift residuals of log(tilde M) along t1 at a fixed t2.

    Returns an (n_usable, n_increments) array of per-step residuals
    dlog(tilde M) - MS dxi + (kappa1/2) MS^2 dt; the drift terms of the
    two-parameter functional cancel exactly when their sample mean
    vanishes.  Only the generic (non-degenerate) configuration is
    supported.
    """
    if run.degenerate:
        raise ValueError("drift regression uses the generic configuration")
    p = run.params
    cfg1, cfg2 = run.sle_configs(seed)
    b1 = simulate_batch(cfg1, n_pairs, record_stride=1)
    b2 = simulate_batch(cfg2, n_pairs, record_stride=1)
    stride = run.tip_stride
    t2_steps = 2 * stride if t2_steps is None else t2_steps
    grid1 = np.arange(0, (n_increments + 1) * stride + 1, stride)
    grid2 = np.array([0, t2_steps])
    out = []
    for i in range(n_pairs):
        df1 = DrivingFunction(run.dt, b1.xi_rec[i][: int(b1.lifetime_idx[i]) + 1],
                              p.kappa1)
        df2 = DrivingFunction(run.dt, b2.xi_rec[i][: int(b2.lifetime_idx[i]) + 1],
                              p.kappa2)
        if len(df1.values) <= grid1[-1] or len(df2.values) <= grid2[-1]:
            continue
        try:
            st = build_ensemble(
                df1, df2, grid1, grid2, forces=self_forces(run),
                tip_stride=stride, transport="rezip",
                second_derivative_step=fd_step,
            )
        except DomainViolation:
            continue
        resid, _ = martingale_direction_stats(st, p, col=len(grid2) - 1)
        out.append(resid)
    return np.asarray(out)
