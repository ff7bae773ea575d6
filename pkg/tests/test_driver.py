"""Tests for the SLE(kappa; rho) driving-function simulator."""

import numpy as np
import pytest

from slelab.driver import (
    ForceSpec,
    Location,
    SleConfig,
    Termination,
    simulate_batch,
    simulate_chordal,
    simulate_degenerate_start,
    simulate_strip,
)
from slelab.errors import DegenerateForceViolation
from slelab.loewner import Geometry


class TestConfigValidation:
    def test_degenerate_rho_bound_strict(self):
        with pytest.raises(DegenerateForceViolation):
            SleConfig(
                kappa=4.0,
                forces=(ForceSpec(Location.PLUS_SIDE, rho=-0.5),),
            )

    def test_degenerate_rho_bound_relaxed(self):
        cfg = SleConfig(
            kappa=4.0,
            forces=(ForceSpec(Location.PLUS_SIDE, rho=-0.5),),
            strict=False,
        )
        assert cfg.forces[0].rho == -0.5
        with pytest.raises(DegenerateForceViolation):
            SleConfig(
                kappa=4.0,
                forces=(ForceSpec(Location.PLUS_SIDE, rho=-2.0),),
                strict=False,
            )

    def test_two_plus_sides_rejected(self):
        with pytest.raises(ValueError):
            SleConfig(
                kappa=4.0,
                forces=(
                    ForceSpec(Location.PLUS_SIDE, rho=2.0),
                    ForceSpec(Location.PLUS_SIDE, rho=2.0),
                ),
            )

    def test_generic_force_at_start_rejected(self):
        with pytest.raises(ValueError):
            SleConfig(kappa=4.0, forces=(ForceSpec(Location.REAL, 1.0, x=0.0),))


class TestPlainDriver:
    def test_variance_matches_kappa(self):
        # with no forces, xi(t) = sqrt(kappa) B(t)
        kappa = 3.0
        cfg = SleConfig(kappa=kappa, dt=1e-3, horizon=0.05, seed=42)
        batch = simulate_batch(cfg, 10_000)
        v = np.var(batch.xi / np.sqrt(cfg.horizon))
        se = kappa * np.sqrt(2.0 / 10_000)
        assert abs(v - kappa) < 3 * se

    def test_increment_normality(self):
        cfg = SleConfig(kappa=2.0, dt=1e-3, horizon=0.002, seed=5)
        batch = simulate_batch(cfg, 10_000, record_stride=1)
        inc = np.diff(batch.xi_rec, axis=1).ravel()
        n = inc.size
        z = inc / inc.std()
        skew = np.mean(z**3)
        kurt = np.mean(z**4) - 3.0
        assert abs(skew) < 4 * np.sqrt(6.0 / n)
        assert abs(kurt) < 4 * np.sqrt(24.0 / n)
        # lag-1 independence across the two increments per sample
        a, b = np.diff(batch.xi_rec, axis=1).T
        r = np.corrcoef(a, b)[0, 1]
        assert abs(r) < 3 / np.sqrt(10_000)

    def test_force_at_infinity_is_inert_chordal(self):
        cfg0 = SleConfig(kappa=6.0, dt=1e-3, horizon=0.1, seed=9)
        cfg1 = SleConfig(
            kappa=6.0,
            dt=1e-3,
            horizon=0.1,
            seed=9,
            forces=(ForceSpec(Location.PLUS_INFINITY, rho=0.0),),
        )
        a = simulate_chordal(cfg0)
        b = simulate_chordal(cfg1)
        assert np.array_equal(a.driving.values, b.driving.values)

    def test_scale_invariance(self):
        # law of xi(a^2 t)/a matches law of xi(t) for plain SLE
        from scipy.stats import ks_2samp

        a = 2.0
        cfg1 = SleConfig(kappa=8 / 3, dt=1e-3, horizon=0.2, seed=13)
        cfg2 = SleConfig(kappa=8 / 3, dt=4e-3, horizon=0.8, seed=14)
        b1 = simulate_batch(cfg1, 3000)
        b2 = simulate_batch(cfg2, 3000)
        assert ks_2samp(b1.xi, b2.xi / a).pvalue > 0.01


class TestForcedDriver:
    def test_force_track_ode_residual(self):
        cfg = SleConfig(
            kappa=2.0,
            dt=1e-4,
            horizon=0.05,
            seed=3,
            forces=(ForceSpec(Location.REAL, rho=1.0, x=1.0),),
        )
        path = simulate_chordal(cfg)
        xi = path.driving.values
        p = path.force_tracks[0]
        n = len(xi) - 1
        resid = p[1:] - p[:-1] - 2.0 * cfg.dt / (p[:-1] - xi[:-1])
        gap = np.abs(p[:-1] - xi[:-1])
        away = gap > 0.5
        # the plain Euler update is exact per step away from collisions
        assert np.max(np.abs(resid[: n][away[:n]])) < 1e-12

    def test_repulsion_sign(self):
        cfg = SleConfig(
            kappa=4.0,
            dt=1e-4,
            horizon=0.02,
            seed=21,
            forces=(
                ForceSpec(Location.REAL, rho=0.5, x=0.3),
                ForceSpec(Location.REAL, rho=0.5, x=-0.3),
            ),
        )
        path = simulate_chordal(cfg)
        xi = path.driving.values
        assert np.all(path.force_tracks[0] > xi)
        assert np.all(path.force_tracks[1] < xi)

    def test_strip_infinity_drift(self):
        # forces at +/-inf give xi = sqrt(kappa) B + sigma t
        rho_p, rho_m = 3.0, 1.0
        sigma = (rho_m - rho_p) / 2.0
        cfg = SleConfig(
            kappa=4.0,
            geometry=Geometry.STRIP,
            dt=1e-3,
            horizon=1.0,
            seed=17,
            forces=(
                ForceSpec(Location.PLUS_INFINITY, rho=rho_p),
                ForceSpec(Location.MINUS_INFINITY, rho=rho_m),
            ),
        )
        n = 4000
        batch = simulate_batch(cfg, n)
        est = batch.xi.mean() / cfg.horizon
        se = np.sqrt(cfg.kappa / cfg.horizon) / np.sqrt(n)
        assert abs(est - sigma) < 3 * se

    def test_strip_upper_edge_drift_recomputed(self):
        # drift against an upper-edge force is -(rho/2) tanh((pbar - xi)/2)
        rho = 1.5
        cfg = SleConfig(
            kappa=4.0,
            geometry=Geometry.STRIP,
            dt=1e-3,
            horizon=0.5,
            seed=23,
            forces=(ForceSpec(Location.STRIP_UPPER, rho=rho, x=0.7),),
        )
        path = simulate_strip(cfg)
        xi = path.driving.values
        pbar = path.force_tracks[0]
        # reconstruct the Brownian increments and check they have no drift
        # beyond the recorded force term (exact recomputation per step)
        drift = -(rho / 2.0) * np.tanh((pbar[:-1] - xi[:-1]) / 2.0)
        dB = np.diff(xi) - drift * cfg.dt
        # remove: dB should be exactly the stored Gaussian increments;
        # verify by recomputing the same path from its own increments
        xi2 = np.empty_like(xi)
        xi2[0] = xi[0]
        p2 = np.empty_like(pbar)
        p2[0] = pbar[0]
        for k in range(len(dB)):
            d = -(rho / 2.0) * np.tanh((p2[k] - xi2[k]) / 2.0)
            xi2[k + 1] = xi2[k] + d * cfg.dt + dB[k]
            p2[k + 1] = p2[k] + np.tanh((p2[k] - xi2[k]) / 2.0) * cfg.dt
        assert np.max(np.abs(xi2 - xi)) < 1e-12
        assert np.max(np.abs(p2 - pbar)) < 1e-12


class TestDegenerateStart:
    def test_requires_epsilon(self):
        cfg = SleConfig(kappa=4.0, forces=(ForceSpec(Location.PLUS_SIDE, rho=2.0),))
        with pytest.raises(ValueError):
            simulate_degenerate_start(cfg, 0.0)

    def test_gap_stays_positive(self):
        # kappa=4, rho=2 at 0+: the gap never closes
        for seed in range(20):
            cfg = SleConfig(
                kappa=4.0,
                dt=1e-4,
                horizon=0.05,
                seed=seed,
                forces=(ForceSpec(Location.PLUS_SIDE, rho=2.0),),
            )
            path = simulate_degenerate_start(cfg, 1e-3)
            assert path.terminated_by is Termination.HORIZON
            assert np.all(path.force_tracks[0] > path.driving.values)

    def test_two_sided_ordering(self):
        # kappa=4, (rho+, rho-) = (1, 1): p- < xi < p+ throughout
        ok = 0
        for seed in range(100):
            cfg = SleConfig(
                kappa=4.0,
                dt=1e-4,
                horizon=0.02,
                seed=seed,
                forces=(
                    ForceSpec(Location.PLUS_SIDE, rho=1.0),
                    ForceSpec(Location.MINUS_SIDE, rho=1.0),
                ),
            )
            path = simulate_degenerate_start(cfg, 1e-3)
            n = int(round(path.lifetime / cfg.dt))
            xi = path.driving.values[: n + 1]
            ok += bool(
                np.all(path.force_tracks[0][: n + 1] > xi)
                and np.all(path.force_tracks[1][: n + 1] < xi)
            )
        assert ok == 100

    def test_mean_gap_monotone_in_rho(self):
        means = []
        for rho in (2.0, 4.0, 10.0):
            cfg = SleConfig(
                kappa=4.0,
                dt=1e-3,
                horizon=1.0,
                seed=31,
                forces=(ForceSpec(Location.PLUS_SIDE, rho=rho),),
            )
            batch = simulate_batch(cfg, 200, epsilon=1e-3)
            gap = batch.forces[0] - batch.xi
            means.append(gap[batch.lifetime_idx == batch.n_steps].mean())
        assert means[0] < means[1] < means[2]


class TestBatchMechanics:
    def test_reproducible_across_batch_split(self):
        cfg = SleConfig(kappa=3.0, dt=1e-3, horizon=0.1, seed=77)
        whole = simulate_batch(cfg, 6)
        head = simulate_batch(cfg, 3)
        tail = simulate_batch(cfg, 3, first_sample=3)
        assert np.array_equal(whole.xi[:3], head.xi)
        assert np.array_equal(whole.xi[3:], tail.xi)

    def test_tracked_point_swallowing(self):
        cfg = SleConfig(kappa=8.0, dt=1e-4, horizon=2.0, seed=4)
        batch = simulate_batch(cfg, 50, track_points=[0.05])
        # kappa=8 drivers hit nearby points quickly: most samples swallow
        frac = np.mean(batch.swallow_idx[0] >= 0)
        assert frac > 0.9

    def test_upper_edge_tracking(self):
        cfg = SleConfig(
            kappa=4.0, geometry=Geometry.STRIP, dt=1e-3, horizon=0.5, seed=6
        )
        batch = simulate_batch(cfg, 10, track_upper=[0.0, 2.0])
        # upper-edge points drift but never blow up
        assert np.all(np.isfinite(batch.tracked_upper))
