"""Tests for the elementary slit maps and Loewner chain machinery."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slelab.loewner import (
    DrivingFunction,
    ElementarySlitMap,
    Geometry,
    SlitMapChain,
    chain_from_curve,
    chordal_slit_forward,
    chordal_slit_inverse,
    evolve,
    hull_capacity,
    strip_slit_forward,
    strip_slit_inverse,
    swallow_time,
    trace_tip,
)
from slelab.errors import SlitSwallowed


def constant_driver(n_steps, dt=1e-3, value=0.0, geometry=Geometry.HALF_PLANE):
    return DrivingFunction(dt, np.full(n_steps + 1, value), geometry=geometry)


class TestChordalElementary:
    def test_imaginary_axis(self):
        # above the slit, g(iy) = i*sqrt(y^2 - 4 tau)
        m = ElementarySlitMap(0.0, 0.25)
        for y in (1.5, 3.0):
            assert chordal_slit_forward(m, 1j * y) == pytest.approx(
                1j * np.sqrt(y * y - 1.0), abs=1e-14
            )
        # the base of the slit splits to +/- 2 sqrt(tau)
        assert abs(chordal_slit_forward(m, 0.0)) == pytest.approx(1.0, abs=1e-14)

    def test_real_point(self):
        m = ElementarySlitMap(0.0, 1.0)
        out = chordal_slit_forward(m, 3.0)
        assert out.imag == 0.0
        assert out.real == pytest.approx(np.sqrt(13.0), abs=1e-14)
        out = chordal_slit_forward(m, -3.0)
        assert out == pytest.approx(-np.sqrt(13.0), abs=1e-14)

    def test_swallowed_segment_raises(self):
        m = ElementarySlitMap(0.0, 1.0)
        with pytest.raises(SlitSwallowed):
            chordal_slit_forward(m, 1.0)

    def test_slit_sides(self):
        # both sides of the slit land on opposite sides of the center
        m = ElementarySlitMap(0.0, 1.0)
        eps = 1e-9
        left = chordal_slit_inverse(m, -1.0 + eps * 1j)
        right = chordal_slit_inverse(m, 1.0 + eps * 1j)
        assert left.imag > 0 and right.imag > 0
        assert left.real < 0 < right.real
        assert abs(left.imag - np.sqrt(3.0)) < 1e-6
        assert abs(right.imag - np.sqrt(3.0)) < 1e-6

    def test_tip_maps_to_driver(self):
        m = ElementarySlitMap(0.5, 0.3)
        tip = 0.5 + 2j * np.sqrt(0.3)
        # sqrt halves the floating-point precision at the tip itself
        assert chordal_slit_forward(m, tip) == pytest.approx(0.5, abs=1e-7)

    @given(
        x=st.floats(-10, 10),
        y=st.floats(0.01, 10),
        c=st.floats(-3, 3),
        tau=st.floats(1e-4, 2.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_round_trip(self, x, y, c, tau):
        m = ElementarySlitMap(c, tau)
        z = complex(x, y)
        w = chordal_slit_forward(m, z)
        assert w.imag >= 0
        back = chordal_slit_inverse(m, w)
        assert abs(back - z) < 1e-9 * (1 + abs(z))

    def test_halfplane_preserved_far_field(self):
        # g(z) - z -> 0 like 2 tau / z at infinity
        m = ElementarySlitMap(0.0, 0.5)
        z = 1000.0 + 1000.0j
        assert abs(chordal_slit_forward(m, z) - z - 2 * 0.5 / z) < 1e-6


class TestStripElementary:
    def test_matches_fine_reference(self):
        # oracle: 4096-substep RK4 on the same step (frozen tolerance 1e-10)
        m = ElementarySlitMap(0.1, 1e-3, Geometry.STRIP)
        z = 0.7 + 1.3j

        def rhs(u):
            return 1.0 / np.tanh((u - 0.1) / 2.0)

        cur = z
        h = 1e-3 / 4096
        for _ in range(4096):
            k1 = rhs(cur)
            k2 = rhs(cur + 0.5 * h * k1)
            k3 = rhs(cur + 0.5 * h * k2)
            k4 = rhs(cur + h * k3)
            cur = cur + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        assert abs(strip_slit_forward(m, z) - cur) < 1e-10

    def test_upper_edge_invariant(self):
        # points on R_pi stay exactly on R_pi
        m = ElementarySlitMap(0.0, 0.05, Geometry.STRIP)
        z = np.array([-2.0 + np.pi * 1j, 0.3 + np.pi * 1j, 5.0 + np.pi * 1j])
        out = strip_slit_forward(m, z)
        assert np.all(out.imag == np.pi)
        # and drift by the tanh flow: moving away from the driver
        assert out[0].real < -2.0 and out[1].real > 0.3

    def test_round_trip(self):
        m = ElementarySlitMap(-0.4, 2e-3, Geometry.STRIP)
        z = np.array([0.5 + 0.8j, -3.0 + 2.0j, 1.0 + np.pi * 1j])
        back = strip_slit_inverse(m, strip_slit_forward(m, z))
        assert np.max(np.abs(back - z)) < 1e-10


class TestChainAndTrace:
    def test_zero_driver_tip(self):
        # constant zero driver gives the vertical segment, beta(t) = 2i sqrt(t)
        df = constant_driver(1000, dt=1e-3)
        chain = evolve(df)
        tip = trace_tip(chain, df, 1.0)
        assert abs(tip.z - 2j) < 1e-9

    def test_zero_driver_forward(self):
        # phi(t, iy) = i sqrt(y^2 + 4t), exact for the composed closed forms
        df = constant_driver(500, dt=1e-3)
        chain = evolve(df)
        out = chain.forward(2j)
        assert abs(out - 1j * np.sqrt(4 - 4 * 0.5)) < 1e-12

    def test_capacity_additivity(self):
        df = constant_driver(250, dt=1e-3)
        chain = evolve(df)
        a = chain.subchain(100)
        b = SlitMapChain(chain.centers[100:], chain.durations[100:])
        assert hull_capacity(a) + hull_capacity(b) == hull_capacity(chain)
        assert hull_capacity(chain) == pytest.approx(2 * 0.25, abs=1e-15)

    def test_forward_derivative_chordal(self):
        rng = np.random.default_rng(7)
        df = DrivingFunction(1e-3, np.cumsum(rng.normal(0, 0.03, 200)))
        chain = evolve(df)
        z = 0.4 + 1.1j
        _, der = chain.forward_with_derivative(z)
        h = 1e-6
        fd = (chain.forward(z + h) - chain.forward(z - h)) / (2 * h)
        assert abs(der - fd) < 1e-5 * abs(der)

    def test_forward_derivative_strip(self):
        rng = np.random.default_rng(8)
        df = DrivingFunction(
            1e-3, np.cumsum(rng.normal(0, 0.03, 80)), geometry=Geometry.STRIP
        )
        chain = evolve(df)
        z = 0.2 + 1.5j
        _, der = chain.forward_with_derivative(z)
        h = 1e-6
        fd = (chain.forward(z + h) - chain.forward(z - h)) / (2 * h)
        assert abs(der - fd) < 1e-5 * abs(der)

    def test_batched_tips_match_single(self):
        from slelab.loewner import trace_tips

        rng = np.random.default_rng(15)
        df = DrivingFunction(1e-3, np.cumsum(rng.normal(0, 0.05, 120)))
        chain = evolve(df)
        idx = [0, 1, 7, 60, 119]
        batched = trace_tips(chain, df, idx)
        singles = np.array([trace_tip(chain, df, i * 1e-3).z for i in idx])
        assert np.max(np.abs(batched - singles)) < 1e-12

    def test_chain_round_trip(self):
        rng = np.random.default_rng(9)
        df = DrivingFunction(1e-3, np.cumsum(rng.normal(0, 0.05, 300)))
        chain = evolve(df)
        z = np.array([0.5 + 0.5j, -1 + 2j, 3 + 0.1j])
        back = chain.inverse(chain.forward(z))
        assert np.max(np.abs(back - z)) < 1e-9 * (1 + np.max(np.abs(z)))

    def test_strip_capacity(self):
        df = constant_driver(100, dt=1e-3, geometry=Geometry.STRIP)
        chain = evolve(df)
        assert hull_capacity(chain) == pytest.approx(0.1, abs=1e-15)


class TestSwallowTime:
    def test_zero_driver_never_swallows_far_point(self):
        df = constant_driver(1000, dt=1e-4)
        assert swallow_time(df, 5.0) == df.lifetime

    def test_moving_driver_swallows(self):
        # a fast driver pins the gap at 2/speed, below the tolerance here
        n = 1000
        dt = 1e-6
        values = np.linspace(0.0, 0.4, n + 1)  # speed 400
        df = DrivingFunction(dt, values)
        t = swallow_time(df, 0.1)
        assert 0.0 < t < df.lifetime

    def test_strip_edge_point_flow(self):
        # a strictly real point drifts away from a constant strip driver
        df = constant_driver(100, dt=1e-3, geometry=Geometry.STRIP)
        assert swallow_time(df, 1.0) == df.lifetime


class TestZipper:
    def test_vertical_segment(self):
        # a vertical slit of height h has capacity h^2/2
        h = 0.8
        pts = 1j * np.linspace(0.0, h, 400)
        chain = chain_from_curve(pts)
        assert hull_capacity(chain) == pytest.approx(h * h / 2.0, rel=1e-3)

    def test_recovers_driving_of_sle_trace(self):
        # zip a discretized zero-driver trace back up: drivers stay near 0
        df = constant_driver(400, dt=1e-3)
        chain = evolve(df)
        pts = np.array(
            [trace_tip(chain, df, k * 1e-3).z for k in range(0, 401, 4)]
        )
        rezip, drivers = chain_from_curve(pts, return_drivers=True)
        assert np.max(np.abs(drivers)) < 1e-6
        assert hull_capacity(rezip) == pytest.approx(0.8, rel=1e-2)

    def test_map_agrees_with_original_chain(self):
        rng = np.random.default_rng(11)
        df = DrivingFunction(2e-4, np.cumsum(rng.normal(0, 0.02, 500)))
        chain = evolve(df)
        pts = np.array(
            [trace_tip(chain, df, k * 2e-4).z for k in range(0, 500)]
        )
        rezip = chain_from_curve(pts)
        z = np.array([1 + 1j, -0.5 + 0.7j, 0.1 + 2j])
        a = chain.forward(z)
        b = rezip.forward(z)
        assert np.max(np.abs(a - b)) < 1e-3
