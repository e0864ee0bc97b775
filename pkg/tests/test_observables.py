"""Delay/fluctuation statistics: frozen reference values, exact identities,
synthetic extremum location, fits, probes and the quadrature gates."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csrsim.errors import HorizonError, QuadratureError, TruncationWarning
from csrsim.evolve import TWO_LEVEL, evolve_two_level
from csrsim.model import ModelParams, analytic_delay
from csrsim.observables import (
    ObservableSeries,
    average_delay_series,
    delay_argmax,
    delay_report,
    find_local_minima,
    fluctuation_series,
    intensity_series,
    linear_fit,
    partial_delay_harmonic,
    partial_delay_numeric,
    pulse_area,
    quadrature_check,
    single_photon_probe,
)

# Reference statistics of the N = 500 two-level run, measured once with the
# shipped integrator settings and frozen; regressions in the stepper, the
# reporting grid or the quadrature all move these digits.
FROZEN_500 = {
    "tau_argmax": 0.013052313255,
    "tau_partial": 0.013558531473,
    "tau_infty": 0.013585665627,
    "tau_sigma_min": 0.012858669148,
    "sigma_infty": 0.323432531560,
    "intensity_max": 48957.420917,
    "area_end": 500.000609409,
    "probe_p0": 0.556359874665,
    "probe_p1": 0.220939201319,
    "probe_p2": 0.085901795226,
    "probe_p1_argmax": 0.025834155844,
}


def harmonic(n: int) -> float:
    return math.fsum(1.0 / k for k in range(1, n + 1))


def exact_arrival_spread(n: int) -> float:
    """Closed-form sigma(inf): spread of a uniformly chosen photon's arrival.

    The k-th emission happens at a sum of independent exponential holding
    times with rates I(i), i = k..N; a random photon picks k uniformly.
    Mixture moments then follow from suffix sums of 1/I and 1/I^2.
    """
    inv = np.array([1.0 / (k * (n - k + 1)) for k in range(1, n + 1)])
    s1 = np.cumsum(inv[::-1])[::-1]
    s2 = np.cumsum((inv**2)[::-1])[::-1]
    m1 = s1.mean()
    m2 = (s2 + s1**2).mean()
    return math.sqrt(m2 - m1 * m1) / m1


# ---------------------------------------------------------------------------
# frozen reference numbers
# ---------------------------------------------------------------------------

class TestFrozenReference:
    @pytest.mark.parametrize("field", [
        "tau_argmax", "tau_partial", "tau_infty", "tau_sigma_min",
        "sigma_infty", "intensity_max", "area_end",
    ])
    def test_delay_report_value(self, two_level_sweep, field):
        report = two_level_sweep[500]["report"]
        assert getattr(report, field) == pytest.approx(
            FROZEN_500[field], rel=1e-6)

    def test_probe_values(self, two_level_sweep):
        probe = two_level_sweep[500]["probe"]
        assert probe.p0 == pytest.approx(FROZEN_500["probe_p0"], rel=1e-6)
        assert probe.p1 == pytest.approx(FROZEN_500["probe_p1"], rel=1e-6)
        assert probe.p2 == pytest.approx(FROZEN_500["probe_p2"], rel=1e-6)
        assert probe.p1_argmax == pytest.approx(
            FROZEN_500["probe_p1_argmax"], rel=1e-6)
        assert probe.t_probe == pytest.approx(2 * analytic_delay(500),
                                              rel=1e-15)

    def test_quadrature_drift_small(self, two_level_sweep):
        drift = quadrature_check(two_level_sweep[500]["traj"])
        assert 0.0 < drift < 2e-5


# ---------------------------------------------------------------------------
# exact harmonic identities
# ---------------------------------------------------------------------------

class TestHarmonicIdentities:
    def test_full_ladder_sum(self):
        assert partial_delay_harmonic(500, 1, 500) == pytest.approx(
            2 * harmonic(500) / 501, rel=1e-14)

    def test_each_half_gives_half_the_total(self):
        half = harmonic(500) / 501
        assert partial_delay_harmonic(500, 1, 250) == pytest.approx(
            half, rel=1e-14)
        assert partial_delay_harmonic(500, 251, 500) == pytest.approx(
            half, rel=1e-14)

    @given(st.integers(2, 400), st.data())
    @settings(max_examples=150, deadline=None)
    def test_mirror_symmetry(self, n_atoms, data):
        k = data.draw(st.integers(1, n_atoms))
        left = partial_delay_harmonic(n_atoms, 1, k)
        right = partial_delay_harmonic(n_atoms, n_atoms - k + 1, n_atoms)
        assert left == pytest.approx(right, rel=1e-13)

    @given(st.integers(2, 400), st.data())
    @settings(max_examples=150, deadline=None)
    def test_range_additivity(self, n_atoms, data):
        k = data.draw(st.integers(1, n_atoms - 1))
        total = partial_delay_harmonic(n_atoms, 1, n_atoms)
        split = (partial_delay_harmonic(n_atoms, 1, k)
                 + partial_delay_harmonic(n_atoms, k + 1, n_atoms))
        assert split == pytest.approx(total, rel=1e-13)

    def test_even_ladder_upper_half_closed_form(self):
        # ranges that split the ladder evenly telescope to H_N / (N+1)
        for n in (100, 150, 200, 500):
            upper_half = partial_delay_harmonic(n, n // 2 + 1, n)
            assert upper_half == pytest.approx(harmonic(n) / (n + 1),
                                               rel=1e-14)

    def test_odd_ladder_upper_half_closed_form(self):
        # with an odd ladder the midpoint level is counted once, displacing
        # the even-split value by exactly 1/(mid * (N+1))
        for n in (125, 175):
            mid = n // 2 + 1
            expected = (harmonic(n) + 1.0 / mid) / (n + 1)
            assert partial_delay_harmonic(n, mid, n) == pytest.approx(
                expected, rel=1e-14)

    @pytest.mark.parametrize("lo,hi", [(0, 5), (3, 2), (1, 11), (-1, 4)])
    def test_invalid_ranges_rejected(self, lo, hi):
        with pytest.raises(ValueError):
            partial_delay_harmonic(10, lo, hi)


# ---------------------------------------------------------------------------
# numeric estimators against the analytic ladder
# ---------------------------------------------------------------------------

class TestNumericEstimators:
    def test_saturated_delay_is_mean_harmonic(self, two_level_sweep):
        # <tau(inf)> telescopes to H_N / N exactly; anything beyond ~1e-5 is
        # quadrature error
        for n, ref in two_level_sweep.items():
            expected = harmonic(n) / n
            assert ref["report"].tau_infty == pytest.approx(expected,
                                                            rel=2e-5)

    def test_saturated_spread_matches_mixture_form(self, two_level_sweep):
        for n, ref in two_level_sweep.items():
            assert ref["report"].sigma_infty == pytest.approx(
                exact_arrival_spread(n), rel=5e-5)

    def test_half_event_delay_matches_harmonic(self, two_level_sweep):
        for n, ref in two_level_sweep.items():
            expected = partial_delay_harmonic(n, n // 2 + 1, n)
            assert ref["report"].tau_partial == pytest.approx(expected,
                                                              rel=1e-4)

    def test_flux_arrival_times_match_harmonic(self, two_level_sweep):
        traj = two_level_sweep[100]["traj"]
        for level in (1, 25, 51, 100):
            numeric = partial_delay_numeric(traj, level)
            exact = partial_delay_harmonic(100, level, 100)
            assert numeric == pytest.approx(exact, rel=2e-4)

    def test_estimators_mutually_coherent(self, two_level_sweep):
        # four definitions of one delay: they agree to ~10% at any sweep N
        for ref in two_level_sweep.values():
            r = ref["report"]
            values = [r.tau_argmax, r.tau_partial, r.tau_infty,
                      r.tau_sigma_min]
            assert max(values) / min(values) < 1.12

    def test_pulse_area_counts_emitters(self, two_level_sweep):
        for n, ref in two_level_sweep.items():
            assert abs(ref["report"].area_end / n - 1.0) < 5e-3


# ---------------------------------------------------------------------------
# series builders
# ---------------------------------------------------------------------------

class TestSeries:
    def test_intensity_series_mirrors_trajectory(self, two_level_sweep):
        traj = two_level_sweep[100]["traj"]
        series = intensity_series(traj)[TWO_LEVEL]
        assert series.kind == "intensity"
        assert np.array_equal(series.values, traj.mode_intensity())

    def test_area_series_monotone_and_saturating(self, two_level_sweep):
        ref = two_level_sweep[100]
        series = pulse_area(ref["traj"])[TWO_LEVEL]
        assert series.kind == "area"
        assert series.values[0] == 0.0
        assert np.all(np.diff(series.values) >= 0.0)
        assert series.values[-1] == pytest.approx(ref["report"].area_end)

    def test_mean_delay_series_saturates_at_tau_infty(self, two_level_sweep):
        ref = two_level_sweep[100]
        series = average_delay_series(ref["traj"])[TWO_LEVEL]
        assert series.kind == "mean-delay"
        assert math.isnan(series.values[0])
        assert series.values[-1] == pytest.approx(ref["report"].tau_infty,
                                                  rel=1e-12)

    def test_fluctuation_series_saturates_at_sigma_infty(self,
                                                         two_level_sweep):
        ref = two_level_sweep[100]
        series = fluctuation_series(ref["traj"])[TWO_LEVEL]
        assert series.kind == "fluctuation"
        assert math.isnan(series.values[0])
        finite = series.values[np.isfinite(series.values)]
        assert finite[-1] == pytest.approx(ref["report"].sigma_infty,
                                           rel=1e-12)
        assert np.all(finite >= 0.0)


# ---------------------------------------------------------------------------
# extremum location on synthetic series
# ---------------------------------------------------------------------------

def _series(times, values):
    return ObservableSeries("synthetic", "fluctuation", np.asarray(times),
                            np.asarray(values, dtype=float))


class TestPeakRefinement:
    def test_exact_parabola_recovered(self):
        times = np.linspace(0.0, 1.0, 41)
        values = 1.0 - (times - 0.3123) ** 2
        assert delay_argmax(_series(times, values)) == pytest.approx(
            0.3123, abs=1e-12)

    def test_smooth_peak_beats_grid_resolution(self):
        times = np.linspace(0.0, 1.0, 101)
        values = np.exp(-((times - 0.4567) / 0.21) ** 2)
        err = abs(delay_argmax(_series(times, values)) - 0.4567)
        assert err < 1e-3  # grid spacing is 1e-2

    def test_nan_prefix_skipped(self):
        times = np.linspace(0.0, 1.0, 41)
        values = 1.0 - (times - 0.5) ** 2
        values[:5] = np.nan
        assert delay_argmax(_series(times, values)) == pytest.approx(0.5)

    def test_boundary_peak_rejected(self):
        times = np.linspace(0.0, 1.0, 41)
        with pytest.raises(HorizonError):
            delay_argmax(_series(times, times**2))  # max at the last point

    def test_too_few_points_rejected(self):
        with pytest.raises(HorizonError):
            delay_argmax(_series([0.0, 1.0], [1.0, 2.0]))


class TestLocalMinima:
    def test_smooth_oscillation(self):
        times = np.linspace(0.0, 1.0, 201)
        series = _series(times, 2.0 + np.cos(6 * np.pi * times))
        minima = find_local_minima(series)
        assert len(minima) == 3
        for found, expected in zip(minima, (1 / 6, 3 / 6, 5 / 6)):
            assert found == pytest.approx(expected, abs=5e-4)

    @staticmethod
    def _three_dips():
        times = np.round(np.arange(0.0, 0.30001, 0.005), 10)
        values = np.ones_like(times)
        dips = {0.10: 0.5, 0.12: 0.3, 0.25: 0.4}
        for t, v in dips.items():
            values[np.isclose(times, t)] = v
        return _series(times, values)

    def test_close_minima_merge_keeping_the_deeper(self):
        # 0.12 < 1.3 * 0.10, so the first two dips merge; 0.3 < 0.5 keeps
        # the later, deeper one
        minima = find_local_minima(self._three_dips())
        assert minima == pytest.approx([0.12, 0.25], abs=1e-9)

    def test_search_start_masks_early_minima(self):
        minima = find_local_minima(self._three_dips(), t_min=0.2)
        assert minima == pytest.approx([0.25], abs=1e-9)

    def test_monotone_series_has_no_minima(self):
        times = np.linspace(0.0, 1.0, 50)
        assert find_local_minima(_series(times, times + 1.0)) == []

    def test_nan_prefix_skipped(self):
        # the real-world gap: the series is undefined before emission starts
        times = np.linspace(0.0, 1.0, 201)
        values = 2.0 + np.cos(6 * np.pi * times)
        values[:20] = np.nan
        minima = find_local_minima(_series(times, values))
        assert len(minima) == 3
        assert minima[0] == pytest.approx(1 / 6, abs=5e-4)


# ---------------------------------------------------------------------------
# linear fit
# ---------------------------------------------------------------------------

class TestLinearFit:
    def test_exact_line_recovered(self):
        xs = np.array([0.0, 1.0, 2.0, 5.0])
        fit = linear_fit(xs, 3.0 * xs - 2.0)
        assert fit.slope == pytest.approx(3.0, rel=1e-12)
        assert fit.intercept == pytest.approx(-2.0, rel=1e-12)
        assert fit.residual_norm == pytest.approx(0.0, abs=1e-12)

    def test_known_residual(self):
        fit = linear_fit([0.0, 1.0, 2.0], [0.0, 1.0, 0.0])
        assert fit.slope == pytest.approx(0.0, abs=1e-12)
        assert fit.intercept == pytest.approx(1.0 / 3.0, rel=1e-12)
        assert fit.residual_norm == pytest.approx(math.sqrt(6.0) / 3.0,
                                                  rel=1e-12)

    @pytest.mark.parametrize("xs,ys", [
        ([1.0], [2.0]),
        ([1.0, 2.0], [1.0, 2.0, 3.0]),
        ([2.0, 2.0, 2.0], [1.0, 2.0, 3.0]),
    ])
    def test_degenerate_inputs_rejected(self, xs, ys):
        with pytest.raises(ValueError):
            linear_fit(xs, ys)


# ---------------------------------------------------------------------------
# single-photon probe
# ---------------------------------------------------------------------------

class TestProbe:
    def test_probabilities_subnormalized(self, two_level_sweep):
        for ref in two_level_sweep.values():
            probe = ref["probe"]
            for p in (probe.p0, probe.p1, probe.p2):
                assert 0.0 <= p <= 1.0
            assert probe.p0 + probe.p1 + probe.p2 <= 1.0 + 1e-9

    def test_one_excitation_peaks_near_probe_time(self, two_level_sweep):
        # P_1(t) peaks within 10% of 2 tau_D at every sweep size
        for ref in two_level_sweep.values():
            probe = ref["probe"]
            assert abs(probe.p1_argmax / probe.t_probe - 1.0) < 0.10

    def test_short_horizon_rejected(self):
        traj = evolve_two_level(ModelParams(n_atoms=100, t_cap=0.05))
        with pytest.raises(HorizonError):
            single_photon_probe(traj)


# ---------------------------------------------------------------------------
# quadrature gates and truncation warnings
# ---------------------------------------------------------------------------

class TestGates:
    def test_coarse_grid_fails_richardson_gate(self):
        traj = evolve_two_level(ModelParams(n_atoms=100), grid_density=0.01)
        with pytest.raises(QuadratureError, match="quadrature drift"):
            delay_report(traj)

    def test_unabsorbed_tail_fails_tail_gate(self):
        traj = evolve_two_level(ModelParams(n_atoms=100, t_cap=0.1))
        with pytest.raises(QuadratureError, match="tail"):
            delay_report(traj)

    def test_truncated_flux_warns(self):
        traj = evolve_two_level(ModelParams(n_atoms=50, t_cap=0.15))
        with pytest.warns(TruncationWarning):
            partial_delay_numeric(traj, 25)

    def test_converged_flux_does_not_warn(self, two_level_sweep):
        import warnings as _warnings
        traj = two_level_sweep[100]["traj"]
        with _warnings.catch_warnings():
            _warnings.simplefilter("error", TruncationWarning)
            partial_delay_numeric(traj, 51)
