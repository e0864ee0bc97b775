"""Delay and fluctuation statistics computed on top of trajectories.

Every quantity here is a functional of the emission-rate series of one
transition ("mode").  With ``I(t)`` the mean emission rate, the incomplete
pulse area is ``A(t) = integral of I``, and delay statistics are moments of
the arrival-time measure ``I(t') dt' / A(t)``:

    mean delay   <tau(t)> = M1(t) / A(t),          M_k(t) = integral t'^k I(t')
    fluctuation  sigma(t) = sqrt(M2/A - (M1/A)^2) / <tau(t)>

Four point estimates of the delay are derived per mode: the refined peak of
``I(t)`` (``tau_argmax``), the mean arrival time of the half-way emission
event (``tau_partial``), the saturated mean delay (``tau_infty``), and the
location of the fluctuation minimum (``tau_sigma_min``).

All integrals are cumulative trapezoids on the trajectory's dense output
grid; a half-resolution Richardson check guards the quadrature error.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import HorizonError, QuadratureError, TruncationWarning
from .evolve import CASCADE_LOWER, TWO_LEVEL
from .model import analytic_delay, two_level_rate

# Area below this is treated as "no emission yet"; the delay measure is
# undefined there and series report NaN.
AREA_GUARD = 1e-300

# Fluctuation minima are searched only where A(t) exceeds this fraction of
# the final area; the delay measure is ill-conditioned at vanishing area.
SUPPORT_FRACTION = 1e-3

# Local minima closer than this factor in time are merged (deeper one kept).
MERGE_FACTOR = 1.3

# A negative delay variance beyond this is a quadrature failure, not rounding.
VARIANCE_FLOOR = -1e-12

# Full-grid vs half-grid cumulative integrals must agree to this relative
# tolerance, or the output grid is too coarse for the reported statistics.
RICHARDSON_TOL = 2e-3

# Unabsorbed probability at the end of the run may shift the mean delay by at
# most (leftover * t_end); that bound must stay below this fraction of it.
TAIL_FRACTION = 1e-3


# ---------------------------------------------------------------------------
# result containers
# ---------------------------------------------------------------------------

@dataclass
class ObservableSeries:
    """One scalar time series tied to a trajectory grid.

    ``kind`` is one of ``"intensity"``, ``"area"``, ``"mean-delay"``,
    ``"fluctuation"``; ``mode`` names the transition the series belongs to.
    Points where the statistic is undefined (no emitted area yet) hold NaN.
    """

    mode: str
    kind: str
    times: np.ndarray
    values: np.ndarray


class LinearFit(NamedTuple):
    slope: float
    intercept: float
    residual_norm: float


@dataclass(frozen=True)
class ProbeResult:
    """Ground-state ladder occupations at the single-photon precondition time.

    ``p0``, ``p1``, ``p2`` are the populations of the lowest three excitation
    counts interpolated at ``t_probe = 2 (E0 + ln N) / N``; ``p1_argmax`` is
    the refined time at which the one-excitation population peaks.
    """

    p0: float
    p1: float
    p2: float
    t_probe: float
    p1_argmax: float


@dataclass(frozen=True)
class DelayReport:
    """The four delay estimators and companion statistics for one mode.

    ``sigma_minima`` lists every refined fluctuation-minimum time on the
    supported region, earliest first (the lower cascade mode genuinely has
    two).  For lower cascade modes ``alpha_scaled`` repeats the four delays
    multiplied by the branching ratio, mapping them onto the upper-mode
    scale; it is None otherwise.
    """

    mode: str
    tau_argmax: float
    tau_partial: float
    tau_infty: float
    tau_sigma_min: float
    sigma_infty: float
    intensity_max: float
    area_end: float
    sigma_minima: list[float]
    alpha_scaled: dict[str, float] | None = None


# ---------------------------------------------------------------------------
# series builders
# ---------------------------------------------------------------------------

def _moments(times: np.ndarray, intensity: np.ndarray):
    """Cumulative 0th/1st/2nd time-moments of an intensity series."""
    area = cumulative_trapezoid(intensity, times, initial=0.0)
    m1 = cumulative_trapezoid(times * intensity, times, initial=0.0)
    m2 = cumulative_trapezoid(times**2 * intensity, times, initial=0.0)
    return area, m1, m2


def intensity_series(traj) -> dict[str, ObservableSeries]:
    """Mean emission rate <I(t)> for every mode of a trajectory."""
    return {
        mode: ObservableSeries(mode, "intensity", traj.times,
                               traj.mode_intensity(mode))
        for mode in traj.modes
    }


def pulse_area(traj) -> dict[str, ObservableSeries]:
    """Incomplete pulse area A(t), the cumulative integral of the rate."""
    out = {}
    for mode in traj.modes:
        area = cumulative_trapezoid(traj.mode_intensity(mode), traj.times,
                                    initial=0.0)
        out[mode] = ObservableSeries(mode, "area", traj.times, area)
    return out


def average_delay_series(traj) -> dict[str, ObservableSeries]:
    """Running mean delay <tau(t)> = M1(t)/A(t) per mode (NaN before support)."""
    out = {}
    for mode in traj.modes:
        area, m1, _ = _moments(traj.times, traj.mode_intensity(mode))
        values = np.full_like(area, np.nan)
        ok = area > AREA_GUARD
        values[ok] = m1[ok] / area[ok]
        out[mode] = ObservableSeries(mode, "mean-delay", traj.times, values)
    return out


def fluctuation_series(traj) -> dict[str, ObservableSeries]:
    """Normalized delay spread sigma(t) per mode.

    Raises QuadratureError if the delay variance dips below the rounding
    floor; negative values inside the floor are clipped to zero.
    """
    out = {}
    for mode in traj.modes:
        area, m1, m2 = _moments(traj.times, traj.mode_intensity(mode))
        values = np.full_like(area, np.nan)
        ok = area > AREA_GUARD
        mean = m1[ok] / area[ok]
        var = m2[ok] / area[ok] - mean**2
        if var.size and var.min() < VARIANCE_FLOOR:
            raise QuadratureError(
                f"delay variance reached {var.min():.3e} for mode {mode!r}; "
                "the output grid is too coarse")
        var = np.clip(var, 0.0, None)
        with np.errstate(divide="ignore", invalid="ignore"):
            values[ok] = np.where(mean > 0, np.sqrt(var) / mean, np.nan)
        out[mode] = ObservableSeries(mode, "fluctuation", traj.times, values)
    return out


# ---------------------------------------------------------------------------
# extremum location
# ---------------------------------------------------------------------------

def _refine_parabolic(times, values, i, find_max):
    """Vertex of the parabola through points i-1, i, i+1 (Newton form).

    Returns (t*, v*); falls back to the grid point when the three points are
    collinear or the vertex escapes the bracket.
    """
    s0, s2 = times[i - 1] - times[i], times[i + 1] - times[i]
    v0, v1, v2 = values[i - 1], values[i], values[i + 1]
    d01 = (v1 - v0) / (0.0 - s0)
    d12 = (v2 - v1) / s2
    curv = (d12 - d01) / (s2 - s0)
    if (find_max and curv >= 0.0) or (not find_max and curv <= 0.0):
        return times[i], v1
    s_star = 0.5 * s0 - d01 / (2.0 * curv)
    if not s0 <= s_star <= s2:
        return times[i], v1
    v_star = v0 + d01 * (s_star - s0) + curv * (s_star - s0) * s_star
    return times[i] + s_star, v_star


def _refined_peak(times: np.ndarray, values: np.ndarray):
    """Refined (time, value) of the global maximum; boundary peaks raise."""
    finite = np.flatnonzero(np.isfinite(values))
    if finite.size < 3:
        raise HorizonError("series too short to locate a maximum")
    i = finite[np.argmax(values[finite])]
    if i == finite[0] or i == finite[-1]:
        raise HorizonError(
            f"maximum sits at the grid boundary (t = {times[i]:.6g}); "
            "the time horizon does not bracket the peak")
    return _refine_parabolic(times, values, i, find_max=True)


def delay_argmax(series: ObservableSeries) -> float:
    """Time of the series maximum, parabolic-refined over three grid points."""
    t_peak, _ = _refined_peak(series.times, series.values)
    return t_peak


def _local_minima_pairs(times, values, t_min=None):
    """Refined (time, value) pairs of interior local minima, merged."""
    mask = np.isfinite(values)
    if t_min is not None:
        mask &= times >= t_min
    idx = np.flatnonzero(mask)
    pairs = []
    for k in range(1, idx.size - 1):
        i_prev, i, i_next = idx[k - 1], idx[k], idx[k + 1]
        if values[i_prev] > values[i] <= values[i_next]:
            # a flat plateau is recorded once, at its left edge
            pairs.append(_refine_parabolic(times, values, i, find_max=False))
    merged: list[tuple[float, float]] = []
    for t, v in pairs:
        if merged and t < MERGE_FACTOR * merged[-1][0]:
            if v < merged[-1][1]:
                merged[-1] = (t, v)
            continue
        merged.append((t, v))
    return merged


def find_local_minima(series: ObservableSeries, *,
                      t_min: float | None = None) -> list[float]:
    """Interior local-minimum times of a series, earliest first.

    Minima closer than a factor ``MERGE_FACTOR`` in time collapse into the
    deeper one.  ``t_min`` restricts the search (callers typically pass the
    time where the pulse area reaches ``SUPPORT_FRACTION`` of its final
    value, cutting off the ill-conditioned startup).  NaN gaps are skipped;
    a strictly monotone series yields an empty list.
    """
    return [t for t, _ in _local_minima_pairs(series.times, series.values,
                                              t_min)]


# ---------------------------------------------------------------------------
# delay estimators
# ---------------------------------------------------------------------------

def partial_delay_harmonic(n_atoms: int, n_low: int, n_high: int) -> float:
    """Exact sum of inverse emission rates over an excitation range.

    Computes sum_{n=n_low}^{n_high} 1 / (n (N - n + 1)): the mean time the
    deterministic rate ladder spends traversing those levels.  Summing the
    first half of the ladder gives the half-way delay H_N / (N + 1); the
    full range gives twice that.
    """
    if not 1 <= n_low <= n_high <= n_atoms:
        raise ValueError(
            f"need 1 <= n_low <= n_high <= {n_atoms}, got [{n_low}, {n_high}]")
    return math.fsum(1.0 / two_level_rate(n, n_atoms)
                     for n in range(n_low, n_high + 1))


def partial_delay_numeric(traj, n: int) -> float:
    """Mean arrival time of the n-th downward emission, by quadrature.

    Integrates t * Q_n(t) with Q_n = I(n) P_n(t), the flux through level n.
    Each history crosses the level exactly once, so Q_n integrates to one
    and the result is directly comparable with ``partial_delay_harmonic``.
    Warns if the trajectory ends before Q_n has decayed.
    """
    q = two_level_rate(n, traj.params.n_atoms) * traj.prob(n)
    peak = q.max()
    if peak > 0 and q[-1] > 1e-8 * peak:
        warnings.warn(
            f"flux through level n={n} not converged at the end of the run "
            f"(Q_n(end)/max = {q[-1] / peak:.2e}); delay is underestimated",
            TruncationWarning, stacklevel=2)
    return float(np.trapezoid(traj.times * q, traj.times))


def _half_event_delay(traj, mode: str) -> float:
    """Mean arrival time of the half-way emission event for one mode."""
    q = traj.half_transition_density(mode)
    peak = q.max()
    if peak > 0 and q[-1] > 1e-8 * peak:
        warnings.warn(
            f"half-way flux for mode {mode!r} not converged at the end of "
            f"the run (q(end)/max = {q[-1] / peak:.2e})",
            TruncationWarning, stacklevel=3)
    return float(np.trapezoid(traj.times * q, traj.times))


def single_photon_probe(traj) -> ProbeResult:
    """Lowest-ladder occupations at t_probe = 2 (E0 + ln N) / N.

    At this time the ladder has, on average, one emission left; the returned
    triple (p0, p1, p2) quantifies how sharply the one-excitation state is
    selected.  Also locates the peak of P_1(t), which sits near t_probe.
    """
    t_probe = 2.0 * analytic_delay(traj.params.n_atoms)
    if traj.times[-1] < t_probe:
        raise HorizonError(
            f"trajectory ends at t = {traj.times[-1]:.6g}, before the probe "
            f"time {t_probe:.6g}")
    p0, p1, p2 = (float(np.interp(t_probe, traj.times, traj.prob(k)))
                  for k in range(3))
    t_peak, _ = _refined_peak(traj.times, traj.prob(1))
    return ProbeResult(p0, p1, p2, t_probe, t_peak)


def linear_fit(xs, ys) -> LinearFit:
    """Least-squares line through (xs, ys) with the Euclidean residual norm."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1 or xs.size < 2:
        raise ValueError("need two equal-length 1-D arrays of >= 2 points")
    if np.ptp(xs) == 0.0:
        raise ValueError("all abscissae are equal; the slope is undefined")
    design = np.column_stack([xs, np.ones_like(xs)])
    coef, _, _, _ = np.linalg.lstsq(design, ys, rcond=None)
    residual = float(np.linalg.norm(ys - design @ coef))
    return LinearFit(float(coef[0]), float(coef[1]), residual)


# ---------------------------------------------------------------------------
# quadrature self-checks and the combined report
# ---------------------------------------------------------------------------

def quadrature_check(traj) -> float:
    """Worst relative drift of A(end), M1(end) on a half-resolution grid.

    Trapezoid error scales with the square of the grid spacing, so halving
    the resolution magnifies it ~4x; agreement of the two estimates bounds
    the quadrature error of every delay statistic built here.
    """
    times = traj.times
    idx = np.arange(0, times.size, 2)
    if idx[-1] != times.size - 1:
        idx = np.append(idx, times.size - 1)
    worst = 0.0
    for mode in traj.modes:
        rate = traj.mode_intensity(mode)
        for weight in (np.ones_like(times), times):
            full = np.trapezoid(weight * rate, times)
            half = np.trapezoid((weight * rate)[idx], times[idx])
            if full > 0:
                worst = max(worst, abs(full - half) / full)
    return worst


def delay_report(traj) -> dict[str, DelayReport]:
    """All four delay estimators plus spread statistics, per mode.

    Validates the quadrature (half-grid Richardson check) and the tail
    truncation (leftover probability times the end time must be negligible
    against the delay) before reporting.  The headline ``tau_sigma_min`` is
    the deepest fluctuation minimum, except for the lower cascade mode where
    it is the minimum nearest that mode's own saturated delay (the earlier
    minimum there is an echo of the upper pulse).
    """
    drift = quadrature_check(traj)
    if drift > RICHARDSON_TOL:
        raise QuadratureError(
            f"half-grid quadrature drift {drift:.2e} exceeds "
            f"{RICHARDSON_TOL:.0e}; rerun with a denser output grid")
    absorbed_end = float(np.asarray(traj.absorbed)[-1])
    leftover = max(0.0, 1.0 - absorbed_end)
    t_end = float(traj.times[-1])

    # One shared support time: fluctuation curves are undefined ratios until
    # the pulse train has begun, and a late mode's early structure (the echo
    # of the earlier pulse) must not be masked by its own slow start.
    total_rate = sum(traj.mode_intensity(mode) for mode in traj.modes)
    total_area = cumulative_trapezoid(total_rate, traj.times, initial=0.0)
    t_support = float(traj.times[np.searchsorted(
        total_area, SUPPORT_FRACTION * total_area[-1])])

    sigma = fluctuation_series(traj)
    reports = {}
    for mode in traj.modes:
        rate = traj.mode_intensity(mode)
        area, m1, _ = _moments(traj.times, rate)
        if area[-1] <= 0:
            raise HorizonError(f"mode {mode!r} emitted no area; no delay "
                               "statistics exist")
        tau_infty = float(m1[-1] / area[-1])
        if leftover * t_end > TAIL_FRACTION * tau_infty:
            raise QuadratureError(
                f"unabsorbed tail {leftover:.2e} at t = {t_end:.4g} could "
                f"shift the mode {mode!r} delay by more than "
                f"{TAIL_FRACTION:.1%}; raise t_cap or tighten absorb_eps")
        t_peak, peak_rate = _refined_peak(traj.times, rate)
        sig = sigma[mode]
        finite_sigma = sig.values[np.isfinite(sig.values)]
        sigma_infty = float(finite_sigma[-1])
        minima = _local_minima_pairs(sig.times, sig.values, t_support)
        if not minima:
            raise HorizonError(
                f"no interior fluctuation minimum for mode {mode!r} within "
                "the covered horizon")
        if mode == CASCADE_LOWER:
            t_min_est = min(minima, key=lambda tv: abs(tv[0] - tau_infty))[0]
        else:
            t_min_est = min(minima, key=lambda tv: tv[1])[0]
        scaled = None
        if mode == CASCADE_LOWER:
            alpha = traj.params.alpha
            scaled = {
                "tau_argmax": alpha * t_peak,
                "tau_partial": alpha * _half_event_delay(traj, mode),
                "tau_infty": alpha * tau_infty,
                "tau_sigma_min": alpha * t_min_est,
            }
        reports[mode] = DelayReport(
            mode=mode,
            tau_argmax=float(t_peak),
            tau_partial=_half_event_delay(traj, mode),
            tau_infty=tau_infty,
            tau_sigma_min=float(t_min_est),
            sigma_infty=sigma_infty,
            intensity_max=float(peak_rate),
            area_end=float(area[-1]),
            sigma_minima=[t for t, _ in minima],
            alpha_scaled=scaled,
        )
    return reports
