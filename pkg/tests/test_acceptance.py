"""Release gate: the numbered end-to-end requirements, one verdict each.

Every test here records a single line into the summary table printed at the
end of the run (``acceptance gate`` section), then asserts.  Two clauses are
known open discrepancies and fail by design rather than being loosened; in
both cases the master-equation solver and the independent event-by-event
sampler agree with each other, so the pinned target values themselves are
what the model does not reproduce:

* the late-time probe occupations (gate 05: measured 0.556/0.221/0.086
  against pinned 0.44/0.24/0.11 at the reference size), and
* the doubly-emptied weight at the end of the reference timeline (gate 07:
  measured 0.7109 by quadrature, 0.7147 +- 0.0096 by sampling, against a
  pinned > 0.99).
"""

from __future__ import annotations

import math

import numpy as np

from conftest import record_gate
from csrsim import (
    CASCADE_LOWER,
    CASCADE_UPPER,
    analytic_delay,
    analytic_delay_spread,
)
from csrsim.cli import main as cli_main
from csrsim.experiments import SweepSpec, run_fig2
from csrsim.observables import (
    linear_fit,
    partial_delay_harmonic,
    partial_delay_numeric,
)

CONSERVATION_LIMIT = 1e-8
REFERENCE_N = 500


def _gate(index: int, name: str, passed: bool, detail: str) -> None:
    record_gate(index, name, passed, detail)
    assert passed, f"gate {index:02d} {name}: {detail}"


def _harmonic(n: int) -> float:
    return math.fsum(1.0 / k for k in range(1, n + 1))


def test_gate_01_conservation(two_level_sweep, cascade_sweep, fig4_study,
                              cascade_slow_ratio, reduction_pair):
    trajectories = [entry["traj"] for entry in two_level_sweep.values()]
    trajectories += [entry["traj"] for entry in cascade_sweep.values()]
    trajectories += [fig4_study["trajectory"], cascade_slow_ratio["traj"],
                     reduction_pair["two_level"], reduction_pair["cascade"]]
    worst = max(float(t.conservation_log.max()) for t in trajectories)
    _gate(1, "probability conserved on every trajectory",
          worst <= CONSERVATION_LIMIT,
          f"worst |sum P - 1| = {worst:.2e} over {len(trajectories)} runs "
          f"(limit {CONSERVATION_LIMIT:.0e})")


def test_gate_02_four_delay_estimators(two_level_sweep):
    report = two_level_sweep[REFERENCE_N]["report"]
    target = analytic_delay(REFERENCE_N)
    estimates = {
        "peak": report.tau_argmax,
        "half-event": report.tau_partial,
        "saturated": report.tau_infty,
        "sigma-min": report.tau_sigma_min,
    }
    worst = max(abs(value / target - 1.0) for value in estimates.values())
    peak_offset = abs(report.tau_argmax - 0.013)
    _gate(2, "four delay estimators agree at the reference size",
          worst <= 0.10 and peak_offset <= 0.001,
          ", ".join(f"{k}={v:.6f}" for k, v in estimates.items())
          + f" vs {target:.6f} (worst {worst:.1%}, limit 10%); "
            f"peak within {peak_offset:.4f} of 0.013 (limit 0.001)")


def test_gate_03_harmonic_identities(two_level_sweep):
    worst_exact = 0.0
    worst_numeric = 0.0
    for n, entry in two_level_sweep.items():
        h = _harmonic(n)
        mid = n // 2 + 1
        # odd ladders have no exact half-way split; the first level past the
        # midpoint adds its own inverse rate to the closed form
        half_expected = (h + (1.0 / mid if n % 2 else 0.0)) / (n + 1)
        full_expected = 2.0 * h / (n + 1)
        worst_exact = max(
            worst_exact,
            abs(partial_delay_harmonic(n, mid, n) / half_expected - 1.0),
            abs(partial_delay_harmonic(n, 1, n) / full_expected - 1.0))
        traj = entry["traj"]
        worst_numeric = max(
            worst_numeric,
            abs(partial_delay_numeric(traj, mid) / half_expected - 1.0),
            abs(partial_delay_numeric(traj, 1) / full_expected - 1.0))
    sizes = sorted(two_level_sweep)
    _gate(3, "half- and full-ladder harmonic identities",
          worst_exact <= 1e-12 and worst_numeric <= 5e-3,
          f"closed form dev {worst_exact:.1e} (limit 1e-12), quadrature dev "
          f"{worst_numeric:.2%} (limit 0.5%), N = {sizes[0]}..{sizes[-1]}")


def test_gate_04_pulse_areas(two_level_sweep, cascade_sweep):
    deviations = [abs(entry["report"].area_end / n - 1.0)
                  for n, entry in two_level_sweep.items()]
    for n, entry in cascade_sweep.items():
        deviations += [abs(rep.area_end / n - 1.0)
                       for rep in entry["reports"].values()]
    worst = max(deviations)
    _gate(4, "every pulse integrates to one photon per atom",
          worst <= 5e-3,
          f"worst |A(end)/N - 1| = {worst:.2e} over {len(deviations)} "
          "pulses (limit 0.5%)")


def test_gate_05_probe_occupations(two_level_sweep):
    # open discrepancy: solver and sampler agree on 0.556/0.221/0.086,
    # far from the pinned triple, so this clause fails by design
    probe = two_level_sweep[REFERENCE_N]["probe"]
    pinned = {"p0": 0.44, "p1": 0.24, "p2": 0.11}
    measured = {"p0": probe.p0, "p1": probe.p1, "p2": probe.p2}
    passed = all(abs(measured[key] - want) <= 0.01
                 for key, want in pinned.items())
    _gate(5, "single-excitation probe at twice the delay", passed,
          ", ".join(f"{key}={measured[key]:.4f} (pinned {want}+-0.01)"
                    for key, want in pinned.items()))


def test_gate_05_probe_peak_location(two_level_sweep):
    probe = two_level_sweep[REFERENCE_N]["probe"]
    deviation = abs(probe.p1_argmax / probe.t_probe - 1.0)
    _gate(5, "single-excitation probe at twice the delay",
          deviation <= 0.10,
          f"P1 peaks at {probe.p1_argmax:.6f} vs probe time "
          f"{probe.t_probe:.6f} ({deviation:.1%}, limit 10%)")


def test_gate_06_scaling_fits(two_level_sweep):
    sizes = sorted(two_level_sweep)
    peaks = [two_level_sweep[n]["report"].intensity_max for n in sizes]
    peak_fit = linear_fit([float(n) ** 2 for n in sizes], peaks)
    peak_residual = peak_fit.residual_norm / float(np.linalg.norm(peaks))
    spreads = [two_level_sweep[n]["report"].sigma_infty for n in sizes]
    spread_fit = linear_fit([analytic_delay_spread(n) for n in sizes],
                            spreads)
    _gate(6, "peak-intensity and delay-spread scaling laws",
          peak_residual < 1e-2 and spread_fit.residual_norm < 0.01,
          f"I_max ~ N^2 relative residual {peak_residual:.2e} (limit 1e-2); "
          f"spread-vs-asymptote residual norm {spread_fit.residual_norm:.2e} "
          "(limit 1e-2)")


def test_gate_07_timeline_marks(fig4_study):
    checks = fig4_study["checks"]
    clauses = ("upper_peak_time", "lower_sigma_first_minimum",
               "lower_peak_time", "lower_mean_delay")
    passed = all(checks[name]["passed"] for name in clauses)
    _gate(7, "two-pulse timeline at the reference point", passed,
          ", ".join(f"{name}={checks[name]['value']:.6g}"
                    for name in clauses))


def test_gate_07_timeline_final_absorption(fig4_study):
    # open discrepancy: quadrature leaves 0.7109 in the doubly-emptied
    # state at the end of the timeline (a 1e5-trial sampler concurs with
    # 0.7147 +- 0.0096), short of the pinned > 0.99
    check = fig4_study["checks"]["absorbed_at_timeline_end"]
    _gate(7, "two-pulse timeline at the reference point", check["passed"],
          f"doubly-emptied weight {check['value']:.4f} at the timeline end "
          f"(pinned {check['requirement']})")


def test_gate_08_scaled_delay_gap(ratio_reports):
    tau_ref = analytic_delay(REFERENCE_N)
    ratios = {}
    for alpha, reports in sorted(ratio_reports.items()):
        gap = (reports[CASCADE_LOWER].tau_infty
               - reports[CASCADE_UPPER].tau_infty)
        ratios[alpha] = alpha * gap / tau_ref
    _gate(8, "lower-pulse delay scales with the inverse rate ratio",
          max(abs(r - 1.0) for r in ratios.values()) <= 0.10,
          ", ".join(f"alpha={alpha:.4g}: {ratio:.4f}"
                    for alpha, ratio in ratios.items())
          + " (wanted 1 +- 10%)")


def test_gate_09_frozen_lower_mode_reduction(reduction_pair):
    two = reduction_pair["two_level"]
    frozen = reduction_pair["cascade"]
    shared = two.times.size - 1  # final sample is the absorbing-stop time
    assert np.array_equal(two.times[:shared], frozen.times[:shared])
    upper = frozen.marginals["upper"]
    worst = float(np.abs(upper[:shared] - two.states[:shared]).max())
    t_stop = float(two.times[-1])
    interpolated = np.array([np.interp(t_stop, frozen.times, upper[:, k])
                             for k in range(upper.shape[1])])
    worst = max(worst, float(np.abs(interpolated - two.states[-1]).max()))
    _gate(9, "frozen lower transition reproduces the single ladder",
          worst <= 1e-7,
          f"worst pointwise occupation gap {worst:.2e} (limit 1e-7)")


def test_gate_10_stochastic_cross_check(oracle_two_level, oracle_cascade):
    tv_single = oracle_two_level["tv"]
    tv_cascade = oracle_cascade["tv"]
    completion = oracle_two_level["ensemble"].completion_times()
    expected = partial_delay_harmonic(100, 1, 100)
    standard_error = float(completion.std(ddof=1)
                           / math.sqrt(completion.size))
    z_score = (float(completion.mean()) - expected) / standard_error
    _gate(10, "event-by-event sampler agrees with the solver",
          tv_single < 0.01 and tv_cascade < 0.01 and abs(z_score) <= 3.0,
          f"total variation {tv_single:.4f} (single ladder) / "
          f"{tv_cascade:.4f} (cascade), limit 0.01; mean completion "
          f"z = {z_score:+.2f} (limit +-3)")


def test_gate_11_byte_identical_reruns(tmp_path):
    outputs = []
    for tag in ("first", "second"):
        out = tmp_path / tag
        run_fig2(SweepSpec(n_values=(100, 200), alpha=0.0, outputs=out,
                           which_figure="fig2"))
        code = cli_main(["oracle", "--n", "50", "--trials", "2000",
                         "--seed", "11", "--dump-events",
                         "--out", str(out / "oracle")])
        assert code == 0
        outputs.append(out)
    names = sorted(p.relative_to(outputs[0]).as_posix()
                   for p in outputs[0].rglob("*") if p.is_file())
    assert names == sorted(p.relative_to(outputs[1]).as_posix()
                           for p in outputs[1].rglob("*") if p.is_file())
    differing = [name for name in names
                 if (outputs[0] / name).read_bytes()
                 != (outputs[1] / name).read_bytes()]
    _gate(11, "identical seed and config reproduce identical bytes",
          bool(names) and not differing,
          f"{len(names)} files compared byte-for-byte"
          + (f"; differing: {differing}" if differing else ""))
