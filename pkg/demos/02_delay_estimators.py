#!/usr/bin/env python3
"""Four ways to measure the pulse delay, converging as N grows.

The delay of the collective pulse can be read off four different curves:
the intensity peak, the mean arrival time of the half-way emission event,
the saturated mean delay, and the location of the fluctuation minimum.
This demo sweeps the atom number, prints all four next to the closed form
(E0 + ln N) / N, and plots their ratios to it.

Run:  python3 demos/02_delay_estimators.py [--sizes 50 100 200 400]
"""

from __future__ import annotations

import argparse
from pathlib import Path

from csrsim import (
    TWO_LEVEL,
    ModelParams,
    analytic_delay,
    delay_report,
    evolve_two_level,
)

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:  # plots are optional; the numbers print regardless
    plt = None

ESTIMATORS = ("tau_argmax", "tau_partial", "tau_infty", "tau_sigma_min")
LABELS = {
    "tau_argmax": "intensity peak",
    "tau_partial": "half-way event",
    "tau_infty": "saturated mean",
    "tau_sigma_min": "fluctuation minimum",
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", type=int, nargs="+",
                        default=(50, 100, 200, 400),
                        help="atom numbers to sweep (default 50 100 200 400)")
    parser.add_argument("--out", type=Path, default=Path("demo-out"),
                        help="directory for the figure (default demo-out)")
    args = parser.parse_args()

    rows = {}
    for n in args.sizes:
        traj = evolve_two_level(ModelParams(n_atoms=n))
        rows[n] = delay_report(traj)[TWO_LEVEL]

    header = f"{'N':>6} {'closed form':>12} " + " ".join(
        f"{LABELS[key]:>20}" for key in ESTIMATORS)
    print(header)
    for n, report in rows.items():
        cells = " ".join(f"{getattr(report, key):>20.6f}"
                         for key in ESTIMATORS)
        print(f"{n:>6} {analytic_delay(n):>12.6f} {cells}")
    print("\nall four land within a few percent of the closed form and")
    print("tighten as N grows; the fluctuation minimum sits slightly early,")
    print("the saturated mean slightly late (it averages the full tail)")

    if plt is None:
        print("matplotlib not installed; skipping the figure")
        return 0
    args.out.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for key in ESTIMATORS:
        ax.plot(list(rows), [getattr(rows[n], key) / analytic_delay(n)
                             for n in rows], "o-", label=LABELS[key])
    ax.axhline(1.0, c="gray", lw=0.8)
    ax.set_xscale("log")
    ax.set_xlabel("atom number N")
    ax.set_ylabel("estimate / closed form")
    ax.legend(frameon=False)
    fig.tight_layout()
    target = args.out / "02_delay_estimators.png"
    fig.savefig(target, dpi=150)
    print(f"figure written to {target}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
