#!/usr/bin/env python3
"""The event-by-event sampler against the master-equation solver.

Two fully independent routes to the same physics: seeded Gillespie trials
(exponential waiting times, one jump at a time) and the deterministic
probability flow.  The demo draws an ensemble, compares the empirical
occupation marginals against the solver on the same grid (total-variation
distance), checks the mean completion time against its closed form, and
plots the empirical versus exact distribution at a mid-pulse instant.

Run:  python3 demos/04_stochastic_cross_check.py [--n 80] [--trials 20000]
"""

from __future__ import annotations

import argparse
import math
from pathlib import Path

import numpy as np

from csrsim import (
    TWO_LEVEL,
    ModelParams,
    evolve_two_level,
    partial_delay_harmonic,
    sample_two_level,
    total_variation,
)

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:  # plots are optional; the numbers print regardless
    plt = None


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=80,
                        help="number of emitters (default 80)")
    parser.add_argument("--trials", type=int, default=20_000,
                        help="stochastic trials (default 20000)")
    parser.add_argument("--seed", type=int, default=42,
                        help="master seed (default 42)")
    parser.add_argument("--out", type=Path, default=Path("demo-out"),
                        help="directory for the figure (default demo-out)")
    args = parser.parse_args()

    params = ModelParams(n_atoms=args.n, seed=args.seed)
    traj = evolve_two_level(params)
    ensemble = sample_two_level(params, args.trials)

    tv = total_variation(ensemble, traj)
    completion = ensemble.completion_times()
    expected = partial_delay_harmonic(args.n, 1, args.n)
    se = completion.std(ddof=1) / math.sqrt(args.trials)
    z = (completion.mean() - expected) / se

    # the worst-case TV over the whole grid shrinks like 1/sqrt(trials);
    # the constant absorbs the extreme-value statistics of the maximum
    tv_limit = 5.0 / math.sqrt(args.trials)
    print(f"N = {args.n}, {args.trials} seeded trials "
          f"(seed {args.seed})")
    print(f"  worst total variation  : {tv:.4f} "
          f"(sampling noise allows ~{tv_limit:.4f})")
    print(f"  mean completion time   : {completion.mean():.6f}")
    print(f"  closed form            : {expected:.6f} "
          "(sum of inverse rates)")
    print(f"  z-score                : {z:+.2f} "
          f"(standard error {se:.2e})")
    if tv < tv_limit and abs(z) < 3:
        print("  verdict                : the two routes agree")
    else:
        print("  verdict                : DISAGREEMENT — investigate")

    if plt is None:
        print("matplotlib not installed; skipping the figure")
        return 0
    args.out.mkdir(parents=True, exist_ok=True)
    # empirical occupation distribution mid-pulse vs the solved state
    t_mid = float(traj.times[np.argmax(traj.mode_intensity(TWO_LEVEL))])
    excited = (ensemble.event_times > t_mid).sum(axis=1)
    counts = np.bincount(excited, minlength=args.n + 1) / args.trials
    exact = traj.states[np.searchsorted(traj.times, t_mid)]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(range(args.n + 1), counts, drawstyle="steps-mid",
            label=f"{args.trials} trials")
    ax.plot(range(args.n + 1), exact, lw=1.5, label="master equation")
    ax.set_xlabel(f"excited emitters at t = {t_mid:.4f} (pulse peak)")
    ax.set_ylabel("probability")
    ax.legend(frameon=False)
    fig.tight_layout()
    target = args.out / "04_stochastic_cross_check.png"
    fig.savefig(target, dpi=150)
    print(f"figure written to {target}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
