"""Exact stochastic sampler of the same jump processes, used as an oracle.

Both master equations describe classical Markov pure-jump processes, so
Gillespie sampling is exact: starting from the fully excited state, draw an
exponential waiting time at the total exit rate, pick the transition in
proportion to its rate, repeat until absorption.  Sampling shares nothing
with the deterministic integrator beyond the rate definitions, which makes
ensemble statistics an independent check of the solver and of every delay
estimator built on top of it.

Stream contract (reproducibility):
    Trials are processed in chunks of ``CHUNK_TRIALS``.  Chunk ``i`` uses a
    counter-based generator derived from the master seed by ``i`` jumps
    (``Philox(key=seed).jumped(i)``), so any chunk can be regenerated in
    isolation and results do not depend on scheduling.  Within a chunk,
    step ``k`` draws one full-width row of exponentials (``CHUNK_TRIALS``
    values, even when the final chunk holds fewer trials, so a trial's
    stream depends only on the master seed and its index), followed by one
    full-width row of selection uniforms *only when the trial set has two
    open transitions* (cascade with ``alpha > 0``).  Consequently the
    cascade sampler at ``alpha = 0`` consumes the identical stream as the
    two-level sampler and reproduces its event times bit for bit, and a
    larger batch extends a smaller one without disturbing it.

Every trial of the two-level process takes exactly N steps, and every trial
of the cascade (``alpha > 0``) exactly 2N steps, so chunks advance in lock
step with no per-trial masking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .evolve import CASCADE_LOWER, CASCADE_UPPER, TWO_LEVEL
from .model import ModelParams, two_level_rate_array

CHUNK_TRIALS = 4096

# Tag values stored per event; index into ``TrialEnsemble.modes``.
_UPPER = 0
_LOWER = 1


# ---------------------------------------------------------------------------
# ensemble container
# ---------------------------------------------------------------------------

@dataclass
class TrialEnsemble:
    """Event logs of independent Gillespie trials.

    ``event_times[i, k]`` is the time of trial i's k-th event (strictly
    increasing along a row); ``event_tags[i, k]`` indexes ``modes``.  Two-
    level ensembles hold N events per trial, cascades 2N (N per mode).
    """

    params: ModelParams
    n_trials: int
    seed: int
    modes: tuple[str, ...]
    event_times: np.ndarray   # (n_trials, n_events) float64
    event_tags: np.ndarray    # (n_trials, n_events) uint8
    summary: dict | None = field(default=None, repr=False)

    def completion_times(self) -> np.ndarray:
        """Per-trial time of the final event (full de-excitation)."""
        return self.event_times[:, -1]

    def mode_event_times(self, mode: str) -> np.ndarray:
        """Ordered event times of one mode, shape (n_trials, events/mode)."""
        tag = self.modes.index(mode)
        if len(self.modes) == 1:
            return self.event_times
        mask = self.event_tags == tag
        return self.event_times[mask].reshape(self.n_trials, -1)


def _chunk_generator(seed: int, chunk_index: int) -> np.random.Generator:
    bitgen = np.random.Philox(key=seed)
    if chunk_index:
        bitgen = bitgen.jumped(chunk_index)
    return np.random.Generator(bitgen)


def _chunk_sizes(n_trials: int):
    sizes = [CHUNK_TRIALS] * (n_trials // CHUNK_TRIALS)
    if n_trials % CHUNK_TRIALS:
        sizes.append(n_trials % CHUNK_TRIALS)
    return sizes


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------

def sample_two_level(params: ModelParams, n_trials: int) -> TrialEnsemble:
    """Independent trials of the single-ladder death process.

    Each trial is a fixed descent N -> N-1 -> ... -> 0, so the only
    randomness is the N waiting times; they are drawn as one exponential
    block per chunk and scaled by the per-level rates.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    n = params.n_atoms
    ladder = two_level_rate_array(n)[n:0:-1]        # I(N), I(N-1), ..., I(1)
    blocks = []
    for ci, size in enumerate(_chunk_sizes(n_trials)):
        rng = _chunk_generator(params.seed, ci)
        # always draw the full chunk width: trial streams must not depend
        # on how full the final chunk happens to be
        draws = rng.standard_exponential((n, CHUNK_TRIALS))[:, :size]
        blocks.append(np.cumsum(draws / ladder[:, None], axis=0).T)
    times = np.vstack(blocks)
    tags = np.zeros_like(times, dtype=np.uint8)
    return TrialEnsemble(params, n_trials, params.seed, (TWO_LEVEL,),
                         times, tags)


def sample_cascade(params: ModelParams, n_trials: int) -> TrialEnsemble:
    """Independent trials of the two-transition cascade process.

    Every step fires exactly one event, so a trial takes 2N steps (n and m
    each walk from N to 0).  With ``alpha = 0`` the lower transition never
    opens; the sampler then performs N upper steps on the identical stream
    as ``sample_two_level`` (see the module docstring).
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    n_atoms, alpha = params.n_atoms, params.alpha
    n_steps = 2 * n_atoms if alpha > 0 else n_atoms
    time_blocks, tag_blocks = [], []
    for ci, size in enumerate(_chunk_sizes(n_trials)):
        rng = _chunk_generator(params.seed, ci)
        n = np.full(size, n_atoms, dtype=np.int64)
        m = np.full(size, n_atoms, dtype=np.int64)
        t = np.zeros(size)
        times = np.empty((n_steps, size))
        tags = np.empty((n_steps, size), dtype=np.uint8)
        for k in range(n_steps):
            upper_rate = (n * (m - n + 1)).astype(float)
            lower_rate = alpha * ((m - n) * (n_atoms - m + 1)).astype(float)
            total = upper_rate + lower_rate
            # full-width draws, as in the two-level sampler
            t = t + rng.standard_exponential(CHUNK_TRIALS)[:size] / total
            if alpha > 0:
                upper = rng.random(CHUNK_TRIALS)[:size] * total < upper_rate
            else:
                upper = np.ones(size, dtype=bool)
            n -= upper
            m -= ~upper
            times[k] = t
            tags[k] = np.where(upper, _UPPER, _LOWER)
        time_blocks.append(times.T)
        tag_blocks.append(tags.T)
    return TrialEnsemble(params, n_trials, params.seed,
                         (CASCADE_UPPER, CASCADE_LOWER),
                         np.vstack(time_blocks), np.vstack(tag_blocks))


# ---------------------------------------------------------------------------
# ensemble statistics
# ---------------------------------------------------------------------------

def empirical_delay(ensemble: TrialEnsemble, mode: str) -> tuple[float, float]:
    """Mean and normalized spread of the half-population crossing time.

    The per-trial delay is the time of event ceil(N/2) of the given mode:
    the moment that ladder first reaches half occupation.  Returns
    ``(mean, std/mean)`` with the population convention for std, so a
    single-trial ensemble reports exactly zero spread.
    """
    k_half = (ensemble.params.n_atoms + 1) // 2
    delays = ensemble.mode_event_times(mode)[:, k_half - 1]
    mean = float(delays.mean())
    return mean, float(delays.std(ddof=0) / mean)


def _ladder_marginal(times: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Distribution of the remaining count N - #events at each grid time.

    ``times`` holds per-trial ordered event times of one ladder, shape
    (trials, N).  Column k sorted across trials gives the empirical CDF of
    the (k+1)-th event; successive differences of those CDFs yield the
    occupation histogram.  Returns shape (len(grid), N + 1) indexed by the
    remaining count.
    """
    n_trials, n_events = times.shape
    at_least = np.empty((len(grid), n_events + 2))
    at_least[:, 0] = n_trials
    at_least[:, n_events + 1] = 0.0
    for k in range(1, n_events + 1):
        at_least[:, k] = np.searchsorted(np.sort(times[:, k - 1]), grid,
                                         side="right")
    dist_by_events = (at_least[:, :-1] - at_least[:, 1:]) / n_trials
    return dist_by_events[:, ::-1]          # index by remaining = N - k


def _occupation_blend(delta, enter_rate, exit_rate):
    """P(still in the target state a lag ``delta`` after entering its
    predecessor), for exponential holding at ``enter_rate`` followed by
    exponential exit at ``exit_rate``.

    This is the two-rate convolution a (e^{-b d} - e^{-a d}) / (a - b),
    switched to its a -> b limit (a d e^{-a d}) near rate ties, which occur
    exactly at the mid-ladder for even N.  Negative lags contribute zero.
    """
    lag = np.maximum(delta, 0.0)
    a = np.asarray(enter_rate, dtype=float)
    b = np.asarray(exit_rate, dtype=float)
    if a.ndim == 0:
        if abs(float(a) - float(b)) <= 1e-9 * (float(a) + float(b)):
            blend = float(a) * lag * np.exp(-0.5 * (float(a) + float(b)) * lag)
        else:
            blend = float(a) * (np.exp(-b * lag) - np.exp(-a * lag)) \
                / (float(a) - float(b))
    else:
        tied = np.abs(a - b) <= 1e-9 * (a + b)
        denom = np.where(tied, 1.0, a - b)
        blend = a * (np.exp(-b * lag) - np.exp(-a * lag)) / denom
        hit = np.nonzero(tied)
        if hit[0].size:
            blend[hit] = a[hit] * lag[hit] * np.exp(-a[hit] * lag[hit])
    return np.where(delta >= 0.0, blend, 0.0)


def _smoothed_ladder_marginal(times: np.ndarray, rates: np.ndarray,
                              grid: np.ndarray) -> np.ndarray:
    """Conditional (Rao-Blackwell) estimate of a single-ladder marginal.

    Instead of the 0/1 indicator of occupying level n at time t, each trial
    contributes its exact conditional occupation probability given the time
    it entered level n+1: the holding time there and the survival in n are
    memoryless, so the conditional is the two-rate blend above.  The
    estimate is unbiased with strictly smaller variance than the indicator
    histogram (the initial level is even deterministic: e^{-I(N) t}), which
    keeps the total-variation comparison dominated by genuine solver or
    sampler defects rather than by histogram noise.

    ``rates[n]`` is the exit rate of level n; entry times come from
    ``times`` as in ``_ladder_marginal``.
    """
    n_trials, n_events = times.shape
    out = np.zeros((len(grid), n_events + 1))
    out[:, n_events] = np.exp(-rates[n_events] * grid)
    zero = np.zeros(n_trials)
    for level in range(n_events):
        into_prev = zero if level == n_events - 1 \
            else times[:, n_events - level - 2]
        # the level only carries weight between the first predecessor entry
        # and ~50 exit lifetimes after the last one; skip grid points outside
        first = np.searchsorted(grid, into_prev.min())
        if rates[level] > 0:
            last = np.searchsorted(grid, into_prev.max() + 50.0 / rates[level])
        else:
            last = len(grid)
        if first == last:
            continue
        lag = grid[first:last, None] - into_prev[None, :]
        blend = _occupation_blend(lag, rates[level + 1], rates[level])
        out[first:last, level] = blend.mean(axis=1)
    return out


def _smoothed_cascade_marginals(ensemble: TrialEnsemble,
                                grid: np.ndarray) -> dict[str, np.ndarray]:
    """Conditional estimates of the three cascade reductions.

    Same construction as the ladder version, applied to the joint chain:
    conditional on the entry time into the previous *joint* state (and on
    the trial's realized path, which fixes every exit rate), the occupation
    probability of the current state is the two-rate blend.  Contributions
    are scattered into the n, m-n and N-m histograms per reference time.
    """
    n_atoms, alpha = ensemble.params.n_atoms, ensemble.params.alpha
    n_trials = ensemble.n_trials
    upper = ensemble.event_tags == _UPPER
    n_path = n_atoms - np.cumsum(upper, axis=1)
    m_path = n_atoms - np.cumsum(~upper, axis=1)
    exit_rate = (n_path * (m_path - n_path + 1)
                 + alpha * (m_path - n_path) * (n_atoms - m_path + 1))
    enter_rate = np.hstack([np.full((n_trials, 1), float(n_atoms)),
                            exit_rate[:, :-1]])
    into_prev = np.hstack([np.zeros((n_trials, 1)),
                           ensemble.event_times[:, :-1]])
    bins = {"upper": n_path,
            "intermediate": m_path - n_path,
            "lower": n_atoms - m_path}
    out = {kind: np.empty((len(grid), n_atoms + 1)) for kind in bins}
    initial = {"upper": n_atoms, "intermediate": 0, "lower": 0}
    # per-step activity window: before the first predecessor entry a step
    # carries no weight, ~50 exit lifetimes after the last one none is left
    opens = into_prev.min(axis=0)
    with np.errstate(divide="ignore"):
        closes = (into_prev + 50.0 / exit_rate).max(axis=0)
    for gi, t in enumerate(grid):
        live = (opens <= t) & (t <= closes)
        blend = _occupation_blend(t - into_prev[:, live],
                                  enter_rate[:, live], exit_rate[:, live])
        weights = blend.ravel()
        still_initial = np.exp(-n_atoms * t)
        for kind, where in bins.items():
            hist = np.bincount(where[:, live].ravel(), weights=weights,
                               minlength=n_atoms + 1) / n_trials
            hist[initial[kind]] += still_initial
            out[kind][gi] = hist
    return out


def empirical_marginals(ensemble: TrialEnsemble, grid: np.ndarray, *,
                        smooth: bool = True) -> dict[str, np.ndarray]:
    """Empirical occupation marginals on a time grid.

    Two-level ensembles yield {"excitation"}: the distribution of n.
    Cascades yield the same three reductions the deterministic solver
    stores: "upper" (n), "intermediate" (m - n), "lower" (N - m), each of
    shape (len(grid), N + 1).

    With ``smooth=True`` (default) the conditional Rao-Blackwell estimator
    is used; ``smooth=False`` gives the plain indicator histogram.  Both
    are unbiased and deterministic given the ensemble; the smoothed rows
    are not exactly normalized (each entry is estimated separately).
    """
    grid = np.asarray(grid, dtype=float)
    n_atoms = ensemble.params.n_atoms
    if ensemble.modes == (TWO_LEVEL,):
        if smooth:
            rates = two_level_rate_array(n_atoms)
            return {"excitation": _smoothed_ladder_marginal(
                ensemble.event_times, rates, grid)}
        return {"excitation": _ladder_marginal(ensemble.event_times, grid)}
    if smooth:
        return _smoothed_cascade_marginals(ensemble, grid)
    upper_times = ensemble.mode_event_times(CASCADE_UPPER)
    lower_times = ensemble.mode_event_times(CASCADE_LOWER)
    out = {"upper": _ladder_marginal(upper_times, grid)}
    # N - m counts fired lower events, so flip the remaining-count axis.
    out["lower"] = _ladder_marginal(lower_times, grid)[:, ::-1]
    inter = np.empty((len(grid), n_atoms + 1))
    for gi, t in enumerate(grid):
        gap = (upper_times <= t).sum(axis=1) - (lower_times <= t).sum(axis=1)
        inter[gi] = np.bincount(gap, minlength=n_atoms + 1) / ensemble.n_trials
    out["intermediate"] = inter
    return out


def total_variation(ensemble: TrialEnsemble, traj, *,
                    n_points: int = 60) -> float:
    """Worst total-variation distance between sampled and solved marginals.

    Thins the trajectory grid to ``n_points`` reference times, builds the
    empirical marginals there, and compares them with the corresponding
    deterministic distributions.  The result is the maximum over reference
    times and marginal kinds; it also caches the empirical marginals on
    ``ensemble.summary``.
    """
    if traj.params.n_atoms != ensemble.params.n_atoms:
        raise ValueError("ensemble and trajectory have different N")
    idx = np.unique(np.linspace(0, len(traj.times) - 1,
                                n_points).astype(int))
    grid = traj.times[idx]
    empirical = empirical_marginals(ensemble, grid)
    ensemble.summary = {"times": grid, **empirical}
    worst = 0.0
    if ensemble.modes == (TWO_LEVEL,):
        solved = {"excitation": traj.states[idx]}
    else:
        solved = {kind: traj.marginals[kind][idx] for kind in
                  ("upper", "intermediate", "lower")}
    for kind, emp in empirical.items():
        tv = 0.5 * np.abs(emp - solved[kind]).sum(axis=1)
        worst = max(worst, float(tv.max()))
    return worst
