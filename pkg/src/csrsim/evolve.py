"""Master-equation integration for the two-level and cascade models.

The generators are applied matrix-free: each state has at most two inflow
neighbours, so one right-hand-side evaluation is a handful of vectorized
passes over the packed probability vector.  Integration uses an embedded
Dormand-Prince 5(4) pair with *max-norm* error control, which keeps every
component's local error within ``abs_tol + rel_tol |y|``; that is what lets
the hard state floor (no entry below -1e-9) hold without clamping.

Output is streamed: the stepper's quartic interpolant is evaluated on a
fixed reporting grid and immediately reduced (intensities, marginals,
conservation), so a desk-scale cascade run never materializes the full
(grid x states) array unless explicitly asked to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrationError
from .model import (
    CONSERVATION_TOL,
    STATE_FLOOR,
    ModelParams,
    analytic_delay,
    cascade_initial,
    cascade_rate_arrays,
    default_t_cap,
    triangular_grid,
    triangular_size,
    two_level_initial,
    two_level_rate_array,
)

TWO_LEVEL = "two-level"
CASCADE_UPPER = "cascade-upper"
CASCADE_LOWER = "cascade-lower"

# ---------------------------------------------------------------------------
# Dormand-Prince 5(4) tableau (standard published coefficients), including
# the quartic dense-output weights.
# ---------------------------------------------------------------------------

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = (
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
)
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920,
               -17253 / 339200, 22 / 525, -1 / 40])
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


def _error_norm(err: np.ndarray, y_old: np.ndarray, y_new: np.ndarray,
                atol: float, rtol: float) -> float:
    scale = atol + rtol * np.maximum(np.abs(y_old), np.abs(y_new))
    return float(np.max(np.abs(err) / scale))


def _initial_step(rhs, y0: np.ndarray, f0: np.ndarray, t_bound: float,
                  atol: float, rtol: float) -> float:
    """Cheap two-sample estimate of a safe first step (Hairer-style)."""
    scale = atol + rtol * np.abs(y0)
    d0 = float(np.max(np.abs(y0) / scale))
    d1 = float(np.max(np.abs(f0) / scale))
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    y1 = y0 + h0 * f0
    f1 = rhs(h0, y1)
    d2 = float(np.max(np.abs(f1 - f0) / scale)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, t_bound)


def _drive(rhs, y0, *, grid, t_bound, rtol, atol, consume,
           absorbed_index=0, absorb_eps=1e-6):
    """Step the Dormand-Prince pair, streaming grid points into ``consume``.

    ``consume(t, y)`` is called once per reporting time, in order, starting
    with (0, y0).  Returns the final integration time.  Stops at the first
    step end where the absorbed weight exceeds 1 - absorb_eps, or at
    t_bound.
    """
    y = np.asarray(y0, dtype=float).copy()
    t = 0.0
    f = rhs(t, y)
    h = _initial_step(rhs, y, f, t_bound, atol, rtol)
    k = np.empty((7, y.size))
    threshold = 1.0 - absorb_eps

    consume(0.0, y)
    gi = 1 if grid[0] == 0.0 else 0

    while t < t_bound:
        h = min(h, t_bound - t)
        if h <= abs(t) * 1e-14 + 1e-300:
            raise IntegrationError("step size underflow", last_good_time=t)

        k[0] = f
        for i, a_row in enumerate(_A, start=1):
            dy = (k[:i].T @ a_row) * h
            k[i] = rhs(t + _C[i] * h, y + dy)
        y_new = y + h * (k[:6].T @ _B)
        f_new = rhs(t + h, y_new)
        k[6] = f_new
        err = h * (k.T @ _E)
        enorm = _error_norm(err, y, y_new, atol, rtol)

        if enorm > 1.0:
            h *= max(_MIN_FACTOR, _SAFETY * enorm ** -0.2)
            continue

        t_new = t + h
        low = float(y_new.min())
        if low < STATE_FLOOR:
            raise IntegrationError(
                f"state entry {low:.3e} fell below the {STATE_FLOOR:.0e} floor",
                last_good_time=t)

        # stream interpolated output for grid times inside (t, t_new]
        while gi < len(grid) and grid[gi] <= t_new:
            theta = (grid[gi] - t) / h
            w = _P @ np.array([theta, theta**2, theta**3, theta**4])
            y_out = y + h * (w @ k)
            consume(float(grid[gi]), y_out)
            gi += 1

        t, y, f = t_new, y_new, f_new
        if enorm == 0.0:
            h *= _MAX_FACTOR
        else:
            h *= min(_MAX_FACTOR, max(_MIN_FACTOR, _SAFETY * enorm ** -0.2))

        if y[absorbed_index] >= threshold:
            if grid[gi - 1] < t:
                consume(t, y)
            break
    return t


# ---------------------------------------------------------------------------
# reporting grid
# ---------------------------------------------------------------------------

def output_grid(n_atoms: int, alpha: float | None, t_cap: float, *,
                grid_density: float = 1.0,
                extra_times: tuple[float, ...] = ()) -> np.ndarray:
    """Reporting times: log backbone plus uniform windows around each pulse.

    The backbone is geometric from 1e-5 to t_cap; each expected pulse delay
    tau (and tau/alpha for the cascade's lower mode) gets a uniform window
    [tau/2, 2 tau] so peak refinement never depends on where the log points
    happen to fall.  ``extra_times`` (e.g. snapshot requests) are merged in.
    """
    backbone = max(32, int(round(2000 * grid_density)))
    window = max(16, int(round(500 * grid_density)))

    tau = analytic_delay(n_atoms)
    centers = [tau]
    if alpha is not None and 0.0 < alpha:
        centers.append(tau / alpha)

    parts = [np.array([0.0]), np.geomspace(1e-5, t_cap, backbone)]
    for c in centers:
        lo, hi = 0.5 * c, min(2.0 * c, t_cap)
        if lo < hi:
            parts.append(np.linspace(lo, hi, window))
    extra = np.asarray(extra_times, dtype=float)
    if extra.size:
        if extra.min() < 0 or extra.max() > t_cap:
            raise ValueError("extra_times must lie within [0, t_cap]")
        parts.append(extra)
    return np.unique(np.concatenate(parts))


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

@dataclass
class TwoLevelTrajectory:
    """Dense time history of the two-level master equation."""

    params: ModelParams
    times: np.ndarray             # (T,)
    states: np.ndarray            # (T, N+1); states[k, n] = P_n(times[k])
    conservation_log: np.ndarray  # (T,) |sum - 1|

    modes: tuple[str, ...] = (TWO_LEVEL,)

    @property
    def absorbed(self) -> np.ndarray:
        """P_0(t): weight in the fully de-excited state."""
        return self.states[:, 0]

    def prob(self, n: int) -> np.ndarray:
        """P_n(t) for one excitation count."""
        return self.states[:, n]

    def mode_intensity(self, mode: str = TWO_LEVEL) -> np.ndarray:
        """Mean emission rate <I(t)> = sum_n I(n) P_n(t)."""
        self._check_mode(mode)
        rates = two_level_rate_array(self.params.n_atoms)
        return self.states @ rates

    def half_transition_density(self, mode: str = TWO_LEVEL) -> np.ndarray:
        """Arrival density of the half-way emission event (index ceil(N/2))."""
        self._check_mode(mode)
        n_half = self.params.n_atoms // 2 + 1
        rate = two_level_rate_array(self.params.n_atoms)[n_half]
        return rate * self.states[:, n_half]

    def _check_mode(self, mode: str) -> None:
        if mode != TWO_LEVEL:
            raise ValueError(f"two-level trajectory has no mode {mode!r}")


@dataclass
class CascadeTrajectory:
    """Reduced time history of the cascade master equation.

    Per-point reductions are always stored; the full packed states are kept
    only when small enough (or when forced), since the dense history does
    not fit in memory at desk scale.  ``snapshots`` holds full packed states
    at explicitly requested times.
    """

    params: ModelParams
    times: np.ndarray
    conservation_log: np.ndarray
    intensity_upper: np.ndarray   # sum I1(n,m) P_{n,m}(t)
    intensity_lower: np.ndarray   # sum I2(n,m) P_{n,m}(t)
    absorbed: np.ndarray          # P_{0,0}(t)
    q_half_upper: np.ndarray      # arrival density, half-way upper event
    q_half_lower: np.ndarray      # arrival density, half-way lower event
    marginals: dict[str, np.ndarray]  # "upper"/"intermediate"/"lower" -> (T, N+1)
    snapshots: dict[float, np.ndarray] = field(default_factory=dict)
    states: np.ndarray | None = None  # (T, size) when stored

    modes: tuple[str, ...] = (CASCADE_UPPER, CASCADE_LOWER)

    def mode_intensity(self, mode: str) -> np.ndarray:
        if mode == CASCADE_UPPER:
            return self.intensity_upper
        if mode == CASCADE_LOWER:
            return self.intensity_lower
        raise ValueError(f"cascade trajectory has no mode {mode!r}")

    def half_transition_density(self, mode: str) -> np.ndarray:
        if mode == CASCADE_UPPER:
            return self.q_half_upper
        if mode == CASCADE_LOWER:
            return self.q_half_lower
        raise ValueError(f"cascade trajectory has no mode {mode!r}")


# ---------------------------------------------------------------------------
# evolvers
# ---------------------------------------------------------------------------

def _two_level_rhs(n_atoms: int):
    rates = two_level_rate_array(n_atoms)

    def rhs(t: float, p: np.ndarray) -> np.ndarray:
        flow = rates * p
        dp = -flow
        dp[:-1] += flow[1:]
        return dp

    return rhs


def evolve_two_level(params: ModelParams, *, grid_density: float = 1.0,
                     extra_times: tuple[float, ...] = ()) -> TwoLevelTrajectory:
    """Integrate the two-level master equation from the all-excited state.

    ``params.alpha`` plays no role here: the default horizon is the
    single-pulse one regardless of any cascade ratio carried by ``params``.
    """
    n_atoms = params.n_atoms
    t_cap = (params.t_cap if params.t_cap is not None
             else default_t_cap(n_atoms, 0.0))
    grid = output_grid(n_atoms, None, t_cap, grid_density=grid_density,
                       extra_times=extra_times)

    times: list[float] = []
    states: list[np.ndarray] = []
    cons: list[float] = []

    def consume(t: float, y: np.ndarray) -> None:
        drift = abs(float(y.sum()) - 1.0)
        if drift > CONSERVATION_TOL:
            raise IntegrationError(
                f"probability sum drifted by {drift:.3e}",
                last_good_time=times[-1] if times else 0.0)
        low = float(y.min())
        if low < STATE_FLOOR:
            raise IntegrationError(
                f"state entry {low:.3e} fell below the {STATE_FLOOR:.0e} floor",
                last_good_time=times[-1] if times else 0.0)
        times.append(t)
        states.append(np.array(y, copy=True))
        cons.append(drift)

    _drive(_two_level_rhs(n_atoms), two_level_initial(n_atoms), grid=grid,
           t_bound=t_cap, rtol=params.rel_tol, atol=params.abs_tol,
           consume=consume, absorbed_index=0, absorb_eps=params.absorb_eps)

    return TwoLevelTrajectory(params=params, times=np.array(times),
                              states=np.array(states),
                              conservation_log=np.array(cons))


def _cascade_rhs(n_atoms: int, alpha: float):
    """Matrix-free generator application over the packed triangle."""
    out_upper, out_lower = cascade_rate_arrays(n_atoms, alpha)
    total = out_upper + out_lower
    _, m = triangular_grid(n_atoms)
    size = triangular_size(n_atoms)
    idx = np.arange(size)
    # inflow from (n, m+1) sits one full row ahead: flat offset m+1
    src = np.where(m < n_atoms, idx + m + 1, idx)
    in_lower = np.where(m < n_atoms, out_lower[src], 0.0)

    def rhs(t: float, p: np.ndarray) -> np.ndarray:
        dp = in_lower * p.take(src)
        flow_up = out_upper * p
        dp[:-1] += flow_up[1:]   # inflow from (n+1, m), the next packed cell
        dp -= total * p
        return dp

    return rhs, out_upper, out_lower


# auto threshold for keeping the dense cascade state history (bytes)
_DENSE_STATE_BUDGET = 128 * 2**20


def evolve_cascade(params: ModelParams, *, snapshot_times: tuple[float, ...] = (),
                   grid_density: float = 1.0,
                   store_states: bool | None = None) -> CascadeTrajectory:
    """Integrate the cascade master equation from the all-top state.

    ``snapshot_times`` are merged into the reporting grid and their full
    packed states retained.  ``store_states=None`` keeps the dense history
    only when it fits a fixed memory budget.
    """
    n_atoms = params.n_atoms
    alpha = params.alpha
    t_cap = params.time_cap
    size = triangular_size(n_atoms)

    snapshot_times = tuple(float(t) for t in snapshot_times)
    grid = output_grid(n_atoms, alpha, t_cap, grid_density=grid_density,
                       extra_times=snapshot_times)
    if store_states is None:
        store_states = grid.size * size * 8 <= _DENSE_STATE_BUDGET

    rhs, out_upper, out_lower = _cascade_rhs(n_atoms, alpha)
    n_cells, m_cells = triangular_grid(n_atoms)
    mid_cells = m_cells - n_cells
    row_offsets = (np.arange(n_atoms + 1) * (np.arange(n_atoms + 1) + 1)) // 2

    half = n_atoms // 2 + 1
    w_half_upper = np.where(n_cells == half, out_upper, 0.0)
    w_half_lower = np.where(m_cells == half, out_lower, 0.0)

    snap_set = set(snapshot_times)
    times: list[float] = []
    cons: list[float] = []
    int_up: list[float] = []
    int_lo: list[float] = []
    absorbed: list[float] = []
    q_up: list[float] = []
    q_lo: list[float] = []
    marg_up: list[np.ndarray] = []
    marg_mid: list[np.ndarray] = []
    marg_lo: list[np.ndarray] = []
    snapshots: dict[float, np.ndarray] = {}
    dense: list[np.ndarray] = []

    def consume(t: float, y: np.ndarray) -> None:
        drift = abs(float(y.sum()) - 1.0)
        if drift > CONSERVATION_TOL:
            raise IntegrationError(
                f"probability sum drifted by {drift:.3e}",
                last_good_time=times[-1] if times else 0.0)
        low = float(y.min())
        if low < STATE_FLOOR:
            raise IntegrationError(
                f"state entry {low:.3e} fell below the {STATE_FLOOR:.0e} floor",
                last_good_time=times[-1] if times else 0.0)
        times.append(t)
        cons.append(drift)
        int_up.append(float(out_upper @ y))
        int_lo.append(float(out_lower @ y))
        absorbed.append(float(y[0]))
        q_up.append(float(w_half_upper @ y))
        q_lo.append(float(w_half_lower @ y))
        row_sums = np.add.reduceat(y, row_offsets)      # distribution of m
        marg_up.append(np.bincount(n_cells, weights=y, minlength=n_atoms + 1))
        marg_mid.append(np.bincount(mid_cells, weights=y, minlength=n_atoms + 1))
        marg_lo.append(row_sums[::-1].copy())           # N - m occupation
        if t in snap_set:
            snapshots[t] = np.array(y, copy=True)
        if store_states:
            dense.append(np.array(y, copy=True))

    _drive(rhs, cascade_initial(n_atoms), grid=grid, t_bound=t_cap,
           rtol=params.rel_tol, atol=params.abs_tol, consume=consume,
           absorbed_index=0, absorb_eps=params.absorb_eps)

    return CascadeTrajectory(
        params=params,
        times=np.array(times),
        conservation_log=np.array(cons),
        intensity_upper=np.array(int_up),
        intensity_lower=np.array(int_lo),
        absorbed=np.array(absorbed),
        q_half_upper=np.array(q_up),
        q_half_lower=np.array(q_lo),
        marginals={
            "upper": np.array(marg_up),
            "intermediate": np.array(marg_mid),
            "lower": np.array(marg_lo),
        },
        snapshots=snapshots,
        states=np.array(dense) if store_states else None,
    )
