"""Model definitions for collective two-level and cascaded two-mode emission.

Everything here is dimensionless: time is measured in units of the single
upper-transition decay, so all rates are pure numbers built from the atom
count.  The two-level model tracks the number ``n`` of excited atoms; the
cascade model tracks ``(n, m)`` where ``n`` atoms sit in the top level and
``m - n`` in the intermediate one (so ``N - m`` have reached the bottom).
Only ``0 <= n <= m <= N`` are reachable, a triangular state space packed
row-major by ``m``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Euler's constant, used by the closed-form delay estimates.
EULER_GAMMA = float(np.euler_gamma)

#: Hard floor for probability entries; anything below this aborts a run.
STATE_FLOOR = -1e-9

#: Conservation budget: |sum(p) - 1| must stay below this on every state.
CONSERVATION_TOL = 1e-8


@dataclass
class ModelParams:
    """Run configuration shared by the evolver, oracle and pipelines.

    Parameters
    ----------
    n_atoms : int
        Number of emitters N (>= 1).
    alpha : float
        Lower-to-upper transition rate ratio (cascade only), 0 <= alpha.
        The interesting regime is alpha < 1; alpha = 0 freezes the lower
        transition.
    t_cap : float or None
        Hard horizon for the integrator.  None picks a default that covers
        both pulses and the absorbed tail (see ``default_t_cap``).
    abs_tol, rel_tol : float
        Per-component error targets for the adaptive stepper.
    absorb_eps : float
        Terminate once the fully de-excited state holds more than
        ``1 - absorb_eps`` of the probability.
    seed : int
        Master seed for stochastic sampling.
    """

    n_atoms: int
    alpha: float = 0.1
    t_cap: float | None = None
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    absorb_eps: float = 1e-6
    seed: int = 42

    def __post_init__(self) -> None:
        if not isinstance(self.n_atoms, (int, np.integer)) or isinstance(self.n_atoms, bool):
            raise ValueError(f"n_atoms must be an integer, got {self.n_atoms!r}")
        if self.n_atoms < 1:
            raise ValueError(f"n_atoms must be >= 1, got {self.n_atoms}")
        if not math.isfinite(self.alpha) or self.alpha < 0:
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")
        if self.t_cap is not None and not (math.isfinite(self.t_cap) and self.t_cap > 0):
            raise ValueError(f"t_cap must be positive, got {self.t_cap}")
        for name in ("abs_tol", "rel_tol", "absorb_eps"):
            val = getattr(self, name)
            if not (0 < val < 1):
                raise ValueError(f"{name} must lie in (0, 1), got {val}")
        self.seed = int(self.seed)

    @property
    def time_cap(self) -> float:
        """The configured t_cap, or the model default."""
        if self.t_cap is not None:
            return self.t_cap
        return default_t_cap(self.n_atoms, self.alpha)


def analytic_delay(n_atoms: int) -> float:
    """Closed-form large-N estimate of the pulse delay, (E0 + ln N) / N."""
    if n_atoms < 1:
        raise ValueError(f"n_atoms must be >= 1, got {n_atoms}")
    return (EULER_GAMMA + math.log(n_atoms)) / n_atoms


def analytic_delay_spread(n_atoms: int) -> float:
    """Closed-form relative delay fluctuation, pi/sqrt(6) / (E0 + ln N)."""
    if n_atoms < 1:
        raise ValueError(f"n_atoms must be >= 1, got {n_atoms}")
    return (math.pi / math.sqrt(6.0)) / (EULER_GAMMA + math.log(n_atoms))


def default_t_cap(n_atoms: int, alpha: float = 0.0) -> float:
    """Default integration horizon.

    Generous on purpose: runs normally stop much earlier at the absorption
    event.  For a cascade with 0 < alpha < 1 the horizon stretches by
    1/alpha because the second pulse lives on the slow timescale; alpha = 0
    freezes the lower mode, so only the first pulse needs covering.
    """
    stretch = 1.0 / alpha if 0.0 < alpha < 1.0 else 1.0
    return 20.0 * (1.0 + stretch) * analytic_delay(n_atoms)


# ---------------------------------------------------------------------------
# transition rates
# ---------------------------------------------------------------------------

def two_level_rate(n: int, n_atoms: int) -> float:
    """Cooperative emission rate I(n) = n (N - n + 1) out of state n."""
    if not 0 <= n <= n_atoms:
        raise ValueError(f"n must lie in [0, {n_atoms}], got {n}")
    return float(n * (n_atoms - n + 1))


def cascade_rates(n: int, m: int, params: ModelParams) -> tuple[float, float]:
    """Rates out of cascade state (n, m): upper n(m-n+1), lower alpha(m-n)(N-m+1)."""
    n_atoms = params.n_atoms
    if not 0 <= n <= m <= n_atoms:
        raise ValueError(f"need 0 <= n <= m <= {n_atoms}, got (n={n}, m={m})")
    upper = float(n * (m - n + 1))
    lower = params.alpha * float((m - n) * (n_atoms - m + 1))
    return upper, lower


def two_level_rate_array(n_atoms: int) -> np.ndarray:
    """Vector of I(n) for n = 0..N (float64, exact integer products)."""
    n = np.arange(n_atoms + 1, dtype=np.int64)
    return (n * (n_atoms - n + 1)).astype(float)


# ---------------------------------------------------------------------------
# triangular state space for the cascade
# ---------------------------------------------------------------------------

def triangular_size(n_atoms: int) -> int:
    """Number of reachable cascade states, (N+1)(N+2)/2."""
    return (n_atoms + 1) * (n_atoms + 2) // 2


def triangular_index(n: int, m: int, n_atoms: int) -> int:
    """Flat index of (n, m) in the row-major-by-m packing."""
    if not 0 <= n <= m <= n_atoms:
        raise ValueError(f"need 0 <= n <= m <= {n_atoms}, got (n={n}, m={m})")
    return m * (m + 1) // 2 + n


def triangular_unindex(idx: int, n_atoms: int) -> tuple[int, int]:
    """Inverse of ``triangular_index``."""
    if not 0 <= idx < triangular_size(n_atoms):
        raise ValueError(f"index {idx} outside triangle for N={n_atoms}")
    # row m is the largest integer with m(m+1)/2 <= idx
    m = (math.isqrt(8 * idx + 1) - 1) // 2
    n = idx - m * (m + 1) // 2
    return n, m


def triangular_grid(n_atoms: int) -> tuple[np.ndarray, np.ndarray]:
    """Arrays (n, m) for every packed cell, in flat-index order."""
    m = np.repeat(np.arange(n_atoms + 1, dtype=np.int64),
                  np.arange(1, n_atoms + 2))
    size = triangular_size(n_atoms)
    offsets = m * (m + 1) // 2
    n = np.arange(size, dtype=np.int64) - offsets
    return n, m


def cascade_rate_arrays(n_atoms: int, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell outflow rates (upper, lower) over the packed triangle."""
    n, m = triangular_grid(n_atoms)
    upper = (n * (m - n + 1)).astype(float)
    lower = alpha * ((m - n) * (n_atoms - m + 1)).astype(float)
    return upper, lower


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------

def validate_state(probs: np.ndarray, context: str = "state") -> None:
    """Assert the probability-vector invariants (floor and conservation)."""
    low = float(probs.min())
    if low < STATE_FLOOR:
        raise FloatingPointError(
            f"{context}: entry {low:.3e} below the {STATE_FLOOR:.0e} floor")
    drift = abs(float(probs.sum()) - 1.0)
    if drift > CONSERVATION_TOL:
        raise FloatingPointError(
            f"{context}: probability sum off by {drift:.3e} (> {CONSERVATION_TOL:.0e})")


def two_level_initial(n_atoms: int) -> np.ndarray:
    """All atoms excited: a point mass at n = N."""
    p = np.zeros(n_atoms + 1)
    p[n_atoms] = 1.0
    return p


def cascade_initial(n_atoms: int) -> np.ndarray:
    """All atoms in the top level: a point mass at (n, m) = (N, N)."""
    p = np.zeros(triangular_size(n_atoms))
    p[-1] = 1.0  # (N, N) is the last packed cell
    return p
