"""Core value types: generator matrix, model parameters, grids, and latent paths.

States are labelled 1..m at every I/O boundary (files, CLI, reports) and
0..m-1 everywhere inside the library. All rates are per unit time; the
sampling interval is applied at the point of use.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class IntensityMatrix:
    """Generator of a finite-state Markov jump process.

    Off-diagonal entries are transition rates (1/time), rows sum to zero,
    diagonal entries are non-positive. An all-zero row is an absorbing state.
    """

    rates: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rates", np.asarray(self.rates, dtype=float))

    @property
    def m(self) -> int:
        return self.rates.shape[0]

    @classmethod
    def from_off_diagonal(cls, off: np.ndarray) -> "IntensityMatrix":
        """Build a generator from off-diagonal rates, setting the diagonal so
        that every row sums to exactly zero."""
        off = np.asarray(off, dtype=float).copy()
        np.fill_diagonal(off, 0.0)
        return cls(off - np.diag(off.sum(axis=1)))

    def validate(self) -> None:
        r = self.rates
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ValidationError("intensity matrix not square")
        if r.shape[0] < 2:
            raise ValidationError("state count below 2")
        off = r[~np.eye(self.m, dtype=bool)]
        if np.any(off < 0):
            raise ValidationError("negative off-diagonal rate")
        if np.any(np.diag(r) > 0):
            raise ValidationError("positive diagonal entry")
        if np.max(np.abs(r.sum(axis=1))) > ROW_SUM_TOL:
            raise ValidationError("row sum nonzero")

    def exit_rates(self) -> np.ndarray:
        return -np.diag(self.rates)


@dataclass(frozen=True)
class MmjdParams:
    """Full parameter bundle of the markov-modulated jump-diffusion.

    Attributes
    ----------
    q : IntensityMatrix
        Generator of the environment process (per unit time).
    mu, sigma : arrays of length m
        Per-regime drift (1/time) and volatility (1/sqrt(time)).
    eta : float
        Rate of the double-exponential price-jump law: a log-jump J has
        density (eta/2) exp(-eta |J|), so |J| is Exponential(eta).
    s0 : float
        Initial price.
    x0 : int
        Initial regime, 0-based.
    """

    q: IntensityMatrix
    mu: np.ndarray
    sigma: np.ndarray
    eta: float
    s0: float
    x0: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float))
        object.__setattr__(self, "sigma", np.asarray(self.sigma, dtype=float))

    @property
    def m(self) -> int:
        return self.q.m


@dataclass(frozen=True)
class ObservationGrid:
    """Equally spaced observation times i * delta for i = 0..m_obs."""

    delta: float
    m_obs: int

    def validate(self) -> None:
        if not self.delta > 0:
            raise ValidationError("nonpositive sampling interval")
        if self.m_obs < 1:
            raise ValidationError("fewer than one observation interval")

    @property
    def horizon(self) -> float:
        return self.delta * self.m_obs

    def times(self) -> np.ndarray:
        return self.delta * np.arange(self.m_obs + 1)


@dataclass(frozen=True)
class MjpPath:
    """Piecewise-constant trajectory of the environment process on [0, horizon]."""

    initial_state: int
    jump_times: np.ndarray
    post_jump_states: np.ndarray
    horizon: float

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=float)
        st = np.asarray(self.post_jump_states, dtype=np.int64)
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "post_jump_states", st)
        if jt.shape != st.shape:
            raise ValidationError("jump times and states length mismatch")
        if jt.size:
            if np.any(np.diff(jt) <= 0):
                raise ValidationError("jump times not strictly increasing")
            if jt[0] <= 0 or jt[-1] >= self.horizon:
                raise ValidationError("jump time outside (0, horizon)")
            states = np.concatenate(([self.initial_state], st))
            if np.any(states[1:] == states[:-1]):
                raise ValidationError("jump does not change state")

    @property
    def n_jumps(self) -> int:
        return int(self.jump_times.size)

    @property
    def final_state(self) -> int:
        return int(self.post_jump_states[-1]) if self.n_jumps else self.initial_state

    def states(self) -> np.ndarray:
        """State sequence including the initial state, length n_jumps + 1."""
        return np.concatenate(([self.initial_state], self.post_jump_states))

    def intervals(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Constant-state pieces as (start_times, end_times, states)."""
        edges = np.concatenate(([0.0], self.jump_times, [self.horizon]))
        return edges[:-1], edges[1:], self.states()

    def state_at(self, t: float) -> int:
        """State at time t, right-continuous."""
        k = int(np.searchsorted(self.jump_times, t, side="right"))
        return self.initial_state if k == 0 else int(self.post_jump_states[k - 1])

    def occupation(self, m: int) -> np.ndarray:
        """Total time spent in each of m states."""
        t0, t1, states = self.intervals()
        return np.bincount(states, weights=t1 - t0, minlength=m)


def delta_drift(mu_j: float, sigma_j: float) -> float:
    """Log-price drift mu - sigma^2 / 2 of a regime."""
    return mu_j - 0.5 * sigma_j * sigma_j


def validate(params: MmjdParams) -> None:
    """Check every invariant of a parameter bundle.

    Raises ValidationError naming the first violated invariant.
    """
    params.q.validate()
    m = params.m
    if params.mu.shape != (m,):
        raise ValidationError("drift vector length mismatch")
    if params.sigma.shape != (m,):
        raise ValidationError("volatility vector length mismatch")
    if np.any(params.sigma <= 0):
        raise ValidationError("nonpositive volatility")
    if not params.eta > 0:
        raise ValidationError("nonpositive jump rate")
    if not params.s0 > 0:
        raise ValidationError("nonpositive initial price")
    if not 0 <= params.x0 < m:
        raise ValidationError("initial state out of range")
