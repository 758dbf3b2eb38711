"""EM estimation of the regime mixture from diffusion-only yields.

A jump-free yield observed over an interval of length dt is normal with mean
delta_j * dt and variance sigma_j^2 * dt when regime j is in force, so the
diffusion sample is an m-component Gaussian mixture. The E-step computes
membership probabilities in log space, the M-step is the usual weighted-moment
update, and convergence is monitored on the expected complete-data
log-likelihood evaluated at each iterate.

All parameters are stored per unit time; dt enters only through the
component densities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import EstimationError, ValidationError

_LOG_2PI = math.log(2.0 * math.pi)
_MIN_COMPONENT_MASS = 1e-10


@dataclass(frozen=True)
class MixtureState:
    """Mixture parameters: weights, per-unit-time drifts and variances.

    objective holds the expected complete-data log-likelihood of this state
    under its own responsibilities (NaN until evaluated).
    """

    pi: np.ndarray
    delta: np.ndarray
    sigma2: np.ndarray
    objective: float = float("nan")

    def __post_init__(self):
        object.__setattr__(self, "pi", np.asarray(self.pi, dtype=float))
        object.__setattr__(self, "delta", np.asarray(self.delta, dtype=float))
        object.__setattr__(self, "sigma2", np.asarray(self.sigma2, dtype=float))

    @property
    def m(self) -> int:
        return self.pi.size

    def validate(self) -> None:
        if not (self.pi.shape == self.delta.shape == self.sigma2.shape):
            raise ValidationError("mixture parameter length mismatch")
        if abs(float(self.pi.sum()) - 1.0) > 1e-12:
            raise ValidationError("mixing weights do not sum to one")
        if np.any(self.pi < 0):
            raise ValidationError("negative mixing weight")
        if np.any(self.sigma2 <= 0):
            raise ValidationError("nonpositive component variance")


@dataclass(frozen=True)
class EmResult:
    final: MixtureState
    mu_hat: np.ndarray
    sigma_hat: np.ndarray
    iterations: int
    converged: bool
    loglik_trace: np.ndarray     # observed-data log-likelihood, one entry per state visited
    surrogate_trace: np.ndarray  # stop-rule objective, aligned with loglik_trace


def component_density(w: float, delta_j: float, sigma2_j: float, dt: float) -> float:
    """Normal density with mean delta_j * dt and variance sigma2_j * dt at w."""
    var = sigma2_j * dt
    z = w - delta_j * dt
    return math.exp(-0.5 * z * z / var) / math.sqrt(2.0 * math.pi * var)


def _log_densities(w: np.ndarray, state: MixtureState, dt: float) -> np.ndarray:
    """(N, m) matrix of log component densities."""
    var = state.sigma2 * dt
    z = w[:, None] - state.delta[None, :] * dt
    return -0.5 * (z * z / var[None, :] + np.log(var)[None, :] + _LOG_2PI)


def _log_joint(w: np.ndarray, state: MixtureState, dt: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        log_pi = np.log(state.pi)
    return log_pi[None, :] + _log_densities(w, state, dt)


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    amax = np.max(a, axis=1)
    safe = np.where(np.isfinite(amax), amax, 0.0)
    out = safe + np.log(np.sum(np.exp(a - safe[:, None]), axis=1))
    return np.where(np.isfinite(amax), out, amax)


def e_step(w: np.ndarray, state: MixtureState, dt: float) -> np.ndarray:
    """Responsibilities gamma[n, j] = P(component j | w_n), rows sum to one."""
    a = _log_joint(w, state, dt)
    norm = _logsumexp_rows(a)
    bad = np.flatnonzero(~np.isfinite(norm))
    if bad.size:
        raise EstimationError(
            f"all component densities underflow at observation {int(bad[0])}"
        )
    return np.exp(a - norm[:, None])


def m_step(w: np.ndarray, gamma: np.ndarray, dt: float) -> MixtureState:
    """Weighted-moment update of weights, drifts, and variances."""
    n = w.size
    mass = gamma.sum(axis=0)
    weak = np.flatnonzero(mass < _MIN_COMPONENT_MASS)
    if weak.size:
        raise EstimationError(f"empty component {int(weak[0]) + 1}")
    pi = mass / n
    mean_dt = (gamma * w[:, None]).sum(axis=0) / mass
    resid = w[:, None] - mean_dt[None, :]
    var_dt = (gamma * resid * resid).sum(axis=0) / mass
    if np.any(var_dt <= 0):
        raise EstimationError("zero-variance component")
    return MixtureState(pi=pi, delta=mean_dt / dt, sigma2=var_dt / dt)


def surrogate(w: np.ndarray, gamma: np.ndarray, state: MixtureState, dt: float) -> float:
    """Expected complete-data log-likelihood under the given responsibilities."""
    a = _log_joint(w, state, dt)
    terms = np.where(gamma > 0, gamma * a, 0.0)
    return float(np.sum(terms))


def observed_loglik(w: np.ndarray, state: MixtureState, dt: float) -> float:
    """Incomplete-data log-likelihood sum_n log sum_j pi_j f_j(w_n)."""
    return math.fsum(_logsumexp_rows(_log_joint(w, state, dt)))


def default_init(w: np.ndarray, m: int, dt: float) -> MixtureState:
    """Deterministic starting point: moments of m equal quantile blocks."""
    if w.size < m:
        raise ValidationError("fewer observations than components")
    blocks = np.array_split(np.sort(w), m)
    mean_dt = np.array([b.mean() for b in blocks])
    var_dt = np.array([max(b.var(), 1e-12) for b in blocks])
    return MixtureState(pi=np.full(m, 1.0 / m), delta=mean_dt / dt, sigma2=var_dt / dt)


def sort_by_volatility(state: MixtureState) -> tuple[MixtureState, np.ndarray]:
    """Reorder components by ascending variance; returns the permutation used."""
    perm = np.argsort(state.sigma2, kind="stable")
    return (
        replace(state, pi=state.pi[perm], delta=state.delta[perm], sigma2=state.sigma2[perm]),
        perm,
    )


def run_em(
    w: np.ndarray,
    init: MixtureState,
    dt: float,
    eps: float = 0.05,
    max_iter: int = 1000,
) -> EmResult:
    """Alternate E and M steps until the objective change drops below eps.

    The stop rule compares the expected complete-data log-likelihood of
    consecutive iterates, each under its own responsibilities. Components of
    the returned state are sorted by ascending volatility, and the drifts are
    recovered as mu_j = delta_j + sigma_j^2 / 2.

    Raises EstimationError if a component loses all responsibility mass;
    reaching max_iter is reported through converged=False, not an error.
    """
    w = np.asarray(w, dtype=float)
    if not eps > 0:
        raise ValidationError("nonpositive tolerance")
    init.validate()

    state = init
    gamma = e_step(w, state, dt)
    obj = surrogate(w, gamma, state, dt)
    state = replace(state, objective=obj)
    logliks = [observed_loglik(w, state, dt)]
    objectives = [obj]

    converged = False
    iterations = 0
    for _ in range(max_iter):
        new_state = m_step(w, gamma, dt)
        iterations += 1
        gamma = e_step(w, new_state, dt)
        new_obj = surrogate(w, gamma, new_state, dt)
        new_state = replace(new_state, objective=new_obj)
        logliks.append(observed_loglik(w, new_state, dt))
        objectives.append(new_obj)
        prev_obj, state = state.objective, new_state
        if abs(new_obj - prev_obj) < eps:
            converged = True
            break

    state, _ = sort_by_volatility(state)
    sigma_hat = np.sqrt(state.sigma2)
    mu_hat = state.delta + 0.5 * state.sigma2
    return EmResult(
        final=state,
        mu_hat=mu_hat,
        sigma_hat=sigma_hat,
        iterations=iterations,
        converged=converged,
        loglik_trace=np.array(logliks),
        surrogate_trace=np.array(objectives),
    )
