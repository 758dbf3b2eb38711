"""Exact simulation of the environment process and of price paths.

Between environment jumps the log-price evolves as a Brownian motion with
regime drift mu - sigma^2/2, so prices can be advanced exactly over any
subinterval with a single normal draw; no time-stepping error is introduced.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import IntensityMatrix, MjpPath, MmjdParams, ObservationGrid


@dataclass(frozen=True)
class SimulatedPath:
    """Prices on the observation grid plus the latent trajectory behind them.

    Attributes
    ----------
    prices : array of length m_obs + 1
        Prices at grid times, prices[0] == s0.
    latent : MjpPath
        The environment trajectory that generated the prices.
    jump_log_sizes : array
        Log jump size applied at each latent jump time, aligned with
        latent.jump_times.
    """

    prices: np.ndarray
    latent: MjpPath
    jump_log_sizes: np.ndarray


def simulate_mjp(q: IntensityMatrix, x0: int, horizon: float,
                 rng: np.random.Generator) -> MjpPath:
    """Simulate the environment process by the Gillespie construction.

    Holding time in state i is Exponential(-q_ii); the next state j != i is
    chosen with probability q_ij / (-q_ii). A state with exit rate zero is
    absorbing: the path stays there until the horizon.
    """
    rates = q.rates
    exit_rates = q.exit_rates()
    jump_times: list[float] = []
    states: list[int] = []
    t = 0.0
    current = x0
    while True:
        rate = exit_rates[current]
        if rate <= 0:
            break
        t += rng.exponential(1.0 / rate)
        if t >= horizon:
            break
        probs = rates[current].copy()
        probs[current] = 0.0
        reachable = np.flatnonzero(probs)
        cum = np.cumsum(probs[reachable])
        k = int(np.searchsorted(cum, rng.uniform(0.0, cum[-1]), side="right"))
        current = int(reachable[min(k, reachable.size - 1)])
        jump_times.append(t)
        states.append(current)
    return MjpPath(x0, np.array(jump_times), np.array(states, dtype=np.int64), horizon)


def sample_laplace_jump(eta: float, rng: np.random.Generator,
                        size: int | None = None) -> float | np.ndarray:
    """Draw log jump sizes with density (eta/2) exp(-eta |x|)."""
    return rng.laplace(0.0, 1.0 / eta, size=size)


def simulate_mmjd(params: MmjdParams, grid: ObservationGrid,
                  rng: np.random.Generator, with_jumps: bool = True) -> SimulatedPath:
    """Simulate a price path observed on a regular grid.

    The environment path is simulated first; log-prices are then advanced
    exactly between consecutive event times (grid points and environment
    jumps) using the current regime's drift and volatility, and each
    environment jump multiplies the price by exp(J) with J drawn from the
    double-exponential jump law.

    Parameters
    ----------
    params : MmjdParams
        Model parameters; expected to have passed validation.
    grid : ObservationGrid
        Observation times 0, delta, ..., m_obs * delta.
    rng : numpy Generator
        Source of randomness; the call consumes a deterministic stream.
    with_jumps : bool
        Test hook. When False the price-jump factors are suppressed
        (jump_log_sizes are all zero) so the output is a pure
        regime-switching diffusion.
    """
    horizon = grid.horizon
    latent = simulate_mjp(params.q, params.x0, horizon, rng)

    n_jumps = latent.n_jumps
    if with_jumps:
        jump_sizes = np.atleast_1d(sample_laplace_jump(params.eta, rng, size=n_jumps))
    else:
        jump_sizes = np.zeros(n_jumps)

    grid_times = grid.times()
    # merged event list: grid points keep their index, jumps carry -1
    event_times = np.concatenate([grid_times[1:], latent.jump_times])
    event_tag = np.concatenate([
        np.arange(1, grid.m_obs + 1),
        np.full(n_jumps, -1, dtype=np.int64),
    ])
    order = np.argsort(event_times, kind="stable")
    event_times = event_times[order]
    event_tag = event_tag[order]

    # regime in force over each inter-event interval (left-continuous state)
    starts = np.concatenate(([0.0], event_times[:-1]))
    dts = event_times - starts
    seg_state = np.empty(event_times.size, dtype=np.int64)
    states = latent.states()
    idx = np.searchsorted(latent.jump_times, starts, side="right")
    seg_state = states[idx]

    delta_by_state = params.mu - 0.5 * params.sigma**2
    z = rng.standard_normal(event_times.size)
    increments = delta_by_state[seg_state] * dts + params.sigma[seg_state] * np.sqrt(dts) * z
    if n_jumps:
        increments[event_tag == -1] += jump_sizes

    log_prices = np.log(params.s0) + np.cumsum(increments)
    prices = np.empty(grid.m_obs + 1)
    prices[0] = params.s0
    prices[1:] = np.exp(log_prices[event_tag >= 1])
    return SimulatedPath(prices, latent, jump_sizes)
