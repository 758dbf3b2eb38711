"""Stochastic EM for the generator matrix.

Each iteration imputes the environment path over every gap with an
endpoint-conditioned draw (rejection sampling of forward paths), accumulates
transition counts and occupation times over segments plus imputed bridges,
and updates the generator by the closed-form rate MLE q_ij = N_ij / R_i. The
point estimate is the entrywise mean of the post-burn-in iterates and the
confidence intervals come from the observed Fisher information of the rates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from statistics import NormalDist
from typing import Iterable, Sequence

import numpy as np

from .errors import BridgeStallError, EstimationError, ValidationError
from .model import IntensityMatrix, MjpPath
from .segmentation import PartialMjpPath, Segment

# lifts zeroed rates so every endpoint pair stays reachable while sampling;
# never enters reported estimates
BRIDGE_RATE_FLOOR = 1e-8


@dataclass(frozen=True)
class SufficientStats:
    """Transition counts N_ij and occupation times R_i of a (partial) path."""

    n_jumps: np.ndarray    # (m, m), zero diagonal
    occupation: np.ndarray  # (m,)

    def __post_init__(self):
        object.__setattr__(self, "n_jumps", np.asarray(self.n_jumps, dtype=float))
        object.__setattr__(self, "occupation", np.asarray(self.occupation, dtype=float))

    @property
    def m(self) -> int:
        return self.occupation.size

    @property
    def total_time(self) -> float:
        return float(self.occupation.sum())


@dataclass(frozen=True)
class SemResult:
    q_hat: IntensityMatrix
    trace: np.ndarray          # (iterations, m, m) generator iterates
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    iterations_used: int
    burn_in: int
    mean_stats: SufficientStats          # post-burn-in average
    stats_trace: list[SufficientStats]   # one entry per iteration
    warnings: list[str]


def _check_state(q: IntensityMatrix, state: int) -> None:
    if not 0 <= state < q.m:
        raise ValidationError("state index out of range")


def _forward_paths(rates: np.ndarray, x_start: int, length: float, size: int,
                   rng: np.random.Generator):
    """Simulate `size` independent forward paths over [0, length].

    Returns (final_states, jump_counts, jump_times, jump_states) where the
    last two are (size, width) padded arrays.
    """
    m = rates.shape[0]
    exit_rates = -np.diag(rates)
    cum = np.cumsum(np.where(np.eye(m, dtype=bool), 0.0, rates), axis=1)
    last_reachable = np.array([
        int(np.flatnonzero(row).max()) if np.any(row) else -1
        for row in (cum > 0)
    ])

    width = 8
    jump_times = np.zeros((size, width))
    jump_states = np.zeros((size, width), dtype=np.int64)
    n_jumps = np.zeros(size, dtype=np.int64)
    t = np.zeros(size)
    cur = np.full(size, x_start, dtype=np.int64)
    active = np.ones(size, dtype=bool)

    while np.any(active):
        idx = np.flatnonzero(active)
        rate = exit_rates[cur[idx]]
        positive = rate > 0
        # absorbing states never leave; finalize those attempts
        if not np.all(positive):
            active[idx[~positive]] = False
            idx = idx[positive]
            if idx.size == 0:
                break
            rate = rate[positive]
        t_new = t[idx] - np.log1p(-rng.random(idx.size)) / rate
        done = t_new >= length
        active[idx[done]] = False
        idx = idx[~done]
        if idx.size == 0:
            continue
        t[idx] = t_new[~done]

        rows = cum[cur[idx]]
        u = rng.random(idx.size) * rows[:, -1]
        nxt = np.sum(u[:, None] >= rows, axis=1)
        nxt = np.minimum(nxt, m - 1)
        # float edge: never land on a zero-rate column
        bad = rates[cur[idx], nxt] <= 0
        if np.any(bad):
            nxt[bad] = last_reachable[cur[idx][bad]]

        k = n_jumps[idx]
        if np.any(k >= width):
            grow = width
            jump_times = np.pad(jump_times, ((0, 0), (0, grow)))
            jump_states = np.pad(jump_states, ((0, 0), (0, grow)))
            width += grow
        jump_times[idx, k] = t[idx]
        jump_states[idx, k] = nxt
        n_jumps[idx] = k + 1
        cur[idx] = nxt

    return cur, n_jumps, jump_times, jump_states


def _sample_bridge(
    q: IntensityMatrix,
    x_start: int,
    x_end: int,
    length: float,
    rng: np.random.Generator,
    max_attempts: int,
    initial_batch: int | None,
) -> tuple[MjpPath, int]:
    batch = initial_batch or (16 if x_start == x_end else 256)
    attempts = 0
    accepted = 0
    while attempts < max_attempts:
        batch = min(batch, max_attempts - attempts)
        finals, n_jumps, jt, js = _forward_paths(q.rates, x_start, length, batch, rng)
        attempts += batch
        hits = np.flatnonzero(finals == x_end)
        accepted += hits.size
        if hits.size:
            i = int(hits[0])
            k = int(n_jumps[i])
            return MjpPath(x_start, jt[i, :k].copy(), js[i, :k].copy(), length), attempts
        batch = min(batch * 2, 1 << 15)
    raise BridgeStallError(x_start, x_end, length, attempts, accepted)


def sample_bridge(
    q: IntensityMatrix,
    x_start: int,
    x_end: int,
    length: float,
    rng: np.random.Generator,
    max_attempts: int = 10**6,
    initial_batch: int | None = None,
) -> MjpPath:
    """Draw an environment path conditioned on both endpoint states.

    Forward paths are simulated from x_start over the full interval and the
    first one ending at x_end is returned (rejection sampling, evaluated in
    batches). Raises BridgeStallError with the running acceptance estimate
    once max_attempts forward paths have been rejected.
    """
    _check_state(q, x_start)
    _check_state(q, x_end)
    if not length > 0:
        raise ValidationError("nonpositive bridge length")
    path, _ = _sample_bridge(q, x_start, x_end, length, rng, max_attempts, initial_batch)
    return path


def _collect_bridges(
    q: IntensityMatrix,
    x_start: int,
    x_end: int,
    length: float,
    count: int,
    rng: np.random.Generator,
    max_attempts: int,
    initial_batch: int | None,
) -> tuple[list[MjpPath], int]:
    """Draw `count` independent accepted bridges for one endpoint signature.

    Same rejection scheme as sample_bridge, but acceptances from a single
    forward batch are shared across the bridges that need this signature.
    """
    paths: list[MjpPath] = []
    batch = initial_batch or (16 if x_start == x_end else 256) * count
    attempts = 0
    while attempts < max_attempts:
        batch = int(min(batch, max_attempts - attempts, 1 << 17))
        finals, n_jumps, jt, js = _forward_paths(q.rates, x_start, length, batch, rng)
        attempts += batch
        for i in np.flatnonzero(finals == x_end)[: count - len(paths)]:
            k = int(n_jumps[i])
            paths.append(MjpPath(x_start, jt[i, :k].copy(), js[i, :k].copy(), length))
        if len(paths) == count:
            return paths, attempts
        rate = max(len(paths), 1) / attempts
        batch = int(np.ceil(1.5 * (count - len(paths)) / rate))
    raise BridgeStallError(x_start, x_end, length, attempts, len(paths))


def stats_from_path(
    segments: Sequence[Segment],
    bridges: Iterable[MjpPath],
    m: int,
) -> SufficientStats:
    """Accumulate N_ij and R_i over labelled segments and imputed bridges."""
    n = np.zeros((m, m))
    r = np.zeros(m)
    for seg in segments:
        r[seg.state] += seg.end - seg.start
    for path in bridges:
        r += path.occupation(m)
        states = path.states()
        if states.size > 1:
            np.add.at(n, (states[:-1], states[1:]), 1.0)
    return SufficientStats(n_jumps=n, occupation=r)


def _rate_mle(stats: SufficientStats) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form generator MLE; returns (matrix, mask of never-visited rows)."""
    m = stats.m
    r = stats.occupation
    n = stats.n_jumps
    empty = r <= 0
    involved = (n.sum(axis=1) > 0) | (n.sum(axis=0) > 0)
    bad = np.flatnonzero(empty & (n.sum(axis=1) > 0))
    if bad.size:
        raise EstimationError(
            f"occupation zero with observed jumps out of state {int(bad[0]) + 1}"
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        rates = np.where(r[:, None] > 0, n / r[:, None], 0.0)
    np.fill_diagonal(rates, 0.0)
    rates -= np.diag(rates.sum(axis=1))
    return rates, empty & ~involved


def mle_q(stats: SufficientStats) -> IntensityMatrix:
    """q_ij = N_ij / R_i off the diagonal, diagonal set to minus the row sum.

    A state that was never visited and has no incident counts yields an
    all-zero row and a warning; zero occupation combined with observed jumps
    is an error.
    """
    rates, never_visited = _rate_mle(stats)
    for i in np.flatnonzero(never_visited):
        warnings.warn(f"state {int(i) + 1} never visited; its rate row is zero")
    return IntensityMatrix(rates)


def fisher_ci(stats: SufficientStats, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
    """Normal-approximation intervals for the off-diagonal rates.

    The observed information of a rate with N events over exposure R gives
    standard error q_hat / sqrt(N); entries with no observed transitions get
    the degenerate interval [0, 0].
    """
    if not 0 < level < 1:
        raise ValidationError("confidence level outside (0, 1)")
    z = NormalDist().inv_cdf(0.5 * (1.0 + level))
    rates, _ = _rate_mle(stats)
    off = ~np.eye(stats.m, dtype=bool)
    half = np.zeros_like(rates)
    with np.errstate(divide="ignore", invalid="ignore"):
        se = np.where(stats.n_jumps > 0, rates / np.sqrt(stats.n_jumps), 0.0)
    half[off] = z * se[off]
    lower = np.where(off, rates - half, 0.0)
    upper = np.where(off, rates + half, 0.0)
    lower[~off] = 0.0
    upper[~off] = 0.0
    lower[stats.n_jumps == 0] = 0.0
    upper[stats.n_jumps == 0] = 0.0
    np.fill_diagonal(lower, 0.0)
    np.fill_diagonal(upper, 0.0)
    return lower, upper


def _sampling_matrix(rates: np.ndarray, floor: float) -> IntensityMatrix:
    off = np.maximum(rates, floor)
    np.fill_diagonal(off, 0.0)
    return IntensityMatrix(off - np.diag(off.sum(axis=1)))


def run_sem(
    partial: PartialMjpPath,
    q0: IntensityMatrix,
    iters: int,
    burn_in: int | None = None,
    rng: np.random.Generator | None = None,
    level: float = 0.95,
) -> SemResult:
    """Iterate bridge imputation and the generator MLE over a partial path.

    Per iteration: draw one endpoint-conditioned bridge per gap under the
    current generator (with off-diagonal rates floored at BRIDGE_RATE_FLOOR
    so no endpoint pair becomes unreachable), recompute sufficient statistics
    over segments plus bridges, and update the generator. The returned
    estimate is the entrywise mean of the post-burn-in iterates; intervals
    come from fisher_ci applied to the post-burn-in mean statistics.
    """
    if rng is None:
        rng = np.random.default_rng()
    if burn_in is None:
        burn_in = iters // 5
    if not (iters > burn_in >= 0):
        raise ValidationError("need iters > burn_in >= 0")
    q0.validate()
    m = q0.m

    seg_stats = stats_from_path(partial.segments, [], m)
    # gaps sharing endpoints and length draw from one rejection batch per
    # iteration; bridges are i.i.d. given the signature, so sharing is exact
    groups: dict[tuple[int, int, float], int] = {}
    for gap in partial.gaps:
        sig = (gap.left_state, gap.right_state, gap.length)
        groups[sig] = groups.get(sig, 0) + 1
    hints: dict[tuple[int, int, float], int | None] = {sig: None for sig in groups}

    trace = np.empty((iters, m, m))
    stats_trace: list[SufficientStats] = []
    rates = q0.rates
    never_visited_once = np.zeros(m, dtype=bool)

    for it in range(iters):
        sampler_q = _sampling_matrix(rates, BRIDGE_RATE_FLOOR)
        n = seg_stats.n_jumps.copy()
        r = seg_stats.occupation.copy()
        for sig, count in groups.items():
            a, b, length = sig
            try:
                bridges, attempts = _collect_bridges(
                    sampler_q, a, b, length, count, rng,
                    max_attempts=10**6, initial_batch=hints[sig],
                )
            except BridgeStallError as err:
                raise EstimationError(
                    f"gaps with endpoints ({a + 1} -> {b + 1}, length {length:g}) "
                    f"could not be bridged: {err}"
                ) from err
            hints[sig] = int(min(max(16, 2 * attempts), 1 << 17))
            for bridge in bridges:
                r += bridge.occupation(m)
                states = bridge.states()
                if states.size > 1:
                    np.add.at(n, (states[:-1], states[1:]), 1.0)
        stats = SufficientStats(n_jumps=n, occupation=r)
        rates, never_visited = _rate_mle(stats)
        never_visited_once |= never_visited
        trace[it] = rates
        stats_trace.append(stats)

    q_hat = IntensityMatrix(trace[burn_in:].mean(axis=0))
    mean_stats = SufficientStats(
        n_jumps=np.mean([s.n_jumps for s in stats_trace[burn_in:]], axis=0),
        occupation=np.mean([s.occupation for s in stats_trace[burn_in:]], axis=0),
    )
    lower, upper = fisher_ci(mean_stats, level)
    warn_list = [
        f"state {int(i) + 1} never visited; its rate row is zero"
        for i in np.flatnonzero(never_visited_once)
    ]
    return SemResult(
        q_hat=q_hat,
        trace=trace,
        ci_lower=lower,
        ci_upper=upper,
        iterations_used=iters,
        burn_in=burn_in,
        mean_stats=mean_stats,
        stats_trace=stats_trace,
        warnings=warn_list,
    )
