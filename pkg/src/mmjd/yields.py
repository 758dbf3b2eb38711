"""Log-yields, threshold-based jump flagging, and the jump-rate MLE.

A yield whose magnitude exceeds the threshold U marks an interval containing
a price jump. Runs of consecutive exceedances are collapsed to the single
largest one; the dropped members rejoin the diffusion sample so the jump
count matches the one-jump-per-episode convention used on daily data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EstimationError, ValidationError

# MAD of a normal sample underestimates the standard deviation by this factor
MAD_TO_SIGMA = 1.4826022185056018


@dataclass(frozen=True)
class YieldSeries:
    """Log-yields y_i = log(S_i / S_{i-1}) on a regular grid with spacing delta."""

    yields: np.ndarray
    delta: float

    def __post_init__(self):
        object.__setattr__(self, "yields", np.asarray(self.yields, dtype=float))

    def __len__(self) -> int:
        return self.yields.size


@dataclass(frozen=True)
class JumpPartition:
    """Split of a yield series into jump-flagged and diffusion observations.

    jump_indices are the kept exceedances (0-based, sorted); merged_indices
    were flagged but dropped by the consecutive-run rule and are counted with
    the diffusion sample. diffusion_yields preserves the original order and
    consists of every yield not in jump_indices.
    """

    jump_indices: np.ndarray
    jump_yields: np.ndarray
    merged_indices: np.ndarray
    diffusion_indices: np.ndarray
    diffusion_yields: np.ndarray
    threshold: float
    delta: float

    @property
    def n_jumps(self) -> int:
        return int(self.jump_indices.size)


@dataclass(frozen=True)
class ThresholdSuggestion:
    value: float
    degenerate: bool  # True when the robust scale collapsed to zero


def log_yields(prices: np.ndarray, delta: float) -> YieldSeries:
    """Elementwise log-ratios of consecutive prices."""
    prices = np.asarray(prices, dtype=float)
    if prices.size < 2:
        raise ValidationError("need at least two prices")
    bad = np.flatnonzero(prices <= 0)
    if bad.size:
        raise ValidationError(f"nonpositive price at index {int(bad[0])}")
    return YieldSeries(np.diff(np.log(prices)), delta)


def detect_jumps(series: YieldSeries, threshold: float) -> JumpPartition:
    """Flag |y| > threshold, then collapse runs of consecutive flags.

    Within each maximal run of consecutive flagged indices only the
    largest-magnitude yield stays flagged (ties break to the earliest);
    the other run members are returned with the diffusion yields.
    """
    if not threshold > 0:
        raise ValidationError("nonpositive threshold")
    y = series.yields
    flagged = np.flatnonzero(np.abs(y) > threshold)
    kept: list[int] = []
    merged: list[int] = []
    i = 0
    while i < flagged.size:
        j = i
        while j + 1 < flagged.size and flagged[j + 1] == flagged[j] + 1:
            j += 1
        run = flagged[i:j + 1]
        best = run[int(np.argmax(np.abs(y[run])))]
        kept.append(int(best))
        merged.extend(int(k) for k in run if k != best)
        i = j + 1
    kept_arr = np.array(kept, dtype=np.int64)
    merged_arr = np.array(sorted(merged), dtype=np.int64)
    diffusion_mask = np.ones(y.size, dtype=bool)
    diffusion_mask[kept_arr] = False
    diffusion_idx = np.flatnonzero(diffusion_mask)
    return JumpPartition(
        jump_indices=kept_arr,
        jump_yields=y[kept_arr],
        merged_indices=merged_arr,
        diffusion_indices=diffusion_idx,
        diffusion_yields=y[diffusion_idx],
        threshold=threshold,
        delta=series.delta,
    )


def estimate_eta(partition: JumpPartition) -> float:
    """MLE of the jump rate: count of kept jumps over the sum of their magnitudes."""
    k = partition.n_jumps
    if k == 0:
        raise EstimationError("no jumps detected; jump rate not identifiable")
    return k / float(np.sum(np.abs(partition.jump_yields)))


def suggest_threshold(series: YieldSeries, multiplier: float = 5.0) -> ThresholdSuggestion:
    """Advisory threshold: multiplier times the MAD-based robust scale of the yields."""
    if not multiplier > 0:
        raise ValidationError("nonpositive multiplier")
    y = series.yields
    scale = MAD_TO_SIGMA * float(np.median(np.abs(y - np.median(y))))
    value = multiplier * scale
    return ThresholdSuggestion(value=value, degenerate=not value > 0)


def high_jump_frequency(partition: JumpPartition, n_yields: int) -> bool:
    """True when detected jumps arrive faster than one per two intervals."""
    return partition.n_jumps * 2 > n_yields


def threshold_from_squared(threshold_sq: float) -> float:
    """Convert a squared-log-return threshold to absolute log-yield units."""
    if not threshold_sq > 0:
        raise ValidationError("nonpositive squared threshold")
    return math.sqrt(threshold_sq)
