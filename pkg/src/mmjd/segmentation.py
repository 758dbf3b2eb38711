"""Between-jump clusters, regime classification, and the partially observed path.

The diffusion yields split into K+1 contiguous blocks separated by the kept
jumps. Each nonempty block is assigned to the regime whose density best
explains it; the block then pins the environment over the time it covers,
while each jump interval is left as a gap with known endpoint states only.

A yield with 0-based index i covers the time interval (i*delta, (i+1)*delta],
so a block of yields a..b covers [a*delta, (b+1)*delta] and the gap left by an
isolated jump has length exactly delta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .mixture_em import MixtureState, e_step
from .model import ObservationGrid
from .yields import JumpPartition


@dataclass(frozen=True)
class Cluster:
    """Contiguous block of diffusion yields between two kept jumps."""

    first_index: int   # 0-based yield index, -1 when the block is empty
    last_index: int    # inclusive
    yields: np.ndarray
    start_time: float
    end_time: float

    @property
    def is_empty(self) -> bool:
        return self.yields.size == 0

    @property
    def length(self) -> float:
        return self.end_time - self.start_time


@dataclass(frozen=True)
class Segment:
    start: float
    end: float
    state: int


@dataclass(frozen=True)
class Gap:
    start: float
    end: float
    left_state: int
    right_state: int

    @property
    def length(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class PartialMjpPath:
    """Alternating labelled segments and unlabelled gaps tiling one interval."""

    segments: list[Segment]
    gaps: list[Gap]

    @property
    def start(self) -> float:
        return self.segments[0].start

    @property
    def end(self) -> float:
        return self.segments[-1].end

    @property
    def covered_horizon(self) -> float:
        return sum(s.end - s.start for s in self.segments) + sum(g.length for g in self.gaps)


def split_clusters(partition: JumpPartition, grid: ObservationGrid) -> list[Cluster]:
    """Cut the diffusion yields at the kept jump indices.

    Returns K+1 clusters in time order; the blocks before the first and after
    the last jump may be empty when the series starts or ends with a jump.
    """
    y_index = partition.diffusion_indices
    y_vals = partition.diffusion_yields
    delta = partition.delta
    bounds = np.concatenate(([-1], partition.jump_indices, [grid.m_obs]))
    clusters = []
    for k in range(len(bounds) - 1):
        lo, hi = bounds[k], bounds[k + 1]
        sel = (y_index > lo) & (y_index < hi)
        idx = y_index[sel]
        if idx.size == 0:
            edge = (lo + 1) * delta
            clusters.append(Cluster(-1, -1, np.empty(0), edge, edge))
        else:
            a, b = int(idx[0]), int(idx[-1])
            clusters.append(Cluster(a, b, y_vals[sel], a * delta, (b + 1) * delta))
    return clusters


def classify_cluster(cluster: Cluster, state: MixtureState, dt: float) -> tuple[int, np.ndarray]:
    """Assign a block to the regime with the largest summed log responsibility.

    Responsibilities are renormalised per observation before the product is
    taken, and everything stays in log space. Ties break to the smallest
    regime index. Returns (label, per-regime log scores).
    """
    if cluster.is_empty:
        raise ValidationError("cannot classify an empty cluster")
    with np.errstate(divide="ignore"):
        log_gamma = np.log(e_step(cluster.yields, state, dt))
    scores = log_gamma.sum(axis=0)
    return int(np.argmax(scores)), scores


def build_partial_path(
    clusters: list[Cluster],
    labels: list[int | None],
    grid: ObservationGrid,
) -> PartialMjpPath:
    """Assemble labelled segments and the gaps between them.

    Empty clusters carry no label (pass None); they are skipped, and the gap
    then runs between the surrounding labelled segments. Empty blocks at the
    series boundary simply shrink the covered interval.
    """
    if len(labels) != len(clusters):
        raise ValidationError("one label required per cluster")
    segments: list[Segment] = []
    gaps: list[Gap] = []
    for cluster, label in zip(clusters, labels):
        if cluster.is_empty:
            if label is not None:
                raise ValidationError("label supplied for an empty cluster")
            continue
        if label is None:
            raise ValidationError("missing label for a nonempty cluster")
        seg = Segment(cluster.start_time, cluster.end_time, int(label))
        if segments:
            prev = segments[-1]
            gaps.append(Gap(prev.end, seg.start, prev.state, seg.state))
        segments.append(seg)
    if not segments:
        raise ValidationError("no nonempty clusters to build a path from")
    return PartialMjpPath(segments=segments, gaps=gaps)
