"""Displacement-error metrics and their streaming accumulators.

ADE is the mean L2 distance over all horizon points, FDE the L2 distance
at the final point. The dynamic variants are computed online: one
(min-over-candidates ADE, FDE) pair per prediction instant, averaged per
agent, then per scene, then per dataset (all unweighted means).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError


def _as_block(points: object, name: str) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
        raise ContractError(f"{name} must be an (F, 2) array with F >= 1, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} contains non-finite coordinates")
    return arr


def ade(pred: object, gt: object) -> float:
    """Average L2 distance between corresponding points of two trajectories."""
    p = _as_block(pred, "pred")
    g = _as_block(gt, "gt")
    if p.shape != g.shape:
        raise ContractError(f"length mismatch: pred {p.shape[0]} vs gt {g.shape[0]}")
    return float(np.linalg.norm(p - g, axis=1).mean())


def fde(pred: object, gt: object) -> float:
    """L2 distance between the final points of two trajectories."""
    p = _as_block(pred, "pred")
    g = _as_block(gt, "gt")
    if p.shape != g.shape:
        raise ContractError(f"length mismatch: pred {p.shape[0]} vs gt {g.shape[0]}")
    return float(np.linalg.norm(p[-1] - g[-1]))


@dataclass(frozen=True)
class InstantError:
    """Per-candidate errors of one prediction instant plus their Best-of-N minima.

    The ADE argmin and FDE argmin are independent: the best-ADE candidate
    need not be the best-FDE candidate. Ties resolve to the lowest index.
    """

    agent_id: str
    issue_tick: int
    ades: tuple[float, ...]
    fdes: tuple[float, ...]
    min_ade: float
    min_fde: float
    argmin_ade: int
    argmin_fde: int


def score_instant(record, gt_future: object) -> InstantError:
    """Score every candidate of one prediction record against the ground truth future."""
    g = _as_block(gt_future, "gt_future")
    ades = []
    fdes = []
    for cand in record.candidates:
        ades.append(ade(cand.points, g))
        fdes.append(fde(cand.points, g))
    ia = int(np.argmin(ades))
    ifd = int(np.argmin(fdes))
    return InstantError(
        agent_id=record.agent_id,
        issue_tick=record.issue_tick,
        ades=tuple(ades),
        fdes=tuple(fdes),
        min_ade=ades[ia],
        min_fde=fdes[ifd],
        argmin_ade=ia,
        argmin_fde=ifd,
    )


@dataclass
class AgentAccumulator:
    """Streaming per-agent sums of instant minima."""

    agent_id: str
    sum_min_ade: float = 0.0
    sum_min_fde: float = 0.0
    instant_count: int = 0

    def add(self, err: InstantError) -> None:
        if err.agent_id != self.agent_id:
            raise ContractError(f"instant for {err.agent_id!r} fed to accumulator {self.agent_id!r}")
        self.sum_min_ade += err.min_ade
        self.sum_min_fde += err.min_fde
        self.instant_count += 1

    @property
    def mean_min_ade(self) -> float:
        if self.instant_count == 0:
            raise ContractError("mean of an empty accumulator")
        return self.sum_min_ade / self.instant_count

    @property
    def mean_min_fde(self) -> float:
        if self.instant_count == 0:
            raise ContractError("mean of an empty accumulator")
        return self.sum_min_fde / self.instant_count


def accumulate(acc: AgentAccumulator, err: InstantError) -> AgentAccumulator:
    acc.add(err)
    return acc


@dataclass(frozen=True)
class SceneMetrics:
    """Scene-level means over agents that scored at least one instant."""

    scene_id: str
    min_dyn_ade: float | None
    min_dyn_fde: float | None
    agents_scored: int
    timeouts: int = 0
    expired: int = 0
    ineligible: int = 0


@dataclass(frozen=True)
class DatasetMetrics:
    """Unweighted mean of scene values, with the per-scene breakdown kept."""

    min_dyn_ade: float | None
    min_dyn_fde: float | None
    scenes: tuple[SceneMetrics, ...]


def finalize_scene(
    scene_id: str,
    accumulators: Iterable[AgentAccumulator],
    *,
    timeouts: int = 0,
    expired: int = 0,
    ineligible: int = 0,
) -> SceneMetrics:
    """Fold per-agent means into one scene mean; agents with zero instants are excluded.

    math.fsum keeps the scene mean exactly permutation-invariant over agents.
    """
    scored = [a for a in accumulators if a.instant_count > 0]
    if not scored:
        return SceneMetrics(scene_id, None, None, 0, timeouts, expired, ineligible)
    mean_ade = math.fsum(a.mean_min_ade for a in scored) / len(scored)
    mean_fde = math.fsum(a.mean_min_fde for a in scored) / len(scored)
    return SceneMetrics(scene_id, mean_ade, mean_fde, len(scored), timeouts, expired, ineligible)


def aggregate_dataset(scene_metrics: Sequence[SceneMetrics]) -> DatasetMetrics:
    """Unweighted mean over scenes that produced a value; absent if none did."""
    with_values = [m for m in scene_metrics if m.min_dyn_ade is not None]
    if not with_values:
        return DatasetMetrics(None, None, tuple(scene_metrics))
    dyn_ade = math.fsum(m.min_dyn_ade for m in with_values) / len(with_values)
    dyn_fde = math.fsum(m.min_dyn_fde for m in with_values) / len(with_values)
    return DatasetMetrics(dyn_ade, dyn_fde, tuple(scene_metrics))


def mean_std(values: Sequence[float]) -> tuple[float, float | None]:
    """Arithmetic mean and sample standard deviation (n-1); std absent below 2 values."""
    if not values:
        raise ContractError("mean_std of an empty sequence")
    mean = math.fsum(values) / len(values)
    if len(values) < 2:
        return mean, None
    var = math.fsum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return mean, math.sqrt(var)


class SceneAccumulator:
    """Collects instant errors for one scene run and finalizes them.

    Owned by a single replay engine; operational counts are set by the
    engine before finalize(). With keep_instants=True every InstantError is
    retained so aggregate values can be re-derived independently.
    """

    def __init__(self, scene_id: str, keep_instants: bool = False) -> None:
        self.scene_id = scene_id
        self.agents: dict[str, AgentAccumulator] = {}
        self.instants: list[InstantError] | None = [] if keep_instants else None
        self.timeouts = 0
        self.expired = 0
        self.ineligible = 0

    def add(self, err: InstantError) -> None:
        acc = self.agents.get(err.agent_id)
        if acc is None:
            acc = self.agents[err.agent_id] = AgentAccumulator(err.agent_id)
        acc.add(err)
        if self.instants is not None:
            self.instants.append(err)

    def finalize(self) -> SceneMetrics:
        return finalize_scene(
            self.scene_id,
            self.agents.values(),
            timeouts=self.timeouts,
            expired=self.expired,
            ineligible=self.ineligible,
        )
