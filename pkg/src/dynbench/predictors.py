"""Predictor contract and the constant-velocity baseline family.

A predictor maps a batch of agent histories to candidate future trajectories
under a per-tick deadline. Three output modalities exist: deterministic (one
trajectory), stochastic (several, unweighted), probabilistic (several, each
weighted). The baselines extrapolate the final observed velocity; the
stochastic/probabilistic variants perturb that velocity once per candidate.
"""

from __future__ import annotations

import enum
import math
import zlib
from dataclasses import dataclass, replace
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .errors import ConfigError, ContractError
from .scenes import TrackPoint
from .seeding import rng_for

PROB_SUM_TOL = 1e-6


class Modality(str, enum.Enum):
    DETERMINISTIC = "deterministic"
    STOCHASTIC = "stochastic"
    PROBABILISTIC = "probabilistic"


@dataclass(frozen=True)
class RequestItem:
    agent_id: str
    history: tuple[TrackPoint, ...]
    eligible: bool

    def __post_init__(self) -> None:
        if not self.history:
            raise ContractError(f"empty history for agent {self.agent_id!r}")


@dataclass(frozen=True)
class PredictionRequest:
    """One tick's batch: variable size (0..N items), horizon, candidate budget, deadline."""

    tick: int
    items: tuple[RequestItem, ...]
    horizon_f: int
    k: int
    deadline: float

    def __post_init__(self) -> None:
        if self.horizon_f < 1:
            raise ContractError(f"horizon_f must be >= 1, got {self.horizon_f}")
        if self.k < 1:
            raise ContractError(f"k must be >= 1, got {self.k}")


@dataclass(frozen=True, eq=False)
class CandidateTrajectory:
    """Exactly F future positions; probability present only for probabilistic output."""

    points: np.ndarray
    probability: float | None = None

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
            raise ContractError(f"candidate must be an (F, 2) array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ContractError("candidate contains non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.probability is not None and not 0.0 <= self.probability <= 1.0:
            raise ContractError(f"probability must be in [0, 1], got {self.probability}")


@dataclass(frozen=True)
class PredictionRecord:
    agent_id: str
    issue_tick: int
    candidates: tuple[CandidateTrajectory, ...]
    inference_elapsed: float
    modality: Modality

    def __post_init__(self) -> None:
        if not self.candidates:
            raise ContractError(f"record for {self.agent_id!r} has no candidates")
        if self.modality is Modality.DETERMINISTIC and len(self.candidates) != 1:
            raise ContractError("deterministic records must carry exactly one candidate")
        if self.modality is Modality.PROBABILISTIC and any(
            c.probability is None for c in self.candidates
        ):
            raise ContractError("probabilistic records must weight every candidate")


def validate_record(record: PredictionRecord, horizon_f: int) -> None:
    """Contract-boundary check applied to every record, in-process or bridged."""
    for cand in record.candidates:
        if cand.points.shape[0] != horizon_f:
            raise ContractError(
                f"candidate for {record.agent_id!r} has {cand.points.shape[0]} points, expected {horizon_f}"
            )
    if record.modality is Modality.PROBABILISTIC:
        total = math.fsum(c.probability for c in record.candidates)
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ContractError(f"candidate probabilities sum to {total}, expected 1")


@runtime_checkable
class Predictor(Protocol):
    name: str
    modality: Modality
    min_history: int

    def predict(self, request: PredictionRequest) -> list[PredictionRecord]: ...


def _agent_key(agent_id: str) -> int:
    return zlib.crc32(agent_id.encode("utf-8"))


def _final_step(history: Sequence[TrackPoint]) -> np.ndarray:
    """Per-tick displacement from the final two points (gap-aware)."""
    last, prev = history[-1], history[-2]
    gap = last.t - prev.t
    return np.array(
        [(last.pos[0] - prev.pos[0]) / gap, (last.pos[1] - prev.pos[1]) / gap]
    )


def _rollout(last: TrackPoint, step: np.ndarray, horizon: int) -> np.ndarray:
    m = np.arange(1, horizon + 1, dtype=np.float64)
    return np.array(last.pos) + m[:, None] * step[None, :]


class ConstantVelocityPredictor:
    """Extrapolates the final observed velocity; one candidate, no randomness."""

    name = "cvm"
    modality = Modality.DETERMINISTIC
    min_history = 2

    def predict(self, request: PredictionRequest) -> list[PredictionRecord]:
        records = []
        for item in request.items:
            if not item.eligible or len(item.history) < 2:
                continue
            step = _final_step(item.history)
            points = _rollout(item.history[-1], step, request.horizon_f)
            records.append(
                PredictionRecord(
                    agent_id=item.agent_id,
                    issue_tick=request.tick,
                    candidates=(CandidateTrajectory(points),),
                    inference_elapsed=0.0,
                    modality=self.modality,
                )
            )
        return records


class _PerturbedVelocityBase:
    """Shared sampling for the stochastic/probabilistic baselines.

    Each candidate perturbs the final velocity once: speed scaled by (1+eps)
    with eps ~ N(0, sigma_speed^2), heading rotated by theta ~ N(0,
    sigma_angle^2). Candidate i is identical for every requested k (the RNG
    substream depends only on seed, tick, and agent), so candidate sets are
    nested across k by construction.
    """

    min_history = 2

    def __init__(self, sigma_speed: float = 0.1, sigma_angle: float = 0.2, seed: int = 0) -> None:
        if sigma_speed < 0 or sigma_angle < 0:
            raise ConfigError("perturbation sigmas must be >= 0")
        self.sigma_speed = sigma_speed
        self.sigma_angle = sigma_angle
        self.seed = seed

    def _samples(self, tick: int, agent_id: str, k: int) -> np.ndarray:
        rng = rng_for(self.seed, self.name, tick, _agent_key(agent_id))
        return rng.standard_normal((k, 2))

    def _candidate_points(
        self, item: RequestItem, z: np.ndarray, horizon: int
    ) -> np.ndarray:
        step = _final_step(item.history)
        scale = 1.0 + self.sigma_speed * z[0]
        theta = self.sigma_angle * z[1]
        c, s = math.cos(theta), math.sin(theta)
        rotated = np.array([c * step[0] - s * step[1], s * step[0] + c * step[1]])
        return _rollout(item.history[-1], scale * rotated, horizon)


class NoisyConstantVelocityPredictor(_PerturbedVelocityBase):
    """k perturbed-velocity candidates, unweighted."""

    name = "noisy_cvm"
    modality = Modality.STOCHASTIC

    def predict(self, request: PredictionRequest) -> list[PredictionRecord]:
        records = []
        for item in request.items:
            if not item.eligible or len(item.history) < 2:
                continue
            zs = self._samples(request.tick, item.agent_id, request.k)
            candidates = tuple(
                CandidateTrajectory(self._candidate_points(item, z, request.horizon_f))
                for z in zs
            )
            records.append(
                PredictionRecord(
                    agent_id=item.agent_id,
                    issue_tick=request.tick,
                    candidates=candidates,
                    inference_elapsed=0.0,
                    modality=self.modality,
                )
            )
        return records


class ProbabilisticConstantVelocityPredictor(_PerturbedVelocityBase):
    """Perturbed-velocity candidates weighted by the density of their own perturbation."""

    name = "prob_cvm"
    modality = Modality.PROBABILISTIC

    def predict(self, request: PredictionRequest) -> list[PredictionRecord]:
        records = []
        for item in request.items:
            if not item.eligible or len(item.history) < 2:
                continue
            zs = self._samples(request.tick, item.agent_id, request.k)
            log_w = np.zeros(len(zs))
            # A zero-sigma dimension perturbs nothing, so it cannot discriminate.
            if self.sigma_speed > 0:
                log_w -= 0.5 * zs[:, 0] ** 2
            if self.sigma_angle > 0:
                log_w -= 0.5 * zs[:, 1] ** 2
            w = np.exp(log_w - log_w.max())
            probs = w / w.sum()
            candidates = tuple(
                CandidateTrajectory(
                    self._candidate_points(item, z, request.horizon_f), probability=float(p)
                )
                for z, p in zip(zs, probs)
            )
            records.append(
                PredictionRecord(
                    agent_id=item.agent_id,
                    issue_tick=request.tick,
                    candidates=candidates,
                    inference_elapsed=0.0,
                    modality=self.modality,
                )
            )
        return records


def select_top_k(
    record: PredictionRecord, k: int, rng: np.random.Generator
) -> PredictionRecord:
    """Reduce a record to at most k candidates.

    Probabilistic records keep the k most likely candidates (descending
    probability, lower index wins ties); stochastic records keep k distinct
    uniformly random candidates; deterministic records pass through.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    n = len(record.candidates)
    if n <= k or record.modality is Modality.DETERMINISTIC:
        return record
    if record.modality is Modality.PROBABILISTIC:
        order = sorted(range(n), key=lambda i: (-record.candidates[i].probability, i))
        chosen = order[:k]
    else:
        chosen = sorted(int(i) for i in rng.choice(n, size=k, replace=False))
    return replace(record, candidates=tuple(record.candidates[i] for i in chosen))


def build_predictor(
    name: str,
    *,
    sigma_speed: float = 0.1,
    sigma_angle: float = 0.2,
    seed: int = 0,
) -> Predictor:
    """In-process predictor factory keyed by CLI name."""
    if name == "cvm":
        return ConstantVelocityPredictor()
    if name == "noisy_cvm":
        return NoisyConstantVelocityPredictor(sigma_speed, sigma_angle, seed)
    if name == "prob_cvm":
        return ProbabilisticConstantVelocityPredictor(sigma_speed, sigma_angle, seed)
    raise ConfigError(f"unknown predictor {name!r}")
