"""Prediction models served by the adapter.

Histories arrive as plain position lists sampled at the negotiated delta_t;
models return up to k candidate trajectories of exactly f points. Every
model must be deterministic given the adapter seed: identical requests get
identical answers (the conformance suite checks this).
"""

from __future__ import annotations

import hashlib

import numpy as np


def _request_rng(seed: int, tick: int, agent_id: str) -> np.random.Generator:
    # Stable per (seed, tick, agent): repeated requests must not advance state.
    payload = f"{seed}\x1f{tick}\x1f{agent_id}".encode("utf-8")
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return np.random.default_rng(int.from_bytes(digest, "big"))


class ConstantVelocityModel:
    """Extrapolates the velocity of the final two points; one candidate."""

    name = "cvm"
    min_history = 2
    max_k = 1
    supports_probabilities = False

    def __init__(self, seed: int = 0) -> None:
        self.seed = seed

    def configure(self, delta_t: float, h: int, f: int, k: int) -> None:
        self.f = f

    def predict(self, tick: int, agent_id: str, history: list[list[float]], k: int) -> list:
        last = np.asarray(history[-1], dtype=np.float64)
        prev = np.asarray(history[-2], dtype=np.float64)
        step = last - prev
        m = np.arange(1, self.f + 1, dtype=np.float64)
        points = last[None, :] + m[:, None] * step[None, :]
        return [points.tolist()]


class KalmanConstantVelocityModel:
    """Constant-velocity Kalman filter over the full history window.

    The filtered state (position + velocity) is rolled out for f steps; with
    k > 1 the extra candidates perturb the rollout velocity by samples from
    the velocity posterior, seeded per request.
    """

    name = "kalman"
    min_history = 2
    max_k = 20
    supports_probabilities = False

    def __init__(self, seed: int = 0, process_noise: float = 0.05, measurement_noise: float = 0.05) -> None:
        self.seed = seed
        self.q = process_noise
        self.r = measurement_noise

    def configure(self, delta_t: float, h: int, f: int, k: int) -> None:
        self.delta_t = delta_t
        self.f = f

    def _filter(self, history: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        dt = self.delta_t
        transition = np.array(
            [[1, 0, dt, 0], [0, 1, 0, dt], [0, 0, 1, 0], [0, 0, 0, 1]], dtype=np.float64
        )
        observe = np.array([[1, 0, 0, 0], [0, 1, 0, 0]], dtype=np.float64)
        # Piecewise-constant acceleration process noise.
        g = np.array([0.5 * dt * dt, 0.5 * dt * dt, dt, dt])
        process = self.q**2 * np.outer(g, g)
        measurement = self.r**2 * np.eye(2)

        velocity0 = (history[1] - history[0]) / dt
        state = np.concatenate([history[1], velocity0])
        cov = np.diag([self.r**2, self.r**2, 2 * self.r**2 / dt**2, 2 * self.r**2 / dt**2])

        for z in history[2:]:
            state = transition @ state
            cov = transition @ cov @ transition.T + process
            innovation = z - observe @ state
            s = observe @ cov @ observe.T + measurement
            gain = cov @ observe.T @ np.linalg.inv(s)
            state = state + gain @ innovation
            cov = (np.eye(4) - gain @ observe) @ cov
        return state, cov

    def predict(self, tick: int, agent_id: str, history: list[list[float]], k: int) -> list:
        arr = np.asarray(history, dtype=np.float64)
        state, cov = self._filter(arr)
        pos, vel = state[:2], state[2:]
        m = np.arange(1, self.f + 1, dtype=np.float64)

        def rollout(velocity: np.ndarray) -> list:
            points = pos[None, :] + m[:, None] * (velocity * self.delta_t)[None, :]
            return points.tolist()

        candidates = [rollout(vel)]
        if k > 1:
            rng = _request_rng(self.seed, tick, agent_id)
            vel_cov = cov[2:, 2:] + 1e-12 * np.eye(2)
            chol = np.linalg.cholesky(vel_cov)
            for _ in range(k - 1):
                sample = vel + chol @ rng.standard_normal(2)
                candidates.append(rollout(sample))
        return candidates


class NeuralModelSkeleton:
    """Integration point for a learned predictor (PECNet/SGNet-class).

    To serve a real network, subclass and implement:

    - ``load_weights(path)``: restore the trained model once at startup;
      keep it resident so per-request latency stays within the deadline.
    - ``predict(tick, agent_id, history, k)``: encode the history window
      (resample/normalize exactly as in training), run one batched forward
      pass, decode k candidate trajectories of f points in world meters.

    Declared capabilities must match the real behavior: min_history is the
    shortest window the encoder accepts, max_k the largest candidate set one
    forward pass can emit under the deadline.
    """

    name = "neural-skeleton"
    min_history = 8
    max_k = 20
    supports_probabilities = False

    def __init__(self, seed: int = 0) -> None:
        raise NotImplementedError(
            "neural-skeleton ships no weights; subclass NeuralModelSkeleton and "
            "implement load_weights()/predict()"
        )


MODELS = {
    "cvm": ConstantVelocityModel,
    "kalman": KalmanConstantVelocityModel,
    "neural-skeleton": NeuralModelSkeleton,
}
