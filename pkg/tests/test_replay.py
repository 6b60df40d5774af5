import time

import pytest

from dynbench.errors import BridgePeerError, ConfigError, SceneAborted
from dynbench.metrics import SceneAccumulator
from dynbench.predictors import ConstantVelocityPredictor, NoisyConstantVelocityPredictor
from dynbench.replay import ReplayConfig, TimeMode, enforce_deadline, run_scene
from dynbench.scenes import ObservationModel, WalkerConfig, generate_synthetic_scene
from dynbench.testing import CrashingPredictor, OraclePredictor, SleepyPredictor
from dynbench.tracking import TrackerConfig

from conftest import linear_walker_config


def exact_tracker():
    return TrackerConfig(alpha=1.0, max_missed=2, h_max=16)


class PeerErrorPredictor:
    name = "peer-error"
    modality = ConstantVelocityPredictor.modality
    min_history = 2

    def predict(self, request):
        raise BridgePeerError("model exploded")


class RecordingPredictor:
    def __init__(self, inner):
        self._inner = inner
        self.requests = []
        self.name = inner.name
        self.modality = inner.modality
        self.min_history = inner.min_history

    def predict(self, request):
        self.requests.append(request)
        return self._inner.predict(request)


class TestEnforceDeadline:
    def instant(self):
        return lambda: []

    def test_instant_never_times_out(self):
        for mode in (TimeMode.VIRTUAL, TimeMode.REALTIME):
            outcome = enforce_deadline(self.instant(), 0.2, mode)
            assert not outcome.timed_out
            assert outcome.records == []

    def test_virtual_runs_to_completion_and_flags(self):
        sentinel = []

        def slow():
            time.sleep(0.1)
            sentinel.append(True)
            return []

        outcome = enforce_deadline(slow, 0.05, TimeMode.VIRTUAL)
        assert outcome.timed_out
        assert sentinel  # computed anyway
        assert outcome.records == []

    def test_realtime_abandons_at_deadline(self):
        def slow():
            time.sleep(0.4)
            return []

        start = time.perf_counter()
        outcome = enforce_deadline(slow, 0.2, TimeMode.REALTIME)
        elapsed = time.perf_counter() - start
        assert outcome.timed_out
        assert outcome.records is None
        assert elapsed < 0.2 + 0.1  # deadline + scheduling slack

    def test_realtime_propagates_crash(self):
        def boom():
            raise RuntimeError("boom")

        with pytest.raises(RuntimeError):
            enforce_deadline(boom, 0.2, TimeMode.REALTIME)


class TestRunScene:
    def test_oracle_scores_zero(self, walker_scene):
        result = run_scene(
            walker_scene,
            ObservationModel(),
            exact_tracker(),
            OraclePredictor(walker_scene),
            ReplayConfig(h=8, f=12, k=1),
        )
        assert result.metrics.min_dyn_ade == pytest.approx(0.0, abs=1e-12)
        assert result.metrics.min_dyn_fde == pytest.approx(0.0, abs=1e-12)
        assert result.matured > 0

    def test_cvm_exact_on_linear_walkers(self):
        scene = generate_synthetic_scene(linear_walker_config(scene_id="lin"), 31)
        result = run_scene(
            scene,
            ObservationModel(),
            exact_tracker(),
            ConstantVelocityPredictor(),
            ReplayConfig(h=8, f=12, k=1),
        )
        assert result.metrics.min_dyn_ade == pytest.approx(0.0, abs=1e-9)
        assert result.metrics.min_dyn_fde == pytest.approx(0.0, abs=1e-9)

    def test_accounting_reconciles(self, walker_scene):
        result = run_scene(
            walker_scene,
            ObservationModel(dropout_prob=0.2, seed=5),
            exact_tracker(),
            ConstantVelocityPredictor(),
            ReplayConfig(h=8, f=12, k=1),
        )
        assert result.issued == result.matured + result.expired
        assert result.issued == sum(t.issued for t in result.ticks)
        assert result.matured == sum(t.matured for t in result.ticks)
        assert result.expired > 0  # agents near scene end can't mature

    def test_instants_only_for_full_horizons(self, walker_scene):
        sink = SceneAccumulator(walker_scene.scene_id, keep_instants=True)
        f = 12
        result = run_scene(
            walker_scene,
            ObservationModel(),
            exact_tracker(),
            ConstantVelocityPredictor(),
            ReplayConfig(h=8, f=f, k=1),
            metrics_sink=sink,
        )
        for inst in result.instants:
            track = walker_scene.agent(inst.agent_id)
            assert track.future_block(inst.issue_tick, f) is not None

    def test_virtual_mode_is_deterministic(self, walker_scene):
        def run():
            sink = SceneAccumulator(walker_scene.scene_id, keep_instants=True)
            return run_scene(
                walker_scene,
                ObservationModel(noise_sigma=0.05, dropout_prob=0.1, seed=3),
                TrackerConfig(alpha=0.5, max_missed=2, h_max=16),
                NoisyConstantVelocityPredictor(0.1, 0.3, seed=11),
                ReplayConfig(h=8, f=6, k=5, seed=17),
                metrics_sink=sink,
            )

        a, b = run(), run()
        assert a.metrics == b.metrics
        assert a.instants == b.instants
        assert a.issued == b.issued
        assert [(t.issued, t.matured, t.ineligible) for t in a.ticks] == [
            (t.issued, t.matured, t.ineligible) for t in b.ticks
        ]

    def test_first_tick_is_ineligible(self, walker_scene):
        recorder = RecordingPredictor(ConstantVelocityPredictor())
        result = run_scene(
            walker_scene,
            ObservationModel(),
            exact_tracker(),
            recorder,
            ReplayConfig(h=8, f=4, k=1),
        )
        first = recorder.requests[0]
        assert all(not item.eligible for item in first.items)
        assert result.ticks[0].issued == 0
        assert result.ticks[0].ineligible == len(first.items)

    def test_predictor_invoked_every_tick(self, walker_scene):
        recorder = RecordingPredictor(ConstantVelocityPredictor())
        run_scene(
            walker_scene,
            ObservationModel(),
            exact_tracker(),
            recorder,
            ReplayConfig(h=8, f=4, k=1),
        )
        assert len(recorder.requests) == walker_scene.duration_ticks

    def test_history_windows_respect_h(self, walker_scene):
        recorder = RecordingPredictor(ConstantVelocityPredictor())
        run_scene(
            walker_scene,
            ObservationModel(),
            exact_tracker(),
            recorder,
            ReplayConfig(h=3, f=4, k=1),
        )
        assert any(
            len(item.history) == 3 for req in recorder.requests for item in req.items
        )
        for req in recorder.requests:
            for item in req.items:
                assert len(item.history) <= 3

    def test_predictor_crash_aborts_scene(self, walker_scene):
        with pytest.raises(SceneAborted, match="synthetic crash"):
            run_scene(
                walker_scene,
                ObservationModel(),
                exact_tracker(),
                CrashingPredictor(ConstantVelocityPredictor(), crash_tick=5),
                ReplayConfig(h=8, f=4, k=1),
            )

    def test_peer_error_is_recoverable(self, walker_scene):
        result = run_scene(
            walker_scene,
            ObservationModel(),
            exact_tracker(),
            PeerErrorPredictor(),
            ReplayConfig(h=8, f=4, k=1),
        )
        assert result.peer_errors == walker_scene.duration_ticks
        assert result.issued == 0
        assert result.metrics.min_dyn_ade is None

    def test_candidate_shortfall_is_counted(self, walker_scene):
        class ShortfallPredictor(NoisyConstantVelocityPredictor):
            name = "shortfall"

            def predict(self, request):
                records = super().predict(request)
                return [
                    r.__class__(
                        agent_id=r.agent_id,
                        issue_tick=r.issue_tick,
                        candidates=r.candidates[:2],
                        inference_elapsed=r.inference_elapsed,
                        modality=r.modality,
                    )
                    for r in records
                ]

        result = run_scene(
            walker_scene,
            ObservationModel(),
            exact_tracker(),
            ShortfallPredictor(0.1, 0.2, seed=1),
            ReplayConfig(h=8, f=4, k=5),
        )
        assert result.shortfalls == result.issued > 0
        assert result.metrics.min_dyn_ade is not None  # scored over what was returned

    def test_h_beyond_tracker_capacity_rejected(self, walker_scene):
        with pytest.raises(ConfigError):
            run_scene(
                walker_scene,
                ObservationModel(),
                TrackerConfig(alpha=1.0, h_max=4),
                ConstantVelocityPredictor(),
                ReplayConfig(h=8, f=4, k=1),
            )


class TestTimeouts:
    def small_scene(self, ticks=4):
        config = WalkerConfig(
            n_agents=3, duration_ticks=ticks, partial_lifespan_prob=0.0, scene_id="tiny"
        )
        return generate_synthetic_scene(config, 3)

    def test_virtual_sleeper_flagged_every_tick(self):
        scene = self.small_scene(4)
        sleepy = SleepyPredictor(ConstantVelocityPredictor(), delay=0.1)
        result = run_scene(
            scene,
            ObservationModel(),
            exact_tracker(),
            sleepy,
            ReplayConfig(delta_t=0.4, h=8, f=2, k=1, deadline=0.05),
        )
        assert result.timeout_ticks == scene.duration_ticks
        assert result.issued == 0
        assert result.matured == 0
        assert result.metrics.min_dyn_ade is None
        assert result.metrics.timeouts == scene.duration_ticks

    def test_realtime_sleeper_keeps_cadence(self):
        scene = self.small_scene(3)
        sleepy = SleepyPredictor(ConstantVelocityPredictor(), delay=0.4)
        result = run_scene(
            scene,
            ObservationModel(),
            exact_tracker(),
            sleepy,
            ReplayConfig(
                delta_t=0.2, h=8, f=2, k=1, time_mode=TimeMode.REALTIME, deadline=0.2
            ),
        )
        assert result.timeout_ticks == scene.duration_ticks
        assert result.wall_time <= scene.duration_ticks * (0.2 + 0.15)

    def test_realtime_fast_predictor_never_times_out(self):
        scene = self.small_scene(3)
        result = run_scene(
            scene,
            ObservationModel(),
            exact_tracker(),
            ConstantVelocityPredictor(),
            ReplayConfig(delta_t=0.1, h=8, f=2, k=1, time_mode=TimeMode.REALTIME),
        )
        assert result.timeout_ticks == 0
        # paced at delta_t per tick
        assert result.wall_time >= (scene.duration_ticks - 1) * 0.1

    def test_realtime_deadline_cannot_exceed_tick(self):
        with pytest.raises(ConfigError):
            ReplayConfig(delta_t=0.4, deadline=0.5, time_mode=TimeMode.REALTIME)

    def test_virtual_deadline_may_exceed_tick(self):
        ReplayConfig(delta_t=0.4, deadline=5.0, time_mode=TimeMode.VIRTUAL)
