"""
Tests for the click-level Monte Carlo.
"""
import dataclasses
import math

import numpy as np
import pytest

from polarization import BALANCED, FIDUCIALS, fiducial
from simulation.engine import (
    CHUNK_TRIALS,
    ClickTable,
    SequencePlan,
    background_plan,
    binomial_from_uniform,
    poisson_from_uniform,
    run_sequence,
    run_trial,
    simulate,
    summarize,
)
from simulation.calibration import expected_read_density
from simulation.protocol import NoiseParams, ProtocolTiming, herald_probability
from simulation.streams import TrialStreams
from utils import ConfigError

TOMOGRAPHY = ("H-V", "S-T", "L-R")


def make_plan(noise: NoiseParams, **overrides) -> SequencePlan:
    values = dict(
        inputs=(fiducial("H"), fiducial("R")),
        settings=TOMOGRAPHY,
        trials=5000,
        seed=17,
        noise=noise,
        timing=ProtocolTiming(),
        heralded_only=True,
    )
    values.update(overrides)
    return SequencePlan(**values)


def assert_tables_equal(a: ClickTable, b: ClickTable) -> None:
    assert a.settings == b.settings
    for column in ("trial", "input_index", "heralded", "swapped", "setting", "d1", "d2", "d3"):
        assert np.array_equal(getattr(a, column), getattr(b, column)), column


class TestSamplers:
    def test_poisson_mean(self) -> None:
        u = TrialStreams(seed=3).uniforms(0, 50_000)[:, 0]
        draws = poisson_from_uniform(u, 2.5)
        assert draws.mean() == pytest.approx(2.5, abs=5 * math.sqrt(2.5 / len(u)))

    def test_poisson_background_mean(self, calibrated: NoiseParams) -> None:
        mean = calibrated.effective_background() * calibrated.q
        assert mean == pytest.approx(0.00682, abs=1e-4)
        draws = poisson_from_uniform(np.linspace(0, 0.999, 10), 0.00341)
        assert draws.tolist() == [0] * 9 + [1]
        u = TrialStreams(seed=8).uniforms(0, 200_000)[:, 0]
        sampled = poisson_from_uniform(u, mean)
        assert sampled.mean() == pytest.approx(mean, abs=5 * math.sqrt(mean / len(u)))

    @pytest.mark.parametrize("mean", [1e-12, 1e-6, 0.5, 40.0])
    def test_poisson_table_covers_any_mean(self, mean: float) -> None:
        draws = poisson_from_uniform(np.array([0.0, 0.5, 0.999999]), mean)
        assert draws.min() >= 0
        assert np.all(np.diff(draws) >= 0)

    def test_poisson_zero_mean(self) -> None:
        assert not poisson_from_uniform(np.array([0.1, 0.99]), 0.0).any()

    def test_binomial_single_photon(self) -> None:
        u = np.array([0.1, 0.6, 0.4])
        n = np.array([1, 1, 0])
        p = np.array([0.5, 0.5, 0.5])
        assert binomial_from_uniform(u, n, p).tolist() == [1, 0, 0]

    def test_binomial_bounds(self) -> None:
        u = np.linspace(0.001, 0.999, 100)
        n = np.full(100, 4)
        draws = binomial_from_uniform(u, n, np.full(100, 0.3))
        assert draws.min() >= 0
        assert draws.max() <= 4


class TestDeterminism:
    def test_same_seed_same_table(self, calibrated: NoiseParams) -> None:
        plan = make_plan(calibrated)
        assert_tables_equal(simulate(plan), simulate(plan))

    def test_worker_count_does_not_change_output(self, calibrated: NoiseParams) -> None:
        plan = make_plan(calibrated, trials=CHUNK_TRIALS + 1000)
        assert_tables_equal(simulate(plan), simulate(dataclasses.replace(plan, workers=2)))

    def test_different_seeds_differ(self, calibrated: NoiseParams) -> None:
        a = simulate(make_plan(calibrated))
        b = simulate(make_plan(calibrated, seed=18))
        assert not np.array_equal(a.d2, b.d2)

    def test_sequence_matches_single_trials(self, calibrated: NoiseParams) -> None:
        noise = dataclasses.replace(calibrated, q=0.9, dark_rate=0.05)
        plan = make_plan(noise, inputs=(fiducial("S"),), trials=60)
        streams = TrialStreams(plan.seed)
        expected = [
            run_trial(
                fiducial("S"),
                TOMOGRAPHY[index % 3],
                noise,
                plan.timing,
                streams,
                trial_index=index,
                heralded_only=True,
            )
            for index in range(60)
        ]
        assert run_sequence(plan) == expected

    def test_summary_matches_table(self, calibrated: NoiseParams) -> None:
        plan = make_plan(calibrated)
        expected = simulate(plan).summarize(len(plan.inputs))
        actual = summarize(plan)
        for name in ("windows", "heralds", "counted", "plus", "minus", "n12", "n13", "n123"):
            assert np.array_equal(getattr(expected, name), getattr(actual, name)), name


class TestSchedule:
    def test_swap_alternates(self, noiseless: NoiseParams) -> None:
        table = simulate(make_plan(noiseless, trials=4, inputs=(fiducial("H"),)))
        assert table.swapped.tolist() == [False, True, False, True]

    def test_start_swapped(self, noiseless: NoiseParams) -> None:
        plan = make_plan(noiseless, trials=4, inputs=(fiducial("H"),), start_swapped=True)
        assert simulate(plan).swapped.tolist() == [True, False, True, False]

    def test_settings_rotate(self, noiseless: NoiseParams) -> None:
        table = simulate(make_plan(noiseless, trials=6, inputs=(fiducial("H"),)))
        assert table.setting_names() == list(TOMOGRAPHY) * 2

    def test_inputs_follow_each_other(self, noiseless: NoiseParams) -> None:
        table = simulate(make_plan(noiseless, trials=10))
        assert table.trial.tolist() == list(range(20))
        assert table.input_index.tolist() == [0] * 10 + [1] * 10


class TestClicks:
    @pytest.mark.parametrize("tag,port", [("H", "d2"), ("V", "d3"), ("R", "d2"), ("L", "d3")])
    def test_perfect_device_single_click(self, noiseless: NoiseParams, tag: str, port: str) -> None:
        noise = dataclasses.replace(noiseless, q=1.0, epsilon_retrieval=1.0)
        setting = "H-V" if tag in ("H", "V") else "L-R"
        table = simulate(make_plan(noise, inputs=(fiducial(tag),), settings=(setting,), trials=200))
        other = "d3" if port == "d2" else "d2"
        assert (getattr(table, port) == 1).all()
        assert (getattr(table, other) == 0).all()
        assert (table.d1 == 1).all()

    def test_herald_rate_is_binomial(self, noiseless: NoiseParams) -> None:
        noise = dataclasses.replace(noiseless, alpha_perp=1.0, eta=1e-3, q=0.1)
        p = herald_probability(noise)
        assert p == pytest.approx(1e-4)
        trials = 1_000_000
        table = simulate(
            make_plan(noise, inputs=(fiducial("H"),), trials=trials, heralded_only=False)
        )
        heralds = int(table.heralded.sum())
        assert abs(heralds - p * trials) < 5 * math.sqrt(trials * p * (1 - p))

    def test_no_readout_without_herald(self, noiseless: NoiseParams) -> None:
        noise = dataclasses.replace(noiseless, alpha_perp=1.0, eta=0.01, q=1.0, epsilon_retrieval=1.0)
        table = simulate(make_plan(noise, inputs=(fiducial("H"),), trials=2000, heralded_only=False))
        quiet = ~table.heralded
        assert quiet.any()
        assert not table.d2[quiet].any()
        assert not table.d3[quiet].any()

    def test_read_outside_trial_gives_no_clicks(self, noiseless: NoiseParams) -> None:
        noise = dataclasses.replace(noiseless, q=1.0, epsilon_retrieval=1.0, mu_bg=1.0)
        plan = make_plan(noise, timing=ProtocolTiming(period_fraction=0.6), trials=100)
        table = simulate(plan)
        assert not table.read_fired
        assert not table.d2.any()
        assert not table.d3.any()

    def test_background_run_has_no_heralds(self, calibrated: NoiseParams) -> None:
        plan = background_plan(make_plan(calibrated), ratio=2.0)
        table = simulate(plan)
        assert len(table) == 10_000
        assert not table.heralded.any()
        mean = calibrated.effective_background() * calibrated.q
        assert (table.d2 + table.d3).mean() == pytest.approx(mean, abs=5 * math.sqrt(mean / len(table)))

    def test_background_ratio_must_be_positive(self, calibrated: NoiseParams) -> None:
        with pytest.raises(ConfigError, match="ratio"):
            background_plan(make_plan(calibrated), ratio=0.0)

    def test_unknown_setting_rejected(self, calibrated: NoiseParams) -> None:
        with pytest.raises(ConfigError, match="Unknown analyzer setting"):
            simulate(make_plan(calibrated, settings=("X-Y",)))

    def test_balanced_splits_evenly(self, noiseless: NoiseParams) -> None:
        noise = dataclasses.replace(noiseless, q=1.0, epsilon_retrieval=1.0)
        table = simulate(make_plan(noise, inputs=(fiducial("H"),), settings=(BALANCED,), trials=20_000))
        assert (table.d2 + table.d3 == 1).all()
        assert table.d2.mean() == pytest.approx(0.5, abs=5 * math.sqrt(0.25 / 20_000))


class TestEnsembleSwap:
    def test_hv_counts_ignore_swap_parity(self, calibrated: NoiseParams) -> None:
        noise = dataclasses.replace(calibrated, background_model="precession")
        plan = make_plan(noise, inputs=(fiducial("H"),), settings=("H-V",), trials=20_000)
        a = simulate(plan)
        b = simulate(dataclasses.replace(plan, start_swapped=True))
        assert np.array_equal(a.d2, b.d2)
        assert np.array_equal(a.d3, b.d3)

    @pytest.mark.parametrize("tag", ["R", "S", "H"])
    def test_mirrored_read_density_is_exact(self, calibrated: NoiseParams, tag: str) -> None:
        noise = dataclasses.replace(calibrated, background_model="precession")
        timing = ProtocolTiming()
        flip = np.array([[0, 1], [1, 0]])
        direct = expected_read_density(FIDUCIALS[tag], noise, timing, swapped=False).matrix
        mirrored = expected_read_density(FIDUCIALS[tag].mirrored(), noise, timing, swapped=True).matrix
        assert np.allclose(flip @ direct @ flip, mirrored, atol=1e-12)

    @pytest.mark.parametrize("tag", ["R", "S", "H"])
    def test_mirrored_input_exchanges_circular_ports(self, calibrated: NoiseParams, tag: str) -> None:
        noise = dataclasses.replace(calibrated, background_model="precession", q=0.5)
        state = FIDUCIALS[tag]
        plan = make_plan(noise, inputs=(state,), settings=("L-R",), trials=100_000)
        direct = summarize(plan)
        mirrored = summarize(
            dataclasses.replace(plan, inputs=(state.mirrored(),), start_swapped=True, seed=99)
        )
        plus, minus = int(direct.plus.sum()), int(mirrored.minus.sum())
        assert abs(plus - minus) < 5 * math.sqrt(plus + minus)
