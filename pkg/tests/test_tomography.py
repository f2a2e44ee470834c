"""
Tests for Stokes estimation, state reconstruction and theta sweep fits.
"""
import dataclasses
import math
from typing import Tuple

import numpy as np
import pytest

from polarization import (
    BASES,
    DensityMatrix,
    PolarizationState,
    density_from_pure,
    fiducial,
    stokes_from_density,
    trace_distance,
)
from simulation.engine import SequencePlan, background_plan, simulate, summarize
from simulation.protocol import NoiseParams, ProtocolTiming
from tomography import (
    CLASSICAL_LIMIT,
    BasisCounts,
    SweepPoint,
    background_subtract,
    bootstrap_errors,
    counts_from_summary,
    counts_from_table,
    estimate_stokes,
    fidelity_report,
    fit_sinusoid,
    linear_inversion,
    mle_fit,
    mle_reconstruct,
    reconstruct,
    theta_sweep,
)
from utils import ConfigError, ConvergenceError, InsufficientStatisticsError


def exact_counts(rho: DensityMatrix, per_basis: float = 1e6) -> Tuple[BasisCounts, ...]:
    """
    Infinite-statistics port counts of a state.
    """
    s = stokes_from_density(rho).as_array()
    return tuple(
        BasisCounts(basis=basis, n_plus=per_basis * (1 + s[index]) / 2, n_minus=per_basis * (1 - s[index]) / 2)
        for basis, (_, _, index) in BASES.items()
    )


def counts_from_stokes(s, per_basis: float = 1000.0) -> Tuple[BasisCounts, ...]:
    return tuple(
        BasisCounts(basis=basis, n_plus=per_basis * (1 + s[index]) / 2, n_minus=per_basis * (1 - s[index]) / 2)
        for basis, (_, _, index) in BASES.items()
    )


def random_physical(rng: np.random.Generator) -> DensityMatrix:
    vector = rng.normal(size=3)
    vector *= rng.uniform() ** (1 / 3) / np.linalg.norm(vector)
    matrix = np.eye(2, dtype=complex) / 2
    matrix = matrix + 0.5 * np.array(
        [[vector[2], vector[0] + 1j * vector[1]], [vector[0] - 1j * vector[1], -vector[2]]]
    )
    return DensityMatrix(matrix)


class TestBasisCounts:
    def test_negative_counts_rejected(self) -> None:
        with pytest.raises(ConfigError, match="non-negative"):
            BasisCounts(basis="H-V", n_plus=-1, n_minus=3)

    def test_unknown_basis_rejected(self) -> None:
        with pytest.raises(ConfigError, match="Unknown basis"):
            BasisCounts(basis="X-Y", n_plus=1, n_minus=3)


class TestStokesEstimate:
    def test_poisson_errors(self) -> None:
        counts = (
            BasisCounts("H-V", 75, 25),
            BasisCounts("S-T", 50, 50),
            BasisCounts("L-R", 100, 0),
        )
        estimate = estimate_stokes(counts)
        assert estimate.vector.as_array() == pytest.approx([0.5, 0.0, 1.0])
        assert estimate.errors[0] == pytest.approx(2 * math.sqrt(75 * 25 / 100 ** 3))
        assert estimate.errors[2] == pytest.approx(0.0)

    def test_missing_basis(self) -> None:
        with pytest.raises(InsufficientStatisticsError, match="No counts"):
            estimate_stokes([BasisCounts("H-V", 1, 1), BasisCounts("S-T", 1, 1)])

    def test_empty_basis(self) -> None:
        with pytest.raises(InsufficientStatisticsError, match="no counts"):
            estimate_stokes(
                [BasisCounts("H-V", 1, 1), BasisCounts("S-T", 1, 1), BasisCounts("L-R", 0, 0)]
            )

    def test_duplicate_basis(self) -> None:
        with pytest.raises(ConfigError, match="more than once"):
            estimate_stokes([BasisCounts("H-V", 1, 1), BasisCounts("H-V", 1, 1)])


class TestLinearInversion:
    def test_exact_for_random_states(self) -> None:
        rng = np.random.default_rng(101)
        for _ in range(100):
            rho = random_physical(rng)
            estimate = linear_inversion(estimate_stokes(exact_counts(rho)).vector)
            assert trace_distance(estimate, rho) < 1e-10

    def test_non_physical_estimate_is_flagged(self) -> None:
        rho = linear_inversion(estimate_stokes(counts_from_stokes([0.9, 0.9, 0.9])).vector)
        assert not rho.is_physical


class TestMaximumLikelihood:
    def test_matches_linear_inversion_inside_bloch_ball(self) -> None:
        rho = DensityMatrix(0.8 * density_from_pure(fiducial("H")).matrix + 0.2 * np.eye(2) / 2)
        fit = mle_fit(exact_counts(rho, per_basis=1e4))
        assert fit.converged
        assert trace_distance(fit.rho, rho) < 1e-4

    def test_non_physical_counts_give_physical_state(self) -> None:
        fit = mle_fit(counts_from_stokes([0.9, 0.9, 0.9]))
        assert fit.converged
        assert fit.rho.is_physical
        s = stokes_from_density(fit.rho).as_array()
        assert np.linalg.norm(s) <= 1 + 1e-9
        assert s == pytest.approx(np.full(3, 1 / math.sqrt(3)), abs=0.02)

    def test_pure_state_counts(self) -> None:
        fit = mle_fit(exact_counts(density_from_pure(fiducial("R")), per_basis=1000))
        assert fit.rho.is_physical
        assert fit.rho.matrix[0, 0].real == pytest.approx(1.0, abs=1e-3)

    def test_error_shrinks_with_counts(self) -> None:
        target = PolarizationState(theta=0.7, phi=1.1)
        rho = DensityMatrix(0.9 * density_from_pure(target).matrix + 0.1 * np.eye(2) / 2)
        p_plus = (1 + stokes_from_density(rho).as_array()) / 2
        medians = []
        for n in (1_000, 10_000, 1_000_000):
            distances = []
            for seed in range(50):
                plus = np.random.default_rng(seed).binomial(n, p_plus)
                counts = tuple(
                    BasisCounts(basis, float(plus[index]), float(n - plus[index]))
                    for basis, (_, _, index) in BASES.items()
                )
                distances.append(trace_distance(mle_reconstruct(counts), rho))
            medians.append(float(np.median(distances)))
        assert medians[0] > medians[1] > medians[2]
        assert medians[2] < 2e-3

    def test_iteration_cap_raises_with_best_fit(self) -> None:
        counts = counts_from_stokes([0.99, 0.5, 0.3])
        with pytest.raises(ConvergenceError) as error:
            mle_reconstruct(counts, max_iterations=1, tolerance=0.0)
        assert error.value.best.iterations == 1
        assert error.value.best.rho.is_physical

    def test_strict_reconstruct_raises(self) -> None:
        with pytest.raises(ConvergenceError, match="did not converge"):
            reconstruct(counts_from_stokes([0.99, 0.5, 0.3]), max_iterations=1, tolerance=0.0, strict=True)

    def test_zero_counts(self) -> None:
        empty = tuple(BasisCounts(basis, 0, 0) for basis in BASES)
        with pytest.raises(InsufficientStatisticsError):
            mle_fit(empty)


class TestBackgroundSubtraction:
    def test_scaled_subtraction(self) -> None:
        counts = BasisCounts("H-V", 100, 20, background_plus=40, background_minus=40, background_scale=0.25)
        result = background_subtract(counts)
        assert (result.n_plus, result.n_minus) == (90.0, 10.0)
        assert result.variances() == pytest.approx((100 + 0.0625 * 40, 20 + 0.0625 * 40))
        assert not result.flagged

    def test_floor_at_zero(self) -> None:
        counts = BasisCounts("H-V", 100, 5, background_plus=10, background_minus=10)
        assert background_subtract(counts).n_minus == 0.0

    def test_flagged_when_background_dominates(self, capsys) -> None:
        counts = BasisCounts("S-T", 5, 5, background_plus=10, background_minus=10)
        result = background_subtract(counts)
        assert result.flagged
        assert result.total == 0.0
        assert "WARNING" in capsys.readouterr().out

    def test_flagged_basis_keeps_reconstruction(self) -> None:
        counts = (
            BasisCounts("H-V", 100, 100, background_plus=120, background_minus=120),
            BasisCounts("S-T", 600, 400, background_plus=10, background_minus=10),
            BasisCounts("L-R", 500, 500, background_plus=10, background_minus=10),
        )
        result = reconstruct(counts)
        assert result.flagged == ("H-V",)
        assert result.to_dict()["flagged"] == ["H-V"]
        assert result.stokes.vector.as_array() == pytest.approx([0.0, 0.2, 0.0])
        assert result.rho_mle.is_physical
        subtracted = result.stokes_bgsub.vector.as_array()
        assert subtracted == pytest.approx([0.0, 200 / 980, 0.0])
        assert math.isnan(result.stokes_bgsub.errors[0])
        report = fidelity_report(result, fiducial("S"))
        assert report.fidelity_bgsub == pytest.approx(0.5 * (1 + 200 / 980))
        assert math.isfinite(report.fidelity_bgsub_error)
        assert math.isfinite(report.polarization_bgsub_error)

    def test_nothing_flagged_without_background(self) -> None:
        assert reconstruct(counts_from_stokes([0.5, 0.2, 0.1])).flagged == ()


class TestFidelityReport:
    def test_perfect_copy(self) -> None:
        target = PolarizationState(theta=0.4, phi=1.0)
        result = reconstruct(exact_counts(density_from_pure(target), per_basis=1e4))
        report = fidelity_report(result, target)
        assert report.fidelity == pytest.approx(1.0, abs=1e-9)
        assert report.polarization == pytest.approx(1.0, abs=1e-9)
        assert report.exceeds_classical_limit

    def test_mixed_state_below_limit(self) -> None:
        target = fiducial("H")
        rho = DensityMatrix(0.2 * density_from_pure(target).matrix + 0.8 * np.eye(2) / 2)
        report = fidelity_report(reconstruct(exact_counts(rho, per_basis=1e4)), target)
        assert report.fidelity == pytest.approx(0.6)
        assert not report.exceeds_classical_limit
        assert report.classical_margin < 0
        assert CLASSICAL_LIMIT == pytest.approx(2 / 3)

    def test_bootstrap_agrees_with_propagation(self) -> None:
        target = fiducial("H")
        counts = counts_from_stokes([0.8, 0.1, -0.1], per_basis=4000)
        report = fidelity_report(reconstruct(counts), target)
        errors = bootstrap_errors(counts, target, resamples=2000, seed=4)
        assert errors["fidelity_error"] == pytest.approx(report.fidelity_error, rel=0.15)
        assert errors["polarization_error"] == pytest.approx(report.polarization_error, rel=0.15)


class TestSimulatedCounts:
    def test_counts_from_table_and_summary_agree(self) -> None:
        noise = NoiseParams(mu_bg=0.05, T2=5e-6)
        plan = SequencePlan(
            inputs=(fiducial("H"), fiducial("L")),
            settings=("H-V", "S-T", "L-R"),
            trials=3000,
            seed=2,
            noise=noise,
            timing=ProtocolTiming(),
            heralded_only=True,
        )
        background = background_plan(plan, ratio=4.0)
        from_table = counts_from_table(simulate(plan), 1, simulate(background))
        from_summary = counts_from_summary(summarize(plan), 1, summarize(background))
        assert [c.to_dict() for c in from_table] == [c.to_dict() for c in from_summary]

    def test_unmeasured_basis(self) -> None:
        plan = SequencePlan(
            inputs=(fiducial("H"),),
            settings=("H-V",),
            trials=10,
            seed=0,
            heralded_only=True,
        )
        with pytest.raises(InsufficientStatisticsError, match="not measured"):
            counts_from_summary(summarize(plan))


class TestSinusoid:
    def test_exact_recovery(self) -> None:
        theta = np.arange(10) * math.pi / 10
        y = 0.4 * np.cos(2 * theta + 0.3) + 0.5
        fit = fit_sinusoid(theta, y)
        assert fit.amplitude == pytest.approx(0.4)
        assert fit.phase == pytest.approx(0.3)
        assert fit.offset == pytest.approx(0.5)
        assert fit.residual_rms == pytest.approx(0.0, abs=1e-12)
        assert fit.contrast == pytest.approx(0.8)

    def test_too_few_points(self) -> None:
        with pytest.raises(InsufficientStatisticsError, match="at least 5"):
            fit_sinusoid(np.arange(4), np.zeros(4))

    def test_degenerate_angles(self) -> None:
        with pytest.raises(InsufficientStatisticsError, match="Degenerate"):
            fit_sinusoid(np.zeros(6), np.zeros(6))


class TestThetaSweep:
    def sweep_points(self, polarization: float, points: int = 10, phi: float = 0.0):
        result = []
        for k in range(points):
            state = PolarizationState(theta=k * math.pi / points, phi=phi)
            pure = density_from_pure(state).matrix
            rho = DensityMatrix(polarization * pure + (1 - polarization) * np.eye(2) / 2)
            result.append(SweepPoint(state=state, counts=exact_counts(rho, per_basis=1e5)))
        return result

    def test_sixty_projection_points(self) -> None:
        sweep = theta_sweep(self.sweep_points(0.9))
        assert len(sweep.data) == 60
        assert len(sweep.fits) == 6

    def test_fits_track_polarization(self) -> None:
        sweep = theta_sweep(self.sweep_points(0.9))
        for fit in sweep.fits:
            if fit.basis == "L-R":
                assert fit.amplitude == pytest.approx(0.45, abs=1e-9)
                assert fit.offset == pytest.approx(0.5, abs=1e-9)
        assert sweep.global_fit.polarization == pytest.approx(0.9, abs=1e-6)
        assert sweep.global_fit.theta_offset == pytest.approx(0.0, abs=1e-6)

    def test_global_fit_finds_azimuth(self) -> None:
        sweep = theta_sweep(self.sweep_points(0.8, phi=0.7))
        assert sweep.global_fit.phi == pytest.approx(0.7, abs=1e-6)

    def test_needs_five_angles(self) -> None:
        with pytest.raises(InsufficientStatisticsError, match="at least 5"):
            theta_sweep(self.sweep_points(0.9, points=4))

    def test_shared_azimuth(self) -> None:
        points = self.sweep_points(0.9)
        points[3] = dataclasses.replace(
            points[3], state=PolarizationState(theta=points[3].state.theta, phi=1.0)
        )
        with pytest.raises(ConfigError, match="azimuth"):
            theta_sweep(points)
