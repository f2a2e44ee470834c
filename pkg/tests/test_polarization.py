"""
Tests for polarization states, density matrices and Stokes vectors.
"""
import math

import numpy as np
import pytest

from polarization import (
    BASES,
    FIDUCIALS,
    DensityMatrix,
    PolarizationState,
    StokesVector,
    degree_of_polarization,
    density_from_pure,
    density_from_stokes,
    fidelity,
    fiducial,
    ket,
    nearest_physical,
    port_probability,
    same_state,
    stokes_from_density,
    trace_distance,
)
from utils import NonPhysicalStateError


def random_states(count: int, seed: int = 3):
    rng = np.random.default_rng(seed)
    return [
        PolarizationState(theta=float(t), phi=float(p))
        for t, p in zip(rng.uniform(0, math.pi, count), rng.uniform(0, 2 * math.pi, count))
    ]


class TestFiducials:
    @pytest.mark.parametrize(
        "tag,expected",
        [
            ("H", (1, 0, 0)),
            ("V", (-1, 0, 0)),
            ("S", (0, 1, 0)),
            ("T", (0, -1, 0)),
            ("R", (0, 0, 1)),
            ("L", (0, 0, -1)),
        ],
    )
    def test_stokes_vectors(self, tag, expected) -> None:
        s = stokes_from_density(density_from_pure(fiducial(tag)))
        assert s.as_array() == pytest.approx(np.array(expected, dtype=float), abs=1e-12)

    def test_bases_are_orthogonal_pairs(self) -> None:
        for plus, minus, _ in BASES.values():
            overlap = abs(np.vdot(ket(fiducial(plus)), ket(fiducial(minus))))
            assert overlap == pytest.approx(0.0, abs=1e-12)

    def test_bases_are_mutually_unbiased(self) -> None:
        tags = [pair[0] for pair in BASES.values()]
        for a in tags:
            for b in tags:
                if a != b:
                    assert abs(np.vdot(ket(fiducial(a)), ket(fiducial(b)))) ** 2 == pytest.approx(0.5)

    def test_unknown_tag_raises(self) -> None:
        with pytest.raises(KeyError, match="Unknown fiducial"):
            fiducial("X")


class TestPolarizationState:
    def test_canonical_keeps_state(self) -> None:
        for state in random_states(50):
            canonical = state.canonical()
            assert 0 <= canonical.theta <= math.pi / 2 + 1e-12
            assert same_state(state, canonical, tol=1e-10)

    def test_mirrored_swaps_rails(self) -> None:
        state = PolarizationState(theta=0.3, phi=1.1)
        mirrored = state.mirrored()
        c_r, c_l = ket(state)
        m_r, m_l = ket(mirrored)
        assert abs(m_r) == pytest.approx(abs(c_l))
        assert abs(m_l) == pytest.approx(abs(c_r))

    def test_fidelity_with_itself_is_one(self) -> None:
        for state in random_states(20):
            assert fidelity(density_from_pure(state), state) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_port_probability(self) -> None:
        rho = density_from_pure(fiducial("H"))
        assert port_probability(rho, fiducial("V")) == pytest.approx(0.0, abs=1e-12)
        assert port_probability(rho, fiducial("R")) == pytest.approx(0.5)


class TestDensityMatrix:
    def test_rejects_non_hermitian(self) -> None:
        with pytest.raises(NonPhysicalStateError, match="Hermitian"):
            DensityMatrix([[0.5, 0.1], [0.2, 0.5]])

    def test_rejects_wrong_trace(self) -> None:
        with pytest.raises(NonPhysicalStateError, match="trace"):
            DensityMatrix(np.eye(2))

    def test_flags_negative_eigenvalue(self) -> None:
        rho = DensityMatrix([[1.2, 0], [0, -0.2]])
        assert not rho.is_physical
        with pytest.raises(NonPhysicalStateError, match="negative eigenvalue"):
            rho.require_physical()

    def test_dict_round_trip(self) -> None:
        rho = density_from_pure(PolarizationState(theta=0.7, phi=2.0))
        restored = DensityMatrix.from_dict(rho.to_dict())
        assert np.array_equal(restored.matrix, rho.matrix)

    def test_from_dict_checks_dim(self) -> None:
        payload = density_from_pure(fiducial("H")).to_dict()
        payload["dim"] = 4
        with pytest.raises(NonPhysicalStateError, match="dim"):
            DensityMatrix.from_dict(payload)

    def test_matrix_is_read_only(self) -> None:
        rho = density_from_pure(fiducial("H"))
        with pytest.raises(ValueError):
            rho.matrix[0, 0] = 0


class TestStokes:
    def test_round_trip_random_states(self) -> None:
        rng = np.random.default_rng(11)
        for _ in range(100):
            vector = rng.normal(size=3)
            vector *= rng.uniform() / np.linalg.norm(vector)
            rho = density_from_stokes(StokesVector(*vector))
            assert stokes_from_density(rho).as_array() == pytest.approx(vector, abs=1e-12)

    def test_too_long_vector_raises(self) -> None:
        with pytest.raises(NonPhysicalStateError, match="exceeds 1"):
            density_from_stokes(StokesVector(1.0, 0.5, 0.0))

    def test_mixed_state_has_zero_polarization(self) -> None:
        assert degree_of_polarization(DensityMatrix(np.eye(2) / 2)) == pytest.approx(0.0)


class TestGeometry:
    def test_trace_distance_of_orthogonal_states(self) -> None:
        a = density_from_pure(fiducial("H"))
        b = density_from_pure(fiducial("V"))
        assert trace_distance(a, b) == pytest.approx(1.0)

    def test_nearest_physical_clips_and_renormalizes(self) -> None:
        rho = nearest_physical(DensityMatrix([[1.2, 0], [0, -0.2]]))
        assert rho.is_physical
        assert np.trace(rho.matrix).real == pytest.approx(1.0)
        assert rho.matrix[0, 0].real == pytest.approx(1.0)

    def test_nearest_physical_keeps_physical_states(self) -> None:
        for state in FIDUCIALS.values():
            rho = 0.7 * density_from_pure(state).matrix + 0.3 * np.eye(2) / 2
            projected = nearest_physical(DensityMatrix(rho))
            assert projected.matrix == pytest.approx(rho, abs=1e-12)
