"""
Concurrence of the dual-rail photonic state retrieved from the memory.

Two-qubit matrices use the rail-occupation basis (|00>, |10>, |01>, |11>)
with occupations (n_A, n_B); rail A carries |R>, rail B carries |L>.
"""
import math
from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np

from polarization import DensityMatrix, PolarizationState
from simulation.calibration import expected_click_probabilities, expected_read_density
from simulation.protocol import NoiseParams, ProtocolTiming
from stats import CoincidenceTally
from tomography import TomographyResult
from utils import ConfigError, InsufficientStatisticsError, NonPhysicalStateError

# Slack on the probability and coherence bounds of a dual-rail state.
DUAL_RAIL_TOLERANCE: float = 1e-10

# Concurrence routes.
CONCURRENCE_METHODS: Tuple[str, str] = ("svd", "polynomial")

# sigma_y (x) sigma_y; identical in the (00, 10, 01, 11) and (00, 01, 10, 11) orders.
SPIN_FLIP: np.ndarray = np.array(
    [[0, 0, 0, -1], [0, 0, 1, 0], [0, 1, 0, 0], [-1, 0, 0, 0]], dtype=complex
)


@dataclass(frozen=True)
class DualRailState:
    """
    Two-rail state with at most one excitation per rail and a single coherence.
    """

    p00: float
    p10: float
    p01: float
    d: complex
    p11: float

    def __post_init__(self) -> None:
        probabilities = (self.p00, self.p10, self.p01, self.p11)
        if min(probabilities) < 0:
            raise NonPhysicalStateError(f"Negative probability in {probabilities}")
        if sum(probabilities) > 1 + DUAL_RAIL_TOLERANCE:
            raise NonPhysicalStateError(f"Probabilities sum to {sum(probabilities):.12g} > 1")
        if abs(self.d) > math.sqrt(self.p10 * self.p01) + DUAL_RAIL_TOLERANCE:
            raise NonPhysicalStateError(
                f"Coherence |d| = {abs(self.d):.6g} exceeds sqrt(p10 p01) = {math.sqrt(self.p10 * self.p01):.6g}"
            )

    @property
    def total(self) -> float:
        return self.p00 + self.p10 + self.p01 + self.p11

    def to_dict(self) -> Dict[str, Any]:
        return {
            "p00": self.p00,
            "p10": self.p10,
            "p01": self.p01,
            "d": [complex(self.d).real, complex(self.d).imag],
            "p11": self.p11,
        }

    @staticmethod
    def from_dict(payload: Dict[str, Any]) -> "DualRailState":
        re, im = payload["d"]
        return DualRailState(
            p00=float(payload["p00"]),
            p10=float(payload["p10"]),
            p01=float(payload["p01"]),
            d=complex(re, im),
            p11=float(payload["p11"]),
        )


@dataclass(frozen=True)
class ReadoutYields:
    """
    Per-herald readout statistics on a balanced splitter.
    """

    heralds: int

    # Heralded windows with exactly one port clicking, and with both.
    single: int
    double: int

    @staticmethod
    def from_tally(tally: CoincidenceTally) -> "ReadoutYields":
        return ReadoutYields(
            heralds=tally.n1,
            single=tally.n12 + tally.n13 - 2 * tally.n123,
            double=tally.n123,
        )

    @property
    def p_single(self) -> float:
        return self.single / self.heralds

    @property
    def p_double(self) -> float:
        return self.double / self.heralds


@dataclass(frozen=True)
class ConcurrenceEstimate:
    value: float
    error: float
    state: DualRailState

    def to_dict(self) -> Dict[str, Any]:
        return {"concurrence": self.value, "error": self.error, "state": self.state.to_dict()}


def to_two_qubit_density(s: DualRailState) -> DensityMatrix:
    """
    X-form embedding of a dual-rail state.

    Args:
      s: The dual-rail state. Its probabilities are normalized to unit trace.

    Returns:
      The 4x4 density matrix.

    Raises:
      NonPhysicalStateError: If the state carries no probability.
    """
    total = s.total
    if total <= 0:
        raise NonPhysicalStateError("Dual-rail state has zero total probability")
    rho = np.diag([s.p00, s.p10, s.p01, s.p11]).astype(complex)
    rho[1, 2] = s.d
    rho[2, 1] = np.conj(s.d)
    return DensityMatrix(rho / total)


def x_state_concurrence(p00: float, p11: float, d: complex) -> float:
    """
    Closed form 2 max(0, |d| - sqrt(p00 p11)) of an X-state.
    """
    return 2 * max(0.0, abs(d) - math.sqrt(p00 * p11))


def concurrence_x_state(s: DualRailState) -> float:
    total = s.total
    return x_state_concurrence(s.p00 / total, s.p11 / total, s.d / total)


def _matrix_sqrt(rho: np.ndarray) -> np.ndarray:
    values, vectors = np.linalg.eigh(rho)
    return (vectors * np.sqrt(np.clip(values, 0, None))) @ vectors.conj().T


def _faddeev_leverrier(matrix: np.ndarray) -> np.ndarray:
    """
    Characteristic polynomial coefficients, highest degree first.
    """
    size = matrix.shape[0]
    coefficients = [1.0 + 0j]
    m = np.zeros_like(matrix)
    identity = np.eye(size, dtype=complex)
    for k in range(1, size + 1):
        m = matrix @ m + coefficients[-1] * identity
        coefficients.append(-np.trace(matrix @ m) / k)
    return np.array(coefficients)


def wootters_concurrence(rho: DensityMatrix, method: str = "svd") -> float:
    """
    Wootters concurrence max(0, l1 - l2 - l3 - l4) of a two-qubit state.

    Args:
      rho: Physical two-qubit density matrix.
      method: 'svd' takes the l_i as singular values of sqrt(rho) (sy sy)
        sqrt(rho)*; 'polynomial' takes square roots of the roots of the
        characteristic polynomial of rho (sy sy) rho* (sy sy).

    Returns:
      The concurrence in [0, 1].

    Raises:
      NonPhysicalStateError: If rho is not a physical two-qubit state.
      ConfigError: For an unknown method.
    """
    if rho.dim != 4:
        raise NonPhysicalStateError(f"Concurrence needs a two-qubit state, got dim {rho.dim}")
    rho.require_physical()
    if method not in CONCURRENCE_METHODS:
        raise ConfigError(f"Unknown concurrence method '{method}', expected {CONCURRENCE_METHODS}")

    if method == "svd":
        root = _matrix_sqrt(rho.matrix)
        values = np.linalg.svd(root @ SPIN_FLIP @ root.conj(), compute_uv=False)
    else:
        flipped = SPIN_FLIP @ rho.matrix.conj() @ SPIN_FLIP
        roots = np.roots(_faddeev_leverrier(rho.matrix @ flipped))
        values = np.sqrt(np.clip(roots.real, 0, None))

    values = np.sort(values)[::-1]
    return float(min(1.0, max(0.0, values[0] - values[1:].sum())))


def photonic_concurrence_from_experiment(
    tomo: TomographyResult, readout_yields: ReadoutYields, method: str = "svd"
) -> ConcurrenceEstimate:
    """
    Concurrence of the retrieved two-rail photonic state.

    The single-photon part has weight p_single and the polarization of the
    likelihood reconstruction: p10 = p_single rho_RR, p01 = p_single rho_LL,
    d = p_single rho_RL. The two-photon part p11 is the heralded
    probability of a coincidence between the two ports, and the rest is
    vacuum.

    Args:
      tomo: Tomography of the same input.
      readout_yields: Heralded click statistics on a balanced splitter.
      method: Concurrence route.

    Returns:
      The concurrence with a first-order propagated error.

    Raises:
      InsufficientStatisticsError: Without heralds or with no single clicks.
    """
    if readout_yields.heralds <= 0:
        raise InsufficientStatisticsError("Photonic concurrence needs heralded trials")
    if readout_yields.single <= 0:
        raise InsufficientStatisticsError("No single-photon readouts among the heralds")

    p1 = readout_yields.p_single
    p11 = readout_yields.p_double
    rho = tomo.rho_mle.matrix
    state = DualRailState(
        p00=max(0.0, 1.0 - p1 - p11),
        p10=p1 * rho[0, 0].real,
        p01=p1 * rho[1, 1].real,
        d=complex(p1 * rho[0, 1]),
        p11=p11,
    )
    value = wootters_concurrence(to_two_qubit_density(state), method)
    if value == 0:
        return ConcurrenceEstimate(value=0.0, error=0.0, state=state)

    s1, s2, _ = tomo.stokes.vector.as_array()
    e1, e2, _ = tomo.stokes.errors
    coherence = abs(rho[0, 1])
    length = math.hypot(s1, s2)
    coherence_error = math.hypot(s1 * e1, s2 * e2) / (2 * length) if length > 0 else 0.0

    heralds = readout_yields.heralds
    p1_error = math.sqrt(p1 * (1 - p1) / heralds)
    p11_error = math.sqrt(p11 * (1 - p11) / heralds)
    floor = math.sqrt(state.p00 * p11)
    terms = [2 * p1 * coherence_error]
    if floor > 0:
        terms.append(2 * (coherence + p11 / (2 * floor)) * p1_error)
        terms.append((state.p00 - p11) / floor * p11_error)
    else:
        terms.append(2 * coherence * p1_error)
    return ConcurrenceEstimate(value=value, error=float(math.sqrt(sum(t * t for t in terms))), state=state)


def expected_photonic_concurrence(
    state: PolarizationState, noise: NoiseParams, timing: ProtocolTiming
) -> float:
    """
    Infinite-statistics photonic concurrence of the simulated protocol.
    """
    clicks = expected_click_probabilities(noise)
    rho = np.mean(
        [expected_read_density(state, noise, timing, swapped).matrix for swapped in (False, True)],
        axis=0,
    )
    p1 = clicks.single
    dual = DualRailState(
        p00=max(0.0, 1.0 - p1 - clicks.both),
        p10=p1 * rho[0, 0].real,
        p01=p1 * rho[1, 1].real,
        d=complex(p1 * rho[0, 1]),
        p11=clicks.both,
    )
    return concurrence_x_state(dual)
