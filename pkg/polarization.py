"""
Polarization qubits, density matrices and Stokes vectors.

All matrices use the (|R>, |L>) column order. For two-qubit matrices the
basis is (|00>, |10>, |01>, |11>) in rail occupations (n_A, n_B).
"""
import math
from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np

from utils import NonPhysicalStateError

# Entrywise tolerance on Hermiticity and on the trace.
HERMITIAN_TOLERANCE: float = 1e-12

# Smallest eigenvalue accepted for a physical state.
PSD_TOLERANCE: float = -1e-10

# Slack on |s| <= 1 for Stokes vectors.
STOKES_TOLERANCE: float = 1e-10

# Pauli operators in (R, L) order. The S-T operator is -sigma_y so that the
# S port measures +1.
SIGMA_HV: np.ndarray = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_ST: np.ndarray = np.array([[0, 1j], [-1j, 0]], dtype=complex)
SIGMA_RL: np.ndarray = np.array([[1, 0], [0, -1]], dtype=complex)
STOKES_OPERATORS: Tuple[np.ndarray, np.ndarray, np.ndarray] = (
    SIGMA_HV,
    SIGMA_ST,
    SIGMA_RL,
)


@dataclass(frozen=True)
class PolarizationState:
    """
    Pure polarization state cos(theta)|R> + exp(i phi) sin(theta)|L>.
    """

    # Zenith angle in radians, [0, pi].
    theta: float

    # Azimuth angle in radians, [0, 2 pi).
    phi: float = 0.0

    def canonical(self) -> "PolarizationState":
        """
        The same physical state with c_R real and non-negative.
        """
        theta = self.theta % math.pi
        phi = self.phi
        if theta > math.pi / 2:
            theta = math.pi - theta
            phi = phi + math.pi
        return PolarizationState(theta=theta, phi=phi % (2 * math.pi))

    def mirrored(self) -> "PolarizationState":
        """
        Exchange the roles of |R> and |L>.
        """
        return PolarizationState(
            theta=math.pi / 2 - self.canonical().theta,
            phi=(-self.canonical().phi) % (2 * math.pi),
        )


def amplitudes(state: PolarizationState) -> Tuple[complex, complex]:
    """
    Amplitudes (c_R, c_L) of a polarization state.

    Args:
      state: The polarization state.

    Returns:
      A pair (cos theta, exp(i phi) sin theta).
    """
    return (
        complex(math.cos(state.theta)),
        complex(np.exp(1j * state.phi) * math.sin(state.theta)),
    )


def ket(state: PolarizationState) -> np.ndarray:
    """
    Column vector of a polarization state in (R, L) order.
    """
    return np.array(amplitudes(state), dtype=complex)


def same_state(a: PolarizationState, b: PolarizationState, tol: float = 1e-12) -> bool:
    """
    Whether two states agree up to a global phase.
    """
    return abs(abs(np.vdot(ket(a), ket(b))) ** 2 - 1.0) <= tol


class DensityMatrix:
    """
    A Hermitian, unit-trace complex matrix of dimension 2 or 4.

    Positivity is not enforced at construction, so linear inversion can
    return (and flag) non-physical estimates. Use `is_physical` or
    `require_physical` where physicality is a precondition.
    """

    def __init__(self, entries: Any) -> None:
        matrix = np.array(entries, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise NonPhysicalStateError(f"Density matrix must be square, got {matrix.shape}")
        if matrix.shape[0] not in (2, 4):
            raise NonPhysicalStateError(f"Unsupported dimension {matrix.shape[0]}")
        if np.max(np.abs(matrix - matrix.conj().T)) > HERMITIAN_TOLERANCE:
            raise NonPhysicalStateError("Density matrix is not Hermitian")
        if abs(np.trace(matrix) - 1.0) > HERMITIAN_TOLERANCE:
            raise NonPhysicalStateError(
                f"Density matrix trace is {np.trace(matrix).real:.12g}, not 1"
            )
        matrix.setflags(write=False)
        self._matrix = matrix

    @property
    def matrix(self) -> np.ndarray:
        """
        Read-only view of the entries.
        """
        return self._matrix

    @property
    def dim(self) -> int:
        return self._matrix.shape[0]

    def eigenvalues(self) -> np.ndarray:
        """
        Eigenvalues in ascending order.
        """
        return np.linalg.eigvalsh(self._matrix)

    @property
    def is_physical(self) -> bool:
        return bool(self.eigenvalues()[0] >= PSD_TOLERANCE)

    def require_physical(self) -> None:
        """
        Raise if the matrix has a negative eigenvalue beyond tolerance.

        Raises:
          NonPhysicalStateError: If the matrix is not positive semidefinite.
        """
        smallest = self.eigenvalues()[0]
        if smallest < PSD_TOLERANCE:
            raise NonPhysicalStateError(
                f"Density matrix has negative eigenvalue {smallest:.3g}"
            )

    def to_dict(self) -> Dict[str, Any]:
        """
        JSON form: row-major rows of [re, im] pairs plus the dimension.
        """
        return {
            "dim": self.dim,
            "entries": [
                [[float(value.real), float(value.imag)] for value in row]
                for row in self._matrix
            ],
        }

    @staticmethod
    def from_dict(payload: Dict[str, Any]) -> "DensityMatrix":
        """
        Inverse of `to_dict`.

        Raises:
          NonPhysicalStateError: If the shape disagrees with the dim field.
        """
        entries = np.array(
            [[complex(re, im) for re, im in row] for row in payload["entries"]]
        )
        if entries.shape != (payload["dim"], payload["dim"]):
            raise NonPhysicalStateError(
                f"Entries of shape {entries.shape} do not match dim {payload['dim']}"
            )
        return DensityMatrix(entries)

    def __repr__(self) -> str:
        return f"DensityMatrix({self._matrix.tolist()})"


@dataclass(frozen=True)
class StokesVector:
    """
    Stokes components: H-V, S-T and R-L imbalances.
    """

    s1: float
    s2: float
    s3: float

    def as_array(self) -> np.ndarray:
        return np.array([self.s1, self.s2, self.s3])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))


# Fiducial states as (theta, phi); H,V = (|L> +- |R>)/sqrt2 and
# S,T = (|L> +- i|R>)/sqrt2 up to global phase.
FIDUCIALS: Dict[str, PolarizationState] = {
    "H": PolarizationState(theta=math.pi / 4, phi=0.0),
    "V": PolarizationState(theta=math.pi / 4, phi=math.pi),
    "L": PolarizationState(theta=math.pi / 2, phi=0.0),
    "R": PolarizationState(theta=0.0, phi=0.0),
    "S": PolarizationState(theta=math.pi / 4, phi=3 * math.pi / 2),
    "T": PolarizationState(theta=math.pi / 4, phi=math.pi / 2),
}

# Measurement bases: tag -> (plus port, minus port, Stokes index).
BASES: Dict[str, Tuple[str, str, int]] = {
    "H-V": ("H", "V", 0),
    "S-T": ("S", "T", 1),
    "L-R": ("R", "L", 2),
}

# The 50/50 analyzer used for autocorrelation measurements.
BALANCED: str = "balanced"


def fiducial(tag: str) -> PolarizationState:
    """
    Look up a fiducial state by its tag.

    Raises:
      KeyError: If the tag is not one of H, V, L, R, S, T.
    """
    if tag not in FIDUCIALS:
        raise KeyError(f"Unknown fiducial state '{tag}', expected one of {list(FIDUCIALS)}")
    return FIDUCIALS[tag]


def projector(state: PolarizationState) -> np.ndarray:
    vector = ket(state)
    return np.outer(vector, vector.conj())


def density_from_pure(state: PolarizationState) -> DensityMatrix:
    """
    Rank-one projector |psi><psi| of a pure state.
    """
    return DensityMatrix(projector(state))


def stokes_from_density(rho: DensityMatrix) -> StokesVector:
    """
    Stokes vector s_i = Tr(rho sigma_i) of a physical qubit state.

    Args:
      rho: A physical 2x2 density matrix.

    Returns:
      The Stokes vector.

    Raises:
      NonPhysicalStateError: If rho is not a physical qubit state.
    """
    if rho.dim != 2:
        raise NonPhysicalStateError(f"Stokes vector needs a qubit, got dim {rho.dim}")
    rho.require_physical()
    s1, s2, s3 = (float(np.trace(rho.matrix @ sigma).real) for sigma in STOKES_OPERATORS)
    return StokesVector(s1, s2, s3)


def density_from_stokes(s: StokesVector) -> DensityMatrix:
    """
    Density matrix (I + sum_i s_i sigma_i) / 2.

    Args:
      s: Stokes vector with |s| <= 1.

    Returns:
      The qubit density matrix.

    Raises:
      NonPhysicalStateError: If |s| > 1 beyond tolerance.
    """
    if s.norm > 1.0 + STOKES_TOLERANCE:
        raise NonPhysicalStateError(f"Stokes vector of length {s.norm:.6g} exceeds 1")
    return DensityMatrix(stokes_matrix(s))


def stokes_matrix(s: StokesVector) -> np.ndarray:
    """
    Raw matrix (I + sum_i s_i sigma_i) / 2, with no physicality check.
    """
    matrix = np.eye(2, dtype=complex)
    for component, sigma in zip(s.as_array(), STOKES_OPERATORS):
        matrix = matrix + component * sigma
    return matrix / 2


def fidelity(rho: DensityMatrix, target: PolarizationState) -> float:
    """
    Fidelity <psi| rho |psi> with a pure target.

    Args:
      rho: Qubit density matrix.
      target: The intended state.

    Returns:
      The real part of the overlap.
    """
    vector = ket(target)
    return float(np.vdot(vector, rho.matrix @ vector).real)


def port_probability(rho: DensityMatrix, port: PolarizationState) -> float:
    """
    Born-rule probability of a projective outcome.
    """
    return fidelity(rho, port)


def degree_of_polarization(rho: DensityMatrix) -> float:
    """
    Length of the Stokes vector.
    """
    return stokes_from_density(rho).norm


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    """
    Half the trace norm of a - b.
    """
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(a.matrix - b.matrix))))


def nearest_physical(rho: DensityMatrix) -> DensityMatrix:
    """
    Project onto the closest physical state by clipping negative eigenvalues.

    The clipped mass is redistributed so that the trace stays one, which is
    the closest state in the 2-norm.

    Args:
      rho: A possibly non-physical density matrix.

    Returns:
      A physical density matrix.
    """
    values, vectors = np.linalg.eigh(rho.matrix)
    # Eigenvalues come out ascending; shift and clip from the smallest up.
    clipped = values.copy()
    excess = 0.0
    for index in range(len(clipped)):
        remaining = len(clipped) - index
        if clipped[index] + excess / remaining < 0:
            excess += clipped[index]
            clipped[index] = 0.0
        else:
            clipped[index:] += excess / remaining
            break
    matrix = (vectors * clipped) @ vectors.conj().T
    matrix = (matrix + matrix.conj().T) / 2
    return DensityMatrix(matrix / np.trace(matrix).real)
