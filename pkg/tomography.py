"""
Three-basis polarization tomography.

Counts at the two ports of the H-V, S-T and L-R analyzers are turned into
Stokes vectors, density matrices (linear inversion and maximum likelihood),
background-subtracted estimates, fidelity reports and sinusoid fits of
theta sweeps.
"""
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from polarization import (
    BASES,
    DensityMatrix,
    PolarizationState,
    StokesVector,
    density_from_pure,
    fidelity,
    fiducial,
    nearest_physical,
    projector,
    stokes_from_density,
    stokes_matrix,
)
from simulation.engine import ClickSummary, ClickTable
from utils import ConfigError, ConvergenceError, InsufficientStatisticsError

# Best average fidelity of a measure-and-prepare strategy.
CLASSICAL_LIMIT: float = 2.0 / 3.0

# Stopping rule of the likelihood ascent, on the mean log-likelihood per count.
MLE_TOLERANCE: float = 1e-10
MLE_MAX_ITERATIONS: int = 10_000

# Weight of I/2 mixed into the starting point so that its factor is invertible.
MLE_START_MIXING: float = 1e-6

# Armijo sufficient-increase constant and smallest step of the line search.
ARMIJO: float = 1e-4
MIN_STEP: float = 1e-20

# Fewest theta values a sweep can be fitted with.
MIN_SWEEP_POINTS: int = 5

# Bases in Stokes-component order: H-V, S-T, L-R.
BASIS_ORDER: Tuple[str, ...] = tuple(sorted(BASES, key=lambda tag: BASES[tag][2]))


@dataclass(frozen=True)
class BasisCounts:
    """
    Port counts of one analyzer basis and its background acquisition.
    """

    basis: str
    n_plus: float
    n_minus: float
    background_plus: float = 0.0
    background_minus: float = 0.0

    # Signal windows per background window; scales the background to the signal.
    background_scale: float = 1.0

    # Variances of the port counts. None means Poisson, i.e. the counts.
    variance_plus: Optional[float] = None
    variance_minus: Optional[float] = None

    # Background exceeded the signal on both ports.
    flagged: bool = False

    def __post_init__(self) -> None:
        if self.basis not in BASES:
            raise ConfigError(f"Unknown basis '{self.basis}', expected one of {list(BASES)}")
        values = (self.n_plus, self.n_minus, self.background_plus, self.background_minus)
        if min(values) < 0 or self.background_scale < 0:
            raise ConfigError(f"Counts of basis {self.basis} must be non-negative")

    @property
    def total(self) -> float:
        return self.n_plus + self.n_minus

    def variances(self) -> Tuple[float, float]:
        plus = self.n_plus if self.variance_plus is None else self.variance_plus
        minus = self.n_minus if self.variance_minus is None else self.variance_minus
        return plus, minus

    def to_dict(self) -> Dict[str, Any]:
        return {
            "basis": self.basis,
            "n_plus": self.n_plus,
            "n_minus": self.n_minus,
            "background_plus": self.background_plus,
            "background_minus": self.background_minus,
            "background_scale": self.background_scale,
            "flagged": self.flagged,
        }


@dataclass(frozen=True)
class StokesEstimate:
    """
    A Stokes vector with one-sigma errors per component.
    """

    vector: StokesVector
    errors: Tuple[float, float, float]

    def to_dict(self) -> Dict[str, Any]:
        return {"s": self.vector.as_array(), "errors": list(self.errors)}


@dataclass(frozen=True)
class MleFit:
    """
    Outcome of the likelihood ascent.
    """

    rho: DensityMatrix

    # Mean log-likelihood per count.
    log_likelihood: float
    iterations: int
    converged: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rho": self.rho.to_dict(),
            "log_likelihood": self.log_likelihood,
            "iterations": self.iterations,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class TomographyResult:
    """
    Raw, maximum-likelihood and background-subtracted reconstructions.
    """

    counts: Tuple[BasisCounts, ...]
    stokes: StokesEstimate
    rho_raw: DensityMatrix
    mle: MleFit
    stokes_bgsub: StokesEstimate
    rho_bgsub: DensityMatrix

    # Bases whose background exceeded the signal on both ports.
    flagged: Tuple[str, ...] = ()

    @property
    def rho_mle(self) -> DensityMatrix:
        return self.mle.rho

    def to_dict(self) -> Dict[str, Any]:
        return {
            "counts": [c.to_dict() for c in self.counts],
            "stokes": self.stokes.to_dict(),
            "stokes_bgsub": self.stokes_bgsub.to_dict(),
            "rho_raw": self.rho_raw.to_dict(),
            "rho_raw_physical": self.rho_raw.is_physical,
            "rho_bgsub": self.rho_bgsub.to_dict(),
            "rho_bgsub_physical": self.rho_bgsub.is_physical,
            "mle": self.mle.to_dict(),
            "flagged": list(self.flagged),
        }


@dataclass(frozen=True)
class FidelityReport:
    """
    Fidelity and degree of polarization, raw and background-subtracted.
    """

    target: PolarizationState
    fidelity: float
    fidelity_error: float
    polarization: float
    polarization_error: float
    fidelity_bgsub: float
    fidelity_bgsub_error: float
    polarization_bgsub: float
    polarization_bgsub_error: float
    fidelity_mle: float

    @property
    def exceeds_classical_limit(self) -> bool:
        return self.fidelity - 2 * self.fidelity_error > CLASSICAL_LIMIT

    @property
    def classical_margin(self) -> float:
        """
        Distance of the raw fidelity above 2/3, in standard errors.
        """
        if self.fidelity_error == 0:
            return math.inf if self.fidelity > CLASSICAL_LIMIT else -math.inf
        return (self.fidelity - CLASSICAL_LIMIT) / self.fidelity_error

    def to_dict(self) -> Dict[str, Any]:
        return {
            "theta": self.target.theta,
            "phi": self.target.phi,
            "fidelity": self.fidelity,
            "fidelity_error": self.fidelity_error,
            "polarization": self.polarization,
            "polarization_error": self.polarization_error,
            "fidelity_bgsub": self.fidelity_bgsub,
            "fidelity_bgsub_error": self.fidelity_bgsub_error,
            "polarization_bgsub": self.polarization_bgsub,
            "polarization_bgsub_error": self.polarization_bgsub_error,
            "fidelity_mle": self.fidelity_mle,
            "exceeds_classical_limit": self.exceeds_classical_limit,
        }


def _by_basis(counts: Sequence[BasisCounts]) -> Dict[str, BasisCounts]:
    """
    Index counts by basis, requiring each basis exactly once.

    Raises:
      InsufficientStatisticsError: If a basis is missing.
      ConfigError: If a basis appears twice.
    """
    table: Dict[str, BasisCounts] = {}
    for item in counts:
        if item.basis in table:
            raise ConfigError(f"Basis {item.basis} given more than once")
        table[item.basis] = item
    missing = [basis for basis in BASIS_ORDER if basis not in table]
    if missing:
        raise InsufficientStatisticsError(f"No counts for bases {missing}")
    return table


def estimate_stokes(counts: Sequence[BasisCounts]) -> StokesEstimate:
    """
    Stokes components from port imbalances, with binomial errors.

    Args:
      counts: Counts of the three bases.

    Returns:
      s_i = (n+ - n-) / (n+ + n-), with errors propagated from the port
      variances (2 sqrt(n+ n- / N^3) for Poisson counts).

    Raises:
      InsufficientStatisticsError: If a basis has no counts.
    """
    table = _by_basis(counts)
    components, errors = zip(*(_component(table[basis]) for basis in BASIS_ORDER))
    return StokesEstimate(vector=StokesVector(*components), errors=tuple(errors))


def _component(item: BasisCounts) -> Tuple[float, float]:
    total = item.total
    if total <= 0:
        raise InsufficientStatisticsError(f"Basis {item.basis} has no counts")
    variance_plus, variance_minus = item.variances()
    error = (
        2
        * math.sqrt(item.n_minus ** 2 * variance_plus + item.n_plus ** 2 * variance_minus)
        / total ** 2
    )
    return (item.n_plus - item.n_minus) / total, error


def estimate_stokes_bgsub(counts: Sequence[BasisCounts]) -> Tuple[StokesEstimate, Tuple[str, ...]]:
    """
    Background-subtracted Stokes components.

    A basis whose background swamps both ports carries no signal: its
    component is set to zero with an undefined (NaN) error.

    Args:
      counts: Counts of the three bases, with their background.

    Returns:
      The subtracted estimate and the names of the flagged bases.
    """
    table = _by_basis([background_subtract(c) for c in counts])
    flagged = tuple(basis for basis in BASIS_ORDER if table[basis].flagged)
    components, errors = zip(
        *(
            (0.0, math.nan) if basis in flagged else _component(table[basis])
            for basis in BASIS_ORDER
        )
    )
    return StokesEstimate(vector=StokesVector(*components), errors=tuple(errors)), flagged


def linear_inversion(s: StokesVector) -> DensityMatrix:
    """
    Density matrix (I + s.sigma) / 2, possibly non-physical.

    Non-physical results are returned as they are; `DensityMatrix.is_physical`
    flags them.
    """
    return DensityMatrix(stokes_matrix(s))


def _port_projectors() -> List[np.ndarray]:
    projectors = []
    for basis in BASIS_ORDER:
        plus, minus, _ = BASES[basis]
        projectors.append(projector(fiducial(plus)))
        projectors.append(projector(fiducial(minus)))
    return projectors


def _port_counts(counts: Sequence[BasisCounts]) -> np.ndarray:
    table = _by_basis(counts)
    return np.array(
        [value for basis in BASIS_ORDER for value in (table[basis].n_plus, table[basis].n_minus)],
        dtype=float,
    )


# Directions of the four real parameters of the lower-triangular factor.
_FACTOR_DIRECTIONS: Tuple[np.ndarray, ...] = (
    np.array([[1, 0], [0, 0]], dtype=complex),
    np.array([[0, 0], [0, 1]], dtype=complex),
    np.array([[0, 0], [1, 0]], dtype=complex),
    np.array([[0, 0], [1j, 0]], dtype=complex),
)


def _factor(t: np.ndarray) -> np.ndarray:
    return np.array([[t[0], 0], [t[2] + 1j * t[3], t[1]]], dtype=complex)


def _density(t: np.ndarray) -> np.ndarray:
    g = _factor(t)
    m = g.conj().T @ g
    return m / np.trace(m).real


def _parameters(rho: np.ndarray) -> np.ndarray:
    """
    Factor parameters of a physical matrix, rho = G^dagger G with G lower.
    """
    mixed = (1 - MLE_START_MIXING) * rho + MLE_START_MIXING * np.eye(2) / 2
    flip = np.array([[0, 1], [1, 0]])
    lower = np.linalg.cholesky(flip @ mixed @ flip)
    g = (flip @ lower @ flip).conj().T
    t = np.array([g[0, 0].real, g[1, 1].real, g[1, 0].real, g[1, 0].imag])
    return t / np.linalg.norm(t)


class _Likelihood:
    """
    Mean binomial log-likelihood of the six port counts.
    """

    def __init__(self, counts: Sequence[BasisCounts]) -> None:
        self.projectors = _port_projectors()
        self.counts = _port_counts(counts)
        self.total = float(self.counts.sum())
        if self.total <= 0:
            raise InsufficientStatisticsError("Maximum likelihood needs at least one count")
        self.observed = self.counts > 0

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        return np.array([np.trace(rho @ p).real for p in self.projectors])

    def value(self, t: np.ndarray) -> float:
        p = self.probabilities(_density(t))[self.observed]
        if np.any(p <= 0):
            return -math.inf
        return float(np.sum(self.counts[self.observed] * np.log(p)) / self.total)

    def gradient(self, t: np.ndarray) -> np.ndarray:
        g = _factor(t)
        m = g.conj().T @ g
        trace = np.trace(m).real
        rho = m / trace
        p = self.probabilities(rho)
        weights = np.where(self.observed, self.counts / (self.total * np.where(p > 0, p, 1.0)), 0.0)
        r = sum(w * proj for w, proj in zip(weights, self.projectors))
        baseline = np.trace(r @ rho).real
        grad = np.zeros(4)
        for index, direction in enumerate(_FACTOR_DIRECTIONS):
            dm = direction.conj().T @ g + g.conj().T @ direction
            grad[index] = (np.trace(r @ dm).real - baseline * np.trace(dm).real) / trace
        return grad


def mle_fit(
    counts: Sequence[BasisCounts],
    max_iterations: int = MLE_MAX_ITERATIONS,
    tolerance: float = MLE_TOLERANCE,
) -> MleFit:
    """
    Maximum-likelihood density matrix by deterministic gradient ascent.

    The state is parameterized as rho = G^dagger G / Tr(G^dagger G) with G
    lower triangular with real diagonal, so every iterate is physical. The
    ascent starts from the linear inversion projected onto the nearest
    physical state and uses backtracking line search.

    Args:
      counts: Counts of the three bases.
      max_iterations: Iteration cap.
      tolerance: Stop when the mean log-likelihood improves by less.

    Returns:
      The fit, with `converged` False when the iteration cap was hit.

    Raises:
      InsufficientStatisticsError: If there are no counts at all.
    """
    likelihood = _Likelihood(counts)
    try:
        start = nearest_physical(linear_inversion(estimate_stokes(counts).vector)).matrix
    except InsufficientStatisticsError:
        start = np.eye(2, dtype=complex) / 2

    t = _parameters(start)
    value = likelihood.value(t)
    if not math.isfinite(value):
        t = _parameters(np.eye(2, dtype=complex) / 2)
        value = likelihood.value(t)

    step = 1.0
    converged = False
    iterations = 0
    while iterations < max_iterations:
        iterations += 1
        grad = likelihood.gradient(t)
        slope = float(grad @ grad)
        if slope == 0:
            converged = True
            break

        step *= 2
        candidate: Optional[np.ndarray] = None
        while step >= MIN_STEP:
            trial = t + step * grad
            trial_value = likelihood.value(trial)
            if trial_value >= value + ARMIJO * step * slope:
                candidate = trial
                break
            step /= 2
        if candidate is None:
            converged = True
            break

        improvement = trial_value - value
        t, value = candidate / np.linalg.norm(candidate), trial_value
        if improvement < tolerance:
            converged = True
            break

    rho = _density(t)
    return MleFit(
        rho=DensityMatrix((rho + rho.conj().T) / 2),
        log_likelihood=value,
        iterations=iterations,
        converged=converged,
    )


def mle_reconstruct(
    counts: Sequence[BasisCounts],
    max_iterations: int = MLE_MAX_ITERATIONS,
    tolerance: float = MLE_TOLERANCE,
) -> DensityMatrix:
    """
    Maximum-likelihood density matrix.

    Raises:
      ConvergenceError: If the ascent hit the iteration cap; `best` holds the fit.
    """
    fit = mle_fit(counts, max_iterations, tolerance)
    if not fit.converged:
        raise ConvergenceError(
            f"Likelihood ascent did not converge in {fit.iterations} iterations", best=fit
        )
    return fit.rho


def background_subtract(counts: BasisCounts) -> BasisCounts:
    """
    Remove the scaled background from the port counts.

    Counts are floored at zero and their variances grow by the variance of
    the scaled background. When the background exceeds the signal on both
    ports the result is flagged and zeroed.
    """
    scale = counts.background_scale
    expected_plus = scale * counts.background_plus
    expected_minus = scale * counts.background_minus
    variance_plus, variance_minus = counts.variances()
    flagged = expected_plus >= counts.n_plus and expected_minus >= counts.n_minus
    if flagged and counts.total > 0:
        print(f"WARNING: background exceeds signal in basis {counts.basis}", flush=True)
    return BasisCounts(
        basis=counts.basis,
        n_plus=0.0 if flagged else max(counts.n_plus - expected_plus, 0.0),
        n_minus=0.0 if flagged else max(counts.n_minus - expected_minus, 0.0),
        background_scale=scale,
        variance_plus=variance_plus + scale ** 2 * counts.background_plus,
        variance_minus=variance_minus + scale ** 2 * counts.background_minus,
        flagged=flagged,
    )


def reconstruct(
    counts: Sequence[BasisCounts],
    max_iterations: int = MLE_MAX_ITERATIONS,
    tolerance: float = MLE_TOLERANCE,
    strict: bool = False,
) -> TomographyResult:
    """
    Run every reconstruction on a set of three-basis counts.

    Args:
      counts: Counts of the three bases, with their background.
      max_iterations: Iteration cap of the likelihood ascent.
      tolerance: Convergence tolerance of the likelihood ascent.
      strict: Raise instead of returning an unconverged likelihood fit.

    Returns:
      The tomography result.

    Raises:
      InsufficientStatisticsError: If a basis has no raw counts.
      ConvergenceError: In strict mode, if the likelihood ascent did not converge.
    """
    counts = tuple(counts)
    stokes = estimate_stokes(counts)
    fit = mle_fit(counts, max_iterations, tolerance)
    if strict and not fit.converged:
        raise ConvergenceError(
            f"Likelihood ascent did not converge in {fit.iterations} iterations", best=fit
        )
    stokes_bgsub, flagged = estimate_stokes_bgsub(counts)
    return TomographyResult(
        counts=counts,
        stokes=stokes,
        rho_raw=linear_inversion(stokes.vector),
        mle=fit,
        stokes_bgsub=stokes_bgsub,
        rho_bgsub=linear_inversion(stokes_bgsub.vector),
        flagged=flagged,
    )


def _target_stokes(target: PolarizationState) -> np.ndarray:
    return stokes_from_density(density_from_pure(target)).as_array()


def _polarization_error(s: np.ndarray, errors: np.ndarray) -> float:
    norm = float(np.linalg.norm(s))
    if norm == 0:
        # At the origin the length moves with the rms component error.
        return float(np.sqrt(np.nanmean(errors ** 2)))
    return float(np.sqrt(np.nansum((s * errors) ** 2)) / norm)


def fidelity_report(result: TomographyResult, target: PolarizationState) -> FidelityReport:
    """
    Score a reconstruction against the intended input.

    Args:
      result: The tomography result.
      target: The input polarization.

    Returns:
      Raw and background-subtracted fidelities and degrees of polarization
      with one-sigma errors, plus the fidelity of the likelihood estimate.
    """
    direction = _target_stokes(target)
    raw = result.stokes.vector.as_array()
    raw_errors = np.array(result.stokes.errors)
    sub = result.stokes_bgsub.vector.as_array()
    sub_errors = np.array(result.stokes_bgsub.errors)
    return FidelityReport(
        target=target,
        fidelity=fidelity(result.rho_raw, target),
        fidelity_error=float(0.5 * np.sqrt(np.sum((direction * raw_errors) ** 2))),
        polarization=float(np.linalg.norm(raw)),
        polarization_error=_polarization_error(raw, raw_errors),
        fidelity_bgsub=fidelity(result.rho_bgsub, target),
        fidelity_bgsub_error=float(0.5 * np.sqrt(np.nansum((direction * sub_errors) ** 2))),
        polarization_bgsub=float(np.linalg.norm(sub)),
        polarization_bgsub_error=_polarization_error(sub, sub_errors),
        fidelity_mle=fidelity(result.rho_mle, target),
    )


def bootstrap_errors(
    counts: Sequence[BasisCounts],
    target: PolarizationState,
    resamples: int = 1000,
    seed: int = 0,
) -> Dict[str, float]:
    """
    Bootstrap errors of the raw fidelity and degree of polarization.

    Each basis is resampled binomially with its observed total and imbalance.

    Args:
      counts: Counts of the three bases.
      target: The input polarization.
      resamples: Number of bootstrap resamples.
      seed: Seed of the resampling generator.

    Returns:
      Standard deviations of fidelity and polarization over the resamples.

    Raises:
      InsufficientStatisticsError: If a basis has no counts or resamples < 2.
    """
    if resamples < 2:
        raise InsufficientStatisticsError("Bootstrap needs at least two resamples")
    table = _by_basis(counts)
    rng = np.random.Generator(np.random.Philox(seed))
    components = np.zeros((resamples, 3))
    for index, basis in enumerate(BASIS_ORDER):
        total = int(round(table[basis].total))
        if total <= 0:
            raise InsufficientStatisticsError(f"Basis {basis} has no counts")
        plus = rng.binomial(total, table[basis].n_plus / table[basis].total, size=resamples)
        components[:, index] = (2 * plus - total) / total
    fidelities = 0.5 * (1 + components @ _target_stokes(target))
    polarizations = np.linalg.norm(components, axis=1)
    return {
        "fidelity_error": float(np.std(fidelities, ddof=1)),
        "polarization_error": float(np.std(polarizations, ddof=1)),
    }


def counts_from_summary(
    summary: ClickSummary,
    input_index: int = 0,
    background: Optional[ClickSummary] = None,
) -> Tuple[BasisCounts, ...]:
    """
    Three-basis counts of one input from simulated click totals.

    Args:
      summary: Totals of the signal run.
      input_index: Which input of the run.
      background: Totals of the background-only acquisition, if any.

    Returns:
      Counts in Stokes order, with background scaled per basis by the ratio
      of counted signal windows to background windows.

    Raises:
      InsufficientStatisticsError: If a basis was not measured or has no
        background windows.
    """
    result = []
    for basis in BASIS_ORDER:
        if basis not in summary.settings:
            raise InsufficientStatisticsError(f"Basis {basis} was not measured")
        column = summary.setting_index(basis)
        item: Dict[str, Any] = {
            "basis": basis,
            "n_plus": float(summary.plus[input_index, column]),
            "n_minus": float(summary.minus[input_index, column]),
        }
        if background is not None:
            if basis not in background.settings:
                raise InsufficientStatisticsError(f"No background acquired in basis {basis}")
            background_column = background.setting_index(basis)
            windows = background.counted[:, background_column].sum()
            if windows == 0:
                raise InsufficientStatisticsError(f"No background windows in basis {basis}")
            item.update(
                background_plus=float(background.plus[:, background_column].sum()),
                background_minus=float(background.minus[:, background_column].sum()),
                background_scale=float(summary.counted[input_index, column] / windows),
            )
        result.append(BasisCounts(**item))
    return tuple(result)


def counts_from_table(
    table: ClickTable,
    input_index: int = 0,
    background: Optional[ClickTable] = None,
) -> Tuple[BasisCounts, ...]:
    """
    Three-basis counts of one input from trial records.
    """
    summary = table.summarize()
    background_summary = None if background is None else background.summarize(conditioned=False)
    return counts_from_summary(summary, input_index, background_summary)


@dataclass(frozen=True)
class SweepPoint:
    """
    Three-basis counts of one input of a theta sweep.
    """

    state: PolarizationState
    counts: Tuple[BasisCounts, ...]


@dataclass(frozen=True)
class SinusoidFit:
    """
    Fit of A cos(2 theta + delta) + B to one projection curve.
    """

    basis: str
    port: str
    amplitude: float
    phase: float
    offset: float
    residual_rms: float

    # RMS of the one-sigma errors of the data points.
    statistical_error: float

    @property
    def contrast(self) -> float:
        return self.amplitude / self.offset if self.offset > 0 else 0.0

    def consistent(self, factor: float = 3.0) -> bool:
        """
        Whether the residuals are compatible with the statistical errors.
        """
        return self.residual_rms < factor * self.statistical_error

    def to_dict(self) -> Dict[str, Any]:
        return {
            "basis": self.basis,
            "port": self.port,
            "amplitude": self.amplitude,
            "phase": self.phase,
            "offset": self.offset,
            "contrast": self.contrast,
            "residual_rms": self.residual_rms,
            "statistical_error": self.statistical_error,
        }


@dataclass(frozen=True)
class GlobalFit:
    """
    Simultaneous fit of all projection points with a shared state model.

    The model output is a partially polarized copy of cos(theta')|R> +
    exp(i phi) sin(theta')|L> with theta' = theta + theta_offset.
    """

    polarization: float
    polarization_error: float
    phi: float
    phi_error: float
    theta_offset: float
    theta_offset_error: float
    residual_rms: float
    points: int

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


@dataclass(frozen=True)
class ThetaSweepResult:
    """
    Projection data, per-curve fits and the global fit of a theta sweep.
    """

    thetas: Tuple[float, ...]

    # One row per (theta, basis, port): probability and its error.
    data: Tuple[Dict[str, Any], ...]
    fits: Tuple[SinusoidFit, ...]
    global_fit: GlobalFit

    def to_dict(self) -> Dict[str, Any]:
        return {
            "thetas": list(self.thetas),
            "data": list(self.data),
            "fits": [fit.to_dict() for fit in self.fits],
            "global_fit": self.global_fit.to_dict(),
        }


def fit_sinusoid(
    theta: np.ndarray,
    y: np.ndarray,
    sigma: Optional[np.ndarray] = None,
    basis: str = "",
    port: str = "",
) -> SinusoidFit:
    """
    Weighted linear least squares of A cos(2 theta + delta) + B.

    Args:
      theta: Zenith angles.
      y: Measured probabilities.
      sigma: One-sigma errors of y; None for an unweighted fit.
      basis: Basis tag, for reporting.
      port: Port tag, for reporting.

    Returns:
      The fit.

    Raises:
      InsufficientStatisticsError: With fewer than five points or when the
        angles do not determine the sinusoid.
    """
    theta = np.asarray(theta, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(theta) < MIN_SWEEP_POINTS:
        raise InsufficientStatisticsError(
            f"Sinusoid fit needs at least {MIN_SWEEP_POINTS} points, got {len(theta)}"
        )
    design = np.stack([np.cos(2 * theta), np.sin(2 * theta), np.ones_like(theta)], axis=1)
    if np.linalg.matrix_rank(design) < 3:
        raise InsufficientStatisticsError("Degenerate theta values, cannot fit a sinusoid")

    sigma = np.zeros_like(y) if sigma is None else np.asarray(sigma, dtype=float)
    weights = 1.0 / sigma if np.all(sigma > 0) else np.ones_like(y)
    coefficients, *_ = np.linalg.lstsq(design * weights[:, None], y * weights, rcond=None)
    a, b, offset = coefficients
    residuals = y - design @ coefficients
    return SinusoidFit(
        basis=basis,
        port=port,
        amplitude=float(math.hypot(a, b)),
        phase=float(math.atan2(-b, a)),
        offset=float(offset),
        residual_rms=float(np.sqrt(np.mean(residuals ** 2))),
        statistical_error=float(np.sqrt(np.mean(sigma ** 2))),
    )


def _projection_data(points: Sequence[SweepPoint]) -> List[Dict[str, Any]]:
    rows = []
    for point in points:
        table = _by_basis(point.counts)
        for basis in BASIS_ORDER:
            item = table[basis]
            if item.total <= 0:
                raise InsufficientStatisticsError(
                    f"Basis {basis} has no counts at theta={point.state.theta:.6g}"
                )
            plus_tag, minus_tag, index = BASES[basis]
            for port, count in ((plus_tag, item.n_plus), (minus_tag, item.n_minus)):
                probability = count / item.total
                # Variance floored at one count so that saturated points keep a finite weight.
                variance = max(probability * (1 - probability), 1.0 / item.total) / item.total
                rows.append(
                    {
                        "theta": point.state.theta,
                        "basis": basis,
                        "port": port,
                        "stokes_index": index,
                        "sign": 1 if port == plus_tag else -1,
                        "probability": probability,
                        "error": math.sqrt(variance),
                    }
                )
    return rows


def global_fit(rows: Sequence[Dict[str, Any]], phi: float = 0.0) -> GlobalFit:
    """
    Fit every projection point with one degree of polarization and azimuth.

    Args:
      rows: Projection data as produced by a theta sweep.
      phi: Starting azimuth.

    Returns:
      The global fit with errors from the Jacobian.

    Raises:
      ConvergenceError: If the least-squares solver fails.
    """
    theta = np.array([row["theta"] for row in rows])
    index = np.array([row["stokes_index"] for row in rows])
    sign = np.array([row["sign"] for row in rows])
    y = np.array([row["probability"] for row in rows])
    sigma = np.array([row["error"] for row in rows])

    def model(params: np.ndarray) -> np.ndarray:
        polarization, azimuth, offset = params
        angle = 2 * (theta + offset)
        stokes = np.stack(
            [
                np.sin(angle) * np.cos(azimuth),
                -np.sin(angle) * np.sin(azimuth),
                np.cos(angle),
            ]
        )
        return 0.5 * (1 + sign * polarization * stokes[index, np.arange(len(theta))])

    solution = optimize.least_squares(
        lambda params: (model(params) - y) / sigma,
        x0=np.array([0.9, phi, 0.0]),
        bounds=([0.0, phi - math.pi, -math.pi / 4], [1.0, phi + math.pi, math.pi / 4]),
    )
    if not solution.success:
        raise ConvergenceError(f"Global fit failed: {solution.message}", best=solution.x)
    covariance = np.linalg.pinv(solution.jac.T @ solution.jac)
    errors = np.sqrt(np.clip(np.diag(covariance), 0, None))
    residuals = model(solution.x) - y
    return GlobalFit(
        polarization=float(solution.x[0]),
        polarization_error=float(errors[0]),
        phi=float(solution.x[1] % (2 * math.pi)),
        phi_error=float(errors[1]),
        theta_offset=float(solution.x[2]),
        theta_offset_error=float(errors[2]),
        residual_rms=float(np.sqrt(np.mean(residuals ** 2))),
        points=len(rows),
    )


def theta_sweep(points: Sequence[SweepPoint]) -> ThetaSweepResult:
    """
    Fit the projection curves of a sweep over the zenith angle.

    Args:
      points: Counts per input; all inputs share the same azimuth.

    Returns:
      The projection data, one sinusoid per basis port, and the global fit.

    Raises:
      InsufficientStatisticsError: With fewer than five distinct angles.
      ConfigError: If the inputs do not share one azimuth.
    """
    thetas = sorted({point.state.theta for point in points})
    if len(thetas) < MIN_SWEEP_POINTS:
        raise InsufficientStatisticsError(
            f"Theta sweep needs at least {MIN_SWEEP_POINTS} angles, got {len(thetas)}"
        )
    azimuths = {round(point.state.phi, 12) for point in points}
    if len(azimuths) > 1:
        raise ConfigError(f"Theta sweep inputs must share one azimuth, got {sorted(azimuths)}")

    rows = _projection_data(points)
    fits = []
    for basis in BASIS_ORDER:
        for port in BASES[basis][:2]:
            selected = [row for row in rows if row["basis"] == basis and row["port"] == port]
            fits.append(
                fit_sinusoid(
                    np.array([row["theta"] for row in selected]),
                    np.array([row["probability"] for row in selected]),
                    np.array([row["error"] for row in selected]),
                    basis=basis,
                    port=port,
                )
            )
    return ThetaSweepResult(
        thetas=tuple(thetas),
        data=tuple(rows),
        fits=tuple(fits),
        global_fit=global_fit(rows, phi=points[0].state.phi),
    )
