"""
Write/store/read protocol: timing grid, noise model and the magnon maps.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from polarization import DensityMatrix, PolarizationState, amplitudes
from utils import ConfigError

# Largest allowed ratio of a pulse duration to the Larmor period.
MAX_PULSE_FRACTION: float = 0.25

# Recognised decoherence models.
DECOHERENCE_MODELS = ("exponential", "gaussian")

# Recognised background polarization models.
BACKGROUND_MODELS = ("unpolarized", "precession")

# Recognised photon-number statistics of the retrieved field.
EMISSION_MODELS = ("single", "poisson")


@dataclass
class ProtocolTiming:
    """
    Timing of the optical-pump, write and read pulses.

    Defaults reproduce a 2 us Larmor period with the write pulse at half a
    period and the read pulse a quarter period later.
    """

    # Larmor period in seconds.
    tau_L: float = 2.0e-6

    # Optical pumping time; defines the rotating quantization axis.
    t_opt: float = 0.0

    # Write time as a fraction of the Larmor period.
    write_fraction: float = 0.5

    # Write-to-read delay as a fraction of the Larmor period.
    storage_fraction: float = 0.25

    # Trial period as a fraction of the Larmor period.
    period_fraction: float = 1.5

    # Pulse lengths in seconds.
    pump_duration: float = 100e-9
    write_duration: float = 50e-9
    read_duration: float = 100e-9

    # Trials per sequence, and how often sequences repeat (Hz).
    trials_per_sequence: int = 10_000
    sequence_rate: float = 0.5

    @property
    def t_w(self) -> float:
        return self.t_opt + self.write_fraction * self.tau_L

    @property
    def t_r(self) -> float:
        return self.t_w + self.storage_fraction * self.tau_L

    @property
    def storage_time(self) -> float:
        return self.storage_fraction * self.tau_L

    @property
    def trial_period(self) -> float:
        return self.period_fraction * self.tau_L

    def effective_trial_rate(self) -> float:
        """
        Average trials per second including the recooling gaps.
        """
        return self.trials_per_sequence * self.sequence_rate

    def validate(self) -> None:
        """
        Check the timing grid.

        Raises:
          ConfigError: If a pulse is too long or the read falls outside a trial.
        """
        if self.tau_L <= 0:
            raise ConfigError(f"tau_L must be positive, got {self.tau_L}")
        for name in ("pump_duration", "write_duration", "read_duration"):
            ratio = getattr(self, name) / self.tau_L
            if not 0 <= ratio < MAX_PULSE_FRACTION:
                raise ConfigError(
                    f"{name}/tau_L = {ratio:.3g} must be below {MAX_PULSE_FRACTION}"
                )
        if self.storage_fraction <= 0:
            raise ConfigError("The read pulse must follow the write pulse")
        if self.trials_per_sequence <= 0 or self.sequence_rate <= 0:
            raise ConfigError("trials_per_sequence and sequence_rate must be positive")

    def read_fires(self) -> bool:
        """
        Whether the read pulse completes inside the trial period.
        """
        return self.t_r - self.t_opt + self.read_duration <= self.trial_period


@dataclass
class NoiseParams:
    """
    Herald factors, retrieval efficiency and the noise sources of the readout.
    """

    # Transverse optical depth.
    alpha_perp: float = 0.01

    # Single-atom cooperativity, i.e. emission probability into the resonator.
    eta: float = 1e-3

    # Photon detection efficiency.
    q: float = 0.1

    # Probability that the read pulse retrieves the magnon into the detection path.
    epsilon_retrieval: float = 0.5

    # Mean background photons reaching the analyzer per read window.
    mu_bg: float = 0.0

    # Dark counts per detector per window.
    dark_rate: float = 0.0

    # Magnon decoherence time in seconds.
    T2: float = 3e-6

    # Fraction of atoms pumped into the right sublevel.
    pump_purity: float = 0.99

    # Background photons per window scattered by a completely unpumped sample.
    pump_scatter: float = 0.0

    # Probability of a second retrieved photon per heralded read.
    p2: float = 0.0

    # Functional form of the A-B dephasing.
    decoherence: str = "exponential"

    # Polarization of background photons.
    background_model: str = "unpolarized"

    # Photon-number statistics of the retrieved field.
    emission: str = "single"

    # Mean emitted photon number when emission is poisson.
    emission_mean: float = 1.0

    def validate(self) -> None:
        """
        Check parameter ranges.

        Raises:
          ConfigError: On out-of-range probabilities or unknown model names.
        """
        for name in ("alpha_perp", "eta", "q", "epsilon_retrieval", "pump_purity", "p2"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"noise.{name} = {value} must lie in [0, 1]")
        for name in ("mu_bg", "dark_rate", "pump_scatter", "emission_mean"):
            value = getattr(self, name)
            if value < 0:
                raise ConfigError(f"noise.{name} = {value} must be non-negative")
        if self.T2 <= 0:
            raise ConfigError(f"noise.T2 = {self.T2} must be positive")
        if self.decoherence not in DECOHERENCE_MODELS:
            raise ConfigError(f"noise.decoherence must be one of {DECOHERENCE_MODELS}")
        if self.background_model not in BACKGROUND_MODELS:
            raise ConfigError(f"noise.background_model must be one of {BACKGROUND_MODELS}")
        if self.emission not in EMISSION_MODELS:
            raise ConfigError(f"noise.emission must be one of {EMISSION_MODELS}")

    def effective_background(self) -> float:
        """
        Mean background photons per window including badly pumped atoms.
        """
        return self.mu_bg + (1.0 - self.pump_purity) * self.pump_scatter

    def emitted_photons(self) -> float:
        """
        Mean number of photons emitted by a heralded read.
        """
        if self.emission == "poisson":
            return self.emission_mean
        return 1.0 + self.p2


@dataclass(frozen=True)
class MagnonRecord:
    """
    A stored dual-rail excitation.
    """

    # Amplitude of |1>_A|0>_B.
    c_A: complex

    # Amplitude of |0>_A|1>_B.
    c_B: complex

    # Time the magnon was written.
    stored_at: float

    # Factor applied to the A-B coherence at read time.
    coherence_factor: float = 1.0


@dataclass(frozen=True)
class ReadOutput:
    """
    Polarization state of the read window and its emission probability.
    """

    rho: DensityMatrix
    emission_probability: float

    # Fraction of detected light coming from the magnon, i.e. 1 - lambda.
    signal_weight: float


def herald_probability(noise: NoiseParams) -> float:
    """
    Probability that a trial is heralded, p = alpha_perp * eta * q.
    """
    return noise.alpha_perp * noise.eta * noise.q


def write_map(
    state: PolarizationState, timing: Optional[ProtocolTiming] = None
) -> MagnonRecord:
    """
    Project a polarization state onto the dual-rail magnon.

    Ensemble A absorbs only |R>, ensemble B only |L>.

    Args:
      state: The write-beam polarization.
      timing: Protocol timing used to stamp the storage time.

    Returns:
      The stored magnon with full coherence.
    """
    timing = timing if timing is not None else ProtocolTiming()
    c_R, c_L = amplitudes(state)
    return MagnonRecord(c_A=c_R, c_B=c_L, stored_at=timing.t_w)


def larmor_angle(t: float, timing: ProtocolTiming) -> float:
    """
    Spin precession angle accumulated after time t, modulo 2 pi.

    Raises:
      ValueError: If t is negative.
    """
    if t < 0:
        raise ValueError(f"Time {t} must be non-negative")
    return (2 * math.pi * t / timing.tau_L) % (2 * math.pi)


def coherence_factor(noise: NoiseParams, timing: ProtocolTiming) -> float:
    """
    Surviving fraction of the A-B coherence between write and read.
    """
    ratio = (timing.t_r - timing.t_w) / noise.T2
    if noise.decoherence == "gaussian":
        return math.exp(-(ratio ** 2))
    return math.exp(-ratio)


def store(
    magnon: MagnonRecord, noise: NoiseParams, timing: ProtocolTiming
) -> MagnonRecord:
    """
    Apply dephasing over the storage interval.
    """
    return MagnonRecord(
        c_A=magnon.c_A,
        c_B=magnon.c_B,
        stored_at=magnon.stored_at,
        coherence_factor=magnon.coherence_factor * coherence_factor(noise, timing),
    )


def signal_density(magnon: MagnonRecord) -> np.ndarray:
    """
    Photon polarization emitted by the magnon, rail A -> |R>, rail B -> |L>.
    """
    coherence = magnon.coherence_factor * magnon.c_A * np.conj(magnon.c_B)
    return np.array(
        [
            [abs(magnon.c_A) ** 2, coherence],
            [np.conj(coherence), abs(magnon.c_B) ** 2],
        ],
        dtype=complex,
    )


def background_weight(noise: NoiseParams) -> float:
    """
    Mixing weight lambda of background light in a heralded read window.
    """
    background = noise.effective_background()
    signal = noise.epsilon_retrieval * noise.emitted_photons()
    if background + signal == 0:
        return 0.0
    return background / (background + signal)


def background_circularity(noise: NoiseParams, timing: ProtocolTiming, swapped: bool) -> float:
    """
    R-L Stokes component of background photons.

    Under the precession model the read pump acquires a sigma+- admixture
    growing with the precession during the read window; its sign follows
    which ensemble sits in which sublevel.
    """
    if noise.background_model == "unpolarized":
        return 0.0
    bias = math.sin(larmor_angle(timing.read_duration, timing))
    return -bias if swapped else bias


def background_density(noise: NoiseParams, timing: ProtocolTiming, swapped: bool) -> np.ndarray:
    s3 = background_circularity(noise, timing, swapped)
    return np.array([[(1 + s3) / 2, 0], [0, (1 - s3) / 2]], dtype=complex)


def read_map(
    magnon: Optional[MagnonRecord],
    noise: NoiseParams,
    timing: ProtocolTiming,
    swapped: bool = False,
) -> ReadOutput:
    """
    Map the stored magnon onto the polarization of the read window.

    Args:
      magnon: The stored magnon, after `store`. None for an un-heralded trial.
      noise: Noise parameters.
      timing: Protocol timing.
      swapped: Whether the ensembles are interchanged in this trial.

    Returns:
      The read-window density matrix, the retrieval probability and the
      signal weight 1 - lambda. Un-heralded reads carry background only.
    """
    background = background_density(noise, timing, swapped)
    if magnon is None:
        return ReadOutput(
            rho=DensityMatrix(background), emission_probability=0.0, signal_weight=0.0
        )

    weight = background_weight(noise)
    rho = (1 - weight) * signal_density(magnon) + weight * background
    return ReadOutput(
        rho=DensityMatrix(rho),
        emission_probability=noise.epsilon_retrieval,
        signal_weight=1 - weight,
    )
