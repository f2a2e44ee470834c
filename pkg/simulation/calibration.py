"""
Closed-form expectations of the noise model, and fitting its free parameters.

These are the infinite-statistics counterparts of the simulated estimates
and are used to pick `mu_bg` and `p2` once, before any simulation.
"""
import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np
from scipy import optimize

from polarization import FIDUCIALS, DensityMatrix, PolarizationState, fidelity
from simulation.protocol import NoiseParams, ProtocolTiming, read_map, signal_density, store, write_map
from utils import ConfigError

# Largest background mean tried when bracketing a fidelity target.
MAX_BACKGROUND: float = 1e6


@dataclass(frozen=True)
class ClickProbabilities:
    """
    Per-herald click probabilities behind a balanced splitter.
    """

    # At least one photon at D2, at D3, and at both.
    d2: float
    d3: float
    both: float

    @property
    def single(self) -> float:
        """
        Exactly one of the two ports clicks.
        """
        return self.d2 + self.d3 - 2 * self.both

    @property
    def g2(self) -> float:
        return self.both / (self.d2 * self.d3)


def expected_read_density(
    state: PolarizationState,
    noise: NoiseParams,
    timing: ProtocolTiming,
    swapped: bool = False,
) -> DensityMatrix:
    return read_map(store(write_map(state, timing), noise, timing), noise, timing, swapped).rho


def expected_fidelity(
    state: PolarizationState, noise: NoiseParams, timing: ProtocolTiming
) -> float:
    """
    Fidelity of the read window, averaged over the ensemble-swap parity.
    """
    return float(
        np.mean(
            [fidelity(expected_read_density(state, noise, timing, swapped), state) for swapped in (False, True)]
        )
    )


def expected_subtracted_fidelity(
    state: PolarizationState, noise: NoiseParams, timing: ProtocolTiming
) -> float:
    """
    Fidelity once the background has been removed perfectly.
    """
    magnon = store(write_map(state, timing), noise, timing)
    return fidelity(DensityMatrix(signal_density(magnon)), state)


def expected_mean_fidelity(
    noise: NoiseParams,
    timing: ProtocolTiming,
    states: Optional[Iterable[PolarizationState]] = None,
) -> float:
    """
    Mean fidelity over a set of inputs, the six fiducials by default.
    """
    states = list(FIDUCIALS.values()) if states is None else list(states)
    return float(np.mean([expected_fidelity(state, noise, timing) for state in states]))


def signal_generating_function(noise: NoiseParams) -> Callable[[float], float]:
    """
    Probability generating function of detected retrieved photons per herald.
    """
    detected = noise.epsilon_retrieval * noise.q
    if noise.emission == "poisson":
        mean = noise.emission_mean * detected
        return lambda s: math.exp(mean * (s - 1))
    double = noise.p2 * detected
    return lambda s: (1 - detected + detected * s) * (1 - double + double * s)


def expected_click_probabilities(noise: NoiseParams) -> ClickProbabilities:
    """
    Click probabilities of a heralded read analysed on a 50/50 splitter.

    Retrieved photons split binomially, background and dark counts are
    independent Poisson noise at each port.
    """
    generating = signal_generating_function(noise)
    port_noise = noise.effective_background() * noise.q / 2 + noise.dark_rate
    empty = math.exp(-port_noise) * generating(0.5)
    both_empty = math.exp(-2 * port_noise) * generating(0.0)
    return ClickProbabilities(d2=1 - empty, d3=1 - empty, both=1 - 2 * empty + both_empty)


def expected_g2(noise: NoiseParams) -> float:
    return expected_click_probabilities(noise).g2


def mu_bg_for_weight(weight: float, noise: NoiseParams) -> float:
    """
    Background mean giving a mixing weight lambda, without pump scatter.

    Raises:
      ConfigError: If the weight is outside [0, 1).
    """
    if not 0 <= weight < 1:
        raise ConfigError(f"Background weight {weight} must lie in [0, 1)")
    return weight * noise.epsilon_retrieval * noise.emitted_photons() / (1 - weight)


def calibrate_mu_bg(
    target_mean_fidelity: float, noise: NoiseParams, timing: ProtocolTiming
) -> float:
    """
    Fit the background mean so that the six-fiducial mean fidelity hits a target.

    Args:
      target_mean_fidelity: The mean fidelity to reproduce.
      noise: Noise parameters; every field but mu_bg is kept.
      timing: Protocol timing.

    Returns:
      The fitted mu_bg.

    Raises:
      ConfigError: If the target cannot be reached by adding background.
    """

    def mismatch(mu_bg: float) -> float:
        return expected_mean_fidelity(dataclasses.replace(noise, mu_bg=mu_bg), timing) - target_mean_fidelity

    ceiling = mismatch(0.0)
    if ceiling < 0:
        raise ConfigError(
            f"Target fidelity {target_mean_fidelity} exceeds the background-free value {ceiling + target_mean_fidelity:.6g}"
        )
    if ceiling == 0:
        return 0.0

    upper = 1e-3
    while mismatch(upper) > 0:
        upper *= 2
        if upper > MAX_BACKGROUND:
            raise ConfigError(f"Target fidelity {target_mean_fidelity} is not reachable")
    return float(optimize.brentq(mismatch, 0.0, upper, xtol=1e-14))


def calibrate_p2(target_g2: float, noise: NoiseParams) -> float:
    """
    Fit the two-photon weight so that the expected g2 hits a target.

    Raises:
      ConfigError: If the target lies outside what p2 in [0, 1] produces.
    """

    def mismatch(p2: float) -> float:
        return expected_g2(dataclasses.replace(noise, p2=p2, emission="single")) - target_g2

    low, high = mismatch(0.0), mismatch(1.0)
    if low > 0 or high < 0:
        raise ConfigError(
            f"g2 target {target_g2} outside reachable range [{low + target_g2:.4g}, {high + target_g2:.4g}]"
        )
    return float(optimize.brentq(mismatch, 0.0, 1.0, xtol=1e-14))
