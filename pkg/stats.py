"""
Photon counting statistics: coincidence tallies, heralded g2 and rates.
"""
import math
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Optional

import numpy as np

from simulation.engine import DETECTORS, ClickSummary, TrialRecord
from simulation.protocol import NoiseParams, herald_probability
from utils import InsufficientStatisticsError


@dataclass(frozen=True)
class CoincidenceTally:
    """
    Heralds and herald-conditioned coincidences, one window per trial.
    """

    n_trials: int = 0

    # Windows with a D1 click.
    n1: int = 0

    # Heralded windows with a D2 click, a D3 click, and both.
    n12: int = 0
    n13: int = 0
    n123: int = 0

    def __post_init__(self) -> None:
        if not self.n123 <= min(self.n12, self.n13) <= max(self.n12, self.n13) <= self.n1 <= self.n_trials:
            raise ValueError(f"Inconsistent coincidence tally {self}")

    def merge(self, other: "CoincidenceTally") -> "CoincidenceTally":
        return merge(self, other)

    def swapped(self) -> "CoincidenceTally":
        """
        The tally with D2 and D3 relabeled.
        """
        return CoincidenceTally(self.n_trials, self.n1, self.n13, self.n12, self.n123)


@dataclass(frozen=True)
class G2Estimate:
    value: float
    error: float


@dataclass(frozen=True)
class RateProjection:
    """
    Herald probability per trial and heralds per second.
    """

    probability: float
    rate: float


def merge(a: CoincidenceTally, b: CoincidenceTally) -> CoincidenceTally:
    """
    Combine partial tallies of disjoint trial sets.
    """
    return CoincidenceTally(
        n_trials=a.n_trials + b.n_trials,
        n1=a.n1 + b.n1,
        n12=a.n12 + b.n12,
        n13=a.n13 + b.n13,
        n123=a.n123 + b.n123,
    )


def tally(records: Iterable[TrialRecord]) -> CoincidenceTally:
    """
    Count heralds and coincidences in a stream of trial records.

    Args:
      records: Trials read out on a balanced splitter.

    Returns:
      The tally.
    """
    n_trials = n1 = n12 = n13 = n123 = 0
    herald, plus, minus = DETECTORS
    for record in records:
        n_trials += 1
        if record.count(herald) == 0:
            continue
        n1 += 1
        click2 = record.count(plus) > 0
        click3 = record.count(minus) > 0
        n12 += click2
        n13 += click3
        n123 += click2 and click3
    return CoincidenceTally(n_trials, n1, n12, n13, n123)


def tally_summary(summary: ClickSummary, input_index: Optional[int] = None) -> CoincidenceTally:
    """
    Tally of simulated click totals, over one input or all of them.
    """
    rows = slice(None) if input_index is None else slice(input_index, input_index + 1)
    return CoincidenceTally(
        n_trials=int(summary.windows[rows].sum()),
        n1=int(summary.heralds[rows].sum()),
        n12=int(summary.n12[rows].sum()),
        n13=int(summary.n13[rows].sum()),
        n123=int(summary.n123[rows].sum()),
    )


def herald_rate(t: CoincidenceTally) -> float:
    """
    Heralds per trial.
    """
    return t.n1 / t.n_trials if t.n_trials else 0.0


def conditional_g2(t: CoincidenceTally) -> G2Estimate:
    """
    Heralded autocorrelation g2 = N123 N1 / (N12 N13).

    The error propagates independent Poisson errors of the four counts. With
    no triple coincidences the error is that of a single triple count.

    Raises:
      InsufficientStatisticsError: If N12 or N13 is zero.
    """
    if t.n12 == 0 or t.n13 == 0:
        raise InsufficientStatisticsError(
            f"g2 is undefined with N12={t.n12} and N13={t.n13}"
        )
    scale = t.n1 / (t.n12 * t.n13)
    value = t.n123 * scale
    if t.n123 == 0:
        return G2Estimate(value=0.0, error=scale)
    relative = math.sqrt(1 / t.n123 + 1 / t.n1 + 1 / t.n12 + 1 / t.n13)
    return G2Estimate(value=value, error=value * relative)


def bootstrap_g2(t: CoincidenceTally, resamples: int = 1000, seed: int = 0) -> float:
    """
    Bootstrap error of g2 by multinomial resampling of heralded windows.

    Raises:
      InsufficientStatisticsError: If g2 is undefined or resamples < 2.
    """
    conditional_g2(t)
    if resamples < 2:
        raise InsufficientStatisticsError("Bootstrap needs at least two resamples")
    categories = np.array(
        [t.n123, t.n12 - t.n123, t.n13 - t.n123, t.n1 - t.n12 - t.n13 + t.n123], dtype=float
    )
    rng = np.random.Generator(np.random.Philox(seed))
    draws = rng.multinomial(t.n1, categories / t.n1, size=resamples)
    n123 = draws[:, 0]
    n12 = draws[:, 0] + draws[:, 1]
    n13 = draws[:, 0] + draws[:, 2]
    valid = (n12 > 0) & (n13 > 0)
    values = n123[valid] * t.n1 / (n12[valid] * n13[valid])
    if len(values) < 2:
        raise InsufficientStatisticsError("Too few valid bootstrap resamples")
    return float(np.std(values, ddof=1))


def success_rate_projection(noise: NoiseParams, trials_per_second: float) -> RateProjection:
    """
    Herald probability and heralds per second at a given trial rate.
    """
    probability = herald_probability(noise)
    return RateProjection(probability=probability, rate=probability * trials_per_second)


def summary_dict(t: CoincidenceTally, estimate: G2Estimate) -> Dict[str, Any]:
    """
    One-line JSON summary of a g2 measurement.
    """
    return {
        "g2": estimate.value,
        "err": estimate.error,
        "N1": t.n1,
        "N12": t.n12,
        "N13": t.n13,
        "N123": t.n123,
        "herald_rate": herald_rate(t),
    }
