"""
Heralding probability and heralded rate of a parameter set.
"""
from experiments.framework import Experiment, ExperimentOutputs
from stats import success_rate_projection


class RateExperiment(Experiment):
    """
    Project the success probability and rate without simulating.
    """

    command: str = "rate"

    def run(self) -> ExperimentOutputs:
        plan = self.plan
        trials_per_second = plan.trials_per_second or plan.timing.effective_trial_rate()
        projection = success_rate_projection(plan.noise, trials_per_second)
        print(
            f"Herald probability {projection.probability:.3g}, "
            f"{projection.rate:.3g} heralds per second at {trials_per_second:.3g} trials per second.",
            flush=True,
        )
        row = {
            "alpha_perp": plan.noise.alpha_perp,
            "eta": plan.noise.eta,
            "q": plan.noise.q,
            "trials_per_second": trials_per_second,
            "probability": projection.probability,
            "rate": projection.rate,
        }
        return ExperimentOutputs(tables={"rate": [row]}, summary=dict(row))
