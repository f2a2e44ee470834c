"""
Heralded autocorrelation of the retrieved field behind a balanced splitter.
"""
from experiments.framework import Experiment, ExperimentOutputs
from polarization import BALANCED
from simulation.calibration import expected_g2
from simulation.engine import simulate, summarize
from simulation.protocol import herald_probability
from stats import bootstrap_g2, conditional_g2, summary_dict, tally_summary


class G2Experiment(Experiment):
    """
    Count heralded coincidences of D2 and D3 and estimate g2.
    """

    command: str = "g2"

    def run(self) -> ExperimentOutputs:
        plan = self.plan
        sequence = plan.sequence_plan(settings=(BALANCED,))
        print(f"Simulating {sequence.trials * len(sequence.inputs)} balanced trials.", flush=True)
        records = None
        if plan.output.records:
            records = simulate(sequence)
            totals = records.summarize(len(plan.states))
        else:
            totals = summarize(sequence)

        tally = tally_summary(totals)
        estimate = conditional_g2(tally)
        print(f"g2 = {estimate.value:.4f} +- {estimate.error:.4f}", flush=True)

        summary = summary_dict(tally, estimate)
        summary["expected_g2"] = expected_g2(plan.noise)
        summary["herald_probability"] = herald_probability(plan.noise)
        if plan.analysis.bootstrap_resamples > 0:
            summary["bootstrap_err"] = bootstrap_g2(
                tally, plan.analysis.bootstrap_resamples, seed=plan.seed
            )
        return ExperimentOutputs(
            tables={"g2": [dict(summary)]},
            summary=summary,
            records=records,
        )
