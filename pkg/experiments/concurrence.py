"""
Photonic concurrence of the retrieved dual-rail state.
"""
from typing import Any, Dict, List

from entanglement import (
    ReadoutYields,
    expected_photonic_concurrence,
    photonic_concurrence_from_experiment,
)
from experiments.fiducials import FiducialsExperiment
from experiments.framework import ExperimentOutputs
from polarization import BALANCED
from simulation.engine import summarize
from stats import tally_summary


class ConcurrenceExperiment(FiducialsExperiment):
    """
    Tomography of each input plus a balanced run for the photon-number weights.
    """

    command: str = "concurrence"

    def run(self) -> ExperimentOutputs:
        plan = self.plan
        signal, background, records, background_records = self.acquire()

        # The balanced run continues the trial counter past the tomography run.
        balanced = plan.sequence_plan(
            settings=(BALANCED,), trial_offset=plan.trials * len(plan.states)
        )
        print(f"Simulating {plan.trials} balanced trials per input.", flush=True)
        balanced_totals = summarize(balanced)

        rows: List[Dict[str, Any]] = []
        states: Dict[str, Any] = {}
        for index, label in enumerate(plan.labels):
            _, result, report = self.reconstruct_input(signal, background, index)
            tally = tally_summary(balanced_totals, index)
            readout = ReadoutYields.from_tally(tally)
            estimate = photonic_concurrence_from_experiment(
                result, readout, plan.analysis.concurrence_method
            )
            expected = expected_photonic_concurrence(plan.states[index], plan.noise, plan.timing)
            print(
                f"{label}: C_ph = {estimate.value:.4f} +- {estimate.error:.4f} (expected {expected:.4f})",
                flush=True,
            )
            rows.append(
                {
                    "input": label,
                    "theta": plan.states[index].theta,
                    "phi": plan.states[index].phi,
                    "concurrence": estimate.value,
                    "error": estimate.error,
                    "expected_concurrence": expected,
                    "fidelity_mle": report.fidelity_mle,
                    "heralds": readout.heralds,
                    "p_single": readout.p_single,
                    "p_double": readout.p_double,
                }
            )
            states[label] = estimate.to_dict()

        return ExperimentOutputs(
            tables={"concurrence": rows},
            summary={"method": plan.analysis.concurrence_method, "inputs": states},
            records=records,
            background_records=background_records,
        )
