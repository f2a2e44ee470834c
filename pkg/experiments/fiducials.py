"""
Polarization tomography of a set of input states against their targets.
"""
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from experiments.framework import Experiment, ExperimentOutputs
from simulation.calibration import expected_fidelity, expected_subtracted_fidelity
from simulation.engine import ClickSummary, ClickTable, background_plan, simulate, summarize
from tomography import (
    CLASSICAL_LIMIT,
    BasisCounts,
    FidelityReport,
    TomographyResult,
    bootstrap_errors,
    counts_from_summary,
    fidelity_report,
    reconstruct,
)


class FiducialsExperiment(Experiment):
    """
    Store each input, reconstruct it in three bases and score the copy.
    """

    command: str = "fiducials"

    def acquire(self) -> Tuple[ClickSummary, ClickSummary, Optional[ClickTable], Optional[ClickTable]]:
        """
        Signal totals of every input and the shared background totals.

        With output.records set, the trial tables are kept as well.
        """
        plan = self.plan
        sequence = plan.sequence_plan()
        background = background_plan(sequence, plan.analysis.background_ratio)
        print(
            f"Simulating {len(plan.states)} input states, {plan.trials} trials each.",
            flush=True,
        )
        if not plan.output.records:
            signal = summarize(sequence)
            print(f"Acquiring background over {background.trials} windows.", flush=True)
            return signal, summarize(background), None, None

        records = simulate(sequence)
        print(f"Acquiring background over {background.trials} windows.", flush=True)
        background_records = simulate(background)
        return (
            records.summarize(len(plan.states)),
            background_records.summarize(1, conditioned=False),
            records,
            background_records,
        )

    def reconstruct_input(
        self, signal: ClickSummary, background: ClickSummary, index: int
    ) -> Tuple[Tuple[BasisCounts, ...], TomographyResult, FidelityReport]:
        counts = counts_from_summary(signal, index, background)
        result = reconstruct(
            counts,
            max_iterations=self.plan.analysis.mle_max_iterations,
            tolerance=self.plan.analysis.mle_tolerance,
            strict=True,
        )
        return counts, result, fidelity_report(result, self.plan.states[index])

    def fidelity_row(self, index: int, report: FidelityReport, counts: Tuple[BasisCounts, ...]) -> Dict[str, Any]:
        plan = self.plan
        state = plan.states[index]
        row: Dict[str, Any] = {
            "input": plan.labels[index],
            "counts": sum(c.total for c in counts),
            **report.to_dict(),
            "expected_fidelity": expected_fidelity(state, plan.noise, plan.timing),
            "expected_fidelity_bgsub": expected_subtracted_fidelity(state, plan.noise, plan.timing),
        }
        if plan.analysis.bootstrap_resamples > 0:
            errors = bootstrap_errors(
                counts, state, plan.analysis.bootstrap_resamples, seed=plan.seed + index
            )
            row.update({f"bootstrap_{key}": value for key, value in errors.items()})
        return row

    def run(self) -> ExperimentOutputs:
        signal, background, records, background_records = self.acquire()
        rows: List[Dict[str, Any]] = []
        count_rows: List[Dict[str, Any]] = []
        reconstructions: Dict[str, Any] = {}
        for index, label in enumerate(self.plan.labels):
            counts, result, report = self.reconstruct_input(signal, background, index)
            rows.append(self.fidelity_row(index, report, counts))
            count_rows.extend({"input": label, **c.to_dict()} for c in counts)
            reconstructions[label] = result.to_dict()
            print(
                f"{label}: F = {report.fidelity:.4f} +- {report.fidelity_error:.4f}, "
                f"F_bgsub = {report.fidelity_bgsub:.4f} +- {report.fidelity_bgsub_error:.4f}",
                flush=True,
            )

        fidelities = np.array([row["fidelity"] for row in rows])
        errors = np.array([row["fidelity_error"] for row in rows])
        summary = {
            "mean_fidelity": float(fidelities.mean()),
            "mean_fidelity_error": float(np.sqrt(np.sum(errors ** 2)) / len(errors)),
            "mean_fidelity_spread": float(fidelities.std(ddof=1)) if len(rows) > 1 else 0.0,
            "mean_fidelity_bgsub": float(np.mean([row["fidelity_bgsub"] for row in rows])),
            "mean_polarization": float(np.mean([row["polarization"] for row in rows])),
            "classical_limit": CLASSICAL_LIMIT,
            "all_exceed_classical_limit": all(row["exceeds_classical_limit"] for row in rows),
            "reconstructions": reconstructions,
        }
        return ExperimentOutputs(
            tables={"fidelities": rows, "counts": count_rows},
            summary=summary,
            records=records,
            background_records=background_records,
        )
