"""
Main command-line entry point for the 'magnon' command.
"""
from typing import Dict, List, Type

import click

import experiments.concurrence as concurrence
import experiments.fiducials as fiducials
import experiments.framework as framework
import experiments.g2 as g2
import experiments.offline as offline
import experiments.rate as rate
import experiments.theta_sweep as theta_sweep


# List the experiments available in this repository.
EXPERIMENTS: List[Type[framework.Experiment]] = [
    fiducials.FiducialsExperiment,
    theta_sweep.ThetaSweepExperiment,
    g2.G2Experiment,
    concurrence.ConcurrenceExperiment,
    rate.RateExperiment,
]

EXPERIMENTS_BY_MODE: Dict[str, Type[framework.Experiment]] = {
    experiment.command: experiment for experiment in EXPERIMENTS
}

# Create all the commands available for the experiments.
EXPERIMENT_COMMANDS: List[click.Command] = [
    framework.create_mode_command(experiment, EXPERIMENTS_BY_MODE) for experiment in EXPERIMENTS
]

RECORDS_COMMANDS = [
    offline.tomography_command,
]


@click.group()
def main() -> None:
    """
    Heralded magnon memory simulation and analysis CLI.
    """


@main.group("records")
def records() -> None:
    """
    Analysis of stored records and count tables.
    """


main.add_command(framework.create_run_command(EXPERIMENTS_BY_MODE))
for command in RECORDS_COMMANDS:
    records.add_command(command)
for command in EXPERIMENT_COMMANDS:
    main.add_command(command)

if __name__ == "__main__":
    main()
