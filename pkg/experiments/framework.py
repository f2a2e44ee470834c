"""
Experiment framework: configuration, plans, command creation and outputs.
"""
import difflib
import math
import os
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Type

import click
import numpy as np
import yaml
from omegaconf import MISSING, DictConfig, OmegaConf
from omegaconf.errors import OmegaConfBaseException

from path_utils import get_default_config_path
from polarization import BALANCED, BASES, FIDUCIALS, PolarizationState, fiducial
from records import write_records
from simulation.engine import ClickTable, SequencePlan
from simulation.protocol import NoiseParams, ProtocolTiming
from utils import (
    EXIT_CONFIG,
    ConfigError,
    ConvergenceError,
    InsufficientStatisticsError,
    NonPhysicalStateError,
    die_if,
    exit_code_for,
    remove_none_values_from_dict,
    write_json,
    write_table,
)

# Where to save the resolved config file.
CONFIG_YAML: str = "config.yaml"

# Where to save the JSON summary of a run.
SUMMARY_JSON: str = "summary.json"

# Where to save trial records when requested.
RECORDS_CSV: str = "records.csv"
BACKGROUND_CSV: str = "background.csv"

# Experiment modes.
MODES: Tuple[str, ...] = ("fiducials", "theta-sweep", "g2", "concurrence", "rate")

# Modes that run the simulator.
SIMULATION_MODES: Tuple[str, ...] = ("fiducials", "theta-sweep", "g2", "concurrence")

# Table formats.
FORMATS: Tuple[str, ...] = ("csv", "json")

# Fewest zenith angles of a theta sweep.
MIN_THETA_POINTS: int = 5

# The three tomography settings in rotation order.
TOMOGRAPHY_SETTINGS: List[str] = ["H-V", "S-T", "L-R"]


@dataclass
class AnalysisConfig:
    """
    Estimation settings.
    """

    # Background windows acquired per signal window of one input.
    background_ratio: float = 4.0

    # Likelihood ascent.
    mle_max_iterations: int = 10_000
    mle_tolerance: float = 1e-10

    # Bootstrap cross-checks of the analytic errors; 0 disables them.
    bootstrap_resamples: int = 0

    # Concurrence route: svd or polynomial.
    concurrence_method: str = "svd"


@dataclass
class OutputConfig:
    """
    Where and how results are written.
    """

    out: str = "out"
    format: str = "csv"
    progress: bool = True

    # Also write every simulated trial to a record file.
    records: bool = False


@dataclass
class ExperimentConfig:
    """
    Full configuration of one experiment run.
    """

    mode: str = "fiducials"

    # Mandatory; there is no wall-clock seeding.
    seed: int = MISSING

    # Trials per input state.
    trials: int = 10_000

    # Condition every trial on a herald instead of sampling it.
    heralded_only: bool = True

    # Fiducial tags or 'theta:phi' pairs in radians.
    inputs: List[str] = field(default_factory=lambda: list(FIDUCIALS))

    # Theta sweep grid over [0, pi) at fixed azimuth.
    theta_points: int = 10
    phi: float = 0.0

    # Analyzer settings in rotation order.
    settings: List[str] = field(default_factory=lambda: list(TOMOGRAPHY_SETTINGS))

    # Worker processes for the simulator.
    workers: int = 1

    # Trial rate for the rate projection; 0 uses the timing's effective rate.
    trials_per_second: float = 0.0

    timing: ProtocolTiming = field(default_factory=ProtocolTiming)
    noise: NoiseParams = field(default_factory=NoiseParams)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


def parse_state(label: str) -> PolarizationState:
    """
    Parse an input label: a fiducial tag or 'theta:phi' in radians.

    Raises:
      ConfigError: If the label is neither.
    """
    label = label.strip()
    if label in FIDUCIALS:
        return fiducial(label)
    parts = label.split(":")
    try:
        values = [float(part) for part in parts]
    except ValueError as error:
        raise ConfigError(f"Cannot parse input state '{label}'") from error
    if len(values) not in (1, 2):
        raise ConfigError(f"Input state '{label}' must be a tag or 'theta:phi'")
    theta = values[0]
    phi = values[1] if len(values) == 2 else 0.0
    if not 0 <= theta <= math.pi:
        raise ConfigError(f"Input theta {theta} outside [0, pi]")
    return PolarizationState(theta=theta, phi=phi % (2 * math.pi))


def theta_grid(points: int, phi: float) -> List[Tuple[str, PolarizationState]]:
    """
    Evenly spaced zenith angles over one period of the projection curves.
    """
    thetas = np.arange(points) * math.pi / points
    return [
        (f"{theta:.6g}:{phi:.6g}", PolarizationState(theta=float(theta), phi=phi % (2 * math.pi)))
        for theta in thetas
    ]


@dataclass(frozen=True)
class ExperimentPlan:
    """
    A validated experiment, ready to simulate.
    """

    mode: str
    seed: int
    trials: int
    heralded_only: bool
    labels: Tuple[str, ...]
    states: Tuple[PolarizationState, ...]
    settings: Tuple[str, ...]
    noise: NoiseParams
    timing: ProtocolTiming
    analysis: AnalysisConfig
    output: OutputConfig
    workers: int = 1
    trials_per_second: float = 0.0

    @staticmethod
    def from_config(config: DictConfig) -> "ExperimentPlan":
        """
        Validate a configuration and resolve it into a plan.

        Raises:
          ConfigError: On any invalid setting.
        """
        if OmegaConf.is_missing(config, "seed"):
            raise ConfigError("A seed is mandatory: set 'seed' or pass --seed")
        mode = config.mode
        if mode not in MODES:
            raise ConfigError(f"Unknown mode '{mode}', expected one of {list(MODES)}")
        if config.seed < 0:
            raise ConfigError(f"Seed {config.seed} must be non-negative")
        if mode in SIMULATION_MODES and config.trials <= 0:
            raise ConfigError(f"trials must be positive for mode {mode}, got {config.trials}")
        if config.workers < 1:
            raise ConfigError(f"workers must be at least 1, got {config.workers}")
        if config.output.format not in FORMATS:
            raise ConfigError(f"Unknown format '{config.output.format}', expected {list(FORMATS)}")

        if mode == "theta-sweep":
            if config.theta_points < MIN_THETA_POINTS:
                raise ConfigError(
                    f"A theta sweep needs at least {MIN_THETA_POINTS} points, got {config.theta_points}"
                )
            grid = theta_grid(config.theta_points, config.phi)
            labels = tuple(label for label, _ in grid)
            states = tuple(state for _, state in grid)
        else:
            labels = tuple(config.inputs)
            states = tuple(parse_state(label) for label in labels)
        if mode in SIMULATION_MODES and not states:
            raise ConfigError(f"Mode {mode} needs at least one input state")

        settings = tuple(config.settings)
        for setting in settings:
            if setting != BALANCED and setting not in BASES:
                raise ConfigError(f"Unknown analyzer setting '{setting}'")

        noise = OmegaConf.to_object(config.noise)
        timing = OmegaConf.to_object(config.timing)
        noise.validate()
        timing.validate()
        analysis = OmegaConf.to_object(config.analysis)
        if analysis.background_ratio <= 0:
            raise ConfigError("analysis.background_ratio must be positive")

        return ExperimentPlan(
            mode=mode,
            seed=int(config.seed),
            trials=int(config.trials),
            heralded_only=bool(config.heralded_only),
            labels=labels,
            states=states,
            settings=settings,
            noise=noise,
            timing=timing,
            analysis=analysis,
            output=OmegaConf.to_object(config.output),
            workers=int(config.workers),
            trials_per_second=float(config.trials_per_second),
        )

    def sequence_plan(
        self,
        settings: Optional[Tuple[str, ...]] = None,
        trial_offset: int = 0,
    ) -> SequencePlan:
        """
        Simulator plan over every input of this experiment.
        """
        return SequencePlan(
            inputs=self.states,
            settings=self.settings if settings is None else settings,
            trials=self.trials,
            seed=self.seed,
            noise=self.noise,
            timing=self.timing,
            heralded_only=self.heralded_only,
            trial_offset=trial_offset,
            workers=self.workers,
            progress=self.output.progress,
        )


@dataclass
class ExperimentOutputs:
    """
    Tables and summary produced by an experiment.
    """

    # Table name -> rows, written as <name>.csv or <name>.json.
    tables: Dict[str, List[Dict[str, Any]]] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)
    records: Optional[ClickTable] = None
    background_records: Optional[ClickTable] = None


class Experiment:
    """
    Superclass for all experiment modes.
    """

    command: str = ""

    def __init__(self, plan: ExperimentPlan) -> None:
        self.plan = plan

    def run(self) -> ExperimentOutputs:
        """
        Simulate and analyse.
        """
        raise NotImplementedError("Experiment subclass must implement run()")


def resolve_config_path(config_file: Optional[str], mode: Optional[str]) -> str:
    """
    Locate a configuration file: an existing path, or a name under config/.

    Raises:
      ConfigError: If no file is found.
    """
    if config_file is None:
        if mode is None:
            raise ConfigError("A configuration file is required: pass --config")
        config_file = f"{mode}.yaml"
    path = config_file if os.path.exists(config_file) else get_default_config_path(config_file)
    if not os.path.exists(path):
        raise ConfigError(f"Configuration file {config_file} does not exist")
    return path


def _line_of(path: str, full_key: Optional[str]) -> Optional[int]:
    """
    First line of a YAML file defining the last component of a dotted key.
    """
    if not full_key:
        return None
    leaf = str(full_key).split(".")[-1]
    pattern = re.compile(rf"^\s*{re.escape(leaf)}\s*:")
    with open(path) as handle:
        for number, line in enumerate(handle, start=1):
            if pattern.match(line):
                return number
    return None


def load_yaml(path: str) -> DictConfig:
    """
    Load a YAML file, reporting syntax errors as file:line.

    Raises:
      ConfigError: If the file cannot be parsed.
    """
    try:
        loaded = OmegaConf.load(path)
    except yaml.YAMLError as error:
        mark = getattr(error, "problem_mark", None)
        location = f"{path}:{mark.line + 1}" if mark is not None else path
        problem = getattr(error, "problem", None) or str(error)
        raise ConfigError(f"{location}: {problem}") from error
    if not isinstance(loaded, DictConfig):
        raise ConfigError(f"{path}:1: expected a mapping at the top level")
    return loaded


def load_config(
    config_file: Optional[str],
    mode: Optional[str],
    config_updates: List[str],
    overrides: Dict[str, Any],
) -> DictConfig:
    """
    Build the configuration from defaults, YAML, dotlist and flags.

    Args:
      config_file: Configuration file name or path; defaults to '<mode>.yaml'.
      mode: Mode forced by the command, if any.
      config_updates: Dotlist formatted updates to the YAML config.
      overrides: Command-line flag values; None values are ignored.

    Returns:
      The merged configuration.

    Raises:
      ConfigError: On unreadable files, unknown keys or mistyped values.
    """
    path = resolve_config_path(config_file, mode)
    config = OmegaConf.structured(ExperimentConfig)
    try:
        config.merge_with(load_yaml(path))
    except OmegaConfBaseException as error:
        line = _line_of(path, getattr(error, "full_key", None))
        location = f"{path}:{line}" if line is not None else path
        raise ConfigError(f"{location}: {error.msg if hasattr(error, 'msg') else error}") from error
    try:
        config.merge_with_dotlist(list(config_updates))
        config.merge_with(remove_none_values_from_dict(overrides))
    except OmegaConfBaseException as error:
        raise ConfigError(f"Invalid override: {error}") from error
    return config


def save_config(config: DictConfig, out: str) -> None:
    """
    Save the resolved configuration, or check it against a saved one.

    A directory that already holds a different configuration is refused,
    so results in one directory always come from one configuration.

    Args:
      config: The resolved configuration.
      out: Output directory.
    """
    config_path = os.path.join(out, CONFIG_YAML)
    if os.path.exists(config_path):
        old_config = OmegaConf.structured(ExperimentConfig)
        old_config.merge_with(OmegaConf.load(config_path))
        differences = "\n".join(
            difflib.context_diff(
                OmegaConf.to_yaml(old_config).split("\n"),
                OmegaConf.to_yaml(config).split("\n"),
                fromfile="stored config",
                tofile="new config",
            )
        )
        die_if(
            bool(differences),
            "Found difference between saved and expected config:\n" + differences,
        )
        return

    print("Full Experiment Configuration:")
    print("==============================")
    print(OmegaConf.to_yaml(config, resolve=True))
    print("==============================")

    os.makedirs(out, exist_ok=True)
    OmegaConf.save(config, config_path, resolve=True)
    print(f"Config saved to {config_path}.", flush=True)


def write_outputs(plan: ExperimentPlan, outputs: ExperimentOutputs) -> None:
    """
    Write tables, the JSON summary and optional records into the output directory.
    """
    out = plan.output.out
    for name, rows in outputs.tables.items():
        if plan.output.format == "csv":
            columns = list(rows[0].keys()) if rows else None
            filename = os.path.join(out, f"{name}.csv")
            write_table(filename, rows, columns)
        else:
            filename = os.path.join(out, f"{name}.json")
            write_json(filename, {"rows": rows})
        print(f"Wrote {len(rows)} rows to {filename}.", flush=True)

    summary_path = os.path.join(out, SUMMARY_JSON)
    write_json(summary_path, {"mode": plan.mode, "seed": plan.seed, **outputs.summary})
    print(f"Summary saved to {summary_path}.", flush=True)

    if outputs.records is not None:
        records_path = os.path.join(out, RECORDS_CSV)
        write_records(records_path, outputs.records)
        print(f"Records saved to {records_path}.", flush=True)
    if outputs.background_records is not None:
        background_path = os.path.join(out, BACKGROUND_CSV)
        write_records(background_path, outputs.background_records)
        print(f"Background records saved to {background_path}.", flush=True)


def cli_run(
    experiments: Dict[str, Type[Experiment]],
    mode: Optional[str],
    config_file: Optional[str],
    config_updates: List[str],
    overrides: Dict[str, Any],
) -> None:
    """
    Run an experiment from the command line.

    Args:
      experiments: Experiment class per mode.
      mode: Mode forced by the command; None reads it from the config.
      config_file: Configuration file name or path.
      config_updates: Dotlist formatted updates to the config.
      overrides: Values of the command-line flags.
    """
    try:
        config = load_config(config_file, mode, config_updates, {**overrides, "mode": mode})
        plan = ExperimentPlan.from_config(config)
    except (ConfigError, NonPhysicalStateError) as error:
        die_if(True, str(error), EXIT_CONFIG)
        return

    save_config(config, plan.output.out)
    print(f"Running {plan.mode} on {len(plan.states)} input states into {plan.output.out}.", flush=True)

    experiment = experiments[plan.mode](plan)
    try:
        outputs = experiment.run()
    except (
        ConfigError,
        NonPhysicalStateError,
        InsufficientStatisticsError,
        ConvergenceError,
    ) as error:
        die_if(True, f"{plan.mode} failed: {error}", exit_code_for(error))
        return
    write_outputs(plan, outputs)


def create_mode_command(
    experiment: Type[Experiment], experiments: Dict[str, Type[Experiment]]
) -> click.Command:
    """
    Create the command running one experiment mode.
    """
    name: str = experiment.command
    if not name:
        raise ValueError(f"Missing 'command' attribute on experiment '{experiment}'")

    @click.command(name, help=f"Run the {name} experiment.")
    @click.option("--config", "config_file", default=None, help="Configuration file name or path")
    @click.option("--seed", type=int, default=None, help="Experiment seed")
    @click.option("--out", default=None, help="Output directory")
    @click.option("--trials", type=int, default=None, help="Trials per input state")
    @click.option("--format", "table_format", type=click.Choice(FORMATS), default=None, help="Table format")
    @click.option("--workers", type=int, default=None, help="Simulator worker processes")
    @click.argument("config_updates", nargs=-1)
    def command(
        config_file: Optional[str],
        seed: Optional[int],
        out: Optional[str],
        trials: Optional[int],
        table_format: Optional[str],
        workers: Optional[int],
        config_updates: List[str],
    ) -> None:
        overrides = {
            "seed": seed,
            "trials": trials,
            "workers": workers,
            "output": {"out": out, "format": table_format},
        }
        cli_run(experiments, name, config_file, config_updates, overrides)

    return command


def create_run_command(experiments: Dict[str, Type[Experiment]]) -> click.Command:
    """
    Create the command running whichever mode the config file names.
    """

    @click.command("run")
    @click.option("--config", "config_file", required=True, help="Configuration file name or path")
    @click.option("--seed", type=int, default=None, help="Experiment seed")
    @click.option("--out", default=None, help="Output directory")
    @click.option("--trials", type=int, default=None, help="Trials per input state")
    @click.option("--format", "table_format", type=click.Choice(FORMATS), default=None, help="Table format")
    @click.option("--workers", type=int, default=None, help="Simulator worker processes")
    @click.argument("config_updates", nargs=-1)
    def run(
        config_file: str,
        seed: Optional[int],
        out: Optional[str],
        trials: Optional[int],
        table_format: Optional[str],
        workers: Optional[int],
        config_updates: List[str],
    ) -> None:
        """
        Run the experiment described by a configuration file.
        """
        overrides = {
            "seed": seed,
            "trials": trials,
            "workers": workers,
            "output": {"out": out, "format": table_format},
        }
        cli_run(experiments, None, config_file, config_updates, overrides)

    return run
