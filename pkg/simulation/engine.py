"""
Click-level Monte Carlo of the pump, write, store and read sequence.
"""
import dataclasses
import multiprocessing
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from tqdm import tqdm

from polarization import BALANCED, BASES, DensityMatrix, PolarizationState, fiducial, port_probability
from simulation import streams as streams_lib
from simulation.protocol import (
    MagnonRecord,
    NoiseParams,
    ProtocolTiming,
    background_density,
    herald_probability,
    read_map,
    store,
    write_map,
)
from simulation.streams import TrialStreams
from utils import ConfigError

# Detector names. D1 heralds, D2 and D3 are the plus and minus analyzer ports.
DETECTORS: Tuple[str, str, str] = ("D1_herald", "D2", "D3")

# Trials handled by one worker task; a multiple of the stream block size.
CHUNK_TRIALS: int = 16 * streams_lib.BLOCK_TRIALS

# Tail probability below which Poisson tables are truncated.
POISSON_TAIL: float = 1e-15

# Count arrays of a ClickSummary.
SUMMARY_FIELDS: Tuple[str, ...] = (
    "windows",
    "heralds",
    "counted",
    "plus",
    "minus",
    "n12",
    "n13",
    "n123",
)


@dataclass(frozen=True)
class ClickRecord:
    """
    Photons detected by one detector in one trial window.
    """

    trial_index: int
    detector: str
    count: int


@dataclass(frozen=True)
class TrialRecord:
    """
    Everything recorded about one trial.
    """

    trial_index: int
    heralded: bool
    ensembles_swapped: bool
    clicks: Tuple[ClickRecord, ...]
    measurement_setting: str
    read_fired: bool = True
    input_index: int = 0

    def count(self, detector: str) -> int:
        """
        Photon count of a detector, zero when it did not click.
        """
        return sum(click.count for click in self.clicks if click.detector == detector)


@dataclass(frozen=True)
class SequencePlan:
    """
    What to simulate: inputs, analyzer rotation, trial counts and seed.
    """

    inputs: Tuple[PolarizationState, ...]
    settings: Tuple[str, ...]

    # Trials per input state.
    trials: int
    seed: int
    noise: NoiseParams = field(default_factory=NoiseParams)
    timing: ProtocolTiming = field(default_factory=ProtocolTiming)

    # Sample conditioned on the herald instead of sampling it.
    heralded_only: bool = False

    # False simulates background-only windows (no write beam).
    signal: bool = True

    # Whether the first trial has the ensembles interchanged.
    start_swapped: bool = False

    # Global index of the first trial, and which stream family to read.
    trial_offset: int = 0
    family: int = streams_lib.SIGNAL_FAMILY

    workers: int = 1
    progress: bool = False

    def trial_range(self, input_index: int) -> Tuple[int, int]:
        start = self.trial_offset + input_index * self.trials
        return start, start + self.trials


@dataclass
class ClickSummary:
    """
    Click totals per input state and analyzer setting.

    Every array has shape [inputs, settings]. `counted` windows are the ones
    entering the statistics: windows with a D1 click in a signal run, every
    window in a background run.
    """

    settings: Tuple[str, ...]
    windows: np.ndarray
    heralds: np.ndarray
    counted: np.ndarray

    # Photons at the plus (D2) and minus (D3) ports, over counted windows.
    plus: np.ndarray
    minus: np.ndarray

    # Counted windows with a D2 click, a D3 click, and both.
    n12: np.ndarray
    n13: np.ndarray
    n123: np.ndarray

    @staticmethod
    def zeros(n_inputs: int, settings: Sequence[str]) -> "ClickSummary":
        shape = (n_inputs, len(settings))
        return ClickSummary(
            settings=tuple(settings),
            **{name: np.zeros(shape, dtype=np.int64) for name in SUMMARY_FIELDS},
        )

    def __add__(self, other: "ClickSummary") -> "ClickSummary":
        if self.settings != other.settings:
            raise ValueError(f"Cannot add summaries over {self.settings} and {other.settings}")
        return ClickSummary(
            settings=self.settings,
            **{name: getattr(self, name) + getattr(other, name) for name in SUMMARY_FIELDS},
        )

    @property
    def n_inputs(self) -> int:
        return self.windows.shape[0]

    def setting_index(self, setting: str) -> int:
        """
        Column of a setting.

        Raises:
          KeyError: If the setting was not measured.
        """
        if setting not in self.settings:
            raise KeyError(f"Setting '{setting}' not in {self.settings}")
        return self.settings.index(setting)


@dataclass
class ClickTable:
    """
    Column store of trial records, used for large runs.
    """

    trial: np.ndarray
    input_index: np.ndarray
    heralded: np.ndarray
    swapped: np.ndarray
    setting: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray
    settings: Tuple[str, ...]
    read_fired: bool = True

    def __len__(self) -> int:
        return len(self.trial)

    @staticmethod
    def empty(settings: Sequence[str]) -> "ClickTable":
        return ClickTable.concat([], settings)

    @staticmethod
    def concat(tables: Sequence["ClickTable"], settings: Sequence[str]) -> "ClickTable":
        """
        Concatenate tables sharing the same settings rotation.
        """
        columns = ("trial", "input_index", "heralded", "swapped", "setting", "d1", "d2", "d3")
        dtypes = (np.int64, np.int32, bool, bool, np.int8, np.int32, np.int32, np.int32)
        if not tables:
            return ClickTable(
                *[np.zeros(0, dtype=dtype) for dtype in dtypes], settings=tuple(settings)
            )
        return ClickTable(
            *[np.concatenate([getattr(t, name) for t in tables]) for name in columns],
            settings=tuple(settings),
            read_fired=all(t.read_fired for t in tables),
        )

    def setting_names(self) -> List[str]:
        return [self.settings[code] for code in self.setting]

    def records(self) -> Iterator[TrialRecord]:
        """
        Expand into per-trial records.
        """
        for row in range(len(self)):
            index = int(self.trial[row])
            counts = (self.d1[row], self.d2[row], self.d3[row])
            clicks = tuple(
                ClickRecord(trial_index=index, detector=name, count=int(count))
                for name, count in zip(DETECTORS, counts)
                if count > 0
            )
            yield TrialRecord(
                trial_index=index,
                heralded=bool(self.heralded[row]),
                ensembles_swapped=bool(self.swapped[row]),
                clicks=clicks,
                measurement_setting=self.settings[self.setting[row]],
                read_fired=self.read_fired,
                input_index=int(self.input_index[row]),
            )

    def summarize(self, n_inputs: Optional[int] = None, conditioned: bool = True) -> ClickSummary:
        """
        Reduce to click totals.

        Args:
          n_inputs: Number of inputs; defaults to the largest input index + 1.
          conditioned: Count only windows with a D1 click.

        Returns:
          The totals per input and setting.
        """
        if n_inputs is None:
            n_inputs = int(self.input_index.max()) + 1 if len(self) else 0
        summary = ClickSummary.zeros(n_inputs, self.settings)
        counted = self.d1 > 0 if conditioned else np.ones(len(self), dtype=bool)
        clicks2 = counted & (self.d2 > 0)
        clicks3 = counted & (self.d3 > 0)
        index = (self.input_index.astype(np.int64), self.setting.astype(np.int64))
        for target, values in (
            (summary.windows, np.ones(len(self), dtype=np.int64)),
            (summary.heralds, self.d1 > 0),
            (summary.counted, counted),
            (summary.plus, np.where(counted, self.d2, 0)),
            (summary.minus, np.where(counted, self.d3, 0)),
            (summary.n12, clicks2),
            (summary.n13, clicks3),
            (summary.n123, clicks2 & clicks3),
        ):
            np.add.at(target, index, values.astype(np.int64))
        return summary

    @staticmethod
    def from_records(records: Sequence[TrialRecord]) -> "ClickTable":
        """
        Build a table from per-trial records.
        """
        settings: List[str] = []
        for record in records:
            if record.measurement_setting not in settings:
                settings.append(record.measurement_setting)
        return ClickTable(
            trial=np.array([r.trial_index for r in records], dtype=np.int64),
            input_index=np.array([r.input_index for r in records], dtype=np.int32),
            heralded=np.array([r.heralded for r in records], dtype=bool),
            swapped=np.array([r.ensembles_swapped for r in records], dtype=bool),
            setting=np.array(
                [settings.index(r.measurement_setting) for r in records], dtype=np.int8
            ),
            d1=np.array([r.count(DETECTORS[0]) for r in records], dtype=np.int32),
            d2=np.array([r.count(DETECTORS[1]) for r in records], dtype=np.int32),
            d3=np.array([r.count(DETECTORS[2]) for r in records], dtype=np.int32),
            settings=tuple(settings),
            read_fired=all(r.read_fired for r in records),
        )


def resolve_setting(setting: str) -> Optional[Tuple[PolarizationState, PolarizationState]]:
    """
    Plus and minus port states of an analyzer setting; None when balanced.

    Raises:
      KeyError: For unknown settings.
    """
    if setting == BALANCED:
        return None
    if setting not in BASES:
        raise KeyError(f"Unknown analyzer setting '{setting}', expected {list(BASES)} or '{BALANCED}'")
    plus, minus, _ = BASES[setting]
    return fiducial(plus), fiducial(minus)


def plus_port_probability(rho: DensityMatrix, setting: str) -> float:
    """
    Probability that a photon in state rho leaves through the plus port.
    """
    ports = resolve_setting(setting)
    if ports is None:
        return 0.5
    return min(max(port_probability(rho, ports[0]), 0.0), 1.0)


def poisson_from_uniform(u: np.ndarray, mean: float) -> np.ndarray:
    """
    Inverse-CDF Poisson sampling from uniforms.
    """
    if mean <= 0:
        return np.zeros(u.shape, dtype=np.int64)
    tail = stats.poisson.isf(POISSON_TAIL, mean)
    if not np.isfinite(tail):
        tail = mean + 40 * np.sqrt(mean) + 40
    k_max = int(tail) + 2
    cdf = stats.poisson.cdf(np.arange(k_max + 1), mean)
    return np.minimum(np.searchsorted(cdf, u, side="right"), k_max).astype(np.int64)


def binomial_from_uniform(u: np.ndarray, n: np.ndarray, p: np.ndarray) -> np.ndarray:
    """
    Split n photons with success probability p, one uniform per trial.
    """
    out = np.zeros(n.shape, dtype=np.int64)
    single = n == 1
    out[single] = u[single] < p[single]
    multi = n > 1
    if np.any(multi):
        draws = stats.binom.ppf(u[multi], n[multi], p[multi])
        out[multi] = np.clip(draws, 0, n[multi]).astype(np.int64)
    return out


def _port_tables(
    state: Optional[PolarizationState], plan: SequencePlan
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Plus-port probabilities of signal [setting] and background [setting, swapped].
    """
    noise, timing = plan.noise, plan.timing
    signal = np.full(len(plan.settings), 0.5)
    if state is not None:
        magnon = store(write_map(state, timing), noise, timing)
        rho = DensityMatrix(_signal_only(magnon, noise, timing))
        signal = np.array([plus_port_probability(rho, s) for s in plan.settings])

    background = np.zeros((len(plan.settings), 2))
    for swapped in (False, True):
        rho = DensityMatrix(background_density(noise, timing, swapped))
        background[:, int(swapped)] = [plus_port_probability(rho, s) for s in plan.settings]
    return signal, background


def _signal_only(magnon: MagnonRecord, noise: NoiseParams, timing: ProtocolTiming) -> np.ndarray:
    """
    Polarization of retrieved photons, without background admixture.
    """
    quiet = dataclasses.replace(noise, mu_bg=0.0, pump_scatter=0.0)
    return read_map(magnon, quiet, timing).rho.matrix


def sample_trials(
    plan: SequencePlan,
    state: Optional[PolarizationState],
    input_index: int,
    trial_index: np.ndarray,
    u: np.ndarray,
) -> ClickTable:
    """
    Vectorised kernel: sample the clicks of a set of trials.

    Args:
      plan: The sequence plan.
      state: Input polarization, None for background-only windows.
      input_index: Position of the input in the plan.
      trial_index: Global trial indices, shape [n].
      u: Uniforms of these trials, shape [n, DRAWS_PER_TRIAL].

    Returns:
      The sampled clicks.
    """
    noise, timing = plan.noise, plan.timing
    n = len(trial_index)
    swapped = ((trial_index % 2) == 1) ^ plan.start_swapped
    codes = (trial_index % len(plan.settings)).astype(np.int8)
    signal_plus, background_plus = _port_tables(state if plan.signal else None, plan)

    if not plan.signal:
        heralded = np.zeros(n, dtype=bool)
    elif plan.heralded_only:
        heralded = np.ones(n, dtype=bool)
    else:
        heralded = u[:, streams_lib.U_HERALD] < herald_probability(noise)

    read_fired = timing.read_fires()
    detected = noise.epsilon_retrieval * noise.q
    if noise.emission == "poisson":
        photons = poisson_from_uniform(u[:, streams_lib.U_SIGNAL], noise.emission_mean * detected)
    else:
        photons = (u[:, streams_lib.U_SIGNAL] < detected).astype(np.int64)
        photons += u[:, streams_lib.U_DOUBLE] < noise.p2 * detected
    photons = np.where(heralded & read_fired, photons, 0)
    signal_to_plus = binomial_from_uniform(
        u[:, streams_lib.U_SIGNAL_PORT], photons, signal_plus[codes]
    )

    background = poisson_from_uniform(
        u[:, streams_lib.U_BACKGROUND], noise.effective_background() * noise.q
    )
    if not read_fired:
        background = np.zeros_like(background)
    background_to_plus = binomial_from_uniform(
        u[:, streams_lib.U_BACKGROUND_PORT],
        background,
        background_plus[codes, swapped.astype(np.int64)],
    )

    dark = [
        poisson_from_uniform(u[:, column], noise.dark_rate)
        for column in (streams_lib.U_DARK_D1, streams_lib.U_DARK_D2, streams_lib.U_DARK_D3)
    ]
    d2 = signal_to_plus + background_to_plus + dark[1]
    d3 = (photons - signal_to_plus) + (background - background_to_plus) + dark[2]
    if not read_fired:
        d2 = np.zeros_like(d2)
        d3 = np.zeros_like(d3)

    return ClickTable(
        trial=trial_index.astype(np.int64),
        input_index=np.full(n, input_index, dtype=np.int32),
        heralded=heralded,
        swapped=swapped,
        setting=codes,
        d1=(heralded.astype(np.int64) + dark[0]).astype(np.int32),
        d2=d2.astype(np.int32),
        d3=d3.astype(np.int32),
        settings=plan.settings,
        read_fired=read_fired,
    )


def run_trial(
    state: PolarizationState,
    setting: str,
    noise: NoiseParams,
    timing: ProtocolTiming,
    rng_stream: TrialStreams,
    trial_index: int = 0,
    heralded_only: bool = False,
    start_swapped: bool = False,
) -> TrialRecord:
    """
    Simulate a single trial.

    Args:
      state: Input polarization.
      setting: Analyzer basis tag, or 'balanced'.
      noise: Noise parameters.
      timing: Protocol timing.
      rng_stream: Substreams of the experiment seed.
      trial_index: Global index of the trial; selects its substream.
      heralded_only: Condition on the herald.
      start_swapped: Whether trial 0 has the ensembles interchanged.

    Returns:
      The trial record.
    """
    plan = SequencePlan(
        inputs=(state,),
        settings=(setting,),
        trials=1,
        seed=rng_stream.seed,
        noise=noise,
        timing=timing,
        heralded_only=heralded_only,
        start_swapped=start_swapped,
        family=rng_stream.family,
    )
    indices = np.array([trial_index], dtype=np.int64)
    table = sample_trials(plan, state, 0, indices, rng_stream.uniforms(trial_index, trial_index + 1))
    return next(table.records())


def _chunks(plan: SequencePlan) -> List[Tuple[int, int, int]]:
    """
    (input index, start, stop) work items aligned to stream blocks.
    """
    items = []
    for input_index in range(len(plan.inputs)):
        start, stop = plan.trial_range(input_index)
        boundary = start
        while boundary < stop:
            next_boundary = min(stop, (boundary // CHUNK_TRIALS + 1) * CHUNK_TRIALS)
            items.append((input_index, boundary, next_boundary))
            boundary = next_boundary
    return items


def _simulate_chunk(args: Tuple[SequencePlan, int, int, int]) -> ClickTable:
    plan, input_index, start, stop = args
    streams = TrialStreams(plan.seed, plan.family)
    state = plan.inputs[input_index] if plan.signal else None
    indices = np.arange(start, stop, dtype=np.int64)
    return sample_trials(plan, state, input_index, indices, streams.uniforms(start, stop))


def _summarize_chunk(args: Tuple[SequencePlan, int, int, int]) -> "ClickSummary":
    plan = args[0]
    return _simulate_chunk(args).summarize(len(plan.inputs), conditioned=plan.signal)


def _validate(plan: SequencePlan) -> None:
    plan.noise.validate()
    plan.timing.validate()
    if plan.trials < 0:
        raise ConfigError(f"trials must be non-negative, got {plan.trials}")
    if not plan.settings:
        raise ConfigError("At least one analyzer setting is required")
    for setting in plan.settings:
        try:
            resolve_setting(setting)
        except KeyError as error:
            raise ConfigError(str(error.args[0])) from error


def _run_chunks(plan: SequencePlan, worker: Callable[[Any], Any]) -> List[Any]:
    """
    Apply a chunk worker over the plan, in chunk order.
    """
    items = [(plan, *item) for item in _chunks(plan)]
    description = "trials" if plan.signal else "background"
    if plan.workers > 1 and len(items) > 1:
        with multiprocessing.Pool(processes=plan.workers) as pool:
            iterator = pool.imap(worker, items)
            return list(tqdm(iterator, total=len(items), desc=description, disable=not plan.progress))
    return [worker(item) for item in tqdm(items, desc=description, disable=not plan.progress)]


def simulate(plan: SequencePlan) -> ClickTable:
    """
    Simulate a whole plan into a click table.

    Output is identical for any number of workers.

    Args:
      plan: The sequence plan.

    Returns:
      Click table ordered by input and trial index.

    Raises:
      ConfigError: On invalid noise, timing or analyzer settings.
    """
    _validate(plan)
    return ClickTable.concat(_run_chunks(plan, _simulate_chunk), plan.settings)


def summarize(plan: SequencePlan) -> "ClickSummary":
    """
    Simulate a plan keeping only click totals, in constant memory.

    Args:
      plan: The sequence plan.

    Returns:
      Totals per input and setting. Background runs count every window,
      signal runs count windows with a D1 click.
    """
    _validate(plan)
    total = ClickSummary.zeros(len(plan.inputs), plan.settings)
    for part in _run_chunks(plan, _summarize_chunk):
        total = total + part
    return total


def run_sequence(plan: SequencePlan) -> List[TrialRecord]:
    """
    Simulate a plan into per-trial records.
    """
    return list(simulate(plan).records())


def background_plan(plan: SequencePlan, ratio: float) -> SequencePlan:
    """
    Plan of the independent background acquisition for a signal plan.

    The acquisition is shared by all inputs of the plan.

    Args:
      plan: The signal plan.
      ratio: Background windows per signal window of one input.

    Returns:
      A background-only plan on its own stream family.
    """
    if ratio <= 0:
        raise ConfigError(f"Background ratio {ratio} must be positive")
    return SequencePlan(
        inputs=(PolarizationState(0.0),),
        settings=plan.settings,
        trials=int(round(ratio * plan.trials)),
        seed=plan.seed,
        noise=plan.noise,
        timing=plan.timing,
        signal=False,
        start_swapped=plan.start_swapped,
        family=streams_lib.BACKGROUND_FAMILY,
        workers=plan.workers,
        progress=plan.progress,
    )
