"""
Counter-based random substreams keyed by (seed, family, trial index).

Trials are grouped into fixed blocks. Each block owns a Philox generator
keyed by a SeedSequence spawned from (seed, family, block), and every trial
reads a fixed row of uniforms from its block. The uniforms of a trial are
therefore a pure function of (seed, family, trial index): the result does
not depend on how trials are chunked, ordered, or spread over workers.
"""
from typing import Dict

import numpy as np

# Trials per generator block.
BLOCK_TRIALS: int = 4096

# Uniform draws consumed by one trial, by purpose.
U_HERALD: int = 0
U_SIGNAL: int = 1
U_DOUBLE: int = 2
U_SIGNAL_PORT: int = 3
U_BACKGROUND: int = 4
U_BACKGROUND_PORT: int = 5
U_DARK_D1: int = 6
U_DARK_D2: int = 7
U_DARK_D3: int = 8
DRAWS_PER_TRIAL: int = 9

# Stream families.
SIGNAL_FAMILY: int = 0
BACKGROUND_FAMILY: int = 1


class TrialStreams:
    """
    Uniform draws for any range of trial indices.
    """

    def __init__(self, seed: int, family: int = SIGNAL_FAMILY) -> None:
        """
        Args:
          seed: Experiment seed. Must be non-negative.
          family: Which independent stream family to read.
        """
        if seed < 0:
            raise ValueError(f"Seed {seed} must be non-negative")
        self.seed = seed
        self.family = family
        self._cache: Dict[int, np.ndarray] = {}

    def _block(self, block: int) -> np.ndarray:
        """
        Uniforms of one block, shape [BLOCK_TRIALS, DRAWS_PER_TRIAL].
        """
        if block not in self._cache:
            sequence = np.random.SeedSequence(
                entropy=self.seed, spawn_key=(self.family, block)
            )
            generator = np.random.Generator(np.random.Philox(sequence))
            # Keep at most one block around; ranges are read in order.
            self._cache = {
                block: generator.random((BLOCK_TRIALS, DRAWS_PER_TRIAL))
            }
        return self._cache[block]

    def uniforms(self, start: int, stop: int) -> np.ndarray:
        """
        Uniforms of trials [start, stop), shape [stop - start, DRAWS_PER_TRIAL].
        """
        if start < 0 or stop < start:
            raise ValueError(f"Invalid trial range [{start}, {stop})")
        parts = []
        index = start
        while index < stop:
            block, offset = divmod(index, BLOCK_TRIALS)
            take = min(stop - index, BLOCK_TRIALS - offset)
            parts.append(self._block(block)[offset : offset + take])
            index += take
        if not parts:
            return np.zeros((0, DRAWS_PER_TRIAL))
        return np.concatenate(parts, axis=0)

    def for_trial(self, trial_index: int) -> np.ndarray:
        """
        The uniforms of a single trial.
        """
        return self.uniforms(trial_index, trial_index + 1)[0]
