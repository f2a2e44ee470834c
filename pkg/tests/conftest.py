"""
Shared fixtures. Puts the repository root on the import path.
"""
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

import dataclasses

import pytest

from simulation.protocol import NoiseParams, ProtocolTiming

# Background weight about 0.12, six-fiducial mean fidelity about 0.94.
CALIBRATED_MU_BG: float = 0.0681818
CALIBRATED_T2: float = 5e-6

# Two-photon weight reproducing g2 = 0.24 at the background above.
CALIBRATED_P2: float = 0.0105


@pytest.fixture
def timing() -> ProtocolTiming:
    return ProtocolTiming()


@pytest.fixture
def noiseless() -> NoiseParams:
    """
    No background, no darks and a coherence time far beyond the storage time.
    """
    return NoiseParams(mu_bg=0.0, dark_rate=0.0, T2=1e6)


@pytest.fixture
def calibrated() -> NoiseParams:
    return NoiseParams(
        mu_bg=CALIBRATED_MU_BG, T2=CALIBRATED_T2, p2=CALIBRATED_P2, decoherence="gaussian"
    )


@pytest.fixture
def poissonian(noiseless: NoiseParams) -> NoiseParams:
    return dataclasses.replace(noiseless, emission="poisson", emission_mean=1.0)
