"""
Record files: simulated trial streams and standalone count tables.
"""
import os
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd

from polarization import BASES
from simulation.engine import ClickTable
from tomography import BasisCounts
from utils import ConfigError

# Columns of a trial record file, one line per trial.
RECORD_COLUMNS: List[str] = ["trial", "input", "heralded", "swapped", "setting", "d1", "d2", "d3"]

# Columns of a standalone count table.
COUNT_COLUMNS: List[str] = ["basis", "port", "counts", "background"]

# Optional column holding signal windows per background window.
SCALE_COLUMN: str = "background_scale"


def write_records(filename: str, table: ClickTable) -> None:
    """
    Write a click table as a CSV record file.

    Args:
      filename: Output path. Must end in .csv.
      table: The trials to write.

    Raises:
      ValueError: If filename has incorrect extension.
    """
    if not filename.endswith(".csv"):
        raise ValueError(f"Filename {filename} must end with .csv")
    directory = os.path.dirname(filename)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame = pd.DataFrame(
        {
            "trial": table.trial,
            "input": table.input_index,
            "heralded": table.heralded.astype(np.int8),
            "swapped": table.swapped.astype(np.int8),
            "setting": table.setting_names(),
            "d1": table.d1,
            "d2": table.d2,
            "d3": table.d3,
        },
        columns=RECORD_COLUMNS,
    )
    frame.to_csv(filename, index=False)


def read_records(filename: str) -> ClickTable:
    """
    Load a record file written by `write_records`.

    Raises:
      ConfigError: If the file is missing or lacks record columns.
    """
    if not os.path.exists(filename):
        raise ConfigError(f"Record file {filename} does not exist")
    frame = pd.read_csv(filename, dtype={"setting": str})
    missing = [column for column in RECORD_COLUMNS if column not in frame.columns]
    if missing:
        raise ConfigError(f"Record file {filename} is missing columns {missing}")

    settings = tuple(dict.fromkeys(frame["setting"]))
    codes = {setting: code for code, setting in enumerate(settings)}
    return ClickTable(
        trial=frame["trial"].to_numpy(dtype=np.int64),
        input_index=frame["input"].to_numpy(dtype=np.int32),
        heralded=frame["heralded"].to_numpy().astype(bool),
        swapped=frame["swapped"].to_numpy().astype(bool),
        setting=np.array([codes[s] for s in frame["setting"]], dtype=np.int8),
        d1=frame["d1"].to_numpy(dtype=np.int32),
        d2=frame["d2"].to_numpy(dtype=np.int32),
        d3=frame["d3"].to_numpy(dtype=np.int32),
        settings=settings,
    )


def _port_sign(basis: str, port: str) -> int:
    plus, minus, _ = BASES[basis]
    if port in ("plus", "+", plus):
        return 1
    if port in ("minus", "-", minus):
        return -1
    raise ConfigError(f"Unknown port '{port}' for basis {basis}, expected {plus} or {minus}")


def read_count_table(filename: str) -> Tuple[BasisCounts, ...]:
    """
    Load three-basis counts from a CSV with columns basis, port, counts, background.

    Ports are named 'plus'/'minus' or by their fiducial tag. A
    background_scale column, when present, gives the signal windows per
    background window of each basis; it defaults to 1.

    Raises:
      ConfigError: On a missing file, missing columns or unknown basis/port.
    """
    if not os.path.exists(filename):
        raise ConfigError(f"Count table {filename} does not exist")
    frame = pd.read_csv(filename, dtype={"basis": str, "port": str})
    missing = [column for column in COUNT_COLUMNS if column not in frame.columns]
    if missing:
        raise ConfigError(f"Count table {filename} is missing columns {missing}")

    entries: Dict[str, Dict[str, float]] = {}
    for row in frame.itertuples(index=False):
        basis = row.basis.strip()
        if basis not in BASES:
            raise ConfigError(f"Unknown basis '{basis}' in {filename}")
        entry = entries.setdefault(
            basis,
            {"n_plus": 0.0, "n_minus": 0.0, "background_plus": 0.0, "background_minus": 0.0},
        )
        side = "plus" if _port_sign(basis, row.port.strip()) > 0 else "minus"
        entry[f"n_{side}"] += float(row.counts)
        entry[f"background_{side}"] += float(row.background)
        if SCALE_COLUMN in frame.columns:
            entry["background_scale"] = float(getattr(row, SCALE_COLUMN))
    return tuple(BasisCounts(basis=basis, **values) for basis, values in entries.items())
