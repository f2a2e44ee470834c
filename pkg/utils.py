"""
Memory toolkit utilities: error types, exit handling and output writers.
"""
import json
import os
import sys
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from omegaconf import OmegaConf

# Non-zero exit codes of the command line; success exits with 0.
EXIT_CONFIG: int = 2
EXIT_INSUFFICIENT_STATISTICS: int = 3
EXIT_NON_CONVERGENCE: int = 4

# Significant digits used in CSV tables. JSON keeps full precision.
CSV_FLOAT_FORMAT: str = "%.6g"


class ConfigError(ValueError):
    """
    An experiment plan or configuration file is invalid.
    """


class NonPhysicalStateError(ValueError):
    """
    A density matrix or Stokes vector violates physicality.
    """


class InsufficientStatisticsError(ValueError):
    """
    Not enough counts to compute the requested estimate.
    """


class ConvergenceError(RuntimeError):
    """
    An iterative estimator stopped before converging.

    Attributes:
      best: The best iterate found before stopping.
    """

    def __init__(self, message: str, best: Any = None) -> None:
        super().__init__(message)
        self.best = best


def exit_code_for(error: Exception) -> int:
    """
    Map a library exception onto the command-line exit code.

    Args:
      error: The exception raised by the library.

    Returns:
      The process exit code.
    """
    if isinstance(error, InsufficientStatisticsError):
        return EXIT_INSUFFICIENT_STATISTICS
    if isinstance(error, ConvergenceError):
        return EXIT_NON_CONVERGENCE
    return EXIT_CONFIG


def die_if(condition: bool, message: str, code: int = EXIT_CONFIG) -> None:
    """
    Die if the condition is met.

    Args:
      condition: The condition to check.
      message: Message to print upon dying.
      code: Exit code to use.
    """
    if condition:
        print(f"ERROR: {message}", file=sys.stderr, flush=True)
        hard_exit(code)


def hard_exit(code: int = EXIT_CONFIG) -> None:
    """
    Flush the console and leave with the given exit code.

    Args:
      code: The exit code. Defaults to a configuration failure.
    """
    sys.stdout.flush()
    sys.stderr.flush()
    sys.exit(code)


def remove_none_values_from_dict(config_dict):
    """
    Iterate over input configuration and remove None-value params

    Returns:
        dictionary of valid configuration params
    """
    if isinstance(config_dict, dict):
        config = {}
        for k in config_dict:
            if config_dict[k] is not None:
                config[k] = remove_none_values_from_dict(config_dict[k])
        return OmegaConf.create(config)

    return config_dict


def to_builtin(item: Any) -> Any:
    """
    Recursively convert numpy scalars and arrays into JSON-friendly values.

    Args:
      item: A value, list, or dict possibly holding numpy types.

    Returns:
      A structure identical to the input with builtin Python types only.
    """
    if isinstance(item, dict):
        return {str(key): to_builtin(value) for key, value in item.items()}
    if isinstance(item, (list, tuple)):
        return [to_builtin(value) for value in item]
    if isinstance(item, np.ndarray):
        return to_builtin(item.tolist())
    if isinstance(item, np.bool_):
        return bool(item)
    if isinstance(item, np.integer):
        return int(item)
    if isinstance(item, np.floating):
        return float(item)
    if isinstance(item, complex):
        return [item.real, item.imag]
    return item


def write_json(filename: str, payload: Dict[str, Any]) -> None:
    """
    Write a JSON document with full float precision and sorted keys.

    Args:
      filename: Output path.
      payload: The document.
    """
    directory = os.path.dirname(filename)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(filename, "w") as handle:
        json.dump(to_builtin(payload), handle, indent=2, sort_keys=True)
        handle.write("\n")


def write_table(
    filename: str, rows: List[Dict[str, Any]], columns: Optional[List[str]] = None
) -> None:
    """
    Write a table of rows as CSV with six significant digits.

    Args:
      filename: Output path. Must end in .csv.
      rows: One dict per row.
      columns: Column order. Defaults to the keys of the first row.

    Raises:
      ValueError: If filename has incorrect extension.
    """
    if not filename.endswith(".csv"):
        raise ValueError(f"Filename {filename} must end with .csv")

    directory = os.path.dirname(filename)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame = pd.DataFrame(rows, columns=columns)
    frame.to_csv(filename, index=False, float_format=CSV_FLOAT_FORMAT)
