"""
Reconstruction from stored record files and count tables.
"""
import os
from typing import Any, Dict, Optional

import click

from experiments.framework import FORMATS, SUMMARY_JSON, parse_state
from records import read_count_table, read_records
from tomography import (
    counts_from_table,
    fidelity_report,
    reconstruct,
)
from utils import (
    ConfigError,
    ConvergenceError,
    InsufficientStatisticsError,
    NonPhysicalStateError,
    die_if,
    exit_code_for,
    write_json,
    write_table,
)


def tomography_from_files(
    records_file: Optional[str],
    counts_file: Optional[str],
    background_file: Optional[str],
    input_index: int,
    target: Optional[str],
) -> Dict[str, Any]:
    """
    Reconstruct one input from a record file or a count table.

    Args:
      records_file: Record file written by a simulation run.
      counts_file: Count table with columns basis, port, counts, background.
      background_file: Background record file, used with records_file.
      input_index: Which input of the record file.
      target: Intended input state, a fiducial tag or 'theta:phi'.

    Returns:
      The reconstruction, with a fidelity report when a target is given.

    Raises:
      ConfigError: Unless exactly one of records_file and counts_file is given.
    """
    if (records_file is None) == (counts_file is None):
        raise ConfigError("Pass exactly one of --records and --counts")
    if counts_file is not None:
        if background_file is not None:
            raise ConfigError("--background applies to record files only")
        counts = read_count_table(counts_file)
    else:
        background = None if background_file is None else read_records(background_file)
        counts = counts_from_table(read_records(records_file), input_index, background)

    result = reconstruct(counts)
    payload: Dict[str, Any] = {"tomography": result.to_dict()}
    if target is not None:
        payload["fidelity"] = fidelity_report(result, parse_state(target)).to_dict()
    return payload


@click.command("tomography")
@click.option("--records", "records_file", default=None, help="Record file to reconstruct from")
@click.option("--counts", "counts_file", default=None, help="Count table to reconstruct from")
@click.option("--background", "background_file", default=None, help="Background record file")
@click.option("--input", "input_index", type=int, default=0, help="Input index in the record file")
@click.option("--target", default=None, help="Intended state: fiducial tag or theta:phi")
@click.option("--out", required=True, help="Output directory")
@click.option("--format", "table_format", type=click.Choice(FORMATS), default="csv", help="Table format")
def tomography_command(
    records_file: Optional[str],
    counts_file: Optional[str],
    background_file: Optional[str],
    input_index: int,
    target: Optional[str],
    out: str,
    table_format: str,
) -> None:
    """
    Reconstruct a polarization state from stored data.
    """
    try:
        payload = tomography_from_files(
            records_file, counts_file, background_file, input_index, target
        )
    except (
        ConfigError,
        NonPhysicalStateError,
        InsufficientStatisticsError,
        ConvergenceError,
    ) as error:
        die_if(True, str(error), exit_code_for(error))
        return

    rows = payload["tomography"]["counts"]
    if table_format == "csv":
        write_table(os.path.join(out, "counts.csv"), rows)
    else:
        write_json(os.path.join(out, "counts.json"), {"rows": rows})
    write_json(os.path.join(out, SUMMARY_JSON), payload)
    if "fidelity" in payload:
        report = payload["fidelity"]
        print(
            f"F = {report['fidelity']:.4f} +- {report['fidelity_error']:.4f}, "
            f"F_bgsub = {report['fidelity_bgsub']:.4f}",
            flush=True,
        )
    print(f"Reconstruction saved to {out}.", flush=True)
