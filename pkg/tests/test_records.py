"""
Tests for record files and count tables.
"""
import dataclasses

import numpy as np
import pandas as pd
import pytest

from polarization import fiducial
from records import read_count_table, read_records, write_records
from simulation.engine import SequencePlan, simulate
from simulation.protocol import NoiseParams
from tomography import counts_from_table
from utils import ConfigError


@pytest.fixture
def table(calibrated: NoiseParams):
    plan = SequencePlan(
        inputs=(fiducial("H"), fiducial("S")),
        settings=("H-V", "S-T", "L-R"),
        trials=300,
        seed=4,
        noise=dataclasses.replace(calibrated, q=0.8),
        heralded_only=True,
    )
    return simulate(plan)


class TestRecords:
    def test_write_then_read(self, tmp_path, table) -> None:
        filename = str(tmp_path / "records.csv")
        write_records(filename, table)
        loaded = read_records(filename)
        assert loaded.settings == table.settings
        for column in ("trial", "input_index", "heralded", "swapped", "d1", "d2", "d3"):
            assert np.array_equal(getattr(loaded, column), getattr(table, column)), column
        assert loaded.setting_names() == table.setting_names()

    def test_counts_survive_the_file(self, tmp_path, table) -> None:
        filename = str(tmp_path / "nested" / "records.csv")
        write_records(filename, table)
        assert counts_from_table(read_records(filename), 1) == counts_from_table(table, 1)

    def test_extension_checked(self, tmp_path, table) -> None:
        with pytest.raises(ValueError, match="must end with .csv"):
            write_records(str(tmp_path / "records.txt"), table)

    def test_missing_file(self, tmp_path) -> None:
        with pytest.raises(ConfigError, match="does not exist"):
            read_records(str(tmp_path / "absent.csv"))

    def test_missing_columns(self, tmp_path) -> None:
        filename = tmp_path / "bad.csv"
        pd.DataFrame({"trial": [0], "d1": [1]}).to_csv(filename, index=False)
        with pytest.raises(ConfigError, match="missing columns"):
            read_records(str(filename))


class TestCountTable:
    def test_port_names(self, tmp_path) -> None:
        filename = tmp_path / "counts.csv"
        pd.DataFrame(
            {
                "basis": ["H-V", "H-V", "S-T", "S-T", "L-R", "L-R"],
                "port": ["H", "V", "plus", "minus", "+", "-"],
                "counts": [90, 10, 55, 45, 40, 60],
                "background": [2, 3, 1, 1, 0, 4],
            }
        ).to_csv(filename, index=False)
        counts = {c.basis: c for c in read_count_table(str(filename))}
        assert (counts["H-V"].n_plus, counts["H-V"].n_minus) == (90, 10)
        assert (counts["H-V"].background_plus, counts["H-V"].background_minus) == (2, 3)
        assert (counts["L-R"].n_plus, counts["L-R"].n_minus) == (40, 60)
        assert counts["S-T"].background_scale == 1.0

    def test_circular_ports_by_tag(self, tmp_path) -> None:
        filename = tmp_path / "counts.csv"
        pd.DataFrame(
            {"basis": ["L-R", "L-R"], "port": ["R", "L"], "counts": [70, 30], "background": [0, 0]}
        ).to_csv(filename, index=False)
        (circular,) = read_count_table(str(filename))
        assert (circular.n_plus, circular.n_minus) == (70, 30)

    def test_background_scale(self, tmp_path) -> None:
        filename = tmp_path / "counts.csv"
        pd.DataFrame(
            {
                "basis": ["H-V", "H-V"],
                "port": ["plus", "minus"],
                "counts": [50, 50],
                "background": [4, 4],
                "background_scale": [0.25, 0.25],
            }
        ).to_csv(filename, index=False)
        (linear,) = read_count_table(str(filename))
        assert linear.background_scale == 0.25

    def test_unknown_port(self, tmp_path) -> None:
        filename = tmp_path / "counts.csv"
        pd.DataFrame({"basis": ["H-V"], "port": ["S"], "counts": [1], "background": [0]}).to_csv(
            filename, index=False
        )
        with pytest.raises(ConfigError, match="Unknown port"):
            read_count_table(str(filename))

    def test_unknown_basis(self, tmp_path) -> None:
        filename = tmp_path / "counts.csv"
        pd.DataFrame({"basis": ["X-Y"], "port": ["plus"], "counts": [1], "background": [0]}).to_csv(
            filename, index=False
        )
        with pytest.raises(ConfigError, match="Unknown basis"):
            read_count_table(str(filename))

    def test_missing_columns(self, tmp_path) -> None:
        filename = tmp_path / "counts.csv"
        pd.DataFrame({"basis": ["H-V"], "counts": [1]}).to_csv(filename, index=False)
        with pytest.raises(ConfigError, match="missing columns"):
            read_count_table(str(filename))
