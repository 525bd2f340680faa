"""Tests for dataset ingestion: both layouts, validation, discovery."""

import numpy as np
import pytest

from fplm.datasets import (
    CACHE_ENV_DIR,
    TECATOR_ENV_PATH,
    TecatorDataset,
    find_tecator,
    load_tecator,
    parse_tecator,
    to_csv,
)
from fplm.functional import FunctionalSample
from fplm.simulation import simulation_grid


def _classic_records(n=240, seed=0):
    """Synthetic archive-layout records: 125 floats each."""
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, 100)
    records = []
    for i in range(n):
        spectrum = 3.0 + 0.5 * np.sin(2 * np.pi * t * (1 + 0.01 * i)) \
            + 0.01 * rng.standard_normal(100)
        scores = rng.standard_normal(22)
        moisture = 60.0 + rng.random() * 10
        fat = rng.random() * 50.0
        protein = 15.0 + rng.random() * 5
        records.append(np.concatenate(
            [spectrum, scores, [moisture, fat, protein]]))
    return records


def _write_classic(path, records, per_line=5):
    # the archive wraps numbers over lines with no record alignment
    flat = np.concatenate(records)
    lines = [" ".join(f"{v:.6f}" for v in flat[i:i + per_line])
             for i in range(0, flat.size, per_line)]
    path.write_text("\n".join(lines) + "\n")
    return path


class TestClassicLayout:
    def test_parse_takes_standard_subset(self, tmp_path):
        records = _classic_records(n=240)
        f = _write_classic(tmp_path / "tecator.dat", records)
        ds = parse_tecator(f)
        assert ds.n == 215
        assert ds.spectra.values.shape == (215, 100)
        assert ds.wavelengths[0] == 850.0
        assert ds.wavelengths[-1] == 1050.0

    def test_channel_and_fat_positions(self, tmp_path):
        records = _classic_records(n=215, seed=3)
        f = _write_classic(tmp_path / "t.dat", records)
        ds = parse_tecator(f)
        expect = np.array([rec[122] for rec in records])
        assert np.allclose(ds.fat, expect, rtol=0.0, atol=1e-6)
        assert np.allclose(ds.spectra.values[7], records[7][:100],
                           rtol=0.0, atol=1e-6)

    def test_spectra_live_on_normalized_grid(self, tmp_path):
        f = _write_classic(tmp_path / "t.dat", _classic_records(n=215))
        ds = parse_tecator(f)
        assert np.array_equal(ds.spectra.grid.points,
                              simulation_grid(100).points)

    def test_missing_channel_names_record(self, tmp_path):
        records = _classic_records(n=215)
        flat = np.concatenate(records)
        flat = np.delete(flat, 42)     # drop one number in record 1
        f = tmp_path / "bad.dat"
        f.write_text(" ".join(f"{v:.6f}" for v in flat))
        with pytest.raises(ValueError, match="malformed record"):
            parse_tecator(f)

    def test_non_numeric_token_names_line(self, tmp_path):
        f = tmp_path / "bad.dat"
        f.write_text("1.0 2.0 3.0\n4.0 oops 6.0\n")
        with pytest.raises(ValueError, match="line 2"):
            parse_tecator(f)

    def test_too_few_records_rejected(self, tmp_path):
        f = _write_classic(tmp_path / "t.dat", _classic_records(n=100))
        with pytest.raises(ValueError, match="at least 215"):
            parse_tecator(f)

    def test_derivative_shape(self, tmp_path):
        f = _write_classic(tmp_path / "t.dat", _classic_records(n=215))
        ds = parse_tecator(f)
        Z = ds.derivative()
        assert Z.values.shape == (215, 100)


class TestCanonicalCsv:
    @pytest.fixture()
    def small(self):
        rng = np.random.default_rng(5)
        spectra = rng.random((12, 100)) + 2.0
        fat = rng.random(12) * 40.0
        return TecatorDataset(
            spectra=FunctionalSample(simulation_grid(100), spectra),
            fat=fat, wavelengths=np.linspace(850.0, 1050.0, 100))

    def test_round_trip_is_exact(self, small, tmp_path):
        f = to_csv(small, tmp_path / "t.csv")
        back = parse_tecator(f)
        assert np.array_equal(back.spectra.values, small.spectra.values)
        assert np.array_equal(back.fat, small.fat)

    def test_bad_header_rejected(self, tmp_path):
        f = tmp_path / "t.csv"
        f.write_text("spectrum_0,fat\n1.0,2.0\n")
        with pytest.raises(ValueError, match="line 1"):
            parse_tecator(f)

    def test_short_row_names_line(self, small, tmp_path):
        f = to_csv(small, tmp_path / "t.csv")
        lines = f.read_text().splitlines()
        lines[3] = lines[3].rsplit(",", 1)[0]
        f.write_text("\n".join(lines))
        with pytest.raises(ValueError, match="line 4"):
            parse_tecator(f)

    def test_non_numeric_cell_names_line(self, small, tmp_path):
        f = to_csv(small, tmp_path / "t.csv")
        lines = f.read_text().splitlines()
        parts = lines[2].split(",")
        parts[50] = "NA?"
        lines[2] = ",".join(parts)
        f.write_text("\n".join(lines))
        with pytest.raises(ValueError, match="line 3"):
            parse_tecator(f)


class TestDatasetType:
    def test_fat_range_validated(self):
        spectra = FunctionalSample(simulation_grid(100), np.ones((3, 100)))
        with pytest.raises(ValueError, match="record 2"):
            TecatorDataset(spectra=spectra, fat=[10.0, 120.0, 5.0],
                           wavelengths=np.linspace(850, 1050, 100))

    def test_channel_count_validated(self):
        grid = simulation_grid(99)
        with pytest.raises(ValueError, match="100 channels"):
            TecatorDataset(
                spectra=FunctionalSample(grid, np.ones((3, 99))),
                fat=[1.0, 2.0, 3.0],
                wavelengths=np.linspace(850, 1050, 100))

    def test_split_partitions(self, tmp_path):
        f = _write_classic(tmp_path / "t.dat", _classic_records(n=215))
        ds = parse_tecator(f)
        train, test = ds.split(160)
        assert train.n == 160
        assert test.n == 55
        assert np.array_equal(np.concatenate([train.fat, test.fat]), ds.fat)
        with pytest.raises(ValueError, match="split"):
            ds.split(215)


class TestDiscovery:
    def test_explicit_path_wins(self, tmp_path, monkeypatch):
        f = _write_classic(tmp_path / "t.dat", _classic_records(n=215))
        monkeypatch.delenv(TECATOR_ENV_PATH, raising=False)
        assert find_tecator(f) == f
        assert find_tecator(tmp_path / "nope.dat") is None

    def test_env_var_location(self, tmp_path, monkeypatch):
        f = _write_classic(tmp_path / "t.dat", _classic_records(n=215))
        monkeypatch.setenv(TECATOR_ENV_PATH, str(f))
        assert find_tecator() == f
        ds = load_tecator()
        assert ds.n == 215

    def test_cache_dir_override(self, tmp_path, monkeypatch):
        monkeypatch.delenv(TECATOR_ENV_PATH, raising=False)
        monkeypatch.setenv(CACHE_ENV_DIR, str(tmp_path))
        small_grid = simulation_grid(100)
        rng = np.random.default_rng(1)
        ds = TecatorDataset(
            spectra=FunctionalSample(small_grid, rng.random((5, 100))),
            fat=rng.random(5) * 30,
            wavelengths=np.linspace(850, 1050, 100))
        to_csv(ds, tmp_path / "tecator.csv")
        found = find_tecator()
        assert found == tmp_path / "tecator.csv"

    def test_missing_everywhere_raises(self, tmp_path, monkeypatch):
        monkeypatch.delenv(TECATOR_ENV_PATH, raising=False)
        monkeypatch.setenv(CACHE_ENV_DIR, str(tmp_path / "empty"))
        with pytest.raises(FileNotFoundError, match="FPLM_TECATOR_PATH"):
            load_tecator()
