"""Spectrometric dataset ingestion.

Two on-disk layouts are accepted. The classic archive layout is a
whitespace-separated stream of floats with 125 numbers per record: 100
absorbance channels, 22 principal-component scores, then moisture, fat
and protein percentages. The standard analysis subset is the first 215
records; later records are extrapolation samples and are dropped. The
canonical CSV layout has a header ``spectrum_0,...,spectrum_99,fat``
and one unit per row.

Spectra are represented as curves on the same normalized abscissa the
synthetic benchmark uses, so derivative-based distances land in the
operating range of the bandwidth prior; the physical wavelength grid
(850 to 1050 nm) is kept alongside for reference.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .estimators import derive_first_derivative
from .functional import FunctionalSample

__all__ = [
    "CACHE_ENV_DIR",
    "TECATOR_ENV_PATH",
    "TecatorDataset",
    "find_tecator",
    "load_tecator",
    "parse_tecator",
    "to_csv",
]

TECATOR_ENV_PATH = "FPLM_TECATOR_PATH"
CACHE_ENV_DIR = "FPLM_CACHE_DIR"

_N_CHANNELS = 100
_RECORD_LEN = 125          # 100 channels + 22 PC scores + 3 responses
_FAT_INDEX = 122           # channels, scores, then moisture/fat/protein
_N_STANDARD = 215
_WAVELENGTHS = np.linspace(850.0, 1050.0, _N_CHANNELS)
_CSV_HEADER = [f"spectrum_{i}" for i in range(_N_CHANNELS)] + ["fat"]


def _normalized_grid():
    from .simulation import simulation_grid
    return simulation_grid(_N_CHANNELS)


@dataclass(frozen=True)
class TecatorDataset:
    """Absorbance spectra with fat-content responses."""

    spectra: FunctionalSample
    fat: np.ndarray
    wavelengths: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "fat", np.asarray(self.fat, dtype=float))
        object.__setattr__(self, "wavelengths",
                           np.asarray(self.wavelengths, dtype=float))
        if self.spectra.values.shape[1] != _N_CHANNELS:
            raise ValueError(
                f"expected {_N_CHANNELS} channels per spectrum, got "
                f"{self.spectra.values.shape[1]}")
        if self.fat.shape != (self.spectra.values.shape[0],):
            raise ValueError("fat must hold one value per spectrum")
        if self.wavelengths.shape != (_N_CHANNELS,):
            raise ValueError(f"wavelength grid must have {_N_CHANNELS} points")
        bad = np.flatnonzero((self.fat < 0.0) | (self.fat > 100.0))
        if bad.size:
            raise ValueError(
                f"fat content outside [0, 100] at record {bad[0] + 1}")

    @property
    def n(self) -> int:
        return self.fat.size

    def derivative(self) -> FunctionalSample:
        """First-derivative curves of the spectra."""
        return derive_first_derivative(self.spectra)

    def subset(self, index) -> "TecatorDataset":
        index = np.asarray(index)
        return replace(
            self,
            spectra=FunctionalSample(self.spectra.grid,
                                     self.spectra.values[index]),
            fat=self.fat[index])

    def split(self, n_train: int = 160):
        """(learning, testing) datasets split at n_train."""
        if not 0 < n_train < self.n:
            raise ValueError("n_train must split the sample in two")
        return (self.subset(np.arange(n_train)),
                self.subset(np.arange(n_train, self.n)))


def _dataset_from_matrix(spectra: np.ndarray, fat: np.ndarray) -> TecatorDataset:
    sample = FunctionalSample(_normalized_grid(), spectra)
    return TecatorDataset(spectra=sample, fat=fat, wavelengths=_WAVELENGTHS)


def _parse_classic(lines: list[str]) -> TecatorDataset:
    values: list[float] = []
    for lineno, line in enumerate(lines, start=1):
        for token in line.split():
            try:
                values.append(float(token))
            except ValueError:
                raise ValueError(
                    f"line {lineno}: non-numeric token {token!r}") from None
    total = len(values)
    n_records, remainder = divmod(total, _RECORD_LEN)
    if remainder:
        raise ValueError(
            f"malformed record {n_records + 1}: stream holds {total} numbers,"
            f" which is not a multiple of {_RECORD_LEN}")
    if n_records < _N_STANDARD:
        raise ValueError(
            f"expected at least {_N_STANDARD} records, found {n_records}")
    data = np.asarray(values, dtype=float).reshape(n_records, _RECORD_LEN)
    data = data[:_N_STANDARD]
    return _dataset_from_matrix(data[:, :_N_CHANNELS], data[:, _FAT_INDEX])


def _parse_csv(lines: list[str]) -> TecatorDataset:
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("empty file") from None
    if [h.strip() for h in header] != _CSV_HEADER:
        raise ValueError(
            "line 1: expected canonical header spectrum_0..spectrum_99,fat")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != _N_CHANNELS + 1:
            raise ValueError(
                f"line {lineno}: expected {_N_CHANNELS + 1} columns, "
                f"got {len(row)}")
        try:
            rows.append([float(v) for v in row])
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric value") from None
    if len(rows) < 2:
        raise ValueError("need at least 2 records")
    data = np.asarray(rows, dtype=float)
    return _dataset_from_matrix(data[:, :_N_CHANNELS], data[:, _N_CHANNELS])


def parse_tecator(path) -> TecatorDataset:
    """Parse either accepted layout, sniffing by the CSV header."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    lines = path.read_text().splitlines()
    head = lines[0] if lines else ""
    if head.lstrip().startswith("spectrum_0"):
        return _parse_csv(lines)
    return _parse_classic(lines)


def to_csv(dataset: TecatorDataset, path) -> Path:
    """Write the canonical CSV layout; parse_tecator reads it back."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_HEADER)
        for row, fat in zip(dataset.spectra.values, dataset.fat):
            writer.writerow([repr(float(v)) for v in row]
                            + [repr(float(fat))])
    return path


def find_tecator(path=None) -> Path | None:
    """Locate a dataset file: explicit path, env var, then cache dir."""
    if path is not None:
        p = Path(path)
        return p if p.exists() else None
    env = os.environ.get(TECATOR_ENV_PATH)
    if env:
        p = Path(env)
        if p.exists():
            return p
    cache = Path(os.environ.get(CACHE_ENV_DIR, "data"))
    for name in ("tecator.csv", "tecator.dat", "tecator.txt", "tecator.data"):
        p = cache / name
        if p.exists():
            return p
    return None


def load_tecator(path=None) -> TecatorDataset:
    found = find_tecator(path)
    if found is None:
        raise FileNotFoundError(
            "no dataset file found; pass a path, set "
            f"{TECATOR_ENV_PATH}, or drop tecator.csv into the cache dir "
            f"(default ./data, override with {CACHE_ENV_DIR})")
    return parse_tecator(found)
