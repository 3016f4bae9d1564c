"""Market-data ingestion, regulation-signal construction, and an offline
synthetic data generator.

Directory layout (one file per day, UTF-8 CSV with a header row):
    dayahead/YYYY-MM-DD.csv   hour, price_eur_mwh
    fcr/YYYY-MM-DD.csv        block_start_hour, price_eur_mw_4h
    frequency/YYYY-MM-DD.csv  offset_s, hz         (10 s cadence)
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .types import (
    AlignmentError,
    DomainError,
    PriceSeries,
    RegulationSignal,
    TimeGrid,
)

FREQ_SAMPLE_S = 10
SAMPLES_PER_DAY = 24 * 3600 // FREQ_SAMPLE_S  # 8640
FULL_ACTIVATION_HZ = 0.2  # deviation at which all promised power is called


class DataError(ValueError):
    """Missing, malformed, or gap-ridden input data."""


def frequency_to_signal(f):
    """Clipped-ramp mapping from grid frequency (Hz) to the regulation
    signal in [-1, 1]: full upregulation at 49.8 Hz and below, full
    downregulation at 50.2 Hz and above, linear in between."""
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise DataError("frequency values must be finite")
    # quantize the ratio well below measurement resolution so decimal
    # inputs like 50.1 map to exact ramp values
    out = np.clip(np.round((50.0 - f) / FULL_ACTIVATION_HZ, 12), -1.0, 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DayData:
    """One trading day of inputs."""

    date: str
    prices: PriceSeries
    signal: RegulationSignal


def _read_csv(path: str, columns: int) -> list[list[float]]:
    if not os.path.exists(path):
        raise DataError(f"missing data file {path}")
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        for line in reader:
            if len(line) < columns:
                raise DataError(f"{path}: short row {line!r}")
            try:
                rows.append([float(x) for x in line[:columns]])
            except ValueError as e:
                raise DataError(f"{path}: {e}") from None
    return rows


def load_dayahead(path: str) -> np.ndarray:
    rows = _read_csv(path, 2)
    if len(rows) != 24 or [int(r[0]) for r in rows] != list(range(24)):
        raise DataError(f"{path}: expected 24 hourly rows")
    return np.array([r[1] for r in rows])


def load_fcr(path: str) -> np.ndarray:
    rows = _read_csv(path, 2)
    if len(rows) != 6 or [int(r[0]) for r in rows] != [0, 4, 8, 12, 16, 20]:
        raise DataError(f"{path}: expected 6 four-hour blocks")
    return np.array([r[1] for r in rows])


def load_frequency(path: str) -> np.ndarray:
    rows = _read_csv(path, 2)
    offsets = np.array([r[0] for r in rows])
    expected = np.arange(SAMPLES_PER_DAY) * FREQ_SAMPLE_S
    if len(rows) != SAMPLES_PER_DAY or not np.array_equal(offsets, expected):
        raise DataError(f"{path}: gap in 10 s frequency samples")
    hz = np.array([r[1] for r in rows])
    if not np.all(np.isfinite(hz)):
        raise DataError(f"{path}: non-finite frequency")
    return hz


@dataclass(frozen=True)
class FrequencyArchive:
    """Per-day frequency samples at a uniform 10 s cadence."""

    days: dict[str, np.ndarray]
    sample_period_hours: float = FREQ_SAMPLE_S / 3600.0

    def signal_for(self, date: str) -> RegulationSignal:
        if date not in self.days:
            raise DataError(f"no frequency data for {date}")
        return RegulationSignal(values=frequency_to_signal(self.days[date]),
                                sample_period_hours=self.sample_period_hours)


@dataclass(frozen=True)
class Dataset:
    root: str

    def dates(self) -> list[str]:
        da_dir = os.path.join(self.root, "dayahead")
        if not os.path.isdir(da_dir):
            raise DataError(f"no dayahead directory under {self.root}")
        return sorted(f[:-4] for f in os.listdir(da_dir) if f.endswith(".csv"))

    def load_day(self, date: str) -> DayData:
        da = load_dayahead(os.path.join(self.root, "dayahead", f"{date}.csv"))
        fcr = load_fcr(os.path.join(self.root, "fcr", f"{date}.csv"))
        hz = load_frequency(os.path.join(self.root, "frequency", f"{date}.csv"))
        return DayData(date=date,
                       prices=PriceSeries(day_ahead=da, fcr_availability=fcr),
                       signal=RegulationSignal(
                           values=frequency_to_signal(hz),
                           sample_period_hours=FREQ_SAMPLE_S / 3600.0))


# ---------------------------------------------------------------------------
# Synthetic generator (offline substitute for the public archives).
# ---------------------------------------------------------------------------

def synthetic_prices(rng: np.random.Generator, base: float = 45.0,
                     spread: float = 30.0, fcr_level: float = 60.0):
    """Sinusoidal two-peak daily price shape with noise, plus FCR
    availability prices per 4h block."""
    hours = np.arange(24)
    shape = np.sin((hours - 4) / 24 * 2 * np.pi) + \
        0.6 * np.sin((hours - 1) / 12 * 2 * np.pi)
    da = base + spread * shape / 1.6 + rng.normal(0.0, spread * 0.05, 24)
    fcr = np.maximum(fcr_level + rng.normal(0.0, fcr_level * 0.2, 6), 0.0)
    if spread == 0.0:
        da = np.full(24, base)
    return da, fcr


def synthetic_signal(rng: np.random.Generator, gamma: float,
                     budget_target: float = 0.7,
                     n: int = SAMPLES_PER_DAY,
                     sample_period_hours: float = FREQ_SAMPLE_S / 3600.0
                     ) -> RegulationSignal:
    """Mean-reverting frequency-deviation noise scaled so the daily
    deviation-time usage approximates ``budget_target`` of gamma."""
    x = np.empty(n)
    x[0] = 0.0
    theta, sig = 0.02, 0.12
    noise = rng.normal(0.0, sig, n - 1)
    for i in range(1, n):
        x[i] = x[i - 1] * (1.0 - theta) + noise[i - 1]
    target = budget_target * gamma
    vals = np.clip(x, -1.0, 1.0)
    for _ in range(8):
        usage = float(np.sum(np.abs(vals))) * sample_period_hours
        if usage <= 0:
            break
        vals = np.clip(vals * (target / usage), -1.0, 1.0)
    return RegulationSignal(values=vals,
                            sample_period_hours=sample_period_hours)


def signal_to_frequency(signal: RegulationSignal) -> np.ndarray:
    """Inverse of the clipped ramp on its linear branch (saturated values
    map to the activation thresholds)."""
    return 50.0 - FULL_ACTIVATION_HZ * signal.values


def _write_csv(path: str, header: list[str], rows) -> None:
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def generate_synthetic_dataset(out_dir: str, seed: int, days: int,
                               gamma: float, base: float = 45.0,
                               spread: float = 30.0, fcr_level: float = 60.0,
                               budget_target: float = 0.7,
                               start_day: int = 1) -> list[str]:
    """Write a deterministic synthetic dataset; returns the date list.
    Dates are synthetic labels 2021-01-01 onward."""
    if days < 1:
        raise DataError("days must be >= 1")
    rng = np.random.default_rng(seed)
    import datetime
    d0 = datetime.date(2021, 1, start_day)
    dates = []
    for d in range(days):
        date = (d0 + datetime.timedelta(days=d)).isoformat()
        dates.append(date)
        da, fcr = synthetic_prices(rng, base=base, spread=spread,
                                   fcr_level=fcr_level)
        sig = synthetic_signal(rng, gamma, budget_target=budget_target)
        hz = signal_to_frequency(sig)
        _write_csv(os.path.join(out_dir, "dayahead", f"{date}.csv"),
                   ["hour", "price_eur_mwh"],
                   [[h, format(da[h], ".6f")] for h in range(24)])
        _write_csv(os.path.join(out_dir, "fcr", f"{date}.csv"),
                   ["block_start_hour", "price_eur_mw_4h"],
                   [[4 * b, format(fcr[b], ".6f")] for b in range(6)])
        _write_csv(os.path.join(out_dir, "frequency", f"{date}.csv"),
                   ["offset_s", "hz"],
                   [[i * FREQ_SAMPLE_S, format(hz[i], ".6f")]
                    for i in range(len(hz))])
    return dates
