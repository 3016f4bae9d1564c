"""Daily bidding loop: build a model from one day of market data, solve
it, simulate the realized day under the empirical regulation signal (with
optional intraday buy-back of regulation energy), and account for cash
flows.
"""

from __future__ import annotations

import datetime
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .builder import dispatch_variant
from .data import DataError, Dataset, DayData
from .ir import ModelOptions
from .solve import SolveResult, solve
from .types import (
    AlignmentError,
    DomainError,
    PriceSeries,
    RegulationSignal,
    StorageParams,
    TimeGrid,
    UncertaintyBudget,
    default_initial_soc,
    is_multiple_of,
)

MWH_PER_KWH = 1e-3


class SolverError(RuntimeError):
    """The optimizer failed to return a usable solution."""


def budget_usage(signal: RegulationSignal, gamma: float) -> float:
    """Fraction of the deviation-time budget consumed by a signal; values
    above 1 are admissible diagnostics."""
    if gamma <= 0:
        raise DomainError("gamma must be positive")
    return signal.abs_integral() / gamma


def _window_start(k: int, window_len: int) -> int:
    """First interval (1-based) of the trailing window ending at k."""
    return max(1, k - window_len + 1)


def intraday_adjustments(xr: np.ndarray, signal: RegulationSignal,
                         grid: TimeGrid, gamma_prime: float,
                         Gamma_prime: float) -> np.ndarray:
    """Per-interval intraday trades that buy back regulation energy
    accumulated over the trailing recovery window:

        x^a_{k+1} = -1/(Gamma' - dt) * sum_{i=i0(k+1)}^{k} xr_i * int xi_i

    with i0(j) = max{1, j - Gamma'/dt + 1}. The first interval has no
    history, so x^a_1 = 0.
    """
    if not is_multiple_of(Gamma_prime, grid.dt_hours):
        raise DomainError("Gamma_prime must be a multiple of dt")
    if Gamma_prime <= grid.dt_hours:
        raise DomainError("Gamma_prime must exceed dt")
    ints = signal.interval_integrals(grid)
    wlen = int(round(Gamma_prime / grid.dt_hours))
    xa = np.zeros(grid.K)
    for k in range(1, grid.K):  # adjustment for interval k+1 (1-based)
        i0 = _window_start(k + 1, wlen)
        drift = sum(xr[i - 1] * ints[i - 1] for i in range(i0, k + 1))
        xa[k] = -drift / (Gamma_prime - grid.dt_hours)
    return xa


def drift_envelope(xr: np.ndarray, signal: RegulationSignal, grid: TimeGrid,
                   Gamma_prime: float) -> np.ndarray:
    """Upper bound on |realized SOC - planned SOC| at each interval
    boundary when intraday adjustments are active (lossless guarantee):
    the trailing-window sum of xr_i * int |xi_i|."""
    ints = np.abs(signal.values).reshape(grid.K, -1).sum(axis=1) \
        * signal.sample_period_hours
    wlen = int(round(Gamma_prime / grid.dt_hours))
    env = np.empty(grid.K)
    for k in range(1, grid.K + 1):
        i0 = _window_start(k, wlen)
        env[k - 1] = sum(xr[i - 1] * ints[i - 1] for i in range(i0, k + 1)
                         if i <= grid.K)
    return env


def window_budget_usage(signal: RegulationSignal, grid: TimeGrid,
                        gamma_prime: float, Gamma_prime: float) -> float:
    """Worst usage of the rolling deviation budget: max over trailing
    windows of (sum of per-interval |xi| integrals) / gamma'."""
    ints = np.abs(signal.values).reshape(grid.K, -1).sum(axis=1) \
        * signal.sample_period_hours
    wlen = int(round(Gamma_prime / grid.dt_hours))
    worst = 0.0
    for k in range(1, grid.K + 1):
        i0 = _window_start(k, wlen)
        worst = max(worst, float(np.sum(ints[i0 - 1:k])))
    return worst / gamma_prime


@dataclass(frozen=True)
class ExperimentConfig:
    """One backtest run: battery, grid, budget, model variant, and the
    daily protocol knobs."""

    params: StorageParams
    grid: TimeGrid
    budget: UncertaintyBudget
    options: ModelOptions = ModelOptions()
    bidding_time: str = "midnight"  # or "8am"
    day_coupling: bool = False
    time_limit: float | None = 60.0
    gap_target: float | None = None
    initial_soc: float | None = None
    country: str = ""
    start_date: str | None = None
    end_date: str | None = None
    exclude_dst: bool = True
    backend: str | None = None

    def __post_init__(self):
        if self.bidding_time not in ("midnight", "8am"):
            raise DomainError("bidding_time must be 'midnight' or '8am'")
        self.budget.validate_for_grid(self.grid)

    @property
    def y0_default(self) -> float:
        if self.initial_soc is not None:
            return self.initial_soc
        return default_initial_soc(self.params)


@dataclass(frozen=True)
class BacktestRecord:
    date: str
    status: str
    objective: float
    profit_total: float
    profit_fcr: float
    profit_dayahead: float
    profit_intraday: float
    regulation_energy_cash: float  # settled separately, not in profit_total
    throughput: float
    soc_min: float
    soc_max: float
    soc_midnight: float
    power_min: float
    power_max: float
    budget_usage: float
    y0: float
    solve_time: float = 0.0
    gap: float = np.nan
    violations: tuple[str, ...] = ()

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "date": self.date,
            "status": self.status,
            "objective": self.objective,
            "profit_total": self.profit_total,
            "profit_fcr": self.profit_fcr,
            "profit_dayahead": self.profit_dayahead,
            "profit_intraday": self.profit_intraday,
            "regulation_energy_cash": self.regulation_energy_cash,
            "throughput": self.throughput,
            "soc_min": self.soc_min,
            "soc_max": self.soc_max,
            "soc_midnight": self.soc_midnight,
            "power_min": self.power_min,
            "power_max": self.power_max,
            "budget_usage": self.budget_usage,
            "y0": self.y0,
            "violations": list(self.violations),
        }
        if include_timing:
            d["solve_time"] = self.solve_time
            d["gap"] = None if not np.isfinite(self.gap) else self.gap
        return d


def _extract_bids(point: dict[str, float], K: int, options: ModelOptions):
    x0 = np.array([point.get(f"x0[{k}]", 0.0) for k in range(1, K + 1)])
    if options.fcr_enabled and options.variant != "arbitrage_only":
        if "xr[1]" in point:
            xr = np.array([point.get(f"xr[{k}]", 0.0)
                           for k in range(1, K + 1)])
            return x0, xr, xr
        x_up = np.array([point.get(f"x_up[{k}]", 0.0)
                         for k in range(1, K + 1)])
        x_dn = np.array([point.get(f"x_dn[{k}]", 0.0)
                         for k in range(1, K + 1)])
        return x0, x_up, x_dn
    return x0, np.zeros(K), np.zeros(K)


def _simulate(power: np.ndarray, params: StorageParams, dt: float,
              y0: float) -> np.ndarray:
    """SOC at each sample boundary (length n+1) for per-sample constant
    power; positive power discharges."""
    rate = np.minimum(-params.eta_c * power, -power / params.eta_d)
    return y0 + np.concatenate(([0.0], np.cumsum(rate) * dt))


def run_day_with_bids(config: ExperimentConfig, day: DayData, y0: float,
                      y0_high: float | None = None):
    """Like run_day but also returns the accepted bid arrays
    (x0, x_up, x_dn) for downstream use."""
    params, grid, budget = config.params, config.grid, config.budget
    prices, signal = day.prices, day.signal
    per = signal.check_alignment(grid)
    prices.check_alignment(grid)

    lo, hi = params.y_min, params.y_max
    y0c = float(min(max(y0, lo), hi))
    y0h = None if y0_high is None else float(min(max(y0_high, lo), hi))
    ir = dispatch_variant(params, grid, budget, y0c, prices, config.options,
                          y0_high=y0h)
    res = solve(ir, time_limit=config.time_limit,
                gap_target=config.gap_target, backend=config.backend)
    if res.status not in ("optimal", "feasible_limit"):
        raise SolverError(f"{day.date}: solver returned {res.status}: "
                          f"{res.message}")

    K = grid.K
    x0, x_up, x_dn = _extract_bids(res.point, K, config.options)
    da = prices.da_per_interval(grid)
    fcr = prices.fcr_per_interval(grid)
    dt = grid.dt_hours

    if config.options.intraday:
        xa = intraday_adjustments(x_up, signal, grid, budget.gamma_prime,
                                  budget.Gamma_prime)
    else:
        xa = np.zeros(K)

    xi = signal.values[:per * K]
    sample_dt = signal.sample_period_hours
    base = np.repeat(x0 + xa, per)
    power = base + np.maximum(xi, 0.0) * np.repeat(x_up, per) \
        - np.maximum(-xi, 0.0) * np.repeat(x_dn, per)
    soc = _simulate(power, params, sample_dt, y0c)

    profit_da = float(np.sum(da * x0) * dt * MWH_PER_KWH)
    profit_fcr = float(np.sum(fcr * x_up) * MWH_PER_KWH)
    profit_id = float(np.sum(da * xa) * dt * MWH_PER_KWH)
    da_samples = np.repeat(da, per)
    reg_cash = float(np.sum(da_samples * (power - base))
                     * sample_dt * MWH_PER_KWH)
    throughput = float(params.eta_c
                       * np.sum(np.maximum(-power, 0.0)) * sample_dt)

    gamma_day = budget.total_gamma(grid.T)
    usage = budget_usage(signal, gamma_day) if gamma_day > 0 else 0.0

    violations: list[str] = []
    tol = 1e-7
    if soc.min() < lo - tol:
        violations.append(f"soc_below_min:{soc.min():.6f}")
    if soc.max() > hi + tol:
        violations.append(f"soc_above_max:{soc.max():.6f}")
    if config.options.intraday:
        plan = _simulate(np.repeat(x0, per), params, sample_dt, y0c)
        boundary = np.arange(1, K + 1) * per
        dy = np.abs(soc[boundary] - plan[boundary])
        env = drift_envelope(x_up, signal, grid, budget.Gamma_prime)
        bad = dy > env + 1e-6
        if np.any(bad):
            k = int(np.argmax(dy - env)) + 1
            violations.append(f"drift_envelope[{k}]:{dy[k - 1]:.6f}")

    record = BacktestRecord(
        date=day.date, status=res.status, objective=float(res.objective),
        profit_total=profit_fcr + profit_da + profit_id,
        profit_fcr=profit_fcr, profit_dayahead=profit_da,
        profit_intraday=profit_id, regulation_energy_cash=reg_cash,
        throughput=throughput, soc_min=float(soc.min()),
        soc_max=float(soc.max()), soc_midnight=float(soc[-1]),
        power_min=float(power.min()), power_max=float(power.max()),
        budget_usage=float(usage), y0=y0c, solve_time=res.solve_time,
        gap=res.gap, violations=tuple(violations))
    return record, x0, x_up, x_dn


def run_day(config: ExperimentConfig, day: DayData, y0: float,
            y0_high: float | None = None) -> BacktestRecord:
    """Bid for one day, then replay it under the recorded signal.

    Cash flows: FCR availability revenue at the block prices, day-ahead
    revenue for x0, intraday trades valued at the concurrent day-ahead
    price. Realized regulation energy is also valued at the day-ahead
    price but reported separately (zero in expectation).
    """
    return run_day_with_bids(config, day, y0, y0_high=y0_high)[0]


def is_dst_transition(date: str) -> bool:
    """Last Sunday of March or October (EU clock-change days)."""
    d = datetime.date.fromisoformat(date)
    if d.month not in (3, 10) or d.weekday() != 6:
        return False
    return (d + datetime.timedelta(days=7)).month != d.month


@dataclass
class BacktestReport:
    config: ExperimentConfig
    records: list[BacktestRecord] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)

    def summary(self) -> dict:
        n = len(self.records)
        if n == 0:
            return {"days": 0, "skipped": len(self.skipped)}
        mean = lambda f: float(np.mean([f(r) for r in self.records]))
        return {
            "days": n,
            "skipped": len(self.skipped),
            "mean_profit_total": mean(lambda r: r.profit_total),
            "mean_profit_fcr": mean(lambda r: r.profit_fcr),
            "mean_profit_dayahead": mean(lambda r: r.profit_dayahead),
            "mean_profit_intraday": mean(lambda r: r.profit_intraday),
            "mean_throughput": mean(lambda r: r.throughput),
            "soc_min": float(min(r.soc_min for r in self.records)),
            "soc_max": float(max(r.soc_max for r in self.records)),
            "days_with_violations": sum(bool(r.violations)
                                        for r in self.records),
        }

    def series(self) -> list[tuple[str, float, float]]:
        """(date, cumulative profit, cumulative throughput) rows."""
        out, cp, ct = [], 0.0, 0.0
        for r in self.records:
            cp += r.profit_total
            ct += r.throughput
            out.append((r.date, cp, ct))
        return out


def _eight_am_interval(config: ExperimentConfig, prev: BacktestRecord | None,
                       prev_bids: np.ndarray | None, y0_plan: float):
    """Interval-valued midnight SOC for bids placed at 8am the previous
    day: the plan value +/- the worst regulation drift the previous day's
    already-committed reserve bids can cause between 8am and midnight."""
    if prev is None or prev_bids is None:
        return y0_plan, y0_plan
    grid, budget, params = config.grid, config.budget, config.params
    k8 = int(round(8.0 / grid.dt_hours))
    tail = prev_bids[k8:]
    if tail.size == 0 or np.max(tail) <= 0:
        return y0_plan, y0_plan
    gamma_tail = budget.total_gamma(grid.T - 8.0)
    drift = gamma_tail * float(np.max(tail)) \
        * max(params.eta_c, 1.0 / params.eta_d)
    return y0_plan - drift, y0_plan + drift


def run_backtest(config: ExperimentConfig, dataset: Dataset,
                 dates: list[str] | None = None) -> BacktestReport:
    """Sequential daily loop. With day coupling, each day starts from the
    previous day's realized midnight SOC; otherwise every day starts from
    the configured initial SOC. Missing or malformed data skips the day
    with a reason."""
    if dates is None:
        dates = dataset.dates()
    if config.start_date is not None:
        dates = [d for d in dates if d >= config.start_date]
    if config.end_date is not None:
        dates = [d for d in dates if d <= config.end_date]

    report = BacktestReport(config=config)
    y0 = config.y0_default
    prev_record: BacktestRecord | None = None
    prev_xr: np.ndarray | None = None
    for date in dates:
        if config.exclude_dst and is_dst_transition(date):
            report.skipped.append((date, "dst_transition"))
            continue
        try:
            day = dataset.load_day(date)
        except (DataError, AlignmentError, DomainError) as e:
            report.skipped.append((date, str(e)))
            continue
        y0_high = None
        if config.bidding_time == "8am":
            lo8, hi8 = _eight_am_interval(config, prev_record, prev_xr, y0)
            y0, y0_high = lo8, hi8
        rec, _, x_up, _ = run_day_with_bids(config, day, y0, y0_high=y0_high)
        report.records.append(rec)
        prev_record = rec
        prev_xr = x_up
        if config.day_coupling:
            y0 = rec.soc_midnight
        else:
            y0 = config.y0_default
    return report


def write_report(report: BacktestReport, out_dir: str,
                 include_timing: bool = False) -> dict[str, str]:
    """Write records.jsonl, summary.json, and series.csv. Timing fields
    are excluded by default so reruns are byte-identical."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "records": os.path.join(out_dir, "records.jsonl"),
        "summary": os.path.join(out_dir, "summary.json"),
        "series": os.path.join(out_dir, "series.csv"),
    }
    with open(paths["records"], "w") as f:
        for r in report.records:
            f.write(json.dumps(r.to_dict(include_timing=include_timing),
                               sort_keys=True) + "\n")
        for date, reason in report.skipped:
            f.write(json.dumps({"date": date, "skipped": reason},
                               sort_keys=True) + "\n")
    with open(paths["summary"], "w") as f:
        json.dump(report.summary(), f, sort_keys=True, indent=2)
        f.write("\n")
    with open(paths["series"], "w") as f:
        f.write("date,cumulative_profit_eur,cumulative_throughput_kwh\n")
        for date, cp, ct in report.series():
            f.write(f"{date},{cp!r},{ct!r}\n")
    return paths
