"""Generate a week of synthetic market data and compare three bidding
strategies on it: arbitrage only, joint arbitrage + reserve, and joint
bidding with the limited-arbitrage restriction.

Run:  python3 demos/synthetic_backtest.py
"""

import tempfile

import numpy as np

from storagebid import (
    Dataset,
    ExperimentConfig,
    ModelOptions,
    StorageParams,
    TimeGrid,
    UncertaintyBudget,
    generate_synthetic_dataset,
    run_backtest,
)

battery = StorageParams(x_min=-50.0, x_max=50.0, y_min=10.0, y_max=90.0,
                        eta_c=0.92, eta_d=0.92)
grid = TimeGrid(dt_hours=1.0, K=24)
budget = UncertaintyBudget(kind="total_budget", gamma=2.0)

root = tempfile.mkdtemp(prefix="storagebid_demo_")
generate_synthetic_dataset(root, seed=42, days=7, gamma=2.0)
data = Dataset(root)
print(f"synthetic data in {root}: {len(data.dates())} days\n")

strategies = {
    "arbitrage only": ModelOptions(variant="arbitrage_only",
                                   fcr_enabled=False, da_block_len=1),
    "joint": ModelOptions(variant="restriction", fcr_block_len=4,
                          da_block_len=1),
    "joint, limited arbitrage": ModelOptions(variant="restriction",
                                             fcr_block_len=4,
                                             da_block_len=1,
                                             limited_arbitrage=True),
}

print(f"{'strategy':28s} {'profit/day':>11s} {'reserve':>8s} "
      f"{'arbitrage':>10s} {'throughput':>11s}")
for name, opts in strategies.items():
    cfg = ExperimentConfig(params=battery, grid=grid, budget=budget,
                           options=opts, gap_target=0.1)
    rep = run_backtest(cfg, data)
    s = rep.summary()
    print(f"{name:28s} {s['mean_profit_total']:9.2f} € "
          f"{s['mean_profit_fcr']:6.2f} € {s['mean_profit_dayahead']:8.2f} € "
          f"{s['mean_throughput']:9.1f} kWh")

print("\nreserve availability payments dominate; the limited-arbitrage "
      "variant trades a little profit for a simpler bid schedule.")
