"""Low-rank completion of a 100x100 matrix from 20% of its entries.

Run:  python demos/completion_race.py [rank]
"""
import sys
import warnings

from tkma.bench import CONFIG_DEFAULTS, cmd_complete, config_from_dict
from tkma.core import value_at

rank = int(sys.argv[1]) if len(sys.argv) > 1 else 30
cfg = config_from_dict(dict(CONFIG_DEFAULTS, task="complete", seed=2024, rank=rank), env={})

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    res = cmd_complete(cfg)
print("observed entries:", res.meta["observed"])

tk, pga = res.trace("TKMA"), res.trace("PGA")
print(f"{'evals':>5s} {'TKMA ofv':>14s} {'PGA ofv':>14s} {'difference':>12s} {'TKMA RE':>10s}")
for t in (2, 10, 20, 30, 40, 60, 100, 200):
    a, b = value_at(tk, t, "objective"), value_at(pga, t, "objective")
    print(f"{t:5d} {a:14.6f} {b:14.6f} {a - b:12.3e} {value_at(tk, t, 'quality'):10.2e}")

# both plain and momentum runs reach the same fixed point; near it the
# objective gap is at rounding level and can flip sign
for k, tr in res.traces.items():
    print(f"  {k:16s} stopped: {tr.status:13s} after {tr.records[-1].t_applies} evaluations")
