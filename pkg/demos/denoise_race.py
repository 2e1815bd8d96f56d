"""TV denoising of the 64x64 block image, five solvers on 40 evaluations.

Run:  python demos/denoise_race.py [outdir]
Writes traces and PGM images to ``outdir`` (default: no files).
"""
import sys
import warnings

from tkma.bench import CONFIG_DEFAULTS, cmd_denoise, config_from_dict
from tkma.core import shared_checkpoints, value_at

out = sys.argv[1] if len(sys.argv) > 1 else None
cfg = config_from_dict(dict(CONFIG_DEFAULTS, task="denoise", seed=2024, out=out), env={})
print(cfg.echo())

with warnings.catch_warnings():
    # the first momentum coefficient on this operator sits below the
    # guaranteed range; the run still works, so keep the output short
    warnings.simplefilter("ignore")
    res = cmd_denoise(cfg)

points = shared_checkpoints(*res.traces.values())
print(f"{'evals':>5s} " + " ".join(f"{k:>16s}" for k in res.traces))
for t in points[::4] + [points[-1]]:
    print(f"{t:5d} " + " ".join(f"{value_at(tr, t, 'quality'):10.3f} dB    " for tr in res.traces.values()))

print("\nobjective at the last shared checkpoint")
for k, tr in res.traces.items():
    print(f"  {k:16s} {value_at(tr, points[-1], 'objective'):14.1f}")
