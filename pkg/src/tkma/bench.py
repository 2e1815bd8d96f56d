"""Algorithm races on a shared evaluation budget, plus the verify suite.

A race runs several solvers on one immutable problem, each limited to the
same number of operator evaluations, and writes one CSV trace per solver.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import completion as cmp
from . import tv
from .core import Algorithm, RunTrace, SolverConfig, run
from .fixtures import block_image, image_digest
from .io import (ConfigError, load_config_text, matrix_write, parse_config, pgm_write,
                 trace_write)
from .oracles import (l1_ball_grid_projection, nuclear_ball_competitors, nuclear_ball_margin,
                      svd_defects)
from .prox import nuclear_norm, project_l1_ball, project_nuclear_ball, svd
from .rng import gaussian_array, rng_new
from .theory import VerifyReport, theory_suite

TASKS = ("denoise", "complete", "verify")

# key -> default; None means "task dependent" and is resolved at load
CONFIG_DEFAULTS = {
    "task": None,
    "seed": None,
    "stream": 0,
    "budget": None,
    "out": None,
    "algorithms": None,
    "t": 0.5,
    "s": 1.0,
    "alpha_fkm": None,
    "alpha_declared": 0.5,
    "threads": 1,
    # denoise
    "mu": 10.0,
    "lam": 0.999 / 4,
    "sigma": 15.0,
    "n": None,
    # complete
    "rank": 30,
    "fraction": 0.2,
    "r": None,
    "step": 1.99,
    "svd": "lapack",
    # verify
    "trials": 10_000,
    "build_alpha": None,
}
REQUIRED = ("task", "seed")

SOLVER_KEYS = {"algorithm": None, "label": None, "t": None, "s": None,
               "alpha_fkm": None, "lambda_relax": None}

DEFAULT_BUDGET = {"denoise": 40, "complete": 200, "verify": 0}
DEFAULT_N = {"denoise": 64, "complete": 100, "verify": 0}
DEFAULT_ALPHA_FKM = {"denoise": 50.0, "complete": 1000.0, "verify": 50.0}
# the Picard baseline carries the application's customary name
PICARD_LABEL = {"denoise": "FPPA", "complete": "PGA", "verify": "Picard"}
DEFAULT_RACE = (Algorithm.TKMA, Algorithm.PICARD, Algorithm.FAST_KM,
                Algorithm.HALPERN_HARMONIC, Algorithm.HALPERN_ADAPTIVE)


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    seed: int
    stream: int = 0
    budget: int = 40
    out: Optional[str] = None
    algorithms: tuple = ()
    alpha_declared: float = 0.5
    threads: int = 1
    mu: float = 10.0
    lam: float = 0.999 / 4
    sigma: float = 15.0
    n: int = 64
    rank: int = 30
    fraction: float = 0.2
    r: float = 30.0
    step: float = 1.99
    svd: str = "lapack"
    trials: int = 10_000
    build_alpha: Optional[float] = None
    extra: dict = field(default_factory=dict, compare=False)

    def echo(self) -> dict:
        """Resolved values in a fixed order, for trace headers."""
        keys = ["task", "seed", "stream", "budget", "alpha_declared"]
        if self.task == "denoise":
            keys += ["mu", "lam", "sigma", "n"]
        elif self.task == "complete":
            keys += ["n", "rank", "fraction", "r", "step", "svd"]
        else:
            keys += ["trials", "build_alpha"]
        meta = {k: getattr(self, k) for k in keys}
        for sc in self.algorithms:
            meta[f"solver.{sc.name}"] = (f"algorithm={sc.algorithm.value} t={sc.t} s={sc.s} "
                                         f"alpha_fkm={sc.alpha_fkm} lambda_relax={sc.lambda_relax}")
        return meta


def _solver(entry, task: str, doc: dict, budget: int) -> SolverConfig:
    if isinstance(entry, str):
        entry = {"algorithm": entry}
    if not isinstance(entry, dict):
        raise ConfigError(f"algorithm entry must be a name or an object, got {entry!r}")
    unknown = sorted(set(entry) - set(SOLVER_KEYS))
    if unknown:
        raise ConfigError("unknown algorithm key(s): " + ", ".join(repr(k) for k in unknown))
    if "algorithm" not in entry:
        raise ConfigError("algorithm entry is missing 'algorithm'")
    name = entry["algorithm"]
    if name in ("FPPA", "PGA"):
        name = Algorithm.PICARD.value
    try:
        algo = Algorithm(name)
    except ValueError:
        raise ConfigError(f"unknown algorithm {name!r}") from None
    label = entry.get("label")
    if label is None and algo is Algorithm.PICARD:
        label = PICARD_LABEL[task]

    def pick(key, fallback):
        v = entry.get(key)
        return fallback if v is None else v

    try:
        return SolverConfig(
            algorithm=algo,
            t=float(pick("t", doc["t"])),
            s=float(pick("s", doc["s"])),
            alpha_fkm=float(pick("alpha_fkm", doc["alpha_fkm"])),
            lambda_relax=float(pick("lambda_relax", 0.5)),
            max_t_applies=budget,
            seed=doc["seed"],
            label=label,
        )
    except ValueError as exc:
        raise ConfigError(f"invalid solver {name!r}: {exc}") from None


def config_from_dict(doc: dict, env: Optional[dict] = None) -> ExperimentConfig:
    """Resolve defaults and validate.  ``FP_SEED`` in ``env`` overrides the seed."""
    env = os.environ if env is None else env
    doc = dict(doc)
    if env.get("FP_SEED") not in (None, ""):
        try:
            doc["seed"] = int(env["FP_SEED"], 0)
        except ValueError:
            raise ConfigError(f"FP_SEED must be an integer, got {env['FP_SEED']!r}") from None
    task = doc["task"]
    if task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}, got {task!r}")
    if not isinstance(doc["seed"], int) or not 0 <= doc["seed"] < 2 ** 64:
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {doc['seed']!r}")
    if not isinstance(doc["stream"], int) or not 0 <= doc["stream"] < 2 ** 64:
        raise ConfigError(f"stream must be a 64-bit unsigned integer, got {doc['stream']!r}")
    budget = DEFAULT_BUDGET[task] if doc["budget"] is None else doc["budget"]
    if not isinstance(budget, int) or budget < 0:
        raise ConfigError(f"budget must be a nonnegative integer, got {budget!r}")
    if doc["alpha_fkm"] is None:
        doc["alpha_fkm"] = DEFAULT_ALPHA_FKM[task]
    n = DEFAULT_N[task] if doc["n"] is None else doc["n"]
    rank = int(doc["rank"])
    r = float(rank if doc["r"] is None else doc["r"])
    names = doc["algorithms"]
    if names is None:
        names = [a.value for a in DEFAULT_RACE]
    if not isinstance(names, list):
        raise ConfigError("algorithms must be a list")
    solvers = tuple(_solver(e, task, doc, budget) for e in names)
    labels = [s.name for s in solvers]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"duplicate algorithm labels {labels}; set 'label' to disambiguate")
    for s in solvers:
        if s.algorithm is Algorithm.FAST_KM and s.s > 1.0 / float(doc["alpha_declared"]):
            raise ConfigError(f"Fast KM needs s <= 1/alpha_declared, got s={s.s}")
    if doc["svd"] not in ("lapack", "jacobi"):
        raise ConfigError(f"svd must be 'lapack' or 'jacobi', got {doc['svd']!r}")
    return ExperimentConfig(
        task=task, seed=doc["seed"], stream=doc["stream"], budget=budget, out=doc["out"],
        algorithms=solvers, alpha_declared=float(doc["alpha_declared"]),
        threads=max(1, int(doc["threads"])), mu=float(doc["mu"]), lam=float(doc["lam"]),
        sigma=float(doc["sigma"]), n=int(n), rank=rank, fraction=float(doc["fraction"]), r=r,
        step=float(doc["step"]), svd=doc["svd"], trials=int(doc["trials"]),
        build_alpha=None if doc["build_alpha"] is None else float(doc["build_alpha"]),
    )


def parse_experiment(text: str, env: Optional[dict] = None) -> ExperimentConfig:
    env = os.environ if env is None else env
    required = [k for k in REQUIRED if not (k == "seed" and env.get("FP_SEED"))]
    return config_from_dict(parse_config(text, CONFIG_DEFAULTS, required), env)


def load_experiment(path, env: Optional[dict] = None) -> ExperimentConfig:
    return parse_experiment(load_config_text(path), env)


# ---------------------------------------------------------------------------
# races
# ---------------------------------------------------------------------------

@dataclass
class RaceResult:
    config: ExperimentConfig
    traces: dict
    meta: dict
    artifacts: dict = field(default_factory=dict)

    def trace(self, label: str) -> RunTrace:
        return self.traces[label]


def _race(cfg: ExperimentConfig, T, x0, hooks) -> dict:
    """Run every solver; ``hooks(label)`` returns ``(objective, quality)``."""
    def one(sc):
        obj, qual = hooks(sc.name)
        return sc.name, run(T, x0, sc, obj, qual)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(one, cfg.algorithms))
    else:
        results = [one(sc) for sc in cfg.algorithms]
    return dict(results)


def _write_traces(out: Path, traces: dict, meta: dict) -> dict:
    paths = {}
    for label, tr in traces.items():
        p = out / f"trace_{label}.csv"
        trace_write(label, tr.records, p, meta)
        paths[label] = p
    return paths


def cmd_denoise(cfg: ExperimentConfig, image=None) -> RaceResult:
    """Noise the image, race the solvers on the dual operator, export results.

    ``image`` defaults to the built-in block fixture of side ``cfg.n``.
    """
    clean = block_image(cfg.n) if image is None else np.asarray(image, dtype=np.float64)
    if clean.ndim != 2 or clean.shape[0] != clean.shape[1]:
        raise ValueError(f"square image required, got shape {clean.shape}")
    rng = rng_new(cfg.seed, cfg.stream)
    noisy = tv.add_gaussian_noise(clean, cfg.sigma, rng)
    prob = tv.DenoiseProblem(noisy, cfg.mu, cfg.lam)
    T = prob.operator(cfg.alpha_declared)
    obj = tv.objective_hook(prob)
    qual = tv.psnr_hook(prob, clean)
    traces = _race(cfg, T, prob.initial_dual(), lambda _: (obj, qual))
    meta = cfg.echo()
    meta["fixture_sha256"] = image_digest(clean)
    res = RaceResult(cfg, traces, meta)
    res.artifacts["clean"] = clean
    res.artifacts["noisy"] = noisy
    res.artifacts["problem"] = prob
    for label, tr in traces.items():
        res.artifacts[f"denoised_{label}"] = tv.vector_to_image(tv.recover(tr.x, prob), prob.n)
    if cfg.out is not None:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_traces(out, traces, meta)
        pgm_write(clean, out / "clean.pgm")
        pgm_write(noisy, out / "noisy.pgm")
        for label in traces:
            pgm_write(res.artifacts[f"denoised_{label}"], out / f"denoised_{label}.pgm")
    return res


def cmd_complete(cfg: ExperimentConfig) -> RaceResult:
    rng = rng_new(cfg.seed, cfg.stream)
    prob = cmp.generate_problem(cfg.n, cfg.rank, cfg.fraction, rng, cfg.r, cfg.step)
    T = prob.operator(cfg.alpha_declared, cfg.svd)
    x0 = cmp.initial_point(prob).reshape(-1)
    obj = cmp.objective_hook(prob)
    traces = _race(cfg, T, x0, lambda _: (obj, cmp.RelativeErrorHook(x0)))
    meta = cfg.echo()
    meta["observed"] = len(prob.mask)
    meta["truth_sha256"] = image_digest(prob.truth)
    res = RaceResult(cfg, traces, meta)
    res.artifacts["problem"] = prob
    for label, tr in traces.items():
        res.artifacts[f"completed_{label}"] = tr.x.reshape(prob.n, prob.n)
    if cfg.out is not None:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_traces(out, traces, meta)
        for label in traces:
            matrix_write(res.artifacts[f"completed_{label}"], out / f"completed_{label}.csv")
    return res


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def oracle_suite(seed: int = 0, l1_instances: int = 100, nuclear_instances: int = 20,
                 svd_sizes=(1, 2, 3, 5, 8, 16, 40, 100), stream: int = 13) -> VerifyReport:
    """Projection and SVD routines against the brute-force references."""
    report = VerifyReport()
    rng = rng_new(seed, stream)
    chk = report.check("l1 projection vs grid")
    for _ in range(l1_instances):
        v = 3.0 * gaussian_array(rng, 2)
        r = 0.5 + float(np.abs(gaussian_array(rng, 1))[0])
        err = float(np.abs(project_l1_ball(v, r) - l1_ball_grid_projection(v, r)).max())
        chk.record(1e-3 - err)
    chk = report.check("nuclear projection vs grid")
    C = nuclear_ball_competitors(1.0)
    done = 0
    while done < nuclear_instances:
        X = 2.0 * gaussian_array(rng, 4).reshape(2, 2)
        if nuclear_norm(X) <= 1.0:
            continue
        chk.record(nuclear_ball_margin(X, project_nuclear_ball(X, 1.0), 1.0, C) + 1e-3)
        done += 1
    for method in ("lapack", "jacobi"):
        chk = report.check(f"svd invariants ({method})")
        for n in svd_sizes:
            X = gaussian_array(rng, n * n).reshape(n, n)
            d = svd_defects(X, svd(X, method))
            chk.record(1e-9 - max(d.values()))
    return report


def cmd_verify(trials: int = 10_000, seed: int = 0, build_alpha: Optional[float] = None,
               alphas=(0.1, 0.25, 0.4, 0.5)) -> tuple:
    """Theory and oracle checks; returns ``(report, exit_code)``.

    The exit code is 0 exactly when no check recorded a violation.
    """
    report = theory_suite(trials, seed, alphas=alphas, build_alpha=build_alpha)
    if trials > 0:
        report.merge(oracle_suite(seed))
    return report, 0 if report.passed else 1
