import json
import math

import numpy as np
import pytest

from tkma.bench import (CONFIG_DEFAULTS, REQUIRED, cmd_complete, cmd_denoise, cmd_verify,
                        config_from_dict, load_experiment, parse_experiment)
from tkma.cli import main
from tkma.io import TRACE_HEADER, ConfigError, pgm_read, pgm_write, trace_read
from tkma.theory import final_quartile_share

pytestmark = pytest.mark.filterwarnings("ignore::tkma.core.ThetaRangeWarning")


def cfg_of(env=None, **kw):
    return parse_experiment(json.dumps(kw), env={} if env is None else env)


def test_minimal_config_echoes_everything():
    cfg = cfg_of(task="denoise", seed=3)
    meta = cfg.echo()
    for key in ("task", "seed", "stream", "budget", "mu", "lam", "sigma", "n", "alpha_declared"):
        assert key in meta
    assert meta["budget"] == 40 and meta["mu"] == 10.0 and meta["lam"] == 0.999 / 4
    assert [s.name for s in cfg.algorithms] == ["TKMA", "FPPA", "FastKM", "HalpernHarmonic",
                                                "HalpernAdaptive"]
    assert cfg.algorithms[2].alpha_fkm == 50.0


def test_complete_defaults():
    cfg = cfg_of(task="complete", seed=3)
    assert cfg.budget == 200 and cfg.n == 100 and cfg.r == 30.0
    assert [s.name for s in cfg.algorithms][1] == "PGA"
    assert cfg.algorithms[2].alpha_fkm == 1000.0


def test_config_errors():
    with pytest.raises(ConfigError, match="lamda"):
        cfg_of(task="denoise", seed=1, lamda=0.2)
    with pytest.raises(ConfigError, match="'task'.*'seed'"):
        parse_experiment("{}", env={})
    with pytest.raises(ConfigError):
        cfg_of(task="plot", seed=1)
    with pytest.raises(ConfigError):
        cfg_of(task="denoise", seed=1, algorithms=["Nesterov"])
    with pytest.raises(ConfigError):
        cfg_of(task="denoise", seed=1, algorithms=["TKMA", "TKMA"])
    with pytest.raises(ConfigError):
        cfg_of(task="denoise", seed=1, algorithms=[{"algorithm": "TKMA", "t": 1.5}])
    with pytest.raises(ConfigError):
        cfg_of(task="denoise", seed=1, algorithms=[{"algorithm": "TKMA", "tt": 0.5}])
    with pytest.raises(ConfigError):
        cfg_of(task="denoise", seed=1, budget=-1)
    with pytest.raises(ConfigError):
        cfg_of(task="denoise", seed=1, algorithms=[{"algorithm": "FastKM", "s": 3.0}])


def test_solver_objects_and_labels():
    cfg = cfg_of(task="denoise", seed=1, algorithms=[
        {"algorithm": "TKMA", "t": 0.3, "label": "TKMA-0.3"}, "TKMA", "KM",
        {"algorithm": "FastKM", "alpha_fkm": 80}])
    assert [s.name for s in cfg.algorithms] == ["TKMA-0.3", "TKMA", "KM", "FastKM"]
    assert cfg.algorithms[0].t == 0.3 and cfg.algorithms[3].alpha_fkm == 80.0


def test_env_seed_override():
    cfg = parse_experiment('{"task": "denoise", "seed": 1}', env={"FP_SEED": "99"})
    assert cfg.seed == 99
    cfg = parse_experiment('{"task": "denoise"}', env={"FP_SEED": "0x10"})
    assert cfg.seed == 16
    with pytest.raises(ConfigError):
        parse_experiment('{"task": "denoise"}', env={"FP_SEED": "abc"})


def test_denoise_outputs(tmp_path):
    cfg = cfg_of(task="denoise", seed=2024, budget=10, n=16, out=str(tmp_path))
    res = cmd_denoise(cfg)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert "clean.pgm" in names and "noisy.pgm" in names and "trace_TKMA.csv" in names
    assert "denoised_FPPA.pgm" in names
    meta, rows = trace_read(tmp_path / "trace_TKMA.csv")
    assert meta["seed"] == "2024" and "fixture_sha256" in meta
    assert [r["t_applies"] for r in rows] == [2, 4, 6, 8, 10]
    assert all(r["theta"] is not None and r["theta_var_cum"] is not None for r in rows)
    _, rows = trace_read(tmp_path / "trace_FPPA.csv")
    assert all(r["theta"] is None for r in rows) and len(rows) == 10
    assert pgm_read(tmp_path / "denoised_TKMA.pgm").shape == (16, 16)
    assert set(res.traces) == {"TKMA", "FPPA", "FastKM", "HalpernHarmonic", "HalpernAdaptive"}


def test_denoise_zero_budget_writes_headers_only(tmp_path):
    cmd_denoise(cfg_of(task="denoise", seed=1, budget=0, n=8, out=str(tmp_path)))
    for p in tmp_path.glob("trace_*.csv"):
        body = [l for l in p.read_text().splitlines() if not l.startswith("#")]
        assert body == [",".join(TRACE_HEADER)]


def test_denoise_without_noise():
    res = cmd_denoise(cfg_of(task="denoise", seed=1, sigma=0.0, budget=30, n=32))
    tr = res.trace("FPPA")
    assert np.all(np.isfinite(tr.column("quality")))
    ofv = tr.column("objective")
    assert np.all(np.diff(ofv[1:]) <= 1e-10 * np.maximum(1.0, ofv[1:-1]))
    assert np.array_equal(res.artifacts["noisy"], res.artifacts["clean"])


def test_denoise_user_image(tmp_path):
    img = np.tile(np.linspace(0, 255, 16), (16, 1))
    pgm_write(img, tmp_path / "in.pgm")
    res = cmd_denoise(cfg_of(task="denoise", seed=1, budget=4), pgm_read(tmp_path / "in.pgm").astype(float))
    assert res.artifacts["clean"].shape == (16, 16)
    with pytest.raises(ValueError):
        cmd_denoise(cfg_of(task="denoise", seed=1, budget=4), np.zeros((4, 5)))


def test_fair_budget_and_theta_flattening():
    res = cmd_denoise(cfg_of(task="denoise", seed=2024, budget=39, n=32))
    finals = [tr.records[-1].t_applies for tr in res.traces.values()]
    assert max(finals) - min(finals) <= 1
    assert final_quartile_share(res.trace("TKMA").column("theta_var_cum")) <= 0.10


@pytest.mark.xfail(strict=True, reason="plain FPPA stays ~0.02 dB ahead at 20 evaluations on this "
                   "fixture; TKMA wins on objective but not on PSNR")
def test_denoise_budget_twenty_psnr_vs_fppa():
    res = cmd_denoise(cfg_of(task="denoise", seed=2024, budget=20))
    assert res.trace("TKMA").records[-1].quality >= res.trace("FPPA").records[-1].quality
    assert res.trace("TKMA").records[-1].objective <= res.trace("FPPA").records[-1].objective


def test_threads_do_not_change_traces():
    a = cmd_denoise(cfg_of(task="denoise", seed=5, budget=12, n=16))
    b = cmd_denoise(cfg_of(task="denoise", seed=5, budget=12, n=16, threads=4))
    assert all(a.traces[k].records == b.traces[k].records for k in a.traces)


def test_complete_small_full_observation(tmp_path):
    cfg = cfg_of(task="complete", seed=4, n=4, rank=4, fraction=1.0, r=1e6, budget=300,
                 out=str(tmp_path))
    res = cmd_complete(cfg)
    for label, tr in res.traces.items():
        assert tr.records[-1].objective <= 1e-12, label
    assert (tmp_path / "completed_TKMA.csv").exists()
    _, rows = trace_read(tmp_path / "trace_PGA.csv")
    assert rows[0]["quality"] is not None


def test_complete_rank_fifty_schema(tmp_path):
    res = cmd_complete(cfg_of(task="complete", seed=2024, rank=50, budget=10, out=str(tmp_path)))
    assert res.meta["observed"] == 2000
    meta, rows = trace_read(tmp_path / "trace_TKMA.csv")
    assert meta["rank"] == "50" and len(rows) == 5


def test_verify_exit_codes():
    rep, code = cmd_verify(200, seed=1)
    assert code == 0 and rep.passed
    rep, code = cmd_verify(200, seed=1, build_alpha=0.9, alphas=(0.3,))
    assert code == 1 and rep.check("theta range [1-2a, 1]").violations > 0
    rep, code = cmd_verify(0)
    assert code == 0 and rep.warnings


def test_cli_round_trip(tmp_path, capsys):
    cfg = tmp_path / "d.json"
    cfg.write_text(json.dumps({"task": "denoise", "seed": 1, "budget": 6, "n": 16}))
    assert main(["denoise", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "trace_TKMA.csv").exists()
    assert "TKMA" in capsys.readouterr().out
    cfg.write_text(json.dumps({"task": "complete", "seed": 1, "budget": 4, "n": 10, "rank": 2}))
    assert main(["complete", "--config", str(cfg), "--out", str(tmp_path / "c")]) == 0
    assert main(["denoise", "--config", str(cfg)]) == 2  # task mismatch
    cfg.write_text('{"task": "denoise", "seed": 1, "lamda": 3}')
    assert main(["denoise", "--config", str(cfg)]) == 2
    assert "lamda" in capsys.readouterr().err


def test_cli_verify(capsys):
    assert main(["verify", "--trials", "100"]) == 0
    assert "total violations: 0" in capsys.readouterr().out
    assert main(["verify", "--trials", "100", "--alpha", "0.3", "--build-alpha", "0.9"]) == 1
    assert main(["verify", "--trials", "0"]) == 0
    assert "vacuously" in capsys.readouterr().out


def test_load_experiment_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"task": "verify", "seed": 0}')
    assert load_experiment(p, env={}).task == "verify"
