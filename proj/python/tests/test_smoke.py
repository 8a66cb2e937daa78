import json
import math
from pathlib import Path

import numpy as np
import pytest

import mpcrl

CONFIG = Path(__file__).resolve().parents[2] / "config" / "default.toml"


@pytest.fixture(scope="module")
def cfg():
    return mpcrl.RunConfig.load(str(CONFIG))


@pytest.fixture(scope="module")
def plant(cfg):
    return mpcrl.Plant(cfg)


def tiny(cfg_path=CONFIG):
    c = mpcrl.RunConfig.load(str(cfg_path))
    c.samples_per_dim = 2
    c.envelope = 0.3
    c.realizations = 1
    c.grid_bins = 2
    c.runs = 2
    c.duration = 0.2
    c.gust_phase = 0.1
    return c


def test_equilibrium_is_fixed(plant):
    x = np.zeros(5)
    assert np.array_equal(plant.deriv(x, 0.0), x)
    assert np.array_equal(plant.step_euler(x, 0.0), x)
    assert plant.sample_time == 1e-3


def test_taylor_tracks_rk4(cfg, plant):
    x = np.array([0.01, 0.05, -0.1, 0.3, 0.05])
    T = plant.sample_time
    ref = plant.integrate_rk4(x, 0.1, 0.5, 2 * T, 100)
    scale = np.array([0.02, 0.15, 0.15, 1.5, 0.35])
    assert np.max(np.abs((plant.step_taylor2(x, 0.1, 0.5) - ref) / scale)) < 0.02


def test_linearization_is_exact_at_its_state(cfg, plant):
    x = np.array([0.005, -0.02, 0.01, 0.1, 0.02])
    A, B, E, c = plant.linearize(x, cfg)
    assert np.allclose(A @ x + B * x[4] + c, plant.step_euler(x, x[4]), atol=1e-14)


def test_gust_is_deterministic_and_bounded(cfg):
    a = mpcrl.dryden_gust(7, 1.0, cfg)
    assert a == mpcrl.dryden_gust(7, 1.0, cfg)
    assert len(a) == 1000
    assert max(abs(w) for w in a) <= 3.0


def test_mpc_and_bounds_at_equilibrium(cfg, plant):
    sol = mpcrl.solve_mpc(plant, np.zeros(5), [], cfg)
    assert sol["feasible"]
    assert max(abs(u) for u in sol["inputs"]) <= 1e-12
    verified, lo, hi, star = mpcrl.safe_bounds(plant, np.zeros(5), [0.0] * 500, cfg)
    assert verified and lo == -0.3 and hi == 0.3


def test_config_errors_and_hash(cfg):
    with pytest.raises(mpcrl.ConfigError):
        mpcrl.RunConfig.load("/nonexistent.toml")
    with pytest.raises(mpcrl.ConfigError):
        mpcrl.RunConfig.parse("seed = [", str(CONFIG.parent))
    other = mpcrl.RunConfig.load(str(CONFIG))
    other.jobs = 4
    assert other.hash() == cfg.hash()
    other.seed = 99
    assert other.hash() != cfg.hash()


def test_validate_model_reports(cfg):
    c = mpcrl.RunConfig.load(str(CONFIG))
    report = json.loads(mpcrl.validate_model(c))
    assert report["taylor"]["max_relative"] < 0.02


def test_train_and_evaluate(tmp_path):
    c = tiny()
    dep = mpcrl.train(c, str(tmp_path / "train"))
    assert dep.transitions > 0
    assert dep.certification_failures == 0
    assert (tmp_path / "train" / "qtable.json").exists()
    u = dep.policy(np.zeros(5))
    assert -0.3 <= u <= 0.3
    means = mpcrl.evaluate(c, dep, str(tmp_path / "eval"))
    assert set(means) == {"lpv", "rl", "mpcrl"}
    assert means["mpcrl"]["violation_count"] == 0
    assert means["mpcrl"]["bound_violations"] == 0
    assert all(math.isfinite(v) for v in means["lpv"].values())
    first = (tmp_path / "eval" / "metrics_summary.csv").read_text().splitlines()[0]
    assert first == "# config_hash=" + c.hash()
