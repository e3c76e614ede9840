import json
import math
import random

import pytest

import lamarl


def pp_config(limit=20):
    return {"task": "PredatorPrey", "size": 12, "n_agents": 2, "n_preys": 1, "episode_limit": limit}


def test_env_round_trip():
    env = lamarl.GridEnv(pp_config())
    obs = env.reset(3)
    assert len(obs) == env.n_agents == 2
    assert all(len(o) == env.obs_dim for o in obs)
    assert "Prey" in env.vocabulary
    assert env.reset(3) == obs
    steps = 0
    done = False
    while not done:
        obs, reward, done, success = env.step([random.randrange(env.n_actions) for _ in range(2)])
        assert reward <= 0 or success
        steps += 1
    assert steps <= 20
    snap = env.snapshot()
    assert json.loads(json.dumps(snap)) == snap


def test_descriptions_use_task_words():
    env = lamarl.GridEnv(pp_config())
    env.reset(0)
    for agent in range(env.n_agents):
        words = env.describe(agent).split()
        assert len(words) < 8
        assert all(w in env.vocabulary for w in words)
    with pytest.raises(IndexError):
        env.describe(5)


def test_step_requires_one_action_per_agent():
    env = lamarl.GridEnv(pp_config())
    env.reset(0)
    with pytest.raises(ValueError):
        env.step([0])


def test_silhouette_matches_scikit_learn():
    metrics = pytest.importorskip("sklearn.metrics")
    rng = random.Random(5)
    points, labels = [], []
    for i in range(120):
        c = i % 3
        points.append([rng.gauss(2 * c, 1), rng.gauss(0, 1), rng.gauss(-c, 1)])
        labels.append(f"c{c}")
    assert lamarl.silhouette_score(points, labels) == pytest.approx(
        metrics.silhouette_score(points, labels), rel=1e-12)


def test_action_change():
    assert lamarl.action_change(0.6, 0.3) == 0.6 / 0.3 - 1
    with pytest.raises(Exception):
        lamarl.action_change(0.5, 0.0)


def test_train_and_evaluate_through_the_cli(tmp_path):
    config = {
        "version": 1,
        "grid": pp_config(10),
        "variant": "LAMARL",
        "model": {"hidden_dim": 8},
        "train": {"n_parallel_rollouts": 4, "ppo_epochs": 1, "total_env_steps": 40, "lang_batch": 16},
        "seeds": [2],
        "out_dir": str(tmp_path / "runs"),
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    code, out, err = lamarl.run_cli(["train", "--config", str(path)])
    assert code == 0, err
    run = tmp_path / "runs" / "seed_2"
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["command"] == "train"

    team = lamarl.Team.load(str(run / "checkpoints" / "final"))
    assert team.variant == "LAMARL" and team.n_agents == 2
    report = lamarl.evaluate_success(team, pp_config(10), 20, seed=1)
    assert report["episodes"] == 20
    assert 0.0 <= report["success_rate"] <= 1.0
    assert report == lamarl.evaluate_success(team, pp_config(10), 20, seed=1)

    code, out, err = lamarl.run_cli(["embeddings", "--checkpoint", str(run / "checkpoints" / "final"),
                                     "--observations", "60", "--out", str(tmp_path / "emb")])
    assert code == 0, err
    records = lamarl.read_embeddings(str(tmp_path / "emb" / "embeddings_post-obs-encoder.jsonl"))
    assert len(records) >= 60
    assert all(not math.isnan(x) for r in records for x in r["vector"])


def test_usage_errors_exit_with_two():
    code, _, err = lamarl.run_cli(["train"])
    assert code == 2
    assert "config" in err
