import json
import math
import random

import pytest

import diffadapt as da


def test_entropy():
    assert da.token_entropy([0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-12)
    assert da.token_entropy([1.0]) == 0.0
    assert da.token_entropy([0.25] * 4) == pytest.approx(math.log(4), abs=1e-12)
    with pytest.raises(ValueError):
        da.token_entropy([0.5, 0.6])
    assert da.mean_entropy([0.2, 0.4]) == pytest.approx(0.3)
    assert da.correctness_rate([True, False, True, True]) == 0.75


def test_labeling():
    t = (0.85, 0.35, 0.60)
    assert da.assign_label(0.90, 0.30, *t) == "Normal"
    assert da.assign_label(0.50, 0.20, *t) == "Hard"
    assert da.assign_label(0.90, 0.50, *t) == "Easy"
    assert da.assign_label(0.70, 0.30, *t) == "Easy"
    assert da.assign_label(0.85, 0.35, *t) == "Normal"
    assert da.default_thresholds("Qwen3-4B") == (0.88, 0.32, 0.65)


def test_strategy():
    easy = da.resolve_strategy("Easy", 1000)
    assert easy["max_tokens"] == 400
    assert easy["temperature"] == 0.5
    normal = da.resolve_strategy("Normal", 1000)
    assert normal["top_p"] == 0.95
    assert da.resolve_strategy("Hard", 1000)["max_tokens"] == 500
    assert da.budget("Qwen3-4B", "gsm8k") == 1500
    with pytest.raises(ValueError):
        da.resolve_strategy("Easy", 0)


def test_verification():
    assert da.extract_answer("so \\boxed{42}") == "42"
    assert da.verdict("\\boxed{1/2}", "0.5")


def test_oracle_and_savings():
    assert da.oracle_select([("Easy", True, 200), ("Normal", True, 560), ("Hard", False, 510)]) == "Easy"
    assert da.oracle_select([("Easy", False, 800), ("Normal", True, 600), ("Hard", True, 600)]) == "Hard"
    assert da.token_savings({"b": (100.0, 80.0)}) == 20.0
    assert da.token_savings({"a": (100.0, 80.0), "b": (200.0, 240.0)}) == 0.0


def test_probe_roundtrip(tmp_path):
    rnd = random.Random(0)
    feats, labels = [], []
    for k, name in enumerate(["Easy", "Normal", "Hard"]):
        for _ in range(40):
            x = [rnd.gauss(0, 0.1) for _ in range(6)]
            x[k] += 3.0
            feats.append(x)
            labels.append(name)
    r = da.train_probe(feats, labels, epochs=60, hidden_dim=16, seed=3)
    assert r["train_accuracy"] >= 0.95
    d, h, params = r["input_dim"], r["hidden_dim"], r["params"]
    assert da.probe_predict(d, h, params, feats[0]) == "Easy"
    probs = da.probe_forward(d, h, params, feats[-1])
    assert sum(probs) == pytest.approx(1.0)
    path = str(tmp_path / "probe.bin")
    da.save_probe(path, d, h, params, "test/d6")
    loaded = da.load_probe(path)
    assert loaded["params"] == params
    assert loaded["provider_fingerprint"] == "test/d6"


def test_feature_file_interop(tmp_path):
    path = str(tmp_path / "f.dffv")
    entries = {"q1": [0.5, -1.0, 2.0], "q2": [0.0, 0.25, 1e-3]}
    da.write_dffv(path, 3, entries, {"model": "toy", "position_rule": "last_prompt_token"})
    got = da.read_feature_file(path)
    assert got["dim"] == 3
    assert [e["id"] for e in got["entries"]] == ["q1", "q2"]
    assert got["entries"][0]["values"] == [0.5, -1.0, 2.0]
    assert got["fingerprint"] == "toy@last_prompt_token/d3"
    dim, vectors, trailer = da.read_dffv(path)
    assert dim == 3 and trailer["model"] == "toy"
    assert vectors["q2"][1] == 0.25
    with pytest.raises(ValueError):
        da.write_dffv(path, 2, entries)


def test_simulator():
    problem = {"id": "x-r1-0", "question": "q", "gold_answer": "7", "difficulty_rating": 1}
    a = da.sim_complete(problem, "Easy", 32768, seed=1)
    b = da.sim_complete(problem, "Easy", 32768, seed=1)
    assert a == b
    assert a["strategy_id"] == "Easy"
    assert 1 <= a["completion_tokens"] <= 32768
    assert len(da.sim_representation(json.dumps(problem), 1)) == 16


def test_cli(tmp_path):
    out = str(tmp_path / "run")
    assert da.run_command(["synth-problems", "--per-rating", "2", "--out", out]) == 0
    assert (tmp_path / "run" / "problems.jsonl").exists()
    assert da.run_command(["simulate-curve", "--bogus"]) == 2
