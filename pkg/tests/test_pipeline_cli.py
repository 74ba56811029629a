import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from terratrack.cli import main
from terratrack.pipeline import RunConfig
from terratrack.prediction import MemoryBank
from terratrack.sim import AgentSpec, ScenarioConfig, SensorParams
from terratrack.sim.dataset import read_jsonl
from terratrack.sim.presets import FLAT, NOISELESS


def one_walker(duration=8.0) -> ScenarioConfig:
    return ScenarioConfig(
        seed=5, frame_rate=10.0, duration=duration, terrain=FLAT,
        agents=(AgentSpec(0, "person", ((8.0, -6.0), (22.0, 8.0)), ((0.0, 1.0),), loop=False),),
        noise=NOISELESS, sensor=SensorParams(static_points=1500, points_per_agent=80),
    )


def cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def digest(directory: Path) -> dict[str, str]:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(Path(directory).rglob("*")) if p.is_file()}


def assert_error(code, err, kind=None):
    assert code != 0
    lines = err.strip().splitlines()
    assert len(lines) == 1
    msg = json.loads(lines[0])
    assert "error" in msg and "message" in msg
    if kind is not None:
        assert msg["error"] == kind


@pytest.fixture(scope="module")
def walker_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("walker")
    cfg_path = root / "scenario.json"
    one_walker().save(cfg_path)
    assert main(["simulate", "--config", str(cfg_path), "--out", str(root / "data")]) == 0
    return root


def test_simulate_writes_dataset(walker_dataset):
    data = walker_dataset / "data"
    for name in ("dataset.json", "frames.jsonl", "gt.jsonl"):
        assert (data / name).exists()
    assert len(list(data.glob("cloud_*.xyz"))) == 80


def test_simulate_same_seed_is_identical(tmp_path, capsys, walker_dataset):
    code, _, _ = cli(capsys, "simulate", "--config", walker_dataset / "scenario.json", "--out", tmp_path / "again")
    assert code == 0
    assert digest(tmp_path / "again") == digest(walker_dataset / "data")


def test_simulate_rejects_duplicate_agent_ids(tmp_path, capsys):
    d = one_walker().to_dict()
    d["agents"] = d["agents"] * 2
    (tmp_path / "dup.json").write_text(json.dumps(d))
    code, _, err = cli(capsys, "simulate", "--config", tmp_path / "dup.json", "--out", tmp_path / "x")
    assert_error(code, err, "config")
    assert "duplicate" in err


def test_simulate_preset_and_frames(tmp_path, capsys):
    code, out, _ = cli(capsys, "simulate", "--preset", "identity", "--frames", 5, "--out", tmp_path / "p")
    assert code == 0 and json.loads(out)["frames"] == 5


def test_identity_run_and_eval(walker_dataset, tmp_path, capsys):
    data = walker_dataset / "data"
    code, out, _ = cli(capsys, "run", data, "--out", tmp_path / "run")
    assert code == 0
    for name in ("tracks.jsonl", "predictions.jsonl", "map.xyz", "mapping_report.json", "timing.json"):
        assert (tmp_path / "run" / name).exists()
    tracks = read_jsonl(tmp_path / "run" / "tracks.jsonl", "terratrack-tracks")
    ids = {t["track_id"] for r in tracks for t in r["tracks"]}
    assert len(ids) == 1
    code, out, _ = cli(capsys, "eval", "--run", tmp_path / "run", "--dataset", data)
    assert code == 0 and "tracking.MOTA" in out
    rep = json.loads((tmp_path / "run" / "eval_report.json").read_text())["run"]
    assert rep["tracking"]["MOTA"] == 1.0 and rep["tracking"]["IDsw"] == 0
    assert rep["tracking"]["MOTP"] < 1e-3
    assert rep["mapping"]["RR"] == 1.0 and rep["mapping"]["N_dp"] == 0
    assert rep["mapping"]["PR"] == 1.0 and rep["mapping"]["F1"] == 1.0
    assert rep["prediction"]["ADE"] < 1e-2


def test_run_is_deterministic(walker_dataset, tmp_path, capsys):
    data = walker_dataset / "data"
    for name in ("a", "b"):
        assert cli(capsys, "run", data, "--out", tmp_path / name)[0] == 0
    for name in ("tracks.jsonl", "predictions.jsonl", "map.xyz"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.parametrize("baseline, section, key, value", [
    ("fixed-gate", "tracker", "gate_a", 0.0),
    ("kf-only", "predictor", "use_memory", False),
    ("single-frame-removal", None, "single_frame_removal", True),
])
def test_baseline_flags(walker_dataset, tmp_path, capsys, baseline, section, key, value):
    code, _, _ = cli(capsys, "run", walker_dataset / "data", "--out", tmp_path / "r", "--baseline", baseline,
                     "--frames", 20)
    assert code == 0
    cfg = json.loads((tmp_path / "r" / "mapping_report.json").read_text())["config"]
    assert (cfg[section] if section else cfg)[key] == value


def test_eval_side_by_side(walker_dataset, tmp_path, capsys):
    data = walker_dataset / "data"
    cli(capsys, "run", data, "--out", tmp_path / "ours")
    cli(capsys, "run", data, "--out", tmp_path / "base", "--baseline", "single-frame-removal")
    code, out, _ = cli(capsys, "eval", "--run", tmp_path / "ours", "--run", tmp_path / "base", "--dataset", data,
                       "--out", tmp_path / "cmp")
    assert code == 0
    assert "base-ours" in out.splitlines()[0]
    assert (tmp_path / "cmp" / "summary.csv").read_text().startswith("run,section,metric,value")


def test_eval_missing_gt(walker_dataset, tmp_path, capsys):
    code, _, err = cli(capsys, "eval", "--run", walker_dataset, "--dataset", tmp_path)
    assert_error(code, err, "missing-gt")


def test_run_missing_dataset(tmp_path, capsys):
    code, _, err = cli(capsys, "run", tmp_path / "nope", "--out", tmp_path / "o")
    assert_error(code, err, "missing-dataset")


def test_usage_errors_are_single_line(capsys, tmp_path):
    assert_error(*cli(capsys)[::2], "usage")
    assert_error(*cli(capsys, "run", tmp_path, "--out", tmp_path, "--baseline", "nope")[::2], "usage")
    assert_error(*cli(capsys, "simulate", "--preset", "nope", "--out", tmp_path)[::2], "usage")


def test_bad_run_config(walker_dataset, tmp_path, capsys):
    (tmp_path / "rc.json").write_text(json.dumps({"tracker": {"confirm_hits": "three"}}))
    code, _, err = cli(capsys, "run", walker_dataset / "data", "--out", tmp_path / "o", "--config", tmp_path / "rc.json")
    assert_error(code, err, "config")
    (tmp_path / "rc.json").write_text(json.dumps({"trackr": {}}))
    code, _, err = cli(capsys, "run", walker_dataset / "data", "--out", tmp_path / "o", "--config", tmp_path / "rc.json")
    assert_error(code, err, "config")


def test_run_config_overrides_apply(walker_dataset, tmp_path, capsys):
    (tmp_path / "rc.json").write_text(json.dumps({"residual": {"s_threshold": 0.1}, "predictor": {"top_k": 3}}))
    assert cli(capsys, "run", walker_dataset / "data", "--out", tmp_path / "o", "--config", tmp_path / "rc.json",
               "--frames", 10)[0] == 0
    cfg = json.loads((tmp_path / "o" / "mapping_report.json").read_text())["config"]
    assert cfg["residual"]["s_threshold"] == 0.1 and cfg["predictor"]["top_k"] == 3


def test_run_config_round_trip():
    rc = RunConfig.for_scenario(10.0, 0.05).with_baseline("fixed-gate")
    assert RunConfig.from_dict(rc.to_dict()) == rc
    with pytest.raises(ValueError):
        RunConfig.from_dict({"predictor": {"capacity": 1.5}})
    with pytest.raises(ValueError):
        rc.with_baseline("other")


def test_seed_memory_straight_line(walker_dataset, tmp_path, capsys):
    code, out, _ = cli(capsys, "seed-memory", walker_dataset / "data", "--out", tmp_path / "m.dat")
    assert code == 0
    bank = MemoryBank.load(tmp_path / "m.dat")
    assert len(bank) == json.loads(out)["entries"] > 0
    f = bank.features / np.linalg.norm(bank.features, axis=1, keepdims=True)
    assert np.all(f @ f[0] > 0.999)
    code, out, _ = cli(capsys, "seed-memory", walker_dataset / "data", "--out", tmp_path / "c.dat", "--capacity", 3)
    assert code == 0 and len(MemoryBank.load(tmp_path / "c.dat")) == 3
    code, _, _ = cli(capsys, "run", walker_dataset / "data", "--out", tmp_path / "r", "--membank", tmp_path / "m.dat",
                     "--frames", 30, "--save-membank", tmp_path / "after.dat")
    assert code == 0 and len(MemoryBank.load(tmp_path / "after.dat")) >= len(bank)


def test_seed_memory_empty_dataset(tmp_path, capsys):
    one_walker(duration=0.0).save(tmp_path / "s.json")
    assert cli(capsys, "simulate", "--config", tmp_path / "s.json", "--out", tmp_path / "empty")[0] == 0
    code, out, err = cli(capsys, "seed-memory", tmp_path / "empty", "--out", tmp_path / "m.dat")
    assert code == 0 and json.loads(out)["entries"] == 0
    assert json.loads(err)["warning"] == "empty-bank"
    assert len(MemoryBank.load(tmp_path / "m.dat")) == 0


def test_bench_reports_percentiles(walker_dataset, tmp_path, capsys):
    code, out, _ = cli(capsys, "bench", "--dataset", walker_dataset / "data", "--frames", 10, "--repeats", 2,
                       "--out", tmp_path / "bench.json")
    assert code == 0
    res = json.loads(out)
    assert res["frames"] == 10 and res["repeats"] == 2
    assert set(res["summary_ms"]) == {"tracking", "prediction", "mapping", "total"}
    assert set(res["summary_ms"]["total"]) == {"mean", "p50", "p90", "p99", "max"}
    assert json.loads((tmp_path / "bench.json").read_text()) == res


def test_membank_errors(walker_dataset, tmp_path, capsys):
    (tmp_path / "bad.dat").write_bytes(b"garbage")
    code, _, err = cli(capsys, "run", walker_dataset / "data", "--out", tmp_path / "o", "--membank", tmp_path / "bad.dat")
    assert_error(code, err, "membank")
    code, _, err = cli(capsys, "run", walker_dataset / "data", "--out", tmp_path / "o", "--membank", tmp_path / "none.dat")
    assert_error(code, err, "missing-file")
