import numpy as np
import pytest

from terratrack.evaluation import (
    AlignmentError,
    PredictionEval,
    VoxelAccumulator,
    evaluate_predictions,
    evaluate_tracking,
    future_truth,
    map_summary,
    summary_table,
)
from terratrack.metrics import EmptyOriginal, MapEvalCounts
from terratrack.sim import GroundTruthFrame
from terratrack.sim.simulator import STATIC_LABEL, AgentState


def agent(gid, x, visible=True):
    return AgentState(gid, "person", np.array([x, 0.0, 0.0]), np.zeros(3), 0.0, np.ones(3), visible)


def gts(n, speed=0.1):
    return [GroundTruthFrame(i, i / 10, [agent(0, speed * i)]) for i in range(n)]


def track(tid, x, lifecycle="tracking"):
    return {"track_id": tid, "position": [x, 0.0, 0.0], "class": "person", "lifecycle": lifecycle}


def test_warmup_frames_are_not_scored():
    frames = [(i, [track(1, 0.1 * i)] if i >= 2 else []) for i in range(10)]
    ev = evaluate_tracking(frames, gts(10))
    s = ev.summary()
    assert s["frames"] == 8 and s["MOTA"] == 1.0 and s["FN"] == 0
    assert evaluate_tracking(frames, gts(10), warmup=0).summary()["FN"] == 2


def test_birth_tracks_are_not_reported():
    frames = [(i, [track(1, 0.1 * i, "birth")]) for i in range(5)]
    s = evaluate_tracking(frames, gts(5), warmup=0).summary()
    assert s["FN"] == 5 and s["FP"] == 0 and s["MOTP"] is None


def test_invisible_agents_are_not_ground_truth():
    g = [GroundTruthFrame(0, 0.0, [agent(0, 0.0, visible=False)])]
    assert evaluate_tracking([(0, [])], g, warmup=0).summary()["GT"] == 0


def test_misaligned_frames():
    with pytest.raises(AlignmentError):
        evaluate_tracking([(99, [])], gts(3))


def test_prediction_scoring_uses_known_futures():
    truth = gts(40)
    by_index = {g.frame_index: g for g in truth}
    assert np.allclose(future_truth(by_index, 0, 5, 3), [[0.6, 0, 0], [0.7, 0, 0], [0.8, 0, 0]])
    assert future_truth(by_index, 0, 38, 3) is None
    assert future_truth(by_index, 7, 5, 3) is None
    pairs = {i: {1: 0} for i in range(40)}
    perfect = [(i, 1, future_truth(by_index, 0, i, 30), "memory") for i in range(10)]
    late = [(38, 1, np.zeros((30, 3)), "kalman")]
    unmatched = [(3, 2, np.zeros((30, 3)), "kalman")]
    ev = evaluate_predictions(perfect + late + unmatched, pairs, truth)
    s = ev.summary()
    assert s["n"] == 10 and s["ADE"] == 0 and s["FDE"] == 0 and s["FDE_z"] == 0
    assert s["sources"] == {"memory": 10}


def test_prediction_eval_pools():
    a, b = PredictionEval(), PredictionEval()
    a.eval_set.add(np.ones((2, 3)), np.zeros((2, 3)))
    a.z_final.append(1.0)
    a.sources["kalman"] = 1
    b.extend(a)
    b.extend(a)
    assert b.summary()["n"] == 2 and b.summary()["sources"] == {"kalman": 2}
    assert PredictionEval().summary()["ADE"] is None


def test_voxel_accumulator():
    acc = VoxelAccumulator()
    with pytest.raises(EmptyOriginal):
        acc.counts(np.zeros((1, 3)))
    pts = np.array([[0.05, 0.05, 0.05], [0.1, 0.1, 0.1], [1.0, 1.0, 1.0]])
    acc.add(pts, np.array([STATIC_LABEL, STATIC_LABEL, 3]))
    acc.add(pts[:1] + [0.5, 0, 0], np.array([STATIC_LABEL]))
    c = acc.counts(pts[:1])
    assert (c.n_sp, c.n_sa, c.n_dp, c.n_da) == (1, 2, 0, 1)


def test_map_summary_and_table():
    s = map_summary(MapEvalCounts(9, 10, 1, 10))
    assert s["PR"] == pytest.approx(0.9) and s["RR"] == pytest.approx(0.9) and s["F1"] == pytest.approx(0.9)
    assert map_summary(MapEvalCounts(0, 10, 10, 10))["F1"] is None
    table = summary_table({"ours": {"mapping": s}, "base": {"mapping": map_summary(MapEvalCounts(10, 10, 5, 10))}})
    lines = table.splitlines()
    assert lines[0].split() == ["metric", "ours", "base", "base-ours"]
    rr = next(line for line in lines if line.startswith("mapping.RR")).split()
    assert rr[1:] == ["0.9000", "0.5000", "-0.4000"]
