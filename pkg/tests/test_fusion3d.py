import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seafusion import sim
from seafusion.cloud import Cluster, ClusterParams, OrientedBox, PointCloud
from seafusion.errors import SequencingError
from seafusion.fusion3d import (
    FrameBundle,
    FusionConfig,
    Obstacle3D,
    Observation,
    PipelineOptions,
    PipelineState,
    Source,
    Strategy,
    Track3D,
    Tracker3D,
    extract_frustum_points,
    hybrid_label,
    pipeline_step,
    select_obstacle_cluster,
    track_by_distance,
)
from seafusion.geometry import BBox2D, build_frustum

from conftest import projection_membership, random_box, random_calibration


def obs(x, y=0.0, label=None):
    c = np.array([x, y, 0.0])
    return Observation(c, OrientedBox(c, 0.0, 1.0, 1.0), label)


def obstacle(x, y=0.0, label=None, source=Source.LIDAR_ONLY, tid=1):
    c = np.array([x, y, 0.0])
    return Obstacle3D(tid, OrientedBox(c, 0.0, 1.0, 1.0), label, source, c, 0)


# -- frustum extraction and selection ----------------------------------------


def test_extract_empty_and_behind(canonical):
    fr = build_frustum(canonical, BBox2D(-100, -100, 100, 100))
    assert extract_frustum_points(PointCloud(0.0), fr).size == 0
    behind = np.random.default_rng(0).uniform(-10, 10, (50, 3))
    behind[:, 2] = -np.abs(behind[:, 2]) - 1
    assert extract_frustum_points(behind, fr).size == 0


def test_extract_matches_projection_oracle(rng):
    for _ in range(5):
        calib = random_calibration(rng)
        box = random_box(rng)
        pts = calib.camera_center + rng.uniform(-60, 60, (3000, 3))
        got = extract_frustum_points(pts, build_frustum(calib, BBox2D(*box)))
        np.testing.assert_array_equal(got, np.flatnonzero(projection_membership(calib, box, pts)))


def cluster(n, x):
    return Cluster(np.arange(n), np.array([x, 0.0, 0.0]))


def test_select_largest():
    assert len(select_obstacle_cluster([cluster(40, 1), cluster(80, 50)], Strategy.LARGEST)) == 80


def test_select_nearest():
    chosen = select_obstacle_cluster([cluster(40, 10), cluster(80, 4)], Strategy.NEAREST)
    assert chosen.centroid[0] == 4


@pytest.mark.parametrize("strategy", list(Strategy))
def test_select_single_and_none(strategy):
    c = cluster(10, 3)
    assert select_obstacle_cluster([c], strategy) is c
    assert select_obstacle_cluster([], strategy) is None


# -- tracking by distance -----------------------------------------------------


def test_within_threshold_keeps_id():
    tr = Tracker3D()
    tr.track_by_distance(0, [obs(0)])
    assert tr.track_by_distance(1, [obs(4.9)])[0].track_id == 1


def test_beyond_threshold_new_id():
    tr = Tracker3D()
    tr.track_by_distance(0, [obs(0)])
    assert tr.track_by_distance(1, [obs(5.1)])[0].track_id == 2


def test_greedy_nearest_wins():
    tr = Tracker3D()
    tr.track_by_distance(0, [obs(0)])
    out = track_by_distance(tr, 1, [obs(2), obs(1)])
    assert [o.track_id for o in out] == [2, 1]


def test_track_dropped_after_max_misses():
    tr = Tracker3D(FusionConfig(max_misses_3d=3))
    tr.track_by_distance(0, [obs(0)])
    for f in range(1, 3):
        tr.track_by_distance(f, [])
    assert tr.track(1) is not None
    tr.track_by_distance(3, [])
    assert tr.track(1) is None
    assert tr.track_by_distance(4, [obs(0)])[0].track_id == 2


def test_tracker3d_rejects_out_of_order():
    tr = Tracker3D()
    tr.track_by_distance(3, [])
    with pytest.raises(SequencingError):
        tr.track_by_distance(3, [])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50)), max_size=6), min_size=1, max_size=8))
def test_track_ids_deterministic_and_unique(frames):
    def run():
        tr = Tracker3D()
        out = []
        for f, pts in enumerate(frames):
            res = tr.track_by_distance(f, [obs(x, y) for x, y in pts])
            ids = [o.track_id for o in res]
            assert len(ids) == len(set(ids))
            out.append(ids)
        return out

    assert run() == run()


# -- hybrid labeling ----------------------------------------------------------


def test_hybrid_no_camera():
    out = hybrid_label([obstacle(0), obstacle(20, tid=2)], [])
    assert [o.label for o in out] == [None, None]


def test_hybrid_within_distance():
    cam = obstacle(1, label=0, source=Source.CAMERA_FUSED)
    (o,) = hybrid_label([obstacle(0)], [cam])
    assert o.label == 0 and o.source is Source.CAMERA_FUSED


def test_hybrid_beyond_distance():
    cam = obstacle(10, label=0, source=Source.CAMERA_FUSED)
    (o,) = hybrid_label([obstacle(0)], [cam])
    assert o.label is None and o.source is Source.LIDAR_ONLY


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.tuples(st.floats(-30, 30), st.floats(-30, 30)), max_size=8),
    st.lists(st.tuples(st.floats(-30, 30), st.floats(-30, 30)), max_size=8),
)
def test_hybrid_preserves_count(a, b):
    all_cloud = [obstacle(x, y, tid=i) for i, (x, y) in enumerate(a)]
    cam = [obstacle(x, y, 0, Source.CAMERA_FUSED, i) for i, (x, y) in enumerate(b)]
    out = hybrid_label(all_cloud, cam)
    assert [o.track_id for o in out] == [o.track_id for o in all_cloud]
    assert sum(o.label is not None for o in out) <= len(cam)


# -- pipeline on simulator scenes ---------------------------------------------


def run_scenario(cfg, options=None):
    scenario = sim.generate_scenario(cfg)
    options = options or PipelineOptions()
    state = PipelineState(options)
    maps = [pipeline_step(b, state, scenario.calibration, options) for b in scenario.frames]
    return scenario, maps


def test_single_boat_ahead_is_camera_fused_with_stable_id():
    boat = sim.BoatActor(12.0, 4.0, 3.0, 20.0, 0.0, 0.0)
    cfg = sim.ScenarioConfig(boats=[boat], duration=5.0)
    _, maps = run_scenario(cfg)
    assert len(maps) == 50
    ids = set()
    for m in maps:
        assert len(m.obstacles) == 1
        (o,) = m.obstacles
        assert o.source is Source.CAMERA_FUSED and o.label == 0
        ids.add(o.track_id)
    assert ids == {1}


def test_boat_astern_is_lidar_only():
    boat = sim.BoatActor(10.0, 3.0, 2.5, -25.0, 0.0, 0.0)
    _, maps = run_scenario(sim.ScenarioConfig(boats=[boat], duration=1.0))
    for m in maps:
        assert [(o.source, o.label) for o in m.obstacles] == [(Source.LIDAR_ONLY, None)]
        assert m.camera_obstacles == []


def test_zero_point_cloud_gives_empty_map():
    options = PipelineOptions()
    m = pipeline_step(FrameBundle(0, PointCloud(0.0)), PipelineState(options), None, options)
    assert m.obstacles == [] and m.n_points == 0


def test_timings_are_consistent():
    _, maps = run_scenario(sim.three_boat_scenario(duration=0.5))
    for m in maps:
        stages = [v for k, v in m.timings_ms.items() if k != "total"]
        assert min(stages) >= 0
        assert m.timings_ms["total"] >= max(stages)


def test_camera_obstacles_have_all_cloud_partner():
    cfg = sim.three_boat_scenario(duration=3.0)
    params = ClusterParams(3.0, 5, 10000)
    options = PipelineOptions(cluster=params, fusion=FusionConfig(frustum_min_size=5))
    _, maps = run_scenario(cfg, options)
    for m in maps:
        for cam in m.camera_obstacles:
            d = min(np.linalg.norm(o.centroid[:2] - cam.centroid[:2]) for o in m.obstacles)
            assert d <= options.fusion.hybrid_match_distance


def test_track_ids_map_to_one_boat():
    scenario, maps = run_scenario(sim.three_boat_scenario(duration=5.0))
    owner = {}
    for m, truth in zip(maps, scenario.truth):
        for o in m.obstacles:
            gt = min(truth.boats, key=lambda b: np.linalg.norm(b.box3d.center[:2] - o.centroid[:2]))
            assert owner.setdefault(o.track_id, gt.gt_track_id) == gt.gt_track_id


def test_sticky_labels_survive_camera_dropout():
    boat = sim.BoatActor(12.0, 4.0, 3.0, 25.0, 0.0, 0.0)
    scenario = sim.generate_scenario(sim.ScenarioConfig(boats=[boat], duration=2.0))
    for b in scenario.frames[10:]:
        b.detections = []
    options = PipelineOptions()
    state = PipelineState(options)
    maps = [pipeline_step(b, state, scenario.calibration, options) for b in scenario.frames]
    late = maps[-1].obstacles[0]
    assert late.label == 0 and late.source is Source.LIDAR_ONLY

    options = PipelineOptions(fusion=FusionConfig(sticky_labels=False))
    state = PipelineState(options)
    maps = [pipeline_step(b, state, scenario.calibration, options) for b in scenario.frames]
    assert maps[-1].obstacles[0].label is None


def test_color_seed_is_stable():
    assert Track3D(7, np.zeros(3)).color_seed == Track3D(7, np.ones(3)).color_seed
    assert Track3D(7, np.zeros(3)).color_seed != Track3D(8, np.zeros(3)).color_seed
