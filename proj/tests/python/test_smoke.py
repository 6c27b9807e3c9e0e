import numpy as np
import pytest

import embal


@pytest.fixture(scope="module")
def world():
    return embal.generate_world(3001)


def test_world_is_deterministic(world):
    again = embal.generate_world(3001)
    assert world == again
    assert world.dumps() == again.dumps()
    assert embal.GridWorld.loads(world.dumps()) == world


def test_grids_agree_on_walls(world):
    walls = world.walls
    classes = world.classes
    assert walls.shape == (world.height, world.width)
    assert np.all((classes >= 0) == (walls == 1))
    assert int((walls == 0).sum()) == world.free_count


def test_step_and_render(world):
    pose = embal.sample_start_pose(world, 7)
    assert world.is_free(pose.x, pose.y)
    turned, collided = embal.step_pose(world, pose, embal.Action.RotateLeft)
    assert not collided
    assert turned.heading == (pose.heading + 1) % 24
    view = embal.render_view(world, pose)
    assert view.width == 64
    assert view.features.shape[0] == 64
    assert min(view.depth) > 0


def test_labels_follow_a_turn(world):
    pose = embal.sample_start_pose(world, 7)
    turned, _ = embal.step_pose(world, pose, embal.Action.RotateLeft)
    a = embal.render_view(world, pose)
    b = embal.render_view(world, turned)
    corr = embal.correspondence(a, b)
    moved = embal.propagate(a.gt_class, corr)
    known = [j for j, l in enumerate(moved) if l != embal.UNKNOWN]
    assert 45 <= len(known) <= 60
    agree = sum(moved[j] == b.gt_class[j] for j in known)
    assert agree >= 0.9 * len(known)


def test_mean_iou_two_classes():
    assert embal.mean_iou([0, 0, 1, 1], [0, 1, 1, 1], 2) == pytest.approx((0.5 + 2 / 3) / 2)


def test_episode_record():
    rec = embal.run_episode(3001, start_seed=5, agent="rotate", regime="steps:48")
    assert rec["n_steps"] == 48
    assert 0.0 <= rec["final_miou"] <= 1.0
    again = embal.run_episode(3001, start_seed=5, agent="rotate", regime="steps:48")
    assert rec == again


def test_bad_agent_raises():
    with pytest.raises(embal.EmbalError):
        embal.run_episode(3001, agent="teleport")
