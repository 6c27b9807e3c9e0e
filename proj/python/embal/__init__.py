"""Embodied active-learning testbed: worlds, views, agents and episodes."""

from ._core import (
    UNKNOWN,
    Action,
    EmbalError,
    GridWorld,
    Pose,
    View,
    benchmark,
    correspondence,
    generate_world,
    geodesic_distance,
    mean_iou,
    propagate,
    render_view,
    run_episode,
    sample_start_pose,
    step_pose,
    world_seeds,
)

__all__ = [
    "UNKNOWN",
    "Action",
    "EmbalError",
    "GridWorld",
    "Pose",
    "View",
    "benchmark",
    "correspondence",
    "generate_world",
    "geodesic_distance",
    "mean_iou",
    "propagate",
    "render_view",
    "run_episode",
    "sample_start_pose",
    "step_pose",
    "world_seeds",
]
