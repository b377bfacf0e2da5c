"""Obstacle-blind straight-line mover, used both as the comparison planner
and as the pursuit rule for dynamic obstacles."""

from __future__ import annotations

from .env import Action
from .geometry import Vec2, distance


def target_to_target(from_point: Vec2, to_point: Vec2, speed: float) -> Action:
    """Step straight toward `to_point`, never overshooting it.

    The signature takes no obstacle state on purpose: the heuristic is
    blind by definition.
    """
    if speed <= 0:
        raise ValueError("speed must be positive")
    gap = distance(from_point, to_point)
    if gap == 0.0:
        return Action(0.0, 0.0)
    frac = min(speed, gap) / gap
    return Action(frac * (to_point.x - from_point.x),
                  frac * (to_point.y - from_point.y))
