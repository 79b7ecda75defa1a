"""Straight multi-lane road geometry."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError


@dataclass(frozen=True)
class RoadSpec:
    """Lane 0 is the leftmost lane; lateral position y grows to the right from the left edge."""

    num_lanes: int = 3
    lane_width: float = 4.0
    length: float = 1000.0
    scenario_zone: tuple[float, float] = (300.0, 600.0)

    def __post_init__(self):
        if self.num_lanes < 2:
            raise ConfigError("must be >= 2", "road.num_lanes")
        if not self.lane_width > 0:
            raise ConfigError("must be > 0", "road.lane_width")
        start, end = self.scenario_zone
        if not 0.0 <= start < end:
            raise ConfigError("expected 0 <= start < end", "road.scenario_zone")
        if not self.length > end - start:
            raise ConfigError("road must be longer than the scenario zone", "road.length")
        if end > self.length:
            raise ConfigError("zone end lies beyond the road end", "road.scenario_zone")

    @property
    def width(self) -> float:
        return self.num_lanes * self.lane_width

    @property
    def zone_start(self) -> float:
        return self.scenario_zone[0]

    @property
    def zone_end(self) -> float:
        return self.scenario_zone[1]

    def lane_center(self, lane: int) -> float:
        return (lane + 0.5) * self.lane_width

    def lane_of(self, y: float) -> int:
        lane = int(math.floor(y / self.lane_width))
        return min(max(lane, 0), self.num_lanes - 1)

    def valid_lane(self, lane: int) -> bool:
        return 0 <= lane < self.num_lanes

    def clamp_lane(self, lane: int) -> int:
        return min(max(lane, 0), self.num_lanes - 1)
