"""Hand-built worlds for unit tests."""
from __future__ import annotations

from platoon.drivers import DriverStyle, HdvDriver, IdmParams, MobilParams
from platoon.dynamics import VehicleKind, VehicleState
from platoon.road import RoadSpec
from platoon.world import WorldConfig, WorldState

ROAD = RoadSpec()


def car(vid: int, lane: int, s: float, v: float = 25.0, road: RoadSpec = ROAD, **kw) -> VehicleState:
    return VehicleState(id=vid, lane=lane, s=s, y=road.lane_center(lane), v=v, **kw)


def cav(vid: int, lane: int, s: float, v: float = 25.0, road: RoadSpec = ROAD, **kw) -> VehicleState:
    kw.setdefault("in_platoon", True)
    return car(vid, lane, s, v, road, kind=VehicleKind.CAV, **kw)


def driver(lane: int, v0: float = 25.0, use_mobil: bool = False, **kw) -> HdvDriver:
    return HdvDriver(
        style=DriverStyle.NEUTRAL, idm=IdmParams(v0=v0), mobil=MobilParams(), target_lane=lane,
        use_mobil=use_mobil, **kw,
    )


def world_of(*vehicles: VehicleState, road: RoadSpec = ROAD, drivers=None, config: WorldConfig = WorldConfig(),
             step: int = 0) -> WorldState:
    if drivers is None:
        drivers = {v.id: driver(v.lane, v0=v.v) for v in vehicles if v.kind is VehicleKind.HDV}
    return WorldState(road, step, tuple(sorted(vehicles, key=lambda v: v.id)), drivers, config)
