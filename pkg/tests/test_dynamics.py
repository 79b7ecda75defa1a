"""
Tests for the kinematic bicycle and the PID tracking loops.
"""
import math

import pytest

from platoon.dynamics import (
    DT,
    GAIN_PRESETS,
    ControlCommand,
    DynamicsLimits,
    HighLevelAction,
    PidMemory,
    VehicleState,
    lateral_steer,
    pid_track,
    pid_track_with_memory,
    resolve_targets,
    step_kinematics,
    wrap_angle,
)
from platoon.errors import ValidationError
from platoon.road import RoadSpec

from .builders import ROAD, car


def test_wrap_angle_range():
    assert abs(wrap_angle(3 * math.pi)) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(0.25) == pytest.approx(0.25)
    assert wrap_angle(2 * math.pi + 0.1) == pytest.approx(0.1)


def test_straight_step_uses_constant_acceleration_profile():
    """Zero steer: s advances by v*dt + a*dt^2/2 and heading stays at zero."""
    veh = car(0, 1, 100.0, v=10.0)
    nxt = step_kinematics(veh, ControlCommand(1.0, 0.0))
    assert nxt.s == pytest.approx(100.0 + 10.0 * DT + 0.5 * DT * DT)
    assert nxt.v == pytest.approx(10.0 + DT)
    assert nxt.y == pytest.approx(veh.y)
    assert nxt.heading == 0.0
    assert nxt.a == pytest.approx(1.0)


def test_hard_brake_stops_within_step_without_reversing():
    veh = car(0, 1, 50.0, v=0.1)
    nxt = step_kinematics(veh, ControlCommand(-5.0, 0.0))
    assert nxt.v == 0.0
    assert nxt.s == pytest.approx(50.0 + 0.1 ** 2 / 10.0)
    assert nxt.a == pytest.approx(-0.1 / DT)


def test_stopped_vehicle_stays_put_under_braking():
    veh = car(0, 1, 50.0, v=0.0)
    nxt = step_kinematics(veh, ControlCommand(-3.0, 0.2))
    assert nxt.s == pytest.approx(50.0)
    assert nxt.v == 0.0


def test_commands_are_clamped_to_limits():
    limits = DynamicsLimits()
    veh = car(0, 1, 0.0, v=10.0)
    nxt = step_kinematics(veh, ControlCommand(100.0, 0.0), limits=limits)
    assert nxt.a == pytest.approx(limits.accel_max)
    wide = step_kinematics(veh, ControlCommand(0.0, 2.0), limits=limits)
    capped = step_kinematics(veh, ControlCommand(0.0, limits.steer_limit), limits=limits)
    assert wide.heading == pytest.approx(capped.heading)


def test_arc_step_turns_right_for_positive_steer():
    veh = car(0, 1, 0.0, v=20.0)
    nxt = step_kinematics(veh, ControlCommand(0.0, 0.1))
    dist = 20.0 * DT
    kappa = math.tan(0.1) / veh.wheelbase
    assert nxt.heading == pytest.approx(kappa * dist)
    assert nxt.y > veh.y
    chord = math.hypot(nxt.s - veh.s, nxt.y - veh.y)
    assert chord < dist
    assert chord == pytest.approx(2.0 / kappa * math.sin(kappa * dist / 2.0))


def test_crashed_vehicle_is_returned_unchanged():
    veh = car(0, 1, 10.0, v=0.0, crashed=True)
    assert step_kinematics(veh, ControlCommand(3.0, 0.3)) is veh


@pytest.mark.parametrize("cmd", [ControlCommand(math.nan, 0.0), ControlCommand(0.0, math.inf)])
def test_non_finite_input_raises(cmd):
    with pytest.raises(ValidationError):
        step_kinematics(car(0, 1, 0.0), cmd)


def test_vehicle_state_dict_keeps_kind_and_flags():
    veh = car(4, 2, 12.5, v=3.0, in_platoon=True, crashed=True)
    assert VehicleState.from_dict(veh.to_dict()) == veh


def test_resolve_targets_lane_changes_are_clipped_to_road():
    left_edge = car(0, 0, 0.0)
    assert resolve_targets(HighLevelAction.LANE_LEFT, left_edge, ROAD, 28.0, 0) == (28.0, 0)
    assert resolve_targets(HighLevelAction.LANE_RIGHT, left_edge, ROAD, 28.0, 0) == (28.0, 1)
    right_edge = car(0, ROAD.num_lanes - 1, 0.0)
    assert resolve_targets(HighLevelAction.LANE_RIGHT, right_edge, ROAD, 28.0, 2) == (28.0, 2)


def test_resolve_targets_speed_steps_and_bounds():
    veh = car(0, 1, 0.0, v=25.0)
    assert resolve_targets(HighLevelAction.FASTER, veh, ROAD, 25.0, 1) == (27.0, 1)
    assert resolve_targets(HighLevelAction.FASTER, veh, ROAD, 29.5, 1) == (30.0, 1)
    assert resolve_targets(HighLevelAction.SLOWER, veh, ROAD, 28.0, 1) == (23.0, 1)
    slow = car(0, 1, 0.0, v=1.0)
    assert resolve_targets(HighLevelAction.SLOWER, slow, ROAD, 1.0, 1) == (0.0, 1)
    assert resolve_targets(HighLevelAction.IDLE, veh, ROAD, 26.0, 1) == (26.0, 1)


def test_resolve_targets_rejects_lane_off_road():
    with pytest.raises(ValidationError):
        resolve_targets(HighLevelAction.IDLE, car(0, 1, 0.0), ROAD, 20.0, 7)


def test_lateral_steer_signs():
    centred = car(0, 1, 0.0)
    assert lateral_steer(centred, ROAD, 1) == pytest.approx(0.0)
    assert lateral_steer(centred, ROAD, 2) > 0.0
    assert lateral_steer(centred, ROAD, 0) < 0.0


def test_speed_loop_pi_terms_and_memory():
    veh = car(0, 1, 0.0, v=20.0)
    cmd, memory, (speed, lane) = pid_track_with_memory(HighLevelAction.IDLE, veh, ROAD, 22.0, 1)
    assert (speed, lane) == (22.0, 1)
    assert memory.speed_integral == pytest.approx(2.0 * DT)
    assert memory.prev_speed_error == pytest.approx(2.0)
    assert cmd.throttle == pytest.approx(0.6 * 2.0 + 0.05 * 2.0 * DT)
    assert pid_track(HighLevelAction.IDLE, veh, ROAD, 22.0, 1) == cmd


def test_speed_integral_is_clamped():
    veh = car(0, 1, 0.0, v=0.0)
    _, memory, _ = pid_track_with_memory(HighLevelAction.IDLE, veh, ROAD, 30.0, 1, PidMemory(9.9, 30.0))
    assert memory.speed_integral == pytest.approx(10.0)


def test_closed_loop_reaches_target_speed():
    veh = car(0, 1, 0.0, v=20.0)
    memory = None
    for _ in range(450):
        cmd, memory, _ = pid_track_with_memory(HighLevelAction.IDLE, veh, ROAD, 28.0, 1, memory)
        veh = step_kinematics(veh, cmd)
    assert veh.v == pytest.approx(28.0, abs=0.5)


def test_closed_loop_lane_change_settles_on_lane_center():
    road = RoadSpec()
    veh = car(0, 1, 0.0, v=25.0, road=road)
    target_speed, target_lane, memory = 25.0, 1, None
    action = HighLevelAction.LANE_RIGHT
    for _ in range(150):
        cmd, memory, (target_speed, target_lane) = pid_track_with_memory(
            action, veh, road, target_speed, target_lane, memory
        )
        action = HighLevelAction.IDLE
        veh = step_kinematics(veh, cmd)
    assert target_lane == 2
    assert veh.y == pytest.approx(road.lane_center(2), abs=0.2)
    assert abs(veh.heading) < 0.05


def _lateral_error_after(gains, seconds: float) -> float:
    road = RoadSpec()
    veh = car(0, 1, 0.0, v=25.0, road=road)
    target_speed, target_lane, memory = 25.0, 1, None
    action = HighLevelAction.LANE_RIGHT
    for _ in range(round(seconds / DT)):
        cmd, memory, (target_speed, target_lane) = pid_track_with_memory(
            action, veh, road, target_speed, target_lane, memory, gains
        )
        action = HighLevelAction.IDLE
        veh = step_kinematics(veh, cmd)
    return abs(veh.y - road.lane_center(2))


def test_literal_pd_gain_set_is_slower_than_default():
    assert set(GAIN_PRESETS) == {"default", "literal_pd"}
    literal = GAIN_PRESETS["literal_pd"]
    assert (literal.lateral_kp, literal.heading_kp) == (0.3, 0.6)
    lane_width = RoadSpec().lane_width
    assert _lateral_error_after(GAIN_PRESETS["default"], 4.0) < 0.2 * lane_width
    assert _lateral_error_after(literal, 4.0) > 1.0
