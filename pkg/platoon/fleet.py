"""
Array form of the world for batched look-ahead.

`Fleet` packs a prediction snapshot (`WorldState.as_prediction`) into per-vehicle arrays,
and `Fleet.rollout` advances B copies of it in lock step, one joint CAV action per copy.
Driver models, tracking loops, kinematics and collision handling follow `step_world`
term by term. Columns are ordered by vehicle id, so equal positions resolve the way
`WorldState.lane_neighbors` resolves them.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .dynamics import HighLevelAction, VehicleKind
from .env import CavControl
from .errors import UnknownVehicleError, ValidationError
from .world import WorldState

LOG = logging.getLogger(__name__)

NO_ACTION = -1
_SIDES = np.array([0, -1, 1])  # own lane, left, right
_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class FleetTrace:
    """Recorded positions, shape (B, T+1, N); exited vehicles are NaN."""

    ids: tuple[int, ...]
    s: np.ndarray
    y: np.ndarray
    lane: np.ndarray
    v: np.ndarray


@dataclass
class _State:
    s: np.ndarray
    y: np.ndarray
    psi: np.ndarray
    v: np.ndarray
    a: np.ndarray
    lane: np.ndarray
    crashed: np.ndarray
    alive: np.ndarray
    target_lane: np.ndarray
    cooldown: np.ndarray
    target_speed: np.ndarray
    cav_lane: np.ndarray
    integral: np.ndarray
    prev_error: np.ndarray


def _wrap(x: np.ndarray) -> np.ndarray:
    r = x - _TWO_PI * np.round(x / _TWO_PI)
    return np.where(r <= -math.pi, math.pi, r)


def _idm(v, dv, gap, v0, T, s0, a_max, b_comf, delta):
    """IDM acceleration over arrays; `gap = inf` is free road."""
    free = np.where(v0 > 0, 1.0 - (np.maximum(v, 0.0) / v0) ** delta, -1.0)
    s_star = s0 + np.maximum(0.0, v * T + v * dv / (2.0 * np.sqrt(a_max * b_comf)))
    return np.where(np.isinf(gap), a_max * free, a_max * (free - (s_star / gap) ** 2))


def _neighbours(s: np.ndarray, lane: np.ndarray, present: np.ndarray, query: np.ndarray, eye: np.ndarray):
    """Leader (nearest at or ahead) and follower (nearest strictly behind) column of every
    vehicle in lane `query`; -1 where there is none."""
    n = s.shape[1]
    inlane = present[:, None, :] & ~eye & (lane[:, None, :] == query[:, :, None])
    ahead = s[:, None, :] >= s[:, :, None]
    front = np.where(inlane & ahead, s[:, None, :], np.inf)
    lead = front.argmin(axis=2)
    lead = np.where(np.isfinite(front.min(axis=2)), lead, -1)
    back = np.where(inlane & ~ahead, s[:, None, :], -np.inf)
    follow = n - 1 - back[..., ::-1].argmax(axis=2)
    follow = np.where(np.isfinite(back.max(axis=2)), follow, -1)
    return lead, follow


def _row_neighbours(s: np.ndarray, lane: np.ndarray, present: np.ndarray, ego: np.ndarray, query: np.ndarray):
    """Leader and follower column of one vehicle per row: `ego` is (M,), `query` (K, M) lanes.
    Same tie rules as `_neighbours`."""
    rows = np.arange(s.shape[0])
    others = present.copy()
    others[rows, ego] = False
    inlane = others & (lane == query[..., None])
    ahead = s >= s[rows, ego][:, None]
    front = np.where(inlane & ahead, s, np.inf)
    lead = np.where(np.isfinite(front.min(axis=-1)), front.argmin(axis=-1), -1)
    back = np.where(inlane & ~ahead, s, -np.inf)
    follow = s.shape[1] - 1 - back[..., ::-1].argmax(axis=-1)
    follow = np.where(np.isfinite(back.max(axis=-1)), follow, -1)
    return lead, follow


class Fleet:
    def __init__(self, world: WorldState, controls: Mapping[int, CavControl]):
        vehicles = sorted(world.vehicles, key=lambda v: v.id)
        self.road, self.cfg = world.road, world.config
        self.limits, self.gains = world.config.limits, world.config.gains
        self.step_index = world.step_index
        self.ids = tuple(v.id for v in vehicles)
        self.column = {vid: k for k, vid in enumerate(self.ids)}
        n = len(vehicles)

        def col(attr: str) -> np.ndarray:
            return np.array([float(getattr(v, attr)) for v in vehicles])

        self.s, self.y, self.heading, self.v, self.a = (col(k) for k in ("s", "y", "heading", "v", "a"))
        self.length, self.width = col("length"), col("width")
        self.wheelbase = 0.6 * self.length
        self.lane = np.array([v.lane for v in vehicles], dtype=np.int64)
        self.crashed = np.array([v.crashed for v in vehicles], dtype=bool)
        self.is_cav = np.array([v.kind is VehicleKind.CAV for v in vehicles], dtype=bool)
        self.eye = np.eye(n, dtype=bool)
        self.half_width = 0.5 * (self.width[None, :] + self.width[:, None])
        self.reach = 0.5 * self.length[None, :] + 0.5 * self.length[:, None]
        self._pack_drivers(world, vehicles)
        self._pack_controls(controls, vehicles)

    def _pack_drivers(self, world: WorldState, vehicles) -> None:
        n = len(vehicles)
        self.has_driver = np.zeros(n, dtype=bool)
        self.use_mobil = np.zeros(n, dtype=bool)
        self.target_lane = self.lane.copy()
        ints = np.zeros((4, n), dtype=np.int64)  # cooldown_until, phase, period, cooldown_steps
        ints[2] = 1
        idm = np.tile(np.array([[25.0], [1.5], [2.0], [1.5], [3.0], [4.0]]), (1, n))
        mobil = np.zeros((4, n))  # politeness, b_safe, a_thr, bias_right
        self.mal_start = np.full(n, np.inf)
        self.mal_end = np.full(n, np.inf)
        self.mal_accel = np.zeros(n)
        for k, v in enumerate(vehicles):
            d = world.drivers.get(v.id)
            if d is None:
                if v.kind is VehicleKind.HDV and not v.crashed:
                    raise UnknownVehicleError(f"HDV {v.id} has no driver")
                continue
            if d.oscillation is not None or (d.forced is not None and not d.forced.triggered):
                raise ValidationError(f"driver of vehicle {v.id} is not a prediction snapshot")
            self.has_driver[k] = True
            self.use_mobil[k] = d.use_mobil
            self.target_lane[k] = d.target_lane
            ints[:, k] = (d.cooldown_until, d.mobil_phase, d.mobil.period_steps, d.mobil.cooldown_steps)
            p = d.idm
            idm[:, k] = (p.v0, p.T, p.s0, p.a_max, p.b_comf, p.delta)
            m = d.mobil
            mobil[:, k] = (m.politeness, m.b_safe, m.a_thr, m.bias_right)
            if d.malfunction is not None:
                self.mal_start[k] = d.malfunction.start_step
                if d.malfunction.kind == "stall":
                    self.mal_accel[k] = -p.b_comf
                else:
                    self.mal_end[k] = d.malfunction.start_step + d.malfunction.duration_steps
                    self.mal_accel[k] = self.limits.accel_min
        self.cooldown, self.phase, self.period, self.cooldown_steps = ints
        self.idm = idm
        self.politeness, self.b_safe, self.a_thr, self.bias_right = mobil

    def _pack_controls(self, controls: Mapping[int, CavControl], vehicles) -> None:
        n = len(vehicles)
        self.target_speed = np.full(n, np.nan)
        self.cav_lane = self.lane.copy()
        self.integral = np.zeros(n)
        self.prev_error = np.full(n, np.nan)
        self.has_control = np.zeros(n, dtype=bool)
        for k, v in enumerate(vehicles):
            c = controls.get(v.id)
            if c is None:
                continue
            self.has_control[k] = True
            self.target_speed[k] = c.target_speed
            self.cav_lane[k] = c.target_lane
            self.integral[k] = c.memory.speed_integral
            if c.memory.prev_speed_error is not None:
                self.prev_error[k] = c.memory.prev_speed_error

    # ----------------------------
    # Batched stepping
    # ----------------------------
    def action_matrix(self, candidates: Sequence[Mapping[int, HighLevelAction]]) -> np.ndarray:
        actions = np.full((len(candidates), len(self.ids)), NO_ACTION, dtype=np.int64)
        for b, joint in enumerate(candidates):
            for vid, action in joint.items():
                k = self.column.get(vid)
                if k is None:
                    raise UnknownVehicleError(f"no vehicle with id {vid}")
                actions[b, k] = int(action)
        return actions

    def rollout(self, candidates: Sequence[Mapping[int, HighLevelAction]], horizon: int) -> FleetTrace:
        """Hold each candidate's CAV actions for `horizon` steps; HDVs follow their drivers."""
        actions = self.action_matrix(candidates)
        missing = self.is_cav & ~self.crashed & ((actions == NO_ACTION) | ~self.has_control)
        if missing.any():
            cols = sorted({int(k) for k in np.nonzero(missing)[1]})
            raise ValidationError(f"missing actions or controls for CAVs {[self.ids[k] for k in cols]}")
        b = len(candidates)
        tile = lambda x: np.tile(x, (b, 1))  # noqa: E731
        st = _State(
            s=tile(self.s), y=tile(self.y), psi=tile(self.heading), v=tile(self.v), a=tile(self.a),
            lane=tile(self.lane), crashed=tile(self.crashed), alive=np.ones((b, len(self.ids)), dtype=bool),
            target_lane=tile(self.target_lane), cooldown=tile(self.cooldown),
            target_speed=tile(self.target_speed), cav_lane=tile(self.cav_lane),
            integral=tile(self.integral), prev_error=tile(self.prev_error),
        )
        shape = (b, horizon + 1, len(self.ids))
        out = FleetTrace(self.ids, *(np.full(shape, np.nan) for _ in range(4)))
        self._record(out, 0, st)
        acting = self.is_cav & (actions != NO_ACTION)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            for k in range(1, horizon + 1):
                step = self.step_index + k - 1
                moving = st.alive & ~st.crashed
                hdv = moving & self.has_driver & ~self.is_cav
                cav = moving & acting
                throttle, steer = np.zeros(st.s.shape), np.zeros(st.s.shape)
                if hdv.any():
                    h_throttle, h_steer = self._hdv_controls(st, hdv, step)
                    throttle, steer = np.where(hdv, h_throttle, throttle), np.where(hdv, h_steer, steer)
                if cav.any():
                    c_throttle, c_steer = self._cav_controls(st, cav, actions)
                    throttle, steer = np.where(cav, c_throttle, throttle), np.where(cav, c_steer, steer)
                self._advance(st, moving, throttle, steer)
                self._collide(st)
                self._record(out, k, st)
        return out

    @staticmethod
    def _record(out: FleetTrace, k: int, st: _State) -> None:
        gone = ~st.alive
        for dst, src in ((out.s, st.s), (out.y, st.y), (out.lane, st.lane), (out.v, st.v)):
            dst[:, k] = np.where(gone, np.nan, src)

    def _take(self, arr: np.ndarray, idx: np.ndarray) -> np.ndarray:
        return np.take_along_axis(arr, np.maximum(idx, 0), axis=1)

    def _follow(self, st: _State, lead: np.ndarray) -> np.ndarray:
        has = lead >= 0
        j = np.maximum(lead, 0)
        gap = (self._take(st.s, lead) - st.s) - 0.5 * (self.length[j] + self.length)
        accel = _idm(st.v, np.where(has, st.v - self._take(st.v, lead), 0.0), np.where(has, gap, np.inf), *self.idm)
        return np.where(has & (gap <= 0), self.limits.accel_min, accel)

    def _steer(self, st: _State, lane: np.ndarray) -> np.ndarray:
        g, lim = self.gains, self.limits
        e_y = (lane + 0.5) * self.road.lane_width - st.y
        v_ref = np.maximum(st.v, 1.0)
        heading_ref = np.arcsin(np.clip(g.lateral_kp * e_y / v_ref, -1.0, 1.0))
        heading_ref = np.clip(heading_ref, -g.max_heading, g.max_heading)
        yaw_rate = g.heading_kp * _wrap(heading_ref - st.psi)
        return np.clip(np.arctan(self.wheelbase * yaw_rate / v_ref), -lim.steer_limit, lim.steer_limit)

    def _hdv_controls(self, st: _State, hdv: np.ndarray, step: int) -> tuple[np.ndarray, np.ndarray]:
        lead, _ = _neighbours(st.s, st.lane, st.alive, st.lane, self.eye)
        malfunctioning = hdv & (step >= self.mal_start) & (step < self.mal_end)
        centred = np.abs((st.lane + 0.5) * self.road.lane_width - st.y) < 0.5
        decide = (
            hdv & self.use_mobil & ~malfunctioning & (step >= st.cooldown) & (st.target_lane == st.lane)
            & centred & ((step - self.phase) % self.period == 0)
        )
        if decide.any():
            self._mobil(st, decide, step)

        accel = self._follow(st, lead)
        changing = hdv & (st.target_lane != st.lane)
        if changing.any():
            target_lead, _ = _neighbours(st.s, st.lane, st.alive, st.target_lane, self.eye)
            accel = np.where(changing, np.minimum(accel, self._follow(st, target_lead)), accel)
        accel = np.where(malfunctioning, self.mal_accel, accel)
        accel = np.clip(accel, self.limits.accel_min, self.limits.accel_max)
        return accel, self._steer(st, st.target_lane)

    def _mobil(self, st: _State, decide: np.ndarray, step: int) -> None:
        """Lane decisions of the (copy, vehicle) pairs in `decide`, all sides and all
        neighbour predictions evaluated in one stacked IDM call."""
        bb, ii = np.nonzero(decide)
        rows = np.arange(bb.size)
        s, v, lane = st.s[bb], st.v[bb], st.lane[bb]
        own = lane[rows, ii]
        lead, follow = _row_neighbours(s, lane, st.alive[bb], ii, own + _SIDES[:, None])
        old_lead, old_follow = lead[0], follow[0]

        # prediction pairs (rear, front): three shared, then three per side
        ego = ii
        rear = np.stack([ego, old_follow, old_follow,
                         follow[1], ego, follow[1],
                         follow[2], ego, follow[2]])
        front = np.stack([old_lead, old_lead, ego,
                          ego, lead[1], lead[1],
                          ego, lead[2], lead[2]])
        r, f = np.maximum(rear, 0), np.maximum(front, 0)
        has_rear, has_front = rear >= 0, front >= 0
        v_rear = v[rows, r]
        gap = (s[rows, f] - s[rows, r]) - 0.5 * (self.length[f] + self.length[r])
        pred = _idm(
            v_rear, np.where(has_front, v_rear - v[rows, f], 0.0), np.where(has_front, gap, np.inf),
            *self.idm[:, ii],
        )
        pred = np.where(has_front & (gap <= 0), -np.inf, pred)
        pred = np.where(has_rear, pred, 0.0)

        side = np.array([3, 6])  # new follower -> ego, left then right
        new_follow_pred, ego_new, new_follow_new = pred[side], pred[side + 1], pred[side + 2]
        has_nf, has_nl = has_rear[side], has_front[side + 1]
        reject = (has_nl & (gap[side + 1] <= 0)) | (has_nf & (gap[side] <= 0))
        reject |= has_nf & (new_follow_pred < -self.b_safe[ii])
        ego_gain = ego_new - pred[0]
        others = (new_follow_pred - new_follow_new) + (pred[1] - pred[2])
        reject |= ~np.isfinite(ego_gain)
        others = np.where(np.isfinite(others), others, np.where(others > 0, 0.0, -np.inf))
        incentive = ego_gain + self.politeness[ii] * others
        incentive[1] = incentive[1] + self.bias_right[ii]

        target = own + _SIDES[1:, None]
        ok = (
            (target >= 0) & (target < self.road.num_lanes) & ~reject
            & ~np.isnan(incentive) & (incentive > self.a_thr[ii])
        )
        (ok_l, ok_r), (left, right) = ok, incentive
        go_left = ok_l & (~ok_r | (left > right))
        go_right = ok_r & (~ok_l | (right > left))
        change = go_left | go_right
        if not change.any():
            return
        b, c = bb[change], ii[change]
        st.target_lane[b, c] = own[change] + np.where(go_left[change], -1, 1)
        st.cooldown[b, c] = step + self.cooldown_steps[c]
        LOG.debug("predicted %d lane change(s) at step %d", int(change.sum()), step)

    def _cav_controls(self, st: _State, cav: np.ndarray, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lim, g, dt = self.limits, self.gains, self.cfg.dt
        last_lane = self.road.num_lanes - 1
        speed, lane = st.target_speed, st.cav_lane
        lane = np.where(actions == HighLevelAction.LANE_LEFT, np.clip(st.lane - 1, 0, last_lane), lane)
        lane = np.where(actions == HighLevelAction.LANE_RIGHT, np.clip(st.lane + 1, 0, last_lane), lane)
        faster = np.minimum(np.maximum(speed, st.v) + lim.speed_step, lim.v_max)
        slower = np.maximum(np.minimum(speed, st.v) - lim.speed_step, 0.0)
        speed = np.where(actions == HighLevelAction.FASTER, faster, speed)
        speed = np.where(actions == HighLevelAction.SLOWER, slower, speed)

        e_v = speed - st.v
        integral = np.clip(st.integral + e_v * dt, -g.integral_limit, g.integral_limit)
        deriv = np.where(np.isnan(st.prev_error), 0.0, (e_v - st.prev_error) / dt)
        throttle = np.clip(g.speed_kp * e_v + g.speed_ki * integral + g.speed_kd * deriv, lim.accel_min, lim.accel_max)
        steer = self._steer(st, lane)

        st.target_speed = np.where(cav, speed, st.target_speed)
        st.cav_lane = np.where(cav, lane, st.cav_lane)
        st.integral = np.where(cav, integral, st.integral)
        st.prev_error = np.where(cav, e_v, st.prev_error)
        return throttle, steer

    def _advance(self, st: _State, moving: np.ndarray, throttle: np.ndarray, steer: np.ndarray) -> None:
        lim, dt, road = self.limits, self.cfg.dt, self.road
        accel = np.clip(throttle, lim.accel_min, lim.accel_max)
        delta = np.clip(steer, -lim.steer_limit, lim.steer_limit)
        v0 = np.maximum(st.v, 0.0)
        v1 = v0 + accel * dt
        stops = v1 < 0.0
        dist = np.where(stops, -v0 * v0 / (2.0 * accel), v0 * dt + 0.5 * accel * dt * dt)
        applied = np.where(stops, -v0 / dt, accel)
        v1 = np.where(stops, 0.0, v1)

        kappa = np.tan(delta) / self.wheelbase
        dpsi = kappa * dist
        psi1 = st.psi + dpsi
        straight = np.abs(dpsi) < 1e-12
        ds = np.where(straight, dist * np.cos(st.psi), (np.sin(psi1) - np.sin(st.psi)) / kappa)
        dy = np.where(straight, dist * np.sin(st.psi), (np.cos(st.psi) - np.cos(psi1)) / kappa)
        y = np.clip(st.y + dy, 0.0, road.width)
        lane = np.clip(np.floor(y / road.lane_width).astype(np.int64), 0, road.num_lanes - 1)

        st.s = np.where(moving, st.s + ds, st.s)
        st.y = np.where(moving, y, st.y)
        st.psi = np.where(moving, _wrap(psi1), st.psi)
        st.v = np.where(moving, v1, st.v)
        st.a = np.where(moving, applied, st.a)
        st.lane = np.where(moving, lane, st.lane)
        st.alive &= ~(moving & ~self.is_cav & (st.s - 0.5 * self.length > road.length))

    def _collide(self, st: _State) -> None:
        ds = st.s[:, None, :] - st.s[:, :, None]
        dy = st.y[:, None, :] - st.y[:, :, None]
        both = st.alive[:, None, :] & st.alive[:, :, None] & ~(st.crashed[:, None, :] & st.crashed[:, :, None])
        hit = both & ~self.eye & (np.abs(dy) < self.half_width) & (np.hypot(ds, dy) < self.reach)
        hit = hit.any(axis=2)
        if hit.any():
            st.crashed = st.crashed | hit
            st.v = np.where(hit, 0.0, st.v)
            st.a = np.where(hit, 0.0, st.a)
