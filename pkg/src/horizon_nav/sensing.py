"""Partial observability: range/occlusion-limited sensing and graph building.

Visibility is a hard model: a pedestrian is seen iff it is inside the sensing
range and the open segment from the robot center to the pedestrian center
passes no closer than r_j to any strictly nearer pedestrian j.  Per-pedestrian
trajectory histories keep the last HISTORY_LEN world-frame positions with a
validity mask; occlusion gaps are filled by holding the last seen position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import SimConfig
from .world import RobotState, WorldState

#: history window length (2 s at dt = 0.25 s)
HISTORY_LEN = 8
#: length scale of the distance-kernel adjacency (m)
ADJACENCY_SCALE = 2.0


@dataclass
class PedestrianObservation:
    ped_id: int
    rel_position: np.ndarray      # (2,) robot frame
    rel_velocity: np.ndarray      # (2,) robot frame
    coop_prob: float = 0.0
    coop_label: int = 0


@dataclass
class PedestrianTrack:
    positions: np.ndarray         # (HISTORY_LEN, 2) world frame, newest last
    valid: np.ndarray             # (HISTORY_LEN,) bool
    timestamps: np.ndarray        # (HISTORY_LEN,)
    last_seen_step: int


@dataclass
class TrajectoryHistory:
    """Ring-buffered world-frame position histories for tracked pedestrians."""

    length: int = HISTORY_LEN
    tracks: dict[int, PedestrianTrack] = field(default_factory=dict)

    def update(self, world: WorldState, visible_ids: list[int]) -> None:
        visible = set(visible_ids)
        ped_by_id = {p.id: p for p in world.pedestrians}

        for pid in sorted(visible):
            ped = ped_by_id[pid]
            track = self.tracks.get(pid)
            if track is None:
                pos = np.tile(ped.position, (self.length, 1))
                valid = np.zeros(self.length, dtype=bool)
                ts = np.full(self.length, -np.inf)
                track = PedestrianTrack(pos, valid, ts, world.step_index)
                self.tracks[pid] = track
            self._push(track, ped.position, world.time, True, world.step_index)

        for pid in sorted(self.tracks):
            if pid not in visible:
                track = self.tracks[pid]
                # hold last observed position, mark invalid
                self._push(track, track.positions[-1], world.time, False,
                           track.last_seen_step)

        # evict tracks not seen for a full window
        stale = [pid for pid, tr in self.tracks.items()
                 if world.step_index - tr.last_seen_step >= self.length]
        for pid in stale:
            del self.tracks[pid]

    def _push(self, track: PedestrianTrack, pos, t, valid, seen_step):
        track.positions = np.vstack([track.positions[1:], pos])
        track.valid = np.append(track.valid[1:], valid)
        track.timestamps = np.append(track.timestamps[1:], t)
        track.last_seen_step = seen_step

    def displacement_features(self, ped_id: int) -> tuple[np.ndarray, np.ndarray]:
        """(length, 2) consecutive displacements and their validity mask.

        Held (invalid) entries produce zero displacements; the first slot is
        always zero.  The mask marks slots backed by an actual observation.
        """
        track = self.tracks[ped_id]
        deltas = np.zeros((self.length, 2))
        deltas[1:] = track.positions[1:] - track.positions[:-1]
        return deltas, track.valid.copy()

    def valid_count(self, ped_id: int) -> int:
        track = self.tracks.get(ped_id)
        return int(track.valid.sum()) if track is not None else 0


@dataclass
class SpatioTemporalGraph:
    robot_node: np.ndarray                      # (9,) robot feature vector
    ped_nodes: list[PedestrianObservation]
    spatial_edges: set[tuple[int, int]]         # undirected pairs over node ids
    temporal_edges: set[int]                    # ped ids linked t-1 -> t

    ROBOT_NODE_ID = -1


def _segment_point_distance(a: np.ndarray, b: np.ndarray, p: np.ndarray) -> float:
    """Distance from point p to segment ab."""
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-18:
        return float(np.linalg.norm(p - a))
    t = float((p - a) @ ab) / denom
    t = min(max(t, 0.0), 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def observe(world: WorldState, config: SimConfig) -> list[int]:
    """Ids of pedestrians visible to the robot (range + hard occlusion)."""
    robot_pos = world.robot.position
    dists = {p.id: float(np.linalg.norm(p.position - robot_pos))
             for p in world.pedestrians}

    visible = []
    for ped in world.pedestrians:
        d = dists[ped.id]
        if d > config.sensing_range:
            continue
        occluded = False
        for other in world.pedestrians:
            if other.id == ped.id or dists[other.id] >= d:
                continue
            if _segment_point_distance(robot_pos, ped.position,
                                       other.position) < other.radius:
                occluded = True
                break
        if not occluded:
            visible.append(ped.id)
    return sorted(visible)


def rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def to_robot_frame(world: WorldState, visible: list[int]) -> list[PedestrianObservation]:
    """Relative positions/velocities rotated into the robot frame."""
    R = rotation(-world.robot.heading)
    ped_by_id = {p.id: p for p in world.pedestrians}
    obs = []
    for pid in visible:
        ped = ped_by_id[pid]
        rel_p = R @ (ped.position - world.robot.position)
        rel_v = R @ (ped.velocity - world.robot.velocity)
        obs.append(PedestrianObservation(ped_id=pid, rel_position=rel_p,
                                         rel_velocity=rel_v))
    return obs


def from_robot_frame(robot: RobotState, rel_position: np.ndarray) -> np.ndarray:
    """Inverse of the to_robot_frame position transform."""
    return robot.position + rotation(robot.heading) @ rel_position


def build_adjacency(history: TrajectoryHistory, visible: list[int]) -> np.ndarray:
    """Distance-kernel adjacency over currently visible pedestrians.

    A[i, j] = exp(-||p_i - p_j|| / ADJACENCY_SCALE) off-diagonal, zero on the
    diagonal; rows/columns follow the order of `visible`.
    """
    positions = np.array([history.tracks[pid].positions[-1] for pid in visible])
    m = len(visible)
    A = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            a = math.exp(-float(np.linalg.norm(positions[i] - positions[j]))
                         / ADJACENCY_SCALE)
            A[i, j] = A[j, i] = a
    return A


def robot_node_features(robot: RobotState) -> np.ndarray:
    """Robot observation vector: position, velocity, heading, goal, ref speed, radius."""
    return np.array([robot.position[0], robot.position[1],
                     robot.velocity[0], robot.velocity[1],
                     robot.heading, robot.goal[0], robot.goal[1],
                     robot.ref_speed, robot.radius])


def build_graph(history: TrajectoryHistory, robot: RobotState,
                obs: list[PedestrianObservation]) -> SpatioTemporalGraph:
    """Spatio-temporal interaction graph over the robot and visible pedestrians.

    Spatial edges connect every pair of current nodes (robot included);
    temporal edges exist for pedestrians with valid observations at both the
    current and the previous step.
    """
    node_ids = [SpatioTemporalGraph.ROBOT_NODE_ID] + [o.ped_id for o in obs]
    spatial = {(a, b) for i, a in enumerate(node_ids)
               for b in node_ids[i + 1:]}
    temporal = set()
    for o in obs:
        track = history.tracks.get(o.ped_id)
        if track is not None and len(track.valid) >= 2 \
                and bool(track.valid[-1]) and bool(track.valid[-2]):
            temporal.add(o.ped_id)
    return SpatioTemporalGraph(robot_node=robot_node_features(robot),
                               ped_nodes=list(obs),
                               spatial_edges=spatial,
                               temporal_edges=temporal)
