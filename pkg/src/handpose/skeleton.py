"""Skeleton layout: 21 joints, 20 bones, and the rest-pose template.

Joint order is a global constant shared by every module: wrist first, then
each finger (thumb, index, middle, ring, little) proximal to tip
(MCP, PIP, DIP, TIP). Bones are indexed finger-major in the same order,
so bone 4*f is wrist->MCP of finger f.

The template constants below are implementation stand-ins chosen once:
MCP roots fan across the palm plane (z = 0) at 80-84 mm from the wrist with
fan angles between -40 and +40 degrees, and phalanx lengths lie in
20-27 mm with a shortened thumb chain. Lengths sit at the short end of
their ranges and the middle/distal phalanges rest with a gentle curl out
of the palm plane: a compact, non-planar hand keeps most joints inside the
fixed rendering window for most sampled cameras (off-window joints render
only clipped tails) and removes the orthographic depth-reflection
ambiguity of a perfectly flat rest pose. All lengths are millimeters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_JOINTS = 21
N_BONES = 20
FINGERS = ("thumb", "index", "middle", "ring", "little")

JOINT_NAMES = ("wrist",) + tuple(
    f"{finger}_{part}" for finger in FINGERS for part in ("mcp", "pip", "dip", "tip")
)

# Palm geometry: fingers extend in the x-y plane at rest, palm normal +z.
PALM_NORMAL = np.array([0.0, 0.0, 1.0])

_FAN_DEG = {"thumb": -40.0, "index": -16.0, "middle": 0.0, "ring": 16.0, "little": 40.0}
_MCP_DIST = {"thumb": 80.0, "index": 84.0, "middle": 84.0, "ring": 82.0, "little": 80.0}
_PHALANX = {
    "thumb": (24.0, 20.0, 20.0),
    "index": (26.0, 22.0, 20.0),
    "middle": (27.0, 24.0, 21.0),
    "ring": (26.0, 22.0, 20.0),
    "little": (22.0, 20.0, 20.0),
}
# Rest curl toward +z per phalanx (proximal, middle, distal), degrees.
_REST_CURL_DEG = (0.0, 18.0, 36.0)


@dataclass(frozen=True)
class SkeletonTemplate:
    """Rest-pose hand skeleton.

    parents: parent joint per joint, -1 for the wrist root.
    offsets: rest bone offset from parent to joint, zero row for the wrist.
    finger_of: finger index per joint (-1 for the wrist).
    flexion_axes: per finger, the lateral axis flexion rotates about.
    abduction_axis: palm normal, shared by all MCP abduction rotations.
    """

    parents: np.ndarray
    offsets: np.ndarray
    finger_of: np.ndarray
    flexion_axes: np.ndarray
    abduction_axis: np.ndarray

    def rest_positions(self) -> np.ndarray:
        """Joint positions with all angles zero and unit shape scales."""
        pos = np.zeros((N_JOINTS, 3))
        for j in range(1, N_JOINTS):
            pos[j] = pos[self.parents[j]] + self.offsets[j]
        return pos

    def bone_parents(self) -> np.ndarray:
        return self.parents[1:].copy()

    def bone_children(self) -> np.ndarray:
        return np.arange(1, N_JOINTS)

    def bone_lengths(self) -> np.ndarray:
        return np.sqrt((self.offsets[1:] ** 2).sum(axis=1))


def joint_index(finger: int, part: int) -> int:
    """part: 0=MCP, 1=PIP, 2=DIP, 3=TIP."""
    return 1 + 4 * finger + part


def default_template() -> SkeletonTemplate:
    parents = np.full(N_JOINTS, -1, dtype=np.int64)
    offsets = np.zeros((N_JOINTS, 3))
    finger_of = np.full(N_JOINTS, -1, dtype=np.int64)
    flexion_axes = np.zeros((len(FINGERS), 3))

    for f, name in enumerate(FINGERS):
        phi = np.deg2rad(_FAN_DEG[name])
        direction = np.array([np.sin(phi), np.cos(phi), 0.0])
        lateral = np.array([np.cos(phi), -np.sin(phi), 0.0])
        flexion_axes[f] = lateral

        mcp = joint_index(f, 0)
        parents[mcp] = 0
        offsets[mcp] = direction * _MCP_DIST[name]
        for p, length in enumerate(_PHALANX[name]):
            child = joint_index(f, p + 1)
            parents[child] = child - 1
            curl = np.deg2rad(_REST_CURL_DEG[p])
            offsets[child] = length * (np.cos(curl) * direction
                                       + np.sin(curl) * PALM_NORMAL)
        finger_of[mcp:mcp + 4] = f

    for arr in (parents, offsets, finger_of, flexion_axes):
        arr.setflags(write=False)
    abduction = PALM_NORMAL.copy()
    abduction.setflags(write=False)
    return SkeletonTemplate(parents, offsets, finger_of, flexion_axes, abduction)
