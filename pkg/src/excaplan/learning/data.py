"""Labeled excavation samples: one voxelized scene snapshot plus the
trajectory attempted on it and what happened."""

from __future__ import annotations

from dataclasses import dataclass

from ..geometry import GridSpec, VoxelGrid
from ..kinematics import TaskTrajectory


@dataclass(frozen=True)
class ExcavationSample:
    """Voxel occupancy is kept bit-packed; unpack lazily via `.voxels`."""

    voxel_bits: bytes
    grid_spec: GridSpec
    traj: TaskTrajectory
    volume: float  # captured volume, cm^3
    valid: bool
    label: bool
    episode_id: int
    trial_index: int

    @property
    def voxels(self) -> VoxelGrid:
        return VoxelGrid.from_packed(self.voxel_bits, self.grid_spec)

    @staticmethod
    def from_grid(grid: VoxelGrid, traj, volume, valid, label, episode_id, trial_index):
        spec = GridSpec(grid.dims, grid.resolution, grid.origin)
        return ExcavationSample(
            grid.pack_bits(), spec, traj, float(volume), bool(valid), bool(label),
            int(episode_id), int(trial_index),
        )
