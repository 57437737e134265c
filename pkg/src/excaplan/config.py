"""Plain-text key=value run configuration.

Every key has a documented default below; unknown keys are rejected so a
typo cannot silently fall back. Values are parsed by the type of their
default (comma lists stay strings and are split by the accessors).
The canonical sha256 of the resolved configuration is embedded in every
output so results are reproducible from (config file, seed) alone.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geometry import CuboidRegion, GridSpec, HeightMapSpec, Point3
from .kinematics import BucketPose, ExcavatorModel
from .learning import NetworkSpec, TrainConfig
from .learning.nets import HEAD_CLASSIFIER, HEAD_REGRESSOR, VARIANT_TRAJ, VARIANT_VOXEL
from .planner import CemConfig, HeuristicRanges, default_norm_ranges
from .simulator import ForceParams, SceneGenConfig

DEG = math.pi / 180.0

# key -> (default, help)
DEFAULTS: dict[str, tuple] = {
    "seed": (0, "master seed; every stream derives from it"),
    "workers": (1, "parallel workers for data collection"),
    # tray / excavation cuboid
    "tray.center_x": (0.0, "tray-frame cuboid center x [m]"),
    "tray.center_y": (0.0, "tray-frame cuboid center y [m]"),
    "tray.center_z": (0.0, "tray-frame cuboid center z [m]"),
    "tray.half_x": (0.19, "cuboid half extent x [m]"),
    "tray.half_y": (0.20, "cuboid half extent y [m]"),
    "tray.half_z": (0.15, "cuboid half extent z [m]"),
    # voxel grid / height map
    "grid.nx": (64, "voxel grid cells along x"),
    "grid.ny": (64, "voxel grid cells along y"),
    "grid.nz": (32, "voxel grid cells along z"),
    "grid.resolution": (0.01, "voxel edge length [m]; grid box centered on the tray origin"),
    "heightmap.cell_size": (0.01, "height-map cell size [m]"),
    # excavator arm
    "arm.base_x": (-0.5, "swing axis x in the tray frame [m]"),
    "arm.base_y": (0.109, "swing axis y in the tray frame [m]"),
    "arm.base_z": (-0.15, "base mount z in the tray frame [m]"),
    "arm.base_height": (0.25, "boom pivot height (tray-frame z) [m]"),
    "arm.boom": (0.45, "boom link length [m]"),
    "arm.stick": (0.35, "stick link length [m]"),
    "arm.bucket": (0.12, "bucket link length [m]"),
    "arm.lift_height": (0.25, "lifting phase target z [m]"),
    "arm.bucket_volume": (450.0, "full bucket volume [cm^3]"),
    "arm.bucket_width": (0.10, "bucket width [m]"),
    "arm.bucket_mouth": (0.075, "bucket mouth length [m]"),
    "arm.bucket_depth": (0.06, "bucket depth [m]"),
    "arm.q1_min": (-3.2, "swing joint lower limit [rad]"),
    "arm.q1_max": (3.2, "swing joint upper limit [rad]"),
    "arm.q2_min": (-1.2, "boom joint lower limit [rad]"),
    "arm.q2_max": (1.6, "boom joint upper limit [rad]"),
    "arm.q3_min": (-3.0, "stick joint lower limit [rad]"),
    "arm.q3_max": (0.0, "stick joint upper limit [rad] (elbow-up)"),
    "arm.q4_min": (-3.8, "bucket joint lower limit [rad]"),
    "arm.q4_max": (1.5, "bucket joint upper limit [rad]"),
    "arm.max_joint_step": (0.35, "max per-joint change between waypoints [rad]"),
    "arm.start_x": (-0.12, "home pose x [m]"),
    "arm.start_y": (0.109, "home pose y [m]"),
    "arm.start_z": (0.25, "home pose z [m]"),
    "arm.start_alpha": (-1.5707963267948966, "home pose excavation angle [rad]"),
    "arm.interp_step": (0.01, "task-space interpolation step [m]"),
    "arm.attack_margin": (0.02, "valid attack range: footprint shrunk by this [m]"),
    # scene generation (training data collection)
    "scene.n_min": (50, "min objects per collection scene"),
    "scene.n_max": (400, "max objects per collection scene"),
    "scene.vertex_min": (10, "min raw vertices per object"),
    "scene.vertex_max": (50, "max raw vertices per object"),
    "scene.coord_max_min": (0.01, "min per-axis object size [m]"),
    "scene.coord_max_max": (0.05, "max per-axis object size [m]"),
    "scene.density": (6.0, "object density [g/cm^3]"),
    # surrogate execution
    "sim.raster_spacing": (0.005, "synthetic cloud raster spacing [m]"),
    "sim.k_pen": (4000.0, "penetration force constant [N/m^2]"),
    "sim.k_drag": (2.0, "payload force multiplier"),
    "sim.g": (9.81, "gravity [m/s^2]"),
    "sim.force_limit": (150.0, "abort threshold for the force proxy [N]"),
    "label.threshold": (134.0, "success label: captured volume strictly above [cm^3]"),
    # heuristic sampling ranges
    "heu.alpha_min_deg": (-120.0, "attack angle low [deg]"),
    "heu.alpha_max_deg": (-60.0, "attack angle high [deg]"),
    "heu.beta_min_deg": (-180.0, "closing angle low [deg]"),
    "heu.beta_max_deg": (-120.0, "closing angle high [deg]"),
    "heu.d_min": (0.05, "penetration depth low [m]"),
    "heu.d_max": (0.2, "penetration depth high [m]"),
    "heu.l_min": (0.05, "dragging length low [m]"),
    "heu.l_max": (0.4, "dragging length high [m]"),
    # network
    "net.input_nx": (32, "conv input cells x (grid average-pooled down to this)"),
    "net.input_ny": (32, "conv input cells y"),
    "net.input_nz": (16, "conv input cells z"),
    "net.conv_channels": ("16,32,64,128", "conv block output channels"),
    "net.conv_kernel": (3, "conv kernel size"),
    "net.conv_stride": (2, "conv stride"),
    "net.fc_widths": ("512,256,128", "fully-connected hidden widths"),
    "net.bn_momentum": (0.1, "batch-norm running-stat momentum"),
    "net.bn_eps": (1e-5, "batch-norm epsilon"),
    # training
    "train.batch_size": (64, "minibatch size"),
    "train.epochs": (50, "training epochs"),
    "train.lr": (0.1, "initial learning rate"),
    "train.lr_decay": (0.1, "learning-rate decay factor"),
    "train.lr_decay_every": (10, "epochs between decays"),
    "train.beta1": (0.9, "Adam beta1"),
    "train.beta2": (0.999, "Adam beta2"),
    "train.adam_eps": (1e-8, "Adam epsilon"),
    "train.oversample": (True, "resample positives to match negatives each epoch"),
    "train.val_fraction": (0.1, "validation share of the dataset"),
    # CEM planner
    "cem.n_init": (256, "heuristic trajectories fitting the initial Gaussian"),
    "cem.n_iters": (5, "CEM iterations"),
    "cem.n_samples": (256, "samples per iteration"),
    "cem.n_elite": (64, "elite samples per refit"),
    "cem.n_final": (64, "final candidate draws"),
    "cem.variance_floor": (1e-6, "variance floor in normalized units"),
    "cem.clamp_range_widths": (3.0, "sample clamp in range widths"),
    # command scales
    "collect.episodes": (250, "collection episodes"),
    "collect.trials": (20, "trials per collection episode"),
    "bench.episodes": (20, "benchmark episodes per planner"),
    "bench.trials": (10, "trials per benchmark episode"),
    "bench.n_min": (200, "min objects per benchmark scene"),
    "bench.n_max": (400, "max objects per benchmark scene"),
    "ablate.trials": (200, "paired scenes per ablation mode"),
    "stats.bin_width": (25.0, "volume histogram bin width [cm^3]"),
}


def _parse_value(key: str, raw: str, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError as e:
        raise ConfigError(f"bad value for {key}: {raw!r}") from e


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


class RunConfig:
    def __init__(self, values: dict):
        self.values = values

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        values = {k: d for k, (d, _h) in DEFAULTS.items()}
        if path is not None:
            with open(path) as f:
                for lineno, line in enumerate(f, 1):
                    line = line.strip()
                    if not line or line.startswith("#"):
                        continue
                    if "=" not in line:
                        raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
                    key, raw = line.split("=", 1)
                    key = key.strip()
                    if key not in DEFAULTS:
                        raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                    values[key] = _parse_value(key, raw, DEFAULTS[key][0])
        for key, val in (overrides or {}).items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = val
        return cls(values)

    def __getitem__(self, key: str):
        return self.values[key]

    def canonical_text(self) -> str:
        return "".join(f"{k}={_fmt(self.values[k])}\n" for k in sorted(self.values))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()

    def _int_list(self, key: str) -> tuple[int, ...]:
        try:
            return tuple(int(v) for v in str(self.values[key]).split(",") if v.strip())
        except ValueError as e:
            raise ConfigError(f"bad integer list for {key}: {self.values[key]!r}") from e

    # -- domain object builders ------------------------------------------

    def tray(self) -> CuboidRegion:
        v = self.values
        return CuboidRegion(
            Point3(v["tray.center_x"], v["tray.center_y"], v["tray.center_z"]),
            np.array([v["tray.half_x"], v["tray.half_y"], v["tray.half_z"]]),
        )

    def floor_z(self) -> float:
        return self.values["tray.center_z"] - self.values["tray.half_z"]

    def grid_spec(self) -> GridSpec:
        v = self.values
        return GridSpec(dims=(v["grid.nx"], v["grid.ny"], v["grid.nz"]),
                        resolution=v["grid.resolution"])

    def heightmap_spec(self) -> HeightMapSpec:
        v = self.values
        cell = v["heightmap.cell_size"]
        tray = self.tray()
        nx = int(round(2 * tray.half_extents[0] / cell))
        ny = int(round(2 * tray.half_extents[1] / cell))
        origin = (tray.center.x - tray.half_extents[0], tray.center.y - tray.half_extents[1])
        return HeightMapSpec(dims=(nx, ny), cell_size=cell, origin=origin, floor_z=self.floor_z())

    def excavator(self) -> ExcavatorModel:
        v = self.values
        return ExcavatorModel(
            base_x=v["arm.base_x"], base_y=v["arm.base_y"], base_z=v["arm.base_z"],
            base_height=v["arm.base_height"],
            boom_length=v["arm.boom"], stick_length=v["arm.stick"],
            bucket_length=v["arm.bucket"], lift_height=v["arm.lift_height"],
            bucket_volume_cm3=v["arm.bucket_volume"], bucket_width=v["arm.bucket_width"],
            bucket_mouth_length=v["arm.bucket_mouth"], bucket_depth=v["arm.bucket_depth"],
            joint_limits=(
                (v["arm.q1_min"], v["arm.q1_max"]), (v["arm.q2_min"], v["arm.q2_max"]),
                (v["arm.q3_min"], v["arm.q3_max"]), (v["arm.q4_min"], v["arm.q4_max"]),
            ),
            max_joint_step=v["arm.max_joint_step"],
            start_pose=BucketPose(v["arm.start_x"], v["arm.start_y"],
                                  v["arm.start_z"], v["arm.start_alpha"]),
        )

    def scene_config(self, n_range: tuple[int, int] | None = None) -> SceneGenConfig:
        v = self.values
        return SceneGenConfig(
            n_objects_range=n_range or (v["scene.n_min"], v["scene.n_max"]),
            vertex_count_range=(v["scene.vertex_min"], v["scene.vertex_max"]),
            coord_max_range=(v["scene.coord_max_min"], v["scene.coord_max_max"]),
            tray=self.tray(),
            density=v["scene.density"],
        )

    def bench_n_range(self) -> tuple[int, int]:
        return (self.values["bench.n_min"], self.values["bench.n_max"])

    def force_params(self) -> ForceParams:
        v = self.values
        return ForceParams(k_pen=v["sim.k_pen"], k_drag=v["sim.k_drag"], g=v["sim.g"],
                           force_limit=v["sim.force_limit"])

    def heuristic_ranges(self) -> HeuristicRanges:
        v = self.values
        return HeuristicRanges(
            alpha_range=(v["heu.alpha_min_deg"] * DEG, v["heu.alpha_max_deg"] * DEG),
            beta_range=(v["heu.beta_min_deg"] * DEG, v["heu.beta_max_deg"] * DEG),
            d_range=(v["heu.d_min"], v["heu.d_max"]),
            l_range=(v["heu.l_min"], v["heu.l_max"]),
        )

    def network_spec(self, variant: str, head: str) -> NetworkSpec:
        v = self.values
        norm = default_norm_ranges(self.tray(), self.heuristic_ranges())
        if variant == VARIANT_TRAJ:
            return NetworkSpec(
                variant=variant, head=head, input_dims=(6,), conv_blocks=(),
                fc_widths=self._int_list("net.fc_widths"), traj_norm_ranges=norm,
                volume_scale=v["arm.bucket_volume"],
                bn_momentum=v["net.bn_momentum"], bn_eps=v["net.bn_eps"],
            )
        k, s = v["net.conv_kernel"], v["net.conv_stride"]
        blocks = tuple((c, k, s) for c in self._int_list("net.conv_channels"))
        g = self.grid_spec()
        inp = (v["net.input_nx"], v["net.input_ny"], v["net.input_nz"], 7)
        for gd, pd in zip(g.dims, inp):
            if gd % pd:
                raise ConfigError(f"grid dims {g.dims} not divisible by net input dims {inp[:3]}")
        return NetworkSpec(
            variant=variant, head=head, input_dims=inp, conv_blocks=blocks,
            fc_widths=self._int_list("net.fc_widths"), traj_norm_ranges=norm,
            volume_scale=v["arm.bucket_volume"],
            bn_momentum=v["net.bn_momentum"], bn_eps=v["net.bn_eps"],
        )

    def train_config(self, seed: int | None = None) -> TrainConfig:
        v = self.values
        return TrainConfig(
            batch_size=v["train.batch_size"], epochs=v["train.epochs"], lr=v["train.lr"],
            lr_decay=v["train.lr_decay"], lr_decay_every=v["train.lr_decay_every"],
            beta1=v["train.beta1"], beta2=v["train.beta2"], adam_eps=v["train.adam_eps"],
            oversample_positives=v["train.oversample"],
            seed=self.values["seed"] if seed is None else seed,
        )

    def cem_config(self, seed: int = 0) -> CemConfig:
        v = self.values
        return CemConfig(
            n_init=v["cem.n_init"], n_iters=v["cem.n_iters"], n_samples=v["cem.n_samples"],
            n_elite=v["cem.n_elite"], n_final=v["cem.n_final"],
            variance_floor=v["cem.variance_floor"],
            clamp_range_widths=v["cem.clamp_range_widths"], seed=seed,
        )


HEAD_BY_FLAG = {"classify": HEAD_CLASSIFIER, "regress": HEAD_REGRESSOR}
VARIANT_BY_FLAG = {"voxel": VARIANT_VOXEL, "traj": VARIANT_TRAJ}
