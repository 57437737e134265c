"""Shared episode/trial machinery for the CLI commands.

Every stochastic stream derives from (master seed, stream tag, indices) via
SeedSequence, so results are independent of worker count and identical
across runs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .errors import PlannerFailureError
from .geometry import GridSpec, HeightMapSpec, VoxelGrid, build_height_map, crop_cuboid, voxelize
from .kinematics import ExcavatorModel, TaskTrajectory, ValidityReport, validate
from .learning import ExcavationSample, NetworkSpec, init_model
from .learning.nets import HEAD_CLASSIFIER, HEAD_REGRESSOR, VARIANT_TRAJ, VARIANT_VOXEL
from .planner import CemConfig, PlanResult, plan, plan_highest_heu, plan_random_heu
from .simulator import (
    ClutterScene,
    ExcavationOutcome,
    dump_and_settle,
    execute_excavation,
    gen_scene,
    label_outcome,
    render_cloud,
)

STREAM_COLLECT = 1
STREAM_BENCH_SCENE = 2
STREAM_BENCH_PLAN = 3
STREAM_ABLATE_SCENE = 4
STREAM_ABLATE_PLAN = 5
STREAM_TRAIN_SPLIT = 6
STREAM_GRADCHECK = 7


def derive_rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, tags)]))


def train_val_split(n: int, val_fraction: float, seed: int):
    """Deterministic shuffle split; val takes round(n * fraction) samples."""
    idx = derive_rng(seed, STREAM_TRAIN_SPLIT).permutation(n)
    n_val = int(round(n * val_fraction))
    return idx[: n - n_val], idx[n - n_val:]


@dataclass(frozen=True)
class Rig:
    """Everything a trial needs, resolved once from the config."""

    tray: object
    floor_z: float
    grid_spec: GridSpec
    hm_spec: HeightMapSpec
    arm: ExcavatorModel
    ranges: object
    force: object
    margin: float
    interp_step: float
    raster_spacing: float
    label_threshold: float

    @staticmethod
    def from_config(cfg: RunConfig) -> "Rig":
        return Rig(
            tray=cfg.tray(),
            floor_z=cfg.floor_z(),
            grid_spec=cfg.grid_spec(),
            hm_spec=cfg.heightmap_spec(),
            arm=cfg.excavator(),
            ranges=cfg.heuristic_ranges(),
            force=cfg.force_params(),
            margin=cfg["arm.attack_margin"],
            interp_step=cfg["arm.interp_step"],
            raster_spacing=cfg["sim.raster_spacing"],
            label_threshold=cfg["label.threshold"],
        )


@dataclass(frozen=True)
class Perception:
    voxels: VoxelGrid
    hm: object


def perceive(scene: ClutterScene, rig: Rig) -> Perception:
    """Synthetic cloud -> cuboid filter -> voxel grid, plus the height map."""
    cloud = render_cloud(scene, rig.raster_spacing)
    grid = voxelize(crop_cuboid(cloud, rig.tray), rig.grid_spec)
    hm = build_height_map(cloud, rig.hm_spec)
    return Perception(grid, hm)


def collect_episode(cfg: RunConfig, episode_id: int) -> list[ExcavationSample]:
    """One data-collection episode: fresh scene, sequential heuristic trials."""
    rig = Rig.from_config(cfg)
    rng = derive_rng(cfg["seed"], STREAM_COLLECT, episode_id)
    scene = gen_scene(cfg.scene_config(), rng)
    samples = []
    for trial in range(cfg["collect.trials"]):
        p = perceive(scene, rig)
        heuristic = plan_random_heu if rng.integers(2) == 0 else plan_highest_heu
        traj = heuristic(p.hm, rig.ranges, rig.tray, rng)
        report = validate(traj, p.hm, rig.arm, rig.tray, rig.margin, rig.interp_step)
        out = execute_excavation(
            scene, traj, rig.arm, p.hm, validity=report, force=rig.force, margin=rig.margin
        )
        samples.append(ExcavationSample(
            p.voxels.pack_bits(), rig.grid_spec, traj, out.captured_volume,
            out.valid, label_outcome(out, rig.label_threshold), episode_id, trial,
        ))
        dump_and_settle(scene, out)
    return samples


def _collect_episode_star(args) -> tuple[int, list[ExcavationSample]]:
    cfg_values, episode_id = args
    return episode_id, collect_episode(RunConfig(cfg_values), episode_id)


def run_planned_trial(
    scene: ClutterScene,
    rig: Rig,
    kind: str,
    rng: np.random.Generator,
    model=None,
    cem_cfg: CemConfig | None = None,
    mode: str = "full",
):
    """Perceive, plan (timed), execute, label, dump.

    A planner that exhausts its candidates counts as an invalid trial with
    zero volume rather than aborting the benchmark.
    """
    p = perceive(scene, rig)
    t0 = time.perf_counter()
    try:
        res = plan(
            kind, hm=p.hm, tray=rig.tray, arm=rig.arm, ranges=rig.ranges, rng=rng,
            voxels=p.voxels, model=model, cem_cfg=cem_cfg, mode=mode,
            margin=rig.margin, interp_step=rig.interp_step,
        )
        planner_failed = False
    except PlannerFailureError as e:
        traj = e.best_candidate or TaskTrajectory(0.0, 0.0, -1.5707963267948966, 0.0, 0.0, -2.6)
        res = PlanResult(traj, e.best_score, (),
                         ValidityReport(False, False, ("planner_exhausted",)))
        planner_failed = True
    elapsed = time.perf_counter() - t0
    if planner_failed:
        out = ExcavationOutcome((), 0.0, 0, 0.0, False, "planner_exhausted")
    else:
        out = execute_excavation(
            scene, res.traj, rig.arm, p.hm, validity=res.validity,
            force=rig.force, margin=rig.margin,
        )
    label = label_outcome(out, rig.label_threshold)
    dump_and_settle(scene, out)
    return res, out, label, elapsed


def random_tiny_spec(rng: np.random.Generator, variant: str, head: str) -> NetworkSpec:
    """A <= 5k-parameter spec for finite-difference checks."""
    if variant == VARIANT_TRAJ:
        widths = tuple(int(rng.integers(4, 13)) for _ in range(int(rng.integers(1, 3))))
        spec = NetworkSpec(variant=variant, head=head, input_dims=(6,), conv_blocks=(),
                           fc_widths=widths)
    else:
        ch = int(rng.integers(2, 5))
        fc = int(rng.integers(4, 10))
        spec = NetworkSpec(
            variant=variant, head=head, input_dims=(8, 8, 4, 7),
            conv_blocks=((ch, 3, 2),), fc_widths=(fc,),
        )
    n = init_model(spec, np.random.default_rng(0)).param_count()
    assert n <= 5000, f"tiny spec has {n} parameters"
    return spec
