"""Excavation planners: the two grid-map heuristics, the cross-entropy-method
optimizer over a learned success predictor, and a uniform dispatch front end.

The CEM state (mean/variance of a diagonal Gaussian) lives in normalized
parameter space, each trajectory parameter mapped to [-1, 1] over the same
ranges the predictor was trained with, so that all six coordinates have
comparable scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ModelModeError, PlannerFailureError
from .geometry import CuboidRegion, HeightMap, VoxelGrid
from .kinematics import (
    DEFAULT_ATTACK_MARGIN,
    DEFAULT_INTERP_STEP,
    ExcavatorModel,
    TaskTrajectory,
    ValidityReport,
    validate,
)
from .learning import Model, VARIANT_TRAJ, VARIANT_VOXEL, forward, normalize_trajectory
from .learning.nets import batch_from_pooled, pooled_occupancy

MODE_FULL = "full"
MODE_RANDOM_POA = "random_poa"
MODE_RANDOM_GTP = "random_gtp"
PLANNER_KINDS = ("random-heu", "highest-heu", "cem-voxel", "cem-traj")

PLAN_CSV_HEADER = "planner,x,y,alpha,d,l,beta,score,valid,ik_valid,attack_in_range"

DEG = math.pi / 180.0


@dataclass(frozen=True)
class HeuristicRanges:
    """Uniform sampling ranges for the four geometric trajectory parameters."""

    alpha_range: tuple[float, float] = (-120.0 * DEG, -60.0 * DEG)
    beta_range: tuple[float, float] = (-180.0 * DEG, -120.0 * DEG)
    d_range: tuple[float, float] = (0.05, 0.2)
    l_range: tuple[float, float] = (0.05, 0.4)

    def __post_init__(self):
        for name in ("alpha_range", "beta_range", "d_range", "l_range"):
            lo, hi = getattr(self, name)
            if lo >= hi:
                raise ConfigError(f"{name} must be ordered, got ({lo}, {hi})")


@dataclass(frozen=True)
class CemConfig:
    n_init: int = 256
    n_iters: int = 5
    n_samples: int = 256
    n_elite: int = 64
    n_final: int = 64
    variance_floor: float = 1e-6
    clamp_range_widths: float = 3.0  # samples clamped to +/- this many range widths
    seed: int = 0

    def __post_init__(self):
        if self.n_elite > self.n_samples:
            raise ConfigError("n_elite must not exceed n_samples")
        for name in ("n_init", "n_iters", "n_samples", "n_elite", "n_final"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")


@dataclass(frozen=True)
class TrajDistribution:
    """Diagonal Gaussian over normalized trajectory parameters."""

    mean: np.ndarray
    variance: np.ndarray


@dataclass(frozen=True)
class PlanResult:
    traj: TaskTrajectory
    score: float
    per_iteration: tuple  # (elite mean score, best-so-far score) per CEM iteration
    validity: ValidityReport
    distribution: TrajDistribution | None = None  # final CEM state


def default_norm_ranges(tray: CuboidRegion, ranges: HeuristicRanges):
    """Normalization ranges when no trained model supplies them."""
    return (
        (tray.center.x - tray.half_extents[0], tray.center.x + tray.half_extents[0]),
        (tray.center.y - tray.half_extents[1], tray.center.y + tray.half_extents[1]),
        ranges.alpha_range,
        ranges.d_range,
        ranges.l_range,
        ranges.beta_range,
    )


def eligible_cells(hm: HeightMap, tray: CuboidRegion):
    """Height-map cells whose centers lie inside the tray footprint, in
    row-major (x-major) order. Returns (centers (M, 2), heights (M,))."""
    nx, ny = hm.dims
    xs = hm.origin[0] + (np.arange(nx) + 0.5) * hm.cell_size
    ys = hm.origin[1] + (np.arange(ny) + 0.5) * hm.cell_size
    keep_x = np.abs(xs - tray.center.x) <= tray.half_extents[0]
    keep_y = np.abs(ys - tray.center.y) <= tray.half_extents[1]
    gx, gy = np.meshgrid(xs[keep_x], ys[keep_y], indexing="ij")
    centers = np.column_stack([gx.ravel(), gy.ravel()])
    heights = hm.heights[np.ix_(keep_x, keep_y)].ravel()
    if len(centers) == 0:
        raise ConfigError("no height-map cell lies inside the tray footprint")
    return centers, heights


def _draw_gtp(ranges: HeuristicRanges, rng: np.random.Generator):
    alpha = rng.uniform(*ranges.alpha_range)
    d = rng.uniform(*ranges.d_range)
    l = rng.uniform(*ranges.l_range)
    beta = rng.uniform(*ranges.beta_range)
    return alpha, d, l, beta


def plan_random_heu(
    hm: HeightMap, ranges: HeuristicRanges, tray: CuboidRegion, rng: np.random.Generator
) -> TaskTrajectory:
    """Attack at the center of a uniformly chosen in-tray cell; uniform GTP."""
    centers, _ = eligible_cells(hm, tray)
    k = int(rng.integers(len(centers)))
    alpha, d, l, beta = _draw_gtp(ranges, rng)
    return TaskTrajectory(centers[k, 0], centers[k, 1], alpha, d, l, beta)


def plan_highest_heu(
    hm: HeightMap, ranges: HeuristicRanges, tray: CuboidRegion, rng: np.random.Generator
) -> TaskTrajectory:
    """Attack at the center of the max-height in-tray cell (ties: lowest
    row-major index); uniform GTP."""
    centers, heights = eligible_cells(hm, tray)
    k = int(np.argmax(heights))
    alpha, d, l, beta = _draw_gtp(ranges, rng)
    return TaskTrajectory(centers[k, 0], centers[k, 1], alpha, d, l, beta)


def score_batch(model: Model, voxels: VoxelGrid | None, trajs) -> np.ndarray:
    """Predicted success probability for each trajectory against one scene.

    Pure and order-preserving; the scene occupancy is pooled once and shared
    across the batch. Chunked to bound memory.
    """
    if model.mode != "eval":
        raise ModelModeError("score_batch requires an eval-mode model")
    if len(trajs) == 0:
        return np.zeros(0)
    spec = model.spec
    params = np.array([normalize_trajectory(t, spec.traj_norm_ranges) for t in trajs])
    out = np.empty(len(trajs), dtype=np.float64)
    chunk = 64
    if spec.variant == VARIANT_TRAJ:
        for s in range(0, len(trajs), chunk):
            out[s:s + chunk] = forward(model, params[s:s + chunk].astype(model.dtype))
        return out
    pooled = pooled_occupancy(voxels, spec, model.dtype)
    for s in range(0, len(trajs), chunk):
        n = min(chunk, len(trajs) - s)
        occ = np.broadcast_to(pooled, (n, *pooled.shape))
        x = batch_from_pooled(occ, params[s:s + n], model.dtype)
        out[s:s + n] = forward(model, x)
    return out


def refit_elite(samples: np.ndarray, floor: float):
    """Mean and floor-clamped population variance of the elite rows."""
    mean = samples.mean(axis=0)
    var = np.maximum(samples.var(axis=0), floor)
    return mean, var


def _traj_from_normalized(u: np.ndarray, norm_ranges) -> TaskTrajectory:
    vals = np.empty(6)
    for i, (lo, hi) in enumerate(norm_ranges):
        vals[i] = (u[i] + 1.0) / 2.0 * (hi - lo) + lo
    vals[3] = max(vals[3], 0.0)  # physical bounds: depth and drag length
    vals[4] = max(vals[4], 0.0)
    return TaskTrajectory(*vals)


def cem_plan(
    voxels: VoxelGrid | None,
    hm: HeightMap,
    model: Model | None,
    arm: ExcavatorModel,
    tray: CuboidRegion,
    cfg: CemConfig,
    ranges: HeuristicRanges,
    mode: str = MODE_FULL,
    rng: np.random.Generator | None = None,
    score_fn=None,
    norm_ranges=None,
    margin: float = DEFAULT_ATTACK_MARGIN,
    interp_step: float = DEFAULT_INTERP_STEP,
) -> PlanResult:
    """Cross-entropy-method trajectory optimization against a scorer.

    Initializes the Gaussian from random-heuristic trajectories, runs
    `n_iters` sample/score/refit rounds, then draws `n_final` candidates and
    returns the best-scoring one that validates (one full re-draw before
    giving up). Ablation modes replace the chosen candidate's attack point
    (random_poa) or its geometric parameters (random_gtp) before validation.
    """
    if mode not in (MODE_FULL, MODE_RANDOM_POA, MODE_RANDOM_GTP):
        raise ConfigError(f"unknown CEM mode {mode!r}")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if norm_ranges is None:
        if model is not None:
            norm_ranges = model.spec.traj_norm_ranges
        else:
            norm_ranges = default_norm_ranges(tray, ranges)
    if score_fn is None:
        if model is None:
            raise ConfigError("cem_plan needs a model or an explicit score_fn")
        score_fn = lambda ts: score_batch(model, voxels, ts)

    clamp = cfg.clamp_range_widths * 2.0  # one range maps to width 2 in normalized space

    init = [plan_random_heu(hm, ranges, tray, rng) for _ in range(cfg.n_init)]
    u_init = np.array([normalize_trajectory(t, norm_ranges) for t in init])
    mean, var = refit_elite(u_init, cfg.variance_floor)

    per_iteration = []
    best = -np.inf
    for _ in range(cfg.n_iters):
        u = rng.normal(mean, np.sqrt(var), size=(cfg.n_samples, 6))
        np.clip(u, -clamp, clamp, out=u)
        trajs = [_traj_from_normalized(row, norm_ranges) for row in u]
        scores = np.asarray(score_fn(trajs), dtype=np.float64)
        elite = np.argsort(-scores, kind="stable")[:cfg.n_elite]
        mean, var = refit_elite(u[elite], cfg.variance_floor)
        best = max(best, float(scores.max()))
        per_iteration.append((float(scores[elite].mean()), best))

    final_dist = TrajDistribution(mean.copy(), var.copy())
    best_invalid, best_invalid_score = None, -np.inf
    for _attempt in range(2):  # one full re-draw before failing
        u = rng.normal(mean, np.sqrt(var), size=(cfg.n_final, 6))
        np.clip(u, -clamp, clamp, out=u)
        trajs = [_traj_from_normalized(row, norm_ranges) for row in u]
        scores = np.asarray(score_fn(trajs), dtype=np.float64)
        order = np.argsort(-scores, kind="stable")
        for k in order:
            cand = trajs[k]
            if mode == MODE_RANDOM_POA:
                poa = plan_random_heu(hm, ranges, tray, rng)
                cand = TaskTrajectory(poa.x, poa.y, cand.alpha, cand.d, cand.l, cand.beta)
            elif mode == MODE_RANDOM_GTP:
                alpha, d, l, beta = _draw_gtp(ranges, rng)
                cand = TaskTrajectory(cand.x, cand.y, alpha, d, l, beta)
            report = validate(cand, hm, arm, tray, margin, interp_step)
            if report.valid:
                score = float(scores[k]) if cand is trajs[k] else float(score_fn([cand])[0])
                return PlanResult(cand, score, tuple(per_iteration), report, final_dist)
            if scores[k] > best_invalid_score:
                best_invalid, best_invalid_score = cand, float(scores[k])
    raise PlannerFailureError(
        "no valid candidate in the final CEM draws", best_invalid, best_invalid_score
    )


def plan(
    kind: str,
    *,
    hm: HeightMap,
    tray: CuboidRegion,
    arm: ExcavatorModel,
    ranges: HeuristicRanges,
    rng: np.random.Generator,
    voxels: VoxelGrid | None = None,
    model: Model | None = None,
    cem_cfg: CemConfig | None = None,
    mode: str = MODE_FULL,
    margin: float = DEFAULT_ATTACK_MARGIN,
    interp_step: float = DEFAULT_INTERP_STEP,
) -> PlanResult:
    """Uniform dispatch over the planner roster.

    Heuristic planners carry score 0 and their validity report; learned
    planners run the CEM loop over the matching model variant.
    """
    if kind == "random-heu" or kind == "highest-heu":
        f = plan_random_heu if kind == "random-heu" else plan_highest_heu
        traj = f(hm, ranges, tray, rng)
        return PlanResult(traj, 0.0, (), validate(traj, hm, arm, tray, margin, interp_step))
    if kind in ("cem-voxel", "cem-traj"):
        if model is None:
            raise ConfigError(f"{kind} needs a trained model")
        want = VARIANT_VOXEL if kind == "cem-voxel" else VARIANT_TRAJ
        if model.spec.variant != want:
            raise ConfigError(f"{kind} needs a {want} model, got {model.spec.variant}")
        return cem_plan(
            voxels, hm, model, arm, tray, cem_cfg or CemConfig(), ranges,
            mode=mode, rng=rng, margin=margin, interp_step=interp_step,
        )
    raise ConfigError(f"unknown planner kind {kind!r}")


def plan_result_row(planner: str, r: PlanResult) -> list[str]:
    """One CSV row in the pinned export schema (booleans as 0/1)."""
    t = r.traj
    return [
        planner,
        repr(float(t.x)), repr(float(t.y)), repr(float(t.alpha)),
        repr(float(t.d)), repr(float(t.l)), repr(float(t.beta)),
        repr(float(r.score)),
        str(int(r.validity.valid)), str(int(r.validity.ik_valid)),
        str(int(r.validity.attack_in_range)),
    ]
