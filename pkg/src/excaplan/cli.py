"""Command-line entry point.

Subcommands: collect, train, eval, bench, ablate, stats, verify-dataset,
gradcheck. Exit codes: 0 success, 2 config error, 3 data error, 4 numeric
error. Every CSV starts with a `# config=<sha256> seed=<n>` comment and
binary outputs get a `.meta.json` sidecar, so any artifact can be traced
back to (config file, seed).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import HEAD_BY_FLAG, RunConfig, VARIANT_BY_FLAG
from .dataset import read_dataset, verify_dataset, write_dataset
from .errors import ConfigError, DataError, ExcaplanError, NumericError
from .figures import (
    save_bench_summary,
    save_poa_scatter,
    save_training_curve,
    save_volume_histograms,
)
from .harness import (
    STREAM_ABLATE_PLAN,
    STREAM_ABLATE_SCENE,
    STREAM_BENCH_PLAN,
    STREAM_BENCH_SCENE,
    STREAM_GRADCHECK,
    Rig,
    _collect_episode_star,
    collect_episode,
    derive_rng,
    random_tiny_spec,
    run_planned_trial,
    train_val_split,
)
from .learning import (
    evaluate_classifier,
    evaluate_regressor,
    gradient_check,
    load_model,
    save_model,
    train,
)
from .learning.nets import HEAD_CLASSIFIER, VARIANT_TRAJ, VARIANT_VOXEL
from .planner import MODE_FULL, MODE_RANDOM_GTP, MODE_RANDOM_POA, PLANNER_KINDS
from .simulator import gen_scene

MODE_BY_FLAG = {"full": MODE_FULL, "random-poa": MODE_RANDOM_POA, "random-gtp": MODE_RANDOM_GTP}

BENCH_COLUMNS = [
    "planner", "x", "y", "alpha", "d", "l", "beta", "score",
    "valid", "ik_valid", "attack_in_range",
    "episode", "trial", "volume_cm3", "object_count", "success",
]
ABLATE_COLUMNS = BENCH_COLUMNS[:11] + ["mode", "trial", "volume_cm3", "object_count", "success"]


def _f(v: float) -> str:
    return repr(float(v))


def _load_config(args) -> RunConfig:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    return RunConfig.load(getattr(args, "config", None), overrides)


def _comment_line(cfg: RunConfig) -> str:
    return f"# config={cfg.config_hash()} seed={cfg['seed']}"


def _write_csv(path, cfg: RunConfig, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", newline="") as f:
        f.write(_comment_line(cfg) + "\n")
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def _read_csv(path) -> list[dict]:
    with open(path) as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _write_meta(path, cfg: RunConfig, command: str) -> None:
    meta = {"command": command, "config_sha256": cfg.config_hash(), "seed": cfg["seed"]}
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def _mean_std(values) -> tuple[float, float]:
    if not values:
        return 0.0, 0.0
    a = np.asarray(values, dtype=np.float64)
    return float(a.mean()), float(a.std())


# -- collect -------------------------------------------------------------

def cmd_collect(args) -> int:
    cfg = _load_config(args)
    if args.episodes is not None:
        cfg.values["collect.episodes"] = args.episodes
    if args.trials is not None:
        cfg.values["collect.trials"] = args.trials
    episodes = cfg["collect.episodes"]
    workers = cfg["workers"]
    if workers > 1:
        jobs = [(cfg.values, e) for e in range(episodes)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_collect_episode_star, jobs, chunksize=1))
        results.sort(key=lambda r: r[0])
        samples = [s for _, ep_samples in results for s in ep_samples]
    else:
        samples = [s for e in range(episodes) for s in collect_episode(cfg, e)]
    write_dataset(args.out, samples, cfg.grid_spec())
    _write_meta(args.out, cfg, "collect")
    n = len(samples)
    pos = sum(s.label for s in samples)
    valid = sum(s.valid for s in samples)
    print(f"collected {n} samples over {episodes} episodes -> {args.out}")
    print(f"  positive rate {pos / n:.3f}  valid rate {valid / n:.3f}")
    return 0


# -- train ---------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = _load_config(args)
    samples = read_dataset(args.dataset, cfg.grid_spec())
    train_idx, val_idx = train_val_split(len(samples), cfg["train.val_fraction"], cfg["seed"])
    train_set = [samples[i] for i in train_idx]
    val_set = [samples[i] for i in val_idx]

    spec = cfg.network_spec(VARIANT_BY_FLAG[args.variant], HEAD_BY_FLAG[args.head])
    result = train(train_set, spec, cfg.train_config(), val_set)
    save_model(result.model, args.out)
    _write_meta(args.out, cfg, "train")

    curve_path = Path(str(args.out) + ".curve.csv")
    if spec.head == HEAD_CLASSIFIER:
        header = ["epoch", "loss", "val_accuracy", "val_precision", "val_recall", "val_f1"]
    else:
        header = ["epoch", "loss", "val_l1_mean", "val_l1_std"]
    rows = []
    for r in result.curve:
        rows.append([str(r["epoch"])] + [_f(r.get(k, float("nan"))) for k in header[1:]])
    _write_csv(curve_path, cfg, header, rows)
    save_training_curve(result.curve, Path(str(args.out) + ".curve.png"))

    frac = result.positive_fractions
    print(f"trained {spec.variant}/{spec.head} on {len(train_set)} samples "
          f"({len(val_set)} validation) -> {args.out}")
    if frac:
        print(f"  epoch positive fraction in [{min(frac):.3f}, {max(frac):.3f}]")
    if result.curve:
        last = result.curve[-1]
        keys = [k for k in ("loss", "val_accuracy", "val_f1", "val_l1_mean") if k in last]
        print("  final " + "  ".join(f"{k}={last[k]:.4f}" for k in keys))
    return 0


# -- eval ----------------------------------------------------------------

def cmd_eval(args) -> int:
    cfg = _load_config(args)
    model = load_model(args.model)
    samples = read_dataset(args.dataset, cfg.grid_spec())
    if model.spec.head == HEAD_CLASSIFIER:
        m = evaluate_classifier(model, samples)
        header = ["accuracy", "precision", "recall", "f1"]
        values = [m.accuracy, m.precision, m.recall, m.f1]
    else:
        m = evaluate_regressor(model, samples)
        header = ["l1_mean", "l1_std"]
        values = [m.l1_mean, m.l1_std]
    for k, v in zip(header, values):
        print(f"{k:>10} {v:.4f}")
    if args.out:
        _write_csv(args.out, cfg, header, [[_f(v) for v in values]])
    return 0


# -- bench ---------------------------------------------------------------

def _load_planner_models(args, planners):
    models = {}
    for kind in planners:
        if kind not in PLANNER_KINDS:
            raise ConfigError(f"unknown planner {kind!r}")
    if "cem-voxel" in planners:
        if not args.voxel_model:
            raise ConfigError("cem-voxel requires --voxel-model")
        models["cem-voxel"] = load_model(args.voxel_model)
        if models["cem-voxel"].spec.variant != VARIANT_VOXEL:
            raise ConfigError("--voxel-model is not a voxel-variant model")
    if "cem-traj" in planners:
        if not args.traj_model:
            raise ConfigError("cem-traj requires --traj-model")
        models["cem-traj"] = load_model(args.traj_model)
        if models["cem-traj"].spec.variant != VARIANT_TRAJ:
            raise ConfigError("--traj-model is not a trajectory-variant model")
    return models


def _trial_row(prefix: list, res, out, label) -> list[str]:
    t = res.traj
    return prefix[:1] + [
        _f(t.x), _f(t.y), _f(t.alpha), _f(t.d), _f(t.l), _f(t.beta), _f(res.score),
        str(int(res.validity.valid)), str(int(res.validity.ik_valid)),
        str(int(res.validity.attack_in_range)),
    ] + prefix[1:] + [_f(out.captured_volume), str(out.captured_count), str(int(label))]


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    if args.episodes is not None:
        cfg.values["bench.episodes"] = args.episodes
    if args.trials is not None:
        cfg.values["bench.trials"] = args.trials
    planners = [p.strip() for p in args.planner.split(",") if p.strip()]
    models = _load_planner_models(args, planners)
    rig = Rig.from_config(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows: list[list[str]] = []
    stats: dict[str, dict] = {
        k: {"volume": [], "count": [], "success": [], "time": []} for k in planners
    }
    episodes, trials = cfg["bench.episodes"], cfg["bench.trials"]
    for ep in range(episodes):
        master = gen_scene(
            cfg.scene_config(cfg.bench_n_range()),
            derive_rng(cfg["seed"], STREAM_BENCH_SCENE, ep),
        )
        for pi, kind in enumerate(planners):
            scene = master.clone()
            rng = derive_rng(cfg["seed"], STREAM_BENCH_PLAN, ep, pi)
            for trial in range(trials):
                res, out, label, elapsed = run_planned_trial(
                    scene, rig, kind, rng, models.get(kind), cfg.cem_config(),
                )
                rows.append(_trial_row([kind, str(ep), str(trial)], res, out, label))
                s = stats[kind]
                s["volume"].append(out.captured_volume)
                s["count"].append(out.captured_count)
                s["success"].append(label)
                s["time"].append(elapsed)
        print(f"episode {ep + 1}/{episodes} done", flush=True)

    _write_csv(out_dir / "bench_trials.csv", cfg, BENCH_COLUMNS, rows)

    summary_header = ["planner", "trials", "volume_mean", "volume_std", "count_mean",
                      "count_std", "success_rate", "time_mean", "time_std"]
    summary_rows, summary_dicts = [], []
    print(f"{'planner':>14} {'volume cm^3':>16} {'objects':>13} {'success':>8} {'time s':>14}")
    for kind in planners:
        s = stats[kind]
        vm, vs = _mean_std(s["volume"])
        cm, cs = _mean_std(s["count"])
        tm, ts = _mean_std(s["time"])
        rate = float(np.mean(s["success"])) if s["success"] else 0.0
        summary_rows.append([kind, str(len(s["volume"])), _f(vm), _f(vs), _f(cm), _f(cs),
                             _f(rate), _f(tm), _f(ts)])
        summary_dicts.append({"planner": kind, "volume_mean": vm, "volume_std": vs})
        print(f"{kind:>14} {vm:8.2f} ({vs:6.2f}) {cm:6.2f} ({cs:5.2f}) {rate:8.3f} "
              f"{tm:7.3f} ({ts:6.3f})")
    _write_csv(out_dir / "bench_summary.csv", cfg, summary_header, summary_rows)
    save_bench_summary(summary_dicts, out_dir / "bench_summary.png")
    return 0


# -- ablate ----------------------------------------------------------------

def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    if args.trials is not None:
        cfg.values["ablate.trials"] = args.trials
    if not args.voxel_model:
        raise ConfigError("ablate requires --voxel-model")
    model = load_model(args.voxel_model)
    if model.spec.variant != VARIANT_VOXEL:
        raise ConfigError("--voxel-model is not a voxel-variant model")
    modes = [MODE_BY_FLAG[args.mode]] if args.mode else [MODE_FULL, MODE_RANDOM_POA,
                                                         MODE_RANDOM_GTP]
    rig = Rig.from_config(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    n_trials = cfg["ablate.trials"]
    rows: list[list[str]] = []
    volumes: dict[str, list[float]] = {m: [] for m in modes}
    counts: dict[str, list[int]] = {m: [] for m in modes}
    successes: dict[str, list[bool]] = {m: [] for m in modes}
    for trial in range(n_trials):
        master = gen_scene(
            cfg.scene_config(cfg.bench_n_range()),
            derive_rng(cfg["seed"], STREAM_ABLATE_SCENE, trial),
        )
        for mi, mode in enumerate(modes):
            scene = master.clone()
            rng = derive_rng(cfg["seed"], STREAM_ABLATE_PLAN, trial, mi)
            res, out, label, _elapsed = run_planned_trial(
                scene, rig, "cem-voxel", rng, model, cfg.cem_config(), mode=mode,
            )
            rows.append(_trial_row(["cem-voxel", mode, str(trial)], res, out, label))
            volumes[mode].append(out.captured_volume)
            counts[mode].append(out.captured_count)
            successes[mode].append(label)
        if (trial + 1) % 20 == 0:
            print(f"trial {trial + 1}/{n_trials} done", flush=True)

    _write_csv(out_dir / "ablate_trials.csv", cfg, ABLATE_COLUMNS, rows)
    header = ["mode", "trials", "volume_mean", "volume_std", "count_mean", "count_std",
              "success_rate"]
    summary_rows = []
    print(f"{'mode':>12} {'volume cm^3':>16} {'objects':>13} {'success':>8}")
    for mode in modes:
        vm, vs = _mean_std(volumes[mode])
        cm, cs = _mean_std(counts[mode])
        rate = float(np.mean(successes[mode])) if successes[mode] else 0.0
        summary_rows.append([mode, str(len(volumes[mode])), _f(vm), _f(vs), _f(cm), _f(cs),
                             _f(rate)])
        print(f"{mode:>12} {vm:8.2f} ({vs:6.2f}) {cm:6.2f} ({cs:5.2f}) {rate:8.3f}")
    _write_csv(out_dir / "ablate_summary.csv", cfg, header, summary_rows)
    if MODE_FULL in modes and MODE_RANDOM_POA in modes:
        from scipy.stats import binomtest

        diffs = np.array(volumes[MODE_FULL]) - np.array(volumes[MODE_RANDOM_POA])
        wins, losses = int((diffs > 0).sum()), int((diffs < 0).sum())
        if wins + losses:
            p = binomtest(wins, wins + losses, alternative="greater").pvalue
            print(f"paired sign test full > random_poa: {wins}/{wins + losses} wins, p={p:.4g}")
    return 0


# -- stats -----------------------------------------------------------------

def cmd_stats(args) -> int:
    cfg = _load_config(args)
    rows = _read_csv(args.trials_csv)
    group = args.group
    if rows and group not in rows[0]:
        raise DataError(f"{args.trials_csv}: no {group!r} column")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    bin_width = cfg["stats.bin_width"]

    parsed = [
        {
            group: r[group],
            "volume_cm3": float(r["volume_cm3"]),
            "x": float(r["x"]),
            "y": float(r["y"]),
            "alpha": float(r["alpha"]),
            "d": float(r["d"]),
            "l": float(r["l"]),
            "beta": float(r["beta"]),
        }
        for r in rows
    ]
    names = list(dict.fromkeys(r[group] for r in parsed))

    hist_rows = []
    for name in names:
        vols = [r["volume_cm3"] for r in parsed if r[group] == name]
        n_bins = int(max(vols) // bin_width) + 1 if vols else 0
        for b in range(n_bins):
            lo, hi = b * bin_width, (b + 1) * bin_width
            count = sum(1 for v in vols if lo <= v < hi)
            hist_rows.append([name, _f(lo), _f(hi), str(count)])
    _write_csv(out_dir / "volume_hist.csv", cfg, [group, "bin_lo", "bin_hi", "count"], hist_rows)

    stat_rows = []
    for name in names:
        sub = np.array([[r["x"], r["y"], r["alpha"], r["d"], r["l"], r["beta"]]
                        for r in parsed if r[group] == name])
        for stat, vec in (("mean", sub.mean(axis=0)), ("std", sub.std(axis=0))):
            stat_rows.append([name, stat] + [_f(v) for v in vec])
    _write_csv(out_dir / "traj_stats.csv", cfg,
               [group, "stat", "x", "y", "alpha", "d", "l", "beta"], stat_rows)

    poa_rows = [[r[group], _f(r["x"]), _f(r["y"])] for r in parsed]
    _write_csv(out_dir / "poa.csv", cfg, [group, "x", "y"], poa_rows)

    tray = cfg.tray()
    rect = (tray.center.x - tray.half_extents[0], tray.center.y - tray.half_extents[1],
            2 * tray.half_extents[0], 2 * tray.half_extents[1])
    save_volume_histograms(parsed, bin_width, out_dir / "volume_hist.png", group)
    save_poa_scatter(parsed, rect, out_dir / "poa_scatter.png", group)
    print(f"stats over {len(parsed)} trials ({len(names)} {group}s) -> {out_dir}")
    return 0


# -- verify-dataset / gradcheck ---------------------------------------------

def cmd_verify_dataset(args) -> int:
    cfg = _load_config(args)
    samples = read_dataset(args.dataset, cfg.grid_spec())
    n = verify_dataset(samples, cfg["label.threshold"])
    print(f"OK: {n} records, labels consistent with (volume, valid)")
    return 0


def cmd_gradcheck(args) -> int:
    cfg = _load_config(args)
    n_specs = args.trials if args.trials is not None else 10
    rng = derive_rng(cfg["seed"], STREAM_GRADCHECK)
    worst = 0.0
    for i in range(n_specs):
        variant = VARIANT_TRAJ if i % 2 == 0 else VARIANT_VOXEL
        head = HEAD_CLASSIFIER if (i // 2) % 2 == 0 else "linear_regressor"
        spec = random_tiny_spec(rng, variant, head)
        err = gradient_check(spec, rng)
        worst = max(worst, err)
        print(f"spec {i + 1:2d}/{n_specs} {variant:>9}/{head:<17} max rel err {err:.3e}")
    print(f"worst over {n_specs} specs: {worst:.3e}")
    if worst >= 1e-4:
        raise NumericError(f"gradient check failed: max relative error {worst:.3e} >= 1e-4")
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="excaplan",
        description="Learning-based excavation planning for rigid objects in clutter",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", type=str, default=None, help="key=value config file")
        if seed:
            sp.add_argument("--seed", type=int, default=None, help="master seed override")

    sp = sub.add_parser("collect", help="generate a labeled excavation dataset")
    common(sp)
    sp.add_argument("--out", required=True, help="dataset output path")
    sp.add_argument("--episodes", type=int, default=None)
    sp.add_argument("--trials", type=int, default=None, help="trials per episode")
    sp.add_argument("--workers", type=int, default=None)
    sp.set_defaults(func=cmd_collect)

    sp = sub.add_parser("train", help="train a success predictor")
    common(sp)
    sp.add_argument("dataset")
    sp.add_argument("--out", required=True, help="model output path")
    sp.add_argument("--variant", choices=("voxel", "traj"), default="voxel")
    sp.add_argument("--head", choices=("classify", "regress"), default="classify")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="offline metrics of a model on a dataset")
    common(sp)
    sp.add_argument("model")
    sp.add_argument("dataset")
    sp.add_argument("--out", default=None, help="metrics CSV path")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("bench", help="benchmark planners on fresh scenes")
    common(sp)
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--planner", default="cem-voxel,cem-traj,random-heu,highest-heu",
                    help="comma-separated planner list")
    sp.add_argument("--voxel-model", default=None)
    sp.add_argument("--traj-model", default=None)
    sp.add_argument("--episodes", type=int, default=None)
    sp.add_argument("--trials", type=int, default=None, help="trials per episode")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("ablate", help="attack-point / parameter ablation of the CEM planner")
    common(sp)
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--voxel-model", required=True)
    sp.add_argument("--trials", type=int, default=None, help="paired scenes per mode")
    sp.add_argument("--mode", choices=tuple(MODE_BY_FLAG), default=None,
                    help="restrict to one mode (default: all three)")
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("stats", help="histograms and trajectory statistics from a trials CSV")
    common(sp)
    sp.add_argument("trials_csv")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--group", choices=("planner", "mode"), default="planner")
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("verify-dataset", help="re-derive all labels and check consistency")
    common(sp)
    sp.add_argument("dataset")
    sp.set_defaults(func=cmd_verify_dataset)

    sp = sub.add_parser("gradcheck", help="finite-difference check of the network gradients")
    common(sp)
    sp.add_argument("--trials", type=int, default=None, help="number of random tiny specs")
    sp.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
