"""Experiment orchestration CLI.

Subcommands: embed, train, sweep, attack, audit, plot, bench. Runs are
driven by a JSON config file; repeated flags override config values (flags
win). Every run writes an atomic manifest next to its outputs, so a rerun
with the same config and seed reproduces files byte for byte.

Exit codes: 0 success, 2 config or data error, 3 runtime numeric failure.
``POINDP_THREADS`` caps parallel seed workers.
"""

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict

import numpy as np

from . import __version__
from .backend import HAS_NUMBA, active_backend
from .data import (
    DataError,
    SplitSpec,
    SyntheticSpec,
    dataset_stats,
    gen_synthetic,
    load_dataset,
    make_hierarchy_splits,
)
from .embedding import EmbedConfig, EmbeddingTable, train_poincare_embedding
from .gnn import ARM_LABELS, NOISE_MODES, TrainConfig, train_poindp
from .privacy import PrivacyBudget, calibrate_sigma, privacy_audit_1d
from . import attack as attack_mod
from . import plotting


class ConfigError(ValueError):
    """Raised for malformed run configuration."""


DEFAULT_CONFIG = {
    "name": "run",
    "dataset": {"kind": "synthetic", "spec": {}},
    "embed": {},
    "train": {},
    "budget": {"epsilon": 1.0, "delta": 1e-3, "beta": 0.5},
    "seeds": [0],
    "out": "out",
}

_ALLOWED_TOP = set(DEFAULT_CONFIG)
_ALLOWED_DATASET = {"kind", "spec", "edges", "features", "labels", "split"}
_ALLOWED_TRAIN = {
    "hidden_dim", "epochs", "lr", "noise_mode", "clip_bound", "clip_tau",
    "init_beta_logit", "beta_lr",
}
_ALLOWED_EMBED = {
    "dim", "lr", "epochs", "neg_samples", "burn_in_epochs", "seed",
    "curvature", "init_radius",
}
_ALLOWED_BUDGET = {"epsilon", "delta", "beta"}


def _reject_unknown(section, keys, allowed):
    unknown = set(keys) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys in {section}: {sorted(unknown)}")


def load_config(path=None, overrides=None):
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))  # deep copy
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            user = json.load(fh)
        _reject_unknown("top level", user, _ALLOWED_TOP)
        for key, val in user.items():
            if isinstance(val, dict):
                cfg[key].update(val)
            else:
                cfg[key] = val
    _reject_unknown("dataset", cfg["dataset"], _ALLOWED_DATASET)
    _reject_unknown("train", cfg["train"], _ALLOWED_TRAIN)
    _reject_unknown("embed", cfg["embed"], _ALLOWED_EMBED)
    _reject_unknown("budget", cfg["budget"], _ALLOWED_BUDGET)
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key == "seed":
            cfg["seeds"] = [val]
        elif key == "epsilon":
            cfg["budget"]["epsilon"] = val
        elif key == "noise_mode":
            cfg["train"]["noise_mode"] = val
        elif key == "out":
            cfg["out"] = val
    return cfg


def config_hash(cfg):
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True).encode()
    ).hexdigest()[:16]


def build_dataset(cfg):
    ds_cfg = cfg["dataset"]
    kind = ds_cfg.get("kind", "synthetic")
    if kind == "synthetic":
        try:
            spec = SyntheticSpec(**ds_cfg.get("spec", {}))
        except TypeError as exc:
            raise ConfigError(f"bad synthetic spec: {exc}") from exc
        return gen_synthetic(spec)
    if kind == "files":
        for key in ("edges", "features", "labels"):
            if key not in ds_cfg:
                raise ConfigError(f"dataset.kind=files requires {key!r} path")
            if not os.path.exists(ds_cfg[key]):
                raise ConfigError(f"dataset path not found: {ds_cfg[key]}")
        split = SplitSpec(**ds_cfg.get("split", {}))
        return load_dataset(
            ds_cfg["edges"], ds_cfg["features"], ds_cfg["labels"], split
        )
    raise ConfigError(f"unknown dataset kind {kind!r}")


def build_budget(cfg):
    try:
        return PrivacyBudget(**cfg["budget"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad budget: {exc}") from exc


def build_train_config(cfg, seed, budget, noise_mode=None):
    train = dict(cfg["train"])
    if noise_mode is not None:
        train["noise_mode"] = noise_mode
    try:
        return TrainConfig(seed=seed, budget=budget, **train)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad train config: {exc}") from exc


class Manifest:
    def __init__(self, cfg, out_dir):
        self.data = {
            "version": __version__,
            "backend": active_backend(),
            "config_hash": config_hash(cfg),
            "seeds": cfg["seeds"],
            "timings": {},
            "outputs": [],
        }
        self.out_dir = out_dir
        self._t0 = time.time()
        self._stage_start = self._t0

    def stage(self, name):
        now = time.time()
        self.data["timings"][name] = round(now - self._stage_start, 4)
        self._stage_start = now

    def add_output(self, path):
        self.data["outputs"].append(os.path.relpath(path, self.out_dir))

    def write(self):
        self.data["timings"]["total"] = round(time.time() - self._t0, 4)
        path = os.path.join(self.out_dir, "manifest.json")
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)
        os.replace(tmp, path)
        return path


def _out_dir(cfg, suffix):
    path = os.path.join(cfg["out"], f"{cfg['name']}-{suffix}")
    os.makedirs(os.path.join(path, "plots"), exist_ok=True)
    return path


def _max_workers():
    raw = os.environ.get("POINDP_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _run_jobs(jobs):
    workers = _max_workers()
    if workers == 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(job) for job in jobs]
        return [f.result() for f in futures]


def _train_embedding(cfg, dataset):
    try:
        embed_cfg = EmbedConfig(**cfg["embed"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad embed config: {exc}") from exc
    return train_poincare_embedding(dataset, embed_cfg)


def cmd_embed(cfg):
    out = _out_dir(cfg, "embed")
    manifest = Manifest(cfg, out)
    dataset = build_dataset(cfg)
    manifest.stage("load")
    table, losses = _train_embedding(cfg, dataset)
    manifest.stage("train")
    path = os.path.join(out, "embedding.txt")
    table.save(path)
    manifest.add_output(path)
    loss_path = os.path.join(out, "embed_loss.csv")
    with open(loss_path, "w", encoding="utf-8") as fh:
        fh.write("epoch,mean_loss\n")
        for i, val in enumerate(losses):
            fh.write(f"{i},{val!r}\n")
    manifest.add_output(loss_path)
    manifest.write()
    print(f"embedding written: {path} ({table.num_nodes} nodes)")
    return 0


def _write_metrics_csv(path, metrics):
    cols = ["epoch", "loss", "weighted_f1", "micro_f1",
            "epsilon_r", "epsilon_alpha", "sigma_r", "sigma_alpha",
            "mean_noise_norm"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(len(metrics["epoch"])):
            fh.write(",".join(repr(float(metrics[c][i])) for c in cols) + "\n")


def _tail_mean(arr, frac=0.1):
    k = max(1, int(len(arr) * frac))
    return float(np.mean(arr[-k:]))


def cmd_train(cfg, arms=None):
    out = _out_dir(cfg, "train")
    manifest = Manifest(cfg, out)
    dataset = build_dataset(cfg)
    budget = build_budget(cfg)
    modes = arms or [cfg["train"].get("noise_mode", "poindp")]
    for mode in modes:
        if mode not in NOISE_MODES:
            raise ConfigError(f"unknown noise mode {mode!r}")
    needs_embed = any(
        m in ("poindp", "no_inter", "no_intra", "no_allocate") for m in modes
    )
    table = None
    if needs_embed:
        table, _ = _train_embedding(cfg, dataset)
    manifest.stage("prepare")

    summary_rows = []
    for mode in modes:
        jobs = []
        for seed in cfg["seeds"]:
            tcfg = build_train_config(cfg, seed, budget, mode)
            jobs.append(lambda tc=tcfg: train_poindp(
                dataset, table if mode in (
                    "poindp", "no_inter", "no_intra", "no_allocate") else None,
                tc,
            ))
        results = _run_jobs(jobs)
        finals = []
        for seed, res in zip(cfg["seeds"], results):
            mpath = os.path.join(out, f"metrics_{mode}_seed{seed}.csv")
            _write_metrics_csv(mpath, res.metrics)
            manifest.add_output(mpath)
            npath = os.path.join(out, f"noise_{mode}_seed{seed}.csv")
            with open(npath, "w", encoding="utf-8") as fh:
                fh.write("node,magnitude\n")
                for node, mag in enumerate(res.node_noise_norm):
                    fh.write(f"{node},{mag!r}\n")
            manifest.add_output(npath)
            finals.append(_tail_mean(res.metrics["weighted_f1"]))
        ckpt = os.path.join(out, f"checkpoint_{mode}_seed{cfg['seeds'][0]}.txt")
        results[0].params.save(ckpt)
        manifest.add_output(ckpt)
        label = ARM_LABELS.get(mode, mode)
        summary_rows.append(
            (label, mode, float(np.mean(finals)), float(np.std(finals)))
        )
    manifest.stage("train")

    spath = os.path.join(out, "summary.csv")
    with open(spath, "w", encoding="utf-8") as fh:
        fh.write("arm,noise_mode,weighted_f1_mean,weighted_f1_std\n")
        for label, mode, mean, std in summary_rows:
            fh.write(f"{label},{mode},{mean!r},{std!r}\n")
    manifest.add_output(spath)
    manifest.write()
    for label, _, mean, std in summary_rows:
        print(f"{label}: weighted-F1 {mean:.4f} +- {std:.4f}")
    return 0


def cmd_sweep(cfg, epsilons, splits=("random", "top_level", "bottom_level")):
    if not epsilons:
        raise ConfigError("empty epsilon grid")
    out = _out_dir(cfg, "sweep")
    manifest = Manifest(cfg, out)
    dataset = build_dataset(cfg)
    table, _ = _train_embedding(cfg, dataset)
    manifest.stage("prepare")

    frac = 0.33
    rows = []
    for split_mode in splits:
        train, val, test = make_hierarchy_splits(dataset, table, split_mode, frac)
        from dataclasses import replace

        split_ds = replace(
            dataset, train_mask=train, val_mask=val, test_mask=test
        )
        for eps in epsilons:
            budget_cfg = dict(cfg["budget"])
            budget_cfg["epsilon"] = eps
            budget = PrivacyBudget(**budget_cfg)
            for seed in cfg["seeds"]:
                tcfg = build_train_config(cfg, seed, budget)
                res = train_poindp(split_ds, table, tcfg)
                rows.append((
                    split_mode, eps, seed,
                    _tail_mean(res.metrics["weighted_f1"]),
                    _tail_mean(res.metrics["micro_f1"]),
                    float(np.mean(res.metrics["mean_noise_norm"])),
                ))
    manifest.stage("sweep")

    path = os.path.join(out, "sweep.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("split,epsilon,seed,weighted_f1,micro_f1,mean_noise_norm\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")
    manifest.add_output(path)
    manifest.write()
    print(f"sweep written: {path} ({len(rows)} rows)")
    return 0


def cmd_attack(cfg, arms=("gcn", "gcn+H", "poindp")):
    out = _out_dir(cfg, "attack")
    manifest = Manifest(cfg, out)
    dataset = build_dataset(cfg)
    budget = build_budget(cfg)
    table = None
    if any(a in ("gcn+H", "poindp") for a in arms):
        table, _ = _train_embedding(cfg, dataset)
    manifest.stage("prepare")

    rows = []
    ds_name = cfg["dataset"].get("kind", "synthetic")
    for seed in cfg["seeds"]:
        cached = {}
        for arm in arms:
            if arm == "gcn+H" and table is None:
                raise ConfigError("gcn+H arm requires an embedding")
            mode = "poindp" if arm == "poindp" else "none"
            tcfg = build_train_config(cfg, seed, budget, mode)
            key = mode
            if key not in cached:
                cached[key] = train_poindp(
                    dataset, table if mode == "poindp" else None, tcfg
                )
            target = cached[key]
            post = attack_mod.target_posteriors(
                dataset, target, tcfg, embed_table=table, seed=seed
            )
            tcfg_shadow = build_train_config(cfg, seed, budget, "none")
            metrics = attack_mod.run_mia(
                post, dataset, tcfg_shadow, seed,
                with_hierarchy=(arm == "gcn+H"), embed_table=table,
            )
            rows.append((ds_name, arm, arm == "gcn+H", budget.epsilon,
                         metrics.auc, metrics.precision, seed))
    manifest.stage("attack")

    path = os.path.join(out, "attack.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("dataset,defense_mode,with_hierarchy,epsilon,auc,precision,seed\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")
    manifest.add_output(path)
    manifest.write()
    print(f"attack results: {path} ({len(rows)} rows)")
    return 0


def cmd_audit(cfg, epsilon, delta, trials, sigma_scale=1.0):
    out = _out_dir(cfg, "audit")
    manifest = Manifest(cfg, out)
    sensitivity = 1.0
    sigma = calibrate_sigma(sensitivity, epsilon, delta) * sigma_scale
    report = privacy_audit_1d(
        sensitivity, epsilon, delta, trials,
        rng=np.random.default_rng(cfg["seeds"][0]), sigma=sigma,
    )
    manifest.stage("audit")
    path = os.path.join(out, "audit.txt")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report.to_text() + "\n")
    manifest.add_output(path)
    manifest.write()
    print(report.to_text())
    return 0 if report.passed or sigma_scale != 1.0 else 3


def cmd_plot(cfg, embedding_path, noise_paths):
    out = _out_dir(cfg, "plot")
    manifest = Manifest(cfg, out)
    table = EmbeddingTable.load(embedding_path)
    curves = {}
    for path in noise_paths:
        label = os.path.basename(path).replace(".csv", "")
        mags = []
        with open(path, encoding="utf-8") as fh:
            next(fh)
            for line in fh:
                mags.append(float(line.strip().split(",")[1]))
        curves[label] = np.asarray(mags)
    manifest.stage("load")

    first = next(iter(curves))
    if table.dim != 2:
        raise ConfigError("disk map needs a 2D embedding")
    if table.num_nodes != curves[first].size:
        raise ConfigError("noise rows do not match embedding nodes")
    disk = plotting.disk_noise_map_svg(table.points, curves[first])
    disk_path = os.path.join(out, "plots", "disk_noise_map.svg")
    with open(disk_path, "w", encoding="utf-8") as fh:
        fh.write(disk)
    manifest.add_output(disk_path)

    cdf = plotting.cdf_svg(curves)
    cdf_path = os.path.join(out, "plots", "noise_cdf.svg")
    with open(cdf_path, "w", encoding="utf-8") as fh:
        fh.write(cdf)
    manifest.add_output(cdf_path)
    csv_path = os.path.join(out, "noise_cdf.csv")
    plotting.write_cdf_csv(csv_path, curves)
    manifest.add_output(csv_path)
    manifest.write()
    print(f"plots written under {out}")
    return 0


def cmd_stats(cfg):
    dataset = build_dataset(cfg)
    stats = dataset_stats(dataset)
    stats["raw_edge_count"] = dataset.raw_edge_count
    print(json.dumps(stats, indent=2))
    return 0


def cmd_bench(cfg, repeats=3):
    """Time the numba and numpy kernel paths on a fixed workload."""
    from . import kernels
    from .data import SyntheticSpec as SS

    dataset = gen_synthetic(SS(kind="balanced_tree", branching=3, depth=4, seed=1))
    rng = np.random.default_rng(0)
    n = dataset.num_nodes
    pts = rng.uniform(-0.3, 0.3, size=(n, 2))
    eu = np.concatenate([dataset.edges[:, 0], dataset.edges[:, 1]]).astype(np.int64)
    ev = np.concatenate([dataset.edges[:, 1], dataset.edges[:, 0]]).astype(np.int64)
    negs = rng.integers(0, n, size=(eu.size, 10)).astype(np.int64)

    from scipy.sparse.csgraph import shortest_path

    D = shortest_path(dataset.adj, method="D", unweighted=True)
    D = np.ascontiguousarray(D)

    rows = []
    variants = [("numpy:embed_epoch", lambda: kernels._embed_epoch_impl(
        pts.copy(), eu, ev, negs, 0.1, 1.0, 1e-5))]
    if HAS_NUMBA:
        kernels._embed_epoch_numba(pts.copy(), eu, ev, negs, 0.1, 1.0, 1e-5)
        variants.append(("numba:embed_epoch", lambda: kernels._embed_epoch_numba(
            pts.copy(), eu, ev, negs, 0.1, 1.0, 1e-5)))
    variants.append(("numpy:gromov_scan", lambda: kernels.gromov_scan_numpy(D)))
    if HAS_NUMBA:
        kernels._gromov_scan_numba(D)
        variants.append(("numba:gromov_scan", lambda: kernels._gromov_scan_numba(D)))

    for name, fn in variants:
        best = min(_time_once(fn) for _ in range(repeats))
        rows.append((name, best))
    width = max(len(r[0]) for r in rows)
    for name, secs in rows:
        print(f"{name:<{width}}  {secs * 1e3:10.3f} ms")
    for kernel in ("embed_epoch", "gromov_scan"):
        times = {name.split(":")[0]: secs for name, secs in rows
                 if name.endswith(kernel)}
        if "numba" in times and "numpy" in times:
            print(f"{kernel}: numba speedup x{times['numpy'] / times['numba']:.1f}")
    return 0


def _time_once(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def make_parser():
    parser = argparse.ArgumentParser(
        prog="poindp",
        description="hierarchy-aware differential privacy for graph learning",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override: single seed")
        p.add_argument("--epsilon", type=float, help="override: privacy budget")
        p.add_argument("--noise-mode", choices=NOISE_MODES, help="override")
        p.add_argument("--out", help="override: output directory")

    for name in ("embed", "train", "sweep", "attack", "audit", "plot",
                 "stats", "bench"):
        p = sub.add_parser(name)
        common(p)
        if name == "train":
            p.add_argument("--arms", help="comma list of noise modes")
        if name == "sweep":
            p.add_argument("--epsilons", default="0.01,0.1,0.5,1.0",
                           help="comma list of epsilon values")
        if name == "attack":
            p.add_argument("--arms", default="gcn,gcn+H,poindp",
                           help="comma list of attack arms")
        if name == "audit":
            p.add_argument("--audit-epsilon", type=float, default=1.0)
            p.add_argument("--audit-delta", type=float, default=1e-3)
            p.add_argument("--trials", type=int, default=200000)
            p.add_argument("--sigma-scale", type=float, default=1.0)
        if name == "plot":
            p.add_argument("--embedding", required=True)
            p.add_argument("--noise", required=True, nargs="+")
    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    overrides = {
        "seed": getattr(args, "seed", None),
        "epsilon": getattr(args, "epsilon", None),
        "noise_mode": getattr(args, "noise_mode", None),
        "out": getattr(args, "out", None),
    }
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "embed":
            return cmd_embed(cfg)
        if args.command == "train":
            arms = args.arms.split(",") if args.arms else None
            return cmd_train(cfg, arms)
        if args.command == "sweep":
            eps = [float(v) for v in args.epsilons.split(",") if v]
            return cmd_sweep(cfg, eps)
        if args.command == "attack":
            return cmd_attack(cfg, tuple(args.arms.split(",")))
        if args.command == "audit":
            if args.trials < 100.0 / args.audit_delta:
                raise ConfigError(
                    f"trials={args.trials} insufficient for delta={args.audit_delta}; "
                    "need trials >= 100/delta"
                )
            return cmd_audit(cfg, args.audit_epsilon, args.audit_delta,
                             args.trials, args.sigma_scale)
        if args.command == "plot":
            return cmd_plot(cfg, args.embedding, args.noise)
        if args.command == "stats":
            return cmd_stats(cfg)
        if args.command == "bench":
            return cmd_bench(cfg)
        raise ConfigError(f"unknown command {args.command}")
    except (ConfigError, DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
