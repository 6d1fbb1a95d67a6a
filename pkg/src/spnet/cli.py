"""Command-line experiment runner.

Subcommands:
  train       train a model from a config; saves best/final checkpoints
  attack      run the configured attacks against a checkpoint
  analyze     boundary / landscape diagnostics for a checkpoint
  sweep       robust-accuracy curve over a radius list
  stationary  locate a loss's stationary point analytically/numerically

Every run directory receives a config echo (config_echo.yaml) that
reproduces the run byte for byte, a summary.txt of flat key=value pairs,
and fixed-name CSV artifacts. Exit codes: 0 success, 1 config error,
2 runtime error.
"""

import argparse
import dataclasses
import hashlib
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis as ana
from . import attacks as atk
from . import backend, datasets, losses, nn, training
from .config import ExperimentConfig, load_config, write_echo
from .errors import ConfigError


def build_data(cfg: ExperimentConfig):
    """Materialize (train, test) datasets from the config, deterministically."""
    d = cfg.dataset
    if d.kind in ("segments", "two_moons", "two_circles"):
        ds = datasets.generate_toy(
            datasets.ToySpec(
                kind=d.kind,
                n_per_class=d.n_per_class,
                margin=d.margin,
                noise=d.noise,
                drop_fraction=d.drop_fraction,
                seed=cfg.seed,
            )
        )
        return datasets.split(ds, d.test_fraction, seed=cfg.seed)
    if d.kind == "glyphs":
        ds = datasets.gen_glyphs(
            d.n_per_class, seed=cfg.seed,
            noise=d.noise if d.noise > 0 else 0.15, max_shift=d.max_shift,
        )
        return datasets.split(ds, d.test_fraction, seed=cfg.seed)
    if d.kind == "idx":
        train = datasets.load_idx(d.images, d.labels, d.num_classes)
        if d.per_class is not None:
            train = datasets.subsample(train, d.per_class, seed=cfg.seed)
        if d.test_images and d.test_labels:
            test = datasets.load_idx(d.test_images, d.test_labels, d.num_classes)
            return train, test
        return datasets.split(train, d.test_fraction, seed=cfg.seed)
    # csv
    train = datasets.from_csv(d.path, d.num_classes)
    if d.test_path:
        return train, datasets.from_csv(d.test_path, d.num_classes)
    return datasets.split(train, d.test_fraction, seed=cfg.seed)


def build_network(cfg: ExperimentConfig, input_dim: int, num_classes: int) -> nn.Network:
    sizes = [input_dim] + list(cfg.model.hidden) + [num_classes]
    return nn.dense_network(sizes, cfg.model.activation, seed=cfg.seed)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def _update_summary(out: Path, values: dict) -> None:
    """Merge key=value pairs into summary.txt, keeping it sorted."""
    path = out / "summary.txt"
    existing = {}
    if path.exists():
        for line in path.read_text().splitlines():
            if "=" in line:
                key, _, val = line.partition("=")
                existing[key] = val
    existing.update({k: str(v) for k, v in values.items()})
    path.write_text("\n".join(f"{k}={existing[k]}" for k in sorted(existing)) + "\n")


def _stationary_summary(spec: losses.LossSpec) -> dict:
    res = losses.find_stationary_point(spec)
    vals = {"stationary_exists": res.exists}
    if res.exists:
        vals["stationary_xi"] = f"{res.xi_star:.12g}"
        vals["stationary_z_gap"] = f"{res.z_gap:.12g}"
    closed = losses.closed_form_stationary(spec)
    if closed is not None:
        vals["stationary_closed_form"] = f"{closed:.12g}"
    return vals


def _default_region(ds: datasets.Dataset):
    x, y = ds.features[:, 0], ds.features[:, 1]
    pad_x = 0.2 * max(x.max() - x.min(), 1e-6)
    pad_y = 0.2 * max(y.max() - y.min(), 1e-6)
    return (x.min() - pad_x, x.max() + pad_x, y.min() - pad_y, y.max() + pad_y)


def cmd_train(cfg: ExperimentConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_echo(cfg, out / "config_echo.yaml")
    train_ds, test_ds = build_data(cfg)
    net = build_network(cfg, train_ds.dim, train_ds.num_classes)
    optimizer = nn.make_optimizer(cfg.train.optimizer, cfg.train.learning_rate)

    t0 = time.perf_counter()
    result = training.train(
        net, train_ds, cfg.loss, optimizer,
        epochs=cfg.train.epochs, batch_size=cfg.train.batch_size,
        seed=cfg.seed, test_ds=test_ds, record_trace=cfg.train.record_trace,
    )
    wall = time.perf_counter() - t0

    nn.save_checkpoint(result.best_net, out / "best.ckpt")
    nn.save_checkpoint(result.net, out / "final.ckpt", optimizer=optimizer)
    hashes = {}
    if result.trace is not None:
        ana.write_trace_csv(out / "trace.csv", result.trace)
        hashes["hash_trace.csv"] = _sha256(out / "trace.csv")

    summary = {
        "backend": backend.active(),
        "train_accuracy": f"{training.accuracy(result.net, train_ds):.6f}",
        "test_accuracy": f"{training.accuracy(result.net, test_ds):.6f}",
        "best_test_accuracy": f"{result.best_accuracy:.6f}",
        "clamp_count": result.clamp_count,
        "train_wall_seconds": f"{wall:.3f}",
        **_stationary_summary(cfg.loss),
        **hashes,
    }
    if result.trace is not None:
        summary["trace_final_max_abs_weight"] = f"{result.trace.max_abs():.6g}"
        summary["trace_tail_drift"] = f"{result.trace.tail_drift():.6g}"
    _update_summary(out, summary)
    print(f"train: acc={summary['train_accuracy']} test={summary['test_accuracy']} "
          f"({wall:.1f}s, backend={backend.active()})")


def _load_net(out: Path, checkpoint) -> nn.Network:
    path = Path(checkpoint) if checkpoint else out / "best.ckpt"
    if not path.exists():
        raise ConfigError(f"checkpoint not found: {path}")
    return nn.load_checkpoint(path)


def _eval_set(cfg: ExperimentConfig, test_ds: datasets.Dataset, cap):
    if cap is None or cap >= test_ds.n:
        return test_ds
    return datasets.Dataset(
        test_ds.features[:cap], test_ds.labels[:cap],
        test_ds.num_classes, test_ds.feature_range,
    )


def cmd_attack(cfg: ExperimentConfig, out: Path, checkpoint) -> None:
    if not cfg.attacks:
        raise ConfigError("no attacks configured (attacks.items)")
    out.mkdir(parents=True, exist_ok=True)
    net = _load_net(out, checkpoint)
    train_ds, test_ds = build_data(cfg)
    if net.input_dim != test_ds.dim or net.output_dim != test_ds.num_classes:
        raise ConfigError("checkpoint shape does not match the configured dataset")
    spec = cfg.attack_loss if cfg.attack_loss is not None else cfg.loss
    ev = _eval_set(cfg, test_ds, cfg.attack_eval_samples)

    t0 = time.perf_counter()
    summary = {"attack_loss_kind": spec.kind,
               "attack_eval_samples": ev.n,
               "attack_clean_accuracy": f"{training.accuracy(net, ev):.6f}"}
    for item in cfg.attacks:
        item = dataclasses.replace(item, clip=ev.feature_range)
        result = atk.run_attack(net, spec, ev.features, ev.labels, item, seed=cfg.seed)
        csv_path = out / f"attack_{item.kind}.csv"
        atk.write_attack_csv(csv_path, result, ev.features)
        summary[f"robust_accuracy_{item.kind}"] = f"{result.robust_accuracy:.6f}"
        summary[f"max_perturbation_{item.kind}"] = f"{result.max_perturbation_seen:.6g}"
        summary[f"hash_attack_{item.kind}.csv"] = _sha256(csv_path)
        print(f"attack {item.kind}: eps={item.epsilon:.6g} "
              f"robust_accuracy={result.robust_accuracy:.4f}")
    summary["attack_wall_seconds"] = f"{time.perf_counter() - t0:.3f}"
    _update_summary(out, summary)


def cmd_sweep(cfg: ExperimentConfig, out: Path, checkpoint) -> None:
    if cfg.sweep is None:
        raise ConfigError("no sweep section configured")
    out.mkdir(parents=True, exist_ok=True)
    net = _load_net(out, checkpoint)
    _, test_ds = build_data(cfg)
    spec = cfg.attack_loss if cfg.attack_loss is not None else cfg.loss
    ev = _eval_set(cfg, test_ds, cfg.sweep.eval_samples)
    base = atk.AttackConfig(
        kind=cfg.sweep.kind,
        epsilon=cfg.sweep.epsilons[-1],
        step_size=cfg.sweep.step_size,
        steps=cfg.sweep.steps,
        random_start=cfg.sweep.random_start,
        momentum=cfg.sweep.momentum,
        clip=ev.feature_range,
    )
    curve = atk.robust_accuracy_sweep(
        net, spec, ev.features, ev.labels, base, cfg.sweep.epsilons, seed=cfg.seed
    )
    csv_path = out / f"sweep_{cfg.sweep.kind}.csv"
    atk.write_sweep_csv(csv_path, curve)
    _update_summary(out, {f"hash_sweep_{cfg.sweep.kind}.csv": _sha256(csv_path)})
    for eps, acc in curve:
        print(f"sweep {cfg.sweep.kind}: eps={eps:.6g} robust_accuracy={acc:.4f}")


def cmd_analyze(cfg: ExperimentConfig, out: Path, checkpoint) -> None:
    out.mkdir(parents=True, exist_ok=True)
    net = _load_net(out, checkpoint)
    train_ds, test_ds = build_data(cfg)
    summary = {}
    wrote = []
    if cfg.analysis.boundary:
        if net.input_dim != 2:
            raise ConfigError("boundary analysis requires a 2-D input model")
        region = (
            tuple(cfg.analysis.region) if cfg.analysis.region is not None
            else _default_region(train_ds)
        )
        grid = ana.confidence_grid(net, region, cfg.analysis.resolution)
        ana.write_confidence_csv(out / "boundary.csv", grid)
        wrote.append("boundary.csv")
        report = ana.margin_report(
            net, train_ds, region, cfg.analysis.resolution,
            cfg.analysis.confidence_threshold,
        )
        ana.write_report(out / "boundary_report.txt", report)
        for i, m in enumerate(report.margins):
            summary[f"margin_class_{i}"] = f"{m:.6g}"
        summary["margin_balance"] = f"{report.margin_balance:.6f}"
        summary["confidence_band_width"] = f"{report.confidence_band_width:.6f}"
        print(f"analyze: margin_balance={report.margin_balance:.4f} "
              f"band={report.confidence_band_width:.4f}")
    if cfg.analysis.landscape:
        grid = ana.landscape(
            net, cfg.loss, train_ds,
            span=cfg.analysis.landscape_span,
            resolution=cfg.analysis.landscape_resolution,
            seeds=tuple(cfg.analysis.landscape_seeds),
        )
        ana.write_landscape_csv(out / "landscape.csv", grid)
        wrote.append("landscape.csv")
        summary["landscape_center_loss"] = f"{grid.center_loss:.12g}"
        summary["landscape_center_is_local_min"] = ana.is_strict_local_min_center(grid)
        print(f"analyze: landscape center loss {grid.center_loss:.6g}")
    for name in wrote:
        summary[f"hash_{name}"] = _sha256(out / name)
    if summary:
        _update_summary(out, summary)


def cmd_stationary(args) -> None:
    spec = losses.LossSpec(
        kind=args.kind,
        alpha=args.alpha,
        gamma=args.gamma,
        eta=args.eta,
        variant=args.variant,
    )
    res = losses.find_stationary_point(spec)
    if not res.exists:
        reason = (
            "the true-class logit gradient never changes sign on (0, 1)"
            if spec.is_sp_family()
            else f"{spec.kind} has a strictly negative true-class gradient on (0, 1)"
        )
        print(f"exists=false ({reason})")
    else:
        print(f"exists=true xi_star={res.xi_star:.12g} z_gap={res.z_gap:.12g}")
        closed = losses.closed_form_stationary(spec)
        if closed is not None:
            print(f"closed_form={closed:.12g} |difference|={abs(closed - res.xi_star):.3g}")
    if args.curve:
        z = np.arange(-10.0, 10.0 + 1e-9, 0.05)
        rows = losses.tabulate_curve(spec, z)
        lines = ["z_gap,xi,value,dvalue_dz"]
        for z_gap, xi, value, dval in rows:
            lines.append(f"{z_gap:.17g},{xi:.17g},{value:.17g},{dval:.17g}")
        Path(args.curve).write_text("\n".join(lines) + "\n")
        print(f"curve written to {args.curve}")


def _make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spnet",
        description="Train, attack, and analyze small classifiers under the "
                    "stationary-point loss family.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run(name, help_text, needs_checkpoint=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", required=True, help="run output directory")
        if needs_checkpoint:
            p.add_argument("--checkpoint", default=None,
                           help="model checkpoint (default: <out>/best.ckpt)")
        return p

    add_run("train", "train a model and save checkpoints")
    add_run("attack", "run configured attacks on a checkpoint", needs_checkpoint=True)
    add_run("analyze", "boundary/landscape diagnostics", needs_checkpoint=True)
    add_run("sweep", "robust accuracy over a radius sweep", needs_checkpoint=True)

    p = sub.add_parser("stationary", help="report a loss's stationary point")
    p.add_argument("--kind", required=True, choices=losses.KINDS)
    p.add_argument("--alpha", type=float, default=0.25)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--variant", default=None, choices=losses.VARIANTS)
    p.add_argument("--curve", default=None, help="write a (z_gap,xi,value,dvalue_dz) CSV")
    return parser


def main(argv=None) -> int:
    args = _make_parser().parse_args(argv)
    try:
        if args.command == "stationary":
            cmd_stationary(args)
            return 0
        cfg = load_config(args.config, seed_override=args.seed)
        out = Path(args.out)
        if args.command == "train":
            cmd_train(cfg, out)
        elif args.command == "attack":
            cmd_attack(cfg, out, args.checkpoint)
        elif args.command == "analyze":
            cmd_analyze(cfg, out, args.checkpoint)
        elif args.command == "sweep":
            cmd_sweep(cfg, out, args.checkpoint)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
