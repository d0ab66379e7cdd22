"""Command-line front end: ``robustpf {run,sweep,trace,simulate}``.

Configuration is YAML. Top-level keys mirror :class:`ExperimentConfig` and
the nested ``benchmark`` mapping mirrors :class:`BenchmarkConfig`; any key
can be overridden with ``--set key=value`` (dotted for nested keys, e.g.
``--set benchmark.meas_variance=1e-3``). Every subcommand writes the
effective configuration to ``config.yaml`` next to its outputs.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

import numpy as np
import yaml

from .dist import make_rng
from .harness import ALGORITHMS, ExperimentConfig, alpha_sweep, model_prob_trace, run_experiment
from .model import CASES, BenchmarkConfig, simulate_trajectory


class ConfigError(ValueError):
    pass


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _coerce(cls, data: dict, section: str) -> dict:
    # YAML 1.1 reads "1e-3" as a string; coerce by the type of each default
    defaults = cls()
    out = {}
    for key, value in data.items():
        ref = getattr(defaults, key)
        try:
            if isinstance(ref, bool):
                if not isinstance(value, bool):
                    raise ValueError(f"expected true/false, got {value!r}")
            elif isinstance(ref, float):
                value = float(value)
            elif isinstance(ref, int):
                if isinstance(value, bool) or float(value) != int(float(value)):
                    raise ValueError(f"expected an integer, got {value!r}")
                value = int(float(value))
            elif isinstance(ref, tuple):
                if not isinstance(value, (list, tuple)):
                    raise ValueError(f"expected a list, got {value!r}")
                value = tuple(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{section}{key}: {exc}") from exc
        out[key] = value
    return out


def _build(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    bench = raw.pop("benchmark", None) or {}
    if not isinstance(bench, dict):
        raise ConfigError("benchmark: expected a mapping")
    for section, cls, data in (("", ExperimentConfig, raw), ("benchmark.", BenchmarkConfig, bench)):
        known = {f.name for f in dataclasses.fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(f"{section}{key}: unknown configuration key")
    raw = _coerce(ExperimentConfig, raw, "")
    bench = _coerce(BenchmarkConfig, bench, "benchmark.")
    try:
        return ExperimentConfig(benchmark=BenchmarkConfig(**bench), **raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(path=None, overrides=()) -> ExperimentConfig:
    """Load an :class:`ExperimentConfig` from YAML and apply ``key=value`` overrides.

    A missing ``path`` (``None``) or an empty file yields the defaults.
    """
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: parse error: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    try:
        _build(raw)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"{item}: override must look like key=value")
        parts = key.strip().split(".")
        target = raw
        for p in parts[:-1]:
            target = target.setdefault(p, {})
            if not isinstance(target, dict):
                raise ConfigError(f"{key}: cannot override inside a non-mapping")
        target[parts[-1]] = yaml.safe_load(value)
        try:
            _build(raw)
        except ConfigError as exc:
            raise ConfigError(f"{key}: {exc}") from exc
    return _build(raw)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    d = dataclasses.asdict(cfg)

    def plain(v):
        if isinstance(v, dict):
            return {k: plain(x) for k, x in v.items()}
        if isinstance(v, (tuple, list)):
            return [plain(x) for x in v]
        return v

    return plain(d)


def _write(path, text):
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror}") from exc
    return path


def _csv(header, rows) -> str:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, str) else ("" if v is None else _fmt(v)) for v in r])
    return buf.getvalue()


def _json(header, rows) -> str:
    recs = [dict(zip(header, (v if isinstance(v, str) or v is None else float(_fmt(v)) for v in r))) for r in rows]
    return json.dumps(recs, indent=2) + "\n"


def _emit_table(out_dir, stem, header, rows, fmt):
    text = _csv(header, rows) if fmt == "csv" else _json(header, rows)
    return _write(os.path.join(out_dir, f"{stem}.{fmt}"), text)


def emit_mse_summary(summaries, out_dir, fmt="csv", timing=False):
    """``summaries`` is an iterable of :class:`ExperimentSummary`; seconds are blank unless ``timing``."""
    rows = []
    for s in sorted(summaries, key=lambda s: CASES.index(s.case)):
        for a in ALGORITHMS:
            if a in s.stats:
                st = s.stats[a]
                rows.append([s.case, a, st.mse_mean, st.mse_var, st.seconds if timing else None])
    return _emit_table(out_dir, "mse_summary", ["case", "algorithm", "mse_mean", "mse_var", "seconds"], rows, fmt)


def emit_alpha_sweep(sweep, out_dir, fmt="csv"):
    rows = [[a, c, s.stats["RPF"].mse_mean] for (a, c), s in sorted(sweep.items(), key=lambda kv: (kv[0][0], CASES.index(kv[0][1])))]
    return _emit_table(out_dir, "alpha_sweep", ["alpha", "case", "mse_mean"], rows, fmt)


def emit_model_trace(trace, labels, out_dir, fmt="csv"):
    rows = [[k] + list(col) for k, col in enumerate(np.asarray(trace).T, start=1)]
    return _emit_table(out_dir, "model_trace", ["k"] + list(labels), rows, fmt)


def emit_trajectory(traj, out_dir, fmt="csv"):
    if fmt == "csv":
        return _write(os.path.join(out_dir, "trajectory.csv"), traj.to_csv())
    rows = [[k, x, y, int(o)] for k, (x, y, o) in enumerate(zip(traj.states, traj.observations, traj.outlier_mask), 1)]
    return _emit_table(out_dir, "trajectory", ["k", "x_true", "y", "outlier"], rows, fmt)


def emit_config(cfg, out_dir):
    text = yaml.safe_dump(config_to_dict(cfg), sort_keys=True)
    return _write(os.path.join(out_dir, "config.yaml"), text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration key (repeatable)")
    common.add_argument("--seed", type=int, help="master seed (overrides master_seed)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--jobs", type=int, help="worker threads for the run grid")

    parser = argparse.ArgumentParser(prog="robustpf", description="Robust particle filter experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="MSE table for one or both cases")
    p.add_argument("--case", choices=CASES + ("both",), default="both")
    p.add_argument("--timing", action="store_true", help="fill the seconds column (breaks byte-identity)")
    sub.add_parser("sweep", parents=[common], help="RPF mean MSE over the alpha grid, both cases")
    p = sub.add_parser("trace", parents=[common], help="run-averaged model probabilities per step")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--case", choices=CASES, required=True)
    p = sub.add_parser("simulate", parents=[common], help="write one benchmark trajectory")
    p.add_argument("--case", choices=CASES, required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"master_seed={args.seed}")
    if args.jobs is not None:
        overrides.append(f"n_jobs={args.jobs}")
    try:
        cfg = parse_config(args.config, overrides)
        if args.command == "trace" and not 0.0 < args.alpha < 1.0:
            raise ConfigError(f"--alpha: must lie in (0, 1), got {args.alpha}")
    except ConfigError as exc:
        print(f"robustpf: config error: {exc}", file=sys.stderr)
        return 2

    try:
        os.makedirs(args.out, exist_ok=True)
        emit_config(cfg, args.out)
        if args.command == "run":
            cases = CASES if args.case == "both" else (args.case,)
            summaries = [run_experiment(cfg, c) for c in cases]
            emit_mse_summary(summaries, args.out, args.format, timing=args.timing)
        elif args.command == "sweep":
            emit_alpha_sweep(alpha_sweep(cfg), args.out, args.format)
        elif args.command == "trace":
            trace = model_prob_trace(cfg, args.case, args.alpha)
            emit_model_trace(trace, [m.label for m in cfg.model_bank()], args.out, args.format)
        elif args.command == "simulate":
            traj = simulate_trajectory(cfg.benchmark, args.case, make_rng(cfg.master_seed, 0, 0))
            emit_trajectory(traj, args.out, args.format)
    except OSError as exc:
        print(f"robustpf: I/O error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
