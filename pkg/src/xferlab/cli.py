"""Command-line entry point.

Subcommands:
  sweep   run a configured or preset experiment sweep; writes records.csv,
          aggregates.csv, and manifest.json
  verify  audit the closed-form trainers against the numerical solver
  report  fit log-log slopes, emit theoretical overlays and paired win counts
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .datagen import EnsembleSpec, LabeledDataset, SnrProfile, SparsitySpec
from .errors import ConfigError
from .harness import (
    PRESET_NAMES,
    SweepConfig,
    aggregate,
    preset,
    run_sweep,
)
from .metrics import fit_loglog_slope, reference_rate
from .train import (
    EstimatorConfig,
    fit_adv_l2,
    fit_adv_linf,
    fit_standard,
    oracle_fit,
)

RECORD_COLUMNS = [
    "experiment", "axis_value", "estimator", "trial", "seed", "p", "r", "T",
    "n", "n_target", "n_unlabeled", "epsilon", "alpha", "support_size",
    "sin_theta", "excess_risk", "target_accuracy", "suppressed_count",
    "wall_ms", "status",
]

VERIFY_GAP_TOL = 1e-3


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _atomic_write(path: str, write_fn) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            write_fn(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str, columns, rows) -> None:
    def write(fh):
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])

    _atomic_write(path, write)


def _require_keys(obj: dict, allowed: set, context: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {context}: {sorted(unknown)}")
    missing = allowed - set(obj)
    if missing:
        raise ConfigError(f"missing keys in {context}: {sorted(missing)}")


def parse_config(doc: dict) -> SweepConfig:
    """Strict JSON config -> SweepConfig; unknown keys are hard errors."""
    _require_keys(
        doc,
        {"experiment", "ensemble", "sweep", "estimators", "n_source",
         "n_target", "n_unlabeled", "trials", "seed"},
        "config",
    )
    ens = doc["ensemble"]
    _require_keys(
        ens, {"p", "r", "T", "snr", "sparsity", "noise", "target_norm"},
        "ensemble",
    )
    _require_keys(
        ens["snr"], {"kind", "base_norm", "alpha", "frac_strong"}, "snr"
    )
    _require_keys(ens["sparsity"], {"kind", "support_size"}, "sparsity")
    _require_keys(ens["noise"], {"kind", "rho"}, "noise")
    _require_keys(doc["sweep"], {"axis", "values"}, "sweep")
    spec = EnsembleSpec(
        p=int(ens["p"]),
        r=int(ens["r"]),
        T=int(ens["T"]),
        snr=SnrProfile(
            kind=ens["snr"]["kind"],
            base_norm=float(ens["snr"]["base_norm"]),
            alpha=float(ens["snr"]["alpha"]),
            frac_strong=float(ens["snr"]["frac_strong"]),
        ),
        sparsity=SparsitySpec(
            kind=ens["sparsity"]["kind"],
            support_size=(
                None
                if ens["sparsity"]["support_size"] is None
                else int(ens["sparsity"]["support_size"])
            ),
        ),
        noise_rho=float(ens["noise"]["rho"]),
        noise_kind=ens["noise"]["kind"],
        target_norm=float(ens["target_norm"]),
    )
    estimators = []
    for e in doc["estimators"]:
        _require_keys(e, {"kind", "epsilon"}, "estimator")
        eps = None if e["epsilon"] is None else float(e["epsilon"])
        estimators.append(EstimatorConfig(kind=e["kind"], epsilon=eps))
    return SweepConfig(
        experiment=str(doc["experiment"]),
        ensemble=spec,
        sweep_axis=doc["sweep"]["axis"],
        sweep_values=tuple(doc["sweep"]["values"]),
        estimators=tuple(estimators),
        n_source=int(doc["n_source"]),
        n_target=int(doc["n_target"]),
        n_unlabeled=int(doc["n_unlabeled"]),
        trials=int(doc["trials"]),
        root_seed=int(doc["seed"]),
    )


def config_to_dict(cfg: SweepConfig) -> dict:
    """Fully resolved config (defaults applied) in the external JSON schema."""
    sp = cfg.ensemble.sparsity
    return {
        "experiment": cfg.experiment,
        "ensemble": {
            "p": cfg.ensemble.p,
            "r": cfg.ensemble.r,
            "T": cfg.ensemble.T,
            "snr": {
                "kind": cfg.ensemble.snr.kind,
                "base_norm": cfg.ensemble.snr.base_norm,
                "alpha": cfg.ensemble.snr.alpha,
                "frac_strong": cfg.ensemble.snr.frac_strong,
            },
            "sparsity": {"kind": sp.kind, "support_size": sp.support_size},
            "noise": {"kind": cfg.ensemble.noise_kind, "rho": cfg.ensemble.noise_rho},
            "target_norm": cfg.ensemble.target_norm,
        },
        "sweep": {"axis": cfg.sweep_axis, "values": list(cfg.sweep_values)},
        "estimators": [
            {"kind": e.kind, "epsilon": e.epsilon} for e in cfg.estimators
        ],
        "n_source": cfg.n_source,
        "n_target": cfg.n_target,
        "n_unlabeled": cfg.n_unlabeled,
        "trials": cfg.trials,
        "seed": cfg.root_seed,
    }


def config_digest(cfg: SweepConfig) -> str:
    blob = json.dumps(config_to_dict(cfg), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def _default_threads() -> int:
    env = os.environ.get("XFERLAB_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def cmd_sweep(args) -> int:
    try:
        if args.preset:
            cfg = preset(args.preset)
        elif args.config:
            with open(args.config, "r", encoding="utf-8") as fh:
                try:
                    doc = json.load(fh)
                except json.JSONDecodeError as exc:
                    print(
                        f"config parse error at line {exc.lineno}, column "
                        f"{exc.colno}: {exc.msg}",
                        file=sys.stderr,
                    )
                    return 2
            cfg = parse_config(doc)
        else:
            print("sweep needs --config or --preset", file=sys.stderr)
            return 2
        overrides = {}
        if args.trials is not None:
            overrides["trials"] = args.trials
        if args.seed is not None:
            overrides["root_seed"] = args.seed
        if overrides:
            from dataclasses import replace

            cfg = replace(cfg, **overrides)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    threads = args.threads if args.threads is not None else _default_threads()
    started = _utc_now()
    try:
        records = run_sweep(cfg, parallelism=threads)
        aggs = aggregate(records)
    except Exception as exc:  # per-trial failures are records, not raises
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3
    finished = _utc_now()

    os.makedirs(args.out, exist_ok=True)
    write_records_csv(os.path.join(args.out, "records.csv"), records)
    write_aggregates_csv(os.path.join(args.out, "aggregates.csv"), aggs)
    manifest = {
        "tool_version": __version__,
        "config_digest": config_digest(cfg),
        "root_seed": cfg.root_seed,
        "started_at": started,
        "finished_at": finished,
        "record_count": len(records),
        "config": config_to_dict(cfg),
    }
    _atomic_write(
        os.path.join(args.out, "manifest.json"),
        lambda fh: json.dump(manifest, fh, indent=2, sort_keys=True),
    )
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def write_records_csv(path: str, records) -> None:
    rows = [[getattr(r, c) for c in RECORD_COLUMNS] for r in records]
    write_csv(path, RECORD_COLUMNS, rows)


def read_records_csv(path: str) -> list[dict]:
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            rec = dict(row)
            for k in ("axis_value", "epsilon", "alpha", "support_size",
                      "sin_theta", "excess_risk", "target_accuracy", "wall_ms"):
                rec[k] = float(rec[k])
            for k in ("trial", "seed", "p", "r", "T", "n", "n_target",
                      "n_unlabeled", "suppressed_count"):
                rec[k] = int(rec[k])
            out.append(rec)
    return out


def write_aggregates_csv(path: str, aggs) -> None:
    if aggs:
        columns = list(asdict(aggs[0]).keys())
    else:
        columns = ["experiment", "axis_value", "estimator", "trial_count"]
    rows = [[getattr(a, c) for c in columns] for a in aggs]
    write_csv(path, columns, rows)


def _verify_instances(count: int, seed: int):
    """Random small classification instances for the closed-form audit."""
    rng = np.random.default_rng(seed)
    for index in range(count):
        p = int(rng.integers(2, 9))
        n = int(rng.integers(2, 17))
        eps = float(rng.uniform(0.05, 2.0))
        mu = rng.normal(size=p)
        mu *= float(rng.uniform(0.1, 2.0)) / np.linalg.norm(mu)
        labels = rng.integers(0, 2, size=n) * 2.0 - 1.0
        inputs = rng.normal(0.0, 1.0, size=(n, p)) + labels[:, None] * mu
        yield index, eps, LabeledDataset(inputs=inputs, labels=labels)


def closed_form_audit(count: int = 100, seed: int = 0x5EED_0008):
    """Compare each closed-form trainer with the numerical solver.

    Yields one row per (instance, trainer): objective gap, direction error,
    and the distance to the nearest branch boundary (margin).
    """
    rows = []
    for index, eps, ds in _verify_instances(count, seed):
        mu = (ds.labels @ ds.inputs) / ds.n
        mu_norm = float(np.linalg.norm(mu))
        for kind in ("standard", "adv_l2", "adv_linf"):
            e = 0.0 if kind == "standard" else eps
            closed = {
                "standard": fit_standard,
                "adv_l2": lambda d: fit_adv_l2(d, eps),
                "adv_linf": lambda d: fit_adv_linf(d, eps),
            }[kind](ds)
            numeric = oracle_fit(ds, EstimatorConfig(kind, e))
            gap = abs(numeric.objective - closed.objective)
            dir_err = float(np.linalg.norm(closed.beta - numeric.beta))
            if kind == "standard":
                margin = mu_norm
            elif kind == "adv_l2":
                margin = abs(mu_norm - eps)
            else:
                surviving = np.abs(mu)[np.abs(mu) > eps]
                if surviving.size:
                    margin = float(surviving.min() - eps)
                else:
                    margin = float(eps - np.abs(mu).max())
            rows.append(
                {
                    "instance": index,
                    "kind": kind,
                    "p": ds.p,
                    "n": ds.n,
                    "epsilon": e,
                    "mu_norm": mu_norm,
                    "closed_objective": closed.objective,
                    "oracle_objective": numeric.objective,
                    "gap": gap,
                    "direction_err": dir_err,
                    "margin": margin,
                }
            )
    return rows


def cmd_verify(args) -> int:
    rows = closed_form_audit()
    columns = list(rows[0].keys())
    write_csv(
        os.path.join(args.out, "verify.csv"),
        columns,
        [[r[c] for c in columns] for r in rows],
    )
    max_gap = max(r["gap"] for r in rows)
    ok = max_gap <= VERIFY_GAP_TOL
    print(
        f"closed-form audit: {len(rows)} comparisons, max objective gap "
        f"{max_gap:.3g} ({'PASS' if ok else 'FAIL'})"
    )
    return 0 if ok else 1


def _reference_params(experiment: str, estimator: str, row: dict):
    """(kind, params) for the theoretical overlay, or None when unmapped."""
    n_eff = row["n"] + row["n_unlabeled"]
    base = {"n": row["n"], "T": row["T"], "p": row["p"], "r": row["r"]}
    if experiment == "lemma1_rate_n":
        return "lemma1_n", base
    if experiment == "lemma1_rate_T":
        return "lemma1_T", base
    if experiment == "thm1_l2_snr":
        if estimator == "adv_l2":
            return "thm1_l2", {**base, "alpha_T": row["alpha"]}
        return "lemma1_n", base
    if experiment == "thm2_linf_sparse":
        if estimator == "adv_linf":
            return "thm2_linf", {**base, "s": row["support_size"]}
        return "lemma1_n", base
    if experiment in ("thm3_pseudo", "thm4_pseudo_adv", "thm4_pseudo_adv_linf"):
        return "thm3_pseudo", {**base, "n_tilde": max(n_eff, 2)}
    return None


def cmd_report(args) -> int:
    records = read_records_csv(args.records)
    ok = [r for r in records if r["status"] == "ok"]
    groups: dict = {}
    for r in ok:
        groups.setdefault((r["experiment"], r["estimator"]), []).append(r)

    slope_rows, overlay_rows = [], []
    for (exp, est), recs in sorted(groups.items()):
        by_axis: dict = {}
        for r in recs:
            by_axis.setdefault(r["axis_value"], []).append(r)
        pts = []
        for axis_value in sorted(by_axis):
            cell = by_axis[axis_value]
            med = float(np.median([r["sin_theta"] for r in cell]))
            ref = _reference_params(exp, est, cell[0])
            ref_value = reference_rate(*ref) if ref else float("nan")
            overlay_rows.append([exp, est, axis_value, med, ref_value])
            if axis_value > 0 and med > 0:
                pts.append((axis_value, med))
        if len(pts) >= 3:
            slope, intercept, r2 = fit_loglog_slope(pts)
            slope_rows.append([exp, est, "sin_theta", slope, intercept, r2])

    paired_rows = []
    by_cell: dict = {}
    for r in ok:
        by_cell.setdefault((r["experiment"], r["axis_value"]), {}).setdefault(
            r["estimator"], {}
        )[r["trial"]] = r
    for (exp, axis_value), ests in sorted(by_cell.items()):
        names = sorted(ests)
        for i, a in enumerate(names):
            for b in names[i + 1 :]:
                shared = sorted(set(ests[a]) & set(ests[b]))
                wins_a = sum(
                    ests[a][k]["sin_theta"] < ests[b][k]["sin_theta"]
                    for k in shared
                )
                wins_b = sum(
                    ests[b][k]["sin_theta"] < ests[a][k]["sin_theta"]
                    for k in shared
                )
                ties = len(shared) - wins_a - wins_b
                paired_rows.append(
                    [exp, axis_value, a, b, wins_a, wins_b, ties, len(shared)]
                )

    os.makedirs(args.out, exist_ok=True)
    write_csv(
        os.path.join(args.out, "slopes.csv"),
        ["experiment", "estimator", "metric", "slope", "intercept", "r_squared"],
        slope_rows,
    )
    write_csv(
        os.path.join(args.out, "overlay.csv"),
        ["experiment", "estimator", "axis_value", "sin_theta_median",
         "reference_rate"],
        overlay_rows,
    )
    write_csv(
        os.path.join(args.out, "paired.csv"),
        ["experiment", "axis_value", "estimator_a", "estimator_b",
         "wins_a", "wins_b", "ties", "trials"],
        paired_rows,
    )
    print(
        f"report: {len(slope_rows)} slope fits, {len(overlay_rows)} overlay "
        f"points, {len(paired_rows)} paired comparisons -> {args.out}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xferlab",
        description="Multi-task linear transfer learning rate experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sweep = sub.add_parser("sweep", help="run an experiment sweep")
    p_sweep.add_argument("--config", help="JSON sweep configuration")
    p_sweep.add_argument("--preset", choices=PRESET_NAMES)
    p_sweep.add_argument("--trials", type=int)
    p_sweep.add_argument("--seed", type=int)
    p_sweep.add_argument("--threads", type=int)
    p_sweep.add_argument("--out", required=True)
    p_sweep.set_defaults(fn=cmd_sweep)

    p_verify = sub.add_parser("verify", help="closed-form vs numerical audit")
    p_verify.add_argument("--out", required=True)
    p_verify.set_defaults(fn=cmd_verify)

    p_report = sub.add_parser("report", help="slopes, overlays, paired wins")
    p_report.add_argument("--records", required=True)
    p_report.add_argument("--out", required=True)
    p_report.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
