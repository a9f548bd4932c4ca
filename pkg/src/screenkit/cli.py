"""Batch front door: config-driven subcommands writing CSV outputs plus a
reproducibility manifest.

Exit codes: 0 success, 2 config error, 3 numerical/estimation failure,
4 I/O error. Failures print a machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Dict

import numpy as np

from . import io as skio
from .biaslab import MODES, SCENARIOS as LAB_SCENARIOS, make_scenario, run_bias_experiment
from .errors import ArgumentError, ParameterError, ScreenkitError, ValidationError
from .metrics import DecompositionCell, auc, auc_decomposition, forward_regression, log_odds_r2, reverse_regression, roc_curve
from .model import GroupModel, RiskParams, ScoreMap, SignalSpec, sample_population
from .panel import PanelConfig, first_stage_fe, ols_fe, synth_panel, tsls_fe
from .screening import CfSpec, SCENARIOS as CF_SCENARIOS, run_counterfactual
from .smm import EstimationConfig, MOMENT_NAMES, TruncationSpec, compute_moments, estimate

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def _load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            cfg = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"config schema_version must be {SCHEMA_VERSION}")
    return cfg


def _group_models(cfg: dict) -> Dict[str, GroupModel]:
    groups = cfg.get("groups")
    if not groups:
        raise ConfigError("config needs a non-empty 'groups' table")
    out = {}
    for label, p in groups.items():
        try:
            precisions = [1.0 / p["var_noise1"]]
            if "var_noise2" in p:
                precisions.append(1.0 / p["var_noise2"])
            out[label] = GroupModel(
                risk=RiskParams(mu0=p["mu0"], h0=1.0 / p["var_theta"]),
                signals=SignalSpec(tuple(precisions)),
                threshold=p["threshold"],
                label=label,
            )
        except (KeyError, TypeError, ZeroDivisionError) as e:
            raise ConfigError(f"group {label!r}: bad parameters ({e})") from e
    return out


def _score_map(cfg: dict) -> ScoreMap:
    sm = cfg.get("score_map")
    if not sm:
        raise ConfigError("config needs a 'score_map' with a1, a2")
    return ScoreMap(a1=sm["a1"], a2=sm["a2"])


def _positive_n(cfg: dict) -> int:
    n = cfg.get("n", 0)
    if not isinstance(n, int) or n < 1:
        raise ConfigError("n must be >= 1")
    return n


def cmd_simulate(cfg, args):
    models = _group_models(cfg)
    smap = _score_map(cfg)
    n = _positive_n(cfg)
    moments = {}
    for label, model in sorted(models.items()):
        pop = sample_population(model, smap, n, args.seed, threads=args.threads)
        skio.write_population_csv(os.path.join(args.out, f"population_{label}.csv"), pop)
        moments[label] = compute_moments(model, smap, n, args.seed)
    skio.write_moments_csv(os.path.join(args.out, "moments.csv"), moments)


def cmd_estimate(cfg, args):
    targets = skio.read_moments_csv(cfg.get("targets_csv", ""))
    kwargs = {}
    for key in ("n_sim", "n_starts", "max_iters", "weighting", "max_mean_abs_dev"):
        if key in cfg:
            kwargs[key] = cfg[key]
    if "fixed" in cfg:
        kwargs["fixed"] = {g: dict(v) for g, v in cfg["fixed"].items()}
    if "box" in cfg:
        box = dict(EstimationConfig().box)
        box.update({k: tuple(v) for k, v in cfg["box"].items()})
        kwargs["box"] = box
    if "truncation" in cfg:
        kwargs["truncation"] = {
            g: TruncationSpec(lower=t["lower"], upper=t["upper"], trimmed_mass=t.get("trimmed_mass", 0.0))
            for g, t in cfg["truncation"].items()
        }
    config = EstimationConfig(seed=args.seed, **kwargs)
    result = estimate(targets, config)
    rows = []
    for label, model in sorted(result.models.items()):
        rows.append([
            label, model.risk.mu0, model.risk.var_theta,
            1.0 / model.signals.precisions[0],
            1.0 / model.signals.precisions[1] if model.signals.k > 1 else "",
            model.threshold, result.score_map.a1, result.score_map.a2,
        ])
    skio.atomic_write_text(
        os.path.join(args.out, "estimates.csv"),
        skio.rows_to_csv(
            ["group", "mu0", "var_theta", "var_noise1", "var_noise2", "threshold", "a1", "a2"],
            rows,
        ),
    )
    dev_rows = [
        [label, name, dev]
        for label, devs in sorted(result.deviations.items())
        for name, dev in devs.items()
    ]
    skio.atomic_write_text(
        os.path.join(args.out, "deviations.csv"),
        skio.rows_to_csv(["group", "moment", "fractional_deviation"], dev_rows),
    )
    lines = [
        f"objective: {result.objective!r}",
        f"weighting: {result.weighting}",
        f"mean |deviation|: {result.mean_abs_deviation()!r}",
        "starts: " + ", ".join(
            f"#{t['start']} {t['start_objective']:.4g}->{t['objective']:.4g}" for t in result.trace
        ),
    ]
    skio.atomic_write_text(os.path.join(args.out, "report.txt"), "\n".join(lines) + "\n")


def cmd_counterfactual(cfg, args):
    models = _group_models(cfg)
    smap = _score_map(cfg)
    n = _positive_n(cfg)
    reference = cfg.get("reference")
    reports = []
    for scenario in CF_SCENARIOS:
        spec = CfSpec(scenario=scenario, reference=reference if scenario == "equalize-score-precision" else None)
        reports += run_counterfactual(models, smap, spec, args.gamma, n, args.seed, threads=args.threads)
    skio.write_cf_csv(os.path.join(args.out, "counterfactuals.csv"), reports)


def _read_scores_csv(path):
    import csv

    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if not reader.fieldnames or not {"score", "defaulted"} <= set(reader.fieldnames):
            raise ValidationError("scores CSV needs 'score' and 'defaulted' columns")
        rows = list(reader)
    scores = np.array([float(r["score"]) for r in rows])
    bad = np.array([r["defaulted"] == "1" for r in rows])
    return scores, bad


def cmd_metrics(cfg, args):
    if "scores_csv" in cfg:
        scores, bad = _read_scores_csv(cfg["scores_csv"])
    elif "population_csv" in cfg:
        import csv

        with open(cfg["population_csv"], newline="", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
        scores = np.array([float(r["score"]) for r in rows])
        bad = np.array([r["defaulted"] == "1" for r in rows])
    else:
        raise ConfigError("metrics needs 'scores_csv' or 'population_csv'")
    curve = roc_curve(scores, bad)
    skio.atomic_write_text(
        os.path.join(args.out, "roc.csv"),
        skio.rows_to_csv(skio.ROC_COLUMNS, zip(curve.thresholds, curve.fpr, curve.tpr)),
    )
    r2, slope, intercept = log_odds_r2(scores, bad)
    summary = [
        ["auc", auc(scores, bad)],
        ["log_odds_r2", r2],
        ["log_odds_slope", slope],
        ["log_odds_intercept", intercept],
        ["forward_slope", forward_regression(scores, bad)],
        ["reverse_slope", reverse_regression(scores, bad)],
    ]
    skio.atomic_write_text(
        os.path.join(args.out, "summary.csv"), skio.rows_to_csv(["metric", "value"], summary)
    )
    if "decomposition_csv" in cfg:
        import csv

        with open(cfg["decomposition_csv"], newline="", encoding="utf-8") as f:
            cells = [
                DecompositionCell(
                    label=r["cell"], auc_a=float(r["auc_a"]), auc_b=float(r["auc_b"]),
                    share_a=float(r["share_a"]), share_b=float(r["share_b"]),
                )
                for r in csv.DictReader(f)
            ]
        total, between, residual = auc_decomposition(cells)
        out_rows = [
            [c.label, c.auc_a, c.auc_b, c.auc_a - c.auc_b, c.share_a, c.share_b, c.share_a - c.share_b]
            for c in cells
        ]
        out_rows.append(["total", total, "", "", "", "", ""])
        out_rows.append(["between", between, "", "", "", "", ""])
        out_rows.append(["residual", residual, "", "", "", "", ""])
        skio.atomic_write_text(
            os.path.join(args.out, "decomposition.csv"),
            skio.rows_to_csv(skio.DECOMP_COLUMNS, out_rows),
        )


def cmd_panel(cfg, args):
    fields = {
        k: cfg[k]
        for k in (
            "n_banks", "n_geos", "n_periods", "exam_schedule", "base_rate",
            "avg_default", "marginal_default", "exam_lift", "fe_scale", "group",
        )
        if k in cfg
    }
    config = PanelConfig(**fields)
    cells = synth_panel(config, args.seed)
    skio.write_panel_csv(os.path.join(args.out, "panel.csv"), cells)
    rows = []
    for name, est in (
        ("first_stage", first_stage_fe(cells)),
        ("ols_average", ols_fe(cells)),
        ("tsls_marginal", tsls_fe(cells)),
    ):
        rows.append([name, est.coefficient, est.clustered_se, est.f_stat, est.n_cells, est.r2_within])
    skio.atomic_write_text(
        os.path.join(args.out, "regressions.csv"),
        skio.rows_to_csv(["regression", "coef", "clustered_se", "f_stat", "n", "r2_within"], rows),
    )


def cmd_bias_lab(cfg, args):
    scenario = cfg.get("scenario")
    if scenario not in LAB_SCENARIOS:
        raise ConfigError(f"scenario must be one of {LAB_SCENARIOS}")
    n_per_group = cfg.get("n_per_group", 0)
    if not isinstance(n_per_group, int) or n_per_group < 100:
        raise ConfigError("n_per_group must be an integer >= 100")
    modes = cfg.get("modes", list(MODES))
    data = make_scenario(scenario, n_per_group, args.seed)
    rows = []
    for mode in modes:
        table = run_bias_experiment(data, mode, seed=args.seed)
        for group in sorted(table):
            rows.append([scenario, mode, group, table[group]["auc"], table[group]["mse"]])
    skio.atomic_write_text(
        os.path.join(args.out, "bias_lab.csv"),
        skio.rows_to_csv(["scenario", "mode", "group", "auc", "mse"], rows),
    )


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "counterfactual": cmd_counterfactual,
    "metrics": cmd_metrics,
    "panel": cmd_panel,
    "bias-lab": cmd_bias_lab,
}


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": {"kind": kind, "message": message, "exit_code": code}}) + "\n")
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="screenkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", required=True, type=int, help="RNG seed (no wall-clock default)")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--gamma", type=float, default=0.40, help="loss given default exposure")
    args = parser.parse_args(argv)

    try:
        cfg = _load_config(args.config)
        os.makedirs(args.out, exist_ok=True)
        COMMANDS[args.command](cfg, args)
        manifest_cfg = {"subcommand": args.command, "config": cfg, "gamma": args.gamma}
        skio.write_manifest(args.out, manifest_cfg, args.seed)
    except (ConfigError, ValidationError, ParameterError, ArgumentError, KeyError) as e:
        return _fail("config", str(e), EXIT_CONFIG)
    except ScreenkitError as e:
        return _fail("numerical", str(e), EXIT_NUMERIC)
    except OSError as e:
        return _fail("io", str(e), EXIT_IO)
    return 0


if __name__ == "__main__":
    sys.exit(main())
