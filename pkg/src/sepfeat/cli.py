"""Command-line entry point.

Every command accepts ``--config FILE`` (a JSON object whose keys are the
command's long option names with dashes or underscores) and explicit flags,
which take precedence.  Each run writes ``manifest.json`` into its output
directory; ``sepfeat replay manifest.json`` re-executes it.

Exit status: 0 on success, 1 on a processing error (a JSON error record is
printed to stderr), 2 when the command line or config cannot be parsed.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .core import child_seed, standardize_columns
from .errors import ConfigError, SepfeatError
from .evaluation import collapse_coordinates, collapse_spread, roc, weight_ratio
from .experiments import BenchmarkResult, scaling_cell, sweep_s_row
from .io import read_counts, read_json, read_matrix, read_names, read_rows, write_json, write_matrix, write_rows
from .maxmargin import SCALES, SolverSettings
from .preprocessing import downsample_reads, expand_correlated, filter_and_normalize
from .proposals import ALGORITHMS, ProposalPolicy
from .scoring import ScorerConfig, calibrate_for, null_statistics, score_features, z_scores
from .synthetic import PairwiseMixtureSpec, generate_pairwise_mixture

SEED_MAX = (1 << 64) - 1


def _f(v):
    if v is None:
        return ""
    return repr(float(v))


# ---------------------------------------------------------------------------
# options


def _seed(text):
    try:
        v = int(text)
    except (TypeError, ValueError):
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}")
    if not 0 <= v <= SEED_MAX:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _floats(text):
    return [float(t) for t in str(text).split(",") if t.strip()]


def _ints(text):
    return [int(t) for t in str(text).split(",") if t.strip()]


# name -> (type, default, help); shared between commands
OPTIONS = {
    "out": (str, None, "output directory"),
    "seed": (_seed, None, "64-bit unsigned seed"),
    "input": (str, None, "matrix CSV"),
    # generator
    "k_true": (int, 7, "number of planted clusters"),
    "d_total": (int, 861, "total number of features"),
    "separation": (float, 6.0, "distance between the two means on an informative axis"),
    "sigma_in": (float, 1.0, "within-cluster std on informative axes"),
    "n_per_cluster": (int, 200, "points per cluster"),
    "noise_theta": (float, 0.0, "strength of the correlated-noise direction"),
    # scorer
    "t_proposals": (int, 1000, "ensemble size T"),
    "n_subsample": (int, None, "rows per proposal (default N/2)"),
    "k_min": (int, 3, "smallest proposal cluster count"),
    "k_max": (int, 14, "largest proposal cluster count"),
    "algorithm": (str, "kmeans", f"proposal clustering, one of {ALGORITHMS}"),
    "lambda_scale": (str, "relative", f"L1 weight per pair, one of {SCALES}"),
    "lambda_hat": (float, None, "fixed L1 weight (skips calibration)"),
    "target_nnz": (float, 1.0, "calibration target for mean support"),
    "normalize_theta": (lambda s: str(s).lower() in ("1", "true", "yes"), True, "unit-normalize separators"),
    "huber_delta": (float, 0.01, "hinge smoothing width"),
    "tol": (float, 1e-7, "solver tolerance"),
    "null_runs": (int, 1, "shuffled-data scoring runs"),
    "n_jobs": (int, 1, "worker threads"),
    "bins": (int, 50, "histogram bins"),
    # evaluation
    "scores": (str, None, "scores.csv from a score run"),
    "mask": (str, None, "feature mask CSV (default: sibling of --input)"),
    # experiments
    "ratios": (_floats, [2.0, 10.0, 25.0, 50.0], "comma-separated D/D_s values"),
    "n_values": (_ints, [200, 1400, 5000], "comma-separated N values"),
    "s_values": (_floats, [1.0, 2.0, 4.0, 6.0], "comma-separated separations S"),
    "x_target": (float, 15.0, "target D / (D_s ln N) for the S sweep"),
    # preprocessing
    "counts": (str, None, "count matrix CSV"),
    "depth": (int, 10000, "reads kept per cell"),
    "mean_min": (float, 0.05, "minimum gene mean"),
    "std_min": (float, 0.05, "minimum gene std"),
    "whitelist": (str, None, "file with one allowed gene per line"),
    "z_threshold": (float, 1.0, "selection threshold on z"),
    "k": (int, 5, "correlated features added per selected feature"),
}

SCORER = ["t_proposals", "n_subsample", "k_min", "k_max", "algorithm", "lambda_scale", "lambda_hat",
          "target_nnz", "normalize_theta", "huber_delta", "tol", "n_jobs"]
GENERATOR = ["k_true", "d_total", "separation", "sigma_in", "n_per_cluster", "noise_theta"]

COMMANDS = {
    "synth": (["out", "seed", *GENERATOR], ["out", "seed"]),
    "score": (["out", "seed", "input", *SCORER, "bins"], ["out", "seed", "input"]),
    "null": (["out", "seed", "input", *SCORER, "null_runs", "bins"], ["out", "seed", "input"]),
    "eval": (["out", "scores", "mask"], ["out", "scores"]),
    "scaling": (["out", "seed", "ratios", "n_values", "t_proposals", "algorithm", "lambda_scale",
                 *GENERATOR[:1], "separation", "sigma_in", "noise_theta", "n_jobs"], ["out", "seed"]),
    "sweep-s": (["out", "seed", "s_values", "x_target", "t_proposals", "k_true", "n_per_cluster",
                 "sigma_in", "n_jobs"], ["out", "seed"]),
    "preprocess": (["out", "seed", "counts", "depth", "mean_min", "std_min", "whitelist"],
                   ["out", "seed", "counts"]),
    "expand": (["out", "input", "scores", "z_threshold", "k"], ["out", "input", "scores"]),
}

COMMAND_HELP = {
    "synth": "generate a planted-feature dataset",
    "score": "ensemble feature scores g",
    "null": "scores plus column-shuffle null statistics and z-scores",
    "eval": "ROC, AUROC and weight ratio against a feature mask",
    "scaling": "weight ratio over a (D/D_s, N) grid",
    "sweep-s": "AUROC over separations S at fixed D / (D_s ln N)",
    "preprocess": "downsample, filter and scale a count matrix",
    "expand": "select features by z and add their top correlates",
}


@dataclass
class ExperimentConfig:
    """Fully resolved description of one run."""

    command: str
    params: dict = field(default_factory=dict)

    def to_json(self):
        return {"command": self.command, "config": self.params}

    @classmethod
    def from_json(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("manifest must be a JSON object")
        if doc.get("command") not in COMMANDS:
            raise ConfigError(f"unknown command {doc.get('command')!r}")
        cfg = doc.get("config")
        if not isinstance(cfg, dict):
            raise ConfigError("manifest has no config object")
        allowed, _ = COMMANDS[doc["command"]]
        extra = set(cfg) - set(allowed)
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(doc["command"], dict(cfg))


def build_parser():
    parser = argparse.ArgumentParser(prog="sepfeat", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (opts, _) in COMMANDS.items():
        p = sub.add_parser(name, help=COMMAND_HELP[name], argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON config file")
        for opt in opts:
            typ, default, text = OPTIONS[opt]
            p.add_argument("--" + opt.replace("_", "-"), dest=opt, type=typ,
                           help=f"{text} (default: {default})")
    rp = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    rp.add_argument("manifest")
    rp.add_argument("--out", help="write outputs here instead of the recorded directory")
    return parser


def load_config(path, command):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    allowed, _ = COMMANDS[command]
    out = {}
    for key, value in doc.items():
        name = key.replace("-", "_")
        if name not in allowed:
            raise ConfigError(f"unknown config key {key!r} for {command}")
        typ = OPTIONS[name][0]
        try:
            if isinstance(value, list) and typ in (_floats, _ints):
                value = typ(",".join(str(v) for v in value))
            elif value is not None and typ is not str:
                value = typ(value)
        except (ValueError, argparse.ArgumentTypeError) as e:
            raise ConfigError(f"bad value for {key!r}: {e}") from None
        out[name] = value
    return out


def resolve(command, cli_values):
    """Defaults, then config file, then explicit flags."""
    allowed, required = COMMANDS[command]
    params = {k: OPTIONS[k][1] for k in allowed}
    cli_values = dict(cli_values)
    cfg_path = cli_values.pop("config", None)
    if cfg_path:
        params.update(load_config(cfg_path, command))
    params.update(cli_values)
    missing = [k for k in required if params.get(k) is None]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))
    for key in ("input", "scores", "mask", "counts", "whitelist", "out"):
        if params.get(key) is not None:
            params[key] = str(Path(params[key]).resolve())
    return ExperimentConfig(command, params)


# ---------------------------------------------------------------------------
# commands


def _versions():
    from importlib.metadata import version

    return {"sepfeat": __version__, "numpy": np.__version__, "scipy": version("scipy"),
            "numba": version("numba"), "clarabel": version("clarabel"), "python": platform.python_version()}


def _scorer(p, n_rows):
    n_sub = p["n_subsample"] if p.get("n_subsample") is not None else n_rows // 2
    policy = ProposalPolicy(n_subsample=n_sub, k_min=p["k_min"], k_max=p["k_max"],
                            algorithm=p["algorithm"], t_proposals=p["t_proposals"])
    solver = SolverSettings(lam=1.0, tol=p["tol"], huber_delta=p["huber_delta"])
    return ScorerConfig(policy, solver, target_nnz=p["target_nnz"], normalize_theta=p["normalize_theta"],
                        null_runs=int(p.get("null_runs", 1)), lambda_hat=p["lambda_hat"],
                        lambda_scale=p["lambda_scale"])


def _spec(p, seed, **over):
    kw = {k: p[k] for k in GENERATOR if k in p}
    kw.update(over)
    return PairwiseMixtureSpec(seed=seed, **kw)


def cmd_synth(p, out):
    m = generate_pairwise_mixture(_spec(p, p["seed"]))
    write_matrix(m, out / "data.csv")
    return {"N": m.n_samples, "D": m.n_features, "D_s": int(m.informative_mask.sum())}


def _write_scores(out, m, scores, bins):
    z = scores.z if scores.z is not None else [None] * m.n_features
    write_rows(out / "scores.csv", ["feature", "g", "z"],
               ([name, _f(g), _f(zz)] for name, g, zz in zip(m.feature_names, scores.g, z)))
    counts, edges = np.histogram(scores.g, bins=bins)
    header = ["bin_left", "bin_right", "count"]
    cols = [edges[:-1], edges[1:], counts]
    if m.informative_mask is not None:
        header += ["count_informative", "count_uninformative"]
        cols += [np.histogram(scores.g[m.informative_mask], bins=edges)[0],
                 np.histogram(scores.g[~m.informative_mask], bins=edges)[0]]
    write_rows(out / "histogram.csv", header,
               ([_f(a), _f(b), *(str(int(c)) for c in rest)] for a, b, *rest in zip(*cols)))


def cmd_score(p, out, with_null=False):
    m = read_matrix(p["input"])
    config = _scorer(p, m.n_samples)
    if with_null and config.null_runs < 1:
        raise ConfigError("null requires --null-runs >= 1")
    seed = p["seed"]
    std = standardize_columns(m)
    lam = config.lambda_hat if config.lambda_hat is not None else calibrate_for(std, config, seed)
    keep = m.true_labels is not None
    scores = score_features(std, config, seed, lambda_hat=lam, keep_proposals=keep, n_jobs=p["n_jobs"])
    if with_null:
        mu, sigma = null_statistics(std, config, child_seed(seed, "null"), lambda_hat=lam, n_jobs=p["n_jobs"])
        scores = z_scores(dataclasses.replace(scores, null_mean=mu, null_std=sigma))
    _write_scores(out, m, scores, p["bins"])
    summary = {"T": scores.proposals_used, "lambda_hat": scores.lambda_hat,
               "lambda_scale": config.lambda_scale, "n_pairs": scores.n_pairs, "n_zero": scores.n_zero}
    if scores.z is not None:
        summary.update(null_mean=scores.null_mean, null_std=scores.null_std)
    if m.informative_mask is not None:
        summary.update({k: v for k, v in BenchmarkResult(m, scores).summary().items()
                        if k in ("auroc", "weight_ratio", "entropy", "vote_ratio")})
    return summary


def cmd_null(p, out):
    return cmd_score(p, out, with_null=True)


def _read_scores(path):
    header, rows = read_rows(path)
    if header[:2] != ["feature", "g"]:
        raise ConfigError(f"{path} is not a scores file")
    names = [r[0] for r in rows]
    g = np.array([float(r[1]) for r in rows])
    z = None
    if len(header) > 2 and rows and all(r[2] != "" for r in rows):
        z = np.array([float(r[2]) for r in rows])
    return names, g, z


def _read_mask(path, names):
    _, rows = read_rows(path)
    lookup = {r[0]: r[1].strip().lower() in ("1", "true") for r in rows}
    try:
        return np.array([lookup[n] for n in names])
    except KeyError as e:
        raise ConfigError(f"mask has no entry for feature {e}") from None


def cmd_eval(p, out):
    names, g, _ = _read_scores(p["scores"])
    mask_path = p.get("mask")
    if mask_path is None:
        raise ConfigError("eval needs --mask")
    mask = _read_mask(mask_path, names)
    curve = roc(g, mask)
    write_rows(out / "roc.csv", ["threshold", "fpr", "tpr"],
               ([_f(t), _f(f), _f(r)] for t, f, r in zip(curve.thresholds, curve.fpr, curve.tpr)))
    summary = {"auroc": curve.auroc}
    try:
        summary["weight_ratio"] = weight_ratio(g, mask)
    except SepfeatError as e:
        summary["weight_ratio"] = math.inf
        summary["weight_ratio_error"] = e.code
    prior = Path(p["scores"]).with_name("summary.json")
    if prior.exists():
        before = read_json(prior)
        for key in ("entropy", "lambda_hat", "T"):
            if key in before:
                summary[key] = before[key]
    summary.setdefault("entropy", None)
    return summary


def cmd_scaling(p, out):
    base = PairwiseMixtureSpec(k_true=p["k_true"], separation=p["separation"], sigma_in=p["sigma_in"],
                               noise_theta=p["noise_theta"], d_total=math.comb(p["k_true"], 2))
    rows = []
    for ratio in p["ratios"]:
        for n in p["n_values"]:
            rows.append(scaling_cell(base, ratio, n, p["t_proposals"], p["seed"], algorithm=p["algorithm"],
                                     n_jobs=p["n_jobs"], lambda_scale=p["lambda_scale"]))
    cols = ["D", "D_s", "N", "T", "weight_ratio", "auroc", "entropy", "lambda_hat", "x", "y"]
    for r in rows:
        r["x"], r["y"] = collapse_coordinates(r["D"], r["D_s"], r["N"], r["weight_ratio"])
    write_rows(out / "scaling.csv", cols,
               ([str(r[c]) if c in ("D", "D_s", "N", "T") else _f(r[c]) for c in cols] for r in rows))
    spread, detail = collapse_spread([(r["D"], r["D_s"], r["N"], r["weight_ratio"]) for r in rows])
    return {"cells": len(rows), "collapse_spread": spread,
            "collapse_points": [{"x": x, "curves": c, "spread": s} for x, c, s in detail]}


def cmd_sweep_s(p, out):
    base = PairwiseMixtureSpec(k_true=p["k_true"], n_per_cluster=p["n_per_cluster"], sigma_in=p["sigma_in"],
                               d_total=math.comb(p["k_true"], 2))
    rows, curves = [], []
    for s_value in p["s_values"]:
        row, res = sweep_s_row(s_value, p["seed"], base=base, x_target=p["x_target"],
                               t_proposals=p["t_proposals"], n_jobs=p["n_jobs"])
        rows.append(row)
        curve = roc(res.scores.g, res.data.informative_mask)
        curves += [[_f(s_value), _f(t), _f(f), _f(r)] for t, f, r in zip(curve.thresholds, curve.fpr, curve.tpr)]
    cols = ["S", "D", "D_s", "N", "T", "x", "auroc", "weight_ratio", "lambda_hat"]
    write_rows(out / "sweep_s.csv", cols,
               ([str(r[c]) if c in ("D", "D_s", "N", "T") else _f(r[c]) for c in cols] for r in rows))
    write_rows(out / "sweep_s_roc.csv", ["S", "threshold", "fpr", "tpr"], curves)
    return {"rows": len(rows)}


def cmd_preprocess(p, out):
    counts = read_counts(p["counts"])
    down = downsample_reads(counts, p["depth"], p["seed"])
    white = read_names(p["whitelist"]) if p.get("whitelist") else None
    m = filter_and_normalize(down, p["mean_min"], p["std_min"], white)
    write_matrix(m, out / "data.csv")
    return {"cells_kept": len(down.cell_ids), "cells_dropped": list(down.dropped),
            "genes_kept": m.metadata["kept"], "genes_dropped": m.metadata["dropped"]}


def cmd_expand(p, out):
    m = read_matrix(p["input"])
    names, _, z = _read_scores(p["scores"])
    if z is None:
        raise ConfigError("scores file has no z column; run null first")
    selected = [n for n, zz in zip(names, z) if zz > p["z_threshold"]]
    if not selected:
        raise ConfigError("no feature passes the z threshold")
    expanded = expand_correlated(m, selected, p["k"])
    chosen = set(selected)
    write_rows(out / "selected.csv", ["feature", "source"],
               ([f, "selected" if f in chosen else "correlate"] for f in expanded))
    return {"selected": len(selected), "expanded": len(expanded)}


HANDLERS = {"synth": cmd_synth, "score": cmd_score, "null": cmd_null, "eval": cmd_eval,
            "scaling": cmd_scaling, "sweep-s": cmd_sweep_s, "preprocess": cmd_preprocess,
            "expand": cmd_expand}


def execute(cfg: ExperimentConfig, out=None):
    out = Path(out or cfg.params["out"])
    out.mkdir(parents=True, exist_ok=True)
    summary = HANDLERS[cfg.command](cfg.params, out)
    write_json(out / "summary.json", summary)
    manifest = cfg.to_json()
    manifest["seed"] = cfg.params.get("seed")
    manifest["versions"] = _versions()
    write_json(out / "manifest.json", manifest)
    return summary


def _fail(err, status):
    rec = err.record() if isinstance(err, SepfeatError) else {"error": type(err).__name__, "message": str(err)}
    print(json.dumps(rec, sort_keys=True), file=sys.stderr)
    return status


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    values = vars(args)
    command = values.pop("command")
    try:
        if command == "replay":
            cfg = ExperimentConfig.from_json(read_json(values["manifest"]))
            out = values.get("out")
        else:
            cfg = resolve(command, values)
            out = None
    except ConfigError as e:
        return _fail(e, 2)
    except (OSError, json.JSONDecodeError) as e:
        return _fail(ConfigError(str(e)), 2)
    try:
        execute(cfg, out)
    except ConfigError as e:
        return _fail(e, 2)
    except (SepfeatError, ValueError, OSError) as e:
        return _fail(e, 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
