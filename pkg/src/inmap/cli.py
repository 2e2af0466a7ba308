"""Command-line entry point.

Subcommands: infer (full pipeline), pseudo (stop after label refinement),
learn-proxy (proxy learning from given pseudo labels), eval, synth (emit a
synthetic modality-gap model as matrix files), verify-theory (JSON report of
the theoretical checks).

Every hyperparameter can come from a ``key=value`` config file (--config) or
a flag of the same name; flags win. Exit codes: 0 success, 2 config error,
3 data error, 4 numerics error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import theory
from .errors import ConfigError, InmapError, NumericsError
from .learn import PgdConfig, learn_proxies, predict
from .pipeline import (
    TRAIN_SET_ALPHA,
    TRAIN_SET_TAU_I,
    MODES,
    PipelineConfig,
    evaluate,
    make_pseudo_labels,
    run_inmap,
)
from .pseudo import text_logits
from .store import load_labels, load_matrix, normalize_rows, save_labels, save_matrix

_HYPER_DEFAULTS = {
    "tau_t": 0.01,
    "tau_i": 0.04,
    "alpha": 0.6,
    "gamma": 0.0,
    "sinkhorn_iters": 20,
    "pgd_iters": 2000,
    "lr": 10.0,
    "mode": "inmap",
    "seed": 0,
}
_FLOAT_KEYS = {"tau_t", "tau_i", "alpha", "gamma", "lr"}
_INT_KEYS = {"sinkhorn_iters", "pgd_iters", "seed"}
_PATH_KEYS = {"images", "text_proxies", "labels", "proxy_train_images", "out_dir"}


def _read_config_file(path: str) -> dict:
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if key in _FLOAT_KEYS:
            values[key] = float(value)
        elif key in _INT_KEYS:
            values[key] = int(value)
        elif key == "mode":
            values[key] = value
        elif key in _PATH_KEYS:
            values[key] = value
        else:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
    return values


def _add_hyper_flags(parser: argparse.ArgumentParser, *, with_files: bool = True) -> None:
    if with_files:
        parser.add_argument("--images", help="embedding matrix of the evaluation set")
        parser.add_argument("--text-proxies", help="class proxy matrix from the text side")
        parser.add_argument("--labels", help="ground-truth label file (optional)")
        parser.add_argument(
            "--proxy-train-images",
            help="separate unlabeled embedding matrix to learn proxies on",
        )
    parser.add_argument("--config", help="key=value config file; flags override it")
    parser.add_argument("--tau-t", type=float, dest="tau_t")
    parser.add_argument("--tau-i", type=float, dest="tau_i")
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--sinkhorn-iters", type=int, dest="sinkhorn_iters")
    parser.add_argument("--pgd-iters", type=int, dest="pgd_iters")
    parser.add_argument("--lr", type=float)
    parser.add_argument("--mode", choices=MODES)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out-dir", dest="out_dir", default=None)


def _resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """Defaults, then config file, then explicit flags."""
    file_values = _read_config_file(args.config) if args.config else {}
    merged = dict(_HYPER_DEFAULTS)
    merged.update({"labels": None, "proxy_train_images": None, "out_dir": "."})
    merged.update(file_values)
    for key in (*_HYPER_DEFAULTS, *_PATH_KEYS):
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    if merged.get("images") is None:
        raise ConfigError("--images is required (flag or config file)")
    if merged.get("text_proxies") is None:
        raise ConfigError("--text-proxies is required (flag or config file)")
    # learning on a separate set defaults to the softer temperature and
    # threshold unless either was set explicitly
    if merged.get("proxy_train_images") is not None:
        if args.tau_i is None and "tau_i" not in file_values:
            merged["tau_i"] = TRAIN_SET_TAU_I
        if args.alpha is None and "alpha" not in file_values:
            merged["alpha"] = TRAIN_SET_ALPHA
    return PipelineConfig(**merged)


def _config_manifest(cfg: PipelineConfig) -> dict:
    return {
        "images": str(cfg.images),
        "text_proxies": str(cfg.text_proxies),
        "labels": None if cfg.labels is None else str(cfg.labels),
        "proxy_train_images": None
        if cfg.proxy_train_images is None
        else str(cfg.proxy_train_images),
        "tau_t": cfg.tau_t,
        "tau_i": cfg.tau_i,
        "alpha": cfg.alpha,
        "gamma": cfg.gamma,
        "sinkhorn_iters": cfg.sinkhorn_iters,
        "pgd_iters": cfg.pgd_iters,
        "lr": cfg.lr,
        "mode": cfg.mode,
        "seed": cfg.seed,
    }


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _cmd_infer(args) -> int:
    cfg = _resolve_config(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = run_inmap(cfg)
    save_labels(result.predictions, out / "predictions.lbl")
    save_matrix(result.proxies, out / "proxies.mat")
    result.trace.write_csv(out / "trace.csv")
    files = {
        "predictions.lbl": {"role": "predictions"},
        "proxies.mat": {"role": "vision-proxies" if cfg.mode not in ("baseline", "sinkhorn") else "text-proxies"},
        "trace.csv": {"role": "training-trace"},
    }
    if result.metrics is not None:
        (out / "metrics.json").write_text(result.metrics.to_json() + "\n")
        files["metrics.json"] = {"role": "metrics"}
    _write_json(out / "manifest.json", {"config": _config_manifest(cfg), "files": files})
    if result.metrics is not None:
        print(result.metrics.to_json())
    return 0


def _cmd_pseudo(args) -> int:
    cfg = _resolve_config(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    features = normalize_rows(load_matrix(cfg.images))
    proxies = normalize_rows(load_matrix(cfg.text_proxies))
    logits = text_logits(features, proxies)
    pseudo = make_pseudo_labels(logits, cfg)
    save_matrix(pseudo, out / "pseudo_labels.mat")
    role = {"inmap25": "raw", "inmap50": "thresholded-raw"}.get(cfg.mode, "thresholded")
    _write_json(
        out / "manifest.json",
        {"config": _config_manifest(cfg), "files": {"pseudo_labels.mat": {"role": role}}},
    )
    return 0


def _cmd_learn_proxy(args) -> int:
    cfg = _resolve_config(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    features = normalize_rows(load_matrix(cfg.images))
    init = normalize_rows(load_matrix(cfg.text_proxies))
    pseudo = load_matrix(args.pseudo_labels).astype(np.float64)
    proxies, trace = learn_proxies(
        features, pseudo, init, PgdConfig(cfg.tau_i, cfg.pgd_iters, cfg.lr)
    )
    save_matrix(proxies, out / "proxies.mat")
    trace.write_csv(out / "trace.csv")
    save_labels(predict(features, proxies), out / "predictions.lbl")
    _write_json(
        out / "manifest.json",
        {
            "config": _config_manifest(cfg),
            "files": {
                "proxies.mat": {"role": "vision-proxies"},
                "trace.csv": {"role": "training-trace"},
                "predictions.lbl": {"role": "predictions"},
            },
        },
    )
    return 0


def _cmd_eval(args) -> int:
    predictions = load_labels(args.pred)
    truth = load_labels(args.labels)
    features = normalize_rows(load_matrix(args.images))
    proxies = normalize_rows(load_matrix(args.proxies))
    metrics = evaluate(predictions, truth, features, proxies)
    text = metrics.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def _cmd_synth(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = theory.build_synthetic_model(
        args.dim, args.classes, args.samples, args.overlap, args.rank,
        args.concentration, args.seed,
    )
    save_matrix(model.features, out / "images.mat")
    save_matrix(model.text_proxies, out / "text_proxies.mat")
    save_matrix(model.proxies_true, out / "true_proxies.mat")
    save_labels(model.labels, out / "labels.lbl")
    _write_json(
        out / "model.json",
        {
            "dim": model.dim,
            "ambient_dim": 2 * model.dim,
            "classes": model.classes,
            "samples": model.samples,
            "overlap": model.overlap,
            "overlap_rank": model.overlap_rank,
            "concentration": model.concentration,
            "seed": model.seed,
            "singular_values": [float(s) for s in model.singular_values],
            "renorm_slack": model.renorm_slack,
            "files": {
                "images.mat": {"role": "images"},
                "text_proxies.mat": {"role": "text-proxies"},
                "true_proxies.mat": {"role": "true-proxies"},
                "labels.lbl": {"role": "ground-truth"},
            },
        },
    )
    return 0


def _cmd_verify_theory(args) -> int:
    report = theory_report(
        seed=args.seed,
        prop1_trials=args.prop1_trials,
        thm1_models=args.thm1_models,
        thm2_models=args.thm2_models,
        pgd_iters=args.pgd_iters,
    )
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def theory_report(
    seed: int = 0,
    prop1_trials: int = 2000,
    thm1_models: int = 200,
    thm2_models: int = 3,
    pgd_iters: int = 2000,
) -> dict:
    """Run every theoretical check battery and collect a JSON-able report."""
    checks = []

    # ranking-bound identity over batch sizes and temperatures
    for m in (2, 8, 64):
        for tau in (0.01, 0.07):
            anchors, cands = theory.sample_prop1_batches(prop1_trials, m, 16, seed)
            rep = theory.verify_prop1(anchors, cands, tau)
            checks.append(
                {
                    "name": "prop1-ranking-bound",
                    "parameters": {"batch_size": m, "temperature": tau, "dim": 16},
                    "trials": prop1_trials,
                    "excluded": int(rep.excluded.sum()),
                    "violations": rep.violations(),
                    "max_slack": rep.min_slack(),
                }
            )

    # temperature calibration across full-overlap models
    for a in (0.1, 0.25, 0.5, 0.75, 1.0):
        model = theory.build_synthetic_model(8, 5, 200, a, 5, 8.0, seed)
        dev = theory.verify_prop3(model, 0.01)
        checks.append(
            {
                "name": "prop3-temperature-calibration",
                "parameters": {"overlap": a, "tau_t": 0.01},
                "trials": 1,
                "violations": int(dev >= 1e-10),
                "max_slack": dev,
            }
        )

    # proxy-gap lower bound over a seed batch
    violations = 0
    reported = 0
    worst = np.inf
    trials = 0
    for s in range(thm1_models):
        for a in (0.3, 0.5, 0.8):
            for r in (1, 2, 4):
                model = theory.build_synthetic_model(8, 5, 4, a, r, 8.0, seed + s)
                res = theory.verify_thm1(model)
                trials += 1
                worst = min(worst, res.lhs - res.rhs)
                if not res.holds:
                    if res.renorm_slack < 0.01:
                        violations += 1
                    else:
                        reported += 1
    checks.append(
        {
            "name": "thm1-proxy-gap-bound",
            "parameters": {"dim": 8, "classes": 5, "overlap": [0.3, 0.5, 0.8], "rank": [1, 2, 4]},
            "trials": trials,
            "violations": violations,
            "large-slack-reports": reported,
            "max_slack": float(worst),
        }
    )

    # label-noise trend
    worst_corr = np.inf
    for s in range(thm2_models):
        model = theory.build_synthetic_model(8, 5, 400, 1.0, 5, 8.0, seed + s)
        rep = theory.thm2_noise_sweep(model, config=PgdConfig(0.3, pgd_iters, 10.0))
        worst_corr = min(worst_corr, rep.rank_correlation)
    checks.append(
        {
            "name": "thm2-noise-trend",
            "parameters": {"models": thm2_models, "tau_i": 0.3, "pgd_iters": pgd_iters},
            "trials": thm2_models,
            "violations": int(worst_corr < 0.9),
            "min_rank_correlation": float(worst_corr),
        }
    )
    return {"seed": seed, "checks": checks}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="inmap",
        description="Learn per-class vision proxies from unlabeled embeddings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="run the full pipeline over embedding files")
    _add_hyper_flags(p)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("pseudo", help="emit refined pseudo labels and stop")
    _add_hyper_flags(p)
    p.set_defaults(func=_cmd_pseudo)

    p = sub.add_parser("learn-proxy", help="learn proxies from given pseudo labels")
    p.add_argument("--pseudo-labels", required=True, dest="pseudo_labels")
    _add_hyper_flags(p)
    p.set_defaults(func=_cmd_learn_proxy)

    p = sub.add_parser("eval", help="score a prediction file against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--proxies", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("synth", help="emit a synthetic modality-gap model as files")
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--overlap", type=float, default=0.6)
    p.add_argument("--rank", type=int, default=3)
    p.add_argument("--concentration", type=float, default=8.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", dest="out_dir", default=".")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("verify-theory", help="run the theoretical check batteries")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prop1-trials", type=int, default=2000, dest="prop1_trials")
    p.add_argument("--thm1-models", type=int, default=100, dest="thm1_models")
    p.add_argument("--thm2-models", type=int, default=3, dest="thm2_models")
    p.add_argument("--pgd-iters", type=int, default=2000, dest="pgd_iters")
    p.add_argument("--out", help="write the JSON report here as well as stdout")
    p.set_defaults(func=_cmd_verify_theory)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"inmap: config error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"inmap: numerics error: {exc}", file=sys.stderr)
        return 4
    except InmapError as exc:
        print(f"inmap: data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
