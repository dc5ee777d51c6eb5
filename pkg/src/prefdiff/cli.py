"""One binary, five subcommands: train-diffusion, train-classifier,
sample, verify, eval.

Exit codes: 0 success, 1 verification failure, 2 invalid input, 3 I/O or
format corruption. Outputs are byte-deterministic for a fixed config and
seed; --figures additionally renders plots next to the delimited files.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import report
from .checkpoint import (
    CheckpointError,
    load_classifier,
    load_diffusion,
    save_classifier,
    save_diffusion,
)
from .classifier import (
    PcLossConfig,
    PreferenceClassifier,
    log_score,
    log_score_grad,
    make_classifier,
    train_classifier,
)
from .config import Config, load_config
from .data import (
    make_mixture,
    make_preference_pairs,
    load_pairs_csv,
    preferred_mode_mass,
    task,
    win_rate,
)
from .ddpm import make_diffusion_model, make_schedule, sample_ddpm, train_ddpm
from .guidance import GuidanceConfig, SamplerTrace, constrained_sample
from .nn import (
    NumericError,
    RngStream,
    make_adamw,
    make_mlp,
    mlp_backward,
    mlp_forward,
    mlp_params,
    rng_gaussian,
)
from .oracle import make_grid, random_chain, verify_dpo_equivalence, verify_theorem1, verify_theorem3

# Derivation indexes under the run seed; every consumer owns a disjoint
# subtree, so commands that share a seed never share draws.
STREAM_DATASET = 0
STREAM_INIT = 1
STREAM_TRAIN = 2
STREAM_PAIRS = 3
STREAM_SAMPLE = 4
STREAM_VERIFY = 10

# Desk-scale run sizes not exposed as config keys.
DATASET_SIZE = 10_000
PAIRS_COUNT = 4_000
DIFFUSION_DEFAULTS = {"steps": 5000, "batch": 128, "lr": 1e-3}
CLASSIFIER_DEFAULTS = {"steps": 2000, "batch": 64, "lr": 1e-4}


# --- deterministic writers -------------------------------------------------


def _outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_losses_csv(curve: list[float], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "loss"])
        for step, loss in enumerate(curve, start=1):
            writer.writerow([step, repr(float(loss))])


def _write_samples_csv(samples: np.ndarray, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id"] + [f"dim_{i}" for i in range(samples.shape[1])])
        for i, row in enumerate(samples):
            writer.writerow([i] + [repr(float(v)) for v in row])


def _write_trace_csv(traces: list[SamplerTrace], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["sample_id", "t", "score_before", "score_after", "resamples", "accepted_by"]
        )
        for i, trace in enumerate(traces):
            for s in trace.steps:
                writer.writerow(
                    [
                        i,
                        s.t,
                        repr(float(s.score_before)),
                        repr(float(s.score_after)),
                        s.resamples,
                        s.accepted_by,
                    ]
                )


def _write_json(obj: dict, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _check_schedule_matches(cfg: Config, header: dict) -> None:
    sched = header["schedule"]
    declared = {
        "schedule.T": int(sched["T"]),
        "schedule.beta_start": float(sched["beta_start"]),
        "schedule.beta_end": float(sched["beta_end"]),
    }
    for key, have in declared.items():
        if key in cfg.values and cfg.values[key] != have:
            raise ValueError(
                f"config {key} = {cfg.values[key]} does not match checkpoint value {have}"
            )


def _load_cfg(args) -> Config:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.set("seed", int(args.seed))
    return cfg


# --- commands ---------------------------------------------------------------


def run_train_diffusion(cfg: Config, out_dir: Path, figures: bool = False) -> dict:
    seed = cfg.get("seed")
    sched = make_schedule(*cfg.schedule_args())
    spec, _ = task(cfg.get("data.task"))
    master = RngStream(seed)
    ds = make_mixture(spec, DATASET_SIZE, master.spawn(STREAM_DATASET))
    model = make_diffusion_model(spec.dim, sched, master.spawn(STREAM_INIT))
    opt = make_adamw(mlp_params(model.net), lr=cfg.get("train.lr", DIFFUSION_DEFAULTS["lr"]))
    curve = train_ddpm(
        ds.points,
        model,
        opt,
        cfg.get("train.steps", DIFFUSION_DEFAULTS["steps"]),
        cfg.get("train.batch", DIFFUSION_DEFAULTS["batch"]),
        master.spawn(STREAM_TRAIN),
    )
    ckpt = out_dir / "diffusion.ckpt"
    save_diffusion(ckpt, model, seed)
    _write_losses_csv(curve, out_dir / "losses.csv")
    if figures:
        report.save_loss_curve(curve, out_dir / "losses.png", "diffusion training loss")
    return {"checkpoint": str(ckpt), "final_loss": curve[-1]}


def run_train_classifier(
    cfg: Config,
    diffusion_path: str,
    out_dir: Path,
    pairs_path: str | None = None,
    figures: bool = False,
) -> dict:
    seed = cfg.get("seed")
    header, dmodel = load_diffusion(diffusion_path)
    _check_schedule_matches(cfg, header)
    sched = dmodel.schedule
    spec, reward = task(cfg.get("data.task"))
    if spec.dim != dmodel.data_dim:
        raise ValueError(
            f"task dimension {spec.dim} does not match diffusion checkpoint dim {dmodel.data_dim}"
        )
    master = RngStream(seed)
    if pairs_path is not None:
        pairs = load_pairs_csv(pairs_path)
        if len(pairs) and pairs.winners.shape[1] != dmodel.data_dim:
            raise ValueError(
                f"pairs dimension {pairs.winners.shape[1]} does not match model dim {dmodel.data_dim}"
            )
    else:
        ds = make_mixture(spec, DATASET_SIZE, master.spawn(STREAM_DATASET))
        pairs = make_preference_pairs(ds, reward, PAIRS_COUNT, master.spawn(STREAM_PAIRS))
    clf = make_classifier(dmodel.data_dim, sched.T, master.spawn(STREAM_INIT))
    loss_cfg = PcLossConfig(beta=cfg.get("pc.beta"), T=sched.T)
    opt = make_adamw(mlp_params(clf.trunk), lr=cfg.get("train.lr", CLASSIFIER_DEFAULTS["lr"]))
    curve = train_classifier(
        clf,
        pairs,
        sched,
        loss_cfg,
        opt,
        cfg.get("train.steps", CLASSIFIER_DEFAULTS["steps"]),
        cfg.get("train.batch", CLASSIFIER_DEFAULTS["batch"]),
        master.spawn(STREAM_TRAIN),
    )
    ckpt = out_dir / "classifier.ckpt"
    save_classifier(ckpt, clf, sched, seed)
    _write_losses_csv(curve, out_dir / "losses.csv")
    if figures:
        report.save_loss_curve(curve, out_dir / "losses.png", "classifier training loss")
    return {"checkpoint": str(ckpt), "final_loss": curve[-1]}


def _guidance_cfg(cfg: Config) -> GuidanceConfig:
    return GuidanceConfig(
        gamma=cfg.get("guidance.gamma"),
        max_resamples=cfg.get("guidance.M"),
        rejection_enabled=cfg.get("guidance.rejection"),
    )


def run_sample(
    cfg: Config,
    diffusion_path: str,
    classifier_path: str | None,
    n: int,
    out_dir: Path,
    threads: int = 1,
    figures: bool = False,
) -> dict:
    header, model = load_diffusion(diffusion_path)
    _check_schedule_matches(cfg, header)
    sample_rng = RngStream(cfg.get("seed")).spawn(STREAM_SAMPLE)
    if classifier_path is not None:
        _, clf = load_classifier(classifier_path)
        samples, traces = constrained_sample(
            model, clf, _guidance_cfg(cfg), sample_rng, n, threads
        )
    else:
        samples = sample_ddpm(model, n, sample_rng, threads)
        traces = []
    _write_samples_csv(samples, out_dir / "samples.csv")
    _write_trace_csv(traces, out_dir / "trace.csv")
    if figures:
        label = "guided samples" if classifier_path else "samples"
        report.save_samples_figure(samples, out_dir / "samples.png", label)
    return {"n": int(n), "guided": classifier_path is not None}


def run_eval(
    cfg: Config,
    diffusion_path: str,
    classifier_path: str,
    n: int,
    out_dir: Path,
    threads: int = 1,
    figures: bool = False,
) -> dict:
    header, model = load_diffusion(diffusion_path)
    _check_schedule_matches(cfg, header)
    _, clf = load_classifier(classifier_path)
    spec, reward = task(cfg.get("data.task"))
    if spec.dim != model.data_dim:
        raise ValueError(
            f"task dimension {spec.dim} does not match diffusion checkpoint dim {model.data_dim}"
        )
    master = RngStream(cfg.get("seed"))
    # Paired draws: sample i of both runs consumes the same derived stream.
    guided, traces = constrained_sample(
        model, clf, _guidance_cfg(cfg), master.spawn(STREAM_SAMPLE), n, threads
    )
    unguided = sample_ddpm(model, n, master.spawn(STREAM_SAMPLE), threads)
    steps = [s.resamples for tr in traces for s in tr.steps]
    metrics = {
        "win_rate": win_rate(guided, unguided, reward),
        "preferred_mode_mass_guided": preferred_mode_mass(guided, reward),
        "preferred_mode_mass_unguided": preferred_mode_mass(unguided, reward),
        "mean_resamples": float(np.mean(steps)),
    }
    _write_json(metrics, out_dir / "metrics.json")
    if figures:
        report.save_eval_figure(guided, unguided, out_dir / "eval.png")
    return metrics


# --- verification suites ----------------------------------------------------


def _suite_theorem1(seed: int) -> dict:
    t0 = time.perf_counter()
    rng = RngStream(seed).spawn(STREAM_VERIFY).spawn(1)
    per_chain = []
    ratio_err = 0.0
    for _ in range(100):
        n = int(rng.gen.integers(2, 17))
        T = int(rng.gen.integers(1, 9))
        chain = random_chain(n, T, rng)
        rep = verify_theorem1(chain)
        per_chain.append(rep.max_error)
        # mass before renormalizing must equal the ratio of tilt normalizers
        z = [float(m @ chain.score) for m in chain.marginals]
        for step, ratio in enumerate(rep.mass_ratios):
            t = chain.T - step
            ratio_err = max(ratio_err, abs(ratio - z[t - 1] / z[t]))
    max_error = max(per_chain)
    return {
        "max_error": max_error,
        "bound": 1e-10,
        "mass_ratio_max_error": ratio_err,
        "per_chain_max_errors": per_chain,
        "chains": 100,
        "pass": bool(max_error <= 1e-10),
        "elapsed_s": time.perf_counter() - t0,
    }


def _suite_theorem2(seed: int) -> dict:
    t0 = time.perf_counter()
    rng = RngStream(seed).spawn(STREAM_VERIFY).spawn(2)
    max_arg = 0.0
    max_loss = 0.0
    redraws = 0
    for _ in range(10):
        n = int(rng.gen.integers(2, 17))
        T = int(rng.gen.integers(1, 9))
        chain = random_chain(n, T, rng)
        rep = verify_dpo_equivalence(chain, n_tuples=100, beta=0.1, rng=rng)
        max_arg = max(max_arg, rep.max_arg_diff)
        max_loss = max(max_loss, rep.max_loss_diff)
        redraws += rep.redraws
    return {
        "max_arg_diff": max_arg,
        "max_loss_diff": max_loss,
        "bound": 1e-12,
        "tuples": 1000,
        "redraws": redraws,
        "pass": bool(max_arg <= 1e-12 and max_loss <= 1e-12),
        "elapsed_s": time.perf_counter() - t0,
    }


def _suite_theorem3(_seed: int) -> dict:
    t0 = time.perf_counter()
    sigma2s = [0.04, 0.01, 0.0025]

    def logscore(x):
        return -np.logaddexp(0.0, -x)

    rep = verify_theorem3(0.0, sigma2s, logscore, make_grid(-4.0, 4.0, 16001))
    half = verify_theorem3(0.0, sigma2s, logscore, make_grid(-4.0, 4.0, 8001))
    drift = max(abs(a - b) for a, b in zip(rep.tvs, half.tvs))
    decreasing = all(a > b for a, b in zip(rep.tvs, rep.tvs[1:]))
    return {
        "sigma2s": rep.sigma2s,
        "tvs": rep.tvs,
        "shifted_means": rep.shifted_means,
        "bound": 0.05,
        "grid_doubling_drift": drift,
        "drift_bound": 1e-8,
        "pass": bool(decreasing and rep.tvs[-1] <= 0.05 and drift <= 1e-8),
        "elapsed_s": time.perf_counter() - t0,
    }


def _fd_scalar(f, arr: np.ndarray, idx) -> float:
    # central difference with a value-scaled step
    v = arr[idx]
    h = 1e-5 * (1.0 + abs(v))
    arr[idx] = v + h
    fp = f()
    arr[idx] = v - h
    fm = f()
    arr[idx] = v
    return (fp - fm) / (2.0 * h)


def _rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


def _suite_gradcheck(seed: int) -> dict:
    t0 = time.perf_counter()
    rng = RngStream(seed).spawn(STREAM_VERIFY).spawn(4)
    max_mlp = 0.0
    for _ in range(100):
        depth = int(rng.gen.integers(1, 4))
        sizes = [int(rng.gen.integers(1, 6))]
        sizes += [int(rng.gen.integers(2, 9)) for _ in range(depth)]
        sizes.append(int(rng.gen.integers(1, 5)))
        net = make_mlp(sizes, rng)
        batch = int(rng.gen.integers(1, 5))
        x = rng_gaussian(rng, [batch, sizes[0]])
        upstream = rng_gaussian(rng, [batch, sizes[-1]])
        grads, x_grad = mlp_backward(net, x, upstream)
        f = lambda: float(np.sum(upstream * mlp_forward(net, x)))
        for p, g in zip(mlp_params(net), grads):
            for idx in np.ndindex(p.shape):
                max_mlp = max(max_mlp, _rel_err(g[idx], _fd_scalar(f, p, idx)))
        for idx in np.ndindex(x.shape):
            max_mlp = max(max_mlp, _rel_err(x_grad[idx], _fd_scalar(f, x, idx)))

    max_cls = 0.0
    for _ in range(100):
        d = int(rng.gen.integers(1, 5))
        clf = make_classifier(d, T=10, rng=rng, hidden=(6, 6))
        # the head initializes to zero (constant score); give it real weights
        # so the gradient under test is nontrivial
        clf.trunk.weights[-1][:] = 0.5 * rng_gaussian(rng, list(clf.trunk.weights[-1].shape))
        clf.trunk.biases[-1][:] = 0.1 * rng_gaussian(rng, list(clf.trunk.biases[-1].shape))
        x = rng_gaussian(rng, [d])
        t = int(rng.gen.integers(1, 11))
        grad = log_score_grad(clf, x, t)
        f = lambda: log_score(clf, x, t)
        for i in range(d):
            max_cls = max(max_cls, _rel_err(grad[i], _fd_scalar(f, x, i)))

    worst = max(max_mlp, max_cls)
    return {
        "max_rel_error": float(worst),
        "mlp_max_rel_error": float(max_mlp),
        "log_score_max_rel_error": float(max_cls),
        "bound": 1e-5,
        "instances": 100,
        "pass": bool(worst <= 1e-5),
        "elapsed_s": time.perf_counter() - t0,
    }


_SUITES = {
    "theorem1": _suite_theorem1,
    "theorem2": _suite_theorem2,
    "theorem3": _suite_theorem3,
    "gradcheck": _suite_gradcheck,
}


def run_verify(suite: str = "all", seed: int = 0) -> tuple[bool, dict]:
    """Run one suite or all four; returns (all passed, report dict)."""
    if suite != "all" and suite not in _SUITES:
        raise ValueError(f"unknown suite {suite!r}; expected {', '.join(_SUITES)} or all")
    names = list(_SUITES) if suite == "all" else [suite]
    rep = {name: _SUITES[name](seed) for name in names}
    return all(r["pass"] for r in rep.values()), rep


# --- argument parsing --------------------------------------------------------


def _common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", default=None, help="key=value config file")
    sub.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub.add_argument("--out", default="out", help="output directory")
    sub.add_argument("--figures", action="store_true", help="render figures next to outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prefdiff", description="preference-steered diffusion on toy densities"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-diffusion", help="train the noise-prediction net")
    _common(p)
    p.set_defaults(func=_cmd_train_diffusion)

    p = sub.add_parser("train-classifier", help="train the preference classifier")
    _common(p)
    p.add_argument("--diffusion", required=True, help="diffusion checkpoint path")
    p.add_argument("--pairs", default=None, help="preference pairs CSV (default: synthesize)")
    p.set_defaults(func=_cmd_train_classifier)

    p = sub.add_parser("sample", help="run the reverse chain, optionally guided")
    _common(p)
    p.add_argument("--diffusion", required=True)
    p.add_argument("--classifier", default=None, help="enable guidance with this checkpoint")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("verify", help="run the exact verification suites")
    _common(p)
    p.add_argument(
        "--suite",
        default="all",
        choices=["theorem1", "theorem2", "theorem3", "gradcheck", "all"],
    )
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("eval", help="guided vs unguided sampling metrics")
    _common(p)
    p.add_argument("--diffusion", required=True)
    p.add_argument("--classifier", required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_eval)
    return parser


def _cmd_train_diffusion(args) -> int:
    out = run_train_diffusion(_load_cfg(args), _outdir(args.out), args.figures)
    print(f"wrote {out['checkpoint']} (final loss {out['final_loss']:.6f})")
    return 0


def _cmd_train_classifier(args) -> int:
    out = run_train_classifier(
        _load_cfg(args), args.diffusion, _outdir(args.out), args.pairs, args.figures
    )
    print(f"wrote {out['checkpoint']} (final loss {out['final_loss']:.6f})")
    return 0


def _cmd_sample(args) -> int:
    if args.n < 1:
        raise ValueError(f"--n must be positive, got {args.n}")
    run_sample(
        _load_cfg(args),
        args.diffusion,
        args.classifier,
        args.n,
        _outdir(args.out),
        threads=max(1, args.threads),
        figures=args.figures,
    )
    print(f"wrote {args.n} samples to {args.out}")
    return 0


def _cmd_verify(args) -> int:
    cfg = _load_cfg(args)
    ok, rep = run_verify(args.suite, cfg.get("seed"))
    for name in sorted(rep):
        for key in sorted(rep[name]):
            value = rep[name][key]
            if isinstance(value, (int, float, bool)):
                print(f"{name}.{key}: {value}")
    # wall-clock timings stay out of the file so reruns are byte-identical
    on_disk = {
        name: {k: v for k, v in result.items() if k != "elapsed_s"}
        for name, result in rep.items()
    }
    _write_json(on_disk, _outdir(args.out) / "verify.json")
    print("verification " + ("passed" if ok else "FAILED"))
    return 0 if ok else 1


def _cmd_eval(args) -> int:
    if args.n < 1:
        raise ValueError(f"--n must be positive, got {args.n}")
    metrics = run_eval(
        _load_cfg(args),
        args.diffusion,
        args.classifier,
        args.n,
        _outdir(args.out),
        threads=max(1, args.threads),
        figures=args.figures,
    )
    for key in sorted(metrics):
        print(f"{key}: {metrics[key]}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, NumericError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
