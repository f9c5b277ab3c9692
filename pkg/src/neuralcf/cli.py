"""Command-line surface: train, sweep, baselines, export-lut, selftest.

Configs are YAML mappings with strict key validation: any unknown key is
rejected by name before work starts. Exit codes: 0 success, 2 config
problem, 3 training divergence, 4 artifact corruption, 1 selftest
failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, replace

import numpy as np
import yaml

from . import artifacts as ar
from . import diffnet as dn
from . import evaluation as ev
from . import models as md
from . import relaxation as rx
from . import training as tr
from .channel import ChannelParams, make_constellation, sample_batch
from .errors import ArtifactError, ConfigError, DivergenceError

__all__ = ["main", "load_run_config", "RunConfig", "selftest"]

OUT_ROOT_ENV = "NEURALCF_OUT_ROOT"

DEFAULT_LAMBDAS = (0.01, 0.05, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0)

_TRAIN_KEYS = {
    "scheme",
    "modulation",
    "snr_db",
    "lambda",
    "epochs",
    "steps_per_epoch",
    "batch_size",
    "seed",
    "codebook_size",
    "hidden_units",
    "learning_rate",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "leaky_slope",
    "temperature",
}
_RUN_KEYS = _TRAIN_KEYS | {"lambdas", "n_test", "out_dir", "baselines"}
_TEMPERATURE_KEYS = {"initial", "floor", "decay"}
_BASELINE_KEYS = {"snr_db", "rates", "modulations"}


@dataclass(frozen=True)
class RunConfig:
    train: tr.TrainConfig
    lambdas: tuple = DEFAULT_LAMBDAS
    n_test: int = 100_000
    out_dir: str = "runs"
    baseline_snrs_db: tuple = (3.0, 13.0)
    baseline_rates: tuple = (0.0, 0.5, 1.0, 2.0, 5.0)
    baseline_modulations: tuple = ("BPSK", "PAM4")


def _reject_unknown(doc, allowed, where):
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"unknown config key {key!r} in {where}")


def _temperature_from(doc, epochs):
    if doc is None:
        return None
    if not isinstance(doc, dict):
        raise ConfigError("temperature must be a mapping")
    _reject_unknown(doc, _TEMPERATURE_KEYS, "temperature")
    initial = float(doc.get("initial", 1.0))
    floor = float(doc.get("floor", 0.1))
    if "decay" in doc:
        return rx.TemperatureSchedule(initial=initial, floor=floor, decay=float(doc["decay"]))
    return rx.schedule_for(epochs, initial=initial, floor=floor)


def load_run_config(path):
    """Parse and validate a YAML run config; unknown keys are errors."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a mapping at top level")
    _reject_unknown(doc, _RUN_KEYS, "top level")

    defaults = tr.TrainConfig()
    epochs = int(doc.get("epochs", defaults.epochs))
    try:
        train = tr.TrainConfig(
            scheme=str(doc.get("scheme", defaults.scheme)),
            modulation=str(doc.get("modulation", defaults.modulation)),
            snr_db=float(doc.get("snr_db", defaults.snr_db)),
            lam=float(doc.get("lambda", defaults.lam)),
            epochs=epochs,
            steps_per_epoch=int(doc.get("steps_per_epoch", defaults.steps_per_epoch)),
            batch_size=int(doc.get("batch_size", defaults.batch_size)),
            seed=int(doc.get("seed", defaults.seed)),
            codebook_size=int(doc.get("codebook_size", defaults.codebook_size)),
            hidden_units=int(doc.get("hidden_units", defaults.hidden_units)),
            learning_rate=float(doc.get("learning_rate", defaults.learning_rate)),
            adam_beta1=float(doc.get("adam_beta1", defaults.adam_beta1)),
            adam_beta2=float(doc.get("adam_beta2", defaults.adam_beta2)),
            adam_eps=float(doc.get("adam_eps", defaults.adam_eps)),
            leaky_slope=float(doc.get("leaky_slope", defaults.leaky_slope)),
            temperature=_temperature_from(doc.get("temperature"), epochs),
        ).validate()
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config value: {exc}") from exc

    baselines = doc.get("baselines") or {}
    if not isinstance(baselines, dict):
        raise ConfigError("baselines must be a mapping")
    _reject_unknown(baselines, _BASELINE_KEYS, "baselines")
    run = RunConfig(train=train)
    lambdas = doc.get("lambdas")
    if lambdas is not None:
        if not isinstance(lambdas, (list, tuple)) or not lambdas:
            raise ConfigError("lambdas must be a nonempty list")
        run = replace(run, lambdas=tuple(float(v) for v in lambdas))
    if "n_test" in doc:
        run = replace(run, n_test=int(doc["n_test"]))
    if "out_dir" in doc:
        run = replace(run, out_dir=str(doc["out_dir"]))
    if "snr_db" in baselines:
        run = replace(run, baseline_snrs_db=tuple(float(v) for v in baselines["snr_db"]))
    if "rates" in baselines:
        run = replace(run, baseline_rates=tuple(float(v) for v in baselines["rates"]))
    if "modulations" in baselines:
        run = replace(run, baseline_modulations=tuple(str(v) for v in baselines["modulations"]))
    if run.n_test <= 0:
        raise ConfigError("n_test must be positive")
    return run


def _apply_overrides(config, args):
    if args.seed is not None:
        config = replace(config, seed=int(args.seed))
    if args.epochs_override is not None:
        if args.epochs_override <= 0:
            raise ConfigError("--epochs-override must be positive")
        config = replace(config, epochs=int(args.epochs_override))
    return config


def _out_root(run, args):
    if getattr(args, "out", None):
        return args.out
    return os.environ.get(OUT_ROOT_ENV) or run.out_dir


def cmd_train(args):
    run = load_run_config(args.config)
    config = _apply_overrides(run.train, args)
    report = tr.train(config)
    root = _out_root(run, args)
    if root.endswith(".json"):
        path = root
    else:
        path = os.path.join(root, f"train_{config.scheme}_lam{config.lam:g}_seed{config.seed}.json")
    ar.save_artifact(path, report)
    point = ev.evaluate(report.bundle, run.n_test, tr.eval_seed(config.seed), lam=config.lam)
    print(f"artifact: {path}")
    print(
        f"deployment: rate {point.rate_bits:.6g} bits, "
        f"mi_lb {point.mi_lb_bits:.6g} bits, ser {point.ser:.6g}"
    )
    return 0


def cmd_sweep(args):
    run = load_run_config(args.config)
    config = _apply_overrides(run.train, args)
    results = tr.sweep_lambda(config, list(run.lambdas), n_test=run.n_test, jobs=args.jobs)
    root = _out_root(run, args)
    csv_path = root if root.endswith(".csv") else os.path.join(root, f"sweep_{config.scheme}.csv")
    pairs = sorted(zip(run.lambdas, results), key=lambda p: p[0])
    lines = [ev.tradeoff_csv_header()]
    for lam, (report, point) in pairs:
        lines.append(
            ev.tradeoff_csv_row(
                config.scheme, report.config.seed, config.snr_db, config.modulation, point
            )
        )
        if not args.no_artifacts:
            ar.save_artifact(
                os.path.join(
                    os.path.dirname(csv_path) or ".",
                    f"sweep_{config.scheme}_lam{lam:g}_seed{report.config.seed}.json",
                ),
                report,
            )
    ar.write_text_atomic(csv_path, "\n".join(lines) + "\n")
    print(f"csv: {csv_path} ({len(results)} rows)")
    return 0


def cmd_baselines(args):
    run = load_run_config(args.config) if args.config else RunConfig(train=tr.TrainConfig())
    if not run.baseline_snrs_db or not run.baseline_modulations:
        raise ConfigError("baseline grid is empty")
    root = _out_root(run, args)
    path = root if root.endswith(".csv") else os.path.join(root, "baselines.csv")
    lines = [ev.baseline_csv_header(run.baseline_rates)]
    for snr_db in run.baseline_snrs_db:
        for mod in run.baseline_modulations:
            cst = make_constellation(mod)
            lines.append(ev.baseline_csv_row(cst, snr_db, run.baseline_rates))
    ar.write_text_atomic(path, "\n".join(lines) + "\n")
    print(f"csv: {path} ({(len(lines) - 1)} rows)")
    return 0


def cmd_export_lut(args):
    report = ar.load_artifact(args.artifact)
    lut = ev.extract_lut(report.bundle)
    text = ev.lut_to_json(lut)
    out = args.out or (os.path.splitext(args.artifact)[0] + "_lut.json")
    ar.write_text_atomic(out, text + "\n")
    rb = ev.detect_binning(lut)
    print(f"lut: {out}")
    print(f"relay intervals: {len(lut.relay_intervals)}; per-index counts: {rb.interval_counts}")
    print(f"binning: {'yes' if rb.binning else 'no'}")
    return 0


def _check(name, ok, detail, failures):
    if ok:
        print(f"ok   {name}")
    else:
        print(f"FAIL {name}: {detail}", file=sys.stderr)
        failures.append(name)


def selftest(inject_bug=False):
    """Fast invariant suite; returns the number of failed checks."""
    import math
    import time

    from scipy.stats import chi2

    failures = []
    t0 = time.time()

    # closed-form bound limits
    ok = True
    detail = ""
    for g in (0.5, 1.0, 2.0, 10.0):
        lo = abs(ev.c_cf(g, 0.0) - 0.5 * math.log2(1 + g))
        hi = abs(ev.c_cf(g, 50.0) - 0.5 * math.log2(1 + 2 * g))
        if lo > 1e-12 or hi > 1e-6:
            ok, detail = False, f"limit mismatch at gamma={g}: {lo:g}/{hi:g}"
    if abs(ev.c_cf(1.0, 1.0) - 0.70751875) > 1e-5:
        ok, detail = False, f"c_cf(1,1)={ev.c_cf(1.0, 1.0)}"
    _check("cf-bound limits", ok, detail, failures)

    # quadrature vs Monte Carlo
    ok = True
    detail = ""
    for mod in ("BPSK", "PAM4"):
        cst = make_constellation(mod)
        for db in (3.0, 13.0):
            g = 10.0 ** (db / 10.0)
            q = ev.mi_quadrature(cst, g)
            mc = ev.mi_monte_carlo(cst, g, n=200_000, seed=17)
            if abs(q - mc) > 5e-3:
                ok, detail = False, f"{mod}@{db}dB quad {q:.5f} vs mc {mc:.5f}"
    _check("quadrature vs monte-carlo", ok, detail, failures)

    # gradient integrity through the full training loss
    rng = np.random.default_rng(3)
    cst = make_constellation("PAM4")
    channel = ChannelParams.from_snr(cst, 13.0)
    bundle = md.build_bundle("conditional", cst, channel, rng, codebook_size=8, hidden=12)
    batch = sample_batch(cst, channel, 32, rng)
    arrays = md.bundle_param_arrays(bundle, ("enc", "ent", "dem"))
    noise_rng = np.random.default_rng(11)
    noise = rx.gumbel_noise(noise_rng, (batch.n, 8))

    def loss_value():
        terms = tr.loss_batch(bundle, batch, 1.5, 0.7, None, leaves=None, use_pre=False, noise=noise)
        return float(dn._data(terms.loss))

    leaves = dn.leaf_map(arrays)
    terms = tr.loss_batch(bundle, batch, 1.5, 0.7, None, leaves=leaves, use_pre=False, noise=noise)
    grads = dn.gradient(terms.loss, leaves)
    if inject_bug:
        grads["enc.w0"] = grads["enc.w0"] + 0.05
    bad = 0
    total = 0
    for name, arr in arrays.items():
        flat = arr.reshape(-1)
        idx = rng.choice(flat.size, size=min(6, flat.size), replace=False)
        for i in idx:
            eps = 1e-5
            keep = flat[i]
            flat[i] = keep + eps
            up = loss_value()
            flat[i] = keep - eps
            down = loss_value()
            flat[i] = keep
            fd = (up - down) / (2 * eps)
            an = float(np.asarray(grads[name]).reshape(-1)[i])
            denom = max(abs(fd), abs(an), 1e-8)
            total += 1
            if abs(fd - an) / denom > 1e-4:
                bad += 1
    _check("gradient finite-difference", bad == 0, f"{bad}/{total} mismatched", failures)

    # sampler distribution
    rng = np.random.default_rng(29)
    ok = True
    detail = ""
    for k in (4, 32):
        logits = rng.normal(size=k)
        p = np.exp(logits - logits.max())
        p /= p.sum()
        draws = rx.gumbel_max(np.broadcast_to(logits, (200_000, k)), rng)
        counts = np.bincount(draws, minlength=k)
        expected = 200_000 * p
        stat = float(((counts - expected) ** 2 / expected).sum())
        pval = float(chi2.sf(stat, df=k - 1))
        if pval < 1e-4:
            ok, detail = False, f"K={k} chi2 p={pval:g}"
    _check("gumbel-max frequencies", ok, detail, failures)

    rng = np.random.default_rng(31)
    logits = rng.normal(size=(10_000, 16))
    noise = rx.gumbel_noise(rng, logits.shape)
    agree = True
    for tau in (2.0, 0.5, 0.05):
        soft = rx.concrete_sample(logits, tau, noise=noise)
        if not np.array_equal(np.argmax(soft.probs, axis=1), rx.gumbel_max(logits, noise=noise)):
            agree = False
    _check("shared-noise argmax agreement", agree, "relaxed argmax diverged", failures)

    print(f"selftest: {len(failures)} failures in {time.time() - t0:.1f}s")
    return len(failures)


def cmd_selftest(args):
    return 1 if selftest(inject_bug=args.inject_bug) else 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="neuralcf",
        description="Learned compress-and-forward relaying over scalar Gaussian channels",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="YAML run config")
        p.add_argument("--out", help="output file or directory root")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--jobs", type=int, default=1, help="parallel sweep workers")
        p.add_argument("--epochs-override", type=int, help="override the config epoch count")

    p_train = sub.add_parser("train", help="train one model and write its artifact")
    common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_sweep = sub.add_parser("sweep", help="train one model per lambda and write a CSV")
    common(p_sweep)
    p_sweep.add_argument("--no-artifacts", action="store_true", help="skip per-run artifacts")
    p_sweep.set_defaults(func=cmd_sweep)

    p_base = sub.add_parser("baselines", help="write the analytic baseline CSV")
    common(p_base, config_required=False)
    p_base.set_defaults(func=cmd_baselines)

    p_lut = sub.add_parser("export-lut", help="flatten a trained artifact into a threshold table")
    p_lut.add_argument("artifact", help="training-run artifact JSON")
    p_lut.add_argument("--out", help="output JSON path")
    p_lut.set_defaults(func=cmd_export_lut)

    p_self = sub.add_parser("selftest", help="run the fast invariant suite")
    p_self.add_argument("--inject-bug", action="store_true", help=argparse.SUPPRESS)
    p_self.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3
    except ArtifactError as exc:
        print(f"artifact error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
