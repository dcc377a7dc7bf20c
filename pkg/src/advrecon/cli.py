"""Command-line entry point: ``advrecon matrix|theory|train|attack``.

Exit codes: 0 on success, 1 for usage and input errors, 2 when a numerical
routine fails (non-convergence, divergence).
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import _container
from .attack import AttackConfig, LinearModel, NetworkModel, rho_hat
from .config import OUTPUT_ROOT_ENV, ConfigError, ExperimentConfig, preset_names
from .errors import AdvReconError, FormatError, NumericalError
from .linear import compare_linear, train_minmax_linear
from .measurement import (
    MeasurementOperator,
    conditioning_report,
    gen_dct_operator,
    gen_gaussian_operator,
    load_operator,
    modify_spectrum,
    save_operator,
)
from .neural import (
    BaselineConfig,
    MlpReconstructor,
    PerturbationGenerator,
    adv_train,
    checkpoint_load,
    checkpoint_save,
    train_baseline,
)
from .neural.checkpoint import MAGIC as NET_MAGIC
from .reporting import config_hash, write_csv
from .theory import numerical_oracle, robust_linear_reconstructor


class UsageError(AdvReconError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, "%s: error: %s\n" % (self.prog, message))


def output_path(raw):
    """Relative output paths are placed under ``$ADVRECON_OUTPUT_ROOT`` when it is set."""
    p = Path(raw)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _args_hash(args, keys):
    return config_hash(json.dumps({k: getattr(args, k) for k in keys}, sort_keys=True, default=str))


def _replacement(text):
    idx, sep, val = text.partition(":")
    try:
        if not sep:
            raise ValueError
        return int(idx), float(val)
    except ValueError:
        raise argparse.ArgumentTypeError("expected index:value, got %r" % text) from None


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated numbers, got %r" % text) from None


def _load_config(args):
    if getattr(args, "config", None):
        return ExperimentConfig.from_file(args.config)
    if getattr(args, "preset", None):
        return ExperimentConfig.from_preset(args.preset)
    raise UsageError("give --config PATH or --preset NAME (presets: %s)" % ", ".join(preset_names()))


def _print_rows(rows):
    for key, value in rows:
        print("%s=%s" % (key, value))


# matrix ---------------------------------------------------------------------

def cmd_matrix_gen(args):
    if args.kind == "gaussian":
        if args.p is not None:
            raise UsageError("--p only applies to dct operators")
        A = gen_gaussian_operator(args.m, args.n, args.seed)
    else:
        A = gen_dct_operator(args.m, args.n, args.p, args.seed)
    if args.replace:
        A = modify_spectrum(A, args.replace)
    out = output_path(args.out or "%s_%dx%d_s%d.mat" % (args.kind, args.m, args.n, args.seed))
    save_operator(A, out)
    report = conditioning_report(A, args.bins)
    prov = {"config_hash": _args_hash(args, ["kind", "m", "n", "p", "seed", "replace", "bins"]),
            "seed": args.seed, "operator": "%s %dx%d" % (A.kind.value, A.m, A.n)}
    report.to_csv(output_path(args.report or out.with_suffix(".csv")), prov)
    _print_rows([("operator", out), ("sigma_min", report.sigma_min), ("sigma_max", report.sigma_max),
                 ("kappa", report.kappa)])


def cmd_matrix_analyze(args):
    entries, kind, seed = _container.read_matrix(args.path)
    report = conditioning_report(entries, args.bins)
    prov = {"config_hash": config_hash(entries.tobytes().hex()), "seed": seed,
            "operator": "%s %dx%d" % (kind, *entries.shape)}
    if args.report:
        report.to_csv(output_path(args.report), prov)
    _print_rows([("sigma_min", report.sigma_min), ("sigma_max", report.sigma_max), ("kappa", report.kappa)])


# theory ---------------------------------------------------------------------

def _kappa(M):
    s = np.linalg.svd(M, compute_uv=False)
    return float(s[0] / s[-1])


def cmd_theory_solve(args):
    A = _load_any_operator(args.operator)
    sol = robust_linear_reconstructor(A, args.lam, args.epsilon)
    oracle = numerical_oracle(A, args.lam, args.epsilon)
    residual = float(np.linalg.norm(sol.B - oracle) / np.linalg.norm(oracle))
    pinv_match = bool(np.allclose(sol.B, np.linalg.pinv(A.entries), rtol=1e-8, atol=1e-10))
    prefix = output_path(args.out)
    _container.write_matrix(prefix.with_suffix(".mat"), sol.B, "dense", A.seed)
    side = sol.sidecar()
    side.update(kappa_B=_kappa(sol.B), oracle_residual=residual, pinv_match=pinv_match)
    prefix.with_suffix(".json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")
    rows = [
        ("m_star", sol.m_star), ("q_m", sol.q_m), ("h", sol.h), ("objective_value", sol.objective_value),
        ("kappa_B", side["kappa_B"]),
        ("sigma_max_B", float(np.linalg.norm(sol.B, 2))), ("oracle_residual", residual),
        ("pinv_match", pinv_match),
    ]
    prov = {"config_hash": _args_hash(args, ["lam", "epsilon"]), "seed": A.seed,
            "operator": "%s %dx%d" % (A.kind.value, A.m, A.n), "lambda": args.lam, "epsilon": args.epsilon}
    write_csv(prefix.parent / (prefix.name + "_metrics.csv"), [(("metric", "value"), rows)], prov)
    _print_rows(rows)


def _load_any_operator(path):
    entries, kind, seed = _container.read_matrix(path)
    if kind == "dense":
        return MeasurementOperator(entries, "modified", seed)
    return load_operator(path)


# train ----------------------------------------------------------------------

def _prepare(args):
    cfg = _load_config(args)
    A = cfg.operator()
    out = cfg.output_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_operator(A, out / "operator.mat")
    return cfg, A, out


def cmd_train_linear(args):
    cfg, A, out = _prepare(args)
    tcfg = cfg.linear_config()
    train, _ = cfg.datasets(A.n)
    result = train_minmax_linear(A, train, tcfg)
    theory = robust_linear_reconstructor(A, tcfg.lam, tcfg.epsilon)
    report = compare_linear(result.B, theory.B, A)
    _container.write_matrix(out / "linear.mat", result.B, "dense", tcfg.seed)
    _container.write_matrix(out / "closed_form.mat", theory.B, "dense", A.seed)
    prov = cfg.provenance(trainer="linear")
    result.history_csv(out / "linear_loss.csv", prov)
    report.to_csv(out / "linear_comparison.csv", prov)
    _print_rows(report.as_rows())


def _networks(cfg, A):
    f_dims, g_dims, init_seed = cfg.network_layout(A.n, A.m)
    return MlpReconstructor(f_dims, seed=init_seed), PerturbationGenerator(g_dims, seed=init_seed + 1)


def cmd_train_adv(args):
    cfg, A, out = _prepare(args)
    tcfg = cfg.adv_config()
    train, _ = cfg.datasets(A.n)
    f, G = _networks(cfg, A)
    f, G, history = adv_train(f, G, A, train, tcfg)
    checkpoint_save(f, out / "adversarial.net")
    checkpoint_save(G, out / "generator.net")
    history.to_csv(out / "adversarial_trace.csv", cfg.provenance(trainer="adv"))
    print("clean_loss=%r adv_loss=%r gen_norm_mean=%r" % (
        history.clean_loss[-1], history.adv_loss[-1], history.gen_norm_mean[-1]))


def cmd_train_baseline(args):
    cfg, A, out = _prepare(args)
    settings = cfg.optimizer_settings()
    train, _ = cfg.datasets(A.n)
    variants = cfg.baseline_configs()
    if args.variant:
        variants = ([v for v in variants if v.variant.value == args.variant]
                    or [BaselineConfig.with_default_strength(args.variant)])
    for variant in variants:
        f, _ = _networks(cfg, A)
        f, history = train_baseline(f, A, train, variant, settings)
        name = variant.variant.value
        checkpoint_save(f, out / ("baseline_%s.net" % name))
        history.to_csv(out / ("baseline_%s_trace.csv" % name),
                       cfg.provenance(trainer="baseline", variant=name, mu=variant.mu, beta=variant.beta))
        print("%s clean_loss=%r" % (name, history.clean_loss[-1]))


# attack ---------------------------------------------------------------------

def load_model(path, A):
    """A linear matrix file or a network checkpoint, recognised by its magic bytes."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise FormatError("cannot read model %s: %s" % (path, exc.strerror)) from None
    if data.startswith(_container.MAT_MAGIC):
        B, _, _ = _container.decode_matrix(data)
        if B.shape != (A.n, A.m):
            raise FormatError("linear model %s has shape %s, operator needs (%d, %d)" % (path, B.shape, A.n, A.m))
        return LinearModel(B)
    if data.startswith(NET_MAGIC):
        net = checkpoint_load(path)
        if net.n_inputs != A.n or net.n_outputs != A.n:
            raise FormatError("network %s maps %d -> %d, operator has n=%d" % (
                path, net.n_inputs, net.n_outputs, A.n))
        return NetworkModel(net, A)
    raise FormatError("%s is neither a matrix file nor a network checkpoint" % path)


def cmd_attack_report(args):
    cfg = _load_config(args)
    A = _load_any_operator(args.operator) if args.operator else cfg.operator()
    models = [(Path(p).stem, load_model(p, A)) for p in args.model]
    train, test = cfg.datasets(A.n)
    testset = test if test is not None else train
    count = args.test_samples or cfg.test_samples() or len(testset)
    testset = testset.subset(np.arange(min(count, len(testset))))
    epsilons = args.epsilons if args.epsilons is not None else cfg.epsilons()
    acfg = cfg.attack_config()
    if args.seed is not None:
        acfg = AttackConfig(acfg.epsilon, acfg.steps, acfg.step_size, acfg.momentum, acfg.restarts, args.seed)
    out_dir = cfg.output_dir(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, model in models:
        report = rho_hat(model, A, testset, epsilons, acfg)
        report.to_csv(out_dir / ("%s_robustness.csv" % name),
                      cfg.provenance(model=name, samples=report.sample_count, seed=acfg.seed))
        print(name + " " + " ".join("rho_hat(%g)=%r" % kv for kv in sorted(report.rho_hat.items())))


# wiring ---------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="advrecon", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version="advrecon %s" % __version__)
    top = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    matrix = top.add_parser("matrix", help="generate or analyze measurement operators")
    msub = matrix.add_subparsers(dest="action", required=True, parser_class=_Parser)
    gen = msub.add_parser("gen", help="draw an operator and report its conditioning")
    gen.add_argument("--kind", choices=("gaussian", "dct"), required=True)
    gen.add_argument("--m", type=int, required=True)
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--p", type=int, help="DCT size (dct only; default: next power of two above n)")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--replace", type=_replacement, action="append", metavar="IDX:VAL",
                     help="replace singular value IDX (increasing order) by VAL; repeatable")
    gen.add_argument("--bins", type=int, default=50)
    gen.add_argument("--out", help="operator file")
    gen.add_argument("--report", help="conditioning CSV (default: next to the operator)")
    gen.set_defaults(func=cmd_matrix_gen)
    ana = msub.add_parser("analyze", help="conditioning of any stored matrix")
    ana.add_argument("path")
    ana.add_argument("--bins", type=int, default=50)
    ana.add_argument("--report", help="conditioning CSV")
    ana.set_defaults(func=cmd_matrix_analyze)

    theory = top.add_parser("theory", help="closed-form robust linear reconstructor")
    tsub = theory.add_subparsers(dest="action", required=True, parser_class=_Parser)
    solve = tsub.add_parser("solve")
    solve.add_argument("--operator", required=True)
    solve.add_argument("--lambda", dest="lam", type=float, default=1.0)
    solve.add_argument("--epsilon", type=float, default=0.1)
    solve.add_argument("--out", default="robust_linear", help="output prefix (.mat, .json, _metrics.csv)")
    solve.set_defaults(func=cmd_theory_solve)

    train = top.add_parser("train", help="train reconstructors from a config")
    trsub = train.add_subparsers(dest="action", required=True, parser_class=_Parser)
    for name, func in (("linear", cmd_train_linear), ("adv", cmd_train_adv), ("baseline", cmd_train_baseline)):
        p = trsub.add_parser(name)
        _add_config_args(p)
        if name == "baseline":
            p.add_argument("--variant", choices=("plain", "weight_decay", "parseval"),
                           help="train only this variant")
        p.set_defaults(func=func)

    attack = top.add_parser("attack", help="robustness evaluation")
    asub = attack.add_subparsers(dest="action", required=True, parser_class=_Parser)
    rep = asub.add_parser("report", help="worst-case error per sample and its mean for each radius")
    _add_config_args(rep)
    rep.add_argument("--model", action="append", required=True, help="model file; repeatable")
    rep.add_argument("--operator", help="operator file (default: from the config)")
    rep.add_argument("--epsilons", type=_float_list, help="comma-separated radii (default: from the config)")
    rep.add_argument("--test-samples", type=int)
    rep.add_argument("--seed", type=int)
    rep.set_defaults(func=cmd_attack_report)
    return parser


def _add_config_args(p):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="INI experiment config")
    src.add_argument("--preset", help="built-in config: %s" % ", ".join(preset_names()))
    p.add_argument("--out", help="output directory (default: [output] dir)")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except NumericalError as exc:
        print("advrecon: numerical failure: %s" % exc, file=sys.stderr)
        return 2
    except (AdvReconError, ConfigError, ValueError, OSError) as exc:
        print("advrecon: error: %s" % exc, file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
