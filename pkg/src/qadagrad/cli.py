"""Command line interface: ``qadagrad {train,quantcheck,audit,gen-synth}``."""

import argparse
import json
import sys
from dataclasses import asdict, fields

import numpy as np

from . import harness
from .data import synth_sparse_dataset, write_libsvm
from .diagnostics import INEQ_RTOL
from .optimizer import Method
from .quantize import QuantizerKind


def _bool_flag(parser, name, default, help_):
    parser.add_argument(f"--{name}", dest=name.replace("-", "_"), action=argparse.BooleanOptionalAction,
                        default=default, help=help_)


def _add_train(sub):
    p = sub.add_parser("train", help="run the simulated parameter-server training loop")
    d = harness.ExperimentConfig()
    p.add_argument("--dataset", default=d.dataset, help="LIBSVM path or synth[:n=..,d=..,k=..,noise=..,density=..,test=..,seed=..]")
    p.add_argument("--test", default=None, help="LIBSVM test file (for file datasets)")
    p.add_argument("--method", choices=[m.value for m in Method], default=d.method)
    p.add_argument("--quantizer", choices=[q.value for q in QuantizerKind], default=d.quantizer)
    p.add_argument("--workers", type=int, default=d.workers)
    p.add_argument("--batch-per-worker", type=int, default=d.batch_per_worker)
    p.add_argument("--rounds", type=int, default=d.rounds)
    p.add_argument("--eta", type=float, default=d.eta)
    p.add_argument("--lambda", dest="lam", type=float, default=d.lam)
    p.add_argument("--delta", type=float, default=d.delta)
    p.add_argument("--seed", type=int, default=None, help=f"default: ${harness.SEED_ENV} or 0")
    _bool_flag(p, "strict-qrda-delta", False, "fail if delta < |q_t|_inf (enables the H_{t-1} audit)")
    _bool_flag(p, "threads", False, "run workers on a thread pool")
    _bool_flag(p, "bootstrap-full-indicator", True, "send every coordinate in the first round")
    p.add_argument("--eval-every", type=int, default=d.eval_every)
    _bool_flag(p, "reference", False, "compute a reference optimum and record regret terms")
    p.add_argument("--reference-factor", type=int, default=d.reference_factor)
    p.add_argument("--trace-dir", default=None, help="dump every wire message, one file per round")
    p.add_argument("--csv", action="store_true", help="emit a flat CSV projection instead of JSON lines")
    p.add_argument("-o", "--output", default="-")


def _add_quantcheck(sub):
    p = sub.add_parser("quantcheck", help="verify the exact threshold quantizer against brute force")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--dmin", type=int, default=1)
    p.add_argument("--dmax", type=int, default=12)
    p.add_argument("--draws", type=int, default=10, help="stochastic realizations per trial")
    p.add_argument("--rtol", type=float, default=1e-12)
    p.add_argument("--seed", type=int, default=None)


def _add_audit(sub):
    p = sub.add_parser("audit", help="re-check inequalities and regret on a train trace")
    p.add_argument("metrics")
    _bool_flag(p, "strict", None, "check the H_{t-1} variant (default: from the trace config)")
    p.add_argument("--check-bound", action="store_true", help="fail if average regret exceeds the bound")
    p.add_argument("--slope-range", type=float, nargs=2, default=None, metavar=("LO", "HI"),
                   help="fail unless the log-log regret slope lies in [LO, HI]")
    p.add_argument("--first-checkpoint", type=int, default=10)
    p.add_argument("--rtol", type=float, default=INEQ_RTOL)


def _add_gen_synth(sub):
    p = sub.add_parser("gen-synth", help="write a synthetic dataset as LIBSVM files")
    p.add_argument("--n", type=int, default=harness.SYNTH_DEFAULTS["n"])
    p.add_argument("--test-n", type=int, default=harness.SYNTH_DEFAULTS["test"])
    p.add_argument("--d", type=int, default=harness.SYNTH_DEFAULTS["d"])
    p.add_argument("--k", type=int, default=harness.SYNTH_DEFAULTS["k"])
    p.add_argument("--noise", type=float, default=harness.SYNTH_DEFAULTS["noise"])
    p.add_argument("--density", type=float, default=harness.SYNTH_DEFAULTS["density"])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output prefix: writes PREFIX.train, PREFIX.test, PREFIX.xtrue")


def build_parser():
    parser = argparse.ArgumentParser(prog="qadagrad", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_train(sub)
    _add_quantcheck(sub)
    _add_audit(sub)
    _add_gen_synth(sub)
    return parser


def _seed(args):
    return harness.default_seed() if args.seed is None else args.seed


def cmd_train(args):
    names = {f.name for f in fields(harness.ExperimentConfig)}
    values = {k: v for k, v in vars(args).items() if k in names}
    values["seed"] = _seed(args)
    cfg = harness.ExperimentConfig(**values)
    records = harness.train(cfg, trace_dir=args.trace_dir)
    out = sys.stdout if args.output == "-" else open(args.output, "w")
    try:
        (harness.write_csv if args.csv else harness.write_jsonl)(records, out)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_quantcheck(args):
    report = harness.quantcheck(args.trials, args.dmin, args.dmax, _seed(args), args.draws, args.rtol)
    print(json.dumps({**asdict(report), "ok": report.ok}, sort_keys=True))
    return 0 if report.ok else 1


def cmd_audit(args):
    report = harness.audit(args.metrics, strict=args.strict, check_bound=args.check_bound,
                           first_checkpoint=args.first_checkpoint, rtol=args.rtol)
    ok = report.ok
    result = {**asdict(report), "ok": ok}
    if args.slope_range is not None:
        lo, hi = args.slope_range
        result["slope_ok"] = bool(lo <= report.slope <= hi)
        ok = ok and result["slope_ok"]
        result["ok"] = ok
    print(json.dumps(result, sort_keys=True))
    return 0 if ok else 1


def cmd_gen_synth(args):
    seed = _seed(args)
    full, x_true = synth_sparse_dataset(args.n + args.test_n, args.d, args.k, args.noise, seed, args.density)
    train, test = full.split(args.n)
    write_libsvm(train, f"{args.out}.train")
    if args.test_n:
        write_libsvm(test, f"{args.out}.test")
    np.savetxt(f"{args.out}.xtrue", x_true)
    return 0


COMMANDS = {"train": cmd_train, "quantcheck": cmd_quantcheck, "audit": cmd_audit, "gen-synth": cmd_gen_synth}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"qadagrad {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
