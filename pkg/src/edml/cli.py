"""Command-line front end.

    edml generate --vars 20 --seed 1 --out net.txt
    edml simulate net.txt --n 1024 --hidden frac:0.25 --seed 1 --out data.csv
    edml learn net.txt data.csv --algo both --iters 200 --out-prefix run/out
    edml verify --suite all --seed 0

Exit status: 0 success, 1 usage error, 2 data error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import learn, verify
from .infer import ZeroProbabilityError
from .model import (
    ModelError,
    choose_hidden,
    parse_dataset,
    parse_network,
    random_network,
    serialize_dataset,
    serialize_network,
    simulate_dataset,
)

log = logging.getLogger("edml")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3

TRACE_HEADER = "iter,logpost,max_delta,elapsed_s"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def write_atomic(path: str | os.PathLike, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelError(f"cannot read {path}: {exc.strerror}") from None


def format_trace(trace: learn.Trace) -> str:
    lines = [TRACE_HEADER]
    for r in trace.rows:
        lines.append(f"{r.iteration},{r.log_posterior!r},{r.max_delta!r},{r.elapsed:.6f}")
    return "\n".join(lines) + "\n"


def parse_hidden(text: str, network) -> list[str] | float:
    """Either explicit names or, for ``frac:q``, the fraction ``q``."""
    text = text.strip()
    if not text:
        return []
    if text.startswith("frac:"):
        try:
            q = float(text[5:])
        except ValueError:
            raise UsageError(f"bad hidden fraction {text!r}") from None
        if not 0.0 <= q <= 1.0 or math.isnan(q):
            raise UsageError(f"hidden fraction must lie in [0, 1], got {text[5:]}")
        return q
    names = [s.strip() for s in text.split(",") if s.strip()]
    for name in names:
        network.index(name)
    return names


def _pair(text: str) -> tuple[float, float]:
    try:
        a, b = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'alpha,beta', got {text!r}") from None
    if a < 1.0 or b < 1.0:
        raise argparse.ArgumentTypeError("Beta exponents must be >= 1")
    return a, b


def cmd_generate(args) -> int:
    rng = np.random.default_rng(args.seed)
    net = random_network(args.vars, rng, max_parents=args.max_parents)
    write_atomic(args.out, serialize_network(net))
    log.info("wrote %d-variable network with %d parameters to %s", len(net), net.n_parameters, args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    net = parse_network(_read(args.network))
    if args.n < 0:
        raise UsageError("--n must be non-negative")
    hidden = parse_hidden(args.hidden, net)
    if isinstance(hidden, float):
        hidden = choose_hidden(net, hidden, args.seed)
    data = simulate_dataset(net, args.n, hidden, args.seed)
    write_atomic(args.out, serialize_dataset(data))
    log.info("wrote %d examples (%d hidden variables) to %s", len(data), len(hidden), args.out)
    return EXIT_OK


def cmd_learn(args) -> int:
    structure = parse_network(_read(args.network))
    data = parse_dataset(_read(args.data))
    data.check_header(structure)
    algos = list(learn.ALGORITHMS) if args.algo == "both" else [args.algo]
    stop = None if args.stop_delta == 0 else args.stop_delta
    if stop is not None and stop < 0:
        raise UsageError("--stop-delta must be >= 0")
    if args.iters < 0:
        raise UsageError("--iters must be >= 0")
    if not 0.0 < args.gamma <= 1.0:
        raise UsageError("--gamma must lie in (0, 1]")
    # every algorithm starts from the same seed parameters
    seed_net = structure if args.explicit_seed else learn.random_parameters(structure, args.seed)
    for algo in algos:
        config = learn.LearnConfig(
            algorithm=algo,
            priors=args.alpha_beta,
            gamma=args.gamma,
            max_iterations=args.iters,
            stop_delta=stop,
            seed=args.seed,
            seed_network=seed_net,
        )
        try:
            fitted, trace = learn.run(config, structure, data)
        except ZeroProbabilityError as exc:
            raise ModelError(f"{algo}: {exc}") from None
        prefix = args.out_prefix
        write_atomic(f"{prefix}.{algo}.trace.csv", format_trace(trace))
        write_atomic(f"{prefix}.{algo}.net", serialize_network(fitted))
        last = trace.rows[-1]
        print(f"{algo}: iterations={trace.iterations} logpost={last.log_posterior:.6f} "
              f"converged={trace.converged} elapsed_s={last.elapsed:.3f}")
    return EXIT_OK


def cmd_verify(args) -> int:
    reports = verify.run_suites(args.suite, args.seed)
    for r in reports:
        print(r.line())
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="edml", description="EM and EDML parameter learning for binary Bayesian networks")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a random network")
    p.add_argument("--vars", type=int, default=20)
    p.add_argument("--max-parents", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("simulate", help="forward-sample a dataset")
    p.add_argument("network")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--hidden", default="", help="comma-separated names or frac:q")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("learn", help="run EM and/or EDML")
    p.add_argument("network")
    p.add_argument("data")
    p.add_argument("--algo", choices=["em", "edml", "both"], default="both")
    p.add_argument("--alpha-beta", type=_pair, default=(2.0, 2.0))
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--iters", type=int, default=1024)
    p.add_argument("--stop-delta", type=float, default=1e-6, help="0 runs the full iteration budget")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--explicit-seed", action="store_true", help="start from the network file's CPTs")
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("verify", help="run the oracle suites")
    p.add_argument("--suite", nargs="+", default=["all"], choices=["all", *verify.SUITES])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"edml: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelError, verify.DatasetConditionError, ValueError) as exc:
        print(f"edml: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
