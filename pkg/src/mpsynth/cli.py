"""Command-line front-end."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import mpp
from .automata import MealyMachine, SpecAutomaton, ValidationError, automaton_to_dot, machine_to_dot, \
    validate
from .benchmarks import BenchmarkSpec, bench, format_csv, format_table, gen_clients
from .lp import LPError
from .measure import build_value_chain, system_value
from .serialize import automaton_from_json, automaton_to_json, chain_from_json, chain_to_json, \
    load_json, machine_from_json, machine_to_json, relabel, save_json
from .stochastic import NumericError
from .synthesis import EpsilonOptimal, InfiniteMemoryRequired, Unrealizable, build_synthesis_mdp, \
    synthesize
from .values import format_value

log = logging.getLogger("mpsynth")

EXIT_OK, EXIT_NO, EXIT_UNREALIZABLE, EXIT_INVALID, EXIT_INTERNAL = 0, 1, 2, 3, 4


class UsageError(ValueError):
    pass


# --------------------------------------------------------------------------
# loading


def _load_automaton(path) -> SpecAutomaton:
    a = automaton_from_json(load_json(path))
    _check(a)
    return a


def _load_machine(path) -> MealyMachine:
    m = machine_from_json(load_json(path))
    _check(m)
    return m


def _check(x):
    v = validate(x)
    if v:
        raise ValidationError(v)


def _load_chain(path, inputs=None):
    env, alphabet = chain_from_json(load_json(path))
    if inputs is not None and alphabet.variables != inputs.variables:
        env = relabel(env, alphabet, inputs)
        alphabet = inputs
    return env, alphabet


def _write_text(path, text):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


def _chain_dot(mc) -> str:
    lines = ["digraph value_chain {", "  rankdir=LR;"]
    for s in range(mc.n):
        name = "/".join(str(x) for x in mc.names[s] if x is not None)
        lines.append(f'  n{s} [label="{name}\\nr={mc.reward[s]:g}"];')
    for s in range(mc.n):
        t, p = mc.distribution(s)
        for tt, pp in zip(t, p):
            lines.append(f'  n{s} -> n{int(tt)} [label="{pp:.4g}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# commands


def cmd_measure(args) -> int:
    m = _load_machine(args.machine)
    a = _load_automaton(args.qual) if args.qual else None
    b = _load_automaton(args.quant)
    env, _ = _load_chain(args.env, m.inputs)
    v = system_value(m, a, b, env)
    print(format_value(v))
    if args.dot:
        _write_text(args.dot, _chain_dot(build_value_chain(m, a, b, env)))
    return EXIT_OK


def _synthesis_inputs(args):
    a = _load_automaton(args.qual)
    b = _load_automaton(args.quant)
    env, inputs = _load_chain(args.env)
    return a, b, env, inputs


def cmd_synthesize(args) -> int:
    a, b, env, inputs = _synthesis_inputs(args)
    mode = "epsilon" if args.epsilon is not None else "exact"
    res = synthesize(a, b, env, inputs, mode=mode, epsilon=args.epsilon)
    log.info("stats: %s", res.stats)
    if isinstance(res, Unrealizable):
        print(f"unrealizable: {res.reason}")
        return EXIT_UNREALIZABLE
    if isinstance(res, InfiniteMemoryRequired):
        print(f"optimum {res.optimum:.6f} needs infinite memory; rerun with --epsilon")
        return EXIT_OK
    m = res.machine
    if args.out:
        save_json(machine_to_json(m), args.out)
    if args.dot:
        _write_text(args.dot, machine_to_dot(m))
    if isinstance(res, EpsilonOptimal):
        print(f"value {res.value:.6f} (optimum {res.optimum:.6f}, epsilon {res.epsilon:g}, "
              f"{m.n_states} states)")
    else:
        print(f"value {res.value:.6f} (optimal memoryless, {m.n_states} states)")
    if not args.out:
        print(json.dumps(machine_to_json(m), indent=1))
    return EXIT_OK


def cmd_check_memoryless(args) -> int:
    a, b, env, inputs = _synthesis_inputs(args)
    smdp = build_synthesis_mdp(a, b, env, inputs)
    g = smdp.mdp
    sol = mpp.mpp_value(g)
    if not sol.win[g.initial]:
        print("unrealizable")
        return EXIT_UNREALIZABLE
    flag, _, _ = mpp.has_optimal_memoryless(g, sol=sol)
    print(f"{'yes' if flag else 'no'} (optimum {2.0 * sol.initial_value:.6f})")
    return EXIT_OK if flag else EXIT_NO


def _parse_probs(text, n):
    if text is None:
        return None
    probs = [Fraction(p.strip()) for p in text.split(",") if p.strip()]
    if len(probs) != n:
        raise UsageError(f"expected {n} probabilities, got {len(probs)}")
    return probs


def cmd_gen_clients(args) -> int:
    spec = BenchmarkSpec(args.clients, _parse_probs(args.probabilities, args.clients),
                         response_bound=args.response_bound, mutex=not args.no_mutex)
    qual, quant, env, inputs = gen_clients(spec)
    out = Path(args.out)
    save_json(automaton_to_json(qual), out / "qual.json")
    save_json(automaton_to_json(quant), out / "quant.json")
    save_json(chain_to_json(env, inputs), out / "env.json")
    if args.dot:
        _write_text(out / "qual.dot", automaton_to_dot(qual))
        _write_text(out / "quant.dot", automaton_to_dot(quant))
    print(f"wrote qual.json ({qual.n_states} states), quant.json ({quant.n_states} states), "
          f"env.json ({env.n} states) to {out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    response = True if args.response and args.response_bound is None else (args.response_bound or False)
    mode = "epsilon" if args.epsilon is not None else "exact"
    rows = bench(args.lo, args.hi, response, jobs=args.jobs, mode=mode, epsilon=args.epsilon)
    table = format_table(rows)
    print(table)
    if args.out:
        from .plotting import bench_figures

        out = Path(args.out)
        stem = "table2" if response else "table1"
        _write_text(out / f"{stem}.txt", table + "\n")
        _write_text(out / f"{stem}.csv", format_csv(rows))
        for p in bench_figures(rows, out, stem):
            print(f"figure: {p}")
    return EXIT_OK if all(r.error is None for r in rows) else EXIT_INTERNAL


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mpsynth", description=__doc__)
    p.add_argument("--seed", type=int, default=0, help="seed for randomized utilities")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--lp-backend", choices=("auto", "simplex", "highs"), default=None)
    sub = p.add_subparsers(dest="command", required=True)

    def spec_args(q, machine=False):
        if machine:
            q.add_argument("-m", "--machine", required=True)
        q.add_argument("-a", "--qual", required=not machine,
                       help="qualitative (parity or safety) automaton")
        q.add_argument("-b", "--quant", required=True, help="mean-payoff automaton")
        q.add_argument("-e", "--env", required=True, help="labeled input chain")

    q = sub.add_parser("measure", help="value of a machine")
    spec_args(q, machine=True)
    q.add_argument("--dot", help="write the value chain as DOT")
    q.set_defaults(func=cmd_measure)

    q = sub.add_parser("synthesize", help="construct an optimal machine")
    spec_args(q)
    g = q.add_mutually_exclusive_group()
    g.add_argument("--epsilon", type=float)
    g.add_argument("--exact", action="store_true")
    q.add_argument("-o", "--out")
    q.add_argument("--dot")
    q.set_defaults(func=cmd_synthesize)

    q = sub.add_parser("check-memoryless", help="exit 0 iff a memoryless optimum exists")
    spec_args(q)
    q.set_defaults(func=cmd_check_memoryless)

    q = sub.add_parser("gen-clients", help="write the client benchmark files")
    q.add_argument("-n", "--clients", type=int, required=True)
    q.add_argument("-k", "--response-bound", type=int)
    q.add_argument("-p", "--probabilities", help="comma separated, one per client")
    q.add_argument("--no-mutex", action="store_true")
    q.add_argument("-o", "--out", required=True)
    q.add_argument("--dot", action="store_true")
    q.set_defaults(func=cmd_gen_clients)

    q = sub.add_parser("bench", help="client benchmark table")
    q.add_argument("--from", dest="lo", type=int, default=2)
    q.add_argument("--to", dest="hi", type=int, default=7)
    q.add_argument("--response", action="store_true", help="response bound k = n")
    q.add_argument("-k", "--response-bound", type=int, help="fixed response bound")
    q.add_argument("--epsilon", type=float)
    q.add_argument("-j", "--jobs", type=int, default=1)
    q.add_argument("--out", help="directory for table, CSV and figures")
    q.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(message)s")
    np.random.seed(args.seed)
    if args.lp_backend:
        mpp.LP_BACKEND = args.lp_backend
    try:
        return args.func(args)
    except (NumericError, LPError, mpp.SolverError, ArithmeticError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except ValidationError as exc:
        for v in exc.violations:
            print(f"invalid: {v}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, KeyError, TypeError, OSError) as exc:
        # AlphabetError, ModelError and JSON decode errors are ValueErrors
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID

if __name__ == "__main__":
    sys.exit(main())
