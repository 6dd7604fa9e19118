"""Client/arbiter benchmark family and the example machines used in tests."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .automata import Alphabet, MealyMachine, SpecAutomaton, product_safety, product_sum
from .measure import iid_input_chain
from .values import is_bottom


def grant_automaton(i=1) -> SpecAutomaton:
    """Reward 1 for every step without an open request, 0 while one waits."""
    r, g = f"r{i}", f"g{i}"
    return SpecAutomaton.from_transitions(
        [r, g], ["q0", "q1"], "q0",
        [("q0", g, "q0", 1), ("q0", f"!{r} & !{g}", "q0", 1), ("q0", f"{r} & !{g}", "q1", 0),
         ("q1", f"!{g}", "q1", 0), ("q1", g, "q0", 1)],
        kind="meanpayoff")


def mutex_automaton(n: int) -> SpecAutomaton:
    """Safety automaton: at most one grant per step."""
    alph = Alphabet(tuple(f"g{i}" for i in range(1, n + 1)))
    letters = np.arange(alph.size)
    ok = np.array([bin(int(l)).count("1") <= 1 for l in letters])
    delta = np.vstack([np.where(ok, 0, 1), np.ones(alph.size, np.int64)])
    return SpecAutomaton(alph, delta, 0, (0, 1), kind="safety", names=("ok", "bad"))


def response_automaton(i: int, k: int) -> SpecAutomaton:
    """Safety automaton: a request of client ``i`` is granted within ``k`` steps
    (the step of the request counts as the first)."""
    if k < 1:
        raise ValueError("response bound must be at least 1")
    r, g = f"r{i}", f"g{i}"
    alph = Alphabet((r, g))
    bad = k
    delta = np.full((k + 1, alph.size), bad, dtype=np.int64)
    R, G = alph.guard_mask(r), alph.guard_mask(g)
    for age in range(k):
        if age == 0:
            delta[0, ~(R & ~G)] = 0
            delta[0, R & ~G] = 1 if k > 1 else bad
        else:
            delta[age, G] = 0
            delta[age, ~G] = age + 1 if age + 1 < k else bad
    names = tuple(f"a{j}" for j in range(k)) + ("bad",)
    return SpecAutomaton(alph, delta, 0, (0,) * k + (1,), kind="safety", names=names)


def skewed_probabilities(n: int) -> list[Fraction]:
    """Last client requests with 0.3, each earlier one 0.1 more often."""
    return [Fraction(3, 10) + Fraction(n - 1 - i, 10) for i in range(n)]


@dataclass
class BenchmarkSpec:
    clients: int
    probabilities: list | None = None
    response_bound: int | None = None
    mutex: bool = True

    def __post_init__(self):
        if self.clients < 1:
            raise ValueError("at least one client")
        if self.probabilities is None:
            self.probabilities = skewed_probabilities(self.clients)
        self.probabilities = [Fraction(p) if not isinstance(p, float) else Fraction(str(p))
                              for p in self.probabilities]
        if len(self.probabilities) != self.clients:
            raise ValueError("one probability per client")
        if not all(0 < p < 1 for p in self.probabilities):
            raise ValueError("request probabilities must lie in (0, 1)")


def client_alphabets(n: int):
    inputs = Alphabet(tuple(f"r{i}" for i in range(1, n + 1)))
    outputs = Alphabet(tuple(f"g{i}" for i in range(1, n + 1)))
    return inputs, outputs, Alphabet(inputs.variables + outputs.variables)


def gen_clients(spec: BenchmarkSpec):
    """``(qualitative, quantitative, input chain, input alphabet)`` for ``n`` clients."""
    n = spec.clients
    inputs, _, joint = client_alphabets(n)
    quant = grant_automaton(1).lift(joint)
    for i in range(2, n + 1):
        quant = product_sum(quant, grant_automaton(i).lift(joint))
    qual = mutex_automaton(n).lift(joint) if spec.mutex else \
        SpecAutomaton(joint, np.zeros((1, joint.size), np.int64), 0, (0,), kind="safety",
                      names=("ok",))
    if spec.response_bound is not None:
        for i in range(1, n + 1):
            qual = product_safety(qual, response_automaton(i, spec.response_bound).lift(joint))
    env = iid_input_chain(spec.probabilities,
                          names=tuple(inputs.format(l) for l in range(inputs.size)))
    return qual, quant, env, inputs


# --------------------------------------------------------------------------
# example machines


def machine_m1() -> MealyMachine:
    """Alternates grants regardless of requests."""
    return MealyMachine.from_transitions(
        ["r1", "r2"], ["g1", "g2"], ["q0", "q1"], "q0",
        [("q0", "true", "q1", ["g1"]), ("q1", "true", "q0", ["g2"])])


def machine_m2() -> MealyMachine:
    return MealyMachine.from_transitions(
        ["r1", "r2"], ["g1", "g2"], ["q0", "q1", "q2"], "q0",
        [("q0", "!r2", "q0", ["g1"]), ("q0", "!r1 & r2", "q0", ["g2"]),
         ("q0", "r1 & r2", "q1", ["g1"]),
         ("q1", "!r1", "q0", ["g2"]), ("q1", "r1", "q2", ["g2"]),
         ("q2", "r2", "q1", ["g1"]), ("q2", "!r2", "q0", ["g1"])])


def priority_controller() -> MealyMachine:
    """Two-state controller that favours client 1 on simultaneous requests."""
    return MealyMachine.from_transitions(
        ["r1", "r2"], ["g1", "g2"], ["q0", "q1"], "q0",
        [("q0", "r1 & !r2", "q0", ["g1"]), ("q0", "!r1", "q0", ["g2"]),
         ("q0", "r1 & r2", "q1", ["g1"]),
         ("q1", "r1", "q1", ["g1"]), ("q1", "!r1", "q0", ["g2"])])


def two_client_specs():
    """Mutual exclusion, summed grant rewards, and the alphabet for two clients."""
    _, _, joint = client_alphabets(2)
    quant = product_sum(grant_automaton(1).lift(joint), grant_automaton(2).lift(joint))
    return mutex_automaton(2).lift(joint), quant


# --------------------------------------------------------------------------
# bench


@dataclass
class BenchRow:
    clients: int
    spec_states: int | None = None
    mdp_states: int | None = None
    machine_states: int | None = None
    value: float | None = None
    seconds: float | None = None
    error: str | None = None
    machine: MealyMachine | None = field(default=None, repr=False)


def bench_row(n: int, response: int | None = None, mode: str = "exact",
              epsilon: float | None = None) -> BenchRow:
    from .synthesis import synthesize

    t0 = time.perf_counter()
    row = BenchRow(n)
    try:
        qual, quant, env, inputs = gen_clients(BenchmarkSpec(n, response_bound=response))
        res = synthesize(qual, quant, env, inputs, mode=mode, epsilon=epsilon)
        row.spec_states = res.stats.get("spec_states")
        row.mdp_states = res.stats.get("mdp_states")
        m = res.machine
        row.machine = m
        row.machine_states = None if m is None else m.n_states
        v = getattr(res, "value", None)
        row.value = None if v is None or is_bottom(v) else float(v)
    except Exception as exc:  # noqa: BLE001 - rows fail independently
        row.error = f"{type(exc).__name__}: {exc}"
    row.seconds = time.perf_counter() - t0
    return row


def bench(lo: int = 2, hi: int = 7, response: bool | int = False, jobs: int = 1, **kw) -> list[BenchRow]:
    """One row per client count; with ``response=True`` the bound is ``n``."""
    ns = list(range(lo, hi + 1))
    bounds = [(n if response is True else (response or None)) for n in ns]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        from functools import partial
        with ProcessPoolExecutor(jobs) as ex:
            # map preserves row order
            return list(ex.map(partial(bench_row, **kw), ns, bounds))
    return [bench_row(n, k, **kw) for n, k in zip(ns, bounds)]


COLUMNS = ("clients", "spec_states", "mdp_states", "machine_states", "value", "seconds")


def _cells(row: BenchRow):
    fmt = {
        "value": lambda v: "-" if v is None else f"{v:.3f}",
        "seconds": lambda v: f"{v:.2f}",
    }
    out = []
    for c in COLUMNS:
        v = getattr(row, c)
        out.append(fmt[c](v) if c in fmt else ("-" if v is None else str(v)))
    return out


def format_table(rows) -> str:
    cells = [list(COLUMNS)] + [_cells(r) for r in rows]
    width = [max(len(r[i]) for r in cells) for i in range(len(COLUMNS))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, width)) for r in cells]
    for r in rows:
        if r.error:
            lines.append(f"n={r.clients}: {r.error}")
    return "\n".join(lines)


def format_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS + ("error",))
    for r in rows:
        w.writerow(_cells(r) + [r.error or ""])
    return buf.getvalue()
