from fractions import Fraction

import numpy as np
import pytest

from mpsynth import mpp
from mpsynth.automata import Alphabet, MealyMachine, SpecAutomaton, io_equivalent, minimize
from mpsynth.benchmarks import BenchmarkSpec, gen_clients, machine_m2
from mpsynth.measure import iid_input_chain, satisfies_under_mu, system_value
from mpsynth.stochastic import MDP
from mpsynth.synthesis import (
    Cancelled, EpsilonOptimal, InfiniteMemoryRequired, OptimalMemoryless, Unrealizable,
    build_synthesis_mdp, combine_with_counter, extract_mealy_memoryless, input_futures, synthesize,
)
from mpsynth.values import is_bottom
from oracles import client_oracle

IO = Alphabet(("i", "o"))
INPUTS = Alphabet(("i",))


def random_env(rng, copies=2):
    """Input chain over one variable, ``copies`` states per letter."""
    n = 2 * copies
    label = np.array([s % 2 for s in range(n)])
    edges = []
    for _ in range(n):
        t0 = 2 * int(rng.integers(copies))
        t1 = 2 * int(rng.integers(copies)) + 1
        p = float(rng.uniform(0.2, 0.8))
        edges.append([(t0, p), (t1, 1 - p)])
    return MDP.from_lists(np.zeros(n, bool), edges, 0, label=label)


def random_specs(rng, nq=3, nb=2, safety=False):
    delta = rng.integers(0, nq, (nq, IO.size))
    if safety:
        prio = (0,) * (nq - 1) + (1,)
        delta[nq - 1] = nq - 1
        a = SpecAutomaton(IO, delta, 0, prio, kind="safety")
    else:
        prio = tuple(int(p) for p in rng.integers(0, 3, nq))
        a = SpecAutomaton(IO, delta, 0, prio, kind="parity")
    b = SpecAutomaton(IO, rng.integers(0, nb, (nb, IO.size)), 0, None,
                      rng.integers(0, 3, (nb, IO.size)), (Fraction(0), Fraction(1), Fraction(3)),
                      kind="meanpayoff")
    return a, b


def all_small_machines(n_states):
    L = 2
    for code in range((n_states * 2) ** (n_states * L)):
        delta = np.zeros((n_states, L), np.int64)
        out = np.zeros((n_states, L), np.int64)
        for k in range(n_states * L):
            code, x = divmod(code, n_states * 2)
            delta[k // L, k % L], out[k // L, k % L] = divmod(x, 2)
        yield MealyMachine(INPUTS, Alphabet(("o",)), delta, out, 0,
                           tuple(f"m{i}" for i in range(n_states)))


def test_client_mdp_sizes():
    for n, expected in ((2, 13), (3, 35)):
        qual, quant, env, inputs = gen_clients(BenchmarkSpec(n))
        assert build_synthesis_mdp(qual, quant, env, inputs).n == expected


def test_two_client_optimum():
    qual, quant, env, inputs = gen_clients(BenchmarkSpec(2))
    res = synthesize(qual, quant, env, inputs)
    assert isinstance(res, OptimalMemoryless)
    assert res.value == pytest.approx(76 / 41, abs=1e-9)
    assert res.value == pytest.approx(client_oracle([0.4, 0.3]), abs=1e-7)
    assert res.machine.n_states == 2


def test_response_two_matches_m2_shape():
    qual, quant, env, inputs = gen_clients(BenchmarkSpec(2, response_bound=2))
    res = synthesize(qual, quant, env, inputs)
    assert res.value == pytest.approx(client_oracle([0.4, 0.3], 2), abs=1e-7)
    m = minimize(res.machine)
    assert m.n_states == 3
    # same shape as M2 with the roles of the two clients swapped on ties;
    # the only differences are on inputs where the grant is irrelevant
    word = io_equivalent(m, machine_m2())
    assert word is not None


def test_single_client():
    qual, quant, env, inputs = gen_clients(BenchmarkSpec(1, probabilities=[Fraction(1, 2)]))
    res = synthesize(qual, quant, env, inputs)
    assert res.value == pytest.approx(1.0)
    m = res.machine
    for q in range(m.n_states):
        # a request is always granted
        assert m.outputs.letter(int(m.out[q, 1])) == {"g1"}


def test_round_trip_random():
    rng = np.random.default_rng(40)
    kinds = {}
    for trial in range(40):
        a, b = random_specs(rng, safety=trial % 2 == 0)
        env = random_env(rng)
        res = synthesize(a, b, env, INPUTS, mode="epsilon", epsilon=0.1)
        kinds[type(res).__name__] = kinds.get(type(res).__name__, 0) + 1
        if isinstance(res, Unrealizable):
            continue
        v = system_value(res.machine, a, b, env)
        assert satisfies_under_mu(res.machine, a, env)
        if isinstance(res, OptimalMemoryless):
            assert v == pytest.approx(res.optimum, abs=1e-6)
        else:
            assert v >= res.optimum - 0.1 - 1e-9
        # no small machine beats the optimum
        for m in all_small_machines(1):
            w = system_value(m, a, b, env)
            if not is_bottom(w):
                assert w <= res.optimum + 1e-7
    assert kinds.get("OptimalMemoryless", 0) > 5 and kinds.get("Unrealizable", 0) > 0


def test_extract_reproduces_strategy_value():
    rng = np.random.default_rng(41)
    done = 0
    for _ in range(30):
        a, b = random_specs(rng)
        env = random_env(rng)
        smdp = build_synthesis_mdp(a, b, env, INPUTS)
        sol = mpp.mpp_value(smdp.mdp)
        if not sol.win[smdp.mdp.initial]:
            continue
        flag, pi, _ = mpp.has_optimal_memoryless(smdp.mdp, sol=sol)
        if not flag:
            continue
        m = extract_mealy_memoryless(smdp, pi)
        assert system_value(m, a, b, env) == pytest.approx(2 * sol.values[smdp.mdp.initial],
                                                           abs=1e-7)
        done += 1
    assert done > 5


def memory_spec():
    """Reward 1 without grant, but a grant is needed infinitely often."""
    a = SpecAutomaton.from_transitions(["i", "o"], ["idle", "granted"], "idle",
                                       [("idle", "o", "granted"), ("idle", "!o", "idle"),
                                        ("granted", "o", "granted"), ("granted", "!o", "idle")],
                                       [1, 0], kind="parity")
    b = SpecAutomaton.from_transitions(["i", "o"], ["s"], "s",
                                       [("s", "!o", "s", 1), ("s", "o", "s", 0)], kind="meanpayoff")
    return a, b


def test_infinite_memory_and_epsilon():
    a, b = memory_spec()
    env = iid_input_chain([Fraction(1, 2)])
    res = synthesize(a, b, env, INPUTS)
    assert isinstance(res, InfiniteMemoryRequired)
    assert res.optimum == pytest.approx(1.0)
    for eps in (0.2, 0.05):
        r = synthesize(a, b, env, INPUTS, mode="epsilon", epsilon=eps)
        assert isinstance(r, EpsilonOptimal)
        v = system_value(r.machine, a, b, env)
        assert 1.0 - eps - 1e-9 <= v <= 1.0 + 1e-9
        assert satisfies_under_mu(r.machine, a, env)


def test_epsilon_monotone():
    a, b = memory_spec()
    env = iid_input_chain([Fraction(1, 2)])
    e1, e2 = 0.05, 0.2
    v1 = synthesize(a, b, env, INPUTS, mode="epsilon", epsilon=e1).value
    v2 = synthesize(a, b, env, INPUTS, mode="epsilon", epsilon=e2).value
    assert v1 >= v2 - (e2 - e1) - 1e-9


def test_unrealizable():
    # any input i moves the safety automaton to its rejecting sink
    a = SpecAutomaton.from_transitions(["i", "o"], ["ok", "bad"], "ok",
                                       [("ok", "i", "bad"), ("ok", "!i", "ok"), ("bad", "true", "bad")],
                                       [0, 1], kind="safety")
    _, b = memory_spec()
    res = synthesize(a, b, iid_input_chain([0.5]), INPUTS)
    assert isinstance(res, Unrealizable) and res.machine is None and is_bottom(res.value)


def test_combine_with_counter_alternates():
    ins, outs = Alphabet(("i",)), Alphabet(("o",))
    one = np.zeros((1, 2), np.int64)
    always = MealyMachine(ins, outs, one, one + 1, 0, ("x",))
    never = MealyMachine(ins, outs, one, one, 0, ("y",))
    m = combine_with_counter(always, never, mpp.FixedSchedule(1, 2))
    assert m.n_states == 3
    q, outs_seen = m.initial, []
    for _ in range(6):
        outs_seen.append(int(m.out[q, 0]))
        q = int(m.delta[q, 0])
    assert outs_seen == [1, 0, 0, 1, 0, 0]
    with pytest.raises(ValueError):
        combine_with_counter(always, never, mpp.FixedSchedule(0, 2))


def test_input_futures():
    env = iid_input_chain([0.3, 0.6])
    block, future = input_futures(env)
    assert len(set(future.tolist())) == 1
    rng = np.random.default_rng(42)
    env2 = random_env(rng, copies=3)
    block2, future2 = input_futures(env2)
    # states in the same block have the same label and the same future
    for s in range(env2.n):
        for t in range(env2.n):
            if block2[s] == block2[t]:
                assert env2.label[s] == env2.label[t] and future2[s] == future2[t]


def test_cancel_and_bad_mode():
    qual, quant, env, inputs = gen_clients(BenchmarkSpec(2))
    with pytest.raises(Cancelled):
        synthesize(qual, quant, env, inputs, cancel=lambda: True)
    with pytest.raises(ValueError):
        synthesize(qual, quant, env, inputs, mode="epsilon")
