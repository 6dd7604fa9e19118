"""Synthesis of Mealy machines from specifications and an input assumption."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import mpp
from .automata import Alphabet, AlphabetError, MealyMachine, SpecAutomaton, product_spec, \
    _reachable_states, state_reward_form
from .measure import check_env, satisfies_under_mu, system_value
from .stochastic import MDP, NumericError, reachable, restrict
from .values import BOTTOM, is_bottom

ROUNDTRIP_TOL = 1e-6


class Cancelled(RuntimeError):
    pass


# --------------------------------------------------------------------------
# synthesis MDP


@dataclass
class SynthesisMDP:
    """Labeled MDP alternating input draws (probabilistic) and output choices
    (player 1).

    Probabilistic states are ``(spec state, input future)`` pairs, where the
    input future is the class of input-chain states with the same
    distribution over the next inputs.  Player-1 states are ``(spec state,
    successor row, future)``: inputs whose successors under every output
    agree are merged.  ``in_succ[s, i]`` is the player-1 state reached from
    probabilistic state ``s`` on input letter ``i``; ``edge_output[e]`` is
    the output letter of player-1 edge ``e`` (the lowest letter leading to
    that successor).
    """

    mdp: MDP
    inputs: Alphabet
    outputs: Alphabet
    spec: SpecAutomaton
    in_succ: np.ndarray
    edge_output: np.ndarray
    spec_state: np.ndarray

    @property
    def n(self) -> int:
        return self.mdp.n

    def edge(self, u: int, t: int) -> int:
        lo, hi = self.mdp.indptr[u], self.mdp.indptr[u + 1]
        hit = np.flatnonzero(self.mdp.succ[lo:hi] == t)
        if not len(hit):
            raise ValueError(f"no edge {u} -> {t}")
        return int(lo + hit[0])


def _split_alphabet(a: SpecAutomaton, b: SpecAutomaton, inputs: Alphabet):
    joint_vars = set(a.alphabet.variables)
    if set(b.alphabet.variables) != joint_vars:
        raise AlphabetError("qualitative and quantitative automata use different variables")
    if not set(inputs.variables) <= joint_vars:
        raise AlphabetError("input variables missing from the specification alphabet")
    outputs = Alphabet(tuple(v for v in a.alphabet.variables if v not in inputs.variables))
    return outputs, Alphabet(inputs.variables + outputs.variables)


def input_futures(env: MDP):
    """Label-respecting bisimulation blocks of the input chain and, per state,
    the id of its distribution over blocks."""
    block = np.unique(env.label, return_inverse=True)[1]
    while True:
        sigs = {}
        new = np.empty(env.n, dtype=np.int64)
        for s in range(env.n):
            t, p = env.distribution(s)
            dist = {}
            for tt, pp in zip(block[t].tolist(), p.tolist()):
                dist[tt] = dist.get(tt, 0.0) + pp
            key = (int(block[s]), tuple(sorted((k, round(v, 12)) for k, v in dist.items())))
            new[s] = sigs.setdefault(key, len(sigs))
        if len(sigs) == len(np.unique(block)):
            block = new
            break
        block = new
    futures = {}
    future = np.empty(env.n, dtype=np.int64)
    for s in range(env.n):
        t, p = env.distribution(s)
        dist = {}
        for tt, pp in zip(block[t].tolist(), p.tolist()):
            dist[tt] = dist.get(tt, 0.0) + pp
        key = tuple(sorted((k, round(v, 12)) for k, v in dist.items()))
        future[s] = futures.setdefault(key, len(futures))
    return block, future


def build_synthesis_mdp(a: SpecAutomaton, b: SpecAutomaton, env: MDP, inputs: Alphabet,
                        prune: bool = True) -> SynthesisMDP:
    """MDP whose pure strategies are the Mealy machines over ``inputs``.

    Rewards sit on probabilistic states (state-reward form of ``a x b``);
    one machine step is two MDP steps.  With ``prune`` the MDP is cut down to
    the almost-sure winning states reachable from the initial state (when
    the initial state is winning).
    """
    outputs, joint = _split_alphabet(a, b, inputs)
    check_env(env, inputs.size)
    ab = product_spec(a.lift(joint), b.lift(joint))
    spec, state_reward = state_reward_form(ab)
    block, future = input_futures(env)
    prio = np.zeros(spec.n_states, np.int64) if spec.priority is None else np.array(spec.priority)
    emb_i, emb_o = joint.embedding(inputs), joint.embedding(outputs)
    letter = emb_i[:, None] | emb_o[None, :]               # (input, output) -> joint letter
    rows = spec.delta[:, letter]                            # (q, input, output) -> q'
    # per future: the (input letter, successor future, probability) triples
    fut_moves = {}
    for s in range(env.n):
        f = int(future[s])
        if f in fut_moves:
            continue
        t, p = env.distribution(s)
        fut_moves[f] = [(int(env.label[tt]), int(future[tt]), float(pp)) for tt, pp in zip(t, p)]

    keys, index = [], {}
    player1, edges, in_rows, outs = [], [], [], []

    def node(key, is_p1):
        if key not in index:
            index[key] = len(keys)
            keys.append(key)
            player1.append(is_p1)
        return index[key]

    node(("p", spec.initial, int(future[env.initial])), False)
    i = 0
    while i < len(keys):
        key = keys[i]
        if key[0] == "p":
            _, q, f = key
            row_in = np.full(inputs.size, -1, dtype=np.int64)
            dist = {}
            for sigma, f2, pp in fut_moves[f]:
                u = node(("u", q, rows[q, sigma].tobytes(), f2), True)
                row_in[sigma] = u
                dist[u] = dist.get(u, 0.0) + pp
            edges.append(sorted(dist.items()))
            in_rows.append(row_in)
            outs.append([-1] * len(dist))
        else:
            _, q, row, f2 = key
            succ = np.frombuffer(row, dtype=np.int64)
            seen = {}
            for o, q2 in enumerate(succ.tolist()):
                seen.setdefault(q2, o)
            targets = sorted((node(("p", q2, f2), False), o) for q2, o in seen.items())
            edges.append([t for t, _ in targets])
            in_rows.append(np.full(inputs.size, -1, dtype=np.int64))
            outs.append([o for _, o in targets])
        i += 1
    spec_state = np.array([k[1] for k in keys], dtype=np.int64)
    reward = np.where(player1, 0.0, np.array([float(state_reward[q]) for q in spec_state]))
    names = tuple(_node_name(k, spec, inputs) for k in keys)
    g = MDP.from_lists(np.array(player1), edges, 0, reward, prio[spec_state], names=names)
    smdp = SynthesisMDP(g, inputs, outputs, spec, np.array(in_rows),
                        np.concatenate([np.asarray(o, np.int64) for o in outs]), spec_state)
    if prune:
        win = mpp.almost_sure_parity_states(g)
        if win[g.initial]:
            smdp = subset(smdp, win)
    return smdp


def _node_name(key, spec, inputs):
    if key[0] == "p":
        return ("p", spec.names[key[1]], key[2])
    return ("u", spec.names[key[1]], key[3])


def product_size(a: SpecAutomaton, b: SpecAutomaton, inputs: Alphabet) -> int:
    """Reachable states of ``a x b``, not counting rejecting safety sinks."""
    _, joint = _split_alphabet(a, b, inputs)
    ab = product_spec(a.lift(joint), b.lift(joint))
    reach = _reachable_states(ab)
    if a.is_safety:
        reach = [q for q in reach if ab.priority[q] == 0]
    return len(reach)


def subset(smdp: SynthesisMDP, keep) -> SynthesisMDP:
    """Restrict to ``keep`` and then to the part reachable from the initial state."""
    g = smdp.mdp
    keep = np.asarray(keep, bool).copy()
    sub, index = restrict(g, keep)
    keep2 = np.zeros(g.n, bool)
    keep2[index[reachable(sub, [sub.initial])]] = True
    sub, index = restrict(g, keep2)
    local = np.full(g.n, -1, dtype=np.int64)
    local[index] = np.arange(len(index))
    in_succ = smdp.in_succ[index]
    in_succ = np.where(in_succ >= 0, local[np.maximum(in_succ, 0)], -1)
    edge_out = []
    for s in index:
        lo, hi = g.indptr[s], g.indptr[s + 1]
        for e in range(lo, hi):
            if keep2[g.succ[e]]:
                edge_out.append(smdp.edge_output[e])
    return SynthesisMDP(sub, smdp.inputs, smdp.outputs, smdp.spec, in_succ,
                        np.array(edge_out, dtype=np.int64), smdp.spec_state[index])


# --------------------------------------------------------------------------
# machines from strategies


def extract_mealy_memoryless(smdp: SynthesisMDP, pi: dict, states: str = "reachable") -> MealyMachine:
    """Mealy machine of a memoryless strategy.

    Machine states are probabilistic MDP states: those reachable under ``pi``
    (``states="reachable"``) or all of them (``"all"``, which keeps the state
    numbering shared between strategies on the same MDP).
    """
    g = smdp.mdp
    prob_states = np.flatnonzero(~g.player1)
    if states == "all":
        order = prob_states.tolist()
    else:
        order, seen = [int(g.initial)], {int(g.initial)}
        i = 0
        while i < len(order):
            s = order[i]
            for sigma in range(smdp.inputs.size):
                u = int(smdp.in_succ[s, sigma])
                if u not in pi:
                    raise ValueError(f"strategy undefined at reachable player-1 state {g.names[u]}")
                t = int(pi[u])
                if t not in seen:
                    seen.add(t)
                    order.append(t)
            i += 1
    pos = {s: k for k, s in enumerate(order)}
    L = smdp.inputs.size
    delta = np.zeros((len(order), L), dtype=np.int64)
    out = np.zeros((len(order), L), dtype=np.int64)
    for k, s in enumerate(order):
        for sigma in range(L):
            u = int(smdp.in_succ[s, sigma])
            if u < 0 or u not in pi:
                raise ValueError(f"strategy undefined at player-1 state {g.names[u]}")
            t = int(pi[u])
            delta[k, sigma] = pos[t]
            out[k, sigma] = smdp.edge_output[smdp.edge(u, t)]
    init = pos[int(g.initial)]
    names = tuple(_machine_state_name(g.names[s]) for s in order)
    return MealyMachine(smdp.inputs, smdp.outputs, delta, out, init, names)


def _machine_state_name(name):
    _, q, f = name
    q = q if isinstance(q, str) else "_".join(_flat(q))
    return f"{q}|{f}"


def _flat(x):
    if isinstance(x, tuple):
        for y in x:
            yield from _flat(y)
    else:
        yield str(x)


def combine_with_counter(m_reach: MealyMachine, m_gain: MealyMachine,
                         schedule: mpp.FixedSchedule) -> MealyMachine:
    """Play ``m_reach`` for ``n`` steps, then ``m_gain`` for ``l`` steps, repeat.

    Machines with identical state names are taken to share their state
    space (states are the MDP's probabilistic states), so the product keeps
    a single copy of it; otherwise both machines run side by side.
    """
    if m_reach.inputs.variables != m_gain.inputs.variables or \
            m_reach.outputs.variables != m_gain.outputs.variables:
        raise AlphabetError("machines have different interfaces")
    if schedule.n < 1 or schedule.l < 1:
        raise ValueError("schedule lengths must be positive")
    shared = m_reach.names == m_gain.names and m_reach.initial == m_gain.initial
    P = schedule.period
    L = m_reach.inputs.size
    start = (m_reach.initial, m_reach.initial if shared else m_gain.initial, 0)
    index, order = {start: 0}, [start]
    delta_rows, out_rows = [], []
    i = 0
    while i < len(order):
        x, y, c = order[i]
        active = m_reach if c < schedule.n else m_gain
        state = x if (shared or c < schedule.n) else y
        drow, orow = [], []
        for sigma in range(L):
            o = int(active.out[state, sigma])
            if shared:
                nx = int(active.delta[x, sigma])
                key = (nx, nx, (c + 1) % P)
            else:
                key = (int(m_reach.delta[x, sigma]), int(m_gain.delta[y, sigma]), (c + 1) % P)
            if key not in index:
                index[key] = len(order)
                order.append(key)
            drow.append(index[key])
            orow.append(o)
        delta_rows.append(drow)
        out_rows.append(orow)
        i += 1
    if shared:
        names = tuple(f"{m_reach.names[x]}#{c}" for x, _, c in order)
    else:
        names = tuple(f"{m_reach.names[x]}/{m_gain.names[y]}#{c}" for x, y, c in order)
    return MealyMachine(m_reach.inputs, m_reach.outputs, np.array(delta_rows),
                        np.array(out_rows), 0, names)


# --------------------------------------------------------------------------
# results


@dataclass
class SynthesisResult:
    stats: dict = field(default_factory=dict, kw_only=True)


@dataclass
class Unrealizable(SynthesisResult):
    reason: str
    value: object = BOTTOM
    machine = None


@dataclass
class OptimalMemoryless(SynthesisResult):
    machine: MealyMachine
    value: float
    optimum: float


@dataclass
class EpsilonOptimal(SynthesisResult):
    machine: MealyMachine
    value: float
    epsilon: float
    optimum: float
    schedule: mpp.FixedSchedule


@dataclass
class InfiniteMemoryRequired(SynthesisResult):
    plan: mpp.CounterPlan
    optimum: float
    machine = None


def synthesize(a: SpecAutomaton, b: SpecAutomaton, env: MDP, inputs: Alphabet,
               mode: str = "exact", epsilon: float | None = None, cancel=None,
               verify: bool = True) -> SynthesisResult:
    """Machine satisfying ``a`` almost surely with optimal (or ``epsilon``-optimal)
    expected mean payoff of ``b`` under the input chain ``env``."""
    if mode not in ("exact", "epsilon"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "epsilon" and not (epsilon is not None and epsilon > 0):
        raise ValueError("epsilon mode needs a positive epsilon")

    def checkpoint():
        if cancel is not None and cancel():
            raise Cancelled("synthesis cancelled")

    t0 = time.perf_counter()
    smdp = build_synthesis_mdp(a, b, env, inputs)
    g = smdp.mdp
    stats = {"spec_states": product_size(a, b, inputs), "mdp_states": g.n}
    checkpoint()
    safety = a.is_safety
    sol = mpp.mpp_value(g)
    stats["seconds_value"] = time.perf_counter() - t0
    if not sol.win[g.initial]:
        reason = "safety specification cannot be kept with probability 1" if safety \
            else "parity objective cannot be won almost surely from the initial state"
        stats["seconds"] = time.perf_counter() - t0
        return Unrealizable(reason, stats=stats)
    optimum = 2.0 * float(sol.values[g.initial])
    checkpoint()
    flag, strat, _ = mpp.has_optimal_memoryless(g, sol=sol)
    if safety and not flag:
        raise NumericError("safety instance without a memoryless optimum")
    checkpoint()
    if flag:
        m = extract_mealy_memoryless(smdp, strat)
        value = _verify(m, a, b, env, optimum) if verify else optimum
        stats.update(machine_states=m.n_states, seconds=time.perf_counter() - t0)
        return OptimalMemoryless(m, value, optimum, stats=stats)
    if mode == "exact":
        plan = mpp.counter_plan(sol, None)
        stats["seconds"] = time.perf_counter() - t0
        return InfiniteMemoryRequired(plan, optimum, stats=stats)
    # MDP mean payoff is per MDP step; a machine step is two of them
    plan = mpp.counter_plan(sol, epsilon / 2.0, count_at="player1")
    m_reach = extract_mealy_memoryless(smdp, plan.sigma_s, states="all")
    m_gain = extract_mealy_memoryless(smdp, plan.sigma_m, states="all")
    m = combine_with_counter(m_reach, m_gain, plan.schedule)
    checkpoint()
    value = _verify(m, a, b, env, 2.0 * plan.value) if verify else 2.0 * plan.value
    if value < optimum - epsilon - ROUNDTRIP_TOL:
        raise NumericError(f"counter machine value {value} below {optimum} - {epsilon}")
    stats.update(machine_states=m.n_states, seconds=time.perf_counter() - t0)
    return EpsilonOptimal(m, value, epsilon, optimum, plan.schedule, stats=stats)


def _verify(m, a, b, env, expected):
    """Measure the machine; it must satisfy ``a`` and reproduce ``expected``."""
    value = system_value(m, a, b, env)
    if is_bottom(value) or not satisfies_under_mu(m, a, env):
        raise NumericError("synthesized machine violates the qualitative specification")
    if abs(value - expected) > ROUNDTRIP_TOL * max(1.0, abs(expected)):
        raise NumericError(f"measured value {value} differs from strategy value {expected}")
    return float(value)
