"""Value of a Mealy machine against a qualitative and a quantitative
specification under a labeled Markov chain describing the inputs."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .automata import AlphabetError, MealyMachine, SpecAutomaton
from .stochastic import MDP, ModelError, longrun_frequencies, mc_mean_payoff, mc_parity_almost_sure, \
    validate_labeled_chain
from .values import BOTTOM

MAX_PREFIX_HORIZON = 100_000


def _align(x: SpecAutomaton | None, m: MealyMachine):
    if x is None:
        return None
    joint = m.joint
    if set(x.alphabet.variables) != set(joint.variables):
        raise AlphabetError(
            f"automaton over {x.alphabet.variables} but machine interface is {joint.variables}")
    return x if x.alphabet.variables == joint.variables else x.lift(joint)


def check_env(env: MDP, n_letters: int):
    if env.label is None:
        raise ModelError("input chain has no labels")
    problems = validate_labeled_chain(env, n_letters)
    if problems:
        raise ModelError("; ".join(problems))


def build_value_chain(m: MealyMachine, a: SpecAutomaton | None, b: SpecAutomaton | None,
                      env: MDP, check: bool = True) -> MDP:
    """Chain over ``(machine, a, b) x env-state x phase``.

    Phase 0 draws the next input from ``env``; phase 1 applies the machine's
    output, collects ``b``'s transition reward and advances the automata.
    Priorities come from ``a``.  For a safety ``a`` the reward of a
    priority-1 state is undefined (nan).  Names are
    ``(machine, a, b, env, phase)`` tuples; a missing automaton contributes
    ``None``.
    """
    a, b = _align(a, m), _align(b, m)
    if check:
        check_env(env, m.inputs.size)
    joint = m.joint_letters()
    rew_b = b.reward_array() if b is not None else None
    safety = a is not None and a.is_safety
    start = (m.initial, a.initial if a else 0, b.initial if b else 0, env.initial, 0)
    index = {start: 0}
    order = [start]
    edges, reward, prio = [], [], []
    i = 0
    while i < len(order):
        ms, qa, qb, e, phase = order[i]
        p = a.priority[qa] if a is not None else 0
        if phase == 0:
            t, pr = env.distribution(e)
            succ = [((ms, qa, qb, int(tt), 1), float(pp)) for tt, pp in zip(t, pr)]
            r = 0.0
        else:
            sigma = int(env.label[e])
            letter = int(joint[ms, sigma])
            nxt = (int(m.delta[ms, sigma]),
                   int(a.delta[qa, letter]) if a else 0,
                   int(b.delta[qb, letter]) if b else 0, e, 0)
            succ = [(nxt, 1.0)]
            r = float(rew_b[qb, letter]) if b is not None else 0.0
        if safety and p == 1:
            r = np.nan
        row = []
        for key, pp in succ:
            if key not in index:
                index[key] = len(order)
                order.append(key)
            row.append((index[key], pp))
        edges.append(row)
        reward.append(r)
        prio.append(p)
        i += 1
    names = tuple((m.names[ms], a.names[qa] if a else None, b.names[qb] if b else None,
                   env.names[e] if env.names else e, ph) for ms, qa, qb, e, ph in order)
    return MDP.from_lists(np.zeros(len(order), bool), edges, 0, np.array(reward),
                          np.array(prio), names=names)


def system_value(m: MealyMachine, a: SpecAutomaton, b: SpecAutomaton, env: MDP,
                 split: bool = False):
    """Expected mean payoff of the machine, or BOTTOM if ``a`` is not satisfied
    almost surely.  ``split`` analyses parity and reward on separate chains."""
    if split:
        if a is not None and not satisfies_under_mu(m, a, env):
            return BOTTOM
        v = mc_mean_payoff(build_value_chain(m, None, b, env))
        return 2.0 * v
    mc = build_value_chain(m, a, b, env)
    if a is not None and not a.is_safety and not mc_parity_almost_sure(mc):
        return BOTTOM
    v = mc_mean_payoff(mc)
    return v if v is BOTTOM else 2.0 * v


def satisfies_under_mu(m: MealyMachine, a: SpecAutomaton, env: MDP) -> bool:
    """True iff the machine satisfies ``a`` with probability 1."""
    return mc_parity_almost_sure(build_value_chain(m, a, None, env))


def main_state_frequencies(m: MealyMachine, a: SpecAutomaton | None, b: SpecAutomaton | None,
                           env: MDP) -> dict:
    """Long-run frequency of each ``(machine, a, b)`` state, summed over
    input-chain states and normalised over the phase-0 copies."""
    mc = build_value_chain(m, a, b, env)
    freq = longrun_frequencies(mc, 0)
    out: dict = {}
    for name, f in zip(mc.names, freq):
        if name[4] == 0:
            key = name[:3]
            out[key] = out.get(key, 0.0) + 2.0 * f
    return out


def uniform_prefix_value(m: MealyMachine, b: SpecAutomaton, horizon: int) -> Fraction:
    """Average of the finite mean payoff over all input words of length ``horizon``.

    Dynamic programming over the distribution of ``(machine, b)`` states
    under uniformly drawn inputs; exact rational arithmetic.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if horizon > MAX_PREFIX_HORIZON:
        raise ValueError(f"horizon {horizon} exceeds {MAX_PREFIX_HORIZON}")
    b = _align(b, m)
    joint = m.joint_letters()
    L = m.inputs.size
    w = Fraction(1, L)
    dist = {(m.initial, b.initial): Fraction(1)}
    total = Fraction(0)
    for _ in range(horizon):
        nxt: dict = {}
        for (ms, qb), p in dist.items():
            for sigma in range(L):
                letter = int(joint[ms, sigma])
                total += p * w * b.reward_values[b.reward_index[qb, letter]]
                key = (int(m.delta[ms, sigma]), int(b.delta[qb, letter]))
                nxt[key] = nxt.get(key, 0) + p * w
        dist = nxt
    return total / horizon


def iid_input_chain(probs, names=None) -> MDP:
    """One state per input letter; every state draws the next letter with
    independent per-variable probabilities ``probs``.  State 0 (empty letter)
    is initial."""
    probs = [Fraction(p) if not isinstance(p, float) else p for p in probs]
    k = len(probs)
    L = 1 << k
    dist = []
    for letter in range(L):
        q = 1
        for i, p in enumerate(probs):
            q *= p if letter >> i & 1 else 1 - p
        dist.append(float(q))
    edges = [list(zip(range(L), dist)) for _ in range(L)]
    return MDP.from_lists(np.zeros(L, bool), edges, 0, label=np.arange(L), names=names)
