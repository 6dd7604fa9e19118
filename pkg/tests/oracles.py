"""Brute-force reference implementations shared by the test modules."""

import itertools

import numpy as np

from mpsynth.lp import LinearProgram
from mpsynth.stochastic import (
    MDP, fix_strategy, is_end_component, mc_gain_vector, mc_parity_vector, recurrence_classes,
)


def random_mdp(rng, n, p1_frac=0.5, max_pri=4, neg=False):
    player1 = rng.random(n) < p1_frac
    edges = []
    for s in range(n):
        k = int(rng.integers(1, 4))
        ts = rng.choice(n, size=min(k, n), replace=False).tolist()
        if player1[s]:
            edges.append(ts)
        else:
            w = rng.integers(1, 4, len(ts)).astype(float)
            edges.append(list(zip(ts, (w / w.sum()).tolist())))
    lo = -3 if neg else 0
    return MDP.from_lists(player1, edges, 0, rng.integers(lo, 6, n).astype(float),
                          rng.integers(0, max_pri, n))


def all_strategies(g, states=None):
    p1 = [s for s in np.flatnonzero(g.player1) if states is None or s in states]
    choices = [[int(t) for t in g.successors(s) if states is None or t in states] for s in p1]
    for combo in itertools.product(*choices):
        yield dict(zip(p1, combo))


def full(g, pi):
    out = {int(s): int(g.successors(s)[0]) for s in np.flatnonzero(g.player1)}
    out.update(pi)
    return out


def oracle_mp_values(g):
    best = np.full(g.n, -np.inf)
    for pi in all_strategies(g):
        best = np.maximum(best, mc_gain_vector(fix_strategy(g, pi)))
    return best


def ec_mean_payoff(g, c):
    sub = [s for s in range(g.n) if s in c]
    best = -np.inf
    for pi in all_strategies(g, set(sub)):
        mc = fix_strategy(g, full(g, pi))
        gain = mc_gain_vector(mc)
        _, classes = recurrence_classes(mc)
        for cl in classes:
            if set(cl.tolist()) <= c:
                best = max(best, gain[cl[0]])
    return best


def oracle_mpp(g):
    """Good ECs by subset enumeration, almost-sure reach by strategy
    enumeration, max objective by value iteration."""
    n = g.n
    goods = []
    for k in range(1, n + 1):
        for sub in itertools.combinations(range(n), k):
            if is_end_component(g, list(sub)) and g.priority[list(sub)].min() % 2 == 0:
                goods.append(frozenset(sub))
    target = set().union(*goods) if goods else set()
    win = np.zeros(n, bool)
    if target:
        for pi in all_strategies(g):
            mc = fix_strategy(g, pi)
            adj = [set(mc.successors(s).tolist()) for s in range(n)]
            can = set(target)
            changed = True
            while changed:
                changed = False
                for s in range(n):
                    if s not in can and adj[s] & can:
                        can.add(s)
                        changed = True
            for s in range(n):
                seen, todo, ok = set(), [s], True
                while todo:
                    u = todo.pop()
                    if u in seen or u in target:
                        continue
                    seen.add(u)
                    if u not in can:
                        ok = False
                        break
                    todo.extend(adj[u])
                win[s] |= ok
    vals = np.full(n, np.nan)
    if not win.any():
        return vals, win
    F = np.full(n, -np.inf)
    for c in goods:
        if all(win[s] for s in c):
            v = ec_mean_payoff(g, c)
            for s in c:
                F[s] = max(F[s], v)
    shift = 100.0
    x = np.zeros(n)
    for _ in range(20000):
        new = np.zeros(n)
        for s in np.flatnonzero(win):
            t, p = g.distribution(s)
            keep = win[t]
            if g.player1[s]:
                cont = max(x[tt] for tt in t[keep])
            else:
                cont = float(np.dot(p, x[t]))
            new[s] = max(cont, F[s] + shift if np.isfinite(F[s]) else 0.0)
        if np.abs(new - x).max() < 1e-12:
            break
        x = new
    vals[win] = x[win] - shift
    return vals, win


def random_single_ec(rng, n, max_pri=3, max_reward=5):
    """Strongly connected, closed MDP (a single end component) whose minimum
    priority is even."""
    player1 = rng.random(n) < 0.5
    order = rng.permutation(n)
    nxt = {int(order[i]): int(order[(i + 1) % n]) for i in range(n)}
    edges = []
    for s in range(n):
        ts = {nxt[s]} | set(rng.choice(n, size=int(rng.integers(0, 3)), replace=True).tolist())
        ts = sorted(ts)
        if player1[s]:
            edges.append(ts)
        else:
            w = rng.integers(1, 4, len(ts)).astype(float)
            edges.append(list(zip(ts, (w / w.sum()).tolist())))
    pri = rng.integers(0, max_pri, n)
    pri[int(rng.integers(n))] = 0
    pri = pri - pri.min()
    return MDP.from_lists(player1, edges, 0, rng.integers(0, max_reward + 1, n).astype(float), pri)


def memoryless_optimum(g, v, tol=1e-6):
    """Whether some pure memoryless strategy wins parity almost surely from the
    initial state with mean payoff ``v``."""
    for pi in all_strategies(g):
        mc = fix_strategy(g, pi)
        if mc_parity_vector(mc)[g.initial] and abs(mc_gain_vector(mc)[g.initial] - v) < tol:
            return True
    return False


def client_oracle(probs, k=None, iters=3000):
    """Optimal average reward of the client benchmark by relative value
    iteration on (pending age per client); ``k`` bounds the age at ``k - 1``.
    Reward per client is 1 unless a request is open and not granted."""
    n = len(probs)
    ages = range(k) if k else range(2)
    states = list(itertools.product(ages, repeat=n))
    reqs = [(req, float(np.prod([p if r else 1 - p for p, r in zip(probs, req)])))
            for req in itertools.product([0, 1], repeat=n)]

    def step(s, req, g):
        rew, nxt = 0, []
        for i in range(n):
            if g == i or not (s[i] > 0 or req[i]):
                rew += 1
                nxt.append(0)
            else:
                nxt.append(s[i] + 1 if k else 1)
        return rew, tuple(nxt)

    V = {s: 0.0 for s in states}
    gain = 0.0
    for _ in range(iters):
        new = {}
        for s in states:
            tot = 0.0
            for req, pr in reqs:
                best = -np.inf
                for g in [None] + list(range(n)):
                    rew, nx = step(s, req, g)
                    if k and max(nx) > k - 1:
                        continue
                    best = max(best, rew + V[nx])
                tot += pr * best
            new[s] = tot
        s0 = states[0]
        gain = new[s0] - V[s0]
        V = {s: new[s] - new[s0] for s in states}
    return gain


def random_lp(rng, n=None, m=None):
    """max c.x over mixed rows with a known feasible point; x >= 0."""
    n = n or int(rng.integers(2, 7))
    m = m or int(rng.integers(1, 7))
    lp = LinearProgram()
    xs = lp.add_variables(n)
    x0 = rng.integers(0, 4, n).astype(float)
    for _ in range(m):
        a = rng.integers(-5, 6, n).astype(float)
        op = rng.choice(["<=", ">=", "=="], p=[0.6, 0.25, 0.15])
        slack = float(rng.integers(0, 3))
        rhs = a @ x0 + (slack if op == "<=" else -slack if op == ">=" else 0.0)
        lp.add_constraint(dict(zip(xs.tolist(), a)), op, rhs)
    if rng.random() < 0.7:
        lp.add_constraint({int(j): 1.0 for j in xs}, "<=", float(x0.sum() + 5))
    lp.set_objective(dict(zip(xs.tolist(), rng.integers(-4, 6, n).astype(float))), "max")
    return lp


def certificate_ok(lp, res, tol=1e-8):
    """Weak duality for max c.x, rows, x >= 0; duals as shadow prices."""
    c, A, ops, b = lp.dense()
    y = res.duals
    for yi, op in zip(y, ops):
        if op == "<=" and yi < -tol:
            return False
        if op == ">=" and yi > tol:
            return False
    if (A.T @ y < c - tol * (1 + np.abs(c))).any():
        return False
    return b @ y >= c @ res.x - tol * (1 + abs(c @ res.x))
