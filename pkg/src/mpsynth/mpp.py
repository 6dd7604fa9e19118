"""Mean-payoff and mean-payoff parity MDPs.

Pipeline for the mean-payoff parity value: almost-sure parity set ``W`` ->
restrict to ``W`` -> shift rewards to be positive -> best end-component
values ``f*`` -> max conversion -> least solution of the max-objective LP.
Plain mean payoff is the special case with every priority 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import dijkstra

from . import lp as lpmod
from .stochastic import (
    MDP, ModelError, almost_sure_reach, bias_vector, expected_hitting_times, fix_strategy,
    mc_gain_vector, mc_parity_vector, mec_decomposition, recurrence_classes, restrict,
    stationary_distribution,
)
from .values import BOTTOM

VALUE_TOL = 1e-7
FREQ_TOL = 1e-9

# with backend "auto", LPs whose dense tableau exceeds this many cells go to HiGHS
AUTO_DENSE_LIMIT = 60_000
LP_BACKEND = "auto"


class SolverError(RuntimeError):
    """An LP or construction step failed in a way that indicates a bug."""


def _solve(lp: lpmod.LinearProgram) -> lpmod.LPResult:
    backend = LP_BACKEND
    if backend == "auto":
        cells = (len(lp.rows) + 1) * (lp.n_vars + 2 * len(lp.rows) + 1)
        backend = "simplex" if cells <= AUTO_DENSE_LIMIT else "highs"
    if backend == "highs":
        return lpmod.solve_lp_highs(lp)
    return lpmod.solve_lp(lp, rule="dantzig")


def _priorities(g: MDP, priority):
    if priority is not None:
        return np.asarray(priority, dtype=np.int64)
    if g.priority is None:
        return np.zeros(g.n, dtype=np.int64)
    return g.priority


def _rewards(g: MDP, reward):
    r = g.reward if reward is None else np.asarray(reward, float)
    if r is None:
        raise ModelError("MDP has no rewards")
    if np.isnan(r).any():
        raise ModelError("undefined reward in a mean-payoff MDP")
    return r


# --------------------------------------------------------------------------
# qualitative part


def good_components(g: MDP, priority=None, within=None):
    """``(d, states)`` for every even ``d`` and every MEC of the sub-MDP on
    priorities ``>= d`` that contains a priority-``d`` state."""
    p = _priorities(g, priority)
    base = np.ones(g.n, bool) if within is None else within
    out = []
    for d in sorted(set(p[base].tolist())):
        if d % 2:
            continue
        for mec in mec_decomposition(g, base & (p >= d)):
            if (p[mec] == d).any():
                out.append((d, mec))
    return out


def almost_sure_parity_states(g: MDP, priority=None) -> np.ndarray:
    """Mask of states winning the parity objective with probability 1."""
    comps = good_components(g, priority)
    target = np.zeros(g.n, bool)
    for _, c in comps:
        target[c] = True
    if not target.any():
        return target
    return almost_sure_reach(g, target)


# --------------------------------------------------------------------------
# strategies inside sub-MDPs


def shortest_path_strategy(g: MDP, target, within=None) -> dict:
    """Memoryless strategy minimizing the expected time to reach ``target``.

    Policy iteration started from a breadth-first proper strategy.  Every state
    of ``within`` must reach ``target`` almost surely.
    """
    inside = np.ones(g.n, bool) if within is None else _as_mask(g.n, within)
    tgt = _as_mask(g.n, target) & inside
    if not tgt.any():
        raise ModelError("empty target")
    if not (almost_sure_reach(g, tgt, inside) >= inside).all():
        raise ModelError("target is not reached almost surely")
    rank = _bfs_rank(g, tgt, inside)
    strat = {}
    for s in np.flatnonzero(g.player1 & inside):
        succ = [int(t) for t in g.successors(s) if inside[t]]
        strat[int(s)] = min(succ, key=lambda t: (rank[t], t))
    while True:
        h = _hitting_under(g, strat, tgt, inside)
        changed = False
        for s in np.flatnonzero(g.player1 & inside & ~tgt):
            cur = strat[int(s)]
            succ = [int(t) for t in g.successors(s) if inside[t]]
            best = min(succ, key=lambda t: (h[t], t))
            if h[best] < h[cur] - 1e-9:
                strat[int(s)] = best
                changed = True
        if not changed:
            return strat


def _as_mask(n, states) -> np.ndarray:
    a = np.asarray(states)
    if a.dtype == bool:
        return a.copy()
    m = np.zeros(n, bool)
    m[a.astype(np.int64)] = True
    return m


def _bfs_rank(g: MDP, target, inside, edge_ok=None) -> np.ndarray:
    """Graph distance to ``target`` along edges inside ``inside``."""
    src = g.src
    ok = inside[src] & inside[g.succ]
    if edge_ok is not None:
        ok &= edge_ok
    adj = g.graph(ok).T.tocsr()
    tg = np.flatnonzero(target)
    dist = dijkstra(adj, directed=True, indices=tg, unweighted=True, min_only=True)
    return np.where(np.isfinite(dist), dist, np.inf)


def _hitting_under(g, strat, target, inside):
    sub, index = restrict(g, inside)
    local = {int(s): i for i, s in enumerate(index)}
    mc = fix_strategy(sub, {local[s]: local[t] for s, t in strat.items() if s in local})
    h = expected_hitting_times(mc, np.flatnonzero(target[index]))
    out = np.full(g.n, np.inf)
    out[index] = h
    return out


def _frequency_lp(sub: MDP, reward, allowed=None, stage_b=None):
    """State-action frequency LP on a closed sub-MDP.

    ``allowed`` masks states that may carry frequency.  With ``stage_b =
    (bound, bonus_mask)`` the mean payoff is constrained to ``>= bound`` and
    the frequency of ``bonus_mask`` states is maximized instead.
    Returns ``(result, actions)`` with ``actions[k] = (state, successor or -1)``.
    """
    n = sub.n
    allowed = np.ones(n, bool) if allowed is None else allowed
    prog = lpmod.LinearProgram()
    actions = []
    inflow = [[] for _ in range(n)]
    outflow = [[] for _ in range(n)]
    for s in np.flatnonzero(allowed):
        s = int(s)
        if sub.player1[s]:
            for t in sub.successors(s):
                t = int(t)
                if allowed[t]:
                    k = prog.add_variable(f"x_{s}_{t}")
                    actions.append((s, t))
                    outflow[s].append(k)
                    inflow[t].append((k, 1.0))
        else:
            t, p = sub.distribution(s)
            if allowed[t].all():
                k = prog.add_variable(f"x_{s}")
                actions.append((s, -1))
                outflow[s].append(k)
                for tt, pp in zip(t, p):
                    inflow[int(tt)].append((k, float(pp)))
    if not actions:
        return lpmod.LPResult("infeasible"), actions
    for s in np.flatnonzero(allowed):
        coeffs = {}
        for k in outflow[s]:
            coeffs[k] = coeffs.get(k, 0.0) + 1.0
        for k, p in inflow[s]:
            coeffs[k] = coeffs.get(k, 0.0) - p
        if coeffs:
            prog.add_constraint(coeffs, "==", 0.0, name=f"flow_{s}")
    allk = {k: 1.0 for k in range(len(actions))}
    prog.add_constraint(allk, "==", 1.0, name="total")
    gain = {k: float(reward[s]) for k, (s, _) in enumerate(actions) if reward[s] != 0}
    if stage_b is None:
        prog.set_objective(gain, "max")
    else:
        bound, bonus = stage_b
        prog.add_constraint(gain, ">=", bound, name="stageA")
        prog.set_objective({k: 1.0 for k, (s, _) in enumerate(actions) if bonus[s]}, "max")
    return _solve(prog), actions


def _support_strategy(sub: MDP, actions, x, keep_class=None):
    """Memoryless strategy on ``sub`` from a frequency solution.

    Support states play their heaviest action; recurrent classes of the
    support accepted by ``keep_class(members, frequencies)`` become the
    target that every other state reaches by a shortest-path strategy.
    ``frequencies`` is the stationary distribution of the class under the
    extracted strategy, not the LP solution.
    """
    freq = np.zeros(sub.n)
    best = {}
    for k, (s, t) in enumerate(actions):
        freq[s] += x[k]
        if t < 0:
            continue
        if s not in best or x[k] > best[s][0] + FREQ_TOL or \
                (abs(x[k] - best[s][0]) <= FREQ_TOL and t < best[s][1]):
            best[s] = (x[k], t)
    # close the support under successors: LP solvers may leave a successor's
    # mass just below the cutoff
    choice = {int(s): int(sub.successors(s)[0]) for s in np.flatnonzero(sub.player1)}
    choice.update({s: t for s, (_, t) in best.items()})
    support = freq > FREQ_TOL
    todo = list(np.flatnonzero(support))
    while todo:
        s = int(todo.pop())
        succ = [choice[s]] if sub.player1[s] else sub.distribution(s)[0].tolist()
        for t in succ:
            if not support[t]:
                support[t] = True
                todo.append(t)
    idx = np.flatnonzero(support)
    local = np.full(sub.n, -1)
    local[idx] = np.arange(len(idx))
    edges = []
    for s in idx:
        if sub.player1[s]:
            edges.append([(int(local[choice[s]]), 1.0)])
        else:
            t, p = sub.distribution(s)
            edges.append(list(zip(local[t].tolist(), p.tolist())))
    chain = MDP.from_lists(np.zeros(len(idx), bool), edges)
    _, classes = recurrence_classes(chain)
    P = chain.matrix().tocsr()
    target = np.zeros(sub.n, bool)
    for c in classes:
        members = idx[c]
        if keep_class is None or keep_class(members, stationary_distribution(P[c][:, c])):
            target[members] = True
    if not target.any():
        return None
    strat = shortest_path_strategy(sub, target)
    for s in np.flatnonzero(target & sub.player1):
        strat[int(s)] = choice[int(s)]
    return strat


def _component_mean_payoff(g: MDP, states, reward):
    """Optimal mean payoff inside an end component and a memoryless witness."""
    sub, index = restrict(g, states)
    res, actions = _frequency_lp(sub, reward[index])
    if not res.optimal:
        raise SolverError(f"frequency LP {res.status} on an end component")
    strat = _support_strategy(sub, actions, res.x)
    return res.objective, {int(index[s]): int(index[t]) for s, t in strat.items()}


def memoryless_check_ec(g: MDP, states=None, priority=None, reward=None, v=None):
    """Memoryless strategy inside the end component ``states`` achieving mean
    payoff ``v`` with even minimum priority on every recurrent class, or None.

    For each even ``d``: stage A maximizes the mean payoff over frequencies
    supported on priorities ``>= d``; if that equals ``v``, stage B maximizes
    the frequency of priority-``d`` states subject to stage-A optimality.
    """
    p = _priorities(g, priority)
    r = _rewards(g, reward)
    states = np.arange(g.n) if states is None else np.asarray(states)
    sub, index = restrict(g, states)
    ps, rs = p[index], r[index]
    if v is None:
        v, _ = _component_mean_payoff(sub, np.arange(sub.n), rs)
    scale = VALUE_TOL * max(1.0, abs(v))
    for d in sorted(set(ps.tolist())):
        if d % 2:
            continue
        allowed = ps >= d
        res_a, _ = _frequency_lp(sub, rs, allowed)
        if not res_a.optimal or res_a.objective < v - scale:
            continue
        res_b, actions = _frequency_lp(sub, rs, allowed, (v - scale, ps == d))
        if not res_b.optimal or res_b.objective <= FREQ_TOL:
            continue
        # classes carrying only slack-sized mass may have a lower payoff
        strat = _support_strategy(
            sub, actions, res_b.x,
            keep_class=lambda m, f, d=d: int(ps[m].min()) == d and
            float(f @ rs[m]) >= v - scale)
        if strat is None:
            continue
        glob = {int(index[s]): int(index[t]) for s, t in strat.items()}
        if _check_witness(sub, strat, ps, rs, v):
            return glob
    return None


def _check_witness(sub, strat, ps, rs, v) -> bool:
    mc = fix_strategy(sub.replace(reward=rs, priority=ps), strat)
    gain = mc_gain_vector(mc)
    par = mc_parity_vector(mc)
    return bool(par.all() and (np.abs(gain - v) <= 1e-6 * max(1.0, abs(v))).all())


# --------------------------------------------------------------------------
# best end-component values


@dataclass
class Component:
    states: np.ndarray
    layer: int
    value: float
    mp_strategy: dict
    witness: dict | None = None
    checked: bool = False


@dataclass
class BestEcResult:
    components: list
    f_star: np.ndarray
    owner: np.ndarray
    keep: np.ndarray | None = None

    @property
    def s_star(self) -> np.ndarray:
        return self.owner >= 0

    def layers(self) -> dict:
        out: dict = {}
        for i, c in enumerate(self.components):
            out.setdefault(c.layer, []).append(i)
        return out

    def filtered(self, keep) -> "BestEcResult":
        """Same components, f* recomputed over those with ``keep[i]`` true."""
        out = _assemble(self.components, len(self.f_star), keep)
        out.keep = np.asarray(keep, bool)
        return out


def _assemble(components, n, keep=None) -> BestEcResult:
    f = np.full(n, -np.inf)
    owner = np.full(n, -1, dtype=np.int64)
    for i, c in enumerate(components):
        if keep is not None and not keep[i]:
            continue
        better = c.value > f[c.states]
        f[c.states[better]] = c.value
        owner[c.states[better]] = i
    f[owner < 0] = np.nan
    return BestEcResult(list(components), f, owner)


def best_ec_values(g: MDP, priority=None, reward=None) -> BestEcResult:
    """Components of every even layer with their optimal mean payoff ``f*``."""
    p = _priorities(g, priority)
    r = _rewards(g, reward)
    comps = []
    for d, states in good_components(g, p):
        val, strat = _component_mean_payoff(g, states, r)
        comps.append(Component(states, d, val, strat))
    return _assemble(comps, g.n)


# --------------------------------------------------------------------------
# max conversion


@dataclass
class MaxConversion:
    mdp: MDP
    reward: np.ndarray
    n_orig: int
    copy_of: np.ndarray
    inner_of: np.ndarray


def max_conversion(g: MDP, best: BestEcResult) -> MaxConversion:
    """Attach an absorbing copy valued ``f*(s)`` to every state of ``S*``.

    Player-1 states get a direct edge to their copy.  A probabilistic state
    of ``S*`` becomes a player-1 gate choosing between its copy and an inner
    probabilistic state that carries the original distribution.
    """
    n = g.n
    star = np.flatnonzero(best.s_star)
    prob_star = star[~g.player1[star]]
    inner_of = np.full(n, -1, dtype=np.int64)
    inner_of[prob_star] = n + np.arange(len(prob_star))
    copy_of = np.full(n, -1, dtype=np.int64)
    copy_of[star] = n + len(prob_star) + np.arange(len(star))
    total = n + len(prob_star) + len(star)
    player1 = np.zeros(total, bool)
    player1[:n] = g.player1
    player1[prob_star] = True
    edges = []
    for s in range(n):
        if inner_of[s] >= 0:
            edges.append([int(inner_of[s]), int(copy_of[s])])
        elif g.player1[s]:
            succ = g.successors(s).tolist()
            if copy_of[s] >= 0:
                succ.append(int(copy_of[s]))
            edges.append(succ)
        else:
            t, p = g.distribution(s)
            edges.append(list(zip(t.tolist(), p.tolist())))
    for s in prob_star:
        t, p = g.distribution(s)
        edges.append(list(zip(t.tolist(), p.tolist())))
    for k in range(len(star)):
        edges.append([(n + len(prob_star) + k, 1.0)])
    rbar = np.zeros(total)
    rbar[copy_of[star]] = best.f_star[star]
    mdp = MDP.from_lists(player1, edges, g.initial, rbar)
    return MaxConversion(mdp, rbar, n, copy_of, inner_of)


def max_lp(conv: MaxConversion) -> lpmod.LinearProgram:
    """Max-objective LP: minimize the sum of ``x`` subject to ``x >= 0``,
    ``x_s >= x_t`` on player-1 edges and ``x_s = sum delta(s)(t) x_t`` on
    probabilistic states.  Copies are constants, so an edge into a copy
    becomes the lower bound ``x_s >= f*``."""
    gb, rbar = conv.mdp, conv.reward
    copies = np.zeros(gb.n, bool)
    copies[conv.copy_of[conv.copy_of >= 0]] = True
    var = np.full(gb.n, -1, dtype=np.int64)
    var[~copies] = np.arange(int((~copies).sum()))
    lb = np.zeros(gb.n)
    for s in np.flatnonzero(gb.player1):
        for t in gb.successors(s):
            if copies[t]:
                lb[s] = max(lb[s], rbar[t])
    prog = lpmod.LinearProgram()
    for s in np.flatnonzero(~copies):
        prog.add_variable(f"x{s}", lb=float(lb[s]))
    for s in np.flatnonzero(~copies):
        if gb.player1[s]:
            for t in gb.successors(s):
                if int(t) != s and not copies[t]:
                    prog.add_constraint({int(var[s]): 1.0, int(var[t]): -1.0}, ">=", 0.0)
        else:
            t, p = gb.distribution(s)
            coeffs = {int(var[s]): 1.0}
            rhs = 0.0
            for tt, pp in zip(t.tolist(), p.tolist()):
                if copies[tt]:
                    rhs += pp * rbar[tt]
                else:
                    coeffs[int(var[tt])] = coeffs.get(int(var[tt]), 0.0) - pp
            prog.add_constraint(coeffs, "==", rhs)
    prog.set_objective({k: 1.0 for k in range(prog.n_vars)}, "min")
    prog.var_of_state = var
    return prog


def solve_max(conv: MaxConversion) -> np.ndarray:
    """Least solution of the max-objective LP (value of the max objective)."""
    prog = max_lp(conv)
    res = _solve(prog)
    if not res.optimal:
        raise SolverError(f"max-objective LP is {res.status}")
    x = conv.reward.copy()
    var = prog.var_of_state
    x[var >= 0] = np.maximum(res.x[var[var >= 0]], 0.0)
    return x


def max_value_iteration(conv: MaxConversion, tol=1e-12, max_iter=1_000_000) -> np.ndarray:
    """Least fixpoint of the max-objective Bellman operator by iteration from 0."""
    gb = conv.mdp
    x = np.zeros(gb.n)
    copies = conv.copy_of[conv.copy_of >= 0]
    x[copies] = conv.reward[copies]
    src = gb.src
    for _ in range(max_iter):
        contrib = np.where(gb.player1[src], x[gb.succ], gb.prob * x[gb.succ])
        new = np.where(gb.player1, -np.inf, 0.0)
        p1 = gb.player1[src]
        np.maximum.at(new, src[p1], contrib[p1])
        np.add.at(new, src[~p1], contrib[~p1])
        new[copies] = conv.reward[copies]
        if np.max(np.abs(new - x)) <= tol:
            return new
        x = new
    return x


# --------------------------------------------------------------------------
# mean-payoff parity value


@dataclass
class MppSolution:
    """Values over the input MDP plus the data needed to extract strategies."""

    values: np.ndarray
    win: np.ndarray
    shift: float
    sub: MDP | None = None
    index: np.ndarray | None = None
    best: BestEcResult | None = None
    conv: MaxConversion | None = None
    x: np.ndarray | None = None
    priority: np.ndarray | None = None
    reward: np.ndarray | None = None
    initial: int = 0

    def value(self, s: int):
        v = self.values[s]
        return BOTTOM if np.isnan(v) else float(v)

    def values_or_bottom(self) -> list:
        return [self.value(s) for s in range(len(self.values))]

    @property
    def initial_value(self):
        return self.value(self.initial)


def mpp_value(g: MDP, priority=None, reward=None) -> MppSolution:
    """Mean-payoff parity value of every state (nan/BOTTOM outside ``W``)."""
    p = _priorities(g, priority)
    r = _rewards(g, reward)
    g = g.replace(priority=p, reward=r)
    win = almost_sure_parity_states(g, p)
    values = np.full(g.n, np.nan)
    if not win.any():
        sol = MppSolution(values, win, 0.0)
        sol.initial = g.initial
        return sol
    sub, index = restrict(g, win, initial=g.initial if win[g.initial] else int(np.flatnonzero(win)[0]))
    rmin = float(sub.reward.min())
    shift = 1.0 - rmin if rmin <= 0 else 0.0
    rs = sub.reward + shift
    sub = sub.replace(reward=rs)
    best = best_ec_values(sub, sub.priority, rs)
    conv = max_conversion(sub, best)
    x = solve_max(conv)
    values[index] = x[:sub.n] - shift
    sol = MppSolution(values, win, shift, sub, index, best, conv, x, sub.priority, rs)
    sol.initial = g.initial
    return sol


def mdp_mean_payoff(g: MDP, reward=None):
    """Optimal expected mean payoff per state and an optimal memoryless strategy."""
    r = _rewards(g, reward)
    sol = mpp_value(g, np.zeros(g.n, dtype=np.int64), r)
    for c in sol.best.components:
        c.witness, c.checked = c.mp_strategy, True
    strat = _extract_memoryless(sol, sol.best, sol.x)
    return sol.values.copy(), strat


# --------------------------------------------------------------------------
# strategy extraction


def _close(a, b):
    return abs(a - b) <= VALUE_TOL * max(1.0, abs(a), abs(b))


def _reach_strategy(sub: MDP, x, target) -> dict:
    """Player-1 choices along value-preserving edges that approach ``target``."""
    src = sub.src
    preserve = np.ones(len(sub.succ), bool)
    p1 = sub.player1[src]
    xs, xt = x[src], x[sub.succ]
    preserve[p1] = np.abs(xt[p1] - xs[p1]) <= VALUE_TOL * np.maximum(1.0, np.abs(xs[p1]))
    rank = _bfs_rank(sub, target, np.ones(sub.n, bool), preserve)
    strat = {}
    for s in np.flatnonzero(sub.player1):
        lo, hi = sub.indptr[s], sub.indptr[s + 1]
        cand = [(rank[t], int(t)) for t, ok in zip(sub.succ[lo:hi], preserve[lo:hi]) if ok]
        if not cand:
            cand = [(rank[t], int(t)) for t in sub.succ[lo:hi]]
        strat[int(s)] = min(cand)[1]
    return strat


def _extract_memoryless(sol: MppSolution, best: BestEcResult, x, gain_side=True) -> dict:
    """Memoryless strategy over the original MDP's player-1 states in ``W``."""
    plan = _component_plan(sol, best, x)
    strat = dict(plan.reach)
    for s, i in plan.assigned.items():
        c = best.components[i]
        src = c.witness if c.witness is not None else (c.mp_strategy if gain_side else None)
        if src is None:
            raise SolverError("component without a memoryless strategy")
        if s in src:
            strat[s] = src[s]
    return {int(sol.index[s]): int(sol.index[t]) for s, t in strat.items()}


@dataclass
class _Plan:
    reach: dict
    assigned: dict


def _component_plan(sol: MppSolution, best: BestEcResult, x) -> _Plan:
    sub = sol.sub
    xs = x[:sub.n]
    assign = np.full(sub.n, -1, dtype=np.int64)
    size = np.full(sub.n, np.inf)
    for i, c in enumerate(best.components):
        if best.keep is not None and not best.keep[i]:
            continue
        for s in c.states:
            if _close(xs[s], c.value) and len(c.states) < size[s]:
                assign[s] = i
                size[s] = len(c.states)
    target = assign >= 0
    if not target.any():
        raise SolverError("no component attains the max-objective value")
    reach = _reach_strategy(sub, xs, target)
    return _Plan(reach, {int(s): int(assign[s]) for s in np.flatnonzero(target)})


def has_optimal_memoryless(g: MDP, priority=None, reward=None, sol: MppSolution | None = None):
    """Whether a pure memoryless strategy attains the optimal value at the
    initial state; returns ``(flag, strategy or None, solution)``."""
    sol = sol or mpp_value(g, priority, reward)
    if sol.sub is None or not sol.win[g.initial]:
        return False, None, sol
    best = sol.best
    for c in best.components:
        if not c.checked:
            if (sol.priority[c.states] == c.layer).all():
                # every recurrent class has minimum priority c.layer
                c.witness = c.mp_strategy
            else:
                c.witness = memoryless_check_ec(sol.sub, c.states, sol.priority, sol.reward,
                                                c.value)
            c.checked = True
    keep = np.array([c.witness is not None for c in best.components], bool)
    init = int(np.flatnonzero(sol.index == g.initial)[0])
    if not keep.any():
        return False, None, sol
    if keep.all():
        filt, x2 = best, sol.x
    else:
        filt = best.filtered(keep)
        x2 = solve_max(max_conversion(sol.sub, filt))
    if not _close(x2[init], sol.x[init]):
        return False, None, sol
    strat = _extract_memoryless(sol, filt, x2)
    return True, strat, sol


# --------------------------------------------------------------------------
# counter strategies


@dataclass
class FixedSchedule:
    n: int
    l: int

    @property
    def period(self) -> int:
        return self.n + self.l

    def phase(self, c: int) -> str:
        return "reach" if c < self.n else "gain"


@dataclass
class AdaptiveSchedule:
    """Round ``i``: reach a minimum-priority state (``k_i`` steps), then play
    the gain strategy for ``max(j(1/i), i * k_i * beta)`` steps."""

    span: float
    beta: float

    def j(self, eps: float) -> int:
        return max(1, math.ceil(self.span / eps))

    def stage2_length(self, i: int, k_i: int) -> int:
        return max(self.j(1.0 / i), math.ceil(i * k_i * self.beta), 1)


@dataclass
class CounterStrategy:
    pi_s: dict
    pi_m: dict
    schedule: object
    beta: float
    v_star: float
    reach: dict = field(default_factory=dict)
    target: np.ndarray | None = None
    value: float | None = None
    epsilon: float | None = None


def _best_component(sub: MDP, p, r):
    best = best_ec_values(sub, p, r)
    if not best.components:
        raise ModelError("no end component with even minimum priority")
    i = max(range(len(best.components)), key=lambda k: (best.components[k].value, -k))
    return best, best.components[i]


def _counter_parts(g: MDP, states, priority, reward):
    p = _priorities(g, priority)
    r = _rewards(g, reward)
    states = np.arange(g.n) if states is None else np.asarray(states)
    sub, index = restrict(g, states)
    ps, rs = p[index], r[index]
    _, comp = _best_component(sub, ps, rs)
    cmask = _as_mask(sub.n, comp.states)
    dmask = cmask & (ps == comp.layer)
    pi_s = shortest_path_strategy(sub, dmask, cmask)
    pi_m = dict(comp.mp_strategy)
    outside = ~cmask
    reach = shortest_path_strategy(sub, cmask) if outside.any() else {}
    reach = {s: t for s, t in reach.items() if outside[s]}
    return sub, index, ps, rs, comp, cmask, dmask, pi_s, pi_m, reach


def _glob(index, strat):
    return {int(index[s]): int(index[t]) for s, t in strat.items()}


def optimal_counter_strategy(g: MDP, states=None, priority=None, reward=None) -> CounterStrategy:
    """Infinite-memory optimal strategy inside an end component (growing rounds)."""
    sub, index, ps, rs, comp, cmask, dmask, pi_s, pi_m, reach = \
        _counter_parts(g, states, priority, reward)
    inner, ii = restrict(sub, cmask)
    local = {int(s): k for k, s in enumerate(ii)}
    mc = fix_strategy(inner.replace(reward=rs[ii]), {local[s]: local[t] for s, t in pi_m.items() if s in local})
    h = bias_vector(mc, comp.value)
    beta = float(np.max(np.abs(rs))) if len(rs) else 0.0
    sched = AdaptiveSchedule(float(h.max() - h.min()), beta)
    return CounterStrategy(_glob(index, pi_s), _glob(index, pi_m), sched, beta, comp.value,
                           _glob(index, reach), index[dmask], epsilon=None)


def counter_product_chain(g: MDP, sigma_s: dict, sigma_m: dict, schedule: FixedSchedule,
                          count_at: str = "all") -> MDP:
    """Markov chain of ``g`` under the two strategies switched by a step counter.

    State ``(s, c)`` is numbered ``s * period + c``.  The counter advances on
    every step, or only when leaving a player-1 state with ``count_at="player1"``.
    """
    P = schedule.period
    n = g.n
    edges = []
    for s in range(n):
        for c in range(P):
            c2 = (c + 1) % P
            if g.player1[s]:
                t = (sigma_s if c < schedule.n else sigma_m)[s]
                edges.append([(t * P + c2, 1.0)])
            else:
                cn = c2 if count_at == "all" else c
                t, p = g.distribution(s)
                edges.append(list(zip((t * P + cn).tolist(), p.tolist())))
    rew = None if g.reward is None else np.repeat(g.reward, P)
    pri = None if g.priority is None else np.repeat(g.priority, P)
    return MDP.from_lists(np.zeros(n * P, bool), edges, g.initial * P, rew, pri)


def _full_strategies(sub, pi_s, pi_m, reach):
    sigma_s, sigma_m = dict(reach), dict(reach)
    sigma_s.update(pi_s)
    sigma_m.update(pi_m)
    for s in np.flatnonzero(sub.player1):
        first = int(sub.successors(s)[0])
        sigma_s.setdefault(int(s), first)
        sigma_m.setdefault(int(s), first)
    return sigma_s, sigma_m


def evaluate_counter(g: MDP, sigma_s, sigma_m, schedule, count_at="all"):
    """Exact (gain per start state at counter 0, parity-a.s. per start state)."""
    mc = counter_product_chain(g, sigma_s, sigma_m, schedule, count_at)
    gain = mc_gain_vector(mc)
    par = mc_parity_vector(mc)
    P = schedule.period
    return gain[::P], par[::P]


def epsilon_strategy(g: MDP, eps: float, states=None, priority=None, reward=None,
                     max_doublings: int = 30) -> CounterStrategy:
    """Finite-memory strategy within ``eps`` of the optimum inside an end component.

    Fixed schedule ``(n, l)`` with ``n = |u|``; ``l`` starts at
    ``ceil(n * beta / eps)`` and doubles until the exactly evaluated value
    from every state is at least ``v* - eps``.
    """
    if not eps > 0:
        raise ValueError("epsilon must be positive")
    sub, index, ps, rs, comp, cmask, dmask, pi_s, pi_m, reach = \
        _counter_parts(g, states, priority, reward)
    sigma_s, sigma_m = _full_strategies(sub, pi_s, pi_m, reach)
    beta = float(np.max(np.abs(rs))) if len(rs) else 0.0
    n = sub.n
    l = max(1, math.ceil(n * beta / eps))
    model = sub.replace(reward=rs, priority=ps)
    for _ in range(max_doublings):
        sched = FixedSchedule(n, l)
        gain, par = evaluate_counter(model, sigma_s, sigma_m, sched)
        worst = float(gain.min())
        if par.all() and worst >= comp.value - eps:
            return CounterStrategy(_glob(index, pi_s), _glob(index, pi_m), sched, beta,
                                   comp.value, _glob(index, reach), index[dmask],
                                   value=worst, epsilon=eps)
        l *= 2
    raise SolverError("counter search did not reach the target value")


def simulate_counter(g: MDP, strat: CounterStrategy, steps: int, rng, start=None):
    """Run a counter strategy on ``g``; returns (average reward, rounds, per-round
    flags telling whether a target state was visited)."""
    s = g.initial if start is None else start
    target = set(int(t) for t in strat.target)
    total = 0.0
    rounds = []
    sched = strat.schedule
    adaptive = isinstance(sched, AdaptiveSchedule)
    i, stage, k, left, c = 1, 1, 0, 0, 0
    visited = False
    cum = {}
    for _ in range(steps):
        total += g.reward[s]
        if s in target:
            visited = True
        if adaptive:
            if stage == 1 and s in target:
                stage, left = 2, sched.stage2_length(i, k)
            if stage == 2 and left == 0:
                rounds.append(visited)
                i, stage, k, visited = i + 1, 1, 0, s in target
                if s in target:
                    stage, left = 2, sched.stage2_length(i, 0)
            use = strat.pi_s if stage == 1 else strat.pi_m
        else:
            use = strat.pi_s if c < sched.n else strat.pi_m
        if g.player1[s]:
            t = strat.reach.get(s, use.get(s))
            if t is None:
                t = int(g.successors(s)[0])
        else:
            if s not in cum:
                tt, pp = g.distribution(s)
                cum[s] = (tt, np.cumsum(pp))
            tt, cp = cum[s]
            t = int(tt[min(np.searchsorted(cp, rng.random()), len(tt) - 1)])
        if adaptive:
            if stage == 1:
                k += 1
            else:
                left -= 1
        else:
            c = (c + 1) % sched.period
        s = t
    return total / steps, len(rounds), rounds


@dataclass
class CounterPlan:
    """Two memoryless strategies over the whole MDP switched by a shared counter.

    Outside the optimal components both follow the value-preserving reach
    strategy; inside a component with a memoryless witness both play it, and
    otherwise ``sigma_s`` heads for the component's minimum priority while
    ``sigma_m`` plays its mean-payoff strategy.
    """

    sigma_s: dict
    sigma_m: dict
    schedule: FixedSchedule | None
    value: float | None
    optimum: float
    adaptive: dict = field(default_factory=dict)


def _plan_strategies(sol: MppSolution):
    sub, best = sol.sub, sol.best
    plan = _component_plan(sol, best, sol.x)
    sigma_s, sigma_m = dict(plan.reach), dict(plan.reach)
    adaptive = {}
    parts = {}
    for i in sorted(set(plan.assigned.values())):
        c = best.components[i]
        if c.witness is not None:
            parts[i] = (c.witness, c.witness)
            continue
        cmask = _as_mask(sub.n, c.states)
        pi_s = shortest_path_strategy(sub, cmask & (sol.priority == c.layer), cmask)
        parts[i] = (pi_s, c.mp_strategy)
        inner, ii = restrict(sub, cmask)
        local = {int(s): k for k, s in enumerate(ii)}
        mc = fix_strategy(inner.replace(reward=sol.reward[ii]),
                          {local[s]: local[t] for s, t in c.mp_strategy.items()})
        h = bias_vector(mc, c.value)
        beta = float(np.max(np.abs(sol.reward - sol.shift)))
        adaptive[i] = AdaptiveSchedule(float(h.max() - h.min()), beta)
    for s, i in plan.assigned.items():
        if sub.player1[s]:
            sigma_s[s] = parts[i][0][s]
            sigma_m[s] = parts[i][1][s]
    return sigma_s, sigma_m, adaptive


def counter_plan(sol: MppSolution, eps: float | None, count_at: str = "all",
                 max_doublings: int = 30) -> CounterPlan:
    """Counter strategy for the whole MDP.  With ``eps`` the fixed schedule
    ``(n, l)`` is searched by doubling ``l`` from ``ceil(n * beta / eps)``
    until the exact value at the initial state is within ``eps``."""
    if sol.sub is None:
        raise ModelError("no almost-sure winning state")
    sub = sol.sub
    init = int(sub.initial)
    optimum = float(sol.x[init]) - sol.shift
    sigma_s, sigma_m, adaptive = _plan_strategies(sol)
    glob = lambda st: {int(sol.index[s]): int(sol.index[t]) for s, t in st.items()}
    if eps is None:
        return CounterPlan(glob(sigma_s), glob(sigma_m), None, None, optimum, adaptive)
    if not eps > 0:
        raise ValueError("epsilon must be positive")
    model = sub.replace(reward=sol.reward - sol.shift, priority=sol.priority)
    beta = float(np.max(np.abs(model.reward)))
    n = sub.n
    l = max(1, math.ceil(n * beta / eps))
    for _ in range(max_doublings):
        sched = FixedSchedule(n, l)
        gain, par = evaluate_counter(model, sigma_s, sigma_m, sched, count_at)
        if par[init] and gain[init] >= optimum - eps:
            return CounterPlan(glob(sigma_s), glob(sigma_m), sched, float(gain[init]),
                               optimum, adaptive)
        l *= 2
    raise SolverError("counter search did not reach the target value")
