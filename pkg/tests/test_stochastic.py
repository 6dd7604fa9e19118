import itertools

import numpy as np
import pytest
import scipy.sparse as sp

from mpsynth.stochastic import (
    MDP, ModelError, almost_sure_reach, expected_hitting_times, fix_strategy,
    is_end_component, longrun_frequencies, markov_chain, mc_mean_payoff,
    mc_parity_almost_sure, mec_decomposition, recurrence_classes, stationary_distribution,
    uniform_ec_strategy,
    validate_labeled_chain,
)
from mpsynth.values import BOTTOM


def random_chain(rng, n, density=0.35, rewards=True):
    edges = []
    for s in range(n):
        k = int(rng.integers(1, 4))
        ts = rng.choice(n, size=min(k, n), replace=False)
        w = rng.random(len(ts)) + 0.1
        edges.append(list(zip(ts.tolist(), (w / w.sum()).tolist())))
    reward = rng.integers(0, 6, n).astype(float) if rewards else None
    return markov_chain(edges, 0, reward, rng.integers(0, 3, n))


def random_mdp(rng, n, p1_frac=0.5):
    player1 = rng.random(n) < p1_frac
    edges = []
    for s in range(n):
        k = int(rng.integers(1, 4))
        ts = rng.choice(n, size=min(k, n), replace=False).tolist()
        if player1[s]:
            edges.append(ts)
        else:
            w = rng.random(len(ts)) + 0.1
            edges.append(list(zip(ts, (w / w.sum()).tolist())))
    return MDP.from_lists(player1, edges, 0, rng.integers(0, 6, n).astype(float),
                          rng.integers(0, 3, n))


def tarjan_bottom(n, adj):
    """Independent recursive Tarjan; returns bottom SCCs as frozensets."""
    index, low, stack, on, comps = {}, {}, [], set(), []
    counter = [0]

    def visit(v):
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on.add(v)
        for w in adj[v]:
            if w not in index:
                visit(w)
                low[v] = min(low[v], low[w])
            elif w in on:
                low[v] = min(low[v], index[w])
        if low[v] == index[v]:
            comp = set()
            while True:
                w = stack.pop()
                on.discard(w)
                comp.add(w)
                if w == v:
                    break
            comps.append(frozenset(comp))

    for v in range(n):
        if v not in index:
            visit(v)
    return {c for c in comps if all(w in c for v in c for w in adj[v])}


def adjacency(g):
    return [set(g.successors(s).tolist()) for s in range(g.n)]


def test_model_validation():
    with pytest.raises(ModelError):
        markov_chain([[(0, 0.5)]])
    with pytest.raises(ModelError):
        MDP.from_lists([True], [[]])


def test_fix_strategy_basic():
    mc = markov_chain([[(1, 1.0)], [(0, 0.5), (1, 0.5)]])
    fixed = fix_strategy(mc, {})
    assert (fixed.succ == mc.succ).all() and np.allclose(fixed.prob, mc.prob)
    g = MDP.from_lists([True, True], [[0, 1], [1]])
    c = fix_strategy(g, {0: 0, 1: 1})
    _, classes = recurrence_classes(c)
    assert [list(x) for x in classes] == [[0], [1]]
    with pytest.raises(ModelError):
        fix_strategy(g, {0: 0, 1: 0})


def test_fix_strategy_random_edges():
    rng = np.random.default_rng(0)
    for _ in range(20):
        g = random_mdp(rng, 6)
        pi = {s: int(rng.choice(g.successors(s))) for s in np.flatnonzero(g.player1)}
        c = fix_strategy(g, pi)
        for s in range(g.n):
            expect = {pi[s]} if g.player1[s] else set(g.successors(s).tolist())
            assert set(c.successors(s).tolist()) == expect


def test_recurrence_classes_small():
    mc = markov_chain([[(1, 1.0)], [(1, 1.0)]])
    transient, classes = recurrence_classes(mc)
    assert transient.tolist() == [0] and [c.tolist() for c in classes] == [[1]]
    cyc = markov_chain([[(1, 1.0)], [(2, 1.0)], [(0, 1.0)]])
    transient, classes = recurrence_classes(cyc)
    assert transient.tolist() == [] and [c.tolist() for c in classes] == [[0, 1, 2]]


def test_recurrence_classes_vs_tarjan():
    rng = np.random.default_rng(1)
    for _ in range(50):
        mc = random_chain(rng, int(rng.integers(2, 10)))
        _, classes = recurrence_classes(mc)
        assert {frozenset(c.tolist()) for c in classes} == tarjan_bottom(mc.n, adjacency(mc))


def test_frequencies_two_cycle():
    mc = markov_chain([[(1, 1.0)], [(0, 1.0)]])
    assert np.allclose(longrun_frequencies(mc, 0), [0.5, 0.5], atol=1e-12)


def test_frequencies_vs_power_average():
    rng = np.random.default_rng(2)
    for _ in range(30):
        mc = random_chain(rng, int(rng.integers(2, 9)))
        P = mc.matrix().toarray()
        # the lazy chain (I + P)/2 has the same Cesaro limit and is aperiodic,
        # so its powers converge; square repeatedly
        L = (np.eye(mc.n) + P) / 2
        for _ in range(40):
            L = L @ L
            L /= L.sum(axis=1, keepdims=True)
        freq = longrun_frequencies(mc, 0)
        assert abs(freq.sum() - 1) < 1e-9
        assert np.allclose(freq, L[0], atol=1e-6)


@pytest.mark.parametrize("n", [5, 15, 30])
def test_stationary_rare_first_state(n):
    # state 0 is only entered after n-2 unlikely steps in a row
    P = np.zeros((n, n))
    P[0, 1] = 1.0
    for i in range(1, n - 1):
        P[i, i + 1], P[i, 1] = 0.05, 0.95
    P[n - 1, 0] = 1.0
    w, v = np.linalg.eig(P.T)
    ref = np.real(v[:, np.argmin(np.abs(w - 1))])
    ref /= ref.sum()
    pi = stationary_distribution(sp.csr_matrix(P))
    assert pi.sum() == pytest.approx(1.0)
    assert np.allclose(pi, ref, atol=1e-12, rtol=1e-6)


def test_mean_payoff_basic():
    mc = markov_chain([[(0, 1.0)]], reward=[5.0])
    assert mc_mean_payoff(mc) == pytest.approx(5.0)
    bad = markov_chain([[(1, 0.5), (0, 0.5)], [(1, 1.0)]], reward=[1.0, np.nan])
    assert mc_mean_payoff(bad) is BOTTOM


def test_mean_payoff_shift():
    rng = np.random.default_rng(3)
    for _ in range(20):
        mc = random_chain(rng, 6)
        v = mc_mean_payoff(mc)
        w = mc_mean_payoff(mc.replace(reward=mc.reward + 2.5))
        assert w == pytest.approx(v + 2.5, abs=1e-9)


def test_mean_payoff_monte_carlo():
    rng = np.random.default_rng(4)
    for _ in range(3):
        mc = random_chain(rng, 6)
        P = mc.matrix().toarray()
        cum = np.cumsum(P, axis=1)
        walkers, steps = 100, 10000
        state = np.zeros(walkers, dtype=int)
        sums = np.zeros(walkers)
        for t in range(steps + 1000):
            if t >= 1000:
                sums += mc.reward[state]
            u = rng.random(walkers)
            state = np.minimum((u[:, None] > cum[state]).sum(axis=1), mc.n - 1)
        est = sums / steps
        v = mc_mean_payoff(mc)
        se = est.std(ddof=1) / np.sqrt(walkers)
        assert abs(est.mean() - v) <= 4 * se + 1e-3


def test_parity_almost_sure():
    mc = markov_chain([[(1, 0.5), (2, 0.5)], [(1, 1.0)], [(2, 1.0)]], priority=[3, 0, 2])
    assert mc_parity_almost_sure(mc)
    assert not mc_parity_almost_sure(mc.replace(priority=[0, 0, 1]))
    rng = np.random.default_rng(5)
    for _ in range(40):
        mc = random_chain(rng, 7)
        adj = adjacency(mc)
        reach = set()
        todo = [0]
        while todo:
            s = todo.pop()
            if s not in reach:
                reach.add(s)
                todo.extend(adj[s])
        bottoms = [c for c in tarjan_bottom(mc.n, adj) if c <= reach]
        expect = all(min(mc.priority[list(c)]) % 2 == 0 for c in bottoms)
        assert mc_parity_almost_sure(mc) == expect


def test_hitting_times_line():
    mc = markov_chain([[(0, 0.5), (1, 0.5)], [(0, 0.5), (2, 0.5)], [(2, 1.0)]])
    h = expected_hitting_times(mc, [2])
    # h0 = 1 + h0/2 + h1/2, h1 = 1 + h0/2
    assert np.allclose(h, [6.0, 4.0, 0.0])
    mc2 = markov_chain([[(1, 0.5), (2, 0.5)], [(1, 1.0)], [(2, 1.0)]])
    assert np.isinf(expected_hitting_times(mc2, [2])[0])


def test_mec_chain_and_loops():
    rng = np.random.default_rng(6)
    for _ in range(20):
        mc = random_chain(rng, 7)
        _, classes = recurrence_classes(mc)
        assert {frozenset(c.tolist()) for c in mec_decomposition(mc)} == \
            {frozenset(c.tolist()) for c in classes}
    g = MDP.from_lists([True, True], [[0], [1]])
    assert [m.tolist() for m in mec_decomposition(g)] == [[0], [1]]


def exhaustive_ecs(g):
    out = []
    for k in range(1, g.n + 1):
        for sub in itertools.combinations(range(g.n), k):
            if is_end_component(g, list(sub)):
                out.append(frozenset(sub))
    return out


def test_mec_vs_exhaustive():
    rng = np.random.default_rng(7)
    for _ in range(40):
        g = random_mdp(rng, 8)
        mecs = [frozenset(m.tolist()) for m in mec_decomposition(g)]
        for m in mecs:
            assert is_end_component(g, list(m))
        for a, b in itertools.combinations(mecs, 2):
            assert not a & b
        for ec in exhaustive_ecs(g):
            assert any(ec <= m for m in mecs)


def test_uniform_ec_strategy():
    g = MDP.from_lists([True], [[0]])
    assert uniform_ec_strategy(g, [0]) == {0: {0: 1.0}}
    g2 = MDP.from_lists([True, True], [[1, 0], [0]])
    assert uniform_ec_strategy(g2, [0, 1]) == {0: {1: 0.5, 0: 0.5}, 1: {0: 1.0}}
    with pytest.raises(ModelError):
        uniform_ec_strategy(MDP.from_lists([True, True], [[1], [1]]), [0, 1])
    rng = np.random.default_rng(8)
    for _ in range(30):
        g = random_mdp(rng, 7)
        for m in mec_decomposition(g):
            strat = uniform_ec_strategy(g, m)
            full = {s: strat.get(s, {int(g.successors(s)[0]): 1.0})
                    for s in np.flatnonzero(g.player1)}
            c = fix_strategy(g, full)
            _, classes = recurrence_classes(c)
            assert any(set(cl.tolist()) == set(m.tolist()) for cl in classes)


def test_memoryless_bottom_sccs_inside_mecs():
    rng = np.random.default_rng(9)
    for _ in range(30):
        g = random_mdp(rng, 7)
        mecs = [set(m.tolist()) for m in mec_decomposition(g)]
        for _ in range(5):
            pi = {s: int(rng.choice(g.successors(s))) for s in np.flatnonzero(g.player1)}
            _, classes = recurrence_classes(fix_strategy(g, pi))
            for c in classes:
                assert any(set(c.tolist()) <= m for m in mecs)


def test_almost_sure_reach():
    # 0 (player1) -> 1 or 2; 1 probabilistic -> 3 (target) or 0; 2 absorbing
    g = MDP.from_lists([True, False, False, False],
                       [[1, 2], [(3, 0.5), (0, 0.5)], [(2, 1.0)], [(3, 1.0)]])
    m = almost_sure_reach(g, [3])
    assert m.tolist() == [True, True, False, True]


def test_labeled_chain_validation():
    mc = markov_chain([[(0, 0.5), (1, 0.5)], [(0, 0.5), (1, 0.5)]], label=[0, 1])
    assert validate_labeled_chain(mc, 2) == []
    assert validate_labeled_chain(mc, 4)
