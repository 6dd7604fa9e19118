"""Markov chains, MDPs and their graph/linear-algebra analyses.

Rewards and priorities sit on states.  A ``nan`` reward is the undefined
value (bottom).  Successor lists are stored in CSR form: the successors of
``s`` are ``succ[indptr[s]:indptr[s+1]]`` with probabilities ``prob`` aligned
(probabilities of player-1 edges are unused and kept at 0).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, connected_components
from scipy.sparse.linalg import splu

from .values import BOTTOM

PROB_TOL = 1e-9


class ModelError(ValueError):
    """Malformed chain or MDP (bad distribution, dead end, ...)."""


class NumericError(RuntimeError):
    pass


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MDP:
    """Turn-based MDP; a Markov chain is the special case without player-1 states."""

    player1: np.ndarray
    indptr: np.ndarray
    succ: np.ndarray
    prob: np.ndarray
    initial: int = 0
    reward: np.ndarray | None = None
    priority: np.ndarray | None = None
    label: np.ndarray | None = None
    names: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "player1", _frozen(self.player1, bool))
        object.__setattr__(self, "indptr", _frozen(self.indptr, np.int64))
        object.__setattr__(self, "succ", _frozen(self.succ, np.int64))
        object.__setattr__(self, "prob", _frozen(self.prob, float))
        for f, dt in (("reward", float), ("priority", np.int64), ("label", np.int64)):
            if getattr(self, f) is not None:
                object.__setattr__(self, f, _frozen(getattr(self, f), dt))
        n = len(self.player1)
        if len(self.indptr) != n + 1 or len(self.succ) != len(self.prob):
            raise ModelError("inconsistent successor arrays")
        if n and not 0 <= self.initial < n:
            raise ModelError(f"initial state {self.initial} out of range")
        if len(self.succ) and (self.succ.min() < 0 or self.succ.max() >= n):
            raise ModelError("edge to an unknown state")
        if (np.diff(self.indptr) < 1).any():
            s = int(np.flatnonzero(np.diff(self.indptr) < 1)[0])
            raise ModelError(f"state {s} has no outgoing edge")
        sums = np.add.reduceat(self.prob, self.indptr[:-1]) if len(self.succ) else np.zeros(n)
        bad = ~self.player1 & (np.abs(sums - 1.0) > PROB_TOL)
        if bad.any():
            s = int(np.flatnonzero(bad)[0])
            raise ModelError(f"distribution of state {s} sums to {sums[s]}")
        if (~self.player1[self.src] & (self.prob <= 0)).any():
            raise ModelError("probabilistic edge with nonpositive probability")
        if self.names is None:
            object.__setattr__(self, "names", tuple(range(n)))

    # --- construction helpers

    @classmethod
    def from_lists(cls, player1, edges, initial=0, reward=None, priority=None, label=None,
                   names=None):
        """``edges[s]`` is a list of successors (player-1) or ``(t, p)`` pairs."""
        indptr, succ, prob = [0], [], []
        for s, out in enumerate(edges):
            for e in out:
                if isinstance(e, tuple):
                    t, p = e
                else:
                    t, p = e, 0.0
                succ.append(int(t))
                prob.append(0.0 if player1[s] else float(p))
            indptr.append(len(succ))
        return cls(np.asarray(player1, bool), indptr, succ, prob, initial,
                   reward, priority, label, names)

    @property
    def n(self) -> int:
        return len(self.player1)

    @property
    def is_chain(self) -> bool:
        return not self.player1.any()

    @property
    def src(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), np.diff(self.indptr))

    def successors(self, s: int) -> np.ndarray:
        return self.succ[self.indptr[s]:self.indptr[s + 1]]

    def distribution(self, s: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[s], self.indptr[s + 1]
        return self.succ[lo:hi], self.prob[lo:hi]

    def graph(self, edge_mask=None) -> sp.csr_matrix:
        """Adjacency matrix (optionally restricted to a subset of edges)."""
        data = np.ones(len(self.succ))
        if edge_mask is not None:
            data = data * edge_mask
        g = sp.csr_matrix((data, self.succ, self.indptr), shape=(self.n, self.n))
        g.eliminate_zeros()
        return g

    def matrix(self) -> sp.csr_matrix:
        """Transition matrix of a Markov chain."""
        if not self.is_chain:
            raise ModelError("transition matrix requested for an MDP with choices")
        return sp.csr_matrix((self.prob, self.succ, self.indptr), shape=(self.n, self.n))

    def replace(self, **kw) -> "MDP":
        fields = dict(player1=self.player1, indptr=self.indptr, succ=self.succ, prob=self.prob,
                      initial=self.initial, reward=self.reward, priority=self.priority,
                      label=self.label, names=self.names)
        fields.update(kw)
        return MDP(**fields)


MarkovChain = MDP


def markov_chain(edges, initial=0, reward=None, priority=None, label=None, names=None) -> MDP:
    """Markov chain from ``edges[s] = [(t, p), ...]``."""
    return MDP.from_lists(np.zeros(len(edges), bool), edges, initial, reward, priority, label, names)


def parse_probability(p) -> Fraction:
    """Exact parse of a probability written as a decimal string or fraction."""
    try:
        q = Fraction(str(p).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ModelError(f"bad probability {p!r}") from exc
    if not 0 <= q <= 1:
        raise ModelError(f"probability {p!r} outside [0,1]")
    return q


def validate_labeled_chain(mc: MDP, n_letters: int) -> list[str]:
    """Problems with an input-assumption chain (empty iff usable).

    Deterministic: successor labels of a state are distinct.  Complete: every
    state has a successor for every input letter.
    """
    out = []
    if mc.label is None:
        return ["chain has no labels"]
    if not mc.is_chain:
        out.append("input assumption has player-1 states")
    if (mc.label < 0).any() or (mc.label >= n_letters).any():
        out.append("label outside the input alphabet")
        return out
    for s in range(mc.n):
        labs = mc.label[mc.successors(s)].tolist()
        if len(set(labs)) != len(labs):
            out.append(f"state {mc.names[s]} has two successors with the same label")
        missing = sorted(set(range(n_letters)) - set(labs))
        if missing:
            out.append(f"state {mc.names[s]} has no successor for input letters {missing}")
    return out


# --------------------------------------------------------------------------
# graph utilities


def _bfs(adj: sp.csr_matrix, sources) -> np.ndarray:
    """Mask of nodes reachable from ``sources`` (one BFS from a virtual root)."""
    n = adj.shape[0]
    sources = np.unique(np.atleast_1d(np.asarray(sources, dtype=np.int64)))
    if not len(sources):
        return np.zeros(n, bool)
    root = sp.csr_matrix((np.ones(len(sources)), sources, [0, len(sources)]), shape=(1, n))
    aug = sp.vstack([sp.hstack([adj, sp.csr_matrix((n, 1))]),
                     sp.hstack([root, sp.csr_matrix((1, 1))])]).tocsr()
    order = breadth_first_order(aug, n, directed=True, return_predecessors=False)
    seen = np.zeros(n + 1, bool)
    seen[order] = True
    return seen[:n]


def reachable(g: MDP, sources, edge_mask=None) -> np.ndarray:
    """Sorted array of states reachable from ``sources``."""
    return np.flatnonzero(_bfs(g.graph(edge_mask), sources))


def backward_reachable(g: MDP, targets, edge_mask=None) -> np.ndarray:
    return np.flatnonzero(_bfs(g.graph(edge_mask).T.tocsr(), targets))


def scc_labels(g: MDP, edge_mask=None) -> np.ndarray:
    _, labels = connected_components(g.graph(edge_mask), directed=True, connection="strong")
    return labels


# --------------------------------------------------------------------------
# strategies and chains


def fix_strategy(g: MDP, pi) -> MDP:
    """Markov chain induced by a memoryless strategy.

    ``pi`` maps player-1 states to a successor, or to a ``{successor: prob}``
    distribution for randomized strategies; an array indexed by state with
    successor ids is accepted too.
    """
    edges = []
    for s in range(g.n):
        if not g.player1[s]:
            t, p = g.distribution(s)
            edges.append(list(zip(t.tolist(), p.tolist())))
            continue
        try:
            choice = pi[s]
        except (KeyError, IndexError) as exc:
            raise ModelError(f"strategy undefined at player-1 state {s}") from exc
        allowed = set(g.successors(s).tolist())
        if isinstance(choice, dict):
            dist = [(int(t), float(p)) for t, p in choice.items() if p > 0]
        else:
            dist = [(int(choice), 1.0)]
        for t, _ in dist:
            if t not in allowed:
                raise ModelError(f"strategy picks {t}, which is not a successor of {s}")
        edges.append(dist)
    return MDP.from_lists(np.zeros(g.n, bool), edges, g.initial, g.reward, g.priority,
                          g.label, g.names)


def recurrence_classes(mc: MDP):
    """Transient states and closed recurrent classes (bottom SCCs)."""
    labels = scc_labels(mc)
    src = mc.src
    leaving = np.zeros(labels.max() + 1 if mc.n else 0, bool)
    cross = labels[src] != labels[mc.succ]
    if mc.is_chain:
        cross &= mc.prob > 0
    leaving[labels[src[cross]]] = True
    order = np.argsort(labels, kind="stable")
    cuts = np.flatnonzero(np.diff(labels[order])) + 1
    classes = []
    transient = []
    for members in np.split(order, cuts):
        if leaving[labels[members[0]]]:
            transient.extend(members.tolist())
        else:
            classes.append(np.sort(members))
    classes.sort(key=lambda m: m[0])
    return np.array(sorted(transient), dtype=np.int64), classes


def stationary_distribution(P: sp.csr_matrix) -> np.ndarray:
    """Stationary distribution of an irreducible chain given by ``P``."""
    n = P.shape[0]
    if n == 1:
        return np.ones(1)
    # fix pi_0 = 1 and solve the remaining balance equations (no dense
    # normalisation row, which would ruin the sparsity of the factorisation)
    PT = sp.csr_matrix(P.T)
    A = sp.identity(n - 1, format="csc") - PT[1:, 1:].tocsc()
    try:
        rest = _solve(A, np.asarray(PT[1:, 0].todense()).ravel())
        pi = np.concatenate([[1.0], rest])
        if (pi >= -1e-9).all():
            return pi / pi.sum()
    except NumericError:
        pass
    # state 0 is too rare to anchor on: replace one balance row by sum(pi) = 1
    A = (sp.identity(n, format="csr") - PT).tolil()
    A[n - 1, :] = np.ones(n)
    b = np.zeros(n)
    b[-1] = 1.0
    return _solve(A.tocsc(), b)


def _solve(A, b):
    try:
        x = splu(sp.csc_matrix(A)).solve(b)
    except RuntimeError as exc:
        raise NumericError(f"singular linear system: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise NumericError("linear system produced non-finite values")
    resid = A @ x - b
    size = max(1.0, np.max(np.abs(b), initial=0.0), np.max(np.abs(x), initial=0.0))
    if np.max(np.abs(resid), initial=0.0) > 1e-6 * size:
        raise NumericError("linear system residual above tolerance")
    return x


def longrun_frequencies(mc: MDP, start: int | None = None) -> np.ndarray:
    """Cesaro-limit occupation frequencies from ``start`` (array over all states)."""
    start = mc.initial if start is None else start
    reach = reachable(mc, [start])
    sub, local = _subchain(mc, reach)
    P = sub.matrix()
    transient, classes = recurrence_classes(sub)
    s0 = local[start]
    freq = np.zeros(sub.n)
    if len(transient) and s0 in set(transient.tolist()):
        # expected visits y solve y (I - Q) = e_start over transient states
        tpos = {t: i for i, t in enumerate(transient.tolist())}
        Q = P[transient][:, transient]
        e = np.zeros(len(transient))
        e[tpos[s0]] = 1.0
        y = _solve((sp.identity(len(transient)) - Q).T.tocsc(), e)
        for c in classes:
            absorb = float(y @ np.asarray(P[transient][:, c].sum(axis=1)).ravel())
            if absorb > 0:
                freq[c] += absorb * stationary_distribution(P[c][:, c])
    else:
        for c in classes:
            if s0 in set(c.tolist()):
                freq[c] = stationary_distribution(P[c][:, c])
    out = np.zeros(mc.n)
    out[reach] = freq
    return out


def _subchain(mc: MDP, keep: np.ndarray):
    """Restriction to a set closed under successors; returns (chain, global->local)."""
    local = np.full(mc.n, -1, dtype=np.int64)
    local[keep] = np.arange(len(keep))
    edges = []
    for s in keep:
        t, p = mc.distribution(s)
        edges.append(list(zip(local[t].tolist(), p.tolist())))
    return MDP.from_lists(np.zeros(len(keep), bool), edges, 0), local


def mc_mean_payoff(mc: MDP, start: int | None = None):
    """Expected long-run average reward, or BOTTOM if a bottom-reward state is reachable."""
    if mc.reward is None:
        raise ModelError("chain has no rewards")
    start = mc.initial if start is None else start
    reach = reachable(mc, [start])
    if np.isnan(mc.reward[reach]).any():
        return BOTTOM
    freq = longrun_frequencies(mc, start)
    return float(freq[reach] @ mc.reward[reach])


def mc_parity_almost_sure(mc: MDP, start: int | None = None) -> bool:
    """True iff every recurrent class reachable from ``start`` has even minimum priority."""
    if mc.priority is None:
        raise ModelError("chain has no priorities")
    start = mc.initial if start is None else start
    reach = reachable(mc, [start])
    sub, _ = _subchain(mc, reach)
    _, classes = recurrence_classes(sub)
    return all(int(mc.priority[reach[c]].min()) % 2 == 0 for c in classes)


def expected_hitting_times(mc: MDP, target) -> np.ndarray:
    """Expected steps to reach ``target``; ``inf`` where reaching it is not certain."""
    target = np.zeros(mc.n, bool) | _mask(mc.n, target)
    P = mc.matrix()
    can = _mask(mc.n, backward_reachable(mc, np.flatnonzero(target))) if target.any() else np.zeros(mc.n, bool)
    # states that may move to a state unable to reach target never hit it surely
    sure = can.copy()
    while True:
        bad = sure & ~target & (np.asarray(P[:, ~sure].sum(axis=1)).ravel() > 0)
        if not bad.any():
            break
        sure &= ~bad
    out = np.full(mc.n, np.inf)
    out[target] = 0.0
    rest = np.flatnonzero(sure & ~target)
    if len(rest):
        Q = P[rest][:, rest]
        out[rest] = _solve((sp.identity(len(rest)) - Q).tocsc(), np.ones(len(rest)))
    return out


def _mask(n, states) -> np.ndarray:
    states = np.asarray(states)
    if states.dtype == bool:
        return states.copy()
    m = np.zeros(n, bool)
    m[states.astype(np.int64)] = True
    return m


# --------------------------------------------------------------------------
# MDP structure


def mec_decomposition(g: MDP, within=None) -> list[np.ndarray]:
    """Maximal end components of ``g`` (optionally of the sub-MDP on ``within``)."""
    alive = np.ones(g.n, bool) if within is None else _mask(g.n, within)
    src, dst = g.src, g.succ
    p1_src = g.player1[src]
    while True:
        active = alive[src] & alive[dst]
        labels = scc_labels(g, active)
        active &= labels[src] == labels[dst]
        # probabilistic states must keep every edge, player-1 states at least one
        broken = np.zeros(g.n, bool)
        np.logical_or.at(broken, src[~p1_src & ~active], True)
        has_edge = np.zeros(g.n, bool)
        np.logical_or.at(has_edge, src[active], True)
        remove = alive & ((~g.player1 & broken) | (g.player1 & ~has_edge))
        if not remove.any():
            break
        alive &= ~remove
    out = []
    for c in np.unique(labels[alive]):
        out.append(np.flatnonzero(alive & (labels == c)))
    out.sort(key=lambda m: m[0])
    return out


def is_end_component(g: MDP, u) -> bool:
    u = _mask(g.n, u)
    if not u.any():
        return False
    src, dst = g.src, g.succ
    inside = u[src] & u[dst]
    for s in np.flatnonzero(u):
        lo, hi = g.indptr[s], g.indptr[s + 1]
        if g.player1[s]:
            if not inside[lo:hi].any():
                return False
        elif not inside[lo:hi].all():
            return False
    labels = scc_labels(g, inside)
    return len(np.unique(labels[u])) == 1


def uniform_ec_strategy(g: MDP, u) -> dict:
    """Randomized strategy playing uniformly among the edges that stay in ``u``."""
    if not is_end_component(g, u):
        raise ModelError("state set is not an end component")
    m = _mask(g.n, u)
    strat = {}
    for s in np.flatnonzero(m & g.player1):
        inside = [int(t) for t in g.successors(s) if m[t]]
        strat[int(s)] = {t: 1.0 / len(inside) for t in inside}
    return strat


def restrict(g: MDP, keep, initial=None):
    """Sub-MDP on ``keep``; edges leaving ``keep`` are dropped.

    Probabilistic states of ``keep`` must not lose probability mass and
    player-1 states must keep at least one edge.  Returns ``(sub, index)``
    where ``index`` lists the original ids of the sub-MDP's states.
    """
    m = _mask(g.n, keep)
    index = np.flatnonzero(m)
    local = np.full(g.n, -1, dtype=np.int64)
    local[index] = np.arange(len(index))
    edges = []
    for s in index:
        t, p = g.distribution(s)
        inside = m[t]
        if not g.player1[s] and not inside.all():
            raise ModelError(f"probabilistic state {s} leaves the restricted set")
        if not inside.any():
            raise ModelError(f"player-1 state {s} has no edge inside the restricted set")
        if g.player1[s]:
            edges.append(local[t[inside]].tolist())
        else:
            edges.append(list(zip(local[t].tolist(), p.tolist())))
    init = g.initial if initial is None else initial
    sub = MDP.from_lists(
        g.player1[index], edges, int(local[init]) if m[init] else 0,
        None if g.reward is None else g.reward[index],
        None if g.priority is None else g.priority[index],
        None if g.label is None else g.label[index],
        tuple(g.names[i] for i in index))
    return sub, index


def trim(g: MDP, alive, keep=None) -> np.ndarray:
    """Largest subset of ``alive`` closed for probabilistic states and without
    dead ends; states in ``keep`` are exempt (never removed)."""
    alive = _mask(g.n, alive)
    exempt = np.zeros(g.n, bool) if keep is None else _mask(g.n, keep)
    src, dst = g.src, g.succ
    while True:
        ok_edge = alive[dst]
        has = np.zeros(g.n, bool)
        np.logical_or.at(has, src[ok_edge], True)
        leak = np.zeros(g.n, bool)
        np.logical_or.at(leak, src[~ok_edge], True)
        remove = alive & ~exempt & ((g.player1 & ~has) | (~g.player1 & leak))
        if not remove.any():
            return alive
        alive &= ~remove


def almost_sure_reach(g: MDP, target, within=None) -> np.ndarray:
    """Mask of states from which player 1 reaches ``target`` with probability 1
    while staying inside ``within`` until then."""
    u = np.ones(g.n, bool) if within is None else _mask(g.n, within)
    target = _mask(g.n, target) & u
    src, dst = g.src, g.succ
    while True:
        u = trim(g, u, keep=target)
        tgt = np.flatnonzero(u & target)
        if not len(tgt):
            return np.zeros(g.n, bool)
        edge_ok = u[src] & u[dst] & ~target[src]
        r = _mask(g.n, backward_reachable(g, tgt, edge_ok)) & u
        if (r == u).all():
            return u
        u = r


def mc_gain_vector(mc: MDP) -> np.ndarray:
    """Expected long-run average reward from every state (rewards must be defined).

    Class gains come from stationary distributions; transient states solve
    ``h = P h`` with the recurrent values as boundary condition.
    """
    if mc.reward is None:
        raise ModelError("chain has no rewards")
    P = mc.matrix()
    transient, classes = recurrence_classes(mc)
    gain = np.zeros(mc.n)
    for c in classes:
        gain[c] = stationary_distribution(P[c][:, c]) @ mc.reward[c]
    if len(transient):
        rec = np.setdiff1d(np.arange(mc.n), transient)
        Q = P[transient][:, transient]
        rhs = P[transient][:, rec] @ gain[rec]
        gain[transient] = _solve((sp.identity(len(transient)) - Q).tocsc(), rhs)
    return gain


def mc_parity_vector(mc: MDP) -> np.ndarray:
    """Per state: every recurrent class reachable from it has even minimum priority."""
    if mc.priority is None:
        raise ModelError("chain has no priorities")
    _, classes = recurrence_classes(mc)
    bad = [c for c in classes if int(mc.priority[c].min()) % 2 == 1]
    if not bad:
        return np.ones(mc.n, bool)
    return ~_mask(mc.n, backward_reachable(mc, np.concatenate(bad)))


def bias_vector(mc: MDP, gain: float) -> np.ndarray:
    """Solution of ``h = r - gain + P h`` normalized to 0 at one state per class.

    Requires every recurrent class to have the given gain.
    """
    P = mc.matrix().tolil()
    A = (sp.identity(mc.n, format="lil") - P).tolil()
    b = mc.reward - gain
    _, classes = recurrence_classes(mc)
    for c in classes:
        rep = int(c[0])
        A[rep, :] = 0.0
        A[rep, rep] = 1.0
        b[rep] = 0.0
    return _solve(A.tocsc(), b)
