"""Symbolic alphabets, deterministic automata and Mealy machines.

Letters over an alphabet ``2^V`` are stored as integers: bit ``i`` is set iff
``variables[i]`` is true.  Transition tables are dense ``(states, letters)``
integer arrays, ``-1`` marking a missing entry (only possible for automata
built with ``strict=False``; :func:`validate` reports them).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Iterable, Sequence

import numpy as np

MAX_VARIABLES = 16


class AlphabetError(ValueError):
    """A letter, guard or alphabet does not fit the alphabet it is used with."""


class ValidationError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations) or "invalid")


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str

    def __str__(self):
        return f"{self.kind}: {self.message}"


def _frozen(arr, dtype=None):
    arr = np.array(arr, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


# --------------------------------------------------------------------------
# alphabets


@dataclass(frozen=True)
class Alphabet:
    variables: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        if len(set(self.variables)) != len(self.variables):
            raise AlphabetError(f"duplicate variable names in {self.variables}")
        if len(self.variables) > MAX_VARIABLES:
            raise AlphabetError(
                f"{len(self.variables)} variables exceed the limit of {MAX_VARIABLES}")
        for v in self.variables:
            if not v or not v.replace("_", "").isalnum():
                raise AlphabetError(f"bad variable name {v!r}")

    @property
    def size(self) -> int:
        return 1 << len(self.variables)

    def __len__(self):
        return self.size

    def index(self, letter) -> int:
        """Index of a letter given as an int or an iterable of true variables."""
        if isinstance(letter, (int, np.integer)):
            if not 0 <= letter < self.size:
                raise AlphabetError(f"letter index {letter} out of range")
            return int(letter)
        if isinstance(letter, str):
            letter = [letter] if letter else []
        idx = 0
        pos = {v: i for i, v in enumerate(self.variables)}
        for v in letter:
            if v not in pos:
                raise AlphabetError(f"variable {v!r} not in alphabet {self.variables}")
            idx |= 1 << pos[v]
        return idx

    def letter(self, index: int) -> frozenset:
        return frozenset(v for i, v in enumerate(self.variables) if index >> i & 1)

    def letters(self) -> list[frozenset]:
        return [self.letter(i) for i in range(self.size)]

    def format(self, index: int) -> str:
        return "{" + ",".join(v for i, v in enumerate(self.variables) if index >> i & 1) + "}"

    def guard_mask(self, guard: str) -> np.ndarray:
        """Boolean mask of the letters satisfying a conjunction of literals."""
        pos_mask, neg_mask = self._parse_guard(guard)
        idx = np.arange(self.size)
        return ((idx & pos_mask) == pos_mask) & ((idx & neg_mask) == 0)

    def _parse_guard(self, guard: str):
        pos = {v: i for i, v in enumerate(self.variables)}
        text = guard.strip()
        if text in ("", "true", "1", "T"):
            return 0, 0
        pos_mask = neg_mask = 0
        for lit in text.replace("&&", "&").split("&"):
            lit = lit.strip()
            neg = lit.startswith(("!", "~"))
            name = lit[1:].strip() if neg else lit
            if name not in pos:
                raise AlphabetError(f"unknown variable {name!r} in guard {guard!r}")
            bit = 1 << pos[name]
            if neg:
                neg_mask |= bit
            else:
                pos_mask |= bit
        if pos_mask & neg_mask:
            raise AlphabetError(f"contradictory guard {guard!r}")
        return pos_mask, neg_mask

    def union(self, other: "Alphabet") -> "Alphabet":
        extra = tuple(v for v in other.variables if v not in self.variables)
        return Alphabet(self.variables + extra)

    def projection(self, sub: "Alphabet") -> np.ndarray:
        """For every letter here, the index of its restriction to ``sub``."""
        idx = np.arange(self.size)
        out = np.zeros(self.size, dtype=np.int64)
        for j, v in enumerate(sub.variables):
            if v not in self.variables:
                raise AlphabetError(f"{v!r} is not a variable of {self.variables}")
            out |= ((idx >> self.variables.index(v)) & 1) << j
        return out

    def embedding(self, sub: "Alphabet") -> np.ndarray:
        """For every letter of ``sub``, the letter here with the same true variables."""
        idx = np.arange(sub.size)
        out = np.zeros(sub.size, dtype=np.int64)
        for j, v in enumerate(sub.variables):
            if v not in self.variables:
                raise AlphabetError(f"{v!r} is not a variable of {self.variables}")
            out |= ((idx >> j) & 1) << self.variables.index(v)
        return out


def guard_cover(alphabet: Alphabet, letters: Iterable[int], disjoint: bool = False) -> list[str]:
    """Cover a set of letters by conjunctions (greedy prime-implicant cover).

    With ``disjoint`` the conjunctions do not share letters, so the guards can
    be read back as a deterministic transition list.
    """
    letters = sorted(set(int(l) for l in letters))
    nv = len(alphabet.variables)
    if not letters:
        return []
    if len(letters) == alphabet.size:
        return ["true"]
    if disjoint:
        ind = np.zeros(alphabet.size, dtype=bool)
        ind[letters] = True
        chosen = []
        _shannon_cubes(ind.reshape((2,) * nv), nv, 0, 0, chosen)
        return _cube_text(alphabet, chosen)
    # cubes are (care_mask, value); merge pairs differing in one cared bit
    cubes = {((1 << nv) - 1, l) for l in letters}
    primes = set()
    while cubes:
        merged = set()
        used = set()
        by_mask: dict[int, set] = {}
        for m, v in cubes:
            by_mask.setdefault(m, set()).add(v)
        for m, vals in by_mask.items():
            for v in vals:
                for b in range(nv):
                    bit = 1 << b
                    if m & bit and not v & bit and (v | bit) in vals:
                        merged.add((m & ~bit, v))
                        used.add((m, v))
                        used.add((m, v | bit))
        primes |= cubes - used
        cubes = merged
    remaining = set(letters)
    chosen = []

    def covers(cube):
        m, v = cube
        return {l for l in remaining if l & m == v}

    while remaining:
        best = max(sorted(primes), key=lambda c: len(covers(c)))
        chosen.append(best)
        remaining -= covers(best)
    return _cube_text(alphabet, chosen)


def _shannon_cubes(arr, nv, care, value, out, memo=None):
    """Disjoint cubes of the indicator ``arr`` (axis ``i`` is bit ``nv-1-i``);
    axes on which the set does not depend are dropped before splitting."""
    memo = {} if memo is None else memo
    key = (arr.shape, arr.tobytes())
    if key not in memo:
        memo[key] = _split_cubes(arr, nv, memo)
    out.extend((care | m, value | v) for m, v in memo[key])


def _split_cubes(arr, nv, memo):
    if not arr.any():
        return []
    if arr.all():
        return [(0, 0)]
    split = None
    for i in range(arr.ndim):
        if arr.shape[i] != 2:
            continue
        lo, hi = np.take(arr, 0, axis=i), np.take(arr, 1, axis=i)
        if np.array_equal(lo, hi):
            arr = np.expand_dims(lo, i)
        elif split is None:
            split = i
    bit = 1 << (nv - 1 - split)
    res = []
    for side in (0, 1):
        sub = np.expand_dims(np.take(arr, side, axis=split), split)
        _shannon_cubes(sub, nv, bit, bit * side, res, memo)
    return res


def _cube_text(alphabet, chosen):
    out = []
    for m, v in chosen:
        lits = []
        for b, name in enumerate(alphabet.variables):
            if m >> b & 1:
                lits.append(name if v >> b & 1 else "!" + name)
        out.append(" & ".join(lits) if lits else "true")
    return out


@dataclass(frozen=True)
class Lasso:
    """Ultimately periodic word ``prefix . cycle^omega``."""

    prefix: tuple
    cycle: tuple

    def __post_init__(self):
        object.__setattr__(self, "prefix", tuple(self.prefix))
        object.__setattr__(self, "cycle", tuple(self.cycle))
        if not self.cycle:
            raise ValueError("lasso cycle must be nonempty")


# --------------------------------------------------------------------------
# automata


@dataclass(frozen=True, eq=False)
class SpecAutomaton:
    """Deterministic complete automaton with optional priorities and rewards.

    ``reward_index[q, l]`` points into ``reward_values`` (exact rationals).
    """

    alphabet: Alphabet
    delta: np.ndarray
    initial: int = 0
    priority: tuple | None = None
    reward_index: np.ndarray | None = None
    reward_values: tuple = ()
    kind: str | None = None
    names: tuple | None = None
    overlaps: tuple = ()

    def __post_init__(self):
        delta = _frozen(self.delta, np.int64)
        if delta.ndim != 2 or delta.shape[1] != self.alphabet.size:
            raise AlphabetError(
                f"transition table shape {delta.shape} does not match "
                f"{self.alphabet.size} letters")
        object.__setattr__(self, "delta", delta)
        if self.reward_index is not None:
            ri = _frozen(self.reward_index, np.int64)
            if ri.shape != delta.shape:
                raise ValueError("reward table shape differs from transition table")
            object.__setattr__(self, "reward_index", ri)
            object.__setattr__(self, "reward_values",
                               tuple(Fraction(v) for v in self.reward_values))
        if self.priority is not None:
            object.__setattr__(self, "priority", tuple(int(p) for p in self.priority))
            if len(self.priority) != delta.shape[0]:
                raise ValueError("priority list length differs from state count")
        if self.names is None:
            object.__setattr__(self, "names", tuple(f"q{i}" for i in range(delta.shape[0])))
        else:
            object.__setattr__(self, "names", tuple(self.names))
        if not 0 <= self.initial < delta.shape[0]:
            raise ValueError(f"initial state {self.initial} out of range")

    @property
    def n_states(self) -> int:
        return self.delta.shape[0]

    @property
    def has_rewards(self) -> bool:
        return self.reward_index is not None

    @property
    def is_safety(self) -> bool:
        if self.priority is None:
            return False
        if self.kind is not None:
            return self.kind == "safety"
        return not _safety_shape_violations(self)

    def reward(self, state: int, letter) -> Fraction:
        if self.reward_index is None:
            raise ValueError("automaton has no rewards")
        return self.reward_values[self.reward_index[state, self.alphabet.index(letter)]]

    def reward_array(self) -> np.ndarray:
        """Transition rewards as floats (``nan`` where undefined)."""
        vals = np.array([float(v) for v in self.reward_values] + [np.nan])
        return vals[self.reward_index]

    def state_index(self, name) -> int:
        return self.names.index(name)

    @classmethod
    def from_transitions(cls, variables, states: Sequence, initial, transitions,
                         priorities=None, kind=None, strict=True):
        """Build from guarded transitions ``(src, guard, dst[, reward])``.

        States and ``initial`` may be given by name.  ``priorities`` is a list
        aligned with ``states`` or a mapping from names.
        """
        alphabet = variables if isinstance(variables, Alphabet) else Alphabet(tuple(variables))
        names = tuple(states)
        pos = {s: i for i, s in enumerate(names)}
        n, L = len(names), alphabet.size
        delta = np.full((n, L), -1, dtype=np.int64)
        has_reward = any(len(t) > 3 and t[3] is not None for t in transitions)
        ridx = np.full((n, L), -1, dtype=np.int64) if has_reward else None
        values: dict[Fraction, int] = {}
        overlaps = []
        for t in transitions:
            src, guard, dst = pos[t[0]], t[1], pos[t[2]]
            mask = alphabet.guard_mask(guard) if isinstance(guard, str) else _letter_mask(alphabet, guard)
            clash = mask & (delta[src] >= 0)
            for l in np.flatnonzero(clash):
                overlaps.append((src, int(l)))
            delta[src, mask & (delta[src] < 0)] = dst
            if has_reward:
                r = Fraction(t[3]) if len(t) > 3 and t[3] is not None else None
                if r is not None:
                    if r < 0:
                        raise ValueError(f"negative reward {r} on transition {t}")
                    k = values.setdefault(r, len(values))
                    ridx[src, mask & (ridx[src] < 0)] = k
        prio = None
        if priorities is not None:
            if isinstance(priorities, dict):
                prio = tuple(int(priorities[s]) for s in names)
            else:
                prio = tuple(int(p) for p in priorities)
        a = cls(alphabet, delta, pos[initial] if initial in pos else int(initial), prio,
                ridx, tuple(sorted(values, key=values.get)), kind, names, tuple(overlaps))
        if strict:
            v = validate(a)
            if v:
                raise ValidationError(v)
        return a

    def lift(self, alphabet: Alphabet) -> "SpecAutomaton":
        """The same automaton read over a larger alphabet (extra variables ignored)."""
        proj = alphabet.projection(self.alphabet)
        return SpecAutomaton(
            alphabet, self.delta[:, proj], self.initial, self.priority,
            None if self.reward_index is None else self.reward_index[:, proj],
            self.reward_values, self.kind, self.names)

    def with_kind(self, kind) -> "SpecAutomaton":
        return SpecAutomaton(self.alphabet, self.delta, self.initial, self.priority,
                             self.reward_index, self.reward_values, kind, self.names,
                             self.overlaps)


def _letter_mask(alphabet, letters):
    mask = np.zeros(alphabet.size, dtype=bool)
    for l in letters:
        mask[alphabet.index(l)] = True
    return mask


def _as_indices(alphabet: Alphabet, word) -> list[int]:
    return [alphabet.index(l) for l in word]


def run(a: SpecAutomaton, word) -> list[int]:
    """State sequence of ``a`` on a finite word (length ``|w| + 1``)."""
    q = a.initial
    out = [q]
    for l in _as_indices(a.alphabet, word):
        q = int(a.delta[q, l])
        if q < 0:
            raise ValidationError([Violation("incomplete", "run reached a missing transition")])
        out.append(q)
    return out


def mp_value_finite(a: SpecAutomaton, word) -> Fraction:
    """Average transition reward along the run on a nonempty finite word."""
    letters = _as_indices(a.alphabet, word)
    if not letters:
        raise ValueError("average reward of the empty word is undefined")
    if a.reward_index is None:
        raise ValueError("automaton has no rewards")
    q, total = a.initial, Fraction(0)
    for l in letters:
        total += a.reward_values[a.reward_index[q, l]]
        q = int(a.delta[q, l])
    return total / len(letters)


def _lasso_period(a: SpecAutomaton, prefix, cycle):
    """Run on ``prefix . cycle^omega``; returns the (state, letter) pairs of the period."""
    pre = _as_indices(a.alphabet, prefix)
    cyc = _as_indices(a.alphabet, cycle)
    if not cyc:
        raise ValueError("lasso cycle must be nonempty")
    q = a.initial
    for l in pre:
        q = int(a.delta[q, l])
    seen = {}
    trace = []
    pos = 0
    while (q, pos) not in seen:
        seen[(q, pos)] = len(trace)
        trace.append((q, cyc[pos]))
        q = int(a.delta[q, cyc[pos]])
        pos = (pos + 1) % len(cyc)
    return trace[seen[(q, pos)]:]


def mp_value_lasso(a: SpecAutomaton, prefix, cycle) -> Fraction:
    """Mean payoff (lim inf of prefix averages) of an ultimately periodic word."""
    if a.reward_index is None:
        raise ValueError("automaton has no rewards")
    period = _lasso_period(a, prefix, cycle)
    total = sum((a.reward_values[a.reward_index[q, l]] for q, l in period), Fraction(0))
    return total / len(period)


def accepts_lasso(a: SpecAutomaton, prefix, cycle) -> bool:
    if a.priority is None:
        raise ValueError("automaton has no priorities")
    period = _lasso_period(a, prefix, cycle)
    return min(a.priority[q] for q, _ in period) % 2 == 0


def _product(a: SpecAutomaton, b: SpecAutomaton):
    """Reachable synchronous product; returns (pairs, delta)."""
    if set(a.alphabet.variables) != set(b.alphabet.variables):
        raise AlphabetError("product of automata over different alphabets")
    if a.alphabet.variables != b.alphabet.variables:
        b = b.lift(a.alphabet)
    nb = b.n_states
    start = a.initial * nb + b.initial
    index = {start: 0}
    order = [start]
    rows = []
    i = 0
    while i < len(order):
        code = order[i]
        qa, qb = divmod(code, nb)
        succ = a.delta[qa] * nb + b.delta[qb]
        row = np.empty_like(succ)
        for c in np.unique(succ):
            c = int(c)
            if c not in index:
                index[c] = len(order)
                order.append(c)
            row[succ == c] = index[c]
        rows.append(row)
        i += 1
    pairs = [divmod(c, nb) for c in order]
    return pairs, np.array(rows, dtype=np.int64), b


def _check_complete(*autos):
    for x in autos:
        if (x.delta < 0).any():
            raise ValidationError([Violation("incomplete", "product of an incomplete automaton")])


def product_spec(a: SpecAutomaton, b: SpecAutomaton) -> SpecAutomaton:
    """Synchronous product: priorities from ``a``, transition rewards from ``b``."""
    _check_complete(a, b)
    pairs, delta, b = _product(a, b)
    rows = np.array([qa for qa, _ in pairs])
    cols = np.array([qb for _, qb in pairs])
    prio = None if a.priority is None else tuple(a.priority[q] for q in rows)
    ridx = None if b.reward_index is None else b.reward_index[cols]
    return SpecAutomaton(a.alphabet, delta, 0, prio, ridx, b.reward_values,
                         a.kind, tuple((a.names[x], b.names[y]) for x, y in pairs))


def product_sum(a: SpecAutomaton, b: SpecAutomaton) -> SpecAutomaton:
    """Product of two mean-payoff automata whose rewards are added pointwise."""
    _check_complete(a, b)
    pairs, delta, b = _product(a, b)
    rows = np.array([qa for qa, _ in pairs])
    cols = np.array([qb for _, qb in pairs])
    ra, rb = a.reward_index[rows], b.reward_index[cols]
    code = ra * len(b.reward_values) + rb
    uniq, inv = np.unique(code, return_inverse=True)
    values = tuple(a.reward_values[c // len(b.reward_values)] + b.reward_values[c % len(b.reward_values)]
                   for c in uniq)
    return SpecAutomaton(a.alphabet, delta, 0, None, inv.reshape(code.shape), values,
                         "meanpayoff", tuple((a.names[x], b.names[y]) for x, y in pairs))


def product_safety(a: SpecAutomaton, b: SpecAutomaton) -> SpecAutomaton:
    """Intersection of two safety automata (priority 1 iff either is 1)."""
    _check_complete(a, b)
    pairs, delta, b = _product(a, b)
    prio = tuple(max(a.priority[x], b.priority[y]) for x, y in pairs)
    return SpecAutomaton(a.alphabet, delta, 0, prio, None, (), "safety",
                         tuple((a.names[x], b.names[y]) for x, y in pairs))


def output_pusher(out_alphabet: Alphabet) -> SpecAutomaton:
    """One state per output letter; reading a letter moves to the state tagged with it."""
    L = out_alphabet.size
    delta = np.tile(np.arange(L), (L, 1))
    return SpecAutomaton(out_alphabet, delta, 0,
                         names=tuple(out_alphabet.format(i) for i in range(L)))


def state_reward_form(a: SpecAutomaton):
    """Move transition rewards onto target states.

    Every reachable state is split by the distinct rewards of its incoming
    transitions, so that the reward of a transition is a function of the state
    it enters.  The initial state reuses its first incoming copy when one
    exists (the reward assigned to it is never collected by a long-run
    average).  Returns ``(automaton, state_reward)``.
    """
    if a.reward_index is None:
        raise ValueError("automaton has no rewards")
    _check_complete(a)
    reach = _reachable_states(a)
    incoming: dict[int, set] = {}
    for q in reach:
        for t, k in zip(a.delta[q], a.reward_index[q]):
            incoming.setdefault(int(t), set()).add(int(k))
    copies = {}
    for q in sorted(incoming):
        for k in sorted(incoming[q], key=lambda k: a.reward_values[k]):
            copies[(q, k)] = len(copies)
    if a.initial in incoming:
        k0 = min(incoming[a.initial], key=lambda k: a.reward_values[k])
        init = copies[(a.initial, k0)]
    else:
        values = list(a.reward_values)
        if Fraction(0) not in values:
            values.append(Fraction(0))
        a = SpecAutomaton(a.alphabet, a.delta, a.initial, a.priority, a.reward_index,
                          tuple(values), a.kind, a.names)
        init = copies[(a.initial, values.index(Fraction(0)))] = len(copies)
    keys = sorted(copies, key=copies.get)
    delta = np.empty((len(keys), a.alphabet.size), dtype=np.int64)
    lookup = np.full((a.n_states, len(a.reward_values)), -1, dtype=np.int64)
    for (q, k), i in copies.items():
        lookup[q, k] = i
    for i, (q, _) in enumerate(keys):
        delta[i] = lookup[a.delta[q], a.reward_index[q]]
    ridx = np.array([a.reward_index[q] for q, _ in keys])
    prio = None if a.priority is None else tuple(a.priority[q] for q, _ in keys)
    names = tuple((a.names[q], str(a.reward_values[k])) for q, k in keys)
    out = SpecAutomaton(a.alphabet, delta, init, prio, ridx, a.reward_values, a.kind, names)
    state_reward = tuple(a.reward_values[k] for _, k in keys)
    return out, state_reward


def _reachable_states(a: SpecAutomaton) -> list[int]:
    seen = {a.initial}
    todo = [a.initial]
    while todo:
        q = todo.pop()
        for t in np.unique(a.delta[q]):
            t = int(t)
            if t >= 0 and t not in seen:
                seen.add(t)
                todo.append(t)
    return sorted(seen)


def _safety_shape_violations(a: SpecAutomaton) -> list[Violation]:
    out = []
    bad = sorted(set(a.priority) - {0, 1})
    if bad:
        out.append(Violation("safety-shape", f"priorities {bad} outside {{0,1}}"))
    for q in range(a.n_states):
        if a.priority[q] != 1:
            continue
        targets = {int(t) for t in np.unique(a.delta[q]) if t >= 0}
        for t in sorted(targets):
            if a.priority[t] == 0:
                out.append(Violation("safety-shape",
                                     f"priority-1 state {a.names[q]} reaches priority-0 state {a.names[t]}"))
    return out


# --------------------------------------------------------------------------
# Mealy machines


@dataclass(frozen=True, eq=False)
class MealyMachine:
    inputs: Alphabet
    outputs: Alphabet
    delta: np.ndarray
    out: np.ndarray
    initial: int = 0
    names: tuple | None = None

    def __post_init__(self):
        if set(self.inputs.variables) & set(self.outputs.variables):
            raise AlphabetError("input and output variables overlap")
        delta = _frozen(self.delta, np.int64)
        out = _frozen(self.out, np.int64)
        if delta.shape != out.shape or delta.ndim != 2 or delta.shape[1] != self.inputs.size:
            raise AlphabetError("machine tables do not match the input alphabet")
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "out", out)
        if self.names is None:
            object.__setattr__(self, "names", tuple(f"m{i}" for i in range(delta.shape[0])))
        else:
            object.__setattr__(self, "names", tuple(self.names))

    @property
    def n_states(self) -> int:
        return self.delta.shape[0]

    @property
    def joint(self) -> Alphabet:
        return self.inputs.union(self.outputs)

    @classmethod
    def from_transitions(cls, inputs, outputs, states, initial, transitions, strict=True):
        """Transitions are ``(src, input_guard, dst, output_letter)``; the output is
        an iterable of true output variables."""
        inputs = inputs if isinstance(inputs, Alphabet) else Alphabet(tuple(inputs))
        outputs = outputs if isinstance(outputs, Alphabet) else Alphabet(tuple(outputs))
        names = tuple(states)
        pos = {s: i for i, s in enumerate(names)}
        delta = np.full((len(names), inputs.size), -1, dtype=np.int64)
        out = np.full_like(delta, -1)
        for src, guard, dst, o in transitions:
            mask = inputs.guard_mask(guard) if isinstance(guard, str) else _letter_mask(inputs, guard)
            free = mask & (delta[pos[src]] < 0)
            delta[pos[src], free] = pos[dst]
            out[pos[src], free] = outputs.index(o)
        m = cls(inputs, outputs, delta, out, pos[initial], names)
        if strict:
            v = validate(m)
            if v:
                raise ValidationError(v)
        return m

    def joint_letters(self, joint: Alphabet | None = None) -> np.ndarray:
        """``(state, input)`` -> index of ``input | output`` in the joint alphabet."""
        joint = joint or self.joint
        return joint.embedding(self.inputs)[None, :] | joint.embedding(self.outputs)[self.out]

    def step(self, state: int, letter) -> tuple[int, int]:
        i = self.inputs.index(letter)
        return int(self.delta[state, i]), int(self.out[state, i])


def mealy_outcome(m: MealyMachine, word) -> list[frozenset]:
    """Joint letters ``w_i | lambda(rho_i, w_i)`` produced on an input word."""
    q = m.initial
    res = []
    for l in _as_indices(m.inputs, word):
        res.append(m.inputs.letter(l) | m.outputs.letter(int(m.out[q, l])))
        q = int(m.delta[q, l])
    return res


def io_equivalent(m1: MealyMachine, m2: MealyMachine):
    """``None`` if both machines produce the same outputs on every input word,
    else a shortest distinguishing input word (list of input letters)."""
    if set(m1.inputs.variables) != set(m2.inputs.variables) or \
            set(m1.outputs.variables) != set(m2.outputs.variables):
        raise AlphabetError("machines have different interfaces")
    in_map = m1.inputs.projection(m2.inputs)
    out_map = m2.outputs.projection(m1.outputs)
    start = (m1.initial, m2.initial)
    parent = {start: None}
    todo = deque([start])
    while todo:
        p, q = todo.popleft()
        for l in range(m1.inputs.size):
            l2 = int(in_map[l])
            if m1.out[p, l] != out_map[m2.out[q, l2]]:
                word = [l]
                node = (p, q)
                while parent[node] is not None:
                    node, letter = parent[node]
                    word.append(letter)
                return [m1.inputs.letter(x) for x in reversed(word)]
            nxt = (int(m1.delta[p, l]), int(m2.delta[q, l2]))
            if nxt not in parent:
                parent[nxt] = ((p, q), l)
                todo.append(nxt)
    return None


def equivalent_state_classes(m: MealyMachine) -> list[list[int]]:
    """Blocks of behaviorally equivalent states (partition refinement)."""
    block = {q: tuple(m.out[q]) for q in range(m.n_states)}
    while True:
        ids = {}
        for q in range(m.n_states):
            ids.setdefault(block[q], len(ids))
        numbered = {q: ids[block[q]] for q in range(m.n_states)}
        refined = {q: (numbered[q],) + tuple(numbered[int(t)] for t in m.delta[q])
                   for q in range(m.n_states)}
        if len(set(refined.values())) == len(ids):
            break
        block = refined
    groups: dict = {}
    for q in range(m.n_states):
        groups.setdefault(numbered[q], []).append(q)
    return sorted(groups.values())


def minimize(m: MealyMachine) -> MealyMachine:
    """Merge behaviorally equivalent states (reachable part only)."""
    classes = equivalent_state_classes(m)
    rep = {q: i for i, c in enumerate(classes) for q in c}
    delta = np.array([[rep[int(t)] for t in m.delta[c[0]]] for c in classes], dtype=np.int64)
    out = np.array([m.out[c[0]] for c in classes], dtype=np.int64)
    merged = MealyMachine(m.inputs, m.outputs, delta, out, rep[m.initial],
                          tuple("+".join(str(m.names[q]) for q in c) for c in classes))
    return restrict_reachable(merged)


def restrict_reachable(m: MealyMachine) -> MealyMachine:
    order = [m.initial]
    index = {m.initial: 0}
    i = 0
    while i < len(order):
        for t in m.delta[order[i]]:
            t = int(t)
            if t not in index:
                index[t] = len(order)
                order.append(t)
        i += 1
    delta = np.array([[index[int(t)] for t in m.delta[q]] for q in order], dtype=np.int64)
    return MealyMachine(m.inputs, m.outputs, delta, m.out[order], 0,
                        tuple(m.names[q] for q in order))


# --------------------------------------------------------------------------
# validation


def validate(x) -> list[Violation]:
    """Determinism/completeness (and safety shape) violations; empty iff valid."""
    out = []
    if isinstance(x, MealyMachine):
        for q, l in zip(*np.nonzero(x.delta < 0)):
            out.append(Violation("incomplete", f"state {x.names[q]} has no move on {x.inputs.format(l)}"))
        for q, l in zip(*np.nonzero((x.out < 0) | (x.out >= x.outputs.size))):
            out.append(Violation("incomplete", f"state {x.names[q]} has no output on {x.inputs.format(l)}"))
        if ((x.delta >= x.n_states)).any():
            out.append(Violation("range", "transition to an unknown state"))
        return out
    a: SpecAutomaton = x
    for q, l in a.overlaps:
        out.append(Violation("nondeterministic",
                             f"state {a.names[q]} has several transitions on {a.alphabet.format(l)}"))
    for q, l in zip(*np.nonzero(a.delta < 0)):
        out.append(Violation("incomplete", f"state {a.names[q]} has no transition on {a.alphabet.format(l)}"))
    if (a.delta >= a.n_states).any():
        out.append(Violation("range", "transition to an unknown state"))
    if a.reward_index is not None:
        for q, l in zip(*np.nonzero((a.reward_index < 0) & (a.delta >= 0))):
            out.append(Violation("incomplete", f"transition ({a.names[q]}, {a.alphabet.format(l)}) has no reward"))
    if a.priority is not None:
        if min(a.priority, default=0) < 0:
            out.append(Violation("priority", "negative priority"))
        if a.kind == "safety":
            out.extend(_safety_shape_violations(a))
    if a.kind in ("safety", "parity") and a.priority is None:
        out.append(Violation("priority", f"{a.kind} automaton without priorities"))
    if a.kind == "meanpayoff" and a.reward_index is None:
        out.append(Violation("reward", "mean-payoff automaton without rewards"))
    return out


# --------------------------------------------------------------------------
# DOT


def _dot_name(x) -> str:
    if isinstance(x, tuple):
        return "".join(_dot_name(y) for y in x)
    return str(x)


def automaton_to_dot(a: SpecAutomaton) -> str:
    lines = ["digraph automaton {", "  rankdir=LR;", '  __init [shape=point, label=""];']
    for q in range(a.n_states):
        lab = _dot_name(a.names[q])
        if a.priority is not None:
            lab += f"\\np={a.priority[q]}"
        lines.append(f'  s{q} [shape=circle, label="{lab}"];')
    lines.append(f"  __init -> s{a.initial};")
    for q in range(a.n_states):
        groups: dict = {}
        for l in range(a.alphabet.size):
            t = int(a.delta[q, l])
            if t < 0:
                continue
            r = None if a.reward_index is None else a.reward_values[a.reward_index[q, l]]
            groups.setdefault((t, r), []).append(l)
        for (t, r), letters in sorted(groups.items(), key=lambda kv: kv[0][0]):
            label = " | ".join(guard_cover(a.alphabet, letters)) if len(letters) <= 4096 else f"{len(letters)} letters"
            if r is not None:
                label += f" ({r})"
            lines.append(f'  s{q} -> s{t} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def machine_to_dot(m: MealyMachine, annotate_equivalent: bool = True) -> str:
    lines = ["digraph machine {", "  rankdir=LR;", '  __init [shape=point, label=""];']
    for q in range(m.n_states):
        lines.append(f'  s{q} [shape=circle, label="{_dot_name(m.names[q])}"];')
    lines.append(f"  __init -> s{m.initial};")
    for q in range(m.n_states):
        groups: dict = {}
        for l in range(m.inputs.size):
            groups.setdefault((int(m.delta[q, l]), int(m.out[q, l])), []).append(l)
        for (t, o), letters in sorted(groups.items()):
            guard = " | ".join(guard_cover(m.inputs, letters))
            outs = [v if int(o) >> i & 1 else "!" + v for i, v in enumerate(m.outputs.variables)]
            lines.append(f'  s{q} -> s{t} [label="{guard} / {" & ".join(outs)}"];')
    if annotate_equivalent:
        for block in equivalent_state_classes(m):
            for a, b in zip(block, block[1:]):
                lines.append(f'  s{a} -> s{b} [style=dotted, dir=none, label="equiv"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
