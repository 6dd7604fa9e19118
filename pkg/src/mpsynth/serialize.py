"""JSON and DOT for automata, machines and labeled input chains."""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path

import numpy as np

from .automata import Alphabet, MealyMachine, SpecAutomaton, ValidationError, Violation, guard_cover, \
    validate
from .stochastic import MDP, ModelError, parse_probability


def _str_names(names):
    out = []
    for n in names:
        out.append(n if isinstance(n, str) else "_".join(_flat(n)))
    if len(set(out)) != len(out):
        out = [f"s{i}" for i in range(len(names))]
    return out


def _flat(x):
    if isinstance(x, tuple):
        for y in x:
            yield from _flat(y)
    else:
        yield str(x)


def _fraction_text(v: Fraction) -> str:
    return str(v.numerator) if v.denominator == 1 else str(v)


# --------------------------------------------------------------------------
# automata


def automaton_to_json(a: SpecAutomaton) -> dict:
    names = _str_names(a.names)
    trans = []
    for q in range(a.n_states):
        groups: dict = {}
        for l in range(a.alphabet.size):
            key = (int(a.delta[q, l]), None if a.reward_index is None else int(a.reward_index[q, l]))
            groups.setdefault(key, []).append(l)
        for (t, k), letters in sorted(groups.items(), key=lambda kv: kv[1][0]):
            for guard in guard_cover(a.alphabet, letters, disjoint=True):
                entry = {"from": names[q], "guard": guard, "to": names[t]}
                if k is not None:
                    entry["reward"] = _fraction_text(a.reward_values[k])
                trans.append(entry)
    out = {"type": "automaton", "kind": a.kind, "variables": list(a.alphabet.variables),
           "states": names, "initial": names[a.initial], "transitions": trans}
    if a.priority is not None:
        out["priorities"] = {n: p for n, p in zip(names, a.priority)}
    return out


def automaton_from_json(d: dict) -> SpecAutomaton:
    _expect(d, "automaton")
    trans = [(t["from"], t["guard"], t["to"], t.get("reward")) for t in d["transitions"]]
    if not any(len(t) > 3 and t[3] is not None for t in trans):
        trans = [t[:3] for t in trans]
    return SpecAutomaton.from_transitions(d["variables"], d["states"], d["initial"], trans,
                                          d.get("priorities"), d.get("kind"))


# --------------------------------------------------------------------------
# machines


def machine_to_json(m: MealyMachine) -> dict:
    names = _str_names(m.names)
    trans = []
    for q in range(m.n_states):
        groups: dict = {}
        for l in range(m.inputs.size):
            groups.setdefault((int(m.delta[q, l]), int(m.out[q, l])), []).append(l)
        for (t, o), letters in sorted(groups.items(), key=lambda kv: kv[1][0]):
            for guard in guard_cover(m.inputs, letters, disjoint=True):
                trans.append({"from": names[q], "guard": guard, "to": names[t],
                              "lambda": sorted(m.outputs.letter(o), key=m.outputs.variables.index)})
    return {"type": "machine", "inputs": list(m.inputs.variables),
            "outputs": list(m.outputs.variables), "states": names,
            "initial": names[m.initial], "transitions": trans}


def machine_from_json(d: dict) -> MealyMachine:
    _expect(d, "machine")
    trans = [(t["from"], t["guard"], t["to"], t.get("lambda", [])) for t in d["transitions"]]
    return MealyMachine.from_transitions(d["inputs"], d["outputs"], d["states"], d["initial"], trans)


# --------------------------------------------------------------------------
# labeled chains


def chain_to_json(env: MDP, alphabet: Alphabet) -> dict:
    names = _str_names(env.names)
    states = [{"name": n, "label": sorted(alphabet.letter(int(l)), key=alphabet.variables.index)}
              for n, l in zip(names, env.label)]
    trans = []
    for s in range(env.n):
        t, p = env.distribution(s)
        for tt, pp in zip(t, p):
            trans.append({"from": names[s], "to": names[int(tt)], "p": _prob_text(pp)})
    return {"type": "chain", "variables": list(alphabet.variables), "states": states,
            "initial": names[env.initial], "transitions": trans}


def _prob_text(p: float) -> str:
    """Decimal string when the (denominator-limited) value has a finite
    decimal expansion, else ``a/b``."""
    q = Fraction(float(p)).limit_denominator(10 ** 9)
    d, twos, fives = q.denominator, 0, 0
    while d % 2 == 0:
        d, twos = d // 2, twos + 1
    while d % 5 == 0:
        d, fives = d // 5, fives + 1
    digits = max(twos, fives, 1)
    if d != 1 or digits > 15:
        return f"{q.numerator}/{q.denominator}"
    return f"{q.numerator / q.denominator:.{digits}f}"


def chain_from_json(d: dict):
    """``(chain, alphabet)``; probabilities are parsed exactly and must sum to 1."""
    _expect(d, "chain")
    alphabet = Alphabet(tuple(d["variables"]))
    names = [s["name"] for s in d["states"]]
    pos = {n: i for i, n in enumerate(names)}
    label = [alphabet.index(s.get("label", [])) for s in d["states"]]
    rows: list = [[] for _ in names]
    for t in d["transitions"]:
        p = parse_probability(t["p"])
        if p > 0:
            rows[pos[t["from"]]].append((pos[t["to"]], p))
    for n, r in zip(names, rows):
        total = sum((p for _, p in r), Fraction(0))
        if total != 1:
            raise ModelError(f"distribution of {n} sums to {total}")
    edges = [[(t, float(p)) for t, p in r] for r in rows]
    env = MDP.from_lists(np.zeros(len(names), bool), edges, pos[d["initial"]],
                         label=np.array(label), names=tuple(names))
    return env, alphabet


def relabel(env: MDP, source: Alphabet, target: Alphabet) -> MDP:
    """Re-express chain labels over another ordering of the same variables."""
    if set(source.variables) != set(target.variables):
        raise ModelError(f"input chain variables {source.variables} differ from {target.variables}")
    return env.replace(label=target.embedding(source)[env.label])


def _expect(d, kind):
    if not isinstance(d, dict) or d.get("type") != kind:
        raise ValidationError([Violation("schema", f"expected a JSON object of type {kind!r}")])


# --------------------------------------------------------------------------
# files


def load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def save_json(obj: dict, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")


def load_any(path):
    d = load_json(path)
    kind = d.get("type") if isinstance(d, dict) else None
    if kind == "automaton":
        return automaton_from_json(d)
    if kind == "machine":
        return machine_from_json(d)
    if kind == "chain":
        return chain_from_json(d)
    raise ValidationError([Violation("schema", f"{path}: unknown document type {kind!r}")])


def chain_to_dot(env: MDP, alphabet: Alphabet | None = None) -> str:
    lines = ["digraph chain {", "  rankdir=LR;"]
    for s in range(env.n):
        lab = "" if env.label is None else (alphabet.format(int(env.label[s])) if alphabet else
                                            str(int(env.label[s])))
        lines.append(f'  n{s} [label="{env.names[s]}\\n{lab}"];')
    for s in range(env.n):
        t, p = env.distribution(s)
        for tt, pp in zip(t, p):
            lines.append(f'  n{s} -> n{int(tt)} [label="{pp:.4g}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def check_valid(x):
    v = validate(x)
    if v:
        raise ValidationError(v)
    return x
