import json
from fractions import Fraction

import numpy as np
import pytest

from mpsynth.automata import Alphabet, ValidationError, guard_cover
from mpsynth.benchmarks import BenchmarkSpec, gen_clients, machine_m2, response_automaton
from mpsynth.measure import iid_input_chain, system_value
from mpsynth.serialize import (
    _prob_text, automaton_from_json, automaton_to_json, chain_from_json, chain_to_dot,
    chain_to_json, load_any, machine_from_json, machine_to_json, relabel, save_json,
)
from mpsynth.stochastic import ModelError


def test_disjoint_cover_is_exact():
    rng = np.random.default_rng(50)
    alph = Alphabet(("a", "b", "c", "d"))
    for _ in range(50):
        letters = np.flatnonzero(rng.random(alph.size) < 0.5).tolist()
        guards = guard_cover(alph, letters, disjoint=True)
        hit = np.zeros(alph.size, int)
        for g in guards:
            hit += alph.guard_mask(g)
        assert (hit <= 1).all()
        assert np.flatnonzero(hit).tolist() == letters


def test_automaton_round_trip():
    qual, quant, env, inputs = gen_clients(BenchmarkSpec(2, response_bound=2))
    for a in (qual, quant, response_automaton(1, 3)):
        d = json.loads(json.dumps(automaton_to_json(a)))
        b = automaton_from_json(d)
        assert b.alphabet == a.alphabet
        assert (b.delta == a.delta).all()
        assert b.priority == a.priority
        if a.reward_index is not None:
            assert (b.reward_array() == a.reward_array()).all()


def test_machine_round_trip(tmp_path):
    m = machine_m2()
    save_json(machine_to_json(m), tmp_path / "m.json")
    m2 = load_any(tmp_path / "m.json")
    assert (m2.delta == m.delta).all() and (m2.out == m.out).all() and m2.initial == m.initial


def test_chain_round_trip_exact():
    env = iid_input_chain([Fraction(2, 5), Fraction(1, 3)])
    d = chain_to_json(env, Alphabet(("r1", "r2")))
    texts = {t["p"] for t in d["transitions"]}
    # products of 2/5 and 1/3 and their complements
    assert texts == {"0.2", "0.4", "2/15", "4/15"}
    env2, alph = chain_from_json(d)
    assert alph.variables == ("r1", "r2")
    assert np.allclose(env2.matrix().toarray(), env.matrix().toarray())
    assert "digraph" in chain_to_dot(env2, alph)


def test_prob_text():
    assert _prob_text(0.42) == "0.42"
    assert _prob_text(1 / 3) == "1/3"
    assert _prob_text(0.0625) == "0.0625"
    assert _prob_text(1.0) == "1.0"


def test_chain_must_sum_to_one():
    d = chain_to_json(iid_input_chain([0.5]), Alphabet(("r",)))
    d["transitions"][0]["p"] = "0.4"
    with pytest.raises(ModelError):
        chain_from_json(d)


def test_relabel_preserves_value():
    qual, quant, env, inputs = gen_clients(BenchmarkSpec(2))
    swapped = Alphabet(("r2", "r1"))
    env_sw = relabel(env, inputs, swapped)
    back = relabel(env_sw, swapped, inputs)
    assert (back.label == env.label).all()
    # a chain written over swapped variables is read back consistently
    d = chain_to_json(env_sw, swapped)
    env3, alph3 = chain_from_json(d)
    env3 = relabel(env3, alph3, inputs)
    m = machine_m2()
    assert system_value(m, qual, quant, env3) == pytest.approx(system_value(m, qual, quant, env))
    with pytest.raises(ModelError):
        relabel(env, inputs, Alphabet(("r1", "x")))


def test_bad_documents():
    with pytest.raises(ValidationError):
        automaton_from_json({"type": "machine"})
    with pytest.raises(ValidationError):
        machine_from_json({"type": "chain"})
    d = automaton_to_json(response_automaton(1, 2))
    d["transitions"].append(dict(d["transitions"][0], to="bad"))
    with pytest.raises(ValidationError):
        automaton_from_json(d)
