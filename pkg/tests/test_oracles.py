import numpy as np
import pytest

from clangvqa.data_synth import DatasetSpec, Event, EventScript, build_vocabulary
from clangvqa.errors import ContractError
from clangvqa.oracles import (
    entity_view, parse_question, script_answer, script_oracle, single_entity_oracle,
)


def chain():
    # boy pushes dog, dog kicks ball, ball hits cat
    events = [Event(0, 0, [1], 0, 6), Event(1, 1, [2], 10, 16), Event(2, 5, [3], 20, 26)]
    return EventScript([0, 2, 4, 3], events, [(0, 1), (1, 2)])


class TestParse:
    def test_forms(self):
        assert parse_question("what did the dog do".split()).qtype == "descriptive"
        p = parse_question("why did the dog fall".split())
        assert (p.qtype, p.type_id, p.predicate) == ("causal", 2, 0)
        p = parse_question("what happened after the boy push".split())
        assert (p.qtype, p.type_id, p.predicate) == ("temporal", 0, 0)

    def test_unknown(self):
        with pytest.raises(ContractError):
            parse_question("how many balls".split())
        with pytest.raises(ContractError):
            parse_question("why did the unicorn fall".split())


class TestScriptAnswer:
    def test_descriptive(self):
        assert script_answer(chain(), parse_question("what did the dog do".split())) == ["kick"]

    def test_causal(self):
        assert script_answer(chain(), parse_question("why did the ball fly".split())) == ["dog"]

    def test_temporal(self):
        q = parse_question("what happened after the dog kick".split())
        assert script_answer(chain(), q) == ["ball", "hit"]

    def test_last_event_has_no_successor(self):
        with pytest.raises(ContractError):
            script_answer(chain(), parse_question("what happened after the ball hit".split()))


def test_entity_view():
    view = entity_view(chain(), 1)
    assert (view.type_id, view.actions, view.effects) == (2, (1,), (0,))


def test_oracles_on_generated_samples(small_dataset):
    vocab = small_dataset.vocab
    rng = np.random.default_rng(0)
    for s in small_dataset.train:
        assert script_oracle(s, vocab) == s.gold
        guess = single_entity_oracle(s, vocab, rng)
        assert 0 <= guess < len(s.candidates)
        if s.question_type == "descriptive":
            # one entity's own trajectory settles what it did
            assert guess == s.gold


def test_script_oracle_ignores_gold(small_dataset):
    from dataclasses import replace

    s = small_dataset.train[0]
    lied = replace(s, gold=(s.gold + 1) % 4)
    assert script_oracle(lied, small_dataset.vocab) == s.gold
