"""Reference answerers that read the event script instead of the features.

Both oracles parse the question text against the script; neither looks at the
sample's gold index.  The single-entity oracle is restricted to what the one
entity named in the question shows over time (its type, its own actions and
the effects it receives) and guesses uniformly among the candidates that view
cannot rule out.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_synth import EFFECT_WORDS, PREDICATE_WORDS, TYPE_WORDS, EventScript, QASample
from .errors import ContractError
from .text_qa import Vocabulary


@dataclass(frozen=True)
class ParsedQuestion:
    qtype: str
    type_id: int
    predicate: int | None


def parse_question(tokens: list[str]) -> ParsedQuestion:
    words = list(tokens)
    try:
        if len(words) == 5 and words[:3] == ["what", "did", "the"] and words[4] == "do":
            return ParsedQuestion("descriptive", TYPE_WORDS.index(words[3]), None)
        if len(words) == 5 and words[:3] == ["why", "did", "the"]:
            return ParsedQuestion("causal", TYPE_WORDS.index(words[3]), EFFECT_WORDS.index(words[4]))
        if len(words) == 6 and words[:4] == ["what", "happened", "after", "the"]:
            return ParsedQuestion("temporal", TYPE_WORDS.index(words[4]),
                                  PREDICATE_WORDS.index(words[5]))
    except ValueError:
        pass
    raise ContractError(f"unrecognised question: {' '.join(words)!r}")


def _entity_of_type(script: EventScript, type_id: int) -> int:
    matches = [e for e, t in enumerate(script.entity_types) if t == type_id]
    if len(matches) != 1:
        raise ContractError(f"type {TYPE_WORDS[type_id]!r} names {len(matches)} entities")
    return matches[0]


def script_answer(script: EventScript, question: ParsedQuestion) -> list[str]:
    """Answer tokens derived from the script alone."""
    types = script.entity_types
    entity = _entity_of_type(script, question.type_id)
    if question.qtype == "descriptive":
        (event,) = script.actions_of(entity)[:1]
        return [PREDICATE_WORDS[event.predicate]]
    if question.qtype == "causal":
        hits = [e for e in script.effects_on(entity) if e.predicate == question.predicate]
        if len(hits) != 1:
            raise ContractError("causal question does not match exactly one event")
        return [TYPE_WORDS[types[hits[0].agent]]]
    events = script.events
    idx = [i for i, e in enumerate(events) if e.agent == entity and e.predicate == question.predicate]
    if len(idx) != 1 or idx[0] + 1 >= len(events):
        raise ContractError("temporal question has no following event")
    nxt = events[idx[0] + 1]
    return [TYPE_WORDS[types[nxt.agent]], PREDICATE_WORDS[nxt.predicate]]


def script_oracle(sample: QASample, vocab: Vocabulary) -> int:
    """Index of the candidate matching the script-derived answer."""
    parsed = parse_question(vocab.decode(sample.question).split())
    answer = script_answer(sample.script, parsed)
    hits = [i for i, c in enumerate(sample.candidates) if vocab.decode(c).split() == answer]
    if len(hits) != 1:
        raise ContractError(f"{len(hits)} candidates match the script answer {answer}")
    return hits[0]


@dataclass(frozen=True)
class EntityView:
    """Everything one entity's own trajectory reveals."""

    type_id: int
    actions: tuple[int, ...]
    effects: tuple[int, ...]


def entity_view(script: EventScript, entity: int) -> EntityView:
    return EntityView(
        type_id=script.entity_types[entity],
        actions=tuple(e.predicate for e in script.actions_of(entity)),
        effects=tuple(e.predicate for e in script.effects_on(entity)),
    )


def _plausible(view: EntityView, parsed: ParsedQuestion, words: list[str]) -> bool:
    own_type = TYPE_WORDS[view.type_id]
    if parsed.qtype == "descriptive":
        return words == [PREDICATE_WORDS[p] for p in view.actions[:1]]
    if parsed.qtype == "causal":
        # the agent is someone else
        return words[0] != own_type
    seen = {PREDICATE_WORDS[p] for p in view.actions + view.effects}
    # predicates are distinct within a video, so the next one is not among those seen
    return words[0] != own_type and words[1] not in seen


def single_entity_oracle(sample: QASample, vocab: Vocabulary, rng: np.random.Generator) -> int:
    parsed = parse_question(vocab.decode(sample.question).split())
    entity = _entity_of_type(sample.script, parsed.type_id)
    view = entity_view(sample.script, entity)
    options = [i for i, c in enumerate(sample.candidates)
               if _plausible(view, parsed, vocab.decode(c).split())]
    if not options:
        options = list(range(len(sample.candidates)))
    return int(rng.choice(options))
