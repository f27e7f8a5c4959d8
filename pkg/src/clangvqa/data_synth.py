"""Synthetic multi-object event videos with scripted ground truth.

Each video shows ``E`` entities over ``K * L`` frames.  The entities form an
event chain: entity 0 acts on entity 1, which then acts on entity 2, and so on,
each event with its own predicate.  An agent's appearance carries its
predicate's action signature while it acts; a patient carries the predicate's
effect signature from the moment it is hit until the end of the video.  Boxes
follow the agents as they approach their patients.

Questions come in three templates:

* descriptive -- "what did the <x> do": the predicate ``x`` performed;
* causal      -- "why did the <y> <effect>": the type of the agent that acted on ``y``;
* temporal    -- "what happened after the <x> <pred>": the next event of the chain.

Causal and temporal answers depend on a second entity besides the one named
in the question.  Wrong candidates name types and predicates absent from the
video whenever the vocabulary leaves enough of them, falling back to
bystanders and other events of the chain otherwise.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import SpecError
from .event_graph import BOX_DIM, ObjectObservation
from .feature_file import read_feature_file, write_feature_file
from .text_qa import Vocabulary

TYPE_WORDS = ["boy", "girl", "dog", "cat", "ball", "box", "hoop", "kite", "car", "chair"]
PREDICATE_WORDS = ["push", "kick", "throw", "lift", "pull", "hit", "roll", "shake",
                   "drag", "toss", "tap", "flip"]
EFFECT_WORDS = ["fall", "fly", "spin", "rise", "slide", "tip", "wobble", "bounce",
                "skid", "hop", "turn", "topple"]
QUESTION_TYPES = ("causal", "temporal", "descriptive")
NUM_CANDIDATES = 4


@dataclass
class DatasetSpec:
    num_samples: int = 2350
    K: int = 4
    L: int = 8
    N: int = 5
    E: int = 4
    P: int = 8
    sigma: float = 0.1
    seed: int = 0
    d1: int = 16
    num_types: int = 8
    num_val: int | None = None
    vocab_size: int = 128
    prototype_norm: float = 2.0
    signature_norm: float = 1.5

    def validate(self) -> None:
        if self.N < self.E:
            raise SpecError(f"N={self.N} detections per frame cannot hold E={self.E} entities")
        if self.P < 4:
            raise SpecError(f"need at least 4 predicates, got P={self.P}")
        if self.E < 3:
            raise SpecError("the event chain needs at least 3 entities")
        if not self.E < self.num_types <= len(TYPE_WORDS):
            raise SpecError(f"num_types must exceed E and be at most {len(TYPE_WORDS)}")
        if self.num_types + self.P > self.d1:
            raise SpecError(f"{self.num_types} types and {self.P} predicates need d1 >= "
                            f"{self.num_types + self.P}, got {self.d1}")
        if self.P > len(PREDICATE_WORDS):
            raise SpecError(f"at most {len(PREDICATE_WORDS)} predicates are supported")
        if self.E - 1 > self.P:
            raise SpecError("each event of the chain needs a distinct predicate")
        if self.K * self.L < 3 * (self.E - 1):
            raise SpecError("too few frames for the event chain")
        if self.num_samples < 2:
            raise SpecError("need at least two samples for a train/val split")

    @property
    def frames(self) -> int:
        return self.K * self.L

    @property
    def split_sizes(self) -> tuple[int, int]:
        n_val = self.num_val if self.num_val is not None else int(round(0.15 * self.num_samples))
        n_val = min(max(n_val, 1), self.num_samples - 1)
        return self.num_samples - n_val, n_val

    @classmethod
    def from_json(cls, payload: dict) -> "DatasetSpec":
        known = {k: v for k, v in payload.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class Event:
    agent: int
    predicate: int
    patients: list[int]
    start: int
    end: int  # exclusive


@dataclass
class EventScript:
    entity_types: list[int]
    events: list[Event]
    causal_links: list[tuple[int, int]]
    boxes: np.ndarray | None = field(default=None, repr=False)  # E x frames x 5

    def actions_of(self, entity: int) -> list[Event]:
        return [e for e in self.events if e.agent == entity]

    def effects_on(self, entity: int) -> list[Event]:
        return [e for e in self.events if entity in e.patients]

    def to_json(self) -> dict:
        return {
            "entity_types": list(self.entity_types),
            "events": [asdict(e) for e in self.events],
            "causal_links": [list(link) for link in self.causal_links],
        }

    @classmethod
    def from_json(cls, payload: dict) -> "EventScript":
        return cls(
            entity_types=list(payload["entity_types"]),
            events=[Event(**e) for e in payload["events"]],
            causal_links=[tuple(link) for link in payload["causal_links"]],
        )


@dataclass
class QASample:
    sample_id: int
    features: np.ndarray  # M x (d1 + d2), float32, clip-major / frame / object order
    question: list[int]
    candidates: list[list[int]]
    gold: int
    question_type: str
    script: EventScript
    # question payload in script terms, used by the oracles
    query: dict = field(default_factory=dict)

    def observations(self, K: int, L: int, N: int, d1: int) -> list[ObjectObservation]:
        obs = []
        for m, row in enumerate(self.features.astype(np.float64)):
            frame = m // N
            obs.append(ObjectObservation(row[:d1], row[d1:], frame, frame // L))
        return obs


@dataclass
class SyntheticDataset:
    spec: DatasetSpec
    vocab: Vocabulary
    train: list[QASample]
    val: list[QASample]

    @property
    def d_in(self) -> int:
        return self.spec.d1 + BOX_DIM

    def split(self, name: str) -> list[QASample]:
        if name not in ("train", "val"):
            raise ValueError(f"unknown split {name!r}")
        return self.train if name == "train" else self.val


def build_vocabulary(spec: DatasetSpec) -> Vocabulary:
    words = ["what", "did", "the", "do", "why", "happened", "after"]
    words += TYPE_WORDS[: spec.num_types]
    words += PREDICATE_WORDS[: spec.P] + EFFECT_WORDS[: spec.P]
    return Vocabulary(words, size=spec.vocab_size)


class _World:
    """Dataset-level appearance prototypes and predicate signatures.

    Types and predicates occupy disjoint directions of one orthonormal basis of
    the roi space, so a signature never masquerades as an object type.  A
    patient's effect signature points along its predicate's action direction.
    """

    def __init__(self, spec: DatasetSpec, rng: np.random.Generator):
        basis, _ = np.linalg.qr(rng.standard_normal((spec.d1, spec.d1)))
        self.prototypes = spec.prototype_norm * basis[: spec.num_types]
        self.actions = spec.signature_norm * basis[spec.d1 - spec.P:]
        self.effects = self.actions.copy()


def _script(spec: DatasetSpec, rng: np.random.Generator) -> EventScript:
    E, T = spec.E, spec.frames
    types = rng.choice(spec.num_types, size=E, replace=False).tolist()
    preds = rng.choice(spec.P, size=E - 1, replace=False).tolist()
    n_events = E - 1
    seg = T / n_events
    events = []
    for k in range(n_events):
        lo, hi = int(round(k * seg)), int(round((k + 1) * seg))
        length = int(rng.integers(max(2, (hi - lo) // 2), hi - lo))
        start = int(rng.integers(lo, hi - length + 1))
        events.append(Event(agent=k, predicate=preds[k], patients=[k + 1],
                            start=start, end=start + length))
    links = [(k, k + 1) for k in range(n_events - 1)]
    return EventScript(types, events, links, _trajectories(spec, events, rng))


def _trajectories(spec: DatasetSpec, events: list[Event], rng: np.random.Generator) -> np.ndarray:
    E, T = spec.E, spec.frames
    size = rng.uniform(0.1, 0.25, size=(E, 2))
    centre = np.empty((E, T, 2))
    centre[:, 0] = rng.uniform(0.15, 0.85, size=(E, 2))
    for t in range(1, T):
        centre[:, t] = centre[:, t - 1]
        for ev in events:
            p = ev.patients[0]
            if ev.start <= t < ev.end:
                # agent closes the gap to its patient by the end of the event
                remaining = ev.end - t
                centre[ev.agent, t] += (centre[p, t - 1] - centre[ev.agent, t - 1]) / remaining
            if ev.end <= t < ev.end + 4:
                direction = centre[p, t - 1] - centre[ev.agent, t - 1]
                direction /= np.linalg.norm(direction) + 1e-9
                centre[p, t] += 0.04 * direction
    centre = np.clip(centre, 0.0, 1.0)
    half = size[:, None, :] / 2
    lo = np.clip(centre - half, 0.0, 1.0)
    hi = np.clip(centre + half, 0.0, 1.0)
    area = (hi[..., 0] - lo[..., 0]) * (hi[..., 1] - lo[..., 1])
    return np.concatenate([lo, hi, area[..., None]], axis=-1)


def _features(spec: DatasetSpec, world: _World, script: EventScript,
              rng: np.random.Generator) -> np.ndarray:
    E, T, N = spec.E, spec.frames, spec.N
    roi = np.repeat(world.prototypes[script.entity_types][:, None, :], T, axis=1)
    for ev in script.events:
        roi[ev.agent, ev.start:ev.end] += world.actions[ev.predicate]
        for p in ev.patients:
            roi[p, ev.end:] += world.effects[ev.predicate]
    roi = roi + spec.sigma * rng.standard_normal(roi.shape)
    rows = np.concatenate([roi, script.boxes], axis=-1)  # E x T x (d1 + d2)
    out = np.zeros((T, N, spec.d1 + BOX_DIM))
    for t in range(T):
        # detector output order is arbitrary; padded slots stay zero
        slots = rng.permutation(N)[:E]
        out[t, slots] = rows[:, t]
    return out.reshape(T * N, -1).astype(np.float32)


def _distractors(rng: np.random.Generator, preferred: list, fallback: list, k: int) -> list:
    """``k`` distinct picks, drawn from ``preferred`` first."""
    picks = rng.permutation(preferred)[:k].tolist()
    if len(picks) < k:
        picks += rng.permutation(fallback)[: k - len(picks)].tolist()
    return [int(x) for x in picks]


def _question(spec: DatasetSpec, script: EventScript, vocab: Vocabulary,
              rng: np.random.Generator, qtype: str):
    tw, pw, ew = TYPE_WORDS, PREDICATE_WORDS, EFFECT_WORDS
    types = script.entity_types
    events = script.events
    used = [e.predicate for e in events]
    # distractors come from outside the video whenever the vocabulary allows
    absent_types = [t for t in range(spec.num_types) if t not in types]
    absent_preds = [p for p in range(spec.P) if p not in used]
    k = NUM_CANDIDATES - 1

    if qtype == "descriptive":
        ev = events[int(rng.integers(len(events)))]
        text = f"what did the {tw[types[ev.agent]]} do"
        other = [p for p in used if p != ev.predicate]
        picks = _distractors(rng, absent_preds, other, k)
        answers = [[pw[ev.predicate]]] + [[pw[p]] for p in picks]
        query = {"entity": ev.agent}
    elif qtype == "causal":
        ev = events[int(rng.integers(len(events)))]
        patient = ev.patients[0]
        text = f"why did the {tw[types[patient]]} {ew[ev.predicate]}"
        bystanders = [types[e] for e in range(spec.E) if e not in (patient, ev.agent)]
        picks = _distractors(rng, absent_types, bystanders, k)
        answers = [[tw[types[ev.agent]]]] + [[tw[t]] for t in picks]
        query = {"entity": patient, "predicate": ev.predicate}
    else:
        i = int(rng.integers(len(events) - 1))
        ev, nxt = events[i], events[i + 1]
        text = f"what happened after the {tw[types[ev.agent]]} {pw[ev.predicate]}"
        other_types = [types[e] for e in range(spec.E) if e not in (ev.agent, nxt.agent)]
        other_preds = [p for p in used if p not in (ev.predicate, nxt.predicate)]
        t_picks = _distractors(rng, absent_types, other_types, k)
        p_picks = _distractors(rng, absent_preds, other_preds, k)
        answers = [[tw[types[nxt.agent]], pw[nxt.predicate]]]
        answers += [[tw[t], pw[p]] for t, p in zip(t_picks, p_picks)]
        query = {"entity": ev.agent, "predicate": ev.predicate, "event": i}

    order = rng.permutation(NUM_CANDIDATES)
    candidates = [vocab.encode(answers[j]) for j in order]
    gold_slot = int(np.flatnonzero(order == 0)[0])
    return vocab.encode(text), candidates, gold_slot, query


def _sample(spec: DatasetSpec, world: _World, vocab: Vocabulary, sample_id: int,
            rng: np.random.Generator) -> QASample:
    script = _script(spec, rng)
    features = _features(spec, world, script, rng)
    qtype = QUESTION_TYPES[int(rng.integers(len(QUESTION_TYPES)))]
    question, candidates, gold, query = _question(spec, script, vocab, rng, qtype)
    return QASample(sample_id, features, question, candidates, gold, qtype, script, query)


def iter_samples(spec: DatasetSpec) -> Iterator[QASample]:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    world = _World(spec, rng)
    vocab = build_vocabulary(spec)
    for i in range(spec.num_samples):
        yield _sample(spec, world, vocab, i, rng)


def generate_dataset(spec: DatasetSpec, out_dir: str | Path | None = None) -> SyntheticDataset:
    """Generate the train/val splits; with ``out_dir`` also write their feature files."""
    spec.validate()
    samples = list(iter_samples(spec))
    n_train, _ = spec.split_sizes
    dataset = SyntheticDataset(spec, build_vocabulary(spec), samples[:n_train], samples[n_train:])
    if out_dir is not None:
        write_dataset(dataset, out_dir)
    return dataset


def dataset_header(dataset: SyntheticDataset, split: str) -> dict:
    s = dataset.spec
    return {
        "kind": "dataset",
        "split": split,
        "K": s.K, "L": s.L, "N": s.N, "d1": s.d1, "d2": BOX_DIM,
        "spec": asdict(s),
        "vocabulary": dataset.vocab.to_json(),
    }


def sample_record(sample: QASample) -> dict:
    return {
        "kind": "sample",
        "id": sample.sample_id,
        "question": sample.question,
        "candidates": sample.candidates,
        "gold": sample.gold,
        "question_type": sample.question_type,
        "script": sample.script.to_json(),
        "query": sample.query,
    }


def write_dataset(dataset: SyntheticDataset, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for split in ("train", "val"):
        samples = dataset.split(split)
        paths[split] = write_feature_file(
            out / split,
            dataset_header(dataset, split),
            [sample_record(s) for s in samples],
            [s.features for s in samples],
        )
    return paths


def read_samples(path: str | Path) -> Iterator[QASample]:
    """Stream the samples of one split (``<dir>/<split>`` without extension)."""
    _, records = read_feature_file(path)
    for record, features in records:
        yield QASample(
            sample_id=record["id"],
            features=features,
            question=list(record["question"]),
            candidates=[list(c) for c in record["candidates"]],
            gold=record["gold"],
            question_type=record["question_type"],
            script=EventScript.from_json(record["script"]),
            query=record["query"],
        )


def load_dataset(data_dir: str | Path) -> SyntheticDataset:
    data_dir = Path(data_dir)
    header, _ = read_feature_file(data_dir / "train", header_only=True)
    spec = DatasetSpec.from_json(header["spec"])
    vocab = Vocabulary.from_json(header["vocabulary"])
    return SyntheticDataset(spec, vocab, list(read_samples(data_dir / "train")),
                            list(read_samples(data_dir / "val")))


def load_spec_file(path: str | Path) -> DatasetSpec:
    return DatasetSpec.from_json(json.loads(Path(path).read_text()))
