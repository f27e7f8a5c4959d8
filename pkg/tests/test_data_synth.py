import json
from collections import Counter
from dataclasses import replace

import numpy as np
import pytest

from clangvqa.data_synth import (
    NUM_CANDIDATES, QUESTION_TYPES, TYPE_WORDS, DatasetSpec, build_vocabulary, generate_dataset,
    iter_samples, load_dataset, load_spec_file, read_samples,
)
from clangvqa.errors import CorruptionError, FormatError, SpecError
from clangvqa.event_graph import build_graph
from clangvqa.feature_file import HEADER, read_feature_file, write_feature_file
from clangvqa.oracles import parse_question


def files(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.is_file()}


class TestSpec:
    def test_defaults(self):
        s = DatasetSpec()
        assert (s.K, s.L, s.N, s.E, s.P, s.sigma, s.d1, s.vocab_size) == (4, 8, 5, 4, 8, 0.1, 16, 128)

    @pytest.mark.parametrize("change", [dict(N=3, E=4), dict(P=3), dict(num_types=4),
                                        dict(d1=12), dict(num_samples=1)])
    def test_invalid(self, change):
        with pytest.raises(SpecError):
            replace(DatasetSpec(), **change).validate()

    def test_split_is_85_15(self):
        assert DatasetSpec(num_samples=2000).split_sizes == (1700, 300)
        assert DatasetSpec(num_samples=2350, num_val=350).split_sizes == (2000, 350)

    def test_spec_file(self, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text(json.dumps({"num_samples": 12, "sigma": 0.2}))
        spec = load_spec_file(path)
        assert spec.num_samples == 12 and spec.sigma == 0.2 and spec.K == 4


class TestSamples:
    def test_shapes(self, small_dataset):
        spec = small_dataset.spec
        for s in small_dataset.train[:5]:
            assert s.features.shape == (spec.K * spec.L * spec.N, spec.d1 + 5)
            assert s.features.dtype == np.float32
            assert len(s.candidates) == NUM_CANDIDATES
            assert s.question_type in QUESTION_TYPES

    def test_padding_rows(self, small_dataset):
        spec = small_dataset.spec
        for s in small_dataset.train[:5]:
            per_frame = s.features.reshape(spec.frames, spec.N, -1)
            zero = np.all(per_frame == 0, axis=-1).sum(axis=1)
            np.testing.assert_array_equal(zero, spec.N - spec.E)

    def test_script_invariants(self, small_dataset):
        spec = small_dataset.spec
        for s in small_dataset.train:
            for ev in s.script.events:
                assert 0 <= ev.start < ev.end <= spec.frames
                assert all(0 <= e < spec.E for e in [ev.agent, *ev.patients])
            for a, b in s.script.causal_links:
                assert 0 <= a < b < len(s.script.events)

    def test_candidates_distinct(self, small_dataset):
        for s in small_dataset.train:
            assert len({tuple(c) for c in s.candidates}) == NUM_CANDIDATES

    def test_relational_answers_name_another_entity(self, small_dataset):
        vocab = small_dataset.vocab
        for s in small_dataset.train:
            parsed = parse_question(vocab.decode(s.question).split())
            if parsed.qtype != "descriptive":
                answer = vocab.decode(s.candidates[s.gold]).split()
                assert answer[0] != TYPE_WORDS[parsed.type_id]

    def test_observations_build_a_valid_graph(self, small_dataset):
        spec = small_dataset.spec
        s = small_dataset.train[0]
        g = build_graph(s.observations(spec.K, spec.L, spec.N, spec.d1), spec.K, spec.L, spec.N)
        np.testing.assert_array_equal(g.X, s.features.astype(np.float64))
        assert np.all((g.A >= 0) & (g.A <= 1))

    def test_vocabulary_fits(self):
        vocab = build_vocabulary(DatasetSpec())
        assert len(vocab) <= 128


class TestCorpusStatistics:
    def test_gold_slots_uniform(self, corpus):
        _, _, samples = corpus
        counts = Counter(s.gold for s in samples)
        for slot in range(NUM_CANDIDATES):
            assert abs(counts[slot] / len(samples) - 0.25) <= 0.02

    def test_random_guess_near_chance(self, corpus):
        _, _, samples = corpus
        rng = np.random.default_rng(11)
        guesses = rng.integers(0, NUM_CANDIDATES, len(samples))
        acc = np.mean(guesses == np.array([s.gold for s in samples]))
        assert abs(acc - 0.25) <= 0.02

    def test_question_types_balanced(self, corpus):
        _, _, samples = corpus
        counts = Counter(s.question_type for s in samples)
        assert all(abs(counts[q] / len(samples) - 1 / 3) < 0.03 for q in QUESTION_TYPES)


class TestFiles:
    def test_same_seed_same_bytes(self, tmp_path):
        spec = DatasetSpec(num_samples=30, seed=9)
        generate_dataset(spec, tmp_path / "a")
        generate_dataset(spec, tmp_path / "b")
        assert files(tmp_path / "a") == files(tmp_path / "b")

    def test_different_seed_different_bytes(self, tmp_path):
        generate_dataset(DatasetSpec(num_samples=30, seed=1), tmp_path / "a")
        generate_dataset(DatasetSpec(num_samples=30, seed=2), tmp_path / "b")
        assert files(tmp_path / "a") != files(tmp_path / "b")

    def test_round_trip(self, tmp_path, small_dataset):
        from clangvqa.data_synth import write_dataset

        write_dataset(small_dataset, tmp_path)
        loaded = load_dataset(tmp_path)
        for a, b in zip(small_dataset.train + small_dataset.val, loaded.train + loaded.val):
            assert a.features.tobytes() == b.features.tobytes()
            assert (a.question, a.candidates, a.gold, a.question_type) == \
                   (b.question, b.candidates, b.gold, b.question_type)
            assert a.script.to_json() == b.script.to_json()
        assert loaded.spec == small_dataset.spec
        write_dataset(loaded, tmp_path / "again")
        assert files(tmp_path / "again") == files(tmp_path)

    def test_manifest_count_matches_header(self, tmp_path, small_dataset):
        from clangvqa.data_synth import write_dataset

        write_dataset(small_dataset, tmp_path)
        blob = (tmp_path / "train.clgf").read_bytes()
        magic, version, count, reserved = HEADER.unpack_from(blob)
        lines = (tmp_path / "train.jsonl").read_text().splitlines()
        assert (magic, version, reserved) == (b"CLGF", 1, 0)
        assert count == len(lines) == len(small_dataset.train) + 1

    def test_offsets_tile_the_blob(self, tmp_path, rng):
        arrays = [rng.normal(size=(3, 2)), rng.normal(size=(5, 2))]
        stem = write_feature_file(tmp_path / "x", {"kind": "dataset"}, [{"i": 0}, {"i": 1}], arrays)
        lines = [json.loads(l) for l in stem.with_suffix(".jsonl").read_text().splitlines()[1:]]
        assert lines[0]["offset"] == 16
        assert lines[1]["offset"] == lines[0]["offset"] + lines[0]["nbytes"]
        assert lines[1]["offset"] + lines[1]["nbytes"] == stem.with_suffix(".clgf").stat().st_size
        _, records = read_feature_file(stem)
        for (rec, arr), ref in zip(records, arrays):
            assert arr.tobytes() == ref.astype("<f4").tobytes()

    def _write(self, tmp_path, rng):
        return write_feature_file(tmp_path / "x", {"kind": "dataset"}, [{"i": 0}],
                                  [rng.normal(size=(4, 3))])

    def test_bad_magic(self, tmp_path, rng):
        stem = self._write(tmp_path, rng)
        path = stem.with_suffix(".clgf")
        blob = bytearray(path.read_bytes())
        blob[:4] = b"XXXX"
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError, match="magic"):
            read_feature_file(stem)

    def test_bad_version(self, tmp_path, rng):
        stem = self._write(tmp_path, rng)
        path = stem.with_suffix(".clgf")
        blob = bytearray(path.read_bytes())
        blob[4] = 9
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError, match="version"):
            read_feature_file(stem)

    def test_truncated_blob_reports_offset(self, tmp_path, rng):
        stem = self._write(tmp_path, rng)
        path = stem.with_suffix(".clgf")
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(CorruptionError) as info:
            read_feature_file(stem)
        assert info.value.offset == 16 + 48 - 8

    def test_trailing_bytes(self, tmp_path, rng):
        stem = self._write(tmp_path, rng)
        path = stem.with_suffix(".clgf")
        path.write_bytes(path.read_bytes() + b"\0" * 4)
        with pytest.raises(CorruptionError):
            read_feature_file(stem)

    def test_count_mismatch(self, tmp_path, rng):
        stem = self._write(tmp_path, rng)
        manifest = stem.with_suffix(".jsonl")
        manifest.write_text(manifest.read_text() + '{"i":1}\n')
        with pytest.raises(CorruptionError):
            read_feature_file(stem)

    def test_streaming_reader(self, tmp_path, small_dataset):
        from clangvqa.data_synth import write_dataset

        write_dataset(small_dataset, tmp_path)
        ids = [s.sample_id for s in read_samples(tmp_path / "val")]
        assert ids == [s.sample_id for s in small_dataset.val]


def test_iter_matches_generate():
    spec = DatasetSpec(num_samples=10, seed=4)
    a = list(iter_samples(spec))
    b = generate_dataset(spec)
    assert [s.features.tobytes() for s in a] == [s.features.tobytes() for s in b.train + b.val]
