import csv
import io
import json
import math
from dataclasses import replace

import numpy as np
import pytest

from clangvqa import numkit as nk
from clangvqa.adversarial import PriorSampler
from clangvqa.data_synth import DatasetSpec, generate_dataset
from clangvqa.errors import CheckpointError, ContractError, TrainingError
from clangvqa.trainer import (
    CSV_COLUMNS, Checkpoint, LossBundle, MetricsLog, MetricsRow, PreparedSplit, TrainConfig,
    build_models, compute_losses, emit_report, evaluate, metrics_csv, train, write_run,
)


class TestConfig:
    def test_defaults(self):
        c = TrainConfig()
        assert (c.d, c.P, c.lr, c.batch_size, c.epochs, c.tau) == (64, 8, 1e-3, 32, 30, 0.1)
        assert c.adv and c.contrastive and c.qa and not c.symmetric_nce

    def test_json_round_trip(self):
        c = TrainConfig(P=0, adv=False, seed=2**64 - 1)
        assert TrainConfig.from_json(json.loads(json.dumps(c.to_json()))) == c

    @pytest.mark.parametrize("bad", [dict(tau=0.0), dict(batch_size=0), dict(encoder_depth=3),
                                     dict(lr=-1.0)])
    def test_invalid(self, bad):
        with pytest.raises(ContractError):
            replace(TrainConfig(), **bad).validate()

    def test_unknown_key(self):
        with pytest.raises(ContractError, match="unknown"):
            TrainConfig.from_json({"dd": 3})


class TestLossBundle:
    def test_total_is_sum_of_present_terms(self):
        b = LossBundle.from_terms({"l_qa": 0.1, "l_n": 0.2, "l_d": 0.3})
        assert b.total == 0.3 + 0.2 + 0.1 or b.total == ((0.3 + 0.2) + 0.1)
        assert b.l_g == 0.0 and b.l_kl == 0.0

    def test_qa_only(self, tiny_dataset):
        config = TrainConfig(d=16, P=2, adv=False, contrastive=False, seed=1)
        net, disc = build_models(config, tiny_dataset.d_in, 48, tiny_dataset.vocab.size)
        batch = PreparedSplit(tiny_dataset.train[:8]).batch(np.arange(8))
        with nk.precision("float32"), nk.Tape():
            _, objective, terms = compute_losses(net, disc, batch, config, PriorSampler(16))
        bundle = LossBundle.from_terms(terms)
        assert set(terms) == {"l_qa"}
        assert bundle.total == bundle.l_qa == objective.item()


class TestMetricsLog:
    def row(self, epoch, split, **kw):
        return MetricsRow(epoch, split, 0.5, 0.5, 0.5, 0.5, LossBundle.from_terms({"l_qa": 1.0}), **kw)

    def test_strict_order(self):
        log = MetricsLog([self.row(1, "train"), self.row(1, "val"), self.row(2, "train")])
        with pytest.raises(ContractError):
            log.append(self.row(2, "train"))
        with pytest.raises(ContractError):
            log.append(self.row(1, "val"))

    def test_save_load(self, tmp_path):
        log = MetricsLog([self.row(1, "train", wall_time=1.5), self.row(1, "val")])
        again = MetricsLog.load(log.save(tmp_path / "m.jsonl"))
        assert [r.to_json() for r in again] == [r.to_json() for r in log]


@pytest.fixture(scope="module")
def run(tiny_dataset):
    config = TrainConfig(d=16, P=2, batch_size=8, epochs=2, seed=3)
    return config, train(config, tiny_dataset)


class TestTrain:
    def test_log_shape(self, run):
        config, result = run
        assert [(r.epoch, r.split) for r in result.log] == [(1, "train"), (1, "val"),
                                                            (2, "train"), (2, "val")]
        for r in result.log:
            assert 0 <= r.acc_all <= 1
            for name in ("l_d", "l_g", "l_n", "l_kl", "l_qa"):
                assert math.isfinite(getattr(r.losses, name))
        assert len(result.iteration_losses) == 2 * 4

    def test_best_checkpoint(self, run):
        _, result = run
        val = result.log.split("val")
        assert result.checkpoint.val_accuracy == max(r.acc_all for r in val)
        assert result.final.epoch == 2

    def test_per_type_accuracies_average_to_overall(self, run):
        for r in run[1].log:
            n = sum(r.counts.values())
            weighted = sum(getattr(r, f"acc_{q}") * c for q, c in r.counts.items()) / n
            assert weighted == pytest.approx(r.acc_all, abs=1e-12)

    def test_evaluate_is_deterministic(self, run, tiny_dataset):
        _, result = run
        a = evaluate(result.final, tiny_dataset, "val")
        b = evaluate(result.final, tiny_dataset, "val")
        assert replace(a, wall_time=0) == replace(b, wall_time=0)
        assert a.acc_all == result.log.split("val")[-1].acc_all

    def test_checkpoint_file_round_trip(self, run, tmp_path, tiny_dataset):
        _, result = run
        paths = write_run(result, tmp_path)
        loaded = Checkpoint.load(paths["final"])
        assert loaded.config == result.final.config
        assert all(loaded.state[k].tobytes() == v.tobytes() for k, v in result.final.state.items())
        assert loaded.save(tmp_path / "again.clgc").read_bytes() == paths["final"].read_bytes()
        meta = json.loads(paths["final"].read_bytes()[16:16 + int.from_bytes(
            paths["final"].read_bytes()[8:12], "little")])
        assert meta["optimizer"] == {"name": "adamw", "betas": [0.9, 0.999],
                                     "weight_decay": 0.01, "eps": 1e-8}

    def test_dimension_mismatch(self, run):
        _, result = run
        other = generate_dataset(DatasetSpec(num_samples=8, K=2, L=6, N=5, seed=1))
        with pytest.raises(CheckpointError):
            evaluate(result.final, other, "val")

    def test_parameter_mismatch(self, run):
        _, result = run
        broken = replace(result.final, config=replace(result.final.config, d=8))
        with pytest.raises(CheckpointError):
            broken.build()


def test_first_iterations_are_bitwise_reproducible(tiny_dataset):
    config = TrainConfig(d=16, P=2, batch_size=8, epochs=3, seed=11)
    a = train(config, tiny_dataset, max_iterations=10).iteration_losses
    b = train(config, tiny_dataset, max_iterations=10).iteration_losses
    assert len(a) == 10
    assert [x.as_tuple() for x in a] == [x.as_tuple() for x in b]
    c = train(replace(config, seed=12), tiny_dataset, max_iterations=10).iteration_losses
    assert [x.as_tuple() for x in a] != [x.as_tuple() for x in c]


def test_nan_aborts_with_term_and_iteration(tiny_dataset):
    config = TrainConfig(d=16, P=2, batch_size=8, epochs=1, seed=0)
    net, disc = build_models(config, tiny_dataset.d_in, 48, tiny_dataset.vocab.size)
    net.head.fuse.bias.data[:] = np.nan
    batch = PreparedSplit(tiny_dataset.train[:8]).batch(np.arange(8))
    with pytest.raises(TrainingError, match=r"l_qa.*iteration 17"):
        with nk.precision("float32"), nk.Tape():
            compute_losses(net, disc, batch, config, PriorSampler(16), iteration=17)


def test_discriminator_steps_only_with_optimizer(tiny_dataset):
    config = TrainConfig(d=16, P=2, seed=0)
    net, disc = build_models(config, tiny_dataset.d_in, 48, tiny_dataset.vocab.size)
    before = {k: v.copy() for k, v in disc.state_dict().items()}
    batch = PreparedSplit(tiny_dataset.train[:8]).batch(np.arange(8))
    with nk.precision("float32"):
        compute_losses(net, disc, batch, config, PriorSampler(16))
    assert all(np.array_equal(before[k], v) for k, v in disc.state_dict().items())


def test_overfits_eight_samples():
    data = generate_dataset(DatasetSpec(num_samples=9, num_val=1, seed=21))
    config = TrainConfig(batch_size=8, epochs=200, seed=0)
    result = train(config, data)
    assert sum(1 for r in result.log.split("train")) == 200
    assert evaluate(result.final, data, "train").acc_all == 1.0


def test_untrained_model_is_at_chance(corpus):
    spec, vocab, samples = corpus
    from clangvqa.data_synth import SyntheticDataset

    data = SyntheticDataset(spec, vocab, samples[:2], samples[:2000])
    config = TrainConfig(seed=4)
    net, disc = build_models(config, data.d_in, 160, vocab.size)
    from clangvqa.trainer import snapshot
    ckpt = snapshot(config, {"d_in": data.d_in, "M": 160, "vocab_size": vocab.size}, net, disc, 0, 0)
    assert abs(evaluate(ckpt, data, "val").acc_all - 0.25) <= 0.03


class TestReport:
    def test_csv(self, run, tmp_path):
        _, result = run
        written = emit_report(result.log, tmp_path, ["csv"])
        text = written["csv"].read_text()
        rows = list(csv.reader(io.StringIO(text)))
        assert tuple(rows[0]) == CSV_COLUMNS
        assert len(rows) == len(result.log) + 1
        for row in rows[1:]:
            values = dict(zip(CSV_COLUMNS, row))
            terms = [float(values[k]) for k in ("l_d", "l_g", "l_n", "l_kl", "l_qa")]
            assert float(values["total"]) == pytest.approx(sum(terms), rel=1e-12)

    def test_svg(self, run, tmp_path):
        _, result = run
        svg = emit_report(result.log, tmp_path, ["svg"])["svg"].read_text()
        assert svg.startswith("<svg") and svg.count("<polyline") == 6
        import xml.etree.ElementTree as ET
        ET.fromstring(svg)

    def test_reemission_is_byte_identical(self, run, tmp_path):
        _, result = run
        a = emit_report(result.log, tmp_path / "a")
        b = emit_report(MetricsLog.load(result.log.save(tmp_path / "m.jsonl")), tmp_path / "b")
        for key in a:
            assert a[key].read_bytes() == b[key].read_bytes()

    def test_empty_log(self, tmp_path):
        with pytest.raises(ContractError):
            emit_report(MetricsLog(), tmp_path)

    def test_unwritable(self, run, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError):
            emit_report(run[1].log, blocker / "sub")

    def test_metrics_csv_matches_file(self, run, tmp_path):
        _, result = run
        assert emit_report(result.log, tmp_path, ["csv"])["csv"].read_text() == metrics_csv(result.log)
