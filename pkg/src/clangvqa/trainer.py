"""Training loop, evaluation and metric reports."""
from __future__ import annotations

import contextlib
import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import numkit as nk
from .adversarial import Discriminator, PriorSampler, loss_discriminator, loss_generator
from .checkpoint import load_checkpoint, save_checkpoint
from .contrastive import info_nce, kl_match
from .data_synth import QUESTION_TYPES, QASample, SyntheticDataset
from .errors import CheckpointError, ContractError, NumericError, TrainingError
from .event_graph import adjacency
from .model import Batch, CLanGNetwork
from .text_qa import pad_sequences, qa_loss

LOSS_TERMS = ("l_d", "l_g", "l_n", "l_kl", "l_qa")
CSV_COLUMNS = ("epoch", "split", "acc_all", "acc_causal", "acc_temporal", "acc_descriptive",
               *LOSS_TERMS, "total")
BETAS = (0.9, 0.999)
WEIGHT_DECAY = 0.01
EVAL_BATCH = 64


@dataclass
class TrainConfig:
    d: int = 64
    P: int = 8
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0
    tau: float = 0.1
    adv: bool = True
    contrastive: bool = True
    qa: bool = True
    encoder_depth: int = 2
    symmetric_nce: bool = False

    def validate(self) -> "TrainConfig":
        if not self.tau > 0:
            raise ContractError(f"tau must be positive, got {self.tau}")
        if self.batch_size < 1:
            raise ContractError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.epochs < 0 or self.P < 0 or self.d < 1:
            raise ContractError("epochs and P must be nonnegative and d positive")
        if self.encoder_depth not in (1, 2):
            raise ContractError(f"encoder_depth must be 1 or 2, got {self.encoder_depth}")
        if not self.lr > 0:
            raise ContractError(f"learning rate must be positive, got {self.lr}")
        return self

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, payload: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(payload) - names)
        if unknown:
            raise ContractError(f"unknown config keys: {unknown}")
        return cls(**payload).validate()

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainConfig":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass
class LossBundle:
    l_d: float = 0.0
    l_g: float = 0.0
    l_n: float = 0.0
    l_kl: float = 0.0
    l_qa: float = 0.0
    total: float = 0.0

    @classmethod
    def from_terms(cls, terms: dict[str, float]) -> "LossBundle":
        total = 0.0
        for name in LOSS_TERMS:
            if name in terms:
                total += terms[name]
        return cls(**terms, total=total)

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in (*LOSS_TERMS, "total"))


@dataclass
class MetricsRow:
    epoch: int
    split: str
    acc_all: float
    acc_causal: float
    acc_temporal: float
    acc_descriptive: float
    losses: LossBundle
    wall_time: float = 0.0
    counts: dict = field(default_factory=dict)

    def csv_values(self) -> list[str]:
        values = [str(self.epoch), self.split]
        values += [_fmt(v) for v in (self.acc_all, self.acc_causal, self.acc_temporal,
                                     self.acc_descriptive)]
        values += [_fmt(v) for v in self.losses.as_tuple()]
        return values

    def to_json(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "losses"}
        out.update(asdict(self.losses))
        return out

    @classmethod
    def from_json(cls, payload: dict) -> "MetricsRow":
        losses = LossBundle(**{k: payload[k] for k in (*LOSS_TERMS, "total")})
        keep = {f.name for f in fields(cls)} - {"losses"}
        return cls(**{k: payload[k] for k in keep if k in payload}, losses=losses)


class MetricsLog:
    """Per-epoch metric rows, kept in (epoch, split) order."""

    def __init__(self, rows: Sequence[MetricsRow] = ()):
        self.rows: list[MetricsRow] = []
        for row in rows:
            self.append(row)

    def append(self, row: MetricsRow) -> None:
        if self.rows:
            last = self.rows[-1]
            if (row.epoch, _split_rank(row.split)) <= (last.epoch, _split_rank(last.split)):
                raise ContractError("metric rows must be strictly epoch-ordered")
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def split(self, name: str) -> list[MetricsRow]:
        return [r for r in self.rows if r.split == name]

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text("".join(json.dumps(r.to_json(), sort_keys=True) + "\n" for r in self.rows))
        return path

    @classmethod
    def load(cls, path: str | Path) -> "MetricsLog":
        lines = Path(path).read_text().splitlines()
        return cls([MetricsRow.from_json(json.loads(line)) for line in lines if line.strip()])


def _split_rank(split: str) -> int:
    return {"train": 0, "val": 1}.get(split, 2)


def _fmt(x: float) -> str:
    return repr(float(x))


# --------------------------------------------------------------------------
# batching


class PreparedSplit:
    """Samples of one split stacked into arrays, adjacency included."""

    def __init__(self, samples: Sequence[QASample], dtype="float32"):
        if not samples:
            raise ContractError("cannot prepare an empty split")
        self.X = np.stack([s.features for s in samples]).astype(dtype)
        self.A = np.stack([adjacency(s.features) for s in samples]).astype(dtype)
        q_len = max(len(s.question) for s in samples)
        c_len = max(len(c) for s in samples for c in s.candidates)
        self.question = pad_sequences([s.question for s in samples], q_len)
        self.candidates = np.stack([pad_sequences(s.candidates, c_len) for s in samples])
        self.gold = np.array([s.gold for s in samples], dtype=np.int64)
        self.question_type = np.array([s.question_type for s in samples])

    def __len__(self):
        return len(self.gold)

    def batch(self, idx) -> Batch:
        idx = np.asarray(idx)
        return Batch(self.X[idx], self.A[idx], self.question[idx], self.candidates[idx],
                     self.gold[idx], list(self.question_type[idx]))


def accuracy_row(correct: np.ndarray, qtypes: np.ndarray, epoch: int, split: str,
                 losses: LossBundle, wall_time: float = 0.0) -> MetricsRow:
    correct = np.asarray(correct, dtype=bool)
    accs, counts = {}, {}
    for qt in QUESTION_TYPES:
        mask = qtypes == qt
        counts[qt] = int(mask.sum())
        accs[qt] = float(correct[mask].mean()) if mask.any() else 0.0
    return MetricsRow(epoch, split, float(correct.mean()), accs["causal"], accs["temporal"],
                      accs["descriptive"], losses, wall_time, counts)


# --------------------------------------------------------------------------
# model state


@dataclass
class Checkpoint:
    config: TrainConfig
    dims: dict            # d_in, M, vocab_size
    state: dict           # parameter name -> array ("net." / "disc." prefixes)
    epoch: int = 0
    val_accuracy: float = 0.0

    def meta(self) -> dict:
        return {
            "config": self.config.to_json(),
            "dims": self.dims,
            "epoch": self.epoch,
            "val_accuracy": self.val_accuracy,
            "optimizer": {"name": "adamw", "betas": list(BETAS), "weight_decay": WEIGHT_DECAY,
                          "eps": 1e-8},
        }

    def save(self, path: str | Path) -> Path:
        return save_checkpoint(path, self.meta(), self.state)

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        meta, state = load_checkpoint(path)
        try:
            config = TrainConfig.from_json(meta["config"])
            return cls(config, dict(meta["dims"]), state, meta["epoch"], meta["val_accuracy"])
        except (KeyError, TypeError, ContractError) as exc:
            raise CheckpointError(f"checkpoint metadata unusable: {exc}") from exc

    def build(self) -> tuple[CLanGNetwork, Discriminator]:
        net, disc = build_models(self.config, **self.dims)
        try:
            net.load_state_dict(_strip(self.state, "net."))
            disc.load_state_dict(_strip(self.state, "disc."))
        except (KeyError, ValueError) as exc:
            raise CheckpointError(f"checkpoint does not match its configuration: {exc}") from exc
        return net, disc


def _strip(state: dict, prefix: str) -> dict:
    return {k[len(prefix):]: v for k, v in state.items() if k.startswith(prefix)}


def build_models(config: TrainConfig, d_in: int, M: int, vocab_size: int):
    rng = np.random.default_rng(config.seed)
    with nk.precision("float32"):
        net = CLanGNetwork(rng, d_in, config.d, M, config.P, vocab_size, config.encoder_depth)
        disc = Discriminator(rng, config.d)
    return net, disc


def snapshot(config: TrainConfig, dims: dict, net, disc, epoch: int, acc: float) -> Checkpoint:
    state = {f"net.{k}": v for k, v in net.state_dict().items()}
    state.update({f"disc.{k}": v for k, v in disc.state_dict().items()})
    return Checkpoint(config, dict(dims), state, epoch, acc)


# --------------------------------------------------------------------------
# one iteration


def _finite(value: nk.Tensor, name: str, iteration: int) -> float:
    v = value.item()
    if not math.isfinite(v):
        raise TrainingError(f"non-finite {name} ({v}) at iteration {iteration}")
    return v


@contextlib.contextmanager
def _naming(name: str, iteration: int):
    """Re-raise numeric failures inside one loss term with its name and iteration."""
    try:
        yield
    except NumericError as exc:
        raise TrainingError(f"non-finite {name} at iteration {iteration}: {exc}") from exc


def compute_losses(net, disc, batch: Batch, config: TrainConfig, prior: PriorSampler,
                   disc_opt=None, iteration: int = 0):
    """Forward one batch and build every enabled loss term.

    With ``disc_opt`` the discriminator takes its step on L_D before L_G is
    formed.  Returns the forward pass, the graph-side objective (a tensor, or
    None when nothing is enabled) and the float-valued terms.
    """
    with _naming("forward pass", iteration):
        out = net(batch)
    terms: dict[str, float] = {}
    main = []
    if config.qa:
        with _naming("l_qa", iteration):
            l_qa = qa_loss(out.logits, batch.gold)
        terms["l_qa"] = _finite(l_qa, "l_qa", iteration)
        main.append(l_qa)
    if config.contrastive and len(batch) >= 2:
        with _naming("l_n", iteration):
            l_n = info_nce(out.X_q, out.X_g, config.tau, config.symmetric_nce)
        with _naming("l_kl", iteration):
            l_kl = kl_match(out.X_q, out.X_g)
        terms["l_n"] = _finite(l_n, "l_n", iteration)
        terms["l_kl"] = _finite(l_kl, "l_kl", iteration)
        main += [l_n, l_kl]
    if config.adv and out.final_level is not None:
        fake = out.final_nodes()
        real = prior.sample(fake.shape[0])
        with nk.Tape(), _naming("l_d", iteration):
            l_d = loss_discriminator(disc, real, fake)
        terms["l_d"] = _finite(l_d, "l_d", iteration)
        if disc_opt is not None:
            nk.backward(l_d)
            disc_opt.step()
            disc.zero_grad()
        with _naming("l_g", iteration):
            l_g = loss_generator(disc, fake)
        terms["l_g"] = _finite(l_g, "l_g", iteration)
        main.append(l_g)
    objective = None
    for term in main:
        objective = term if objective is None else objective + term
    return out, objective, terms


# --------------------------------------------------------------------------
# training / evaluation


@dataclass
class TrainResult:
    checkpoint: Checkpoint        # best validation accuracy
    final: Checkpoint             # state after the last epoch
    log: MetricsLog
    iteration_losses: list[LossBundle]


def train(config: TrainConfig, dataset: SyntheticDataset, out_dir: str | Path | None = None,
          max_iterations: int | None = None, progress=None) -> TrainResult:
    """Train on ``dataset.train``, validating after every epoch.

    ``max_iterations`` stops early (used by determinism checks); ``progress``
    is called with every finished metrics row.
    """
    config.validate()
    train_split = PreparedSplit(dataset.train)
    val_split = PreparedSplit(dataset.val)
    dims = {"d_in": int(train_split.X.shape[-1]), "M": int(train_split.X.shape[1]),
            "vocab_size": dataset.vocab.size}
    net, disc = build_models(config, **dims)
    opt = nk.AdamW(net.parameters(), lr=config.lr, betas=BETAS, weight_decay=WEIGHT_DECAY)
    disc_opt = nk.AdamW(disc.parameters(), lr=config.lr, betas=BETAS, weight_decay=WEIGHT_DECAY)
    prior = PriorSampler(config.d, seed=[config.seed, 1])
    log = MetricsLog()
    history: list[LossBundle] = []
    best = snapshot(config, dims, net, disc, 0, -1.0)
    iteration = 0
    n = len(train_split)
    with nk.precision("float32"):
        for epoch in range(1, config.epochs + 1):
            started = time.perf_counter()
            order = np.random.default_rng([config.seed, epoch]).permutation(n)
            correct, qtypes, bundles = [], [], []
            for lo in range(0, n, config.batch_size):
                idx = order[lo:lo + config.batch_size]
                batch = train_split.batch(idx)
                with nk.Tape():
                    out, objective, terms = compute_losses(net, disc, batch, config, prior,
                                                           disc_opt, iteration)
                if objective is not None:
                    nk.backward(objective)
                    opt.step()
                opt.zero_grad()
                bundle = LossBundle.from_terms(terms)
                bundles.append((bundle, len(idx)))
                history.append(bundle)
                correct.append(out.logits.data.argmax(-1) == batch.gold)
                qtypes.append(train_split.question_type[idx])
                iteration += 1
                if max_iterations is not None and iteration >= max_iterations:
                    break
            train_row = accuracy_row(np.concatenate(correct), np.concatenate(qtypes), epoch,
                                     "train", _weighted_mean(bundles),
                                     time.perf_counter() - started)
            log.append(train_row)
            if progress:
                progress(train_row)
            if max_iterations is not None and iteration >= max_iterations:
                break
            val_row = evaluate_split(net, disc, val_split, config, epoch)
            val_row.wall_time = time.perf_counter() - started
            log.append(val_row)
            if progress:
                progress(val_row)
            if val_row.acc_all > best.val_accuracy:
                best = snapshot(config, dims, net, disc, epoch, val_row.acc_all)
    last_val = log.split("val")
    final = snapshot(config, dims, net, disc, log.rows[-1].epoch if log.rows else 0,
                     last_val[-1].acc_all if last_val else 0.0)
    if best.val_accuracy < 0:
        best = final
    result = TrainResult(best, final, log, history)
    if out_dir is not None:
        write_run(result, out_dir)
    return result


def _weighted_mean(bundles: list[tuple[LossBundle, int]]) -> LossBundle:
    total = sum(w for _, w in bundles)
    terms = {}
    for name in LOSS_TERMS:
        terms[name] = sum(getattr(b, name) * w for b, w in bundles) / total
    bundle = LossBundle.from_terms(terms)
    return bundle


def evaluate_split(net, disc, split: PreparedSplit, config: TrainConfig,
                   epoch: int = 0, name: str = "val") -> MetricsRow:
    """Accuracy and (unstepped) loss terms on a prepared split."""
    started = time.perf_counter()
    prior = PriorSampler(config.d, seed=[config.seed, 2])
    correct, bundles = [], []
    with nk.precision("float32"):
        for lo in range(0, len(split), EVAL_BATCH):
            idx = np.arange(lo, min(len(split), lo + EVAL_BATCH))
            batch = split.batch(idx)
            out, _, terms = compute_losses(net, disc, batch, config, prior)
            correct.append(out.logits.data.argmax(-1) == batch.gold)
            bundles.append((LossBundle.from_terms(terms), len(idx)))
    return accuracy_row(np.concatenate(correct), split.question_type, epoch, name,
                        _weighted_mean(bundles), time.perf_counter() - started)


def evaluate(checkpoint: Checkpoint | str | Path, dataset: SyntheticDataset,
             split: str = "val") -> MetricsRow:
    if not isinstance(checkpoint, Checkpoint):
        checkpoint = Checkpoint.load(checkpoint)
    prepared = PreparedSplit(dataset.split(split))
    expected = {"d_in": prepared.X.shape[-1], "M": prepared.X.shape[1],
                "vocab_size": dataset.vocab.size}
    for key, value in expected.items():
        if checkpoint.dims.get(key) != value:
            raise CheckpointError(f"checkpoint {key}={checkpoint.dims.get(key)} but data has {value}")
    net, disc = checkpoint.build()
    return evaluate_split(net, disc, prepared, checkpoint.config, checkpoint.epoch, split)


# --------------------------------------------------------------------------
# outputs


def write_run(result: TrainResult, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return {
        "checkpoint": result.checkpoint.save(out / "best.clgc"),
        "final": result.final.save(out / "final.clgc"),
        "log": result.log.save(out / "metrics.jsonl"),
    }


def metrics_csv(log: MetricsLog) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in log:
        writer.writerow(row.csv_values())
    return buf.getvalue()


_COLORS = {"l_d": "#1f77b4", "l_g": "#ff7f0e", "l_n": "#2ca02c", "l_kl": "#d62728",
           "l_qa": "#9467bd", "total": "#333333"}


def losses_svg(log: MetricsLog, split: str = "train", width: int = 640, height: int = 360) -> str:
    """Line chart of every loss term against epoch."""
    rows = log.split(split) or list(log)
    epochs = [r.epoch for r in rows]
    series = {name: [getattr(r.losses, name) for r in rows] for name in (*LOSS_TERMS, "total")}
    pad = 48
    lo_e, hi_e = min(epochs), max(epochs)
    values = [v for vs in series.values() for v in vs]
    lo_v, hi_v = min(0.0, min(values)), max(values)
    span_e = (hi_e - lo_e) or 1
    span_v = (hi_v - lo_v) or 1.0

    def xy(e, v):
        x = pad + (e - lo_e) / span_e * (width - 2 * pad)
        y = height - pad - (v - lo_v) / span_v * (height - 2 * pad)
        return f"{x:.2f},{y:.2f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="{height - 12}" text-anchor="middle" font-size="12">epoch</text>',
        f'<text x="{pad - 6}" y="{pad}" text-anchor="end" font-size="10">{hi_v:.3g}</text>',
        f'<text x="{pad - 6}" y="{height - pad}" text-anchor="end" font-size="10">{lo_v:.3g}</text>',
        f'<text x="{pad}" y="{height - pad + 14}" text-anchor="middle" font-size="10">{lo_e}</text>',
        f'<text x="{width - pad}" y="{height - pad + 14}" text-anchor="middle" font-size="10">{hi_e}</text>',
    ]
    for i, (name, vs) in enumerate(series.items()):
        color = _COLORS[name]
        points = " ".join(xy(e, v) for e, v in zip(epochs, vs))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>')
        parts.append(f'<text x="{width - pad + 4}" y="{pad + 14 * i}" font-size="10" '
                     f'fill="{color}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(log: MetricsLog, out_dir: str | Path, formats: Sequence[str] = ("csv", "svg")):
    if not len(log):
        raise ContractError("cannot report an empty metrics log")
    unknown = set(formats) - {"csv", "svg"}
    if unknown:
        raise ContractError(f"unknown report formats: {sorted(unknown)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    if "csv" in formats:
        written["csv"] = out / "metrics.csv"
        written["csv"].write_text(metrics_csv(log))
    if "svg" in formats:
        written["svg"] = out / "losses.svg"
        written["svg"].write_text(losses_svg(log))
    return written
