"""Training, evaluation, gradient checking and ablation sweeps."""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tn
from .checkpoint import Checkpoint
from .config import ModelConfig
from .ctc import beam_decode, greedy_decode
from .errors import ContractError, InfeasibleTargetError, MstnetError, NumericError, VocabMismatchError
from .frames import FeatureSequence
from .metrics import EditBreakdown, corpus_wer, markup, wer
from .model import MSTNet
from .optim import Adam, multistep_lr
from .synth import temporal_augment

log = logging.getLogger(__name__)

ABLATION_AXES = {
    "scales": "num_scales",
    "fc_layers": "fc_layers",
    "encoder": "encoder",
    "ctc_levels": "ctc_levels",
}


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_wer: float
    lr: float
    skipped: int = 0

    def line(self) -> str:
        return f"{self.epoch}\t{self.train_loss!r}\t{self.dev_wer!r}\t{self.lr!r}"


@dataclass
class TrainResult:
    checkpoint: Checkpoint  # state after the last completed epoch
    best: Checkpoint | None  # lowest dev WER seen in this run
    log: list = field(default_factory=list)
    skipped: int = 0


def model_from_checkpoint(ckpt: Checkpoint) -> MSTNet:
    model = MSTNet(ckpt.config)
    model.load_arrays(ckpt.params)
    return model


def snapshot(model: MSTNet, opt: Adam, epoch: int, rng: tn.Rng, extra: dict) -> Checkpoint:
    return Checkpoint(
        config=model.cfg,
        params=model.state_arrays(),
        adam_m={k: v.copy() for k, v in opt.state.m.items()},
        adam_v={k: v.copy() for k, v in opt.state.v.items()},
        adam_step=opt.state.step,
        epoch=epoch,
        rng_state=rng.get_state(),
        extra=copy.deepcopy(extra),
    )


def _check_vocab(cfg: ModelConfig, corpus):
    for s in corpus:
        if any(not 0 <= g < cfg.vocab_size for g in s.target):
            raise VocabMismatchError(f"sample {s.features.sample_id} has gloss ids outside vocab of {cfg.vocab_size}")


def train(config: ModelConfig, corpus, dev=None, *, resume: Checkpoint | None = None, stop_epoch=None, on_epoch=None) -> TrainResult:
    """Train on ``corpus``; dev WER (greedy) selects the best checkpoint.

    ``resume`` continues from a checkpoint's epoch, optimizer and RNG state.
    ``stop_epoch`` ends the run early (after that epoch) for split runs.
    """
    if not corpus:
        raise ContractError("training corpus is empty")
    cfg = (resume.config if resume is not None else config).validate()
    _check_vocab(cfg, corpus)
    model = MSTNet(cfg)
    params = model.named_parameters()
    opt = Adam(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    rng = tn.Rng([cfg.seed, 0x7A1])
    history, extra = [], {"best_dev_wer": None, "best_epoch": 0, "log": [], "skipped": 0}
    start = 0
    if resume is not None:
        model.load_arrays(resume.params)
        opt.state.step = resume.adam_step
        opt.state.m = {k: v.copy() for k, v in resume.adam_m.items()}
        opt.state.v = {k: v.copy() for k, v in resume.adam_v.items()}
        rng.set_state(resume.rng_state)
        start = resume.epoch
        extra = {**extra, **resume.extra}
        extra["log"] = list(extra["log"])
    dev_set = dev if dev else corpus
    best = None
    last = stop_epoch if stop_epoch is not None else cfg.epochs
    for epoch in range(start + 1, min(last, cfg.epochs) + 1):
        opt.lr = multistep_lr(cfg.lr, cfg.lr_drops, epoch)
        order = rng.permutation(len(corpus))
        losses, skipped = [], 0
        for b0 in range(0, len(order), cfg.batch_size):
            batch = [corpus[i] for i in order[b0 : b0 + cfg.batch_size]]
            opt.zero_grad()
            used = []
            batch_loss = 0.0
            for s in batch:
                seq = s.features
                if cfg.aug_frac > 0:
                    aug = temporal_augment(seq, rng, cfg.aug_frac, cfg.downsample)
                    if _feasible(model, aug, s.target):
                        seq = aug
                try:
                    loss = model.loss(seq, s.target, training=True, rng=rng)
                except InfeasibleTargetError as exc:
                    skipped += 1
                    log.warning("skipping sample %s: %s", s.features.sample_id, exc)
                    continue
                value = loss.item()
                if not math.isfinite(value):
                    raise NumericError(
                        f"non-finite loss {value} at epoch {epoch} on sample {s.features.sample_id} "
                        f"(batch: {[x.features.sample_id for x in batch]})"
                    )
                used.append(loss)
                batch_loss += value
            if not used:
                continue
            for loss in used:
                tn.backward(tn.scale(loss, 1.0 / len(used)))
            opt.step()
            losses.append(batch_loss / len(used))
        dev_b = evaluate_model(model, dev_set, beam_width=None).breakdown
        rec = EpochRecord(epoch, float(np.mean(losses)) if losses else float("nan"), dev_b.wer, opt.lr, skipped)
        history.append(rec)
        extra["skipped"] += skipped
        extra["log"].append(rec.line())
        if extra["best_dev_wer"] is None or rec.dev_wer < extra["best_dev_wer"]:
            extra["best_dev_wer"] = rec.dev_wer
            extra["best_epoch"] = epoch
            best = snapshot(model, opt, epoch, rng, extra)
        if on_epoch is not None:
            on_epoch(rec, model)
        log.info("epoch %d loss %.4f dev WER %.2f lr %.3g", epoch, rec.train_loss, rec.dev_wer, rec.lr)
    ckpt = snapshot(model, opt, max(start, min(last, cfg.epochs)), rng, extra)
    return TrainResult(ckpt, best, history, extra["skipped"])


def _feasible(model: MSTNet, seq: FeatureSequence, target) -> bool:
    from .ctc import min_frames

    lens = model.valid_lengths(seq.length)
    need = min_frames(target)
    return all(lens[i - 1] >= need for i in model.trained_levels())


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class SampleDecode:
    sample_id: str
    reference: tuple
    hypothesis: tuple
    breakdown: EditBreakdown

    def line(self) -> str:
        b = self.breakdown
        ref = " ".join(map(str, self.reference))
        hyp = " ".join(map(str, self.hypothesis))
        return f"{self.sample_id}\t{ref}\t{hyp}\t{b.insertions}\t{b.deletions}\t{b.substitutions}\t{markup(b.ops)}"


@dataclass
class EvalReport:
    breakdown: EditBreakdown
    samples: list

    def lines(self):
        yield "sample\treference\thypothesis\tins\tdel\tsub\talignment"
        for s in self.samples:
            yield s.line()


def evaluate_model(model, corpus, beam_width=10) -> EvalReport:
    """Decode the deepest level of every sample; ``beam_width=None`` uses greedy decoding.

    ``model`` only needs a ``decode_logits(FeatureSequence)`` method.
    """
    decodes = []
    for s in corpus:
        logits = model.decode_logits(s.features)
        hyp = greedy_decode(logits) if beam_width is None else beam_decode(logits, beam_width)
        decodes.append(SampleDecode(s.features.sample_id, tuple(s.target), hyp, wer(s.target, hyp)))
    total = corpus_wer((d.reference, d.hypothesis) for d in decodes)
    return EvalReport(total, decodes)


def evaluate(ckpt: Checkpoint, corpus, beam_width=None) -> EvalReport:
    _check_vocab(ckpt.config, corpus)
    model = model_from_checkpoint(ckpt)
    return evaluate_model(model, corpus, ckpt.config.beam_width if beam_width is None else beam_width)


def decode(ckpt: Checkpoint, seq: FeatureSequence, beam_width=None) -> tuple:
    model = model_from_checkpoint(ckpt)
    return beam_decode(model.decode_logits(seq), beam_width or ckpt.config.beam_width)


# ---------------------------------------------------------------------------
# gradient check


@dataclass
class GroupCheck:
    name: str
    max_rel_err: float
    checked: int
    exempt: bool = False

    def passed(self, tolerance) -> bool:
        return self.exempt or self.max_rel_err < tolerance


@dataclass
class GradcheckReport:
    groups: list
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(g.passed(self.tolerance) for g in self.groups)

    @property
    def max_rel_err(self) -> float:
        return max((g.max_rel_err for g in self.groups if not g.exempt), default=0.0)

    def lines(self):
        for g in self.groups:
            status = "EXEMPT" if g.exempt else ("PASS" if g.passed(self.tolerance) else "FAIL")
            yield f"{g.name}\t{g.max_rel_err:.3e}\t{g.checked}\t{status}"


def tiny_config(**overrides) -> ModelConfig:
    base = dict(
        d_in=4, c1=8, c2=16, fc_layers=2, num_scales=2, num_mst_blocks=2, encoder_layers=1,
        heads=2, ff_mult=2, ctc_levels=4, vocab_size=3, grad_stop_p=0.0, aug_frac=0.0, seed=7,
    )
    base.update(overrides)
    return ModelConfig(**base)


def group_relative_error(analytic, numeric, noise_floor=0.0) -> float:
    """Largest absolute disagreement scaled by the group's largest gradient magnitude.

    Entry-wise ratios are meaningless for coordinates whose true gradient sits
    at the finite-difference round-off floor, so the scale is taken per
    parameter group. A group whose gradients all lie below ``noise_floor``
    (e.g. attention key biases, exactly zero by shift invariance) scores 0.
    """
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    diff = np.abs(analytic - numeric).max(initial=0.0)
    if scale <= noise_floor:
        return 0.0
    return float(diff / scale)


def gradcheck(config: ModelConfig | None = None, tolerance=1e-4, *, length=8, target=(0, 1), h=1e-5,
              max_entries=None, seed=0) -> GradcheckReport:
    """Central finite differences of the full multi-level loss against backprop.

    Frames are stopped only when ``grad_stop_p == 1``: every frame is then cut
    and the frame-embedder parameters (exact zero analytic gradient) are
    exempted. ``max_entries`` limits the coordinates probed per parameter.
    """
    cfg = (config or tiny_config()).validate()
    model = MSTNet(cfg)
    rng = np.random.default_rng(seed)
    frames = rng.normal(size=(length, cfg.d_in))
    seq = FeatureSequence(frames, length, "gradcheck")
    stop = 1.0 if cfg.grad_stop_p >= 1.0 else 0.0

    def loss_value():
        return model.loss(seq, target, training=True, stop_p=stop).item()

    params = model.named_parameters()
    for p in params.values():
        p.zero_grad()
    loss = model.loss(seq, target, training=True, stop_p=stop)
    # central-difference round-off: eps * |L| / h, with a safety factor
    noise_floor = 1e3 * np.finfo(float).eps * max(1.0, abs(loss.item())) / h
    tn.backward(loss)
    groups = []
    for name, p in params.items():
        analytic = p.grad.copy()
        if stop == 1.0 and name.startswith("frame.embed"):
            groups.append(GroupCheck(name, float(np.abs(analytic).max()), 0, exempt=True))
            continue
        idx = list(np.ndindex(p.shape))
        if max_entries is not None and len(idx) > max_entries:
            pick = rng.choice(len(idx), size=max_entries, replace=False)
            idx = [idx[i] for i in sorted(pick)]
        numeric = np.empty(len(idx))
        for j, i in enumerate(idx):
            old = p.data[i]
            p.data[i] = old + h
            up = loss_value()
            p.data[i] = old - h
            down = loss_value()
            p.data[i] = old
            numeric[j] = (up - down) / (2 * h)
        err = group_relative_error([analytic[i] for i in idx], numeric, noise_floor)
        groups.append(GroupCheck(name, err, len(idx)))
    return GradcheckReport(groups, tolerance)


# ---------------------------------------------------------------------------
# ablation


@dataclass
class AblationRow:
    value: object
    dev_wer: float | None
    test_wer: float | None
    error: str | None = None

    def line(self) -> str:
        fmt = lambda x: "NA" if x is None else f"{x:.2f}"  # noqa: E731
        return f"{self.value}\t{fmt(self.dev_wer)}\t{fmt(self.test_wer)}\t{self.error or ''}"


DEFAULT_VALUES = {
    "scales": [1, 2, 3, 4, 5],
    "fc_layers": [0, 1, 2, 3],
    "encoder": ["bilstm", "transformer"],
    "ctc_levels": [1, 2, 3, 4],
}


def ablate(base: ModelConfig, axis: str, values, train_set, dev_set, test_set, beam_width=None) -> list:
    """One model per value along ``axis``; a failing cell records its error and the sweep continues."""
    if axis not in ABLATION_AXES:
        raise ContractError(f"axis must be one of {sorted(ABLATION_AXES)}")
    values = DEFAULT_VALUES[axis] if values is None else values
    rows = []
    for v in values:
        try:
            cfg = base.replace(**{ABLATION_AXES[axis]: v}).validate()
            result = train(cfg, train_set, dev_set)
            ckpt = result.best or result.checkpoint
            width = beam_width or cfg.beam_width
            dev_w = evaluate(ckpt, dev_set, width).breakdown.wer
            test_w = evaluate(ckpt, test_set, width).breakdown.wer
            rows.append(AblationRow(v, dev_w, test_w))
        except MstnetError as exc:
            log.warning("ablation %s=%s failed: %s", axis, v, exc)
            rows.append(AblationRow(v, None, None, f"{type(exc).__name__}: {exc}"))
    return rows
