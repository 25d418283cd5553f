"""Connectionist temporal classification: loss, multi-level sum and decoders.

The blank is always the last class (index ``C - 1`` for C output classes).
All probability arithmetic happens in the log domain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .errors import ContractError, InfeasibleTargetError
from .tensor import Tensor

NEG_INF = -np.inf


@dataclass
class LevelLogits:
    """T_level x (|vocab|+1) unnormalised class scores; rows past ``valid_len`` are padding."""

    scores: Tensor
    valid_len: int | None = None

    def __post_init__(self):
        if not isinstance(self.scores, Tensor):
            self.scores = Tensor(self.scores)
        t = self.scores.shape[0]
        if self.valid_len is None:
            self.valid_len = t
        if not 0 <= self.valid_len <= t:
            raise ContractError(f"valid_len {self.valid_len} outside [0, {t}]")

    @property
    def num_classes(self):
        return self.scores.shape[1]

    @property
    def blank(self):
        return self.num_classes - 1

    def log_probs(self) -> np.ndarray:
        """Valid rows of the log-softmax, as a plain array."""
        z = self.scores.data[: self.valid_len]
        z = z - z.max(axis=1, keepdims=True)
        return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def collapse(path, blank) -> tuple:
    """Merge consecutive repeats, then drop blanks."""
    out = []
    prev = None
    for p in path:
        p = int(p)
        if p != prev and p != blank:
            out.append(p)
        prev = p
    return tuple(out)


def min_frames(target) -> int:
    """Fewest frames any alignment of ``target`` needs (a blank between equal neighbours)."""
    target = list(target)
    repeats = sum(1 for a, b in zip(target, target[1:]) if a == b)
    return len(target) + repeats


def _extend(target, blank):
    ext = np.full(2 * len(target) + 1, blank, dtype=np.int64)
    ext[1::2] = target
    return ext


def _lse3(a, b, c):
    return np.logaddexp(np.logaddexp(a, b), c)


def _forward_backward(lp, ext, blank):
    """Log alpha/beta lattices (each includes the emission at its own frame) and log p(target)."""
    t_len, s_len = lp.shape[0], ext.shape[0]
    emit = lp[:, ext]
    skip = np.zeros(s_len, dtype=bool)
    skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])
    rskip = np.zeros(s_len, dtype=bool)
    rskip[:-2] = skip[2:]

    alpha = np.full((t_len, s_len), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if s_len > 1:
        alpha[0, 1] = emit[0, 1]
    shift1 = np.full(s_len, NEG_INF)
    shift2 = np.full(s_len, NEG_INF)
    for t in range(1, t_len):
        prev = alpha[t - 1]
        shift1[1:] = prev[:-1]
        shift2[2:] = prev[:-2]
        alpha[t] = _lse3(prev, shift1, np.where(skip, shift2, NEG_INF)) + emit[t]

    beta = np.full((t_len, s_len), NEG_INF)
    beta[-1, -1] = emit[-1, -1]
    if s_len > 1:
        beta[-1, -2] = emit[-1, -2]
    shift1 = np.full(s_len, NEG_INF)
    shift2 = np.full(s_len, NEG_INF)
    for t in range(t_len - 2, -1, -1):
        nxt = beta[t + 1]
        shift1[:-1] = nxt[1:]
        shift2[:-2] = nxt[2:]
        beta[t] = _lse3(nxt, shift1, np.where(rskip, shift2, NEG_INF)) + emit[t]

    end = alpha[-1, -1] if s_len == 1 else np.logaddexp(alpha[-1, -1], alpha[-1, -2])
    return alpha, beta, emit, end


def ctc_nll(log_probs: np.ndarray, target, blank=None) -> float:
    """-ln p(target | frames) for a T x C matrix of log-probabilities (no autograd)."""
    blank = log_probs.shape[1] - 1 if blank is None else blank
    _check_feasible(target, log_probs.shape[0])
    if log_probs.shape[0] == 0:
        return 0.0
    _, _, _, logp = _forward_backward(log_probs, _extend(target, blank), blank)
    return float(-logp)


def _check_feasible(target, t_len, level=None):
    need = min_frames(target)
    if t_len < need:
        raise InfeasibleTargetError(len(target), need, t_len, level)


def _ctc_node(log_probs: Tensor, valid_len: int, target, blank: int) -> Tensor:
    lp_all = log_probs.data
    lp = lp_all[:valid_len]
    if valid_len == 0:
        return tn._node(np.array(0.0), (log_probs,), lambda g: (np.zeros_like(lp_all),))
    ext = _extend(target, blank)
    alpha, beta, emit, logp = _forward_backward(lp, ext, blank)

    def _back(g):
        post = np.exp(alpha + beta - emit - logp)  # occupancy of each lattice state
        grad = np.zeros_like(lp_all)
        np.add.at(grad[:valid_len].T, ext, -post.T)
        return (grad * g,)

    return tn._node(np.array(-logp), (log_probs,), _back)


def ctc_loss(logits: LevelLogits, target, level=None) -> Tensor:
    """Scalar -ln p(target | logits); differentiable w.r.t. ``logits.scores``."""
    target = [int(s) for s in target]
    blank = logits.blank
    if any(s < 0 or s >= blank for s in target):
        raise ContractError(f"target ids must lie in [0, {blank}) (blank is {blank})")
    _check_feasible(target, logits.valid_len, level)
    lp = tn.log_softmax_rows(logits.scores)
    return _ctc_node(lp, logits.valid_len, target, blank)


def retained_levels(num_levels: int, active: int) -> list:
    """Zero-based indices of the levels kept when ``active`` losses are used (deepest first kept)."""
    if not 1 <= active <= num_levels:
        raise ContractError(f"active levels must be in 1..{num_levels}, got {active}")
    return list(range(num_levels - active, num_levels))


def multi_level_ctc(levels, target, active_levels=None) -> Tensor:
    """Sum of per-level CTC losses over the retained levels, shallowest first."""
    n = len(levels)
    active = n if active_levels is None else active_levels
    total = None
    for i in retained_levels(n, active):
        loss = ctc_loss(levels[i], target, level=i + 1)
        total = loss if total is None else total + loss
    return total


# ---------------------------------------------------------------------------
# decoding


def _as_log_probs(logits) -> np.ndarray:
    if isinstance(logits, LevelLogits):
        return logits.log_probs()
    return LevelLogits(np.asarray(logits, dtype=np.float64)).log_probs()


def greedy_decode(logits) -> tuple:
    lp = _as_log_probs(logits)
    return collapse(lp.argmax(axis=1), lp.shape[1] - 1)


def _log_add(a, b):
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


def prefix_beam_search(logits, beam_width=10):
    """Ranked ``(prefix, log_prob)`` pairs surviving the final frame.

    ``beam_width=None`` keeps every prefix, which makes the scores exact.
    Ties in probability are broken by lexicographic order of the prefixes.
    """
    if beam_width is not None and beam_width < 1:
        raise ContractError("beam_width must be >= 1")
    lp = _as_log_probs(logits)
    t_len, n_cls = lp.shape
    blank = n_cls - 1
    # prefix -> [log p(ending in blank), log p(ending in non-blank)]
    beams = {(): [0.0, -math.inf]}
    for t in range(t_len):
        row = lp[t].tolist()
        nxt = {}

        def slot(prefix):
            s = nxt.get(prefix)
            if s is None:
                s = nxt[prefix] = [-math.inf, -math.inf]
            return s

        for prefix, (pb, pnb) in beams.items():
            total = _log_add(pb, pnb)
            s = slot(prefix)
            s[0] = _log_add(s[0], total + row[blank])
            last = prefix[-1] if prefix else None
            for c in range(blank):
                ext = prefix + (c,)
                if c == last:
                    se = slot(ext)
                    se[1] = _log_add(se[1], pb + row[c])
                    s[1] = _log_add(s[1], pnb + row[c])
                else:
                    se = slot(ext)
                    se[1] = _log_add(se[1], total + row[c])
        scored = ((p, s, _log_add(*s)) for p, s in nxt.items())
        ranked = sorted((x for x in scored if x[2] > -math.inf), key=lambda x: (-x[2], x[0]))
        if beam_width is not None:
            ranked = ranked[:beam_width]
        beams = {p: s for p, s, _ in ranked}
    return sorted(((p, _log_add(*s)) for p, s in beams.items()), key=lambda kv: (-kv[1], kv[0]))


def beam_decode(logits, beam_width=10) -> tuple:
    """Most probable labelling among the surviving beam prefixes.

    Survivors are rescored with their exact CTC probability, since pruning
    leaves the running prefix scores as lower bounds.
    """
    lp = _as_log_probs(logits)
    survivors = prefix_beam_search(lp, beam_width)
    if len(survivors) == 1:
        return survivors[0][0]
    blank = lp.shape[1] - 1
    best = min(survivors, key=lambda kv: (ctc_nll(lp, kv[0], blank), kv[0]))
    return best[0]
