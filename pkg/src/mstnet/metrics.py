"""Word error rate with an insertion/deletion/substitution breakdown."""
from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ContractError


@dataclass
class EditBreakdown:
    insertions: int
    deletions: int
    substitutions: int
    total_ref: int
    ops: list = field(default_factory=list, repr=False)

    @property
    def errors(self) -> int:
        return self.insertions + self.deletions + self.substitutions

    @property
    def wer(self) -> float:
        """Percent; exceeds 100 when the hypothesis has many insertions."""
        return 100.0 * self.errors / self.total_ref

    def record(self) -> str:
        """Tab-separated ``ins, del, sub, ref_words, wer`` line."""
        return f"{self.insertions}\t{self.deletions}\t{self.substitutions}\t{self.total_ref}\t{self.wer:.4f}"


def _align(ref, hyp):
    """DP over (edits, insertions); fewer insertions at equal distance means more substitutions."""
    n, m = len(ref), len(hyp)
    cost = [[(0, 0)] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        cost[i][0] = (i, 0)
    for j in range(1, m + 1):
        cost[0][j] = (j, j)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d, ins = cost[i - 1][j - 1]
            diag = (d, ins) if ref[i - 1] == hyp[j - 1] else (d + 1, ins)
            d, ins = cost[i][j - 1]
            left = (d + 1, ins + 1)
            d, ins = cost[i - 1][j]
            up = (d + 1, ins)
            cost[i][j] = min(diag, left, up)
    return cost


def edit_ops(ref, hyp):
    """Backtrace of one optimal alignment as (op, ref_word, hyp_word) triples.

    ``op`` is one of "=", "sub", "ins", "del". Moves consistent with the optimum
    are preferred in the order match/substitution, insertion, deletion.
    """
    cost = _align(ref, hyp)
    i, j = len(ref), len(hyp)
    ops = []
    while i or j:
        here = cost[i][j]
        if i and j:
            d, ins = cost[i - 1][j - 1]
            same = ref[i - 1] == hyp[j - 1]
            if (d + (0 if same else 1), ins) == here:
                ops.append(("=" if same else "sub", ref[i - 1], hyp[j - 1]))
                i, j = i - 1, j - 1
                continue
        if j:
            d, ins = cost[i][j - 1]
            if (d + 1, ins + 1) == here:
                ops.append(("ins", None, hyp[j - 1]))
                j -= 1
                continue
        ops.append(("del", ref[i - 1], None))
        i -= 1
    ops.reverse()
    return ops


def wer(reference, hypothesis) -> EditBreakdown:
    reference, hypothesis = list(reference), list(hypothesis)
    if not reference:
        raise ContractError("WER is undefined for an empty reference")
    ops = edit_ops(reference, hypothesis)
    count = {"ins": 0, "del": 0, "sub": 0}
    for op, _, _ in ops:
        if op in count:
            count[op] += 1
    return EditBreakdown(count["ins"], count["del"], count["sub"], len(reference), ops)


def edit_distance(a, b) -> int:
    """Plain unit-cost Levenshtein distance."""
    a, b = list(a), list(b)
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def corpus_wer(pairs) -> EditBreakdown:
    """Summed edits over summed reference lengths."""
    pairs = list(pairs)
    if not pairs:
        raise ContractError("corpus_wer needs at least one (reference, hypothesis) pair")
    ins = dele = sub = total = 0
    for ref, hyp in pairs:
        b = wer(ref, hyp)
        ins += b.insertions
        dele += b.deletions
        sub += b.substitutions
        total += b.total_ref
    return EditBreakdown(ins, dele, sub, total)


def markup(ops, names=None) -> str:
    """Human-readable alignment: ``a b [c->d] +e -f``."""
    name = (lambda w: str(w)) if names is None else (lambda w: names[w])
    parts = []
    for op, r, h in ops:
        if op == "=":
            parts.append(name(r))
        elif op == "sub":
            parts.append(f"[{name(r)}->{name(h)}]")
        elif op == "ins":
            parts.append(f"+{name(h)}")
        else:
            parts.append(f"-{name(r)}")
    return " ".join(parts)
