import itertools
import math

import numpy as np
import pytest

from mstnet import tensor as tn
from mstnet.ctc import (
    LevelLogits,
    beam_decode,
    collapse,
    ctc_loss,
    ctc_nll,
    greedy_decode,
    min_frames,
    multi_level_ctc,
    prefix_beam_search,
    retained_levels,
)
from mstnet.errors import ContractError, InfeasibleTargetError

from conftest import brute_force_ctc, brute_force_decode, numeric_grad, rel_err


def _lp(z):
    return LevelLogits(np.asarray(z, dtype=float)).log_probs()


class TestCollapse:
    def test_dog(self):
        # letters d=0, o=1, g=2, blank=3
        path = [3, 0, 0, 3, 1, 3, 2, 3, 2]
        assert collapse(path, 3) == (0, 1, 2, 2)
        path = [3, 0, 0, 3, 1, 2, 2, 3]
        assert collapse(path, 3) == (0, 1, 2)

    def test_all_blank(self):
        assert collapse([5, 5, 5], 5) == ()

    def test_repeat_needs_blank(self):
        assert collapse([1, 1], 2) == (1,)
        assert collapse([1, 2, 1], 2) == (1, 1)

    def test_min_frames(self):
        assert min_frames([]) == 0
        assert min_frames([1, 2, 3]) == 3
        assert min_frames([1, 1, 2, 2]) == 6


class TestLoss:
    def test_empty_target_is_blank_path(self):
        lp = _lp(np.random.default_rng(0).normal(size=(4, 3)))
        assert ctc_nll(lp, []) == pytest.approx(-lp[:, 2].sum(), abs=1e-12)

    def test_single_frame_single_label(self):
        lp = _lp([[0.3, -1.0, 0.2]])
        assert ctc_nll(lp, [1]) == pytest.approx(-lp[0, 1], abs=1e-14)

    def test_uniform_two_frames(self):
        # paths for "a" over {a, blank} with T=2: aa, a-, -a
        lp = _lp(np.zeros((2, 2)))
        assert ctc_nll(lp, [0]) == pytest.approx(-math.log(3 / 4), abs=1e-14)

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        for t_len in range(1, 6):
            for v in range(1, 4):
                z = rng.normal(size=(t_len, v + 1))
                lp = _lp(z)
                for ln in range(4):
                    for target in itertools.product(range(v), repeat=ln):
                        if min_frames(target) > t_len:
                            continue
                        got = ctc_nll(lp, target)
                        assert got == pytest.approx(brute_force_ctc(lp, target), abs=1e-9)

    def test_infeasible_raises_with_lengths(self):
        lp = _lp(np.zeros((3, 3)))
        with pytest.raises(InfeasibleTargetError) as exc:
            ctc_nll(lp, [0, 0, 1])
        assert exc.value.required == 4 and exc.value.available == 3

    def test_infeasible_reports_level(self):
        with pytest.raises(InfeasibleTargetError) as exc:
            ctc_loss(LevelLogits(np.zeros((2, 3))), [0, 1, 0], level=3)
        assert exc.value.level == 3

    def test_blank_in_target_rejected(self):
        with pytest.raises(ContractError):
            ctc_loss(LevelLogits(np.zeros((4, 3))), [0, 2])

    def test_padding_rows_ignored(self):
        rng = np.random.default_rng(3)
        z = rng.normal(size=(6, 4))
        short = ctc_loss(LevelLogits(z[:4]), [0, 1]).item()
        z[4:] = rng.normal(size=(2, 4)) * 50
        padded = LevelLogits(tn.Tensor(z, requires_grad=True), valid_len=4)
        loss = ctc_loss(padded, [0, 1])
        assert loss.item() == short
        tn.backward(loss)
        assert np.all(padded.scores.grad[4:] == 0)

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        z = rng.normal(size=(7, 4))
        target = [0, 2, 2, 1]
        x = tn.Tensor(z.copy(), requires_grad=True)
        tn.backward(ctc_loss(LevelLogits(x), target))
        num = numeric_grad(lambda: ctc_loss(LevelLogits(z), target).item(), z)
        assert rel_err(x.grad, num) < 1e-7

    def test_gradient_is_softmax_minus_occupancy(self):
        # row sums of d loss / d logits vanish, since softmax rows sum to one
        z = tn.Tensor(np.random.default_rng(1).normal(size=(5, 3)), requires_grad=True)
        tn.backward(ctc_loss(LevelLogits(z), [0, 1]))
        np.testing.assert_allclose(z.grad.sum(axis=1), 0, atol=1e-12)

    def test_sharpening_lowers_loss(self):
        z = np.full((4, 3), -2.0)
        for t, c in enumerate([0, 2, 1, 2]):
            z[t, c] = 2.0
        losses = [ctc_loss(LevelLogits(z * s), [0, 1]).item() for s in (1, 2, 4, 8)]
        assert all(a > b for a, b in zip(losses, losses[1:]))
        assert losses[-1] < 1e-6


class TestMultiLevel:
    def _levels(self, seed=0):
        rng = np.random.default_rng(seed)
        return [
            LevelLogits(rng.normal(size=(16, 4))),
            LevelLogits(rng.normal(size=(8, 4))),
            LevelLogits(rng.normal(size=(4, 4))),
            LevelLogits(rng.normal(size=(4, 4))),
        ]

    def test_sum_is_bitwise_sum_of_levels(self):
        levels = self._levels()
        target = [0, 1, 2]
        total = multi_level_ctc(levels, target).item()
        parts = [ctc_loss(lv, target).item() for lv in levels]
        assert total == ((parts[0] + parts[1]) + parts[2]) + parts[3]

    def test_retention_keeps_deepest(self):
        assert retained_levels(4, 1) == [3]
        assert retained_levels(4, 2) == [2, 3]
        assert retained_levels(4, 4) == [0, 1, 2, 3]
        with pytest.raises(ContractError):
            retained_levels(4, 0)

    def test_one_active_level_is_deepest_loss(self):
        levels = self._levels(1)
        assert multi_level_ctc(levels, [1], active_levels=1).item() == ctc_loss(levels[3], [1]).item()

    def test_gradient_reaches_every_level(self):
        levels = self._levels(2)
        for lv in levels:
            lv.scores.requires_grad = True
        tn.backward(multi_level_ctc(levels, [0, 2]))
        assert all(np.abs(lv.scores.grad).sum() > 0 for lv in levels)


class TestDecoding:
    def test_greedy_example(self):
        z = np.full((6, 4), -5.0)
        for t, c in enumerate([3, 0, 0, 3, 0, 1]):
            z[t, c] = 5.0
        assert greedy_decode(z) == (0, 0, 1)

    def test_greedy_all_blank(self):
        assert greedy_decode(np.tile([0.0, 0.0, 3.0], (5, 1))) == ()

    def test_beam_one_equals_greedy_on_peaked_logits(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            t_len, v = rng.integers(1, 8), rng.integers(1, 5)
            z = rng.normal(size=(t_len, v + 1))
            z[np.arange(t_len), rng.integers(0, v + 1, size=t_len)] += 20.0
            assert beam_decode(z, 1) == greedy_decode(z)

    def test_beam_finds_mass_greedy_misses(self):
        # greedy path is "-" "-" but the label 0 collects more total mass
        p = np.array([[0.4, 0.0, 0.6], [0.4, 0.0, 0.6]])
        with np.errstate(divide="ignore"):
            z = np.log(p)
        assert greedy_decode(z) == ()
        assert beam_decode(z, 10) == (0,)

    def test_lexicographic_tie_break(self):
        z = np.zeros((1, 3))
        assert beam_decode(z, None) == ()
        assert [p for p, _ in prefix_beam_search(z, None)] == [(), (0,), (1,)]
        z = np.array([[0.0, 0.0, -50.0]])
        assert beam_decode(z, None) == (0,)

    def test_exact_scores_match_ctc(self):
        z = np.random.default_rng(5).normal(size=(4, 3))
        lp = _lp(z)
        for prefix, score in prefix_beam_search(z, None):
            assert -score == pytest.approx(ctc_nll(lp, prefix), abs=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_exhaustive_width_is_argmax(self, seed):
        rng = np.random.default_rng(100 + seed)
        z = rng.normal(size=(int(rng.integers(1, 6)), int(rng.integers(1, 4)) + 1))
        assert beam_decode(z, None) == brute_force_decode(_lp(z))[0]

    def test_zero_length_logits(self):
        assert beam_decode(np.zeros((0, 3))) == ()
        assert greedy_decode(np.zeros((0, 3))) == ()

    def test_bad_width(self):
        with pytest.raises(ContractError):
            prefix_beam_search(np.zeros((2, 2)), 0)
