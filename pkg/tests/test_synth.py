import numpy as np
import pytest

from mstnet.ctc import min_frames
from mstnet.errors import ContractError, DataError
from mstnet.frames import FeatureSequence
from mstnet.synth import ToyGrammar, generate, generate_one, read_corpus, temporal_augment, warp_indices, write_corpus
from mstnet.tensor import Rng


@pytest.fixture(scope="module")
def grammar():
    return ToyGrammar()


def test_same_seed_bit_identical(grammar):
    a = generate(grammar, 20, "train")
    b = generate(ToyGrammar(), 20, "train")
    for x, y in zip(a, b):
        assert x.target == y.target
        np.testing.assert_array_equal(x.features.frames, y.features.frames)


def test_sample_is_function_of_index(grammar):
    batch = generate(grammar, 8, "test")
    alone = generate_one(grammar, 5, "test")
    np.testing.assert_array_equal(alone.features.frames, batch[5].features.frames)


def test_splits_differ_but_share_prototypes(grammar):
    tr = generate_one(grammar, 0, "train")
    te = generate_one(grammar, 0, "test")
    assert not np.array_equal(tr.features.frames, te.features.frames) or tr.target != te.target
    assert ToyGrammar(seed=0).prototypes[3].tobytes() == grammar.prototypes[3].tobytes()


def test_sample_invariants(grammar):
    for s in generate(grammar, 50, "train"):
        assert 2 <= len(s.target) <= 5
        assert all(0 <= g < 10 for g in s.target)
        seq = s.features
        assert seq.padded_len % 4 == 0 and seq.padded_len >= seq.length
        assert len(s.frame_labels) == seq.length
        assert np.all(seq.frames[seq.length :] == 0)
        assert -(-seq.length // 4) >= min_frames(s.target)


def test_durations_vary_across_samples():
    g = ToyGrammar(vocab_size=1, sentence_len_range=(1, 1), noise_sigma=0.0)
    lengths = [generate_one(g, i).features.length for i in range(100)]
    assert np.var(lengths) > 0
    proto_len = len(g.prototypes[0])
    assert min(lengths) >= round(proto_len * 0.8) and max(lengths) <= round(proto_len * 1.25)


def test_noiseless_single_gloss_is_warped_prototype():
    g = ToyGrammar(vocab_size=1, sentence_len_range=(1, 1), noise_sigma=0.0)
    proto = g.prototypes[0]
    for i in range(10):
        s = generate_one(g, i)
        idx = warp_indices(len(proto), s.features.length / len(proto))
        expected = proto[idx].astype(np.float32).astype(np.float64)
        np.testing.assert_array_equal(s.features.frames[: s.features.length], expected)


def test_prototypes_distinct():
    g = ToyGrammar(noise_sigma=0.0)
    for i in range(g.vocab_size):
        assert 4 <= len(g.prototypes[i]) <= 12
        for j in range(i):
            a, b = g.prototypes[i], g.prototypes[j]
            assert a.shape != b.shape or not np.array_equal(a, b)


def test_bad_arguments():
    with pytest.raises(ContractError):
        ToyGrammar(len_min=0)
    with pytest.raises(ContractError):
        generate(ToyGrammar(), 0)
    with pytest.raises(ContractError):
        generate_one(ToyGrammar(), 0, "valid")


class TestAugment:
    def _seq(self, t):
        frames = np.arange(t, dtype=float)[:, None] * np.ones((1, 3))
        return FeatureSequence(frames, t, "x")

    def test_zero_fraction_is_identity(self):
        seq = self._seq(10)
        out = temporal_augment(seq, Rng(0), max_frac=0.0)
        assert out.length == 10
        np.testing.assert_array_equal(out.frames[:10], seq.frames)
        assert out.padded_len == 12

    def test_length_range(self):
        rng = Rng(1)
        seen = {temporal_augment(self._seq(100), rng, 0.2).length for _ in range(2000)}
        assert min(seen) == 80 and max(seen) == 120
        assert len(seen) == 41

    def test_order_preserved(self):
        rng = Rng(2)
        for _ in range(50):
            out = temporal_augment(self._seq(37), rng, 0.2)
            vals = out.frames[: out.length, 0]
            assert np.all(np.diff(vals) >= 0)
            assert vals[0] == 0

    def test_padding(self):
        out = temporal_augment(self._seq(33), Rng(3), 0.2)
        assert out.padded_len % 4 == 0

    def test_bad_fraction(self):
        with pytest.raises(ContractError):
            temporal_augment(self._seq(5), Rng(0), 1.0)


class TestCorpusFile:
    def test_round_trip(self, tmp_path, grammar):
        samples = generate(grammar, 6, "dev")
        path = tmp_path / "dev.mstc"
        write_corpus(path, samples)
        back = read_corpus(path)
        assert len(back) == 6
        for a, b in zip(samples, back):
            assert a.target == b.target
            assert a.features.length == b.features.length
            np.testing.assert_array_equal(a.features.frames, b.features.frames)
        assert back[2].features.sample_id == "dev-2"

    def test_header_layout(self, tmp_path, grammar):
        path = tmp_path / "c.mstc"
        write_corpus(path, generate(grammar, 2))
        blob = path.read_bytes()
        assert blob[:4] == b"MSTC" and blob[4] == 1
        assert int.from_bytes(blob[5:9], "little") == 2

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.mstc"
        path.write_bytes(b"NOPE" + bytes(10))
        with pytest.raises(DataError):
            read_corpus(path)

    def test_truncated(self, tmp_path, grammar):
        path = tmp_path / "t.mstc"
        write_corpus(path, generate(grammar, 2))
        path.write_bytes(path.read_bytes()[:-7])
        with pytest.raises(DataError):
            read_corpus(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            read_corpus(tmp_path / "absent.mstc")
