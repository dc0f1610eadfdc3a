"""Bit extraction, packing, the stream file format, empirical bias."""

import numpy as np
import pytest

from tesqrng import qrng, theory
from tesqrng.counting import DISCARDED
from tesqrng.qrng import BitStream, bits_from_count, empirical_bias, generate
from tesqrng.source import sample_totals


class TestBitsFromCount:
    def test_examples(self):
        assert bits_from_count(6, 3) == (1, 1, 0)
        assert bits_from_count(57, 3) == (0, 0, 1)
        assert bits_from_count(2, 2) == (1, 0)

    def test_msb_first_table(self):
        # the d=2 mapping 0,1,2,3 -> 00,01,10,11
        assert [bits_from_count(n, 2) for n in range(4)] == [
            (0, 0), (0, 1), (1, 0), (1, 1),
        ]

    def test_d_range(self):
        with pytest.raises(ValueError):
            bits_from_count(3, 0)
        with pytest.raises(ValueError):
            bits_from_count(3, 6)


class TestGenerate:
    def test_parity_bits(self):
        stream = generate(np.array([0, 1, 2]), d=1)
        assert stream.bits.tolist() == [0, 1, 0]

    def test_concatenation(self):
        stream = generate(np.array([57, 6]), d=3)
        assert stream.bits.tolist() == [0, 0, 1, 1, 1, 0]

    def test_discards_emit_nothing(self):
        stream = generate(np.array([5, DISCARDED, 6, DISCARDED]), d=2)
        assert stream.n_events_used == 2
        assert stream.n_discarded == 2
        assert stream.bit_length == 4

    def test_ones_fraction_large_state(self):
        totals = sample_totals(57.0, 1_000_000, seed=14)
        totals = np.where(totals > 100, DISCARDED, totals)
        stream = generate(totals, d=3)
        n_bits = stream.bit_length
        assert n_bits >= 2_999_000
        ones = stream.bits.mean()
        assert abs(ones - 0.5) < 4.0 * 0.5 / np.sqrt(n_bits)

    def test_parity_bit_is_lsb_of_word(self):
        totals = sample_totals(9.0, 5_000, seed=15)
        s1 = generate(totals, d=1)
        s3 = generate(totals, d=3)
        assert np.array_equal(s1.bits, s3.bits.reshape(-1, 3)[:, 2])

    def test_deterministic(self):
        totals = sample_totals(9.0, 5_000, seed=16)
        a = generate(totals, d=3)
        b = generate(totals, d=3)
        assert np.array_equal(a.packed, b.packed)


class TestStreamFile:
    def test_roundtrip(self, tmp_path):
        totals = sample_totals(9.0, 3_333, seed=17)
        stream = generate(totals, d=3)
        path = tmp_path / "bits.qrnb"
        stream.save(path)
        loaded = BitStream.load(path)
        assert loaded.d == 3
        assert loaded.bit_length == stream.bit_length
        assert np.array_equal(loaded.bits, stream.bits)
        assert loaded.n_events_used == stream.n_events_used

    def test_header_sized_16_bytes(self, tmp_path):
        stream = generate(np.arange(100), d=2)
        path = tmp_path / "b.qrnb"
        stream.save(path)
        raw = path.read_bytes()
        assert raw[:4] == b"QRNB"
        assert len(raw) == 16 + len(stream.packed)

    def test_magic_guard(self, tmp_path):
        path = tmp_path / "bad.qrnb"
        path.write_bytes(b"NOPE" + bytes(20))
        with pytest.raises(ValueError):
            BitStream.load(path)


class TestEmpiricalBias:
    def test_cyclic_totals_zero_bias(self):
        totals = np.tile(np.arange(8), 200)
        rep = empirical_bias(generate(totals, d=3), q=8)
        assert rep.max_bias == 0.0

    def test_small_state_bias_matches_theory(self):
        totals = sample_totals(5.0, 300_000, seed=18)
        totals = np.where(totals > 100, DISCARDED, totals)
        stream = generate(totals, d=3)
        rep = empirical_bias(stream, q=8)
        oracle = theory.modq_probabilities(theory.CoherentSpec(5.0), theory.ModQSpec(8, n_max=100))
        n = stream.n_events_used
        se = np.sqrt(oracle.probabilities * (1 - oracle.probabilities) / n)
        assert np.all(np.abs(rep.probabilities - oracle.probabilities) < 4.0 * se)
        # and the bias is a real effect, far above sampling noise
        assert oracle.max_bias > 10.0 * se.max()
        assert rep.max_bias > 0.5 * oracle.max_bias

    def test_large_state_bias_below_noise(self):
        totals = sample_totals(57.0, 300_000, seed=19)
        totals = np.where(totals > 100, DISCARDED, totals)
        rep = empirical_bias(generate(totals, d=3), q=8)
        oracle = theory.modq_probabilities(theory.CoherentSpec(57.0), theory.ModQSpec(8, n_max=100))
        noise_4sig = 4.0 * np.sqrt(0.125 * 0.875 / 300_000)
        assert oracle.max_bias < noise_4sig  # theory scale ~2.6e-8
        assert rep.max_bias < noise_4sig

    def test_insufficient_data(self):
        stream = generate(np.arange(100), d=3)
        with pytest.raises(qrng.InsufficientDataError):
            empirical_bias(stream, q=8)

    def test_q_range(self):
        stream = generate(np.arange(2000), d=2)
        with pytest.raises(ValueError):
            empirical_bias(stream, q=8)


class TestDiscardRobustness:
    def test_windowed_stream_bias_consistent(self):
        totals = sample_totals(19.0, 400_000, seed=20)
        rng = np.random.default_rng(21)
        thinned = np.where(rng.random(totals.shape) < 0.6827, totals, DISCARDED)
        full = empirical_bias(generate(totals, d=3), q=8)
        thin = empirical_bias(generate(thinned, d=3), q=8)
        n_thin = int(0.6827 * 400_000)
        se = np.sqrt(0.125 * 0.875 * (1 / n_thin + 1 / 400_000))
        assert np.abs(full.probabilities - thin.probabilities).max() < 4.0 * se
