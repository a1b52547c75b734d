#!/usr/bin/env python3
"""
Tests for the equiprobable Gaussian interval mapping and its error oracle
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import ndtr

# Add the project root to the path
sys.path.append(str(Path(__file__).parent.parent))

from app.coding.gaussian_map import (
    bits_from_labels,
    block_error_oracle,
    build_table,
    demap_value,
    demap_values,
    labels_from_bits,
    map_block,
    map_blocks,
    popcount,
)
from app.errors import InvalidParams
from app.utils.rng import make_stream


@pytest.fixture
def table():
    return build_table(3, 8.0)


def test_thresholds_match_octiles(table):
    expected = [-3.25368, -1.90775, -0.90124, 0.0, 0.90124, 1.90775, 3.25368]
    assert np.allclose(table.thresholds, expected, atol=1e-4)


def test_single_bit_table():
    assert build_table(1, 1.0).thresholds.tolist() == [0.0]


def test_interval_masses_are_equal():
    small = build_table(3, 2.0, clamp=None)
    sigma = np.sqrt(2.0)
    assert np.allclose(ndtr(small.thresholds / sigma), np.arange(1, 8) / 8, atol=1e-9)
    edges = small.boundaries
    for j in range(8):
        mass, _ = quad(lambda v: np.exp(-v * v / 4.0) / np.sqrt(4.0 * np.pi), edges[j], edges[j + 1])
        assert mass == pytest.approx(0.125, abs=1e-9)


def test_table_is_symmetric(table):
    assert np.allclose(table.thresholds, -table.thresholds[::-1])


@pytest.mark.parametrize("bits, variance, clamp", [(0, 8.0, 7.0), (9, 8.0, 7.0), (3, 0.0, 7.0), (3, 8.0, 3.0)])
def test_invalid_tables(bits, variance, clamp):
    with pytest.raises(InvalidParams):
        build_table(bits, variance, clamp)


def test_first_block_stays_in_first_interval(table):
    rng = make_stream(1, "mapping")
    values = map_blocks(table, np.zeros(10_000, dtype=int), rng)
    assert values.min() >= -7.0
    assert values.max() <= table.thresholds[0]
    assert map_block(table, 0, rng).block == 0


def test_mirrored_blocks_are_symmetric(table):
    low = map_blocks(table, np.zeros(200_000, dtype=int), make_stream(2, "mapping"))
    high = map_blocks(table, np.full(200_000, 7), make_stream(3, "mapping"))
    assert np.mean(low) == pytest.approx(-np.mean(high), abs=0.01)
    assert np.var(low) == pytest.approx(np.var(high), rel=0.02)


def test_demap_examples(table):
    assert demap_value(table, 0.5) == 0b100
    assert demap_value(table, 0.0) == 0b011
    assert demap_value(table, -100.0) == 0
    assert demap_value(table, 100.0) == 7
    assert demap_value(table, table.thresholds[2]) == 2


@pytest.mark.parametrize("tail_mode", ["clamp", "truncate"])
def test_noiseless_round_trip(table, tail_mode):
    t = build_table(3, 8.0, tail_mode=tail_mode)
    blocks = make_stream(4, "message").integers(0, 8, 100_000)
    values = map_blocks(t, blocks, make_stream(4, "mapping"))
    assert np.array_equal(demap_values(t, values), blocks)


@pytest.mark.parametrize("tail_mode", ["clamp", "truncate"])
def test_ensemble_variance_matches_closed_form(tail_mode):
    t = build_table(3, 8.0, tail_mode=tail_mode)
    blocks = make_stream(5, "message").integers(0, 8, 1_000_000)
    values = map_blocks(t, blocks, make_stream(5, "mapping"))
    assert np.var(values) == pytest.approx(t.signal_variance(), rel=0.02)


def test_clamped_variance_value(table):
    assert table.signal_variance() == pytest.approx(7.808, abs=0.002)
    assert build_table(3, 8.0, clamp=None).signal_variance() == 8.0


def test_unclamped_ensemble_variance():
    t = build_table(3, 8.0, clamp=None)
    blocks = make_stream(6, "message").integers(0, 8, 1_000_000)
    assert np.var(map_blocks(t, blocks, make_stream(6, "mapping"))) == pytest.approx(8.0, rel=0.02)


def test_label_bit_packing():
    bits = np.array([0, 1, 1, 1, 0, 0, 0, 0, 1], dtype=np.uint8)
    labels = labels_from_bits(bits, 3)
    assert labels.tolist() == [3, 4, 1]
    assert np.array_equal(bits_from_labels(labels, 3), bits)
    assert popcount(np.array([0, 7, 5])).tolist() == [0, 3, 2]


def test_oracle_zero_noise(table):
    result = block_error_oracle(table, 0.0)
    assert result.symbol_error == 0.0 and result.bit_error == 0.0


def test_oracle_negative_noise(table):
    with pytest.raises(InvalidParams):
        block_error_oracle(table, -1.0)


def test_oracle_large_noise_randomises_bits(table):
    result = block_error_oracle(table, 1e4 * 8.0)
    assert result.bit_error >= 0.45
    assert result.symbol_error > 0.8


def test_oracle_matches_monte_carlo(table):
    noise = 0.05
    n_total, errors, bit_flips = 0, 0, 0
    rng_blocks, rng_map, rng_noise = (make_stream(7, p) for p in ("message", "mapping", "channel"))
    for _ in range(5):
        blocks = rng_blocks.integers(0, 8, 2_000_000)
        values = map_blocks(table, blocks, rng_map) + rng_noise.normal(0.0, np.sqrt(noise), blocks.size)
        decided = demap_values(table, values)
        n_total += blocks.size
        errors += int(np.count_nonzero(decided != blocks))
        bit_flips += int(popcount(decided ^ blocks).sum())

    oracle = block_error_oracle(table, noise)
    ser = errors / n_total
    ser_sigma = np.sqrt(oracle.symbol_error * (1 - oracle.symbol_error) / n_total)
    assert abs(ser - oracle.symbol_error) < 3.0 * ser_sigma
    ber = bit_flips / (3 * n_total)
    # several bits can flip together, so the bit count is over-dispersed
    ber_sigma = np.sqrt(oracle.bit_error * (1 - oracle.bit_error) / (3 * n_total))
    assert abs(ber - oracle.bit_error) < 4.0 * ber_sigma * np.sqrt(3.0)


def test_small_noise_errors_land_in_neighbouring_interval(table):
    blocks = make_stream(8, "message").integers(0, 8, 1_000_000)
    values = map_blocks(table, blocks, make_stream(8, "mapping"))
    values = values + make_stream(8, "channel").normal(0.0, np.sqrt(8.0 / 100), blocks.size)
    decided = demap_values(table, values)
    wrong = decided != blocks
    assert np.count_nonzero(wrong) > 0
    adjacent = np.abs(decided[wrong] - blocks[wrong]) == 1
    assert adjacent.mean() >= 0.99


def test_oracle_increases_with_noise(table):
    values = [block_error_oracle(table, v).bit_error for v in (0.01, 0.05, 0.2, 1.0)]
    assert values == sorted(values)
