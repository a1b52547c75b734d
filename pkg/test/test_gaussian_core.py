#!/usr/bin/env python3
"""
Tests for squeezed-state sampling and covariance algebra
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add the project root to the path
sys.path.append(str(Path(__file__).parent.parent))

from app.core.gaussian_core import (
    CovarianceMatrix,
    QuadraturePair,
    beam_splitter,
    condition_on_heterodyne,
    direct_sum,
    epr_covariance,
    make_two_mode_entangled,
    sample_covariance,
    sample_single_mode_squeezed,
    symplectic_spectrum,
    thermal_covariance,
    tmsv_covariance,
)
from app.errors import InvalidParams, NonPhysicalState
from app.schemas.params import SqueezingParams
from app.utils.rng import RngSeed, make_stream

N_LARGE = 1_000_000


def test_vacuum_variance_is_one():
    pair = sample_single_mode_squeezed(SqueezingParams(r=0.0), make_stream(1, "source"), N_LARGE)
    assert np.var(pair.x) == pytest.approx(1.0, abs=0.02)
    assert np.var(pair.p) == pytest.approx(1.0, abs=0.02)


def test_squeezed_variances():
    pair = sample_single_mode_squeezed(SqueezingParams(r=0.5), make_stream(2, "source"), N_LARGE)
    assert np.var(pair.x) == pytest.approx(np.exp(-1.0), rel=0.02)
    assert np.var(pair.p) == pytest.approx(np.exp(1.0), rel=0.02)


def test_fixed_seed_streams_are_bit_identical():
    params = SqueezingParams(r=1.0)
    first = sample_single_mode_squeezed(params, RngSeed(7).stream("source"), 1000)
    second = sample_single_mode_squeezed(params, RngSeed(7).stream("source"), 1000)
    assert np.array_equal(first.x, second.x)
    assert np.array_equal(first.p, second.p)


def test_streams_differ_by_mode_index():
    a = make_stream(7, "channel", 0).standard_normal(10)
    b = make_stream(7, "channel", 1).standard_normal(10)
    assert not np.array_equal(a, b)


def test_negative_squeezing_rejected():
    with pytest.raises(ValueError):
        SqueezingParams(r=-0.1)


def test_rng_seed_range():
    with pytest.raises(ValueError):
        RngSeed(-1)
    with pytest.raises(ValueError):
        RngSeed(2**64)


@pytest.mark.parametrize("r", [0.0, 0.5, 1.0])
def test_entangled_squeezed_combinations(r):
    state = make_two_mode_entangled(SqueezingParams(r=r), make_stream(3, "source"), N_LARGE)
    x_diff = (state.sc.x - state.sm.x) / np.sqrt(2.0)
    p_sum = (state.sc.p + state.sm.p) / np.sqrt(2.0)
    expected = np.exp(-2.0 * r)
    statistic = np.var(x_diff) + np.var(p_sum)
    sigma = 2.0 * expected * np.sqrt(2.0 / N_LARGE)
    assert abs(statistic - 2.0 * expected) < 4.0 * sigma


def test_entangled_detection_beam_has_uncorrelated_quadratures():
    state = make_two_mode_entangled(SqueezingParams(r=0.5), make_stream(4, "source"), N_LARGE)
    assert abs(np.cov(state.sc.x, state.sc.p, ddof=0)[0, 1]) < 0.01


def test_entangled_sample_covariance_matches_tmsv():
    params = SqueezingParams(r=0.5)
    state = make_two_mode_entangled(params, make_stream(5, "source"), 200_000)
    cm = sample_covariance([state.sc, state.sm])
    assert np.allclose(cm.entries, tmsv_covariance(params).entries, atol=0.03)


def test_quadrature_pair_validation():
    with pytest.raises(InvalidParams):
        QuadraturePair(np.zeros(3), np.zeros(4))
    with pytest.raises(InvalidParams):
        QuadraturePair(np.array([np.nan]), np.array([0.0]))


@pytest.mark.parametrize("n_modes", [1, 2, 3])
def test_identity_spectrum(n_modes):
    spectrum = symplectic_spectrum(CovarianceMatrix(np.eye(2 * n_modes)))
    assert np.allclose(spectrum, 1.0, atol=1e-12)
    assert len(spectrum) == n_modes


def test_thermal_spectrum():
    assert symplectic_spectrum(CovarianceMatrix(np.diag([4.0, 4.0]))) == pytest.approx([4.0])
    assert np.allclose(symplectic_spectrum(thermal_covariance(2.5, 3)), 2.5)


def test_pure_tmsv_spectrum():
    spectrum = symplectic_spectrum(tmsv_covariance(SqueezingParams(r=0.5)))
    assert np.allclose(spectrum, 1.0, atol=1e-9)


def test_non_physical_state_raises():
    with pytest.raises(NonPhysicalState):
        symplectic_spectrum(CovarianceMatrix(np.diag([0.5, 0.5])))


def test_covariance_shape_checks():
    with pytest.raises(InvalidParams):
        CovarianceMatrix(np.eye(3))
    with pytest.raises(InvalidParams):
        CovarianceMatrix(np.array([[1.0, 0.3], [0.0, 1.0]]))


def test_beam_splitter_mixes_thermal_with_vacuum():
    cm = direct_sum(thermal_covariance(5.0), thermal_covariance(1.0))
    mixed = beam_splitter(cm, 0, 1, 0.3)
    assert np.allclose(mixed.modes([0]).entries, (0.3 * 5.0 + 0.7) * np.eye(2))
    assert np.allclose(mixed.modes([1]).entries, (0.7 * 5.0 + 0.3) * np.eye(2))


def test_heterodyne_on_epr_leaves_pure_state():
    conditioned = condition_on_heterodyne(epr_covariance(9.0), 1)
    assert conditioned.n_modes == 1
    assert np.allclose(conditioned.entries, np.eye(2))


def test_spectrum_of_scaled_identity():
    assert np.allclose(symplectic_spectrum(CovarianceMatrix(3.0 * np.eye(4))), [3.0, 3.0])
