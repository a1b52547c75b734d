#!/usr/bin/env python3
"""
Tests for maximum-likelihood channel estimation and the CSV loader
"""

import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

# Add the project root to the path
sys.path.append(str(Path(__file__).parent.parent))

from app.errors import DegenerateInput, DomainError, LengthMismatch, MalformedData
from app.estimation.data_loader import EstimationDataLoader, write_dataset
from app.estimation.estimation import (
    MERGED_LABEL,
    EstimationInput,
    estimate,
    per_mode_report,
    report_table,
    synthesize_dataset,
    z_for_epsilon,
)
from app.schemas.params import ChannelParams
from app.utils.rng import make_stream


# =============================================================================
# QUANTILE
# =============================================================================

def test_z_for_epsilon():
    assert z_for_epsilon(0.01) == pytest.approx(2.5758, abs=1e-4)
    assert z_for_epsilon(0.3173) == pytest.approx(1.0, abs=1e-3)
    assert z_for_epsilon(1e-10) > z_for_epsilon(1e-3)


@pytest.mark.parametrize("eps", [0.0, 1.0, -0.5, 2.0])
def test_z_domain(eps):
    with pytest.raises(DomainError):
        z_for_epsilon(eps)


# =============================================================================
# ESTIMATOR
# =============================================================================

def test_noiseless_channel():
    x = np.array([1.0, -2.0, 3.0, 0.5])
    data = EstimationInput(x=x, y=0.5 * x, y0=np.ones(10))
    report = estimate(data, eta=0.5, v_el=0.0)
    assert report.t_hat == pytest.approx(0.5)
    assert report.sigma2_hat == pytest.approx(0.0, abs=1e-15)
    assert report.sigma02_hat == pytest.approx(1.0)
    assert report.intervals["t"].half_width == pytest.approx(0.0, abs=1e-12)
    assert report.transmittance_hat == pytest.approx(0.5)


def test_degenerate_inputs():
    with pytest.raises(DegenerateInput):
        estimate(EstimationInput(x=[1.0], y=[1.0], y0=[1.0, 1.0]), 0.5, 0.01)
    with pytest.raises(DegenerateInput):
        estimate(EstimationInput(x=[1.0, 2.0], y=[1.0, 2.0], y0=[1.0]), 0.5, 0.01)
    with pytest.raises(DegenerateInput):
        estimate(EstimationInput(x=np.zeros(5), y=np.ones(5), y0=np.ones(5)), 0.5, 0.01)


def test_input_validation():
    with pytest.raises(LengthMismatch):
        EstimationInput(x=np.ones(3), y=np.ones(4), y0=np.ones(3))
    with pytest.raises(MalformedData):
        EstimationInput(x=[1.0, np.nan], y=[1.0, 2.0], y0=[1.0, 1.0])
    with pytest.raises(DomainError):
        EstimationInput(x=[1.0, 2.0], y=[1.0, 2.0], y0=[1.0, 1.0], epsilon_pe=1.5)


def test_interval_formulas():
    data = synthesize_dataset(ChannelParams(), 10_000, 5_000, 8.0, make_stream(1, "synthesis"))
    report = estimate(data, eta=0.5, v_el=0.01)
    z = report.z
    assert report.intervals["t"].half_width == pytest.approx(z * np.sqrt(report.sigma2_hat / (10_000 * report.va_hat)))
    assert report.intervals["sigma2"].half_width == pytest.approx(z * report.sigma2_hat * np.sqrt(2.0) / 100.0)
    assert report.intervals["va"].half_width == pytest.approx(z * report.va_hat * np.sqrt(2.0) / 100.0)
    assert report.intervals["sigma02"].half_width == pytest.approx(
        z * report.sigma02_hat * np.sqrt(2.0) / np.sqrt(5_000)
    )
    assert report.transmittance_hat == pytest.approx(report.t_hat**2 / 0.5)
    assert report.excess_noise_hat == pytest.approx(
        (report.sigma2_hat - report.sigma02_hat - 0.01) / report.t_hat**2
    )


def test_recovers_channel_parameters():
    channel = ChannelParams()
    data = synthesize_dataset(channel, 500_000, 500_000, 8.0, make_stream(2, "synthesis"))
    report = estimate(data, eta=channel.eta, v_el=channel.v_el)
    assert report.transmittance_interval.contains(channel.T)
    assert report.excess_noise_interval.contains(channel.excess_noise)
    assert report.transmittance_hat == pytest.approx(channel.T, rel=0.01)
    assert report.va_hat == pytest.approx(8.0, rel=0.01)
    assert report.sigma02_hat == pytest.approx(1.0, rel=0.01)


def test_t_interval_coverage():
    """At eps_PE = 0.01 the t interval should cover the true value about 99% of the time."""
    channel = ChannelParams()
    true_t = np.sqrt(channel.eta * channel.T)
    rng = make_stream(3, "synthesis")
    trials = 1000
    hits = 0
    for _ in range(trials):
        data = synthesize_dataset(channel, 4000, 100, 8.0, rng)
        hits += estimate(data, channel.eta, channel.v_el).intervals["t"].contains(true_t)
    assert hits / trials >= 0.98


def test_scale_equivariance():
    data = synthesize_dataset(ChannelParams(), 5000, 500, 8.0, make_stream(4, "synthesis"))
    base = estimate(data, 0.5, 0.01)
    scaled = estimate(EstimationInput(x=3.0 * data.x, y=data.y, y0=data.y0), 0.5, 0.01)
    assert scaled.t_hat == pytest.approx(base.t_hat / 3.0)
    assert scaled.va_hat == pytest.approx(9.0 * base.va_hat)
    assert scaled.sigma2_hat == pytest.approx(base.sigma2_hat)


def test_single_mode_merge_matches_mode():
    data = synthesize_dataset(ChannelParams(), 2000, 500, 8.0, make_stream(5, "synthesis"))
    result = per_mode_report([data], 0.5, 0.01)
    assert len(result.modes) == 1
    mode, merged = result.modes[0], result.merged
    assert merged.label == MERGED_LABEL
    assert merged.t_hat == mode.t_hat
    assert merged.sigma2_hat == mode.sigma2_hat
    assert merged.intervals == mode.intervals


def test_report_table_layout():
    rng = make_stream(6, "synthesis")
    inputs = [synthesize_dataset(ChannelParams(), 1000, 200, 8.0, rng) for _ in range(4)]
    table = report_table(per_mode_report(inputs, 0.5, 0.01))
    assert list(table.columns) == ["OAM 1", "OAM 2", "OAM 3", "OAM 4", MERGED_LABEL]
    assert "t_hat" in table.index and "delta_sigma02" in table.index
    assert table.loc["z"].nunique() == 1


# =============================================================================
# CSV LOADER
# =============================================================================

def test_loader_reads_written_dataset(tmp_path):
    rng = make_stream(7, "synthesis")
    inputs = [synthesize_dataset(ChannelParams(), 300, 50, 8.0, rng) for _ in range(2)]
    write_dataset(inputs, tmp_path / "samples.csv", tmp_path / "vacuum.csv")
    loaded = EstimationDataLoader(tmp_path / "samples.csv", tmp_path / "vacuum.csv").load()
    assert len(loaded) == 2
    for original, back in zip(inputs, loaded):
        assert np.array_equal(original.x, back.x)
        assert np.array_equal(original.y, back.y)
        assert np.array_equal(original.y0, back.y0)


def test_loader_shared_vacuum_and_slot_order(tmp_path):
    pd.DataFrame(
        {"mode_index": [0, 0, 0], "slot_index": [2, 0, 1], "x": [3.0, 1.0, 2.0], "y": [1.5, 0.5, 1.0]}
    ).to_csv(tmp_path / "s.csv", index=False)
    pd.DataFrame({"slot_index": [0, 1], "y0": [1.0, -1.0]}).to_csv(tmp_path / "v.csv", index=False)
    (data,) = EstimationDataLoader(tmp_path / "s.csv", tmp_path / "v.csv").load()
    assert data.x.tolist() == [1.0, 2.0, 3.0]
    assert data.n_vacuum == 2


def test_loader_rejects_missing_columns(tmp_path):
    pd.DataFrame({"mode_index": [0], "x": [1.0], "y": [1.0]}).to_csv(tmp_path / "s.csv", index=False)
    pd.DataFrame({"slot_index": [0], "y0": [1.0]}).to_csv(tmp_path / "v.csv", index=False)
    with pytest.raises(MalformedData, match="slot_index"):
        EstimationDataLoader(tmp_path / "s.csv", tmp_path / "v.csv").load()


def test_loader_rejects_non_numeric(tmp_path):
    pd.DataFrame({"mode_index": [0, 0], "slot_index": [0, 1], "x": ["1.0", "abc"], "y": [1.0, 2.0]}).to_csv(
        tmp_path / "s.csv", index=False
    )
    pd.DataFrame({"slot_index": [0], "y0": [1.0]}).to_csv(tmp_path / "v.csv", index=False)
    with pytest.raises(MalformedData, match="non-numeric"):
        EstimationDataLoader(tmp_path / "s.csv", tmp_path / "v.csv").load()


def test_loader_missing_file(tmp_path):
    with pytest.raises(MalformedData):
        EstimationDataLoader(tmp_path / "nope.csv", tmp_path / "v.csv").load()
