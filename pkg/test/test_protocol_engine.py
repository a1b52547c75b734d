#!/usr/bin/env python3
"""
Tests for the protocol session, Bell measurement and the effective-noise model
"""

import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

# Add the project root to the path
sys.path.append(str(Path(__file__).parent.parent))

from app.coding.gaussian_map import block_error_oracle, table_from_params
from app.coding.mask_codec import draw_codec
from app.core.gaussian_core import QuadraturePair, make_two_mode_entangled
from app.errors import CalibrationInfeasible, DomainError
from app.protocol.protocol_engine import (
    AUTH_ABORT,
    COMPLETE,
    ESTIMATION_ABORT,
    SECURITY_ABORT,
    PayloadGeometry,
    bell_measure,
    calibrate_squeezing,
    effective_noise_variance,
    encode_blocks,
    measure_effective_noise,
    mode_independence,
    mode_report,
    recover_blocks,
    run_session,
)
from app.protocol import protocol_engine
from app.schemas.params import (
    ChannelParams,
    EavesdropperStrategy,
    OamConfig,
    ProtocolConfig,
    SqueezingParams,
)
from app.utils.rng import RngSeed, make_stream

NOISELESS = ChannelParams(transmittance=1.0, excess_noise=0.0, eta=1.0, v_el=0.0, noise_model="beamsplitter")
MID_NOISE = ChannelParams(transmittance=0.9, excess_noise=0.01, eta=0.9, v_el=0.01, noise_model="beamsplitter")

SMALL = dict(codec_k=64, codec_n=128, block_bits=128, blocks=20)


def _config(**overrides) -> ProtocolConfig:
    return ProtocolConfig(**{**SMALL, **overrides})


# =============================================================================
# BELL MEASUREMENT
# =============================================================================

def test_bell_measure_arithmetic():
    pulse = QuadraturePair(np.array([0.3, -1.2]), np.array([0.7, 2.0]))
    assert np.allclose(bell_measure(pulse, pulse).x_m, 0.0)
    outcome = bell_measure(QuadraturePair([np.sqrt(2.0)], [0.0]), QuadraturePair([0.0], [0.0]))
    assert outcome.x_m[0] == pytest.approx(1.0)
    assert outcome.p_m[0] == pytest.approx(0.0)


def test_bell_measure_on_lossless_tmsv():
    n = 1_000_000
    state = make_two_mode_entangled(SqueezingParams(r=1.0), make_stream(1, "source"), n)
    outcome = bell_measure(state.sm, state.sc)
    assert np.var(outcome.x_m) == pytest.approx(np.exp(-2.0), rel=0.02)
    assert np.var(outcome.p_m) == pytest.approx(np.exp(-2.0), rel=0.02)


# =============================================================================
# PAYLOAD FRAMING
# =============================================================================

def test_default_geometry():
    geometry = PayloadGeometry.from_config(ProtocolConfig())
    assert geometry.frames_per_block == 2
    assert geometry.masked_bits == 800 * 2 * 1310
    assert geometry.n_symbols == 698_667
    assert geometry.symbol_pad == 1


def test_block_round_trip_and_error_containment():
    geometry = PayloadGeometry(blocks=6, block_bits=100, k=40, n=96, bits_per_block=3)
    codec = draw_codec(40, 96, make_stream(2, "codec"))
    whitener = RngSeed(2)
    messages = make_stream(2, "message").integers(0, 2, size=(6, 100), dtype=np.uint8)
    sent = encode_blocks(codec, messages, geometry, make_stream(2, "redundancy"), whitener)
    assert sent.size == geometry.n_symbols * 3
    assert np.array_equal(recover_blocks(codec, sent, geometry, whitener), messages)

    # Last bit of the first frame of block 3 sits in the identity part of the systematic form
    corrupted = sent.copy()
    corrupted[3 * geometry.frames_per_block * 96 + 95] ^= 1
    decoded = recover_blocks(codec, corrupted, geometry, whitener)
    differs = np.any(decoded != messages, axis=1)
    assert differs.tolist() == [False, False, False, True, False, False]


def test_unmasked_geometry_and_bit_for_bit_recovery():
    geometry = PayloadGeometry(blocks=5, block_bits=100, k=40, n=96, bits_per_block=3, masking=False)
    assert geometry.frames_per_block == 1
    assert geometry.masked_bits == 500
    assert geometry.n_symbols == 167
    whitener = RngSeed(4)
    messages = make_stream(4, "message").integers(0, 2, size=(5, 100), dtype=np.uint8)
    sent = encode_blocks(None, messages, geometry, make_stream(4, "redundancy"), whitener)
    assert sent.size == 167 * 3
    assert np.array_equal(recover_blocks(None, sent, geometry, whitener), messages)

    corrupted = sent.copy()
    corrupted[[7, 333]] ^= 1
    flipped = np.argwhere(recover_blocks(None, corrupted, geometry, whitener) != messages)
    assert flipped.tolist() == [[0, 7], [3, 33]]


# =============================================================================
# SESSIONS
# =============================================================================

def test_noiseless_session_is_error_free():
    config = _config(channel=NOISELESS, squeezing=SqueezingParams(r=15.0), blocks=100)
    transcript = run_session(config)
    assert transcript.status == COMPLETE
    assert transcript.raw_bit_errors == 0
    assert transcript.message_ber == 0.0
    assert np.array_equal(transcript.decoded_blocks, transcript.sent_blocks)
    assert transcript.decoded_blocks.shape == (100, 128)


def test_phase_accounting():
    transcript = run_session(_config(channel=MID_NOISE, squeezing=SqueezingParams(r=2.0)))
    slots = transcript.slots
    total = sum(transcript.phase_counts.values())
    assert len(slots) == total
    assert np.array_equal(slots["slot"].to_numpy(), np.arange(total))
    assert slots["phase"].value_counts().to_dict() == transcript.phase_counts
    payload = slots[slots["phase"] == "payload"]
    assert len(payload) == transcript.n_symbols
    assert payload["block_id"].between(0, 19).all()
    assert (slots.loc[slots["phase"] == "check", "mode"] == -1).all()
    assert len(transcript.blocks_frame()) == 20


def test_sessions_are_reproducible():
    config = _config(channel=MID_NOISE, squeezing=SqueezingParams(r=2.0), oam=OamConfig(crosstalk=0.05))
    first, second = run_session(config), run_session(config)
    assert first.summary() == second.summary()
    pd.testing.assert_frame_equal(first.slots, second.slots)


def test_intercept_resend_aborts():
    attack = EavesdropperStrategy(kind="intercept_resend", fraction=1.0)
    for seed in range(5):
        transcript = run_session(_config(squeezing=SqueezingParams(r=0.5), eavesdropper=attack, seed=seed))
        assert transcript.status == SECURITY_ABORT
        assert transcript.authentication is None
        assert transcript.message_bits == 0


def test_impostor_fails_authentication():
    transcript = run_session(_config(squeezing=SqueezingParams(r=0.5), impostor_bob=True))
    assert transcript.security.passed
    assert transcript.status == AUTH_ABORT
    assert transcript.authentication.statistic > 2.2


@pytest.mark.parametrize(
    "channel, r, quadrature",
    [(MID_NOISE, 2.0, "x"), (ChannelParams(), 0.5, "x"), (MID_NOISE, 1.0, "alternate")],
)
def test_error_rates_match_oracle(channel, r, quadrature):
    config = _config(
        channel=channel,
        squeezing=SqueezingParams(r=r),
        oam=OamConfig(n_modes=1),
        blocks=200,
        pilot_fraction=0.5,
        modulated_quadrature=quadrature,
    )
    transcript = run_session(config)
    assert transcript.status == COMPLETE
    predicted = transcript.prediction
    n = transcript.n_symbols
    ser = predicted.symbol_error
    # extra slack covers the pilot gain estimate
    assert abs(transcript.symbol_error_rate - ser) <= 3 * np.sqrt(ser * (1 - ser) / n) + 0.002
    assert abs(transcript.raw_ber - predicted.bit_error) <= 3 * np.sqrt(predicted.bit_error / n) + 0.002


def test_summary_fields():
    transcript = run_session(_config(channel=MID_NOISE, squeezing=SqueezingParams(r=2.0)))
    summary = transcript.summary()
    assert summary["status"] == COMPLETE
    assert summary["blocks"] == 20
    assert len(summary["estimation"]["modes"]) == 4
    assert summary["header"]["n_modes"] == 4
    assert len(summary["modes"]) == 4
    assert len(summary["mode_independence"]) == 6
    assert "timings" not in summary


def test_estimation_failure_aborts_cleanly(monkeypatch):
    fit = protocol_engine._estimate_modes

    def inverted(config, seed, pilot_values, outcomes):
        return fit(config, seed, pilot_values, -outcomes)

    monkeypatch.setattr(protocol_engine, "_estimate_modes", inverted)
    transcript = run_session(_config(channel=MID_NOISE, squeezing=SqueezingParams(r=2.0)))
    assert transcript.status == ESTIMATION_ABORT
    assert not transcript.completed
    assert all(report.t_hat < 0 for report in transcript.estimation.modes)
    summary = transcript.summary()
    assert len(summary["estimation"]["modes"]) == 4
    assert "raw_ber" not in summary
    assert np.isnan(transcript.message_ber)
    pilots = transcript.slots[transcript.slots["phase"] == "pilot"]
    assert pilots["x_m"].notna().all()
    assert pilots["d_hat"].isna().all()
    assert (transcript.slots.loc[transcript.slots["phase"] == "payload", "mode"] == -1).all()


# =============================================================================
# MASKING BASELINE
# =============================================================================

def test_unmasked_session_maps_message_bits_directly():
    config = _config(
        channel=MID_NOISE,
        squeezing=SqueezingParams(r=1.0),
        oam=OamConfig(n_modes=1),
        blocks=200,
        pilot_fraction=0.5,
        masking=False,
    )
    transcript = run_session(config)
    assert transcript.status == COMPLETE
    assert transcript.codec_record is None
    assert transcript.summary()["codec"] is None
    assert transcript.n_symbols == -(-200 * 128 // 3)
    # only the zero padding of the last symbol is not message data
    message_errors = int(transcript.block_errors.sum())
    assert transcript.raw_bit_errors - 3 <= message_errors <= transcript.raw_bit_errors
    predicted = transcript.prediction.bit_error
    n = transcript.n_symbols
    assert abs(transcript.raw_ber - predicted) <= 3 * np.sqrt(predicted / n) + 0.002


def test_masking_keeps_raw_errors_and_spreads_them_over_the_frame():
    base = dict(channel=NOISELESS, squeezing=SqueezingParams(r=2.0), blocks=200, pilot_fraction=0.5)
    masked = run_session(_config(**base))
    plain = run_session(_config(**base, masking=False))
    assert masked.status == plain.status == COMPLETE
    predicted = masked.prediction.bit_error
    assert plain.prediction.bit_error == pytest.approx(predicted)
    for transcript in (masked, plain):
        n = transcript.n_symbols
        assert abs(transcript.raw_ber - predicted) <= 3 * np.sqrt(predicted / n) + 0.002
    # a raw error on a redundancy bit reaches every message bit of its frame that depends on it
    assert plain.message_ber == pytest.approx(plain.raw_ber, abs=0.01)
    assert 0.0 < plain.message_ber < 0.15
    assert masked.message_ber > 0.3


# =============================================================================
# PER-MODE DIAGNOSTICS
# =============================================================================

def test_mode_report_adds_up_to_session_counts():
    transcript = run_session(_config(channel=MID_NOISE, squeezing=SqueezingParams(r=1.0), blocks=50))
    modes = mode_report(transcript)
    assert modes["mode"].tolist() == [0, 1, 2, 3]
    assert modes["n_symbols"].sum() == transcript.n_symbols
    assert modes["symbol_errors"].sum() == transcript.symbol_errors
    assert modes["bit_errors"].sum() == transcript.raw_bit_errors
    assert (modes["correlation"] > 0.9).all()
    assert modes["t_hat"].tolist() == [report.t_hat for report in transcript.estimation.modes]
    payload = transcript.slots[transcript.slots["phase"] == "payload"]
    assert (payload["label"] >= 0).all() and (payload["label_hat"] >= 0).all()
    assert (transcript.slots.loc[transcript.slots["phase"] != "payload", "label"] == -1).all()


@pytest.mark.parametrize("on", ["error", "residual"])
def test_modes_are_independent_without_crosstalk(on):
    transcript = run_session(_config(channel=MID_NOISE, squeezing=SqueezingParams(r=1.0), blocks=100))
    assert transcript.config.oam.crosstalk == 0.0
    pairs = mode_independence(transcript.slots, 4, on=on)
    assert len(pairs) == 6
    assert (pairs["positions"] == transcript.n_symbols // 4).all()
    assert (pairs["p_value"] > 1e-4).all(), pairs


def test_crosstalk_couples_adjacent_modes_only():
    config = _config(
        channel=MID_NOISE, squeezing=SqueezingParams(r=1.0), oam=OamConfig(crosstalk=0.3), blocks=400
    )
    pairs = mode_independence(run_session(config).slots, 4, on="residual").set_index(["mode_a", "mode_b"])
    assert pairs.loc[(1, 2), "p_value"] < 1e-6
    # charge order has no wrap-around, so the end modes stay apart
    assert pairs.loc[(0, 3), "p_value"] > 1e-4


def test_mode_independence_degenerate_inputs():
    transcript = run_session(_config(channel=NOISELESS, squeezing=SqueezingParams(r=15.0)))
    pairs = mode_independence(transcript.slots, 4, on="error")
    assert (pairs["statistic"] == 0.0).all() and (pairs["p_value"] == 1.0).all()
    assert mode_independence(transcript.slots, 1).empty
    with pytest.raises(DomainError):
        mode_independence(transcript.slots, 4, on="phase")


# =============================================================================
# DEFAULT GEOMETRY
# =============================================================================

@pytest.mark.slow
@pytest.mark.parametrize("pilot_fraction, slack", [(0.1, 0.002), (0.5, 0.0005)])
def test_default_session_matches_oracle(pilot_fraction, slack):
    transcript = run_session(ProtocolConfig(pilot_fraction=pilot_fraction))
    assert transcript.status == COMPLETE
    assert transcript.decoded_blocks.shape == (800, 1310)
    assert transcript.n_symbols == 698_667
    assert transcript.header.n_modes == 4
    predicted = transcript.prediction
    n = transcript.n_symbols
    ser = predicted.symbol_error
    # slack covers the pilot gain estimate; it shrinks with more pilots
    assert abs(transcript.symbol_error_rate - ser) <= 3 * np.sqrt(ser * (1 - ser) / n) + slack
    assert abs(transcript.raw_ber - predicted.bit_error) <= 3 * np.sqrt(predicted.bit_error / n) + slack


# =============================================================================
# NOISE MODEL
# =============================================================================

def test_effective_noise_limits():
    ideal = ChannelParams(transmittance=1.0, excess_noise=0.0, eta=1.0, v_el=0.0)
    assert effective_noise_variance(_config(channel=ideal, squeezing=SqueezingParams(r=20.0))) == pytest.approx(2.0)
    assert effective_noise_variance(_config(channel=ideal, squeezing=SqueezingParams(r=0.0))) == pytest.approx(4.0)


def test_effective_noise_monotone():
    values = [effective_noise_variance(_config(squeezing=SqueezingParams(r=r))) for r in (0.0, 0.5, 1.0, 2.0)]
    assert np.all(np.diff(values) < 0)
    noisy = [
        effective_noise_variance(_config(channel=ChannelParams(excess_noise=eps))) for eps in (0.0, 0.05, 0.2)
    ]
    assert np.all(np.diff(noisy) > 0)


@pytest.mark.parametrize(
    "overrides",
    [
        {},
        {"channel": MID_NOISE, "squeezing": SqueezingParams(r=2.0)},
        {"oam": OamConfig(crosstalk=0.1)},
        {"eavesdropper": EavesdropperStrategy(kind="intercept_resend", fraction=0.5)},
        {"modulated_quadrature": "alternate", "oam": OamConfig(n_modes=3, crosstalk=0.05)},
    ],
)
def test_effective_noise_matches_monte_carlo(overrides):
    config = _config(**overrides)
    assert measure_effective_noise(config) == pytest.approx(effective_noise_variance(config), rel=0.02)


def test_calibrate_squeezing_on_noiseless_channel():
    config = _config(channel=NOISELESS)
    r = calibrate_squeezing(config, 0.0038)
    assert 4.7 <= r <= 5.0
    tuned = config.model_copy(update={"squeezing": SqueezingParams(r=r)})
    table = table_from_params(config.mapping)
    assert block_error_oracle(table, effective_noise_variance(tuned)).bit_error == pytest.approx(0.0038, rel=1e-3)


def test_calibrate_squeezing_infeasible_at_lossy_point():
    with pytest.raises(CalibrationInfeasible):
        calibrate_squeezing(_config(), 0.0038)
    with pytest.raises(DomainError):
        calibrate_squeezing(_config(), 0.6)


# =============================================================================
# CONFIG
# =============================================================================

def test_config_validation():
    with pytest.raises(ValidationError):
        ProtocolConfig(check_fraction=0.4, auth_fraction=0.4, pilot_fraction=0.3)
    with pytest.raises(ValidationError):
        ProtocolConfig(codec_k=10, codec_n=10)
