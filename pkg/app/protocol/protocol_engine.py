"""
Protocol engine
One mask-coded direct-communication session: entangled pulse generation,
security and authentication gates on disclosed slots, in-session pilot
estimation, and the payload chain
encode -> balance -> map -> mux -> channel -> demux -> Bell -> rescale ->
demap -> unbalance -> decode.

Every pulse slot belongs to exactly one phase: check, auth, pilot or payload.
"""

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import brentq
from scipy.stats import chi2_contingency

from app.channel.channel_model import (
    EVE_MEASUREMENT_NOISE,
    EVE_RESEND_NOISE,
    eavesdropper_tap,
    output_noise_variance,
    transmit_pulse,
)
from app.channel.oam_mux import ModeFrame, demux, leakage_weight, mode_of_index, mux
from app.coding.gaussian_map import (
    bits_from_labels,
    block_error_oracle,
    demap_values,
    labels_from_bits,
    map_blocks,
    popcount,
    table_from_params,
)
from app.coding.mask_codec import (
    MaskCodec,
    WhitenerSeed,
    balance,
    decode_batch,
    draw_codec,
    encode_batch,
    seed_record,
    unbalance,
)
from app.core.gaussian_core import QuadraturePair, make_two_mode_entangled
from app.errors import CalibrationInfeasible, DomainError, LengthMismatch
from app.estimation.estimation import EstimationInput, per_mode_report
from app.schemas.params import ProtocolConfig, SqueezingParams
from app.schemas.reports import (
    BlockErrorProbabilities,
    FrameHeader,
    PerModeEstimation,
    SecurityCheckResult,
)
from app.security.security_capacity import security_check
from app.utils.logging_setup import get_logger
from app.utils.rng import RngSeed

logger = get_logger(__name__)

COMPLETE = "COMPLETE"
SECURITY_ABORT = "SECURITY_ABORT"
AUTH_ABORT = "AUTH_ABORT"
ESTIMATION_ABORT = "ESTIMATION_ABORT"

PHASES = ("check", "auth", "pilot", "payload")
_ROOT2 = np.sqrt(2.0)


# =============================================================================
# TYPES
# =============================================================================

@dataclass(frozen=True)
class BellOutcome:
    """Joint measurement of the signal and detection beams, slot by slot."""

    x_m: np.ndarray
    p_m: np.ndarray

    def __post_init__(self):
        if not (np.all(np.isfinite(self.x_m)) and np.all(np.isfinite(self.p_m))):
            raise DomainError("Bell outcomes must be finite")

    def select(self, on_p: np.ndarray) -> np.ndarray:
        """The outcome of the modulated quadrature for each slot."""
        return np.where(on_p, self.p_m, self.x_m)


@dataclass(frozen=True)
class PayloadGeometry:
    """
    How configured blocks become frames and b-bit symbols.

    Masked frames carry k message bits in n channel bits; without masking a
    whole block is one frame sent as is.
    """

    blocks: int
    block_bits: int
    k: int
    n: int
    bits_per_block: int
    masking: bool = True

    @classmethod
    def from_config(cls, config: ProtocolConfig) -> "PayloadGeometry":
        return cls(
            config.blocks,
            config.block_bits,
            config.codec_k,
            config.codec_n,
            config.mapping.bits_per_block,
            config.masking,
        )

    @property
    def frame_k(self) -> int:
        return self.k if self.masking else self.block_bits

    @property
    def frame_n(self) -> int:
        return self.n if self.masking else self.block_bits

    @property
    def frames_per_block(self) -> int:
        return -(-self.block_bits // self.frame_k)

    @property
    def n_frames(self) -> int:
        return self.blocks * self.frames_per_block

    @property
    def masked_bits(self) -> int:
        return self.n_frames * self.frame_n

    @property
    def n_symbols(self) -> int:
        return -(-self.masked_bits // self.bits_per_block)

    @property
    def symbol_pad(self) -> int:
        return self.n_symbols * self.bits_per_block - self.masked_bits

    def block_of_symbol(self, symbols: np.ndarray) -> np.ndarray:
        first_bit = np.asarray(symbols) * self.bits_per_block
        return np.minimum(first_bit // (self.frames_per_block * self.frame_n), self.blocks - 1)


@dataclass
class SessionTranscript:
    """
    Everything a session produced.

    Aborted sessions keep the gate results and phase counts, plus the pilot
    estimation when that is what failed; payload fields stay empty. `timings`
    is diagnostic only and never exported.
    """

    status: str
    config: ProtocolConfig
    phase_counts: Dict[str, int]
    security: SecurityCheckResult
    authentication: Optional[SecurityCheckResult] = None
    estimation: Optional[PerModeEstimation] = None
    header: Optional[FrameHeader] = None
    codec_record: Optional[Dict[str, Any]] = None
    sent_blocks: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=np.uint8))
    decoded_blocks: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=np.uint8))
    n_symbols: int = 0
    symbol_errors: int = 0
    raw_bits: int = 0
    raw_bit_errors: int = 0
    effective_noise: Optional[float] = None
    prediction: Optional[BlockErrorProbabilities] = None
    slots: pd.DataFrame = field(default_factory=pd.DataFrame)
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def completed(self) -> bool:
        return self.status == COMPLETE

    @property
    def block_errors(self) -> np.ndarray:
        if not self.completed:
            return np.zeros(0, dtype=np.int64)
        return np.count_nonzero(self.sent_blocks != self.decoded_blocks, axis=1)

    @property
    def raw_ber(self) -> float:
        return self.raw_bit_errors / self.raw_bits if self.raw_bits else float("nan")

    @property
    def symbol_error_rate(self) -> float:
        return self.symbol_errors / self.n_symbols if self.n_symbols else float("nan")

    @property
    def message_bits(self) -> int:
        return int(self.sent_blocks.size)

    @property
    def message_ber(self) -> float:
        return float(self.block_errors.sum()) / self.message_bits if self.message_bits else float("nan")

    def blocks_frame(self) -> pd.DataFrame:
        errors = self.block_errors
        bits = self.sent_blocks.shape[1] if self.completed else 0
        return pd.DataFrame(
            {
                "block_id": np.arange(errors.size),
                "bit_errors": errors,
                "ber": errors / bits if bits else np.zeros(errors.size),
            }
        )

    def summary(self) -> Dict[str, Any]:
        """JSON-ready record; deterministic for a fixed config."""
        record: Dict[str, Any] = {
            "status": self.status,
            "seed": self.config.seed,
            "config": self.config.model_dump(mode="json"),
            "phase_counts": dict(self.phase_counts),
            "security": self.security.model_dump(mode="json"),
            "authentication": self.authentication.model_dump(mode="json") if self.authentication else None,
        }
        if self.estimation is not None:
            record["estimation"] = self.estimation.model_dump(mode="json")
        if not self.completed:
            return record
        record.update(
            {
                "header": self.header.model_dump(mode="json"),
                "codec": self.codec_record,
                "blocks": int(self.sent_blocks.shape[0]),
                "n_symbols": self.n_symbols,
                "symbol_errors": self.symbol_errors,
                "symbol_error_rate": self.symbol_error_rate,
                "raw_bits": self.raw_bits,
                "raw_bit_errors": self.raw_bit_errors,
                "raw_ber": self.raw_ber,
                "message_bits": self.message_bits,
                "message_bit_errors": int(self.block_errors.sum()),
                "message_ber": self.message_ber,
                "effective_noise_variance": self.effective_noise,
                "predicted": self.prediction.model_dump(mode="json"),
                "modes": mode_report(self).to_dict(orient="records"),
                "mode_independence": mode_independence(self.slots, self.config.oam.n_modes).to_dict(orient="records"),
            }
        )
        return record


# =============================================================================
# BUILDING BLOCKS
# =============================================================================

def bell_measure(signal: QuadraturePair, detection: QuadraturePair) -> BellOutcome:
    """x_m = (x_M - x_C)/sqrt2, p_m = (p_M + p_C)/sqrt2 on slot-paired pulses."""
    if signal.x.shape != detection.x.shape:
        raise LengthMismatch(f"{signal.size} signal pulses vs {detection.size} detection pulses")
    return BellOutcome((signal.x - detection.x) / _ROOT2, (signal.p + detection.p) / _ROOT2)


def phase_counts(config: ProtocolConfig, n_symbols: int) -> Dict[str, int]:
    """Slot count per phase; payload holds exactly one symbol per slot."""
    payload_fraction = 1.0 - config.check_fraction - config.auth_fraction - config.pilot_fraction
    base = math.ceil(n_symbols / payload_fraction)
    return {
        "check": max(math.ceil(config.check_fraction * base), config.min_check_slots),
        "auth": max(math.ceil(config.auth_fraction * base), config.min_check_slots),
        "pilot": max(math.ceil(config.pilot_fraction * base), 2 * config.oam.n_modes),
        "payload": n_symbols,
    }


def assign_phases(counts: Dict[str, int], rng: np.random.Generator) -> Dict[str, np.ndarray]:
    """Random disjoint slot sets, each sorted ascending."""
    order = rng.permutation(sum(counts.values()))
    phases = {}
    start = 0
    for phase in PHASES:
        phases[phase] = np.sort(order[start : start + counts[phase]])
        start += counts[phase]
    return phases


def quadrature_choice(config: ProtocolConfig, count: int) -> np.ndarray:
    """
    True where the symbol rides on p.

    "alternate" switches quadrature with the mux position, so every mode
    carries the same quadrature at a given position.
    """
    if config.modulated_quadrature == "x":
        return np.zeros(count, dtype=bool)
    return (np.arange(count) // config.oam.n_modes) % 2 == 1


def displace(pulses: QuadraturePair, values: np.ndarray, on_p: np.ndarray) -> QuadraturePair:
    return QuadraturePair(pulses.x + np.where(on_p, 0.0, values), pulses.p + np.where(on_p, values, 0.0))


def encode_blocks(
    codec: Optional[MaskCodec],
    messages: np.ndarray,
    geometry: PayloadGeometry,
    redundancy_rng: np.random.Generator,
    whitener: WhitenerSeed,
) -> np.ndarray:
    """
    Mask-encode every frame with fresh redundancy and whiten; zero-padded to whole symbols.

    With no codec the message bits are only whitened.
    """
    if codec is None:
        channel_bits = np.asarray(messages, dtype=np.uint8).ravel()
    else:
        padded = np.zeros((geometry.blocks, geometry.frames_per_block * geometry.k), dtype=np.uint8)
        padded[:, : geometry.block_bits] = messages
        redundancy = redundancy_rng.integers(
            0, 2, size=(geometry.n_frames, geometry.n - geometry.k), dtype=np.uint8
        )
        channel_bits = encode_batch(codec, padded.reshape(-1, geometry.k), redundancy).ravel()
    return np.concatenate([balance(channel_bits, whitener), np.zeros(geometry.symbol_pad, dtype=np.uint8)])


def recover_blocks(
    codec: Optional[MaskCodec],
    received_bits: np.ndarray,
    geometry: PayloadGeometry,
    whitener: WhitenerSeed,
) -> np.ndarray:
    """Inverse of encode_blocks; each frame decodes on its own."""
    channel_bits = unbalance(np.asarray(received_bits)[: geometry.masked_bits], whitener)
    if codec is None:
        return channel_bits.reshape(geometry.blocks, geometry.block_bits)
    frames = decode_batch(codec, channel_bits.reshape(-1, geometry.n))
    return frames.reshape(geometry.blocks, -1)[:, : geometry.block_bits]


def _channel_index(n_modes: int, mode: int, beam: int, segment: int) -> int:
    return 2 * n_modes * segment + 2 * mode + beam


def transmit_muxed(
    config: ProtocolConfig,
    seed: RngSeed,
    signal: QuadraturePair,
    detection: QuadraturePair,
    segment: int,
) -> Tuple[QuadraturePair, QuadraturePair, FrameHeader]:
    """
    Mux both beams over the OAM modes, send every (mode, beam) through its own
    channel stream and demux at Bob.

    Returns:
        (received signal beam, received detection beam, frame header)
    """
    n_modes = config.oam.n_modes
    received = []
    header = None
    for beam, pulses in enumerate((signal, detection)):
        frames_x, header = mux(config.oam, pulses.x)
        frames_p, _ = mux(config.oam, pulses.p)
        arrived = []
        for mode in range(n_modes):
            rng = seed.stream("channel", _channel_index(n_modes, mode, beam, segment))
            sent = QuadraturePair(frames_x[mode].pulses, frames_p[mode].pulses)
            arrived.append(ModeFrame(mode, transmit_pulse(config.channel, sent, rng)))
        received.append(demux(config.oam, arrived, header))
    return received[0], received[1], header


def _rescale(config: ProtocolConfig, outcome: np.ndarray, transmittance) -> np.ndarray:
    return _ROOT2 * outcome / np.sqrt(config.channel.eta * np.asarray(transmittance))


# =============================================================================
# SESSION
# =============================================================================

def run_session(config: ProtocolConfig) -> SessionTranscript:
    """
    Run one session end to end.

    Args:
        config: Validated protocol configuration, seed included

    Returns:
        SessionTranscript with status COMPLETE, SECURITY_ABORT, AUTH_ABORT or
        ESTIMATION_ABORT (a mode whose pilot fit gives t <= 0 cannot be rescaled)
    """
    seed = RngSeed(config.seed)
    geometry = PayloadGeometry.from_config(config)
    table = table_from_params(config.mapping)
    whitener = seed if config.whitening else None
    counts = phase_counts(config, geometry.n_symbols)
    timings: Dict[str, float] = {}
    clock = time.perf_counter()

    state = make_two_mode_entangled(config.squeezing, seed.stream("source"), sum(counts.values()))
    phases = assign_phases(counts, seed.stream("slots"))
    detection, _ = eavesdropper_tap(config.eavesdropper, state.sc, seed.stream("eve", 0))
    logger.debug(f"Session slots: {counts}")
    timings["source"] = time.perf_counter() - clock

    # Security gate: Bob measures S_C on disclosed slots, Alice measures S_M locally
    clock = time.perf_counter()
    slots = phases["check"]
    bob = transmit_pulse(config.channel, detection.take(slots), seed.stream("check_channel", 0))
    security = security_check(state.sm.take(slots), bob, config.security_sign, config.min_check_slots)
    transcript = SessionTranscript(
        status=SECURITY_ABORT, config=config, phase_counts=counts, security=security, timings=timings
    )
    if not security.passed:
        logger.warning(f"Security check failed (statistic {security.statistic:.4f}); session aborted")
        transcript.slots = _slot_table(phases, {})
        return transcript

    # Authentication gate on a second disclosed set
    slots = phases["auth"]
    if config.impostor_bob:
        draws = seed.stream("impostor").standard_normal((2, slots.size))
        reports = QuadraturePair(draws[0], draws[1])
    else:
        reports = transmit_pulse(config.channel, detection.take(slots), seed.stream("check_channel", 1))
    transcript.authentication = security_check(
        state.sm.take(slots), reports, config.security_sign, config.min_check_slots
    )
    timings["gates"] = time.perf_counter() - clock
    if not transcript.authentication.passed:
        transcript.status = AUTH_ABORT
        logger.warning(f"Authentication failed (statistic {transcript.authentication.statistic:.4f}); session aborted")
        transcript.slots = _slot_table(phases, {})
        return transcript

    # Pilots: disclosed Gaussian displacements for per-mode estimation
    clock = time.perf_counter()
    slots = phases["pilot"]
    pilot_values = seed.stream("pilot").normal(0.0, np.sqrt(config.mapping.variance), slots.size)
    pilot_on_p = quadrature_choice(config, slots.size)
    signal, _ = eavesdropper_tap(
        config.eavesdropper, displace(state.sm.take(slots), pilot_values, pilot_on_p), seed.stream("eve", 1)
    )
    signal_out, detection_out, _ = transmit_muxed(config, seed, signal, detection.take(slots), segment=0)
    pilot_bell = bell_measure(signal_out, detection_out)
    estimation = _estimate_modes(config, seed, pilot_values, pilot_bell.select(pilot_on_p))
    pilot_modes = mode_of_index(config.oam, np.arange(slots.size))
    slopes = np.array([report.t_hat for report in estimation.modes])
    t_hat = np.array([report.transmittance_hat for report in estimation.modes])
    timings["pilot"] = time.perf_counter() - clock
    if np.any(slopes <= 0.0) or np.any(t_hat <= 0.0):
        transcript.status = ESTIMATION_ABORT
        transcript.estimation = estimation
        logger.warning(f"Pilot fit gave non-positive gain on some mode (t = {slopes.tolist()}); session aborted")
        unscaled = np.full(slots.size, np.nan)
        transcript.slots = _slot_table(
            phases, {"pilot": {"mode": pilot_modes, "d_true": pilot_values, "bell": pilot_bell, "d_hat": unscaled}}
        )
        return transcript

    # Payload
    clock = time.perf_counter()
    messages = seed.stream("message").integers(0, 2, size=(config.blocks, config.block_bits), dtype=np.uint8)
    codec = draw_codec(config.codec_k, config.codec_n, seed.stream("codec")) if config.masking else None
    balanced = encode_blocks(codec, messages, geometry, seed.stream("redundancy"), whitener)
    labels = labels_from_bits(balanced, table.bits_per_block)
    values = map_blocks(table, labels, seed.stream("mapping"))

    slots = phases["payload"]
    on_p = quadrature_choice(config, slots.size)
    signal, _ = eavesdropper_tap(
        config.eavesdropper, displace(state.sm.take(slots), values, on_p), seed.stream("eve", 2)
    )
    signal_out, detection_out, header = transmit_muxed(config, seed, signal, detection.take(slots), segment=1)
    bell = bell_measure(signal_out, detection_out)
    modes = mode_of_index(config.oam, np.arange(slots.size))
    estimates = _rescale(config, bell.select(on_p), t_hat[modes])

    received_labels = demap_values(table, estimates)
    received_bits = bits_from_labels(received_labels, table.bits_per_block)
    decoded = recover_blocks(codec, received_bits, geometry, whitener)
    timings["payload"] = time.perf_counter() - clock

    noise = effective_noise_variance(config)
    transcript.status = COMPLETE
    transcript.estimation = estimation
    transcript.header = header
    if codec is not None:
        transcript.codec_record = seed_record(codec, config.seed if config.whitening else None)
    transcript.sent_blocks = messages
    transcript.decoded_blocks = decoded
    transcript.n_symbols = int(labels.size)
    transcript.symbol_errors = int(np.count_nonzero(received_labels != labels))
    transcript.raw_bits = int(balanced.size)
    transcript.raw_bit_errors = int(np.count_nonzero(received_bits != balanced))
    transcript.effective_noise = noise
    transcript.prediction = block_error_oracle(table, noise)
    pilot_estimates = _rescale(config, pilot_bell.select(pilot_on_p), t_hat[pilot_modes])
    transcript.slots = _slot_table(
        phases,
        {
            "pilot": {"mode": pilot_modes, "d_true": pilot_values, "bell": pilot_bell, "d_hat": pilot_estimates},
            "payload": {
                "mode": modes,
                "d_true": values,
                "bell": bell,
                "d_hat": estimates,
                "label": labels,
                "label_hat": received_labels,
                "block_id": geometry.block_of_symbol(np.arange(slots.size)),
            },
        },
    )
    logger.info(
        f"Session complete: {config.blocks} blocks, raw BER {transcript.raw_ber:.5f}, "
        f"message BER {transcript.message_ber:.5f} (oracle {transcript.prediction.bit_error:.5f})"
    )
    return transcript


def _estimate_modes(
    config: ProtocolConfig, seed: RngSeed, pilot_values: np.ndarray, outcomes: np.ndarray
) -> PerModeEstimation:
    """y = t x + z with x = d/sqrt2 on each mode's pilots, vacuum from the calibration streams."""
    modes = mode_of_index(config.oam, np.arange(pilot_values.size))
    inputs = []
    for mode in range(config.oam.n_modes):
        mask = modes == mode
        inputs.append(
            EstimationInput(
                x=pilot_values[mask] / _ROOT2,
                y=outcomes[mask],
                y0=seed.stream("calibration", mode).standard_normal(int(mask.sum())),
                epsilon_pe=config.epsilon_pe,
            )
        )
    return per_mode_report(inputs, config.channel.eta, config.channel.v_el)


def _slot_table(phases: Dict[str, np.ndarray], measured: Dict[str, Dict[str, Any]]) -> pd.DataFrame:
    """
    Per-slot log ordered by slot; unmeasured columns hold NaN and -1.

    `measured` maps a phase to its columns; "bell" expands to x_m and p_m.
    """
    parts = []
    for phase in PHASES:
        slots = phases[phase]
        unset = np.full(slots.size, -1, dtype=np.int64)
        part = pd.DataFrame(
            {
                "phase": phase,
                "mode": unset,
                "slot": slots,
                "d_true": np.nan,
                "x_m": np.nan,
                "p_m": np.nan,
                "d_hat": np.nan,
                "label": unset,
                "label_hat": unset,
                "block_id": unset,
            }
        )
        for name, column in measured.get(phase, {}).items():
            if name == "bell":
                part["x_m"] = column.x_m
                part["p_m"] = column.p_m
            else:
                part[name] = column
        parts.append(part)
    return pd.concat(parts, ignore_index=True).sort_values("slot", kind="stable").reset_index(drop=True)


# =============================================================================
# PER-MODE DIAGNOSTICS
# =============================================================================

def _payload_rows(slots: pd.DataFrame) -> pd.DataFrame:
    """Payload slots in symbol order."""
    return slots[slots["phase"] == "payload"].reset_index(drop=True)


def mode_report(transcript: SessionTranscript) -> pd.DataFrame:
    """
    Error counts, rates and the d / d_hat correlation for each OAM mode.

    Bit errors count differing label bits, so they sum to the session's raw
    bit errors.
    """
    payload = _payload_rows(transcript.slots)
    bits = transcript.config.mapping.bits_per_block
    rows = []
    for mode, report in enumerate(transcript.estimation.modes):
        part = payload[payload["mode"] == mode]
        labels = part["label"].to_numpy()
        received = part["label_hat"].to_numpy()
        n_symbols = int(labels.size)
        bit_errors = int(popcount(labels ^ received).sum()) if n_symbols else 0
        symbol_errors = int(np.count_nonzero(labels != received))
        if n_symbols >= 2 and np.std(part["d_hat"]) > 0.0:
            correlation = float(np.corrcoef(part["d_true"], part["d_hat"])[0, 1])
        else:
            correlation = float("nan")
        rows.append(
            {
                "mode": mode,
                "n_symbols": n_symbols,
                "symbol_errors": symbol_errors,
                "symbol_error_rate": symbol_errors / n_symbols if n_symbols else float("nan"),
                "bit_errors": bit_errors,
                "ber": bit_errors / (n_symbols * bits) if n_symbols else float("nan"),
                "correlation": correlation,
                "t_hat": report.t_hat,
                "transmittance_hat": report.transmittance_hat,
            }
        )
    return pd.DataFrame(rows)


def mode_independence(slots: pd.DataFrame, n_modes: int, on: str = "error") -> pd.DataFrame:
    """
    Chi-square test of independence between every pair of modes.

    Symbols at the same mux position are paired across modes; only complete
    positions count. `on="error"` tests the symbol-error indicators,
    `on="residual"` the sign of d_hat - d. A table with an empty row or
    column reports statistic 0 and p-value 1.
    """
    if on not in ("error", "residual"):
        raise DomainError(f"independence is tested on 'error' or 'residual', got {on!r}")
    columns = ["mode_a", "mode_b", "positions", "statistic", "p_value"]
    payload = _payload_rows(slots)
    positions = len(payload) // n_modes
    if n_modes < 2 or positions == 0:
        return pd.DataFrame(columns=columns)
    payload = payload.iloc[: positions * n_modes]
    if on == "error":
        flags = (payload["label"] != payload["label_hat"]).to_numpy()
    else:
        flags = (payload["d_hat"] > payload["d_true"]).to_numpy()
    grid = flags.reshape(positions, n_modes)

    rows = []
    for a, b in itertools.combinations(range(n_modes), 2):
        x, y = grid[:, a], grid[:, b]
        table = np.array([[np.sum(~x & ~y), np.sum(~x & y)], [np.sum(x & ~y), np.sum(x & y)]])
        if np.any(table.sum(axis=0) == 0) or np.any(table.sum(axis=1) == 0):
            statistic, p_value = 0.0, 1.0
        else:
            result = chi2_contingency(table)
            statistic, p_value = float(result[0]), float(result[1])
        rows.append({"mode_a": a, "mode_b": b, "positions": positions, "statistic": statistic, "p_value": p_value})
    return pd.DataFrame(rows, columns=columns)


# =============================================================================
# NOISE MODEL AND CALIBRATION
# =============================================================================

def effective_noise_variance(config: ProtocolConfig) -> float:
    """
    Variance of d_hat - d for the full chain with the true transmittance,
    averaged over the modes.

    Squeezed Bell combination 2e^{-2r}, channel noise of both beams 2 sigma^2/(eta T),
    intercept-resend 2 x (measure + resend) x fraction. With mode leakage c each
    neighbour's noise and displacement come along; a mode has kappa = 2(N-1)/N
    neighbours on average: (1 + kappa c^2) base + kappa c^2 V_signal.
    """
    channel = config.channel
    base = (
        2.0 * np.exp(-2.0 * config.squeezing.r)
        + 2.0 * output_noise_variance(channel) / (channel.eta * channel.T)
        + 2.0 * (EVE_MEASUREMENT_NOISE + EVE_RESEND_NOISE) * config.eavesdropper.active_fraction
    )
    leak = leakage_weight(config.oam.n_modes) * config.oam.crosstalk**2
    if leak == 0.0:
        return float(base)
    signal = table_from_params(config.mapping).signal_variance()
    return float(base * (1.0 + leak) + leak * signal)


def measure_effective_noise(config: ProtocolConfig, n_pulses: int = 200_000) -> float:
    """Monte-Carlo counterpart of effective_noise_variance over uniformly random symbols."""
    seed = RngSeed(config.seed)
    table = table_from_params(config.mapping)
    labels = seed.stream("message").integers(0, table.n_intervals, size=n_pulses)
    values = map_blocks(table, labels, seed.stream("mapping"))
    state = make_two_mode_entangled(config.squeezing, seed.stream("source"), n_pulses)
    on_p = quadrature_choice(config, n_pulses)

    detection, _ = eavesdropper_tap(config.eavesdropper, state.sc, seed.stream("eve", 0))
    signal, _ = eavesdropper_tap(config.eavesdropper, displace(state.sm, values, on_p), seed.stream("eve", 2))
    signal_out, detection_out, _ = transmit_muxed(config, seed, signal, detection, segment=1)
    estimates = _rescale(config, bell_measure(signal_out, detection_out).select(on_p), config.channel.T)
    return float(np.var(estimates - values))


def calibrate_squeezing(config: ProtocolConfig, target_ber: float, r_max: float = 20.0) -> float:
    """
    Squeezing r at which the oracle bit error equals target_ber.

    Raises:
        DomainError: target outside (0, 0.5)
        CalibrationInfeasible: no r in [0, r_max] reaches the target
    """
    if not 0.0 < target_ber < 0.5:
        raise DomainError(f"target BER must lie in (0, 0.5), got {target_ber}")
    table = table_from_params(config.mapping)

    def bit_error(r: float) -> float:
        squeezed = config.model_copy(update={"squeezing": SqueezingParams(r=r)})
        return block_error_oracle(table, effective_noise_variance(squeezed)).bit_error

    best, worst = bit_error(r_max), bit_error(0.0)
    if not best <= target_ber <= worst:
        raise CalibrationInfeasible(
            f"BER {target_ber} unreachable: squeezing in [0, {r_max}] spans [{best:.6g}, {worst:.6g}]"
        )
    r = float(brentq(lambda r: bit_error(r) - target_ber, 0.0, r_max, xtol=1e-6))
    logger.info(f"Squeezing r={r:.4f} gives oracle BER {target_ber}")
    return r
