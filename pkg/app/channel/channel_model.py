"""
Fiber channel and detector model
Quadrature samples pass as y = sqrt(eta*T) * x + z, z ~ Normal(0, sigma^2),
with detector efficiency and electronic noise folded into sigma^2.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from app.core.gaussian_core import QuadraturePair
from app.errors import InvalidParams
from app.schemas.params import ChannelParams, EavesdropperStrategy
from app.utils.logging_setup import get_logger

logger = get_logger(__name__)

# Penalty each quadrature picks up in an intercept-resend round trip:
# one SNU for Eve's simultaneous measurement, one for re-preparation
EVE_MEASUREMENT_NOISE = 1.0
EVE_RESEND_NOISE = 1.0


class NoiseBudget(BaseModel):
    model_config = ConfigDict(frozen=True)

    chi_line: float
    chi_h: float
    chi_tot: float


def transmittance_from_distance(alpha_db_per_km: float, distance_km: float) -> float:
    if alpha_db_per_km < 0 or distance_km < 0:
        raise InvalidParams(f"alpha and distance must be >= 0, got {alpha_db_per_km}, {distance_km}")
    return 10.0 ** (-alpha_db_per_km * distance_km / 10.0)


def noise_budget(params: ChannelParams) -> NoiseBudget:
    """
    Noise terms referred to the channel input.

    chi_line = 1/T - 1 + eps, chi_h = 2(1 + v_el)/eta - 1, chi_tot = chi_line + chi_h/T
    """
    t = params.T
    chi_line = 1.0 / t - 1.0 + params.excess_noise
    chi_h = 2.0 * (1.0 + params.v_el) / params.eta - 1.0
    return NoiseBudget(chi_line=chi_line, chi_h=chi_h, chi_tot=chi_line + chi_h / t)


def output_noise_variance(params: ChannelParams) -> float:
    """
    sigma^2 of the additive term.

    "additive": 1 + eta*T*eps + v_el (shot noise always added on top of the input).
    "beamsplitter": 1 - eta*T + eta*T*eps + v_el (loss mixes in vacuum, so a
    lossless noiseless channel adds nothing).
    """
    gain = params.eta * params.T
    excess = gain * params.excess_noise + params.v_el
    if params.noise_model == "beamsplitter":
        return 1.0 - gain + excess
    return 1.0 + excess


def transmit_pulse(params: ChannelParams, pulses: QuadraturePair, rng: np.random.Generator) -> QuadraturePair:
    """
    Send pulses through fiber and detector.

    Args:
        params: Channel parameters
        pulses: Input quadratures
        rng: Stream owned by this channel (one per mode and beam)

    Returns:
        Detected quadratures; x and p noise drawn independently
    """
    gain = np.sqrt(params.eta * params.T)
    sigma = np.sqrt(output_noise_variance(params))
    noise = rng.standard_normal((2,) + pulses.x.shape)
    return QuadraturePair(gain * pulses.x + sigma * noise[0], gain * pulses.p + sigma * noise[1])


# =============================================================================
# EAVESDROPPER
# =============================================================================

@dataclass(frozen=True)
class EveRecord:
    """Which pulses Eve measured and what she saw (NaN where she passed)."""

    intercepted: np.ndarray
    x: np.ndarray
    p: np.ndarray

    @property
    def n_intercepted(self) -> int:
        return int(np.count_nonzero(self.intercepted))


def eavesdropper_tap(
    strategy: EavesdropperStrategy,
    pulses: QuadraturePair,
    rng: np.random.Generator,
) -> Tuple[QuadraturePair, EveRecord]:
    """
    Intercept-resend attack at the channel input.

    With probability `fraction` a pulse is measured on both quadratures and
    re-prepared from the outcome; otherwise it passes untouched.

    Returns:
        (pulses forwarded to Bob, Eve's record)
    """
    shape = pulses.x.shape
    fraction = strategy.active_fraction
    if fraction == 0.0:
        nan = np.full(shape, np.nan)
        return pulses, EveRecord(np.zeros(shape, dtype=bool), nan, nan.copy())

    mask = rng.random(shape) < fraction
    measure = rng.standard_normal((2,) + shape) * np.sqrt(EVE_MEASUREMENT_NOISE)
    resend = rng.standard_normal((2,) + shape) * np.sqrt(EVE_RESEND_NOISE)
    eve_x = pulses.x + measure[0]
    eve_p = pulses.p + measure[1]
    to_bob = QuadraturePair(
        np.where(mask, eve_x + resend[0], pulses.x),
        np.where(mask, eve_p + resend[1], pulses.p),
    )
    record = EveRecord(mask, np.where(mask, eve_x, np.nan), np.where(mask, eve_p, np.nan))
    logger.debug(f"Eavesdropper intercepted {record.n_intercepted}/{mask.size} pulses")
    return to_bob, record
