"""
Parameter models
Validated, immutable inputs shared by the simulator modules
"""

from typing import Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

_FROZEN = ConfigDict(frozen=True, extra="forbid")


class SqueezingParams(BaseModel):
    model_config = _FROZEN

    # r > 0 squeezes x and antisqueezes p
    r: float = Field(1.0, ge=0.0)


class ChannelParams(BaseModel):
    """
    Fiber channel plus detector.

    `transmittance` overrides the fiber-loss law when set; `T` always holds
    the value in use.
    """

    model_config = _FROZEN

    distance_km: float = Field(10.0, ge=0.0)
    alpha_db_per_km: float = Field(0.2, ge=0.0)
    transmittance: Optional[float] = Field(None, gt=0.0, le=1.0)
    excess_noise: float = Field(0.0184, ge=0.0)
    eta: float = Field(0.5, gt=0.0, le=1.0)
    v_el: float = Field(0.01, ge=0.0)
    noise_model: Literal["additive", "beamsplitter"] = "additive"

    @property
    def T(self) -> float:
        if self.transmittance is not None:
            return float(self.transmittance)
        return 10.0 ** (-self.alpha_db_per_km * self.distance_km / 10.0)

    @model_validator(mode="after")
    def _check_transmittance(self):
        if not 0.0 < self.T <= 1.0:
            raise ValueError(f"transmittance {self.T!r} outside (0, 1]")
        return self


class EavesdropperStrategy(BaseModel):
    model_config = _FROZEN

    kind: Literal["none", "intercept_resend"] = "none"
    fraction: float = Field(0.0, ge=0.0, le=1.0)

    @property
    def active_fraction(self) -> float:
        return self.fraction if self.kind == "intercept_resend" else 0.0


def default_charges(n_modes: int) -> Tuple[int, ...]:
    """Symmetric nonzero charges, e.g. 4 modes -> (-2, -1, 1, 2)."""
    charges = []
    level = 1
    while len(charges) < n_modes:
        charges.append(level)
        if len(charges) < n_modes:
            charges.append(-level)
        level += 1
    return tuple(sorted(charges))


class OamConfig(BaseModel):
    model_config = _FROZEN

    n_modes: int = Field(4, ge=1)
    topological_charges: Tuple[int, ...] = ()
    crosstalk: float = Field(0.0, ge=0.0, lt=1.0)

    @model_validator(mode="before")
    @classmethod
    def _fill_charges(cls, data):
        if isinstance(data, dict) and not data.get("topological_charges"):
            data = dict(data)
            data["topological_charges"] = default_charges(int(data.get("n_modes", 4)))
        return data

    @model_validator(mode="after")
    def _check_charges(self):
        if len(self.topological_charges) != self.n_modes:
            raise ValueError(
                f"{len(self.topological_charges)} topological charges for {self.n_modes} modes"
            )
        if len(set(self.topological_charges)) != self.n_modes:
            raise ValueError(f"topological charges must be distinct: {self.topological_charges}")
        return self


class MappingParams(BaseModel):
    model_config = _FROZEN

    bits_per_block: int = Field(3, ge=1, le=8)
    variance: float = Field(8.0, gt=0.0)
    clamp: Optional[float] = Field(7.0, gt=0.0)
    tail_mode: Literal["clamp", "truncate"] = "clamp"


class CapacityParams(BaseModel):
    model_config = _FROZEN

    modulation_variance: float = Field(8.0, gt=0.0)
    channel: ChannelParams = ChannelParams()
    q_b: float = Field(1.0, ge=0.0, le=1.0)
    q_e: float = Field(1.0, ge=0.0, le=1.0)
    n_modes: int = Field(4, ge=1)
    rep_rate_hz: float = Field(50e6, gt=0.0)

    @property
    def V(self) -> float:
        return self.modulation_variance + 1.0


class ProtocolConfig(BaseModel):
    """Everything one protocol session needs, seed included."""

    model_config = _FROZEN

    squeezing: SqueezingParams = SqueezingParams()
    channel: ChannelParams = ChannelParams()
    eavesdropper: EavesdropperStrategy = EavesdropperStrategy()
    oam: OamConfig = OamConfig()
    mapping: MappingParams = MappingParams()
    codec_k: int = Field(655, ge=1)
    codec_n: int = Field(1310, ge=2)
    blocks: int = Field(800, ge=1)
    block_bits: int = Field(1310, ge=1)
    check_fraction: float = Field(0.05, ge=0.0, lt=1.0)
    auth_fraction: float = Field(0.05, ge=0.0, lt=1.0)
    pilot_fraction: float = Field(0.1, ge=0.0, lt=1.0)
    min_check_slots: int = Field(1000, ge=2)
    epsilon_pe: float = Field(0.01, gt=0.0, lt=1.0)
    seed: int = Field(42, ge=0, le=2**64 - 1)
    modulated_quadrature: Literal["x", "alternate"] = "x"
    security_sign: Literal["-+", "+-"] = "-+"
    whitening: bool = True
    impostor_bob: bool = False
    # off: raw message bits go straight to the mapper, the unmasked baseline
    masking: bool = True

    @model_validator(mode="after")
    def _check_geometry(self):
        if not 0 < self.codec_k < self.codec_n:
            raise ValueError(f"codec needs 0 < k < n, got k={self.codec_k}, n={self.codec_n}")
        if self.check_fraction + self.auth_fraction + self.pilot_fraction >= 1.0:
            raise ValueError("check, auth and pilot fractions must leave room for payload")
        return self
