"""
Report models
Immutable results returned by the security, capacity, estimation and mux modules
"""

from typing import Dict, List, Literal, Tuple

from pydantic import BaseModel, ConfigDict

_FROZEN = ConfigDict(frozen=True)


class Interval(BaseModel):
    model_config = _FROZEN

    lo: float
    hi: float

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    @property
    def half_width(self) -> float:
        return 0.5 * (self.hi - self.lo)


class SecurityCheckResult(BaseModel):
    model_config = _FROZEN

    statistic: float
    threshold: float = 2.0
    passed: bool
    slots_used: int
    sign_choice: Literal["-+", "+-"] = "-+"


class SymplecticSpectrumReport(BaseModel):
    """Closed-form eigenvalue terms; lambdas ordered lambda_1 .. lambda_5."""

    model_config = _FROZEN

    a_term: float
    b_term: float
    c_term: float
    d_term: float
    lambdas: Tuple[float, ...]


class CapacityReport(BaseModel):
    model_config = _FROZEN

    distance_km: float
    transmittance: float
    excess_noise: float
    chi_line: float
    chi_tot: float
    i_ab: float
    chi_be: float
    c_single: float
    c_mux: float
    c_mux_bps: float
    n_modes: int
    spectrum: SymplecticSpectrumReport

    @property
    def effective(self) -> bool:
        """False when the raw capacity is negative (no secure rate)."""
        return self.c_single >= 0.0

    @property
    def c_single_effective(self) -> float:
        return max(self.c_single, 0.0)

    @property
    def c_mux_effective(self) -> float:
        return max(self.c_mux, 0.0)

    @property
    def c_mux_bps_effective(self) -> float:
        return max(self.c_mux_bps, 0.0)

    def csv_row(self) -> Dict[str, float]:
        row = {
            "distance_km": self.distance_km,
            "T": self.transmittance,
            "chi_line": self.chi_line,
            "chi_tot": self.chi_tot,
            "i_ab": self.i_ab,
            "chi_be": self.chi_be,
            "c_single": self.c_single,
            "c_mux": self.c_mux,
            "c_mux_bps": self.c_mux_bps,
            "excess_noise": self.excess_noise,
            "c_mux_bps_effective": self.c_mux_bps_effective,
            "effective": self.effective,
            "n_modes": self.n_modes,
        }
        for i, lam in enumerate(self.spectrum.lambdas, start=1):
            row[f"lambda_{i}"] = lam
        return row


class EstimationReport(BaseModel):
    """Channel estimates for one mode (or the merged set) with confidence intervals."""

    model_config = _FROZEN

    label: str
    n_samples: int
    n_vacuum: int
    epsilon_pe: float
    z: float
    t_hat: float
    sigma2_hat: float
    sigma02_hat: float
    va_hat: float
    intervals: Dict[str, Interval]
    eta: float
    v_el: float
    transmittance_hat: float
    excess_noise_hat: float
    transmittance_interval: Interval
    excess_noise_interval: Interval

    def as_row(self) -> Dict[str, float]:
        row = {
            "label": self.label,
            "n_samples": self.n_samples,
            "n_vacuum": self.n_vacuum,
            "t_hat": self.t_hat,
            "sigma2_hat": self.sigma2_hat,
            "sigma02_hat": self.sigma02_hat,
            "va_hat": self.va_hat,
            "transmittance_hat": self.transmittance_hat,
            "excess_noise_hat": self.excess_noise_hat,
        }
        for name, interval in self.intervals.items():
            row[f"{name}_lo"] = interval.lo
            row[f"{name}_hi"] = interval.hi
        row["transmittance_lo"] = self.transmittance_interval.lo
        row["transmittance_hi"] = self.transmittance_interval.hi
        row["excess_noise_lo"] = self.excess_noise_interval.lo
        row["excess_noise_hi"] = self.excess_noise_interval.hi
        return row


class PerModeEstimation(BaseModel):
    model_config = _FROZEN

    modes: List[EstimationReport]
    merged: EstimationReport


class FrameHeader(BaseModel):
    model_config = _FROZEN

    protocol_version: int = 1
    n_modes: int
    charges: Tuple[int, ...]
    pad_len: int
    assignment: Literal["round_robin"] = "round_robin"
    n_symbols: int


class BlockErrorProbabilities(BaseModel):
    model_config = _FROZEN

    symbol_error: float
    bit_error: float
    noise_variance: float
