"""
Channel parameter estimation
Maximum-likelihood estimates for the linear Gaussian model y = t x + z on
disclosed samples, with confidence intervals at failure probability eps_PE and
the derived transmittance T = t^2/eta and excess noise (SNU).
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.optimize import brentq
from scipy.special import erfc

from app.channel.channel_model import transmit_pulse
from app.core.gaussian_core import QuadraturePair
from app.errors import DegenerateInput, DomainError, InvalidParams, LengthMismatch, MalformedData
from app.schemas.params import ChannelParams
from app.schemas.reports import EstimationReport, Interval, PerModeEstimation
from app.utils.logging_setup import get_logger

logger = get_logger(__name__)

MERGED_LABEL = "MUX channel"


@dataclass(frozen=True)
class EstimationInput:
    """Paired (x, y) samples plus vacuum calibration samples y0."""

    x: np.ndarray
    y: np.ndarray
    y0: np.ndarray
    epsilon_pe: float = 0.01

    def __post_init__(self):
        x, y, y0 = (np.asarray(a, dtype=float).ravel() for a in (self.x, self.y, self.y0))
        if x.shape != y.shape:
            raise LengthMismatch(f"{x.size} modulation values vs {y.size} measurements")
        if not all(np.all(np.isfinite(a)) for a in (x, y, y0)):
            raise MalformedData("estimation samples must be finite")
        if not 0.0 < self.epsilon_pe < 1.0:
            raise DomainError(f"epsilon_pe must lie in (0, 1), got {self.epsilon_pe}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "y0", y0)

    @property
    def n_samples(self) -> int:
        return int(self.x.size)

    @property
    def n_vacuum(self) -> int:
        return int(self.y0.size)


def z_for_epsilon(epsilon_pe: float) -> float:
    """
    Two-sided normal quantile: solves erfc(z / sqrt2) = eps_PE.

    Raises:
        DomainError: eps_PE outside (0, 1)
    """
    if not 0.0 < epsilon_pe < 1.0:
        raise DomainError(f"epsilon_pe must lie in (0, 1), got {epsilon_pe}")
    return float(brentq(lambda z: erfc(z / np.sqrt(2.0)) - epsilon_pe, 0.0, 40.0, xtol=1e-14, rtol=1e-15))


def _derived_intervals(t: Interval, sigma2: Interval, sigma02: Interval, eta: float, v_el: float):
    t_lo, t_hi = max(t.lo, 0.0), max(t.hi, 0.0)
    trans = Interval(lo=t_lo**2 / eta, hi=t_hi**2 / eta)
    numerators = (sigma2.lo - sigma02.hi - v_el, sigma2.hi - sigma02.lo - v_el)
    candidates = []
    for num in numerators:
        for tt in (trans.lo, trans.hi):
            if tt > 0:
                candidates.append(num / (eta * tt))
            else:
                candidates.append(np.copysign(np.inf, num))
    return trans, Interval(lo=float(min(candidates)), hi=float(max(candidates)))


def estimate(data: EstimationInput, eta: float, v_el: float, label: str = "mode") -> EstimationReport:
    """
    ML estimates and intervals for one channel.

    Args:
        data: Samples and calibration
        eta: Trusted detector efficiency
        v_el: Trusted electronic noise (SNU)
        label: Name carried into the report

    Raises:
        DegenerateInput: fewer than two samples of either kind, or sum(x^2) = 0
    """
    if not 0.0 < eta <= 1.0 or v_el < 0.0:
        raise InvalidParams(f"need 0 < eta <= 1 and v_el >= 0, got eta={eta}, v_el={v_el}")
    n, n0 = data.n_samples, data.n_vacuum
    if n < 2 or n0 < 2:
        raise DegenerateInput(f"estimation needs >= 2 samples and >= 2 vacuum samples, got {n} and {n0}")
    x, y, y0 = data.x, data.y, data.y0
    sxx = float(np.dot(x, x))
    if sxx == 0.0:
        raise DegenerateInput("modulation values are all zero")

    t_hat = float(np.dot(x, y) / sxx)
    sigma2 = float(np.mean((y - t_hat * x) ** 2))
    sigma02 = float(np.mean(y0**2))
    va = sxx / n

    z = z_for_epsilon(data.epsilon_pe)
    root2 = np.sqrt(2.0)
    d_t = z * np.sqrt(sigma2 / (n * va))
    d_sigma2 = z * sigma2 * root2 / np.sqrt(n)
    d_va = z * va * root2 / np.sqrt(n)
    d_sigma02 = z * sigma02 * root2 / np.sqrt(n0)
    intervals: Dict[str, Interval] = {
        "t": Interval(lo=t_hat - d_t, hi=t_hat + d_t),
        "sigma2": Interval(lo=sigma2 - d_sigma2, hi=sigma2 + d_sigma2),
        "sigma02": Interval(lo=sigma02 - d_sigma02, hi=sigma02 + d_sigma02),
        "va": Interval(lo=va - d_va, hi=va + d_va),
    }

    transmittance = t_hat**2 / eta
    excess = (sigma2 - sigma02 - v_el) / (eta * transmittance) if transmittance > 0 else float("nan")
    trans_int, excess_int = _derived_intervals(
        intervals["t"], intervals["sigma2"], intervals["sigma02"], eta, v_el
    )
    logger.debug(f"{label}: t={t_hat:.5f} T={transmittance:.5f} eps={excess:.5f} over {n} samples")
    return EstimationReport(
        label=label,
        n_samples=n,
        n_vacuum=n0,
        epsilon_pe=data.epsilon_pe,
        z=z,
        t_hat=t_hat,
        sigma2_hat=sigma2,
        sigma02_hat=sigma02,
        va_hat=va,
        intervals=intervals,
        eta=eta,
        v_el=v_el,
        transmittance_hat=transmittance,
        excess_noise_hat=excess,
        transmittance_interval=trans_int,
        excess_noise_interval=excess_int,
    )


def per_mode_report(
    inputs: Sequence[EstimationInput],
    eta: float,
    v_el: float,
    merged_vacuum: Optional[np.ndarray] = None,
) -> PerModeEstimation:
    """
    One report per OAM mode plus the merged channel over all (x, y) pairs.

    The merged vacuum defaults to every mode's calibration samples pooled.
    """
    if not inputs:
        raise DegenerateInput("per-mode estimation needs at least one mode")
    modes = [estimate(data, eta, v_el, label=f"OAM {i + 1}") for i, data in enumerate(inputs)]
    pooled = EstimationInput(
        x=np.concatenate([d.x for d in inputs]),
        y=np.concatenate([d.y for d in inputs]),
        y0=merged_vacuum if merged_vacuum is not None else np.concatenate([d.y0 for d in inputs]),
        epsilon_pe=inputs[0].epsilon_pe,
    )
    merged = estimate(pooled, eta, v_el, label=MERGED_LABEL)
    logger.info(f"Estimated {len(modes)} mode(s); merged T={merged.transmittance_hat:.4f}")
    return PerModeEstimation(modes=modes, merged=merged)


_TABLE_ROWS = [
    ("t_hat", lambda r: r.t_hat),
    ("sigma2_hat", lambda r: r.sigma2_hat),
    ("sigma02_hat", lambda r: r.sigma02_hat),
    ("va_hat", lambda r: r.va_hat),
    ("delta_t", lambda r: r.intervals["t"].half_width),
    ("delta_sigma2", lambda r: r.intervals["sigma2"].half_width),
    ("delta_va", lambda r: r.intervals["va"].half_width),
    ("delta_sigma02", lambda r: r.intervals["sigma02"].half_width),
    ("z", lambda r: r.z),
    ("transmittance_hat", lambda r: r.transmittance_hat),
    ("excess_noise_hat", lambda r: r.excess_noise_hat),
]


def report_table(result: PerModeEstimation) -> pd.DataFrame:
    """Quantities as rows, one column per mode and a final merged column."""
    reports: List[EstimationReport] = list(result.modes) + [result.merged]
    data = {r.label: [getter(r) for _, getter in _TABLE_ROWS] for r in reports}
    return pd.DataFrame(data, index=[name for name, _ in _TABLE_ROWS])


def synthesize_dataset(
    channel: ChannelParams,
    n_samples: int,
    n_vacuum: int,
    modulation_variance: float,
    rng: np.random.Generator,
    epsilon_pe: float = 0.01,
) -> EstimationInput:
    """Gaussian modulation through the channel model plus shot-noise calibration samples."""
    x = rng.normal(0.0, np.sqrt(modulation_variance), n_samples)
    y = transmit_pulse(channel, QuadraturePair(x, np.zeros_like(x)), rng).x
    y0 = rng.standard_normal(n_vacuum)
    return EstimationInput(x=x, y=y, y0=y0, epsilon_pe=epsilon_pe)
