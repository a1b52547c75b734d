"""
Security check and secrecy capacity
The entanglement test on disclosed slots, entropy helpers, and the wiretap
capacity stack: I_AB, the Holevo bound chi_BE from closed-form symplectic
eigenvalues (with a covariance-matrix cross-check), and the OAM-multiplexed
capacity N x (q_b I_AB - q_e chi_BE).
"""

from typing import Iterable, Literal, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import brentq
from scipy.special import xlogy

from app.channel.channel_model import noise_budget
from app.core.gaussian_core import (
    CovarianceMatrix,
    QuadraturePair,
    beam_splitter,
    condition_on_heterodyne,
    direct_sum,
    epr_covariance,
    symplectic_spectrum,
)
from app.errors import (
    CalibrationInfeasible,
    DomainError,
    InsufficientSamples,
    InvalidParams,
    LengthMismatch,
    NonPhysicalSpectrum,
)
from app.schemas.params import CapacityParams
from app.schemas.reports import CapacityReport, SecurityCheckResult, SymplecticSpectrumReport
from app.utils.logging_setup import get_logger

logger = get_logger(__name__)

SECURITY_THRESHOLD = 2.0
MIN_CHECK_SLOTS = 1000
SPECTRUM_TOLERANCE = 1e-6
_LN2 = np.log(2.0)


# =============================================================================
# SECURITY CHECK
# =============================================================================

def security_check(
    alice: QuadraturePair,
    bob: QuadraturePair,
    sign_choice: Literal["-+", "+-"] = "-+",
    min_slots: int = MIN_CHECK_SLOTS,
) -> SecurityCheckResult:
    """
    Var[(xA -/+ xB)/sqrt2] + Var[(pA +/- pB)/sqrt2] on paired check slots.

    "-+" takes the x difference and the p sum, the squeezed pair of the
    two-mode source; the channel is judged safe when the statistic is below 2.

    Args:
        alice: Alice's local measurement of S_M on the check slots
        bob: Bob's measurement of the received S_C on the same slots
        sign_choice: "-+" or "+-"
        min_slots: Smallest sample accepted

    Raises:
        LengthMismatch: unpaired samples
        InsufficientSamples: fewer than min_slots pairs
    """
    if alice.x.shape != bob.x.shape:
        raise LengthMismatch(f"{alice.size} Alice samples vs {bob.size} Bob samples")
    if alice.size < min_slots:
        raise InsufficientSamples(f"security check needs >= {min_slots} slots, got {alice.size}")
    if sign_choice not in ("-+", "+-"):
        raise InvalidParams(f"sign_choice must be '-+' or '+-', got {sign_choice!r}")

    sx = -1.0 if sign_choice == "-+" else 1.0
    root2 = np.sqrt(2.0)
    statistic = float(np.var((alice.x + sx * bob.x) / root2) + np.var((alice.p - sx * bob.p) / root2))
    passed = statistic < SECURITY_THRESHOLD
    logger.debug(f"Security statistic {statistic:.4f} over {alice.size} slots ({'pass' if passed else 'fail'})")
    return SecurityCheckResult(
        statistic=statistic,
        threshold=SECURITY_THRESHOLD,
        passed=passed,
        slots_used=alice.size,
        sign_choice=sign_choice,
    )


# =============================================================================
# ENTROPIES
# =============================================================================

def binary_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"binary entropy needs p in [0, 1], got {p}")
    return float(-(xlogy(p, p) + xlogy(1.0 - p, 1.0 - p)) / _LN2)


def quaternary_entropy(e: float) -> float:
    """h4(e) = -(1-e) log2(1-e) - e log2(e/3), for e in [0, 3/4]."""
    if not 0.0 <= e <= 0.75:
        raise DomainError(f"quaternary entropy needs e in [0, 3/4], got {e}")
    return float(-(xlogy(1.0 - e, 1.0 - e) + xlogy(e, e / 3.0)) / _LN2)


def g_function(x) -> np.ndarray:
    """G(x) = (x+1) log2(x+1) - x log2 x, with G(0) = 0."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, None)
    return (xlogy(x + 1.0, x + 1.0) - xlogy(x, x)) / _LN2


# =============================================================================
# MUTUAL INFORMATION AND HOLEVO BOUND
# =============================================================================

def mutual_information_ab(params: CapacityParams) -> float:
    """I_AB = log2((V + chi_tot) / (1 + chi_tot)), both quadratures."""
    chi_tot = noise_budget(params.channel).chi_tot
    return float(np.log2((params.V + chi_tot) / (1.0 + chi_tot)))


def _eigen_pair(s: float, p: float, label: str) -> Tuple[float, float]:
    """Square roots of the roots of z^2 - s z + p."""
    disc = s * s - 4.0 * p
    if disc < 0.0:
        if disc < -1e-9 * max(1.0, s * s):
            raise NonPhysicalSpectrum(f"complex {label} eigenvalues (discriminant {disc:.3e})")
        disc = 0.0
    root = np.sqrt(disc)
    hi, lo = 0.5 * (s + root), 0.5 * (s - root)
    if lo < 0.0:
        raise NonPhysicalSpectrum(f"negative squared {label} eigenvalue {lo:.3e}")
    return float(np.sqrt(hi)), float(np.sqrt(lo))


def holevo_bound(params: CapacityParams) -> Tuple[SymplecticSpectrumReport, float]:
    """
    Eve's Holevo information for an entangling cloner and trusted heterodyne detection.

    A = V^2 (1 - 2T) + 2T + T^2 (V + chi_line)^2 and B = T^2 (V chi_line + 1)^2
    give the squared eigenvalues of Alice-Bob; C and D those of Alice plus the
    detector modes once Bob has measured. chi_het is the detector noise chi_h.

    Returns:
        (spectrum report, chi_BE in bits per pulse)

    Raises:
        NonPhysicalSpectrum: an eigenvalue below 1 - 1e-6
    """
    t = params.channel.T
    v = params.V
    budget = noise_budget(params.channel)
    chi_line, chi_het, chi_tot = budget.chi_line, budget.chi_h, budget.chi_tot

    a = v * v * (1.0 - 2.0 * t) + 2.0 * t + t * t * (v + chi_line) ** 2
    b = t * t * (v * chi_line + 1.0) ** 2
    denom = (t * (v + chi_tot)) ** 2
    c = (
        a * chi_het**2
        + b
        + 1.0
        + 2.0 * chi_het * (v * np.sqrt(b) + t * (v + chi_line))
        + 2.0 * t * (v * v - 1.0)
    ) / denom
    d = (v + np.sqrt(b) * chi_het) ** 2 / denom

    lam1, lam2 = _eigen_pair(a, b, "Alice-Bob")
    lam3, lam4 = _eigen_pair(c, d, "conditional")
    lambdas = (lam1, lam2, lam3, lam4, 1.0)
    if min(lambdas) < 1.0 - SPECTRUM_TOLERANCE:
        logger.error(f"Non-physical symplectic spectrum {lambdas} at T={t}, V={v}")
        raise NonPhysicalSpectrum(f"symplectic eigenvalue {min(lambdas):.9f} below 1")

    g = g_function((np.array(lambdas) - 1.0) / 2.0)
    chi_be = float(g[0] + g[1] - g[2] - g[3] - g[4])
    report = SymplecticSpectrumReport(a_term=a, b_term=b, c_term=c, d_term=d, lambdas=lambdas)
    return report, chi_be


def holevo_bound_from_covariance(params: CapacityParams) -> Tuple[Tuple[float, ...], float]:
    """
    Same bound from explicit covariance matrices.

    Modes: A, B (after the channel), then the detector's EPR pair (F0, G) with
    variance 1 + 2 v_el/(1 - eta). B and F0 meet on a beam splitter of
    transmissivity eta, B is heterodyned, and A, F, G remain.
    """
    t = params.channel.T
    v = params.V
    eta, v_el = params.channel.eta, params.channel.v_el
    chi_line = noise_budget(params.channel).chi_line

    corr = np.sqrt(t * (v * v - 1.0))
    z = np.diag([1.0, -1.0])
    eye = np.eye(2)
    gamma_ab = CovarianceMatrix(np.block([[v * eye, corr * z], [corr * z, t * (v + chi_line) * eye]]))
    lam12 = symplectic_spectrum(gamma_ab)

    if eta >= 1.0:
        if v_el > 0.0:
            raise InvalidParams("a unit-efficiency detector cannot carry electronic noise")
        detector_v = 1.0
    else:
        detector_v = 1.0 + 2.0 * v_el / (1.0 - eta)
    full = direct_sum(gamma_ab, epr_covariance(detector_v))
    mixed = beam_splitter(full, 1, 2, eta)
    lam345 = symplectic_spectrum(condition_on_heterodyne(mixed, 1))

    lambdas = tuple(float(x) for x in np.concatenate([lam12, lam345]))
    g = g_function((np.array(lambdas) - 1.0) / 2.0)
    chi_be = float(g[:2].sum() - g[2:].sum())
    return lambdas, chi_be


# =============================================================================
# CAPACITY
# =============================================================================

def secrecy_capacity(params: CapacityParams) -> CapacityReport:
    """
    c_single = q_b I_AB - q_e chi_BE; c_mux = N c_single; bps = c_mux x rep rate.

    Raw values are kept when negative; the report's *_effective fields floor at 0.
    """
    i_ab = mutual_information_ab(params)
    spectrum, chi_be = holevo_bound(params)
    budget = noise_budget(params.channel)
    c_single = params.q_b * i_ab - params.q_e * chi_be
    c_mux = params.n_modes * c_single
    if c_single < 0:
        logger.warning(
            f"Negative secrecy capacity {c_single:.4f} bit/pulse at {params.channel.distance_km} km"
        )
    return CapacityReport(
        distance_km=params.channel.distance_km,
        transmittance=params.channel.T,
        excess_noise=params.channel.excess_noise,
        chi_line=budget.chi_line,
        chi_tot=budget.chi_tot,
        i_ab=i_ab,
        chi_be=chi_be,
        c_single=c_single,
        c_mux=c_mux,
        c_mux_bps=c_mux * params.rep_rate_hz,
        n_modes=params.n_modes,
        spectrum=spectrum,
    )


def entropy_form_capacity(q_b: float, q_e: float, e: float, eps_x: float, eps_z: float, n_modes: int = 1) -> float:
    """N x (q_b [2 - h4(e)] - q_e [h(eps_x) + h(eps_z)]), bits per pulse."""
    for name, value in (("q_b", q_b), ("q_e", q_e)):
        if not 0.0 <= value <= 1.0:
            raise DomainError(f"{name} must lie in [0, 1], got {value}")
    per_mode = q_b * (2.0 - quaternary_entropy(e)) - q_e * (binary_entropy(eps_x) + binary_entropy(eps_z))
    return n_modes * per_mode


def with_distance(params: CapacityParams, distance_km: float) -> CapacityParams:
    channel = params.channel.model_copy(update={"distance_km": float(distance_km), "transmittance": None})
    return params.model_copy(update={"channel": channel})


def capacity_curve(params: CapacityParams, distances: Iterable[float]) -> pd.DataFrame:
    """One row per distance with the capacity CSV columns."""
    rows = [secrecy_capacity(with_distance(params, d)).csv_row() for d in distances]
    return pd.DataFrame(rows)


def solve_excess_noise_for_rate(params: CapacityParams, target_bps: float, upper: float = 2.0) -> float:
    """
    Excess noise at which the multiplexed capacity equals target_bps.

    Raises:
        CalibrationInfeasible: target not bracketed on [0, upper]
    """

    def gap(eps: float) -> float:
        channel = params.channel.model_copy(update={"excess_noise": eps})
        try:
            rate = secrecy_capacity(params.model_copy(update={"channel": channel})).c_mux_bps
        except NonPhysicalSpectrum:
            return -target_bps
        return rate - target_bps

    lo, hi = gap(0.0), gap(upper)
    if lo < 0 or hi > 0:
        raise CalibrationInfeasible(
            f"{target_bps:.4g} bps not reachable for excess noise in [0, {upper}]"
        )
    eps = brentq(gap, 0.0, upper, xtol=1e-10)
    logger.info(f"Excess noise {eps:.6f} SNU gives {target_bps:.4g} bps")
    return float(eps)
