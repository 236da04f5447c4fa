"""
Exact 1D order statistics for hullconc
Generalized inverse, law of the maximum, expected maximum by quadrature and
the two-sided concentration bounds for the maximum of n i.i.d. draws
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import quad

from config import (
    LEMMA4_MIN_N,
    LEMMA4_TOLERANCE,
    QUAD_ABS_TOL,
    QUAD_LIMIT,
    QUAD_TAIL_CUTOFF,
    SANDWICH_TOLERANCE,
)
from distributions import EmpiricalLaw, ScalarLaw, make_rng
from errors import DomainError, NumericError

logger = logging.getLogger(__name__)


def _check_count(n: int) -> None:
    if n < 1:
        raise DomainError(f"sample count must be at least 1, got {n}")


def log_cdf(law: ScalarLaw, x):
    """log J(x), using log1p(-(1 - J)) in the upper half where J is close to 1"""
    xa = np.asarray(x, dtype=float)
    sf = law._sf(xa)
    with np.errstate(divide="ignore", invalid="ignore"):
        upper = np.log1p(-np.minimum(sf, 0.5))
        lower = law._logcdf(xa)
    out = np.where(sf < 0.5, upper, lower)
    return float(out) if np.ndim(x) == 0 else out


def generalized_inverse(law: ScalarLaw, t: float) -> float:
    """J^{-1}(t) = sup{x : J(x) < t}"""
    if not 0.0 < t < 1.0:
        raise DomainError(f"generalized inverse needs t in (0, 1), got {t}")
    return law.ppf(t)


def upper_quantile(law: ScalarLaw, tail: float) -> float:
    """J^{-1}(1 - tail), accurate for tiny tail masses"""
    if not 0.0 < tail < 1.0:
        raise DomainError(f"tail mass must lie in (0, 1), got {tail}")
    return law.isf(tail)


@dataclass(frozen=True)
class MaxLaw:
    """Law of Y_(n) = max of n i.i.d. draws from base"""

    base: ScalarLaw
    n: int

    def __post_init__(self):
        _check_count(self.n)

    def log_cdf_at(self, x):
        return self.n * log_cdf(self.base, x)

    def cdf_at(self, x):
        return np.exp(self.log_cdf_at(x))

    def sf_at(self, x):
        """P{Y_(n) > x} = 1 - J(x)^n without cancellation"""
        return -np.expm1(self.log_cdf_at(x))

    def density_at(self, x):
        f = self.base.pdf(x)
        with np.errstate(divide="ignore"):
            log_f = np.log(f)
            out = np.exp(math.log(self.n) + (self.n - 1) * log_cdf(self.base, x) + log_f)
        return np.where(np.asarray(f) > 0, out, 0.0)

    def quantile(self, s: float) -> float:
        """J_n^{-1}(s) = J^{-1}(s^{1/n})"""
        if not 0.0 < s < 1.0:
            raise DomainError(f"quantile level must lie in (0, 1), got {s}")
        root_log = math.log(s) / self.n
        tail = -math.expm1(root_log)
        if tail < 0.5:
            return self.base.isf(tail)
        return self.base.ppf(math.exp(root_log))

    def sample(self, size: int, seed: int) -> np.ndarray:
        """Draws of Y_(n) by inversion: J^{-1}(V^{1/n}) with V uniform"""
        v = make_rng(seed).uniform(size=size)
        v = np.clip(v, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)
        return np.array([self.quantile(float(s)) for s in v])


def max_law_cdf(law: ScalarLaw, n: int, x):
    """J(x)^n evaluated in log-space"""
    _check_count(n)
    return MaxLaw(law, n).cdf_at(x)


def expected_max(law: ScalarLaw, n: int) -> float:
    """E Y_(n) = int_0^inf (1 - J^n) dx - int_{-inf}^0 J^n dx"""
    _check_count(n)
    if isinstance(law, EmpiricalLaw):
        return law.expected_max_exact(n)

    max_law = MaxLaw(law, n)
    cut = QUAD_TAIL_CUTOFF
    x_hi = min(law.upper, law.isf(cut / n))
    x_lo = max(law.lower, max_law.quantile(cut))

    def upper_part(x):
        return float(max_law.sf_at(x))

    def lower_part(x):
        return float(max_law.cdf_at(x))

    def integrate(fn, a, b):
        if b <= a:
            return 0.0, 0.0
        points = [p for p in (law.isf(1.0 / n) if n > 1 else law.ppf(0.5),) if a < p < b]
        value, err = quad(fn, a, b, epsabs=0.1 * QUAD_ABS_TOL, epsrel=1e-12, limit=QUAD_LIMIT,
                          points=points or None)
        return value, err

    if x_lo >= 0.0:
        # J^n is negligible on (-inf, 0] and 1 - J^n is 1 on [0, x_lo]
        value, err = integrate(upper_part, x_lo, x_hi)
        result = x_lo + value
    elif x_hi <= 0.0:
        value, err = integrate(lower_part, x_lo, x_hi)
        result = x_hi - value
    else:
        pos, err_pos = integrate(upper_part, 0.0, x_hi)
        neg, err_neg = integrate(lower_part, x_lo, 0.0)
        result, err = pos - neg, err_pos + err_neg

    if not math.isfinite(result):
        raise NumericError(f"expected maximum of {law.name} with n={n} is not finite")
    if err > QUAD_ABS_TOL * (1.0 + abs(result)):
        logger.warning(f"Quadrature error {err:.2e} above tolerance for {law.name}, n={n}")
    return result


@dataclass
class Lemma4Report:
    law: str
    n: int
    t: float
    e_max: float
    p_right: float
    bound_right: float
    p_left: float
    bound_left: float
    holds_right: bool
    holds_left: bool
    bound_left_proof: float
    holds_left_proof: bool


def lemma4_verify(law: ScalarLaw, n: int, t: float, e_max: Optional[float] = None,
                  tolerance: float = LEMMA4_TOLERANCE) -> Lemma4Report:
    """Exact check of P{Y_(n) <= (1+t)E} >= 1 - n^{-t/2} and P{Y_(n) >= (1-t)E} >= 1 - exp(-n^{t/2}/3)"""
    if n < LEMMA4_MIN_N:
        raise DomainError(f"two-sided bound needs n >= {LEMMA4_MIN_N}, got {n}")
    if not t > 0:
        raise DomainError(f"t must be positive, got {t}")
    e = expected_max(law, n) if e_max is None else e_max
    if not e > 0:
        raise NumericError(f"E Y_(n) = {e} is not positive for {law.name}, n={n}")

    max_law = MaxLaw(law, n)
    p_right = float(max_law.cdf_at((1.0 + t) * e))
    p_left = float(max_law.sf_at((1.0 - t) * e))
    bound_right = -math.expm1(-0.5 * t * math.log(n))
    root = math.exp(0.5 * t * math.log(n))
    bound_left = -math.expm1(-root / 3.0)
    bound_left_proof = -math.expm1(-9.0 * root / 20.0)
    return Lemma4Report(
        law=law.name, n=n, t=t, e_max=e,
        p_right=p_right, bound_right=bound_right,
        p_left=p_left, bound_left=bound_left,
        holds_right=p_right >= bound_right - tolerance,
        holds_left=p_left >= bound_left - tolerance,
        bound_left_proof=bound_left_proof,
        holds_left_proof=p_left >= bound_left_proof - tolerance,
    )


@dataclass
class QuantileSandwich:
    n: int
    e_max: float
    lower_quantile: float
    upper_quantile: float
    lower_holds: bool
    upper_holds: bool
    aux_lower_quantile: Optional[float] = None
    aux_upper_quantile: Optional[float] = None
    aux_lower_holds: Optional[bool] = None
    aux_upper_holds: Optional[bool] = None
    power_fact_lower: Optional[bool] = None
    power_fact_upper: Optional[bool] = None

    @property
    def all_hold(self) -> bool:
        flags = [self.lower_holds, self.upper_holds, self.aux_lower_holds, self.aux_upper_holds]
        return all(f for f in flags if f is not None)


def quantile_sandwich_check(law: ScalarLaw, n: int, e_max: Optional[float] = None,
                            tolerance: float = SANDWICH_TOLERANCE) -> QuantileSandwich:
    """J_n^{-1}(1/e) <= E Y_(n) <= J_n^{-1}(1 - 1/e), plus J^{-1}(1-1/n) <= E < J^{-1}(1-9/(20n)) for n >= 12"""
    _check_count(n)
    e = expected_max(law, n) if e_max is None else e_max
    tol = tolerance * max(1.0, law.scale)
    max_law = MaxLaw(law, n)
    lower_q = max_law.quantile(math.exp(-1.0))
    upper_q = max_law.quantile(-math.expm1(-1.0))
    report = QuantileSandwich(
        n=n, e_max=e,
        lower_quantile=lower_q, upper_quantile=upper_q,
        lower_holds=lower_q <= e + tol, upper_holds=e <= upper_q + tol,
    )
    if n >= LEMMA4_MIN_N:
        aux_lower = law.isf(1.0 / n)
        aux_upper = law.isf(9.0 / (20.0 * n))
        report.aux_lower_quantile = aux_lower
        report.aux_upper_quantile = aux_upper
        report.aux_lower_holds = aux_lower <= e + tol
        report.aux_upper_holds = e < aux_upper + tol
        report.power_fact_lower = n * math.log1p(-1.0 / n) < -1.0
        report.power_fact_upper = math.exp(n * math.log1p(-9.0 / (20.0 * n))) > -math.expm1(-1.0)
    return report
