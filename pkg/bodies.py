"""
Support oracles for the expected convex hull and the floating body,
plus the net-certified sandwich test and inclusion-probability estimator
"""
import logging
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from config import (
    DEFAULT_BRUTEFORCE_DIRECTIONS,
    DEFAULT_DENSE_DIRECTIONS,
    DEFAULT_EXPERIMENT_NET_BUDGET,
    DEFAULT_INCLUSION_DRAWS,
    DEFAULT_MC_REPLICATES,
    SUPPORT_CACHE_SIZE,
    NET_ORACLE_TOL,
    WILSON_Z,
)
from distributions import (
    DistributionModel,
    GaussianModel,
    NormalLaw,
    derive_seed,
    directional_law,
    make_rng,
    sample,
)
from errors import DomainError, NetMismatchError
from geometry import (
    Net,
    Polytope,
    SupportGauge,
    build_net,
    origin_in_interior,
    random_directions,
    sphere_directions,
)
from order_stats import expected_max

logger = logging.getLogger(__name__)

MODES = ("analytic", "mc")


def _unit(theta) -> Tuple[np.ndarray, float]:
    theta = np.asarray(theta, dtype=float).ravel()
    r = float(np.linalg.norm(theta))
    if r == 0.0:
        raise DomainError("support oracles need a non-zero direction")
    return theta / r, r


def _unit_rows(thetas) -> Tuple[np.ndarray, np.ndarray]:
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    r = np.linalg.norm(thetas, axis=1)
    if np.any(r == 0.0):
        raise DomainError("support oracles need non-zero directions")
    return thetas / r[:, None], r


# ============== Expected hull ==============

class ExpectedHullOracle:
    """h_{E P_n}(theta) = E max_i <theta, X_i>

    analytic: quadrature on the directional law (closed form for Gaussian models).
    mc: support of the Minkowski average of R sample hulls; the same R samples serve
    every direction.
    """

    def __init__(self, model: DistributionModel, n: int, mode: str = "analytic",
                 replicates: int = DEFAULT_MC_REPLICATES, seed: int = 0,
                 cache_size: int = SUPPORT_CACHE_SIZE):
        if n < 1:
            raise DomainError(f"sample count must be at least 1, got {n}")
        if mode not in MODES:
            raise DomainError(f"oracle mode must be one of {MODES}, got '{mode}'")
        self.model = model
        self.n = int(n)
        self.mode = mode
        self.replicates = int(replicates)
        self.seed = int(seed)
        self.dim = model.dim
        self.cache_size = max(0, int(cache_size))
        self._cache: "OrderedDict[bytes, float]" = OrderedDict()
        self._lock = threading.Lock()
        self._gaussian_factor: Optional[float] = None
        if mode == "analytic" and isinstance(model, GaussianModel):
            self._gaussian_factor = expected_max(NormalLaw(1.0), self.n)
        if mode == "mc":
            self._build_replicates()

    def _build_replicates(self) -> None:
        if self.replicates < 2:
            raise DomainError("Monte Carlo mode needs at least two replicates")
        blocks: List[np.ndarray] = []
        for r in range(self.replicates):
            points = sample(self.model, self.n, derive_seed(self.seed, r))
            blocks.append(Polytope(points).hull_vertices)
        self._offsets = np.cumsum([0] + [b.shape[0] for b in blocks[:-1]])
        self._stacked = np.vstack(blocks)
        logger.info(f"Expected-hull MC oracle: R={self.replicates}, n={self.n}, "
                    f"{self._stacked.shape[0]} stacked hull vertices")

    def _replicate_maxima(self, units: np.ndarray) -> np.ndarray:
        """(R, k) array of max_i <u_j, X_i^{(r)}>"""
        step = max(1, (1 << 22) // max(1, self._stacked.shape[0]))
        out = np.empty((self.replicates, units.shape[0]))
        for start in range(0, units.shape[0], step):
            block = self._stacked @ units[start:start + step].T
            out[:, start:start + step] = np.maximum.reduceat(block, self._offsets, axis=0)
        return out

    def _unit_support(self, u: np.ndarray) -> float:
        key = u.tobytes()
        with self._lock:
            cached = self._cache.get(key)
            if cached is not None:
                self._cache.move_to_end(key)
                return cached
        if self.mode == "mc":
            value = float(self._replicate_maxima(u[None, :]).mean())
        else:
            value = expected_max(directional_law(self.model, u), self.n)
        if self.cache_size == 0:
            return value
        with self._lock:
            value = self._cache.setdefault(key, value)
            while len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
        return value

    @property
    def cached_directions(self) -> int:
        return len(self._cache)

    def support(self, theta) -> float:
        u, r = _unit(theta)
        if self._gaussian_factor is not None:
            return r * self.model.directional_sigma(u) * self._gaussian_factor
        return r * self._unit_support(u)

    def support_many(self, thetas) -> np.ndarray:
        units, r = _unit_rows(thetas)
        if self._gaussian_factor is not None:
            sigma = np.sqrt(np.einsum("ij,jk,ik->i", units, self.model.cov, units))
            return r * sigma * self._gaussian_factor
        if self.mode == "mc":
            return r * self._replicate_maxima(units).mean(axis=0)
        return r * np.array([self._unit_support(u) for u in units])

    def standard_error(self, theta) -> float:
        """Monte Carlo standard error of support(theta); zero in analytic mode"""
        if self.mode != "mc":
            return 0.0
        u, r = _unit(theta)
        maxima = self._replicate_maxima(u[None, :])[:, 0]
        return r * float(maxima.std(ddof=1)) / math.sqrt(self.replicates)

    def gauge(self) -> SupportGauge:
        """||.||_{(E P_n)°}, the gauge whose unit sphere carries certification nets"""
        return SupportGauge(self.support_many, self.dim)

    def __repr__(self) -> str:
        return f"ExpectedHullOracle({self.model!r}, n={self.n}, mode={self.mode})"


def expected_hull_support(oracle: ExpectedHullOracle, theta) -> float:
    return oracle.support(theta)


# ============== Floating body ==============

class FloatingBodyOracle:
    """Bound function g(theta) = J_theta^{-1}(1 - delta) of the floating body F_delta"""

    def __init__(self, model: DistributionModel, delta: float):
        if not 0.0 < delta < math.exp(-1.0):
            raise DomainError(f"floating body needs delta in (0, 1/e), got {delta}")
        self.model = model
        self.delta = float(delta)
        self.dim = model.dim

    def _unit_bound(self, u: np.ndarray) -> float:
        if isinstance(self.model, GaussianModel):
            return NormalLaw(self.model.directional_sigma(u)).isf(self.delta)
        return directional_law(self.model, u).isf(self.delta)

    def support(self, theta) -> float:
        u, r = _unit(theta)
        return r * self._unit_bound(u)

    def support_many(self, thetas) -> np.ndarray:
        units, r = _unit_rows(thetas)
        return r * np.array([self._unit_bound(u) for u in units])

    def halfspace_mass(self, theta, m: int = 100_000, seed: int = 0) -> float:
        """Fraction of fresh draws with <theta, X> <= g(theta)"""
        x = sample(self.model, m, seed)
        return float(np.mean(x @ np.asarray(theta, dtype=float) <= self.support(theta)))


def floating_support(oracle: FloatingBodyOracle, theta) -> float:
    return oracle.support(theta)


# ============== Sandwich certificate ==============

def theorem1_delta(n: int, epsilon: float, dim: int) -> float:
    """Prescribed net resolution 3 n^{-eps/(4d)}"""
    return 3.0 * n ** (-epsilon / (4.0 * dim))


def resolve_delta(n: int, epsilon: float, dim: int,
                  override: Optional[float] = None) -> Tuple[float, bool]:
    """Net resolution and whether it had to be clamped to eps/5"""
    delta = theorem1_delta(n, epsilon, dim) if override is None else float(override)
    cap = epsilon / 5.0
    if delta > cap:
        return cap, True
    return delta, False


def certification_net(oracle: ExpectedHullOracle, delta: float, seed: int = 0,
                      candidate_budget: int = DEFAULT_EXPERIMENT_NET_BUDGET) -> Net:
    """delta-net on the boundary of (E P_n)°"""
    return build_net(oracle.gauge(), delta, candidate_budget=candidate_budget, seed=seed)


@dataclass
class SandwichCertificate:
    epsilon: float
    delta: float
    net_size: int
    ratios: List[float] = field(default_factory=list)
    min_ratio: float = math.nan
    max_ratio: float = math.nan
    certified: bool = False
    failures: List[int] = field(default_factory=list)
    reason: str = ""
    clamped: bool = False

    def summary(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "clamped": self.clamped,
            "net_size": self.net_size,
            "min_ratio": self.min_ratio,
            "max_ratio": self.max_ratio,
            "certified": self.certified,
            "failures": len(self.failures),
            "reason": self.reason,
        }


def certify_sandwich(polytope: Polytope, oracle: ExpectedHullOracle, epsilon: float, net: Net,
                     delta: Optional[float] = None, clamped: bool = False) -> SandwichCertificate:
    """Check (1 - eps/2) <= h_P(w) <= (1 + eps/2) at every net point w of ∂((E P_n)°)"""
    if not 0.0 < epsilon < 0.5:
        raise DomainError(f"sandwich margin must lie in (0, 1/2), got {epsilon}")
    delta = net.epsilon if delta is None else float(delta)
    if not 0.0 < delta <= epsilon / 5.0 * (1.0 + 1e-12):
        raise DomainError(f"net resolution {delta} exceeds eps/5 = {epsilon / 5.0}")
    if net.epsilon > delta * (1.0 + 1e-12):
        raise DomainError(f"net was built at {net.epsilon}, coarser than delta = {delta}")
    points = net.points
    on_boundary = oracle.support_many(points)
    off = np.flatnonzero(np.abs(on_boundary - 1.0) > NET_ORACLE_TOL)
    if off.size:
        raise NetMismatchError(f"{off.size} net points are off the expected-hull polar boundary "
                               f"(worst |h-1| = {np.abs(on_boundary - 1.0).max():.3g})")

    cert = SandwichCertificate(epsilon=epsilon, delta=delta, net_size=net.size, clamped=clamped)
    if not origin_in_interior(polytope):
        cert.reason = "origin not interior to P_n"
        return cert
    ratios = polytope.support_many(points) / on_boundary
    lo, hi = 1.0 - epsilon / 2.0, 1.0 + epsilon / 2.0
    bad = np.flatnonzero((ratios < lo) | (ratios > hi))
    cert.ratios = ratios.tolist()
    cert.min_ratio = float(ratios.min())
    cert.max_ratio = float(ratios.max())
    cert.failures = bad.tolist()
    cert.certified = bad.size == 0
    if not cert.certified:
        cert.reason = f"{bad.size} net points outside [{lo:g}, {hi:g}]"
    return cert


class Defects(NamedTuple):
    eps_out: float
    eps_in: float


def bruteforce_directions(dim: int, m_dirs: int, seed: int) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if m_dirs < 1000:
        raise DomainError(f"brute-force check needs at least 1000 directions, got {m_dirs}")
    return random_directions(dim, m_dirs, make_rng(seed))


def sandwich_bruteforce(polytope: Polytope, oracle: ExpectedHullOracle,
                        m_dirs: int = DEFAULT_BRUTEFORCE_DIRECTIONS, seed: int = 0,
                        directions: Optional[np.ndarray] = None) -> Defects:
    """Lower bounds on the containment defects from h_P / h_EH over random directions"""
    if directions is None:
        directions = bruteforce_directions(polytope.dim, m_dirs, seed)
    ratios = polytope.support_many(directions) / oracle.support_many(directions)
    return Defects(float(ratios.max() - 1.0), float(1.0 - ratios.min()))


# ============== Inclusion probability ==============

def wilson_interval(successes: int, trials: int, z: float = WILSON_Z) -> Tuple[float, float]:
    if trials <= 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2.0 * trials)) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass
class InclusionEstimate:
    epsilon: float
    draws: int
    estimate: float
    ci_low: float
    ci_high: float
    net_only_estimate: float
    certified_in: int
    certified_out: int
    indeterminate: int


def inclusion_probability(model: DistributionModel, oracle: ExpectedHullOracle, epsilon: float,
                          m: int = DEFAULT_INCLUSION_DRAWS, seed: int = 0,
                          net: Optional[Net] = None,
                          dense_directions: int = DEFAULT_DENSE_DIRECTIONS) -> InclusionEstimate:
    """Monte Carlo estimate of mu((1 + eps) E P_n)

    Each draw x is classified with s = max_w <w, x> over a delta-net of ∂((E P_n)°):
    s <= (1 - delta)(1 + eps) is certified in, s > 1 + eps certified out; the rest are
    settled against a dense direction set.
    """
    if m < 10_000:
        raise DomainError(f"inclusion estimate needs at least 10^4 draws, got {m}")
    if not epsilon > 0:
        raise DomainError(f"inclusion margin must be positive, got {epsilon}")
    x = sample(model, m, seed)
    level = 1.0 + epsilon

    if model.dim == 1:
        upper = level * oracle.support([1.0])
        lower = -level * oracle.support([-1.0])
        inside = (x[:, 0] <= upper) & (x[:, 0] >= lower)
        count = int(inside.sum())
        lo, hi = wilson_interval(count, m)
        return InclusionEstimate(epsilon, m, count / m, lo, hi, count / m, count, m - count, 0)

    if net is None:
        net = certification_net(oracle, min(0.1, epsilon / 5.0), seed=derive_seed(seed, 1))
    delta = net.epsilon
    s = np.max(x @ net.points.T, axis=1)
    surely_in = s * (1.0 / (1.0 - delta)) <= level
    surely_out = s > level
    pending = ~(surely_in | surely_out)
    resolved_in = np.zeros(m, dtype=bool)
    if pending.any():
        dirs = sphere_directions(model.dim, dense_directions, seed=seed)
        h = oracle.support_many(dirs)
        ratios = (x[pending] @ dirs.T) / h
        resolved_in[pending] = ratios.max(axis=1) <= level
    inside = surely_in | resolved_in
    count = int(inside.sum())
    lo, hi = wilson_interval(count, m)
    net_only = float(np.mean(~surely_out))
    return InclusionEstimate(
        epsilon=epsilon, draws=m, estimate=count / m, ci_low=lo, ci_high=hi,
        net_only_estimate=net_only,
        certified_in=int(surely_in.sum()), certified_out=int(surely_out.sum()),
        indeterminate=int(pending.sum()),
    )
