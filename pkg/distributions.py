"""
Distribution catalog for hullconc
Centered log-concave models on R^d, their 1D directional laws and seeded sampling
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import special
from scipy.optimize import brentq

from config import (
    CALIBRATION_SEED,
    DEFAULT_CALIBRATION_SIZE,
    MODEL_MIN_CALIBRATION,
    MODEL_MIN_EIGENVALUE,
    NEGLIGIBLE_WEIGHT,
    ROOT_REL_TOL,
)
from errors import DomainError, ModelError, NumericError

logger = logging.getLogger(__name__)

_SEED_MASK = (1 << 64) - 1


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, *stream)"""
    entropy = [int(seed) & _SEED_MASK] + [int(s) & _SEED_MASK for s in stream]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, *stream: int) -> int:
    """Child seed for (seed, *stream); identical in serial and parallel runs"""
    entropy = [int(seed) & _SEED_MASK] + [int(s) & _SEED_MASK for s in stream]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0])


def _as_output(x, y):
    return float(y) if np.ndim(x) == 0 else y


# ============== Scalar laws ==============

class ScalarLaw:
    """A 1D law with CDF J, density f and tail evaluators"""

    cdf_kind = "analytic_closed_form"
    name = "law"
    lower = -math.inf
    upper = math.inf

    @property
    def is_analytic(self) -> bool:
        return self.cdf_kind != "empirical"

    @property
    def scale(self) -> float:
        raise NotImplementedError

    def _cdf(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _sf(self, x: np.ndarray) -> np.ndarray:
        return 1.0 - self._cdf(x)

    def _pdf(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _logcdf(self, x: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self._cdf(x))

    def _logsf(self, x: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self._sf(x))

    def cdf(self, x):
        return _as_output(x, self._cdf(np.asarray(x, dtype=float)))

    def sf(self, x):
        return _as_output(x, self._sf(np.asarray(x, dtype=float)))

    def pdf(self, x):
        return _as_output(x, self._pdf(np.asarray(x, dtype=float)))

    def logcdf(self, x):
        return _as_output(x, self._logcdf(np.asarray(x, dtype=float)))

    def logsf(self, x):
        return _as_output(x, self._logsf(np.asarray(x, dtype=float)))

    def ppf(self, t: float) -> float:
        """Generalized inverse J^{-1}(t) for t in (0, 1)"""
        if t > 0.5:
            return self.isf(1.0 - t)
        return self._solve(lambda x: float(self._logcdf(np.asarray(x))) - math.log(t),
                           increasing=True)

    def isf(self, q: float) -> float:
        """Upper quantile J^{-1}(1 - q) computed from the tail mass q"""
        return self._solve(lambda x: math.log(q) - float(self._logsf(np.asarray(x))),
                           increasing=True)

    def _solve(self, fn: Callable[[float], float], increasing: bool) -> float:
        # log-space residuals are -inf/+inf outside the support; brentq needs finite values
        def bounded(x: float) -> float:
            return min(max(fn(x), -1e6), 1e6)

        lo, hi = self._bracket(bounded)
        try:
            return brentq(bounded, lo, hi, xtol=ROOT_REL_TOL * self.scale, rtol=4 * np.finfo(float).eps,
                          maxiter=500)
        except (ValueError, RuntimeError) as e:
            raise NumericError(f"{self.name}: quantile root-finding failed: {e}") from e

    def _bracket(self, fn: Callable[[float], float]):
        step = self.scale
        lo = self.lower if math.isfinite(self.lower) else -step
        hi = self.upper if math.isfinite(self.upper) else step
        for _ in range(200):
            if fn(lo) <= 0:
                break
            lo = lo - step if not math.isfinite(self.lower) else self.lower
            step *= 2.0
        step = self.scale
        for _ in range(200):
            if fn(hi) >= 0:
                break
            hi = hi + step if not math.isfinite(self.upper) else self.upper
            step *= 2.0
        return lo, hi

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name})"


class NormalLaw(ScalarLaw):
    """N(0, sigma^2)"""

    def __init__(self, sigma: float = 1.0):
        if not sigma > 0:
            raise DomainError(f"normal law needs sigma > 0, got {sigma}")
        self.sigma = float(sigma)
        self.name = "normal" if self.sigma == 1.0 else f"normal:{self.sigma!r}"

    @property
    def scale(self) -> float:
        return self.sigma

    def _cdf(self, x):
        return special.ndtr(x / self.sigma)

    def _sf(self, x):
        return special.ndtr(-x / self.sigma)

    def _logcdf(self, x):
        return special.log_ndtr(x / self.sigma)

    def _logsf(self, x):
        return special.log_ndtr(-x / self.sigma)

    def _pdf(self, x):
        z = x / self.sigma
        return np.exp(-0.5 * z * z) / (self.sigma * math.sqrt(2.0 * math.pi))

    def ppf(self, t: float) -> float:
        return float(self.sigma * special.ndtri(t))

    def isf(self, q: float) -> float:
        return float(-self.sigma * special.ndtri(q))


class UniformSumLaw(ScalarLaw):
    """Law of a sum of independent uniforms on [-b_i, b_i] (piecewise polynomial CDF)"""

    cdf_kind = "piecewise_polynomial"

    def __init__(self, half_widths, name: Optional[str] = None):
        b = np.asarray(half_widths, dtype=float).ravel()
        if b.size == 0 or np.any(b <= 0):
            raise DomainError(f"uniform sum needs positive half-widths, got {b.tolist()}")
        self.half_widths = b
        self.k = b.size
        self.half_total = float(b.sum())
        self.lower, self.upper = -self.half_total, self.half_total
        widths = 2.0 * b
        masks = (np.arange(1 << self.k)[:, None] >> np.arange(self.k)) & 1
        self._subset_sums = masks @ widths
        self._signs = np.where(masks.sum(axis=1) % 2 == 0, 1.0, -1.0)
        self._norm_cdf = math.factorial(self.k) * float(np.prod(widths))
        self._norm_pdf = math.factorial(self.k - 1) * float(np.prod(widths))
        if name is None:
            name = "uniform_sum:" + ",".join(repr(float(v)) for v in b)
        self.name = name

    @property
    def scale(self) -> float:
        return math.sqrt(float(np.sum(self.half_widths ** 2)) / 3.0)

    def _lower_half_cdf(self, y):
        # CDF of the shifted sum W = S + B at y in [0, B]; only terms with s_A < y survive
        u = np.asarray(np.clip(y, 0.0, self.half_total))[..., None] - self._subset_sums
        terms = np.where(u > 0, u, 0.0) ** self.k
        return np.clip(terms @ self._signs / self._norm_cdf, 0.0, 0.5)

    def _cdf(self, x):
        if self.k == 1:
            return np.clip((x + self.half_total) / (2.0 * self.half_total), 0.0, 1.0)
        low = self._lower_half_cdf(np.minimum(x, 0.0) + self.half_total)
        high = 1.0 - self._lower_half_cdf(self.half_total - np.maximum(x, 0.0))
        return np.where(x <= 0, low, high)

    def _sf(self, x):
        return self._cdf(-x)

    def _logsf(self, x):
        with np.errstate(divide="ignore"):
            return np.log(self._cdf(-x))

    def _pdf(self, x):
        y = self.half_total - np.abs(x)
        u = np.asarray(np.clip(y, 0.0, None))[..., None] - self._subset_sums
        terms = np.where(u > 0, np.abs(u) ** (self.k - 1), 0.0)
        dens = terms @ self._signs / self._norm_pdf
        return np.where(np.abs(x) < self.half_total, np.maximum(dens, 0.0), 0.0)

    def ppf(self, t: float) -> float:
        if self.k == 1:
            return self.half_total * (2.0 * t - 1.0)
        return super().ppf(t)

    def isf(self, q: float) -> float:
        if self.k == 1:
            return self.half_total * (1.0 - 2.0 * q)
        return super().isf(q)


class ShiftedExponentialLaw(ScalarLaw):
    """Exponential law shifted to mean zero: density rate*exp(-rate*(x + 1/rate)) on [-1/rate, inf)"""

    def __init__(self, rate: float = 1.0):
        if not rate > 0:
            raise DomainError(f"exponential law needs rate > 0, got {rate}")
        self.rate = float(rate)
        self.offset = 1.0 / self.rate
        self.lower = -self.offset
        self.name = "exponential" if self.rate == 1.0 else f"exponential:{self.offset!r}"

    @property
    def scale(self) -> float:
        return self.offset

    def _arg(self, x):
        return self.rate * (np.maximum(x, self.lower) + self.offset)

    def _cdf(self, x):
        return -np.expm1(-self._arg(x))

    def _sf(self, x):
        return np.exp(-self._arg(x))

    def _logsf(self, x):
        return -self._arg(x)

    def _pdf(self, x):
        return np.where(x >= self.lower, self.rate * np.exp(-self._arg(x)), 0.0)

    def ppf(self, t: float) -> float:
        return -math.log1p(-t) / self.rate - self.offset

    def isf(self, q: float) -> float:
        return -math.log(q) / self.rate - self.offset


class LaplaceLaw(ScalarLaw):
    """Symmetric Laplace law with scale b"""

    def __init__(self, b: float = 1.0):
        if not b > 0:
            raise DomainError(f"laplace law needs b > 0, got {b}")
        self.b = float(b)
        self.name = "laplace" if self.b == 1.0 else f"laplace:{self.b!r}"

    @property
    def scale(self) -> float:
        return self.b * math.sqrt(2.0)

    def _cdf(self, x):
        z = x / self.b
        return np.where(z < 0, 0.5 * np.exp(np.minimum(z, 0.0)),
                        1.0 - 0.5 * np.exp(-np.maximum(z, 0.0)))

    def _sf(self, x):
        return self._cdf(-x)

    def _logcdf(self, x):
        z = x / self.b
        return np.where(z < 0, math.log(0.5) + np.minimum(z, 0.0),
                        np.log1p(-0.5 * np.exp(-np.maximum(z, 0.0))))

    def _logsf(self, x):
        return self._logcdf(-x)

    def _pdf(self, x):
        return np.exp(-np.abs(x) / self.b) / (2.0 * self.b)

    def ppf(self, t: float) -> float:
        if t < 0.5:
            return self.b * math.log(2.0 * t)
        return -self.b * math.log(2.0 * (1.0 - t))

    def isf(self, q: float) -> float:
        return -self.ppf(q)


class EmpiricalLaw(ScalarLaw):
    """Law given by a sorted calibration sample; J interpolates (x_(i), i/R)"""

    cdf_kind = "empirical"

    def __init__(self, sample, name: str = "empirical"):
        xs = np.sort(np.asarray(sample, dtype=float).ravel())
        if xs.size < 2:
            raise DomainError("empirical law needs at least two calibration points")
        self.xs = xs
        self.size = xs.size
        self.probs = np.arange(1, xs.size + 1, dtype=float) / xs.size
        self.lower, self.upper = float(xs[0]), float(xs[-1])
        self._std = float(np.std(xs)) or 1.0
        self.name = name

    @property
    def scale(self) -> float:
        return self._std

    def _cdf(self, x):
        return np.interp(x, self.xs, self.probs, left=0.0, right=1.0)

    def _pdf(self, x):
        idx = np.searchsorted(self.xs, x, side="right") - 1
        inside = (idx >= 0) & (idx < self.size - 1)
        safe = np.clip(idx, 0, self.size - 2)
        width = self.xs[safe + 1] - self.xs[safe]
        with np.errstate(divide="ignore"):
            dens = np.where(width > 0, (1.0 / self.size) / width, 0.0)
        return np.where(inside, dens, 0.0)

    def ppf(self, t: float) -> float:
        if t <= self.probs[0]:
            return self.lower
        return float(np.interp(t, self.probs, self.xs))

    def isf(self, q: float) -> float:
        return self.ppf(1.0 - q)

    def expected_max_exact(self, n: int) -> float:
        """E max of n draws, integrating J^n exactly on each linear segment"""
        dx = np.diff(self.xs)
        log_p = np.log(self.probs)
        p_pow = np.exp((n + 1) * log_p)
        segment = dx * (p_pow[1:] - p_pow[:-1]) * self.size / (n + 1)
        return float(self.upper - segment.sum())


# ============== Law catalog ==============

def parse_law_spec(text: str) -> ScalarLaw:
    """Build a 1D law from 'name[:scale]' (uniform, normal, exponential, triangular, laplace)"""
    name, _, arg = text.strip().partition(":")
    try:
        scale = float(arg) if arg else 1.0
    except ValueError as e:
        raise DomainError(f"bad scale in law spec '{text}'") from e
    name = name.lower()
    if name == "uniform":
        return UniformSumLaw([scale], name=text)
    if name == "normal":
        law = NormalLaw(scale)
    elif name == "exponential":
        law = ShiftedExponentialLaw(1.0 / scale)
    elif name == "triangular":
        return UniformSumLaw([scale / 2.0, scale / 2.0], name=text)
    elif name == "laplace":
        law = LaplaceLaw(scale)
    else:
        raise DomainError(f"unknown law '{name}'")
    law.name = text
    return law


# ============== Models ==============

class ModelSpec(BaseModel):
    """Configuration-facing description of a DistributionModel"""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["gaussian", "uniform_box", "laplace_product", "empirical"]
    dim: Optional[int] = Field(None, ge=1)
    covariance: Optional[List[List[float]]] = None
    half_widths: Optional[List[float]] = None
    scales: Optional[List[float]] = None
    calibration_size: int = Field(DEFAULT_CALIBRATION_SIZE, ge=MODEL_MIN_CALIBRATION)
    base: Optional["ModelSpec"] = None


ModelSpec.model_rebuild()


def spec_dim(spec: ModelSpec) -> Optional[int]:
    """Dimension implied by a spec, without building the model"""
    if spec.dim is not None:
        return spec.dim
    for values in (spec.covariance, spec.half_widths, spec.scales):
        if values is not None:
            return len(values)
    return spec_dim(spec.base) if spec.base is not None else None


class DistributionModel:
    """Centered log-concave law on R^d"""

    kind = "model"
    analytic = True

    def __init__(self, dim: int):
        if dim < 1:
            raise ModelError(f"dimension must be positive, got {dim}")
        self.dim = int(dim)

    @property
    def center(self) -> np.ndarray:
        return np.zeros(self.dim)

    def covariance(self) -> np.ndarray:
        raise NotImplementedError

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def directional_law(self, theta: np.ndarray) -> ScalarLaw:
        raise NotImplementedError

    def eigen_directions(self) -> np.ndarray:
        """Principal axes of the covariance, as unit rows"""
        _, vecs = np.linalg.eigh(np.atleast_2d(self.covariance()))
        return vecs.T.copy()

    def spec(self) -> ModelSpec:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}(dim={self.dim})"


class GaussianModel(DistributionModel):
    kind = "gaussian"

    def __init__(self, covariance):
        cov = np.atleast_2d(np.asarray(covariance, dtype=float))
        if cov.shape[0] != cov.shape[1]:
            raise ModelError(f"covariance must be square, got shape {cov.shape}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, float(np.abs(cov).max()))):
            raise ModelError("covariance must be symmetric")
        try:
            self._chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as e:
            raise ModelError("covariance is not positive definite") from e
        super().__init__(cov.shape[0])
        self.cov = cov

    def covariance(self) -> np.ndarray:
        return self.cov

    def draw(self, rng, n):
        return rng.standard_normal((n, self.dim)) @ self._chol.T

    def directional_sigma(self, theta: np.ndarray) -> float:
        return math.sqrt(float(theta @ self.cov @ theta))

    def directional_law(self, theta):
        return NormalLaw(self.directional_sigma(theta))

    def spec(self) -> ModelSpec:
        return ModelSpec(kind="gaussian", dim=self.dim, covariance=self.cov.tolist())


class UniformBoxModel(DistributionModel):
    kind = "uniform_box"

    def __init__(self, half_widths):
        w = np.asarray(half_widths, dtype=float).ravel()
        if w.size == 0:
            raise ModelError("uniform box needs at least one half-width")
        if np.any(w <= 0):
            raise ModelError(f"degenerate box: half-widths must be positive, got {w.tolist()}")
        super().__init__(w.size)
        self.half_widths = w

    def covariance(self):
        return np.diag(self.half_widths ** 2 / 3.0)

    def draw(self, rng, n):
        return rng.uniform(-self.half_widths, self.half_widths, size=(n, self.dim))

    def directional_law(self, theta):
        weights = np.abs(theta) * self.half_widths
        weights = weights[weights > NEGLIGIBLE_WEIGHT * weights.max()]
        return UniformSumLaw(weights)

    def eigen_directions(self):
        return np.eye(self.dim)

    def spec(self):
        return ModelSpec(kind="uniform_box", dim=self.dim, half_widths=self.half_widths.tolist())


class _CalibratedModel(DistributionModel):
    """Model whose directional laws come from a fixed calibration sample"""

    analytic = False

    def __init__(self, dim: int, calibration_size: int):
        super().__init__(dim)
        if calibration_size < 2:
            raise ModelError("calibration size must be at least 2")
        self.calibration_size = int(calibration_size)
        self._calibration: Optional[np.ndarray] = None

    def calibration_sample(self) -> np.ndarray:
        # Deterministic; recomputing on a race yields the same array
        if self._calibration is None:
            self._calibration = self.draw(make_rng(CALIBRATION_SEED, self.dim), self.calibration_size)
        return self._calibration

    def directional_law(self, theta):
        return EmpiricalLaw(self.calibration_sample() @ theta, name=f"{self.kind}-empirical")

    def covariance(self):
        return np.atleast_2d(np.cov(self.calibration_sample(), rowvar=False))


class LaplaceProductModel(_CalibratedModel):
    kind = "laplace_product"

    def __init__(self, scales, calibration_size: int = DEFAULT_CALIBRATION_SIZE):
        b = np.asarray(scales, dtype=float).ravel()
        if b.size == 0 or np.any(b <= 0):
            raise ModelError(f"laplace scales must be positive, got {b.tolist()}")
        super().__init__(b.size, calibration_size)
        self.scales = b

    def draw(self, rng, n):
        return rng.laplace(0.0, self.scales, size=(n, self.dim))

    def covariance(self):
        return np.diag(2.0 * self.scales ** 2)

    def eigen_directions(self):
        return np.eye(self.dim)

    def spec(self):
        return ModelSpec(kind="laplace_product", dim=self.dim, scales=self.scales.tolist(),
                         calibration_size=self.calibration_size)


class EmpiricalModel(_CalibratedModel):
    """Wraps an arbitrary sampler; marginals are always empirical"""

    kind = "empirical"

    def __init__(self, sampler: Callable[[np.random.Generator, int], np.ndarray], dim: int,
                 calibration_size: int = DEFAULT_CALIBRATION_SIZE,
                 base: Optional[DistributionModel] = None):
        super().__init__(dim, calibration_size)
        self.sampler = sampler
        self.base = base

    def draw(self, rng, n):
        x = np.asarray(self.sampler(rng, n), dtype=float).reshape(n, self.dim)
        return x

    def spec(self):
        if self.base is None:
            raise ModelError("an empirical model around a bare sampler has no config form")
        return ModelSpec(kind="empirical", dim=self.dim, calibration_size=self.calibration_size,
                         base=self.base.spec())


def build_model(spec: ModelSpec) -> DistributionModel:
    """Construct a model from its spec, rejecting invalid parameters"""
    if spec.kind == "gaussian":
        if spec.covariance is not None:
            model = GaussianModel(spec.covariance)
        elif spec.dim is not None:
            model = GaussianModel(np.eye(spec.dim))
        else:
            raise ModelError("model.covariance: gaussian model needs a covariance or a dim")
    elif spec.kind == "uniform_box":
        if spec.half_widths is None:
            raise ModelError("model.half_widths: required for uniform_box")
        model = UniformBoxModel(spec.half_widths)
    elif spec.kind == "laplace_product":
        if spec.scales is None:
            raise ModelError("model.scales: required for laplace_product")
        model = LaplaceProductModel(spec.scales, spec.calibration_size)
    else:
        if spec.base is None:
            raise ModelError("model.base: empirical wrapper needs a base model")
        inner = build_model(spec.base)
        model = EmpiricalModel(inner.draw, inner.dim, spec.calibration_size, base=inner)
    if spec.dim is not None and spec.dim != model.dim:
        raise ModelError(f"model.dim: declared {spec.dim} but parameters imply {model.dim}")
    return model


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ModelError(f"bad number list '{text}'") from e


def parse_model_string(text: str) -> ModelSpec:
    """Compact model spec: gaussian:<d>, gaussian-diag:<v,..>, uniform-box:<w,..>, laplace:<b,..>, empirical:<spec>"""
    kind, _, arg = text.strip().partition(":")
    kind = kind.lower()
    if kind == "gaussian":
        try:
            return ModelSpec(kind="gaussian", dim=int(arg or 1))
        except ValueError as e:
            raise ModelError(f"bad dimension in '{text}'") from e
    if kind == "gaussian-diag":
        return ModelSpec(kind="gaussian", covariance=np.diag(_floats(arg)).tolist())
    if kind == "uniform-box":
        return ModelSpec(kind="uniform_box", half_widths=_floats(arg))
    if kind == "laplace":
        return ModelSpec(kind="laplace_product", scales=_floats(arg))
    if kind == "empirical":
        return ModelSpec(kind="empirical", base=parse_model_string(arg))
    raise ModelError(f"unknown model kind '{kind}'")


# ============== Operations ==============

def sample(model: DistributionModel, n: int, seed: int) -> np.ndarray:
    """n i.i.d. draws as an (n, d) array; a pure function of (model, n, seed)"""
    if n < 1:
        raise DomainError(f"sample size must be at least 1, got {n}")
    return model.draw(make_rng(seed), int(n))


def directional_law(model: DistributionModel, theta) -> ScalarLaw:
    """Law of <theta, X>"""
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.shape != (model.dim,):
        raise DomainError(f"direction has shape {theta.shape}, model dimension is {model.dim}")
    if not np.any(theta):
        raise DomainError("directional law needs a non-zero direction")
    return model.directional_law(theta)


@dataclass
class ModelDiagnostics:
    dim: int
    m: int
    mean_norm: float
    mean_threshold: float
    min_eigenvalue: float
    eigenvalue_threshold: float
    passed: bool


def validate_model(model: DistributionModel, m: int, seed: int) -> ModelDiagnostics:
    """Check centering and non-singular covariance on m fresh draws"""
    if m < MODEL_MIN_CALIBRATION:
        raise DomainError(f"validation needs m >= {MODEL_MIN_CALIBRATION}, got {m}")
    x = sample(model, m, seed)
    mean_norm = float(np.linalg.norm(x.mean(axis=0)))
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    min_eig = float(np.linalg.eigvalsh(cov).min())
    mean_threshold = 5.0 * model.dim / math.sqrt(m)
    passed = mean_norm <= mean_threshold and min_eig >= MODEL_MIN_EIGENVALUE
    if not passed:
        logger.warning(f"Model {model!r} failed validation: mean norm {mean_norm:.3g}, "
                       f"min eigenvalue {min_eig:.3g}")
    return ModelDiagnostics(model.dim, m, mean_norm, mean_threshold, min_eig,
                            MODEL_MIN_EIGENVALUE, passed)
