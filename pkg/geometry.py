"""
Polytope geometry for hullconc
Support functions, gauges via a dense simplex solver, polar identities,
epsilon-nets on non-symmetric bodies and the iterative net decomposition
"""
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import pdist

from config import (
    BOUNDARY_TOL,
    LP_TOL,
    MAX_DECOMPOSITION_TERMS,
    NET_BATCH_SIZE,
    NET_BUDGET_CAP,
    NET_BUDGET_FACTOR,
    NET_SWEEP_CAP,
    NET_SWEEP_FACTOR,
    POLAR_IDENTITY_TOL,
)
from distributions import make_rng
from errors import (
    CoverageError,
    DomainError,
    GeometryError,
    NetCardinalityError,
    NumericError,
)

logger = logging.getLogger(__name__)


# ============== Linear programming ==============

@dataclass
class LPResult:
    status: str
    x: Optional[np.ndarray]
    value: float
    iterations: int


def _pivot(tableau: np.ndarray, row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    column = tableau[:, col].copy()
    column[row] = 0.0
    tableau -= np.outer(column, tableau[row])


def _run_simplex(tableau: np.ndarray, basis: List[int], n_cols: int, tol: float,
                 max_iter: int) -> Tuple[str, int]:
    """Bland's rule: lowest-index entering column, lowest-index leaving basis variable"""
    m = len(basis)
    for it in range(max_iter):
        costs = tableau[m, :n_cols]
        entering = np.flatnonzero(costs < -tol)
        if entering.size == 0:
            return "optimal", it
        col = int(entering[0])
        column = tableau[:m, col]
        rows = np.flatnonzero(column > tol)
        if rows.size == 0:
            return "unbounded", it
        ratios = tableau[rows, -1] / column[rows]
        best = ratios.min()
        ties = rows[ratios <= best + tol * max(1.0, abs(best))]
        row = int(min(ties, key=lambda r: basis[r]))
        _pivot(tableau, row, col)
        basis[row] = col
    raise NumericError(f"simplex did not terminate in {max_iter} iterations")


def simplex_min(c, a_eq, b_eq, tol: float = LP_TOL, max_iter: int = 10_000) -> LPResult:
    """Solve min c.x subject to A x = b, x >= 0 with a two-phase dense tableau"""
    a = np.atleast_2d(np.asarray(a_eq, dtype=float)).copy()
    b = np.asarray(b_eq, dtype=float).ravel().copy()
    c = np.asarray(c, dtype=float).ravel()
    m, n = a.shape
    flip = b < 0
    a[flip] *= -1.0
    b[flip] *= -1.0
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))

    # Phase 1: artificial basis, minimise the sum of artificials
    tableau = np.zeros((m + 1, n + m + 1))
    tableau[:m, :n] = a
    tableau[:m, n:n + m] = np.eye(m)
    tableau[:m, -1] = b
    tableau[m, :n] = -a.sum(axis=0)
    tableau[m, -1] = -b.sum()
    basis = list(range(n, n + m))
    _, it1 = _run_simplex(tableau, basis, n + m, tol, max_iter)
    if -tableau[m, -1] > tol * scale * max(1, m):
        return LPResult("infeasible", None, math.nan, it1)

    # Drive remaining artificials out of the basis; drop redundant rows
    keep = []
    for row in range(m):
        if basis[row] < n:
            keep.append(row)
            continue
        candidates = np.flatnonzero(np.abs(tableau[row, :n]) > tol)
        if candidates.size:
            _pivot(tableau, row, int(candidates[0]))
            basis[row] = int(candidates[0])
            keep.append(row)
    tableau = np.vstack([tableau[keep][:, list(range(n)) + [n + m]], np.zeros((1, n + 1))])
    basis = [basis[r] for r in keep]
    m2 = len(basis)

    # Phase 2
    tableau[m2, :n] = c
    for row, var in enumerate(basis):
        tableau[m2] -= c[var] * tableau[row]
    status, it2 = _run_simplex(tableau, basis, n, tol, max_iter)
    if status != "optimal":
        return LPResult(status, None, -math.inf, it1 + it2)
    x = np.zeros(n)
    x[basis] = tableau[:m2, -1]
    return LPResult("optimal", x, float(c @ x), it1 + it2)


# ============== Directions ==============

def sphere_directions(dim: int, count: int, seed: int = 0) -> np.ndarray:
    """Low-discrepancy unit directions: +-1 in 1D, even angles in 2D, Fibonacci in 3D,
    orthant-symmetrized random beyond"""
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    count = max(int(count), 2)
    if dim == 2:
        angles = 2.0 * math.pi * (np.arange(count) + 0.5) / count
        return np.column_stack([np.cos(angles), np.sin(angles)])
    if dim == 3:
        k = np.arange(count) + 0.5
        z = 1.0 - 2.0 * k / count
        r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
        phi = math.pi * (3.0 - math.sqrt(5.0)) * k
        return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    signs = ((np.arange(1 << dim)[:, None] >> np.arange(dim)) & 1) * -2.0 + 1.0
    base = random_directions(dim, max(1, -(-count // signs.shape[0])), make_rng(seed))
    return (base[:, None, :] * signs[None, :, :]).reshape(-1, dim)[:count]


def random_directions(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random unit directions"""
    if dim == 1:
        return rng.choice([-1.0, 1.0], size=(count, 1))
    z = rng.standard_normal((count, dim))
    norms = np.linalg.norm(z, axis=1)
    norms[norms == 0] = 1.0
    return z / norms[:, None]


# ============== Polytopes ==============

class Polytope:
    """conv of a finite vertex set in R^d"""

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1:
            raise DomainError(f"vertices must be an (m, d) array, got shape {v.shape}")
        self.vertices = v
        self.dim = v.shape[1]

    @cached_property
    def _hull(self) -> Optional[ConvexHull]:
        if self.dim == 1 or self.vertices.shape[0] <= self.dim:
            return None
        try:
            return ConvexHull(self.vertices)
        except QhullError:
            return None

    @cached_property
    def hull_vertices(self) -> np.ndarray:
        if self.dim == 1:
            return np.array([[self.vertices.min()], [self.vertices.max()]])
        if self._hull is None:
            return self.vertices
        return self.vertices[self._hull.vertices]

    @cached_property
    def facets(self) -> np.ndarray:
        """Rows a_j with P = {x : a_j.x <= 1}; needs the origin in the interior"""
        if self.dim == 1:
            lo, hi = float(self.vertices.min()), float(self.vertices.max())
            if not lo < 0 < hi:
                raise GeometryError("origin is not interior to the interval")
            return np.array([[1.0 / hi], [1.0 / lo]])
        if self._hull is None:
            raise GeometryError("polytope has empty interior")
        normals = self._hull.equations[:, :-1]
        offsets = -self._hull.equations[:, -1]
        if np.any(offsets <= 0):
            raise GeometryError("origin is not interior to the polytope")
        return normals / offsets[:, None]

    def support(self, theta) -> float:
        return float(np.max(self.vertices @ np.asarray(theta, dtype=float)))

    def support_many(self, thetas) -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        return np.max(self.hull_vertices @ thetas.T, axis=0)

    def scaled(self, factor: float) -> "Polytope":
        return Polytope(self.vertices * factor)

    def __repr__(self) -> str:
        return f"Polytope(m={self.vertices.shape[0]}, d={self.dim})"


def support(polytope: Polytope, theta) -> float:
    """h_P(theta) = max_i <theta, v_i>"""
    return polytope.support(theta)


def origin_in_interior(polytope: Polytope, tol: float = LP_TOL) -> bool:
    """LP test: 0 is a strictly positive convex combination of vertices spanning R^d"""
    v = polytope.hull_vertices
    m, d = v.shape
    if m < d + 1 or np.linalg.matrix_rank(v[1:] - v[0]) < d:
        return False
    # variables (gamma_1..gamma_m, t), beta_i = gamma_i + t; maximise t
    a = np.zeros((d + 1, m + 1))
    a[:d, :m] = v.T
    a[:d, m] = v.sum(axis=0)
    a[d, :m] = 1.0
    a[d, m] = m
    b = np.zeros(d + 1)
    b[d] = 1.0
    cost = np.zeros(m + 1)
    cost[m] = -1.0
    res = simplex_min(cost, a, b, tol=tol)
    return res.status == "optimal" and -res.value > tol


def polytope_contains(polytope: Polytope, x, tol: float = LP_TOL) -> bool:
    """Exact membership: x = sum beta_i v_i with beta >= 0, sum beta = 1"""
    v = polytope.hull_vertices
    m, d = v.shape
    a = np.vstack([v.T, np.ones((1, m))])
    b = np.append(np.asarray(x, dtype=float).ravel(), 1.0)
    return simplex_min(np.zeros(m), a, b, tol=tol).status == "optimal"


def gauge_lp(polytope: Polytope, x) -> float:
    """||x||_P = min sum beta_i subject to sum beta_i v_i = x, beta >= 0"""
    if not origin_in_interior(polytope):
        raise GeometryError("gauge needs the origin in the interior of the polytope")
    x = np.asarray(x, dtype=float).ravel()
    if not np.any(x):
        return 0.0
    v = polytope.hull_vertices
    res = simplex_min(np.ones(v.shape[0]), v.T, x)
    if res.status != "optimal":
        raise GeometryError(f"gauge LP is {res.status} for x={x.tolist()}")
    return res.value


def gauge_dual_estimate(polytope: Polytope, x, directions: np.ndarray) -> float:
    """sup over the given directions of <theta, x> / h_P(theta); approaches the gauge from below"""
    h = polytope.support_many(directions)
    return float(np.max(directions @ np.asarray(x, dtype=float) / h))


def polar_gauge(polytope: Polytope, theta, iterations: int = 200) -> float:
    """Gauge of theta w.r.t. P° = {y : <v_i, y> <= 1}, by bisection on membership"""
    theta = np.asarray(theta, dtype=float)
    v = polytope.vertices

    def member(lam: float) -> bool:
        return bool(np.all(v @ (theta / lam) <= 1.0))

    if not np.any(theta):
        return 0.0
    lo, hi = 0.0, 1.0
    while not member(hi):
        lo, hi = hi, hi * 2.0
        if hi > 1e300:
            raise GeometryError("polar body is unbounded in this direction")
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if member(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class PolarIdentityCheck:
    support: float
    polar_gauge: float
    equal: bool


def polar_gauge_identity_check(polytope: Polytope, theta,
                               tol: float = POLAR_IDENTITY_TOL) -> PolarIdentityCheck:
    """h_P(theta) against ||theta||_{P°}"""
    if not origin_in_interior(polytope):
        raise GeometryError("polar identity needs the origin in the interior")
    h = polytope.support(theta)
    g = polar_gauge(polytope, theta)
    return PolarIdentityCheck(h, g, abs(h - g) <= tol * max(1.0, abs(h)))


def contains_by_support(support_a: Callable, support_b: Callable, directions: np.ndarray,
                        tol: float = 1e-12) -> bool:
    """A ⊆ B iff h_A <= h_B in every direction (checked on the given set)"""
    return bool(np.all(support_a(directions) <= support_b(directions) + tol))


def hausdorff_from_supports(support_a: Callable, support_b: Callable,
                            directions: np.ndarray) -> float:
    """max |h_A - h_B| over unit directions; a lower bound of d_H converging from below"""
    return float(np.max(np.abs(support_a(directions) - support_b(directions))))


def hausdorff_transfer(lam: float, diam_b: float) -> float:
    """d_H bound diam(B) (lambda - 1) for bodies with lambda^{-1} A ⊆ B ⊆ lambda A"""
    if lam < 1.0:
        raise DomainError(f"sandwich factor must be >= 1, got {lam}")
    if diam_b < 0:
        raise DomainError(f"diameter must be non-negative, got {diam_b}")
    return diam_b * (lam - 1.0)


def diameter(polytope: Polytope) -> float:
    """Largest pairwise vertex distance"""
    if polytope.vertices.shape[0] < 2:
        raise DomainError("diameter needs at least two vertices")
    return float(pdist(polytope.hull_vertices).max())


# ============== Gauges ==============

class GaugeOracle:
    """Minkowski functional of a convex body with the origin in its interior"""

    dim: int

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, z) -> float:
        return float(self.evaluate(np.asarray(z, dtype=float)[None, :])[0])

    def to_boundary(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(z)
        return z / self.evaluate(z)[:, None]


class PolytopeGauge(GaugeOracle):
    """||.||_P from the facet description of a polytope"""

    def __init__(self, polytope: Polytope):
        self.polytope = polytope
        self.dim = polytope.dim
        self._facets = polytope.facets

    def evaluate(self, z):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return np.maximum(np.max(z @ self._facets.T, axis=1), 0.0)


class SupportGauge(GaugeOracle):
    """Gauge of the polar body K°, i.e. the support function h_K"""

    def __init__(self, support_many: Callable[[np.ndarray], np.ndarray], dim: int):
        self._support = support_many
        self.dim = dim

    def evaluate(self, z):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        out = np.zeros(z.shape[0])
        nonzero = np.any(z != 0, axis=1)
        if nonzero.any():
            out[nonzero] = self._support(z[nonzero])
        return out


def _min_gauge_to(body: GaugeOracle, z: np.ndarray, points: np.ndarray,
                  chunk: int = 1 << 18) -> np.ndarray:
    """min_j ||z_i - w_j|| for each row z_i"""
    best = np.full(z.shape[0], np.inf)
    step = max(1, chunk // max(1, z.shape[0]))
    for start in range(0, points.shape[0], step):
        w = points[start:start + step]
        diff = (z[:, None, :] - w[None, :, :]).reshape(-1, z.shape[1])
        vals = body.evaluate(diff).reshape(z.shape[0], w.shape[0])
        best = np.minimum(best, vals.min(axis=1))
    return best


# ============== Nets ==============

@dataclass
class Net:
    body: GaugeOracle
    epsilon: float
    points: np.ndarray
    candidates_seen: int = 0
    budget: int = 0

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    @property
    def cardinality_bound(self) -> float:
        return (3.0 / self.epsilon) ** self.dim

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "dim": self.dim,
            "size": self.size,
            "cardinality_bound": self.cardinality_bound,
            "candidates_seen": self.candidates_seen,
            "budget": self.budget,
            "points": self.points.tolist(),
        }


def default_net_budget(epsilon: float, dim: int) -> int:
    return int(min(NET_BUDGET_FACTOR * math.ceil((3.0 / epsilon) ** dim), NET_BUDGET_CAP))


def build_net(body: GaugeOracle, epsilon: float, dim: Optional[int] = None,
              candidate_budget: Optional[int] = None, seed: int = 0,
              batch_size: int = NET_BATCH_SIZE, sweep_size: Optional[int] = None) -> Net:
    """Greedy epsilon-net on the boundary of K

    Candidates (a deterministic direction sweep, then seeded random directions) are
    normalised to the boundary; a candidate z is kept iff ||z - w||_K > eps for every
    kept w. Stops after candidate_budget consecutive covered candidates.
    """
    if not 0.0 < epsilon < 0.5:
        raise DomainError(f"net parameter must lie in (0, 1/2), got {epsilon}")
    dim = body.dim if dim is None else dim
    if dim != body.dim:
        raise DomainError(f"dimension {dim} does not match the body ({body.dim})")
    bound = (3.0 / epsilon) ** dim
    budget = int(candidate_budget or default_net_budget(epsilon, dim))
    if sweep_size is None:
        sweep_size = int(min(NET_SWEEP_FACTOR * math.ceil(bound), NET_SWEEP_CAP))
    rng = make_rng(seed)

    points: List[np.ndarray] = []
    state = {"streak": 0, "seen": 0}

    def absorb(directions: np.ndarray) -> bool:
        z = body.to_boundary(directions)
        if points:
            covered = _min_gauge_to(body, z, np.array(points)) <= epsilon
        else:
            covered = np.zeros(z.shape[0], dtype=bool)
        if covered.all():
            needed = budget - state["streak"]
            if needed <= z.shape[0]:
                state["seen"] += needed
                state["streak"] = budget
                return True
            state["seen"] += z.shape[0]
            state["streak"] += z.shape[0]
            return False
        start = len(points)
        for i in range(z.shape[0]):
            state["seen"] += 1
            hit = covered[i]
            if not hit and len(points) > start:
                hit = _min_gauge_to(body, z[i:i + 1], np.array(points[start:]))[0] <= epsilon
            if hit:
                state["streak"] += 1
                if state["streak"] >= budget:
                    return True
                continue
            points.append(z[i].copy())
            state["streak"] = 0
            if len(points) > bound:
                raise NetCardinalityError(
                    f"net exceeded (3/eps)^d = {bound:.1f} points; gauge evaluation is inconsistent")
        return False

    done = False
    sweep = sphere_directions(dim, sweep_size, seed=seed)
    for start in range(0, sweep.shape[0], batch_size):
        if absorb(sweep[start:start + batch_size]):
            done = True
            break
    limit = 10 * NET_BUDGET_CAP
    while not done and state["seen"] < limit:
        done = absorb(random_directions(dim, batch_size, rng))
    if not done:
        logger.warning(f"Net construction stopped after {state['seen']} candidates without "
                       f"reaching a streak of {budget}")
    net = Net(body, epsilon, np.array(points), state["seen"], budget)
    logger.info(f"Built net: eps={epsilon}, d={dim}, size={net.size} "
                f"(bound {bound:.1f}), candidates={state['seen']}")
    return net


@dataclass
class NetCoverage:
    samples: int
    max_distance: float
    covered_fraction: float
    all_covered: bool


def net_coverage(net: Net, samples: int = 10_000, seed: int = 1, tol: float = BOUNDARY_TOL) -> NetCoverage:
    """Sample random boundary points z; distance measured as ||z - w||_K"""
    z = net.body.to_boundary(random_directions(net.dim, samples, make_rng(seed)))
    dist = _min_gauge_to(net.body, z, net.points)
    covered = dist <= net.epsilon + tol
    return NetCoverage(samples, float(dist.max()), float(covered.mean()), bool(covered.all()))


# ============== Decomposition ==============

@dataclass
class Decomposition:
    epsilon: float
    base: np.ndarray
    coefficients: List[float] = field(default_factory=list)
    directions: List[np.ndarray] = field(default_factory=list)
    residual_norms: List[float] = field(default_factory=list)

    @property
    def terms(self) -> List[Tuple[float, np.ndarray]]:
        return list(zip(self.coefficients, self.directions))

    def reconstruct(self, count: Optional[int] = None) -> np.ndarray:
        count = len(self.coefficients) if count is None else count
        out = self.base.copy()
        for coef, omega in zip(self.coefficients[:count], self.directions[:count]):
            out = out + coef * omega
        return out


def decompose(theta, net: Net, max_terms: int = MAX_DECOMPOSITION_TERMS) -> Decomposition:
    """theta = w_0 + sum eps_i w_i with eps_i = ||residual_{i-1}||_K <= eps^i"""
    body = net.body
    theta = np.asarray(theta, dtype=float).ravel()
    norm = body(theta)
    if abs(norm - 1.0) > BOUNDARY_TOL:
        raise DomainError(f"decomposition needs a boundary point, got ||theta||_K = {norm!r}")
    max_terms = min(int(max_terms), MAX_DECOMPOSITION_TERMS)
    eps = net.epsilon
    w = net.points

    dists = body.evaluate(theta[None, :] - w)
    first = int(np.argmin(dists))
    if dists[first] > eps + BOUNDARY_TOL:
        raise CoverageError(f"no net point within {eps} of theta (best {dists[first]:.3g})",
                            direction=theta)
    result = Decomposition(eps, w[first].copy())
    residual = theta - w[first]
    rho = float(dists[first])
    result.residual_norms.append(rho)
    for _ in range(max_terms):
        if rho <= np.finfo(float).tiny:
            break
        step = body.evaluate(residual[None, :] - rho * w)
        j = int(np.argmin(step))
        if step[j] > eps * rho * (1.0 + BOUNDARY_TOL):
            direction = residual / rho
            raise CoverageError(
                f"net does not cover residual direction {direction.tolist()}", direction=direction)
        result.coefficients.append(rho)
        result.directions.append(w[j].copy())
        residual = residual - rho * w[j]
        rho = body(residual)
        result.residual_norms.append(rho)
    return result
