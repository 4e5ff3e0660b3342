"""
Weak PINNs

Weak formulation of the 1D Poisson problem against a finite P1 hat test
space: T-operator assembly, kernel extraction from n + 1 trial networks,
inhomogeneous solution families, a boundary-built-in trial fit and
quadrature studies.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import linalg

from deep_ritz import OptimizerBudget
from measurement import Box, as_points, lp_distance
from net_core import (
    ArchitectureMismatchError,
    MlpNetwork,
    forward_batch,
    jet_forward,
    linear_combine,
    random_network,
)
from null_forge import relu_hermite_interpolant

logger = logging.getLogger(__name__)

DEFAULT_QUADRATURE_ORDER = 8
CERTIFIED_QUADRATURE_FLOOR = 4
INDEPENDENCE_FLOOR = 1e-8
KERNEL_RELATIVE_TOLERANCE = 1e-10
KERNEL_NORM_FLOOR = 1e-4
FIT_TARGET = 1e-6
WEAK_FIT_BUDGET = OptimizerBudget(step=0.05, max_iterations=20000, window=200, min_decrease=1e-16)


class LinearDependenceError(ValueError):
    """Trial networks are numerically linearly dependent."""


class KernelExtractionError(RuntimeError):
    """No acceptable kernel element after repeated resampling."""


@dataclass(frozen=True)
class TestSpace:
    """P1 hats on a partition of [0, T] with a per-element Gauss-Legendre rule.

    Hat i (0-based) peaks at interior node i + 1 and vanishes at both
    domain endpoints.
    """

    __test__ = False

    nodes: Tuple[float, ...]
    quadrature_order: int = DEFAULT_QUADRATURE_ORDER
    _points: np.ndarray = field(init=False, repr=False, compare=False)
    _weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nodes = tuple(float(x) for x in self.nodes)
        if len(nodes) < 2 or any(b <= a for a, b in zip(nodes, nodes[1:])):
            raise ValueError("Mesh nodes must be strictly increasing, at least two of them")
        if self.quadrature_order < 1:
            raise ValueError("Quadrature order must be at least 1")
        object.__setattr__(self, "nodes", nodes)

        xi, wi = leggauss(self.quadrature_order)
        mesh = np.array(nodes)
        left, right = mesh[:-1], mesh[1:]
        half = 0.5 * (right - left)
        mid = 0.5 * (right + left)
        object.__setattr__(self, "_points", (mid[:, None] + half[:, None] * xi).ravel())
        object.__setattr__(self, "_weights", (half[:, None] * wi).ravel())

    @classmethod
    def uniform(cls, T: float = 1.0, n: int = 4, q: int = DEFAULT_QUADRATURE_ORDER) -> "TestSpace":
        if T <= 0 or n < 0:
            raise ValueError("Need T > 0 and n >= 0")
        return cls(tuple(np.linspace(0.0, T, n + 2)), q)

    @classmethod
    def from_dict(cls, data: Dict) -> "TestSpace":
        if "nodes" in data:
            return cls(tuple(data["nodes"]), int(data.get("quadrature_order", DEFAULT_QUADRATURE_ORDER)))
        return cls.uniform(
            float(data.get("T", 1.0)),
            int(data["n"]),
            int(data.get("quadrature_order", DEFAULT_QUADRATURE_ORDER)),
        )

    @property
    def dim(self) -> int:
        return len(self.nodes) - 2

    @property
    def T(self) -> float:
        return self.nodes[-1] - self.nodes[0]

    @property
    def domain(self) -> Box:
        return Box.interval(self.nodes[0], self.nodes[-1])

    def with_order(self, q: int) -> "TestSpace":
        return TestSpace(self.nodes, q)

    def quadrature(self) -> Tuple[np.ndarray, np.ndarray]:
        """Abscissae and weights of the composite rule."""
        return self._points.copy(), self._weights.copy()

    def _check_index(self, i: int) -> None:
        if not 0 <= i < self.dim:
            raise IndexError(f"Hat index {i} outside 0..{self.dim - 1}")

    def hat(self, i: int, z) -> np.ndarray:
        self._check_index(i)
        x0, x1, x2 = self.nodes[i], self.nodes[i + 1], self.nodes[i + 2]
        z = np.asarray(z, dtype=float)
        up = (z - x0) / (x1 - x0)
        down = (x2 - z) / (x2 - x1)
        return np.clip(np.minimum(up, down), 0.0, None)

    def hat_slope(self, i: int, z) -> np.ndarray:
        """Derivative of hat i; zero at the breakpoints themselves."""
        self._check_index(i)
        x0, x1, x2 = self.nodes[i], self.nodes[i + 1], self.nodes[i + 2]
        z = np.asarray(z, dtype=float)
        rising = (z > x0) & (z < x1)
        falling = (z > x1) & (z < x2)
        return np.where(rising, 1.0 / (x1 - x0), 0.0) - np.where(falling, 1.0 / (x2 - x1), 0.0)

    def hat_mass(self, i: int) -> float:
        self._check_index(i)
        return 0.5 * (self.nodes[i + 2] - self.nodes[i])

    def slope_matrix(self) -> np.ndarray:
        """Row i holds w_q * hat_slope(i, z_q)."""
        return np.array([self._weights * self.hat_slope(i, self._points) for i in range(self.dim)]).reshape(
            self.dim, self._points.shape[0]
        )

    def value_matrix(self) -> np.ndarray:
        """Row i holds w_q * hat(i, z_q)."""
        return np.array([self._weights * self.hat(i, self._points) for i in range(self.dim)]).reshape(
            self.dim, self._points.shape[0]
        )

    def to_dict(self) -> Dict:
        return {"nodes": list(self.nodes), "quadrature_order": self.quadrature_order, "dim": self.dim}


class NetworkTrial:
    """An MlpNetwork on [0, T] seen as a weak-form trial function."""

    def __init__(self, network: MlpNetwork):
        self.network = network

    def values_and_slopes(self, points) -> Tuple[np.ndarray, np.ndarray]:
        bundles = [jet_forward(self.network, (float(z),), 1) for z in np.ravel(points)]
        return (
            np.array([b.value for b in bundles]),
            np.array([b.partial((1,)) for b in bundles]),
        )

    def values(self, points) -> np.ndarray:
        return forward_batch(self.network, np.ravel(np.asarray(points, dtype=float))[:, None])

    def to_dict(self) -> Dict:
        return {"kind": "network", "network": self.network.to_dict()}


class BoundaryTrialMap:
    """u(z) = u0 + (uT - u0) z / T + z (T - z) N(z) for a network N."""

    def __init__(self, network: MlpNetwork, T: float, u0: float, uT: float):
        self.network = network
        self.T = float(T)
        self.u0 = float(u0)
        self.uT = float(uT)

    def values_and_slopes(self, points) -> Tuple[np.ndarray, np.ndarray]:
        z = np.ravel(np.asarray(points, dtype=float))
        n_val, n_slope = NetworkTrial(self.network).values_and_slopes(z)
        lift = (self.uT - self.u0) / self.T
        bubble = z * (self.T - z)
        values = self.u0 + lift * z + bubble * n_val
        slopes = lift + (self.T - 2.0 * z) * n_val + bubble * n_slope
        return values, slopes

    def values(self, points) -> np.ndarray:
        z = np.ravel(np.asarray(points, dtype=float))
        n_val = forward_batch(self.network, z[:, None])
        return self.u0 + (self.uT - self.u0) / self.T * z + z * (self.T - z) * n_val

    def to_dict(self) -> Dict:
        return {
            "kind": "boundary_map",
            "T": self.T,
            "u0": self.u0,
            "uT": self.uT,
            "network": self.network.to_dict(),
        }


class TrialSum:
    """Function-level sum of coefficient-weighted trial functions."""

    def __init__(self, terms: Sequence[Tuple[float, object]]):
        self.terms = [(float(c), as_trial(t)) for c, t in terms]

    def values_and_slopes(self, points) -> Tuple[np.ndarray, np.ndarray]:
        z = np.ravel(np.asarray(points, dtype=float))
        values = np.zeros(z.shape[0])
        slopes = np.zeros(z.shape[0])
        for c, trial in self.terms:
            v, s = trial.values_and_slopes(z)
            values = values + c * v
            slopes = slopes + c * s
        return values, slopes

    def values(self, points) -> np.ndarray:
        z = np.ravel(np.asarray(points, dtype=float))
        values = np.zeros(z.shape[0])
        for c, trial in self.terms:
            values = values + c * trial.values(z)
        return values

    def to_dict(self) -> Dict:
        return {"kind": "sum", "terms": [{"coefficient": c, "trial": t.to_dict()} for c, t in self.terms]}


Trial = Union[MlpNetwork, NetworkTrial, BoundaryTrialMap, TrialSum]


def as_trial(u) -> Union[NetworkTrial, BoundaryTrialMap, TrialSum]:
    if isinstance(u, MlpNetwork):
        return NetworkTrial(u)
    if hasattr(u, "values_and_slopes"):
        return u
    raise TypeError(f"Cannot use {type(u).__name__} as a trial function")


def combine_trials(u, phi, lam: float):
    """u + lam * phi, as one network when both are networks of equal shape."""
    if isinstance(u, MlpNetwork) and isinstance(phi, MlpNetwork):
        try:
            return linear_combine([u, phi], [1.0, lam])
        except ArchitectureMismatchError:
            pass
    return TrialSum([(1.0, u), (lam, phi)])


@dataclass(frozen=True)
class WeakForm:
    """Poisson weak form a(u, v) = int u'v', F(v) = int f v."""

    source: Optional[Callable[[np.ndarray], np.ndarray]] = None
    label: str = "zero"

    @classmethod
    def constant(cls, c: float) -> "WeakForm":
        if c == 0:
            return cls(None, "zero")
        return cls(lambda z: np.full(np.shape(z), float(c)), f"constant({c:g})")

    @classmethod
    def from_dict(cls, data: Dict) -> "WeakForm":
        return cls.constant(float(data.get("source", 0.0)))

    def bilinear_column(self, u, space: TestSpace) -> np.ndarray:
        points, _ = space.quadrature()
        _, slopes = as_trial(u).values_and_slopes(points)
        return space.slope_matrix() @ slopes

    def load_vector(self, space: TestSpace) -> np.ndarray:
        if self.source is None or space.dim == 0:
            return np.zeros(space.dim)
        points, _ = space.quadrature()
        return space.value_matrix() @ np.asarray(self.source(points), dtype=float)

    def to_dict(self) -> Dict:
        return {"bilinear": "poisson", "source": self.label}


def exact_bilinear_column(u, space: TestSpace) -> np.ndarray:
    """a(u, hat_i) without quadrature: hat slopes are elementwise constant."""
    values = as_trial(u).values_and_slopes(np.array(space.nodes))[0]
    h = np.diff(space.nodes)
    jumps = np.diff(values) / h
    return jumps[:-1] - jumps[1:]


def assemble_T(nets: Sequence, space: TestSpace, form: WeakForm) -> np.ndarray:
    """n x k matrix whose column j is (a(net_j, hat_1), ..., a(net_j, hat_n))."""
    columns = [form.bilinear_column(net, space) for net in nets]
    if not columns:
        return np.zeros((space.dim, 0))
    return np.column_stack(columns).reshape(space.dim, len(nets))


def weak_residual(u, space: TestSpace, form: WeakForm, F: Optional[np.ndarray] = None) -> np.ndarray:
    """Entry i is a(u, hat_i) - F(hat_i)."""
    load = form.load_vector(space) if F is None else np.asarray(F, dtype=float)
    return form.bilinear_column(u, space) - load


def _check_independent(nets: Sequence[MlpNetwork], space: TestSpace, seed: int) -> float:
    rng = np.random.default_rng(seed)
    points = rng.uniform(space.nodes[0], space.nodes[-1], size=4 * len(nets))
    E = np.column_stack([NetworkTrial(net).values_and_slopes(points)[0] for net in nets])
    norms = np.linalg.norm(E, axis=0)
    if np.any(norms == 0):
        raise LinearDependenceError("A trial network vanishes at every sample point")
    smallest = float(np.linalg.svd(E / norms, compute_uv=False)[-1])
    if smallest <= INDEPENDENCE_FLOOR:
        raise LinearDependenceError(f"Trial networks are dependent: smallest singular value {smallest:.3g}")
    return smallest


@dataclass
class KernelResult:
    phi: MlpNetwork
    coeffs: np.ndarray
    residual: float
    singular_values: np.ndarray
    t_scale: float
    l2_norm: Optional[float] = None
    attempts: int = 1
    t_matrix: Optional[np.ndarray] = None

    @property
    def tolerance(self) -> float:
        return KERNEL_RELATIVE_TOLERANCE * self.t_scale

    @property
    def passed(self) -> bool:
        return self.residual <= max(self.tolerance, 1e-14)

    def to_dict(self) -> Dict:
        return {
            "coeffs": self.coeffs.tolist(),
            "residual": self.residual,
            "tolerance": self.tolerance,
            "singular_values": self.singular_values.tolist(),
            "t_scale": self.t_scale,
            "l2_norm": self.l2_norm,
            "attempts": self.attempts,
            "passed": self.passed,
            "phi": self.phi.to_dict(),
        }


def homogeneous_kernel(
    nets: Sequence[MlpNetwork], space: TestSpace, form: WeakForm, seed: int = 0
) -> KernelResult:
    """Unit coefficient vector c with T c = 0 and phi = sum_j c_j net_j."""
    if len(nets) < space.dim + 1:
        raise ValueError(f"Need at least {space.dim + 1} trial networks, got {len(nets)}")
    first = nets[0]
    for net in nets[1:]:
        if net.depth != first.depth or net.activation != first.activation:
            raise ArchitectureMismatchError("Trial networks must share depth and activation")
    if len(nets) > 1:
        _check_independent(nets, space, seed)

    T = assemble_T(nets, space, form)
    if space.dim == 0:
        coeffs = np.zeros(len(nets))
        coeffs[0] = 1.0
        singular_values = np.zeros(0)
    else:
        _, singular_values, vh = linalg.svd(T, full_matrices=True)
        coeffs = vh[-1].copy()
        if coeffs[int(np.argmax(np.abs(coeffs)))] < 0:
            coeffs = -coeffs
    t_scale = float(singular_values[0]) if singular_values.size else 0.0

    phi = linear_combine(list(nets), coeffs.tolist())
    column = form.bilinear_column(phi, space)
    residual = float(np.max(np.abs(column))) if column.size else 0.0
    logger.debug(f"Kernel extraction: residual {residual:.3e}, ||T|| {t_scale:.3e}")
    return KernelResult(phi, coeffs, residual, singular_values, t_scale, t_matrix=T)


def kernel_from_random_trials(
    space: TestSpace,
    form: WeakForm,
    seed: int = 0,
    width: int = 8,
    depth: int = 2,
    max_failures: int = 3,
) -> KernelResult:
    """Sample n + 1 seeded tanh networks until a certified nontrivial kernel element appears."""
    rng = np.random.default_rng(seed)
    dims = [1] + [width] * (depth - 1) + [1]
    failures: List[str] = []
    attempt = 0
    while len(failures) < max_failures:
        attempt += 1
        nets = [random_network(dims, "tanh", rng) for _ in range(space.dim + 1)]
        try:
            result = homogeneous_kernel(nets, space, form, seed=seed + attempt)
        except LinearDependenceError as e:
            failures.append(f"attempt {attempt}: {e}")
            logger.debug(failures[-1])
            continue
        norm = lp_distance(result.phi, None, 2.0, space.domain)
        result.l2_norm = norm
        result.attempts = attempt
        if not result.passed:
            failures.append(f"attempt {attempt}: residual {result.residual:.3e} above {result.tolerance:.3e}")
        elif norm < KERNEL_NORM_FLOOR:
            failures.append(f"attempt {attempt}: ||phi||_L2 = {norm:.3e} below {KERNEL_NORM_FLOOR:g}")
        else:
            logger.info(
                f"Kernel element for n = {space.dim}: residual {result.residual:.3e}, ||phi||_L2 {norm:.4g}"
            )
            return result
        logger.debug(failures[-1])
    raise KernelExtractionError(
        f"No kernel element after {max_failures} consecutive failures: " + "; ".join(failures)
    )


@dataclass
class FamilyRow:
    lam: float
    residual: float
    allowed: float
    bound: float
    distance: float

    @property
    def ok(self) -> bool:
        return self.residual <= self.allowed

    def to_dict(self) -> Dict:
        return {
            "lambda": self.lam,
            "residual": self.residual,
            "allowed": self.allowed,
            "bound": self.bound,
            "distance": self.distance,
            "ok": self.ok,
        }


@dataclass
class FamilyCertificate:
    star_residual: float
    kernel_residual: float
    tol_star: float
    kernel_tol: float
    null_norm: float
    rows: List[FamilyRow]
    lp_p: float = 2.0

    def failures(self) -> List[str]:
        failed = []
        if self.star_residual > self.tol_star:
            failed.append("base_residual")
        if self.kernel_residual > self.kernel_tol:
            failed.append("kernel_residual")
        if not all(row.ok for row in self.rows):
            failed.append("family_residual")
        if self.null_norm < KERNEL_NORM_FLOOR:
            failed.append("nontriviality")
        return failed

    @property
    def passed(self) -> bool:
        return not self.failures()

    def sweep_rows(self) -> List[Tuple[float, float, float, float]]:
        return [(r.lam, r.residual, r.allowed, r.distance) for r in self.rows]

    def to_dict(self) -> Dict:
        return {
            "star_residual": self.star_residual,
            "kernel_residual": self.kernel_residual,
            "tol_star": self.tol_star,
            "kernel_tol": self.kernel_tol,
            "null_norm": self.null_norm,
            "lp_p": self.lp_p,
            "rows": [r.to_dict() for r in self.rows],
            "failures": self.failures(),
            "passed": self.passed,
        }


def solution_family(
    u_star,
    phi,
    lambdas: Sequence[float],
    space: TestSpace,
    form: WeakForm,
    F: Optional[np.ndarray] = None,
    tol_star: float = 1e-8,
    kernel_tol: float = 1e-10,
    p: float = 2.0,
) -> FamilyCertificate:
    """Weak residuals and distances of u_star + lam * phi."""
    load = form.load_vector(space) if F is None else np.asarray(F, dtype=float)

    def sup(vector: np.ndarray) -> float:
        return float(np.max(np.abs(vector))) if vector.size else 0.0

    star_residual = sup(weak_residual(u_star, space, form, load))
    kernel_residual = sup(form.bilinear_column(phi, space))
    null_norm = lp_distance(as_trial(phi), None, p, space.domain)
    rows = []
    for lam in lambdas:
        lam = float(lam)
        combined = as_trial(combine_trials(u_star, phi, lam))
        rows.append(
            FamilyRow(
                lam=lam,
                residual=sup(weak_residual(combined, space, form, load)),
                allowed=tol_star + abs(lam) * kernel_tol,
                bound=star_residual + abs(lam) * kernel_residual,
                distance=lp_distance(combined, as_trial(u_star), p, space.domain),
            )
        )
    cert = FamilyCertificate(star_residual, kernel_residual, tol_star, kernel_tol, null_norm, rows, p)
    logger.info(
        f"Solution family ({len(rows)} lambda(s)): "
        f"{'passed' if cert.passed else 'failed: ' + ', '.join(cert.failures())}"
    )
    return cert


@dataclass
class WeakFit:
    trial: BoundaryTrialMap
    residual: float
    iterations: int
    converged: bool
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "trial": self.trial.to_dict(),
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "warnings": self.warnings,
        }


def _fit_residual_and_gradient(params, z, S, load, T, lift):
    W, a, c, c0 = params
    H = np.tanh(np.outer(z, W) + a)
    H1 = 1.0 - H**2
    H2 = -2.0 * H * H1
    A = T - 2.0 * z
    B = z * (T - z)
    n_val = H @ c + c0
    n_slope = (H1 * W) @ c
    r = S @ (lift + A * n_val + B * n_slope) - load

    g = 2.0 * (S.T @ r)
    dc = (A[:, None] * H + B[:, None] * H1 * W).T @ g
    dc0 = float(A @ g)
    da = c * ((A[:, None] * H1 + B[:, None] * H2 * W).T @ g)
    dW = c * ((A[:, None] * H1 * z[:, None] + B[:, None] * (H1 + H2 * W * z[:, None])).T @ g)
    return r, (dW, da, dc, dc0)


def _solve_output_layer(params, z, S, load, T, lift):
    """Least-squares output layer (c, c0) for a fixed hidden layer; the residual is linear in it."""
    W, a, _, _ = params
    H = np.tanh(np.outer(z, W) + a)
    A = T - 2.0 * z
    B = z * (T - z)
    design = S @ np.column_stack([A[:, None] * H + B[:, None] * (1.0 - H**2) * W, A])
    if design.size == 0:
        return params
    coeffs = linalg.lstsq(design, load - lift * S.sum(axis=1))[0]
    return (W, a, coeffs[:-1], float(coeffs[-1]))


def _sup_residual(params, z, S, load, T, lift) -> float:
    r, _ = _fit_residual_and_gradient(params, z, S, load, T, lift)
    return float(np.max(np.abs(r))) if r.size else 0.0


def wpinn_fit(
    space: TestSpace,
    form: WeakForm,
    T: Optional[float] = None,
    u0: float = 0.0,
    uT: float = 1.0,
    width: int = 8,
    budget: OptimizerBudget = WEAK_FIT_BUDGET,
    seed: int = 0,
) -> WeakFit:
    """Gradient descent on ||weak residual||^2 over the boundary-built-in trial map.

    The output layer starts at zero, so the initial trial is the affine
    lift of the boundary values. With a nonzero budget the output layer is
    solved exactly by least squares before descent and again on the best
    hidden layer afterwards. No optimality claim is made.
    """
    T = space.T if T is None else float(T)
    rng = np.random.default_rng(seed)
    params = (rng.standard_normal(width), rng.standard_normal(width), np.zeros(width), 0.0)
    z, _ = space.quadrature()
    S = space.slope_matrix()
    load = form.load_vector(space)
    lift = (uT - u0) / T
    if budget.max_iterations > 0:
        params = _solve_output_layer(params, z, S, load, T, lift)

    best_value, best_params = math.inf, params
    history: List[float] = []
    iterations = 0
    for iterations in range(1, budget.max_iterations + 1):
        r, grad = _fit_residual_and_gradient(params, z, S, load, T, lift)
        value = float(np.max(np.abs(r))) if r.size else 0.0
        if value < best_value:
            best_value, best_params = value, params
        if value <= 1e-12:
            break
        loss = float(r @ r)
        history.append(loss)
        if len(history) > budget.window and history[-budget.window - 1] - loss < budget.min_decrease:
            break
        params = tuple(p - budget.step * g for p, g in zip(params, grad))
        if iterations % 1000 == 0:
            logger.debug(f"Weak fit: iteration {iterations}, residual {value:.3e}")
    if budget.max_iterations == 0:
        iterations = 0
    elif best_value > 1e-12:
        polished = _solve_output_layer(best_params, z, S, load, T, lift)
        if _sup_residual(polished, z, S, load, T, lift) < best_value:
            best_params = polished

    W, a, c, c0 = best_params
    network = MlpNetwork((W[:, None], c[None, :]), (a, np.array([float(c0)])), "tanh")
    trial = BoundaryTrialMap(network, T, u0, uT)
    residual = weak_residual(trial, space, form, load)
    measured = float(np.max(np.abs(residual))) if residual.size else 0.0
    converged = measured <= FIT_TARGET
    warnings = []
    if not converged:
        warnings.append(f"Weak residual {measured:.3e} above {FIT_TARGET:g} after {iterations} iteration(s)")
        logger.warning(warnings[-1])
    return WeakFit(trial, measured, iterations, converged, warnings)


@dataclass
class QuadratureRow:
    order: int
    column: np.ndarray
    exact_deviation: float
    finest_deviation: float
    kernel_residual: Optional[float]
    below_floor: bool

    def to_dict(self) -> Dict:
        return {
            "order": self.order,
            "column": self.column.tolist(),
            "exact_deviation": self.exact_deviation,
            "finest_deviation": self.finest_deviation,
            "kernel_residual": self.kernel_residual,
            "below_floor": self.below_floor,
        }


@dataclass
class QuadratureReport:
    rows: List[QuadratureRow]
    exact_column: np.ndarray
    warnings: List[str] = field(default_factory=list)

    @property
    def flagged_orders(self) -> List[int]:
        return [row.order for row in self.rows if row.below_floor]

    def to_dict(self) -> Dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "exact_column": self.exact_column.tolist(),
            "flagged_orders": self.flagged_orders,
            "warnings": self.warnings,
        }


def quadrature_sensitivity(
    u,
    space: TestSpace,
    form: WeakForm,
    q_list: Sequence[int],
    phi=None,
) -> QuadratureReport:
    """a(u, hat_i) and, optionally, the kernel residual of phi per quadrature order."""
    orders = sorted(int(q) for q in q_list)
    if not orders:
        raise ValueError("Need at least one quadrature order")
    exact = exact_bilinear_column(u, space)
    columns = {q: form.bilinear_column(u, space.with_order(q)) for q in orders}
    finest = columns[orders[-1]]
    warnings = []
    rows = []
    for q in orders:
        below = q < CERTIFIED_QUADRATURE_FLOOR
        if below:
            warnings.append(f"Quadrature order {q} is below the certified floor {CERTIFIED_QUADRATURE_FLOOR}")
            logger.warning(warnings[-1])
        kernel = None
        if phi is not None:
            col = form.bilinear_column(phi, space.with_order(q))
            kernel = float(np.max(np.abs(col))) if col.size else 0.0
        rows.append(
            QuadratureRow(
                order=q,
                column=columns[q],
                exact_deviation=float(np.max(np.abs(columns[q] - exact))) if exact.size else 0.0,
                finest_deviation=float(np.max(np.abs(columns[q] - finest))) if finest.size else 0.0,
                kernel_residual=kernel,
                below_floor=below,
            )
        )
    return QuadratureReport(rows, exact, warnings)


@dataclass
class QuadratureNull:
    phi: MlpNetwork
    witness: Tuple[float, ...]
    quadrature_residual: float
    exact_residual: float
    finer_residuals: Dict[int, float]

    @property
    def quadrature_only(self) -> bool:
        return self.quadrature_residual == 0.0 and self.exact_residual > 0.0

    def to_dict(self) -> Dict:
        return {
            "witness": list(self.witness),
            "quadrature_residual": self.quadrature_residual,
            "exact_residual": self.exact_residual,
            "finer_residuals": {str(q): v for q, v in self.finer_residuals.items()},
            "quadrature_only": self.quadrature_only,
            "phi": self.phi.to_dict(),
        }


def quadrature_null_direction(
    space: TestSpace,
    witness: Optional[float] = None,
    depth: int = 2,
    finer_orders: Sequence[int] = (16, 32),
) -> QuadratureNull:
    """ReLU plateau function flat at every abscissa, equal to 1 at the witness.

    The default witness is the middle interior mesh node, where the exact
    bilinear form sees a kink the quadrature rule never samples.
    """
    if witness is None:
        if space.dim == 0:
            raise ValueError("A test space without interior nodes needs an explicit witness")
        witness = space.nodes[1 + (space.dim - 1) // 2]
    points, _ = space.quadrature()
    w = as_points([witness])[0]
    if np.any(points == w[0]):
        raise ValueError(f"Witness {w[0]} is a quadrature abscissa")
    nodes = list(points) + [w[0]]
    data = [0.0] * points.shape[0] + [1.0]
    phi = relu_hermite_interpolant(nodes, data, depth, domain=space.domain)

    form = WeakForm()

    def sup(vector: np.ndarray) -> float:
        return float(np.max(np.abs(vector))) if vector.size else 0.0

    result = QuadratureNull(
        phi=phi,
        witness=w,
        quadrature_residual=sup(form.bilinear_column(phi, space)),
        exact_residual=sup(exact_bilinear_column(phi, space)),
        finer_residuals={int(q): sup(form.bilinear_column(phi, space.with_order(q))) for q in finer_orders},
    )
    logger.info(
        f"Quadrature null direction at {w[0]:.6g}: quadrature residual {result.quadrature_residual:.3g}, "
        f"exact residual {result.exact_residual:.6g}"
    )
    return result
