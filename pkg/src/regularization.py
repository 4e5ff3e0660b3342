"""
Variational Regularization

Regularizer catalog, grids and fidelity terms, the pointwise-derivative
quadrature loss with its zero-loss interpolants, the finite-difference
loss, a classical finite-difference reference solver with a grid-search
oracle, and stencil-agreement certification.
"""

import inspect
import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize

from measurement import (
    DEFAULT_LAMBDAS,
    Box,
    DegeneracyCertificate,
    MeasurementSpec,
    as_point,
    as_points,
    build_measurement_spec,
    loss_eval,
    loss_invariance_sweep,
    value_spec,
)
from net_core import (
    MlpNetwork,
    constant_network,
    extend_depth_identity,
    forward,
    linear_combine,
    multi_indices,
)
from null_forge import (
    ForgeFamily,
    null_direction,
    null_family,
    relu_hermite_interpolant,
    smooth_hermite_interpolant,
)

logger = logging.getLogger(__name__)

REGULARIZER_KINDS = (
    "tikhonov",
    "tv",
    "hessian",
    "mixed_tv_hessian",
    "tv_laplacian",
    "elastica",
    "nonconvex_p",
)
CONVEX_KINDS = ("tikhonov", "tv", "hessian", "mixed_tv_hessian")
DEFAULT_EPS = 1e-3
STENCIL_TOLERANCE = 1e-10
MAX_FD_NODES = {1: 64, 2: 256}
STAGNATION_WINDOW = 10000
ORACLE_POINTS_PER_AXIS = {1: 201, 2: 41, 3: 21, 4: 15, 5: 11}


class GridShapeError(ValueError):
    """Field shape does not match the grid, or the grid is too large."""


class NonconvexInstanceError(ValueError):
    """The reference solver only handles convex regularizers with alpha2 > 0."""


def _split_derivatives(derivs: np.ndarray, d: int, order: int):
    """Gradient (..., d) and symmetric Hessian (..., d, d) from a derivative tuple."""
    derivs = np.asarray(derivs, dtype=float)
    grad = derivs[..., :d]
    if order < 2:
        return grad, None
    hess = np.zeros(derivs.shape[:-1] + (d, d))
    for k, (i, j) in enumerate(itertools.combinations_with_replacement(range(d), 2)):
        hess[..., i, j] = derivs[..., d + k]
        hess[..., j, i] = derivs[..., d + k]
    return grad, hess


def _hessian_weights(d: int) -> np.ndarray:
    # mixed partials appear twice in the Frobenius norm
    return np.array(
        [1.0 if i == j else 2.0 for i, j in itertools.combinations_with_replacement(range(d), 2)]
    )


@dataclass(frozen=True)
class RegularizerSpec:
    """One regularizer R of the catalog together with its derivative order."""

    kind: str
    order: int
    p: float = 2.0
    nu: float = 2.0
    rho: Union[float, Tuple[float, ...]] = 0.5
    rho1: float = 1.0
    rho2: float = 1.0
    kappa: float = 1.0
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        if self.kind not in REGULARIZER_KINDS:
            raise ValueError(f"Unknown regularizer '{self.kind}'")
        if self.kind in ("tv_laplacian", "elastica") and not self.eps > 0:
            raise ValueError(f"{self.kind} needs eps > 0")

    @classmethod
    def tikhonov(cls, p: float = 2.0) -> "RegularizerSpec":
        if p < 1 or p != int(p):
            raise ValueError("Tikhonov exponent must be a positive integer")
        return cls("tikhonov", 1, p=float(p))

    @classmethod
    def tv(cls, nu: float = 2.0) -> "RegularizerSpec":
        if nu not in (1, 2):
            raise ValueError("TV uses the l1 (nu = 1) or l2 (nu = 2) gradient norm")
        return cls("tv", 1, nu=float(nu))

    @classmethod
    def hessian(cls) -> "RegularizerSpec":
        return cls("hessian", 2)

    @classmethod
    def mixed_tv_hessian(cls, rho: Union[float, Sequence[float]] = 0.5) -> "RegularizerSpec":
        """rho is one mixing weight for every node or one weight per grid node."""
        weights = np.ravel(np.asarray(rho, dtype=float))
        if weights.size == 0 or np.any((weights < 0.0) | (weights > 1.0)):
            raise ValueError("Mixing weights must lie in [0, 1]")
        if np.ndim(rho) == 0:
            return cls("mixed_tv_hessian", 2, rho=float(weights[0]))
        return cls("mixed_tv_hessian", 2, rho=tuple(weights.tolist()))

    @classmethod
    def tv_laplacian(
        cls, rho1: float = 1.0, rho2: float = 1.0, kappa: float = 1.0, eps: float = DEFAULT_EPS
    ) -> "RegularizerSpec":
        return cls("tv_laplacian", 2, rho1=rho1, rho2=rho2, kappa=kappa, eps=eps)

    @classmethod
    def elastica(cls, rho1: float = 1.0, rho2: float = 1.0, eps: float = DEFAULT_EPS) -> "RegularizerSpec":
        return cls("elastica", 2, rho1=rho1, rho2=rho2, eps=eps)

    @classmethod
    def nonconvex_p(cls, p: float = 0.8) -> "RegularizerSpec":
        if not 0.0 < p < 1.0:
            raise ValueError("Nonconvex exponent must lie in (0, 1)")
        return cls("nonconvex_p", 1, p=float(p))

    @classmethod
    def from_dict(cls, data: Dict) -> "RegularizerSpec":
        factory = getattr(cls, data["kind"], None)
        if data["kind"] not in REGULARIZER_KINDS or factory is None:
            raise ValueError(f"Unknown regularizer '{data['kind']}'")
        accepted = inspect.signature(factory).parameters
        return factory(**{k: v for k, v in data.items() if k in accepted})

    @property
    def convex(self) -> bool:
        return self.kind in CONVEX_KINDS

    @property
    def label(self) -> str:
        if self.kind == "tikhonov":
            return f"tikhonov(p={self.p:g})"
        if self.kind == "tv":
            return f"tv(nu={self.nu:g})"
        if self.kind == "nonconvex_p":
            return f"nonconvex_p(p={self.p:g})"
        if self.kind in ("tv_laplacian", "elastica"):
            return f"{self.kind}(eps={self.eps:g})"
        return self.kind

    def mixing(self, n: int) -> Union[float, np.ndarray]:
        """Mixing weight at each of `n` nodes."""
        if isinstance(self.rho, tuple):
            if len(self.rho) != n:
                raise GridShapeError(f"{len(self.rho)} mixing weights for {n} nodes")
            return np.array(self.rho)
        return self.rho

    def with_eps(self, eps: float) -> "RegularizerSpec":
        return replace(self, eps=eps)

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind,
            "order": self.order,
            "p": self.p,
            "nu": self.nu,
            "rho": list(self.rho) if isinstance(self.rho, tuple) else self.rho,
            "rho1": self.rho1,
            "rho2": self.rho2,
            "kappa": self.kappa,
            "eps": self.eps,
        }

    def evaluate(self, derivs, d: int) -> np.ndarray:
        """R at each derivative tuple; derivs has shape (..., N, eta) or (eta,)."""
        grad, hess = _split_derivatives(derivs, d, self.order)
        gnorm = np.sqrt(np.sum(grad**2, axis=-1))
        if self.kind == "tikhonov":
            return gnorm**self.p
        if self.kind == "tv":
            return np.sum(np.abs(grad), axis=-1) if self.nu == 1 else gnorm
        if self.kind == "nonconvex_p":
            return gnorm**self.p

        hnorm = np.sqrt(np.sum(hess**2, axis=(-2, -1)))
        if self.kind == "hessian":
            return hnorm
        if self.kind == "mixed_tv_hessian":
            rho = self.mixing(hnorm.shape[-1]) if hnorm.ndim else self.mixing(1)
            return rho * hnorm + (1.0 - rho) * gnorm

        smooth_norm = np.hypot(gnorm, self.eps)
        laplacian = np.trace(hess, axis1=-2, axis2=-1)
        if self.kind == "tv_laplacian":
            edge = 1.0 / (1.0 + (smooth_norm / self.kappa) ** 2)
            return self.rho1 * hnorm + self.rho2 * edge * laplacian**2
        # elastica: curvature of the eps-smoothed unit normal field
        quad = np.einsum("...i,...ij,...j->...", grad, hess, grad)
        curvature = (laplacian * smooth_norm**2 - quad) / smooth_norm**3
        return self.rho1 * (smooth_norm - self.eps) + self.rho2 * curvature**2 * smooth_norm


def catalog(eps: float = DEFAULT_EPS) -> List[RegularizerSpec]:
    """One instance of each of the seven catalog kinds."""
    return [
        RegularizerSpec.tikhonov(2),
        RegularizerSpec.tv(2),
        RegularizerSpec.hessian(),
        RegularizerSpec.mixed_tv_hessian(0.5),
        RegularizerSpec.tv_laplacian(eps=eps),
        RegularizerSpec.elastica(eps=eps),
        RegularizerSpec.nonconvex_p(0.8),
    ]


@dataclass(frozen=True)
class GridSpec:
    """Regular grid with nodes origin + spacing * index, C-order flattening."""

    origin: Tuple[float, ...]
    spacing: Tuple[float, ...]
    shape: Tuple[int, ...]

    def __post_init__(self):
        origin = as_point(self.origin)
        spacing = as_point(self.spacing)
        shape = tuple(int(n) for n in np.atleast_1d(self.shape))
        if not (len(origin) == len(spacing) == len(shape)):
            raise GridShapeError("origin, spacing and shape must have one entry per axis")
        if any(h <= 0 for h in spacing) or any(n < 1 for n in shape):
            raise GridShapeError("Grid needs positive spacing and at least one node per axis")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def from_box(cls, lower, upper, shape) -> "GridSpec":
        """Cell-centred grid strictly inside the box."""
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        shape = np.atleast_1d(shape)
        spacing = (upper - lower) / shape
        return cls(tuple(lower + 0.5 * spacing), tuple(spacing), tuple(shape))

    @classmethod
    def from_dict(cls, data: Dict) -> "GridSpec":
        if "lower" in data:
            return cls.from_box(data["lower"], data["upper"], data["shape"])
        return cls(tuple(data["origin"]), tuple(data["spacing"]), tuple(data["shape"]))

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def box(self) -> Box:
        lower = tuple(o - 0.5 * h for o, h in zip(self.origin, self.spacing))
        upper = tuple(o + (n - 0.5) * h for o, h, n in zip(self.origin, self.spacing, self.shape))
        return Box(lower, upper)

    def nodes(self) -> np.ndarray:
        axes = [o + h * np.arange(n) for o, h, n in zip(self.origin, self.spacing, self.shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def reshape(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape[-1] != self.size:
            raise GridShapeError(f"Field has {values.shape[-1]} values, grid has {self.size} nodes")
        return values.reshape(values.shape[:-1] + self.shape)

    def flatten(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape[values.ndim - self.dim:] != self.shape:
            raise GridShapeError(f"Field shape {values.shape} does not end in {self.shape}")
        return values.reshape(values.shape[: values.ndim - self.dim] + (self.size,))

    def to_dict(self) -> Dict:
        return {"origin": list(self.origin), "spacing": list(self.spacing), "shape": list(self.shape)}


@dataclass(frozen=True, eq=False)
class FidelityConfig:
    """alpha1 sum w|u - g| + alpha2 sum w|u - g|^2 with regularizer weights."""

    data: Tuple[float, ...]
    alpha1: float = 0.0
    alpha2: float = 1.0
    data_weights: Optional[Tuple[float, ...]] = None
    reg_weights: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        data = tuple(float(g) for g in np.ravel(self.data))
        n = len(data)
        object.__setattr__(self, "data", data)
        for name in ("data_weights", "reg_weights"):
            given = getattr(self, name)
            weights = tuple(float(w) for w in np.ravel(given)) if given is not None else (1.0 / n,) * n
            if len(weights) != n or any(w < 0 for w in weights):
                raise ValueError(f"{name} must be {n} nonnegative numbers")
            object.__setattr__(self, name, weights)
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ValueError("Fidelity weights must be nonnegative")

    @classmethod
    def from_dict(cls, data: Dict) -> "FidelityConfig":
        return cls(
            tuple(data["data"]),
            float(data.get("alpha1", 0.0)),
            float(data.get("alpha2", 1.0)),
            data.get("data_weights"),
            data.get("reg_weights"),
        )

    @property
    def g(self) -> np.ndarray:
        return np.array(self.data)

    def fidelity(self, values) -> np.ndarray:
        """Fidelity of fields with shape (..., N)."""
        r = np.abs(np.asarray(values, dtype=float) - self.g)
        w = np.array(self.data_weights)
        return np.sum(w * (self.alpha1 * r + self.alpha2 * r**2), axis=-1)

    def to_dict(self) -> Dict:
        return {
            "data": list(self.data),
            "alpha1": self.alpha1,
            "alpha2": self.alpha2,
            "data_weights": list(self.data_weights),
            "reg_weights": list(self.reg_weights),
        }


def _check_fidelity(fid: FidelityConfig, grid: GridSpec) -> None:
    if len(fid.data) != grid.size:
        raise GridShapeError(f"{len(fid.data)} data values for a grid of {grid.size} nodes")


def reg_measurement_spec(grid: GridSpec, reg: RegularizerSpec) -> MeasurementSpec:
    return build_measurement_spec(grid.nodes(), reg.order, domain=grid.box)


def make_reg_aggregator(reg: RegularizerSpec, fid: FidelityConfig, grid: GridSpec, spec: MeasurementSpec):
    """G with G(M(u)) equal to the pointwise-derivative quadrature loss."""
    _check_fidelity(fid, grid)
    d = grid.dim
    nodes = grid.nodes()
    value_idx = np.array([spec.index(x, "value") for x in nodes])
    deriv_idx = np.array(
        [[spec.index(x, "partial", beta) for beta in multi_indices(d, reg.order, 1)] for x in nodes]
    )
    g = fid.g
    w_d = np.array(fid.data_weights)
    w_r = np.array(fid.reg_weights)

    def aggregate(values: np.ndarray) -> float:
        r = np.abs(values[value_idx] - g)
        terms = (w_d * (fid.alpha1 * r + fid.alpha2 * r**2)).tolist()
        terms.extend((w_r * reg.evaluate(values[deriv_idx], d)).tolist())
        return math.fsum(terms)

    return aggregate


def reg_pointwise_loss(net: MlpNetwork, reg: RegularizerSpec, fid: FidelityConfig, grid: GridSpec) -> float:
    spec = reg_measurement_spec(grid, reg)
    return loss_eval(make_reg_aggregator(reg, fid, grid, spec), net, spec)


def zero_loss_interpolant(
    grid: GridSpec,
    data,
    order: int,
    family: ForgeFamily,
    depth: int,
    seed: int = 0,
) -> MlpNetwork:
    """Network matching `data` on the grid with vanishing derivatives up to `order`."""
    values = np.ravel(np.asarray(data, dtype=float))
    if values.shape[0] != grid.size:
        raise GridShapeError(f"{values.shape[0]} data values for a grid of {grid.size} nodes")
    if grid.size == 1:
        net = constant_network(grid.dim, float(values[0]), family.activation)
        return extend_depth_identity(net, depth, grid.box.bounds)
    if family.kind == "relu":
        return relu_hermite_interpolant(grid.nodes(), values, depth, domain=grid.box)
    return smooth_hermite_interpolant(grid.nodes(), values, order, family.activation, depth, seed)


def _null_tolerance(family: ForgeFamily) -> float:
    return 1e-12 if family.kind == "relu" else 1e-8


def certify_reg_nonuniqueness(
    grid: GridSpec,
    fid: FidelityConfig,
    reg: RegularizerSpec,
    family: ForgeFamily,
    depth: int,
    z0_list,
    lambdas: Sequence[float] = DEFAULT_LAMBDAS,
    seed: int = 0,
) -> List[DegeneracyCertificate]:
    """Zero-loss base plus one certified null direction per off-grid witness."""
    base = zero_loss_interpolant(grid, fid.data, reg.order, family, depth, seed)
    spec = reg_measurement_spec(grid, reg)
    G = make_reg_aggregator(reg, fid, grid, spec)
    witnesses = as_points(z0_list)
    nulls = null_family(spec, witnesses, family, depth, seed)
    return [
        loss_invariance_sweep(
            G, base, phi, spec, lambdas, z0=z0, tol=_null_tolerance(family),
            label=f"pointwise/{reg.label}/{family.label}",
        )
        for phi, z0 in zip(nulls, witnesses)
    ]


def _trailing_axis(field_values: np.ndarray, grid: GridSpec, axis: int) -> int:
    return field_values.ndim - grid.dim + axis


def _forward_difference(u: np.ndarray, axis: int, h: float) -> np.ndarray:
    out = np.zeros_like(u)
    head = [slice(None)] * u.ndim
    tail = [slice(None)] * u.ndim
    head[axis] = slice(None, -1)
    tail[axis] = slice(1, None)
    out[tuple(head)] = (u[tuple(tail)] - u[tuple(head)]) / h
    return out


def _second_difference(u: np.ndarray, axis: int, h: float) -> np.ndarray:
    pad = [(0, 0)] * u.ndim
    pad[axis] = (1, 1)
    padded = np.pad(u, pad, mode="edge")
    n = u.shape[axis]
    return (
        np.take(padded, np.arange(2, n + 2), axis=axis)
        - 2.0 * u
        + np.take(padded, np.arange(0, n), axis=axis)
    ) / h**2


def fd_operator(u_values, beta: Sequence[int], grid: GridSpec) -> np.ndarray:
    """Finite-difference D_h^beta of fields shaped (..., *grid.shape).

    First differences are forward with a replicated last node (last
    difference 0); pure second differences are centred with replicated
    padding; mixed second differences compose forward differences.
    """
    u = np.asarray(u_values, dtype=float)
    if u.shape[u.ndim - grid.dim:] != grid.shape:
        raise GridShapeError(f"Field shape {u.shape} does not end in {grid.shape}")
    beta = tuple(int(b) for b in beta)
    if len(beta) != grid.dim:
        raise ValueError(f"Multi-index {beta} does not match grid dimension {grid.dim}")
    order = sum(beta)
    if order < 1 or order > 2:
        raise ValueError(f"Finite differences support 1 <= |beta| <= 2, got {beta}")

    axes = [a for a, b in enumerate(beta) for _ in range(b)]
    if order == 2 and axes[0] == axes[1]:
        a = axes[0]
        return _second_difference(u, _trailing_axis(u, grid, a), grid.spacing[a])
    out = u
    for a in axes:
        out = _forward_difference(out, _trailing_axis(u, grid, a), grid.spacing[a])
    return out


def fd_derivative_tuple(values, grid: GridSpec, m: int) -> np.ndarray:
    """Finite-difference derivative tuples: flat fields (..., N) -> (..., N, eta)."""
    u = grid.reshape(values)
    parts = [grid.flatten(fd_operator(u, beta, grid)) for beta in multi_indices(grid.dim, m, 1)]
    return np.stack(parts, axis=-1)


def fd_objective(values, reg: RegularizerSpec, fid: FidelityConfig, grid: GridSpec) -> np.ndarray:
    """Finite-difference objective for fields of shape (..., N)."""
    values = np.asarray(values, dtype=float)
    derivs = fd_derivative_tuple(values, grid, reg.order)
    w_r = np.array(fid.reg_weights)
    return fid.fidelity(values) + np.sum(w_r * reg.evaluate(derivs, grid.dim), axis=-1)


def sample_on_grid(net: MlpNetwork, grid: GridSpec) -> np.ndarray:
    return np.array([forward(net, x) for x in grid.nodes()])


def reg_fd_loss(net_or_field, reg: RegularizerSpec, fid: FidelityConfig, grid: GridSpec) -> float:
    """Finite-difference loss of a network (sampled on the grid) or a raw field."""
    _check_fidelity(fid, grid)
    if isinstance(net_or_field, MlpNetwork):
        values = sample_on_grid(net_or_field, grid)
    else:
        values = np.ravel(np.asarray(net_or_field, dtype=float))
    if values.shape[0] != grid.size:
        raise GridShapeError(f"Field has {values.shape[0]} values, grid has {grid.size} nodes")
    r = np.abs(values - fid.g)
    terms = (np.array(fid.data_weights) * (fid.alpha1 * r + fid.alpha2 * r**2)).tolist()
    derivs = fd_derivative_tuple(values, grid, reg.order)
    terms.extend((np.array(fid.reg_weights) * reg.evaluate(derivs, grid.dim)).tolist())
    return math.fsum(terms)


def fd_matrix(grid: GridSpec, m: int) -> np.ndarray:
    """Matrix of the stacked finite-difference operators, rows (node, beta)."""
    basis = fd_derivative_tuple(np.eye(grid.size), grid, m)
    return basis.transpose(1, 2, 0).reshape(grid.size * basis.shape[-1], grid.size)


@dataclass
class FdSolution:
    field: np.ndarray
    objective: float
    iterations: int
    method: str
    stage_objectives: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "field": self.field.tolist(),
            "objective": self.objective,
            "iterations": self.iterations,
            "method": self.method,
            "stage_objectives": dict(self.stage_objectives),
        }


def _regularizer_subgradient(reg: RegularizerSpec, derivs: np.ndarray, d: int) -> np.ndarray:
    """An element of the subdifferential of R at each derivative tuple."""
    grad = derivs[..., :d]
    gnorm = np.sqrt(np.sum(grad**2, axis=-1, keepdims=True))
    safe = np.where(gnorm > 0, gnorm, 1.0)
    unit_grad = np.where(gnorm > 0, grad / safe, 0.0)
    out = np.zeros_like(derivs)
    if reg.kind == "tikhonov":
        out[..., :d] = reg.p * gnorm ** (reg.p - 1.0) * unit_grad
        return out
    if reg.kind == "tv":
        out[..., :d] = np.sign(grad) if reg.nu == 1 else unit_grad
        return out

    second = derivs[..., d:]
    c = _hessian_weights(d)
    hnorm = np.sqrt(np.sum(c * second**2, axis=-1, keepdims=True))
    unit_hess = np.where(hnorm > 0, c * second / np.where(hnorm > 0, hnorm, 1.0), 0.0)
    if reg.kind == "hessian":
        out[..., d:] = unit_hess
    else:
        rho = np.reshape(reg.mixing(derivs.shape[-2]), (-1, 1)) if derivs.ndim > 1 else reg.mixing(1)
        out[..., d:] = rho * unit_hess
        out[..., :d] = (1.0 - rho) * unit_grad
    return out


def _fidelity_prox(v: np.ndarray, t: float, fid: FidelityConfig) -> np.ndarray:
    w = np.array(fid.data_weights)
    shifted = v - fid.g
    shrunk = np.sign(shifted) * np.maximum(np.abs(shifted) - fid.alpha1 * w * t, 0.0)
    return fid.g + shrunk / (1.0 + 2.0 * fid.alpha2 * w * t)


def _subgradient_stage(reg, fid, grid, D, tolerance, max_iterations):
    w_r = np.array(fid.reg_weights)
    eta = D.shape[0] // grid.size
    t0 = 0.5 / max(fid.alpha2 * max(fid.data_weights), 1e-12)
    u = fid.g.copy()
    best_u, best_f = u.copy(), float(fd_objective(u, reg, fid, grid))
    last_gain = 0
    k = 0
    for k in range(max_iterations):
        derivs = (D @ u).reshape(grid.size, eta)
        sub = (w_r[:, None] * _regularizer_subgradient(reg, derivs, grid.dim)).ravel() @ D
        t = t0 / math.sqrt(k + 1.0)
        u = _fidelity_prox(u - t * sub, t, fid)
        f = float(fd_objective(u, reg, fid, grid))
        if f < best_f - tolerance:
            last_gain = k
        if f < best_f:
            best_u, best_f = u.copy(), f
        if k - last_gain >= STAGNATION_WINDOW:
            break
    return best_u, best_f, k + 1


def _norm_groups(reg: RegularizerSpec, fid: FidelityConfig, grid: GridSpec, D: np.ndarray):
    """Nonsmooth terms as weight * sqrt(sum c (A u + b)^2) with A rows and offsets."""
    n = grid.size
    eta = D.shape[0] // n
    d = grid.dim
    rows, offsets, coefs, group_of, weights = [], [], [], [], []

    def add(weight, row_ids, coef, matrix, offset):
        g = len(weights)
        weights.append(weight)
        for r, c_ in zip(row_ids, coef):
            rows.append(matrix[r])
            offsets.append(offset[r] if offset is not None else 0.0)
            coefs.append(c_)
            group_of.append(g)

    w_r = np.array(fid.reg_weights)
    rho = np.broadcast_to(reg.mixing(n), (n,)) if reg.kind == "mixed_tv_hessian" else None
    for x in range(n):
        grad_rows = [x * eta + k for k in range(d)]
        hess_rows = [x * eta + k for k in range(d, eta)]
        if reg.kind == "tv" and reg.nu == 1:
            for r in grad_rows:
                add(w_r[x], [r], [1.0], D, None)
        elif reg.kind in ("tv",) or (reg.kind == "tikhonov" and reg.p == 1):
            add(w_r[x], grad_rows, [1.0] * d, D, None)
        elif reg.kind == "hessian":
            add(w_r[x], hess_rows, _hessian_weights(d), D, None)
        elif reg.kind == "mixed_tv_hessian":
            add(rho[x] * w_r[x], hess_rows, _hessian_weights(d), D, None)
            add((1.0 - rho[x]) * w_r[x], grad_rows, [1.0] * d, D, None)
    if fid.alpha1 > 0:
        eye = np.eye(n)
        for x in range(n):
            add(fid.alpha1 * fid.data_weights[x], [x], [1.0], eye, -fid.g)

    if not weights:
        return None
    return (
        np.array(rows),
        np.array(offsets),
        np.array(coefs),
        np.array(group_of, dtype=int),
        np.array(weights),
    )


def _epigraph_polish(reg, fid, grid, D, u_start):
    """SLSQP on the epigraph form of the nonsmooth terms."""
    n = grid.size
    eta = D.shape[0] // n
    w_d = np.array(fid.data_weights)
    w_r = np.array(fid.reg_weights)
    groups = _norm_groups(reg, fid, grid, D)
    smooth_tikhonov = reg.kind == "tikhonov" and reg.p > 1
    n_groups = 0 if groups is None else groups[4].shape[0]

    def group_norms(u):
        A, b, c, gid, _ = groups
        r = A @ u + b
        return r, np.sqrt(np.bincount(gid, weights=c * r**2, minlength=n_groups))

    def objective(z):
        u, t = z[:n], z[n:]
        r = u - fid.g
        f = fid.alpha2 * np.sum(w_d * r**2)
        grad = np.zeros_like(z)
        grad[:n] = 2.0 * fid.alpha2 * w_d * r
        if smooth_tikhonov:
            derivs = (D @ u).reshape(n, eta)
            f += np.sum(w_r * reg.evaluate(derivs, grid.dim))
            sub = w_r[:, None] * _regularizer_subgradient(reg, derivs, grid.dim)
            grad[:n] += sub.ravel() @ D
        if n_groups:
            f += np.sum(groups[4] * t)
            grad[n:] = groups[4]
        return f, grad

    def constraint(z):
        u, t = z[:n], z[n:]
        A, b, c, gid, _ = groups
        r = A @ u + b
        s = np.sqrt(c[single])
        linear = np.concatenate([t[gid[single]] - s * r[single], t[gid[single]] + s * r[single]])
        squares = np.bincount(gid[~single], weights=(c * r**2)[~single], minlength=n_groups)
        return np.concatenate([linear, t[multi] ** 2 - squares[multi]])

    def constraint_jac(z):
        u, t = z[:n], z[n:]
        A, b, c, gid, _ = groups
        r = A @ u + b
        s = np.sqrt(c[single])[:, None]
        rows_single = np.zeros((int(single.sum()), z.shape[0]))
        rows_single[:, :n] = s * A[single]
        rows_single[np.arange(rows_single.shape[0]), n + gid[single]] = 1.0
        lower = rows_single.copy()
        lower[:, :n] *= -1.0
        quad = np.zeros((n_groups, z.shape[0]))
        np.add.at(quad[:, :n], gid[~single], -2.0 * (c * r)[~single][:, None] * A[~single])
        quad[np.arange(n_groups), n + np.arange(n_groups)] = 2.0 * t
        return np.vstack([lower, rows_single, quad[multi]])

    if n_groups:
        single = np.bincount(groups[3], minlength=n_groups)[groups[3]] == 1
        multi = np.flatnonzero(np.bincount(groups[3], minlength=n_groups) > 1)
        _, norms = group_norms(u_start)
        z0 = np.concatenate([u_start, norms + 1e-8])
        constraints = [{"type": "ineq", "fun": constraint, "jac": constraint_jac}]
        bounds = [(None, None)] * n + [(0.0, None)] * n_groups
    else:
        z0 = u_start.copy()
        constraints = []
        bounds = None
    result = minimize(
        objective,
        z0,
        jac=True,
        method="SLSQP",
        bounds=bounds,
        constraints=constraints,
        options={"maxiter": 1000, "ftol": 1e-15},
    )
    logger.debug(f"SLSQP polish: {result.message} after {result.nit} iteration(s)")
    return result.x[:n], int(result.nit)


def fd_reference_solve(
    reg: RegularizerSpec,
    fid: FidelityConfig,
    grid: GridSpec,
    tolerance: float = 1e-10,
    max_iterations: int = 200000,
) -> FdSolution:
    """Minimize the classical finite-difference problem over grid fields."""
    _check_fidelity(fid, grid)
    if not reg.convex:
        raise NonconvexInstanceError(f"{reg.label} has no optimality certificate; refusing")
    if not fid.alpha2 > 0:
        raise NonconvexInstanceError("The reference solver needs alpha2 > 0")
    if grid.size > MAX_FD_NODES.get(grid.dim, 0):
        raise GridShapeError(f"Grid of {grid.size} nodes is too large for the reference solver")

    D = fd_matrix(grid, reg.order)
    u_sub, f_sub, iterations = _subgradient_stage(reg, fid, grid, D, tolerance, max_iterations)
    u_pol, polish_iterations = _epigraph_polish(reg, fid, grid, D, u_sub)
    f_pol = float(fd_objective(u_pol, reg, fid, grid))

    stages = {"subgradient": f_sub, "slsqp": f_pol}
    if f_pol <= f_sub:
        solution = FdSolution(u_pol, f_pol, iterations + polish_iterations, "subgradient+slsqp", stages)
    else:
        solution = FdSolution(u_sub, f_sub, iterations, "subgradient", stages)
    logger.info(f"FD reference ({reg.label}, {grid.size} nodes): objective {solution.objective:.12g}")
    return solution


@dataclass
class OracleResult:
    field: np.ndarray
    objective: float
    spacing: float
    levels: int

    def to_dict(self) -> Dict:
        return {
            "field": self.field.tolist(),
            "objective": self.objective,
            "spacing": self.spacing,
            "levels": self.levels,
        }


def grid_search_oracle(
    reg: RegularizerSpec,
    fid: FidelityConfig,
    grid: GridSpec,
    resolution: float = 1e-3,
) -> OracleResult:
    """Dense multilevel search of the FD objective for grids of at most 5 nodes."""
    _check_fidelity(fid, grid)
    n = grid.size
    if n > 5:
        raise GridShapeError("The grid-search oracle handles at most 5 nodes")
    points = ORACLE_POINTS_PER_AXIS[n]
    g = fid.g
    pad = 0.05 * (g.max() - g.min()) + 1e-3
    center = np.full(n, 0.5 * (g.max() + g.min()))
    half = 0.5 * (g.max() - g.min()) + pad

    best_field, best_value = center.copy(), math.inf
    levels = 0
    spacing = 2.0 * half / (points - 1)
    while True:
        levels += 1
        offsets = np.linspace(-half, half, points)
        candidates = center + np.array(list(itertools.product(offsets, repeat=n)))
        values = fd_objective(candidates, reg, fid, grid)
        k = int(np.argmin(values))
        if values[k] < best_value:
            best_field, best_value = candidates[k].copy(), float(values[k])
        spacing = 2.0 * half / (points - 1)
        if spacing <= resolution:
            break
        center = best_field
        half = 2.0 * spacing
    return OracleResult(best_field, best_value, spacing, levels)


@dataclass
class StencilRow:
    witness: Tuple[float, ...]
    lam: float
    fd_loss_delta: float
    grid_delta: float
    witness_delta: float

    def to_dict(self) -> Dict:
        return {
            "witness": list(self.witness),
            "lambda": self.lam,
            "fd_loss_delta": self.fd_loss_delta,
            "grid_delta": self.grid_delta,
            "witness_delta": self.witness_delta,
        }


@dataclass
class StencilReport:
    grid_match: float
    loss_match: float
    fd_loss: float
    rows: List[StencilRow]
    tolerance: float = STENCIL_TOLERANCE

    def failures(self) -> List[str]:
        failed = []
        if self.grid_match > self.tolerance:
            failed.append("grid_values")
        if self.loss_match > self.tolerance:
            failed.append("fd_loss_match")
        if any(r.fd_loss_delta > self.tolerance for r in self.rows):
            failed.append("fd_loss_invariance")
        if any(r.grid_delta > self.tolerance for r in self.rows):
            failed.append("grid_value_invariance")
        if any(abs(r.witness_delta - r.lam) > 1e-8 * (1.0 + abs(r.lam)) for r in self.rows):
            failed.append("witness_change")
        return failed

    @property
    def passed(self) -> bool:
        return not self.failures()

    def to_dict(self) -> Dict:
        return {
            "grid_match": self.grid_match,
            "loss_match": self.loss_match,
            "fd_loss": self.fd_loss,
            "rows": [r.to_dict() for r in self.rows],
            "tolerance": self.tolerance,
            "failures": self.failures(),
            "passed": self.passed,
        }


def stencil_agreement(
    fd_solution,
    grid: GridSpec,
    reg: RegularizerSpec,
    fid: FidelityConfig,
    family: ForgeFamily,
    depth: int,
    z0_list=(),
    lambdas: Sequence[float] = DEFAULT_LAMBDAS,
    net_minimizer: Optional[MlpNetwork] = None,
    seed: int = 0,
) -> StencilReport:
    """Match a network to the FD solution on the grid and perturb it by FD-null directions."""
    target = fd_solution.field if isinstance(fd_solution, FdSolution) else np.ravel(fd_solution)
    net = net_minimizer or zero_loss_interpolant(grid, target, 0, family, depth, seed)
    samples = sample_on_grid(net, grid)
    field_loss = reg_fd_loss(target, reg, fid, grid)
    net_loss = reg_fd_loss(net, reg, fid, grid)

    rows = []
    witnesses = [as_point(z) for z in as_points(z0_list)] if len(z0_list) else []
    if witnesses:
        spec = value_spec(grid.nodes(), domain=grid.box)
        nulls = null_family(spec, witnesses, family, net.depth, seed)
        for phi, z0 in zip(nulls, witnesses):
            base_at_witness = forward(net, z0)
            for lam in lambdas:
                combined = linear_combine([net, phi], [1.0, float(lam)])
                rows.append(
                    StencilRow(
                        witness=z0,
                        lam=float(lam),
                        fd_loss_delta=abs(reg_fd_loss(combined, reg, fid, grid) - net_loss),
                        grid_delta=float(np.max(np.abs(sample_on_grid(combined, grid) - samples))),
                        witness_delta=forward(combined, z0) - base_at_witness,
                    )
                )

    report = StencilReport(
        grid_match=float(np.max(np.abs(samples - target))),
        loss_match=abs(net_loss - field_loss),
        fd_loss=field_loss,
        rows=rows,
    )
    logger.info(f"Stencil agreement: {'passed' if report.passed else 'failed: ' + ', '.join(report.failures())}")
    return report


def certify_fd_nonuniqueness(
    grid: GridSpec,
    reg: RegularizerSpec,
    fid: FidelityConfig,
    family: ForgeFamily,
    depth: int,
    z0,
    base: Optional[MlpNetwork] = None,
    lambdas: Sequence[float] = DEFAULT_LAMBDAS,
    seed: int = 0,
) -> DegeneracyCertificate:
    """Sweep the FD loss along a value-only null direction."""
    _check_fidelity(fid, grid)
    spec = value_spec(grid.nodes(), domain=grid.box)
    order = [spec.index(x, "value") for x in grid.nodes()]

    def G(values: np.ndarray) -> float:
        return reg_fd_loss(values[order], reg, fid, grid)

    if base is None:
        base = zero_loss_interpolant(grid, fid.data, 0, family, depth, seed)
    phi = null_direction(spec, z0, family, depth, seed)
    return loss_invariance_sweep(
        G, base, phi, spec, lambdas, z0=z0, tol=_null_tolerance(family),
        label=f"fd/{reg.label}/{family.label}",
    )


def epsilon_convergence(
    reg: RegularizerSpec, derivs, d: int, eps_list: Sequence[float] = (1e-2, 1e-3, 1e-4)
) -> List[Tuple[float, float]]:
    """Summed regularizer values on fixed derivative tuples as eps decreases."""
    if reg.kind not in ("tv_laplacian", "elastica"):
        raise ValueError(f"{reg.kind} has no smoothing parameter")
    derivs = np.asarray(derivs, dtype=float)
    return [(float(eps), float(np.sum(reg.with_eps(eps).evaluate(derivs, d)))) for eps in eps_list]
