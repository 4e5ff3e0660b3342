"""
Deep Ritz

The discrete Deep Ritz loss as a finite-measurement loss, its 1D Poisson
counterexamples (closed-form affine minimizer, zero-loss one-neuron family,
non-coercive plateau sequences), non-uniqueness certification and the
empirical collocation-agreement check for strictly convex integrands.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from measurement import (
    DEFAULT_LAMBDAS,
    Box,
    DegeneracyCertificate,
    MeasurementSpec,
    as_point,
    as_points,
    attach_escape,
    build_measurement_spec,
    loss_eval,
    loss_invariance_sweep,
    measure,
)
from net_core import MlpNetwork, extend_depth_identity, forward, linear_combine, multi_indices
from null_forge import ForgeFamily, null_direction, relu_hermite_interpolant

logger = logging.getLogger(__name__)

INTEGRAND_KINDS = ("poisson", "strictly_convex_poisson", "dirichlet_energy")
ENFORCEMENTS = ("penalty", "hard_at_points")
RELU_NULL_TOLERANCE = 1e-12
SMOOTH_NULL_TOLERANCE = 1e-8
CONSTRAINT_TOLERANCE = 1e-9
AGREEMENT_TOLERANCE = 1e-3
QUALIFYING_LOSS_WINDOW = 1e-8


class AdmissibilityError(ValueError):
    """Parameters fall outside the range where a construction applies."""


@dataclass(frozen=True)
class LocalIntegrand:
    """Integrand L(xi, s, z) sampled at the interior collocation points."""

    kind: str
    zeta: Optional[Tuple[float, ...]] = None
    mu: float = 0.0

    def __post_init__(self):
        if self.kind not in INTEGRAND_KINDS:
            raise ValueError(f"Unknown integrand '{self.kind}'")
        if self.kind == "strictly_convex_poisson" and not self.mu > 0:
            raise ValueError("Strictly convex Poisson needs mu > 0")
        if self.zeta is not None:
            object.__setattr__(self, "zeta", tuple(float(z) for z in self.zeta))

    @classmethod
    def poisson(cls, zeta: Sequence[float]) -> "LocalIntegrand":
        return cls("poisson", tuple(zeta))

    @classmethod
    def strictly_convex_poisson(cls, zeta: Sequence[float], mu: float) -> "LocalIntegrand":
        return cls("strictly_convex_poisson", tuple(zeta), float(mu))

    @classmethod
    def dirichlet_energy(cls) -> "LocalIntegrand":
        return cls("dirichlet_energy")

    @property
    def strictly_convex(self) -> bool:
        return self.kind == "strictly_convex_poisson"

    def source(self, n: int) -> np.ndarray:
        if self.zeta is None or self.kind == "dirichlet_energy":
            return np.zeros(n)
        if len(self.zeta) != n:
            raise ValueError(f"Source has {len(self.zeta)} samples for {n} interior points")
        return np.array(self.zeta)

    def evaluate(self, grads: np.ndarray, values: np.ndarray, zeta: np.ndarray) -> np.ndarray:
        """L at each point; grads has shape (N, d), values and zeta shape (N,)."""
        energy = 0.5 * np.sum(np.asarray(grads) ** 2, axis=-1)
        if self.kind == "dirichlet_energy":
            return energy
        values = np.asarray(values)
        if self.kind == "poisson":
            return energy - zeta * values
        return energy + 0.5 * self.mu * values**2 - zeta * values

    def value_derivative(self, values: np.ndarray, zeta: np.ndarray) -> np.ndarray:
        """dL/ds at each point."""
        if self.kind == "dirichlet_energy":
            return np.zeros_like(values)
        if self.kind == "poisson":
            return -zeta
        return self.mu * values - zeta

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "zeta": list(self.zeta or ()), "mu": self.mu}


@dataclass(frozen=True, eq=False)
class DeepRitzConfig:
    """Collocation points, quadrature weights and boundary handling."""

    interior: Tuple[Tuple[float, ...], ...]
    boundary: Tuple[Tuple[float, ...], ...] = ()
    alpha_b: float = 0.0
    interior_weights: Optional[Tuple[float, ...]] = None
    boundary_weights: Optional[Tuple[float, ...]] = None
    boundary_values: Optional[Tuple[float, ...]] = None
    boundary_scale: float = 1.0
    exponent: float = 2.0
    enforcement: str = "penalty"
    domain: Optional[Box] = None

    def __post_init__(self):
        interior = tuple(as_points(self.interior))
        boundary = tuple(as_points(self.boundary))
        if not interior:
            raise ValueError("Deep Ritz needs at least one interior point")
        object.__setattr__(self, "interior", interior)
        object.__setattr__(self, "boundary", boundary)

        def weights(given, n, name):
            w = tuple(float(x) for x in given) if given is not None else (1.0 / n,) * n
            if len(w) != n or any(x <= 0 for x in w):
                raise ValueError(f"{name} weights must be {n} positive numbers")
            return w

        object.__setattr__(
            self, "interior_weights", weights(self.interior_weights, len(interior), "Interior")
        )
        if boundary:
            object.__setattr__(
                self,
                "boundary_weights",
                weights(self.boundary_weights, len(boundary), "Boundary"),
            )
            values = self.boundary_values
            values = tuple(float(v) for v in values) if values is not None else (0.0,) * len(boundary)
            if len(values) != len(boundary):
                raise ValueError("Need one boundary value per boundary point")
            object.__setattr__(self, "boundary_values", values)
        else:
            object.__setattr__(self, "boundary_weights", ())
            object.__setattr__(self, "boundary_values", ())

        if self.enforcement not in ENFORCEMENTS:
            raise ValueError(f"Unknown enforcement '{self.enforcement}'")
        if self.alpha_b < 0:
            raise ValueError("Boundary penalty must be nonnegative")
        if self.enforcement == "hard_at_points" and self.alpha_b != 0:
            raise ValueError("Hard boundary enforcement leaves the penalty unused (alpha_b = 0)")
        if self.exponent < 1:
            raise ValueError("Boundary exponent must be >= 1")

    @classmethod
    def example_1d(
        cls,
        T: float = 1.0,
        u0: float = 0.0,
        uT: float = 1.0,
        alpha_b: float = 1.0,
        nodes: Sequence[float] = (0.2, 0.5, 0.8),
        enforcement: str = "penalty",
    ) -> "DeepRitzConfig":
        """1D Poisson example on [0, T]: weights 1/N inside, unit boundary weights."""
        return cls(
            interior=tuple((float(z),) for z in nodes),
            boundary=((0.0,), (float(T),)),
            alpha_b=0.0 if enforcement == "hard_at_points" else alpha_b,
            boundary_weights=(1.0, 1.0),
            boundary_values=(u0, uT),
            enforcement=enforcement,
            domain=Box.interval(0.0, T),
        )

    @classmethod
    def from_dict(cls, data: Dict) -> "DeepRitzConfig":
        domain = data.get("domain")
        return cls(
            interior=as_points(data["interior"]),
            boundary=as_points(data.get("boundary", [])),
            alpha_b=float(data.get("alpha_b", 0.0)),
            interior_weights=data.get("interior_weights"),
            boundary_weights=data.get("boundary_weights"),
            boundary_values=data.get("boundary_values"),
            boundary_scale=float(data.get("boundary_scale", 1.0)),
            exponent=float(data.get("exponent", 2.0)),
            enforcement=data.get("enforcement", "penalty"),
            domain=Box.from_dict(domain) if domain else None,
        )

    @property
    def dim(self) -> int:
        return len(self.interior[0])

    def measurement_spec(self) -> MeasurementSpec:
        return build_measurement_spec(self.interior, 1, self.boundary, self.domain)

    def boundary_residuals(self, traces: np.ndarray) -> np.ndarray:
        return self.boundary_scale * np.asarray(traces) - np.array(self.boundary_values)

    def to_dict(self) -> Dict:
        return {
            "interior": [list(p) for p in self.interior],
            "boundary": [list(p) for p in self.boundary],
            "alpha_b": self.alpha_b,
            "interior_weights": list(self.interior_weights),
            "boundary_weights": list(self.boundary_weights),
            "boundary_values": list(self.boundary_values),
            "boundary_scale": self.boundary_scale,
            "exponent": self.exponent,
            "enforcement": self.enforcement,
            "domain": self.domain.to_dict() if self.domain else None,
        }


def make_dr_aggregator(integrand: LocalIntegrand, config: DeepRitzConfig, spec: MeasurementSpec):
    """G with G(M(u)) equal to the discrete Deep Ritz loss of u."""
    d = config.dim
    units = multi_indices(d, 1, 1)
    value_idx = np.array([spec.index(z, "value") for z in config.interior])
    grad_idx = np.array([[spec.index(z, "partial", beta) for beta in units] for z in config.interior])
    trace_idx = np.array([spec.index(z, "trace_value") for z in config.boundary], dtype=int)
    zeta = integrand.source(len(config.interior))
    w_int = np.array(config.interior_weights)
    w_bnd = np.array(config.boundary_weights)
    penalize = config.enforcement == "penalty" and config.alpha_b > 0 and trace_idx.size

    def aggregate(values: np.ndarray) -> float:
        local = integrand.evaluate(values[grad_idx], values[value_idx], zeta)
        terms = (w_int * local).tolist()
        if penalize:
            residual = np.abs(config.boundary_residuals(values[trace_idx]))
            terms.extend((config.alpha_b * w_bnd * residual**config.exponent).tolist())
        return math.fsum(terms)

    return aggregate


def dr_loss(net: MlpNetwork, integrand: LocalIntegrand, config: DeepRitzConfig) -> float:
    spec = config.measurement_spec()
    return loss_eval(make_dr_aggregator(integrand, config, spec), net, spec)


def hard_constraint_residual(net: MlpNetwork, config: DeepRitzConfig) -> float:
    """max |B(u(z))| over the boundary collocation points."""
    if not config.boundary:
        return 0.0
    traces = np.array([forward(net, z) for z in config.boundary])
    return float(np.max(np.abs(config.boundary_residuals(traces))))


def affine_minimizer_1d(T: float, u0: float, uT: float, alpha_b: float) -> Tuple[float, float]:
    """Minimizer (slope, intercept) of the example loss over affine functions."""
    if T <= 0:
        raise ValueError("Interval length must be positive")
    if alpha_b < 0:
        raise ValueError("Boundary penalty must be nonnegative")
    if math.isinf(alpha_b):
        return (uT - u0) / T, u0
    slope = alpha_b * T * (uT - u0) / (alpha_b * T**2 + 1.0)
    intercept = (2.0 * alpha_b * T**2 * u0 + u0 + uT) / (2.0 * alpha_b * T**2 + 2.0)
    return slope, intercept


def affine_loss_1d(slope, intercept, T, u0, uT, alpha_b) -> float:
    return 0.5 * slope**2 + alpha_b * (
        (intercept - u0) ** 2 + (slope * T + intercept - uT) ** 2
    )


def affine_loss_gradient_1d(slope, intercept, T, u0, uT, alpha_b) -> np.ndarray:
    end = slope * T + intercept - uT
    return np.array(
        [
            slope + 2.0 * alpha_b * T * end,
            2.0 * alpha_b * ((intercept - u0) + end),
        ]
    )


def affine_network(slope, intercept, activation="relu") -> MlpNetwork:
    """Depth-1 network z -> slope . z + intercept."""
    w = np.atleast_2d(np.asarray(slope, dtype=float))
    return MlpNetwork((w,), (np.array([float(intercept)]),), activation)


def one_neuron_zero_loss(
    b: float, T: float, u0: float, uT: float, nodes: Sequence[float]
) -> MlpNetwork:
    """u(z) = (uT - u0)/(T + b) relu(z + b) + u0, flat on every interior node."""
    z_last = max(float(z) for z in np.ravel(nodes))
    if not -T < b < -z_last:
        raise AdmissibilityError(f"b = {b} must lie in ({-T}, {-z_last})")
    return MlpNetwork(
        (np.array([[1.0]]), np.array([[(uT - u0) / (T + b)]])),
        (np.array([float(b)]), np.array([float(u0)])),
        "relu",
    )


@dataclass
class NonCoerciveStep:
    network: MlpNetwork
    loss: float
    k: float
    decay_constant: float
    node: Tuple[float, ...]

    def to_dict(self) -> Dict:
        return {
            "k": self.k,
            "loss": self.loss,
            "decay_constant": self.decay_constant,
            "node": list(self.node),
        }


def non_coercive_sequence(
    k: float,
    config: DeepRitzConfig,
    integrand: LocalIntegrand,
    depth: int = 2,
) -> NonCoerciveStep:
    """k-th plateau network: height k sign(zeta(z0)) at z0, loss -k w |zeta(z0)|."""
    zeta = integrand.source(len(config.interior))
    strength = np.array(config.interior_weights) * np.abs(zeta)
    if not np.any(strength > 0):
        raise AdmissibilityError("Non-coercive sequence needs a nonzero source sample")
    pick = int(np.argmax(strength))

    data = [0.0] * len(config.interior)
    data[pick] = float(k) * float(np.sign(zeta[pick]))
    boundary_targets = [v / config.boundary_scale for v in config.boundary_values]
    nodes = list(config.interior) + list(config.boundary)
    net = relu_hermite_interpolant(nodes, data + boundary_targets, depth, domain=config.domain)
    return NonCoerciveStep(
        network=net,
        loss=dr_loss(net, integrand, config),
        k=float(k),
        decay_constant=float(strength[pick]),
        node=config.interior[pick],
    )


def _matching_depth(base: MlpNetwork, depth: int, config: DeepRitzConfig) -> MlpNetwork:
    if base.depth >= depth:
        return base
    bounds = config.domain.bounds if config.domain else None
    return extend_depth_identity(base, depth, bounds)


def certify_dr_nonuniqueness(
    config: DeepRitzConfig,
    integrand: LocalIntegrand,
    base: MlpNetwork,
    family: ForgeFamily,
    depth: int,
    z0,
    lambdas: Sequence[float] = DEFAULT_LAMBDAS,
    reference: Optional[MlpNetwork] = None,
    resolution: Optional[int] = None,
    seed: int = 0,
    p: float = 2.0,
) -> DegeneracyCertificate:
    """Forge a null direction of the Deep Ritz measurements and sweep base + lambda phi."""
    spec = config.measurement_spec()
    phi = null_direction(spec, z0, family, depth, seed)
    base = _matching_depth(base, depth, config)
    tol = RELU_NULL_TOLERANCE if family.kind == "relu" else SMOOTH_NULL_TOLERANCE
    cert = loss_invariance_sweep(
        make_dr_aggregator(integrand, config, spec),
        base,
        phi,
        spec,
        lambdas,
        z0=z0,
        tol=tol,
        label=f"deep-ritz/{config.enforcement}/{family.label}",
    )
    if config.enforcement == "hard_at_points":
        residuals = tuple(
            hard_constraint_residual(linear_combine([base, phi], [1.0, lam]), config)
            for lam in cert.lambda_samples
        )
        cert = replace(
            cert,
            constraint_residuals=residuals,
            constraint_tolerance=CONSTRAINT_TOLERANCE
            * (1.0 + max((abs(v) for v in config.boundary_values), default=0.0)),
        )
    if reference is not None:
        cert = attach_escape(cert, reference, p, config.domain, resolution)
    return cert


@dataclass(frozen=True)
class OptimizerBudget:
    """Plain gradient descent with a fixed step."""

    step: float = 1e-2
    max_iterations: int = 200000
    window: int = 100
    min_decrease: float = 1e-12

    @classmethod
    def from_dict(cls, data: Dict) -> "OptimizerBudget":
        return cls(**{k: data[k] for k in ("step", "max_iterations", "window", "min_decrease") if k in data})

    def to_dict(self) -> Dict:
        return {
            "step": self.step,
            "max_iterations": self.max_iterations,
            "window": self.window,
            "min_decrease": self.min_decrease,
        }


@dataclass
class TanhTrial:
    """Depth-2 tanh network u(x) = c . tanh(W x + a) + c0 in optimizer form."""

    W: np.ndarray
    a: np.ndarray
    c: np.ndarray
    c0: float

    @classmethod
    def random(cls, d: int, width: int, rng: np.random.Generator) -> "TanhTrial":
        return cls(
            rng.standard_normal((width, d)),
            rng.standard_normal(width),
            rng.standard_normal(width) / math.sqrt(width),
            0.0,
        )

    def to_network(self) -> MlpNetwork:
        return MlpNetwork(
            (self.W, self.c[None, :]), (self.a, np.array([self.c0])), "tanh"
        )


def tanh_trial_loss(
    trial: TanhTrial, integrand: LocalIntegrand, config: DeepRitzConfig
) -> Tuple[float, TanhTrial]:
    """Penalty Deep Ritz loss of a tanh trial and its parameter gradient."""
    X = np.array(config.interior)
    zeta = integrand.source(X.shape[0])
    w_int = np.array(config.interior_weights)

    H = np.tanh(X @ trial.W.T + trial.a)
    H1 = 1.0 - H**2
    H2 = -2.0 * H * H1
    u = H @ trial.c + trial.c0
    grads = (H1 * trial.c) @ trial.W

    loss_terms = (w_int * integrand.evaluate(grads, u, zeta)).tolist()
    g_u = w_int * integrand.value_derivative(u, zeta)
    g_xi = w_int[:, None] * grads
    P = g_xi @ trial.W.T

    grad_c = g_u @ H + np.sum(H1 * P, axis=0)
    grad_a = trial.c * (g_u @ H1 + np.sum(H2 * P, axis=0))
    grad_W = trial.c[:, None] * (
        ((g_u[:, None] * H1 + H2 * P).T @ X) + H1.T @ g_xi
    )
    grad_c0 = float(np.sum(g_u))

    if config.boundary and config.alpha_b > 0 and config.enforcement == "penalty":
        B = np.array(config.boundary)
        Hb = np.tanh(B @ trial.W.T + trial.a)
        ub = Hb @ trial.c + trial.c0
        r = config.boundary_residuals(ub)
        w_b = config.alpha_b * np.array(config.boundary_weights)
        p = config.exponent
        loss_terms.extend((w_b * np.abs(r) ** p).tolist())
        g_b = w_b * p * np.abs(r) ** (p - 1.0) * np.sign(r) * config.boundary_scale
        Hb1 = 1.0 - Hb**2
        grad_c = grad_c + g_b @ Hb
        grad_a = grad_a + trial.c * (g_b @ Hb1)
        grad_W = grad_W + trial.c[:, None] * ((g_b[:, None] * Hb1).T @ B)
        grad_c0 += float(np.sum(g_b))

    return math.fsum(loss_terms), TanhTrial(grad_W, grad_a, grad_c, grad_c0)


@dataclass
class TrialRun:
    index: int
    seed: int
    loss: float
    iterations: int
    converged: bool
    network: MlpNetwork


def _run_trial(index, seed, integrand, config, budget, width) -> TrialRun:
    rng = np.random.default_rng(seed)
    trial = TanhTrial.random(config.dim, width, rng)
    history: List[float] = []
    best = (math.inf, trial)
    converged = False
    iterations = 0
    for iterations in range(1, budget.max_iterations + 1):
        loss, grad = tanh_trial_loss(trial, integrand, config)
        if loss < best[0]:
            best = (loss, trial)
        history.append(loss)
        if len(history) > budget.window:
            if history[-budget.window - 1] - loss < budget.min_decrease:
                converged = True
                break
        trial = TanhTrial(
            trial.W - budget.step * grad.W,
            trial.a - budget.step * grad.a,
            trial.c - budget.step * grad.c,
            trial.c0 - budget.step * grad.c0,
        )
        if iterations % 1000 == 0:
            logger.debug(f"Trial {index}: iteration {iterations}, loss {loss:.12g}")
    if budget.max_iterations == 0:
        best = (tanh_trial_loss(trial, integrand, config)[0], trial)
    return TrialRun(index, seed, best[0], iterations, converged, best[1].to_network())


@dataclass
class CollocationReport:
    applicable: bool
    trials: int
    losses: List[float]
    best_loss: float
    qualifying: List[int]
    max_deviation: float
    converged: List[bool]
    iterations: List[int]
    tolerance: float = AGREEMENT_TOLERANCE
    warnings: List[str] = field(default_factory=list)

    @property
    def agrees(self) -> bool:
        return self.max_deviation <= self.tolerance

    def to_dict(self) -> Dict:
        return {
            "applicable": self.applicable,
            "trials": self.trials,
            "losses": self.losses,
            "best_loss": self.best_loss,
            "qualifying": self.qualifying,
            "max_deviation": self.max_deviation,
            "agrees": self.agrees,
            "converged": self.converged,
            "iterations": self.iterations,
            "tolerance": self.tolerance,
            "warnings": self.warnings,
        }


def collocation_agreement_check(
    integrand: LocalIntegrand,
    config: DeepRitzConfig,
    trials: int,
    budget: OptimizerBudget = OptimizerBudget(),
    width: int = 8,
    seed: int = 0,
    loss_window: float = QUALIFYING_LOSS_WINDOW,
    max_workers: int = 4,
) -> CollocationReport:
    """Compare measurement vectors of independently optimized tanh networks.

    Runs whose loss is within `loss_window` of the best should agree on all
    collocation values, gradients and traces when the integrand is strictly
    convex; this is an empirical check at optimizer tolerance.
    """
    if trials < 1:
        raise ValueError("Need at least one trial")
    warnings = []
    applicable = integrand.strictly_convex and config.enforcement == "penalty"
    if config.alpha_b > 0 and not (config.exponent > 1 and config.boundary_scale != 0):
        applicable = False
    if not applicable:
        warnings.append(f"{integrand.kind} is not strictly convex in (xi, s); agreement is not implied")
        logger.warning(warnings[-1])

    runs: List[TrialRun] = []
    with ThreadPoolExecutor(max_workers=max(1, min(trials, max_workers))) as executor:
        futures = [
            executor.submit(_run_trial, i, seed + i, integrand, config, budget, width)
            for i in range(trials)
        ]
        for future in as_completed(futures):
            runs.append(future.result())
    runs.sort(key=lambda run: run.index)

    if not any(run.converged for run in runs):
        warnings.append("No trial met the convergence criterion within the budget")
        logger.warning(warnings[-1])

    spec = config.measurement_spec()
    vectors = [measure(run.network, spec).values for run in runs]
    best = min(run.loss for run in runs)
    qualifying = [run.index for run in runs if run.loss <= best + loss_window]
    deviation = 0.0
    for i in qualifying:
        for j in qualifying:
            if i < j:
                deviation = max(deviation, float(np.max(np.abs(vectors[i] - vectors[j]))))

    report = CollocationReport(
        applicable=applicable,
        trials=trials,
        losses=[run.loss for run in runs],
        best_loss=best,
        qualifying=qualifying,
        max_deviation=deviation,
        converged=[run.converged for run in runs],
        iterations=[run.iterations for run in runs],
        warnings=warnings,
    )
    logger.info(
        f"Collocation agreement: {len(qualifying)}/{trials} run(s) near best loss "
        f"{best:.10g}, deviation {deviation:.3g}"
    )
    return report


@dataclass
class ShiftReport:
    shifts: List[float]
    losses: List[float]
    value_changes: List[float]
    spread: float

    @property
    def invariant(self) -> bool:
        return self.spread <= 1e-12 * (1.0 + max(abs(v) for v in self.losses))

    def to_dict(self) -> Dict:
        return {
            "shifts": self.shifts,
            "losses": self.losses,
            "value_changes": self.value_changes,
            "spread": self.spread,
            "invariant": self.invariant,
        }


def constant_shift_check(
    integrand: LocalIntegrand,
    config: DeepRitzConfig,
    net: MlpNetwork,
    shifts: Sequence[float] = (-10.0, -1.0, 1.0, 10.0),
) -> ShiftReport:
    """Loss and interior values of net + s for constant shifts s."""
    losses = [dr_loss(net, integrand, config)]
    changes = [0.0]
    base_values = np.array([forward(net, z) for z in config.interior])
    for s in shifts:
        shifted = MlpNetwork(net.weights, net.biases[:-1] + (net.biases[-1] + s,), net.activation)
        losses.append(dr_loss(shifted, integrand, config))
        values = np.array([forward(shifted, z) for z in config.interior])
        changes.append(float(np.max(np.abs(values - base_values))))
    return ShiftReport(
        shifts=[0.0] + [float(s) for s in shifts],
        losses=losses,
        value_changes=changes,
        spread=max(losses) - min(losses),
    )
