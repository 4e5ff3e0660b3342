"""
Null Forge

Constructs the networks used as counterexamples: ReLU plateau interpolants
(constant near every node, so all derivatives vanish there), smooth Hermite
interpolants reduced to one dimension along a separating direction, and
normalized null directions of a measurement spec.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from measurement import Box, MeasurementSpec, as_point, as_points, check_witness
from net_core import (
    DepthExtensionError,
    MlpNetwork,
    constant_network,
    extend_depth_identity,
    forward,
    get_activation,
    jet_forward,
    multi_indices,
)

logger = logging.getLogger(__name__)

GAP_FLOOR = 1e-6
MAX_DIRECTION_ATTEMPTS = 1000
HERMITE_CONDITION_LIMIT = 1e12
HERMITE_RELATIVE_TOLERANCE = 1e-8
ANCHOR_DERIVATIVE_FLOOR = 1e-12
PLATEAU_SHRINK = 0.875
BREAKPOINT_CLEARANCE = 1e-7
DISTINCT_ROW_TOLERANCE = 1e-6

LOCALIZED_SLOPES = (8.0, 6.0, 10.0, 12.0)
ANCHORED_STEPS = (1.0, 0.5)
ANCHOR_BIAS = 0.5
RANDOM_LAYOUTS = 3


class SeparationError(RuntimeError):
    """No direction separating the projected nodes was found."""


class NodeSpacingError(ValueError):
    """Nodes are too close for the requested plateau radius."""


class UnsupportedDimensionError(ValueError):
    """Plateau interpolants are built for d = 1 and d = 2 only."""


class IllConditionedError(RuntimeError):
    """No Hermite layout produced a certified interpolant."""


class NullDirectionError(RuntimeError):
    """The forged function cannot be normalized at the witness."""


@dataclass(frozen=True)
class ForgeFamily:
    """Which interpolant builds null directions: ReLU plateaus or smooth Hermite."""

    kind: str = "relu"
    activation: str = "relu"

    def __post_init__(self):
        if self.kind not in ("relu", "smooth"):
            raise ValueError(f"Unknown forge family '{self.kind}'")
        act = get_activation(self.activation)
        if self.kind == "relu" and act.kind != "relu":
            raise ValueError("The relu family uses the relu activation")
        if self.kind == "smooth" and not act.is_smooth:
            raise ValueError(f"Smooth family needs a smooth activation, got {act.kind}")

    @classmethod
    def parse(cls, text: str) -> "ForgeFamily":
        """Parse "relu", "smooth:<activation>" or a bare smooth activation name."""
        label = text.strip().lower()
        if label == "relu":
            return cls("relu", "relu")
        if label.startswith("smooth"):
            _, _, act = label.partition(":")
            return cls("smooth", act or "tanh")
        return cls("smooth", label)

    @property
    def label(self) -> str:
        return "relu" if self.kind == "relu" else f"smooth:{self.activation}"


def projections_separated(points, v, gap_floor: float = GAP_FLOOR) -> bool:
    proj = np.sort(np.asarray(as_points(points)) @ np.asarray(v, dtype=float))
    if proj.shape[0] < 2:
        return True
    gaps = np.diff(proj)
    spread = proj[-1] - proj[0]
    return bool(gaps.min() > 0.0 and gaps.min() >= gap_floor * spread)


def separating_direction(
    points,
    rng_seed: int = 0,
    gap_floor: float = GAP_FLOOR,
    max_attempts: int = MAX_DIRECTION_ATTEMPTS,
) -> np.ndarray:
    """Unit vector whose projections of `points` are pairwise well separated."""
    pts = as_points(points)
    d = len(pts[0]) if pts else 1
    if d == 1:
        v = np.array([1.0])
        if not projections_separated(pts, v, gap_floor):
            raise SeparationError("Points are not pairwise distinct")
        return v

    rng = np.random.default_rng(rng_seed)
    for attempt in range(max_attempts):
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)
        if projections_separated(pts, v, gap_floor):
            logger.debug(f"Separating direction found after {attempt + 1} draw(s)")
            return v
    raise SeparationError(
        f"No separating direction after {max_attempts} attempts; "
        "points may coincide or be badly scaled"
    )


def _chebyshev_gaps(nodes: np.ndarray) -> np.ndarray:
    return np.array(
        [np.max(np.abs(a - b)) for a, b in itertools.combinations(nodes, 2)]
    )


def _hits_breakpoint(nodes: np.ndarray, radius: float) -> bool:
    if nodes.shape[0] < 2 or nodes.shape[1] < 2:
        return False
    for a, b in itertools.combinations(nodes, 2):
        for offset in np.abs(a - b):
            for mult in (1.0, 3.0):
                if abs(offset - mult * radius) <= BREAKPOINT_CLEARANCE:
                    return True
    return False


def default_plateau_radius(nodes, domain: Optional[Box] = None) -> float:
    """A quarter of the smallest Chebyshev node distance.

    Strictly interior nodes also keep their plateau within a quarter of
    their distance to the domain boundary. In 2D the radius shrinks while
    a node coordinate lands on another node's breakpoint.
    """
    pts = np.asarray(as_points(nodes))
    candidates = []
    if pts.shape[0] >= 2:
        candidates.append(_chebyshev_gaps(pts).min() / 4.0)
    if domain is not None:
        for p in pts:
            dist = domain.distance_to_boundary(p)
            if dist > 1e-12:
                candidates.append(dist / 4.0)
    radius = min(candidates) if candidates else 0.25
    if radius <= 0.0:
        raise NodeSpacingError("Nodes must be pairwise distinct")

    for _ in range(200):
        if not _hits_breakpoint(pts, radius):
            break
        radius *= PLATEAU_SHRINK
    return radius


def _trapezoid_units(center: float, radius: float) -> Tuple[np.ndarray, np.ndarray]:
    breakpoints = center + radius * np.array([-3.0, -1.0, 1.0, 3.0])
    return np.ones(4), -breakpoints


TRAPEZOID_SIGNS = np.array([1.0, -1.0, -1.0, 1.0])


def relu_hermite_interpolant(
    nodes,
    data: Sequence[float],
    depth: int,
    domain: Optional[Box] = None,
    plateau_radius: Optional[float] = None,
) -> MlpNetwork:
    """ReLU network equal to data[i] on a box of radius r around nodes[i].

    d = 1 uses one trapezoid per node (depth 2); d = 2 combines per-axis
    trapezoids T1, T2 into 2 relu(T1 + T2 - 3/2) (depth 3). Deeper
    networks are obtained by exact identity layers.
    """
    pts = np.asarray(as_points(nodes))
    values = np.asarray(data, dtype=float).ravel()
    if pts.shape[0] != values.shape[0]:
        raise ValueError(f"{pts.shape[0]} nodes but {values.shape[0]} data values")
    d = pts.shape[1] if pts.size else (domain.dim if domain else 1)
    if d not in (1, 2):
        raise UnsupportedDimensionError(f"Plateau interpolants support d = 1, 2; got {d}")
    min_depth = math.ceil(math.log2(d + 1)) + 1
    if depth < min_depth:
        raise DepthExtensionError(f"ReLU interpolation in d = {d} needs depth >= {min_depth}")
    bounds = domain.bounds if domain is not None else None
    if pts.shape[0] == 0:
        return extend_depth_identity(constant_network(d, 0.0), depth, bounds)
    if bounds is None:
        bounds = (pts.min(axis=0), pts.max(axis=0))

    radius = plateau_radius if plateau_radius is not None else default_plateau_radius(pts, domain)
    if pts.shape[0] >= 2:
        closest = _chebyshev_gaps(pts).min()
        if closest < 4.0 * radius:
            raise NodeSpacingError(
                f"Nodes {closest:.3g} apart; plateaus of radius {radius:.3g} need >= {4 * radius:.3g}"
            )

    width = 2.0 * radius
    active = [i for i in range(pts.shape[0]) if values[i] != 0.0]
    if not active:
        return extend_depth_identity(constant_network(d, 0.0, "relu"), depth, bounds)

    if d == 1:
        w1, b1, w_out = [], [], []
        for i in active:
            weights, biases = _trapezoid_units(pts[i, 0], radius)
            w1.extend(weights)
            b1.extend(biases)
            w_out.extend((values[i] / width) * TRAPEZOID_SIGNS)
        net = MlpNetwork(
            (np.array(w1)[:, None], np.array([w_out])),
            (np.array(b1), np.array([0.0])),
            "relu",
        )
    else:
        n = len(active)
        w1 = np.zeros((8 * n, 2))
        b1 = np.zeros(8 * n)
        w2 = np.zeros((n, 8 * n))
        b2 = np.full(n, -1.5)
        w_out = np.zeros((1, n))
        for slot, i in enumerate(active):
            for axis in range(2):
                rows = slice(8 * slot + 4 * axis, 8 * slot + 4 * axis + 4)
                weights, biases = _trapezoid_units(pts[i, axis], radius)
                w1[rows, axis] = weights
                b1[rows] = biases
                w2[slot, rows] = TRAPEZOID_SIGNS / width
            w_out[0, slot] = 2.0 * values[i]
        net = MlpNetwork((w1, w2, w_out), (b1, b2, np.array([0.0])), "relu")

    logger.debug(f"Plateau interpolant: {len(active)} node(s), radius {radius:.4g}")
    return extend_depth_identity(net, depth, bounds)


@dataclass
class HermiteFit:
    """Outcome of the smooth Hermite construction."""

    network: Optional[MlpNetwork]
    residual: float
    condition: float
    candidate: str
    certified: bool
    warnings: List[str] = field(default_factory=list)

    def to_dict(self):
        return {
            "residual": self.residual,
            "condition": self.condition,
            "candidate": self.candidate,
            "certified": self.certified,
            "warnings": list(self.warnings),
        }


def _candidate_layouts(tau: np.ndarray, m: int, seed: int):
    """Hidden (slope, bias) layouts in rescaled coordinates, in trial order."""
    n = tau.shape[0]
    ell = n * (m + 1)
    gap = float(np.min(np.diff(np.sort(tau)))) if n >= 2 else 2.0
    offsets = 0.3 + (np.arange(m + 1) - m / 2.0) * 1.2

    for kappa in LOCALIZED_SLOPES:
        w = kappa / gap
        slopes = np.full(ell, w)
        biases = np.concatenate([offsets - w * t for t in tau])
        yield f"localized(kappa={kappa:g})", slopes, biases

    for delta in ANCHORED_STEPS:
        slopes = delta * np.arange(1, ell + 1, dtype=float)
        yield f"anchored(delta={delta:g})", slopes, np.full(ell, ANCHOR_BIAS)

    for k in range(RANDOM_LAYOUTS):
        rng = np.random.default_rng(seed + k)
        yield f"random(seed={seed + k})", rng.uniform(0.5, 3.0, ell), rng.uniform(-2.0, 2.0, ell)


def _hermite_matrix(activation, tau, slopes, biases, m) -> np.ndarray:
    pre = np.outer(tau, slopes) + biases
    derivs = activation.derivatives(pre, m)
    rows = [derivs[k] * slopes**k for k in range(m + 1)]
    # row (i, k) -> position i * (m + 1) + k
    return np.stack(rows, axis=1).reshape(tau.shape[0] * (m + 1), -1)


def _hermite_residual(net: MlpNetwork, pts: np.ndarray, values: np.ndarray, m: int) -> float:
    worst = 0.0
    for x, g in zip(pts, values):
        bundle = jet_forward(net, x, m)
        worst = max(worst, abs(bundle.value - g))
        for beta in multi_indices(pts.shape[1], m, 1):
            worst = max(worst, abs(bundle.partial(beta)))
    return worst


def fit_smooth_hermite(
    nodes,
    values: Sequence[float],
    order: int,
    activation="tanh",
    depth: int = 2,
    seed: int = 0,
) -> HermiteFit:
    """Smooth network with u(x_i) = g_i and all partials up to `order` zero at x_i.

    The hidden widths are (1, ..., 1, N(order + 1)): a scalar chain
    t = s(...s(v.x)) along a separating direction v, followed by a layer
    solving the 1D Hermite problem in t. Layouts that are too ill
    conditioned are skipped; the smallest node residual wins.
    """
    act = get_activation(activation)
    if not act.is_smooth:
        raise ValueError(f"Smooth Hermite interpolation needs a smooth activation, got {act.kind}")
    if depth < 2:
        raise DepthExtensionError("Hermite interpolants need depth >= 2")
    if depth > 2 and not act.strictly_monotone:
        raise DepthExtensionError(f"{act.kind} is not strictly monotone; depth must be 2")
    pts = np.asarray(as_points(nodes))
    g = np.asarray(values, dtype=float).ravel()
    if pts.shape[0] == 0 or pts.shape[0] != g.shape[0]:
        raise ValueError("Need one value per node and at least one node")
    m = int(order)
    d = pts.shape[1]

    v = separating_direction(pts, seed)
    proj = pts @ v
    center = 0.5 * (proj.max() + proj.min())
    scale = 0.5 * (proj.max() - proj.min()) or 1.0

    prefix_w: Tuple[np.ndarray, ...] = ()
    prefix_b: Tuple[np.ndarray, ...] = ()
    if depth >= 3:
        prefix_w = (v[None, :] / scale,) + (np.array([[1.0]]),) * (depth - 3)
        prefix_b = (np.array([-center / scale]),) + (np.array([0.0]),) * (depth - 3)
        chain = MlpNetwork(prefix_w + (np.array([[1.0]]),), prefix_b + (np.array([0.0]),), act)
        t = np.array([forward(chain, x) for x in pts])
    else:
        t = (proj - center) / scale

    t_center = 0.5 * (t.max() + t.min())
    rho = 0.5 * (t.max() - t.min()) if pts.shape[0] > 1 else 1.0
    rho = rho or 1.0
    tau = (t - t_center) / rho
    rhs = np.zeros(pts.shape[0] * (m + 1))
    rhs[:: m + 1] = g

    ell = pts.shape[0] * (m + 1)
    warnings = []
    if any(
        abs(x) <= ANCHOR_DERIVATIVE_FLOOR
        for x in act.derivatives(np.array(ANCHOR_BIAS), max(ell - 1, 0))
    ):
        warnings.append(
            f"{act.kind} has a derivative of order <= {ell - 1} vanishing at anchor {ANCHOR_BIAS}"
        )
        logger.warning(warnings[-1])

    best: Optional[HermiteFit] = None
    for label, slopes, biases in _candidate_layouts(tau, m, seed):
        matrix = _hermite_matrix(act, tau, slopes, biases, m)
        row_scale = np.max(np.abs(matrix), axis=1)
        if np.any(row_scale == 0.0) or not np.all(np.isfinite(matrix)):
            continue
        equilibrated = matrix / row_scale[:, None]
        condition = float(np.linalg.cond(equilibrated))
        if not np.isfinite(condition) or condition > HERMITE_CONDITION_LIMIT:
            logger.debug(f"Hermite layout {label}: condition {condition:.3g} skipped")
            continue
        b_scaled = rhs / row_scale
        coeffs = linalg.solve(equilibrated, b_scaled)
        coeffs = coeffs + linalg.solve(equilibrated, b_scaled - equilibrated @ coeffs)

        # unit j: s(w_j tau + b_j) with tau = (t - t_center) / rho
        w_t = slopes / rho
        b_t = biases - slopes * t_center / rho
        if depth >= 3:
            weights = prefix_w + (w_t[:, None], coeffs[None, :])
            bias = prefix_b + (b_t, np.array([0.0]))
        else:
            weights = (np.outer(w_t, v / scale), coeffs[None, :])
            bias = (b_t - w_t * center / scale, np.array([0.0]))
        net = MlpNetwork(weights, bias, act)
        residual = _hermite_residual(net, pts, g, m)
        logger.debug(f"Hermite layout {label}: condition {condition:.3g}, residual {residual:.3g}")

        if best is None or residual < best.residual:
            best = HermiteFit(net, residual, condition, label, False, list(warnings))

    if best is None:
        raise IllConditionedError(
            f"Every Hermite layout for {pts.shape[0]} node(s), order {m} exceeded "
            f"condition {HERMITE_CONDITION_LIMIT:g}"
        )
    best.certified = best.residual <= HERMITE_RELATIVE_TOLERANCE * (1.0 + float(np.max(np.abs(g))))
    log = logger.info if best.certified else logger.warning
    log(
        f"Hermite fit ({pts.shape[0]} node(s), order {m}, d = {d}, depth {depth}): "
        f"{best.candidate}, residual {best.residual:.3g}"
    )
    return best


def smooth_hermite_interpolant(
    nodes, values, order: int, activation="tanh", depth: int = 2, seed: int = 0
) -> MlpNetwork:
    fit = fit_smooth_hermite(nodes, values, order, activation, depth, seed)
    if not fit.certified:
        raise IllConditionedError(
            f"Best Hermite residual {fit.residual:.3g} ({fit.candidate}) is not certified"
        )
    return fit.network


def _rescale_output(net: MlpNetwork, factor: float) -> MlpNetwork:
    weights = net.weights[:-1] + (net.weights[-1] / factor,)
    biases = net.biases[:-1] + (net.biases[-1] / factor,)
    return MlpNetwork(weights, biases, net.activation)


def null_direction(
    spec: MeasurementSpec,
    z0,
    family: ForgeFamily,
    depth: int,
    seed: int = 0,
) -> MlpNetwork:
    """Nonzero network with M(phi) = 0 for `spec` and phi(z0) = 1.

    Every probe point, boundary traces included, becomes an interpolation
    node with value 0 (and vanishing derivatives up to the probed order);
    the witness is a node with value 1.
    """
    witness = check_witness(spec, z0)
    nodes = spec.points() + [witness]
    data = [0.0] * (len(nodes) - 1) + [1.0]

    if family.kind == "relu":
        net = relu_hermite_interpolant(nodes, data, depth, domain=spec.domain)
    else:
        net = smooth_hermite_interpolant(
            nodes, data, spec.max_order, family.activation, depth, seed
        )

    at_witness = forward(net, witness)
    if not np.isfinite(at_witness) or abs(at_witness) < 1e-8:
        raise NullDirectionError(f"Forged function is {at_witness:.3g} at the witness {witness}")
    if at_witness != 1.0:
        net = _rescale_output(net, at_witness)
    return net


def cross_evaluation_matrix(nulls: Sequence[MlpNetwork], points) -> np.ndarray:
    """Entry (j, k) is nulls[j] evaluated at points[k]."""
    pts = as_points(points)
    return np.array([[forward(phi, p) for p in pts] for phi in nulls])


def null_family(
    spec: MeasurementSpec,
    z0_list,
    family: ForgeFamily,
    depth: int,
    seed: int = 0,
) -> List[MlpNetwork]:
    """One normalized null direction per witness, certified pairwise distinct."""
    witnesses = [as_point(z) for z in as_points(z0_list)]
    if len(set(witnesses)) != len(witnesses):
        raise ValueError("Witness points must be pairwise distinct")
    nulls = [null_direction(spec, z, family, depth, seed) for z in witnesses]

    cross = cross_evaluation_matrix(nulls, witnesses)
    for j, k in itertools.combinations(range(len(nulls)), 2):
        if np.max(np.abs(cross[j] - cross[k])) <= DISTINCT_ROW_TOLERANCE:
            raise NullDirectionError(
                f"Null directions for witnesses {witnesses[j]} and {witnesses[k]} coincide"
            )
    return nulls
