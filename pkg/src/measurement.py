"""
Finite Measurements

Finite-measurement maps M (ordered lists of linear point probes), losses of
the form G(M(u)), null-direction checks, loss-invariance sweeps and the
degeneracy certificates built from them.
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from net_core import (
    DEFAULT_KINK_TOLERANCE,
    MlpNetwork,
    forward,
    forward_batch,
    jet_forward,
    linear_combine,
    multi_indices,
)

logger = logging.getLogger(__name__)

NONTRIVIALITY_FLOOR = 0.1
DEFAULT_LAMBDAS = (-100.0, -10.0, -1.0, 1.0, 10.0, 100.0)
INVARIANCE_RELATIVE_TOLERANCE = 1e-9
DEFAULT_RESOLUTION = {1: 4096, 2: 256}
PROBE_KINDS = ("value", "partial", "trace_value")

Point = Tuple[float, ...]
Aggregator = Callable[[np.ndarray], float]


class ProbeError(ValueError):
    """Probe is not a supported linear point functional or violates its domain."""


class WitnessError(ValueError):
    """Witness point coincides with a probe point."""


def as_point(x) -> Point:
    return tuple(float(c) for c in np.atleast_1d(np.asarray(x, dtype=float)).ravel())


def as_points(points) -> List[Point]:
    """Normalize scalars, 1D arrays (d = 1) or (N, d) arrays to point tuples."""
    arr = np.asarray(points, dtype=float)
    if arr.size == 0:
        return []
    if arr.ndim <= 1:
        arr = arr.reshape(-1, 1)
    return [tuple(float(c) for c in row) for row in arr]


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lower, upper] in R^d."""

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        lower = as_point(self.lower)
        upper = as_point(self.upper)
        if len(lower) != len(upper):
            raise ValueError("Box bounds have different dimensions")
        if any(lo >= hi for lo, hi in zip(lower, upper)):
            raise ValueError(f"Degenerate box {lower} x {upper}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def unit(cls, d: int = 1) -> "Box":
        return cls((0.0,) * d, (1.0,) * d)

    @classmethod
    def interval(cls, a: float, b: float) -> "Box":
        return cls((a,), (b,))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.array(self.lower), np.array(self.upper)

    @property
    def volume(self) -> float:
        return math.prod(hi - lo for lo, hi in zip(self.lower, self.upper))

    def contains(self, x, tol: float = 0.0) -> bool:
        p = as_point(x)
        return all(lo - tol <= c <= hi + tol for c, lo, hi in zip(p, self.lower, self.upper))

    def distance_to_boundary(self, x) -> float:
        """Signed distance to the boundary; negative outside the box."""
        p = as_point(x)
        return min(min(c - lo, hi - c) for c, lo, hi in zip(p, self.lower, self.upper))

    def on_boundary(self, x, tol: float = 1e-12) -> bool:
        return self.contains(x, tol) and abs(self.distance_to_boundary(x)) <= tol

    def midpoint_grid(self, resolution: int) -> Tuple[np.ndarray, float]:
        """Cell midpoints of a uniform grid with `resolution` cells per axis."""
        if resolution < 2:
            raise ValueError("Resolution must be at least 2 cells per axis")
        axes = []
        volume = 1.0
        for lo, hi in zip(self.lower, self.upper):
            h = (hi - lo) / resolution
            axes.append(lo + h * (np.arange(resolution) + 0.5))
            volume *= h
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1), volume

    def to_dict(self) -> Dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}

    @classmethod
    def from_dict(cls, data: Dict) -> "Box":
        return cls(tuple(data["lower"]), tuple(data["upper"]))


@dataclass(frozen=True)
class Probe:
    """A linear point functional: value, partial derivative or boundary trace."""

    point: Point
    kind: str = "value"
    beta: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if self.kind not in PROBE_KINDS:
            raise ProbeError(
                f"Probe kind '{self.kind}' is not a linear point functional; "
                f"supported: {', '.join(PROBE_KINDS)}"
            )
        point = as_point(self.point)
        object.__setattr__(self, "point", point)
        if self.kind == "partial":
            if self.beta is None or len(self.beta) != len(point):
                raise ProbeError("Partial probes need a multi-index matching the point")
            beta = tuple(int(b) for b in self.beta)
            if any(b < 0 for b in beta) or sum(beta) < 1:
                raise ProbeError(f"Partial probe multi-index {beta} must have order >= 1")
        else:
            beta = (0,) * len(point)
        object.__setattr__(self, "beta", beta)

    @property
    def order(self) -> int:
        return sum(self.beta)

    def to_dict(self) -> Dict:
        return {"point": list(self.point), "kind": self.kind, "beta": list(self.beta)}


@dataclass(frozen=True, eq=False)
class MeasurementSpec:
    """Ordered probe list defining a finite linear measurement map."""

    probes: Tuple[Probe, ...]
    domain: Optional[Box] = None
    spec_id: str = field(init=False)

    def __post_init__(self):
        probes = tuple(self.probes)
        object.__setattr__(self, "probes", probes)
        dims = {len(p.point) for p in probes}
        if len(dims) > 1:
            raise ProbeError(f"Probes mix dimensions {sorted(dims)}")
        if self.domain is not None:
            for probe in probes:
                if probe.kind == "trace_value" and not self.domain.on_boundary(probe.point):
                    raise ProbeError(f"Trace probe at {probe.point} is not on the boundary")
                if probe.kind != "trace_value" and (
                    not self.domain.contains(probe.point)
                    or self.domain.on_boundary(probe.point)
                ):
                    raise ProbeError(f"Interior probe at {probe.point} is not interior")
        payload = json.dumps(self._layout(), sort_keys=True, separators=(",", ":"))
        object.__setattr__(self, "spec_id", hashlib.sha256(payload.encode()).hexdigest())
        object.__setattr__(
            self, "_index", {(p.point, p.kind, p.beta): i for i, p in enumerate(probes)}
        )

    def _layout(self) -> Dict:
        return {
            "probes": [p.to_dict() for p in self.probes],
            "domain": self.domain.to_dict() if self.domain else None,
        }

    def __len__(self) -> int:
        return len(self.probes)

    @property
    def size(self) -> int:
        return len(self.probes)

    @property
    def dim(self) -> int:
        return len(self.probes[0].point) if self.probes else 0

    @property
    def max_order(self) -> int:
        return max((p.order for p in self.probes), default=0)

    def points(self) -> List[Point]:
        """Distinct probe points in probe order."""
        return list(dict.fromkeys(p.point for p in self.probes))

    def point_orders(self) -> Dict[Point, int]:
        orders: Dict[Point, int] = {}
        for probe in self.probes:
            orders[probe.point] = max(orders.get(probe.point, 0), probe.order)
        return orders

    def index(self, point, kind: str = "value", beta: Optional[Sequence[int]] = None) -> int:
        p = as_point(point)
        b = tuple(int(x) for x in beta) if beta is not None else (0,) * len(p)
        key = (p, kind, b)
        if key not in self._index:
            raise KeyError(f"No {kind} probe {b} at {p}")
        return self._index[key]

    def to_dict(self) -> Dict:
        data = self._layout()
        data["spec_id"] = self.spec_id
        data["size"] = self.size
        return data


def build_measurement_spec(
    interior,
    order: int,
    boundary=(),
    domain: Optional[Box] = None,
) -> MeasurementSpec:
    """Probe list with the fixed layout used throughout.

    Interior points sorted lexicographically, each contributing its value
    probe followed by partial derivatives of orders 1..order in
    graded-lexicographic multi-index order; boundary trace probes last.
    """
    if order < 0:
        raise ProbeError("Probe order must be nonnegative")
    interior_points = sorted(as_points(interior))
    boundary_points = sorted(as_points(boundary))
    everything = interior_points + boundary_points
    if len(set(everything)) != len(everything):
        raise ProbeError("Probe points must be pairwise distinct")

    probes: List[Probe] = []
    for point in interior_points:
        probes.append(Probe(point, "value"))
        for beta in multi_indices(len(point), order, 1):
            probes.append(Probe(point, "partial", beta))
    for point in boundary_points:
        probes.append(Probe(point, "trace_value"))
    return MeasurementSpec(tuple(probes), domain)


def value_spec(points, domain: Optional[Box] = None) -> MeasurementSpec:
    return build_measurement_spec(points, 0, domain=domain)


@dataclass(frozen=True, eq=False)
class MeasurementVector:
    values: np.ndarray
    spec_id: str

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]


def measure(
    net: MlpNetwork,
    spec: MeasurementSpec,
    kink_tolerance: float = DEFAULT_KINK_TOLERANCE,
) -> MeasurementVector:
    """Evaluate every probe of `spec` on `net`, one jet per distinct point."""
    bundles = {
        point: jet_forward(net, point, order, kink_tolerance)
        for point, order in spec.point_orders().items()
    }
    values = np.empty(spec.size)
    for i, probe in enumerate(spec.probes):
        bundle = bundles[probe.point]
        values[i] = bundle.partial(probe.beta) if probe.kind == "partial" else bundle.value
    return MeasurementVector(values, spec.spec_id)


def loss_eval(G: Aggregator, net: MlpNetwork, spec: MeasurementSpec) -> float:
    return float(G(measure(net, spec).values))


def squared_norm(values: np.ndarray) -> float:
    return math.fsum(float(v) * float(v) for v in values)


def sum_aggregator(values: np.ndarray) -> float:
    return math.fsum(float(v) for v in values)


@dataclass(frozen=True)
class NullCheck:
    """Null residual and nontriviality of a candidate null direction."""

    null_residual: float
    witness_point: Point
    witness_value: float
    tolerance: float
    floor: float = NONTRIVIALITY_FLOOR

    @property
    def residual_ok(self) -> bool:
        return self.null_residual <= self.tolerance

    @property
    def nontrivial(self) -> bool:
        return abs(self.witness_value) >= self.floor

    @property
    def passed(self) -> bool:
        return self.residual_ok and self.nontrivial

    def to_dict(self) -> Dict:
        return {
            "null_residual": self.null_residual,
            "witness_point": list(self.witness_point),
            "witness_value": self.witness_value,
            "tolerance": self.tolerance,
            "floor": self.floor,
            "residual_ok": self.residual_ok,
            "nontrivial": self.nontrivial,
            "passed": self.passed,
        }


def check_witness(spec: MeasurementSpec, z0) -> Point:
    point = as_point(z0)
    for probe_point in spec.points():
        if len(probe_point) == len(point) and np.allclose(
            probe_point, point, rtol=0.0, atol=1e-12
        ):
            raise WitnessError(f"Witness {point} coincides with probe point {probe_point}")
    return point


def verify_null(phi: MlpNetwork, spec: MeasurementSpec, z0, tol: float) -> NullCheck:
    """Check M(phi) = 0 within `tol` and |phi(z0)| >= the nontriviality floor."""
    point = check_witness(spec, z0)
    values = measure(phi, spec).values
    residual = float(np.max(np.abs(values))) if values.size else 0.0
    return NullCheck(
        null_residual=residual,
        witness_point=point,
        witness_value=forward(phi, point),
        tolerance=tol,
    )


@dataclass(frozen=True, eq=False)
class DegeneracyCertificate:
    """Evidence that a finite-measurement loss is flat along base + lambda * phi."""

    base: MlpNetwork
    null_dir: MlpNetwork
    spec_id: str
    lambda_samples: Tuple[float, ...]
    loss_values: Tuple[float, ...]
    base_loss: float
    spread: float
    invariance_tolerance: float
    worst_lambda: Optional[float]
    parameter_count: int
    null_check: Optional[NullCheck] = None
    constraint_residuals: Optional[Tuple[float, ...]] = None
    constraint_tolerance: float = 1e-12
    lp_p: Optional[float] = None
    lp_distances: Optional[Tuple[Tuple[float, float], ...]] = None
    reference_distance: Optional[float] = None
    null_norm: Optional[float] = None
    escape_lambda: Optional[float] = None
    escape_bound_holds: Optional[bool] = None
    label: str = ""

    @property
    def null_residual(self) -> Optional[float]:
        return self.null_check.null_residual if self.null_check else None

    @property
    def witness_point(self) -> Optional[Point]:
        return self.null_check.witness_point if self.null_check else None

    @property
    def invariant(self) -> bool:
        return self.spread <= self.invariance_tolerance

    def failures(self) -> List[str]:
        failed = []
        if self.null_check is not None:
            if not self.null_check.residual_ok:
                failed.append("null_residual")
            if not self.null_check.nontrivial:
                failed.append("nontriviality")
        if not self.invariant:
            failed.append("loss_invariance")
        if self.constraint_residuals is not None and any(
            r > self.constraint_tolerance for r in self.constraint_residuals
        ):
            failed.append("hard_constraints")
        if self.escape_bound_holds is False:
            failed.append("escape_bound")
        return failed

    @property
    def passed(self) -> bool:
        return not self.failures()

    def distance_at(self, lam: float) -> Optional[float]:
        for sample, dist in self.lp_distances or ():
            if sample == lam:
                return dist
        return None

    def sweep_rows(self) -> List[Tuple[float, float, Optional[float]]]:
        distances = dict(self.lp_distances or ())
        return [
            (lam, loss, distances.get(lam))
            for lam, loss in zip(self.lambda_samples, self.loss_values)
        ]

    def to_dict(self) -> Dict:
        return {
            "label": self.label,
            "passed": self.passed,
            "failures": self.failures(),
            "spec_id": self.spec_id,
            "lambda_samples": list(self.lambda_samples),
            "loss_values": list(self.loss_values),
            "base_loss": self.base_loss,
            "spread": self.spread,
            "invariance_tolerance": self.invariance_tolerance,
            "worst_lambda": self.worst_lambda,
            "parameter_count": self.parameter_count,
            "null_check": self.null_check.to_dict() if self.null_check else None,
            "constraint_residuals": (
                list(self.constraint_residuals)
                if self.constraint_residuals is not None
                else None
            ),
            "lp_p": self.lp_p,
            "lp_distances": [list(pair) for pair in self.lp_distances or ()],
            "reference_distance": self.reference_distance,
            "null_norm": self.null_norm,
            "escape_lambda": self.escape_lambda,
            "escape_bound_holds": self.escape_bound_holds,
            "base": self.base.to_dict(),
            "null_dir": self.null_dir.to_dict(),
        }


def loss_invariance_sweep(
    G: Aggregator,
    base: MlpNetwork,
    phi: MlpNetwork,
    spec: MeasurementSpec,
    lambdas: Sequence[float] = DEFAULT_LAMBDAS,
    z0=None,
    tol: float = 1e-8,
    label: str = "",
) -> DegeneracyCertificate:
    """Evaluate G(M(base + lambda * phi)) over `lambdas`.

    Passes when every value lies within 1e-9 (1 + |loss(base)|) of every
    other and of the base loss. With a witness `z0` the certificate also
    carries the verify_null fragment at tolerance `tol`.
    """
    base_loss = loss_eval(G, base, spec)
    losses = []
    parameter_count = linear_combine([base, phi], [1.0, 0.0]).parameter_count
    for lam in lambdas:
        combined = linear_combine([base, phi], [1.0, float(lam)])
        losses.append(loss_eval(G, combined, spec))

    everything = losses + [base_loss]
    spread = max(everything) - min(everything)
    worst = None
    if losses:
        deviations = [abs(v - base_loss) for v in losses]
        worst = float(lambdas[int(np.argmax(deviations))])

    null_check = verify_null(phi, spec, z0, tol) if z0 is not None else None
    cert = DegeneracyCertificate(
        base=base,
        null_dir=phi,
        spec_id=spec.spec_id,
        lambda_samples=tuple(float(lam) for lam in lambdas),
        loss_values=tuple(losses),
        base_loss=base_loss,
        spread=spread,
        invariance_tolerance=INVARIANCE_RELATIVE_TOLERANCE * (1.0 + abs(base_loss)),
        worst_lambda=worst,
        parameter_count=parameter_count,
        null_check=null_check,
        label=label,
    )
    logger.info(
        f"Invariance sweep {label or spec.spec_id[:12]}: spread {spread:.3e}, "
        f"{'passed' if cert.passed else 'failed: ' + ', '.join(cert.failures())}"
    )
    return cert


def evaluate_function(f, points: np.ndarray) -> np.ndarray:
    """Evaluate a network, an object with `values(points)` or a vectorized callable."""
    if f is None:
        return np.zeros(points.shape[0])
    if isinstance(f, MlpNetwork):
        return forward_batch(f, points)
    if hasattr(f, "values"):
        return np.asarray(f.values(points), dtype=float)
    return np.asarray(f(points), dtype=float)


def lp_distance(
    u,
    v,
    p: float = 2.0,
    domain: Optional[Box] = None,
    resolution: Optional[int] = None,
) -> float:
    """Composite midpoint approximation of ||u - v||_{L^p(domain)}.

    `v` may be None for the norm of `u`. Default resolution is 4096 cells
    in 1D and 256 per axis in 2D.
    """
    if p < 1:
        raise ValueError("L^p distance needs p >= 1")
    if domain is None:
        d = u.input_dim if isinstance(u, MlpNetwork) else 1
        domain = Box.unit(d)
    if resolution is None:
        resolution = DEFAULT_RESOLUTION.get(domain.dim, 32)
    points, cell = domain.midpoint_grid(resolution)
    diff = np.abs(evaluate_function(u, points) - evaluate_function(v, points))
    if math.isinf(p):
        return float(np.max(diff))
    return float((math.fsum((diff**p).tolist()) * cell) ** (1.0 / p))


def escape_threshold(lp_distances: Sequence[Tuple[float, float]]) -> Optional[float]:
    """Smallest |lambda| from which distances are nondecreasing in |lambda| on both signs."""
    if not lp_distances:
        return None
    for threshold in sorted({abs(lam) for lam, _ in lp_distances}):
        monotone = True
        for sign in (1.0, -1.0):
            branch = sorted(
                (abs(lam), dist)
                for lam, dist in lp_distances
                if lam * sign > 0 and abs(lam) >= threshold
            )
            if any(b[1] < a[1] for a, b in zip(branch, branch[1:])):
                monotone = False
        if monotone:
            return threshold
    return None


def attach_escape(
    certificate: DegeneracyCertificate,
    reference,
    p: float = 2.0,
    domain: Optional[Box] = None,
    resolution: Optional[int] = None,
) -> DegeneracyCertificate:
    """Add L^p distances of base + lambda * phi to `reference` and the escape check."""
    base, phi = certificate.base, certificate.null_dir
    distances = []
    for lam in certificate.lambda_samples:
        combined = linear_combine([base, phi], [1.0, lam])
        distances.append((lam, lp_distance(combined, reference, p, domain, resolution)))

    reference_distance = lp_distance(base, reference, p, domain, resolution)
    null_norm = lp_distance(phi, None, p, domain, resolution)
    holds = all(
        dist >= abs(lam) * null_norm - reference_distance - 1e-9 * (1.0 + dist)
        for lam, dist in distances
    )
    return replace(
        certificate,
        lp_p=p,
        lp_distances=tuple(distances),
        reference_distance=reference_distance,
        null_norm=null_norm,
        escape_lambda=escape_threshold(distances),
        escape_bound_holds=holds,
    )
