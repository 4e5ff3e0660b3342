"""
Network Core

Small fully connected scalar networks: exact forward evaluation, truncated
Taylor jets for pointwise derivatives of any fixed order, linear combination
by width concatenation and identity depth extension.
"""

import itertools
import json
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from types import MappingProxyType
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.linalg import block_diag
from scipy.special import expit

logger = logging.getLogger(__name__)

DEFAULT_KINK_TOLERANCE = 1e-9
INFINITE_SMOOTHNESS = "infinite"
SMOOTH_IDENTITY_TOLERANCE = 1e-11

MultiIndex = Tuple[int, ...]
Bounds = Tuple[Sequence[float], Sequence[float]]


class DimensionMismatchError(ValueError):
    """Input point does not match the network's input dimension."""


class KinkProximityError(ValueError):
    """A ReLU preactivation sits within kink tolerance of zero."""


class UnsupportedOrderError(ValueError):
    """Requested derivative order exceeds the activation's smoothness."""


class ArchitectureMismatchError(ValueError):
    """Networks cannot be combined (depth, activation or input mismatch)."""


class DepthExtensionError(ValueError):
    """Identity depth extension is not available for this request."""


@lru_cache(maxsize=None)
def _tanh_polynomials(m: int) -> Tuple[np.ndarray, ...]:
    # d^k tanh = P_k(tanh), P_{k+1} = P_k'(T) (1 - T^2)
    polys = [np.array([0.0, 1.0])]
    for _ in range(m):
        polys.append(npoly.polymul(npoly.polyder(polys[-1]), [1.0, 0.0, -1.0]))
    return tuple(polys)


@lru_cache(maxsize=None)
def _sigmoid_polynomials(m: int) -> Tuple[np.ndarray, ...]:
    # d^k S = Q_k(S), Q_{k+1} = Q_k'(S) S (1 - S)
    polys = [np.array([0.0, 1.0])]
    for _ in range(m):
        polys.append(npoly.polymul(npoly.polyder(polys[-1]), [0.0, 1.0, -1.0]))
    return tuple(polys)


@dataclass(frozen=True)
class Activation:
    """Scalar activation with symbolic derivatives of every order."""

    kind: str
    smoothness_order: Union[int, str]
    strictly_monotone: bool

    @property
    def is_smooth(self) -> bool:
        return self.smoothness_order == INFINITE_SMOOTHNESS

    @property
    def is_piecewise_affine(self) -> bool:
        return self.kind == "relu"

    def supports_order(self, m: int) -> bool:
        if self.is_smooth or self.is_piecewise_affine:
            return True
        return m <= int(self.smoothness_order)

    def value(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if self.kind == "relu":
            return np.maximum(a, 0.0)
        if self.kind == "tanh":
            return np.tanh(a)
        if self.kind == "sigmoid":
            return expit(a)
        if self.kind == "softplus":
            return np.logaddexp(0.0, a)
        if self.kind == "identity":
            return a.copy()
        raise ValueError(f"Unknown activation kind: {self.kind}")

    def derivative(self, a, k: int) -> np.ndarray:
        return self.derivatives(a, k)[k]

    def derivatives(self, a, m: int) -> np.ndarray:
        """Return an array of shape (m + 1,) + a.shape with D^k sigma(a)."""
        a = np.asarray(a, dtype=float)
        if m < 0:
            raise ValueError("Derivative order must be nonnegative")
        if not self.supports_order(m):
            raise UnsupportedOrderError(
                f"{self.kind} is C^{self.smoothness_order}, order {m} requested"
            )
        out = np.zeros((m + 1,) + a.shape)
        out[0] = self.value(a)
        if m == 0:
            return out

        if self.kind == "relu":
            if np.any(a == 0.0):
                raise KinkProximityError("ReLU derivative requested at its kink")
            out[1] = (a > 0.0).astype(float)
        elif self.kind == "identity":
            out[1] = 1.0
        elif self.kind == "tanh":
            t = out[0]
            for k, poly in enumerate(_tanh_polynomials(m)[1:], start=1):
                out[k] = npoly.polyval(t, poly)
        elif self.kind == "sigmoid":
            s = out[0]
            for k, poly in enumerate(_sigmoid_polynomials(m)[1:], start=1):
                out[k] = npoly.polyval(s, poly)
        elif self.kind == "softplus":
            s = expit(a)
            for k, poly in enumerate(_sigmoid_polynomials(m - 1), start=1):
                out[k] = npoly.polyval(s, poly)
        return out


ACTIVATIONS: Dict[str, Activation] = {
    "relu": Activation("relu", 0, False),
    "tanh": Activation("tanh", INFINITE_SMOOTHNESS, True),
    "sigmoid": Activation("sigmoid", INFINITE_SMOOTHNESS, True),
    "softplus": Activation("softplus", INFINITE_SMOOTHNESS, True),
    "identity": Activation("identity", INFINITE_SMOOTHNESS, True),
}


def get_activation(name: Union[str, Activation]) -> Activation:
    """Resolve an activation by name."""
    if isinstance(name, Activation):
        return name
    key = str(name).strip().lower()
    if key not in ACTIVATIONS:
        raise ValueError(
            f"Unknown activation '{name}'. Available: {', '.join(sorted(ACTIVATIONS))}"
        )
    return ACTIVATIONS[key]


def count_parameters(layer_dims: Sequence[int]) -> int:
    return sum(
        layer_dims[i] * layer_dims[i - 1] + layer_dims[i]
        for i in range(1, len(layer_dims))
    )


@dataclass(frozen=True, eq=False)
class MlpNetwork:
    """Depth-L fully connected network R^d -> R with a shared activation.

    Arrays are copied and frozen on construction; the activation applies to
    every hidden layer and the output layer is affine.
    """

    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]
    activation: Activation

    def __post_init__(self):
        if len(self.weights) == 0 or len(self.weights) != len(self.biases):
            raise ValueError("Need one bias vector per weight matrix, depth >= 1")

        weights = []
        biases = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            w = np.array(w, dtype=float, copy=True, ndmin=2)
            b = np.array(b, dtype=float, copy=True, ndmin=1)
            if i > 0 and w.shape[1] != weights[-1].shape[0]:
                raise ValueError(
                    f"Layer {i + 1} expects {w.shape[1]} inputs, "
                    f"previous layer has {weights[-1].shape[0]} units"
                )
            if b.shape != (w.shape[0],):
                raise ValueError(f"Layer {i + 1} bias shape {b.shape} != {(w.shape[0],)}")
            w.setflags(write=False)
            b.setflags(write=False)
            weights.append(w)
            biases.append(b)

        if weights[-1].shape[0] != 1:
            raise ValueError("Output layer must have exactly one unit")

        object.__setattr__(self, "weights", tuple(weights))
        object.__setattr__(self, "biases", tuple(biases))
        object.__setattr__(self, "activation", get_activation(self.activation))

    @property
    def layer_dims(self) -> List[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def hidden_widths(self) -> List[int]:
        return self.layer_dims[1:-1]

    @property
    def parameter_count(self) -> int:
        return count_parameters(self.layer_dims)

    def to_dict(self) -> Dict:
        return {
            "activation": self.activation.kind,
            "layer_dims": self.layer_dims,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "MlpNetwork":
        net = cls(
            weights=tuple(np.array(w, dtype=float) for w in data["weights"]),
            biases=tuple(np.array(b, dtype=float) for b in data["biases"]),
            activation=data["activation"],
        )
        declared = data.get("layer_dims")
        if declared is not None and list(declared) != net.layer_dims:
            raise ValueError(
                f"layer_dims {list(declared)} do not match weights {net.layer_dims}"
            )
        return net


def save_network(net: MlpNetwork, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(net.to_dict(), indent=2), encoding="utf-8")


def load_network(path: Union[str, Path]) -> MlpNetwork:
    return MlpNetwork.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def constant_network(d: int, c: float, activation="relu") -> MlpNetwork:
    """Depth-1 network returning c everywhere on R^d."""
    return MlpNetwork((np.zeros((1, d)),), (np.array([float(c)]),), activation)


def random_network(
    layer_dims: Sequence[int],
    activation,
    rng: np.random.Generator,
    scale: float = 1.0,
) -> MlpNetwork:
    """Network with i.i.d. normal weights and biases."""
    weights = []
    biases = []
    for i in range(1, len(layer_dims)):
        weights.append(scale * rng.standard_normal((layer_dims[i], layer_dims[i - 1])))
        biases.append(scale * rng.standard_normal(layer_dims[i]))
    return MlpNetwork(tuple(weights), tuple(biases), activation)


@lru_cache(maxsize=None)
def multi_indices(d: int, m: int, min_order: int = 0) -> Tuple[MultiIndex, ...]:
    """Multi-indices of order min_order..m in graded-lexicographic order.

    For d = 2, m = 2 this is (0,0), (1,0), (0,1), (2,0), (1,1), (0,2).
    """
    out = []
    for k in range(min_order, m + 1):
        for combo in itertools.combinations_with_replacement(range(d), k):
            beta = [0] * d
            for axis in combo:
                beta[axis] += 1
            out.append(tuple(beta))
    return tuple(out)


def derivative_count(d: int, m: int) -> int:
    """Number of partial derivatives of orders 1..m in d variables."""
    return len(multi_indices(d, m, 1))


def _beta_factorial(beta: MultiIndex) -> int:
    return math.prod(math.factorial(b) for b in beta)


@dataclass(frozen=True, eq=False)
class DerivativeBundle:
    """Value and all partial derivatives up to `order` at one point."""

    point: Tuple[float, ...]
    order: int
    entries: Mapping[MultiIndex, float]

    def __post_init__(self):
        object.__setattr__(self, "entries", MappingProxyType(dict(self.entries)))

    @property
    def dim(self) -> int:
        return len(self.point)

    @property
    def value(self) -> float:
        return self.entries[(0,) * self.dim]

    def partial(self, beta: Sequence[int]) -> float:
        beta = tuple(int(b) for b in beta)
        if len(beta) != self.dim or sum(beta) > self.order:
            raise ValueError(f"Multi-index {beta} not available in an order-{self.order} jet")
        return self.entries[beta]

    def gradient(self) -> np.ndarray:
        if self.order < 1:
            raise ValueError("Gradient needs a jet of order >= 1")
        return np.array([self.entries[beta] for beta in multi_indices(self.dim, 1, 1)])

    def derivative_tuple(self, min_order: int = 1) -> np.ndarray:
        return np.array(
            [self.entries[beta] for beta in multi_indices(self.dim, self.order, min_order)]
        )


class _JetAlgebra:
    """Truncated multivariate Taylor arithmetic for fixed (d, m)."""

    def __init__(self, d: int, m: int):
        self.d = d
        self.m = m
        self.indices = multi_indices(d, m)
        self.position = {beta: i for i, beta in enumerate(self.indices)}
        self.size = len(self.indices)
        self.factorials = np.array([_beta_factorial(b) for b in self.indices], dtype=float)

        left, right, target = [], [], []
        for i, a in enumerate(self.indices):
            for j, b in enumerate(self.indices):
                total = tuple(x + y for x, y in zip(a, b))
                if sum(total) <= m:
                    left.append(i)
                    right.append(j)
                    target.append(self.position[total])
        self._left = np.array(left, dtype=int)
        self._right = np.array(right, dtype=int)
        self._target = np.array(target, dtype=int)

    def seed(self, x: np.ndarray) -> np.ndarray:
        jets = np.zeros((self.d, self.size))
        jets[:, 0] = x
        if self.m >= 1:
            for axis in range(self.d):
                unit = tuple(1 if k == axis else 0 for k in range(self.d))
                jets[axis, self.position[unit]] = 1.0
        return jets

    def multiply(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        out = np.zeros_like(a)
        np.add.at(out, (slice(None), self._target), a[:, self._left] * b[:, self._right])
        return out


@lru_cache(maxsize=None)
def _algebra(d: int, m: int) -> _JetAlgebra:
    return _JetAlgebra(d, m)


def _exact_affine(weights: np.ndarray, bias: np.ndarray, jets: np.ndarray) -> np.ndarray:
    # Correctly rounded sums: results do not depend on summation order.
    rows = weights.shape[0]
    n = jets.shape[1]
    out = np.empty((rows, n))
    for r in range(rows):
        terms = weights[r][:, None] * jets
        for c in range(n):
            column = terms[:, c].tolist()
            if c == 0:
                column.append(float(bias[r]))
            out[r, c] = math.fsum(column)
    return out


def _compose(
    activation: Activation,
    pre: np.ndarray,
    algebra: _JetAlgebra,
    order: int,
    kink_tolerance: float,
    layer: int,
) -> np.ndarray:
    a0 = pre[:, 0]
    if order == 0:
        return activation.value(a0)[:, None]

    delta = pre.copy()
    delta[:, 0] = 0.0

    if activation.is_piecewise_affine:
        near = np.abs(a0) <= kink_tolerance
        if np.any(near):
            unit = int(np.flatnonzero(near)[0])
            raise KinkProximityError(
                f"ReLU preactivation {a0[unit]:.3e} at layer {layer}, unit {unit} "
                f"is within {kink_tolerance:g} of the kink"
            )
        slope = (a0 > 0.0).astype(float)
        out = slope[:, None] * delta
        out[:, 0] = np.maximum(a0, 0.0)
        return out

    derivs = activation.derivatives(a0, order)
    out = np.zeros_like(pre)
    out[:, 0] = derivs[0]
    power = delta
    for k in range(1, order + 1):
        out += (derivs[k] / math.factorial(k))[:, None] * power
        if k < order:
            power = algebra.multiply(power, delta)
    return out


def _as_point(net: MlpNetwork, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != net.input_dim:
        raise DimensionMismatchError(
            f"Point has dimension {x.shape[0]}, network expects {net.input_dim}"
        )
    return x


def jet_forward(
    net: MlpNetwork,
    x,
    order: int,
    kink_tolerance: float = DEFAULT_KINK_TOLERANCE,
) -> DerivativeBundle:
    """All partial derivatives of `net` at `x` up to `order`.

    Propagates truncated Taylor expansions through the layers, so results
    are exact up to roundoff. Any ReLU preactivation within `kink_tolerance`
    of zero raises KinkProximityError when order >= 1.
    """
    if order < 0:
        raise ValueError("Jet order must be nonnegative")
    if not net.activation.supports_order(order):
        raise UnsupportedOrderError(
            f"{net.activation.kind} is C^{net.activation.smoothness_order}, "
            f"order {order} requested"
        )
    point = _as_point(net, x)
    algebra = _algebra(net.input_dim, order)

    jets = algebra.seed(point)
    for layer, (w, b) in enumerate(zip(net.weights[:-1], net.biases[:-1]), start=1):
        pre = _exact_affine(w, b, jets)
        jets = _compose(net.activation, pre, algebra, order, kink_tolerance, layer)
    out = _exact_affine(net.weights[-1], net.biases[-1], jets)[0]

    entries = {
        beta: float(out[i] * algebra.factorials[i])
        for i, beta in enumerate(algebra.indices)
    }
    return DerivativeBundle(point=tuple(point.tolist()), order=order, entries=entries)


def forward(net: MlpNetwork, x) -> float:
    """Exactly rounded evaluation of the network at a single point."""
    point = _as_point(net, x)
    h = point[:, None]
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        h = net.activation.value(_exact_affine(w, b, h)[:, 0])[:, None]
    return float(_exact_affine(net.weights[-1], net.biases[-1], h)[0, 0])


def forward_batch(net: MlpNetwork, points) -> np.ndarray:
    """Vectorized evaluation at the rows of `points`; shape (N,)."""
    h = np.asarray(points, dtype=float)
    if h.ndim == 1:
        h = h[:, None] if net.input_dim == 1 else h[None, :]
    if h.shape[1] != net.input_dim:
        raise DimensionMismatchError(
            f"Points have dimension {h.shape[1]}, network expects {net.input_dim}"
        )
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        h = net.activation.value(h @ w.T + b)
    return (h @ net.weights[-1].T + net.biases[-1])[:, 0]


def preactivations(net: MlpNetwork, x) -> List[np.ndarray]:
    """Hidden-layer preactivations at `x`, one array per hidden layer."""
    h = _as_point(net, x)[:, None]
    out = []
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        pre = _exact_affine(w, b, h)[:, 0]
        out.append(pre)
        h = net.activation.value(pre)[:, None]
    return out


def is_smooth_at(
    net: MlpNetwork, x, kink_tolerance: float = DEFAULT_KINK_TOLERANCE
) -> bool:
    if not net.activation.is_piecewise_affine:
        return True
    return all(np.all(np.abs(pre) > kink_tolerance) for pre in preactivations(net, x))


def linear_combine(nets: Sequence[MlpNetwork], coeffs: Sequence[float]) -> MlpNetwork:
    """Network computing sum_j coeffs[j] * nets[j] by width concatenation."""
    if len(nets) == 0:
        raise ArchitectureMismatchError("Need at least one network to combine")
    if len(nets) != len(coeffs):
        raise ArchitectureMismatchError(
            f"{len(nets)} networks but {len(coeffs)} coefficients"
        )
    first = nets[0]
    for net in nets[1:]:
        if net.depth != first.depth:
            raise ArchitectureMismatchError(
                f"Depth mismatch: {net.depth} vs {first.depth}"
            )
        if net.activation.kind != first.activation.kind:
            raise ArchitectureMismatchError(
                f"Activation mismatch: {net.activation.kind} vs {first.activation.kind}"
            )
        if net.input_dim != first.input_dim:
            raise ArchitectureMismatchError(
                f"Input dimension mismatch: {net.input_dim} vs {first.input_dim}"
            )

    coeffs = [float(c) for c in coeffs]
    out_bias = math.fsum(c * float(net.biases[-1][0]) for c, net in zip(coeffs, nets))

    if first.depth == 1:
        rows = np.array([c * net.weights[0][0] for c, net in zip(coeffs, nets)])
        w = np.array([[math.fsum(col) for col in rows.T]])
        return MlpNetwork((w,), (np.array([out_bias]),), first.activation)

    weights = [np.vstack([net.weights[0] for net in nets])]
    biases = [np.concatenate([net.biases[0] for net in nets])]
    for layer in range(1, first.depth - 1):
        weights.append(block_diag(*[net.weights[layer] for net in nets]))
        biases.append(np.concatenate([net.biases[layer] for net in nets]))
    weights.append(np.hstack([c * net.weights[-1] for c, net in zip(coeffs, nets)]))
    biases.append(np.array([out_bias]))
    return MlpNetwork(tuple(weights), tuple(biases), first.activation)


def output_bound(net: MlpNetwork, bounds: Bounds) -> Tuple[float, float]:
    """Interval enclosure of the network output over an axis-aligned box."""
    lo = np.asarray(bounds[0], dtype=float).ravel()
    hi = np.asarray(bounds[1], dtype=float).ravel()
    for layer, (w, b) in enumerate(zip(net.weights, net.biases)):
        w_pos = np.maximum(w, 0.0)
        w_neg = np.minimum(w, 0.0)
        lo, hi = w_pos @ lo + w_neg @ hi + b, w_pos @ hi + w_neg @ lo + b
        if layer < net.depth - 1:
            # every supported activation is nondecreasing
            lo, hi = net.activation.value(lo), net.activation.value(hi)
    return float(lo[0]), float(hi[0])


def _relu_identity_layer(net: MlpNetwork, bounds: Bounds) -> MlpNetwork:
    # t = s(t + c) - s(-t - c) - c with the kink at t = -c, outside the output range on `bounds`
    lo, hi = output_bound(net, bounds)
    c = 2.0 ** math.ceil(math.log2(1.0 + 2.0 * max(abs(lo), abs(hi))))
    w_out = net.weights[-1]
    b_out = net.biases[-1]
    weights = net.weights[:-1] + (np.vstack([w_out, -w_out]), np.array([[1.0, -1.0]]))
    biases = net.biases[:-1] + (np.concatenate([b_out + c, -b_out - c]), np.array([-c]))
    return MlpNetwork(weights, biases, net.activation)


def _smooth_identity_step(activation: Activation, bound: float) -> Tuple[float, float]:
    """Pick the difference step for the smooth identity layer.

    Returns (step, estimated max error) for the four-unit layer
    (8[s(eps y) - s(-eps y)] - [s(2 eps y) - s(-2 eps y)]) / (12 eps s'(0)).
    """
    d = activation.derivatives(np.array([0.0]), 7)[:, 0]
    slope = abs(d[1])
    best = (0.0, math.inf)
    for k in range(4, 40):
        eps = 2.0 ** -k
        truncation = (eps**4 * bound**5 * abs(d[5])) / (30.0 * slope) + (
            eps**6 * bound**7 * abs(d[7])
        ) / (252.0 * slope)
        roundoff = 40.0 * np.finfo(float).eps * (abs(d[0]) + 2.0 * eps * bound * slope)
        roundoff /= 12.0 * eps * slope
        total = truncation + roundoff
        if total < best[1]:
            best = (eps, total)
    return best


def _smooth_identity_layer(net: MlpNetwork, bounds: Bounds) -> MlpNetwork:
    lo, hi = output_bound(net, bounds)
    bound = max(abs(lo), abs(hi), 1.0)
    eps, error = _smooth_identity_step(net.activation, bound)
    if error > SMOOTH_IDENTITY_TOLERANCE:
        raise DepthExtensionError(
            f"Smooth identity layer cannot reach {SMOOTH_IDENTITY_TOLERANCE:g} "
            f"for outputs bounded by {bound:.3g} (best estimate {error:.3g})"
        )
    logger.debug(f"Smooth identity layer: step {eps:g}, error estimate {error:.3g}")

    slope = float(net.activation.derivative(np.array([0.0]), 1)[0])
    scales = np.array([1.0, -1.0, 2.0, -2.0]) * eps
    w_out = net.weights[-1]
    b_out = net.biases[-1]
    hidden_w = scales[:, None] * w_out
    hidden_b = scales * b_out[0]
    out_w = np.array([[8.0, -8.0, -1.0, 1.0]]) / (12.0 * eps * slope)
    weights = net.weights[:-1] + (hidden_w, out_w)
    biases = net.biases[:-1] + (hidden_b, np.array([0.0]))
    return MlpNetwork(weights, biases, net.activation)


def extend_depth_identity(
    net: MlpNetwork, target_depth: int, bounds: Optional[Bounds] = None
) -> MlpNetwork:
    """Deepen `net` to `target_depth` without changing the function it computes.

    ReLU layers t -> s(t + c) - s(-t - c) - c are the identity on all of
    R, with c a power of two chosen so that no preactivation comes near the
    kink on `bounds` (default [-1, 1]^d); values agree up to roundoff of
    order c * 2^-53. Smooth strictly monotone activations use a
    symmetric-difference layer accurate to 1e-11 on `bounds`.
    """
    if target_depth < net.depth:
        raise DepthExtensionError(
            f"Target depth {target_depth} is below current depth {net.depth}"
        )
    if target_depth == net.depth:
        return net

    activation = net.activation
    if not activation.is_piecewise_affine and not activation.strictly_monotone:
        raise DepthExtensionError(
            f"{activation.kind} is not strictly monotone; cannot add identity layers"
        )
    if bounds is None:
        bounds = (-np.ones(net.input_dim), np.ones(net.input_dim))

    result = net
    while result.depth < target_depth:
        if activation.is_piecewise_affine:
            result = _relu_identity_layer(result, bounds)
        elif activation.kind == "identity":
            weights = result.weights + (np.array([[1.0]]),)
            biases = result.biases + (np.array([0.0]),)
            result = MlpNetwork(weights, biases, activation)
        else:
            result = _smooth_identity_layer(result, bounds)
    return result
