"""Per-subject optical-axis -> visual-axis calibration.

Two mappers:

* :class:`PolyMapper` - second-order polynomial on (azimuth, elevation).
* :class:`DenseGazeNet` - five fully connected layers predicting a residual
  that is added to the input direction; the last layer starts at zero so the
  untrained network is the identity.

Both can be saved to and loaded from a JSON record (see :func:`save_mapper`).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import DegenerateOutput, DivergedTraining, SingularBasis, Underdetermined
from .gaze import GazeFrameSpec, from_angles_rad, to_angles_rad

FORMAT_TAG = "glintgaze-mapper"
FORMAT_VERSION = 1
WIDTHS = (3, 64, 96, 96, 64, 3)


@dataclass(frozen=True)
class CalibrationSet:
    """Paired unit directions in the device frame, shape ``(n, 3)`` each."""

    optical: np.ndarray
    visual: np.ndarray

    def __post_init__(self):
        opt = np.atleast_2d(np.asarray(self.optical, dtype=float))
        vis = np.atleast_2d(np.asarray(self.visual, dtype=float))
        if opt.shape != vis.shape or opt.shape[1:] != (3,):
            raise ValueError(f"calibration arrays must both be (n, 3), got {opt.shape} and {vis.shape}")
        object.__setattr__(self, "optical", opt)
        object.__setattr__(self, "visual", vis)

    def __len__(self) -> int:
        return len(self.optical)


# -- polynomial ---------------------------------------------------------------


def poly_basis(h: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Design matrix with columns ``[1, h, v, h^2, h*v, v^2]``."""
    h = np.asarray(h, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.column_stack([np.ones_like(h), h, v, h * h, h * v, v * v])


@dataclass(frozen=True)
class PolyMapper:
    """``coefficients[k]`` maps optical angles (radians) to visual angle ``k``
    (0 = azimuth, 1 = elevation)."""

    coefficients: np.ndarray
    frame: Optional[GazeFrameSpec] = None

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float)
        if coef.shape != (2, 6):
            raise ValueError(f"expected 2x6 coefficients, got {coef.shape}")
        object.__setattr__(self, "coefficients", coef)

    @classmethod
    def identity(cls, frame: Optional[GazeFrameSpec] = None) -> "PolyMapper":
        coef = np.zeros((2, 6))
        coef[0, 1] = 1.0
        coef[1, 2] = 1.0
        return cls(coef, frame)

    def __call__(self, optical: np.ndarray) -> np.ndarray:
        return apply_polynomial(self, optical)


def fit_polynomial(cal: CalibrationSet, frame: GazeFrameSpec) -> PolyMapper:
    """Least-squares quadratic fit, one channel per angle.

    Solved through the normal equations with column equilibration.

    Raises:
        Underdetermined: fewer than 6 pairs.
        SingularBasis: rank-deficient design matrix.
    """
    if len(cal) < 6:
        raise Underdetermined(f"polynomial fit needs 6 pairs, got {len(cal)}")
    src = np.array([to_angles_rad(d, frame) for d in cal.optical])
    dst = np.array([to_angles_rad(d, frame) for d in cal.visual])
    a = poly_basis(src[:, 0], src[:, 1])
    if np.linalg.matrix_rank(a) < 6:
        raise SingularBasis("calibration directions do not span a quadratic basis")
    scale = np.linalg.norm(a, axis=0)
    a_s = a / scale
    normal = a_s.T @ a_s
    coef = np.linalg.solve(normal, a_s.T @ dst).T / scale
    return PolyMapper(coef, frame)


def apply_polynomial(m: PolyMapper, optical: np.ndarray, frame: Optional[GazeFrameSpec] = None) -> np.ndarray:
    frame = frame or m.frame
    if frame is None:
        raise ValueError("polynomial mapper needs a gaze frame")
    h, v = to_angles_rad(optical, frame)
    row = poly_basis(np.array([h]), np.array([v]))[0]
    out_h, out_v = m.coefficients @ row
    return from_angles_rad(out_h, out_v, frame)


# -- dense network ------------------------------------------------------------


@dataclass
class DenseGazeNet:
    """Residual MLP on unit directions.

    The first layer sees ``(x - input_center) * input_scale``; gaze directions
    cluster around the device forward axis, and removing that common part
    keeps gradient descent well conditioned. The residual is added to the raw
    input.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    residual: bool = True
    input_center: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    input_scale: float = 1.0

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def copy(self) -> "DenseGazeNet":
        return DenseGazeNet(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.residual,
            self.input_center.copy(),
            self.input_scale,
        )

    def __call__(self, optical: np.ndarray) -> np.ndarray:
        return net_forward(self, optical)


def net_init(seed: int = 0, widths: tuple[int, ...] = WIDTHS, zero_last: bool = True) -> DenseGazeNet:
    """He-uniform hidden layers, zero biases; a zero last layer makes the
    residual network start as the identity."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    n_layers = len(widths) - 1
    for k in range(n_layers):
        fan_in, fan_out = widths[k], widths[k + 1]
        if k == n_layers - 1 and zero_last:
            w = np.zeros((fan_out, fan_in))
        else:
            bound = math.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return DenseGazeNet(weights, biases, residual=True)


def _forward(net: DenseGazeNet, x: np.ndarray):
    """Pre-normalization output for a batch plus the activations backprop needs."""
    h = (x - net.input_center) * net.input_scale
    acts = [h]
    pre = []
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.T + b
        pre.append(z)
        h = z if k == last else np.maximum(z, 0.0)
        acts.append(h)
    out = x + h if net.residual else h
    return out, acts, pre


def net_forward(net: DenseGazeNet, optical: np.ndarray) -> np.ndarray:
    """Unit visual-axis direction(s) for unit optical-axis input(s), ``(3,)`` or ``(n, 3)``."""
    x = np.asarray(optical, dtype=float)
    single = x.ndim == 1
    out, _, _ = _forward(net, np.atleast_2d(x))
    norms = np.linalg.norm(out, axis=1, keepdims=True)
    if np.any(norms < 1e-9):
        raise DegenerateOutput("network output collapsed to zero length")
    # rows already unit up to rounding are left alone, so an identity
    # network returns unit inputs bit for bit
    norms = np.where(np.abs(norms - 1.0) <= 4 * np.finfo(float).eps, 1.0, norms)
    out = out / norms
    return out[0] if single else out


def net_loss(net: DenseGazeNet, cal: CalibrationSet, weight_decay: float = 0.0) -> float:
    out, _, _ = _forward(net, cal.optical)
    data = float(np.mean(np.sum((out - cal.visual) ** 2, axis=1)))
    decay = 0.5 * weight_decay * sum(float(np.sum(w * w)) for w in net.weights)
    return data + decay


def net_gradients(net: DenseGazeNet, cal: CalibrationSet, weight_decay: float = 0.0):
    """Loss and backpropagated gradients ``(loss, dW list, db list)``.

    The loss is the mean squared error of the pre-normalized output plus
    ``weight_decay / 2 * sum(W**2)``.
    """
    x, y = cal.optical, cal.visual
    n = len(x)
    out, acts, pre = _forward(net, x)
    diff = out - y
    loss = float(np.mean(np.sum(diff * diff, axis=1)))
    loss += 0.5 * weight_decay * sum(float(np.sum(w * w)) for w in net.weights)

    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.biases)
    delta = 2.0 * diff / n
    for k in range(len(net.weights) - 1, -1, -1):
        if k != len(net.weights) - 1:
            delta = delta * (pre[k] > 0.0)
        grads_w[k] = delta.T @ acts[k] + weight_decay * net.weights[k]
        grads_b[k] = delta.sum(axis=0)
        delta = delta @ net.weights[k]
    return loss, grads_w, grads_b


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3000
    learning_rate: float = 0.02
    momentum: float = 0.9
    weight_decay: float = 1e-4


def net_train(
    net: DenseGazeNet, cal: CalibrationSet, hyper: TrainConfig = TrainConfig()
) -> tuple[DenseGazeNet, list[float]]:
    """Full-batch gradient descent with momentum on a private copy of ``net``.

    A step that raises the loss is undone, the velocity is reset and the step
    size halved (it then grows back by 2x per accepted step, up to the
    configured rate), so the recorded loss never increases.

    Returns the trained network and the loss of every accepted state, one per
    epoch.

    Raises:
        DivergedTraining: loss grows past ten times its initial value.
    """
    if len(cal) < 1:
        raise ValueError("training needs at least one calibration pair")
    net = net.copy()
    vel_w = [np.zeros_like(w) for w in net.weights]
    vel_b = [np.zeros_like(b) for b in net.biases]
    curve: list[float] = []
    initial = None
    saved = None
    lr = hyper.learning_rate
    for _ in range(hyper.epochs):
        loss, gw, gb = net_gradients(net, cal, hyper.weight_decay)
        if initial is None:
            initial = loss
        if not math.isfinite(loss) or (loss > 10.0 * initial and loss > 1e-12):
            raise DivergedTraining(f"loss {loss:.3g} exceeds ten times the initial {initial:.3g}")
        if saved is not None and loss > saved[0]:
            loss, gw, gb, weights, biases = saved
            net.weights = [w.copy() for w in weights]
            net.biases = [b.copy() for b in biases]
            vel_w = [np.zeros_like(w) for w in net.weights]
            vel_b = [np.zeros_like(b) for b in net.biases]
            lr *= 0.5
        else:
            lr = min(hyper.learning_rate, 2.0 * lr)
        curve.append(loss)
        saved = (loss, gw, gb, [w.copy() for w in net.weights], [b.copy() for b in net.biases])
        for k in range(len(net.weights)):
            vel_w[k] = hyper.momentum * vel_w[k] - lr * gw[k]
            vel_b[k] = hyper.momentum * vel_b[k] - lr * gb[k]
            net.weights[k] += vel_w[k]
            net.biases[k] += vel_b[k]
    if saved is not None:
        loss, _, _, weights, biases = saved
        final, _, _ = net_gradients(net, cal, hyper.weight_decay)
        if final > loss:
            net.weights, net.biases = weights, biases
    return net, curve


# -- serialization ------------------------------------------------------------

Mapper = Union[PolyMapper, DenseGazeNet]


def mapper_to_dict(m: Mapper) -> dict:
    if isinstance(m, PolyMapper):
        record = {
            "format": FORMAT_TAG,
            "version": FORMAT_VERSION,
            "scheme": "poly",
            "coefficients": m.coefficients.tolist(),
            "frame": None,
        }
        if m.frame is not None:
            record["frame"] = {
                "origin": m.frame.origin.tolist(),
                "reference_dir": m.frame.reference_dir.tolist(),
            }
        return record
    return {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "scheme": "dense",
        "residual": m.residual,
        "widths": [m.weights[0].shape[1]] + [w.shape[0] for w in m.weights],
        "input_center": m.input_center.tolist(),
        "input_scale": m.input_scale,
        "weights": [w.tolist() for w in m.weights],
        "biases": [b.tolist() for b in m.biases],
    }


def mapper_from_dict(record: dict) -> Mapper:
    if record.get("format") != FORMAT_TAG:
        raise ValueError("not a glintgaze mapper record")
    if record.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported mapper version {record.get('version')}")
    scheme = record["scheme"]
    if scheme == "poly":
        frame = None
        if record.get("frame"):
            frame = GazeFrameSpec(np.array(record["frame"]["origin"]), np.array(record["frame"]["reference_dir"]))
            # GazeFrameSpec renormalizes; keep the stored bits
            object.__setattr__(frame, "reference_dir", np.array(record["frame"]["reference_dir"]))
        return PolyMapper(np.array(record["coefficients"]), frame)
    if scheme == "dense":
        return DenseGazeNet(
            [np.array(w, dtype=float) for w in record["weights"]],
            [np.array(b, dtype=float) for b in record["biases"]],
            bool(record["residual"]),
            np.array(record["input_center"], dtype=float),
            float(record["input_scale"]),
        )
    raise ValueError(f"unknown mapper scheme {scheme!r}")


def save_mapper(m: Mapper, path: Union[str, Path]) -> None:
    """Write a mapper as JSON. Floats are written with shortest round-trip
    repr, so :func:`load_mapper` restores them bit for bit."""
    Path(path).write_text(json.dumps(mapper_to_dict(m), indent=1) + "\n")


def load_mapper(path: Union[str, Path]) -> Mapper:
    return mapper_from_dict(json.loads(Path(path).read_text()))


def apply_mapper(m: Optional[Mapper], optical: np.ndarray) -> np.ndarray:
    """Visual axis for ``optical``; ``None`` means no calibration (identity)."""
    if m is None:
        return np.asarray(optical, dtype=float)
    if isinstance(m, PolyMapper):
        return apply_polynomial(m, optical)
    return net_forward(m, optical)
