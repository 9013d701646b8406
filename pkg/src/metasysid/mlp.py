"""Minimal differentiable multi-layer perceptron on flat float64 parameter vectors.

Forward evaluation plus exact reverse-mode gradients with respect to both the
parameters and the inputs. The input gradient is the load-bearing part: context
identification optimizes a slice of the network input, so plain weight-only
backprop would not be enough.

Everything here is pure: parameters live in immutable-by-convention flat
vectors, and no function mutates its arguments.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("silu", "identity")

_PARAMS_MAGIC = b"MSIDPRM1"
_PARAMS_VERSION = 1


@dataclass(frozen=True)
class MLPSpec:
    """Architecture description: layer widths and per-hidden-layer activation.

    layer_sizes runs input-first, output-last (at least two entries). The
    output layer is always affine; `activation` applies to every hidden layer
    and may be a single name or one name per hidden layer.
    """

    layer_sizes: tuple[int, ...]
    activation: tuple[str, ...] = ("silu",)

    def __init__(self, layer_sizes, activation="silu"):
        sizes = tuple(int(s) for s in layer_sizes)
        if len(sizes) < 2:
            raise ValueError(f"need at least 2 layer sizes, got {sizes}")
        if any(s < 1 for s in sizes):
            raise ValueError(f"layer sizes must be >= 1, got {sizes}")
        n_hidden = len(sizes) - 2
        if isinstance(activation, str):
            acts = (activation,) * n_hidden
        else:
            acts = tuple(activation)
            if len(acts) != n_hidden:
                raise ValueError(
                    f"{len(acts)} activations for {n_hidden} hidden layers"
                )
        for a in acts:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}, expected {ACTIVATIONS}")
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "activation", acts)

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    def layer_shapes(self) -> list[tuple[int, int, int]]:
        """Per-layer (rows, cols, bias_len) = (out, in, out)."""
        sizes = self.layer_sizes
        return [(sizes[i + 1], sizes[i], sizes[i + 1]) for i in range(self.n_layers)]

    @property
    def n_params(self) -> int:
        return sum(r * c + b for r, c, b in self.layer_shapes())


@dataclass
class ParameterSet:
    """Flat float64 parameter vector with per-layer shape metadata."""

    values: np.ndarray
    shapes: list[tuple[int, int, int]]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError(f"values must be 1-D, got shape {self.values.shape}")
        expected = sum(r * c + b for r, c, b in self.shapes)
        if self.values.size != expected:
            raise ValueError(
                f"parameter vector length {self.values.size} != "
                f"{expected} implied by shapes {self.shapes}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("parameter vector contains non-finite entries")

    def copy(self) -> "ParameterSet":
        return ParameterSet(self.values.copy(), list(self.shapes))

    def same_shape(self, other: "ParameterSet") -> bool:
        return self.shapes == other.shapes


@dataclass
class Gradients:
    """Gradient blocks from one backward pass."""

    wrt_params: np.ndarray
    wrt_inputs: np.ndarray


def _layer_views(values: np.ndarray, shapes) -> list[tuple[np.ndarray, np.ndarray]]:
    """Zero-copy (W, b) views into a flat vector, W shaped (out, in)."""
    views = []
    off = 0
    for rows, cols, blen in shapes:
        w = values[off : off + rows * cols].reshape(rows, cols)
        off += rows * cols
        b = values[off : off + blen]
        off += blen
        views.append((w, b))
    return views


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # sigmoid(x) = 0.5*tanh(x/2) + 0.5 exactly; one transcendental pass,
    # saturates cleanly at both tails, no overflow anywhere.
    t = x * 0.5
    np.tanh(t, out=t)
    t *= 0.5
    t += 0.5
    return t


def silu(x):
    """SiLU activation x * sigmoid(x).

    Evaluated through exp(-|x|): x / (1 + e^(-x)) on the non-negative side
    and the e^x form on the negative side, so the far tails neither overflow
    nor lose the ~x*e^x asymptotics.
    """
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 0
    z = np.exp(-np.abs(arr))
    out = np.where(arr >= 0, arr, arr * z) / (1.0 + z)
    return float(out) if scalar else out


def _silu_grad_cached(z: np.ndarray, s: np.ndarray) -> np.ndarray:
    # d/dx [x*s(x)] = s * (1 + x*(1 - s)), with s = sigmoid(z) precomputed.
    t = 1.0 - s
    t *= z
    t += 1.0
    t *= s
    return t


def init_params(spec: MLPSpec, seed: int) -> ParameterSet:
    """Glorot-uniform weights, zero biases, deterministic in the seed."""
    rng = np.random.default_rng(seed)
    shapes = spec.layer_shapes()
    chunks = []
    for rows, cols, blen in shapes:
        a = np.sqrt(6.0 / (rows + cols))
        chunks.append(rng.uniform(-a, a, size=rows * cols))
        chunks.append(np.zeros(blen))
    return ParameterSet(np.concatenate(chunks), shapes)


def zeros_like_params(spec: MLPSpec) -> ParameterSet:
    return ParameterSet(np.zeros(spec.n_params), spec.layer_shapes())


def _check_params(spec: MLPSpec, params: ParameterSet) -> None:
    if params.shapes != spec.layer_shapes():
        raise ValueError(
            f"parameter shapes {params.shapes} do not match spec "
            f"{spec.layer_shapes()}"
        )


def forward_batch(spec: MLPSpec, params: ParameterSet, x: np.ndarray):
    """Forward pass over a (M, in_dim) batch.

    Returns (outputs (M, out_dim), cache) where cache feeds backward_batch.
    Cache entries are (layer_input, preactivation, sigmoid(preactivation));
    the sigmoid slot is None for identity layers.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.in_dim:
        raise ValueError(
            f"input shape {x.shape} incompatible with network input dim "
            f"{spec.in_dim}"
        )
    _check_params(spec, params)
    layers = _layer_views(params.values, params.shapes)
    acts = spec.activation + ("identity",)
    h = x
    cache = []
    for (w, b), act in zip(layers, acts):
        z = h @ w.T
        z += b
        if act == "silu":
            s = _sigmoid(z)
            cache.append((h, z, s))
            h = z * s
        else:
            cache.append((h, z, None))
            h = z
    return h, cache


def backward_batch(
    spec: MLPSpec,
    params: ParameterSet,
    cache,
    upstream: np.ndarray,
    *,
    inputs_only: bool = False,
):
    """Reverse pass for a cached forward_batch call.

    upstream has shape (M, out_dim); returns (wrt_params flat or None,
    wrt_inputs (M, in_dim)). Parameter gradients are summed over the batch.
    With inputs_only=True the weight/bias gradients are skipped, which is the
    hot path for context identification.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    m = cache[0][0].shape[0]
    if upstream.shape != (m, spec.out_dim):
        raise ValueError(
            f"upstream shape {upstream.shape} != expected {(m, spec.out_dim)}"
        )
    layers = _layer_views(params.values, params.shapes)
    grad_flat = None if inputs_only else np.zeros_like(params.values)
    grad_views = None if inputs_only else _layer_views(grad_flat, params.shapes)
    delta = upstream
    for li in range(spec.n_layers - 1, -1, -1):
        h_in, _z, _s = cache[li]
        w, _b = layers[li]
        if not inputs_only:
            gw, gb = grad_views[li]
            gw += delta.T @ h_in
            gb += delta.sum(axis=0)
        delta = delta @ w
        if li > 0:
            _h, z_prev, s_prev = cache[li - 1]
            if s_prev is not None:
                delta *= _silu_grad_cached(z_prev, s_prev)
    return grad_flat, delta


def backward_preinput(
    spec: MLPSpec, params: ParameterSet, cache, upstream: np.ndarray
) -> np.ndarray:
    """Reverse pass down to the first layer's preactivation.

    Returns d(upstream . output)/d(z_0) with shape (M, layer_sizes[1]).
    Callers needing gradients only for a column slice of the input can fold
    any row reduction before the final multiply by the first weight block,
    which is cheaper than a full input-gradient pass.
    """
    layers = _layer_views(params.values, params.shapes)
    delta = upstream
    for li in range(spec.n_layers - 1, 0, -1):
        w, _b = layers[li]
        delta = delta @ w
        _h, z_prev, s_prev = cache[li - 1]
        if s_prev is not None:
            delta *= _silu_grad_cached(z_prev, s_prev)
    return delta


def first_layer_weight(params: ParameterSet) -> np.ndarray:
    """View of the first layer's weight matrix, shaped (out, in)."""
    rows, cols, _ = params.shapes[0]
    return params.values[: rows * cols].reshape(rows, cols)


def forward(spec: MLPSpec, params: ParameterSet, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D input vector, got shape {x.shape}")
    out, _ = forward_batch(spec, params, x[None, :])
    return out[0]


def backward(
    spec: MLPSpec, params: ParameterSet, x: np.ndarray, upstream: np.ndarray
) -> Gradients:
    """Exact gradients of upstream . forward(x) wrt parameters and inputs."""
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D input vector, got shape {x.shape}")
    if upstream.shape != (spec.out_dim,):
        raise ValueError(
            f"upstream shape {upstream.shape} != output dim ({spec.out_dim},)"
        )
    _, cache = forward_batch(spec, params, x[None, :])
    gp, gx = backward_batch(spec, params, cache, upstream[None, :])
    return Gradients(wrt_params=gp, wrt_inputs=gx[0])


def interpolate_params(p1: ParameterSet, p2: ParameterSet, lam: float) -> ParameterSet:
    """Element-wise convex combination (1-lam)*p1 + lam*p2."""
    if not p1.same_shape(p2):
        raise ValueError(f"shape mismatch: {p1.shapes} vs {p2.shapes}")
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    if lam == 0.0:
        return p1.copy()
    if lam == 1.0:
        return p2.copy()
    return ParameterSet((1.0 - lam) * p1.values + lam * p2.values, list(p1.shapes))


def save_params(params: ParameterSet, path) -> None:
    """Write the versioned binary .params format (little-endian f64 payload)."""
    with open(path, "wb") as f:
        f.write(_PARAMS_MAGIC)
        f.write(struct.pack("<II", _PARAMS_VERSION, len(params.shapes)))
        for rows, cols, blen in params.shapes:
            f.write(struct.pack("<III", rows, cols, blen))
        f.write(params.values.astype("<f8").tobytes())


def load_params(path) -> ParameterSet:
    with open(path, "rb") as f:
        magic = f.read(len(_PARAMS_MAGIC))
        if magic != _PARAMS_MAGIC:
            raise ValueError(f"{path}: not a .params file (bad magic {magic!r})")
        version, n_layers = struct.unpack("<II", f.read(8))
        if version != _PARAMS_VERSION:
            raise ValueError(f"{path}: unsupported .params version {version}")
        shapes = [struct.unpack("<III", f.read(12)) for _ in range(n_layers)]
        shapes = [(int(r), int(c), int(b)) for r, c, b in shapes]
        n = sum(r * c + b for r, c, b in shapes)
        payload = f.read(8 * n)
        if len(payload) != 8 * n:
            raise ValueError(f"{path}: truncated payload")
        values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return ParameterSet(values, shapes)


# ---------------------------------------------------------------------------
# Per-task parameter stacks. Used by the MAML-style baseline, where every task
# carries its own adapted copy of the weights. Weights are a (B, P) stack of
# flat vectors; inputs are (B, M, in_dim).
# ---------------------------------------------------------------------------


def _stack_views(stack: np.ndarray, shapes):
    views = []
    off = 0
    b_tasks = stack.shape[0]
    for rows, cols, blen in shapes:
        w = stack[:, off : off + rows * cols].reshape(b_tasks, rows, cols)
        off += rows * cols
        bias = stack[:, off : off + blen]
        off += blen
        views.append((w, bias))
    return views


def forward_stack(spec: MLPSpec, stack: np.ndarray, x: np.ndarray):
    """Forward with per-task parameters: stack (B, P), x (B, M, in_dim)."""
    if stack.ndim != 2 or stack.shape[1] != spec.n_params:
        raise ValueError(f"stack shape {stack.shape} != (B, {spec.n_params})")
    if x.ndim != 3 or x.shape[0] != stack.shape[0] or x.shape[2] != spec.in_dim:
        raise ValueError(f"input shape {x.shape} incompatible with stack")
    layers = _stack_views(stack, spec.layer_shapes())
    acts = spec.activation + ("identity",)
    h = x
    cache = []
    for (w, bias), act in zip(layers, acts):
        z = np.matmul(h, np.swapaxes(w, 1, 2))
        z += bias[:, None, :]
        if act == "silu":
            s = _sigmoid(z)
            cache.append((h, z, s))
            h = z * s
        else:
            cache.append((h, z, None))
            h = z
    return h, cache


def backward_stack(spec: MLPSpec, stack: np.ndarray, cache, upstream: np.ndarray):
    """Reverse pass for forward_stack.

    Returns (grads (B, P), wrt_inputs (B, M, in_dim)); parameter gradients are
    summed over each task's M rows.
    """
    layers = _stack_views(stack, spec.layer_shapes())
    grads = np.empty_like(stack)
    grad_views = _stack_views(grads, spec.layer_shapes())
    delta = upstream
    for li in range(spec.n_layers - 1, -1, -1):
        h_in, _z, _s = cache[li]
        w, _bias = layers[li]
        gw, gb = grad_views[li]
        gw[...] = np.matmul(np.swapaxes(delta, 1, 2), h_in)
        gb[...] = delta.sum(axis=1)
        delta = np.matmul(delta, w)
        if li > 0:
            _h, z_prev, s_prev = cache[li - 1]
            if s_prev is not None:
                delta *= _silu_grad_cached(z_prev, s_prev)
    return grads, delta
