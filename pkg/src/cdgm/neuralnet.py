"""Minimal feed-forward network engine for the coefficient network.

Architecture: a first stack of Linear-ReLU-Dropout layers consumes the
covariate, its output is concatenated with a copy of the raw input, a
second stack follows, and a final linear head emits one coordinate per
ordered node pair. Forward, backward, and the optimizer are implemented
directly on numpy arrays; there is no external autodiff.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NonFiniteGradient, ShapeMismatch, StaleCache
from .numerics import SeededRng

PARAMS_MAGIC = "CDGM-PARAMS-1"


@dataclass(frozen=True)
class MlpSpec:
    """Shape description of the coefficient network."""

    input_dim: int
    block1: tuple[int, ...]
    block2: tuple[int, ...]
    output_dim: int
    dropout: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise ShapeMismatch(f"dropout must be in [0, 1), got {self.dropout}")
        if any(h <= 0 for h in self.block1) or any(h <= 0 for h in self.block2):
            raise ShapeMismatch("hidden sizes must be positive")
        object.__setattr__(self, "block1", tuple(int(h) for h in self.block1))
        object.__setattr__(self, "block2", tuple(int(h) for h in self.block2))

    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) of every linear layer, head last."""
        dims = []
        width = self.input_dim
        for h in self.block1:
            dims.append((width, h))
            width = h
        if self.block1:
            width += self.input_dim  # concatenated copy of the input
        for h in self.block2:
            dims.append((width, h))
            width = h
        dims.append((width, self.output_dim))
        return dims

    @property
    def n_hidden_layers(self) -> int:
        return len(self.block1) + len(self.block2)

    @property
    def concat_layer(self) -> int | None:
        """Index of the first layer fed by the concatenated input, if any."""
        return len(self.block1) if self.block1 else None

    @property
    def n_params(self) -> int:
        return sum(i * o + o for i, o in self.layer_dims())


class ParamSet:
    """Per-layer weights and biases stored in one flat float64 vector.

    Layer ``i`` with dims (fan_in, fan_out) occupies a row-major
    (fan_in, fan_out) weight block followed by a fan_out bias block.
    """

    def __init__(self, spec: MlpSpec, flat: np.ndarray | None = None):
        self.spec = spec
        self.dims = spec.layer_dims()
        size = spec.n_params
        if flat is None:
            flat = np.zeros(size)
        flat = np.ascontiguousarray(flat, dtype=np.float64)
        if flat.shape != (size,):
            raise ShapeMismatch(f"expected flat length {size}, got {flat.shape}")
        self.flat = flat

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Zero-copy (weight, bias) views into the flat vector."""
        out = []
        offset = 0
        for fan_in, fan_out in self.dims:
            w = self.flat[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
            offset += fan_in * fan_out
            b = self.flat[offset:offset + fan_out]
            offset += fan_out
            out.append((w, b))
        return out

    def copy(self) -> "ParamSet":
        return ParamSet(self.spec, self.flat.copy())


def init_params(spec: MlpSpec, rng: SeededRng) -> ParamSet:
    """Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases."""
    params = ParamSet(spec)
    for (w, b), (fan_in, fan_out) in zip(params.layers(), params.dims):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w[...] = rng.generator.uniform(-bound, bound, (fan_in, fan_out))
        b[...] = 0.0
    return params


def forward(spec: MlpSpec, params: ParamSet, Z, training: bool = False,
            rng: SeededRng | None = None):
    """Batched forward pass; returns (outputs, cache for backward).

    With ``training=False`` dropout is disabled and the pass is a pure
    deterministic function of (spec, params, Z). Dropout is inverted:
    surviving activations are scaled by 1/(1-rate) at train time.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[1] != spec.input_dim:
        raise ShapeMismatch(f"expected (n, {spec.input_dim}) covariates, got {Z.shape}")
    use_dropout = training and spec.dropout > 0.0
    if use_dropout and rng is None:
        raise ShapeMismatch("training-mode dropout requires an rng")

    layers = params.layers()
    n_layers = len(layers)
    inputs, relu_masks, drop_masks = [], [], []
    h = Z
    for li, (w, b) in enumerate(layers):
        if li == spec.concat_layer:
            h = np.concatenate([h, Z], axis=1)
        inputs.append(h)
        pre = h @ w + b
        if li == n_layers - 1:  # linear head
            h = pre
            relu_masks.append(None)
            drop_masks.append(None)
        else:
            mask = pre > 0.0
            h = pre * mask
            relu_masks.append(mask)
            if use_dropout:
                keep = rng.generator.random(h.shape) >= spec.dropout
                h = h * keep / (1.0 - spec.dropout)
                drop_masks.append(keep)
            else:
                drop_masks.append(None)
    cache = {
        "spec": spec,
        "dims": params.dims,
        "inputs": inputs,
        "relu_masks": relu_masks,
        "drop_masks": drop_masks,
        "weights": [w for w, _ in layers],
        "out_shape": h.shape,
    }
    return h, cache


def backward(cache, grad_outputs) -> np.ndarray:
    """Gradient of a scalar loss w.r.t. every parameter, flat layout.

    ``grad_outputs`` is the loss gradient w.r.t. the forward outputs and
    must match the cached output shape.
    """
    g = np.asarray(grad_outputs, dtype=np.float64)
    if g.shape != cache["out_shape"]:
        raise StaleCache(f"gradient shape {g.shape} does not match cached {cache['out_shape']}")
    spec = cache["spec"]
    dims = cache["dims"]
    grads = np.zeros(sum(i * o + o for i, o in dims))
    gparams = ParamSet(spec, grads)  # reuse the layout machinery

    for li in range(len(dims) - 1, -1, -1):
        h_in = cache["inputs"][li]
        if cache["relu_masks"][li] is not None:
            keep = cache["drop_masks"][li]
            if keep is not None:
                g = g * keep / (1.0 - spec.dropout)
            g = g * cache["relu_masks"][li]
        gw, gb = gparams.layers()[li]
        gw[...] = h_in.T @ g
        gb[...] = g.sum(axis=0)
        if li > 0:
            g = g @ cache["weights"][li].T
            if li == spec.concat_layer:
                g = g[:, : dims[li][0] - spec.input_dim]
    return gparams.flat


@dataclass
class OptimState:
    """Adaptive-moment optimizer state plus step-decay schedule constants."""

    base_lr: float
    n_params: int
    clip_norm: float = 1.0
    lr_step: int = 20
    lr_decay: float = 0.25
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.n_params)
        if self.v is None:
            self.v = np.zeros(self.n_params)


def scheduled_lr(state: OptimState, epoch: int) -> float:
    """Step decay: base * decay^floor(epoch / step)."""
    if epoch < 0:
        raise ShapeMismatch("epoch must be >= 0")
    return state.base_lr * state.lr_decay ** (epoch // state.lr_step)


def optimizer_step(params: ParamSet, gradients: np.ndarray, state: OptimState,
                   lr: float | None = None) -> tuple[ParamSet, OptimState]:
    """One adaptive-moment update with bias correction.

    The global gradient norm is clipped to ``state.clip_norm`` before the
    update. Updates happen in place; params and state are returned for
    call-site clarity.
    """
    g = np.asarray(gradients, dtype=np.float64)
    if g.shape != params.flat.shape:
        raise ShapeMismatch("gradient/parameter shape mismatch")
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradient("gradients contain NaN or inf")
    norm = float(np.linalg.norm(g))
    if np.isfinite(state.clip_norm) and norm > state.clip_norm and norm > 0.0:
        g = g * (state.clip_norm / norm)
    state.step_count += 1
    t = state.step_count
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = state.m / (1.0 - state.beta1 ** t)
    v_hat = state.v / (1.0 - state.beta2 ** t)
    step_lr = state.base_lr if lr is None else lr
    params.flat -= step_lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


def save_params(params: ParamSet, path) -> None:
    """Plain-text shape header followed by the flat little-endian stream."""
    dims = " ".join(f"{i}x{o}" for i, o in params.dims)
    header = f"{PARAMS_MAGIC}\nlayers {dims}\n\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(params.flat.astype("<f8").tobytes())


def load_params(path, spec: MlpSpec) -> ParamSet:
    raw = Path(path).read_bytes()
    head_end = raw.index(b"\n\n") + 2
    lines = raw[:head_end].decode("ascii").splitlines()
    if not lines or lines[0] != PARAMS_MAGIC:
        raise ShapeMismatch(f"bad magic in {path}")
    stored = [tuple(int(v) for v in tok.split("x")) for tok in lines[1].split()[1:]]
    if stored != spec.layer_dims():
        raise ShapeMismatch(f"stored shapes {stored} do not match spec {spec.layer_dims()}")
    flat = np.frombuffer(raw[head_end:], dtype="<f8").astype(np.float64)
    return ParamSet(spec, flat)
