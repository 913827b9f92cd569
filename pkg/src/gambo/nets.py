"""Minimal dense MLP engine.

Provides deterministic initialization, reverse-mode gradients with respect to
both parameters and inputs, Adam/SGD updates, weight clipping for Lipschitz
control, and a self-verifying checkpoint format. Hidden layers use a leaky
rectifier; the output layer is affine with a single unit.
"""

from __future__ import annotations

import dataclasses

import numpy as np

DEFAULT_SLOPE = 0.01

CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    """Raised when a model checkpoint fails to load or verify."""


@dataclasses.dataclass
class Mlp:
    """Dense feed-forward net with scalar output.

    ``weights[l]`` has shape (layer_dims[l+1], layer_dims[l]); ``biases[l]``
    has shape (layer_dims[l+1],). ``slope`` is the leaky-rectifier slope on
    hidden layers.
    """

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    slope: float = DEFAULT_SLOPE

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1

    def copy(self) -> "Mlp":
        return Mlp(
            layer_dims=list(self.layer_dims),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            slope=self.slope,
        )


def _validate_dims(layer_dims: list[int]) -> None:
    if len(layer_dims) < 2:
        raise ValueError(f"need at least input and output dims, got {layer_dims}")
    for d in layer_dims:
        if int(d) != d or d < 1:
            raise ValueError(f"layer dims must be positive integers, got {layer_dims}")
    if layer_dims[-1] != 1:
        raise ValueError(f"output dim must be 1, got {layer_dims[-1]}")


def mlp_init(layer_dims: list[int], seed: int, slope: float = DEFAULT_SLOPE) -> Mlp:
    """Build an Mlp with fan-in-scaled uniform weights and zero biases.

    Deterministic: the same (layer_dims, seed) always yields bit-identical
    parameters.
    """
    _validate_dims(list(layer_dims))
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        limit = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(list(layer_dims), weights, biases, slope)


def _as_batch(net: Mlp, Z: np.ndarray) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[None, :]
    if Z.ndim != 2 or Z.shape[1] != net.input_dim:
        raise ValueError(f"expected inputs of dim {net.input_dim}, got shape {Z.shape}")
    return Z


def mlp_batched_forward(net: Mlp, Z: np.ndarray) -> np.ndarray:
    """Scalar outputs for a batch of inputs, shape (B,)."""
    Z = _as_batch(net, Z)
    h = Z
    last = net.n_layers - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w.T + b
        if l < last:
            h = np.where(h > 0, h, net.slope * h)
    return h[:, 0]


def mlp_forward(net: Mlp, z: np.ndarray) -> float:
    """Scalar output for a single input vector."""
    return float(mlp_batched_forward(net, np.asarray(z, dtype=np.float64))[0])


def mlp_batched_forward_and_input_grads(net: Mlp, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Outputs and exact input gradients for a batch; shapes (B,) and (B, d).

    At a rectifier kink (pre-activation exactly 0) the negative-branch slope
    is used.
    """
    Z = _as_batch(net, Z)
    vals, _, masks = _forward_with_masks(net, Z)
    g = np.repeat(net.weights[-1], Z.shape[0], axis=0)  # (B, in_last)
    for l in range(net.n_layers - 2, -1, -1):
        g = (g * masks[l]) @ net.weights[l]
    return vals, g


def _forward_with_masks(net: Mlp, Z: np.ndarray):
    """Forward pass returning outputs, activations, and hidden slope masks."""
    acts = [Z]
    masks = []
    h = Z
    last = net.n_layers - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        pre = h @ w.T + b
        if l < last:
            masks.append(np.where(pre > 0, 1.0, net.slope))
            h = np.where(pre > 0, pre, net.slope * pre)
        else:
            h = pre
        acts.append(h)
    return h[:, 0], acts, masks


def mlp_input_grad(net: Mlp, z: np.ndarray) -> np.ndarray:
    """Exact gradient of the scalar output with respect to the input."""
    _, g = mlp_batched_forward_and_input_grads(net, np.asarray(z, dtype=np.float64))
    return g[0]


def mlp_param_grads(
    net: Mlp, Z: np.ndarray, dout: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Gradients of sum_i dout[i] * f(Z[i]) with respect to weights and biases."""
    Z = _as_batch(net, Z)
    _, acts, masks = _forward_with_masks(net, Z)
    dws: list[np.ndarray] = [None] * net.n_layers  # type: ignore[list-item]
    dbs: list[np.ndarray] = [None] * net.n_layers  # type: ignore[list-item]
    delta = np.asarray(dout, dtype=np.float64)[:, None]  # (B, 1)
    for l in range(net.n_layers - 1, -1, -1):
        dws[l] = delta.T @ acts[l]
        dbs[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ net.weights[l]) * masks[l - 1]
    return dws, dbs


@dataclasses.dataclass
class AdamState:
    """Adam accumulator state matching an Mlp's parameter shapes."""

    step: int
    m_w: list[np.ndarray]
    v_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_b: list[np.ndarray]
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(net: Mlp, lr: float = 3e-4, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    zeros = lambda arrs: [np.zeros_like(a) for a in arrs]
    return AdamState(0, zeros(net.weights), zeros(net.weights),
                     zeros(net.biases), zeros(net.biases), lr, beta1, beta2, eps)


def adam_step(net: Mlp, dws: list[np.ndarray], dbs: list[np.ndarray], st: AdamState) -> None:
    """One in-place Adam descent step on the given gradients."""
    st.step += 1
    c1 = 1.0 - st.beta1 ** st.step
    c2 = 1.0 - st.beta2 ** st.step
    for l in range(net.n_layers):
        for p, g, m, v in ((net.weights[l], dws[l], st.m_w[l], st.v_w[l]),
                           (net.biases[l], dbs[l], st.m_b[l], st.v_b[l])):
            m *= st.beta1
            m += (1 - st.beta1) * g
            v *= st.beta2
            v += (1 - st.beta2) * g * g
            p -= st.lr * (m / c1) / (np.sqrt(v / c2) + st.eps)


def sgd_ascent_step(net: Mlp, dws: list[np.ndarray], dbs: list[np.ndarray], lr: float) -> None:
    """One in-place plain-SGD ascent step (no momentum)."""
    for l in range(net.n_layers):
        net.weights[l] += lr * dws[l]
        net.biases[l] += lr * dbs[l]


def train_surrogate(
    data,
    hidden: tuple[int, ...] = (256, 256),
    lr: float = 3e-4,
    epochs: int = 100,
    batch_size: int = 128,
    seed: int = 0,
) -> tuple[Mlp, float]:
    """Fit a regressor to (data.designs, data.std_scores) by Adam on MSE.

    ``data`` is an OfflineDataset whose targets are consumed in standardized
    units. Returns the net and the final full-data training MSE.
    """
    X = np.asarray(data.designs, dtype=np.float64)
    y = np.asarray(data.std_scores, dtype=np.float64)
    n = X.shape[0]
    if n == 0:
        raise ValueError("cannot train a surrogate on an empty dataset")
    net = mlp_init([X.shape[1], *hidden, 1], seed=seed)
    if epochs == 0:
        resid = mlp_batched_forward(net, X) - y
        return net, float(np.mean(resid**2))
    st = adam_init(net, lr=lr)
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        perm = rng.permutation(n)
        for lo in range(0, n, batch_size):
            idx = perm[lo : lo + batch_size]
            Xb, yb = X[idx], y[idx]
            resid = mlp_batched_forward(net, Xb) - yb
            dout = 2.0 * resid / len(idx)
            dws, dbs = mlp_param_grads(net, Xb, dout)
            adam_step(net, dws, dbs, st)
    resid = mlp_batched_forward(net, X) - y
    return net, float(np.mean(resid**2))


def clip_weights(net: Mlp, bound: float) -> Mlp:
    """Return a copy with every weight and bias clamped to [-bound, bound]."""
    if bound <= 0:
        raise ValueError(f"clip bound must be positive, got {bound}")
    out = net.copy()
    clip_weights_(out, bound)
    return out


def clip_weights_(net: Mlp, bound: float) -> None:
    """In-place clamp of every parameter to [-bound, bound]."""
    for w in net.weights:
        np.clip(w, -bound, bound, out=w)
    for b in net.biases:
        np.clip(b, -bound, bound, out=b)


def lipschitz_upper_bound(net: Mlp) -> float:
    """Certified Lipschitz constant: product of layer spectral norms.

    Hidden activations contribute max(1, slope) = 1 for slopes below one, so
    the product of weight-matrix spectral norms bounds the network.
    """
    k = 1.0
    act = max(1.0, net.slope)
    for l, w in enumerate(net.weights):
        k *= float(np.linalg.norm(w, 2))
        if l < net.n_layers - 1:
            k *= act
    return k


def _probe_input(d: int) -> np.ndarray:
    return np.linspace(-1.0, 1.0, d)


def save_mlp(net: Mlp, path) -> None:
    """Write a versioned binary checkpoint; round-trips bit-exactly."""
    arrays = {
        "version": np.array([CHECKPOINT_VERSION], dtype=np.int64),
        "layer_dims": np.asarray(net.layer_dims, dtype=np.int64),
        "slope": np.array([net.slope]),
        "probe_out": np.array([mlp_forward(net, _probe_input(net.input_dim))]),
    }
    for l in range(net.n_layers):
        arrays[f"w{l}"] = net.weights[l]
        arrays[f"b{l}"] = net.biases[l]
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_mlp(path) -> Mlp:
    """Load a checkpoint, verifying version and the stored forward probe."""
    try:
        with np.load(path) as blob:
            version = int(blob["version"][0])
            if version != CHECKPOINT_VERSION:
                raise CheckpointError(f"unsupported checkpoint version {version}")
            dims = [int(d) for d in blob["layer_dims"]]
            slope = float(blob["slope"][0])
            weights = [blob[f"w{l}"].astype(np.float64) for l in range(len(dims) - 1)]
            biases = [blob[f"b{l}"].astype(np.float64) for l in range(len(dims) - 1)]
            probe_out = float(blob["probe_out"][0])
    except CheckpointError:
        raise
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    net = Mlp(dims, weights, biases, slope)
    got = mlp_forward(net, _probe_input(net.input_dim))
    if got != probe_out:
        raise CheckpointError(
            f"checkpoint {path} failed verification: probe {got!r} != stored {probe_out!r}"
        )
    return net


def scale_output(net: Mlp, factor: float) -> Mlp:
    """Copy of the net with its output layer rescaled by ``factor``.

    Used to renormalize a trained weight-clipped critic to unit certified
    Lipschitz constant, so dual values read directly in distance units.
    """
    out = net.copy()
    out.weights[-1] *= factor
    out.biases[-1] *= factor
    return out
