"""Dense tanh MLPs with analytic backprop, a diagonal Gaussian policy head and Adam.

Checkpoint layout: a numpy ``.npz`` archive (zip of ``.npy`` members). Each
member is one named float64 tensor and carries its own dtype/shape header,
so a save/load cycle is bit-exact. Names are ``<prefix>.W<i>`` / ``<prefix>.b<i>``
for layer i of a network, ``policy.log_std`` for the policy's log standard
deviations and ``lagrange.lambda`` for the dual variable.
"""
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .config import ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON, LOG_STD_INIT, LOG_STD_MAX, LOG_STD_MIN
from .errors import ContractViolation

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass
class MlpParams:
    """layers[i] = (W_i with shape (out, in), b_i with shape (out,)); tanh between layers"""
    layers: List[Tuple[np.ndarray, np.ndarray]]

    def __post_init__(self):
        for i in range(1, len(self.layers)):
            if self.layers[i][0].shape[1] != self.layers[i - 1][0].shape[0]:
                raise ContractViolation(f"layer {i} input width does not match layer {i - 1} output")

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    def arrays(self) -> List[np.ndarray]:
        """Flat [W0, b0, W1, b1, ...] list, the order the optimizers use"""
        out = []
        for w, b in self.layers:
            out.extend([w, b])
        return out

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray]) -> "MlpParams":
        return cls(layers=[(arrays[i], arrays[i + 1]) for i in range(0, len(arrays), 2)])

    def named(self, prefix: str) -> Dict[str, np.ndarray]:
        """Checkpoint keys: <prefix>.W<i> and <prefix>.b<i>"""
        named = {}
        for i, (w, b) in enumerate(self.layers):
            named[f"{prefix}.W{i}"] = w
            named[f"{prefix}.b{i}"] = b
        return named

    @classmethod
    def from_named(cls, tensors: Dict[str, np.ndarray], prefix: str) -> "MlpParams":
        layers = []
        i = 0
        while f"{prefix}.W{i}" in tensors:
            layers.append((tensors[f"{prefix}.W{i}"], tensors[f"{prefix}.b{i}"]))
            i += 1
        if not layers:
            raise ContractViolation(f"no tensors with prefix '{prefix}'")
        return cls(layers=layers)


@dataclass
class MlpCache:
    inputs: List[np.ndarray]  # input to each layer (x, then tanh activations)
    squeeze: bool


@dataclass
class MlpGradients:
    layers: List[Tuple[np.ndarray, np.ndarray]]
    x: np.ndarray

    def arrays(self) -> List[np.ndarray]:
        out = []
        for dw, db in self.layers:
            out.extend([dw, db])
        return out


def _orthogonal(rng: np.random.Generator, shape: Tuple[int, int], gain: float) -> np.ndarray:
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_mlp(sizes: Sequence[int], rng: np.random.Generator, output_gain: float = 1.0) -> MlpParams:
    """Orthogonal weights (gain sqrt(2) hidden, `output_gain` last layer), zero biases"""
    layers = []
    for i in range(len(sizes) - 1):
        gain = output_gain if i == len(sizes) - 2 else np.sqrt(2.0)
        layers.append((_orthogonal(rng, (sizes[i + 1], sizes[i]), gain), np.zeros(sizes[i + 1])))
    return MlpParams(layers=layers)


def mlp_forward(params: MlpParams, x) -> Tuple[np.ndarray, MlpCache]:
    """y = W_L tanh(... tanh(W_1 x + b_1) ...) + b_L for a vector or a batch of rows"""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    a = x[None, :] if squeeze else x
    if a.shape[1] != params.input_dim:
        raise ContractViolation(f"input width {a.shape[1]} does not match network input {params.input_dim}")
    inputs = []
    last = len(params.layers) - 1
    for i, (w, b) in enumerate(params.layers):
        inputs.append(a)
        z = a @ w.T + b
        a = z if i == last else np.tanh(z)
    y = a[0] if squeeze else a
    return y, MlpCache(inputs=inputs, squeeze=squeeze)


def mlp_backward(params: MlpParams, cache: MlpCache, grad_y) -> MlpGradients:
    """Reverse-mode gradients of sum(y * grad_y) w.r.t. every weight, bias and the input"""
    g = np.asarray(grad_y, dtype=float)
    if cache.squeeze:
        g = g[None, :]
    grads: List[Tuple[np.ndarray, np.ndarray]] = [None] * len(params.layers)
    for i in range(len(params.layers) - 1, -1, -1):
        w, _ = params.layers[i]
        a_in = cache.inputs[i]
        grads[i] = (g.T @ a_in, g.sum(axis=0))
        g = g @ w
        if i > 0:
            # a_in = tanh(z_{i-1}) so dtanh = 1 - a_in^2
            g = g * (1.0 - a_in * a_in)
    gx = g[0] if cache.squeeze else g
    return MlpGradients(layers=grads, x=gx)


# ===== Gaussian policy =====
@dataclass
class GaussianPolicy:
    """Diagonal Gaussian with MLP mean and state-independent log std"""
    mean_net: MlpParams
    log_std: np.ndarray

    @property
    def act_dim(self) -> int:
        return self.log_std.shape[0]

    def arrays(self) -> List[np.ndarray]:
        return self.mean_net.arrays() + [self.log_std]

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "GaussianPolicy":
        """Rebuild from arrays() output; log_std is clipped back into range"""
        return GaussianPolicy(
            mean_net=MlpParams.from_arrays(arrays[:-1]),
            log_std=np.clip(arrays[-1], LOG_STD_MIN, LOG_STD_MAX),
        )


def init_policy(obs_dim: int, act_dim: int, hidden_sizes: Sequence[int], rng: np.random.Generator,
                output_gain: float = 0.01, log_std_init: float = LOG_STD_INIT) -> GaussianPolicy:
    """Small output gain keeps the initial mean near zero"""
    mean_net = init_mlp([obs_dim, *hidden_sizes, act_dim], rng, output_gain=output_gain)
    return GaussianPolicy(mean_net=mean_net, log_std=np.full(act_dim, float(log_std_init)))


def log_prob_from_mean(mean: np.ndarray, log_std: np.ndarray, action: np.ndarray) -> np.ndarray:
    """Sum over action dims of the per-dimension normal log density"""
    z = (action - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - _HALF_LOG_2PI, axis=-1)


def gaussian_log_prob_grad(mean: np.ndarray, log_std: np.ndarray,
                           action: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(d log p / d mean, d log p / d log_std), element-wise per sample"""
    inv_var = np.exp(-2.0 * log_std)
    diff = action - mean
    return diff * inv_var, diff * diff * inv_var - 1.0


def gaussian_log_prob(policy: GaussianPolicy, obs, action):
    """Log density of `action` under the policy at `obs`; scalar for a single observation"""
    mean, _ = mlp_forward(policy.mean_net, obs)
    action = np.asarray(action, dtype=float)
    if action.shape != mean.shape:
        raise ContractViolation(f"action shape {action.shape} does not match policy output {mean.shape}")
    logp = log_prob_from_mean(mean, policy.log_std, action)
    return float(logp) if np.ndim(logp) == 0 else logp


def gaussian_sample(policy: GaussianPolicy, obs, rng: np.random.Generator) -> Tuple[np.ndarray, float]:
    """Draw an action and return it with its log probability"""
    mean, _ = mlp_forward(policy.mean_net, obs)
    action = mean + np.exp(policy.log_std) * rng.standard_normal(mean.shape)
    return action, gaussian_log_prob(policy, obs, action)


# ===== Adam =====
@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPSILON

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_update(state: AdamState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray],
                lr: float) -> List[np.ndarray]:
    """One bias-corrected Adam descent step; advances `state` and returns new parameter arrays"""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ContractViolation("params, grads and optimizer moments must line up")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    updated = []
    for k, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or p.shape != state.m[k].shape:
            raise ContractViolation(f"shape mismatch for parameter {k}: {p.shape} vs {g.shape}")
        state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[k] / bc1
        v_hat = state.v[k] / bc2
        updated.append(p - lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return updated


# ===== Checkpoints =====
def save_checkpoint(path: str, tensors: Dict[str, np.ndarray]) -> None:
    """Store named float64 arrays as an .npz archive"""
    with open(path, "wb") as f:
        np.savez(f, **{name: np.asarray(t, dtype=np.float64) for name, t in tensors.items()})


def load_checkpoint(path: str) -> Dict[str, np.ndarray]:
    """Inverse of save_checkpoint; pickled objects are refused"""
    with np.load(path, allow_pickle=False) as archive:
        return {name: archive[name].copy() for name in archive.files}


def flatten(arrays: Sequence[np.ndarray]) -> np.ndarray:
    """Concatenate raveled arrays into one vector"""
    return np.concatenate([np.ravel(a) for a in arrays])


def unflatten(vector: np.ndarray, like: Sequence[np.ndarray]) -> List[np.ndarray]:
    """Split `vector` back into arrays shaped like `like`"""
    out, offset = [], 0
    for a in like:
        out.append(vector[offset:offset + a.size].reshape(a.shape))
        offset += a.size
    return out
