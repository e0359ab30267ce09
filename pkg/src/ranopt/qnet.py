"""Dense Q-network with hand-derived gradients.

A two-layer perceptron (relu hidden layer, linear output head) maps the
58-entry KPI state vector to one action value per scheduler option.
Everything runs in float64 numpy so the analytic backward pass can be held
to finite-difference accuracy and checkpoints round-trip exactly through
text.

The output head is linear: action values are unbounded regression targets,
so a squashing head could not represent bootstrapped targets above 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STATE_DIM = 58
HIDDEN_DIM = 32
N_ACTIONS = 5

_CHECKPOINT_MAGIC = "QNET"
_CHECKPOINT_VERSION = "v1"


@dataclass
class QNetParams:
    """Weights of one network: w1 (hidden, in), b1 (hidden,), w2 (out, hidden), b2 (out,)."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.w1.shape[1], self.w1.shape[0], self.w2.shape[0]

    def copy(self) -> "QNetParams":
        return QNetParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())

    def ravel(self) -> np.ndarray:
        """Flatten all parameters into one vector (w1, b1, w2, b2 order)."""
        return np.concatenate([self.w1.ravel(), self.b1.ravel(), self.w2.ravel(), self.b2.ravel()])


# A gradient has the same layout as the parameters it differentiates.
Gradient = QNetParams


def init_params(seed: int = 0, state_dim: int = STATE_DIM, hidden_dim: int = HIDDEN_DIM,
                n_actions: int = N_ACTIONS) -> QNetParams:
    """Glorot-uniform weights, zero biases, deterministic per seed."""
    rng = np.random.default_rng(seed)
    lim1 = np.sqrt(6.0 / (state_dim + hidden_dim))
    lim2 = np.sqrt(6.0 / (hidden_dim + n_actions))
    return QNetParams(
        w1=rng.uniform(-lim1, lim1, size=(hidden_dim, state_dim)),
        b1=np.zeros(hidden_dim),
        w2=rng.uniform(-lim2, lim2, size=(n_actions, hidden_dim)),
        b2=np.zeros(n_actions),
    )


def _check_state(params: QNetParams, state: np.ndarray) -> np.ndarray:
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (params.w1.shape[1],):
        raise ValueError(f"state has shape {state.shape}, expected ({params.w1.shape[1]},)")
    return state


def forward(params: QNetParams, state: np.ndarray) -> np.ndarray:
    """Action values for one state: w2 @ relu(w1 @ s + b1) + b2."""
    state = _check_state(params, state)
    hidden = np.maximum(params.w1 @ state + params.b1, 0.0)
    return params.w2 @ hidden + params.b2


def forward_batch(params: QNetParams, states: np.ndarray) -> np.ndarray:
    """Action values for a (batch, state_dim) matrix of states."""
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or states.shape[1] != params.w1.shape[1]:
        raise ValueError(f"states have shape {states.shape}, expected (n, {params.w1.shape[1]})")
    hidden = np.maximum(states @ params.w1.T + params.b1, 0.0)
    return hidden @ params.w2.T + params.b2


def backward(params: QNetParams, state: np.ndarray, action_index: int) -> Gradient:
    """Gradient of Q(state, action) with respect to every parameter.

    Only the selected output contributes; rows of w2/b2 for other actions are
    zero. The caller scales the result by the TD error and the learning rate.
    """
    state = _check_state(params, state)
    n_actions = params.w2.shape[0]
    if not 0 <= action_index < n_actions:
        raise ValueError(f"action_index {action_index} outside [0, {n_actions})")
    z1 = params.w1 @ state + params.b1
    hidden = np.maximum(z1, 0.0)
    gw2 = np.zeros_like(params.w2)
    gb2 = np.zeros_like(params.b2)
    gw2[action_index] = hidden
    gb2[action_index] = 1.0
    dz1 = params.w2[action_index] * (z1 > 0.0)
    return QNetParams(w1=np.outer(dz1, state), b1=dz1, w2=gw2, b2=gb2)


def apply_gradient(params: QNetParams, grad: Gradient, scale: float) -> QNetParams:
    """params + scale * grad, elementwise; scale carries learning rate and TD error."""
    for name in ("w1", "b1", "w2", "b2"):
        if getattr(params, name).shape != getattr(grad, name).shape:
            raise ValueError(f"gradient {name} shape {getattr(grad, name).shape} does not match "
                             f"params {getattr(params, name).shape}")
    return QNetParams(
        w1=params.w1 + scale * grad.w1,
        b1=params.b1 + scale * grad.b1,
        w2=params.w2 + scale * grad.w2,
        b2=params.b2 + scale * grad.b2,
    )


def soft_update(target: QNetParams, online: QNetParams, tau: float) -> QNetParams:
    """Polyak step: (1 - tau) * target + tau * online."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    return QNetParams(
        w1=(1.0 - tau) * target.w1 + tau * online.w1,
        b1=(1.0 - tau) * target.b1 + tau * online.b1,
        w2=(1.0 - tau) * target.w2 + tau * online.w2,
        b2=(1.0 - tau) * target.b2 + tau * online.b2,
    )


def save_params(params: QNetParams, path) -> None:
    """Text checkpoint: header line, then w1 rows, b1, w2 rows, b2.

    Values are written with repr so float64 reloads bit-exactly.
    """
    state_dim, hidden_dim, n_actions = params.dims
    lines = [f"{_CHECKPOINT_MAGIC} {_CHECKPOINT_VERSION} {state_dim} {hidden_dim} {n_actions}"]
    for row in params.w1:
        lines.append(" ".join(repr(float(v)) for v in row))
    lines.append(" ".join(repr(float(v)) for v in params.b1))
    for row in params.w2:
        lines.append(" ".join(repr(float(v)) for v in row))
    lines.append(" ".join(repr(float(v)) for v in params.b2))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_params(path) -> QNetParams:
    """Load a checkpoint written by save_params."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty checkpoint")
    head = lines[0].split()
    if len(head) != 5 or head[0] != _CHECKPOINT_MAGIC or head[1] != _CHECKPOINT_VERSION:
        raise ValueError(f"{path}: bad checkpoint header {lines[0]!r}")
    state_dim, hidden_dim, n_actions = (int(v) for v in head[2:])
    expected = 1 + hidden_dim + 1 + n_actions + 1
    if len(lines) != expected:
        raise ValueError(f"{path}: expected {expected} lines, found {len(lines)}")

    def parse(line: str, n: int) -> np.ndarray:
        vals = np.array([float(v) for v in line.split()], dtype=np.float64)
        if vals.size != n:
            raise ValueError(f"{path}: expected {n} values per line, found {vals.size}")
        return vals

    w1 = np.stack([parse(lines[1 + i], state_dim) for i in range(hidden_dim)])
    b1 = parse(lines[1 + hidden_dim], hidden_dim)
    w2 = np.stack([parse(lines[2 + hidden_dim + i], hidden_dim) for i in range(n_actions)])
    b2 = parse(lines[2 + hidden_dim + n_actions], n_actions)
    return QNetParams(w1=w1, b1=b1, w2=w2, b2=b2)
