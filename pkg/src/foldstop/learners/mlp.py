"""A small fully connected classifier trained with Adam.

The network exposes ``loss_and_grad`` so the analytic gradients can be checked
against finite differences.  Training follows the usual conventions: softmax
cross-entropy plus an L2 penalty on the weights, mini-batches reshuffled each
epoch, optional early stopping on a held-out slice of the training rows, and
an abort (FitFailure) as soon as the loss stops being finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class FitFailure(RuntimeError):
    """Training diverged or could not proceed; the trial should be marked failed."""


@dataclass(frozen=True)
class MlpParams:
    activation: str               # "relu" | "tanh"
    alpha: float                  # L2 penalty
    early_stopping: bool
    hidden_layer_depth: int
    learning_rate_schedule: str   # "constant" | "invscaling" | "adaptive"
    learning_rate_init: float
    momentum: float               # SGD-only knob; inert under the Adam solver
    num_nodes_per_layer: int
    max_epochs: int = 512
    patience: int = 32
    validation_fraction: float = 0.1
    tol: float = 1e-3
    batch_size: int | str = "auto"
    shuffle: bool = True
    beta_1: float = 0.9
    beta_2: float = 0.999
    epsilon: float = 1e-8


class MlpNet:
    """Weights plus the forward/backward passes; see ``train_mlp`` for fitting."""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray],
                 activation: str, alpha: float):
        self.weights = weights
        self.biases = biases
        self.activation = activation
        self.alpha = alpha

    @classmethod
    def init(cls, layer_sizes: list[int], activation: str, alpha: float,
             rng: np.random.Generator) -> "MlpNet":
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(weights, biases, activation, alpha)

    def _act(self, z: np.ndarray) -> np.ndarray:
        return np.maximum(z, 0.0) if self.activation == "relu" else np.tanh(z)

    def _act_grad(self, a: np.ndarray) -> np.ndarray:
        return (a > 0.0).astype(np.float64) if self.activation == "relu" else 1.0 - a * a

    def _forward(self, X: np.ndarray) -> list[np.ndarray]:
        layers = [X]
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = layers[-1] @ W + b
            layers.append(self._act(z) if i < len(self.weights) - 1 else z)
        return layers

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        logits = self._forward(X)[-1]
        logits = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        return e / e.sum(axis=1, keepdims=True)

    def loss(self, X: np.ndarray, y: np.ndarray) -> float:
        probs = self.predict_proba(X)
        ce = -np.log(np.clip(probs[np.arange(len(y)), y], 1e-12, None)).mean()
        penalty = 0.5 * self.alpha * sum(float((W * W).sum()) for W in self.weights) / len(y)
        return float(ce + penalty)

    def loss_and_grad(
        self, X: np.ndarray, y: np.ndarray
    ) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
        n = len(y)
        layers = self._forward(X)
        logits = layers[-1]
        logits = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        probs = e / e.sum(axis=1, keepdims=True)

        ce = -np.log(np.clip(probs[np.arange(n), y], 1e-12, None)).mean()
        penalty = 0.5 * self.alpha * sum(float((W * W).sum()) for W in self.weights) / n
        loss = float(ce + penalty)

        delta = probs.copy()
        delta[np.arange(n), y] -= 1.0
        delta /= n
        grads_w: list[np.ndarray] = [None] * len(self.weights)
        grads_b: list[np.ndarray] = [None] * len(self.biases)
        for i in reversed(range(len(self.weights))):
            grads_w[i] = layers[i].T @ delta + self.alpha * self.weights[i] / n
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * self._act_grad(layers[i])
        return loss, grads_w, grads_b

    def copy_params(self) -> tuple[list[np.ndarray], list[np.ndarray]]:
        return [W.copy() for W in self.weights], [b.copy() for b in self.biases]

    def set_params(self, params: tuple[list[np.ndarray], list[np.ndarray]]) -> None:
        self.weights = [W.copy() for W in params[0]]
        self.biases = [b.copy() for b in params[1]]


class _Adam:
    def __init__(self, shapes_w, shapes_b, beta_1, beta_2, epsilon):
        self.m_w = [np.zeros(s) for s in shapes_w]
        self.v_w = [np.zeros(s) for s in shapes_w]
        self.m_b = [np.zeros(s) for s in shapes_b]
        self.v_b = [np.zeros(s) for s in shapes_b]
        self.beta_1, self.beta_2, self.epsilon = beta_1, beta_2, epsilon
        self.t = 0

    def step(self, net: MlpNet, grads_w, grads_b, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta_1, self.beta_2
        correction = np.sqrt(1.0 - b2 ** self.t) / (1.0 - b1 ** self.t)
        for i in range(len(net.weights)):
            self.m_w[i] = b1 * self.m_w[i] + (1 - b1) * grads_w[i]
            self.v_w[i] = b2 * self.v_w[i] + (1 - b2) * grads_w[i] ** 2
            net.weights[i] -= lr * correction * self.m_w[i] / (np.sqrt(self.v_w[i]) + self.epsilon)
            self.m_b[i] = b1 * self.m_b[i] + (1 - b1) * grads_b[i]
            self.v_b[i] = b2 * self.v_b[i] + (1 - b2) * grads_b[i] ** 2
            net.biases[i] -= lr * correction * self.m_b[i] / (np.sqrt(self.v_b[i]) + self.epsilon)


def train_mlp(
    params: MlpParams, X: np.ndarray, y: np.ndarray, n_classes: int, seed: int
) -> MlpNet:
    """Fit the network; deterministic given the seed."""
    rng = np.random.default_rng(seed)
    n, d = X.shape
    sizes = [d] + [params.num_nodes_per_layer] * params.hidden_layer_depth + [n_classes]
    net = MlpNet.init(sizes, params.activation, params.alpha, rng)
    adam = _Adam([w.shape for w in net.weights], [b.shape for b in net.biases],
                 params.beta_1, params.beta_2, params.epsilon)

    train_idx = np.arange(n)
    val_idx = np.empty(0, dtype=np.intp)
    if params.early_stopping and n >= 10:
        perm = rng.permutation(n)
        n_val = max(1, int(round(params.validation_fraction * n)))
        val_idx, train_idx = perm[:n_val], perm[n_val:]
    X_tr, y_tr = X[train_idx], y[train_idx]
    X_val, y_val = X[val_idx], y[val_idx]

    batch = min(200, len(X_tr)) if params.batch_size == "auto" else int(params.batch_size)
    lr = params.learning_rate_init
    best_metric = -np.inf
    best_params = net.copy_params()
    epochs_no_improve = 0
    loss_no_improve = 0
    prev_loss = np.inf

    for epoch in range(1, params.max_epochs + 1):
        if params.learning_rate_schedule == "invscaling":
            lr = params.learning_rate_init / np.sqrt(epoch)
        order = rng.permutation(len(X_tr)) if params.shuffle else np.arange(len(X_tr))
        epoch_losses = []
        for start in range(0, len(X_tr), batch):
            sel = order[start:start + batch]
            loss, gw, gb = net.loss_and_grad(X_tr[sel], y_tr[sel])
            if not np.isfinite(loss):
                raise FitFailure(f"non-finite training loss at epoch {epoch}")
            adam.step(net, gw, gb, lr)
            epoch_losses.append(loss)
        epoch_loss = float(np.mean(epoch_losses))
        if not np.isfinite(epoch_loss):
            raise FitFailure(f"non-finite training loss at epoch {epoch}")

        if epoch_loss > prev_loss - params.tol:
            loss_no_improve += 1
        else:
            loss_no_improve = 0
        prev_loss = min(prev_loss, epoch_loss)
        if params.learning_rate_schedule == "adaptive" and loss_no_improve >= 2:
            lr /= 5.0
            loss_no_improve = 0

        if len(val_idx):
            acc = float((net.predict_proba(X_val).argmax(axis=1) == y_val).mean())
            if acc > best_metric + params.tol:
                best_metric = acc
                best_params = net.copy_params()
                epochs_no_improve = 0
            else:
                epochs_no_improve += 1
            if epochs_no_improve >= params.patience:
                break
        else:
            metric = -epoch_loss
            if metric > best_metric + params.tol:
                best_metric = metric
                epochs_no_improve = 0
            else:
                epochs_no_improve += 1
            if epochs_no_improve >= params.patience:
                break

    if len(val_idx):
        net.set_params(best_params)
    if not all(np.isfinite(W).all() for W in net.weights):
        raise FitFailure("non-finite weights after training")
    return net
