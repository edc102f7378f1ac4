"""Numpy implementation of the MLP kernels; the reference the compiled kernel must match."""

import numpy as np


def forward(params, X):
    """Hidden activations and output logits for a batch."""
    W1, b1, W2, b2, W3, b3 = params
    h1 = np.tanh(X @ W1 + b1)
    h2 = np.tanh(h1 @ W2 + b2)
    return h1, h2, h2 @ W3 + b3


def loss_and_grad(params, X, y):
    """Mean cross-entropy and its gradient, one array per parameter."""
    W1, b1, W2, b2, W3, b3 = params
    h1, h2, z = forward(params, X)
    top = z.max(axis=1, keepdims=True)
    lse = top[:, 0] + np.log(np.exp(z - top).sum(axis=1))
    rows = np.arange(X.shape[0])
    loss = float(np.mean(lse - z[rows, y]))
    dz = np.exp(z - lse[:, None])
    dz[rows, y] -= 1.0
    dz /= X.shape[0]
    da2 = (dz @ W3.T) * (1.0 - h2 * h2)
    da1 = (da2 @ W2.T) * (1.0 - h1 * h1)
    grads = [X.T @ da1, da1.sum(axis=0), h1.T @ da2, da2.sum(axis=0), h2.T @ dz, dz.sum(axis=0)]
    return loss, grads


def train_epochs(params, m_state, v_state, X, y, perms, batch_size, lr, beta1, beta2, adam_eps, step):
    """Run one epoch per row of ``perms``; updates arrays in place, returns ``(step, last_loss)``."""
    n = X.shape[0]
    loss = 0.0
    for perm in perms:
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            loss, grads = loss_and_grad(params, X[idx], y[idx])
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at batch offset {start}")
            step += 1
            lr_t = lr * np.sqrt(1.0 - beta2**step) / (1.0 - beta1**step)
            eps_hat = adam_eps * np.sqrt(1.0 - beta2**step)
            for p, g, m, v in zip(params, grads, m_state, v_state):
                m *= beta1
                m += (1.0 - beta1) * g
                v *= beta2
                v += (1.0 - beta2) * g * g
                p -= lr_t * m / (np.sqrt(v) + eps_hat)
    return step, loss
