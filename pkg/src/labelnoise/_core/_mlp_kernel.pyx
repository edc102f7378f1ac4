# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled minibatch Adam loop for the d -> h1 -> h2 -> c tanh MLP.

Same contract as ``_mlp_py.train_epochs``. Parameters and Adam moments are
updated in place.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, tanh, pow, isfinite

cnp.import_array()


cdef void _adam(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
                double lr_t, double b1, double b2, double eps_hat) noexcept nogil:
    cdef Py_ssize_t i
    cdef double gi
    for i in range(p.shape[0]):
        gi = g[i]
        m[i] = b1 * m[i] + (1.0 - b1) * gi
        v[i] = b2 * v[i] + (1.0 - b2) * gi * gi
        p[i] -= lr_t * m[i] / (sqrt(v[i]) + eps_hat)


def train_epochs(list params, list m_state, list v_state,
                 const double[:, ::1] X, const long long[::1] y,
                 const long long[:, ::1] perms, Py_ssize_t batch_size,
                 double lr, double beta1, double beta2, double adam_eps,
                 long long step):
    """Run ``perms.shape[0]`` epochs; returns ``(step, last_batch_loss)``.

    Raises ``FloatingPointError`` when a batch loss is not finite.
    """
    cdef double[:, ::1] W1 = params[0]
    cdef double[::1] b1 = params[1]
    cdef double[:, ::1] W2 = params[2]
    cdef double[::1] b2 = params[3]
    cdef double[:, ::1] W3 = params[4]
    cdef double[::1] b3 = params[5]
    cdef Py_ssize_t d = W1.shape[0], H1 = W1.shape[1], H2 = W2.shape[1], C = W3.shape[1]
    cdef Py_ssize_t n = X.shape[0], n_epochs = perms.shape[0]

    flat_p = [np.asarray(a).reshape(-1) for a in params]
    flat_m = [np.asarray(a).reshape(-1) for a in m_state]
    flat_v = [np.asarray(a).reshape(-1) for a in v_state]
    grads = [np.zeros_like(a) for a in flat_p]
    cdef double[::1] gW1 = grads[0]
    cdef double[::1] gb1 = grads[1]
    cdef double[::1] gW2 = grads[2]
    cdef double[::1] gb2 = grads[3]
    cdef double[::1] gW3 = grads[4]
    cdef double[::1] gb3 = grads[5]

    cdef double[:, ::1] h1 = np.empty((batch_size, H1))
    cdef double[:, ::1] h2 = np.empty((batch_size, H2))
    cdef double[:, ::1] dz = np.empty((batch_size, C))
    cdef double[:, ::1] da2 = np.empty((batch_size, H2))
    cdef double[:, ::1] da1 = np.empty((batch_size, H1))

    cdef Py_ssize_t e, start, B, r, i, j, k, idx
    cdef double acc, top, lse, loss = 0.0, inv_b, lr_t, eps_hat
    cdef int q

    for e in range(n_epochs):
        for start in range(0, n, batch_size):
            B = min(batch_size, n - start)
            inv_b = 1.0 / B
            for q in range(6):
                grads[q].fill(0.0)
            loss = 0.0
            with nogil:
                # forward
                for r in range(B):
                    idx = perms[e, start + r]
                    for j in range(H1):
                        acc = b1[j]
                        for i in range(d):
                            acc = acc + X[idx, i] * W1[i, j]
                        h1[r, j] = tanh(acc)
                    for j in range(H2):
                        acc = b2[j]
                        for i in range(H1):
                            acc = acc + h1[r, i] * W2[i, j]
                        h2[r, j] = tanh(acc)
                    top = -1e308
                    for k in range(C):
                        acc = b3[k]
                        for i in range(H2):
                            acc = acc + h2[r, i] * W3[i, k]
                        dz[r, k] = acc
                        if acc > top:
                            top = acc
                    lse = 0.0
                    for k in range(C):
                        lse = lse + exp(dz[r, k] - top)
                    lse = top + log(lse)
                    loss = loss + (lse - dz[r, y[idx]])
                    for k in range(C):
                        dz[r, k] = exp(dz[r, k] - lse) * inv_b
                    dz[r, y[idx]] -= inv_b
                loss = loss * inv_b
            if not isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {e}, batch offset {start}")
            with nogil:
                # backward
                for r in range(B):
                    for k in range(C):
                        gb3[k] += dz[r, k]
                        for i in range(H2):
                            gW3[i * C + k] += h2[r, i] * dz[r, k]
                    for i in range(H2):
                        acc = 0.0
                        for k in range(C):
                            acc = acc + dz[r, k] * W3[i, k]
                        da2[r, i] = acc * (1.0 - h2[r, i] * h2[r, i])
                    for j in range(H2):
                        gb2[j] += da2[r, j]
                        for i in range(H1):
                            gW2[i * H2 + j] += h1[r, i] * da2[r, j]
                    for i in range(H1):
                        acc = 0.0
                        for j in range(H2):
                            acc = acc + da2[r, j] * W2[i, j]
                        da1[r, i] = acc * (1.0 - h1[r, i] * h1[r, i])
                    idx = perms[e, start + r]
                    for j in range(H1):
                        gb1[j] += da1[r, j]
                        for i in range(d):
                            gW1[i * H1 + j] += X[idx, i] * da1[r, j]
            step += 1
            lr_t = lr * sqrt(1.0 - pow(beta2, step)) / (1.0 - pow(beta1, step))
            eps_hat = adam_eps * sqrt(1.0 - pow(beta2, step))
            for q in range(6):
                _adam(flat_p[q], grads[q], flat_m[q], flat_v[q], lr_t, beta1, beta2, eps_hat)
    return step, loss
