# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled episode kernel: plastic tanh layer plus at most one fixed layer.

Same arithmetic, in the same order, as the numpy reference in ``_pyengine``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport tanh, exp, log, fabs

cnp.import_array()

cdef enum:
    UPPER_NONE = 0
    UPPER_TANH = 1
    UPPER_SOFTMAX = 2
    LOSS_L1 = 0
    LOSS_MSE = 1
    LOSS_CE = 2


cdef inline double _sign(double v) nogil:
    if v > 0.0:
        return 1.0
    if v < 0.0:
        return -1.0
    return 0.0


def run_episode(const double[:, ::1] w, const double[:, ::1] alpha, const double[::1] b,
                double gamma, const double[:, ::1] uw, const double[::1] ub, int upper_kind,
                const double[:, ::1] inputs, const double[:, ::1] targets,
                const long[::1] classes, const unsigned char[::1] mask,
                int loss_kind, bint collect_grads):
    """Returns (loss, outputs, hidden, gw, galpha, gb, guw, gub, n_clamped)."""
    cdef Py_ssize_t n_out = w.shape[0], n_in = w.shape[1]
    cdef Py_ssize_t n_steps = inputs.shape[0]
    cdef Py_ssize_t n_p = 2 * n_in + 1
    cdef Py_ssize_t n_top = uw.shape[0] if upper_kind != UPPER_NONE else n_out
    cdef Py_ssize_t t, j, k, l, p, i
    cdef double acc, dt, s, m, value, total = 0.0, decay = 1.0 - gamma
    cdef int n_clamped = 0

    hebb_a = np.zeros((n_out, n_in))
    dhebb_a = np.zeros((n_out, n_in, n_p))
    dy_a = np.zeros((n_out, n_p))
    outputs_a = np.zeros((n_steps, n_top))
    hidden_a = np.zeros((n_steps, n_out))
    gw_a = np.zeros((n_out, n_in))
    galpha_a = np.zeros((n_out, n_in))
    gb_a = np.zeros(n_out)
    guw_a = np.zeros((uw.shape[0], uw.shape[1]))
    gub_a = np.zeros(ub.shape[0])
    z_a = np.zeros(n_top)
    gtop_a = np.zeros(n_top)
    ghid_a = np.zeros(n_out)

    cdef double[:, ::1] hebb = hebb_a
    cdef double[:, :, ::1] dhebb = dhebb_a
    cdef double[:, ::1] dy = dy_a
    cdef double[:, ::1] outputs = outputs_a
    cdef double[:, ::1] hidden = hidden_a
    cdef double[:, ::1] gw = gw_a
    cdef double[:, ::1] galpha = galpha_a
    cdef double[::1] gb = gb_a
    cdef double[:, ::1] guw = guw_a
    cdef double[::1] gub = gub_a
    cdef double[::1] z = z_a
    cdef double[::1] gtop = gtop_a
    cdef double[::1] ghid = ghid_a
    cdef double[::1] y
    cdef double[::1] top
    cdef const double[::1] x

    with nogil:
        for t in range(n_steps):
            x = inputs[t]
            y = hidden[t]
            # plastic response from the pre-update trace
            for j in range(n_out):
                acc = b[j]
                for k in range(n_in):
                    acc = acc + (w[j, k] + alpha[j, k] * hebb[j, k]) * x[k]
                y[j] = tanh(acc)

            if collect_grads:
                for j in range(n_out):
                    dt = 1.0 - y[j] * y[j]
                    for p in range(n_p):
                        acc = 0.0
                        for l in range(n_in):
                            acc = acc + alpha[j, l] * x[l] * dhebb[j, l, p]
                        if p < n_in:
                            acc = acc + x[p]
                        elif p < 2 * n_in:
                            acc = acc + x[p - n_in] * hebb[j, p - n_in]
                        else:
                            acc = acc + 1.0
                        dy[j, p] = dt * acc
                    for l in range(n_in):
                        for p in range(n_p):
                            dhebb[j, l, p] = decay * dhebb[j, l, p] + gamma * x[l] * dy[j, p]

            for j in range(n_out):
                for k in range(n_in):
                    hebb[j, k] = decay * hebb[j, k] + gamma * x[k] * y[j]

            top = outputs[t]
            if upper_kind == UPPER_NONE:
                for i in range(n_top):
                    top[i] = y[i]
            else:
                for i in range(n_top):
                    acc = ub[i]
                    for j in range(n_out):
                        acc = acc + uw[i, j] * y[j]
                    z[i] = acc
                if upper_kind == UPPER_TANH:
                    for i in range(n_top):
                        top[i] = tanh(z[i])
                else:
                    m = z[0]
                    for i in range(1, n_top):
                        if z[i] > m:
                            m = z[i]
                    s = 0.0
                    for i in range(n_top):
                        top[i] = exp(z[i] - m)
                        s = s + top[i]
                    for i in range(n_top):
                        top[i] = top[i] / s

            if not mask[t]:
                continue

            # loss, and its gradient w.r.t. top y (or top y_raw for CE)
            if loss_kind == LOSS_CE:
                value = top[classes[t]]
                if value < 1e-12:
                    value = 1e-12
                    n_clamped += 1
                total = total - log(value)
                for i in range(n_top):
                    gtop[i] = top[i]
                gtop[classes[t]] = gtop[classes[t]] - 1.0
            else:
                for i in range(n_top):
                    value = top[i] - targets[t, i]
                    if loss_kind == LOSS_L1:
                        total = total + fabs(value)
                        gtop[i] = _sign(value)
                    else:
                        total = total + value * value
                        gtop[i] = 2.0 * value

            if not collect_grads:
                continue

            if upper_kind == UPPER_NONE:
                for j in range(n_out):
                    ghid[j] = gtop[j]
            else:
                if loss_kind != LOSS_CE:
                    if upper_kind == UPPER_TANH:
                        for i in range(n_top):
                            gtop[i] = gtop[i] * (1.0 - top[i] * top[i])
                    else:
                        s = 0.0
                        for i in range(n_top):
                            s = s + top[i] * gtop[i]
                        for i in range(n_top):
                            gtop[i] = top[i] * (gtop[i] - s)
                for j in range(n_out):
                    ghid[j] = 0.0
                for i in range(n_top):
                    gub[i] = gub[i] + gtop[i]
                    for j in range(n_out):
                        guw[i, j] = guw[i, j] + gtop[i] * y[j]
                        ghid[j] = ghid[j] + uw[i, j] * gtop[i]

            for j in range(n_out):
                for k in range(n_in):
                    gw[j, k] = gw[j, k] + ghid[j] * dy[j, k]
                    galpha[j, k] = galpha[j, k] + ghid[j] * dy[j, n_in + k]
                gb[j] = gb[j] + ghid[j] * dy[j, 2 * n_in]

    return total, outputs_a, hidden_a, gw_a, galpha_a, gb_a, guw_a, gub_a, n_clamped
