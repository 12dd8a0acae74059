# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: depthwise temporal convolution and SiLU.

Same contracts as the numpy fallback in _ops_py; supports float32/float64.
"""

import numpy as np

cimport cython
from libc.math cimport exp

ctypedef fused real:
    float
    double


def dwconv_forward(h, kernel):
    h = np.ascontiguousarray(h)
    kernel = np.ascontiguousarray(kernel, dtype=h.dtype)
    out = np.zeros_like(h)
    if h.dtype == np.float32:
        _dwconv_forward[float](h, kernel, out)
    else:
        _dwconv_forward[double](h, kernel, out)
    return out


def dwconv_backward(h, kernel, dout):
    h = np.ascontiguousarray(h)
    kernel = np.ascontiguousarray(kernel, dtype=h.dtype)
    dout = np.ascontiguousarray(dout, dtype=h.dtype)
    dh = np.zeros_like(h)
    dk = np.zeros_like(kernel)
    if h.dtype == np.float32:
        _dwconv_backward[float](h, kernel, dout, dh, dk)
    else:
        _dwconv_backward[double](h, kernel, dout, dh, dk)
    return dh, dk


def silu(u):
    u = np.ascontiguousarray(u)
    out = np.empty_like(u)
    if u.dtype == np.float32:
        _silu[float](u.reshape(-1), out.reshape(-1))
    else:
        _silu[double](u.reshape(-1), out.reshape(-1))
    return out


def silu_grad(u):
    u = np.ascontiguousarray(u)
    out = np.empty_like(u)
    if u.dtype == np.float32:
        _silu_grad[float](u.reshape(-1), out.reshape(-1))
    else:
        _silu_grad[double](u.reshape(-1), out.reshape(-1))
    return out


cdef void _dwconv_forward(real[:, :, ::1] h, real[:, ::1] kernel, real[:, :, ::1] out) noexcept nogil:
    cdef Py_ssize_t b = h.shape[0], t = h.shape[1], c = h.shape[2], k = kernel.shape[0]
    cdef Py_ssize_t pad = k // 2
    cdef Py_ssize_t i, f, j, ch, src
    cdef real acc
    for i in range(b):
        for f in range(t):
            for j in range(k):
                src = f + j - pad
                if src < 0 or src >= t:
                    continue
                for ch in range(c):
                    out[i, f, ch] += kernel[j, ch] * h[i, src, ch]


cdef void _dwconv_backward(
    real[:, :, ::1] h, real[:, ::1] kernel, real[:, :, ::1] dout,
    real[:, :, ::1] dh, real[:, ::1] dk
) noexcept nogil:
    cdef Py_ssize_t b = h.shape[0], t = h.shape[1], c = h.shape[2], k = kernel.shape[0]
    cdef Py_ssize_t pad = k // 2
    cdef Py_ssize_t i, f, j, ch, src
    for i in range(b):
        for f in range(t):
            for j in range(k):
                src = f + j - pad
                if src < 0 or src >= t:
                    continue
                for ch in range(c):
                    dh[i, src, ch] += kernel[j, ch] * dout[i, f, ch]
                    dk[j, ch] += dout[i, f, ch] * h[i, src, ch]


cdef void _silu(real[::1] u, real[::1] out) noexcept nogil:
    cdef Py_ssize_t i
    cdef real s
    for i in range(u.shape[0]):
        s = <real>1.0 / (<real>1.0 + <real>exp(-u[i]))
        out[i] = u[i] * s


cdef void _silu_grad(real[::1] u, real[::1] out) noexcept nogil:
    cdef Py_ssize_t i
    cdef real s
    for i in range(u.shape[0]):
        s = <real>1.0 / (<real>1.0 + <real>exp(-u[i]))
        out[i] = s * (<real>1.0 + u[i] * (<real>1.0 - s))
