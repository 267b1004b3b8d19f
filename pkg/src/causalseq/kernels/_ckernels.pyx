# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled convolution kernels.

Same API and array conventions as ``pyker``; selected at import time by
``causalseq.kernels``.  Tight C loops beat the numpy formulation on the
small per-step convolutions that dominate streaming generation.
"""

import numpy as np

cimport cython

ctypedef fused real:
    float
    double

NAME = "compiled"


def conv1d_forward(x, kernel, bias, stride=1, dilation=1):
    x = np.ascontiguousarray(x)
    kernel = np.ascontiguousarray(kernel)
    span = (kernel.shape[2] - 1) * dilation + 1
    m = (x.shape[1] - span) // stride + 1
    y = np.zeros((kernel.shape[0], max(m, 0)), dtype=x.dtype)
    if m > 0:
        _conv_fwd(x, kernel, y, stride, dilation)
        if bias is not None:
            y += np.asarray(bias)[:, None]
    return y


def _conv_fwd(real[:, ::1] x, real[:, :, ::1] k, real[:, ::1] y,
              Py_ssize_t stride, Py_ssize_t dilation):
    cdef Py_ssize_t co = k.shape[0], ci = k.shape[1], w = k.shape[2], m = y.shape[1]
    cdef Py_ssize_t o, i, j, t
    cdef real acc
    with nogil:
        for o in range(co):
            for t in range(m):
                acc = 0
                for i in range(ci):
                    for j in range(w):
                        acc += k[o, i, j] * x[i, t * stride + j * dilation]
                y[o, t] = acc


def conv1d_input_grad(gy, kernel, stride, dilation, in_time):
    gy = np.ascontiguousarray(gy)
    kernel = np.ascontiguousarray(kernel)
    gx = np.zeros((kernel.shape[1], in_time), dtype=gy.dtype)
    if gy.shape[1] > 0:
        _conv_igrad(gy, kernel, gx, stride, dilation)
    return gx


def _conv_igrad(real[:, ::1] gy, real[:, :, ::1] k, real[:, ::1] gx,
                Py_ssize_t stride, Py_ssize_t dilation):
    cdef Py_ssize_t co = k.shape[0], ci = k.shape[1], w = k.shape[2], m = gy.shape[1]
    cdef Py_ssize_t o, i, j, t
    with nogil:
        for o in range(co):
            for i in range(ci):
                for j in range(w):
                    for t in range(m):
                        gx[i, t * stride + j * dilation] += k[o, i, j] * gy[o, t]


def conv1d_kernel_grad(gy, x, stride, dilation, width):
    gy = np.ascontiguousarray(gy)
    x = np.ascontiguousarray(x)
    gk = np.zeros((gy.shape[0], x.shape[0], width), dtype=gy.dtype)
    if gy.shape[1] > 0:
        _conv_kgrad(gy, x, gk, stride, dilation)
    return gk


def _conv_kgrad(real[:, ::1] gy, real[:, ::1] x, real[:, :, ::1] gk,
                Py_ssize_t stride, Py_ssize_t dilation):
    cdef Py_ssize_t co = gk.shape[0], ci = gk.shape[1], w = gk.shape[2], m = gy.shape[1]
    cdef Py_ssize_t o, i, j, t
    cdef real acc
    with nogil:
        for o in range(co):
            for i in range(ci):
                for j in range(w):
                    acc = 0
                    for t in range(m):
                        acc += gy[o, t] * x[i, t * stride + j * dilation]
                    gk[o, i, j] = acc


def tconv1d_forward(x, kernel, bias, stride):
    x = np.ascontiguousarray(x)
    kernel = np.ascontiguousarray(kernel)
    out_time = (x.shape[1] - 1) * stride + kernel.shape[2]
    y = np.zeros((kernel.shape[0], out_time), dtype=x.dtype)
    _tconv_fwd(x, kernel, y, stride)
    if bias is not None:
        y += np.asarray(bias)[:, None]
    return y


def _tconv_fwd(real[:, ::1] x, real[:, :, ::1] k, real[:, ::1] y, Py_ssize_t stride):
    cdef Py_ssize_t co = k.shape[0], ci = k.shape[1], w = k.shape[2], m = x.shape[1]
    cdef Py_ssize_t o, i, j, t
    with nogil:
        for o in range(co):
            for i in range(ci):
                for j in range(w):
                    for t in range(m):
                        y[o, t * stride + j] += k[o, i, j] * x[i, t]


def tconv1d_input_grad(gy, kernel, stride):
    gy = np.ascontiguousarray(gy)
    kernel = np.ascontiguousarray(kernel)
    m = (gy.shape[1] - kernel.shape[2]) // stride + 1
    gx = np.zeros((kernel.shape[1], max(m, 0)), dtype=gy.dtype)
    if m > 0:
        _tconv_igrad(gy, kernel, gx, stride)
    return gx


def _tconv_igrad(real[:, ::1] gy, real[:, :, ::1] k, real[:, ::1] gx, Py_ssize_t stride):
    cdef Py_ssize_t co = k.shape[0], ci = k.shape[1], w = k.shape[2], m = gx.shape[1]
    cdef Py_ssize_t o, i, j, t
    cdef real acc
    with nogil:
        for i in range(ci):
            for t in range(m):
                acc = 0
                for o in range(co):
                    for j in range(w):
                        acc += k[o, i, j] * gy[o, t * stride + j]
                gx[i, t] = acc


def tconv1d_kernel_grad(gy, x, stride, width):
    gy = np.ascontiguousarray(gy)
    x = np.ascontiguousarray(x)
    gk = np.zeros((gy.shape[0], x.shape[0], width), dtype=gy.dtype)
    if x.shape[1] > 0:
        _tconv_kgrad(gy, x, gk, stride)
    return gk


def _tconv_kgrad(real[:, ::1] gy, real[:, ::1] x, real[:, :, ::1] gk, Py_ssize_t stride):
    cdef Py_ssize_t co = gk.shape[0], ci = gk.shape[1], w = gk.shape[2], m = x.shape[1]
    cdef Py_ssize_t o, i, j, t
    cdef real acc
    with nogil:
        for o in range(co):
            for i in range(ci):
                for j in range(w):
                    acc = 0
                    for t in range(m):
                        acc += gy[o, t * stride + j] * x[i, t]
                    gk[o, i, j] = acc


def step_conv(window, kernel, bias):
    window = np.ascontiguousarray(window)
    kernel = np.ascontiguousarray(kernel)
    y = np.zeros(kernel.shape[0], dtype=window.dtype)
    _step_conv(window, kernel, y)
    if bias is not None:
        y += bias
    return y


def _step_conv(real[:, ::1] win, real[:, :, ::1] k, real[::1] y):
    cdef Py_ssize_t co = k.shape[0], ci = k.shape[1], w = k.shape[2]
    cdef Py_ssize_t o, i, j
    cdef real acc
    with nogil:
        for o in range(co):
            acc = 0
            for i in range(ci):
                for j in range(w):
                    acc += k[o, i, j] * win[i, j]
            y[o] = acc


def step_conv_dilated(history, kernel, bias, dilation):
    history = np.ascontiguousarray(history)
    kernel = np.ascontiguousarray(kernel)
    y = np.zeros(kernel.shape[0], dtype=history.dtype)
    _step_conv_dil(history, kernel, y, dilation)
    if bias is not None:
        y += bias
    return y


def _step_conv_dil(real[:, ::1] hist, real[:, :, ::1] k, real[::1] y, Py_ssize_t dilation):
    cdef Py_ssize_t co = k.shape[0], ci = k.shape[1], w = k.shape[2]
    cdef Py_ssize_t o, i, j
    cdef real acc
    with nogil:
        for o in range(co):
            acc = 0
            for i in range(ci):
                for j in range(w):
                    acc += k[o, i, j] * hist[i, j * dilation]
            y[o] = acc
