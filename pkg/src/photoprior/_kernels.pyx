# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-pixel manipulation kernels.

Mirror images of the functions in _kernels_py.py: every float64 expression
is evaluated in the same order so both backends produce bit-identical
output (the build disables FP contraction).
"""

from libc.math cimport floor

import numpy as np

cimport numpy as cnp

cnp.import_array()


def piecewise_warp(const unsigned char[:, :, ::1] img,
                   const double[:, ::1] node_dx,
                   const double[:, ::1] node_dy):
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    cdef Py_ssize_t channels = img.shape[2]
    cdef Py_ssize_t rows = node_dx.shape[0]
    cdef Py_ssize_t cols = node_dx.shape[1]
    cdef double cell_h = (h - 1.0) / (rows - 1.0)
    cdef double cell_w = (w - 1.0) / (cols - 1.0)

    out_arr = np.empty((h, w, channels), dtype=np.uint8)
    cdef unsigned char[:, :, ::1] out = out_arr

    cdef Py_ssize_t x, y, c, i, j, x0, x1, y0, y1
    cdef double gx, gy, u, v, w_tl, w_br, dx, dy, sx, sy, fx, fy
    cdef double p00, p01, p10, p11, top, bot, val
    cdef double d_tl, d_tr, d_bl, d_br

    with nogil:
        for y in range(h):
            gy = y / cell_h
            i = <Py_ssize_t>floor(gy)
            if i > rows - 2:
                i = rows - 2
            v = gy - i
            for x in range(w):
                gx = x / cell_w
                j = <Py_ssize_t>floor(gx)
                if j > cols - 2:
                    j = cols - 2
                u = gx - j

                d_tl = node_dx[i, j]
                d_tr = node_dx[i, j + 1]
                d_bl = node_dx[i + 1, j]
                d_br = node_dx[i + 1, j + 1]
                if (u + v) <= 1.0:
                    w_tl = (1.0 - u) - v
                    dx = ((w_tl * d_tl) + (u * d_tr)) + (v * d_bl)
                else:
                    w_br = (u + v) - 1.0
                    dx = ((w_br * d_br) + ((1.0 - v) * d_tr)) + ((1.0 - u) * d_bl)

                d_tl = node_dy[i, j]
                d_tr = node_dy[i, j + 1]
                d_bl = node_dy[i + 1, j]
                d_br = node_dy[i + 1, j + 1]
                if (u + v) <= 1.0:
                    w_tl = (1.0 - u) - v
                    dy = ((w_tl * d_tl) + (u * d_tr)) + (v * d_bl)
                else:
                    w_br = (u + v) - 1.0
                    dy = ((w_br * d_br) + ((1.0 - v) * d_tr)) + ((1.0 - u) * d_bl)

                sx = x + dx
                if sx < 0.0:
                    sx = 0.0
                if sx > w - 1.0:
                    sx = w - 1.0
                sy = y + dy
                if sy < 0.0:
                    sy = 0.0
                if sy > h - 1.0:
                    sy = h - 1.0

                x0 = <Py_ssize_t>floor(sx)
                y0 = <Py_ssize_t>floor(sy)
                fx = sx - x0
                fy = sy - y0
                x1 = x0 + 1
                if x1 > w - 1:
                    x1 = w - 1
                y1 = y0 + 1
                if y1 > h - 1:
                    y1 = h - 1

                for c in range(channels):
                    p00 = img[y0, x0, c]
                    p01 = img[y0, x1, c]
                    p10 = img[y1, x0, c]
                    p11 = img[y1, x1, c]
                    top = p00 + fx * (p01 - p00)
                    bot = p10 + fx * (p11 - p10)
                    val = top + fy * (bot - top)
                    out[y, x, c] = <unsigned char>floor(val + 0.5)
    return out_arr


def feather_alpha(const unsigned char[:, ::1] mask, int band):
    cdef Py_ssize_t h = mask.shape[0]
    cdef Py_ssize_t w = mask.shape[1]
    cdef Py_ssize_t x, y
    cdef int k
    cdef unsigned char m

    cur_arr = np.empty((h, w), dtype=np.uint8)
    nxt_arr = np.empty((h, w), dtype=np.uint8)
    depth_arr = np.zeros((h, w), dtype=np.int64)
    alpha_arr = np.empty((h, w), dtype=np.float64)
    cdef unsigned char[:, ::1] cur = cur_arr
    cdef unsigned char[:, ::1] nxt = nxt_arr
    cdef long long[:, ::1] depth = depth_arr
    cdef double[:, ::1] alpha = alpha_arr
    cdef unsigned char[:, ::1] tmp

    with nogil:
        for y in range(h):
            for x in range(w):
                cur[y, x] = 1 if mask[y, x] != 0 else 0
        for k in range(band + 1):
            for y in range(h):
                for x in range(w):
                    depth[y, x] += cur[y, x]
            if k < band:
                for y in range(h):
                    for x in range(w):
                        m = cur[y, x]
                        if m != 0:
                            # frame border counts as background
                            if y == 0 or y == h - 1 or x == 0 or x == w - 1:
                                m = 0
                            elif (cur[y - 1, x - 1] == 0 or cur[y - 1, x] == 0
                                  or cur[y - 1, x + 1] == 0
                                  or cur[y, x - 1] == 0 or cur[y, x + 1] == 0
                                  or cur[y + 1, x - 1] == 0 or cur[y + 1, x] == 0
                                  or cur[y + 1, x + 1] == 0):
                                m = 0
                        nxt[y, x] = m
                tmp = cur
                cur = nxt
                nxt = tmp
        for y in range(h):
            for x in range(w):
                alpha[y, x] = depth[y, x] / <double>(band + 1)
    return alpha_arr


def mirror_blend(const unsigned char[:, :, ::1] img,
                 const double[:, ::1] alpha,
                 Py_ssize_t x0, Py_ssize_t x1, Py_ssize_t y0, Py_ssize_t y1,
                 int axis):
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    cdef Py_ssize_t channels = img.shape[2]
    cdef Py_ssize_t x, y, c, mx, my
    cdef double a, sub, mirrored, val

    out_arr = np.empty((h, w, channels), dtype=np.uint8)
    cdef unsigned char[:, :, ::1] out = out_arr

    with nogil:
        for y in range(h):
            for x in range(w):
                for c in range(channels):
                    out[y, x, c] = img[y, x, c]
        for y in range(y0, y1 + 1):
            for x in range(x0, x1 + 1):
                if axis == 0:
                    mx = x0 + x1 - x
                    my = y
                else:
                    mx = x
                    my = y0 + y1 - y
                a = alpha[y, x]
                for c in range(channels):
                    sub = img[y, x, c]
                    mirrored = img[my, mx, c]
                    val = sub + a * (mirrored - sub)
                    out[y, x, c] = <unsigned char>floor(val + 0.5)
    return out_arr
