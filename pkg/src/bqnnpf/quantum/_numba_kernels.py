"""Numba-compiled counterparts of :mod:`bqnnpf.quantum._numpy_kernels`.

Same signatures, same in-place semantics.
"""

import numpy as np
from numba import njit

_opts = {"nogil": True, "cache": True, "fastmath": False}


@njit(**_opts)
def sv_apply_1q(psi, q, u):
    nb, d = psi.shape
    stride = 1 << q
    for b in range(nb):
        u00 = u[b, 0, 0]
        u01 = u[b, 0, 1]
        u10 = u[b, 1, 0]
        u11 = u[b, 1, 1]
        for i in range(d):
            if i & stride:
                continue
            j = i | stride
            a0 = psi[b, i]
            a1 = psi[b, j]
            psi[b, i] = u00 * a0 + u01 * a1
            psi[b, j] = u10 * a0 + u11 * a1


@njit(**_opts)
def sv_apply_perm(psi, perm):
    nb, d = psi.shape
    tmp = np.empty(d, dtype=psi.dtype)
    for b in range(nb):
        for i in range(d):
            tmp[i] = psi[b, perm[i]]
        for i in range(d):
            psi[b, i] = tmp[i]


@njit(**_opts)
def dm_apply_1q(rho, q, u):
    nb, d, _ = rho.shape
    stride = 1 << q
    for b in range(nb):
        u00 = u[b, 0, 0]
        u01 = u[b, 0, 1]
        u10 = u[b, 1, 0]
        u11 = u[b, 1, 1]
        c00 = np.conj(u00)
        c01 = np.conj(u01)
        c10 = np.conj(u10)
        c11 = np.conj(u11)
        for i in range(d):
            if i & stride:
                continue
            j = i | stride
            for k in range(d):
                a0 = rho[b, i, k]
                a1 = rho[b, j, k]
                rho[b, i, k] = u00 * a0 + u01 * a1
                rho[b, j, k] = u10 * a0 + u11 * a1
        for i in range(d):
            if i & stride:
                continue
            j = i | stride
            for k in range(d):
                a0 = rho[b, k, i]
                a1 = rho[b, k, j]
                rho[b, k, i] = c00 * a0 + c01 * a1
                rho[b, k, j] = c10 * a0 + c11 * a1


@njit(**_opts)
def dm_apply_perm(rho, perm):
    nb, d, _ = rho.shape
    tmp = np.empty((d, d), dtype=rho.dtype)
    for b in range(nb):
        for i in range(d):
            pi = perm[i]
            for k in range(d):
                tmp[i, k] = rho[b, pi, perm[k]]
        for i in range(d):
            for k in range(d):
                rho[b, i, k] = tmp[i, k]


@njit(**_opts)
def dm_bitflip(rho, q, p):
    nb, d, _ = rho.shape
    stride = 1 << q
    keep = 1.0 - p
    for b in range(nb):
        for i in range(d):
            if i & stride:
                continue
            fi = i | stride
            for k in range(d):
                if k & stride:
                    continue
                fk = k | stride
                r00 = rho[b, i, k]
                r01 = rho[b, i, fk]
                r10 = rho[b, fi, k]
                r11 = rho[b, fi, fk]
                rho[b, i, k] = keep * r00 + p * r11
                rho[b, fi, fk] = keep * r11 + p * r00
                rho[b, i, fk] = keep * r01 + p * r10
                rho[b, fi, k] = keep * r10 + p * r01


@njit(**_opts)
def dm_phaseflip(rho, q, p):
    nb, d, _ = rho.shape
    stride = 1 << q
    scale = 1.0 - 2.0 * p
    for b in range(nb):
        for i in range(d):
            for k in range(d):
                if ((i & stride) != 0) != ((k & stride) != 0):
                    rho[b, i, k] = scale * rho[b, i, k]


@njit(**_opts)
def dm_depolarize(rho, q, p):
    nb, d, _ = rho.shape
    stride = 1 << q
    keep = 1.0 - p
    for b in range(nb):
        for i in range(d):
            if i & stride:
                continue
            fi = i | stride
            for k in range(d):
                if k & stride:
                    continue
                fk = k | stride
                avg = 0.5 * (rho[b, i, k] + rho[b, fi, fk])
                rho[b, i, k] = keep * rho[b, i, k] + p * avg
                rho[b, fi, fk] = keep * rho[b, fi, fk] + p * avg
                rho[b, i, fk] = keep * rho[b, i, fk]
                rho[b, fi, k] = keep * rho[b, fi, k]
