"""Pure-numpy gate kernels over batched states.

Every kernel mutates its first argument in place. Statevectors are ``(B, D)``
complex arrays, density matrices ``(B, D, D)``, with ``D = 2**m`` and qubit
``q`` living on bit ``q`` of the basis index.
"""

import numpy as np


def _split(d, q):
    return d >> (q + 1), 2, 1 << q


def sv_apply_1q(psi, q, u):
    b, d = psi.shape
    v = psi.reshape((b,) + _split(d, q))
    a0 = v[:, :, 0, :].copy()
    a1 = v[:, :, 1, :]
    u = u[:, :, :, None, None]
    v[:, :, 0, :] = u[:, 0, 0] * a0 + u[:, 0, 1] * a1
    v[:, :, 1, :] = u[:, 1, 0] * a0 + u[:, 1, 1] * a1


def sv_apply_perm(psi, perm):
    psi[:] = psi[:, perm]


def dm_apply_1q(rho, q, u):
    b, d, _ = rho.shape
    hi, two, lo = _split(d, q)
    # rows: rho <- U rho
    v = rho.reshape(b, hi, two, lo, d)
    a0 = v[:, :, 0].copy()
    a1 = v[:, :, 1]
    uu = u[:, :, :, None, None, None]
    v[:, :, 0] = uu[:, 0, 0] * a0 + uu[:, 0, 1] * a1
    v[:, :, 1] = uu[:, 1, 0] * a0 + uu[:, 1, 1] * a1
    # columns: rho <- rho U^dagger
    w = rho.reshape(b, d, hi, two, lo)
    c0 = w[:, :, :, 0].copy()
    c1 = w[:, :, :, 1]
    uc = np.conj(u)[:, :, :, None, None, None]
    w[:, :, :, 0] = uc[:, 0, 0] * c0 + uc[:, 0, 1] * c1
    w[:, :, :, 1] = uc[:, 1, 0] * c0 + uc[:, 1, 1] * c1


def dm_apply_perm(rho, perm):
    rho[:] = rho[:, perm][:, :, perm]


def dm_bitflip(rho, q, p):
    flip = np.arange(rho.shape[1]) ^ (1 << q)
    rho[:] = (1.0 - p) * rho + p * rho[:, flip][:, :, flip]


def dm_phaseflip(rho, q, p):
    s = 1.0 - 2.0 * ((np.arange(rho.shape[1]) >> q) & 1)
    rho[:] = (1.0 - p) * rho + p * rho * np.outer(s, s)


def dm_depolarize(rho, q, p):
    # I/2 (x) Tr_q(rho) == (rho + X rho X + Y rho Y + Z rho Z) / 4
    d = rho.shape[1]
    flip = np.arange(d) ^ (1 << q)
    s = 1.0 - 2.0 * ((np.arange(d) >> q) & 1)
    half = 0.5 * (rho + rho[:, flip][:, :, flip])
    mixed = 0.5 * (half + half * np.outer(s, s))
    rho[:] = (1.0 - p) * rho + p * mixed
