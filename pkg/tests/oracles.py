"""Independent reference computations used by the tests.

Nothing here calls the closed forms under test: the one-site trace is built
from Jordan-Wigner fermion operators, the quasi-free magnetization from a
real-space Nambu matrix, and the magnetic energy from a direct pair sum.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import expit, logsumexp

# Integral of 1/|r| over the unit cube centred at the origin (nested quadrature,
# re-derived in test_oracles.py).  For a cube of side h the integral is h**2 times this;
# it supplies the self-cell term of midpoint quadratures of the Coulomb kernel.
SELF_CELL_INTEGRAL = 2.380077363979553

_I2 = np.eye(2)
_Z = np.diag([1.0, -1.0])
_LOWER = np.array([[0.0, 1.0], [0.0, 0.0]])  # annihilates the occupied state of one mode


def fermion_operators(n_modes: int) -> list[np.ndarray]:
    """Jordan-Wigner annihilation operators on ``2**n_modes`` dimensional Fock space."""
    ops = []
    for k in range(n_modes):
        mats = [_Z] * k + [_LOWER] + [_I2] * (n_modes - k - 1)
        op = mats[0]
        for m in mats[1:]:
            op = np.kron(op, m)
        ops.append(op)
    return ops


def one_site_log_trace(beta, mu, lam, gamma, r, h) -> float:
    """``(1/beta) ln Tr exp(-beta u)`` for the one-site BCS-Hubbard Hamiltonian."""
    c_up, c_dn = fermion_operators(2)
    n_up = c_up.T @ c_up
    n_dn = c_dn.T @ c_dn
    pair = c_up.T @ c_dn.T
    u = (
        -mu * (n_up + n_dn)
        + 2.0 * lam * n_up @ n_dn
        - gamma * math.sqrt(r) * (pair + pair.T)
        - h * (n_up - n_dn)
    )
    assert np.allclose(u, u.T)
    e = np.linalg.eigvalsh(u)
    return float(logsumexp(-beta * e) / beta)


def nearest_neighbor_hopping(L: int, theta: float) -> np.ndarray:
    """Real-space hopping matrix of a periodic ``L**3`` cubic lattice."""
    N = L**3
    idx = np.arange(N).reshape(L, L, L)
    T = np.zeros((N, N))
    for axis in range(3):
        nb = np.roll(idx, -1, axis=axis).ravel()
        T[idx.ravel(), nb] += theta
        T[nb, idx.ravel()] += theta
    return T


def bogoliubov_lattice(L: int, theta: float, beta: float, mu: float, gamma: float, r: float, h: float) -> dict:
    """Magnetization density and pressure of the quadratic BCS Hamiltonian on an ``L**3`` torus.

    ``H = sum (T - mu) c*c - h (n_up - n_dn) - gamma sqrt(r) sum (c*_up c*_dn + h.c.) + N gamma r``
    is diagonalised in the Nambu basis ``(c_up, c*_dn)``.
    """
    T = nearest_neighbor_hopping(L, theta)
    N = T.shape[0]
    I = np.eye(N)
    delta = gamma * math.sqrt(r)
    H = np.block([[T - mu * I - h * I, -delta * I], [-delta * I, -(T - mu * I) - h * I]])
    e = np.linalg.eigvalsh(H)
    occupation = expit(-beta * e)
    spin = (occupation.sum() - N) / N
    log_z = -beta * N * (h - mu) + np.sum(np.logaddexp(0.0, -beta * e))
    return {"spin": float(spin), "pressure": float(log_z / (N * beta) - gamma * r)}


def brute_force_maximizer(f, lo: float, hi: float, step: float) -> tuple[float, float]:
    r = np.arange(lo, hi + 0.5 * step, step)
    values = f(r)
    i = int(np.argmax(values))
    return float(r[i]), float(values[i])


def coulomb_energy_direct(j: np.ndarray, points: np.ndarray, h: float, chunk: int = 2048) -> float:
    """Midpoint rule for ``(1/4 pi) int int j(t).j(s)/|t-s|``, with the exact self-cell term."""
    total = 0.0
    for start in range(0, len(points), chunk):
        p = points[start : start + chunk]
        d = np.sqrt(((p[:, None, :] - points[None, :, :]) ** 2).sum(-1))
        np.fill_diagonal(d[:, start : start + chunk], np.inf)
        total += float(np.einsum("ik,jk,ij->", j[start : start + chunk], j, 1.0 / d))
    total *= h**6
    total += float(np.sum(j * j)) * h**5 * SELF_CELL_INTEGRAL
    return total / (4.0 * math.pi)
