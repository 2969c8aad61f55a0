"""Helmholtz projections, the Biot-Savart operator and vector potentials.

Every operator here is a diagonal Fourier multiplier built from one real
derivative symbol ``s(k)`` (derivative = ``i s``), so composition identities such
as ``curl(S j) = P_perp j`` hold to round-off for either symbol choice:

* ``"spectral"``: ``s = k`` (Nyquist removed), exact for band-limited fields;
* ``"central"``: ``s = sin(k h)/h``, the centred-difference symbol.  Its curl
  and divergence are local stencils, so a field supported in a region has a
  curl supported one node beyond it.

Modes with ``s = 0`` (the mean, and for the central symbol the Nyquist corners)
are mapped to zero by every projection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import VectorField, _mean_free, curl, divergence, energy_inner, from_spectral, l2_inner, symbols

__all__ = [
    "HelmholtzSplit",
    "helmholtz_split",
    "project_longitudinal",
    "project_transverse",
    "biot_savart",
    "vector_potential",
    "laplacian",
    "biot_savart_direct",
    "identity_residuals",
]

@dataclass(frozen=True)
class HelmholtzSplit:
    longitudinal: VectorField
    transverse: VectorField


def _parallel_hat(f: VectorField, scheme: str) -> np.ndarray:
    s, inv = symbols(f.grid, scheme)
    sf = np.einsum("i...,i...->...", s, f.spectral)
    return s * (sf * inv)[None]


def project_longitudinal(f: VectorField, scheme: str = "spectral") -> VectorField:
    return from_spectral(f.grid, _parallel_hat(f, scheme))


def _transverse_hat(f: VectorField, scheme: str) -> np.ndarray:
    _, inv = symbols(f.grid, scheme)
    keep = (inv > 0)[None]
    return np.where(keep, f.spectral - _parallel_hat(f, scheme), 0.0)


def project_transverse(f: VectorField, scheme: str = "spectral") -> VectorField:
    return from_spectral(f.grid, _transverse_hat(f, scheme))


def helmholtz_split(f: VectorField, scheme: str = "spectral") -> HelmholtzSplit:
    return HelmholtzSplit(project_longitudinal(f, scheme), project_transverse(f, scheme))


def biot_savart(j: VectorField, scheme: str = "spectral") -> VectorField:
    """Magnetic induction ``F[S j] = i s x F[j] / |s|^2`` of a mean-free current."""
    _mean_free(j, "current")
    s, inv = symbols(j.grid, scheme)
    return from_spectral(j.grid, 1j * np.cross(s, j.spectral, axis=0) * inv[None])


def vector_potential(j: VectorField, scheme: str = "spectral") -> VectorField:
    """Coulomb-gauge potential ``F[A j] = F[j] / |s|^2`` of a mean-free current."""
    _mean_free(j, "current")
    _, inv = symbols(j.grid, scheme)
    return from_spectral(j.grid, j.spectral * inv[None])


def laplacian(f: VectorField, scheme: str = "spectral") -> VectorField:
    s, _ = symbols(f.grid, scheme)
    s2 = np.einsum("i...,i...->...", s, s)
    return from_spectral(f.grid, -s2[None] * f.spectral)


def biot_savart_direct(
    j: VectorField,
    points: np.ndarray,
    *,
    threshold: float = 0.0,
) -> np.ndarray:
    """Free-space Biot-Savart quadrature at arbitrary ``points`` (shape ``(m, 3)``).

    Midpoint rule for ``(1/4 pi) int j(s) x (t - s) / |t - s|^3 d^3s`` over the
    nodes where ``|j| > threshold``.  This is the integrated-by-parts form of
    ``(1/4 pi) int curl j(s) / |t - s| d^3s``; it needs no derivative of ``j``.
    A node coinciding with a target point is skipped; by symmetry the exact
    self-cell contribution of a smooth current vanishes to first order.
    """
    grid = j.grid
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != 3:
        raise ValueError("points must have shape (m, 3)")
    mag = j.magnitude()
    sel = mag > threshold
    X, Y, Z = grid.mesh()
    src = np.stack([X[sel], Y[sel], Z[sel]], axis=1)
    cur = np.stack([j.data[0][sel], j.data[1][sel], j.data[2][sel]], axis=1)
    out = np.zeros_like(pts)
    h3 = grid.cell_volume
    tiny = 1e-9 * grid.spacing
    for i, t in enumerate(pts):
        d = t[None, :] - src
        r = np.sqrt(np.einsum("ij,ij->i", d, d))
        ok = r > tiny
        w = np.zeros_like(r)
        w[ok] = 1.0 / r[ok] ** 3
        out[i] = np.sum(np.cross(cur, d) * w[:, None], axis=0) * h3 / (4.0 * np.pi)
    return out


def _rel(a: VectorField | np.ndarray, scale: float) -> float:
    data = a.data if isinstance(a, VectorField) else a
    return float(np.sqrt(np.sum(data**2))) / scale if scale > 0 else 0.0


def identity_residuals(f: VectorField, scheme: str = "spectral") -> dict[str, float]:
    """Relative residuals of the projection and Biot-Savart identities on a mean-free field ``f``.

    ``f`` doubles as a current for the Biot-Savart checks.  Each entry is a
    relative L2 error (or, for ``isometry``, a relative difference of energies).
    """
    nf = f.norm()
    par = project_longitudinal(f, scheme)
    perp = project_transverse(f, scheme)
    B = biot_savart(f, scheme)
    nB = max(B.norm(), 1e-300)
    return {
        "completeness": _rel(par + perp - f, nf),
        "idempotence": max(_rel(project_transverse(perp, scheme) - perp, nf), _rel(project_longitudinal(par, scheme) - par, nf)),
        "orthogonality": abs(l2_inner(par, perp)) / nf**2,
        "curl_biot_savart": _rel(curl(B, scheme) - perp, nf),
        "div_biot_savart": _rel(divergence(B, scheme), nB / f.grid.spacing),
        "biot_savart_curl": _rel(biot_savart(curl(perp, scheme), scheme) - perp, nf),
        "isometry": abs(l2_inner(B, B) - energy_inner(perp, perp, scheme)) / max(l2_inner(B, B), 1e-300),
    }
