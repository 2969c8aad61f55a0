"""Vector fields on a periodic box that contains the unit cell.

The box is ``[-L/2, L/2)^3`` sampled at ``t_i = -L/2 + i*h`` with ``h = L/n``.
The unit cell is the cube ``[-1/2, 1/2]^3`` centred at the origin.  Fields are
stored nodally as arrays of shape ``(3, n, n, n)`` and transformed with real
FFTs along the last three axes.
"""

from __future__ import annotations

import functools
import math
import os
import tempfile
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft
from scipy import integrate

__all__ = [
    "GridSpec",
    "VectorField",
    "MollifierSpec",
    "to_spectral",
    "from_spectral",
    "l2_inner",
    "energy_inner",
    "mollify_restrict",
    "mollify_adjoint",
    "curl",
    "divergence",
    "gradient",
    "random_bandlimited",
    "spectral_weights",
    "VFLD1_MAGIC",
    "write_vfld1",
    "read_vfld1",
    "atomic_write_bytes",
]

_SCHEMES = ("spectral", "central")


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid of ``n_per_axis**3`` nodes on a cube of side ``box_side``."""

    n_per_axis: int
    box_side: float = 4.0

    def __post_init__(self) -> None:
        n = self.n_per_axis
        if isinstance(n, bool) or int(n) != n:
            raise ValueError(f"n_per_axis must be an integer, got {n!r}")
        object.__setattr__(self, "n_per_axis", int(n))
        object.__setattr__(self, "box_side", float(self.box_side))
        if self.n_per_axis < 16 or self.n_per_axis % 2:
            raise ValueError(f"n_per_axis must be even and >= 16, got {self.n_per_axis}")
        if not math.isfinite(self.box_side) or self.box_side < 2.0:
            raise ValueError(f"box_side must be >= 2, got {self.box_side}")

    @property
    def spacing(self) -> float:
        return self.box_side / self.n_per_axis

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_per_axis,) * 3

    @property
    def volume(self) -> float:
        return self.box_side**3

    @property
    def cell_volume(self) -> float:
        return self.spacing**3

    @cached_property
    def coords(self) -> np.ndarray:
        """1-D node coordinates, identical along every axis."""
        return -0.5 * self.box_side + self.spacing * np.arange(self.n_per_axis)

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        c = self.coords
        return np.meshgrid(c, c, c, indexing="ij")

    @cached_property
    def _sup_norm(self) -> np.ndarray:
        c = np.abs(self.coords)
        return np.maximum(np.maximum(c[:, None, None], c[None, :, None]), c[None, None, :])

    @cached_property
    def cell_mask(self) -> np.ndarray:
        """Nodes strictly inside the unit cell, ``max|t_i| < 1/2``."""
        mask = self._sup_norm < 0.5 - 1e-12 * self.spacing
        mask.setflags(write=False)
        return mask

    @cached_property
    def cell_weights(self) -> np.ndarray:
        """Fraction of each node's control volume lying inside the unit cell.

        The weights tile the cell exactly, so ``cell_weights.sum() * h**3 == 1``.
        """
        h = self.spacing
        c = self.coords
        lo = np.maximum(c - 0.5 * h, -0.5)
        hi = np.minimum(c + 0.5 * h, 0.5)
        w1 = np.clip((hi - lo) / h, 0.0, 1.0)
        w = w1[:, None, None] * w1[None, :, None] * w1[None, None, :]
        w.setflags(write=False)
        return w

    def boundary_distance(self) -> np.ndarray:
        """Signed distance ``1/2 - max|t_i|`` (positive inside the cell)."""
        return 0.5 - self._sup_norm

    @property
    def cell_aligned(self) -> bool:
        """True when the faces of the unit cell pass through grid nodes."""
        q = 0.5 / self.spacing
        return abs(q - round(q)) < 1e-9

    def zeros(self) -> "VectorField":
        return VectorField(self, np.zeros((3, *self.shape)))


@dataclass(frozen=True, eq=False)
class VectorField:
    """A real three-component field sampled on ``grid``.

    The nodal array is copied and frozen on construction.  The real-FFT
    coefficients are computed on first access and cached.
    """

    grid: GridSpec
    data: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.shape != (3, *self.grid.shape):
            raise ValueError(f"expected shape {(3, *self.grid.shape)}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("vector field contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @cached_property
    def spectral(self) -> np.ndarray:
        coeffs = sfft.rfftn(self.data, axes=(1, 2, 3))
        coeffs.setflags(write=False)
        return coeffs

    @classmethod
    def from_components(cls, grid: GridSpec, fx, fy, fz) -> "VectorField":
        return cls(grid, np.stack([np.broadcast_to(c, grid.shape) for c in (fx, fy, fz)]))

    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.einsum("i...,i...->...", self.data, self.data))

    def norm(self) -> float:
        return math.sqrt(max(l2_inner(self, self), 0.0))

    def masked(self, mask: np.ndarray) -> "VectorField":
        return VectorField(self.grid, self.data * mask)

    def mean(self) -> np.ndarray:
        return self.data.mean(axis=(1, 2, 3))

    def _check(self, other: "VectorField") -> None:
        if other.grid != self.grid:
            raise ValueError("grid mismatch")

    def __add__(self, other: "VectorField") -> "VectorField":
        self._check(other)
        return VectorField(self.grid, self.data + other.data)

    def __sub__(self, other: "VectorField") -> "VectorField":
        self._check(other)
        return VectorField(self.grid, self.data - other.data)

    def __neg__(self) -> "VectorField":
        return VectorField(self.grid, -self.data)

    def __mul__(self, scalar: float) -> "VectorField":
        return VectorField(self.grid, float(scalar) * self.data)

    __rmul__ = __mul__


def to_spectral(f: VectorField) -> np.ndarray:
    """Real-FFT coefficients of ``f`` with shape ``(3, n, n, n//2 + 1)``."""
    return f.spectral


def from_spectral(grid: GridSpec, coeffs: np.ndarray) -> VectorField:
    data = sfft.irfftn(coeffs, s=grid.shape, axes=(1, 2, 3))
    return VectorField(grid, data)


def _scalar_from_spectral(grid: GridSpec, coeffs: np.ndarray) -> np.ndarray:
    return sfft.irfftn(coeffs, s=grid.shape, axes=(0, 1, 2))


@functools.lru_cache(maxsize=8)
def spectral_weights(grid: GridSpec) -> np.ndarray:
    """Multiplicity of each stored rfft coefficient in the full spectrum."""
    n = grid.n_per_axis
    w = np.full(n // 2 + 1, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    w = np.broadcast_to(w, (n, n, n // 2 + 1)).copy()
    w.setflags(write=False)
    return w


def spectral_norm_sq(f: VectorField) -> float:
    """``sum |f|^2`` over nodes computed from the coefficients (Parseval)."""
    n_tot = f.grid.n_per_axis**3
    w = spectral_weights(f.grid)
    return float(np.sum(w * np.abs(f.spectral) ** 2) / n_tot)


def l2_inner(f: VectorField, g: VectorField) -> float:
    """Riemann sum of ``f . g`` over the box."""
    if f.grid != g.grid:
        raise ValueError("grid mismatch")
    return float(np.vdot(f.data, g.data)) * f.grid.cell_volume


@functools.lru_cache(maxsize=16)
def _symbols(grid: GridSpec, scheme: str) -> tuple[np.ndarray, np.ndarray]:
    """Real derivative symbol ``s`` (derivative is ``i*s``) and ``1/|s|^2``.

    ``spectral`` uses the exact wavenumber with the Nyquist entry removed;
    ``central`` uses ``sin(k h)/h``, the symbol of the centred difference.
    Modes where ``|s| = 0`` get ``1/|s|^2 = 0``.
    """
    if scheme not in _SCHEMES:
        raise ValueError(f"unknown derivative scheme {scheme!r}")
    n, h = grid.n_per_axis, grid.spacing
    k_full = 2.0 * np.pi * sfft.fftfreq(n, d=h)
    k_half = 2.0 * np.pi * sfft.rfftfreq(n, d=h)
    if scheme == "spectral":
        s_full = k_full.copy()
        s_full[n // 2] = 0.0
        s_half = k_half.copy()
        s_half[-1] = 0.0
    else:
        s_full = np.sin(k_full * h) / h
        s_half = np.sin(k_half * h) / h
        s_full[n // 2] = 0.0
        s_half[-1] = 0.0
    s = np.zeros((3, n, n, n // 2 + 1))
    s[0] = s_full[:, None, None]
    s[1] = s_full[None, :, None]
    s[2] = s_half[None, None, :]
    s2 = np.einsum("i...,i...->...", s, s)
    inv = np.zeros_like(s2)
    nz = s2 > 1e-300
    inv[nz] = 1.0 / s2[nz]
    s.setflags(write=False)
    inv.setflags(write=False)
    return s, inv


def symbols(grid: GridSpec, scheme: str = "spectral") -> tuple[np.ndarray, np.ndarray]:
    return _symbols(grid, scheme)


def _mean_free(f: VectorField, what: str, tol: float = 1e-10) -> None:
    scale = max(1.0, float(np.max(np.abs(f.data))))
    if np.max(np.abs(f.mean())) > tol * scale:
        raise ValueError(f"{what} must be mean-free (k=0 mode nonzero: {f.mean()})")


def energy_inner(j1: VectorField, j2: VectorField, scheme: str = "spectral") -> float:
    """Coulomb-kernel scalar product ``int int j1(s).j2(s') / (4 pi |s - s'|)``.

    Evaluated as ``V * sum_{k != 0} Re(conj(a1) . a2) / |k|^2`` with ``a`` the
    Fourier-series coefficients; both inputs must be mean-free.
    """
    if j1.grid != j2.grid:
        raise ValueError("grid mismatch")
    _mean_free(j1, "j1")
    _mean_free(j2, "j2")
    grid = j1.grid
    _, inv = _symbols(grid, scheme)
    w = spectral_weights(grid)
    n_tot = grid.n_per_axis**3
    prod = np.einsum("i...,i...->...", np.conj(j1.spectral), j2.spectral).real
    return float(np.sum(w * inv * prod)) * grid.volume / n_tot**2


def curl(f: VectorField, scheme: str = "spectral") -> VectorField:
    s, _ = _symbols(f.grid, scheme)
    return from_spectral(f.grid, 1j * np.cross(s, f.spectral, axis=0))


def divergence(f: VectorField, scheme: str = "spectral") -> np.ndarray:
    s, _ = _symbols(f.grid, scheme)
    return _scalar_from_spectral(f.grid, 1j * np.einsum("i...,i...->...", s, f.spectral))


def gradient(phi: np.ndarray, grid: GridSpec, scheme: str = "spectral") -> VectorField:
    s, _ = _symbols(grid, scheme)
    phi_hat = sfft.rfftn(phi, axes=(0, 1, 2))
    return from_spectral(grid, 1j * s * phi_hat[None])


# ---------------------------------------------------------------------------
# mollifier


def _bump(x: np.ndarray) -> np.ndarray:
    """``exp(-1/(1-x^2))`` for ``|x| < 1``, zero elsewhere."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


@functools.lru_cache(maxsize=4)
def _bump_normalization(radius: float) -> float:
    val, _ = integrate.quad(
        lambda r: 4.0 * np.pi * r * r * math.exp(-1.0 / (1.0 - (r / radius) ** 2)),
        0.0,
        radius,
        epsabs=0.0,
        epsrel=1e-13,
        limit=200,
    )
    return 1.0 / val


@dataclass(frozen=True)
class MollifierSpec:
    """Radial bump ``xi`` of support radius ``radius`` rescaled to ``xi_eps(t) = eps^-3 xi(t/eps)``."""

    epsilon: float
    radius: float = 1.0

    def __post_init__(self) -> None:
        if not (self.epsilon >= 0.0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if not (self.radius > 0.0 and math.isfinite(self.radius)):
            raise ValueError(f"radius must be > 0, got {self.radius}")

    @property
    def epsilon_max(self) -> float:
        """Scales below ``1/(2 R)`` leave a non-empty cell core untouched by the boundary."""
        return 0.5 / self.radius

    @property
    def support(self) -> float:
        return self.epsilon * self.radius

    def profile(self, x: np.ndarray) -> np.ndarray:
        """Unit-mass profile ``xi(x)`` with ``x`` the distance from the origin."""
        return _bump_normalization(self.radius) * _bump(np.asarray(x) / self.radius)

    def shell_volume(self) -> float:
        """Volume of the part of the cell within ``eps * R`` of its boundary."""
        a = min(2.0 * self.support, 1.0)
        return 1.0 - (1.0 - a) ** 3

    def check_resolved(self, grid: GridSpec) -> None:
        if self.epsilon > 0.0 and self.support < 2.0 * grid.spacing:
            raise ValueError(
                f"mollifier support eps*R = {self.support:g} is below two grid spacings "
                f"({2 * grid.spacing:g}); refine the grid or increase epsilon"
            )


@functools.lru_cache(maxsize=8)
def _kernel_hat(grid: GridSpec, epsilon: float, radius: float) -> np.ndarray:
    # node n//2 is the origin; shifting it to index 0 gives minimum-image offsets
    x = np.fft.ifftshift(grid.coords)
    r = np.sqrt(x[:, None, None] ** 2 + x[None, :, None] ** 2 + x[None, None, :] ** 2)
    ker = _bump(r / (epsilon * radius))
    ker /= ker.sum()
    out = sfft.rfftn(ker)
    out.setflags(write=False)
    return out


def mollify_restrict(B: VectorField, moll: MollifierSpec | None) -> VectorField:
    """``1[t in cell] * (xi_eps * B)``; ``moll=None`` or ``epsilon=0`` is plain restriction.

    The kernel is sampled on the grid and normalised to unit discrete mass, so
    the map is a contraction in the discrete L2 norm.
    """
    mask = B.grid.cell_mask
    if moll is None or moll.epsilon == 0.0:
        return VectorField(B.grid, B.data * mask)
    moll.check_resolved(B.grid)
    kh = _kernel_hat(B.grid, moll.epsilon, moll.radius)
    smooth = sfft.irfftn(B.spectral * kh[None], s=B.grid.shape, axes=(1, 2, 3))
    return VectorField(B.grid, smooth * mask)


def mollify_adjoint(Y: VectorField, moll: MollifierSpec | None) -> VectorField:
    """Adjoint of :func:`mollify_restrict` in the L2 scalar product."""
    mask = Y.grid.cell_mask
    restricted = VectorField(Y.grid, Y.data * mask)
    if moll is None or moll.epsilon == 0.0:
        return restricted
    moll.check_resolved(Y.grid)
    kh = _kernel_hat(Y.grid, moll.epsilon, moll.radius)
    # the kernel is even, so convolution is self-adjoint
    smooth = sfft.irfftn(restricted.spectral * kh[None], s=Y.grid.shape, axes=(1, 2, 3))
    return VectorField(Y.grid, smooth)


def random_bandlimited(
    grid: GridSpec,
    rng: np.random.Generator,
    kmax: int = 6,
    mean_free: bool = True,
) -> VectorField:
    """Random real field whose Fourier content is limited to ``|k_i| <= kmax`` (in units of 2 pi / L)."""
    n = grid.n_per_axis
    if not 0 < kmax < n // 2:
        raise ValueError("kmax must lie strictly between 0 and n/2")
    coeffs = rng.standard_normal((3, n, n, n // 2 + 1)) + 1j * rng.standard_normal((3, n, n, n // 2 + 1))
    idx = np.abs(sfft.fftfreq(n, 1.0 / n))
    keep = (idx[:, None, None] <= kmax) & (idx[None, :, None] <= kmax) & (np.arange(n // 2 + 1)[None, None, :] <= kmax)
    coeffs *= keep[None]
    if mean_free:
        coeffs[:, 0, 0, 0] = 0.0
    data = sfft.irfftn(coeffs, s=grid.shape, axes=(1, 2, 3))
    data /= np.sqrt(np.mean(data**2))
    return VectorField(grid, data)


# ---------------------------------------------------------------------------
# VFLD1 field dumps

VFLD1_MAGIC = "VFLD1"


def atomic_write_bytes(path: str | os.PathLike, payload: bytes) -> None:
    """Write ``payload`` to ``path`` via a temporary file in the same directory and a rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def vfld1_bytes(f: VectorField) -> bytes:
    n = f.grid.n_per_axis
    header = f"{VFLD1_MAGIC} {n} {n} {n} {f.grid.box_side!r}\n".encode("ascii")
    return header + np.ascontiguousarray(f.data, dtype="<f8").tobytes()


def write_vfld1(path: str | os.PathLike, f: VectorField) -> None:
    """Dump ``f``: a text header line, then the x, y and z blocks as little-endian float64 (last axis fastest)."""
    atomic_write_bytes(path, vfld1_bytes(f))


def read_vfld1(path: str | os.PathLike) -> VectorField:
    with open(path, "rb") as fh:
        raw = fh.read()
    newline = raw.find(b"\n")
    if newline < 0 or newline > 200:
        raise ValueError("not a VFLD1 file: missing header line")
    parts = raw[:newline].decode("ascii", errors="replace").split()
    if len(parts) != 5 or parts[0] != VFLD1_MAGIC:
        raise ValueError(f"not a VFLD1 header: {raw[:newline]!r}")
    try:
        nx, ny, nz = (int(p) for p in parts[1:4])
        box = float(parts[4])
    except ValueError as exc:
        raise ValueError(f"malformed VFLD1 header: {exc}") from None
    if not nx == ny == nz:
        raise ValueError(f"only cubic grids are supported, got {nx}x{ny}x{nz}")
    payload = raw[newline + 1 :]
    expected = 3 * nx * ny * nz * 8
    if len(payload) != expected:
        raise ValueError(f"VFLD1 payload length mismatch: expected {expected} bytes, found {len(payload)}")
    grid = GridSpec(nx, box)
    data = np.frombuffer(payload, dtype="<f8").astype(float).reshape(3, nx, ny, nz)
    return VectorField(grid, data)
