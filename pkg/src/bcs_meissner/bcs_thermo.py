"""Infinite-volume thermodynamics of the strong-coupling BCS-Hubbard model.

At fixed magnetic induction ``B`` on the unit cell, the pressure is the
maximum over ``r >= 0`` of

    F(r, B) = mu + ln(2)/beta - gamma*r
              + (1/beta) int_cell ln{cosh(beta h_t) + exp(-beta lam) cosh(beta g_r)} dt

with ``h_t = eta |B(t)|`` and ``g_r = sqrt((mu - lam)^2 + gamma^2 r)``.  All
hyperbolic functions are evaluated in log space because ``beta*g`` easily
exceeds the range of ``cosh``.

A hopping dispersion ``e(k)`` (with ``lam = 0``) replaces the single level
``mu`` by the band ``mu - e(k)``; the same scan-and-refine maximiser handles
both cases by averaging over a weighted list of levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from .fields import GridSpec, VectorField

__all__ = [
    "ModelParams",
    "Dispersion",
    "HField",
    "GapSolution",
    "ThermoObservables",
    "CriterionResult",
    "log_cosh",
    "free_energy_integrand",
    "one_site_hamiltonian",
    "one_site_log_trace",
    "free_energy_functional",
    "gap_upper_bound",
    "solve_gap",
    "magnetization_magnitude",
    "magnetization_density",
    "cooper_density_local",
    "electron_density",
    "pressure",
    "observables",
    "superconducting_criterion",
    "magnetization_quasifree",
]

_LN2 = math.log(2.0)
_SMALL_G = 1e-8
_CHUNK = 1 << 22


def log_cosh(x):
    """``ln cosh x`` without overflow."""
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - _LN2


def _log_sinh(x):
    """``ln sinh x`` for ``x > 0``; ``-inf`` at zero."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return x + np.log(-np.expm1(-2.0 * x)) - _LN2


def _log_mixture(a, b, c):
    """``ln{cosh a + exp(-c) cosh b}``."""
    return np.logaddexp(log_cosh(a), log_cosh(b) - c)


@dataclass(frozen=True, eq=False)
class Dispersion:
    """Hopping symbol sampled on the periodic momentum grid ``k_j = -pi + 2 pi j / n``."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim != 3 or len(set(v.shape)) != 1:
            raise ValueError("dispersion must be sampled on a cubic momentum grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("dispersion contains non-finite values")
        n = v.shape[0]
        ref = (-np.arange(n)) % n
        if not np.allclose(v, v[np.ix_(ref, ref, ref)], rtol=0, atol=1e-12 * max(1.0, np.abs(v).max())):
            raise ValueError("dispersion must be even under k -> -k")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_per_axis(self) -> int:
        return self.values.shape[0]

    @staticmethod
    def momenta(n: int) -> np.ndarray:
        return -np.pi + 2.0 * np.pi * np.arange(n) / n

    @classmethod
    def from_function(cls, func, n: int = 64) -> "Dispersion":
        k = cls.momenta(n)
        k1, k2, k3 = np.meshgrid(k, k, k, indexing="ij")
        return cls(func(k1, k2, k3))

    @classmethod
    def nearest_neighbor(cls, theta: float, n: int = 64) -> "Dispersion":
        return cls.from_function(lambda a, b, c: 2.0 * theta * (np.cos(a) + np.cos(b) + np.cos(c)), n)

    @classmethod
    def zero(cls, n: int = 8) -> "Dispersion":
        return cls(np.zeros((n, n, n)))


@dataclass(frozen=True)
class ModelParams:
    beta: float
    mu: float
    lam: float
    gamma: float
    eta: float
    dispersion: Dispersion | None = None

    def __post_init__(self) -> None:
        for name in ("beta", "mu", "lam", "gamma", "eta"):
            val = float(getattr(self, name))
            if not math.isfinite(val):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, val)
        for name in ("beta", "gamma", "eta"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if self.dispersion is not None and self.lam != 0.0:
            raise ValueError("a hopping dispersion requires lam = 0")

    def replace(self, **changes) -> "ModelParams":
        data = dict(beta=self.beta, mu=self.mu, lam=self.lam, gamma=self.gamma, eta=self.eta, dispersion=self.dispersion)
        data.update(changes)
        return ModelParams(**data)


@dataclass(frozen=True, eq=False)
class HField:
    """Magnetic strengths ``h_t = eta |B(t)|`` on the quadrature nodes of the unit cell.

    ``weights`` sum to one (the cell volume).  When built from a grid field the
    node indices and unit directions are kept so that vector observables can be
    scattered back onto the grid.
    """

    h: np.ndarray
    weights: np.ndarray
    grid: GridSpec | None = None
    index: np.ndarray | None = None
    direction: np.ndarray | None = None

    @classmethod
    def constant(cls, h: float) -> "HField":
        if h < 0 or not math.isfinite(h):
            raise ValueError("h must be a finite non-negative number")
        return cls(np.array([float(h)]), np.array([1.0]))

    @classmethod
    def from_field(cls, B: VectorField, eta: float) -> "HField":
        grid = B.grid
        w = grid.cell_weights.ravel()
        index = np.flatnonzero(w > 0)
        vec = B.data.reshape(3, -1)[:, index]
        mag = np.sqrt(np.einsum("ij,ij->j", vec, vec))
        direction = np.zeros_like(vec)
        nz = mag > 0
        direction[:, nz] = vec[:, nz] / mag[nz]
        return cls(eta * mag, w[index] * grid.cell_volume, grid, index, direction)

    def scatter_scalar(self, values: np.ndarray) -> np.ndarray:
        if self.grid is None:
            raise ValueError("this HField has no grid to scatter onto")
        out = np.zeros(self.grid.n_per_axis**3)
        out[self.index] = values
        return out.reshape(self.grid.shape)

    def scatter_vector(self, magnitude: np.ndarray) -> VectorField:
        if self.grid is None:
            raise ValueError("this HField has no grid to scatter onto")
        out = np.zeros((3, self.grid.n_per_axis**3))
        out[:, self.index] = self.direction * magnitude
        return VectorField(self.grid, out.reshape(3, *self.grid.shape))


def _as_hfield(params: ModelParams, B) -> HField:
    if isinstance(B, HField):
        return B
    if isinstance(B, VectorField):
        return HField.from_field(B, params.eta)
    if B is None:
        return HField.constant(0.0)
    return HField.constant(float(B))


# ---------------------------------------------------------------------------
# closed forms


def _g(params: ModelParams, r, offset=None):
    a = (params.mu - params.lam) if offset is None else offset
    return np.sqrt(np.asarray(a) ** 2 + params.gamma**2 * np.asarray(r))


def free_energy_integrand(params: ModelParams, r: float, h) -> np.ndarray:
    """``(1/beta) ln{cosh(beta h) + exp(-beta lam) cosh(beta g_r)}``."""
    b = params.beta
    g = _g(params, r)
    return _log_mixture(b * np.asarray(h, dtype=float), b * g, b * params.lam) / b


def one_site_hamiltonian(params: ModelParams, r: float, h: float) -> np.ndarray:
    """One-site Hamiltonian in the Fock basis ``|0>, |up>, |down>, |up down>``.

    ``u = -mu (n_up + n_dn) + 2 lam n_up n_dn - gamma sqrt(r) (c_up* c_dn* + c_dn c_up) - h (n_up - n_dn)``.
    """
    pair = -params.gamma * math.sqrt(r)
    u = np.zeros((4, 4))
    u[0, 0] = 0.0
    u[1, 1] = -params.mu - h
    u[2, 2] = -params.mu + h
    u[3, 3] = -2.0 * params.mu + 2.0 * params.lam
    u[0, 3] = u[3, 0] = pair
    return u


def one_site_log_trace(params: ModelParams, r: float, h: float) -> float:
    """``(1/beta) ln Tr exp(-beta u)`` by numerical diagonalisation of the 4x4 matrix."""
    e = np.linalg.eigvalsh(one_site_hamiltonian(params, r, h))
    return float(logsumexp(-params.beta * e) / params.beta)


def _gap_ratio(beta: float, lam: float, h, g):
    """``sinh(beta g) / (exp(beta lam) cosh(beta h) + cosh(beta g))``."""
    bg = beta * np.asarray(g, dtype=float)
    den = np.logaddexp(beta * lam + log_cosh(beta * np.asarray(h, dtype=float)), log_cosh(bg))
    with np.errstate(invalid="ignore"):
        return np.where(bg > 0, np.exp(_log_sinh(np.maximum(bg, 1e-300)) - den), 0.0)


def _gap_ratio_over_g(beta: float, lam: float, h, g):
    """``_gap_ratio / g`` with the removable singularity at ``g = 0``."""
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    small = g < _SMALL_G
    g_safe = np.where(small, 1.0, g)
    regular = _gap_ratio(beta, lam, h, g_safe) / g_safe
    bg = beta * g
    log_den = np.logaddexp(beta * lam + log_cosh(beta * h), log_cosh(bg))
    series = beta * (1.0 + bg * bg / 6.0) * np.exp(-log_den)
    return np.where(small, series, regular)


def _magnetization_ratio(beta: float, lam: float, h, g):
    """``sinh(beta h) / (cosh(beta h) + exp(-beta lam) cosh(beta g))``."""
    bh = beta * np.asarray(h, dtype=float)
    den = _log_mixture(bh, beta * np.asarray(g, dtype=float), beta * lam)
    with np.errstate(invalid="ignore"):
        return np.where(bh > 0, np.exp(_log_sinh(np.maximum(bh, 1e-300)) - den), 0.0)


def gap_upper_bound(params: ModelParams) -> float:
    """A-priori bound ``max{0, 1/4 - min_k (mu - lam - e_k)^2 / gamma^2}`` on the order parameter."""
    a = _levels(params)[0]
    return max(0.0, 0.25 - float(np.min(a**2)) / params.gamma**2)


def _levels(params: ModelParams) -> tuple[np.ndarray, np.ndarray, float]:
    """Distinct single-particle offsets ``mu - lam - e_k``, their weights and ``mean(e)``."""
    if params.dispersion is None:
        return np.array([params.mu - params.lam]), np.array([1.0]), 0.0
    e = params.dispersion.values.ravel()
    a, inv = np.unique(np.abs(params.mu - e), return_inverse=True)
    w = np.bincount(inv.ravel(), minlength=a.size) / e.size
    return a, w, float(e.mean())


def _compress(hf: HField) -> tuple[np.ndarray, np.ndarray]:
    h, inv = np.unique(hf.h, return_inverse=True)
    w = np.bincount(inv.ravel(), weights=hf.weights, minlength=h.size)
    return h, w


class _GapProblem:
    """``r -> F(r)`` and its derivative for a fixed field and level structure."""

    def __init__(self, params: ModelParams, hf: HField) -> None:
        self.p = params
        self.h, self.wh = _compress(hf)
        self.a, self.wa, e_mean = _levels(params)
        self.base = params.mu - e_mean + _LN2 / params.beta

    def _reduce(self, fn, r: np.ndarray) -> np.ndarray:
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.empty(r.size)
        nt = self.h.size * self.a.size
        step = max(1, _CHUNK // max(nt, 1))
        for i in range(0, r.size, step):
            rr = r[i : i + step]
            g = np.sqrt(self.a[None, :] ** 2 + self.p.gamma**2 * rr[:, None])  # (m, K)
            vals = fn(self.h[None, None, :], g[:, :, None])  # (m, K, T)
            out[i : i + step] = np.einsum("mkt,k,t->m", vals, self.wa, self.wh)
        return out

    def objective(self, r) -> np.ndarray:
        b, lam = self.p.beta, self.p.lam
        integral = self._reduce(lambda h, g: _log_mixture(b * h, b * g, b * lam), r)
        return self.base - self.p.gamma * np.atleast_1d(r) + integral / b

    def ratio_over_g(self, r) -> np.ndarray:
        """``int sinh(beta g)/(g (e^{beta lam} cosh(beta h) + cosh(beta g)))`` averaged over levels."""
        b, lam = self.p.beta, self.p.lam
        return self._reduce(lambda h, g: _gap_ratio_over_g(b, lam, h, g), r)

    def defect(self, r) -> np.ndarray:
        """Zero exactly at stationary points; positive where ``F`` increases."""
        return 0.5 * self.p.gamma * self.ratio_over_g(r) - 1.0


@dataclass(frozen=True)
class GapSolution:
    r_beta: float
    objective: float
    residual: float
    r_upper: float
    superconducting: bool
    multimodal: bool
    g_value: float
    scan_points: int = 0
    lam: float = 0.0

    @property
    def h_c(self) -> float:
        """Critical strength ``g_{r_beta} - lam`` above which the condensate is locally expelled."""
        return self.g_value - self.lam


def _local_maxima(values: np.ndarray) -> list[int]:
    n = values.size
    peaks = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and values[j + 1] == values[i]:
            j += 1
        left_ok = i == 0 or values[i - 1] < values[i]
        right_ok = j == n - 1 or values[j + 1] < values[i]
        if left_ok and right_ok:
            peaks.append(j)
        i = j + 1
    return peaks


def solve_gap(params: ModelParams, B=None, *, scan_step: float | None = None) -> GapSolution:
    """Global maximiser of ``r -> F(r, B)`` on ``[0, r_upper]``.

    A uniform scan with step at most ``1e-3 * max(r_upper, 1)`` locates the
    candidate maxima; the best one is polished by a bracketed root search on the
    stationarity condition.  Among maxima whose values agree within ``1e-8`` the
    largest ``r`` is returned and ``multimodal`` is set.
    """
    hf = _as_hfield(params, B)
    prob = _GapProblem(params, hf)
    r_up = gap_upper_bound(params)
    if r_up <= 0.0:
        obj = float(prob.objective(0.0)[0])
        return GapSolution(0.0, obj, 0.0, 0.0, False, False, float(np.min(prob.a)), 1, params.lam)

    step = 1e-3 * max(r_up, 1.0) if scan_step is None else min(scan_step, 1e-3 * max(r_up, 1.0))
    n_pts = int(math.ceil(r_up / step)) + 1
    grid = np.linspace(0.0, r_up, n_pts)
    vals = prob.objective(grid)
    peaks = _local_maxima(vals)
    best = max(vals[i] for i in peaks)
    near = [i for i in peaks if vals[i] >= best - 1e-8]
    multimodal = len(near) > 1
    i = max(near)

    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, n_pts - 1)]
    candidates = [grid[i], lo, hi]
    roots = []
    d_lo, d_mid, d_hi = prob.defect([lo, grid[i], hi])
    for a, b, da, db in ((lo, grid[i], d_lo, d_mid), (grid[i], hi, d_mid, d_hi)):
        if a < b and da >= 0.0 >= db:
            roots.append(optimize.brentq(lambda x: prob.defect(x)[0], a, b, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200))
    cand = np.array(sorted(set(candidates + roots)))
    cvals = prob.objective(cand)
    top = np.max(cvals)
    tie = top - 1e-14 * max(1.0, abs(top))
    # Near the upper bound the objective is flat to rounding between the stationary point and
    # r_upper; a bracketed root that ties with the best value is the maximiser.
    tied_roots = [r for r in roots if prob.objective(r)[0] >= tie]
    r_beta = float(max(tied_roots)) if tied_roots else float(np.max(cand[cvals >= tie]))
    objective = float(prob.objective(r_beta)[0])

    if params.dispersion is None:
        g = float(_g(params, r_beta))
        integral = float(prob._reduce(lambda h, gg: _gap_ratio(params.beta, params.lam, h, gg), r_beta)[0])
        residual = abs(integral - 2.0 * g / params.gamma) if r_beta > 1e-10 else 0.0
    else:
        g = float(np.sqrt(np.min(prob.a) ** 2 + params.gamma**2 * r_beta))
        residual = abs(float(prob.ratio_over_g(r_beta)[0]) - 2.0 / params.gamma) if r_beta > 1e-10 else 0.0
    return GapSolution(
        r_beta=r_beta,
        objective=objective,
        residual=residual,
        r_upper=r_up,
        superconducting=r_beta > 1e-10,
        multimodal=multimodal,
        g_value=g,
        scan_points=n_pts,
        lam=params.lam,
    )


def free_energy_functional(params: ModelParams, r: float, B=None) -> float:
    """``F(r, B)``; ``B`` may be a grid field, an :class:`HField` or a constant strength ``h``."""
    if r < 0:
        raise ValueError("r must be non-negative")
    return float(_GapProblem(params, _as_hfield(params, B)).objective(r)[0])


# ---------------------------------------------------------------------------
# observables


def magnetization_magnitude(params: ModelParams, gap: GapSolution, h) -> np.ndarray:
    """``eta sinh(beta h) / (cosh(beta h) + exp(-beta lam) cosh(beta g))``."""
    return params.eta * _magnetization_ratio(params.beta, params.lam, h, gap.g_value)


def _require_one_site(params: ModelParams) -> None:
    if params.dispersion is not None:
        raise ValueError("use magnetization_quasifree for models with a hopping dispersion")


def magnetization_density(params: ModelParams, gap: GapSolution, B: VectorField) -> VectorField:
    """Magnetization ``M_t`` on the cell, parallel to ``B(t)`` and zero where ``B(t) = 0``."""
    _require_one_site(params)
    hf = HField.from_field(B, params.eta)
    return hf.scatter_vector(magnetization_magnitude(params, gap, hf.h))


def _region_average(hf: HField, values: np.ndarray, region: np.ndarray | None) -> float:
    if region is None:
        return float(np.sum(hf.weights * values) / np.sum(hf.weights))
    sel = np.asarray(region).ravel()[hf.index]
    if not np.any(sel):
        raise ValueError("empty region")
    w = hf.weights * sel
    return float(np.sum(w * values) / np.sum(w))


def cooper_density_local(
    params: ModelParams, gap: GapSolution, B: VectorField, region: np.ndarray | None = None
) -> tuple[np.ndarray, float]:
    """Local condensate density ``r_t`` on the grid and its average over ``region`` (default: cell)."""
    _require_one_site(params)
    hf = HField.from_field(B, params.eta)
    vals = 0.5 * params.gamma * gap.r_beta * _gap_ratio_over_g(params.beta, params.lam, hf.h, gap.g_value)
    return hf.scatter_scalar(vals), _region_average(hf, vals, region)


def electron_density(
    params: ModelParams, gap: GapSolution, B: VectorField, region: np.ndarray | None = None
) -> tuple[np.ndarray, float]:
    """Local electron density ``d_t`` in ``[0, 2]`` and its region average."""
    _require_one_site(params)
    hf = HField.from_field(B, params.eta)
    vals = 1.0 + (params.mu - params.lam) * _gap_ratio_over_g(params.beta, params.lam, hf.h, gap.g_value)
    return hf.scatter_scalar(vals), _region_average(hf, vals, region)


def pressure(params: ModelParams, B=None) -> float:
    return solve_gap(params, B).objective


@dataclass(frozen=True)
class ThermoObservables:
    gap: GapSolution
    pressure: float
    magnetization: VectorField
    cooper_density: np.ndarray
    electron_density: np.ndarray
    critical_field: float
    g_value: float


def observables(params: ModelParams, B: VectorField) -> ThermoObservables:
    gap = solve_gap(params, B)
    rho, _ = cooper_density_local(params, gap, B)
    dens, _ = electron_density(params, gap, B)
    return ThermoObservables(
        gap=gap,
        pressure=gap.objective,
        magnetization=magnetization_density(params, gap, B),
        cooper_density=rho,
        electron_density=dens,
        critical_field=gap.g_value - params.lam,
        g_value=gap.g_value,
    )


def critical_field(params: ModelParams, gap: GapSolution) -> float:
    return gap.h_c


@dataclass(frozen=True)
class CriterionResult:
    gamma0: float
    gamma_threshold: float
    r_lower_bound: float
    applicable: bool


def superconducting_criterion(params: ModelParams, radius: float) -> CriterionResult:
    """Sufficient condition for a superconducting phase uniformly over fields with ``|B| <= radius``."""
    if not params.mu < -radius * params.eta:
        raise ValueError(f"criterion needs mu < -R*eta (mu={params.mu}, R*eta={radius * params.eta})")
    gamma0 = 4.0 / (1.0 - radius * params.eta / abs(params.mu))
    delta = abs(params.mu - params.lam)
    threshold = delta * gamma0
    bound = gamma0**-2 - delta**2 / params.gamma**2
    return CriterionResult(gamma0, threshold, bound, params.gamma > threshold)


# ---------------------------------------------------------------------------
# hopping model (lam = 0)


def magnetization_quasifree(params: ModelParams, gap: GapSolution, B) -> VectorField | np.ndarray:
    """Magnetization of the quasi-free model, averaged over the momentum grid of the dispersion.

    ``B`` may be a grid field (returns a field) or a constant strength ``h``
    (returns the magnitude as a 0-d array).
    """
    if params.dispersion is None:
        raise ValueError("magnetization_quasifree needs a hopping dispersion")
    if params.lam != 0.0:
        raise ValueError("magnetization_quasifree requires lam = 0")
    a, wa, _ = _levels(params)
    hf = _as_hfield(params, B)
    energies = np.sqrt(a**2 + params.gamma**2 * gap.r_beta)
    vals = np.einsum(
        "kt,k->t",
        _magnetization_ratio(params.beta, 0.0, hf.h[None, :], energies[:, None]),
        wa,
    )
    mags = params.eta * vals
    if hf.grid is None:
        return mags[0] if mags.size == 1 else mags
    return hf.scatter_vector(mags)
