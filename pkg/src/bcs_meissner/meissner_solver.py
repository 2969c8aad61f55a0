"""Variational problems for the self-generated magnetic induction.

Discretisation of the admissible set
-------------------------------------
Admissible inductions are fields of divergence-free currents supported in the
unit cell.  On the grid such a current is written ``j = curl m`` with ``m``
supported on the open cell nodes; its induction is ``S(curl m) = P_perp m``.
All operators use the centred-difference symbol, so

* ``j`` is supported in the closed cell (one node beyond ``m``),
* ``div j = 0`` to round-off, and
* ``P_perp`` restricted to the cell is exactly the projection onto the
  admissible set, hence the Euler-Lagrange equations can be checked pointwise.

The unknown is therefore the array of ``m`` values on the open cell nodes.
Quadratic problems are solved with conjugate gradients on that array.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft
from scipy import optimize
from scipy.sparse.linalg import LinearOperator, cg

from . import bcs_thermo as bt
from .fields import (
    GridSpec,
    MollifierSpec,
    VectorField,
    curl,
    divergence,
    energy_inner,
    l2_inner,
    mollify_adjoint,
    mollify_restrict,
    symbols,
)
from .helmholtz import biot_savart, project_transverse, vector_potential

__all__ = [
    "SCHEME",
    "LoopSpec",
    "CurrentDensity",
    "SolveReport",
    "ExternalField",
    "AdmissibleSet",
    "loop_magnetization",
    "make_external_field",
    "helmholtz_pair",
    "project_onto_B",
    "solve_A",
    "solve_J",
    "objective_G",
    "FullSolution",
    "solve_full",
    "MeissnerReport",
    "verify_meissner",
    "lemma_vi_bound",
    "lemma_v_bound",
    "SweepRow",
    "epsilon_sweep",
    "NonConvergenceError",
]

SCHEME = "central"


class NonConvergenceError(RuntimeError):
    """Raised when an iterative solve stops before meeting its tolerance."""


# ---------------------------------------------------------------------------
# currents and diagnostics


def _closed_cell(grid: GridSpec) -> np.ndarray:
    return grid.cell_weights > 0


@dataclass(frozen=True)
class CurrentDensity:
    j: VectorField
    support_violation: float
    divergence_residual: float

    @classmethod
    def inside(cls, j: VectorField) -> "CurrentDensity":
        """Diagnostics for a current meant to live in the closed unit cell."""
        return cls(j, _support_fraction(j, ~_closed_cell(j.grid)), _div_residual(j))

    @classmethod
    def outside(cls, j: VectorField) -> "CurrentDensity":
        """Diagnostics for a current meant to avoid the closed unit cell."""
        return cls(j, _support_fraction(j, _closed_cell(j.grid)), _div_residual(j))


def _support_fraction(j: VectorField, forbidden: np.ndarray) -> float:
    total = float(np.sum(j.data**2))
    if total == 0.0:
        return 0.0
    return math.sqrt(float(np.sum(j.data**2 * forbidden)) / total)


def _div_residual(j: VectorField) -> float:
    total = float(np.sum(j.data**2))
    if total == 0.0:
        return 0.0
    d = divergence(j, SCHEME)
    c = curl(j, SCHEME).data
    return math.sqrt(float(np.sum(d**2)) / max(float(np.sum(c**2)), 1e-300))


@dataclass
class SolveReport:
    iterations: int = 0
    objective_trace: list[float] = field(default_factory=list)
    el_residual: float = float("nan")
    suppression_ratio: float = float("nan")
    surface_fraction: float = float("nan")
    converged: bool = False
    diagnosis: str = ""
    log: list[dict] = field(default_factory=list)

    def jsonl(self) -> str:
        return "".join(json.dumps(row, sort_keys=True) + "\n" for row in self.log)


def interior_mask(grid: GridSpec, shell: float) -> np.ndarray:
    """Cell nodes farther than ``shell`` from the cell boundary."""
    return grid.boundary_distance() > shell + 1e-12 * grid.spacing


def shell_mask(grid: GridSpec, cells: float) -> np.ndarray:
    """Nodes within ``cells`` grid spacings of the cell boundary (either side)."""
    return np.abs(grid.boundary_distance()) <= cells * grid.spacing + 1e-12 * grid.spacing


def suppression_ratio(B: VectorField, B_ext: VectorField, shell: float) -> float:
    inner = interior_mask(B.grid, shell)
    num = np.sqrt(np.sum((B.data + B_ext.data) ** 2 * inner))
    den = np.sqrt(np.sum(B_ext.data**2 * inner))
    return float(num / den) if den > 0 else 0.0


def surface_fraction(j: VectorField, cells: float = 3.0) -> float:
    mag = j.magnitude()
    total = float(mag.sum())
    if total == 0.0:
        return 1.0
    return float(np.sum(mag * shell_mask(j.grid, cells)) / total)


# ---------------------------------------------------------------------------
# external sources


def _smoothstep(x: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for ``x <= 0``, 1 for ``x >= 1``."""
    x = np.clip(x, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class LoopSpec:
    """Circular current loop of total current ``current`` flowing counter-clockwise about ``axis``."""

    center: tuple[float, float, float]
    radius: float
    axis: int = 2
    current: float = 1.0
    thickness: float | None = None

    def __post_init__(self) -> None:
        if self.axis not in (0, 1, 2):
            raise ValueError("axis must be 0, 1 or 2")
        if not self.radius > 0:
            raise ValueError("loop radius must be positive")


def loop_magnetization(grid: GridSpec, loop: LoopSpec) -> VectorField:
    """Smooth magnetised disc whose curl is a thin loop current.

    ``m = I * H(rho) * Z(z) e_axis`` with ``H`` a smooth plateau that drops from
    1 to 0 across ``[a - w, a + w]`` and ``Z`` a unit-mass bump of half width
    ``w``.  Then ``curl m = -I H'(rho) Z(z) e_phi``: a loop of radius about ``a``
    carrying total current ``I``.
    """
    w = loop.thickness if loop.thickness is not None else 2.0 * grid.spacing
    if w < grid.spacing:
        raise ValueError("loop thickness must be at least one grid spacing")
    X, Y, Z = grid.mesh()
    coords = [X - loop.center[0], Y - loop.center[1], Z - loop.center[2]]
    z = coords[loop.axis]
    p, q = (coords[i] for i in range(3) if i != loop.axis)
    rho = np.sqrt(p * p + q * q)
    plateau = 1.0 - _smoothstep((rho - (loop.radius - w)) / (2.0 * w))
    zz = np.clip(z / w, -1.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        bump = np.where(np.abs(zz) < 1.0, np.exp(-1.0 / np.where(np.abs(zz) < 1.0, 1.0 - zz * zz, 1.0)), 0.0)
    # unit mass of the sampled bump along the axis keeps the total current exact on the grid
    line = np.clip(grid.coords / w, -1.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        prof = np.where(np.abs(line) < 1.0, np.exp(-1.0 / np.where(np.abs(line) < 1.0, 1.0 - line**2, 1.0)), 0.0)
    bump /= prof.sum() * grid.spacing
    data = np.zeros((3, *grid.shape))
    data[loop.axis] = loop.current * plateau * bump
    return VectorField(grid, data)


def helmholtz_pair(radius: float, axis: int = 2, current: float = 1.0, thickness: float | None = None) -> list[LoopSpec]:
    """Two coaxial loops separated by their radius (uniform field near the centre)."""
    out = []
    for sign in (-1.0, 1.0):
        c = [0.0, 0.0, 0.0]
        c[axis] = 0.5 * sign * radius
        out.append(LoopSpec(tuple(c), radius, axis, current, thickness))
    return out


@dataclass(frozen=True)
class ExternalField:
    B_ext: VectorField
    j_ext: CurrentDensity
    magnetization: VectorField | None = None


def make_external_field(
    grid: GridSpec,
    loops: Sequence[LoopSpec] = (),
    *,
    field: VectorField | None = None,
    strict: bool = True,
) -> ExternalField:
    """External induction from current loops, or from a given field.

    With loops the current is ``j_ext = curl m_ext`` for a smooth magnetised disc
    per loop, and ``B_ext = S(j_ext)``.  A given field is made mean-free and
    transverse, and its current is recovered as ``curl B``.  In strict mode any
    current inside the closed unit cell is an error.
    """
    if field is not None and loops:
        raise ValueError("give either loops or a field, not both")
    if field is not None:
        if field.grid != grid:
            raise ValueError("external field grid does not match")
        B = project_transverse(field, SCHEME)
        m = None
        j = curl(B, SCHEME)
    else:
        data = np.zeros((3, *grid.shape))
        for loop in loops:
            data += loop_magnetization(grid, loop).data
        m = VectorField(grid, data)
        j = curl(m, SCHEME)
        B = biot_savart(j, SCHEME)
    cd = CurrentDensity.outside(j)
    if strict and cd.support_violation > 1e-10:
        raise ValueError(f"external current overlaps the unit cell (fraction {cd.support_violation:.3g})")
    return ExternalField(B, cd, m)


# ---------------------------------------------------------------------------
# admissible set


class AdmissibleSet:
    """Inductions ``P_perp m`` with ``m`` supported on the open cell nodes."""

    def __init__(self, grid: GridSpec) -> None:
        if not grid.cell_aligned:
            raise ValueError(
                "the cell faces must pass through grid nodes (0.5/spacing must be an integer); "
                f"got spacing {grid.spacing:g}"
            )
        self.grid = grid
        self.mask = grid.cell_mask
        self.index = np.flatnonzero(self.mask.ravel())
        s, inv = symbols(grid, SCHEME)
        self._unit = s * np.sqrt(inv)[None]
        self._keep = (inv > 0).astype(float)
        self.size = 3 * self.index.size

    # vector <-> field
    def embed(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros((3, self.grid.n_per_axis**3))
        out[:, self.index] = x.reshape(3, -1)
        return out.reshape(3, *self.grid.shape)

    def restrict(self, data: np.ndarray) -> np.ndarray:
        return data.reshape(3, -1)[:, self.index].ravel()

    def _perp(self, data: np.ndarray) -> np.ndarray:
        hat = sfft.rfftn(data, axes=(1, 2, 3))
        u = self._unit
        dot = u[0] * hat[0]
        dot += u[1] * hat[1]
        dot += u[2] * hat[2]
        for i in range(3):
            hat[i] -= u[i] * dot
            hat[i] *= self._keep
        return sfft.irfftn(hat, s=self.grid.shape, axes=(1, 2, 3), overwrite_x=True)

    def field(self, x: np.ndarray) -> VectorField:
        """Induction ``P_perp m`` of the unknown vector ``x``."""
        return VectorField(self.grid, self._perp(self.embed(x)))

    def current(self, x: np.ndarray) -> VectorField:
        return curl(VectorField(self.grid, self.embed(x)), SCHEME)

    def normal_operator(self) -> LinearOperator:
        return LinearOperator(
            (self.size, self.size),
            matvec=lambda x: self.restrict(self._perp(self.embed(x))),
            dtype=float,
        )

    def solve(
        self,
        rhs_field: np.ndarray,
        x0: np.ndarray | None = None,
        *,
        tol: float = 1e-12,
        maxiter: int = 2000,
        operator: LinearOperator | None = None,
    ) -> tuple[np.ndarray, int]:
        """Least-squares coefficients of the projection of ``rhs_field`` onto the set."""
        b = self.restrict(rhs_field)
        if not np.any(b):
            return np.zeros(self.size), 0
        counter = [0]

        def cb(_):
            counter[0] += 1

        A = operator if operator is not None else self.normal_operator()
        x, info = cg(A, b, x0=x0, rtol=tol, atol=0.0, maxiter=maxiter, callback=cb)
        if info != 0:
            raise NonConvergenceError(f"conjugate gradients stopped after {counter[0]} iterations (info={info})")
        return x, counter[0]


def _check_mean_free(X: VectorField, what: str) -> None:
    scale = max(1.0, float(np.max(np.abs(X.data))))
    if np.max(np.abs(X.mean())) > 1e-10 * scale:
        raise ValueError(f"{what} must be mean-free")


def project_onto_B(
    X: VectorField, *, tol: float = 1e-12, maxiter: int = 2000, space: AdmissibleSet | None = None
) -> tuple[VectorField, CurrentDensity]:
    """Closest admissible induction to ``X`` in L2 and its current."""
    _check_mean_free(X, "X")
    space = space or AdmissibleSet(X.grid)
    x, _ = space.solve(space._perp(X.data), tol=tol, maxiter=maxiter)
    return space.field(x), CurrentDensity.inside(space.current(x))


# ---------------------------------------------------------------------------
# pure screening


def _random_test_directions(space: AdmissibleSet, rng: np.random.Generator, count: int) -> list[np.ndarray]:
    out = []
    for _ in range(count):
        out.append(rng.standard_normal(space.size))
    return out


def solve_A(
    B_ext: VectorField,
    *,
    tol: float = 1e-12,
    maxiter: int = 2000,
    seed: int = 0,
    n_checks: int = 20,
    space: AdmissibleSet | None = None,
) -> tuple[VectorField, CurrentDensity, SolveReport]:
    """Minimise ``1/2 ||B + B_ext||^2`` over admissible ``B``."""
    _check_mean_free(B_ext, "B_ext")
    if np.max(np.abs(divergence(B_ext, SCHEME))) > 1e-8 * max(1.0, float(np.max(np.abs(B_ext.data)))) / B_ext.grid.spacing:
        raise ValueError("B_ext must be divergence-free")
    space = space or AdmissibleSet(B_ext.grid)
    report = SolveReport()
    x, its = space.solve(-B_ext.data, tol=tol, maxiter=maxiter)
    B = space.field(x)
    j = CurrentDensity.inside(space.current(x))
    total = B + B_ext
    value = 0.5 * l2_inner(total, total)
    report.iterations = its
    report.objective_trace = [0.5 * l2_inner(B_ext, B_ext), value]
    report.suppression_ratio = suppression_ratio(B, B_ext, 3 * B.grid.spacing)
    report.surface_fraction = surface_fraction(j.j, 3.0)
    rng = np.random.default_rng(seed)
    worst = 0.0
    scale = B_ext.norm()
    for d in _random_test_directions(space, rng, n_checks):
        Sd = space.field(d)
        nd = Sd.norm()
        if nd > 0 and scale > 0:
            worst = max(worst, abs(l2_inner(total, Sd)) / (scale * nd))
    report.el_residual = worst
    report.converged = True
    return B, j, report


def objective_A(B: VectorField, B_ext: VectorField) -> float:
    total = B + B_ext
    return 0.5 * l2_inner(total, total)


def solve_J(
    j_ext: VectorField,
    *,
    tol: float = 1e-12,
    maxiter: int = 2000,
    space: AdmissibleSet | None = None,
) -> tuple[CurrentDensity, float, SolveReport]:
    """Minimise ``1/2 ||j + j_ext||_h^2`` over divergence-free currents in the cell.

    The operator is assembled from the current-side building blocks
    ``m -> curl m -> A(curl m) -> curl A(curl m)``, independently of the
    induction-side code path of :func:`solve_A`.
    """
    _check_mean_free(j_ext, "j_ext")
    grid = j_ext.grid
    space = space or AdmissibleSet(grid)

    def matvec(x):
        jm = curl(VectorField(grid, space.embed(x)), SCHEME)
        return space.restrict(curl(vector_potential(jm, SCHEME), SCHEME).data)

    op = LinearOperator((space.size, space.size), matvec=matvec, dtype=float)
    rhs = -curl(vector_potential(j_ext, SCHEME), SCHEME).data
    x, its = space.solve(rhs, tol=tol, maxiter=maxiter, operator=op)
    j = curl(VectorField(grid, space.embed(x)), SCHEME)
    tot = j + j_ext
    value = 0.5 * energy_inner(tot, tot, SCHEME)
    report = SolveReport(iterations=its, objective_trace=[0.5 * energy_inner(j_ext, j_ext, SCHEME), value])
    # current-space stationarity: <j + j_ext, dj>_h = 0 for admissible dj
    rng = np.random.default_rng(1)
    worst = 0.0
    for d in _random_test_directions(space, rng, 5):
        dj = curl(VectorField(grid, space.embed(d)), SCHEME)
        nd = math.sqrt(max(energy_inner(dj, dj, SCHEME), 0.0))
        worst = max(worst, abs(energy_inner(tot, dj, SCHEME)) / max(nd * math.sqrt(2 * report.objective_trace[0]), 1e-300))
    report.el_residual = worst
    report.surface_fraction = surface_fraction(j, 3.0)
    report.converged = True
    return CurrentDensity.inside(j), value, report


# ---------------------------------------------------------------------------
# full free-energy problem


def _pressure_and_gap(params: bt.ModelParams, Bt: VectorField) -> tuple[float, bt.GapSolution, bt.HField]:
    hf = bt.HField.from_field(Bt, params.eta)
    gap = bt.solve_gap(params, hf)
    return gap.objective, gap, hf


def objective_G(
    params: bt.ModelParams,
    B: VectorField,
    B_ext: VectorField,
    moll: MollifierSpec | None = None,
) -> float:
    """``-1/2 ||B + B_ext||^2 + p(T_eps(B + B_ext))``."""
    total = B + B_ext
    Bt = mollify_restrict(total, moll)
    p, _, _ = _pressure_and_gap(params, Bt)
    return -0.5 * l2_inner(total, total) + p


@dataclass
class FullSolution:
    B: VectorField
    j: CurrentDensity
    gap: bt.GapSolution
    report: SolveReport
    B_int: VectorField
    objective: float
    start: str
    starts: list[dict] = field(default_factory=list)
    epsilon: float = 0.0


class _FullProblem:
    def __init__(self, params, B_ext, moll, space, B_int_x):
        self.params = params
        self.B_ext = B_ext
        self.moll = moll
        self.space = space
        self.x_int = B_int_x

    def evaluate(self, x: np.ndarray):
        B = self.space.field(x)
        total = B + self.B_ext
        Bt = mollify_restrict(total, self.moll)
        p, gap, hf = _pressure_and_gap(self.params, Bt)
        G = -0.5 * l2_inner(total, total) + p
        return G, B, gap, hf

    def gradient_source(self, gap: bt.GapSolution, hf: bt.HField) -> VectorField:
        """L2 gradient of the pressure term: ``T_eps^* (w M)``."""
        mag = bt.magnetization_magnitude(self.params, gap, hf.h)
        M = hf.scatter_vector(mag * self.space.grid.cell_weights.ravel()[hf.index])
        return mollify_adjoint(M, self.moll)

    def residual(self, B: VectorField, Y: VectorField, B_int: VectorField) -> tuple[float, np.ndarray]:
        """EL residual ``B - B_int - P_perp T_eps^* M`` on the cell: its L2 norm and the field."""
        diff = (B.data - B_int.data - self.space._perp(Y.data)) * self.space.mask
        return math.sqrt(float(np.sum(diff**2)) * self.space.grid.cell_volume), diff


def _diagnose(resid: list[float], window: int = 12) -> str | None:
    """Name the failure mode once the residual has stopped improving over ``window`` steps."""
    if len(resid) <= 2 * window:
        return None
    recent = np.asarray(resid[-window:])
    if recent.min() < 0.999 * min(resid[:-window]):
        return None
    signs = np.sign(np.diff(recent))
    flips = int(np.sum(signs[1:] * signs[:-1] < 0))
    if flips >= window // 2:
        return "oscillation: residual alternates without decreasing"
    return "stall: residual not decreasing"


def _ascent(
    prob: _FullProblem,
    x0: np.ndarray,
    B_int: VectorField,
    *,
    tol: float,
    maxiter: int,
    damping: float,
    inner_tol: float,
    min_step: float = 2.0**-20,
    on_iter: Callable[[dict], None] | None = None,
):
    report = SolveReport()
    x = x0.copy()
    G, B, gap, hf = prob.evaluate(x)
    report.objective_trace.append(G)
    resid_hist: list[float] = []

    def emit(row: dict) -> None:
        report.log.append(row)
        if on_iter:
            on_iter(row)

    for it in range(maxiter + 1):
        res, r = prob.residual(B, prob.gradient_source(gap, hf), B_int)
        resid_hist.append(res)
        report.el_residual = res
        report.iterations = it
        if res <= tol:
            report.converged = True
            emit({"iter": it, "objective": G, "el_residual": res, "step": 0.0})
            break
        if it == maxiter:
            report.diagnosis = "max-iterations"
            emit({"iter": it, "objective": G, "el_residual": res, "step": 0.0})
            break
        diagnosis = _diagnose(resid_hist)
        if diagnosis:
            report.diagnosis = diagnosis
            emit({"iter": it, "objective": G, "el_residual": res, "step": 0.0})
            break
        # Direction d = x_int + P_B-coefficients(Y) - x, i.e. the solution of (mask P_perp mask) d = -r.
        # Solving it inexactly changes only the rate; the stopping test uses the exact residual.
        d, _ = prob.space.solve(-r, tol=inner_tol)
        step = damping
        while step >= min_step:
            x_new = x + step * d
            G_new, B_new, gap_new, hf_new = prob.evaluate(x_new)
            if G_new >= G - 1e-12 * max(1.0, abs(G)):
                break
            step *= 0.5
        else:
            report.diagnosis = "stall: line search found no ascent step"
            emit({"iter": it, "objective": G, "el_residual": res, "step": 0.0})
            break
        emit({"iter": it, "objective": G, "el_residual": res, "step": step})
        x, G, B, gap, hf = x_new, G_new, B_new, gap_new, hf_new
        report.objective_trace.append(G)
    return x, G, B, gap, hf, report


def _better(a: tuple[float, SolveReport], b: tuple[float, SolveReport]) -> bool:
    """Converged beats unconverged; then higher objective; near-ties go to the smaller residual."""
    (Ga, ra), (Gb, rb) = a, b
    if ra.converged != rb.converged:
        return ra.converged
    tie = 1e-12 * max(1.0, abs(Ga), abs(Gb))
    if abs(Ga - Gb) > tie:
        return Ga > Gb
    return ra.el_residual < rb.el_residual


def solve_full(
    params: bt.ModelParams,
    B_ext: VectorField,
    moll: MollifierSpec | None = None,
    *,
    tol: float = 1e-7,
    maxiter: int = 200,
    damping: float = 0.5,
    cg_tol: float = 1e-12,
    inner_tol: float = 1e-3,
    starts: Sequence[str] = ("zero", "screened"),
    B_int: VectorField | None = None,
    space: AdmissibleSet | None = None,
    on_iter: Callable[[dict], None] | None = None,
) -> FullSolution:
    """Maximise ``G(B) = -1/2 ||B + B_ext||^2 + p(T_eps(B + B_ext))`` over admissible ``B``.

    Each outer step re-solves the gap at the current field, forms the exact
    envelope gradient ``T_eps^*(M)``, projects it onto the admissible set and
    takes a damped step with backtracking.  The stationarity condition is
    ``B - B_int = P_perp T_eps^* M`` on the cell.  The projection defining each
    direction is solved to relative accuracy ``inner_tol``; the stopping test
    always uses the exact residual.  Starts are run one after the other and the
    best objective wins.
    """
    grid = B_ext.grid
    if moll is not None and moll.epsilon > 0:
        moll.check_resolved(grid)
        if moll.epsilon >= moll.epsilon_max:
            raise ValueError(f"epsilon must be below 1/(2R) = {moll.epsilon_max:g}")
    space = space or AdmissibleSet(grid)
    x_int, _ = space.solve(-B_ext.data, tol=cg_tol)
    B_int_f = space.field(x_int)
    if B_int is not None and (B_int - B_int_f).norm() > 1e-6 * max(1.0, B_int.norm()):
        raise ValueError("supplied B_int does not match the screening solution")
    prob = _FullProblem(params, B_ext, moll, space, x_int)
    best = None
    log = []
    for name in starts:
        if name == "zero":
            x0 = np.zeros(space.size)
        elif name == "screened":
            x0 = x_int.copy()
        else:
            raise ValueError(f"unknown start {name!r}")
        x, G, B, gap, hf, report = _ascent(
            prob, x0, B_int_f, tol=tol, maxiter=maxiter, damping=damping, inner_tol=inner_tol, on_iter=on_iter
        )
        log.append({"start": name, "objective": G, "converged": report.converged, "el_residual": report.el_residual, "iterations": report.iterations})
        if best is None or _better((G, report), (best[1], best[-1])):
            best = (x, G, B, gap, name, report)
    x, G, B, gap, name, report = best
    j = CurrentDensity.inside(space.current(x))
    report.surface_fraction = surface_fraction(j.j, 3.0)
    shell = (moll.support if moll else 0.0) + 3 * grid.spacing
    report.suppression_ratio = suppression_ratio(B, B_ext, shell)
    return FullSolution(B, j, gap, report, B_int_f, G, name, log, moll.epsilon if moll else 0.0)


# ---------------------------------------------------------------------------
# a-priori bounds and verification


def lemma_v_bound(params: bt.ModelParams, moll: MollifierSpec | None) -> float:
    """``(1/eta - beta)^{-1} |cell minus cell_eps|^{1/2}``; infinite unless ``beta < 1/eta``."""
    if params.beta >= 1.0 / params.eta:
        return math.inf
    shell = moll.shell_volume() if moll else 0.0
    return math.sqrt(shell) / (1.0 / params.eta - params.beta)


def _z_value(params: bt.ModelParams, g: float) -> float:
    """``min_h beta cosh(beta h) exp(beta lam) / cosh(beta g) + eta / h``."""
    b = params.beta

    def z(log_h):
        h = math.exp(log_h)
        first = math.exp(math.log(b) + bt.log_cosh(b * h) + b * params.lam - bt.log_cosh(b * g))
        return first + params.eta / h

    res = optimize.minimize_scalar(z, bounds=(math.log(1e-6), math.log(max(g, 1e-3) * 4 + 10)), method="bounded", options={"xatol": 1e-10})
    return float(res.fun)


def lemma_vi_bound(
    params: bt.ModelParams, solution: FullSolution, B_ext: VectorField, moll: MollifierSpec | None
) -> tuple[float, float]:
    """``(z, bound)`` with ``z`` evaluated at the gap of ``T_eps(B - B_int)``."""
    diff = solution.B - solution.B_int
    gap = bt.solve_gap(params, mollify_restrict(diff, moll))
    z = _z_value(params, gap.g_value)
    shell = moll.shell_volume() if moll else 0.0
    if z >= 1.0 / params.eta:
        return z, math.inf
    return z, math.sqrt(shell) / (1.0 / params.eta - z)


@dataclass(frozen=True)
class MeissnerReport:
    suppression_ratio: float
    surface_fraction: float
    r_beta: float
    r_beta_zero: float
    interior_cooper_average: float
    h_c: float
    h_margin: float
    converged: bool
    superconducting: bool
    caveat: str
    deviation: float

    def csv_row(self) -> dict:
        return {
            "suppression_ratio": self.suppression_ratio,
            "surface_fraction": self.surface_fraction,
            "r_beta": self.r_beta,
            "h_c": self.h_c,
            "converged": self.converged,
        }


def verify_meissner(
    params: bt.ModelParams,
    solution: FullSolution,
    B_ext: VectorField,
    moll: MollifierSpec | None = None,
) -> MeissnerReport:
    grid = B_ext.grid
    shell = (moll.support if moll else 0.0) + 3 * grid.spacing
    ratio = suppression_ratio(solution.B, B_ext, shell)
    frac = surface_fraction(solution.j.j, 3.0)
    Bt = mollify_restrict(solution.B + B_ext, moll)
    gap = bt.solve_gap(params, Bt)
    gap0 = bt.solve_gap(params, None)
    inner = interior_mask(grid, shell)
    _, avg = bt.cooper_density_local(params, gap, Bt, inner if inner.any() else None)
    h_sup = params.eta * float(np.max(Bt.magnitude()))
    h_c = gap.g_value - params.lam
    caveat = ""
    if not gap.superconducting:
        caveat = "normal phase (r_beta = 0): screening here rests on currents the model cannot sustain without a condensate"
    return MeissnerReport(
        suppression_ratio=ratio,
        surface_fraction=frac,
        r_beta=gap.r_beta,
        r_beta_zero=gap0.r_beta,
        interior_cooper_average=avg,
        h_c=h_c,
        h_margin=h_c - h_sup,
        converged=solution.report.converged,
        superconducting=gap.superconducting,
        caveat=caveat,
        deviation=(solution.B - solution.B_int).norm(),
    )


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    deviation: float
    shell_volume: float
    converged: bool
    el_residual: float
    diagnosis: str


@dataclass(frozen=True)
class SweepResult:
    rows: list[SweepRow]
    slope: float
    monotone: bool
    extrapolated: float


def epsilon_sweep(
    params: bt.ModelParams,
    B_ext: VectorField,
    epsilons: Sequence[float],
    *,
    radius: float = 1.0,
    **solve_kwargs,
) -> SweepResult:
    """Run :func:`solve_full` for each scale and fit ``deviation ~ eps^slope``."""
    eps = list(epsilons)
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilons must be strictly decreasing")
    for e in eps:
        MollifierSpec(e, radius).check_resolved(B_ext.grid)
    space = AdmissibleSet(B_ext.grid)
    rows = []
    for e in eps:
        moll = MollifierSpec(e, radius)
        try:
            sol = solve_full(params, B_ext, moll, space=space, **solve_kwargs)
            rows.append(
                SweepRow(e, (sol.B - sol.B_int).norm(), moll.shell_volume(), sol.report.converged, sol.report.el_residual, sol.report.diagnosis)
            )
        except NonConvergenceError as exc:
            rows.append(SweepRow(e, math.nan, moll.shell_volume(), False, math.nan, str(exc)))
    dev = np.array([r.deviation for r in rows])
    e_arr = np.array(eps)
    ok = np.isfinite(dev) & (dev > 0)
    slope = float(np.polyfit(np.log(e_arr[ok]), np.log(dev[ok]), 1)[0]) if ok.sum() >= 2 else math.nan
    monotone = bool(np.all(np.diff(dev) < 0))
    extrap = math.nan
    if ok.sum() >= 2:
        coef = np.polyfit(np.sqrt(e_arr[ok]), dev[ok], 1)
        extrap = float(coef[1])
    return SweepResult(rows, slope, monotone, extrap)
