"""Solvers for the discrete mean-field equation.

``minimize`` runs Sobolev-preconditioned descent on J/K, ``newton_solve``
runs damped Newton-Krylov on the residual and ``continuation`` walks a
lambda path.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from . import meanfield as mf
from .errors import (
    BadParameter,
    DensityOverflow,
    Diverged,
    SingularLinearization,
    Stalled,
    SolverFailure,
)
from .field import TorusGrid
from .meanfield import ProblemSpec

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 500
    damping: float = 1.0
    linesearch_c: float = 1e-4
    fd_eps: float = 1e-6
    divergence_floor: float = -1e6
    # Newton inner solve
    krylov_max_iter: int = 200
    krylov_restart: int = 50
    min_step: float = 1e-10

    def __post_init__(self):
        if not self.tol > 0:
            raise BadParameter("tol must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise BadParameter("max_iter must be a positive integer")
        if not (0 < self.damping <= 1):
            raise BadParameter("damping must lie in (0, 1]")
        if not (0 < self.linesearch_c < 0.5):
            raise BadParameter("linesearch_c must lie in (0, 0.5)")
        if not self.fd_eps > 0:
            raise BadParameter("fd_eps must be positive")


@dataclass
class TraceRow:
    iteration: int
    residual_norm: float
    functional_value: float
    step_length: float


@dataclass
class Solution:
    v: np.ndarray
    spec: ProblemSpec
    residual_norm: float
    iterations: int
    converged: bool
    functional_value: float
    method: str = ""
    status: str = "converged"
    trace: list[TraceRow] = dc_field(default_factory=list)

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.v)))


def write_trace(path, trace) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("iteration,residual_norm,functional_value,step_length\r\n")
        for row in trace:
            fh.write(
                f"{row.iteration},{row.residual_norm!r},{row.functional_value!r},{row.step_length!r}\r\n"
            )


def resolvable_oscillation(grid: TorusGrid) -> float:
    """max - min of the finest bubble the grid can represent (scale pi N / 2L)."""
    mu = math.pi * grid.N / (2 * grid.L)
    R = grid.L / 2
    return 2 * math.log1p(mu**2 * R**2)


def _solution(spec, v, res, value, iters, ok, method, status, trace):
    return Solution(
        v=v,
        spec=spec,
        residual_norm=spec.grid.norm(res),
        iterations=iters,
        converged=ok,
        functional_value=value,
        method=method,
        status=status,
        trace=trace,
    )


def minimize(spec: ProblemSpec, v0, opts: SolverOptions = SolverOptions()) -> Solution:
    """Sobolev gradient descent on J_lambda (Sawada-Suzuki) or K_lambda (Neri).

    The search direction is ``(-Lap)^{-1}`` applied to the L2 gradient, with
    Armijo backtracking from a unit step. Raises :class:`Diverged` when the
    functional drops below ``opts.divergence_floor`` or the iterate
    concentrates beyond what the grid resolves, :class:`Stalled` when the
    line search collapses before reaching ``tol``.
    """
    grid = spec.grid
    v = grid.project_mean_zero(grid.check(v0).copy())
    value, g = mf.evaluate_all(spec, v)
    trace = [TraceRow(0, grid.norm(g), value, 0.0)]
    osc_cap = resolvable_oscillation(grid)

    for it in range(1, opts.max_iter + 1):
        gnorm = grid.norm(g)
        if gnorm <= opts.tol:
            return _solution(spec, v, g, value, it - 1, True, "minimize", "converged", trace)
        d = grid.solve_poisson(g)
        slope = grid.inner(g, d)  # > 0; descent along -d
        t = opts.damping
        while True:
            trial = grid.project_mean_zero(v - t * d)
            try:
                new_value, new_g = mf.evaluate_all(spec, trial)
            except DensityOverflow:
                new_value = math.inf
            if new_value <= value - opts.linesearch_c * t * slope:
                break
            t *= 0.5
            if t < opts.min_step:
                sol = _solution(spec, v, g, value, it - 1, False, "minimize", "stalled", trace)
                raise Stalled(f"line search collapsed at iteration {it}", sol)
        v, value, g = trial, new_value, new_g
        trace.append(TraceRow(it, grid.norm(g), value, t))
        log.debug("minimize it=%d J=%.12g |g|=%.3e t=%.3g", it, value, trace[-1].residual_norm, t)
        if value < opts.divergence_floor or float(np.ptp(v)) > osc_cap:
            sol = _solution(spec, v, g, value, it, False, "minimize", "diverged", trace)
            raise Diverged(
                f"functional unbounded along descent (value {value:.6g}, oscillation {np.ptp(v):.3g})",
                sol,
            )

    gnorm = grid.norm(g)
    ok = gnorm <= opts.tol
    return _solution(spec, v, g, value, opts.max_iter, ok, "minimize",
                     "converged" if ok else "max_iter", trace)


def jacobian_operator(spec: ProblemSpec, v, res=None, fd_eps=1e-6):
    """Finite-difference Jacobian-vector product of the residual at ``v``."""
    grid = spec.grid
    vnorm = grid.norm(v)

    def jvp(phi):
        pn = grid.norm(phi)
        if pn == 0.0:
            return np.zeros_like(phi)
        eps = fd_eps * (1.0 + vnorm) / pn
        rp = mf.residual(spec, v + eps * phi)
        rm = mf.residual(spec, v - eps * phi)
        return (rp - rm) / (2 * eps)

    return jvp


def newton_solve(spec: ProblemSpec, v0, opts: SolverOptions = SolverOptions()) -> Solution:
    """Damped Newton on the residual with Poisson-preconditioned GMRES inner solves."""
    grid = spec.grid
    n = grid.N
    v = grid.project_mean_zero(grid.check(v0).copy())
    value, res = mf.evaluate_all(spec, v)
    rnorm = grid.norm(res)
    trace = [TraceRow(0, rnorm, value, 0.0)]

    for it in range(1, opts.max_iter + 1):
        if rnorm <= opts.tol:
            return _solution(spec, v, res, value, it - 1, True, "newton", "converged", trace)
        jvp = jacobian_operator(spec, v, res, opts.fd_eps)

        def matvec(x, jvp=jvp):
            x = x.reshape(n, n)
            return grid.project_mean_zero(jvp(x - np.mean(x))).ravel()

        A = LinearOperator((n * n, n * n), matvec=matvec, dtype=float)
        M = LinearOperator((n * n, n * n), dtype=float,
                           matvec=lambda x: grid.solve_poisson(x.reshape(n, n)).ravel())
        b = -res.ravel()
        inner_tol = max(1e-12, min(1e-3, 0.1 * rnorm / max(1.0, trace[0].residual_norm)))
        x, info = gmres(A, b, rtol=inner_tol, atol=0.0, restart=opts.krylov_restart,
                        maxiter=opts.krylov_max_iter, M=M)
        step = grid.project_mean_zero(x.reshape(n, n))
        lin_res = np.linalg.norm(A.matvec(step.ravel()) - b) / max(np.linalg.norm(b), 1e-300)
        if info != 0 and lin_res > 0.5:
            sol = _solution(spec, v, res, value, it - 1, False, "newton", "singular", trace)
            raise SingularLinearization(
                f"inner solve stagnated (relative residual {lin_res:.3g})", sol
            )

        t = opts.damping
        while True:
            trial = v + t * step
            try:
                new_value, new_res = mf.evaluate_all(spec, trial)
                new_norm = grid.norm(new_res)
            except DensityOverflow:
                new_norm = math.inf
            if new_norm <= (1.0 - opts.linesearch_c * t) * rnorm:
                break
            t *= 0.5
            if t < opts.min_step:
                sol = _solution(spec, v, res, value, it - 1, False, "newton", "stalled", trace)
                raise Stalled(f"residual line search collapsed at iteration {it}", sol)
        v, value, res, rnorm = trial, new_value, new_res, new_norm
        trace.append(TraceRow(it, rnorm, value, t))
        log.debug("newton it=%d |R|=%.3e t=%.3g", it, rnorm, t)
        if not math.isfinite(value) or value < opts.divergence_floor:
            sol = _solution(spec, v, res, value, it, False, "newton", "diverged", trace)
            raise Diverged(f"functional value {value:.6g} below floor", sol)

    ok = rnorm <= opts.tol
    return _solution(spec, v, res, value, opts.max_iter, ok, "newton",
                     "converged" if ok else "max_iter", trace)


def smallest_eigenvalue(spec: ProblemSpec, v=None, iters=200, tol=1e-12, seed=0, fd_eps=1e-6):
    """Smallest eigenvalue of the Poisson-preconditioned linearization at ``v``.

    Power iteration on ``I - (-Lap)^{-1} DR(v)``, whose spectrum is
    ``1 - sigma`` for the preconditioned eigenvalues ``sigma``. Valid when
    the preconditioned spectrum lies below 2, which holds near ``v = 0``.
    """
    grid = spec.grid
    v = grid.zeros() if v is None else grid.check(v)
    jvp = jacobian_operator(spec, v, fd_eps=fd_eps)
    rng = np.random.default_rng(seed)
    x = grid.project_mean_zero(rng.standard_normal(v.shape))
    x /= grid.norm(x)
    theta = 0.0
    for _ in range(iters):
        y = x - grid.solve_poisson(jvp(x))
        y = grid.project_mean_zero(y)
        new_theta = grid.inner(x, y)
        ny = grid.norm(y)
        if ny == 0.0:
            return 1.0
        x = y / ny
        if abs(new_theta - theta) <= tol * max(1.0, abs(new_theta)):
            theta = new_theta
            break
        theta = new_theta
    return 1.0 - theta


def continuation(spec: ProblemSpec, lambda_path, v0, opts: SolverOptions = SolverOptions(),
                 solve=None) -> list[Solution | None]:
    """Solve along ``lambda_path`` seeding each step from the previous solution.

    While the previous solution is smaller than ``v0`` (the trivial branch)
    the seed falls back to ``v0`` so a bifurcating branch can be picked up.
    Failures are recorded as non-converged entries; after a
    :class:`Diverged` or :class:`SingularLinearization` the remaining
    entries are ``None``.
    """
    lambda_path = [float(x) for x in lambda_path]
    if not lambda_path or any(not lam > 0 for lam in lambda_path):
        raise BadParameter("lambda_path must be nonempty with positive entries")
    solve = newton_solve if solve is None else solve
    grid = spec.grid
    v0 = grid.project_mean_zero(grid.check(v0))
    seed_norm = grid.norm(v0)
    out: list[Solution | None] = []
    prev = None
    for k, lam in enumerate(lambda_path):
        s = spec.with_lambda(lam)
        seed = v0 if prev is None or grid.norm(prev) < seed_norm else prev
        try:
            sol = solve(s, seed, opts)
        except (Diverged, SingularLinearization) as exc:
            out.append(exc.solution)
            out.extend([None] * (len(lambda_path) - k - 1))
            return out
        except SolverFailure as exc:
            out.append(exc.solution)
            continue
        out.append(sol)
        if sol.converged:
            prev = sol.v
    return out
