"""Manufactured exact solution, derived forcing, error norms and studies.

The test fields on the unit square are separable in time (a pure e^{-t}
decay): the velocity is divergence-free with each component depending on
one coordinate only, the pressure has zero mean for every t, and the
concentration vanishes on the boundary.  Substituting them into the strong
form of the model yields closed-form momentum and concentration sources,
which are validated against a finite-difference residual oracle in the
test suite.
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import kernels
from .assembly import ModelParams, VELOCITY, tables_for, zero_field

ERROR_KEYS = ("u_L2", "c_L2", "p_L2", "u_H1", "c_H1")


class StudyError(RuntimeError):
    """A convergence or stability run failed; partial rows are attached."""

    def __init__(self, message, partial_rows=()):
        super().__init__(message)
        self.partial_rows = list(partial_rows)


# ---------------------------------------------------------------------------
# exact solution
# ---------------------------------------------------------------------------

class ManufacturedSolution:
    """Closed-form reference fields and their derivatives."""

    def velocity(self, x, y, t):
        decay = np.exp(-t)
        u1 = decay * y * (2.0 * y - 1.0) * (y - 1.0)
        u2 = -decay * x * (2.0 * x - 1.0) * (x - 1.0)
        return np.stack(np.broadcast_arrays(u1, u2), axis=-1)

    def velocity_t(self, x, y, t):
        return -self.velocity(x, y, t)

    def velocity_grad(self, x, y, t):
        """Jacobian d u_i / d x_j, shape (..., 2, 2)."""
        decay = np.exp(-t)
        du1dy = decay * (6.0 * y * y - 6.0 * y + 1.0)
        du2dx = -decay * (6.0 * x * x - 6.0 * x + 1.0)
        zero = np.zeros_like(du1dy)
        row1 = np.stack(np.broadcast_arrays(zero, du1dy), axis=-1)
        row2 = np.stack(np.broadcast_arrays(du2dx, zero), axis=-1)
        return np.stack([row1, row2], axis=-2)

    def velocity_laplacian(self, x, y, t):
        decay = np.exp(-t)
        lap1 = decay * (12.0 * y - 6.0)
        lap2 = -decay * (12.0 * x - 6.0)
        return np.stack(np.broadcast_arrays(lap1, lap2), axis=-1)

    def pressure(self, x, y, t):
        return np.exp(-t) * (2.0 * x - 1.0) * (2.0 * y - 1.0)

    def pressure_grad(self, x, y, t):
        decay = np.exp(-t)
        px = 2.0 * decay * (2.0 * y - 1.0)
        py = 2.0 * decay * (2.0 * x - 1.0)
        return np.stack(np.broadcast_arrays(px, py), axis=-1)

    def concentration(self, x, y, t):
        return np.exp(-t) * np.sin(np.pi * x) * np.sin(np.pi * y)

    def concentration_t(self, x, y, t):
        return -self.concentration(x, y, t)

    def concentration_grad(self, x, y, t):
        decay = np.exp(-t)
        cx = np.pi * decay * np.cos(np.pi * x) * np.sin(np.pi * y)
        cy = np.pi * decay * np.sin(np.pi * x) * np.cos(np.pi * y)
        return np.stack(np.broadcast_arrays(cx, cy), axis=-1)

    def concentration_laplacian(self, x, y, t):
        return -2.0 * np.pi**2 * self.concentration(x, y, t)

    # component oracles consumed by error_norms -------------------------------

    def velocity_component(self):
        return FieldOracle(self.velocity, self.velocity_grad)

    def pressure_component(self):
        return FieldOracle(self.pressure, self.pressure_grad)

    def concentration_component(self):
        return FieldOracle(self.concentration, self.concentration_grad)


@dataclass(frozen=True)
class FieldOracle:
    """Callable pair (value, gradient) describing one exact field."""

    value: object
    grad: object


_DEFAULT_EXACT = ManufacturedSolution()


def default_exact_solution():
    return _DEFAULT_EXACT


def manufactured_forcing(x, y, t, params):
    """Momentum and concentration sources of the manufactured problem.

    Returns (f, s_c) with f of shape (..., 2): the residuals obtained by
    substituting the reference fields into the gradient-form momentum
    equation (including buoyancy moved to the left) and into the transport
    equation with the upward-swimming term.
    """
    sol = _DEFAULT_EXACT
    u = sol.velocity(x, y, t)
    ut = sol.velocity_t(x, y, t)
    grad_u = sol.velocity_grad(x, y, t)
    lap_u = sol.velocity_laplacian(x, y, t)
    pgrad = sol.pressure_grad(x, y, t)
    c = sol.concentration(x, y, t)
    ct = sol.concentration_t(x, y, t)
    cgrad = sol.concentration_grad(x, y, t)
    lap_c = sol.concentration_laplacian(x, y, t)

    shifted = c + params.alpha
    nu = params.nu_law.value(shifted)
    dnu = params.nu_law.derivative(shifted)

    # div(nu grad u_i) = nu lap(u_i) + nu'(c) grad c . grad u_i
    visc = nu[..., None] * lap_u + dnu[..., None] * np.einsum(
        "...j,...ij->...i", cgrad, grad_u
    )
    advect = np.einsum("...j,...ij->...i", u, grad_u)
    f = ut - visc + advect + pgrad
    f[..., 1] += params.g * (1.0 + params.gamma * c)

    s_c = (
        ct
        - params.theta * lap_c
        + u[..., 0] * cgrad[..., 0]
        + u[..., 1] * cgrad[..., 1]
        + params.U * cgrad[..., 1]
    )
    return f, s_c


def forcing_callables(params):
    """(f(x, y, t), s_c(x, y, t)) closures bound to the given parameters."""

    def f(x, y, t):
        return manufactured_forcing(x, y, t, params)[0]

    def s_c(x, y, t):
        return manufactured_forcing(x, y, t, params)[1]

    return f, s_c


# ---------------------------------------------------------------------------
# error norms
# ---------------------------------------------------------------------------

def error_norms(field, oracle, t):
    """L2 and full H1 norms of (exact - discrete) at time t.

    The difference is integrated element by element with the module-wide
    quadrature rule; H1 is reported as the full norm, the root of the
    squared L2 norm plus the squared seminorm.
    """
    space = field.space
    tb = tables_for(space.mesh)
    x, y = tb.qp_xy[..., 0], tb.qp_xy[..., 1]
    w = 2.0 * tb.area[:, None] * tb.wq[None, :]
    if space.kind == VELOCITY:
        ex_val = oracle.value(x, y, t)
        ex_grad = oracle.grad(x, y, t)
        uh = np.stack(
            [
                kernels.field_at_qp(space.eldofs[:, :4], field.coeffs, tb.p1b_val),
                kernels.field_at_qp(space.eldofs[:, 4:], field.coeffs, tb.p1b_val),
            ],
            axis=-1,
        )
        gh = np.stack(
            [
                kernels.field_grad_at_qp(
                    space.eldofs[:, :4], field.coeffs, tb.glam, tb.p1b_part
                ),
                kernels.field_grad_at_qp(
                    space.eldofs[:, 4:], field.coeffs, tb.glam, tb.p1b_part
                ),
            ],
            axis=-2,
        )
        l2_sq = float(np.sum(w * ((ex_val - uh) ** 2).sum(axis=-1)))
        semi_sq = float(np.sum(w * ((ex_grad - gh) ** 2).sum(axis=(-2, -1))))
    else:
        ex_val = oracle.value(x, y, t)
        ex_grad = oracle.grad(x, y, t)
        vh = kernels.field_at_qp(space.eldofs, field.coeffs, tb.p1_val)
        gh = kernels.field_grad_at_qp(space.eldofs, field.coeffs, tb.glam, tb.p1_part)
        l2_sq = float(np.sum(w * (ex_val - vh) ** 2))
        semi_sq = float(np.sum(w * ((ex_grad - gh) ** 2).sum(axis=-1)))
    return math.sqrt(l2_sq), math.sqrt(l2_sq + semi_sq)


def exact_norms(space, oracle, t):
    """Norms of the exact field itself, via the zero-coefficient trick."""
    return error_norms(zero_field(space), oracle, t)


def l2_in_time(errors_per_step, tau):
    """Discrete l2-in-time norm sqrt(tau * sum of squared step errors)."""
    errors = np.asarray(errors_per_step, dtype=float)
    if errors.size == 0:
        raise ValueError("l2_in_time requires at least one step error")
    return math.sqrt(float(tau) * float(np.sum(errors**2)))


# ---------------------------------------------------------------------------
# convergence and stability studies
# ---------------------------------------------------------------------------

@dataclass
class ConvergenceRow:
    """One mesh level of a convergence study."""

    h: float
    tau: float
    errors: dict
    relative: dict
    rates: dict = field(default_factory=dict)
    max_div_residual: float = 0.0
    max_mean_residual: float = 0.0


@dataclass
class StudyResult:
    rows: list
    max_div_residual: float = 0.0
    max_mean_residual: float = 0.0


@dataclass
class StabilityRow:
    """Final-time discrete solution norms for one mesh level."""

    h: float
    u_L2: float
    u_H1: float
    c_L2: float
    c_H1: float
    p_L2: float
    max_div_residual: float = 0.0
    max_mean_residual: float = 0.0


def _resolution_from_h(h):
    frac = Fraction(h) if not isinstance(h, Fraction) else h
    nx = int(round(1.0 / float(frac)))
    if nx < 1 or abs(nx * float(frac) - 1.0) > 1e-12:
        raise ValueError(f"mesh size {h} is not the reciprocal of an integer")
    return nx


def validate_halving(h_list):
    """Check that the mesh sizes strictly halve between rows."""
    fracs = [Fraction(h) for h in h_list]
    for prev, cur in zip(fracs, fracs[1:]):
        if prev / cur != 2:
            raise ValueError(
                f"mesh sizes must halve between rows, got {prev} then {cur}"
            )
    return fracs


def _study_row_worker(args):
    h, params, t_final, startup = args
    from .scheme import RunConfig, run

    nx = _resolution_from_h(h)
    cfg = RunConfig(
        nx=nx,
        ny=nx,
        tau=float(h),
        t_final=t_final,
        params=params,
        mode="manufactured",
        startup=startup,
    )
    state, log = run(cfg)
    exact = default_exact_solution()
    # All errors, pressure included, are measured against the exact fields
    # at the final time; the multiplier's leapfrog label lags by one level,
    # and that offset is part of the reported first-order pressure error.
    u_l2, u_h1 = error_norms(state.u_curr, exact.velocity_component(), state.t)
    c_l2, c_h1 = error_norms(state.c_curr, exact.concentration_component(), state.t)
    p_l2, _ = error_norms(state.p_curr, exact.pressure_component(), state.t)
    eu_l2, eu_h1 = exact_norms(state.u_curr.space, exact.velocity_component(), state.t)
    ec_l2, ec_h1 = exact_norms(
        state.c_curr.space, exact.concentration_component(), state.t
    )
    ep_l2, _ = exact_norms(state.p_curr.space, exact.pressure_component(), state.t)
    errors = {
        "u_L2": u_l2,
        "c_L2": c_l2,
        "p_L2": p_l2,
        "u_H1": u_h1,
        "c_H1": c_h1,
    }
    relative = {
        "u_L2": u_l2 / eu_l2,
        "c_L2": c_l2 / ec_l2,
        "p_L2": p_l2 / ep_l2,
        "u_H1": u_h1 / eu_h1,
        "c_H1": c_h1 / ec_h1,
    }
    return {
        "h": float(h),
        "tau": float(h),
        "errors": errors,
        "relative": relative,
        "max_div_residual": log.max_div_residual,
        "max_mean_residual": log.max_mean_residual,
    }


def _stability_row_worker(args):
    h, params, t_final, startup = args
    from .scheme import RunConfig, run

    nx = _resolution_from_h(h)
    cfg = RunConfig(
        nx=nx,
        ny=nx,
        tau=float(h),
        t_final=t_final,
        params=params,
        mode="manufactured",
        startup=startup,
    )
    state, log = run(cfg)
    disc = state.disc
    return StabilityRow(
        h=float(h),
        u_L2=disc.u_l2(state.u_curr.coeffs),
        u_H1=disc.u_h1(state.u_curr.coeffs),
        c_L2=disc.c_l2(state.c_curr.coeffs),
        c_H1=disc.c_h1(state.c_curr.coeffs),
        p_L2=disc.p_l2(state.p_curr.coeffs),
        max_div_residual=log.max_div_residual,
        max_mean_residual=log.max_mean_residual,
    )


def _map_rows(worker, args_list, threads):
    if threads is None:
        threads = int(os.environ.get("BIOCNLF_THREADS", "1"))
    if threads > 1 and len(args_list) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(worker, args_list))
    return [worker(a) for a in args_list]


def convergence_study(h_list, params=None, t_final=1.0, startup="backward_euler",
                      threads=None):
    """Run the manufactured problem over halving mesh sizes with tau = h.

    Returns a StudyResult whose rows carry errors at the final time,
    relative errors, and rates log2(e(2h)/e(h)) against the previous row.
    """
    fracs = validate_halving(h_list)
    params = params or ModelParams()
    args_list = [(h, params, t_final, startup) for h in fracs]
    rows = []
    try:
        raw = _map_rows(_study_row_worker, args_list, threads)
    except Exception as exc:
        raise StudyError(f"convergence study aborted: {exc}", rows) from exc
    for data in raw:
        row = ConvergenceRow(
            h=data["h"],
            tau=data["tau"],
            errors=data["errors"],
            relative=data["relative"],
            max_div_residual=data["max_div_residual"],
            max_mean_residual=data["max_mean_residual"],
        )
        if rows:
            prev = rows[-1]
            row.rates = {
                key: math.log2(prev.errors[key] / row.errors[key])
                for key in ERROR_KEYS
            }
        rows.append(row)
    return StudyResult(
        rows,
        max_div_residual=max((r.max_div_residual for r in rows), default=0.0),
        max_mean_residual=max((r.max_mean_residual for r in rows), default=0.0),
    )


def stability_sweep(h_list, params=None, t_final=1.0, startup="backward_euler",
                    threads=None):
    """Final-time solution norms of the manufactured run for each mesh size."""
    params = params or ModelParams()
    args_list = [(Fraction(h), params, t_final, startup) for h in h_list]
    try:
        return _map_rows(_stability_row_worker, args_list, threads)
    except Exception as exc:
        raise StudyError(f"stability sweep aborted: {exc}") from exc
