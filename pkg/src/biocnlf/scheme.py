"""Time integration: backward Euler startup and the decoupled
Crank-Nicolson Leap-Frog step.

Each step solves two independent linear systems.  The velocity/pressure
saddle system treats diffusion and convection by the trapezoid rule over
the outer levels (n-1, n+1) with the advecting field and viscosity frozen
at level n; the pressure is the Lagrange multiplier of the averaged
divergence constraint and is labeled with the center time level.  The
concentration solve mirrors this structure and reads only level-n
velocity, so the two solves are fully decoupled.  Zero-mean constraints
(pressure always, concentration in physical mode) are pinned by bordering
the systems with the integral-weight vector of the constant function.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .assembly import (
    CONCENTRATION,
    PRESSURE,
    ConstantViscosity,
    FieldCoeffs,
    ModelParams,
    apply_dirichlet,
    assemble_buoyancy,
    assemble_convection_B,
    assemble_convection_b_scalar,
    assemble_divergence,
    assemble_load_scalar,
    assemble_load_velocity,
    assemble_mass,
    assemble_scalar_stiffness,
    assemble_stiffness_nu,
    assemble_swim,
    integral_weights,
    interpolate_p1,
    interpolate_velocity,
    mini_velocity_space,
    p1_space,
    tables_for,
    zero_field,
)
from .linalg import solve_direct, solve_zero_mean
from .mesh import generate_uniform

MODES = ("physical", "manufactured")
STARTUPS = ("backward_euler", "exact_first_step")


class SchemeError(RuntimeError):
    """A time step failed (solver breakdown, non-finite field, ...)."""


@dataclass
class RunConfig:
    """Configuration of one time-dependent run.

    In manufactured mode the initial data, Dirichlet boundary values and
    the momentum/concentration sources all come from the built-in
    reference solution; u0, c0 and forcing must be left unset.  In
    physical mode u0 defaults to rest and c0 to a zero-mean cosine hill,
    so that the default run has something to move.
    """

    nx: int
    ny: int
    tau: float
    t_final: float
    params: ModelParams = field(default_factory=ModelParams)
    mode: str = "physical"
    startup: str = "backward_euler"
    diag_every: int = 1
    domain: tuple = (0.0, 0.0, 1.0, 1.0)
    u0: object = None
    c0: object = None
    forcing: object = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.startup not in STARTUPS:
            raise ValueError(
                f"startup must be one of {STARTUPS}, got {self.startup!r}"
            )
        if self.startup == "exact_first_step" and self.mode != "manufactured":
            raise ValueError("exact_first_step startup requires manufactured mode")
        if self.mode == "manufactured" and (
            self.u0 is not None or self.c0 is not None or self.forcing is not None
        ):
            raise ValueError("manufactured mode supplies its own data")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.t_final > 0:
            raise ValueError(f"t_final must be positive, got {self.t_final}")
        if self.diag_every < 1:
            raise ValueError("diag_every must be at least 1")
        n = round(self.t_final / self.tau)
        if n < 1 or abs(self.t_final / self.tau - n) > 0.5:
            raise ValueError(
                f"t_final/tau = {self.t_final / self.tau} is not within 0.5 "
                "of a positive integer (uniform partition)"
            )

    @property
    def n_steps(self):
        return round(self.t_final / self.tau)


@dataclass
class TimeState:
    """Three-level state of the leapfrog iteration.

    u_prev/c_prev hold level n-1, u_curr/c_curr level n.  p_curr is the
    most recent pressure multiplier and p_time the time level it is
    attached to (the center of the leapfrog interval that produced it).
    """

    u_prev: object
    u_curr: FieldCoeffs
    c_prev: object
    c_curr: FieldCoeffs
    p_curr: FieldCoeffs
    n: int
    t: float
    tau: float
    p_time: float
    disc: object = field(repr=False, default=None)


def _default_initial_concentration(domain):
    x0, y0, x1, y1 = domain
    lx, ly = x1 - x0, y1 - y0

    def c0(x, y):
        return np.cos(np.pi * (x - x0) / lx) * np.cos(np.pi * (y - y0) / ly)

    return c0


class Discretization:
    """Mesh, spaces and the step-invariant operators of one run."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.params = cfg.params
        self.mesh = generate_uniform(cfg.nx, cfg.ny, cfg.domain)
        manufactured = cfg.mode == "manufactured"
        self.vel_space = mini_velocity_space(self.mesh)
        self.pres_space = p1_space(self.mesh, PRESSURE)
        self.conc_space = p1_space(
            self.mesh, CONCENTRATION, dirichlet_boundary=manufactured
        )

        self.M_u = assemble_mass(self.vel_space)
        self.M_p1 = assemble_mass(self.pres_space)  # shared by pressure and c
        self.K_c = assemble_scalar_stiffness(self.conc_space)
        self.K1_u = assemble_scalar_stiffness(self.vel_space)
        self.G = assemble_divergence(self.vel_space, self.pres_space)
        self.Sw, self.sw_const = assemble_swim(self.conc_space, self.params)
        self.w_p = integral_weights(self.pres_space)
        self.w_c = integral_weights(self.conc_space)
        # border weights of the coupled system, zero on the velocity block
        self.w_p_full = np.concatenate([np.zeros(self.vel_space.ndofs), self.w_p])
        self._G_fro = sparse.linalg.norm(self.G)
        self._w_p_nrm2 = float(self.w_p @ self.w_p)
        x0, y0, x1, y1 = cfg.domain
        self.omega = (x1 - x0) * (y1 - y0)
        self._const_stiffness = None

        if manufactured:
            from .verification import default_exact_solution, forcing_callables

            self.exact = default_exact_solution()
            self._f, self._s = forcing_callables(self.params)
        else:
            self.exact = None
            self._f = cfg.forcing
            self._s = None

    # operators ------------------------------------------------------------

    def stiffness(self, c_field):
        """Viscous stiffness at the given concentration; cached for
        constant viscosity laws since it does not depend on c."""
        if isinstance(self.params.nu_law, ConstantViscosity):
            if self._const_stiffness is None:
                self._const_stiffness = assemble_stiffness_nu(
                    self.vel_space, c_field, self.params
                )
            return self._const_stiffness
        return assemble_stiffness_nu(self.vel_space, c_field, self.params)

    def momentum_load(self, t):
        if self._f is None:
            return np.zeros(self.vel_space.ndofs)
        return assemble_load_velocity(self.vel_space, self._f, t)

    def concentration_load(self, t):
        if self._s is None:
            return np.zeros(self.conc_space.ndofs)
        return assemble_load_scalar(self.conc_space, self._s, t)

    def forcing_l2_sq(self, t):
        """Squared L2 norm of the momentum forcing at time t."""
        if self._f is None:
            return 0.0
        tb = tables_for(self.mesh)
        x, y = tb.qp_xy[..., 0], tb.qp_xy[..., 1]
        f = np.asarray(self._f(x, y, t), dtype=float)
        w = 2.0 * tb.area[:, None] * tb.wq[None, :]
        return float(np.sum(w * (f**2).sum(axis=-1)))

    def vel_bc_values(self, t):
        """Velocity Dirichlet values at time t, aligned with the sorted
        dirichlet_dofs of the velocity space."""
        dofs = self.vel_space.dirichlet_dofs
        if self.exact is None:
            return np.zeros(len(dofs))
        bnd = self.mesh.boundary_nodes
        xy = self.mesh.nodes[bnd]
        vals = self.exact.velocity(xy[:, 0], xy[:, 1], t)
        return np.concatenate([vals[:, 0], vals[:, 1]])

    # norms ----------------------------------------------------------------

    def u_l2(self, u):
        return math.sqrt(max(float(u @ (self.M_u @ u)), 0.0))

    def u_h1(self, u):
        return math.sqrt(
            max(float(u @ (self.M_u @ u)) + float(u @ (self.K1_u @ u)), 0.0)
        )

    def grad_u_sq(self, u):
        return float(u @ (self.K1_u @ u))

    def c_l2(self, c):
        return math.sqrt(max(float(c @ (self.M_p1 @ c)), 0.0))

    def c_h1(self, c):
        return math.sqrt(
            max(float(c @ (self.M_p1 @ c)) + float(c @ (self.K_c @ c)), 0.0)
        )

    def grad_c_sq(self, c):
        return float(c @ (self.K_c @ c))

    def p_l2(self, p):
        return math.sqrt(max(float(p @ (self.M_p1 @ p)), 0.0))

    # residual diagnostics ---------------------------------------------------

    def divergence_residual(self, u_sum):
        """Relative residual of the divergence constraint tested against
        zero-mean pressure functions (the constant direction is projected
        out, it belongs to the bordered multiplier)."""
        r = self.G @ u_sum
        r = r - (self.w_p @ r / self._w_p_nrm2) * self.w_p
        num = float(np.linalg.norm(r))
        if num == 0.0:
            return 0.0
        den = max(self._G_fro * float(np.linalg.norm(u_sum)), 1e-300)
        return num / den

    def mean_residual(self, coeffs, weights, l2):
        num = abs(float(weights @ coeffs))
        if num == 0.0:
            return 0.0
        return num / (self.omega * max(l2, 1e-300))


# ---------------------------------------------------------------------------
# initialization and stepping
# ---------------------------------------------------------------------------

def initial_state(cfg, disc=None):
    """Interpolate the initial data at t = 0 (level 0 only)."""
    disc = disc or Discretization(cfg)
    if cfg.mode == "manufactured":
        exact = disc.exact
        u0 = interpolate_velocity(disc.vel_space, exact.velocity, t=0.0)
        c0 = interpolate_p1(disc.conc_space, exact.concentration, t=0.0)
    else:
        if cfg.u0 is None:
            u0 = zero_field(disc.vel_space)
        else:
            u0 = interpolate_velocity(disc.vel_space, cfg.u0)
        c0_fn = cfg.c0 or _default_initial_concentration(cfg.domain)
        c0 = interpolate_p1(disc.conc_space, c0_fn)
        # project onto the zero-mean space
        c0.coeffs = c0.coeffs - (disc.w_c @ c0.coeffs) / disc.omega
        u0.coeffs[disc.vel_space.dirichlet_dofs] = 0.0
    return TimeState(
        u_prev=None,
        u_curr=u0,
        c_prev=None,
        c_curr=c0,
        p_curr=zero_field(disc.pres_space),
        n=0,
        t=0.0,
        tau=cfg.tau,
        p_time=0.0,
        disc=disc,
    )


def _solve_velocity_system(disc, K, rhs_u, rhs_div, t_bc, step_label):
    n_u = disc.vel_space.ndofs
    n_p = disc.pres_space.ndofs
    saddle = sparse.bmat([[K, -disc.G.T], [disc.G, None]], format="csr")
    rhs = np.concatenate([rhs_u, rhs_div])
    dofs = disc.vel_space.dirichlet_dofs
    vals = disc.vel_bc_values(t_bc)
    A2, b2 = apply_dirichlet(saddle, rhs, dofs, vals)
    try:
        x = solve_zero_mean(A2, disc.w_p_full, b2, pin_index=n_u)
    except Exception as exc:
        raise SchemeError(f"velocity solve failed at {step_label}: {exc}") from exc
    x[dofs] = vals
    u = x[:n_u]
    p = x[n_u:n_u + n_p]
    if not (np.isfinite(u).all() and np.isfinite(p).all()):
        raise SchemeError(f"non-finite velocity/pressure at {step_label}")
    return u, p


def _solve_concentration_system(disc, L, rhs, step_label):
    dofs = disc.conc_space.dirichlet_dofs
    try:
        if len(dofs):
            A2, b2 = apply_dirichlet(L, rhs, dofs, np.zeros(len(dofs)))
            c = solve_direct(A2, b2)
            c[dofs] = 0.0
        else:
            c = solve_zero_mean(L, disc.w_c, rhs)
    except SchemeError:
        raise
    except Exception as exc:
        raise SchemeError(f"concentration solve failed at {step_label}: {exc}") from exc
    if not np.isfinite(c).all():
        raise SchemeError(f"non-finite concentration at {step_label}")
    return c


def startup_backward_euler(state0, cfg):
    """First-step values by one backward Euler step.

    The velocity/pressure system is implicit in the new level with the
    viscosity, convection field and buoyancy frozen at level 0 and the
    forcing at the new time; the concentration system mirrors this with
    the swim terms explicit at level 0.
    """
    disc = state0.disc or Discretization(cfg)
    params = disc.params
    tau = cfg.tau
    t1 = state0.t + tau
    u0, c0 = state0.u_curr, state0.c_curr
    label = "startup step (n=1)"

    A_nu = disc.stiffness(c0)
    N = assemble_convection_B(disc.vel_space, u0)
    K = (1.0 / tau) * disc.M_u + A_nu + N
    rhs_u = (
        (disc.M_u @ u0.coeffs) / tau
        + assemble_buoyancy(disc.vel_space, c0, params)
        + disc.momentum_load(t1)
    )
    rhs_div = np.zeros(disc.pres_space.ndofs)
    u1, p1 = _solve_velocity_system(disc, K, rhs_u, rhs_div, t1, label)

    nb = assemble_convection_b_scalar(disc.conc_space, u0)
    L = (1.0 / tau) * disc.M_p1 + params.theta * disc.K_c + nb
    rhs_c = (
        (disc.M_p1 @ c0.coeffs) / tau
        + disc.Sw @ c0.coeffs
        + disc.sw_const
        + disc.concentration_load(t1)
    )
    c1 = _solve_concentration_system(disc, L, rhs_c, label)

    return TimeState(
        u_prev=u0,
        u_curr=FieldCoeffs(disc.vel_space, u1, role="velocity"),
        c_prev=c0,
        c_curr=FieldCoeffs(disc.conc_space, c1, role="concentration"),
        p_curr=FieldCoeffs(disc.pres_space, p1, role="pressure"),
        n=1,
        t=t1,
        tau=tau,
        p_time=t1,
        disc=disc,
    )


def startup_exact_first_step(state0, cfg):
    """Interpolate the reference solution at t1 (manufactured mode only)."""
    disc = state0.disc or Discretization(cfg)
    if disc.exact is None:
        raise SchemeError("exact_first_step startup requires manufactured mode")
    tau = cfg.tau
    t1 = state0.t + tau
    u1 = interpolate_velocity(disc.vel_space, disc.exact.velocity, t=t1)
    c1 = interpolate_p1(disc.conc_space, disc.exact.concentration, t=t1)
    return TimeState(
        u_prev=state0.u_curr,
        u_curr=u1,
        c_prev=state0.c_curr,
        c_curr=c1,
        p_curr=zero_field(disc.pres_space),
        n=1,
        t=t1,
        tau=tau,
        p_time=t1,
        disc=disc,
    )


def _velocity_update(state, cfg):
    """Solve the momentum/continuity system of one leapfrog step."""
    disc = state.disc
    params = disc.params
    tau = state.tau
    t_n = state.t
    t_new = t_n + tau
    label = f"CNLF step (n={state.n + 1})"
    u_prev = state.u_prev.coeffs

    A_nu = disc.stiffness(state.c_curr)
    N = assemble_convection_B(disc.vel_space, state.u_curr)
    K = (0.5 / tau) * disc.M_u + 0.5 * A_nu + 0.5 * N
    rhs_u = (
        (0.5 / tau) * (disc.M_u @ u_prev)
        - 0.5 * (A_nu @ u_prev)
        - 0.5 * (N @ u_prev)
        + assemble_buoyancy(disc.vel_space, state.c_curr, params)
        + disc.momentum_load(t_n)
    )
    rhs_div = -(disc.G @ u_prev)
    return _solve_velocity_system(disc, K, rhs_u, rhs_div, t_new, label)


def _concentration_update(state, cfg):
    """Solve the transport system of one leapfrog step; reads only the
    level-n velocity, never the freshly computed one."""
    disc = state.disc
    params = disc.params
    tau = state.tau
    t_n = state.t
    label = f"CNLF step (n={state.n + 1})"
    c_prev = state.c_prev.coeffs

    nb = assemble_convection_b_scalar(disc.conc_space, state.u_curr)
    L = (0.5 / tau) * disc.M_p1 + 0.5 * params.theta * disc.K_c + 0.5 * nb
    rhs = (
        (0.5 / tau) * (disc.M_p1 @ c_prev)
        - 0.5 * params.theta * (disc.K_c @ c_prev)
        - 0.5 * (nb @ c_prev)
        + disc.Sw @ state.c_curr.coeffs
        + disc.sw_const
        + disc.concentration_load(t_n)
    )
    return _solve_concentration_system(disc, L, rhs, label)


def cnlf_step(state, cfg):
    """Advance one decoupled Crank-Nicolson Leap-Frog step."""
    if state.n < 1 or state.u_prev is None:
        raise SchemeError("cnlf_step requires a started state (n >= 1)")
    disc = state.disc
    u_new, p_new = _velocity_update(state, cfg)
    c_new = _concentration_update(state, cfg)
    for name, arr in (("velocity", u_new), ("pressure", p_new), ("concentration", c_new)):
        if not np.isfinite(arr).all():
            raise SchemeError(
                f"non-finite {name} field after CNLF step (n={state.n + 1})"
            )
    return TimeState(
        u_prev=state.u_curr,
        u_curr=FieldCoeffs(disc.vel_space, u_new, role="velocity"),
        c_prev=state.c_curr,
        c_curr=FieldCoeffs(disc.conc_space, c_new, role="concentration"),
        p_curr=FieldCoeffs(disc.pres_space, p_new, role="pressure"),
        n=state.n + 1,
        t=state.t + state.tau,
        tau=state.tau,
        p_time=state.t,
        disc=disc,
    )


# ---------------------------------------------------------------------------
# diagnostics and the outer loop
# ---------------------------------------------------------------------------

class DiagnosticsLog:
    """Per-step norms, constraint residuals and energy accumulators."""

    CSV_HEADER = "n,t,u_L2,u_H1,c_L2,c_H1,p_L2,div_residual,mean_residual"

    def __init__(self, disc):
        self.disc = disc
        self.rows = []
        self.max_div_residual = 0.0
        self.max_mean_residual = 0.0
        self.energy_steps = []
        self.energy_lhs = []
        self.energy_rhs = []

    def note_residuals(self, div_res, mean_res):
        self.max_div_residual = max(self.max_div_residual, div_res)
        self.max_mean_residual = max(self.max_mean_residual, mean_res)

    def record(self, state, div_res=0.0, mean_res=0.0):
        d = self.disc
        self.rows.append(
            {
                "n": state.n,
                "t": state.t,
                "u_L2": d.u_l2(state.u_curr.coeffs),
                "u_H1": d.u_h1(state.u_curr.coeffs),
                "c_L2": d.c_l2(state.c_curr.coeffs),
                "c_H1": d.c_h1(state.c_curr.coeffs),
                "p_L2": d.p_l2(state.p_curr.coeffs),
                "div_residual": div_res,
                "mean_residual": mean_res,
            }
        )

    def add_energy(self, n, lhs, rhs):
        self.energy_steps.append(n)
        self.energy_lhs.append(lhs)
        self.energy_rhs.append(rhs)

    def to_csv(self, target):
        lines = [self.CSV_HEADER]
        for r in self.rows:
            lines.append(
                f"{r['n']},{r['t']:.12g},{r['u_L2']:.12g},{r['u_H1']:.12g},"
                f"{r['c_L2']:.12g},{r['c_H1']:.12g},{r['p_L2']:.12g},"
                f"{r['div_residual']:.3e},{r['mean_residual']:.3e}"
            )
        text = "\n".join(lines) + "\n"
        if hasattr(target, "write"):
            target.write(text)
        else:
            with open(target, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)


def _step_residuals(disc, u_sum, p_coeffs, c_coeffs, physical):
    div_res = disc.divergence_residual(u_sum)
    mean_p = disc.mean_residual(p_coeffs, disc.w_p, disc.p_l2(p_coeffs))
    if physical:
        mean_c = disc.mean_residual(c_coeffs, disc.w_c, disc.c_l2(c_coeffs))
    else:
        mean_c = 0.0
    return div_res, max(mean_p, mean_c)


def run(cfg):
    """Run startup plus leapfrog steps to t_final.

    Returns (final_state, DiagnosticsLog).  The log records solution norms
    and constraint residuals per step plus the accumulated energy balance
    (dissipation sums on the left, data sums on the right).
    """
    disc = Discretization(cfg)
    state = initial_state(cfg, disc)
    log = DiagnosticsLog(disc)
    physical = cfg.mode == "physical"
    log.record(state)

    if cfg.startup == "backward_euler":
        state = startup_backward_euler(state, cfg)
    else:
        state = startup_exact_first_step(state, cfg)
    div_res, mean_res = _step_residuals(
        disc, state.u_curr.coeffs, state.p_curr.coeffs, state.c_curr.coeffs, physical
    )
    if cfg.startup == "exact_first_step":
        div_res = 0.0  # interpolated start imposes no discrete constraint
    log.note_residuals(div_res, mean_res)
    log.record(state, div_res, mean_res)

    init_energy = (
        disc.u_l2(state.u_prev.coeffs) ** 2
        + disc.u_l2(state.u_curr.coeffs) ** 2
        + disc.c_l2(state.c_prev.coeffs) ** 2
        + disc.c_l2(state.c_curr.coeffs) ** 2
    )
    grad_u_acc = 0.0
    grad_c_acc = 0.0
    data_acc = 0.0
    kappa = disc.params.kappa
    theta = disc.params.theta
    tau = cfg.tau

    n_steps = cfg.n_steps
    for k in range(1, n_steps):
        old = state
        state = cnlf_step(old, cfg)
        u_sum = state.u_curr.coeffs + old.u_prev.coeffs
        c_sum = state.c_curr.coeffs + old.c_prev.coeffs
        div_res, mean_res = _step_residuals(
            disc, u_sum, state.p_curr.coeffs, state.c_curr.coeffs, physical
        )
        log.note_residuals(div_res, mean_res)

        grad_u_acc += disc.grad_u_sq(u_sum)
        grad_c_acc += disc.grad_c_sq(c_sum)
        data_acc += disc.forcing_l2_sq(old.t) + disc.omega
        lhs = (
            disc.u_l2(state.u_curr.coeffs) ** 2
            + disc.c_l2(state.c_curr.coeffs) ** 2
            + kappa * tau * grad_u_acc
            + theta * tau * grad_c_acc
        )
        rhs = init_energy + tau * data_acc
        log.add_energy(state.n, lhs, rhs)

        if state.n % cfg.diag_every == 0 or state.n == n_steps:
            log.record(state, div_res, mean_res)
    return state, log


# ---------------------------------------------------------------------------
# truncation-order check
# ---------------------------------------------------------------------------

@dataclass
class TruncationResult:
    taus: np.ndarray
    errors: dict
    slopes: dict


def truncation_check(exact, tau_list, t0=0.5, resolution=32):
    """Measure the time-discretization defect orders of a smooth field.

    For each step size the centered difference is compared against the
    exact time derivative and the two-level average against the field
    itself (in the gradient seminorm), integrating over a fixed reference
    mesh.  Slopes are least-squares fits of log error against log tau;
    identically-zero errors (fields linear in time) give slope nan.
    """
    taus = np.asarray(sorted(tau_list, reverse=True), dtype=float)
    mesh = generate_uniform(resolution, resolution)
    tb = tables_for(mesh)
    x, y = tb.qp_xy[..., 0], tb.qp_xy[..., 1]
    w = 2.0 * tb.area[:, None] * tb.wq[None, :]

    errors = {"u_dt": [], "u_avg": [], "c_dt": [], "c_avg": []}
    for tau in taus:
        up, um = exact.velocity(x, y, t0 + tau), exact.velocity(x, y, t0 - tau)
        diff = exact.velocity_t(x, y, t0) - (up - um) / (2.0 * tau)
        errors["u_dt"].append(math.sqrt(float(np.sum(w * (diff**2).sum(axis=-1)))))
        gp = exact.velocity_grad(x, y, t0 + tau)
        gm = exact.velocity_grad(x, y, t0 - tau)
        gdiff = exact.velocity_grad(x, y, t0) - 0.5 * (gp + gm)
        errors["u_avg"].append(
            math.sqrt(float(np.sum(w * (gdiff**2).sum(axis=(-2, -1)))))
        )
        cp, cm = exact.concentration(x, y, t0 + tau), exact.concentration(x, y, t0 - tau)
        cdiff = exact.concentration_t(x, y, t0) - (cp - cm) / (2.0 * tau)
        errors["c_dt"].append(math.sqrt(float(np.sum(w * cdiff**2))))
        cgp = exact.concentration_grad(x, y, t0 + tau)
        cgm = exact.concentration_grad(x, y, t0 - tau)
        cgdiff = exact.concentration_grad(x, y, t0) - 0.5 * (cgp + cgm)
        errors["c_avg"].append(
            math.sqrt(float(np.sum(w * (cgdiff**2).sum(axis=-1))))
        )

    errors = {k: np.asarray(v) for k, v in errors.items()}
    slopes = {}
    for key, err in errors.items():
        if np.all(err > 0.0) and len(err) >= 2:
            slope, _ = np.polyfit(np.log(taus), np.log(err), 1)
            slopes[key] = float(slope)
        else:
            slopes[key] = float("nan")
    return TruncationResult(taus, errors, slopes)
