"""Finite element spaces and assembly of the weak-form operators.

Spaces: P1 scalars (pressure, concentration) and the mini velocity space,
piecewise linears enriched with one cubic bubble per element and per
component.  Velocity degrees of freedom are component-major: dof
``comp * (n_nodes + n_triangles) + k`` where k indexes vertices first and
bubbles after.

All forms use one module-wide quadrature rule (degree 5 by default), high
enough that bubble-bubble products with a P1-interpolated viscosity leave
quadrature error far below the discretization error.  Convection matrices
use the symmetrized trilinear form, half of the forward advection term
minus half of its adjoint, which is skew-symmetric identically (not just
up to quadrature).
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .elements import make_quadrature, p1_table, p1b_table
from .linalg import CooBuilder

DEFAULT_QUAD_DEGREE = 5

VELOCITY = "mini_velocity"
PRESSURE = "p1_pressure"
CONCENTRATION = "p1_concentration"
SCALAR = "p1_scalar"

_ROLE_FOR_KIND = {
    VELOCITY: "velocity",
    PRESSURE: "pressure",
    CONCENTRATION: "concentration",
    SCALAR: "concentration",
}


class AssemblyError(RuntimeError):
    """Assembly failed a precondition."""


class ViscosityBoundError(AssemblyError):
    """The viscosity left the admissible interval [kappa, 1/kappa]."""


# ---------------------------------------------------------------------------
# viscosity laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantViscosity:
    nu0: float = 1.0

    def value(self, c):
        return np.full_like(np.asarray(c, dtype=float), self.nu0)

    def derivative(self, c):
        return np.zeros_like(np.asarray(c, dtype=float))

    def spec_string(self):
        return f"const:{self.nu0:g}"


@dataclass(frozen=True)
class AffineViscosity:
    """nu = a + b * c."""

    a: float = 1.0
    b: float = 0.1

    def value(self, c):
        return self.a + self.b * np.asarray(c, dtype=float)

    def derivative(self, c):
        return np.full_like(np.asarray(c, dtype=float), self.b)

    def spec_string(self):
        return f"affine:{self.a:g}:{self.b:g}"


@dataclass(frozen=True)
class ExponentialViscosity:
    """nu = exp(c); only locally Lipschitz, so the assembly-time bound
    check on [kappa, 1/kappa] is what keeps runs honest."""

    def value(self, c):
        return np.exp(np.asarray(c, dtype=float))

    def derivative(self, c):
        return np.exp(np.asarray(c, dtype=float))

    def spec_string(self):
        return "exp"


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the bioconvection model.

    nu_law maps concentration to kinematic viscosity, theta is the
    diffusivity, gamma the relative density excess of the organisms, g the
    gravity magnitude, U the mean upward swimming speed, alpha the mean
    concentration of the unshifted problem, and kappa the admissible
    viscosity bound: nu must stay inside [kappa, 1/kappa].
    """

    nu_law: object = field(default_factory=ConstantViscosity)
    theta: float = 1.0
    gamma: float = 1.0
    g: float = 1.0
    U: float = 1.0
    alpha: float = 0.0
    kappa: float = 1e-3

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"theta must be positive, got {self.theta}")
        if not 0 < self.kappa <= 1:
            raise ValueError(f"kappa must lie in (0, 1], got {self.kappa}")
        if self.U < 0:
            raise ValueError(f"U must be nonnegative, got {self.U}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")


# ---------------------------------------------------------------------------
# spaces and fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeSpace:
    """Degree-of-freedom layout of one finite element space.

    eldofs holds the element-to-global map, one row per triangle; the mini
    velocity space has 8 columns (vertices then bubble, x component then
    y component), scalar spaces have 3.  Bubble dofs never appear in
    dirichlet_dofs since bubbles vanish on element boundaries.
    """

    kind: str
    mesh: object
    ndofs: int
    eldofs: np.ndarray
    dirichlet_dofs: np.ndarray

    @property
    def comp_offset(self):
        """Dof offset between velocity components (velocity spaces only)."""
        if self.kind != VELOCITY:
            raise AttributeError("comp_offset only applies to velocity spaces")
        return self.mesh.n_nodes + self.mesh.n_triangles


def mini_velocity_space(mesh, dirichlet_boundary=True):
    """Vector P1+bubble space; Dirichlet dofs are the boundary vertices of
    both components when dirichlet_boundary is set."""
    nn, nt = mesh.n_nodes, mesh.n_triangles
    off = nn + nt
    scal = np.hstack([mesh.triangles, (nn + np.arange(nt))[:, None]])
    eldofs = np.hstack([scal, scal + off]).astype(np.int64)
    if dirichlet_boundary:
        bnd = mesh.boundary_nodes
        dirichlet = np.sort(np.concatenate([bnd, bnd + off]))
    else:
        dirichlet = np.empty(0, dtype=np.int64)
    return FeSpace(VELOCITY, mesh, 2 * off, eldofs, dirichlet)


def p1_space(mesh, kind=SCALAR, dirichlet_boundary=False):
    """Continuous P1 space on the mesh vertices."""
    if kind not in (PRESSURE, CONCENTRATION, SCALAR):
        raise ValueError(f"not a P1 space kind: {kind}")
    dirichlet = (
        mesh.boundary_nodes.astype(np.int64)
        if dirichlet_boundary
        else np.empty(0, dtype=np.int64)
    )
    return FeSpace(kind, mesh, mesh.n_nodes, mesh.triangles, dirichlet)


@dataclass
class FieldCoeffs:
    """Coefficient vector attached to a space."""

    space: FeSpace
    coeffs: np.ndarray
    role: str = ""

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.ndofs,):
            raise ValueError(
                f"coefficient length {self.coeffs.shape} does not match "
                f"space with {self.space.ndofs} dofs"
            )
        if not self.role:
            self.role = _ROLE_FOR_KIND[self.space.kind]

    def copy(self):
        return FieldCoeffs(self.space, self.coeffs.copy(), self.role)


def zero_field(space):
    return FieldCoeffs(space, np.zeros(space.ndofs))


# ---------------------------------------------------------------------------
# per-mesh quadrature tables
# ---------------------------------------------------------------------------

class _Tables:
    def __init__(self, mesh, degree):
        rule = make_quadrature(degree)
        self.rule = rule
        self.wq = np.ascontiguousarray(rule.weights)
        self.p1_val, self.p1_part = p1_table(rule)
        self.p1b_val, self.p1b_part = p1b_table(rule)
        self.area = np.ascontiguousarray(mesh.areas)
        self.glam = np.ascontiguousarray(mesh.grad_lambda)
        # physical coordinates of the quadrature points, (nt, nq, 2)
        verts = mesh.nodes[mesh.triangles]
        self.qp_xy = np.einsum("qk,ekd->eqd", rule.points, verts)


def tables_for(mesh, degree=DEFAULT_QUAD_DEGREE):
    """Cached quadrature/geometry tables for a mesh."""
    cache = getattr(mesh, "_assembly_tables", None)
    if cache is None:
        cache = {}
        mesh._assembly_tables = cache
    if degree not in cache:
        cache[degree] = _Tables(mesh, degree)
    return cache[degree]


def _scalar_eldofs(space):
    """(nt, nloc) dof map and basis tables of the scalar block of a space."""
    t = tables_for(space.mesh)
    if space.kind == VELOCITY:
        return space.eldofs[:, :4], t.p1b_val, t.p1b_part
    return space.eldofs, t.p1_val, t.p1_part


def _velocity_at_qp(w):
    """Values of a velocity field at the quadrature points, (nt, nq, 2)."""
    if w.space.kind != VELOCITY:
        raise AssemblyError("advecting field must be a velocity field")
    t = tables_for(w.space.mesh)
    wx = kernels.field_at_qp(w.space.eldofs[:, :4], w.coeffs, t.p1b_val)
    wy = kernels.field_at_qp(w.space.eldofs[:, 4:], w.coeffs, t.p1b_val)
    return np.stack([wx, wy], axis=-1)


def _scatter_matrix(ndofs_row, ndofs_col, rows, cols, vals):
    builder = CooBuilder(ndofs_row, ndofs_col)
    builder.add_batch(rows.ravel(), cols.ravel(), vals.ravel())
    return builder.finalize()


def _scatter_square_blocks(space, local):
    """Scatter identical local blocks into every component of a space."""
    n = space.ndofs
    builder = CooBuilder(n, n)
    if space.kind == VELOCITY:
        comp_slices = (slice(0, 4), slice(4, 8))
    else:
        comp_slices = (slice(None),)
    for sl in comp_slices:
        dofs = space.eldofs[:, sl]
        rows = np.repeat(dofs, dofs.shape[1], axis=1)
        cols = np.tile(dofs, (1, dofs.shape[1]))
        builder.add_batch(rows.ravel(), cols.ravel(), local.ravel())
    return builder.finalize()


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

def assemble_mass(space):
    """Mass matrix (phi_i, phi_j); block-diagonal over velocity components."""
    t = tables_for(space.mesh)
    _, bval, _ = _scalar_eldofs(space)
    local = kernels.scalar_mass(t.area, t.wq, bval)
    return _scatter_square_blocks(space, local)


def _concentration_at_qp(c_field):
    if c_field.space.kind == VELOCITY:
        raise AssemblyError("expected a scalar concentration field")
    t = tables_for(c_field.space.mesh)
    return kernels.field_at_qp(c_field.space.eldofs, c_field.coeffs, t.p1_val)


def _checked_viscosity(c_q, params, tables):
    nu_q = params.nu_law.value(c_q + params.alpha)
    lo, hi = params.kappa, 1.0 / params.kappa
    bad = (nu_q < lo) | (nu_q > hi)
    if bad.any():
        e, q = np.unravel_index(np.argmax(bad), bad.shape)
        x, y = tables.qp_xy[e, q]
        raise ViscosityBoundError(
            f"viscosity {nu_q[e, q]:.6g} outside [{lo:g}, {hi:g}] at "
            f"({x:.6g}, {y:.6g}) in element {e}"
        )
    return nu_q


def assemble_stiffness_nu(vel_space, c_field, params):
    """Variable-viscosity stiffness (nu(c + alpha) grad u, grad v).

    The viscosity is evaluated pointwise at the quadrature points from the
    P1 interpolant of c and checked against [kappa, 1/kappa].
    """
    t = tables_for(vel_space.mesh)
    c_q = _concentration_at_qp(c_field)
    nu_q = _checked_viscosity(c_q, params, t)
    _, bval, bpart = _scalar_eldofs(vel_space)
    local = kernels.scalar_stiffness(t.area, t.glam, t.wq, bpart, nu_q)
    return _scatter_square_blocks(vel_space, local)


def assemble_scalar_stiffness(space, coefficient=1.0):
    """Scalar diffusion matrix coefficient * (grad phi_i, grad phi_j)."""
    t = tables_for(space.mesh)
    _, bval, bpart = _scalar_eldofs(space)
    nu_q = np.full((space.mesh.n_triangles, t.rule.n_points), float(coefficient))
    local = kernels.scalar_stiffness(t.area, t.glam, t.wq, bpart, nu_q)
    return _scatter_square_blocks(space, local)


def assemble_divergence(vel_space, p_space):
    """Divergence coupling, entry (i, j) = (div Phi_j, psi_i).

    Rows run over the pressure basis, columns over velocity dofs; the
    transpose provides the pressure-gradient block.
    """
    if vel_space.mesh is not p_space.mesh:
        raise AssemblyError("velocity and pressure spaces must share a mesh")
    t = tables_for(vel_space.mesh)
    local = kernels.divergence(t.area, t.glam, t.wq, t.p1_val, t.p1b_part)
    builder = CooBuilder(p_space.ndofs, vel_space.ndofs)
    for comp in (0, 1):
        cols = vel_space.eldofs[:, 4 * comp:4 * comp + 4]
        rows = np.repeat(p_space.eldofs[:, :, None], 4, axis=2)
        cols_b = np.repeat(cols[:, None, :], 3, axis=1)
        builder.add_batch(rows.ravel(), cols_b.ravel(), local[..., comp].ravel())
    return builder.finalize()


def assemble_convection_B(vel_space, w):
    """Skew-symmetric vector convection matrix for advecting field w.

    Realizes the symmetrized form: half of ((w . grad) u, v) minus half of
    ((w . grad) v, u).  The assembled matrix N satisfies N + N^T = 0
    identically, so z^T N z = 0 for every z.
    """
    t = tables_for(vel_space.mesh)
    w_eq = _velocity_at_qp(w)
    _, bval, bpart = _scalar_eldofs(vel_space)
    local = kernels.scalar_convection(t.area, t.glam, t.wq, bval, bpart, w_eq)
    return _scatter_square_blocks(vel_space, local)


def assemble_convection_b_scalar(c_space, w):
    """Skew-symmetric scalar convection matrix on concentration dofs."""
    if c_space.kind == VELOCITY:
        raise AssemblyError("expected a scalar space")
    t = tables_for(c_space.mesh)
    w_eq = _velocity_at_qp(w)
    local = kernels.scalar_convection(t.area, t.glam, t.wq, t.p1_val, t.p1_part, w_eq)
    return _scatter_square_blocks(c_space, local)


def assemble_buoyancy(vel_space, c_field, params):
    """Gravity load -g * ((1 + gamma c) i2, v); hits only the second
    velocity component."""
    t = tables_for(vel_space.mesh)
    c_q = _concentration_at_qp(c_field)
    f_eq = -params.g * (1.0 + params.gamma * c_q)
    local = kernels.scalar_load(t.area, t.wq, t.p1b_val, f_eq)
    out = np.zeros(vel_space.ndofs)
    np.add.at(out, vel_space.eldofs[:, 4:].ravel(), local.ravel())
    return out


def assemble_swim(c_space, params):
    """Upward-swimming terms.

    Returns (SwimMatrix, SwimConst): SwimMatrix has entries
    U * (phi_j, d phi_i / dy) and applies to the explicit concentration
    level; SwimConst has entries U * alpha * integral of d phi_i / dy.
    """
    if c_space.kind == VELOCITY:
        raise AssemblyError("expected a scalar space")
    t = tables_for(c_space.mesh)
    if params.U == 0.0:
        from scipy import sparse

        return sparse.csr_matrix((c_space.ndofs, c_space.ndofs)), np.zeros(c_space.ndofs)
    local_m = params.U * kernels.swim_matrix(t.area, t.glam, t.wq, t.p1_val, t.p1_part)
    mat = _scatter_square_blocks(c_space, local_m)
    local_v = params.U * params.alpha * kernels.dy_load(t.area, t.glam, t.wq, t.p1_part)
    vec = np.zeros(c_space.ndofs)
    np.add.at(vec, c_space.eldofs.ravel(), local_v.ravel())
    return mat, vec


def assemble_load_scalar(space, fn, t=None):
    """Load vector (f, phi_i) for a scalar function fn(x, y[, t])."""
    tb = tables_for(space.mesh)
    x, y = tb.qp_xy[..., 0], tb.qp_xy[..., 1]
    f_eq = np.asarray(fn(x, y) if t is None else fn(x, y, t), dtype=float)
    f_eq = np.broadcast_to(f_eq, x.shape).copy()
    _, bval, _ = _scalar_eldofs(space)
    dofs = space.eldofs if space.kind != VELOCITY else space.eldofs[:, :4]
    local = kernels.scalar_load(tb.area, tb.wq, bval, f_eq)
    out = np.zeros(space.ndofs)
    np.add.at(out, dofs.ravel(), local.ravel())
    return out


def assemble_load_velocity(space, fn, t=None):
    """Load vector (f, v) for a vector function fn(x, y[, t]) -> (..., 2)."""
    tb = tables_for(space.mesh)
    x, y = tb.qp_xy[..., 0], tb.qp_xy[..., 1]
    f_eq = np.asarray(fn(x, y) if t is None else fn(x, y, t), dtype=float)
    out = np.zeros(space.ndofs)
    for comp in (0, 1):
        comp_eq = np.ascontiguousarray(f_eq[..., comp])
        local = kernels.scalar_load(tb.area, tb.wq, tb.p1b_val, comp_eq)
        dofs = space.eldofs[:, 4 * comp:4 * comp + 4]
        np.add.at(out, dofs.ravel(), local.ravel())
    return out


def integral_weights(space):
    """Vector w with w_i = integral of phi_i; w . x is the integral of the
    P1 function with coefficients x."""
    if space.kind == VELOCITY:
        raise AssemblyError("integral weights only defined for scalar spaces")
    return assemble_load_scalar(space, lambda x, y: np.ones_like(x))


def apply_dirichlet(A, b, dofs, values):
    """Impose x[dofs] = values by symmetric elimination.

    Constrained rows and columns are zeroed, the diagonal set to 1, and
    known-value couplings are moved to the right-hand side.  Returns the
    modified (A, b); the inputs are not mutated.
    """
    from scipy import sparse

    dofs = np.asarray(dofs, dtype=np.int64)
    values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape)
    n = A.shape[0]
    if len(dofs) == 0:
        return A.copy(), np.array(b, dtype=float)
    if dofs.min() < 0 or dofs.max() >= n:
        raise IndexError("dirichlet dof index out of range")
    b2 = np.array(b, dtype=float)
    full = np.zeros(n)
    full[dofs] = values
    b2 -= A @ full
    keep = np.ones(n)
    keep[dofs] = 0.0
    mask = np.zeros(n)
    mask[dofs] = 1.0
    D_keep = sparse.diags(keep)
    A2 = (D_keep @ A @ D_keep + sparse.diags(mask)).tocsr()
    A2.sum_duplicates()
    A2.sort_indices()
    b2 *= keep
    b2[dofs] = values
    return A2, b2


# ---------------------------------------------------------------------------
# interpolation
# ---------------------------------------------------------------------------

def interpolate_p1(space, fn, t=None):
    """Nodal interpolant of a scalar function onto a P1 space."""
    x, y = space.mesh.nodes[:, 0], space.mesh.nodes[:, 1]
    vals = np.asarray(fn(x, y) if t is None else fn(x, y, t), dtype=float)
    return FieldCoeffs(space, np.broadcast_to(vals, (space.ndofs,)).copy())


def interpolate_velocity(space, fn, t=None):
    """Nodal interpolant of a vector function onto the mini space.

    Vertex dofs take the function values; each bubble dof is the residual
    at the element barycenter after subtracting the P1 part, so the
    interpolant matches the function at vertices and barycenters.
    """
    mesh = space.mesh
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    vv = np.asarray(fn(x, y) if t is None else fn(x, y, t), dtype=float)
    cx, cy = mesh.centroids[:, 0], mesh.centroids[:, 1]
    vc = np.asarray(fn(cx, cy) if t is None else fn(cx, cy, t), dtype=float)
    coeffs = np.empty(space.ndofs)
    off = space.comp_offset
    nn = mesh.n_nodes
    for comp in (0, 1):
        vertex_vals = vv[..., comp]
        p1_at_centroid = vertex_vals[mesh.triangles].mean(axis=1)
        coeffs[comp * off:comp * off + nn] = vertex_vals
        coeffs[comp * off + nn:(comp + 1) * off] = vc[..., comp] - p1_at_centroid
    return FieldCoeffs(space, coeffs, role="velocity")
