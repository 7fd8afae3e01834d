"""Triangular meshes of axis-aligned rectangles.

Only structured meshes are generated: each cell of an nx-by-ny grid is cut
into two triangles along the same lower-left to upper-right diagonal.  Node
and triangle ordering is a pure function of (nx, ny, domain), so repeated
calls produce bitwise-identical meshes.
"""

import numpy as np

BOUNDARY_TOL = 1e-12


class MeshError(ValueError):
    """Invalid mesh request (degenerate domain, bad element index, ...)."""


class TriMesh:
    """Conforming triangulation of a rectangle.

    Attributes
    ----------
    nodes : (n_nodes, 2) float array
        Vertex coordinates.
    triangles : (n_triangles, 3) int array
        Vertex indices of each element, counter-clockwise.
    boundary_nodes : (k,) int array
        Sorted indices of the nodes lying on the rectangle boundary
        (classified by coordinate comparison with BOUNDARY_TOL).
    h_max : float
        Maximum element diameter.
    domain : (x0, y0, x1, y1)
        Rectangle bounds.

    Instances are immutable after construction and safe to share between
    threads for read-only queries.
    """

    def __init__(self, nodes, triangles, domain):
        self.nodes = np.array(nodes, dtype=float)
        self.triangles = np.array(triangles, dtype=np.int64)
        self.domain = tuple(float(v) for v in domain)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise MeshError("nodes must be an (n, 2) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError("triangles must be an (m, 3) array")
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.nodes)
        ):
            raise MeshError("triangle vertex index out of range")

        self._areas, self._grad_lambda = self._compute_geometry()
        if np.any(self._areas <= 0.0):
            bad = int(np.argmin(self._areas))
            raise MeshError(
                f"triangle {bad} has non-positive signed area {self._areas[bad]}"
            )

        x0, y0, x1, y1 = self.domain
        x, y = self.nodes[:, 0], self.nodes[:, 1]
        on_edge = (
            (np.abs(x - x0) <= BOUNDARY_TOL)
            | (np.abs(x - x1) <= BOUNDARY_TOL)
            | (np.abs(y - y0) <= BOUNDARY_TOL)
            | (np.abs(y - y1) <= BOUNDARY_TOL)
        )
        self.is_boundary = on_edge
        self.boundary_nodes = np.flatnonzero(on_edge)

        edges = self.nodes[self.triangles] - self.nodes[np.roll(self.triangles, -1, axis=1)]
        self.diameters = np.sqrt((edges**2).sum(axis=2)).max(axis=1)
        self.h_max = float(self.diameters.max()) if len(self.diameters) else 0.0

        for arr in (self.nodes, self.triangles, self.is_boundary,
                    self.boundary_nodes, self._areas, self._grad_lambda,
                    self.diameters):
            arr.setflags(write=False)

    def _compute_geometry(self):
        v0 = self.nodes[self.triangles[:, 0]]
        v1 = self.nodes[self.triangles[:, 1]]
        v2 = self.nodes[self.triangles[:, 2]]
        d1 = v1 - v0
        d2 = v2 - v0
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]  # 2 * signed area
        areas = 0.5 * det
        # grad(lambda_i) is perpendicular to the opposite edge, scaled by 1/(2A)
        grad = np.empty((len(self.triangles), 3, 2))
        with np.errstate(divide="ignore", invalid="ignore"):
            grad[:, 0, 0] = (v1[:, 1] - v2[:, 1]) / det
            grad[:, 0, 1] = (v2[:, 0] - v1[:, 0]) / det
            grad[:, 1, 0] = (v2[:, 1] - v0[:, 1]) / det
            grad[:, 1, 1] = (v0[:, 0] - v2[:, 0]) / det
            grad[:, 2, 0] = (v0[:, 1] - v1[:, 1]) / det
            grad[:, 2, 1] = (v1[:, 0] - v0[:, 0]) / det
        return areas, grad

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def areas(self):
        """Element areas, shape (n_triangles,)."""
        return self._areas

    @property
    def grad_lambda(self):
        """Constant barycentric gradients, shape (n_triangles, 3, 2)."""
        return self._grad_lambda

    @property
    def centroids(self):
        return self.nodes[self.triangles].mean(axis=1)


def generate_uniform(nx, ny, domain=(0.0, 0.0, 1.0, 1.0)):
    """Generate a structured mesh of a rectangle.

    Each of the nx*ny cells is split into two triangles along its
    lower-left to upper-right diagonal, giving (nx+1)*(ny+1) nodes and
    2*nx*ny elements, all with diameter equal to the cell diagonal.

    Parameters
    ----------
    nx, ny : int
        Number of cells in each direction, at least 1.
    domain : (x0, y0, x1, y1)
        Rectangle bounds; must have positive width and height.
    """
    nx, ny = int(nx), int(ny)
    if nx < 1 or ny < 1:
        raise MeshError(f"nx and ny must be >= 1, got ({nx}, {ny})")
    x0, y0, x1, y1 = (float(v) for v in domain)
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"degenerate domain {domain}")

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    xv, yv = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([xv.ravel(), yv.ravel()])  # x varies fastest

    tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
    k = 0
    for j in range(ny):
        for i in range(nx):
            n00 = j * (nx + 1) + i
            n10 = n00 + 1
            n01 = n00 + (nx + 1)
            n11 = n01 + 1
            tris[k] = (n00, n10, n11)
            tris[k + 1] = (n00, n11, n01)
            k += 2
    return TriMesh(nodes, tris, (x0, y0, x1, y1))


def element_geometry(mesh, k):
    """Area and barycentric gradients of triangle k.

    Returns
    -------
    area : float
    grad_lambda : (3, 2) array
        Constant gradient of each barycentric coordinate; the three
        gradients sum to (0, 0).
    """
    k = int(k)
    if not 0 <= k < mesh.n_triangles:
        raise MeshError(f"element index {k} out of range [0, {mesh.n_triangles})")
    return float(mesh.areas[k]), mesh.grad_lambda[k]


def write_mesh(mesh, target):
    """Dump a mesh in the plain-text debug format.

    Format: one header line ``nodes <N> triangles <M>``, then N lines
    ``x y is_boundary`` and M lines ``i j k`` with 0-based indices.
    """
    lines = [f"nodes {mesh.n_nodes} triangles {mesh.n_triangles}"]
    for (x, y), b in zip(mesh.nodes, mesh.is_boundary):
        lines.append(f"{x:.17g} {y:.17g} {1 if b else 0}")
    for i, j, k in mesh.triangles:
        lines.append(f"{i} {j} {k}")
    text = "\n".join(lines) + "\n"
    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w", encoding="utf-8") as fh:
            fh.write(text)
