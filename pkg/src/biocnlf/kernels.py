"""Element-loop kernels for finite element assembly.

These inner loops dominate runtime: the viscous stiffness, the convection
matrices and the buoyancy load are rebuilt on every time step.  Two
interchangeable implementations are provided:

* a numba ``@njit`` backend (default when numba imports), and
* a vectorized pure-numpy fallback.

The backend is selected once at import time from the ``BIOCNLF_BACKEND``
environment variable ("numba" or "numpy").  ``benchmarks/bench_kernels.py``
compares the two.

Kernel conventions: ``area`` (nt,), ``glam`` (nt, 3, 2) barycentric
gradients, ``wq`` (nq,) reference weights summing to 1/2, ``bval``
(nq, nb) basis values, ``bpart`` (nq, nb, 3) barycentric partials.  The
physical gradient of basis f on element e at point q is
``sum_k bpart[q, f, k] * glam[e, k]``, and physical integrals carry the
factor ``2 * area[e]``.
"""

import os
import warnings

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

KERNEL_NAMES = (
    "scalar_mass",
    "scalar_stiffness",
    "scalar_convection",
    "divergence",
    "scalar_load",
    "dy_load",
    "swim_matrix",
    "field_at_qp",
    "field_grad_at_qp",
)


# ---------------------------------------------------------------------------
# pure-numpy backend
# ---------------------------------------------------------------------------

def _scalar_mass_numpy(area, wq, bval):
    ref = np.einsum("q,qi,qj->ij", wq, bval, bval)
    return 2.0 * area[:, None, None] * ref[None, :, :]


def _scalar_stiffness_numpy(area, glam, wq, bpart, nu_eq):
    g = np.einsum("qfk,ekd->eqfd", bpart, glam)
    s = np.einsum("q,eq,eqid,eqjd->eij", wq, nu_eq, g, g)
    return 2.0 * area[:, None, None] * s


def _scalar_convection_numpy(area, glam, wq, bval, bpart, w_eq):
    g = np.einsum("qfk,ekd->eqfd", bpart, glam)
    a = np.einsum("eqd,eqfd->eqf", w_eq, g)  # advecting field dotted with grads
    n1 = np.einsum("q,eqj,qi->eij", wq, a, bval)
    n1 *= 2.0 * area[:, None, None]
    return 0.5 * (n1 - n1.transpose(0, 2, 1))


def _divergence_numpy(area, glam, wq, pval, vpart):
    g = np.einsum("qfk,ekd->eqfd", vpart, glam)
    d = np.einsum("q,qi,eqjd->eijd", wq, pval, g)
    return 2.0 * area[:, None, None, None] * d


def _scalar_load_numpy(area, wq, bval, f_eq):
    load = np.einsum("q,eq,qi->ei", wq, f_eq, bval)
    return 2.0 * area[:, None] * load


def _dy_load_numpy(area, glam, wq, bpart):
    g = np.einsum("qfk,ekd->eqfd", bpart, glam)
    load = np.einsum("q,eqi->ei", wq, g[..., 1])
    return 2.0 * area[:, None] * load


def _swim_matrix_numpy(area, glam, wq, bval, bpart):
    g = np.einsum("qfk,ekd->eqfd", bpart, glam)
    m = np.einsum("q,qj,eqi->eij", wq, bval, g[..., 1])
    return 2.0 * area[:, None, None] * m


def _field_at_qp_numpy(eldofs, coeffs, bval):
    local = coeffs[eldofs]
    return np.einsum("ef,qf->eq", local, bval)


def _field_grad_at_qp_numpy(eldofs, coeffs, glam, bpart):
    local = coeffs[eldofs]
    g = np.einsum("qfk,ekd->eqfd", bpart, glam)
    return np.einsum("ef,eqfd->eqd", local, g)


_NUMPY_IMPLS = {
    "scalar_mass": _scalar_mass_numpy,
    "scalar_stiffness": _scalar_stiffness_numpy,
    "scalar_convection": _scalar_convection_numpy,
    "divergence": _divergence_numpy,
    "scalar_load": _scalar_load_numpy,
    "dy_load": _dy_load_numpy,
    "swim_matrix": _swim_matrix_numpy,
    "field_at_qp": _field_at_qp_numpy,
    "field_grad_at_qp": _field_grad_at_qp_numpy,
}


# ---------------------------------------------------------------------------
# explicit-loop backend (compiled with numba when available)
# ---------------------------------------------------------------------------

def _scalar_mass_loop(area, wq, bval):
    nt = area.shape[0]
    nq, nb = bval.shape
    out = np.zeros((nt, nb, nb))
    for e in range(nt):
        scale = 2.0 * area[e]
        for q in range(nq):
            w = scale * wq[q]
            for i in range(nb):
                for j in range(nb):
                    out[e, i, j] += w * bval[q, i] * bval[q, j]
    return out


def _scalar_stiffness_loop(area, glam, wq, bpart, nu_eq):
    nt = area.shape[0]
    nq, nb, _ = bpart.shape
    out = np.zeros((nt, nb, nb))
    g = np.empty((nb, 2))
    for e in range(nt):
        scale = 2.0 * area[e]
        for q in range(nq):
            for f in range(nb):
                gx = 0.0
                gy = 0.0
                for k in range(3):
                    gx += bpart[q, f, k] * glam[e, k, 0]
                    gy += bpart[q, f, k] * glam[e, k, 1]
                g[f, 0] = gx
                g[f, 1] = gy
            w = scale * wq[q] * nu_eq[e, q]
            for i in range(nb):
                for j in range(nb):
                    out[e, i, j] += w * (g[i, 0] * g[j, 0] + g[i, 1] * g[j, 1])
    return out


def _scalar_convection_loop(area, glam, wq, bval, bpart, w_eq):
    nt = area.shape[0]
    nq, nb, _ = bpart.shape
    out = np.zeros((nt, nb, nb))
    adv = np.empty(nb)
    for e in range(nt):
        scale = 2.0 * area[e]
        for q in range(nq):
            wx = w_eq[e, q, 0]
            wy = w_eq[e, q, 1]
            for f in range(nb):
                gx = 0.0
                gy = 0.0
                for k in range(3):
                    gx += bpart[q, f, k] * glam[e, k, 0]
                    gy += bpart[q, f, k] * glam[e, k, 1]
                adv[f] = wx * gx + wy * gy
            w = scale * wq[q]
            # antisymmetric accumulation keeps N + N^T identically zero
            for i in range(nb):
                for j in range(i + 1, nb):
                    val = 0.5 * w * (adv[j] * bval[q, i] - adv[i] * bval[q, j])
                    out[e, i, j] += val
                    out[e, j, i] -= val
    return out


def _divergence_loop(area, glam, wq, pval, vpart):
    nt = area.shape[0]
    nqp, nbp = pval.shape
    nbv = vpart.shape[1]
    out = np.zeros((nt, nbp, nbv, 2))
    for e in range(nt):
        scale = 2.0 * area[e]
        for q in range(nqp):
            w = scale * wq[q]
            for j in range(nbv):
                gx = 0.0
                gy = 0.0
                for k in range(3):
                    gx += vpart[q, j, k] * glam[e, k, 0]
                    gy += vpart[q, j, k] * glam[e, k, 1]
                for i in range(nbp):
                    out[e, i, j, 0] += w * pval[q, i] * gx
                    out[e, i, j, 1] += w * pval[q, i] * gy
    return out


def _scalar_load_loop(area, wq, bval, f_eq):
    nt = area.shape[0]
    nq, nb = bval.shape
    out = np.zeros((nt, nb))
    for e in range(nt):
        scale = 2.0 * area[e]
        for q in range(nq):
            w = scale * wq[q] * f_eq[e, q]
            for i in range(nb):
                out[e, i] += w * bval[q, i]
    return out


def _dy_load_loop(area, glam, wq, bpart):
    nt = area.shape[0]
    nq, nb, _ = bpart.shape
    out = np.zeros((nt, nb))
    for e in range(nt):
        scale = 2.0 * area[e]
        for q in range(nq):
            w = scale * wq[q]
            for i in range(nb):
                gy = 0.0
                for k in range(3):
                    gy += bpart[q, i, k] * glam[e, k, 1]
                out[e, i] += w * gy
    return out


def _swim_matrix_loop(area, glam, wq, bval, bpart):
    nt = area.shape[0]
    nq, nb, _ = bpart.shape
    out = np.zeros((nt, nb, nb))
    for e in range(nt):
        scale = 2.0 * area[e]
        for q in range(nq):
            w = scale * wq[q]
            for i in range(nb):
                gy = 0.0
                for k in range(3):
                    gy += bpart[q, i, k] * glam[e, k, 1]
                for j in range(nb):
                    out[e, i, j] += w * bval[q, j] * gy
    return out


def _field_at_qp_loop(eldofs, coeffs, bval):
    nt, nb = eldofs.shape
    nq = bval.shape[0]
    out = np.zeros((nt, nq))
    for e in range(nt):
        for q in range(nq):
            acc = 0.0
            for f in range(nb):
                acc += coeffs[eldofs[e, f]] * bval[q, f]
            out[e, q] = acc
    return out


def _field_grad_at_qp_loop(eldofs, coeffs, glam, bpart):
    nt, nb = eldofs.shape
    nq = bpart.shape[0]
    out = np.zeros((nt, nq, 2))
    for e in range(nt):
        for q in range(nq):
            ax = 0.0
            ay = 0.0
            for f in range(nb):
                cf = coeffs[eldofs[e, f]]
                gx = 0.0
                gy = 0.0
                for k in range(3):
                    gx += bpart[q, f, k] * glam[e, k, 0]
                    gy += bpart[q, f, k] * glam[e, k, 1]
                ax += cf * gx
                ay += cf * gy
            out[e, q, 0] = ax
            out[e, q, 1] = ay
    return out


_LOOP_IMPLS = {
    "scalar_mass": _scalar_mass_loop,
    "scalar_stiffness": _scalar_stiffness_loop,
    "scalar_convection": _scalar_convection_loop,
    "divergence": _divergence_loop,
    "scalar_load": _scalar_load_loop,
    "dy_load": _dy_load_loop,
    "swim_matrix": _swim_matrix_loop,
    "field_at_qp": _field_at_qp_loop,
    "field_grad_at_qp": _field_grad_at_qp_loop,
}

IMPLS = {"numpy": _NUMPY_IMPLS}
if numba is not None:
    IMPLS["numba"] = {
        name: numba.njit(cache=True)(fn) for name, fn in _LOOP_IMPLS.items()
    }


def _resolve_backend():
    requested = os.environ.get("BIOCNLF_BACKEND", "").strip().lower()
    if requested and requested not in ("numba", "numpy"):
        raise ValueError(
            f"BIOCNLF_BACKEND={requested!r} is not valid; use 'numba' or 'numpy'"
        )
    if not requested:
        requested = "numba" if numba is not None else "numpy"
    if requested == "numba" and numba is None:
        warnings.warn("numba not importable; falling back to the numpy backend")
        requested = "numpy"
    return requested


BACKEND = _resolve_backend()

scalar_mass = IMPLS[BACKEND]["scalar_mass"]
scalar_stiffness = IMPLS[BACKEND]["scalar_stiffness"]
scalar_convection = IMPLS[BACKEND]["scalar_convection"]
divergence = IMPLS[BACKEND]["divergence"]
scalar_load = IMPLS[BACKEND]["scalar_load"]
dy_load = IMPLS[BACKEND]["dy_load"]
swim_matrix = IMPLS[BACKEND]["swim_matrix"]
field_at_qp = IMPLS[BACKEND]["field_at_qp"]
field_grad_at_qp = IMPLS[BACKEND]["field_grad_at_qp"]
