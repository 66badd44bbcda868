"""Element-level assembly kernels.

These inner loops dominate the runtime of both solvers, so each kernel has
two implementations: a numba ``@njit`` version and a pure-numpy einsum
version.  The active backend is selected once at import time from the
environment variable ``POROHOM_NUMBA`` ("1" = numba when importable,
"0" = numpy).  ``benchmarks/bench_kernels.py`` times the two against each
other.

Index conventions used throughout the package:

* vector dofs are node-major, ``dof = 2 * node + comp``;
* a fourth-order tensor ``A[i, j, k, l]`` acts on a displacement gradient
  ``G[k, l] = du_k/dx_l`` and is tested against ``dv_i/dx_j``, i.e. the
  element matrix is ``K[(a,i),(b,k)] = sum_q w A_ijkl dN_a/dx_j dN_b/dx_l``;
* the scalar-vector coupling form ``int q M:grad(u)`` has scalar test rows
  and vector trial columns.
"""

import os

import numpy as np

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("POROHOM_NUMBA", "1") != "0"


# ---------------------------------------------------------------------------
# numpy implementations


def stiffness4_np(a4, dndx, wdet):
    """K[(a,i),(b,k)] = sum_q w A_ijkl dN_a/dx_j dN_b/dx_l.

    a4: (ne, nq, 2, 2, 2, 2), dndx: (ne, nq, nen, 2), wdet: (ne, nq)
    returns (ne, 2*nen, 2*nen)
    """
    ke = np.einsum("eqijkl,eqaj,eqbl,eq->eaibk", a4, dndx, dndx, wdet, optimize=True)
    ne, nen = dndx.shape[0], dndx.shape[2]
    return np.ascontiguousarray(ke.reshape(ne, 2 * nen, 2 * nen))


def lap2_np(m2, dndx, wdet):
    """K[a,b] = sum_q w M_ij dN_a/dx_i dN_b/dx_j (rows = test)."""
    return np.einsum("eqij,eqai,eqbj,eq->eab", m2, dndx, dndx, wdet, optimize=True)


def coupling_np(m2, shp, dndx, wdet):
    """B[a,(b,k)] = sum_q w N_a M_kj dN_b/dx_j (scalar rows, vector cols)."""
    be = np.einsum("qa,eqkj,eqbj,eq->eabk", shp, m2, dndx, wdet, optimize=True)
    ne, nen = dndx.shape[0], dndx.shape[2]
    return np.ascontiguousarray(be.reshape(ne, nen, 2 * nen))


def mass_np(coef, shp, wdet):
    """M[a,b] = sum_q w c N_a N_b."""
    return np.einsum("qa,qb,eq,eq->eab", shp, shp, coef, wdet, optimize=True)


def neo_hookean_np(f, mu):
    """Batched plane-strain neo-Hookean stress and tangent.

    f: (n, 2, 2) in-plane deformation gradients (F33 = 1), mu: (n,).
    Returns (sigma (n,2,2), d4 (n,2,2,2,2), jdet (n,)).
    """
    jdet = f[:, 0, 0] * f[:, 1, 1] - f[:, 0, 1] * f[:, 1, 0]
    b = np.einsum("nik,njk->nij", f, f)
    trb = b[:, 0, 0] + b[:, 1, 1] + 1.0
    coef = mu * jdet ** (-5.0 / 3.0)
    eye = np.eye(2)
    sigma = coef[:, None, None] * (b - (trb / 3.0)[:, None, None] * eye)

    c2 = 2.0 * coef
    ii = np.einsum("ik,jl->ijkl", eye, eye)
    ii_t = np.einsum("il,jk->ijkl", eye, eye)
    i_x_i = np.einsum("ij,kl->ijkl", eye, eye)
    b_x_i = np.einsum("nij,kl->nijkl", b, eye)
    i_x_b = np.einsum("ij,nkl->nijkl", eye, b)
    d4 = c2[:, None, None, None, None] * (
        (trb / 6.0)[:, None, None, None, None] * (ii + ii_t)
        + (trb / 9.0)[:, None, None, None, None] * i_x_i
        - (b_x_i + i_x_b) / 3.0
    )
    return sigma, d4, jdet


def tangent_a4_np(d4, sigma, p):
    """A_ijkl = D_ijkl + delta_ik sigma_jl - p (delta_ij delta_kl - delta_il delta_jk)."""
    eye = np.eye(2)
    a4 = d4 + np.einsum("ik,...jl->...ijkl", eye, sigma)
    a4 -= p[..., None, None, None, None] * (
        np.einsum("ij,kl->ijkl", eye, eye) - np.einsum("il,jk->ijkl", eye, eye)
    )
    return a4


# ---------------------------------------------------------------------------
# numba implementations

if HAS_NUMBA:

    @numba.njit(cache=True, nogil=True)
    def stiffness4_nb(a4, dndx, wdet):
        ne, nq, nen = dndx.shape[0], dndx.shape[1], dndx.shape[2]
        ke = np.zeros((ne, 2 * nen, 2 * nen))
        for e in range(ne):
            for q in range(nq):
                w = wdet[e, q]
                for a in range(nen):
                    for i in range(2):
                        for b in range(nen):
                            for k in range(2):
                                acc = 0.0
                                for j in range(2):
                                    for l in range(2):
                                        acc += (
                                            a4[e, q, i, j, k, l]
                                            * dndx[e, q, a, j]
                                            * dndx[e, q, b, l]
                                        )
                                ke[e, 2 * a + i, 2 * b + k] += w * acc
        return ke

    @numba.njit(cache=True, nogil=True)
    def lap2_nb(m2, dndx, wdet):
        ne, nq, nen = dndx.shape[0], dndx.shape[1], dndx.shape[2]
        ke = np.zeros((ne, nen, nen))
        for e in range(ne):
            for q in range(nq):
                w = wdet[e, q]
                for a in range(nen):
                    for b in range(nen):
                        acc = 0.0
                        for i in range(2):
                            for j in range(2):
                                acc += m2[e, q, i, j] * dndx[e, q, a, i] * dndx[e, q, b, j]
                        ke[e, a, b] += w * acc
        return ke

    @numba.njit(cache=True, nogil=True)
    def coupling_nb(m2, shp, dndx, wdet):
        ne, nq, nen = dndx.shape[0], dndx.shape[1], dndx.shape[2]
        be = np.zeros((ne, nen, 2 * nen))
        for e in range(ne):
            for q in range(nq):
                w = wdet[e, q]
                for a in range(nen):
                    na = shp[q, a]
                    for b in range(nen):
                        for k in range(2):
                            acc = 0.0
                            for j in range(2):
                                acc += m2[e, q, k, j] * dndx[e, q, b, j]
                            be[e, a, 2 * b + k] += w * na * acc
        return be

    @numba.njit(cache=True, nogil=True)
    def mass_nb(coef, shp, wdet):
        ne, nq = wdet.shape
        nen = shp.shape[1]
        ke = np.zeros((ne, nen, nen))
        for e in range(ne):
            for q in range(nq):
                w = wdet[e, q] * coef[e, q]
                for a in range(nen):
                    for b in range(nen):
                        ke[e, a, b] += w * shp[q, a] * shp[q, b]
        return ke

    @numba.njit(cache=True, nogil=True)
    def neo_hookean_nb(f, mu):
        n = f.shape[0]
        sigma = np.zeros((n, 2, 2))
        d4 = np.zeros((n, 2, 2, 2, 2))
        jdet = np.zeros(n)
        for m in range(n):
            j = f[m, 0, 0] * f[m, 1, 1] - f[m, 0, 1] * f[m, 1, 0]
            jdet[m] = j
            if j <= 0.0:
                continue
            b00 = f[m, 0, 0] ** 2 + f[m, 0, 1] ** 2
            b01 = f[m, 0, 0] * f[m, 1, 0] + f[m, 0, 1] * f[m, 1, 1]
            b11 = f[m, 1, 0] ** 2 + f[m, 1, 1] ** 2
            trb = b00 + b11 + 1.0
            coef = mu[m] * j ** (-5.0 / 3.0)
            sigma[m, 0, 0] = coef * (b00 - trb / 3.0)
            sigma[m, 0, 1] = coef * b01
            sigma[m, 1, 0] = coef * b01
            sigma[m, 1, 1] = coef * (b11 - trb / 3.0)
            bmat = np.empty((2, 2))
            bmat[0, 0] = b00
            bmat[0, 1] = b01
            bmat[1, 0] = b01
            bmat[1, 1] = b11
            c2 = 2.0 * coef
            for i in range(2):
                for jj in range(2):
                    for k in range(2):
                        for l in range(2):
                            val = 0.0
                            if i == k and jj == l:
                                val += trb / 6.0
                            if i == l and jj == k:
                                val += trb / 6.0
                            if i == jj and k == l:
                                val += trb / 9.0
                            if k == l:
                                val -= bmat[i, jj] / 3.0
                            if i == jj:
                                val -= bmat[k, l] / 3.0
                            d4[m, i, jj, k, l] = c2 * val
        return sigma, d4, jdet


# ---------------------------------------------------------------------------
# dispatch

if USE_NUMBA:
    stiffness4 = stiffness4_nb
    lap2 = lap2_nb
    coupling = coupling_nb
    mass = mass_nb
    neo_hookean_batch = neo_hookean_nb
else:
    stiffness4 = stiffness4_np
    lap2 = lap2_np
    coupling = coupling_np
    mass = mass_np
    neo_hookean_batch = neo_hookean_np

tangent_a4 = tangent_a4_np


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
