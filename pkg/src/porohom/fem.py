"""Finite element kernel: quadrature, constrained spaces, forms, sparse solves.

Constraint handling uses a reduction operator per space: raw dofs relate to
reduced dofs through ``u_raw = T x + g`` where ``T`` folds periodic slaves
onto their masters and drops Dirichlet dofs, and ``g`` carries the Dirichlet
values.  Reduced systems are then ``T' K T x = T' (f - K g)``, optionally
bordered by zero-mean multiplier rows.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .errors import AssemblyError, InvertedElementError, SolverError

# reference-element quadrature and shape functions -------------------------

_GP = 1.0 / np.sqrt(3.0)
_QUAD_QP = np.array([[-_GP, -_GP], [_GP, -_GP], [_GP, _GP], [-_GP, _GP]])
_QUAD_QW = np.ones(4)
_TRI_QP = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
_TRI_QW = np.full(3, 1 / 6)


def _shape_quad(xi):
    x, y = xi[:, 0], xi[:, 1]
    n = 0.25 * np.stack(
        [(1 - x) * (1 - y), (1 + x) * (1 - y), (1 + x) * (1 + y), (1 - x) * (1 + y)], axis=1
    )
    dn = 0.25 * np.stack(
        [
            np.stack([-(1 - y), -(1 - x)], axis=1),
            np.stack([(1 - y), -(1 + x)], axis=1),
            np.stack([(1 + y), (1 + x)], axis=1),
            np.stack([-(1 + y), (1 - x)], axis=1),
        ],
        axis=1,
    )
    return n, dn


def _shape_tri(xi):
    x, y = xi[:, 0], xi[:, 1]
    n = np.stack([1 - x - y, x, y], axis=1)
    dn = np.broadcast_to(
        np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]), (len(xi), 3, 2)
    ).copy()
    return n, dn


class QuadData:
    """Per-element quadrature data on the current nodal coordinates."""

    def __init__(self, mesh, coords=None):
        self.mesh = mesh
        self.coords = mesh.nodes if coords is None else np.asarray(coords, dtype=float)
        nen = mesh.nodes_per_elem
        if nen == 4:
            qp, qw = _QUAD_QP, _QUAD_QW
            self.N, dN = _shape_quad(qp)
        elif nen == 3:
            qp, qw = _TRI_QP, _TRI_QW
            self.N, dN = _shape_tri(qp)
        else:
            raise AssemblyError(f"unsupported element with {nen} nodes")
        x = self.coords[mesh.elems]  # (ne, nen, 2)
        jac = np.einsum("eai,qaj->eqij", x, dN)
        det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
        if np.any(det <= 0):
            bad = int(np.argwhere(det <= 0)[0, 0])
            raise InvertedElementError(
                f"non-positive Jacobian in element {bad}", element=bad
            )
        inv = np.empty_like(jac)
        inv[..., 0, 0] = jac[..., 1, 1] / det
        inv[..., 0, 1] = -jac[..., 0, 1] / det
        inv[..., 1, 0] = -jac[..., 1, 0] / det
        inv[..., 1, 1] = jac[..., 0, 0] / det
        # dN_a/dx_i = dN_a/dxi_j * (J^-1)_ji
        self.dndx = np.ascontiguousarray(np.einsum("qaj,eqji->eqai", dN, inv))
        self.wdet = np.ascontiguousarray(det * qw[None, :])
        self.qpoints = np.einsum("qa,eai->eqi", self.N, x)
        self.nq = len(qw)
        self.nen = nen

    @property
    def n_elems(self):
        return self.mesh.n_elems

    def interp_scalar(self, nodal, elems=None):
        conn = self.mesh.elems if elems is None else self.mesh.elems[elems]
        return np.einsum("qa,ea->eq", self.N, nodal[conn])

    def grad_scalar(self, nodal, elems=None):
        dndx = self.dndx if elems is None else self.dndx[elems]
        conn = self.mesh.elems if elems is None else self.mesh.elems[elems]
        return np.einsum("eqai,ea->eqi", dndx, nodal[conn])

    def interp_vector(self, nodal, elems=None):
        conn = self.mesh.elems if elems is None else self.mesh.elems[elems]
        return np.einsum("qa,eai->eqi", self.N, nodal[conn])

    def grad_vector(self, nodal, elems=None):
        """G_ij = du_i/dx_j at every quadrature point."""
        dndx = self.dndx if elems is None else self.dndx[elems]
        conn = self.mesh.elems if elems is None else self.mesh.elems[elems]
        return np.einsum("eqaj,eai->eqij", dndx, nodal[conn])

    def integrate(self, field, elems=None):
        wdet = self.wdet if elems is None else self.wdet[elems]
        return np.einsum("eq...,eq->...", field, wdet)

    def area(self, elems=None):
        wdet = self.wdet if elems is None else self.wdet[elems]
        return float(wdet.sum())


# constrained spaces --------------------------------------------------------


class FeSpace:
    """Scalar or vector nodal space with periodic and Dirichlet constraints.

    ``nn`` counts the (local) nodes of the space; for spaces living on a
    submesh the caller maps global mesh nodes to local ones.  Raw dofs are
    node-major: ``dof = node * ncomp + comp``.
    """

    def __init__(self, nn, ncomp=1, master_map=None, fixed=()):
        self.nn = int(nn)
        self.ncomp = int(ncomp)
        self.nraw = self.nn * self.ncomp
        root = np.arange(self.nn, dtype=np.int64)
        if master_map is not None:
            root = np.asarray(master_map, dtype=np.int64).copy()
            for _ in range(64):
                nxt = root[root]
                if np.array_equal(nxt, root):
                    break
                root = nxt
        self.root = root

        fixed_dofs = np.zeros(self.nraw, dtype=bool)
        for nodes, comp in fixed:
            nodes = np.asarray(nodes, dtype=np.int64)
            fixed_dofs[self.root[nodes] * self.ncomp + comp] = True
            fixed_dofs[nodes * self.ncomp + comp] = True
        # a slave inherits the constraint state of its root
        for c in range(self.ncomp):
            fixed_dofs[np.arange(self.nn) * self.ncomp + c] |= fixed_dofs[
                self.root * self.ncomp + c
            ]
        self.fixed = fixed_dofs

        red_of_root = -np.ones(self.nraw, dtype=np.int64)
        nred = 0
        for node in range(self.nn):
            if self.root[node] != node:
                continue
            for c in range(self.ncomp):
                d = node * self.ncomp + c
                if not fixed_dofs[d]:
                    red_of_root[d] = nred
                    nred += 1
        self.nred = nred

        rows, cols = [], []
        for node in range(self.nn):
            r = self.root[node]
            for c in range(self.ncomp):
                d = node * self.ncomp + c
                rd = red_of_root[r * self.ncomp + c]
                if rd >= 0:
                    rows.append(d)
                    cols.append(rd)
        self.T = sp.coo_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(self.nraw, nred)
        ).tocsr()

    def lift(self, values=()):
        """Raw vector of Dirichlet values: list of (nodes, comp, value(s))."""
        g = np.zeros(self.nraw)
        for nodes, comp, val in values:
            nodes = np.asarray(nodes, dtype=np.int64)
            g[nodes * self.ncomp + comp] = val
            g[self.root[nodes] * self.ncomp + comp] = val
        g[~self.fixed] = 0.0
        return g

    def expand(self, x, g=None):
        u = self.T @ x
        if g is not None:
            u = u + g
        return u.reshape(self.nn, self.ncomp) if self.ncomp > 1 else u


# raw form assembly ----------------------------------------------------------


def _dof_array(conn, ncomp):
    if ncomp == 1:
        return conn
    ne, nen = conn.shape
    dofs = np.empty((ne, nen * ncomp), dtype=np.int64)
    for c in range(ncomp):
        dofs[:, c::ncomp] = conn * ncomp + c
    return dofs


def _to_csr(ke, rows_dofs, cols_dofs, shape):
    ne, nr, nc = ke.shape
    rows = np.repeat(rows_dofs, nc, axis=1).ravel()
    cols = np.tile(cols_dofs, (1, nr)).ravel()
    return sp.coo_matrix((ke.ravel(), (rows, cols)), shape=shape).tocsr()


def _subset(qdat, elems):
    if elems is None:
        return qdat.mesh.elems, qdat.dndx, qdat.wdet
    return qdat.mesh.elems[elems], qdat.dndx[elems], qdat.wdet[elems]


def assemble_form_a(qdat, a4, scale=1.0):
    """Stiffness of the tangent form over the whole mesh: int A grad(u):grad(v)."""
    if a4.shape[:2] != qdat.wdet.shape:
        raise AssemblyError("tangent field shape does not match quadrature data")
    ke = kernels.stiffness4(a4, qdat.dndx, qdat.wdet * scale)
    dofs = _dof_array(qdat.mesh.elems, 2)
    n = 2 * len(qdat.coords)
    return _to_csr(ke, dofs, dofs, (n, n))


def assemble_form_b(qdat, elems, bbar, node_map, n_rows, scale=1.0):
    """Coupling int_region q [B(ubar)+I]:grad(u); scalar rows, vector columns."""
    conn, dndx, wdet = _subset(qdat, elems)
    rows = node_map[conn]
    if np.any(rows < 0):
        raise AssemblyError("region element touches a node outside the scalar space")
    be = kernels.coupling(bbar, qdat.N, dndx, wdet * scale)
    cols = _dof_array(conn, 2)
    return _to_csr(be, rows, cols, (n_rows, 2 * len(qdat.coords)))


def assemble_form_c(qdat, elems, keff, node_map, n, scale=1.0, check_pd=False):
    """Diffusion int_region [K + H(ubar)] grad(p).grad(q) on a scalar subspace."""
    if check_pd:
        tr = keff[..., 0, 0] + keff[..., 1, 1]
        det = keff[..., 0, 0] * keff[..., 1, 1] - keff[..., 0, 1] * keff[..., 1, 0]
        bad = (tr <= 0) | (det <= 0)
        if np.any(bad):
            e, q = np.argwhere(bad)[0]
            import warnings

            warnings.warn(
                f"effective permeability not positive definite at element "
                f"{int(e)} qp {int(q)}; proceeding"
            )
    conn, dndx, wdet = _subset(qdat, elems)
    rows = node_map[conn]
    if np.any(rows < 0):
        raise AssemblyError("region element touches a node outside the scalar space")
    ke = kernels.lap2(keff, dndx, wdet * scale)
    return _to_csr(ke, rows, rows, (n, n))


def assemble_form_d(qdat, elems, dkeff, node_map, n, scale=1.0):
    """Permeability-increment form; the zero matrix when dK = 0."""
    if dkeff is None or not np.any(dkeff):
        return sp.csr_matrix((n, n))
    return assemble_form_c(qdat, elems, dkeff, node_map, n, scale)


def assemble_mass(qdat, elems, coef, node_map, n, scale=1.0):
    conn, _, wdet = _subset(qdat, elems)
    rows = node_map[conn]
    ke = kernels.mass(coef, qdat.N, wdet * scale)
    return _to_csr(ke, rows, rows, (n, n))


def load_stress(qdat, sfield, elems=None, scale=1.0):
    """f[(a,i)] = int S_ij dN_a/dx_j over the (sub)mesh; raw vector space."""
    conn, dndx, wdet = _subset(qdat, elems)
    fe = np.einsum("eqij,eqaj,eq->eai", sfield, dndx, wdet * scale)
    f = np.zeros(2 * len(qdat.coords))
    np.add.at(f, _dof_array(conn, 2).ravel(), fe.reshape(len(conn), -1).ravel())
    return f


def load_body(qdat, fvec, scale=1.0):
    """int f . v for a constant body force."""
    conn, _, wdet = _subset(qdat, None)
    fe = np.einsum("qa,eq,i->eai", qdat.N, wdet * scale, np.asarray(fvec, float))
    f = np.zeros(2 * len(qdat.coords))
    np.add.at(f, _dof_array(conn, 2).ravel(), fe.reshape(len(conn), -1).ravel())
    return f


def load_scalar(qdat, coef, node_map, n, elems=None, scale=1.0):
    """int c q over a scalar subspace."""
    conn, _, wdet = _subset(qdat, elems)
    fe = np.einsum("qa,eq,eq->ea", qdat.N, coef, wdet * scale)
    f = np.zeros(n)
    np.add.at(f, node_map[conn].ravel(), fe.ravel())
    return f


def load_grad_scalar(qdat, gvec, node_map, n, elems=None, scale=1.0):
    """int g . grad(q) over a scalar subspace."""
    conn, dndx, wdet = _subset(qdat, elems)
    fe = np.einsum("eqi,eqai,eq->ea", gvec, dndx, wdet * scale)
    f = np.zeros(n)
    np.add.at(f, node_map[conn].ravel(), fe.ravel())
    return f


def node_volumes(qdat, node_map, n, elems=None, scale=1.0):
    """int N_a per local scalar node (used for zero-mean constraint rows)."""
    ones = np.ones(qdat.wdet.shape if elems is None else qdat.wdet[elems].shape)
    return load_scalar(qdat, ones, node_map, n, elems, scale)


def facet_traction_load(mesh, coords, facets, traction):
    """int t . v over tagged facets (2-pt trapezoid, exact for P1 traces)."""
    f = np.zeros(2 * len(coords))
    t = np.asarray(traction, float)
    for a, b in np.asarray(facets, dtype=np.int64):
        length = float(np.linalg.norm(coords[b] - coords[a]))
        for node in (a, b):
            f[2 * node : 2 * node + 2] += 0.5 * length * t
    return f


# block systems --------------------------------------------------------------


class AssembledSystem:
    """Reduced sparse system with block layout bookkeeping."""

    def __init__(self, matrix, rhs, slices, n_mult=0, suspects=""):
        self.matrix = matrix
        self.rhs = rhs
        self.slices = slices
        self.n_mult = n_mult
        self.suspects = suspects


class BlockSystem:
    """Coupled multi-field system assembled from raw blocks and reductions."""

    def __init__(self, spaces):
        self.spaces = list(spaces)
        nb = len(self.spaces)
        self.blocks = [[None] * nb for _ in range(nb)]
        self.multipliers = []  # (block index, raw row vector)
        self._matrix = None

    def set_block(self, i, j, k_raw):
        self.blocks[i][j] = k_raw
        self._matrix = None

    def add_multiplier(self, i, m_raw):
        self.multipliers.append((i, np.asarray(m_raw, float)))
        self._matrix = None

    def _offsets(self):
        offs = [0]
        for s in self.spaces:
            offs.append(offs[-1] + s.nred)
        return offs

    def matrix(self):
        if self._matrix is not None:
            return self._matrix
        nb = len(self.spaces)
        red = [[None] * nb for _ in range(nb)]
        for i in range(nb):
            for j in range(nb):
                if self.blocks[i][j] is not None:
                    red[i][j] = self.spaces[i].T.T @ self.blocks[i][j] @ self.spaces[j].T
        a = sp.bmat(red, format="csr")
        if self.multipliers:
            offs = self._offsets()
            n = offs[-1]
            nm = len(self.multipliers)
            rows, cols, vals = [], [], []
            for k, (i, m_raw) in enumerate(self.multipliers):
                m_red = self.spaces[i].T.T @ m_raw
                idx = np.nonzero(m_red)[0]
                rows.extend([n + k] * len(idx))
                cols.extend(offs[i] + idx)
                vals.extend(m_red[idx])
            border = sp.coo_matrix((vals, (rows, cols)), shape=(n + nm, n + nm))
            a = sp.bmat(
                [[a, None], [None, sp.csr_matrix((nm, nm))]], format="csr"
            ) + border + border.T
        self._matrix = a.tocsr()
        return self._matrix

    def rhs(self, f_raw=None, g_raw=None):
        """Reduced right-hand side from raw loads and Dirichlet lifts."""
        nb = len(self.spaces)
        f_raw = f_raw or [None] * nb
        g_raw = g_raw or [None] * nb
        parts = []
        for i in range(nb):
            r = np.zeros(self.spaces[i].nraw)
            if f_raw[i] is not None:
                r = r + f_raw[i]
            for j in range(nb):
                if self.blocks[i][j] is not None and g_raw[j] is not None:
                    r = r - self.blocks[i][j] @ g_raw[j]
            parts.append(self.spaces[i].T.T @ r)
        for i, m_raw in self.multipliers:
            val = 0.0
            if g_raw[i] is not None:
                val = -float(m_raw @ g_raw[i])
            parts.append(np.array([val]))
        return np.concatenate(parts)

    def expand(self, x, g_raw=None):
        nb = len(self.spaces)
        g_raw = g_raw or [None] * nb
        offs = self._offsets()
        fields = []
        for i, s in enumerate(self.spaces):
            fields.append(s.expand(x[offs[i] : offs[i + 1]], g_raw[i]))
        mult = x[offs[-1] :]
        return fields, mult

    def system(self, f_raw=None, g_raw=None, suspects=""):
        offs = self._offsets()
        slices = [slice(offs[i], offs[i + 1]) for i in range(len(self.spaces))]
        return AssembledSystem(
            self.matrix(), self.rhs(f_raw, g_raw), slices,
            n_mult=len(self.multipliers), suspects=suspects,
        )


def factorize(matrix, suspects=""):
    try:
        return spla.splu(sp.csc_matrix(matrix))
    except RuntimeError as exc:
        hint = f" (suspect null space: {suspects})" if suspects else ""
        raise SolverError(f"sparse factorization failed: {exc}{hint}") from exc


def solve_checked(lu, matrix, b, suspects=""):
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        hint = f" (suspect null space: {suspects})" if suspects else ""
        raise SolverError(f"solution contains non-finite entries{hint}")
    norm_a = np.sqrt((matrix.data**2).sum())
    res = matrix @ x - b
    nb = np.linalg.norm(b, axis=0)
    nx = np.linalg.norm(x, axis=0)
    nr = np.linalg.norm(res, axis=0)
    if np.any(nr > 1e-9 * (norm_a * nx + nb) + 1e-300):
        hint = f" (suspect null space: {suspects})" if suspects else ""
        raise SolverError(
            f"residual check failed: {np.max(nr):.3e} vs scale "
            f"{np.max(norm_a * nx + nb):.3e}{hint}"
        )
    return x


def solve_sparse(system):
    """Direct sparse solve with a relative-residual contract of 1e-9."""
    lu = factorize(system.matrix, system.suspects)
    return solve_checked(lu, system.matrix, system.rhs, system.suspects)
