"""Discrete operators on the terrain-following grid.

Two families are provided.

* :class:`FDOperators` -- collocated second-order finite-difference
  derivatives in physical coordinates, obtained from the computational
  ``(xi, s)`` derivatives by the chain rule of the map ``z = s h(x)``.
* :class:`FVGeometry` -- vertex-centred median-dual control volumes (half
  cells on the boundary) with their face area vectors and face
  interpolation weights.  Face quantities are exact for fields that are
  linear in ``(x, z)``, so the discrete divergence of a linear field equals its
  exact divergence in every control volume.  The diffusion matrix is the
  symmetric linear-element stiffness on a triangulation of the cells.

All matrices act on "dof" vectors (see :meth:`Grid.to_dof`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import Grid, first_derivative_1d, second_derivative_1d


def _diag(v: np.ndarray) -> sp.dia_matrix:
    return sp.diags(np.asarray(v, dtype=float))


class FDOperators:
    """Physical-coordinate difference operators on dof nodes."""

    def __init__(self, grid: Grid):
        self.grid = grid
        ncol, ns = grid.ncol, grid.nz + 1
        Ix = sp.identity(ncol, format="csr")
        Is = sp.identity(ns, format="csr")
        d1x = first_derivative_1d(ncol, grid.dx, grid.periodic)
        d2x = second_derivative_1d(ncol, grid.dx, grid.periodic)
        d1s = first_derivative_1d(ns, grid.ds, False)
        d2s = second_derivative_1d(ns, grid.ds, False)

        self.Dxi = sp.kron(d1x, Is, format="csr")
        self.Ds = sp.kron(Ix, d1s, format="csr")
        self.Dxixi = sp.kron(d2x, Is, format="csr")
        self.Dss = sp.kron(Ix, d2s, format="csr")
        self.Dxis = sp.kron(d1x, d1s, format="csr")

        s = grid.to_dof(grid.S)
        h = grid.to_dof(grid.dzds)
        hp = grid.to_dof(np.repeat(grid.dhdx[:, None], ns, axis=1))
        hpp = grid.to_dof(np.repeat(grid.d2hdx2[:, None], ns, axis=1))
        alpha = -s * hp / h
        beta = 1.0 / h
        alpha_x = -s * hpp / h + 2.0 * s * hp**2 / h**2

        A, B = _diag(alpha), _diag(beta)
        self.Dx = (self.Dxi + A @ self.Ds).tocsr()
        self.Dz = (B @ self.Ds).tocsr()
        self.Dxx = (
            self.Dxixi + 2.0 * A @ self.Dxis + _diag(alpha**2) @ self.Dss + _diag(alpha_x) @ self.Ds
        ).tocsr()
        self.Dzz = (_diag(beta**2) @ self.Dss).tocsr()
        self.Dxz = (B @ self.Dxis - _diag(beta * hp / h) @ self.Ds + _diag(alpha * beta) @ self.Dss).tocsr()
        self.Lap = (self.Dxx + self.Dzz).tocsr()

    # convenience wrappers on node arrays

    def grad(self, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        g = self.grid
        v = g.to_dof(f)
        return g.from_dof(self.Dx @ v), g.from_dof(self.Dz @ v)

    def div(self, fx: np.ndarray, fz: np.ndarray) -> np.ndarray:
        g = self.grid
        return g.from_dof(self.Dx @ g.to_dof(fx) + self.Dz @ g.to_dof(fz))

    def lap(self, f: np.ndarray) -> np.ndarray:
        g = self.grid
        return g.from_dof(self.Lap @ g.to_dof(f))


@dataclass(frozen=True)
class FaceSet:
    """A group of faces sharing one storage layout.

    ``owner``/``neigh`` are dof indices (``neigh`` is -1 on boundary faces),
    ``ax``/``az`` the area vectors oriented from owner to neighbour (outward on
    the boundary) and ``interp`` maps nodal values to face-midpoint values.
    """

    owner: np.ndarray
    neigh: np.ndarray
    ax: np.ndarray
    az: np.ndarray
    interp: sp.csr_matrix
    kind: np.ndarray

    @property
    def size(self) -> int:
        return int(self.owner.size)

    def normal_flux(self, ux: np.ndarray, uz: np.ndarray) -> np.ndarray:
        """``u . A`` at every face, for dof vectors ``ux, uz``."""
        return self.ax * (self.interp @ ux) + self.az * (self.interp @ uz)


# boundary face kinds
BOTTOM_FACE, TOP_FACE, LEFT_FACE, RIGHT_FACE = 1, 2, 3, 4


class _Builder:
    """Accumulates faces as rows of an interpolation matrix."""

    def __init__(self, n: int):
        self.n = n
        self.owner: list[int] = []
        self.neigh: list[int] = []
        self.ax: list[float] = []
        self.az: list[float] = []
        self.kind: list[int] = []
        self._rows: tuple[list, list, list] = ([], [], [])

    def add(self, owner, neigh, ax, az, kind, interp):
        f = len(self.owner)
        self.owner.append(owner)
        self.neigh.append(neigh)
        self.ax.append(ax)
        self.az.append(az)
        self.kind.append(kind)
        r, c, v = self._rows
        for col, w in interp.items():
            r.append(f)
            c.append(col)
            v.append(w)

    def finish(self) -> FaceSet:
        nf = len(self.owner)

        r, c, v = self._rows
        return FaceSet(
            owner=np.asarray(self.owner, dtype=np.int64),
            neigh=np.asarray(self.neigh, dtype=np.int64),
            ax=np.asarray(self.ax, dtype=float),
            az=np.asarray(self.az, dtype=float),
            interp=sp.csr_matrix((v, (r, c)), shape=(nf, self.n)),
            kind=np.asarray(self.kind, dtype=np.int8),
        )


def _acc(d: dict, key: int, w: float) -> None:
    d[key] = d.get(key, 0.0) + w


class FVGeometry:
    """Median-dual control volumes and their faces."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self.n = grid.n_dof
        self._build()

    # -- construction --

    def _idx(self, i: int, j: int) -> int:
        g = self.grid
        if g.periodic:
            i %= g.nx
        return i * (g.nz + 1) + j

    def _row_weights(self, j: int) -> tuple[float, dict[int, float]]:
        """Midpoint ``s`` and row weights of the lateral segment of row ``j``."""
        nz, ds = self.grid.nz, self.grid.ds
        if j == 0:
            return 0.25 * ds, {0: 0.75, 1: 0.25}
        if j == nz:
            return 1.0 - 0.25 * ds, {nz: 0.75, nz - 1: 0.25}
        return j * ds, {j: 1.0}

    def _seg_len(self, j: int) -> float:
        ds = self.grid.ds
        return 0.5 * ds if j in (0, self.grid.nz) else ds

    def _build(self) -> None:
        g = self.grid
        nx, nz, dx, ds = g.nx, g.nz, g.dx, g.ds
        h = np.asarray(g.h)
        ncol = g.ncol

        def hcol(i: int) -> float:
            return float(h[i % nx]) if g.periodic else float(h[i])

        # volumes
        vol = np.zeros(self.n)
        for i in range(ncol):
            pieces = []
            if g.periodic or i > 0:
                pieces.append(0.5 * dx * (3.0 * hcol(i) + hcol(i - 1)) / 4.0)
            if g.periodic or i < nx:
                pieces.append(0.5 * dx * (3.0 * hcol(i) + hcol(i + 1)) / 4.0)
            colw = sum(pieces)
            for j in range(nz + 1):
                vol[self._idx(i, j)] = colw * self._seg_len(j)
        self.volume = vol

        inner = _Builder(self.n)
        bnd = _Builder(self.n)

        # xi-faces between columns i and i+1
        for i in range(nx):
            ip = i + 1
            hbar = 0.5 * (hcol(i) + hcol(ip))
            for j in range(nz + 1):
                _, rw = self._row_weights(j)
                interp: dict[int, float] = {}
                for jj, w in rw.items():
                    _acc(interp, self._idx(i, jj), 0.5 * w)
                    _acc(interp, self._idx(ip, jj), 0.5 * w)
                inner.add(self._idx(i, j), self._idx(ip, j), hbar * self._seg_len(j), 0.0, 0, interp)

        # s-faces between rows j and j+1, split in a left and a right piece
        for i in range(ncol):
            for side in (-1, 1):
                if not g.periodic and (i + side < 0 or i + side > nx):
                    continue
                io = i + side
                dh = 0.5 * (hcol(io) - hcol(i)) * side  # rise over the piece in +x direction
                for j in range(nz):
                    sf = (j + 0.5) * ds
                    interp = {}
                    for col, wc in ((i, 0.75), (io, 0.25)):
                        _acc(interp, self._idx(col, j), 0.5 * wc)
                        _acc(interp, self._idx(col, j + 1), 0.5 * wc)
                    # area vector of the piece with upward orientation
                    inner.add(self._idx(i, j), self._idx(i, j + 1), -sf * dh, 0.5 * dx, 0, interp)

                # bottom and top boundary pieces
                for j, kind in ((0, BOTTOM_FACE), (nz, TOP_FACE)):
                    P = self._idx(i, j)
                    interp = {self._idx(i, j): 0.75}
                    _acc(interp, self._idx(io, j), 0.25)
                    if kind == BOTTOM_FACE:
                        ax, az = 0.0, -0.5 * dx
                    else:
                        ax, az = -dh, 0.5 * dx
                    bnd.add(P, -1, ax, az, kind, interp)

        # lateral boundary segments in traction mode
        if not g.periodic:
            for i, sgn, kind in ((0, -1.0, LEFT_FACE), (nx, 1.0, RIGHT_FACE)):
                for j in range(nz + 1):
                    _, rw = self._row_weights(j)
                    interp = {self._idx(i, jj): w for jj, w in rw.items()}
                    bnd.add(self._idx(i, j), -1, sgn * hcol(i) * self._seg_len(j), 0.0, kind, interp)

        self.inner = inner.finish()
        self.boundary = bnd.finish()

        n = self.n
        fi, fb = self.inner, self.boundary
        ri = np.arange(fi.size)
        # incidence: +1 owner, -1 neighbour (net outflow of each control volume)
        self.inc_inner = sp.csr_matrix(
            (np.r_[np.ones(fi.size), -np.ones(fi.size)], (np.r_[fi.owner, fi.neigh], np.r_[ri, ri])),
            shape=(n, fi.size),
        )
        self.inc_bnd = sp.csr_matrix(
            (np.ones(fb.size), (fb.owner, np.arange(fb.size))), shape=(n, fb.size)
        )

    # -- operators --

    def net_outflow(self, ux: np.ndarray, uz: np.ndarray) -> np.ndarray:
        """Discrete ``integral of div(u)`` over every control volume (dof vectors)."""
        return self.inc_inner @ self.inner.normal_flux(ux, uz) + self.inc_bnd @ self.boundary.normal_flux(ux, uz)

    def divergence(self, ux: np.ndarray, uz: np.ndarray) -> np.ndarray:
        """Control-volume averaged divergence on dof nodes."""
        return self.net_outflow(ux, uz) / self.volume

    def divergence_nodes(self, fx: np.ndarray, fz: np.ndarray) -> np.ndarray:
        g = self.grid
        return g.from_dof(self.divergence(g.to_dof(fx), g.to_dof(fz)))

    def diffusion_matrix(self, coeff: float | np.ndarray = 1.0) -> sp.csr_matrix:
        """Symmetric matrix of ``-integral div(k grad c)`` with zero flux on the boundary.

        Linear-element stiffness on the two triangles of every mapped cell
        (diagonal from lower-left to upper-right).  On rectangular cells the
        diagonal couplings vanish and the usual five-point stencil remains.
        ``coeff`` is a scalar or a nodal dof array, averaged per triangle.
        """
        tri, area, b, c = self._triangles()
        k = np.broadcast_to(np.asarray(coeff, dtype=float), (self.n,))
        kt = k[tri].mean(axis=1) / (4.0 * area)
        rows = np.repeat(tri, 3, axis=1).reshape(-1)
        cols = np.tile(tri, (1, 3)).reshape(-1)
        vals = (kt[:, None, None] * (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :])).reshape(-1)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))

    def _triangles(self):
        if not hasattr(self, "_tri_cache"):
            g = self.grid
            X, Z = np.asarray(g.X), np.asarray(g.Z)
            I, J = np.meshgrid(np.arange(g.nx), np.arange(g.nz), indexing="ij")
            I, J = I.reshape(-1), J.reshape(-1)
            sw, se, ne, nw = (I, J), (I + 1, J), (I + 1, J + 1), (I, J + 1)
            corners = [(sw, se, ne), (sw, ne, nw)]
            tri, px, pz = [], [], []
            for t in corners:
                tri.append(np.stack([self._idx_vec(*v) for v in t], axis=1))
                px.append(np.stack([X[v] for v in t], axis=1))
                pz.append(np.stack([Z[v] for v in t], axis=1))
            tri, px, pz = np.vstack(tri), np.vstack(px), np.vstack(pz)
            b = np.roll(pz, -1, axis=1) - np.roll(pz, -2, axis=1)
            c = np.roll(px, -2, axis=1) - np.roll(px, -1, axis=1)
            area = 0.5 * (px[:, 0] * b[:, 0] + px[:, 1] * b[:, 1] + px[:, 2] * b[:, 2])
            self._tri_cache = (tri, area, b, c)
        return self._tri_cache

    def _idx_vec(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        g = self.grid
        if g.periodic:
            i = i % g.nx
        return i * (g.nz + 1) + j

    def upwind_matrix(self, ux: np.ndarray, uz: np.ndarray) -> tuple[sp.csr_matrix, np.ndarray]:
        """Upwind matrix of ``integral div(u f)`` over inner faces.

        Returns the matrix and the inner-face fluxes ``q = u . A`` used.
        """
        fi = self.inner
        q = fi.normal_flux(ux, uz)
        qp, qm = np.maximum(q, 0.0), np.minimum(q, 0.0)
        rows = np.r_[fi.owner, fi.owner, fi.neigh, fi.neigh]
        cols = np.r_[fi.owner, fi.neigh, fi.owner, fi.neigh]
        vals = np.r_[qp, qm, -qp, -qm]
        M = sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))
        return M, q

    def boundary_flux(self, ux: np.ndarray, uz: np.ndarray) -> np.ndarray:
        """Outward ``u . A`` on every boundary face."""
        return self.boundary.normal_flux(ux, uz)
