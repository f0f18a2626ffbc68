"""Circuit-level crossbar model via nodal analysis of the full wire network.

Every cell joins a row-wire node and a column-wire node through the
device law; neighbouring nodes on a line are linked by r_wire, row k is
driven by V_k through r_source, and each column is terminated through
r_sink into ground. Zero-valued parasitics are treated as exact shorts
by merging nodes, so the parasitic-free limit reproduces the ideal dot
product without conditioning tricks.

For the linear device law the map V -> sink currents is linear, so a
programmed array reduces to an effective transfer matrix (one sparse
factorization plus one solve per row); nonlinear laws go through damped
Newton iteration on the same assembly.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from ..errors import ConfigError, MappingError, NumericalError
from .config import CrossbarConfig, ideal_mvm
from .device import parse_device_model

_REL_TOL = 1e-10
_MAX_NEWTON = 100


class CrossbarNetwork:
    """A programmed crossbar with its assembled resistive network.

    Node ids: row-wire node (k, j) -> k*M + j; column-wire node (k, j) ->
    N*M + k*M + j; source terminal k -> 2*N*M + k; ground -> 2*N*M + N.
    """

    def __init__(self, g: np.ndarray, config: CrossbarConfig):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != (config.rows, config.cols):
            raise MappingError(
                f"conductance matrix {g.shape} does not match "
                f"{config.rows}x{config.cols} crossbar")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ConfigError("conductances must be finite and >= 0")
        self.config = config
        self.g = g
        self.device = parse_device_model(config.device_model)
        self._build_topology()
        self._assemble_static()
        self._lu = None
        self._transfer = None

    # ------------------------------------------------------------------
    # topology
    # ------------------------------------------------------------------
    def _build_topology(self):
        n, m = self.config.rows, self.config.cols
        nm = n * m
        self.n_nodes = 2 * nm + n + 1
        self._gnd = 2 * nm + n

        row_ids = np.arange(nm).reshape(n, m)
        col_ids = nm + row_ids
        src_ids = 2 * nm + np.arange(n)

        # parasitic edge groups: (u, v, resistance)
        groups = []
        groups.append((src_ids, row_ids[:, 0], self.config.r_source))
        if m > 1:
            groups.append((row_ids[:, :-1].ravel(), row_ids[:, 1:].ravel(),
                           self.config.r_wire))
        if n > 1:
            groups.append((col_ids[:-1, :].ravel(), col_ids[1:, :].ravel(),
                           self.config.r_wire))
        groups.append((col_ids[n - 1, :], np.full(m, self._gnd), self.config.r_sink))

        merge_u, merge_v = [], []
        cond_u, cond_v, cond_g = [], [], []
        for u, v, r in groups:
            u = np.asarray(u, dtype=np.int64).ravel()
            v = np.asarray(v, dtype=np.int64).ravel()
            if r == 0.0:
                merge_u.append(u)
                merge_v.append(v)
            else:
                cond_u.append(u)
                cond_v.append(v)
                cond_g.append(np.full(u.size, 1.0 / r))

        # merged-node labels (exact shorts)
        if merge_u:
            mu = np.concatenate(merge_u)
            mv = np.concatenate(merge_v)
            adj = sp.coo_matrix((np.ones(mu.size), (mu, mv)),
                                shape=(self.n_nodes, self.n_nodes))
            _, comp = connected_components(adj, directed=False)
        else:
            comp = np.arange(self.n_nodes)
        self.comp = comp
        n_comp = comp.max() + 1

        # terminal assignment per component
        term = np.full(n_comp, -1, dtype=np.int64)
        for k in range(n):
            c = comp[src_ids[k]]
            if term[c] not in (-1, k):
                raise ConfigError("zero-resistance path shorts two terminals")
            term[c] = k
        cg = comp[self._gnd]
        if term[cg] != -1:
            raise ConfigError("zero-resistance path shorts a source to ground")
        term[cg] = n  # ground terminal index
        self.term = term
        self._gnd_comp = cg

        unknown = np.where(term == -1)[0]
        uidx = np.full(n_comp, -1, dtype=np.int64)
        uidx[unknown] = np.arange(unknown.size)
        self.uidx = uidx
        self.n_unknown = unknown.size

        if cond_u:
            self._par_u = np.concatenate(cond_u)
            self._par_v = np.concatenate(cond_v)
            self._par_g = np.concatenate(cond_g)
        else:
            self._par_u = np.zeros(0, dtype=np.int64)
            self._par_v = np.zeros(0, dtype=np.int64)
            self._par_g = np.zeros(0, dtype=np.float64)

        self._dev_u = row_ids.ravel()
        self._dev_v = col_ids.ravel()
        self._row_ids = row_ids
        self._col_ids = col_ids
        self._src_ids = src_ids

    def _stamp(self, u, v, g):
        """Laplacian + boundary stamps for conductive edges -> (A, C) COO parts."""
        n_term = self.config.rows + 1
        cu, cv = self.comp[u], self.comp[v]
        live = cu != cv
        cu, cv, g = cu[live], cv[live], g[live]
        iu, iv = self.uidx[cu], self.uidx[cv]
        tu, tv = self.term[cu], self.term[cv]

        ai, aj, av = [], [], []
        ci, cj, cv_ = [], [], []

        uu = (iu >= 0) & (iv >= 0)
        ai += [iu[uu], iv[uu], iu[uu], iv[uu]]
        aj += [iu[uu], iv[uu], iv[uu], iu[uu]]
        av += [g[uu], g[uu], -g[uu], -g[uu]]

        uf = (iu >= 0) & (iv < 0)
        ai.append(iu[uf]); aj.append(iu[uf]); av.append(g[uf])
        ci.append(iu[uf]); cj.append(tv[uf]); cv_.append(g[uf])

        fu = (iu < 0) & (iv >= 0)
        ai.append(iv[fu]); aj.append(iv[fu]); av.append(g[fu])
        ci.append(iv[fu]); cj.append(tu[fu]); cv_.append(g[fu])

        a = sp.coo_matrix((np.concatenate(av), (np.concatenate(ai), np.concatenate(aj))),
                          shape=(self.n_unknown, self.n_unknown))
        c = sp.coo_matrix((np.concatenate(cv_), (np.concatenate(ci), np.concatenate(cj))),
                          shape=(self.n_unknown, n_term))
        return a.tocsc(), c.tocsr()

    def _assemble_static(self):
        self._a_par, self._c_par = self._stamp(self._par_u, self._par_v, self._par_g)
        self._build_extraction()

    def _build_extraction(self):
        """Sparse maps from (x, source voltages) to column and source currents."""
        n, m = self.config.rows, self.config.cols
        nm = n * m
        ex_i, ex_j, ex_v = [], [], []
        ep = np.zeros((m, n))

        if self.config.r_sink > 0:
            g_sink = 1.0 / self.config.r_sink
            bottoms = self.uidx[self.comp[self._col_ids[n - 1, :]]]
            if np.any(bottoms < 0):  # column merged into a terminal: impossible here
                raise NumericalError("column sense node merged into a terminal")
            ex_i = [np.arange(m)]
            ex_j = [bottoms]
            ex_v = [np.full(m, g_sink)]
        else:
            # ground-merged column nodes: attribute incoming edge currents per column
            all_u = np.concatenate([self._par_u, self._dev_u])
            all_v = np.concatenate([self._par_v, self._dev_v])
            all_g = np.concatenate([self._par_g, self.g.ravel()])
            for e, o in ((all_u, all_v), (all_v, all_u)):
                in_gnd = (self.comp[e] == self._gnd_comp) & (e >= nm) & (e < 2 * nm)
                if not np.any(in_gnd):
                    continue
                j = (e[in_gnd] - nm) % m
                other = o[in_gnd]
                ge = all_g[in_gnd]
                co = self.comp[other]
                keep = co != self._gnd_comp
                j, other, ge, co = j[keep], other[keep], ge[keep], co[keep]
                io, to = self.uidx[co], self.term[co]
                unk = io >= 0
                ex_i.append(j[unk]); ex_j.append(io[unk]); ex_v.append(ge[unk])
                fx = (~unk) & (to < n)  # fixed at a source potential
                np.add.at(ep, (j[fx], to[fx]), ge[fx])

        if ex_i:
            self._ex = sp.coo_matrix(
                (np.concatenate(ex_v), (np.concatenate(ex_i), np.concatenate(ex_j))),
                shape=(m, self.n_unknown)).tocsr()
        else:
            self._ex = sp.csr_matrix((m, self.n_unknown))
        self._ep = ep

        # source-side extraction, for current-conservation checks
        sx_i, sx_j, sx_v = [], [], []
        sp_mat = np.zeros((n, n))
        if self.config.r_source > 0:
            g_src = 1.0 / self.config.r_source
            tops = self.uidx[self.comp[self._row_ids[:, 0]]]
            sx_i = [np.arange(n)]
            sx_j = [tops]
            sx_v = [np.full(n, -g_src)]
            sp_mat[np.arange(n), np.arange(n)] = g_src
        else:
            all_u = np.concatenate([self._par_u, self._dev_u])
            all_v = np.concatenate([self._par_v, self._dev_v])
            all_g = np.concatenate([self._par_g, self.g.ravel()])
            for e, o in ((all_u, all_v), (all_v, all_u)):
                te = self.term[self.comp[e]]
                from_src = (te >= 0) & (te < n)
                if not np.any(from_src):
                    continue
                k = te[from_src]
                other = o[from_src]
                ge = all_g[from_src]
                co = self.comp[other]
                keep = self.term[co] != k  # drop intra-group edges
                k, other, ge, co = k[keep], other[keep], ge[keep], co[keep]
                np.add.at(sp_mat, (k, k), ge)
                io, to = self.uidx[co], self.term[co]
                unk = io >= 0
                sx_i.append(k[unk]); sx_j.append(io[unk]); sx_v.append(-ge[unk])
                fx = (~unk) & (to < n)
                np.add.at(sp_mat, (k[fx], to[fx]), -ge[fx])

        if sx_i:
            self._sx = sp.coo_matrix(
                (np.concatenate(sx_v), (np.concatenate(sx_i), np.concatenate(sx_j))),
                shape=(n, self.n_unknown)).tocsr()
        else:
            self._sx = sp.csr_matrix((n, self.n_unknown))
        self._sp = sp_mat

    # ------------------------------------------------------------------
    # linear path
    # ------------------------------------------------------------------
    def _linear_system(self):
        a_dev, c_dev = self._stamp(self._dev_u, self._dev_v, self.g.ravel())
        return self._a_par + a_dev, self._c_par + c_dev

    def _factorize(self):
        if self._lu is None and not hasattr(self, "_c_lin"):
            a, c = self._linear_system()
            self._c_lin = c
            if self.n_unknown:
                # isolated unknowns (no conductive path at all) stay at 0 V
                diag = a.diagonal()
                dead = np.where(diag == 0)[0]
                if dead.size:
                    a = a + sp.coo_matrix(
                        (np.ones(dead.size), (dead, dead)),
                        shape=a.shape).tocsc()
                self._lu = splu(a.tocsc())

    def _solve_linear_potentials(self, vb: np.ndarray) -> np.ndarray:
        """Unknown-group potentials for a (batch, rows) voltage array."""
        self._factorize()
        if self.n_unknown == 0:
            return np.zeros((vb.shape[0], 0))
        rhs = self._c_lin[:, :self.config.rows] @ vb.T  # (n_unknown, batch)
        return self._lu.solve(np.asarray(rhs)).T

    def solve(self, v) -> np.ndarray:
        """Column sink currents for source voltages ``v`` (vector or batch)."""
        v = np.asarray(v, dtype=np.float64)
        single = v.ndim == 1
        vb = v[None, :] if single else v
        if vb.shape[1] != self.config.rows:
            raise MappingError(
                f"voltage length {vb.shape[1]} does not match {self.config.rows} rows")
        if self.device.linear:
            x = self._solve_linear_potentials(vb)
            out = (self._ex @ x.T).T + vb @ self._ep.T
        else:
            out = np.stack([self._solve_newton(vv)[0] for vv in vb])
        return out[0] if single else out

    def source_currents(self, v) -> np.ndarray:
        """Per-row currents delivered by the sources (for conservation checks)."""
        v = np.asarray(v, dtype=np.float64)
        if self.device.linear:
            x = self._solve_linear_potentials(v[None, :])[0]
            return self._sx @ x + self._sp @ v
        _, x = self._solve_newton(v)
        return self._sx @ x + self._sp @ v

    def transfer_matrix(self) -> np.ndarray:
        """Effective (cols x rows) linear map V -> I; linear devices only."""
        if not self.device.linear:
            raise NumericalError("transfer matrix requires the linear device law")
        if self._transfer is None:
            n = self.config.rows
            self._factorize()
            if self.n_unknown == 0:
                x = np.zeros((0, n))
            else:
                x = self._lu.solve(self._c_lin[:, :n].toarray())
            self._transfer = self._ex @ x + self._ep
        return self._transfer

    # ------------------------------------------------------------------
    # nonlinear path
    # ------------------------------------------------------------------
    def _potentials(self, x: np.ndarray, v_src: np.ndarray) -> np.ndarray:
        """Per-component potential vector from unknowns and terminal values."""
        p = np.zeros(self.term.size)
        fixed = self.term >= 0
        vals = np.concatenate([v_src, [0.0]])
        p[fixed] = vals[self.term[fixed]]
        p[self.uidx >= 0] = x
        return p

    def _device_drop(self, phi: np.ndarray) -> np.ndarray:
        return phi[self.comp[self._dev_u]] - phi[self.comp[self._dev_v]]

    def _residual(self, x: np.ndarray, v_src: np.ndarray) -> float:
        phi = self._potentials(x, v_src)
        vd = self._device_drop(phi)
        i_dev = self.device.current(self.g.ravel(), vd)
        r = self._a_par @ x - self._c_par[:, :self.config.rows] @ v_src
        iu = self.uidx[self.comp[self._dev_u]]
        iv = self.uidx[self.comp[self._dev_v]]
        np.add.at(r, iu[iu >= 0], i_dev[iu >= 0])
        np.subtract.at(r, iv[iv >= 0], i_dev[iv >= 0])
        scale = max(np.abs(i_dev).sum(), 1e-30)
        return float(np.abs(r).max() / scale) if r.size else 0.0

    def _solve_newton(self, v_src: np.ndarray):
        # start from the small-signal linear solution
        x = self._solve_linear_potentials(v_src[None, :])[0]
        if self.n_unknown == 0:
            phi = self._potentials(x, v_src)
            vd = self._device_drop(phi)
            return self._extract_nonlinear(x, vd), x
        for _ in range(_MAX_NEWTON):
            res = self._residual(x, v_src)
            if res < _REL_TOL:
                phi = self._potentials(x, v_src)
                vd = self._device_drop(phi)
                return self._extract_nonlinear(x, vd), x
            phi = self._potentials(x, v_src)
            vd = self._device_drop(phi)
            geff = self.device.slope(self.g.ravel(), vd)
            i0 = self.device.current(self.g.ravel(), vd) - geff * vd
            a_dev, c_dev = self._stamp(self._dev_u, self._dev_v, geff)
            a = (self._a_par + a_dev).tocsc()
            rhs = (self._c_par + c_dev)[:, :self.config.rows] @ v_src
            iu = self.uidx[self.comp[self._dev_u]]
            iv = self.uidx[self.comp[self._dev_v]]
            d = np.zeros(self.n_unknown)
            np.subtract.at(d, iu[iu >= 0], i0[iu >= 0])
            np.add.at(d, iv[iv >= 0], i0[iv >= 0])
            diag = a.diagonal()
            dead = np.where(diag == 0)[0]
            if dead.size:
                a = a + sp.coo_matrix((np.ones(dead.size), (dead, dead)),
                                      shape=a.shape).tocsc()
            x = splu(a).solve(rhs + d)
        raise NumericalError(
            f"Newton iteration did not reach {_REL_TOL} relative residual "
            f"after {_MAX_NEWTON} iterations", residual=self._residual(x, v_src))

    def _extract_nonlinear(self, x: np.ndarray, vd: np.ndarray) -> np.ndarray:
        """Column currents for the nonlinear solve.

        With r_sink > 0 the sink-edge expression is exact regardless of the
        device law. With a ground-merged column the device edges entering
        ground carry the nonlinear current directly.
        """
        n, m = self.config.rows, self.config.cols
        if self.config.r_sink > 0:
            return self._ex @ x
        i_dev = self.device.current(self.g.ravel(), vd)
        out = np.zeros(m)
        col_comp = self.comp[self._dev_v]
        in_gnd = col_comp == self._gnd_comp
        j = (self._dev_v[in_gnd] - n * m) % m
        np.add.at(out, j, i_dev[in_gnd])
        # plus any wire current entering the ground-merged column nodes
        for e, o in ((self._par_u, self._par_v), (self._par_v, self._par_u)):
            mask = (self.comp[e] == self._gnd_comp) & (e >= n * m) & (e < 2 * n * m)
            if not np.any(mask):
                continue
            jj = (e[mask] - n * m) % m
            co = self.comp[o[mask]]
            ge = self._par_g[mask]
            keep = co != self._gnd_comp
            io = self.uidx[co[keep]]
            phi_other = np.where(io >= 0, x[io.clip(min=0)], 0.0)
            np.add.at(out, jj[keep], ge[keep] * phi_other)
        return out


def nonideal_mvm_nodal(v, g, config: CrossbarConfig) -> np.ndarray:
    """One-shot non-ideal MVM: build the network for ``g`` and solve for ``v``."""
    return CrossbarNetwork(g, config).solve(v)
