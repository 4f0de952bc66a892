# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernel backend.

Line-by-line port of ``_kernels_py`` over typed memoryviews, with a dense
Gaussian elimination in place of LAPACK for the small network blocks.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, sqrt, fabs, atan2, isfinite

cnp.import_array()

BACKEND = "compiled"

ctypedef cnp.int64_t I64

cdef int OK = 0, FREQ_DEV = 1, VDC_DEV = 2, ENERGY_COLLAPSE = 3, AC_NO_FORMING = 4
cdef int AC_NEWTON = 5, DC_NO_FORMING = 6, DC_NEWTON = 7, PLL_DEAD_BUS = 8
cdef int NON_FINITE = 9, DC_INFEASIBLE = 10, DC_COLLAPSE = 11
cdef int AC_GFM = 0, DC_GFM = 1, HYBRID = 2, ENERGY_BAL = 3
cdef int P_WSET = 0, P_VDCSET = 1, P_PACSET = 2, P_PDCSET = 3, P_WTSET = 4, P_QSET = 5, P_VSET = 6
cdef int P_KPAC = 7, P_KQAC = 8, P_KPDC = 9, P_KWAC = 10, P_KWDC = 11
cdef int P_TAUAC = 12, P_TAUDC = 13, P_TAUQ = 14, P_KPW = 15, P_KIW = 16
cdef int P_PLLKP = 17, P_PLLKI = 18, P_LAG = 19
cdef double FREQ_LIMIT = 0.1, VDC_LIMIT = 0.5, DEAD_BUS_V = 0.1, DEAD_BUS_T = 0.02
cdef double AC_TOL = 1e-11, DC_TOL = 1e-12
cdef int MAX_IT = 30


cdef int gauss_solve(double[:, ::1] A, double[::1] b, int n) nogil:
    """Solve A x = b in place (b <- x) with partial pivoting; 1 if singular."""
    cdef int i, j, k, p
    cdef double m, t
    for k in range(n):
        p = k
        m = fabs(A[k, k])
        for i in range(k + 1, n):
            if fabs(A[i, k]) > m:
                m = fabs(A[i, k])
                p = i
        if m == 0.0:
            return 1
        if p != k:
            for j in range(n):
                t = A[k, j]; A[k, j] = A[p, j]; A[p, j] = t
            t = b[k]; b[k] = b[p]; b[p] = t
        for i in range(k + 1, n):
            m = A[i, k] / A[k, k]
            if m != 0.0:
                for j in range(k, n):
                    A[i, j] -= m * A[k, j]
                b[i] -= m * b[k]
    for k in range(n - 1, -1, -1):
        t = b[k]
        for j in range(k + 1, n):
            t -= A[k, j] * b[j]
        b[k] = t / A[k, k]
    return 0


cdef int newton_ac(double[:, ::1] Yr, double[:, ::1] Yi, double complex[::1] isrc,
                   double complex[::1] sload, I64[::1] gb, double[::1] gp,
                   double[::1] gt, int ng, double complex[::1] v, int n,
                   double tol, int max_iter, double[:, ::1] J, double[::1] rhs,
                   double complex[::1] F, double complex[::1] a,
                   double complex[::1] bb, int* iters) nogil:
    """Newton on Y v - isrc + conj(S/v) - I_gfl(v) = 0 for one block."""
    cdef int it, i, j, q, b
    cdef double err, av, av3
    cdef double complex eg, s, vb
    cdef int polished = 0
    for it in range(max_iter + 1):
        iters[0] = it
        for i in range(n):
            if fabs(v[i].real) + fabs(v[i].imag) < 1e-6:
                return 1
        err = 0.0
        for i in range(n):
            s = 0.0
            for j in range(n):
                s = s + (Yr[i, j] + 1j * Yi[i, j]) * v[j]
            vb = v[i]
            s = s - isrc[i] + (sload[i] / vb).conjugate()
            F[i] = s
        for q in range(ng):
            b = gb[q]
            eg = gp[q] * (cos(gt[q]) + 1j * sin(gt[q]))
            av = sqrt(v[b].real * v[b].real + v[b].imag * v[b].imag)
            F[b] = F[b] - eg / av
        for i in range(n):
            if fabs(F[i].real) > err:
                err = fabs(F[i].real)
            if fabs(F[i].imag) > err:
                err = fabs(F[i].imag)
        if err < tol:
            if polished:
                return 0
            polished = 1
        if it == max_iter:
            break
        for i in range(n):
            a[i] = 0.0
            bb[i] = -sload[i].conjugate() / (v[i].conjugate() * v[i].conjugate())
        for q in range(ng):
            b = gb[q]
            eg = gp[q] * (cos(gt[q]) + 1j * sin(gt[q]))
            av = sqrt(v[b].real * v[b].real + v[b].imag * v[b].imag)
            av3 = 2.0 * av * av * av
            a[b] = a[b] + eg * v[b].conjugate() / av3
            bb[b] = bb[b] + eg * v[b] / av3
        for i in range(n):
            for j in range(n):
                J[i, j] = Yr[i, j]
                J[i, n + j] = -Yi[i, j]
                J[n + i, j] = Yi[i, j]
                J[n + i, n + j] = Yr[i, j]
            J[i, i] += (a[i] + bb[i]).real
            J[i, n + i] += -(a[i] - bb[i]).imag
            J[n + i, i] += (a[i] + bb[i]).imag
            J[n + i, n + i] += (a[i] - bb[i]).real
            rhs[i] = -F[i].real
            rhs[n + i] = -F[i].imag
        if gauss_solve(J, rhs, 2 * n):
            return 1
        for i in range(n):
            v[i] = v[i] + (rhs[i] + 1j * rhs[n + i])
    return 1


def ac_newton(Y, isrc, sload, gb, gp, gt, v, tol=AC_TOL, max_iter=MAX_IT):
    """Same contract as the pure-Python ``ac_newton``."""
    cdef int n = Y.shape[0]
    cdef int iters = 0
    Yr = np.ascontiguousarray(np.real(Y), dtype=float)
    Yi = np.ascontiguousarray(np.imag(Y), dtype=float)
    vv = np.array(v, dtype=complex)
    J = np.zeros((2 * n, 2 * n))
    r = np.zeros(2 * n)
    F = np.zeros(n, dtype=complex)
    a = np.zeros(n, dtype=complex)
    bb = np.zeros(n, dtype=complex)
    gbv = np.ascontiguousarray(gb, dtype=np.int64)
    st = newton_ac(Yr, Yi, np.ascontiguousarray(isrc, dtype=complex),
                   np.ascontiguousarray(sload, dtype=complex), gbv,
                   np.ascontiguousarray(gp, dtype=float), np.ascontiguousarray(gt, dtype=float),
                   len(gbv), vv, n, tol, max_iter, J, r, F, a, bb, &iters)
    return vv, iters, st == 0


cdef inline double cabs(double complex z) nogil:
    return sqrt(z.real * z.real + z.imag * z.imag)


cdef class Kernel:
    """Compiled counterpart of ``_kernels_py.Kernel``."""

    cdef public object a, obs, Vac, Vdc, equad, dead, backend, pac, vt, wipc, dc_energized
    cdef public int nx, nobs, detail
    cdef double wb
    cdef int analytic
    # topology / parameters
    cdef I64[::1] s_bus, s_conn, s_x, s_obs, g_bus, g_conn, g_x, g_obs
    cdef I64[::1] l_bus, l_conn, q_node, q_conn, q_obs, m_node, m_conn
    cdef I64[::1] i_bus, i_node, i_type, i_x, i_acc, i_dcc, i_obs
    cdef I64[::1] acg_start, acg_len, dci_start, dci_len, d_x, sg_from, sg_to, sg_x
    cdef double[::1] s_yr, s_yi, s_E, s_wset, s_k, s_pset, g_P, g_kp, g_ki
    cdef double[::1] l_P, l_Q, q_vset, q_k, q_pset, m_P, i_yr, i_yi, d_C, d_g
    cdef double[:, ::1] i_par, sg_R, sg_L, Gd, Yr, Yi
    cdef int bus_obs0, node_obs0
    # state shared with Python
    cdef double[::1] obs_v, vdc_v, equad_v, dead_v, pac_v, vt_v, wipc_v
    cdef double complex[::1] vac_v
    # scratch
    cdef double[::1] qac_v, pdc_v, emf_v, ipc_e, ipc_th, ipc_gp, ipc_pcmd
    cdef double[::1] pc, fv0, fr, pout, iout, gp, gt, dcr, dcp
    cdef I64[::1] form, gb, energized
    cdef double complex[::1] isrc, sload, F, wa, wb_
    cdef double[:, ::1] Yer, Yei, J, Gs
    cdef double[::1] rhsv
    cdef double[::1] k1, k2, k3, k4, xt

    def __init__(self, arrays):
        self.a = arrays
        self.backend = BACKEND
        A = arrays
        self.nx = int(A["nx"][0])
        self.nobs = int(A["nobs"][0])
        self.wb = float(A["wb"][0])
        self.analytic = int(A["analytic"][0])
        self.bus_obs0 = int(A["bus_obs0"][0])
        self.node_obs0 = int(A["node_obs0"][0])
        for name in ("s_bus", "s_conn", "s_x", "s_obs", "g_bus", "g_conn", "g_x", "g_obs",
                     "l_bus", "l_conn", "q_node", "q_conn", "q_obs", "m_node", "m_conn",
                     "i_bus", "i_node", "i_type", "i_x", "i_acc", "i_dcc", "i_obs",
                     "acg_start", "acg_len", "dci_start", "dci_len", "d_x", "sg_from",
                     "sg_to", "sg_x"):
            if A[name].dtype != np.int64 or not A[name].flags.c_contiguous:
                raise TypeError(f"{name} must be a contiguous int64 array")
        self.s_bus = A["s_bus"]; self.s_conn = A["s_conn"]; self.s_x = A["s_x"]
        self.s_obs = A["s_obs"]; self.g_bus = A["g_bus"]; self.g_conn = A["g_conn"]
        self.g_x = A["g_x"]; self.g_obs = A["g_obs"]; self.l_bus = A["l_bus"]
        self.l_conn = A["l_conn"]; self.q_node = A["q_node"]; self.q_conn = A["q_conn"]
        self.q_obs = A["q_obs"]; self.m_node = A["m_node"]; self.m_conn = A["m_conn"]
        self.i_bus = A["i_bus"]; self.i_node = A["i_node"]; self.i_type = A["i_type"]
        self.i_x = A["i_x"]; self.i_acc = A["i_acc"]; self.i_dcc = A["i_dcc"]
        self.i_obs = A["i_obs"]; self.acg_start = A["acg_start"]; self.acg_len = A["acg_len"]
        self.dci_start = A["dci_start"]; self.dci_len = A["dci_len"]; self.d_x = A["d_x"]
        self.sg_from = A["sg_from"]; self.sg_to = A["sg_to"]; self.sg_x = A["sg_x"]
        self.s_yr = A["s_yr"]; self.s_yi = A["s_yi"]; self.s_E = A["s_E"]
        self.s_wset = A["s_wset"]; self.s_k = A["s_k"]; self.s_pset = A["s_pset"]
        self.g_P = A["g_P"]; self.g_kp = A["g_kp"]; self.g_ki = A["g_ki"]
        self.l_P = A["l_P"]; self.l_Q = A["l_Q"]; self.q_vset = A["q_vset"]
        self.q_k = A["q_k"]; self.q_pset = A["q_pset"]; self.m_P = A["m_P"]
        self.i_yr = A["i_yr"]; self.i_yi = A["i_yi"]; self.d_C = A["d_C"]; self.d_g = A["d_g"]
        self.i_par = A["i_par"]; self.sg_R = A["sg_R"]; self.sg_L = A["sg_L"]
        self.Gd = A["Gd"]; self.Yr = A["Yr"]; self.Yi = A["Yi"]

        cdef int nb = self.Yr.shape[0]
        cdef int nd = self.d_C.shape[0]
        cdef int ni = self.i_bus.shape[0]
        cdef int ng = self.g_bus.shape[0]
        cdef int nbmax = 1, k
        for k in range(self.acg_len.shape[0]):
            nbmax = max(nbmax, <int>self.acg_len[k])
        cdef int ndmax = 1
        for k in range(self.dci_len.shape[0]):
            ndmax = max(ndmax, <int>self.dci_len[k])
        self.obs = np.zeros(self.nobs)
        self.obs_v = self.obs
        self.Vac = np.array(A["v_ac_init"], dtype=complex)
        self.vac_v = self.Vac
        self.Vdc = np.array(A["v_dc_init"], dtype=float)
        self.vdc_v = self.Vdc
        self.equad = np.zeros(ni)
        self.equad_v = self.equad
        self.dead = np.zeros(ng + ni)
        self.dead_v = self.dead
        self.pac = np.zeros(ni); self.pac_v = self.pac
        self.vt = np.zeros(ni); self.vt_v = self.vt
        self.wipc = np.zeros(ni); self.wipc_v = self.wipc
        self.detail = -1
        self.qac_v = np.zeros(ni); self.pdc_v = np.zeros(ni); self.emf_v = np.zeros(ni)
        self.ipc_e = np.zeros(ni); self.ipc_th = np.zeros(ni); self.ipc_gp = np.zeros(ni)
        self.ipc_pcmd = np.zeros(ni)
        self.pc = np.zeros(nd); self.fv0 = np.zeros(nd); self.fr = np.zeros(nd)
        self.pout = np.zeros(nd); self.iout = np.zeros(nd)
        self.form = np.zeros(nd, dtype=np.int64)
        self.dc_energized = np.zeros(self.dci_start.shape[0], dtype=np.int64)
        self.energized = self.dc_energized
        self.gp = np.zeros(ng + ni); self.gt = np.zeros(ng + ni)
        self.gb = np.zeros(ng + ni, dtype=np.int64)
        self.isrc = np.zeros(nbmax, dtype=complex); self.sload = np.zeros(nbmax, dtype=complex)
        self.F = np.zeros(nbmax, dtype=complex); self.wa = np.zeros(nbmax, dtype=complex)
        self.wb_ = np.zeros(nbmax, dtype=complex)
        self.Yer = np.zeros((nbmax, nbmax)); self.Yei = np.zeros((nbmax, nbmax))
        self.J = np.zeros((2 * max(nbmax, ndmax), 2 * max(nbmax, ndmax)))
        self.rhsv = np.zeros(2 * max(nbmax, ndmax))
        self.Gs = np.zeros((ndmax, ndmax))
        self.dcr = np.zeros(ndmax); self.dcp = np.zeros(ndmax)
        self.k1 = np.zeros(self.nx); self.k2 = np.zeros(self.nx); self.k3 = np.zeros(self.nx)
        self.k4 = np.zeros(self.nx); self.xt = np.zeros(self.nx)

    # ------------------------------------------------------------------ #
    def rhs(self, double t, double[::1] x, double[::1] dx):
        return self._rhs(t, x, dx)

    cdef int _node_has_const(self, int i) nogil:
        cdef int j, m
        for j in range(self.m_node.shape[0]):
            if self.m_conn[j] and self.m_node[j] == i:
                return 1
        for m in range(self.i_node.shape[0]):
            if self.i_dcc[m] and self.i_node[m] == i:
                return 1
        return 0

    cdef int _dc_newton(self, int s0, int n) nogil:
        cdef int it, i, j
        cdef int polished = 0
        cdef double err, gv, h
        cdef double[::1] v = self.dcr
        for i in range(n):
            v[i] = self.vdc_v[s0 + i]
        for i in range(n):
            if v[i] < 0.05:
                for j in range(n):
                    v[j] = 1.0
                break
        for it in range(MAX_IT + 1):
            err = 0.0
            for i in range(n):
                gv = 0.0
                for j in range(n):
                    gv += self.Gd[s0 + i, s0 + j] * v[j]
                h = v[i] * gv + self.d_g[s0 + i] * v[i] * v[i]
                if self.form[s0 + i] >= 0:
                    self.rhsv[i] = v[i] - self.fv0[s0 + i] + self.fr[s0 + i] * (h - self.pc[s0 + i])
                else:
                    self.rhsv[i] = h - self.pc[s0 + i]
                if fabs(self.rhsv[i]) > err:
                    err = fabs(self.rhsv[i])
                # Jacobian row
                for j in range(n):
                    self.J[i, j] = v[i] * self.Gd[s0 + i, s0 + j]
                self.J[i, i] += gv + 2.0 * self.d_g[s0 + i] * v[i]
                if self.form[s0 + i] >= 0:
                    for j in range(n):
                        self.J[i, j] *= self.fr[s0 + i]
                    self.J[i, i] += 1.0
            if err < DC_TOL:
                if polished:
                    for i in range(n):
                        self.vdc_v[s0 + i] = v[i]
                    return OK
                polished = 1
            if it == MAX_IT:
                break
            if gauss_solve(self.J, self.rhsv, n):
                return DC_NEWTON
            for i in range(n):
                v[i] -= self.rhsv[i]
                if not isfinite(v[i]) or v[i] <= 0.0:
                    return DC_NEWTON
        return DC_NEWTON

    cdef int _rhs(self, double t, double[::1] x, double[::1] dx):
        cdef double wb = self.wb
        cdef int ni = self.i_bus.shape[0]
        cdef int ns = self.s_bus.shape[0]
        cdef int ng = self.g_bus.shape[0]
        cdef int nd = self.d_C.shape[0]
        cdef int nx = x.shape[0]
        cdef int i, j, k, m, o, b, s0, n, typ, forming, other, ngg, lag_slot, q, nf, busy, xs, nd_
        cdef double th, p, qq, w, e, v0, r, vm, epll, av, u, vcmd, pcmd, ma, md, dw, lag, tq
        cdef double pac, qac, pdc, bq, cq, disc, g, v, du, itot
        cdef double complex y, ev, s, cur, vb
        cdef double[:, ::1] par = self.i_par
        for i in range(nx):
            dx[i] = 0.0

        # IPC forming EMFs and grid-following commands
        for m in range(ni):
            o = self.i_x[m]
            typ = self.i_type[m]
            if typ == DC_GFM:
                self.ipc_th[m] = x[o + 1]
                if par[m, P_LAG] > 0:
                    self.ipc_gp[m] = x[o + 5]
                else:
                    self.ipc_gp[m] = (par[m, P_PACSET] + par[m, P_KPW] * (x[o] - par[m, P_WTSET])
                                      + par[m, P_KIW] * x[o + 3])
                self.ipc_e[m] = 0.0
            else:
                qq = x[o + 3] if typ == AC_GFM else x[o + 2]
                self.ipc_e[m] = par[m, P_VSET] + par[m, P_KQAC] * (par[m, P_QSET] - qq)
                self.ipc_th[m] = x[o + 1]
            self.emf_v[m] = self.ipc_e[m]

        # AC subgrids
        cdef int iters = 0
        for k in range(self.acg_start.shape[0]):
            s0 = self.acg_start[k]
            n = self.acg_len[k]
            for i in range(n):
                self.isrc[i] = 0.0
                self.sload[i] = 0.0
                for j in range(n):
                    self.Yer[i, j] = self.Yr[s0 + i, s0 + j]
                    self.Yei[i, j] = self.Yi[s0 + i, s0 + j]
            ngg = 0
            forming = 0
            other = 0
            for j in range(ns):
                b = self.s_bus[j]
                if self.s_conn[j] and s0 <= b < s0 + n:
                    y = self.s_yr[j] + 1j * self.s_yi[j]
                    self.Yer[b - s0, b - s0] += y.real
                    self.Yei[b - s0, b - s0] += y.imag
                    th = x[self.s_x[j]]
                    self.isrc[b - s0] = self.isrc[b - s0] + y * self.s_E[j] * (cos(th) + 1j * sin(th))
                    forming += 1
            for m in range(ni):
                b = self.i_bus[m]
                if self.i_acc[m] and s0 <= b < s0 + n:
                    if self.i_type[m] == DC_GFM:
                        self.gb[ngg] = b - s0
                        self.gp[ngg] = self.ipc_gp[m]
                        self.gt[ngg] = self.ipc_th[m]
                        ngg += 1
                        other += 1
                    else:
                        y = self.i_yr[m] + 1j * self.i_yi[m]
                        self.Yer[b - s0, b - s0] += y.real
                        self.Yei[b - s0, b - s0] += y.imag
                        th = self.ipc_th[m]
                        self.isrc[b - s0] = self.isrc[b - s0] + y * self.ipc_e[m] * (cos(th) + 1j * sin(th))
                        forming += 1
            for j in range(self.l_bus.shape[0]):
                b = self.l_bus[j]
                if self.l_conn[j] and s0 <= b < s0 + n:
                    self.sload[b - s0] = self.sload[b - s0] + (self.l_P[j] + 1j * self.l_Q[j])
                    other += 1
            for j in range(ng):
                b = self.g_bus[j]
                if self.g_conn[j] and s0 <= b < s0 + n:
                    self.gb[ngg] = b - s0
                    self.gp[ngg] = self.g_P[j]
                    self.gt[ngg] = x[self.g_x[j]]
                    ngg += 1
                    other += 1
            if forming == 0:
                for i in range(n):
                    self.vac_v[s0 + i] = 0.0
                if other:
                    self.detail = k
                    return AC_NO_FORMING
                continue
            for i in range(n):
                if cabs(self.vac_v[s0 + i]) < 0.05:
                    for j in range(n):
                        self.vac_v[s0 + j] = 1.0
                    break
            if newton_ac(self.Yer, self.Yei, self.isrc, self.sload, self.gb, self.gp, self.gt,
                         ngg, self.vac_v[s0:s0 + n], n, AC_TOL, MAX_IT, self.J, self.rhsv,
                         self.F, self.wa, self.wb_, &iters):
                self.detail = k
                return AC_NEWTON

        cdef double complex[::1] V = self.vac_v
        # AC device powers
        for j in range(ns):
            o = self.s_obs[j]
            if self.s_conn[j]:
                th = x[self.s_x[j]]
                ev = self.s_E[j] * (cos(th) + 1j * sin(th))
                s = ev * ((self.s_yr[j] + 1j * self.s_yi[j]) * (ev - V[self.s_bus[j]])).conjugate()
                p = s.real
                qq = s.imag
                w = self.s_wset[j] + self.s_k[j] * (self.s_pset[j] - p)
                dx[self.s_x[j]] = wb * (w - 1.0)
            else:
                p = 0.0
                qq = 0.0
                w = self.s_wset[j]
            self.obs_v[o] = p
            self.obs_v[o + 1] = qq
            self.obs_v[o + 2] = w
        for m in range(ni):
            if self.i_acc[m]:
                vb = V[self.i_bus[m]]
                th = self.ipc_th[m]
                if self.i_type[m] == DC_GFM:
                    av = cabs(vb)
                    cur = self.ipc_gp[m] / av * (cos(th) + 1j * sin(th))
                    s = vb * cur.conjugate()
                else:
                    ev = self.ipc_e[m] * (cos(th) + 1j * sin(th))
                    s = ev * ((self.i_yr[m] + 1j * self.i_yi[m]) * (ev - vb)).conjugate()
                self.pac_v[m] = s.real
                self.qac_v[m] = s.imag
            else:
                self.pac_v[m] = 0.0
                self.qac_v[m] = 0.0

        # DC side
        for i in range(nd):
            self.pc[i] = 0.0
            self.form[i] = -1
            self.fv0[i] = 0.0
            self.fr[i] = 0.0
            self.pout[i] = 0.0
            self.iout[i] = 0.0
        for j in range(self.m_node.shape[0]):
            if self.m_conn[j]:
                self.pc[self.m_node[j]] -= self.m_P[j]
        for m in range(ni):
            o = self.i_x[m]
            typ = self.i_type[m]
            e = x[o] - par[m, P_WTSET]
            if typ == AC_GFM:
                if par[m, P_LAG] > 0:
                    self.ipc_pcmd[m] = x[o + 5]
                else:
                    self.ipc_pcmd[m] = par[m, P_PDCSET] - par[m, P_KPW] * e - par[m, P_KIW] * x[o + 4]
                if self.i_dcc[m]:
                    self.pc[self.i_node[m]] -= self.ipc_pcmd[m]
                continue
            if typ == DC_GFM:
                lag_slot = 6
            elif typ == HYBRID:
                lag_slot = 4
            else:
                lag_slot = 5
            if par[m, P_LAG] > 0:
                v0 = x[o + lag_slot]
                r = 0.0
            elif typ == DC_GFM:
                if par[m, P_TAUDC] > 0:
                    v0 = par[m, P_VDCSET] + x[o + 4]
                    r = 0.0
                else:
                    v0 = par[m, P_VDCSET] - par[m, P_KPDC] * par[m, P_PDCSET]
                    r = par[m, P_KPDC]
            elif typ == HYBRID:
                if par[m, P_TAUDC] > 0:
                    v0 = par[m, P_VDCSET] + x[o + 3]
                    r = 0.0
                else:
                    v0 = par[m, P_VDCSET] - par[m, P_KPDC] * par[m, P_PDCSET] + par[m, P_KWDC] * e
                    r = par[m, P_KPDC]
            else:
                if par[m, P_TAUDC] > 0:
                    md = x[o + 4]
                    v0 = par[m, P_VDCSET] + par[m, P_KWDC] * md + par[m, P_KPDC] * (e - md) / par[m, P_TAUDC]
                    r = 0.0
                else:
                    v0 = par[m, P_VDCSET] - par[m, P_KPDC] * self.pac_v[m] + par[m, P_KWDC] * e
                    r = par[m, P_KPDC]
            self.vt_v[m] = v0
            if self.i_dcc[m]:
                nd_ = self.i_node[m]
                if self.form[nd_] >= 0:
                    self.detail = nd_
                    return DC_INFEASIBLE
                self.form[nd_] = 1000 + m
                self.fv0[nd_] = v0
                self.fr[nd_] = r
        for j in range(self.q_node.shape[0]):
            if self.q_conn[j]:
                nd_ = self.q_node[j]
                if self.form[nd_] >= 0:
                    self.detail = nd_
                    return DC_INFEASIBLE
                self.form[nd_] = j
                self.fv0[nd_] = self.q_vset[j] + self.q_k[j] * self.q_pset[j]
                self.fr[nd_] = self.q_k[j]

        cdef double[::1] Vd = self.vdc_v
        for k in range(self.dci_start.shape[0]):
            s0 = self.dci_start[k]
            n = self.dci_len[k]
            nf = 0
            busy = 0
            for i in range(s0, s0 + n):
                if self.form[i] >= 0:
                    nf += 1
                elif self._node_has_const(i):
                    busy = 1
            if nf > 0:
                busy = 1
            self.energized[k] = busy
            if self.analytic:
                if nf == 0:
                    for i in range(s0, s0 + n):
                        Vd[i] = 0.0
                    if busy:
                        self.detail = k
                        return DC_NO_FORMING
                    continue
                q = self._dc_newton(s0, n)
                if q != OK:
                    self.detail = k
                    return q
                for i in range(n):
                    g = 0.0
                    for j in range(n):
                        g += self.Gd[s0 + i, s0 + j] * Vd[s0 + j]
                    self.pout[s0 + i] = (Vd[s0 + i] * g + self.d_g[s0 + i] * Vd[s0 + i] * Vd[s0 + i]
                                         - self.pc[s0 + i])
        if not self.analytic:
            for k in range(self.sg_from.shape[0]):
                xs = self.sg_x[k]
                itot = x[xs] + x[xs + 1] + x[xs + 2]
                self.iout[self.sg_from[k]] += itot
                self.iout[self.sg_to[k]] -= itot
            for i in range(nd):
                g = self.d_g[i]
                if self.form[i] >= 0:
                    r = self.fr[i]
                    bq = 1.0 + r * self.iout[i]
                    cq = self.fv0[i] + r * self.pc[i]
                    if r * g == 0.0:
                        if bq <= 0.0:
                            self.detail = i
                            return DC_INFEASIBLE
                        v = cq / bq
                    else:
                        disc = bq * bq + 4.0 * r * g * cq
                        if disc < 0.0 or bq + sqrt(disc) <= 0.0:
                            self.detail = i
                            return DC_INFEASIBLE
                        v = 2.0 * cq / (bq + sqrt(disc))
                    Vd[i] = v
                    self.pout[i] = v * self.iout[i] + g * v * v - self.pc[i]
                else:
                    v = x[self.d_x[i]]
                    if v < 1e-3:
                        self.detail = i
                        return DC_COLLAPSE
                    Vd[i] = v
                    dx[self.d_x[i]] = (-self.iout[i] - g * v + self.pc[i] / v) / self.d_C[i]
            for k in range(self.sg_from.shape[0]):
                xs = self.sg_x[k]
                du = Vd[self.sg_from[k]] - Vd[self.sg_to[k]]
                for q in range(3):
                    dx[xs + q] = (du - self.sg_R[k, q] * x[xs + q]) / self.sg_L[k, q]

        for m in range(ni):
            if not self.i_dcc[m]:
                self.pdc_v[m] = 0.0
                if self.i_type[m] == AC_GFM:
                    self.vt_v[m] = Vd[self.i_node[m]]
                continue
            if self.i_type[m] == AC_GFM:
                self.pdc_v[m] = self.ipc_pcmd[m]
            else:
                self.pdc_v[m] = -self.pout[self.i_node[m]]
            self.vt_v[m] = Vd[self.i_node[m]]
        for j in range(self.q_node.shape[0]):
            o = self.q_obs[j]
            if self.q_conn[j]:
                self.obs_v[o] = self.pout[self.q_node[j]]
                self.obs_v[o + 1] = Vd[self.q_node[j]]
            else:
                self.obs_v[o] = 0.0
                self.obs_v[o + 1] = 0.0

        # IPC controllers
        for m in range(ni):
            o = self.i_x[m]
            typ = self.i_type[m]
            e = x[o] - par[m, P_WTSET]
            pac = self.pac_v[m]
            qac = self.qac_v[m]
            pdc = self.pdc_v[m]
            dw = pdc - pac
            dx[o] = dw
            lag = par[m, P_LAG]
            tq = par[m, P_TAUQ]
            if typ == AC_GFM:
                if par[m, P_TAUAC] > 0:
                    p = x[o + 2]
                    dx[o + 2] = (pac - p) / par[m, P_TAUAC]
                else:
                    p = pac
                w = par[m, P_WSET] + par[m, P_KPAC] * (par[m, P_PACSET] - p)
                dx[o + 1] = wb * (w - 1.0)
                dx[o + 3] = (qac - x[o + 3]) / tq
                dx[o + 4] = e
                if lag > 0:
                    pcmd = par[m, P_PDCSET] - par[m, P_KPW] * e - par[m, P_KIW] * x[o + 4]
                    dx[o + 5] = (pcmd - x[o + 5]) / lag
            elif typ == DC_GFM:
                vb = V[self.i_bus[m]]
                av = cabs(vb)
                th = x[o + 1]
                if av > 1e-9:
                    epll = (vb.imag * cos(th) - vb.real * sin(th)) / av
                else:
                    epll = 0.0
                w = 1.0 + par[m, P_PLLKP] * epll + x[o + 2]
                dx[o + 1] = wb * (w - 1.0)
                dx[o + 2] = par[m, P_PLLKI] * epll
                dx[o + 3] = e
                if par[m, P_TAUDC] > 0:
                    dx[o + 4] = (par[m, P_KPDC] * (pdc - par[m, P_PDCSET]) - x[o + 4]) / par[m, P_TAUDC]
                    vcmd = par[m, P_VDCSET] + x[o + 4]
                else:
                    vcmd = par[m, P_VDCSET] + par[m, P_KPDC] * (pdc - par[m, P_PDCSET])
                if lag > 0:
                    pcmd = par[m, P_PACSET] + par[m, P_KPW] * e + par[m, P_KIW] * x[o + 3]
                    dx[o + 5] = (pcmd - x[o + 5]) / lag
                    dx[o + 6] = (vcmd - x[o + 6]) / lag
            elif typ == HYBRID:
                w = par[m, P_WSET] + par[m, P_KPAC] * (par[m, P_PACSET] - pac) + par[m, P_KWAC] * e
                dx[o + 1] = wb * (w - 1.0)
                dx[o + 2] = (qac - x[o + 2]) / tq
                u = par[m, P_KPDC] * (pdc - par[m, P_PDCSET]) + par[m, P_KWDC] * e
                if par[m, P_TAUDC] > 0:
                    dx[o + 3] = (u - x[o + 3]) / par[m, P_TAUDC]
                    vcmd = par[m, P_VDCSET] + x[o + 3]
                else:
                    vcmd = par[m, P_VDCSET] + u
                if lag > 0:
                    dx[o + 4] = (vcmd - x[o + 4]) / lag
            else:
                if par[m, P_TAUAC] > 0:
                    ma = x[o + 3]
                    dx[o + 3] = (e - ma) / par[m, P_TAUAC]
                    w = par[m, P_WSET] + par[m, P_KWAC] * e + par[m, P_KPAC] * (e - ma) / par[m, P_TAUAC]
                else:
                    w = par[m, P_WSET] + par[m, P_KWAC] * e + par[m, P_KPAC] * dw
                dx[o + 1] = wb * (w - 1.0)
                dx[o + 2] = (qac - x[o + 2]) / tq
                if par[m, P_TAUDC] > 0:
                    md = x[o + 4]
                    dx[o + 4] = (e - md) / par[m, P_TAUDC]
                    vcmd = par[m, P_VDCSET] + par[m, P_KWDC] * md + par[m, P_KPDC] * (e - md) / par[m, P_TAUDC]
                else:
                    vcmd = par[m, P_VDCSET] + par[m, P_KPDC] * dw + par[m, P_KWDC] * e
                if lag > 0:
                    dx[o + 5] = (vcmd - x[o + 5]) / lag
            self.wipc_v[m] = w
            b = self.i_obs[m]
            self.obs_v[b] = pac
            self.obs_v[b + 1] = qac
            self.obs_v[b + 2] = pdc
            self.obs_v[b + 3] = w
            self.obs_v[b + 4] = self.vt_v[m]
            self.obs_v[b + 5] = self.emf_v[m]

        # grid-following PLL sources
        for j in range(ng):
            o = self.g_obs[j]
            xs = self.g_x[j]
            if not self.g_conn[j]:
                self.obs_v[o] = 0.0
                self.obs_v[o + 1] = 1.0 + x[xs + 1]
                self.obs_v[o + 2] = cabs(V[self.g_bus[j]])
                continue
            vb = V[self.g_bus[j]]
            av = cabs(vb)
            th = x[xs]
            if av > 1e-9:
                epll = (vb.imag * cos(th) - vb.real * sin(th)) / av
                cur = self.g_P[j] / av * (cos(th) + 1j * sin(th))
                p = (vb * cur.conjugate()).real
            else:
                epll = 0.0
                p = 0.0
            w = 1.0 + self.g_kp[j] * epll + x[xs + 1]
            dx[xs] = wb * (w - 1.0)
            dx[xs + 1] = self.g_ki[j] * epll
            self.obs_v[o] = p
            self.obs_v[o + 1] = w
            self.obs_v[o + 2] = av

        for b in range(V.shape[0]):
            self.obs_v[self.bus_obs0 + 2 * b] = cabs(V[b])
            self.obs_v[self.bus_obs0 + 2 * b + 1] = atan2(V[b].imag, V[b].real)
        for i in range(nd):
            self.obs_v[self.node_obs0 + i] = Vd[i]
        return OK

    # ------------------------------------------------------------------ #
    def check(self, double[::1] x, double dt):
        return self._check(x, dt)

    cdef int _check(self, double[::1] x, double dt):
        cdef int j, m, k, i, s0, bus, on
        cdef int ni = self.i_bus.shape[0]
        cdef int ng = self.g_bus.shape[0]
        cdef double w
        for j in range(self.s_bus.shape[0]):
            if self.s_conn[j] and fabs(self.obs_v[self.s_obs[j] + 2] - 1.0) > FREQ_LIMIT:
                self.detail = j
                return FREQ_DEV
        for m in range(ni):
            if x[self.i_x[m]] <= 0.0:
                self.detail = m
                return ENERGY_COLLAPSE
            if self.i_acc[m] and fabs(self.wipc_v[m] - 1.0) > FREQ_LIMIT:
                self.detail = m
                return FREQ_DEV
            if self.i_dcc[m] and fabs(self.vt_v[m] - 1.0) > VDC_LIMIT:
                self.detail = m
                return VDC_DEV
        for k in range(self.dci_start.shape[0]):
            if self.energized[k]:
                s0 = self.dci_start[k]
                for i in range(s0, s0 + self.dci_len[k]):
                    if fabs(self.vdc_v[i] - 1.0) > VDC_LIMIT:
                        self.detail = i
                        return VDC_DEV
        for j in range(ng + ni):
            if j < ng:
                on = self.g_conn[j]
                bus = self.g_bus[j]
            else:
                m = j - ng
                on = self.i_acc[m] and self.i_type[m] == DC_GFM
                bus = self.i_bus[m]
            if not on:
                self.dead_v[j] = 0.0
                continue
            if cabs(self.vac_v[bus]) <= DEAD_BUS_V:
                self.dead_v[j] += dt
                if self.dead_v[j] > DEAD_BUS_T:
                    self.detail = j
                    return PLL_DEAD_BUS
            else:
                self.dead_v[j] = 0.0
        for i in range(x.shape[0]):
            if not isfinite(x[i]):
                self.detail = i
                return NON_FINITE
        return OK

    def run(self, double[::1] x, long step0, double dt, long nsteps, long rec_every,
            double[::1] rec_t, double[:, ::1] rec_x, double[:, ::1] rec_obs, long rec_pos):
        """Same contract as the pure-Python ``Kernel.run``."""
        cdef int nx = self.nx
        cdef int ni = self.i_bus.shape[0]
        cdef long step, done
        cdef int i, m, st
        cdef double t, inc
        cdef double[::1] k1 = self.k1, k2 = self.k2, k3 = self.k3, k4 = self.k4, xt = self.xt
        cdef double t0 = step0 * dt
        st = self._rhs(t0, x, k1)
        if st != OK:
            return st, 0, rec_pos
        for step in range(nsteps):
            t = (step0 + step) * dt
            for i in range(nx):
                xt[i] = x[i] + 0.5 * dt * k1[i]
            st = self._rhs(t + 0.5 * dt, xt, k2)
            if st != OK:
                return st, step, rec_pos
            for i in range(nx):
                xt[i] = x[i] + 0.5 * dt * k2[i]
            st = self._rhs(t + 0.5 * dt, xt, k3)
            if st != OK:
                return st, step, rec_pos
            for i in range(nx):
                xt[i] = x[i] + dt * k3[i]
            st = self._rhs(t + dt, xt, k4)
            if st != OK:
                return st, step, rec_pos
            for m in range(ni):
                i = self.i_x[m]
                self.equad_v[m] += (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            for i in range(nx):
                x[i] += (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            st = self._rhs(t + dt, x, k1)
            if st == OK:
                st = self._check(x, dt)
            done = step + 1
            if rec_every > 0 and ((step0 + done) % rec_every == 0 or st != OK) \
                    and rec_pos < rec_t.shape[0]:
                rec_t[rec_pos] = (step0 + done) * dt
                for i in range(nx):
                    rec_x[rec_pos, i] = x[i]
                for i in range(self.nobs):
                    rec_obs[rec_pos, i] = self.obs_v[i]
                rec_pos += 1
            if st != OK:
                return st, done, rec_pos
        return OK, nsteps, rec_pos
