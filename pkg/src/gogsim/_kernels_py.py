"""Pure-Python kernel backend.

Evaluates the differential-algebraic right-hand side of a compiled system
and integrates it with fixed-step RK4. The compiled extension
``_kernels`` implements the same arithmetic; this module is the fallback
when the extension is not built and the reference it is tested against.
"""
import math

import numpy as np

from ._layout import (AC_GFM, AC_NEWTON, AC_NO_FORMING, DC_COLLAPSE, DC_GFM,
                      DC_INFEASIBLE, DC_NEWTON, DC_NO_FORMING, DEAD_BUS_T,
                      DEAD_BUS_V, ENERGY_BAL, ENERGY_COLLAPSE, FREQ_DEV,
                      FREQ_LIMIT, HYBRID, N_IPC_STATE, NON_FINITE, OK, P_KIW,
                      P_KPAC, P_KPDC, P_KPW, P_KQAC, P_KWAC, P_KWDC, P_LAG,
                      P_PACSET, P_PDCSET, P_PLLKI, P_PLLKP, P_QSET, P_TAUAC,
                      P_TAUDC, P_TAUQ, P_VDCSET, P_VSET, P_WSET, P_WTSET,
                      PLL_DEAD_BUS, VDC_DEV, VDC_LIMIT)

BACKEND = "python"

AC_TOL = 1e-11
DC_TOL = 1e-12
MAX_IT = 30


def ac_newton(Y, isrc, sload, gb, gp, gt, v, tol=AC_TOL, max_iter=MAX_IT):
    """Solve ``Y v - isrc + conj(S/v) - I_gfl(v) = 0`` for complex ``v``.

    Returns ``(v, iterations, converged)``.
    """
    n = Y.shape[0]
    v = np.array(v, dtype=complex)
    Yr, Yi = Y.real, Y.imag
    eg = np.exp(1j * gt) * gp if len(gb) else None
    polished = False
    for it in range(max_iter + 1):
        if np.any(np.abs(v) < 1e-6):
            return v, it, False
        F = Y @ v - isrc + np.conj(sload / v)
        if eg is not None:
            av = np.abs(v[gb])
            np.subtract.at(F, gb, eg / av)
        if np.max(np.abs(F.real)) < tol and np.max(np.abs(F.imag)) < tol:
            if polished:
                return v, it, True
            polished = True     # one extra step removes the tolerance-level error
        if it == max_iter:
            break
        # Wirtinger derivatives of the nonlinear bus terms: dF = a dv + b dv*
        a = np.zeros(n, dtype=complex)
        b = -np.conj(sload) / np.conj(v) ** 2
        if eg is not None:
            av3 = 2.0 * np.abs(v[gb]) ** 3
            np.add.at(a, gb, eg * np.conj(v[gb]) / av3)
            np.add.at(b, gb, eg * v[gb] / av3)
        J = np.empty((2 * n, 2 * n))
        J[:n, :n] = Yr + np.diag((a + b).real)
        J[:n, n:] = -Yi + np.diag(-(a - b).imag)
        J[n:, :n] = Yi + np.diag((a + b).imag)
        J[n:, n:] = Yr + np.diag((a - b).real)
        try:
            dx = np.linalg.solve(J, -np.concatenate([F.real, F.imag]))
        except np.linalg.LinAlgError:
            return v, it, False
        v = v + dx[:n] + 1j * dx[n:]
    return v, max_iter, False


class Kernel:
    """Right-hand side and RK4 integrator over a flat system description.

    ``arrays`` is the mapping produced by :func:`gogsim.system.compile_system`.
    The kernel keeps references to those arrays, so mutating connection
    flags or setpoints between :meth:`run` calls takes effect immediately.
    """

    backend = BACKEND

    def __init__(self, arrays):
        self.a = arrays
        for k, v in arrays.items():
            setattr(self, k, v)
        self.nx = int(arrays["nx"][0])
        self.nobs = int(arrays["nobs"][0])
        self.obs = np.zeros(self.nobs)
        self.Vac = np.array(arrays["v_ac_init"], dtype=complex)
        self.Vdc = np.array(arrays["v_dc_init"], dtype=float)
        self.dead = np.zeros(len(arrays["g_bus"]) + len(arrays["i_bus"]))
        self.equad = np.zeros(len(arrays["i_bus"]))
        self.pll_oor = np.zeros(len(arrays["g_bus"]) + len(arrays["i_bus"]), dtype=np.int64)
        self.detail = -1
        # per-evaluation scratch
        ni = len(self.i_bus)
        self.pac = np.zeros(ni)
        self.qac = np.zeros(ni)
        self.pdc = np.zeros(ni)
        self.vt = np.zeros(ni)
        self.emf = np.zeros(ni)
        self.wipc = np.zeros(ni)
        self.dc_energized = np.zeros(len(self.dci_start), dtype=np.int64)

    # ------------------------------------------------------------------ #
    def rhs(self, t, x, dx):
        """Fill ``dx`` with the state derivatives at ``x``; return status."""
        wb = self.wb[0]
        analytic = self.analytic[0]
        dx[:] = 0.0
        obs = self.obs
        ni = len(self.i_bus)
        ns = len(self.s_bus)
        ng = len(self.g_bus)

        # ---- AC forming EMFs and grid-following commands of the IPCs
        ipc_e = np.zeros(ni)
        ipc_th = np.zeros(ni)
        ipc_gfl_p = np.zeros(ni)
        for m in range(ni):
            par = self.i_par[m]
            o = self.i_x[m]
            typ = self.i_type[m]
            if typ == DC_GFM:
                ipc_th[m] = x[o + 1]
                if par[P_LAG] > 0:
                    ipc_gfl_p[m] = x[o + 5]
                else:
                    ipc_gfl_p[m] = (par[P_PACSET] + par[P_KPW] * (x[o] - par[P_WTSET])
                                    + par[P_KIW] * x[o + 3])
            else:
                qf = x[o + 3] if typ == AC_GFM else x[o + 2]
                ipc_e[m] = par[P_VSET] + par[P_KQAC] * (par[P_QSET] - qf)
                ipc_th[m] = x[o + 1]
            self.emf[m] = ipc_e[m]

        # ---- AC subgrids
        for k in range(len(self.acg_start)):
            s0 = self.acg_start[k]
            n = self.acg_len[k]
            Y = (self.Yr[s0:s0 + n, s0:s0 + n] + 1j * self.Yi[s0:s0 + n, s0:s0 + n]).astype(complex)
            isrc = np.zeros(n, dtype=complex)
            sload = np.zeros(n, dtype=complex)
            gb, gp, gt = [], [], []
            forming = 0
            other = 0
            for j in range(ns):
                b = self.s_bus[j]
                if self.s_conn[j] and s0 <= b < s0 + n:
                    y = complex(self.s_yr[j], self.s_yi[j])
                    Y[b - s0, b - s0] += y
                    isrc[b - s0] += y * self.s_E[j] * complex(math.cos(x[self.s_x[j]]),
                                                              math.sin(x[self.s_x[j]]))
                    forming += 1
            for m in range(ni):
                b = self.i_bus[m]
                if self.i_acc[m] and s0 <= b < s0 + n:
                    if self.i_type[m] == DC_GFM:
                        gb.append(b - s0)
                        gp.append(ipc_gfl_p[m])
                        gt.append(ipc_th[m])
                        other += 1
                    else:
                        y = complex(self.i_yr[m], self.i_yi[m])
                        Y[b - s0, b - s0] += y
                        isrc[b - s0] += y * ipc_e[m] * complex(math.cos(ipc_th[m]),
                                                               math.sin(ipc_th[m]))
                        forming += 1
            for j in range(len(self.l_bus)):
                b = self.l_bus[j]
                if self.l_conn[j] and s0 <= b < s0 + n:
                    sload[b - s0] += complex(self.l_P[j], self.l_Q[j])
                    other += 1
            for j in range(ng):
                b = self.g_bus[j]
                if self.g_conn[j] and s0 <= b < s0 + n:
                    gb.append(b - s0)
                    gp.append(self.g_P[j])
                    gt.append(x[self.g_x[j]])
                    other += 1
            if forming == 0:
                self.Vac[s0:s0 + n] = 0.0
                if other:
                    self.detail = k
                    return AC_NO_FORMING
                continue
            v0 = self.Vac[s0:s0 + n].copy()
            if np.any(np.abs(v0) < 0.05):
                v0[:] = 1.0
            v, _, ok = ac_newton(Y, isrc, sload, np.array(gb, dtype=np.int64),
                                 np.array(gp), np.array(gt), v0)
            if not ok:
                self.detail = k
                return AC_NEWTON
            self.Vac[s0:s0 + n] = v

        V = self.Vac
        # ---- AC device powers
        for j in range(ns):
            o = self.s_obs[j]
            if self.s_conn[j]:
                th = x[self.s_x[j]]
                e = self.s_E[j] * complex(math.cos(th), math.sin(th))
                s = e * (complex(self.s_yr[j], self.s_yi[j]) * (e - V[self.s_bus[j]])).conjugate()
                p, q = s.real, s.imag
                w = self.s_wset[j] + self.s_k[j] * (self.s_pset[j] - p)
                dx[self.s_x[j]] = wb * (w - 1.0)
            else:
                p = q = 0.0
                w = self.s_wset[j]
            obs[o] = p
            obs[o + 1] = q
            obs[o + 2] = w
        for m in range(ni):
            if self.i_acc[m]:
                vb = V[self.i_bus[m]]
                if self.i_type[m] == DC_GFM:
                    av = abs(vb)
                    th = ipc_th[m]
                    cur = ipc_gfl_p[m] / av * complex(math.cos(th), math.sin(th))
                    s = vb * cur.conjugate()
                else:
                    e = ipc_e[m] * complex(math.cos(ipc_th[m]), math.sin(ipc_th[m]))
                    s = e * (complex(self.i_yr[m], self.i_yi[m]) * (e - vb)).conjugate()
                self.pac[m] = s.real
                self.qac[m] = s.imag
            else:
                self.pac[m] = 0.0
                self.qac[m] = 0.0

        # ---- DC side
        nd = len(self.d_C)
        pc = np.zeros(nd)           # constant-power injections per node
        form = -np.ones(nd, dtype=np.int64)   # forming terminal id per node
        fv0 = np.zeros(nd)
        fr = np.zeros(nd)
        for j in range(len(self.m_node)):
            if self.m_conn[j]:
                pc[self.m_node[j]] -= self.m_P[j]
        ipc_pcmd = np.zeros(ni)
        for m in range(ni):
            par = self.i_par[m]
            o = self.i_x[m]
            typ = self.i_type[m]
            e = x[o] - par[P_WTSET]
            if typ == AC_GFM:
                if par[P_LAG] > 0:
                    ipc_pcmd[m] = x[o + 5]
                else:
                    ipc_pcmd[m] = par[P_PDCSET] - par[P_KPW] * e - par[P_KIW] * x[o + 4]
                if self.i_dcc[m]:
                    pc[self.i_node[m]] -= ipc_pcmd[m]
                continue
            # DC-forming terminals: V = v0 - r * P_out
            lag_slot = {DC_GFM: 6, HYBRID: 4, ENERGY_BAL: 5}[typ]
            if par[P_LAG] > 0:
                v0, r = x[o + lag_slot], 0.0
            elif typ == DC_GFM:
                if par[P_TAUDC] > 0:
                    v0, r = par[P_VDCSET] + x[o + 4], 0.0
                else:
                    v0, r = par[P_VDCSET] - par[P_KPDC] * par[P_PDCSET], par[P_KPDC]
            elif typ == HYBRID:
                if par[P_TAUDC] > 0:
                    v0, r = par[P_VDCSET] + x[o + 3], 0.0
                else:
                    v0 = par[P_VDCSET] - par[P_KPDC] * par[P_PDCSET] + par[P_KWDC] * e
                    r = par[P_KPDC]
            else:
                if par[P_TAUDC] > 0:
                    md = x[o + 4]
                    v0 = par[P_VDCSET] + par[P_KWDC] * md + par[P_KPDC] * (e - md) / par[P_TAUDC]
                    r = 0.0
                else:
                    v0 = par[P_VDCSET] - par[P_KPDC] * self.pac[m] + par[P_KWDC] * e
                    r = par[P_KPDC]
            self.vt[m] = v0
            if self.i_dcc[m]:
                nd_ = self.i_node[m]
                if form[nd_] >= 0:
                    self.detail = nd_
                    return DC_INFEASIBLE
                form[nd_] = 1000 + m
                fv0[nd_] = v0
                fr[nd_] = r
        for j in range(len(self.q_node)):
            if self.q_conn[j]:
                nd_ = self.q_node[j]
                if form[nd_] >= 0:
                    self.detail = nd_
                    return DC_INFEASIBLE
                form[nd_] = j
                fv0[nd_] = self.q_vset[j] + self.q_k[j] * self.q_pset[j]
                fr[nd_] = self.q_k[j]

        pout = np.zeros(nd)
        Vd = self.Vdc
        for k in range(len(self.dci_start)):
            s0 = self.dci_start[k]
            n = self.dci_len[k]
            nf = int(np.sum(form[s0:s0 + n] >= 0))
            busy = nf > 0 or any(self._node_has_const(i) for i in range(s0, s0 + n))
            self.dc_energized[k] = 1 if busy else 0
            if analytic:
                if nf == 0:
                    Vd[s0:s0 + n] = 0.0
                    if busy:
                        self.detail = k
                        return DC_NO_FORMING
                    continue
                st = self._dc_newton(s0, n, form, fv0, fr, pc, Vd)
                if st != OK:
                    self.detail = k
                    return st
                G = self.Gd[s0:s0 + n, s0:s0 + n]
                v = Vd[s0:s0 + n]
                h = v * (G @ v) + self.d_g[s0:s0 + n] * v * v
                pout[s0:s0 + n] = h - pc[s0:s0 + n]
        if not analytic:
            iout = np.zeros(nd)
            for sgi in range(len(self.sg_from)):
                xs = self.sg_x[sgi]
                itot = x[xs] + x[xs + 1] + x[xs + 2]
                iout[self.sg_from[sgi]] += itot
                iout[self.sg_to[sgi]] -= itot
            for i in range(nd):
                g = self.d_g[i]
                if form[i] >= 0:
                    r = fr[i]
                    b = 1.0 + r * iout[i]
                    c = fv0[i] + r * pc[i]
                    if r * g == 0.0:
                        if b <= 0.0:
                            self.detail = i
                            return DC_INFEASIBLE
                        v = c / b
                    else:
                        disc = b * b + 4.0 * r * g * c
                        if disc < 0.0 or b + math.sqrt(disc) <= 0.0:
                            self.detail = i
                            return DC_INFEASIBLE
                        v = 2.0 * c / (b + math.sqrt(disc))
                    Vd[i] = v
                    pout[i] = v * iout[i] + g * v * v - pc[i]
                else:
                    v = x[self.d_x[i]]
                    if v < 1e-3:
                        self.detail = i
                        return DC_COLLAPSE
                    Vd[i] = v
                    dx[self.d_x[i]] = (-iout[i] - g * v + pc[i] / v) / self.d_C[i]
            for sgi in range(len(self.sg_from)):
                xs = self.sg_x[sgi]
                du = Vd[self.sg_from[sgi]] - Vd[self.sg_to[sgi]]
                for q in range(3):
                    dx[xs + q] = (du - self.sg_R[sgi, q] * x[xs + q]) / self.sg_L[sgi, q]

        for m in range(ni):
            if not self.i_dcc[m]:
                self.pdc[m] = 0.0
                if self.i_type[m] == AC_GFM:
                    self.vt[m] = Vd[self.i_node[m]]
                continue
            if self.i_type[m] == AC_GFM:
                self.pdc[m] = ipc_pcmd[m]
                self.vt[m] = Vd[self.i_node[m]]
            else:
                self.pdc[m] = -pout[self.i_node[m]]
                self.vt[m] = Vd[self.i_node[m]]
        for j in range(len(self.q_node)):
            o = self.q_obs[j]
            if self.q_conn[j]:
                obs[o] = pout[self.q_node[j]]
                obs[o + 1] = Vd[self.q_node[j]]
            else:
                obs[o] = 0.0
                obs[o + 1] = 0.0

        # ---- IPC controllers
        for m in range(ni):
            par = self.i_par[m]
            o = self.i_x[m]
            typ = self.i_type[m]
            e = x[o] - par[P_WTSET]
            pac, qac, pdc = self.pac[m], self.qac[m], self.pdc[m]
            dw = pdc - pac
            dx[o] = dw
            lag = par[P_LAG]
            tq = par[P_TAUQ]
            if typ == AC_GFM:
                if par[P_TAUAC] > 0:
                    pf = x[o + 2]
                    dx[o + 2] = (pac - pf) / par[P_TAUAC]
                else:
                    pf = pac
                w = par[P_WSET] + par[P_KPAC] * (par[P_PACSET] - pf)
                dx[o + 1] = wb * (w - 1.0)
                dx[o + 3] = (qac - x[o + 3]) / tq
                dx[o + 4] = e
                if lag > 0:
                    cmd = par[P_PDCSET] - par[P_KPW] * e - par[P_KIW] * x[o + 4]
                    dx[o + 5] = (cmd - x[o + 5]) / lag
            elif typ == DC_GFM:
                vb = V[self.i_bus[m]]
                av = abs(vb)
                th = x[o + 1]
                if av > 1e-9:
                    epll = (vb.imag * math.cos(th) - vb.real * math.sin(th)) / av
                else:
                    epll = 0.0
                w = 1.0 + par[P_PLLKP] * epll + x[o + 2]
                dx[o + 1] = wb * (w - 1.0)
                dx[o + 2] = par[P_PLLKI] * epll
                dx[o + 3] = e
                if par[P_TAUDC] > 0:
                    dx[o + 4] = (par[P_KPDC] * (pdc - par[P_PDCSET]) - x[o + 4]) / par[P_TAUDC]
                    vcmd = par[P_VDCSET] + x[o + 4]
                else:
                    vcmd = par[P_VDCSET] + par[P_KPDC] * (pdc - par[P_PDCSET])
                if lag > 0:
                    pcmd = par[P_PACSET] + par[P_KPW] * e + par[P_KIW] * x[o + 3]
                    dx[o + 5] = (pcmd - x[o + 5]) / lag
                    dx[o + 6] = (vcmd - x[o + 6]) / lag
            elif typ == HYBRID:
                w = par[P_WSET] + par[P_KPAC] * (par[P_PACSET] - pac) + par[P_KWAC] * e
                dx[o + 1] = wb * (w - 1.0)
                dx[o + 2] = (qac - x[o + 2]) / tq
                u = par[P_KPDC] * (pdc - par[P_PDCSET]) + par[P_KWDC] * e
                if par[P_TAUDC] > 0:
                    dx[o + 3] = (u - x[o + 3]) / par[P_TAUDC]
                    vcmd = par[P_VDCSET] + x[o + 3]
                else:
                    vcmd = par[P_VDCSET] + u
                if lag > 0:
                    dx[o + 4] = (vcmd - x[o + 4]) / lag
            else:
                if par[P_TAUAC] > 0:
                    ma = x[o + 3]
                    dx[o + 3] = (e - ma) / par[P_TAUAC]
                    w = par[P_WSET] + par[P_KWAC] * e + par[P_KPAC] * (e - ma) / par[P_TAUAC]
                else:
                    w = par[P_WSET] + par[P_KWAC] * e + par[P_KPAC] * dw
                dx[o + 1] = wb * (w - 1.0)
                dx[o + 2] = (qac - x[o + 2]) / tq
                if par[P_TAUDC] > 0:
                    md = x[o + 4]
                    dx[o + 4] = (e - md) / par[P_TAUDC]
                    vcmd = par[P_VDCSET] + par[P_KWDC] * md + par[P_KPDC] * (e - md) / par[P_TAUDC]
                else:
                    vcmd = par[P_VDCSET] + par[P_KPDC] * dw + par[P_KWDC] * e
                if lag > 0:
                    dx[o + 5] = (vcmd - x[o + 5]) / lag
            self.wipc[m] = w
            ob = self.i_obs[m]
            obs[ob] = pac
            obs[ob + 1] = qac
            obs[ob + 2] = pdc
            obs[ob + 3] = w
            obs[ob + 4] = self.vt[m]
            obs[ob + 5] = self.emf[m]

        # ---- grid-following PLL sources
        for j in range(ng):
            o = self.g_obs[j]
            xs = self.g_x[j]
            if not self.g_conn[j]:
                obs[o] = 0.0
                obs[o + 1] = 1.0 + x[xs + 1]
                obs[o + 2] = abs(V[self.g_bus[j]])
                continue
            vb = V[self.g_bus[j]]
            av = abs(vb)
            th = x[xs]
            if av > 1e-9:
                epll = (vb.imag * math.cos(th) - vb.real * math.sin(th)) / av
                cur = self.g_P[j] / av * complex(math.cos(th), math.sin(th))
                p = (vb * cur.conjugate()).real
            else:
                epll = 0.0
                p = 0.0
            w = 1.0 + self.g_kp[j] * epll + x[xs + 1]
            dx[xs] = wb * (w - 1.0)
            dx[xs + 1] = self.g_ki[j] * epll
            obs[o] = p
            obs[o + 1] = w
            obs[o + 2] = av

        # ---- bus and node observables
        for b in range(len(V)):
            obs[self.bus_obs0[0] + 2 * b] = abs(V[b])
            obs[self.bus_obs0[0] + 2 * b + 1] = math.atan2(V[b].imag, V[b].real)
        for i in range(nd):
            obs[self.node_obs0[0] + i] = Vd[i]
        return OK

    def _node_has_const(self, i):
        for j in range(len(self.m_node)):
            if self.m_conn[j] and self.m_node[j] == i:
                return True
        for m in range(len(self.i_node)):
            if self.i_dcc[m] and self.i_node[m] == i:
                return True
        return False

    def _dc_newton(self, s0, n, form, fv0, fr, pc, Vd):
        G = self.Gd[s0:s0 + n, s0:s0 + n]
        g = self.d_g[s0:s0 + n]
        f = form[s0:s0 + n] >= 0
        r = fr[s0:s0 + n]
        v0 = fv0[s0:s0 + n]
        p = pc[s0:s0 + n]
        v = Vd[s0:s0 + n].copy()
        if np.any(v < 0.05):
            v[:] = 1.0
        polished = False
        for it in range(MAX_IT + 1):
            gv = G @ v
            h = v * gv + g * v * v
            R = np.where(f, v - v0 + r * (h - p), h - p)
            if np.max(np.abs(R)) < DC_TOL:
                if polished:
                    Vd[s0:s0 + n] = v
                    return OK
                polished = True
            if it == MAX_IT:
                break
            dh = v[:, None] * G + np.diag(gv + 2 * g * v)
            J = np.where(f[:, None], np.eye(n) + r[:, None] * dh, dh)
            try:
                v = v - np.linalg.solve(J, R)
            except np.linalg.LinAlgError:
                return DC_NEWTON
            if not np.all(np.isfinite(v)) or np.any(v <= 0):
                return DC_NEWTON
        return DC_NEWTON

    # ------------------------------------------------------------------ #
    def check(self, x, dt):
        """Instability detector on the observables of the latest evaluation."""
        obs = self.obs
        for j in range(len(self.s_bus)):
            if self.s_conn[j] and abs(obs[self.s_obs[j] + 2] - 1.0) > FREQ_LIMIT:
                self.detail = j
                return FREQ_DEV
        ni = len(self.i_bus)
        for m in range(ni):
            if x[self.i_x[m]] <= 0.0:
                self.detail = m
                return ENERGY_COLLAPSE
            if self.i_acc[m] and abs(self.wipc[m] - 1.0) > FREQ_LIMIT:
                self.detail = m
                return FREQ_DEV
            if self.i_dcc[m] and abs(self.vt[m] - 1.0) > VDC_LIMIT:
                self.detail = m
                return VDC_DEV
        for k in range(len(self.dci_start)):
            if self.dc_energized[k]:
                s0 = self.dci_start[k]
                for i in range(s0, s0 + self.dci_len[k]):
                    if abs(self.Vdc[i] - 1.0) > VDC_LIMIT:
                        self.detail = i
                        return VDC_DEV
        ng = len(self.g_bus)
        for j in range(ng + ni):
            if j < ng:
                on = self.g_conn[j]
                bus = self.g_bus[j]
                w = obs[self.g_obs[j] + 1]
            else:
                m = j - ng
                on = self.i_acc[m] and self.i_type[m] == DC_GFM
                bus = self.i_bus[m]
                w = self.wipc[m]
            if not on:
                self.dead[j] = 0.0
                continue
            if abs(w - 1.0) > 0.2 and not self.pll_oor[j]:
                self.pll_oor[j] = 1
            if abs(self.Vac[bus]) <= DEAD_BUS_V:
                self.dead[j] += dt
                if self.dead[j] > DEAD_BUS_T:
                    self.detail = j
                    return PLL_DEAD_BUS
            else:
                self.dead[j] = 0.0
        for i in range(len(x)):
            if not math.isfinite(x[i]):
                self.detail = i
                return NON_FINITE
        return OK

    def run(self, x, step0, dt, nsteps, rec_every, rec_t, rec_x, rec_obs, rec_pos):
        """Advance ``x`` in place by up to ``nsteps`` RK4 steps from step ``step0``.

        Samples (time, state, observables) are written whenever the global
        step index is a multiple of ``rec_every`` (and at a failure),
        starting at row ``rec_pos``. Returns
        ``(status, steps_done, rec_pos)``; on a non-zero status the state
        is left at the last accepted step.
        """
        nx = self.nx
        k1 = np.zeros(nx)
        k2 = np.zeros(nx)
        k3 = np.zeros(nx)
        k4 = np.zeros(nx)
        xt = np.zeros(nx)
        ni = len(self.i_bus)
        t0 = step0 * dt
        st = self.rhs(t0, x, k1)
        if st != OK:
            return st, 0, rec_pos
        for step in range(nsteps):
            t = (step0 + step) * dt
            xt[:] = x + 0.5 * dt * k1
            st = self.rhs(t + 0.5 * dt, xt, k2)
            if st != OK:
                return st, step, rec_pos
            xt[:] = x + 0.5 * dt * k2
            st = self.rhs(t + 0.5 * dt, xt, k3)
            if st != OK:
                return st, step, rec_pos
            xt[:] = x + dt * k3
            st = self.rhs(t + dt, xt, k4)
            if st != OK:
                return st, step, rec_pos
            inc = (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            for m in range(ni):
                self.equad[m] += inc[self.i_x[m]]
            x += inc
            st = self.rhs(t + dt, x, k1)
            if st == OK:
                st = self.check(x, dt)
            done = step + 1
            if rec_every > 0 and ((step0 + done) % rec_every == 0 or st != OK) \
                    and rec_pos < rec_t.shape[0]:
                rec_t[rec_pos] = (step0 + done) * dt
                rec_x[rec_pos, :] = x
                rec_obs[rec_pos, :] = self.obs
                rec_pos += 1
            if st != OK:
                return st, done, rec_pos
        return OK, nsteps, rec_pos
