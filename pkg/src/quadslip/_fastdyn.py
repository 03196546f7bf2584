"""Compiled inner loop for the domain dynamics.

Mirrors the generic implementations in :mod:`quadslip.model` (which remain
the reference and the complex-step-differentiable path); the equivalence is
asserted by tests.  Falls back transparently when numba is unavailable.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a soft dependency
    HAVE_NUMBA = False

    def njit(*a, **k):
        def wrap(fn):
            return fn
        return wrap if not (len(a) == 1 and callable(a[0])) else a[0]


@njit(cache=True)
def rhs_core(q, qd, M_T, m_f, J_T, k_ax, l_l, b, M_L, k_tug, l_t,
             mu_N, sgs, cgs, alpha0, k_sw, in_contact, anchors, eps_v):
    """Constrained accelerations for one contact domain.

    Returns (qdd, friction dissipation rate).  ``in_contact`` is a 4-vector
    of 0/1 flags and ``anchors`` a (4, 2) array (rows valid where flagged).
    """
    n = 8
    th = q[2]
    thd = qd[2]
    cth = math.cos(th)
    sth = math.sin(th)

    M = np.zeros((n, n))
    F = np.zeros(n)
    c = np.zeros(n)

    M[0, 0] = M_T + M_L
    M[1, 1] = M_T
    M[2, 2] = J_T
    M[7, 7] = M_L
    M[0, 7] = -M_L
    M[7, 0] = -M_L

    # gravity on torso and load
    F[0] = (M_T + M_L) * sgs
    F[1] = -M_T * cgs
    F[7] = -M_L * sgs

    n_con = 0
    for leg in range(4):
        ia = 3 + leg
        if in_contact[leg] == 1:
            n_con += 1
            # axial spring between hip and anchor, applied at the hip
            hipx = q[0] + b[leg] * cth
            hipz = q[1] + b[leg] * sth
            dx = anchors[leg, 0] - hipx
            dz = anchors[leg, 1] - hipz
            ll = math.sqrt(dx * dx + dz * dz)
            ex = dx / ll
            ez = dz / ll
            Fax = k_ax[leg] * (l_l - ll)
            F[0] += -Fax * ex
            F[1] += -Fax * ez
            F[2] += -Fax * (ex * (-b[leg] * sth) + ez * (b[leg] * cth))
        else:
            a = q[ia]
            phi = th + a
            cphi = math.cos(phi)
            sphi = math.sin(phi)
            sa = math.sin(a)
            ca = math.cos(a)
            phid = thd + qd[ia]
            # inertia of the foot point mass through flight kinematics
            M[0, 0] += m_f
            M[1, 1] += m_f
            M[2, 2] += m_f * (b[leg] * b[leg] + l_l * l_l + 2.0 * b[leg] * l_l * sa)
            M[ia, ia] = m_f * l_l * l_l
            m_xth = m_f * (-b[leg] * sth + l_l * cphi)
            m_zth = m_f * (b[leg] * cth + l_l * sphi)
            m_xa = m_f * l_l * cphi
            m_za = m_f * l_l * sphi
            m_tha = m_f * (l_l * l_l + b[leg] * l_l * sa)
            M[0, 2] += m_xth
            M[1, 2] += m_zth
            M[2, 0] += m_xth
            M[2, 1] += m_zth
            M[0, ia] = m_xa
            M[1, ia] = m_za
            M[2, ia] = m_tha
            M[ia, 0] = m_xa
            M[ia, 1] = m_za
            M[ia, 2] = m_tha
            # velocity products
            c[0] += m_f * (-b[leg] * thd * thd * cth - l_l * phid * phid * sphi)
            c[1] += m_f * (-b[leg] * thd * thd * sth + l_l * phid * phid * cphi)
            c[2] += m_f * b[leg] * l_l * ca * (phid * phid - thd * thd)
            c[ia] += -m_f * b[leg] * l_l * thd * thd * ca
            # gravity + torsional swing spring
            F[0] += m_f * sgs
            F[1] += -m_f * cgs
            F[2] += m_f * (sgs * (-b[leg] * sth + l_l * cphi)
                           - cgs * (b[leg] * cth + l_l * sphi))
            F[ia] += m_f * l_l * (sgs * cphi - cgs * sphi)
            F[ia] += -k_sw[leg] * (a - alpha0[leg])

    # unilateral tow line
    e_t = q[7] - l_t
    if e_t > 0.0:
        F[7] += -k_tug * e_t

    # regularized Coulomb friction at the load
    v_load = qd[0] - qd[7]
    F_f = -mu_N * math.tanh(v_load / eps_v)
    F[0] += F_f
    F[7] += -F_f
    diss = -F_f * v_load

    rhsv = F - c
    if n_con == 0:
        qdd = np.linalg.solve(M, rhsv)
        return qdd, diss

    # angle-slaving rows for stance legs
    dim = n + n_con
    kkt = np.zeros((dim, dim))
    bb = np.zeros(dim)
    for i in range(n):
        for j in range(n):
            kkt[i, j] = M[i, j]
        bb[i] = rhsv[i]
    r = 0
    for leg in range(4):
        if in_contact[leg] == 0:
            continue
        ia = 3 + leg
        phi = th + q[ia]
        cphi = math.cos(phi)
        sphi = math.sin(phi)
        hipx = q[0] + b[leg] * cth
        hipz = q[1] + b[leg] * sth
        dx = anchors[leg, 0] - hipx
        dz = anchors[leg, 1] - hipz
        Jrow = np.zeros(n)
        Jrow[0] = -cphi
        Jrow[1] = -sphi
        Jrow[2] = b[leg] * sth * cphi - b[leg] * cth * sphi + (-dx * sphi + dz * cphi)
        Jrow[ia] = -dx * sphi + dz * cphi
        # velocity term h = Jdot @ qd (analytic; see stance_constraint)
        phid = thd + qd[ia]
        vhx = qd[0] - b[leg] * sth * thd
        vhz = qd[1] + b[leg] * cth * thd
        g_val = dx * cphi + dz * sphi
        h = (b[leg] * thd * thd * math.cos(phi - th)
             + 2.0 * phid * (vhx * sphi - vhz * cphi)
             - phid * phid * g_val)
        for j in range(n):
            kkt[j, n + r] = -Jrow[j]
            kkt[n + r, j] = Jrow[j]
        bb[n + r] = -h
        r += 1
    sol = np.linalg.solve(kkt, bb)
    return sol[:n], diss


def domain_rhs_factory(p, contacts, anchors, k_row):
    """Fast RHS closure matching hybrid_sim._domain_rhs semantics."""
    in_contact = np.zeros(4, dtype=np.int64)
    anch = np.zeros((4, 2))
    for leg in contacts:
        in_contact[leg] = 1
        anch[leg] = anchors[leg]
    b = np.asarray(p.hip_offsets, dtype=float)
    k_ax = np.asarray(p.k_axial, dtype=float)
    alpha0 = np.asarray(p.alpha0, dtype=float)
    k_sw = np.asarray(k_row, dtype=float)
    sgs = math.sin(p.theta_slope)
    cgs = math.cos(p.theta_slope)
    mu_N = p.mu_ground * p.M_load * cgs
    M_T, m_f, J_T = p.M_torso, p.m_foot, p.J_torso
    l_l, M_L, k_tug, l_t = p.l_l, p.M_load, p.k_tug, p.l_t
    from .model import EPS_V_FRICTION

    def rhs(t, y):
        qdd, diss = rhs_core(y[:8], y[8:16], M_T, m_f, J_T, k_ax, l_l, b,
                             M_L, k_tug, l_t, mu_N, sgs, cgs, alpha0, k_sw,
                             in_contact, anch, EPS_V_FRICTION)
        out = np.empty(17)
        out[:8] = y[8:16]
        out[8:16] = qdd
        out[16] = diss
        return out

    return rhs
