"""Planar quadruped-with-towed-load mechanics in normalized units.

The system carries eight generalized coordinates

    q = [q_x, q_z, q_theta, alpha_LH, alpha_LF, alpha_RF, alpha_RH, q_load]

in a slope-aligned frame (ground at z = 0, gravity tilted by the slope
angle).  All quantities are normalized by total mass, gravity, and resting
leg length, so the total weight is 1 and the rest leg length is the unit of
length.

Legs are massless axial springs with point feet.  A flight leg is a rigid
rod of rest length carrying the foot mass, swinging about the hip under a
torsional spring.  A stance leg has its foot pinned at a ground anchor; the
hip-anchor distance is the compressed spring length, and the leg-angle
coordinate is slaved to the hip/anchor geometry through a scalar constraint
row per stance leg (the angle carries no inertia in stance).  Touchdown
impacts instead use the two-row Jacobian of the rigid flight foot, which is
what transmits the impulsive contact force.

The towed load is a point mass sliding on the ground behind the torso,
coupled by a tension-only horizontal spring attached at the torso CoM;
``q_load`` is the torso-to-load distance, so the load sits at
``q_x - q_load``.

All evaluation functions are dtype-generic so that complex-step
differentiation works on them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .gait import LEGS, LH, LF, RF, RH, MIRROR_PERM

N_Q = 8
IX, IZ, ITH = 0, 1, 2
IA = 3  # alpha block start: IA + leg index
IS = 7  # load displacement

EPS_V_FRICTION = 1e-3


class SingularConfigurationError(ValueError):
    """Raised when a stance leg collapses or a contact system degenerates."""


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

PARAM_KEYS = (
    "M_torso", "m_foot", "J_torso", "k_leg", "r_leg", "l_l", "l_bH", "l_bF",
    "M_load", "k_tug", "l_t", "mu_ground", "theta_slope", "alpha0", "k_swing",
)


@dataclass(frozen=True)
class ModelParams:
    """Normalized model parameters plus the per-stride swing stiffness plan.

    ``k_swing`` holds one 4-vector (LH, LF, RF, RH order) per planned stride.
    """

    M_torso: float
    m_foot: float
    J_torso: float
    k_leg: float
    r_leg: float
    l_l: float
    l_bH: float
    l_bF: float
    M_load: float
    k_tug: float
    l_t: float
    mu_ground: float
    theta_slope: float
    alpha0: tuple[float, float, float, float]
    k_swing: tuple[tuple[float, float, float, float], ...]

    def __post_init__(self):
        total = self.M_torso + 4.0 * self.m_foot + self.M_load
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"mass normalization violated: total mass {total} != 1")
        for name in ("M_torso", "m_foot", "J_torso", "k_leg", "r_leg", "l_l",
                     "l_bH", "l_bF", "M_load", "k_tug", "l_t"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.mu_ground < 0.0:
            raise ValueError("mu_ground must be nonnegative")
        if abs(self.theta_slope) >= 0.2:
            raise ValueError("|theta_slope| must be below 0.2 rad")
        if len(self.alpha0) != 4:
            raise ValueError("alpha0 needs one entry per leg")
        if not self.k_swing or any(len(row) != 4 for row in self.k_swing):
            raise ValueError("k_swing needs one 4-vector per planned stride")
        if any(k <= 0.0 for row in self.k_swing for k in row):
            raise ValueError("swing stiffnesses must be positive")

    # -- derived per-leg arrays ------------------------------------------------

    @property
    def hip_offsets(self) -> np.ndarray:
        """Signed hip distance from the torso CoM along the torso axis."""
        return np.array([-self.l_bH, self.l_bF, self.l_bF, -self.l_bH])

    @property
    def k_axial(self) -> np.ndarray:
        """Axial stiffness per leg; hinds scaled by the hind/fore ratio."""
        k = self.k_leg
        return np.array([self.r_leg * k, k, k, self.r_leg * k])

    def k_swing_row(self, stride_index: int) -> np.ndarray:
        """Swing stiffness 4-vector for a stride, clamping past the plan end."""
        i = min(max(stride_index, 0), len(self.k_swing) - 1)
        return np.asarray(self.k_swing[i], dtype=float)

    def with_k_swing(self, schedule) -> "ModelParams":
        sched = tuple(tuple(float(k) for k in row) for row in np.atleast_2d(schedule))
        return replace(self, k_swing=sched)

    def mirrored(self) -> "ModelParams":
        """Swap left/right leg roles (per-leg arrays permuted)."""
        a0 = tuple(self.alpha0[j] for j in MIRROR_PERM)
        ks = tuple(tuple(row[j] for j in MIRROR_PERM) for row in self.k_swing)
        return replace(self, alpha0=a0, k_swing=ks)

    # -- JSON parameter file ---------------------------------------------------

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in PARAM_KEYS if k not in ("alpha0", "k_swing")}
        d["alpha0"] = list(self.alpha0)
        d["k_swing"] = [list(row) for row in self.k_swing]
        return d

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        unknown = set(d) - set(PARAM_KEYS)
        if unknown:
            raise ValueError(f"unknown parameter keys: {sorted(unknown)}")
        missing = set(PARAM_KEYS) - set(d)
        if missing:
            raise ValueError(f"missing parameter keys: {sorted(missing)}")
        kw = dict(d)
        kw["alpha0"] = tuple(float(a) for a in d["alpha0"])
        kw["k_swing"] = tuple(tuple(float(k) for k in row) for row in d["k_swing"])
        return cls(**kw)

    @classmethod
    def from_json(cls, path) -> "ModelParams":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def default_params(n_strides: int = 1) -> ModelParams:
    """Galloping-dog scale defaults (produced by fitting, see fixtures)."""
    return ModelParams(
        M_torso=0.77,
        m_foot=0.02,
        J_torso=0.04,
        k_leg=16.0,
        r_leg=1.05,
        l_l=1.0,
        l_bH=0.35,
        l_bF=0.35,
        M_load=0.15,
        k_tug=30.0,
        l_t=1.0,
        mu_ground=0.25,
        theta_slope=0.05,
        alpha0=(0.0, 0.0, 0.0, 0.0),
        k_swing=tuple((0.35, 0.35, 0.35, 0.35) for _ in range(n_strides)),
    )


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------

@dataclass
class HybridState:
    """Generalized state plus the active contact set and foot anchors."""

    q: np.ndarray
    qd: np.ndarray
    contacts: tuple[int, ...] = ()
    anchors: dict[int, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "HybridState":
        return HybridState(
            q=np.array(self.q), qd=np.array(self.qd),
            contacts=tuple(self.contacts),
            anchors={i: np.array(a) for i, a in self.anchors.items()},
        )

    @property
    def flight_legs(self) -> tuple[int, ...]:
        return tuple(i for i in range(4) if i not in self.contacts)


@dataclass
class ForceBreakdown:
    """Instantaneous force decomposition at one state."""

    grf: dict[int, np.ndarray]
    tug_force: float
    friction_force: float
    leg_axial: dict[int, float]
    swing_torque: dict[int, float]


# ---------------------------------------------------------------------------
# Kinematics
# ---------------------------------------------------------------------------

def hip_position(q, leg: int, p: ModelParams):
    b = p.hip_offsets[leg]
    th = q[ITH]
    return np.array([q[IX] + b * np.cos(th), q[IZ] + b * np.sin(th)])


def foot_position(q, leg: int, p: ModelParams):
    """Flight-kinematics foot point: rigid leg of rest length at the hip.

    The leg angle is measured from the torso-normal, positive forward, so a
    zero angle at zero pitch puts the foot straight below the hip.
    """
    phi = q[ITH] + q[IA + leg]
    hip = hip_position(q, leg, p)
    return hip + p.l_l * np.array([np.sin(phi), -np.cos(phi)])


def foot_velocity(q, qd, leg: int, p: ModelParams):
    b = p.hip_offsets[leg]
    th = q[ITH]
    phi = th + q[IA + leg]
    phid = qd[ITH] + qd[IA + leg]
    vx = qd[IX] - b * np.sin(th) * qd[ITH] + p.l_l * np.cos(phi) * phid
    vz = qd[IZ] + b * np.cos(th) * qd[ITH] + p.l_l * np.sin(phi) * phid
    return np.array([vx, vz])


def stance_leg_vector(q, leg: int, anchor, p: ModelParams):
    """Hip-to-anchor vector, its length, and the unit direction."""
    hip = hip_position(q, leg, p)
    d = np.asarray(anchor) - hip
    l = np.sqrt(d[0] * d[0] + d[1] * d[1])
    return d, l, d / l


def leg_length(q, leg: int, anchor, p: ModelParams):
    return stance_leg_vector(q, leg, anchor, p)[1]


# ---------------------------------------------------------------------------
# Elementary force laws
# ---------------------------------------------------------------------------

def tug_elongation(q, p: ModelParams):
    return q[IS] - p.l_t


def tug_force(q, p: ModelParams):
    """Tension-only spring force magnitude (>= 0)."""
    e = tug_elongation(q, p)
    return p.k_tug * np.where(np.real(e) > 0.0, e, 0.0 * e)


def friction_force(v_load, normal_load, p: ModelParams, eps_v: float = EPS_V_FRICTION):
    """Regularized Coulomb friction opposing the load's sliding velocity."""
    return -p.mu_ground * normal_load * np.tanh(v_load / eps_v)


def axial_spring_force(ll, k_ax, l_rest):
    """Axial spring magnitude, positive in compression (pushes apart)."""
    return k_ax * (l_rest - ll)


# ---------------------------------------------------------------------------
# Mass matrix and velocity terms
# ---------------------------------------------------------------------------

def mass_matrix(q, p: ModelParams, contacts: tuple[int, ...] = ()):
    """Symmetric 8x8 mass matrix.

    Foot point masses enter through the flight kinematics; feet listed in
    ``contacts`` sit at fixed ground anchors and contribute no inertia (their
    rows are completed by the stance constraint).
    """
    M = np.zeros((N_Q, N_Q), dtype=np.result_type(q.dtype, float))
    mT, mf, mL = p.M_torso, p.m_foot, p.M_load
    ll = p.l_l
    th = q[ITH]
    cth, sth = np.cos(th), np.sin(th)

    M[IX, IX] = mT + mL
    M[IZ, IZ] = mT
    M[ITH, ITH] = p.J_torso
    M[IS, IS] = mL
    M[IX, IS] = M[IS, IX] = -mL

    for leg in range(4):
        if leg in contacts:
            continue
        b = p.hip_offsets[leg]
        a = q[IA + leg]
        phi = th + a
        cphi, sphi = np.cos(phi), np.sin(phi)
        ia = IA + leg
        M[IX, IX] += mf
        M[IZ, IZ] += mf
        M[ITH, ITH] += mf * (b * b + ll * ll + 2.0 * b * ll * np.sin(a))
        M[ia, ia] = mf * ll * ll
        M[IX, ITH] += mf * (-b * sth + ll * cphi)
        M[IZ, ITH] += mf * (b * cth + ll * sphi)
        M[IX, ia] = mf * ll * cphi
        M[IZ, ia] = mf * ll * sphi
        M[ITH, ia] = mf * (ll * ll + b * ll * np.sin(a))
        M[ITH, IX] = M[IX, ITH]
        M[ITH, IZ] = M[IZ, ITH]
        M[ia, IX] = M[IX, ia]
        M[ia, IZ] = M[IZ, ia]
        M[ia, ITH] = M[ITH, ia]
    return M


def coriolis_vector(q, qd, p: ModelParams, contacts: tuple[int, ...] = ()):
    """Velocity-product bias C(q, qd) qd (no gravity)."""
    c = np.zeros(N_Q, dtype=np.result_type(q.dtype, qd.dtype, float))
    mf, ll = p.m_foot, p.l_l
    th, thd = q[ITH], qd[ITH]
    cth, sth = np.cos(th), np.sin(th)
    for leg in range(4):
        if leg in contacts:
            continue
        b = p.hip_offsets[leg]
        a = q[IA + leg]
        phi = th + a
        phid = thd + qd[IA + leg]
        cphi, sphi = np.cos(phi), np.sin(phi)
        c[IX] += mf * (-b * thd * thd * cth - ll * phid * phid * sphi)
        c[IZ] += mf * (-b * thd * thd * sth + ll * phid * phid * cphi)
        c[ITH] += mf * b * ll * np.cos(a) * (phid * phid - thd * thd)
        c[IA + leg] += -mf * b * ll * thd * thd * np.cos(a)
    return c


def gravity_vector(q, p: ModelParams, contacts: tuple[int, ...] = ()):
    """Generalized gravity force in the slope frame.

    Gravity components are (sin(theta_slope), -cos(theta_slope)) so forward
    travel gains energy on a positive slope.  Anchored feet and the load's
    normal weight rest on the ground and do not enter the generalized force.
    """
    g = np.zeros(N_Q, dtype=np.result_type(q.dtype, float))
    sgs, cgs = math.sin(p.theta_slope), math.cos(p.theta_slope)
    mT, mf, mL, ll = p.M_torso, p.m_foot, p.M_load, p.l_l
    th = q[ITH]
    cth, sth = np.cos(th), np.sin(th)
    g[IX] = (mT + mL) * sgs
    g[IZ] = -mT * cgs
    g[IS] = -mL * sgs
    for leg in range(4):
        if leg in contacts:
            continue
        b = p.hip_offsets[leg]
        phi = th + q[IA + leg]
        cphi, sphi = np.cos(phi), np.sin(phi)
        g[IX] += mf * sgs
        g[IZ] += -mf * cgs
        g[ITH] += mf * (sgs * (-b * sth + ll * cphi) - cgs * (b * cth + ll * sphi))
        g[IA + leg] += mf * ll * (sgs * cphi - cgs * sphi)
    return g


def coriolis_gravity(q, qd, p: ModelParams, contacts: tuple[int, ...] = ()):
    """Velocity-product bias and generalized gravity, as separate vectors.

    Gravity is also included in :func:`applied_forces`; the dynamics solver
    combines ``applied_forces - coriolis`` so gravity is counted once.
    """
    return coriolis_vector(q, qd, p, contacts), gravity_vector(q, p, contacts)


# ---------------------------------------------------------------------------
# Applied generalized forces
# ---------------------------------------------------------------------------

def applied_forces(state: HybridState, p: ModelParams, stride_index: int = 0,
                   k_swing_row=None):
    """Total non-inertial generalized force (gravity, springs, tug, friction).

    Axial springs act on stance legs between hip and anchor; torsional swing
    springs act on flight legs only (the stance leg angle is slaved).
    """
    q, qd = state.q, state.qd
    Q = gravity_vector(q, p, state.contacts).astype(np.result_type(q.dtype, qd.dtype, float))
    ks = p.k_swing_row(stride_index) if k_swing_row is None else k_swing_row

    for leg in range(4):
        if leg in state.contacts:
            d, ll_i, e = stance_leg_vector(q, leg, state.anchors[leg], p)
            if np.real(ll_i) <= 1e-10:
                raise SingularConfigurationError(f"stance leg {LEGS[leg]} has collapsed")
            F = axial_spring_force(ll_i, p.k_axial[leg], p.l_l)
            # Force on the hip is -F*e (away from the anchor when compressed).
            b = p.hip_offsets[leg]
            th = q[ITH]
            Q[IX] += -F * e[0]
            Q[IZ] += -F * e[1]
            Q[ITH] += -F * (e[0] * (-b * np.sin(th)) + e[1] * (b * np.cos(th)))
        else:
            Q[IA + leg] += -ks[leg] * (q[IA + leg] - p.alpha0[leg])

    F_t = tug_force(q, p)
    Q[IS] += -F_t

    v_load = qd[IX] - qd[IS]
    N_load = p.M_load * math.cos(p.theta_slope)
    F_f = friction_force(v_load, N_load, p)
    Q[IX] += F_f
    Q[IS] += -F_f
    return Q


def force_breakdown(state: HybridState, p: ModelParams, stride_index: int = 0) -> ForceBreakdown:
    """Per-mechanism forces at a state (GRFs from stance statics)."""
    q, qd = state.q, state.qd
    sgs, cgs = math.sin(p.theta_slope), math.cos(p.theta_slope)
    grf, leg_axial, swing = {}, {}, {}
    ks = p.k_swing_row(stride_index)
    for leg in range(4):
        if leg in state.contacts:
            d, ll_i, e = stance_leg_vector(q, leg, state.anchors[leg], p)
            F = axial_spring_force(ll_i, p.k_axial[leg], p.l_l)
            leg_axial[leg] = float(F)
            # Pinned massless-leg foot statics: ground supplies the spring
            # reaction plus the foot weight.
            grf[leg] = np.array([-F * e[0] - p.m_foot * sgs,
                                 -F * e[1] + p.m_foot * cgs])
        else:
            swing[leg] = float(-ks[leg] * (q[IA + leg] - p.alpha0[leg]))
    v_load = qd[IX] - qd[IS]
    N_load = p.M_load * cgs
    return ForceBreakdown(
        grf=grf,
        tug_force=float(tug_force(q, p)),
        friction_force=float(friction_force(v_load, N_load, p)),
        leg_axial=leg_axial,
        swing_torque=swing,
    )


# ---------------------------------------------------------------------------
# Contact Jacobians
# ---------------------------------------------------------------------------

def foot_pin_rows(q, leg: int, p: ModelParams):
    """2x8 Jacobian of the flight-kinematics foot point of one leg."""
    J = np.zeros((2, N_Q), dtype=np.result_type(q.dtype, float))
    b = p.hip_offsets[leg]
    th = q[ITH]
    phi = th + q[IA + leg]
    ll = p.l_l
    J[0, IX] = 1.0
    J[1, IZ] = 1.0
    J[0, ITH] = -b * np.sin(th) + ll * np.cos(phi)
    J[1, ITH] = b * np.cos(th) + ll * np.sin(phi)
    J[0, IA + leg] = ll * np.cos(phi)
    J[1, IA + leg] = ll * np.sin(phi)
    return J


def contact_jacobian(q, contacts: tuple[int, ...], p: ModelParams, qd=None):
    """Stacked 2k x 8 foot-pin Jacobian and, given qd, its time derivative.

    Rows are the position Jacobians of the (rigid-leg) foot points for each
    stance leg in anatomical order; columns for other legs' angles and for
    the load displacement are zero.  This is the operator used by the
    touchdown impact map; the continuous stance flow uses the scalar
    angle-slaving rows from :func:`stance_constraint`.
    """
    legs = sorted(contacts)
    J = np.zeros((2 * len(legs), N_Q), dtype=np.result_type(q.dtype, float))
    for r, leg in enumerate(legs):
        J[2 * r:2 * r + 2] = foot_pin_rows(q, leg, p)
    if qd is None:
        return J
    Jdot = _time_derivative(lambda qq: _stacked_pin(qq, legs, p), q, qd)
    return J, Jdot


def _stacked_pin(q, legs, p):
    J = np.zeros((2 * len(legs), N_Q), dtype=np.result_type(q.dtype, float))
    for r, leg in enumerate(legs):
        J[2 * r:2 * r + 2] = foot_pin_rows(q, leg, p)
    return J


_CS_H = 1e-30


def _time_derivative(fn, q, qd):
    """d/dt fn(q(t)) along qd via a complex step (exact to machine precision)."""
    return np.imag(fn(q.astype(complex) + 1j * _CS_H * np.asarray(qd))) / _CS_H


# ---------------------------------------------------------------------------
# Stance slaving constraint (continuous flow)
# ---------------------------------------------------------------------------

def slaving_residual(q, leg: int, anchor, p: ModelParams):
    """Scalar alignment residual: the anchor must lie on the leg line.

    g = d_x cos(phi) + d_z sin(phi) with d the hip-to-anchor vector; g = 0
    exactly when the leg direction points at the anchor.
    """
    hip = hip_position(q, leg, p)
    d0 = anchor[0] - hip[0]
    d1 = anchor[1] - hip[1]
    phi = q[ITH] + q[IA + leg]
    return d0 * np.cos(phi) + d1 * np.sin(phi)


def slaving_row(q, leg: int, anchor, p: ModelParams):
    """Gradient of the alignment residual w.r.t. q (1x8)."""
    row = np.zeros(N_Q, dtype=np.result_type(q.dtype, float))
    b = p.hip_offsets[leg]
    th = q[ITH]
    phi = th + q[IA + leg]
    cphi, sphi = np.cos(phi), np.sin(phi)
    hip = hip_position(q, leg, p)
    d0 = anchor[0] - hip[0]
    d1 = anchor[1] - hip[1]
    row[IX] = -cphi
    row[IZ] = -sphi
    row[ITH] = b * np.sin(th) * cphi - b * np.cos(th) * sphi + (-d0 * sphi + d1 * cphi)
    row[IA + leg] = -d0 * sphi + d1 * cphi
    return row


def stance_constraint(q, contacts, anchors, p: ModelParams, qd=None):
    """Stacked k x 8 angle-slaving Jacobian; with qd also Jdot @ qd."""
    legs = sorted(contacts)
    J = np.zeros((len(legs), N_Q), dtype=np.result_type(q.dtype, float))
    for r, leg in enumerate(legs):
        J[r] = slaving_row(q, leg, anchors[leg], p)
    if qd is None:
        return J

    def stacked(qq):
        out = np.zeros((len(legs), N_Q), dtype=np.result_type(qq.dtype, float))
        for r, leg in enumerate(legs):
            out[r] = slaving_row(qq, leg, anchors[leg], p)
        return out

    Jdot_qd = _time_derivative(stacked, q, qd) @ np.asarray(qd)
    return J, Jdot_qd


def slave_stance_angles(state: HybridState, p: ModelParams) -> HybridState:
    """Project stance leg angles/rates onto the hip-anchor geometry exactly."""
    st = state.copy()
    for leg in st.contacts:
        d, ll_i, e = stance_leg_vector(st.q, leg, st.anchors[leg], p)
        phi = math.atan2(float(d[0]), -float(d[1]))
        a_now = st.q[ITH] + st.q[IA + leg]
        # keep the branch of phi nearest the current angle
        phi += 2.0 * math.pi * round((float(a_now) - phi) / (2.0 * math.pi))
        st.q[IA + leg] = phi - st.q[ITH]
        b = p.hip_offsets[leg]
        th = st.q[ITH]
        v_hip = np.array([
            st.qd[IX] - b * math.sin(th) * st.qd[ITH],
            st.qd[IZ] + b * math.cos(th) * st.qd[ITH],
        ])
        e_perp = np.array([-e[1], e[0]])
        phid = -float(v_hip @ e_perp) / float(ll_i)
        st.qd[IA + leg] = phid - st.qd[ITH]
    return st


# ---------------------------------------------------------------------------
# Energy bookkeeping
# ---------------------------------------------------------------------------

def kinetic_energy(state: HybridState, p: ModelParams) -> float:
    M = mass_matrix(state.q, p, state.contacts)
    return 0.5 * float(state.qd @ M @ state.qd)


def potential_energy(state: HybridState, p: ModelParams, stride_index: int = 0,
                     include_slope: bool = False) -> float:
    """Springs plus slope-normal gravity (optionally the along-slope part).

    With ``include_slope`` the full tilted-gravity potential is used, which
    is conserved together with kinetic energy in conservative setups; without
    it the along-slope gravity work must be tracked separately.
    """
    q = state.q
    cgs = math.cos(p.theta_slope)
    sgs = math.sin(p.theta_slope)
    ks = p.k_swing_row(stride_index)
    V = p.M_torso * cgs * float(q[IZ])
    if include_slope:
        V += -sgs * (p.M_torso + p.M_load) * float(q[IX])
        V += sgs * p.M_load * float(q[IS])
    for leg in range(4):
        if leg in state.contacts:
            ll_i = float(leg_length(q, leg, state.anchors[leg], p))
            V += 0.5 * p.k_axial[leg] * (p.l_l - ll_i) ** 2
            if include_slope:
                V += -sgs * p.m_foot * float(state.anchors[leg][0])
        else:
            foot = foot_position(q, leg, p)
            V += p.m_foot * cgs * float(foot[1])
            V += 0.5 * ks[leg] * (float(q[IA + leg]) - p.alpha0[leg]) ** 2
            if include_slope:
                V += -sgs * p.m_foot * float(foot[0])
    e = float(tug_elongation(q, p))
    if e > 0.0:
        V += 0.5 * p.k_tug * e * e
    return V


def total_energy(state: HybridState, p: ModelParams, stride_index: int = 0,
                 include_slope: bool = False) -> float:
    return kinetic_energy(state, p) + potential_energy(state, p, stride_index, include_slope)
