"""Event-driven hybrid simulation of the quadruped-load system.

A stride runs from one flight apex (torso slope-normal velocity zero during
the extended flight phase) to the next.  Within a contact domain the flow is
a constrained ODE; touchdown/liftoff events are located on dense output and
connected by reset maps:

* touchdown: the foot undergoes a perfectly plastic impact absorbed by the
  foot mass; the remaining velocities follow the contact-consistent momentum
  solve (torso velocities are unchanged in the massless-spring-leg limit and
  the stance leg angle rate is slaved);
* liftoff: identity on velocities (constraint removal, no impulse).

Two discrete energy-exchange terms are inherent to the fixed-8-coordinate
model and are tracked for audits: the kinetic kick a foot receives when it
rejoins the rigid flight leg at liftoff, and the torsional-spring energy
parked/released when the swing spring disengages during stance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import model as mdl
from .gait import LEGS, StrideTiming
from .model import (HybridState, ModelParams, N_Q, IX, IZ, ITH, IA, IS,
                    SingularConfigurationError)

RTOL_DEFAULT = 1e-10
ATOL_DEFAULT = 1e-12
GUARD_TOL = 1e-12
ZENO_CAP = 12


class SimulationError(RuntimeError):
    pass


class EventNotFoundError(SimulationError):
    pass


class SequenceViolationError(SimulationError):
    def __init__(self, expected, got, t):
        super().__init__(f"expected event {expected} but {got} fired first at t={t:.6g}")
        self.expected = expected
        self.got = got
        self.t = t


class ZenoError(SimulationError):
    pass


class IncompleteStrideError(SimulationError):
    pass


@dataclass(frozen=True)
class DomainSpec:
    """Prescribed event order for one stride (free detection when empty).

    ``events`` lists (leg-name, "TD"|"LO") pairs in the order they must
    occur.  Events are still located by their guards: the expected guard
    terminates each domain, while crossings of other guards are recorded as
    sequence-violation diagnostics (swing feet grazing the ground during a
    gallop are the typical case).  With ``strict`` a violation raises
    instead.
    """

    events: tuple[tuple[str, str], ...] = ()
    strict: bool = False

    @property
    def prescribed(self) -> bool:
        return len(self.events) > 0

    @staticmethod
    def from_timing(timing) -> "DomainSpec":
        """Event order implied by a stride timing vector."""
        evs = [(LEGS[i], "TD", timing.t_td[i]) for i in range(4)]
        evs += [(LEGS[i], "LO", timing.t_lo[i]) for i in range(4)]
        evs.sort(key=lambda e: e[2])
        return DomainSpec(events=tuple((leg, kind) for leg, kind, _ in evs))


@dataclass
class Event:
    t: float
    leg: int | None
    kind: str  # TD | LO | APEX


@dataclass
class Segment:
    contacts: tuple[int, ...]
    anchors: dict[int, np.ndarray]
    t0: float
    t1: float
    sol: object  # scipy OdeSolution over [t0, t1], y = (q, qd, friction_diss)

    def state_at(self, t: float) -> HybridState:
        y = self.sol(t)
        return HybridState(q=y[:N_Q].copy(), qd=y[N_Q:2 * N_Q].copy(),
                           contacts=self.contacts,
                           anchors={i: a.copy() for i, a in self.anchors.items()})


@dataclass
class Trajectory:
    """One simulated stride: flow segments, events, and audit records."""

    params: ModelParams
    stride_index: int
    segments: list[Segment] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    impact_losses: list[tuple[float, float]] = field(default_factory=list)
    liftoff_kicks: list[tuple[float, float]] = field(default_factory=list)
    torsion_jumps: list[tuple[float, float]] = field(default_factory=list)
    violations: list[tuple[float, tuple]] = field(default_factory=list)

    @property
    def t0(self) -> float:
        return self.segments[0].t0

    @property
    def t_end(self) -> float:
        return self.segments[-1].t1

    @property
    def duration(self) -> float:
        return self.t_end - self.t0

    def state_at(self, t: float) -> HybridState:
        for seg in self.segments:
            if t <= seg.t1 or seg is self.segments[-1]:
                return seg.state_at(max(t, seg.t0))
        raise ValueError(f"time {t} outside trajectory")

    @property
    def final_state(self) -> HybridState:
        return self.segments[-1].state_at(self.t_end)

    @property
    def initial_state(self) -> HybridState:
        return self.segments[0].state_at(self.t0)

    def sample(self, n: int) -> tuple[np.ndarray, list[HybridState]]:
        ts = np.linspace(self.t0, self.t_end, n)
        return ts, [self.state_at(t) for t in ts]

    def tug_force_series(self, n: int) -> np.ndarray:
        ts, states = self.sample(n)
        return np.array([float(mdl.tug_force(s.q, self.params)) for s in states])

    def friction_dissipation(self) -> float:
        """Accumulated Coulomb dissipation (quadrature state), >= 0."""
        total = 0.0
        for seg in self.segments:
            total += float(seg.sol(seg.t1)[2 * N_Q] - seg.sol(seg.t0)[2 * N_Q])
        return total


# ---------------------------------------------------------------------------
# Continuous-domain acceleration
# ---------------------------------------------------------------------------

def accel(q, qd, p: ModelParams, contacts, anchors, k_swing_row):
    """Constrained accelerations and slaving multipliers for one domain."""
    state = HybridState(q=q, qd=qd, contacts=tuple(contacts), anchors=anchors)
    F = mdl.applied_forces(state, p, k_swing_row=k_swing_row)
    c = mdl.coriolis_vector(q, qd, p, contacts)
    M = mdl.mass_matrix(q, p, contacts)
    rhs = F - c
    if not contacts:
        return np.linalg.solve(M, rhs), np.zeros(0)
    J, Jdot_qd = mdl.stance_constraint(q, contacts, anchors, p, qd)
    k = J.shape[0]
    kkt = np.zeros((N_Q + k, N_Q + k), dtype=M.dtype)
    kkt[:N_Q, :N_Q] = M
    kkt[:N_Q, N_Q:] = -J.T
    kkt[N_Q:, :N_Q] = J
    b = np.concatenate([rhs, -Jdot_qd])
    try:
        sol = np.linalg.solve(kkt, b)
    except np.linalg.LinAlgError as exc:
        raise SingularConfigurationError(f"degenerate contact system: {exc}") from exc
    return sol[:N_Q], sol[N_Q:]


def stance_accel(state: HybridState, p: ModelParams, stride_index: int = 0):
    """Accelerations plus per-foot ground reaction forces at a state."""
    qdd, _ = accel(state.q, state.qd, p, state.contacts, state.anchors,
                   p.k_swing_row(stride_index))
    grfs = mdl.force_breakdown(state, p, stride_index).grf
    return qdd, grfs


# ---------------------------------------------------------------------------
# Discrete maps
# ---------------------------------------------------------------------------

def impact_map(state: HybridState, touching: tuple[int, ...], p: ModelParams):
    """Plastic touchdown reset for one or more legs.

    Solves the momentum-consistent velocity update in the post-impact metric
    (stance feet carry no inertia) subject to the post-impact stance
    constraints; the touching foot ends at rest on its anchor and kinetic
    energy cannot increase.  Returns the post-impact state and the kinetic
    energy lost.
    """
    new_contacts = tuple(sorted(set(state.contacts) | set(touching)))
    anchors = {i: np.array(a) for i, a in state.anchors.items()}
    for leg in touching:
        foot = mdl.foot_position(state.q, leg, p)
        anchors[leg] = np.array([float(foot[0]), 0.0])

    ke_pre = mdl.kinetic_energy(state, p)
    M = mdl.mass_matrix(state.q, p, new_contacts)
    J = mdl.stance_constraint(state.q, new_contacts, anchors, p)
    k = J.shape[0]
    kkt = np.zeros((N_Q + k, N_Q + k))
    kkt[:N_Q, :N_Q] = M
    kkt[:N_Q, N_Q:] = -J.T
    kkt[N_Q:, :N_Q] = J
    b = np.concatenate([M @ state.qd, np.zeros(k)])
    try:
        sol = np.linalg.solve(kkt, b)
    except np.linalg.LinAlgError as exc:
        raise SingularConfigurationError(f"degenerate impact system: {exc}") from exc
    post = HybridState(q=np.array(state.q), qd=sol[:N_Q],
                       contacts=new_contacts, anchors=anchors)
    post = mdl.slave_stance_angles(post, p)
    ke_post = mdl.kinetic_energy(post, p)
    return post, ke_pre - ke_post


def liftoff_map(state: HybridState, lifting: int, p: ModelParams):
    """Identity on velocities; the leg simply leaves the contact set.

    Returns the post-liftoff state and the kinetic kick the foot acquires on
    rejoining the rigid flight leg (an audit quantity, not an applied force).
    """
    contacts = tuple(i for i in state.contacts if i != lifting)
    anchors = {i: np.array(a) for i, a in state.anchors.items() if i != lifting}
    post = HybridState(q=np.array(state.q), qd=np.array(state.qd),
                       contacts=contacts, anchors=anchors)
    v_foot = mdl.foot_velocity(post.q, post.qd, lifting, p)
    kick = 0.5 * p.m_foot * float(v_foot @ v_foot)
    return post, kick


# ---------------------------------------------------------------------------
# Event location utilities
# ---------------------------------------------------------------------------

def locate_event(guard, t_lo: float, t_hi: float, tol: float = GUARD_TOL) -> float:
    """Refine a bracketed sign change of ``guard`` to |g(t*)| below tol."""
    from scipy.optimize import brentq
    g_lo, g_hi = guard(t_lo), guard(t_hi)
    if g_lo == 0.0:
        return t_lo
    if g_hi == 0.0:
        return t_hi
    if g_lo * g_hi > 0.0:
        raise EventNotFoundError("guard does not change sign over the bracket")
    t_star = brentq(guard, t_lo, t_hi, xtol=1e-15, rtol=8.88e-16, maxiter=200)
    return float(t_star)


def _make_guards(p, contacts, anchors, apex_armed, expected=None):
    """Per-leg TD/LO guards plus (optionally) the apex section guard.

    With ``expected`` set (prescribed mode), only the expected tag and the
    apex terminate the integration; other guards stay active as non-terminal
    diagnostics.
    """
    guards = []

    def td_guard(leg):
        def g(t, y):
            return float(np.real(mdl.foot_position(y[:N_Q], leg, p)[1]))
        g.direction = -1.0
        g.tag = (LEGS[leg], "TD")
        return g

    def lo_guard(leg):
        def g(t, y):
            return p.l_l - float(mdl.leg_length(y[:N_Q], leg, anchors[leg], p))
        g.direction = -1.0
        g.tag = (LEGS[leg], "LO")
        return g

    for leg in range(4):
        guards.append(lo_guard(leg) if leg in contacts else td_guard(leg))
    if apex_armed:
        def apex(t, y):
            return float(y[N_Q + IZ])
        apex.direction = -1.0
        apex.tag = (None, "APEX")
        guards.append(apex)
    for g in guards:
        if expected is None:
            g.terminal = g.tag[1] != "APEX" or apex_armed
        else:
            g.terminal = g.tag == expected or g.tag == (None, "APEX")
    return guards


# ---------------------------------------------------------------------------
# Stride simulation
# ---------------------------------------------------------------------------

def _domain_rhs(p, contacts, anchors, k_row, fast: bool = True):
    if fast:
        from . import _fastdyn
        return _fastdyn.domain_rhs_factory(p, contacts, anchors, k_row)
    mu_N = p.mu_ground * p.M_load * math.cos(p.theta_slope)

    def rhs(t, y):
        q, qd = y[:N_Q], y[N_Q:2 * N_Q]
        qdd, _ = accel(q, qd, p, contacts, anchors, k_row)
        v_load = qd[IX] - qd[IS]
        diss = mu_N * math.tanh(v_load / mdl.EPS_V_FRICTION) * v_load
        out = np.empty(2 * N_Q + 1)
        out[:N_Q] = qd
        out[N_Q:2 * N_Q] = qdd
        out[2 * N_Q] = diss
        return out

    return rhs


def simulate_stride(state0: HybridState, p: ModelParams,
                    spec: DomainSpec | None = None,
                    stride_index: int = 0,
                    rtol: float = RTOL_DEFAULT, atol: float = ATOL_DEFAULT,
                    t_max: float = 6.0, t_offset: float = 0.0) -> Trajectory:
    """Integrate one apex-to-apex stride with exact event location.

    ``state0`` must lie on the apex section: all legs in flight and zero
    slope-normal torso velocity.  In prescribed mode the given event order is
    enforced; a different guard firing first raises SequenceViolationError.
    """
    if state0.contacts:
        raise ValueError("stride must start in full flight")
    if abs(float(state0.qd[IZ])) > 1e-6:
        raise ValueError("stride must start on the apex section (qd_z = 0)")

    prescribed = list(spec.events) if spec is not None and spec.prescribed else None
    traj = Trajectory(params=p, stride_index=stride_index)
    k_row = p.k_swing_row(stride_index)
    state = state0.copy()
    t = t_offset
    t_end_cap = t_offset + t_max
    n_events = 0
    diss = 0.0

    strict = spec.strict if spec is not None else False

    while True:
        state = mdl.slave_stance_angles(state, p)
        done_legs = n_events >= 8 if prescribed is None else len(prescribed) == 0
        expected = tuple(prescribed[0]) if prescribed else None
        guards = _make_guards(p, state.contacts, state.anchors,
                              apex_armed=done_legs,
                              expected=None if prescribed is None else (expected or ()))
        rhs = _domain_rhs(p, state.contacts, state.anchors, k_row)
        y0 = np.concatenate([state.q, state.qd, [diss]])
        sol = solve_ivp(rhs, (t, t_end_cap), y0, method="DOP853",
                        rtol=rtol, atol=atol, dense_output=True, events=guards)
        if not sol.success:
            raise SimulationError(f"integrator failed: {sol.message}")

        fired = [(te[0], g.tag) for g, te in zip(guards, sol.t_events)
                 if g.terminal and len(te)]
        if not fired:
            raise IncompleteStrideError(
                f"no event before t_max={t_max}; contacts={state.contacts}")
        fired.sort(key=lambda item: item[0])
        t_event, tag = fired[0]

        for g, te in zip(guards, sol.t_events):
            if not g.terminal:
                for tv in te:
                    if tv < t_event - 1e-12:
                        if strict:
                            raise SequenceViolationError(expected, g.tag, tv)
                        traj.violations.append((float(tv), g.tag))

        traj.segments.append(Segment(contacts=state.contacts,
                                     anchors={i: a.copy() for i, a in state.anchors.items()},
                                     t0=t, t1=t_event, sol=sol.sol))
        y_ev = sol.sol(t_event)
        diss = float(y_ev[2 * N_Q])
        state = HybridState(q=y_ev[:N_Q].copy(), qd=y_ev[N_Q:2 * N_Q].copy(),
                            contacts=state.contacts,
                            anchors={i: a.copy() for i, a in state.anchors.items()})
        t = t_event

        if tag[1] == "APEX":
            if prescribed:
                raise SequenceViolationError(prescribed[0], ("", "APEX"), t)
            traj.events.append(Event(t=t, leg=None, kind="APEX"))
            return traj

        leg, kind = LEGS.index(tag[0]), tag[1]
        n_events += 1
        if n_events > ZENO_CAP:
            raise ZenoError(f"more than {ZENO_CAP} events in one stride")
        if prescribed is not None:
            prescribed.pop(0)

        traj.events.append(Event(t=t, leg=leg, kind=kind))
        if kind == "TD":
            a_td = float(state.q[IA + leg])
            state, loss = impact_map(state, (leg,), p)
            traj.impact_losses.append((t, loss))
            traj.torsion_jumps.append(
                (t, -0.5 * float(k_row[leg]) * (a_td - p.alpha0[leg]) ** 2))
        else:
            a_lo = float(state.q[IA + leg])
            state, kick = liftoff_map(state, leg, p)
            traj.liftoff_kicks.append((t, kick))
            traj.torsion_jumps.append(
                (t, 0.5 * float(k_row[leg]) * (a_lo - p.alpha0[leg]) ** 2))


def simulate_strides(state0: HybridState, p: ModelParams, n_strides: int,
                     specs: list[DomainSpec] | None = None,
                     stride_offset: int = 0,
                     rtol: float = RTOL_DEFAULT, atol: float = ATOL_DEFAULT,
                     t_max: float = 6.0) -> list[Trajectory]:
    """Chain apex-to-apex strides using the per-stride swing stiffness plan."""
    trajs = []
    state = state0.copy()
    t = 0.0
    for n in range(n_strides):
        spec = specs[n] if specs is not None else None
        try:
            traj = simulate_stride(state, p, spec, stride_index=stride_offset + n,
                                   rtol=rtol, atol=atol, t_max=t_max, t_offset=t)
        except SimulationError as exc:
            exc.args = (f"stride {n}: {exc}",)
            raise
        trajs.append(traj)
        state = traj.final_state
        state.qd[IZ] = 0.0  # re-pin the apex section against roundoff
        t = traj.t_end
    return trajs


def apex_return_map(state0: HybridState, p: ModelParams, n_strides: int,
                    specs: list[DomainSpec] | None = None, **kw):
    """Compose stride maps; returns the final apex state and per-stride timings."""
    if n_strides == 0:
        return state0.copy(), []
    trajs = simulate_strides(state0, p, n_strides, specs, **kw)
    return trajs[-1].final_state, [extract_timing(tr) for tr in trajs]


def extract_timing(traj: Trajectory) -> StrideTiming:
    """Normalized per-leg event times anchored at the stride's initial apex."""
    T = traj.duration
    td = [None] * 4
    lo = [None] * 4
    for ev in traj.events:
        if ev.kind == "TD":
            if td[ev.leg] is not None:
                raise IncompleteStrideError(f"duplicate touchdown for {LEGS[ev.leg]}")
            td[ev.leg] = (ev.t - traj.t0) / T
        elif ev.kind == "LO":
            if lo[ev.leg] is not None:
                raise IncompleteStrideError(f"duplicate liftoff for {LEGS[ev.leg]}")
            lo[ev.leg] = (ev.t - traj.t0) / T
    missing = [LEGS[i] for i in range(4) if td[i] is None or lo[i] is None]
    if missing:
        raise IncompleteStrideError(f"missing events for legs {missing}")
    return StrideTiming(t_td=tuple(t % 1.0 for t in td),
                        t_lo=tuple(t % 1.0 for t in lo), duration=T)


# ---------------------------------------------------------------------------
# Energy audit
# ---------------------------------------------------------------------------

def audit_energy(traj: Trajectory) -> dict:
    """Per-stride energy balance with every discrete exchange itemized.

    Along each flow segment E = KE + V(normal gravity + springs) changes by
    the along-slope gravity work minus friction dissipation; impacts remove
    kinetic energy, liftoffs add the flight-foot kick, and the swing spring's
    stored energy is parked at touchdown and released at liftoff.  The
    residual is the audit error and the per-segment drift isolates pure
    integration error.
    """
    p = traj.params
    sgs = math.sin(p.theta_slope)
    s_idx = traj.stride_index

    def energy(st):
        return mdl.total_energy(st, p, stride_index=s_idx)

    def slope_position(st):
        w = (p.M_torso + p.M_load) * float(st.q[IX]) - p.M_load * float(st.q[IS])
        for leg in range(4):
            if leg in st.contacts:
                w += p.m_foot * float(st.anchors[leg][0])
            else:
                w += p.m_foot * float(mdl.foot_position(st.q, leg, p)[0])
        return w

    e0 = energy(traj.initial_state)
    e1 = energy(traj.final_state)
    slope_work = sgs * (slope_position(traj.final_state) - slope_position(traj.initial_state))
    friction = traj.friction_dissipation()
    impact = sum(loss for _, loss in traj.impact_losses)
    kicks = sum(k for _, k in traj.liftoff_kicks)
    torsion = sum(j for _, j in traj.torsion_jumps)

    drift = 0.0
    for seg in traj.segments:
        st_a, st_b = seg.state_at(seg.t0), seg.state_at(seg.t1)
        dE = energy(st_b) - energy(st_a)
        dW = sgs * (slope_position(st_b) - slope_position(st_a))
        dD = float(seg.sol(seg.t1)[2 * N_Q] - seg.sol(seg.t0)[2 * N_Q])
        drift += abs(dE - dW + dD)

    residual = (e1 - e0) - (slope_work - friction - impact + kicks + torsion)
    return {
        "E_start": e0, "E_end": e1,
        "slope_work": slope_work,
        "friction_dissipation": friction,
        "impact_loss": impact,
        "liftoff_kicks": kicks,
        "torsion_exchange": torsion,
        "flow_drift": drift,
        "residual": residual,
    }


# ---------------------------------------------------------------------------
# Trajectory export
# ---------------------------------------------------------------------------

def contact_bitmask(contacts) -> int:
    return sum(1 << i for i in contacts)


def trajectory_record(traj: Trajectory, n_samples: int = 200) -> dict:
    """Plain-data export: sampled states, forces, and the event table."""
    ts, states = traj.sample(n_samples)
    rows = []
    for t, st in zip(ts, states):
        fb = mdl.force_breakdown(st, traj.params, traj.stride_index)
        grf_flat = []
        for leg in range(4):
            g = fb.grf.get(leg)
            grf_flat.extend([float(g[0]), float(g[1])] if g is not None else [0.0, 0.0])
        rows.append({
            "t": float(t),
            "q": [float(v) for v in st.q],
            "qd": [float(v) for v in st.qd],
            "contact_mask": contact_bitmask(st.contacts),
            "grf": grf_flat,
            "tug_force": fb.tug_force,
        })
    events = [{"t": float(ev.t), "leg": (LEGS[ev.leg] if ev.leg is not None else ""),
               "type": ev.kind} for ev in traj.events]
    return {"stride_index": traj.stride_index, "t0": traj.t0, "t_end": traj.t_end,
            "samples": rows, "events": events}


def write_trajectory_json(path, trajs: list[Trajectory], n_samples: int = 200) -> None:
    data = {"strides": [trajectory_record(tr, n_samples) for tr in trajs]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
        fh.write("\n")
