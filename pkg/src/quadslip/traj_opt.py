"""Fit periodic gaits and stride-to-stride transitions to reference data.

The fitting problems are solved by event-exact shooting: decision variables
are the apex state, selected model parameters, and the per-stride swing
stiffness vectors; residuals are built from simulated footfall timings, tug
force traces, stride durations, and (for periodic problems) apex-to-apex
cycle closure.  A Newton restoration pass pins the closure residual to the
feasibility tolerance after the least-squares stage, and every result is
re-verified by re-simulation at tight integrator tolerances.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares

from . import hybrid_sim as hs
from . import model as mdl
from .gait import StrideTiming, wrap_half, classify_timing
from .model import HybridState, ModelParams, N_Q, IX, IZ

N_FORCE_DEFAULT = 100
FEAS_TOL = 1e-8
OPT_TOL = 1e-6

#: Reduced apex-section coordinates: q_x is dropped (translation symmetry)
#: and qd_z is dropped (apex section).
STATE_Q_IDX = (1, 2, 3, 4, 5, 6, 7)
STATE_QD_IDX = (0, 2, 3, 4, 5, 6, 7)
N_STATE = len(STATE_Q_IDX) + len(STATE_QD_IDX)


class FitError(RuntimeError):
    pass


@dataclass
class ReferenceStride:
    """Target stride: timing, duration, and an optional tug-force trace."""

    timing: StrideTiming
    force: np.ndarray | None = None
    timing_var: np.ndarray | None = None
    force_var: np.ndarray | None = None
    duration_var: float | None = None

    @property
    def duration(self) -> float:
        return self.timing.duration

    def to_dict(self) -> dict:
        d = {
            "t_td": list(self.timing.t_td),
            "t_lo": list(self.timing.t_lo),
            "duration": self.timing.duration,
        }
        if self.force is not None:
            d["force"] = [float(v) for v in self.force]
        for k in ("timing_var", "force_var"):
            v = getattr(self, k)
            if v is not None:
                d[k] = [float(x) for x in np.atleast_1d(v)]
        if self.duration_var is not None:
            d["duration_var"] = float(self.duration_var)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ReferenceStride":
        timing = StrideTiming(t_td=tuple(d["t_td"]), t_lo=tuple(d["t_lo"]),
                              duration=float(d["duration"]))
        return cls(
            timing=timing,
            force=np.asarray(d["force"]) if "force" in d else None,
            timing_var=np.asarray(d["timing_var"]) if "timing_var" in d else None,
            force_var=np.asarray(d["force_var"]) if "force_var" in d else None,
            duration_var=d.get("duration_var"),
        )


@dataclass(frozen=True)
class CostWeights:
    w_d: float = 10.0
    w_t: float = 10.0
    w_f: float = 1.0
    w_r: float = 100.0

    def __post_init__(self):
        if min(self.w_d, self.w_t, self.w_f, self.w_r) < 0:
            raise ValueError("weights must be nonnegative")
        if max(self.w_d, self.w_t, self.w_f) <= 0:
            raise ValueError("at least one data weight must be positive")


#: Scalar / vector model parameters that may be freed for fitting.  The hip
#: and shoulder placements stay fixed to preserve the body geometry, and the
#: foot mass absorbs the mass-normalization constraint.
FREEABLE = {
    "k_leg": 1, "r_leg": 1, "J_torso": 1, "k_tug": 1, "l_t": 1,
    "mu_ground": 1, "theta_slope": 1, "M_load": 1, "M_torso": 1,
    "alpha0": 4,
}

DEFAULT_BOUNDS = {
    "k_leg": (4.0, 80.0),
    "r_leg": (0.4, 2.5),
    "J_torso": (0.005, 0.5),
    "k_tug": (2.0, 200.0),
    "l_t": (0.2, 5.0),
    "mu_ground": (0.0, 1.5),
    "theta_slope": (0.0, 0.19),
    "M_load": (0.01, 0.5),
    "M_torso": (0.4, 0.95),
    "alpha0": (-0.7, 0.7),
    "k_swing": (0.02, 8.0),
}

STATE_BOUNDS_LO = np.array([0.75, -0.6] + [-1.2] * 4 + [0.2] + [0.1, -4.0] + [-8.0] * 4 + [-3.0])
STATE_BOUNDS_HI = np.array([1.45, 0.6] + [1.2] * 4 + [6.0] + [5.0, 4.0] + [8.0] * 4 + [3.0])


@dataclass
class OptProblem:
    """Specification of a periodic or multi-stride fitting problem."""

    base_params: ModelParams
    references: list[ReferenceStride]
    mode: str = "periodic"  # periodic | multi-stride
    weights: CostWeights = field(default_factory=CostWeights)
    free_params: tuple[str, ...] = ("k_swing",)
    bounds: dict = field(default_factory=dict)
    state0: HybridState | None = None
    n_force: int = N_FORCE_DEFAULT
    seed: int = 0
    sim_rtol: float = 1e-8
    sim_atol: float = 1e-10
    verify_rtol: float = 1e-10
    verify_atol: float = 1e-12
    max_nfev: int = 400
    feas_tol: float = FEAS_TOL
    opt_tol: float = OPT_TOL
    strides_t_max: float = 6.0

    def __post_init__(self):
        if self.mode not in ("periodic", "multi-stride"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "periodic" and len(self.references) != 1:
            raise ValueError("periodic mode takes exactly one reference stride")
        if self.mode == "multi-stride" and len(self.references) < 2:
            raise ValueError("multi-stride mode needs at least two references")
        for name in self.free_params:
            if name != "k_swing" and name not in FREEABLE:
                raise ValueError(f"cannot free parameter {name!r}")

    @property
    def n_strides(self) -> int:
        return len(self.references)


@dataclass
class OptResult:
    params_fit: ModelParams
    state0: HybridState
    trajectories: list
    problem: OptProblem
    cost: float
    cost_terms: dict
    r2: dict
    converged: bool
    iterations: int
    first_order_norm: float
    closure_residual: float
    message: str = ""

    @property
    def timings(self) -> list[StrideTiming]:
        return [hs.extract_timing(tr) for tr in self.trajectories]

    def delta_k_swing(self) -> np.ndarray:
        """Stride-to-stride swing stiffness changes, shape (N-1, 4)."""
        ks = np.asarray(self.params_fit.k_swing, dtype=float)
        return np.diff(ks, axis=0)


# ---------------------------------------------------------------------------
# Decision-vector packing
# ---------------------------------------------------------------------------

class _Packing:
    """Maps (apex state, free parameters, swing plan) <-> a flat vector."""

    def __init__(self, problem: OptProblem):
        self.problem = problem
        self.n_strides = problem.n_strides
        self.names = []
        self.sizes = []
        for name in problem.free_params:
            if name == "k_swing":
                self.names.append(name)
                self.sizes.append(4 * self.n_strides)
            else:
                self.names.append(name)
                self.sizes.append(FREEABLE[name])
        self.n_params = sum(self.sizes)
        self.n = N_STATE + self.n_params

    def pack(self, state: HybridState, p: ModelParams) -> np.ndarray:
        x = np.empty(self.n)
        x[:7] = [state.q[i] for i in STATE_Q_IDX]
        x[7:N_STATE] = [state.qd[i] for i in STATE_QD_IDX]
        off = N_STATE
        for name, size in zip(self.names, self.sizes):
            if name == "k_swing":
                x[off:off + size] = np.asarray(p.k_swing[:self.n_strides]).ravel()
            elif name == "alpha0":
                x[off:off + size] = p.alpha0
            else:
                x[off] = getattr(p, name)
            off += size
        return x

    def unpack(self, x: np.ndarray) -> tuple[HybridState, ModelParams]:
        q = np.zeros(N_Q)
        qd = np.zeros(N_Q)
        for k, i in enumerate(STATE_Q_IDX):
            q[i] = x[k]
        for k, i in enumerate(STATE_QD_IDX):
            qd[i] = x[7 + k]
        state = HybridState(q=q, qd=qd)
        kw = {}
        off = N_STATE
        for name, size in zip(self.names, self.sizes):
            if name == "k_swing":
                kw["k_swing"] = tuple(tuple(row) for row in
                                      x[off:off + size].reshape(self.n_strides, 4))
            elif name == "alpha0":
                kw["alpha0"] = tuple(x[off:off + size])
            else:
                kw[name] = float(x[off])
            off += size
        p = self.problem.base_params
        if "M_torso" in kw or "M_load" in kw:
            # keep total mass normalized through the foot mass
            mt = kw.get("M_torso", p.M_torso)
            ml = kw.get("M_load", p.M_load)
            kw["m_foot"] = (1.0 - mt - ml) / 4.0
        if "k_swing" not in kw:
            rows = list(p.k_swing)
            while len(rows) < self.n_strides:
                rows.append(rows[-1])
            kw["k_swing"] = tuple(tuple(r) for r in rows[:self.n_strides])
        return state, replace(p, **kw)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.concatenate([STATE_BOUNDS_LO, np.zeros(self.n_params)])
        hi = np.concatenate([STATE_BOUNDS_HI, np.zeros(self.n_params)])
        off = N_STATE
        user = self.problem.bounds
        for name, size in zip(self.names, self.sizes):
            b = user.get(name, DEFAULT_BOUNDS[name])
            lo[off:off + size] = b[0]
            hi[off:off + size] = b[1]
            off += size
        return lo, hi


def reduced_state(state: HybridState) -> np.ndarray:
    out = np.empty(N_STATE)
    out[:7] = [state.q[i] for i in STATE_Q_IDX]
    out[7:] = [state.qd[i] for i in STATE_QD_IDX]
    return out


# ---------------------------------------------------------------------------
# Simulation of a candidate
# ---------------------------------------------------------------------------

def _specs_from_references(refs) -> list[hs.DomainSpec]:
    return [hs.DomainSpec.from_timing(r.timing) for r in refs]


def simulate_candidate(state0: HybridState, p: ModelParams, problem: OptProblem,
                       rtol=None, atol=None) -> list[hs.Trajectory]:
    specs = _specs_from_references(problem.references)
    return hs.simulate_strides(
        state0, p, problem.n_strides, specs,
        rtol=rtol or problem.sim_rtol, atol=atol or problem.sim_atol,
        t_max=problem.strides_t_max)


# ---------------------------------------------------------------------------
# Cost assembly
# ---------------------------------------------------------------------------

def trajectory_consistency_residuals(trajs: list[hs.Trajectory]) -> np.ndarray:
    """Physical-consistency residual vector of a candidate trajectory set:
    leg-length mismatch at touchdown/liftoff events and state continuity
    across stride boundaries (zero for trajectories produced by the
    event-exact simulator)."""
    out = []
    p = trajs[0].params
    for tr in trajs:
        for ev in tr.events:
            if ev.kind == "APEX":
                continue
            st = tr.state_at(ev.t)
            if ev.leg in st.contacts:
                out.append(p.l_l - float(mdl.leg_length(st.q, ev.leg, st.anchors[ev.leg], p)))
            else:
                out.append(float(mdl.foot_position(st.q, ev.leg, p)[1]))
    for a, b in zip(trajs[:-1], trajs[1:]):
        out.extend(np.asarray(reduced_state(a.final_state))
                   - np.asarray(reduced_state(b.initial_state)))
    return np.asarray(out) if out else np.zeros(0)


def data_residuals(trajs, problem: OptProblem) -> np.ndarray:
    """Weighted residual vector of data-mismatch terms (timing, duration, force)."""
    w = problem.weights
    out = []
    for tr, ref in zip(trajs, problem.references):
        sim = hs.extract_timing(tr)
        dv = sim.vector() - ref.timing.vector()
        out.extend(math.sqrt(w.w_t) * np.array([wrap_half(d) for d in dv]))
        out.append(math.sqrt(w.w_d) * (sim.duration - ref.duration))
        if ref.force is not None and w.w_f > 0:
            f_sim = tr.tug_force_series(len(ref.force))
            out.extend(math.sqrt(w.w_f) * (f_sim - np.asarray(ref.force)))
    return np.asarray(out)


def closure_residuals(trajs, state0: HybridState) -> np.ndarray:
    """Apex-to-apex state mismatch in the reduced coordinates."""
    return reduced_state(trajs[-1].final_state) - reduced_state(state0)


def cost_breakdown(trajs, problem: OptProblem, state0: HybridState | None = None) -> dict:
    """Composite cost and its per-term decomposition for a trajectory set."""
    w = problem.weights
    terms = {"timing": 0.0, "duration": 0.0, "force": 0.0, "consistency": 0.0}
    for tr, ref in zip(trajs, problem.references):
        sim = hs.extract_timing(tr)
        dv = np.array([wrap_half(d) for d in (sim.vector() - ref.timing.vector())])
        terms["timing"] += w.w_t * float(dv @ dv)
        terms["duration"] += w.w_d * (sim.duration - ref.duration) ** 2
        if ref.force is not None and w.w_f > 0:
            f_sim = tr.tug_force_series(len(ref.force))
            df = f_sim - np.asarray(ref.force)
            terms["force"] += w.w_f * float(df @ df)
    rres = trajectory_consistency_residuals(trajs)
    if problem.mode == "periodic" and state0 is not None:
        rres = np.concatenate([rres, closure_residuals(trajs, state0)])
    terms["consistency"] = w.w_r * float(rres @ rres)
    terms["total"] = sum(terms.values())
    return terms


# ---------------------------------------------------------------------------
# R-squared diagnostics
# ---------------------------------------------------------------------------

def r_squared(result_or_trajs, references, weights: CostWeights | None = None,
              n_force: int = N_FORCE_DEFAULT) -> dict:
    """Pooled coefficients of determination for timing, force, and duration.

    Each R^2 is 1 - SS_res/SS_tot with SS_tot taken about the pooled
    reference mean.  A component with zero total variance falls back to the
    reference variance bands when available, else it is flagged undefined
    (None).  R2_w is the data-weight-weighted mean of the defined parts.
    """
    trajs = result_or_trajs.trajectories if isinstance(result_or_trajs, OptResult) else result_or_trajs
    weights = weights or (result_or_trajs.problem.weights
                          if isinstance(result_or_trajs, OptResult) else CostWeights())

    t_sim, t_ref = [], []
    f_sim, f_ref = [], []
    d_sim, d_ref = [], []
    d_var = []
    for tr, ref in zip(trajs, references):
        sim = hs.extract_timing(tr)
        rv = ref.timing.vector()
        t_ref.extend(rv)
        t_sim.extend(rv + np.array([wrap_half(d) for d in (sim.vector() - rv)]))
        d_sim.append(sim.duration)
        d_ref.append(ref.duration)
        if ref.duration_var is not None:
            d_var.append(ref.duration_var)
        if ref.force is not None:
            f_ref.extend(np.asarray(ref.force))
            f_sim.extend(tr.tug_force_series(len(ref.force)))

    def r2(sim, ref, fallback_var=None):
        sim, ref = np.asarray(sim), np.asarray(ref)
        if len(ref) == 0:
            return None
        ss_res = float(np.sum((sim - ref) ** 2))
        ss_tot = float(np.sum((ref - ref.mean()) ** 2))
        if ss_tot <= 0.0:
            if fallback_var:
                return 1.0 - ss_res / (len(ref) * float(np.mean(fallback_var)))
            return None
        return 1.0 - ss_res / ss_tot

    out = {
        "R2_t": r2(t_sim, t_ref),
        "R2_F": r2(f_sim, f_ref),
        "R2_D": r2(d_sim, d_ref, fallback_var=d_var or None),
    }
    num, den = 0.0, 0.0
    for key, w in (("R2_t", weights.w_t), ("R2_F", weights.w_f), ("R2_D", weights.w_d)):
        if out[key] is not None and w > 0:
            num += w * out[key]
            den += w
    out["R2_w"] = num / den if den > 0 else None
    return out


# ---------------------------------------------------------------------------
# Solvers
# ---------------------------------------------------------------------------

def _residual_fn(packing: _Packing, problem: OptProblem):
    w = problem.weights
    n_data = 0
    for ref in problem.references:
        n_data += 9 + (len(ref.force) if ref.force is not None and w.w_f > 0 else 0)
    n_clo = N_STATE if problem.mode == "periodic" else 0

    def fn(x):
        state0, p = packing.unpack(x)
        try:
            trajs = simulate_candidate(state0, p, problem)
        except (hs.SimulationError, mdl.SingularConfigurationError, ValueError):
            return np.full(n_data + n_clo, 10.0)
        r = data_residuals(trajs, problem)
        if problem.mode == "periodic":
            r = np.concatenate([r, math.sqrt(w.w_r) * closure_residuals(trajs, state0)])
        return r

    return fn, n_data + n_clo


def _restore_closure(state0: HybridState, p: ModelParams, problem: OptProblem,
                     tol: float = 1e-10, max_iter: int = 12):
    """Newton on the apex return map to pin the limit cycle at fixed params."""
    x = reduced_state(state0)

    def unpack(xs):
        st = HybridState(q=np.zeros(N_Q), qd=np.zeros(N_Q))
        for k, i in enumerate(STATE_Q_IDX):
            st.q[i] = xs[k]
        for k, i in enumerate(STATE_QD_IDX):
            st.qd[i] = xs[7 + k]
        return st

    def gap(xs):
        st = unpack(xs)
        trajs = simulate_candidate(st, p, problem)
        return closure_residuals(trajs, st)

    g = gap(x)
    for _ in range(max_iter):
        if np.max(np.abs(g)) < tol:
            break
        J = np.empty((N_STATE, N_STATE))
        h = 1e-7
        for j in range(N_STATE):
            xp = x.copy()
            xp[j] += h
            try:
                J[:, j] = (gap(xp) - g) / h
            except (hs.SimulationError, mdl.SingularConfigurationError, ValueError):
                J[:, j] = 0.0
                J[j, j] = 1.0
        try:
            dx = np.linalg.solve(J, -g)
        except np.linalg.LinAlgError:
            dx = np.linalg.lstsq(J, -g, rcond=None)[0]
        step = 1.0
        for _ in range(6):
            xn = x + step * dx
            try:
                gn = gap(xn)
            except (hs.SimulationError, mdl.SingularConfigurationError, ValueError):
                step *= 0.5
                continue
            if np.max(np.abs(gn)) < np.max(np.abs(g)):
                x, g = xn, gn
                break
            step *= 0.5
        else:
            break
    return unpack(x), float(np.max(np.abs(g)))


def _make_result(x, packing, problem, ls) -> OptResult:
    state0, p_fit = packing.unpack(x)
    closure = math.nan
    if problem.mode == "periodic":
        try:
            state0, closure = _restore_closure(state0, p_fit, problem,
                                               tol=problem.feas_tol * 1e-2)
        except (hs.SimulationError, mdl.SingularConfigurationError, ValueError) as exc:
            raise FitError(f"solution does not simulate: {exc}") from exc
    trajs = simulate_candidate(state0, p_fit, problem,
                               rtol=problem.verify_rtol, atol=problem.verify_atol)
    if problem.mode == "multi-stride":
        closure = float(np.max(np.abs(trajectory_consistency_residuals(trajs)))) if len(trajs) > 1 else 0.0
    terms = cost_breakdown(trajs, problem, state0)
    r2 = r_squared(trajs, problem.references, problem.weights)
    grad_norm = float(np.max(np.abs(ls.grad))) if ls.grad is not None else math.nan
    return OptResult(
        params_fit=p_fit, state0=state0, trajectories=trajs, problem=problem,
        cost=terms["total"], cost_terms=terms, r2=r2,
        converged=bool(ls.success), iterations=int(ls.nfev),
        first_order_norm=grad_norm, closure_residual=closure,
        message=str(ls.message),
    )


def _solve(problem: OptProblem) -> OptResult:
    if problem.state0 is None:
        raise FitError("an initial apex-state guess is required")
    packing = _Packing(problem)
    x0 = packing.pack(problem.state0, problem.base_params)
    lo, hi = packing.bounds()
    x0 = np.clip(x0, lo, hi)
    fn, _ = _residual_fn(packing, problem)
    ls = least_squares(fn, x0, bounds=(lo, hi), method="trf",
                       diff_step=1e-6, xtol=1e-14, ftol=1e-14, gtol=1e-12,
                       max_nfev=problem.max_nfev)
    return _make_result(ls.x, packing, problem, ls)


def solve_periodic(problem: OptProblem) -> OptResult:
    """Fit a one-stride limit cycle to a single reference stride.

    Cycle closure is imposed on the apex section excluding forward
    translation; the load coordinate closes in relative displacement.
    """
    if problem.mode != "periodic":
        raise ValueError("problem.mode must be 'periodic'")
    return _solve(problem)


def solve_transition(problem: OptProblem) -> OptResult:
    """Fit a continuous multi-stride trajectory with per-stride swing
    stiffness to a sequence of reference strides."""
    if problem.mode != "multi-stride":
        raise ValueError("problem.mode must be 'multi-stride'")
    return _solve(problem)


# ---------------------------------------------------------------------------
# Sensitivity analysis
# ---------------------------------------------------------------------------

def sensitivity(result: OptResult, perturbation: float = 0.05,
                grid_points: int = 11) -> dict:
    """Cost response to scaling each leg's stride-to-stride stiffness change.

    For leg i with fitted change dk_i, the second stride's stiffness is set
    to k1_i + f * dk_i for factors f on a uniform grid over
    [1-perturbation, 1+perturbation], everything else held fixed; each grid
    point re-simulates the full horizon.  Failed points are recorded as NaN
    gaps.  Returns per-leg factor grids with absolute and percent cost
    changes relative to the unperturbed optimum.
    """
    problem = result.problem
    if problem.n_strides < 2:
        raise ValueError("sensitivity needs a multi-stride result")
    ks = np.asarray(result.params_fit.k_swing, dtype=float)
    dk = ks[1] - ks[0]
    base_cost = result.cost
    factors = np.linspace(1.0 - perturbation, 1.0 + perturbation, grid_points)
    out = {"factors": factors, "base_cost": base_cost, "legs": {}}
    from .gait import LEGS
    for leg in range(4):
        costs = np.full(grid_points, np.nan)
        for gi, f in enumerate(factors):
            ks_mod = ks.copy()
            ks_mod[1, leg] = ks[0, leg] + f * dk[leg]
            p_mod = result.params_fit.with_k_swing(ks_mod)
            try:
                trajs = hs.simulate_strides(
                    result.state0, p_mod, problem.n_strides,
                    _specs_from_references(problem.references),
                    rtol=problem.sim_rtol, atol=problem.sim_atol,
                    t_max=problem.strides_t_max)
                costs[gi] = cost_breakdown(trajs, problem, result.state0)["total"]
            except (hs.SimulationError, mdl.SingularConfigurationError, ValueError):
                pass
        out["legs"][LEGS[leg]] = {
            "cost": costs,
            "delta_abs": costs - base_cost,
            "delta_pct": 100.0 * (costs - base_cost) / base_cost if base_cost > 0 else costs * np.nan,
        }
    return out


# ---------------------------------------------------------------------------
# Result bundles
# ---------------------------------------------------------------------------

def write_result_bundle(result: OptResult, out_dir, n_samples: int = 200) -> None:
    """Write params JSON + trajectory export + diagnostics JSON."""
    import os
    os.makedirs(out_dir, exist_ok=True)
    result.params_fit.to_json(os.path.join(out_dir, "params.json"))
    hs.write_trajectory_json(os.path.join(out_dir, "trajectory.json"),
                             result.trajectories, n_samples)
    diag = {
        "cost": result.cost,
        "cost_terms": result.cost_terms,
        "r2": result.r2,
        "converged": result.converged,
        "iterations": result.iterations,
        "first_order_norm": result.first_order_norm,
        "closure_residual": result.closure_residual,
        "mode": result.problem.mode,
        "state0_q": [float(v) for v in result.state0.q],
        "state0_qd": [float(v) for v in result.state0.qd],
        "labels": [classify_timing(t).value for t in result.timings],
        "delta_k_swing": result.delta_k_swing().tolist() if result.problem.n_strides > 1 else [],
        "seed": result.problem.seed,
    }
    with open(os.path.join(out_dir, "diagnostics.json"), "w", encoding="utf-8") as fh:
        json.dump(diag, fh, indent=2, sort_keys=True)
        fh.write("\n")
