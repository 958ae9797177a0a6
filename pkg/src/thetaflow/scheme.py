"""Minimizing-movement scheme for the constrained p-elastic flow.

Each time step minimizes the implicit step functional (elastic energy plus
movement penalty) over the constraint set by projected gradient descent:
the lumped L2 gradient is projected onto the tangent space of the four
junction constraints, a Barzilai-Borwein step length is tried and backtracked
under an Armijo test, and every trial point is pulled back onto the
constraint set by a Newton projection along variation directions frozen at
the trial.  Acceptance is monotone in the step functional, which is what
makes the a-priori estimates of :func:`run_flow` hold by construction:

  * the elastic energy never increases along the flow,
  * half the summed tau * ||velocity||_L2^2 stays below the initial energy,
  * the multipliers of every step obey the explicit bound of
    :func:`thetaflow.multipliers.multiplier_bound` and their summed squares
    stay below an explicit budget in (T, initial energy, lengths, p),
  * nodal L2 norms grow at most like sqrt(2 T E_0).

These are asserted after every accepted step and raise EstimateViolation
(with the partial trajectory attached) if they ever fail.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solveh_banded

from .energy import (
    constraint_gradients,
    constraint_vector,
    assemble_multiplier_data,
    implicit_step_energy,
    p_energy,
    step_gradient,
)
from .errors import (
    DegenerateGeometry,
    FlatnessBlowup,
    InnerSolveFailed,
    ProjectionFailed,
    SingularSystem,
    ThetaflowError,
)
from .grids import NetworkState, trapezoid_integral, trapezoid_weights
from .multipliers import (
    Multipliers,
    bound_constant,
    compute_remainders,
    directional_constraint_jacobian,
    multiplier_bound,
    solve_multipliers,
    variation_directions,
)

__all__ = [
    "FlowConfig",
    "StepReport",
    "Trajectory",
    "project_to_H",
    "minimize_step",
    "run_flow",
    "weak_residual",
]


@dataclass(frozen=True)
class FlowConfig(object):
    """Solver parameters.

    ``newton_tol`` defaults to ``tol_constraint`` when left at None.  The
    flatness guard demands either a theta network with a strictly shortest
    third curve or at least two curves of oscillation >= ``osc_floor``.
    """

    p_exponent: float = 2.0
    tau: float = 1e-3
    T: float = 1.0
    tol_inner: float = 1e-8
    tol_constraint: float = 1e-9
    max_inner_iters: int = 5000
    armijo_c1: float = 1e-4
    armijo_backtrack: float = 0.5
    newton_max_iters: int = 30
    newton_tol: float = None
    cond_cap: float = 1e12
    osc_floor: float = 1e-3
    det_floor: float = 1e-12
    max_halvings: int = 3

    def __post_init__(self):
        if self.p_exponent <= 1.0:
            raise ValueError("p must exceed 1")
        if self.tau <= 0.0 or self.T <= 0.0:
            raise ValueError("tau and T must be positive")
        if self.tau > self.T:
            raise ValueError("tau must not exceed the horizon T")
        for name in ("tol_inner", "tol_constraint", "cond_cap", "osc_floor",
                     "det_floor"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if not (0.0 < self.armijo_c1 < 1.0):
            raise ValueError("armijo_c1 must lie in (0, 1)")
        if not (0.0 < self.armijo_backtrack < 1.0):
            raise ValueError("armijo_backtrack must lie in (0, 1)")

    @property
    def projection_tol(self) -> float:
        return self.tol_constraint if self.newton_tol is None else self.newton_tol


@dataclass(frozen=True)
class StepReport(object):
    """Per-step diagnostics; all runtime estimates are checked against these."""

    step_index: int
    tau: float
    energy_before: float
    energy_after: float
    penalty_value: float
    velocity_l2sq: float
    velocity_l1: float
    multipliers: Multipliers
    mult_bound: float
    bound_const: float
    constraint_defect: float
    dets: np.ndarray
    oscs: np.ndarray
    weak_residual_value: float
    inner_iters: int
    inner_converged: bool


@dataclass(frozen=True)
class Trajectory(object):
    """States, per-step reports and the (possibly nonuniform) time grid."""

    states: tuple
    reports: tuple
    times: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if len(self.states) != len(self.reports) + 1 or times.shape[0] != len(self.states):
            raise ValueError("states, reports and times are inconsistent")
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "reports", tuple(self.reports))
        object.__setattr__(self, "times", times)

    @property
    def final_state(self) -> NetworkState:
        return self.states[-1]

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def linear_interpolant(self, t: float) -> NetworkState:
        """Nodal linear interpolation in time; exact at stored times."""
        times = self.times
        t = float(np.clip(t, times[0], times[-1]))
        i = int(np.searchsorted(times, t))
        if times[i] == t:
            return self.states[i]
        w = (t - times[i - 1]) / (times[i] - times[i - 1])
        vals = [
            (1.0 - w) * a + w * b
            for a, b in zip(self.states[i - 1].values(), self.states[i].values())
        ]
        return self.states[i].with_values(vals)

    def piecewise_constant_interpolant(self, t: float,
                                       side: str = "upper") -> NetworkState:
        """Right-continuous ('lower') or left-continuous ('upper') sampling."""
        times = self.times
        t = float(np.clip(t, times[0], times[-1]))
        if side == "upper":
            return self.states[int(np.searchsorted(times, t, side="left"))]
        if side == "lower":
            return self.states[int(np.searchsorted(times, t, side="right")) - 1]
        raise ValueError("side must be 'upper' or 'lower'")


def _curve_weights(state: NetworkState):
    return [trapezoid_weights(f.grid) for f in state.fields]


def _flatness_guard(state: NetworkState, osc_floor: float):
    """(guard holds?, per-curve oscillations).

    The guard admits a state when either the structural condition holds (a
    theta network whose third curve is strictly shortest) or at least two
    curves oscillate by ``osc_floor`` or more; both routes keep the Gram
    determinants of curves 1 and 2 away from zero.
    """
    oscs = np.array([f.oscillation() for f in state.fields])
    l1, l2, l3 = state.lengths
    structural = state.is_theta and l3 < min(l1, l2)
    return structural or int(np.sum(oscs >= osc_floor)) >= 2, oscs


def project_to_H(state: NetworkState, cfg: FlowConfig) -> NetworkState:
    """Newton projection onto the constraint set.

    Moves along the four variation directions frozen at the input state; the
    Jacobian of the constraints in those directions starts out equal to the
    multiplier system matrix, so it is invertible whenever that system is.
    An admissible input is returned unchanged (the same object).  Refuses
    inputs with constraint defect above 1 and raises ProjectionFailed when
    Newton stagnates.
    """
    tol = cfg.projection_tol
    c = constraint_vector(state).values
    defect = float(np.max(np.abs(c)))
    if defect <= tol:
        return state
    if defect > 1.0:
        raise ProjectionFailed(
            f"constraint defect {defect:.3e} too large to project"
        )
    directions = variation_directions(state)
    base = state.values()
    t = np.zeros(4)
    current = state
    for _ in range(cfg.newton_max_iters):
        jac = directional_constraint_jacobian(current, directions)
        cond = np.linalg.cond(jac)
        if not np.isfinite(cond) or cond > cfg.cond_cap:
            raise SingularSystem(
                "projection Jacobian is numerically singular "
                f"(cond {cond:.3e})"
            )
        t = t + np.linalg.solve(jac, -c)
        vals = [
            b + sum(t[r] * directions[r][j] for r in range(4))
            for j, b in enumerate(base)
        ]
        current = state.with_values(vals)
        c = constraint_vector(current).values
        if float(np.max(np.abs(c))) <= tol:
            return current
    raise ProjectionFailed(
        f"Newton projection stagnated at defect {np.max(np.abs(c)):.3e}"
    )


def _tangent_project(state: NetworkState, grad, weights):
    """Remove the constraint-gradient components from a nodal gradient."""
    grads = constraint_gradients(state)
    gram = np.zeros((4, 4))
    b = np.zeros(4)
    per_curve = []
    for j in range(3):
        gj = np.stack([grads[l][j] for l in range(4)])
        wgj = gj * weights[j]
        gram += wgj @ gj.T
        b += wgj @ grad[j]
        per_curve.append(gj)
    coef, *_ = np.linalg.lstsq(gram, b, rcond=None)
    return tuple(grad[j] - coef @ per_curve[j] for j in range(3))


def _lumped_norm_sq(arrays, weights) -> float:
    return float(sum(np.dot(w, a * a) for a, w in zip(arrays, weights)))


def _hessian_bands(f, p: float, tau: float, weights: np.ndarray) -> np.ndarray:
    """Symmetric banded (upper form) Hessian of the step functional on one
    curve: movement mass / tau plus the lagged-diffusivity elastic part.

    For p < 2 the cell diffusivities |D|^(p-2) are clamped away from the
    singularity at flat cells; the matrix only preconditions, so the clamp
    costs accuracy of the direction, never correctness.
    """
    h = f.grid.spacing
    mag = np.abs(np.diff(f.values)) / h
    if p < 2.0:
        mag = np.maximum(mag, 1e-8)
    om = (p - 1.0) * mag ** (p - 2.0) / h
    m = f.grid.node_count
    ab = np.zeros((2, m))
    ab[1, :-1] += om
    ab[1, 1:] += om
    ab[0, 1:] = -om
    ab[1] += weights / tau
    return ab


def _newton_direction(state: NetworkState, weights, grad, p: float,
                      tau: float):
    """Constrained Newton direction from the bordered system

        [ B   C^T ] [ d ]   [ e ]
        [ C    0  ] [ y ] = [ 0 ]

    with B the banded step-functional Hessian, e the Euclidean gradient and
    C the Euclidean constraint gradients; eliminated through B (five banded
    solves per curve) and a 4x4 Schur complement.  Its fixed point d = 0 is
    exactly the constrained first-order condition: the gradient lies in the
    span of the constraint gradients.
    """
    grads = constraint_gradients(state)
    d0 = []
    z = []
    schur = np.zeros((4, 4))
    rhs = np.zeros(4)
    for j, (f, w) in enumerate(zip(state.fields, weights)):
        ab = _hessian_bands(f, p, tau, w)
        cols = np.stack([w * grad[j]] + [w * grads[l][j] for l in range(4)],
                        axis=1)
        sol = solveh_banded(ab, cols)
        d0.append(sol[:, 0])
        zj = sol[:, 1:]
        z.append(zj)
        schur += cols[:, 1:].T @ zj
        rhs += cols[:, 1:].T @ sol[:, 0]
    y, *_ = np.linalg.lstsq(schur, rhs, rcond=None)
    return tuple(d0[j] - z[j] @ y for j in range(3))


def _inner_descent(prev: NetworkState, cfg: FlowConfig, tau: float):
    """Monotone descent for one implicit step.

    Directions come from the constrained Newton system (banded Hessian
    bordered by the constraint gradients), are accepted by an Armijo test,
    and every trial point is pulled back onto the constraint set before
    evaluation.  Once the predicted Armijo decrement falls below the
    floating-point resolution of the energy, acceptance switches to halving
    the projected gradient norm (without letting the energy rise beyond
    rounding); that is what lets the iteration reach gradient tolerances
    far below sqrt(eps * energy).

    Returns (state, inner_iters, converged).  ``converged`` is False either
    when no acceptable trial exists at the floor step length (iterate
    accepted: no further progress is numerically possible) or when the
    iteration cap was hit, in which case the caller rejects the step.
    """
    weights = _curve_weights(prev)
    p = prev.p_exponent
    state = prev
    energy = implicit_step_energy(state, prev, tau)
    noise = 32.0 * np.finfo(float).eps * (1.0 + abs(energy))
    window = 16
    history = [energy]
    for it in range(cfg.max_inner_iters):
        grad = step_gradient(state, prev, tau)
        gp = _tangent_project(state, grad, weights)
        gp_sq = _lumped_norm_sq(gp, weights)
        if math.sqrt(gp_sq) <= cfg.tol_inner:
            return state, it, True
        if len(history) > window and history[-window - 1] - energy <= window * noise:
            # the last `window` accepted steps together moved the energy by
            # less than rounding: for p < 2 the degenerate flux makes the
            # gradient tolerance unreachable in doubles, so treat this as
            # converged to working precision
            return state, it, False
        euclid = [w * g for w, g in zip(weights, grad)]
        d = _newton_direction(state, weights, grad, p, tau)
        slope = float(sum(np.dot(e, dj) for e, dj in zip(euclid, d)))
        if not np.isfinite(slope) or slope <= 0.0:
            d, slope = gp, gp_sq
        alpha = 1.0
        accepted = None
        while alpha >= 1e-14:
            trial_vals = [v - alpha * dj for v, dj in zip(state.values(), d)]
            try:
                trial = project_to_H(prev.with_values(trial_vals), cfg)
            except (ProjectionFailed, SingularSystem):
                alpha *= cfg.armijo_backtrack
                continue
            trial_energy = implicit_step_energy(trial, prev, tau)
            if trial_energy <= energy - cfg.armijo_c1 * alpha * slope:
                accepted = (trial, trial_energy)
                break
            if cfg.armijo_c1 * alpha * slope <= noise and trial_energy <= energy + noise:
                gp_t = _tangent_project(
                    trial, step_gradient(trial, prev, tau), weights)
                if _lumped_norm_sq(gp_t, weights) <= 0.25 * gp_sq:
                    accepted = (trial, trial_energy)
                    break
            alpha *= cfg.armijo_backtrack
        if accepted is None:
            return state, it, False
        state, energy = accepted
        history.append(energy)
    return state, cfg.max_inner_iters, False


def _weak_residual_pair(candidate: NetworkState, prev: NetworkState,
                        tau: float, mult: Multipliers,
                        test_resolution=None) -> float:
    """Max over hat test functions of |weak form| / ||hat||_H1.

    The weak form of the time-discrete equation pairs the velocity and the
    multiplier terms with the trapezoid rule and the elastic flux with the
    cellwise midpoint rule, which makes the hat-function value equal to
    h * w_k * (lumped step gradient + multiplier combination) at node k,
    exactly the optimality system the inner solver drives to zero
    tangentially.
    """
    x = np.concatenate([mult.lam, mult.mu])
    grad = step_gradient(candidate, prev, tau)
    grads = constraint_gradients(candidate)
    worst = 0.0
    for j, f in enumerate(candidate.fields):
        h = f.grid.spacing
        w = trapezoid_weights(f.grid)
        density = grad[j] + sum(x[l] * grads[l][j] for l in range(4))
        pairing = w * density
        m = f.grid.node_count
        mass = np.full(m, 2.0 * h / 3.0)
        mass[0] = mass[-1] = h / 3.0
        deriv = np.full(m, 2.0 / h)
        deriv[0] = deriv[-1] = 1.0 / h
        scaled = np.abs(pairing) / np.sqrt(mass + deriv)
        if test_resolution is not None and test_resolution < m:
            idx = np.unique(np.linspace(0, m - 1, test_resolution).round().astype(int))
            scaled = scaled[idx]
        worst = max(worst, float(np.max(scaled)))
    return worst


def weak_residual(traj: Trajectory, step_index: int,
                  test_resolution=None) -> float:
    """Weak residual of the stored step against hat test functions."""
    rep = traj.reports[step_index]
    return _weak_residual_pair(
        traj.states[step_index + 1], traj.states[step_index],
        rep.tau, rep.multipliers, test_resolution,
    )


def minimize_step(prev: NetworkState, cfg: FlowConfig, tau=None):
    """One implicit time step from ``prev``.

    Returns (new state, StepReport).  Raises FlatnessBlowup when the
    flatness guard fails at ``prev``, InnerSolveFailed when the inner
    iteration cap is hit before reaching the gradient tolerance, and
    SingularSystem / DegenerateGeometry from the multiplier stage.
    """
    if tau is None:
        tau = cfg.tau
    ok, oscs = _flatness_guard(prev, cfg.osc_floor)
    if not ok:
        raise FlatnessBlowup(
            "flatness guard failed: oscillations "
            f"{np.array2string(oscs, precision=3)} with floor {cfg.osc_floor:g} "
            "and no strictly-shortest third curve on a theta network"
        )
    state, iters, converged = _inner_descent(prev, cfg, tau)
    if not converged and iters >= cfg.max_inner_iters:
        raise InnerSolveFailed(
            f"inner solver hit the {cfg.max_inner_iters}-iteration cap "
            f"at tau={tau:g}"
        )

    diffs = [fc.values - fp.values for fc, fp in zip(state.fields, prev.fields)]
    move_sq = sum(trapezoid_integral(d * d, f.grid)
                  for d, f in zip(diffs, state.fields))
    velocity_l1 = sum(trapezoid_integral(np.abs(d), f.grid)
                      for d, f in zip(diffs, state.fields))
    data = assemble_multiplier_data(state)
    rem = compute_remainders(state, prev, tau)
    mult = solve_multipliers(data, rem, cfg.cond_cap)
    report = StepReport(
        step_index=-1,
        tau=tau,
        energy_before=p_energy(prev),
        energy_after=p_energy(state),
        penalty_value=move_sq / (2.0 * tau),
        velocity_l2sq=move_sq / tau**2,
        velocity_l1=velocity_l1,
        multipliers=mult,
        mult_bound=multiplier_bound(data, state, velocity_l1, tau,
                                    cfg.det_floor),
        bound_const=bound_constant(data, state, cfg.det_floor),
        constraint_defect=constraint_vector(state).defect,
        dets=data.dets,
        oscs=np.array([f.oscillation() for f in state.fields]),
        weak_residual_value=_weak_residual_pair(state, prev, tau, mult),
        inner_iters=iters,
        inner_converged=converged,
    )
    return state, report


def _attempt_step(prev: NetworkState, cfg: FlowConfig):
    """minimize_step with time-step rejection: halve tau on inner failure."""
    tau = cfg.tau
    last = None
    for _ in range(cfg.max_halvings + 1):
        try:
            return minimize_step(prev, cfg, tau)
        except InnerSolveFailed as err:
            last = err
            tau *= 0.5
    raise InnerSolveFailed(
        f"step rejected {cfg.max_halvings} times (final tau {2 * tau:g}): {last}"
    )


class _EstimateLedger(object):
    """Running a-priori estimates checked after every accepted step."""

    def __init__(self, initial: NetworkState, cfg: FlowConfig):
        self.cfg = cfg
        self.d0 = p_energy(initial)
        self.lam_total = float(sum(initial.lengths))
        self.l2_initial = [
            math.sqrt(trapezoid_integral(v * v, f.grid))
            for v, f in zip(initial.values(), initial.fields)
        ]
        self.dissipation = 0.0
        self.mult_sq = 0.0
        self.c_star = 0.0
        self.steps = 0

    def check(self, state: NetworkState, report: StepReport):
        cfg = self.cfg
        eps = 1e-12 * (1.0 + abs(self.d0))
        self.steps += 1
        self.dissipation += report.tau * report.velocity_l2sq
        mult = report.multipliers
        self.mult_sq += report.tau * (
            float(np.dot(mult.lam, mult.lam)) + float(np.dot(mult.mu, mult.mu))
        )
        self.c_star = max(self.c_star, report.bound_const)

        if report.energy_after + report.penalty_value > report.energy_before + eps:
            self._fail(
                "energy monotonicity",
                report.energy_after + report.penalty_value,
                report.energy_before,
            )
        if 0.5 * self.dissipation > self.d0 - report.energy_after + self.steps * eps:
            self._fail("dissipation budget", 0.5 * self.dissipation,
                       self.d0 - report.energy_after)
        if mult.total_norm > report.mult_bound * (1.0 + 1e-9) + 1e-9:
            self._fail("per-step multiplier bound", mult.total_norm,
                       report.mult_bound)
        horizon = cfg.T + cfg.tau
        budget = (2.0 * self.c_star**2
                  * max(cfg.p_exponent**2, 2.0 * self.lam_total)
                  * (horizon * self.d0 + 1.0) * self.d0)
        if self.mult_sq > budget * (1.0 + 1e-6) + 1e-12:
            self._fail("multiplier square budget", self.mult_sq, budget)
        growth = math.sqrt(2.0 * horizon * self.d0)
        for j, (v, f) in enumerate(zip(state.values(), state.fields)):
            norm = math.sqrt(trapezoid_integral(v * v, f.grid))
            cap = self.l2_initial[j] + growth
            if norm > cap * (1.0 + 1e-9) + 1e-9:
                self._fail(f"L2 growth of curve {j + 1}", norm, cap)
        if report.constraint_defect > cfg.tol_constraint * (1.0 + 1e-9) + 1e-16:
            self._fail("constraint defect", report.constraint_defect,
                       cfg.tol_constraint)

    def _fail(self, what, got, allowed):
        from .errors import EstimateViolation

        raise EstimateViolation(
            f"{what} violated at step {self.steps - 1}: "
            f"{got:.12e} > {allowed:.12e}"
        )


def run_flow(initial: NetworkState, cfg: FlowConfig) -> Trajectory:
    """Advance the implicit scheme from ``initial`` to the horizon.

    The initial state is projected onto the constraint set when its defect
    is at most 1000x the constraint tolerance (larger defects are refused).
    A degenerate initial geometry (flatness guard violated) raises
    DegenerateGeometry before any stepping; mid-run guard failures surface
    as FlatnessBlowup.  Any error raised mid-run carries the partial
    trajectory in its ``trajectory`` attribute.
    """
    if initial.p_exponent != cfg.p_exponent:
        raise ValueError(
            f"state has p={initial.p_exponent:g} but config says "
            f"p={cfg.p_exponent:g}"
        )
    defect = constraint_vector(initial).defect
    if defect > cfg.tol_constraint:
        if defect > 1e3 * cfg.tol_constraint:
            raise ProjectionFailed(
                f"initial constraint defect {defect:.3e} exceeds "
                f"1000x the constraint tolerance"
            )
        initial = project_to_H(initial, cfg)
    ok, oscs = _flatness_guard(initial, cfg.osc_floor)
    if not ok:
        raise DegenerateGeometry(
            "initial state fails the flatness guard (oscillations "
            f"{np.array2string(oscs, precision=3)}, floor {cfg.osc_floor:g})"
        )

    states = [initial]
    reports = []
    times = [0.0]
    ledger = _EstimateLedger(initial, cfg)
    t = 0.0
    t_end = cfg.T * (1.0 - 1e-12)
    try:
        while t < t_end:
            state, report = _attempt_step(states[-1], cfg)
            report = replace(report, step_index=len(reports))
            ledger.check(state, report)
            t += report.tau
            states.append(state)
            reports.append(report)
            times.append(t)
    except ThetaflowError as err:
        err.trajectory = Trajectory(tuple(states), tuple(reports),
                                    np.array(times))
        raise
    return Trajectory(tuple(states), tuple(reports), np.array(times))
