"""Junction multipliers: the 4x4 saddle-point system and explicit bounds.

At a minimizer of the implicit step functional the first variation vanishes
along every admissible direction.  Testing against four specific variation
fields phi_1..phi_4 (built from sines and cosines of the current angles, one
pair coupling curves 2 and 3, one pair coupling curves 1 and 2) produces a
4x4 linear system for the multiplier row vector x = (lambda_1, lambda_2,
mu_1, mu_2):

    x . J = rhs,   J = [[ A2, -(A1 + A2)],      rhs = (G3 - G2 + R23,
                        [ A3,   A1      ]]              G2 - G1 + R21)

with the 2x2 Gram blocks A_i and elastic forcings G_i from
:func:`thetaflow.energy.assemble_multiplier_data` and movement remainders
R23, R21 from :func:`compute_remainders`.  Entry (l, r) of J is the
derivative of constraint l along direction phi_r.

The same blocks yield a fully explicit a-priori bound on |lambda| + |mu|
in terms of the two determinants det A1, det A2, the lengths, the elastic
energy and the L1 speed of the step; see :func:`multiplier_bound`.  Every
inequality used there (operator norm of a PSD 2x2 matrix by its trace,
inverse norm by norm/det, det(I + A3 M) >= 1 for M positive definite)
overestimates the exact elimination, so the bound provably dominates the
solved multipliers whenever both determinants are positive.
"""

from dataclasses import dataclass

import numpy as np

from .energy import MultiplierMatrices, constraint_gradients, p_energy
from .errors import DegenerateGeometry, SingularSystem
from .grids import NetworkState, require_compatible, trapezoid_integral

__all__ = [
    "Multipliers",
    "KktMatrix",
    "Remainders",
    "variation_directions",
    "assemble_kkt",
    "directional_constraint_jacobian",
    "compute_remainders",
    "solve_multipliers",
    "bound_constant",
    "multiplier_bound",
]


@dataclass(frozen=True)
class Multipliers(object):
    """Multiplier pairs lam = (lambda_1, lambda_2), mu = (mu_1, mu_2)."""

    lam: np.ndarray
    mu: np.ndarray

    @property
    def total_norm(self) -> float:
        """|lambda| + |mu| (Euclidean norms of the two pairs)."""
        return float(np.linalg.norm(self.lam) + np.linalg.norm(self.mu))


@dataclass(frozen=True)
class KktMatrix(object):
    matrix: np.ndarray  # (4, 4)

    @property
    def cond(self) -> float:
        return float(np.linalg.cond(self.matrix))


@dataclass(frozen=True)
class Remainders(object):
    """Movement remainders R23, R21 entering the multiplier right-hand side."""

    r23: np.ndarray
    r21: np.ndarray


def variation_directions(state: NetworkState):
    """The four variation fields phi_1..phi_4 as nodal triples.

    phi_1 = (0, sin theta2, -sin theta3)   phi_2 = (0, -cos theta2, cos theta3)
    phi_3 = (sin theta1, -sin theta2, 0)   phi_4 = (-cos theta1, cos theta2, 0)

    Each leaves the constraint set invariant to first order in the direction
    complementary to its own constraint pair, which is what decouples the
    multiplier system into the 2x2 blocks of :func:`assemble_kkt`.
    """
    sins = [np.sin(f.values) for f in state.fields]
    coss = [np.cos(f.values) for f in state.fields]
    zeros = [np.zeros_like(f.values) for f in state.fields]
    return (
        (zeros[0], sins[1], -sins[2]),
        (zeros[0], -coss[1], coss[2]),
        (sins[0], -sins[1], zeros[2]),
        (-coss[0], coss[1], zeros[2]),
    )


def assemble_kkt(data: MultiplierMatrices) -> KktMatrix:
    """Block matrix [[A2, -(A1 + A2)], [A3, A1]] of the multiplier system."""
    a1, a2, a3 = data.A
    j = np.empty((4, 4))
    j[:2, :2] = a2
    j[:2, 2:] = -(a1 + a2)
    j[2:, :2] = a3
    j[2:, 2:] = a1
    return KktMatrix(j)


def directional_constraint_jacobian(state: NetworkState, directions) -> np.ndarray:
    """Matrix of constraint derivatives J[l, r] = d c_l / d t along
    direction r, for arbitrary nodal direction triples.

    With ``directions = variation_directions(state)`` this reproduces
    ``assemble_kkt`` exactly; the Newton projection uses it with directions
    frozen at a different state.
    """
    grads = constraint_gradients(state)
    j = np.empty((4, len(directions)))
    for l, grad in enumerate(grads):
        for r, direction in enumerate(directions):
            j[l, r] = sum(
                trapezoid_integral(g * d, f.grid)
                for g, d, f in zip(grad, direction, state.fields)
            )
    return j


def compute_remainders(candidate: NetworkState, prev: NetworkState,
                       tau: float) -> Remainders:
    """Movement contributions to the multiplier right-hand side.

    R23 = (1/tau) [ int_3 (dtheta3)(sin theta3, -cos theta3)
                    - int_2 (dtheta2)(sin theta2, -cos theta2) ]
    R21 = (1/tau) [ int_2 (dtheta2)(sin theta2, -cos theta2)
                    - int_1 (dtheta1)(sin theta1, -cos theta1) ]

    with dtheta = candidate - prev and all trigonometric factors evaluated
    at the candidate.  At tau-scale movement dtheta = O(tau) these stay
    O(1), which is what keeps the multipliers bounded along the flow.
    """
    require_compatible(candidate, prev)
    pieces = []
    for fc, fp in zip(candidate.fields, prev.fields):
        d = fc.values - fp.values
        pieces.append(np.array([
            trapezoid_integral(d * np.sin(fc.values), fc.grid),
            -trapezoid_integral(d * np.cos(fc.values), fc.grid),
        ]) / tau)
    return Remainders(r23=pieces[2] - pieces[1], r21=pieces[1] - pieces[0])


def solve_multipliers(data: MultiplierMatrices, rem: Remainders,
                      cond_cap: float = 1e12) -> Multipliers:
    """Solve x . J = rhs for the multipliers.

    Raises SingularSystem when the condition number of J exceeds
    ``cond_cap`` (at least two essentially flat or aligned curves) or the
    solved residual fails ``|x.J - rhs| <= 1e-9 (1 + |rhs|)``.
    """
    kkt = assemble_kkt(data)
    if not np.all(np.isfinite(kkt.matrix)):
        raise SingularSystem("multiplier system contains non-finite entries")
    if kkt.cond > cond_cap:
        raise SingularSystem(
            f"multiplier system condition number {kkt.cond:.3e} exceeds "
            f"cap {cond_cap:.3e}"
        )
    g1, g2, g3 = data.G
    rhs = np.concatenate([g3 - g2 + rem.r23, g2 - g1 + rem.r21])
    x = np.linalg.solve(kkt.matrix.T, rhs)
    resid = float(np.max(np.abs(x @ kkt.matrix - rhs)))
    if resid > 1e-9 * (1.0 + float(np.linalg.norm(rhs))):
        raise SingularSystem(
            f"multiplier solve residual {resid:.3e} out of tolerance"
        )
    return Multipliers(lam=x[:2], mu=x[2:])


def bound_constant(data: MultiplierMatrices, state: NetworkState,
                   det_floor: float = 1e-12) -> float:
    """Geometry factor C of the multiplier bound, explicit in the lengths
    and the first two Gram determinants.

    With k_i = L_i / det A_i and m = k_1 + k_2:

        C_mu     = (1 + L_3 m)(k_1 + m)
        C_lambda = k_2 (1 + L_3 C_mu)
        C        = C_lambda + C_mu

    Monotone increasing in 1/det A_1 and 1/det A_2.  Raises
    DegenerateGeometry when either determinant sits at or below
    ``det_floor``.
    """
    det1, det2 = float(data.dets[0]), float(data.dets[1])
    if det1 <= det_floor or det2 <= det_floor:
        raise DegenerateGeometry(
            "Gram determinants of curves 1 and 2 must exceed the floor "
            f"{det_floor:g} (got {det1:g}, {det2:g})"
        )
    l1, l2, l3 = state.lengths
    k1 = l1 / det1
    k2 = l2 / det2
    m = k1 + k2
    c_mu = (1.0 + l3 * m) * (k1 + m)
    c_lam = k2 * (1.0 + l3 * c_mu)
    return c_lam + c_mu


def multiplier_bound(data: MultiplierMatrices, state: NetworkState,
                     velocity_l1: float, tau: float,
                     det_floor: float = 1e-12) -> float:
    """Explicit upper bound on |lambda| + |mu| for the step's multipliers:

        C * ( sum_j int |theta_s|^p  +  velocity_l1 / tau )

    where ``velocity_l1 = sum_j int |candidate - prev|`` and C is
    :func:`bound_constant`.  The right-hand sides of the multiplier system
    satisfy |rhs| <= S + velocity_l1 / tau, and C dominates the norm of the
    block elimination, so the solved multipliers always sit below this
    number (up to rounding).
    """
    c = bound_constant(data, state, det_floor)
    s = state.p_exponent * p_energy(state)
    return c * (s + velocity_l1 / tau)
