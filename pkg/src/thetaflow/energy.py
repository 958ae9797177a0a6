"""Elastic energy, step functional, constraints and related assemblies.

The p-elastic energy of an angle field is (1/p) * int |theta_s|^p, discretized
with the midpoint rule on cells.  One implicit time step minimizes

    E_step(theta) = sum_j (1/p) int |d theta^j / ds|^p
                  + (1/(2 tau)) sum_j int (theta^j - theta_prev^j)^2

subject to four scalar constraints tying the tangent integrals of the three
curves together (the curves must keep meeting at their endpoints).

Everything here is plain quadrature and pointwise algebra; no linear or
nonlinear solves.  The gradient returned by :func:`step_gradient` is the
nodal representer of the first variation with respect to the lumped
(trapezoid-weighted) L2 inner product, so tolerances on it read as L2
tolerances on the continuous gradient.
"""

from dataclasses import dataclass

import numpy as np

from .grids import (
    AngleField,
    NetworkState,
    midpoint_gradient,
    require_compatible,
    trapezoid_integral,
    trapezoid_weights,
)

__all__ = [
    "p_energy",
    "implicit_step_energy",
    "ConstraintVector",
    "constraint_vector",
    "constraint_gradients",
    "MultiplierMatrices",
    "assemble_multiplier_data",
    "det_identity_check",
    "OscillationStats",
    "oscillation_stats",
    "step_gradient",
]


def _flux(slopes: np.ndarray, p: float) -> np.ndarray:
    """Cellwise p-Laplacian flux |u|^(p-2) u, with 0 mapped to 0."""
    return np.sign(slopes) * np.abs(slopes) ** (p - 1.0)


def p_energy(state: NetworkState) -> float:
    """Total elastic energy sum_j (1/p) int |d theta^j/ds|^p (midpoint rule)."""
    p = state.p_exponent
    total = 0.0
    for f in state.fields:
        slopes = midpoint_gradient(f)
        total += f.grid.spacing * np.sum(np.abs(slopes) ** p)
    return total / p


def implicit_step_energy(candidate: NetworkState, prev: NetworkState,
                         tau: float) -> float:
    """Elastic energy plus movement penalty (1/(2 tau)) ||cand - prev||_L2^2."""
    require_compatible(candidate, prev)
    if tau <= 0.0:
        raise ValueError("time step tau must be positive")
    penalty = 0.0
    for fc, fp in zip(candidate.fields, prev.fields):
        d = fc.values - fp.values
        penalty += trapezoid_integral(d * d, fc.grid)
    return p_energy(candidate) + penalty / (2.0 * tau)


@dataclass(frozen=True)
class ConstraintVector(object):
    """The four junction constraints evaluated at a state."""

    values: np.ndarray  # shape (4,)

    @property
    def defect(self) -> float:
        return float(np.max(np.abs(self.values)))


def constraint_vector(state: NetworkState) -> ConstraintVector:
    """Evaluate the four tangent-integral constraints.

    With I_j = int over curve j and (dx, dy) the stored offsets:

        c1 = I_1 cos - I_2 cos - off12_x      c2 = I_1 sin - I_2 sin - off12_y
        c3 = I_3 cos - I_1 cos - off31_x      c4 = I_3 sin - I_1 sin - off31_y

    All four vanish exactly when the three curves traced out from a common
    junction end at mutually consistent points.
    """
    ic = [trapezoid_integral(np.cos(f.values), f.grid) for f in state.fields]
    isn = [trapezoid_integral(np.sin(f.values), f.grid) for f in state.fields]
    off = state.offsets
    c = np.array([
        ic[0] - ic[1] - off[0, 0],
        isn[0] - isn[1] - off[0, 1],
        ic[2] - ic[0] - off[1, 0],
        isn[2] - isn[0] - off[1, 1],
    ])
    return ConstraintVector(c)


def constraint_gradients(state: NetworkState):
    """L2 gradients of the four constraints, as nodal arrays per curve.

    Returns a list of four triples; entry [l][j] is the nodal array of
    d c_l / d theta^j.  Pairing any of these against a variation with the
    trapezoid rule gives the exact derivative of ``constraint_vector``.
    """
    sins = [np.sin(f.values) for f in state.fields]
    coss = [np.cos(f.values) for f in state.fields]
    zeros = [np.zeros_like(f.values) for f in state.fields]
    return [
        (-sins[0], sins[1], zeros[2]),
        (coss[0], -coss[1], zeros[2]),
        (sins[0], zeros[1], -sins[2]),
        (-coss[0], zeros[1], coss[2]),
    ]


@dataclass(frozen=True)
class MultiplierMatrices(object):
    """Per-curve Gram matrices and elastic forcing vectors.

    ``A`` has shape (3, 2, 2); curve i contributes

        A^i = [[ int sin^2,    -int sin cos ],
               [ -int sin cos,  int cos^2   ]]

    (trapezoid rule).  ``G`` has shape (3, 2): the cellwise sums
    sum_c h |D theta_c|^p (cos, sin)(theta averaged over cell c).  ``dets``
    are the three determinants of A.
    """

    A: np.ndarray
    G: np.ndarray
    dets: np.ndarray


def _curve_gram(f: AngleField) -> np.ndarray:
    s = np.sin(f.values)
    c = np.cos(f.values)
    ss = trapezoid_integral(s * s, f.grid)
    cc = trapezoid_integral(c * c, f.grid)
    sc = trapezoid_integral(s * c, f.grid)
    return np.array([[ss, -sc], [-sc, cc]])


def _curve_forcing(f: AngleField, p: float) -> np.ndarray:
    slopes = midpoint_gradient(f)
    mid = 0.5 * (f.values[:-1] + f.values[1:])
    w = f.grid.spacing * np.abs(slopes) ** p
    return np.array([np.sum(w * np.cos(mid)), np.sum(w * np.sin(mid))])


def assemble_multiplier_data(state: NetworkState) -> MultiplierMatrices:
    """Assemble the A matrices, forcing vectors G and determinants."""
    A = np.stack([_curve_gram(f) for f in state.fields])
    G = np.stack([_curve_forcing(f, state.p_exponent) for f in state.fields])
    dets = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
    return MultiplierMatrices(A=A, G=G, dets=dets)


def det_identity_check(f: AngleField):
    """Return (det A, double-sum form) of the Gram determinant.

    The determinant of the single-curve Gram matrix equals

        (1/2) int int sin^2(theta(s) - theta(t)) ds dt

    exactly (Lagrange identity), for any quadrature weights, so the two
    numbers agree to rounding.  Quadratic cost in the node count.
    """
    gram = _curve_gram(f)
    det = float(gram[0, 0] * gram[1, 1] - gram[0, 1] * gram[1, 0])
    w = trapezoid_weights(f.grid)
    diff = f.values[:, None] - f.values[None, :]
    double = 0.5 * float(w @ (np.sin(diff) ** 2) @ w)
    return det, double


def _sharp_modulus_inverse(f: AngleField, y: float) -> float:
    """Largest r = k*h such that |theta(s) - theta(t)| <= y whenever
    |s - t| <= r, measured over grid nodes.

    For the piecewise-linear interpolant this node-pair scan is sharp at
    grid-multiple distances: on each cell theta is monotone affine, so the
    oscillation over any window is attained with both ends at nodes once the
    window is widened to the enclosing grid multiple.
    """
    vals = f.values
    m = vals.shape[0]
    diff = np.abs(vals[:, None] - vals[None, :])
    # osc_by_gap[k] = max |theta_i - theta_j| over |i - j| <= k
    worst_at_gap = np.zeros(m)
    for k in range(1, m):
        worst_at_gap[k] = np.max(np.diagonal(diff, offset=k))
    osc_by_gap = np.maximum.accumulate(worst_at_gap)
    ok = np.flatnonzero(osc_by_gap <= y)
    k_best = int(ok[-1]) if ok.size else 0
    return k_best * f.grid.spacing


@dataclass(frozen=True)
class OscillationStats(object):
    """Oscillation-based lower bound on the Gram determinant."""

    osc: float
    delta0: float
    modulus_inverse_at: float
    det_lower_bound: float


def oscillation_stats(f: AngleField, modulus_inverse=None) -> OscillationStats:
    """Oscillation, clipped oscillation and the determinant lower bound

        det A >= (L/2) * sin^2(delta0/4) * min(r, L/2),

    delta0 = min(osc, pi) and r the largest window over which theta varies
    by at most delta0/4.  ``modulus_inverse(f, y)`` may replace the default
    sharp node-pair scan, e.g. with an analytic modulus of continuity; it
    must never overestimate the true window.
    """
    if modulus_inverse is None:
        modulus_inverse = _sharp_modulus_inverse
    osc = f.oscillation()
    delta0 = min(osc, np.pi)
    half_l = 0.5 * f.grid.length
    if delta0 <= 0.0:
        return OscillationStats(osc, delta0, half_l, 0.0)
    r = float(modulus_inverse(f, 0.25 * delta0))
    bound = half_l * np.sin(0.25 * delta0) ** 2 * min(r, half_l)
    return OscillationStats(osc, delta0, r, float(bound))


def step_gradient(candidate: NetworkState, prev: NetworkState, tau: float):
    """Lumped L2 gradient of the step functional, one nodal array per curve.

    Node k of curve j carries

        (theta_k - theta_prev_k) / tau - (discrete p-Laplacian of theta)_k

    where the discrete p-Laplacian takes differences of cell fluxes
    F_c = |D_c|^(p-2) D_c over the node's dual cell (half cells at the
    boundary, which encodes the natural zero-flux boundary condition).
    Dividing the Euclidean partial derivatives of the step functional by the
    trapezoid weights yields exactly these values.
    """
    require_compatible(candidate, prev)
    p = candidate.p_exponent
    out = []
    for fc, fp in zip(candidate.fields, prev.fields):
        h = fc.grid.spacing
        flux = _flux(midpoint_gradient(fc), p)
        g = np.empty_like(fc.values)
        g[1:-1] = (flux[:-1] - flux[1:]) / h
        g[0] = -2.0 * flux[0] / h
        g[-1] = 2.0 * flux[-1] / h
        g += (fc.values - fp.values) / tau
        out.append(g)
    return tuple(out)
