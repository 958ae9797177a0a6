"""Builders for small random test states."""

import numpy as np

from thetaflow import AngleField, Grid, NetworkState

from oracles import random_angle_field_values


def make_state(rng, lengths=(1.0, 0.9, 0.7), m=9, p=2.0, offsets=None,
               scale=1.0, smooth=True):
    fields = tuple(
        AngleField(Grid(L, m), random_angle_field_values(rng, m, smooth, scale))
        for L in lengths
    )
    if offsets is None:
        return NetworkState(fields, p_exponent=p)
    return NetworkState(fields, offsets=np.asarray(offsets, float), p_exponent=p)


def make_pair(rng, tau=0.05, step_scale=0.1, **kwargs):
    """A (candidate, prev) pair differing by a smooth random increment."""
    cand = make_state(rng, **kwargs)
    prev = cand.with_values(tuple(
        v + step_scale * random_angle_field_values(rng, len(v))
        for v in cand.values()
    ))
    return cand, prev, tau


def steep_pair(rng, m=5, p=2.0, tau=0.1):
    """A pair whose candidate slopes stay well away from zero, so that
    p < 2 flux derivatives remain bounded for finite-difference checks."""
    lengths = (1.0, 0.9, 0.7)
    values = []
    for L in lengths:
        h = L / (m - 1)
        slopes = rng.uniform(0.4, 1.5, size=m - 1) * rng.choice([-1.0, 1.0], size=m - 1)
        vals = np.concatenate([[rng.uniform(-1, 1)], np.cumsum(slopes * h)])
        vals[1:] += vals[0]
        values.append(vals)
    fields = tuple(AngleField(Grid(L, m), v) for L, v in zip(lengths, values))
    cand = NetworkState(fields, p_exponent=p)
    prev = cand.with_values(tuple(
        v + 0.02 * rng.normal(size=m) for v in cand.values()
    ))
    return cand, prev, tau
