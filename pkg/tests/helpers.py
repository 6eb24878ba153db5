"""Shared test utilities."""

import numpy as np

from hypermoment.index import IndexSet, order
from hypermoment.state import MomentState


def random_state(rng, D, M, scale=0.2):
    """Admissible state with SPD pressure and small free coefficients."""
    A = rng.normal(size=(D, D))
    p = A @ A.T + D * np.eye(D)
    f = {
        a: scale * rng.normal()
        for a in IndexSet(D, M).indices
        if order(a) >= 3
    }
    return MomentState(
        D=D, M=M, rho=0.5 + rng.random(), u=rng.normal(size=D), p=p, f=f
    )
