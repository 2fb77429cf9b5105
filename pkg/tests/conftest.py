import numpy as np
from hypothesis import strategies as st

from sltrust.opinion import Domain, Opinion

TOL = 1e-9

_unit = st.floats(min_value=0.0, max_value=1.0, allow_nan=False, allow_infinity=False)


@st.composite
def opinions(draw, W=None, min_u=0.0, max_u=1.0, uniform_base=False):
    """Valid multinomial opinion: belief and uncertainty split a unit mass."""
    if W is None:
        W = draw(st.integers(min_value=2, max_value=10))
    u = draw(st.floats(min_value=min_u, max_value=max_u, allow_nan=False))
    w = np.array(draw(st.lists(_unit, min_size=W, max_size=W)))
    w = w / w.sum() if w.sum() > 0 else np.full(W, 1.0 / W)
    b = (1.0 - u) * w
    if uniform_base:
        a = np.full(W, 1.0 / W)
    else:
        ar = np.array(draw(st.lists(st.floats(0.01, 1.0), min_size=W, max_size=W)))
        a = ar / ar.sum()
    return Opinion(Domain.of_size(W), b, 1.0 - b.sum(), a)


@st.composite
def opinion_pairs(draw, min_u=1e-3, max_u=1 - 1e-3):
    W = draw(st.integers(min_value=2, max_value=10))
    return (draw(opinions(W=W, min_u=min_u, max_u=max_u)),
            draw(opinions(W=W, min_u=min_u, max_u=max_u)))


def random_opinion_arrays(rng, n, W, u_lo=1e-3, u_hi=1 - 1e-3):
    """Batch of n random opinions as (b, u, a) arrays."""
    u = rng.uniform(u_lo, u_hi, n)
    w = rng.dirichlet(np.ones(W), n)
    b = (1 - u)[:, None] * w
    a = rng.dirichlet(np.ones(W), n)
    return b, u, a
