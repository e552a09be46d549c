"""Generative constructions for the count-valued feature process.

Three routes produce draws from the same law:

* nbibp_simulate: the sequential buffet construction.  Row m+1 revisits every
  existing dish k with a BNB(r, S_k, c + m r) count (S_k = servings so far)
  and opens Poisson(c T [psi(c + (m+1) r) - psi(c + m r)]) new dishes, each
  with a digamma(r, c + m r) count.  It is literally predictive_step folded
  from the empty array, so the predictive and the prior share one code path.
* bnbp_sample_finitary: the one-shot finite construction of the process
  masses themselves, Poisson-many atoms with digamma counts plus BNB counts
  at any fixed atoms of the base.
* truncated_oracle_simulate: a deliberately independent hierarchical oracle
  that first realizes the underlying weight measure down to weights > epsilon
  and then draws NB counts per atom.  It shares no distributional code path
  with the buffet route, which is what makes agreement between the two an
  informative check.  Truncation bias: a feature is missed when its weight
  falls below epsilon, an event of total expected count about c T n r epsilon.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

from scipy.integrate import quad

from .distributions import (
    BnbParams,
    DigammaParams,
    _nb_draw,
    bnb_sample,
    digamma_sample,
)
from .numerics import harmonic_gap
from .structures import FeatureArray

__all__ = [
    "AtomPosterior",
    "PosteriorBase",
    "posterior_hyper",
    "predictive_step",
    "nbibp_simulate",
    "bnbp_sample_finitary",
    "truncated_weight_mass",
    "truncated_oracle_simulate",
]


@dataclass(frozen=True)
class AtomPosterior:
    """Posterior law of one seen atom's weight: Beta(count, c + n r) under
    concentration c_n = c + count + n r."""

    count: int
    concentration: float
    beta_shapes: tuple


@dataclass(frozen=True)
class PosteriorBase:
    """The weight measure given n rows: per-atom beta laws plus the untouched
    diffuse remainder, which is again of the prior form with concentration
    c + n r and base mass c T / (c + n r)."""

    atoms: tuple
    unseen_concentration: float
    unseen_mass: float


def posterior_hyper(hp, counts, n):
    """Conjugate update of the weight measure after n rows with per-feature
    serving totals `counts`."""
    if n != int(n) or n < 0:
        raise ValueError(f"posterior_hyper needs integer n >= 0, got {n!r}")
    n = int(n)
    cnr = hp.c + n * hp.r
    atoms = []
    for s in counts:
        if s != int(s) or s < 1:
            raise ValueError(f"seen features need integer serving totals >= 1, got {s!r}")
        s = int(s)
        atoms.append(AtomPosterior(s, hp.c + s + n * hp.r, (float(s), cnr)))
    return PosteriorBase(tuple(atoms), cnr, hp.c * hp.T / cnr)


def predictive_step(arr, hp, rng):
    """Append one row drawn from the law of the next row given the array.

    Existing columns receive BNB(r, S_k, c + m r) counts through the
    posterior atom laws; fresh columns arrive Poisson-many with digamma
    counts, in draw order after the existing columns.
    """
    if hp.fixed_atoms:
        raise ValueError("the sequential construction needs a diffuse base")
    m = arr.n
    base = posterior_hyper(hp, arr.column_sums(), m)
    grown = []
    for col, atom in zip(arr.columns, base.atoms):
        a, b = atom.beta_shapes
        z = bnb_sample(BnbParams(hp.r, a, b), rng)
        grown.append(col + (z,))
    fresh_rate = (
        base.unseen_concentration
        * base.unseen_mass
        * harmonic_gap(hp.r, base.unseen_concentration)
    )
    mass_law = DigammaParams(hp.r, base.unseen_concentration)
    zeros = (0,) * m
    for _ in range(rng.poisson(fresh_rate)):
        grown.append(zeros + (digamma_sample(mass_law, rng),))
    return FeatureArray(m + 1, tuple(grown))


def nbibp_simulate(n, hp, rng):
    """n rows of the buffet construction, columns in creation order."""
    if n != int(n) or n < 0:
        raise ValueError(f"nbibp_simulate needs integer n >= 0, got {n!r}")
    arr = FeatureArray(0, ())
    for _ in range(int(n)):
        arr = predictive_step(arr, hp, rng)
    return arr


def bnbp_sample_finitary(hp, rng):
    """One draw of the process masses: (counts at fixed atoms, diffuse counts).

    The diffuse part realizes Poisson(c T [psi(c + r) - psi(c)]) atoms with
    i.i.d. digamma(r, c) counts; each fixed atom of weight b contributes a
    BNB(r, c b, c (1 - b)) count (possibly zero).  Counts are returned rather
    than located atoms: locations are exchangeable labels with no bearing on
    any downstream computation.
    """
    fixed = [
        bnb_sample(BnbParams(hp.r, hp.c * b, hp.c * (1.0 - b)), rng)
        for b in hp.fixed_atoms
    ]
    kappa = rng.poisson(hp.c * hp.T * harmonic_gap(hp.r, hp.c))
    mass_law = DigammaParams(hp.r, hp.c)
    diffuse = [digamma_sample(mass_law, rng) for _ in range(kappa)]
    return fixed, diffuse


# ---------------------------------------------------------------------------
# truncated hierarchical oracle


@lru_cache(maxsize=128)
def _weight_integrals(c, epsilon):
    """(I_low, I_high): integral of p^{-1} (1-p)^{c-1} over (eps, 1/2] and
    (max(eps, 1/2), 1)."""
    lo = max(epsilon, 0.5)
    out = quad(
        lambda p: 1.0 / p,
        lo,
        1.0,
        weight="alg",
        wvar=(0.0, c - 1.0),
        epsabs=1e-12,
        epsrel=1e-12,
        full_output=1,
    )
    if out[1] > 1e-10:
        raise RuntimeError(f"weight-measure quadrature failed near 1: abserr={out[1]!r}")
    i_high = out[0]
    i_low = 0.0
    if epsilon < 0.5:
        # in t = log p the lower piece is smooth and bounded
        out = quad(
            lambda t: math.exp((c - 1.0) * math.log1p(-math.exp(t))),
            math.log(epsilon),
            math.log(0.5),
            epsabs=1e-12,
            epsrel=1e-12,
            limit=200,
            full_output=1,
        )
        if out[1] > 1e-10:
            raise RuntimeError(f"weight-measure quadrature failed near 0: abserr={out[1]!r}")
        i_low = out[0]
    return i_low, i_high


def truncated_weight_mass(hp, epsilon):
    """Expected atom count with weight above epsilon:
    c T int_epsilon^1 p^{-1} (1-p)^{c-1} dp."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    i_low, i_high = _weight_integrals(hp.c, epsilon)
    return hp.c * hp.T * (i_low + i_high)


def _draw_weight(c, epsilon, i_low, i_high, rng):
    """One weight from the normalized density p^{-1} (1-p)^{c-1} on (eps, 1)."""
    lo = max(epsilon, 0.5)
    if rng.uniform() * (i_low + i_high) < i_high:
        # upper piece: propose 1-p ~ (1-p)^{c-1} exactly, thin by lo/p <= 1
        width = 1.0 - lo
        while True:
            p = 1.0 - width * rng.uniform() ** (1.0 / c)
            if rng.uniform() * p < lo * 1.0:
                return p
    # lower piece in t = log p: bounded envelope, monotone target
    t_lo, t_hi = math.log(epsilon), math.log(0.5)
    env = max(
        math.exp((c - 1.0) * math.log1p(-epsilon)),
        math.exp((c - 1.0) * math.log(0.5)),
    )
    while True:
        t = t_lo + rng.uniform() * (t_hi - t_lo)
        if rng.uniform() * env < math.exp((c - 1.0) * math.log1p(-math.exp(t))):
            return math.exp(t)


def truncated_oracle_simulate(n, hp, epsilon, rng):
    """n rows via the explicit weight measure, dropping weights <= epsilon.

    Realizes Poisson-many atoms with weights from the restricted intensity,
    then n independent NB(r, p) counts per atom; columns that come out
    all-zero are unobservable and are discarded.  Weight sampling is exact
    (piecewise rejection), so epsilon is the only approximation.
    """
    if hp.fixed_atoms:
        raise ValueError("the truncated oracle needs a diffuse base")
    if n != int(n) or n < 1:
        raise ValueError(f"truncated_oracle_simulate needs integer n >= 1, got {n!r}")
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    n = int(n)
    i_low, i_high = _weight_integrals(hp.c, epsilon)
    atoms = rng.poisson(hp.c * hp.T * (i_low + i_high))
    cols = []
    for _ in range(atoms):
        p = _draw_weight(hp.c, epsilon, i_low, i_high, rng)
        col = tuple(_nb_draw(hp.r, p, rng) for _ in range(n))
        if any(col):
            cols.append(col)
    return FeatureArray(n, tuple(cols))
