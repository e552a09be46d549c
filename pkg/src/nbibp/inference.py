"""MCMC over the latent count matrix and its companions.

The target is p(W, Theta, T, c, r | y) under a Poisson factorization
likelihood: y_{iv} ~ Poisson(sum_j W_{ij} Theta_{jv}), with the buffet-process
prior on W, i.i.d. Gamma(a, b) entries of Theta, a Gamma(alpha, beta) prior on
the base mass T, and configurable priors on c and r.  No weight measure is
ever instantiated; every kernel works through the marginal array p.m.f.

Kernels, in sweep order: per-entry MH with the exact prior-conditional
proposal (so prior terms cancel and only the likelihood ratio remains), a
per-row birth/death move for that row's singleton features, a conjugate
Theta draw via multinomial allocation, an exact gamma draw for T, slice
updates for c and r, and an optional uniform column shuffle.  Rejected
proposals leave everything but the stream position untouched.

A model built with y=None has a constant likelihood: every acceptance ratio
is one and Theta reverts to its prior.  The chain then targets the prior
itself, which is how the prior-invariance harnesses drive these kernels.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gammaln

from .distributions import BnbParams, DigammaParams, bnb_sample, digamma_sample
from .generative import nbibp_simulate
from .numerics import harmonic_gap
from .structures import FeatureArray, Hyperparams, log_pmf_array

__all__ = [
    "PoissonFactorModel",
    "ChainState",
    "HyperPrior",
    "ChainConfig",
    "log_joint",
    "update_entry",
    "update_singletons",
    "update_theta",
    "update_mass_T",
    "update_c_r",
    "shuffle_columns",
    "sweep_once",
    "run_chain",
    "prior_state",
    "resample_counts",
    "chain_record",
]


class PoissonFactorModel:
    """Count observations y (n rows by V columns) with Gamma(a, b) factor prior.

    y=None gives the flat-likelihood variant over an explicit (n, V) shape.
    """

    def __init__(self, y=None, a_theta=1.0, b_theta=1.0, n=None, V=None):
        if y is None:
            if n is None or V is None:
                raise ValueError("a flat model needs explicit n and V")
            self.y = None
            self.n, self.V = int(n), int(V)
        else:
            y = np.asarray(y)
            if y.ndim != 2:
                raise ValueError(f"y must be a 2-d count matrix, got ndim={y.ndim}")
            if not np.issubdtype(y.dtype, np.integer):
                if not np.all(y == np.floor(y)):
                    raise ValueError("y entries must be integers")
            y = y.astype(np.int64)
            if (y < 0).any():
                raise ValueError("y entries must be >= 0")
            self.y = y
            self.n, self.V = y.shape
        if self.n < 1 or self.V < 1:
            raise ValueError(f"model needs n, V >= 1, got n={self.n}, V={self.V}")
        if not (a_theta > 0.0 and b_theta > 0.0):
            raise ValueError(f"factor prior needs a, b > 0, got ({a_theta!r}, {b_theta!r})")
        self.a_theta = float(a_theta)
        self.b_theta = float(b_theta)

    def row_loglik(self, i, w_row, theta):
        """log p(y_i | w_row, theta); -inf when a zero rate meets a positive count."""
        if self.y is None:
            return 0.0
        w = np.asarray(w_row, dtype=np.float64)
        rates = w @ theta if w.size else np.zeros(self.V)
        ys = self.y[i]
        dead = rates <= 0.0
        if np.any(dead & (ys > 0)):
            return -math.inf
        lam = rates[~dead]
        yy = ys[~dead]
        return float(np.sum(yy * np.log(lam) - lam - gammaln(yy + 1.0)))

    def loglik(self, w_mat, theta):
        if self.y is None:
            return 0.0
        total = 0.0
        for i in range(self.n):
            li = self.row_loglik(i, w_mat[i], theta)
            if li == -math.inf:
                return -math.inf
            total += li
        return total


@dataclass
class ChainState:
    """Mutable chain position: the array W, its factor matrix (row j of Theta
    pairs with column j of W), the hyperparameters, the (alpha, beta) gamma
    prior on T, and the owning random stream."""

    W: FeatureArray
    Theta: np.ndarray
    hp: Hyperparams
    t_prior: tuple = (1.0, 1.0)
    rng: object = None

    def __post_init__(self):
        self.Theta = np.asarray(self.Theta, dtype=np.float64)
        if self.Theta.ndim != 2:
            raise ValueError(f"Theta must be 2-d, got ndim={self.Theta.ndim}")
        a, b = self.t_prior
        if not (a > 0.0 and b > 0.0):
            raise ValueError(f"T prior needs alpha, beta > 0, got {self.t_prior!r}")
        self.t_prior = (float(a), float(b))
        self.check()

    def check(self):
        if self.Theta.shape[0] != self.W.kappa:
            raise ValueError(
                f"Theta has {self.Theta.shape[0]} rows but W has {self.W.kappa} columns"
            )
        if self.Theta.size and not (self.Theta > 0.0).all():
            raise ValueError("Theta entries must be positive")

    def snapshot(self):
        return replace(self, Theta=self.Theta.copy())


@dataclass(frozen=True)
class HyperPrior:
    """Prior for a positive scalar: kind 'gamma' with (shape a, rate b),
    'lognormal' with (mu a, sigma b), or 'point' fixing the value a."""

    kind: str = "gamma"
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gamma", "lognormal", "point"):
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if self.kind == "gamma" and not (self.a > 0.0 and self.b > 0.0):
            raise ValueError(f"gamma prior needs a, b > 0, got ({self.a!r}, {self.b!r})")
        if self.kind == "lognormal" and not self.b > 0.0:
            raise ValueError(f"lognormal prior needs sigma > 0, got {self.b!r}")
        if self.kind == "point" and not self.a > 0.0:
            raise ValueError(f"point prior needs a positive value, got {self.a!r}")

    def log_density(self, x):
        if x <= 0.0:
            return -math.inf
        if self.kind == "gamma":
            return (self.a - 1.0) * math.log(x) - self.b * x
        if self.kind == "lognormal":
            lx = math.log(x)
            return -lx - 0.5 * ((lx - self.a) / self.b) ** 2
        return 0.0 if x == self.a else -math.inf


@dataclass(frozen=True)
class ChainConfig:
    """Which kernels a sweep runs, thinning, and the c/r update setup."""

    entries: bool = True
    singletons: bool = True
    theta: bool = True
    mass: bool = True
    conc: bool = True
    shape: bool = True
    shuffle: bool = False
    thin: int = 1
    c_prior: HyperPrior = HyperPrior()
    r_prior: HyperPrior = HyperPrior()
    width_c: float = 1.0
    width_r: float = 1.0

    def __post_init__(self):
        if self.thin != int(self.thin) or self.thin < 1:
            raise ValueError(f"thin must be a positive integer, got {self.thin!r}")


def log_joint(state, model):
    """log p(y, W, Theta | T, c, r); -inf when the data is impossible."""
    lp = log_pmf_array(state.W, state.hp)
    th = state.Theta
    if th.size:
        a, b = model.a_theta, model.b_theta
        lp += float(
            np.sum((a - 1.0) * np.log(th) - b * th) + th.size * (a * math.log(b) - gammaln(a))
        )
    ll = model.loglik(state.W.to_matrix(), state.Theta)
    return lp + ll


def _row_values(arr, i):
    return np.array([col[i] for col in arr.columns], dtype=np.float64)


def _accept(delta_new, delta_old, rng):
    """MH accept/reject on a log-likelihood pair, tolerating -inf states."""
    if delta_new == -math.inf:
        return False
    if delta_old == -math.inf:
        return True
    d = delta_new - delta_old
    return d >= 0.0 or rng.uniform() < math.exp(d)


def update_entry(state, model, i, j):
    """MH refresh of W[i, j] for a column some other row also expresses.

    The proposal is the exact conditional of the entry under the array prior
    given everything else, so the acceptance ratio is the likelihood ratio
    alone.
    """
    W, hp = state.W, state.hp
    col = W.columns[j]
    s_minus = sum(col) - col[i]
    if s_minus < 1:
        raise ValueError(
            f"entry ({i}, {j}) is a singleton of its row; the birth/death move owns it"
        )
    prop = bnb_sample(
        BnbParams(hp.r, float(s_minus), hp.c + (W.n - 1) * hp.r), state.rng
    )
    if prop == col[i]:
        return state
    w_old = _row_values(W, i)
    w_new = w_old.copy()
    w_new[j] = prop
    if _accept(
        model.row_loglik(i, w_new, state.Theta),
        model.row_loglik(i, w_old, state.Theta),
        state.rng,
    ):
        new_col = col[:i] + (prop,) + col[i + 1 :]
        state.W = FeatureArray(W.n, W.columns[:j] + (new_col,) + W.columns[j + 1 :])
    return state


def update_singletons(state, model, i):
    """Birth/death of row i's private features.

    Proposes dropping every column only row i expresses and birthing a
    Poisson(c T [psi(c+nr) - psi(c+(n-1)r)]) batch of fresh ones at uniform
    slots, masses from the digamma law and factor rows from the prior; prior
    and proposal terms cancel, leaving the likelihood ratio of row i.
    """
    W, hp, rng = state.W, state.hp, state.rng
    n = W.n
    keep = [j for j, col in enumerate(W.columns) if sum(col) > col[i] or col[i] == 0]
    theta_tail = hp.c + (n - 1) * hp.r
    born = rng.poisson(hp.c * hp.T * harmonic_gap(hp.r, theta_tail))
    mass_law = DigammaParams(hp.r, theta_tail)
    masses = [digamma_sample(mass_law, rng) for _ in range(born)]
    kappa_star = len(keep) + born
    slots = set(rng.choose(kappa_star, born).tolist()) if born else set()
    if born:
        block = rng.gamma_array(
            np.full((born, model.V), model.a_theta), 1.0 / model.b_theta
        )
    else:
        block = np.zeros((0, model.V))

    cols, theta_rows = [], []
    kept_iter = iter(keep)
    fresh = 0
    for slot in range(kappa_star):
        if slot in slots:
            cols.append(tuple(masses[fresh] if t == i else 0 for t in range(n)))
            theta_rows.append(block[fresh])
            fresh += 1
        else:
            j = next(kept_iter)
            cols.append(W.columns[j])
            theta_rows.append(state.Theta[j])
    new_theta = np.array(theta_rows, dtype=np.float64).reshape(kappa_star, model.V)
    new_W = FeatureArray(n, tuple(cols))

    if _accept(
        model.row_loglik(i, _row_values(new_W, i), new_theta),
        model.row_loglik(i, _row_values(W, i), state.Theta),
        rng,
    ):
        state.W = new_W
        state.Theta = new_theta
    return state


def update_theta(state, model):
    """Conjugate factor refresh through latent count allocation.

    Each observed count splits multinomially across features in proportion to
    W_{ij} Theta_{jv}; given the split, factor entries are gamma.  With no
    data the draw is the plain prior.
    """
    kappa = state.W.kappa
    if kappa < 1:
        raise ValueError("no factor rows to update on an empty array")
    rng = state.rng
    if model.y is None:
        state.Theta = rng.gamma_array(
            np.full((kappa, model.V), model.a_theta), 1.0 / model.b_theta
        )
        return state
    w_mat = state.W.to_matrix().astype(np.float64)
    alloc = np.zeros((kappa, model.V))
    for i in range(model.n):
        for v in range(model.V):
            yiv = int(model.y[i, v])
            if yiv == 0:
                continue
            weights = w_mat[i] * state.Theta[:, v]
            total = weights.sum()
            if total <= 0.0:
                raise RuntimeError(
                    f"count y[{i},{v}]={yiv} has zero rate; the chain entered an impossible state"
                )
            alloc[:, v] += rng.multinomial(yiv, weights / total)
    shape = model.a_theta + alloc
    rate = model.b_theta + w_mat.sum(axis=0)[:, None]
    state.Theta = rng.gamma_array(shape, 1.0 / rate)
    return state


def update_mass_T(state):
    """Exact gamma draw of the base mass: T | W ~ Gamma(alpha + kappa, beta +
    c [psi(c + n r) - psi(c)])."""
    alpha, beta = state.t_prior
    hp = state.hp
    rate = beta + hp.c * harmonic_gap(state.W.n * hp.r, hp.c)
    new_t = state.rng.gamma(alpha + state.W.kappa, 1.0 / rate)
    state.hp = Hyperparams(hp.r, hp.c, new_t, hp.fixed_atoms)
    return state


def _slice_update(x0, log_target, width, rng, max_steps=1000):
    """One stepping-out/shrinkage slice move on (0, inf)."""
    f0 = log_target(x0)
    if not math.isfinite(f0):
        raise ValueError(f"slice sampling started at zero density (x0={x0!r})")
    level = f0 + math.log1p(-rng.uniform())
    lo = x0 - width * rng.uniform()
    hi = lo + width
    steps = max_steps
    while lo > 0.0 and log_target(lo) > level:
        lo -= width
        steps -= 1
        if steps == 0:
            raise RuntimeError(f"slice bracket grew past {max_steps} expansions (left)")
    lo = max(lo, 0.0)
    steps = max_steps
    while log_target(hi) > level:
        hi += width
        steps -= 1
        if steps == 0:
            raise RuntimeError(f"slice bracket grew past {max_steps} expansions (right)")
    for _ in range(max_steps):
        x = lo + rng.uniform() * (hi - lo)
        if x > 0.0 and log_target(x) > level:
            return x
        if x < x0:
            lo = x
        else:
            hi = x
    raise RuntimeError("slice shrinkage exhausted its iteration budget")


def update_c_r(state, c_prior=HyperPrior(), r_prior=HyperPrior(), width_c=1.0, width_r=1.0):
    """Slice updates of c then r against the array p.m.f. plus the prior.

    A 'point' prior pins its parameter and skips the move.
    """
    hp = state.hp
    if c_prior.kind != "point":

        def target_c(c):
            lp = c_prior.log_density(c)
            if lp == -math.inf:
                return -math.inf
            return lp + log_pmf_array(state.W, Hyperparams(hp.r, c, hp.T, hp.fixed_atoms))

        hp = Hyperparams(
            hp.r, _slice_update(hp.c, target_c, width_c, state.rng), hp.T, hp.fixed_atoms
        )
    if r_prior.kind != "point":

        def target_r(r):
            lp = r_prior.log_density(r)
            if lp == -math.inf:
                return -math.inf
            return lp + log_pmf_array(state.W, Hyperparams(r, hp.c, hp.T, hp.fixed_atoms))

        hp = Hyperparams(
            _slice_update(hp.r, target_r, width_r, state.rng), hp.c, hp.T, hp.fixed_atoms
        )
    state.hp = hp
    return state


def shuffle_columns(state):
    """Uniformly permute columns (and factor rows with them).

    Every implemented target is label-invariant, so this is a pure mixing
    move for the column ordering.
    """
    perm = state.rng.permutation(state.W.kappa)
    state.W = FeatureArray(state.W.n, tuple(state.W.columns[j] for j in perm))
    state.Theta = state.Theta[perm]
    return state


def sweep_once(state, model, config=ChainConfig()):
    """One full kernel pass in the fixed order: all non-singleton entries
    row-major, the per-row singleton move, Theta, T, c, r, optional shuffle."""
    if config.entries:
        for i in range(model.n):
            for j in range(state.W.kappa):
                col = state.W.columns[j]
                if sum(col) - col[i] > 0:
                    update_entry(state, model, i, j)
    if config.singletons:
        for i in range(model.n):
            update_singletons(state, model, i)
    if config.theta and state.W.kappa:
        update_theta(state, model)
    if config.mass:
        update_mass_T(state)
    if config.conc or config.shape:
        cp = config.c_prior if config.conc else HyperPrior("point", state.hp.c)
        rp = config.r_prior if config.shape else HyperPrior("point", state.hp.r)
        update_c_r(state, cp, rp, config.width_c, config.width_r)
    if config.shuffle:
        shuffle_columns(state)
    state.check()
    return state


def run_chain(model, init, sweeps, rng, config=ChainConfig()):
    """Generate thinned states: the init, then every thin-th sweep's result.

    The stream is a pure function of (model, init values, sweeps, rng key).
    """
    if sweeps != int(sweeps) or sweeps < 0:
        raise ValueError(f"sweeps must be an integer >= 0, got {sweeps!r}")
    if init.W.n != model.n:
        raise ValueError(f"init has n={init.W.n} but the model has n={model.n}")
    if init.Theta.shape[1] != model.V and init.W.kappa:
        raise ValueError(
            f"init factor width {init.Theta.shape[1]} does not match V={model.V}"
        )
    state = ChainState(init.W, init.Theta.copy(), init.hp, init.t_prior, rng)
    yield state.snapshot()
    for sweep in range(1, int(sweeps) + 1):
        sweep_once(state, model, config)
        if sweep % config.thin == 0:
            yield state.snapshot()


def prior_state(model, hp, t_prior, rng, draw_T=False):
    """A fresh state from the prior: optionally T ~ Gamma(t_prior), then the
    array, then factor rows."""
    if draw_T:
        hp = Hyperparams(
            hp.r, hp.c, rng.gamma(t_prior[0], 1.0 / t_prior[1]), hp.fixed_atoms
        )
    W = nbibp_simulate(model.n, hp, rng)
    theta = rng.gamma_array(
        np.full((W.kappa, model.V), model.a_theta), 1.0 / model.b_theta
    ).reshape(W.kappa, model.V)
    return ChainState(W, theta, hp, t_prior, rng)


def resample_counts(state, model, rng=None):
    """New model with y ~ Poisson(W Theta) drawn under the current state."""
    rng = state.rng if rng is None else rng
    if state.W.kappa:
        rates = state.W.to_matrix().astype(np.float64) @ state.Theta
    else:
        rates = np.zeros((model.n, model.V))
    return PoissonFactorModel(rng.poisson_array(rates), model.a_theta, model.b_theta)


def chain_record(state, sweep, model, full=False):
    """JSON-ready summary of one emitted state.

    log_joint is null when the state is impossible under the data (the value
    is -inf, which JSON cannot carry).
    """
    lj = log_joint(state, model)
    rec = {
        "sweep": int(sweep),
        "kappa": state.W.kappa,
        "T": state.hp.T,
        "c": state.hp.c,
        "r": state.hp.r,
        "total_count": int(sum(sum(col) for col in state.W.columns)),
        "log_joint": lj if math.isfinite(lj) else None,
    }
    if full:
        rec["W"] = [list(col) for col in state.W.columns]
        rec["Theta"] = [[float(x) for x in row] for row in state.Theta]
    return rec
