"""Statistical verification suites.

Each suite draws fresh data under an explicit seed, checks one analytic
property of the package against its stated tolerance, and returns a
JSON-ready result.  The command-line `validate` subcommand and the
acceptance test battery both run these same functions, so a shipped wheel
can re-verify itself in the field.

Error bars on chain output use the integrated autocorrelation time; naive
batch errors understate chain noise badly enough to flip verdicts (sweep
autocorrelation times here run 30 to 40 sweeps).
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln, psi
from scipy.stats import chi2 as _chi2

from .distributions import (
    BnbParams,
    DigammaParams,
    bnb_log_pmf,
    bnb_total_mass,
    digamma_log_pmf,
    digamma_sample_rounds,
    digamma_total_mass,
)
from .generative import nbibp_simulate, truncated_oracle_simulate
from .inference import (
    ChainConfig,
    PoissonFactorModel,
    prior_state,
    resample_counts,
    sweep_once,
)
from .numerics import RngStream, harmonic_gap
from .structures import (
    CombStruct,
    FeatureArray,
    Hyperparams,
    from_array,
    left_order,
    log_pmf_struct,
    project,
    struct_to_json,
)

__all__ = [
    "SuiteResult",
    "SUITES",
    "run_suites",
    "autocorr_time",
    "mean_with_se",
    "gof_chi_square",
    "two_sample_chi_square",
    "tail_aggregated_tv",
]


@dataclass
class SuiteResult:
    name: str
    passed: bool
    seconds: float
    metrics: dict = field(default_factory=dict)

    def to_json(self):
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "seconds": round(self.seconds, 3),
            "metrics": self.metrics,
        }


# ---------------------------------------------------------------------------
# statistical helpers


def autocorr_time(x, max_lag=500):
    """Integrated autocorrelation time, truncated at the first lag below 0.05."""
    x = np.asarray(x, dtype=np.float64)
    x = x - x.mean()
    v = float((x * x).mean())
    if v == 0.0:
        return 1.0
    tau = 1.0
    for k in range(1, min(max_lag, len(x) // 3)):
        rho = float((x[:-k] * x[k:]).mean()) / v
        if rho < 0.05:
            break
        tau += 2.0 * rho
    return tau


def mean_with_se(x, correlated=False):
    """(mean, standard error); correlated=True inflates by autocorrelation."""
    x = np.asarray(x, dtype=np.float64)
    se = x.std(ddof=1) / math.sqrt(len(x))
    if correlated:
        se *= math.sqrt(autocorr_time(x))
    return float(x.mean()), float(se)


def gof_chi_square(counts, prob_of, reps, min_expected=10.0):
    """Goodness of fit of observed category counts against exact probabilities.

    Categories with expected count >= min_expected keep their own cell; the
    rest pool into a single tail cell whose probability is exact.  Returns
    (p_value, cells, chi2).
    """
    chi2 = 0.0
    cells = 0
    covered = 0.0
    tail_obs = reps
    for key, obs in counts.items():
        pr = prob_of(key)
        if pr * reps < min_expected:
            continue
        chi2 += (obs - pr * reps) ** 2 / (pr * reps)
        covered += pr
        tail_obs -= obs
        cells += 1
    tail_exp = max((1.0 - covered) * reps, 1e-12)
    chi2 += (tail_obs - tail_exp) ** 2 / tail_exp
    return float(_chi2.sf(chi2, cells)), cells, float(chi2)


def two_sample_chi_square(counts_a, counts_b, min_pooled=20):
    """Homogeneity test for two equal-size empirical category distributions.

    Cells with pooled count below min_pooled merge into the tail cell.
    """
    na = sum(counts_a.values())
    nb = sum(counts_b.values())
    keys = [
        k
        for k in set(counts_a) | set(counts_b)
        if counts_a.get(k, 0) + counts_b.get(k, 0) >= min_pooled
    ]
    cells = []
    ta, tb = na, nb
    for k in keys:
        a, b = counts_a.get(k, 0), counts_b.get(k, 0)
        cells.append((a, b))
        ta -= a
        tb -= b
    cells.append((ta, tb))
    chi2 = 0.0
    for a, b in cells:
        tot = a + b
        if tot == 0:
            continue
        ea = tot * na / (na + nb)
        eb = tot * nb / (na + nb)
        chi2 += (a - ea) ** 2 / ea + (b - eb) ** 2 / eb
    dof = max(len(cells) - 1, 1)
    return float(_chi2.sf(chi2, dof)), len(cells), float(chi2)


def tail_aggregated_tv(counts_a, counts_b, min_pooled=40):
    """Total variation between two equal-size empirical laws after pooling
    every category with combined count < min_pooled into one tail cell."""
    na = sum(counts_a.values())
    nb = sum(counts_b.values())
    keys = [
        k
        for k in set(counts_a) | set(counts_b)
        if counts_a.get(k, 0) + counts_b.get(k, 0) >= min_pooled
    ]
    acc = 0.0
    ta, tb = 1.0, 1.0
    for k in keys:
        pa = counts_a.get(k, 0) / na
        pb = counts_b.get(k, 0) / nb
        acc += abs(pa - pb)
        ta -= pa
        tb -= pb
    return 0.5 * (acc + abs(ta - tb)), len(keys)


def _param_grid():
    vals = (0.5, 1.0, 1.5, 2.0, 5.0)
    return [(r, th) for r in vals for th in vals]


def _struct_counter(draws):
    out = {}
    for arr in draws:
        key = struct_to_json(from_array(arr))
        out[key] = out.get(key, 0) + 1
    return out


# ---------------------------------------------------------------------------
# suites


def suite_digamma_identity(seed=0):
    """pmf_digamma(z; r, t) = (t xi)^{-1} (z-1+r)/z pmf_bnb(z-1; r, 1, t)."""
    t0 = time.time()
    worst = 0.0
    for r, th in _param_grid():
        dig = DigammaParams(r, th)
        bnb = BnbParams(r, 1.0, th)
        pref = 1.0 / (th * harmonic_gap(r, th))
        for z in range(1, 201):
            lhs = math.exp(digamma_log_pmf(dig, z))
            rhs = pref * (z - 1.0 + r) / z * math.exp(bnb_log_pmf(bnb, z - 1))
            worst = max(worst, abs(lhs - rhs))
    return SuiteResult(
        "digamma-identity", worst <= 1e-10, time.time() - t0, {"max_abs_err": worst}
    )


def suite_normalization(seed=0):
    """Total p.m.f. mass equals 1 within 1e-10 across the parameter grid."""
    t0 = time.time()
    worst = 0.0
    for r, th in _param_grid():
        worst = max(worst, abs(digamma_total_mass(DigammaParams(r, th)) - 1.0))
        worst = max(worst, abs(bnb_total_mass(BnbParams(r, 1.0, th)) - 1.0))
    return SuiteResult(
        "normalization", worst <= 1e-10, time.time() - t0, {"max_abs_err": worst}
    )


def suite_rejection_sampler(seed=20, reps=100000):
    """Sampler matches its p.m.f. (chi-square) and its round-count budget."""
    t0 = time.time()
    metrics = {}
    ok = True
    for idx, (r, th) in enumerate([(1.0, 1.0), (2.0, 1.0), (0.5, 3.0)]):
        rng = RngStream(seed, idx)
        params = DigammaParams(r, th)
        draws = np.empty(reps, dtype=np.int64)
        rounds = np.empty(reps, dtype=np.int64)
        for k in range(reps):
            z, m = digamma_sample_rounds(params, rng)
            draws[k] = z
            rounds[k] = m
        vals, cnts = np.unique(draws, return_counts=True)
        counts = dict(zip(vals.tolist(), cnts.tolist()))
        pval, cells, _ = gof_chi_square(
            counts, lambda z: math.exp(digamma_log_pmf(params, z)), reps
        )
        want = max(r, 1.0) / (th * harmonic_gap(r, th))
        mean, se = mean_with_se(rounds)
        # r=1, theta=1 accepts every round: zero spread, exact agreement
        pull = (mean - want) / se if se > 0.0 else (0.0 if abs(mean - want) < 1e-12 else math.inf)
        key = f"r{r}_t{th}"
        metrics[key] = {
            "gof_p": pval,
            "cells": cells,
            "rounds_mean": mean,
            "rounds_want": want,
            "rounds_pull": pull,
        }
        ok = ok and pval > 0.001 and abs(pull) <= 3.0
    return SuiteResult("rejection-sampler", ok, time.time() - t0, metrics)


def suite_simulator_pmf(seed=40, reps=100000):
    """Sequential draws at n=2 match the exact structure p.m.f."""
    t0 = time.time()
    hp = Hyperparams(1.0, 1.0, 0.5)
    rng = RngStream(seed, 0)
    counts = _struct_counter(nbibp_simulate(2, hp, rng) for _ in range(reps))
    from .structures import struct_from_json

    pval, cells, chi2 = gof_chi_square(
        counts, lambda key: math.exp(log_pmf_struct(struct_from_json(key), hp)), reps
    )
    return SuiteResult(
        "simulator-pmf",
        pval > 0.001,
        time.time() - t0,
        {"p": pval, "cells": cells, "chi2": chi2, "reps": reps},
    )


def suite_two_construction(seed=50, reps=100000, epsilon=1e-4):
    """Buffet route and truncated weight-measure route agree in law."""
    t0 = time.time()
    hp = Hyperparams(1.0, 1.0, 0.5)
    rng_a = RngStream(seed, 0)
    rng_b = RngStream(seed, 1)
    ca = _struct_counter(nbibp_simulate(2, hp, rng_a) for _ in range(reps))
    cb = _struct_counter(
        truncated_oracle_simulate(2, hp, epsilon, rng_b) for _ in range(reps)
    )
    tv, cells = tail_aggregated_tv(ca, cb)
    return SuiteResult(
        "two-construction",
        tv <= 0.02,
        time.time() - t0,
        {"tv": tv, "cells": cells, "epsilon": epsilon, "reps": reps},
    )


def suite_exchangeability(seed=60, reps=40000):
    """Row order is immaterial, empirically and algebraically."""
    t0 = time.time()
    hp = Hyperparams(1.0, 1.0, 1.0)
    perm = (2, 0, 1)
    rng_a = RngStream(seed, 0)
    rng_b = RngStream(seed, 1)

    def canon(arr):
        return struct_to_json(from_array(left_order(arr)))

    def permuted(arr):
        cols = tuple(tuple(col[p] for p in perm) for col in arr.columns)
        return FeatureArray(arr.n, cols)

    ca, cb = {}, {}
    worst = 0.0
    for k in range(reps):
        a = nbibp_simulate(3, hp, rng_a)
        b = permuted(nbibp_simulate(3, hp, rng_b))
        ka, kb = canon(a), canon(b)
        ca[ka] = ca.get(ka, 0) + 1
        cb[kb] = cb.get(kb, 0) + 1
        if k < 500 and a.kappa:
            worst = max(
                worst,
                abs(
                    log_pmf_struct(from_array(a), hp)
                    - log_pmf_struct(from_array(permuted(a)), hp)
                ),
            )
    pval, cells, chi2 = two_sample_chi_square(ca, cb)
    return SuiteResult(
        "exchangeability",
        pval > 0.001 and worst <= 1e-12,
        time.time() - t0,
        {"p": pval, "cells": cells, "chi2": chi2, "max_alg_err": worst, "perm": list(perm)},
    )


def suite_projection(seed=70, reps=40000):
    """Dropping the last row of an (n+1)-row draw reproduces the n-row law."""
    t0 = time.time()
    hp = Hyperparams(1.0, 1.0, 1.0)
    rng_a = RngStream(seed, 0)
    rng_b = RngStream(seed, 1)
    ca = {}
    for _ in range(reps):
        s = project(from_array(nbibp_simulate(3, hp, rng_a)), 2)
        key = struct_to_json(s)
        ca[key] = ca.get(key, 0) + 1
    cb = _struct_counter(nbibp_simulate(2, hp, rng_b) for _ in range(reps))
    pval, cells, chi2 = two_sample_chi_square(ca, cb)
    one = CombStruct(3, {(1, 0, 2): 1, (0, 1, 0): 2})
    deterministic = (
        project(one, 2) == CombStruct(2, {(1, 0): 1, (0, 1): 2})
        and project(one, 1) == CombStruct(1, {(1,): 1})
        and project(one, 3) == one
    )
    return SuiteResult(
        "projection",
        pval > 0.001 and deterministic,
        time.time() - t0,
        {"p": pval, "cells": cells, "chi2": chi2, "deterministic": deterministic},
    )


def suite_expected_kappa(seed=80, reps=20000):
    """E[number of features] = c T [psi(c + n r) - psi(c)], incl. the r=1
    harmonic-number case T (1 + 1/2 + ... + 1/n)."""
    t0 = time.time()
    metrics = {}
    ok = True
    for idx, (r, c, T, n) in enumerate(
        [(1.0, 1.0, 1.0, 5), (2.0, 1.5, 0.8, 3), (0.5, 2.0, 1.0, 4)]
    ):
        rng = RngStream(seed, idx)
        want = c * T * (psi(c + n * r) - psi(c))
        ks = np.array(
            [nbibp_simulate(n, Hyperparams(r, c, T), rng).kappa for _ in range(reps)],
            dtype=np.float64,
        )
        mean, se = mean_with_se(ks)
        pull = (mean - want) / se
        entry = {"mean": mean, "want": float(want), "pull": pull}
        if r == 1.0:
            harmonic = T * sum(1.0 / k for k in range(1, n + 1))
            entry["harmonic_closed_form"] = harmonic
            entry["harmonic_err"] = abs(want - harmonic)
            ok = ok and abs(want - harmonic) <= 1e-12
        metrics[f"r{r}_c{c}_T{T}_n{n}"] = entry
        ok = ok and abs(pull) <= 3.0
    return SuiteResult("expected-kappa", ok, time.time() - t0, metrics)


def suite_prior_restoration(seed=301, sweeps=10000, forward_reps=20000):
    """Flat-likelihood MCMC leaves the prior invariant at n=3, r=c=T=1.

    The total serving count has an infinite prior mean here (its tail decays
    like z^{-2}), so its comparison is self-normalized: both sides estimate
    the same truncated functional and the pull stays calibrated.
    """
    t0 = time.time()
    hp = Hyperparams(1.0, 1.0, 1.0)
    model = PoissonFactorModel(None, n=3, V=2)
    cfg = ChainConfig(mass=False, conc=False, shape=False)
    rng = RngStream(seed, 0)
    state = prior_state(model, hp, (1.0, 1.0), rng)
    ks = np.empty(sweeps)
    ws = np.empty(sweeps)
    for s in range(sweeps):
        sweep_once(state, model, cfg)
        ks[s] = state.W.kappa
        ws[s] = sum(sum(col) for col in state.W.columns)
    rng_f = RngStream(seed, 1)
    fk = np.empty(forward_reps)
    fw = np.empty(forward_reps)
    for s in range(forward_reps):
        arr = nbibp_simulate(3, hp, rng_f)
        fk[s] = arr.kappa
        fw[s] = sum(sum(col) for col in arr.columns)

    def pull_between(chain, fwd):
        mc, sc = mean_with_se(chain, correlated=True)
        mf, sf = mean_with_se(fwd)
        return (mc - mf) / math.hypot(sc, sf), mc, mf

    pk, mck, mfk = pull_between(ks, fk)
    pw, mcw, mfw = pull_between(ws, fw)
    pv, mcv, mfv = pull_between((ks - ks.mean()) ** 2, (fk - fk.mean()) ** 2)
    ok = abs(pk) <= 3.0 and abs(pw) <= 3.0 and abs(pv) <= 3.0
    return SuiteResult(
        "prior-restoration",
        ok,
        time.time() - t0,
        {
            "kappa": {"chain": mck, "forward": mfk, "pull": pk},
            "kappa_var": {"chain": mcv, "forward": mfv, "pull": pv},
            "total_count": {"chain": mcw, "forward": mfw, "pull": pw},
            "exact_kappa_mean": float(psi(4.0) - psi(1.0)),
            "sweeps": sweeps,
        },
    )


def suite_geweke(seed=223, iters=30000, forward_reps=12000):
    """Forward vs successive-conditional moments on the Poisson factor model.

    n=3, V=2, r=1, c=3 (c large enough for finite count variance), T under a
    Gamma(4,4) prior so the mass kernel is exercised; c and r stay pinned.
    """
    t0 = time.time()
    hp = Hyperparams(1.0, 3.0, 1.0)
    t_prior = (4.0, 4.0)
    model = PoissonFactorModel(None, n=3, V=2)
    cfg = ChainConfig(mass=True, conc=False, shape=False)
    rng_f = RngStream(seed, 1)
    F = np.empty((forward_reps, 4))
    for k in range(forward_reps):
        st = prior_state(model, hp, t_prior, rng_f, draw_T=True)
        m = resample_counts(st, model, rng_f)
        F[k] = (
            st.W.kappa,
            sum(sum(c) for c in st.W.columns),
            int(m.y.sum()),
            st.hp.T,
        )
    rng_c = RngStream(seed, 2)
    state = prior_state(model, hp, t_prior, rng_c, draw_T=True)
    m = resample_counts(state, model, rng_c)
    G = np.empty((iters, 4))
    for k in range(iters):
        sweep_once(state, m, cfg)
        m = resample_counts(state, m, rng_c)
        G[k] = (
            state.W.kappa,
            sum(sum(c) for c in state.W.columns),
            int(m.y.sum()),
            state.hp.T,
        )
    metrics = {}
    ok = True
    for t, nm in enumerate(["kappa", "total_count", "data_total", "T"]):
        mc, sc = mean_with_se(G[:, t], correlated=True)
        mf, sf = mean_with_se(F[:, t])
        pull = (mc - mf) / math.hypot(sc, sf)
        metrics[nm] = {"forward": mf, "chain": mc, "pull": pull}
        ok = ok and abs(pull) <= 3.0
    metrics["iters"] = iters
    return SuiteResult("geweke", ok, time.time() - t0, metrics)


def suite_t_update(seed=0):
    """The mass conditional T^{alpha+kappa-1} e^{-(beta + c xi_n) T} normalizes
    to the gamma law the kernel draws from, settling its rate term."""
    t0 = time.time()
    worst = 0.0
    for (r, c, n, kappa, alpha, beta) in [
        (1.0, 1.0, 3, 2, 1.0, 1.0),
        (2.0, 0.5, 2, 0, 2.0, 3.0),
        (0.5, 2.0, 4, 5, 1.5, 0.7),
        (1.0, 1.0, 1, 1, 1.0, 1.0),
        (3.0, 4.0, 5, 8, 0.5, 2.0),
    ]:
        xi = c * (psi(c + n * r) - psi(c))
        rate = beta + xi
        shape = alpha + kappa
        val, err = quad(
            lambda t: t ** (shape - 1.0) * math.exp(-rate * t),
            0.0,
            np.inf,
            epsabs=1e-13,
            epsrel=1e-12,
        )
        norst = abs(val * rate ** shape / math.exp(gammaln(shape)) - 1.0)
        worst = max(worst, norst)
    return SuiteResult(
        "t-update", worst <= 1e-8, time.time() - t0, {"max_norm_err": worst}
    )


SUITES = {
    "digamma-identity": suite_digamma_identity,
    "normalization": suite_normalization,
    "rejection-sampler": suite_rejection_sampler,
    "simulator-pmf": suite_simulator_pmf,
    "two-construction": suite_two_construction,
    "exchangeability": suite_exchangeability,
    "projection": suite_projection,
    "expected-kappa": suite_expected_kappa,
    "prior-restoration": suite_prior_restoration,
    "geweke": suite_geweke,
    "t-update": suite_t_update,
}


def run_suites(names=None, seed=None):
    """Run the named suites (all by default); a seed offsets every suite's
    default stream so independent reruns are possible."""
    results = []
    for name in names or SUITES:
        if name not in SUITES:
            raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
        fn = SUITES[name]
        results.append(fn() if seed is None else fn(seed=seed))
    return results
