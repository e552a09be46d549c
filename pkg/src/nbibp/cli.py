"""Command-line surface.

Subcommands:

* simulate: replicate draws of feature arrays (sequential buffet by default,
  the truncated weight-measure oracle with --construction truncated, or the
  one-shot mass construction with --construction finitary), one JSON record
  per line plus a trailing summary record.
* pmf: log p.m.f. of serialized arrays or structures read from --in.
* sample: i.i.d. draws from the digamma, beta negative binomial, or negative
  binomial count distributions, one integer per line plus a summary.
* infer: MCMC on an n-by-V count matrix (--in, whitespace or JSON), or on
  synthetic data generated forward under the prior (--synthetic), writing one
  chain record per emitted state; --geweke instead runs the forward vs
  successive-conditional check and reports per-statistic verdicts.
* validate: named verification suites; exit status 1 iff any suite fails.

Every stochastic command requires an explicit --seed and is a pure function
of its flags: rerunning with the same flags produces byte-identical output.
Replicates fan out over per-replicate substreams keyed (seed, replicate), so
outputs are independent of any scheduling.
"""

import argparse
import json
import math
import sys

import numpy as np

from .distributions import (
    BnbParams,
    DigammaParams,
    NbParams,
    bnb_sample,
    digamma_sample,
    nb_sample,
)
from .generative import bnbp_sample_finitary, nbibp_simulate, truncated_oracle_simulate
from .inference import (
    ChainConfig,
    HyperPrior,
    PoissonFactorModel,
    chain_record,
    prior_state,
    run_chain,
)
from .numerics import RngStream
from .structures import (
    Hyperparams,
    array_from_json,
    array_to_json,
    log_pmf_array,
    log_pmf_struct,
    struct_from_json,
)
from .validation import SUITES, run_suites, suite_geweke

__all__ = ["main"]


def _dump(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class _Out:
    """Line sink for --out, stdout when no path is given."""

    def __init__(self, path):
        self.path = path
        self.fh = None

    def __enter__(self):
        self.fh = open(self.path, "w") if self.path else sys.stdout
        return self

    def __exit__(self, *exc):
        if self.path and self.fh is not None:
            self.fh.close()
        return False

    def line(self, text):
        self.fh.write(text + "\n")


def _hyper(args):
    return Hyperparams(args.r, args.c, args.mass_T)


def _parse_prior(text, fallback_value):
    """'gamma:a,b' | 'lognormal:mu,sigma' | 'point' -> HyperPrior."""
    if text == "point":
        return HyperPrior("point", fallback_value)
    try:
        kind, rest = text.split(":", 1)
        a, b = (float(x) for x in rest.split(","))
    except ValueError:
        raise SystemExit(
            f"bad prior spec {text!r}: expected kind:a,b with kind gamma|lognormal, or point"
        )
    return HyperPrior(kind, a, b)


def cmd_simulate(args):
    if args.reps < 0:
        raise SystemExit("--reps must be >= 0")
    if args.construction == "truncated" and not 0.0 < args.epsilon < 1.0:
        raise SystemExit("--epsilon must lie in (0, 1)")
    if args.construction != "finitary" and args.n < 1:
        raise SystemExit("--n must be >= 1")
    hp = _hyper(args)
    with _Out(args.out) as out:
        kappas = []
        row_feats = []
        pos_entries = 0
        pos_total = 0
        for k in range(args.reps):
            rng = RngStream(args.seed, k)
            if args.construction == "sequential":
                arr = nbibp_simulate(args.n, hp, rng)
            elif args.construction == "truncated":
                arr = truncated_oracle_simulate(args.n, hp, args.epsilon, rng)
            else:
                fixed, diffuse = bnbp_sample_finitary(hp, rng)
                out.line(_dump({"kind": "masses", "fixed": fixed, "diffuse": diffuse}))
                kappas.append(len(diffuse))
                continue
            out.line(array_to_json(arr))
            kappas.append(arr.kappa)
            per_row = [sum(1 for col in arr.columns if col[i] > 0) for i in range(arr.n)]
            row_feats.append(sum(per_row) / arr.n)
            for col in arr.columns:
                for w in col:
                    if w > 0:
                        pos_entries += 1
                        pos_total += w
        summary = {
            "kind": "summary",
            "reps": args.reps,
            "mean_kappa": (sum(kappas) / len(kappas)) if kappas else None,
            "mean_row_features": (sum(row_feats) / len(row_feats)) if row_feats else None,
            "mean_multiplicity": (pos_total / pos_entries) if pos_entries else None,
        }
        out.line(_dump(summary))
    return 0


def cmd_pmf(args):
    hp = _hyper(args)
    failures = 0
    with open(args.in_path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    with _Out(args.out) as out:
        for idx, ln in enumerate(lines):
            try:
                kind = json.loads(ln).get("kind")
                if kind == "array":
                    val = log_pmf_array(array_from_json(ln), hp)
                elif kind == "struct":
                    val = log_pmf_struct(struct_from_json(ln), hp)
                else:
                    raise ValueError(f"record kind must be array or struct, got {kind!r}")
            except Exception as exc:
                print(f"record {idx}: {exc}", file=sys.stderr)
                failures += 1
                continue
            out.line(_dump({"index": idx, "log_pmf": val}))
    return 1 if failures else 0


def cmd_sample(args):
    if args.reps < 0:
        raise SystemExit("--reps must be >= 0")
    if args.dist == "digamma":
        params = DigammaParams(args.r, args.theta)
        draw = lambda rng: digamma_sample(params, rng)
    elif args.dist == "bnb":
        params = BnbParams(args.r, args.alpha, args.beta)
        draw = lambda rng: bnb_sample(params, rng)
    else:
        params = NbParams(args.r, args.p)
        draw = lambda rng: nb_sample(params, rng)
    with _Out(args.out) as out:
        total = 0
        for k in range(args.reps):
            z = draw(RngStream(args.seed, k))
            total += z
            out.line(str(z))
        out.line(
            _dump(
                {
                    "kind": "summary",
                    "dist": args.dist,
                    "reps": args.reps,
                    "mean": (total / args.reps) if args.reps else None,
                }
            )
        )
    return 0


def _load_counts(path):
    with open(path) as fh:
        text = fh.read()
    try:
        obj = json.loads(text)
        y = obj["y"] if isinstance(obj, dict) else obj
        return np.asarray(y, dtype=np.int64)
    except (json.JSONDecodeError, KeyError, TypeError):
        pass
    rows = [
        [int(tok) for tok in ln.split()] for ln in text.splitlines() if ln.strip()
    ]
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise SystemExit(f"{path}: not a rectangular count matrix")
    return np.asarray(rows, dtype=np.int64)


def cmd_infer(args):
    if args.geweke:
        res = suite_geweke(seed=args.seed)
        code = 0
        for name in ("kappa", "total_count", "data_total", "T"):
            m = res.metrics[name]
            verdict = "pass" if abs(m["pull"]) <= 3.0 else "FAIL"
            print(f"{name}: forward {m['forward']:.4f} chain {m['chain']:.4f} "
                  f"pull {m['pull']:+.2f} {verdict}")
            if verdict == "FAIL":
                code = 1
        return code
    if args.sweeps < 0:
        raise SystemExit("--sweeps must be >= 0")
    if args.thin < 1:
        raise SystemExit("--thin must be >= 1")
    if (args.in_path is None) == (not args.synthetic):
        raise SystemExit("provide exactly one of --in or --synthetic")
    hp = _hyper(args)
    t_prior = (args.t_alpha, args.t_beta)
    rng = RngStream(args.seed, 0)
    truth = None
    if args.synthetic:
        if args.n < 1 or args.V < 1:
            raise SystemExit("synthetic mode needs --n and --V >= 1")
        template = PoissonFactorModel(None, args.a_theta, args.b_theta, n=args.n, V=args.V)
        gen = prior_state(template, hp, t_prior, rng)
        rates = (
            gen.W.to_matrix().astype(float) @ gen.Theta
            if gen.W.kappa
            else np.zeros((args.n, args.V))
        )
        y = rng.poisson_array(rates)
        truth = {
            "kind": "truth",
            "W": [list(col) for col in gen.W.columns],
            "Theta": [[float(x) for x in row] for row in gen.Theta],
            "y": [[int(v) for v in row] for row in y],
        }
    else:
        y = _load_counts(args.in_path)
    model = PoissonFactorModel(y, args.a_theta, args.b_theta)
    c_prior = _parse_prior(args.c_prior, hp.c)
    r_prior = _parse_prior(args.r_prior, hp.r)
    config = ChainConfig(
        conc=c_prior.kind != "point",
        shape=r_prior.kind != "point",
        thin=args.thin,
        c_prior=c_prior,
        r_prior=r_prior,
    )
    init = prior_state(model, hp, t_prior, rng)
    with _Out(args.out) as out:
        if truth is not None:
            out.line(_dump(truth))
        sweep = 0
        for state in run_chain(model, init, args.sweeps, rng, config):
            out.line(_dump(chain_record(state, sweep, model, full=args.full)))
            sweep += config.thin
    return 0


def cmd_validate(args):
    names = args.suite or sorted(SUITES)
    if names == ["none"]:
        print(_dump({"kind": "report", "suites": [], "passed": True}))
        return 0
    for name in names:
        if name not in SUITES:
            raise SystemExit(f"unknown suite {name!r}; choose from {sorted(SUITES)} or none")
    results = run_suites(names, seed=args.seed)
    for res in results:
        print(_dump(res.to_json()))
    ok = all(res.passed for res in results)
    print(_dump({"kind": "report", "passed": ok}))
    return 0 if ok else 1


def _add_hyper_flags(p):
    p.add_argument("--r", type=float, default=1.0, help="count shape r > 0")
    p.add_argument("--c", type=float, default=1.0, help="concentration c > 0")
    p.add_argument("--mass-T", type=float, default=1.0, dest="mass_T", help="base mass T > 0")


def main(argv=None):
    top = argparse.ArgumentParser(
        prog="nbibp",
        description="count-valued latent feature processes: simulate, evaluate, infer, verify",
    )
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw replicate feature arrays")
    _add_hyper_flags(p)
    p.add_argument("--n", type=int, default=1, help="rows per replicate")
    p.add_argument("--reps", type=int, default=1, help="number of replicates")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument(
        "--construction",
        choices=("sequential", "truncated", "finitary"),
        default="sequential",
    )
    p.add_argument("--epsilon", type=float, default=1e-4, help="weight cutoff (truncated)")
    p.add_argument("--out", default=None, help="output path (stdout if absent)")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("pmf", help="log p.m.f. of serialized arrays/structures")
    _add_hyper_flags(p)
    p.add_argument("--in", dest="in_path", required=True, help="input records, one per line")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_pmf)

    p = sub.add_parser("sample", help="i.i.d. draws from one count distribution")
    p.add_argument("--dist", choices=("digamma", "bnb", "nb"), default="digamma")
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--theta", type=float, default=1.0, help="digamma concentration")
    p.add_argument("--alpha", type=float, default=1.0, help="bnb first shape")
    p.add_argument("--beta", type=float, default=1.0, help="bnb second shape")
    p.add_argument("--p", type=float, default=0.5, help="nb success parameter in (0,1)")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("infer", help="MCMC on count data")
    _add_hyper_flags(p)
    p.add_argument("--in", dest="in_path", default=None, help="n-by-V count matrix")
    p.add_argument("--synthetic", action="store_true", help="generate data forward first")
    p.add_argument("--n", type=int, default=3, help="rows (synthetic mode)")
    p.add_argument("--V", type=int, default=2, help="columns (synthetic mode)")
    p.add_argument("--a-theta", type=float, default=1.0, dest="a_theta")
    p.add_argument("--b-theta", type=float, default=1.0, dest="b_theta")
    p.add_argument("--t-alpha", type=float, default=1.0, dest="t_alpha")
    p.add_argument("--t-beta", type=float, default=1.0, dest="t_beta")
    p.add_argument("--c-prior", default="gamma:1,1", dest="c_prior")
    p.add_argument("--r-prior", default="gamma:1,1", dest="r_prior")
    p.add_argument("--sweeps", type=int, default=100)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--full", action="store_true", help="include W and Theta per record")
    p.add_argument("--geweke", action="store_true", help="run the sampler correctness check")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("validate", help="run verification suites")
    p.add_argument(
        "--suite",
        action="append",
        default=None,
        help="suite name (repeatable; default all; 'none' for an empty report)",
    )
    p.add_argument("--seed", type=int, default=None, help="override per-suite default seeds")
    p.set_defaults(fn=cmd_validate)

    args = top.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
