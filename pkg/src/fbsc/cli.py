"""Batch front door.

Commands (one manifest-driven run per process):

    fbsc p2p         --manifest m.json   point-to-point bound sweeps
    fbsc masc        --manifest m.json   Slepian-Wolf bounds + region traces
    fbsc cht         --manifest m.json   composite-HT evaluations
    fbsc rasc-design --manifest m.json   decoding-blocklength design
    fbsc rasc-sim    --manifest m.json   design + protocol simulation

Shared flags: --out DIR, --threads N, --seed U64, --unit bits|nats, --force.
Exit codes: 0 ok, 2 validation, 3 sizing, 4 numeric/infeasible.  Outputs are
deterministic for a fixed (manifest, seed): rerunning writes byte-identical
files.  Everything internal stays in nats; only the display column converts.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import csvio
from .errors import (FbscError, InfeasibleError, NumericError, SizingError,
                     ValidationError)
from .masc import (JointRcuEngine, MascHanEngine, MascHtEngine,
                   masc_rcu, pair_table)
from .p2p import P2PEngine, invert_rate, kv_expansion, rcu_asymp
from .probcore import JointPmf, fig4_pair_source, load_pmf, moments
from .rasc import design, rasc_rcu_bound, simulate
from .regions import third_order_region, trace_boundary
from .typetable import StatSpec, build_cached

LN2 = math.log(2.0)


# --------------------------------------------------------------------------
# manifest plumbing
# --------------------------------------------------------------------------

def _load_manifest(path) -> dict:
    if not os.path.exists(path):
        raise ValidationError(f"manifest {path} does not exist")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            man = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValidationError(f"manifest {path} is not valid JSON: {e}") from e
    if not isinstance(man, dict):
        raise ValidationError("manifest must be a JSON object")
    return man


def _resolve_source(spec, base_dir: str) -> JointPmf:
    if isinstance(spec, str):
        path = spec if os.path.isabs(spec) else os.path.join(base_dir, spec)
        if not os.path.exists(path):
            raise ValidationError(f"source file {path} does not exist")
        return load_pmf(path)
    if isinstance(spec, dict):
        fam = spec.get("family")
        if fam == "bernoulli":
            return JointPmf.bernoulli(float(spec["p"]))
        if fam == "fig4":
            return fig4_pair_source()
        if fam == "uniform":
            k = int(spec["size"])
            return JointPmf.from_masses((k,), [f"1/{k}"] * k)
        if "alphabet" in spec and "masses" in spec:
            return JointPmf.from_masses(tuple(spec["alphabet"]), spec["masses"])
        raise ValidationError(f"unrecognized source spec {spec!r}")
    raise ValidationError("source must be a path or an inline spec")


def _display(value_nats: float, unit: str) -> float:
    return value_nats / LN2 if unit == "bits" else value_nats


def _out_path(out_dir: str, name: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)


def _write_json(path, obj, force):
    if os.path.exists(path) and not force:
        raise ValidationError(f"refusing to overwrite {path} without --force")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _parallel_map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# --------------------------------------------------------------------------
# p2p command
# --------------------------------------------------------------------------

P2P_RATE_BOUNDS = ("exact", "dt", "rcu", "threshold", "han_conv")
P2P_EXPANSIONS = ("kv_achiev", "kv_conv", "rcu_asymp")


def _p2p_engine(pmf: JointPmf, n: int) -> P2PEngine:
    return P2PEngine(build_cached(pmf, n, [StatSpec("i", tuple(range(pmf.K)))]))


def _p2p_rate(engine: P2PEngine, bound: str, n: int, eps: float):
    """(rate_nats, gamma_or_nan).  Inverts the eps(M) evaluator."""
    ln_max = engine.log_total_count

    if bound == "exact":
        return engine.log_m_star(eps) / n, math.nan
    if bound == "dt":
        return invert_rate(engine.dt_bound, n, eps, ln_max), math.nan
    if bound == "rcu":
        return invert_rate(engine.rcu_bound, n, eps, ln_max), math.nan
    if bound == "threshold":
        rate = invert_rate(lambda lm: engine.threshold_bound(lm)[0], n, eps, ln_max)
        return rate, engine.threshold_bound(rate * n)[1]
    if bound == "han_conv":
        rate = invert_rate(lambda lm: engine.han_converse(lm)[0], n, eps, ln_max)
        return rate, engine.han_converse(rate * n)[1]
    raise ValidationError(f"unknown p2p bound {bound!r}")


def cmd_p2p(man: dict, out_dir: str, unit: str, seed: int, threads: int,
            force: bool, base_dir: str) -> list[str]:
    params = man.get("params", {})
    bounds = params.get("bounds")
    if not bounds:
        raise ValidationError("p2p manifest needs a nonempty params.bounds list")
    eps_list = params.get("eps", [0.1])
    if isinstance(eps_list, float):
        eps_list = [eps_list]
    written = []

    if "p_grid" in params:
        # parameter sweep (one n, Bernoulli family): reproduces the
        # rate-vs-dispersion picture
        n = int(params.get("n", 1000))
        p_grid = [float(p) for p in params["p_grid"]]
        for bound in bounds:
            rows = []
            for p in p_grid:
                pmf = JointPmf.bernoulli(p)
                mom = moments(pmf)
                v_nats = float(mom.V[0, 0])
                for eps in eps_list:
                    note = f"p={p!r};V_nats={v_nats!r}"
                    try:
                        if bound in P2P_EXPANSIONS:
                            rate, gamma = _expansion_rate(mom, bound, n, eps)
                        else:
                            rate, gamma = _p2p_rate(_p2p_engine(pmf, n), bound, n, eps)
                    except InfeasibleError:
                        continue
                    rows.append([bound, n, csvio.format_exp(rate * n), "rate",
                                 _display(rate, unit), rate, gamma,
                                 f"eps={eps!r};{note}"])
            path = _out_path(out_dir, f"p2p_{bound}.csv")
            csvio.write_csv(path, csvio.SCHEMA_P2P, rows,
                            source_hash="bernoulli-sweep", unit=unit,
                            seed=seed, force=force)
            written.append(path)
        return written

    pmf = _resolve_source(man.get("source"), base_dir)
    n_grid = [int(n) for n in params.get("n_grid", [])]
    if not n_grid:
        raise ValidationError("p2p manifest needs params.n_grid")
    mom = moments(pmf)

    engines = dict(zip(n_grid, _parallel_map(
        lambda n: _p2p_engine(pmf, n), n_grid, threads)))
    for bound in bounds:
        rows = []
        for n in n_grid:
            for eps in eps_list:
                try:
                    if bound in P2P_EXPANSIONS:
                        rate, gamma = _expansion_rate(mom, bound, n, eps)
                    else:
                        rate, gamma = _p2p_rate(engines[n], bound, n, eps)
                except InfeasibleError:
                    continue  # uncodable at this eps within M <= alphabet^n
                rows.append([bound, n, csvio.format_exp(rate * n), "rate",
                             _display(rate, unit), rate, gamma, f"eps={eps!r}"])
        path = _out_path(out_dir, f"p2p_{bound}.csv")
        csvio.write_csv(path, csvio.SCHEMA_P2P, rows,
                        source_hash=pmf.content_hash(), unit=unit,
                        seed=seed, force=force)
        written.append(path)
    return written


def _expansion_rate(mom, bound: str, n: int, eps: float):
    if bound == "kv_achiev":
        return kv_expansion(mom, n, eps, "achiev").rate, math.nan
    if bound == "kv_conv":
        return kv_expansion(mom, n, eps, "conv").rate, math.nan
    if bound == "rcu_asymp":
        return rcu_asymp(mom, n, eps).rate, math.nan
    raise ValidationError(f"unknown expansion {bound!r}")


# --------------------------------------------------------------------------
# masc command
# --------------------------------------------------------------------------

MASC_BOUNDS = ("p2p_exact", "p2p_han_conv", "masc_rcu", "masc_ht_conv",
               "masc_han_conv", "masc_han_achiev")


def _sym_invert(bound_fn, n, eps, ln_max):
    """Minimal symmetric sum rate: bound(e^{R n/2}, e^{R n/2}) <= eps."""
    return invert_rate(bound_fn, n, eps, ln_max)


def cmd_masc(man: dict, out_dir: str, unit: str, seed: int, threads: int,
             force: bool, base_dir: str) -> list[str]:
    params = man.get("params", {})
    pmf = _resolve_source(man.get("source"), base_dir)
    if pmf.K == 3 and not params.get("bounds"):
        # three encoders: no 2-D trace; emit the membership record only
        region = params.get("region")
        if not region:
            raise ValidationError("masc manifest asks for neither bounds nor region")
        mom = moments(pmf)
        record = {
            "kind": "third_order_membership_record",
            "K": 3,
            "subset_order": [[i + 1 for i in s] for s in mom.subsets],
            "H_nats": [float(h) for h in mom.H],
            "V_nats2": [[float(v) for v in row] for row in mom.V],
            "eps": float(region["eps"]),
            "n": [int(n) for n in region["n"]],
            "rule": "member iff Phi(V; sqrt(n)(Rbar - H + ln(n)/(2n))) >= 1-eps",
        }
        path = _out_path(out_dir, "region_membership_k3.json")
        _write_json(path, record, force)
        return [path]
    if pmf.K != 2:
        raise ValidationError("masc bounds need a two-source pmf")
    written = []
    bounds = params.get("bounds", [])
    eps_list = params.get("eps", [])
    n_grid = [int(n) for n in params.get("n_grid", [])]
    ht_max_n = int(params.get("ht_max_n", 200))
    src_hash = pmf.content_hash()

    if bounds:
        if not n_grid or not eps_list:
            raise ValidationError("masc bounds need params.n_grid and params.eps")
        per_bound_rows = {b: [] for b in bounds}

        def compute_for_n(n):
            out = []
            ln_max = n * math.log(float(np.prod(pmf.alphabet_sizes)))
            need_pair = any(b.startswith("masc_") for b in bounds)
            need_p2p = any(b.startswith("p2p_") for b in bounds)
            need_ht = "masc_ht_conv" in bounds and n <= ht_max_n
            tbl = pair_table(pmf, n) if need_pair else None
            eng_p = _p2p_engine(pmf, n) if (need_p2p or need_ht) else None
            eng_rcu = JointRcuEngine(pmf, n) if "masc_rcu" in bounds else None
            eng_han = (MascHanEngine(pmf, n, table=tbl)
                       if ("masc_han_conv" in bounds or "masc_han_achiev" in bounds
                           or need_ht)
                       else None)
            eng_ht = MascHtEngine(pmf, n, table=tbl) if need_ht else None
            for bound in bounds:
                for eps in eps_list:
                    gamma = math.nan
                    try:
                        rate = _masc_rate_for(bound, eng_p, eng_rcu, eng_han,
                                              eng_ht, n, eps, ln_max)
                    except InfeasibleError:
                        continue
                    if rate is None:
                        continue
                    out.append((bound, n, eps, rate, gamma))
            return out

        def _masc_rate_for(bound, eng_p, eng_rcu, eng_han, eng_ht, n, eps, ln_max):
            if bound == "p2p_exact":
                return eng_p.log_m_star(eps) / n
            if bound == "p2p_han_conv":
                return invert_rate(lambda lm: eng_p.han_converse(lm)[0],
                                   n, eps, ln_max)
            if bound == "masc_rcu":
                return _sym_invert(lambda lm: masc_rcu(eng_rcu, lm / 2, lm / 2),
                                   n, eps, ln_max)
            if bound == "masc_han_conv":
                return _sym_invert(lambda lm: eng_han.converse(lm / 2, lm / 2)[0],
                                   n, eps, ln_max)
            if bound == "masc_han_achiev":
                return _sym_invert(
                    lambda lm: eng_han.achievability(lm / 2, lm / 2)[0],
                    n, eps, ln_max)
            if bound == "masc_ht_conv":
                if eng_ht is None:
                    return None
                # warm converse-side anchors keep the certificate bisection
                # short and pin the published orderings
                anchor = eng_p.log_m_star(eps)
                try:
                    r_han = _sym_invert(
                        lambda lm: eng_han.converse(lm / 2, lm / 2)[0],
                        n, eps, ln_max) * n
                    anchor = max(anchor, r_han)
                except InfeasibleError:
                    pass
                return eng_ht.invert_symmetric(eps, ln_max, log_m_lo=anchor)
            raise ValidationError(f"unknown masc bound {bound!r}")

        results = _parallel_map(compute_for_n, n_grid, threads)
        for chunk in results:
            for bound, n, eps, rate, gamma in chunk:
                half = csvio.format_exp(rate * n / 2.0)
                per_bound_rows[bound].append(
                    [bound, n, half, half, "rate", _display(rate, unit), rate,
                     gamma, f"eps={eps!r};sum_rate"])
        for bound in bounds:
            path = _out_path(out_dir, f"masc_{bound}.csv")
            csvio.write_csv(path, csvio.SCHEMA_MASC, per_bound_rows[bound],
                            source_hash=src_hash, unit=unit, seed=seed,
                            force=force)
            written.append(path)

    region = params.get("region")
    if region:
        eps = float(region["eps"])
        mom = moments(pmf)
        for n in region["n"]:
            n = int(n)
            reg = third_order_region(mom, n, eps, seed=seed)
            tr = trace_boundary(reg, n_points=int(region.get("r1_points", 400)),
                                region_id=f"third_order_n{n}")
            rows = []
            for r1, r2, ub in zip(tr.R1, tr.R2, tr.unbounded):
                if ub or math.isnan(r2):
                    continue
                rows.append([tr.region_id, n, eps, float(r1), float(r2)])
            path = _out_path(out_dir, f"region_n{n}.csv")
            csvio.write_csv(path, csvio.SCHEMA_REGION, rows,
                            source_hash=src_hash, unit="nats", seed=seed,
                            force=force)
            written.append(path)
    if not bounds and not region:
        raise ValidationError("masc manifest asks for neither bounds nor region")
    return written


# --------------------------------------------------------------------------
# cht command
# --------------------------------------------------------------------------

def cmd_cht(man: dict, out_dir: str, unit: str, seed: int, threads: int,
            force: bool, base_dir: str) -> list[str]:
    from .cht import MeasureFamily, eps_star_variational, lr_threshold_test
    params = man.get("params", {})
    try:
        fam = MeasureFamily(
            tuple(__import__("fractions").Fraction(str(x)) for x in params["P"]),
            tuple(tuple(__import__("fractions").Fraction(str(x)) for x in q)
                  for q in params["Qs"]),
        )
    except KeyError as e:
        raise ValidationError(f"cht manifest missing {e}") from e
    n = int(params.get("n", 1))
    betas = [float(b) for b in params["betas"]]
    res = eps_star_variational(fam, betas, n=n, rng_seed=seed)
    rows = []
    for j, lg in enumerate(res.log_gammas):
        rows.append(["cht_variational", n, csvio.format_exp(float(lg)), "eps",
                     res.value, res.value, float(lg),
                     f"beta={betas[j]!r};raw={res.raw_value!r}"])
    grid = params.get("gamma_grid")
    if grid:
        for g in grid:
            lg = [math.log(float(g))] * fam.k
            alpha, bvec = lr_threshold_test(fam, n, lg)
            rows.append(["cht_lr_threshold", n, csvio.format_exp(lg[0]), "eps",
                         1.0 - alpha, 1.0 - alpha, float(lg[0]),
                         "betas=" + "|".join(repr(float(b)) for b in bvec)])
    path = _out_path(out_dir, "cht_trace.csv")
    csvio.write_csv(path, csvio.SCHEMA_P2P, rows, source_hash="cht-family",
                    unit=unit, seed=seed, force=force)
    return [path]


# --------------------------------------------------------------------------
# rasc commands
# --------------------------------------------------------------------------

def _rasc_common(man, base_dir):
    params = man.get("params", {})
    pmf = _resolve_source(man.get("source"), base_dir)
    n = int(params["n"])
    Q = [int(q) for q in params["Q"]]
    eps_t = params.get("eps_targets", 0.1)
    if isinstance(eps_t, dict):
        eps_t = {tuple(int(i) - 1 for i in k.split(",")): float(v)
                 for k, v in eps_t.items()}
    lam = params.get("lambda", "default")
    refine = params.get("refine", "rcu")
    return params, pmf, n, Q, eps_t, lam, refine


def cmd_rasc_design(man, out_dir, unit, seed, threads, force, base_dir):
    params, pmf, n, Q, eps_t, lam, refine = _rasc_common(man, base_dir)
    d = design(pmf, n, Q, eps_t, lam=lam, refine=refine)
    payload = {"design": d.to_json_dict()}
    if params.get("bounds", True):
        payload["rcu_bounds"] = {}
        for T in sorted(d.eps_targets):
            r = rasc_rcu_bound(pmf, d, T, seed=seed)
            payload["rcu_bounds"][",".join(str(i + 1) for i in T)] = {
                "value": r["value"], "exact": r["exact"], "se": r["se"]}
    path = _out_path(out_dir, "rasc_design.json")
    _write_json(path, payload, force)
    return [path]


def cmd_rasc_sim(man, out_dir, unit, seed, threads, force, base_dir):
    params, pmf, n, Q, eps_t, lam, refine = _rasc_common(man, base_dir)
    d = design(pmf, n, Q, eps_t, lam=lam, refine=refine)
    payload = {"design": d.to_json_dict()}
    if params.get("bounds", True):
        payload["rcu_bounds"] = {}
        for T in sorted(d.eps_targets):
            r = rasc_rcu_bound(pmf, d, T, seed=seed)
            payload["rcu_bounds"][",".join(str(i + 1) for i in T)] = {
                "value": r["value"], "exact": r["exact"], "se": r["se"]}
    written = []
    trials = params.get("trials")
    if trials:
        mode = params.get("mode", "distinct-encoders")
        perm_warn = []
        if mode == "identical-encoders" and not _permutation_invariant(pmf):
            perm_warn.append(
                "identical-encoders requested on a pmf that is not "
                "permutation-invariant; proceeding")
        active = params.get("active_sets")
        if active is not None:
            active = [tuple(int(i) - 1 for i in T) for T in active]
        probs = params.get("activity_probabilities")
        rep = simulate(pmf, d, int(trials), seed=seed, mode=mode,
                       active_sets=active, activity_probabilities=probs)
        rep.warnings.extend(perm_warn)
        payload["simulation"] = rep.to_json_dict()
    path = _out_path(out_dir, "rasc_report.json")
    _write_json(path, payload, force)
    written.append(path)
    return written


def _permutation_invariant(pmf: JointPmf) -> bool:
    import itertools
    if len(set(pmf.alphabet_sizes)) != 1:
        return False
    grid = pmf.grid
    for perm in itertools.permutations(range(pmf.K)):
        if not np.allclose(grid, np.transpose(grid, perm), atol=1e-12):
            return False
    return True


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

COMMANDS = {
    "p2p": cmd_p2p,
    "masc": cmd_masc,
    "cht": cmd_cht,
    "rasc-design": cmd_rasc_design,
    "rasc-sim": cmd_rasc_sim,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fbsc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--manifest", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--unit", choices=["bits", "nats"], default=None)
        p.add_argument("--force", action="store_true")
    args = parser.parse_args(argv)
    try:
        man = _load_manifest(args.manifest)
        cmd = man.get("command")
        if cmd is not None and cmd != args.command:
            raise ValidationError(
                f"manifest command {cmd!r} does not match {args.command!r}")
        base_dir = os.path.dirname(os.path.abspath(args.manifest))
        out_dir = args.out or man.get("out_dir") or "."
        if not os.path.isabs(out_dir):
            out_dir = os.path.join(base_dir, out_dir)
        unit = args.unit or man.get("unit", "bits")
        if unit not in ("bits", "nats"):
            raise ValidationError(f"unknown unit {unit!r}")
        seed = args.seed if args.seed is not None else int(man.get("seed", 0))
        written = COMMANDS[args.command](man, out_dir, unit, seed,
                                         args.threads, args.force, base_dir)
        print(json.dumps({"status": "ok", "outputs": sorted(written)},
                         sort_keys=True))
        return 0
    except ValidationError as e:
        _emit_error(e, 2)
        return 2
    except SizingError as e:
        _emit_error(e, 3)
        return 3
    except (NumericError, InfeasibleError, FbscError) as e:
        _emit_error(e, 4)
        return 4


def _emit_error(e: Exception, code: int) -> None:
    sys.stderr.write(json.dumps({
        "error": type(e).__name__, "message": str(e), "exit_code": code,
    }, sort_keys=True) + "\n")


if __name__ == "__main__":
    sys.exit(main())
