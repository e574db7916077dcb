"""Command-line front end.

Exit codes: 0 success, 1 computational failure (horizon exceeded, oracle
failure, unwritable output), 2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from .config import ConfigError, ModelConfig, load_model
from .errors import ScaleEvolveError
from .evolution_core import oracle_propagate
from .logistic import (
    HierarchyOperator,
    check_G,
    continuum_bounds,
    evolve_hierarchy,
    flatten_operator,
    random_hierarchy,
)
from .ode_system import build_horizon, solve_system, truncation_study, validate_conditions
from .ovcyannikov import (
    EvolveOptions,
    EvolutionResult,
    backward_evolve,
    dual_evolve,
    forward_evolve,
    stability_compare,
    WConfig,
)
from .reporting import emit_report
from .scale_space import DualVector, ScaleVector, dual_pairing


def _apply_thread_cap() -> None:
    cap = os.environ.get("SCALE_EVOLVE_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, help="model TOML file")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--alpha-prime", type=float, default=0.25)
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--panels", type=int, default=64)
    p.add_argument("--rho-max", type=float, default=0.95)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data", default=None, help="initial vector JSON file")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="scale-evolve",
        description="Perturbation-series solver for evolution equations "
        "in scales of weighted sequence spaces",
    )
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    for name in ("horizon", "solve", "backward", "dual", "truncation-study"):
        sp = sub.add_parser(name)
        _add_common(sp)
        if name == "truncation-study":
            sp.add_argument("--n-list", default="16,32,64,128")

    sp = sub.add_parser("stability")
    _add_common(sp)
    sp.add_argument("--model2", required=True, help="comparison model TOML file")

    lg = sub.add_parser("logistic")
    lsub = lg.add_subparsers(dest="logistic_command", required=True)
    for name in ("check-g", "bounds", "evolve"):
        sp = lsub.add_parser(name)
        _add_common(sp)

    sp = sub.add_parser("verify")
    sp.add_argument("--suite", default="all")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)
    sp.add_argument("--format", choices=("json",), default="json")
    return ap


def _opts(args) -> EvolveOptions:
    return EvolveOptions(tol=args.tol, panels=args.panels, rho_max=args.rho_max)


def _load_vector(args, dim: int) -> ScaleVector:
    if args.data:
        with open(args.data) as fh:
            return ScaleVector.from_json(fh.read())
    e0 = np.zeros(dim)
    e0[0] = 1.0
    return ScaleVector(e0)


def _certificate(horizon, alpha: float, alpha_prime: float) -> dict:
    return {
        "K": horizon.K,
        "alpha_star": horizon.alpha_star,
        "M_knots": [list(k) for k in horizon.M.knots],
        "M_safety": horizon.M.safety,
        "T": horizon.T(alpha_prime, alpha),
    }


def _result_report(res: EvolutionResult, horizon, args) -> dict:
    return {
        "value": list(map(float, res.value.entries)),
        "budget": res.to_dict(),
        "certificate": _certificate(horizon, args.alpha, args.alpha_prime),
        "seed": args.seed,
        "options": {"tol": args.tol, "panels": args.panels,
                    "rho_max": args.rho_max},
    }


def _ode_horizon(cfg: ModelConfig, args):
    grid = cfg.alpha_grid or tuple(
        np.linspace(cfg.ode.alpha_star + 0.1, args.alpha + 0.5, 12)
    )
    return build_horizon(cfg.ode, grid)


def _cmd_horizon(cfg: ModelConfig, args) -> dict:
    if cfg.kind == "ode":
        horizon = _ode_horizon(cfg, args)
    else:
        p = cfg.logistic
        B1 = HierarchyOperator(p, "Lhat1", b_shift=p.b)
        B_flat, _ = flatten_operator(B1, p.L, cfg.n_max)
        from .logistic import _hierarchy_horizon

        horizon = _hierarchy_horizon(p, B_flat, args.alpha, args.alpha_prime, K=1.0)
    return {
        "certificate": _certificate(horizon, args.alpha, args.alpha_prime),
        "seed": args.seed,
    }


def _cmd_solve(cfg: ModelConfig, args, backward: bool) -> dict:
    if cfg.kind != "ode":
        raise ConfigError("solve/backward expect an ode model")
    m = cfg.ode
    horizon = _ode_horizon(cfg, args)
    x = _load_vector(args, m.ambient_dim())
    if backward:
        from .ode_system import contraction_propagator, _truncate_matrix
        from .scale_operator import OperatorFamily

        V = contraction_propagator(m)
        fam = OperatorFamily.constant(_truncate_matrix(m.c, m.ambient_dim()))
        res = backward_evolve(
            V, fam, x, args.s, args.t, args.alpha, args.alpha_prime,
            _opts(args), horizon,
        )
    else:
        res = solve_system(
            m, x, args.alpha, args.alpha_prime, args.t - args.s,
            _opts(args), horizon,
        )
    return _result_report(res, horizon, args)


def _cmd_dual(cfg: ModelConfig, args) -> dict:
    if cfg.kind != "ode":
        raise ConfigError("dual expects an ode model")
    m = cfg.ode
    horizon = _ode_horizon(cfg, args)
    from .ode_system import contraction_propagator, _truncate_matrix
    from .scale_operator import OperatorFamily

    V = contraction_propagator(m)
    fam = OperatorFamily.constant(_truncate_matrix(m.c, m.ambient_dim()))
    if args.data:
        with open(args.data) as fh:
            import json

            l = DualVector(np.asarray(json.load(fh), dtype=np.float64))
    else:
        e0 = np.zeros(m.ambient_dim())
        e0[0] = 1.0
        l = DualVector(e0)
    cfgw = WConfig(V=V, B=fam, horizon=horizon)
    res = dual_evolve(cfgw, l, args.s, args.t, args.alpha, args.alpha_prime,
                      _opts(args))
    return _result_report(res, horizon, args)


def _cmd_stability(cfg: ModelConfig, args) -> dict:
    cfg2 = load_model(args.model2)
    if cfg.kind != "ode" or cfg2.kind != "ode":
        raise ConfigError("stability expects two ode models")
    from .ode_system import contraction_propagator, _truncate_matrix
    from .scale_operator import OperatorFamily

    systems = []
    horizon = None
    for c in (cfg, cfg2):
        m = c.ode
        V = contraction_propagator(m)
        fam = OperatorFamily.constant(_truncate_matrix(m.c, m.ambient_dim()))
        hor = _ode_horizon(c, args)
        horizon = horizon or hor
        systems.append(WConfig(V=V, B=fam, horizon=hor))
    ap_, a = args.alpha_prime, args.alpha
    alphas = (ap_, ap_ + (a - ap_) / 3.0, ap_ + 2.0 * (a - ap_) / 3.0, a)
    x = _load_vector(args, cfg.ode.ambient_dim())
    rep = stability_compare(
        systems[0], systems[1], args.s, args.t, alphas, x, _opts(args)
    )
    return {
        "measured": rep.measured,
        "bound": rep.bound,
        "budget": rep.budget,
        "certificate": _certificate(horizon, args.alpha, args.alpha_prime),
        "seed": args.seed,
    }


def _cmd_truncation(cfg: ModelConfig, args) -> dict:
    if cfg.kind != "ode":
        raise ConfigError("truncation-study expects an ode model")
    n_list = [int(v) for v in args.n_list.split(",")]
    rep = truncation_study(
        cfg.ode, _load_vector(args, cfg.ode.ambient_dim()),
        args.alpha, args.alpha_prime, args.t, n_list,
    )
    doc = rep.to_dict()
    doc["seed"] = args.seed
    if args.format == "csv":
        return {
            "rows": [
                {"N": n, "e_N": e} for n, e in zip(rep.N_list, rep.errors)
            ],
            "columns": ["N", "e_N"],
        }
    return doc


def _cmd_logistic(cfg: ModelConfig, args) -> dict:
    if cfg.kind != "logistic":
        raise ConfigError("logistic commands expect a logistic model")
    p = cfg.logistic
    if args.logistic_command == "check-g":
        rep = check_G(p, seed=args.seed)
        return rep.to_dict()
    if args.logistic_command == "bounds":
        b0, b1 = continuum_bounds(p, args.alpha, args.alpha_prime)
        return {
            "bound_L0": b0,
            "bound_L1": b1,
            "alpha": args.alpha,
            "alpha_prime": args.alpha_prime,
            "seed": args.seed,
        }
    # evolve
    rng = np.random.default_rng(args.seed)
    H0 = random_hierarchy(rng, p.L, cfg.n_max, "quasiobservable", h=p.h)
    out, res = evolve_hierarchy(
        p, H0, args.t - args.s, args.alpha, args.alpha_prime, _opts(args)
    )
    return {
        "components": [c.reshape(-1).tolist() for c in out.comps],
        "budget": res.to_dict(),
        "seed": args.seed,
    }


# ---------------------------------------------------------------------------
# verify suite


def _verify_checks(seed: int) -> list[dict]:
    from . import fixtures
    from .ovcyannikov import (
        HorizonTable,
        evolution_property_residual,
        existence_time,
    )
    from .scale_operator import MajorantM

    checks = []

    def record(name: str, value: float, threshold: float, larger_ok=False):
        passed = value >= threshold if larger_ok else value <= threshold
        checks.append(
            {"name": name, "value": float(value), "threshold": float(threshold),
             "passed": bool(passed)}
        )

    # horizon formula: alpha - alpha' = 2e, K = 1, M = 1 gives T = 1
    M = MajorantM(alpha_star=0.0, knots=((1.0, 1.0), (3.0, 1.0)), safety=1.0)
    data = HorizonTable(alpha_star=0.0, K=1.0, M=M)
    record(
        "horizon-formula",
        abs(existence_time(3.0 - 2.0 * math.e, 3.0, data) - 1.0),
        1e-14,
    )

    V, fam, horizon, k, alpha, ap_ = fixtures.random_band_system(seed, N=48)
    T = horizon.T(ap_, alpha)
    t = 0.5 * T
    res = forward_evolve(V, fam, k, 0.0, t, alpha, ap_, EvolveOptions(), horizon)
    N = k.support_len
    full = V.generator_dense(N) + fam.dense_at(0.0, N, N)
    from .scale_operator import OperatorMatrix

    oracle = oracle_propagate(OperatorMatrix.from_dense(full), N, 0.0, t, k,
                              tol=1e-12)
    w = np.exp(ap_ * np.arange(N))
    rel = float(
        np.sum(np.abs(res.value.entries - oracle.entries) * w)
        / np.sum(np.abs(oracle.entries) * w)
    )
    record("forward-oracle", rel, 1e-6)

    resb = backward_evolve(V, fam, k, 0.0, t, alpha, ap_, EvolveOptions(), horizon)
    relb = float(
        np.sum(np.abs(resb.value.entries - oracle.entries) * w)
        / np.sum(np.abs(oracle.entries) * w)
    )
    record("backward-oracle", relb, 1e-6)

    # dual pairing identity
    rng = np.random.default_rng(seed + 1)
    l = DualVector(rng.normal(size=N))
    cfgw = WConfig(V=V, B=fam, horizon=horizon)
    resd = dual_evolve(cfgw, l, 0.0, t, alpha, ap_)
    lhs = dual_pairing(res.value, l)
    rhs = dual_pairing(k, resd.value)
    record("dual-pairing", abs(lhs - rhs) / (1.0 + abs(lhs)), 1e-10)

    # evolution property
    chk = evolution_property_residual(
        cfgw, 0.0, 0.5 * t, t, (ap_, 0.5 * (ap_ + alpha), alpha), k
    )
    record("evolution-property", chk.residual, 3.0 * chk.budget)

    # truncation invariance
    from .fixtures import invariant_block_model
    from .ode_system import truncation_study as study

    m_inv, x_inv, N0 = invariant_block_model(N=48, N0=12)
    rep = study(m_inv, x_inv, 1.0, 0.25, 0.5, [16, 32, 48], steps=96)
    record("truncation-invariance", max(rep.errors[:2]), 0.0)

    # logistic duality and mortality
    from .fixtures import random_logistic_params
    from .logistic import (
        build_discrete_operators,
        hierarchy_pairing,
        LogisticParams,
    )

    p = random_logistic_params(seed, L=8)
    rngh = np.random.default_rng(seed + 2)
    G = random_hierarchy(rngh, 8, 3, "quasiobservable", top_level=2, h=p.h)
    kk = random_hierarchy(rngh, 8, 3, "correlation", top_level=2, h=p.h)
    L0, L1, D0, D1 = build_discrete_operators(p, 3)
    worst = 0.0
    for lhat, ldel in ((L0, D0), (L1, D1)):
        LG, _ = lhat.apply(G)
        Dk, _ = ldel.apply(kk)
        lhs = hierarchy_pairing(LG, kk)
        rhs = hierarchy_pairing(G, Dk)
        worst = max(worst, abs(lhs - rhs) / (1.0 + abs(lhs)))
    record("logistic-duality", worst, 1e-12)

    pm = LogisticParams(
        m=0.8, a_plus=np.zeros(8), a_minus=np.zeros(8), theta=1.0, b=0.0, h=p.h
    )
    H0 = random_hierarchy(rngh, 8, 2, "quasiobservable", h=p.h)
    out, _ = evolve_hierarchy(pm, H0, 0.6, 1.5, 0.5)
    err = max(
        float(np.max(np.abs(out.comps[n] - math.exp(-0.8 * n * 0.6) * H0.comps[n])))
        if out.comps[n].size else 0.0
        for n in range(3)
    )
    record("logistic-mortality", err, 1e-12)
    return checks


def _cmd_verify(args) -> tuple[dict, int]:
    checks = _verify_checks(args.seed)
    all_passed = all(c["passed"] for c in checks)
    for c in checks:
        status = "PASS" if c["passed"] else "FAIL"
        print(f"{status} {c['name']}: {c['value']:.3e} "
              f"(threshold {c['threshold']:.3e})", file=sys.stderr)
    report = {"checks": checks, "all_passed": all_passed, "seed": args.seed,
              "suite": args.suite}
    return report, 0 if all_passed else 1


def main(argv=None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, 0 on --help/--version
        return int(exc.code or 0)
    try:
        if args.command == "verify":
            report, code = _cmd_verify(args)
            emit_report(report, args.format, args.out)
            return code
        cfg = load_model(args.model)
        if args.command == "horizon":
            report = _cmd_horizon(cfg, args)
        elif args.command in ("solve", "backward"):
            report = _cmd_solve(cfg, args, backward=args.command == "backward")
        elif args.command == "dual":
            report = _cmd_dual(cfg, args)
        elif args.command == "stability":
            report = _cmd_stability(cfg, args)
        elif args.command == "truncation-study":
            report = _cmd_truncation(cfg, args)
        elif args.command == "logistic":
            report = _cmd_logistic(cfg, args)
        else:  # pragma: no cover
            raise ConfigError(f"unknown command {args.command}")
        text = emit_report(report, args.format, args.out)
        if args.out is None:
            sys.stdout.write(text)
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ScaleEvolveError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
