"""Command-line interface.

Exit codes: 0 on success, 2 when a bound's precondition fails or a tolerance
is infeasible, 1 on invalid input or a failed ``--verify`` check.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .exact import decode_complex, encode_complex, evolve_state, product_state
from .hamiltonian import HamiltonianError, LocalHamiltonian, build_model, structural_params
from .lattice import Lattice, LatticeError, geometry_report
from .lr_bounds import (BoundNotApplicable, empirical_truncation_error, make_plan,
                        quasilocality_bound, required_distance, simplified_bound)

EXIT_OK, EXIT_FAIL, EXIT_NOT_APPLICABLE = 0, 1, 2


class InputError(ValueError):
    """Malformed input file or option."""


class VerificationFailed(RuntimeError):
    """A dense cross-check did not hold."""


# output formatting

def _fmt(x) -> str:
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return '"nan"'
        if math.isinf(x):
            return '"inf"' if x > 0 else '"-inf"'
        return format(x, ".17g")
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_fmt(v)}" for k, v in x.items()) + "}"
    if isinstance(x, (list, tuple, set, frozenset)):
        items = sorted(x) if isinstance(x, (set, frozenset)) else x
        return "[" + ", ".join(_fmt(v) for v in items) + "]"
    if isinstance(x, np.ndarray):
        return _fmt(x.tolist())
    raise TypeError(f"cannot serialize {type(x).__name__}")


def dumps(obj) -> str:
    """JSON text with every float written to 17 significant digits."""
    return _fmt(obj) + "\n"


def write_csv(path, header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    text = buf.getvalue()
    if path:
        Path(path).write_text(text)
    return text


def _emit(report: dict, out) -> None:
    text = dumps(report)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# input loading

def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise InputError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    except OSError as e:
        raise InputError(f"{path}: {e.strerror}") from e


def load_hamiltonian(args) -> LocalHamiltonian:
    if getattr(args, "hamiltonian", None):
        data = _load_json(args.hamiltonian)
        try:
            return LocalHamiltonian.from_dict(data)
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"{args.hamiltonian}: invalid Hamiltonian ({e})") from e
    size = args.size
    if args.model == "heisenberg_grid":
        size = tuple(size) if isinstance(size, (list, tuple)) else (int(size), 2)
    elif isinstance(size, (list, tuple)):
        size = size[0]
    return build_model(args.model, size, args.couplings)


def load_product_state(path, sites) -> dict:
    """Per-site vectors from ``{"vectors": {site: [[re, im], ...]}}``."""
    data = _load_json(path)
    if "vectors" not in data:
        raise InputError(f"{path}: expected a 'vectors' mapping")
    vecs = {}
    for s in sites:
        key = str(s)
        if key not in data["vectors"]:
            raise InputError(f"{path}: missing vector for site {s}")
        v = decode_complex(data["vectors"][key])
        vecs[s] = v
    return vecs


def load_dense_state(path) -> np.ndarray:
    data = _load_json(path)
    if "amplitudes" in data:
        return decode_complex(data["amplitudes"])
    if "density" in data:
        return decode_complex(data["density"])
    raise InputError(f"{path}: expected 'amplitudes' or 'density'")


def _sites_arg(text, lattice: Lattice) -> frozenset:
    try:
        return frozenset(int(v) for v in str(text).split(",") if v.strip())
    except ValueError as e:
        raise InputError(f"bad site list {text!r}") from e


# commands

def cmd_lr_calc(args) -> dict:
    H = load_hamiltonian(args)
    params = structural_params(H, kappa=args.kappa)
    report = {"params": params.to_dict(), "t": args.t, "q": args.q}
    if args.eps is not None:
        req = required_distance(params, args.normA, args.t, args.eps, args.q)
        report["required_distance"] = dict(req, bound_eq="exponential truncation bound solved for D")
    if args.Y:
        Y = _sites_arg(args.Y, H.lattice)
        R = _sites_arg(args.R, H.lattice) if args.R else H.lattice.ball(Y, args.radius)
        plan = make_plan(H, params, Y, R | Y, args.q)
        report["plan"] = {"Y": Y, "R": plan.R, "barR": plan.barR, "d_a": plan.d_a, "D": plan.D,
                          "alpha_q": plan.alpha_q, "large_enough": plan.large_enough}
        report["quasilocality_bound"] = {
            "value": quasilocality_bound(params, args.normA, args.t, plan),
            "bound_eq": "(2M/Z) |A| ceil(d_a)^kappa exp(v|t| - ceil(d_a))"}
        if plan.large_enough:
            report["simplified_bound"] = dict(simplified_bound(params, args.normA, args.t, plan),
                                              bound_eq="(2M alpha_q/Z) |A| exp(v|t| - D)")
        if args.verify:
            rng = np.random.default_rng(args.seed)
            from .linalg import random_hermitian
            d = H.dim(tuple(sorted(Y)))
            A = random_hermitian(d, rng)
            A *= args.normA / np.linalg.norm(A, 2)
            emp = empirical_truncation_error(H, A, Y, plan.R, args.t, params, args.q)
            report["verify"] = {"exact_error": emp["exact_error"], "bound": emp["bound"],
                                "satisfied": emp["satisfied"]}
            if emp["satisfied"] is False:
                raise VerificationFailed("dense truncation error exceeds the bound")
    return report


def cmd_trotter_scan(args) -> dict:
    from .trotter import error_scan, linear_fit
    rows = error_scan(args.model, range(args.n_min, args.n_max + 1), args.t, args.L,
                      args.couplings[0] if args.couplings else 1.0, args.workers)
    csv_text = write_csv(args.csv, ["n", "error", "bound"],
                         [(r["n"], r["error"], r["bound"]) for r in rows])
    errs = [r["error"] for r in rows]
    fit_rows = [r for r in rows if r["n"] >= args.fit_from]
    report = {"rows": rows, "bound_eq": "L tau^2 ||[H1, H2]|| / 2",
              "monotone": all(b >= a for a, b in zip(errs, errs[1:])),
              "fit": linear_fit([r["n"] for r in fit_rows], [r["error"] for r in fit_rows])
              if len(fit_rows) >= 2 else None}
    if args.verify:
        bad = [r["n"] for r in rows if r["error"] > r["bound"] + args.atol]
        if bad or not report["monotone"]:
            raise VerificationFailed(f"Trotter scan check failed (rows over bound: {bad})")
    if not args.csv and not args.out:
        sys.stderr.write(csv_text)
    return report


def cmd_certify(args) -> dict:
    from .certification import (approx_witness_analysis, certify_state, delta_prime_value,
                                evolved_witness, plan_regions, simulate_measurements, WitnessSpec)
    H = load_hamiltonian(args)
    lat = H.lattice
    params = structural_params(H)
    vectors = (load_product_state(args.state, lat.sites) if args.state
               else {s: np.eye(H.dims[s])[0] for s in lat.sites})
    spec = plan_regions(lat, params, args.t, args.I, args.gamma, args.partition, args.q, H, vectors)
    if args.full_regions:
        spec = WitnessSpec(vectors, spec.partition, [lat.all] * len(spec.partition), args.t, spec.meta)
    need_exact = args.verify or args.rho is None
    W = evolved_witness(spec, H, exact=need_exact)
    psi0 = product_state([vectors[s] for s in lat.sites])
    psi_t = evolve_state(H, psi0, args.t) if need_exact else None
    rho = load_dense_state(args.rho) if args.rho else psi_t
    delta = spec.meta["delta"]
    cert = certify_state(rho, W["truncated"], delta, lat.sites, H.dims, args.I)
    report = {"target": "psi(t)", "E_rho": cert.E_rho, "delta": delta, "bound": cert.bound,
              "I_target": args.I, "bound_eq": "Tr(rho G') + delta",
              "plan": {k: v for k, v in spec.meta.items()},
              "Gamma": len(spec.partition)}
    if args.shots:
        sim = simulate_measurements(rho, W["truncated"], args.shots, args.seed, lat.sites, H.dims,
                                    allocation=args.allocation)
        report["measurement"] = {"E_rho_hat": sim["E_rho_hat"], "std_error": sim["std_error"],
                                 "shots_per_term": args.shots, "seed": args.seed,
                                 "bound_hat": sim["E_rho_hat"] + delta}
    if args.verify:
        from .linalg import op_norm
        G = W["exact"].dense(lat.sites, H.dims)
        Gp = W["truncated"].dense(lat.sites, H.dims)
        dist = op_norm(G - Gp)
        r = rho if np.asarray(rho).ndim == 2 else np.outer(rho, np.conj(rho))
        infid = 1 - float(np.real(np.vdot(psi_t, r @ psi_t)))
        report["verify"] = {"infidelity": infid, "G_minus_Gp": dist}
        dp = delta_prime_value(args.I, len(spec.partition), spec.meta["gamma"])
        if dist <= dp < 0.5:
            an = approx_witness_analysis(W["exact"], W["truncated"], dp, psi_t, lat.sites, H.dims)
            report["psi_prime"] = {"target": "psi'", "delta_prime": dp,
                                   "certificate": an["certificate_vs_psi_prime"](r),
                                   "gap": an["gap"], "gap_bound": an["gap_bound"],
                                   "bound_eq": "(Tr(rho G') + delta') / (1 - 2 delta')"}
        if dist <= delta and infid > cert.bound + 1e-9:
            raise VerificationFailed("certificate below the dense infidelity")
    per_term = [(i, sorted(s)[0] if len(s) == 1 else "-".join(map(str, sorted(s))), v)
                for i, (s, v) in enumerate(zip(spec.partition, cert.per_term))]
    write_csv(args.csv, ["term", "block", "expectation"], per_term) if args.csv else None
    report["per_term"] = cert.per_term
    return report


def cmd_decompose(args) -> dict:
    from .decomposition import (circuit_bond_report, hypercubic_decomposition,
                                make_hypercubic_plan, sequential_decomposition)
    H = load_hamiltonian(args)
    if args.mode == "sequential":
        dec = sequential_decomposition(H, args.r, args.t, args.s, args.q,
                                       color_sorted=args.color_sorted, verify=args.verify)
    else:
        plan = make_hypercubic_plan(H, args.omega)
        dec = hypercubic_decomposition(H, plan, args.t, args.s, args.q, verify=args.verify)
    meta = {k: v for k, v in dec.meta.items() if k != "colors"}
    report = {"mode": args.mode,
              "factors": [{"support": list(sup), "tag": {k: (list(v) if isinstance(v, tuple) else v)
                                                         for k, v in tag.items()}}
                          for sup, _, tag in dec.factors],
              "layers": dec.layers, "layers_disjoint": dec.layers_disjoint(), "meta": meta,
              "bound_eq": "sum of per-step (2M alpha_q/(v Z)) |F| exp(v|t-s| - D)",
              "circuit_bond_report": circuit_bond_report(dec, H.lattice, max(H.dims.values()))}
    if args.dump_dir:
        from .exact import dump_binary
        out = Path(args.dump_dir)
        out.mkdir(parents=True, exist_ok=True)
        for k, (sup, U, _) in enumerate(dec.factors):
            dump_binary(U, out / f"factor_{k:04d}.bin")
    if args.verify:
        err, tele = dec.meta["dense_error"], dec.meta["dense_step_sum"]
        if err > tele + 1e-9 or (dec.meta["total_bound"] is not None
                                 and err > dec.meta["total_bound"] + 1e-9):
            raise VerificationFailed("dense decomposition error exceeds the telescoped bound")
        if not dec.layers_disjoint():
            raise VerificationFailed("layer factors overlap")
    return report


def cmd_simulate(args) -> dict:
    H = load_hamiltonian(args)
    lat = H.lattice
    vectors = (load_product_state(args.state, lat.sites) if args.state
               else {s: np.eye(H.dims[s])[0] for s in lat.sites})
    psi = evolve_state(H, product_state([vectors[s] for s in lat.sites]), args.t)
    if args.state_out:
        Path(args.state_out).write_text(json.dumps({"sites": list(lat.sites),
                                                    "amplitudes": encode_complex(psi)}))
    from .linalg import PAULIS
    from .exact import embed
    rho = np.outer(psi, psi.conj())
    mags = {str(s): float(np.real(np.trace(rho @ embed(PAULIS["Z"], (s,), lat.sites, H.dims))))
            for s in lat.sites} if all(d == 2 for d in H.dims.values()) else {}
    return {"t": args.t, "norm": float(np.linalg.norm(psi)), "Z_expectations": mags}


def cmd_geometry_check(args) -> dict:
    if args.lattice:
        lat = Lattice.from_dict(_load_json(args.lattice))
    elif args.geometry == "chain":
        lat = Lattice.chain(args.L)
    elif args.geometry == "grid":
        lat = Lattice.grid((args.L,) * args.eta)
    else:
        lat = Lattice.hypercube(args.L, args.eta)
    rep = geometry_report(lat, args.n_random, args.seed)
    total = sum(v for _, v in rep.values())
    report = {"lattice": lat.to_dict(), "checks": {k: {"cases": c, "violations": v}
                                                   for k, (c, v) in rep.items()},
              "violations": total}
    if total:
        raise VerificationFailed(f"{total} geometry violations")
    return report


COMMANDS = {"lr-calc": cmd_lr_calc, "trotter-scan": cmd_trotter_scan, "certify": cmd_certify,
            "decompose": cmd_decompose, "simulate": cmd_simulate,
            "geometry-check": cmd_geometry_check}


def _add_model_args(p) -> None:
    p.add_argument("--hamiltonian", help="Hamiltonian JSON file")
    p.add_argument("--model", default="heisenberg_chain")
    p.add_argument("--size", type=int, nargs="+", default=[6])
    p.add_argument("--couplings", type=float, nargs="*", default=[1.0])


def build_parser() -> tuple:
    parser = argparse.ArgumentParser(prog="certdyn", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file with option defaults")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", help="write the JSON report here instead of stdout")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = subs["lr-calc"] = sub.add_parser("lr-calc", help="structural parameters and truncation bounds")
    _add_model_args(p)
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--q", type=float, default=0.5)
    p.add_argument("--eps", type=float)
    p.add_argument("--normA", type=float, default=1.0)
    p.add_argument("--kappa", type=float)
    p.add_argument("--Y", help="comma-separated observable support")
    p.add_argument("--R", help="comma-separated region (default: open ball of --radius)")
    p.add_argument("--radius", type=float, default=3.0)
    p.add_argument("--verify", action="store_true")

    p = subs["trotter-scan"] = sub.add_parser("trotter-scan", help="exact Trotter error versus bound")
    p.add_argument("--model", default="heisenberg_chain")
    p.add_argument("--couplings", type=float, nargs="*", default=[1.0])
    p.add_argument("--n-min", dest="n_min", type=int, default=2)
    p.add_argument("--n-max", dest="n_max", type=int, default=10)
    p.add_argument("--t", type=float)
    p.add_argument("--L", type=int, default=200)
    p.add_argument("--fit-from", dest="fit_from", type=int, default=4)
    p.add_argument("--atol", type=float, default=1e-12)
    p.add_argument("--csv")
    p.add_argument("--verify", action="store_true")

    p = subs["certify"] = sub.add_parser("certify", help="fidelity certificate for an evolved product state")
    _add_model_args(p)
    p.add_argument("--state", help="product-state JSON")
    p.add_argument("--rho", help="dense state JSON (default: the exact evolved state)")
    p.add_argument("--t", type=float, default=0.1)
    p.add_argument("--I", type=float, default=0.1)
    p.add_argument("--gamma", type=float)
    p.add_argument("--q", type=float, default=0.5)
    p.add_argument("--partition", choices=["singleton", "cubes"], default="singleton")
    p.add_argument("--full-regions", dest="full_regions", action="store_true")
    p.add_argument("--shots", type=int, default=0)
    p.add_argument("--allocation", choices=["random", "stratified"], default="random")
    p.add_argument("--csv")
    p.add_argument("--verify", action="store_true")

    p = subs["decompose"] = sub.add_parser("decompose", help="local-unitary decomposition of U_ts")
    _add_model_args(p)
    p.add_argument("--mode", choices=["sequential", "hypercubic"], default="sequential")
    p.add_argument("--omega", type=int, default=4)
    p.add_argument("--r", type=float, default=4.0)
    p.add_argument("--t", type=float, default=0.1)
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--q", type=float, default=0.5)
    p.add_argument("--color-sorted", dest="color_sorted", action="store_true")
    p.add_argument("--dump-dir", dest="dump_dir")
    p.add_argument("--verify", action="store_true")

    p = subs["simulate"] = sub.add_parser("simulate", help="dense evolution of a product state")
    _add_model_args(p)
    p.add_argument("--state")
    p.add_argument("--t", type=float, default=0.1)
    p.add_argument("--state-out", dest="state_out")

    p = subs["geometry-check"] = sub.add_parser("geometry-check", help="metric and ball/cube property checks")
    p.add_argument("--lattice", help="lattice JSON")
    p.add_argument("--geometry", choices=["chain", "grid", "hypercube"], default="hypercube")
    p.add_argument("--L", type=int, default=8)
    p.add_argument("--eta", type=int, default=2)
    p.add_argument("--n-random", dest="n_random", type=int, default=1000)
    return parser, subs


def parse_args(argv=None):
    parser, subs = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        cfg = _load_json(known.config)
        if not isinstance(cfg, dict):
            raise InputError(f"{known.config}: config must be a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        parser.set_defaults(**{k: v for k, v in cfg.items() if k in ("workers", "seed", "out")})
        for p in subs.values():
            p.set_defaults(**cfg)
    return parser.parse_args(argv)


def run(argv=None) -> int:
    try:
        args = parse_args(argv)
        report = COMMANDS[args.command](args)
        report = {"command": args.command, "seed": args.seed, **report}
        _emit(report, args.out)
        return EXIT_OK
    except BoundNotApplicable as e:
        sys.stderr.write(f"not applicable: {e}\n")
        return EXIT_NOT_APPLICABLE
    except (InputError, HamiltonianError, LatticeError, VerificationFailed, ValueError,
            RuntimeError) as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_FAIL


def main(argv=None) -> None:
    sys.exit(run(argv))
