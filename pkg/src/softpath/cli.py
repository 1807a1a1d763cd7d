"""Command-line entry point: ``softpath {metric,verify,simulate,pipeline,family-test}``."""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import chains, harness, membership, metrics
from .errors import SoftPathError
from .paths import load_path, state


def _dump(obj, fh) -> None:
    json.dump(harness._clean(obj), fh, sort_keys=True, indent=2)
    fh.write("\n")


def _csv_list(conv):
    return lambda s: [conv(v) for v in s.split(",") if v.strip()]


def _ell(v: str):
    return state(v)


def cmd_metric(args) -> int:
    if args.kind == "state":
        res = {"distance": metrics.state_dist(args.x, args.y), "certified_error": 0.0}
        _dump(res, sys.stdout)
        return 0
    x, y = load_path(args.x), load_path(args.y)
    if args.kind == "skorohod":
        r = metrics.skorohod_dist(x, y, args.tol)
    else:
        r = metrics.soft_dist(x, y, args.tol)
    out = {"distance": r.distance, "certified_error": r.certified_error}
    if r.terms:
        out["terms"] = list(r.terms)
    _dump(out, sys.stdout)
    if args.witness:
        if r.witness is None:
            print("no witness for this metric kind", file=sys.stderr)
            return 2
        with open(args.witness, "w") as fh:
            _dump(r.witness.to_dict(), fh)
    return 0


def cmd_verify(args) -> int:
    ens = membership.load_ensemble(args.ensemble)
    grid = membership.estimate_grid(ens, args.ell, args.m, args.k, args.eps)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            harness.write_conditions_csv(fh, {None: grid})
    else:
        harness.write_conditions_csv(sys.stdout, {None: grid})
    return 0


def _load_flat(path) -> dict:
    with open(path, "rb") as fh:
        return harness.tomllib.load(fh)


def cmd_simulate(args) -> int:
    cfg = _load_flat(args.config)
    cfg["model"] = args.model
    spec = chains.spec_from_mapping(cfg)
    T = float(cfg.get("T", 1.0))
    reps, seeds = chains.run_replicas(spec, cfg.get("start"), T, args.paths, args.seed)
    os.makedirs(args.out, exist_ok=True)
    width = max(5, len(str(args.paths - 1)))
    files = []
    for i, r in enumerate(reps):
        name = f"path_{i:0{width}d}.json"
        with open(os.path.join(args.out, name), "w") as fh:
            _dump(r.path.to_dict(), fh)
        files.append(name)
    manifest = {
        "spec": spec.to_dict(),
        "T": T,
        "master_seed": args.seed,
        "seeds": seeds,
        "seed_derivation": "SeedSequence(master).spawn(n)[i].generate_state(1, uint64)[0]",
        "theta": reps[0].time_scale,
        "raw_jump_counts": [r.raw_jump_count for r in reps],
        "metadata": {k: v for k, v in reps[0].metadata.items() if k != "eta_final"},
        "paths": files,
    }
    with open(os.path.join(args.out, "manifest.json"), "w") as fh:
        _dump(manifest, fh)
    return 0


def cmd_pipeline(args) -> int:
    cfg = harness.ExperimentConfig.from_toml(args.config)
    out = args.out or cfg.out
    report = harness.run_metastability_pipeline(cfg)
    harness.emit_report(report, out, "json")
    harness.emit_report(report, out, "csv")
    for name, inv in report.invariants.items():
        print(f"{name}: {'ok' if inv['ok'] else 'VIOLATED'} ({inv['violations']}/{inv['paths']})")
    for name, tr in report.trends.items():
        print(f"trend {name}: {tr['verdict']}")
    return 0 if report.hard_ok else 1


def cmd_family(args) -> int:
    table = harness.path_convergence_test(args.family, m_max=args.m_max, n_max=args.n_max, tol=args.tol)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            table.write_csv(fh)
    else:
        table.write_csv(sys.stdout)
    print(f"{args.family}: {table.verdict}", file=sys.stderr if not args.out else sys.stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="softpath", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    m = sub.add_parser("metric", help="distance between two states or two path files")
    m.add_argument("--kind", choices=("state", "skorohod", "soft"), required=True)
    m.add_argument("--x", required=True)
    m.add_argument("--y", required=True)
    m.add_argument("--tol", type=float, default=metrics.DEFAULT_TOL)
    m.add_argument("--witness", help="write the witness time change here (skorohod only)")
    m.set_defaults(func=cmd_metric)

    v = sub.add_parser("verify", help="condition estimates for an ensemble, as CSV")
    v.add_argument("--ensemble", required=True, help="directory of path JSON files or one JSON file")
    v.add_argument("--ell", type=_csv_list(_ell), required=True)
    v.add_argument("--m", type=_csv_list(int), required=True)
    v.add_argument("--k", type=_csv_list(int), default=[])
    v.add_argument("--eps", type=_csv_list(float), default=[])
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("simulate", help="simulate replicas and write path JSON files")
    s.add_argument("model", choices=("zero-range", "trap-walk"))
    s.add_argument("--config", required=True, help="flat TOML file with the model parameters and T")
    s.add_argument("--paths", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    pl = sub.add_parser("pipeline", help="metastability pipeline over an N sweep")
    pl.add_argument("--config", required=True)
    pl.add_argument("--out")
    pl.set_defaults(func=cmd_pipeline)

    f = sub.add_parser("family-test", help="soft convergence of a spike family to the constant 1")
    f.add_argument("--family", choices=("xn", "yn", "zn"), required=True)
    f.add_argument("--n-max", type=int, default=64)
    f.add_argument("--m-max", type=int, default=8)
    f.add_argument("--tol", type=float, default=1e-9)
    f.add_argument("--out")
    f.set_defaults(func=cmd_family)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SoftPathError, OSError) as exc:
        print(f"softpath: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
