"""Command line entry point: ``vipsim run | constants | validate``."""
from __future__ import annotations

import argparse
import json
import sys
import warnings

from .congestion import default_alpha_max, make_utility
from .harness import ExperimentConfig, load_config, run_experiment, write_csv
from .metrics import compute_drift_constants
from .topology import BYTE, TopologyParseError, load_topology
from .traffic import truncation_bound, zipf_probabilities


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vipsim", description="VIP forwarding/caching/congestion simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a parameter sweep and write one CSV row per run")
    run.add_argument("--config", help="INI config file; flags override its values")
    run.add_argument("--topology", help="topology file or bundled name (geant, dtelekom, ...)")
    run.add_argument("--algorithm")
    run.add_argument("--lambda", dest="lambdas", type=_floats, help="comma-separated arrival rates")
    run.add_argument("--W", dest="Ws", type=_floats, help="comma-separated W values")
    run.add_argument("--z", type=float)
    run.add_argument("--slots", type=int)
    run.add_argument("--runs", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int, help="parallel runs (default: CPU count)")
    run.add_argument("--check-invariants", dest="check_invariants", action="store_true", default=None)
    run.add_argument("--out", required=True, help="output CSV path")

    const = sub.add_parser("constants", help="print the drift-bound constants B, B-hat and G_max")
    const.add_argument("--config", required=True)
    const.add_argument("--topology")

    val = sub.add_parser("validate", help="parse and check a topology file")
    val.add_argument("--topology", required=True)
    return parser


def _experiment(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {k: getattr(args, k, None) for k in ("topology", "algorithm", "lambdas", "Ws", "z", "slots",
                                                     "runs", "seed", "workers", "check_invariants")}
    return cfg.with_overrides(**overrides)


def cmd_run(args) -> int:
    cfg = _experiment(args)
    rows = run_experiment(cfg)
    write_csv(rows, args.out)
    failed = [r for r in rows if str(r["status"]).startswith("error")]
    for r in failed:
        print(f"run lambda={r['lambda']} W={r['W']} run={r['run']}: {r['status']}", file=sys.stderr)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 1 if failed else 0


def constants_for(cfg: ExperimentConfig) -> dict:
    """Drift constants for the first lambda of the sweep."""
    sim = cfg.sim_config(cfg.lambdas[0], cfg.Ws[0])
    topo = load_topology(cfg.topology)
    catalog = sim.catalog()
    if sim.cache_size_bytes is not None:
        topo = topo.with_cache_size(sim.cache_size_bytes * BYTE)
    pop = zipf_probabilities(catalog.object_count, sim.zipf_exponent)
    a_max = truncation_bound(sim.lam, pop, sim.arrival_truncation_factor)
    alpha_max = default_alpha_max(sim.lam, pop.probabilities, sim.alpha_max_factor)
    utility = make_utility(sim.utility)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        dc = compute_drift_constants(topo, catalog, a_max, sim.cache_rate_r, alpha_max, utility)
    out = dc.as_dict()
    out["lambda"] = sim.lam
    out["warnings"] = [str(w.message) for w in caught]
    return out


def cmd_constants(args) -> int:
    cfg = load_config(args.config).with_overrides(topology=args.topology)
    out = constants_for(cfg)
    print(f"B = {out['B']:.6g}")
    print(f"B_hat = {out['B_hat']:.6g}")
    print(f"G_max = {out['G_max']:.6g}")
    for w in out["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    print(json.dumps(out, indent=2))
    return 0


def cmd_validate(args) -> int:
    try:
        topo = load_topology(args.topology)
    except (OSError, TopologyParseError) as exc:
        print(f"invalid topology: {exc}", file=sys.stderr)
        return 1
    degrees = [len(n) for n in topo.neighbors]
    print(f"nodes: {topo.num_nodes}")
    print(f"directed links: {topo.num_links}")
    print(f"connected: {topo.is_connected()}")
    print(f"degree min/max: {min(degrees)}/{max(degrees)}")
    if not topo.is_connected():
        print("warning: topology is not connected", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return {"run": cmd_run, "constants": cmd_constants, "validate": cmd_validate}[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
