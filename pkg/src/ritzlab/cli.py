"""Command-line interface.

Subcommands:
  construct-verify           exactness suite for all weight-level gadgets
  verify-gradnet NETFILE     gradient-norm transform check for a stored net
  train CONFIG               one training run (net file + history CSV + JSON)
  study CONFIG               convergence-rate study (JSON + CSV)
  decompose CONFIG           error-decomposition report (JSON)
  bounds                     print every theory-bound value for given inputs

Configs are YAML; any assertion failure exits nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
import yaml

from .bounds import BoundInputs, all_bounds
from .gadgets import build_gradient_norm_network, prescribe_architecture
from .harness import (
    DecompositionConfig,
    StudyConfig,
    _train_config_from_dict,
    run_convergence_study,
    run_error_decomposition,
    verify_constructions,
    write_history_csv,
    write_json_report,
    write_study_csv,
)
from .networks import forward_batch, load_network, save_network, values_and_input_gradients
from .problems import problem_by_name
from .ritz import derived_seed, empirical_loss
from .sampling import RNG_ALGORITHM, h1_error, make_sample_set, rng_stream
from .training import init_network, train as run_train


def _emit(report: dict, out: str | None) -> None:
    if out:
        write_json_report(report, out)
        print(f"wrote {out}")
    else:
        json.dump(report, sys.stdout, indent=2, sort_keys=True)
        print()


def _cmd_construct_verify(args) -> int:
    report = verify_constructions(seed=args.seed)
    _emit(report, args.out)
    return 0 if report["all_passed"] else 1


def _cmd_verify_gradnet(args) -> int:
    net = load_network(args.netfile)
    gnet = build_gradient_norm_network(net)
    d = net.architecture.input_dim
    rng = rng_stream(args.seed, 3)
    pts = rng.uniform(-1.5, 1.5, size=(args.probes, d))
    _, grads = values_and_input_gradients(net, pts)
    want = np.sum(grads**2, axis=1)
    got = forward_batch(gnet, pts)
    rel = float(np.max(np.abs(got - want) / np.maximum(1.0, np.abs(want))))
    report = {
        "kind": "gradient_norm_verification",
        "netfile": os.path.basename(args.netfile),
        "probes": args.probes,
        "max_rel_error": rel,
        "tolerance": 1e-9,
        "passed": rel <= 1e-9,
        "input_depth": net.architecture.depth,
        "input_width": net.architecture.width,
        "gradnet_depth": gnet.architecture.depth,
        "gradnet_width": gnet.architecture.width,
        "depth_bound": net.architecture.depth + 3,
        "width_bound": d * (net.architecture.depth + 2) * net.architecture.width,
    }
    _emit(report, args.out)
    return 0 if report["passed"] else 1


def _cmd_train(args) -> int:
    with open(args.config) as fh:
        raw = yaml.safe_load(fh)
    problem = problem_by_name(raw["problem"], raw["d"])
    n = int(raw["n"])
    seed = int(raw.get("seed", 0))
    tcfg = _train_config_from_dict(raw.get("train", {}))
    arch = prescribe_architecture(problem.d, n, float(raw.get("nu", 0.0)))
    samples = make_sample_set(n, n, problem.d, derived_seed(seed, 1))
    net0 = init_network(arch, tcfg.init_scale, seed)
    trained, history = run_train(net0, problem, samples, tcfg)
    err = h1_error(trained, problem, int(raw.get("n_quad", 100_000)), derived_seed(seed, 2))

    outdir = args.out or "."
    os.makedirs(outdir, exist_ok=True)
    netfile = os.path.join(outdir, "trained_network.txt")
    save_network(trained, netfile)
    write_history_csv(history, os.path.join(outdir, "train_history.csv"))
    summary = {
        "kind": "training_run",
        "config_echo": raw,
        "rng_algorithm": RNG_ALGORITHM,
        "training_protocol_note": "optimizer, initialization and step counts are "
                                  "implementation choices, not theory-mandated",
        "architecture": {"layer_dims": list(arch.layer_dims), "depth": arch.depth,
                         "width": arch.width},
        "final_loss": empirical_loss(trained, problem, samples).to_json_dict(),
        "train_summary": history.summary(),
        "h1_err": err.h1_err,
        "h1_err_se": err.h1_err_se,
        "l2_err": err.l2_err,
        "l2_err_se": err.l2_err_se,
    }
    write_json_report(summary, os.path.join(outdir, "train_summary.json"))
    print(f"wrote {netfile}")
    return 0


def _cmd_study(args) -> int:
    cfg = StudyConfig.from_yaml(args.config)
    report = run_convergence_study(cfg)
    outdir = args.out or cfg.output_dir or "."
    os.makedirs(outdir, exist_ok=True)
    write_json_report(report, os.path.join(outdir, "study_report.json"))
    write_study_csv(report, os.path.join(outdir, "study_cells.csv"))
    if report["fit"] is not None:
        print(
            f"fitted h1_err^2 slope {report['fit']['slope']:+.4f} "
            f"(se {report['fit']['slope_se']:.4f}); "
            f"predicted exponent {report['predicted']['h1_sq_rate_exponent']:+.4f}"
        )
    print(f"wrote {os.path.join(outdir, 'study_report.json')}")
    return 0


def _cmd_decompose(args) -> int:
    cfg = DecompositionConfig.from_yaml(args.config)
    report = run_error_decomposition(cfg)
    outdir = args.out or cfg.output_dir or "."
    os.makedirs(outdir, exist_ok=True)
    write_json_report(report, os.path.join(outdir, "decomposition_report.json"))
    print(f"wrote {os.path.join(outdir, 'decomposition_report.json')}")
    return 0


def _cmd_bounds(args) -> int:
    inputs = BoundInputs(
        depth=args.depth,
        width=args.width,
        d=args.d,
        n=args.n,
        B=args.B,
        c3=args.c3,
        nu=args.nu,
        pdim_constant=args.pdim_constant,
    )
    _emit(all_bounds(inputs, C_Bc3=args.c_bc3, eps=args.eps), args.out)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ritzlab", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    pv = sub.add_parser("construct-verify", help="run the exact-construction suite")
    pv.add_argument("--seed", type=int, default=0)
    pv.add_argument("--out", default=None)
    pv.set_defaults(fn=_cmd_construct_verify)

    pg = sub.add_parser("verify-gradnet", help="check the gradient-norm transform of a net file")
    pg.add_argument("netfile")
    pg.add_argument("--probes", type=int, default=1000)
    pg.add_argument("--seed", type=int, default=0)
    pg.add_argument("--out", default=None)
    pg.set_defaults(fn=_cmd_verify_gradnet)

    pt = sub.add_parser("train", help="train one network per a YAML config")
    pt.add_argument("config")
    pt.add_argument("--out", default=None)
    pt.set_defaults(fn=_cmd_train)

    ps = sub.add_parser("study", help="run a convergence-rate study")
    ps.add_argument("config")
    ps.add_argument("--out", default=None)
    ps.set_defaults(fn=_cmd_study)

    pd = sub.add_parser("decompose", help="run an error-decomposition report")
    pd.add_argument("config")
    pd.add_argument("--out", default=None)
    pd.set_defaults(fn=_cmd_decompose)

    pb = sub.add_parser("bounds", help="print all theory-bound values as JSON")
    pb.add_argument("--depth", type=int, required=True)
    pb.add_argument("--width", type=int, required=True)
    pb.add_argument("--d", type=int, required=True)
    pb.add_argument("--n", type=int, required=True)
    pb.add_argument("--B", type=float, default=1.0)
    pb.add_argument("--c3", type=float, default=1.0)
    pb.add_argument("--nu", type=float, default=0.0)
    pb.add_argument("--pdim-constant", dest="pdim_constant", type=float, default=1.0)
    pb.add_argument("--c-bc3", dest="c_bc3", type=float, default=1.0)
    pb.add_argument("--eps", type=float, default=1.0)
    pb.add_argument("--out", default=None)
    pb.set_defaults(fn=_cmd_bounds)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
