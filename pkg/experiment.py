import argparse
import logging
import multiprocessing
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from tqdm.auto import tqdm

from models.analysis import (EnvelopeInputs, TrajectorySeries, build_bound_report, ensemble_moments,
                             envelope_scaling, fit_envelope)
from models.graph import (DegreeSequenceError, DirectedGraph, NotStronglyConnectedError, from_edge_list,
                          is_strongly_connected, neutral_randomize, sample_configuration_model, to_edge_list)
from models.netstats import AssortativityContext, DegenerateStatisticError
from models.rewire import (PROPOSAL_BUDGET, RewiringPolicy, TrajectoryResult, make_rng,
                           run_fractal_core_periphery, run_trajectory)
from models.spectral import SpectralConfig, SpectralError, angle, summarize
from utils.config import ExperimentConfig, derive_seed, digest_of, resolve_steps
from utils.degrees import DegreeModel, hill_exponent, powerlaw_degrees, regular_degrees
from utils.graph_io import (DigestMismatchError, TrajectoryFile, check_digests, read_degree_file, write_csv,
                            write_graph, write_json)
from utils.utils import TOOL_VERSION, graph_digest, load_graph, load_partition, setup_logging

logger = logging.getLogger("experiment")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_EXHAUSTED = 3
EXIT_NUMERICAL = 4


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (DegreeSequenceError, NotStronglyConnectedError)):
        return EXIT_EXHAUSTED
    if isinstance(exc, SpectralError):
        return EXIT_NUMERICAL
    if isinstance(exc, (ValueError, OSError)):
        return EXIT_VALIDATION
    return 1


def degree_sequences(model: DegreeModel, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    if model.kind == "regular":
        return regular_degrees(n, model.d)
    if model.kind == "powerlaw":
        return powerlaw_degrees(n, model.alpha, model.d_min, model.d_max_cap, rng)
    return read_degree_file(model.path)


def generate_graph(n: int, model: DegreeModel, seed: int, randomize_steps="10m", scc_guard: str = "auto",
                   max_draws: int = 100, progress: bool = False) -> Tuple[DirectedGraph, dict]:
    """Configuration-model draw, resampled until strongly connected, then neutrally randomized."""
    rng = make_rng(seed)
    d_out, d_in = degree_sequences(model, n, rng)
    for draw in range(1, max_draws + 1):
        g = sample_configuration_model(d_out, d_in, rng)
        if is_strongly_connected(g):
            break
        logger.debug("Configuration-model draw %d is not strongly connected", draw)
    else:
        raise NotStronglyConnectedError(f"No strongly connected realization in {max_draws} draws")
    stats = {}
    g = neutral_randomize(g, resolve_steps(randomize_steps, g.m), rng, scc_guard, progress=progress, stats=stats)
    return g, {"draws": draw, "randomization": stats}


def baseline_metadata(g: DirectedGraph, model: DegreeModel, spectral: SpectralConfig) -> dict:
    degrees = g.degree_vectors()
    summary = summarize(g, degrees, spectral)
    return {
        "n": g.n,
        "m": g.m,
        "d_out_min": int(g.out_deg.min()),
        "d_out_max": int(g.out_deg.max()),
        "d_in_min": int(g.in_deg.min()),
        "d_in_max": int(g.in_deg.max()),
        "alpha_configured": model.alpha,
        "alpha_hill": hill_exponent(g.out_deg),
        "theta0": angle(degrees.d_out, summary.v_right),
        "theta0_in": angle(degrees.d_in, summary.v_left),
        **summary.to_dict(),
        "graph_digest": graph_digest(g),
        "tool_version": TOOL_VERSION,
    }


def leverage_inputs(g: DirectedGraph, policy: RewiringPolicy) -> dict:
    nu = None
    if policy.statistic == "assortativity":
        nu = AssortativityContext.from_graph(g, policy.p, policy.q).nu
    return {"d_out": g.out_deg.tolist(), "d_in": g.in_deg.tolist(), "nu": nu, "p": policy.p, "q": policy.q}


def trajectory_file(g0: DirectedGraph, policy: RewiringPolicy, result: TrajectoryResult, config_digest: str,
                    stride: int, fractal: Optional[dict] = None,
                    alpha_configured: Optional[float] = None) -> TrajectoryFile:
    r_total = sum(fractal["budgets"]) if fractal else policy.r_budget
    header = {
        "tool_version": TOOL_VERSION,
        "config_digest": config_digest,
        "graph_digest": graph_digest(g0),
        "n": g0.n,
        "m": g0.m,
        "policy": policy.to_dict(),
        "fractal": fractal,
        "r_total": r_total,
        "seed": result.seed,
        "stride": stride,
        "baseline": result.baseline.to_dict(),
        "theta0": result.theta0,
        "theta0_in": result.theta0_in,
        "phi0": result.phi0,
        "leverage": leverage_inputs(g0, policy),
        "alpha_configured": alpha_configured,
        "alpha_hill": hill_exponent(g0.out_deg),
    }
    footer = {
        "stop_reason": result.stop_reason,
        "accepted": result.accepted,
        "proposals": result.proposals,
        "theta_monotone": result.theta_monotone,
        "s_max": result.ledger.s_max,
        "rejections": result.rejections,
        "phases": [p.__dict__ for p in result.phases],
    }
    return TrajectoryFile(header, result.records, footer)


def run_policy(g0: DirectedGraph, policy: RewiringPolicy, stride: int, seed: int, fractal: Optional[dict],
               progress: bool = False) -> TrajectoryResult:
    if fractal:
        return run_fractal_core_periphery(g0, fractal["levels"], fractal["budgets"], seed, policy, stride,
                                          branching=fractal.get("branching", 2), progress=progress)
    return run_trajectory(g0, policy, stride, seed, progress)


def run_member(index: int, seed: int, edge_list: str, policy: RewiringPolicy, stride: int,
               fractal: Optional[dict], config_digest: str,
               alpha_configured: Optional[float]) -> Tuple[int, TrajectoryFile]:
    torch.set_num_threads(1)
    g0 = from_edge_list(edge_list)
    result = run_policy(g0, policy, stride, seed, fractal)
    return index, trajectory_file(g0, policy, result, config_digest, stride, fractal, alpha_configured)


def parse_stat(stat: str) -> dict:
    """assort:<p>-<q>[:-1] | community | cp | cycle:<k> | triangle | grow:<k> | cp-fractal:<levels>."""
    kind, _, rest = stat.partition(":")
    if kind == "assort":
        modes, _, sign = rest.partition(":")
        p, _, q = (modes or "out-in").partition("-")
        return {"statistic": "assortativity", "p": p, "q": q, "sign": int(sign) if sign else 1}
    if kind == "community":
        return {"statistic": "community"}
    if kind == "cp":
        return {"statistic": "core_periphery"}
    if kind == "triangle":
        return {"statistic": "triangle"}
    if kind in ("cycle", "grow"):
        if not rest.isdigit():
            raise ValueError(f"--stat {stat!r} needs a cycle length, e.g. {kind}:4")
        return {"statistic": "k_cycle" if kind == "cycle" else "cycle_grow", "k": int(rest)}
    if kind == "cp-fractal":
        if not rest.isdigit() or int(rest) < 1:
            raise ValueError(f"--stat {stat!r} needs a level count, e.g. cp-fractal:2")
        return {"statistic": "core_periphery", "levels": int(rest)}
    raise ValueError(f"Unknown statistic {stat!r}")


def trajectory_series(files: Sequence[TrajectoryFile]) -> List[TrajectorySeries]:
    return [TrajectorySeries.from_records(i, f.header["phi0"], f.header["theta0"], f.records)
            for i, f in enumerate(files)]


def envelope_for(files: Sequence[TrajectoryFile], reports, summary):
    header = files[0].header
    lev = header["leverage"]
    inputs = EnvelopeInputs(
        statistic=header["policy"]["statistic"],
        r_budget=header["r_total"],
        kappa_star=max(r.kappa_star for r in reports),
        gamma_star=min(r.gamma_star for r in reports),
        d_out=np.asarray(lev["d_out"]),
        d_in=np.asarray(lev["d_in"]),
        p=lev["p"], q=lev["q"], nu=lev["nu"],
        alpha_configured=header.get("alpha_configured"),
        alpha_hill=header.get("alpha_hill"),
    )
    return fit_envelope(summary, inputs)


def read_trajectories(paths: Sequence) -> Tuple[List[TrajectoryFile], str]:
    files = [TrajectoryFile.read(p) for p in paths]
    return files, check_digests(files, [str(p) for p in paths])


def cmd_generate(args) -> int:
    model = DegreeModel.parse(args.degrees, args.alpha, args.d_min, args.d_max_cap)
    if model.kind != "file" and args.n is None:
        raise ValueError("--n is required unless --degrees file:<path> is used")
    flags = {"command": "generate", "n": args.n, "degrees": args.degrees, "alpha": args.alpha,
             "d_min": args.d_min, "d_max_cap": args.d_max_cap, "seed": args.seed,
             "randomize_steps": args.randomize_steps, "scc_guard": args.scc_guard}
    digest = digest_of(flags)
    g, info = generate_graph(args.n, model, args.seed, args.randomize_steps, args.scc_guard,
                             progress=args.progress)
    write_graph(args.out, g, [f"rewiring toolkit {TOOL_VERSION}", f"config_digest={digest}",
                              f"degrees={args.degrees} seed={args.seed}"])
    meta = baseline_metadata(g, model, SpectralConfig(tol=args.tol, dense_cap=args.dense_cap))
    meta.update(info, config_digest=digest)
    write_json(f"{args.out}.meta.json", meta)
    print(f"Wrote {args.out}: n = {g.n}, m = {g.m}, theta0 = {meta['theta0']:.3e} rad")
    return EXIT_OK


def policy_from_flags(args, g: DirectedGraph) -> Tuple[RewiringPolicy, Optional[dict]]:
    stat = parse_stat(args.stat)
    levels = stat.pop("levels", None)
    partition = load_partition(args.partition, g.n) if args.partition else None
    policy = RewiringPolicy(
        partition=partition, r_budget=args.r, max_accepted=args.max_accepted, max_proposals=args.max_proposals,
        strict=args.strict, angle_filter=args.angle_filter, angle_sample_size=args.angle_sample_size,
        scc_guard=args.scc_guard, cp_allow_peripheral_head=args.cp_allow_peripheral_head,
        core_fraction=args.core_fraction, spectral=SpectralConfig(tol=args.tol, dense_cap=args.dense_cap),
        **stat)
    fractal = None
    if levels is not None:
        budgets = [int(b) for b in args.budgets.split(",")] if args.budgets else [args.r] * levels
        fractal = {"levels": levels, "budgets": budgets, "branching": args.branching}
    return policy, fractal


def cmd_rewire(args) -> int:
    g = load_graph(args.graph)
    policy, fractal = policy_from_flags(args, g)
    digest = digest_of({"command": "rewire", "graph_digest": graph_digest(g), "policy": policy.to_dict(),
                        "fractal": fractal, "seed": args.seed, "stride": args.stride})
    result = run_policy(g, policy, args.stride, args.seed, fractal, progress=args.progress)
    trajectory_file(g, policy, result, digest, args.stride, fractal).write(args.out)
    print(f"Wrote {args.out}: {result.accepted} swaps in {result.proposals} proposals ({result.stop_reason})")
    return EXIT_EXHAUSTED if result.stop_reason == PROPOSAL_BUDGET else EXIT_OK


def ensemble_baseline(cfg: ExperimentConfig) -> Tuple[DirectedGraph, DegreeModel]:
    model = cfg.degree_model()
    if cfg.graph:
        return load_graph(cfg.graph), model
    g, info = generate_graph(cfg.n, model, derive_seed(cfg.master_seed, "baseline"), cfg.randomize_steps)
    logger.info("Generated baseline: %s", info)
    return g, model


def cmd_ensemble(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
    workers = cfg.resolve_workers()
    out = Path(cfg.output_dir if args.out_dir is None else args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    g0, model = ensemble_baseline(cfg)
    digest = cfg.digest
    write_graph(out / "baseline.txt", g0, [f"rewiring toolkit {TOOL_VERSION}", f"config_digest={digest}"])
    meta = baseline_metadata(g0, model, cfg.spectral_config())
    meta["config_digest"] = digest
    write_json(out / "baseline.txt.meta.json", meta)
    partition = load_partition(cfg.partition, g0.n) if cfg.partition else None
    policy = cfg.to_policy(partition)
    fractal = None
    if cfg.is_fractal:
        fractal = {"levels": int(cfg.policy["levels"]), "budgets": cfg.fractal_budgets(),
                   "branching": int(cfg.policy.get("branching", 2))}

    edge_list = to_edge_list(g0)
    jobs = [(i, derive_seed(cfg.master_seed, i), edge_list, policy, cfg.stride, fractal, digest, model.alpha)
            for i in range(cfg.ensemble_size)]
    results: Dict[int, TrajectoryFile] = {}
    errors: Dict[int, BaseException] = {}
    logger.info("Running %d trajectories on %d worker(s)", len(jobs), workers)
    if workers == 1:
        for job in tqdm(jobs, desc="Ensemble", disable=not args.progress):
            try:
                index, traj = run_member(*job)
                results[index] = traj
            except Exception as e:
                errors[job[0]] = e
    else:
        with ProcessPoolExecutor(max_workers=workers, mp_context=multiprocessing.get_context("spawn")) as pool:
            futures = {pool.submit(run_member, *job): job[0] for job in jobs}
            for future in tqdm(as_completed(futures), total=len(futures), desc="Ensemble",
                               disable=not args.progress):
                try:
                    index, traj = future.result()
                    results[index] = traj
                except Exception as e:
                    errors[futures[future]] = e

    for index in sorted(results):
        results[index].write(out / f"traj_{index:04d}.jsonl")
    if errors:
        for index in sorted(errors):
            logger.error("Trajectory %d failed: %s: %s", index, type(errors[index]).__name__, errors[index])
        write_json(out / "errors.json", {
            "config_digest": digest,
            "failed": {str(i): {"type": type(e).__name__, "message": str(e)} for i, e in sorted(errors.items())},
            "completed": sorted(results),
        })
        return exit_code_for(errors[min(errors)])

    files = [results[i] for i in sorted(results)]
    summary = ensemble_moments(trajectory_series(files))
    write_csv(out / "moments.csv", summary.to_frame(), {
        "config_digest": digest, "tool_version": TOOL_VERSION, "ensemble_size": summary.ensemble_size,
        "variance_first_decrease": summary.variance_first_decrease})
    print(f"Wrote {len(files)} trajectories and moments.csv to {out}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    files, digest = read_trajectories(args.trajectory)
    if args.graph:
        expected = graph_digest(load_graph(args.graph))
        for path, f in zip(args.trajectory, files):
            if f.header["graph_digest"] != expected:
                raise DigestMismatchError(f"{path} was not produced from {args.graph}")

    reports, frames = [], []
    for i, f in enumerate(files):
        report = build_bound_report(f.header["baseline"], f.header["theta0"], f.records)
        reports.append(report)
        frame = report.to_frame()
        frame.insert(0, "trajectory", i)
        frames.append(frame)
    table = pd.concat(frames, ignore_index=True)

    summary = ensemble_moments(trajectory_series(files))
    envelope = envelope_for(files, reports, summary)
    slacks = [r.min_slack for r in reports if r.conforming]
    result = {
        "config_digest": digest,
        "tool_version": TOOL_VERSION,
        "trajectories": len(files),
        "records": int(sum(len(r.rows) for r in reports)),
        "min_slack": min(slacks) if slacks else None,
        "violations": sum(r.violations for r in reports),
        "participation_violations": sum(r.participation_violations for r in reports),
        "kappa_star": max(r.kappa_star for r in reports),
        "gamma_star": min(r.gamma_star for r in reports),
        "M_hat": envelope.M_hat,
        "composite": envelope.composite,
        "ratio": envelope.ratio,
    }
    out_csv = args.out_csv or f"{args.trajectory[0]}.bounds.csv"
    out_json = args.out_json or f"{args.trajectory[0]}.bounds.json"
    write_csv(out_csv, table, {"config_digest": digest, "tool_version": TOOL_VERSION})
    write_json(out_json, result)
    print(f"Wrote {out_csv}: {result['records']} records, {result['violations']} violation(s)")
    if result["violations"] or result["participation_violations"]:
        logger.error("Bound verification failed")
        return EXIT_NUMERICAL
    return EXIT_OK


def ensemble_report(directory: Path):
    paths = sorted(directory.glob("traj_*.jsonl"))
    if not paths:
        raise ValueError(f"No trajectory files in {directory}")
    files, digest = read_trajectories(paths)
    reports = [build_bound_report(f.header["baseline"], f.header["theta0"], f.records) for f in files]
    summary = ensemble_moments(trajectory_series(files))
    return files, digest, summary, envelope_for(files, reports, summary)


def cmd_report(args) -> int:
    directory = Path(args.ensemble_dir)
    out = Path(args.out_dir) if args.out_dir else directory
    out.mkdir(parents=True, exist_ok=True)
    files, digest, summary, envelope = ensemble_report(directory)
    meta = {"config_digest": digest, "tool_version": TOOL_VERSION, "ensemble_size": summary.ensemble_size,
            "variance_first_decrease": summary.variance_first_decrease,
            "M_hat": envelope.M_hat, "composite": envelope.composite}
    write_csv(out / "report_moments.csv", summary.to_frame(), meta)
    envelope_frame = pd.DataFrame(sorted(envelope.to_dict().items()), columns=["quantity", "value"])
    write_csv(out / "envelope.csv", envelope_frame, {"config_digest": digest, "tool_version": TOOL_VERSION})

    if args.sweep:
        points = []
        for sweep_dir in [directory] + [Path(d) for d in args.sweep]:
            sweep_files, _, _, sweep_env = ensemble_report(sweep_dir)
            alpha = sweep_files[0].header.get("alpha_configured") or sweep_env.alpha_hill
            points.append((sweep_files[0].header["n"], alpha, sweep_env.M_hat))
        write_csv(out / "scaling.csv", envelope_scaling(points), {"tool_version": TOOL_VERSION})
    print(f"Wrote report for {summary.ensemble_size} trajectories to {out} (M_hat = {envelope.M_hat:.6g})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Degree-preserving rewiring and eigenvector-angle bounds")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="More logging")
    parser.add_argument("-q", "--quiet", action="count", default=0, help="Less logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def spectral_flags(p):
        p.add_argument("--tol", default=1e-10, type=float, help="Eigensolver tolerance")
        p.add_argument("--dense-cap", default=2000, type=int, help="Largest n for dense decompositions")
        p.add_argument("--progress", action="store_true", help="Show progress bars")

    p = sub.add_parser("generate", help="Generate a strongly connected neutral baseline")
    p.add_argument("--n", type=int, help="Number of vertices")
    p.add_argument("--degrees", default="regular:3",
                   help="regular:<d> | powerlaw[:<alpha>:<d_min>:<d_max_cap>] | file:<path>")
    p.add_argument("--alpha", type=float, help="Power-law tail exponent (> 1)")
    p.add_argument("--d-min", type=int, help="Smallest power-law degree")
    p.add_argument("--d-max-cap", type=int, help="Largest power-law degree")
    p.add_argument("--seed", default=0, type=int, help="Random seed")
    p.add_argument("--randomize-steps", default="10m", help="Neutral swap attempts: <int> or <c>m")
    p.add_argument("--scc-guard", default="auto", help="every_swap | every_k:<k> | initial_only | auto")
    p.add_argument("--out", default="graph.txt", help="Edge-list output path")
    spectral_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("rewire", help="Run one statistic-driven rewiring trajectory")
    p.add_argument("--graph", required=True, help="Baseline edge-list file")
    p.add_argument("--stat", default="assort:out-in",
                   help="assort:<p>-<q>[:-1] | community | cp | cycle:<k> | triangle | grow:<k> | cp-fractal:<L>")
    p.add_argument("--r", default=3, type=int, help="Participation budget per vertex")
    p.add_argument("--budgets", default="", help="Comma-separated per-level budgets for cp-fractal")
    p.add_argument("--branching", default=2, type=int, help="Sub-blocks per periphery block for cp-fractal")
    p.add_argument("--max-accepted", default=100, type=int, help="Accepted swaps before stopping")
    p.add_argument("--max-proposals", type=int, help="Proposal budget (default max(1000, 50 x max-accepted))")
    p.add_argument("--stride", default=10, type=int, help="Record every this many accepted swaps")
    p.add_argument("--partition", default="", help="Partition file (community, cp)")
    p.add_argument("--strict", default=None, action=argparse.BooleanOptionalAction,
                   help="Require a strict statistic increase")
    p.add_argument("--angle-filter", default="off", help="off | pathwise_nondecreasing | mean_admissible")
    p.add_argument("--angle-sample-size", default=8, type=int, help="Candidates sampled by mean_admissible")
    p.add_argument("--scc-guard", default="auto", help="every_swap | every_k:<k> | initial_only | auto")
    p.add_argument("--cp-allow-peripheral-head", action="store_true", help="Allow d in L for cp swaps")
    p.add_argument("--core-fraction", default=0.2, type=float, help="Core share of the degree-based split")
    p.add_argument("--seed", default=0, type=int, help="Random seed")
    p.add_argument("--out", default="trajectory.jsonl", help="Trajectory output path")
    spectral_flags(p)
    p.set_defaults(func=cmd_rewire)

    p = sub.add_parser("ensemble", help="Run an ensemble of trajectories from a config file")
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--workers", type=int, help="Worker processes (overrides config and REWIRE_WORKERS)")
    p.add_argument("--out-dir", help="Output directory (overrides config)")
    p.add_argument("--progress", action="store_true", help="Show progress bars")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("analyze", help="Check bounds on trajectory files")
    p.add_argument("--trajectory", nargs="+", required=True, help="Trajectory files")
    p.add_argument("--graph", help="Baseline edge-list file to check against")
    p.add_argument("--out-csv", help="Bound table path")
    p.add_argument("--out-json", help="Summary path")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="Moments and envelope of an ensemble directory")
    p.add_argument("--ensemble-dir", required=True, help="Directory written by ensemble")
    p.add_argument("--sweep", nargs="*", default=[], help="Further ensemble directories for the n-sweep")
    p.add_argument("--out-dir", help="Output directory (default: the ensemble directory)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose - args.quiet)
    try:
        return args.func(args)
    except Exception as e:
        code = exit_code_for(e)
        if code == 1:
            raise
        logger.error("%s: %s", type(e).__name__, e)
        return code


if __name__ == "__main__":
    sys.exit(main())
