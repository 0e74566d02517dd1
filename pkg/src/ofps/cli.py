"""Command-line interface: ``ofps <command> ...``.

Commands: ``ofps`` (catalog probe), ``optimize``, ``sweep``, ``curves`` and
``simulate``. Machine-readable files use full double precision; terminal
output is rounded to 6 significant digits. Exit status is 0 on success, 1 when
a requested validation fails and 2 on invalid input.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .bayes import (
    STRATEGIES,
    Instance,
    PhaseGrid,
    TwoStepSchedule,
    best_pc_phase,
    mean_squared_error,
    simulate,
)
from .channels import Transmission, apply_loss
from .fock import DensityMatrix, generator
from .io import (
    RunManifest,
    read_state,
    state_record,
    write_amplitude_csv,
    write_csv,
    write_json,
    write_jsonl,
    write_manifest,
)
from .metrology import cfi, parity_povm, pc_povm, qfi, sldm_povm
from .optimize import CobylaConfig, ProbeSearchProblem, optimize_probe, random_phase_validation, transmission_sweep
from .optimize.probe import default_workers, diagonal_monotonicity
from .probes import OfpsSpec, noiseless_ofps, noiseless_ofps_qfi

log = logging.getLogger("ofps")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2
GRID_ASSUMPTION = "uniform square transmission grid; the 10x10 grid over [0.5, 1]^2 is an assumed reconstruction"


def _g(x: float) -> str:
    return f"{x:.6g}"


def _unit_interval(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"transmission must lie in [0, 1], got {value}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_probe_args(p: argparse.ArgumentParser, allow_file: bool = False):
    p.add_argument("--n", type=int, help="Fock dimension N (largest photon number per mode)")
    p.add_argument("--nbar", type=float, help="mean photon number")
    p.add_argument("--kind", choices=("linear", "nonlinear"), default="linear", help="phase-shift generator")
    if allow_file:
        p.add_argument("--probe", type=Path, help="amplitude JSON written by 'optimize' (overrides --n/--nbar)")


def _add_loss_args(p: argparse.ArgumentParser, default: float = 1.0):
    p.add_argument("--t1", type=_unit_interval, default=default, help="transmission of arm a")
    p.add_argument("--t2", type=_unit_interval, default=default, help="transmission of arm b")


def _add_cobyla_args(p: argparse.ArgumentParser):
    d = CobylaConfig()
    p.add_argument("--restarts", type=_positive_int, default=d.restarts)
    p.add_argument("--max-evals", type=_positive_int, default=d.max_evals)
    p.add_argument("--rho-begin", type=float, default=d.rho_begin)
    p.add_argument("--rho-end", type=float, default=d.rho_end)
    p.add_argument("--tolerance", type=float, default=d.constraint_tolerance, help="constraint tolerance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--complex", action="store_true", help="search over complex coefficients")


def _add_threads(p: argparse.ArgumentParser):
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="worker processes (default: OFPS_THREADS or the CPU count)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ofps", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ofps", help="noiseless optimal probe from the analytic catalog")
    _add_probe_args(p)
    p.add_argument("--phases", type=float, nargs="*", default=(), help="relative phases of the catalog kets")
    p.add_argument("--out", type=Path, help="write the probe as amplitude JSON")

    p = sub.add_parser("optimize", help="maximize the lossy QFI at fixed mean photon number")
    _add_probe_args(p)
    _add_loss_args(p)
    _add_cobyla_args(p)
    _add_threads(p)
    p.add_argument("--validate-phases", type=int, default=0, metavar="TRIALS",
                   help="random-phase validation with this many trials")
    p.add_argument("--out", type=Path, help="output prefix: PREFIX.json and PREFIX_amplitudes.csv")

    p = sub.add_parser("sweep", help="optimized QFI over a grid of transmissions")
    _add_probe_args(p)
    _add_cobyla_args(p)
    _add_threads(p)
    p.add_argument("--grid", help="square grid LO:HI:POINTS, e.g. 0.5:1:10")
    p.add_argument("--points", help="explicit list 'T1,T2;T1,T2;...'")
    p.add_argument("--out", type=Path, required=True, help="output prefix: PREFIX.csv and PREFIX.json")

    p = sub.add_parser("curves", help="QFI and CFI as functions of the phase")
    _add_probe_args(p, allow_file=True)
    _add_loss_args(p)
    p.add_argument("--povm", default="parity,pc",
                   help="comma list of parity, pc, sldm@PHI")
    p.add_argument("--phi-min", type=float, default=0.0)
    p.add_argument("--phi-max", type=float, default=float(np.pi / 2))
    p.add_argument("--phi-points", type=_positive_int, default=201)
    p.add_argument("--out", type=Path, required=True, help="CSV path")

    p = sub.add_parser("simulate", help="Monte-Carlo Bayesian phase estimation")
    _add_probe_args(p, allow_file=True)
    _add_loss_args(p)
    _add_threads(p)
    p.add_argument("--phi-true", type=float, default=0.2)
    p.add_argument("--pre", type=int, default=50, help="particle-counting pre-estimation iterations")
    p.add_argument("--stages", type=_int_list, default=[250, 200], help="SLDM stage iterations, e.g. 250,200")
    p.add_argument("--sims", type=_positive_int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strategy", choices=STRATEGIES, default="two-step")
    p.add_argument("--grid-points", type=_positive_int, default=1000)
    p.add_argument("--out", type=Path, required=True, help="output prefix: PREFIX.jsonl and PREFIX.csv")
    return parser


class UsageError(ValueError):
    pass


def _workers(args) -> int:
    return args.threads if getattr(args, "threads", None) else default_workers()


def _config(args) -> CobylaConfig:
    return CobylaConfig(
        rho_begin=args.rho_begin,
        rho_end=args.rho_end,
        max_evals=args.max_evals,
        constraint_tolerance=args.tolerance,
        restarts=args.restarts,
        seed=args.seed,
    )


def _require_catalog(args):
    if args.n is None or args.nbar is None:
        raise UsageError("--n and --nbar are required")


def _manifest(args, seed=None, assumptions=()) -> RunManifest:
    params = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}
    return RunManifest(args.command, params, seed, __version__, assumptions=list(assumptions))


def _probe_state(args):
    if getattr(args, "probe", None):
        state, _ = read_state(args.probe)
        return state
    _require_catalog(args)
    return noiseless_ofps(OfpsSpec(args.n, args.nbar, args.kind))


def cmd_ofps(args) -> int:
    _require_catalog(args)
    spec = OfpsSpec(args.n, args.nbar, args.kind, tuple(args.phases))
    state = noiseless_ofps(spec)
    value = qfi(DensityMatrix.from_pure(state), generator(spec.N, spec.phase_kind))
    print(f"regime: {spec.regime}")
    for (i, j), c in _nonzero(state):
        print(f"  |{i},{j}>  {_g(c.real)}{'' if c.imag == 0 else f' + {_g(c.imag)}i'}")
    print(f"QFI: {_g(value)}")
    if spec.phase_kind == "linear":
        print(f"closed form: {_g(noiseless_ofps_qfi(spec))}")
    if args.out:
        write_json(args.out, state_record(state, nbar=spec.nbar, kind=spec.phase_kind, qfi=value))
        write_manifest(args.out, _manifest(args))
    return EXIT_OK


def _nonzero(state, tol: float = 1e-12):
    i, j = state.cutoff.occupations()
    for k in np.flatnonzero(np.abs(state.amplitudes) > tol):
        yield (int(i[k]), int(j[k])), state.amplitudes[k]


def cmd_optimize(args) -> int:
    _require_catalog(args)
    problem = ProbeSearchProblem(args.n, args.nbar, Transmission(args.t1, args.t2), args.kind,
                                 coefficients_real=not args.complex)
    config = _config(args)
    result = optimize_probe(problem, config, workers=_workers(args))
    status = EXIT_OK
    record = state_record(
        result.state,
        nbar=problem.nbar,
        kind=problem.phase_kind,
        T1=problem.trans.T1,
        T2=problem.trans.T2,
        qfi=result.qfi,
        converged=result.converged,
        evals=result.evals_used,
        restart_index=result.restart_index,
        seed=result.seed,
        restart_qfis=result.restart_qfis,
    )
    print(f"QFI: {_g(result.qfi)}  (restart {result.restart_index}, converged={result.converged}, "
          f"evals={result.evals_used})")
    if args.validate_phases:
        best, passed = random_phase_validation(result, problem, args.validate_phases, seed=args.seed)
        record["phase_validation"] = {"trials": args.validate_phases, "best_qfi": best, "passed": passed}
        print(f"random-phase validation ({args.validate_phases} trials): best {_g(best)} -> "
              f"{'pass' if passed else 'FAIL'}")
        if not passed:
            status = EXIT_VALIDATION
    if args.out:
        json_path = args.out.with_name(args.out.name + ".json")
        write_json(json_path, record)
        write_amplitude_csv(args.out.with_name(args.out.name + "_amplitudes.csv"), result.state)
        write_manifest(json_path, _manifest(args, args.seed))
    return status


def _parse_grid(args) -> tuple[list[tuple[float, float]], list[str]]:
    if bool(args.grid) == bool(args.points):
        raise UsageError("give exactly one of --grid or --points")
    if args.grid:
        try:
            lo, hi, n = args.grid.split(":")
            lo, hi, n = float(lo), float(hi), int(n)
        except ValueError:
            raise UsageError(f"--grid must look like LO:HI:POINTS, got {args.grid!r}") from None
        if n < 1:
            raise UsageError("--grid needs at least one point")
        ts = np.linspace(lo, hi, n) if n > 1 else np.array([lo])
        grid = [(float(a), float(b)) for a in ts for b in ts]
        assumptions = [GRID_ASSUMPTION]
    else:
        grid = []
        for item in args.points.split(";"):
            if item.strip():
                try:
                    a, b = (float(t) for t in item.split(","))
                except ValueError:
                    raise UsageError(f"bad transmission pair {item!r}") from None
                grid.append((a, b))
        assumptions = []
    if not grid:
        raise UsageError("transmission grid is empty")
    for a, b in grid:
        for t in (a, b):
            _unit_interval(str(t))
    return grid, assumptions


def cmd_sweep(args) -> int:
    _require_catalog(args)
    grid, assumptions = _parse_grid(args)
    template = ProbeSearchProblem(args.n, args.nbar, Transmission.lossless(), args.kind,
                                  coefficients_real=not args.complex)
    rows = transmission_sweep(template, grid, _config(args), workers=_workers(args))
    csv_path = args.out.with_name(args.out.name + ".csv")
    write_csv(csv_path, ["T1", "T2", "qfi", "converged", "seed", "evals"],
              [(r.T1, r.T2, r.qfi, r.converged, r.seed, r.evals) for r in rows])
    points = []
    for r in rows:
        rec = {"T1": r.T1, "T2": r.T2, "qfi": r.qfi, "converged": r.converged, "seed": r.seed,
               "evals": r.evals, "error": r.error}
        if r.state is not None:
            rec.update(state_record(r.state))
        points.append(rec)
    drops = diagonal_monotonicity(rows)
    write_json(args.out.with_name(args.out.name + ".json"),
               {"N": args.n, "nbar": args.nbar, "kind": args.kind, "points": points,
                "diagonal_drops": drops})
    write_manifest(csv_path, _manifest(args, args.seed, assumptions))
    failed = [r for r in rows if r.error]
    print(f"{len(rows)} grid points written to {csv_path} ({len(failed)} failed)")
    if drops:
        print(f"diagonal monotonicity violations: {drops}")
    return EXIT_VALIDATION if failed else EXIT_OK


def _povms(spec: str, rho, gen):
    out = []
    for name in (s.strip() for s in spec.split(",") if s.strip()):
        if name == "parity":
            out.append(("parity", parity_povm(gen.cutoff)))
        elif name == "pc":
            out.append(("pc", pc_povm(gen.cutoff)))
        elif name.startswith("sldm@"):
            phi = float(name[5:])
            out.append((name, sldm_povm(rho, gen, phi)))
        else:
            raise UsageError(f"unknown POVM {name!r}; use parity, pc or sldm@PHI")
    return out


def cmd_curves(args) -> int:
    state = _probe_state(args)
    gen = generator(state.cutoff, args.kind)
    rho = apply_loss(state, Transmission(args.t1, args.t2))
    povms = _povms(args.povm, rho, gen)
    phis = np.linspace(args.phi_min, args.phi_max, args.phi_points)
    f = qfi(rho, gen)
    rows = [[phi, f] + [cfi(rho, gen, phi, p) for _, p in povms] for phi in phis]
    write_csv(args.out, ["phi", "qfi"] + [f"cfi_{n}" for n, _ in povms], rows)
    write_manifest(args.out, _manifest(args))
    print(f"QFI: {_g(f)}")
    for k, (name, _) in enumerate(povms):
        col = np.array([r[2 + k] for r in rows])
        print(f"max CFI {name}: {_g(col.max())} at phi={_g(phis[int(np.argmax(col))])}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    state = _probe_state(args)
    gen = generator(state.cutoff, args.kind)
    rho = apply_loss(state, Transmission(args.t1, args.t2))
    instance = Instance(rho, gen)
    stages = tuple(args.stages)
    schedule = TwoStepSchedule(args.pre, stages, args.pre + sum(stages), args.sims)
    grid = PhaseGrid(0.0, float(np.pi / 6), args.grid_points)
    trajectories = simulate(instance, args.phi_true, schedule, args.seed, args.strategy, grid,
                            workers=_workers(args))

    jsonl = args.out.with_name(args.out.name + ".jsonl")
    write_jsonl(jsonl, (
        {"sim_id": s, "iter": it, "stage": stage, "estimate": est, "variance": var, "sq_error": err}
        for s, t in enumerate(trajectories)
        for it, stage, est, var, err in t.records
    ))
    f = qfi(rho, gen)
    _, best_pc = best_pc_phase(instance)
    mse = mean_squared_error(trajectories)
    mean_est = np.stack([t.estimates() for t in trajectories]).mean(axis=0)
    iters = np.arange(1, mse.size + 1)
    csv_path = args.out.with_name(args.out.name + ".csv")
    write_csv(csv_path, ["iter", "mean_sq_error", "mean_estimate", "crb_qfi", "crb_best_cfi"],
              zip(iters.tolist(), mse.tolist(), mean_est.tolist(), (1 / (iters * f)).tolist(),
                  (1 / (iters * best_pc)).tolist()))
    write_manifest(csv_path, _manifest(args, args.seed))
    print(f"{args.strategy}: {args.sims} trajectories, QFI {_g(f)}, best PC CFI {_g(best_pc)}")
    if mse.size:
        print(f"final MSE {_g(mse[-1])}  vs 1/(mu F) {_g(1 / (mse.size * f))}  "
              f"(ratio {_g(mse[-1] * mse.size * f)})")
    return EXIT_OK


COMMANDS = {
    "ofps": cmd_ofps,
    "optimize": cmd_optimize,
    "sweep": cmd_sweep,
    "curves": cmd_curves,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"ofps {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
