"""Command-line surface: simulate, invert, sweep, truncate-demo, gradcheck.

Exit codes: 0 success, 1 runtime failure (solver or simulation), 2 usage
error (bad flags, malformed or missing inputs). All commands are
deterministic given their flags and seeds, and rerunning overwrites outputs
byte-identically.
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import experiments, fileio
from .forward_models import (
    GridGeometry,
    RockFluidProps,
    SinglePhaseModel,
    SolverFailure,
    WellSpec,
    run_waterflood,
)
from .irls import SolverConfig, run_additive, run_multiplicative
from .sensitivity import jacobian_adjoint_single_phase, jacobian_fd, jacobian_linear
from .transform import DctBasis, truncate_top_fraction

__all__ = ["main"]


class UsageError(Exception):
    """Invalid flags, configs or input files; maps to exit code 2."""


_CASE_KEYS = {
    "reservoir": str,
    "scale": str,
    "p": float,
    "mode": str,
    "alpha": float,
    "max_iterations": int,
    "misfit_tolerance": float,
    "epsilon_floor": float,
    "param_space": str,
    "seed": int,
    "noise_kind": str,
    "noise_level": float,
    "noise_seed": int,
    "initial_perm_md": float,
    "background_md": float,
    "channel_md": float,
    "channel_count": int,
    "channel_width": float,
    "injection_pv": float,
    "pressure_steps_per_interval": int,
    "fd_scheme": str,
    "fd_rel_step": float,
    "n_jobs": int,
}


def _load_config(path):
    if not os.path.isfile(path):
        raise UsageError(f"config file not found: {path}")
    try:
        raw = fileio.parse_config(path)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    unknown = set(raw) - set(_CASE_KEYS)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    cfg = {}
    for key, value in raw.items():
        try:
            cfg[key] = _CASE_KEYS[key](value)
        except ValueError as exc:
            raise UsageError(f"config key {key!r}: {exc}") from exc
    return cfg


def _case_from_config(cfg):
    noise = experiments.NoiseSpec(
        kind=cfg.pop("noise_kind", "none"),
        level=cfg.pop("noise_level", 0.0),
        seed=cfg.pop("noise_seed", 0),
    )
    try:
        return experiments.ExperimentCase(noise=noise, **cfg)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid case configuration: {exc}") from exc


def _validate_case(case):
    if not 0.0 <= case.p <= 2.0:
        raise UsageError(f"p must be in [0, 2], got {case.p}")
    if case.mode not in ("additive", "multiplicative"):
        raise UsageError(f"mode must be additive or multiplicative, got {case.mode!r}")
    if case.mode == "additive" and case.alpha is None:
        raise UsageError("additive mode requires --alpha (or alpha in the config)")
    if case.reservoir not in ("A", "B"):
        raise UsageError(f"reservoir must be A or B, got {case.reservoir!r}")
    if case.scale not in ("desk", "full"):
        raise UsageError(f"scale must be desk or full, got {case.scale!r}")


def _read_grid(path):
    if not os.path.isfile(path):
        raise UsageError(f"grid file not found: {path}")
    try:
        return fileio.read_grid(path)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _check_grid_matches(field, geometry, path):
    if field.shape != (geometry.ny, geometry.nx):
        raise UsageError(
            f"{path}: grid is {field.shape[1]}x{field.shape[0]}, "
            f"config expects {geometry.nx}x{geometry.ny}"
        )


def cmd_simulate(args):
    cfg = _load_config(args.config)
    case = _case_from_config(cfg)
    _validate_case(case)
    res = experiments.build_reservoir(case.reservoir, case.scale, injection_pv=case.injection_pv)
    truth, _, _ = _read_grid(args.truth)
    _check_grid_matches(truth, res.geometry, args.truth)

    result = run_waterflood(
        truth,
        res.geometry,
        res.props,
        res.wells,
        res.schedule,
        pressure_steps_per_interval=case.pressure_steps_per_interval,
    )
    observations = experiments.add_noise(result.observations, case.noise)

    os.makedirs(args.out, exist_ok=True)
    fileio.write_observations(os.path.join(args.out, "observations.txt"), observations)
    for k, snap in enumerate(result.snapshots):
        tag = f"{k:03d}"
        fileio.write_grid(
            os.path.join(args.out, f"pressure_{tag}.txt"), snap.pressure, res.geometry, "Pa"
        )
        fileio.write_grid(
            os.path.join(args.out, f"saturation_{tag}.txt"),
            snap.water_saturation,
            res.geometry,
            "fraction",
        )
    print(
        f"wrote {len(observations)} observations and {len(result.snapshots)} snapshots "
        f"to {args.out} (mass balance error {result.mass_balance_error:.3e})"
    )
    return 0


def cmd_invert(args):
    cfg = _load_config(args.config)
    for key, value in (
        ("p", args.p),
        ("mode", args.mode),
        ("alpha", args.alpha),
        ("max_iterations", args.max_iter),
        ("seed", args.seed),
    ):
        if value is not None:
            cfg[key] = value
    case = _case_from_config(cfg)
    _validate_case(case)
    res = experiments.build_reservoir(case.reservoir, case.scale, injection_pv=case.injection_pv)
    if not os.path.isfile(args.obs):
        raise UsageError(f"observation file not found: {args.obs}")
    try:
        observations = fileio.read_observations(args.obs)
    except ValueError as exc:
        raise UsageError(f"{args.obs}: {exc}") from exc
    if len(observations) != res.n_observations:
        raise UsageError(
            f"{args.obs}: {len(observations)} observations, config expects "
            f"{res.n_observations}"
        )
    truth = None
    if args.truth:
        truth, _, _ = _read_grid(args.truth)
        _check_grid_matches(truth, res.geometry, args.truth)

    os.makedirs(args.out, exist_ok=True)
    try:
        result = experiments.run_case(case, truth_md=truth, observations=observations)
    except SolverFailure as exc:
        if getattr(exc, "records", None):
            fileio.write_iteration_log(os.path.join(args.out, "iterations.csv"), exc.records)
        raise
    fileio.write_grid(
        os.path.join(args.out, "m_final.txt"), result.m_final_md, res.geometry, "mD"
    )
    fileio.write_iteration_log(os.path.join(args.out, "iterations.csv"), result.records)
    if truth is not None:
        basis = DctBasis(res.geometry.nx, res.geometry.ny)
        report = experiments.evaluate(
            np.log10(result.m_final_md), np.log10(truth), basis, records=result.records
        )
        fileio.write_eval_report(os.path.join(args.out, "eval.txt"), report)
    final = result.records[-1]
    print(
        f"inversion finished after {final.iteration} iterations; "
        f"misfit {final.misfit:.6e} ({final.misfit / max(result.records[0].misfit, 1e-300):.3%} "
        f"of initial); artifacts in {args.out}"
    )
    return 0


def cmd_sweep(args):
    cfg = _load_config(args.case)
    case = _case_from_config(cfg)
    _validate_case(case)
    os.makedirs(args.out, exist_ok=True)
    results = experiments.sweep_p(case, out_dir=args.out)
    rows = []
    for p, result in results:
        rows.append(
            [
                float(p),
                float(result.records[-1].misfit),
                float(result.report.correlation),
                float(result.report.support_overlap),
            ]
        )
    fileio.write_summary(
        os.path.join(args.out, "summary.csv"),
        ["p", "final_misfit", "correlation", "support_overlap"],
        rows,
    )
    for row in rows:
        print(
            f"p={row[0]:g}: final misfit {row[1]:.6e}, correlation {row[2]:.3f}, "
            f"overlap {row[3]:.3f}"
        )
    return 0


def cmd_truncate_demo(args):
    if not 0.0 < args.fraction <= 1.0:
        raise UsageError(f"fraction must be in (0, 1], got {args.fraction}")
    field, (dx, dy, dz), units = _read_grid(args.field)
    ny, nx = field.shape
    basis = DctBasis(nx, ny)
    coeffs = basis.analysis(field)
    truncated = basis.synthesis(truncate_top_fraction(coeffs, args.fraction))
    denom = np.linalg.norm(field)
    rel_error = float(np.linalg.norm(truncated - field) / denom) if denom > 0 else 0.0
    kept = int(np.ceil(args.fraction * basis.n))
    print(
        f"kept {kept}/{basis.n} largest-magnitude coefficients "
        f"(fraction {args.fraction:g}); relative L2 reconstruction error {rel_error:.6e}"
    )
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        geometry = GridGeometry(nx, ny, dx, dy, dz)
        fileio.write_grid(os.path.join(args.out, "truncated.txt"), truncated, geometry, units)
        with open(os.path.join(args.out, "truncation_report.txt"), "w") as fh:
            fh.write("# DCT truncation report\n")
            fh.write(f"fraction = {args.fraction:.17g}\n")
            fh.write(f"kept_coefficients = {kept}\n")
            fh.write(f"relative_l2_error = {rel_error:.17g}\n")
    return 0


def _gradcheck_instance(nx, ny, seed, n_wells=4):
    rng = np.random.default_rng(seed)
    geometry = GridGeometry(nx, ny)
    props = RockFluidProps()
    perm = 10.0 ** rng.uniform(1.0, 2.5, size=(ny, nx))
    cells = rng.choice(geometry.n_cells, size=n_wells, replace=False)
    rate = 50.0
    wells = []
    for k, cell in enumerate(cells):
        kind = "injector" if k % 2 == 0 else "producer"
        wells.append(WellSpec(int(cell % nx), int(cell // nx), kind, rate))
    return perm, geometry, props, wells


def cmd_gradcheck(args):
    cfg = _load_config(args.config) if args.config else {}
    seed = cfg.get("seed", 0)
    rng = np.random.default_rng(seed)

    # linear tier: FD must recover the sensing matrix almost exactly
    a = rng.standard_normal((6, 9))
    from .forward_models import LinearModel

    linear_fd = jacobian_fd(LinearModel(a), rng.standard_normal(9), rel_step=1e-6)
    lin_err = np.linalg.norm(linear_fd.entries - a) / np.linalg.norm(a)
    print(f"linear tier: FD vs exact Jacobian, relative error {lin_err:.3e}")

    # single-phase tier: adjoint vs central FD, plus step-halving ratio
    perm, geometry, props, wells = _gradcheck_instance(8, 8, seed)
    model = SinglePhaseModel(geometry, props, wells)
    adj = jacobian_adjoint_single_phase(perm, geometry, props, wells)
    fd = jacobian_fd(model, perm.ravel(), rel_step=1e-3)
    denom = np.linalg.norm(adj.entries)
    err = np.linalg.norm(fd.entries - adj.entries) / denom
    print(f"single-phase tier: adjoint vs FD relative Frobenius error {err:.3e}")

    fd_big = jacobian_fd(model, perm.ravel(), rel_step=2e-2)
    fd_half = jacobian_fd(model, perm.ravel(), rel_step=1e-2)
    ratio = np.linalg.norm(fd_big.entries - adj.entries) / np.linalg.norm(
        fd_half.entries - adj.entries
    )
    print(f"step-halving error ratio {ratio:.2f} (expected near 4 for central FD)")

    ok = lin_err < 1e-8 and err < 1e-5 and 3.0 <= ratio <= 5.0
    print("gradcheck " + ("PASS" if ok else "FAIL"))
    return 0 if ok else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sparseflood",
        description=(
            "Reconstruct permeability fields from waterflood well data by "
            "iteratively reweighted Gauss-Newton with DCT-domain sparsity "
            "regularization."
        ),
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run the waterflood forward model")
    p_sim.add_argument("config", help="case config file (key = value)")
    p_sim.add_argument("truth", help="permeability grid file (mD)")
    p_sim.add_argument("out", help="output directory")
    p_sim.set_defaults(func=cmd_simulate)

    p_inv = sub.add_parser("invert", help="reconstruct permeability from observations")
    p_inv.add_argument("config", help="case config file")
    p_inv.add_argument("obs", help="observation file")
    p_inv.add_argument("out", help="output directory")
    p_inv.add_argument("--p", type=float, default=None, help="penalty exponent in [0, 2]")
    p_inv.add_argument("--mode", choices=["additive", "multiplicative"], default=None)
    p_inv.add_argument("--alpha", type=float, default=None, help="additive regularization weight")
    p_inv.add_argument("--max-iter", type=int, default=None, dest="max_iter")
    p_inv.add_argument("--seed", type=int, default=None)
    p_inv.add_argument("--truth", default=None, help="truth grid for evaluation metrics")
    p_inv.set_defaults(func=cmd_invert)

    p_sweep = sub.add_parser("sweep", help="run the p-exponent sweep on one case")
    p_sweep.add_argument("case", help="case config file")
    p_sweep.add_argument("out", help="output directory")
    p_sweep.set_defaults(func=cmd_sweep)

    p_trunc = sub.add_parser("truncate-demo", help="DCT compaction demo on a grid file")
    p_trunc.add_argument("field", help="grid file")
    p_trunc.add_argument("fraction", type=float, help="fraction of coefficients to keep")
    p_trunc.add_argument("--out", default=None, help="optional output directory")
    p_trunc.set_defaults(func=cmd_truncate_demo)

    p_grad = sub.add_parser("gradcheck", help="adjoint-vs-FD gradient verification report")
    p_grad.add_argument("config", nargs="?", default=None, help="optional config with seed")
    p_grad.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SolverFailure, ValueError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
