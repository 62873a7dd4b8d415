"""Reproducible waterflood inversion cases and evaluation metrics.

Two well layouts are provided, both flooding from the left edge to the right
edge of a square grid: layout A is a line drive with an injector port in
every left-edge cell and a producer port in every right-edge cell; layout B
has 4 injectors and 6 producers spread along those edges. Full scale is the
32x32 grid with 10 m cells; desk scale keeps the layout proportions on a
16x16 grid so that finite-difference Jacobians stay affordable.

Truth fields are synthetic channelized permeability maps (high-permeability
sinuous bands over a uniform background); all recovery claims are measured
against these generated truths with the metrics in :class:`EvalReport`.
"""

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .forward_models import (
    GridGeometry,
    LinearModel,
    ObservationSet,
    RockFluidProps,
    Schedule,
    TwoPhaseModel,
    WellSpec,
    run_waterflood,
)
from .irls import SolverConfig, run_additive, run_multiplicative
from .transform import DctBasis

__all__ = [
    "ChannelSpec",
    "NoiseSpec",
    "EvalReport",
    "ExperimentCase",
    "CaseResult",
    "ReservoirConfig",
    "build_reservoir",
    "make_channel_field",
    "add_noise",
    "observation_scale",
    "evaluate",
    "run_case",
    "sweep_p",
    "CsInstance",
    "make_cs_instance",
    "run_linear_case",
]

SWEEP_P_VALUES = (0.0, 0.5, 1.0, 1.5, 2.0)


@dataclass(frozen=True)
class ReservoirConfig:
    """Complete forward configuration for one reservoir case."""

    name: str
    scale: str
    geometry: GridGeometry
    props: RockFluidProps
    wells: tuple
    schedule: Schedule

    @property
    def n_observations(self):
        n_inj = sum(1 for w in self.wells if w.kind == "injector")
        n_prod = sum(1 for w in self.wells if w.kind == "producer")
        return len(self.schedule.report_days) * (n_inj + 2 * n_prod)

    @property
    def pore_volume(self):
        return self.geometry.n_cells * self.geometry.cell_volume * self.props.porosity


def _edge_rows(ny, count):
    """Rows for `count` wells spread evenly along one edge of ny cells."""
    return [int((k + 0.5) * ny / count) for k in range(count)]


def build_reservoir(case="A", scale="full", injection_pv=1.0, props=None):
    """Reservoir A (line drive, 32+32 ports) or B (4+6 wells) configurations.

    Full scale: 32x32 grid of 10 m cells, porosity 0.20, initial oil
    saturation 0.90, one pore volume injected over a one-year schedule with
    30 evenly spaced report times. Desk scale: identical layout proportions
    and schedule on a 16x16 grid. ``injection_pv`` rescales the injected
    volume (0 gives a no-flow configuration).
    """
    if case not in ("A", "B"):
        raise ValueError(f"reservoir case must be A or B, got {case!r}")
    if scale not in ("full", "desk"):
        raise ValueError(f"scale must be full or desk, got {scale!r}")
    n = 32 if scale == "full" else 16
    geometry = GridGeometry(nx=n, ny=n, dx=10.0, dy=10.0, dz=10.0)
    props = props or RockFluidProps()
    total_days = 365.0
    pore_volume = geometry.n_cells * geometry.cell_volume * props.porosity
    total_rate = injection_pv * pore_volume / total_days  # m3/day

    if case == "A":
        inj_rows = list(range(n))
        prod_rows = list(range(n))
    else:
        inj_rows = _edge_rows(n, 4)
        prod_rows = _edge_rows(n, 6)

    wells = []
    for k, j in enumerate(inj_rows):
        wells.append(
            WellSpec(0, j, "injector", total_rate / len(inj_rows), name=f"I{k}")
        )
    for k, j in enumerate(prod_rows):
        wells.append(
            WellSpec(n - 1, j, "producer", total_rate / len(prod_rows), name=f"P{k}")
        )
    schedule = Schedule.uniform(total_days, 30)
    return ReservoirConfig(case, scale, geometry, props, tuple(wells), schedule)


@dataclass(frozen=True)
class ChannelSpec:
    """Shape parameters for synthetic channel truth fields.

    ``width`` is the band thickness in cells (0 gives a uniform field);
    ``amplitude_fraction`` scales the sinuosity amplitude relative to the
    grid height; ``cycles`` bounds the number of meander periods across the
    domain.
    """

    count: int = 2
    width: float = 3.0
    amplitude_fraction: float = 0.15
    cycles: tuple = (0.6, 1.4)

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("channel count must be >= 0")
        if self.width < 0:
            raise ValueError("channel width must be >= 0")


def make_channel_field(geometry, background_md=20.0, channel_md=200.0, spec=None, seed=0):
    """Deterministic channelized permeability field (mD) on the given grid.

    Draws ``spec.count`` sinuous left-to-right bands of ``spec.width`` cells
    at ``channel_md`` over a uniform ``background_md``. The same seed always
    produces the same field.
    """
    spec = spec or ChannelSpec()
    if not 0 < background_md < channel_md:
        raise ValueError("need channel_md > background_md > 0")
    if spec.width >= min(geometry.nx, geometry.ny):
        raise ValueError(
            f"channel width {spec.width} does not fit the {geometry.nx}x{geometry.ny} grid"
        )
    field_md = np.full((geometry.ny, geometry.nx), float(background_md))
    if spec.width == 0 or spec.count == 0:
        return field_md
    rng = np.random.default_rng(seed)
    x = (np.arange(geometry.nx) + 0.5) / geometry.nx
    rows = (np.arange(geometry.ny) + 0.5)[:, None]
    half = spec.width / 2.0
    for _ in range(spec.count):
        y0 = rng.uniform(0.2, 0.8) * geometry.ny
        amp = spec.amplitude_fraction * geometry.ny * rng.uniform(0.5, 1.5)
        cyc = rng.uniform(*spec.cycles)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        center = y0 + amp * np.sin(2.0 * np.pi * cyc * x + phase)
        center = np.clip(center, half, geometry.ny - half)
        mask = np.abs(rows - center[None, :]) < half
        field_md[mask] = channel_md
    return field_md


@dataclass(frozen=True)
class NoiseSpec:
    """Observation noise: none, or zero-mean gaussian scaled per quantity.

    ``level`` is the noise standard deviation as a fraction of the clean
    signal's standard deviation within each quantity class (pressure,
    saturation), so unit choices do not change the signal-to-noise ratio.
    """

    kind: str = "none"
    level: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian"):
            raise ValueError(f"noise kind must be none or gaussian, got {self.kind!r}")
        if self.level < 0:
            raise ValueError("noise level must be >= 0")


def add_noise(observations, spec):
    """Gaussian per-quantity-class noise; deterministic in the seed."""
    values = observations.values.copy()
    if spec.kind == "none" or spec.level == 0.0:
        return ObservationSet(values, list(observations.index))
    rng = np.random.default_rng(spec.seed)
    seen = []
    for (_, _, q) in observations.index:
        if q not in seen:
            seen.append(q)
    for q in seen:
        mask = observations.quantity_mask(q)
        std = float(np.std(values[mask]))
        if std > 0:
            values[mask] += rng.normal(0.0, spec.level * std, int(mask.sum()))
    return ObservationSet(values, list(observations.index))


def observation_scale(observations):
    """Diagonal scaling that equilibrates quantity classes to unit spread.

    Pressures and saturations enter the misfit in incomparable units; the
    inversion therefore works on observations divided by the per-class
    standard deviation of the observed data (a fixed, deterministic vector).
    Classes with zero spread keep scale 1.
    """
    scale = np.ones(len(observations))
    seen = []
    for (_, _, q) in observations.index:
        if q not in seen:
            seen.append(q)
    for q in seen:
        mask = observations.quantity_mask(q)
        std = float(np.std(observations.values[mask]))
        if std > 1e-300:
            scale[mask] = 1.0 / std
    return scale


@dataclass
class EvalReport:
    """Recovery metrics against a known truth field.

    ``correlation`` is the Pearson coefficient, guarded to 0 when either
    field has zero variance. ``support_overlap`` compares the top-5% DCT
    coefficient index sets of estimate and truth.
    """

    relative_l2_error: float
    correlation: float
    support_overlap: float
    misfit_ratio: float = None
    iterations: int = None


def _top_support(coeffs, k):
    order = np.argsort(-np.abs(coeffs), kind="stable")
    return set(int(i) for i in order[:k])


def evaluate(m_final, truth, basis, records=None, top_fraction=0.05):
    """Score an estimate against the truth field (both in the same units)."""
    est = np.asarray(m_final, dtype=float).ravel()
    tru = np.asarray(truth, dtype=float).ravel()
    if est.size != tru.size:
        raise ValueError("estimate and truth sizes differ")
    denom = np.linalg.norm(tru)
    rel = float(np.linalg.norm(est - tru) / denom) if denom > 0 else float(
        np.linalg.norm(est)
    )
    if np.std(est) < 1e-300 or np.std(tru) < 1e-300:
        corr = 0.0
    else:
        corr = float(np.corrcoef(est, tru)[0, 1])
    k = int(math.ceil(top_fraction * est.size))
    ov = len(
        _top_support(basis.analysis_flat(est), k) & _top_support(basis.analysis_flat(tru), k)
    ) / k
    report = EvalReport(rel, corr, float(ov))
    if records:
        report.misfit_ratio = records[-1].misfit / max(records[0].misfit, 1e-300)
        report.iterations = records[-1].iteration
    return report


@dataclass(frozen=True)
class ExperimentCase:
    """One reproducible inversion experiment, fully determined by its fields."""

    reservoir: str = "A"
    scale: str = "desk"
    p: float = 1.0
    mode: str = "multiplicative"
    alpha: float = None
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0
    # plain permeability, not log: the multiplicative objective needs the
    # physical barrier (misfit grows as k -> 0 faster than the penalty
    # shrinks) to avoid its degenerate zero-field minimum
    param_space: str = "permeability"
    max_iterations: int = 30
    misfit_tolerance: float = 1e-4
    epsilon_floor: float = 1e-8
    initial_perm_md: float = 20.0
    background_md: float = 20.0
    channel_md: float = 200.0
    channel_count: int = 2
    channel_width: float = 3.0
    injection_pv: float = 1.0
    pressure_steps_per_interval: int = 1
    fd_scheme: str = "forward"
    fd_rel_step: float = 1e-6
    n_jobs: int = None


@dataclass
class CaseResult:
    """Everything produced by one experiment run."""

    case: ExperimentCase
    truth_md: np.ndarray
    m_final_md: np.ndarray
    records: list
    report: EvalReport
    observations: ObservationSet


def _default_truth(case, geometry):
    spec = ChannelSpec(count=case.channel_count, width=case.channel_width)
    return make_channel_field(
        geometry, case.background_md, case.channel_md, spec, seed=case.seed
    )


def run_case(case, truth_md=None, observations=None, out_dir=None):
    """Run one experiment end to end; returns a :class:`CaseResult`.

    Builds the reservoir, simulates the truth field, adds noise, equilibrates
    quantity classes, then inverts with the configured IRLS driver starting
    from a homogeneous ``initial_perm_md`` guess. The comparison metrics are
    computed in log10-permeability (the inversion's parameter scale).
    Artifacts are persisted under ``out_dir`` when given; on solver failure
    the partial iteration trace is saved before re-raising.
    """
    res = build_reservoir(case.reservoir, case.scale, injection_pv=case.injection_pv)
    geometry, props, wells, schedule = res.geometry, res.props, res.wells, res.schedule
    if truth_md is None:
        truth_md = _default_truth(case, geometry)
    truth_md = np.asarray(truth_md, dtype=float)
    if observations is None:
        clean, _ = _simulate_case(truth_md, res, case)
        observations = add_noise(clean, case.noise)
    scale = observation_scale(observations)
    y = observations.values * scale

    basis = DctBasis(geometry.nx, geometry.ny)
    n_jobs = case.n_jobs if case.n_jobs is not None else (os.cpu_count() or 1)
    model = TwoPhaseModel(
        geometry,
        props,
        wells,
        schedule,
        param_space=case.param_space,
        obs_scale=scale,
        pressure_steps_per_interval=case.pressure_steps_per_interval,
        fd_rel_step=case.fd_rel_step,
        fd_scheme=case.fd_scheme,
        n_jobs=n_jobs,
    )
    m0 = model.parameters_from_perm(
        np.full(geometry.n_cells, float(case.initial_perm_md))
    )
    config = SolverConfig(
        p=case.p,
        mode=case.mode,
        alpha=case.alpha,
        max_iterations=case.max_iterations,
        misfit_tolerance=case.misfit_tolerance,
        epsilon_floor=case.epsilon_floor,
        param_space=case.param_space,
    )
    driver = run_additive if case.mode == "additive" else run_multiplicative
    try:
        m_final, records = driver(model, basis, y, m0, config)
    except Exception as exc:
        if out_dir is not None and getattr(exc, "records", None):
            _persist(out_dir, case, res, truth_md, None, exc.records, None, observations)
        raise
    m_final_md = model.perm_from_parameters(m_final)
    report = evaluate(
        np.log10(m_final_md), np.log10(truth_md), basis, records=records
    )
    result = CaseResult(case, truth_md, m_final_md, records, report, observations)
    if out_dir is not None:
        _persist(out_dir, case, res, truth_md, m_final_md, records, report, observations)
    return result


def _simulate_case(truth_md, res, case):
    result = run_waterflood(
        truth_md,
        res.geometry,
        res.props,
        res.wells,
        res.schedule,
        pressure_steps_per_interval=case.pressure_steps_per_interval,
    )
    return result.observations, result.snapshots


def _persist(out_dir, case, res, truth_md, m_final_md, records, report, observations):
    from . import fileio

    os.makedirs(out_dir, exist_ok=True)
    g = res.geometry
    fileio.write_grid(os.path.join(out_dir, "truth.txt"), truth_md, g, "mD")
    if m_final_md is not None:
        fileio.write_grid(os.path.join(out_dir, "m_final.txt"), m_final_md, g, "mD")
    fileio.write_iteration_log(os.path.join(out_dir, "iterations.csv"), records)
    fileio.write_observations(os.path.join(out_dir, "observations.txt"), observations)
    if report is not None:
        fileio.write_eval_report(os.path.join(out_dir, "eval.txt"), report)


def sweep_p(case, p_values=SWEEP_P_VALUES, out_dir=None):
    """Run the same case for several p values, sharing truth, noise and m0.

    Returns ``[(p, CaseResult), ...]`` in the order given. Artifacts land in
    per-p subdirectories of ``out_dir`` when persisting.
    """
    res = build_reservoir(case.reservoir, case.scale, injection_pv=case.injection_pv)
    truth_md = _default_truth(case, res.geometry)
    clean, _ = _simulate_case(truth_md, res, case)
    observations = add_noise(clean, case.noise)
    results = []
    for p in p_values:
        sub = replace(case, p=float(p))
        sub_dir = None if out_dir is None else os.path.join(out_dir, f"p_{p:g}")
        results.append(
            (float(p), run_case(sub, truth_md=truth_md, observations=observations, out_dir=sub_dir))
        )
    return results


# ---------------------------------------------------------------------------
# linear compressed-sensing tier


@dataclass
class CsInstance:
    """Random sparse-recovery instance: y = A m with m sparse in the DCT."""

    sensing_matrix: np.ndarray
    basis: DctBasis
    coeffs_true: np.ndarray
    support_true: tuple
    m_true: np.ndarray
    y: np.ndarray


def make_cs_instance(seed, n_grid=8, sparsity=4, n_measurements=24, coeff_range=(1.0, 2.0)):
    """Gaussian sensing of a field with ``sparsity`` nonzero DCT coefficients."""
    rng = np.random.default_rng(seed)
    basis = DctBasis(n_grid, n_grid)
    n = basis.n
    support = np.sort(rng.choice(n, size=sparsity, replace=False))
    coeffs = np.zeros(n)
    coeffs[support] = rng.uniform(*coeff_range, size=sparsity) * rng.choice(
        [-1.0, 1.0], size=sparsity
    )
    m_true = basis.synthesis_flat(coeffs)
    sensing = rng.standard_normal((n_measurements, n))
    y = sensing @ m_true
    return CsInstance(sensing, basis, coeffs, tuple(int(i) for i in support), m_true, y)


def run_linear_case(
    seed,
    p=1.0,
    mode="multiplicative",
    alpha=None,
    n_grid=8,
    sparsity=4,
    n_measurements=24,
    max_iterations=150,
    epsilon_floor=1e-12,
    misfit_tolerance=1e-6,
):
    """Sparse recovery on one random linear instance.

    The initial guess is half the minimum-norm least-squares solution: close
    enough to the data for the adaptive weights to engage, but not an exact
    fit (which would stop the driver immediately). Returns
    ``(CsInstance, m_final, records, EvalReport)`` where the report compares
    the recovered field against the planted truth.
    """
    inst = make_cs_instance(seed, n_grid, sparsity, n_measurements)
    model = LinearModel(inst.sensing_matrix)
    a = inst.sensing_matrix
    m0 = 0.5 * (a.T @ np.linalg.solve(a @ a.T, inst.y))
    config = SolverConfig(
        p=p,
        mode=mode,
        alpha=alpha,
        max_iterations=max_iterations,
        misfit_tolerance=misfit_tolerance,
        epsilon_floor=epsilon_floor,
        param_space="linear",
    )
    driver = run_additive if mode == "additive" else run_multiplicative
    m_final, records = driver(model, inst.basis, inst.y, m0, config)
    grid_shape = (inst.basis.ny, inst.basis.nx)
    report = evaluate(
        m_final.reshape(grid_shape),
        inst.m_true.reshape(grid_shape),
        inst.basis,
        records=records,
        top_fraction=sparsity / inst.basis.n,
    )
    return inst, m_final, records, report
