"""Flow forward models mapping permeability fields to well observations.

Three tiers share one observation interface:

* a linear sensing model (matrix times parameters), used as an exactly
  verifiable oracle tier;
* a steady incompressible single-phase Darcy pressure solver, small enough
  for adjoint gradient verification;
* a two-phase (oil/water) immiscible waterflood simulator using IMPES
  (implicit pressure, explicit saturation) with upstream mobility weighting
  and automatic CFL sub-stepping.

Conventions
-----------
Permeability fields are stored in millidarcy (mD) as ``(ny, nx)`` arrays and
converted to SI internally (1 mD = 9.869233e-16 m^2). Pressures are in Pa and
gauge-relative: the single-phase solver pins cell (0, 0) to zero; the
two-phase simulator reports zero-mean pressure fields. Well rates are total
volumetric rates in m^3/day. Cells are addressed by ``(i, j)`` with ``i``
along x and ``j`` along y; the flat cell index is ``j*nx + i``.

Transmissibilities use the harmonic mean of cell permeabilities at faces.
There is no gravity, capillary pressure, or compressibility (2D horizontal
slab). Forward evaluations are pure functions of (parameters, config), so
callers may evaluate many parameter vectors concurrently.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solveh_banded

__all__ = [
    "MD_TO_M2",
    "SECONDS_PER_DAY",
    "GridGeometry",
    "RockFluidProps",
    "WellSpec",
    "Schedule",
    "ObservationSet",
    "StateSnapshot",
    "SolverFailure",
    "LinearModel",
    "SinglePhaseModel",
    "TwoPhaseResult",
    "simulate_linear",
    "solve_single_phase",
    "simulate_two_phase",
    "run_waterflood",
    "extract_observations",
    "validate_wells",
]

logger = logging.getLogger(__name__)

MD_TO_M2 = 9.869233e-16
SECONDS_PER_DAY = 86400.0


class SolverFailure(RuntimeError):
    """A linear solve or time step failed; carries whatever diagnostics help."""


@dataclass(frozen=True)
class GridGeometry:
    """Uniform 2D cell-centered grid; sizes in meters."""

    nx: int
    ny: int
    dx: float = 10.0
    dy: float = 10.0
    dz: float = 10.0

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"cell counts must be positive, got {self.nx}x{self.ny}")
        if min(self.dx, self.dy, self.dz) <= 0:
            raise ValueError("cell sizes must be positive")

    @property
    def n_cells(self):
        return self.nx * self.ny

    @property
    def cell_volume(self):
        return self.dx * self.dy * self.dz

    def cell_index(self, i, j):
        if not (0 <= i < self.nx and 0 <= j < self.ny):
            raise ValueError(f"cell ({i}, {j}) outside {self.nx}x{self.ny} grid")
        return j * self.nx + i


@dataclass(frozen=True)
class RockFluidProps:
    """Rock and fluid properties with quadratic Corey relative permeabilities.

    Defaults: porosity 0.20, water viscosity 1.0 mPa.s, oil viscosity
    5.0 mPa.s, connate water 0.10 (so initial oil saturation is 0.90) and
    residual oil 0.10.
    """

    porosity: float = 0.20
    water_viscosity: float = 1.0e-3
    oil_viscosity: float = 5.0e-3
    initial_water_saturation: float = 0.10
    residual_water_saturation: float = 0.10
    residual_oil_saturation: float = 0.10
    water_exponent: float = 2.0
    oil_exponent: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.porosity < 1.0:
            raise ValueError(f"porosity must be in (0, 1), got {self.porosity}")
        if min(self.water_viscosity, self.oil_viscosity) <= 0:
            raise ValueError("viscosities must be positive")
        swc, sor = self.residual_water_saturation, self.residual_oil_saturation
        if not (0 <= swc < 1 and 0 <= sor < 1 and swc + sor < 1):
            raise ValueError("residual saturations must leave a mobile range")
        if not swc <= self.initial_water_saturation <= 1 - sor:
            raise ValueError("initial water saturation outside mobile bounds")

    @property
    def mobile_range(self):
        return 1.0 - self.residual_water_saturation - self.residual_oil_saturation

    def _effective(self, sw):
        se = (np.asarray(sw, dtype=float) - self.residual_water_saturation) / self.mobile_range
        return np.clip(se, 0.0, 1.0)

    def krw(self, sw):
        return self._effective(sw) ** self.water_exponent

    def kro(self, sw):
        return (1.0 - self._effective(sw)) ** self.oil_exponent

    def water_mobility(self, sw):
        return self.krw(sw) / self.water_viscosity

    def oil_mobility(self, sw):
        return self.kro(sw) / self.oil_viscosity

    def fractional_flow(self, sw):
        lw = self.water_mobility(sw)
        return lw / (lw + self.oil_mobility(sw))

    def max_fractional_flow_slope(self):
        """Max |d f_w / d S_w| over the mobile range, via dense sampling."""
        s = np.linspace(
            self.residual_water_saturation,
            1.0 - self.residual_oil_saturation,
            2001,
        )
        fw = self.fractional_flow(s)
        return float(np.max(np.abs(np.gradient(fw, s))))


@dataclass(frozen=True)
class WellSpec:
    """Rate-controlled well in cell (i, j): injector or producer.

    ``rate_m3_per_day`` is the total volumetric rate, positive for both
    kinds; the sign convention (injection adds fluid, production removes it)
    is applied internally. ``name`` defaults to kind initial + position among
    wells of the same kind.
    """

    i: int
    j: int
    kind: str
    rate_m3_per_day: float
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("injector", "producer"):
            raise ValueError(f"well kind must be injector or producer, got {self.kind!r}")
        if self.rate_m3_per_day < 0:
            raise ValueError("well rate must be non-negative")


def validate_wells(wells, geometry):
    """Check distinct in-bounds cells and balanced injection/production rates.

    Returns the wells as a list with auto-generated names filled in.
    """
    named = []
    seen_cells = {}
    counts = {"injector": 0, "producer": 0}
    for w in wells:
        cell = geometry.cell_index(w.i, w.j)
        if cell in seen_cells:
            raise ValueError(f"wells {seen_cells[cell]} and {w} share cell ({w.i}, {w.j})")
        seen_cells[cell] = w
        if not w.name:
            label = ("I" if w.kind == "injector" else "P") + str(counts[w.kind])
            w = WellSpec(w.i, w.j, w.kind, w.rate_m3_per_day, label)
        counts[w.kind] += 1
        named.append(w)
    inj = sum(w.rate_m3_per_day for w in named if w.kind == "injector")
    prod = sum(w.rate_m3_per_day for w in named if w.kind == "producer")
    scale = max(inj, prod, 1.0)
    if abs(inj - prod) > 1e-9 * scale:
        raise ValueError(f"unbalanced rates: injection {inj} vs production {prod} m3/day")
    return named


@dataclass(frozen=True)
class Schedule:
    """Report times in days; strictly increasing, last one <= total time."""

    total_days: float
    report_days: tuple = ()

    def __post_init__(self):
        if self.total_days <= 0:
            raise ValueError("total time must be positive")
        times = tuple(float(t) for t in self.report_days)
        if any(t <= 0 for t in times):
            raise ValueError("report times must be positive")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("report times must be strictly increasing")
        if times and times[-1] > self.total_days + 1e-9:
            raise ValueError("last report time exceeds total time")
        object.__setattr__(self, "report_days", times)

    @classmethod
    def uniform(cls, total_days, n_intervals):
        """n_intervals evenly spaced report times ending at total_days."""
        times = tuple(total_days * (k + 1) / n_intervals for k in range(n_intervals))
        return cls(total_days, times)


@dataclass
class ObservationSet:
    """Flat vector of time-stamped well measurements.

    ``index[k]`` is a ``(time_days, well_name, quantity)`` triple describing
    ``values[k]``; quantity is ``"pressure"`` or ``"water_saturation"``.
    """

    values: np.ndarray
    index: list

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if len(self.index) != self.values.size:
            raise ValueError(
                f"index length {len(self.index)} != value count {self.values.size}"
            )

    def __len__(self):
        return self.values.size

    def quantity_mask(self, quantity):
        return np.array([q == quantity for (_, _, q) in self.index], dtype=bool)


@dataclass
class StateSnapshot:
    """Pressure (Pa, gauge-relative) and water saturation at one report time."""

    time_days: float
    pressure: np.ndarray
    water_saturation: np.ndarray


# ---------------------------------------------------------------------------
# linear tier


def simulate_linear(sensing_matrix, m):
    """Observations of the linear model ``y = A @ m`` with a synthetic index."""
    a = np.asarray(sensing_matrix, dtype=float)
    m = np.asarray(m, dtype=float).ravel()
    if a.ndim != 2 or a.shape[1] != m.size:
        raise ValueError(f"sensing matrix {a.shape} incompatible with m of length {m.size}")
    values = a @ m
    index = [(float(r), "synthetic", "linear") for r in range(a.shape[0])]
    return ObservationSet(values, index)


class LinearModel:
    """Forward-model handle for the linear tier: g(m) = A m."""

    param_space = "linear"

    def __init__(self, sensing_matrix):
        self.sensing_matrix = np.asarray(sensing_matrix, dtype=float)
        if self.sensing_matrix.ndim != 2:
            raise ValueError("sensing matrix must be 2D")

    @property
    def n_parameters(self):
        return self.sensing_matrix.shape[1]

    def observe(self, m):
        return simulate_linear(self.sensing_matrix, m).values

    def jacobian(self, m):
        from .sensitivity import jacobian_linear

        return jacobian_linear(self.sensing_matrix, m_ref=m).entries


# ---------------------------------------------------------------------------
# grid plumbing shared by both flow tiers


def face_topology(geometry):
    """Interior face arrays ``(cell_a, cell_b, geometric_factor)``.

    x-faces come first (between (i, j) and (i+1, j), factor dy*dz/dx), then
    y-faces (between (i, j) and (i, j+1), factor dx*dz/dy). The geometric
    factor omits permeability and mobility.
    """
    nx, ny = geometry.nx, geometry.ny
    cells = np.arange(geometry.n_cells).reshape(ny, nx)
    fa_x = cells[:, :-1].ravel()
    fb_x = cells[:, 1:].ravel()
    fa_y = cells[:-1, :].ravel()
    fb_y = cells[1:, :].ravel()
    fa = np.concatenate([fa_x, fa_y])
    fb = np.concatenate([fb_x, fb_y])
    geo = np.concatenate(
        [
            np.full(fa_x.size, geometry.dy * geometry.dz / geometry.dx),
            np.full(fa_y.size, geometry.dx * geometry.dz / geometry.dy),
        ]
    )
    return fa, fb, geo


def harmonic_mean(ka, kb):
    return 2.0 * ka * kb / (ka + kb)


def _check_perm(perm_md, geometry):
    perm = np.asarray(perm_md, dtype=float)
    if perm.shape != (geometry.ny, geometry.nx):
        raise ValueError(
            f"permeability shape {perm.shape} does not match grid "
            f"({geometry.ny}, {geometry.nx})"
        )
    if not np.all(perm > 0):
        raise ValueError("permeability must be strictly positive everywhere")
    if not np.all(np.isfinite(perm)):
        raise ValueError("permeability must be finite")
    return perm


def assemble_grounded_banded(trans, fa, fb, n):
    """Banded upper storage of the grounded pressure operator.

    The operator is ``sum_faces T*(p_a - p_b)`` per cell with cell 0 grounded
    (its row and column zeroed, unit diagonal), which keeps the matrix
    symmetric positive definite because the grounded pressure is identically
    zero. Face lists always have ``fa < fb`` with offsets of 1 (x-neighbors)
    or nx (y-neighbors), so the bandwidth is the largest offset. Returns
    ``(ab, bandwidth)`` in the ``solveh_banded`` upper diagonal-ordered form.
    """
    u = int(np.max(fb - fa)) if fa.size else 1
    ab = np.zeros((u + 1, n))
    diag = np.bincount(fa, weights=trans, minlength=n) + np.bincount(
        fb, weights=trans, minlength=n
    )
    # entry A[a, b] = -T lands in row u + a - b of column b
    np.add.at(ab, (u + fa - fb, fb), -trans)
    ab[u, :] = diag
    # ground cell 0: clear its couplings, unit diagonal
    ab[u, 0] = 1.0
    touching = fa == 0
    ab[u + fa[touching] - fb[touching], fb[touching]] = 0.0
    return ab, u


def _solve_pinned(trans, fa, fb, n, rhs, pin=0):
    """Solve the grounded pressure system (cell ``pin`` held at zero).

    Only ``pin == 0`` is supported; the grounded operator is SPD and banded,
    so a banded Cholesky solve is used.
    """
    if pin != 0:
        raise ValueError("only cell 0 can be the pressure gauge")
    ab, _ = assemble_grounded_banded(trans, fa, fb, n)
    b = rhs.copy()
    b[pin] = 0.0
    try:
        p = solveh_banded(ab, b, lower=False, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SolverFailure(f"pressure system singular: {exc}") from exc
    if not np.all(np.isfinite(p)):
        raise SolverFailure("pressure solve returned non-finite values")
    return p


def _well_source_vector(wells, geometry):
    """Total volumetric source per cell in m^3/s (injection positive)."""
    q = np.zeros(geometry.n_cells)
    for w in wells:
        sign = 1.0 if w.kind == "injector" else -1.0
        q[geometry.cell_index(w.i, w.j)] += sign * w.rate_m3_per_day / SECONDS_PER_DAY
    return q


# ---------------------------------------------------------------------------
# steady single-phase tier


def solve_single_phase(perm_md, geometry, props, wells):
    """Steady incompressible single-phase pressure solve.

    Returns ``(pressure_field, well_pressures)`` where the field has shape
    ``(ny, nx)`` in Pa and the well pressures follow the well list order.
    The gauge is fixed by pinning cell (0, 0) at zero pressure; the fluid
    viscosity is ``props.water_viscosity``. Discrete conservation holds per
    cell to direct-solver accuracy.
    """
    perm = _check_perm(perm_md, geometry)
    wells = validate_wells(wells, geometry)
    fa, fb, geo = face_topology(geometry)
    k_flat = perm.ravel() * MD_TO_M2
    trans = geo * harmonic_mean(k_flat[fa], k_flat[fb]) / props.water_viscosity
    q = _well_source_vector(wells, geometry)
    p = _solve_pinned(trans, fa, fb, geometry.n_cells, q)
    well_p = np.array([p[geometry.cell_index(w.i, w.j)] for w in wells])
    return p.reshape(geometry.ny, geometry.nx), well_p


class SinglePhaseModel:
    """Forward-model handle observing steady pressures at chosen cells.

    Parameters are the flattened permeability field in mD. By default the
    observed cells are the well cells in list order.
    """

    param_space = "permeability"

    def __init__(self, geometry, props, wells, observed_cells=None):
        self.geometry = geometry
        self.props = props
        self.wells = validate_wells(wells, geometry)
        if observed_cells is None:
            observed_cells = [geometry.cell_index(w.i, w.j) for w in self.wells]
        self.observed_cells = list(observed_cells)

    @property
    def n_parameters(self):
        return self.geometry.n_cells

    def observe(self, m):
        perm = np.asarray(m, dtype=float).reshape(self.geometry.ny, self.geometry.nx)
        p, _ = solve_single_phase(perm, self.geometry, self.props, self.wells)
        return p.ravel()[self.observed_cells]

    def jacobian(self, m):
        from .sensitivity import jacobian_adjoint_single_phase

        perm = np.asarray(m, dtype=float).reshape(self.geometry.ny, self.geometry.nx)
        return jacobian_adjoint_single_phase(
            perm, self.geometry, self.props, self.wells, self.observed_cells
        ).entries


# ---------------------------------------------------------------------------
# two-phase waterflood tier


@dataclass
class TwoPhaseResult:
    """Simulator output plus run diagnostics."""

    observations: ObservationSet
    snapshots: list
    mass_balance_error: float
    pressure_solves: int
    saturation_substeps: int


def _upstream(values, fa, fb, direction):
    """Face value of ``values`` taken upstream by flow direction (+1 a->b)."""
    up = np.where(direction > 0, values[fa], values[fb])
    ties = direction == 0
    if np.any(ties):
        up = np.where(ties, 0.5 * (values[fa] + values[fb]), up)
    return up


def _solve_pressure_two_phase(sw, base_trans, fa, fb, n, q, props, direction):
    """IMPES pressure solve with upstream total mobility, iterated on upwind
    directions until they settle (at most three passes)."""
    lam_t = props.water_mobility(sw) + props.oil_mobility(sw)
    for _ in range(3):
        if direction is None:
            lam_face = 0.5 * (lam_t[fa] + lam_t[fb])
        else:
            lam_face = _upstream(lam_t, fa, fb, direction)
        trans = base_trans * lam_face
        p = _solve_pinned(trans, fa, fb, n, q)
        new_direction = np.sign(p[fa] - p[fb]).astype(np.int8)
        if direction is not None and np.array_equal(new_direction, direction):
            break
        direction = new_direction
    else:
        logger.debug("upwind directions did not settle within 3 passes")
    flux = trans * (p[fa] - p[fb])
    return p, flux, direction


def run_waterflood(
    perm_md,
    geometry,
    props,
    wells,
    schedule,
    pressure_steps_per_interval=1,
    cfl=0.75,
):
    """Two-phase immiscible waterflood; returns a :class:`TwoPhaseResult`.

    IMPES stepping: within each report interval the pressure is solved
    implicitly ``pressure_steps_per_interval`` times; between pressure solves
    the saturation advances explicitly with frozen total fluxes, automatically
    sub-stepped to respect the CFL limit (sub-step counts are logged, never
    silent). The water mass balance (injected - produced - storage change) is
    verified to 1e-8 relative at the end of the run.
    """
    perm = _check_perm(perm_md, geometry)
    wells = validate_wells(wells, geometry)
    if pressure_steps_per_interval < 1:
        raise ValueError("pressure_steps_per_interval must be >= 1")
    if not 0 < cfl <= 1:
        raise ValueError(f"cfl must be in (0, 1], got {cfl}")

    n = geometry.n_cells
    fa, fb, geo = face_topology(geometry)
    k_flat = perm.ravel() * MD_TO_M2
    base_trans = geo * harmonic_mean(k_flat[fa], k_flat[fb])
    q_total = _well_source_vector(wells, geometry)

    inj_cells = np.array(
        [geometry.cell_index(w.i, w.j) for w in wells if w.kind == "injector"], dtype=int
    )
    inj_rates = np.array(
        [w.rate_m3_per_day / SECONDS_PER_DAY for w in wells if w.kind == "injector"]
    )
    prod_cells = np.array(
        [geometry.cell_index(w.i, w.j) for w in wells if w.kind == "producer"], dtype=int
    )
    prod_rates = np.array(
        [w.rate_m3_per_day / SECONDS_PER_DAY for w in wells if w.kind == "producer"]
    )

    pore_volume = props.porosity * geometry.cell_volume
    fw_slope = max(props.max_fractional_flow_slope(), 1e-12)

    sw = np.full(n, props.initial_water_saturation)
    sw0 = sw.copy()
    injected = 0.0
    produced = 0.0
    direction = None
    snapshots = []
    n_solves = 0
    n_substeps = 0

    t_prev = 0.0
    for t_report in schedule.report_days:
        interval_s = (t_report - t_prev) * SECONDS_PER_DAY
        dt_pressure = interval_s / pressure_steps_per_interval
        for _ in range(pressure_steps_per_interval):
            p, flux, direction = _solve_pressure_two_phase(
                sw, base_trans, fa, fb, n, q_total, props, direction
            )
            n_solves += 1

            # outgoing volumetric rate per cell bounds the explicit step
            outflux = np.zeros(n)
            np.add.at(outflux, fa, np.maximum(flux, 0.0))
            np.add.at(outflux, fb, np.maximum(-flux, 0.0))
            if prod_cells.size:
                np.add.at(outflux, prod_cells, prod_rates)
            max_out = outflux.max() if n else 0.0
            if max_out <= 0:
                n_sub = 1
            else:
                dt_cfl = cfl * np.min(
                    pore_volume / (np.maximum(outflux, 1e-300) * fw_slope)
                )
                n_sub = max(1, int(math.ceil(dt_pressure / dt_cfl)))
            if n_sub > 1:
                logger.debug(
                    "CFL sub-stepping: %d saturation steps within pressure step", n_sub
                )
            dt_sub = dt_pressure / n_sub
            for _ in range(n_sub):
                fw = props.fractional_flow(sw)
                fw_face = _upstream(fw, fa, fb, np.sign(flux).astype(np.int8))
                water_flux = flux * fw_face
                div = np.zeros(n)
                np.add.at(div, fa, water_flux)
                np.add.at(div, fb, -water_flux)
                source = np.zeros(n)
                if inj_cells.size:
                    np.add.at(source, inj_cells, inj_rates)
                prod_water = 0.0
                if prod_cells.size:
                    pw = fw[prod_cells] * prod_rates
                    np.add.at(source, prod_cells, -pw)
                    prod_water = pw.sum()
                sw = sw + dt_sub * (source - div) / pore_volume
                injected += inj_rates.sum() * dt_sub
                produced += prod_water * dt_sub
                n_substeps += 1
        if not np.all(np.isfinite(sw)):
            raise SolverFailure(f"non-finite saturation at t = {t_report} days")
        p_report = (p - p.mean()).reshape(geometry.ny, geometry.nx)
        snapshots.append(
            StateSnapshot(t_report, p_report, sw.reshape(geometry.ny, geometry.nx).copy())
        )
        t_prev = t_report

    storage = float(np.sum((sw - sw0) * pore_volume))
    balance = injected - produced - storage
    mbe = abs(balance) / injected if injected > 0 else abs(balance)
    if mbe > 1e-8:
        raise SolverFailure(f"water mass balance violated: relative error {mbe:.3e}")

    observations = extract_observations(snapshots, wells, schedule)
    return TwoPhaseResult(observations, snapshots, mbe, n_solves, n_substeps)


def simulate_two_phase(
    perm_md, geometry, props, wells, schedule, pressure_steps_per_interval=1, cfl=0.75
):
    """Waterflood returning ``(ObservationSet, snapshots)``; see run_waterflood."""
    result = run_waterflood(
        perm_md, geometry, props, wells, schedule, pressure_steps_per_interval, cfl
    )
    return result.observations, result.snapshots


def extract_observations(snapshots, wells, schedule):
    """Assemble the observation vector from report-time snapshots.

    Ordering is time-major, then well (list order), then quantity: injectors
    report pressure; producers report pressure then water saturation. Raises
    if any report time has no snapshot.
    """
    by_time = {}
    for s in snapshots:
        by_time[float(s.time_days)] = s
    values = []
    index = []
    for t in schedule.report_days:
        snap = by_time.get(float(t))
        if snap is None:
            match = [s for s in snapshots if abs(s.time_days - t) < 1e-9]
            if not match:
                raise ValueError(f"no snapshot for report time {t} days")
            snap = match[0]
        p = snap.pressure.ravel()
        s_w = snap.water_saturation.ravel()
        for w in wells:
            cell = w.j * snap.pressure.shape[1] + w.i
            values.append(p[cell])
            index.append((float(t), w.name, "pressure"))
            if w.kind == "producer":
                values.append(s_w[cell])
                index.append((float(t), w.name, "water_saturation"))
    return ObservationSet(np.array(values), index)


class TwoPhaseModel:
    """Forward-model handle for the waterflood tier.

    Parameters are the flattened permeability field, either in mD
    (``param_space="permeability"``) or as log10(mD)
    (``param_space="log-permeability"``). Observations may be scaled by a
    fixed diagonal vector (e.g. to balance pressure and saturation units);
    the same scaling applies to simulated data and Jacobians.
    """

    def __init__(
        self,
        geometry,
        props,
        wells,
        schedule,
        param_space="permeability",
        obs_scale=None,
        pressure_steps_per_interval=1,
        cfl=0.75,
        fd_rel_step=1e-6,
        fd_scheme="central",
        n_jobs=1,
    ):
        if param_space not in ("permeability", "log-permeability"):
            raise ValueError(f"unknown param_space {param_space!r}")
        self.geometry = geometry
        self.props = props
        self.wells = validate_wells(wells, geometry)
        self.schedule = schedule
        self.param_space = param_space
        self.obs_scale = None if obs_scale is None else np.asarray(obs_scale, dtype=float)
        self.pressure_steps_per_interval = pressure_steps_per_interval
        self.cfl = cfl
        self.fd_rel_step = fd_rel_step
        self.fd_scheme = fd_scheme
        self.n_jobs = n_jobs

    @property
    def n_parameters(self):
        return self.geometry.n_cells

    def perm_from_parameters(self, m):
        m = np.asarray(m, dtype=float)
        if self.param_space == "log-permeability":
            perm = 10.0 ** m
        else:
            perm = m
        return perm.reshape(self.geometry.ny, self.geometry.nx)

    def parameters_from_perm(self, perm_md):
        perm = np.asarray(perm_md, dtype=float).ravel()
        if self.param_space == "log-permeability":
            return np.log10(perm)
        return perm.copy()

    def observe(self, m):
        perm = self.perm_from_parameters(m)
        obs, _ = simulate_two_phase(
            perm,
            self.geometry,
            self.props,
            self.wells,
            self.schedule,
            self.pressure_steps_per_interval,
            self.cfl,
        )
        values = obs.values
        if self.obs_scale is not None:
            values = values * self.obs_scale
        return values

    def jacobian(self, m):
        from .sensitivity import jacobian_fd

        return jacobian_fd(
            self,
            m,
            rel_step=self.fd_rel_step,
            scheme=self.fd_scheme,
            n_jobs=self.n_jobs,
        ).entries
