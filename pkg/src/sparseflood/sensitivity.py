"""Jacobians of forward models: analytic, discrete adjoint, finite difference.

The Jacobian G maps parameter perturbations to observation perturbations,
``G[r, j] = d(observation r)/d(parameter j)``. Three providers cover the
three forward tiers: the linear tier's Jacobian is the sensing matrix itself;
the steady single-phase tier has a discrete adjoint (one transposed solve per
observation); the two-phase tier uses finite differences, which double as the
verification oracle for the adjoint.
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from .forward_models import (
    MD_TO_M2,
    SolverFailure,
    assemble_grounded_banded,
    face_topology,
    solve_single_phase,
    validate_wells,
)

__all__ = [
    "JacobianMatrix",
    "jacobian_linear",
    "jacobian_fd",
    "jacobian_adjoint_single_phase",
    "linearized_data",
    "log10_space_jacobian",
]


@dataclass
class JacobianMatrix:
    """Dense M-by-N sensitivity matrix evaluated at ``m_ref``."""

    entries: np.ndarray
    m_ref: np.ndarray
    param_space: str = "permeability"

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float)
        self.m_ref = np.asarray(self.m_ref, dtype=float).ravel()
        if self.entries.ndim != 2:
            raise ValueError("Jacobian entries must be a 2D matrix")
        if self.entries.shape[1] != self.m_ref.size:
            raise ValueError(
                f"Jacobian has {self.entries.shape[1]} columns but m_ref has "
                f"{self.m_ref.size} entries"
            )
        if not np.all(np.isfinite(self.entries)):
            raise ValueError("Jacobian contains non-finite entries")

    @property
    def shape(self):
        return self.entries.shape


def jacobian_linear(sensing_matrix, m_ref=None):
    """Jacobian of the linear tier: the sensing matrix itself, any m_ref."""
    a = np.asarray(sensing_matrix, dtype=float)
    if m_ref is None:
        m_ref = np.zeros(a.shape[1])
    return JacobianMatrix(a.copy(), m_ref, param_space="linear")


def linearized_data(y, g_at_m, G, m):
    """Linearized data vector ``y - g(m) + G @ m`` used as the update RHS."""
    y = np.asarray(y, dtype=float).ravel()
    g_at_m = np.asarray(g_at_m, dtype=float).ravel()
    G = np.asarray(G, dtype=float)
    m = np.asarray(m, dtype=float).ravel()
    if y.shape != g_at_m.shape or G.shape != (y.size, m.size):
        raise ValueError(
            f"shape mismatch: y {y.shape}, g {g_at_m.shape}, G {G.shape}, m {m.shape}"
        )
    return y - g_at_m + G @ m


def log10_space_jacobian(jacobian, perm_ref):
    """Chain rule from permeability columns to log10-permeability columns.

    ``d g / d log10(k_j) = (d g / d k_j) * k_j * ln(10)``.
    """
    perm = np.asarray(perm_ref, dtype=float).ravel()
    entries = jacobian.entries * (perm * math.log(10.0))[None, :]
    return JacobianMatrix(entries, np.log10(perm), param_space="log-permeability")


# ---------------------------------------------------------------------------
# finite differences

_FD_MODEL = None


def _fd_worker_init(model):
    global _FD_MODEL
    _FD_MODEL = model


def _fd_columns(args):
    m, columns, steps, scheme, g0 = args
    cols = []
    for j, h in zip(columns, steps):
        cols.append(_fd_single_column(_FD_MODEL, m, j, h, scheme, g0))
    return columns, cols


def _fd_single_column(model, m, j, h, scheme, g0):
    try:
        m_plus = m.copy()
        m_plus[j] += h
        g_plus = model.observe(m_plus)
        if scheme == "central":
            m_minus = m.copy()
            m_minus[j] -= h
            g_minus = model.observe(m_minus)
            return (g_plus - g_minus) / (2.0 * h)
        return (g_plus - g0) / h
    except Exception as exc:
        raise SolverFailure(f"forward model failed at perturbed column {j}: {exc}") from exc


def jacobian_fd(model, m, rel_step=1e-6, scale_floor=1e-8, scheme="central", n_jobs=1):
    """Finite-difference Jacobian of ``model.observe`` at ``m``.

    Column j uses step ``h = rel_step * max(|m_j|, scale_floor)``; the default
    scheme is central differences, ``scheme="forward"`` halves the forward-run
    count at first-order accuracy. Columns are independent, so they may be
    evaluated in parallel worker processes (``n_jobs > 1``); results are
    identical regardless of evaluation order because the model is pure.
    """
    if rel_step <= 0:
        raise ValueError(f"rel_step must be positive, got {rel_step}")
    if scheme not in ("central", "forward"):
        raise ValueError(f"unknown FD scheme {scheme!r}")
    m = np.asarray(m, dtype=float).ravel()
    n = m.size
    steps = rel_step * np.maximum(np.abs(m), scale_floor)
    g0 = np.asarray(model.observe(m), dtype=float).ravel()
    entries = np.empty((g0.size, n))

    if n_jobs is None:
        n_jobs = os.cpu_count() or 1
    n_jobs = max(1, min(int(n_jobs), n))
    if n_jobs == 1:
        for j in range(n):
            entries[:, j] = _fd_single_column(model, m, j, steps[j], scheme, g0)
    else:
        chunk = (n + n_jobs - 1) // n_jobs
        tasks = []
        for start in range(0, n, chunk):
            columns = list(range(start, min(start + chunk, n)))
            tasks.append((m, columns, steps[columns], scheme, g0))
        with ProcessPoolExecutor(
            max_workers=n_jobs, initializer=_fd_worker_init, initargs=(model,)
        ) as pool:
            for columns, cols in pool.map(_fd_columns, tasks):
                for j, col in zip(columns, cols):
                    entries[:, j] = col

    return JacobianMatrix(
        entries, m, param_space=getattr(model, "param_space", "permeability")
    )


# ---------------------------------------------------------------------------
# discrete adjoint for the steady single-phase tier


def jacobian_adjoint_single_phase(perm_md, geometry, props, wells, observed_cells=None):
    """Sensitivities of observed cell pressures via the discrete adjoint.

    The grounded pressure system ``A(k) p = q`` is symmetric, so
    ``d p_obs/d k_j = -(A^{-1} e_obs)^T (dA/dk_j) p`` needs one extra banded
    solve per observation. ``dA/dk_j`` only involves the faces touching cell
    j through the harmonic-mean transmissibility; the grounded row/column of
    A is constant, so its entries are excluded.

    Returns a JacobianMatrix in permeability space (mD), rows following
    ``observed_cells`` (default: well cells in list order).
    """
    perm = np.asarray(perm_md, dtype=float)
    wells = validate_wells(wells, geometry)
    if observed_cells is None:
        observed_cells = [geometry.cell_index(w.i, w.j) for w in wells]
    p_field, _ = solve_single_phase(perm, geometry, props, wells)
    p = p_field.ravel()

    n = geometry.n_cells
    pin = 0
    fa, fb, geo = face_topology(geometry)
    k = perm.ravel() * MD_TO_M2
    ka, kb = k[fa], k[fb]
    # transmissibility T = geo * 2 ka kb/(ka+kb) / mu, in mD-parameter units
    denom = (ka + kb) ** 2
    dt_dka = geo * 2.0 * kb**2 / denom / props.water_viscosity * MD_TO_M2
    dt_dkb = geo * 2.0 * ka**2 / denom / props.water_viscosity * MD_TO_M2
    pa, pb = p[fa], p[fb]
    cross_mask = ((fa != pin) & (fb != pin)).astype(float)

    trans = geo * (2.0 * ka * kb / (ka + kb)) / props.water_viscosity
    ab, _ = assemble_grounded_banded(trans, fa, fb, n)
    try:
        factor = cholesky_banded(ab, lower=False, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SolverFailure(f"adjoint system singular: {exc}") from exc

    entries = np.empty((len(observed_cells), n))
    for r, cell in enumerate(observed_cells):
        e = np.zeros(n)
        e[cell] = 1.0
        nu = cho_solve_banded((factor, False), e, check_finite=False)
        # per-face weight nu^T (dA/dT_f) p, grounded entries excluded;
        # diagonal terms need no mask because p vanishes at the gauge cell
        w = nu[fa] * pa + nu[fb] * pb - (nu[fa] * pb + nu[fb] * pa) * cross_mask
        row = np.zeros(n)
        np.add.at(row, fa, -dt_dka * w)
        np.add.at(row, fb, -dt_dkb * w)
        entries[r, :] = row

    return JacobianMatrix(entries, perm.ravel(), param_space="permeability")
