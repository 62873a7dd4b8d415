"""Iteratively reweighted Gauss-Newton with lp sparsity regularization.

The solver minimizes a data-misfit cost augmented with an lp-promoting
penalty on the DCT coefficients of the parameter field. The non-smooth lp
term is handled by iterative reweighting: each iteration replaces it with a
weighted l2 term ``SP(m) = sum_i W_ii (Phi m)_i^2`` whose diagonal weights
``W_ii = ((Phi m)_i^2 + eps_n)^((p-2)/2)`` are rebuilt from the previous
iterate, with ``eps_n`` set to the current squared data misfit so the
sparsity pressure tightens as the fit improves.

Two couplings of misfit and penalty are provided:

* additive: ``cost = misfit + alpha * SP(m)``, requiring a regularization
  weight alpha;
* multiplicative: ``cost = misfit * SP(m)``, whose Newton update carries the
  automatic weight ``beta = misfit / SP(m)`` instead of alpha.

Both lead to normal equations ``(G^T G + c * Phi^T W Phi) m = G^T y_lin`` with
``y_lin = y - g(m) + G m``; the two step routines share one code path, so
equal ``c`` gives bitwise-equal steps.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .forward_models import SolverFailure

__all__ = [
    "SolverConfig",
    "IterationRecord",
    "compute_epsilon",
    "compute_weights",
    "sparsity_term",
    "additive_cost",
    "multiplicative_cost",
    "additive_step",
    "multiplicative_step",
    "compute_beta",
    "run_additive",
    "run_multiplicative",
]

logger = logging.getLogger(__name__)

_DEFAULT_LOG_BOX = (-2.0, 5.0)
_DEFAULT_PERM_BOX = (1e-2, 1e5)


@dataclass(frozen=True)
class SolverConfig:
    """Settings for one inversion run.

    ``p`` in [0, 2] selects the penalty norm; values outside (0, 1] do not
    promote sparsity (p = 2 reduces to minimum-energy regularization).
    ``alpha`` is required in additive mode and ignored in multiplicative
    mode. ``noise_energy`` is the discrepancy-style misfit target sigma;
    zero disables that stop. ``clamp_box`` bounds each parameter after every
    update; None picks a default box from ``param_space`` ([-2, 5] for log10
    mD, a wide positive box for plain mD, none otherwise).
    """

    p: float
    mode: str = "multiplicative"
    alpha: float = None
    max_iterations: int = 30
    misfit_tolerance: float = 1e-4
    epsilon_floor: float = 1e-8
    damping: float = None
    param_space: str = "log-permeability"
    noise_energy: float = 0.0
    alpha_decay: float = 1.0
    clamp_box: tuple = None

    def __post_init__(self):
        if not 0.0 <= self.p <= 2.0:
            raise ValueError(f"p must be in [0, 2], got {self.p}")
        if self.mode not in ("additive", "multiplicative"):
            raise ValueError(f"mode must be additive or multiplicative, got {self.mode!r}")
        if self.mode == "additive":
            if self.alpha is None or self.alpha < 0:
                raise ValueError("additive mode requires alpha >= 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.epsilon_floor <= 0:
            raise ValueError("epsilon_floor must be positive")
        if self.noise_energy < 0:
            raise ValueError("noise_energy must be >= 0")
        if self.alpha_decay <= 0:
            raise ValueError("alpha_decay must be positive")

    @property
    def promotes_sparsity(self):
        """True when the penalty exponent actually favors sparse solutions."""
        return 0.0 < self.p <= 1.0

    def resolved_clamp_box(self):
        if self.clamp_box is not None:
            return tuple(self.clamp_box)
        if self.param_space == "log-permeability":
            return _DEFAULT_LOG_BOX
        if self.param_space == "permeability":
            return _DEFAULT_PERM_BOX
        return None


@dataclass
class IterationRecord:
    """Per-iteration telemetry; ``beta`` is None in additive mode."""

    iteration: int
    misfit: float
    sparsity: float
    cost: float
    epsilon: float
    beta: float = None
    clamp_count: int = 0
    m: np.ndarray = None


def compute_epsilon(y, g_at_m, epsilon_floor=1e-8):
    """Adaptive weight stabilizer: squared residual norm, floored."""
    r = np.asarray(y, dtype=float).ravel() - np.asarray(g_at_m, dtype=float).ravel()
    return max(float(r @ r), epsilon_floor)


def compute_weights(coeffs, eps, p):
    """Diagonal IRLS weights ``((Phi m)_i^2 + eps)^((p-2)/2)``.

    At p = 2 every weight is 1; for p < 2 small coefficients receive large
    weights, which is what suppresses them in the next weighted-l2 solve.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    coeffs = np.asarray(coeffs, dtype=float).ravel()
    w = (coeffs**2 + eps) ** ((p - 2.0) / 2.0)
    if not np.all(np.isfinite(w)):
        raise SolverFailure("non-finite IRLS weights")
    return w


def sparsity_term(m, basis, weights):
    """Weighted coefficient energy ``sum_i W_ii (Phi m)_i^2``.

    With weights from :func:`compute_weights` and eps -> 0 this approximates
    ``||Phi m||_p^p``.
    """
    coeffs = basis.analysis_flat(np.asarray(m, dtype=float).ravel())
    weights = np.asarray(weights, dtype=float).ravel()
    if weights.size != coeffs.size:
        raise ValueError("weight vector length does not match basis size")
    return float(np.sum(weights * coeffs**2))


def additive_cost(m, y, g_at_m, basis, weights, alpha):
    """Additive objective: misfit plus alpha times the weighted penalty."""
    r = np.asarray(y, dtype=float).ravel() - np.asarray(g_at_m, dtype=float).ravel()
    return float(r @ r) + alpha * sparsity_term(m, basis, weights)


def multiplicative_cost(m, y, g_at_m, basis, weights):
    """Multiplicative objective: misfit times the weighted penalty."""
    r = np.asarray(y, dtype=float).ravel() - np.asarray(g_at_m, dtype=float).ravel()
    return float(r @ r) * sparsity_term(m, basis, weights)


def compute_beta(y, g_at_m, sp, sp_floor=1e-8):
    """Automatic multiplicative weight: misfit over penalty, with a floor
    on the penalty to survive near-zero regularization terms."""
    r = np.asarray(y, dtype=float).ravel() - np.asarray(g_at_m, dtype=float).ravel()
    misfit = float(r @ r)
    return misfit / max(float(sp), sp_floor)


def _weighted_basis_gram(basis, weights):
    """Dense ``Phi^T W Phi`` for diagonal weights."""
    phi = basis.matrix()
    return phi.T @ (weights[:, None] * phi)


def _solve_step_dual(G, weights, basis, reg, y_lin):
    """Underdetermined step via the algebraically identical dual form.

    For M < N and reg > 0, the normal-equation solution equals
    ``Phi^T W^-1 Phi G^T (reg*I + G Phi^T W^-1 Phi G^T)^-1 y_lin`` (Woodbury
    identity with the orthogonal basis). The M-by-M dual matrix stays well
    conditioned as reg -> 0, where the primal matrix becomes numerically
    rank deficient and damping would wash out the weighted null-space
    shaping that drives sparse recovery. Returns None if the dual
    factorization is unusable, so the caller can fall back to the primal.
    """
    phi = basis.matrix()
    b = G @ phi.T
    w_inv = 1.0 / weights
    z = (b * w_inv[None, :]) @ b.T
    k = z + reg * np.eye(G.shape[0])
    try:
        factor = cho_factor(k, lower=True, check_finite=False)
        u = cho_solve(factor, y_lin, check_finite=False)
    except np.linalg.LinAlgError:
        return None
    residual = np.linalg.norm(k @ u - y_lin)
    scale = max(np.linalg.norm(y_lin), np.finfo(float).tiny)
    if residual / scale > 1e-8 or not np.all(np.isfinite(u)):
        return None
    return phi.T @ (w_inv * (b.T @ u))


def _solve_normal_equations(gram, rhs, damping):
    """Cholesky solve of the SPD normal equations with damping escalation.

    ``damping`` scales ``trace(K)/N``; None starts undamped and adds
    1e-10 * trace/N on the first factorization failure, escalating tenfold
    up to 1e-2 * trace/N before giving up. The residual of the (possibly
    damped) system is verified to 1e-8 relative.
    """
    n = gram.shape[0]
    base = max(np.trace(gram) / n, np.finfo(float).tiny)
    levels = [0.0 if damping is None else damping]
    start = 1e-10 if damping is None else max(damping * 10, 1e-10)
    lvl = start
    while lvl <= 1e-2 * 1.0000001:
        levels.append(lvl)
        lvl *= 10.0
    last_exc = None
    for level in levels:
        k = gram if level == 0.0 else gram + (level * base) * np.eye(n)
        try:
            factor = cho_factor(k, lower=True, check_finite=False)
            m = cho_solve(factor, rhs, check_finite=False)
        except np.linalg.LinAlgError as exc:
            last_exc = exc
            continue
        residual = np.linalg.norm(k @ m - rhs)
        scale = max(np.linalg.norm(rhs), np.finfo(float).tiny)
        if residual / scale < 1e-8 and np.all(np.isfinite(m)):
            if level > 0:
                logger.debug("normal equations damped with %.1e * trace/N", level)
            return m
        last_exc = SolverFailure(
            f"normal-equation residual {residual / scale:.3e} at damping {level:.1e}"
        )
    cond = np.linalg.cond(gram)
    raise SolverFailure(
        f"normal equations not solvable even with damping up to 1e-2*trace/N "
        f"(condition number ~{cond:.3e})"
    ) from last_exc


def additive_step(G, weights, basis, alpha, y_lin, damping=None):
    """One Gauss-Newton update: solve ``(G^T G + alpha Phi^T W Phi) m = G^T y_lin``."""
    G = np.asarray(G, dtype=float)
    y_lin = np.asarray(y_lin, dtype=float).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    if alpha < 0:
        raise ValueError("regularization weight must be >= 0")
    if np.any(weights <= 0):
        raise ValueError("weights must be strictly positive")
    if G.shape[0] != y_lin.size or G.shape[1] != basis.n:
        raise ValueError(
            f"shape mismatch: G {G.shape}, y_lin {y_lin.shape}, basis N {basis.n}"
        )
    if alpha > 0 and G.shape[0] < G.shape[1]:
        m = _solve_step_dual(G, weights, basis, alpha, y_lin)
        if m is not None:
            return m
    gram = G.T @ G + alpha * _weighted_basis_gram(basis, weights)
    return _solve_normal_equations(gram, G.T @ y_lin, damping)


def multiplicative_step(G, weights, basis, beta, y_lin, damping=None):
    """Identical to :func:`additive_step` with beta in place of alpha."""
    return additive_step(G, weights, basis, beta, y_lin, damping)


def _clamp(m, box):
    if box is None:
        return m, 0
    lo, hi = box
    clamped = np.clip(m, lo, hi)
    return clamped, int(np.count_nonzero(clamped != m))


def _run_irls(model, basis, y, m0, config, mode):
    if config.mode != mode:
        config = replace(config, mode=mode)
    y = np.asarray(y, dtype=float).ravel()
    m = np.asarray(m0, dtype=float).ravel().copy()
    if m.size != basis.n:
        raise ValueError(f"m0 length {m.size} does not match basis size {basis.n}")
    if not config.promotes_sparsity:
        logger.info("p = %g does not promote sparsity (needs 0 < p <= 1)", config.p)

    box = config.resolved_clamp_box()
    alpha = config.alpha
    records = []
    prev_misfit = None
    stall = 0
    pending_clamps = 0

    for iteration in range(config.max_iterations + 1):
        try:
            g = np.asarray(model.observe(m), dtype=float).ravel()
        except Exception as exc:
            failure = SolverFailure(f"forward model failed at iteration {iteration}: {exc}")
            failure.records = records
            raise failure from exc
        if g.shape != y.shape:
            raise ValueError(f"model returned {g.shape}, observations are {y.shape}")
        residual = y - g
        misfit = float(residual @ residual)
        eps = max(misfit, config.epsilon_floor)
        coeffs = basis.analysis_flat(m)
        weights = compute_weights(coeffs, eps, config.p)
        sp = float(np.sum(weights * coeffs**2))
        if mode == "additive":
            beta = None
            cost = misfit + alpha * sp
        else:
            beta = misfit / max(sp, config.epsilon_floor)
            cost = misfit * sp
        records.append(
            IterationRecord(
                iteration, misfit, sp, cost, eps, beta, pending_clamps, m.copy()
            )
        )
        logger.info(
            "iter %3d  misfit %.6e  sparsity %.6e  cost %.6e%s",
            iteration,
            misfit,
            sp,
            cost,
            "" if beta is None else f"  beta {beta:.3e}",
        )

        if iteration >= config.max_iterations:
            break
        if config.noise_energy > 0 and misfit <= config.noise_energy:
            logger.info("stopping: misfit reached noise energy")
            break
        if iteration == 0 and misfit <= config.epsilon_floor:
            # the initial guess already reproduces the data exactly
            logger.info("stopping: initial guess is a data fit")
            break
        if prev_misfit is not None and misfit > config.epsilon_floor:
            # below the floor the misfit is numerical noise; keep iterating so
            # the reweighting can finish shaping the solution
            rel_change = abs(misfit - prev_misfit) / max(prev_misfit, np.finfo(float).tiny)
            stall = stall + 1 if rel_change < config.misfit_tolerance else 0
            if stall >= 2:
                logger.info("stopping: misfit stalled for two iterations")
                break
        prev_misfit = misfit

        try:
            G = np.asarray(model.jacobian(m), dtype=float)
        except Exception as exc:
            failure = SolverFailure(f"Jacobian failed at iteration {iteration}: {exc}")
            failure.records = records
            raise failure from exc
        y_lin = residual + G @ m
        try:
            reg = alpha if mode == "additive" else beta
            m_new = additive_step(G, weights, basis, reg, y_lin, config.damping)
        except SolverFailure as exc:
            exc.records = records
            raise
        m, pending_clamps = _clamp(m_new, box)
        if pending_clamps:
            logger.debug("clamped %d parameters to %s", pending_clamps, box)
        if mode == "additive" and config.alpha_decay != 1.0:
            alpha *= config.alpha_decay

    return m, records


def run_additive(model, basis, y, m0, config):
    """Additive-regularization driver; returns ``(m_final, records)``.

    Iterates: forward run, weights from the current coefficients with eps
    set to the current misfit, Jacobian, regularized normal solve, optional
    alpha decay, until max iterations or the misfit stalls (relative change
    below tolerance twice in a row) or drops to the noise energy.
    """
    return _run_irls(model, basis, y, m0, config, "additive")


def run_multiplicative(model, basis, y, m0, config):
    """Multiplicative-regularization driver; no alpha anywhere, the weight
    ``beta = misfit/SP`` is recomputed from the current iterate each
    iteration. Same stopping rules and telemetry as the additive driver."""
    return _run_irls(model, basis, y, m0, config, "multiplicative")
