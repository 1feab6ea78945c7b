"""Symbol-level precoding as a least-norm QP over detection regions.

Each user contributes one I and one Q constraint on the received value
h_j x: an equality at the scaled symbol component, or a one-sided bound
away from the origin for lattice-edge components. The transmit vector of
minimum norm is found with a primal active-set method on the real
embedding [Re x; Im x], warm-started from the all-equality solution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelMatrix, effective_channel, REFERENCE_SYMBOL
from .constellation import ConstellationSpec, DetectionConstraint, Relation, constraints_for


class SolverError(Exception):
    """Base class for precoding solver failures."""


class InfeasibleConstraintsError(SolverError):
    def __init__(self, message, conflicts=()):
        super().__init__(message)
        self.conflicts = tuple(conflicts)


class ActiveSetLimitError(SolverError):
    """The active-set loop exceeded its iteration budget."""


@dataclass(frozen=True)
class SinrTargets:
    """Per-user SINR targets (linear) and the noise standard deviation."""

    zeta: np.ndarray
    sigma_z: float

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.zeta, dtype=float))
        if np.any(z <= 0) or self.sigma_z <= 0:
            raise ValueError("targets and sigma_z must be positive")
        object.__setattr__(self, "zeta", z)
        z.setflags(write=False)


@dataclass(frozen=True)
class PrecodeProblem:
    """Channel rows plus per-user (I, Q) constraints with resolved RHS.

    The constraints store rhs values already scaled by sqrt(zeta_j)*sigma_z.
    """

    channel: np.ndarray
    constraints: tuple
    mode: str

    @property
    def k_users(self) -> int:
        return self.channel.shape[0]

    @property
    def n_antennas(self) -> int:
        return self.channel.shape[1]


@dataclass(frozen=True)
class PrecodedSignal:
    x: np.ndarray
    power: float


@dataclass(frozen=True)
class KktReport:
    lam: np.ndarray                   # I-constraint multipliers, one per user
    mu: np.ndarray                    # Q-constraint multipliers
    stationarity_residual: float
    max_constraint_violation: float
    active_set: tuple                 # indices 2j (I) / 2j+1 (Q) of binding inequalities
    rho: np.ndarray                   # normalized channel correlation matrix


def make_problem(channel, specs: list[ConstellationSpec], symbols, targets: SinrTargets,
                 mode: str = "relaxed") -> PrecodeProblem:
    """Assemble the per-slot problem for the given symbol indices."""
    h = channel.entries if isinstance(channel, ChannelMatrix) else np.asarray(channel, dtype=complex)
    k = h.shape[0]
    if len(specs) != k or len(symbols) != k or len(targets.zeta) != k:
        raise ValueError("specs, symbols and targets must all have one entry per user")
    cons = []
    for j in range(k):
        ci, cq = constraints_for(specs[j], int(symbols[j]), mode)
        s = np.sqrt(targets.zeta[j]) * targets.sigma_z
        cons.append((DetectionConstraint("I", ci.relation, s * ci.rhs_coeff),
                     DetectionConstraint("Q", cq.relation, s * cq.rhs_coeff)))
    return PrecodeProblem(channel=h, constraints=tuple(cons), mode=mode)


def _embed_rows(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Real functionals of u = [Re x; Im x] giving Re(h_j x) and Im(h_j x)."""
    a = np.hstack([h.real, -h.imag])
    b = np.hstack([h.imag, h.real])
    return a, b


def _problem_rows(problem: PrecodeProblem):
    """Sign-normalized rows: equalities (A u = b) and inequalities (A u >= b)."""
    a_all, b_all = _embed_rows(problem.channel)
    rows, rhs, is_eq, flips = [], [], [], []
    for j, (ci, cq) in enumerate(problem.constraints):
        for axis_row, con in ((a_all[j], ci), (b_all[j], cq)):
            if con.relation is Relation.EQUAL:
                rows.append(axis_row)
                rhs.append(con.rhs_coeff)
                is_eq.append(True)
                flips.append(1.0)
            else:
                s = 1.0 if con.rhs_coeff >= 0 else -1.0
                rows.append(s * axis_row)
                rhs.append(s * con.rhs_coeff)
                is_eq.append(False)
                flips.append(s)
    return (np.array(rows), np.array(rhs), np.array(is_eq, dtype=bool),
            np.array(flips))


def _lstsq_min_norm(a: np.ndarray, b: np.ndarray, rcond: float = 1e-12):
    if a.shape[0] == 0:
        return np.zeros(a.shape[1]), 0.0
    u = np.linalg.lstsq(a, b, rcond=rcond)[0]
    resid = float(np.linalg.norm(a @ u - b))
    return u, resid


def min_norm_qp(rows: np.ndarray, rhs: np.ndarray, is_eq: np.ndarray, *,
                max_iter: int, feas_tol: float = 1e-9, mult_tol: float = 1e-10,
                labels=None):
    """min ||u||^2 subject to mixed equality / >= rows, primal active set.

    Starts from the all-equality least-norm point, which is feasible by
    construction, then releases inequality rows whose multipliers say the
    norm can shrink by moving into the allowed half-space.
    Returns (u, nu) where nu holds the multipliers of the final working set
    (zero on inactive rows), with u = rows.T @ nu.
    """
    m = len(rhs)
    scale = 1.0 + float(np.max(np.abs(rhs), initial=0.0))
    u, resid = _lstsq_min_norm(rows, rhs)
    if resid > feas_tol * scale:
        gaps = np.abs(rows @ u - rhs)
        bad = [i if labels is None else labels[i] for i in np.nonzero(gaps > feas_tol * scale)[0]]
        raise InfeasibleConstraintsError(
            f"equality system inconsistent (residual {resid:.3e}); conflicting rows: {bad}",
            conflicts=bad)
    work = list(range(m))  # all rows active at the strict start
    ineq_ids = [i for i in range(m) if not is_eq[i]]
    for _ in range(max_iter):
        a_w = rows[work]
        u_star, resid = _lstsq_min_norm(a_w, rhs[work])
        if resid > feas_tol * scale:
            bad = [i if labels is None else labels[i] for i in work]
            raise InfeasibleConstraintsError(
                f"working-set system inconsistent (residual {resid:.3e})", conflicts=bad)
        if np.linalg.norm(u_star - u) <= 1e-12 * (1.0 + np.linalg.norm(u)):
            u = u_star
            nu_w = np.linalg.lstsq(a_w.T, u, rcond=1e-12)[0]
            worst, worst_val = None, -mult_tol
            for pos, i in enumerate(work):
                if not is_eq[i] and nu_w[pos] < worst_val:
                    worst, worst_val = i, nu_w[pos]
            if worst is None:
                nu = np.zeros(m)
                for pos, i in enumerate(work):
                    nu[i] = nu_w[pos]
                return u, nu
            work.remove(worst)
            continue
        d = u_star - u
        alpha, blocker = 1.0, None
        for i in ineq_ids:
            if i in work:
                continue
            g = float(rows[i] @ d)
            if g < -1e-14:
                ai = (rhs[i] - float(rows[i] @ u)) / g
                if ai < alpha:
                    alpha, blocker = max(ai, 0.0), i
        u = u + alpha * d
        if blocker is not None:
            work.append(blocker)
            work.sort()
    raise ActiveSetLimitError(f"active-set loop did not converge within {max_iter} iterations")


def _report(problem: PrecodeProblem, u: np.ndarray, nu: np.ndarray,
            rows: np.ndarray, rhs: np.ndarray, is_eq: np.ndarray,
            flips: np.ndarray) -> tuple[PrecodedSignal, KktReport]:
    nt = problem.n_antennas
    k = problem.k_users
    x = u[:nt] + 1j * u[nt:]
    # map working-set multipliers back to the unflipped I/Q frame
    nu_eff = flips * nu
    lam = -2.0 * nu_eff[0::2]
    mu = -2.0 * nu_eff[1::2]
    slack = rows @ u - rhs
    viol = np.where(is_eq, np.abs(slack), np.maximum(0.0, -slack))
    active = tuple(i for i in range(len(rhs)) if not is_eq[i] and abs(slack[i]) < 1e-9)
    norms = np.linalg.norm(problem.channel, axis=1)
    gram = problem.channel @ problem.channel.conj().T
    rho = gram / np.outer(norms, norms)
    resid = kkt_residual(problem, x, lam, mu)
    sig = PrecodedSignal(x=x, power=float(u @ u))
    rep = KktReport(lam=lam, mu=mu, stationarity_residual=resid,
                    max_constraint_violation=float(np.max(viol)),
                    active_set=active, rho=rho)
    return sig, rep


def kkt_residual(problem: PrecodeProblem, x: np.ndarray, lam: np.ndarray,
                 mu: np.ndarray) -> float:
    """Stationarity gap ||x + (1/2) sum_j (lam_j + i mu_j) h_j^H||.

    The sum is assembled from the norm-scaled unit channel directions, the
    same decomposition that underlies the correlation-matrix form of the
    stationarity system.
    """
    h = problem.channel
    norms = np.linalg.norm(h, axis=1)
    units = h / norms[:, None]
    c = (lam + 1j * mu) * norms
    s = -0.5 * (units.conj().T @ c)
    return float(np.linalg.norm(x - s))


def solve_cipm(problem: PrecodeProblem) -> tuple[PrecodedSignal, KktReport]:
    """Minimum-power transmit vector honoring every detection region."""
    rows, rhs, is_eq, flips = _problem_rows(problem)
    labels = [f"user{i // 2 + 1}/{'I' if i % 2 == 0 else 'Q'}" for i in range(len(rhs))]
    # release/block passes both consume an iteration, so the cap scales with
    # the constraint count and keeps a wide margin over observed worst cases
    u, nu = min_norm_qp(rows, rhs, is_eq, max_iter=20 * problem.k_users + 20, labels=labels)
    return _report(problem, u, nu, rows, rhs, is_eq, flips)


def solve_strict(problem: PrecodeProblem) -> tuple[PrecodedSignal, KktReport]:
    """All-equality variant: the received values hit the scaled symbols exactly."""
    rows, rhs, is_eq, flips = _problem_rows(problem)
    all_eq = np.ones_like(is_eq)
    labels = [f"user{i // 2 + 1}/{'I' if i % 2 == 0 else 'Q'}" for i in range(len(rhs))]
    u, nu = min_norm_qp(rows, rhs, all_eq, max_iter=20 * problem.k_users + 20, labels=labels)
    return _report(problem, u, nu, rows, rhs, all_eq, flips)


def solve_strict_equivalent(channel, specs, symbols, targets: SinrTargets,
                            reference: complex = REFERENCE_SYMBOL
                            ) -> tuple[PrecodedSignal, KktReport]:
    """Strict solve phrased on the effective channel with one common target.

    All users share the unit-modulus reference point; the per-user symbol
    amplitude and phase are absorbed into the channel rows. The optimal
    power matches the direct strict solve exactly.
    """
    ch = channel if isinstance(channel, ChannelMatrix) else ChannelMatrix(np.asarray(channel, dtype=complex))
    eq = effective_channel(ch, specs, symbols, reference)
    k = ch.k_users
    cons = []
    for j in range(k):
        s = np.sqrt(targets.zeta[j]) * targets.sigma_z
        cons.append((DetectionConstraint("I", Relation.EQUAL, s * reference.real),
                     DetectionConstraint("Q", Relation.EQUAL, s * reference.imag)))
    prob = PrecodeProblem(channel=eq.entries, constraints=tuple(cons), mode="strict")
    return solve_strict(prob)
