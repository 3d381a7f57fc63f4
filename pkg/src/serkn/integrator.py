"""Time stepping for diagonal implicit ERKN methods.

One step of an s-stage method with tableau (c, d, b, bbar, abar) on
q'' + M q = -grad U(q), V = h^2 M:

    Q_i   = phi0(c_i^2 V) q_n + h c_i phi1(c_i^2 V) p_n
            - h^2 sum_{j<=i} abar_ij(V) grad U(Q_j)
    q_n+1 = phi0(V) q_n + h phi1(V) p_n - h^2 sum_i bbar_i(V) grad U(Q_i)
    p_n+1 = -h M phi1(V) q_n + phi0(V) p_n - h sum_i b_i(V) grad U(Q_i)

Each implicitly coupled stage solves Q_i = predictor - h^2 abar_ii(V)
grad U(Q_i) by fixed-point iteration started at the predictor (the explicit
part, which is already the exact solution when grad U = 0).  The contraction
factor is h^2 ||abar_ii|| Lip(grad U); if it exceeds one the iteration
diverges and the step reports failure rather than silently producing junk.

All matrix functions are diagonal in the eigenbasis of M, precomputed once
per (method, problem, h) and reused across the whole trajectory.  The
gradient evaluated at the final accepted iterate of each stage is reused in
later predictors and in the q/p updates, so the gradient-evaluation count of
a step is exactly the total number of stage iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .phi import SpectralCache, phi_scalar, spectral_decompose
from .problems import Problem, classical_form
from .tableau import MethodTableau

__all__ = [
    "State",
    "SolveSettings",
    "Trajectory",
    "StageConvergenceError",
    "StepKernel",
    "solve_stage",
    "step",
    "integrate",
]


class StageConvergenceError(RuntimeError):
    """Fixed-point stage solve failed (h too large for the contraction)."""


@dataclass(frozen=True)
class State:
    """A point (t, q, p) of phase space; entries must be finite."""

    t: float
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.p))):
            raise ValueError("state entries must be finite")


@dataclass(frozen=True)
class SolveSettings:
    """Stepsize, horizon and stage-solve controls."""

    h: float
    t_end: float
    stage_tol: float = 1e-14
    max_iters: int = 50
    record_stride: int = 1

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError(f"h must be positive, got {self.h}")
        if not 0 < self.stage_tol < 1e-8:
            raise ValueError(f"stage_tol must be in (0, 1e-8), got {self.stage_tol}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")


@dataclass
class Trajectory:
    """Recorded states, Hamiltonian values and stage-solve statistics.

    ``stage_iters[k]`` is the largest per-stage iteration count of step k
    (every executed step, not only recorded ones); ``nfev`` counts gradient
    evaluations.  ``failure`` carries the message of the first error, with
    the trajectory truncated at the last completed step.
    """

    states: list = field(default_factory=list)
    energies: np.ndarray = None
    stage_iters: np.ndarray = None
    nfev: int = 0
    failure: str = None
    failed_at_step: int = None

    @property
    def times(self):
        return np.array([s.t for s in self.states])


class StepKernel:
    """Diagonal representations of every coefficient of one (method, M, h).

    Building the kernel evaluates all tableau functions at h^2 * eigenvalues,
    so denominator guards trip here, before any stepping.
    """

    def __init__(self, m: MethodTableau, cache: SpectralCache, h: float):
        if h <= 0:
            raise ValueError(f"h must be positive, got {h}")
        self.method = m
        self.cache = cache
        self.h = h
        lam = cache.eigenvalues
        v = h * h * lam
        s = m.stages

        def ev(f, arg):
            return np.array([f(x) for x in arg])

        self.prop_qq = ev(lambda u: phi_scalar(0, u), v)
        self.prop_qp = h * ev(lambda u: phi_scalar(1, u), v)
        self.prop_pq = -h * lam * ev(lambda u: phi_scalar(1, u), v)
        self.prop_pp = self.prop_qq
        self.stage_q = [ev(lambda u: phi_scalar(0, u), m.c[i] ** 2 * v) for i in range(s)]
        self.stage_p = [h * m.c[i] * ev(lambda u: phi_scalar(1, u), m.c[i] ** 2 * v)
                        for i in range(s)]
        self.abar_h2 = [[h * h * ev(m.a_bar[i][j], v) for j in range(i + 1)]
                        for i in range(s)]
        self.b_h = [h * ev(m.b[i], v) for i in range(s)]
        self.bbar_h2 = [h * h * ev(m.b_bar[i], v) for i in range(s)]
        # diagonal M decomposes to the exact identity basis; the transforms
        # are then bit-exact no-ops and are skipped
        self.identity_basis = bool((cache.basis == np.eye(cache.dim)).all())


def _fixed_point(pred, applier, grad_fn, tol, max_iters, what):
    """Solve Q = pred - applier(grad_fn(Q)) from Q0 = pred.

    Returns (Q, iterations, gradient-at-last-accepted-iterate, evals);
    evals == iterations.  Divergent iterations overflow harmlessly (the
    stop test never fires on non-finite values) and are reported after
    max_iters.
    """
    Q = pred
    g = grad_fn(Q)
    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(1, max_iters + 1):
            Qn = pred - applier(g)
            if float(np.abs(Qn - Q).max()) <= tol * (1.0 + float(np.abs(Q).max())):
                if not np.all(np.isfinite(Qn)):
                    raise StageConvergenceError(f"non-finite iterate in {what}")
                return Qn, it, g, it
            Q = Qn
            g = grad_fn(Q)
    if not np.all(np.isfinite(Q)):
        raise StageConvergenceError(f"non-finite iterate in {what}")
    raise StageConvergenceError(
        f"{what} did not converge in {max_iters} iterations "
        "(stepsize too large for the fixed-point contraction)")


def solve_stage(m: MethodTableau, prob: Problem, i: int, predictor: np.ndarray,
                diag_coeff_applier, h: float, settings: SolveSettings):
    """Solve stage i: Q_i = predictor - h^2 abar_ii(V) grad U(Q_i).

    ``diag_coeff_applier`` applies the matrix h^2 abar_ii(V); the iteration
    starts from the predictor and stops on the iterate difference
    ||Q_k+1 - Q_k||_inf <= stage_tol (1 + ||Q_k||_inf).
    """
    Q, iters, _, _ = _fixed_point(predictor, diag_coeff_applier,
                                  prob.grad_potential, settings.stage_tol,
                                  settings.max_iters,
                                  f"stage {i} of {m.name}")
    return Q, iters


def _advance(kernel: StepKernel, prob: Problem, q, p, settings: SolveSettings):
    """One step from raw (q, p); returns (q1, p1, max stage iters, grad evals)."""
    diagonal = kernel.identity_basis
    B = kernel.cache.basis
    qh = q if diagonal else B.T @ q
    ph = p if diagonal else B.T @ p
    s = kernel.method.stages
    grads_h = []
    max_iters_seen = 0
    evals = 0
    for i in range(s):
        pred_h = kernel.stage_q[i] * qh + kernel.stage_p[i] * ph
        for j in range(i):
            pred_h = pred_h - kernel.abar_h2[i][j] * grads_h[j]
        diag = kernel.abar_h2[i][i]
        if diagonal:
            pred = pred_h
            applier = lambda x, _d=diag: _d * x
        else:
            pred = B @ pred_h
            applier = lambda x, _d=diag: B @ (_d * (B.T @ x))
        _, iters, g, ev = _fixed_point(pred, applier, prob.grad_potential,
                                       settings.stage_tol, settings.max_iters,
                                       f"stage {i + 1} of {kernel.method.name}")
        grads_h.append(g if diagonal else B.T @ g)
        max_iters_seen = max(max_iters_seen, iters)
        evals += ev
    qh1 = kernel.prop_qq * qh + kernel.prop_qp * ph
    ph1 = kernel.prop_pq * qh + kernel.prop_pp * ph
    for i in range(s):
        qh1 = qh1 - kernel.bbar_h2[i] * grads_h[i]
        ph1 = ph1 - kernel.b_h[i] * grads_h[i]
    if diagonal:
        return qh1, ph1, max_iters_seen, evals
    return B @ qh1, B @ ph1, max_iters_seen, evals


def step(m: MethodTableau, prob: Problem, state: State, settings: SolveSettings,
         kernel: StepKernel = None) -> State:
    """Advance one step of size settings.h.

    Builds the spectral kernel on the fly when none is passed; drivers doing
    many steps should build it once.  Classical (frozen) tableaux expect the
    problem already in folded form (see :func:`serkn.problems.classical_form`);
    :func:`integrate` takes care of that automatically.
    """
    if kernel is None:
        kernel = StepKernel(m, spectral_decompose(prob.M), settings.h)
    q1, p1, _, _ = _advance(kernel, prob, state.q, state.p, settings)
    return State(t=state.t + settings.h, q=q1, p=p1)


def integrate(m: MethodTableau, prob: Problem, initial: State,
              settings: SolveSettings) -> Trajectory:
    """Step from initial.t to settings.t_end, recording every record_stride.

    The initial state and the final step are always recorded.  On a stage
    failure the trajectory is truncated at the last completed step with the
    error message stored in ``failure``.
    """
    run_prob = classical_form(prob) if m.classical else prob
    cache = spectral_decompose(run_prob.M)
    kernel = StepKernel(m, cache, settings.h)

    n_steps = max(0, round((settings.t_end - initial.t) / settings.h))
    if abs(initial.t + n_steps * settings.h - settings.t_end) > settings.h * (1 + 1e-9):
        raise ValueError(
            f"stepsize {settings.h} cannot reach t_end={settings.t_end} "
            f"from t0={initial.t} within one step")

    traj = Trajectory()
    q, p = initial.q.copy(), initial.p.copy()
    states = [State(t=initial.t, q=q, p=p)]
    energies = [run_prob.hamiltonian(q, p)]
    iters_log = np.zeros(n_steps, dtype=int)

    k = 0
    for k in range(1, n_steps + 1):
        try:
            q, p, it, ev = _advance(kernel, run_prob, q, p, settings)
        except StageConvergenceError as exc:
            traj.failure = str(exc)
            traj.failed_at_step = k
            iters_log = iters_log[: k - 1]
            break
        iters_log[k - 1] = it
        traj.nfev += ev
        if k % settings.record_stride == 0 or k == n_steps:
            t = initial.t + k * settings.h
            states.append(State(t=t, q=q, p=p))
            energies.append(run_prob.hamiltonian(q, p))

    traj.states = states
    traj.energies = np.array(energies)
    traj.stage_iters = iters_log
    return traj
