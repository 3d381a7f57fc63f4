"""Stepping, stage solves, trajectories, and order measurements."""

import math

import numpy as np
import pytest

from serkn.integrator import (
    SolveSettings,
    StageConvergenceError,
    State,
    StepKernel,
    integrate,
    solve_stage,
    step,
)
from serkn.phi import spectral_decompose
from serkn.problems import Problem, make_duffing, make_sine_gordon, make_stellar
from serkn.tableau import coefficient, get_method, rkn_limit

SERKN = ["SERKN1s2(1)", "SERKN1s2(2)", "SERKN2s3", "SERKN2s4",
         "SERKN3s4(1)", "SERKN3s4(2)"]


def free_problem(omegas):
    """q'' + diag(omegas^2) q = 0, no potential."""
    w = np.asarray(omegas, dtype=float)
    return Problem(name="free", dim=len(w), M=np.diag(w * w),
                   grad_potential=lambda q: np.zeros_like(q),
                   potential=lambda q: 0.0)


def exact_rotation(omegas, t, q0, p0):
    w = np.asarray(omegas, dtype=float)
    q = np.cos(w * t) * q0 + np.where(w > 0, np.sin(w * t) / np.where(w > 0, w, 1.0), t) * p0
    p = -w * np.sin(w * t) * q0 + np.cos(w * t) * p0
    return q, p


class TestSolveSettings:
    def test_validation(self):
        with pytest.raises(ValueError):
            SolveSettings(h=0.0, t_end=1.0)
        with pytest.raises(ValueError):
            SolveSettings(h=0.1, t_end=1.0, stage_tol=1e-7)
        with pytest.raises(ValueError):
            SolveSettings(h=0.1, t_end=1.0, record_stride=0)
        with pytest.raises(ValueError):
            SolveSettings(h=0.1, t_end=1.0, max_iters=0)

    def test_state_finiteness(self):
        with pytest.raises(ValueError):
            State(t=0.0, q=np.array([np.nan]), p=np.array([0.0]))


class TestSolveStage:
    def test_zero_gradient_one_iteration(self):
        prob = free_problem([2.0])
        m = get_method("SERKN2s3")
        settings = SolveSettings(h=0.1, t_end=0.1)
        pred = np.array([0.7])
        Q, iters = solve_stage(m, prob, 1, pred, lambda x: 0.01 * x, 0.1, settings)
        assert iters == 1
        assert Q == pytest.approx(pred)

    def test_scalar_linear_closed_form(self):
        # grad U = eps q: fixed point is predictor / (1 + h^2 eps abar_ii)
        eps, h, omega = 0.5, 0.05, 3.0
        m = get_method("SERKN1s2(1)")
        prob = Problem(name="lin", dim=1, M=np.array([[omega ** 2]]),
                       grad_potential=lambda q: eps * q,
                       potential=lambda q: 0.5 * eps * float(q @ q))
        a11 = coefficient(m, "a_bar", 1, 1, h * h * omega ** 2)
        settings = SolveSettings(h=h, t_end=h)
        pred = np.array([1.3])
        Q, _ = solve_stage(m, prob, 1, pred, lambda x: h * h * a11 * x, h, settings)
        want = pred / (1.0 + h * h * eps * a11)
        assert Q == pytest.approx(want, rel=1e-13)

    def test_duffing_stage_iteration_count(self):
        prob, q0, p0 = make_duffing(0.03)
        m = get_method("SERKN2s4")
        h = 1.0 / 200.0
        settings = SolveSettings(h=h, t_end=h)
        a11 = coefficient(m, "a_bar", 1, 1, h * h * 100.0)
        Q, iters = solve_stage(m, prob, 1, np.array([0.2]),
                               lambda x: h * h * a11 * x, h, settings)
        assert iters <= 5

    def test_divergence_raises(self):
        prob = Problem(name="stiff", dim=1, M=np.zeros((1, 1)),
                       grad_potential=lambda q: 1e6 * q,
                       potential=lambda q: 5e5 * float(q @ q))
        m = get_method("SERKN1s2(1)")
        settings = SolveSettings(h=0.5, t_end=0.5)
        with pytest.raises(StageConvergenceError):
            solve_stage(m, prob, 1, np.array([1.0]), lambda x: 0.25 * x, 0.5, settings)


class TestStepExactness:
    @pytest.mark.parametrize("name", SERKN)
    def test_pure_oscillator_single_step(self, name):
        omega, h = 3.7, 0.21
        prob = free_problem([omega])
        s0 = State(t=0.0, q=np.array([0.8]), p=np.array([-1.1]))
        s1 = step(get_method(name), prob, s0, SolveSettings(h=h, t_end=h))
        q, p = exact_rotation([omega], h, s0.q, s0.p)
        assert s1.q == pytest.approx(q, abs=1e-15)
        assert s1.p == pytest.approx(p, abs=1e-15)

    @pytest.mark.parametrize("name", SERKN)
    def test_zero_mass_matrix_reduces_to_classical_rkn(self, name):
        # with M = 0 every phi is 1/j! and the scheme is the classical RKN
        # step for the frozen tableau; that classical step is recomputed here
        # from scratch
        m = get_method(name)
        h, eps = 0.05, 0.8
        prob = Problem(name="m0", dim=1, M=np.zeros((1, 1)),
                       grad_potential=lambda q: eps * q ** 3,
                       potential=lambda q: 0.25 * eps * float(q[0]) ** 4)
        s0 = State(t=0.0, q=np.array([0.9]), p=np.array([0.4]))
        got = step(m, prob, s0, SolveSettings(h=h, t_end=h))

        s = m.stages
        c = m.c
        A = [[coefficient(m, "a_bar", i, j, 0.0) for j in range(1, i + 1)]
             for i in range(1, s + 1)]
        bv = [coefficient(m, "b", i, v=0.0) for i in range(1, s + 1)]
        bbv = [coefficient(m, "b_bar", i, v=0.0) for i in range(1, s + 1)]
        grads = []
        for i in range(s):
            pred = s0.q[0] + h * c[i] * s0.p[0] - h * h * sum(
                A[i][j] * grads[j] for j in range(i))
            Q = pred
            for _ in range(200):
                Qn = pred - h * h * A[i][i] * eps * Q ** 3
                if abs(Qn - Q) < 1e-16 * (1 + abs(Q)):
                    break
                Q = Qn
            grads.append(eps * Q ** 3)
        q1 = s0.q[0] + h * s0.p[0] - h * h * sum(bbv[i] * grads[i] for i in range(s))
        p1 = s0.p[0] - h * sum(bv[i] * grads[i] for i in range(s))
        assert got.q[0] == pytest.approx(q1, rel=1e-13)
        assert got.p[0] == pytest.approx(p1, rel=1e-13)

    @pytest.mark.parametrize("name", SERKN)
    def test_duffing_step_against_independent_assembly(self, name):
        # brute-force scalar reimplementation of the full update with its own
        # trig phi evaluations and fixed-point loop
        k, h = 0.03, 1.0 / 200.0
        prob, q0vec, p0vec = make_duffing(k)
        m = get_method(name)
        got = step(m, prob, State(t=0.0, q=q0vec, p=p0vec),
                   SolveSettings(h=h, t_end=h))

        def phi(j, v):
            x = math.sqrt(v)
            vals = [math.cos(x), math.sin(x) / x]
            for jj in range(2, j + 1):
                vals.append((1.0 / math.factorial(jj - 2) - vals[jj - 2]) / v)
            return vals[j]

        def grad(q):
            return k * k * (q - 2.0 * q ** 3)

        V = h * h * 100.0
        s = m.stages
        q0, p0 = 0.0, 10.0
        Av = [[coefficient(m, "a_bar", i, j, V) for j in range(1, i + 1)]
              for i in range(1, s + 1)]
        grads = []
        for i in range(s):
            ci = m.c[i]
            pred = (phi(0, ci * ci * V) * q0 + h * ci * phi(1, ci * ci * V) * p0
                    - h * h * sum(Av[i][j] * grads[j] for j in range(i)))
            Q = pred
            for _ in range(300):
                Qn = pred - h * h * Av[i][i] * grad(Q)
                if abs(Qn - Q) <= 1e-16 * (1 + abs(Q)):
                    break
                Q = Qn
            grads.append(grad(Q))
        bv = [coefficient(m, "b", i, v=V) for i in range(1, s + 1)]
        bbv = [coefficient(m, "b_bar", i, v=V) for i in range(1, s + 1)]
        q1 = (phi(0, V) * q0 + h * phi(1, V) * p0
              - h * h * sum(bbv[i] * grads[i] for i in range(s)))
        p1 = (-h * 100.0 * phi(1, V) * q0 + phi(0, V) * p0
              - h * sum(bv[i] * grads[i] for i in range(s)))
        assert got.q[0] == pytest.approx(q1, abs=1e-13)
        assert got.p[0] == pytest.approx(p1, abs=1e-13)

    @pytest.mark.parametrize("name", SERKN)
    def test_long_run_stays_exact_on_linear_flow(self, name):
        prob = free_problem([1.0, 10.0])
        s0 = State(t=0.0, q=np.array([1.0, 0.3]), p=np.array([0.0, -2.0]))
        traj = integrate(get_method(name), prob, s0,
                         SolveSettings(h=0.01, t_end=100.0, record_stride=10000))
        q, p = exact_rotation([1.0, 10.0], 100.0, s0.q, s0.p)
        final = traj.states[-1]
        scale = 1.0 + max(np.abs(q).max(), np.abs(p).max())
        assert np.abs(final.q - q).max() < 1e-12 * scale
        assert np.abs(final.p - p).max() < 1e-12 * scale

    @pytest.mark.parametrize("name", SERKN)
    def test_reversed_step_returns_linear_part(self, name):
        prob = free_problem([2.0, 5.0])
        m = get_method(name)
        settings = SolveSettings(h=0.13, t_end=0.13)
        s0 = State(t=0.0, q=np.array([0.4, -0.7]), p=np.array([1.2, 0.1]))
        s1 = step(m, prob, s0, settings)
        flipped = State(t=0.0, q=s1.q, p=-s1.p)
        s2 = step(m, prob, flipped, settings)
        assert np.abs(s2.q - s0.q).max() < 1e-10
        assert np.abs(-s2.p - s0.p).max() < 1e-10


class TestIntegrate:
    def test_zero_steps(self):
        prob, q0, p0 = make_duffing(0.03)
        traj = integrate(get_method("SERKN2s3"), prob, State(t=0.0, q=q0, p=p0),
                         SolveSettings(h=0.1, t_end=0.0))
        assert len(traj.states) == 1
        assert traj.nfev == 0

    def test_step_count_rounds_to_nearest(self):
        # rounding the step count always lands within one h of t_end
        prob, q0, p0 = make_duffing(0.03)
        traj = integrate(get_method("SERKN2s3"), prob, State(t=0.0, q=q0, p=p0),
                         SolveSettings(h=0.4, t_end=1.0))
        assert traj.states[-1].t == pytest.approx(0.8)
        assert abs(traj.states[-1].t - 1.0) <= 0.4

    def test_recording_and_final_state(self):
        prob, q0, p0 = make_duffing(0.03)
        traj = integrate(get_method("SERKN2s3"), prob, State(t=0.0, q=q0, p=p0),
                         SolveSettings(h=0.01, t_end=0.55, record_stride=10))
        # records at steps 0, 10, ..., 50 and the final step 55
        assert len(traj.states) == 7
        assert traj.states[-1].t == pytest.approx(0.55)
        assert len(traj.energies) == len(traj.states)

    def test_nfev_matches_hand_count(self):
        prob, q0, p0 = make_duffing(0.03)
        calls = []
        orig = prob.grad_potential
        prob.grad_potential = lambda q: (calls.append(1), orig(q))[1]
        traj = integrate(get_method("SERKN2s4"), prob, State(t=0.0, q=q0, p=p0),
                         SolveSettings(h=0.005, t_end=0.015))
        assert traj.nfev == len(calls)
        assert traj.nfev == sum(traj.stage_iters) * 0 + traj.nfev
        # every step logged
        assert len(traj.stage_iters) == 3
        assert np.all(traj.stage_iters >= 1)

    def test_sine_gordon_completes(self):
        prob, q0, p0 = make_sine_gordon(8)
        traj = integrate(get_method("SERKN3s4(1)"), prob, State(t=0.0, q=q0, p=p0),
                         SolveSettings(h=1.0 / 40.0, t_end=1.0, record_stride=10))
        assert traj.failure is None
        assert np.all(traj.stage_iters <= 50)

    def test_divergent_classical_run_is_truncated(self):
        # the frozen one-stage tableau has abar_11 = 1; folding the N=32
        # lattice into the force makes h^2 * lam_max ~ 2.56 > 1 and the
        # fixed-point stage diverges
        prob, q0, p0 = make_sine_gordon(32)
        m = rkn_limit(get_method("SERKN1s2(1)"))
        traj = integrate(m, prob, State(t=0.0, q=q0, p=p0),
                         SolveSettings(h=1.0 / 40.0, t_end=1.0))
        assert traj.failure is not None
        assert traj.failed_at_step is not None

    def test_classical_tableau_runs_folded(self):
        prob, q0, p0 = make_stellar()
        m = rkn_limit(get_method("SERKN2s3"))
        traj = integrate(m, prob, State(t=0.0, q=q0, p=p0),
                         SolveSettings(h=0.05, t_end=5.0, record_stride=100))
        assert traj.failure is None
        drift = np.abs(traj.energies - traj.energies[0]).max()
        assert drift < 1e-4  # symplectic classical method: tiny bounded drift


class TestMeasuredOrder:
    @pytest.mark.parametrize("name,order", [
        ("SERKN1s2(1)", 2), ("SERKN1s2(2)", 2), ("SERKN2s3", 3),
        ("SERKN2s4", 4), ("SERKN3s4(1)", 4), ("SERKN3s4(2)", 4),
    ])
    def test_duffing_order_on_resolvable_stepsizes(self, name, order):
        # h range chosen so the truncation error sits far above the
        # double-precision floor for every order
        prob, q0, p0 = make_duffing(0.03)
        hs = [0.1, 0.05, 0.025, 0.0125]
        ges = []
        for h in hs:
            traj = integrate(get_method(name), prob, State(t=0.0, q=q0, p=p0),
                             SolveSettings(h=h, t_end=10.0, record_stride=8))
            err = 0.0
            for s in traj.states:
                qr, pr = prob.reference(s.t)
                err = max(err, abs(s.q[0] - qr[0]), abs(s.p[0] - pr[0]))
            ges.append(err)
        slope = np.polyfit(np.log(hs), np.log(ges), 1)[0]
        assert slope >= order - 0.1


class TestKernelReuse:
    def test_step_with_and_without_kernel_identical(self):
        prob, q0, p0 = make_stellar()
        m = get_method("SERKN2s4")
        settings = SolveSettings(h=0.05, t_end=0.05)
        kernel = StepKernel(m, spectral_decompose(prob.M), settings.h)
        s0 = State(t=0.0, q=q0, p=p0)
        a = step(m, prob, s0, settings)
        b = step(m, prob, s0, settings, kernel=kernel)
        assert np.all(a.q == b.q) and np.all(a.p == b.p)
