import cvxpy as cp
import numpy as np
import pytest

from targex.bounds import BoundConstants, draw_uncertainty_samples, scenario_constants
from targex.estimation import GaussianPrior
from targex.model import (PerformanceIndex, default_performance_index, simulate,
                          substream)
from targex.sdp import LMI, solve_sdp
from targex.spectral import FrequencyGrid, transfer_matrices
from targex.synthesis import (GainScheduledController, closed_loop_hinf,
                              energy_bound_lmi, exploration_lmi,
                              extract_controller, gain_scheduling_lmi,
                              h_infinity_baseline, hinf_lower_bound_freq,
                              solve_dual_problem, solve_exploration_problem)

from conftest import random_stable_system


# ---------------------------------------------------------------------------
# energy bound LMI
# ---------------------------------------------------------------------------

def test_energy_lmi_zero_block():
    lmi = energy_bound_lmi(np.zeros(3), 0.0)
    assert lmi.check(margin=1e-12)


def test_energy_lmi_equivalence_random():
    rng = np.random.default_rng(0)
    for _ in range(200):
        q = int(rng.integers(1, 6))
        a = rng.standard_normal(q) * rng.uniform(0.1, 10)
        ge = rng.uniform(0, 2) * np.linalg.norm(a)
        lmi = energy_bound_lmi(np.diag(a), float(ge))
        feasible = np.linalg.eigvalsh(lmi.value()).min() >= -1e-9 * max(1, ge)
        assert feasible == (np.sum(a**2) <= ge**2 * (1 + 1e-9) + 1e-12)


def test_energy_lmi_minimal_gamma():
    a = np.array([3.0, 4.0])
    Ue = cp.Constant(a)
    ge = cp.Variable()
    res = solve_sdp(ge, [energy_bound_lmi(Ue, ge)], variables={"ge": ge})
    assert res.ok
    assert res.values["ge"].item() == pytest.approx(5.0, rel=1e-6)


# ---------------------------------------------------------------------------
# exploration LMI
# ---------------------------------------------------------------------------

def _toy_grid():
    return FrequencyGrid(T=24, omegas=np.array([0.0, 0.125, 0.25]))


def test_exploration_lmi_gate():
    grid = _toy_grid()
    with pytest.raises(ValueError, match="gamma_v1"):
        exploration_lmi(0.5, np.zeros((3, 3)), np.zeros(3), np.eye(3), 0.0,
                        np.zeros((3, 3)), 0.6, 24, 1.0, grid)


def test_exploration_lmi_zero_inequality():
    grid = _toy_grid()
    lmi = exploration_lmi(0.5, np.zeros((3, 3)), np.zeros(3), np.eye(3), 0.0,
                          np.zeros((3, 3)), 0.1, 24, 1.0, grid)
    np.testing.assert_allclose(lmi.value(), 0, atol=1e-12)


def test_exploration_lmi_sign_consistent_with_exact_bound():
    # relaxed block feasible at the tangent point iff the exact bound dominates
    rng = np.random.default_rng(1)
    grid = _toy_grid()
    model = random_stable_system(rng, n=2, sigma_w=0.0)
    V = transfer_matrices(model.A, model.B, grid).V
    ci = grid.line_coefficients
    for _ in range(200):
        a = rng.standard_normal(3) * rng.uniform(0.5, 3)
        F = V @ np.diag(ci * a)
        goal = rng.standard_normal((3, 3))
        goal = goal @ goal.T * rng.uniform(0, 0.5)
        l = rng.uniform(0, 0.3)
        lmi = exploration_lmi(0.5, F, a, V, l, goal, 0.1, grid.T, 2.0, grid)
        exact = np.real(F @ F.conj().T)
        coeff = 0.5 / (2.0 * 3)
        floor = (1 / (2.0 * 3)) * 1.0 * l**2
        exact_block = coeff * exact - floor * np.eye(3) - goal / grid.T
        lhs_ok = np.linalg.eigvalsh(lmi.value()).min() >= -1e-9
        rhs_ok = np.linalg.eigvalsh(exact_block).min() >= -1e-9
        assert lhs_ok == rhs_ok  # tight at L = F


# ---------------------------------------------------------------------------
# gain-scheduling LMI and its Schur round trip
# ---------------------------------------------------------------------------

def _analysis_form(A0, B0, perf, N, M, Ks, lam_s, lam_u, Rs_inv, Ru_inv, gp):
    """Expanded quadratic inequality (pre-Schur, multiplied back by N^-1)."""
    n = A0.shape[0]
    X = np.linalg.inv(N)
    Kx = M @ X
    C, Du, Dw = perf.C, perf.D_u, perf.D_w
    nz, nw = perf.n_z, perf.n_w
    IKx = np.vstack([np.eye(n), Kx])
    ZKs = np.vstack([np.zeros((n, n)), Ks])
    rows = [
        np.hstack([np.eye(n), np.zeros((n, 2 * n + nw))]),
        np.hstack([A0 + B0 @ Kx, np.eye(n) + B0 @ Ks, np.eye(n), np.eye(n)[:, :nw]]),
        np.hstack([np.zeros((n, n)), np.eye(n), np.zeros((n, n + nw))]),
        np.hstack([IKx, ZKs, np.zeros((n + 1, n + nw))]),
        np.hstack([np.zeros((n, 2 * n)), np.eye(n), np.zeros((n, nw))]),
        np.hstack([IKx, ZKs, np.zeros((n + 1, n + nw))]),
        np.hstack([np.zeros((nw, 3 * n)), np.eye(nw)]),
        np.hstack([C + Du @ Kx, Du @ Ks, np.zeros((nz, n)), Dw]),
    ]
    O = np.vstack(rows)
    Rs = np.linalg.inv(Rs_inv)
    Ru = np.linalg.inv(Ru_inv)
    blocks = [-X, X, -lam_s * np.eye(n), lam_s * Rs, -lam_u * np.eye(n),
              lam_u * Ru, -gp * np.eye(nw), (1 / gp) * np.eye(nz)]
    Pi = np.zeros((O.shape[0], O.shape[0]))
    at = 0
    for blk in blocks:
        sz = blk.shape[0]
        Pi[at:at + sz, at:at + sz] = blk
        at += sz
    return O.T @ Pi @ O


def _feasible_gs_point(prior, perf, gamma_p, lam_s, lam_u, Dbar=None):
    n = prior.n_x
    A0, B0 = prior.mean_matrices()
    Ru_inv = prior.D0 + (Dbar if Dbar is not None else 0)
    N = cp.Variable((n, n), symmetric=True)
    M = cp.Variable((1, n))
    Ks = cp.Variable((1, n))
    lmi = gain_scheduling_lmi(A0, B0, perf, N, M, K_s=Ks, lam_s=lam_s,
                              lam_u=lam_u, Rs_inv=prior.D0, Ru_inv=Ru_inv,
                              gamma_p=gamma_p)
    res = solve_sdp(None, [lmi, LMI(N, "psd", "N", 1e-7)],
                    variables={"N": N, "M": M, "Ks": Ks})
    if not res.ok:
        return None
    return res.values


def _small_paper_prior():
    A = np.array([[0.4, 0.3], [0.0, 0.4]])
    B = np.array([[0.2], [1.0]])
    theta = np.concatenate([A, B], axis=1).flatten(order="F")
    ref = GaussianPrior(theta_prior=theta, Dtilde0=np.eye(3), delta=0.05, n_x=2)
    return GaussianPrior(theta_prior=theta, Dtilde0=ref.c_delta * 500 * np.eye(3),
                         delta=0.05, n_x=2)


def test_gain_scheduling_schur_roundtrip():
    # assembled LMI < 0 iff the expanded quadratic inequality < 0,
    # checked at a feasible point, scaled copies, and random perturbations
    rng = np.random.default_rng(2)
    prior = _small_paper_prior()
    perf = default_performance_index(2)
    A0, B0 = prior.mean_matrices()
    base = _feasible_gs_point(prior, perf, gamma_p=8.0, lam_s=10.0, lam_u=10.0)
    assert base is not None
    agree = 0
    total = 0
    for trial in range(200):
        N = base["N"] + 0.3 * rng.standard_normal((2, 2)) * rng.uniform(0, 1)
        N = (N + N.T) / 2
        if np.linalg.eigvalsh(N).min() <= 1e-6:
            continue
        M = base["M"] + 0.5 * rng.standard_normal((1, 2))
        Ks = base["Ks"] + 0.5 * rng.standard_normal((1, 2))
        lmi = gain_scheduling_lmi(A0, B0, perf, N, M, K_s=Ks, lam_s=10.0,
                                  lam_u=10.0, Rs_inv=prior.D0, Ru_inv=prior.D0,
                                  gamma_p=8.0)
        big = np.linalg.eigvalsh(lmi.value()).max() < 0
        expanded = _analysis_form(A0, B0, perf, N, M, Ks, 10.0, 10.0,
                                  prior.D0, prior.D0, 8.0)
        small = np.linalg.eigvalsh(expanded).max() < 0
        total += 1
        agree += big == small
    assert total >= 150
    assert agree == total


def test_gs_lmi_rejects_nonzero_Sp():
    perf = PerformanceIndex(C=np.eye(2), D_u=np.zeros((2, 1)), D_w=np.eye(2),
                            Q_p=-np.eye(2), S_p=np.ones((2, 2)), R_p=np.eye(2))
    with pytest.raises(NotImplementedError):
        gain_scheduling_lmi(np.zeros((2, 2)), np.ones((2, 1)), perf,
                            np.eye(2), np.zeros((1, 2)), gamma_p=None)


# ---------------------------------------------------------------------------
# H-infinity machinery
# ---------------------------------------------------------------------------

def test_hinf_nominal_scalar_matches_freq_oracle():
    perf = default_performance_index(1)
    g, K = h_infinity_baseline(np.array([[0.5]]), np.array([[1.0]]), perf)
    Acl = np.array([[0.5]]) + K
    achieved = hinf_lower_bound_freq(Acl, np.eye(1), perf.C + perf.D_u @ K,
                                     perf.D_w, n_grid=2000)
    assert achieved <= g + 1e-6
    assert achieved == pytest.approx(g, rel=2e-2)


def test_hinf_static_channel():
    # A = 0 and z = u only: K = 0 admissible, gain = ||D_w|| = 0 structure;
    # with D_w nonzero the static channel floor is ||D_w||
    perf = PerformanceIndex(C=np.zeros((1, 1)), D_u=np.zeros((1, 1)),
                            D_w=0.7 * np.eye(1))
    g, K = h_infinity_baseline(np.zeros((1, 1)), np.ones((1, 1)), perf)
    assert g >= 0.7 - 1e-6
    assert g == pytest.approx(0.7, rel=5e-2)


def test_hinf_robust_geq_nominal(paper_model, paper_prior):
    perf = default_performance_index(4)
    g_nom, _ = h_infinity_baseline(paper_model.A, paper_model.B, perf)
    A0, B0 = paper_prior.mean_matrices()
    g_rob, _ = h_infinity_baseline(A0, B0, perf, mode="robust", D0=paper_prior.D0)
    assert g_rob >= g_nom - 1e-6


def test_closed_loop_hinf_brackets_freq_sweep():
    rng = np.random.default_rng(3)
    for _ in range(5):
        m = random_stable_system(rng, n=3)
        C = rng.standard_normal((2, 3))
        D = rng.standard_normal((2, 3)) * 0.1
        lo = hinf_lower_bound_freq(m.A, np.eye(3), C, D, n_grid=3000)
        hi = closed_loop_hinf(m.A, np.eye(3), C, D, tol=1e-4)
        assert lo <= hi + 1e-9
        assert hi <= lo * 1.01 + 1e-6


def test_closed_loop_hinf_unstable_is_inf():
    assert closed_loop_hinf(np.array([[1.2]]), np.eye(1), np.eye(1),
                            np.zeros((1, 1))) == np.inf


# ---------------------------------------------------------------------------
# controller extraction
# ---------------------------------------------------------------------------

def _controller(Ks, Kx):
    n = Kx.shape[1]
    N = np.eye(n)
    return GainScheduledController(K_s=Ks, M=Kx, N=N, lambda_s=1.0,
                                   lambda_u=1.0, gamma_p=1.0)


def test_extract_zero_scheduling():
    Kx = np.array([[0.3, -0.2]])
    ctrl = _controller(np.zeros((1, 2)), Kx)
    A0 = np.zeros((2, 2))
    B0 = np.ones((2, 1))
    K = extract_controller(ctrl, A0, B0, A0 + 0.1, B0 + 0.1)
    np.testing.assert_allclose(K, Kx)


def test_extract_zero_shift():
    Kx = np.array([[0.3, -0.2]])
    ctrl = _controller(np.array([[0.5, 0.1]]), Kx)
    A0 = np.zeros((2, 2))
    B0 = np.ones((2, 1))
    K = extract_controller(ctrl, A0, B0, A0, B0)
    np.testing.assert_allclose(K, Kx)


def test_extract_matches_implicit_fixed_point():
    rng = np.random.default_rng(4)
    for _ in range(20):
        Kx = rng.standard_normal((1, 3)) * 0.4
        Ks = rng.standard_normal((1, 3)) * 0.3
        A0 = rng.standard_normal((3, 3)) * 0.3
        B0 = rng.standard_normal((3, 1))
        dA = rng.standard_normal((3, 3)) * 0.1
        dB = rng.standard_normal((3, 1)) * 0.1
        ctrl = _controller(Ks, Kx)
        K = extract_controller(ctrl, A0, B0, A0 + dA, B0 + dB)
        x = rng.standard_normal(3)
        # implicit loop: u = Kx x + Ks (dA x + dB u)
        u = np.linalg.solve(np.eye(1) - Ks @ dB, Kx @ x + Ks @ dA @ x)
        assert abs(u.item() - (K @ x).item()) <= 1e-10 * max(1, abs(u.item()))


def test_extract_singular_factor():
    Kx = np.array([[0.1]])
    ctrl = _controller(np.array([[1.0]]), Kx)
    with pytest.raises(ValueError, match="singular"):
        extract_controller(ctrl, np.zeros((1, 1)), np.zeros((1, 1)),
                           np.zeros((1, 1)), np.ones((1, 1)))


# ---------------------------------------------------------------------------
# exploration and dual solves (small instance)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_setup():
    prior = _small_paper_prior()
    grid = FrequencyGrid(T=24, omegas=np.array([0.0, 0.125, 0.25]))
    consts, samples = scenario_constants(prior, grid, 1.0, 1e-6, substream(20))
    return prior, grid, consts, samples


def test_zero_goal_shortcut(small_setup):
    prior, grid, consts, samples = small_setup
    plan = solve_exploration_problem(prior, grid, consts, samples,
                                     np.zeros((3, 3)))
    assert plan.gamma_e == 0.0
    np.testing.assert_allclose(plan.amplitudes, 0)


def test_exploration_monotone_history(small_setup):
    prior, grid, consts, samples = small_setup
    goal = np.diag([50.0, 0.0, 0.0])
    plan = solve_exploration_problem(prior, grid, consts, samples, goal,
                                     sigma_w=1.0)
    assert plan.status == "optimal"
    hist = plan.gamma_e_history
    assert len(hist) >= 1
    assert all(hist[i + 1] <= hist[i] * (1 + 1e-6) + 1e-9
               for i in range(len(hist) - 1))
    assert np.sum(plan.amplitudes**2) <= plan.gamma_e**2 * (1 + 1e-9)


def test_exploration_goal_scaling_with_zero_noise(small_setup):
    prior, grid, consts, samples = small_setup
    noiseless = BoundConstants(gamma_v_bar=consts.gamma_v_bar,
                               gamma_v=consts.gamma_v, gamma_y=consts.gamma_y,
                               gamma_v1=consts.gamma_v1, l1=0.0, l=0.0,
                               eps=consts.eps)
    goal = np.diag([10.0, 0.0, 0.0])
    p1 = solve_exploration_problem(prior, grid, noiseless, samples, goal)
    p2 = solve_exploration_problem(prior, grid, noiseless, samples, 4.0 * goal)
    assert p1.status == p2.status == "optimal"
    assert p2.gamma_e == pytest.approx(2.0 * p1.gamma_e, rel=1e-3)


def test_exploration_guarantee_small_instance(small_setup):
    # Monte Carlo check of the excitation guarantee on the toy system
    prior, grid, consts, samples = small_setup
    goal = np.diag([50.0, 0.0, 0.0])
    plan = solve_exploration_problem(prior, grid, consts, samples, goal)
    from targex.spectral import generate_input
    from targex.model import SystemModel, simulate
    from targex.estimation import unvec_theta
    A, B = prior.mean_matrices()
    model = SystemModel(A=A, B=B, sigma_w=1.0)
    u = generate_input(plan)
    ok = 0
    for t in range(40):
        traj = simulate(model, u, rng=substream(21, t))
        D_T = traj.gram() / prior.c_delta
        ok += np.linalg.eigvalsh(D_T - goal).min() >= -1e-6 * np.linalg.norm(goal)
    assert ok >= 39


def test_dual_zero_exploration_at_loose_gamma(small_setup):
    prior, grid, consts, samples = small_setup
    perf = default_performance_index(2)
    A0, B0 = prior.mean_matrices()
    g_rob, _ = h_infinity_baseline(A0, B0, perf, mode="robust", D0=prior.D0)
    design = solve_dual_problem(prior, grid, consts, samples, perf,
                                gamma_p=3.0 * g_rob)
    assert design.status == "optimal"
    assert design.gamma_e <= 1e-6


def test_dual_infeasible_below_nominal(small_setup):
    prior, grid, consts, samples = small_setup
    perf = default_performance_index(2)
    A0, B0 = prior.mean_matrices()
    g_nom, _ = h_infinity_baseline(A0, B0, perf)
    design = solve_dual_problem(prior, grid, consts, samples, perf,
                                gamma_p=0.9 * g_nom)
    assert design.status == "performance target unreachable"
