"""LMI assembly and the semidefinite programs: energy bound, robust excitation,
gain scheduling, the combined dual-control problem, and H-infinity baselines.

The excitation constraint ``D_T >= Dbar_T`` is enforced robustly over the
prior uncertainty by instantiating the spectral excitation bound at the
prior estimate and at every scenario draw of the parameters; an active-set
loop keeps only the binding draws inside the SDP and re-verifies the full
family at the numeric solution.  In squared-amplitude variables every
constraint is affine, so the convex relaxation around an iterate L is tight
after a single update from the presolve candidate, and the recorded
gamma_e sequence is non-increasing by construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .bounds import BoundConstants, UncertaintySamples
from .estimation import GaussianPrior
from .model import PerformanceIndex
from .sdp import LMI, STRICT_SHIFT, VERIFY_MARGIN, block_diag_expr, solve_sdp
from .spectral import ExplorationPlan, FrequencyGrid, transfer_matrices

EPS_GRID = tuple(np.round(np.arange(0.1, 0.95, 0.1), 2))
LAMBDA_GRID_GS = tuple(np.logspace(-3, 3, 13))


@dataclass
class GainScheduledController:
    """Gain-scheduling design point: u = Kx x + Ks w_s with Kx = M N^-1."""

    K_s: np.ndarray
    M: np.ndarray
    N: np.ndarray
    lambda_s: float
    lambda_u: float
    gamma_p: float

    def __post_init__(self):
        self.N = (np.asarray(self.N, dtype=float) + np.asarray(self.N, dtype=float).T) / 2
        if np.linalg.eigvalsh(self.N).min() <= 0:
            raise ValueError("N must be positive definite")
        self.M = np.asarray(self.M, dtype=float).reshape(1, -1)
        self.K_s = np.asarray(self.K_s, dtype=float).reshape(1, -1)

    @property
    def K_x(self) -> np.ndarray:
        return self.M @ np.linalg.inv(self.N)


@dataclass
class DualDesign:
    plan: ExplorationPlan | None
    controller: GainScheduledController | None
    status: str
    eps: float = 0.5
    gamma_p: float = np.nan

    @property
    def gamma_e(self) -> float:
        return self.plan.gamma_e if self.plan is not None else np.nan


# ---------------------------------------------------------------------------
# LMI builders
# ---------------------------------------------------------------------------

def energy_bound_lmi(Ue, gamma_e) -> LMI:
    """[[gamma_e, a'], [a, gamma_e I]] >= 0, i.e. sum a_i^2 <= gamma_e^2."""
    if isinstance(Ue, np.ndarray):
        a = np.diag(Ue) if Ue.ndim == 2 else Ue.ravel()
        q = a.size
        if np.isscalar(gamma_e):
            block = np.block([[np.atleast_2d(gamma_e), a[None, :]],
                              [a[:, None], gamma_e * np.eye(q)]])
            return LMI(block, "psd", "energy-bound")
        a = cp.Constant(a)
    else:
        a = cp.diag(Ue) if Ue.ndim == 2 else Ue
        q = a.shape[0]
    g = cp.reshape(gamma_e, (1, 1), order="F") if not np.isscalar(gamma_e) \
        else np.atleast_2d(float(gamma_e))
    q = a.shape[0]
    block = cp.bmat([[g, cp.reshape(a, (1, q), order="F")],
                     [cp.reshape(a, (q, 1), order="F"),
                      (gamma_e if not np.isscalar(gamma_e) else float(gamma_e)) * np.eye(q)]])
    return LMI(block, "psd", "energy-bound")


def _response_expr(V: np.ndarray, a_eff):
    """F = V diag(a_eff) split into real and imaginary parts (affine in a_eff)."""
    if isinstance(a_eff, np.ndarray):
        F = V @ np.diag(a_eff)
        return np.real(F), np.imag(F)
    D = cp.diag(a_eff)
    return np.real(V) @ D, np.imag(V) @ D


def exploration_lmi(eps: float, L: np.ndarray, Ue, V: np.ndarray, l: float,
                    Dbar_T, gamma_v1: float, T: int, cbar: float,
                    grid: FrequencyGrid, name: str = "exploration") -> LMI:
    """One instance of the guaranteed-excitation constraint, affine in (Ue, Dbar_T).

    ((1-eps)/(cbar n_phi)) Re(F L^H + L F^H - L L^H)
        - (1/(cbar n_phi)) ((1-eps)/eps) l^2 I - Dbar_T / T >= 0,

    with F = V diag(c_i a_i).  The linearization is tight at L = F and
    under-estimates Re(F F^H) for any L, so feasibility certifies the
    excitation bound at this V.  gamma_v1 >= 0.5 signals the prior
    uncertainty is too large for the guarantees and is rejected.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if gamma_v1 >= 0.5:
        raise ValueError("prior uncertainty too large for exploration guarantees "
                         f"(gamma_v1 = {gamma_v1:.3f} >= 0.5)")
    q = grid.n_lines
    ci = grid.line_coefficients
    a_eff = (ci * (np.diag(Ue) if (isinstance(Ue, np.ndarray) and Ue.ndim == 2) else Ue)
             if isinstance(Ue, np.ndarray) else cp.multiply(ci, Ue))
    Fr, Fi = _response_expr(V, a_eff)
    Lr, Li = np.real(L), np.imag(L)
    quad = Fr @ Lr.T + Lr @ Fr.T + Fi @ Li.T + Li @ Fi.T - Lr @ Lr.T - Li @ Li.T
    coeff = (1.0 - eps) / (cbar * q)
    floor = (1.0 / (cbar * q)) * ((1.0 - eps) / eps) * l**2
    block = coeff * quad - floor * np.eye(q) - Dbar_T / T
    return LMI(block, "psd", name)


def l2_perf_blocks(gamma_p, n_w: int, n_z: int):
    """(Q_p, S_p, R_p^-1) for the l2-gain index; gamma_p may be a cvxpy scalar."""
    if np.isscalar(gamma_p):
        return (-float(gamma_p) * np.eye(n_w), np.zeros((n_w, n_z)),
                float(gamma_p) * np.eye(n_z))
    return -gamma_p * np.eye(n_w), np.zeros((n_w, n_z)), gamma_p * np.eye(n_z)


def gain_scheduling_lmi(A0, B0, perf: PerformanceIndex, N, M, K_s=None,
                        lam_s: float = 1.0, lam_u: float = 1.0,
                        Rs_inv=None, Ru_inv=None, gamma_p=None,
                        perf_blocks=None, name: str = "gain-scheduling") -> LMI:
    """The synthesis matrix inequality for quadratic performance (< 0 required).

    Channels are included when their data is present: the scheduling channel
    needs (K_s, Rs_inv), the uncertainty channel needs Ru_inv.  With both
    channels removed this is the nominal state-feedback performance LMI; with
    only the uncertainty channel it is the robust synthesis used for the
    baseline.  Multiplier choice Q_s = Q_u = -I.
    """
    A0 = np.atleast_2d(np.asarray(A0, dtype=float))
    B0 = np.asarray(B0, dtype=float).reshape(A0.shape[0], 1)
    n = A0.shape[0]
    q = n + 1
    nz, nw = perf.n_z, perf.n_w
    C, Du, Dw = perf.C, perf.D_u, perf.D_w
    if perf_blocks is None:
        if gamma_p is None:
            Qp, Sp, Rp = perf.multiplier()
            Rp_inv = np.linalg.inv(Rp)
        else:
            Qp, Sp, Rp_inv = l2_perf_blocks(gamma_p, nw, nz)
    else:
        Qp, Sp, Rp_inv = perf_blocks
    sched = K_s is not None and Rs_inv is not None
    unc = Ru_inv is not None

    CN = C @ N + Du @ M
    NM = cp.vstack([N, M]) if not isinstance(N, np.ndarray) \
        else np.vstack([N, np.asarray(M).reshape(1, n)])
    tl = [-N]
    if sched:
        tl.append(-lam_s * np.eye(n))
    if unc:
        tl.append(-lam_u * np.eye(n))
    Sp_static = isinstance(Sp, np.ndarray) and not Sp.any()
    T44 = Qp + (0 if Sp_static else Dw.T @ Sp.T + Sp @ Dw)
    if Sp_static:
        tl.append(Qp)
    else:
        tl.append(T44)
    TL = block_diag_expr(tl)
    if not Sp_static:
        # cross terms between the performance rows and the z-map
        raise NotImplementedError("nonzero S_p cross terms are not supported")

    row_x = [A0 @ N + B0 @ M]
    if sched:
        row_x.append(np.eye(n) + B0 @ K_s)
    if unc:
        row_x.append(np.eye(n))
    row_x.append(np.eye(n) if nw == n else np.eye(n)[:, :nw])
    rows = [row_x]
    if sched:
        ZK = cp.vstack([np.zeros((n, n)), K_s]) if not isinstance(K_s, np.ndarray) \
            else np.vstack([np.zeros((n, n)), np.asarray(K_s).reshape(1, n)])
        r = [NM, ZK]
        if unc:
            r.append(np.zeros((q, n)))
        r.append(np.zeros((q, nw)))
        rows.append(r)
    if unc:
        r = [NM]
        if sched:
            r.append(ZK)
        r.append(np.zeros((q, n)))
        r.append(np.zeros((q, nw)))
        rows.append(r)
    row_z = [CN]
    if sched:
        row_z.append(Du @ K_s)
    if unc:
        row_z.append(np.zeros((nz, n)))
    row_z.append(Dw)
    rows.append(row_z)
    BL = cp.bmat(rows)

    dr = [-N]
    if sched:
        dr.append(-(1.0 / lam_s) * Rs_inv)
    if unc:
        dr.append(-(1.0 / lam_u) * Ru_inv)
    dr.append(-Rp_inv)
    DR = block_diag_expr(dr)
    big = cp.bmat([[TL, BL.T], [BL, DR]])
    return LMI(big, "nsd", name, shift=STRICT_SHIFT)


# ---------------------------------------------------------------------------
# H-infinity analysis and baselines
# ---------------------------------------------------------------------------

def hinf_lower_bound_freq(A, B, C, D, n_grid: int = 400) -> float:
    """Frequency-sweep lower bound on the H-infinity norm (dense grid)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    zs = np.exp(2j * np.pi * np.linspace(0.0, 0.5, n_grid))
    Ms = zs[:, None, None] * np.eye(n)[None] - A[None]
    Hs = C[None] @ np.linalg.solve(Ms, np.broadcast_to(B, (n_grid,) + B.shape)) + D[None]
    return float(np.linalg.norm(Hs, ord=2, axis=(1, 2)).max())


def closed_loop_hinf(A, B, C, D, tol: float = 1e-4) -> float:
    """H-infinity norm by bisection over the discrete bounded-real LMI.

    Returns the feasible upper endpoint, so the result upper-bounds the true
    norm to within ``tol`` (relative).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    D = np.atleast_2d(np.asarray(D, dtype=float))
    n = A.shape[0]
    if np.max(np.abs(np.linalg.eigvals(A))) >= 1.0:
        return np.inf
    nw = B.shape[1]

    def feasible(g):
        P = cp.Variable((n, n), symmetric=True)
        blk = cp.bmat([
            [A.T @ P @ A - P + C.T @ C / g, A.T @ P @ B + C.T @ D / g],
            [B.T @ P @ A + D.T @ C / g, B.T @ P @ B + D.T @ D / g - g * np.eye(nw)],
        ])
        res = solve_sdp(None, [LMI(blk, "nsd", "brl", 1e-9),
                               LMI(P, "psd", "P", 1e-9)])
        return res.ok

    lo = hinf_lower_bound_freq(A, B, C, D)
    hi = max(lo * 1.05, lo + 0.1)
    while not feasible(hi):
        hi = 2.0 * hi + 0.1
        if hi > 1e7:
            return np.inf
    lo = lo * 0.98
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def h_infinity_baseline(A, B, perf: PerformanceIndex, mode: str = "nominal",
                        D0=None, lam_grid=LAMBDA_GRID_GS):
    """State-feedback H-infinity synthesis level (and gain).

    ``nominal`` designs against the exact (A, B); ``robust`` reuses the
    gain-scheduling LMI with the scheduling channel removed and the
    uncertainty channel at the prior level (Ru_inv = D0).  gamma enters the
    LMI affinely and is minimized directly; the multiplier scalar is swept
    on a log grid in robust mode.  Returns (gamma, K).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], 1)
    n = A.shape[0]

    def design(lam_u, Ru_inv):
        N = cp.Variable((n, n), symmetric=True)
        M = cp.Variable((1, n))
        g = cp.Variable()
        lmi = gain_scheduling_lmi(A, B, perf, N, M, K_s=None, lam_u=lam_u,
                                  Ru_inv=Ru_inv, gamma_p=g, name="hinf-baseline")
        res = solve_sdp(g, [lmi, LMI(N, "psd", "N", STRICT_SHIFT)],
                        variables={"N": N, "M": M, "g": g})
        if not res.ok:
            return None
        return res.values["g"].item(), res.values["M"] @ np.linalg.inv(res.values["N"])

    if mode == "nominal":
        out = design(1.0, None)
        if out is None:
            raise RuntimeError("not stabilizable within the solver horizon")
        return out
    if mode != "robust":
        raise ValueError("mode must be 'nominal' or 'robust'")
    if D0 is None:
        raise ValueError("robust mode needs the prior shape D0")
    best = None
    for lam_u in lam_grid:
        out = design(float(lam_u), np.asarray(D0, dtype=float))
        if out is not None and (best is None or out[0] < best[0]):
            best = out
    if best is None:
        raise RuntimeError("robust design infeasible at every multiplier level")
    return best


# ---------------------------------------------------------------------------
# Exploration problem (robust family, active set, L-iteration)
# ---------------------------------------------------------------------------

def _family_tensor(V_hat: np.ndarray, samples: UncertaintySamples | None):
    Vfam = [V_hat] if samples is None else [V_hat] + list(samples.V)
    Vfam = np.stack(Vfam)
    # R[s, i] = Re(V_i V_i^H) per column i of sample s
    R = np.real(np.einsum("sji,ski->sijk", Vfam, Vfam.conj()))
    return Vfam, R


def _check_family(R: np.ndarray, p: np.ndarray, Dbar: np.ndarray, eps: float,
                  l: float, cbar: float, T: int):
    """min eigenvalue of the exact excitation constraint per family member."""
    q = p.size
    floor = (1.0 / (cbar * q)) * ((1.0 - eps) / eps) * l**2
    M = np.einsum("sijk,i->sjk", R, p) * ((1.0 - eps) / (cbar * q))
    M = M - floor * np.eye(q)[None] - Dbar[None] / T
    return np.linalg.eigvalsh(M).min(axis=1)


def _active_init(n_family: int, count: int = 24):
    step = max(1, n_family // count)
    return set(range(0, n_family, step))


def solve_exploration_problem(prior: GaussianPrior, grid: FrequencyGrid,
                              constants: BoundConstants,
                              samples: UncertaintySamples | None,
                              Dbar_T_goal: np.ndarray,
                              L_init: np.ndarray | None = None,
                              max_iters: int = 15,
                              sigma_w: float = 1.0,
                              max_rounds: int = 15) -> ExplorationPlan:
    """Minimum-energy amplitudes guaranteeing D_T >= Dbar_T_goal.

    Phase 1 solves the excitation family exactly in squared-amplitude
    variables with an active-set loop over the scenario draws.  Phase 2
    re-solves in amplitude variables with the linearized response Gram
    (iterate L), starting from the phase-1 candidate so the relaxation is
    tight; gamma_e is recorded per L-iteration and is non-increasing.
    """
    if constants.gamma_v1 >= 0.5:
        raise ValueError("prior uncertainty too large for exploration guarantees "
                         f"(gamma_v1 = {constants.gamma_v1:.3f} >= 0.5)")
    eps = constants.eps
    l = constants.l
    T = grid.T
    q = grid.n_lines
    ci = grid.line_coefficients
    cbar = sigma_w**2 * prior.c_delta
    A0, B0 = prior.mean_matrices()
    V_hat = transfer_matrices(A0, B0, grid).V
    goal = np.asarray(Dbar_T_goal, dtype=float)
    if np.linalg.eigvalsh((goal + goal.T) / 2).max() <= 0:
        # D_T >= 0 always holds; a nonpositive goal needs no excitation
        return ExplorationPlan(grid=grid, amplitudes=np.zeros(q), gamma_e=0.0,
                               Dbar_T=goal, gamma_e_history=[0.0])
    Vfam, R = _family_tensor(V_hat, samples)
    nfam = Vfam.shape[0]
    floor = (1.0 / (cbar * q)) * ((1.0 - eps) / eps) * l**2

    # ---- phase 1: exact solve in p_i = (c_i a_i)^2 ----
    goal_scale = max(np.abs(goal).max(), 1.0)
    med_tr = np.median([np.trace(R[0, i]) for i in range(q)])
    s2 = max(1.0, goal_scale / T * (cbar * q) / (1 - eps) / max(med_tr, 1e-12))
    active = _active_init(nfam)
    p_val = None
    for _ in range(max_rounds):
        p = cp.Variable(q, nonneg=True)
        lmis = []
        for s in sorted(active):
            lhs = ((1 - eps) / (cbar * q)) * sum(p[i] * R[s, i] for i in range(q))
            lmis.append(LMI(lhs - (floor / s2) * np.eye(q) - goal / (T * s2),
                            "psd", f"excitation[{s}]"))
        res = solve_sdp(cp.sum(p / ci**2), lmis, variables={"p": p})
        if not res.ok:
            return ExplorationPlan(grid=grid, amplitudes=np.zeros(q), gamma_e=np.inf,
                                   Dbar_T=goal, status=res.status)
        p_val = np.maximum(res.values["p"], 0) * s2
        mins = _check_family(R, p_val, goal, eps, l, cbar, T)
        tol = 1e-8 * max(1.0, np.abs(goal).max() / T)
        viol = np.where(mins < -tol)[0]
        if len(viol) == 0:
            break
        for v in viol[np.argsort(mins[viol])][:40]:
            active.add(int(v))
    else:
        return ExplorationPlan(grid=grid, amplitudes=np.zeros(q), gamma_e=np.inf,
                               Dbar_T=goal, status="active-set-stall")

    # ---- phase 2: amplitude form with linearized Gram, L-iteration ----
    if L_init is not None:
        a_eff = np.real(np.linalg.lstsq(V_hat, np.asarray(L_init), rcond=None)[0]).diagonal()
        cand = a_eff / ci
    else:
        cand = np.sqrt(p_val) / ci
    history = []
    a_sol = cand
    for it in range(max_iters):
        s = max(1.0, np.abs(ci * a_sol).max())
        Ue = cp.Variable(q)
        ge = cp.Variable()
        lmis = [energy_bound_lmi(Ue, ge)]
        for sn in sorted(active):
            Ls = Vfam[sn] @ np.diag(ci * a_sol / s)
            lmis.append(exploration_lmi(eps, Ls, Ue, Vfam[sn] / 1.0, l / s,
                                        goal / s**2, constants.gamma_v1, T,
                                        cbar, grid, name=f"expl-relaxed[{sn}]"))
        res = solve_sdp(ge, lmis, variables={"Ue": Ue, "ge": ge})
        if not res.ok:
            break
        a_new = res.values["Ue"].ravel() * s
        history.append(float(res.values["ge"].item() * s))
        mins = _check_family(R, (ci * a_new)**2, goal, eps, l, cbar, T)
        viol = np.where(mins < -1e-8 * max(1.0, np.abs(goal).max() / T))[0]
        if len(viol):
            for v in viol[np.argsort(mins[viol])][:40]:
                active.add(int(v))
            continue
        converged = (np.abs(a_new - a_sol).max() <= 1e-6 * max(1.0, np.abs(a_sol).max())
                     or (len(history) >= 2
                         and abs(history[-1] - history[-2]) <= 1e-9 * max(1.0, history[-2])))
        a_sol = a_new
        if converged:
            break
    if not history:
        # fall back to the exact phase-1 point
        a_sol = cand
        history = [float(np.linalg.norm(cand))]
    gamma_e = float(np.linalg.norm(a_sol))
    return ExplorationPlan(grid=grid, amplitudes=a_sol, gamma_e=gamma_e,
                           Dbar_T=goal, gamma_e_history=history, status="optimal")


# ---------------------------------------------------------------------------
# Combined dual-control problem
# ---------------------------------------------------------------------------

def _dual_point(prior, grid, constants, R, perf, gamma_p, eps, lam_s, lam_u,
                active, s_D, sigma_w):
    """One dual SDP at fixed (eps, lam_s, lam_u) and active sample set."""
    T, q = grid.T, grid.n_lines
    n = prior.n_x
    ci = grid.line_coefficients
    cbar = sigma_w**2 * prior.c_delta
    A0, B0 = prior.mean_matrices()
    D0 = prior.D0
    floor = (1.0 / (cbar * q)) * ((1.0 - eps) / eps) * constants.l**2
    p = cp.Variable(q, nonneg=True)
    Db = cp.Variable((q, q), symmetric=True)
    N = cp.Variable((n, n), symmetric=True)
    M = cp.Variable((1, n))
    Ks = cp.Variable((1, n))
    lmis = []
    for s in sorted(active):
        lhs = ((1 - eps) / (cbar * q)) * sum(p[i] * R[s, i] for i in range(q))
        lmis.append(LMI(lhs - (floor / s_D) * np.eye(q) - Db / T, "psd",
                        f"excitation[{s}]"))
    Ru_inv = D0 + s_D * Db
    lmis.append(gain_scheduling_lmi(A0, B0, perf, N, M, K_s=Ks, lam_s=lam_s,
                                    lam_u=lam_u, Rs_inv=D0, Ru_inv=Ru_inv,
                                    gamma_p=gamma_p))
    lmis.append(LMI(N, "psd", "N", STRICT_SHIFT))
    res = solve_sdp(cp.sum(p / ci**2), lmis,
                    variables={"p": p, "Db": Db, "N": N, "M": M, "Ks": Ks})
    if not res.ok:
        return None
    out = dict(p=np.maximum(res.values["p"], 0) * s_D,
               Dbar=s_D * (res.values["Db"] + res.values["Db"].T) / 2,
               N=res.values["N"], M=res.values["M"], Ks=res.values["Ks"])
    out["E"] = float(np.sum(out["p"] / ci**2))
    return out


def _dual_active_solve(prior, grid, constants, R, perf, gamma_p, eps, lam_s,
                       lam_u, sigma_w, active, s_D=1e4, max_rounds=12,
                       probe=False):
    """Active-set dual solve; ``active`` is shared and only ever grows, so
    accumulated binding samples carry over across line-search points."""
    T = grid.T
    cbar = sigma_w**2 * prior.c_delta
    for _ in range(1 if probe else max_rounds):
        cand = _dual_point(prior, grid, constants, R, perf, gamma_p, eps,
                           lam_s, lam_u, active, s_D, sigma_w)
        if cand is None:
            return None
        if probe:
            return cand
        mins = _check_family(R, cand["p"], cand["Dbar"], eps, constants.l, cbar, T)
        scale = max(1.0, np.abs(cand["Dbar"]).max() / T)
        viol = np.where(mins < -1e-7 * scale)[0]
        if len(viol) == 0:
            return cand
        for v in viol[np.argsort(mins[viol])][:40]:
            active.add(int(v))
    return None


def _zero_exploration_design(prior, grid, constants, perf, gamma_p, eps,
                             lam_grid, sigma_w):
    """Probe gamma_e = 0: Dbar_T = -T*floor*I absorbs the noise term exactly."""
    q = grid.n_lines
    n = prior.n_x
    cbar = sigma_w**2 * prior.c_delta
    floor = (1.0 / (cbar * q)) * ((1.0 - eps) / eps) * constants.l**2
    Dbar = -T_floor_matrix(floor, grid.T, q)
    Ru_inv = prior.D0 + Dbar
    if np.linalg.eigvalsh(Ru_inv).min() <= 0:
        return None
    A0, B0 = prior.mean_matrices()
    lam_grid = list(lam_grid)[::2] or list(lam_grid)
    for lam_s in lam_grid:
        for lam_u in lam_grid:
            N = cp.Variable((n, n), symmetric=True)
            M = cp.Variable((1, n))
            Ks = cp.Variable((1, n))
            lmi = gain_scheduling_lmi(A0, B0, perf, N, M, K_s=Ks,
                                      lam_s=float(lam_s), lam_u=float(lam_u),
                                      Rs_inv=prior.D0, Ru_inv=Ru_inv,
                                      gamma_p=gamma_p)
            res = solve_sdp(None, [lmi, LMI(N, "psd", "N", STRICT_SHIFT)],
                            variables={"N": N, "M": M, "Ks": Ks})
            if res.ok:
                ctrl = GainScheduledController(K_s=res.values["Ks"], M=res.values["M"],
                                               N=res.values["N"], lambda_s=float(lam_s),
                                               lambda_u=float(lam_u), gamma_p=gamma_p)
                plan = ExplorationPlan(grid=grid, amplitudes=np.zeros(q), gamma_e=0.0,
                                       Dbar_T=Dbar, gamma_e_history=[0.0])
                return plan, ctrl
    return None


def T_floor_matrix(floor: float, T: int, q: int) -> np.ndarray:
    return T * floor * np.eye(q)


def solve_dual_problem(prior: GaussianPrior, grid: FrequencyGrid,
                       constants: BoundConstants,
                       samples: UncertaintySamples | None,
                       perf: PerformanceIndex, gamma_p: float,
                       eps_grid=None, lam_grid=LAMBDA_GRID_GS,
                       sigma_w: float = 1.0, refine: bool = True) -> DualDesign:
    """Joint exploration + gain-scheduling design at a fixed performance level.

    Minimizes the exploration energy subject to the energy bound, the robust
    excitation family with Dbar_T as a free symmetric decision variable, and
    the gain-scheduling LMI with Ru_inv = D0 + Dbar_T.  The multiplier
    scalars (and optionally eps) are tuned by coordinate line search with the
    SDP in the inner loop.
    """
    if constants.gamma_v1 >= 0.5:
        raise ValueError("prior uncertainty too large for exploration guarantees")
    A0, B0 = prior.mean_matrices()
    V_hat = transfer_matrices(A0, B0, grid).V
    _, R = _family_tensor(V_hat, samples)
    eps_list = list(eps_grid) if eps_grid is not None else [constants.eps]

    zero = _zero_exploration_design(prior, grid, constants, perf, gamma_p,
                                    eps_list[0], lam_grid, sigma_w)
    if zero is not None:
        plan, ctrl = zero
        return DualDesign(plan=plan, controller=ctrl, status="optimal",
                          eps=eps_list[0], gamma_p=gamma_p)

    active = _active_init(R.shape[0])
    best = None

    def try_point(eps, lam_s, lam_u, probe=False):
        nonlocal best
        sol = _dual_active_solve(prior, grid, constants, R, perf, gamma_p,
                                 eps, lam_s, lam_u, sigma_w, active, probe=probe)
        if sol is not None and not probe and (best is None or sol["E"] < best[0]["E"]):
            best = (sol, eps, lam_s, lam_u)
        return sol

    # full 2-D probe to locate the feasible multiplier region (it can be a
    # narrow band in (lam_s, lam_u), so no grid thinning here)
    eps0 = eps_list[len(eps_list) // 2]
    scan = []
    for ls in lam_grid:
        for lu in lam_grid:
            sol = try_point(eps0, float(ls), float(lu), probe=True)
            if sol is not None:
                scan.append((sol["E"], float(ls), float(lu)))
    if not scan:
        return DualDesign(plan=None, controller=None,
                          status="performance target unreachable", gamma_p=gamma_p)
    _, ls0, lu0 = min(scan, key=lambda t: t[0])
    state = dict(eps=eps0, lam_s=ls0, lam_u=lu0)
    try_point(state["eps"], state["lam_s"], state["lam_u"])

    sweep_axes = [("lam_u", lam_grid), ("lam_s", lam_grid)]
    if len(eps_list) > 1:
        sweep_axes.append(("eps", eps_list))
    for axis, grid_vals in sweep_axes:
        results = []
        for v in grid_vals:
            kw = dict(state)
            kw[axis] = float(v)
            sol = try_point(kw["eps"], kw["lam_s"], kw["lam_u"])
            results.append((sol["E"] if sol else np.inf, v))
        Emin, vbest = min(results, key=lambda t: t[0])
        if np.isfinite(Emin):
            state[axis] = float(vbest)
    if refine and best is not None:
        for axis in ("lam_u", "lam_s"):
            v0 = state[axis]
            for v in np.logspace(np.log10(v0) - 0.5, np.log10(v0) + 0.5, 5):
                kw = dict(state)
                kw[axis] = float(v)
                try_point(kw["eps"], kw["lam_s"], kw["lam_u"])
    if best is None:
        return DualDesign(plan=None, controller=None,
                          status="performance target unreachable", gamma_p=gamma_p)
    sol, eps, lam_s, lam_u = best
    ci = grid.line_coefficients
    a = np.sqrt(sol["p"]) / ci
    plan = ExplorationPlan(grid=grid, amplitudes=a, gamma_e=float(np.linalg.norm(a)),
                           Dbar_T=sol["Dbar"], gamma_e_history=[float(np.linalg.norm(a))])
    ctrl = GainScheduledController(K_s=sol["Ks"], M=sol["M"], N=sol["N"],
                                   lambda_s=lam_s, lambda_u=lam_u, gamma_p=gamma_p)
    return DualDesign(plan=plan, controller=ctrl, status="optimal", eps=eps,
                      gamma_p=gamma_p)


def extract_controller(ctrl: GainScheduledController, A_hat0, B_hat0,
                       A_tilde, B_tilde) -> np.ndarray:
    """Explicit state feedback K from the scheduled controller.

    K = (I - K_s (B~ - B0))^-1 (K_x + K_s (A~ - A0)); the 1x1 factor must be
    bounded away from zero.
    """
    A0 = np.atleast_2d(np.asarray(A_hat0, dtype=float))
    B0 = np.asarray(B_hat0, dtype=float).reshape(-1, 1)
    At = np.atleast_2d(np.asarray(A_tilde, dtype=float))
    Bt = np.asarray(B_tilde, dtype=float).reshape(-1, 1)
    factor = 1.0 - (ctrl.K_s @ (Bt - B0)).item()
    if abs(factor) < 1e-10:
        raise ValueError("singular scheduling factor; feedback undefined")
    return (ctrl.K_x + ctrl.K_s @ (At - A0)) / factor
