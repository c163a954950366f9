"""Constants feeding the exploration design: transfer-matrix bounds and noise radii.

Two routes are provided for each uncertain constant: a robust LMI route
(open-loop H-infinity bounds with the prior uncertainty multiplier) and a
sample-based scenario route.  The scenario route is the default used by the
experiments; the LMI route serves as a conservative cross-check.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .estimation import GaussianPrior
from .sdp import LMI, STRICT_SHIFT, block_diag_expr, solve_sdp
from .spectral import FrequencyGrid, transfer_matrices, transfer_matrices_batch

LAMBDA_GRID = np.logspace(-4, 4, 25)


@dataclass
class BoundConstants:
    """Scalar bounds entering the exploration problem.

    gamma_v_bar bounds each transfer-error column ||V~_i||; gamma_v the full
    block ||V~||; gamma_y the stacked resolvent block ||Y||; l1 the noise-line
    block ||W||; l = gamma_y * l1 bounds ||W~|| = ||Y W||.  eps is the
    Young-inequality split of the excitation bound.
    """

    gamma_v_bar: float
    gamma_v: float
    gamma_y: float
    gamma_v1: float
    l1: float
    l: float
    eps: float = 0.5
    methods: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("gamma_v_bar", "gamma_v", "gamma_y", "gamma_v1", "l1", "l"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass
class UncertaintySamples:
    """Scenario draws of the parameters with their transfer matrices.

    ``V`` holds one transfer matrix per accepted draw; draws outside the
    prior credibility ellipsoid or spectrally unstable are rejected and
    counted.
    """

    thetas: np.ndarray          # (N, n_x * n_phi)
    V: np.ndarray               # (N, n_phi, n_phi) complex
    y_norms: np.ndarray         # (N,)
    n_requested: int
    n_rejected_outside: int
    n_rejected_unstable: int

    @property
    def n_accepted(self) -> int:
        return self.thetas.shape[0]


@dataclass
class ScenarioConfig:
    delta: float
    beta: float
    d: int = 1

    @property
    def n_samples(self) -> int:
        return scenario_sample_count(self.delta, self.beta, self.d)


def noise_line_radius(sigma_w: float, T: int) -> float:
    """Per-component standard deviation of a noise spectral line: sigma_w / sqrt(T)."""
    if T < 1:
        raise ValueError("T must be at least 1")
    return sigma_w / math.sqrt(T)


def scenario_sample_count(delta: float, beta: float, d: int = 1) -> int:
    """Smallest sample count N_s >= (2/delta)(ln(1/beta) + d)."""
    if not (0 < delta < 1 and 0 < beta < 1):
        raise ValueError("delta and beta must lie in (0, 1)")
    if d < 1:
        raise ValueError("d must be at least 1")
    return int(math.ceil((2.0 / delta) * (math.log(1.0 / beta) + d)))


def l1_analytic(n_phi: int, delta: float, C_w: float, L_w: float) -> float:
    """Operator-norm tail bound 2 C_w L_w (2 sqrt(n_phi) + t), t = sqrt(log(2/delta)).

    The absolute constants C_w, L_w must be supplied by the caller; the
    scenario route avoids them entirely.
    """
    t = math.sqrt(math.log(2.0 / delta))
    return 2.0 * C_w * L_w * (2.0 * math.sqrt(n_phi) + t)


def sample_noise_norms(n_x: int, sigma_wbar: float, n_samples: int, rng) -> np.ndarray:
    """Operator norms of n_x x n_x matrices with i.i.d. N(0, sigma_wbar^2) entries."""
    if sigma_wbar == 0:
        return np.zeros(n_samples)
    W = rng.standard_normal((n_samples, n_x, n_x)) * sigma_wbar
    return np.linalg.norm(W, ord=2, axis=(1, 2))


def l1_scenario(n_x: int, n_phi: int, sigma_wbar: float, delta: float,
                beta: float, rng) -> float:
    """Scenario estimate of the noise-line block norm bound l1.

    Draws N_s Gaussian matrices, sorts by operator norm and returns the
    ceil((1-delta) N_s)-th smallest: the largest norm kept after discarding
    the delta-tail.
    """
    n_s = scenario_sample_count(delta, beta, d=1)
    norms = np.sort(sample_noise_norms(n_x, sigma_wbar, n_s, rng))
    k = int(math.ceil((1.0 - delta) * n_s))
    return float(norms[k - 1])


def draw_uncertainty_samples(prior: GaussianPrior, grid: FrequencyGrid,
                             n_samples: int, rng) -> UncertaintySamples:
    """Sample parameters from the prior, keep those in Theta_0 and Schur stable."""
    thetas = prior.sample_parameters(rng, n_samples)
    region = prior.theta0_region()
    forms = np.array([region.quadratic_form(th) for th in thetas])
    keep = forms <= 1.0
    n_outside = int(n_samples - keep.sum())
    thetas = thetas[keep]
    Mats = thetas.reshape(len(thetas), prior.n_x, prior.n_phi, order="F")
    rho = np.array([np.max(np.abs(np.linalg.eigvals(m[:, :prior.n_x]))) for m in Mats])
    stable = rho < 1.0
    n_unstable = int(len(thetas) - stable.sum())
    thetas = thetas[stable]
    if n_outside + n_unstable > 0.5 * n_samples:
        warnings.warn("more than half of the scenario draws were rejected")
    V, y_norms = transfer_matrices_batch(thetas, prior.n_x, grid)
    return UncertaintySamples(thetas=thetas, V=V, y_norms=y_norms,
                              n_requested=n_samples,
                              n_rejected_outside=n_outside,
                              n_rejected_unstable=n_unstable)


def whitening_matrix(V_hat: np.ndarray) -> np.ndarray:
    """X = (Vhat^H Vhat)^{-1/2} (complex Hermitian inverse square root)."""
    G = V_hat.conj().T @ V_hat
    w, U = np.linalg.eigh(G)
    if w.min() <= 0:
        raise ValueError("Vhat is rank deficient")
    return U @ np.diag(w**-0.5) @ U.conj().T


def gamma_v1_from_samples(samples: UncertaintySamples, V_hat: np.ndarray) -> float:
    X = whitening_matrix(V_hat)
    diffs = samples.V - V_hat[None]
    return float(max(np.linalg.norm(Vt @ X, 2) for Vt in diffs))


def gamma_v1_scenario(prior: GaussianPrior, grid: FrequencyGrid, delta: float,
                      beta: float, rng) -> float:
    """Scenario bound on ||V~ X||: max over N_s prior draws restricted to Theta_0."""
    n_s = scenario_sample_count(delta, beta, d=1)
    samples = draw_uncertainty_samples(prior, grid, n_s, rng)
    A0, B0 = prior.mean_matrices()
    V_hat = transfer_matrices(A0, B0, grid).V
    return gamma_v1_from_samples(samples, V_hat)


def scenario_constants(prior: GaussianPrior, grid: FrequencyGrid, sigma_w: float,
                       beta: float, rng, eps: float = 0.5):
    """One scenario pass producing all sampled constants.

    Returns (BoundConstants, UncertaintySamples).  gamma_v / gamma_v_bar /
    gamma_v1 / gamma_y are maxima over the same N_s(d=1) parameter draws;
    l1 comes from an independent noise-matrix draw; l = gamma_y * l1.
    """
    delta = prior.delta
    n_s = scenario_sample_count(delta, beta, d=1)
    samples = draw_uncertainty_samples(prior, grid, n_s, rng)
    A0, B0 = prior.mean_matrices()
    V_hat = transfer_matrices(A0, B0, grid).V
    diffs = samples.V - V_hat[None]
    gamma_v = float(max(np.linalg.norm(Vt, 2) for Vt in diffs))
    gamma_v_bar = float(max(np.linalg.norm(Vt, axis=0).max() for Vt in diffs))
    gamma_v1 = gamma_v1_from_samples(samples, V_hat)
    gamma_y = float(samples.y_norms.max())
    sigma_wbar = noise_line_radius(sigma_w, grid.T)
    l1 = l1_scenario(prior.n_x, prior.n_phi, sigma_wbar, delta, beta, rng)
    consts = BoundConstants(gamma_v_bar=gamma_v_bar, gamma_v=gamma_v,
                            gamma_y=gamma_y, gamma_v1=gamma_v1, l1=l1,
                            l=gamma_y * l1, eps=eps,
                            methods={k: "scenario" for k in
                                     ("gamma_v", "gamma_y", "gamma_v1", "l1")})
    return consts, samples


# ---------------------------------------------------------------------------
# LMI routes (open-loop robust H-infinity bounds, prior uncertainty multiplier)
# ---------------------------------------------------------------------------

def _min_gamma_over_lambda(build, lam_grid=LAMBDA_GRID, refine: bool = True):
    """Minimize the H-inf level over the multiplier scalar on a log grid.

    ``build(lam)`` returns (objective_value, status) via a direct SDP solve;
    the grid is refined once around the best point.
    """
    def sweep(grid):
        best = (np.inf, None)
        for lam in grid:
            val = build(lam)
            if val is not None and val < best[0]:
                best = (val, lam)
        return best

    best_val, best_lam = sweep(lam_grid)
    if best_lam is None:
        return None, None
    if refine:
        idx = int(np.argmin(np.abs(np.log(lam_grid) - np.log(best_lam))))
        lo = lam_grid[max(idx - 1, 0)]
        hi = lam_grid[min(idx + 1, len(lam_grid) - 1)]
        fine = np.logspace(np.log10(lo), np.log10(hi), 9)
        v2, l2 = sweep(fine)
        if l2 is not None and v2 < best_val:
            best_val, best_lam = v2, l2
    return best_val, best_lam


def gamma_v_lmi(A_hat0, B_hat0, D0, lam_grid=LAMBDA_GRID):
    """Robust bound on each column ||V~_i|| over Theta_0 via the stacked open loop.

    The augmented system runs the nominal and the true dynamics side by side,
    with the truth reconstructed through the prior uncertainty channel
    w_u = Delta_0 [x; u] and Delta_0' Delta_0 <= D0^{-1}.  Returns
    (gamma_v_bar, gamma_v) with gamma_v = gamma_v_bar * sqrt(n_phi).
    """
    A0 = np.atleast_2d(np.asarray(A_hat0, dtype=float))
    B0 = np.asarray(B_hat0, dtype=float).reshape(A0.shape[0], 1)
    n = A0.shape[0]
    q = n + 1
    D0 = np.asarray(D0, dtype=float)
    AA = np.block([[A0, np.zeros((n, n))], [np.zeros((n, n)), A0]])
    Ewu = np.vstack([np.zeros((n, n)), np.eye(n)])
    BB = np.vstack([B0, B0])
    Czu = np.block([[np.zeros((n, n)), np.eye(n)], [np.zeros((1, 2 * n))]])
    Dzu_u = np.vstack([np.zeros((n, 1)), np.ones((1, 1))])
    # error output z = xhat - x only; the input row of V~ is identically zero,
    # so a u passthrough would inflate the bound to sqrt(||V~||^2 + 1)
    Cz = np.block([[np.eye(n), -np.eye(n)]])

    def build(lam):
        N = cp.Variable((2 * n, 2 * n), symmetric=True)
        g = cp.Variable()
        TL = block_diag_expr([-N, -lam * np.eye(n), -g * np.ones((1, 1))])
        BL = cp.bmat([
            [AA @ N, Ewu, BB],
            [Czu @ N, np.zeros((q, n)), Dzu_u],
            [Cz @ N, np.zeros((n, n)), np.zeros((n, 1))],
        ])
        DR = block_diag_expr([-N, -(1.0 / lam) * D0, -g * np.eye(n)])
        big = cp.bmat([[TL, BL.T], [BL, DR]])
        res = solve_sdp(g, [LMI(big, "nsd", "openloop-v", STRICT_SHIFT),
                            LMI(N, "psd", "lyap", STRICT_SHIFT)],
                        variables={"g": g})
        return res.values["g"].item() if res.ok else None

    gbar, _ = _min_gamma_over_lambda(build, lam_grid)
    if gbar is None:
        raise RuntimeError("prior uncertainty too large / possibly unstable members")
    return float(gbar), float(gbar * np.sqrt(q))


def gamma_y_lmi(A_hat0, D0, lam_grid=LAMBDA_GRID):
    """Robust bound on each ||Y_i|| (noise-to-state resolvent) over Theta_0.

    Same structure as :func:`gamma_v_lmi` for the channel w -> x of
    x+ = A x + w.  Returns (gamma_y_bar, gamma_y).
    """
    A0 = np.atleast_2d(np.asarray(A_hat0, dtype=float))
    n = A0.shape[0]
    q = n + 1
    D0 = np.asarray(D0, dtype=float)

    def build(lam):
        N = cp.Variable((n, n), symmetric=True)
        g = cp.Variable()
        TL = block_diag_expr([-N, -lam * np.eye(n), -g * np.eye(n)])
        BL = cp.bmat([
            [A0 @ N, np.eye(n), np.eye(n)],
            [cp.vstack([N, np.zeros((1, n))]), np.zeros((q, n)), np.zeros((q, n))],
            [N, np.zeros((n, n)), np.zeros((n, n))],
        ])
        DR = block_diag_expr([-N, -(1.0 / lam) * D0, -g * np.eye(n)])
        big = cp.bmat([[TL, BL.T], [BL, DR]])
        res = solve_sdp(g, [LMI(big, "nsd", "openloop-y", STRICT_SHIFT),
                            LMI(N, "psd", "lyap", STRICT_SHIFT)],
                        variables={"g": g})
        return res.values["g"].item() if res.ok else None

    gbar, _ = _min_gamma_over_lambda(build, lam_grid)
    if gbar is None:
        raise RuntimeError("prior uncertainty too large / possibly unstable members")
    return float(gbar), float(gbar * np.sqrt(q))


def holdout_violation_frequency(values: np.ndarray, bound: float) -> float:
    """Fraction of fresh draws exceeding a scenario bound."""
    values = np.asarray(values, dtype=float)
    return float(np.mean(values > bound))
