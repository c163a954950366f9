"""Gaussian-prior bookkeeping, MAP estimation, credibility regions, projection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .model import unvec_theta


def chi2_critical(dof: int, delta: float) -> float:
    """Upper-tail critical value c with P(X > c) = delta for X ~ chi^2_dof."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if dof < 1:
        raise ValueError("dof must be a positive integer")
    return float(stats.chi2.ppf(1.0 - delta, dof))


@dataclass(frozen=True)
class GaussianPrior:
    """Gaussian prior over theta = vec([A, B]) with precision Dtilde0 (x) I.

    ``D0 = Dtilde0 / c_delta`` is the ellipsoid shape of the initial
    high-probability credibility region.
    """

    theta_prior: np.ndarray
    Dtilde0: np.ndarray
    delta: float
    n_x: int

    def __post_init__(self):
        th = np.asarray(self.theta_prior, dtype=float).ravel()
        Dt = np.atleast_2d(np.asarray(self.Dtilde0, dtype=float))
        n_phi = self.n_x + 1
        if th.size != self.n_x * n_phi:
            raise ValueError("theta_prior size inconsistent with n_x")
        if Dt.shape != (n_phi, n_phi):
            raise ValueError("Dtilde0 must be n_phi x n_phi")
        Dt = (Dt + Dt.T) / 2
        if np.linalg.eigvalsh(Dt).min() <= 0:
            raise ValueError("Dtilde0 must be positive definite")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        object.__setattr__(self, "theta_prior", th)
        object.__setattr__(self, "Dtilde0", Dt)

    @property
    def n_phi(self) -> int:
        return self.n_x + 1

    @property
    def c_delta(self) -> float:
        return chi2_critical(self.n_x * self.n_phi, self.delta)

    @property
    def D0(self) -> np.ndarray:
        return self.Dtilde0 / self.c_delta

    def mean_matrices(self):
        """(A_hat0, B_hat0) from the prior mean."""
        return unvec_theta(self.theta_prior, self.n_x)

    def sample_parameters(self, rng, size: int) -> np.ndarray:
        """Draw theta ~ N(theta_prior, (Dtilde0 (x) I)^-1), shape (size, d)."""
        n_phi = self.n_phi
        w, U = np.linalg.eigh(self.Dtilde0)
        half_inv = U @ np.diag(w**-0.5) @ U.T  # Dtilde0^{-1/2}
        # vec(M) with M = Z @ Dtilde0^{-1/2} has covariance (Dtilde0 (x) I)^-1
        Z = rng.standard_normal((size, self.n_x, n_phi))
        M = Z @ half_inv
        flat = np.stack([m.flatten(order="F") for m in M])
        return self.theta_prior[None, :] + flat

    def theta0_region(self) -> "UncertaintyEllipsoid":
        return UncertaintyEllipsoid(center=self.theta_prior, shape=self.D0,
                                    prob=1.0 - self.delta, n_x=self.n_x)


@dataclass(frozen=True)
class UncertaintyEllipsoid:
    """{theta : (theta - center)' (shape (x) I) (theta - center) <= 1}."""

    center: np.ndarray
    shape: np.ndarray
    prob: float
    n_x: int

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).ravel()
        S = np.atleast_2d(np.asarray(self.shape, dtype=float))
        S = (S + S.T) / 2
        if np.linalg.eigvalsh(S).min() < -1e-12 * max(1.0, np.abs(S).max()):
            raise ValueError("shape must be positive semidefinite")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "shape", S)

    def quadratic_form(self, theta) -> float:
        """(theta - c)' (D (x) I)(theta - c), evaluated as tr(E D E') with E = unvec."""
        diff = np.asarray(theta, dtype=float).ravel() - self.center
        E = diff.reshape(self.n_x, -1, order="F")
        return float(np.trace(E @ self.shape @ E.T))

    def contains(self, theta, tol: float = 1e-9) -> bool:
        return self.quadratic_form(theta) <= 1.0 + tol

    def matrix_deviation(self, theta) -> np.ndarray:
        """Delta = [A - A_c, B - B_c]; membership implies Delta' Delta <= shape^-1."""
        A, B = unvec_theta(theta, self.n_x)
        Ac, Bc = unvec_theta(self.center, self.n_x)
        return np.concatenate([A - Ac, B - Bc], axis=1)

    def sample(self, rng, size: int = 1) -> np.ndarray:
        """Uniform draws from the ellipsoid (Gaussian direction + radius method)."""
        if np.linalg.eigvalsh(self.shape).min() <= 0:
            raise ValueError("sampling requires a positive definite shape")
        d = self.center.size
        w, U = np.linalg.eigh(self.shape)
        half_inv = U @ np.diag(w**-0.5) @ U.T
        out = np.empty((size, d))
        n_phi = self.shape.shape[0]
        for i in range(size):
            v = rng.standard_normal(d)
            v /= np.linalg.norm(v)
            r = rng.uniform() ** (1.0 / d)
            E = (r * v).reshape(self.n_x, n_phi, order="F") @ half_inv
            out[i] = self.center + E.flatten(order="F")
        return out if size > 1 else out[0]


@dataclass
class Dataset:
    """Regressors phi_0..phi_{T-1} and successor states x_1..x_T."""

    Phi: np.ndarray     # (T, n_phi)
    X_next: np.ndarray  # (T, n_x)

    def __post_init__(self):
        self.Phi = np.atleast_2d(np.asarray(self.Phi, dtype=float))
        self.X_next = np.atleast_2d(np.asarray(self.X_next, dtype=float))
        if self.Phi.shape[0] != self.X_next.shape[0]:
            raise ValueError("Phi and X_next length mismatch")
        if self.Phi.shape[1] != self.X_next.shape[1] + 1:
            raise ValueError("phi must stack state and scalar input")

    @property
    def T(self) -> int:
        return self.Phi.shape[0]

    @classmethod
    def from_trajectory(cls, traj) -> "Dataset":
        return cls(Phi=traj.regressors, X_next=traj.states[1:])


def empty_dataset(n_x: int) -> Dataset:
    return Dataset(Phi=np.zeros((0, n_x + 1)), X_next=np.zeros((0, n_x)))


def map_estimate(prior: GaussianPrior, data: Dataset, sigma_w: float):
    """MAP estimate of vec([A, B]) plus the excitation matrix D_T.

    The regularized normal equations reduce, through the Kronecker structure
    of the prior precision, to the n_phi x n_phi system
    ``[A, B] (Gram/sigma_w^2 + Dtilde0) = X'Phi/sigma_w^2 + [A0, B0] Dtilde0``.
    Returns (theta_hat, D_T) with D_T = Gram / (c_delta sigma_w^2).
    """
    if sigma_w <= 0:
        raise ValueError("sigma_w must be positive")
    n_x = prior.n_x
    Gram = data.Phi.T @ data.Phi
    S = Gram / sigma_w**2 + prior.Dtilde0
    A0B0 = np.concatenate(prior.mean_matrices(), axis=1)
    rhs = data.X_next.T @ data.Phi / sigma_w**2 + A0B0 @ prior.Dtilde0
    cond = np.linalg.cond(S)
    if cond > 1e12:
        import warnings
        warnings.warn(f"MAP normal equations poorly conditioned (kappa={cond:.3g})")
    AB = np.linalg.solve(S.T, rhs.T).T
    theta_hat = AB.flatten(order="F")
    D_T = Gram / (prior.c_delta * sigma_w**2)
    return theta_hat, D_T


def posterior_shape(prior: GaussianPrior, D_T: np.ndarray) -> np.ndarray:
    """D_post = D0 + D_T, the post-exploration credibility shape."""
    return prior.D0 + np.asarray(D_T, dtype=float)


def credibility_region(center, D, delta, n_x) -> UncertaintyEllipsoid:
    """Ellipsoid {theta : (theta-center)'(D (x) I)(theta-center) <= 1}."""
    return UncertaintyEllipsoid(center=np.asarray(center, dtype=float),
                                shape=np.asarray(D, dtype=float),
                                prob=1.0 - delta, n_x=n_x)


def prior_from_data(seed_data: Dataset, sigma_w: float, delta: float) -> GaussianPrior:
    """Prior inferred from a pre-dataset: OLS mean, Dtilde0 = Gram / sigma_w^2."""
    Gram = seed_data.Phi.T @ seed_data.Phi
    if np.linalg.matrix_rank(Gram) < Gram.shape[0]:
        raise ValueError("seed data is rank deficient; cannot build a prior")
    AB = np.linalg.solve(Gram.T, (seed_data.X_next.T @ seed_data.Phi).T).T
    n_x = seed_data.X_next.shape[1]
    return GaussianPrior(theta_prior=AB.flatten(order="F"),
                         Dtilde0=Gram / sigma_w**2, delta=delta, n_x=n_x)


def project_parameters(theta_hat, region: UncertaintyEllipsoid, metric,
                       tol: float = 1e-10) -> np.ndarray:
    """Metric projection of theta_hat onto the ellipsoid ``region``.

    Minimizes ||theta - theta_hat||^2 in the (metric (x) I) norm over the
    region.  The single ellipsoidal constraint makes the KKT system scalar:
    the Lagrange multiplier is found by safeguarded bisection on the
    monotone constraint residual.
    """
    D0m = region.shape
    if np.linalg.eigvalsh(D0m).min() <= 0:
        raise ValueError("projection requires a positive definite region shape")
    metric = np.atleast_2d(np.asarray(metric, dtype=float))
    metric = (metric + metric.T) / 2
    if np.linalg.eigvalsh(metric).min() < -1e-10 * max(1.0, np.abs(metric).max()):
        raise ValueError("metric must be positive semidefinite")
    theta_hat = np.asarray(theta_hat, dtype=float).ravel()
    if region.contains(theta_hat, tol=0.0):
        return theta_hat.copy()
    n_x = region.n_x
    Mh = theta_hat.reshape(n_x, -1, order="F")
    Mc = region.center.reshape(n_x, -1, order="F")

    def point(mu):
        lhs = metric + mu * D0m
        rhs = Mh @ metric + mu * Mc @ D0m
        return np.linalg.solve(lhs.T, rhs.T).T

    def residual(mu):
        E = point(mu) - Mc
        return float(np.trace(E @ D0m @ E.T)) - 1.0

    lo, hi = 0.0, 1.0
    while residual(hi) > 0:
        hi *= 2.0
        if hi > 1e18:
            raise RuntimeError("projection multiplier bracketing failed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if residual(mid) > 0:
            lo = mid
        else:
            hi = mid
        if abs(residual(hi)) <= tol:
            break
    return point(hi).flatten(order="F")
