"""Spectral lines, transfer matrices, and the guaranteed excitation bound.

Frequencies are in cycles/sample throughout, matching the DFT kernel
exp(-2j pi w k); grid frequencies are integer multiples of 1/T restricted
to [0, 1/2].  A harmonic input ``u_k = sum_i 2 a_i cos(2 pi w_i k)`` has
spectral line c_i a_i at w_i with c_i = 2 at the band edges {0, 1/2} and
c_i = 1 in the interior.

The excitation lower bound uses the row Gram of the line matrix,
``Re(Phi_bar Phi_bar^H)``: for any real unit z and the lines lam_l of the
regressor, Jensen's inequality gives

    (1/T) sum_k |phi_k' z|^2  >=  (1/n_phi) sum_l |lam_l' z|^2
                               =  (1/n_phi) z' Re(Lam Lam^H) z.

Note this is the Gram of line *rows*, not of line columns; the two have
equal spectra but order different directions, and only the row form is
implied by the Jensen step (the column form fails on simulated data).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sdp import real_part_of_hermitian


@dataclass(frozen=True)
class FrequencyGrid:
    """n_phi distinct DFT frequencies in [0, 1/2], multiples of 1/T."""

    T: int
    omegas: np.ndarray

    def __post_init__(self):
        om = np.asarray(self.omegas, dtype=float).ravel()
        if self.T < om.size:
            raise ValueError("horizon T must be at least the number of lines")
        mult = om * self.T
        if np.abs(mult - np.round(mult)).max() > 1e-9:
            raise ValueError("frequencies must be integer multiples of 1/T")
        if om.min() < 0 or om.max() > 0.5 + 1e-12:
            raise ValueError("frequencies must lie in [0, 1/2]")
        if len(np.unique(np.round(mult))) != om.size:
            raise ValueError("frequencies must be distinct")
        object.__setattr__(self, "omegas", om)

    @property
    def n_lines(self) -> int:
        return self.omegas.size

    @property
    def line_coefficients(self) -> np.ndarray:
        """c_i = 2 at the band edges 0 and 1/2, else 1 (exact line amplitudes)."""
        om = self.omegas
        edge = (np.abs(om) < 1e-12) | (np.abs(om - 0.5) < 1e-12)
        return np.where(edge, 2.0, 1.0)

    @property
    def z_points(self) -> np.ndarray:
        return np.exp(2j * np.pi * self.omegas)


@dataclass
class TransferData:
    """V_i = [(z_i I - A)^-1 B; 1] and Y_i = [(z_i I - A)^-1; 0] per grid point."""

    V: np.ndarray            # (n_phi, n_phi) complex, columns V_i
    Y: np.ndarray            # (n_phi, n_x * n_phi) complex, blocks Y_i
    z_points: np.ndarray

    @property
    def n_phi(self) -> int:
        return self.V.shape[0]

    def Y_blocks(self):
        n_x = self.n_phi - 1
        return [self.Y[:, i * n_x:(i + 1) * n_x] for i in range(self.n_phi)]


@dataclass
class ExplorationPlan:
    """Designed amplitudes with their guaranteed excitation lower bound."""

    grid: FrequencyGrid
    amplitudes: np.ndarray          # a_i, the diagonal of U_e
    gamma_e: float
    Dbar_T: np.ndarray
    gamma_e_history: list = field(default_factory=list)
    status: str = "optimal"

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=float).ravel()
        if a.size != self.grid.n_lines:
            raise ValueError("one amplitude per grid frequency required")
        object.__setattr__(self, "amplitudes", a)
        if np.sum(a**2) > self.gamma_e**2 * (1 + 1e-6) + 1e-9:
            raise ValueError("amplitudes violate the energy bound gamma_e")

    @property
    def Ue(self) -> np.ndarray:
        return np.diag(self.amplitudes)

    def effective_amplitudes(self) -> np.ndarray:
        """Exact line amplitudes c_i a_i of the generated input."""
        return self.grid.line_coefficients * self.amplitudes


def generate_input(plan: ExplorationPlan) -> np.ndarray:
    """u_k = sum_i 2 a_i cos(2 pi w_i k), k = 0..T-1."""
    k = np.arange(plan.grid.T)
    u = np.zeros(plan.grid.T)
    for a_i, w_i in zip(plan.amplitudes, plan.grid.omegas):
        u += 2.0 * a_i * np.cos(2.0 * np.pi * w_i * k)
    return u


def spectral_line(signal, omega: float) -> complex | np.ndarray:
    """(1/T) sum_k signal_k exp(-2j pi omega k); omega must be on the grid.

    Off-grid frequencies leak across bins and void the exactness the theory
    needs, so they are rejected.
    """
    sig = np.asarray(signal, dtype=float)
    T = sig.shape[0]
    mult = omega * T
    if abs(mult - round(mult)) > 1e-9:
        raise ValueError(f"omega={omega} is not an integer multiple of 1/{T}")
    kernel = np.exp(-2j * np.pi * omega * np.arange(T))
    if sig.ndim == 1:
        return complex(np.mean(sig * kernel))
    return (sig * kernel[:, None]).mean(axis=0)


def line_matrix(Phi: np.ndarray, grid: FrequencyGrid) -> np.ndarray:
    """Columns are the spectral lines of the regressor rows at each grid point."""
    return np.stack([spectral_line(Phi, w) for w in grid.omegas], axis=1)


def transfer_matrices(A, B, grid: FrequencyGrid, cond_limit: float = 1e12) -> TransferData:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], 1)
    n_x = A.shape[0]
    Vcols, Yblocks = [], []
    for z in grid.z_points:
        M = z * np.eye(n_x) - A
        if np.linalg.cond(M) > cond_limit:
            raise ValueError("eigenvalue on evaluation circle (singular resolvent)")
        R = np.linalg.solve(M, np.eye(n_x))
        Vcols.append(np.concatenate([(R @ B)[:, 0], [1.0]]))
        Yblocks.append(np.vstack([R, np.zeros((1, n_x))]))
    return TransferData(V=np.array(Vcols).T, Y=np.concatenate(Yblocks, axis=1),
                        z_points=grid.z_points)


def transfer_matrices_batch(thetas: np.ndarray, n_x: int, grid: FrequencyGrid):
    """Vectorized V and per-sample ||[Y_1 .. Y_nphi]|| for many parameter draws.

    Returns (V, y_norms) with V of shape (N, n_phi, n_phi).
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    N = thetas.shape[0]
    n_phi = n_x + 1
    Mats = thetas.reshape(N, n_x, n_phi, order="F")
    A = Mats[:, :, :n_x]
    B = Mats[:, :, n_x:]
    V = np.empty((N, n_phi, n_phi), dtype=complex)
    Yparts = []
    eye = np.eye(n_x)
    for j, z in enumerate(grid.z_points):
        M = z * eye[None, :, :] - A
        R = np.linalg.solve(M, np.broadcast_to(eye, (N, n_x, n_x)))
        V[:, :n_x, j] = (R @ B)[:, :, 0]
        V[:, n_x, j] = 1.0
        Yparts.append(np.concatenate([R, np.zeros((N, 1, n_x))], axis=1))
    Yfull = np.concatenate(Yparts, axis=2)
    y_norms = np.linalg.norm(Yfull, ord=2, axis=(1, 2))
    return V, y_norms


def information_matrix(transfer: TransferData, Ue, grid: FrequencyGrid) -> np.ndarray:
    """Expected information matrix: columns are the regressor line amplitudes.

    Phi_bar = V diag(c_i a_i); the edge coefficients keep the columns equal
    to the exact lines of the real multi-sine, so Phi_bar stays linear in
    the amplitudes.
    """
    Ue = np.asarray(Ue, dtype=float)
    a = np.diag(Ue) if Ue.ndim == 2 else Ue.ravel()
    return transfer.V @ np.diag(grid.line_coefficients * a)


def excitation_lower_bound(Phi_bar, l: float, eps: float, T: int,
                           c_delta: float, sigma_w: float) -> np.ndarray:
    """Guaranteed lower bound on D_T when the noise-line block satisfies ||W~|| <= l.

    Returns (T / (cbar n_phi)) [ (1-eps) Re(Phi_bar Phi_bar^H)
                                 - ((1-eps)/eps) l^2 I ].
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    Phi_bar = np.asarray(Phi_bar)
    n_phi = Phi_bar.shape[0]
    cbar = sigma_w**2 * c_delta
    gram = real_part_of_hermitian(Phi_bar @ Phi_bar.conj().T)
    return (T / (cbar * n_phi)) * ((1 - eps) * gram
                                   - ((1 - eps) / eps) * l**2 * np.eye(n_phi))


def relaxed_response_gram(L: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Linearized lower bound on Re(F F^H): Re(F L^H + L F^H - L L^H).

    Valid for any matrix L since (F - L)(F - L)^H >= 0; tight at L = F.
    """
    L = np.asarray(L)
    F = np.asarray(F)
    return real_part_of_hermitian(F @ L.conj().T + L @ F.conj().T - L @ L.conj().T)


def convex_relaxed_bound(L, Ue, Vhat, l: float, eps: float, T: int,
                         cbar: float, grid: FrequencyGrid) -> np.ndarray:
    """Excitation bound with the response Gram linearized around the iterate L.

    L plays the role of a candidate response matrix Vhat @ diag(c_i a~_i);
    the bound is affine in the amplitudes and coincides with
    :func:`excitation_lower_bound` (built on Vhat) when L = Vhat diag(c a).
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    Ue = np.asarray(Ue, dtype=float)
    a = np.diag(Ue) if Ue.ndim == 2 else Ue.ravel()
    n_phi = a.size
    F = np.asarray(Vhat) @ np.diag(grid.line_coefficients * a)
    quad = relaxed_response_gram(L, F)
    return (T / (cbar * n_phi)) * ((1 - eps) * quad
                                   - ((1 - eps) / eps) * l**2 * np.eye(n_phi))
