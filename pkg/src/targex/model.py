"""Discrete-time LTI system model, performance channel, and simulation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def substream(master_seed, *path):
    """Derive an independent RNG substream from a master seed.

    Streams are keyed by integer path segments via numpy's SeedSequence
    spawn keys, so ``substream(seed, 3, 7)`` is reproducible on its own
    regardless of how many other streams were drawn.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(p) for p in path))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class SystemModel:
    """x_{k+1} = A x_k + B u_k + w_k with scalar input and i.i.d. Gaussian noise."""

    A: np.ndarray
    B: np.ndarray
    sigma_w: float

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float).reshape(A.shape[0], -1)
        if A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if B.shape[1] != 1:
            raise ValueError("B must have exactly one column (scalar input)")
        if self.sigma_w < 0:
            raise ValueError("sigma_w must be nonnegative")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_phi(self) -> int:
        return self.n_x + 1

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))

    def theta(self) -> np.ndarray:
        """vec([A, B]) with column-major stacking."""
        return np.concatenate([self.A, self.B], axis=1).flatten(order="F")


def model_from_theta(theta: np.ndarray, n_x: int, sigma_w: float) -> SystemModel:
    A, B = unvec_theta(theta, n_x)
    return SystemModel(A=A, B=B, sigma_w=sigma_w)


def unvec_theta(theta: np.ndarray, n_x: int):
    """Split vec([A, B]) back into (A, B)."""
    theta = np.asarray(theta, dtype=float)
    n_phi = n_x + 1
    if theta.size != n_x * n_phi:
        raise ValueError(f"theta has size {theta.size}, expected {n_x * n_phi}")
    mat = theta.reshape(n_x, n_phi, order="F")
    return mat[:, :n_x].copy(), mat[:, n_x:].copy()


@dataclass(frozen=True)
class PerformanceIndex:
    """Performance channel z = C x + D_u u + D_w w with quadratic index.

    The default multiplier is the l2-gain specialization: S_p = 0,
    R_p = (1/gamma_p) I, Q_p = -gamma_p I.  A general (Q_p, S_p, R_p) block
    may be supplied instead; R_p must be positive definite.
    """

    C: np.ndarray
    D_u: np.ndarray
    D_w: np.ndarray
    gamma_p: float | None = None
    Q_p: np.ndarray | None = None
    S_p: np.ndarray | None = None
    R_p: np.ndarray | None = None

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        D_u = np.asarray(self.D_u, dtype=float).reshape(C.shape[0], -1)
        D_w = np.atleast_2d(np.asarray(self.D_w, dtype=float))
        if D_u.shape[1] != 1:
            raise ValueError("D_u must have one column")
        if D_w.shape[0] != C.shape[0]:
            raise ValueError("D_w row count must match C")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D_u", D_u)
        object.__setattr__(self, "D_w", D_w)
        if self.R_p is not None:
            R = np.atleast_2d(np.asarray(self.R_p, dtype=float))
            if np.linalg.eigvalsh((R + R.T) / 2).min() <= 0:
                raise ValueError("R_p must be positive definite")
            object.__setattr__(self, "R_p", R)

    @property
    def n_z(self) -> int:
        return self.C.shape[0]

    @property
    def n_w(self) -> int:
        return self.D_w.shape[1]

    def multiplier(self, gamma_p: float | None = None):
        """(Q_p, S_p, R_p) blocks, specializing to the l2-gain index if needed."""
        if self.Q_p is not None:
            return self.Q_p, (self.S_p if self.S_p is not None
                              else np.zeros((self.n_w, self.n_z))), self.R_p
        g = gamma_p if gamma_p is not None else self.gamma_p
        if g is None:
            raise ValueError("gamma_p required for the l2-gain index")
        return (-g * np.eye(self.n_w), np.zeros((self.n_w, self.n_z)),
                (1.0 / g) * np.eye(self.n_z))


def default_performance_index(n_x: int) -> PerformanceIndex:
    """Mixed state/input error channel z = [x; u] used by the experiments."""
    C = np.vstack([np.eye(n_x), np.zeros((1, n_x))])
    D_u = np.vstack([np.zeros((n_x, 1)), np.ones((1, 1))])
    D_w = np.zeros((n_x + 1, n_x))
    return PerformanceIndex(C=C, D_u=D_u, D_w=D_w)


@dataclass
class Trajectory:
    """Recorded rollout: states x_0..x_T, scalar inputs, regressors and noise."""

    states: np.ndarray   # (T+1, n_x)
    inputs: np.ndarray   # (T,)
    noise: np.ndarray    # (T, n_x)

    @property
    def T(self) -> int:
        return len(self.inputs)

    @property
    def regressors(self) -> np.ndarray:
        """phi_k = [x_k; u_k] for k = 0..T-1, shape (T, n_x + 1)."""
        return np.concatenate([self.states[:-1], self.inputs[:, None]], axis=1)

    def gram(self) -> np.ndarray:
        """sum_k phi_k phi_k'."""
        Phi = self.regressors
        return Phi.T @ Phi


def simulate(model: SystemModel, inputs, x0=None, rng=None, seed=None) -> Trajectory:
    """Roll the system forward under the given scalar input sequence.

    Noise is drawn i.i.d. N(0, sigma_w^2 I) from ``rng`` (or a fresh
    generator built from ``seed``); identical seeds give bitwise identical
    noise sequences.
    """
    inputs = np.asarray(inputs, dtype=float).ravel()
    if inputs.size < 1:
        raise ValueError("need at least one input sample")
    n = model.n_x
    if x0 is None:
        x0 = np.zeros(n)
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != n:
        raise ValueError("x0 dimension mismatch")
    if rng is None:
        rng = np.random.default_rng(seed)
    T = inputs.size
    if model.sigma_w > 0:
        noise = rng.standard_normal((T, n)) * model.sigma_w
    else:
        noise = np.zeros((T, n))
    states = np.empty((T + 1, n))
    states[0] = x0
    A, b = model.A, model.B[:, 0]
    for k in range(T):
        states[k + 1] = A @ states[k] + b * inputs[k] + noise[k]
    return Trajectory(states=states, inputs=inputs.copy(), noise=noise)


def simulate_closed_loop(model: SystemModel, K: np.ndarray, disturbance,
                         x0=None) -> tuple[np.ndarray, np.ndarray]:
    """Roll x+ = (A + B K) x + w for a given disturbance sequence.

    Returns (states, inputs); the disturbance plays the role of w directly.
    """
    w = np.atleast_2d(np.asarray(disturbance, dtype=float))
    n = model.n_x
    K = np.asarray(K, dtype=float).reshape(1, n)
    if x0 is None:
        x0 = np.zeros(n)
    T = w.shape[0]
    states = np.empty((T + 1, n))
    states[0] = np.asarray(x0, dtype=float)
    inputs = np.empty(T)
    Acl = model.A + model.B @ K
    for k in range(T):
        inputs[k] = (K @ states[k]).item()
        states[k + 1] = Acl @ states[k] + w[k]
    return states, inputs


def performance_output(perf: PerformanceIndex, x, u, w) -> np.ndarray:
    """z = C x + D_u u + D_w w."""
    x = np.asarray(x, dtype=float).ravel()
    w = np.asarray(w, dtype=float).ravel()
    if x.size != perf.C.shape[1] or w.size != perf.D_w.shape[1]:
        raise ValueError("dimension mismatch in performance output")
    return perf.C @ x + perf.D_u[:, 0] * float(u) + perf.D_w @ w


def empirical_l2_gain(model: SystemModel, K, perf: PerformanceIndex,
                      horizon: int = 200, n_trials: int = 20, seed=0) -> float:
    """Lower bound on the closed-loop l2 gain from sampled disturbances.

    Each trial applies a finite-energy disturbance (Gaussian burst plus one
    impulse trial), lets the loop ring out, and takes ||z||_2 / ||w||_2.
    """
    K = np.asarray(K, dtype=float).reshape(1, model.n_x)
    Acl = model.A + model.B @ K
    if np.max(np.abs(np.linalg.eigvals(Acl))) >= 1.0:
        raise ValueError("closed loop not Schur")
    tail = 4 * horizon
    best = 0.0
    n_w = perf.n_w
    for trial in range(n_trials + n_w):
        rng = substream(seed, trial)
        w = np.zeros((horizon + tail, n_w))
        if trial < n_w:
            w[0, trial] = 1.0  # unit impulses per channel
        else:
            w[:horizon] = rng.standard_normal((horizon, n_w))
        states, inputs = simulate_closed_loop(model, K, w)
        z = np.array([performance_output(perf, states[k], inputs[k], w[k])
                      for k in range(horizon + tail)])
        num = np.linalg.norm(z)
        den = np.linalg.norm(w)
        if den > 0:
            best = max(best, num / den)
    return best
