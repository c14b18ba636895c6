"""State-space models written in inverse-Rosenblatt form.

A model turns uniforms into states: ``prior_from_uniform`` maps (0,1)^d to a
draw of the initial law, and ``transition_from_uniform`` maps (0,1)^d to a
draw of the transition kernel given the previous state. Both particle filters
consume models only through these maps and ``log_likelihood``, so the same
model runs under pseudo-random (SMC) and low-discrepancy (SQMC) inputs.

All methods are vectorized over leading axes: states have shape (..., d).
"""

import abc
import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from sqmc.filters import PsiMap

__all__ = [
    "StateSpaceModel",
    "PositioningModel",
    "LinearGaussianModel",
    "Trajectory",
    "laplace_inv_cdf",
    "normal_inv_cdf",
    "loop_speeds",
    "simulate_trajectory",
    "kalman_filter",
]

LOG10 = np.log(10.0)


def _check_open_unit(u):
    u = np.asarray(u, dtype=np.float64)
    # min/max propagate NaN, so this also rejects NaN without temporaries
    if u.size and not (u.min() > 0.0 and u.max() < 1.0):
        raise ValueError("uniform inputs must lie in the open interval (0, 1)")
    return u


def _rss_loglik(x, emitters, gain, offset, b, near_field):
    # one emitter at a time keeps temporaries at (N,) instead of (N, d_y, 2)
    acc = np.zeros(x.shape[0])
    near2 = near_field * near_field
    for i in range(emitters.shape[0]):
        r2 = (emitters[i, 0] - x[:, 0]) ** 2
        r2 += (emitters[i, 1] - x[:, 1]) ** 2
        np.maximum(r2, near2, out=r2)
        np.log(r2, out=r2)
        r2 *= -0.5 * gain[i]
        r2 += offset[i]
        acc += np.abs(r2, out=r2)
    return -emitters.shape[0] * np.log(2.0 * b) - acc / b


def laplace_inv_cdf(u, b):
    """Quantile of the centred Laplace law with scale ``b``.

    >>> float(laplace_inv_cdf(0.75, 0.5)) == 0.5 * np.log(2.0)
    True
    """
    u = _check_open_unit(u)
    if b < 0:
        raise ValueError("Laplace scale must be nonnegative")
    d = np.subtract(u, 0.5, out=np.empty_like(u))
    s = np.sign(d)
    np.abs(d, out=d)
    d *= -2.0
    np.log1p(d, out=d)
    d *= s
    d *= -b
    return d if d.ndim else float(d)


def normal_inv_cdf(u):
    """Standard normal quantile."""
    return special.ndtri(_check_open_unit(u))


class StateSpaceModel(abc.ABC):
    """Contract for models driven by the particle filters.

    Subclasses set ``state_dim`` and ``obs_dim`` and implement the three maps
    below. ``psi_bounds`` may be overridden to give the SQMC filter
    model-specific bounds for the logistic map applied before Hilbert sorting;
    returning ``None`` selects the empirical fallback.
    """

    state_dim: int
    obs_dim: int

    @abc.abstractmethod
    def prior_from_uniform(self, u):
        """Inverse Rosenblatt transform of the initial law."""

    @abc.abstractmethod
    def transition_from_uniform(self, t, x_prev, v):
        """Inverse Rosenblatt transform of the transition law at time ``t``."""

    @abc.abstractmethod
    def log_likelihood(self, t, y, x):
        """log f(y_t | x_t), vectorized over states."""

    def psi_bounds(self, t):
        return None

    def simulate(self, T, rng):
        """Draw (states, observations) for times 0..T; default uses uniforms."""
        raise NotImplementedError


def loop_speeds(T, block=60, magnitude=0.5,
                directions=((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0))):
    """Piecewise-constant planned velocities v_0..v_T tracing a closed loop.

    Row ``t`` is the velocity applied between t-1 and t; row 0 is unused
    and set to zero.
    """
    directions = np.asarray(directions, dtype=np.float64)
    v = np.zeros((T + 1, 2))
    if T > 0:
        blocks = (np.arange(1, T + 1) - 1) // block
        v[1:] = magnitude * directions[blocks % len(directions)]
    return v


@dataclass(frozen=True, eq=False)
class PositioningModel(StateSpaceModel):
    """Vehicle positioning from received signal strength.

    ``x_t = x_{t-1} + T_s v_t + T_s eps_t`` with Laplace(``state_noise``)
    increments and ``y_ti = 10 log10(P_i / |r_i - x_t|^alpha_i) + nu_ti`` with
    Laplace(``obs_noise``) errors. ``x_0 ~ N(0, prior_scale^2 I)``.

    ``speeds[t]`` is the known planned velocity v_t (row 0 unused).
    """

    emitters: np.ndarray
    speeds: np.ndarray
    alphas: np.ndarray = None
    powers: np.ndarray = None
    sample_period: float = 1.0
    state_noise: float = 0.5
    obs_noise: float = 0.5
    prior_scale: float = 1.0
    near_field: float = 1e-6
    psi_centered: bool = False

    state_dim = 2

    def __post_init__(self):
        emitters = np.atleast_2d(np.asarray(self.emitters, dtype=np.float64))
        if emitters.ndim != 2 or emitters.shape[1] != 2 or emitters.shape[0] < 1:
            raise ValueError("emitters must be a (d_y, 2) array with d_y >= 1")
        d_y = emitters.shape[0]
        alphas = np.broadcast_to(np.asarray(0.95 if self.alphas is None else self.alphas,
                                            dtype=np.float64), (d_y,)).copy()
        powers = np.broadcast_to(np.asarray(1.0 if self.powers is None else self.powers,
                                            dtype=np.float64), (d_y,)).copy()
        speeds = np.atleast_2d(np.asarray(self.speeds, dtype=np.float64))
        if speeds.shape[1] != 2:
            raise ValueError("speeds must have shape (T+1, 2)")
        if (alphas <= 0).any() or (powers <= 0).any():
            raise ValueError("attenuations and powers must be positive")
        if self.sample_period <= 0:
            raise ValueError("sample period must be positive")
        if self.state_noise < 0 or self.obs_noise < 0 or self.prior_scale < 0:
            raise ValueError("noise scales must be nonnegative")
        if self.near_field <= 0:
            raise ValueError("near-field clamp must be positive")
        for name, arr in (("emitters", emitters), ("alphas", alphas),
                          ("powers", powers), ("speeds", speeds)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def obs_dim(self):
        return self.emitters.shape[0]

    @property
    def horizon(self):
        """Largest time index covered by the speed schedule."""
        return self.speeds.shape[0] - 1

    def with_overrides(self, **changes):
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return PositioningModel(**fields)

    def observation_mean(self, x):
        """Noise-free received powers at positions ``x``, shape (..., d_y)."""
        x = np.asarray(x, dtype=np.float64)
        diff = self.emitters - x[..., None, :]
        dist = np.sqrt(np.einsum("...ij,...ij->...i", diff, diff))
        np.maximum(dist, self.near_field, out=dist)
        return 10.0 * np.log10(self.powers) - 10.0 * self.alphas * np.log(dist) / LOG10

    def log_likelihood(self, t, y, x):
        b = self.obs_noise
        if b <= 0:
            raise ValueError("log-likelihood needs a positive observation noise scale")
        y = np.asarray(y, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        with np.errstate(over="ignore"):  # tiny b: -inf weights, caught by the filter
            if x.ndim == 2 and y.ndim == 1:
                gain = 10.0 * self.alphas / LOG10
                offset = 10.0 * np.log10(self.powers) - y
                return _rss_loglik(x, self.emitters, gain, offset, b, self.near_field)
            resid = np.abs(y - self.observation_mean(x))
            return -self.obs_dim * np.log(2.0 * b) - resid.sum(axis=-1) / b

    def prior_from_uniform(self, u):
        return self.prior_scale * normal_inv_cdf(u)

    def transition_from_uniform(self, t, x_prev, v):
        if t < 1:
            raise ValueError("transitions start at t = 1")
        if t > self.horizon:
            raise ValueError(f"no planned speed for t = {t} (horizon {self.horizon})")
        Ts = self.sample_period
        x = np.asarray(laplace_inv_cdf(v, self.state_noise))
        x *= Ts
        x += np.asarray(x_prev, dtype=np.float64)
        x += Ts * self.speeds[t]
        return x

    def psi_bounds(self, t):
        """Bounds of the logistic map at time ``t``: planned position +- 2 sd."""
        Ts = self.sample_period
        center = Ts * self.speeds[1:t + 1].sum(axis=0)
        var = self.prior_scale ** 2 + t * Ts ** 2 * 2.0 * self.state_noise ** 2
        half = max(2.0 * np.sqrt(var), 1e-12)
        return PsiMap(center - half, center + half, centered=self.psi_centered)

    def simulate(self, T, rng):
        if T > self.horizon:
            raise ValueError(f"horizon T = {T} exceeds the speed schedule ({self.horizon})")
        Ts = self.sample_period
        x = np.empty((T + 1, 2))
        y = np.empty((T + 1, self.obs_dim))
        x[0] = self.prior_scale * rng.standard_normal(2)
        y[0] = self.observation_mean(x[0]) + rng.laplace(0.0, self.obs_noise, self.obs_dim)
        for t in range(1, T + 1):
            x[t] = x[t - 1] + Ts * self.speeds[t] + Ts * rng.laplace(0.0, self.state_noise, 2)
            y[t] = self.observation_mean(x[t]) + rng.laplace(0.0, self.obs_noise, self.obs_dim)
        return x, y


def _factor(S, name):
    """Lower-triangular factor of a PSD matrix (Cholesky when PD)."""
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        w, U = np.linalg.eigh(S)
        if w.min() < -1e-12 * max(1.0, abs(w).max()):
            raise ValueError(f"{name} is not positive semidefinite") from None
        # QR of the symmetric square root gives a triangular factor
        R = np.linalg.qr((U * np.sqrt(np.clip(w, 0.0, None))) @ U.T, mode="r")
        L = R.T
        return L * np.where(np.diag(L) < 0, -1.0, 1.0)


@dataclass(frozen=True, eq=False)
class LinearGaussianModel(StateSpaceModel):
    """``x_t = A x_{t-1} + N(0, Q)``, ``y_t = C x_t + N(0, R)``, ``x_0 ~ N(m0, P0)``.

    Q may be singular (deterministic dynamics); R must be positive definite.
    """

    A: np.ndarray
    Q: np.ndarray
    C: np.ndarray
    R: np.ndarray
    m0: np.ndarray = None
    P0: np.ndarray = None
    _LQ: np.ndarray = field(init=False, repr=False)
    _LP: np.ndarray = field(init=False, repr=False)
    _LR: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        d = A.shape[0]
        C = np.atleast_2d(np.asarray(self.C, dtype=np.float64))
        Q = np.atleast_2d(np.asarray(self.Q, dtype=np.float64))
        R = np.atleast_2d(np.asarray(self.R, dtype=np.float64))
        m0 = np.zeros(d) if self.m0 is None else np.atleast_1d(np.asarray(self.m0, float))
        P0 = np.eye(d) if self.P0 is None else np.atleast_2d(np.asarray(self.P0, float))
        if A.shape != (d, d) or Q.shape != (d, d) or P0.shape != (d, d) or C.shape[1] != d:
            raise ValueError("inconsistent state dimensions")
        if R.shape != (C.shape[0], C.shape[0]):
            raise ValueError("inconsistent observation dimensions")
        for S, name in ((Q, "Q"), (R, "R"), (P0, "P0")):
            if not np.allclose(S, S.T):
                raise ValueError(f"{name} must be symmetric")
        try:
            LR = np.linalg.cholesky(R)
        except np.linalg.LinAlgError:
            raise ValueError("R must be positive definite") from None
        for name, val in (("A", A), ("C", C), ("Q", Q), ("R", R), ("m0", m0), ("P0", P0),
                          ("_LQ", _factor(Q, "Q")), ("_LP", _factor(P0, "P0")),
                          ("_LR", LR)):
            object.__setattr__(self, name, val)

    @property
    def state_dim(self):
        return self.A.shape[0]

    @property
    def obs_dim(self):
        return self.C.shape[0]

    def prior_from_uniform(self, u):
        return self.m0 + normal_inv_cdf(u) @ self._LP.T

    def transition_from_uniform(self, t, x_prev, v):
        return np.asarray(x_prev, dtype=np.float64) @ self.A.T + normal_inv_cdf(v) @ self._LQ.T

    def log_likelihood(self, t, y, x):
        resid = np.asarray(y, dtype=np.float64) - np.asarray(x, dtype=np.float64) @ self.C.T
        z = np.linalg.solve(self._LR, np.moveaxis(resid, -1, 0))
        half_logdet = np.log(np.diag(self._LR)).sum()
        return (-0.5 * (z ** 2).sum(axis=0) - half_logdet
                - 0.5 * self.obs_dim * np.log(2 * np.pi))

    def simulate(self, T, rng):
        d = self.state_dim
        x = np.empty((T + 1, d))
        y = np.empty((T + 1, self.obs_dim))
        for t in range(T + 1):
            if t == 0:
                x[0] = self.m0 + self._LP @ rng.standard_normal(d)
            else:
                x[t] = self.A @ x[t - 1] + self._LQ @ rng.standard_normal(d)
            y[t] = self.C @ x[t] + self._LR @ rng.standard_normal(self.obs_dim)
        return x, y


@dataclass
class Trajectory:
    """Simulated states x_0..x_T and observations y_0..y_T."""

    states: np.ndarray
    observations: np.ndarray

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=np.float64))
        self.observations = np.atleast_2d(np.asarray(self.observations, dtype=np.float64))
        if self.states.shape[0] != self.observations.shape[0]:
            raise ValueError("states and observations must have equal length")

    @property
    def T(self):
        return self.states.shape[0] - 1

    def to_csv(self, path):
        d, dy = self.states.shape[1], self.observations.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i + 1}" for i in range(d)] + [f"y{i + 1}" for i in range(dy)])
            for t in range(self.T + 1):
                w.writerow([t] + [repr(float(v)) for v in self.states[t]]
                           + [repr(float(v)) for v in self.observations[t]])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        xi = [i for i, h in enumerate(header) if h.startswith("x")]
        yi = [i for i, h in enumerate(header) if h.startswith("y")]
        data = np.array(body, dtype=np.float64)
        if not np.array_equal(data[:, 0], np.arange(len(body))):
            raise ValueError("trajectory rows must be consecutive from t = 0")
        return cls(data[:, xi], data[:, yi])


def simulate_trajectory(model, T, rng_seed):
    """Simulate x_{0:T}, y_{0:T} with pseudo-random noise; deterministic in the seed."""
    if T < 0:
        raise ValueError("T must be nonnegative")
    x, y = model.simulate(T, np.random.default_rng(rng_seed))
    return Trajectory(x, y)


def kalman_filter(model, ys):
    """Exact filtering means and covariances of a :class:`LinearGaussianModel`.

    Returns
    -------
    means : (T+1, d) array
    covs : (T+1, d, d) array
    """
    ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
    if ys.shape[1] != model.obs_dim:
        raise ValueError("observation dimension mismatch")
    A, C, Q, R = model.A, model.C, model.Q, model.R
    d = model.state_dim
    means = np.empty((ys.shape[0], d))
    covs = np.empty((ys.shape[0], d, d))
    m, P = model.m0, model.P0
    for t, y in enumerate(ys):
        if t > 0:
            m = A @ m
            P = A @ P @ A.T + Q
        S = C @ P @ C.T + R
        L = np.linalg.cholesky(S)
        G = np.linalg.solve(L.T, np.linalg.solve(L, C @ P)).T  # P C' S^-1
        m = m + G @ (y - C @ m)
        P = P - G @ C @ P
        P = 0.5 * (P + P.T)
        means[t], covs[t] = m, P
    return means, covs
