"""Bootstrap particle filter (SMC) and its quasi-Monte Carlo version (SQMC).

Both filters resample at every step and keep log-weights, normalising with a
max-shift before exponentiation.

SQMC replaces the i.i.d. uniforms of the bootstrap filter with a scrambled
Sobol' point set in dimension d+1 at each step. The first coordinate picks
ancestors by inverse CDF against the weights of the previous particles sorted
along the Hilbert curve; the remaining d coordinates move the chosen ancestor
through the model's inverse Rosenblatt transition.
"""

import csv
import enum
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from sqmc import _kernels
from sqmc.hilbert import HilbertCodec, hilbert_sort
from sqmc.lds import ConfigurationError, is_power_of_two, scrambled_sobol

__all__ = [
    "DegenerateWeightsError",
    "InvalidWeightsError",
    "ParticleSystem",
    "PsiMap",
    "FilterOutput",
    "Resampler",
    "systematic_resample",
    "multinomial_resample",
    "inverse_cdf_ancestors",
    "filtering_mean",
    "psi_apply",
    "empirical_psi_bounds",
    "normalize_log_weights",
    "smc_bootstrap",
    "sqmc_bootstrap",
    "step_seed",
]


class DegenerateWeightsError(FloatingPointError):
    """All particle weights vanished (or became NaN) at time ``t``."""

    def __init__(self, t):
        super().__init__(f"degenerate weights at t = {t}")
        self.t = t


class InvalidWeightsError(ValueError):
    pass


class Resampler(str, enum.Enum):
    SYSTEMATIC = "systematic"
    MULTINOMIAL = "multinomial"


@dataclass
class ParticleSystem:
    """N weighted states at time ``t``; weights are normalized."""

    states: np.ndarray
    weights: np.ndarray
    t: int = 0

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        if self.states.ndim == 1:
            self.states = self.states[:, None]
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (self.states.shape[0],):
            raise ValueError("one weight per particle is required")
        if (self.weights < 0).any() or abs(self.weights.sum() - 1.0) > 1e-12:
            raise InvalidWeightsError("weights must be nonnegative and sum to 1")

    @property
    def N(self):
        return self.states.shape[0]

    def ess(self):
        return 1.0 / np.sum(self.weights ** 2)


def filtering_mean(ps):
    """Weighted mean ``sum_n W^n x^n`` of a particle system."""
    return ps.weights @ ps.states


def _weighted_var(W, x, mean):
    return W @ (x - mean) ** 2


@dataclass(frozen=True)
class PsiMap:
    """Coordinate-wise rescaled logistic map into [0, 1]^d.

    Far outside the bounds the map saturates to exactly 0 or 1 in floating
    point; the Hilbert quantizer treats 1 as the last cell.

    ``psi_i(x) = 1 / (1 + exp(-(x_i - lower_i) / (upper_i - lower_i)))``.
    With ``centered=True`` the shift is the midpoint of the bounds instead of
    the lower bound, so the bounded region maps around 1/2.
    """

    lower: np.ndarray
    upper: np.ndarray
    centered: bool = False

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=np.float64))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=np.float64))
        if lower.shape != upper.shape or not (upper > lower).all():
            raise ValueError("PsiMap needs upper > lower in every coordinate")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    def __call__(self, x):
        shift = 0.5 * (self.lower + self.upper) if self.centered else self.lower
        z = (np.asarray(x, dtype=np.float64) - shift) / (self.upper - self.lower)
        return expit(z)


def psi_apply(psi, x):
    return psi(x)


def empirical_psi_bounds(x, W=None, width=4.0):
    """Generic bounds: particle mean +- ``width`` standard deviations."""
    x = np.asarray(x, dtype=np.float64)
    if W is None:
        m, s = x.mean(axis=0), x.std(axis=0)
    else:
        m = W @ x
        s = np.sqrt(np.maximum(_weighted_var(W, x, m), 0.0))
    s = np.where(s > 0, s, 1.0)
    return PsiMap(m - width * s, m + width * s)


def _check_weights(weights, tol=1e-9):
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0 or (w < 0).any() or not np.isfinite(w).all():
        raise InvalidWeightsError("weights must be a nonempty vector of nonnegative reals")
    if abs(w.sum() - 1.0) > tol:
        raise InvalidWeightsError(f"weights sum to {w.sum()!r}, not 1")
    return w


def _cumulative(w):
    c = np.cumsum(w)
    return np.ascontiguousarray(c / c[-1])


def systematic_resample(weights, u):
    """Ancestor indices (0-based, nondecreasing) by systematic resampling.

    Index i receives floor(N W_i) or ceil(N W_i) offspring.

    >>> systematic_resample([0.5, 0.25, 0.125, 0.125], 0.0).tolist()
    [0, 0, 1, 2]
    """
    w = _check_weights(weights)
    if not 0.0 <= u < 1.0:
        raise ValueError("u must lie in [0, 1)")
    return _kernels.backend().systematic(_cumulative(w), float(u))


def inverse_cdf_ancestors(sorted_weights, sorted_uniforms):
    """Smallest m with cumulative weight >= u, for nondecreasing uniforms.

    ``sorted_weights`` are the weights in the order the caller wants indices
    to refer to (the Hilbert order in SQMC). One merge pass, O(N).
    """
    w = _check_weights(sorted_weights)
    u = np.ascontiguousarray(sorted_uniforms, dtype=np.float64)
    if u.size > 1 and (np.diff(u) < 0).any():
        raise ValueError("uniforms must be sorted in nondecreasing order")
    return _kernels.backend().inverse_cdf(_cumulative(w), u)


def multinomial_resample(weights, rng, M=None):
    """Multinomial resampling through sorted i.i.d. uniforms."""
    w = np.asarray(weights, dtype=np.float64)
    M = w.size if M is None else M
    return inverse_cdf_ancestors(w, np.sort(rng.random(M)))


def normalize_log_weights(logw, t):
    """Normalized weights from log-weights; raises on total degeneracy."""
    mx = np.max(logw)
    if not np.isfinite(mx):
        raise DegenerateWeightsError(t)
    w = np.exp(logw - mx)
    s = w.sum()
    if not np.isfinite(s) or s <= 0:
        raise DegenerateWeightsError(t)
    return w / s


@dataclass
class FilterOutput:
    """Per-time filter summaries for t = 0..T."""

    means: np.ndarray
    variances: np.ndarray
    ess: np.ndarray
    iter_seconds: np.ndarray
    particles: list = field(default=None, repr=False)

    @property
    def T(self):
        return self.means.shape[0] - 1

    def mean_iter_seconds(self):
        """Average time per iteration, excluding t = 0."""
        return float(np.mean(self.iter_seconds[1:])) if self.T > 0 else float(self.iter_seconds[0])

    def to_csv(self, path):
        d = self.means.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"mean_{i + 1}" for i in range(d)] + ["ess", "iter_seconds"])
            for t in range(self.T + 1):
                w.writerow([t] + [repr(float(v)) for v in self.means[t]]
                           + [repr(float(self.ess[t])), repr(float(self.iter_seconds[t]))])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header = rows[0]
        data = np.array(rows[1:], dtype=np.float64).reshape(len(rows) - 1, len(header))
        mcols = [i for i, h in enumerate(header) if h.startswith("mean_")]
        means = data[:, mcols]
        return cls(means, np.full_like(means, np.nan), data[:, header.index("ess")],
                   data[:, header.index("iter_seconds")])


class _Recorder:
    def __init__(self, T, d, keep_particles):
        self.means = np.empty((T + 1, d))
        self.variances = np.empty((T + 1, d))
        self.ess = np.empty(T + 1)
        self.seconds = np.empty(T + 1)
        self.particles = [] if keep_particles else None

    def record(self, t, x, W, elapsed):
        m = W @ x
        self.means[t] = m
        self.variances[t] = _weighted_var(W, x, m)
        self.ess[t] = 1.0 / np.sum(W ** 2)
        self.seconds[t] = elapsed
        if self.particles is not None:
            self.particles.append(ParticleSystem(x.copy(), W.copy(), t))

    def output(self):
        return FilterOutput(self.means, self.variances, self.ess, self.seconds, self.particles)


def _prepare(model, ys, N):
    if not is_power_of_two(N):
        raise ConfigurationError(f"N must be a power of 2, got {N}")
    ys = np.asarray(ys, dtype=np.float64)
    if ys.ndim == 1:
        ys = ys[:, None] if model.obs_dim == 1 else ys[None, :]
    if ys.shape[0] == 0:
        raise ConfigurationError("at least one observation is required")
    return ys


def _open_uniforms(rng, size):
    u = rng.random(size)
    return np.maximum(u, np.finfo(float).tiny, out=u)


def smc_bootstrap(model, ys, N, resampler=Resampler.SYSTEMATIC, seed=0, keep_particles=False):
    """Bootstrap particle filter with resampling at every step.

    Parameters
    ----------
    model : StateSpaceModel
    ys : (T+1, obs_dim) array
        observations y_0..y_T
    N : int
        number of particles (power of 2)
    resampler : Resampler or str
        ``"systematic"`` or ``"multinomial"`` (sorted uniforms).
    seed : int or numpy.random.SeedSequence
    keep_particles : bool
        store a :class:`ParticleSystem` for every t in the output.

    Returns
    -------
    FilterOutput
    """
    ys = _prepare(model, ys, N)
    resampler = Resampler(resampler)
    rng = np.random.default_rng(seed)
    d = model.state_dim
    T = ys.shape[0] - 1
    rec = _Recorder(T, d, keep_particles)

    start = time.perf_counter()
    x = np.asarray(model.prior_from_uniform(_open_uniforms(rng, (N, d))), dtype=np.float64)
    W = normalize_log_weights(model.log_likelihood(0, ys[0], x), 0)
    rec.record(0, x, W, time.perf_counter() - start)

    for t in range(1, T + 1):
        start = time.perf_counter()
        if resampler is Resampler.SYSTEMATIC:
            a = systematic_resample(W, rng.random())
        else:
            a = multinomial_resample(W, rng)
        x = model.transition_from_uniform(t, x[a], _open_uniforms(rng, (N, d)))
        W = normalize_log_weights(model.log_likelihood(t, ys[t], x), t)
        rec.record(t, x, W, time.perf_counter() - start)
    return rec.output()


def step_seed(seed, t):
    """Independent 64-bit scrambling seed for time step ``t``."""
    ss = np.random.SeedSequence([int(seed) & ((1 << 64) - 1), t])
    return int(ss.generate_state(1, np.uint64)[0])


def _hilbert_order(codec, psi, x):
    if x.shape[1] == 1:
        # psi is increasing, so sorting raw states is exact in one dimension
        return np.argsort(x[:, 0], kind="stable")
    return hilbert_sort(codec, psi(x))


def sqmc_bootstrap(model, ys, N, codec=None, seed=0, psi_source=None,
                   point_source="sobol", max_bits=31, keep_particles=False):
    """Sequential quasi-Monte Carlo bootstrap filter.

    Parameters
    ----------
    model : StateSpaceModel
    ys : (T+1, obs_dim) array
    N : int
        number of particles (power of 2)
    codec : HilbertCodec, optional
        defaults to order 16 (reduced to fit 64-bit keys when d > 4).
    seed : int
        scrambling seed; each t uses its own derived seed.
    psi_source : callable, optional
        ``psi_source(t, x, W) -> PsiMap`` for the map applied to the
        particles of time t before Hilbert sorting. Defaults to
        ``model.psi_bounds(t)``, falling back to the empirical
        mean +- 4 sd of the cloud.
    point_source : {"sobol", "iid"}
        ``"iid"`` swaps the scrambled Sobol' points for pseudo-random ones
        (ablation hook).
    max_bits : int
        Sobol' / scrambling bit depth.

    Returns
    -------
    FilterOutput
    """
    ys = _prepare(model, ys, N)
    d = model.state_dim
    T = ys.shape[0] - 1
    if codec is None:
        codec = HilbertCodec.for_dimension(d)
    elif codec.d != d:
        raise ConfigurationError("Hilbert codec dimension differs from the state dimension")
    if point_source not in ("sobol", "iid"):
        raise ConfigurationError(f"unknown point source {point_source!r}")
    seed = int(seed)
    iid_rng = np.random.default_rng(seed) if point_source == "iid" else None

    def points(t, dim):
        if iid_rng is not None:
            return _open_uniforms(iid_rng, (N, dim))
        return scrambled_sobol(N, dim, step_seed(seed, t), max_bits).values

    def psi_at(t, x, W):
        if psi_source is not None:
            return psi_source(t, x, W)
        psi = model.psi_bounds(t)
        return psi if psi is not None else empirical_psi_bounds(x, W)

    rec = _Recorder(T, d, keep_particles)

    start = time.perf_counter()
    x = np.asarray(model.prior_from_uniform(points(0, d)), dtype=np.float64)
    W = normalize_log_weights(model.log_likelihood(0, ys[0], x), 0)
    rec.record(0, x, W, time.perf_counter() - start)

    for t in range(1, T + 1):
        start = time.perf_counter()
        u = points(t, d + 1)
        tau = np.argsort(u[:, 0], kind="stable")
        sigma = _hilbert_order(codec, psi_at(t - 1, x, W), x)
        a = sigma[inverse_cdf_ancestors(W[sigma], u[tau, 0])]
        x = model.transition_from_uniform(t, x[a], u[tau, 1:])
        W = normalize_log_weights(model.log_likelihood(t, ys[t], x), t)
        rec.record(t, x, W, time.perf_counter() - start)
    return rec.output()
