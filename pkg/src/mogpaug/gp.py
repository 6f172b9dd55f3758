"""Exact multi-output GP inference with a linear model of coregionalisation.

Outputs are modelled as ``f_i(x) = sum_r alpha[i, r] g_r(x)`` with
independent latent GPs ``g_r ~ GP(0, k_r)``, plus an optional per-latent
diagonal ``kappa_r`` so that the coregionalisation matrix of latent ``r`` is
``B_r = alpha_r alpha_r^T + diag(kappa_r)``.  With one latent this is the
intrinsic coregionalisation model; with one output it is an ordinary
single-output GP, served by the same code path.

Observations are handled in a stacked representation: each observed
(point, output) pair is one scalar entry, ordered output-major.  Missing
entries are dropped from the stacked system, never imputed.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.linalg.lapack
import scipy.optimize

from . import _accel
from .errors import FitError, InputError, NumericalError, ParameterError
from .kernels import KernelSpec, Matern52, kernel_from_dict

FORMAT_VERSION = 1
MAX_JITTER = 1e-2
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """N input points with an N x M observation matrix and its mask.

    Entries of ``Y`` where ``mask`` is False are ignored (they may be NaN).
    """

    X: np.ndarray
    Y: np.ndarray
    output_ids: tuple = ()
    mask: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.ndim != 2 or Y.ndim != 2:
            raise InputError("X and Y must be 2-D")
        if X.shape[0] != Y.shape[0]:
            raise InputError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
        if X.shape[0] < 1 or Y.shape[1] < 1:
            raise InputError("a training set needs N >= 1 and M >= 1")
        mask = np.isfinite(Y) if self.mask is None else np.asarray(self.mask, dtype=bool)
        if mask.shape != Y.shape:
            raise InputError(f"mask shape {mask.shape} != Y shape {Y.shape}")
        if not np.all(np.isfinite(Y[mask])):
            raise InputError("observed entries of Y must be finite")
        if not np.all(np.isfinite(X)):
            raise InputError("X must be finite")
        ids = tuple(self.output_ids) if len(self.output_ids) else tuple(range(Y.shape[1]))
        if len(ids) != Y.shape[1]:
            raise InputError(f"{len(ids)} output ids for {Y.shape[1]} outputs")
        X.setflags(write=False)
        Y.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "output_ids", ids)

    @property
    def N(self):
        return self.X.shape[0]

    @property
    def M(self):
        return self.Y.shape[1]

    @property
    def L(self):
        return self.X.shape[1]

    @property
    def n_obs(self):
        return int(self.mask.sum())

    def stacked(self):
        """(output index, point index, value) of observed entries, output-major."""
        out_idx, pt_idx = np.nonzero(self.mask.T)
        return out_idx, pt_idx, self.Y[pt_idx, out_idx]

    def output_means(self):
        """Empirical mean of each output over its observed entries (0 if none)."""
        counts = self.mask.sum(axis=0)
        sums = np.where(self.mask, self.Y, 0.0).sum(axis=0)
        return np.divide(sums, counts, out=np.zeros(self.M), where=counts > 0)


@dataclass(frozen=True, eq=False)
class Latent:
    kernel: KernelSpec
    alpha: np.ndarray
    kappa: np.ndarray

    def coregionalization(self):
        return np.outer(self.alpha, self.alpha) + np.diag(self.kappa)


@dataclass(frozen=True, eq=False)
class CoregionalizedModel:
    """LMC/ICM model.  Kernel length-scales live in standardised input units."""

    latents: tuple
    noise: np.ndarray
    output_mean: np.ndarray
    input_shift: np.ndarray
    input_scale: np.ndarray
    output_ids: tuple = ()
    jitter: float = 1e-8

    def __post_init__(self):
        latents = tuple(self.latents)
        if not latents:
            raise ParameterError("at least one latent function is required")
        M = len(np.atleast_1d(latents[0].alpha))
        fixed = []
        for lat in latents:
            alpha = np.array(lat.alpha, dtype=float).reshape(-1)
            kappa = np.array(lat.kappa, dtype=float).reshape(-1)
            if alpha.shape != (M,) or kappa.shape != (M,):
                raise ParameterError("alpha and kappa must have one entry per output")
            if np.any(kappa < 0) or not np.all(np.isfinite(kappa)):
                raise ParameterError("kappa must be finite and >= 0")
            if not np.all(np.isfinite(alpha)):
                raise ParameterError("alpha must be finite")
            fixed.append(Latent(lat.kernel, alpha, kappa))
        noise = np.array(self.noise, dtype=float).reshape(-1)
        if noise.shape != (M,) or np.any(noise < 0) or not np.all(np.isfinite(noise)):
            raise ParameterError("noise must hold M finite non-negative variances")
        mean = np.array(self.output_mean, dtype=float).reshape(-1)
        if mean.shape != (M,):
            raise ParameterError("output_mean must have one entry per output")
        shift = np.array(self.input_shift, dtype=float).reshape(-1)
        scale = np.array(self.input_scale, dtype=float).reshape(-1)
        if shift.shape != scale.shape or np.any(scale <= 0):
            raise ParameterError("input_scale must be positive and match input_shift")
        ids = tuple(self.output_ids) if len(self.output_ids) else tuple(range(M))
        if len(ids) != M:
            raise ParameterError(f"{len(ids)} output ids for {M} outputs")
        object.__setattr__(self, "latents", tuple(fixed))
        object.__setattr__(self, "noise", noise)
        object.__setattr__(self, "output_mean", mean)
        object.__setattr__(self, "input_shift", shift)
        object.__setattr__(self, "input_scale", scale)
        object.__setattr__(self, "output_ids", ids)

    @classmethod
    def icm(cls, kernel, alpha, kappa=None, noise=None, output_mean=None,
            input_dim=1, output_ids=(), jitter=1e-8):
        """Single-latent model with identity standardisation."""
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        M = alpha.shape[0]
        return cls(
            latents=(Latent(kernel, alpha, np.zeros(M) if kappa is None else kappa),),
            noise=np.zeros(M) if noise is None else noise,
            output_mean=np.zeros(M) if output_mean is None else output_mean,
            input_shift=np.zeros(input_dim),
            input_scale=np.ones(input_dim),
            output_ids=output_ids,
            jitter=jitter,
        )

    @property
    def M(self):
        return self.noise.shape[0]

    @property
    def R(self):
        return len(self.latents)

    @property
    def L(self):
        return self.input_shift.shape[0]

    def coregionalization_matrix(self, r=0):
        return self.latents[r].coregionalization()

    def standardize(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[1] != self.L:
            raise InputError(f"expected {self.L}-dimensional inputs, got {X.shape[1]}")
        return (X - self.input_shift) / self.input_scale

    def kernels_in_input_units(self):
        """Latent kernels re-expressed in raw input units.

        Only meaningful when every input dimension shares one scale, which is
        the default isotropic standardisation.
        """
        if not np.allclose(self.input_scale, self.input_scale[0], rtol=0, atol=0):
            raise ParameterError("per-dimension scaling has no isotropic raw-unit equivalent")
        return [lat.kernel.rescaled(float(self.input_scale[0])) for lat in self.latents]

    # -- flat parameter vector ------------------------------------------------

    def get_params(self):
        parts = []
        for lat in self.latents:
            parts += [np.asarray(lat.kernel.params(), dtype=float), lat.alpha, lat.kappa]
        parts.append(self.noise)
        return np.concatenate(parts)

    def param_names(self):
        names = []
        for r, lat in enumerate(self.latents):
            names += lat.kernel.param_names(f"latent{r}.")
            names += [f"latent{r}.alpha[{m}]" for m in range(self.M)]
            names += [f"latent{r}.kappa[{m}]" for m in range(self.M)]
        names += [f"noise[{m}]" for m in range(self.M)]
        return names

    def positive_mask(self):
        mask = []
        for lat in self.latents:
            mask += [True] * len(lat.kernel.params()) + [False] * self.M + [True] * self.M
        mask += [True] * self.M
        return np.array(mask)

    def with_params(self, values):
        values = np.asarray(values, dtype=float)
        M, pos, latents = self.M, 0, []
        for lat in self.latents:
            n = len(lat.kernel.params())
            kernel = lat.kernel.with_params(values[pos:pos + n])
            pos += n
            alpha = values[pos:pos + M]
            kappa = values[pos + M:pos + 2 * M]
            pos += 2 * M
            latents.append(Latent(kernel, alpha, kappa))
        noise = values[pos:pos + M]
        if pos + M != values.shape[0]:
            raise ParameterError(f"parameter vector has wrong length {values.shape[0]}")
        return replace(self, latents=tuple(latents), noise=noise)

    # -- checkpoint -----------------------------------------------------------

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "standardization": {
                "shift": self.input_shift.tolist(),
                "scale": self.input_scale.tolist(),
            },
            "latents": [
                {
                    "kernel": lat.kernel.to_dict(),
                    "alpha": lat.alpha.tolist(),
                    "kappa": lat.kappa.tolist(),
                }
                for lat in self.latents
            ],
            "noise": self.noise.tolist(),
            "output_mean": self.output_mean.tolist(),
            "output_ids": list(self.output_ids),
            "jitter": self.jitter,
        }

    @classmethod
    def from_dict(cls, d):
        version = d.get("format_version")
        if version != FORMAT_VERSION:
            raise ParameterError(f"unsupported model format_version {version!r}")
        try:
            return cls(
                latents=tuple(
                    Latent(kernel_from_dict(lat["kernel"]), lat["alpha"], lat["kappa"])
                    for lat in d["latents"]
                ),
                noise=d["noise"],
                output_mean=d["output_mean"],
                input_shift=d["standardization"]["shift"],
                input_scale=d["standardization"]["scale"],
                output_ids=tuple(d["output_ids"]),
                jitter=d.get("jitter", 1e-8),
            )
        except KeyError as exc:
            raise ParameterError(f"model checkpoint missing field {exc}") from None


@dataclass(frozen=True, eq=False)
class PosteriorPrediction:
    mean: np.ndarray
    covariance: np.ndarray

    @property
    def variance(self):
        return np.diag(self.covariance)


@dataclass(frozen=True)
class FitReport:
    log_marginal_likelihood: float
    iterations: int
    restart_index: int
    converged: bool
    jitter: float
    restarts: tuple = ()
    trace: tuple = ()
    wall_time: float = field(default=0.0, compare=False)


@dataclass(frozen=True)
class FitOptions:
    restarts: int = 3
    max_iters: int = 200
    tol: float = 1e-7
    seed: int = 0
    learn_kappa: bool | None = None
    learn_noise: bool = True
    mean_policy: str = "empirical"
    standardize: str = "isotropic"


# -- covariance assembly --------------------------------------------------------


def _stacked_index(mask, n_points, M):
    if mask is None:
        mask = np.ones((n_points, M), dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (n_points, M):
        raise InputError(f"mask shape {mask.shape} != ({n_points}, {M})")
    out_idx, pt_idx = np.nonzero(mask.T)
    return out_idx, pt_idx


def _stacked_cov(model, D, out1, pt1, out2, pt2):
    K = np.zeros((out1.shape[0], out2.shape[0]))
    for lat in model.latents:
        _accel.accumulate_stacked(lat.coregionalization(), lat.kernel.value(D),
                                  out1, pt1, out2, pt2, K)
    return K


def build_joint_covariance(model, X, X2=None, mask=None, mask2=None):
    """Prior covariance between the observed entries of two input sets.

    Inputs are in raw units and get standardised with the model's constants.
    Rows follow the output-major stacked order of ``mask`` (all entries when
    ``mask`` is None); likewise columns for ``mask2``.
    """
    Xs = model.standardize(X)
    out1, pt1 = _stacked_index(mask, Xs.shape[0], model.M)
    if X2 is None:
        D = _accel.self_distances(Xs)
        if mask2 is None:
            out2, pt2 = out1, pt1
        else:
            out2, pt2 = _stacked_index(mask2, Xs.shape[0], model.M)
    else:
        X2s = model.standardize(X2)
        D = _accel.pairwise_distances(Xs, X2s)
        out2, pt2 = _stacked_index(mask2, X2s.shape[0], model.M)
    return _stacked_cov(model, D, out1, pt1, out2, pt2)


def _cholesky(K, base_jitter):
    """Lower Cholesky factor with escalating diagonal jitter."""
    scale = float(np.mean(np.diag(K))) if K.shape[0] else 1.0
    if not (math.isfinite(scale) and scale > 0):
        scale = 1.0
    levels, level = [], base_jitter
    while level <= MAX_JITTER * (1 + 1e-9):
        levels.append(level)
        Kj = K.copy()
        Kj[np.diag_indices_from(Kj)] += level * scale
        try:
            Lc = np.linalg.cholesky(Kj)
            if np.all(np.isfinite(Lc)):
                return Lc, level * scale
        except np.linalg.LinAlgError:
            pass
        level *= 10.0
    raise NumericalError(
        f"Cholesky failed for a {K.shape[0]}x{K.shape[0]} covariance "
        f"at relative jitter levels {levels}",
        jitter_levels=levels,
    )


class _Conditioned:
    """Cholesky-factored training system shared by likelihood and prediction."""

    def __init__(self, model, data):
        if data.L != model.L:
            raise InputError(f"model expects L={model.L}, data has L={data.L}")
        if data.M != model.M:
            raise InputError(f"model has M={model.M}, data has M={data.M}")
        if data.n_obs == 0:
            raise InputError("training set has no observed entries")
        self.model = model
        self.Xs = model.standardize(data.X)
        self.out_idx, self.pt_idx, y = data.stacked()
        self.resid = y - model.output_mean[self.out_idx]
        self.D = _accel.self_distances(self.Xs)
        self.K = _stacked_cov(model, self.D, self.out_idx, self.pt_idx,
                              self.out_idx, self.pt_idx)
        self.K[np.diag_indices_from(self.K)] += model.noise[self.out_idx]
        self.chol, self.jitter = _cholesky(self.K, model.jitter)
        self.weights = scipy.linalg.cho_solve((self.chol, True), self.resid)

    def log_marginal_likelihood(self):
        n = self.resid.shape[0]
        return float(
            -0.5 * self.resid @ self.weights
            - np.sum(np.log(np.diag(self.chol)))
            - 0.5 * n * LOG_2PI
        )

    def gradient(self):
        model, M = self.model, self.model.M
        Kinv, info = scipy.linalg.lapack.dpotri(self.chol, lower=1)
        if info != 0:
            raise NumericalError(f"dpotri failed with info={info}")
        W = np.tril(Kinv)
        W += np.tril(W, -1).T
        # W = a a^T - K^-1, the trace-identity weight matrix
        np.subtract(np.outer(self.weights, self.weights), W, out=W)
        # the jitter is proportional to mean(diag K), so it moves with theta too
        n = W.shape[0]
        diag_mean = float(np.mean(np.diag(self.K))) if n else 0.0
        if self.jitter > 0 and math.isfinite(diag_mean) and diag_mean > 0:
            W[np.diag_indices(n)] += self.jitter / diag_mean * np.trace(W) / n
        grads = []
        for lat in model.latents:
            Kx = lat.kernel.value(self.D)
            P, C = _accel.contract_stacked(W, lat.coregionalization(), Kx,
                                           self.out_idx, self.pt_idx, self.Xs.shape[0], M)
            for dk in lat.kernel.grad(self.D):
                grads.append(0.5 * np.sum(P * dk))
            grads.extend(C @ lat.alpha)
            grads.extend(0.5 * np.diag(C))
        grads.extend(0.5 * np.bincount(self.out_idx, weights=np.diag(W), minlength=M))
        return np.asarray(grads, dtype=float)


def log_marginal_likelihood(model, data, gradient=True):
    """Log evidence of ``data`` under ``model``.

    Returns ``(value, grad)`` with ``grad`` ordered like ``model.get_params()``
    (natural parameters), or just the value when ``gradient`` is False.
    """
    cond = _Conditioned(model, data)
    value = cond.log_marginal_likelihood()
    if not gradient:
        return value
    return value, cond.gradient()


class Posterior:
    """Conditioned model; reusable across many query batches."""

    def __init__(self, model, data):
        self._cond = _Conditioned(model, data)
        self.model = model

    @property
    def jitter(self):
        return self._cond.jitter

    def predict_many(self, Xq, full_cov=True, max_block=4_000_000):
        """Posterior mean (Q, M) and covariance (Q, M, M) at query rows.

        With ``full_cov=False`` the second result holds marginal variances
        (Q, M) instead.  Marginal variances are clamped at zero.
        """
        c, model = self._cond, self.model
        M = model.M
        Xqs = model.standardize(Xq)
        Q = Xqs.shape[0]
        n = c.resid.shape[0]
        prior = sum(lat.coregionalization() * float(lat.kernel.value(0.0))
                    for lat in model.latents)
        means = np.empty((Q, M))
        covs = np.empty((Q, M, M)) if full_cov else np.empty((Q, M))
        step = max(1, max_block // max(1, n * M))
        for start in range(0, Q, step):
            stop = min(Q, start + step)
            q = stop - start
            D = _accel.pairwise_distances(c.Xs, Xqs[start:stop])
            out2 = np.tile(np.arange(M), q)
            pt2 = np.repeat(np.arange(q), M)
            Ks = _stacked_cov(model, D, c.out_idx, c.pt_idx, out2, pt2)
            means[start:stop] = (Ks.T @ c.weights).reshape(q, M) + model.output_mean
            V = scipy.linalg.solve_triangular(c.chol, Ks, lower=True).reshape(n, q, M)
            if full_cov:
                block = prior[None] - np.einsum("nqi,nqj->qij", V, V)
                block = 0.5 * (block + block.transpose(0, 2, 1))
                idx = np.arange(M)
                block[:, idx, idx] = np.maximum(block[:, idx, idx], 0.0)
                covs[start:stop] = block
            else:
                var = np.diag(prior)[None] - np.einsum("nqi,nqi->qi", V, V)
                covs[start:stop] = np.maximum(var, 0.0)
        return means, covs


def predict(model, data, x_star):
    """Posterior mean and M x M covariance of the outputs at one query point."""
    x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
    if x_star.ndim != 1 or x_star.shape[0] != model.L:
        raise InputError(f"query point must have dimension {model.L}")
    means, covs = Posterior(model, data).predict_many(x_star[None, :])
    return PosteriorPrediction(means[0], covs[0])


# -- fitting ----------------------------------------------------------------------


def standardization_for(X, policy="isotropic"):
    """Shift/scale constants for raw inputs ``X``.

    ``isotropic`` centres each dimension and divides every dimension by one
    common scale (root mean variance of the non-constant dimensions), which
    keeps the
    Euclidean geometry the isotropic kernels assume.  ``per_dimension`` gives
    each dimension unit variance; ``none`` is the identity.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    L = X.shape[1]
    if policy == "none":
        return np.zeros(L), np.ones(L)
    shift = X.mean(axis=0)
    std = X.std(axis=0)
    if policy == "isotropic":
        # constant dimensions are excluded so that appending one leaves
        # every distance unchanged
        varying = std > 0
        s = float(np.sqrt(np.mean(std[varying] ** 2))) if varying.any() else 1.0
        scale = np.full(L, s if s > 0 else 1.0)
    elif policy == "per_dimension":
        scale = np.where(std > 0, std, 1.0)
    else:
        raise ParameterError(f"unknown standardization policy {policy!r}")
    return shift, scale


def initial_model(data, kernel=None, n_latent=1, standardize="isotropic",
                  mean_policy="empirical", jitter=1e-8):
    """Data-scaled starting point for :func:`fit`."""
    kernel = Matern52(1.0) if kernel is None else kernel
    shift, scale = standardization_for(data.X, standardize)
    mean = data.output_means() if mean_policy == "empirical" else np.zeros(data.M)
    var = _output_variances(data, mean)
    latents = []
    for r in range(n_latent):
        alpha = np.sqrt(0.8 * var / n_latent) * (1.0 if r == 0 else 0.5)
        latents.append(Latent(kernel, alpha, 0.1 * var / n_latent))
    return CoregionalizedModel(
        latents=tuple(latents),
        noise=0.1 * var,
        output_mean=mean,
        input_shift=shift,
        input_scale=scale,
        output_ids=data.output_ids,
        jitter=jitter,
    )


def _output_variances(data, mean):
    resid = np.where(data.mask, data.Y - mean, 0.0)
    counts = np.maximum(data.mask.sum(axis=0), 1)
    var = (resid**2).sum(axis=0) / counts
    fallback = float(var[var > 0].mean()) if np.any(var > 0) else 1.0
    return np.where(var > 0, var, fallback)


def fit(model, data, opts=None):
    """Maximise the log marginal likelihood with L-BFGS-B from seeded restarts.

    ``model`` supplies the structure (kernels, number of latents) and the
    first restart's starting point; its standardisation and output means are
    recomputed from ``data`` according to ``opts``.  Positive hyperparameters
    are optimised in log space.  Returns ``(fitted_model, FitReport)``.
    """
    opts = FitOptions() if opts is None else opts
    if opts.restarts < 1:
        raise ParameterError("restarts must be >= 1")
    if data.M != model.M:
        raise InputError(f"model has M={model.M}, data has M={data.M}")
    t0 = time.perf_counter()

    shift, scale = standardization_for(data.X, opts.standardize)
    if opts.mean_policy == "empirical":
        mean = data.output_means()
    elif opts.mean_policy == "zero":
        mean = np.zeros(data.M)
    else:
        raise ParameterError(f"unknown mean policy {opts.mean_policy!r}")
    model = replace(model, input_shift=shift, input_scale=scale, output_mean=mean,
                    output_ids=data.output_ids)
    vscale = float(np.mean(_output_variances(data, mean)))

    names = model.param_names()
    positive = model.positive_mask()
    learn_kappa = model.M > 1 if opts.learn_kappa is None else opts.learn_kappa
    free = np.ones(len(names), dtype=bool)
    bounds = []
    for i, name in enumerate(names):
        if ".kappa[" in name:
            free[i] = learn_kappa
            bounds.append((math.log(1e-8 * vscale), math.log(1e3 * vscale)))
        elif name.startswith("noise["):
            free[i] = opts.learn_noise
            bounds.append((math.log(1e-6 * vscale), math.log(1e3 * vscale)))
        elif ".alpha[" in name:
            bounds.append((None, None))
        elif name.endswith("variance"):
            bounds.append((math.log(1e-6), math.log(1e6)))
        else:
            bounds.append((math.log(1e-3), math.log(1e3)))
    bounds = [b for b, f in zip(bounds, free) if f]

    base = model.get_params()
    if not learn_kappa:
        for i, name in enumerate(names):
            if ".kappa[" in name:
                base[i] = 0.0

    def to_free(theta):
        z = np.where(positive, np.log(np.maximum(theta, 1e-300)), theta)
        return z[free]

    def to_theta(z):
        theta = base.copy()
        vals = np.array(z, dtype=float)
        pos = positive[free]
        vals[pos] = np.exp(vals[pos])
        theta[free] = vals
        return theta

    def objective(z):
        theta = to_theta(z)
        try:
            value, grad = log_marginal_likelihood(model.with_params(theta), data)
        except (NumericalError, ParameterError):
            return 1e25, np.zeros_like(z)
        grad = np.where(positive, grad * theta, grad)[free]
        if not (math.isfinite(value) and np.all(np.isfinite(grad))):
            return 1e25, np.zeros_like(z)
        return -value, -grad

    rng = np.random.default_rng(opts.seed)
    results, best = [], None
    for restart in range(opts.restarts):
        z0 = to_free(base)
        # draw perturbations unconditionally so restart k is seed-stable
        kick = rng.normal(size=z0.shape)
        if restart > 0:
            z0 = z0 + np.where(positive[free], 1.0, 0.3) * kick
            z0 = np.array([np.clip(v, lo if lo is not None else -np.inf,
                                   hi if hi is not None else np.inf)
                           for v, (lo, hi) in zip(z0, bounds)])
        trace = []
        try:
            f0, _ = objective(z0)
            if f0 >= 1e25:
                raise NumericalError("initial point is numerically infeasible")
            trace.append(-f0)
            res = scipy.optimize.minimize(
                objective, z0, jac=True, method="L-BFGS-B", bounds=bounds,
                callback=lambda intermediate_result: trace.append(-intermediate_result.fun),
                options={"maxiter": opts.max_iters, "ftol": opts.tol, "gtol": 1e-6},
            )
            if res.fun >= 1e25 or not math.isfinite(res.fun):
                raise NumericalError(f"optimiser ended infeasible: {res.message}")
            diag = {"restart": restart, "log_marginal_likelihood": float(-res.fun),
                    "iterations": int(res.nit), "converged": bool(res.success),
                    "message": str(res.message), "error": None}
            results.append(diag)
            if best is None or -res.fun > best[0]:
                best = (float(-res.fun), restart, res, tuple(trace))
        except (NumericalError, ParameterError) as exc:
            results.append({"restart": restart, "log_marginal_likelihood": None,
                            "iterations": 0, "converged": False,
                            "message": str(exc), "error": type(exc).__name__})
    if best is None:
        raise FitError(f"all {opts.restarts} restarts failed", diagnostics=results)

    lml, restart, res, trace = best
    fitted = model.with_params(to_theta(res.x))
    jitter = _Conditioned(fitted, data).jitter
    if not res.success:
        warnings.warn(f"best restart did not converge: {res.message}", RuntimeWarning)
    report = FitReport(
        log_marginal_likelihood=lml,
        iterations=int(res.nit),
        restart_index=restart,
        converged=bool(res.success),
        jitter=jitter,
        restarts=tuple(tuple(sorted(d.items())) for d in results),
        trace=trace,
        wall_time=time.perf_counter() - t0,
    )
    return fitted, report
