"""Primitive distributions and discretized rigid-transform candidate sets.

Gaussian log densities go through triangular (Cholesky) factorizations; the
Inverse-Wishart sampler uses the Bartlett decomposition of the Wishart of the
inverse scale.  All categorical arithmetic is done in log space with
max-subtraction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln, logsumexp, multigammaln, xlogy

from .types import NumericalDomainError, ValidationError, check_dim

if TYPE_CHECKING:  # pragma: no cover
    from .types import HyperParams

_LOG_2PI = math.log(2.0 * math.pi)

# Default candidate-grid sizes; overridable through configuration.
DEFAULT_NUM_ROTATIONS = {2: 33, 3: 129}


def default_num_translations(dim: int) -> int:
    return 5 ** dim


# --------------------------------------------------------------------------
# Gaussians
# --------------------------------------------------------------------------

def chol_spd(cov: np.ndarray) -> np.ndarray:
    """Cholesky factor of an SPD matrix.

    On failure retries once with a diagonal jitter of 1e-9 * trace/D, then
    raises NumericalDomainError.
    """
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        d = cov.shape[0]
        jitter = 1e-9 * float(np.trace(cov)) / d
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(d))
        except np.linalg.LinAlgError as exc:
            raise NumericalDomainError("matrix is not positive definite") from exc


def spd_inverse(cov: np.ndarray) -> np.ndarray:
    L = chol_spd(np.asarray(cov, dtype=np.float64))
    inv_l = solve_triangular(L, np.eye(L.shape[0]), lower=True)
    inv = inv_l.T @ inv_l
    return 0.5 * (inv + inv.T)


def mvn_logpdf(x, mean, cov) -> float:
    x = np.asarray(x, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    L = chol_spd(np.asarray(cov, dtype=np.float64))
    z = solve_triangular(L, x - mean, lower=True)
    return float(-0.5 * (x.size * _LOG_2PI + z @ z) - np.log(np.diag(L)).sum())


def mvn_logpdf_rows(X: np.ndarray, mean, cov) -> np.ndarray:
    """Log density of each row of X under a single Gaussian."""
    X = np.asarray(X, dtype=np.float64)
    L = chol_spd(np.asarray(cov, dtype=np.float64))
    Z = solve_triangular(L, (X - mean).T, lower=True)
    quad = np.einsum("dn,dn->n", Z, Z)
    return -0.5 * (X.shape[1] * _LOG_2PI + quad) - np.log(np.diag(L)).sum()


def isotropic_logpdf_rows(X: np.ndarray, mean, var: float) -> np.ndarray:
    """Row-wise Gaussian log density with covariance var * I."""
    diff = np.asarray(X, dtype=np.float64) - mean
    sq = np.einsum("nd,nd->n", diff, diff)
    d = diff.shape[1]
    return -0.5 * (d * (_LOG_2PI + math.log(var)) + sq / var)


def mvn_sample(mean, cov, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    mean = np.asarray(mean, dtype=np.float64)
    L = chol_spd(np.asarray(cov, dtype=np.float64))
    if size is None:
        return mean + L @ rng.standard_normal(mean.size)
    return mean + rng.standard_normal((size, mean.size)) @ L.T


def moments_from_precision(m_vec: np.ndarray, precision: np.ndarray):
    """(mean, covariance) of the Gaussian N(P^{-1} m, P^{-1})."""
    cov = spd_inverse(precision)
    return cov @ np.asarray(m_vec, dtype=np.float64), cov


# --------------------------------------------------------------------------
# Inverse-Wishart
# --------------------------------------------------------------------------

def inverse_wishart_sample(Psi: np.ndarray, nu: float, rng: np.random.Generator,
                           size: int | None = None) -> np.ndarray:
    """Draw from IW(Psi, nu) via Bartlett decomposition of the inverse Wishart."""
    Psi = np.asarray(Psi, dtype=np.float64)
    d = Psi.shape[0]
    if not nu > d - 1:
        raise ValidationError(f"nu must exceed dim - 1 = {d - 1}, got {nu}")
    Ls = chol_spd(spd_inverse(Psi))
    n = 1 if size is None else int(size)
    A = np.zeros((n, d, d))
    for i in range(d):
        A[:, i, i] = np.sqrt(rng.chisquare(nu - i, size=n))
        for j in range(i):
            A[:, i, j] = rng.standard_normal(n)
    C = Ls[None, :, :] @ A
    if size is None:
        c = C[0]
        c_inv = solve_triangular(c, np.eye(d), lower=True)
        out = c_inv.T @ c_inv
        return 0.5 * (out + out.T)
    c_inv = np.linalg.inv(C)
    out = np.einsum("nki,nkj->nij", c_inv, c_inv)
    return 0.5 * (out + np.transpose(out, (0, 2, 1)))


def inverse_wishart_mean(Psi: np.ndarray, nu: float) -> np.ndarray:
    Psi = np.asarray(Psi, dtype=np.float64)
    d = Psi.shape[0]
    if not nu > d + 1:
        raise ValidationError(f"IW mean needs nu > dim + 1, got {nu}")
    return Psi / (nu - d - 1)


def inverse_wishart_logpdf(Sigma: np.ndarray, Psi: np.ndarray, nu: float) -> float:
    Sigma = np.asarray(Sigma, dtype=np.float64)
    Psi = np.asarray(Psi, dtype=np.float64)
    d = Sigma.shape[0]
    L_sig = chol_spd(Sigma)
    L_psi = chol_spd(Psi)
    logdet_sig = 2.0 * np.log(np.diag(L_sig)).sum()
    logdet_psi = 2.0 * np.log(np.diag(L_psi)).sum()
    half = solve_triangular(L_sig, L_psi, lower=True)
    trace_term = float(np.sum(half * half))   # tr(Sigma^{-1} Psi)
    return float(
        0.5 * nu * logdet_psi
        - 0.5 * nu * d * math.log(2.0)
        - multigammaln(0.5 * nu, d)
        - 0.5 * (nu + d + 1) * logdet_sig
        - 0.5 * trace_term
    )


# --------------------------------------------------------------------------
# Dirichlet / categorical / gamma
# --------------------------------------------------------------------------

def dirichlet_sample(conc: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    conc = np.asarray(conc, dtype=np.float64)
    if np.any(conc <= 0):
        raise ValidationError("Dirichlet concentration entries must be positive")
    return rng.dirichlet(conc)


def dirichlet_logpdf(x: np.ndarray, conc: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    conc = np.asarray(conc, dtype=np.float64)
    return float(xlogy(conc - 1.0, x).sum() + gammaln(conc.sum()) - gammaln(conc).sum())


def log_normalize(log_weights: np.ndarray) -> np.ndarray:
    """Probabilities from unnormalized log weights (max-subtracted)."""
    log_weights = np.asarray(log_weights, dtype=np.float64)
    m = np.max(log_weights)
    if not np.isfinite(m):
        raise ValidationError("no admissible component: all log weights are -inf")
    p = np.exp(log_weights - m)
    return p / p.sum()


def categorical_sample(log_weights: np.ndarray, rng: np.random.Generator) -> int:
    p = log_normalize(log_weights)
    c = np.cumsum(p)
    return int(np.searchsorted(c, rng.random() * c[-1], side="right").clip(0, len(p) - 1))


def categorical_sample_rows(log_weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of a (N, M) log-weight matrix."""
    lw = np.asarray(log_weights, dtype=np.float64)
    m = np.max(lw, axis=1, keepdims=True)
    if not np.all(np.isfinite(m)):
        raise ValidationError("no admissible component: a row has all -inf weights")
    p = np.exp(lw - m)
    c = np.cumsum(p, axis=1)
    u = rng.random((lw.shape[0], 1)) * c[:, -1:]
    return (u > c).sum(axis=1).astype(np.int64)


def gamma_logpdf(x, shape: float, rate: float) -> np.ndarray:
    """Log density of Gamma(shape, rate) evaluated elementwise."""
    x = np.asarray(x, dtype=np.float64)
    out = np.where(
        x > 0,
        xlogy(shape - 1.0, np.maximum(x, 1e-300)) - rate * x
        + shape * math.log(rate) - gammaln(shape),
        -np.inf,
    )
    return out


# --------------------------------------------------------------------------
# Rotations and transform candidate sets
# --------------------------------------------------------------------------

def rotation_2d(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def rotation_from_axis_angle(axis: np.ndarray, theta: float) -> np.ndarray:
    """Rodrigues' rotation formula for a unit axis."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    kx, ky, kz = axis
    K = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    return np.eye(3) + math.sin(theta) * K + (1.0 - math.cos(theta)) * (K @ K)


def rotation_angle(R: np.ndarray) -> float:
    """Geodesic angle of a rotation from the identity."""
    R = np.asarray(R, dtype=np.float64)
    if R.shape[0] == 2:
        return abs(math.atan2(R[1, 0], R[0, 0]))
    return float(np.arccos(np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)))


def fibonacci_sphere(n: int) -> np.ndarray:
    """n approximately evenly spread unit vectors (deterministic)."""
    i = np.arange(n, dtype=np.float64)
    z = 1.0 - 2.0 * (i + 0.5) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    golden = math.pi * (3.0 - math.sqrt(5.0))
    phi = golden * i
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


@dataclass(frozen=True)
class TransformCandidates:
    """Finite candidate sets for cluster rotations and translations.

    Prior log weights are normalized; the identity rotation and the zero
    translation are always members.
    """

    rotations: np.ndarray            # (M_r, D, D)
    rotation_log_prior: np.ndarray   # (M_r,)
    translations: np.ndarray         # (M_t, D)
    translation_log_prior: np.ndarray  # (M_t,)

    def __post_init__(self):
        object.__setattr__(self, "rotations", np.asarray(self.rotations, dtype=np.float64))
        object.__setattr__(self, "translations", np.asarray(self.translations, dtype=np.float64))
        for name in ("rotation_log_prior", "translation_log_prior"):
            lw = np.asarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, lw - logsumexp(lw))

    @property
    def dim(self) -> int:
        return self.rotations.shape[1]

    @property
    def num_rotations(self) -> int:
        return self.rotations.shape[0]

    @property
    def num_translations(self) -> int:
        return self.translations.shape[0]

    def rotation_index(self, R: np.ndarray, atol: float = 1e-9) -> int:
        hits = np.where(np.all(np.abs(self.rotations - R) <= atol, axis=(1, 2)))[0]
        if hits.size == 0:
            raise ValidationError("rotation is not a member of the candidate set")
        return int(hits[0])

    def translation_index(self, t: np.ndarray, atol: float = 1e-9) -> int:
        hits = np.where(np.all(np.abs(self.translations - t) <= atol, axis=1))[0]
        if hits.size == 0:
            raise ValidationError("translation is not a member of the candidate set")
        return int(hits[0])


def _odd(n: int) -> int:
    n = max(1, int(n))
    return n if n % 2 == 1 else n + 1


def make_transform_candidates(dim: int, hyper: "HyperParams",
                              M_r: int | None = None,
                              M_t: int | None = None) -> TransformCandidates:
    """Build the discretized transform support shared by sampling and inference.

    2D rotations are evenly spaced angles on [-theta_max, theta_max]; 3D
    rotations see a deterministic low-discrepancy cap coverage (Fibonacci
    axes, cube-root-spaced magnitudes) with the identity always first.
    Translations live on a centered lattice covering +/- 3 sqrt(s2) per axis.
    Prior weights follow exp(kappa * cos(angle)) and the N(0, s2 I) density;
    even grid sizes are rounded up so the identity / zero stay members.
    """
    check_dim(dim)
    if M_r is None:
        M_r = DEFAULT_NUM_ROTATIONS[dim]
    if M_t is None:
        M_t = default_num_translations(dim)
    if M_r < 1 or M_t < 1:
        raise ValidationError("candidate counts must be at least 1")
    kappa = float(hyper.kappa_vmf)
    theta_max = float(hyper.theta_max)

    if dim == 2:
        m = _odd(M_r)
        angles = np.linspace(-theta_max, theta_max, m) if m > 1 else np.array([0.0])
        rotations = np.stack([rotation_2d(a) for a in angles])
        rot_logw = kappa * np.cos(angles)
    else:
        if M_r == 1:
            rotations = np.eye(3)[None]
            rot_logw = np.array([kappa])
        else:
            n = M_r - 1
            axes = fibonacci_sphere(n)
            mags = theta_max * ((np.arange(n, dtype=np.float64) + 1.0) / n) ** (1.0 / 3.0)
            mats = [np.eye(3)] + [rotation_from_axis_angle(axes[i], mags[i]) for i in range(n)]
            rotations = np.stack(mats)
            rot_logw = kappa * np.cos(np.concatenate([[0.0], mags]))

    s = math.sqrt(float(hyper.s2))
    per_axis = _odd(round(M_t ** (1.0 / dim)))
    pts = np.linspace(-3.0 * s, 3.0 * s, per_axis) if per_axis > 1 else np.array([0.0])
    grids = np.meshgrid(*([pts] * dim), indexing="ij")
    translations = np.column_stack([g.ravel() for g in grids])
    trans_logw = -0.5 * np.einsum("md,md->m", translations, translations) / float(hyper.s2)

    return TransformCandidates(rotations, rot_logw, translations, trans_logw)
