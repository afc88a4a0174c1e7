"""Frame-0 chain initialization.

Hierarchical K-means (points -> particles, particle centers -> clusters),
empirical weights / velocity means / sample covariances, rigid transforms via
Kabsch alignment of assigned points against their observed displacements, and
data-dependent hyperparameters from frame statistics.
"""
from __future__ import annotations

import math

import numpy as np

from . import rng as rngmod
from .distributions import chol_spd, inverse_wishart_mean
from .rng import RngState, substream
from .types import (
    Assignments,
    HyperParams,
    ModelState,
    NumericalDomainError,
    Observations,
    ValidationError,
)


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """(N, K) squared Euclidean distances."""
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def kmeans_pp(points: np.ndarray, K: int, seed, max_iter: int = 100,
              n_init: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """K-means++ seeding followed by Lloyd iterations to a label fixpoint.

    ``n_init`` restarts keep the lowest-objective run (Lloyd converges to
    local minima).  Degenerate seeding (all remaining distances zero) falls
    back to sampling unused distinct points; fewer than K distinct points is
    an error.
    """
    points = np.asarray(points, dtype=np.float64)
    N = points.shape[0]
    if not N >= K >= 1:
        raise ValidationError(f"need N >= K >= 1, got N={N}, K={K}")
    distinct = np.unique(points, axis=0)
    if distinct.shape[0] < K:
        raise ValidationError(f"need at least K={K} distinct points, got {distinct.shape[0]}")
    rng = seed if isinstance(seed, np.random.Generator) else substream(int(seed), rngmod.INIT)
    best = None
    for _ in range(max(1, n_init)):
        centers, labels = _kmeans_single(points, K, rng, max_iter)
        obj = kmeans_objective(points, centers, labels)
        if best is None or obj < best[0]:
            best = (obj, centers, labels)
    return best[1], best[2]


def _kmeans_single(points: np.ndarray, K: int, rng: np.random.Generator,
                   max_iter: int) -> tuple[np.ndarray, np.ndarray]:
    N = points.shape[0]
    centers = np.empty((K, points.shape[1]))
    centers[0] = points[rng.integers(N)]
    d2 = np.einsum("nd,nd->n", points - centers[0], points - centers[0])
    for k in range(1, K):
        total = d2.sum()
        if total > 0:
            probs = d2 / total
            idx = int(np.searchsorted(np.cumsum(probs), rng.random()).clip(0, N - 1))
        else:
            # all mass on existing centers; resample among unused distinct points
            used = {tuple(c) for c in centers[:k]}
            candidates = [i for i in range(N) if tuple(points[i]) not in used]
            idx = candidates[rng.integers(len(candidates))]
        centers[k] = points[idx]
        d2 = np.minimum(d2, np.einsum("nd,nd->n", points - centers[k], points - centers[k]))

    labels = np.argmin(_sq_dists(points, centers), axis=1)
    for _ in range(max_iter):
        for k in range(K):
            members = labels == k
            if np.any(members):
                centers[k] = points[members].mean(axis=0)
            else:
                # reseed empty cell at the worst-fit point
                far = int(np.argmax(np.min(_sq_dists(points, centers), axis=1)))
                centers[k] = points[far]
        new_labels = np.argmin(_sq_dists(points, centers), axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return centers, labels


def kmeans_objective(points: np.ndarray, centers: np.ndarray, labels: np.ndarray) -> float:
    diff = points - centers[labels]
    return float(np.einsum("nd,nd->", diff, diff))


def kabsch_align(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Optimal rigid (R, t) mapping src onto dst in least squares.

    R is recovered from the SVD of the cross-covariance of the centered sets
    with the determinant-corrected middle factor, so det(R) = +1.  A
    rank-deficient cross-covariance falls back to the identity rotation with
    a translation of means.
    """
    src = np.atleast_2d(np.asarray(src, dtype=np.float64))
    dst = np.atleast_2d(np.asarray(dst, dtype=np.float64))
    if src.shape[0] == 0:
        raise ValidationError("kabsch_align requires at least one point")
    if src.shape != dst.shape:
        raise ValidationError(f"src shape {src.shape} != dst shape {dst.shape}")
    d = src.shape[1]
    src_mean = src.mean(axis=0)
    dst_mean = dst.mean(axis=0)
    H = (src - src_mean).T @ (dst - dst_mean)
    if np.linalg.matrix_rank(H) < d:
        return np.eye(d), dst_mean - src_mean
    U, _, Vt = np.linalg.svd(H)
    D = np.eye(d)
    D[-1, -1] = np.sign(np.linalg.det(Vt.T @ U.T))
    R = Vt.T @ D @ U.T
    t = dst_mean - R @ src_mean
    return R, t


def _spd_or(cov: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    try:
        chol_spd(cov)
        return cov
    except NumericalDomainError:
        return fallback.copy()


def init_state(obs: Observations, K: int, L: int, hyper: HyperParams, seed: int
               ) -> ModelState:
    """Hierarchical K-means initialization of the full latent state.

    Particles come from K-means++ on positions, clusters from a second pass
    over the particle centers.  Weights and velocity means are empirical;
    covariances are sample covariances with a prior-mean fallback below two
    members; rigid transforms come from Kabsch alignment per cluster.
    """
    N, d = len(obs), obs.dim
    if not N >= L >= K >= 1:
        raise ValidationError(f"need N >= L >= K >= 1, got N={N}, L={L}, K={K}")
    hyper.validate(d)

    part_rng = substream(seed, rngmod.INIT, 0)
    clus_rng = substream(seed, rngmod.INIT, 1)
    mu_B, z_B = kmeans_pp(obs.positions, L, part_rng, n_init=4)
    mu_H, z_H = kmeans_pp(mu_B, K, clus_rng, n_init=8)

    counts_b = np.bincount(z_B, minlength=L)
    counts_h = np.bincount(z_H, minlength=K)
    pi_B = counts_b / N
    pi_H = counts_h / L

    prior_b = inverse_wishart_mean(hyper.Psi_B, hyper.nu_B)
    prior_v = inverse_wishart_mean(hyper.Psi_V, hyper.nu_V)
    prior_h = inverse_wishart_mean(hyper.Psi_H, hyper.nu_H)

    vel = np.zeros((L, d))
    Sigma_B = np.empty((L, d, d))
    Sigma_V = np.empty((L, d, d))
    for ell in range(L):
        members = z_B == ell
        m = int(members.sum())
        if m:
            vel[ell] = obs.velocities[members].mean(axis=0)
        if m >= 2:
            dx = obs.positions[members] - mu_B[ell]
            dv = obs.velocities[members] - vel[ell]
            Sigma_B[ell] = _spd_or(dx.T @ dx / (m - 1), prior_b)
            Sigma_V[ell] = _spd_or(dv.T @ dv / (m - 1), prior_v)
        else:
            Sigma_B[ell] = prior_b
            Sigma_V[ell] = prior_v

    Sigma_H = np.empty((K, d, d))
    rot = np.empty((K, d, d))
    trans = np.zeros((K, d))
    for k in range(K):
        members = z_H == k
        m = int(members.sum())
        if m >= 2:
            dm = mu_B[members] - mu_H[k]
            Sigma_H[k] = _spd_or(dm.T @ dm / (m - 1), prior_h)
        else:
            Sigma_H[k] = prior_h
        point_mask = members[z_B]
        if np.any(point_mask):
            src = obs.positions[point_mask]
            dst = src + obs.velocities[point_mask]
            rot[k], trans[k] = kabsch_align(src, dst)
        else:
            rot[k] = np.eye(d)

    feat = None
    if obs.features is not None:
        F = obs.features.shape[1]
        feat = np.zeros((L, F))
        for ell in range(L):
            members = z_B == ell
            if np.any(members):
                feat[ell] = obs.features[members].mean(axis=0)

    return ModelState(
        dim=d, mu_B=mu_B, Sigma_B=Sigma_B, vel=vel, Sigma_V=Sigma_V, pi_B=pi_B,
        mu_H=mu_H, Sigma_H=Sigma_H, rot=rot, trans=trans, pi_H=pi_H,
        assignments=Assignments(z_B, z_H), rng=RngState(seed), feat=feat,
    )


def data_dependent_hyperparams(obs: Observations, state: ModelState,
                               base: HyperParams | None = None) -> HyperParams:
    """Hyperparameters from frame statistics.

    The cluster location prior is the per-axis median position.  Degrees of
    freedom are floored medians of weight-proportional point counts, clamped
    to D + 2.  Inverse-Wishart scale matrices are isotropic and calibrated so
    the prior MEAN sits at the median covariance length scale (median of
    trace/D over components): Psi = scale * (nu - D - 1) * I.  Calibrating
    raw Psi instead leaves a prior mean of scale/nu, which collapses every
    covariance once nu reaches data-scale counts and turns assignment into
    nearest-center matching.  All other fields are inherited from ``base``.
    """
    d = obs.dim
    if base is None:
        base = HyperParams.default(d)
    N = len(obs)
    mu_prior = np.median(obs.positions, axis=0)
    scale_b = float(np.median(np.trace(state.Sigma_B, axis1=1, axis2=2) / d))
    scale_v = float(np.median(np.trace(state.Sigma_V, axis1=1, axis2=2) / d))
    scale_h = float(np.median(np.trace(state.Sigma_H, axis1=1, axis2=2) / d))
    nu_b = max(float(math.floor(np.median(state.pi_B * N))), d + 2.0)
    nu_h = max(float(math.floor(np.median(state.pi_H * N))), d + 2.0)
    eye = np.eye(d)
    return base.replace(
        mu_H_prior=mu_prior,
        Psi_B=scale_b * (nu_b - d - 1) * eye,
        Psi_V=scale_v * (nu_b - d - 1) * eye,
        Psi_H=scale_h * (nu_h - d - 1) * eye,
        nu_B=nu_b,
        nu_V=nu_b,
        nu_H=nu_h,
    )
