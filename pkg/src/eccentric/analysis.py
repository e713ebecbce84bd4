"""Latent-space analysis: covariance spectrum, principal embeddings, alignment,
similarity metrics, latent samplers, component decoding and KNN evaluation."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .kernel import PointBatch

__all__ = [
    "SpectrumReport",
    "Embedding",
    "AlignmentResult",
    "SimilarityMetrics",
    "jacobi_eigh",
    "spectrum",
    "to_principal_embedding",
    "align",
    "cross_correlation",
    "similarity_metrics",
    "sample_latents",
    "decode_eigen_components",
    "knn_classify",
]


def jacobi_eigh(mat: np.ndarray, tol: float = 1e-12,
                max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps row-by-row until the off-diagonal Frobenius norm drops below
    tol times the Frobenius norm of the input.  Returns (eigenvalues,
    eigenvectors) with eigenvectors as orthonormal columns, unsorted.
    """
    a = np.array(mat, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, atol=1e-10 * max(1.0, float(np.abs(a).max(initial=0.0)))):
        raise ValueError("matrix is not symmetric")
    v = np.eye(n)
    norm = float(np.linalg.norm(a))
    if norm == 0.0:
        return np.zeros(n), v

    def off(m):
        return math.sqrt(max(float(np.sum(m * m)) - float(np.sum(np.diag(m) ** 2)), 0.0))

    for _ in range(max_sweeps):
        if off(a) <= tol * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                rot_p = c * v[:, p] - s * v[:, q]
                rot_q = s * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = rot_p, rot_q
    return np.diag(a).copy(), v


@dataclass(frozen=True)
class SpectrumReport:
    """Eigenvalues (descending) of a mean-centered covariance, with basis."""

    eigenvalues: np.ndarray = field(repr=False)
    trace: float = 0.0
    mean: np.ndarray = field(default=None, repr=False)
    eigenvectors: np.ndarray = field(default=None, repr=False)


def spectrum(batch: PointBatch) -> SpectrumReport:
    """Covariance spectrum of a point batch (divisor n-1), sorted descending."""
    if batch.count < 2:
        raise ValueError(f"spectrum needs at least 2 points, got {batch.count}")
    z = batch.data
    mean = z.mean(axis=0)
    centered = z - mean
    cov = centered.T @ centered / (batch.count - 1)
    evals, evecs = jacobi_eigh(cov)
    order = np.argsort(evals)[::-1]
    return SpectrumReport(
        eigenvalues=evals[order],
        trace=float(np.trace(cov)),
        mean=mean,
        eigenvectors=evecs[:, order],
    )


@dataclass(frozen=True)
class Embedding:
    """n items with d coordinates in descending-variance (principal) order."""

    coords: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.coords, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D (items, dim) array, got shape {arr.shape}")
        object.__setattr__(self, "coords", arr)

    @property
    def items(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]


def to_principal_embedding(batch: PointBatch) -> Embedding:
    """Center the batch and project onto descending covariance eigenvectors."""
    rep = spectrum(batch)
    return Embedding((batch.data - rep.mean) @ rep.eigenvectors)


@dataclass(frozen=True)
class AlignmentResult:
    """Signed permutations aligning two embeddings, plus before/after correlations.

    permutation_* map output position i to the source column index of the
    corresponding input embedding (0-based).  signs_* are the +-1 factors
    applied after permutation.
    """

    permutation_p: np.ndarray
    permutation_q: np.ndarray
    signs_p: np.ndarray
    signs_q: np.ndarray
    iterations: int
    converged: bool
    corr_before: np.ndarray = field(repr=False)
    corr_after: np.ndarray = field(repr=False)
    aligned_p: Embedding = field(default=None, repr=False)
    aligned_q: Embedding = field(default=None, repr=False)


def _rotate_right(mat, perm, signs, i, j):
    """Cycle columns i..j one step right, bringing column j to position i."""
    sl = slice(i, j + 1)
    mat[:, sl] = np.roll(mat[:, sl], 1, axis=1)
    perm[sl] = np.roll(perm[sl], 1)
    signs[sl] = np.roll(signs[sl], 1)


def align(e1: Embedding, e2: Embedding, max_sweeps_per_dim: int = 100) -> AlignmentResult:
    """Iteratively permute and sign-flip two embeddings into agreement.

    Repeatedly scans positions 1..d; at each position the unplaced column of
    one embedding with the largest absolute inner product against the other
    embedding's current column is cycled into place, with a sign flip
    whenever the matched inner product is negative.  A final pass re-sorts
    both embeddings together by combined column energy and flips any
    remaining negative diagonal matches.
    """
    if e1.items != e2.items or e1.dim != e2.dim:
        raise ValueError(
            f"embeddings must share shape, got {e1.coords.shape} and {e2.coords.shape}"
        )
    d = e1.dim
    p = e1.coords.copy()
    q = e2.coords.copy()
    perm_p = np.arange(d)
    perm_q = np.arange(d)
    signs_p = np.ones(d, dtype=np.int64)
    signs_q = np.ones(d, dtype=np.int64)
    corr_before = cross_correlation(e1, e2)

    cap = max_sweeps_per_dim * d
    iterations = 0
    converged = False
    while iterations < cap:
        iterations += 1
        is_sorted = True
        for i in range(d):
            pj = p[:, i:].T @ q[:, i]
            qk = q[:, i:].T @ p[:, i]
            j = i + int(np.argmax(np.abs(pj)))
            k = i + int(np.argmax(np.abs(qk)))
            if j > i and abs(pj[j - i]) > abs(qk[k - i]):
                is_sorted = False
                _rotate_right(p, perm_p, signs_p, i, j)
                if p[:, i] @ q[:, i] < 0.0:
                    p[:, i] *= -1.0
                    signs_p[i] *= -1
            elif k > i:
                is_sorted = False
                _rotate_right(q, perm_q, signs_q, i, k)
                if p[:, i] @ q[:, i] < 0.0:
                    q[:, i] *= -1.0
                    signs_q[i] *= -1
        if is_sorted:
            converged = True
            break

    # re-sort both embeddings together by combined column energy
    for i in range(d):
        energy = np.sum(p[:, i:] ** 2, axis=0) + np.sum(q[:, i:] ** 2, axis=0)
        k = i + int(np.argmax(energy))
        if k > i:
            _rotate_right(p, perm_p, signs_p, i, k)
            _rotate_right(q, perm_q, signs_q, i, k)
    # any remaining negative diagonal match is resolved by flipping q
    for i in range(d):
        if p[:, i] @ q[:, i] < 0.0:
            q[:, i] *= -1.0
            signs_q[i] *= -1

    aligned_p = Embedding(p)
    aligned_q = Embedding(q)
    return AlignmentResult(
        permutation_p=perm_p,
        permutation_q=perm_q,
        signs_p=signs_p,
        signs_q=signs_q,
        iterations=iterations,
        converged=converged,
        corr_before=corr_before,
        corr_after=cross_correlation(aligned_p, aligned_q),
        aligned_p=aligned_p,
        aligned_q=aligned_q,
    )


def cross_correlation(e1: Embedding, e2: Embedding,
                      return_flags: bool = False):
    """Pearson correlation of every column of e1 against every column of e2.

    Zero-variance columns produce 0 entries; pass return_flags=True to also
    get the boolean mask of entries degenerate in this way.
    """
    if e1.items != e2.items or e1.dim != e2.dim:
        raise ValueError(
            f"embeddings must share shape, got {e1.coords.shape} and {e2.coords.shape}"
        )
    a = e1.coords - e1.coords.mean(axis=0)
    b = e2.coords - e2.coords.mean(axis=0)
    sa = np.sqrt(np.sum(a * a, axis=0))
    sb = np.sqrt(np.sum(b * b, axis=0))
    flags = (sa[:, None] == 0.0) | (sb[None, :] == 0.0)
    denom = np.where(flags, 1.0, sa[:, None] * sb[None, :])
    corr = (a.T @ b) / denom
    corr[flags] = 0.0
    if return_flags:
        return corr, flags
    return corr


@dataclass(frozen=True)
class SimilarityMetrics:
    """Row-wise agreement between two embeddings of the same items."""

    rms_distance: float
    mean_cosine: float
    mean_angle_deg: float
    excluded_rows: int = 0


def similarity_metrics(e1: Embedding, e2: Embedding) -> SimilarityMetrics:
    """RMS row distance, mean row cosine and mean angle (degrees) between embeddings.

    Rows where either side is the zero vector are excluded from the cosine
    and angle means and counted in excluded_rows.
    """
    if e1.items != e2.items or e1.dim != e2.dim:
        raise ValueError(
            f"embeddings must share shape, got {e1.coords.shape} and {e2.coords.shape}"
        )
    a, b = e1.coords, e2.coords
    diff = a - b
    rms = math.sqrt(float(np.mean(np.sum(diff * diff, axis=1))))
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    ok = (na > 0.0) & (nb > 0.0)
    excluded = int(np.sum(~ok))
    if not np.any(ok):
        raise ValueError("all rows are zero vectors; cosine undefined")
    cos = np.sum(a[ok] * b[ok], axis=1) / (na[ok] * nb[ok])
    cos = np.clip(cos, -1.0, 1.0)
    angles = np.degrees(np.arccos(cos))
    return SimilarityMetrics(
        rms_distance=rms,
        mean_cosine=float(np.mean(cos)),
        mean_angle_deg=float(np.mean(angles)),
        excluded_rows=excluded,
    )


def sample_latents(mode: str, reference: PointBatch | None, n: int, dim: int,
                   seed: int) -> PointBatch:
    """Draw latent vectors: standard normal, or matched to a reference batch.

    Matched mode fits mean and covariance (divisor n-1) of the reference and
    draws mean + L g with L the symmetric PSD eigen-factor of the covariance
    (negative eigenvalues clamped to 0).
    """
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    rng = np.random.default_rng(seed)
    if mode == "standard":
        return PointBatch(rng.standard_normal((n, dim)))
    if mode != "matched":
        raise ValueError(f"mode must be 'standard' or 'matched', got {mode!r}")
    if reference is None:
        raise ValueError("matched mode requires a reference batch")
    if reference.dim != dim:
        raise ValueError(f"reference dim {reference.dim} != requested dim {dim}")
    if reference.count < dim + 1:
        warnings.warn(
            f"reference has {reference.count} items < dim+1 = {dim + 1}; "
            "covariance estimate is rank-deficient, proceeding with clamped factor"
        )
    mean = reference.data.mean(axis=0)
    centered = reference.data - mean
    cov = centered.T @ centered / max(reference.count - 1, 1)
    evals, evecs = jacobi_eigh(cov)
    factor = evecs @ np.diag(np.sqrt(np.maximum(evals, 0.0))) @ evecs.T
    g = rng.standard_normal((n, dim))
    return PointBatch(mean + g @ factor)


def decode_eigen_components(decoder, rep: SpectrumReport, scale: float):
    """Decode mean +- scale*sqrt(eigenvalue)*eigenvector per component.

    decoder maps a (k, d) array of latent rows to a (k, out) array (a
    DenseNet forward pass or any compatible callable).  Returns a list of
    (plus, minus) output pairs ordered by descending eigenvalue.
    """
    decode = decoder.forward if hasattr(decoder, "forward") else decoder
    d = rep.eigenvalues.shape[0]
    pairs = []
    for k in range(d):
        step = scale * math.sqrt(max(float(rep.eigenvalues[k]), 0.0)) * rep.eigenvectors[:, k]
        plus = np.asarray(decode((rep.mean + step)[None, :]))[0]
        minus = np.asarray(decode((rep.mean - step)[None, :]))[0]
        pairs.append((plus, minus))
    return pairs


def knn_classify(train_coords: np.ndarray, train_labels: np.ndarray,
                 test_coords: np.ndarray, k: int,
                 truth: np.ndarray | None = None):
    """Brute-force Euclidean k-nearest-neighbor majority vote.

    Vote ties are broken by the smallest summed neighbor distance, then by
    the lowest label.  Returns (predictions, error_rate) where error_rate is
    None unless truth labels are given.
    """
    train_coords = np.asarray(train_coords, dtype=np.float64)
    test_coords = np.asarray(test_coords, dtype=np.float64)
    train_labels = np.asarray(train_labels)
    if train_coords.shape[0] == 0:
        raise ValueError("empty training set")
    if train_labels.shape[0] != train_coords.shape[0]:
        raise ValueError("training labels must match training coordinates")
    if not 1 <= k <= train_coords.shape[0]:
        raise ValueError(f"k must be in [1, {train_coords.shape[0]}], got {k}")

    dist = cdist(test_coords, train_coords)
    preds = np.empty(test_coords.shape[0], dtype=train_labels.dtype)
    for i in range(test_coords.shape[0]):
        nearest = np.argsort(dist[i], kind="stable")[:k]
        labels = train_labels[nearest]
        dists = dist[i][nearest]
        best = None
        for lab in np.unique(labels):
            mask = labels == lab
            entry = (-int(np.sum(mask)), float(np.sum(dists[mask])), lab)
            if best is None or entry < best:
                best = entry
        preds[i] = best[2]
    error = None
    if truth is not None:
        truth = np.asarray(truth)
        error = float(np.mean(preds != truth))
    return preds, error
