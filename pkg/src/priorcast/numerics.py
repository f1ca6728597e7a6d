"""Deterministic dense linear-algebra and elementary-function kernels.

All matrices are float64 numpy arrays, row-major. Every public function is
pure; randomized ones take an explicit generator so identical seeds give
identical output. Generators must not be shared across threads; derive
per-task seeds with split_seed instead.
"""

import numpy as np

from .errors import NumericError

# Norms at or below this are treated as degenerate (zero vector).
NORM_EPS = 1e-12

# Relative singular-value cutoff for the pseudo-inverse.
SVD_CUTOFF = 1e-10


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; the single RNG algorithm used everywhere."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def split_seed(seed: int, *keys) -> int:
    """Derive an independent child seed from a root seed and a key path.

    Keys may be ints or strings; strings are folded to stable ints so the
    derivation does not depend on Python's randomized hash.
    """
    folded = [int(seed)]
    for key in keys:
        if isinstance(key, str):
            folded.append(int.from_bytes(key.encode("utf-8"), "little") % (2**63))
        else:
            folded.append(int(key))
    ss = np.random.SeedSequence(folded)
    return int(ss.generate_state(1, np.uint64)[0])


def l2_normalize(v: np.ndarray):
    """Scale v to unit Euclidean norm.

    Returns (normalized, degenerate). If ||v|| <= NORM_EPS the vector is
    returned unchanged and degenerate is True.
    """
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm <= NORM_EPS:
        return v.copy(), True
    return v / norm, False


def softmax(logits: np.ndarray) -> np.ndarray:
    """Softmax over the last axis, computed with max-subtraction."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity clamped to [-1, 1]; 0 if either vector is degenerate."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na <= NORM_EPS or nb <= NORM_EPS:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def pseudo_inverse(w: np.ndarray) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of a d x C matrix via SVD.

    Singular values at or below SVD_CUTOFF * sigma_max are treated as zero.
    The result satisfies the four Penrose conditions to ~1e-8 relative
    Frobenius error for well-scaled inputs.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    try:
        u, s, vt = np.linalg.svd(w, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD did not converge: {exc}") from exc
    cutoff = SVD_CUTOFF * (s[0] if s.size else 0.0)
    large = s > cutoff
    inv_s = np.zeros_like(s)
    inv_s[large] = 1.0 / s[large]
    return (vt.T * inv_s) @ u.T


def random_orthogonal(d: int, c: int, rng: np.random.Generator) -> np.ndarray:
    """d x C matrix with orthonormal columns from a seeded Gaussian draw.

    QR factorization with the triangular factor's diagonal made positive, so
    the result is a deterministic function of the generator state.
    """
    if d < c:
        raise ValueError(f"need d >= C for orthonormal columns, got d={d}, C={c}")
    g = rng.standard_normal((d, c))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def assert_finite(a: np.ndarray, what: str) -> None:
    """Raise NumericError if a contains NaN or Inf."""
    if not np.all(np.isfinite(a)):
        raise NumericError(f"non-finite values in {what}")
