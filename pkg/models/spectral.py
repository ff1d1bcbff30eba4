import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import torch

from models.graph import DegreeVectors, DirectedGraph
from models.neutral import RankOneNeutral
from models.perturbation import SparseSignedMatrix

logger = logging.getLogger(__name__)

POWER_ITERATION = "power_iteration"
DENSE_FULL = "dense_full"


class SpectralError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpectralConfig:
    tol: float = 1e-10
    max_iter: Optional[int] = None
    dense_cap: int = 2000
    shift: float = 1.0

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("Spectral tolerance must be positive")
        if self.dense_cap < 2:
            raise ValueError("Dense cap must be at least 2")
        if self.shift < 0:
            raise ValueError("Power-iteration shift must be nonnegative")

    def iterations_for(self, n: int) -> int:
        return self.max_iter if self.max_iter is not None else 50 * n + 1000


@dataclass
class PerronPair:
    lambda1: float
    vector: np.ndarray
    residual: float
    converged: bool
    n_iter: int


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    vectors: np.ndarray
    near_defective: bool = False


class SparseNorm(NamedTuple):
    norm: float
    cap: float
    converged: bool


@dataclass
class SpectralSummary:
    lambda1: float
    gap: float
    kappa: float
    v_right: np.ndarray = field(repr=False)
    v_left: np.ndarray = field(repr=False)
    residual_right: float
    residual_left: float
    method: str = POWER_ITERATION
    near_defective: bool = False

    def to_dict(self) -> dict:
        return {
            "lambda1": self.lambda1,
            "gap": self.gap,
            "kappa": self.kappa,
            "residual_right": self.residual_right,
            "residual_left": self.residual_left,
            "method": self.method,
            "near_defective": self.near_defective,
        }


def as_tensor(A) -> torch.Tensor:
    if isinstance(A, torch.Tensor):
        return A.to(torch.float64)
    if isinstance(A, DirectedGraph):
        return torch.from_numpy(A.adjacency(np.float64))
    if isinstance(A, RankOneNeutral):
        return A.to_tensor()
    if sp.issparse(A):
        return torch.from_numpy(A.toarray().astype(np.float64))
    return torch.from_numpy(np.asarray(A, dtype=np.float64))


def _orient(v: np.ndarray, reference: Optional[np.ndarray]) -> np.ndarray:
    if reference is not None and float(v @ reference) < 0:
        return -v
    if reference is None and v.sum() < 0:
        return -v
    return v


def _operator(A, transpose: bool) -> Tuple[Callable[[torch.Tensor], torch.Tensor], int]:
    """Matrix-vector product with A (or A^T) and the dimension n."""
    if isinstance(A, RankOneNeutral):
        product = A.rmatvec if transpose else A.matvec
        return (lambda v: torch.from_numpy(product(v.numpy()))), A.n
    M = as_tensor(A)
    if transpose:
        M = M.T.contiguous()
    return (lambda v: torch.mv(M, v)), M.shape[0]


def _power_iteration(matvec: Callable[[torch.Tensor], torch.Tensor], n: int, start: Optional[np.ndarray],
                     reference: Optional[np.ndarray], tol: float, max_iter: int, shift: float) -> PerronPair:
    # Iterates on M + shift*I: same eigenvectors, strictly dominant Perron root
    # for irreducible nonnegative M even when M is periodic.
    if start is None:
        v = torch.full((n,), 1.0 / math.sqrt(n), dtype=torch.float64)
    else:
        v = torch.from_numpy(np.array(start, dtype=np.float64))
        v = v / torch.linalg.vector_norm(v)

    lam = torch.tensor(0.0, dtype=torch.float64)
    residual = math.inf
    n_iter = 0
    converged = False
    while n_iter < max_iter:
        n_iter += 1
        w = matvec(v)
        lam = torch.dot(v, w)
        residual = float(torch.linalg.vector_norm(w - lam * v))
        if residual <= tol:
            converged = True
            break
        w = w + shift * v
        norm = torch.linalg.vector_norm(w)
        if norm == 0:
            raise SpectralError("Power iteration collapsed to the zero vector")
        v = w / norm

    if not converged:
        logger.warning("Power iteration did not converge in %d iterations (residual %.3e)", max_iter, residual)
    vec = _orient(v.numpy().copy(), reference)
    return PerronPair(lambda1=float(lam), vector=vec, residual=residual, converged=converged, n_iter=n_iter)


def leading_right_eigenvector(A, tol: float = 1e-10, max_iter: Optional[int] = None,
                              start: Optional[np.ndarray] = None, reference: Optional[np.ndarray] = None,
                              shift: float = 1.0) -> PerronPair:
    """Perron pair of A by shifted power iteration.

    Starts from `start` (the unit degree vector in the rewiring code) and
    orients the result so that <v, reference> >= 0; `reference` defaults to
    `start`. A RankOneNeutral is never densified and starts from its row sums.
    """
    matvec, n = _operator(A, transpose=False)
    if start is None and isinstance(A, RankOneNeutral):
        start = A.row_sums()
    if max_iter is None:
        max_iter = 50 * n + 1000
    return _power_iteration(matvec, n, start, start if reference is None else reference, tol, max_iter, shift)


def leading_left_eigenvector(A, tol: float = 1e-10, max_iter: Optional[int] = None,
                             start: Optional[np.ndarray] = None, reference: Optional[np.ndarray] = None,
                             shift: float = 1.0) -> PerronPair:
    matvec, n = _operator(A, transpose=True)
    if max_iter is None:
        max_iter = 50 * n + 1000
    return _power_iteration(matvec, n, start, start if reference is None else reference, tol, max_iter, shift)


def _order(eigenvalues: np.ndarray) -> np.ndarray:
    # nonincreasing modulus, ties by descending real then imaginary part
    mod = np.round(np.abs(eigenvalues), 9)
    re = np.round(eigenvalues.real, 9)
    im = np.round(eigenvalues.imag, 9)
    return np.lexsort((-im, -re, -mod))


def full_spectrum(A, dense_cap: int = 2000) -> Spectrum:
    M = as_tensor(A)
    n = M.shape[0]
    if n > dense_cap:
        raise SpectralError(f"n = {n} exceeds the dense cap {dense_cap}")
    try:
        if torch.equal(M, M.T):
            L, V = torch.linalg.eigh(M)
            L, V = L.to(torch.complex128), V.to(torch.complex128)
        else:
            L, V = torch.linalg.eig(M)
    except RuntimeError as e:
        raise SpectralError(f"Eigensolver failed: {e}") from e

    V = V / torch.linalg.vector_norm(V, dim=0, keepdim=True)
    eigenvalues = L.numpy()
    vectors = V.numpy()
    order = _order(eigenvalues)
    eigenvalues, vectors = eigenvalues[order], vectors[:, order]

    near_defective = False
    if n > 1:
        gram = np.abs(vectors.conj().T @ vectors)
        np.fill_diagonal(gram, 0.0)
        separation = math.sqrt(max(0.0, 1.0 - float(gram.max()) ** 2))
        if separation < 1e-8:
            near_defective = True
            logger.warning("Eigenvector matrix is near-defective (column separation %.2e)", separation)
    return Spectrum(eigenvalues=eigenvalues, vectors=vectors, near_defective=near_defective)


def spectral_gap(eigenvalues, multiplicity_tol: float = 1e-9) -> float:
    eigenvalues = np.asarray(eigenvalues, dtype=np.complex128)
    if len(eigenvalues) < 2:
        raise ValueError("Spectral gap needs at least two eigenvalues")
    distances = np.abs(eigenvalues[1:] - eigenvalues[0])
    gap = float(distances.min())
    if gap <= multiplicity_tol:
        logger.warning("Leading eigenvalue is not simple (gap %.2e); reporting gap 0", gap)
        return 0.0
    return gap


def distortion_factor(V) -> float:
    """||V||_2 ||V^-1||_2 as the ratio of extreme singular values.

    Complex V has the same singular values as its real 2n x 2n realification
    (each repeated twice), so the ratio is computed on V directly.
    """
    V = torch.as_tensor(np.asarray(V))
    if not V.is_complex():
        V = V.to(torch.float64)
    s = torch.linalg.svdvals(V)
    smax, smin = float(s[0]), float(s[-1])
    if smin <= smax * np.finfo(np.float64).eps * V.shape[0]:
        raise SpectralError("Eigenvector matrix is singular to working precision")
    return smax / smin


def spectral_norm_sparse(M: SparseSignedMatrix, tol: float = 1e-10, max_iter: int = 10000) -> SparseNorm:
    cap = math.sqrt(M.norm_1 * M.norm_inf)
    if M.nnz == 0:
        return SparseNorm(0.0, 0.0, True)

    X = M.to_scipy()
    XT = X.T.tocsr()
    v = np.random.Generator(np.random.Philox(0)).standard_normal(M.n)
    v /= np.linalg.norm(v)

    sigma2 = 0.0
    converged = False
    for _ in range(max_iter):
        w = XT @ (X @ v)
        sigma2 = float(v @ w)
        if sigma2 <= 0:
            sigma2 = 0.0
            break
        # residual of the eigen-equation M^T M v = sigma^2 v
        if float(np.linalg.norm(w - sigma2 * v)) <= tol * sigma2:
            converged = True
            break
        v = w / np.linalg.norm(w)
    if not converged:
        logger.warning("Sparse spectral norm did not converge in %d iterations", max_iter)
    return SparseNorm(math.sqrt(sigma2), cap, converged)


def angle(x, y) -> float:
    """Acute angle between the lines spanned by x and y, in [0, pi/2]."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        raise ValueError("Angle is undefined for a zero vector")
    xu, yu = x / nx, y / ny
    s = -1.0 if float(xu @ yu) < 0 else 1.0
    theta = 2.0 * math.atan2(float(np.linalg.norm(xu - s * yu)), float(np.linalg.norm(xu + s * yu)))
    return min(max(theta, 0.0), math.pi / 2)


def _dense_pair(M: torch.Tensor, spectrum: Spectrum, reference: np.ndarray) -> PerronPair:
    v = spectrum.vectors[:, 0]
    v = v * np.exp(-1j * np.angle(v[np.argmax(np.abs(v))]))
    v = v.real / np.linalg.norm(v.real)
    v = _orient(v, reference)
    lam = float(spectrum.eigenvalues[0].real)
    residual = float(np.linalg.norm(M.numpy() @ v - lam * v))
    return PerronPair(lambda1=lam, vector=v, residual=residual, converged=True, n_iter=0)


def summarize(A, degrees: DegreeVectors, config: SpectralConfig = SpectralConfig(),
              v_right0: Optional[np.ndarray] = None, v_left0: Optional[np.ndarray] = None) -> SpectralSummary:
    M = as_tensor(A)
    n = M.shape[0]
    max_iter = config.iterations_for(n)
    right = leading_right_eigenvector(M, config.tol, max_iter,
                                      start=degrees.d_out_unit if v_right0 is None else v_right0,
                                      reference=degrees.d_out_unit, shift=config.shift)
    left = leading_left_eigenvector(M, config.tol, max_iter,
                                    start=degrees.d_in_unit if v_left0 is None else v_left0,
                                    reference=degrees.d_in_unit, shift=config.shift)
    spectrum = full_spectrum(M, config.dense_cap)
    method = POWER_ITERATION
    if not right.converged:
        right = _dense_pair(M, spectrum, degrees.d_out_unit)
        method = DENSE_FULL
    if not left.converged:
        left = _dense_pair(M.T.contiguous(), full_spectrum(M.T.contiguous(), config.dense_cap), degrees.d_in_unit)
        method = DENSE_FULL

    return SpectralSummary(
        lambda1=right.lambda1,
        gap=spectral_gap(spectrum.eigenvalues),
        kappa=distortion_factor(spectrum.vectors),
        v_right=right.vector,
        v_left=left.vector,
        residual_right=right.residual,
        residual_left=left.residual,
        method=method,
        near_defective=spectrum.near_defective,
    )
