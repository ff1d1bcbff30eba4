import numpy as np
import torch
from typing import Sequence


class RankOneNeutral:
    """Degree-only baseline A = d_out d_in^T / m.

    Stored as its two factors; the dense matrix is only built on request.
    """

    def __init__(self, d_out: Sequence[int], d_in: Sequence[int]):
        self.d_out = np.asarray(d_out, dtype=np.float64)
        self.d_in = np.asarray(d_in, dtype=np.float64)
        if self.d_out.shape != self.d_in.shape:
            raise ValueError("d_out and d_in must have the same length")
        self.m = float(self.d_out.sum())
        if self.m <= 0:
            raise ValueError("Neutral matrix needs a positive degree total")
        self.n = len(self.d_out)

    @property
    def matrix(self) -> np.ndarray:
        return np.outer(self.d_out, self.d_in) / self.m

    def to_tensor(self) -> torch.Tensor:
        d_out = torch.from_numpy(self.d_out)
        d_in = torch.from_numpy(self.d_in)
        return torch.outer(d_out, d_in) / self.m

    @property
    def leading_eigenvalue(self) -> float:
        return float(self.d_in @ self.d_out) / self.m

    def row_sums(self) -> np.ndarray:
        return self.d_out * self.d_in.sum() / self.m

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.d_out * (self.d_in @ x) / self.m

    def rmatvec(self, x: np.ndarray) -> np.ndarray:
        return self.d_in * (self.d_out @ x) / self.m


def rank_one_neutral(d_out: Sequence[int], d_in: Sequence[int]) -> RankOneNeutral:
    return RankOneNeutral(d_out, d_in)
