"""Lowest eigenpairs of a discrete pencil by spectrum slicing and inverse iteration."""
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy import linalg

from services.assembly_service import DiscretePencil, SymTridiagonal
from utils.constants import (
    BISECTION_RTOL, MAX_BRACKET_DOUBLINGS, MAX_INVERSE_ITERATIONS, RESIDUAL_TOL,
    SHIFT_OFFSET, ZERO_PIVOT_RTOL, ZTOL_RELATIVE
)
from utils.errors import ConvergenceError, PreconditionError, SpectrumError, WeightError
from utils.mesh_utils import PiecewiseLinear

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EigenPair:
    """Eigenvalue lambda_n with its M_r-normalized eigenfunction."""

    index: int
    lam: float
    vector: PiecewiseLinear
    residual: float


def tridiagonal_inertia(matrix: SymTridiagonal) -> Tuple[int, int, int]:
    """
    Signs of the pivots of the LDL^T factorization of a symmetric tridiagonal.

    Pivots below ZERO_PIVOT_RTOL times the matrix scale count as zero and
    are replaced by that threshold so the recurrence can continue.

    Returns:
        (n_minus, n_zero, n_plus)
    """
    diag = matrix.diag.tolist()
    off2 = (matrix.off ** 2).tolist()
    scale = float(np.max(np.abs(matrix.diag)))
    if matrix.off.size:
        scale += 2.0 * float(np.max(np.abs(matrix.off)))
    threshold = ZERO_PIVOT_RTOL * max(scale, np.finfo(float).tiny)

    n_minus = n_zero = 0
    pivot = diag[0]
    for k in range(len(diag)):
        if k:
            pivot = diag[k] - off2[k - 1] / pivot
        if abs(pivot) <= threshold:
            n_zero += 1
            pivot = threshold
        elif pivot < 0.0:
            n_minus += 1
    return n_minus, n_zero, len(diag) - n_minus - n_zero


class EigenService:
    """Spectrum slicing, inverse iteration and the positivity shift for one pencil."""

    def __init__(self, pencil: DiscretePencil, tol: float = BISECTION_RTOL,
                 residual_tol: float = RESIDUAL_TOL):
        """
        Initialize the eigen service.

        Args:
            pencil: Assembled pencil (A_p + B_q) u = lambda M_r u
            tol: Bisection bracket width relative to max(1, |lambda|)
            residual_tol: Backward error accepted by inverse iteration
        """
        self.pencil = pencil
        self.tol = tol
        self.residual_tol = residual_tol
        self.stiffness = pencil.stiffness
        self._counts = {}
        self._weight_checked = False

    def inertia(self, lam: float) -> Tuple[int, int, int]:
        """
        Inertia of A(lambda); n_minus is the number of eigenvalues below lambda.

        Args:
            lam: Spectral parameter

        Returns:
            (n_minus, n_zero, n_plus)
        """
        if self.pencil.n_dofs == 0:
            raise PreconditionError("The pencil has no unknowns", cells=self.pencil.mesh.n_cells)
        return tridiagonal_inertia(self.stiffness - lam * self.pencil.M_r)

    def _count_below(self, lam: float) -> int:
        if lam not in self._counts:
            self._counts[lam] = self.inertia(lam)[0]
        return self._counts[lam]

    def _check_weight(self):
        if self._weight_checked:
            return
        try:
            linalg.cholesky_banded(self.pencil.M_r.to_banded_upper())
        except linalg.LinAlgError as exc:
            raise WeightError("M_r is not positive definite; the weight failed validation",
                              n_dofs=self.pencil.n_dofs) from exc
        self._weight_checked = True

    def _outer_brackets(self, count: int) -> Tuple[float, float]:
        lo = -1.0
        for _ in range(MAX_BRACKET_DOUBLINGS):
            if self._count_below(lo) == 0:
                break
            lo *= 2.0
        else:
            raise SpectrumError("No lower bound for the spectrum was found", lower=lo)
        hi = 1.0
        for _ in range(MAX_BRACKET_DOUBLINGS):
            if self._count_below(hi) >= count:
                break
            hi *= 2.0
        else:
            raise SpectrumError("No upper bound for the requested eigenvalues", upper=hi)
        return lo, hi

    def _bracket(self, k: int) -> Tuple[float, float]:
        """Tightest known a < lambda_k <= b from the evaluated counts."""
        below = [x for x, n in self._counts.items() if n <= k - 1]
        above = [x for x, n in self._counts.items() if n >= k]
        return max(below), min(above)

    def eigenvalues(self, count: int, tol: Optional[float] = None) -> List[float]:
        """
        The lowest `count` eigenvalues by inertia bisection.

        Args:
            count: Number of eigenvalues, at most the number of dofs
            tol: Bracket width relative to max(1, |lambda|); defaults to the service tol

        Returns:
            Strictly increasing list of eigenvalues
        """
        tol = self.tol if tol is None else tol
        if count < 1 or count > self.pencil.n_dofs:
            raise PreconditionError(
                f"count must lie in [1, {self.pencil.n_dofs}], got {count}", count=count)
        self._check_weight()
        self._outer_brackets(count)

        values = []
        for k in range(1, count + 1):
            a, b = self._bracket(k)
            while b - a > tol * max(1.0, abs(0.5 * (a + b))):
                mid = 0.5 * (a + b)
                if mid <= a or mid >= b:
                    break
                if self._count_below(mid) >= k:
                    b = mid
                else:
                    a = mid
            values.append(0.5 * (a + b))

        for n, (lower, upper) in enumerate(zip(values, values[1:]), start=1):
            if upper - lower <= tol * max(1.0, abs(upper)):
                raise SpectrumError(f"Eigenvalues {n} and {n + 1} are not separated",
                                    lower=lower, upper=upper)
        logger.debug("Eigenvalues: %s", values)
        return values

    def eigenfunction(self, lambda_n: float, index: int = 0) -> EigenPair:
        """
        Inverse iteration on A(lambda_n + delta), delta half the bracket width.

        Args:
            lambda_n: Eigenvalue from eigenvalues()
            index: Position n of the eigenvalue (recorded in the pair)

        Returns:
            EigenPair with u^T M_r u = 1 and the sign convention applied
        """
        pencil = self.pencil
        M = pencil.M_r
        K = self.stiffness
        delta = 0.5 * self.tol * max(1.0, abs(lambda_n))
        x = pencil.mesh.nodes[pencil.dof_map]
        u = x * (1.0 - x) + 1.0 / (1.0 + pencil.n_dofs)
        # backward error: residual relative to (|K| + |lambda| |M|) |u|
        scale = max(_inf_norm(K) + abs(lambda_n) * _inf_norm(M), np.finfo(float).tiny)

        residual = np.inf
        for iteration in range(1, MAX_INVERSE_ITERATIONS + 1):
            shifted = (K - (lambda_n + delta) * M).to_banded()
            try:
                u = linalg.solve_banded((1, 1), shifted, M.matvec(u))
            except linalg.LinAlgError:
                delta *= 10.0
                continue
            u = u / np.sqrt(M.quadratic(u))
            Ku, Mu = K.matvec(u), M.matvec(u)
            residual = float(np.linalg.norm(Ku - lambda_n * Mu) / (scale * np.linalg.norm(u)))
            if residual <= self.residual_tol:
                logger.debug("Inverse iteration for lambda=%.12g converged in %d steps",
                             lambda_n, iteration)
                return EigenPair(index, float(lambda_n), pencil.extend(_fix_sign(u)), residual)

        raise ConvergenceError(f"Inverse iteration did not converge for lambda={lambda_n!r}",
                               residual=residual, iterations=MAX_INVERSE_ITERATIONS)

    def eigenpairs(self, count: int) -> List[EigenPair]:
        """The lowest `count` eigenpairs."""
        logger.info("=== Solving for %d eigenpairs (%d dofs) ===", count, self.pencil.n_dofs)
        return [self.eigenfunction(lam, n)
                for n, lam in enumerate(self.eigenvalues(count), start=1)]

    def find_shift(self) -> float:
        """
        xi = lambda_1 - 1, checked to make A(xi) positive definite.

        Returns:
            The positivity shift xi
        """
        xi = self.eigenvalues(1)[0] - SHIFT_OFFSET
        n_minus, n_zero, n_plus = self.inertia(xi)
        if n_minus or n_zero:
            raise SpectrumError("A(xi) is not positive definite below lambda_1",
                                xi=xi, n_minus=n_minus, n_zero=n_zero)
        return xi


def _fix_sign(u: np.ndarray) -> np.ndarray:
    """First value above the zero tolerance (from the left) becomes positive."""
    significant = np.flatnonzero(np.abs(u) > ZTOL_RELATIVE * np.max(np.abs(u)))
    if significant.size and u[significant[0]] < 0.0:
        return -u
    return u


def _inf_norm(matrix: SymTridiagonal) -> float:
    row = np.abs(matrix.diag)
    if matrix.off.size:
        row[:-1] += np.abs(matrix.off)
        row[1:] += np.abs(matrix.off)
    return float(np.max(row)) if row.size else 0.0
