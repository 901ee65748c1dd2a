"""Resolvent of a potential-free pencil and the oscillation / Chebyshev checks built on it."""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy import linalg

from services.assembly_service import DiscretePencil
from services.eigen_service import EigenPair
from utils.constants import (
    DEFAULT_EPS_GRID, DEFAULT_SEED, DEFAULT_TRIALS, POWER_ITERATION_TARGET, STAGNATION_NORM,
    ZTOL_RELATIVE
)
from utils.errors import ConvergenceError, PreconditionError
from utils.mesh_utils import PiecewiseLinear
from utils.sign_utils import (
    interlaces, pseudo_zeros, sign_changes, vanishes_on_cell, zero_components
)

logger = logging.getLogger(__name__)

Vector = Union[PiecewiseLinear, np.ndarray]


@dataclass(frozen=True)
class OscillationReport:
    """Counts for one function; pseudo_zeros is keyed by the relative eps."""

    sign_changes: int
    pseudo_zeros: Dict[float, int]
    zero_components_interior: int
    epsilons_used: List[float]
    ztol: float
    touches_left: bool = False
    touches_right: bool = False
    zeros: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            'sign_changes': self.sign_changes,
            'pseudo_zeros': {repr(eps): count for eps, count in self.pseudo_zeros.items()},
            'zero_components_interior': self.zero_components_interior,
            'epsilons_used': self.epsilons_used,
            'ztol': self.ztol,
            'touches_left': self.touches_left,
            'touches_right': self.touches_right,
            'zeros': self.zeros,
        }


class Resolvent:
    """R = A(0)^{-1} M_r on a potential-free pencil, so that R y_n = y_n / lambda_n."""

    def __init__(self, pencil: DiscretePencil):
        """
        Factor A(0) once.

        Args:
            pencil: Pencil whose q-part is zero; A(0) must be positive definite
        """
        if not pencil.potential_free:
            raise PreconditionError("The resolvent needs a potential-free pencil")
        kind = pencil.bc.kind
        natural = [v for v, dirichlet in zip(pencil.bc.V, (kind.dirichlet_left, kind.dirichlet_right))
                   if not dirichlet]
        if any(v < 0.0 for v in natural):
            raise PreconditionError("A(0) is indefinite: negative boundary coefficient",
                                    kind=kind.value, V=list(pencil.bc.V))
        if len(natural) == 2 and not any(v > 0.0 for v in natural):
            raise PreconditionError("A(0) is singular: constants lie in its kernel", kind=kind.value)
        self.pencil = pencil
        try:
            self._factor = linalg.cholesky_banded(pencil.stiffness.to_banded_upper())
        except linalg.LinAlgError as exc:
            raise PreconditionError("A(0) is not positive definite",
                                    kind=pencil.bc.kind.value) from exc

    def solve(self, y: np.ndarray) -> np.ndarray:
        """Dof vector u with A(0) u = M_r y."""
        return linalg.cho_solve_banded((self._factor, False), self.pencil.M_r.matvec(y))

    def apply(self, y: Vector, power: int = 1) -> PiecewiseLinear:
        """
        R^power y.

        Args:
            y: Nodal function on the pencil mesh or a dof vector
            power: Number of applications

        Returns:
            Zero-extended nodal function
        """
        u = self.pencil.restrict(y) if isinstance(y, PiecewiseLinear) else np.asarray(y, float)
        for _ in range(power):
            u = self.solve(u)
        return self.pencil.extend(u)


def resolvent_apply(pencil: DiscretePencil, y: Vector) -> PiecewiseLinear:
    """One application of R; factors A(0) on every call."""
    return Resolvent(pencil).apply(y)


def predicted_steps(lambda_n: float, lambda_next: float,
                    target: float = POWER_ITERATION_TARGET) -> int:
    """Smallest m with (lambda_n / lambda_next)^m <= target."""
    if not 0.0 < lambda_n < lambda_next:
        raise PreconditionError("Need 0 < lambda_n < lambda_next",
                                lambda_n=lambda_n, lambda_next=lambda_next)
    return int(math.ceil(math.log(target) / math.log(lambda_n / lambda_next)))


def combination(pairs: Sequence[EigenPair], alpha: Sequence[float], n: int = 1) -> PiecewiseLinear:
    """Nodal sum_k alpha_k y_k for k = n, n+1, ..."""
    pairs = list(pairs)
    if n < 1 or n - 1 + len(alpha) > len(pairs):
        raise PreconditionError("Coefficients run past the available eigenpairs",
                                n=n, terms=len(alpha), available=len(pairs))
    values = np.zeros(pairs[0].vector.values.size)
    for a, pair in zip(alpha, pairs[n - 1:]):
        values += a * pair.vector.values
    return PiecewiseLinear(pairs[0].vector.mesh, values)


def lift_combination(pairs: Sequence[EigenPair], alpha: Sequence[float], m: int,
                     n: int = 1) -> PiecewiseLinear:
    """u_m = sum_k lambda_k^m alpha_k y_k, so that R u_m = u_{m-1}."""
    pairs = list(pairs)
    lifted = [a * pair.lam ** m for a, pair in zip(alpha, pairs[n - 1:])]
    return combination(pairs, lifted, n)


class OscillationService:
    """Sign-change analytics of eigenfunctions and of the resolvent of one pencil."""

    def __init__(self, pencil: DiscretePencil, eps_grid: Sequence[float] = DEFAULT_EPS_GRID,
                 ztol: Optional[float] = None):
        """
        Initialize the oscillation service.

        Args:
            pencil: Discrete pencil the functions live on
            eps_grid: Pseudo-zero levels relative to sup|f|
            ztol: Zero tolerance relative to sup|f| (defaults to ZTOL_RELATIVE)
        """
        self.pencil = pencil
        self.eps_grid = tuple(sorted(float(e) for e in eps_grid))
        self.ztol = ZTOL_RELATIVE if ztol is None else float(ztol)
        self._resolvent = None

    @property
    def resolvent(self) -> Resolvent:
        if self._resolvent is None:
            self._resolvent = Resolvent(self.pencil)
        return self._resolvent

    def _ztol(self, f: PiecewiseLinear) -> float:
        return self.ztol * f.sup_norm()

    def report(self, f: PiecewiseLinear) -> OscillationReport:
        """Sign changes, pseudo-zeros on the eps grid and zero components of f."""
        ztol = self._ztol(f)
        sup = f.sup_norm()
        components = zero_components(f, ztol)
        return OscillationReport(
            sign_changes=sign_changes(f, ztol),
            pseudo_zeros={eps: pseudo_zeros(f, eps * sup) for eps in self.eps_grid} if sup else {},
            zero_components_interior=components.interior_count,
            epsilons_used=[eps * sup for eps in self.eps_grid],
            ztol=ztol,
            touches_left=components.touches_left,
            touches_right=components.touches_right,
            zeros=components.locations,
        )

    def eigenfunction_report(self, pairs: Sequence[EigenPair]) -> Dict:
        """
        Per-n counts, interlacing of consecutive zero sets and the no-vanishing check.

        Returns:
            Dictionary with one entry per eigenfunction and an overall 'passed' flag
        """
        logger.info("=== Oscillation of %d eigenfunctions ===", len(pairs))
        entries = []
        reports = [self.report(pair.vector) for pair in pairs]
        for pair, report in zip(pairs, reports):
            expected = pair.index - 1
            vanishes = vanishes_on_cell(pair.vector, report.ztol)
            entries.append({
                'index': pair.index,
                'lambda': pair.lam,
                'sign_changes': report.sign_changes,
                'zero_components_interior': report.zero_components_interior,
                'expected': expected,
                'counts_ok': (report.sign_changes == expected
                              and report.zero_components_interior == expected),
                'vanishes_on_cell': vanishes,
                'zeros': report.zeros,
            })

        interlacing = []
        for lower, upper in zip(reports, reports[1:]):
            interlacing.append(interlaces(lower.zeros, upper.zeros))
        for entry, verdict in zip(entries, interlacing):
            entry['interlaces_next'] = verdict

        passed = (all(e['counts_ok'] and not e['vanishes_on_cell'] for e in entries)
                  and all(interlacing))
        if not passed:
            logger.warning("Eigenfunction oscillation checks failed")
        return {'eigenfunctions': entries, 'interlacing': interlacing, 'passed': passed}

    def _random_dofs(self, rng: np.random.Generator) -> np.ndarray:
        while True:
            y = rng.standard_normal(self.pencil.n_dofs)
            if np.max(np.abs(y)) > 0.0 and np.any(np.abs(y) > self.ztol * np.max(np.abs(y))):
                return y

    def regularity_probe(self, trials: int = DEFAULT_TRIALS, seed: int = DEFAULT_SEED,
                         eps_grid: Optional[Sequence[float]] = None, power: int = 1) -> Dict:
        """
        Check pseudo_zeros(R^power y, eps) <= sign_changes(y) on seeded random y.

        Trial t draws standard-normal dofs from default_rng([seed, t]), so every
        trial is reproducible on its own.

        Args:
            trials: Number of random vectors
            seed: Base seed
            eps_grid: Levels relative to sup|R^power y|; defaults to the service grid
            power: 1 for R, 2 for the composition R^2

        Returns:
            Dictionary with check and violation counts and the worst violation
        """
        grid = self.eps_grid if eps_grid is None else tuple(sorted(eps_grid))
        logger.info("=== Regularity probe: %d trials, power %d ===", trials, power)
        violations = 0
        worst = None
        for trial in range(trials):
            rng = np.random.default_rng([seed, trial])
            y = self.pencil.extend(self._random_dofs(rng))
            u = self.resolvent.apply(y, power)
            changes = sign_changes(y, self._ztol(y))
            sup = u.sup_norm()
            for eps in grid:
                count = pseudo_zeros(u, eps * sup)
                excess = count - changes
                if excess > 0:
                    violations += 1
                    if worst is None or excess > worst['excess']:
                        worst = {'trial': trial, 'eps': eps, 'pseudo_zeros': count,
                                 'sign_changes': changes, 'excess': excess}
        if violations:
            logger.warning("Regularity probe found %d violations on %d cells",
                           violations, self.pencil.mesh.n_cells)
        return {
            'trials': trials,
            'seed': seed,
            'power': power,
            'eps_grid': list(grid),
            'checks': trials * len(grid),
            'violations': violations,
            'worst': worst,
            'passed': violations == 0,
        }

    def power_iteration(self, y0: Vector, n_target: int, steps: int,
                        lambda_n: float = 1.0) -> List[PiecewiseLinear]:
        """
        Iterates lambda_n^m R^m y0, each M_r-normalized.

        Args:
            y0: Start vector whose first nonzero eigen-coefficient has index n_target
            n_target: Index of the eigenfunction the iterates approach
            steps: Number of applications of R
            lambda_n: Eigenvalue lambda_{n_target} (positive; fixes the scaling sign)

        Returns:
            The iterates, starting with normalized y0
        """
        if steps < 0 or lambda_n <= 0.0:
            raise PreconditionError("Need steps >= 0 and lambda_n > 0",
                                    steps=steps, lambda_n=lambda_n)
        M = self.pencil.M_r
        u = self.pencil.restrict(y0) if isinstance(y0, PiecewiseLinear) else np.asarray(y0, float)
        iterates = []
        for m in range(steps + 1):
            if m:
                u = lambda_n * self.resolvent.solve(u)
            norm = math.sqrt(max(M.quadratic(u), 0.0))
            if norm < STAGNATION_NORM:
                raise ConvergenceError("Power iteration collapsed to zero",
                                       residual=norm, step=m, n_target=n_target)
            u = u / norm
            iterates.append(self.pencil.extend(u))
        logger.debug("Power iteration toward y_%d: %d steps", n_target, steps)
        return iterates

    def chebyshev_check(self, pairs: Sequence[EigenPair], alpha: Sequence[float],
                        n: int, N: int) -> Dict:
        """
        Sign-change lower bound and zero-component upper bound for sum_{k=n}^{N} alpha_k y_k.

        Args:
            pairs: Eigenpairs 1..len(pairs)
            alpha: N - n + 1 coefficients for k = n..N
            n: First index, alpha_n != 0 for the lower bound
            N: Last index, alpha_N != 0 for the upper bound

        Returns:
            Counts, bounds and pass flags
        """
        if not 1 <= n <= N <= len(pairs):
            raise PreconditionError(f"Need 1 <= n <= N <= {len(pairs)}", n=n, N=N)
        if len(alpha) != N - n + 1:
            raise PreconditionError("alpha must have one entry per index n..N",
                                    terms=len(alpha), n=n, N=N)
        if not any(alpha):
            raise PreconditionError("All coefficients are zero")

        y = combination(pairs, alpha, n)
        report = self.report(y)
        lifted = lift_combination(pairs, alpha, 1, n)
        lifted_changes = sign_changes(lifted, self._ztol(lifted))

        lower_ok = report.sign_changes >= n - 1
        upper_ok = report.zero_components_interior <= N - 1
        lifted_ok = lifted_changes <= N - 1
        return {
            'n': n,
            'N': N,
            'alpha': [float(a) for a in alpha],
            'sign_changes': report.sign_changes,
            'zero_components_interior': report.zero_components_interior,
            'lifted_sign_changes': lifted_changes,
            'lower_bound_ok': lower_ok,
            'upper_bound_ok': upper_ok,
            'lifted_ok': lifted_ok,
            'verdict': 'pass' if lower_ok and upper_ok and lifted_ok else 'fail',
        }

    def chebyshev_trials(self, pairs: Sequence[EigenPair], n_max: int,
                         trials: int = DEFAULT_TRIALS, seed: int = DEFAULT_SEED) -> Dict:
        """
        chebyshev_check on seeded standard-normal alpha for every 1 <= n <= N <= n_max.

        Returns:
            Per-(n, N) summaries, every trial record and an overall 'passed' flag
        """
        n_max = min(n_max, len(pairs))
        logger.info("=== Chebyshev checks up to N=%d, %d trials each ===", n_max, trials)
        summaries = []
        records = []
        for N in range(1, n_max + 1):
            for n in range(1, N + 1):
                failures = 0
                for trial in range(trials):
                    rng = np.random.default_rng([seed, n, N, trial])
                    alpha = rng.standard_normal(N - n + 1)
                    result = self.chebyshev_check(pairs, alpha, n, N)
                    result['trial'] = trial
                    records.append(result)
                    failures += result['verdict'] == 'fail'
                summaries.append({'n': n, 'N': N, 'trials': trials, 'failures': failures})
        passed = all(s['failures'] == 0 for s in summaries)
        return {'summaries': summaries, 'trials': records, 'passed': passed}
