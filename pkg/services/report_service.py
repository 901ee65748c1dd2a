"""Service that runs the analysis commands for one problem and writes their reports."""
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from services.assembly_service import BoundaryKind, DiscretePencil, assemble
from services.coefficient_service import validate_weight
from services.eigen_service import EigenPair, EigenService
from services.oscillation_service import OscillationService, predicted_steps
from services.result_store import ResultStore
from services.transform_service import TransformResult, TransformService
from utils.constants import (
    IDENTITY_RESIDUAL_TOL, POWER_ITERATION_TARGET, RESIDUAL_TOL, SPECTRAL_INVARIANCE_RTOL
)
from utils.errors import PencilError, WeightError
from utils.problem_config import ProblemConfig

logger = logging.getLogger(__name__)

INVARIANCE_COUNT = 5
POWER_ITERATION_TOL = 1e-6  # M_r-norm distance of the last iterate from y_1

RESOLVENT_KINDS = (
    BoundaryKind.DIRICHLET_DIRICHLET,
    BoundaryKind.NEUMANN_DIRICHLET,
    BoundaryKind.ROBIN_RIGHT,
)


class ReportService:
    """Runs solve / transform / oscillate / chebyshev / regularity on one parsed problem."""

    COMMANDS = ('solve', 'transform', 'oscillate', 'chebyshev', 'regularity')

    def __init__(self, config: ProblemConfig, store: ResultStore):
        """
        Initialize the report service.

        Args:
            config: Parsed problem file (with command-line overrides applied)
            store: Destination of the report files
        """
        self.config = config
        self.store = store
        self.problem = config.to_problem()
        self._pencil = None
        self._pairs = []
        self._transform = None

    @property
    def pencil(self) -> DiscretePencil:
        if self._pencil is None:
            mesh = self.problem.mesh(self.config.mesh.cells)
            if not validate_weight(self.problem.r, mesh):
                raise WeightError("The weight carries no measure on some mesh cells",
                                  cells=mesh.n_cells)
            self._pencil = assemble(self.problem.p, self.problem.q, self.problem.r,
                                    self.problem.bc, mesh)
        return self._pencil

    def eigenpairs(self, count: int) -> List[EigenPair]:
        """The lowest `count` eigenpairs, computed once and reused."""
        count = min(count, self.pencil.n_dofs)
        if len(self._pairs) < count:
            service = EigenService(self.pencil, tol=self.config.solver.tol)
            self._pairs = service.eigenpairs(count)
        return self._pairs[:count]

    def transform_result(self) -> TransformResult:
        if self._transform is None:
            self._transform = TransformService(self.problem, self.config.mesh.cells).run()
        return self._transform

    def _oscillation_service(self, pencil: DiscretePencil) -> OscillationService:
        analysis = self.config.analysis
        return OscillationService(pencil, analysis.eps_grid, analysis.ztol)

    def run(self, command: str) -> bool:
        """
        Run one command, or all of them in sequence.

        Args:
            command: One of COMMANDS or 'all'

        Returns:
            True if every asserted property passed
        """
        commands = self.COMMANDS if command == 'all' else (command,)
        for name in commands:
            if name not in self.COMMANDS:
                raise ValueError(f"Unknown command '{name}'")

        self.store.save_status('processing', command)
        try:
            verdicts = {name: getattr(self, name)() for name in commands}
        except PencilError as e:
            self.store.save_status('failed', command, error=e.to_dict())
            raise
        passed = all(verdicts.values())
        self.store.save_status('completed', command, data={'verdicts': verdicts, 'passed': passed})
        return passed

    def solve(self) -> bool:
        """Write eigenvalues.csv and eigenfunctions.csv."""
        logger.info("=== Solve ===")
        pairs = self.eigenpairs(self.config.solver.count)
        self.store.write_csv('eigenvalues.csv', ['index', 'lambda'],
                             [(pair.index, pair.lam) for pair in pairs])

        mesh = self.pencil.mesh
        header = ['node', 'x'] + [f'y{pair.index}' for pair in pairs]
        columns = np.column_stack([pair.vector.values for pair in pairs])
        rows = ([i, float(x)] + columns[i].tolist() for i, x in enumerate(mesh.nodes))
        self.store.write_csv('eigenfunctions.csv', header, rows)

        for pair in pairs:
            logger.info("lambda_%d = %.12g (residual %.2e)", pair.index, pair.lam, pair.residual)
        return all(pair.residual <= RESIDUAL_TOL for pair in pairs)

    def transform(self) -> bool:
        """Write transform.json: xi, constants, tau nodes, identity residual and invariance deltas."""
        logger.info("=== Transform ===")
        result = self.transform_result()
        count = min(INVARIANCE_COUNT, self.config.solver.count,
                    result.pencil.n_dofs, result.transformed_pencil.n_dofs)
        invariance = TransformService.spectral_invariance(result, count)

        robin_ok = result.robin_constant is None or result.robin_constant > 0.0
        checks = {
            'spectral_invariance': invariance['max_relative_delta'] <= SPECTRAL_INVARIANCE_RTOL,
            'identity_residual': result.identity_residual <= IDENTITY_RESIDUAL_TOL,
            'robin_constant_positive': robin_ok,
        }
        payload = {
            'kind': result.problem.bc.kind.value,
            'reflected': result.reflected,
            'xi': result.xi,
            'C_init': result.pair.C_init,
            'robin_constant': result.robin_constant,
            'dirichlet_form_constant': result.dirichlet_constant,
            'transformed_bc': result.transformed.bc.describe(),
            'identity_residual': result.identity_residual,
            'min_y1': result.pair.min_y1,
            'ill_conditioned': result.pair.ill_conditioned,
            'tau_nodes': result.tau.tau.values.tolist(),
            'spectral_invariance': invariance,
            'spectral_invariance_max_rel': invariance['max_relative_delta'],
            'checks': checks,
            'passed': all(checks.values()),
        }
        self.store.write_json('transform.json', payload)
        logger.info("Spectral invariance max relative delta: %.3e",
                    invariance['max_relative_delta'])
        return payload['passed']

    def oscillate(self) -> bool:
        """Write oscillation.json: per-n counts and interlacing verdicts."""
        logger.info("=== Oscillate ===")
        pairs = self.eigenpairs(self.config.solver.count)
        service = self._oscillation_service(self.pencil)
        payload = service.eigenfunction_report(pairs)
        payload['reports'] = [service.report(pair.vector).to_dict() for pair in pairs]
        self.store.write_json('oscillation.json', payload)
        return payload['passed']

    def chebyshev(self) -> bool:
        """Write chebyshev.json: per-trial alpha, counts and verdicts."""
        logger.info("=== Chebyshev ===")
        analysis = self.config.analysis
        pairs = self.eigenpairs(max(analysis.chebyshev_max, self.config.solver.count))
        payload = self._oscillation_service(self.pencil).chebyshev_trials(
            pairs, analysis.chebyshev_max, analysis.trials, analysis.seed
        )
        payload['seed'] = analysis.seed
        self.store.write_json('chebyshev.json', payload)
        return payload['passed']

    def resolvent_pencil(self) -> Tuple[DiscretePencil, str]:
        """
        The pencil the resolvent is probed on: the problem itself when it is
        potential-free with a positive A(0), otherwise the transformed pencil.
        """
        if self.problem.potential_free and self.problem.bc.kind in RESOLVENT_KINDS:
            return self.pencil, 'original'
        return self.transform_result().transformed_pencil, 'transformed'

    def power_iteration_check(self, service: OscillationService) -> Dict:
        """lambda_1^m R^m (y_1 + y_2) against y_1 after the predicted number of steps."""
        pairs = EigenService(service.pencil).eigenpairs(2)
        first, second = pairs
        steps = predicted_steps(first.lam, second.lam, POWER_ITERATION_TARGET)
        y0 = first.vector.values + second.vector.values
        iterates = service.power_iteration(y0, 1, steps, first.lam)

        M = service.pencil.M_r
        final = service.pencil.restrict(iterates[-1])
        target = service.pencil.restrict(first.vector)
        error = min(np.sqrt(M.quadratic(final - target)), np.sqrt(M.quadratic(final + target)))
        return {
            'lambda_1': first.lam,
            'lambda_2': second.lam,
            'predicted_steps': steps,
            'error': float(error),
            'passed': bool(error <= POWER_ITERATION_TOL),
        }

    def regularity(self) -> bool:
        """Write regularity.json: probes of R and R^2 plus the power-iteration check."""
        logger.info("=== Regularity ===")
        analysis = self.config.analysis
        pencil, source = self.resolvent_pencil()
        service = self._oscillation_service(pencil)
        probes = [service.regularity_probe(analysis.trials, analysis.seed, power=power)
                  for power in (1, 2)]
        power = self.power_iteration_check(service)
        payload = {
            'pencil': source,
            'probes': probes,
            'power_iteration': power,
            'passed': all(p['passed'] for p in probes) and power['passed'],
        }
        self.store.write_json('regularity.json', payload)
        return payload['passed']


def write_error(store: ResultStore, error: PencilError, command: Optional[str] = None) -> Dict:
    """Write error.json and mark the run failed."""
    payload = error.to_dict()
    store.write_json('error.json', payload)
    store.save_status('failed', command, error=payload)
    return payload
