"""Problem files: dotenv-style `section.key = value` lines validated by pydantic models."""
import io
import logging
import math
from typing import Dict, List, Optional, Tuple

from dotenv.parser import parse_stream
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config import Config
from services.assembly_service import BoundaryKind, BoundarySpec, SturmLiouvilleProblem
from services.coefficient_service import GeneralizedFunction
from utils.constants import (
    BC_KIND_NAMES, BISECTION_RTOL, DEFAULT_CHEBYSHEV_MAX, DEFAULT_EIGEN_COUNT, DEFAULT_EPS_GRID,
    DEFAULT_SEED, DEFAULT_TRIALS, ZTOL_RELATIVE
)
from utils.errors import ConfigError, PencilError
from utils.mesh_utils import Mesh, PiecewiseConstant, PiecewiseLinear

logger = logging.getLogger(__name__)


def _split_list(value, width: int) -> List[Tuple[float, ...]]:
    """'a:b, c:d' -> [(a, b), (c, d)] with `width` numbers per item."""
    if not isinstance(value, str):
        return value
    items = []
    for chunk in value.split(','):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(':')
        if len(parts) != width:
            raise ValueError(f"expected {width} ':'-separated numbers in '{chunk}'")
        items.append(tuple(float(x) for x in parts))
    return items


def _split_floats(value):
    if not isinstance(value, str):
        return value
    return [float(x) for x in value.split(',') if x.strip()]


class Section(BaseModel):
    model_config = ConfigDict(extra='forbid')


class MeshSection(Section):
    cells: int = Field(default_factory=lambda: Config.DEFAULT_CELLS, ge=1)


class PSection(Section):
    cells: Optional[List[Tuple[float, float, float]]] = None

    @field_validator('cells', mode='before')
    @classmethod
    def parse_cells(cls, value):
        return _split_list(value, 3)

    @field_validator('cells')
    @classmethod
    def check_tiling(cls, cells):
        if cells is None:
            return cells
        cells = sorted(cells)
        if not cells or cells[0][0] != 0.0 or cells[-1][1] != 1.0:
            raise ValueError("cells must tile [0,1] starting at 0 and ending at 1")
        for (_, b, _), (a, _, _) in zip(cells, cells[1:]):
            if a != b:
                raise ValueError(f"cells leave a gap or overlap at {b}")
        for a, b, value in cells:
            if not b > a:
                raise ValueError(f"empty cell {a}:{b}")
            if not value > 0.0:
                raise ValueError(f"p must be positive, got {value} on {a}:{b}")
        return cells


class CoefficientSection(Section):
    primitive: Optional[List[Tuple[float, float]]] = None
    atoms: List[Tuple[float, float]] = Field(default_factory=list)

    @field_validator('primitive', mode='before')
    @classmethod
    def parse_primitive(cls, value):
        return _split_list(value, 2)

    @field_validator('atoms', mode='before')
    @classmethod
    def parse_atoms(cls, value):
        return _split_list(value, 2)

    @field_validator('primitive')
    @classmethod
    def check_primitive(cls, points):
        if points is None:
            return points
        if len(points) < 2 or points[0] != (0.0, 0.0) or points[-1][0] != 1.0:
            raise ValueError("primitive must start with 0:0 and end at x = 1")
        for (x0, _), (x1, _) in zip(points, points[1:]):
            if not x1 > x0:
                raise ValueError("primitive nodes must be strictly increasing")
        return points

    @field_validator('atoms')
    @classmethod
    def check_atoms(cls, atoms):
        for x, _ in atoms:
            if not 0.0 <= x <= 1.0:
                raise ValueError(f"atom location {x} lies outside [0,1]")
        return atoms

    def build(self, default_slope: float) -> GeneralizedFunction:
        if self.primitive is None:
            primitive = PiecewiseLinear(Mesh([0.0, 1.0]), [0.0, default_slope])
        else:
            primitive = PiecewiseLinear(Mesh([x for x, _ in self.primitive]),
                                        [w for _, w in self.primitive])
        return GeneralizedFunction(primitive, tuple(self.atoms))


class BoundarySection(Section):
    kind: Optional[str] = None
    angles: Optional[List[float]] = None
    robin: Optional[float] = None

    @field_validator('angles', mode='before')
    @classmethod
    def parse_angles(cls, value):
        return _split_floats(value)

    @field_validator('kind')
    @classmethod
    def check_kind(cls, kind):
        if kind is not None and kind not in BC_KIND_NAMES:
            raise ValueError(f"unknown kind '{kind}', expected one of {sorted(BC_KIND_NAMES)}")
        return kind

    @field_validator('angles')
    @classmethod
    def check_angles(cls, angles):
        if angles is not None and len(angles) != 2:
            raise ValueError("angles needs exactly two entries")
        return angles

    @field_validator('robin')
    @classmethod
    def check_robin(cls, robin):
        if robin is not None and not robin > 0.0:
            raise ValueError("robin constant must be positive")
        return robin

    @model_validator(mode='after')
    def one_form(self):
        given = [name for name in ('kind', 'angles', 'robin') if getattr(self, name) is not None]
        if len(given) > 1:
            raise ValueError(f"give only one of bc.kind, bc.angles, bc.robin (got {given})")
        return self

    def build(self) -> BoundarySpec:
        if self.robin is not None:
            return BoundarySpec.robin_right(self.robin)
        if self.angles is not None:
            # U_kk = exp(i pi angle), with angle 0 taken exactly
            U = tuple(1.0 + 0j if a % 2.0 == 0.0 else complex(math.cos(math.pi * a),
                                                                  math.sin(math.pi * a))
                      for a in self.angles)
            return BoundarySpec.from_unitary(U)
        kind = self.kind or 'dirichlet_dirichlet'
        return BoundarySpec.from_kind(BoundaryKind.from_pattern(*BC_KIND_NAMES[kind]))


class SolverSection(Section):
    count: int = Field(default=DEFAULT_EIGEN_COUNT, ge=1)
    tol: float = Field(default=BISECTION_RTOL, gt=0.0)


class AnalysisSection(Section):
    eps_grid: List[float] = Field(default_factory=lambda: list(DEFAULT_EPS_GRID))
    ztol: float = Field(default=ZTOL_RELATIVE, gt=0.0)
    trials: int = Field(default=DEFAULT_TRIALS, ge=1)
    seed: int = DEFAULT_SEED
    chebyshev_max: int = Field(default=DEFAULT_CHEBYSHEV_MAX, ge=1)

    @field_validator('eps_grid', mode='before')
    @classmethod
    def parse_eps_grid(cls, value):
        return _split_floats(value)

    @field_validator('eps_grid')
    @classmethod
    def check_eps_grid(cls, grid):
        if not grid or any(not eps > 0.0 for eps in grid):
            raise ValueError("eps_grid needs at least one positive entry")
        return grid


class ProblemConfig(Section):
    """A parsed problem file."""

    mesh: MeshSection = Field(default_factory=MeshSection)
    p: PSection = Field(default_factory=PSection)
    q: CoefficientSection = Field(default_factory=CoefficientSection)
    r: CoefficientSection = Field(default_factory=CoefficientSection)
    bc: BoundarySection = Field(default_factory=BoundarySection)
    solver: SolverSection = Field(default_factory=SolverSection)
    analysis: AnalysisSection = Field(default_factory=AnalysisSection)

    def to_problem(self) -> SturmLiouvilleProblem:
        """Build the problem; q defaults to 0, r to Lebesgue measure, p to 1."""
        if self.p.cells is None:
            p = PiecewiseConstant(Mesh([0.0, 1.0]), [1.0])
        else:
            nodes = [0.0] + [b for _, b, _ in self.p.cells]
            p = PiecewiseConstant(Mesh(nodes), [value for _, _, value in self.p.cells])
        q = self.q.build(default_slope=0.0)
        r = self.r.build(default_slope=1.0)
        if not r.is_nonnegative():
            field = 'r.atoms' if any(c < 0.0 for _, c in r.atoms) else 'r.primitive'
            raise ConfigError("the weight must be a nonnegative measure", field=field)
        return SturmLiouvilleProblem(p, q, r, self.bc.build())


def _read_bindings(text: str) -> Tuple[Dict, Dict[str, int]]:
    tree = {}
    lines = {}
    for binding in parse_stream(io.StringIO(text)):
        line = binding.original.line
        if binding.error:
            raise ConfigError(f"cannot parse '{binding.original.string.strip()}'", line=line)
        if binding.key is None:
            continue
        if binding.value is None:
            raise ConfigError("missing value", line=line, field=binding.key)
        if binding.key in lines:
            raise ConfigError("duplicate key", line=line, field=binding.key)
        lines[binding.key] = line
        section, _, key = binding.key.partition('.')
        if not key:
            raise ConfigError("keys must have the form section.key", line=line, field=binding.key)
        tree.setdefault(section, {})[key] = binding.value
    return tree, lines


def parse_problem_config(text: str) -> ProblemConfig:
    """
    Parse and validate the text of a problem file.

    Args:
        text: File contents

    Returns:
        ProblemConfig

    Raises:
        ConfigError: with the line and key of the first offending entry
    """
    tree, lines = _read_bindings(text)
    try:
        config = ProblemConfig.model_validate(tree)
    except ValidationError as exc:
        first = exc.errors()[0]
        field = '.'.join(str(part) for part in first['loc'][:2])
        line = lines.get(field)
        if line is None:
            line = next((n for key, n in lines.items() if key.startswith(field + '.')), None)
        raise ConfigError(first['msg'], line=line, field=field) from exc

    try:
        config.to_problem()
    except ConfigError as exc:
        exc.line = lines.get(exc.field)
        exc.details['line'] = exc.line
        raise
    except PencilError as exc:
        raise ConfigError(str(exc)) from exc
    logger.debug("Parsed problem file with keys %s", sorted(lines))
    return config


def load_problem_config(path: str, seed: Optional[int] = None,
                        cells: Optional[int] = None) -> ProblemConfig:
    """Read a problem file and apply the command-line overrides."""
    try:
        with open(path, 'r') as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read problem file {path}: {exc.strerror}") from exc
    config = parse_problem_config(text)
    if seed is not None:
        config.analysis.seed = seed
    if cells is not None:
        if cells < 1:
            raise ConfigError("cells must be positive", field='mesh.cells')
        config.mesh.cells = cells
    return config
