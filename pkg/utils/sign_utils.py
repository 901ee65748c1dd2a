"""Sign changes, pseudo-zeros and zero components of piecewise-linear functions."""
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from utils.constants import ZTOL_RELATIVE
from utils.errors import PreconditionError
from utils.mesh_utils import PiecewiseLinear


@dataclass(frozen=True)
class PseudoZeroScan:
    """Result of the greedy scan: count, the chosen high points and the robustness margin."""

    count: int
    witnesses: List[float] = field(default_factory=list)
    dips: List[float] = field(default_factory=list)
    margin: float = math.inf


@dataclass(frozen=True)
class ZeroComponents:
    """Connected components of {|f| <= ztol}."""

    interior_count: int
    touches_left: bool
    touches_right: bool
    locations: List[float] = field(default_factory=list)


def default_ztol(f: PiecewiseLinear) -> float:
    return ZTOL_RELATIVE * f.sup_norm()


def sign_changes(f: PiecewiseLinear, ztol: Optional[float] = None) -> int:
    """
    Number of strict sign alternations of f on (0,1).

    Nodal values with |f| <= ztol are dropped. Endpoint values take part as
    limits of nearby interior points.

    Args:
        f: Nodal function
        ztol: Zero tolerance; defaults to ZTOL_RELATIVE * sup|f|

    Returns:
        Count of alternations of the surviving sign sequence
    """
    ztol = default_ztol(f) if ztol is None else ztol
    values = f.values[np.abs(f.values) > ztol]
    if values.size < 2:
        return 0
    signs = np.sign(values)
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def _segment_dips(left: float, right: float, eps: float) -> bool:
    """|f| < eps somewhere on a linear segment (endpoints included)."""
    return left * right < 0.0 or min(abs(left), abs(right)) < eps


def pseudo_zero_scan(f: PiecewiseLinear, eps: float) -> PseudoZeroScan:
    """
    Greedy left-to-right scan for the pseudo-zero count at level eps.

    Alternates between seeking a node with |f| > eps and seeking a point
    where |f| < eps. On a linear segment |f| is largest at an end, so high
    points can be taken at nodes; a dip exists on a segment iff f crosses
    zero strictly inside it or an end has |f| < eps.

    Each choice is the leftmost admissible one, so any admissible family of
    highs and dips can be shifted left, point by point, onto the greedy
    choices without losing a member. The greedy count is therefore maximal.

    Args:
        f: Nodal function
        eps: Absolute level, eps > 0

    Returns:
        PseudoZeroScan with the count, witnesses and margin
    """
    if not eps > 0.0:
        raise PreconditionError(f"eps must be positive, got {eps!r}", eps=eps)
    x, v = f.mesh.nodes.tolist(), f.values.tolist()

    highs = []
    dips = []
    slacks = []
    pending_dip = None
    for i in range(len(v)):
        if not highs:
            if abs(v[i]) > eps:
                highs.append(i)
            continue
        if pending_dip is None:
            if i > highs[-1] and _segment_dips(v[i - 1], v[i], eps):
                if v[i - 1] * v[i] < 0.0:
                    pending_dip = (x[i - 1] - v[i - 1] * (x[i] - x[i - 1]) / (v[i] - v[i - 1]),
                                   eps)
                else:
                    # the left end of this segment is the last high or failed the dip test
                    pending_dip = (x[i], eps - abs(v[i]))
                    continue
            else:
                continue
        if abs(v[i]) > eps:
            dips.append(pending_dip[0])
            slacks.append(pending_dip[1])
            highs.append(i)
            pending_dip = None

    count = max(0, len(highs) - 1)
    if count:
        slacks.extend(abs(v[i]) - eps for i in highs)
        margin = float(min(slacks))
    else:
        margin = math.inf
    return PseudoZeroScan(count, [float(x[i]) for i in highs], [float(d) for d in dips], margin)


def pseudo_zeros(f: PiecewiseLinear, eps: float) -> int:
    """Maximal n with highs x_1 < ... < x_{n+1}, |f(x_k)| > eps, and a dip |f| < eps between each pair."""
    return pseudo_zero_scan(f, eps).count


def pseudo_zeros_bruteforce(f: PiecewiseLinear, eps: float) -> int:
    """
    Exhaustive pseudo-zero count: longest chain of high nodes where every
    consecutive pair is separated by a dip, by dynamic programming over
    ordered pairs. Cubic in the number of nodes; meant for coarse meshes.
    """
    v = f.values
    highs = [i for i in range(v.size) if abs(v[i]) > eps]
    if not highs:
        return 0

    def separated(j: int, k: int) -> bool:
        for m in range(j + 1, k + 1):
            if v[m - 1] * v[m] < 0.0:
                return True
            if m < k and abs(v[m]) < eps:
                return True
        return False

    longest = {}
    for k in highs:
        longest[k] = 1 + max((longest[j] for j in highs if j < k and separated(j, k)), default=0)
    return max(longest.values()) - 1


def zero_components(f: PiecewiseLinear, ztol: Optional[float] = None) -> ZeroComponents:
    """
    Components of {|f| <= ztol} on the piecewise-linear graph.

    Runs of consecutive small nodes form one component each; a strict sign
    crossing between two large nodes is a component of its own. Components
    containing 0 or 1 are reported by the touch flags, not counted.

    Args:
        f: Nodal function
        ztol: Zero tolerance; defaults to ZTOL_RELATIVE * sup|f|

    Returns:
        ZeroComponents with interior locations (run midpoints or crossing points)
    """
    ztol = default_ztol(f) if ztol is None else ztol
    x, v = f.mesh.nodes, f.values
    small = np.abs(v) <= ztol
    last = v.size - 1

    locations = []
    touches_left = touches_right = False
    i = 0
    while i <= last:
        if small[i]:
            j = i
            while j < last and small[j + 1]:
                j += 1
            if i == 0:
                touches_left = True
            if j == last:
                touches_right = True
            if i > 0 and j < last:
                locations.append(float(0.5 * (x[i] + x[j])))
            i = j + 1
            continue
        if i < last and not small[i + 1] and v[i] * v[i + 1] < 0.0:
            locations.append(float(x[i] - v[i] * (x[i + 1] - x[i]) / (v[i + 1] - v[i])))
        i += 1

    return ZeroComponents(len(locations), touches_left, touches_right, locations)


def interlaces(zeros_n: Sequence[float], zeros_next: Sequence[float]) -> bool:
    """Exactly one zero of y_n between each pair of consecutive zeros of y_{n+1}."""
    inner = np.asarray(sorted(zeros_n))
    outer = sorted(zeros_next)
    for a, b in zip(outer, outer[1:]):
        if np.count_nonzero((inner > a) & (inner < b)) != 1:
            return False
    return True


def vanishes_on_cell(f: PiecewiseLinear, ztol: Optional[float] = None) -> bool:
    """True if two consecutive nodal values are both within ztol of zero."""
    ztol = default_ztol(f) if ztol is None else ztol
    small = np.abs(f.values) <= ztol
    return bool(np.any(small[:-1] & small[1:]))
