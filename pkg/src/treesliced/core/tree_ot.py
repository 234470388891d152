"""
Optimal transport on a spider: k lines (or rays) glued at a root.

The tree metric is |t - s| on one line and |t| + |s| across lines through the
root at coordinate 0. On such a tree W1 has a closed form: append to every line
a virtual point at the root carrying the negated line total, then each line is
an independent 1-D CDF integral. ``lp_tree_w1_oracle`` solves the same problem
as a linear program for validation.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.stats import wasserstein_distance

from .errors import DimensionMismatchError, InvalidMeasureError, MassMismatchError
from .geometry import DiscreteMeasure
from .projection import CoordinateMatrix, CoordinateRange
from .splitting import SplitWeights

logger = logging.getLogger(__name__)

MASS_TOL = 1e-10
ORACLE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ProjectedTreeMeasure:
    """
    Image of a measure on a tree: point j puts masses[i, j] at coords[i, j] on line i.

    Attributes:
        coords: (k, n) coordinates
        masses: (k, n) nonnegative masses, total 1
        range: Range flag inherited from the coordinates
        shared: All lines use the same coordinate row
    """

    coords: np.ndarray
    masses: np.ndarray
    range: CoordinateRange = CoordinateRange.REAL_LINE
    shared: bool = False

    def __post_init__(self) -> None:
        coords = np.asarray(self.coords, dtype=np.float64)
        masses = np.array(self.masses, dtype=np.float64)
        if coords.ndim != 2 or coords.shape != masses.shape:
            raise DimensionMismatchError(
                f"coords {coords.shape} and masses {masses.shape} must be matching (k, n) matrices"
            )
        if np.any(masses < 0):
            raise InvalidMeasureError("projected masses must be nonnegative")
        if abs(masses.sum() - 1.0) > MASS_TOL:
            raise MassMismatchError(f"projected measure has total mass {masses.sum()!r}, expected 1")
        masses.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "masses", masses)

    @property
    def num_lines(self) -> int:
        return self.coords.shape[0]

    @property
    def num_points(self) -> int:
        return self.coords.shape[1]

    def line(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        """(coordinates, masses) of line i."""
        return self.coords[i], self.masses[i]

    def line_totals(self) -> np.ndarray:
        return self.masses.sum(axis=1)


def build_projected_measure(
    m: DiscreteMeasure,
    coords: CoordinateMatrix,
    alpha: SplitWeights
) -> ProjectedTreeMeasure:
    """
    Place mass w_j * alpha[j, i] at coordinate t[i, j] on line i.

    Args:
        m: Source measure
        coords: Its coordinates on the tree
        alpha: Its split weights

    Returns:
        Projected tree measure

    Raises:
        DimensionMismatchError: If the shapes disagree
    """
    if coords.num_points != m.size or alpha.num_points != m.size or alpha.num_lines != coords.num_lines:
        raise DimensionMismatchError(
            f"{m.size} points, coordinates {coords.values.shape}, split weights {alpha.values.shape}"
        )
    masses = (m.weights[:, None] * alpha.values).T
    return ProjectedTreeMeasure(coords=coords.values, masses=masses, range=coords.range, shared=coords.shared)


def one_dim_w1(
    a_coords: np.ndarray,
    a_masses: np.ndarray,
    b_coords: np.ndarray,
    b_masses: np.ndarray
) -> float:
    """
    W1 between two 1-D measures of equal total mass, integral of |F_a - F_b|.

    Args:
        a_coords: Support of the first measure
        a_masses: Its masses
        b_coords: Support of the second measure
        b_masses: Its masses

    Returns:
        Transport cost (scaled by the common total mass)

    Raises:
        MassMismatchError: If the totals differ by more than 1e-10
    """
    a_masses = np.asarray(a_masses, dtype=np.float64)
    b_masses = np.asarray(b_masses, dtype=np.float64)
    total_a, total_b = a_masses.sum(), b_masses.sum()
    if abs(total_a - total_b) > MASS_TOL:
        raise MassMismatchError(f"1-D measures carry {total_a!r} and {total_b!r}")
    if total_a <= 0:
        return 0.0
    return float(total_a * wasserstein_distance(a_coords, b_coords, a_masses, b_masses))


def _rowwise_searchsorted(sorted_rows: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """searchsorted on every row of an (L, n) matrix of values in [0, 1]."""
    lines, size = sorted_rows.shape
    offsets = 2.0 * np.arange(lines)[:, None]
    flat = np.searchsorted((sorted_rows + offsets).ravel(), (queries + offsets).ravel())
    index = flat.reshape(queries.shape) - size * np.arange(lines)[:, None]
    return np.clip(index, 0, size - 1)


def quantile_w2_squared(
    mu_coords: np.ndarray,
    mu_weights: np.ndarray,
    nu_coords: np.ndarray,
    nu_weights: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Squared W2 on every line from the quantile functions, with its gradient.

    W2^2 = integral over u in [0, 1] of (F_mu^-1(u) - F_nu^-1(u))^2. The unit
    interval is cut at every jump of either CDF; on each piece both quantile
    functions are constant.

    Args:
        mu_coords: (L, n) coordinates of mu on L lines
        mu_weights: (n,) probability weights of mu
        nu_coords: (L, m) coordinates of nu
        nu_weights: (m,) probability weights of nu

    Returns:
        ((L,) squared distances, (L, n) gradient with respect to mu_coords)

    Raises:
        MassMismatchError: If the weights do not carry the same total
    """
    mu_coords = np.atleast_2d(np.asarray(mu_coords, dtype=np.float64))
    nu_coords = np.atleast_2d(np.asarray(nu_coords, dtype=np.float64))
    mu_weights = np.asarray(mu_weights, dtype=np.float64)
    nu_weights = np.asarray(nu_weights, dtype=np.float64)
    if abs(mu_weights.sum() - nu_weights.sum()) > MASS_TOL:
        raise MassMismatchError(f"1-D measures carry {mu_weights.sum()!r} and {nu_weights.sum()!r}")
    lines, size = mu_coords.shape

    mu_order = np.argsort(mu_coords, axis=1, kind="stable")
    nu_order = np.argsort(nu_coords, axis=1, kind="stable")
    mu_sorted = np.take_along_axis(mu_coords, mu_order, axis=1)
    nu_sorted = np.take_along_axis(nu_coords, nu_order, axis=1)
    mu_cdf = np.cumsum(mu_weights[mu_order], axis=1)
    nu_cdf = np.cumsum(nu_weights[nu_order], axis=1)

    upper = np.sort(np.hstack([mu_cdf, nu_cdf]), axis=1)
    lower = np.hstack([np.zeros((lines, 1)), upper[:, :-1]])
    widths = upper - lower
    middle = 0.5 * (lower + upper)
    mu_slot = _rowwise_searchsorted(mu_cdf, middle)
    nu_slot = _rowwise_searchsorted(nu_cdf, middle)
    gap = np.take_along_axis(mu_sorted, mu_slot, axis=1) - np.take_along_axis(nu_sorted, nu_slot, axis=1)

    values = np.sum(widths * gap * gap, axis=1)
    flat_slot = (mu_slot + size * np.arange(lines)[:, None]).ravel()
    grad_sorted = np.bincount(flat_slot, weights=(2.0 * widths * gap).ravel(), minlength=lines * size)
    grad = np.empty((lines, size))
    np.put_along_axis(grad, mu_order, grad_sorted.reshape(lines, size), axis=1)
    return values, grad


@dataclass
class SpiderState:
    """Sorted per-line layout of one spider evaluation, kept for the backward pass."""

    order: np.ndarray
    sorted_coords: np.ndarray
    signed_masses: np.ndarray
    prefix: np.ndarray
    gaps: np.ndarray
    per_line: np.ndarray
    num_mu: int
    num_nu: int

    @property
    def value(self) -> float:
        return float(self.per_line.sum())


def _virtual_root_mass(line_totals: np.ndarray) -> np.ndarray:
    return -line_totals


def _prefix_difference(cum_mu: np.ndarray, cum_nu: np.ndarray) -> np.ndarray:
    return cum_mu - cum_nu


def _spider_forward(
    mu_coords: np.ndarray,
    mu_masses: np.ndarray,
    nu_coords: np.ndarray,
    nu_masses: np.ndarray,
    shared: bool = False
) -> SpiderState:
    """
    Closed-form spider W1 on raw (k, n) arrays.

    Columns are laid out as [mu entries, nu entries, virtual root]. mu and nu
    prefix sums are accumulated separately so that identical inputs cancel
    exactly.
    """
    k, num_mu = mu_coords.shape
    num_nu = nu_coords.shape[1]
    root_col = np.zeros((k, 1))
    coords = np.hstack([mu_coords, nu_coords, root_col])
    mu_part = np.hstack([
        mu_masses, np.zeros((k, num_nu)), _virtual_root_mass(mu_masses.sum(axis=1, keepdims=True))
    ])
    nu_part = np.hstack([
        np.zeros((k, num_mu)), nu_masses, _virtual_root_mass(nu_masses.sum(axis=1, keepdims=True))
    ])

    if shared:
        # sort the common row once and reuse the permutation on every line
        perm = np.argsort(coords[0], kind="stable")
        order = np.broadcast_to(perm, coords.shape)
        sorted_coords = coords[:, perm]
        mu_sorted = mu_part[:, perm]
        nu_sorted = nu_part[:, perm]
    else:
        order = np.argsort(coords, axis=1, kind="stable")
        sorted_coords = np.take_along_axis(coords, order, axis=1)
        mu_sorted = np.take_along_axis(mu_part, order, axis=1)
        nu_sorted = np.take_along_axis(nu_part, order, axis=1)

    prefix = _prefix_difference(np.cumsum(mu_sorted, axis=1), np.cumsum(nu_sorted, axis=1))
    gaps = np.diff(sorted_coords, axis=1)
    per_line = np.sum(np.abs(prefix[:, :-1]) * gaps, axis=1)
    return SpiderState(
        order=order,
        sorted_coords=sorted_coords,
        signed_masses=mu_sorted - nu_sorted,
        prefix=prefix,
        gaps=gaps,
        per_line=per_line,
        num_mu=num_mu,
        num_nu=num_nu,
    )


def _spider_backward(state: SpiderState) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Subgradients of the spider cost.

    Mass gradients use sign(0) = 0 on the prefix sums. A coordinate that
    shares its value with other entries gets the average of the one-sided
    derivatives of leaving its tie group to the left and to the right.

    Returns:
        (d/d mu_coords, d/d mu_masses, d/d nu_coords, d/d nu_masses), each (k, n)
    """
    k, size = state.sorted_coords.shape
    positions = np.arange(size)
    rank = np.empty((k, size), dtype=np.intp)
    np.put_along_axis(rank, np.ascontiguousarray(state.order), np.broadcast_to(positions, (k, size)), axis=1)

    # suffix[q] = sum_{p >= q} sign(D_p) * gap_p
    contrib = np.sign(state.prefix[:, :-1]) * state.gaps
    suffix = np.zeros((k, size))
    suffix[:, :-1] = np.cumsum(contrib[:, ::-1], axis=1)[:, ::-1]
    suffix_orig = np.take_along_axis(suffix, rank, axis=1)
    mass_grad = suffix_orig[:, :-1] - suffix_orig[:, -1:]

    coords = state.sorted_coords
    new_group = np.ones((k, size), dtype=bool)
    new_group[:, 1:] = coords[:, 1:] != coords[:, :-1]
    group_end = np.ones((k, size), dtype=bool)
    group_end[:, :-1] = new_group[:, 1:]
    start = np.maximum.accumulate(np.where(new_group, positions, 0), axis=1)
    end = np.minimum.accumulate(np.where(group_end, positions, size - 1)[:, ::-1], axis=1)[:, ::-1]

    padded = np.hstack([np.zeros((k, 1)), state.prefix])
    before = np.take_along_axis(padded, start, axis=1)
    after = np.take_along_axis(state.prefix, end, axis=1)
    mass = state.signed_masses
    coord_sorted = 0.5 * (
        (np.abs(before) - np.abs(before + mass)) + (np.abs(after - mass) - np.abs(after))
    )
    coord_grad = np.take_along_axis(coord_sorted, rank, axis=1)

    n_mu = state.num_mu
    return (
        coord_grad[:, :n_mu],
        mass_grad[:, :n_mu],
        coord_grad[:, n_mu:-1],
        -mass_grad[:, n_mu:],
    )


def _check_pair(mu_p: ProjectedTreeMeasure, nu_p: ProjectedTreeMeasure) -> None:
    if mu_p.num_lines != nu_p.num_lines:
        raise DimensionMismatchError(f"trees have {mu_p.num_lines} and {nu_p.num_lines} lines")
    if mu_p.range != nu_p.range:
        raise DimensionMismatchError(f"range flags differ: {mu_p.range.value} vs {nu_p.range.value}")
    total_mu, total_nu = mu_p.masses.sum(), nu_p.masses.sum()
    if abs(total_mu - total_nu) > MASS_TOL:
        raise MassMismatchError(f"projected measures carry {total_mu!r} and {total_nu!r}")


def spider_w1(mu_p: ProjectedTreeMeasure, nu_p: ProjectedTreeMeasure) -> float:
    """
    Closed-form W1 between two measures on the same spider.

    Args:
        mu_p: First projected measure
        nu_p: Second projected measure on the same tree

    Returns:
        Transport cost under the tree metric

    Raises:
        DimensionMismatchError: If the line counts or range flags differ
        MassMismatchError: If the totals differ
    """
    _check_pair(mu_p, nu_p)
    shared = mu_p.shared and nu_p.shared
    state = _spider_forward(mu_p.coords, mu_p.masses, nu_p.coords, nu_p.masses, shared)
    return state.value


def _tree_cost_matrix(
    a_lines: np.ndarray,
    a_coords: np.ndarray,
    b_lines: np.ndarray,
    b_coords: np.ndarray
) -> np.ndarray:
    same_line = a_lines[:, None] == b_lines[None, :]
    along = np.abs(a_coords[:, None] - b_coords[None, :])
    through_root = np.abs(a_coords)[:, None] + np.abs(b_coords)[None, :]
    return np.where(same_line, along, through_root)


def lp_tree_w1_oracle(mu_p: ProjectedTreeMeasure, nu_p: ProjectedTreeMeasure) -> float:
    """
    Exact tree W1 by linear programming over the full pairwise cost matrix.

    Meant for small instances (a few dozen support points).

    Args:
        mu_p: First projected measure
        nu_p: Second projected measure

    Returns:
        Optimal transport cost

    Raises:
        MassMismatchError: If the mass balance is infeasible
    """
    _check_pair(mu_p, nu_p)
    k = mu_p.num_lines
    a_lines = np.repeat(np.arange(k), mu_p.num_points)
    b_lines = np.repeat(np.arange(k), nu_p.num_points)
    a_coords, a_masses = mu_p.coords.ravel(), mu_p.masses.ravel()
    b_coords, b_masses = nu_p.coords.ravel(), nu_p.masses.ravel()

    keep_a, keep_b = a_masses > 0, b_masses > 0
    if not keep_a.any() or not keep_b.any():
        return 0.0
    cost = _tree_cost_matrix(a_lines[keep_a], a_coords[keep_a], b_lines[keep_b], b_coords[keep_b])
    supply, demand = a_masses[keep_a], b_masses[keep_b]
    demand = demand * (supply.sum() / demand.sum())
    rows, cols = cost.shape

    a_eq = sparse.vstack([
        sparse.kron(sparse.identity(rows), np.ones((1, cols))),
        sparse.kron(np.ones((1, rows)), sparse.identity(cols)),
    ]).tocsr()
    b_eq = np.concatenate([supply, demand])
    result = linprog(
        cost.ravel(),
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=(0, None),
        method="highs-ds",
        options={"primal_feasibility_tolerance": ORACLE_TOL, "dual_feasibility_tolerance": ORACLE_TOL},
    )
    if not result.success:
        raise MassMismatchError(f"tree transport LP failed: {result.message}")
    return float(result.fun)


def sample_tree_instance(
    rng: np.random.Generator,
    num_lines: int,
    num_points: int,
    coord_range: CoordinateRange = CoordinateRange.REAL_LINE,
    shared: bool = False
) -> Tuple[ProjectedTreeMeasure, ProjectedTreeMeasure]:
    """
    Random pair of projected measures on one spider, for oracle comparisons.

    Masses come from a flat Dirichlet with roughly a quarter of the entries
    zeroed; ray coordinates are absolute values of Gaussians.
    """

    def one_measure() -> ProjectedTreeMeasure:
        if shared:
            coords = np.broadcast_to(rng.normal(size=num_points), (num_lines, num_points)).copy()
        else:
            coords = rng.normal(size=(num_lines, num_points))
        if coord_range != CoordinateRange.REAL_LINE:
            coords = np.abs(coords)
        masses = rng.dirichlet(np.ones(num_lines * num_points))
        masses[rng.random(masses.shape) < 0.25] = 0.0
        if masses.sum() == 0:
            masses[0] = 1.0
        masses = (masses / masses.sum()).reshape(num_lines, num_points)
        return ProjectedTreeMeasure(coords=coords, masses=masses, range=coord_range, shared=shared)

    return one_measure(), one_measure()
