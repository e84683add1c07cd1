"""
Binary regression trees, cutpoint bookkeeping, BIRTH/DEATH proposals and the
BIRTH Metropolis ratio.

Routing rule everywhere: ``x[j] < cut`` goes left. All ratio arithmetic is done in
log space.
"""
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..config.constants import (
    BIRTH_PROBABILITY,
    DEFAULT_BETA,
    DEFAULT_CUTPOINTS,
    DEFAULT_GAMMA,
    NODES_RATIO_CLOSED_FORM,
    NODES_RATIO_EXACT,
    TYPE_BINARY,
)

NodeRows = Mapping[int, np.ndarray]


@dataclass(slots=True)
class Node:
    """One tree node; terminal when it has no children."""

    depth: int
    mu: float = 0.0
    var: int = -1
    cut: float = math.nan
    cut_index: int = -1
    left: int = -1
    right: int = -1
    parent: int = -1
    birth_ratio: Optional[float] = None

    @property
    def is_terminal(self) -> bool:
        return self.left < 0


class Tree:
    """Proper binary tree stored as an arena of nodes keyed by id."""

    def __init__(self, n_predictors: int, mu: float = 0.0):
        if n_predictors < 1:
            raise ValueError(f"A tree needs at least one predictor, got {n_predictors}")
        self.n_predictors = n_predictors
        self.nodes: Dict[int, Node] = {0: Node(depth=0, mu=mu)}
        self.root = 0
        self._next_id = 1
        self._frozen = False

    # -- structure -----------------------------------------------------------------

    def terminal_ids(self) -> List[int]:
        return sorted(i for i, node in self.nodes.items() if node.is_terminal)

    def internal_ids(self) -> List[int]:
        return sorted(i for i, node in self.nodes.items() if not node.is_terminal)

    def second_generation_ids(self) -> List[int]:
        """Internal nodes whose two children are both terminal."""
        return [
            i
            for i in self.internal_ids()
            if self.nodes[self.nodes[i].left].is_terminal
            and self.nodes[self.nodes[i].right].is_terminal
        ]

    @property
    def n_terminal(self) -> int:
        return sum(1 for node in self.nodes.values() if node.is_terminal)

    @property
    def n_internal(self) -> int:
        return len(self.nodes) - self.n_terminal

    @property
    def frozen(self) -> bool:
        return self._frozen

    def _check_mutable(self) -> None:
        if self._frozen:
            raise RuntimeError("Tree is frozen; snapshots are read-only")

    def grow(
        self,
        node_id: int,
        var: int,
        cut: float,
        cut_index: int = -1,
        birth_ratio: Optional[float] = None,
        mu_left: float = 0.0,
        mu_right: float = 0.0,
    ) -> Tuple[int, int]:
        """Turn terminal ``node_id`` into a split; returns the new child ids."""
        self._check_mutable()
        node = self.nodes[node_id]
        if not node.is_terminal:
            raise ValueError(f"Node {node_id} is not terminal")
        if not 0 <= var < self.n_predictors:
            raise ValueError(f"Predictor index {var} out of range for p={self.n_predictors}")
        if birth_ratio is not None and not 0.0 < birth_ratio <= 1.0:
            raise ValueError(f"birth_ratio must lie in (0, 1], got {birth_ratio}")
        left, right = self._next_id, self._next_id + 1
        self._next_id += 2
        self.nodes[left] = Node(depth=node.depth + 1, mu=mu_left, parent=node_id)
        self.nodes[right] = Node(depth=node.depth + 1, mu=mu_right, parent=node_id)
        node.var, node.cut, node.cut_index = var, float(cut), cut_index
        node.left, node.right = left, right
        node.birth_ratio = birth_ratio
        node.mu = 0.0
        return left, right

    def prune(self, node_id: int, mu: float = 0.0) -> None:
        """Collapse a second-generation internal node back into a terminal node."""
        self._check_mutable()
        node = self.nodes[node_id]
        if node.is_terminal:
            raise ValueError(f"Node {node_id} is already terminal")
        left, right = self.nodes[node.left], self.nodes[node.right]
        if not (left.is_terminal and right.is_terminal):
            raise ValueError(f"Node {node_id} is not a second-generation internal node")
        del self.nodes[node.left]
        del self.nodes[node.right]
        node.var, node.cut, node.cut_index = -1, math.nan, -1
        node.left = node.right = -1
        node.birth_ratio = None
        node.mu = mu

    def copy(self) -> "Tree":
        """Mutable deep copy."""
        clone = Tree.__new__(Tree)
        clone.n_predictors = self.n_predictors
        clone.nodes = {
            i: Node(n.depth, n.mu, n.var, n.cut, n.cut_index, n.left, n.right, n.parent, n.birth_ratio)
            for i, n in self.nodes.items()
        }
        clone.root = self.root
        clone._next_id = self._next_id
        clone._frozen = False
        return clone

    def snapshot(self) -> "Tree":
        """Read-only copy for storing in a posterior draw."""
        clone = self.copy()
        clone._frozen = True
        return clone

    def check_structure(self) -> List[str]:
        """Return a list of violated structural invariants (empty when valid)."""
        problems = []
        root = self.nodes.get(self.root)
        if root is None or root.depth != 0 or root.parent != -1:
            problems.append("root missing or malformed")
        for i, node in self.nodes.items():
            if (node.left < 0) != (node.right < 0):
                problems.append(f"node {i} has exactly one child")
            if not node.is_terminal:
                for child in (node.left, node.right):
                    if child not in self.nodes:
                        problems.append(f"node {i} points at missing child {child}")
                    elif self.nodes[child].depth != node.depth + 1 or self.nodes[child].parent != i:
                        problems.append(f"child {child} of node {i} has wrong depth or parent")
                if node.birth_ratio is not None and not 0.0 < node.birth_ratio <= 1.0:
                    problems.append(f"node {i} has birth_ratio {node.birth_ratio}")
        b = self.n_terminal
        if b != self.n_internal + 1:
            problems.append(f"{b} terminal nodes but {self.n_internal} internal nodes")
        if b >= 2:
            w2 = len(self.second_generation_ids())
            if not 1 <= w2 <= b // 2:
                problems.append(f"w2={w2} outside [1, {b // 2}]")
        return problems

    # -- evaluation ----------------------------------------------------------------

    def evaluate(self, x: Sequence[float]) -> float:
        """Leaf value reached by a single predictor vector."""
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != self.n_predictors:
            raise ValueError(f"Expected {self.n_predictors} predictor values, got {x.shape[0]}")
        node = self.nodes[self.root]
        while not node.is_terminal:
            node = self.nodes[node.left if x[node.var] < node.cut else node.right]
        return node.mu

    def node_rows(self, X: np.ndarray, rows: Optional[np.ndarray] = None) -> Dict[int, np.ndarray]:
        """Row indices reaching every node (internal and terminal)."""
        X = _as_matrix(X, self.n_predictors)
        if rows is None:
            rows = np.arange(X.shape[0])
        out = {self.root: rows}
        stack = [self.root]
        while stack:
            node_id = stack.pop()
            node = self.nodes[node_id]
            if node.is_terminal:
                continue
            here = out[node_id]
            go_left = X[here, node.var] < node.cut
            out[node.left] = here[go_left]
            out[node.right] = here[~go_left]
            stack.extend((node.left, node.right))
        return out

    def leaf_rows(self, X: np.ndarray) -> Dict[int, np.ndarray]:
        """Row indices reaching each terminal node."""
        return {i: r for i, r in self.node_rows(X).items() if self.nodes[i].is_terminal}

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Leaf values for every row of ``X``."""
        X = _as_matrix(X, self.n_predictors)
        out = np.empty(X.shape[0])
        for leaf, rows in self.leaf_rows(X).items():
            out[rows] = self.nodes[leaf].mu
        return out

    # -- bookkeeping ---------------------------------------------------------------

    def split_counts(self) -> np.ndarray:
        """Number of splitting rules using each predictor."""
        counts = np.zeros(self.n_predictors, dtype=np.int64)
        for node in self.nodes.values():
            if not node.is_terminal:
                counts[node.var] += 1
        return counts

    def accept_sums(self) -> np.ndarray:
        """Sum of cached BIRTH acceptance ratios per predictor."""
        sums = np.zeros(self.n_predictors)
        for node in self.nodes.values():
            if not node.is_terminal and node.birth_ratio is not None:
                sums[node.var] += node.birth_ratio
        return sums


def _as_matrix(X: np.ndarray, p: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != p:
        raise ValueError(f"Expected a matrix with {p} columns, got shape {X.shape}")
    return X


def evaluate(tree: Tree, x: Sequence[float]) -> float:
    """Leaf value of ``tree`` at predictor vector ``x``."""
    return tree.evaluate(x)


@dataclass(frozen=True, eq=False)
class CutpointGrid:
    """Candidate cutpoints per predictor plus the training bin matrix."""

    cutpoints: Tuple[np.ndarray, ...]
    types: Tuple[str, ...]
    bins: np.ndarray

    @classmethod
    def from_data(
        cls, X: np.ndarray, types: Sequence[str], n_cuts: int = DEFAULT_CUTPOINTS
    ) -> "CutpointGrid":
        """
        Build the grid from training data.

        Continuous predictors get ``n_cuts`` evenly spaced cutpoints strictly inside the
        observed range; binary predictors get the midpoint of their two levels. Constant
        columns get none.
        """
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(types):
            raise ValueError(f"Grid needs one type tag per column, got {len(types)} for {X.shape}")
        cutpoints = []
        for j, tag in enumerate(types):
            lo, hi = float(X[:, j].min()), float(X[:, j].max())
            if hi <= lo:
                cuts = np.empty(0)
            elif tag == TYPE_BINARY:
                cuts = np.array([(lo + hi) / 2.0])
            else:
                cuts = lo + (hi - lo) * np.arange(1, n_cuts + 1) / (n_cuts + 1)
                cuts = np.unique(cuts[(cuts > lo) & (cuts < hi)])
            cutpoints.append(cuts)
        grid = cls(tuple(cutpoints), tuple(types), np.empty((0, 0), dtype=np.int32))
        object.__setattr__(grid, "bins", grid.bin_matrix(X))
        return grid

    @property
    def n_predictors(self) -> int:
        return len(self.cutpoints)

    def bin_matrix(self, X: np.ndarray) -> np.ndarray:
        """Number of cutpoints at or below each value; ``x < cut[k]`` iff bin <= k."""
        X = np.asarray(X, dtype=float)
        bins = np.empty(X.shape, dtype=np.int32)
        for j, cuts in enumerate(self.cutpoints):
            bins[:, j] = np.searchsorted(cuts, X[:, j], side="right")
        return bins

    def valid_counts(self, rows: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Lowest valid cut index and n_{j,adj} for every predictor at a node."""
        if rows.size == 0:
            zeros = np.zeros(self.n_predictors, dtype=np.int64)
            return zeros, zeros
        sub = self.bins[rows]
        lo = sub.min(axis=0).astype(np.int64)
        return lo, sub.max(axis=0).astype(np.int64) - lo


@dataclass(frozen=True)
class TreePrior:
    """Depth-dependent split prior and conjugate normal leaf prior."""

    gamma: float = DEFAULT_GAMMA
    beta: float = DEFAULT_BETA
    tau: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.beta < 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")

    def split_prob(self, depth: int) -> float:
        return self.gamma * (1.0 + depth) ** (-self.beta)


def growable_leaves(
    tree: Tree, node_data_map: NodeRows, grid: CutpointGrid
) -> Dict[int, Tuple[np.ndarray, np.ndarray]]:
    """Terminal nodes with at least one valid split, mapped to (lowest cut index, n_adj)."""
    out = {}
    for leaf in tree.terminal_ids():
        rows = node_data_map[leaf]
        if rows.size < 2:
            continue
        lo, n_adj = grid.valid_counts(rows)
        if np.any(n_adj > 0):
            out[leaf] = (lo, n_adj)
    return out


def _rows_growable(rows: np.ndarray, grid: CutpointGrid) -> bool:
    return rows.size >= 2 and bool(np.any(grid.valid_counts(rows)[1] > 0))


@dataclass(frozen=True, eq=False)
class BirthProposal:
    """A candidate split of terminal node ``node``."""

    node: int
    var: int
    cut: float
    cut_index: int
    p_adj: int
    n_adj: int
    n_growable: int
    w2_after: int
    move_probs: Tuple[float, float]
    left_rows: np.ndarray
    right_rows: np.ndarray


@dataclass(frozen=True)
class DeathProposal:
    """A candidate prune of a second-generation internal node."""

    node: int
    n_second_gen: int


def propose_birth(
    tree: Tree,
    node_data_map: NodeRows,
    grid: CutpointGrid,
    rng: np.random.Generator,
    split_probs: Optional[np.ndarray] = None,
    growable: Optional[Mapping[int, Tuple[np.ndarray, np.ndarray]]] = None,
) -> Optional[BirthProposal]:
    """
    Draw a BIRTH proposal, or return None when no terminal node can be split.

    The target node is uniform over growable terminal nodes, the predictor uniform over
    the predictors with a valid cutpoint there (or proportional to ``split_probs``), and
    the cutpoint uniform over that predictor's valid cutpoints.
    """
    if grid.n_predictors != tree.n_predictors:
        raise ValueError("Grid and tree disagree on the number of predictors")
    if growable is None:
        growable = growable_leaves(tree, node_data_map, grid)
    if not growable:
        return None
    leaves = sorted(growable)
    node = leaves[int(rng.integers(len(leaves)))]
    lo, n_adj = growable[node]
    valid = np.flatnonzero(n_adj > 0)
    if split_probs is None:
        var = int(valid[rng.integers(valid.size)])
    else:
        weights = np.asarray(split_probs, dtype=float)[valid]
        var = int(valid[rng.choice(valid.size, p=weights / weights.sum())])
    cut_index = int(lo[var] + rng.integers(n_adj[var]))
    cut = float(grid.cutpoints[var][cut_index])

    rows = node_data_map[node]
    go_left = grid.bins[rows, var] <= cut_index
    left_rows, right_rows = rows[go_left], rows[~go_left]

    # move probabilities: BIRTH in T, DEATH in T*
    p_birth = BIRTH_PROBABILITY if tree.n_internal > 0 else 1.0
    tstar_growable = (
        len(growable) > 1 or _rows_growable(left_rows, grid) or _rows_growable(right_rows, grid)
    )
    p_death = 1.0 - BIRTH_PROBABILITY if tstar_growable else 1.0

    w2 = len(tree.second_generation_ids())
    parent = tree.nodes[node].parent
    if parent >= 0:
        sibling = tree.nodes[parent].right if tree.nodes[parent].left == node else tree.nodes[parent].left
        if tree.nodes[sibling].is_terminal:
            w2 -= 1
    return BirthProposal(
        node=node,
        var=var,
        cut=cut,
        cut_index=cut_index,
        p_adj=int(valid.size),
        n_adj=int(n_adj[var]),
        n_growable=len(growable),
        w2_after=w2 + 1,
        move_probs=(p_birth, p_death),
        left_rows=left_rows,
        right_rows=right_rows,
    )


def propose_death(tree: Tree, rng: np.random.Generator) -> Optional[DeathProposal]:
    """Pick a second-generation internal node uniformly, or None for a root-only tree."""
    candidates = tree.second_generation_ids()
    if not candidates:
        return None
    return DeathProposal(node=candidates[int(rng.integers(len(candidates)))], n_second_gen=len(candidates))


# -- Metropolis ratio --------------------------------------------------------------


def closed_form_nodes_ratio(b: int) -> float:
    """2b / (b + 2) for a tree with b terminal nodes."""
    if b < 1:
        raise ValueError(f"b must be at least 1, got {b}")
    return 2.0 * b / (b + 2.0)


def log_depth_ratio(depth: int, gamma: float, beta: float) -> float:
    """log of gamma [1 - gamma/(2+d)^beta]^2 / [(1+d)^beta - gamma]."""
    return (
        math.log(gamma)
        + 2.0 * math.log1p(-gamma / (2.0 + depth) ** beta)
        - math.log((1.0 + depth) ** beta - gamma)
    )


def _leaf_log_evidence(total: float, count: int, sigma2: float, tau2: float) -> float:
    # terms of the leaf marginal likelihood that do not cancel between T and T*
    denom = sigma2 + count * tau2
    return 0.5 * math.log(sigma2 / denom) + tau2 * total * total / (2.0 * sigma2 * denom)


def log_marginal_likelihood(residuals: np.ndarray, sigma2: float, tau: float) -> float:
    """Full log marginal likelihood of one leaf's residuals with mu integrated out."""
    r = np.asarray(residuals, dtype=float)
    n = r.size
    return (
        -0.5 * n * math.log(2.0 * math.pi * sigma2)
        - float(r @ r) / (2.0 * sigma2)
        + _leaf_log_evidence(float(r.sum()), n, sigma2, tau * tau)
    )


@dataclass(frozen=True)
class RatioComponents:
    """Log-space factors of the BIRTH Metropolis ratio.

    ``log_transition`` is log(P_DEATH in T* / P_BIRTH in T); ``log_nodes`` is the node-count
    factor alone.
    """

    log_nodes: float
    log_depth: float
    log_likelihood: float
    log_transition: float = 0.0

    @property
    def log_r(self) -> float:
        return self.log_transition + self.log_nodes + self.log_depth + self.log_likelihood

    @property
    def transition_ratio(self) -> float:
        return math.exp(self.log_transition)

    @property
    def nodes_ratio(self) -> float:
        return math.exp(self.log_nodes)

    @property
    def depth_ratio(self) -> float:
        return math.exp(self.log_depth)

    @property
    def likelihood_ratio(self) -> float:
        return float(np.exp(self.log_likelihood))

    @property
    def r(self) -> float:
        return float(np.exp(self.log_r))

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return self.nodes_ratio, self.depth_ratio, self.likelihood_ratio, self.r


def _check_sigma2(sigma2: float) -> None:
    if not (math.isfinite(sigma2) and sigma2 > 0):
        raise ValueError(f"sigma2 must be positive and finite, got {sigma2}")


def birth_ratio_components(
    tree: Tree,
    proposal: BirthProposal,
    residuals: np.ndarray,
    sigma2: float,
    prior: TreePrior,
    move_probs: Optional[Tuple[float, float]] = None,
    nodes_ratio: str = NODES_RATIO_CLOSED_FORM,
) -> RatioComponents:
    """
    Split the BIRTH ratio into transition, nodes, depth and likelihood factors.

    Args:
        tree: current tree T (before the split)
        proposal: the BIRTH proposal at node eta
        residuals: partial residuals for this tree, indexed like the proposal rows
        sigma2: error variance
        prior: tree and leaf prior
        move_probs: (P_BIRTH in T, P_DEATH in T*); defaults to the proposal's
        nodes_ratio: ``"closed_form"`` for 2b/(b+2), ``"exact"`` for b_growable / w2*

    Returns:
        RatioComponents whose ``log_r`` is the sum of the four log factors
    """
    _check_sigma2(sigma2)
    if proposal.left_rows.size == 0 or proposal.right_rows.size == 0:
        raise ValueError("BIRTH proposal leaves a child without observations")
    p_birth, p_death = move_probs if move_probs is not None else proposal.move_probs
    b = tree.n_terminal
    if nodes_ratio == NODES_RATIO_CLOSED_FORM:
        log_nodes = math.log(closed_form_nodes_ratio(b))
    elif nodes_ratio == NODES_RATIO_EXACT:
        log_nodes = math.log(proposal.n_growable) - math.log(proposal.w2_after)
    else:
        raise ValueError(f"Unknown nodes_ratio mode {nodes_ratio!r}")
    log_transition = math.log(p_death / p_birth)

    depth = tree.nodes[proposal.node].depth
    r = np.asarray(residuals, dtype=float)
    tau2 = prior.tau**2
    left, right = r[proposal.left_rows], r[proposal.right_rows]
    log_lik = (
        _leaf_log_evidence(float(left.sum()), left.size, sigma2, tau2)
        + _leaf_log_evidence(float(right.sum()), right.size, sigma2, tau2)
        - _leaf_log_evidence(float(left.sum() + right.sum()), left.size + right.size, sigma2, tau2)
    )
    return RatioComponents(
        log_nodes, log_depth_ratio(depth, prior.gamma, prior.beta), log_lik, log_transition
    )


def death_log_ratio(
    tree: Tree,
    proposal: DeathProposal,
    node_data_map: NodeRows,
    residuals: np.ndarray,
    sigma2: float,
    prior: TreePrior,
    growable: Mapping[int, Tuple[np.ndarray, np.ndarray]],
    nodes_ratio: str = NODES_RATIO_CLOSED_FORM,
) -> float:
    """Log Metropolis ratio of a DEATH move: the inverse of the reverse BIRTH ratio."""
    _check_sigma2(sigma2)
    node = tree.nodes[proposal.node]
    b_after = tree.n_terminal - 1
    p_death = 1.0 - BIRTH_PROBABILITY if growable else 1.0
    p_birth_after = BIRTH_PROBABILITY if b_after >= 2 else 1.0
    if nodes_ratio == NODES_RATIO_CLOSED_FORM:
        log_nodes = math.log(closed_form_nodes_ratio(b_after))
    elif nodes_ratio == NODES_RATIO_EXACT:
        # pruned node is always growable: its children were both non-empty
        n_growable_after = len(growable) - (node.left in growable) - (node.right in growable) + 1
        log_nodes = math.log(n_growable_after) - math.log(proposal.n_second_gen)
    else:
        raise ValueError(f"Unknown nodes_ratio mode {nodes_ratio!r}")
    log_transition = math.log(p_death / p_birth_after)

    r = np.asarray(residuals, dtype=float)
    tau2 = prior.tau**2
    left, right = r[node_data_map[node.left]], r[node_data_map[node.right]]
    log_lik = (
        _leaf_log_evidence(float(left.sum()), left.size, sigma2, tau2)
        + _leaf_log_evidence(float(right.sum()), right.size, sigma2, tau2)
        - _leaf_log_evidence(float(left.sum() + right.sum()), left.size + right.size, sigma2, tau2)
    )
    log_depth = log_depth_ratio(node.depth, prior.gamma, prior.beta)
    return -(log_transition + log_nodes + log_depth + log_lik)


def metropolis_acceptance(r: float) -> float:
    """min(1, r) for a positive finite ratio."""
    if not math.isfinite(r) or r <= 0:
        raise ValueError(f"Metropolis ratio must be positive and finite, got {r}")
    return min(1.0, r)


def acceptance_from_log(log_r: float) -> float:
    """min(1, exp(log_r)) without overflow."""
    if math.isnan(log_r):
        raise ValueError("Metropolis log-ratio is NaN")
    return 1.0 if log_r >= 0 else math.exp(log_r)


# -- direct assembly (used to check the decomposition) ---------------------------


def log_tree_prior(tree: Tree, X: np.ndarray, grid: CutpointGrid, prior: TreePrior) -> float:
    """
    Log prior probability of a tree's structure and split rules.

    Each internal node contributes its split probability times a uniform choice over
    its valid predictors and cutpoints; each terminal node contributes the probability
    of not splitting.
    """
    rows = tree.node_rows(X)
    total = 0.0
    for node_id, node in tree.nodes.items():
        ps = prior.split_prob(node.depth)
        if node.is_terminal:
            total += math.log1p(-ps)
            continue
        _, n_adj = grid.valid_counts(rows[node_id])
        p_adj = int(np.count_nonzero(n_adj > 0))
        if p_adj == 0 or n_adj[node.var] == 0:
            raise ValueError(f"Node {node_id} splits where no valid cutpoint exists")
        total += math.log(ps) - math.log(p_adj) - math.log(int(n_adj[node.var]))
    return total


def log_tree_likelihood(
    tree: Tree, X: np.ndarray, residuals: np.ndarray, sigma2: float, tau: float
) -> float:
    """Sum of full leaf marginal log likelihoods."""
    r = np.asarray(residuals, dtype=float)
    return sum(
        log_marginal_likelihood(r[rows], sigma2, tau) for rows in tree.leaf_rows(X).values()
    )


def direct_birth_ratio(
    tree: Tree,
    proposal: BirthProposal,
    X: np.ndarray,
    residuals: np.ndarray,
    sigma2: float,
    prior: TreePrior,
    grid: CutpointGrid,
    move_probs: Optional[Tuple[float, float]] = None,
    nodes_ratio: str = NODES_RATIO_CLOSED_FORM,
) -> float:
    """
    Log of P(T|T*) P(T*|r) / [P(T*|T) P(T|r)] assembled from whole-tree quantities.

    The grown tree is built explicitly; prior and likelihood terms are evaluated over
    every node rather than through the closed-form factors.
    """
    _check_sigma2(sigma2)
    p_birth, p_death = move_probs if move_probs is not None else proposal.move_probs
    grown = tree.copy()
    grown.grow(proposal.node, proposal.var, proposal.cut, proposal.cut_index)

    rows = tree.node_rows(X)
    _, n_adj = grid.valid_counts(rows[proposal.node])
    p_adj = int(np.count_nonzero(n_adj > 0))
    log_forward = math.log(p_birth) - math.log(p_adj) - math.log(int(n_adj[proposal.var]))
    if nodes_ratio == NODES_RATIO_CLOSED_FORM:
        b = tree.n_terminal
        log_forward -= math.log(b)
        log_reverse = math.log(p_death) + math.log(2.0 / (b + 2.0))
    else:
        leaf_rows = {i: rows[i] for i in tree.terminal_ids()}
        log_forward -= math.log(len(growable_leaves(tree, leaf_rows, grid)))
        log_reverse = math.log(p_death) - math.log(len(grown.second_generation_ids()))

    log_prior = log_tree_prior(grown, X, grid, prior) - log_tree_prior(tree, X, grid, prior)
    log_lik = log_tree_likelihood(grown, X, residuals, sigma2, prior.tau) - log_tree_likelihood(
        tree, X, residuals, sigma2, prior.tau
    )
    return log_reverse - log_forward + log_prior + log_lik
