"""Incremental Hoeffding tree and its size-bounded variant (ASHT).

Leaves keep class counts, per-value class counts for nominal attributes and a
per-class Gaussian estimator for numeric attributes.  A leaf is evaluated for
a split every ``grace_period`` units of weight; the split is taken when the
information-gain advantage of the best attribute over the runner-up exceeds
the Hoeffding bound, or when the bound has shrunk below ``tie_threshold``.
"""

from __future__ import annotations

import math
from typing import Callable, List, NamedTuple, Optional, Sequence

from .core import DomainError, Instance, Prediction, Schema

_SQRT2 = math.sqrt(2.0)
_NEG_INF = float("-inf")


def hoeffding_bound(value_range: float, delta: float, n: float) -> float:
    """epsilon = sqrt(R^2 ln(1/delta) / (2n))."""
    if not (0.0 < delta <= 1.0):
        raise DomainError(f"delta must lie in (0, 1], got {delta}")
    if n <= 0:
        raise DomainError(f"n must be positive, got {n}")
    if value_range <= 0:
        raise DomainError(f"range must be positive, got {value_range}")
    return math.sqrt(value_range * value_range * math.log(1.0 / delta) / (2.0 * n))


def entropy(dist: Sequence[float]) -> float:
    total = 0.0
    for v in dist:
        total += v
    if total <= 0.0:
        return 0.0
    h = 0.0
    for v in dist:
        if v > 0.0:
            p = v / total
            h -= p * math.log2(p)
    return h


def info_gain(pre: Sequence[float], post: Sequence[Sequence[float]],
              min_branch_fraction: float = 0.0) -> float:
    """Information gain of splitting ``pre`` into the ``post`` branches.

    Returns -inf if fewer than two branches carry more than
    ``min_branch_fraction`` of the total weight.
    """
    sums = [sum(d) for d in post]
    total = sum(sums)
    if total <= 0.0:
        return _NEG_INF
    if sum(1 for s in sums if s > min_branch_fraction * total) < 2:
        return _NEG_INF
    h_post = 0.0
    for s, d in zip(sums, post):
        if s > 0.0:
            h_post += s / total * entropy(d)
    return entropy(pre) - h_post


class SplitDecision(NamedTuple):
    attribute: int
    threshold: Optional[float]  # None for a multiway nominal split
    merit: float
    branch_dists: tuple


class _NumericObserver:
    """Per-class weighted Gaussian estimator for one numeric attribute."""

    __slots__ = ("weight", "mean", "m2", "lo", "hi")

    def __init__(self, n_classes: int):
        self.weight = [0.0] * n_classes
        self.mean = [0.0] * n_classes
        self.m2 = [0.0] * n_classes
        self.lo = [math.inf] * n_classes
        self.hi = [-math.inf] * n_classes

    def update(self, x: float, c: int, w: float) -> None:
        wo = self.weight[c]
        if wo == 0.0:
            self.weight[c] = w
            self.mean[c] = x
            self.m2[c] = 0.0
            self.lo[c] = x
            self.hi[c] = x
            return
        wn = wo + w
        mo = self.mean[c]
        d = x - mo
        mn = mo + w * d / wn
        self.m2[c] += w * d * (x - mn)
        self.mean[c] = mn
        self.weight[c] = wn
        if x < self.lo[c]:
            self.lo[c] = x
        elif x > self.hi[c]:
            self.hi[c] = x

    def variance(self, c: int) -> float:
        w = self.weight[c]
        if w <= 1.0:
            return 0.0
        return max(self.m2[c] / (w - 1.0), 0.0)

    def weight_le(self, c: int, t: float) -> float:
        """Estimated class-``c`` weight with value <= t."""
        w = self.weight[c]
        if w == 0.0 or t < self.lo[c]:
            return 0.0
        if t >= self.hi[c]:
            return w
        sd = math.sqrt(self.variance(c))
        mu = self.mean[c]
        if sd == 0.0:
            return w if t >= mu else 0.0
        return w * 0.5 * (1.0 + math.erf((t - mu) / (sd * _SQRT2)))

    def candidate_thresholds(self, n: int) -> List[float]:
        lo = min(self.lo)
        hi = max(self.hi)
        if not (lo < hi):
            return []
        width = (hi - lo) / (n + 1)
        return [lo + width * (i + 1) for i in range(n)]


class LeafStats:
    """Sufficient statistics held by a learning leaf."""

    __slots__ = ("class_counts", "nominal", "numeric", "weight_seen",
                 "weight_at_last_eval", "attributes")

    def __init__(self, schema: Schema, attributes: Sequence[int],
                 initial_counts: Optional[Sequence[float]] = None):
        c = schema.n_classes
        self.class_counts = list(initial_counts) if initial_counts is not None else [0.0] * c
        self.attributes = tuple(attributes)
        self.nominal = []
        self.numeric = []
        for a in self.attributes:
            spec = schema.attributes[a]
            if spec.is_nominal:
                self.nominal.append((a, [[0.0] * c for _ in spec.values]))
            else:
                self.numeric.append((a, _NumericObserver(c)))
        self.weight_seen = float(sum(self.class_counts))
        self.weight_at_last_eval = self.weight_seen

    @property
    def total_weight(self) -> float:
        return sum(self.class_counts)

    def learn(self, values: Sequence, label: int, w: float) -> None:
        self.class_counts[label] += w
        self.weight_seen += w
        for a, table in self.nominal:
            table[values[a]][label] += w
        for a, obs in self.numeric:
            obs.update(values[a], label, w)

    def observed_classes(self) -> int:
        return sum(1 for v in self.class_counts if v > 0.0)


def attempt_split(leaf: LeafStats, delta: float, tau: float, n_classes: int,
                  min_branch_fraction: float = 0.01,
                  n_thresholds: int = 10) -> Optional[SplitDecision]:
    """Decide whether ``leaf`` should be split, and on what."""
    if leaf.observed_classes() < 2:
        return None
    pre = leaf.class_counts
    suggestions: List[SplitDecision] = []
    for a, table in leaf.nominal:
        merit = info_gain(pre, table, min_branch_fraction)
        suggestions.append(SplitDecision(a, None, merit, tuple(tuple(d) for d in table)))
    for a, obs in leaf.numeric:
        best = None
        for t in obs.candidate_thresholds(n_thresholds):
            left = [obs.weight_le(c, t) for c in range(n_classes)]
            right = [obs.weight[c] - left[c] for c in range(n_classes)]
            merit = info_gain(pre, (left, right), min_branch_fraction)
            if best is None or merit > best.merit:
                best = SplitDecision(a, t, merit, (tuple(left), tuple(right)))
        if best is not None:
            suggestions.append(best)
    if not suggestions:
        return None
    # lower attribute index wins ties
    suggestions.sort(key=lambda s: (-s.merit, s.attribute))
    first = suggestions[0]
    # the "do not split" alternative has zero gain
    second_merit = max(suggestions[1].merit, 0.0) if len(suggestions) > 1 else 0.0
    if not (first.merit > 0.0):
        return None
    eps = hoeffding_bound(math.log2(max(n_classes, 2)), delta, leaf.weight_seen)
    if first.merit - second_merit > eps or eps < tau:
        return first
    return None


class SplitNode:
    __slots__ = ("attribute", "threshold", "children")

    def __init__(self, attribute: int, threshold: Optional[float], children: list):
        self.attribute = attribute
        self.threshold = threshold
        self.children = children

    def branch(self, values: Sequence) -> int:
        if self.threshold is None:
            return values[self.attribute]
        return 0 if values[self.attribute] <= self.threshold else 1


class HoeffdingTree:
    """Hoeffding tree with majority-class leaves.

    ``allowed_attributes`` restricts every leaf to a fixed feature subset
    (random patches).  ``leaf_subspace`` is called with the allowed attribute
    list whenever a leaf is created and returns the subset that leaf may split
    on (random-forest style per-leaf sampling).
    """

    def __init__(self, schema: Schema, grace_period: int = 200,
                 split_confidence: float = 1e-7, tie_threshold: float = 0.05,
                 min_branch_fraction: float = 0.01, n_thresholds: int = 10,
                 allowed_attributes: Optional[Sequence[int]] = None,
                 leaf_subspace: Optional[Callable[[Sequence[int]], Sequence[int]]] = None):
        if grace_period < 1:
            raise DomainError("grace_period must be >= 1")
        if not (0.0 < split_confidence < 1.0):
            raise DomainError("split_confidence must lie in (0, 1)")
        self.schema = schema
        self.grace_period = grace_period
        self.split_confidence = split_confidence
        self.tie_threshold = tie_threshold
        self.min_branch_fraction = min_branch_fraction
        self.n_thresholds = n_thresholds
        if allowed_attributes is None:
            allowed_attributes = range(schema.n_features)
        self.allowed_attributes = tuple(sorted(allowed_attributes))
        self.leaf_subspace = leaf_subspace
        self.split_attempts = 0
        self.reset()

    def reset(self) -> None:
        self.root = self._new_leaf(None)
        self.n_split_nodes = 0

    def _new_leaf(self, counts) -> LeafStats:
        attrs = self.allowed_attributes
        if self.leaf_subspace is not None:
            attrs = sorted(self.leaf_subspace(attrs))
        return LeafStats(self.schema, attrs, counts)

    def _check(self, values: Sequence) -> None:
        if len(values) != self.schema.n_features:
            raise DomainError(
                f"instance has {len(values)} values, tree expects {self.schema.n_features}"
            )

    def leaf_for(self, values: Sequence) -> LeafStats:
        node = self.root
        while node.__class__ is SplitNode:
            if node.threshold is None:
                node = node.children[values[node.attribute]]
            else:
                node = node.children[0 if values[node.attribute] <= node.threshold else 1]
        return node

    def votes(self, values: Sequence) -> List[float]:
        self._check(values)
        return list(self.leaf_for(values).class_counts)

    def predict(self, x: Instance) -> Prediction:
        return Prediction(tuple(self.votes(x.values)))

    def learn(self, x: Instance, weight: float = 1) -> None:
        if weight < 1:
            raise DomainError("training weight must be >= 1; skip the call for weight 0")
        values = x.values
        self._check(values)
        node = self.root
        parent = None
        branch = 0
        while node.__class__ is SplitNode:
            parent = node
            branch = node.branch(values)
            node = node.children[branch]
        node.learn(values, x.label, weight)
        if node.weight_seen - node.weight_at_last_eval >= self.grace_period:
            self.split_attempts += 1
            node.weight_at_last_eval = node.weight_seen
            decision = attempt_split(node, self.split_confidence, self.tie_threshold,
                                     self.schema.n_classes, self.min_branch_fraction,
                                     self.n_thresholds)
            if decision is not None:
                self._split(node, parent, branch, decision)

    def _split(self, leaf: LeafStats, parent: Optional[SplitNode], branch: int,
               decision: SplitDecision) -> None:
        children = [self._new_leaf(d) for d in decision.branch_dists]
        node = SplitNode(decision.attribute, decision.threshold, children)
        if parent is None:
            self.root = node
        else:
            parent.children[branch] = node
        self.n_split_nodes += 1
        self._after_split()

    def _after_split(self) -> None:
        pass

    # --- inspection -----------------------------------------------------

    def iter_nodes(self):
        stack = [(self.root, 0)]
        while stack:
            node, depth = stack.pop()
            yield node, depth
            if node.__class__ is SplitNode:
                stack.extend((c, depth + 1) for c in reversed(node.children))

    def count_split_nodes(self) -> int:
        """Structural count, independent of the running counter."""
        return sum(1 for n, _ in self.iter_nodes() if n.__class__ is SplitNode)

    def depth(self) -> int:
        return max(d for _, d in self.iter_nodes())

    def dump(self) -> str:
        lines = []
        names = [a.name for a in self.schema.attributes]
        for node, depth in self.iter_nodes():
            pad = "  " * depth
            if node.__class__ is SplitNode:
                test = ("= value" if node.threshold is None
                        else f"<= {node.threshold:.6g}")
                lines.append(f"{pad}split {names[node.attribute]} {test}")
            else:
                counts = ", ".join(f"{c:g}" for c in node.class_counts)
                lines.append(f"{pad}leaf [{counts}]")
        return "\n".join(lines)


class AshtTree(HoeffdingTree):
    """Hoeffding tree reset to a single leaf once it exceeds ``max_split_nodes``."""

    def __init__(self, schema: Schema, max_split_nodes: float = math.inf, **kwargs):
        if max_split_nodes < 1:
            raise DomainError("max_split_nodes must be positive")
        self.max_split_nodes = max_split_nodes
        self.resets = 0
        super().__init__(schema, **kwargs)

    def _after_split(self) -> None:
        asht_enforce(self)


def asht_enforce(tree: AshtTree) -> AshtTree:
    if tree.n_split_nodes > tree.max_split_nodes:
        tree.reset()
        tree.resets += 1
    return tree
