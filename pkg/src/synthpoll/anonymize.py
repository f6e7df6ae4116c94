"""Utility-constrained (k, k^m)-anonymization of code-set records.

A cluster of transactional records (each a set of codes) is made
(k, k^m)-anonymous: every combination of up to m codes that appears at
all must appear in at least k records. Protection is achieved by
greedily generalizing codes inside utility constraints (merging two
codes into one broader code, lowest utility loss first) and, when no
legal merge exists, suppressing codes everywhere.

All tie-breaks are fixed so a given input always produces the same
trace, and replaying the trace on the input reproduces the output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations
from math import comb
from pathlib import Path

from .errors import CombinatorialBudgetExceeded, NotGeneralized

#: refuse enumerations beyond this many candidate itemsets
DEFAULT_ITEMSET_CAP = 10**6


@dataclass(frozen=True)
class Code:
    """A leaf code or a generalized code covering several leaves."""

    leaves: frozenset[str]

    def __post_init__(self):
        if not self.leaves:
            raise ValueError("a code must cover at least one leaf")
        object.__setattr__(self, "leaves", frozenset(self.leaves))

    @classmethod
    def leaf(cls, label: str) -> Code:
        return cls(frozenset([label]))

    @classmethod
    def generalized(cls, labels) -> Code:
        labels = frozenset(labels)
        if len(labels) < 2:
            raise ValueError("a generalized code must cover at least 2 leaves")
        return cls(labels)

    @property
    def is_generalized(self) -> bool:
        return len(self.leaves) > 1

    @property
    def label(self) -> str:
        if self.is_generalized:
            return "(" + "|".join(sorted(self.leaves)) + ")"
        return next(iter(self.leaves))

    @property
    def sort_key(self) -> tuple[str, ...]:
        return tuple(sorted(self.leaves))

    def __lt__(self, other: Code) -> bool:
        return self.sort_key < other.sort_key

    def __repr__(self) -> str:
        return f"Code({self.label})"


def parse_code(label: str) -> Code:
    """Inverse of Code.label: "(a|b)" is generalized, anything else a leaf."""
    if label.startswith("(") and label.endswith(")"):
        return Code.generalized(label[1:-1].split("|"))
    return Code.leaf(label)


@dataclass(frozen=True)
class RecordCluster:
    """Records as code sets plus the universe of leaf codes they draw from."""

    records: tuple[frozenset[Code], ...]
    code_universe: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(frozenset(r) for r in self.records))
        object.__setattr__(self, "code_universe", frozenset(self.code_universe))
        for i, record in enumerate(self.records):
            for code in record:
                if not code.leaves <= self.code_universe:
                    raise ValueError(
                        f"record {i}: {code.label} outside universe "
                        f"{sorted(self.code_universe)}"
                    )
            for code in record:
                if code.is_generalized:
                    for other in record:
                        if other is not code and other.leaves < code.leaves:
                            raise ValueError(
                                f"record {i}: contains both {other.label} and "
                                f"{code.label} covering it"
                            )

    def present_codes(self) -> set[Code]:
        present: set[Code] = set()
        for record in self.records:
            present |= record
        return present


@dataclass(frozen=True)
class UtilityConstraintSet:
    """Disjoint groups of leaf codes allowed to generalize together."""

    constraints: tuple[frozenset[str], ...]

    def __post_init__(self):
        constraints = tuple(frozenset(c) for c in self.constraints)
        object.__setattr__(self, "constraints", constraints)
        seen: set[str] = set()
        for constraint in constraints:
            if constraint & seen:
                raise ValueError("utility constraints must be pairwise disjoint")
            seen |= constraint

    def constraint_of(self, code: Code) -> frozenset[str] | None:
        """The single constraint containing every leaf of the code, if any."""
        for constraint in self.constraints:
            if code.leaves <= constraint:
                return constraint
        return None


@dataclass(frozen=True)
class AnonymizationParams:
    k: int
    m: int

    def __post_init__(self):
        if self.k < 1 or self.m < 1:
            raise ValueError("k and m must both be >= 1")


@dataclass(frozen=True)
class GeneralizeAction:
    merged: tuple[Code, Code]
    result: Code


@dataclass(frozen=True)
class SuppressAction:
    code: Code


@dataclass(frozen=True)
class AnonymizationOutcome:
    cluster: RecordCluster
    suppressed: int
    trace: tuple[GeneralizeAction | SuppressAction, ...]


def _support(itemset: frozenset[Code], records) -> int:
    return sum(1 for record in records if itemset <= record)


def _itemset_key(itemset: frozenset[Code]) -> tuple:
    return tuple(sorted(code.sort_key for code in itemset))


def find_unprotected_itemsets(
    cluster: RecordCluster,
    params: AnonymizationParams,
    cap: int = DEFAULT_ITEMSET_CAP,
) -> list[frozenset[Code]]:
    """All itemsets of <= m present codes supported by 1..k-1 records.

    Returned in canonical (sorted) order. Raises when the number of
    candidate itemsets exceeds the cap.
    """
    present = sorted(cluster.present_codes())
    n = len(present)
    candidates = sum(comb(n, size) for size in range(1, min(params.m, n) + 1))
    if candidates > cap:
        raise CombinatorialBudgetExceeded(
            f"{candidates} candidate itemsets exceed cap {cap}; m={params.m} is "
            f"too large for {n} codes"
        )
    unprotected = []
    for size in range(1, min(params.m, n) + 1):
        for combo in combinations(present, size):
            itemset = frozenset(combo)
            if 1 <= _support(itemset, cluster.records) <= params.k - 1:
                unprotected.append(itemset)
    unprotected.sort(key=lambda s: (len(s), _itemset_key(s)))
    return unprotected


def utility_loss(code: Code, code_universe: frozenset[str]) -> float:
    """Fraction of the universe a generalized code covers (broader = worse)."""
    if not code.is_generalized:
        raise NotGeneralized(f"{code.label} is a leaf code")
    return len(code.leaves) / len(code_universe)


def verify_km_anonymity(cluster: RecordCluster, params: AnonymizationParams) -> bool:
    """Exhaustive anonymity check: every <= m itemset appears in 0 or >= k records.

    This is the oracle used by the test suite; it enumerates every
    candidate itemset and is allowed to be slow.
    """
    present = sorted(cluster.present_codes())
    for size in range(1, min(params.m, len(present)) + 1):
        for combo in combinations(present, size):
            support = _support(frozenset(combo), cluster.records)
            if 0 < support < params.k:
                return False
    return True


def _find_merge_pair(
    p: set[Code],
    pool: set[Code],
    constraints: UtilityConstraintSet,
    universe: frozenset[str],
) -> tuple[Code, Code, Code] | None:
    """Lowest-loss legal merge (u, u', merged) with u in p, or None.

    u' may be any other code currently present (generalized codes keep
    acting as members of their constraint). Ties break on the
    lexicographically smallest (u, u') pair.
    """
    best: tuple[float, tuple, tuple, Code, Code, Code] | None = None
    for u in p:
        constraint = constraints.constraint_of(u)
        if constraint is None:
            continue
        for other in pool:
            if other == u or not other.leaves <= constraint:
                continue
            merged = Code(u.leaves | other.leaves)
            loss = utility_loss(merged, universe)
            key = (loss, u.sort_key, other.sort_key)
            if best is None or key < best[:3]:
                best = (loss, u.sort_key, other.sort_key, u, other, merged)
    if best is None:
        return None
    return best[3], best[4], best[5]


def gendiag(
    cluster: RecordCluster,
    constraints: UtilityConstraintSet,
    params: AnonymizationParams,
    cap: int = DEFAULT_ITEMSET_CAP,
) -> AnonymizationOutcome:
    """Make the cluster (k, k^m)-anonymous by greedy generalization.

    Processes unprotected itemsets most-frequent first. For each itemset
    p below the protection threshold, merges the lowest-utility-loss code
    pair sharing a constraint (merges apply to p, the remaining itemset
    queue, and every record); when no pair exists, suppresses p's
    rarest element everywhere, counting its leaves toward s.
    """
    for constraint in constraints.constraints:
        if not constraint <= cluster.code_universe:
            raise ValueError(
                f"constraint {sorted(constraint)} outside the code universe"
            )
    records: list[set[Code]] = [set(record) for record in cluster.records]
    queue: set[frozenset[Code]] = set(
        find_unprotected_itemsets(cluster, params, cap=cap)
    )
    trace: list[GeneralizeAction | SuppressAction] = []
    suppressed = 0

    def pool() -> set[Code]:
        codes: set[Code] = set()
        for record in records:
            codes |= record
        return codes

    def rewrite(u: Code, other: Code, merged: Code, p: set[Code]) -> None:
        for record in records:
            if u in record or other in record:
                record.difference_update((u, other))
                record.add(merged)
        if u in p or other in p:
            p.difference_update((u, other))
            p.add(merged)
        nonlocal queue
        queue = {
            frozenset(q - {u, other} | {merged}) if (u in q or other in q) else q
            for q in queue
        }

    def erase(code: Code, p: set[Code]) -> None:
        for record in records:
            record.discard(code)
        p.discard(code)
        nonlocal queue
        queue = {frozenset(q - {code}) if code in q else q for q in queue}
        queue.discard(frozenset())

    while queue:
        chosen = min(
            queue, key=lambda q: (-_support(q, records), len(q), _itemset_key(q))
        )
        queue.discard(chosen)
        p = set(chosen)
        while p and _support(frozenset(p), records) < params.k:
            pair = _find_merge_pair(
                p, pool() | p, constraints, cluster.code_universe
            )
            if pair is not None:
                u, other, merged = pair
                rewrite(u, other, merged, p)
                trace.append(GeneralizeAction(merged=(u, other), result=merged))
            else:
                while p and _support(frozenset(p), records) < params.k:
                    victim = min(
                        p,
                        key=lambda e: (_support(frozenset([e]), records), e.sort_key),
                    )
                    suppressed += len(victim.leaves)
                    erase(victim, p)
                    trace.append(SuppressAction(code=victim))

    outcome_cluster = RecordCluster(
        records=tuple(frozenset(record) for record in records),
        code_universe=cluster.code_universe,
    )
    return AnonymizationOutcome(
        cluster=outcome_cluster, suppressed=suppressed, trace=tuple(trace)
    )


def replay_trace(
    cluster: RecordCluster, trace: tuple[GeneralizeAction | SuppressAction, ...]
) -> RecordCluster:
    """Apply a recorded action sequence to a cluster's records."""
    records = [set(record) for record in cluster.records]
    for action in trace:
        if isinstance(action, GeneralizeAction):
            u, other = action.merged
            for record in records:
                if u in record or other in record:
                    record.difference_update((u, other))
                    record.add(action.result)
        else:
            for record in records:
                record.discard(action.code)
    return RecordCluster(
        records=tuple(frozenset(record) for record in records),
        code_universe=cluster.code_universe,
    )


# --- JSON wire format -------------------------------------------------------


def cluster_to_json(cluster: RecordCluster) -> dict:
    return {
        "records": [sorted(code.label for code in record) for record in cluster.records],
        "code_universe": sorted(cluster.code_universe),
    }


def cluster_from_json(doc: dict) -> RecordCluster:
    return RecordCluster(
        records=tuple(
            frozenset(parse_code(label) for label in record)
            for record in doc["records"]
        ),
        code_universe=frozenset(doc["code_universe"]),
    )


def constraints_to_json(constraints: UtilityConstraintSet) -> list[list[str]]:
    return [sorted(constraint) for constraint in constraints.constraints]


def constraints_from_json(doc: list) -> UtilityConstraintSet:
    return UtilityConstraintSet(constraints=tuple(frozenset(c) for c in doc))


def outcome_to_json(outcome: AnonymizationOutcome) -> dict:
    trace = []
    for action in outcome.trace:
        if isinstance(action, GeneralizeAction):
            trace.append(
                {
                    "action": "generalize",
                    "merged": sorted(code.label for code in action.merged),
                    "result": action.result.label,
                }
            )
        else:
            trace.append({"action": "suppress", "code": action.code.label})
    doc = cluster_to_json(outcome.cluster)
    doc["suppressed"] = outcome.suppressed
    doc["trace"] = trace
    return doc


def write_outcome(outcome: AnonymizationOutcome, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(outcome_to_json(outcome), fh, indent=2, sort_keys=True)
        fh.write("\n")
