"""Finger-to-key placement as a rectangular linear sum assignment problem.

Every active key must be claimed by exactly one fingertip and no fingertip
may claim two keys; the chosen pairing minimizes the summed Euclidean
moving distance.  The solver is a shortest-augmenting-path method with
dual variables (Jonker-Volgenant family, as in Crouse's rectangular
variant), followed by a refinement pass that makes tie-breaking
reproducible: among equal-cost optima the lexicographically smallest pair
list is returned.  An exhaustive enumerator over all injective mappings
serves as the independent oracle for small chords.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .keyboard import KeyboardGeometry, key_press_point

_INF = float("inf")
_BRUTE_MAX_ROWS = 7
_BRUTE_MAX_MAPPINGS = 10_000_000
# slack for "same total cost" during refinement: far above float noise in
# sums of ~10 entries, far below any tolerance the results are used at
_TIE_RTOL = 1e-12


class InfeasibleError(ValueError):
    """More keys than available fingers."""


class TooLargeError(ValueError):
    """Instance exceeds the exhaustive enumerator's guard."""


@dataclass(frozen=True)
class CostMatrix:
    """Moving costs in meters: rows are keys, columns are fingers."""

    costs: np.ndarray
    key_ids: tuple
    finger_ids: tuple

    def __post_init__(self) -> None:
        costs = np.asarray(self.costs, dtype=np.float64)
        if costs.ndim != 2 or costs.size == 0:
            raise ValueError("cost matrix must be 2D and non-empty")
        if not np.all(np.isfinite(costs)) or np.any(costs < 0):
            raise ValueError("costs must be finite and >= 0")
        if costs.shape != (len(self.key_ids), len(self.finger_ids)):
            raise ValueError("cost shape does not match key/finger id lists")
        costs.flags.writeable = False
        object.__setattr__(self, "costs", costs)

    @property
    def n_keys(self) -> int:
        return self.costs.shape[0]

    @property
    def n_fingers(self) -> int:
        return self.costs.shape[1]


@dataclass(frozen=True)
class Assignment:
    """Solved pairing: (key row, finger column) pairs plus the total cost.

    Every key row appears exactly once, every finger column at most once.
    ``dropped_rows`` is non-empty only in best-effort mode, listing key rows
    left unassigned because the chord exceeded the finger count.
    """

    pairs: tuple
    total_cost: float
    dropped_rows: tuple = ()

    def finger_for_row(self, row: int) -> "int | None":
        for r, c in self.pairs:
            if r == row:
                return c
        return None


def build_cost_matrix(fingertips, finger_ids, active_keys, geom: KeyboardGeometry) -> CostMatrix:
    """Euclidean fingertip-to-press-point distances.

    Rows follow the active keys in ascending order; columns follow
    ``finger_ids`` (the embodiment's configured order).
    """
    keys = sorted(active_keys)
    if not keys:
        raise ValueError("active_keys must be non-empty")
    tips = np.asarray(fingertips, dtype=np.float64)
    if tips.ndim != 2 or tips.shape[1] != 3 or tips.shape[0] == 0:
        raise ValueError("fingertips must be a non-empty (n, 3) array")
    if tips.shape[0] != len(finger_ids):
        raise ValueError("fingertips and finger_ids disagree on finger count")
    points = np.array([key_press_point(k, geom) for k in keys], dtype=np.float64)
    diff = points[:, None, :] - tips[None, :, :]
    costs = np.sqrt((diff**2).sum(axis=2))
    return CostMatrix(costs=costs, key_ids=tuple(keys), finger_ids=tuple(finger_ids))


# ---------------------------------------------------------------------------
# Shortest augmenting path core (rows <= cols)
# ---------------------------------------------------------------------------


def _augmenting_path_solve(cost: list) -> list:
    """Assign every row to a distinct column minimizing total cost.

    ``cost`` is a list of row lists with len(rows) <= len(cols); returns
    col4row.  One Dijkstra-style search per row over reduced costs, with
    dual updates keeping reduced costs non-negative.
    """
    n_rows = len(cost)
    n_cols = len(cost[0])
    u = [0.0] * n_rows
    v = [0.0] * n_cols
    col4row = [-1] * n_rows
    row4col = [-1] * n_cols
    for cur_row in range(n_rows):
        shortest = [_INF] * n_cols
        path = [-1] * n_cols
        scanned = [False] * n_cols
        seen_rows = [cur_row]
        min_val = 0.0
        i = cur_row
        sink = -1
        while sink == -1:
            lowest = _INF
            index = -1
            row_costs = cost[i]
            ui = u[i]
            for j in range(n_cols):
                if scanned[j]:
                    continue
                reduced = min_val + row_costs[j] - ui - v[j]
                if reduced < shortest[j]:
                    shortest[j] = reduced
                    path[j] = i
                sj = shortest[j]
                # prefer an unassigned column on ties: reaches the sink sooner
                if sj < lowest or (sj == lowest and row4col[j] == -1):
                    lowest = sj
                    index = j
            min_val = lowest
            j = index
            scanned[j] = True
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]
                seen_rows.append(i)
        u[cur_row] += min_val
        for i2 in seen_rows:
            if i2 != cur_row:
                u[i2] += min_val - shortest[col4row[i2]]
        for j in range(n_cols):
            if scanned[j]:
                v[j] -= min_val - shortest[j]
        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            col4row[i], j = j, col4row[i]
            if i == cur_row:
                break
    return col4row


def _pairs_total(cost: list, col4row: list) -> float:
    total = 0.0
    for i, j in enumerate(col4row):
        total += cost[i][j]
    return total


def _lexicographic_pairs(cost: list, target: float) -> tuple:
    """Among optima with total ~= target, pick the lexicographically first.

    Greedy per row: fix the smallest column whose optimal completion still
    meets the target.  A per-row-minimum lower bound prunes candidates so
    re-solves are rare on untied instances.
    """
    n_rows = len(cost)
    n_cols = len(cost[0])
    scale = max(1.0, max(abs(x) for row in cost for x in row))
    eps = _TIE_RTOL * scale
    available = list(range(n_cols))
    chosen = []
    prefix = 0.0
    for i in range(n_rows):
        mins = []  # per later row: (min, argmin, second-min) over available columns
        for r in range(i + 1, n_rows):
            m1, a1, m2 = _INF, -1, _INF
            row_costs = cost[r]
            for j in available:
                x = row_costs[j]
                if x < m1:
                    m2, m1, a1 = m1, x, j
                elif x < m2:
                    m2 = x
            mins.append((m1, a1, m2))
        def completion_cost(j: int) -> float:
            if i + 1 == n_rows:
                return prefix + cost[i][j]
            sub_cols = [jj for jj in available if jj != j]
            sub = [[cost[r][jj] for jj in sub_cols] for r in range(i + 1, n_rows)]
            return prefix + cost[i][j] + _pairs_total(sub, _augmenting_path_solve(sub))

        picked = -1
        fallback_cost = _INF
        fallback = -1
        for j in available:
            bound = prefix + cost[i][j]
            for m1, a1, m2 in mins:
                bound += m2 if a1 == j else m1
            if bound > target + eps:
                continue
            candidate = completion_cost(j)
            if candidate < fallback_cost:
                fallback_cost = candidate
                fallback = j
            if candidate <= target + eps:
                picked = j
                break
        if picked == -1:
            # numerical safety net (never hit in practice): take the best
            # completion outright, scanning without the pruning bound
            picked = fallback if fallback != -1 else min(available, key=completion_cost)
        chosen.append((i, picked))
        prefix += cost[i][picked]
        available.remove(picked)
    return tuple(chosen)


def solve_assignment(cost: CostMatrix, best_effort: bool = False) -> Assignment:
    """Minimum-cost injective mapping of keys to fingers.

    Requires at most as many keys as fingers; with ``best_effort`` an
    oversized chord is reduced by assigning the cheapest finger-count
    subset of keys (via the transposed problem) and reporting the dropped
    key rows.  Ties between optima break toward the lexicographically
    smallest pair list (for oversized chords, smallest in finger-major
    order on the transposed problem), so results are reproducible.
    """
    n_keys, n_fingers = cost.n_keys, cost.n_fingers
    rows = cost.costs.tolist()
    if n_keys > n_fingers:
        if not best_effort:
            raise InfeasibleError(f"{n_keys} keys but only {n_fingers} fingers")
        transposed = [[rows[i][j] for i in range(n_keys)] for j in range(n_fingers)]
        base = _augmenting_path_solve(transposed)
        target = _pairs_total(transposed, base)
        t_pairs = _lexicographic_pairs(transposed, target)
        pairs = tuple(sorted((key_row, finger_col) for finger_col, key_row in t_pairs))
        total = 0.0
        for key_row, finger_col in pairs:
            total += rows[key_row][finger_col]
        assigned = {key_row for key_row, _ in pairs}
        dropped = tuple(r for r in range(n_keys) if r not in assigned)
        return Assignment(pairs=pairs, total_cost=total, dropped_rows=dropped)

    base = _augmenting_path_solve(rows)
    target = _pairs_total(rows, base)
    pairs = _lexicographic_pairs(rows, target)
    total = 0.0
    for i, j in pairs:
        total += rows[i][j]
    return Assignment(pairs=pairs, total_cost=total)


# ---------------------------------------------------------------------------
# Exhaustive oracle
# ---------------------------------------------------------------------------

_PERM_CACHE: dict = {}


def _permutation_table(n_rows: int, n_cols: int) -> np.ndarray:
    key = (n_rows, n_cols)
    table = _PERM_CACHE.get(key)
    if table is None:
        table = np.array(list(itertools.permutations(range(n_cols), n_rows)), dtype=np.int16)
        _PERM_CACHE[key] = table
    return table


def brute_force_assignment(cost: CostMatrix) -> Assignment:
    """Enumerate every injective key->finger mapping and return the best.

    Guarded to at most 7 keys.  Mappings are enumerated in lexicographic
    order and totals accumulated row by row, so the first minimum found is
    the same lexicographically smallest optimum solve_assignment returns.
    """
    n_keys, n_fingers = cost.n_keys, cost.n_fingers
    if n_keys > n_fingers:
        raise InfeasibleError(f"{n_keys} keys but only {n_fingers} fingers")
    if n_keys > _BRUTE_MAX_ROWS:
        raise TooLargeError(f"{n_keys} keys exceeds the {_BRUTE_MAX_ROWS}-key enumeration guard")
    count = 1
    for k in range(n_keys):
        count *= n_fingers - k
    if count > _BRUTE_MAX_MAPPINGS:
        raise TooLargeError(f"{count} mappings exceeds the enumeration guard")

    table = _permutation_table(n_keys, n_fingers)
    costs = cost.costs
    totals = costs[0, table[:, 0]].astype(np.float64, copy=True)
    for i in range(1, n_keys):
        totals += costs[i, table[:, i]]
    best = int(np.argmin(totals))
    pairs = tuple((i, int(table[best, i])) for i in range(n_keys))
    return Assignment(pairs=pairs, total_cost=float(totals[best]))


def format_debug_table(cost: CostMatrix, assignment: Assignment) -> str:
    """Aligned text table of the cost matrix with chosen pairs starred."""
    col_labels = [getattr(f, "label", lambda: str(f))() for f in cost.finger_ids]
    chosen = dict(assignment.pairs)
    width = max(8, *(len(c) + 2 for c in col_labels))
    lines = ["key".ljust(6) + "".join(c.rjust(width) for c in col_labels)]
    for i, key in enumerate(cost.key_ids):
        cells = []
        for j in range(cost.n_fingers):
            mark = "*" if chosen.get(i) == j else " "
            cells.append(f"{cost.costs[i, j]:.4f}{mark}".rjust(width))
        lines.append(str(key).ljust(6) + "".join(cells))
    lines.append(f"total cost: {assignment.total_cost:.6f}")
    if assignment.dropped_rows:
        dropped_keys = [cost.key_ids[r] for r in assignment.dropped_rows]
        lines.append(f"dropped keys: {dropped_keys}")
    return "\n".join(lines)
