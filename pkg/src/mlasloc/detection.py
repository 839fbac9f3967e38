"""Peak extraction from likelihood maps and off-grid gradient refinement."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy.optimize import Bounds, minimize

from .ascent import AscentResult, finite_difference_gradient, gradient_ascent
from .mapgrid import LikelihoodMap, local_maxima_2d
from .textio import write_rows

REFINE_INITIAL_STEP_M = 0.1
REFINE_MIN_STEP_M = 1e-4
REFINE_MAX_ITER = 200
_REFINE_FD_STEP_M = 1e-4

# The local objective freezes each pair's active target branch, so a single
# ascent can only climb the branch surface picked at its starting point and
# tends to stall on narrow curved ridges once the step underflows. Restart
# the ascent with the branch re-resolved at the current point until a pass
# both converges and barely moves. A pass that exhausts its iteration budget
# is crawling along the floor of a curved valley (the step direction keeps
# bouncing between the walls); a simplex polish covers that case, since it
# follows valleys without needing a usable gradient direction.
_REFINE_PASSES = 4
_PASS_SETTLE_TOL_M = 1e-3
_SIMPLEX_MAX_EVALS = 400

# refine_peaks reverts a refinement that travels beyond one cell diagonal:
# it has escaped onto a different peak. extract_peaks instead lets the
# ascent run and resolves such escapes by deduplication.
REFINE_MAX_TRAVEL_DIAGONALS = 1.0

# Fill-in peaks must sit at least this many cells (Chebyshev) from every
# already selected cell.
FILL_MIN_SEPARATION_CELLS = 2

# Refined peaks closer than this many grid spacings are two detections of
# the same target; extract_peaks keeps the stronger one.
_DEDUP_RADIUS_SPACINGS = 1.0

# Bound on how many ranked maxima extract_peaks will polish.
_MAX_CANDIDATE_REFINEMENTS = 12

# Sampled cell values sit below their refined peak values by up to the
# curvature drop across a cell. When deciding whether a not-yet-refined cell
# can still beat the kth kept peak, allow it that much headroom (the largest
# lift seen on this map, with slack), otherwise a sharply peaked target whose
# maximum falls between grid points loses to an already polished ghost. The
# first few candidates past K are refined unconditionally since the observed
# lift is not yet representative.
_LIFT_SLACK = 2.0
_FORCED_WALK_EXTRA = 3


class MapObjective(Protocol):
    """Continuous objective backing a likelihood map, used for refinement."""

    def value(self, x: float, y: float) -> float: ...

    def local_objective(self, x0: float, y0: float):
        """Returns f(xy) -> float, smooth near (x0, y0), to be maximized."""
        ...


@dataclass(frozen=True)
class DetectionSet:
    """K map peaks, strongest first.

    ``refined`` marks peaks whose position came out of gradient ascent;
    ``filled`` marks fill-in cells emitted when the map had fewer than K
    strict local maxima. ``cells`` are the originating grid cells.
    """

    positions: np.ndarray  # (K, 2) meters
    peak_values: np.ndarray  # (K,)
    refined: tuple[bool, ...]
    filled: tuple[bool, ...]
    cells: tuple[tuple[int, int], ...]
    grid_spacing: float

    def __post_init__(self):
        k = self.positions.shape[0]
        if self.positions.shape != (k, 2) or self.peak_values.shape != (k,):
            raise ValueError("positions must be (K, 2) and peak_values (K,)")
        if not (len(self.refined) == len(self.filled) == len(self.cells) == k):
            raise ValueError("flag/cell lengths must match K")
        if len(set(self.cells)) != k:
            raise ValueError("duplicate peak cells")
        if np.any(np.diff(self.peak_values) > 1e-12 * np.maximum(np.abs(self.peak_values[:-1]), 1.0)):
            raise ValueError("peaks must be sorted by descending value")

    def __len__(self) -> int:
        return self.positions.shape[0]

    def to_csv(self, path):
        rows = [
            (rank + 1, self.positions[rank, 0], self.positions[rank, 1],
             self.peak_values[rank], self.refined[rank])
            for rank in range(len(self))
        ]
        write_rows(path, ("rank", "x", "y", "value", "refined_flag"), rows)


def _sort_key(values, lik_map):
    def key(cell):
        i, j = cell
        pos = lik_map.cell_position(i, j)
        return (-values[i, j], pos[0], pos[1])

    return key


def find_peaks(lik_map: LikelihoodMap, num_targets: int) -> DetectionSet:
    """K best strict local maxima; short maps are topped up with fill cells.

    Ties are broken by position, x before y. Fill cells are the largest
    non-selected finite cells at Chebyshev distance >= 2 cells from every
    selected cell; if that still leaves the set short (tiny or degenerate
    maps) a final unrestricted pass guarantees exactly K detections.
    """
    values = lik_map.values
    finite = np.isfinite(values)
    if finite.sum() < num_targets:
        raise ValueError(
            f"map has {int(finite.sum())} finite cells, needs at least {num_targets}"
        )
    key = _sort_key(values, lik_map)
    maxima = sorted(local_maxima_2d(values), key=key)
    chosen = maxima[:num_targets]
    filled = [False] * len(chosen)

    if len(chosen) < num_targets:
        candidates = sorted(
            ((int(i), int(j)) for i, j in zip(*np.nonzero(finite))), key=key
        )
        taken = set(chosen)
        for restrict in (True, False):
            for cell in candidates:
                if len(chosen) == num_targets:
                    break
                if cell in taken:
                    continue
                if restrict and any(
                    max(abs(cell[0] - c[0]), abs(cell[1] - c[1])) < FILL_MIN_SEPARATION_CELLS
                    for c in chosen
                ):
                    continue
                chosen.append(cell)
                filled.append(True)
                taken.add(cell)

    order = sorted(range(len(chosen)), key=lambda idx: key(chosen[idx]))
    cells = tuple(chosen[idx] for idx in order)
    filled = tuple(filled[idx] for idx in order)
    positions = np.array([lik_map.cell_position(i, j) for i, j in cells])
    peak_values = np.array([values[c] for c in cells])
    return DetectionSet(
        positions=positions,
        peak_values=peak_values,
        refined=tuple(False for _ in cells),
        filled=filled,
        cells=cells,
        grid_spacing=lik_map.grid.spacing,
    )


def _simplex_polish(
    f,
    pos: np.ndarray,
    value: float,
    lower: np.ndarray | None,
    upper: np.ndarray | None,
) -> tuple[np.ndarray, float]:
    bounds = None
    if lower is not None and upper is not None:
        bounds = Bounds(lower, upper)
    res = minimize(
        lambda xy: -f(xy),
        pos,
        method="Nelder-Mead",
        bounds=bounds,
        options={
            "xatol": REFINE_MIN_STEP_M,
            "fatol": 1e-9 * max(1.0, abs(value)),
            "maxfev": _SIMPLEX_MAX_EVALS,
        },
    )
    cand_val = -float(res.fun)
    if np.isfinite(cand_val) and cand_val > value:
        return np.asarray(res.x, dtype=float), cand_val
    return pos, value


def _refine_single(
    objective: MapObjective,
    x0: float,
    y0: float,
    lower: np.ndarray | None,
    upper: np.ndarray | None,
) -> AscentResult:
    start = np.array([float(x0), float(y0)])
    pos = start.copy()
    res = AscentResult(x=pos, value=-np.inf, iterations=0, moved=0.0)
    for _ in range(_REFINE_PASSES):
        f = objective.local_objective(float(pos[0]), float(pos[1]))

        def grad(xy, f=f):
            return finite_difference_gradient(f, xy, _REFINE_FD_STEP_M)

        res = gradient_ascent(
            f,
            grad,
            pos,
            initial_step=REFINE_INITIAL_STEP_M,
            min_step=REFINE_MIN_STEP_M,
            max_iter=REFINE_MAX_ITER,
            lower=lower,
            upper=upper,
        )
        pos = np.asarray(res.x, dtype=float)
        if res.iterations >= REFINE_MAX_ITER:
            pos, value = _simplex_polish(f, pos, res.value, lower, upper)
            res = AscentResult(
                x=pos, value=value, iterations=res.iterations, moved=res.moved
            )
            continue  # re-freeze and confirm from the polished point
        if res.moved < _PASS_SETTLE_TOL_M:
            break
    return AscentResult(
        x=pos,
        value=res.value,
        iterations=res.iterations,
        moved=float(np.linalg.norm(pos - start)),
    )


def _bounds_arrays(bounds):
    if bounds is None:
        return None, None
    return np.array([bounds[0], bounds[2]]), np.array([bounds[1], bounds[3]])


def refine_peaks(
    detections: DetectionSet,
    objective: MapObjective,
    bounds: tuple[float, float, float, float] | None = None,
) -> DetectionSet:
    """Gradient-ascend each genuine peak on the continuous objective.

    Fill-in cells are left where they are. A peak that wanders beyond its
    travel allowance has escaped onto a different peak; it reverts to the
    seed position and stays flagged unrefined. Reported values are
    re-evaluated through ``objective.value`` at the final positions, so the
    ascent guarantee (never below the seed cell value) holds for the map
    itself, not just the frozen surrogate.
    """
    max_move = REFINE_MAX_TRAVEL_DIAGONALS * np.sqrt(2.0) * detections.grid_spacing
    lower, upper = _bounds_arrays(bounds)
    new_positions = detections.positions.copy()
    new_values = detections.peak_values.copy()
    refined = list(detections.refined)
    for idx in range(len(detections)):
        if detections.filled[idx]:
            continue
        x0, y0 = detections.positions[idx]
        res = _refine_single(objective, x0, y0, lower, upper)
        if res.moved > max_move:
            continue
        new_positions[idx] = res.x
        new_values[idx] = objective.value(float(res.x[0]), float(res.x[1]))
        refined[idx] = True

    order = sorted(
        range(len(detections)),
        key=lambda i: (-new_values[i], new_positions[i, 0], new_positions[i, 1]),
    )
    return DetectionSet(
        positions=new_positions[order],
        peak_values=new_values[order],
        refined=tuple(refined[i] for i in order),
        filled=tuple(detections.filled[i] for i in order),
        cells=tuple(detections.cells[i] for i in order),
        grid_spacing=detections.grid_spacing,
    )


def extract_peaks(
    lik_map: LikelihoodMap,
    objective: MapObjective,
    num_targets: int,
    bounds: tuple[float, float, float, float] | None = None,
) -> DetectionSet:
    """K distinct refined peaks of a map: rank maxima, polish, deduplicate.

    A narrow ridge in the map often carries two or three strict grid maxima
    that all belong to one target; refining the top K cells would then
    return duplicates and drop a weaker target entirely. This walks the
    ranked maxima, refines each, merges refinements that land within one
    grid spacing of an already kept peak (the stronger value wins), and
    keeps walking until K distinct peaks are held. The walk is bounded; if
    it ends short of K the fill rule of ``find_peaks`` tops up the set with
    unrefined cells.
    """
    values = lik_map.values
    finite = np.isfinite(values)
    if finite.sum() < num_targets:
        raise ValueError(
            f"map has {int(finite.sum())} finite cells, needs at least {num_targets}"
        )
    key = _sort_key(values, lik_map)
    maxima = sorted(local_maxima_2d(values), key=key)
    lower, upper = _bounds_arrays(bounds)
    spacing = lik_map.grid.spacing
    dedup_radius = _DEDUP_RADIUS_SPACINGS * spacing

    records: list[dict] = []

    def kth_value() -> float:
        if len(records) < num_targets:
            return -np.inf
        return sorted((r["value"] for r in records), reverse=True)[num_targets - 1]

    walked = 0
    max_lift = 0.0
    for cell in maxima:
        if walked >= num_targets + _MAX_CANDIDATE_REFINEMENTS:
            break
        if (
            walked >= num_targets + _FORCED_WALK_EXTRA
            and len(records) >= num_targets
            and values[cell] < kth_value() - _LIFT_SLACK * max_lift
        ):
            break
        walked += 1
        x0, y0 = lik_map.cell_position(*cell)
        res = _refine_single(objective, x0, y0, lower, upper)
        cand = {
            "pos": np.asarray(res.x, dtype=float),
            "value": objective.value(float(res.x[0]), float(res.x[1])),
            "refined": True,
            "cell": cell,
        }
        max_lift = max(max_lift, cand["value"] - float(values[cell]))
        for rec in records:
            if np.linalg.norm(rec["pos"] - cand["pos"]) <= dedup_radius:
                if cand["value"] > rec["value"]:
                    rec.update(cand)
                break
        else:
            records.append(cand)

    records.sort(key=lambda r: (-r["value"], r["pos"][0], r["pos"][1]))
    records = records[:num_targets]
    filled = [False] * len(records)

    if len(records) < num_targets:
        taken = {r["cell"] for r in records}
        candidates = sorted(
            ((int(i), int(j)) for i, j in zip(*np.nonzero(finite))), key=key
        )
        for restrict in (True, False):
            for cell in candidates:
                if len(records) == num_targets:
                    break
                if cell in taken:
                    continue
                if restrict and any(
                    max(abs(cell[0] - c[0]), abs(cell[1] - c[1])) < FILL_MIN_SEPARATION_CELLS
                    for c in (r["cell"] for r in records)
                ):
                    continue
                records.append(
                    {
                        "pos": np.array(lik_map.cell_position(*cell)),
                        "value": float(values[cell]),
                        "refined": False,
                        "cell": cell,
                    }
                )
                filled.append(True)
                taken.add(cell)
        order = sorted(
            range(len(records)),
            key=lambda i: (
                -records[i]["value"],
                records[i]["pos"][0],
                records[i]["pos"][1],
            ),
        )
        records = [records[i] for i in order]
        filled = [filled[i] for i in order]

    return DetectionSet(
        positions=np.array([r["pos"] for r in records]),
        peak_values=np.array([r["value"] for r in records]),
        refined=tuple(r["refined"] for r in records),
        filled=tuple(filled),
        cells=tuple(r["cell"] for r in records),
        grid_spacing=spacing,
    )
