"""Backward value recursion and forward policy rollout on Cartesian grids.

The backward step computes, for every state node ``x`` and control node ``u``,

    T(x, u) = f_cR(x, u) + interp(C, f_d(x, u))

subject to admissibility: every inequality component ``g(x, u) <= 0``, the
successor state inside the grid box, and the interpolated cost-to-go finite.
Inadmissible pairs evaluate to ``+inf``.  The new table stores
``C'(x) = min_u T(x, u)`` and the argmin control node; ties resolve to the
smallest flat control index.  Infeasible nodes carry cost ``+inf`` and the
policy marker ``-1``, and infeasibility is monotone: once a node is
infeasible at some horizon it stays infeasible at every longer horizon.

:class:`DpEngine` precomputes the expensive geometry once per
(problem, state grid, control grid): successor states, stage costs,
admissibility flags, and the interpolation stencil of every state/control
pair.  Stencil corners with zero weight (and every corner of an inadmissible
pair) are redirected to a sentinel row whose cost is 0, so the weighted sum
never multiplies 0 by inf.  Work is split over contiguous state-row chunks;
each chunk writes a disjoint output slice, so results are bit-identical for
every thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .grid import CartesianGrid
from .problem import ProblemDef, relaxed_cost

INFEASIBLE = -1  # policy marker for nodes with no admissible control

# Forward-step outcome labels, also used as rollout truncation reasons.
STEP_OK = "ok"
STEP_POLICY = "policy_undefined"
STEP_CONSTRAINT = "constraint_violated"
STEP_DOMAIN = "left_domain"


@dataclass
class StageTable:
    """Cost-to-go field and greedy policy for one backward stage.

    Attributes:
        cost: flat node field, ``+inf`` at infeasible nodes.
        policy: flat control-node index per state node, ``-1`` where the cost
            is infinite.
    """

    cost: np.ndarray
    policy: np.ndarray

    def __post_init__(self) -> None:
        self.cost = np.asarray(self.cost, dtype=float)
        self.policy = np.asarray(self.policy, dtype=np.int64)
        if self.cost.shape != self.policy.shape or self.cost.ndim != 1:
            raise ValueError("cost and policy must be flat arrays of equal length")
        infinite = ~np.isfinite(self.cost)
        marked = self.policy == INFEASIBLE
        if not np.array_equal(infinite, marked):
            raise ValueError("infinite cost and policy marker -1 must coincide")

    @property
    def feasible_mask(self) -> np.ndarray:
        return self.policy != INFEASIBLE

    def control_coords(self, ugrid: CartesianGrid) -> np.ndarray:
        """Policy in control coordinates, NaN rows at infeasible nodes."""
        out = np.full((self.policy.shape[0], ugrid.ndim), np.nan)
        ok = self.feasible_mask
        if ok.any():
            out[ok] = ugrid.node_coords()[self.policy[ok]]
        return out


@dataclass
class ForwardEnsemble:
    """A batch of closed-loop states advanced in lockstep.

    Entries that fail a feasibility check keep their last feasible state and
    are excluded from all later statistics.
    """

    states: np.ndarray
    feasible: np.ndarray
    step: int = 0

    def __post_init__(self) -> None:
        self.states = np.asarray(self.states, dtype=float)
        self.feasible = np.asarray(self.feasible, dtype=bool)
        if self.states.ndim != 2 or self.feasible.shape != (self.states.shape[0],):
            raise ValueError("states must be (k, n) with a (k,) feasibility mask")


def feasible_indices(ensemble: ForwardEnsemble) -> np.ndarray:
    """Flat indices of the entries still feasible, in ensemble order."""
    return np.flatnonzero(ensemble.feasible)


class DpEngine:
    """Precomputed vectorized kernels for one (problem, grids) triple.

    Args:
        problem: the control problem.
        xgrid: state grid.
        ugrid: control grid.
        threads: worker threads for chunked evaluation; 0 picks the CPU
            count.  The chunks write disjoint slices, so the numerical output
            is independent of this setting.
    """

    def __init__(
        self,
        problem: ProblemDef,
        xgrid: CartesianGrid,
        ugrid: CartesianGrid,
        threads: int = 1,
    ):
        if problem.state_dim != xgrid.ndim:
            raise ValueError(
                f"state grid has {xgrid.ndim} axes, problem has {problem.state_dim}"
            )
        if problem.control_dim != ugrid.ndim:
            raise ValueError(
                f"control grid has {ugrid.ndim} axes, problem has {problem.control_dim}"
            )
        self.problem = problem
        self.xgrid = xgrid
        self.ugrid = ugrid
        self.threads = self._resolve_threads(threads)
        self.nx = xgrid.size
        self.nu = ugrid.size
        self._xcoords = xgrid.node_coords()
        self._ucoords = ugrid.node_coords()
        self._ncorners = 1 << xgrid.ndim
        self._build()

    @staticmethod
    def _resolve_threads(threads: int) -> int:
        if threads < 0:
            raise ValueError("threads must be >= 0")
        if threads == 0:
            return os.cpu_count() or 1
        return threads

    def _row_chunks(self) -> list[tuple[int, int]]:
        bounds = np.linspace(0, self.nx, self.threads + 1).astype(int)
        return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if a < b]

    def _run_chunks(self, fn) -> None:
        chunks = self._row_chunks()
        if len(chunks) == 1:
            fn(*chunks[0])
            return
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            list(pool.map(lambda ab: fn(*ab), chunks))

    # -- precomputation --------------------------------------------------------

    def _build(self) -> None:
        nx, nu, nc = self.nx, self.nu, self._ncorners
        p = nx * nu
        self._sc = np.empty(p, dtype=float)
        self._idx = np.empty((p, nc), dtype=np.int32)
        self._w = np.empty((p, nc), dtype=float)
        self._bad = np.empty(p, dtype=bool)

        # Pair p = ix * nu + iu, row-major over (state node, control node).
        def build_rows(r0: int, r1: int) -> None:
            x = np.repeat(self._xcoords[r0:r1], nu, axis=0)
            u = np.tile(self._ucoords, (r1 - r0, 1))
            s = slice(r0 * nu, r1 * nu)
            g = np.asarray(self.problem.inequality(x, u), dtype=float)
            bad = (g > 0.0).any(axis=-1)
            self._sc[s] = relaxed_cost(self.problem, x, u)
            xn = np.asarray(self.problem.dynamics(x, u), dtype=float)
            idx, w, inside = self.xgrid.locate_cells(xn)
            bad |= ~inside
            w[bad] = 0.0
            # Sentinel row nx holds cost 0; redirect every zero-weight corner
            # there so that inf-valued corners never meet a zero weight.
            idx[w == 0.0] = self.nx
            self._idx[s] = idx
            self._w[s] = w
            self._bad[s] = bad

        self._run_chunks(build_rows)

    # -- backward value step ---------------------------------------------------

    def backward(self, prev_cost: np.ndarray | None) -> StageTable:
        """One backward recursion step on top of cost-to-go ``prev_cost``.

        ``None`` stands for the all-zero terminal field.
        """
        nx, nu = self.nx, self.nu
        caug = np.empty(nx + 1, dtype=float)
        if prev_cost is None:
            caug[:nx] = 0.0
        else:
            prev_cost = np.asarray(prev_cost, dtype=float)
            if prev_cost.shape != (nx,):
                raise ValueError(f"prev_cost must have shape ({nx},)")
            caug[:nx] = prev_cost
        caug[nx] = 0.0

        cost = np.empty(nx, dtype=float)
        policy = np.empty(nx, dtype=np.int64)

        def step_rows(r0: int, r1: int) -> None:
            s = slice(r0 * nu, r1 * nu)
            val = self._w[s, 0] * caug[self._idx[s, 0]]
            for c in range(1, self._ncorners):
                val += self._w[s, c] * caug[self._idx[s, c]]
            val += self._sc[s]
            val[self._bad[s]] = np.inf
            tbl = val.reshape(r1 - r0, nu)
            arg = tbl.argmin(axis=1)
            best = tbl[np.arange(r1 - r0), arg]
            pol = arg.astype(np.int64)
            pol[~np.isfinite(best)] = INFEASIBLE
            cost[r0:r1] = best
            policy[r0:r1] = pol

        self._run_chunks(step_rows)
        return StageTable(cost=cost, policy=policy)

    # -- forward ensemble step ---------------------------------------------------

    def seed_ensemble(self, table: StageTable) -> ForwardEnsemble:
        """Fresh ensemble holding every node where ``table`` has a control."""
        return ForwardEnsemble(
            states=self._xcoords.copy(),
            feasible=table.feasible_mask.copy(),
            step=0,
        )

    def forward(self, ensemble: ForwardEnsemble, table: StageTable) -> np.ndarray:
        """Advance every feasible entry one closed-loop step under ``table``.

        An entry fails -- keeping its last state -- when, in order: the policy
        interpolation stencil touches an infeasible node with positive weight,
        the interpolated control violates an inequality component, or the
        successor state leaves the grid box.

        Returns:
            Applied controls, shape ``(k, control_dim)``; NaN rows for entries
            that were already infeasible or failed during this step.
        """
        k = ensemble.states.shape[0]
        u_out = np.full((k, self.ugrid.ndim), np.nan)
        active = np.flatnonzero(ensemble.feasible)
        if active.size:
            pts = ensemble.states[active]
            idx, w, inside = self.xgrid.locate_cells(pts)
            pol = table.policy[idx]
            dead = ~inside | ((pol == INFEASIBLE) & (w > 0.0)).any(axis=1)

            alive = np.flatnonzero(~dead)
            if alive.size:
                # Zero-weight corners may carry the -1 marker; their
                # contribution is exactly 0 * coordinate.
                uc = self._ucoords[pol[alive]]
                u = np.einsum("kc,kcm->km", w[alive], uc)
                pa = pts[alive]
                g = np.asarray(self.problem.inequality(pa, u), dtype=float)
                ok1 = ~(g > 0.0).any(axis=-1)
                xn = self.problem.dynamics(pa[ok1], u[ok1])
                ok2 = self.xgrid.in_domain(xn)

                fail_g = alive[~ok1]
                stepped = alive[ok1]
                dead[fail_g] = True
                dead[stepped[~ok2]] = True
                moved = stepped[ok2]
                ensemble.states[active[moved]] = xn[ok2]
                u_out[active[moved]] = u[ok1][ok2]
            ensemble.feasible[active[dead]] = False
        ensemble.step += 1
        return u_out


# ---------------------------------------------------------------------------
# convenience wrappers (build a transient engine when none is supplied)
# ---------------------------------------------------------------------------


def backward_step(
    problem: ProblemDef,
    xgrid: CartesianGrid,
    ugrid: CartesianGrid,
    table: StageTable | None,
    engine: DpEngine | None = None,
    threads: int = 1,
) -> StageTable:
    """One backward recursion step; ``table=None`` seeds the zero field."""
    if engine is None:
        engine = DpEngine(problem, xgrid, ugrid, threads=threads)
    return engine.backward(None if table is None else table.cost)


def forward_step(
    problem: ProblemDef,
    xgrid: CartesianGrid,
    ugrid: CartesianGrid,
    table: StageTable,
    ensemble: ForwardEnsemble,
    engine: DpEngine | None = None,
) -> np.ndarray:
    """Advance ``ensemble`` one step under ``table``; returns applied controls."""
    if engine is None:
        engine = DpEngine(problem, xgrid, ugrid)
    return engine.forward(ensemble, table)


def apply_policy(
    problem: ProblemDef,
    xgrid: CartesianGrid,
    ugrid: CartesianGrid,
    table: StageTable,
    x: np.ndarray,
) -> tuple[str, np.ndarray | None, np.ndarray | None]:
    """One closed-loop step from a single state.

    Returns:
        ``(status, u, x_next)``.  ``status`` is ``"ok"`` on success, else one
        of ``"policy_undefined"``, ``"constraint_violated"``,
        ``"left_domain"`` naming the first failed check; ``u``/``x_next`` are
        ``None`` from the failed check onward.
    """
    x = np.asarray(x, dtype=float).reshape(xgrid.ndim)
    idx, w, inside = xgrid.locate_cells(x.reshape(1, -1))
    if not inside[0]:
        return STEP_POLICY, None, None
    pol = table.policy[idx[0]]
    if ((pol == INFEASIBLE) & (w[0] > 0.0)).any():
        return STEP_POLICY, None, None
    u = np.einsum("c,cm->m", w[0], ugrid.node_coords()[pol])
    g = np.asarray(problem.inequality(x, u), dtype=float)
    if (g > 0.0).any():
        return STEP_CONSTRAINT, u, None
    xn = np.asarray(problem.dynamics(x, u), dtype=float).reshape(xgrid.ndim)
    if not xgrid.in_domain(xn):
        return STEP_DOMAIN, u, None
    return STEP_OK, u, xn
