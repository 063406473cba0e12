"""V-cycle over arbitrary level stacks (non-nested, nested, polynomial, or the
combined hp hierarchy) and its use as a CG preconditioner."""

import time
from dataclasses import dataclass

import numpy as np

from .fespace import build_space, dirichlet_constraints
from .geosearch import SearchConfig
from .mfoperator import ElasticityOperator, LaplaceOperator
from .solvers import ChebyshevJacobi, CoarseSolver
from .transfer import setup_nested, setup_nonnested, setup_polynomial

V_CYCLE_COMPONENTS = (
    "pre_smooth",
    "residual",
    "restrict",
    "coarse_solve",
    "prolongate",
    "post_smooth",
)


@dataclass
class Level:
    space: object
    operator: object
    smoother: object


class MultigridHierarchy:
    """Ordered levels (coarsest first) with two-level transfers between them.

    Level l is 1-based with l = n_levels the finest, matching the usual
    multigrid convention.  Corrections on coarse levels always start from a
    zero initial guess.
    """

    def __init__(self, levels, transfers, coarse_solver, m1=1, m2=1):
        if len(transfers) != len(levels) - 1:
            raise ValueError("need one transfer per consecutive level pair")
        for i, t in enumerate(transfers):
            if t.coarse_space is not levels[i].space or t.fine_space is not levels[i + 1].space:
                raise ValueError(f"transfer {i} does not connect levels {i} and {i + 1}")
        self.levels = list(levels)
        self.transfers = list(transfers)
        self.coarse_solver = coarse_solver
        self.m1 = int(m1)
        self.m2 = int(m2)
        self.timings = {}

    @property
    def n_levels(self):
        return len(self.levels)

    @property
    def finest(self):
        return self.levels[-1]

    def reset_timers(self):
        self.timings = {}

    def _record(self, level, component, seconds):
        key = (level, component)
        t, c = self.timings.get(key, (0.0, 0))
        self.timings[key] = (t + seconds, c + 1)

    def timing_rows(self):
        """(level, component, seconds, calls) rows, coarsest level first."""
        rows = []
        for (level, comp), (secs, calls) in sorted(self.timings.items()):
            rows.append((level, comp, secs, calls))
        return rows

    def v_cycle(self, f, level=None):
        """One V-cycle for A_l x = f at 1-based level l; returns the correction."""
        l = self.n_levels if level is None else int(level)
        if not 1 <= l <= self.n_levels:
            raise ValueError(f"level must be in [1, {self.n_levels}]")
        return self._v(l, f)

    def _v(self, l, f):
        if l == 1:
            t0 = time.perf_counter()
            x = self.coarse_solver.solve(f)
            self._record(1, "coarse_solve", time.perf_counter() - t0)
            return x
        lev = self.levels[l - 1]
        T = self.transfers[l - 2]

        t0 = time.perf_counter()
        x = lev.smoother.smooth(f, x0=None, n_sweeps=self.m1)
        self._record(l, "pre_smooth", time.perf_counter() - t0)

        t0 = time.perf_counter()
        r = f - lev.operator.apply(x)
        self._record(l, "residual", time.perf_counter() - t0)

        t0 = time.perf_counter()
        r_c = T.restrict(r)
        self._record(l, "restrict", time.perf_counter() - t0)

        delta = self._v(l - 1, r_c)

        t0 = time.perf_counter()
        x = x + T.prolongate(delta)
        self._record(l, "prolongate", time.perf_counter() - t0)

        t0 = time.perf_counter()
        x = lev.smoother.smooth(f, x0=x, n_sweeps=self.m2)
        self._record(l, "post_smooth", time.perf_counter() - t0)
        return x

    def precondition(self, r):
        """z = V-cycle(r) on the finest level, suitable inside CG."""
        return self.v_cycle(r)


@dataclass
class HierarchyConfig:
    """Solver configuration for build_hp_hierarchy."""

    chebyshev_degree: int = 3
    m1: int = 1
    m2: int = 1
    window_ratio: float = 10.0
    safety: float = 1.1
    lanczos_iters: int = 12
    lanczos_seed: int = 0
    coarse_dense_limit: int = 2000
    coarse_cg_reduction: float = 1e-8


def _make_operator(space, problem, lame):
    if problem == "poisson":
        return LaplaceOperator(space)
    if problem == "elasticity":
        if lame is None:
            raise ValueError("elasticity needs lame=(lambda, mu)")
        return ElasticityOperator(space, *lame)
    raise ValueError(f"unknown problem {problem!r}")


def build_hp_hierarchy(meshes, degree, mode="h", nested=False, problem="poisson",
                       dirichlet_ids="all", dirichlet_value=0.0, lame=None,
                       search=None, config=None):
    """Hierarchy over coarse-to-fine meshes, optionally with a polynomial ramp.

    mode "h" uses the meshes as given; mode "hp" prepends Q^1..Q^(degree-1)
    levels on the coarsest mesh below the geometric stack.  nested=True uses
    the fast embedding transfer between meshes (valid only for hierarchies
    built by global refinement); otherwise the point-evaluation transfer is
    set up through the geometric search.
    """
    if mode not in ("h", "hp"):
        raise ValueError("mode must be 'h' or 'hp'")
    if not meshes:
        raise ValueError("need at least one mesh")
    cfg = config or HierarchyConfig()
    search = search or SearchConfig()
    n_components = meshes[0].dim if problem == "elasticity" else 1

    # (degree, mesh, kind of the incoming transfer from the previous level)
    plan = []
    if mode == "hp":
        plan.append((1, meshes[0], None))
        for p in range(2, degree + 1):
            plan.append((p, meshes[0], "poly"))
    else:
        plan.append((degree, meshes[0], None))
    geo_kind = "nested" if nested else "nonnested"
    for m in meshes[1:]:
        plan.append((degree, m, geo_kind))

    levels = []
    transfers = []
    for p, mesh, kind in plan:
        space = build_space(mesh, p, n_components=n_components)
        if dirichlet_ids is not None:
            space.constraints = dirichlet_constraints(space, dirichlet_ids, dirichlet_value)
        op = _make_operator(space, problem, lame)
        smoother = ChebyshevJacobi(
            op,
            degree=cfg.chebyshev_degree,
            window_ratio=cfg.window_ratio,
            safety=cfg.safety,
            n_lanczos=cfg.lanczos_iters,
            seed=cfg.lanczos_seed,
        )
        levels.append(Level(space, op, smoother))
        if kind == "poly":
            transfers.append(setup_polynomial(levels[-2].space, levels[-1].space))
        elif kind == "nested":
            transfers.append(setup_nested(levels[-2].space, levels[-1].space, search))
        elif kind == "nonnested":
            transfers.append(setup_nonnested(levels[-2].space, levels[-1].space, search))
    coarse_solver = CoarseSolver(
        levels[0].operator,
        dense_limit=cfg.coarse_dense_limit,
        cg_reduction=cfg.coarse_cg_reduction,
    )
    return MultigridHierarchy(levels, transfers, coarse_solver, m1=cfg.m1, m2=cfg.m2)
