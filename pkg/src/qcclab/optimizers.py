"""Search machinery shared by the three loops: a named, bounded, scaled
parameter space, a (mu/mu_w, lambda) CMA-ES, an L-BFGS with interpolating
line search, and the gradient-free-to-gradient hybrid.

Optimizers work in the unit box [0, 1]^n defined by the parameter map;
candidates are clipped into the box before evaluation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .goals import finite_difference_gradient


class OptimizerError(ValueError):
    """Invalid optimizer configuration."""


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    value: float
    lower: float
    upper: float
    scale: str = "linear"      # "linear" | "log"

    def __post_init__(self):
        if not self.lower < self.upper:
            raise OptimizerError(f"{self.name}: bounds must satisfy lower < upper")
        if not self.lower <= self.value <= self.upper:
            raise OptimizerError(f"{self.name}: value {self.value} outside bounds")
        if self.scale not in ("linear", "log"):
            raise OptimizerError(f"{self.name}: unknown scale {self.scale!r}")
        if self.scale == "log" and self.lower <= 0:
            raise OptimizerError(f"{self.name}: log scale needs positive bounds")


class ParameterMap:
    """Ordered collection of named parameters with pack/unpack between
    physical values and the optimizer's unit-scaled vector."""

    def __init__(self, specs):
        self.specs = tuple(specs)
        if len({s.name for s in self.specs}) != len(self.specs):
            raise OptimizerError("duplicate parameter names")

    def __len__(self):
        return len(self.specs)

    @property
    def names(self):
        return tuple(s.name for s in self.specs)

    def values(self) -> dict:
        return {s.name: s.value for s in self.specs}

    def to_unit(self, values) -> np.ndarray:
        if isinstance(values, dict):
            values = [values[s.name] for s in self.specs]
        out = np.empty(len(self.specs))
        for i, (s, v) in enumerate(zip(self.specs, values)):
            if s.scale == "log":
                out[i] = (np.log(v) - np.log(s.lower)) / (np.log(s.upper) - np.log(s.lower))
            else:
                out[i] = (v - s.lower) / (s.upper - s.lower)
        return out

    def from_unit(self, unit) -> dict:
        unit = np.asarray(unit, dtype=float)
        out = {}
        for s, u in zip(self.specs, unit):
            if s.scale == "log":
                out[s.name] = float(np.exp(np.log(s.lower)
                                           + u * (np.log(s.upper) - np.log(s.lower))))
            else:
                out[s.name] = float(s.lower + u * (s.upper - s.lower))
        return out

    def current_unit(self) -> np.ndarray:
        return self.to_unit([s.value for s in self.specs])

    def with_values(self, values) -> "ParameterMap":
        if not isinstance(values, dict):
            values = dict(zip(self.names, np.asarray(values, dtype=float)))
        specs = []
        for s in self.specs:
            v = float(values.get(s.name, s.value))
            v = min(max(v, s.lower), s.upper)
            specs.append(ParameterSpec(s.name, v, s.lower, s.upper, s.scale))
        return ParameterMap(specs)


@dataclass(frozen=True)
class HistoryPoint:
    iteration: int
    best_value: float          # best-ever, non-increasing
    batch_value: float         # best of the iteration's own evaluations
    params: dict


@dataclass
class OptimRun:
    history: list = field(default_factory=list)
    evaluations: int = 0
    termination: str = "budget"
    seed: int | None = None
    best_value: float = np.inf
    best_params: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def record(self, iteration, best_value, batch_value, params):
        self.history.append(HistoryPoint(iteration, float(best_value),
                                         float(batch_value), dict(params)))


def _evaluate(objective, x):
    try:
        v = float(objective(x))
    except FloatingPointError:
        return np.inf
    return v if np.isfinite(v) else np.inf


def cma_es(objective, pmap: ParameterMap, population: int, sigma0: float = 0.1,
           budget: int = 10000, seed: int = 0, target: float | None = None,
           stall_iterations: int | None = None, stall_rel: float = 0.01,
           map_fn=map) -> OptimRun:
    """Covariance-matrix-adaptation evolution strategy with weighted
    recombination, cumulative step-size control and rank-1 + rank-mu
    covariance updates (standard defaults as functions of the dimension).

    Non-finite objective values mark the candidate rejected but still count
    against the budget. ``map_fn`` may evaluate a generation concurrently.
    """
    n = len(pmap)
    if population < 4:
        raise OptimizerError("population must be >= 4")
    if budget < population:
        raise OptimizerError("budget must cover at least one generation")
    rng = np.random.default_rng(seed)
    mean = np.clip(pmap.current_unit(), 0.0, 1.0)
    sigma = float(sigma0)

    mu = population // 2
    raw = np.log((population + 1) / 2.0) - np.log(np.arange(1, mu + 1))
    weights = raw / raw.sum()
    mueff = 1.0 / np.sum(weights ** 2)
    cs = (mueff + 2.0) / (n + mueff + 5.0)
    ds = 1.0 + 2.0 * max(0.0, np.sqrt((mueff - 1.0) / (n + 1.0)) - 1.0) + cs
    cc = (4.0 + mueff / n) / (n + 4.0 + 2.0 * mueff / n)
    c1 = 2.0 / ((n + 1.3) ** 2 + mueff)
    cmu = min(1.0 - c1, 2.0 * (mueff - 2.0 + 1.0 / mueff) / ((n + 2.0) ** 2 + mueff))
    chi_n = np.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n ** 2))

    cov = np.eye(n)
    p_sigma = np.zeros(n)
    p_cov = np.zeros(n)
    run = OptimRun(seed=seed, termination="budget")

    iteration = 0
    while run.evaluations + population <= budget:
        iteration += 1
        evals, vecs = np.linalg.eigh(cov)
        evals = np.maximum(evals, 1e-30)
        d_mat = np.sqrt(evals)
        inv_sqrt = vecs @ np.diag(1.0 / d_mat) @ vecs.T
        z = rng.standard_normal((population, n))
        y = z @ (vecs * d_mat).T
        x = np.clip(mean + sigma * y, 0.0, 1.0)
        y = (x - mean) / sigma
        values = np.fromiter(map_fn(lambda xi: _evaluate(objective, xi), x),
                             dtype=float, count=population)
        run.evaluations += population
        order = np.argsort(values)
        batch_best = values[order[0]]
        if batch_best < run.best_value:
            run.best_value = float(batch_best)
            run.best_params = pmap.from_unit(x[order[0]])
        run.record(iteration, run.best_value, batch_best, run.best_params)

        sel = order[:mu]
        y_w = weights @ y[sel]
        mean = np.clip(mean + sigma * y_w, 0.0, 1.0)
        p_sigma = (1.0 - cs) * p_sigma \
            + np.sqrt(cs * (2.0 - cs) * mueff) * (inv_sqrt @ y_w)
        h_sigma = float(np.linalg.norm(p_sigma)
                        / np.sqrt(1.0 - (1.0 - cs) ** (2 * iteration)) / chi_n
                        < 1.4 + 2.0 / (n + 1.0))
        p_cov = (1.0 - cc) * p_cov \
            + h_sigma * np.sqrt(cc * (2.0 - cc) * mueff) * y_w
        rank_mu = (y[sel].T * weights) @ y[sel]
        cov = (1.0 - c1 - cmu) * cov \
            + c1 * (np.outer(p_cov, p_cov) + (1.0 - h_sigma) * cc * (2.0 - cc) * cov) \
            + cmu * rank_mu
        cov = (cov + cov.T) / 2.0
        sigma *= np.exp((cs / ds) * (np.linalg.norm(p_sigma) / chi_n - 1.0))

        if target is not None and run.best_value <= target:
            run.termination = "target"
            break
        if sigma < 1e-12:
            run.termination = "sigma-collapse"
            break
        if stall_iterations and len(run.history) > stall_iterations:
            ref = run.history[-1 - stall_iterations].best_value
            impr = (ref - run.best_value) / max(abs(ref), 1e-12)
            if impr < stall_rel:
                run.termination = "stall"
                break
    return run


def _interpolate_step(a_lo, f_lo, g_lo, a_hi, f_hi):
    # minimizer of the quadratic through (a_lo, f_lo, g_lo) and (a_hi, f_hi)
    denom = f_hi - f_lo - g_lo * (a_hi - a_lo)
    if denom <= 0:
        return 0.5 * (a_lo + a_hi)
    a = a_lo - 0.5 * g_lo * (a_hi - a_lo) ** 2 / denom
    lo, hi = min(a_lo, a_hi), max(a_lo, a_hi)
    width = hi - lo
    return min(max(a, lo + 0.1 * width), hi - 0.01 * width)


def lbfgs(fun_grad, pmap: ParameterMap, memory: int = 10,
          max_iterations: int = 200, gtol: float = 1e-8,
          ftol: float = 1e-14, c1: float = 1e-4, c2: float = 0.9,
          max_evals: int | None = None) -> OptimRun:
    """Limited-memory BFGS on the unit box: two-loop recursion with an
    Armijo/curvature line search using quadratic interpolation; iterates and
    trial points are projected onto the box.

    ``fun_grad(x) -> (value, gradient)``.
    """
    n = len(pmap)
    x = np.clip(pmap.current_unit(), 0.0, 1.0)
    run = OptimRun(termination="max-iterations")

    def eval_fg(xi):
        run.evaluations += 1
        f, g = fun_grad(xi)
        return float(f), np.asarray(g, dtype=float)

    f, g = eval_fg(x)
    run.best_value, run.best_params = f, pmap.from_unit(x)
    run.record(0, f, f, run.best_params)
    s_hist: list = []
    y_hist: list = []

    for it in range(1, max_iterations + 1):
        if max_evals is not None and run.evaluations >= max_evals:
            run.termination = "budget"
            break
        proj_grad = np.where(((x <= 0) & (g > 0)) | ((x >= 1) & (g < 0)), 0.0, g)
        if np.linalg.norm(proj_grad) < gtol:
            run.termination = "gradient"
            break
        q = g.copy()
        alphas = []
        for s, y in reversed(list(zip(s_hist, y_hist))):
            rho = 1.0 / (y @ s)
            a = rho * (s @ q)
            alphas.append((a, rho, s, y))
            q -= a * y
        if y_hist:
            gamma = (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
            q *= gamma
        for a, rho, s, y in reversed(alphas):
            b = rho * (y @ q)
            q += (a - b) * s
        d = -q
        if d @ g > -1e-16 * np.linalg.norm(d) * np.linalg.norm(g):
            d = -g
            s_hist.clear(); y_hist.clear()

        # line search with projection
        step = 1.0
        f0, g0 = f, float(g @ d)
        accepted = False
        x_new = x; f_new = f; g_new = g
        lo_step, lo_f = 0.0, f0
        for _ in range(25):
            x_try = np.clip(x + step * d, 0.0, 1.0)
            if np.linalg.norm(x_try - x) < 1e-15:
                break
            f_try, g_try = eval_fg(x_try)
            if f_try <= f0 + c1 * step * g0 or f_try < f0 - abs(ftol):
                slope = float(g_try @ d)
                x_new, f_new, g_new = x_try, f_try, g_try
                accepted = True
                if abs(slope) <= c2 * abs(g0):
                    break
                if slope > 0:
                    break
                lo_step, lo_f = step, f_try
                step = min(step * 2.0, 1e3)
            else:
                step = _interpolate_step(lo_step, lo_f, g0, step, f_try)
                if step < 1e-14:
                    break
        if not accepted:
            run.termination = "line-search"
            break

        s_vec = x_new - x
        y_vec = g_new - g
        if (s_vec @ y_vec) > 1e-14 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
            s_hist.append(s_vec); y_hist.append(y_vec)
            if len(s_hist) > memory:
                s_hist.pop(0); y_hist.pop(0)
        converged = abs(f - f_new) < ftol * max(1.0, abs(f))
        x, f, g = x_new, f_new, g_new
        if f < run.best_value:
            run.best_value, run.best_params = f, pmap.from_unit(x)
        run.record(it, run.best_value, f, run.best_params)
        if converged:
            run.termination = "ftol"
            break
    return run


def with_fd_gradient(objective, rel_step: float = 1e-6):
    """Wrap a value-only objective as fun_grad via central differences."""
    def fun_grad(x):
        return objective(x), finite_difference_gradient(objective, x, rel_step)
    return fun_grad


def hybrid(objective, pmap: ParameterMap, population: int, seed: int = 0,
           sigma0: float = 0.1, cma_budget: int = 2000,
           stall_iterations: int = 10, stall_rel: float = 0.01,
           cma_target: float | None = None, fun_grad=None,
           lbfgs_iterations: int = 100, gtol: float = 1e-8,
           map_fn=map) -> OptimRun:
    """Gradient-free exploration followed by gradient refinement: CMA-ES
    until its stall policy (or budget) triggers, then L-BFGS from the best
    point. History indices continue across the switch; the switch iteration
    is recorded in ``extra["switch_iteration"]``."""
    stage1 = None
    if cma_budget >= population:
        stage1 = cma_es(objective, pmap, population, sigma0=sigma0,
                        budget=cma_budget, seed=seed, target=cma_target,
                        stall_iterations=stall_iterations, stall_rel=stall_rel,
                        map_fn=map_fn)
        pmap = pmap.with_values(stage1.best_params)
    if fun_grad is None:
        fun_grad = with_fd_gradient(objective)
    stage2 = lbfgs(fun_grad, pmap, max_iterations=lbfgs_iterations, gtol=gtol)

    run = OptimRun(seed=seed)
    offset = 0
    if stage1 is not None:
        run.history.extend(stage1.history)
        run.evaluations += stage1.evaluations
        offset = stage1.history[-1].iteration if stage1.history else 0
        run.extra["cma_termination"] = stage1.termination
    run.extra["switch_iteration"] = offset
    best = stage1.best_value if stage1 else np.inf
    for hp in stage2.history:
        best = min(best, hp.best_value)
        params = hp.params if hp.best_value <= best else run.best_params
        run.record(offset + hp.iteration, best, hp.batch_value, params)
    run.evaluations += stage2.evaluations
    if stage2.best_value <= (stage1.best_value if stage1 else np.inf):
        run.best_value, run.best_params = stage2.best_value, stage2.best_params
    else:
        run.best_value, run.best_params = stage1.best_value, stage1.best_params
    run.termination = stage2.termination
    return run
