"""Newton iteration on the coupled velocity-pressure system.

Each step solves the exact-Jacobian saddle-point update (convection
derivative plus the Smagorinsky directional derivative with its t-term)
by a sparse direct factorization; no preconditioning or relaxation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (
    DiscreteState,
    FlowProblem,
    initial_state,
    reduced_jacobian,
    reduced_residual,
)

__all__ = [
    "NewtonConfig",
    "NewtonTrace",
    "SingularSystemError",
    "linear_solve",
    "solve_stokes",
    "newton_solve",
    "continuation_ramp",
]


class SingularSystemError(RuntimeError):
    """Raised when the sparse factorization reports a singular system."""


@dataclass(frozen=True)
class NewtonConfig:
    epsilon: float = 1e-10           # absolute tolerance on the Euclidean residual norm
    max_iters: int = 30
    initial_guess: str = "stokes"    # "zero" | "stokes" | "supplied"
    divergence_guard: float = 1.0    # growth factor counting as an increase
    re_ramp: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class NewtonTrace:
    residuals: list[float] = field(default_factory=list)
    outcome: str = "running"         # "converged" | "diverged" | "max_iters"

    @property
    def converged(self) -> bool:
        return self.outcome == "converged"

    @property
    def iterations(self) -> int:
        return len(self.residuals) - 1

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("iter,residual_norm\n")
            for i, r in enumerate(self.residuals):
                fh.write(f"{i},{r:.17g}\n")


def linear_solve(matrix: sp.spmatrix, rhs: np.ndarray) -> np.ndarray:
    """Direct sparse solve with a residual check and one refinement pass."""
    mat = sp.csc_matrix(matrix)
    try:
        lu = spla.splu(mat)
    except RuntimeError as exc:  # singular factorization
        raise SingularSystemError(str(exc)) from exc
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("factorization produced non-finite solution")
    scale = float(np.linalg.norm(rhs))
    if scale > 0:
        resid = rhs - mat @ x
        if np.linalg.norm(resid) > 1e-10 * scale:
            x = x + lu.solve(resid)
            resid = rhs - mat @ x
            if np.linalg.norm(resid) > 1e-10 * scale:
                raise SingularSystemError(
                    f"linear solve residual {np.linalg.norm(resid)/scale:.3e} exceeds 1e-10"
                )
    return x


def _apply_update(problem: FlowProblem, state: DiscreteState, delta: np.ndarray) -> None:
    free = problem.dof_map.free
    nf = len(free)
    n_p = problem.disc.n_pressure
    state.u[free] += delta[:nf]
    state.p += delta[nf : nf + n_p]
    state.lam += delta[-1]


def solve_stokes(problem: FlowProblem) -> DiscreteState:
    """Linear Stokes solve (convection and eddy terms dropped); exact in one step."""
    state = initial_state(problem)
    rhs = -reduced_residual(problem, state, with_nonlinear=False)
    jac = reduced_jacobian(problem, state, with_nonlinear=False)
    _apply_update(problem, state, linear_solve(jac, rhs))
    return state


def newton_solve(
    problem: FlowProblem,
    config: NewtonConfig = NewtonConfig(),
    supplied_state: DiscreteState | None = None,
) -> tuple[DiscreteState, NewtonTrace]:
    """Iterate U += delta with the exact Jacobian until the algebraic
    residual drops below epsilon.  Divergence is declared after residual
    growth on 3 consecutive iterations or a blow-up past 1e6 times the
    initial norm; the best iterate is returned either way.
    """
    if config.initial_guess == "zero":
        state = initial_state(problem)
    elif config.initial_guess == "stokes":
        state = solve_stokes(problem)
    elif config.initial_guess == "supplied":
        if supplied_state is None:
            raise ValueError("initial_guess='supplied' needs supplied_state")
        state = supplied_state.copy()
    else:
        raise ValueError(f"unknown initial guess {config.initial_guess!r}")

    trace = NewtonTrace()
    res = reduced_residual(problem, state)
    rnorm = float(np.linalg.norm(res))
    trace.residuals.append(rnorm)
    best = state.copy()
    best_norm = rnorm
    growth_streak = 0

    for it in range(config.max_iters):
        if rnorm <= config.epsilon:
            trace.outcome = "converged"
            return state, trace
        if not np.isfinite(rnorm) or rnorm > 1e6 * max(trace.residuals[0], 1e-300):
            trace.outcome = "diverged"
            return best, trace
        try:
            jac = reduced_jacobian(problem, state)
            delta = linear_solve(jac, -res)
        except SingularSystemError as exc:
            raise SingularSystemError(f"Newton iteration {it}: {exc}") from exc
        _apply_update(problem, state, delta)
        res = reduced_residual(problem, state)
        new_norm = float(np.linalg.norm(res))
        trace.residuals.append(new_norm)
        if np.isfinite(new_norm) and new_norm < best_norm:
            best = state.copy()
            best_norm = new_norm
        growth_streak = growth_streak + 1 if (not np.isfinite(new_norm) or new_norm > config.divergence_guard * rnorm) else 0
        rnorm = new_norm
        if growth_streak >= 3:
            trace.outcome = "diverged"
            return best, trace

    if rnorm <= config.epsilon:
        trace.outcome = "converged"
        return state, trace
    trace.outcome = "max_iters"
    return best, trace


def continuation_ramp(
    problem_for_re,
    re_list,
    config: NewtonConfig = NewtonConfig(),
):
    """Solve a sequence of Reynolds numbers, warm-starting from the last state.

    problem_for_re(re) must build the FlowProblem for one Reynolds number.
    Returns (final_state, {re: trace}); aborts on the first failure, keeping
    the partial traces.
    """
    re_list = list(re_list)
    if not re_list:
        raise ValueError("re_list must not be empty")
    if any(b <= a for a, b in zip(re_list, re_list[1:])):
        raise ValueError("re_list must be strictly increasing")
    traces: dict[float, NewtonTrace] = {}
    state = None
    for i, re in enumerate(re_list):
        problem = problem_for_re(re)
        if i == 0:
            state, trace = newton_solve(problem, config)
        else:
            warm = NewtonConfig(
                epsilon=config.epsilon,
                max_iters=config.max_iters,
                initial_guess="supplied",
                divergence_guard=config.divergence_guard,
            )
            state, trace = newton_solve(problem, warm, supplied_state=state)
        traces[re] = trace
        if not trace.converged:
            break
    return state, traces
