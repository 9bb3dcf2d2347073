"""Fixed-point solver for the discounted extraction control problem.

The value function satisfies, node by node,

    r V = D_s V + sup_u [ 0.5 sigma_i^2 D_xx V + kappa (mu_i - x) D_x V
                          - u D_y V + I V + L(t,x,y,u) + Q V ]

with the terminal slice pinned to the settlement payoff. Discretizing on
the tensor grid and collecting the center node's coefficients gives a
per-node balance equation

    (1 + c(x,i;u)) V0 = RHS'(u)                 for the maximizing u,

where RHS' gathers the time neighbor (weight 1/(rk)), the price neighbors
(weights a and b), the reserve neighbor (weight u/(rl), read downward in
upwind mode and upward in paper-faithful mode), the jump destinations
(weights c_j/r), the other regimes (weights q_ij/r), the compensator
correction on the forward price neighbor, and the running profit L/r.

The sweep iterated here solves each node's balance for its own value with
all neighbor values frozen from the previous iterate:

    V0_new = max_u RHS'(u) / (1 + c(u)).

This has exactly the same fixed points as the textbook operator statement
(moving the center term across the equation is an identity whenever
1 + c(u) > 0, which holds unconditionally for the upwind stencil), but
unlike the literal statement every weight in the update is nonnegative, so
the sweep is monotone, and the update is a strict sup-norm contraction on
constants with factor |sum c_j - Gamma| / r. Both RHS'(u) and 1 + c(u) are
affine in u, so the per-node maximum over a control interval is attained
at an endpoint: evaluating u in {0, u_max} is exact (bang-bang).

Two sweep orders are provided. "jacobi" recomputes every node from the
previous full-grid iterate (deterministic, trivially parallel: the update
is a pure function of the frozen iterate, so any worker partition gives
bit-identical results). "backward" walks time slices from the horizon down,
running the same per-node update as an inner fixed point on each slice
until it settles before stepping back; it reaches the same fixed point and
is much faster when the horizon carries many slices.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ConvergenceError, MonotonicityError, NumericalError
from .grid import Grid4D, GridField
from .model import MarketModel, profit_rate, terminal_value, validate_model
from .quadrature import ContractionReport, build_quadrature, check_contraction


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-6
    max_iterations: int = 20000
    mode: str = "upwind"  # or "paper_faithful" stencil choice
    sweep: str = "jacobi"  # or "backward"
    xi: float = 0.01  # quadrature node spacing
    truncation: float = 5.0  # quadrature half-width cap
    dense_controls: int = 0  # 0 -> endpoints {0, u_max}; n>1 -> n-point grid

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ConfigError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be at least 1")
        if self.mode not in ("upwind", "paper_faithful"):
            raise ConfigError(f"mode must be 'upwind' or 'paper_faithful', got {self.mode!r}")
        if self.sweep not in ("jacobi", "backward"):
            raise ConfigError(f"sweep must be 'jacobi' or 'backward', got {self.sweep!r}")
        if self.dense_controls == 1:
            raise ConfigError("dense_controls must be 0 or >= 2")


@dataclass
class ConvergenceReport:
    converged: bool
    iterations: int
    final_residual: float
    residuals: list = field(default_factory=list)
    mode: str = "upwind"
    sweep: str = "jacobi"
    contraction: ContractionReport | None = None
    wall_time: float = 0.0


def scheme_coefficients(model: MarketModel, grid: Grid4D, x: float, regime: int,
                        u: float, scheme, mode: str = "upwind"):
    """Node coefficients (a, b, c) of the discrete balance equation.

    a and b weight the price-up and price-down neighbors, c is the center
    coefficient. In paper-faithful mode the drift sits entirely on the
    forward difference and the sign conditions a > 0, b > 0 are enforced
    here; the upwind mode splits the drift by sign and is unconditionally
    signed correctly.
    """
    d = model.dynamics
    r, h, k, l = d.discount_rate, grid.price_step, grid.time_step, grid.reserve_step
    sig = d.sigma[regime]
    drift = d.kappa * (d.mu[regime] - x)
    diff = sig * sig / (2.0 * r * h * h)
    gamma = d.jump_scale[regime]
    if model.jump_convention == "proportional":
        comp = gamma * x * scheme.compensator_sum
    else:
        comp = gamma * scheme.compensator_sum
    q_off = float(np.sum(model.generator[regime])) - float(model.generator[regime, regime])
    common = (
        1.0 / (r * k)
        + sig * sig / (r * h * h)
        - comp / (r * h)
        + scheme.total_mass / r
        + q_off / r
    )
    if mode == "paper_faithful":
        a = diff + drift / (r * h)
        b = diff
        if a <= 0.0 or b <= 0.0:
            if b <= 0.0:
                detail = "diffusion must be positive for the paper-faithful stencil"
            else:
                bound = sig * sig / (2.0 * d.kappa * (x - d.mu[regime]))
                detail = (
                    f"restore positivity with a finer price step h < "
                    f"sigma^2/(2*kappa*(x-mu)) = {bound:.6g}"
                )
            raise MonotonicityError(
                f"paper-faithful coefficient check failed at x={x:.6g}, regime {regime}: "
                f"a={a:.6g}, b={b:.6g}; {detail}"
            )
        c = common + drift / (r * h) - u / (r * l)
    elif mode == "upwind":
        a = diff + max(drift, 0.0) / (r * h)
        b = diff + max(-drift, 0.0) / (r * h)
        c = common + abs(drift) / (r * h) + u / (r * l)
    else:
        raise ConfigError(f"unknown scheme mode {mode!r}")
    return a, b, c


class DiscreteOperator:
    """Precomputed sweep machinery for one (model, grid, config) triple."""

    def __init__(self, model: MarketModel, grid: Grid4D, cfg: SolverConfig):
        report = validate_model(model)
        if not report.ok:
            raise ConfigError("model validation failed: " + "; ".join(report.violations))
        if grid.n_regimes != model.n_regimes:
            raise ConfigError(
                f"grid carries {grid.n_regimes} regimes but model has {model.n_regimes}"
            )
        self.model = model
        self.grid = grid
        self.cfg = cfg
        self.scheme = build_quadrature(model.measure, cfg.xi, cfg.truncation)
        d = model.dynamics
        self.r = d.discount_rate
        self.contraction = check_contraction(self.scheme, self.r)
        self.contraction.require()

        r, k, h, l = self.r, grid.time_step, grid.price_step, grid.reserve_step
        M, n_x = grid.n_regimes, grid.n_x
        x = grid.x_values
        e = model.economics
        if cfg.dense_controls >= 2:
            self.controls = np.linspace(0.0, e.u_max, cfg.dense_controls)
        else:
            self.controls = np.unique([0.0, e.u_max])

        self.a_vec = np.empty((M, n_x))
        self.b_vec = np.empty((M, n_x))
        self.comp_vec = np.empty((M, n_x))
        self.center_base = np.empty((M, n_x))
        self.jump_mat = []
        comp_sum = self.scheme.compensator_sum
        for m in range(M):
            sig, gamma = d.sigma[m], d.jump_scale[m]
            drift = d.kappa * (d.mu[m] - x)
            diff = sig * sig / (2.0 * r * h * h)
            if model.jump_convention == "proportional":
                comp = gamma * x * comp_sum
            else:
                comp = np.full(n_x, gamma * comp_sum)
            if cfg.mode == "paper_faithful":
                a = diff + drift / (r * h)
                b = np.full(n_x, diff)
                bad = np.flatnonzero((a <= 0.0) | (b <= 0.0))
                if bad.size:
                    # reuse the scalar path for its detailed message
                    scheme_coefficients(
                        model, grid, float(x[bad[0]]), m, 0.0, self.scheme, cfg.mode
                    )
                drift_center = drift / (r * h)
                self.u_sign = -1.0
            else:
                a = diff + np.maximum(drift, 0.0) / (r * h)
                b = diff + np.maximum(-drift, 0.0) / (r * h)
                drift_center = np.abs(drift) / (r * h)
                self.u_sign = 1.0
            q_off = float(np.sum(model.generator[m]) - model.generator[m, m])
            self.a_vec[m] = a
            self.b_vec[m] = b
            self.comp_vec[m] = comp
            self.center_base[m] = (
                1.0 / (r * k)
                + sig * sig / (r * h * h)
                + drift_center
                - comp / (r * h)
                + self.scheme.total_mass / r
                + q_off / r
            )
            self.jump_mat.append(self._build_jump_matrix(m))
        # the u-dependent center addition is +u/(rl) upwind, -u/(rl) paper-faithful
        self.dens = {}
        for u in self.controls:
            den = 1.0 + self.center_base + self.u_sign * u / (r * l)
            if np.any(den <= 0.0):
                m_bad, x_bad = np.unravel_index(int(np.argmin(den)), den.shape)
                raise NumericalError(
                    f"center coefficient 1+c = {den[m_bad, x_bad]:.6g} is nonpositive at "
                    f"x={x[x_bad]:.6g}, regime {m_bad}, u={u:.6g}; the paper-faithful "
                    "reserve stencil cannot be iterated at this control cap and step size"
                )
            self.dens[float(u)] = den
        # running profit per control, shape (n_x, n_y); the cost family is
        # time-independent so one slab per control is enough
        self.profit = {
            float(u): np.asarray(
                profit_rate(model, 0.0, x[:, None], grid.y_values[None, :], float(u))
            )
            for u in self.controls
        }
        self.terminal = np.broadcast_to(
            np.asarray(terminal_value(model, x[:, None], grid.y_values[None, :])),
            (M, n_x, grid.n_y),
        ).copy()

    def _build_jump_matrix(self, m: int):
        """Row x_i of the matrix carries sum_j c_j split linearly onto the
        grid nodes bracketing the jump destination of x_i (clamped)."""
        if self.scheme.c_nodes.size == 0:
            return None
        g = self.grid
        x = g.x_values
        gamma = self.model.dynamics.jump_scale[m]
        P = np.zeros((g.n_x, g.n_x))
        rows = np.arange(g.n_x)
        for z, w in zip(self.scheme.c_nodes, self.scheme.c_weights):
            if self.model.jump_convention == "proportional":
                dest = x + gamma * x * z
            else:
                dest = x + gamma * z
            pos = np.clip(dest / g.price_step, 0.0, g.n_x - 1.0)
            lo = pos.astype(int)
            hi = np.minimum(lo + 1, g.n_x - 1)
            frac = pos - lo
            np.add.at(P, (rows, lo), w * (1.0 - frac))
            np.add.at(P, (rows, hi), w * frac)
        return P

    # -- sweep building blocks ------------------------------------------------

    def _shift_x(self, block, up: bool):
        """Clamped neighbor read along the price axis (axis -2)."""
        out = np.empty_like(block)
        if up:
            out[..., :-1, :] = block[..., 1:, :]
            out[..., -1, :] = block[..., -1, :]
        else:
            out[..., 1:, :] = block[..., :-1, :]
            out[..., 0, :] = block[..., 0, :]
        return out

    def _shift_y(self, block):
        """Reserve neighbor read: downward (y-l) upwind, upward (y+l) otherwise."""
        out = np.empty_like(block)
        if self.u_sign > 0:  # upwind reads y - l
            out[..., 1:] = block[..., :-1]
            out[..., 0] = block[..., 0]
        else:  # paper-faithful reads y + l
            out[..., :-1] = block[..., 1:]
            out[..., -1] = block[..., -1]
        return out

    def _base_block(self, V, m, lo, hi):
        """u-independent part of RHS' for regime m on time slices [lo, hi)."""
        g, d = self.grid, self.model.dynamics
        r, k, h = self.r, g.time_step, g.price_step
        Vt = V[m, lo:hi]
        base = V[m, lo + 1 : hi + 1] / (r * k)
        xp = self._shift_x(Vt, up=True)
        base += (self.a_vec[m][:, None] - (self.comp_vec[m] / (r * h))[:, None]) * xp
        base += self.b_vec[m][:, None] * self._shift_x(Vt, up=False)
        if self.jump_mat[m] is not None:
            base += np.matmul(self.jump_mat[m], Vt) / r
        Q = self.model.generator
        for j in range(g.n_regimes):
            if j != m and Q[m, j] != 0.0:
                base += (Q[m, j] / r) * V[j, lo:hi]
        return base

    def _best_candidate(self, V, m, lo, hi, base, controls=None):
        """max over controls of RHS'(u)/(1+c(u)), u=0 forced on the y=0 face."""
        g = self.grid
        r, l = self.r, g.reserve_step
        controls = self.controls if controls is None else controls
        Vt = V[m, lo:hi]
        yshift = None
        best = None
        for u in controls:
            u = float(u)
            num = base + self.profit_for(u, m) / r
            if u != 0.0:
                if yshift is None:
                    yshift = self._shift_y(Vt)
                num = num + self.u_sign * (u / (r * l)) * yshift
            den = self.den_for(u, m)
            cand = num / den[:, None]
            if best is None:
                best = cand
            elif u == 0.0:
                np.maximum(best, cand, out=best)
            else:
                # extraction is not admissible on an empty reserve
                np.maximum(best[..., 1:], cand[..., 1:], out=best[..., 1:])
        return best

    def profit_for(self, u, m):
        slab = self.profit.get(float(u))
        if slab is None:
            g = self.grid
            slab = np.asarray(
                profit_rate(self.model, 0.0, g.x_values[:, None], g.y_values[None, :], float(u))
            )
        return slab

    def den_for(self, u, m):
        den = self.dens.get(float(u))
        if den is None:
            den = 1.0 + self.center_base + self.u_sign * float(u) / (
                self.r * self.grid.reserve_step
            )
        return den[m]

    # -- public operations -----------------------------------------------------

    def sweep(self, values: np.ndarray, controls=None) -> np.ndarray:
        """One full-grid update; pure function of the input field.

        The output's terminal slice is the settlement payoff no matter what
        the input carries there: the terminal condition is part of the
        operator, not of the iterate.
        """
        g = self.grid
        out = np.empty_like(values)
        hi = g.n_s - 1
        out[:, hi] = self.terminal
        for m in range(g.n_regimes):
            base = self._base_block(values, m, 0, hi)
            out[m, :hi] = self._best_candidate(values, m, 0, hi, base, controls)
        return out

    def sweep_with_policy(self, values: np.ndarray, policy: np.ndarray) -> np.ndarray:
        """One update with the control pinned to a given policy field."""
        g = self.grid
        r, l = self.r, g.reserve_step
        e = self.model.economics
        out = np.empty_like(values)
        hi = g.n_s - 1
        out[:, hi] = self.terminal
        x, y = g.x_values[:, None], g.y_values[None, :]
        for m in range(g.n_regimes):
            base = self._base_block(values, m, 0, hi)
            u = policy[m, :hi]
            L = self.model.price(x) * u - (
                e.fixed_cost + e.marginal_cost * u * (e.reserve_slope * y + e.reserve_offset)
            )
            num = base + L / r + self.u_sign * (u / (r * l)) * self._shift_y(values[m, :hi])
            den = 1.0 + self.center_base[m][:, None] + self.u_sign * u / (r * l)
            if np.any(den <= 0.0):
                raise NumericalError(
                    "center coefficient 1+c nonpositive under the pinned policy; "
                    "the paper-faithful reserve stencil cannot evaluate this control"
                )
            out[m, :hi] = num / den
        return out

    def initial_guess(self) -> np.ndarray:
        """Terminal payoff broadcast across all time slices."""
        g = self.grid
        V = np.empty(g.shape)
        V[:] = self.terminal[:, None, :, :]
        return V


def _check_finite(values, context):
    if not np.all(np.isfinite(values)):
        m, t, xi, yi = np.unravel_index(
            int(np.argmin(np.isfinite(values))), values.shape
        )
        raise NumericalError(
            f"non-finite value during {context} at regime {m}, time index {t}, "
            f"price index {xi}, reserve index {yi}"
        )


def solve(model: MarketModel, grid: Grid4D, cfg: SolverConfig | None = None):
    """Iterate the sweep to the fixed point from the terminal-payoff guess.

    Returns (GridField, ConvergenceReport). Raises ContractionError before
    iterating if the quadrature mass check fails, MonotonicityError if the
    paper-faithful coefficient signs are wrong, and ConvergenceError (with
    the residual history attached) if the iteration cap is reached.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    op = DiscreteOperator(model, grid, cfg)
    V = op.initial_guess()
    residuals = []
    if cfg.sweep == "backward":
        iterations = _solve_backward(op, V, cfg, residuals)
    else:
        iterations = _solve_jacobi(op, V, cfg, residuals)
    report = ConvergenceReport(
        converged=True,
        iterations=iterations,
        final_residual=residuals[-1] if residuals else 0.0,
        residuals=residuals,
        mode=cfg.mode,
        sweep=cfg.sweep,
        contraction=op.contraction,
        wall_time=time.perf_counter() - t0,
    )
    return GridField(grid, V), report


def _solve_jacobi(op, V, cfg, residuals):
    for it in range(1, cfg.max_iterations + 1):
        Vn = op.sweep(V)
        _check_finite(Vn, f"jacobi sweep {it}")
        res = float(np.max(np.abs(Vn - V)))
        residuals.append(res)
        V[:] = Vn
        if res < cfg.tolerance:
            return it
    raise ConvergenceError(
        f"no convergence after {cfg.max_iterations} sweeps; "
        f"last residual {residuals[-1]:.6g}",
        residual_history=residuals,
    )


def _solve_backward(op, V, cfg, residuals):
    """Backward time marching with an inner fixed point per slice.

    The inner tolerance is tightened by r*k relative to the outer one so the
    per-slice solve error stays below the outer tolerance after accumulating
    across slices (the time-neighbor weight is < 1/(1+rk) per slice).
    """
    g = op.grid
    inner_tol = cfg.tolerance * op.r * g.time_step * 0.5
    total_inner = 0
    budget = cfg.max_iterations * max(1, g.n_s - 1)
    W = V  # operate in place, slice by slice
    for t in range(g.n_s - 2, -1, -1):
        # warm start from the next slice's converged values
        W[:, t] = W[:, t + 1]
        while True:
            prev = W[:, t].copy()
            for m in range(g.n_regimes):
                base = op._base_block(W, m, t, t + 1)
                W[m, t : t + 1] = op._best_candidate(W, m, t, t + 1, base)
            total_inner += 1
            change = float(np.max(np.abs(W[:, t] - prev)))
            if change < inner_tol:
                break
            if total_inner > budget:
                raise ConvergenceError(
                    f"backward sweep exceeded {budget} inner iterations at slice {t}; "
                    f"last inner change {change:.6g}",
                    residual_history=residuals,
                )
        _check_finite(W[:, t], f"backward slice {t}")
    # one verification sweep defines the reported residual
    res = float(np.max(np.abs(op.sweep(W) - W)))
    residuals.append(res)
    return total_inner


def dpp_residual(field: GridField, op: DiscreteOperator, n_samples: int = 1000,
                 seed: int = 0):
    """Max one-step recursion mismatch over sampled nodes.

    The mismatch at a node is |V0 - max_u RHS'(u)/(1+c(u))|: the node's
    value against the best of one-step profit plus discounted continuation.
    Terminal nodes are pinned by construction and contribute zero.
    """
    rng = np.random.default_rng(seed)
    g = op.grid
    swept = op.sweep(field.values)
    mism = np.abs(swept - field.values)
    m = rng.integers(0, g.n_regimes, size=n_samples)
    t = rng.integers(0, g.n_s, size=n_samples)
    xi = rng.integers(0, g.n_x, size=n_samples)
    yi = rng.integers(0, g.n_y, size=n_samples)
    picked = mism[m, t, xi, yi]
    worst = int(np.argmax(picked))
    return float(picked[worst]), {
        "node": (int(m[worst]), int(t[worst]), int(xi[worst]), int(yi[worst])),
        "sampled": n_samples,
    }
