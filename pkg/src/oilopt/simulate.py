"""Monte Carlo cross-check: Euler paths of the controlled system.

Each path gets its own child random stream (SeedSequence spawning), so
chunked or parallel evaluation cannot change any number. Per path the draw
script is fixed: regime chain first (exact exponential holding times),
then the jump count over the whole window, jump times, jump sizes, and
finally one normal per Euler step. The estimator reduction is a fixed-order
pairwise sum over the path index.

The applied extraction rate is min(policy rate, Y/dt): a step may not
extract more than the remaining reserve, which keeps the booked revenue
consistent with the admissibility constraint Y >= 0. The recorded u is the
applied rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import GridField
from .model import MarketModel, terminal_value


def simulate_regime_chain(generator: np.ndarray, start_regime: int, horizon: float,
                          rng: np.random.Generator, t0: float = 0.0):
    """Exact jump-chain simulation on [t0, horizon].

    Returns (times, states): times[0] = t0 with states[0] = start_regime,
    later entries are the switch instants and the regimes entered there.
    """
    Q = np.asarray(generator, dtype=float)
    M = Q.shape[0]
    if not (0 <= start_regime < M):
        raise ValueError(f"start regime {start_regime} out of range for {M} regimes")
    times = [float(t0)]
    states = [int(start_regime)]
    t, i = float(t0), int(start_regime)
    while True:
        rate = -Q[i, i]
        if rate <= 0.0:
            break
        t = t + rng.exponential(1.0 / rate)
        if t >= horizon:
            break
        probs = Q[i].copy()
        probs[i] = 0.0
        probs = probs / rate
        i = int(rng.choice(M, p=probs))
        times.append(t)
        states.append(i)
    return np.asarray(times), np.asarray(states, dtype=np.int64)


@dataclass
class PathRecord:
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    regime: np.ndarray
    u: np.ndarray  # applied extraction rate over [t_n, t_n+dt); 0 in the last slot
    discounted_profit: np.ndarray  # cumulative running profit, discounted to s0
    terminal_contribution: float
    total_payoff: float
    n_jumps: int
    clamp_count: int


@dataclass
class EstimateReport:
    mean: float
    std_error: float
    n_paths: int
    seed: int | None
    antithetic: bool
    dt: float
    diagnostics: dict


def _policy_callable(policy, model):
    if isinstance(policy, GridField):
        g = policy.grid
        vals = policy.values

        def lookup(t, x, y, regime):
            si, xi, yi = g.nearest_indices(t, x, y)
            return vals[regime, si, xi, yi]

        return lookup
    if callable(policy):
        return lambda t, x, y, regime: np.asarray(policy(t, x, y, regime), dtype=float)
    raise TypeError("policy must be a GridField or a callable (t, x, y, regime) -> u")


def _draw_path_inputs(model: MarketModel, s0, i0, horizon, n_steps, dt, stream):
    """Fixed per-path draw script; returns everything the stepper needs."""
    rng = np.random.default_rng(stream)
    d = model.dynamics
    times, states = simulate_regime_chain(model.generator, i0, horizon, rng, t0=s0)
    gamma_total = model.measure.total_mass
    if gamma_total > 0.0:
        n_jumps = int(rng.poisson(gamma_total * (horizon - s0)))
    else:
        n_jumps = 0
    if n_jumps:
        jump_times = np.sort(rng.uniform(s0, horizon, size=n_jumps))
        jump_sizes = model.measure.sample_jumps(rng, n_jumps)
    else:
        jump_times = np.empty(0)
        jump_sizes = np.empty(0)
    normals = rng.standard_normal(n_steps)
    # regime code at the start of every step
    step_starts = s0 + dt * np.arange(n_steps)
    codes = states[np.searchsorted(times, step_starts, side="right") - 1].astype(np.int8)
    # per-step jump aggregation, exact per-event compounding
    jump_mult = None
    jump_add = None
    if n_jumps:
        ev_codes = states[np.searchsorted(times, jump_times, side="right") - 1]
        idx = np.minimum(((jump_times - s0) / dt).astype(int), n_steps - 1)
        gammas = np.asarray(d.jump_scale)[ev_codes]
        if model.jump_convention == "proportional":
            jump_mult = np.ones(n_steps)
            for i_ev in range(n_jumps):
                jump_mult[idx[i_ev]] *= 1.0 + gammas[i_ev] * jump_sizes[i_ev]
        else:
            jump_add = np.zeros(n_steps)
            for i_ev in range(n_jumps):
                jump_add[idx[i_ev]] += gammas[i_ev] * jump_sizes[i_ev]
    return codes, normals, jump_mult, jump_add, n_jumps


def _simulate_block(model, policy_fn, start, dt_target, streams, antithetic=False,
                    record=False):
    """Advance all paths of one block together; per-path streams, shared clock."""
    s0, x0, y0, i0 = start
    e = model.economics
    d = model.dynamics
    horizon = e.horizon
    n_steps = max(1, int(round((horizon - s0) / dt_target)))
    dt = (horizon - s0) / n_steps
    n = len(streams)
    codes = np.empty((n, n_steps), dtype=np.int8)
    normals = np.empty((n, n_steps))
    jump_mult = None
    jump_add = None
    n_jumps = np.zeros(n, dtype=np.int64)
    for p, stream in enumerate(streams):
        c, z, jm, ja, nj = _draw_path_inputs(model, s0, i0, horizon, n_steps, dt, stream)
        codes[p], normals[p], n_jumps[p] = c, z, nj
        if jm is not None:
            if jump_mult is None:
                jump_mult = np.ones((n, n_steps))
            jump_mult[p] = jm
        if ja is not None:
            if jump_add is None:
                jump_add = np.zeros((n, n_steps))
            jump_add[p] = ja
    if antithetic:
        normals = np.concatenate([normals, -normals], axis=0)
        codes = np.concatenate([codes, codes], axis=0)
        if jump_mult is not None:
            jump_mult = np.concatenate([jump_mult, jump_mult], axis=0)
        if jump_add is not None:
            jump_add = np.concatenate([jump_add, jump_add], axis=0)
        n_jumps = np.concatenate([n_jumps, n_jumps])
        n = 2 * n

    mu = np.asarray(d.mu)
    sig = np.asarray(d.sigma)
    gam = np.asarray(d.jump_scale)
    r = d.discount_rate
    comp_drift = model.measure.compensator_drift()
    sqrt_dt = math.sqrt(dt)
    proportional = model.jump_convention == "proportional"

    X = np.full(n, float(x0))
    Y = np.full(n, float(y0))
    payoff = np.zeros(n)
    clamps = np.zeros(n, dtype=np.int64)
    if record:
        rec_x = np.empty((n, n_steps + 1))
        rec_y = np.empty((n, n_steps + 1))
        rec_u = np.zeros((n, n_steps + 1))
        rec_profit = np.zeros((n, n_steps + 1))
        rec_x[:, 0], rec_y[:, 0] = X, Y

    for step in range(n_steps):
        t = s0 + step * dt
        disc = math.exp(-r * (t - s0))
        alpha = codes[:, step].astype(np.int64)
        u_pol = np.asarray(policy_fn(t, X, Y, alpha), dtype=float)
        u_app = np.clip(np.minimum(u_pol, Y / dt), 0.0, e.u_max)
        profit = model.price(X) * u_app - (
            e.fixed_cost + e.marginal_cost * u_app * (e.reserve_slope * Y + e.reserve_offset)
        )
        payoff += disc * profit * dt
        compensator = gam[alpha] * X * comp_drift if proportional else gam[alpha] * comp_drift
        drift = d.kappa * (mu[alpha] - X) - compensator
        X = X + drift * dt + sig[alpha] * sqrt_dt * normals[:, step]
        if jump_mult is not None:
            X = X * jump_mult[:, step]
        if jump_add is not None:
            X = X + jump_add[:, step]
        neg = X < 0.0
        if np.any(neg):
            clamps += neg
            X = np.where(neg, 0.0, X)
        Y = np.maximum(Y - u_app * dt, 0.0)
        if record:
            rec_x[:, step + 1], rec_y[:, step + 1] = X, Y
            rec_u[:, step] = u_app
            rec_profit[:, step + 1] = payoff

    disc_T = math.exp(-r * (horizon - s0))
    term = disc_T * np.asarray(terminal_value(model, X, Y), dtype=float)
    total = payoff + term
    out = {
        "payoff": total,
        "running": payoff,
        "terminal": term,
        "n_jumps": n_jumps,
        "clamps": clamps,
        "dt": dt,
        "n_steps": n_steps,
    }
    if record:
        out["record"] = (rec_x, rec_y, rec_u, rec_profit, codes)
    return out


def simulate_path(model: MarketModel, policy, start, dt, seed_or_stream) -> PathRecord:
    """One fully recorded path. start = (s0, x0, y0, regime0)."""
    _validate_start(model, start, dt)
    policy_fn = _policy_callable(policy, model)
    if isinstance(seed_or_stream, np.random.SeedSequence):
        stream = seed_or_stream
    else:
        stream = np.random.SeedSequence(seed_or_stream)
    res = _simulate_block(model, policy_fn, start, dt, [stream], record=True)
    rec_x, rec_y, rec_u, rec_profit, codes = res["record"]
    s0 = start[0]
    n_steps = res["n_steps"]
    times = s0 + res["dt"] * np.arange(n_steps + 1)
    regimes = np.empty(n_steps + 1, dtype=np.int64)
    regimes[:n_steps] = codes[0]
    regimes[n_steps] = codes[0, -1]
    return PathRecord(
        times=times,
        x=rec_x[0],
        y=rec_y[0],
        regime=regimes,
        u=rec_u[0],
        discounted_profit=rec_profit[0],
        terminal_contribution=float(res["terminal"][0]),
        total_payoff=float(res["payoff"][0]),
        n_jumps=int(res["n_jumps"][0]),
        clamp_count=int(res["clamps"][0]),
    )


def estimate_value(model: MarketModel, policy, start, n_paths: int, dt: float,
                   seed: int, antithetic: bool = False,
                   chunk_size: int = 512) -> EstimateReport:
    """Mean payoff under the policy with a standard error.

    Antithetic pairing shares each stream's chain and jumps between the
    +normals and -normals members and treats the pair average as one sample.
    """
    _validate_start(model, start, dt)
    if n_paths < 2:
        raise ValueError("n_paths must be at least 2 for a standard error")
    if antithetic and n_paths % 2:
        raise ValueError("antithetic estimation needs an even n_paths")
    policy_fn = _policy_callable(policy, model)
    n_streams = n_paths // 2 if antithetic else n_paths
    streams = np.random.SeedSequence(seed).spawn(n_streams)
    if antithetic:
        plus = np.empty(n_streams)
        minus = np.empty(n_streams)
    payoffs = np.empty(n_paths)
    jumps = np.empty(n_streams, dtype=np.int64)
    clamps = np.empty(n_streams, dtype=np.int64)
    for lo in range(0, n_streams, chunk_size):
        chunk = streams[lo : lo + chunk_size]
        res = _simulate_block(model, policy_fn, start, dt, chunk, antithetic=antithetic)
        k = len(chunk)
        if antithetic:
            plus[lo : lo + k] = res["payoff"][:k]
            minus[lo : lo + k] = res["payoff"][k:]
        else:
            payoffs[lo : lo + k] = res["payoff"]
        jumps[lo : lo + k] = res["n_jumps"][:k]
        clamps[lo : lo + k] = res["clamps"][:k]
    if antithetic:
        samples = 0.5 * (plus + minus)
        payoffs[0::2] = plus
        payoffs[1::2] = minus
    else:
        samples = payoffs
    mean = float(np.sum(samples) / samples.size)
    sd = float(np.std(samples, ddof=1))
    se = sd / math.sqrt(samples.size)
    return EstimateReport(
        mean=mean,
        std_error=se,
        n_paths=n_paths,
        seed=seed,
        antithetic=antithetic,
        dt=dt,
        diagnostics={
            "mean_jumps_per_path": float(np.mean(jumps)),
            "paths_with_price_clamp": int(np.count_nonzero(clamps)),
            "total_price_clamps": int(np.sum(clamps)),
            "n_steps": int(round((model.economics.horizon - start[0]) / dt)),
        },
    )


def _validate_start(model, start, dt):
    s0, x0, y0, i0 = start
    e = model.economics
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not (0.0 <= s0 < e.horizon):
        raise ValueError(f"start time {s0} outside [0, {e.horizon})")
    if x0 < 0:
        raise ValueError(f"start price state {x0} must be nonnegative")
    if not (0.0 <= y0 <= e.reserve_capacity):
        raise ValueError(f"start reserve {y0} outside [0, {e.reserve_capacity}]")
    if not (0 <= int(i0) < model.n_regimes):
        raise ValueError(f"start regime {i0} out of range")


def analytic_oracle(model: MarketModel, s: float, x: float, y: float) -> float:
    """Closed-form value for the restricted no-action configuration.

    Requires a single regime, no jumps, u_max = 0, the linear price map and
    zero fixed cost, where the value is the discounted expected settlement:

        e^{-r(T-s)} (K - y) (mu + (x - mu) e^{-kappa(T-s)} - m_T).
    """
    e, d = model.economics, model.dynamics
    problems = []
    if model.n_regimes != 1:
        problems.append("a single regime")
    if model.measure.total_mass != 0.0:
        problems.append("a zero-mass jump measure")
    if e.u_max != 0.0:
        problems.append("u_max = 0")
    if model.price_kind != "linear":
        problems.append("the linear price map")
    if e.fixed_cost != 0.0:
        problems.append("zero fixed cost")
    if problems:
        raise ValueError("analytic oracle requires " + ", ".join(problems))
    if not (0.0 <= s <= e.horizon):
        raise ValueError(f"time {s} outside [0, {e.horizon}]")
    tau = e.horizon - s
    r, kappa, mu = d.discount_rate, d.kappa, d.mu[0]
    return math.exp(-r * tau) * (e.reserve_capacity - y) * (
        mu + (x - mu) * math.exp(-kappa * tau) - e.terminal_offset
    )
