"""Uniform tensor grid over (time, price state, reserve, regime) and fields on it.

Node coordinates are exactly index*step. Reads outside the box are clamped
to the nearest face (zero-gradient), which is also how the solver treats
its boundaries. Fields store one contiguous float array laid out
regime-major, then time-major: shape (M, n_s, n_x, n_y).
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np


def _node_count(span: float, step: float, name: str) -> int:
    n = int(round(span / step))
    if n < 1 or abs(n * step - span) > 1e-9 * max(1.0, abs(span)):
        raise ValueError(
            f"{name} step {step} must divide the span {span} into whole cells"
        )
    return n + 1


@dataclass(frozen=True)
class Grid4D:
    horizon: float  # T
    price_cap: float  # R, price state lives on [0, R]
    reserve_capacity: float  # K
    time_step: float  # k
    price_step: float  # h
    reserve_step: float  # l
    n_regimes: int

    def __post_init__(self):
        for name, step in (
            ("time", self.time_step),
            ("price", self.price_step),
            ("reserve", self.reserve_step),
        ):
            if not (0.0 < step < 1.0):
                raise ValueError(f"{name} step size must lie in (0,1), got {step}")
        for name, span in (
            ("horizon", self.horizon),
            ("price_cap", self.price_cap),
            ("reserve_capacity", self.reserve_capacity),
        ):
            if span <= 0:
                raise ValueError(f"{name} must be positive, got {span}")
        if self.n_regimes < 1:
            raise ValueError("n_regimes must be at least 1")
        # trigger divisibility validation eagerly
        _ = self.n_s, self.n_x, self.n_y

    @property
    def n_s(self) -> int:
        return _node_count(self.horizon, self.time_step, "time")

    @property
    def n_x(self) -> int:
        return _node_count(self.price_cap, self.price_step, "price")

    @property
    def n_y(self) -> int:
        return _node_count(self.reserve_capacity, self.reserve_step, "reserve")

    @property
    def s_values(self) -> np.ndarray:
        return np.arange(self.n_s) * self.time_step

    @property
    def x_values(self) -> np.ndarray:
        return np.arange(self.n_x) * self.price_step

    @property
    def y_values(self) -> np.ndarray:
        return np.arange(self.n_y) * self.reserve_step

    @property
    def shape(self) -> tuple:
        return (self.n_regimes, self.n_s, self.n_x, self.n_y)

    def nearest_indices(self, t, x, y):
        """Round coordinates to the nearest node, clamped into the box."""
        si = np.clip(np.rint(np.asarray(t) / self.time_step).astype(int), 0, self.n_s - 1)
        xi = np.clip(np.rint(np.asarray(x) / self.price_step).astype(int), 0, self.n_x - 1)
        yi = np.clip(np.rint(np.asarray(y) / self.reserve_step).astype(int), 0, self.n_y - 1)
        return si, xi, yi


def build_grid(
    horizon: float,
    price_cap: float,
    reserve_capacity: float,
    time_step: float,
    price_step: float,
    reserve_step: float,
    n_regimes: int,
) -> Grid4D:
    return Grid4D(
        horizon=horizon,
        price_cap=price_cap,
        reserve_capacity=reserve_capacity,
        time_step=time_step,
        price_step=price_step,
        reserve_step=reserve_step,
        n_regimes=n_regimes,
    )


class GridField:
    """A scalar field on a Grid4D (value function, policy, switching field)."""

    def __init__(self, grid: Grid4D, values: np.ndarray | None = None):
        self.grid = grid
        if values is None:
            values = np.zeros(grid.shape)
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise ValueError(f"field shape {values.shape} != grid shape {grid.shape}")
        self.values = values

    def copy(self) -> "GridField":
        return GridField(self.grid, self.values.copy())

    def neighbor(self, regime, s_idx, x_idx, y_idx, ds=0, dx=0, dy=0):
        """Read a neighboring node with face clamping (zero-gradient edges)."""
        g = self.grid
        return self.values[
            regime,
            int(np.clip(s_idx + ds, 0, g.n_s - 1)),
            int(np.clip(x_idx + dx, 0, g.n_x - 1)),
            int(np.clip(y_idx + dy, 0, g.n_y - 1)),
        ]

    def lookup_interpolated(self, s_idx, x, y_idx, regime):
        """Linear interpolation along the price axis at off-node x, clamped."""
        g = self.grid
        pos = np.clip(float(x) / g.price_step, 0.0, g.n_x - 1.0)
        lo = int(pos)
        hi = min(lo + 1, g.n_x - 1)
        w = pos - lo
        row = self.values[regime, s_idx, :, y_idx]
        return (1.0 - w) * row[lo] + w * row[hi]

    def to_csv(self, path_or_buf, value_name: str = "value", s_indices=None):
        """Write rows ordered s-outer, then x, then y, then regime."""
        g = self.grid
        s_indices = range(g.n_s) if s_indices is None else s_indices
        own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
        fh = open(path_or_buf, "w", newline="") if own else path_or_buf
        # shortest round-trip decimal strings; cached per coordinate for speed
        s_str = [repr(float(v)) for v in g.s_values]
        x_str = [repr(float(v)) for v in g.x_values]
        y_str = [repr(float(v)) for v in g.y_values]
        regs = list(range(g.n_regimes))
        try:
            fh.write(f"s,x,y,regime,{value_name}\n")
            rows = []
            for si in s_indices:
                ss = s_str[si]
                slab = self.values[:, si].tolist()  # (M, n_x, n_y) as Python floats
                for xi in range(g.n_x):
                    xs = x_str[xi]
                    for yi in range(g.n_y):
                        prefix = f"{ss},{xs},{y_str[yi]},"
                        for m in regs:
                            rows.append(f"{prefix}{m},{slab[m][xi][yi]!r}\n")
                fh.write("".join(rows))
                rows.clear()
        finally:
            if own:
                fh.close()

    def to_csv_string(self, value_name: str = "value", s_indices=None) -> str:
        buf = io.StringIO()
        self.to_csv(buf, value_name=value_name, s_indices=s_indices)
        return buf.getvalue()
