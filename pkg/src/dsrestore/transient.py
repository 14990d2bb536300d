"""Seven-state droop-controlled grid-forming inverter and its frequency nadir.

State order is (P, Q, theta, omega, V, I_d, I_q). Powers, voltages and
currents are per-unit; theta in rad, omega in rad/s.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np
from scipy.optimize import root

F0 = 60.0
OMEGA0 = 2.0 * math.pi * F0

# cross-coupling sign of the dq current equations; see InverterParams.dq_convention
_DQ_SIGN = {"stable": -1.0, "printed": 1.0}


class EquilibriumError(RuntimeError):
    """No operating point found for the requested loading."""


@dataclass(frozen=True)
class InverterParams:
    """Aggregate grid-forming inverter of one microgrid.

    ``d_p`` is in rad/s per per-unit power and ``d_q`` in per-unit voltage per
    per-unit power. ``droop_gain`` multiplies the droop error terms of the
    frequency and voltage equations; ``None`` reuses the filter cut-off
    ``omega_c`` as the single gain.

    ``dq_convention`` picks the sign of the omega_0 coupling terms in the
    current equations. ``"printed"`` is +omega_0*I_q / -omega_0*I_d; that
    variant has a positive real eigenvalue at any loaded operating point (the
    frequency droop then pulls the angle the wrong way), so the default
    ``"stable"`` uses the opposite signs.
    """

    omega_c: float = 2.0 * math.pi * 10.0
    d_p: float = 10.0
    d_q: float = 1e-5 * 1e6 / (4160.0 / math.sqrt(3.0))
    omega_set: float = OMEGA0
    omega_0: float = OMEGA0
    v_set: float = 1.0
    v_bus: float = 1.0
    r: float = 0.1
    l: float = 0.002
    droop_gain: float | None = None
    dq_convention: str = "stable"

    def __post_init__(self):
        if not self.omega_c > 0:
            raise ValueError("omega_c must be positive")
        if not self.l > 0:
            raise ValueError("inductance must be positive")
        if self.r < 0:
            raise ValueError("resistance must be non-negative")
        if not (self.omega_set > 0 and self.omega_0 > 0):
            raise ValueError("omega_set and omega_0 must be positive")
        if self.dq_convention not in _DQ_SIGN:
            raise ValueError(f"unknown dq_convention {self.dq_convention!r}")

    @property
    def gain(self) -> float:
        return self.omega_c if self.droop_gain is None else self.droop_gain

    @classmethod
    def from_si(cls, d_p_si: float, d_q_si: float, s_base_va: float, v_base_v: float, **kw) -> "InverterParams":
        """Build from droop gains in rad/s per W and V per var."""
        return cls(d_p=d_p_si * s_base_va, d_q=d_q_si * s_base_va / v_base_v, **kw)


@dataclass(frozen=True)
class InverterState:
    p: float = 0.0
    q: float = 0.0
    theta: float = 0.0
    omega: float = OMEGA0
    v: float = 1.0
    i_d: float = 0.0
    i_q: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.p, self.q, self.theta, self.omega, self.v, self.i_d, self.i_q])

    @classmethod
    def from_array(cls, x) -> "InverterState":
        return cls(*(float(v) for v in x))


@dataclass(frozen=True)
class SimOptions:
    dt: float = 1e-4
    duration: float = 3.0
    omega_band: float = 0.1  # relative band around omega_0 counted as stable

    def validate(self, params: InverterParams):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.duration < 10.0 * 2.0 * math.pi / params.omega_c:
            raise ValueError("duration shorter than ten filter time constants")


@dataclass
class FrequencyTrace:
    t: np.ndarray
    f: np.ndarray
    f_nadir: float
    t_nadir: float
    delta_f_meas: float
    stable: bool
    final_state: InverterState | None = None
    f0: float = F0


def _rhs(x: np.ndarray, p: InverterParams, p_l: float, q_l: float) -> np.ndarray:
    P, Q, th, w, V, i_d, i_q = x
    c, s = math.cos(th), math.sin(th)
    k = _DQ_SIGN[p.dq_convention]
    g = p.gain
    return np.array(
        [
            p.omega_c * (V * c * i_d + V * s * i_q - P),
            p.omega_c * (V * s * i_d - V * c * i_q - Q),
            w - p.omega_0,
            p.omega_c * (p.omega_set - w) + g * p.d_p * (P - p_l),
            p.omega_c * (p.v_set - V) + g * p.d_q * (Q - q_l),
            (V * c - p.v_bus - p.r * i_d) / p.l + k * p.omega_0 * i_q,
            (V * s - p.r * i_q) / p.l - k * p.omega_0 * i_d,
        ]
    )


def state_derivative(s: InverterState, p: InverterParams, p_l: float, q_l: float) -> InverterState:
    """Right-hand side of the seven state equations, returned as a state-shaped record."""
    return InverterState.from_array(_rhs(s.as_array(), p, p_l, q_l))


def _currents(theta: float, v: float, p: InverterParams) -> tuple[float, float]:
    # steady state of the two current equations: a 2x2 linear solve
    k = _DQ_SIGN[p.dq_convention]
    x = k * p.omega_0 * p.l
    a = np.array([[-p.r, x], [-x, -p.r]])
    b = np.array([p.v_bus - v * math.cos(theta), -v * math.sin(theta)])
    i_d, i_q = np.linalg.solve(a, b)
    return float(i_d), float(i_q)


def _power(theta: float, v: float, p: InverterParams) -> tuple[float, float, float, float]:
    i_d, i_q = _currents(theta, v, p)
    c, s = math.cos(theta), math.sin(theta)
    return v * c * i_d + v * s * i_q, v * s * i_d - v * c * i_q, i_d, i_q


def equilibrium_state(p: InverterParams, p_l: float, q_l: float, tol: float = 1e-9, max_iter: int = 200) -> InverterState:
    """Operating point with all seven derivatives zero.

    The currents are eliminated analytically, a two-unknown Newton solve
    finds (theta, V), and the full residual is checked at the end.
    """
    if not math.isclose(p.omega_set, p.omega_0, rel_tol=0.0, abs_tol=1e-12):
        raise ValueError("equilibrium needs omega_set == omega_0 (angle cannot settle otherwise)")

    def f(z):
        th, v = z
        P, Q, _, _ = _power(th, v, p)
        return [P - p_l, p.v_set - v + p.d_q * (Q - q_l)]

    # seed theta on the branch through the origin: scan P(theta) at V = V_set
    grid = np.linspace(-math.pi / 2, math.pi / 2, 721)
    pw = np.array([_power(t, p.v_set, p)[0] for t in grid])
    mid = len(grid) // 2
    slope = pw[mid + 1] - pw[mid - 1]
    side = grid[mid:] if (p_l - pw[mid]) * slope >= 0 else grid[mid::-1]
    vals = pw[mid:] if side[0] <= side[-1] else pw[mid::-1]
    hit = np.flatnonzero((vals - p_l) * (vals[0] - p_l) <= 0)
    th0 = float(side[hit[0]]) if hit.size else 0.0

    sol = root(f, [th0, p.v_set], method="hybr", options={"maxfev": max_iter * 10, "xtol": 1e-14})
    th, v = sol.x
    ok = np.max(np.abs(f(sol.x))) < tol
    if not ok or abs(th) >= math.pi / 2 or not 0.5 < v < 1.5:
        raise EquilibriumError(f"no operating point for P_L={p_l:.4f}, Q_L={q_l:.4f}: {sol.message}")
    P, Q, i_d, i_q = _power(th, v, p)
    state = InverterState(P, Q, th, p.omega_0, v, i_d, i_q)
    resid = np.max(np.abs(_rhs(state.as_array(), p, p_l, q_l)))
    if resid > tol:
        raise EquilibriumError(f"equilibrium residual {resid:.3e} above {tol:.1e}")
    return state


def _rhs_scalar(p: InverterParams, p_l: float, q_l: float):
    """Float-only copy of ``_rhs`` for the integration loop (numpy per step is ~10x slower)."""
    cos, sin = math.cos, math.sin
    wc, w0, wset, vset, vbus = p.omega_c, p.omega_0, p.omega_set, p.v_set, p.v_bus
    gdp, gdq = p.gain * p.d_p, p.gain * p.d_q
    r, inv_l = p.r, 1.0 / p.l
    kw0 = _DQ_SIGN[p.dq_convention] * w0

    def f(P, Q, th, w, V, i_d, i_q):
        vc, vs = V * cos(th), V * sin(th)
        return (
            wc * (vc * i_d + vs * i_q - P),
            wc * (vs * i_d - vc * i_q - Q),
            w - w0,
            wc * (wset - w) + gdp * (P - p_l),
            wc * (vset - V) + gdq * (Q - q_l),
            (vc - vbus - r * i_d) * inv_l + kw0 * i_q,
            (vs - r * i_q) * inv_l - kw0 * i_d,
        )

    return f


def rk4_integrate(x0: np.ndarray, p: InverterParams, p_l: float, q_l: float, dt: float, n_steps: int,
                  band: float = 0.1) -> tuple[np.ndarray, bool]:
    """Classic fixed-step fourth-order Runge-Kutta; returns (states, stable)."""
    f = _rhs_scalar(p, p_l, q_l)
    lo, hi = (1.0 - band) * p.omega_0, (1.0 + band) * p.omega_0
    x = tuple(float(v) for v in x0)
    out = [x]
    h2, h6 = 0.5 * dt, dt / 6.0
    stable = True
    for _ in range(n_steps):
        try:
            k1 = f(*x)
            k2 = f(*[a + h2 * b for a, b in zip(x, k1)])
            k3 = f(*[a + h2 * b for a, b in zip(x, k2)])
            k4 = f(*[a + dt * b for a, b in zip(x, k3)])
        except (OverflowError, ValueError):
            stable = False
            break
        x = tuple(a + h6 * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(x, k1, k2, k3, k4))
        out.append(x)
        if not all(map(math.isfinite, x)) or not lo <= x[3] <= hi:
            stable = False
            break
    return np.array(out), stable


def simulate_load_step(s0: InverterState, p: InverterParams, p_l_new: float, q_l_new: float,
                       opts: SimOptions | None = None, f0: float = F0) -> FrequencyTrace:
    """Integrate from ``s0`` with the new load and record the frequency."""
    opts = opts or SimOptions()
    opts.validate(p)
    n = int(round(opts.duration / opts.dt))
    with np.errstate(over="ignore", invalid="ignore"):
        xs, stable = rk4_integrate(s0.as_array(), p, p_l_new, q_l_new, opts.dt, n, opts.omega_band)
    finite = np.all(np.isfinite(xs), axis=1)
    xs = xs[finite] if not finite.all() else xs
    t = np.arange(len(xs)) * opts.dt
    f = xs[:, 3] / (2.0 * math.pi)
    trace = FrequencyTrace(t, f, math.nan, math.nan, math.nan, stable, InverterState.from_array(xs[-1]), f0)
    trace.f_nadir, trace.t_nadir = frequency_nadir(trace)
    trace.delta_f_meas = delta_f_meas(trace, f0)
    return trace


def frequency_nadir(trace: FrequencyTrace) -> tuple[float, float]:
    """Minimum frequency and the earliest time it occurs."""
    if len(trace.f) == 0:
        raise ValueError("empty trace")
    k = int(np.argmin(trace.f))
    return float(trace.f[k]), float(trace.t[k])


def delta_f_meas(trace: FrequencyTrace, f0: float = F0) -> float:
    """Measured drop ``f0 - f_nadir``, floored at zero."""
    return max(0.0, f0 - frequency_nadir(trace)[0])


def params_to_dict(p: InverterParams) -> dict:
    return asdict(p)


def params_from_dict(d: dict) -> InverterParams:
    known = {f.name for f in fields(InverterParams)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown inverter parameter(s) {sorted(unknown)}")
    return InverterParams(**d)


def with_droop(p: InverterParams, d_p: float) -> InverterParams:
    return replace(p, d_p=d_p)
