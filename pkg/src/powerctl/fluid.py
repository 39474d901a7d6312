"""Mean-field dynamics: discrete map, RK4 flow, closed forms, bias cost.

The population measure m follows dm/dt = U(s) m between control switches.
Threshold controllers switch on the full-queue good-channel mass m4; the
integrator locates each switching time by bisection. On the switching
surface itself the motion follows the clipped equivalent control: the duty
cycle that freezes m4 when the passive field pushes up and the active
field pushes down (a sliding arc), saturating to the pure control whose
field carries the state off the surface otherwise. The clipped control is
continuous in the state, so surface arcs need no special chatter handling.

Instantaneous cost is the time-sharing form

    c(m, s) = s * theta * n0 / (1 - theta * m4) + lam * (m2 + m4),

which agrees with the bang-bang cost at s in {0, 1} and prices a sliding
arc at the duty-cycle average of the two pure controls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonConvergent, StepTooLarge
from .kernel import KernelTables, drift_matrix, drift_matrix_4state
from .model import ModelParams, require_good_bad, validate_measure

_SIMPLEX_TOL = 1e-9
_EVENT_TIME_TOL = 1e-10
_SURFACE_TOL = 1e-9


@dataclass
class Trajectory:
    """Sampled controlled path: states, controls in effect, running cost."""

    t: np.ndarray
    m: np.ndarray
    s4: np.ndarray
    inst_cost: np.ndarray

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("t,m1,m2,m3,m4,s4,inst_cost\n")
            for i in range(len(self.t)):
                row = [self.t[i], *self.m[i], self.s4[i], self.inst_cost[i]]
                fh.write(",".join(f"{x:.12g}" for x in row) + "\n")


def instantaneous_cost(m, s4: float, params: ModelParams) -> float:
    """Cost rate at measure m under activation fraction s4 (time-sharing form)."""
    m = np.asarray(m, dtype=float)
    power = s4 * params.theta * params.n0 / (1.0 - params.theta * m[3])
    return power + params.lam * (m[1] + m[3])


def discrete_step(m, s4: float, params: ModelParams) -> np.ndarray:
    """One slot of the fluid recursion m' = (I + U(s4)) m."""
    m = np.asarray(m, dtype=float)
    return m + drift_matrix_4state(s4, params) @ m


def discrete_step_general(
    m, g, params: ModelParams, tables: KernelTables | None = None
) -> np.ndarray:
    """One slot of the fluid recursion with a full per-class success profile."""
    m = np.asarray(m, dtype=float)
    return m + drift_matrix(g, params, tables) @ m


def passive_trajectory_closed_form(m0, t: float, params: ModelParams) -> np.ndarray:
    """State at time t of the uncontrolled flow started at m0.

    Closed-form solution of dm/dt = U(0) m for the GOOD/BAD unit-buffer
    system; m2 follows from conservation of mass.
    """
    require_good_bad(params)
    b0, b1 = params.beta
    rho = params.rho
    m1, m2, m3, m4 = np.asarray(m0, dtype=float)
    et = np.exp(-t)
    ert = np.exp(-rho * t)
    m1_t = (b1 * m1 - b0 * m3) * et + b0 * (m1 + m3) * ert
    m3_t = (b0 * m3 - b1 * m1) * et + b1 * (m1 + m3) * ert
    m4_t = b1 * (1.0 + et * (m1 + m3 - 1.0)) + et * m4 - (m1 + m3) * b1 * ert
    m2_t = 1.0 - m1_t - m3_t - m4_t
    return np.array([m1_t, m2_t, m3_t, m4_t])


class _FluidSystem:
    """RK4 stepping on dm/dt = U(s) m with cost accumulation.

    The cost coordinate J satisfies dJ/dt = c(m, s) - cost_offset and is
    advanced through the same RK4 stages as m.
    """

    def __init__(self, params: ModelParams, cost_offset: float = 0.0):
        require_good_bad(params)
        self.params = params
        self.u0 = drift_matrix_4state(0.0, params)
        self.u1 = drift_matrix_4state(1.0, params)
        self.du = self.u1 - self.u0
        self.cost_offset = cost_offset

    def control_fields(self, m):
        """m4-components of the passive and active drift at m."""
        return float(self.u0[3] @ m), float(self.u1[3] @ m)

    def clipped_equivalent_control(self, m) -> float:
        """Duty cycle freezing m4, saturated to the escaping pure control."""
        phi0, phi1 = self.control_fields(m)
        denom = phi0 - phi1
        if denom <= 0.0:
            # both fields push the same way; follow the active one upward
            return 1.0 if phi1 > 0.0 else 0.0
        return min(1.0, max(0.0, phi0 / denom))

    def rhs(self, m, s):
        dm = self.u0 @ m + s * (self.du @ m)
        dj = instantaneous_cost(m, s, self.params) - self.cost_offset
        return dm, dj

    def rk4_step(self, m, j, h, control_of):
        """One classic RK4 step; ``control_of`` maps a stage state to s."""
        k1m, k1j = self.rhs(m, control_of(m))
        m2 = m + 0.5 * h * k1m
        k2m, k2j = self.rhs(m2, control_of(m2))
        m3 = m + 0.5 * h * k2m
        k3m, k3j = self.rhs(m3, control_of(m3))
        m4 = m + h * k3m
        k4m, k4j = self.rhs(m4, control_of(m4))
        m_new = m + (h / 6.0) * (k1m + 2.0 * k2m + 2.0 * k3m + k4m)
        j_new = j + (h / 6.0) * (k1j + 2.0 * k2j + 2.0 * k3j + k4j)
        return m_new, j_new

    def check_simplex(self, m):
        err = abs(float(m.sum()) - 1.0)
        if err > _SIMPLEX_TOL or float(m.min()) < -_SIMPLEX_TOL:
            raise StepTooLarge(
                f"simplex violated: sum error {err:.3e}, min entry {m.min():.3e}"
            )
        return m / m.sum()


def _bisect_time(step_fn, predicate, h):
    """Largest tau in [0, h] with predicate(step_fn(tau)) False, to 1e-10."""
    lo, hi = 0.0, h
    while hi - lo > _EVENT_TIME_TOL:
        mid = 0.5 * (lo + hi)
        if predicate(step_fn(mid)):
            hi = mid
        else:
            lo = mid
    return lo


class _ThresholdDriver:
    """Arc-by-arc control resolution for a threshold-on-m4 policy.

    Off the surface the control is frozen per arc and crossings are located
    by bisection. On the surface (reached exactly via a crossing event) the
    clipped equivalent control takes over until the state escapes.
    """

    BANG = "bang"
    SLIDE = "slide"

    def __init__(self, system: _FluidSystem, pi: float):
        self.sys = system
        self.pi = pi
        self.mode = self.BANG
        self.control = 0.0

    def resolve_mode(self, m):
        e = m[3] - self.pi
        if abs(e) <= _SURFACE_TOL:
            self.mode = self.SLIDE
        else:
            self.mode = self.BANG
            self.control = 1.0 if e > 0.0 else 0.0

    def snap(self, m):
        """Project onto the surface, absorbing the correction in m2."""
        m = m.copy()
        m[1] += m[3] - self.pi
        m[3] = self.pi
        return m

    def current_s(self, m) -> float:
        if self.mode == self.SLIDE:
            return self.sys.clipped_equivalent_control(m)
        return self.control

    def advance(self, m, j, h):
        """Move one step of size at most h; returns (m, j, dt_done)."""
        if self.mode == self.BANG:
            a = self.control
            m_new, j_new = self.sys.rk4_step(m, j, h, lambda x: a)
            crossed = lambda x: (x[3] > self.pi) != (a > 0.5)
            if crossed(m_new):
                stepper = lambda tau: self.sys.rk4_step(m, j, tau, lambda x: a)[0]
                tau = _bisect_time(stepper, crossed, h)
                self.mode = self.SLIDE
                if tau <= _EVENT_TIME_TOL:
                    # crossing at the arc start: slide immediately
                    m = self.snap(m)
                else:
                    m_new, j_new = self.sys.rk4_step(m, j, tau, lambda x: a)
                    return self.snap(m_new), j_new, tau
            else:
                return m_new, j_new, h
        # sliding arc: the clipped equivalent control is continuous in the
        # state, so the step needs no event handling of its own
        m_new, j_new = self.sys.rk4_step(m, j, h, self.sys.clipped_equivalent_control)
        if abs(m_new[3] - self.pi) > _SURFACE_TOL:
            self.mode = self.BANG
            self.control = 1.0 if m_new[3] > self.pi else 0.0
        return m_new, j_new, h


class _CallableDriver:
    """Piecewise-constant control from an arbitrary policy function."""

    def __init__(self, system: _FluidSystem, policy):
        self.sys = system
        self.policy = policy
        self.control = 0.0

    def resolve_mode(self, m):
        self.control = float(self.policy(m))

    def current_s(self, m) -> float:
        return self.control

    def advance(self, m, j, h):
        a = self.control
        m_new, j_new = self.sys.rk4_step(m, j, h, lambda x: a)
        if float(self.policy(m_new)) != a:
            stepper = lambda tau: self.sys.rk4_step(m, j, tau, lambda x: a)[0]
            changed = lambda x: float(self.policy(x)) != a
            tau = _bisect_time(stepper, changed, h)
            tau = max(tau, _EVENT_TIME_TOL)
            m_new, j_new = self.sys.rk4_step(m, j, tau, lambda x: a)
            self.control = float(self.policy(m_new))
            return m_new, j_new, tau
        return m_new, j_new, h


def _make_driver(system: _FluidSystem, policy):
    if hasattr(policy, "pi"):
        return _ThresholdDriver(system, float(policy.pi))
    return _CallableDriver(system, policy)


def integrate(m0, policy, horizon: float, params: ModelParams, dt: float = 0.01) -> Trajectory:
    """Integrate the controlled fluid from m0 for the given horizon.

    ``policy`` is either a threshold policy object (attribute ``pi``) or a
    callable m -> s4. Classic RK4 with step dt; control switches are
    located by bisection and treated as arc boundaries, so the control is
    piecewise constant (or the sliding duty cycle) between events.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    system = _FluidSystem(params)
    driver = _make_driver(system, policy)
    m = validate_measure(m0).copy()
    driver.resolve_mode(m)
    t = 0.0
    s_now = driver.current_s(m)
    ts, ms = [t], [m.copy()]
    ss, cs = [s_now], [instantaneous_cost(m, s_now, params)]
    while t < horizon - 1e-15:
        h = min(dt, horizon - t)
        m, _, done = driver.advance(m, 0.0, h)
        m = system.check_simplex(m)
        t += done
        s_now = driver.current_s(m)
        ts.append(t)
        ms.append(m.copy())
        ss.append(s_now)
        cs.append(instantaneous_cost(m, s_now, params))
    return Trajectory(
        t=np.array(ts), m=np.array(ms), s4=np.array(ss), inst_cost=np.array(cs)
    )


def bias_cost(
    m0,
    policy,
    e_star: float,
    params: ModelParams,
    dt: float = 0.01,
    t_max: float = 1e5,
    m_star=None,
) -> float:
    """Integral of (cost - e_star) along the closed-loop path from m0.

    Stops once the state is within 1e-9 (L1) of the target equilibrium and
    the cost rate within 1e-10 of e_star. If instead the path settles at an
    equilibrium with a different cost, the constant tail up to t_max is
    added analytically and NonConvergent (carrying the value) is raised;
    likewise when t_max is hit outright.
    """
    from .equilibrium import optimal_equilibrium

    if m_star is None:
        m_star = optimal_equilibrium(params).m_star
    m_star = np.asarray(m_star, dtype=float)
    system = _FluidSystem(params, cost_offset=e_star)
    driver = _make_driver(system, policy)
    m = validate_measure(m0).copy()
    driver.resolve_mode(m)
    t, j = 0.0, 0.0
    stalled = 0
    while t < t_max:
        s_now = driver.current_s(m)
        cost_now = instantaneous_cost(m, s_now, params)
        if np.abs(m - m_star).sum() < 1e-9 and abs(cost_now - e_star) < 1e-10:
            return j
        dm, _ = system.rhs(m, s_now)
        if np.abs(dm).sum() < 1e-13:
            stalled += 1
            if stalled >= 3:
                j += (cost_now - e_star) * (t_max - t)
                raise NonConvergent(
                    f"settled at a non-target equilibrium (cost {cost_now:.6g}, "
                    f"target {e_star:.6g})",
                    value=j,
                    t_end=t,
                )
        else:
            stalled = 0
        m, j, done = driver.advance(m, j, dt)
        m = system.check_simplex(m)
        t += done
    raise NonConvergent("time cap hit before convergence", value=j, t_end=t)


def threshold_bias_batch(
    m0,
    thresholds,
    e_star: float,
    m_star,
    params: ModelParams,
    dt: float = 0.01,
    t_max: float = 1e5,
    t_hard: float = 5000.0,
):
    """Bias integrals of many threshold controllers run side by side.

    Grid-search engine: one shared start m0, one trajectory per threshold,
    all advanced in lockstep. Near its own surface each trajectory follows
    the clipped equivalent control (with the state projected onto the
    surface while both fields point inward); elsewhere plain bang-bang
    resolved per RK4 stage. Once a trajectory settles at an equilibrium its
    constant tail up to t_max is added analytically; trajectories whose
    settled cost differs from e_star are marked not converged.

    Returns (values, converged) arrays aligned with ``thresholds``.
    """
    require_good_bad(params)
    taus_all = np.asarray(thresholds, dtype=float)
    nb = len(taus_all)
    u0 = drift_matrix_4state(0.0, params)
    u1 = drift_matrix_4state(1.0, params)
    du = u1 - u0
    u0t, dut = u0.T.copy(), du.T.copy()
    row0, row1 = u0[3], u1[3]
    theta, n0, lam = params.theta, params.n0, params.lam
    m_star = np.asarray(m_star, dtype=float)

    values = np.zeros(nb)
    converged = np.zeros(nb, dtype=bool)
    # working set of still-running trajectories
    live = np.arange(nb)
    taus = taus_all.copy()
    m = np.tile(np.asarray(m0, dtype=float), (nb, 1))
    j = np.zeros(nb)
    follow = np.zeros(nb, dtype=bool)

    def stage_rhs(state, following, taus):
        phi0 = state @ row0
        phi1 = state @ row1
        denom = phi0 - phi1
        s_eq = np.where(
            denom > 0.0,
            np.clip(
                np.divide(phi0, denom, out=np.ones_like(phi0), where=denom > 0.0),
                0.0,
                1.0,
            ),
            (phi1 > 0.0).astype(float),
        )
        s = np.where(following, s_eq, (state[:, 3] > taus).astype(float))
        dm = state @ u0t + s[:, None] * (state @ dut)
        cost = s * theta * n0 / (1.0 - theta * state[:, 3]) + lam * (
            state[:, 1] + state[:, 3]
        )
        return dm, cost - e_star

    t = 0.0
    while len(live) and t < t_hard:
        k1m, k1j = stage_rhs(m, follow, taus)
        k2m, k2j = stage_rhs(m + 0.5 * dt * k1m, follow, taus)
        k3m, k3j = stage_rhs(m + 0.5 * dt * k2m, follow, taus)
        k4m, k4j = stage_rhs(m + dt * k3m, follow, taus)
        m = m + (dt / 6.0) * (k1m + 2.0 * k2m + 2.0 * k3m + k4m)
        j = j + (dt / 6.0) * (k1j + 2.0 * k2j + 2.0 * k3j + k4j)
        m /= m.sum(axis=1, keepdims=True)
        t += dt

        # surface-following set for the next step: within one step's reach
        # of the own surface
        phi0 = m @ row0
        phi1 = m @ row1
        e = m[:, 3] - taus
        reach = 1.5 * dt * np.maximum(np.abs(phi0), np.abs(phi1)) + 1e-12
        follow = np.abs(e) <= reach
        # pin followers whose surface is attracting from both sides
        pin = follow & (phi0 > 0.0) & (phi1 < 0.0)
        off = np.where(pin, e, 0.0)
        m[:, 1] += off
        m[:, 3] -= off

        dm_now, dj_now = stage_rhs(m, follow, taus)
        cost_now = dj_now + e_star
        settled = np.abs(dm_now).sum(axis=1) < 1e-12
        if settled.any():
            clean = (
                settled
                & (np.abs(cost_now - e_star) < 1e-10)
                & (np.abs(m - m_star).sum(axis=1) < 1e-9)
            )
            tail = (cost_now - e_star) * (t_max - t)
            slots = live[settled]
            values[slots] = j[settled] + np.where(clean, 0.0, tail)[settled]
            converged[slots] = clean[settled]
            keep = ~settled
            live, taus, m, j, follow = (
                live[keep], taus[keep], m[keep], j[keep], follow[keep],
            )

    if len(live):
        _, dj_now = stage_rhs(m, follow, taus)
        values[live] = j + dj_now * (t_max - t)
    return values, converged
