"""Entropy flux, entropy production, and information rates.

All entropies are Wigner differential entropies in nats; rates are nats per
second. For an isotropic single-mode Gaussian state with variance V the
entropy is S = 1 + ln(2 pi) + ln V, so along the conditional trajectory
dS/dt = V'/V, which equals the information rate

    I_dot(V) = Gamma_m (V_uc / V - 1) - 4 eta_det Gamma_qba V.

The stochastic flux and production rates depend on the trajectory only
through theta = V + r.r/2:

    phi_c = Gamma_m - theta (Gamma_m / nbar + 4 Gamma_qba),
    pi_c  = theta (Gamma_m / nbar + 4 Gamma_qba)
            + Gamma_m (V_uc / V - 2) - 4 eta_det Gamma_qba V,

with nbar = n_th + 1/2. Both rates here share the computed theta term, so
their sum cancels it exactly and the balance dS/dt = phi_c + pi_c holds along
every trajectory to round-off, not merely on average.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError, StatisticsError
from .dynamics import TimeGrid, Trajectory
from .model import GaussianState, PhysParams, derive_rates

__all__ = [
    "EntropySeries",
    "EnsembleRates",
    "wigner_entropy",
    "stochastic_rates",
    "theta_rates",
    "information_rate",
    "differential_gain",
    "phonon_noise_rate",
    "unconditional_rates",
    "ness_production_rate",
    "entropy_series",
    "entropy_rate_fd",
    "ensemble_average_rates",
    "energy_currents",
    "write_rates_csv",
]

RATES_CSV_HEADER = "t,phi_c,pi_c,i_dot,g_diff,stderr_phi_c,stderr_pi_c"

_LOG_2PI = math.log(2.0 * math.pi)


def _as_positive(v, what: str):
    v = np.asarray(v, dtype=float)
    if not np.all(v > 0):
        raise DomainError(f"{what} requires variance > 0")
    return v


def wigner_entropy(v):
    """Entropy 1 + ln(2 pi) + ln v of an isotropic Gaussian, in nats."""
    v = _as_positive(v, "wigner_entropy")
    out = 1.0 + _LOG_2PI + np.log(v)
    return float(out) if out.ndim == 0 else out


def theta_rates(theta, v, p: PhysParams):
    """Flux and production rates from theta = V + r.r/2 directly.

    Array-friendly core behind stochastic_rates: theta and v broadcast, and
    the theta term is shared between the two outputs so their sum cancels it
    exactly (the entropy balance holds to round-off along trajectories).
    """
    # u appears with opposite signs in the two rates; compute it once.
    v = _as_positive(v, "stochastic rates")
    rates = derive_rates(p)
    nbar = p.n_th + 0.5
    u = np.asarray(theta, dtype=float) * (p.gamma_m / nbar + 4.0 * p.gamma_qba)
    phi_c = p.gamma_m - u
    pi_c = u + (p.gamma_m * (rates.v_uc / v - 2.0) - 4.0 * rates.gamma_meas * v)
    return phi_c, pi_c


def stochastic_rates(state: GaussianState, p: PhysParams) -> tuple[float, float]:
    """Flux and production rates (phi_c, pi_c) of one conditional state.

    Both are linear in theta = V + r.r/2; phi_c is the rate at which entropy
    leaves the resonator into the thermal and measurement channels, pi_c the
    irreversible production. Their sum is the entropy rate dS/dt.
    """
    phi_c, pi_c = theta_rates(state.theta, state.v, p)
    return float(phi_c), float(pi_c)


def phonon_noise_rate(v, p: PhysParams):
    """Bath contribution Gamma_m (V_uc / v - 1) to the information rate."""
    v = _as_positive(v, "phonon_noise_rate")
    out = p.gamma_m * (derive_rates(p).v_uc / v - 1.0)
    return float(out) if out.ndim == 0 else out


def differential_gain(v, p: PhysParams):
    """Measurement gain -4 eta_det Gamma_qba v, in nats/s.

    Negative because acquiring information contracts the conditional state.
    """
    v = _as_positive(v, "differential_gain")
    out = -4.0 * derive_rates(p).gamma_meas * v
    return float(out) if out.ndim == 0 else out


def information_rate(v, p: PhysParams):
    """Net information rate I_dot(v), zero exactly at v = v_ss.

    Equals the Riccati right-hand side divided by v, so it is also the
    conditional entropy rate dS/dt.
    """
    v = _as_positive(v, "information_rate")
    out = phonon_noise_rate(v, p) + differential_gain(v, p)
    return float(out) if np.ndim(out) == 0 else out


def unconditional_rates(p: PhysParams, v) -> tuple:
    """Unmonitored flux and production rates at variance v.

    Full expressions, valid off the steady state:

        phi_uc = Gamma_m - v Gamma_m / nbar - 4 v Gamma_qba,
        pi_uc  = -2 Gamma_m + v Gamma_m / nbar + nbar Gamma_m / v
                 + 4 v Gamma_qba + Gamma_qba / v.

    At v = V_uc they satisfy phi_uc = -pi_uc. A reduced production-rate
    formula that coincides there is ness_production_rate.
    """
    v = _as_positive(v, "unconditional_rates")
    nbar = p.n_th + 0.5
    phi_uc = p.gamma_m - v * p.gamma_m / nbar - 4.0 * v * p.gamma_qba
    pi_uc = (-2.0 * p.gamma_m + v * p.gamma_m / nbar + nbar * p.gamma_m / v
             + 4.0 * v * p.gamma_qba + p.gamma_qba / v)
    if np.ndim(phi_uc) == 0:
        return float(phi_uc), float(pi_uc)
    return phi_uc, pi_uc


def ness_production_rate(p: PhysParams) -> float:
    """Reduced steady-state production rate Gamma_m (V_uc/nbar - 1) + 4 Gamma_qba V_uc."""
    v_uc = derive_rates(p).v_uc
    return p.gamma_m * (v_uc / (p.n_th + 0.5) - 1.0) + 4.0 * p.gamma_qba * v_uc


def energy_currents(n_mean: float, p: PhysParams) -> tuple[float, float]:
    """Steady phonon-number currents (j_th, j_opt) in quanta/s.

    j_th = -Gamma_m (n_mean - n_th) is the net flow out of the thermal bath;
    j_opt = Gamma_qba is the backaction heating absorbed by the optical mode.
    They balance when n_mean = n_th + Gamma_qba / Gamma_m.
    """
    return -p.gamma_m * (n_mean - p.n_th), p.gamma_qba


@dataclass(frozen=True)
class EntropySeries:
    """Entropic quantities along one trajectory (or a batch of lanes).

    phi_c, pi_c, theta may carry a leading batch axis; s_w, i_dot, g_diff
    depend only on the deterministic variance and are shared, shape
    (n_steps + 1,). Units: s_w and theta dimensionless (nats for s_w),
    everything else nats/s.
    """

    grid: TimeGrid
    phi_c: np.ndarray
    pi_c: np.ndarray
    s_w: np.ndarray
    i_dot: np.ndarray
    g_diff: np.ndarray
    theta: np.ndarray


@dataclass(frozen=True)
class EnsembleRates:
    """Pointwise ensemble means of the stochastic rates, with standard errors.

    i_dot is reported as pi_c minus the steady unconditional production rate,
    which is the ensemble estimator of the information rate.
    """

    grid: TimeGrid
    phi_c: np.ndarray
    pi_c: np.ndarray
    i_dot: np.ndarray
    g_diff: np.ndarray
    stderr_phi_c: np.ndarray
    stderr_pi_c: np.ndarray
    n_samples: int


def entropy_series(traj: Trajectory, p: PhysParams) -> EntropySeries:
    """Evaluate all entropic series along a simulated trajectory."""
    theta = traj.v + 0.5 * np.sum(traj.r * traj.r, axis=-1)
    phi_c, pi_c = theta_rates(theta, traj.v, p)
    return EntropySeries(
        grid=traj.grid,
        phi_c=phi_c,
        pi_c=pi_c,
        s_w=wigner_entropy(traj.v),
        i_dot=information_rate(traj.v, p),
        g_diff=differential_gain(traj.v, p),
        theta=theta,
    )


def entropy_rate_fd(s_w, dt: float):
    """Finite-difference dS/dt, central in the interior, O(dt^2) at the edges.

    Secondary check only; the analytic rate is information_rate(V).
    """
    return np.gradient(np.asarray(s_w, dtype=float), dt, edge_order=2)


def _stack_rate_lanes(series) -> tuple[TimeGrid, np.ndarray, np.ndarray, np.ndarray]:
    series = list(series)
    if not series:
        raise StatisticsError("ensemble_average_rates needs at least 2 series, got 0")
    grid = series[0].grid
    phi, pi = [], []
    for s in series:
        if s.grid != grid:
            raise ShapeError("all EntropySeries must share one grid")
        phi.append(s.phi_c if s.phi_c.ndim == 2 else s.phi_c[None])
        pi.append(s.pi_c if s.pi_c.ndim == 2 else s.pi_c[None])
    return grid, np.concatenate(phi), np.concatenate(pi), series[0].g_diff


def ensemble_average_rates(series, p: PhysParams) -> EnsembleRates:
    """Pointwise sample means of phi_c and pi_c over an ensemble.

    series is a collection of EntropySeries on one grid; batched series
    count each lane separately. Standard errors are sample-std / sqrt(N).
    """
    grid, phi, pi, g_diff = _stack_rate_lanes(series)
    n = phi.shape[0]
    if n < 2:
        raise StatisticsError(f"ensemble_average_rates needs at least 2 lanes, got {n}")
    pi_uc_ss = unconditional_rates(p, derive_rates(p).v_uc)[1]
    sq = math.sqrt(n)
    pi_mean = pi.mean(axis=0)
    return EnsembleRates(
        grid=grid,
        phi_c=phi.mean(axis=0),
        pi_c=pi_mean,
        i_dot=pi_mean - pi_uc_ss,
        g_diff=np.asarray(g_diff, dtype=float),
        stderr_phi_c=phi.std(axis=0, ddof=1) / sq,
        stderr_pi_c=pi.std(axis=0, ddof=1) / sq,
        n_samples=n,
    )


def write_rates_csv(path, rates: EnsembleRates) -> None:
    """Write the ensemble-rate data product (one row per grid node)."""
    t = rates.grid.times()
    cols = (rates.phi_c, rates.pi_c, rates.i_dot, rates.g_diff,
            rates.stderr_phi_c, rates.stderr_pi_c)
    for c in cols:
        if np.shape(c) != t.shape:
            raise ShapeError("ensemble rate columns must match the grid length")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(RATES_CSV_HEADER + "\n")
        for k in range(len(t)):
            row = (t[k],) + tuple(c[k] for c in cols)
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")
