"""Phenomenological tunneling readout.

Per-level S-curves (tunneling probability versus measure-pulse amplitude),
visibility optimization, level-2-selective measurement, and the named error
budget.  Measure amplitudes ("iz") live in normalized units on [0, 1]; the
default curve constants are solved so the visibility-optimal operating point
reproduces the quoted probabilities (0.034 for |0>, 0.929 for |1> at the
low-bias point, 0.884 with the extra defect loss at the high-bias point).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

TWO_PI = 2.0 * math.pi

TLS_MEASUREMENT_LOSS = 0.045  # |1> population lost crossing the 7.05 GHz defect

# Landau-Zener sweep rate, (rad/ns)/ns, chosen so the default 25 MHz coupling
# reproduces the 0.045 transfer
DEFAULT_LZ_SWEEP_RATE = TWO_PI * (TWO_PI * 25e-3) ** 2 / (-math.log1p(-TLS_MEASUREMENT_LOSS))


class ReadoutModelError(ValueError):
    """Readout model parameters violate an invariant."""


class SelectivityError(RuntimeError):
    """No measure amplitude separates |2> from |1> at the requested leak level."""


@dataclass(frozen=True)
class ReadoutModel:
    """Logistic S-curve model: per level a midpoint, steepness and plateau,
    plus the stray-tunneling floor of |0> and a bias-dependent |1> loss."""

    midpoint_iz: tuple[float, ...] = (0.5957229, 0.55, 0.25)
    steepness: tuple[float, ...] = (2.0e5, 60.0, 60.0)
    plateau: tuple[float, ...] = (0.966, 0.989, 0.98)
    stray_floor: float = 0.034
    tls_loss: float = 0.0

    def __post_init__(self):
        mids = tuple(float(x) for x in self.midpoint_iz)
        object.__setattr__(self, "midpoint_iz", mids)
        object.__setattr__(self, "steepness", tuple(float(x) for x in self.steepness))
        object.__setattr__(self, "plateau", tuple(float(x) for x in self.plateau))
        if not (len(mids) == len(self.steepness) == len(self.plateau)):
            raise ReadoutModelError("per-level parameter arrays must have equal length")
        if any(b >= a for a, b in zip(mids, mids[1:])):
            raise ReadoutModelError("midpoints must strictly decrease with level")
        if any(k <= 0 for k in self.steepness):
            raise ReadoutModelError("steepness must be positive")
        if not all(0.0 <= p <= 1.0 for p in self.plateau):
            raise ReadoutModelError("plateaus must lie in [0, 1]")
        if not 0.0 <= self.stray_floor <= 1.0:
            raise ReadoutModelError("stray floor must lie in [0, 1]")
        if not 0.0 <= self.tls_loss <= 1.0:
            raise ReadoutModelError("tls loss must lie in [0, 1]")

    @property
    def levels(self) -> int:
        return len(self.midpoint_iz)


def default_model(bias_ghz: float = 6.75, f_tls_ghz: float = 7.05) -> ReadoutModel:
    """Default readout curves; operating above the defect adds the 0.045 loss."""
    loss = TLS_MEASUREMENT_LOSS if bias_ghz > f_tls_ghz else 0.0
    return ReadoutModel(tls_loss=loss)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def scurve(level: int, iz, model: ReadoutModel):
    """Tunneling probability of a level versus measure amplitude.

    Logistic rise to the level plateau; level 0 additionally carries the
    stray-tunneling floor.  Accepts scalar or array iz.
    """
    if not 0 <= level < model.levels:
        raise ReadoutModelError(f"level {level} outside the model range")
    iz = np.asarray(iz, dtype=float)
    x = model.steepness[level] * (iz - model.midpoint_iz[level])
    p = model.plateau[level] * _sigmoid(x)
    if level == 0:
        p = p + model.stray_floor
    if p.ndim == 0:
        return float(p)
    return p


def measure_tunnel(populations, iz: float, model: ReadoutModel) -> float:
    """Total tunneling probability of a population vector at amplitude iz.

    Affine in the populations; the |1> term is reduced by the model's
    bias-dependent defect loss when active.
    """
    pops = np.asarray(populations, dtype=float)
    if pops.ndim != 1 or pops.size < 1 or pops.size > model.levels:
        raise ReadoutModelError(f"need 1..{model.levels} populations, got shape {pops.shape}")
    if np.any(pops < -1e-9):
        raise ReadoutModelError("negative population")
    if abs(pops.sum() - 1.0) > 1e-6:
        raise ReadoutModelError(f"populations sum to {pops.sum():.8f}, not 1")
    total = 0.0
    for n, p in enumerate(pops):
        pn = scurve(n, iz, model)
        if n == 1:
            pn = pn - model.tls_loss
        total += p * pn
    return float(total)


def _golden_max(fn, lo: float, hi: float, tol: float) -> tuple[float, float]:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    while (b - a) > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    x = 0.5 * (a + b)
    return x, fn(x)


def optimal_iz_visibility(
    model: ReadoutModel, lo: float = 0.0, hi: float = 1.0, scan_points: int = 2001
) -> tuple[float, float]:
    """Measure amplitude maximizing P_tunnel(|1>) - P_tunnel(|0>).

    Coarse scan plus golden-section refinement; returns (iz, visibility).
    A degenerate model (no positive contrast anywhere) returns the best
    point with a warning rather than failing.
    """
    grid = np.linspace(lo, hi, scan_points)
    vis = (scurve(1, grid, model) - model.tls_loss) - scurve(0, grid, model)
    best = int(np.argmax(vis))

    def v(iz: float) -> float:
        return (scurve(1, iz, model) - model.tls_loss) - scurve(0, iz, model)

    a = grid[max(best - 1, 0)]
    b = grid[min(best + 1, scan_points - 1)]
    iz, value = _golden_max(v, a, b, 1e-10)
    if value <= 0.0:
        import warnings

        warnings.warn("readout model has no positive visibility", stacklevel=2)
    return float(iz), float(value)


def iz_for_level2_only(model: ReadoutModel, max_leak: float = 1e-5) -> float:
    """Largest measure amplitude at which the |1> curve stays below max_leak.

    The returned point must still tunnel |2> at >= 90% of its plateau,
    otherwise the model cannot separate the levels and an error is raised.
    """
    if model.levels < 3:
        raise SelectivityError("model has no |2> curve")
    p1, k1, m1 = model.plateau[1], model.steepness[1], model.midpoint_iz[1]
    if max_leak >= p1:
        return 1.0
    # invert the level-1 logistic at max_leak
    s = max_leak / p1
    iz = m1 + math.log(s / (1.0 - s)) / k1
    if scurve(2, iz, model) < 0.9 * model.plateau[2]:
        raise SelectivityError(
            f"at iz={iz:.4f} the |2> curve reaches only {scurve(2, iz, model):.4f}"
        )
    return iz


@dataclass(frozen=True)
class ErrorBudget:
    """Named per-state error contributions with the visibility identity."""

    contributions: dict
    e0: float
    e1: float
    total: float
    visibility: float

    def to_json(self, path) -> None:
        payload = {
            "contributions": self.contributions,
            "state0_total": self.e0,
            "state1_total": self.e1,
            "total": self.total,
            "visibility": self.visibility,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)


def compose_budget(state0_entries: dict, state1_entries: dict) -> ErrorBudget:
    """Combine named error probabilities into per-state totals and visibility.

    visibility = 1 - e0 - e1 with e0, e1 the state-0 and state-1 sums.
    """
    for name, p in {**state0_entries, **state1_entries}.items():
        if not 0.0 <= p <= 1.0:
            raise ReadoutModelError(f"budget entry {name!r} = {p} outside [0, 1]")
    e0 = math.fsum(state0_entries.values())
    e1 = math.fsum(state1_entries.values())
    if e0 > 1.0 or e1 > 1.0:
        raise ReadoutModelError("per-state error total exceeds 1")
    contributions = {**{k: float(v) for k, v in state0_entries.items()},
                     **{k: float(v) for k, v in state1_entries.items()}}
    total = math.fsum(contributions.values())
    return ErrorBudget(
        contributions=contributions,
        e0=e0,
        e1=e1,
        total=total,
        visibility=1.0 - e0 - e1,
    )


def lz_tls_transfer(g_mhz: float, sweep_rate: float = DEFAULT_LZ_SWEEP_RATE) -> float:
    """Landau-Zener transfer probability for one crossing of the defect.

    ``g_mhz`` is the coupling g/2pi in MHz; ``sweep_rate`` is the qubit
    angular-frequency sweep rate in (rad/ns)/ns during the measure pulse.
    Transfer = 1 - exp(-2 pi (2 pi g)^2 / rate): vanishes in the sudden
    limit, saturates at 1 in the adiabatic limit.
    """
    if g_mhz <= 0 or sweep_rate <= 0:
        raise ReadoutModelError("coupling and sweep rate must be positive")
    g_ang = TWO_PI * g_mhz * 1e-3  # rad/ns
    return -math.expm1(-TWO_PI * g_ang**2 / sweep_rate)


def scurve_table(model: ReadoutModel, iz_grid=None) -> np.ndarray:
    """Columns `iz, p_tunnel_state0, p_tunnel_state1[, p_tunnel_state2]`."""
    if iz_grid is None:
        iz_grid = np.linspace(0.0, 1.0, 1001)
    iz_grid = np.asarray(iz_grid, dtype=float)
    cols = [iz_grid] + [scurve(n, iz_grid, model) for n in range(model.levels)]
    return np.column_stack(cols)


def scurve_table_to_csv(model: ReadoutModel, path, iz_grid=None) -> None:
    table = scurve_table(model, iz_grid)
    names = ["iz"] + [f"p_tunnel_state{n}" for n in range(model.levels)]
    np.savetxt(path, table, fmt="%.17g", delimiter=",", header=",".join(names), comments="")
