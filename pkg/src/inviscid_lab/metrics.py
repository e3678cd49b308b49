"""Quantitative functionals and inequality checks for the inviscid limit.

Covers the log-distance stability functional and its Chebyshev chain, the
comparison-lemma (Osgood) closed form, rate/envelope fitting for viscosity
ladders, renormalization defects, free-space tail mass and cutoff
construction, and the enstrophy/energy-drop bounds.

No unspecified constants are invented here: every inequality is either
implemented in a constant-free explicit form or turned into a fit with
reported residuals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BadAlpha,
    BadBeta,
    BadEps,
    BadExponent,
    BadParams,
    BadRadii,
    InsufficientPoints,
    MismatchedEnsembles,
    NonPositiveError,
)
from .flows import FlowEnsemble, geodesic_distance


# ---------------------------------------------------------------------------
# log-distance functional and stability report


def q_eps(y, eps: float):
    """Log-distance functional ``ln(1 + |y|^2 / eps^2)``.

    ``y`` may be a displacement vector array (..., 2) or an array of
    magnitudes.  Monotone in |y|; zero at zero; ln 2 at |y| = eps.
    """
    if not eps > 0:
        raise BadEps(f"eps must be positive, got {eps}")
    y = np.asarray(y, dtype=np.float64)
    if y.ndim and y.shape[-1] == 2:
        mag2 = np.sum(y * y, axis=-1)
    else:
        mag2 = y * y
    return np.log1p(mag2 / eps**2)


def eps_for(nu: float, velocity_l1l1: float) -> float:
    """Parameter selection for the stability report: max(sqrt(nu), |u_nu - u|_{L1L1})."""
    return max(float(np.sqrt(nu)), float(velocity_l1l1))


@dataclass(frozen=True)
class StabilityReport:
    """Grid/replica averages of the flow-comparison functionals at one time.

    ``superlevel_measure * ln(1 + 1/eps) <= q_integral`` holds exactly on the
    same samples (Chebyshev on the empirical measure); ``chebyshev_rhs`` is
    the right-hand side divided out.
    """

    s: float
    eps: float
    q_integral: float
    superlevel_measure: float
    chebyshev_rhs: float
    flow_distance: float
    y_value: float
    n_samples: int

    def __post_init__(self):
        if self.superlevel_measure < 0 or self.superlevel_measure > 1:
            raise ValueError("superlevel measure must lie in [0, 1]")


def stability_report(det: FlowEnsemble, stoch: FlowEnsemble, s: float, eps: float) -> StabilityReport:
    """Compare a stochastic flow against its deterministic reference at time s.

    Distances are geodesic on the torus; ``y_value`` uses the unwrapped
    squared displacement, matching how the flows accumulate positions.
    """
    if not eps > 0:
        raise BadEps(f"eps must be positive, got {eps}")
    if det.n_seeds != stoch.n_seeds or not np.array_equal(det.seeds, stoch.seeds):
        raise MismatchedEnsembles("seed points differ")
    if abs(det.t - stoch.t) > 1e-9:
        raise MismatchedEnsembles(f"release times differ: {det.t} vs {stoch.t}")
    xd = det.raw_positions(s)
    xs = stoch.raw_positions(s)
    if xd.ndim == 3 and xs.ndim == 2:
        xd, xs = xs, xd  # allow either argument order of replica axis
    if xd.ndim == 2 and xs.ndim == 3:
        xd = xd[:, None, :]
    dist = geodesic_distance(xs, xd)
    q = np.log1p(dist * dist / eps**2)
    q_integral = float(np.mean(q))
    threshold = float(np.sqrt(eps))
    superlevel = float(np.mean(dist > threshold))
    diff = xs - xd
    y_value = float(np.mean(np.sum(diff * diff, axis=-1)))
    # Chebyshev on the empirical measure is exact arithmetic on the same
    # samples; a violation can only mean numerical corruption upstream
    if superlevel * np.log1p(1.0 / eps) > q_integral * (1.0 + 1e-12) + 1e-300:
        raise AssertionError("empirical Chebyshev chain violated")
    return StabilityReport(
        s=float(s),
        eps=float(eps),
        q_integral=q_integral,
        superlevel_measure=superlevel,
        chebyshev_rhs=q_integral / float(np.log1p(1.0 / eps)),
        flow_distance=float(np.mean(dist)),
        y_value=y_value,
        n_samples=int(dist.size),
    )


def velocity_l1l1_distance(a, b) -> float:
    """Time-quadrature of the L^1 spatial distance of two trajectory velocities.

    Trapezoidal in time over the checkpoints of ``a`` (``b`` is interpolated
    linearly at those times).
    """
    times = a.times
    vals = np.empty(len(times))
    for i, t in enumerate(times):
        va = a.velocity_values_at(t)
        vb = b.velocity_values_at(t)
        d = va - vb
        vals[i] = np.mean(np.sqrt(d[..., 0] ** 2 + d[..., 1] ** 2))
    return float(np.trapezoid(vals, times))


# ---------------------------------------------------------------------------
# Osgood comparison bound


def osgood_m(x):
    """The comparison transform M(x) = ln(2 - ln x) - ln 2 for 0 < x < e^2."""
    x = np.asarray(x, dtype=np.float64)
    return np.log(2.0 - np.log(x)) - np.log(2.0)


def osgood_m_inv(z):
    """Inverse of :func:`osgood_m`: x = exp(2 - 2 e^z)."""
    z = np.asarray(z, dtype=np.float64)
    return np.exp(2.0 - 2.0 * np.exp(z))


def osgood_bound(alpha: float, C: float, tau: float) -> float:
    """Closed-form comparison bound exp(2 - 2 e^{-C tau}) * alpha^{e^{-C tau}}.

    This is M^{-1}(M(alpha) - C*tau), the exact solution of
    ``y' = C y (2 - ln y), y(0) = alpha``; it dominates anything satisfying
    the corresponding integral inequality.
    """
    if not 0.0 < alpha < 1.0:
        raise BadAlpha(f"alpha must lie in (0, 1), got {alpha}")
    if C <= 0 or tau < 0:
        raise BadParams("need C > 0 and tau >= 0")
    return float(osgood_m_inv(osgood_m(alpha) - C * tau))


# ---------------------------------------------------------------------------
# rate fitting


@dataclass(frozen=True)
class RateFit:
    """Fitted convergence model for a viscosity ladder.

    power mode:  errors ~ prefactor * nu**exponent
        (log-log least squares; ``residual`` is the max log-space deviation)
    log mode:    errors ~ prefactor + exponent / |ln nu|
        (least squares in 1/|ln nu|, then the offset is raised so the model
        envelopes the data from above; ``point_residuals = fit - errors`` are
        all nonnegative and ``residual`` is their maximum)
    """

    mode: str
    nus: tuple
    errors: tuple
    exponent: float
    prefactor: float
    residual: float
    point_residuals: tuple

    def evaluate(self, nu):
        nu = np.asarray(nu, dtype=np.float64)
        if self.mode == "power":
            return self.prefactor * nu**self.exponent
        return self.prefactor + self.exponent / np.abs(np.log(nu))


def fit_rate(nus, errors, mode: str = "power") -> RateFit:
    """Fit a convergence-rate model to ladder measurements."""
    nus = np.asarray(nus, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if nus.size < 3:
        raise InsufficientPoints(f"need >= 3 ladder points, got {nus.size}")
    if nus.size != errors.size:
        raise BadParams("nus and errors length mismatch")
    if np.any(np.diff(nus) >= 0):
        raise BadParams("viscosity ladder must be strictly decreasing")
    if np.any(errors < 0):
        raise BadParams("errors must be nonnegative")
    if mode == "power":
        if np.any(errors <= 0):
            raise NonPositiveError("power-law fitting needs strictly positive errors")
        A = np.stack([np.ones_like(nus), np.log(nus)], axis=1)
        sol, *_ = np.linalg.lstsq(A, np.log(errors), rcond=None)
        logfit = A @ sol
        resid = np.log(errors) - logfit
        return RateFit(
            mode="power",
            nus=tuple(nus),
            errors=tuple(errors),
            exponent=float(sol[1]),
            prefactor=float(np.exp(sol[0])),
            residual=float(np.max(np.abs(resid))),
            point_residuals=tuple(resid),
        )
    if mode == "log":
        if np.any(nus >= 1.0):
            raise BadParams("log mode needs nu < 1 so that |ln nu| > 0")
        z = 1.0 / np.abs(np.log(nus))
        A = np.stack([np.ones_like(z), z], axis=1)
        sol, *_ = np.linalg.lstsq(A, errors, rcond=None)
        delta, cc = float(sol[0]), float(sol[1])
        fit = delta + cc * z
        shift = float(np.max(errors - fit))
        if shift > 0:
            delta += shift
            fit = fit + shift
        point = fit - errors
        return RateFit(
            mode="log",
            nus=tuple(nus),
            errors=tuple(errors),
            exponent=cc,
            prefactor=delta,
            residual=float(np.max(np.abs(point))),
            point_residuals=tuple(point),
        )
    raise BadParams(f"unknown fit mode {mode!r}")


def chemin_delta(nu: float, C: float, T: float) -> float:
    """Reference rate ``nu**(exp(-C T)/2)`` for bounded-vorticity ladders.

    The constant C is not determined by theory at artifact level; this is a
    diagnostic scale to plot measured errors against, not an assertion.
    """
    return float(nu ** (np.exp(-C * T) / 2.0))


def bounded_rate_prediction(nu: float, T: float, sup_omega: float, p: float,
                            modulus, C: float = 1.0) -> float:
    """Diagnostic rate scale for bounded-vorticity ladders.

    ``C * sup_omega^{1-1/p} * max(modulus(delta), delta^{exp(-C T)/(2p)})``
    with ``delta = chemin_delta(nu, C, T)``.  The modulus is the measured
    datum-dependent translation modulus (see :func:`translation_modulus`);
    both C and the modulus are diagnostic inputs, so this is reported next
    to measured errors, never asserted.
    """
    delta = chemin_delta(nu, C, T)
    return float(C * sup_omega ** (1.0 - 1.0 / p)
                 * max(float(modulus(delta)), delta ** (np.exp(-C * T) / (2.0 * p))))


def translation_modulus(omega0, shifts) -> np.ndarray:
    """Empirical L^1 modulus of continuity under grid translations.

    ``shifts`` are integers (multiples of the grid spacing along axis 1);
    returns ``|w0(. + h) - w0|_1`` per shift.  Diagnostic companion to the
    datum-dependent modulus in the bounded-vorticity rate statement.
    """
    vals = omega0.values
    out = np.empty(len(shifts))
    for i, s in enumerate(shifts):
        out[i] = np.mean(np.abs(np.roll(vals, int(s), axis=0) - vals))
    return out


# ---------------------------------------------------------------------------
# renormalization defect


def _smoothstep(x):
    """Quintic smoothstep: C^2, 0 at 0, 1 at 1, flat at both ends."""
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (10.0 - 15.0 * x + 6.0 * x * x)


@dataclass(frozen=True)
class BetaFunction:
    """Member of the built-in renormalization family.

    ``kind = "power"``: smoothly truncated |s|^q, identically zero on
    [-eta, eta] with a C^2 transition on [eta, 2*eta]; optionally saturated
    at ``cap`` (smooth clip) for boundedness.
    ``kind = "convex"``: the convex hinge ((|s| - eta)_+)^3 with
    nonnegative second derivative everywhere.
    """

    kind: str
    q: float
    eta: float
    cap: float | None = None

    def __post_init__(self):
        if self.eta <= 0:
            raise BadBeta("transition width eta must be positive (beta must vanish near 0)")

    @property
    def convex(self) -> bool:
        return self.kind == "convex"

    def __call__(self, s):
        a = np.abs(np.asarray(s, dtype=np.float64))
        if self.kind == "convex":
            return np.maximum(a - self.eta, 0.0) ** 3
        ramp = _smoothstep((a - self.eta) / self.eta)
        out = ramp * a**self.q
        if self.cap is not None:
            out = self.cap * np.tanh(out / self.cap)
        return out


def make_beta(kind: str, q: float = 2.0, eta: float = 1e-3, cap: float | None = None) -> BetaFunction:
    if kind not in ("power", "convex"):
        raise BadBeta(f"unknown beta kind {kind!r}")
    return BetaFunction(kind=kind, q=q, eta=eta, cap=cap)


def default_beta_family(omega_sup: float) -> list[BetaFunction]:
    """Three test functions with eta = 1e-3 * sup|w0|."""
    eta = 1e-3 * omega_sup
    return [
        make_beta("power", q=1.0, eta=eta),
        make_beta("power", q=2.0, eta=eta),
        make_beta("power", q=2.0, eta=eta, cap=4.0 * omega_sup**2),
    ]


def _validate_beta(beta):
    if isinstance(beta, BetaFunction):
        return
    # custom callables must vanish in a neighbourhood of zero
    probe = np.array([0.0, 1e-12, -1e-12, 1e-9, -1e-9])
    if np.any(np.abs(np.asarray(beta(probe))) > 0):
        raise BadBeta("beta must vanish in a neighbourhood of zero")


@dataclass(frozen=True)
class RenormalizationReport:
    """Per-checkpoint behaviour of ``integral of beta(omega(t))``.

    For inviscid runs ``defects`` are the absolute deviations from the
    initial value (zero for a renormalized evolution).  For viscous runs
    with convex beta, ``drift`` carries the signed deviations and
    ``max_increase`` the largest step-to-step rise (nonpositive up to
    roundoff, by the sign of the beta'' dissipation term).
    """

    times: tuple
    values: tuple
    defects: tuple
    drift: tuple
    max_increase: float


def renormalization_defect(traj, beta) -> RenormalizationReport:
    """Track the conservation (or signed dissipation) of ``beta(omega)``."""
    _validate_beta(beta)
    if traj.nu > 0 and isinstance(beta, BetaFunction) and not beta.convex:
        raise BadBeta("viscous drift check requires a convex beta")
    vals = np.array([traj.integral_of(i, beta) for i in range(len(traj.times))])
    defects = np.abs(vals - vals[0])
    drift = vals - vals[0]
    increases = np.diff(vals)
    max_inc = float(np.max(increases)) if increases.size else 0.0
    return RenormalizationReport(
        times=tuple(traj.times),
        values=tuple(vals),
        defects=tuple(defects),
        drift=tuple(drift),
        max_increase=max_inc,
    )


# ---------------------------------------------------------------------------
# free-space cutoff and tail mass


def make_cutoff(r: float, R: float, grid):
    """Radial plateau cutoff: 0 on |x|<r, 1 on 2r<|x|<R, 0 beyond 2R.

    C^2 transitions on [r, 2r] and [R, 2R]; gradient and Hessian scale like
    1/r and 1/r^2 on the inner transition by construction.
    """
    if not (0 < 2 * r < R):
        raise BadRadii(f"need 0 < 2r < R, got r={r}, R={R}")
    from .freespace import FreeField

    x1, x2 = grid.mesh()
    rho = np.sqrt(x1 * x1 + x2 * x2)
    rise = _smoothstep((rho - r) / r)
    fall = 1.0 - _smoothstep((rho - R) / R)
    return FreeField(grid, rise * fall)


def tail_mass(f, r: float, q: float = 1.0) -> float:
    """Mass of |f|^q outside the ball of radius r (free-space quadrature)."""
    if r <= 0:
        raise BadRadii("radius must be positive")
    if q < 1:
        raise BadExponent("q must be >= 1")
    grid = f.grid
    x1, x2 = grid.mesh()
    outside = x1 * x1 + x2 * x2 > r * r
    return float(np.sum(np.abs(f.values[outside]) ** q) * grid.cell_area)


# ---------------------------------------------------------------------------
# enstrophy bound and energy sandwich


def enstrophy_bound_rhs(t, omega0_l2_sq: float, c0: float, nu: float, p: float):
    """Decay envelope for the squared L^2 vorticity norm.

    ``(w0_l2^{-2p/(2-p)} + 2 nu p c0 t / (2-p))^{-(2-p)/p}`` with
    ``c0 = |w0|_p^{-2p/(2-p)}`` in the equality case at t = 0.
    """
    a = omega0_l2_sq ** (-p / (2.0 - p))
    b = 2.0 * nu * p * c0 / (2.0 - p)
    return (a + b * np.asarray(t, dtype=np.float64)) ** (-(2.0 - p) / p)


def enstrophy_bound_check(traj, p: float, c0: float | None = None):
    """Margins ``rhs(t) - |omega(t)|_2^2`` along a viscous trajectory.

    Nonnegative (within a 1e-6 relative slack) whenever the discrete run
    respects the L^p decrease and the dissipation chain; c0 defaults to the
    equality case built from the initial datum.
    """
    if not 1.0 < p < 2.0:
        raise BadExponent(f"p must lie in (1, 2), got {p}")
    if not traj.nu > 0:
        raise BadParams("enstrophy bound applies to viscous runs only")
    if c0 is None:
        c0 = traj.omega_lp(0, p) ** (-2.0 * p / (2.0 - p))
    w0_sq = traj.omega_l2_sq(0)
    rhs = enstrophy_bound_rhs(traj.times, w0_sq, c0, traj.nu, p)
    measured = np.array([traj.omega_l2_sq(i) for i in range(len(traj.times))])
    return rhs - measured


def energy_drop_bound(t, omega0_l2_sq: float, c0: float, nu: float, p: float):
    """Closed-form bound on the energy drop: 2 nu * integral of the enstrophy envelope.

    Exact time integral of :func:`enstrophy_bound_rhs`; the bracket reads
    ``(a + b t)^{2(p-1)/p} - a^{2(p-1)/p}`` with ``a = w0_l2^{-2p/(2-p)}``,
    and the prefactor is ``(2-p) / (2 c0 (p-1))``.
    """
    a = omega0_l2_sq ** (-p / (2.0 - p))
    b = 2.0 * nu * p * c0 / (2.0 - p)
    expo = 2.0 * (p - 1.0) / p
    t = np.asarray(t, dtype=np.float64)
    return (2.0 - p) / (2.0 * c0 * (p - 1.0)) * ((a + b * t) ** expo - a**expo)


@dataclass(frozen=True)
class EnergyDropReport:
    """Sandwich margins for the viscous energy drop.

    ``upper_margin = E(0) - E(t)`` (energy never increases) and
    ``lower_margin = bound(t) - (E(0) - E(t))`` (the drop is no larger than
    the closed-form bound); both nonnegative within relative slack.
    """

    times: tuple
    energy: tuple
    drop: tuple
    bound: tuple
    upper_margin: tuple
    lower_margin: tuple


def energy_drop_check(traj, p: float, c0: float | None = None) -> EnergyDropReport:
    if not 1.0 < p < 1.5:
        raise BadExponent(f"p must lie in (1, 3/2), got {p}")
    if not traj.nu > 0:
        raise BadParams("energy sandwich applies to viscous runs only")
    if c0 is None:
        c0 = traj.omega_lp(0, p) ** (-2.0 * p / (2.0 - p))
    w0_sq = traj.omega_l2_sq(0)
    energies = np.array([traj.energy_l2_sq(i) for i in range(len(traj.times))])
    drop = energies[0] - energies
    bound = energy_drop_bound(traj.times, w0_sq, c0, traj.nu, p)
    return EnergyDropReport(
        times=tuple(traj.times),
        energy=tuple(energies),
        drop=tuple(drop),
        bound=tuple(bound),
        upper_margin=tuple(drop),
        lower_margin=tuple(bound - drop),
    )
