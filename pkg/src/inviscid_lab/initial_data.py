"""Library of initial vorticity data, periodic and free-space.

All torus data are mean-zero by construction; randomness is drawn from
counter-based streams keyed by the caller's seed, so identical parameters
reproduce identical fields.  Discontinuous data (patches) are rasterized
with 4x4 subcell averaging; point singularities are capped at a stated
level and the cap is reported alongside the field.
"""

from __future__ import annotations

import numpy as np

from .errors import BadParams, UnknownDatum
from .flows import geodesic_distance
from .freespace import FreeField, PaddedGrid
from .spectral import SpectralField, TorusGrid

TORUS_DATA = ("taylor-green", "random-smooth", "shear", "vortex-patch", "dipole", "lp-singular")
FREESPACE_DATA = ("vortex-patch", "dipole", "lp-singular", "quadrupole",
                  "lp-singular-quadrupole")


def _rng(seed: int):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(7,))))


def _mollifier(r2):
    """C-infinity compact bump exp(-s/(1-s)) of the normalized squared radius."""
    out = np.zeros_like(r2)
    m = r2 < 1.0
    out[m] = np.exp(-r2[m] / (1.0 - r2[m]))
    return out


def _subcell_offsets(k: int = 4):
    o = (np.arange(k) + 0.5) / k - 0.5
    return [(a, b) for a in o for b in o]


def taylor_green(grid: TorusGrid, amplitude: float = 1.0) -> SpectralField:
    x1, x2 = grid.mesh()
    return SpectralField(grid, values=amplitude * np.sin(2 * np.pi * x1) * np.sin(2 * np.pi * x2))


def shear(grid: TorusGrid, amplitude: float = 1.0, k: int = 1) -> SpectralField:
    x1, _ = grid.mesh()
    return SpectralField(grid, values=amplitude * np.sin(2 * np.pi * k * x1))


def _band_coeffs(seed: int, kmax: int) -> dict:
    """Seeded coefficients on the band max(|k1|,|k2|) <= kmax, k != 0.

    Drawn in a fixed mode order and Hermitian-completed, so the continuum
    datum is independent of the grid it is later realized on.
    """
    rng = _rng(seed)
    coeffs: dict = {}
    for k1 in range(-kmax, kmax + 1):
        for k2 in range(-kmax, kmax + 1):
            if (k1, k2) == (0, 0) or (-k1, -k2) in coeffs:
                continue
            re, im = rng.standard_normal(2)
            coeffs[(k1, k2)] = complex(re, im) / 2.0
            coeffs[(-k1, -k2)] = coeffs[(k1, k2)].conjugate()
    return coeffs


def _realize_band(coeffs: dict, grid: TorusGrid) -> np.ndarray:
    c = np.zeros((grid.n, grid.n), dtype=np.complex128)
    for (k1, k2), v in coeffs.items():
        c[k1 % grid.n, k2 % grid.n] = v
    return SpectralField.from_coeffs(grid, c).values


_REFERENCE_N = 256


def random_smooth(grid: TorusGrid, seed: int = 0, kmax: int = 4, amplitude: float = 1.0) -> SpectralField:
    """Seeded band-limited field with a resolution-independent profile.

    The sup normalization is measured on a fixed 256-point reference grid,
    so realizations of the same seed on different grids sample the same
    continuum datum (collocation-exact across resolutions).
    """
    if kmax < 1 or kmax > grid.n // 3:
        raise BadParams(f"kmax must lie in [1, n/3], got {kmax}")
    coeffs = _band_coeffs(seed, kmax)
    ref = _realize_band(coeffs, TorusGrid(_REFERENCE_N))
    scale = amplitude / np.max(np.abs(ref))
    return SpectralField(grid, values=_realize_band(coeffs, grid) * scale)


def vortex_patch(grid: TorusGrid, center=(0.5, 0.5), radius: float = 0.2,
                 amplitude: float = 1.0) -> SpectralField:
    """Mean-corrected indicator patch, rasterized with subcell averaging."""
    x1, x2 = grid.mesh()
    h = grid.spacing
    frac = np.zeros_like(x1)
    pts = np.stack([x1, x2], axis=-1)
    for a, b in _subcell_offsets():
        q = pts + np.array([a * h, b * h])
        frac += geodesic_distance(q, np.asarray(center)) < radius
    frac *= amplitude / 16.0
    return SpectralField(grid, values=frac - np.mean(frac))


def torus_dipole(grid: TorusGrid, separation: float = 0.25, radius: float = 0.15,
                 amplitude: float = 1.0) -> SpectralField:
    x1, x2 = grid.mesh()
    pts = np.stack([x1, x2], axis=-1)
    cp = np.array([0.5, 0.5 + separation / 2.0])
    cm = np.array([0.5, 0.5 - separation / 2.0])
    vals = amplitude * (_mollifier((geodesic_distance(pts, cp) / radius) ** 2)
                        - _mollifier((geodesic_distance(pts, cm) / radius) ** 2))
    return SpectralField(grid, values=vals - np.mean(vals))


def lp_singular(grid: TorusGrid, alpha: float = 1.5, p: float = 1.3, cap: float = 25.0,
                center=(0.5, 0.5)) -> SpectralField:
    """Capped point singularity min(|x-c|^-alpha, cap), mean-corrected.

    The continuum profile lies in L^p iff alpha * p < 2 (polar integrability);
    violating parameter pairs are a configuration error.  The grid truncates
    the singularity at the stated cap; no claim is made that the discrete
    datum equals the continuum one.
    """
    if not (0 < alpha and p >= 1):
        raise BadParams("need alpha > 0 and p >= 1")
    if alpha * p >= 2.0:
        raise BadParams(f"datum not in L^{p}: alpha*p = {alpha * p} >= 2")
    if cap <= 1.0:
        raise BadParams("cap must exceed 1")
    x1, x2 = grid.mesh()
    pts = np.stack([x1, x2], axis=-1)
    d = geodesic_distance(pts, np.asarray(center))
    vals = np.minimum(np.where(d > 0, d, 1.0) ** (-alpha), cap)
    vals[d == 0] = cap
    return SpectralField(grid, values=vals - np.mean(vals))


def initial_datum(name: str, params: dict, grid: TorusGrid) -> SpectralField:
    """Build a named mean-zero torus datum; see TORUS_DATA for choices."""
    params = dict(params or {})
    if name == "taylor-green":
        return taylor_green(grid, **params)
    if name == "shear":
        return shear(grid, **params)
    if name == "random-smooth":
        return random_smooth(grid, **params)
    if name == "vortex-patch":
        return vortex_patch(grid, **params)
    if name == "dipole":
        return torus_dipole(grid, **params)
    if name == "lp-singular":
        return lp_singular(grid, **params)
    raise UnknownDatum(f"unknown torus datum {name!r}; choices: {TORUS_DATA}")


# ---------------------------------------------------------------------------
# free-space data


def _balance(vals: np.ndarray) -> np.ndarray:
    """Scale the negative part so the integral vanishes exactly."""
    pos = np.sum(vals[vals > 0])
    neg = -np.sum(vals[vals < 0])
    if pos > 0 and neg > 0:
        out = vals.copy()
        out[vals < 0] *= pos / neg
        return out
    return vals


def free_vortex_patch(grid: PaddedGrid, radius: float = 0.3, amplitude: float = 1.0,
                      center=(0.0, 0.0)) -> FreeField:
    x1, x2 = grid.mesh()
    h = grid.spacing
    frac = np.zeros_like(x1)
    for a, b in _subcell_offsets():
        frac += ((x1 + a * h - center[0]) ** 2 + (x2 + b * h - center[1]) ** 2) < radius**2
    return FreeField(grid, amplitude * frac / 16.0)


def free_dipole(grid: PaddedGrid, separation: float = 0.6, radius: float = 0.25,
                amplitude: float = 1.0) -> FreeField:
    x1, x2 = grid.mesh()
    d = separation / 2.0
    vals = amplitude * (_mollifier(((x1) ** 2 + (x2 - d) ** 2) / radius**2)
                        - _mollifier(((x1) ** 2 + (x2 + d) ** 2) / radius**2))
    return FreeField(grid, _balance(vals))


def free_quadrupole(grid: PaddedGrid, separation: float = 0.6, radius: float = 0.22,
                    amplitude: float = 1.0) -> FreeField:
    """Four alternating bumps: zero integral and zero dipole moment.

    The velocity then decays like |x|^-3, which keeps box-truncation error
    far below discretization error in identity-refinement studies.
    """
    x1, x2 = grid.mesh()
    d = separation / 2.0
    b = lambda c1, c2: _mollifier(((x1 - c1) ** 2 + (x2 - c2) ** 2) / radius**2)
    vals = amplitude * (b(d, d) - b(d, -d) - b(-d, d) + b(-d, -d))
    return FreeField(grid, _balance(vals))


def free_lp_singular_dipole(grid: PaddedGrid, alpha: float = 1.5, p: float = 1.2,
                            cap: float = 25.0, separation: float = 0.7,
                            window: float = 0.3) -> FreeField:
    """Zero-mean pair of capped point singularities under compact envelopes.

    Each lobe is min(|x-c|^-alpha, cap) times a mollifier window, the lobes
    carry opposite signs, and the negative lobe is rescaled so the discrete
    integral vanishes exactly.
    """
    if alpha * p >= 2.0:
        raise BadParams(f"datum not in L^{p}: alpha*p = {alpha * p} >= 2")
    if cap <= 1.0:
        raise BadParams("cap must exceed 1")
    x1, x2 = grid.mesh()
    d = separation / 2.0

    def lobe(c2):
        r2 = x1**2 + (x2 - c2) ** 2
        r = np.sqrt(np.where(r2 > 0, r2, 1.0))
        core = np.minimum(r ** (-alpha), cap)
        core[r2 == 0] = cap
        return core * _mollifier(r2 / window**2)

    vals = lobe(d) - lobe(-d)
    return FreeField(grid, _balance(vals))


def free_lp_singular_quadrupole(grid: PaddedGrid, alpha: float = 1.5, p: float = 1.2,
                                cap: float = 15.0, separation: float = 0.6,
                                window: float = 0.25) -> FreeField:
    """Four alternating capped singular lobes: zero mean and zero dipole moment.

    A translating configuration exchanges far-field energy with the region
    outside the truncated box; this moment-free arrangement has an |x|^-3
    far field and stays centered, so the box energy tracks the plane energy
    to below the bound-check tolerances.
    """
    if alpha * p >= 2.0:
        raise BadParams(f"datum not in L^{p}: alpha*p = {alpha * p} >= 2")
    if cap <= 1.0:
        raise BadParams("cap must exceed 1")
    x1, x2 = grid.mesh()
    d = separation / 2.0

    def lobe(c1, c2):
        r2 = (x1 - c1) ** 2 + (x2 - c2) ** 2
        r = np.sqrt(np.where(r2 > 0, r2, 1.0))
        core = np.minimum(r ** (-alpha), cap)
        core[r2 == 0] = cap
        return core * _mollifier(r2 / window**2)

    vals = lobe(d, d) - lobe(d, -d) - lobe(-d, d) + lobe(-d, -d)
    return FreeField(grid, _balance(vals))


def initial_datum_freespace(name: str, params: dict, grid: PaddedGrid) -> FreeField:
    params = dict(params or {})
    if name == "vortex-patch":
        return free_vortex_patch(grid, **params)
    if name == "dipole":
        return free_dipole(grid, **params)
    if name == "quadrupole":
        return free_quadrupole(grid, **params)
    if name == "lp-singular":
        return free_lp_singular_dipole(grid, **params)
    if name == "lp-singular-quadrupole":
        return free_lp_singular_quadrupole(grid, **params)
    raise UnknownDatum(f"unknown free-space datum {name!r}; choices: {FREESPACE_DATA}")
