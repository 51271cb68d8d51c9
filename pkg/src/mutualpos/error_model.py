"""Mixed-error conversion.

Using a reported (noisy) reference position instead of the true one adds an
extra distance error ``n_delta``.  Its mean and standard deviation are
estimated by brute-force sampling on a grid of (distance, sigma_p) cells and
summarised by two fitted surfaces.

The surfaces are paraboloids in (d, s) divided by d::

    mu(d, s)    = P_mu(d, s) / d
    sigma(d, s) = P_sigma(d, s) / d

with ``P(d, s) = c00 + c10*d + c01*s + c20*d^2 + c11*d*s + c02*s^2``.  The
extra error obeys ``n_delta(d, s) = d * n_delta(1, s/d)``, so ``d*mu`` and
``d*sigma`` are close to ``-s^2/4`` and ``d*s/sqrt(2)``.  Both are inside the
quadratic basis, which a plain paraboloid in (d, s) cannot reach.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import TARGET_ID, Beacon, RngStream, rng_stream

DEFAULT_D_GRID = tuple(float(d) for d in range(1, 44, 2))
DEFAULT_S_GRID = tuple(round(0.1 + 0.2 * k, 10) for k in range(8))
DEFAULT_SAMPLES_PER_CELL = 1000
DEFAULT_FIT_SEED = 42

SCHEMA = "mutualpos.error_surface/1"
MONOMIALS = ("c00", "c10", "c01", "c20", "c11", "c02")


class FitError(ValueError):
    """Raised when the surface least-squares problem is singular."""


@dataclass(frozen=True)
class QuadraticSurface:
    """Quadratic in (d, s), evaluated divided by d."""

    c00: float = 0.0
    c10: float = 0.0
    c01: float = 0.0
    c20: float = 0.0
    c11: float = 0.0
    c02: float = 0.0

    @property
    def coefficients(self) -> tuple[float, ...]:
        return (self.c00, self.c10, self.c01, self.c20, self.c11, self.c02)

    def paraboloid(self, d, s):
        return (self.c00 + self.c10 * d + self.c01 * s
                + self.c20 * d * d + self.c11 * d * s + self.c02 * s * s)

    def __call__(self, d, s):
        return self.paraboloid(d, s) / d


@dataclass(frozen=True)
class FitDomain:
    d_min: float
    d_max: float
    s_min: float
    s_max: float

    def clamp(self, d: float, s: float) -> tuple[float, float]:
        return (min(max(d, self.d_min), self.d_max),
                min(max(s, self.s_min), self.s_max))

    def contains(self, d: float, s: float) -> bool:
        return self.d_min <= d <= self.d_max and self.s_min <= s <= self.s_max


@dataclass(frozen=True)
class FitSpec:
    d_grid: tuple[float, ...] = DEFAULT_D_GRID
    s_grid: tuple[float, ...] = DEFAULT_S_GRID
    samples_per_cell: int = DEFAULT_SAMPLES_PER_CELL
    seed: int = DEFAULT_FIT_SEED


@dataclass(frozen=True)
class ErrorSurface:
    mu_surface: QuadraticSurface
    sigma_surface: QuadraticSurface
    fit_domain: FitDomain
    fit_quality: dict = field(default_factory=dict)
    spec: FitSpec | None = None

    def mu(self, d: float, s: float) -> float:
        d, s = self.fit_domain.clamp(d, s)
        return float(self.mu_surface(d, s))

    def sigma(self, d: float, s: float) -> float:
        d, s = self.fit_domain.clamp(d, s)
        return max(0.0, float(self.sigma_surface(d, s)))

    def to_dict(self) -> dict:
        out = {
            "schema": SCHEMA,
            "mu_surface": dict(zip(MONOMIALS, self.mu_surface.coefficients)),
            "sigma_surface": dict(zip(MONOMIALS, self.sigma_surface.coefficients)),
            "normalizer": "d",
            "fit_domain": asdict(self.fit_domain),
            "r_squared": dict(self.fit_quality),
        }
        if self.spec is not None:
            out["grid"] = {
                "d_grid": list(self.spec.d_grid),
                "s_grid": list(self.spec.s_grid),
                "samples_per_cell": self.spec.samples_per_cell,
            }
            out["seed"] = self.spec.seed
        return out

    @classmethod
    def from_dict(cls, data: dict) -> ErrorSurface:
        if data.get("schema") != SCHEMA:
            raise ValueError(f"unsupported error-surface schema {data.get('schema')!r}")
        spec = None
        if "grid" in data:
            g = data["grid"]
            spec = FitSpec(tuple(g["d_grid"]), tuple(g["s_grid"]),
                           int(g["samples_per_cell"]), int(data.get("seed", 0)))
        return cls(
            QuadraticSurface(**data["mu_surface"]),
            QuadraticSurface(**data["sigma_surface"]),
            FitDomain(**data["fit_domain"]),
            dict(data.get("r_squared", {})),
            spec,
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()


@dataclass(frozen=True)
class ConvertedError:
    mu_circ: float
    sigma_circ: float


def save_surface(surface: ErrorSurface, path) -> None:
    Path(path).write_text(surface.dumps())


def load_surface(path) -> ErrorSurface:
    return ErrorSurface.from_dict(json.loads(Path(path).read_text()))


def sample_delta_error(true_dist: float, sigma_p_sq: float, n_samples: int,
                       rng: RngStream, antithetic: bool = False) -> np.ndarray:
    """Brute-force draws of ``d_true - d_perturbed``.

    The reference sits at distance ``true_dist`` along +x from the target and
    its reported position is perturbed by N^2(0, sigma_p_sq/2).  With
    ``antithetic`` the x-perturbations come in +/- pairs; each draw keeps the
    same marginal law.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if true_dist < 0 or sigma_p_sq < 0:
        raise ValueError("true_dist and sigma_p_sq must be non-negative")
    scale = math.sqrt(sigma_p_sq / 2.0)
    if antithetic:
        half = (n_samples + 1) // 2
        z = rng.normal(0.0, 1.0, (2, half))
        dx = np.concatenate([z[0], -z[0]])[:n_samples]
        dy = np.concatenate([z[1], z[1]])[:n_samples]
    else:
        dx, dy = rng.normal(0.0, 1.0, (2, n_samples))
    return true_dist - np.hypot(true_dist + scale * dx, scale * dy)


def _design(d: np.ndarray, s: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones_like(d), d, s, d * d, d * s, s * s]) / d[:, None]


def _lstsq(A: np.ndarray, y: np.ndarray) -> np.ndarray:
    # Columns that are identically zero on the grid (e.g. every s = 0) carry no
    # information; their coefficients are pinned to 0.
    live = np.any(A != 0.0, axis=0)
    Al = A[:, live]
    if Al.shape[0] < Al.shape[1] or np.linalg.matrix_rank(Al) < Al.shape[1]:
        raise FitError(
            f"singular surface fit: {A.shape[0]} cells cannot determine "
            f"{Al.shape[1]} coefficients")
    coef = np.zeros(A.shape[1])
    coef[live] = np.linalg.lstsq(Al, y, rcond=None)[0]
    return coef


def _r_squared(y: np.ndarray, fitted: np.ndarray) -> float:
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res <= 1e-24 else 0.0
    return 1.0 - ss_res / ss_tot


def cell_statistics(d_grid, s_grid, samples_per_cell: int, seed: int):
    """Sample mean and std of the extra error in every (d, s) cell.

    Each cell draws from its own stream so cells can be computed in any order.
    """
    d_grid = np.asarray(d_grid, dtype=float)
    s_grid = np.asarray(s_grid, dtype=float)
    d, s = (a.ravel() for a in np.meshgrid(d_grid, s_grid, indexing="ij"))
    mu = np.empty(d.size)
    sd = np.empty(d.size)
    for k in range(d.size):
        i, j = divmod(k, s_grid.size)
        x = sample_delta_error(d[k], s[k] ** 2, samples_per_cell,
                               rng_stream(seed, "error-surface-cell", i, j),
                               antithetic=True)
        mu[k] = x.mean()
        sd[k] = x.std(ddof=1) if x.size > 1 else 0.0
    return d, s, mu, sd


def fit_error_surface(d_grid, s_grid, samples_per_cell: int = DEFAULT_SAMPLES_PER_CELL,
                      seed: int = DEFAULT_FIT_SEED) -> ErrorSurface:
    if len(d_grid) == 0 or len(s_grid) == 0:
        raise ValueError("grids must be non-empty")
    if samples_per_cell < 100:
        raise ValueError("samples_per_cell must be >= 100")
    if min(d_grid) <= 0:
        raise ValueError("distance grid must be strictly positive")
    if min(s_grid) < 0:
        raise ValueError("sigma_p grid must be non-negative")

    d, s, mu, sd = cell_statistics(d_grid, s_grid, samples_per_cell, seed)
    A = _design(d, s)
    c_mu = _lstsq(A, mu)
    c_sd = _lstsq(A, sd)
    quality = {"mu": _r_squared(mu, A @ c_mu), "sigma": _r_squared(sd, A @ c_sd)}
    domain = FitDomain(float(min(d_grid)), float(max(d_grid)),
                       float(min(s_grid)), float(max(s_grid)))
    spec = FitSpec(tuple(float(v) for v in d_grid), tuple(float(v) for v in s_grid),
                   int(samples_per_cell), int(seed))
    return ErrorSurface(QuadraticSurface(*map(float, c_mu)),
                        QuadraticSurface(*map(float, c_sd)),
                        domain, quality, spec)


def fit_from_spec(spec: FitSpec) -> ErrorSurface:
    return fit_error_surface(spec.d_grid, spec.s_grid, spec.samples_per_cell, spec.seed)


_default_surface: ErrorSurface | None = None


def default_surface() -> ErrorSurface:
    """Surface on the default grid, fitted once per process."""
    global _default_surface
    if _default_surface is None:
        _default_surface = fit_from_spec(FitSpec())
    return _default_surface


def convert_error(beacon: Beacon, surface: ErrorSurface) -> ConvertedError:
    if beacon.meas_dist < 0:
        raise ValueError("meas_dist must be non-negative")
    s = math.sqrt(beacon.rep_sigma_p_sq)
    mu = surface.mu(beacon.meas_dist, s)
    sig_delta = surface.sigma(beacon.meas_dist, s)
    return ConvertedError(mu, math.sqrt(beacon.rep_sigma_d_sq + sig_delta ** 2))


def convert_for_solver(beacon: Beacon, surface: ErrorSurface | None) -> ConvertedError:
    """Conversion used by the solvers.

    The target's own self-measurement is an anchor at distance 0 whose error
    scale is its own positioning std; it is never passed through the surface.
    Like any reference, its std is clamped to the lower edge of the fit domain;
    an exact anchor would otherwise get an unbounded weight.
    """
    if surface is None:
        return ConvertedError(0.0, 1.0)
    if beacon.source_id == TARGET_ID:
        return ConvertedError(0.0, max(math.sqrt(beacon.rep_sigma_p_sq), surface.fit_domain.s_min))
    return convert_error(beacon, surface)
