"""Model parameters: trap, interaction profile, coupling regime.

The physical setup is N bosons in an external trap ``V(x) = strength * |x|^s``
interacting through a repulsive pair kernel ``v_N(x) = N^{d beta} v(N^beta x)``
with overall coupling ``g_N``; the product ``G = g_N * integral(v)`` is the
effective cubic coupling of the mean-field functional. This module holds the
parameter containers, the derived length/energy scales, validity checks for
the interaction profile, and the low-energy scattering length of ``kappa v``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .grids import Field, Grid

__all__ = [
    "TrapSpec",
    "InteractionSpec",
    "RegimeParams",
    "DerivedScales",
    "AdmissibilityReport",
    "Assumption1Report",
    "ScatteringResult",
    "ModelConfig",
    "sphere_area",
    "derived_scales",
    "admissibility",
    "check_assumption1",
    "scattering_length",
    "load_config",
]


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d (2, 2*pi, 4*pi for d=1,2,3)."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@dataclass(frozen=True)
class TrapSpec:
    """Homogeneous trap V(x) = strength * |x|^s with s >= 2."""

    strength: float = 1.0
    s: float = 2.0

    def __post_init__(self):
        if not self.strength > 0:
            raise ValueError(f"trap strength must be positive, got {self.strength}")
        if not self.s >= 2:
            raise ValueError(f"trap exponent s must be >= 2, got {self.s}")

    def radial(self, r):
        return self.strength * np.asarray(r, dtype=float) ** self.s

    def on_grid(self, grid: Grid) -> np.ndarray:
        """V sampled on the grid (real array)."""
        return self.strength * grid.r2 ** (self.s / 2.0)


# radial profiles r >= 0 -> v(r); all smooth and rapidly decaying
_PROFILES = {
    "gaussian": lambda r: np.exp(-np.asarray(r, dtype=float) ** 2),
    "hollow_gaussian": lambda r: (1.0 - np.asarray(r, dtype=float) ** 2)
    * np.exp(-np.asarray(r, dtype=float) ** 2),
    "zero": lambda r: np.zeros_like(np.asarray(r, dtype=float)),
}


@dataclass(frozen=True)
class InteractionSpec:
    """Pair interaction: radial profile v plus the scaling exponent beta.

    The N-body kernel is ``v_N(x) = N^{d beta} v(N^beta |x|)`` on a
    d-dimensional grid, so its range shrinks like N^{-beta} while its integral
    stays fixed.
    """

    profile: str = "gaussian"
    beta: float = 0.2

    def __post_init__(self):
        if self.profile not in _PROFILES:
            raise ValueError(
                f"unknown profile {self.profile!r}; known: {sorted(_PROFILES)}"
            )
        if not 0.0 < self.beta < 1.0 / 3.0:
            raise ValueError(f"beta must lie in (0, 1/3), got {self.beta}")

    def radial(self, r):
        return _PROFILES[self.profile](r)

    def v0(self) -> float:
        return float(self.radial(0.0))

    def _radial_integral(self, d: int, transform) -> float:
        fn = lambda r: transform(self.radial(r)) * r ** (d - 1)
        val, _ = integrate.quad(fn, 0.0, np.inf, limit=200)
        return sphere_area(d) * val

    def integral(self, d: int = 3) -> float:
        """integral of v over R^d."""
        return self._radial_integral(d, lambda v: v)

    def abs_integral(self, d: int = 3) -> float:
        """integral of |v| over R^d."""
        return self._radial_integral(d, np.abs)

    def first_moment(self, d: int = 3) -> float:
        """integral of |x| |v(x)| over R^d."""
        fn = lambda r: np.abs(self.radial(r)) * r ** d
        val, _ = integrate.quad(fn, 0.0, np.inf, limit=200)
        return sphere_area(d) * val

    def l2_norm(self, d: int = 3) -> float:
        fn = lambda r: self.radial(r) ** 2 * r ** (d - 1)
        val, _ = integrate.quad(fn, 0.0, np.inf, limit=200)
        return math.sqrt(sphere_area(d) * val)

    def kernel_on_grid(self, grid: Grid, N: int) -> Field:
        """Sample v_N(x) = N^{d beta} v(N^beta |x|) on the grid."""
        if N < 1:
            raise ValueError(f"N must be >= 1, got {N}")
        r = np.sqrt(grid.r2)
        scale = float(N) ** self.beta
        vals = float(N) ** (grid.d * self.beta) * self.radial(scale * r)
        return Field(grid, vals.astype(np.complex128))


@dataclass(frozen=True)
class RegimeParams:
    """Particle number, scaling exponent, coupling, and counting exponent."""

    N: int
    beta: float
    g_N: float
    lambda_weight: float | None = None

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        # beta < 1/3 is a *regime* condition reported by admissibility();
        # derived_scales enforces it because the scales assume it.
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if not self.g_N >= 0:
            raise ValueError(f"g_N must be nonnegative, got {self.g_N}")
        if self.lambda_weight is not None and not 0.0 < self.lambda_weight < 1.0:
            raise ValueError(
                f"lambda_weight must lie in (0, 1), got {self.lambda_weight}"
            )


@dataclass(frozen=True)
class DerivedScales:
    """Length/coupling scales of the strong-coupling (Thomas-Fermi) regime.

    All exponents use the three-dimensional convention:

    * ``epsilon``              semiclassical parameter (g integral(v))^{-(s+2)/(2(s+3))}
    * ``tf_radius``            Thomas-Fermi cloud radius scale g^{1/(s+3)}
    * ``healing_length``       N^{-1/2} g^{-3/(2(s+3))}
    * ``interaction_range``    N^{-beta}
    * ``gn_exponents``         admissible growth exponents for g_N:
                               ((1-3b)(s+3)/(s+5), (s+3)b/(2(s+1)))
    """

    epsilon: float
    tf_radius: float
    healing_length: float
    interaction_range: float
    gn_exponents: tuple


def derived_scales(
    trap: TrapSpec, interaction: InteractionSpec, regime: RegimeParams
) -> DerivedScales:
    """Compute the derived scales; errors if g_N <= 0 or integral(v) <= 0."""
    if regime.g_N <= 0:
        raise ValueError("derived scales need g_N > 0")
    if not 0.0 < regime.beta < 1.0 / 3.0:
        raise ValueError(f"derived scales need beta in (0, 1/3), got {regime.beta}")
    intv = interaction.integral(3)
    if intv <= 0:
        raise ValueError(f"derived scales need integral(v) > 0, got {intv}")
    s = trap.s
    b = regime.beta
    g = regime.g_N
    big_g = g * intv
    return DerivedScales(
        epsilon=big_g ** (-(s + 2.0) / (2.0 * (s + 3.0))),
        tf_radius=g ** (1.0 / (s + 3.0)),
        healing_length=regime.N ** (-0.5) * g ** (-3.0 / (2.0 * (s + 3.0))),
        interaction_range=float(regime.N) ** (-b),
        gn_exponents=(
            (1.0 - 3.0 * b) * (s + 3.0) / (s + 5.0),
            (s + 3.0) * b / (2.0 * (s + 1.0)),
        ),
    )


@dataclass(frozen=True)
class AdmissibilityReport:
    """Which coupling-growth regimes the parameters fall into.

    ``thm1`` covers the condensation regime (beta < 1/3 and g_N below both
    N^{exponent} margins); ``thm2`` covers the counting regime
    (beta < 1/6 and counting exponent inside (3 beta, 1 - 3 beta)).
    """

    thm1_ok: bool
    thm1_margins: tuple
    thm2_ok: bool
    lambda_interval: tuple
    beta: float
    lambda_weight: float | None


def admissibility(trap: TrapSpec, regime: RegimeParams) -> AdmissibilityReport:
    s = trap.s
    b = regime.beta
    exps = (
        (1.0 - 3.0 * b) * (s + 3.0) / (s + 5.0),
        (s + 3.0) * b / (2.0 * (s + 1.0)),
    )
    margins = tuple(regime.g_N / float(regime.N) ** e for e in exps)
    thm1_ok = b < 1.0 / 3.0 and all(m < 1.0 for m in margins)
    lo, hi = 3.0 * b, 1.0 - 3.0 * b
    lam = regime.lambda_weight
    thm2_ok = b < 1.0 / 6.0 and lam is not None and lo < lam < hi
    return AdmissibilityReport(
        thm1_ok=thm1_ok,
        thm1_margins=margins,
        thm2_ok=thm2_ok,
        lambda_interval=(lo, hi),
        beta=b,
        lambda_weight=lam,
    )


@dataclass(frozen=True)
class Assumption1Report:
    """Checks that an interaction profile is admissible.

    The profile must be nonzero, spherically symmetric, of positive type
    (nonnegative Fourier transform), with finite first absolute moment and
    finite L2 norm; ``tail_ok`` confirms the sampled kernel has decayed at the
    box boundary so the grid checks are meaningful.
    """

    nonzero: bool
    positive_type: bool
    min_fourier_coeff: float
    symmetric: bool
    first_moment: float
    l2_norm: float
    tail_ok: bool

    @property
    def ok(self) -> bool:
        return (
            self.nonzero
            and self.positive_type
            and self.symmetric
            and self.tail_ok
            and np.isfinite(self.first_moment)
            and np.isfinite(self.l2_norm)
        )


def check_assumption1(interaction: InteractionSpec, grid: Grid) -> Assumption1Report:
    """Check the admissibility of the unscaled profile v on the given grid."""
    r = np.sqrt(grid.r2)
    vals = np.asarray(interaction.radial(r), dtype=float)
    vmax = float(np.max(np.abs(vals)))
    nonzero = vmax > 0.0

    # recenter so the transform is that of a function of displacement; for an
    # even real profile the coefficients are then real up to rounding
    hat = np.fft.fftn(np.fft.ifftshift(vals))
    min_coeff = float(np.min(hat.real))
    scale = float(np.max(np.abs(hat))) if vmax > 0 else 1.0
    positive_type = min_coeff >= -1e-12 * max(1.0, scale)

    symmetric = True
    for ax in range(grid.d):
        flipped = np.roll(np.flip(vals, axis=ax), 1, axis=ax)
        if not np.allclose(vals, flipped, rtol=0.0, atol=1e-12 * max(vmax, 1.0)):
            symmetric = False

    tail = float(np.max(np.abs(vals[grid.boundary_shell]))) if nonzero else 0.0
    tail_ok = tail <= 1e-10 * max(vmax, 1.0)

    return Assumption1Report(
        nonzero=nonzero,
        positive_type=positive_type,
        min_fourier_coeff=min_coeff,
        symmetric=symmetric,
        first_moment=interaction.first_moment(grid.d),
        l2_norm=interaction.l2_norm(grid.d),
        tail_ok=tail_ok,
    )


@dataclass
class ScatteringResult:
    """Zero-energy scattering data for the pair potential kappa * v."""

    kappa: float
    a: float
    a_born: float
    r: np.ndarray
    u: np.ndarray
    f: np.ndarray
    fit_residual: float
    mesh: int


def _integrate_radial(interaction: InteractionSpec, kappa: float, r_max: float, mesh: int):
    """Fixed-step RK4 for u'' = (kappa/2) v(r) u, u(0)=0, u'(0)=1."""
    h = r_max / mesh
    r = np.linspace(0.0, r_max, mesh + 1)
    u = np.empty(mesh + 1)
    c = lambda rr: 0.5 * kappa * float(interaction.radial(rr))
    y, w = 0.0, 1.0
    u[0] = y
    for i in range(mesh):
        ri = r[i]
        k1y, k1w = w, c(ri) * y
        k2y, k2w = w + 0.5 * h * k1w, c(ri + 0.5 * h) * (y + 0.5 * h * k1y)
        k3y, k3w = w + 0.5 * h * k2w, c(ri + 0.5 * h) * (y + 0.5 * h * k2y)
        k4y, k4w = w + h * k3w, c(ri + h) * (y + h * k3y)
        y += h * (k1y + 2 * k2y + 2 * k3y + k4y) / 6.0
        w += h * (k1w + 2 * k2w + 2 * k3w + k4w) / 6.0
        u[i + 1] = y
    return r, u


def _fit_tail(r: np.ndarray, u: np.ndarray):
    """Fit u ~ m (r - a) on the outer 10% of the mesh."""
    n_fit = max(8, len(r) // 10)
    rr, uu = r[-n_fit:], u[-n_fit:]
    m, b = np.polyfit(rr, uu, 1)
    resid = float(np.sqrt(np.mean((uu - (m * rr + b)) ** 2)))
    if m == 0.0:
        raise ValueError("tail fit degenerate (zero slope)")
    return float(-b / m), float(m), resid


def scattering_length(
    interaction: InteractionSpec,
    kappa: float,
    r_max: float = 12.0,
    mesh: int = 4096,
) -> ScatteringResult:
    """Scattering length of kappa * v from the zero-energy radial problem.

    Integrates u'' = (kappa/2) v u outward with fixed-step RK4 and extracts a
    from the linear asymptote u ~ const * (r - a); also reports the Born value
    kappa * integral(v) / (8 pi). Errors if v has not decayed by r_max or if
    halving the mesh changes a beyond 1e-6 (mesh too coarse).
    """
    if mesh < 64:
        raise ValueError(f"mesh must be >= 64, got {mesh}")
    v_edge = abs(float(interaction.radial(r_max)))
    v_scale = max(abs(interaction.v0()), 1e-300)
    if v_edge > 1e-10 * v_scale:
        raise ValueError(
            f"profile has not decayed at r_max={r_max} (|v|={v_edge:.3e}); increase r_max"
        )

    r, u = _integrate_radial(interaction, kappa, r_max, mesh)
    a, m, resid = _fit_tail(r, u)
    u_scale = float(np.max(np.abs(u)))
    if resid > 1e-8 * max(u_scale, 1.0):
        raise ValueError(
            f"tail of u is not linear (fit residual {resid:.3e}); increase r_max"
        )

    r2, u2 = _integrate_radial(interaction, kappa, r_max, mesh // 2)
    a2, _, _ = _fit_tail(r2, u2)
    a_born = kappa * interaction.integral(3) / (8.0 * math.pi)
    tol = max(1e-6 * max(abs(a), abs(a_born)), 1e-12)
    if abs(a - a2) > tol:
        raise ValueError(
            f"mesh too coarse: a changes by {abs(a - a2):.3e} when halved"
        )

    u_norm = u / m
    f = np.empty_like(u_norm)
    f[0] = np.nan  # u/r undefined at the origin
    f[1:] = u_norm[1:] / r[1:]
    return ScatteringResult(
        kappa=kappa,
        a=a,
        a_born=a_born,
        r=r,
        u=u_norm,
        f=f,
        fit_residual=resid,
        mesh=mesh,
    )


@dataclass(frozen=True)
class ModelConfig:
    """Bundle of trap, interaction, and regime parameters."""

    trap: TrapSpec = field(default_factory=TrapSpec)
    interaction: InteractionSpec = field(default_factory=InteractionSpec)
    regime: RegimeParams | None = None

    def scales(self) -> DerivedScales:
        if self.regime is None:
            raise ValueError("config has no regime block")
        return derived_scales(self.trap, self.interaction, self.regime)

    def to_dict(self) -> dict:
        out = {
            "trap": {"strength": self.trap.strength, "s": self.trap.s},
            "interaction": {
                "profile": self.interaction.profile,
                "beta": self.interaction.beta,
            },
        }
        if self.regime is not None:
            out["regime"] = {
                "N": self.regime.N,
                "g_N": self.regime.g_N,
                "lambda_weight": self.regime.lambda_weight,
            }
        return out


def _take(block: dict, where: str, allowed: dict) -> dict:
    unknown = set(block) - set(allowed)
    if unknown:
        raise ValueError(f"unknown key(s) in {where!r} block: {sorted(unknown)}")
    out = {}
    for key, cast in allowed.items():
        if key in block and block[key] is not None:
            out[key] = cast(block[key])
    return out


def config_from_dict(data: dict) -> ModelConfig:
    """Build a ModelConfig from a plain dict, rejecting unknown keys."""
    unknown = set(data) - {"trap", "interaction", "regime"}
    if unknown:
        raise ValueError(f"unknown top-level config key(s): {sorted(unknown)}")
    trap = TrapSpec(**_take(data.get("trap", {}), "trap", {"strength": float, "s": float}))
    inter = InteractionSpec(
        **_take(data.get("interaction", {}), "interaction", {"profile": str, "beta": float})
    )
    regime = None
    if "regime" in data:
        reg = _take(
            data["regime"],
            "regime",
            {"N": int, "g_N": float, "lambda_weight": float},
        )
        if "N" not in reg or "g_N" not in reg:
            raise ValueError("regime block needs both N and g_N")
        regime = RegimeParams(beta=inter.beta, **reg)
    return ModelConfig(trap=trap, interaction=inter, regime=regime)


def load_config(path) -> ModelConfig:
    """Load a JSON config {trap: {...}, interaction: {...}, regime: {...}}."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config root must be a JSON object")
    return config_from_dict(data)
