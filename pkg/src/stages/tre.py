"""Temporal realism enhancement.

Aligns the radiometry of the inpainted region with its surroundings, smooths
the seams with Perona-Malik diffusion and composes the synthetic pre-event
view with Gamma speckle and a low-frequency drift field.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage, stats

from src import seeding
from src.errors import PreconditionError
from src.raster import BinaryMask, IntensityRaster, band, check_same_shape, exterior_ring

logger = logging.getLogger(__name__)

# kappa is quoted on the 0-255 scale; unit-scale rasters divide it by this
BYTE_SCALE = 255.0

KAPPA_SCALES = ("auto", "unit", "raw")
CONDUCTIONS = ("exponential", "rational")
DIFFUSION_SIDES = ("inner", "both")
PERTURB_SCOPES = ("global", "omega")
BOUNDARIES = ("closed", "fixed")


@dataclass(frozen=True)
class TREParams:
    """Parameters of the realism-enhancement stage."""

    kappa: float = 15.0
    diffusion_iterations: int = 20
    diffusion_step: float = 0.25
    band_width: int = 5
    looks: int = 4
    drift_alpha: float = 0.05
    drift_box: int = 51
    ring_width: int = 5
    kappa_scale: str = "auto"
    conduction: str = "exponential"
    diffusion_side: str = "inner"
    speckle_enabled: bool = True
    drift_enabled: bool = True
    perturb_scope: str = "global"

    def validate(self) -> tuple[bool, Optional[str]]:
        """
        Validate the parameters.

        Returns:
            Tuple of (is_valid, error_message)
        """
        if not 0 < self.diffusion_step <= 0.25:
            return False, "diffusion_step must lie in (0, 0.25]"
        if self.kappa <= 0:
            return False, "kappa must be > 0"
        if self.diffusion_iterations < 0:
            return False, "diffusion_iterations must be >= 0"
        if self.looks < 1:
            return False, "looks must be >= 1"
        if self.drift_alpha < 0:
            return False, "drift_alpha must be >= 0"
        if self.drift_box < 1 or self.drift_box % 2 == 0:
            return False, "drift_box must be an odd pixel count"
        if self.band_width < 1 or self.ring_width < 1:
            return False, "band_width and ring_width must be >= 1"
        if self.kappa_scale not in KAPPA_SCALES:
            return False, f"kappa_scale must be one of {KAPPA_SCALES}"
        if self.conduction not in CONDUCTIONS:
            return False, f"conduction must be one of {CONDUCTIONS}"
        if self.diffusion_side not in DIFFUSION_SIDES:
            return False, f"diffusion_side must be one of {DIFFUSION_SIDES}"
        if self.perturb_scope not in PERTURB_SCOPES:
            return False, f"perturb_scope must be one of {PERTURB_SCOPES}"
        return True, None

    def ensure_valid(self) -> None:
        is_valid, error = self.validate()
        if not is_valid:
            raise PreconditionError(error)


@dataclass(frozen=True, eq=False)
class DriftField:
    """Standardised low-frequency field G (zero mean, unit variance)."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.size == 0:
            raise PreconditionError(f"drift field must be a non-empty 2D grid, got {values.shape}")
        std = values.std()
        if std > 0 and (abs(values.mean()) > 1e-6 * std or abs(std - 1.0) > 1e-6):
            raise PreconditionError("drift field is not standardised")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def flat(cls, shape: tuple[int, int]) -> "DriftField":
        """All-zero field, used when drift is disabled."""
        return cls(np.zeros(shape))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def effective_kappa(image: IntensityRaster, params: TREParams) -> float:
    """Conduction threshold on the raster's own intensity scale."""
    if params.kappa_scale == "raw":
        return params.kappa
    if params.kappa_scale == "unit" or float(image.pixels.max()) <= 1.0:
        return params.kappa / BYTE_SCALE
    return params.kappa


def _conduct_exponential(gradient: np.ndarray, kappa: float) -> np.ndarray:
    return np.exp(-np.square(gradient / kappa))


def _conduct_rational(gradient: np.ndarray, kappa: float) -> np.ndarray:
    return 1.0 / (1.0 + np.square(gradient / kappa))


_CONDUCTION = {
    "exponential": _conduct_exponential,
    "rational": _conduct_rational,
}


def histogram_match(image: IntensityRaster, omega: BinaryMask, ring: BinaryMask) -> IntensityRaster:
    """
    Map the values inside ``omega`` onto the distribution of the ``ring`` values.

    Each value v becomes Q_ring(F_omega(v)), with F_omega the mid-rank
    empirical CDF and Q_ring the Hazen-interpolated quantile function, so a
    multiset matched to itself is returned unchanged. Pixels outside omega
    are untouched.
    """
    check_same_shape(image, omega, ring)
    if not omega.any():
        raise PreconditionError("histogram matching needs a non-empty region")
    if not ring.any():
        raise PreconditionError("histogram matching needs a non-empty reference ring")
    if (omega.bits & ring.bits).any():
        raise PreconditionError("region and reference ring must be disjoint")

    values = image.as_float()
    source = values[omega.bits]
    reference = values[ring.bits]
    levels = (stats.rankdata(source, method="average") - 0.5) / source.size
    values[omega.bits] = np.quantile(reference, levels, method="hazen")
    return IntensityRaster(values)


def anisotropic_diffusion(
    image: IntensityRaster, domain: BinaryMask, params: TREParams, boundary: str = "closed"
) -> IntensityRaster:
    """
    Explicit Perona-Malik diffusion restricted to ``domain``.

    Pixels outside the domain never change. With a "closed" boundary fluxes
    only flow between 4-neighbours that are both in the domain, so the
    intensity sum over the domain is conserved. With a "fixed" boundary the
    exterior neighbours are read as fixed values: the seam at the domain edge
    is smoothed, at the cost of exchanging intensity across it.
    """
    params.ensure_valid()
    check_same_shape(image, domain)
    if boundary not in BOUNDARIES:
        raise PreconditionError(f"boundary must be one of {BOUNDARIES}, got '{boundary}'")
    values = image.as_float()
    inside = domain.bits
    if not inside.any() or params.diffusion_iterations == 0:
        return IntensityRaster(values)

    kappa = effective_kappa(image, params)
    conduct = _CONDUCTION[params.conduction]
    if boundary == "closed":
        east_pairs = inside[:, 1:] & inside[:, :-1]
        south_pairs = inside[1:, :] & inside[:-1, :]
    else:
        east_pairs = inside[:, 1:] | inside[:, :-1]
        south_pairs = inside[1:, :] | inside[:-1, :]

    for _ in range(params.diffusion_iterations):
        east = values[:, 1:] - values[:, :-1]
        south = values[1:, :] - values[:-1, :]
        east_flux = np.where(east_pairs, conduct(east, kappa) * east, 0.0)
        south_flux = np.where(south_pairs, conduct(south, kappa) * south, 0.0)
        update = np.zeros_like(values)
        update[:, :-1] += east_flux
        update[:, 1:] -= east_flux
        update[:-1, :] += south_flux
        update[1:, :] -= south_flux
        values += params.diffusion_step * np.where(inside, update, 0.0)

    np.maximum(values, 0.0, out=values)
    return IntensityRaster(values)


def sample_speckle(width: int, height: int, looks: int, rng_seed: int) -> IntensityRaster:
    """I.i.d. Gamma(L, 1/L) multiplicative speckle: mean 1, variance 1/L."""
    if looks < 1:
        raise PreconditionError(f"looks must be >= 1, got {looks}")
    rng = seeding.stream(rng_seed, seeding.SPECKLE)
    return IntensityRaster(rng.gamma(shape=looks, scale=1.0 / looks, size=(height, width)))


def sample_drift(width: int, height: int, params: TREParams, rng_seed: int) -> DriftField:
    """White Gaussian noise, box filtered (reflect edges), re-standardised."""
    if params.drift_box < 1 or params.drift_box % 2 == 0:
        raise PreconditionError(f"drift_box must be odd, got {params.drift_box}")
    field = seeding.stream(rng_seed, seeding.DRIFT).standard_normal((height, width))
    if params.drift_box > 1:
        field = ndimage.uniform_filter(field, size=params.drift_box, mode="reflect")
    std = field.std()
    if std == 0:
        return DriftField.flat(field.shape)
    return DriftField((field - field.mean()) / std)


def compose_pre_event(
    i_eq: IntensityRaster,
    speckle: IntensityRaster,
    drift: DriftField,
    alpha: float,
    region: Optional[BinaryMask] = None,
) -> IntensityRaster:
    """
    Pre-event view I_eq * eta * (1 + alpha * G), clamped below at zero.

    Applied to the whole frame unless ``region`` restricts it.
    """
    check_same_shape(i_eq, speckle, drift)
    values = i_eq.as_float()
    perturbed = values * speckle.as_float() * (1.0 + alpha * drift.values)
    if region is not None:
        check_same_shape(i_eq, region)
        perturbed = np.where(region.bits, perturbed, values)
    np.maximum(perturbed, 0.0, out=perturbed)
    return IntensityRaster(perturbed)


def tre_apply(
    inpainted: IntensityRaster, omega: BinaryMask, params: TREParams, rng_seed: int
) -> IntensityRaster:
    """
    Histogram matching, band-limited diffusion, then speckle and drift.

    The reference ring is ``exterior_ring(omega, ring_width)``. Diffusion
    runs over ``band(omega, band_width)``. With ``diffusion_side`` "inner"
    only the omega half of the band is updated, reading the original pixels
    across the seam as fixed values; "both" updates the whole band with a
    closed, intensity-conserving boundary.
    """
    params.ensure_valid()
    check_same_shape(inpainted, omega)
    image = inpainted

    if omega.any():
        ring = exterior_ring(omega, params.ring_width)
        if ring.any():
            image = histogram_match(image, omega, ring)
        else:
            logger.warning(f"Histogram matching skipped: {ring.note}")
        domain = band(omega, params.band_width)
        boundary = "closed"
        if params.diffusion_side == "inner":
            domain, boundary = domain & omega, "fixed"
        image = anisotropic_diffusion(image, domain, params, boundary=boundary)
        logger.debug(f"TRE: matched {omega.count} pixels, diffused over {domain.count}")

    height, width = image.shape
    if params.speckle_enabled:
        speckle = sample_speckle(width, height, params.looks, rng_seed)
    else:
        speckle = IntensityRaster(np.ones(image.shape))
    if params.drift_enabled and params.drift_alpha > 0:
        drift, alpha = sample_drift(width, height, params, rng_seed), params.drift_alpha
    else:
        drift, alpha = DriftField.flat(image.shape), 0.0

    region = omega if params.perturb_scope == "omega" else None
    return compose_pre_event(image, speckle, drift, alpha, region=region)
