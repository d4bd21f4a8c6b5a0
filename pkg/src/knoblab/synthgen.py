"""Deterministic, differentiable procedural micrograph renderer.

Plays the role of the attribute-conditioned generator: a layout seed fixes
particle positions, radius jitters, rotations and pore placements; the four
material attributes (size, porosity, dispersity, facetness) then control the
rendered grayscale image smoothly, so the image is differentiable with
respect to the attributes end to end.

Kernel model: each particle is a rotated superellipse whose membership is a
sigmoid of (radius - n-norm distance) with softness TAU pixels.  The
superellipse exponent is 2 + 6*facetness; a polynomial area-normalization factor
keeps the covered area independent of facetness so shape and size stay
disentangled in pixel space.  Pores are small subtractive circular kernels
whose depth scales with porosity.  Intensity = 0.5*(tanh(field) + 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .rng import CounterStream

ATTRIBUTE_NAMES = ("size", "porosity", "dispersity", "facetness")

TAU = 1.5  # particle sigmoid softness, pixels
TAU_DISP_SHARPEN = 0.8  # boundary sharpening with dispersity: 1/tau_eff = (1 + 0.8*d)/tau
PORE_TAU = 0.75  # pores are only a few pixels wide; keep them sharp
AMPLITUDE_SPREAD = 1.0  # brightness modulation of the radius jitter
AMPLITUDE_LIFT = 0.0  # uniform plateau lift with dispersity (disabled: mean
# brightness is the size cue, so dispersity must stay brightness-neutral)
FIELD_GAIN = 0.8  # pre-tanh gain; keeps single-particle plateaus off the saturated tail
PORES_PER_PARTICLE = 3
PORE_DEPTH_SCALE = 0.8
PORE_RADIUS_FRAC = 0.18
DEFAULT_PARTICLE_COUNT = 12
REFERENCE_RESOLUTION = 64
MIN_RESOLUTION = 16

# degree-7 fit of sqrt(pi * Gamma(1+2/n) / (4*Gamma(1+1/n)^2)) over n in [2, 8];
# multiplying the radius by this keeps superellipse area ~= pi r^2 for all n,
# so facetness changes shape without changing covered area
_AREA_NORM_COEFFS = (
    1.7229325825481, -0.882952584243586, 0.44868318490727227, -0.13266024189633066,
    0.023942154845922582, -0.0026010848780671, 0.0001563688179205521, -3.9973322195057785e-06,
)


class AttributeRangeError(ValueError):
    """An attribute component fell outside [0, 1]."""


@dataclass(frozen=True)
class AttributeVector:
    """The four actionable material concepts, each in [0, 1]."""

    size: float
    porosity: float
    dispersity: float
    facetness: float

    def __post_init__(self):
        for name in ATTRIBUTE_NAMES:
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise AttributeRangeError(f"attribute {name!r} = {v} outside [0, 1]")

    def as_array(self) -> np.ndarray:
        return np.array([self.size, self.porosity, self.dispersity, self.facetness])

    def replace(self, index: int, value: float) -> "AttributeVector":
        if not 0 <= index < 4:
            raise IndexError(f"attribute index {index} out of range")
        vals = list(self.as_array())
        vals[index] = value
        return AttributeVector(*vals)

    @staticmethod
    def from_array(values) -> "AttributeVector":
        vals = [float(v) for v in values]
        if len(vals) != 4:
            raise AttributeRangeError(f"attribute vector needs 4 components, got {len(vals)}")
        return AttributeVector(*vals)


@dataclass(eq=False)
class ParticleLayout:
    """Attribute-independent geometry, fully determined by the seed."""

    seed: int
    centers: np.ndarray  # (P, 2) in the unit square
    radius_jitter: np.ndarray  # (P,) in [-0.5, 0.5]
    rotations: np.ndarray  # (P,) in [0, 2*pi)
    pore_offsets: np.ndarray  # (P, PORES_PER_PARTICLE, 2) in units of particle radius

    @property
    def particle_count(self) -> int:
        return len(self.centers)


def layout_from_seed(seed: int, particle_count: int = DEFAULT_PARTICLE_COUNT) -> ParticleLayout:
    """Derive a layout from counter-based draws on (seed, index).

    Draw order per particle: cx, cy, radius jitter, rotation, then
    PORES_PER_PARTICLE pairs of (angle, radial fraction).
    """
    if particle_count < 1:
        raise ValueError("particle_count must be >= 1")
    stream = CounterStream(seed)
    centers = np.empty((particle_count, 2))
    jitter = np.empty(particle_count)
    rotations = np.empty(particle_count)
    pores = np.empty((particle_count, PORES_PER_PARTICLE, 2))
    for i in range(particle_count):
        centers[i, 0] = stream.next_uniform()
        centers[i, 1] = stream.next_uniform()
        # bimodal draw in [-0.5, -0.25] U [0.25, 0.5]: dispersity then splits
        # the particles into a distinct big and small population
        u = stream.next_uniform()
        jitter[i] = math.copysign(0.25 + 0.25 * abs(2.0 * u - 1.0), u - 0.5)
        rotations[i] = stream.next_uniform() * 2.0 * math.pi
        for k in range(PORES_PER_PARTICLE):
            angle = stream.next_uniform() * 2.0 * math.pi
            frac = 0.15 + 0.45 * stream.next_uniform()
            pores[i, k, 0] = frac * math.cos(angle)
            pores[i, k, 1] = frac * math.sin(angle)
    # antithetic jitter pairs: per-layout mean is exactly zero, so dispersity
    # widens the radius spread without shifting total particle area
    for i in range(1, particle_count, 2):
        jitter[i] = -jitter[i - 1]
    if particle_count % 2:
        jitter[-1] = 0.0
    return ParticleLayout(seed, centers, jitter, rotations, pores)


def base_radius_pixels(size: float, resolution: int) -> float:
    """Mean kernel radius before jitter: (2 + 10*size) px at 64x64, scaled."""
    return (2.0 + 10.0 * size) * resolution / REFERENCE_RESOLUTION


@dataclass(eq=False)
class _LayoutFields:
    """Per-pixel constant fields reused across renders of one layout."""

    log_u: np.ndarray  # (P, H, W) log |rotated x offset|, clamped
    log_v: np.ndarray
    pore_dx0: np.ndarray  # (K, H, W) pixel offset to parent center, x
    pore_dy0: np.ndarray
    pore_ox: np.ndarray  # (K, 1, 1) pore offsets in radius units
    pore_oy: np.ndarray
    jitter_col: np.ndarray  # (P, 1, 1)
    pore_jitter_col: np.ndarray  # (K, 1, 1) parent jitter per pore


_fields_cache: dict[tuple[int, int, int], _LayoutFields] = {}


def _layout_fields(layout: ParticleLayout, resolution: int) -> _LayoutFields:
    key = (layout.seed, layout.particle_count, resolution)
    cached = _fields_cache.get(key)
    if cached is not None:
        return cached
    p = layout.particle_count
    xs = np.arange(resolution) + 0.5
    gx, gy = np.meshgrid(xs, xs)  # gx varies along columns, gy along rows
    cx = (layout.centers[:, 0] * resolution)[:, None, None]
    cy = (layout.centers[:, 1] * resolution)[:, None, None]
    dx = gx[None] - cx
    dy = gy[None] - cy
    cos_t = np.cos(layout.rotations)[:, None, None]
    sin_t = np.sin(layout.rotations)[:, None, None]
    u = dx * cos_t + dy * sin_t
    v = -dx * sin_t + dy * cos_t
    # clamp away from zero so log and d/dn exp(n log|u|) stay finite
    log_u = np.log(np.maximum(np.abs(u), 1e-2))
    log_v = np.log(np.maximum(np.abs(v), 1e-2))

    k = p * PORES_PER_PARTICLE
    parent = np.repeat(np.arange(p), PORES_PER_PARTICLE)
    pore_dx0 = gx[None] - cx[parent]
    pore_dy0 = gy[None] - cy[parent]
    offs = layout.pore_offsets.reshape(k, 2)
    fields = _LayoutFields(
        log_u=log_u,
        log_v=log_v,
        pore_dx0=pore_dx0,
        pore_dy0=pore_dy0,
        pore_ox=offs[:, 0][:, None, None],
        pore_oy=offs[:, 1][:, None, None],
        jitter_col=layout.radius_jitter[:, None, None],
        pore_jitter_col=layout.radius_jitter[parent][:, None, None],
    )
    if len(_fields_cache) > 64:
        _fields_cache.clear()
    _fields_cache[key] = fields
    return fields


def _area_norm_factor(n: Tensor) -> Tensor:
    acc = Tensor(_AREA_NORM_COEFFS[-1])
    for c in _AREA_NORM_COEFFS[-2::-1]:  # Horner
        acc = ad.mul(acc, n) + c
    return acc


def _area_norm_value(n: float) -> float:
    acc = _AREA_NORM_COEFFS[-1]
    for c in _AREA_NORM_COEFFS[-2::-1]:
        acc = acc * n + c
    return acc


def render_tensors(
    layout: ParticleLayout,
    size: Tensor,
    porosity: Tensor,
    dispersity: Tensor,
    facetness: Tensor,
    resolution: int,
) -> Tensor:
    """Render as a graph node; gradients flow back to the four attribute scalars."""
    if resolution < MIN_RESOLUTION:
        raise ValueError(f"resolution must be >= {MIN_RESOLUTION}")
    fields = _layout_fields(layout, resolution)
    scale = resolution / REFERENCE_RESOLUTION

    n = facetness * 6.0 + 2.0  # superellipse exponent
    r_base = (size * 10.0 + 2.0) * scale
    r_mean = ad.mul(r_base, _area_norm_factor(n))

    # effective radii (P,1,1): r_mean * (1 + dispersity * jitter), rescaled so
    # the total particle area stays independent of dispersity (no size mimic)
    jit = Tensor(fields.jitter_col)
    m2 = float(np.mean(fields.jitter_col**2))
    spread_norm = ad.scalar_pow(ad.mul(ad.mul(dispersity, dispersity), m2) + 1.0, -0.5)
    r_disp = ad.mul(r_mean, spread_norm)
    radii = ad.mul(r_disp, ad.mul(dispersity, jit) + 1.0)

    # particle membership: sigmoid((r - rho) / TAU), rho = (|u|^n + |v|^n)^(1/n)
    s = ad.exp(ad.mul(n, Tensor(fields.log_u))) + ad.exp(ad.mul(n, Tensor(fields.log_v)))
    rho = ad.exp(ad.div(ad.log(s), n))
    # boundary softness falls with dispersity: a strong, layout-independent
    # edge-texture cue that stays orthogonal to the mean-brightness size cue
    inv_tau = ad.mul(dispersity, TAU_DISP_SHARPEN / TAU) + 1.0 / TAU
    membership = ad.sigmoid(ad.mul(ad.sub(radii, rho), inv_tau))
    # kernel amplitude anti-correlated with radius: smaller crystals image
    # brighter, so the radius spread also shows up in the intensity histogram.
    # The area-weighted mean of -spread*d*jit over particles is -2*spread*d^2*m2
    # / (1 + d^2*m2) (odd jitter moments vanish by the antithetic pairing), so
    # add that back uniformly: mean brightness then rises as lift*d for every
    # layout instead of drifting with a layout-dependent quadratic.
    comp = ad.mul(ad.mul(ad.mul(spread_norm, spread_norm), ad.mul(dispersity, dispersity)),
                  2.0 * AMPLITUDE_SPREAD * m2)
    amplitude = ad.mul(ad.mul(dispersity, jit), -AMPLITUDE_SPREAD) + ad.mul(dispersity, AMPLITUDE_LIFT) + comp + 1.0
    particle_field = ad.tsum(ad.mul(amplitude, membership), axis=0)

    # pores: circular subtractive kernels riding on their parent particle
    pore_radii = ad.mul(r_disp, ad.mul(dispersity, Tensor(fields.pore_jitter_col)) + 1.0)
    pdx = ad.sub(Tensor(fields.pore_dx0), ad.mul(pore_radii, Tensor(fields.pore_ox)))
    pdy = ad.sub(Tensor(fields.pore_dy0), ad.mul(pore_radii, Tensor(fields.pore_oy)))
    dist = ad.scalar_pow(ad.mul(pdx, pdx) + ad.mul(pdy, pdy) + 1e-12, 0.5)
    pore_kernel = ad.sigmoid(ad.mul(ad.sub(ad.mul(pore_radii, PORE_RADIUS_FRAC), dist), 1.0 / PORE_TAU))
    pore_field = ad.mul(porosity * PORE_DEPTH_SCALE, ad.tsum(pore_kernel, axis=0))

    field = ad.sub(particle_field, pore_field)
    return ad.mul(ad.tanh(ad.mul(field, FIELD_GAIN)) + 1.0, 0.5)


def render(layout: ParticleLayout, attrs: AttributeVector, resolution: int) -> Tensor:
    """Forward render at fixed attributes; returns an (H, W) image tensor in [0, 1]."""
    return render_tensors(
        layout,
        Tensor(attrs.size),
        Tensor(attrs.porosity),
        Tensor(attrs.dispersity),
        Tensor(attrs.facetness),
        resolution,
    )


def render_edit(seed: int, attrs: AttributeVector, resolution: int,
                particle_count: int = DEFAULT_PARTICLE_COUNT) -> Tensor:
    """Render the sample identified by ``seed`` with edited attributes."""
    return render(layout_from_seed(seed, particle_count), attrs, resolution)


def effective_radii(layout: ParticleLayout, attrs: AttributeVector, resolution: int) -> np.ndarray:
    """Per-particle kernel radii in pixels (diagnostic helper)."""
    norm = _area_norm_value(2.0 + 6.0 * attrs.facetness)
    r_mean = base_radius_pixels(attrs.size, resolution) * norm
    m2 = float(np.mean(layout.radius_jitter**2))
    spread_norm = 1.0 / math.sqrt(1.0 + attrs.dispersity**2 * m2)
    return r_mean * spread_norm * (1.0 + attrs.dispersity * layout.radius_jitter)


def image_distance(a, b, order: int = 2) -> float:
    """Mean-per-pixel p-norm distance: (sum |a-b|^p / pixels)^(1/p)."""
    av = a.values if isinstance(a, Tensor) else np.asarray(a, dtype=np.float64)
    bv = b.values if isinstance(b, Tensor) else np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape:
        raise ad.ShapeError(f"image_distance: shapes {av.shape} vs {bv.shape}")
    if order not in (1, 2):
        raise ad.ContractError(f"image_distance: unsupported order {order}")
    diff = np.abs(av - bv)
    return float((np.sum(diff**order) / diff.size) ** (1.0 / order))
