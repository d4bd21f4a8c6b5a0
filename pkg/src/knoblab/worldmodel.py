"""Synthetic labeled world: lots, ground-truth stress law, tiled dataset.

The stress law is linear with coefficients chosen so that smaller size and
larger porosity/dispersity/facetness raise peak stress, with size dominating.
It stands in for physical reality only; nothing downstream depends on its
exact form beyond the gradient signs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import rng
from .synthgen import ATTRIBUTE_NAMES, AttributeVector

SCHEMA_VERSION = 1

STRESS_OFFSET = 100.0
STRESS_COEFFS = {"size": -40.0, "porosity": 25.0, "dispersity": 15.0, "facetness": 10.0}

# counter-space offsets keeping independent draw families disjoint
_SHIFT_BASE = 0x10
_SAMPLE_SEED_BASE = 1_000_000
_JITTER_BASE = 0x20
_NOISE_BASE = 0x40
_SPLIT_INDEX = 0xC0FFEE


@dataclass
class LotSpec:
    """One material batch: a letter code, its attributes and true stress."""

    lot_id: str
    attrs: AttributeVector
    true_stress: float
    tiles: int = 0


@dataclass
class SampleRecord:
    sample_seed: int
    lot_id: str
    attrs: AttributeVector
    label: float
    split: str  # "train" | "val"


@dataclass
class DatasetManifest:
    schema_version: int
    master_seed: int
    lots: list[LotSpec]
    samples: list[SampleRecord] = field(default_factory=list)

    def split_samples(self, split: str) -> list[SampleRecord]:
        return [s for s in self.samples if s.split == split]

    def lot_by_id(self, lot_id: str) -> LotSpec:
        for lot in self.lots:
            if lot.lot_id == lot_id:
                return lot
        raise KeyError(f"unknown lot id {lot_id!r}")


def oracle_stress(attrs: AttributeVector) -> float:
    """Noiseless ground-truth peak stress, arbitrary stress units."""
    return (
        STRESS_OFFSET
        + -STRESS_COEFFS["size"] * (1.0 - attrs.size)
        + STRESS_COEFFS["porosity"] * attrs.porosity
        + STRESS_COEFFS["dispersity"] * attrs.dispersity
        + STRESS_COEFFS["facetness"] * attrs.facetness
    )


def lot_id_for(index: int) -> str:
    """Spreadsheet-style letter codes: A..Z, AA, AB, ..."""
    letters = ""
    index += 1
    while index > 0:
        index, rem = divmod(index - 1, 26)
        letters = chr(ord("A") + rem) + letters
    return letters


def make_lots(count: int, master_seed: int) -> list[LotSpec]:
    """Low-discrepancy lot attributes over [0.1, 0.9]^4, deterministic in the seed."""
    if count < 2:
        raise ValueError("need at least 2 lots")
    shift = tuple(rng.uniform(master_seed, _SHIFT_BASE + d) for d in range(4))
    lots = []
    for i in range(count):
        point = rng.halton4(i, shift)
        attrs = AttributeVector(*(0.1 + 0.8 * x for x in point))
        lots.append(LotSpec(lot_id_for(i), attrs, oracle_stress(attrs)))
    return lots


def synth_dataset(
    lots: list[LotSpec],
    tiles_per_lot: int,
    jitter: float = 0.02,
    noise_sd: float = 1.0,
    master_seed: int = 0,
) -> DatasetManifest:
    """Per-sample seeds, jittered attributes, noisy labels, 90/10 split.

    Every per-sample quantity derives from the sample's own seed, so the
    manifest is order-independent and regenerates bit-for-bit.
    """
    if tiles_per_lot < 1:
        raise ValueError("tiles_per_lot must be >= 1")
    if not 0.0 <= jitter <= 0.05:
        raise ValueError("jitter must lie in [0, 0.05]")
    samples = []
    index = 0
    for lot in lots:
        lot.tiles = tiles_per_lot
        for _ in range(tiles_per_lot):
            sample_seed = rng.mix64(master_seed, _SAMPLE_SEED_BASE + index)
            vals = []
            for d in range(4):
                u = rng.uniform(sample_seed, _JITTER_BASE + d)
                v = getattr(lot.attrs, ATTRIBUTE_NAMES[d]) + jitter * (2.0 * u - 1.0)
                vals.append(min(1.0, max(0.0, v)))
            attrs = AttributeVector(*vals)
            label = oracle_stress(attrs) + noise_sd * rng.gaussian(sample_seed, _NOISE_BASE)
            samples.append(SampleRecord(sample_seed, lot.lot_id, attrs, label, split="train"))
            index += 1

    # rank by a hash of the sample seed; the top 90% (rounded) train
    order = sorted(range(len(samples)), key=lambda i: rng.mix64(samples[i].sample_seed, _SPLIT_INDEX))
    n_train = round(0.9 * len(samples))
    for rank, i in enumerate(order):
        samples[i].split = "train" if rank < n_train else "val"
    return DatasetManifest(SCHEMA_VERSION, master_seed, lots, samples)


def make_world(
    lot_count: int = 30,
    tiles_per_lot: int = 200,
    jitter: float = 0.02,
    noise_sd: float = 1.0,
    master_seed: int = 7,
) -> DatasetManifest:
    """Convenience: lots plus dataset in one call."""
    return synth_dataset(make_lots(lot_count, master_seed), tiles_per_lot, jitter, noise_sd, master_seed)
