"""Channel model and adaptive modulation and coding (burst profile selection)."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Optional, Sequence

from .core import ConfigurationError


@dataclass(frozen=True)
class BurstProfile:
    name: str
    modulation_bits: int
    coding_rate: Fraction
    entry_threshold_db: float
    exit_threshold_db: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "coding_rate", Fraction(self.coding_rate))
        if self.modulation_bits < 1:
            raise ConfigurationError(f"profile {self.name}: modulation_bits must be >= 1")
        if not 0 < self.coding_rate <= 1:
            raise ConfigurationError(f"profile {self.name}: coding_rate must be in (0, 1]")
        if not self.exit_threshold_db < self.entry_threshold_db:
            raise ConfigurationError(
                f"profile {self.name}: exit threshold {self.exit_threshold_db} dB must be "
                f"below entry threshold {self.entry_threshold_db} dB"
            )

    @property
    def efficiency(self) -> Fraction:
        """Information bits per modulation symbol."""
        return self.modulation_bits * self.coding_rate

    def bits_per_symbol(self, data_subcarriers: int) -> Fraction:
        """Effective bits carried by one OFDMA symbol across the uplink data subcarriers."""
        return self.efficiency * data_subcarriers


@dataclass(frozen=True)
class ProfileSet:
    """Burst profiles ordered from most robust (index 0) to most efficient."""

    profiles: tuple[BurstProfile, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "profiles", tuple(self.profiles))
        if not self.profiles:
            raise ConfigurationError("profile set is empty")
        first = self.profiles[0]
        if (first.modulation_bits, first.coding_rate) != (2, Fraction(1, 2)):
            raise ConfigurationError(f"profile 0 must be QPSK 1/2, got {first.name}")
        for lower, upper in zip(self.profiles, self.profiles[1:]):
            if not lower.efficiency < upper.efficiency:
                raise ConfigurationError(
                    f"profiles {lower.name} and {upper.name} are not strictly ordered by efficiency"
                )
            if not lower.entry_threshold_db < upper.entry_threshold_db:
                raise ConfigurationError(
                    f"profiles {lower.name} and {upper.name} are not strictly ordered by entry threshold"
                )
            if not lower.exit_threshold_db <= upper.exit_threshold_db:
                raise ConfigurationError(
                    f"profiles {lower.name} and {upper.name}: exit thresholds decrease"
                )

    def __len__(self) -> int:
        return len(self.profiles)

    def __getitem__(self, index: int) -> BurstProfile:
        return self.profiles[index]

    def __iter__(self) -> Iterator[BurstProfile]:
        return iter(self.profiles)

    def index_of(self, name: str) -> int:
        for i, profile in enumerate(self.profiles):
            if profile.name == name:
                return i
        raise KeyError(name)


def _profile(name: str, bits: int, rate: str, exit_db: float, entry_db: float) -> BurstProfile:
    return BurstProfile(name, bits, Fraction(rate), entry_db, exit_db)


# Rows 0-2 are the visible rows of the default UL burst profile set; rows 3-6
# continue the ladder with exit(k) = entry(k-1) - 1 dB.
DEFAULT_UL_PROFILES = ProfileSet(
    (
        _profile("QPSK 1/2", 2, "1/2", 0.0, 5.0),
        _profile("QPSK 3/4", 2, "3/4", 4.0, 11.0),
        _profile("16-QAM 1/2", 4, "1/2", 10.0, 18.0),
        _profile("16-QAM 3/4", 4, "3/4", 17.0, 24.0),
        _profile("64-QAM 2/3", 6, "2/3", 23.0, 30.0),
        _profile("64-QAM 3/4", 6, "3/4", 29.0, 36.0),
        _profile("64-QAM 5/6", 6, "5/6", 35.0, 42.0),
    )
)


def select_profile(current_index: int, cinr_db: float, profiles: ProfileSet) -> int:
    """Next burst profile index for a station reporting ``cinr_db``.

    Drops below the current exit threshold step down to the most efficient
    profile whose exit threshold is still met; crossing the next entry
    threshold steps up as far as the entry thresholds allow. Anything in
    between keeps the current profile.
    """
    if not 0 <= current_index < len(profiles):
        raise IndexError(f"profile index {current_index} out of range")
    if cinr_db < profiles[current_index].exit_threshold_db:
        candidates = [i for i in range(current_index) if profiles[i].exit_threshold_db <= cinr_db]
        return max(candidates, default=0)
    nxt = current_index + 1
    if nxt < len(profiles) and cinr_db >= profiles[nxt].entry_threshold_db:
        return max(i for i in range(len(profiles)) if profiles[i].entry_threshold_db <= cinr_db)
    return current_index


def steady_profile(cinr_db: float, profiles: ProfileSet) -> int:
    """Profile a station settles on from a robust start under constant CINR."""
    return select_profile(0, cinr_db, profiles)


@dataclass(frozen=True)
class ChannelParams:
    reference_cinr_db: float = 30.0
    reference_distance_m: float = 100.0
    pathloss_exponent: float = 3.5
    noise_sigma_db: float = 0.0
    cqich_period_frames: int = 3

    def __post_init__(self) -> None:
        if not self.reference_distance_m > 0:
            raise ConfigurationError("reference_distance_m must be > 0")
        if self.noise_sigma_db < 0:
            raise ConfigurationError("noise_sigma_db must be >= 0")
        if self.cqich_period_frames < 1:
            raise ConfigurationError("cqich_period_frames must be >= 1")


def cinr_from_distance(
    distance_m: float, params: ChannelParams, rng: Optional[random.Random] = None
) -> float:
    """Log-distance CINR. Depends on distance only, never on direction."""
    if not distance_m > 0:
        raise ValueError("distance_m must be > 0")
    cinr = params.reference_cinr_db - 10.0 * params.pathloss_exponent * math.log10(
        distance_m / params.reference_distance_m
    )
    if params.noise_sigma_db > 0:
        if rng is None:
            raise ValueError("a seeded rng is required when noise_sigma_db > 0")
        cinr += rng.gauss(0.0, params.noise_sigma_db)
    return cinr


def distance_for_cinr(cinr_db: float, params: ChannelParams) -> float:
    """Inverse of the noiseless log-distance model."""
    exponent = (params.reference_cinr_db - cinr_db) / (10.0 * params.pathloss_exponent)
    return params.reference_distance_m * 10.0**exponent


@dataclass
class ChannelState:
    station_id: str
    cinr_db: float
    cqich_period_frames: int = 3
    reported_cinr_db: Optional[float] = None
    reported_frame: Optional[int] = None


def cqich_report(state: ChannelState, frame_index: int) -> Optional[float]:
    """Deliver the current CINR over CQICH on report frames, else None."""
    if frame_index % state.cqich_period_frames:
        return None
    state.reported_cinr_db = state.cinr_db
    state.reported_frame = frame_index
    return state.cinr_db


def profile_sequence(cinr_trace: Sequence[float], profiles: ProfileSet, start: int = 0) -> list[int]:
    """Profile index after each CINR sample, starting from ``start``."""
    out = []
    current = start
    for cinr in cinr_trace:
        current = select_profile(current, cinr, profiles)
        out.append(current)
    return out
