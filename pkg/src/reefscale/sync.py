"""Frame timestamps for cut video and navigation lookup at those times."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from reefscale.errors import NonDivisorRate, OutOfTrackRange
from reefscale.geometry import Attitude

DEFAULT_LEAP_OFFSET_S = 18.0
_RATE_RTOL = 1e-6


def validate_frame_rates(fv: float, fc: float) -> int:
    """Return ``fv / fc`` if the cutting rate divides the video rate.

    Raises:
        NonDivisorRate: when the ratio is not an integer (to 1e-6 relative),
            which would make frame extraction skip or duplicate frames.
    """
    if not (fv > 0 and fc > 0):
        raise ValueError(f"frame rates must be positive, got fv={fv}, fc={fc}")
    ratio = fv / fc
    n = round(ratio)
    if n < 1 or abs(ratio - n) > _RATE_RTOL * ratio:
        raise NonDivisorRate(f"cutting rate {fc} fps does not divide video rate {fv} fps (ratio {ratio:.6g})")
    return int(n)


@dataclass(frozen=True)
class VideoTiming:
    """Clock anchor for frames cut from one video.

    ``anchor_frame`` is the index (in cut frames) of the frame showing a
    known clock reading ``anchor_utc``. If that reading came from a GPS
    time source (``anchor_is_gps``), ``leap_offset`` seconds are removed to
    get UTC.
    """

    fv: float
    fc: float
    anchor_frame: int = 0
    anchor_utc: float = 0.0
    leap_offset: float = DEFAULT_LEAP_OFFSET_S
    anchor_is_gps: bool = False

    def __post_init__(self):
        if self.leap_offset < 0:
            raise ValueError(f"leap_offset must be >= 0, got {self.leap_offset}")
        validate_frame_rates(self.fv, self.fc)


def frame_timestamp(timing: VideoTiming, frame_idx: int) -> float:
    t = timing.anchor_utc + (frame_idx - timing.anchor_frame) / timing.fc
    if timing.anchor_is_gps:
        t -= timing.leap_offset
    return t


@dataclass(frozen=True)
class TrackSample:
    easting: float
    northing: float
    depth: float
    attitude: Attitude


class GpsTrack:
    """Immutable time-ordered navigation fixes.

    Args:
        t: Fix timestamps, strictly increasing (UTC seconds).
        easting, northing, depth: Per-fix position in meters.
        roll, pitch, yaw: Per-fix attitude in degrees.
    """

    def __init__(self, t, easting, northing, depth, roll=None, pitch=None, yaw=None):
        self.t = np.asarray(t, dtype=float)
        n = len(self.t)
        if n < 2:
            raise ValueError("a track needs at least two fixes")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("track timestamps must be strictly increasing")
        zeros = np.zeros(n)
        cols = {
            "easting": easting,
            "northing": northing,
            "depth": depth,
            "roll": zeros if roll is None else roll,
            "pitch": zeros if pitch is None else pitch,
            "yaw": zeros if yaw is None else yaw,
        }
        for name, values in cols.items():
            arr = np.asarray(values, dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({n},)")
            arr.setflags(write=False)
            setattr(self, name, arr)
        self.t.setflags(write=False)

    def __len__(self):
        return len(self.t)

    @classmethod
    def from_rows(cls, rows: Iterable[Sequence[float]]) -> "GpsTrack":
        """Build from (t, easting, northing, depth, roll, pitch, yaw) rows."""
        arr = np.asarray(list(rows), dtype=float)
        return cls(*arr.T)


def _lerp_angle(a0: float, a1: float, w: float) -> float:
    delta = (a1 - a0 + 180.0) % 360.0 - 180.0
    return a0 + w * delta


def interpolate_track(track: GpsTrack, t: float) -> TrackSample:
    """Linear position/depth; attitude angles on the shortest arc."""
    if not track.t[0] <= t <= track.t[-1]:
        raise OutOfTrackRange(f"time {t} outside track span [{track.t[0]}, {track.t[-1]}]")
    i = int(np.searchsorted(track.t, t, side="right")) - 1
    i = min(i, len(track) - 2)
    t0, t1 = track.t[i], track.t[i + 1]
    if t == t1:
        i, w = i + 1, 0.0
    else:
        w = (t - t0) / (t1 - t0)
    j = min(i + 1, len(track) - 1)

    def lin(arr):
        return float(arr[i] + w * (arr[j] - arr[i])) if w else float(arr[i])

    roll = _lerp_angle(track.roll[i], track.roll[j], w)
    pitch = _lerp_angle(track.pitch[i], track.pitch[j], w)
    yaw = _lerp_angle(track.yaw[i], track.yaw[j], w)
    return TrackSample(lin(track.easting), lin(track.northing), lin(track.depth), Attitude(roll, pitch, yaw))


def synchronize_frames(timing: VideoTiming, frame_indices: Iterable[int], track: GpsTrack):
    """Yield (frame_idx, utc, TrackSample) for each frame inside the track span.

    Frames outside the track are skipped.
    """
    for idx in frame_indices:
        t = frame_timestamp(timing, idx)
        if track.t[0] <= t <= track.t[-1]:
            yield idx, t, interpolate_track(track, t)
