"""Ground-height profiles for planar walking.

A profile is a chain of primitive segments laid end to end starting at
``x_start``.  Each segment begins at the height where the previous one ended,
so the chain is continuous at the joints (stairs are discontinuous inside a
segment by construction).  Optional bounded noise is sampled on a fixed grid
and linearly interpolated.

The smoothed profile is the centered moving average of the noise-free
height.  It is evaluated exactly from closed-form antiderivatives of the
primitives, which keeps it continuous even across stair edges.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "Segment",
    "TerrainProfile",
    "TerrainRangeError",
    "flat",
    "slope",
    "sine",
    "stairs",
    "parse_terrain",
]

KINDS = ("flat", "slope", "sine", "stairs")


class TerrainRangeError(ValueError):
    """Raised when a height is queried outside the configured range."""


@dataclass(frozen=True)
class Segment:
    kind: str
    length: float | None = None
    height: float = 0.0  # only honored for a leading flat segment
    angle: float = 0.0  # rad
    amplitude: float = 0.0
    wavelength: float = 1.0
    rise: float = 0.0
    run: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown terrain segment kind {self.kind!r}")
        if self.length is not None and not self.length > 0:
            raise ValueError("segment length must be positive")
        if self.kind == "sine" and not self.wavelength > 0:
            raise ValueError("sine wavelength must be positive")
        if self.kind == "stairs" and not self.run > 0:
            raise ValueError("stairs run must be positive")
        if self.kind == "slope" and not abs(self.angle) < math.pi / 2:
            raise ValueError("slope angle must lie in (-pi/2, pi/2)")

    # local profile, xi measured from the segment start, base height excluded
    def local_height(self, xi: float) -> float:
        k = self.kind
        if k == "flat":
            return 0.0
        if k == "slope":
            return math.tan(self.angle) * xi
        if k == "sine":
            return self.amplitude * math.sin(2.0 * math.pi * xi / self.wavelength)
        return self.rise * math.floor(xi / self.run)

    def local_integral(self, xi: float) -> float:
        """Integral of ``local_height`` over ``[0, xi]``."""
        k = self.kind
        if k == "flat":
            return 0.0
        if k == "slope":
            return 0.5 * math.tan(self.angle) * xi * xi
        if k == "sine":
            w = 2.0 * math.pi / self.wavelength
            return self.amplitude * (1.0 - math.cos(w * xi)) / w
        n = math.floor(xi / self.run)
        frac = xi - n * self.run
        return self.rise * (self.run * n * (n - 1) / 2.0 + n * frac)

    def local_slope(self, xi: float) -> float:
        k = self.kind
        if k == "slope":
            return math.tan(self.angle)
        if k == "sine":
            w = 2.0 * math.pi / self.wavelength
            return self.amplitude * w * math.cos(w * xi)
        return 0.0


def flat(length: float | None = None, height: float = 0.0) -> Segment:
    return Segment("flat", length=length, height=height)


def slope(angle: float, length: float | None = None) -> Segment:
    """Inclined segment; ``angle`` in radians, positive climbs with x."""
    return Segment("slope", length=length, angle=angle)


def sine(amplitude: float, wavelength: float, length: float | None = None) -> Segment:
    return Segment("sine", length=length, amplitude=amplitude, wavelength=wavelength)


def stairs(rise: float, run: float, length: float | None = None) -> Segment:
    return Segment("stairs", length=length, rise=rise, run=run)


@dataclass(frozen=True)
class TerrainProfile:
    """Piecewise ground height with optional uniform noise.

    Parameters
    ----------
    segments:
        Primitives in order along x.  Only the last one may omit ``length``;
        it then extends to ``x_end``.
    noise_magnitude:
        Bound on ``|height_at - noise_free_at|`` (m).
    noise_seed:
        Seed for the noise grid.  Identical seeds give identical terrain.
    smoothing_window:
        Width of the centered moving average (m).
    """

    segments: Sequence[Segment] = (Segment("flat"),)
    noise_magnitude: float = 0.0
    noise_seed: int = 0
    smoothing_window: float = 0.4
    x_start: float = -2.0
    x_end: float = 40.0
    noise_spacing: float = 0.01
    _starts: list = field(init=False, repr=False, compare=False)
    _bases: list = field(init=False, repr=False, compare=False)
    _cum: list = field(init=False, repr=False, compare=False)
    _noise: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("terrain needs at least one segment")
        if not self.x_end > self.x_start:
            raise ValueError("x_end must exceed x_start")
        if self.noise_magnitude < 0:
            raise ValueError("noise magnitude must be non-negative")
        if not self.smoothing_window > 0:
            raise ValueError("smoothing window must be positive")
        object.__setattr__(self, "segments", segs)

        starts, bases, cum = [], [], []
        x = self.x_start
        h = segs[0].height if segs[0].kind == "flat" else 0.0
        area = 0.0
        for i, seg in enumerate(segs):
            if seg.length is None and i != len(segs) - 1:
                raise ValueError("only the last segment may omit its length")
            starts.append(x)
            bases.append(h)
            cum.append(area)
            length = seg.length if seg.length is not None else math.inf
            if math.isfinite(length):
                area += h * length + seg.local_integral(length)
                h += seg.local_height(length)
                x += length
        object.__setattr__(self, "_starts", starts)
        object.__setattr__(self, "_bases", bases)
        object.__setattr__(self, "_cum", cum)

        if self.noise_magnitude > 0:
            n = int(math.ceil((self.x_end - self.x_start) / self.noise_spacing)) + 2
            rng = np.random.default_rng(self.noise_seed)
            grid = rng.uniform(-self.noise_magnitude, self.noise_magnitude, n)
            object.__setattr__(self, "_noise", grid.tolist())
        else:
            object.__setattr__(self, "_noise", [])

    # -- internal helpers ---------------------------------------------------

    def _locate(self, x: float) -> int:
        return max(bisect.bisect_right(self._starts, x) - 1, 0)

    def _check(self, x: float) -> None:
        if not (self.x_start <= x <= self.x_end):
            raise TerrainRangeError(
                f"x={x!r} outside terrain range [{self.x_start}, {self.x_end}]"
            )

    def _clip(self, x: float) -> float:
        # flat extrapolation beyond the ends, used only inside the average
        return min(max(x, self.x_start), self.x_end)

    def _integral(self, x: float) -> float:
        """Integral of the noise-free height over ``[x_start, x]``.

        Beyond either end the profile is extended flat.
        """
        xc = self._clip(x)
        i = self._locate(xc)
        seg = self.segments[i]
        xi = xc - self._starts[i]
        val = self._cum[i] + self._bases[i] * xi + seg.local_integral(xi)
        if x > self.x_end:
            val += (x - self.x_end) * self._noise_free(self.x_end)
        elif x < self.x_start:
            val += (x - self.x_start) * self._noise_free(self.x_start)
        return val

    def _window_integral(self, a: float, b: float) -> float:
        # piecewise sum keeps the magnitudes local for accuracy
        if a >= self.x_start and b <= self.x_end:
            i, j = self._locate(a), self._locate(b)
            if i == j:
                seg = self.segments[i]
                s0 = self._starts[i]
                return self._bases[i] * (b - a) + seg.local_integral(b - s0) - seg.local_integral(a - s0)
        return self._integral(b) - self._integral(a)

    def _noise_free(self, x: float) -> float:
        i = self._locate(x)
        return self._bases[i] + self.segments[i].local_height(x - self._starts[i])

    def _noise_at(self, x: float) -> float:
        if not self._noise:
            return 0.0
        u = (x - self.x_start) / self.noise_spacing
        k = int(u)
        f = u - k
        g = self._noise
        return g[k] + f * (g[k + 1] - g[k])

    # -- public queries -----------------------------------------------------

    def height_at(self, x: float) -> float:
        """True ground height, noise included."""
        self._check(x)
        return self._noise_free(x) + self._noise_at(x)

    def noise_free_at(self, x: float) -> float:
        self._check(x)
        return self._noise_free(x)

    def slope_at(self, x: float) -> float:
        """d/dx of the noise-free height (stair edges contribute zero)."""
        self._check(x)
        i = self._locate(x)
        return self.segments[i].local_slope(x - self._starts[i])

    def true_slope_at(self, x: float) -> float:
        """d/dx of ``height_at`` away from grid and stair discontinuities."""
        s = self.slope_at(x)
        if self._noise:
            u = (x - self.x_start) / self.noise_spacing
            k = int(u)
            s += (self._noise[k + 1] - self._noise[k]) / self.noise_spacing
        return s

    def smoothed_height_at(self, x: float) -> float:
        """Centered moving average of the noise-free height."""
        self._check(x)
        w = self.smoothing_window
        a, b = x - 0.5 * w, x + 0.5 * w
        if a >= self.x_start and b <= self.x_end:
            i = self._locate(a)
            # the average of a linear piece is its midpoint value
            if self.segments[i].kind in ("flat", "slope") and (
                i + 1 == len(self._starts) or b < self._starts[i + 1]
            ):
                return self._bases[i] + self.segments[i].local_height(x - self._starts[i])
        return self._window_integral(a, b) / w

    def linear_piece(self, a: float, b: float) -> tuple[float, float, float] | None:
        """``(x0, h0, k)`` if the smoothed profile is ``h0 + k (x - x0)`` on ``[a, b]``.

        That holds when every averaging window centered in ``[a, b]`` lies
        inside a single flat or slope segment; otherwise returns None.
        """
        half = 0.5 * self.smoothing_window
        lo, hi = a - half, b + half
        if lo < self.x_start or hi > self.x_end:
            return None
        i = self._locate(lo)
        seg = self.segments[i]
        if seg.kind not in ("flat", "slope"):
            return None
        if i + 1 < len(self._starts) and hi >= self._starts[i + 1]:
            return None
        k = math.tan(seg.angle) if seg.kind == "slope" else 0.0
        return self._starts[i], self._bases[i], k

    def smoothed_slope_at(self, x: float) -> float:
        """Exact derivative of :meth:`smoothed_height_at`."""
        self._check(x)
        w = self.smoothing_window
        hi = self._noise_free(self._clip(x + 0.5 * w))
        lo = self._noise_free(self._clip(x - 0.5 * w))
        return (hi - lo) / w

    def smoothed_curvature_at(self, x: float) -> float:
        """Second derivative of the smoothed profile, stair impulses dropped."""
        self._check(x)
        w = self.smoothing_window
        a, b = x - 0.5 * w, x + 0.5 * w
        hi = self.slope_at(b) if b <= self.x_end else 0.0
        lo = self.slope_at(a) if a >= self.x_start else 0.0
        return (hi - lo) / w


def parse_terrain(text: str) -> list[Segment]:
    """Parse ``"flat(length=2); slope(angle_deg=10, length=3); stairs(rise=0.1, run=0.3)"``.

    Angles may be given either as ``angle`` (rad) or ``angle_deg``.
    """
    segs = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "(" in chunk:
            if not chunk.endswith(")"):
                raise ValueError(f"malformed terrain segment {chunk!r}")
            kind, args = chunk[:-1].split("(", 1)
        else:
            kind, args = chunk, ""
        kwargs: dict[str, float] = {}
        for item in args.split(","):
            item = item.strip()
            if not item:
                continue
            key, _, val = item.partition("=")
            if not _:
                raise ValueError(f"expected key=value in terrain segment {chunk!r}")
            key = key.strip()
            if key == "angle_deg":
                key, value = "angle", math.radians(float(val))
            else:
                value = float(val)
            kwargs[key] = value
        try:
            segs.append(Segment(kind.strip(), **kwargs))
        except TypeError as exc:
            raise ValueError(f"bad parameters for terrain segment {chunk!r}: {exc}") from None
    if not segs:
        raise ValueError("empty terrain description")
    return segs
