"""Core frame/clip datatypes shared by every stage of the engine."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InvalidInputError


@dataclass(frozen=True)
class FrameRef:
    """A reference to one extracted frame of one video.

    The engine never touches pixels; frames travel by (video_id, index)
    and are resolved to images only by a backend service.
    """

    video_id: str
    frame_index: int
    timestamp: float

    def __post_init__(self):
        if self.frame_index < 0:
            raise InvalidInputError(f"frame_index must be >= 0, got {self.frame_index}")
        if self.timestamp < 0:
            raise InvalidInputError(f"timestamp must be >= 0, got {self.timestamp}")


@dataclass(frozen=True)
class Clip:
    """A contiguous span of frames produced by event segmentation.

    ``start``/``end`` are positions into the source frame list
    (end exclusive); ``frames`` holds the actual frame references so the
    frame pool can be expanded without going back to the manifest.
    """

    video_id: str
    start: int
    end: int
    frames: tuple[FrameRef, ...] = field(repr=False)

    def __post_init__(self):
        if self.end <= self.start:
            raise InvalidInputError(f"empty clip span [{self.start}, {self.end})")
        if len(self.frames) != self.end - self.start:
            raise InvalidInputError(
                f"clip span [{self.start}, {self.end}) does not match "
                f"{len(self.frames)} frames"
            )

    @property
    def num_frames(self) -> int:
        return self.end - self.start

    @property
    def start_time(self) -> float:
        return self.frames[0].timestamp

    @property
    def end_time(self) -> float:
        return self.frames[-1].timestamp
