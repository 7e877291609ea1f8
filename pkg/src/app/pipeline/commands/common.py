import asyncio
import re
from pathlib import Path
from typing import Callable, Sequence, TypeVar

from pydantic import BaseModel, ConfigDict, Field

from ..schemas.config import PipelineConfig

T = TypeVar("T")
R = TypeVar("R")

FRAME_PATTERN = re.compile(r"^left_(\d+)\.pgm$")
CLOUD_PATTERN = re.compile(r"^frame_(\d+)\.ply$")


class CommandContext(BaseModel):
    model_config = ConfigDict(frozen=True)

    config: PipelineConfig
    jobs: int = Field(default=1, ge=1)


class FrameFiles(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int
    left: Path
    right: Path
    color: Path | None


def frame_name(index: int, prefix: str, suffix: str) -> str:
    return f"{prefix}_{index:04d}{suffix}"


def discover_frames(directory: Path) -> list[FrameFiles]:
    """Frames named left_NNNN.pgm with right_NNNN.pgm and an optional
    color_NNNN.png / .ppm next to them, sorted by index."""
    frames = []
    for path in sorted(directory.iterdir()):
        match = FRAME_PATTERN.match(path.name)
        if not match:
            continue
        index = int(match.group(1))
        color = None
        for suffix in (".png", ".ppm"):
            candidate = directory / frame_name(index, "color", suffix)
            if candidate.is_file():
                color = candidate
                break
        frames.append(
            FrameFiles(
                index=index,
                left=path,
                right=directory / frame_name(index, "right", ".pgm"),
                color=color,
            )
        )
    return sorted(frames, key=lambda f: f.index)


def discover_clouds(directory: Path) -> dict[int, Path]:
    return {
        int(match.group(1)): path
        for path in sorted(directory.iterdir())
        if (match := CLOUD_PATTERN.match(path.name))
    }


async def run_in_threads(
    func: Callable[[T], R], items: Sequence[T], jobs: int
) -> list[R | BaseException]:
    """
    Runs `func` over items in worker threads, at most `jobs` at a time.
    Results (or the raised exception) come back in input order.
    """
    semaphore = asyncio.Semaphore(max(1, jobs))

    async def _run(item: T) -> R:
        async with semaphore:
            return await asyncio.to_thread(func, item)

    return await asyncio.gather(
        *(_run(item) for item in items), return_exceptions=True
    )

