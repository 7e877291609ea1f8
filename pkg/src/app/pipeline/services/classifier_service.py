import asyncio
from typing import Protocol, runtime_checkable

import numpy as np

from ...settings.logging import logger
from ..schemas.detection import SCORE_ORDER, ClassLabel, ClassScores
from ..utils.error_handler import ClassifierError

DEFAULT_TIMEOUT = 10.0

# Relative evidence each class's pixel fraction contributes to its logit.
HEURISTIC_WEIGHTS = {
    ClassLabel.BUNCH: 40.0,
    ClassLabel.POLE: 10.0,
    ClassLabel.WOOD: 10.0,
    ClassLabel.LEAVES: 1.0,
    ClassLabel.BACKGROUND: 1.0,
}
HEURISTIC_SHARPNESS = 10.0


@runtime_checkable
class PatchClassifier(Protocol):
    async def classify(
        self, patch_id: int, patch: np.ndarray
    ) -> ClassScores: ...


def pixel_classes(patch: np.ndarray) -> np.ndarray:
    """
    Per-pixel color rule: dark pixels with blue over green are bunch,
    bright unsaturated pixels pole, green-dominant pixels leaves,
    mid-brightness red>green>blue pixels wood, the rest background.
    """
    rgb = np.asarray(patch, dtype=np.float64)[..., :3] / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    brightness = rgb.mean(axis=-1)
    high, low = rgb.max(axis=-1), rgb.min(axis=-1)
    saturation = np.divide(
        high - low, high, out=np.zeros_like(high), where=high > 0
    )
    green_ratio = np.divide(
        g, r + g + b, out=np.zeros_like(g), where=(r + g + b) > 0
    )

    classes = np.full(r.shape, ClassLabel.BACKGROUND, dtype=np.uint8)
    wood = (r > g) & (g > b) & (brightness >= 0.2) & (brightness <= 0.7)
    rules = [
        (ClassLabel.WOOD, wood),
        (ClassLabel.LEAVES, (g > r) & (g > b) & (green_ratio > 0.4)),
        (ClassLabel.POLE, (brightness > 0.7) & (saturation < 0.2)),
        (ClassLabel.BUNCH, (brightness < 0.35) & (b > g)),
    ]
    # Later rules take precedence.
    for label, selected in rules:
        classes[selected] = label
    return classes


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = np.exp(logits - logits.max())
    return shifted / shifted.sum()


class HeuristicClassifier:
    """Color-statistics stand-in for a trained patch classifier.

    Class logits grow with the weighted fraction of pixels matching each
    class's color rule and are softmax-normalized.
    """

    def __init__(self, sharpness: float = HEURISTIC_SHARPNESS):
        self.sharpness = sharpness

    def scores(self, patch: np.ndarray) -> ClassScores:
        classes = pixel_classes(patch)
        fractions = np.bincount(classes.ravel(), minlength=5) / classes.size
        logits = np.array(
            [
                self.sharpness * HEURISTIC_WEIGHTS[label] * fractions[label]
                for label in SCORE_ORDER
            ]
        )
        return ClassScores.from_sequence(softmax(logits))

    async def classify(self, patch_id: int, patch: np.ndarray) -> ClassScores:
        return self.scores(patch)


def encode_request(patch_id: int, patch: np.ndarray) -> bytes:
    """`PATCH <id> <width> <height>` line followed by raw RGB bytes."""
    pixels = np.ascontiguousarray(patch, dtype=np.uint8)
    height, width = pixels.shape[:2]
    if pixels.shape != (height, width, 3):
        raise ClassifierError(
            f"expected an RGB patch, got {pixels.shape}", patch_id
        )
    header = f"PATCH {patch_id} {width} {height}\n".encode("ascii")
    return header + pixels.tobytes()


def parse_response(line: bytes, patch_id: int) -> ClassScores:
    """Parses `SCORES <id> s_bunch s_pole s_wood s_leaves s_background`."""
    fields = line.decode("ascii", errors="replace").split()
    if len(fields) != 7 or fields[0] != "SCORES":
        raise ClassifierError(f"malformed response {line!r}", patch_id)
    if fields[1] != str(patch_id):
        raise ClassifierError(
            f"response for patch {fields[1]} while waiting for {patch_id}",
            patch_id,
        )
    try:
        return ClassScores.from_sequence(fields[2:])
    except ValueError as e:
        raise ClassifierError(f"invalid scores: {e}", patch_id) from e


def encode_response(patch_id: int, scores: ClassScores) -> bytes:
    values = " ".join(f"{v:.9g}" for v in scores.as_tuple())
    return f"SCORES {patch_id} {values}\n".encode("ascii")


class StreamClassifier:
    """Line-protocol client over a byte stream pair.

    Requests on one stream are serialized; use several instances for
    concurrent connections.
    """

    def __init__(self, timeout: float = DEFAULT_TIMEOUT):
        self.timeout = timeout
        self._reader: asyncio.StreamReader | None = None
        self._writer: asyncio.StreamWriter | None = None
        self._lock = asyncio.Lock()

    async def open(self) -> None:
        raise NotImplementedError

    async def close(self) -> None:
        if self._writer is not None:
            self._writer.close()
            try:
                await self._writer.wait_closed()
            except (ConnectionError, BrokenPipeError):
                pass
            self._writer = None

    async def __aenter__(self):
        await self.open()
        return self

    async def __aexit__(self, *exc_info):
        await self.close()

    async def _exchange(self, patch_id: int, patch: np.ndarray) -> bytes:
        assert self._reader is not None and self._writer is not None
        self._writer.write(encode_request(patch_id, patch))
        await self._writer.drain()
        return await self._reader.readline()

    async def classify(self, patch_id: int, patch: np.ndarray) -> ClassScores:
        async with self._lock:
            # opened lazily, once, by the first request holding the lock
            if self._writer is None:
                await self.open()
            try:
                line = await asyncio.wait_for(
                    self._exchange(patch_id, patch), self.timeout
                )
            except TimeoutError as e:
                logger.error(
                    f"Classifier timed out after {self.timeout}s on patch "
                    f"{patch_id}"
                )
                raise ClassifierError(
                    f"timed out after {self.timeout}s", patch_id
                ) from e
            except (ConnectionError, BrokenPipeError) as e:
                raise ClassifierError(f"connection lost: {e}", patch_id) from e
        if not line:
            raise ClassifierError("classifier closed the stream", patch_id)
        return parse_response(line, patch_id)


class ExternalProcessClassifier(StreamClassifier):
    """Spawns a classifier process and talks to it over stdin/stdout."""

    def __init__(self, command: list[str], timeout: float = DEFAULT_TIMEOUT):
        super().__init__(timeout)
        self.command = command
        self._process: asyncio.subprocess.Process | None = None

    async def open(self) -> None:
        logger.info(f"Starting classifier process: {' '.join(self.command)}")
        self._process = await asyncio.create_subprocess_exec(
            *self.command,
            stdin=asyncio.subprocess.PIPE,
            stdout=asyncio.subprocess.PIPE,
        )
        self._reader = self._process.stdout
        self._writer = self._process.stdin

    async def close(self) -> None:
        await super().close()
        if self._process is not None:
            try:
                await asyncio.wait_for(self._process.wait(), self.timeout)
            except TimeoutError:
                self._process.kill()
                await self._process.wait()
            self._process = None


class TcpClassifier(StreamClassifier):
    """Connects to a classifier server listening on host:port."""

    def __init__(self, host: str, port: int, timeout: float = DEFAULT_TIMEOUT):
        super().__init__(timeout)
        self.host = host
        self.port = port

    async def open(self) -> None:
        logger.info(f"Connecting to classifier at {self.host}:{self.port}")
        try:
            self._reader, self._writer = await asyncio.wait_for(
                asyncio.open_connection(self.host, self.port), self.timeout
            )
        except (OSError, TimeoutError) as e:
            raise ClassifierError(
                f"cannot reach {self.host}:{self.port}: {e}", -1
            ) from e


def make_classifier(
    kind: str, endpoint: str = "", timeout: float = DEFAULT_TIMEOUT
) -> PatchClassifier:
    """Builds the classifier named by the pipeline configuration:
    `heuristic`, `process` (endpoint is the command line) or `tcp`
    (endpoint is host:port)."""
    if kind == "heuristic":
        return HeuristicClassifier()
    if kind == "process":
        return ExternalProcessClassifier(endpoint.split(), timeout)
    if kind == "tcp":
        host, _, port = endpoint.rpartition(":")
        return TcpClassifier(host or "127.0.0.1", int(port), timeout)
    raise ValueError(f"unknown classifier kind: {kind}")
