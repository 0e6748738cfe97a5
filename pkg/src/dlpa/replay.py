"""Episode-aware replay storage and segment sampling."""

from __future__ import annotations

import numpy as np

from .actions import Transition, TrajectorySegment


class ReplayBuffer:
    """Ring buffer of transitions with episode boundaries.

    Segments never cross an episode boundary; eviction drops whole episodes
    from the front so no orphaned windows survive. Episodes shorter than a
    requested window are padded by repeating a terminal self-loop transition
    with r = 0, c = 0 and a loss mask zeroing the padded steps.
    """

    def __init__(self, capacity: int = 1_000_000):
        self.capacity = int(capacity)
        self._episodes: list[list[Transition]] = []
        self._open: list[Transition] = []
        self._size = 0

    def __len__(self) -> int:
        return self._size

    @property
    def num_episodes(self) -> int:
        return len(self._episodes) + (1 if self._open else 0)

    def add(self, tr: Transition) -> None:
        self._open.append(tr)
        self._size += 1
        if tr.c == 0:
            self.end_episode()
        self._evict()

    def end_episode(self) -> None:
        if self._open:
            self._episodes.append(self._open)
            self._open = []

    def _evict(self) -> None:
        while self._size > self.capacity and self._episodes:
            self._size -= len(self._episodes.pop(0))

    def _window_counts(self, h: int) -> list[tuple[list[Transition], int]]:
        """(episode, number of valid windows) pairs; short episodes count one padded window."""
        out = []
        for ep in self._episodes + ([self._open] if self._open else []):
            length = len(ep)
            if length == 0:
                continue
            out.append((ep, max(length - h, 1)))
        return out

    def has_window(self) -> bool:
        return self._size > 0

    def sample_segments(self, batch: int, h: int, rng: np.random.Generator) -> list[TrajectorySegment]:
        """Uniformly sample `batch` start windows of length h + 1 across all episodes."""
        counted = self._window_counts(h)
        if not counted:
            raise ValueError("empty replay buffer")
        counts = np.array([c for _, c in counted], dtype=np.int64)
        cum = np.cumsum(counts)
        total = int(cum[-1])
        draws = rng.integers(0, total, size=batch)
        segments = []
        for d in draws:
            ep_i = int(np.searchsorted(cum, d, side="right"))
            start = int(d - (cum[ep_i - 1] if ep_i > 0 else 0))
            segments.append(_make_segment(counted[ep_i][0], start, h))
        return segments


def _make_segment(episode: list[Transition], start: int, h: int) -> TrajectorySegment:
    window = episode[start : start + h + 1]
    mask = None
    if len(window) < h + 1:
        pad_count = h + 1 - len(window)
        last = window[-1]
        pad = Transition(last.s_next, last.action, 0.0, last.s_next, 0)
        window = window + [pad] * pad_count
        mask = np.concatenate([np.ones(h + 1 - pad_count), np.zeros(pad_count)])
    return TrajectorySegment(tuple(window), start, mask)
