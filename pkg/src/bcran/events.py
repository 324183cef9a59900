"""Minimal discrete-event clock and queue."""
from __future__ import annotations

import heapq
import itertools
from typing import Callable


class EventQueue:
    """Time-ordered callbacks; ties fire in scheduling order."""

    def __init__(self, start: float = 0.0):
        self.now = start
        self._heap: list = []
        self._seq = itertools.count()

    def __len__(self):
        return len(self._heap)

    def schedule(self, time: float, callback: Callable, *args) -> None:
        if time < self.now:
            raise ValueError(f"cannot schedule at {time} before now={self.now}")
        heapq.heappush(self._heap, (time, next(self._seq), callback, args))

    def peek_time(self) -> float:
        return self._heap[0][0] if self._heap else float("inf")

    def step(self) -> bool:
        if not self._heap:
            return False
        time, _, callback, args = heapq.heappop(self._heap)
        self.now = time
        callback(*args)
        return True

    def run(self, until: float = float("inf")) -> None:
        """Fire every event with time <= ``until``."""
        while self._heap and self._heap[0][0] <= until:
            self.step()
        if until != float("inf"):
            self.now = max(self.now, until)
