"""
Deterministic discrete-event core: the simulation clock, the priority event queue and the seeded random source.
"""
import heapq
import logging
from itertools import count
from typing import Any, Callable, List, Tuple

import numpy as np

__all__ = ['SimTime', 'Event', 'EventHandle', 'EventQueue', 'RandomSource', 'SchedulingError', 'EventFault']

logger = logging.getLogger(__name__)

SimTime = float


class SchedulingError(ValueError):
    pass


class EventFault(RuntimeError):
    """A handler raised while an event was executing; the run cannot continue."""

    def __init__(self, event: 'Event', cause: BaseException):
        super().__init__(
            f'Event #{event.seq_no} ({event.name}) at t={event.fire_at:.6f} failed: {type(cause).__name__}: {cause}'
        )
        self.event = event
        self.cause = cause


class Event:
    __slots__ = ('fire_at', 'seq_no', 'action', 'args', 'cancelled', 'fired')

    def __init__(self, fire_at: SimTime, seq_no: int, action: Callable[..., Any], args: Tuple):
        self.fire_at = fire_at
        self.seq_no = seq_no
        self.action = action
        self.args = args
        self.cancelled = False
        self.fired = False

    @property
    def name(self) -> str:
        return getattr(self.action, '__qualname__', repr(self.action))

    @property
    def pending(self) -> bool:
        return not (self.cancelled or self.fired)

    def __repr__(self):
        return f'Event(fire_at={self.fire_at!r}, seq_no={self.seq_no}, action={self.name})'


# Handles are the events themselves; only the queue may cancel them.
EventHandle = Event


class EventQueue:
    """
    Priority queue of events ordered by ``(fire_at, seq_no)``, together with the simulation clock.
    Events scheduled for the same instant run in insertion order.
    Cancelled events stay in the heap and are skipped when popped.
    """

    def __init__(self, start: SimTime = 0.0):
        self._now = start
        self._heap: List[Tuple[SimTime, int, Event]] = []
        self._seq = count()
        self._pending = 0
        self._stopped = False

    @property
    def now(self) -> SimTime:
        return self._now

    def __len__(self) -> int:
        return self._pending

    def schedule(self, at: SimTime, action: Callable[..., Any], *args) -> EventHandle:
        if at < self._now:
            raise SchedulingError(
                f'Cannot schedule {getattr(action, "__qualname__", action)} at t={at!r}: '
                f'the clock is already at t={self._now!r}'
            )
        event = Event(at, next(self._seq), action, args)
        heapq.heappush(self._heap, (at, event.seq_no, event))
        self._pending += 1
        return event

    def schedule_in(self, delay: float, action: Callable[..., Any], *args) -> EventHandle:
        return self.schedule(self._now + delay, action, *args)

    def cancel(self, handle: EventHandle) -> bool:
        """Returns False when the event already fired or was cancelled before."""
        if not handle.pending:
            return False
        handle.cancelled = True
        self._pending -= 1
        return True

    def stop(self):
        """Ends the current ``run_until`` after the executing event; the clock stays at its time."""
        self._stopped = True

    def run_until(self, t_end: SimTime) -> int:
        """
        Execute every pending event with ``fire_at <= t_end`` and return how many ran.
        Afterwards the clock reads ``t_end``, unless ``stop()`` was called by a handler.
        """
        if t_end < self._now:
            raise SchedulingError(f'Cannot run until t={t_end!r}: the clock is already at t={self._now!r}')
        heap = self._heap
        executed = 0
        self._stopped = False
        while heap and heap[0][0] <= t_end:
            fire_at, _, event = heapq.heappop(heap)
            if event.cancelled:
                continue
            self._pending -= 1
            self._now = fire_at
            event.fired = True
            try:
                event.action(*event.args)
            except EventFault:
                raise
            except Exception as exc:
                raise EventFault(event, exc) from exc
            executed += 1
            if self._stopped:
                logger.debug(f'Run stopped at t={self._now:.6f} after {executed} events')
                return executed
        self._now = t_end
        return executed


class RandomSource:
    """
    Seeded uniform generator (numpy PCG64).
    Independent streams are obtained with ``spawn``, which reseeds from ``(seed, *key)``.
    """

    def __init__(self, seed: int, key: Tuple[int, ...] = ()):
        if seed < 0:
            raise ValueError(f'The seed has to be a non-negative integer (got {seed})')
        self.seed = seed
        self.key = tuple(key)
        self._generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=self.key)))
        self.draws = 0

    def next_uniform(self) -> float:
        """Next value in [0, 1)."""
        self.draws += 1
        return float(self._generator.random())

    def spawn(self, key: int) -> 'RandomSource':
        return RandomSource(self.seed, self.key + (key,))
