"""Slot-stepped LBT state machines.

The machines own no randomness: every backoff draw is passed in by the
caller.  Time advances only through :meth:`Cat4LbtState.on_slot` (one CCA
slot with a busy/idle verdict) or its bulk form
:meth:`Cat4LbtState.advance_idle`.

Counter semantics: after the defer period a counter of ``k`` needs ``k``
further idle slots, so a zero counter transmits as soon as the defer ends.
A busy slot freezes the counter and restarts the defer.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class Phase(str, Enum):
    IDLE = "IDLE"
    DEFER = "DEFER"
    BACKOFF = "BACKOFF"
    READY = "READY"


class Action(str, Enum):
    WAIT = "WAIT"
    TRANSMIT = "TRANSMIT"


class LbtStateError(RuntimeError):
    """Operation called in a phase that does not allow it."""


@dataclass
class Cat4LbtState:
    """Cat.4 LBT with exponential contention window.

    Attributes:
        w0: initial contention window.
        m: maximum stage; the window saturates at ``w0 * 2**m``.
        defer_slots: idle slots of the defer period after a busy slot or a
            transmission.
        initial_cca_slots: idle slots a fresh access must see before an
            immediate transmission.
        immediate_access: a fresh access transmits right after an idle
            initial CCA without counting down.
        drop_after_max_stage: a failure at stage ``m`` sets ``dropped``
            instead of retrying.
    """

    w0: int = 16
    m: int = 4
    defer_slots: int = 1
    initial_cca_slots: int = 1
    immediate_access: bool = True
    drop_after_max_stage: bool = False
    stage: int = 0
    cw: int = 0
    backoff_counter: int = 0
    phase: Phase = Phase.IDLE
    defer_slots_remaining: int = 0
    fresh: bool = False
    immediate_attempt: bool = False
    dropped: bool = False

    def __post_init__(self):
        if self.w0 < 1 or self.m < 0:
            raise ValueError("need w0 >= 1 and m >= 0")
        if self.defer_slots < 0 or self.initial_cca_slots < 0:
            raise ValueError("slot counts must be >= 0")
        if self.cw == 0:
            self.cw = self.w0 << self.stage

    @property
    def cw_max(self) -> int:
        return self.w0 << self.m

    def _check_draw(self, draw):
        if not 0 <= draw < self.cw:
            raise ValueError(f"draw {draw} outside [0, {self.cw})")

    def _settle(self) -> Action:
        if self.phase is Phase.DEFER and self.defer_slots_remaining == 0:
            if (self.fresh and self.immediate_access) or self.backoff_counter == 0:
                self.immediate_attempt = self.fresh and self.immediate_access
                self.phase = Phase.READY
            else:
                self.phase = Phase.BACKOFF
        if self.phase is Phase.BACKOFF and self.backoff_counter == 0:
            self.immediate_attempt = False
            self.phase = Phase.READY
        return Action.TRANSMIT if self.phase is Phase.READY else Action.WAIT

    def start(self, rng_draw: int, fresh: bool = True) -> Action:
        """Begin an access at stage 0 with ``rng_draw`` as the backoff counter."""
        self.stage = 0
        self.cw = self.w0
        self._check_draw(rng_draw)
        self.backoff_counter = rng_draw
        self.fresh = fresh
        self.dropped = False
        self.immediate_attempt = False
        self.phase = Phase.DEFER
        use_cca = fresh and self.immediate_access
        self.defer_slots_remaining = self.initial_cca_slots if use_cca else self.defer_slots
        return self._settle()

    def on_slot(self, cca_busy: bool) -> Action:
        """Consume one CCA slot; TRANSMIT means the next slot may carry data."""
        if self.phase not in (Phase.DEFER, Phase.BACKOFF):
            raise LbtStateError(f"on_slot called in phase {self.phase.value}")
        if cca_busy:
            self.fresh = False
            self.phase = Phase.DEFER
            self.defer_slots_remaining = self.defer_slots
            return self._settle()
        if self.phase is Phase.DEFER:
            self.defer_slots_remaining -= 1
        elif self.backoff_counter > 0:
            self.backoff_counter -= 1
        return self._settle()

    def slots_to_transmit(self) -> int:
        """Consecutive idle slots still needed before TRANSMIT."""
        if self.phase is Phase.READY:
            return 0
        if self.phase is Phase.DEFER:
            rest = 0 if (self.fresh and self.immediate_access) else self.backoff_counter
            return self.defer_slots_remaining + rest
        if self.phase is Phase.BACKOFF:
            return max(self.backoff_counter, 1)
        raise LbtStateError("machine is idle")

    def advance_idle(self, k: int) -> Action:
        """Apply ``k`` idle slots at once; same end state as ``k`` on_slot(False) calls."""
        need = self.slots_to_transmit()
        if not 0 <= k <= need:
            raise ValueError(f"k={k} exceeds the {need} idle slots to transmit")
        if k == 0:
            return Action.TRANSMIT if self.phase is Phase.READY else Action.WAIT
        if self.phase is Phase.DEFER:
            d = min(k, self.defer_slots_remaining)
            self.defer_slots_remaining -= d
            k -= d
            self._settle()
            if k == 0 or self.phase is Phase.READY:
                return Action.TRANSMIT if self.phase is Phase.READY else Action.WAIT
        self.backoff_counter = max(self.backoff_counter - k, 0)
        return self._settle()

    def next_window(self, success: bool) -> int:
        """Contention window :meth:`on_tx_result` will draw from."""
        if success or self.immediate_attempt:
            return self.w0
        if self.stage == self.m and self.drop_after_max_stage:
            return self.w0
        return self.w0 << min(self.stage + 1, self.m)

    def on_tx_result(self, success: bool, rng_draw: int) -> "Cat4LbtState":
        """Update the window after a transmission and load the next counter.

        Success resets to stage 0.  A failed immediate attempt enters stage 0;
        any other failure moves to ``min(stage + 1, m)``.  ``rng_draw`` must lie
        below the resulting window.
        """
        if self.phase is not Phase.READY:
            raise LbtStateError(f"on_tx_result called in phase {self.phase.value}")
        self.dropped = False
        if success or self.immediate_attempt:
            stage = 0
        elif self.stage == self.m and self.drop_after_max_stage:
            stage = 0
            self.dropped = True
        else:
            stage = min(self.stage + 1, self.m)
        self.stage = stage
        self.cw = self.w0 << stage
        self._check_draw(rng_draw)
        self.backoff_counter = rng_draw
        self.fresh = False
        self.immediate_attempt = False
        self.phase = Phase.DEFER
        self.defer_slots_remaining = self.defer_slots
        self._settle()
        return self

    def go_idle(self) -> None:
        """Release the machine when the node has nothing left to send."""
        self.phase = Phase.IDLE
        self.fresh = False
        self.immediate_attempt = False


class SingleSlotPhase(str, Enum):
    IDLE = "IDLE"
    SENSING = "SENSING"
    PASS = "PASS"
    FAIL = "FAIL"


@dataclass
class SingleSlotLbtState:
    """One fixed-length clear-channel check; PASS and FAIL are terminal."""

    phase: SingleSlotPhase = SingleSlotPhase.IDLE
    slots_remaining: int = 0

    def start(self) -> None:
        self.phase = SingleSlotPhase.SENSING
        self.slots_remaining = 1

    def on_interval(self, busy: bool) -> SingleSlotPhase:
        if self.phase is not SingleSlotPhase.SENSING:
            raise LbtStateError(f"single-slot LBT is {self.phase.value}, not SENSING")
        self.slots_remaining = 0
        self.phase = SingleSlotPhase.FAIL if busy else SingleSlotPhase.PASS
        return self.phase


# functional surface -----------------------------------------------------------

def cat4_start(w0: int, m: int, rng_draw: int, **options) -> Cat4LbtState:
    """New machine at stage 0 in DEFER with ``rng_draw`` loaded.

    ``options`` are forwarded to :class:`Cat4LbtState`; ``fresh`` (default
    False) selects the immediate-access path.
    """
    fresh = options.pop("fresh", False)
    st = Cat4LbtState(w0=w0, m=m, **options)
    st.start(rng_draw, fresh=fresh)
    return st


def cat4_on_slot(state: Cat4LbtState, cca_busy: bool) -> Action:
    return state.on_slot(cca_busy)


def cat4_on_tx_result(state: Cat4LbtState, success: bool, rng_draw: int) -> Cat4LbtState:
    return state.on_tx_result(success, rng_draw)


def single_slot_on_interval(state: SingleSlotLbtState, busy: bool) -> SingleSlotPhase:
    return state.on_interval(busy)


@dataclass
class DcfState:
    """802.11 DCF backoff as a slot machine (no immediate access).

    ``counter`` idle slots precede each transmission; ``dead_slots`` are slots
    spent before counting starts (the post-success idle-state slot of a
    saturated station) and elapse regardless of the channel.
    """

    w0: int = 16
    m: int = 4
    stage: int = 0
    cw: int = 0
    counter: int = 0
    dead_slots: int = 0
    phase: Phase = Phase.IDLE

    def __post_init__(self):
        if self.cw == 0:
            self.cw = self.w0 << self.stage

    def _settle(self) -> Action:
        if self.phase is not Phase.IDLE:
            ready = self.dead_slots == 0 and self.counter == 0
            self.phase = Phase.READY if ready else Phase.BACKOFF
        return Action.TRANSMIT if self.phase is Phase.READY else Action.WAIT

    def arrive(self, rng_draw: int, dead_slots: int = 0) -> Action:
        self.stage, self.cw = 0, self.w0
        if not 0 <= rng_draw < self.cw:
            raise ValueError(f"draw {rng_draw} outside [0, {self.cw})")
        self.counter = rng_draw
        self.dead_slots = dead_slots
        self.phase = Phase.BACKOFF
        return self._settle()

    def on_slot(self, cca_busy: bool) -> Action:
        if self.phase is not Phase.BACKOFF:
            raise LbtStateError(f"on_slot called in phase {self.phase.value}")
        if self.dead_slots > 0:
            self.dead_slots -= 1
        elif not cca_busy:
            self.counter -= 1
        return self._settle()

    def slots_to_transmit(self) -> int:
        if self.phase is Phase.IDLE:
            raise LbtStateError("machine is idle")
        return self.dead_slots + self.counter

    def advance_idle(self, k: int) -> Action:
        if not 0 <= k <= self.slots_to_transmit():
            raise ValueError("k exceeds the idle slots to transmit")
        d = min(k, self.dead_slots)
        self.dead_slots -= d
        self.counter -= k - d
        return self._settle()

    def next_window(self, success: bool) -> int:
        return self.w0 if success else self.w0 << min(self.stage + 1, self.m)

    def on_tx_result(self, success: bool, rng_draw: int) -> "DcfState":
        """Failure escalates the stage and loads ``rng_draw``; success idles the station."""
        if self.phase is not Phase.READY:
            raise LbtStateError(f"on_tx_result called in phase {self.phase.value}")
        if success:
            self.stage, self.cw = 0, self.w0
            self.phase = Phase.IDLE
            return self
        self.stage = min(self.stage + 1, self.m)
        self.cw = self.w0 << self.stage
        if not 0 <= rng_draw < self.cw:
            raise ValueError(f"draw {rng_draw} outside [0, {self.cw})")
        self.counter = rng_draw
        self.dead_slots = 0
        self.phase = Phase.BACKOFF
        self._settle()
        return self
