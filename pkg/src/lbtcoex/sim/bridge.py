"""Saturated slotted network of LBT machines, for checking the analytic chains.

Time is counted in virtual slots; a transmission occupies exactly one slot,
sensing is ideal and any overlap of two transmissions fails both.  Machines
are configured to follow the same per-slot chains as the closed forms:

* Cat.4: a fresh access senses one slot and transmits at once if idle; no
  defer beyond that; a packet is dropped after failing at stage ``m``; after
  a success or a drop the next packet starts fresh.
* WiFi: after a success the station spends one slot idle, then counts
  ``U[0, w0)`` idle slots; failures escalate the stage and never drop.

Idle stretches are skipped in one step with ``advance_idle``.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..lbt import Cat4LbtState, DcfState, Phase


@dataclass
class ClassStats:
    nodes: int = 0
    attempts: int = 0
    successes: int = 0
    sensed: int = 0
    busy: int = 0

    def attempt_rate(self, slots: int) -> float:
        return self.attempts / (slots * self.nodes) if self.nodes and slots else 0.0


@dataclass
class BridgeResult:
    slots: int
    cat4: ClassStats = field(default_factory=ClassStats)
    wifi: ClassStats = field(default_factory=ClassStats)

    @property
    def p_tx_cat4(self) -> float:
        return self.cat4.attempt_rate(self.slots)

    @property
    def p_tx_wifi(self) -> float:
        return self.wifi.attempt_rate(self.slots)


def _bridge_cat4(w0, m):
    return Cat4LbtState(w0=w0, m=m, defer_slots=0, initial_cca_slots=1,
                        immediate_access=True, drop_after_max_stage=True)


def run_saturated(n_cat4: int, n_wifi: int = 0, *, n_slots: int = 1_000_000,
                  w0: int = 16, m: int = 4, seed: int = 0) -> BridgeResult:
    """Simulate ``n_slots`` slots of a saturated network and count attempts."""
    if n_cat4 + n_wifi < 1 or n_slots < 1:
        raise ValueError("need at least one node and one slot")
    rng = random.Random(seed)
    draw = rng.randrange
    nodes = []
    for _ in range(n_cat4):
        st = _bridge_cat4(w0, m)
        st.start(draw(w0), fresh=True)
        nodes.append(st)
    for _ in range(n_wifi):
        st = DcfState(w0=w0, m=m)
        st.arrive(draw(w0))
        nodes.append(st)
    is_cat4 = [isinstance(st, Cat4LbtState) for st in nodes]
    res = BridgeResult(slots=n_slots)
    res.cat4.nodes, res.wifi.nodes = n_cat4, n_wifi
    stats = [res.cat4 if c else res.wifi for c in is_cat4]

    need = [st.slots_to_transmit() for st in nodes]
    t = 0
    while t < n_slots:
        k = min(need)
        if k > 0:
            # jump over the idle stretch in one step
            k = min(k, n_slots - t)
            for i, st in enumerate(nodes):
                st.advance_idle(k)
                stats[i].sensed += k
                need[i] -= k
            t += k
            continue
        ready = [i for i, x in enumerate(need) if x == 0]
        ok = len(ready) == 1
        for i, st in enumerate(nodes):
            if need[i] == 0:
                continue
            stats[i].sensed += 1
            stats[i].busy += 1
            st.on_slot(True)
            need[i] = st.slots_to_transmit()
        for i in ready:
            st = nodes[i]
            stats[i].attempts += 1
            stats[i].successes += ok
            st.on_tx_result(ok, draw(st.next_window(ok)))
            if is_cat4[i]:
                if ok or st.dropped:
                    st.start(draw(w0), fresh=True)
            elif ok:
                st.arrive(draw(w0), dead_slots=1)
            need[i] = st.slots_to_transmit()
        t += 1
    return res


def run_iid(p_b: float, p_f: float, *, n_slots: int = 1_000_000, w0: int = 16,
            m: int = 4, seed: int = 0) -> float:
    """Attempt rate of one saturated Cat.4 machine fed i.i.d. busy/failure draws."""
    rng = random.Random(seed)
    u = rng.random
    st = _bridge_cat4(w0, m)
    st.start(rng.randrange(w0), fresh=True)
    attempts = 0
    for _ in range(n_slots):
        if st.phase is Phase.READY:
            attempts += 1
            ok = u() >= p_f
            st.on_tx_result(ok, rng.randrange(st.next_window(ok)))
            if ok or st.dropped:
                st.start(rng.randrange(w0), fresh=True)
        else:
            st.on_slot(u() < p_b)
    return attempts / n_slots
