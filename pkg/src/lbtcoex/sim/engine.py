"""Event-driven coexistence simulator for WiFi and MulteFire nodes on one channel.

Time is kept in integer microseconds.  Clear-channel assessments happen on a
global grid of ``slot_us`` slots: after the channel goes idle at ``t`` a
contender's first countable slot begins at the first grid point at or after
``t + defer_prefix_us``.  Two nodes finishing their countdown on the same
grid point collide.

With IDEAL sensing the busy/idle verdict is exact and idle stretches are
skipped in one step.  With energy detection each contender draws a verdict
every slot from its own sensing stream, which is slower but lets missed
detections and false alarms play out.

Node classes:

* ``wifi_ap`` / ``wifi_sta``: DCF backoff (no immediate access), fixed TXOP.
* ``enb``: Cat.4 LBT; each access opens an MCOT of 1 ms subframes.  Under SUL
  the first subframe carries an uplink grant and the UE answers with a
  single-slot LBT ``grant_processing_delay_ms`` later.  Under GUL the first
  subframe carries pending HARQ feedback.
* ``ue``: under GUL, Cat.4 LBT then a planned burst with per-subframe UCI.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional

from ..detection import EnergyDetector
from ..lbt import Action, Cat4LbtState, Phase, SingleSlotLbtState, SingleSlotPhase
from ..protocol import (
    HarqProcessTable,
    SubframeKind,
    build_burst_uci,
    encode_uci,
    harq_on_feedback,
    plan_subframe,
    pusch_detected,
    quantize_csi,
)
from .channel import ChannelState, Segment, SensingModel, Transmission, channel_verdict
from .config import ScenarioConfig
from .metrics import RunMetrics
from .traffic import BACKOFF, MISC, SENSING, TRAFFIC_DL, TRAFFIC_UL, FileRecord, ftp3_arrivals, node_stream

SF_US = 1000
CLASS_CODE = {"wifi_ap": 0, "wifi_sta": 1, "enb": 2, "ue": 3}

# event priorities at equal timestamps: channel releases first
P_TX_END, P_MCOT_END, P_SUL_UL, P_FEEDBACK, P_ARRIVAL = range(5)


@dataclass(eq=False)
class Node:
    nid: int
    cls: str
    index: int
    parent: Optional["Node"] = None
    lbt: Optional[Cat4LbtState] = None
    rng_backoff: object = None
    rng_sense: object = None
    rng_misc: object = None
    queue: list = field(default_factory=list)  # FileRecords with unsent bytes, by seq
    contending: bool = False
    frozen: bool = False
    anchor: int = 0
    blocked: bool = False  # own transmission or MCOT in progress
    children: list = field(default_factory=list)
    # eNB
    rr: int = 0
    feedback: list = field(default_factory=list)  # (ready_us, ue, pid, ack)
    # UE
    harq: Optional[HarqProcessTable] = None
    retx: set = field(default_factory=set)
    grant_outstanding: bool = False
    lost: dict = field(default_factory=dict)  # HARQ pid -> chunks awaiting NACK
    pending_result: bool = True  # Cat.4 outcome held until the MCOT ends

    @property
    def tech(self) -> str:
        return "wifi" if self.cls.startswith("wifi") else "mf"

    def unsent(self) -> int:
        return sum(f.unsent for f in self.queue)


def _ceil_to(x: int, step: int) -> int:
    return -(-x // step) * step


class Simulator:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.horizon = int(round(cfg.sim_duration_s * 1e6))
        self.slot = cfg.slot_us
        self.prefix = cfg.defer_prefix_us
        self.mcot_us = int(round(cfg.mcot_ms * 1000))
        self.mcot_sf = max(1, self.mcot_us // SF_US)
        self.delay_us = int(round(cfg.grant_processing_delay_ms * 1000))
        self.txop_us = int(round(cfg.wifi_txop_ms * 1000))
        self.bits_per_us = cfg.phy_rate_mbps
        self.fb_delay_us = int(round(cfg.feedback_delay_ms * 1000))
        self.sul = cfg.uplink_mode == "SUL"
        self.starts = cfg.starts()
        if cfg.sensing == "IDEAL":
            self.model = SensingModel()
        else:
            det = EnergyDetector(mu=cfg.ed_mu, tnr_db=cfg.ed_tnr_db, snr_per_tx=cfg.snr_per_tx)
            self.model = SensingModel(det, cfg.ed_false_alarm)
        self.ch = ChannelState()
        self.metrics = RunMetrics(sim_duration_s=cfg.sim_duration_s)
        self.heap: list = []
        self.seq = 0
        self.now = 0
        self.busy_since = 0
        self.ed_g = 0
        self.nodes: list[Node] = []
        self._build()

    # -- setup ----------------------------------------------------------------

    def _node(self, cls, index, parent=None):
        c = CLASS_CODE[cls]
        n = Node(nid=len(self.nodes), cls=cls, index=index, parent=parent)
        n.rng_backoff = node_stream(self.cfg.seed, c, index, BACKOFF)
        n.rng_sense = node_stream(self.cfg.seed, c, index, SENSING)
        n.rng_misc = node_stream(self.cfg.seed, c, index, MISC)
        cfg = self.cfg
        if cls.startswith("wifi"):
            n.lbt = Cat4LbtState(w0=cfg.w0, m=cfg.m, defer_slots=cfg.wifi_defer_slots,
                                 immediate_access=False)
        elif cls == "enb" or not self.sul:
            n.lbt = Cat4LbtState(w0=cfg.w0, m=cfg.m, defer_slots=cfg.mf_defer_slots,
                                 initial_cca_slots=cfg.mf_defer_slots, immediate_access=True)
        if cls == "ue":
            n.harq = HarqProcessTable(n_processes=cfg.harq_processes)
        if parent is not None:
            parent.children.append(n)
        self.nodes.append(n)
        self.metrics.nodes[cls] += 1
        return n

    def _build(self):
        cfg = self.cfg
        aps = [self._node("wifi_ap", i) for i in range(cfg.n_wifi_ap)]
        stas = [self._node("wifi_sta", a.index * cfg.n_sta_per_ap + j, a)
                for a in aps for j in range(cfg.n_sta_per_ap)]
        enbs = [self._node("enb", i) for i in range(cfg.n_enb)]
        ues = [self._node("ue", e.index * cfg.n_ue_per_enb + j, e)
               for e in enbs for j in range(cfg.n_ue_per_enb)]
        dl_frac, ul_frac = cfg.split()
        lam = cfg.lambda_files_per_s
        horizon_s = cfg.sim_duration_s
        files = []
        for user in stas + ues:
            c = CLASS_CODE[user.cls]
            for direction, frac, purpose, holder in (
                ("dl", dl_frac, TRAFFIC_DL, user.parent),
                ("ul", ul_frac, TRAFFIC_UL, user),
            ):
                rng = node_stream(cfg.seed, c, user.index, purpose)
                for t in ftp3_arrivals(rng, lam * frac, horizon_s):
                    files.append((int(t * 1e6), user.nid, direction, holder))
        files.sort(key=lambda x: (x[0], x[1], x[2]))
        for seq, (t_us, uid, direction, holder) in enumerate(files):
            rec = FileRecord(seq=seq, tech=holder.tech, direction=direction, user=uid,
                             size_bytes=cfg.file_size_bytes, arrival_us=t_us)
            self.metrics.files.append(rec)
            self.metrics.bytes_generated += rec.size_bytes
            self._push(t_us, P_ARRIVAL, holder.nid, "arrival", (holder, rec))

    # -- event plumbing ---------------------------------------------------------

    def _push(self, t, prio, nid, kind, data):
        self.seq += 1
        heapq.heappush(self.heap, (t, prio, nid, self.seq, kind, data))

    def _contenders(self):
        return [n for n in self.nodes if n.contending]

    # -- queues ---------------------------------------------------------------------

    @staticmethod
    def _enqueue(node, rec):
        if rec in node.queue:
            return
        node.queue.append(rec)
        node.queue.sort(key=lambda f: f.seq)

    @staticmethod
    def _take(node, nbytes):
        """Remove up to ``nbytes`` from the head of ``node``'s queue as chunks."""
        chunks = []
        while nbytes > 0 and node.queue:
            f = node.queue[0]
            k = min(f.unsent, nbytes)
            f.unsent -= k
            nbytes -= k
            chunks.append((f, k))
            if f.unsent == 0:
                node.queue.pop(0)
        return chunks

    def _return(self, node, chunks):
        for f, k in chunks:
            f.unsent += k
            self._enqueue(node, f)

    def _deliver(self, chunks, t):
        for f, k in chunks:
            f.delivered += k
            self.metrics.bytes_delivered += k
            if f.delivered == f.size_bytes and f.completion_us is None:
                f.completion_us = t

    def _sf_bytes(self, dur_us, overhead_bits=0):
        return max(int(self.bits_per_us * dur_us - overhead_bits) // 8, 0)

    # -- access intent -----------------------------------------------------------------

    def _wants_access(self, n: Node) -> bool:
        if n.blocked:
            return False
        if n.cls in ("wifi_ap", "wifi_sta"):
            return bool(n.queue)
        if n.cls == "enb":
            if n.queue:
                return True
            if self.sul:
                return self._grant_candidate(n) is not None and self.mcot_sf > self.delay_us // SF_US
            return any(fb[0] <= self.now for fb in n.feedback)
        if self.sul:
            return False
        return (bool(n.queue) or bool(n.retx)) and (bool(n.retx) or n.harq.free_process() is not None)

    def _grant_candidate(self, enb):
        k = len(enb.children)
        for j in range(k):
            ue = enb.children[(enb.rr + j) % k]
            if ue.queue and not ue.grant_outstanding:
                return ue
        return None

    def _kick(self, n: Node):
        """Enter contention if the node has something to send and is not already contending."""
        if n.contending or not self._wants_access(n):
            return
        if n.lbt.phase is Phase.IDLE:
            n.lbt.start(n.rng_backoff.randrange(n.lbt.w0), fresh=True)
        n.contending = True
        if self.model.ideal and self.ch.active:
            if n.lbt.phase is not Phase.READY:
                n.lbt.on_slot(True)
            n.frozen = True
        else:
            n.frozen = False
            n.anchor = _ceil_to(self.now + self.prefix, self.slot)

    def _release(self, n: Node, success: bool):
        """After a node's own access: update the window, then keep contending or idle."""
        n.lbt.on_tx_result(success, n.rng_backoff.randrange(n.lbt.next_window(success)))
        n.contending = False
        if self._wants_access(n):
            self._kick(n)
        else:
            n.lbt.go_idle()

    # -- channel transitions -------------------------------------------------------------

    def _start_tx(self, tx: Transmission):
        was_idle = not self.ch.active
        if was_idle:
            self.busy_since = tx.start
        self.ch.add(tx)
        tx.node.blocked = True
        self._push(tx.end, P_TX_END, tx.node.nid, "tx_end", tx)
        if self.model.ideal and was_idle:
            self._freeze_all(tx.start)

    def _freeze_all(self, t):
        for n in self._contenders():
            if n.frozen:
                continue
            if t > n.anchor:
                n.lbt.advance_idle((t - n.anchor) // self.slot)
            if n.lbt.phase is not Phase.READY:
                n.lbt.on_slot(True)
            n.frozen = True

    def _on_idle(self, t):
        if not self.model.ideal:
            return
        a = _ceil_to(t + self.prefix, self.slot)
        for n in self._contenders():
            n.frozen = False
            n.anchor = a

    # -- access builders ---------------------------------------------------------------------

    def _access(self, n: Node, t: int):
        """Node ``n`` won LBT at grid time ``t``."""
        n.contending = False
        m = self.metrics
        m.access_attempts[n.cls] += 1
        if n.cls in ("wifi_ap", "wifi_sta"):
            seg = Segment(t, t + self.txop_us, self._take(n, self._sf_bytes(self.txop_us)))
            self._start_tx(Transmission(n, t, seg.end, [seg], "wifi"))
        elif n.cls == "enb":
            self._enb_access(n, t)
        else:
            self._gul_access(n, t)

    def _enb_access(self, n: Node, t: int):
        sf_cap = self._sf_bytes(SF_US)
        segs = []
        grant_ue = None
        n_ul = 0
        if self.sul:
            n_ul = self.mcot_sf - self.delay_us // SF_US
            if n_ul > 0:
                grant_ue = self._grant_candidate(n)
        if grant_ue is not None:
            k = len(n.children)
            n.rr = (n.children.index(grant_ue) + 1) % k
            grant_ue.grant_outstanding = True
            t_ul = t + self.delay_us
            dl_end_limit = t_ul - self.cfg.single_slot_lbt_us
            s = t
            while s < dl_end_limit and (not segs or n.queue):
                e = min(s + SF_US, dl_end_limit)
                segs.append(Segment(s, e, self._take(n, self._sf_bytes(e - s)), kind="dl"))
                s = e
            segs[0].kind = "grant"
            self._push(t_ul, P_SUL_UL, grant_ue.nid, "sul_ul", (n, grant_ue, t_ul, n_ul, segs[0]))
            self._push(t + self.mcot_us, P_MCOT_END, n.nid, "mcot_end", n)
        else:
            fb = [x for x in n.feedback if x[0] <= t]
            n_sf = min(self.mcot_sf, max(1, -(-n.unsent() // sf_cap)))
            for i in range(n_sf):
                s = t + i * SF_US
                segs.append(Segment(s, s + SF_US, self._take(n, sf_cap), kind="dl"))
            if fb:
                segs[0].kind = "feedback"
                segs[0].harq = tuple(fb)
                n.feedback = [x for x in n.feedback if x[0] > t]
        self._start_tx(Transmission(n, t, segs[-1].end, segs, "enb"))

    def _gul_access(self, ue: Node, t: int):
        cfg = self.cfg
        t_plan = t + cfg.preamble_us
        offset = t_plan % SF_US
        plan = plan_subframe(float(offset), self.starts, cfg.subframe_mode)
        data_start = t_plan + int(round(plan.reservation_us))
        deadline = t + self.mcot_us
        segs = []
        if data_start > t:
            segs.append(Segment(t, data_start, kind="reservation"))
        # subframe boundaries of the burst
        bounds = []
        s = data_start
        if plan.kind is SubframeKind.SYNC_PARTIAL:
            e = (t_plan // SF_US + 1) * SF_US
            bounds.append((s, e))
            s = e
        while s + SF_US <= deadline:
            bounds.append((s, s + SF_US))
            s += SF_US
        # one HARQ process per subframe, retransmissions first
        harq_ids, ndis = [], []
        retx = sorted(ue.retx)
        free = [p.process_id for p in ue.harq.processes if not p.pending]
        budget = ue.unsent()
        for a, b in bounds:
            if budget <= 0 or not (retx or free):
                break
            harq_ids.append(retx.pop(0) if retx else free.pop(0))
            budget -= self._sf_bytes(b - a)
        if not harq_ids:
            segs = segs or [Segment(t, t + self.slot, kind="reservation")]
        else:
            for pid in harq_ids:
                if pid in ue.retx:
                    ue.retx.discard(pid)
                    ndis.append(ue.harq.retransmit(pid))
                else:
                    ndis.append(ue.harq.new_data(pid))
            csi = quantize_csi(10.0 * math.log10(cfg.snr_per_tx))
            uci = build_burst_uci(ue.index & 0xFFFF, harq_ids, ndis, a_csi=csi)
            for (a, b), u, pid in zip(bounds, uci, harq_ids):
                chunks = self._take(ue, self._sf_bytes(b - a, len(encode_uci(u))))
                segs.append(Segment(a, b, chunks, kind="ul", harq=(ue, pid)))
        self._start_tx(Transmission(ue, t, segs[-1].end, segs, "gul"))

    # -- event handlers --------------------------------------------------------------------------

    def _collided(self, tx, seg):
        return any(o.overlaps_interval(seg.start, seg.end) for o in tx.overlaps)

    def _on_tx_end(self, tx: Transmission):
        t = tx.end
        self.ch.remove(tx, t)
        if not self.ch.active:
            self.metrics.airtime_us += t - self.busy_since
        n = tx.node
        m = self.metrics
        for seg in tx.segments:
            seg.collided = self._collided(tx, seg)
        data = [s for s in tx.segments if s.kind != "reservation"]
        ref = data[0] if data else tx.segments[0]
        ok = not ref.collided
        if ok:
            m.access_successes[n.cls] += 1
        else:
            m.collisions[n.cls] += 1

        if tx.kind in ("wifi", "enb", "sul"):
            for seg in data:
                if seg.collided:
                    self._return(n, seg.payload)
                else:
                    self._deliver(seg.payload, seg.end)
            if tx.kind == "enb":
                first = data[0]
                if first.kind == "feedback":
                    if first.collided:
                        n.feedback = sorted(list(first.harq) + n.feedback, key=lambda x: x[0])
                    else:
                        for _, ue, pid, ack in first.harq:
                            self._feedback_at_ue(ue, pid, ack)
        elif tx.kind == "gul":
            enb = n.parent
            for seg in data:
                if seg.harq is None:
                    continue
                seen = pusch_detected(self.cfg.pusch_indication, n.rng_misc, self.cfg.dmrs_miss_prob)
                ack = (not seg.collided) and seen
                if ack:
                    self._deliver(seg.payload, seg.end)
                else:
                    n.lost[seg.harq[1]] = seg.payload
                ready = seg.end + self.fb_delay_us
                enb.feedback.append((ready, n, seg.harq[1], ack))
                if ready > t:
                    self._push(ready, P_FEEDBACK, enb.nid, "feedback_ready", enb)
            self._kick(enb)

        n.blocked = tx.kind == "enb" and any(s.kind == "grant" for s in tx.segments)
        if n.lbt is not None:
            if n.blocked:
                # MCOT continues; the window update waits for the MCOT end
                n.pending_result = ok
            else:
                self._release(n, ok)
        if tx.kind == "sul":
            n.grant_outstanding = False
            self._kick(n.parent)
        if not self.ch.active:
            self._on_idle(t)

    def _feedback_at_ue(self, ue: Node, pid: int, ack: bool):
        harq_on_feedback(ue.harq, pid, ack)
        if not ack:
            self._return(ue, ue.lost.pop(pid, []))
            ue.retx.add(pid)
        self._kick(ue)

    def _on_sul_ul(self, enb, ue, t_ul, n_ul, grant_seg):
        m = self.metrics
        wasted = n_ul
        if grant_seg.collided or not ue.queue:
            ue.grant_outstanding = False
            m.wasted_grants["ue"] += wasted
            self._kick(enb)
            return
        lbt = SingleSlotLbtState()
        lbt.start()
        window = (t_ul - self.cfg.single_slot_lbt_us, t_ul)
        busy = channel_verdict(self.ch, ue, self.model, ue.rng_sense, window=window)
        m.access_attempts["ue"] += 1
        if lbt.on_interval(busy) is SingleSlotPhase.FAIL:
            ue.grant_outstanding = False
            m.wasted_grants["ue"] += wasted
            self._kick(enb)
            return
        segs = []
        for i in range(n_ul):
            s = t_ul + i * SF_US
            segs.append(Segment(s, s + SF_US, self._take(ue, self._sf_bytes(SF_US)), kind="ul"))
        self._start_tx(Transmission(ue, t_ul, segs[-1].end, segs, "sul"))

    def _on_mcot_end(self, enb):
        enb.blocked = False
        self._release(enb, enb.pending_result)

    # -- energy-detection slot stepping -------------------------------------------------------------

    def _ed_step(self, t_limit):
        """Process the next grid slot if it ends no later than ``t_limit``; True if one was processed."""
        cont = self._contenders()
        if not cont:
            return False
        g = max(self.ed_g + self.slot, min(n.anchor for n in cont) + self.slot)
        if g > t_limit or g >= self.horizon:
            return False
        self.ed_g = g
        starters = []
        for n in cont:
            if n.anchor > g - self.slot:
                continue
            busy = channel_verdict(self.ch, n, self.model, n.rng_sense, window=(g - self.slot, g))
            if n.lbt.on_slot(busy) is Action.TRANSMIT:
                starters.append(n)
            elif busy:
                n.anchor = g + _ceil_to(self.prefix, self.slot)
        self.now = g
        for n in starters:
            n.contending = False
        for n in starters:
            self._access(n, g)
        return True

    # -- main loop ---------------------------------------------------------------------------------------

    def run(self) -> RunMetrics:
        INF = float("inf")
        while True:
            t_ev = self.heap[0][0] if self.heap else INF
            if self.model.ideal:
                if not self.ch.active:
                    cont = self._contenders()
                    if cont:
                        T = min(n.anchor + self.slot * n.lbt.slots_to_transmit() for n in cont)
                        if T <= t_ev and T < self.horizon:
                            self.now = T
                            win = [n for n in cont if n.anchor + self.slot * n.lbt.slots_to_transmit() == T]
                            for n in win:
                                n.lbt.advance_idle(n.lbt.slots_to_transmit())
                                n.contending = False
                            for n in win:
                                self._access(n, T)
                            continue
            elif self._ed_step(t_ev):
                continue
            if not self.heap or t_ev >= self.horizon:
                break
            t, _, _, _, kind, data = heapq.heappop(self.heap)
            self.now = t
            if kind == "arrival":
                holder, rec = data
                self._enqueue(holder, rec)
                self._kick(holder)
                if self.sul and holder.cls == "ue":
                    self._kick(holder.parent)
            elif kind == "tx_end":
                self._on_tx_end(data)
            elif kind == "sul_ul":
                self._on_sul_ul(*data)
            elif kind == "mcot_end":
                self._on_mcot_end(data)
            elif kind == "feedback_ready":
                self._kick(data)
        # airtime of transmissions still on air at the horizon
        if self.ch.active:
            self.metrics.airtime_us += max(self.horizon - self.busy_since, 0)
        return self.metrics


def run(config: ScenarioConfig) -> RunMetrics:
    """Simulate ``config.sim_duration_s`` of channel time; deterministic in (config, seed)."""
    return Simulator(config).run()
