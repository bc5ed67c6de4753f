"""Grant-less uplink control plane: UCI codec, subframe planning, link adaptation, HARQ.

UCI wire format (bit strings of '0'/'1', each field MSB first, fields in
this order)::

    COMPACT (28 bits)  c_rnti:16 harq_process:4 ndi:1 burst_len_sf:4 carrier_idx:3
    FULL    (52 bits)  COMPACT fields, then a_csi:8 harq_ack_bitmap:16

A burst carries FULL UCI in its first subframe and COMPACT in the rest.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

SYMBOLS_PER_SF = 14
SF_US = 1000.0
SYMBOL_US = SF_US / SYMBOLS_PER_SF
ALLOWED_PARTIAL_STARTS = frozenset({1, 8})


class UciFormat(str, Enum):
    COMPACT = "COMPACT"
    FULL = "FULL"


COMPACT_FIELDS = (("c_rnti", 16), ("harq_process", 4), ("ndi", 1), ("burst_len_sf", 4), ("carrier_idx", 3))
FULL_EXTRA_FIELDS = (("a_csi", 8), ("harq_ack_bitmap", 16))
UCI_BITS = {
    UciFormat.COMPACT: sum(w for _, w in COMPACT_FIELDS),
    UciFormat.FULL: sum(w for _, w in COMPACT_FIELDS + FULL_EXTRA_FIELDS),
}


class UciLengthError(ValueError):
    """Bit string length does not fit the hypothesised format.

    ``other_format`` names the format whose length does match, if any, so a
    blind decoder knows which hypothesis to try next.
    """

    def __init__(self, got, expected_format, other_format):
        self.got = got
        self.expected_format = expected_format
        self.other_format = other_format
        hint = f"; try {other_format.value}" if other_format else ""
        super().__init__(
            f"{got} bits do not match {expected_format.value} ({UCI_BITS[expected_format]} bits){hint}"
        )


@dataclass(frozen=True)
class UciPayload:
    """Uplink control information accompanying a grant-less subframe.

    ``a_csi`` and ``harq_ack_bitmap`` exist only in FULL format; encoding a
    FULL payload with them unset sends zeros.
    """

    c_rnti: int
    harq_process: int
    ndi: int
    burst_len_sf: int = 1
    carrier_idx: int = 0
    format: UciFormat = UciFormat.COMPACT
    a_csi: Optional[int] = None
    harq_ack_bitmap: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "format", UciFormat(self.format))
        for name, width in COMPACT_FIELDS:
            _check_width(name, getattr(self, name), width)
        for name, width in FULL_EXTRA_FIELDS:
            v = getattr(self, name)
            if self.format is UciFormat.COMPACT and v is not None:
                raise ValueError(f"{name} is not carried in COMPACT UCI")
            if v is not None:
                _check_width(name, v, width)


def _check_width(name, value, width):
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value < (1 << width):
        raise ValueError(f"{name}={value!r} does not fit in {width} bits")


def encode_uci(p: UciPayload) -> str:
    fields = COMPACT_FIELDS if p.format is UciFormat.COMPACT else COMPACT_FIELDS + FULL_EXTRA_FIELDS
    return "".join(format(getattr(p, name) or 0, f"0{width}b") for name, width in fields)


def decode_uci(bits: str, fmt: UciFormat) -> UciPayload:
    fmt = UciFormat(fmt)
    if len(bits) != UCI_BITS[fmt]:
        other = next((f for f in UciFormat if f is not fmt and UCI_BITS[f] == len(bits)), None)
        raise UciLengthError(len(bits), fmt, other)
    if set(bits) - {"0", "1"}:
        raise ValueError("UCI bit string may only contain '0' and '1'")
    fields = COMPACT_FIELDS if fmt is UciFormat.COMPACT else COMPACT_FIELDS + FULL_EXTRA_FIELDS
    values, pos = {}, 0
    for name, width in fields:
        values[name] = int(bits[pos:pos + width], 2)
        pos += width
    return UciPayload(format=fmt, **values)


def blind_decode(bits: str) -> UciPayload:
    """Try each predefined size in turn, as a receiver without size signalling would."""
    err = None
    for fmt in (UciFormat.COMPACT, UciFormat.FULL):
        try:
            return decode_uci(bits, fmt)
        except UciLengthError as e:
            err = e
    raise err


def build_burst_uci(c_rnti: int, harq_ids: Sequence[int], ndis: Sequence[int], carrier_idx: int = 0,
                    a_csi: int = 0, harq_ack_bitmap: int = 0) -> list[UciPayload]:
    """Per-subframe UCI for a burst of ``len(harq_ids)`` subframes.

    The first subframe carries FULL UCI, later ones COMPACT; ``burst_len_sf``
    counts the subframes remaining including the current one.
    """
    n = len(harq_ids)
    if n < 1 or len(ndis) != n:
        raise ValueError("need one HARQ id and NDI per subframe")
    out = []
    for i, (pid, ndi) in enumerate(zip(harq_ids, ndis)):
        common = dict(c_rnti=c_rnti, harq_process=pid, ndi=ndi, burst_len_sf=n - i, carrier_idx=carrier_idx)
        if i == 0:
            out.append(UciPayload(format=UciFormat.FULL, a_csi=a_csi, harq_ack_bitmap=harq_ack_bitmap, **common))
        else:
            out.append(UciPayload(**common))
    return out


def burst_uci_bits(n_sf: int) -> int:
    """UCI overhead of an ``n_sf`` burst: one FULL header plus COMPACT per further SF."""
    return UCI_BITS[UciFormat.FULL] + (n_sf - 1) * UCI_BITS[UciFormat.COMPACT] if n_sf > 0 else 0


class PuschIndication(str, Enum):
    UCI = "uci"
    DMRS = "dmrs"


def pusch_detected(method: PuschIndication, rng, miss_prob: float = 0.0) -> bool:
    """Whether the eNB notices a grant-less PUSCH.

    Explicit UCI is always seen; DMRS detection misses with ``miss_prob``.
    """
    if PuschIndication(method) is PuschIndication.UCI:
        return True
    return rng.random() >= miss_prob


# -- subframe planning -----------------------------------------------------------

class SubframeKind(str, Enum):
    SYNC_PARTIAL = "SYNC_PARTIAL"
    SYNC_FULL = "SYNC_FULL"
    ASYNC = "ASYNC"


@dataclass(frozen=True)
class SubframePlan:
    """Where the uplink burst starts relative to the current subframe.

    ``next_subframe`` is True when the reservation runs to the next subframe
    boundary and the burst starts there.
    """

    kind: SubframeKind
    start_symbol: int
    reservation_us: float
    next_subframe: bool = False


def symbol_boundary_us(symbol: int) -> float:
    return symbol * SF_US / SYMBOLS_PER_SF


def plan_subframe(lbt_end_offset_us: float, allowed_starts: Iterable[int] = ALLOWED_PARTIAL_STARTS,
                  mode: str = "sync") -> SubframePlan:
    """Plan the start of an uplink burst after LBT ends ``lbt_end_offset_us`` into a subframe.

    In sync mode the burst begins at the first allowed partial start at or
    after the offset, or at the next subframe boundary when none is left; the
    gap is filled by a reservation signal.  Async mode starts at once.
    """
    if not 0.0 <= lbt_end_offset_us < SF_US:
        raise ValueError(f"offset {lbt_end_offset_us!r} outside [0, {SF_US})")
    starts = sorted(set(allowed_starts))
    if not set(starts) <= ALLOWED_PARTIAL_STARTS:
        raise ValueError(f"allowed starts must be a subset of {sorted(ALLOWED_PARTIAL_STARTS)}")
    if mode == "async":
        return SubframePlan(SubframeKind.ASYNC, 0, 0.0)
    if mode != "sync":
        raise ValueError(f"unknown mode {mode!r}")
    if lbt_end_offset_us == 0.0:
        return SubframePlan(SubframeKind.SYNC_FULL, 0, 0.0)
    for s in starts:
        boundary = symbol_boundary_us(s)
        if boundary >= lbt_end_offset_us:
            return SubframePlan(SubframeKind.SYNC_PARTIAL, s, boundary - lbt_end_offset_us)
    rest = SF_US - lbt_end_offset_us
    if rest >= SF_US:  # offset below float resolution of the subframe: already aligned
        return SubframePlan(SubframeKind.SYNC_FULL, 0, 0.0)
    return SubframePlan(SubframeKind.SYNC_FULL, 0, rest, next_subframe=True)


# -- link adaptation -----------------------------------------------------------------

CSI_MIN_DB = -10.0
CSI_STEP_DB = 0.25
DEFAULT_MCS_THRESHOLDS_DB = tuple(2.0 * i for i in range(8))


def quantize_csi(snr_db: float) -> int:
    """8-bit CSI word: 0.25 dB steps from -10 dB, saturating at both ends."""
    return int(min(max(round((snr_db - CSI_MIN_DB) / CSI_STEP_DB), 0), 255))


def dequantize_csi(word: int) -> float:
    _check_width("csi", word, 8)
    return CSI_MIN_DB + CSI_STEP_DB * word


def link_adaptation_step(csi_report: int, mcs_table: Sequence[float] = DEFAULT_MCS_THRESHOLDS_DB) -> int:
    """Highest MCS whose SNR threshold is at or below the reported SNR (0 if none)."""
    if not mcs_table:
        raise ValueError("MCS table is empty")
    if any(b <= a for a, b in zip(mcs_table, mcs_table[1:])):
        raise ValueError("MCS thresholds must be strictly increasing")
    snr = dequantize_csi(csi_report)
    return max(bisect.bisect_right(mcs_table, snr) - 1, 0)


class McsSelection(str, Enum):
    UE = "ue"
    ENB = "enb"


# -- HARQ -------------------------------------------------------------------------------

class HarqError(RuntimeError):
    pass


@dataclass
class HarqProcess:
    process_id: int
    ndi: int = 0
    pending: bool = False
    tx_count: int = 0


@dataclass
class HarqProcessTable:
    """Per-UE HARQ processes.  A process never used behaves as if its last data was acked."""

    n_processes: int = 16
    processes: list = field(default_factory=list)

    def __post_init__(self):
        if not self.processes:
            self.processes = [HarqProcess(i) for i in range(self.n_processes)]

    def __getitem__(self, pid) -> HarqProcess:
        return self.processes[pid]

    def free_process(self) -> Optional[int]:
        return next((p.process_id for p in self.processes if not p.pending), None)

    def new_data(self, pid: int) -> int:
        """Start new data on an idle process; toggles and returns its NDI."""
        p = self.processes[pid]
        if p.pending:
            raise HarqError(f"process {pid} still awaits feedback")
        p.ndi ^= 1
        p.pending = True
        p.tx_count = 0
        return p.ndi

    def retransmit(self, pid: int) -> int:
        p = self.processes[pid]
        if not p.pending:
            raise HarqError(f"process {pid} has nothing to retransmit")
        return p.ndi


def harq_on_feedback(table: HarqProcessTable, process_id: int, ack: bool) -> HarqProcessTable:
    """Apply ACK/NACK: ACK frees the process, NACK counts a failed attempt."""
    p = table.processes[process_id]
    if not p.pending:
        raise HarqError(f"feedback for idle process {process_id}")
    if ack:
        p.pending = False
    else:
        p.tx_count += 1
    return table
