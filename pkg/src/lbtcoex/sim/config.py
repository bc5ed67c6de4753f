"""Scenario configuration: a flat key/value schema stored as JSON."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, fields
from pathlib import Path

UPLINK_MODES = ("SUL", "GUL")
SENSING_MODES = ("IDEAL", "ENERGY_DETECTION")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    """Simulator input.  Times are in the units named by each key's suffix.

    ``lambda_files_per_s`` is the FTP file arrival rate of each user (UE or
    STA); ``dl_ul_split`` divides it between downlink and uplink files.
    ``ed_tnr_db`` is the detection threshold above the noise floor, used only
    with ``sensing = "ENERGY_DETECTION"``.
    """

    n_wifi_ap: int = 4
    n_sta_per_ap: int = 2
    n_enb: int = 4
    n_ue_per_enb: int = 2
    uplink_mode: str = "GUL"
    mcot_ms: float = 5.0
    grant_processing_delay_ms: float = 4.0
    lambda_files_per_s: float = 0.5
    file_size_bytes: int = 500_000
    dl_ul_split: str = "50:50"
    phy_rate_mbps: float = 50.0
    sensing: str = "IDEAL"
    ed_mu: int = 1
    ed_tnr_db: float = 5.0
    snr_per_tx: float = 10.0
    ed_false_alarm: bool = False
    seed: int = 1
    sim_duration_s: float = 20.0
    slot_us: int = 9
    defer_prefix_us: int = 16
    mf_defer_slots: int = 1
    wifi_defer_slots: int = 2
    single_slot_lbt_us: int = 25
    w0: int = 16
    m: int = 4
    wifi_txop_ms: float = 1.0
    preamble_us: int = 0
    subframe_mode: str = "sync"
    allowed_starts: str = "1,8"
    harq_processes: int = 16
    feedback_delay_ms: float = 0.0
    pusch_indication: str = "uci"
    dmrs_miss_prob: float = 0.0
    mcs_selection: str = "ue"

    def __post_init__(self):
        try:
            self._validate()
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from None

    def _validate(self):
        for name in ("n_wifi_ap", "n_sta_per_ap", "n_enb", "n_ue_per_enb"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.uplink_mode not in UPLINK_MODES:
            raise ValueError(f"uplink_mode must be one of {UPLINK_MODES}")
        if self.sensing not in SENSING_MODES:
            raise ValueError(f"sensing must be one of {SENSING_MODES}")
        for name in ("mcot_ms", "grant_processing_delay_ms", "phy_rate_mbps", "wifi_txop_ms", "snr_per_tx"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.lambda_files_per_s < 0 or self.sim_duration_s < 0 or self.feedback_delay_ms < 0:
            raise ValueError("rates and durations must be >= 0")
        if self.file_size_bytes < 1:
            raise ValueError("file_size_bytes must be >= 1")
        self.split()
        self.starts()
        if self.slot_us < 1 or self.defer_prefix_us < 0 or self.single_slot_lbt_us < 1:
            raise ValueError("LBT timing values must be positive")
        if self.mf_defer_slots < 0 or self.wifi_defer_slots < 0 or self.preamble_us < 0:
            raise ValueError("defer slots and preamble must be >= 0")
        if self.w0 < 2 or self.m < 0 or not 1 <= self.harq_processes <= 16:
            raise ValueError("need w0 >= 2, m >= 0 and 1..16 HARQ processes")
        if self.ed_mu < 1:
            raise ValueError("ed_mu must be >= 1")
        if self.subframe_mode not in ("sync", "async"):
            raise ValueError("subframe_mode must be 'sync' or 'async'")
        if self.pusch_indication not in ("uci", "dmrs") or not 0 <= self.dmrs_miss_prob <= 1:
            raise ValueError("bad PUSCH indication settings")
        if self.mcs_selection not in ("ue", "enb"):
            raise ValueError("mcs_selection must be 'ue' or 'enb'")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def split(self):
        """(dl_fraction, ul_fraction) from the ``"DL:UL"`` percentage string."""
        try:
            dl, ul = (float(x) for x in str(self.dl_ul_split).split(":"))
        except ValueError:
            raise ValueError(f"dl_ul_split must look like '50:50', got {self.dl_ul_split!r}") from None
        if dl < 0 or ul < 0 or abs(dl + ul - 100.0) > 1e-9:
            raise ValueError("dl_ul_split components must be >= 0 and sum to 100")
        return dl / 100.0, ul / 100.0

    def starts(self):
        try:
            out = {int(x) for x in str(self.allowed_starts).split(",") if x.strip()}
        except ValueError:
            raise ValueError("allowed_starts must be a comma list such as '1,8'") from None
        if not out <= {1, 8}:
            raise ValueError("allowed_starts must be a subset of {1, 8}")
        return out

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELD_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}


def _coerce(key, value):
    kind = _FIELD_TYPES[key]
    if kind == "bool":
        if isinstance(value, bool):
            return value
        if str(value).lower() in ("1", "true", "yes"):
            return True
        if str(value).lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"{key} expects a boolean, got {value!r}")
    try:
        if kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if kind == "float":
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} expects {kind}, got {value!r}") from None
    return str(value)


def config_from_dict(data: dict) -> ScenarioConfig:
    unknown = sorted(set(data) - set(_FIELD_TYPES))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return ScenarioConfig(**{k: _coerce(k, v) for k, v in data.items()})


def parse_overrides(items) -> dict:
    """``["key=value", ...]`` to a dict; keys must exist in the schema."""
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        out[key] = value.strip()
    return out


def load_config(path=None, overrides=None) -> ScenarioConfig:
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    data.update(parse_overrides(overrides))
    return config_from_dict(data)
