"""Link configuration and the flat ``section.key = value`` config-file format."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields

from ..ddchannel import ChannelProfile, kmh
from ..numerology import PRESETS, ConstellationSpec, Numerology, default_cp_len, preset


class ConfigError(ValueError):
    """Invalid or unparseable link configuration."""


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text: str):
    return None if text.strip().lower() in ("", "none", "default") else int(text)


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none") else float(text)


def _meta(section: str, parse, help: str = ""):
    return {"section": section, "parse": parse, "help": help}


@dataclass(frozen=True)
class LinkConfig:
    # numerology
    preset: str = field(default="cv2x", metadata=_meta("numerology", str, "numerology preset name"))
    n_subcarriers: int = field(default=120, metadata=_meta("numerology", int))
    n_symbols: int = field(default=14, metadata=_meta("numerology", int))
    fft_size: int = field(default=128, metadata=_meta("numerology", int))
    cp_len: int | None = field(default=None, metadata=_meta("numerology", _opt_int, "default ceil(fft_size/14)"))
    # channel
    channel_model: str = field(default="multipath", metadata=_meta("channel", str, "multipath or awgn"))
    velocity_kmh: float = field(default=30.0, metadata=_meta("channel", float))
    n_paths: int = field(default=6, metadata=_meta("channel", int))
    pdp_decay: float = field(default=0.3e-6, metadata=_meta("channel", float, "seconds"))
    max_excess_delay: float = field(default=1.0e-6, metadata=_meta("channel", float, "seconds"))
    los: bool = field(default=True, metadata=_meta("channel", _bool))
    k_factor_db: float = field(default=10.0, metadata=_meta("channel", float))
    los_doppler_ratio: float = field(default=0.0, metadata=_meta("channel", float, "LoS doppler / f_max"))
    off_grid: bool = field(default=False, metadata=_meta("channel", _bool))
    snr_db: float = field(default=25.0, metadata=_meta("channel", float, "per-RE Es/N0"))
    # gear selection
    gear_mode: str = field(default="fixed", metadata=_meta("gear", str, "fixed or adaptive"))
    gear: int = field(default=1, metadata=_meta("gear", int))
    hysteresis_margin: int = field(default=2, metadata=_meta("gear", int))
    initial_gear: int = field(default=1, metadata=_meta("gear", int))
    # gear 1
    g1_d_t: int = field(default=7, metadata=_meta("gear1", int))
    g1_d_f: int = field(default=4, metadata=_meta("gear1", int))
    g1_offset_t: int = field(default=3, metadata=_meta("gear1", int))
    # gear 2
    g2_d_t: int = field(default=2, metadata=_meta("gear2", int))
    g2_d_f: int = field(default=4, metadata=_meta("gear2", int))
    g2_d_t_list: tuple[int, ...] = field(default=(2,), metadata=_meta("gear2", _ints, "sweep columns"))
    g2_equalizer: str = field(default="imfc", metadata=_meta("gear2", str, "imfc or banded_mmse"))
    # gear 3
    g3_pdr_db: float = field(default=25.0, metadata=_meta("gear3", float))
    g3_pdr_list: tuple[float, ...] = field(default=(25.0,), metadata=_meta("gear3", _floats, "sweep columns"))
    g3_n_iters: int = field(default=3, metadata=_meta("gear3", int))
    g3_pdr_convention: str = field(default="frame", metadata=_meta("gear3", str))
    g3_cfar_db: float | None = field(default=12.0, metadata=_meta("gear3", _opt_float))
    # estimation / equalization
    max_paths: int = field(default=8, metadata=_meta("estimate", int))
    threshold_rel_db: float = field(default=25.0, metadata=_meta("estimate", float))
    refine: bool = field(default=False, metadata=_meta("estimate", _bool))
    null_radius: int = field(default=0, metadata=_meta("estimate", int))
    eq_band: int = field(default=4, metadata=_meta("equalize", int))
    eq_iters: int = field(default=4, metadata=_meta("equalize", int))
    # report
    report_threshold_db: float = field(default=25.0, metadata=_meta("report", float))
    # payload and run
    constellation: int = field(default=4, metadata=_meta("run", int))
    n_frames: int = field(default=500, metadata=_meta("run", int))
    base_seed: int = field(default=1, metadata=_meta("run", int))
    workers: int = field(default=1, metadata=_meta("run", int))
    # genie hooks
    genie_common_doppler: bool = field(default=True, metadata=_meta("genie", _bool))
    genie_noise_var: bool = field(default=True, metadata=_meta("genie", _bool))
    genie_channel: bool = field(default=False, metadata=_meta("genie", _bool))

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        if self.gear_mode not in ("fixed", "adaptive"):
            raise ConfigError(f"gear_mode must be 'fixed' or 'adaptive', got {self.gear_mode!r}")
        for name in ("gear", "initial_gear"):
            if getattr(self, name) not in (1, 2, 3):
                raise ConfigError(f"{name} must be 1, 2 or 3")
        if self.channel_model not in ("multipath", "awgn"):
            raise ConfigError(f"channel_model must be 'multipath' or 'awgn', got {self.channel_model!r}")
        if self.null_radius < 0:
            raise ConfigError("null_radius must be non-negative")
        if self.g2_equalizer not in ("imfc", "banded_mmse"):
            raise ConfigError(f"unknown Gear-2 equalizer {self.g2_equalizer!r}")
        if self.g3_pdr_convention not in ("frame", "per_re"):
            raise ConfigError(f"unknown PDR convention {self.g3_pdr_convention!r}")
        if self.constellation not in (4, 16, 64):
            raise ConfigError("constellation must be 4, 16 or 64")
        positive = ("n_subcarriers", "n_symbols", "fft_size", "n_paths", "n_frames", "workers",
                    "g1_d_t", "g1_d_f", "g2_d_t", "g2_d_f", "g3_n_iters", "max_paths", "eq_iters")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.velocity_kmh < 0 or self.eq_band < 0 or self.hysteresis_margin < 0:
            raise ConfigError("velocity, eq_band and hysteresis_margin must be non-negative")
        if not math.isfinite(self.snr_db) and self.snr_db < 0:
            raise ConfigError("snr_db must not be -inf")
        if not self.genie_noise_var:
            raise ConfigError("noise-variance estimation is not implemented; genie_noise_var must stay true")
        if not 0 <= self.g1_offset_t < self.g1_d_t:
            raise ConfigError("g1_offset_t must lie in [0, g1_d_t)")
        if not self.g2_d_t_list or not self.g3_pdr_list:
            raise ConfigError("sweep column lists must not be empty")
        try:
            self.numerology()
            self.profile()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if max(self.g1_d_f, self.g2_d_f) > self.n_subcarriers or max(self.g1_d_t, self.g2_d_t) > self.n_symbols:
            raise ConfigError("pilot spacing exceeds the grid")

    def numerology(self) -> Numerology:
        cp = self.cp_len if self.cp_len is not None else default_cp_len(self.fft_size)
        return preset(self.preset, n_subcarriers=self.n_subcarriers, n_symbols=self.n_symbols,
                      fft_size=self.fft_size, cp_len=cp)

    def profile(self, velocity_kmh: float | None = None) -> ChannelProfile:
        v = self.velocity_kmh if velocity_kmh is None else velocity_kmh
        return ChannelProfile(kmh(v), self.n_paths, self.pdp_decay, self.max_excess_delay,
                              self.los, self.k_factor_db, self.off_grid,
                              los_doppler_ratio=self.los_doppler_ratio)

    def constellation_spec(self) -> ConstellationSpec:
        return ConstellationSpec(self.constellation)

    def replace(self, **changes) -> "LinkConfig":
        try:
            return dataclasses.replace(self, **changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v) for f in fields(self)}

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            text = " ".join(map(str, v)) if isinstance(v, tuple) else ("none" if v is None else str(v))
            lines.append(f"{f.metadata['section']}.{f.name} = {text}")
        return "\n".join(lines) + "\n"


FIELDS = {f.name: f for f in fields(LinkConfig)}


def parse_value(key: str, text: str):
    if key not in FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        return FIELDS[key].metadata["parse"](text.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from exc


def parse_config_text(text: str) -> dict:
    """Parse ``[section.]key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if "." in key:
            section, key = key.rsplit(".", 1)
            if key in FIELDS and FIELDS[key].metadata["section"] != section:
                raise ConfigError(f"line {lineno}: {key} belongs to section {FIELDS[key].metadata['section']!r}")
        out[key] = parse_value(key, value)
    return out


def load_config(path: str | None = None, overrides: dict | None = None) -> LinkConfig:
    values = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                values.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
    values.update(overrides or {})
    try:
        return LinkConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
