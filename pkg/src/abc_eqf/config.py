"""Run configuration: defaults, INI-style parsing and provenance echo.

The config file is a plain-text key-value format with sections ([run],
[trajectory], [noise], [init], and one [sensor.<id>] section per direction
sensor).  Every run writes back a fully resolved copy next to its outputs so
results stay reproducible.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


FILTER_CHOICES = ("eqf", "iekf", "both")
RESIDUAL_CHOICES = ("subtract", "literal")
MD_CHOICES = ("analytic", "first-order")
SENSOR_KINDS = ("fixed", "gnss")


@dataclass
class SensorConfig:
    """One direction sensor of the simulated platform.

    kind "fixed": body-frame measurement of a fixed known inertial direction
    (magnetometer-like).  kind "gnss": inertial direction of a known
    body-frame baseline, reconstructed from two noisy receiver positions and
    delivered as a time-varying reference alongside each measurement.
    """

    sensor_id: str
    kind: str = "fixed"
    calibrated: bool = False
    sigma_y: float = 0.1
    rate: float = 100.0
    dropout: float = 0.0
    jitter: float = 0.0
    reference: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    body_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    baseline: float = 1.0
    pos_std: float = 0.1


@dataclass
class RunConfig:
    """Everything needed to reproduce a simulation + filtering run."""

    seed: int = 0
    duration: float = 70.0
    filter: str = "both"
    residual_mode: str = "subtract"
    md_mode: str = "analytic"

    gyro_rate: float = 200.0
    traj_rate: float = 200.0
    amp_min: float = 0.2
    amp_max: float = 0.8
    freq_min: float = 0.1
    freq_max: float = 0.5

    sigma_w: float = 8.73e-4
    sigma_bw: float = 1.75e-5
    sigma_kappa: float = 1e-4

    att_err_deg: float = 10.0
    cal_err_deg: float = 20.0
    bias_init_std: float = 0.02
    sigma0_att_deg: float = 20.0
    sigma0_bias: float = 0.05
    sigma0_cal_deg: float = 30.0

    sensors: list[SensorConfig] = field(default_factory=list)

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)

    @property
    def n_cal(self) -> int:
        return sum(1 for s in self.sensors if s.calibrated)


def default_config(seed: int = 0) -> RunConfig:
    """Two-sensor scenario: calibrated magnetometer-like sensor at 100 Hz and
    an uncalibrated dual-receiver baseline direction at 20 Hz."""
    mag = SensorConfig(
        sensor_id="mag", kind="fixed", calibrated=True, sigma_y=0.2, rate=100.0,
        reference=np.array([1.0, 0.0, -1.0]) / np.sqrt(2.0),
    )
    gnss = SensorConfig(
        sensor_id="gnss", kind="gnss", calibrated=False, sigma_y=0.1, rate=20.0,
        body_axis=np.array([0.0, 1.0, 0.0]), baseline=1.0, pos_std=0.1,
    )
    return validate_config(RunConfig(seed=seed, sensors=[mag, gnss]))


def validate_config(cfg: RunConfig) -> RunConfig:
    if cfg.filter not in FILTER_CHOICES:
        raise ConfigError(f"[run] filter must be one of {FILTER_CHOICES}, got {cfg.filter!r}")
    if cfg.residual_mode not in RESIDUAL_CHOICES:
        raise ConfigError(f"[run] residual_mode must be one of {RESIDUAL_CHOICES}")
    if cfg.md_mode not in MD_CHOICES:
        raise ConfigError(f"[run] md_mode must be one of {MD_CHOICES}")
    if cfg.duration <= 0.0:
        raise ConfigError("[run] duration must be positive")
    if cfg.gyro_rate <= 0.0 or cfg.traj_rate <= 0.0:
        raise ConfigError("rates must be positive")
    if not _divides(cfg.traj_rate, cfg.gyro_rate):
        raise ConfigError("[trajectory] rate must be an integer multiple of the gyro rate")
    if not cfg.sensors:
        raise ConfigError("at least one [sensor.<id>] section is required")
    if cfg.n_cal > cfg.n_sensors:
        raise ConfigError("more calibration states than sensors")
    seen: set[str] = set()
    calibrated_done = False
    for s in cfg.sensors:
        if s.sensor_id in seen:
            raise ConfigError(f"duplicate sensor id {s.sensor_id!r}")
        seen.add(s.sensor_id)
        if s.kind not in SENSOR_KINDS:
            raise ConfigError(f"[sensor.{s.sensor_id}] kind must be one of {SENSOR_KINDS}")
        if not s.calibrated:
            calibrated_done = True
        elif calibrated_done:
            raise ConfigError("calibrated sensors must be listed before uncalibrated ones")
        if s.rate <= 0.0 or not _divides(cfg.traj_rate, s.rate):
            raise ConfigError(
                f"[sensor.{s.sensor_id}] rate must positively divide the trajectory rate")
        if not 0.0 <= s.dropout <= 1.0:
            raise ConfigError(f"[sensor.{s.sensor_id}] dropout must lie in [0, 1]")
        if s.jitter < 0.0:
            raise ConfigError(f"[sensor.{s.sensor_id}] jitter must be non-negative")
        if s.sigma_y < 0.0:
            raise ConfigError(f"[sensor.{s.sensor_id}] sigma_y must be non-negative")
        norm = float(np.linalg.norm(s.reference))
        if s.kind == "fixed":
            if norm < 1e-9:
                raise ConfigError(f"[sensor.{s.sensor_id}] reference must be nonzero")
            if abs(norm - 1.0) > 1e-12:   # keep echoed configs bit-stable
                s.reference = s.reference / norm
        else:
            bnorm = float(np.linalg.norm(s.body_axis))
            if bnorm < 1e-9:
                raise ConfigError(f"[sensor.{s.sensor_id}] body_axis must be nonzero")
            if abs(bnorm - 1.0) > 1e-12:
                s.body_axis = s.body_axis / bnorm
            if s.baseline <= 0.0:
                raise ConfigError(f"[sensor.{s.sensor_id}] baseline must be positive")
            if s.pos_std < 0.0:
                raise ConfigError(f"[sensor.{s.sensor_id}] pos_std must be non-negative")
    if min(cfg.sigma_w, cfg.sigma_bw, cfg.sigma_kappa) < 0.0:
        raise ConfigError("[noise] densities must be non-negative")
    return cfg


def _divides(high: float, low: float) -> bool:
    ratio = high / low
    return abs(ratio - round(ratio)) < 1e-9 and round(ratio) >= 1


_RUN_KEYS = {"seed", "duration", "filter", "residual_mode", "md_mode", "gyro_rate"}
_TRAJ_KEYS = {"rate", "amp_min", "amp_max", "freq_min", "freq_max"}
_NOISE_KEYS = {"sigma_w", "sigma_bw", "sigma_kappa"}
_INIT_KEYS = {"att_err_deg", "cal_err_deg", "bias_init_std",
              "sigma0_att_deg", "sigma0_bias", "sigma0_cal_deg"}
_SENSOR_KEYS = {"kind", "calibrated", "sigma_y", "rate", "dropout", "jitter",
                "reference", "body_axis", "baseline", "pos_std"}


def load_config(path: str | Path) -> RunConfig:
    """Parse a config file, filling every unset key with its default."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    cfg = RunConfig()
    try:
        _apply_sections(parser, cfg)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from exc
    return validate_config(cfg)


def _apply_sections(parser: configparser.ConfigParser, cfg: RunConfig) -> None:
    for section in parser.sections():
        items = parser[section]
        if section == "run":
            _check_keys(section, items, _RUN_KEYS)
            cfg.seed = items.getint("seed", cfg.seed)
            cfg.duration = items.getfloat("duration", cfg.duration)
            cfg.filter = items.get("filter", cfg.filter)
            cfg.residual_mode = items.get("residual_mode", cfg.residual_mode)
            cfg.md_mode = items.get("md_mode", cfg.md_mode)
            cfg.gyro_rate = items.getfloat("gyro_rate", cfg.gyro_rate)
        elif section == "trajectory":
            _check_keys(section, items, _TRAJ_KEYS)
            cfg.traj_rate = items.getfloat("rate", cfg.traj_rate)
            cfg.amp_min = items.getfloat("amp_min", cfg.amp_min)
            cfg.amp_max = items.getfloat("amp_max", cfg.amp_max)
            cfg.freq_min = items.getfloat("freq_min", cfg.freq_min)
            cfg.freq_max = items.getfloat("freq_max", cfg.freq_max)
        elif section == "noise":
            _check_keys(section, items, _NOISE_KEYS)
            cfg.sigma_w = items.getfloat("sigma_w", cfg.sigma_w)
            cfg.sigma_bw = items.getfloat("sigma_bw", cfg.sigma_bw)
            cfg.sigma_kappa = items.getfloat("sigma_kappa", cfg.sigma_kappa)
        elif section == "init":
            _check_keys(section, items, _INIT_KEYS)
            cfg.att_err_deg = items.getfloat("att_err_deg", cfg.att_err_deg)
            cfg.cal_err_deg = items.getfloat("cal_err_deg", cfg.cal_err_deg)
            cfg.bias_init_std = items.getfloat("bias_init_std", cfg.bias_init_std)
            cfg.sigma0_att_deg = items.getfloat("sigma0_att_deg", cfg.sigma0_att_deg)
            cfg.sigma0_bias = items.getfloat("sigma0_bias", cfg.sigma0_bias)
            cfg.sigma0_cal_deg = items.getfloat("sigma0_cal_deg", cfg.sigma0_cal_deg)
        elif section.startswith("sensor."):
            _check_keys(section, items, _SENSOR_KEYS)
            sensor = SensorConfig(sensor_id=section.split(".", 1)[1])
            sensor.kind = items.get("kind", sensor.kind)
            sensor.calibrated = items.getboolean("calibrated", sensor.calibrated)
            sensor.sigma_y = items.getfloat("sigma_y", sensor.sigma_y)
            sensor.rate = items.getfloat("rate", sensor.rate)
            sensor.dropout = items.getfloat("dropout", sensor.dropout)
            sensor.jitter = items.getfloat("jitter", sensor.jitter)
            if "reference" in items:
                sensor.reference = _parse_vec3(section, "reference", items["reference"])
            if "body_axis" in items:
                sensor.body_axis = _parse_vec3(section, "body_axis", items["body_axis"])
            sensor.baseline = items.getfloat("baseline", sensor.baseline)
            sensor.pos_std = items.getfloat("pos_std", sensor.pos_std)
            cfg.sensors.append(sensor)
        else:
            raise ConfigError(f"unknown config section [{section}]")


def _check_keys(section: str, items: configparser.SectionProxy, allowed: set[str]) -> None:
    for key in items:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")


def _parse_vec3(section: str, key: str, raw: str) -> np.ndarray:
    parts = raw.replace(",", " ").split()
    if len(parts) != 3:
        raise ConfigError(f"[{section}] {key} needs three components, got {raw!r}")
    try:
        return np.array([float(p) for p in parts])
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from exc


def echo_config(cfg: RunConfig, path: str | Path) -> None:
    """Write the fully resolved configuration (all defaults expanded)."""
    parser = configparser.ConfigParser()
    parser["run"] = {
        "seed": str(cfg.seed),
        "duration": repr(cfg.duration),
        "filter": cfg.filter,
        "residual_mode": cfg.residual_mode,
        "md_mode": cfg.md_mode,
        "gyro_rate": repr(cfg.gyro_rate),
    }
    parser["trajectory"] = {
        "rate": repr(cfg.traj_rate),
        "amp_min": repr(cfg.amp_min),
        "amp_max": repr(cfg.amp_max),
        "freq_min": repr(cfg.freq_min),
        "freq_max": repr(cfg.freq_max),
    }
    parser["noise"] = {
        "sigma_w": repr(cfg.sigma_w),
        "sigma_bw": repr(cfg.sigma_bw),
        "sigma_kappa": repr(cfg.sigma_kappa),
    }
    parser["init"] = {
        "att_err_deg": repr(cfg.att_err_deg),
        "cal_err_deg": repr(cfg.cal_err_deg),
        "bias_init_std": repr(cfg.bias_init_std),
        "sigma0_att_deg": repr(cfg.sigma0_att_deg),
        "sigma0_bias": repr(cfg.sigma0_bias),
        "sigma0_cal_deg": repr(cfg.sigma0_cal_deg),
    }
    for s in cfg.sensors:
        section = {
            "kind": s.kind,
            "calibrated": str(s.calibrated).lower(),
            "sigma_y": repr(s.sigma_y),
            "rate": repr(s.rate),
            "dropout": repr(s.dropout),
            "jitter": repr(s.jitter),
        }
        if s.kind == "fixed":
            section["reference"] = _fmt_vec3(s.reference)
        else:
            section["body_axis"] = _fmt_vec3(s.body_axis)
            section["baseline"] = repr(s.baseline)
            section["pos_std"] = repr(s.pos_std)
        parser[f"sensor.{s.sensor_id}"] = section
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)


def _fmt_vec3(v: np.ndarray) -> str:
    return " ".join(f"{x:.17g}" for x in v)


def with_seed(cfg: RunConfig, seed: int) -> RunConfig:
    return replace(cfg, seed=seed)
