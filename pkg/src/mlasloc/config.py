"""Experiment configuration: JSON schema, validation, dotted-path overrides.

The schema is intentionally flat (one JSON object), documented in the README
and in the shipped configs. ``load_raw`` reads and patches the JSON dict,
``build_config`` turns it into validated dataclasses; the CLI keeps the raw
dict around so the resolved configuration can be written next to results.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .channel import (
    SPEED_OF_LIGHT,
    VARIANT_DETERMINISTIC,
    VARIANT_GAUSSIAN,
    CoefficientModel,
    OfdmParams,
)
from .geometry import ArraySpec, RadarPairGeometry, Scene, angles_for_target
from .mapgrid import GridSpec
from .subspace import AngleGridSpec

METHOD_MLAS = "mlas"
METHOD_MUSIC_COMBINATION = "music-combination"
METHOD_SOFT_FUSION = "soft-fusion"
ALL_METHODS = (METHOD_MLAS, METHOD_MUSIC_COMBINATION, METHOD_SOFT_FUSION)

_DRAW_ATTEMPTS_PER_TARGET = 10_000


class ConfigError(ValueError):
    """Configuration file or override is invalid."""


@dataclass(frozen=True)
class TargetRegion:
    """Axis-aligned rectangle targets are drawn from, with a separation floor."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    min_separation: float = 1.0

    def __post_init__(self):
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise ConfigError("target region must satisfy max > min in both axes")
        if self.min_separation < 0:
            raise ConfigError("min_separation must be >= 0")


@dataclass(frozen=True)
class SceneTemplate:
    """Fixed radar geometry plus either fixed targets or a sampling region."""

    pairs: tuple[RadarPairGeometry, ...]
    num_targets: int
    region: TargetRegion | None = None
    fixed_targets: np.ndarray | None = None

    def __post_init__(self):
        if len(self.pairs) < 1:
            raise ConfigError("need at least one radar pair")
        if self.num_targets < 1:
            raise ConfigError("num_targets must be >= 1")
        min_dim = min(p.channel_dim for p in self.pairs)
        if self.num_targets >= min_dim:
            raise ConfigError(
                f"num_targets must stay below the smallest channel dimension {min_dim}"
            )
        if self.region is None and self.fixed_targets is None:
            raise ConfigError("either targets or target_region must be given")
        if self.fixed_targets is not None and len(self.fixed_targets) != self.num_targets:
            raise ConfigError("targets length disagrees with num_targets")

    def _in_view(self, point: np.ndarray) -> bool:
        for pair in self.pairs:
            try:
                angles_for_target(pair, point)
            except ValueError:
                return False
        return True

    def realize(self, rng: np.random.Generator) -> Scene:
        """Scene with fixed targets, or targets drawn uniformly in the region.

        Draws are sequential-rejection: a candidate is kept when it is in
        every array's field of view and at least ``min_separation`` from all
        targets kept so far.
        """
        if self.fixed_targets is not None:
            return Scene(pairs=self.pairs, targets=self.fixed_targets)
        region = self.region
        assert region is not None
        targets: list[np.ndarray] = []
        for _ in range(self.num_targets):
            for _attempt in range(_DRAW_ATTEMPTS_PER_TARGET):
                cand = np.array(
                    [
                        rng.uniform(region.x_min, region.x_max),
                        rng.uniform(region.y_min, region.y_max),
                    ]
                )
                if not self._in_view(cand):
                    continue
                if targets and min(
                    float(np.linalg.norm(cand - t)) for t in targets
                ) < region.min_separation:
                    continue
                targets.append(cand)
                break
            else:
                raise RuntimeError(
                    "could not place targets; region too small for the "
                    "requested separation"
                )
        return Scene(pairs=self.pairs, targets=np.array(targets))


@dataclass(frozen=True)
class ExperimentConfig:
    scene: SceneTemplate
    ofdm: OfdmParams
    coefficients: CoefficientModel
    grid: GridSpec
    angle_grid: AngleGridSpec
    snr_grid_db: tuple[float, ...]
    num_trials: int
    master_seed: int
    hit_radius: float
    methods: tuple[str, ...]
    noise_variance_mode: str = "known"
    matching_mode: str = "greedy"
    music_combination_scale: str = "linear"
    snr_db: float = 20.0  # SNR for single-map runs
    dump_maps: bool = False

    def __post_init__(self):
        if self.num_trials < 1:
            raise ConfigError("num_trials must be >= 1")
        if self.hit_radius <= 0:
            raise ConfigError("hit_radius must be > 0")
        if not self.snr_grid_db:
            raise ConfigError("snr_grid_db must be non-empty")
        if not self.methods:
            raise ConfigError("methods must be non-empty")
        bad = [m for m in self.methods if m not in ALL_METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; valid: {list(ALL_METHODS)}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods must not repeat")
        if self.noise_variance_mode not in ("known", "estimated"):
            raise ConfigError("noise_variance_mode must be 'known' or 'estimated'")
        if self.matching_mode not in ("greedy", "optimal"):
            raise ConfigError("matching_mode must be 'greedy' or 'optimal'")
        if self.music_combination_scale not in ("linear", "db"):
            raise ConfigError("music_combination_scale must be 'linear' or 'db'")


def default_raw_config() -> dict:
    """Two transmitters sharing one receiver (two radar pairs), K = 3."""
    return {
        "pairs": [
            {
                "id": 0,
                "stx": {"origin": [-6.0, 0.0], "boresight": [0.0, 1.0], "num_elements": 4},
                "srx": {"origin": [0.0, 0.0], "boresight": [0.0, 1.0], "num_elements": 4},
            },
            {
                "id": 1,
                "stx": {"origin": [6.0, 0.0], "boresight": [0.0, 1.0], "num_elements": 4},
                "srx": {"origin": [0.0, 0.0], "boresight": [0.0, 1.0], "num_elements": 4},
            },
        ],
        "num_targets": 3,
        "target_region": {
            "x_min": -4.0,
            "x_max": 4.0,
            "y_min": 5.0,
            "y_max": 11.0,
            "min_separation": 1.0,
        },
        "ofdm": {
            "num_subcarriers": 1024,
            "subcarrier_spacing_hz": 78125.0,
            "carrier_frequency_hz": 5.8e9,
        },
        "coefficients": {
            "variant": VARIANT_GAUSSIAN,
            "reference_amplitude": 1.0e4,
        },
        "map_grid": {"x_min": -5.0, "x_max": 5.0, "y_min": 4.0, "y_max": 12.0, "spacing": 0.25},
        "angle_grid_spacing_deg": 1.0,
        "snr_grid_db": [-10.0, 0.0, 10.0, 20.0],
        "num_trials": 500,
        "master_seed": 20260823,
        "hit_radius": 2.0,
        "methods": list(ALL_METHODS),
        "noise_variance_mode": "known",
        "matching_mode": "greedy",
        "music_combination_scale": "linear",
        "snr_db": 20.0,
        "dump_maps": False,
    }


def apply_override(raw: dict, assignment: str) -> None:
    """Apply one ``dotted.path=json_value`` override in place.

    The value is parsed as JSON when possible, else taken as a string.
    Intermediate objects are created as needed, so overrides can introduce
    optional sections a config file omitted.
    """
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} must look like key=value")
    key, _, raw_value = assignment.partition("=")
    key = key.strip()
    if not key:
        raise ConfigError(f"override {assignment!r} has an empty key")
    try:
        value = json.loads(raw_value)
    except json.JSONDecodeError:
        value = raw_value
    node = raw
    parts = key.split(".")
    for part in parts[:-1]:
        nxt = node.get(part)
        if nxt is None:
            nxt = {}
            node[part] = nxt
        if not isinstance(nxt, dict):
            raise ConfigError(f"override path {key!r} crosses non-object {part!r}")
        node = nxt
    node[parts[-1]] = value


def load_raw(path, overrides: Sequence[str] = ()) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must contain a JSON object")
    for assignment in overrides:
        apply_override(raw, assignment)
    return raw


def _build_array(data: dict, what: str) -> ArraySpec:
    try:
        return ArraySpec(
            origin=np.asarray(data["origin"], dtype=float),
            boresight=np.asarray(data["boresight"], dtype=float),
            num_elements=int(data["num_elements"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad array spec for {what}: {exc}") from exc


def _build_ofdm(data: dict) -> OfdmParams:
    if "carrier_wavelength_m" in data:
        wavelength = float(data["carrier_wavelength_m"])
    elif "carrier_frequency_hz" in data:
        f = float(data["carrier_frequency_hz"])
        if f <= 0:
            raise ConfigError("carrier_frequency_hz must be > 0")
        wavelength = SPEED_OF_LIGHT / f
    else:
        raise ConfigError("ofdm needs carrier_frequency_hz or carrier_wavelength_m")
    try:
        return OfdmParams(
            num_subcarriers=int(data.get("num_subcarriers", 1024)),
            subcarrier_spacing_hz=float(data.get("subcarrier_spacing_hz", 78125.0)),
            carrier_wavelength_m=wavelength,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad ofdm section: {exc}") from exc


def build_config(raw: dict) -> ExperimentConfig:
    defaults = default_raw_config()

    def get(key):
        return raw.get(key, defaults[key])

    pairs_raw = raw.get("pairs")
    if not isinstance(pairs_raw, list) or not pairs_raw:
        raise ConfigError("config needs a non-empty 'pairs' list")
    pairs = []
    for i, p in enumerate(pairs_raw):
        if "stx" not in p or "srx" not in p:
            raise ConfigError(f"pair {i} needs 'stx' and 'srx' sections")
        pairs.append(
            RadarPairGeometry(
                stx=_build_array(p["stx"], f"pair {i} stx"),
                srx=_build_array(p["srx"], f"pair {i} srx"),
                id=int(p.get("id", i)),
            )
        )

    fixed = raw.get("targets")
    fixed_arr = None
    if fixed is not None:
        fixed_arr = np.asarray(fixed, dtype=float)
        if fixed_arr.ndim != 2 or fixed_arr.shape[1] != 2:
            raise ConfigError("targets must be a list of [x, y] pairs")
    num_targets = int(raw.get("num_targets", len(fixed_arr) if fixed_arr is not None else defaults["num_targets"]))

    region = None
    region_raw = raw.get("target_region", None if fixed_arr is not None else defaults["target_region"])
    if region_raw is not None:
        try:
            region = TargetRegion(
                x_min=float(region_raw["x_min"]),
                x_max=float(region_raw["x_max"]),
                y_min=float(region_raw["y_min"]),
                y_max=float(region_raw["y_max"]),
                min_separation=float(region_raw.get("min_separation", 1.0)),
            )
        except KeyError as exc:
            raise ConfigError(f"target_region is missing {exc}") from exc

    try:
        scene = SceneTemplate(
            pairs=tuple(pairs),
            num_targets=num_targets,
            region=region,
            fixed_targets=fixed_arr,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    coeff_raw = get("coefficients")
    variant = coeff_raw.get("variant", VARIANT_GAUSSIAN)
    if variant not in (VARIANT_DETERMINISTIC, VARIANT_GAUSSIAN):
        raise ConfigError(
            f"unknown coefficient variant {variant!r}; valid: "
            f"{VARIANT_DETERMINISTIC!r}, {VARIANT_GAUSSIAN!r}"
        )
    try:
        coefficients = CoefficientModel(
            variant=variant,
            reference_amplitude=float(coeff_raw.get("reference_amplitude", 1.0e4)),
        )
    except ValueError as exc:
        raise ConfigError(f"bad coefficients section: {exc}") from exc

    grid_raw = get("map_grid")
    try:
        grid = GridSpec(
            x_min=float(grid_raw["x_min"]),
            x_max=float(grid_raw["x_max"]),
            y_min=float(grid_raw["y_min"]),
            y_max=float(grid_raw["y_max"]),
            spacing=float(grid_raw.get("spacing", 0.25)),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad map_grid section: {exc}") from exc

    try:
        angle_grid = AngleGridSpec(spacing_deg=float(get("angle_grid_spacing_deg")))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    snr_grid = get("snr_grid_db")
    if not isinstance(snr_grid, (list, tuple)) or not snr_grid:
        raise ConfigError("snr_grid_db must be a non-empty list")

    methods = get("methods")
    if isinstance(methods, str):
        methods = [m.strip() for m in methods.split(",") if m.strip()]

    try:
        return ExperimentConfig(
            scene=scene,
            ofdm=_build_ofdm(get("ofdm")),
            coefficients=coefficients,
            grid=grid,
            angle_grid=angle_grid,
            snr_grid_db=tuple(float(s) for s in snr_grid),
            num_trials=int(get("num_trials")),
            master_seed=int(get("master_seed")),
            hit_radius=float(get("hit_radius")),
            methods=tuple(methods),
            noise_variance_mode=str(get("noise_variance_mode")),
            matching_mode=str(get("matching_mode")),
            music_combination_scale=str(get("music_combination_scale")),
            snr_db=float(get("snr_db")),
            dump_maps=bool(get("dump_maps")),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path, overrides: Sequence[str] = ()) -> ExperimentConfig:
    return build_config(load_raw(path, overrides))
