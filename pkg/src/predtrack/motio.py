"""MOTChallenge text files and YAML configuration.

MOTChallenge rows are ``frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z``
with ``-1`` marking absent ids (raw detections) and absent world coordinates.
"""

import io
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import yaml

from .geometry import Bounds
from .predictor import PredictorConfig
from .simulator import BOX_SIZE, SceneConfig
from .tracker import TrackerConfig

log = logging.getLogger(__name__)

CONFIG_ENV = "PREDTRACK_CONFIG"
N_FIELDS = 10


class ParseError(ValueError):
    def __init__(self, line, msg):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MotRecord:
    frame: int
    id: int
    bb_left: float
    bb_top: float
    bb_width: float
    bb_height: float
    conf: float = 1.0
    x: float = -1.0
    y: float = -1.0
    z: float = -1.0

    @property
    def centroid(self):
        return (self.bb_left + self.bb_width / 2.0, self.bb_top + self.bb_height / 2.0)

    @classmethod
    def from_centroid(cls, frame, id, cx, cy, width=BOX_SIZE[0], height=BOX_SIZE[1], conf=1.0):
        return cls(int(frame), int(id), cx - width / 2.0, cy - height / 2.0, width, height, conf)


def _int_field(tok, name, lineno):
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(lineno, f"{name} is not numeric: {tok!r}") from None
    if not v.is_integer():
        raise ParseError(lineno, f"{name} is not an integer: {tok!r}")
    return int(v)


def parse_mot(source):
    """Parse MOTChallenge text (a string or a text stream) into records, in file order."""
    if isinstance(source, str):
        source = io.StringIO(source)
    out = []
    for lineno, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        toks = [t.strip() for t in line.split(",")]
        if len(toks) != N_FIELDS:
            raise ParseError(lineno, f"expected {N_FIELDS} fields, got {len(toks)}")
        frame = _int_field(toks[0], "frame", lineno)
        tid = _int_field(toks[1], "id", lineno)
        vals = []
        for name, tok in zip(("bb_left", "bb_top", "bb_width", "bb_height", "conf", "x", "y", "z"), toks[2:]):
            try:
                v = float(tok)
            except ValueError:
                raise ParseError(lineno, f"{name} is not numeric: {tok!r}") from None
            if not math.isfinite(v):
                raise ParseError(lineno, f"{name} is not finite")
            vals.append(v)
        if frame < 1:
            raise ParseError(lineno, "frame must be >= 1")
        if vals[2] < 0 or vals[3] < 0:
            raise ParseError(lineno, "negative box size")
        out.append(MotRecord(frame, tid, *vals))
    return out


def _num(v):
    return format(v, ".6g")


def write_mot(records):
    """Records as MOTChallenge text sorted by (frame, id); reals to 6 significant digits."""
    lines = []
    for r in sorted(records, key=lambda r: (r.frame, r.id)):
        vals = [r.bb_left, r.bb_top, r.bb_width, r.bb_height, r.conf, r.x, r.y, r.z]
        lines.append(",".join([str(int(r.frame)), str(int(r.id))] + [_num(v) for v in vals]))
    return "".join(line + "\n" for line in lines)


def read_mot(path):
    with open(path) as fh:
        return parse_mot(fh)


def save_mot(path, records):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write(write_mot(records))


def detections_by_frame(records):
    """``[(frame, centroids (k, 2), boxes)]`` in frame order."""
    acc = {}
    for r in records:
        acc.setdefault(r.frame, []).append(r)
    out = []
    for f in sorted(acc):
        rs = acc[f]
        out.append((f, np.array([r.centroid for r in rs], dtype=float).reshape(-1, 2),
                    [(r.bb_width, r.bb_height) for r in rs]))
    return out


def scene_records(scene):
    """Ground-truth and detection records for a simulated scene."""
    gt = []
    for aid in sorted(scene.ground_truth):
        frames, pts = scene.ground_truth[aid]
        gt += [MotRecord.from_centroid(f, aid, *p) for f, p in zip(frames, pts)]
    det = []
    for f, pts in enumerate(scene.detections, start=1):
        det += [MotRecord.from_centroid(f, -1, *p) for p in pts]
    return gt, det


def track_records(tracks):
    """Tracker output (``{id: TrackOutput}``) as MOTChallenge records."""
    out = []
    for tid, t in sorted(tracks.items()):
        for f, p, box in zip(t.frames, t.positions, t.boxes):
            w, h = box if box is not None else BOX_SIZE
            out.append(MotRecord.from_centroid(f, tid, p[0], p[1], w, h))
    return out


# -- configuration ------------------------------------------------------------------

@dataclass
class Config:
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    eval_threshold: float = 1.0
    bounds: tuple = None  # tracker scene bounds; None infers them from the detections

    def __post_init__(self):
        self.tracker.predictor = self.predictor

    def dump(self):
        doc = {
            "tracker": {k: v for k, v in asdict(self.tracker).items() if k != "predictor"},
            "predictor": asdict(self.predictor),
            "scene": asdict(self.scene),
            "evaluation": {"threshold": self.eval_threshold},
            "bounds": list(self.bounds) if self.bounds else None,
        }
        doc["scene"]["bounds"] = list(doc["scene"]["bounds"])
        doc["scene"]["speed_range"] = list(doc["scene"]["speed_range"])
        doc["scene"]["occlusions"] = [list(o) for o in doc["scene"]["occlusions"]]
        return yaml.safe_dump(doc, sort_keys=True)


def _coerce(section, key, value, default):
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple) or (default is None and key == "bounds"):
        if value is None:
            return None
        if not isinstance(value, (list, tuple)) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{where}: expected a list of numbers, got {value!r}")
        return tuple(float(v) for v in value)
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return [tuple(v) if isinstance(v, list) else v for v in value]
    return value


def _apply(section, obj, values, strict):
    known = {f.name: f for f in fields(obj) if f.name != "predictor"}
    updates = {}
    for key, value in values.items():
        if key not in known:
            msg = f"unknown config key {section}.{key}"
            if strict:
                raise ConfigError(msg)
            log.warning(msg)
            continue
        updates[key] = _coerce(section, key, value, getattr(obj, key))
    return replace(obj, **updates) if updates else obj


def _parse_override(item):
    key, sep, raw = item.partition("=")
    if not sep or "." not in key:
        raise ConfigError(f"override must look like section.key=value, got {item!r}")
    section, _, name = key.strip().partition(".")
    return section, name, yaml.safe_load(raw)


def load_config(path=None, overrides=(), strict=True):
    """Resolve configuration: defaults < YAML file < ``section.key=value`` overrides.

    ``path`` falls back to the ``PREDTRACK_CONFIG`` environment variable.
    Unknown keys raise :class:`ConfigError` unless ``strict`` is false, in
    which case they are logged and ignored.
    """
    path = path or os.environ.get(CONFIG_ENV)
    doc = {}
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            doc = yaml.safe_load(fh) or {}
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    doc = {k: (dict(v) if isinstance(v, dict) else v) for k, v in doc.items()}
    for item in overrides:
        section, name, value = _parse_override(item)
        doc.setdefault(section, {})
        if not isinstance(doc[section], dict):
            raise ConfigError(f"{section} is not a section")
        doc[section][name] = value

    sections = {"tracker", "predictor", "scene", "evaluation", "bounds"}
    for key in doc:
        if key not in sections:
            if strict:
                raise ConfigError(f"unknown config section {key!r}")
            log.warning("unknown config section %r", key)
    for sec in ("tracker", "predictor", "scene", "evaluation"):
        if doc.get(sec) is not None and not isinstance(doc[sec], dict):
            raise ConfigError(f"{sec} must be a mapping")
    try:
        predictor = _apply("predictor", PredictorConfig(), doc.get("predictor") or {}, strict)
        predictor.__post_init__()
        tracker = _apply("tracker", TrackerConfig(), doc.get("tracker") or {}, strict)
        tracker.validate()
        scene = _apply("scene", SceneConfig(), doc.get("scene") or {}, strict)
        scene.validate()
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    ev = doc.get("evaluation") or {}
    for key in ev:
        if key != "threshold":
            if strict:
                raise ConfigError(f"unknown config key evaluation.{key}")
            log.warning("unknown config key evaluation.%s", key)
    threshold = _coerce("evaluation", "threshold", ev.get("threshold", 1.0), 1.0)
    if threshold <= 0:
        raise ConfigError("evaluation.threshold must be > 0")
    bounds = _coerce("", "bounds", doc.get("bounds"), None)
    if bounds is not None:
        if len(bounds) != 4:
            raise ConfigError("bounds must be [xmin, ymin, xmax, ymax]")
        try:
            Bounds(*bounds)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return Config(tracker, predictor, scene, threshold, bounds)


def resolve_bounds(config_bounds, points):
    """Config bounds when given, else the data extent with a 5% margin."""
    if config_bounds is not None:
        b = Bounds(*config_bounds)
        log.info("scene bounds from config: %s", b)
    else:
        b = Bounds.from_points(points, margin=0.05)
        log.info("scene bounds inferred from data: %s", b)
    return b
