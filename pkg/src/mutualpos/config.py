"""JSON configuration for simulations and surface fits.

Keys mirror the dataclass field names.  Unknown keys and badly typed values
are hard errors that name the offending line.
"""
from __future__ import annotations

import json
import re
from dataclasses import asdict, fields, replace

from .anomaly import RdadParams
from .attacks import AttackConfig, AttackMode, BiasVector, VarianceVector
from .error_model import FitSpec
from .estimators import RgdParams
from .sim import Estimator, SimConfig


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = source or "config"
        if line is not None:
            where = f"{where}:{line}"
        super().__init__(f"{where}: {message}")


class _Locator:
    """Maps keys back to line numbers in the raw JSON text."""

    def __init__(self, text: str, source: str | None):
        self.text = text
        self.source = source

    def find(self, key: str, start: int = 0) -> int:
        m = re.compile(r'"%s"\s*:' % re.escape(key)).search(self.text, start)
        return m.start() if m else start

    def line(self, pos: int) -> int:
        return self.text.count("\n", 0, pos) + 1

    def error(self, message: str, pos: int) -> ConfigError:
        return ConfigError(message, self.line(pos), self.source)


def _parse(text: str, source: str | None):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, exc.lineno, source) from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be a JSON object", 1, source)
    return data, _Locator(text, source)


def _check_keys(obj: dict, allowed, loc: _Locator, base: int, section: str):
    for key in obj:
        if key not in allowed:
            raise loc.error(f"unknown key {key!r} in {section} "
                            f"(allowed: {', '.join(sorted(allowed))})", loc.find(key, base))


def _number(value, key, loc, pos, integer=False):
    ok = isinstance(value, int) if integer else isinstance(value, (int, float))
    if isinstance(value, bool) or not ok:
        kind = "an integer" if integer else "a number"
        raise loc.error(f"{key!r} must be {kind}, got {json.dumps(value)}", pos)
    return int(value) if integer else float(value)


def _pair(value, key, loc, pos):
    if not (isinstance(value, list) and len(value) == 2):
        raise loc.error(f"{key!r} must be a two-element list", pos)
    return tuple(_number(v, key, loc, pos) for v in value)


def _params(cls, obj, loc, base, section, skip=()):
    names = {f.name for f in fields(cls)} - set(skip)
    if not isinstance(obj, dict):
        raise loc.error(f"{section!r} must be an object", base)
    _check_keys(obj, names, loc, base, section)
    kwargs = {}
    for f in fields(cls):
        if f.name in obj:
            pos = loc.find(f.name, base)
            kwargs[f.name] = _number(obj[f.name], f.name, loc, pos, integer=f.type == "int")
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise loc.error(f"{section}: {exc}", base) from None


ATTACK_KEYS = {"mode", "av", "num_compromised", "penetration", "coordinated"}


def _attack(obj, loc, base):
    if obj is None:
        return None
    if not isinstance(obj, dict):
        raise loc.error("'attack' must be an object or null", base)
    _check_keys(obj, ATTACK_KEYS, loc, base, "attack")
    if "mode" not in obj:
        raise loc.error("attack needs a 'mode'", base)
    try:
        mode = AttackMode(obj["mode"])
    except ValueError:
        raise loc.error(f"unknown attack mode {obj['mode']!r}", loc.find("mode", base)) from None
    kwargs = {"mode": mode}
    if "av" in obj:
        a, b = _pair(obj["av"], "av", loc, loc.find("av", base))
        kwargs["av"] = VarianceVector(a, b) if mode.is_noise else BiasVector(a, b)
    if "num_compromised" in obj:
        kwargs["num_compromised"] = _number(obj["num_compromised"], "num_compromised", loc,
                                            loc.find("num_compromised", base), integer=True)
    if "penetration" in obj:
        kwargs["penetration"] = _number(obj["penetration"], "penetration", loc,
                                        loc.find("penetration", base))
    if "coordinated" in obj:
        if not isinstance(obj["coordinated"], bool):
            raise loc.error("'coordinated' must be true or false", loc.find("coordinated", base))
        kwargs["coordinated"] = obj["coordinated"]
    try:
        return AttackConfig(**kwargs)
    except ValueError as exc:
        raise loc.error(f"attack: {exc}", base) from None


SIM_KEYS = {f.name for f in fields(SimConfig)}


def sim_config_from_dict(data: dict, loc: _Locator | None = None,
                         base: SimConfig | None = None) -> SimConfig:
    loc = loc or _Locator(json.dumps(data, indent=1), None)
    _check_keys(data, SIM_KEYS, loc, 0, "simulation config")
    kw = {}
    for key in ("map_size", "sigma_p_sq_range", "sigma_d_sq_range"):
        if key in data:
            kw[key] = _pair(data[key], key, loc, loc.find(key))
    for key in ("num_uavs", "trials", "seed"):
        if key in data:
            kw[key] = _number(data[key], key, loc, loc.find(key), integer=True)
    if "estimator" in data:
        try:
            kw["estimator"] = Estimator(data["estimator"])
        except ValueError:
            raise loc.error(f"unknown estimator {data['estimator']!r}",
                            loc.find("estimator")) from None
    if "attack" in data:
        kw["attack"] = _attack(data["attack"], loc, loc.find("attack"))
    if "rgd" in data:
        kw["rgd"] = _params(RgdParams, data["rgd"], loc, loc.find("rgd"), "rgd")
    if "rdad" in data:
        pos = loc.find("rdad")
        rdad = _params(RdadParams, data["rdad"], loc, pos, "rdad", skip=("rgd",))
        kw["rdad"] = rdad
    cfg = replace(base or SimConfig(), **kw)
    try:
        # RDAD shares the descent constants with RGD
        return replace(cfg, rdad=replace(cfg.rdad, rgd=cfg.rgd))
    except ValueError as exc:
        raise ConfigError(str(exc), None, loc.source) from None


def load_sim_config(text: str, source: str | None = None) -> SimConfig:
    data, loc = _parse(text, source)
    try:
        return sim_config_from_dict(data, loc)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), None, source) from None


def sim_config_to_dict(cfg: SimConfig) -> dict:
    rdad = asdict(cfg.rdad)
    rdad.pop("rgd")
    attack = None
    if cfg.attack is not None:
        a = cfg.attack
        av = [a.av.sigma_dp_sq, a.av.sigma_dd_sq] if a.mode.is_noise else [a.av.nu_x, a.av.nu_y]
        attack = {"mode": a.mode.value, "av": av, "num_compromised": a.num_compromised,
                  "penetration": a.penetration, "coordinated": a.coordinated}
    return {
        "map_size": list(cfg.map_size),
        "num_uavs": cfg.num_uavs,
        "sigma_p_sq_range": list(cfg.sigma_p_sq_range),
        "sigma_d_sq_range": list(cfg.sigma_d_sq_range),
        "trials": cfg.trials,
        "attack": attack,
        "estimator": cfg.estimator.value,
        "rgd": asdict(cfg.rgd),
        "rdad": rdad,
        "seed": cfg.seed,
    }


FIT_KEYS = {f.name for f in fields(FitSpec)}


def load_fit_spec(text: str, source: str | None = None) -> FitSpec:
    data, loc = _parse(text, source)
    _check_keys(data, FIT_KEYS, loc, 0, "fit config")
    kw = {}
    for key in ("d_grid", "s_grid"):
        if key in data:
            pos = loc.find(key)
            if not isinstance(data[key], list):
                raise loc.error(f"{key!r} must be a list of numbers", pos)
            kw[key] = tuple(_number(v, key, loc, pos) for v in data[key])
    for key in ("samples_per_cell", "seed"):
        if key in data:
            kw[key] = _number(data[key], key, loc, loc.find(key), integer=True)
    return FitSpec(**kw)
