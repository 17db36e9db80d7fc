"""INI configuration files for a single simulation.

One section per module::

    [topology]
    family = grid
    rows = 3
    cols = 4

    [prototypes]
    file = exp1

    [reward]
    gamma = 0.98
    c_sense = 1.0, 1.0, 1.0, 0.1

    [sim]
    planner = adaptive
    horizon = 2000

Every key is optional (``topology.family`` is required once any topology
key is set); missing keys take the
defaults of :class:`~robust_isr.reward.RewardConfig` and
:class:`~robust_isr.sim.SimConfig`. Unknown sections and keys are rejected
with the line they appear on. Overrides are ``section.key=value`` strings
applied after the file is read.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import fields
from pathlib import Path

from ._validation import ConfigurationError
from .graph_env import TopologySpec
from .reward import RewardConfig
from .sim import SimConfig
from .threat_models import BUNDLED

_TOPOLOGY_TYPES = {
    "family": str,
    "rows": int,
    "cols": int,
    "n_nodes": int,
    "p": float,
    "m": int,
    "n_blocks": int,
    "p_intra": float,
    "p_inter": float,
    "n_leaves": int,
    "deletion_fraction": float,
    "require_connected": "bool",
    "seed": int,
}
_REWARD_TYPES = {f.name: (float if f.name != "obs_reward" else str) for f in fields(RewardConfig)}
_REWARD_TYPES["c_sense"] = "floats"
_SIM_TYPES = {
    "planner": str,
    "horizon": int,
    "replan_period": int,
    "rho_lock": float,
    "eps_prune": float,
    "seed": int,
    "episode": int,
    "start_node": "node",
    "tol": float,
    "max_iter": int,
    "warm_start": "bool",
}
SCHEMA = {
    "topology": _TOPOLOGY_TYPES,
    "prototypes": {"file": str},
    "reward": _REWARD_TYPES,
    "sim": _SIM_TYPES,
}

_BOOLEANS = {"1": True, "true": True, "yes": True, "on": True,
             "0": False, "false": False, "no": False, "off": False}


def _convert(kind, raw, key, line):
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind == "bool":
            return _BOOLEANS[raw.lower()]
        if kind == "floats":
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if kind == "node":
            return raw if raw == "auto" else int(raw)
    except (ValueError, KeyError):
        raise ConfigurationError(f"cannot parse {raw!r}", key=key, line=line) from None
    return raw


def _key_lines(text):
    """Map ``(section, key)`` to the 1-based line it was defined on."""
    lines = {}
    section = None
    for i, line in enumerate(text.splitlines(), start=1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            continue
        m = re.match(r"\s*([^#;=:\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            lines[(section, m.group(1).strip().lower())] = i
    return lines


def parse_config_text(text, source="<config>"):
    """Parse INI text into ``{section: {key: (raw, line)}}`` with schema checks."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigurationError("key outside of a [section]", line=exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno, _ = exc.errors[0]
        raise ConfigurationError("malformed line", line=lineno) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigurationError("duplicate key", key=f"{exc.section}.{exc.option}", line=exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigurationError("duplicate section", key=exc.section, line=exc.lineno) from None
    where = _key_lines(text)
    out = {}
    for section in parser.sections():
        if section not in SCHEMA:
            line = next((i for i, ln in enumerate(text.splitlines(), 1)
                         if ln.strip() == f"[{section}]"), None)
            raise ConfigurationError(
                f"unknown section; expected one of {', '.join(SCHEMA)}", key=section, line=line
            )
        out[section] = {}
        for key, raw in parser.items(section):
            line = where.get((section, key))
            if key not in SCHEMA[section]:
                raise ConfigurationError("unknown key", key=f"{section}.{key}", line=line)
            out[section][key] = (raw.strip(), line)
    return out


def apply_overrides(parsed, overrides):
    """Apply ``section.key=value`` strings on top of a parsed file."""
    for item in overrides or ():
        name, sep, value = item.partition("=")
        section, dot, key = name.strip().partition(".")
        if not sep or not dot:
            raise ConfigurationError(f"override {item!r} is not of the form section.key=value")
        key = key.lower()
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigurationError("unknown key in override", key=name.strip())
        parsed.setdefault(section, {})[key] = (value.strip(), None)
    return parsed


def _build(parsed, base=None):
    def values(section):
        items = parsed.get(section, {})
        return {k: (_convert(SCHEMA[section][k], raw, f"{section}.{k}", line), line)
                for k, (raw, line) in items.items()}

    def construct(factory, vals, section):
        try:
            return factory(**{k: v for k, (v, _) in vals.items()})
        except ConfigurationError as exc:
            key = exc.key.split(".")[-1] if exc.key else None
            line = vals.get(key, (None, None))[1]
            msg = str(exc).split(": ", 1)[-1] if exc.key else str(exc)
            name = f"{section}.{key}" if key else section
            raise ConfigurationError(msg, key=name, line=line) from None

    topo = values("topology")
    if not topo:
        topo_spec = SimConfig().topology
    elif "family" not in topo:
        first = min((ln for _, ln in topo.values() if ln is not None), default=None)
        raise ConfigurationError("required when [topology] sets any key", key="topology.family", line=first)
    else:
        topo_spec = construct(TopologySpec, topo, "topology")
    reward = construct(RewardConfig, values("reward"), "reward")
    sim = values("sim")
    protos = parsed.get("prototypes", {}).get("file", ("exp1", None))[0]
    if base is not None and protos not in BUNDLED and not Path(protos).is_absolute():
        protos = str(Path(base) / protos)
    sim_kw = dict(sim)
    sim_kw["topology"] = (topo_spec, None)
    sim_kw["reward"] = (reward, None)
    sim_kw["prototypes"] = (protos, None)
    return construct(SimConfig, sim_kw, "sim")


def load_config(path=None, overrides=(), text=None):
    """Read a config file (or ``text``), apply overrides, return a SimConfig.

    A relative prototype path is taken relative to the config file.
    """
    base = None
    if text is None:
        if path is None:
            parsed = {}
        else:
            with open(path) as fh:
                parsed = parse_config_text(fh.read(), source=str(path))
            base = Path(path).parent
    else:
        parsed = parse_config_text(text)
    return _build(apply_overrides(parsed, overrides), base)


def config_to_text(cfg):
    """Serialize a SimConfig in the INI layout read by :func:`load_config`."""
    lines = ["[topology]"]
    lines += [f"{k} = {str(v).lower() if isinstance(v, bool) else v}"
              for k, v in cfg.topology.params().items()]
    lines += ["", "[prototypes]", f"file = {cfg.prototypes}", "", "[reward]"]
    for k, v in cfg.reward.as_dict().items():
        v = ", ".join(repr(x) for x in v) if isinstance(v, tuple) else v
        lines.append(f"{k} = {v}")
    lines += ["", "[sim]"]
    for k in _SIM_TYPES:
        v = getattr(cfg, k)
        lines.append(f"{k} = {str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(lines) + "\n"
