"""Threat prototypes: observation and exposure-score distributions per action.

A prototype file is line oriented::

    # comments start with '#'
    actions A B C D
    <theta> <action> <obs|exp> gaussian  mean=<m> std=<s>
    <theta> <action> <obs|exp> mixture   weights=w1,w2 means=m1,m2 stds=s1,s2
    <theta> <action> <obs|exp> lognormal mu=<m> sigma=<s>

Threat ids must be contiguous from 1 and every (theta, action) pair needs both
an ``obs`` and an ``exp`` line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.special import logsumexp, ndtr

from ._validation import ConfigurationError

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _normal_logpdf(x, mu, sigma):
    z = (x - mu) / sigma
    return -0.5 * z * z - math.log(sigma) - _LOG_SQRT_2PI


@dataclass(frozen=True)
class Gaussian:
    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("std must be > 0")

    def logpdf(self, x):
        return _normal_logpdf(x, self.mean, self.std)

    def cdf(self, x):
        return ndtr((np.asarray(x, dtype=float) - self.mean) / self.std)

    def tail(self, tau):
        return float(ndtr((self.mean - tau) / self.std))

    def expectation(self):
        return self.mean

    def sample(self, rng, size=None):
        return rng.normal(self.mean, self.std, size)


@dataclass(frozen=True)
class GaussianMixture:
    weights: tuple[float, ...]
    means: tuple[float, ...]
    stds: tuple[float, ...]

    def __post_init__(self):
        if not len(self.weights) == len(self.means) == len(self.stds) >= 1:
            raise ValueError("weights, means and stds must have the same nonzero length")
        if any(w <= 0 for w in self.weights):
            raise ValueError("mixture weights must be positive")
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must sum to 1 (got {sum(self.weights)!r})")
        if any(not s > 0 for s in self.stds):
            raise ValueError("every component std must be > 0")

    def logpdf(self, x):
        terms = [
            math.log(w) + _normal_logpdf(x, m, s)
            for w, m, s in zip(self.weights, self.means, self.stds)
        ]
        return float(logsumexp(terms))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return sum(w * ndtr((x - m) / s) for w, m, s in zip(self.weights, self.means, self.stds))

    def tail(self, tau):
        return float(
            sum(w * ndtr((m - tau) / s) for w, m, s in zip(self.weights, self.means, self.stds))
        )

    def expectation(self):
        return float(sum(w * m for w, m in zip(self.weights, self.means)))

    def sample(self, rng, size=None):
        if size is None:
            k = rng.choice(len(self.weights), p=self.weights)
            return rng.normal(self.means[k], self.stds[k])
        k = rng.choice(len(self.weights), p=self.weights, size=size)
        return rng.normal(np.asarray(self.means)[k], np.asarray(self.stds)[k])


@dataclass(frozen=True)
class LogNormal:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")

    def logpdf(self, x):
        if x <= 0:
            return -math.inf
        lx = math.log(x)
        return _normal_logpdf(lx, self.mu, self.sigma) - lx

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            z = (np.log(np.where(x > 0, x, 1.0)) - self.mu) / self.sigma
        return np.where(x > 0, ndtr(z), 0.0)

    def tail(self, tau):
        if tau <= 0:
            return 1.0
        return float(ndtr((self.mu - math.log(tau)) / self.sigma))

    def expectation(self):
        return math.exp(self.mu + 0.5 * self.sigma**2)

    def sample(self, rng, size=None):
        return rng.lognormal(self.mu, self.sigma, size)


ScalarDistribution = Gaussian | GaussianMixture | LogNormal


@dataclass(frozen=True)
class ThreatPrototype:
    """Observation ``p(o|a, theta)`` and exposure-score ``q(z|a, theta)`` per action."""

    theta: int
    observation: dict
    exposure: dict

    def __post_init__(self):
        if set(self.observation) != set(self.exposure):
            raise ValueError(f"threat {self.theta}: observation and exposure actions differ")

    @property
    def actions(self):
        return tuple(self.observation)

    def _check_action(self, a):
        if a not in self.observation:
            raise KeyError(f"unknown action {a!r} for threat {self.theta}")


def observation_logpdf(proto, a, o):
    """Natural-log density of ``o`` under ``p(o|a, theta)``."""
    proto._check_action(a)
    return proto.observation[a].logpdf(o)


def sample_observation(proto, a, rng):
    proto._check_action(a)
    return float(proto.observation[a].sample(rng))


def sample_exposure_score(proto, a, rng):
    proto._check_action(a)
    return float(proto.exposure[a].sample(rng))


def exposure_probability(proto, a, tau):
    """``P(z > tau)`` under the exposure-score distribution, in closed form."""
    proto._check_action(a)
    return proto.exposure[a].tail(tau)


def expected_observation(proto, a):
    proto._check_action(a)
    return proto.observation[a].expectation()


class PrototypeSet:
    """Ordered prototypes for threat types ``1..n`` sharing one action set."""

    def __init__(self, prototypes, actions=None, name=None):
        prototypes = sorted(prototypes, key=lambda p: p.theta)
        if not prototypes:
            raise ValueError("a prototype set needs at least one threat type")
        ids = [p.theta for p in prototypes]
        if ids != list(range(1, len(ids) + 1)):
            raise ValueError(f"threat ids must be contiguous from 1, got {ids}")
        if actions is None:
            actions = prototypes[0].actions
        actions = tuple(actions)
        for p in prototypes:
            if set(p.actions) != set(actions):
                raise ValueError(f"threat {p.theta} does not define exactly the actions {actions}")
        self.prototypes = tuple(prototypes)
        self.actions = actions
        self.name = name

    def __len__(self):
        return len(self.prototypes)

    def __getitem__(self, theta):
        return self.prototypes[theta - 1]

    def __iter__(self):
        return iter(self.prototypes)

    @property
    def n_types(self):
        return len(self.prototypes)

    @property
    def n_actions(self):
        return len(self.actions)

    def action_index(self, a):
        return self.actions.index(a)

    def expected_observation_table(self):
        """``(n_types, n_actions)`` table of ``E[o | a, theta]``."""
        return np.array(
            [[expected_observation(p, a) for a in self.actions] for p in self.prototypes]
        )

    def exposure_probability_table(self, tau):
        return np.array(
            [[exposure_probability(p, a, tau) for a in self.actions] for p in self.prototypes]
        )

    def log_likelihoods(self, a, o):
        """Log ``p(o | a, theta)`` for every threat type, as an array."""
        return np.array([observation_logpdf(p, a, o) for p in self.prototypes])

    def to_text(self):
        lines = ["actions " + " ".join(self.actions)]
        for p in self.prototypes:
            for a in self.actions:
                for channel, dist in (("obs", p.observation[a]), ("exp", p.exposure[a])):
                    lines.append(f"{p.theta} {a} {channel} {_format_dist(dist)}")
        return "\n".join(lines) + "\n"


def _format_dist(dist):
    def join(xs):
        return ",".join(repr(float(x)) for x in xs)

    if isinstance(dist, Gaussian):
        return f"gaussian mean={dist.mean!r} std={dist.std!r}"
    if isinstance(dist, LogNormal):
        return f"lognormal mu={dist.mu!r} sigma={dist.sigma!r}"
    return f"mixture weights={join(dist.weights)} means={join(dist.means)} stds={join(dist.stds)}"


_VARIANT_KEYS = {
    "gaussian": {"mean", "std"},
    "lognormal": {"mu", "sigma"},
    "mixture": {"weights", "means", "stds"},
}


def _parse_dist(variant, tokens, lineno):
    if variant not in _VARIANT_KEYS:
        raise ConfigurationError(
            f"unknown distribution {variant!r}; expected gaussian, mixture or lognormal",
            line=lineno,
        )
    kv = {}
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep:
            raise ConfigurationError(f"expected key=value, got {tok!r}", line=lineno)
        kv[key] = value
    if set(kv) != _VARIANT_KEYS[variant]:
        raise ConfigurationError(
            f"{variant} needs exactly {sorted(_VARIANT_KEYS[variant])}, got {sorted(kv)}",
            line=lineno,
        )
    try:
        if variant == "gaussian":
            return Gaussian(float(kv["mean"]), float(kv["std"]))
        if variant == "lognormal":
            return LogNormal(float(kv["mu"]), float(kv["sigma"]))
        return GaussianMixture(
            tuple(float(x) for x in kv["weights"].split(",")),
            tuple(float(x) for x in kv["means"].split(",")),
            tuple(float(x) for x in kv["stds"].split(",")),
        )
    except ValueError as exc:
        raise ConfigurationError(str(exc), line=lineno) from None


def parse_prototypes(text, name=None):
    actions = None
    actions_line = None
    table = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "actions":
            if actions is not None:
                raise ConfigurationError("duplicate 'actions' line", line=lineno)
            actions = tuple(parts[1:])
            actions_line = lineno
            if not actions or len(set(actions)) != len(actions):
                raise ConfigurationError("actions must be distinct and non-empty", line=lineno)
            continue
        if actions is None:
            raise ConfigurationError("'actions' line must come first", line=lineno)
        if len(parts) < 4:
            raise ConfigurationError(
                "expected '<theta> <action> <obs|exp> <variant> key=value...'", line=lineno
            )
        try:
            theta = int(parts[0])
        except ValueError:
            raise ConfigurationError(f"bad threat id {parts[0]!r}", line=lineno) from None
        if theta < 1:
            raise ConfigurationError("threat ids start at 1", line=lineno)
        a, channel = parts[1], parts[2]
        if a not in actions:
            raise ConfigurationError(f"action {a!r} not declared in actions", line=lineno)
        if channel not in ("obs", "exp"):
            raise ConfigurationError(f"channel must be obs or exp, got {channel!r}", line=lineno)
        if (theta, a, channel) in table:
            raise ConfigurationError(f"duplicate entry for {theta} {a} {channel}", line=lineno)
        table[(theta, a, channel)] = _parse_dist(parts[3], parts[4:], lineno)
    if actions is None:
        raise ConfigurationError("missing 'actions' line", line=1)
    thetas = sorted({k[0] for k in table})
    if thetas != list(range(1, len(thetas) + 1)) or not thetas:
        raise ConfigurationError(f"threat ids must be contiguous from 1, got {thetas}", line=actions_line)
    protos = []
    for theta in thetas:
        for a in actions:
            for channel in ("obs", "exp"):
                if (theta, a, channel) not in table:
                    raise ConfigurationError(
                        f"missing {channel} distribution for threat {theta} action {a}",
                        line=actions_line,
                    )
        protos.append(
            ThreatPrototype(
                theta,
                {a: table[(theta, a, "obs")] for a in actions},
                {a: table[(theta, a, "exp")] for a in actions},
            )
        )
    return PrototypeSet(protos, actions, name=name)


def load_prototypes(path):
    with open(path) as fh:
        return parse_prototypes(fh.read(), name=str(path))


BUNDLED = {"exp1": "exp1_prototypes.txt", "exp2": "exp2_prototypes.txt"}


def bundled_prototypes(name):
    """Load one of the shipped prototype files (``exp1`` or ``exp2``)."""
    if name not in BUNDLED:
        raise KeyError(f"no bundled prototype set {name!r}; expected one of {sorted(BUNDLED)}")
    text = resources.files("robust_isr.data").joinpath(BUNDLED[name]).read_text()
    return parse_prototypes(text, name=name)


def resolve_prototypes(ref):
    """A bundled name or a filesystem path."""
    if ref in BUNDLED:
        return bundled_prototypes(ref)
    return load_prototypes(ref)
