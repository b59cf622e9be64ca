"""Named marginal-release oracles with a uniform ``(db, rng) -> MarginalVector`` interface."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import Database, MarginalVector, PrivacyParams, compute_marginals
from .errors import ParameterError
from .gauss_sv import GaussSVConfig, gauss_sv_release
from .mechanisms import gaussian_release, laplace_release, linf_release

MECHANISMS = ("exact", "constant", "laplace", "gaussian", "linf", "gauss-sv")
PURE = {"laplace", "linf"}
APPROX = {"gaussian", "gauss-sv"}


@dataclass(frozen=True)
class Mechanism:
    name: str
    privacy: Optional[PrivacyParams]
    release: Callable[[Database, np.random.Generator], MarginalVector] = field(repr=False)
    options: dict = field(default_factory=dict)

    def __call__(self, db: Database, rng: np.random.Generator) -> MarginalVector:
        return self.release(db, rng)


def make_mechanism(name: str, epsilon: Optional[float] = None, delta: Optional[float] = None,
                   **options) -> Mechanism:
    """Build a release oracle. Pure mechanisms reject delta; approximate ones require it."""
    if name not in MECHANISMS:
        raise ParameterError(f"unknown mechanism {name!r}; choose from {', '.join(MECHANISMS)}")
    if name in PURE and delta not in (None, 0):
        raise ParameterError(f"{name} is pure DP and does not take delta")
    if name in PURE | APPROX and epsilon is None:
        raise ParameterError(f"{name} requires epsilon")
    if name in APPROX and not delta:
        raise ParameterError(f"{name} requires delta > 0")

    if name == "exact":
        return Mechanism(name, None, lambda db, rng: compute_marginals(db))
    if name == "constant":
        value = float(options.get("value", 1.0))
        if not -1 <= value <= 1:
            raise ParameterError("constant value must lie in [-1, 1]")
        return Mechanism(name, PrivacyParams(0.0, 0.0), lambda db, rng: MarginalVector(np.full(db.d, value)),
                         {"value": value})
    privacy = PrivacyParams(float(epsilon), float(delta or 0.0))
    if name == "laplace":
        return Mechanism(name, privacy, lambda db, rng: laplace_release(db, privacy.epsilon, rng))
    if name == "linf":
        return Mechanism(name, privacy, lambda db, rng: linf_release(db, privacy.epsilon, rng))
    if name == "gaussian":
        calibration = options.get("calibration", "paper")
        return Mechanism(
            name, privacy,
            lambda db, rng: gaussian_release(db, privacy.epsilon, privacy.delta, rng, calibration),
            {"calibration": calibration},
        )
    overrides = {k: options[k] for k in ("sigma_override", "alpha_override", "sv_c_override", "sv_beta_override")
                 if options.get(k) is not None}

    def release(db, rng):
        cfg = GaussSVConfig.for_database(db, privacy.epsilon, privacy.delta, **overrides)
        return gauss_sv_release(db, cfg, rng)

    return Mechanism(name, privacy, release, overrides)


def parse_mechanism_spec(spec: str) -> Mechanism:
    """``name[:key=value,...]``, e.g. ``linf:epsilon=1`` or ``gaussian:epsilon=1,delta=1e-6``."""
    name, _, rest = spec.partition(":")
    kwargs = {}
    for item in filter(None, rest.split(",")):
        key, sep, value = item.partition("=")
        if not sep:
            raise ParameterError(f"bad mechanism option {item!r}; expected key=value")
        key = key.strip()
        if key == "calibration":
            kwargs[key] = value.strip()
        elif key == "sv_c_override":
            kwargs[key] = int(value)
        else:
            try:
                kwargs[key] = float(value)
            except ValueError:
                raise ParameterError(f"option {key} needs a number, got {value!r}") from None
    return make_mechanism(name.strip(), **kwargs)
