"""Scenario files: sectioned key-value documents describing one experiment.

The format is INI-style with every unit embedded in the key name, so a file
can never be misread by a factor of its time unit::

    [session]
    mean_seconds = 600

    [macro]
    family = gamma
    mean_seconds = 60
    variance_seconds2 = 60

    [femto]
    family = gamma
    mean_seconds = 60
    variance_seconds2 = 60000

    [threshold]
    mean_seconds = 60

    [simulation]            ; optional
    replications = 1000000
    seed = 12345
    counting_mode = paper
    batch_count = 100

    [optimizer]             ; optional
    delta_rate_per_second = 200
    ; or equivalently: min_threshold_mean_seconds = 0.005
    epsilon_rate_per_second = 2e-7
    tolerance = 1e-10
    grid_points = 64

Unknown sections or keys are rejected. The threshold rate upper bound may be
given either directly as a rate (``delta_rate_per_second``) or as the
smallest admissible mean threshold (``min_threshold_mean_seconds``, its
reciprocal); supplying both is an error. When the optimizer section is
missing, delta defaults to 1000 session-end rates (mean thresholds down to
one thousandth of the mean session length).
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from typing import Optional

from .analytics import ScenarioParams
from .errors import ParameterError, ScenarioError
from .residence import DistributionSpec, make_from_moments
from .simulate import COUNTING_MODES, SimConfig
from .optimize import OptimizerConfig

__all__ = ["Scenario", "load_scenario", "loads_scenario", "scenario_fragment",
           "DEFAULT_REPLICATIONS", "DEFAULT_SEED", "DEFAULT_BATCH_COUNT"]

DEFAULT_REPLICATIONS = 100_000
DEFAULT_SEED = 12345
DEFAULT_BATCH_COUNT = 100
DEFAULT_DELTA_IN_SESSION_RATES = 1000.0

_SCHEMA: dict[str, set[str]] = {
    "session": {"mean_seconds"},
    "macro": {"family", "mean_seconds", "variance_seconds2"},
    "femto": {"family", "mean_seconds", "variance_seconds2"},
    "threshold": {"mean_seconds"},
    "simulation": {"replications", "seed", "counting_mode", "batch_count", "workers"},
    "optimizer": {
        "delta_rate_per_second",
        "min_threshold_mean_seconds",
        "epsilon_rate_per_second",
        "tolerance",
        "grid_points",
    },
}
_REQUIRED_SECTIONS = ("session", "macro", "femto")


@dataclass(frozen=True)
class Scenario:
    """Parsed and validated scenario file contents."""

    session_mean: float
    macro: DistributionSpec
    femto: DistributionSpec
    threshold_mean: Optional[float]
    replications: int
    seed: int
    counting_mode: str
    batch_count: int
    workers: int
    optimizer_delta: Optional[float]
    optimizer_epsilon: Optional[float]
    optimizer_tolerance: Optional[float]
    optimizer_grid_points: Optional[int]

    @property
    def eta_s(self) -> float:
        return 1.0 / self.session_mean

    def params(self) -> ScenarioParams:
        """Full analytic parameter vector; requires the [threshold] section."""
        if self.threshold_mean is None:
            raise ScenarioError("threshold.mean_seconds: required for this command")
        return ScenarioParams(
            eta_s=self.eta_s,
            macro=self.macro,
            femto=self.femto,
            eta_o=1.0 / self.threshold_mean,
        )

    def params_at(self, eta_o: float) -> ScenarioParams:
        return ScenarioParams(eta_s=self.eta_s, macro=self.macro,
                              femto=self.femto, eta_o=eta_o)

    def sim_config(self, replications: Optional[int] = None,
                   seed: Optional[int] = None, mode: Optional[str] = None,
                   workers: Optional[int] = None) -> SimConfig:
        try:
            return SimConfig(
                replications=replications if replications is not None else self.replications,
                seed=seed if seed is not None else self.seed,
                counting_mode=mode if mode is not None else self.counting_mode,
                batch_count=self.batch_count,
                workers=workers if workers is not None else self.workers,
            )
        except ParameterError as exc:
            raise ScenarioError(f"simulation: {exc}") from exc

    def optimizer_config(self) -> OptimizerConfig:
        delta = self.optimizer_delta
        if delta is None:
            delta = DEFAULT_DELTA_IN_SESSION_RATES * self.eta_s
        kwargs = {}
        if self.optimizer_epsilon is not None:
            kwargs["epsilon_rate"] = self.optimizer_epsilon
        if self.optimizer_tolerance is not None:
            kwargs["tolerance"] = self.optimizer_tolerance
        if self.optimizer_grid_points is not None:
            kwargs["grid_points"] = self.optimizer_grid_points
        try:
            return OptimizerConfig(delta=delta, **kwargs)
        except ParameterError as exc:
            raise ScenarioError(f"optimizer: {exc}") from exc


class _SectionReader:
    def __init__(self, parser: configparser.ConfigParser, section: str):
        self.section = section
        self.present = parser.has_section(section)
        self._p = parser

    def _raw(self, key: str) -> Optional[str]:
        if not self.present or not self._p.has_option(self.section, key):
            return None
        return self._p.get(self.section, key)

    def require(self, key: str) -> str:
        v = self._raw(key)
        if v is None:
            raise ScenarioError(f"{self.section}.{key}: missing required key")
        return v

    def float_(self, key: str, required: bool = False,
               positive: bool = True) -> Optional[float]:
        raw = self.require(key) if required else self._raw(key)
        if raw is None:
            return None
        try:
            v = float(raw)
        except ValueError:
            raise ScenarioError(f"{self.section}.{key}: not a number: {raw!r}") from None
        if not math.isfinite(v) or (positive and v <= 0.0):
            raise ScenarioError(
                f"{self.section}.{key}: must be a positive finite number, got {raw}"
            )
        return v

    def int_(self, key: str, minimum: int = 1) -> Optional[int]:
        raw = self._raw(key)
        if raw is None:
            return None
        try:
            v = int(raw)
        except ValueError:
            raise ScenarioError(f"{self.section}.{key}: not an integer: {raw!r}") from None
        if v < minimum:
            raise ScenarioError(f"{self.section}.{key}: must be >= {minimum}, got {v}")
        return v

    def choice(self, key: str, choices: tuple[str, ...]) -> Optional[str]:
        raw = self._raw(key)
        if raw is None:
            return None
        v = raw.strip().lower()
        if v not in choices:
            raise ScenarioError(
                f"{self.section}.{key}: expected one of {choices}, got {raw!r}"
            )
        return v


def _distribution(reader: _SectionReader) -> DistributionSpec:
    family = reader.choice("family", ("gamma", "exponential")) or "gamma"
    mean = reader.float_("mean_seconds", required=True)
    if family == "exponential":
        # variance key permitted but ignored: the law fixes it to mean^2
        reader.float_("variance_seconds2")
        variance = None
    else:
        variance = reader.float_("variance_seconds2", required=True)
    try:
        return make_from_moments(family, mean, variance)
    except ParameterError as exc:
        raise ScenarioError(f"{reader.section}: {exc}") from exc


def loads_scenario(text: str, origin: str = "<string>") -> Scenario:
    """Parse scenario text; see :func:`load_scenario`."""
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=(";", "#")
    )
    try:
        parser.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ScenarioError(str(exc)) from exc

    if parser.defaults():
        key = next(iter(parser.defaults()))
        raise ScenarioError(f"DEFAULT.{key}: keys outside a known section are not allowed")
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ScenarioError(f"{section}: unknown section")
        for key in parser.options(section):
            if key not in _SCHEMA[section]:
                raise ScenarioError(f"{section}.{key}: unknown key")
    for section in _REQUIRED_SECTIONS:
        if not parser.has_section(section):
            raise ScenarioError(f"{section}: missing required section")

    session = _SectionReader(parser, "session")
    threshold = _SectionReader(parser, "threshold")
    simulation = _SectionReader(parser, "simulation")
    optimizer = _SectionReader(parser, "optimizer")

    delta = optimizer.float_("delta_rate_per_second")
    min_mean = optimizer.float_("min_threshold_mean_seconds")
    if delta is not None and min_mean is not None:
        raise ScenarioError(
            "optimizer: give either delta_rate_per_second or "
            "min_threshold_mean_seconds, not both"
        )
    if min_mean is not None:
        delta = 1.0 / min_mean

    seed = simulation.int_("seed", minimum=0)
    replications = simulation.int_("replications")
    batch_count = simulation.int_("batch_count", minimum=2)
    workers = simulation.int_("workers")

    return Scenario(
        session_mean=session.float_("mean_seconds", required=True),
        macro=_distribution(_SectionReader(parser, "macro")),
        femto=_distribution(_SectionReader(parser, "femto")),
        threshold_mean=threshold.float_("mean_seconds") if threshold.present else None,
        replications=replications if replications is not None else DEFAULT_REPLICATIONS,
        seed=seed if seed is not None else DEFAULT_SEED,
        counting_mode=simulation.choice("counting_mode", COUNTING_MODES) or "paper",
        batch_count=batch_count if batch_count is not None else DEFAULT_BATCH_COUNT,
        workers=workers if workers is not None else 1,
        optimizer_delta=delta,
        optimizer_epsilon=optimizer.float_("epsilon_rate_per_second"),
        optimizer_tolerance=optimizer.float_("tolerance"),
        optimizer_grid_points=optimizer.int_("grid_points", minimum=16),
    )


def load_scenario(path: str) -> Scenario:
    """Load and validate a scenario file.

    Raises :class:`ScenarioError` with a message naming the offending
    section/key (or the line, for syntax errors).
    """
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from exc
    return loads_scenario(text, origin=path)


def scenario_fragment(session_mean: float, macro_mean: float, macro_var: float,
                      femto_mean: float, femto_var: float) -> str:
    """Render estimated parameters as a pasteable scenario-file fragment."""
    return (
        "[session]\n"
        f"mean_seconds = {session_mean:.5f}\n"
        "\n"
        "[macro]\n"
        "family = gamma\n"
        f"mean_seconds = {macro_mean:.5f}\n"
        f"variance_seconds2 = {macro_var:.5f}\n"
        "\n"
        "[femto]\n"
        "family = gamma\n"
        f"mean_seconds = {femto_mean:.5f}\n"
        f"variance_seconds2 = {femto_var:.5f}\n"
    )
