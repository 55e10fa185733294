"""Exception hierarchy shared across the toolkit."""


class SkillGraphError(Exception):
    """Base class for all toolkit errors."""


class ParseError(SkillGraphError):
    """A file could not be parsed (bad syntax, wrong schema tag)."""


class SchemaError(SkillGraphError):
    """Parsed data violates the documented schema (dimensions, NaN, ...)."""


class EmptySkill(SkillGraphError):
    """A skill sequence has fewer than two frames."""


class ConfigError(SkillGraphError):
    """A configuration value is out of its documented range."""


class DimensionMismatch(SkillGraphError):
    """Two states or vectors that must agree in shape do not."""


class UnknownSkill(SkillGraphError):
    """A skill id was requested that the dataset/graph does not contain."""


class EmptyRestriction(SkillGraphError):
    """A nearest-node query was restricted to an empty node set."""


class Unreachable(SkillGraphError):
    """No path exists from the requested entry into the target set."""


class EStopRequired(SkillGraphError):
    """Entry selection found no candidate below the safety threshold."""

    def __init__(self, best_sim: float, threshold: float):
        super().__init__(f"best similarity {best_sim:.6g} >= B={threshold:.6g}")
        self.best_sim = best_sim
        self.threshold = threshold


class NoTransitions(SkillGraphError):
    """The graph holds no cross-skill segments to sample around."""


class AlignmentError(SkillGraphError):
    """Episode ticks could not be aligned with reference frames."""


class EmptyInput(SkillGraphError):
    """An aggregate metric was asked to summarize zero episodes."""


class UnknownSession(SkillGraphError):
    """A service call referenced a session id that does not exist."""


class ResourceLimit(SkillGraphError):
    """The service refused to allocate another session."""
