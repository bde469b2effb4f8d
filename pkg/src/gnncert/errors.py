"""Exception hierarchy shared by all gnncert modules."""


class GnncertError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(GnncertError):
    """Array shapes are inconsistent with each other or with the model."""


class NonBinaryAdjacency(GnncertError):
    """An adjacency matrix contains entries outside {0, 1} or a nonzero diagonal."""


class InvalidClass(GnncertError):
    """A class index is out of range or the true/attack labels coincide."""


class ModeMismatch(GnncertError):
    """An operation was invoked under a perturbation mode it does not support."""


class CapExceeded(GnncertError):
    """Exhaustive enumeration would exceed the caller-supplied cap."""


class InconsistentFixings(GnncertError):
    """Edge fixings violate budgets, symmetry, or remove-only monotonicity."""


class InconsistentInput(GnncertError):
    """Model, graph, and perturbation spec do not fit together."""


class UnboundedVariable(GnncertError):
    """A continuous MIP variable has no bound available."""


class InfiniteBound(GnncertError):
    """A variable bound is not finite."""


class MissingVariable(GnncertError):
    """An assignment does not cover every declared MIP variable."""


class NoBranchCandidate(GnncertError):
    """A branch was requested at a node with no unfixed, budget-relevant pair."""


class EmptyInput(GnncertError):
    """An aggregate was requested over an empty collection."""
