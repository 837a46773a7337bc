"""Exception hierarchy.

``ValidationError`` subclasses signal bad inputs (CLI exit code 2);
``NumericalError`` subclasses signal fits that cannot proceed (exit code 3).
"""


class MosaicError(Exception):
    """Base class for all package errors."""


class ValidationError(MosaicError, ValueError):
    pass


class NumericalError(MosaicError, ArithmeticError):
    pass


class InvalidInvariance(ValidationError):
    pass


class InvalidPanel(ValidationError):
    pass


class UnbalancedPanel(InvalidPanel):
    def __init__(self, missing: list[tuple[object, object]]):
        self.missing = list(missing)
        shown = ", ".join(f"({u!r}, {t!r})" for u, t in self.missing[:10])
        more = f" and {len(self.missing) - 10} more" if len(self.missing) > 10 else ""
        super().__init__(f"panel is unbalanced; missing (unit, time) cells: {shown}{more}")


class DuplicateCell(InvalidPanel):
    pass


class BadCluster(InvalidPanel):
    pass


class InvalidReplicates(ValidationError):
    pass


class InvalidAlpha(ValidationError):
    pass


class MissingCoordinates(ValidationError):
    pass


class DegenerateCluster(NumericalError):
    def __init__(self, cluster: int, n_obs: int, rank: int):
        self.cluster = cluster
        self.n_obs = n_obs
        self.rank = rank
        super().__init__(
            f"cluster {cluster} has {n_obs} observations but the augmented design has "
            f"rank {rank}, leaving no residual degrees of freedom; combine the smaller "
            "clusters into larger ones (CLI: --merge-clusters)"
        )


class NoLocalVariation(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class ZeroVariance(NumericalError):
    pass
