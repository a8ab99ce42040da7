"""Exception hierarchy shared by every module."""


class SepfeatError(Exception):
    """Base class for all errors raised by the package."""

    code = "error"

    def record(self):
        """Machine-readable description used by the command line."""
        return {"error": self.code, "message": str(self)}


class ZeroVarianceColumn(SepfeatError):
    code = "zero_variance_column"

    def __init__(self, column):
        super().__init__(f"column {column} has zero variance")
        self.column = column


class InvalidData(SepfeatError):
    code = "invalid_data"


class NotConverged(SepfeatError):
    """Solver hit its iteration cap; ``best`` holds the last iterate."""

    code = "not_converged"

    def __init__(self, max_iters, best=None):
        super().__init__(f"solver did not converge in {max_iters} sweeps")
        self.max_iters = max_iters
        self.best = best


class EmptyCluster(SepfeatError):
    code = "empty_cluster"

    def __init__(self, cluster):
        super().__init__(f"cluster {cluster} has no members")
        self.cluster = cluster


class BadCount(SepfeatError):
    code = "bad_count"


class BadK(SepfeatError):
    code = "bad_k"


class DegenerateNull(SepfeatError):
    code = "degenerate_null"


class SpecInvalid(SepfeatError):
    code = "spec_invalid"


class DegenerateMask(SepfeatError):
    code = "degenerate_mask"


class MissingLabels(SepfeatError):
    code = "missing_labels"


class ZeroDenominator(SepfeatError):
    """Mean uninformative score is zero; ``ratio`` carries the +inf sentinel."""

    code = "zero_denominator"

    def __init__(self, message="uninformative mean score is zero"):
        super().__init__(message)
        self.ratio = float("inf")


class EmptyResult(SepfeatError):
    code = "empty_result"


class ProposalFailed(SepfeatError):
    """Wraps an error raised while processing one ensemble member."""

    code = "proposal_failed"

    def __init__(self, index, cause):
        super().__init__(f"proposal {index} failed: {cause}")
        self.index = index
        self.cause = cause

    def record(self):
        rec = super().record()
        rec["proposal_index"] = self.index
        if isinstance(self.cause, SepfeatError):
            rec["cause"] = self.cause.record()
        return rec


class ConfigError(SepfeatError):
    code = "config_error"
