"""Exception types shared across the package."""


class SggmError(Exception):
    """Base class for all package-specific errors."""


class NotDecomposable(SggmError):
    """The undirected graph is not decomposable (chordal)."""


class OverlappingSets(SggmError):
    """Node sets passed to a separation query are not pairwise disjoint."""


class EdgeAbsent(SggmError):
    """An operation referenced an edge that is not in the graph."""


class CliqueNotStratified(SggmError):
    """Discretization was requested for a clique without stratified edges."""


class NotDecomposableSG(SggmError):
    """The stratified graph violates the decomposable-SG conditions."""


class NotRegular(SggmError):
    """No decomposable maximal regular counterpart exists for the SG."""


class DimensionMismatch(SggmError):
    """Operands are defined over different node sets or dimensions."""


class NotPositiveDefinite(SggmError):
    """A covariance matrix failed the positive-definiteness check."""


class NoConvergence(SggmError):
    """An iterative procedure hit its iteration cap before converging."""


class ToleranceUnreachable(SggmError):
    """A numerical integral could not be certified to the requested tolerance."""


class DegenerateData(SggmError):
    """The data matrix does not admit a usable starting covariance."""


class RegenerationExhausted(SggmError):
    """Proposal regeneration hit its retry cap without a valid candidate."""


class EmptyLedger(SggmError):
    """A posterior estimate was requested from an empty visited-model ledger."""


class SamplerStalled(SggmError):
    """Both rejection sampling and the Gibbs fallback failed to produce draws."""
