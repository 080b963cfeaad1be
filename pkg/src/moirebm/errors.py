"""Exception types shared across the package."""


class MoireError(Exception):
    """Base class for all package-specific errors."""


class ConventionError(MoireError):
    """A lattice-convention self-check failed."""


class BasisError(MoireError):
    """Invalid basis construction request or closure violation."""


class FiberError(MoireError):
    """A symmetry was requested at a fiber where it is not defined."""


class SolverError(MoireError):
    """An eigensolver or linear solver did not meet its contract."""


class KernelAmbiguousError(MoireError):
    """The zero-mode pair is not cleanly separated from the rest of the
    spectrum; the parameter point may sit on a degeneracy set."""

    def __init__(self, msg, third_eigenvalue=None):
        super().__init__(msg)
        self.third_eigenvalue = third_eigenvalue


class SectorSplitError(MoireError):
    """The two near-zero modes do not decompose into rotation sectors 0 and 1."""


class BandIsolationError(MoireError):
    """The two middle bands are not separated from bands +/-2 over the zone."""


class FlatBandError(MoireError):
    """The two middle bands are degenerate across the whole zone."""


class EnclosureError(MoireError):
    """A Wilson loop encloses, or passes too close to, an unintended touching."""


class QuantizationError(MoireError):
    """A winding index failed its half-integer quantization check."""

    def __init__(self, msg, index_raw=None, residual=None):
        super().__init__(msg)
        self.index_raw = index_raw
        self.residual = residual


class ContinuationError(MoireError):
    """Predictor-corrector continuation failed to converge."""

    def __init__(self, msg, partial=None):
        super().__init__(msg)
        self.partial = partial


class SchemaError(MoireError):
    """A CSV file does not match its documented schema."""
