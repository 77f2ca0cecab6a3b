"""Exception hierarchy.

Errors are split in two families because the command line maps them to
different exit codes: a :class:`PreconditionError` means the inputs do not
satisfy the hypotheses of the statement being checked (exit 2), a
:class:`NumericalError` means the computation itself could not be trusted
(exit 3).
"""


class LorentzCompareError(Exception):
    pass


class PreconditionError(LorentzCompareError):
    pass


class NumericalError(LorentzCompareError):
    pass


class ProfileDomainError(PreconditionError):
    pass


class DomainError(PreconditionError):
    pass


class ContractError(PreconditionError):
    pass


class AlignmentError(PreconditionError):
    pass


class HypothesisError(PreconditionError):
    pass


class ConstructionError(PreconditionError):
    pass


class StencilError(PreconditionError):
    pass


class ModelError(PreconditionError):
    pass


class DegeneracyError(PreconditionError):
    pass


class ResolutionError(NumericalError):
    pass


class SeedingError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass


class ConjugatePointError(NumericalError):
    pass


class FrameError(NumericalError):
    pass


class AlgebraError(NumericalError):
    pass
