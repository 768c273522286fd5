"""Exception hierarchy shared by all modules."""


class GfmCertError(Exception):
    """Base class for every error raised by the package."""


class PoleOnGrid(GfmCertError):
    pass


class IllPosed(GfmCertError):
    pass


class NotSimplePole(GfmCertError):
    pass


class Level2Mismatch(GfmCertError):
    pass


class SingularInterior(GfmCertError):
    pass


class RhoZero(GfmCertError):
    pass


class DegenerateOperatingPoint(GfmCertError):
    pass


class ParseError(GfmCertError):
    pass


class ValidationError(GfmCertError):
    """Raised with the full list of violated invariants."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
