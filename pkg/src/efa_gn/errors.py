class EFAError(Exception):
    pass


class DimensionMismatch(EFAError, ValueError):
    pass


class RankDeficient(EFAError):
    """Loadings lost column rank (a singular value or gamma fell below tolerance)."""


class IllConditioned(EFAError):
    """Inner solve for the noise update did not reach tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NotHermitian(EFAError, ValueError):
    pass
