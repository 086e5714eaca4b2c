"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class DivergenceError(RuntimeError):
    """Raised when a model leaves the finite / bounded region.

    ``round`` is the global iteration index and ``client`` the offending
    client id (``None`` when the server model itself blew up).
    """

    def __init__(self, round, client=None, message=None):
        self.round = round
        self.client = client
        if message is None:
            who = "server" if client is None else f"client {client}"
            message = f"model diverged at round {round} ({who})"
        super().__init__(message)
