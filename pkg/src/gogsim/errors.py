"""Exception hierarchy. CLI exit codes key off these classes."""


class GogError(Exception):
    """Base class for all simulator errors."""


class ValidationError(GogError, ValueError):
    """Scenario, topology or parameter rejected before numeric work."""


class NetworkError(GogError):
    """Algebraic network solve failed."""


class DisconnectedIslandError(NetworkError, ValidationError):
    pass


class NoFormingDeviceError(NetworkError):
    """An energized island has nothing that forms its voltage."""


class ConvergenceError(NetworkError):
    pass


class DeadBusError(GogError):
    """PLL terminal voltage collapsed (loss of synchronization)."""


class SettleTimeout(GogError):
    pass


class NotAtEquilibrium(GogError, ValueError):
    pass


class InfeasibleDispatch(GogError):
    pass
