"""Error taxonomy shared by every subsystem.

Each error carries a stable ``code`` (the class name) and a default HTTP
status used by the API layer when the error crosses the service boundary.
"""

from __future__ import annotations


class ClusterError(Exception):
    """Base class for all domain errors."""

    http_status = 400

    @property
    def code(self) -> str:
        return type(self).__name__

    def __str__(self) -> str:  # pragma: no cover - trivial
        return super().__str__() or self.code


# --- node fleet ---------------------------------------------------------

class DuplicateName(ClusterError):
    http_status = 409


class DuplicateAddress(ClusterError):
    http_status = 409


class SecondMaster(ClusterError):
    http_status = 409


class MasterWithoutExternalAddr(ClusterError):
    pass


class ExternalAddrNotAllowed(ClusterError):
    """external_addr supplied for a non-master node."""


class UnknownNode(ClusterError):
    http_status = 404


class NodeInActiveBlock(ClusterError):
    http_status = 409


class MasterNotAllocatable(ClusterError):
    http_status = 409


class NodeAlreadyAllocated(ClusterError):
    http_status = 409


class EmptyBlock(ClusterError):
    pass


class InvalidPeriod(ClusterError):
    pass


class UnknownBlock(ClusterError):
    http_status = 404


class AlreadyReleased(ClusterError):
    http_status = 409


# --- ring protocol -------------------------------------------------------

class MalformedLine(ClusterError):
    pass


class MissingSecretword(ClusterError):
    pass


class EmptySecretword(ClusterError):
    pass


class NodePoweredOff(ClusterError):
    http_status = 409


class HostsMismatch(ClusterError):
    http_status = 409


class DaemonConflict(ClusterError):
    """A non-master node already hosts a daemon."""

    http_status = 409


class MasterOwnerConflict(ClusterError):
    """The owner already has a daemon on the master node."""

    http_status = 409


class AuthFailure(ClusterError):
    http_status = 403


class Unreachable(ClusterError):
    http_status = 502


class RingBroken(ClusterError):
    http_status = 502


class InterfaceBindingError(ClusterError):
    """Master daemon asked to bind an address that is not the master's
    internal interface."""


class UnknownRing(ClusterError):
    http_status = 404


# --- job execution -------------------------------------------------------

class CapacityExceeded(ClusterError):
    http_status = 409


class ValidationFailure(ClusterError):
    pass


class PlacementNodeNotInRing(ClusterError):
    pass


class JobStillRunning(ClusterError):
    http_status = 409


class UnknownJob(ClusterError):
    http_status = 404


# --- workflow ------------------------------------------------------------

class UnknownApplication(ClusterError):
    http_status = 404


class IllegalTransition(ClusterError):
    http_status = 409


class NotOwner(ClusterError):
    http_status = 403


class InvalidRequest(ClusterError):
    pass


# --- benchmark -----------------------------------------------------------

class TooFewRanks(ClusterError):
    pass


class IoFailure(ClusterError):
    http_status = 500


# --- service / persistence ----------------------------------------------

class CorruptSnapshot(ClusterError):
    http_status = 500


class AddressInUse(ClusterError):
    http_status = 500


class UnknownPrincipal(ClusterError):
    http_status = 401
