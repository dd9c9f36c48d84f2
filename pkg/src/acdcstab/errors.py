"""Exception hierarchy for network parsing, model assembly, and analysis."""


class AcdcStabError(Exception):
    """Base class for all toolkit errors."""


class NetworkError(AcdcStabError):
    """Invalid network description."""


class DuplicateId(NetworkError):
    pass


class EdgeKindViolation(NetworkError):
    pass


class DisconnectedUnionGraph(NetworkError):
    pass


class NonPositiveEdgeWeight(NetworkError):
    pass


class DeviceError(AcdcStabError):
    """Invalid device parameter block."""


class MissingDeviceBlock(DeviceError):
    pass


class NonPositiveParameter(DeviceError):
    def __init__(self, node_id, field, value, constraint="> 0"):
        self.node_id = node_id
        self.field = field
        self.value = value
        super().__init__(f"node {node_id!r}: parameter {field!r} must be {constraint}, got {value!r}")


class KindMismatch(DeviceError):
    pass


class SingularInterior(AcdcStabError):
    """Kron reduction: interior block of the Laplacian is singular."""


class DeviceOnInteriorNode(AcdcStabError):
    """Kron reduction: an eliminated node carries a device or load."""


class RequiresPositiveKg(AcdcStabError):
    """Droop characteristic undefined without a responsive power source."""


class SingularEquilibrium(AcdcStabError):
    """Steady-state system is singular (no stabilizing source or loss anywhere)."""


class PreconditionViolated(AcdcStabError):
    """Operation called outside its documented scope."""


class CertificateInvalid(AcdcStabError):
    """Energy-function certificate is not valid for this network (inconsistent dc droop gains)."""


class DimensionMismatch(AcdcStabError):
    pass


class NonFiniteState(AcdcStabError):
    """Simulated state diverged or became non-finite."""


class RatioMismatch(AcdcStabError):
    """Closed-form benchmark requires b2/b1 == m3/m2."""
