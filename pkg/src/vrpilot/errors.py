"""Exception hierarchy shared across the package."""


class VRpilotError(Exception):
    """Base class for all errors raised by this package."""


class ManifestError(VRpilotError):
    """Manifest could not be parsed or a task entry violates an invariant."""


class ConfigurationError(VRpilotError):
    """Bad run configuration: unusable command, pattern, or backend setup."""


class PromptError(VRpilotError):
    """A prompt builder received input it cannot build from (e.g. empty text)."""


class ExtractionError(VRpilotError):
    """No code could be extracted from a model response."""


class GatewayError(VRpilotError):
    """Chat backend failed to produce a response."""


class ReplayMissError(GatewayError):
    """Replay backend has no recorded response for a request digest."""


class TranscriptParseError(VRpilotError):
    """A persisted transcript file is corrupt or structurally invalid."""


class WorkspaceError(VRpilotError):
    """Workspace staging or patch application failed."""
