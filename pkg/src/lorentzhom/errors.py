"""Exception hierarchy. Each class maps to a distinct CLI exit code."""


class LorentzHomError(Exception):
    exit_code = 1
    kind = "error"


class ConfigError(LorentzHomError):
    exit_code = 2
    kind = "config"


class GeometryError(LorentzHomError):
    exit_code = 3
    kind = "geometry"


class FieldError(LorentzHomError):
    exit_code = 4
    kind = "field"


class ConvergenceError(LorentzHomError):
    exit_code = 5
    kind = "convergence"


class StabilityError(LorentzHomError):
    exit_code = 6
    kind = "stability"


class FingerprintError(LorentzHomError):
    exit_code = 7
    kind = "fingerprint"


class ConsistencyError(LorentzHomError):
    """An internal identity between two independent formulas failed."""

    exit_code = 8
    kind = "consistency"


class MissingArtifactError(LorentzHomError):
    exit_code = 9
    kind = "missing"

    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__("missing artifacts: " + ", ".join(self.missing))


class UnsupportedError(LorentzHomError):
    exit_code = 10
    kind = "unsupported"
