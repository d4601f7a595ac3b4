"""
Error types raised across the toolkit
"""


class PumpwearError(Exception):
    """Base class for every error the toolkit raises on purpose"""


class WorkloadError(PumpwearError):
    pass


class TraceFormatError(WorkloadError):
    """A trace or mapping file line that could not be accepted"""

    def __init__(self, message, line_no=None, record=None):
        self.line_no = line_no
        self.record = record
        location = f'line {line_no}: ' if line_no is not None else ''
        detail = f' [{record}]' if record else ''
        super().__init__(f'{location}{message}{detail}')


class ConfigError(PumpwearError):
    """Hardware or NBTI configuration that breaks an invariant"""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__('; '.join(self.violations))


class CapacityError(PumpwearError):
    pass


class UndefinedIsiError(PumpwearError):
    pass


class ReplayError(PumpwearError):
    pass


class PipelineError(PumpwearError):
    """Wraps a failure with the pipeline stage it happened in"""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f'{stage}: {cause}')
