"""
Utils package for pa-bcnn
"""

from .safe_print import (
    safe_string,
    safe_print,
    safe_log,
    SafeLogger,
    setup_safe_logging,
    UNICODE_REPLACEMENTS
)
from .data_validators import DataSanitizer, ArrayValidator

__all__ = [
    'safe_string',
    'safe_print',
    'safe_log',
    'SafeLogger',
    'setup_safe_logging',
    'UNICODE_REPLACEMENTS',
    'DataSanitizer',
    'ArrayValidator'
]
