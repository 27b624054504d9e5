"""
Date Utilities

Registry dates come with varying precision ("2019", "2019-03", "2019-03-15").
All dates are stored as calendar dates; partial dates are completed to the
first day of the missing period so that ordering is deterministic.
"""
import logging
from datetime import date
from typing import Optional

from dateutil.parser import isoparse

logger = logging.getLogger(__name__)


def parse_registry_date(value, field: str = 'date', context: str = '') -> Optional[date]:
    """Parse a registry date string into a calendar date.

    Args:
        value: Date string in ISO form with year, year-month or full precision
        field: Field name used in the warning message
        context: Record identifier used in the warning message

    Returns:
        date: Parsed date, or None when the value is absent or unparseable

    Example:
        >>> parse_registry_date('2019-03')
        datetime.date(2019, 3, 1)
    """
    if value is None or value == '':
        return None
    if isinstance(value, date):
        return value
    text = str(value).strip()
    try:
        # isoparse completes "YYYY" and "YYYY-MM" to the first day
        return isoparse(text).date()
    except (ValueError, OverflowError):
        logger.warning("%s: unparseable %s %r treated as missing", context or '?', field, text)
        return None


def format_date(value: Optional[date]) -> Optional[str]:
    """Format a date as YYYY-MM-DD, keeping None as None."""
    if value is None:
        return None
    return value.isoformat()
