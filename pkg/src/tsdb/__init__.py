"""tsdb: a test-suite database for natural language processing systems."""

from tsdb.storage import (
    Database,
    TsdbError,
    check_consistency,
    load_database,
    sample_home,
    store_database,
)

__version__ = "0.1.0"

__all__ = [
    "Database",
    "TsdbError",
    "check_consistency",
    "load_database",
    "sample_home",
    "store_database",
]
