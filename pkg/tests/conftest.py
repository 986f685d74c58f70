"""Session-wide fixtures: one scheme instance shared by all crypto tests."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cpsx import abe


@pytest.fixture(scope="session")
def scheme():
    """One (PublicParams, MasterKey) pair for the whole session."""
    return abe.setup(128)
