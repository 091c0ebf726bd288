# storage package
from packages.core.storage.fixtures import FixtureStore, record_fixture, write_text_atomic
from packages.core.storage.run_store import RunManifest, RunStore

__all__ = [
    "FixtureStore",
    "record_fixture",
    "write_text_atomic",
    "RunManifest",
    "RunStore",
]
