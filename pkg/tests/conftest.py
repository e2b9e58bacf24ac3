import pytest

from support import StubBackendServer


@pytest.fixture
def stub_server():
    server = StubBackendServer()
    yield server
    server.close()
