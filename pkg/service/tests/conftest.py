import json

import pytest

from service_support import make_fixture_data


@pytest.fixture
def fixture_path(tmp_path):
    path = tmp_path / "fixture.json"
    path.write_text(json.dumps(make_fixture_data()))
    return path
