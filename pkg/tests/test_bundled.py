import json
from importlib import resources

import pytest

from rnchain import bundled

DATA = resources.files("rnchain.data")


@pytest.mark.parametrize("name", sorted(bundled.contents()))
def test_bundled_file_matches_generator(name):
    assert DATA.joinpath(name).read_text() == bundled.dumps(bundled.contents()[name])


def test_run_descriptors_reference_existing_files():
    for name in bundled.contents():
        if name.startswith("run_"):
            desc = json.loads(DATA.joinpath(name).read_text())
            assert DATA.joinpath(desc["game"]).is_file() and DATA.joinpath(desc["prover"]).is_file()
            assert desc["scheme"] in {"identity", "xorpad"}
