import pytest

from contagion_lab.properties import PROPERTIES


@pytest.mark.parametrize("name", sorted(PROPERTIES))
def test_property(name):
    PROPERTIES[name]()
