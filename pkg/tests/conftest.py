import pytest

from netmeter.test_utils import FakeClock, ListSink


@pytest.fixture(name='fake_clock')
def fixture_fake_clock():
	return FakeClock()


@pytest.fixture(name='sink')
def fixture_sink():
	return ListSink()
