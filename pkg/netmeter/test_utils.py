import json
import os
import threading
from typing import Dict, Iterable, List, Optional, Union

from netmeter.consts import Origin, Side
from netmeter.metrics import Body, ExperimentCase, MetricSample, TraceFile, TraceHeader

FIXTURES_ROOT = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'fixtures')

TEST_START_UTC = '2024-03-01T10:00:00.000000Z'


class FakeClock:

	def __init__(self, start_ns: int = 0):
		"""synthetic monotonic clock; waiting advances time instantly instead of sleeping"""
		self.now_ns = start_ns
		self.waits = 0

	def monotonic_ns(self) -> int:
		return self.now_ns

	def advance(self, seconds: float) -> None:
		self.now_ns += int(round(seconds * 1_000_000_000))

	def wait(self, stop_event: threading.Event, seconds: float) -> bool:
		self.waits += 1
		self.advance(max(seconds, 0.0))

		return stop_event.is_set()


class ListSink:

	def __init__(self):
		"""in memory sample sink, safe for concurrent producers"""
		self.samples: List[MetricSample] = []
		self.flushes = 0
		self._lock = threading.Lock()

	def put(self, sample: MetricSample) -> None:
		with self._lock:
			self.samples.append(sample)

	def flush(self) -> None:
		with self._lock:
			self.flushes += 1

	def of_type(self, metric_type: str, side: Optional[str] = None) -> List[MetricSample]:
		with self._lock:
			return [sample for sample in self.samples if sample.metric_type == metric_type and (side is None or sample.side == side)]


def sample(ts_s: float, body: Body, side: str = Side.ROBOT.value, iface: str = 'iface1') -> MetricSample:
	return MetricSample(ts_ns=int(round(ts_s * 1_000_000_000)), side=side, iface=iface, body=body)


def build_trace(records: Iterable[MetricSample], case_id: Union[int, str] = 3, origin: str = Origin.MEASURED.value) -> TraceFile:
	header = TraceHeader(case=ExperimentCase.from_table(case_id),
		start_utc=TEST_START_UTC,
		origin=origin,
		seed=1 if origin == Origin.SIMULATED.value else None)

	return TraceFile(header=header, records=tuple(records))


def fixture_path(*parts: str) -> str:
	return os.path.join(FIXTURES_ROOT, *parts)


def read_fixture(*parts: str) -> str:
	with open(fixture_path(*parts)) as fixture_file:
		return fixture_file.read()


def fixture_sidecar(*parts: str) -> Dict:
	"""expected values stored next to a fixture as <name>.json"""
	with open(fixture_path(*parts) + '.json') as sidecar:
		return json.load(sidecar)


def list_fixtures(directory: str) -> List[str]:
	"""fixture names in a directory that have an expected-value sidecar"""
	names = os.listdir(fixture_path(directory))

	return sorted(name for name in names if not name.endswith('.json') and f'{name}.json' in names)
