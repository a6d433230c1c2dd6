import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Tuple, Type, Union

from dataclasses_json import config
from loguru import logger

from netmeter.base_dataclass import BaseDataclassRecord
from netmeter.consts import ApSide, Band, CUSTOM_CASE_ID, EXPERIMENT_CASES, MetricType, Origin, Side, Topology
from netmeter.exceptions import (InvalidExperimentCaseError, InvalidSampleError, MalformedRecordError, UnknownRecordTypeError,
	UnsupportedApSide, UnsupportedBand, UnsupportedOrigin, UnsupportedSide, UnsupportedTopology)
from netmeter.utils import CheckUtils, Utils


class MetricsConsts(Enum):
	TRACE_VERSION = 1
	TYPE = 'type'
	TS_NS = 'ts_ns'
	SIDE = 'side'
	IFACE = 'iface'
	RSSI_MIN_DBM = -120.0
	RSSI_MAX_DBM = 0.0
	TIMEOUT_SENTINEL_MS = -1.0
	HOST_SCOPE = 'host'
	MAX_U64 = 2 ** 64 - 1


@dataclass(frozen=True)
class RssiBody(BaseDataclassRecord):
	"""received signal strength reading

	:param rssi_dbm: (Required) received signal level, dBm
	:type  rssi_dbm: float
	:param link_quality: (Optional) driver link quality, driver units
	:type  link_quality: float
	:param noise_dbm: (Optional) noise level, dBm
	:type  noise_dbm: float

	"""
	rssi_dbm: float
	link_quality: Optional[float] = None
	noise_dbm: Optional[float] = None

	def __post_init__(self):
		object.__setattr__(self, 'rssi_dbm', float(self.rssi_dbm))
		CheckUtils.check_is_finite(self.rssi_dbm, name='rssi_dbm')
		CheckUtils.check_in_range(self.rssi_dbm, MetricsConsts.RSSI_MIN_DBM.value, MetricsConsts.RSSI_MAX_DBM.value, name='rssi_dbm')
		if self.link_quality is not None:
			object.__setattr__(self, 'link_quality', float(self.link_quality))
		if self.noise_dbm is not None:
			object.__setattr__(self, 'noise_dbm', float(self.noise_dbm))


@dataclass(frozen=True)
class ThroughputBody(BaseDataclassRecord):
	"""interface throughput over one sampling interval, decimal Mbps

	:param tx_mbps: transmitted rate
	:type  tx_mbps: float
	:param rx_mbps: received rate
	:type  rx_mbps: float
	:param total_mbps: tx_mbps + rx_mbps
	:type  total_mbps: float
	:param tx_packets_delta: packets transmitted in the interval
	:type  tx_packets_delta: int
	:param rx_packets_delta: packets received in the interval
	:type  rx_packets_delta: int
	:param tcp_in_segs_delta: host wide TCP segments received in the interval, None when not captured
	:type  tcp_in_segs_delta: int
	:param tcp_out_segs_delta: host wide TCP segments sent in the interval
	:type  tcp_out_segs_delta: int
	:param udp_in_datagrams_delta: host wide UDP datagrams delivered in the interval
	:type  udp_in_datagrams_delta: int
	:param udp_out_datagrams_delta: host wide UDP datagrams sent in the interval
	:type  udp_out_datagrams_delta: int

	"""
	tx_mbps: float
	rx_mbps: float
	total_mbps: float
	tx_packets_delta: int = 0
	rx_packets_delta: int = 0
	tcp_in_segs_delta: Optional[int] = None
	tcp_out_segs_delta: Optional[int] = None
	udp_in_datagrams_delta: Optional[int] = None
	udp_out_datagrams_delta: Optional[int] = None

	def __post_init__(self):
		for name in ('tx_mbps', 'rx_mbps', 'total_mbps'):
			object.__setattr__(self, name, float(getattr(self, name)))
			CheckUtils.check_is_finite(getattr(self, name), name=name)
			CheckUtils.check_is_not_negative(getattr(self, name), name=name)
		for name in ('tx_packets_delta', 'rx_packets_delta'):
			object.__setattr__(self, name, int(getattr(self, name)))
			CheckUtils.check_is_not_negative(getattr(self, name), name=name)
		for name in ('tcp_in_segs_delta', 'tcp_out_segs_delta', 'udp_in_datagrams_delta', 'udp_out_datagrams_delta'):
			if getattr(self, name) is not None:
				object.__setattr__(self, name, int(getattr(self, name)))
			CheckUtils.check_is_not_negative(getattr(self, name), name=name, optional=True)

		if not math.isclose(self.total_mbps, self.tx_mbps + self.rx_mbps, rel_tol=1e-12, abs_tol=1e-9):
			raise ValueError(f'total_mbps {self.total_mbps} != tx_mbps + rx_mbps {self.tx_mbps + self.rx_mbps}')

	@classmethod
	def of(cls, tx_mbps: float, rx_mbps: float, tx_packets_delta: int = 0, rx_packets_delta: int = 0) -> 'ThroughputBody':
		return cls(tx_mbps=tx_mbps,
			rx_mbps=rx_mbps,
			total_mbps=tx_mbps + rx_mbps,
			tx_packets_delta=tx_packets_delta,
			rx_packets_delta=rx_packets_delta)


@dataclass(frozen=True)
class DelayBody(BaseDataclassRecord):
	"""application level round trip delay; rtt_ms is -1 exactly when the probe timed out

	:param rtt_ms: round trip time, ms, or -1
	:type  rtt_ms: float
	:param timed_out: probe got no reply in time
	:type  timed_out: bool

	"""
	rtt_ms: float
	timed_out: bool = False

	def __post_init__(self):
		object.__setattr__(self, 'rtt_ms', float(self.rtt_ms))
		if not isinstance(self.timed_out, bool):
			raise ValueError(f'timed_out must be a boolean, got {self.timed_out!r}')

		if self.timed_out:
			if self.rtt_ms != MetricsConsts.TIMEOUT_SENTINEL_MS.value:
				raise ValueError(f'timed out delay must carry rtt_ms -1, got {self.rtt_ms}')
		else:
			CheckUtils.check_is_finite(self.rtt_ms, name='rtt_ms')
			CheckUtils.check_is_positive(self.rtt_ms, name='rtt_ms')

	@classmethod
	def timeout(cls) -> 'DelayBody':
		return cls(rtt_ms=MetricsConsts.TIMEOUT_SENTINEL_MS.value, timed_out=True)

	@classmethod
	def reply(cls, rtt_ms: float, timeout_ms: Optional[float] = None) -> 'DelayBody':
		if timeout_ms is not None and rtt_ms > timeout_ms:
			raise ValueError(f'rtt_ms {rtt_ms} exceeds timeout {timeout_ms}')

		return cls(rtt_ms=rtt_ms, timed_out=False)


@dataclass(frozen=True)
class ErrorBody(BaseDataclassRecord):
	"""cumulative error counters since the counter epoch started

	:param retransmits_cum: protocol segments retransmitted (host wide)
	:type  retransmits_cum: int
	:param rx_dropped_cum: interface received packets dropped
	:type  rx_dropped_cum: int
	:param tx_errors_cum: interface transmit errors
	:type  tx_errors_cum: int
	:param epoch: counter epoch, incremented on every detected reset
	:type  epoch: int
	:param retransmits_scope: scope of the retransmit counter
	:type  retransmits_scope: str

	"""
	retransmits_cum: int
	rx_dropped_cum: int = 0
	tx_errors_cum: int = 0
	epoch: int = 0
	retransmits_scope: str = MetricsConsts.HOST_SCOPE.value

	def __post_init__(self):
		for name in ('retransmits_cum', 'rx_dropped_cum', 'tx_errors_cum', 'epoch'):
			value = getattr(self, name)
			if isinstance(value, bool) or int(value) != value:
				raise ValueError(f'{name} must be an integer, got {value!r}')
			object.__setattr__(self, name, int(value))
			CheckUtils.check_is_not_negative(getattr(self, name), name=name)


@dataclass(frozen=True)
class EpochBody(BaseDataclassRecord):
	"""counter epoch marker, written when a cumulative counter went backwards

	:param counter: counter name
	:type  counter: str
	:param epoch: new epoch number
	:type  epoch: int
	:param previous: last raw value of the old epoch
	:type  previous: int
	:param current: first raw value of the new epoch
	:type  current: int

	"""
	counter: str
	epoch: int
	previous: int = 0
	current: int = 0

	def __post_init__(self):
		CheckUtils.check_is_not_empty(self.counter, name='counter')
		for name in ('epoch', 'previous', 'current'):
			object.__setattr__(self, name, int(getattr(self, name)))
			CheckUtils.check_is_not_negative(getattr(self, name), name=name)


@dataclass(frozen=True)
class MotionBody(BaseDataclassRecord):
	"""commanded velocity annotation

	:param linear_mps: commanded linear speed, m/s
	:type  linear_mps: float
	:param angular_rps: commanded angular speed, rad/s
	:type  angular_rps: float

	"""
	linear_mps: float
	angular_rps: float = 0.0

	def __post_init__(self):
		object.__setattr__(self, 'linear_mps', float(self.linear_mps))
		object.__setattr__(self, 'angular_rps', float(self.angular_rps))
		CheckUtils.check_is_finite(self.linear_mps, name='linear_mps')
		CheckUtils.check_is_finite(self.angular_rps, name='angular_rps')

	@property
	def is_static(self) -> bool:
		return self.linear_mps == 0 and self.angular_rps == 0


Body = Union[RssiBody, ThroughputBody, DelayBody, ErrorBody, EpochBody, MotionBody]

BODY_TYPES: Dict[str, Type[BaseDataclassRecord]] = {
	MetricType.RSSI.value: RssiBody,
	MetricType.THROUGHPUT.value: ThroughputBody,
	MetricType.DELAY.value: DelayBody,
	MetricType.ERRORS.value: ErrorBody,
	MetricType.EPOCH.value: EpochBody,
	MetricType.MOTION.value: MotionBody,
}

BODY_TAGS: Dict[Type[BaseDataclassRecord], str] = {body_class: tag for tag, body_class in BODY_TYPES.items()}


@dataclass(frozen=True)
class MetricSample:
	"""one timestamped observation

	:param ts_ns: monotonic nanoseconds since session start
	:type  ts_ns: int
	:param side: robot or station
	:type  side: str
	:param iface: interface identifier
	:type  iface: str
	:param body: one of the body records
	:type  body: Body

	"""
	ts_ns: int
	side: str
	iface: str
	body: Body

	def __post_init__(self):
		if isinstance(self.ts_ns, bool) or not isinstance(self.ts_ns, int):
			raise InvalidSampleError(f'ts_ns must be an integer, got {self.ts_ns!r}')
		if not 0 <= self.ts_ns <= MetricsConsts.MAX_U64.value:
			raise InvalidSampleError(f'ts_ns out of range: {self.ts_ns}')
		CheckUtils.check_is_valid_enum(self.side, Side, UnsupportedSide)
		if not isinstance(self.iface, str) or not self.iface:
			raise InvalidSampleError('iface must be a non empty string')
		if type(self.body) not in BODY_TAGS:
			raise InvalidSampleError(f'unsupported body {type(self.body).__name__}')

	@property
	def metric_type(self) -> str:
		return BODY_TAGS[type(self.body)]


def encode_record(sample: MetricSample) -> str:
	"""serializes a sample to one newline free trace line"""
	record = {
		MetricsConsts.TS_NS.value: sample.ts_ns,
		MetricsConsts.SIDE.value: sample.side,
		MetricsConsts.IFACE.value: sample.iface,
		MetricsConsts.TYPE.value: sample.metric_type,
	}
	record.update(sample.body.load())

	return json.dumps(record, separators=(',', ':'), allow_nan=False, ensure_ascii=False)


def decode_record(line: str) -> MetricSample:
	"""parses one trace line back into a sample

	:raises MalformedRecordError: the line is not a valid record (offset is a byte offset)
	:raises UnknownRecordTypeError: the record carries a type tag this version does not know

	"""
	line = line.rstrip('\r\n')
	if not line.strip():
		raise MalformedRecordError('empty record line', offset=0, content=line)

	try:
		record = json.loads(line)
	except json.JSONDecodeError as decode_error:
		raise MalformedRecordError(f'invalid record: {decode_error.msg}', offset=Utils.byte_offset(line, decode_error.pos), content=line)

	if not isinstance(record, dict):
		raise MalformedRecordError('record must be an object', offset=0, content=line)

	record_type = record.get(MetricsConsts.TYPE.value)
	if not isinstance(record_type, str):
		raise MalformedRecordError('record has no type tag', offset=0, content=line)

	body_class = BODY_TYPES.get(record_type)
	if body_class is None:
		raise UnknownRecordTypeError(record_type=record_type, raw_line=line)

	try:
		body = body_class.from_dict(record)
		return MetricSample(ts_ns=record[MetricsConsts.TS_NS.value],
			side=record[MetricsConsts.SIDE.value],
			iface=record[MetricsConsts.IFACE.value],
			body=body)
	except (KeyError, TypeError, ValueError, InvalidSampleError, UnsupportedSide) as error:
		raise MalformedRecordError(f'invalid {record_type} record: {error}', offset=0, content=line)


def _decode_case_id(value):
	return value if value == CUSTOM_CASE_ID else int(value)


@dataclass(frozen=True)
class ExperimentCase(BaseDataclassRecord):
	"""one experiment configuration: band, AP placement and interface pair

	:param case_id: 1-10 for the reference matrix, or 'custom'
	:type  case_id: int or str
	:param topology: router or direct
	:type  topology: str
	:param ap_side: router, robot or station
	:type  ap_side: str
	:param band: band_2g4 or band_5g8
	:type  band: str
	:param robot_iface: robot interface identifier
	:type  robot_iface: str
	:param station_iface: station interface identifier
	:type  station_iface: str

	"""
	case_id: Union[int, str] = field(metadata=config(decoder=_decode_case_id))
	topology: str
	ap_side: str
	band: str
	robot_iface: str
	station_iface: str

	@logger.catch(reraise=True)
	def __post_init__(self):
		CheckUtils.check_is_valid_enum(self.topology, Topology, UnsupportedTopology)
		CheckUtils.check_is_valid_enum(self.ap_side, ApSide, UnsupportedApSide)
		CheckUtils.check_is_valid_enum(self.band, Band, UnsupportedBand)
		CheckUtils.check_is_not_empty(self.robot_iface, name='robot_iface')
		CheckUtils.check_is_not_empty(self.station_iface, name='station_iface')

		if (self.topology == Topology.ROUTER.value) != (self.ap_side == ApSide.ROUTER.value):
			raise InvalidExperimentCaseError('router topology requires the router as access point and vice versa')

		if self.case_id == CUSTOM_CASE_ID:
			return

		if isinstance(self.case_id, bool) or not isinstance(self.case_id, int) or self.case_id not in EXPERIMENT_CASES:
			raise InvalidExperimentCaseError(f'case id must be 1-10 or {CUSTOM_CASE_ID!r}, got {self.case_id!r}')

		topology, ap_side, band, robot_iface, station_iface = EXPERIMENT_CASES[self.case_id]
		if self._row() != (topology.value, ap_side.value, band.value, robot_iface, station_iface):
			raise InvalidExperimentCaseError(f'case {self.case_id} does not match the experiment matrix row')

	def _row(self) -> Tuple[str, str, str, str, str]:
		return self.topology, self.ap_side, self.band, self.robot_iface, self.station_iface

	@property
	def is_baseline(self) -> bool:
		return self.topology == Topology.ROUTER.value

	@classmethod
	def from_table(cls, case_id: int) -> 'ExperimentCase':
		try:
			topology, ap_side, band, robot_iface, station_iface = EXPERIMENT_CASES[case_id]
		except KeyError:
			raise InvalidExperimentCaseError(f'case {case_id!r} is not in the experiment matrix')

		return cls(case_id=case_id,
			topology=topology.value,
			ap_side=ap_side.value,
			band=band.value,
			robot_iface=robot_iface,
			station_iface=station_iface)


@dataclass(frozen=True)
class TraceHeader(BaseDataclassRecord):
	"""first line of every trace file

	:param case: experiment case the trace belongs to
	:type  case: ExperimentCase
	:param start_utc: wall clock anchor of ts_ns 0, RFC3339
	:type  start_utc: str
	:param origin: measured or simulated
	:type  origin: str
	:param seed: random seed, mandatory for simulated traces
	:type  seed: int
	:param v: trace format version
	:type  v: int

	"""
	case: ExperimentCase
	start_utc: str
	origin: str
	seed: Optional[int] = None
	v: int = MetricsConsts.TRACE_VERSION.value

	@logger.catch(reraise=True)
	def __post_init__(self):
		CheckUtils.check_is_valid_enum(self.origin, Origin, UnsupportedOrigin)
		CheckUtils.check_is_not_empty(self.start_utc, name='start_utc')
		if self.origin == Origin.SIMULATED.value and self.seed is None:
			raise ValueError('simulated traces must carry a seed')
		if self.seed is not None:
			CheckUtils.check_in_range(self.seed, 0, MetricsConsts.MAX_U64.value, name='seed')


def encode_header(header: TraceHeader) -> str:
	return json.dumps(header.load(skip_empty=False), separators=(',', ':'), ensure_ascii=False)


def decode_header(line: str) -> TraceHeader:
	try:
		record = json.loads(line)
		if not isinstance(record, dict) or MetricsConsts.TYPE.value in record:
			raise ValueError('not a header object')
		return TraceHeader.from_dict(record)
	except (KeyError, TypeError, ValueError) as error:
		raise MalformedRecordError(f'invalid trace header: {error}', offset=0, content=line)


@dataclass(frozen=True)
class TraceFile:
	"""a loaded trace: header plus records in file order

	:param header: trace header
	:type  header: TraceHeader
	:param records: samples in file order
	:type  records: tuple(MetricSample)
	:param dropped_lines: corrupt or truncated lines skipped while reading
	:type  dropped_lines: int
	:param unknown_lines: records of unknown type skipped while reading
	:type  unknown_lines: int

	"""
	header: TraceHeader
	records: Tuple[MetricSample, ...] = ()
	dropped_lines: int = 0
	unknown_lines: int = 0

	def __post_init__(self):
		object.__setattr__(self, 'records', tuple(self.records))

	def of_type(self, body_class: Type[BaseDataclassRecord]):
		return [sample for sample in self.records if isinstance(sample.body, body_class)]

	def is_stream_ordered(self) -> bool:
		"""every (side, iface, type) stream has non decreasing ts_ns"""
		last_seen = {}
		for sample in self.records:
			key = (sample.side, sample.iface, sample.metric_type)
			if sample.ts_ns < last_seen.get(key, 0):
				return False
			last_seen[key] = sample.ts_ns

		return True
