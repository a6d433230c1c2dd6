import math
import os
import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Optional

from loguru import logger

from netmeter.base_dataclass import BaseDataclassRecord
from netmeter.component import MonotonicClock, NetmeterComponent, SampleSink
from netmeter.consts import Side, Units
from netmeter.exceptions import (CounterNotFoundError, CounterResetError, InterfaceMismatchError, MalformedStatsError,
	StatsSourceUnreadableError, UnsupportedSide, ZeroIntervalError)
from netmeter.metrics import EpochBody, ErrorBody, MetricsConsts, RssiBody, ThroughputBody
from netmeter.utils import CheckUtils


class CollectorsConsts(Enum):
	LIVE_STATS_ROOT = '/proc'
	WIRELESS_STATS = 'net/wireless'
	DEVICE_STATS = 'net/dev'
	PROTOCOL_STATS = 'net/snmp'
	HEADER_MARK = '|'
	DEVICE_COLUMNS = 16
	NO_NOISE_DBM = -256.0
	DEFAULT_RSSI_RATE_HZ = 10.0
	DEFAULT_GENERIC_RATE_HZ = 1.0


RETRANSMITTED_PATTERN = re.compile(r'^\s*(\d+)\s+segments\s+retransmit+ed\b', re.MULTILINE)

# ProtocolCounters field -> (snmp table, column)
SNMP_COLUMNS = {
	'segments_retransmitted': ('Tcp', 'RetransSegs'),
	'tcp_in_segs': ('Tcp', 'InSegs'),
	'tcp_out_segs': ('Tcp', 'OutSegs'),
	'udp_in_datagrams': ('Udp', 'InDatagrams'),
	'udp_out_datagrams': ('Udp', 'OutDatagrams'),
}

# ProtocolCounters field -> (netstat section, line pattern)
NETSTAT_PATTERNS = {
	'segments_retransmitted': ('Tcp', RETRANSMITTED_PATTERN),
	'tcp_in_segs': ('Tcp', re.compile(r'^\s*(\d+)\s+segments\s+received\b', re.MULTILINE)),
	'tcp_out_segs': ('Tcp', re.compile(r'^\s*(\d+)\s+segments\s+sen[dt]\s+out\b', re.MULTILINE)),
	'udp_in_datagrams': ('Udp', re.compile(r'^\s*(\d+)\s+packets\s+received\b', re.MULTILINE)),
	'udp_out_datagrams': ('Udp', re.compile(r'^\s*(\d+)\s+packets\s+sent\b', re.MULTILINE)),
}

# host wide transport counters reported as per interval deltas next to the interface throughput
TRANSPORT_COUNTERS = ('tcp_in_segs', 'tcp_out_segs', 'udp_in_datagrams', 'udp_out_datagrams')


# counters whose reset breaks a throughput interval
THROUGHPUT_COUNTERS = ('rx_bytes', 'tx_bytes', 'rx_packets', 'tx_packets')


@dataclass(frozen=True)
class WirelessStatLine(BaseDataclassRecord):
	"""one interface row of the kernel wireless statistics

	:param iface: interface name
	:type  iface: str
	:param status: driver status word
	:type  status: str
	:param link_quality: link quality, driver units
	:type  link_quality: float
	:param level_dbm: signal level, dBm
	:type  level_dbm: float
	:param noise_dbm: noise level, dBm
	:type  noise_dbm: float

	"""
	iface: str
	status: str
	link_quality: float
	level_dbm: float
	noise_dbm: float
	discarded_nwid: int = 0
	discarded_crypt: int = 0
	discarded_frag: int = 0
	discarded_retry: int = 0
	discarded_misc: int = 0
	missed_beacon: int = 0


@dataclass(frozen=True)
class DeviceCounters(BaseDataclassRecord):
	"""per interface byte and packet counters

	:param iface: interface name
	:type  iface: str
	:param captured_at_ns: monotonic capture time
	:type  captured_at_ns: int

	"""
	iface: str
	rx_bytes: int
	rx_packets: int
	rx_errors: int
	rx_dropped: int
	tx_bytes: int
	tx_packets: int
	tx_errors: int
	tx_dropped: int
	captured_at_ns: int = 0

	def __post_init__(self):
		for name in ('rx_bytes', 'rx_packets', 'rx_errors', 'rx_dropped', 'tx_bytes', 'tx_packets', 'tx_errors', 'tx_dropped'):
			CheckUtils.check_is_not_negative(getattr(self, name), name=name)


@dataclass(frozen=True)
class ProtocolCounters(BaseDataclassRecord):
	"""host wide transport counters; the TCP segment and UDP datagram counters are None when the source lacks them

	:param segments_retransmitted: TCP segments retransmitted since boot
	:type  segments_retransmitted: int
	:param tcp_in_segs: TCP segments received
	:type  tcp_in_segs: int
	:param tcp_out_segs: TCP segments sent
	:type  tcp_out_segs: int
	:param udp_in_datagrams: UDP datagrams delivered
	:type  udp_in_datagrams: int
	:param udp_out_datagrams: UDP datagrams sent
	:type  udp_out_datagrams: int
	:param captured_at_ns: monotonic capture time
	:type  captured_at_ns: int

	"""
	segments_retransmitted: int
	tcp_in_segs: Optional[int] = None
	tcp_out_segs: Optional[int] = None
	udp_in_datagrams: Optional[int] = None
	udp_out_datagrams: Optional[int] = None
	captured_at_ns: int = 0

	def __post_init__(self):
		CheckUtils.check_is_not_negative(self.segments_retransmitted, name='segments_retransmitted')
		for name in TRANSPORT_COUNTERS:
			CheckUtils.check_is_not_negative(getattr(self, name), name=name, optional=True)



@dataclass(frozen=True)
class CollectorConfig(BaseDataclassRecord):
	"""collector settings

	:param iface: (Required) interface to sample
	:type  iface: str
	:param side: which end of the link this host is
	:type  side: str
	:param rssi_rate_hz: RSSI sampling rate
	:type  rssi_rate_hz: float
	:param generic_rate_hz: throughput and error counter sampling rate
	:type  generic_rate_hz: float
	:param stats_source_root: root the stats files are read from
	:type  stats_source_root: str

	"""
	iface: str
	side: str = Side.ROBOT.value
	rssi_rate_hz: float = CollectorsConsts.DEFAULT_RSSI_RATE_HZ.value
	generic_rate_hz: float = CollectorsConsts.DEFAULT_GENERIC_RATE_HZ.value
	stats_source_root: str = CollectorsConsts.LIVE_STATS_ROOT.value

	@logger.catch(reraise=True)
	def __post_init__(self):
		CheckUtils.check_is_not_empty(self.iface, name='iface')
		CheckUtils.check_is_valid_enum(self.side, Side, UnsupportedSide)
		CheckUtils.check_is_positive(self.rssi_rate_hz, name='rssi_rate_hz')
		CheckUtils.check_is_positive(self.generic_rate_hz, name='generic_rate_hz')
		CheckUtils.check_is_not_empty(self.stats_source_root, name='stats_source_root')


def _data_lines(text: str):
	for line_number, line in enumerate(text.splitlines(), start=1):
		if not line.strip() or CollectorsConsts.HEADER_MARK.value in line:
			continue

		iface, separator, rest = line.partition(':')
		iface = iface.strip()
		if not separator or not iface:
			raise MalformedStatsError(f'line {line_number} has no interface name', line_number=line_number, content=line)

		yield line_number, line, iface, rest.split()


def parse_wireless_stats(text: str) -> List[WirelessStatLine]:
	"""parses kernel wireless statistics; reals may carry a trailing '.'"""
	stat_lines = []
	for line_number, line, iface, tokens in _data_lines(text):
		if len(tokens) < 4:
			raise MalformedStatsError(f'line {line_number} has {len(tokens)} columns', line_number=line_number, content=line)

		try:
			link_quality, level_dbm, noise_dbm = (float(token.rstrip('.')) for token in tokens[1:4])
			discards = [int(token) for token in tokens[4:10]]
		except ValueError as error:
			raise MalformedStatsError(f'line {line_number}: {error}', line_number=line_number, content=line)

		if not math.isfinite(level_dbm):
			raise MalformedStatsError(f'line {line_number} has a non finite level', line_number=line_number, content=line)

		discard_names = ('discarded_nwid', 'discarded_crypt', 'discarded_frag', 'discarded_retry', 'discarded_misc', 'missed_beacon')
		stat_lines.append(WirelessStatLine(iface=iface,
			status=tokens[0],
			link_quality=link_quality,
			level_dbm=level_dbm,
			noise_dbm=noise_dbm,
			**dict(zip(discard_names, discards))))

	return stat_lines


def parse_device_stats(text: str, captured_at_ns: int = 0) -> List[DeviceCounters]:
	"""parses kernel per interface counters: 8 receive then 8 transmit columns"""
	counters = []
	for line_number, line, iface, tokens in _data_lines(text):
		if len(tokens) != CollectorsConsts.DEVICE_COLUMNS.value:
			raise MalformedStatsError(f'line {line_number} has {len(tokens)} counters, expected {CollectorsConsts.DEVICE_COLUMNS.value}',
				line_number=line_number,
				content=line)

		try:
			values = [int(token) for token in tokens]
			counters.append(DeviceCounters(iface=iface,
				rx_bytes=values[0],
				rx_packets=values[1],
				rx_errors=values[2],
				rx_dropped=values[3],
				tx_bytes=values[8],
				tx_packets=values[9],
				tx_errors=values[10],
				tx_dropped=values[11],
				captured_at_ns=captured_at_ns))
		except ValueError as error:
			raise MalformedStatsError(f'line {line_number}: {error}', line_number=line_number, content=line)

	return counters


def _parse_snmp_tables(text: str) -> Dict[str, Dict[str, int]]:
	"""pairs each 'Name: columns' header line with the 'Name: values' line after it"""
	tables: Dict[str, Dict[str, int]] = {}
	pending: Dict[str, List[str]] = {}
	for line in text.splitlines():
		prefix, _, rest = line.partition(':')
		tokens = rest.split()
		if ' ' in prefix or not tokens:
			continue

		header = pending.pop(prefix, None)
		if header is None:
			pending[prefix] = tokens
		elif len(header) == len(tokens):
			try:
				tables[prefix] = dict(zip(header, (int(token) for token in tokens)))
			except ValueError:
				pending[prefix] = tokens

	return tables


def _netstat_sections(text: str) -> Dict[str, str]:
	sections: Dict[str, List[str]] = {}
	current = None
	for line in text.splitlines():
		if line and not line[0].isspace() and line.rstrip().endswith(':'):
			current = sections.setdefault(line.rstrip()[:-1], [])
		elif current is not None:
			current.append(line)

	return {name: '\n'.join(lines) for name, lines in sections.items()}


def _search_netstat(text: str) -> Dict[str, int]:
	sections = _netstat_sections(text)
	found = {}
	for field, (section, pattern) in NETSTAT_PATTERNS.items():
		scope = sections.get(section) if sections else text
		match = pattern.search(scope) if scope is not None else None
		if match:
			found[field] = int(match.group(1))

	return found


def parse_protocol_stats(text: str, captured_at_ns: int = 0) -> ProtocolCounters:
	"""extracts TCP and UDP counters from protocol statistics tool output or the kernel snmp table

	:param text: output of a protocol statistics tool, or the content of net/snmp
	:type  text: str
	:param captured_at_ns: monotonic capture time
	:type  captured_at_ns: int
	:return: the counters; only the retransmitted segments counter is mandatory
	:rtype: ProtocolCounters

	"""
	found = _search_netstat(text)
	if 'segments_retransmitted' not in found:
		tables = _parse_snmp_tables(text)
		found = {field: tables[table][column] for field, (table, column) in SNMP_COLUMNS.items() if column in tables.get(table, {})}

	if 'segments_retransmitted' not in found:
		raise CounterNotFoundError('no retransmitted segments counter in protocol statistics')

	return ProtocolCounters(captured_at_ns=captured_at_ns, **found)


def transport_deltas(prev: ProtocolCounters, curr: ProtocolCounters) -> Dict[str, int]:
	"""per interval increase of each transport counter present in both captures; a counter that went backwards is left out"""
	deltas = {}
	for name in TRANSPORT_COUNTERS:
		previous, current = getattr(prev, name), getattr(curr, name)
		if previous is not None and current is not None and current >= previous:
			deltas[f'{name}_delta'] = current - previous

	return deltas



def throughput_from_counters(prev: DeviceCounters, curr: DeviceCounters) -> ThroughputBody:
	"""transmit and receive rates between two captures, decimal Mbps"""
	if prev.iface != curr.iface:
		raise InterfaceMismatchError(f'counters belong to different interfaces: {prev.iface} and {curr.iface}')

	interval_ns = curr.captured_at_ns - prev.captured_at_ns
	if interval_ns <= 0:
		raise ZeroIntervalError(f'capture interval must be > 0, got {interval_ns} ns')

	for name in THROUGHPUT_COUNTERS:
		if getattr(curr, name) < getattr(prev, name):
			raise CounterResetError(counter=name, previous=getattr(prev, name), current=getattr(curr, name))

	interval_s = interval_ns / Units.NS_PER_S.value
	to_mbps = Units.BITS_PER_BYTE.value / interval_s / Units.BITS_PER_MEGABIT.value

	return ThroughputBody.of(tx_mbps=(curr.tx_bytes - prev.tx_bytes) * to_mbps,
		rx_mbps=(curr.rx_bytes - prev.rx_bytes) * to_mbps,
		tx_packets_delta=curr.tx_packets - prev.tx_packets,
		rx_packets_delta=curr.rx_packets - prev.rx_packets)


class CounterTracker:

	def __init__(self):
		"""follows cumulative counters and opens a new epoch whenever one of them goes backwards"""
		self.epoch = 0
		self._last: Dict[str, int] = {}

	def update(self, values: Dict[str, int]) -> List[EpochBody]:
		resets = [(name, self._last[name], value) for name, value in values.items() if name in self._last and value < self._last[name]]
		self._last.update(values)
		if not resets:
			return []

		self.epoch += 1
		for name, previous, current in resets:
			logger.warning(f'counter {name} reset ({previous} -> {current}), starting epoch {self.epoch}')

		return [EpochBody(counter=name, epoch=self.epoch, previous=previous, current=current) for name, previous, current in resets]


class LinkCollector(NetmeterComponent):

	def __init__(self, config: CollectorConfig, clock: Optional[MonotonicClock] = None, session_start_ns: Optional[int] = None):
		"""samples RSSI, throughput and error counters of one interface

		Args:
			config (CollectorConfig): collector settings
			clock (MonotonicClock): time source
			session_start_ns (int): shared session anchor
		"""
		super().__init__(clock=clock, session_start_ns=session_start_ns)
		self.config = config
		self.tracker = CounterTracker()
		self._previous_counters: Optional[DeviceCounters] = None
		self._previous_protocol: Optional[ProtocolCounters] = None

	def _path(self, relative: str) -> str:
		return os.path.join(self.config.stats_source_root, relative)

	def _read(self, relative: str) -> str:
		with open(self._path(relative)) as stats_file:
			return stats_file.read()

	def check_sources(self) -> None:
		try:
			self._read(CollectorsConsts.DEVICE_STATS.value)
		except OSError as error:
			raise StatsSourceUnreadableError(f'cannot read device statistics under {self.config.stats_source_root}: {error}')

		for optional_source in (CollectorsConsts.WIRELESS_STATS.value, CollectorsConsts.PROTOCOL_STATS.value):
			if not os.access(self._path(optional_source), os.R_OK):
				logger.warning(f'{self._path(optional_source)} is not readable, its metrics will be missing')

	def run(self, sink: SampleSink, duration_s: Optional[float] = None) -> None:
		"""samples until stop() is called or duration_s elapsed, then flushes the sink"""
		self.check_sources()
		self._start_session()
		rssi_period_ns = int(round(Units.NS_PER_S.value / self.config.rssi_rate_hz))
		generic_period_ns = int(round(Units.NS_PER_S.value / self.config.generic_rate_hz))

		started_ns = self.clock.monotonic_ns()
		deadline_ns = None if duration_s is None else started_ns + int(round(duration_s * Units.NS_PER_S.value))
		next_rssi_ns = next_generic_ns = started_ns
		logger.info(f'collecting {self.config.side}/{self.config.iface} from {self.config.stats_source_root}')

		try:
			while not self.stopped:
				now_ns = self.clock.monotonic_ns()
				if deadline_ns is not None and now_ns >= deadline_ns:
					break

				if now_ns >= next_rssi_ns:
					self.sample_rssi(sink, now_ns)
					while next_rssi_ns <= now_ns:
						next_rssi_ns += rssi_period_ns

				if now_ns >= next_generic_ns:
					self.sample_counters(sink, now_ns)
					while next_generic_ns <= now_ns:
						next_generic_ns += generic_period_ns

				wake_ns = min(next_rssi_ns, next_generic_ns)
				if deadline_ns is not None:
					wake_ns = min(wake_ns, deadline_ns)
				if self._wait((wake_ns - self.clock.monotonic_ns()) / Units.NS_PER_S.value):
					break
		finally:
			sink.flush()
			logger.info(f'collector {self.config.side}/{self.config.iface} stopped')

	def sample_rssi(self, sink: SampleSink, now_ns: int) -> None:
		try:
			stat_lines = parse_wireless_stats(self._read(CollectorsConsts.WIRELESS_STATS.value))
		except (OSError, MalformedStatsError) as error:
			logger.warning(f'skipping RSSI sample: {error}')
			return

		stat_line = next((line for line in stat_lines if line.iface == self.config.iface), None)
		if stat_line is None:
			logger.trace(f'{self.config.iface} not in wireless statistics')
			return

		# a zero level is the driver saying it has no value
		if stat_line.level_dbm == 0 or not MetricsConsts.RSSI_MIN_DBM.value <= stat_line.level_dbm <= MetricsConsts.RSSI_MAX_DBM.value:
			logger.debug(f'{self.config.iface} reports no usable signal level ({stat_line.level_dbm})')
			return

		noise_dbm = None if stat_line.noise_dbm <= CollectorsConsts.NO_NOISE_DBM.value else stat_line.noise_dbm
		body = RssiBody(rssi_dbm=stat_line.level_dbm, link_quality=stat_line.link_quality, noise_dbm=noise_dbm)
		self._emit(sink, self.config.side, self.config.iface, body, now_ns)

	def sample_counters(self, sink: SampleSink, now_ns: int) -> None:
		try:
			device = next((counters for counters in parse_device_stats(self._read(CollectorsConsts.DEVICE_STATS.value), captured_at_ns=now_ns)
				if counters.iface == self.config.iface), None)
		except (OSError, MalformedStatsError) as error:
			logger.warning(f'skipping counter sample: {error}')
			return

		try:
			protocol = parse_protocol_stats(self._read(CollectorsConsts.PROTOCOL_STATS.value), captured_at_ns=now_ns)
		except (OSError, CounterNotFoundError) as error:
			logger.warning(f'no retransmit counter this tick: {error}')
			protocol = None

		values = {}
		if device is not None:
			values.update({name: getattr(device, name) for name in THROUGHPUT_COUNTERS + ('rx_dropped', 'tx_errors')})
		else:
			logger.warning(f'{self.config.iface} not in device statistics')
		if protocol is not None:
			values['retransmits'] = protocol.segments_retransmitted
			values.update({name: getattr(protocol, name) for name in TRANSPORT_COUNTERS if getattr(protocol, name) is not None})

		for marker in self.tracker.update(values):
			self._emit(sink, self.config.side, self.config.iface, marker, now_ns)

		if device is not None:
			self._emit_throughput(sink, device, protocol, now_ns)

		if device is not None and protocol is not None:
			body = ErrorBody(retransmits_cum=protocol.segments_retransmitted,
				rx_dropped_cum=device.rx_dropped,
				tx_errors_cum=device.tx_errors,
				epoch=self.tracker.epoch)
			self._emit(sink, self.config.side, self.config.iface, body, now_ns)

	def _emit_throughput(self, sink: SampleSink, device: DeviceCounters, protocol: Optional[ProtocolCounters], now_ns: int) -> None:
		previous, self._previous_counters = self._previous_counters, device
		previous_protocol, self._previous_protocol = self._previous_protocol, protocol
		if previous is None:
			return

		try:
			body = throughput_from_counters(previous, device)
		except (CounterResetError, ZeroIntervalError) as error:
			logger.warning(f're-baselining throughput: {error}')
			return

		if previous_protocol is not None and protocol is not None:
			body = replace(body, **transport_deltas(previous_protocol, protocol))

		self._emit(sink, self.config.side, self.config.iface, body, now_ns)


def run_collector(cfg: CollectorConfig, sink: SampleSink, duration_s: Optional[float] = None, clock: Optional[MonotonicClock] = None) -> LinkCollector:
	"""samples one interface into sink until duration_s elapsed (or forever); returns the stopped collector"""
	collector = LinkCollector(cfg, clock=clock)
	collector.run(sink, duration_s=duration_s)

	return collector
