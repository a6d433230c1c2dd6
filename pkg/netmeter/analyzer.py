import csv
import io
import json
from bisect import bisect_right
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np
from dataclasses_json import config
from loguru import logger

from netmeter.base_dataclass import BaseDataclassRecord
from netmeter.consts import CUSTOM_CASE_ID, MotionMode, Side, Units
from netmeter.exceptions import EmptyAfterFilterError, NoMotionDataError, UnsupportedMotionMode
from netmeter.metrics import DelayBody, ErrorBody, MotionBody, RssiBody, ThroughputBody, TraceFile
from netmeter.utils import CheckUtils


class AnalyzerConsts(Enum):
	NOT_AVAILABLE = 'N/A'
	BEST_MARK = '*'
	COMMENT = '#'
	COLUMN_GAP = '  '
	BEST_COLUMN = 'best'


# column -> (table heading, best-of direction: 1 for max, -1 for min, None if not compared)
COLUMNS = (
	('throughput_mean_mbps', 'Thr M', 1),
	('throughput_std_mbps', 'Thr std', None),
	('delay_mean_ms', 'Delay M', -1),
	('delay_std_ms', 'Delay std', None),
	('loss_pct', '% loss', -1),
	('rssi_robot_mean_dbm', 'RSSI robot M', 1),
	('rssi_robot_std_db', 'RSSI robot std', None),
	('rssi_station_mean_dbm', 'RSSI station M', 1),
	('rssi_station_std_db', 'RSSI station std', None),
	('retransmits_cum', 'Retransmits', -1),
)

BEST_OF_COLUMNS = tuple(name for name, _, direction in COLUMNS if direction is not None)


def _decode_case_id(value):
	return value if value is None or value == CUSTOM_CASE_ID else int(value)


@dataclass(frozen=True)
class MotionFilter:
	"""selects the static or moving part of a trace

	:param mode: all, static_only or moving_only
	:type  mode: str
	:param static_intervals: (Optional) static intervals as (start_ns, end_ns) since session start;
		when absent, the trace's motion records classify the timeline
	:type  static_intervals: tuple

	"""
	mode: str = MotionMode.ALL.value
	static_intervals: Optional[Tuple[Tuple[int, int], ...]] = None

	def __post_init__(self):
		CheckUtils.check_is_valid_enum(self.mode, MotionMode, UnsupportedMotionMode)
		if self.static_intervals is not None:
			intervals = tuple(sorted((int(start), int(end)) for start, end in self.static_intervals))
			for start, end in intervals:
				if not 0 <= start < end:
					raise ValueError(f'static interval must satisfy 0 <= start < end, got ({start}, {end})')
			object.__setattr__(self, 'static_intervals', intervals)


@dataclass(frozen=True)
class SummaryRow(BaseDataclassRecord):
	"""per case statistics; std columns use the n-1 estimator, delay excludes timeout sentinels

	:param label: row label (trace path or case name)
	:type  label: str
	:param case_id: experiment case id
	:type  case_id: int or str
	:param band: band of the case
	:type  band: str
	:param baseline: router baseline row, excluded from best-of flags
	:type  baseline: bool
	:param retransmits_cum: retransmits over the session, summed across counter epochs
	:type  retransmits_cum: int
	:param sample_counts: samples per metric type after filtering
	:type  sample_counts: dict

	"""
	label: str
	case_id: Optional[Union[int, str]] = field(default=None, metadata=config(decoder=_decode_case_id))
	band: Optional[str] = None
	baseline: bool = False
	throughput_mean_mbps: Optional[float] = None
	throughput_std_mbps: Optional[float] = None
	delay_mean_ms: Optional[float] = None
	delay_std_ms: Optional[float] = None
	loss_pct: Optional[float] = None
	rssi_robot_mean_dbm: Optional[float] = None
	rssi_robot_std_db: Optional[float] = None
	rssi_station_mean_dbm: Optional[float] = None
	rssi_station_std_db: Optional[float] = None
	retransmits_cum: Optional[int] = None
	sample_counts: Dict[str, int] = field(default_factory=dict)

	def __post_init__(self):
		for name in ('throughput_std_mbps', 'delay_std_ms', 'rssi_robot_std_db', 'rssi_station_std_db'):
			CheckUtils.check_is_not_negative(getattr(self, name), name=name, optional=True)
		CheckUtils.check_in_range(self.loss_pct, 0.0, 100.0, name='loss_pct', optional=True)


@dataclass(frozen=True)
class ComparisonTable:
	"""summary rows in input order with the best-of columns flagged per row

	:param rows: summary rows
	:type  rows: tuple(SummaryRow)
	:param best: per row, the set of columns in which that row is best
	:type  best: tuple(frozenset)

	"""
	rows: Tuple[SummaryRow, ...]
	best: Tuple[FrozenSet[str], ...]

	def is_best(self, index: int, column: str) -> bool:
		return column in self.best[index]


def _mean_std(values: Sequence[float]) -> Tuple[Optional[float], Optional[float]]:
	if not values:
		return None, None

	data = np.asarray(values, dtype=float)
	std = float(np.std(data, ddof=1)) if data.size > 1 else 0.0

	return float(np.mean(data)), std


def _static_classifier(trace: TraceFile, motion_filter: MotionFilter) -> Callable[[int], bool]:
	if motion_filter.static_intervals is not None:
		intervals = motion_filter.static_intervals

		def in_intervals(ts_ns: int) -> bool:
			return any(start <= ts_ns < end for start, end in intervals)

		return in_intervals

	annotations = sorted(((sample.ts_ns, sample.body.is_static) for sample in trace.of_type(MotionBody)), key=lambda item: item[0])
	if not annotations:
		raise NoMotionDataError('trace has no motion records and no static intervals were given')

	times = [ts_ns for ts_ns, _ in annotations]
	states = [is_static for _, is_static in annotations]

	def latest_annotation(ts_ns: int) -> bool:
		# samples before the first annotation take the first annotation's state
		return states[max(bisect_right(times, ts_ns) - 1, 0)]

	return latest_annotation


def _retransmit_gains(trace: TraceFile) -> Dict[int, int]:
	"""retransmits gained at each errors sample since the previous one of the same side, keyed by id() of the sample

	Only a drop that opens a new epoch is a reset and re-baselines; any epoch change with a rising
	counter still counts the rise. A drop inside one epoch is a replay and gains nothing.
	"""
	gains = {}
	high_water: Dict[str, Tuple[int, int]] = {}
	for sample in sorted(trace.of_type(ErrorBody), key=lambda item: item.ts_ns):
		body = sample.body
		previous = high_water.get(sample.side)
		if previous is None:
			gains[id(sample)] = 0
			high_water[sample.side] = (body.epoch, body.retransmits_cum)
			continue

		epoch, value = previous
		if body.retransmits_cum >= value:
			gains[id(sample)] = body.retransmits_cum - value
			high_water[sample.side] = (body.epoch, body.retransmits_cum)
		elif body.epoch != epoch:
			gains[id(sample)] = 0
			high_water[sample.side] = (body.epoch, body.retransmits_cum)
		else:
			gains[id(sample)] = 0

	return gains



def summarize(trace: TraceFile,
	motion_filter: Optional[MotionFilter] = None,
	side: Optional[str] = None,
	label: Optional[str] = None) -> SummaryRow:
	"""computes the per case statistics of one trace

	:param trace: loaded trace
	:type  trace: TraceFile
	:param motion_filter: (Optional) static/moving selection, all samples by default
	:type  motion_filter: MotionFilter
	:param side: (Optional) restrict throughput, delay and error samples to one side
	:type  side: str
	:param label: (Optional) row label, defaults to the case id
	:type  label: str
	:raises EmptyAfterFilterError: no metric sample survives the filter

	"""
	motion_filter = motion_filter or MotionFilter()
	samples = [sample for sample in trace.records if isinstance(sample.body, (RssiBody, ThroughputBody, DelayBody, ErrorBody))]

	if motion_filter.mode != MotionMode.ALL.value:
		is_static = _static_classifier(trace, motion_filter)
		keep_static = motion_filter.mode == MotionMode.STATIC_ONLY.value
		samples = [sample for sample in samples if is_static(sample.ts_ns) == keep_static]

	if side is not None:
		samples = [sample for sample in samples if isinstance(sample.body, RssiBody) or sample.side == side]

	if not samples:
		raise EmptyAfterFilterError(f'no samples left in case {trace.header.case.case_id} after {motion_filter.mode} filter')

	throughput = [sample.body.total_mbps for sample in samples if isinstance(sample.body, ThroughputBody)]
	delays = [sample.body for sample in samples if isinstance(sample.body, DelayBody)]
	replies = [body.rtt_ms for body in delays if not body.timed_out]
	gains = _retransmit_gains(trace)
	retransmits = [gains[id(sample)] for sample in samples if isinstance(sample.body, ErrorBody)]
	rssi = {
		item.value: [sample.body.rssi_dbm for sample in samples if isinstance(sample.body, RssiBody) and sample.side == item.value]
		for item in Side
	}

	throughput_mean, throughput_std = _mean_std(throughput)
	delay_mean, delay_std = _mean_std(replies)
	robot_mean, robot_std = _mean_std(rssi[Side.ROBOT.value])
	station_mean, station_std = _mean_std(rssi[Side.STATION.value])
	loss_pct = 100.0 * (len(delays) - len(replies)) / len(delays) if delays else None

	sample_counts = {}
	for sample in samples:
		sample_counts[sample.metric_type] = sample_counts.get(sample.metric_type, 0) + 1

	case = trace.header.case

	return SummaryRow(label=label if label is not None else f'case-{case.case_id}',
		case_id=case.case_id,
		band=case.band,
		baseline=case.is_baseline,
		throughput_mean_mbps=throughput_mean,
		throughput_std_mbps=throughput_std,
		delay_mean_ms=delay_mean,
		delay_std_ms=delay_std,
		loss_pct=loss_pct,
		rssi_robot_mean_dbm=robot_mean,
		rssi_robot_std_db=robot_std,
		rssi_station_mean_dbm=station_mean,
		rssi_station_std_db=station_std,
		retransmits_cum=sum(retransmits) if retransmits else None,
		sample_counts=sample_counts)


def static_vs_moving(trace: TraceFile,
	static_intervals: Optional[Sequence[Tuple[int, int]]] = None,
	side: Optional[str] = None,
	label: Optional[str] = None) -> Tuple[SummaryRow, SummaryRow]:
	"""summaries of the static and the moving part of one trace

	:raises NoMotionDataError: no motion data, or no static samples at all
	:raises EmptyAfterFilterError: no moving samples

	"""
	label = label if label is not None else f'case-{trace.header.case.case_id}'
	intervals = tuple(static_intervals) if static_intervals is not None else None

	try:
		static_row = summarize(trace, MotionFilter(MotionMode.STATIC_ONLY.value, intervals), side=side, label=f'{label} static')
	except EmptyAfterFilterError:
		raise NoMotionDataError(f'{label} has no static samples')

	moving_row = summarize(trace, MotionFilter(MotionMode.MOVING_ONLY.value, intervals), side=side, label=f'{label} moving')

	return static_row, moving_row


def compare_cases(rows: Sequence[SummaryRow], group_by_band: bool = True) -> ComparisonTable:
	"""flags the best value of every compared column

	Baseline rows are left out of the best-of unless a group holds nothing else. Every row that ties
	the best value is flagged. With group_by_band, each band is compared on its own.
	"""
	rows = tuple(rows)
	if not rows:
		raise ValueError('compare_cases needs at least one row')

	groups: Dict[Optional[str], List[int]] = {}
	for index, row in enumerate(rows):
		groups.setdefault(row.band if group_by_band else None, []).append(index)

	best = [set() for _ in rows]
	for band, members in groups.items():
		candidates = [index for index in members if not rows[index].baseline] or members
		for name, _, direction in COLUMNS:
			if direction is None:
				continue

			values = {index: getattr(rows[index], name) for index in candidates if getattr(rows[index], name) is not None}
			if not values:
				continue

			best_value = max(values.values()) if direction > 0 else min(values.values())
			for index, value in values.items():
				if value == best_value:
					best[index].add(name)

		logger.debug(f'compared {len(members)} rows of band {band}')

	return ComparisonTable(rows=rows, best=tuple(frozenset(flags) for flags in best))


def _format_value(value) -> str:
	if value is None:
		return AnalyzerConsts.NOT_AVAILABLE.value
	if isinstance(value, bool) or isinstance(value, int):
		return str(value)

	return f'{value:.1f}'


def render_table(table: ComparisonTable) -> str:
	"""aligned plain text; best cells carry a trailing '*', absent values print as N/A"""
	headings = ['Case'] + [heading for _, heading, _ in COLUMNS]
	lines = []
	for index, row in enumerate(table.rows):
		cells = [row.label]
		for name, _, _ in COLUMNS:
			cell = _format_value(getattr(row, name))
			if table.is_best(index, name):
				cell += AnalyzerConsts.BEST_MARK.value
			cells.append(cell)
		lines.append(cells)

	widths = [max(len(cells[position]) for cells in [headings] + lines) for position in range(len(headings))]

	def render_line(cells: List[str]) -> str:
		first = cells[0].ljust(widths[0])
		rest = [cell.rjust(width) for cell, width in zip(cells[1:], widths[1:])]
		return AnalyzerConsts.COLUMN_GAP.value.join([first] + rest).rstrip()

	return '\n'.join(render_line(cells) for cells in [headings] + lines) + '\n'


def render_csv(table: ComparisonTable) -> str:
	names = [item.name for item in fields(SummaryRow) if item.name != 'sample_counts']
	output = io.StringIO()
	writer = csv.writer(output, lineterminator='\n')
	writer.writerow(names + [AnalyzerConsts.BEST_COLUMN.value])
	for index, row in enumerate(table.rows):
		values = ['' if getattr(row, name) is None else getattr(row, name) for name in names]
		writer.writerow(values + [' '.join(sorted(table.best[index]))])

	return output.getvalue()


def render_json(table: ComparisonTable) -> str:
	lines = []
	for index, row in enumerate(table.rows):
		record = row.load(skip_empty=False)
		record[AnalyzerConsts.BEST_COLUMN.value] = sorted(table.best[index])
		lines.append(json.dumps(record, separators=(',', ':'), ensure_ascii=False))

	return '\n'.join(lines) + '\n'


def load_static_intervals(path: str) -> Tuple[Tuple[int, int], ...]:
	"""reads a motion sidecar: one 'start_s end_s' static interval per line, relative to session start"""
	intervals = []
	with open(path) as sidecar:
		for line_number, line in enumerate(sidecar, start=1):
			line = line.split(AnalyzerConsts.COMMENT.value, 1)[0].strip()
			if not line:
				continue

			try:
				start_s, end_s = (float(token) for token in line.split())
			except ValueError:
				raise ValueError(f'{path}:{line_number}: expected "start_s end_s", got {line!r}')

			intervals.append((round(start_s * Units.NS_PER_S.value), round(end_s * Units.NS_PER_S.value)))

	return MotionFilter(static_intervals=intervals).static_intervals
