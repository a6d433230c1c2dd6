import json
import math
import os
from bisect import bisect_right
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from netmeter.analyzer import ComparisonTable, SummaryRow, compare_cases, render_table, summarize
from netmeter.base_dataclass import BaseDataclassRecord
from netmeter.channel import (ChannelParams, LinkParams, MultipathParams, PathLossParams, ShadowingParams, ShadowingProcess, model_delay,
	model_throughput, sample_rssi)
from netmeter.consts import Band, CUSTOM_CASE_ID, EXPERIMENT_CASES, Origin, Side, Topology, Units
from netmeter.exceptions import DisconnectedLinkError, InvalidExperimentCaseError, InvalidTrajectoryError, UnknownCaseError
from netmeter.metrics import (DelayBody, ErrorBody, ExperimentCase, MetricSample, MetricsConsts, MotionBody, RssiBody, ThroughputBody, TraceFile,
	TraceHeader)
from netmeter.probe import ProbeConsts
from netmeter.recorder import write_trace
from netmeter.utils import CheckUtils


class SimulatorConsts(Enum):
	RSSI_RATE_HZ = 10.0
	GENERIC_RATE_HZ = 1.0
	DEFAULT_DURATION_S = 300.0
	# fixed anchor, simulated bytes depend only on the inputs
	SIMULATION_START_UTC = '2000-01-01T00:00:00Z'
	STATION_DIRECTIVE = 'station'
	COMMENT = '#'
	TRACE_SUFFIX = '.trace'
	COMPARISON_FILE = 'comparison.txt'
	SEED_MASK = 2 ** 64 - 1


# declared assumptions, tunable per case through custom preset files
PRESET_CATALOG = {
	'b_mhz': {Band.BAND_2G4.value: 20.0, Band.BAND_5G8.value: 80.0},
	'eta': {Topology.ROUTER.value: 2.5, Topology.DIRECT.value: 3.0},
	'rss_d0_dbm': {Topology.ROUTER.value: -35.0, Topology.DIRECT.value: -40.0},
	'external_iface_gain_db': 2.0,
	'external_ifaces': ('iface2', 'iface4'),
	'sigma_db': 3.0,
	'mobility_extra_sigma_db': 3.0,
	'pn_dbm': -90.0,
	'alpha_t': 0.65,
	'l_bits': 12000.0,
	'base_rtt_ms': 5.0,
	'disconnect_rssi_dbm': -85.0,
	'tx_fraction': 0.9,
}


@dataclass(frozen=True)
class Waypoint(BaseDataclassRecord):
	t_s: float
	x_m: float
	y_m: float


@dataclass(frozen=True)
class Trajectory(BaseDataclassRecord):
	"""robot waypoints against a fixed station

	:param waypoints: waypoints with strictly increasing t_s
	:type  waypoints: tuple(Waypoint)
	:param station_pos: station (x_m, y_m)
	:type  station_pos: tuple

	"""
	waypoints: Tuple[Waypoint, ...]
	station_pos: Tuple[float, float] = (0.0, 0.0)

	def __post_init__(self):
		object.__setattr__(self, 'waypoints', tuple(self.waypoints))
		object.__setattr__(self, 'station_pos', tuple(float(value) for value in self.station_pos))
		if not self.waypoints:
			raise InvalidTrajectoryError('trajectory needs at least one waypoint')
		if len(self.station_pos) != 2:
			raise InvalidTrajectoryError(f'station position must be (x, y), got {self.station_pos}')

		for previous, current in zip(self.waypoints, self.waypoints[1:]):
			if not current.t_s > previous.t_s:
				raise InvalidTrajectoryError(f'waypoint times must strictly increase, got {previous.t_s} then {current.t_s}')

	@property
	def duration_s(self) -> float:
		return self.waypoints[-1].t_s


def position_at(traj: Trajectory, t_s: float) -> Tuple[float, float, float]:
	"""(x_m, y_m, speed_mps) at t_s; outside the waypoint span the robot is parked at the nearest end"""
	waypoints = traj.waypoints
	first, last = waypoints[0], waypoints[-1]
	if t_s < first.t_s:
		return first.x_m, first.y_m, 0.0
	if t_s >= last.t_s:
		return last.x_m, last.y_m, 0.0

	index = bisect_right([waypoint.t_s for waypoint in waypoints], t_s) - 1
	start, end = waypoints[index], waypoints[index + 1]
	span_s = end.t_s - start.t_s
	fraction = (t_s - start.t_s) / span_s

	return (start.x_m + fraction * (end.x_m - start.x_m),
		start.y_m + fraction * (end.y_m - start.y_m),
		math.hypot(end.x_m - start.x_m, end.y_m - start.y_m) / span_s)


def default_trajectory() -> Trajectory:
	"""300 s out and back exploration, parked near the station at both ends and once at mid range"""
	points = [
		(0.0, 2.0, 0.0),
		(30.0, 2.0, 0.0),
		(70.0, 14.0, 0.0),
		(100.0, 14.0, 0.0),
		(150.0, 28.0, 4.0),
		(200.0, 14.0, 0.0),
		(260.0, 2.0, 0.0),
		(300.0, 2.0, 0.0),
	]

	return Trajectory(waypoints=tuple(Waypoint(t_s, x_m, y_m) for t_s, x_m, y_m in points), station_pos=(0.0, 0.0))


def load_trajectory(path: str) -> Trajectory:
	"""reads 't x y' lines plus one optional 'station x y' directive; '#' starts a comment"""
	waypoints = []
	station_pos = (0.0, 0.0)
	with open(path) as trajectory_file:
		for line_number, line in enumerate(trajectory_file, start=1):
			tokens = line.split(SimulatorConsts.COMMENT.value, 1)[0].split()
			if not tokens:
				continue

			try:
				if tokens[0] == SimulatorConsts.STATION_DIRECTIVE.value:
					_, x_m, y_m = tokens
					station_pos = (float(x_m), float(y_m))
				else:
					t_s, x_m, y_m = tokens
					waypoints.append(Waypoint(float(t_s), float(x_m), float(y_m)))
			except ValueError:
				raise InvalidTrajectoryError(f'{path}:{line_number}: expected "t x y" or "station x y", got {line.strip()!r}')

	return Trajectory(waypoints=tuple(waypoints), station_pos=station_pos)


@dataclass(frozen=True)
class CasePreset(BaseDataclassRecord):
	"""simulator parameters of one experiment case

	:param case: experiment case
	:type  case: ExperimentCase
	:param channel: radio model parameters (two ray unused)
	:type  channel: ChannelParams
	:param disconnect_rssi_dbm: below this RSSI the link is down
	:type  disconnect_rssi_dbm: float
	:param mobility_extra_sigma_db: shadowing added while moving, dB
	:type  mobility_extra_sigma_db: float
	:param base_rtt_ms: constant round trip added to the modeled delay
	:type  base_rtt_ms: float
	:param tx_fraction: robot transmitted share of the throughput
	:type  tx_fraction: float
	:param rssi_sides: sides whose driver reports RSSI
	:type  rssi_sides: tuple(str)

	"""
	case: ExperimentCase
	channel: ChannelParams
	disconnect_rssi_dbm: float
	mobility_extra_sigma_db: float
	base_rtt_ms: float = PRESET_CATALOG['base_rtt_ms']
	tx_fraction: float = PRESET_CATALOG['tx_fraction']
	rssi_sides: List[str] = field(default_factory=lambda: [Side.ROBOT.value, Side.STATION.value])

	@logger.catch(reraise=True)
	def __post_init__(self):
		object.__setattr__(self, 'rssi_sides', tuple(self.rssi_sides))
		CheckUtils.check_is_finite(self.disconnect_rssi_dbm, name='disconnect_rssi_dbm')
		CheckUtils.check_is_not_negative(self.mobility_extra_sigma_db, name='mobility_extra_sigma_db')
		CheckUtils.check_is_not_negative(self.base_rtt_ms, name='base_rtt_ms')
		CheckUtils.check_in_range(self.tx_fraction, 0.0, 1.0, name='tx_fraction')
		for side in self.rssi_sides:
			if side not in (Side.ROBOT.value, Side.STATION.value):
				raise ValueError(f'rssi_sides must hold robot and/or station, got {side!r}')


def _rssi_sides(case: ExperimentCase) -> Tuple[str, ...]:
	# internal adapters report no RSSI on the side hosting the access point
	if case.robot_iface in PRESET_CATALOG['external_ifaces'] or case.topology == Topology.ROUTER.value:
		return Side.ROBOT.value, Side.STATION.value

	return (Side.STATION.value,) if case.ap_side == Side.ROBOT.value else (Side.ROBOT.value,)


def preset_case(case_id: int) -> CasePreset:
	if isinstance(case_id, bool) or not isinstance(case_id, int) or case_id not in EXPERIMENT_CASES:
		raise UnknownCaseError(f'no preset for case {case_id!r}, expected 1-10')

	case = ExperimentCase.from_table(case_id)
	rss_d0_dbm = PRESET_CATALOG['rss_d0_dbm'][case.topology]
	if case.robot_iface in PRESET_CATALOG['external_ifaces']:
		rss_d0_dbm += PRESET_CATALOG['external_iface_gain_db']

	channel = ChannelParams(path_loss=PathLossParams(rss_d0_dbm=rss_d0_dbm, eta=PRESET_CATALOG['eta'][case.topology]),
		shadowing=ShadowingParams(sigma_db=PRESET_CATALOG['sigma_db']),
		multipath=MultipathParams(),
		link=LinkParams(b_mhz=PRESET_CATALOG['b_mhz'][case.band],
			pn_dbm=PRESET_CATALOG['pn_dbm'],
			alpha_t=PRESET_CATALOG['alpha_t'],
			l_bits=PRESET_CATALOG['l_bits']))

	return CasePreset(case=case,
		channel=channel,
		disconnect_rssi_dbm=PRESET_CATALOG['disconnect_rssi_dbm'],
		mobility_extra_sigma_db=PRESET_CATALOG['mobility_extra_sigma_db'],
		rssi_sides=_rssi_sides(case))


def load_preset(path: str) -> CasePreset:
	"""reads a custom CasePreset from a JSON file"""
	with open(path) as preset_file:
		record = json.load(preset_file)

	try:
		return CasePreset.from_dict(record)
	except (KeyError, TypeError, InvalidExperimentCaseError) as error:
		raise ValueError(f'{path}: invalid case preset: {error}')


def _clip_rssi(rssi_dbm: float) -> float:
	return min(max(rssi_dbm, MetricsConsts.RSSI_MIN_DBM.value), MetricsConsts.RSSI_MAX_DBM.value)


def simulate(preset: CasePreset, traj: Trajectory, duration_s: float, seed: int) -> TraceFile:
	"""synthetic trace of one case along a trajectory

	Per RSSI tick the robot and station RSSI are drawn at the current distance. Per generic tick the
	robot RSSI drives throughput, delay and retransmits; below disconnect_rssi_dbm throughput is zero
	and the delay is the timeout sentinel. A motion record is written every generic tick and whenever
	the robot starts or stops.
	"""
	CheckUtils.check_is_positive(duration_s, name='duration_s')
	CheckUtils.check_in_range(seed, 0, SimulatorConsts.SEED_MASK.value, name='seed')

	rng = np.random.default_rng(seed)
	channel = preset.channel
	robot_shadowing = ShadowingProcess(channel.shadowing, rng)
	station_shadowing = ShadowingProcess(channel.shadowing, rng)
	case = preset.case
	timeout_ms = ProbeConsts.DEFAULT_TIMEOUT_MS.value
	sigma_static = channel.shadowing.sigma_db
	ticks = int(round(duration_s * SimulatorConsts.RSSI_RATE_HZ.value))
	ticks_per_generic = int(round(SimulatorConsts.RSSI_RATE_HZ.value / SimulatorConsts.GENERIC_RATE_HZ.value))
	generic_interval_s = 1 / SimulatorConsts.GENERIC_RATE_HZ.value
	station_x, station_y = traj.station_pos

	records = []
	retransmits = 0
	was_moving = None
	previous_position = None

	def emit(ts_ns: int, side: str, iface: str, body):
		records.append(MetricSample(ts_ns=ts_ns, side=side, iface=iface, body=body))

	for tick in range(ticks):
		t_s = tick / SimulatorConsts.RSSI_RATE_HZ.value
		ts_ns = tick * Units.NS_PER_S.value // int(SimulatorConsts.RSSI_RATE_HZ.value)
		x_m, y_m, speed = position_at(traj, t_s)
		moving = speed > 0
		generic = tick % ticks_per_generic == 0

		if generic or moving != was_moving:
			emit(ts_ns, Side.ROBOT.value, case.robot_iface, MotionBody(linear_mps=float(speed)))
			was_moving = moving

		distance = max(math.hypot(x_m - station_x, y_m - station_y), channel.path_loss.d0_m)
		displacement = 0.0 if previous_position is None else math.hypot(x_m - previous_position[0], y_m - previous_position[1])
		previous_position = (x_m, y_m)
		sigma_db = sigma_static + (preset.mobility_extra_sigma_db if moving else 0.0)
		multipath = replace(channel.multipath, enabled=channel.multipath.enabled and moving)

		robot_rssi = sample_rssi(channel.path_loss, channel.shadowing, multipath, distance, rng,
			shadowing_db=robot_shadowing.draw(displacement, sigma_db))
		station_rssi = sample_rssi(channel.path_loss, channel.shadowing, multipath, distance, rng,
			shadowing_db=station_shadowing.draw(displacement, sigma_db))

		if Side.ROBOT.value in preset.rssi_sides:
			emit(ts_ns, Side.ROBOT.value, case.robot_iface, RssiBody(rssi_dbm=_clip_rssi(float(robot_rssi))))
		if Side.STATION.value in preset.rssi_sides:
			emit(ts_ns, Side.STATION.value, case.station_iface, RssiBody(rssi_dbm=_clip_rssi(float(station_rssi))))

		if not generic:
			continue

		connected = robot_rssi >= preset.disconnect_rssi_dbm
		total_mbps = model_throughput(channel.link, robot_rssi) if connected else 0.0
		tx_mbps = total_mbps * preset.tx_fraction
		rx_mbps = total_mbps - tx_mbps
		bits_per_packet = channel.link.l_bits or 1.0
		tx_packets = int(tx_mbps * Units.BITS_PER_MEGABIT.value * generic_interval_s / bits_per_packet)
		rx_packets = int(rx_mbps * Units.BITS_PER_MEGABIT.value * generic_interval_s / bits_per_packet)
		emit(ts_ns, Side.ROBOT.value, case.robot_iface, ThroughputBody.of(tx_mbps, rx_mbps, tx_packets, rx_packets))

		delay = DelayBody.timeout()
		if connected:
			try:
				rtt_ms = model_delay(channel.link, robot_rssi) + preset.base_rtt_ms
				if 0 < rtt_ms <= timeout_ms:
					delay = DelayBody.reply(rtt_ms)
			except DisconnectedLinkError:
				pass
		emit(ts_ns, Side.ROBOT.value, case.robot_iface, delay)

		if connected:
			error_probability = min(1.0, 10 ** (-(robot_rssi - channel.link.pn_dbm) / 10))
			retransmits += int(rng.binomial(tx_packets + rx_packets, error_probability))
		emit(ts_ns, Side.ROBOT.value, case.robot_iface, ErrorBody(retransmits_cum=retransmits))

	header = TraceHeader(case=case, start_utc=SimulatorConsts.SIMULATION_START_UTC.value, origin=Origin.SIMULATED.value, seed=seed)
	logger.debug(f'simulated case {case.case_id}: {len(records)} records over {duration_s} s, seed {seed}')

	return TraceFile(header=header, records=tuple(records))


def derive_seed(seed: int, case_id) -> int:
	case_number = 0 if case_id == CUSTOM_CASE_ID else int(case_id)

	return (seed ^ case_number) & SimulatorConsts.SEED_MASK.value


def _trace_paths(presets: Sequence[CasePreset], outdir: str) -> List[str]:
	paths = []
	seen = {}
	for preset in presets:
		name = f'case-{preset.case.case_id}'
		seen[name] = seen.get(name, 0) + 1
		if seen[name] > 1:
			name = f'{name}-{seen[name]}'
		paths.append(os.path.join(outdir, name + SimulatorConsts.TRACE_SUFFIX.value))

	return paths


def run_experiment_suite(presets: Sequence[CasePreset],
	traj: Trajectory,
	duration_s: float,
	seed: int,
	outdir: str,
	workers: Optional[int] = None) -> List[Tuple[str, SummaryRow]]:
	"""simulates and summarizes every preset, in parallel with per case derived seeds

	Traces land in outdir as case-<id>.trace (duplicates get a -<n> suffix) and the comparison table
	of all rows is written next to them.

	:returns: (trace path, summary row) per preset, in preset order

	"""
	presets = list(presets)
	if not presets:
		raise ValueError('run_experiment_suite needs at least one preset')

	os.makedirs(outdir, exist_ok=True)
	paths = _trace_paths(presets, outdir)

	def run_one(job: Tuple[CasePreset, str]) -> Tuple[str, SummaryRow]:
		preset, path = job
		trace = simulate(preset, traj, duration_s, derive_seed(seed, preset.case.case_id))
		write_trace(trace, path)
		label = os.path.splitext(os.path.basename(path))[0]
		logger.info(f'simulated {label} into {path}')
		return path, summarize(trace, label=label)

	with ThreadPoolExecutor(max_workers=workers) as executor:
		results = list(executor.map(run_one, zip(presets, paths)))

	table = suite_comparison(results)
	with open(os.path.join(outdir, SimulatorConsts.COMPARISON_FILE.value), 'w') as comparison_file:
		comparison_file.write(render_table(table))

	return results


def suite_comparison(results: Sequence[Tuple[str, SummaryRow]]) -> ComparisonTable:
	return compare_cases([row for _, row in results])
