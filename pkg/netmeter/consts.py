#!/usr/bin/env python
from enum import Enum


class ConfigConsts(Enum):
	DEFAULT_LOG_LEVEL = 'INFO'
	DEFAULT_LOGGER_ROTATION = '100 MB'
	VERBOSE_LOG_LEVEL = 'DEBUG'
	QUIET_LOG_LEVEL = 'WARNING'
	COLLECTOR = 'collector'
	PROBE = 'probe'
	CHANNEL = 'channel'
	LOG_LEVEL = 'log_level'
	LOG_FILE = 'log_file'


class LoggerConsts(Enum):
	LOG_LEVEL = 'NETMETER_LOG_LEVEL'
	LOG_FILE_PATH = 'NETMETER_LOG_FILE'


class ExitCodes(Enum):
	OK = 0
	DATA_ERROR = 2
	EMPTY_ANALYSIS = 3
	USAGE = 64


class Side(Enum):
	ROBOT = 'robot'
	STATION = 'station'


class MetricType(Enum):
	RSSI = 'rssi'
	THROUGHPUT = 'throughput'
	DELAY = 'delay'
	ERRORS = 'errors'
	EPOCH = 'epoch'
	MOTION = 'motion'


class Origin(Enum):
	MEASURED = 'measured'
	SIMULATED = 'simulated'


class Topology(Enum):
	ROUTER = 'router'
	DIRECT = 'direct'


class ApSide(Enum):
	ROUTER = 'router'
	ROBOT = 'robot'
	STATION = 'station'


class Band(Enum):
	BAND_2G4 = 'band_2g4'
	BAND_5G8 = 'band_5g8'


class MotionMode(Enum):
	ALL = 'all'
	STATIC_ONLY = 'static_only'
	MOVING_ONLY = 'moving_only'


class EmitFormat(Enum):
	TABLE = 'table'
	CSV = 'csv'
	JSON = 'json'


class Units(Enum):
	NS_PER_S = 1_000_000_000
	NS_PER_MS = 1_000_000
	BITS_PER_BYTE = 8
	# decimal megabits
	BITS_PER_MEGABIT = 1_000_000
	KBITS_PER_MEGABIT = 1000


# case id -> (topology, ap side, band, robot iface, station iface)
EXPERIMENT_CASES = {
	1: (Topology.ROUTER, ApSide.ROUTER, Band.BAND_2G4, 'iface1', 'iface3'),
	3: (Topology.DIRECT, ApSide.ROBOT, Band.BAND_2G4, 'iface1', 'iface3'),
	5: (Topology.DIRECT, ApSide.STATION, Band.BAND_2G4, 'iface1', 'iface3'),
	7: (Topology.DIRECT, ApSide.ROBOT, Band.BAND_2G4, 'iface2', 'iface4'),
	9: (Topology.DIRECT, ApSide.STATION, Band.BAND_2G4, 'iface2', 'iface4'),
	2: (Topology.ROUTER, ApSide.ROUTER, Band.BAND_5G8, 'iface1', 'iface3'),
	4: (Topology.DIRECT, ApSide.ROBOT, Band.BAND_5G8, 'iface1', 'iface3'),
	6: (Topology.DIRECT, ApSide.STATION, Band.BAND_5G8, 'iface1', 'iface3'),
	8: (Topology.DIRECT, ApSide.ROBOT, Band.BAND_5G8, 'iface2', 'iface4'),
	10: (Topology.DIRECT, ApSide.STATION, Band.BAND_5G8, 'iface2', 'iface4'),
}

CUSTOM_CASE_ID = 'custom'
