#!/usr/bin/env python
import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor, wait
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

from loguru import logger

from netmeter.analyzer import MotionFilter, compare_cases, load_static_intervals, render_csv, render_json, render_table, static_vs_moving, summarize
from netmeter.channel import ChannelParams, load_channel_params
from netmeter.collectors import CollectorConfig, LinkCollector
from netmeter.component import MonotonicClock
from netmeter.config import Config
from netmeter.consts import ConfigConsts, EmitFormat, EXPERIMENT_CASES, ExitCodes, MotionMode, Origin, Side
from netmeter.exceptions import EmptyAfterFilterError, NetmeterException, UsageError
from netmeter.logger import LoggerController
from netmeter.metrics import TraceHeader
from netmeter.probe import ProbeClient, ProbeConfig, serve
from netmeter.recorder import StreamSink, TraceRecorder, read_trace, write_trace
from netmeter.simulator import CasePreset, SimulatorConsts, default_trajectory, load_preset, load_trajectory, preset_case, run_experiment_suite, simulate, suite_comparison
from netmeter.utils import Utils


class CliConsts(Enum):
	PROG = 'netmeter'
	PROBE = 'probe'
	SERVE = 'serve'
	CLIENT = 'client'
	RECORD = 'record'
	SIMULATE = 'simulate'
	SUITE = 'suite'
	ANALYZE = 'analyze'
	DEFAULT_SEED = 42


MOTION_CHOICES = {
	'all': MotionMode.ALL.value,
	'static': MotionMode.STATIC_ONLY.value,
	'moving': MotionMode.MOVING_ONLY.value,
}

RENDERERS = {
	EmitFormat.TABLE.value: render_table,
	EmitFormat.CSV.value: render_csv,
	EmitFormat.JSON.value: render_json,
}

# flag -> CollectorConfig / ProbeConfig field
COLLECTOR_FLAGS = {'iface': 'iface', 'side': 'side', 'rssi_rate': 'rssi_rate_hz', 'generic_rate': 'generic_rate_hz', 'stats_root': 'stats_source_root'}
PROBE_FLAGS = {'server': 'server', 'rate': 'rate_hz', 'timeout_ms': 'timeout_ms', 'payload': 'payload_len', 'side': 'side', 'probe_iface': 'iface'}


class NetmeterArgumentParser(argparse.ArgumentParser):

	def error(self, message):
		raise UsageError(f'{self.prog}: {message}')


@dataclass
class AppConfig:
	"""one invocation's merged settings: config file values overridden by flags

	:param command: subcommand, e.g. 'probe client'
	:type  command: str
	:param options: remaining validated flags of the subcommand
	:type  options: dict
	:param collector: collector settings (record)
	:type  collector: CollectorConfig
	:param probe: probe client settings (probe client, record with a server)
	:type  probe: ProbeConfig
	:param channel: channel parameters replacing the presets' (simulate, suite)
	:type  channel: ChannelParams
	:param log_level: resolved verbosity, None leaves it to the environment
	:type  log_level: str
	:param log_file: log file path
	:type  log_file: str

	"""
	command: str
	options: Dict[str, Any] = field(default_factory=dict)
	collector: Optional[CollectorConfig] = None
	probe: Optional[ProbeConfig] = None
	channel: Optional[ChannelParams] = None
	log_level: Optional[str] = None
	log_file: Optional[str] = None


def _existing_file(value: str) -> str:
	if not os.path.isfile(value):
		raise argparse.ArgumentTypeError(f'no such file: {value}')

	return value


def _existing_dir(value: str) -> str:
	if not os.path.isdir(value):
		raise argparse.ArgumentTypeError(f'no such directory: {value}')

	return value


def _output_file(value: str) -> str:
	parent = os.path.dirname(os.path.abspath(value))
	if not os.path.isdir(parent):
		raise argparse.ArgumentTypeError(f'directory {parent} does not exist')
	if os.path.isdir(value):
		raise argparse.ArgumentTypeError(f'{value} is a directory')

	return value


def _output_dir(value: str) -> str:
	if os.path.exists(value) and not os.path.isdir(value):
		raise argparse.ArgumentTypeError(f'{value} exists and is not a directory')
	if not os.path.isdir(os.path.dirname(os.path.abspath(value))):
		raise argparse.ArgumentTypeError(f'parent of {value} does not exist')

	return value


def _number(value: str) -> float:
	try:
		return float(value)
	except ValueError:
		raise argparse.ArgumentTypeError(f'not a number: {value}')


def _positive_float(value: str) -> float:
	number = _number(value)
	if not number > 0:
		raise argparse.ArgumentTypeError(f'must be > 0, got {value}')

	return number


def _not_negative_float(value: str) -> float:
	number = _number(value)
	if number < 0:
		raise argparse.ArgumentTypeError(f'must be >= 0, got {value}')

	return number


def _positive_int(value: str) -> int:
	if not value.isdigit() or int(value) == 0:
		raise argparse.ArgumentTypeError(f'must be a positive integer, got {value}')

	return int(value)


def _seed(value: str) -> int:
	if not value.isdigit() or int(value) > SimulatorConsts.SEED_MASK.value:
		raise argparse.ArgumentTypeError(f'must be an integer in [0, 2^64 - 1], got {value}')

	return int(value)


def _case_reference(value: str) -> Union[int, str]:
	"""an experiment case id 1-10 or the path of a custom preset file"""
	if value.isdigit():
		if int(value) not in EXPERIMENT_CASES:
			raise argparse.ArgumentTypeError(f'case must be 1-10 or a preset file, got {value}')
		return int(value)

	return _existing_file(value)


def _add_collector_flags(parser: argparse.ArgumentParser) -> None:
	parser.add_argument('--iface', type=str, help='wireless interface to sample (collector.iface)')
	parser.add_argument('--side', choices=[item.value for item in Side], help='which end of the link this host is')
	parser.add_argument('--rssi-rate', type=_positive_float, help='RSSI sampling rate, Hz (default 10)')
	parser.add_argument('--generic-rate', type=_positive_float, help='throughput and error sampling rate, Hz (default 1)')
	parser.add_argument('--stats-root', type=_existing_dir, help='root of the kernel statistics files (default /proc)')


def _add_probe_flags(parser: argparse.ArgumentParser, iface_flag: str) -> None:
	parser.add_argument('--server', type=str, help='probe server endpoint, host:port')
	parser.add_argument('--rate', type=_positive_float, help='probes per second (default 1)')
	parser.add_argument('--timeout-ms', type=_positive_float, help='reply deadline, ms (default 2000)')
	parser.add_argument('--payload', type=int, help='probe payload length, bytes (default 64)')
	parser.add_argument(iface_flag, dest='probe_iface', type=str, help='interface label stamped on delay samples (default probe)')


def build_parser() -> NetmeterArgumentParser:
	parser = NetmeterArgumentParser(prog=CliConsts.PROG.value, description='wireless link measurement, simulation and analysis')
	parser.add_argument('--config', type=_existing_file, help='JSON config file with collector, probe, channel and log settings')
	verbosity = parser.add_mutually_exclusive_group()
	verbosity.add_argument('-v', '--verbose', action='store_true', help='debug logging')
	verbosity.add_argument('-q', '--quiet', action='store_true', help='warnings and errors only')
	parser.add_argument('--log-file', type=str, help='also log to this file (rotated at 100 MB)')
	commands = parser.add_subparsers(dest='command', metavar='command', required=True)

	probe = commands.add_parser(CliConsts.PROBE.value, help='round trip delay probe')
	probe_commands = probe.add_subparsers(dest='probe_command', metavar='probe_command', required=True)

	serve = probe_commands.add_parser(CliConsts.SERVE.value, help='echo PINGs with PONGs')
	serve.add_argument('--listen', required=True, type=str, help='endpoint to bind, host:port')
	serve.add_argument('--delay-ms', type=_not_negative_float, default=0.0, help='artificial reply delay, ms')

	client = probe_commands.add_parser(CliConsts.CLIENT.value, help='measure round trip delay against a probe server')
	_add_probe_flags(client, '--iface')
	client.add_argument('--side', choices=[item.value for item in Side], help='which end of the link the client runs on')
	client.add_argument('--count', type=_positive_int, help='stop after this many probes')
	client.add_argument('--duration', type=_positive_float, help='stop after this many seconds')
	client.add_argument('--case', type=_case_reference, help='experiment case (1-10 or preset file), required with --out')
	client.add_argument('--out', type=_output_file, help='trace file to write; records go to stdout when absent')

	record = commands.add_parser(CliConsts.RECORD.value, help='record live collector and probe samples to a trace')
	record.add_argument('--case', required=True, type=_case_reference, help='experiment case, 1-10 or preset file')
	record.add_argument('--out', required=True, type=_output_file, help='trace file to write')
	_add_collector_flags(record)
	_add_probe_flags(record, '--probe-iface')
	record.add_argument('--duration', type=_positive_float, help='stop after this many seconds (default: until interrupted)')
	record.add_argument('--fsync', action='store_true', help='fsync the trace after every record')

	simulate_parser = commands.add_parser(CliConsts.SIMULATE.value, help='simulate one experiment case')
	simulate_parser.add_argument('--case', required=True, type=_case_reference, help='experiment case, 1-10 or preset file')
	simulate_parser.add_argument('--out', required=True, type=_output_file, help='trace file to write')
	_add_simulation_flags(simulate_parser)

	suite = commands.add_parser(CliConsts.SUITE.value, help='simulate and compare several experiment cases')
	cases = suite.add_mutually_exclusive_group(required=True)
	cases.add_argument('--all-cases', action='store_true', help='run the ten reference cases')
	cases.add_argument('--case', action='append', type=_case_reference, help='case to run, repeatable')
	suite.add_argument('--outdir', required=True, type=_output_dir, help='directory for the traces and the comparison table')
	suite.add_argument('--workers', type=_positive_int, help='parallel simulations (default: executor default)')
	suite.add_argument('--emit', choices=list(RENDERERS), default=EmitFormat.TABLE.value, help='comparison output format')
	_add_simulation_flags(suite)

	analyze = commands.add_parser(CliConsts.ANALYZE.value, help='summarize and compare traces')
	analyze.add_argument('traces', nargs='+', type=_existing_file, help='trace files')
	analyze.add_argument('--motion', choices=list(MOTION_CHOICES), default='all', help='samples to keep')
	analyze.add_argument('--emit', choices=list(RENDERERS), default=EmitFormat.TABLE.value, help='output format')
	analyze.add_argument('--intervals', type=_existing_file, help='static intervals sidecar, "start_s end_s" per line')
	analyze.add_argument('--side', choices=[item.value for item in Side], help='restrict throughput, delay and errors to one side')
	analyze.add_argument('--split', action='store_true', help='one static and one moving row per trace')
	analyze.add_argument('--lenient', action='store_true', help='skip corrupt trace lines instead of failing')
	analyze.add_argument('--no-band-groups', action='store_true', help='compare all rows together instead of per band')

	return parser


def _add_simulation_flags(parser: argparse.ArgumentParser) -> None:
	parser.add_argument('--trajectory', type=_existing_file, help='trajectory file, "t x y" lines (default: built in 300 s exploration)')
	parser.add_argument('--duration', type=_positive_float, default=SimulatorConsts.DEFAULT_DURATION_S.value, help='simulated seconds')
	parser.add_argument('--seed', type=_seed, default=CliConsts.DEFAULT_SEED.value, help='random seed')


def subcommand_parsers(parser: argparse.ArgumentParser, prefix: str = '') -> Dict[str, argparse.ArgumentParser]:
	"""every leaf subcommand parser by its command name"""
	leaves = {}
	for action in parser._actions:
		if isinstance(action, argparse._SubParsersAction):
			for name, subparser in action.choices.items():
				nested = subcommand_parsers(subparser, f'{prefix}{name} ')
				leaves.update(nested or {f'{prefix}{name}': subparser})

	return leaves


def _load_config_file(path: Optional[str]) -> Dict:
	if path is None:
		return {}

	try:
		with open(path) as config_file:
			record = json.load(config_file)
	except json.JSONDecodeError as error:
		raise UsageError(f'--config {path}: invalid JSON: {error}')
	if not isinstance(record, dict):
		raise UsageError(f'--config {path}: expected a JSON object')

	return record


def _merge(section: Dict, args: Dict, flags: Dict[str, str]) -> Dict:
	merged = dict(section)
	merged.update({name: args[flag] for flag, name in flags.items() if args.get(flag) is not None})

	return merged


def _build(data_class, record: Dict, flag: str):
	try:
		return data_class.from_dict(record)
	except KeyError as error:
		raise UsageError(f'{flag} is required (flag or config file), missing {error}')
	except (TypeError, ValueError, NetmeterException) as error:
		raise UsageError(f'invalid {data_class.__name__}: {error}')


def parse_invocation(argv: Optional[Sequence[str]] = None) -> Tuple[str, AppConfig]:
	"""parses and validates a command line; no side effects beyond reading the config file

	:raises UsageError: bad or missing flag, unreadable input path or invalid config value

	"""
	args = vars(build_parser().parse_args(argv))
	command = ' '.join(part for part in (args.pop('command'), args.pop('probe_command', None)) if part)
	file_config = _load_config_file(args.pop('config'))

	verbose, quiet = args.pop('verbose'), args.pop('quiet')
	if verbose:
		log_level = ConfigConsts.VERBOSE_LOG_LEVEL.value
	elif quiet:
		log_level = ConfigConsts.QUIET_LOG_LEVEL.value
	else:
		log_level = file_config.get(ConfigConsts.LOG_LEVEL.value)

	app_config = AppConfig(command=command, log_level=log_level, log_file=args.pop('log_file') or file_config.get(ConfigConsts.LOG_FILE.value))
	probe_section = file_config.get(ConfigConsts.PROBE.value, {})
	collector_section = file_config.get(ConfigConsts.COLLECTOR.value, {})

	if command == f'{CliConsts.PROBE.value} {CliConsts.CLIENT.value}':
		if args['server'] is None and 'server' not in probe_section:
			raise UsageError(f'{CliConsts.PROG.value} {command}: the following arguments are required: --server')
		if args['out'] is not None and args['case'] is None:
			raise UsageError(f'{CliConsts.PROG.value} {command}: --case is required with --out')
		app_config.probe = _build(ProbeConfig, _merge(probe_section, args, PROBE_FLAGS), '--server')

	elif command == CliConsts.RECORD.value:
		app_config.collector = _build(CollectorConfig, _merge(collector_section, args, COLLECTOR_FLAGS), '--iface')
		probe_record = _merge(probe_section, args, PROBE_FLAGS)
		if 'server' in probe_record:
			app_config.probe = _build(ProbeConfig, probe_record, '--server')
		if not os.path.isdir(app_config.collector.stats_source_root):
			raise UsageError(f'--stats-root {app_config.collector.stats_source_root} is not a directory')

	elif command in (CliConsts.SIMULATE.value, CliConsts.SUITE.value) and ConfigConsts.CHANNEL.value in file_config:
		try:
			app_config.channel = load_channel_params(file_config)
		except (KeyError, TypeError, ValueError, NetmeterException) as error:
			raise UsageError(f'--config: invalid channel block: {error}')

	for consumed in set(COLLECTOR_FLAGS) | set(PROBE_FLAGS):
		if command != CliConsts.ANALYZE.value or consumed != 'side':
			args.pop(consumed, None)
	app_config.options = args
	logger.debug(f'parsed {command}: {args}')

	return command, app_config


def _preset(case_reference: Union[int, str], channel: Optional[ChannelParams] = None) -> CasePreset:
	preset = preset_case(case_reference) if isinstance(case_reference, int) else load_preset(case_reference)

	return preset if channel is None else replace(preset, channel=channel)


def _run_until_done(tasks: List[Tuple[Callable, Callable]]) -> None:
	"""runs (run, stop) pairs concurrently; an interrupt stops them all"""
	with ThreadPoolExecutor(max_workers=len(tasks)) as executor:
		futures = [executor.submit(run) for run, _ in tasks]
		try:
			wait(futures)
		except KeyboardInterrupt:
			logger.info('interrupted, stopping')
			for _, stop in tasks:
				stop()
			wait(futures)

		for future in futures:
			future.result()


class NetmeterCommands:

	def __init__(self, app_config: AppConfig):
		self.app_config = app_config
		self.options = app_config.options

	def probe_serve(self) -> None:
		serve(self.options['listen'], reply_delay_ms=self.options['delay_ms'])

	def probe_client(self) -> None:
		client = ProbeClient(config=self.app_config.probe)
		run_kwargs = {'count': self.options['count'], 'duration_s': self.options['duration']}
		if self.options['out'] is None:
			sink = StreamSink(sys.stdout)
			_run_until_done([(lambda: client.run(sink, **run_kwargs), client.stop)])
			return

		header = TraceHeader(case=_preset(self.options['case']).case, start_utc=Utils.utc_now_rfc3339(), origin=Origin.MEASURED.value)
		with TraceRecorder(self.options['out']) as recorder:
			recorder.write_header(header)
			_run_until_done([(lambda: client.run(recorder, **run_kwargs), client.stop)])

	def record(self) -> None:
		case = _preset(self.options['case']).case
		clock = MonotonicClock()
		session_start_ns = clock.monotonic_ns()
		collector = LinkCollector(self.app_config.collector, clock=clock, session_start_ns=session_start_ns)
		collector.check_sources()
		client = None
		if self.app_config.probe is not None:
			client = ProbeClient(self.app_config.probe, clock=clock, session_start_ns=session_start_ns)

		duration_s = self.options['duration']
		header = TraceHeader(case=case, start_utc=Utils.utc_now_rfc3339(), origin=Origin.MEASURED.value)
		with TraceRecorder(self.options['out'], fsync=self.options['fsync']) as recorder:
			recorder.write_header(header)
			tasks = [(lambda: collector.run(recorder, duration_s=duration_s), collector.stop)]
			if client is not None:
				tasks.append((lambda: client.run(recorder, duration_s=duration_s), client.stop))
			_run_until_done(tasks)
			logger.info(f'recorded {recorder.records_written} samples into {self.options["out"]}')

	def _trajectory(self):
		path = self.options['trajectory']

		return load_trajectory(path) if path else default_trajectory()

	def simulate(self) -> None:
		preset = _preset(self.options['case'], self.app_config.channel)
		trace = simulate(preset, self._trajectory(), self.options['duration'], self.options['seed'])
		write_trace(trace, self.options['out'])
		logger.info(f'wrote {len(trace.records)} simulated samples into {self.options["out"]}')

	def suite(self) -> None:
		case_references = sorted(EXPERIMENT_CASES) if self.options['all_cases'] else self.options['case']
		presets = [_preset(reference, self.app_config.channel) for reference in case_references]
		results = run_experiment_suite(presets,
			self._trajectory(),
			self.options['duration'],
			self.options['seed'],
			self.options['outdir'],
			workers=self.options['workers'])
		sys.stdout.write(RENDERERS[self.options['emit']](suite_comparison(results)))

	def analyze(self) -> None:
		intervals = load_static_intervals(self.options['intervals']) if self.options['intervals'] else None
		motion_filter = MotionFilter(mode=MOTION_CHOICES[self.options['motion']], static_intervals=intervals)
		rows = []
		for path in self.options['traces']:
			trace = read_trace(path, strict=not self.options['lenient'])
			if self.options['split']:
				rows.extend(static_vs_moving(trace, static_intervals=intervals, side=self.options['side'], label=path))
			else:
				rows.append(summarize(trace, motion_filter, side=self.options['side'], label=path))

		table = compare_cases(rows, group_by_band=not self.options['no_band_groups'])
		sys.stdout.write(RENDERERS[self.options['emit']](table))

	def main_process(self) -> None:
		handlers = {
			f'{CliConsts.PROBE.value} {CliConsts.SERVE.value}': self.probe_serve,
			f'{CliConsts.PROBE.value} {CliConsts.CLIENT.value}': self.probe_client,
			CliConsts.RECORD.value: self.record,
			CliConsts.SIMULATE.value: self.simulate,
			CliConsts.SUITE.value: self.suite,
			CliConsts.ANALYZE.value: self.analyze,
		}
		handlers[self.app_config.command]()


def main(argv: Optional[Sequence[str]] = None) -> int:
	try:
		command, app_config = parse_invocation(argv)
		LoggerController(Config(logger_level=app_config.log_level, logger_path=app_config.log_file))
	except UsageError as error:
		logger.error(str(error))
		return ExitCodes.USAGE.value
	except ValueError as error:
		logger.error(f'invalid logging configuration: {error}')
		return ExitCodes.USAGE.value
	except SystemExit as exit_request:
		# --help
		return exit_request.code or ExitCodes.OK.value

	try:
		NetmeterCommands(app_config).main_process()
	except UsageError as error:
		logger.error(str(error))
		return ExitCodes.USAGE.value
	except EmptyAfterFilterError as error:
		logger.error(f'nothing to analyze: {error}')
		return ExitCodes.EMPTY_ANALYSIS.value
	except (NetmeterException, ValueError, OSError) as error:
		logger.error(f'{command} failed: {error}')
		return ExitCodes.DATA_ERROR.value

	return ExitCodes.OK.value


if __name__ == '__main__':
	sys.exit(main())
