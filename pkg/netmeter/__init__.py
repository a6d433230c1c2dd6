from netmeter.analyzer import MotionFilter, SummaryRow, compare_cases, static_vs_moving, summarize
from netmeter.collectors import CollectorConfig, LinkCollector
from netmeter.exceptions import NetmeterException
from netmeter.metrics import ExperimentCase, MetricSample, TraceFile, TraceHeader
from netmeter.probe import ProbeClient, ProbeConfig, ProbeServer
from netmeter.recorder import TraceRecorder, read_trace, write_trace
from netmeter.simulator import preset_case, run_experiment_suite, simulate

__all__ = ['MotionFilter', 'SummaryRow', 'compare_cases', 'static_vs_moving', 'summarize', 'CollectorConfig', 'LinkCollector', 'NetmeterException',
	'ExperimentCase', 'MetricSample', 'TraceFile', 'TraceHeader', 'ProbeClient', 'ProbeConfig', 'ProbeServer', 'TraceRecorder', 'read_trace', 'write_trace',
	'preset_case', 'run_experiment_suite', 'simulate']
