import os
import threading
from enum import Enum
from typing import Dict, TextIO, Tuple

from loguru import logger

from netmeter.exceptions import MalformedRecordError, MissingHeaderError, OutOfOrderSampleError, TraceCorruptError, TraceUsageError, UnknownRecordTypeError
from netmeter.metrics import MetricSample, TraceFile, TraceHeader, decode_header, decode_record, encode_header, encode_record


class RecorderConsts(Enum):
	NEWLINE = '\n'
	ENCODING = 'utf-8'


class TraceRecorder:

	def __init__(self, path: str, fsync: bool = False):
		"""append only trace writer, safe for concurrent producers

		Args:
			path (str): trace file to create (truncated if it exists)
			fsync (bool): fsync after every record, not only flush
		"""
		self.path = path
		self.fsync = fsync
		self.records_written = 0
		self._lock = threading.Lock()
		self._header_written = False
		self._last_ts: Dict[Tuple[str, str, str], int] = {}
		self._file = open(path, 'w', encoding=RecorderConsts.ENCODING.value, newline=RecorderConsts.NEWLINE.value)

	def __enter__(self):
		return self

	def __exit__(self, exc_type, exc_value, traceback):
		self.close()

	def _write_line(self, line: str) -> None:
		self._file.write(line + RecorderConsts.NEWLINE.value)
		self._file.flush()
		if self.fsync:
			os.fsync(self._file.fileno())

	def write_header(self, header: TraceHeader) -> None:
		with self._lock:
			if self._header_written:
				raise TraceUsageError(f'{self.path} already has a header')

			self._write_line(encode_header(header))
			self._header_written = True
			logger.debug(f'trace {self.path} started for case {header.case.case_id} ({header.origin})')

	def append(self, sample: MetricSample) -> int:
		"""writes one record line; returns the number of records written so far"""
		line = encode_record(sample)
		stream = (sample.side, sample.iface, sample.metric_type)
		with self._lock:
			if not self._header_written:
				raise TraceUsageError(f'cannot append to {self.path} before its header')
			if sample.ts_ns < self._last_ts.get(stream, 0):
				raise OutOfOrderSampleError(f'{stream} went back in time: {sample.ts_ns} < {self._last_ts[stream]}')

			self._write_line(line)
			self._last_ts[stream] = sample.ts_ns
			self.records_written += 1

			return self.records_written

	def put(self, sample: MetricSample) -> None:
		self.append(sample)

	def flush(self) -> None:
		with self._lock:
			if not self._file.closed:
				self._file.flush()

	def close(self) -> None:
		with self._lock:
			if not self._file.closed:
				self._file.close()
				logger.debug(f'trace {self.path} closed with {self.records_written} records')


class StreamSink:

	def __init__(self, stream: TextIO):
		"""writes encoded records to an open text stream, one line per sample"""
		self.stream = stream
		self._lock = threading.Lock()

	def put(self, sample: MetricSample) -> None:
		line = encode_record(sample)
		with self._lock:
			self.stream.write(line + RecorderConsts.NEWLINE.value)

	def flush(self) -> None:
		with self._lock:
			self.stream.flush()


def append_record(trace: TraceRecorder, sample: MetricSample) -> int:
	return trace.append(sample)


def write_trace(trace: TraceFile, path: str) -> str:
	with TraceRecorder(path) as recorder:
		recorder.write_header(trace.header)
		for sample in trace.records:
			recorder.append(sample)

	return path


def _decode_line(raw: bytes) -> str:
	try:
		return raw.decode(RecorderConsts.ENCODING.value)
	except UnicodeDecodeError as error:
		raise MalformedRecordError(f'invalid {RecorderConsts.ENCODING.value}: {error.reason}', offset=error.start, content=raw.decode(RecorderConsts.ENCODING.value, errors='replace'))


def read_trace(path: str, strict: bool = True) -> TraceFile:
	"""loads a trace file

	A final line without its newline that does not decode is a crash artifact and is always dropped,
	even when the crash cut a multibyte character. Records of unknown type are skipped. Any other
	undecodable line raises TraceCorruptError in strict mode and is skipped in lenient mode.
	"""
	with open(path, 'rb') as trace_file:
		content = trace_file.read()

	newline = RecorderConsts.NEWLINE.value.encode(RecorderConsts.ENCODING.value)
	lines = content.split(newline)
	complete = content.endswith(newline)
	if complete:
		lines.pop()
	if not lines or not lines[0].strip():
		raise MissingHeaderError(f'{path} has no header line')

	try:
		header = decode_header(_decode_line(lines[0]))
	except MalformedRecordError as error:
		raise MissingHeaderError(f'{path} does not start with a trace header: {error}')

	records = []
	dropped = unknown = 0
	for line_number, raw_line in enumerate(lines[1:], start=2):
		try:
			records.append(decode_record(_decode_line(raw_line)))
		except UnknownRecordTypeError as error:
			unknown += 1
			logger.warning(f'{path}:{line_number}: skipping {error}')
		except MalformedRecordError as error:
			if line_number == len(lines) and not complete:
				dropped += 1
				logger.warning(f'{path}:{line_number}: dropping truncated final line')
			elif strict:
				raise TraceCorruptError(f'{path}:{line_number}: {error}', line_number=line_number, content=raw_line.decode(RecorderConsts.ENCODING.value, errors='replace'))
			else:
				dropped += 1
				logger.warning(f'{path}:{line_number}: skipping corrupt line: {error}')


	logger.debug(f'read {len(records)} records from {path} ({dropped} dropped, {unknown} unknown)')

	return TraceFile(header=header, records=tuple(records), dropped_lines=dropped, unknown_lines=unknown)
