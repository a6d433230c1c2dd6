import io
import threading

import pytest

from netmeter import exceptions
from netmeter.exceptions import MissingHeaderError, OutOfOrderSampleError, TraceCorruptError, TraceUsageError
from netmeter.metrics import DelayBody, ErrorBody, MotionBody, RssiBody, ThroughputBody, decode_record
from netmeter.recorder import StreamSink, TraceRecorder, append_record, read_trace, write_trace
from netmeter.test_utils import build_trace, fixture_path, fixture_sidecar, list_fixtures, sample


@pytest.fixture(name='trace')
def fixture_trace():
	return build_trace([
		sample(0.0, MotionBody(linear_mps=0.0)),
		sample(0.0, RssiBody(rssi_dbm=-56.0, link_quality=54.0)),
		sample(0.1, RssiBody(rssi_dbm=-57.0), side='station', iface='iface3'),
		sample(1.0, ThroughputBody.of(9.0, 1.0, 750, 83)),
		sample(1.0, DelayBody.reply(12.5), iface='probe'),
		sample(2.0, DelayBody.timeout(), iface='probe'),
		sample(2.0, ErrorBody(retransmits_cum=15, rx_dropped_cum=2)),
	])


def _lines(path) -> list:
	with open(path) as trace_file:
		return trace_file.read().splitlines()


def test_append_three_records(tmp_path, trace):
	path = str(tmp_path / 'three.trace')
	with TraceRecorder(path) as recorder:
		recorder.write_header(trace.header)
		counts = [append_record(recorder, item) for item in trace.records[:3]]

	assert counts == [1, 2, 3]
	lines = _lines(path)
	assert len(lines) == 4
	assert [decode_record(line) for line in lines[1:]] == list(trace.records[:3])


def test_concurrent_producers(tmp_path, trace):
	path = str(tmp_path / 'concurrent.trace')

	def produce(recorder, side):
		for index in range(500):
			recorder.append(sample(index * 0.1, RssiBody(rssi_dbm=-50.0 - index % 40), side=side))

	with TraceRecorder(path) as recorder:
		recorder.write_header(trace.header)
		producers = [threading.Thread(target=produce, args=(recorder, side)) for side in ('robot', 'station')]
		for producer in producers:
			producer.start()
		for producer in producers:
			producer.join()

	loaded = read_trace(path)
	assert len(loaded.records) == 1000
	assert loaded.is_stream_ordered()


def test_recorder_usage_errors(tmp_path, trace):
	with TraceRecorder(str(tmp_path / 'usage.trace')) as recorder:
		with pytest.raises(TraceUsageError):
			recorder.append(trace.records[0])

		recorder.write_header(trace.header)
		with pytest.raises(TraceUsageError):
			recorder.write_header(trace.header)

		recorder.append(sample(2.0, RssiBody(rssi_dbm=-50.0)))
		with pytest.raises(OutOfOrderSampleError):
			recorder.append(sample(1.0, RssiBody(rssi_dbm=-50.0)))

		# another stream may still be behind
		recorder.append(sample(1.0, RssiBody(rssi_dbm=-50.0), side='station'))
		assert recorder.records_written == 2


def test_records_are_flushed_while_open(tmp_path, trace):
	path = str(tmp_path / 'flushed.trace')
	with TraceRecorder(path, fsync=True) as recorder:
		recorder.write_header(trace.header)
		recorder.append(trace.records[0])

		assert len(_lines(path)) == 2


def test_write_then_read_is_lossless(tmp_path, trace):
	path = write_trace(trace, str(tmp_path / 'round.trace'))
	loaded = read_trace(path)

	assert loaded == trace
	assert loaded.dropped_lines == 0


@pytest.mark.parametrize('name', list_fixtures('traces'))
def test_read_trace_fixtures(name):
	expected = fixture_sidecar('traces', name)
	path = fixture_path('traces', name)

	if 'error' in expected:
		with pytest.raises(getattr(exceptions, expected['error'])) as error:
			read_trace(path)
		assert error.value.line_number == expected['line_number']

		lenient = read_trace(path, strict=False)
		assert len(lenient.records) == expected['lenient_records']
		assert lenient.dropped_lines == expected['lenient_dropped']
		return

	loaded = read_trace(path)
	assert len(loaded.records) == expected['records']
	assert loaded.dropped_lines == expected.get('dropped', 0)
	assert loaded.unknown_lines == expected.get('unknown', 0)
	assert loaded.header.case.case_id == 3


def test_read_trace_without_header(tmp_path, trace):
	empty = tmp_path / 'empty.trace'
	empty.write_text('')
	headless = tmp_path / 'headless.trace'
	headless.write_text('{"ts_ns":0,"side":"robot","iface":"wlan0","type":"rssi","rssi_dbm":-50.0}\n')

	with pytest.raises(MissingHeaderError):
		read_trace(str(empty))
	with pytest.raises(MissingHeaderError):
		read_trace(str(headless))


def test_truncated_multibyte_final_line_is_dropped(tmp_path):
	records = [sample(second, RssiBody(rssi_dbm=-50.0 - second), iface='wlän0') for second in range(3)]
	path = write_trace(build_trace(records), str(tmp_path / 'cut.trace'))
	with open(path, 'rb') as trace_file:
		content = trace_file.read()

	# cut between the two bytes of the last 'ä'
	cut = content.rindex('ä'.encode('utf-8')) + 1
	with open(path, 'wb') as trace_file:
		trace_file.write(content[:cut])

	loaded = read_trace(path)

	assert [item.body.rssi_dbm for item in loaded.records] == [-50.0, -51.0]
	assert loaded.dropped_lines == 1


def test_invalid_bytes_mid_file_follow_strict_rule(tmp_path):
	records = [sample(second, RssiBody(rssi_dbm=-60.0), iface='wlän0') for second in range(3)]
	path = write_trace(build_trace(records), str(tmp_path / 'garbled.trace'))
	with open(path, 'rb') as trace_file:
		lines = trace_file.read().split(b'\n')
	lines[2] = lines[2].replace('ä'.encode('utf-8'), b'\xc3')
	with open(path, 'wb') as trace_file:
		trace_file.write(b'\n'.join(lines))

	with pytest.raises(TraceCorruptError) as error:
		read_trace(path)
	assert error.value.line_number == 3

	lenient = read_trace(path, strict=False)
	assert len(lenient.records) == 2
	assert lenient.dropped_lines == 1


def test_stream_sink_writes_lines(trace):
	stream = io.StringIO()
	sink = StreamSink(stream)
	for item in trace.records:
		sink.put(item)
	sink.flush()

	assert [decode_record(line) for line in stream.getvalue().splitlines()] == list(trace.records)
