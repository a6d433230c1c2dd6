import csv
import io
import json
from dataclasses import replace

import numpy as np
import pytest

from netmeter.analyzer import (MotionFilter, SummaryRow, compare_cases, load_static_intervals, render_csv, render_json, render_table, static_vs_moving,
	summarize)
from netmeter.exceptions import EmptyAfterFilterError, NoMotionDataError, UnsupportedMotionMode
from netmeter.metrics import DelayBody, ErrorBody, MotionBody, RssiBody, ThroughputBody
from netmeter.test_utils import build_trace, sample

# throughput means of the 2.4 GHz reference cases
TABLE_THROUGHPUT = {1: 12.8, 3: 19.1, 5: 13.1, 7: 50.2, 9: 35.9}


def _throughput_row(case_id: int, throughput: float, band: str = 'band_2g4', **values) -> SummaryRow:
	return SummaryRow(label=f'case-{case_id}', case_id=case_id, band=band, baseline=case_id in (1, 2), throughput_mean_mbps=throughput, **values)


def _concatenate(trace, epoch_shift: int = 0):
	offset = max(item.ts_ns for item in trace.records) + 1_000_000_000
	second = []
	for item in trace.records:
		body = item.body
		if isinstance(body, ErrorBody):
			body = replace(body, epoch=body.epoch + epoch_shift)
		second.append(replace(item, ts_ns=item.ts_ns + offset, body=body))

	return replace(trace, records=trace.records + tuple(second))


@pytest.fixture(name='session')
def fixture_session():
	rng = np.random.default_rng(8)
	records = []
	for second in range(60):
		records.append(sample(second, RssiBody(rssi_dbm=float(rng.uniform(-80, -40))), side='station', iface='iface3'))
		records.append(sample(second, ThroughputBody.of(float(rng.uniform(5, 50)), float(rng.uniform(0, 5)))))
		delay = DelayBody.timeout() if second % 7 == 0 else DelayBody.reply(float(rng.uniform(2, 40)))
		records.append(sample(second, delay, iface='probe'))
		records.append(sample(second, ErrorBody(retransmits_cum=100 + 3 * second)))

	return build_trace(records)


def test_throughput_mean_and_std():
	trace = build_trace([sample(index, ThroughputBody.of(value, 0.0)) for index, value in enumerate((10.0, 20.0, 30.0))])

	row = summarize(trace)

	assert row.throughput_mean_mbps == pytest.approx(20.0)
	assert row.throughput_std_mbps == pytest.approx(10.0)
	assert row.sample_counts == {'throughput': 3}


def test_constant_delay():
	row = summarize(build_trace([sample(index, DelayBody.reply(12.0), iface='probe') for index in range(20)]))

	assert row.delay_mean_ms == 12.0
	assert row.delay_std_ms == 0.0
	assert row.loss_pct == 0.0


def test_single_sample_has_zero_std():
	row = summarize(build_trace([sample(0, ThroughputBody.of(3.0, 1.0))]))

	assert row.throughput_std_mbps == 0.0


def test_loss_percentage():
	delays = [DelayBody.timeout() if index % 125 < 12 else DelayBody.reply(5.0) for index in range(1000)]

	row = summarize(build_trace([sample(index * 0.1, body, iface='probe') for index, body in enumerate(delays)]))

	assert sum(body.timed_out for body in delays) == 96
	assert row.loss_pct == pytest.approx(9.6)


def test_sentinels_do_not_move_delay_statistics():
	replies = [sample(index, DelayBody.reply(value), iface='probe') for index, value in enumerate((4.0, 9.5, 30.0, 12.25))]
	with_timeouts = replies + [sample(10 + index, DelayBody.timeout(), iface='probe') for index in range(5)]

	plain = summarize(build_trace(replies))
	lossy = summarize(build_trace(with_timeouts))

	assert lossy.delay_mean_ms == plain.delay_mean_ms
	assert lossy.delay_std_ms == plain.delay_std_ms
	assert lossy.loss_pct == pytest.approx(500 / 9)


def test_retransmits_are_session_deltas(session):
	assert summarize(session).retransmits_cum == 3 * 59


def test_retransmits_sum_across_epochs():
	errors = [ErrorBody(retransmits_cum=value, epoch=epoch) for value, epoch in ((100, 0), (130, 0), (5, 1), (25, 1))]

	row = summarize(build_trace([sample(index, body) for index, body in enumerate(errors)]))

	assert row.retransmits_cum == 30 + 20


def test_retransmits_carry_across_an_epoch_opened_by_another_counter():
	# the epoch 1 marker came from an rx_bytes reset; the retransmit counter kept rising
	errors = [ErrorBody(retransmits_cum=value, epoch=epoch) for value, epoch in ((100, 0), (110, 0), (120, 1), (130, 1))]

	row = summarize(build_trace([sample(index, body) for index, body in enumerate(errors)]))

	assert row.retransmits_cum == 30


def test_retransmits_are_tracked_per_side():
	records = []
	for second in range(5):
		records.append(sample(second, ErrorBody(retransmits_cum=1000 + 10 * second)))
		records.append(sample(second, ErrorBody(retransmits_cum=7 + second), side='station', iface='iface3'))

	assert summarize(build_trace(records)).retransmits_cum == 40 + 4
	assert summarize(build_trace(records), side='station').retransmits_cum == 4


def test_retransmits_follow_the_motion_filter():
	records = [sample(0, MotionBody(linear_mps=0.0)), sample(3, MotionBody(linear_mps=1.0))]
	records += [sample(second, ErrorBody(retransmits_cum=100 + second * second)) for second in range(6)]

	static_row, moving_row = static_vs_moving(build_trace(records))

	# 0, 1, 4 while parked, then 9, 16, 25
	assert static_row.retransmits_cum == 4
	assert moving_row.retransmits_cum == 21


def test_self_concatenation_keeps_means_and_loss(session):
	single = summarize(session)
	same_epoch = summarize(_concatenate(session))
	chained = summarize(_concatenate(session, epoch_shift=1))

	for row in (same_epoch, chained):
		assert row.throughput_mean_mbps == pytest.approx(single.throughput_mean_mbps)
		assert row.delay_mean_ms == pytest.approx(single.delay_mean_ms)
		assert row.rssi_station_mean_dbm == pytest.approx(single.rssi_station_mean_dbm)
		assert row.loss_pct == pytest.approx(single.loss_pct)

	assert same_epoch.retransmits_cum == single.retransmits_cum
	assert chained.retransmits_cum == 2 * single.retransmits_cum


def test_missing_side_is_absent(session):
	row = summarize(session)

	assert row.rssi_robot_mean_dbm is None
	assert row.rssi_robot_std_db is None
	assert row.rssi_station_mean_dbm is not None


def test_side_filter_keeps_rssi(session):
	row = summarize(session, side='station')

	assert row.throughput_mean_mbps is None
	assert row.rssi_station_mean_dbm == summarize(session).rssi_station_mean_dbm


def test_nothing_left_after_filter():
	with pytest.raises(EmptyAfterFilterError):
		summarize(build_trace([]))
	with pytest.raises(EmptyAfterFilterError):
		summarize(build_trace([sample(0, MotionBody(linear_mps=0.5)), sample(1, ThroughputBody.of(1.0, 1.0))]), MotionFilter('static_only'))


def _moving_trace():
	records = []
	for second in range(20):
		moving = 5 <= second < 15
		records.append(sample(second, MotionBody(linear_mps=0.5 if moving else 0.0)))
		records.append(sample(second + 0.5, ThroughputBody.of(10.0 if moving else 40.0, 0.0)))
		records.append(sample(second + 0.5, DelayBody.reply(20.0 if moving else 5.0), iface='probe'))

	return build_trace(records)


def test_motion_filter_partitions_the_trace():
	trace = _moving_trace()

	static = summarize(trace, MotionFilter('static_only'))
	moving = summarize(trace, MotionFilter('moving_only'))
	everything = summarize(trace)

	assert static.throughput_mean_mbps == 40.0
	assert moving.throughput_mean_mbps == 10.0
	assert static.sample_counts['throughput'] + moving.sample_counts['throughput'] == everything.sample_counts['throughput']


def test_samples_before_first_motion_record_take_its_state():
	trace = build_trace([sample(0.0, ThroughputBody.of(1.0, 0.0)), sample(1.0, MotionBody(linear_mps=0.0)), sample(2.0, ThroughputBody.of(3.0, 0.0))])

	assert summarize(trace, MotionFilter('static_only')).sample_counts['throughput'] == 2


def test_static_intervals_override_motion_records():
	trace = _moving_trace()
	intervals = ((0, 5_000_000_000),)

	static = summarize(trace, MotionFilter('static_only', static_intervals=intervals))

	assert static.sample_counts['throughput'] == 5


def test_motion_filter_validation():
	with pytest.raises(UnsupportedMotionMode):
		MotionFilter('sometimes')
	with pytest.raises(ValueError):
		MotionFilter('static_only', static_intervals=((5, 5),))

	assert MotionFilter(static_intervals=((30, 40), (0, 10))).static_intervals == ((0, 10), (30, 40))


def test_static_vs_moving():
	static, moving = static_vs_moving(_moving_trace())

	assert static.label == 'case-3 static'
	assert static.delay_mean_ms < moving.delay_mean_ms
	assert static.throughput_mean_mbps > moving.throughput_mean_mbps


def test_static_vs_moving_needs_motion_data(session):
	always_moving = build_trace([sample(0, MotionBody(linear_mps=1.0)), sample(1, ThroughputBody.of(1.0, 0.0))])
	never_moving = build_trace([sample(0, MotionBody(linear_mps=0.0)), sample(1, ThroughputBody.of(1.0, 0.0))])

	with pytest.raises(NoMotionDataError):
		static_vs_moving(session)
	with pytest.raises(NoMotionDataError):
		static_vs_moving(always_moving)
	with pytest.raises(EmptyAfterFilterError):
		static_vs_moving(never_moving)


def test_best_throughput_excludes_baseline():
	rows = [_throughput_row(case_id, value) for case_id, value in TABLE_THROUGHPUT.items()]

	table = compare_cases(rows)

	flagged = [row.throughput_mean_mbps for index, row in enumerate(table.rows) if table.is_best(index, 'throughput_mean_mbps')]
	assert flagged == [50.2]


def test_baseline_alone_is_flagged():
	table = compare_cases([_throughput_row(1, 12.8)])

	assert table.is_best(0, 'throughput_mean_mbps')


def test_single_row_is_best_wherever_it_has_values():
	table = compare_cases([_throughput_row(3, 19.1, delay_mean_ms=4.0, loss_pct=9.6)])

	assert table.best[0] == frozenset({'throughput_mean_mbps', 'delay_mean_ms', 'loss_pct'})


def test_ties_flag_every_tied_row():
	rows = [_throughput_row(3, 20.0, loss_pct=1.0), _throughput_row(5, 20.0, loss_pct=0.5), _throughput_row(7, 10.0, loss_pct=0.5)]

	table = compare_cases(rows)

	assert [table.is_best(index, 'throughput_mean_mbps') for index in range(3)] == [True, True, False]
	assert [table.is_best(index, 'loss_pct') for index in range(3)] == [False, True, True]


def test_bands_are_compared_separately():
	rows = [_throughput_row(3, 19.1), _throughput_row(4, 80.0, band='band_5g8'), _throughput_row(7, 50.2)]

	grouped = compare_cases(rows)
	together = compare_cases(rows, group_by_band=False)

	assert [grouped.is_best(index, 'throughput_mean_mbps') for index in range(3)] == [False, True, True]
	assert [together.is_best(index, 'throughput_mean_mbps') for index in range(3)] == [False, True, False]


def test_flags_survive_reordering():
	rng = np.random.default_rng(21)
	rows = [_throughput_row(case_id, value, delay_mean_ms=float(rng.uniform(1, 20))) for case_id, value in TABLE_THROUGHPUT.items()]
	reference = compare_cases(rows)
	flags = {row.label: reference.best[index] for index, row in enumerate(rows)}

	for _ in range(10):
		order = rng.permutation(len(rows))
		shuffled = compare_cases([rows[index] for index in order])
		assert {row.label: shuffled.best[index] for index, row in enumerate(shuffled.rows)} == flags


def test_compare_needs_rows():
	with pytest.raises(ValueError):
		compare_cases([])


def test_render_table():
	rows = [_throughput_row(case_id, value) for case_id, value in TABLE_THROUGHPUT.items()]

	text = render_table(compare_cases(rows))
	lines = text.splitlines()

	assert lines[0].startswith('Case')
	assert len(lines) == 6
	assert '50.2*' in text
	assert '12.8*' not in text
	assert 'N/A' in lines[1]
	assert len({len(line) for line in lines}) <= 2


def test_render_csv_and_json(session):
	row = summarize(session, label='session')
	table = compare_cases([row])

	parsed = list(csv.DictReader(io.StringIO(render_csv(table))))
	assert parsed[0]['label'] == 'session'
	assert parsed[0]['rssi_robot_mean_dbm'] == ''
	assert 'throughput_mean_mbps' in parsed[0]['best'].split()

	record = json.loads(render_json(table).splitlines()[0])
	assert record['label'] == 'session'
	assert record['rssi_robot_mean_dbm'] is None
	assert record['loss_pct'] == pytest.approx(row.loss_pct)
	assert SummaryRow.from_dict(record) == row


def test_load_static_intervals(tmp_path):
	sidecar = tmp_path / 'static.txt'
	sidecar.write_text('# parked phases\n60 90\n0 30.5  # start\n\n')

	assert load_static_intervals(str(sidecar)) == ((0, 30_500_000_000), (60_000_000_000, 90_000_000_000))

	sidecar.write_text('10\n')
	with pytest.raises(ValueError):
		load_static_intervals(str(sidecar))
