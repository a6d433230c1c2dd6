import json
import math
from decimal import Decimal, localcontext

import numpy as np
import pytest
from scipy import stats

from netmeter.channel import (ChannelParams, LinkParams, MultipathParams, PathLossParams, ShadowingParams, ShadowingProcess, TwoRayParams,
	channel_capacity, channel_params_from_dict, dbm_to_watts, distance_for_rssi, load_channel_params, mean_rssi, model_delay, model_throughput,
	nakagami_power, sample_rssi, transmission_delay, two_ray_power, watts_to_dbm)
from netmeter.exceptions import DisconnectedLinkError, DistanceBelowReferenceError, NonPositiveDistanceError, NonPositiveRateError

CHANNEL_BLOCK = {
	'path_loss': {'rss_d0_dbm': -40.0, 'eta': 3.0, 'd0_m': 1.0},
	'shadowing': {'sigma_db': 4.0},
	'multipath': {'m_shape': 1.0, 'omega_spread': 1.0, 'enabled': True},
	'link': {'b_mhz': 20.0, 'pn_dbm': -90.0, 'alpha_t': 0.5, 'l_bits': 12000.0},
}


@pytest.fixture(name='link')
def fixture_link():
	return LinkParams(b_mhz=20.0, pn_dbm=-90.0, alpha_t=0.5, l_bits=1e6)


def _capacity_oracle(b_mhz: float, pn_dbm: float, rssi_dbm: float) -> Decimal:
	with localcontext() as context:
		context.prec = 50
		snr = Decimal(10) ** ((Decimal(rssi_dbm) - Decimal(pn_dbm)) / 10)
		return Decimal(b_mhz) * (1 + snr).ln() / Decimal(2).ln()


def test_two_ray_unit_and_inverse_fourth_power():
	unit = TwoRayParams(p_t=1.0, g_t=1.0, g_r=1.0, h_t=1.0, h_r=1.0)

	assert two_ray_power(unit, 1.0) == 1.0
	assert two_ray_power(unit, 2.0) == pytest.approx(two_ray_power(unit, 1.0) / 16, rel=1e-12)
	assert two_ray_power(TwoRayParams(p_t=0.1, g_t=2.0, g_r=2.0, h_t=1.0, h_r=1.0), 10.0) == pytest.approx(4.0e-5, rel=1e-12)


@pytest.mark.parametrize('d_m', [0.0, -1.0])
def test_two_ray_rejects_non_positive_distance(d_m):
	with pytest.raises(NonPositiveDistanceError):
		two_ray_power(TwoRayParams(p_t=1.0, g_t=1.0, g_r=1.0, h_t=1.0, h_r=1.0), d_m)


def test_power_unit_conversion():
	assert dbm_to_watts(30.0) == pytest.approx(1.0)
	assert watts_to_dbm(1e-3) == pytest.approx(0.0, abs=1e-12)
	with pytest.raises(ValueError):
		watts_to_dbm(0.0)


@pytest.mark.parametrize('eta, d_m, expected', [
	(2.0, 1.0, -40.0),
	(2.0, 10.0, -60.0),
	(3.0, 100.0, -100.0),
])
def test_mean_rssi(eta, d_m, expected):
	assert mean_rssi(PathLossParams(rss_d0_dbm=-40.0, eta=eta), d_m) == pytest.approx(expected, abs=1e-9)


def test_mean_rssi_below_reference_distance():
	with pytest.raises(DistanceBelowReferenceError):
		mean_rssi(PathLossParams(rss_d0_dbm=-40.0, eta=2.0, d0_m=1.0), 0.5)


def test_mean_rssi_monotone_in_distance():
	rng = np.random.default_rng(3)
	for _ in range(10_000):
		params = PathLossParams(rss_d0_dbm=float(rng.uniform(-60, -20)), eta=float(rng.uniform(1.5, 6.0)), d0_m=float(rng.uniform(0.5, 2.0)))
		near, far = sorted(rng.uniform(params.d0_m, 500.0, size=2))
		assert mean_rssi(params, far) < mean_rssi(params, near)


def test_distance_for_rssi_inverts_mean_rssi():
	params = PathLossParams(rss_d0_dbm=-40.0, eta=3.0)

	assert mean_rssi(params, distance_for_rssi(params, -70.0)) == pytest.approx(-70.0)
	assert distance_for_rssi(params, -10.0) == params.d0_m


def test_sample_rssi_without_randomness_is_the_mean():
	path_loss = PathLossParams(rss_d0_dbm=-40.0, eta=3.0)
	rng = np.random.default_rng(0)

	value = sample_rssi(path_loss, ShadowingParams(sigma_db=0.0), MultipathParams(enabled=False), 25.0, rng)

	assert value == mean_rssi(path_loss, 25.0)


def test_sample_rssi_same_seed_same_value():
	args = (PathLossParams(rss_d0_dbm=-40.0, eta=3.0), ShadowingParams(sigma_db=4.0), MultipathParams(), 12.0)

	assert sample_rssi(*args, np.random.default_rng(42)) == sample_rssi(*args, np.random.default_rng(42))


def test_shadowing_statistics():
	path_loss = PathLossParams(rss_d0_dbm=-40.0, eta=3.0)
	rng = np.random.default_rng(2024)
	mean = mean_rssi(path_loss, 10.0)

	values = np.array([sample_rssi(path_loss, ShadowingParams(sigma_db=4.0), MultipathParams(enabled=False), 10.0, rng) for _ in range(100_000)])

	assert abs(values.mean() - mean) < 3 * 4.0 / math.sqrt(values.size)
	assert values.std(ddof=1) == pytest.approx(4.0, rel=0.02)


def test_rayleigh_power_is_exponential():
	draws = nakagami_power(MultipathParams(m_shape=1.0, omega_spread=1.0), np.random.default_rng(7), size=100_000)

	assert stats.kstest(draws, 'expon').pvalue > 0.01


def test_shadowing_process_correlation():
	correlated = ShadowingProcess(ShadowingParams(sigma_db=4.0, decorrelation_m=10.0), np.random.default_rng(5))
	independent = ShadowingProcess(ShadowingParams(sigma_db=4.0), np.random.default_rng(5))

	first = correlated.draw()
	assert correlated.draw(displacement_m=0.0) == first
	assert independent.draw() != independent.draw()
	assert ShadowingProcess(ShadowingParams(sigma_db=0.0), np.random.default_rng(5)).draw() == 0.0


def test_capacity_at_zero_snr_is_bandwidth(link):
	assert channel_capacity(link, -90.0) == pytest.approx(link.b_mhz, rel=1e-12)


def test_capacity_examples(link):
	assert channel_capacity(link, -60.0) == pytest.approx(20.0 * math.log2(1 + 10 ** 3), rel=1e-12)
	assert channel_capacity(link, -60.0) == pytest.approx(199.34, abs=0.01)
	assert channel_capacity(link, -150.0) < 1e-3 * link.b_mhz


def test_capacity_monotone_in_rssi_and_bandwidth():
	rng = np.random.default_rng(11)
	for _ in range(10_000):
		narrow = LinkParams(b_mhz=float(rng.uniform(1, 80)), pn_dbm=float(rng.uniform(-100, -80)), alpha_t=float(rng.uniform(0.05, 1.0)), l_bits=12000.0)
		wide = LinkParams(b_mhz=narrow.b_mhz * 2, pn_dbm=narrow.pn_dbm, alpha_t=narrow.alpha_t, l_bits=12000.0)
		weak, strong = sorted(rng.uniform(-120, 0, size=2))
		assert channel_capacity(narrow, weak) < channel_capacity(narrow, strong)
		assert model_throughput(narrow, weak) < model_throughput(narrow, strong)
		assert channel_capacity(narrow, strong) < channel_capacity(wide, strong)


def test_capacity_matches_high_precision_evaluation():
	rng = np.random.default_rng(23)
	for _ in range(1_000):
		b_mhz, pn_dbm, rssi_dbm = float(rng.uniform(1, 160)), float(rng.uniform(-100, -80)), float(rng.uniform(-130, 0))
		link = LinkParams(b_mhz=b_mhz, pn_dbm=pn_dbm, alpha_t=1.0, l_bits=12000.0)
		assert channel_capacity(link, rssi_dbm) == pytest.approx(float(_capacity_oracle(b_mhz, pn_dbm, rssi_dbm)), rel=1e-12)


def test_model_throughput(link):
	assert model_throughput(link, -60.0) == pytest.approx(99.67, abs=0.01)

	full = LinkParams(b_mhz=20.0, pn_dbm=-90.0, alpha_t=1.0, l_bits=1e6)
	assert model_throughput(full, -60.0) == channel_capacity(full, -60.0)


@pytest.mark.parametrize('alpha_t', [0.0, 1.5, -0.2])
def test_alpha_out_of_range(alpha_t):
	with pytest.raises(ValueError):
		LinkParams(b_mhz=20.0, pn_dbm=-90.0, alpha_t=alpha_t, l_bits=12000.0)


def test_transmission_delay():
	assert transmission_delay(0, 54.0) == 0.0
	assert transmission_delay(1e6, 1.0) == pytest.approx(1000.0)
	assert transmission_delay(12000, 54.0) == pytest.approx(0.2222, abs=1e-4)
	with pytest.raises(NonPositiveRateError):
		transmission_delay(12000, 0.0)


def test_model_delay_examples(link):
	assert model_delay(LinkParams(b_mhz=20.0, pn_dbm=-90.0, alpha_t=1.0, l_bits=20000.0), -90.0) == pytest.approx(1.0)
	assert model_delay(LinkParams(b_mhz=20.0, pn_dbm=-90.0, alpha_t=1.0, l_bits=1e6), -60.0) == pytest.approx(5.016, abs=1e-3)
	with pytest.raises(DisconnectedLinkError):
		model_delay(link, -390.0)


def test_delay_times_throughput_is_packet_length():
	rng = np.random.default_rng(17)
	for _ in range(10_000):
		params = LinkParams(b_mhz=float(rng.uniform(1, 160)), pn_dbm=-90.0, alpha_t=float(rng.uniform(0.05, 1.0)), l_bits=float(rng.uniform(1, 1e5)))
		rssi = float(rng.uniform(-100, 0))
		assert model_delay(params, rssi) * model_throughput(params, rssi) * 1000 == pytest.approx(params.l_bits, rel=1e-6)


def test_delay_matches_high_precision_evaluation():
	rng = np.random.default_rng(29)
	for _ in range(1_000):
		params = LinkParams(b_mhz=float(rng.uniform(1, 160)),
			pn_dbm=float(rng.uniform(-100, -80)),
			alpha_t=float(rng.uniform(0.05, 1.0)),
			l_bits=float(rng.uniform(1, 1e5)))
		rssi = float(rng.uniform(-110, 0))
		with localcontext() as context:
			context.prec = 50
			expected = Decimal(params.l_bits) / (Decimal(params.alpha_t) * _capacity_oracle(params.b_mhz, params.pn_dbm, rssi) * 1000)
		assert model_delay(params, rssi) == pytest.approx(float(expected), rel=1e-9)


def test_delay_monotone_in_rssi():
	rng = np.random.default_rng(19)
	params = LinkParams(b_mhz=20.0, pn_dbm=-90.0, alpha_t=0.65, l_bits=12000.0)
	for _ in range(10_000):
		weak, strong = sorted(rng.uniform(-110, 0, size=2))
		assert model_delay(params, weak) > model_delay(params, strong)


def test_load_channel_params(tmp_path):
	config_path = tmp_path / 'netmeter.json'
	config_path.write_text(json.dumps({'channel': CHANNEL_BLOCK}))

	params = load_channel_params(str(config_path))

	assert isinstance(params, ChannelParams)
	assert params.path_loss.eta == 3.0
	assert params.shadowing.decorrelation_m is None
	assert params.two_ray is None
	assert load_channel_params({'channel': CHANNEL_BLOCK}) == params


def test_channel_block_requires_every_field():
	block = json.loads(json.dumps(CHANNEL_BLOCK))
	del block['link']['pn_dbm']

	with pytest.raises(ValueError, match='pn_dbm'):
		channel_params_from_dict(block)
	with pytest.raises(ValueError):
		load_channel_params({'collector': {}})
