import json
import math
from dataclasses import dataclass, fields
from enum import Enum
from typing import Dict, Optional, Union

import numpy as np
from loguru import logger

from netmeter.base_dataclass import BaseDataclassRecord
from netmeter.consts import ConfigConsts, Units
from netmeter.exceptions import DisconnectedLinkError, DistanceBelowReferenceError, NonPositiveDistanceError, NonPositiveRateError
from netmeter.utils import CheckUtils


class ChannelConsts(Enum):
	DEFAULT_D0_M = 1.0
	ETA_MIN = 1.5
	ETA_MAX = 6.0
	# below this modeled throughput the link counts as disconnected
	DISCONNECT_THROUGHPUT_MBPS = 1e-9
	MIN_M_SHAPE = 0.5
	LOG2_10 = math.log2(10)
	LN_2 = math.log(2)


@dataclass(frozen=True)
class TwoRayParams(BaseDataclassRecord):
	"""two ray ground reflection parameters

	:param p_t: transmit power, W
	:type  p_t: float
	:param g_t: transmit antenna gain
	:type  g_t: float
	:param g_r: receive antenna gain
	:type  g_r: float
	:param h_t: transmit antenna height, m
	:type  h_t: float
	:param h_r: receive antenna height, m
	:type  h_r: float

	"""
	p_t: float
	g_t: float
	g_r: float
	h_t: float
	h_r: float

	@logger.catch(reraise=True)
	def __post_init__(self):
		for item in fields(self):
			CheckUtils.check_is_positive(getattr(self, item.name), name=item.name)


@dataclass(frozen=True)
class PathLossParams(BaseDataclassRecord):
	"""log distance path loss parameters

	:param rss_d0_dbm: received signal at the reference distance, dBm
	:type  rss_d0_dbm: float
	:param eta: path loss exponent
	:type  eta: float
	:param d0_m: reference distance, m
	:type  d0_m: float
	:param eta_min: lower bound of the plausible exponent range (warning only)
	:type  eta_min: float
	:param eta_max: upper bound of the plausible exponent range (warning only)
	:type  eta_max: float

	"""
	rss_d0_dbm: float
	eta: float
	d0_m: float = ChannelConsts.DEFAULT_D0_M.value
	eta_min: float = ChannelConsts.ETA_MIN.value
	eta_max: float = ChannelConsts.ETA_MAX.value

	@logger.catch(reraise=True)
	def __post_init__(self):
		CheckUtils.check_is_finite(self.rss_d0_dbm, name='rss_d0_dbm')
		CheckUtils.check_is_positive(self.d0_m, name='d0_m')
		CheckUtils.check_is_positive(self.eta, name='eta')
		if not self.eta_min <= self.eta <= self.eta_max:
			logger.warning(f'path loss exponent {self.eta} is outside [{self.eta_min}, {self.eta_max}]')


@dataclass(frozen=True)
class ShadowingParams(BaseDataclassRecord):
	"""zero mean gaussian shadowing, dB

	:param sigma_db: standard deviation, dB
	:type  sigma_db: float
	:param decorrelation_m: (Optional) decorrelation distance; None draws shadowing independently per sample
	:type  decorrelation_m: float

	"""
	sigma_db: float
	decorrelation_m: Optional[float] = None

	@logger.catch(reraise=True)
	def __post_init__(self):
		CheckUtils.check_is_not_negative(self.sigma_db, name='sigma_db')
		CheckUtils.check_is_positive(self.decorrelation_m, name='decorrelation_m', optional=True)


@dataclass(frozen=True)
class MultipathParams(BaseDataclassRecord):
	"""nakagami-m multipath fading

	:param m_shape: nakagami shape, 1 is rayleigh
	:type  m_shape: float
	:param omega_spread: mean power
	:type  omega_spread: float
	:param enabled: apply multipath fading
	:type  enabled: bool

	"""
	m_shape: float = 1.0
	omega_spread: float = 1.0
	enabled: bool = True

	@logger.catch(reraise=True)
	def __post_init__(self):
		if not self.m_shape >= ChannelConsts.MIN_M_SHAPE.value:
			raise ValueError(f'm_shape must be >= {ChannelConsts.MIN_M_SHAPE.value}, got {self.m_shape}')
		CheckUtils.check_is_positive(self.omega_spread, name='omega_spread')


@dataclass(frozen=True)
class LinkParams(BaseDataclassRecord):
	"""link capacity, throughput and delay parameters

	:param b_mhz: channel bandwidth, MHz
	:type  b_mhz: float
	:param pn_dbm: noise power, dBm
	:type  pn_dbm: float
	:param alpha_t: achieved fraction of capacity, (0, 1]
	:type  alpha_t: float
	:param l_bits: packet length, bits
	:type  l_bits: float

	"""
	b_mhz: float
	pn_dbm: float
	alpha_t: float
	l_bits: float

	@logger.catch(reraise=True)
	def __post_init__(self):
		CheckUtils.check_is_positive(self.b_mhz, name='b_mhz')
		CheckUtils.check_is_finite(self.pn_dbm, name='pn_dbm')
		if not 0 < self.alpha_t <= 1:
			raise ValueError(f'alpha_t must be in (0, 1], got {self.alpha_t}')
		CheckUtils.check_is_not_negative(self.l_bits, name='l_bits')


@dataclass(frozen=True)
class ChannelParams(BaseDataclassRecord):
	"""full radio model parameter set"""
	path_loss: PathLossParams
	shadowing: ShadowingParams
	multipath: MultipathParams
	link: LinkParams
	two_ray: Optional[TwoRayParams] = None


# fields that may be omitted from a config file's channel block
OPTIONAL_CONFIG_FIELDS = {'two_ray', 'decorrelation_m', 'eta_min', 'eta_max'}


def two_ray_power(p: TwoRayParams, d_m: float) -> float:
	"""received power in watts at distance d_m over a two ray ground reflection path"""
	if not d_m > 0:
		raise NonPositiveDistanceError(f'distance must be > 0, got {d_m}')

	return p.p_t * p.g_t * p.g_r * p.h_t ** 2 * p.h_r ** 2 / d_m ** 4


def dbm_to_watts(power_dbm: float) -> float:
	return 10 ** ((power_dbm - 30) / 10)


def watts_to_dbm(power_w: float) -> float:
	if not power_w > 0:
		raise ValueError(f'power must be > 0, got {power_w}')

	return 10 * math.log10(power_w) + 30


def mean_rssi(p: PathLossParams, d_m: float) -> float:
	"""deterministic log distance RSSI, dBm"""
	if not d_m >= p.d0_m:
		raise DistanceBelowReferenceError(f'distance {d_m} m is below the reference distance {p.d0_m} m')

	return p.rss_d0_dbm - 10 * p.eta * math.log10(d_m / p.d0_m)


def distance_for_rssi(p: PathLossParams, rssi_dbm: float) -> float:
	"""distance at which the mean RSSI falls to rssi_dbm; never below d0"""
	if rssi_dbm >= p.rss_d0_dbm:
		return p.d0_m

	return p.d0_m * 10 ** ((p.rss_d0_dbm - rssi_dbm) / (10 * p.eta))


def nakagami_power(mp: MultipathParams, rng: np.random.Generator, size=None):
	"""instantaneous power of a nakagami-m amplitude, i.e. Gamma(m, omega / m)"""
	return rng.gamma(shape=mp.m_shape, scale=mp.omega_spread / mp.m_shape, size=size)


def multipath_attenuation_db(mp: MultipathParams, rng: np.random.Generator) -> float:
	power = max(float(nakagami_power(mp, rng)), np.finfo(float).tiny)

	return -10 * math.log10(power / mp.omega_spread)


def sample_rssi(p: PathLossParams,
	s: ShadowingParams,
	mp: MultipathParams,
	d_m: float,
	rng: np.random.Generator,
	shadowing_db: Optional[float] = None) -> float:
	"""RSSI with shadowing and multipath drawn from rng, dBm

	Draw order is shadowing then multipath. A precomputed shadowing_db (see ShadowingProcess)
	replaces the independent shadowing draw.
	"""
	rssi = mean_rssi(p, d_m)

	if shadowing_db is None:
		shadowing_db = float(rng.normal(0.0, s.sigma_db)) if s.sigma_db > 0 else 0.0

	fading_db = multipath_attenuation_db(mp, rng) if mp.enabled else 0.0

	return rssi - shadowing_db - fading_db


class ShadowingProcess:

	def __init__(self, params: ShadowingParams, rng: np.random.Generator):
		"""shadowing draws, first order autocorrelated over travelled distance when a decorrelation distance is set

		Args:
			params (ShadowingParams): shadowing parameters.
			rng (np.random.Generator): random stream owned by the caller.
		"""
		self.params = params
		self.rng = rng
		self._last = None

	def draw(self, displacement_m: float = 0.0, sigma_db: Optional[float] = None) -> float:
		sigma_db = self.params.sigma_db if sigma_db is None else sigma_db
		if sigma_db <= 0:
			self._last = 0.0
			return 0.0

		innovation = float(self.rng.normal(0.0, sigma_db))
		if self.params.decorrelation_m is None or self._last is None:
			self._last = innovation
			return innovation

		rho = math.exp(-abs(displacement_m) / self.params.decorrelation_m)
		self._last = rho * self._last + math.sqrt(1 - rho ** 2) * innovation

		return self._last


def channel_capacity(lp: LinkParams, rssi_dbm: float) -> float:
	"""shannon capacity in Mbps for a bandwidth in MHz"""
	snr_db = rssi_dbm - lp.pn_dbm
	if snr_db > 0:
		# log2(1 + x) = log2(x) + log2(1 + 1/x), avoids overflow at very high SNR
		bits = snr_db / 10 * ChannelConsts.LOG2_10.value + math.log1p(10 ** (-snr_db / 10)) / ChannelConsts.LN_2.value
	else:
		bits = math.log1p(10 ** (snr_db / 10)) / ChannelConsts.LN_2.value

	return lp.b_mhz * bits


def model_throughput(lp: LinkParams, rssi_dbm: float) -> float:
	return lp.alpha_t * channel_capacity(lp, rssi_dbm)


def transmission_delay(l_bits: float, rate_mbps: float) -> float:
	"""time to put l_bits on a link of rate_mbps, in ms"""
	if not rate_mbps > 0:
		raise NonPositiveRateError(f'rate must be > 0, got {rate_mbps}')

	return l_bits / (rate_mbps * Units.KBITS_PER_MEGABIT.value)


def model_delay(lp: LinkParams, rssi_dbm: float) -> float:
	throughput = model_throughput(lp, rssi_dbm)
	if throughput < ChannelConsts.DISCONNECT_THROUGHPUT_MBPS.value:
		raise DisconnectedLinkError(f'modeled throughput {throughput} Mbps at {rssi_dbm} dBm counts as disconnected')

	return transmission_delay(lp.l_bits, throughput)


def _check_required(section: str, data_class, record: Dict) -> None:
	missing = [item.name for item in fields(data_class) if item.name not in record and item.name not in OPTIONAL_CONFIG_FIELDS]
	if missing:
		prefix = f'channel.{section}' if section else 'channel'
		raise ValueError(f'{prefix} is missing {missing}')


def channel_params_from_dict(record: Dict) -> ChannelParams:
	"""builds ChannelParams from a config 'channel' block; every field is mandatory except the optional ones"""
	_check_required('', ChannelParams, record)
	sections = {'path_loss': PathLossParams, 'shadowing': ShadowingParams, 'multipath': MultipathParams, 'link': LinkParams}
	for section, data_class in sections.items():
		_check_required(section, data_class, record[section])

	return ChannelParams.from_dict(record)


def load_channel_params(source: Union[str, Dict]) -> ChannelParams:
	"""loads ChannelParams from a config file path or an already parsed config object"""
	if isinstance(source, str):
		with open(source) as config_file:
			source = json.load(config_file)

	try:
		record = source[ConfigConsts.CHANNEL.value]
	except KeyError:
		raise ValueError(f'config has no {ConfigConsts.CHANNEL.value!r} block')

	return channel_params_from_dict(record)
