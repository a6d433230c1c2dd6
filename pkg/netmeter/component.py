import threading
import time
from typing import Optional, Protocol

from loguru import logger

from netmeter.metrics import Body, MetricSample


class SampleSink(Protocol):

	def put(self, sample: MetricSample) -> None:
		...

	def flush(self) -> None:
		...


class MonotonicClock:

	@staticmethod
	def monotonic_ns() -> int:
		return time.monotonic_ns()

	@staticmethod
	def wait(stop_event: threading.Event, seconds: float) -> bool:
		"""sleeps up to seconds; returns True when a stop was requested"""
		return stop_event.wait(timeout=max(seconds, 0.0))


class NetmeterComponent:

	def __init__(self, clock: Optional[MonotonicClock] = None, session_start_ns: Optional[int] = None):
		"""netmeter base class for long running samplers

		Args:
			clock (MonotonicClock): time source; tests pass a synthetic clock
			session_start_ns (int): shared session anchor, so several components stamp on one timeline
		"""
		self.clock = clock or MonotonicClock()
		self.session_start_ns = session_start_ns
		self._stop_event = threading.Event()

	def stop(self) -> None:
		logger.debug(f'stop requested for {type(self).__name__}')
		self._stop_event.set()

	@property
	def stopped(self) -> bool:
		return self._stop_event.is_set()

	def _start_session(self) -> int:
		if self.session_start_ns is None:
			self.session_start_ns = self.clock.monotonic_ns()

		return self.session_start_ns

	def _elapsed_ns(self, now_ns: Optional[int] = None) -> int:
		now_ns = self.clock.monotonic_ns() if now_ns is None else now_ns

		return max(now_ns - self.session_start_ns, 0)

	def _wait(self, seconds: float) -> bool:
		return self.clock.wait(self._stop_event, seconds)

	def _emit(self, sink: SampleSink, side: str, iface: str, body: Body, now_ns: Optional[int] = None) -> MetricSample:
		sample = MetricSample(ts_ns=self._elapsed_ns(now_ns), side=side, iface=iface, body=body)
		logger.trace(f'{type(self).__name__} emitted {sample}')
		sink.put(sample)

		return sample
