import socket
import socketserver
import struct
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Optional, Tuple

from loguru import logger

from netmeter.base_dataclass import BaseDataclassRecord
from netmeter.component import MonotonicClock, NetmeterComponent, SampleSink
from netmeter.consts import Side, Units
from netmeter.exceptions import (BadFrameKindError, BadMagicError, BadVersionError, BindError, EndpointResolutionError, OversizePayloadError,
	ProbeFrameError, TruncatedFrameError, UnsupportedSide)
from netmeter.metrics import DelayBody
from netmeter.utils import CheckUtils, Utils


class FrameConsts(Enum):
	MAGIC = b'RNPB'
	VERSION = 0x01
	HEADER_FORMAT = '!4sBBQQQH'
	HEADER_SIZE = 32
	MAX_PAYLOAD = 65000
	MAX_DATAGRAM = 65535


class ProbeConsts(Enum):
	DEFAULT_RATE_HZ = 1.0
	DEFAULT_TIMEOUT_MS = 2000.0
	DEFAULT_PAYLOAD_LEN = 64
	DEFAULT_IFACE = 'probe'
	# upper bound on one blocking receive so stop requests are seen promptly
	MAX_RECEIVE_WAIT_S = 0.2
	# room for a burst of PINGs from many concurrent clients
	SOCKET_BUFFER_BYTES = 4 * 1024 * 1024


class FrameKind(Enum):
	PING = 0x01
	PONG = 0x02


@dataclass(frozen=True)
class ProbeFrame:
	"""one probe datagram

	:param kind: PING or PONG
	:type  kind: int
	:param seq: client sequence number
	:type  seq: int
	:param client_send_ns: client monotonic send time, echoed back
	:type  client_send_ns: int
	:param server_recv_ns: server receive time, 0 in PING
	:type  server_recv_ns: int
	:param payload: opaque padding, echoed back
	:type  payload: bytes

	"""
	kind: int
	seq: int
	client_send_ns: int
	server_recv_ns: int = 0
	payload: bytes = b''

	def __post_init__(self):
		if self.kind not in (FrameKind.PING.value, FrameKind.PONG.value):
			raise BadFrameKindError(f'frame kind must be PING or PONG, got {self.kind}')
		for name in ('seq', 'client_send_ns', 'server_recv_ns'):
			CheckUtils.check_in_range(getattr(self, name), 0, 2 ** 64 - 1, name=name)


def encode_frame(frame: ProbeFrame) -> bytes:
	if len(frame.payload) > FrameConsts.MAX_PAYLOAD.value:
		raise OversizePayloadError(f'payload of {len(frame.payload)} bytes exceeds {FrameConsts.MAX_PAYLOAD.value}')

	header = struct.pack(FrameConsts.HEADER_FORMAT.value,
		FrameConsts.MAGIC.value,
		FrameConsts.VERSION.value,
		frame.kind,
		frame.seq,
		frame.client_send_ns,
		frame.server_recv_ns,
		len(frame.payload))

	return header + frame.payload


def decode_frame(data: bytes) -> ProbeFrame:
	magic = FrameConsts.MAGIC.value
	if data[:len(magic)] != magic[:len(data)]:
		raise BadMagicError(f'bad magic {bytes(data[:len(magic)]).hex()}')
	if len(data) <= len(magic):
		raise TruncatedFrameError(f'frame truncated at {len(data)} bytes')
	if data[len(magic)] != FrameConsts.VERSION.value:
		raise BadVersionError(f'unsupported frame version {data[len(magic)]}')
	if len(data) < FrameConsts.HEADER_SIZE.value:
		raise TruncatedFrameError(f'frame truncated at {len(data)} bytes')

	_, _, kind, seq, client_send_ns, server_recv_ns, payload_len = struct.unpack_from(FrameConsts.HEADER_FORMAT.value, data)
	if payload_len > FrameConsts.MAX_PAYLOAD.value:
		raise OversizePayloadError(f'declared payload of {payload_len} bytes exceeds {FrameConsts.MAX_PAYLOAD.value}')

	end = FrameConsts.HEADER_SIZE.value + payload_len
	if len(data) < end:
		raise TruncatedFrameError(f'frame truncated at {len(data)} bytes, expected {end}')
	if len(data) > end:
		raise ProbeFrameError(f'{len(data) - end} trailing bytes after frame')

	return ProbeFrame(kind=kind,
		seq=seq,
		client_send_ns=client_send_ns,
		server_recv_ns=server_recv_ns,
		payload=bytes(data[FrameConsts.HEADER_SIZE.value:end]))


@dataclass(frozen=True)
class ProbeConfig(BaseDataclassRecord):
	"""delay probe client settings

	:param server: (Required) server endpoint, host:port
	:type  server: str
	:param rate_hz: probes per second
	:type  rate_hz: float
	:param timeout_ms: reply deadline; later replies are discarded
	:type  timeout_ms: float
	:param payload_len: probe payload size, bytes
	:type  payload_len: int
	:param side: which end of the link the client runs on
	:type  side: str
	:param iface: interface label stamped on delay samples
	:type  iface: str

	"""
	server: str
	rate_hz: float = ProbeConsts.DEFAULT_RATE_HZ.value
	timeout_ms: float = ProbeConsts.DEFAULT_TIMEOUT_MS.value
	payload_len: int = ProbeConsts.DEFAULT_PAYLOAD_LEN.value
	side: str = Side.ROBOT.value
	iface: str = ProbeConsts.DEFAULT_IFACE.value

	@logger.catch(reraise=True)
	def __post_init__(self):
		Utils.parse_endpoint(self.server)
		CheckUtils.check_is_positive(self.rate_hz, name='rate_hz')
		CheckUtils.check_is_positive(self.timeout_ms, name='timeout_ms')
		CheckUtils.check_in_range(self.payload_len, 0, FrameConsts.MAX_PAYLOAD.value, name='payload_len')
		CheckUtils.check_is_valid_enum(self.side, Side, UnsupportedSide)
		CheckUtils.check_is_not_empty(self.iface, name='iface')


class _EchoServer(socketserver.ThreadingUDPServer):
	daemon_threads = True

	def server_bind(self):
		self.socket.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, ProbeConsts.SOCKET_BUFFER_BYTES.value)
		super().server_bind()


class _EchoHandler(socketserver.BaseRequestHandler):

	def handle(self):
		data, sock = self.request
		self.server.probe_server.answer(data, sock, self.client_address)


class ProbeServer(NetmeterComponent):

	def __init__(self, listen: str, reply_delay_ms: float = 0.0, clock: Optional[MonotonicClock] = None):
		"""echo side of the delay probe: answers every valid PING with a PONG

		Args:
			listen (str): endpoint to bind, host:port (port 0 picks a free port)
			reply_delay_ms (float): artificial delay before each reply
			clock (MonotonicClock): time source for server_recv_ns
		"""
		super().__init__(clock=clock)
		CheckUtils.check_is_not_negative(reply_delay_ms, name='reply_delay_ms')
		self.reply_delay_ms = reply_delay_ms
		self.invalid_frames = 0
		self.replies = 0
		self._counter_lock = threading.Lock()
		self._serving = False

		host, port = Utils.parse_endpoint(listen)
		try:
			self._server = _EchoServer((host, port), _EchoHandler)
		except OSError as error:
			raise BindError(f'cannot bind probe server to {listen}: {error}')

		self._server.probe_server = self
		self._start_session()

	@property
	def address(self) -> Tuple[str, int]:
		return self._server.server_address[:2]

	def answer(self, data: bytes, sock: socket.socket, address) -> None:
		received_ns = self._elapsed_ns()
		try:
			frame = decode_frame(data)
			if frame.kind != FrameKind.PING.value:
				raise BadFrameKindError(f'server expects PING, got kind {frame.kind}')
		except ProbeFrameError as error:
			with self._counter_lock:
				self.invalid_frames += 1
			logger.debug(f'dropping invalid frame from {address}: {error}')
			return

		if self.reply_delay_ms > 0 and self._wait(self.reply_delay_ms / 1000):
			return

		pong = ProbeFrame(kind=FrameKind.PONG.value,
			seq=frame.seq,
			client_send_ns=frame.client_send_ns,
			server_recv_ns=received_ns,
			payload=frame.payload)
		try:
			sock.sendto(encode_frame(pong), address)
		except OSError as error:
			logger.warning(f'cannot reply to {address}: {error}')
			return

		with self._counter_lock:
			self.replies += 1

	def run(self) -> None:
		"""serves until stop() is called"""
		if self.stopped:
			return

		logger.info(f'probe server listening on {self.address[0]}:{self.address[1]}')
		self._serving = True
		try:
			self._server.serve_forever(poll_interval=ProbeConsts.MAX_RECEIVE_WAIT_S.value)
		finally:
			self._server.server_close()
			logger.info(f'probe server stopped: {self.replies} replies, {self.invalid_frames} invalid frames')

	def stop(self) -> None:
		super().stop()
		if self._serving:
			self._server.shutdown()
		else:
			self._server.server_close()


def serve(endpoint: str, reply_delay_ms: float = 0.0, on_bound: Optional[Callable[[ProbeServer], None]] = None) -> ProbeServer:
	"""binds a probe server and serves until it is stopped or interrupted

	:param endpoint: host:port to bind
	:type  endpoint: str
	:param reply_delay_ms: artificial delay before each reply
	:type  reply_delay_ms: float
	:param on_bound: (Optional) called with the bound server before serving, e.g. to stop it from another thread
	:type  on_bound: callable

	"""
	server = ProbeServer(listen=endpoint, reply_delay_ms=reply_delay_ms)
	if on_bound is not None:
		on_bound(server)

	try:
		server.run()
	except KeyboardInterrupt:
		logger.info('interrupted, probe server stopping')

	return server


class ProbeClient(NetmeterComponent):

	def __init__(self, config: ProbeConfig, clock: Optional[MonotonicClock] = None, session_start_ns: Optional[int] = None):
		"""probe side of the delay measurement; emits one delay sample per PING

		Args:
			config (ProbeConfig): probe settings
			clock (MonotonicClock): time source
			session_start_ns (int): shared session anchor
		"""
		super().__init__(clock=clock, session_start_ns=session_start_ns)
		self.config = config
		self.sent = 0
		self.received = 0
		self.timeouts = 0
		self.stale = 0
		self._seq = 0
		self._address, self._family = self._resolve(config.server)

	@staticmethod
	def _resolve(endpoint: str):
		host, port = Utils.parse_endpoint(endpoint, default_host='127.0.0.1')
		try:
			family, _, _, _, address = socket.getaddrinfo(host, port, type=socket.SOCK_DGRAM)[0]
		except socket.gaierror as error:
			raise EndpointResolutionError(f'cannot resolve probe server {endpoint}: {error}')

		return address, family

	def run(self, sink: SampleSink, count: Optional[int] = None, duration_s: Optional[float] = None) -> None:
		"""sends PINGs at rate_hz until stopped, count probes were sent, or duration_s elapsed"""
		self._start_session()
		timeout_ns = int(round(self.config.timeout_ms * Units.NS_PER_MS.value))
		period_ns = int(round(Units.NS_PER_S.value / self.config.rate_hz))
		payload = bytes(self.config.payload_len)
		outstanding: Dict[int, int] = {}

		next_tick_ns = self.clock.monotonic_ns()
		deadline_ns = None if duration_s is None else next_tick_ns + int(round(duration_s * Units.NS_PER_S.value))
		logger.info(f'probing {self.config.server} at {self.config.rate_hz} Hz, timeout {self.config.timeout_ms} ms')

		with socket.socket(self._family, socket.SOCK_DGRAM) as sock:
			sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, ProbeConsts.SOCKET_BUFFER_BYTES.value)
			try:
				while not self.stopped:
					now_ns = self.clock.monotonic_ns()
					self._expire(sink, outstanding, now_ns, timeout_ns)

					done = (count is not None and self.sent >= count) or (deadline_ns is not None and now_ns >= deadline_ns)
					if done and not outstanding:
						break

					if not done and now_ns >= next_tick_ns:
						self._send(sock, outstanding, payload)
						while next_tick_ns <= now_ns:
							next_tick_ns += period_ns

					wake_ns = min([send_ns + timeout_ns for send_ns in outstanding.values()] + ([] if done else [next_tick_ns]))
					wait_s = min(max((wake_ns - self.clock.monotonic_ns()) / Units.NS_PER_S.value, 0.0), ProbeConsts.MAX_RECEIVE_WAIT_S.value)
					self._receive(sock, sink, outstanding, wait_s, timeout_ns)
			finally:
				sink.flush()
				logger.info(f'probe client stopped: sent {self.sent}, replies {self.received}, timeouts {self.timeouts}, stale {self.stale}')

	def _send(self, sock: socket.socket, outstanding: Dict[int, int], payload: bytes) -> None:
		self._seq += 1
		send_ns = self.clock.monotonic_ns()
		ping = ProbeFrame(kind=FrameKind.PING.value, seq=self._seq, client_send_ns=send_ns, payload=payload)
		outstanding[self._seq] = send_ns
		self.sent += 1
		try:
			sock.sendto(encode_frame(ping), self._address)
		except OSError as error:
			# left outstanding, it times out like a lost datagram
			logger.debug(f'PING {self._seq} not sent: {error}')

	def _expire(self, sink: SampleSink, outstanding: Dict[int, int], now_ns: int, timeout_ns: int) -> None:
		for seq in sorted(seq for seq, send_ns in outstanding.items() if now_ns - send_ns > timeout_ns):
			del outstanding[seq]
			self.timeouts += 1
			logger.debug(f'PING {seq} timed out')
			self._emit(sink, self.config.side, self.config.iface, DelayBody.timeout(), now_ns)

	def _receive(self, sock: socket.socket, sink: SampleSink, outstanding: Dict[int, int], wait_s: float, timeout_ns: int) -> None:
		sock.settimeout(wait_s)
		try:
			data, _ = sock.recvfrom(FrameConsts.MAX_DATAGRAM.value)
		except (socket.timeout, BlockingIOError):
			return
		except OSError as error:
			logger.debug(f'probe receive failed: {error}')
			return

		received_ns = self.clock.monotonic_ns()
		try:
			frame = decode_frame(data)
		except ProbeFrameError as error:
			self.stale += 1
			logger.debug(f'discarding invalid reply: {error}')
			return

		send_ns = outstanding.get(frame.seq)
		if frame.kind != FrameKind.PONG.value or send_ns is None or frame.client_send_ns != send_ns:
			self.stale += 1
			logger.debug(f'discarding stale reply for seq {frame.seq}')
			return

		del outstanding[frame.seq]
		if received_ns - send_ns > timeout_ns:
			self.timeouts += 1
			self._emit(sink, self.config.side, self.config.iface, DelayBody.timeout(), received_ns)
			return

		self.received += 1
		rtt_ms = max(received_ns - send_ns, 1) / Units.NS_PER_MS.value
		self._emit(sink, self.config.side, self.config.iface, DelayBody.reply(rtt_ms, timeout_ms=self.config.timeout_ms), received_ns)


def measure_rtt(config: ProbeConfig, sink: SampleSink, count: Optional[int] = None, duration_s: Optional[float] = None) -> ProbeClient:
	client = ProbeClient(config=config)
	client.run(sink, count=count, duration_s=duration_s)

	return client
