from typing import Optional


class NetmeterException(Exception):

	def __init__(self, message: str, code: Optional[int] = None, content: Optional[str] = None):
		"""netmeter base exception.

		Args:
			message (str): exception message.
			code (int): optional numeric detail (line number, byte offset).
			content (str): optional offending content.
		"""
		super().__init__(message)
		self.message = message
		self.code = code
		self.content = content

	def __str__(self):
		if self.code is None and self.content is None:
			return self.message

		return f'{self.message} (code: {self.code}, content: {self.content!r})'


# records

class MalformedRecordError(NetmeterException):

	def __init__(self, message: str, offset: int = 0, content: Optional[str] = None):
		super().__init__(message, code=offset, content=content)
		self.offset = offset


class UnknownRecordTypeError(NetmeterException):

	def __init__(self, record_type: str, raw_line: str):
		super().__init__(f'unknown record type {record_type!r}', content=raw_line)
		self.record_type = record_type
		self.raw_line = raw_line


class InvalidSampleError(NetmeterException):
	pass


class UnsupportedSide(NetmeterException):
	pass


class UnsupportedMetricType(NetmeterException):
	pass


class UnsupportedOrigin(NetmeterException):
	pass


class UnsupportedTopology(NetmeterException):
	pass


class UnsupportedApSide(NetmeterException):
	pass


class UnsupportedBand(NetmeterException):
	pass


class UnsupportedMotionMode(NetmeterException):
	pass


class InvalidExperimentCaseError(NetmeterException):
	pass


# channel model

class NonPositiveDistanceError(NetmeterException):
	pass


class DistanceBelowReferenceError(NetmeterException):
	pass


class NonPositiveRateError(NetmeterException):
	pass


class DisconnectedLinkError(NetmeterException):
	pass


# collectors

class MalformedStatsError(NetmeterException):

	def __init__(self, message: str, line_number: int, content: Optional[str] = None):
		super().__init__(message, code=line_number, content=content)
		self.line_number = line_number


class CounterNotFoundError(NetmeterException):
	pass


class CounterResetError(NetmeterException):

	def __init__(self, counter: str, previous: int, current: int):
		super().__init__(f'counter {counter} went backwards: {previous} -> {current}')
		self.counter = counter
		self.previous = previous
		self.current = current


class ZeroIntervalError(NetmeterException):
	pass


class InterfaceMismatchError(NetmeterException):
	pass


class StatsSourceUnreadableError(NetmeterException):
	pass


# delay probe

class ProbeFrameError(NetmeterException):
	pass


class BadMagicError(ProbeFrameError):
	pass


class BadVersionError(ProbeFrameError):
	pass


class BadFrameKindError(ProbeFrameError):
	pass


class TruncatedFrameError(ProbeFrameError):
	pass


class OversizePayloadError(ProbeFrameError):
	pass


class EndpointResolutionError(NetmeterException):
	pass


class BindError(NetmeterException):
	pass


# recorder / analyzer

class TraceUsageError(NetmeterException):
	pass


class MissingHeaderError(NetmeterException):
	pass


class TraceCorruptError(NetmeterException):

	def __init__(self, message: str, line_number: int, content: Optional[str] = None):
		super().__init__(message, code=line_number, content=content)
		self.line_number = line_number


class OutOfOrderSampleError(NetmeterException):
	pass


class EmptyAfterFilterError(NetmeterException):
	pass


class NoMotionDataError(NetmeterException):
	pass


# simulator

class UnknownCaseError(NetmeterException):
	pass


class InvalidTrajectoryError(NetmeterException):
	pass


# cli

class UsageError(NetmeterException):
	pass
