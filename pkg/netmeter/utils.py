import math
from datetime import datetime, timezone
from enum import Enum
from typing import Callable, Dict, List, Type, Union


class CheckUtils:

	def __new__(cls: Callable):
		raise BaseException(f'cannot instantiate {cls.__name__} class')

	@staticmethod
	def check_is_positive(arg: float, name: str = 'value', optional: bool = False) -> None:
		if optional and arg is None:
			return

		if arg is None or not arg > 0:
			raise ValueError(f'{name} must be > 0, got {arg}')

	@staticmethod
	def check_is_not_negative(arg: float, name: str = 'value', optional: bool = False) -> None:
		if optional and arg is None:
			return

		if arg is None or arg < 0:
			raise ValueError(f'{name} must be >= 0, got {arg}')

	@staticmethod
	def check_is_finite(arg: float, name: str = 'value', optional: bool = False) -> None:
		if optional and arg is None:
			return

		if arg is None or not math.isfinite(arg):
			raise ValueError(f'{name} must be finite, got {arg}')

	@staticmethod
	def check_in_range(arg: float, low: float, high: float, name: str = 'value', optional: bool = False) -> None:
		if optional and arg is None:
			return

		if arg is None or not low <= arg <= high:
			raise ValueError(f'{name} must be in [{low}, {high}], got {arg}')

	@staticmethod
	def check_is_not_empty(arg: str, name: str = 'value', optional: bool = False) -> None:
		if optional and arg is None:
			return

		if not arg:
			raise ValueError(f'{name} must not be empty')

	@staticmethod
	def check_is_port(arg: int, optional: bool = False) -> None:
		if optional and arg is None:
			return

		if arg < 0 or arg > 65535:
			raise ValueError(f'port must be in [0, 65535], got {arg}')

	@staticmethod
	def check_is_valid_enum(value: str, enum_class: Type[Enum], exception_class: Type[Exception], optional: bool = False) -> None:
		if optional and value is None:
			return

		values = [member.value for member in enum_class]
		if value not in values:
			raise exception_class(f'{enum_class.__name__.lower()} must be one of the following {values}, got {value!r}')


class Utils:

	@staticmethod
	def utc_now_rfc3339() -> str:
		return datetime.now(timezone.utc).isoformat(timespec='microseconds').replace('+00:00', 'Z')

	@staticmethod
	def parse_endpoint(endpoint: str, default_host: str = '0.0.0.0') -> tuple:
		"""splits 'host:port' (or ':port') into (host, port)"""
		host, separator, port = endpoint.rpartition(':')
		if not separator or not port.isdigit():
			raise ValueError(f'endpoint must look like host:port, got {endpoint!r}')

		port = int(port)
		CheckUtils.check_is_port(port)

		return host.strip('[]') or default_host, port

	@staticmethod
	def byte_offset(text: str, char_index: int) -> int:
		return len(text[:char_index].encode('utf-8'))

	@staticmethod
	def drop_empty(obj: Union[Dict, List]):
		if isinstance(obj, list):
			return [Utils.drop_empty(elem) for elem in obj]
		elif isinstance(obj, dict):
			return {key: Utils.drop_empty(value) for key, value in obj.items() if value is not None}
		else:
			return obj
