from os import getenv

from loguru import logger

from netmeter.consts import ConfigConsts, LoggerConsts

LOGGER_LEVELS = ('TRACE', 'DEBUG', 'INFO', 'SUCCESS', 'WARNING', 'ERROR', 'CRITICAL')


class Config:

	@logger.catch(reraise=True)
	def __init__(self,
		logger_level: str = None,
		logger_path: str = None,
		logger_rotation: str = ConfigConsts.DEFAULT_LOGGER_ROTATION.value):
		"""netmeter logging configuration.

		Args:
			logger_level (str): Logger level. Falls back to NETMETER_LOG_LEVEL, then INFO
			logger_path (str): Logger file path. Falls back to NETMETER_LOG_FILE, then no file
			logger_rotation (str): Logger rotation. Defaults to 100 MB
		"""
		self.logger_level = (logger_level or getenv(LoggerConsts.LOG_LEVEL.value, ConfigConsts.DEFAULT_LOG_LEVEL.value)).upper()
		if self.logger_level not in LOGGER_LEVELS:
			raise ValueError(f'logger level must be one of the following {list(LOGGER_LEVELS)}, got {self.logger_level!r}')

		self.logger_file_path = logger_path or getenv(LoggerConsts.LOG_FILE_PATH.value)
		self.logger_rotation = logger_rotation
