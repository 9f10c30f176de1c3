# logger/__init__.py
from .custom_logger import CustomLogger
# Create a single shared logger instance
LOGGER_FACTORY = CustomLogger()
GLOBAL_LOGGER = LOGGER_FACTORY.get_logger("relation_cp")
