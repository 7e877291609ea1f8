import os

from dotenv import load_dotenv


class Configuration:
    """Singleton Configuration class that reads runtime settings from .env
    file or environment variables.

    Attributes:
        LOG_LEVEL (str): Minimum level of the stderr and file sinks.
        LOG_FILE (str): Name of the rotating log file.
        LOG_DIR (str): Directory holding the log file.
        JOBS (int): Default number of concurrent frame/patch workers.

    This class uses the singleton pattern to ensure only one instance
    of the configuration is ever created. It prioritizes environment variables
    over .env file values for settings. Pipeline parameters live in
    `PipelineConfig`, not here.
    """

    _instance = None

    def __new__(cls, *args, **kwargs):
        if cls._instance is None:
            cls._instance = super(Configuration, cls).__new__(cls)
        return cls._instance

    def __init__(self):
        if not hasattr(self, "initialized"):
            self.reload_config()
            self.initialized = True

    def reload_config(self):
        """Reloads the configuration from the environment and .env file."""
        load_dotenv(override=False)

        # Logging
        self.LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()
        self.LOG_FILE = os.getenv("LOG_FILE", "vinescan.log")
        self.LOG_DIR = os.getenv("LOG_DIR", "")

        # Execution
        self.JOBS = max(1, int(os.getenv("JOBS", "1")))


config = Configuration()
