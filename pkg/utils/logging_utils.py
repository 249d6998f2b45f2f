import os
import logging

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s - %(message)s"


def setup_logging(log_dir: str | None = None, log_filename: str = "certify_rkhs.log",
                  level: int = logging.DEBUG) -> logging.Logger:
    """Send every record to ``log_dir/log_filename`` and nowhere else.

    ``warnings.warn`` output (scipy ``IntegrationWarning``, numpy runtime
    warnings from the eigensolves) is captured into the same file.
    """
    root_logger = logging.getLogger()
    root_logger.setLevel(level)

    for handler in list(root_logger.handlers):
        root_logger.removeHandler(handler)
        handler.close()

    logfile_path = os.path.join(log_dir or os.getcwd(), log_filename)
    file_handler = logging.FileHandler(logfile_path, mode="w", encoding="utf-8")
    file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    file_handler.setLevel(level)
    root_logger.addHandler(file_handler)
    logging.captureWarnings(True)

    from rkhs_tools import __version__
    root_logger.debug("Logging to file: %s (rkhs_tools %s)", logfile_path, __version__)
    return root_logger
