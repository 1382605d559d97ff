import logging

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str = "INFO") -> None:
    root = logging.getLogger("varprog")
    root.setLevel(level)
    if not any(getattr(h, "_varprog", False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._varprog = True  # type: ignore[attr-defined]
        root.addHandler(handler)
