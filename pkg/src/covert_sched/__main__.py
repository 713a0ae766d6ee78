"""Entry point for ``python -m covert_sched``."""

from .cli import main

main()
