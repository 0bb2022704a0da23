"""
This module parses the config, applies the offline switch and runs the
requested pipeline stage.
"""

import sys
import logging
from typing import Optional, Sequence

from personify import PersonifyError
from personify.config import Config
from personify.commands import run_command


def main(argv: Optional[Sequence[str]] = None) -> int:
    # Millisecond timestamps; the level is adjusted after parsing.
    logging.basicConfig(level=logging.INFO,
                        format="[%(asctime)s.%(msecs)03d] %(levelname)s:"
                        " %(message)s", datefmt="%H:%M:%S")

    try:
        config = Config()
        config.parse(argv)
        logging.getLogger().setLevel(logging.DEBUG if config.debug
                                     else logging.INFO)

        # Assigned values have priority over the flags and the config file.
        if config.offline:
            config.llm_client = 'MOCK'
            config.embedder = 'HASH'

        return run_command(config)
    except (PersonifyError, OSError) as e:
        logging.error("%s", str(e))
        return 1


if __name__ == '__main__':
    sys.exit(main())
