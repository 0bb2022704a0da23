"""
Cache of enhanced profiles keyed by (model id, prompt hash), so that a prompt
is never sent twice to the same model. It's backed by a file with one JSON
object per line, appended as new narratives arrive.
"""

import os
import json
import logging
import threading
import dataclasses
from typing import Dict, Optional, Tuple

from personify.enhance import EnhancedProfile


class ProfileCache:
    """
    Thread-safe: the enhancement loop reads and writes it from several
    worker threads at once.
    """

    def __init__(self, path: Optional[str] = None) -> None:
        """
        Loads the existing entries of `path`. Without a path, the cache only
        lives in memory.
        """

        self._path = path
        self._lock = threading.Lock()
        self._entries: Dict[Tuple[str, str], EnhancedProfile] = {}

        if path is None or not os.path.exists(path):
            return

        with open(path, 'r', encoding='utf-8') as f:
            for line_no, line in enumerate(f, start=1):
                try:
                    profile = EnhancedProfile(**json.loads(line))
                except (json.decoder.JSONDecodeError, TypeError) as e:
                    logging.warning("Ignoring line %d of the cache %s: %s",
                                    line_no, path, str(e))
                    continue
                self._entries[(profile.model_id, profile.prompt_hash)] = \
                    profile
        logging.info("Loaded %d cached profiles from %s", len(self._entries),
                     path)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def get(self, model_id: str, prompt_hash: str
            ) -> Optional[EnhancedProfile]:
        with self._lock:
            return self._entries.get((model_id, prompt_hash))

    def put(self, profile: EnhancedProfile) -> None:
        if profile.fallback:
            return

        key = (profile.model_id, profile.prompt_hash)
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = profile
            if self._path is not None:
                dirname = os.path.dirname(self._path)
                if dirname:
                    os.makedirs(dirname, exist_ok=True)
                with open(self._path, 'a', encoding='utf-8') as f:
                    f.write(json.dumps(dataclasses.asdict(profile),
                                       sort_keys=True) + '\n')
