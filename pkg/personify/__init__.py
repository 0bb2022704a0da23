"""
This module has utilities used in different parts of the program, like the
base exception, the provenance block attached to every artifact and the
information structure used to list pluggable modules.
"""

import hashlib
from dataclasses import dataclass
from typing import Dict, Tuple, Union
from importlib.metadata import PackageNotFoundError, distribution

from personify.version import __version__


class PersonifyError(Exception):
    """
    Base exception for every error raised on purpose inside personify. The
    command line catches it to exit with a non-zero status and a readable
    message instead of a traceback.
    """


def stable_hash(content: Union[str, bytes]) -> str:
    """
    64-bit content hash as 16 hexadecimal characters. It's stable across
    processes and platforms, unlike the builtin `hash`.
    """

    if isinstance(content, str):
        content = content.encode('utf-8')
    return hashlib.blake2b(content, digest_size=8).hexdigest()


@dataclass(frozen=True)
class Provenance:
    """
    Identifies the run that produced an artifact: the hash of the resolved
    configuration, the seed and the tool version.
    """

    config_hash: str
    seed: int
    version: str = __version__

    def as_dict(self) -> Dict[str, Union[str, int]]:
        return {
            'config_hash': self.config_hash,
            'seed': self.seed,
            'version': self.version
        }


def is_installed(*args: str) -> bool:
    for pkgname in args:
        try:
            distribution(pkgname)
        except PackageNotFoundError:
            return False
    return True


@dataclass(frozen=True)
class BaseModuleData:
    """
    Registry entry for a pluggable implementation, such as a language model
    client. `module` and `class_name` locate the class, which is imported only
    when the entry is selected.
    """

    id: str
    short_name: str
    description: str
    installed: bool
    module: str
    class_name: str


def find_module(data: Tuple[BaseModuleData, ...],
                module_id: str) -> BaseModuleData:
    for element in data:
        if element.id == module_id.upper():
            return element

    ids = ', '.join(element.id for element in data)
    raise PersonifyError(f"Module with id {module_id} not found. Available:"
                         f" {ids}")
