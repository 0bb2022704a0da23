"""
Offline client that answers deterministically from the attribute pairs in the
prompt, without any network access. Used by the tests and by `--offline`.

This implementation is based on the generic implementation of a client.
Please check out personify.enhance.generic for more details about how the
clients work.
"""

import re

from personify.enhance import describe_pairs
from personify.enhance.generic import LLMClientBase, LLMClientError


class MockClient(LLMClientBase):
    # Matches the `<Name>: <Content>;` pairs of the user records.
    PAIR_REGEX = re.compile(r"<([^<>]*)>: <([^<>]*)>;")

    @property
    def model_id(self) -> str:
        return "mock-narrator"

    def complete(self, prompt: str, temperature: float = 0.0) -> str:
        _, sep, records = prompt.partition("User Records:")
        if sep == '':
            raise LLMClientError("The prompt has no user records section")

        pairs = self.PAIR_REGEX.findall(records)
        if not pairs:
            raise LLMClientError("The prompt has no attribute pairs")

        return "Persona sketch. " + describe_pairs(pairs)
