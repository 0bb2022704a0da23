"""
Generic implementation of a language model client. It describes the exact
contract the clients must follow: send a prompt, receive the text and report
the model id used for the cache and the provenance of the narratives.
"""

from abc import ABCMeta, abstractmethod

from personify import PersonifyError


class LLMClientError(PersonifyError):
    """
    Raised by the clients when a request can't be completed. The enhancement
    loop retries the request and falls back to a local narrative after the
    last attempt.
    """


class LabelLeakError(PersonifyError, ValueError):
    """
    Raised when a record that still carries personality labels is about to
    be turned into a prompt.
    """


class LLMClientBase(metaclass=ABCMeta):
    """
    The abstract base class used for any language model client.

    Other notes:
        * The client's module should have an entry in the list of supported
        clients in personify.enhance (the __init__.py file).
        * `complete` may be called from several threads at once, with as many
        requests in flight as configured in `llm_max_inflight`.
    """

    @property
    @abstractmethod
    def model_id(self) -> str:
        """
        Returns the identifier of the model answering the prompts, like
        'gpt-3.5-turbo'. It's part of the cache key, so two different models
        never share narratives.
        """

    @abstractmethod
    def complete(self, prompt: str, temperature: float = 0.0) -> str:
        """
        Sends the prompt as a single user message and returns the text of the
        answer.

        An `LLMClientError` should be raised if the request failed for any
        reason, including an empty answer.
        """
