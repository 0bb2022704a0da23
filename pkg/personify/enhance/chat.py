"""
Client for any chat-completion endpoint with the usual JSON interface: the
prompt is sent as a single user message and the first choice is returned.

The bearer token is only read from the environment variable named in the
config (`llm_token_env`), never from the config file.

This implementation is based on the generic implementation of a client.
Please check out personify.enhance.generic for more details about how the
clients work.
"""

import os
import logging
from typing import Optional

try:
    import httpx
except ModuleNotFoundError:
    raise ModuleNotFoundError(
        "No module named 'httpx'.\n"
        "To use the chat-completion client, please install httpx, or run"
        " with --offline.")

from personify.enhance.generic import LLMClientBase, LLMClientError


class ChatCompletionClient(LLMClientBase):
    def __init__(self, base_url: str, model: str,
                 token_env: Optional[str] = None,
                 timeout: float = 60.0) -> None:
        headers = {}
        token = os.environ.get(token_env) if token_env else None
        if token:
            headers['Authorization'] = f"Bearer {token}"
        else:
            logging.info("No token found in $%s, sending unauthenticated"
                         " requests", token_env)

        self._model = model
        self._client = httpx.Client(base_url=base_url.rstrip('/'),
                                    headers=headers, timeout=timeout)

    def __del__(self) -> None:
        try:
            self._client.close()
        except AttributeError:
            pass

    @property
    def model_id(self) -> str:
        return self._model

    def complete(self, prompt: str, temperature: float = 0.0) -> str:
        payload = {
            'model': self._model,
            'messages': [{'role': 'user', 'content': prompt}],
            'temperature': temperature
        }

        try:
            response = self._client.post('/chat/completions', json=payload)
            response.raise_for_status()
            text = response.json()['choices'][0]['message']['content']
        except httpx.HTTPError as e:
            raise LLMClientError(f"Request to {self._model} failed: {e}")
        except (KeyError, IndexError, TypeError, ValueError) as e:
            raise LLMClientError(f"Unexpected answer from {self._model}:"
                                 f" {e!r}")

        if not isinstance(text, str) or text.strip() == '':
            raise LLMClientError(f"Empty answer from {self._model}")
        return text
