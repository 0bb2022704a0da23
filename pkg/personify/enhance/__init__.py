"""
Profile enhancement: the prompt built from the fragmented user records, the
list of language model clients and the loop that turns prompts into
narratives, with a cache, bounded concurrency and retries.

The clients are listed in `CLIENTS` so that they can be initialized the same
way programatically, from the `llm_client` option.
"""

import time
import logging
import importlib
import dataclasses
from dataclasses import dataclass
from datetime import datetime, timezone
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple, TYPE_CHECKING

from jinja2 import Environment

from personify import BaseModuleData, PersonifyError, is_installed, \
    stable_hash
from personify.model import LABEL_KEYS, UserRecord
from personify.enhance.generic import (LLMClientBase, LLMClientError,
                                       LabelLeakError)

if TYPE_CHECKING:
    from personify.config import Config
    from personify.enhance.cache import ProfileCache


# Narratives are truncated to this number of characters when stored.
MAX_NARRATIVE_LENGTH = 4096

TASK_TEXT = "Generate a descriptive paragraph about the given user's persona."

DEMANDS = (
    "For some unknown attributes, you should try to complete them with your"
    " knowledge.",
    "Your description of this user should focus on personal traits, with"
    " references to demographic details given below.",
    "Make the description concise and brief."
)

UNKNOWN = "Unknown"

_JINJA_ENV = Environment(autoescape=False, keep_trailing_newline=False)
PROMPT_TEMPLATE = _JINJA_ENV.from_string(
    "Task: {{ task }}\n"
    "Demand:{% for demand in demands %} #{{ loop.index }}. {{ demand }}"
    "{% endfor %}\n"
    "User Records:{% for name, content in pairs %}"
    " <{{ name }}>: <{{ content }}>;{% endfor %}")


@dataclass(frozen=True)
class ClientData(BaseModuleData):
    """
    Information structure about the supported language model clients, with
    a description for the user and how to initialize them. `flags` are the
    config options passed to the constructor, in order.
    """

    flags: Tuple[str, ...] = ()


CLIENTS = (
    ClientData(
        id='MOCK',
        short_name='Offline mock',
        description='Deterministic narratives written from the attribute'
                    ' pairs, without network access.',
        installed=True,
        module='personify.enhance.mock',
        class_name='MockClient'),

    ClientData(
        id='CHAT_COMPLETION',
        short_name='Chat completion',
        description='Any hosted model behind a chat-completion endpoint,'
                    ' like gpt-3.5-turbo.',
        installed=is_installed('httpx'),
        module='personify.enhance.chat',
        class_name='ChatCompletionClient',
        flags=('llm_base_url', 'llm_model', 'llm_token_env', 'llm_timeout'))
)


def initialize_client(client: ClientData, config: 'Config') -> LLMClientBase:
    """
    Importing the client's module and initializing it with the config flags
    listed in its entry.
    """

    mod = importlib.import_module(client.module)
    cls = getattr(mod, client.class_name)
    params = [getattr(config, flag) for flag in client.flags]
    return cls(*params)


@dataclass(frozen=True)
class PromptBundle:
    user_id: int
    task_text: str
    demands: Tuple[str, ...]
    record_pairs: Tuple[Tuple[str, str], ...]
    rendered: str
    prompt_hash: str


@dataclass(frozen=True)
class EnhancedProfile:
    user_id: int
    narrative: str
    model_id: str
    prompt_hash: str
    created_at: str
    fallback: bool = False


def _display_name(key: str) -> str:
    key = key.strip().replace('_', ' ')
    return key[:1].upper() + key[1:]


def _display_value(value) -> str:
    if value is None:
        return UNKNOWN
    text = ' '.join(str(value).split())
    return text if text else UNKNOWN


def record_pairs(record: UserRecord) -> Tuple[Tuple[str, str], ...]:
    """
    The (attribute name, attribute content) pairs of a record, in the
    record's order: name, attributes, followers and groups.
    """

    pairs = []
    if record.username:
        pairs.append(('Name', _display_value(record.username)))
    for key, value in record.attributes.items():
        pairs.append((_display_name(key), _display_value(value)))
    pairs.append(('Followers', str(record.follower_count)))
    if record.group_names:
        pairs.append(('Groups', ', '.join(record.group_names)))
    return tuple(pairs)


def render_prompt(pairs: Sequence[Tuple[str, str]]) -> str:
    return PROMPT_TEMPLATE.render(task=TASK_TEXT, demands=DEMANDS,
                                  pairs=pairs)


def build_prompt(record: UserRecord) -> PromptBundle:
    """
    Builds the enhancement prompt of a user. The record must have gone
    through `strip_labels` first.
    """

    leaked = [key for key in record.attributes
              if key.strip().lower() in LABEL_KEYS]
    if record.mbti is not None or record.enneagram is not None or leaked:
        raise LabelLeakError(f"User {record.user_id} still carries"
                             f" personality labels, strip them before"
                             f" building prompts")
    if not record.attributes:
        raise PersonifyError(f"User {record.user_id} has no attributes to"
                             f" describe")

    pairs = record_pairs(record)
    rendered = render_prompt(pairs)
    return PromptBundle(
        user_id=record.user_id,
        task_text=TASK_TEXT,
        demands=DEMANDS,
        record_pairs=pairs,
        rendered=rendered,
        prompt_hash=stable_hash(rendered))


def describe_pairs(pairs: Sequence[Tuple[str, str]]) -> str:
    """
    Turns the attribute pairs into plain sentences. Used as the fallback
    narrative when a client keeps failing.
    """

    sentences = []
    for name, content in pairs:
        if content == UNKNOWN:
            sentences.append(f"Their {name.lower()} is unknown.")
        else:
            sentences.append(f"Their {name.lower()} is {content}.")
    return ' '.join(sentences)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec='seconds')


def enhance_profiles(client: LLMClientBase, bundles: Sequence[PromptBundle],
                     cache: Optional['ProfileCache'] = None,
                     max_inflight: int = 4, retries: int = 3,
                     backoff: float = 1.0, temperature: float = 0.0,
                     clock: Callable[[], str] = _now
                     ) -> List[EnhancedProfile]:
    """
    Generates one profile per prompt, in the same order.

    Cached narratives for (model id, prompt hash) are reused without calling
    the client. The rest are requested with at most `max_inflight` requests
    at once, retrying each one up to `retries` times with exponential
    backoff. Users whose requests keep failing get a local template
    narrative flagged with `fallback=True`, which isn't cached.
    """

    if max_inflight < 1 or retries < 0:
        raise PersonifyError("max_inflight must be at least 1 and retries"
                             " non-negative")

    model_id = client.model_id
    results: List[Optional[EnhancedProfile]] = [None] * len(bundles)
    pending = []
    for i, bundle in enumerate(bundles):
        cached = None if cache is None \
            else cache.get(model_id, bundle.prompt_hash)
        if cached is not None:
            results[i] = dataclasses.replace(cached, user_id=bundle.user_id)
        else:
            pending.append(i)

    def request(bundle: PromptBundle) -> EnhancedProfile:
        for attempt in range(retries + 1):
            try:
                narrative = client.complete(bundle.rendered, temperature)
                narrative = narrative.strip()[:MAX_NARRATIVE_LENGTH]
                if narrative == '':
                    raise LLMClientError("Empty narrative")
            except Exception as e:
                # Any kind of error has to be caught, so that a single user
                # can't stop the whole enhancement.
                if attempt < retries:
                    delay = backoff * 2 ** attempt
                    logging.warning("Request for user %d failed (%s),"
                                    " retrying in %.1fs", bundle.user_id,
                                    str(e), delay)
                    time.sleep(delay)
                    continue
                logging.warning("Request for user %d failed %d times (%s),"
                                " using the fallback narrative",
                                bundle.user_id, retries + 1, str(e))
                return EnhancedProfile(
                    user_id=bundle.user_id,
                    narrative=describe_pairs(
                        bundle.record_pairs)[:MAX_NARRATIVE_LENGTH],
                    model_id=model_id,
                    prompt_hash=bundle.prompt_hash,
                    created_at=clock(),
                    fallback=True)

            profile = EnhancedProfile(
                user_id=bundle.user_id,
                narrative=narrative,
                model_id=model_id,
                prompt_hash=bundle.prompt_hash,
                created_at=clock())
            if cache is not None:
                cache.put(profile)
            return profile

    with ThreadPoolExecutor(max_workers=max_inflight) as executor:
        generated = executor.map(request, [bundles[i] for i in pending])
        for i, profile in zip(pending, generated):
            results[i] = profile

    fallbacks = sum(1 for profile in results if profile.fallback)
    logging.info("Enhanced %d profiles with %s: %d cached, %d requested,"
                 " %d fallbacks", len(bundles), model_id,
                 len(bundles) - len(pending), len(pending), fallbacks)
    return results
