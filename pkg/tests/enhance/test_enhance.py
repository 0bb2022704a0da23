import os
import shutil
import tempfile
import threading
import unittest

from personify.enhance import (CLIENTS, LLMClientError, build_prompt,
                               enhance_profiles, initialize_client)
from personify.enhance.cache import ProfileCache
from personify.enhance.generic import LLMClientBase
from personify.enhance.mock import MockClient
from personify.ingest import bundle_from_records, strip_labels
from personify import PersonifyError, find_module


def prompts(num_users):
    bundle = strip_labels(bundle_from_records([
        {'id': i, 'username': f'user{i}', 'gender': 'Female',
         'mbti': 'INTP'} for i in range(num_users)]))
    return [build_prompt(user) for user in bundle.users]


class CountingClient(LLMClientBase):
    """
    Answers with the user name after failing `failures` times per prompt,
    keeping track of the requests in flight.
    """

    def __init__(self, failures=0):
        self.failures = failures
        self.calls = 0
        self.inflight = 0
        self.max_inflight = 0
        self._attempts = {}
        self._lock = threading.Lock()

    @property
    def model_id(self):
        return 'counting'

    def complete(self, prompt, temperature=0.0):
        with self._lock:
            self.calls += 1
            self.inflight += 1
            self.max_inflight = max(self.max_inflight, self.inflight)
            attempt = self._attempts.get(prompt, 0)
            self._attempts[prompt] = attempt + 1
        try:
            if attempt < self.failures:
                raise LLMClientError("try again")
            name = prompt.split('<Name>: <')[1].split('>')[0]
            return "Narrative for " + name
        finally:
            with self._lock:
                self.inflight -= 1


class EnhanceTest(unittest.TestCase):
    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmpdir)

    def test_order_and_concurrency(self):
        client = CountingClient()
        bundles = prompts(12)
        profiles = enhance_profiles(client, bundles, max_inflight=3,
                                    backoff=0)
        self.assertEqual([p.user_id for p in profiles], list(range(12)))
        self.assertEqual(profiles[5].narrative, "Narrative for user5")
        self.assertLessEqual(client.max_inflight, 3)
        self.assertTrue(all(p.prompt_hash == b.prompt_hash
                            for p, b in zip(profiles, bundles)))

    def test_cache(self):
        """
        The second run takes everything from the cache file, even with a new
        cache object.
        """

        path = os.path.join(self.tmpdir, 'cache.jsonl')
        client = CountingClient()
        first = enhance_profiles(client, prompts(4), ProfileCache(path),
                                 backoff=0)
        self.assertEqual(client.calls, 4)

        second = enhance_profiles(client, prompts(4), ProfileCache(path),
                                  backoff=0)
        self.assertEqual(client.calls, 4)
        self.assertEqual([p.narrative for p in first],
                         [p.narrative for p in second])
        self.assertEqual(len(ProfileCache(path)), 4)

    def test_retries(self):
        client = CountingClient(failures=2)
        with self.assertLogs(level='WARNING'):
            profiles = enhance_profiles(client, prompts(2), retries=2,
                                        backoff=0)
        self.assertFalse(any(p.fallback for p in profiles))
        self.assertEqual(client.calls, 6)

    def test_fallback(self):
        """
        After the last retry the user gets a local narrative, which isn't
        cached so that it's requested again next time.
        """

        client = CountingClient(failures=10)
        cache = ProfileCache()
        with self.assertLogs(level='WARNING') as logs:
            profiles = enhance_profiles(client, prompts(1), cache, retries=1,
                                        backoff=0)
        self.assertTrue(profiles[0].fallback)
        self.assertIn("Their name is user0.", profiles[0].narrative)
        self.assertEqual(len(cache), 0)
        self.assertTrue(any('fallback' in line for line in logs.output))

    def test_invalid_limits(self):
        with self.assertRaises(PersonifyError):
            enhance_profiles(CountingClient(), prompts(1), max_inflight=0)

    def test_mock_client(self):
        client = initialize_client(find_module(CLIENTS, 'mock'), None)
        self.assertIsInstance(client, MockClient)
        bundle = prompts(1)[0]
        first = client.complete(bundle.rendered)
        self.assertEqual(first, client.complete(bundle.rendered))
        self.assertTrue(first.startswith("Persona sketch."))
        self.assertIn("Their gender is Female.", first)
        with self.assertRaises(LLMClientError):
            client.complete("No records here")


if __name__ == '__main__':
    unittest.main()
