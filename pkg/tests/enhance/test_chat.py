import os
import json
import unittest
import unittest.mock

import httpx

from personify.enhance.chat import ChatCompletionClient
from personify.enhance.generic import LLMClientError


def client_with(handler, token=None):
    env = {} if token is None else {'TEST_LLM_TOKEN': token}
    with unittest.mock.patch.dict(os.environ, env, clear=False):
        client = ChatCompletionClient('https://llm.test/v1/', 'test-model',
                                      'TEST_LLM_TOKEN', 5.0)
    headers = client._client.headers
    client._client = httpx.Client(base_url='https://llm.test/v1',
                                  headers=headers,
                                  transport=httpx.MockTransport(handler))
    return client


class ChatCompletionTest(unittest.TestCase):
    def test_request(self):
        seen = {}

        def handler(request):
            seen['url'] = str(request.url)
            seen['auth'] = request.headers.get('Authorization')
            seen['body'] = json.loads(request.content)
            return httpx.Response(200, json={
                'choices': [{'message': {'content': 'A calm reader.'}}]})

        client = client_with(handler, token='s3cret')
        self.assertEqual(client.complete('Describe', 0.0), 'A calm reader.')
        self.assertEqual(client.model_id, 'test-model')
        self.assertEqual(seen['url'], 'https://llm.test/v1/chat/completions')
        self.assertEqual(seen['auth'], 'Bearer s3cret')
        self.assertEqual(seen['body']['messages'],
                         [{'role': 'user', 'content': 'Describe'}])
        self.assertEqual(seen['body']['temperature'], 0.0)

    def test_errors(self):
        answers = [
            httpx.Response(500, text='overloaded'),
            httpx.Response(200, json={'choices': []}),
            httpx.Response(200, json={
                'choices': [{'message': {'content': '  '}}]}),
        ]
        for answer in answers:
            client = client_with(lambda request, answer=answer: answer)
            with self.assertRaises(LLMClientError):
                client.complete('Describe')


if __name__ == '__main__':
    unittest.main()
