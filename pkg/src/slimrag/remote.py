"""OpenAI-compatible HTTP client for chat completions and embeddings.

Credentials come from the environment only: ``SLIMRAG_API_KEY`` carries the
bearer token and ``SLIMRAG_API_BASE`` the service base URL (for example
``https://api.openai.com/v1``). Transport failures and 429/5xx responses are
retried with backoff, then surfaced as ProviderError.
"""

from __future__ import annotations

import json
import os
import time

import requests

from .errors import ProviderError, ProviderProtocolError

API_KEY_ENV = "SLIMRAG_API_KEY"
API_BASE_ENV = "SLIMRAG_API_BASE"

DEFAULT_CHAT_MODEL = "gpt-4o-mini"
DEFAULT_EMBED_MODEL = "text-embedding-3-small"
DEFAULT_TIMEOUT = 30.0
MAX_ATTEMPTS = 3
BACKOFF_SECONDS = 0.5


def _resolve_base() -> str:
    base = os.environ.get(API_BASE_ENV, "").rstrip("/")
    if not base:
        raise ProviderError(
            f"remote provider configured but {API_BASE_ENV} is not set"
        )
    return base


def _headers() -> dict[str, str]:
    key = os.environ.get(API_KEY_ENV, "")
    if not key:
        raise ProviderError(
            f"remote provider configured but {API_KEY_ENV} is not set"
        )
    return {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}


def _post(path: str, payload: dict, timeout: float) -> dict:
    url = f"{_resolve_base()}{path}"
    headers = _headers()
    last_error: Exception | None = None
    for attempt in range(MAX_ATTEMPTS):
        try:
            response = requests.post(url, headers=headers, json=payload, timeout=timeout)
        except requests.RequestException as exc:
            last_error = exc
        else:
            if response.status_code == 200:
                try:
                    return response.json()
                except ValueError as exc:
                    raise ProviderProtocolError(
                        f"non-JSON response from {url}"
                    ) from exc
            if response.status_code not in (429,) and response.status_code < 500:
                raise ProviderError(
                    f"{url} returned {response.status_code}: {response.text[:200]}"
                )
            last_error = ProviderError(
                f"{url} returned {response.status_code}"
            )
        if attempt + 1 < MAX_ATTEMPTS:
            time.sleep(BACKOFF_SECONDS * (2 ** attempt))
    raise ProviderError(f"request to {url} failed after {MAX_ATTEMPTS} attempts: {last_error}")


def chat_completion(
    model: str,
    system: str,
    user: str,
    temperature: float = 0.0,
    timeout: float = DEFAULT_TIMEOUT,
) -> str:
    """Return the assistant message content for a two-message chat."""
    body = _post(
        "/chat/completions",
        {
            "model": model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": temperature,
        },
        timeout,
    )
    try:
        content = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ProviderProtocolError(f"malformed chat response: {body!r}") from exc
    if not isinstance(content, str):
        raise ProviderProtocolError("chat response content is not a string")
    return content


def embed_batch(
    texts: list[str],
    model: str = DEFAULT_EMBED_MODEL,
    timeout: float = DEFAULT_TIMEOUT,
) -> list[list[float]]:
    """Embed a batch of texts; vectors come back in input order."""
    if not texts:
        return []
    body = _post("/embeddings", {"model": model, "input": texts}, timeout)
    try:
        rows = body["data"]
        vectors = [[float(x) for x in row["embedding"]] for row in rows]
    except (KeyError, TypeError, ValueError) as exc:
        raise ProviderProtocolError(f"malformed embeddings response: {body!r}") from exc
    if len(vectors) != len(texts):
        raise ProviderProtocolError(
            f"embeddings response has {len(vectors)} rows for {len(texts)} inputs"
        )
    return vectors


def parse_json_array(reply: str) -> list:
    """Parse a strict JSON array reply, tolerating a fenced code block."""
    text = reply.strip()
    if text.startswith("```"):
        text = text.strip("`")
        if text.startswith("json"):
            text = text[4:]
        text = text.strip()
    try:
        parsed = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProviderProtocolError(
            f"provider reply is not valid JSON: {reply[:200]!r}"
        ) from exc
    if not isinstance(parsed, list):
        raise ProviderProtocolError(f"provider reply is not a JSON array: {reply[:200]!r}")
    return parsed
