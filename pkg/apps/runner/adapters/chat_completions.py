"""
Chat-completions HTTP adapter.

Targets the common chat-completions wire format: POST {base_url}/chat/completions
with a JSON body holding a message list and a bearer-token header, so any
compatible server (hosted or a local proxy) works.

The API key comes from the environment via ``Settings``; it is never part
of a request digest, a fixture file or a run manifest.
"""

import logging
import threading
import time
from typing import Any, Callable, Optional

import requests

from apps.runner.adapters.base import Backend
from packages.core.errors import TransportError
from packages.core.models import BackendReply, BackendRequest, FinishReason, TokenUsage
from packages.core.settings import settings

logger = logging.getLogger(__name__)

# Status codes worth retrying; everything else 4xx fails fast.
RETRYABLE_STATUS = frozenset({408, 409, 425, 429, 500, 502, 503, 504})


class ChatCompletionsBackend(Backend):
    """
    Adapter for chat-completions compatible endpoints.

    Uses synchronous requests (one session per worker thread) with capped
    exponential backoff on timeouts, connection errors, 429 and 5xx.
    """

    name = "http"

    def __init__(
        self,
        model: Optional[str] = None,
        base_url: Optional[str] = None,
        api_key: Optional[str] = None,
        timeout: Optional[float] = None,
        max_attempts: Optional[int] = None,
        backoff_base: Optional[float] = None,
        backoff_cap: Optional[float] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        super().__init__()
        self.model = model or settings.llm_model
        self.base_url = (base_url or settings.llm_base_url).rstrip("/")
        self._api_key = api_key if api_key is not None else settings.llm_api_key
        self.timeout = timeout or settings.http_timeout_seconds
        self.max_attempts = max_attempts or settings.http_max_attempts
        self.backoff_base = backoff_base or settings.http_backoff_base
        self.backoff_cap = settings.http_backoff_cap_seconds if backoff_cap is None else backoff_cap
        self._sleep = sleep
        self._local = threading.local()

    @property
    def endpoint(self) -> str:
        return f"{self.base_url}/chat/completions"

    def _session(self) -> requests.Session:
        session = getattr(self._local, "session", None)
        if session is None:
            session = requests.Session()
            session.headers.update({
                "User-Agent": "stoctot-runner/0.1",
                "Accept": "application/json",
                "Content-Type": "application/json",
            })
            if self._api_key:
                session.headers["Authorization"] = f"Bearer {self._api_key}"
            self._local.session = session
        return session

    def _payload(self, request: BackendRequest) -> dict[str, Any]:
        messages = []
        if request.system_text:
            messages.append({"role": "system", "content": request.system_text})
        messages.append({"role": "user", "content": request.user_text})
        payload: dict[str, Any] = {
            "model": self.model,
            "messages": messages,
            "temperature": request.params.temperature,
            # top_k_or_p is sent as nucleus top-p.
            "top_p": request.params.top_k_or_p,
            "max_tokens": request.params.max_new_tokens,
            "n": 1,
        }
        if request.params.stop_sequences:
            payload["stop"] = list(request.params.stop_sequences)
        return payload

    def _backoff(self, attempt: int) -> float:
        return min(self.backoff_base ** attempt, self.backoff_cap)

    def _post(self, payload: dict[str, Any]) -> tuple[dict[str, Any], int]:
        """POST with retries. Returns (json body, attempts used)."""
        last_error = "no attempt made"
        last_status: Optional[int] = None

        for attempt in range(1, self.max_attempts + 1):
            try:
                response = self._session().post(self.endpoint, json=payload, timeout=self.timeout)
                status = response.status_code
                if status < 400:
                    return response.json(), attempt
                last_status = status
                last_error = f"HTTP {status} from {self.endpoint}"
                if status not in RETRYABLE_STATUS:
                    logger.error(f"{last_error}: {response.text[:200]}")
                    raise TransportError(last_error, attempt, status)
            except (requests.exceptions.Timeout, requests.exceptions.ConnectionError) as e:
                last_error = f"{type(e).__name__} calling {self.endpoint}"
                last_status = None
            except ValueError as e:
                # Body was not JSON.
                raise TransportError(f"Invalid JSON from {self.endpoint}: {e}", attempt) from e

            if attempt < self.max_attempts:
                wait_time = self._backoff(attempt)
                logger.warning(f"{last_error}, waiting {wait_time:.1f}s before retry {attempt}/{self.max_attempts - 1}")
                self._sleep(wait_time)

        raise TransportError(last_error, self.max_attempts, last_status)

    def generate(self, request: BackendRequest) -> BackendReply:
        self._account(request)
        started = time.monotonic()
        body, attempts = self._post(self._payload(request))
        latency = time.monotonic() - started
        return parse_chat_reply(body, attempts=attempts, latency=latency)

    def close(self) -> None:
        session = getattr(self._local, "session", None)
        if session is not None:
            session.close()
            self._local.session = None


def parse_chat_reply(body: dict[str, Any], attempts: int = 1, latency: float = 0.0) -> BackendReply:
    """Map a chat-completions response body to a ``BackendReply``."""
    choices = body.get("choices") or []
    if not choices:
        raise TransportError("Response has no choices", attempts)
    choice = choices[0]
    message = choice.get("message") or {}
    text = message.get("content") or ""

    finish = str(choice.get("finish_reason") or "stop")
    finish_reason = FinishReason.LENGTH if finish == "length" else FinishReason.STOP

    usage_raw = body.get("usage") or {}
    usage = TokenUsage(
        prompt_tokens=int(usage_raw.get("prompt_tokens") or 0),
        completion_tokens=int(usage_raw.get("completion_tokens") or 0),
    )
    return BackendReply(
        text=text,
        finish_reason=finish_reason,
        usage=usage,
        latency_seconds=max(0.0, latency),
        attempts=attempts,
    )
